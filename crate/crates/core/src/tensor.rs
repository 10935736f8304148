//! Dense NCHW feature maps and their binary container.
//!
//! Container layout (all integers little-endian):
//!
//! | bytes | content                          |
//! |-------|----------------------------------|
//! | 2     | magic `b"T4"`                    |
//! | 1     | dtype tag: 0 = f32, 1 = f64      |
//! | 16    | n, c, h, w as four `u32`         |
//! | rest  | payload, NCHW row-major, LE      |

use std::fmt;
use std::io::{Read, Write};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, Error, Result};
use crate::rng::SeededRng;

pub const MAGIC: &[u8; 2] = b"T4";
/// Magic, dtype tag and four `u32` dims.
pub const HEADER_LEN: usize = 2 + 1 + 4 * 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    F32,
    F64,
}

impl DType {
    pub fn tag(self) -> u8 {
        match self {
            DType::F32 => 0,
            DType::F64 => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(DType::F32),
            1 => Ok(DType::F64),
            other => Err(Error::Format(format!("unknown dtype tag {other}"))),
        }
    }
}

impl fmt::Display for DType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DType::F32 => "f32",
            DType::F64 => "f64",
        })
    }
}

/// Scalar types a [`Tensor4`] can hold.
pub trait Real:
    Float + FromPrimitive + Sum + Default + fmt::Debug + fmt::Display + Send + Sync + 'static
{
    const DTYPE: DType;
    const BYTES: usize;

    /// Lossy conversion from an `f64` literal.
    fn lit(v: f64) -> Self;
    fn as_f64(self) -> f64;
    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;
}

impl Real for f32 {
    const DTYPE: DType = DType::F32;
    const BYTES: usize = 4;

    fn lit(v: f64) -> Self {
        v as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes.try_into().expect("4 bytes"))
    }
}

impl Real for f64 {
    const DTYPE: DType = DType::F64;
    const BYTES: usize = 8;

    fn lit(v: f64) -> Self {
        v
    }
    fn as_f64(self) -> f64 {
        self
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes.try_into().expect("8 bytes"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims4 {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Dims4 {
    pub const fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Self { n, c, h, w }
    }

    pub fn len(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn plane(&self) -> usize {
        self.h * self.w
    }

    pub fn as_array(&self) -> [usize; 4] {
        [self.n, self.c, self.h, self.w]
    }

    fn validate(&self) -> Result<()> {
        for (axis, v) in [("n", self.n), ("c", self.c), ("h", self.h), ("w", self.w)] {
            if v == 0 {
                return Err(Error::Input(format!("tensor axis {axis} must be >= 1")));
            }
        }
        Ok(())
    }
}

impl fmt::Display for Dims4 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {}, {})", self.n, self.c, self.h, self.w)
    }
}

impl From<[usize; 4]> for Dims4 {
    fn from(d: [usize; 4]) -> Self {
        Dims4::new(d[0], d[1], d[2], d[3])
    }
}

/// Dense 4-D tensor in NCHW row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4<T> {
    dims: Dims4,
    data: Vec<T>,
}

impl<T: Real> Tensor4<T> {
    pub fn zeros(dims: impl Into<Dims4>) -> Self {
        Self::full(dims, T::zero())
    }

    /// # Panics
    /// If any axis is zero.
    pub fn full(dims: impl Into<Dims4>, value: T) -> Self {
        let dims = dims.into();
        dims.validate().expect("tensor dims");
        Self {
            dims,
            data: vec![value; dims.len()],
        }
    }

    pub fn from_vec(dims: impl Into<Dims4>, data: Vec<T>) -> Result<Self> {
        let dims = dims.into();
        dims.validate()?;
        ensure_dim("Tensor4::from_vec", "len", dims.len(), data.len())?;
        Ok(Self { dims, data })
    }

    pub fn from_fn(dims: impl Into<Dims4>, mut f: impl FnMut(usize, usize, usize, usize) -> T) -> Self {
        let dims = dims.into();
        dims.validate().expect("tensor dims");
        let mut data = Vec::with_capacity(dims.len());
        for n in 0..dims.n {
            for c in 0..dims.c {
                for i in 0..dims.h {
                    for j in 0..dims.w {
                        data.push(f(n, c, i, j));
                    }
                }
            }
        }
        Self { dims, data }
    }

    /// Values drawn uniformly from `[lo, hi)`.
    pub fn random(dims: impl Into<Dims4>, lo: f64, hi: f64, rng: &mut SeededRng) -> Self {
        let dims = dims.into();
        dims.validate().expect("tensor dims");
        let data = (0..dims.len()).map(|_| T::lit(rng.uniform(lo, hi))).collect();
        Self { dims, data }
    }

    pub fn dims(&self) -> Dims4 {
        self.dims
    }
    pub fn n(&self) -> usize {
        self.dims.n
    }
    pub fn c(&self) -> usize {
        self.dims.c
    }
    pub fn h(&self) -> usize {
        self.dims.h
    }
    pub fn w(&self) -> usize {
        self.dims.w
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }
    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn offset(&self, n: usize, c: usize, i: usize, j: usize) -> usize {
        ((n * self.dims.c + c) * self.dims.h + i) * self.dims.w + j
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, i: usize, j: usize) -> T {
        self.data[self.offset(n, c, i, j)]
    }

    #[inline]
    pub fn at_mut(&mut self, n: usize, c: usize, i: usize, j: usize) -> &mut T {
        let o = self.offset(n, c, i, j);
        &mut self.data[o]
    }

    /// Value at a possibly out-of-range position; zero outside the map.
    #[inline]
    pub fn at_padded(&self, n: usize, c: usize, i: isize, j: isize) -> T {
        if i < 0 || j < 0 || i as usize >= self.dims.h || j as usize >= self.dims.w {
            T::zero()
        } else {
            self.at(n, c, i as usize, j as usize)
        }
    }

    pub fn plane(&self, n: usize, c: usize) -> &[T] {
        let start = self.offset(n, c, 0, 0);
        &self.data[start..start + self.dims.plane()]
    }

    pub fn plane_mut(&mut self, n: usize, c: usize) -> &mut [T] {
        let start = self.offset(n, c, 0, 0);
        let len = self.dims.plane();
        &mut self.data[start..start + len]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            dims: self.dims,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        self.ensure_same_dims(other, "Tensor4::zip_map")?;
        Ok(Self {
            dims: self.dims,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        self.ensure_same_dims(other, "Tensor4::add_assign")?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + b;
        }
        Ok(())
    }

    pub fn scale(&self, s: T) -> Self {
        self.map(|v| v * s)
    }

    pub fn cast<U: Real>(&self) -> Tensor4<U> {
        Tensor4 {
            dims: self.dims,
            data: self.data.iter().map(|v| U::lit(v.as_f64())).collect(),
        }
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    /// Sum of elementwise products; the scalar loss used by gradient checks.
    pub fn dot(&self, other: &Self) -> Result<T> {
        self.ensure_same_dims(other, "Tensor4::dot")?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |acc, (&a, &b)| acc + a * b))
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        self.ensure_same_dims(other, "Tensor4::max_abs_diff")?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a.as_f64() - b.as_f64()).abs())
            .fold(0.0, f64::max))
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|v| v.as_f64().abs()).fold(0.0, f64::max)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Channels `[start, start + len)` as a new tensor.
    pub fn narrow_channels(&self, start: usize, len: usize) -> Result<Self> {
        if len == 0 || start + len > self.dims.c {
            return Err(Error::shape(
                "Tensor4::narrow_channels",
                "c",
                self.dims.c,
                start + len,
            ));
        }
        let dims = Dims4::new(self.dims.n, len, self.dims.h, self.dims.w);
        let mut data = Vec::with_capacity(dims.len());
        for n in 0..self.dims.n {
            let from = self.offset(n, start, 0, 0);
            data.extend_from_slice(&self.data[from..from + len * self.dims.plane()]);
        }
        Ok(Self { dims, data })
    }

    /// Concatenation along the channel axis.
    pub fn concat_channels(parts: &[&Self]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Input("concat of zero tensors".into()))?;
        let d0 = first.dims;
        let mut c = 0;
        for p in parts {
            ensure_dim("Tensor4::concat_channels", "n", d0.n, p.dims.n)?;
            ensure_dim("Tensor4::concat_channels", "h", d0.h, p.dims.h)?;
            ensure_dim("Tensor4::concat_channels", "w", d0.w, p.dims.w)?;
            c += p.dims.c;
        }
        let dims = Dims4::new(d0.n, c, d0.h, d0.w);
        let mut data = Vec::with_capacity(dims.len());
        for n in 0..d0.n {
            for p in parts {
                let from = p.offset(n, 0, 0, 0);
                data.extend_from_slice(&p.data[from..from + p.dims.c * p.dims.plane()]);
            }
        }
        Ok(Self { dims, data })
    }

    /// Zero-pads both spatial axes by `ph` rows and `pw` columns on each side.
    pub fn pad_spatial(&self, ph: usize, pw: usize) -> Self {
        let d = self.dims;
        let mut out = Self::zeros(Dims4::new(d.n, d.c, d.h + 2 * ph, d.w + 2 * pw));
        for n in 0..d.n {
            for c in 0..d.c {
                for i in 0..d.h {
                    let src = self.offset(n, c, i, 0);
                    let dst = out.offset(n, c, i + ph, pw);
                    out.data[dst..dst + d.w].copy_from_slice(&self.data[src..src + d.w]);
                }
            }
        }
        out
    }

    /// Spatial window `[top, top + h) × [left, left + w)`.
    pub fn crop_spatial(&self, top: usize, left: usize, h: usize, w: usize) -> Result<Self> {
        let d = self.dims;
        if top + h > d.h {
            return Err(Error::shape("Tensor4::crop_spatial", "h", d.h, top + h));
        }
        if left + w > d.w {
            return Err(Error::shape("Tensor4::crop_spatial", "w", d.w, left + w));
        }
        let mut out = Self::zeros(Dims4::new(d.n, d.c, h, w));
        for n in 0..d.n {
            for c in 0..d.c {
                for i in 0..h {
                    let src = self.offset(n, c, top + i, left);
                    let dst = out.offset(n, c, i, 0);
                    out.data[dst..dst + w].copy_from_slice(&self.data[src..src + w]);
                }
            }
        }
        Ok(out)
    }

    pub fn ensure_same_dims(&self, other: &Self, context: &'static str) -> Result<()> {
        ensure_dim(context, "n", self.dims.n, other.dims.n)?;
        ensure_dim(context, "c", self.dims.c, other.dims.c)?;
        ensure_dim(context, "h", self.dims.h, other.dims.h)?;
        ensure_dim(context, "w", self.dims.w, other.dims.w)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.data.len() * T::BYTES);
        out.extend_from_slice(MAGIC);
        out.push(T::DTYPE.tag());
        for d in self.dims.as_array() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in &self.data {
            v.write_le(&mut out);
        }
        out
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        w.write_all(&self.to_bytes())?;
        Ok(())
    }

    /// Reads one tensor from the front of `r`. The stored dtype must match `T`.
    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut header = [0u8; HEADER_LEN];
        r.read_exact(&mut header)
            .map_err(|e| Error::Format(format!("truncated header: {e}")))?;
        if &header[0..2] != MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let dtype = DType::from_tag(header[2])?;
        if dtype != T::DTYPE {
            return Err(Error::Format(format!(
                "stored dtype {dtype}, requested {}",
                T::DTYPE
            )));
        }
        let mut dims = [0usize; 4];
        for (k, d) in dims.iter_mut().enumerate() {
            let at = 3 + 4 * k;
            *d = u32::from_le_bytes(header[at..at + 4].try_into().expect("4 bytes")) as usize;
        }
        let dims = Dims4::from(dims);
        dims.validate()
            .map_err(|e| Error::Format(format!("invalid dims: {e}")))?;
        let mut payload = vec![0u8; dims.len() * T::BYTES];
        r.read_exact(&mut payload)
            .map_err(|e| Error::Format(format!("truncated payload: {e}")))?;
        let data = payload.chunks_exact(T::BYTES).map(T::read_le).collect();
        Ok(Self { dims, data })
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Self::read_from(bytes)
    }
}
