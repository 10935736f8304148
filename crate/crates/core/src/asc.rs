//! Adaptive shape convolution: grouped deformable sampling with per-position
//! offsets and modulation scalars, plus the ASC block (ASC → BN → SiLU).
//!
//! For group `g`, output position `p0` and kernel point `k = (ki, kj)` the
//! input of the group is read at
//!
//! ```text
//! (p0.y * stride - pad_h + ki + dy[g,k,p0],  p0.x * stride - pad_w + kj + dx[g,k,p0])
//! ```
//!
//! by bilinear interpolation, multiplied by the static kernel weight and the
//! modulation `m[g,k,p0] ∈ [0, 1]`, and summed over the group's input
//! channels and kernel points. Group outputs are concatenated along channels.
//!
//! Offsets and modulation ("fields") come from a 3×3 grouped generator
//! convolution over the block input: the first `2·G·K` generator channels are
//! offsets, ordered group-major then kernel point, `dy` before `dx`; the last
//! `G·K` channels pass through the logistic function to become modulation.

use rayon::prelude::*;

use crate::conv::{conv2d_direct, ConvParams, ConvSpec};
use crate::error::{ensure_dim, Error, Result};
use crate::nn::{sigmoid, silu_map, BatchNorm};
use crate::rng::SeededRng;
use crate::sample::{bilinear_sample, bilinear_taps};
use crate::tensor::{Dims4, Real, Tensor4};

/// Kernel size of the field generator.
pub const GENERATOR_KERNEL: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AscSpec {
    pub c_in: usize,
    pub c_out: usize,
    pub kh: usize,
    pub kw: usize,
    pub groups: usize,
    pub stride: usize,
    pub pad_h: usize,
    pub pad_w: usize,
}

impl AscSpec {
    /// Square odd kernel, "same" padding, stride 1.
    pub fn same(c_in: usize, c_out: usize, kernel: usize, groups: usize) -> Self {
        Self {
            c_in,
            c_out,
            kh: kernel,
            kw: kernel,
            groups,
            stride: 1,
            pad_h: kernel / 2,
            pad_w: kernel / 2,
        }
    }

    /// Sampling points per group.
    pub fn k(&self) -> usize {
        self.kh * self.kw
    }

    pub fn cin_per_group(&self) -> usize {
        self.c_in / self.groups
    }

    pub fn cout_per_group(&self) -> usize {
        self.c_out / self.groups
    }

    pub fn offset_channels(&self) -> usize {
        2 * self.groups * self.k()
    }

    pub fn modulation_channels(&self) -> usize {
        self.groups * self.k()
    }

    pub fn base_weight_len(&self) -> usize {
        self.c_out * self.cin_per_group() * self.k()
    }

    pub fn validate(&self) -> Result<()> {
        self.conv_spec().validate()?;
        for (axis, k, pad) in [("h", self.kh, self.pad_h), ("w", self.kw, self.pad_w)] {
            if k % 2 == 0 || 2 * pad + GENERATOR_KERNEL < k {
                return Err(Error::Spec(format!(
                    "ASC kernel along {axis} must be odd with 2*pad + {GENERATOR_KERNEL} >= kernel \
                     so the field generator aligns with the output grid (kernel {k}, pad {pad})"
                )));
            }
        }
        Ok(())
    }

    /// The plain grouped convolution ASC reduces to with zero offsets and
    /// unit modulation.
    pub fn conv_spec(&self) -> ConvSpec {
        ConvSpec::new(self.c_in, self.c_out, self.kh, self.kw)
            .with_stride(self.stride)
            .with_padding(self.pad_h, self.pad_w)
            .with_groups(self.groups)
    }

    /// 3×3 grouped convolution producing `3·G·K` channels on the same output
    /// grid as the main operator.
    pub fn generator_spec(&self) -> ConvSpec {
        let gp = |k: usize, pad: usize| (2 * pad + GENERATOR_KERNEL - k) / 2;
        ConvSpec::new(self.c_in, 3 * self.groups * self.k(), GENERATOR_KERNEL, GENERATOR_KERNEL)
            .with_stride(self.stride)
            .with_padding(gp(self.kh, self.pad_h), gp(self.kw, self.pad_w))
            .with_groups(self.groups)
            .with_bias(true)
    }

    pub fn output_dims(&self, input: Dims4) -> Result<Dims4> {
        self.conv_spec().output_dims(input)
    }

    /// Offset channel of `dy` for group `g`, kernel point `k`; `dx` is the next one.
    #[inline]
    pub fn offset_channel(&self, g: usize, k: usize) -> usize {
        2 * (g * self.k() + k)
    }

    #[inline]
    pub fn modulation_channel(&self, g: usize, k: usize) -> usize {
        g * self.k() + k
    }

    #[inline]
    fn base_index(&self, o: usize, ci: usize, k: usize) -> usize {
        (o * self.cin_per_group() + ci) * self.k() + k
    }
}

/// Static kernel, field generator and block batch norm.
#[derive(Debug, Clone, PartialEq)]
pub struct AscParams<T> {
    pub spec: AscSpec,
    /// `[c_out, c_in / G, kh, kw]`.
    pub base_weights: Vec<T>,
    pub generator: ConvParams<T>,
    pub bn: BatchNorm<T>,
}

impl<T: Real> AscParams<T> {
    pub fn new(spec: AscSpec, base_weights: Vec<T>, generator: ConvParams<T>, bn: BatchNorm<T>) -> Result<Self> {
        spec.validate()?;
        ensure_dim("AscParams::new", "base_weights", spec.base_weight_len(), base_weights.len())?;
        if generator.spec != spec.generator_spec() {
            return Err(Error::Spec(format!(
                "generator spec {:?} does not match expected {:?}",
                generator.spec,
                spec.generator_spec()
            )));
        }
        ensure_dim("AscParams::new", "bn channels", spec.c_out, bn.channels())?;
        BatchNorm::new(bn.scale.clone(), bn.shift.clone(), bn.mean.clone(), bn.var.clone())?;
        Ok(Self {
            spec,
            base_weights,
            generator,
            bn,
        })
    }

    /// Random base kernel, a generator with zero weights and bias (offsets 0,
    /// modulation 0.5) and identity batch norm.
    pub fn with_base(spec: AscSpec, base_weights: Vec<T>) -> Result<Self> {
        let generator = ConvParams::zeros(spec.generator_spec())?;
        Self::new(spec, base_weights, generator, BatchNorm::identity(spec.c_out))
    }

    /// Fully random parameters. Generator weights are drawn in
    /// `±offset_scale` so offsets stay within a few pixels.
    pub fn random(spec: AscSpec, offset_scale: f64, rng: &mut SeededRng) -> Result<Self> {
        spec.validate()?;
        let fan_in = (spec.cin_per_group() * spec.k()) as f64;
        let bound = 1.0 / fan_in.sqrt();
        let base = (0..spec.base_weight_len()).map(|_| T::lit(rng.uniform(-bound, bound))).collect();
        let generator = ConvParams::random(spec.generator_spec(), offset_scale, rng)?;
        let bn = BatchNorm::random(spec.c_out, rng);
        Self::new(spec, base, generator, bn)
    }

    /// Base weights as a grouped convolution (no bias).
    pub fn base_conv(&self) -> ConvParams<T> {
        ConvParams::new(self.spec.conv_spec(), self.base_weights.clone(), None).expect("validated")
    }

    /// Base weights + generator weights and bias + BN affine.
    pub fn param_count(&self) -> usize {
        self.base_weights.len() + self.generator.spec.param_count() + self.bn.param_count()
    }

    /// Container: magic `ASC1`, eight little-endian `u32` spec integers
    /// (c_in, c_out, kh, kw, groups, stride, pad_h, pad_w), then seven T4
    /// tensors: base `[c_out, c_in/G, kh, kw]`, generator weights, generator
    /// bias `[1, 3GK, 1, 1]`, and BN scale, shift, mean, var as `[1, c_out, 1, 1]`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let s = &self.spec;
        let mut out = Vec::new();
        out.extend_from_slice(ASC_MAGIC);
        for v in [s.c_in, s.c_out, s.kh, s.kw, s.groups, s.stride, s.pad_h, s.pad_w] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        let base = Tensor4::from_vec([s.c_out, s.cin_per_group(), s.kh, s.kw], self.base_weights.clone())
            .expect("validated");
        out.extend(base.to_bytes());
        out.extend(self.generator.weight_tensor().to_bytes());
        let gb = self.generator.bias.clone().expect("generator has bias");
        out.extend(column(gb).to_bytes());
        for v in [&self.bn.scale, &self.bn.shift, &self.bn.mean, &self.bn.var] {
            out.extend(column(v.clone()).to_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < ASC_HEADER_LEN || &bytes[..4] != ASC_MAGIC {
            return Err(Error::Format("missing ASC1 header".into()));
        }
        let int = |k: usize| u32::from_le_bytes(bytes[4 + 4 * k..8 + 4 * k].try_into().expect("4 bytes")) as usize;
        let spec = AscSpec {
            c_in: int(0),
            c_out: int(1),
            kh: int(2),
            kw: int(3),
            groups: int(4),
            stride: int(5),
            pad_h: int(6),
            pad_w: int(7),
        };
        spec.validate()?;
        let mut rest = &bytes[ASC_HEADER_LEN..];
        let mut next = || Tensor4::<T>::read_from(&mut rest).map(Tensor4::into_data);
        let base = next()?;
        let gw = next()?;
        let gb = next()?;
        let (scale, shift, mean, var) = (next()?, next()?, next()?, next()?);
        let generator = ConvParams::new(spec.generator_spec(), gw, Some(gb))?;
        let bn = BatchNorm::new(scale, shift, mean, var)?;
        Self::new(spec, base, generator, bn)
    }
}

pub const ASC_MAGIC: &[u8; 4] = b"ASC1";
/// Magic plus eight spec integers; the base-weight tensor starts here.
pub const ASC_HEADER_LEN: usize = 4 + 8 * 4;

fn column<T: Real>(v: Vec<T>) -> Tensor4<T> {
    let c = v.len();
    Tensor4::from_vec([1, c, 1, 1], v).expect("non-empty")
}

/// Per-position offsets `(dy, dx)` and modulation for every group and
/// kernel point, on the output grid.
#[derive(Debug, Clone, PartialEq)]
pub struct AscFields<T> {
    /// `[n, 2·G·K, oh, ow]`.
    pub offsets: Tensor4<T>,
    /// `[n, G·K, oh, ow]`, values in `[0, 1]`.
    pub modulation: Tensor4<T>,
}

impl<T: Real> AscFields<T> {
    pub fn new(offsets: Tensor4<T>, modulation: Tensor4<T>) -> Result<Self> {
        offsets.ensure_same_dims(
            &Tensor4::zeros([modulation.n(), offsets.c(), modulation.h(), modulation.w()]),
            "AscFields::new",
        )?;
        if offsets.c() != 2 * modulation.c() {
            return Err(Error::shape("AscFields::new", "c", 2 * modulation.c(), offsets.c()));
        }
        if let Some(i) = offsets.data().iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "ASC offsets".into(), index: i });
        }
        if let Some(i) = modulation
            .data()
            .iter()
            .position(|&v| !(v >= T::zero() && v <= T::one()))
        {
            return Err(Error::Input(format!("modulation at index {i} outside [0, 1]")));
        }
        Ok(Self { offsets, modulation })
    }

    /// The same offset `(dy, dx)` and modulation everywhere.
    pub fn uniform(spec: &AscSpec, out: Dims4, dy: T, dx: T, m: T) -> Self {
        let offsets = Tensor4::from_fn([out.n, spec.offset_channels(), out.h, out.w], |_, c, _, _| {
            if c % 2 == 0 {
                dy
            } else {
                dx
            }
        });
        let modulation = Tensor4::full([out.n, spec.modulation_channels(), out.h, out.w], m);
        Self { offsets, modulation }
    }

    fn check(&self, spec: &AscSpec, out: Dims4) -> Result<()> {
        let ctx = "ASC fields";
        ensure_dim(ctx, "n", out.n, self.offsets.n())?;
        ensure_dim(ctx, "offset channels", spec.offset_channels(), self.offsets.c())?;
        ensure_dim(ctx, "h", out.h, self.offsets.h())?;
        ensure_dim(ctx, "w", out.w, self.offsets.w())?;
        ensure_dim(ctx, "n", out.n, self.modulation.n())?;
        ensure_dim(ctx, "modulation channels", spec.modulation_channels(), self.modulation.c())?;
        ensure_dim(ctx, "h", out.h, self.modulation.h())?;
        ensure_dim(ctx, "w", out.w, self.modulation.w())
    }
}

/// Runs the generator; offsets pass through, modulation goes through the
/// logistic function.
pub fn asc_generate_fields<T: Real>(x: &Tensor4<T>, p: &AscParams<T>) -> Result<AscFields<T>> {
    ensure_dim("asc_generate_fields", "c", p.spec.c_in, x.c())?;
    let raw = conv2d_direct(x, &p.generator)?;
    let n_off = p.spec.offset_channels();
    let offsets = raw.narrow_channels(0, n_off)?;
    let modulation = raw.narrow_channels(n_off, p.spec.modulation_channels())?.map(sigmoid);
    Ok(AscFields { offsets, modulation })
}

/// Input-space sampling position for output coordinate `o`, kernel tap `k`.
#[inline]
fn base_coord<T: Real>(o: usize, stride: usize, k: usize, pad: usize) -> T {
    T::lit((o * stride + k) as f64 - pad as f64)
}

fn check_forward<T: Real>(x: &Tensor4<T>, p: &AscParams<T>, fields: &AscFields<T>, ctx: &'static str) -> Result<Dims4> {
    ensure_dim(ctx, "c", p.spec.c_in, x.c())?;
    let out = p.spec.output_dims(x.dims())?;
    fields.check(&p.spec, out)?;
    Ok(out)
}

/// Deformable grouped convolution with explicit fields.
///
/// Per output element the sum runs over the group's input channels, then
/// kernel rows, then kernel columns; each term is `(w · sample) · m`.
pub fn asc_forward<T: Real>(x: &Tensor4<T>, p: &AscParams<T>, fields: &AscFields<T>) -> Result<Tensor4<T>> {
    let out_dims = check_forward(x, p, fields, "asc_forward")?;
    let s = p.spec;
    let (kk, cin_g, cout_g) = (s.k(), s.cin_per_group(), s.cout_per_group());
    let (oh, ow) = (out_dims.h, out_dims.w);
    let plane = oh * ow;
    let mut out = Tensor4::zeros(out_dims);

    out.data_mut()
        .par_chunks_mut(s.c_out * plane)
        .enumerate()
        .for_each(|(n, out_n)| {
            let mut cols = vec![T::zero(); cin_g * kk * plane];
            for g in 0..s.groups {
                for k in 0..kk {
                    let (ki, kj) = (k / s.kw, k % s.kw);
                    let ch = s.offset_channel(g, k);
                    let (dy, dx) = (fields.offsets.plane(n, ch), fields.offsets.plane(n, ch + 1));
                    for oy in 0..oh {
                        let by: T = base_coord(oy, s.stride, ki, s.pad_h);
                        for ox in 0..ow {
                            let pos = oy * ow + ox;
                            let bx: T = base_coord(ox, s.stride, kj, s.pad_w);
                            let (py, px) = (by + dy[pos], bx + dx[pos]);
                            for ci in 0..cin_g {
                                cols[(ci * kk + k) * plane + pos] = bilinear_sample(x, n, g * cin_g + ci, py, px);
                            }
                        }
                    }
                }
                for o in g * cout_g..(g + 1) * cout_g {
                    let acc = &mut out_n[o * plane..(o + 1) * plane];
                    for ci in 0..cin_g {
                        for k in 0..kk {
                            let wv = p.base_weights[s.base_index(o, ci, k)];
                            let m = fields.modulation.plane(n, s.modulation_channel(g, k));
                            let col = &cols[(ci * kk + k) * plane..(ci * kk + k + 1) * plane];
                            for pos in 0..plane {
                                acc[pos] = acc[pos] + wv * col[pos] * m[pos];
                            }
                        }
                    }
                }
            }
        });
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AscGrads<T> {
    pub grad_x: Tensor4<T>,
    pub grad_base_weights: Vec<T>,
    pub grad_offsets: Tensor4<T>,
    pub grad_modulation: Tensor4<T>,
}

/// Gradients of `<asc_forward(x, p, fields), grad_out>` with respect to the
/// input, base weights, offsets and modulation. Offset gradients use the
/// bilinear position derivative; on lattice lines that is the derivative of
/// the cell to the right / below.
pub fn asc_backward<T: Real>(
    x: &Tensor4<T>,
    p: &AscParams<T>,
    fields: &AscFields<T>,
    grad_out: &Tensor4<T>,
) -> Result<AscGrads<T>> {
    let out_dims = check_forward(x, p, fields, "asc_backward")?;
    grad_out.ensure_same_dims(&Tensor4::zeros(out_dims), "asc_backward grad_out")?;
    let s = p.spec;
    let (kk, cin_g, cout_g) = (s.k(), s.cin_per_group(), s.cout_per_group());
    let (oh, ow) = (out_dims.h, out_dims.w);

    let mut grad_x = Tensor4::zeros(x.dims());
    let mut grad_w = vec![T::zero(); s.base_weight_len()];
    let mut grad_off = Tensor4::zeros(fields.offsets.dims());
    let mut grad_mod = Tensor4::zeros(fields.modulation.dims());

    for n in 0..x.n() {
        for g in 0..s.groups {
            for k in 0..kk {
                let (ki, kj) = (k / s.kw, k % s.kw);
                let (ch, mch) = (s.offset_channel(g, k), s.modulation_channel(g, k));
                for oy in 0..oh {
                    for ox in 0..ow {
                        let dy = fields.offsets.at(n, ch, oy, ox);
                        let dx = fields.offsets.at(n, ch + 1, oy, ox);
                        let m = fields.modulation.at(n, mch, oy, ox);
                        let py = base_coord::<T>(oy, s.stride, ki, s.pad_h) + dy;
                        let px = base_coord::<T>(ox, s.stride, kj, s.pad_w) + dx;
                        let (mut g_dy, mut g_dx, mut g_m) = (T::zero(), T::zero(), T::zero());
                        for ci in 0..cin_g {
                            let taps = bilinear_taps(x, n, g * cin_g + ci, py, px);
                            // d loss / d sample, summed over the group's outputs.
                            let mut g_sample = T::zero();
                            for o in g * cout_g..(g + 1) * cout_g {
                                let go = grad_out.at(n, o, oy, ox);
                                let wi = s.base_index(o, ci, k);
                                grad_w[wi] = grad_w[wi] + go * taps.value * m;
                                g_sample = g_sample + go * p.base_weights[wi];
                            }
                            g_m = g_m + g_sample * taps.value;
                            let g_in = g_sample * m;
                            g_dy = g_dy + g_in * taps.d_py;
                            g_dx = g_dx + g_in * taps.d_px;
                            let gx = grad_x.data_mut();
                            for (idx, wt) in taps.index.iter().zip(taps.weight) {
                                if let Some(i) = *idx {
                                    gx[i] = gx[i] + g_in * wt;
                                }
                            }
                        }
                        *grad_off.at_mut(n, ch, oy, ox) = g_dy;
                        *grad_off.at_mut(n, ch + 1, oy, ox) = g_dx;
                        *grad_mod.at_mut(n, mch, oy, ox) = g_m;
                    }
                }
            }
        }
    }

    Ok(AscGrads {
        grad_x,
        grad_base_weights: grad_w,
        grad_offsets: grad_off,
        grad_modulation: grad_mod,
    })
}

/// Generated fields → ASC → batch norm (inference) → SiLU.
pub fn asc_block_forward<T: Real>(x: &Tensor4<T>, p: &AscParams<T>) -> Result<Tensor4<T>> {
    let fields = asc_generate_fields(x, p)?;
    let y = asc_forward(x, p, &fields)?;
    Ok(silu_map(&p.bn.apply(&y)?))
}
