//! Grouped 2-D cross-correlation with zero padding and its analytic gradients.
//!
//! Summation order per output element is fixed: input channel of the group
//! (outer), kernel row, kernel column (inner), starting from zero; the bias is
//! added last. Work is split across output planes only, so each element is
//! produced by exactly one task and results do not depend on the thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, Error, Result};
use crate::rng::SeededRng;
use crate::tensor::{Dims4, Real, Tensor4};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub c_in: usize,
    pub c_out: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad_h: usize,
    pub pad_w: usize,
    pub groups: usize,
    pub has_bias: bool,
}

impl ConvSpec {
    /// Stride 1, no padding, one group, no bias.
    pub fn new(c_in: usize, c_out: usize, kh: usize, kw: usize) -> Self {
        Self {
            c_in,
            c_out,
            kh,
            kw,
            stride: 1,
            pad_h: 0,
            pad_w: 0,
            groups: 1,
            has_bias: false,
        }
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    pub fn with_padding(mut self, pad_h: usize, pad_w: usize) -> Self {
        self.pad_h = pad_h;
        self.pad_w = pad_w;
        self
    }

    /// Padding `(k - 1) / 2` on both axes.
    pub fn same_padding(self) -> Self {
        let (ph, pw) = ((self.kh - 1) / 2, (self.kw - 1) / 2);
        self.with_padding(ph, pw)
    }

    pub fn with_groups(mut self, groups: usize) -> Self {
        self.groups = groups;
        self
    }

    pub fn with_bias(mut self, has_bias: bool) -> Self {
        self.has_bias = has_bias;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.c_in == 0 || self.c_out == 0 || self.kh == 0 || self.kw == 0 {
            return Err(Error::Spec(format!("conv dims must be positive: {self:?}")));
        }
        if self.stride == 0 {
            return Err(Error::Spec("conv stride must be >= 1".into()));
        }
        if self.groups == 0 || self.c_in % self.groups != 0 || self.c_out % self.groups != 0 {
            return Err(Error::Spec(format!(
                "groups {} must divide c_in {} and c_out {}",
                self.groups, self.c_in, self.c_out
            )));
        }
        Ok(())
    }

    pub fn cin_per_group(&self) -> usize {
        self.c_in / self.groups
    }

    pub fn cout_per_group(&self) -> usize {
        self.c_out / self.groups
    }

    pub fn weight_len(&self) -> usize {
        self.c_out * self.cin_per_group() * self.kh * self.kw
    }

    pub fn param_count(&self) -> usize {
        self.weight_len() + if self.has_bias { self.c_out } else { 0 }
    }

    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        Ok((
            out_extent(h, self.pad_h, self.kh, self.stride, "h")?,
            out_extent(w, self.pad_w, self.kw, self.stride, "w")?,
        ))
    }

    pub fn output_dims(&self, input: Dims4) -> Result<Dims4> {
        let (oh, ow) = self.output_hw(input.h, input.w)?;
        Ok(Dims4::new(input.n, self.c_out, oh, ow))
    }

    /// Multiply-accumulates of one forward pass over `input`.
    pub fn macs(&self, input: Dims4) -> Result<u64> {
        let out = self.output_dims(input)?;
        Ok(out.len() as u64 * (self.cin_per_group() * self.kh * self.kw) as u64)
    }

    #[inline]
    pub(crate) fn weight_index(&self, o: usize, ci: usize, ki: usize, kj: usize) -> usize {
        ((o * self.cin_per_group() + ci) * self.kh + ki) * self.kw + kj
    }
}

fn out_extent(size: usize, pad: usize, k: usize, stride: usize, axis: &'static str) -> Result<usize> {
    let padded = size + 2 * pad;
    if padded < k {
        return Err(Error::shape("conv output extent", axis, k, padded));
    }
    Ok((padded - k) / stride + 1)
}

/// Weights `[c_out, c_in / groups, kh, kw]` and optional bias `[c_out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams<T> {
    pub spec: ConvSpec,
    pub weights: Vec<T>,
    pub bias: Option<Vec<T>>,
}

impl<T: Real> ConvParams<T> {
    pub fn new(spec: ConvSpec, weights: Vec<T>, bias: Option<Vec<T>>) -> Result<Self> {
        spec.validate()?;
        ensure_dim("ConvParams::new", "weights", spec.weight_len(), weights.len())?;
        match (&bias, spec.has_bias) {
            (Some(b), true) => ensure_dim("ConvParams::new", "bias", spec.c_out, b.len())?,
            (None, false) => {}
            (Some(_), false) => return Err(Error::Spec("bias given but has_bias is false".into())),
            (None, true) => return Err(Error::Spec("has_bias is true but no bias given".into())),
        }
        Ok(Self {
            spec,
            weights,
            bias,
        })
    }

    pub fn zeros(spec: ConvSpec) -> Result<Self> {
        let bias = spec.has_bias.then(|| vec![T::zero(); spec.c_out]);
        Self::new(spec, vec![T::zero(); spec.weight_len()], bias)
    }

    /// Uniform weights in `[-scale, scale)`; bias drawn the same way.
    pub fn random(spec: ConvSpec, scale: f64, rng: &mut SeededRng) -> Result<Self> {
        let weights = (0..spec.weight_len())
            .map(|_| T::lit(rng.uniform(-scale, scale)))
            .collect();
        let bias = spec
            .has_bias
            .then(|| (0..spec.c_out).map(|_| T::lit(rng.uniform(-scale, scale))).collect());
        Self::new(spec, weights, bias)
    }

    /// Square kernel with a single 1 at its center for `o == i` (within a
    /// group); requires odd kernel and `c_in == c_out`.
    pub fn identity(spec: ConvSpec) -> Result<Self> {
        if spec.c_in != spec.c_out || spec.kh % 2 == 0 || spec.kw % 2 == 0 {
            return Err(Error::Spec("identity conv needs c_in == c_out and odd kernel".into()));
        }
        let mut p = Self::zeros(spec)?;
        let cpg = spec.cout_per_group();
        for o in 0..spec.c_out {
            let idx = spec.weight_index(o, o % cpg, spec.kh / 2, spec.kw / 2);
            p.weights[idx] = T::one();
        }
        Ok(p)
    }

    pub fn weight(&self, o: usize, ci: usize, ki: usize, kj: usize) -> T {
        self.weights[self.spec.weight_index(o, ci, ki, kj)]
    }

    pub fn weight_tensor(&self) -> Tensor4<T> {
        let s = &self.spec;
        Tensor4::from_vec([s.c_out, s.cin_per_group(), s.kh, s.kw], self.weights.clone())
            .expect("validated weight length")
    }
}

/// Index range `lo..hi` of output coordinates whose input coordinate
/// `o * stride + k - pad` lies inside `[0, size)`.
#[inline]
fn valid_range(out_len: usize, size: usize, k: usize, pad: usize, stride: usize) -> (usize, usize) {
    let shift = k as isize - pad as isize;
    // o * stride + shift >= 0
    let lo = if shift >= 0 {
        0
    } else {
        ((-shift) as usize).div_ceil(stride)
    };
    // o * stride + shift <= size - 1
    let max_num = size as isize - 1 - shift;
    let hi = if max_num < 0 {
        0
    } else {
        (max_num as usize / stride + 1).min(out_len)
    };
    (lo.min(hi), hi)
}

fn check_input<T: Real>(x: &Tensor4<T>, spec: &ConvSpec, context: &'static str) -> Result<Dims4> {
    spec.validate()?;
    ensure_dim(context, "c", spec.c_in, x.c())?;
    spec.output_dims(x.dims())
}

/// Grouped cross-correlation of `x` with `p`, zero padding.
pub fn conv2d_direct<T: Real>(x: &Tensor4<T>, p: &ConvParams<T>) -> Result<Tensor4<T>> {
    let s = p.spec;
    let out_dims = check_input(x, &s, "conv2d_direct")?;
    let (oh, ow) = (out_dims.h, out_dims.w);
    let (h, w) = (x.h(), x.w());
    let cin_g = s.cin_per_group();
    let cout_g = s.cout_per_group();
    let mut out = Tensor4::zeros(out_dims);
    let plane = oh * ow;

    out.data_mut()
        .par_chunks_mut(plane)
        .enumerate()
        .for_each(|(idx, acc)| {
            let (n, o) = (idx / s.c_out, idx % s.c_out);
            let g = o / cout_g;
            for ci in 0..cin_g {
                let xin = x.plane(n, g * cin_g + ci);
                for ki in 0..s.kh {
                    let (ylo, yhi) = valid_range(oh, h, ki, s.pad_h, s.stride);
                    for kj in 0..s.kw {
                        let wv = p.weights[s.weight_index(o, ci, ki, kj)];
                        let (xlo, xhi) = valid_range(ow, w, kj, s.pad_w, s.stride);
                        for oy in ylo..yhi {
                            let iy = oy * s.stride + ki - s.pad_h;
                            let row = &xin[iy * w..(iy + 1) * w];
                            let arow = &mut acc[oy * ow..(oy + 1) * ow];
                            for ox in xlo..xhi {
                                let ix = ox * s.stride + kj - s.pad_w;
                                arow[ox] = arow[ox] + row[ix] * wv;
                            }
                        }
                    }
                }
            }
            if let Some(b) = &p.bias {
                for v in acc.iter_mut() {
                    *v = *v + b[o];
                }
            }
        });
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrads<T> {
    pub grad_x: Tensor4<T>,
    pub grad_w: Vec<T>,
    pub grad_b: Option<Vec<T>>,
}

/// Exact gradients of `<conv2d_direct(x, p), grad_out>` with respect to the
/// input, weights and bias.
pub fn conv2d_backward<T: Real>(
    x: &Tensor4<T>,
    p: &ConvParams<T>,
    grad_out: &Tensor4<T>,
) -> Result<ConvGrads<T>> {
    let s = p.spec;
    let out_dims = check_input(x, &s, "conv2d_backward")?;
    ensure_dim("conv2d_backward grad_out", "n", out_dims.n, grad_out.n())?;
    ensure_dim("conv2d_backward grad_out", "c", out_dims.c, grad_out.c())?;
    ensure_dim("conv2d_backward grad_out", "h", out_dims.h, grad_out.h())?;
    ensure_dim("conv2d_backward grad_out", "w", out_dims.w, grad_out.w())?;
    let (oh, ow) = (out_dims.h, out_dims.w);
    let (h, w) = (x.h(), x.w());
    let cin_g = s.cin_per_group();
    let cout_g = s.cout_per_group();
    let kk = s.kh * s.kw;

    let grad_b = s.has_bias.then(|| {
        (0..s.c_out)
            .map(|o| {
                (0..x.n()).fold(T::zero(), |acc, n| {
                    grad_out.plane(n, o).iter().fold(acc, |a, &g| a + g)
                })
            })
            .collect()
    });

    // One task per output channel: its cin_g * kh * kw weight gradients.
    let mut grad_w = vec![T::zero(); s.weight_len()];
    grad_w
        .par_chunks_mut(cin_g * kk)
        .enumerate()
        .for_each(|(o, gw)| {
            let g = o / cout_g;
            for ci in 0..cin_g {
                for ki in 0..s.kh {
                    let (ylo, yhi) = valid_range(oh, h, ki, s.pad_h, s.stride);
                    for kj in 0..s.kw {
                        let (xlo, xhi) = valid_range(ow, w, kj, s.pad_w, s.stride);
                        let mut acc = T::zero();
                        for n in 0..x.n() {
                            let xin = x.plane(n, g * cin_g + ci);
                            let go = grad_out.plane(n, o);
                            for oy in ylo..yhi {
                                let iy = oy * s.stride + ki - s.pad_h;
                                for ox in xlo..xhi {
                                    let ix = ox * s.stride + kj - s.pad_w;
                                    acc = acc + go[oy * ow + ox] * xin[iy * w + ix];
                                }
                            }
                        }
                        gw[(ci * s.kh + ki) * s.kw + kj] = acc;
                    }
                }
            }
        });

    // One task per input plane (n, c).
    let mut grad_x = Tensor4::zeros(x.dims());
    let c_in = s.c_in;
    grad_x
        .data_mut()
        .par_chunks_mut(h * w)
        .enumerate()
        .for_each(|(idx, gx)| {
            let (n, c) = (idx / c_in, idx % c_in);
            let (g, ci) = (c / cin_g, c % cin_g);
            for o in g * cout_g..(g + 1) * cout_g {
                let go = grad_out.plane(n, o);
                for ki in 0..s.kh {
                    let (ylo, yhi) = valid_range(oh, h, ki, s.pad_h, s.stride);
                    for kj in 0..s.kw {
                        let wv = p.weights[s.weight_index(o, ci, ki, kj)];
                        let (xlo, xhi) = valid_range(ow, w, kj, s.pad_w, s.stride);
                        for oy in ylo..yhi {
                            let iy = oy * s.stride + ki - s.pad_h;
                            for ox in xlo..xhi {
                                let ix = ox * s.stride + kj - s.pad_w;
                                gx[iy * w + ix] = gx[iy * w + ix] + go[oy * ow + ox] * wv;
                            }
                        }
                    }
                }
            }
        });

    Ok(ConvGrads {
        grad_x,
        grad_w,
        grad_b,
    })
}
