//! Pointwise layers shared by the blocks: logistic, SiLU, inference-mode batch
//! norm, and the Conv-BN-SiLU unit.

use crate::conv::{conv2d_direct, ConvParams, ConvSpec};
use crate::error::{ensure_dim, Error, Result};
use crate::rng::SeededRng;
use crate::tensor::{Real, Tensor4};

pub const BN_EPS: f64 = 1e-5;

#[inline]
pub fn sigmoid<T: Real>(v: T) -> T {
    T::one() / (T::one() + (-v).exp())
}

#[inline]
pub fn silu<T: Real>(v: T) -> T {
    v * sigmoid(v)
}

/// d silu / dv = s (1 + v (1 - s)) with s = sigmoid(v).
#[inline]
pub fn silu_grad<T: Real>(v: T) -> T {
    let s = sigmoid(v);
    s * (T::one() + v * (T::one() - s))
}

pub fn silu_map<T: Real>(x: &Tensor4<T>) -> Tensor4<T> {
    x.map(silu)
}

/// Per-channel `scale * (v - mean) / sqrt(var + eps) + shift` with stored
/// statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm<T> {
    pub scale: Vec<T>,
    pub shift: Vec<T>,
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

impl<T: Real> BatchNorm<T> {
    pub fn new(scale: Vec<T>, shift: Vec<T>, mean: Vec<T>, var: Vec<T>) -> Result<Self> {
        let c = scale.len();
        ensure_dim("BatchNorm::new", "shift", c, shift.len())?;
        ensure_dim("BatchNorm::new", "mean", c, mean.len())?;
        ensure_dim("BatchNorm::new", "var", c, var.len())?;
        if let Some(i) = var.iter().position(|v| !(*v > T::zero())) {
            return Err(Error::Spec(format!("batch-norm variance at channel {i} must be > 0")));
        }
        Ok(Self {
            scale,
            shift,
            mean,
            var,
        })
    }

    /// Scale 1, shift 0, mean 0, variance 1.
    pub fn identity(c: usize) -> Self {
        Self {
            scale: vec![T::one(); c],
            shift: vec![T::zero(); c],
            mean: vec![T::zero(); c],
            var: vec![T::one(); c],
        }
    }

    /// Statistics near the identity, drawn from `rng`.
    pub fn random(c: usize, rng: &mut SeededRng) -> Self {
        let mut draw = |lo, hi| (0..c).map(|_| T::lit(rng.uniform(lo, hi))).collect::<Vec<_>>();
        let scale = draw(0.5, 1.5);
        let shift = draw(-0.2, 0.2);
        let mean = draw(-0.2, 0.2);
        let var = draw(0.5, 1.5);
        Self {
            scale,
            shift,
            mean,
            var,
        }
    }

    pub fn channels(&self) -> usize {
        self.scale.len()
    }

    /// Per-channel multiplier `scale / sqrt(var + eps)`; also the derivative.
    pub fn gain(&self, c: usize) -> T {
        self.scale[c] / (self.var[c] + T::lit(BN_EPS)).sqrt()
    }

    pub fn apply(&self, x: &Tensor4<T>) -> Result<Tensor4<T>> {
        ensure_dim("BatchNorm::apply", "c", self.channels(), x.c())?;
        let mut out = x.clone();
        for n in 0..x.n() {
            for c in 0..x.c() {
                let (g, m, b) = (self.gain(c), self.mean[c], self.shift[c]);
                for v in out.plane_mut(n, c) {
                    *v = g * (*v - m) + b;
                }
            }
        }
        Ok(out)
    }

    /// Scale and shift are learned; running statistics are not parameters.
    pub fn param_count(&self) -> usize {
        2 * self.channels()
    }
}

/// Conv → batch norm → SiLU.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvBnAct<T> {
    pub conv: ConvParams<T>,
    pub bn: BatchNorm<T>,
}

impl<T: Real> ConvBnAct<T> {
    pub fn new(conv: ConvParams<T>, bn: BatchNorm<T>) -> Result<Self> {
        ensure_dim("ConvBnAct::new", "bn channels", conv.spec.c_out, bn.channels())?;
        Ok(Self { conv, bn })
    }

    /// Bias-free conv with weights in `±1/sqrt(fan_in)` and random BN.
    pub fn random(spec: ConvSpec, rng: &mut SeededRng) -> Result<Self> {
        let fan_in = (spec.cin_per_group() * spec.kh * spec.kw) as f64;
        let conv = ConvParams::random(spec, 1.0 / fan_in.sqrt(), rng)?;
        let bn = BatchNorm::random(spec.c_out, rng);
        Self::new(conv, bn)
    }

    pub fn forward(&self, x: &Tensor4<T>) -> Result<Tensor4<T>> {
        Ok(silu_map(&self.bn.apply(&conv2d_direct(x, &self.conv)?)?))
    }

    pub fn param_count(&self) -> usize {
        self.conv.spec.param_count() + self.bn.param_count()
    }
}
