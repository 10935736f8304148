//! C2f blocks: the standard bottleneck version and the ASC / LKSC variants.
//!
//! Every variant shares the skeleton
//!
//! ```text
//! X ──stem 1×1──► Conv(X) = [X1 | X2] ──units on X2──► concat ──head 1×1──► Y
//! ```
//!
//! and differs in the units chained on `X2` and in what gets concatenated.
//! Standard and LKSCM concatenate `X1, X2` and every unit output, `(2+n)·c′`
//! channels. Faithful ASCM concatenates `X1, Conv(X), Y2, Y2′`, `5·c′`
//! channels, where `Y2` is the first ASC block output and `Y2′` the output
//! after `n - 1` more.

use serde::{Deserialize, Serialize};

use crate::asc::{asc_block_forward, AscParams, AscSpec};
use crate::conv::ConvSpec;
use crate::error::{ensure_dim, Error, Result};
use crate::lksc::{lksc_forward, LkscPlan, LkscSpec};
use crate::nn::ConvBnAct;
use crate::rng::SeededRng;
use crate::tensor::{Real, Tensor4};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Standard,
    Ascm,
    Lkscm,
}

impl Variant {
    pub fn label(self) -> &'static str {
        match self {
            Variant::Standard => "standard",
            Variant::Ascm => "ascm",
            Variant::Lkscm => "lkscm",
        }
    }
}

fn one() -> usize {
    1
}

fn yes() -> bool {
    true
}

/// One entry of a block-stack configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct C2fConfig {
    pub variant: Variant,
    pub c_in: usize,
    pub c_out: usize,
    /// Hidden width `c′`; `c_out / 2` when absent.
    #[serde(default)]
    pub c_prime: Option<usize>,
    #[serde(default = "one")]
    pub n: usize,
    /// ASC kernel (default 3) or LKSC large kernel (default 51). Ignored by
    /// the standard variant, whose bottlenecks are 3×3.
    #[serde(default)]
    pub kernel: Option<usize>,
    /// LKSC tile size; default 5.
    #[serde(default)]
    pub tile: Option<usize>,
    /// ASCM only: concatenate `[X1, stem(X), Y2, Y2']` (5c′ channels) instead
    /// of the usual chain of unit outputs.
    #[serde(default = "yes", rename = "faithful_eq6")]
    pub faithful_concat: bool,
    /// ASC group count.
    #[serde(default = "one")]
    pub groups: usize,
}

pub const BOTTLENECK_KERNEL: usize = 3;
pub const ASC_DEFAULT_KERNEL: usize = 3;

impl C2fConfig {
    pub fn new(variant: Variant, c_in: usize, c_out: usize) -> Self {
        Self {
            variant,
            c_in,
            c_out,
            c_prime: None,
            n: 1,
            kernel: None,
            tile: None,
            faithful_concat: true,
            groups: 1,
        }
    }

    pub fn with_hidden(mut self, c_prime: usize) -> Self {
        self.c_prime = Some(c_prime);
        self
    }

    pub fn with_n(mut self, n: usize) -> Self {
        self.n = n;
        self
    }

    pub fn with_kernel(mut self, kernel: usize, tile: usize) -> Self {
        self.kernel = Some(kernel);
        self.tile = Some(tile);
        self
    }

    pub fn with_groups(mut self, groups: usize) -> Self {
        self.groups = groups;
        self
    }

    pub fn with_faithful(mut self, on: bool) -> Self {
        self.faithful_concat = on;
        self
    }

    pub fn hidden(&self) -> usize {
        self.c_prime.unwrap_or(self.c_out / 2)
    }

    pub fn kernel(&self) -> usize {
        match (self.kernel, self.variant) {
            (Some(k), _) => k,
            (None, Variant::Lkscm) => LkscSpec::DEFAULT_KERNEL,
            (None, Variant::Ascm) => ASC_DEFAULT_KERNEL,
            (None, Variant::Standard) => BOTTLENECK_KERNEL,
        }
    }

    pub fn tile(&self) -> usize {
        self.tile.unwrap_or(LkscSpec::DEFAULT_TILE)
    }

    pub fn asc_spec(&self) -> AscSpec {
        let c = self.hidden();
        AscSpec::same(c, c, self.kernel(), self.groups)
    }

    pub fn lksc_spec(&self) -> LkscSpec {
        LkscSpec::new(self.hidden(), self.kernel(), self.tile())
    }

    pub fn stem_spec(&self) -> ConvSpec {
        ConvSpec::new(self.c_in, 2 * self.hidden(), 1, 1)
    }

    pub fn head_spec(&self) -> ConvSpec {
        ConvSpec::new(self.concat_width(), self.c_out, 1, 1)
    }

    pub fn bottleneck_spec(&self) -> ConvSpec {
        let c = self.hidden();
        ConvSpec::new(c, c, BOTTLENECK_KERNEL, BOTTLENECK_KERNEL).same_padding()
    }

    /// Channels entering the head convolution.
    pub fn concat_width(&self) -> usize {
        let c = self.hidden();
        match self.variant {
            Variant::Ascm if self.faithful_concat => 5 * c,
            _ => (2 + self.n) * c,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.c_in == 0 || self.c_out == 0 {
            return Err(Error::Spec("C2f widths must be >= 1".into()));
        }
        if self.hidden() == 0 {
            return Err(Error::Spec(format!("hidden width c' must be >= 1 (c_out = {})", self.c_out)));
        }
        if self.n == 0 {
            return Err(Error::Spec("C2f repeat count n must be >= 1".into()));
        }
        if self.groups == 0 {
            return Err(Error::Spec("groups must be >= 1".into()));
        }
        match self.variant {
            Variant::Standard => Ok(()),
            Variant::Ascm => self.asc_spec().validate(),
            Variant::Lkscm => self.lksc_spec().validate(),
        }
    }
}

/// Two 3×3 conv-BN-SiLU layers; `x + f(x)` when `residual` is set.
#[derive(Debug, Clone, PartialEq)]
pub struct Bottleneck<T> {
    pub cv1: ConvBnAct<T>,
    pub cv2: ConvBnAct<T>,
    pub residual: bool,
}

impl<T: Real> Bottleneck<T> {
    pub fn forward(&self, x: &Tensor4<T>) -> Result<Tensor4<T>> {
        let y = self.cv2.forward(&self.cv1.forward(x)?)?;
        if self.residual {
            x.add(&y)
        } else {
            Ok(y)
        }
    }

    pub fn param_count(&self) -> usize {
        self.cv1.param_count() + self.cv2.param_count()
    }
}

/// Units chained on the second half of the stem output.
#[derive(Debug, Clone, PartialEq)]
pub enum Units<T> {
    Bottlenecks(Vec<Bottleneck<T>>),
    /// ASC blocks, no residual.
    Asc(Vec<AscParams<T>>),
    /// `x + lksc_forward(x)`.
    Lksc(Vec<LkscPlan<T>>),
}

impl<T: Real> Units<T> {
    pub fn len(&self) -> usize {
        match self {
            Units::Bottlenecks(v) => v.len(),
            Units::Asc(v) => v.len(),
            Units::Lksc(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn apply(&self, i: usize, x: &Tensor4<T>) -> Result<Tensor4<T>> {
        match self {
            Units::Bottlenecks(v) => v[i].forward(x),
            Units::Asc(v) => asc_block_forward(x, &v[i]),
            Units::Lksc(v) => x.add(&lksc_forward(x, &v[i])?),
        }
    }

    fn param_count(&self) -> usize {
        match self {
            Units::Bottlenecks(v) => v.iter().map(Bottleneck::param_count).sum(),
            Units::Asc(v) => v.iter().map(AscParams::param_count).sum(),
            Units::Lksc(v) => v.iter().map(|p| p.spec.param_count()).sum(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct C2fBlock<T> {
    pub config: C2fConfig,
    pub stem: ConvBnAct<T>,
    pub units: Units<T>,
    pub head: ConvBnAct<T>,
}

impl<T: Real> C2fBlock<T> {
    pub fn new(config: C2fConfig, stem: ConvBnAct<T>, units: Units<T>, head: ConvBnAct<T>) -> Result<Self> {
        config.validate()?;
        if stem.conv.spec != config.stem_spec() || head.conv.spec != config.head_spec() {
            return Err(Error::Spec("stem/head convolution specs do not match the config".into()));
        }
        ensure_dim("C2fBlock::new", "units", config.n, units.len())?;
        let kind_ok = matches!(
            (&units, config.variant),
            (Units::Bottlenecks(_), Variant::Standard) | (Units::Asc(_), Variant::Ascm) | (Units::Lksc(_), Variant::Lkscm)
        );
        if !kind_ok {
            return Err(Error::Spec(format!("units do not match variant {}", config.variant.label())));
        }
        Ok(Self {
            config,
            stem,
            units,
            head,
        })
    }

    pub fn random(config: C2fConfig, rng: &mut SeededRng) -> Result<Self> {
        config.validate()?;
        let stem = ConvBnAct::random(config.stem_spec(), rng)?;
        let units = match config.variant {
            Variant::Standard => Units::Bottlenecks(
                (0..config.n)
                    .map(|_| {
                        Ok(Bottleneck {
                            cv1: ConvBnAct::random(config.bottleneck_spec(), rng)?,
                            cv2: ConvBnAct::random(config.bottleneck_spec(), rng)?,
                            residual: true,
                        })
                    })
                    .collect::<Result<_>>()?,
            ),
            Variant::Ascm => Units::Asc(
                (0..config.n)
                    .map(|_| AscParams::random(config.asc_spec(), 0.1, rng))
                    .collect::<Result<_>>()?,
            ),
            Variant::Lkscm => {
                let spec = config.lksc_spec();
                let scale = 1.0 / (spec.branch_taps() as f64).sqrt();
                Units::Lksc((0..config.n).map(|_| LkscPlan::random(spec, scale, rng)).collect::<Result<_>>()?)
            }
        };
        let head = ConvBnAct::random(config.head_spec(), rng)?;
        Self::new(config, stem, units, head)
    }

    /// Weights, biases and batch-norm affine parameters of every layer.
    pub fn param_count(&self) -> usize {
        self.stem.param_count() + self.units.param_count() + self.head.param_count()
    }

    /// The tensor fed to the head convolution.
    pub fn concat(&self, x: &Tensor4<T>) -> Result<Tensor4<T>> {
        ensure_dim("C2f", "c", self.config.c_in, x.c())?;
        let c = self.config.hidden();
        let conv_x = self.stem.forward(x)?;
        let x1 = conv_x.narrow_channels(0, c)?;
        let x2 = conv_x.narrow_channels(c, c)?;
        let mut chain = Vec::with_capacity(self.units.len());
        let mut cur = x2.clone();
        for i in 0..self.units.len() {
            cur = self.units.apply(i, &cur)?;
            chain.push(cur.clone());
        }
        if self.config.variant == Variant::Ascm && self.config.faithful_concat {
            let (y2, y2p) = (&chain[0], chain.last().expect("n >= 1"));
            return Tensor4::concat_channels(&[&x1, &conv_x, y2, y2p]);
        }
        let mut parts = vec![&x1, &x2];
        parts.extend(chain.iter());
        Tensor4::concat_channels(&parts)
    }

    pub fn forward(&self, x: &Tensor4<T>) -> Result<Tensor4<T>> {
        self.head.forward(&self.concat(x)?)
    }
}

fn forward_as<T: Real>(x: &Tensor4<T>, block: &C2fBlock<T>, variant: Variant) -> Result<Tensor4<T>> {
    if block.config.variant != variant {
        return Err(Error::Spec(format!(
            "expected a {} block, got {}",
            variant.label(),
            block.config.variant.label()
        )));
    }
    block.forward(x)
}

/// Standard C2f with residual bottlenecks.
pub fn c2f_forward<T: Real>(x: &Tensor4<T>, block: &C2fBlock<T>) -> Result<Tensor4<T>> {
    forward_as(x, block, Variant::Standard)
}

/// C2f with ASC blocks on the split half.
pub fn ascm_c2f_forward<T: Real>(x: &Tensor4<T>, block: &C2fBlock<T>) -> Result<Tensor4<T>> {
    forward_as(x, block, Variant::Ascm)
}

/// C2f whose bottlenecks are LKSC units with a residual connection.
pub fn lkscm_c2f_forward<T: Real>(x: &Tensor4<T>, block: &C2fBlock<T>) -> Result<Tensor4<T>> {
    forward_as(x, block, Variant::Lkscm)
}

/// Runs blocks in order.
pub fn stack_forward<T: Real>(x: &Tensor4<T>, blocks: &[C2fBlock<T>]) -> Result<Tensor4<T>> {
    let mut cur = x.clone();
    for b in blocks {
        cur = b.forward(&cur)?;
    }
    Ok(cur)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asc::asc_block_forward;
    use crate::conv::ConvParams;
    use crate::lksc::{plan_lksc, pointwise_spec};
    use crate::nn::{silu_map, BatchNorm};

    fn ident_cba(spec: ConvSpec) -> ConvBnAct<f64> {
        ConvBnAct::new(ConvParams::identity(spec).unwrap(), BatchNorm::identity(spec.c_out)).unwrap()
    }

    #[test]
    fn config_defaults_from_json() {
        let c: C2fConfig = serde_json::from_str(r#"{"variant":"lkscm","c_in":64,"c_out":64}"#).unwrap();
        assert_eq!((c.hidden(), c.n, c.kernel(), c.tile(), c.faithful_concat, c.groups), (32, 1, 51, 5, true, 1));
        let a: C2fConfig = serde_json::from_str(r#"{"variant":"ascm","c_in":8,"c_out":8,"c_prime":4,"n":2}"#).unwrap();
        assert_eq!((a.kernel(), a.concat_width()), (3, 20));
        assert!(serde_json::from_str::<C2fConfig>(r#"{"variant":"ascm","c_in":8,"c_out":8,"bogus":1}"#).is_err());
        assert!(serde_json::from_str::<C2fConfig>(r#"{"variant":"other","c_in":8,"c_out":8}"#).is_err());
    }

    #[test]
    fn validation() {
        assert!(C2fConfig::new(Variant::Standard, 4, 1).validate().is_err());
        assert!(C2fConfig::new(Variant::Standard, 4, 4).with_n(0).validate().is_err());
        assert!(C2fConfig::new(Variant::Lkscm, 4, 4).with_kernel(7, 4).validate().is_err());
        assert!(C2fConfig::new(Variant::Ascm, 4, 6).with_groups(2).validate().is_err());
        assert!(C2fConfig::new(Variant::Ascm, 4, 8).with_groups(2).validate().is_ok());
    }

    #[test]
    fn width_laws() {
        for n in 1..=3 {
            let s = C2fConfig::new(Variant::Standard, 64, 64).with_hidden(32).with_n(n);
            assert_eq!(s.concat_width(), (2 + n) * 32);
            let a = C2fConfig::new(Variant::Ascm, 64, 64).with_hidden(32).with_n(n);
            assert_eq!(a.concat_width(), 160);
            assert_eq!(a.with_faithful(false).concat_width(), (2 + n) * 32);
        }
    }

    #[test]
    fn identity_standard_block_by_hand() {
        // Stem 2->4 is not square, so fill it by hand: channel k reads input k % 2.
        let cfg = C2fConfig::new(Variant::Standard, 2, 2).with_hidden(2);
        let mut stem = ConvParams::<f64>::zeros(cfg.stem_spec()).unwrap();
        for o in 0..4 {
            stem.weights[o * 2 + o % 2] = 1.0;
        }
        let stem = ConvBnAct::new(stem, BatchNorm::identity(4)).unwrap();
        let mut head = ConvParams::<f64>::zeros(cfg.head_spec()).unwrap();
        // Head picks the last concatenated channel pair.
        head.weights[4] = 1.0;
        head.weights[6 + 5] = 1.0;
        let head = ConvBnAct::new(head, BatchNorm::identity(2)).unwrap();
        let bn = ident_cba(cfg.bottleneck_spec());
        let units = Units::Bottlenecks(vec![Bottleneck { cv1: bn.clone(), cv2: bn, residual: true }]);
        let block = C2fBlock::new(cfg, stem, units, head).unwrap();
        let mut rng = SeededRng::new(1);
        let x = Tensor4::<f64>::random([1, 2, 5, 5], -1.0, 1.0, &mut rng);
        let g = BatchNorm::<f64>::identity(1).gain(0);
        let cba = |t: &Tensor4<f64>| silu_map(&t.scale(g));
        let x2 = cba(&x);
        let y = cba(&x2.add(&cba(&cba(&x2))).unwrap());
        let out = c2f_forward(&x, &block).unwrap();
        assert_eq!(out.dims(), x.dims());
        assert!(out.max_abs_diff(&y).unwrap() < 1e-14);
        assert!(ascm_c2f_forward(&x, &block).is_err());
    }

    #[test]
    fn random_standard_matches_composition() {
        let mut rng = SeededRng::new(2);
        let cfg = C2fConfig::new(Variant::Standard, 6, 8).with_n(2);
        let b = C2fBlock::<f64>::random(cfg, &mut rng).unwrap();
        let x = Tensor4::random([2, 6, 7, 6], -1.0, 1.0, &mut rng);
        let Units::Bottlenecks(units) = &b.units else { unreachable!() };
        let cx = b.stem.forward(&x).unwrap();
        let x2 = cx.narrow_channels(4, 4).unwrap();
        let u1 = x2.add(&units[0].cv2.forward(&units[0].cv1.forward(&x2).unwrap()).unwrap()).unwrap();
        let u2 = u1.add(&units[1].cv2.forward(&units[1].cv1.forward(&u1).unwrap()).unwrap()).unwrap();
        let cat = Tensor4::concat_channels(&[&cx, &u1, &u2]).unwrap();
        assert_eq!(cat.c(), 16);
        let want = b.head.forward(&cat).unwrap();
        assert_eq!(c2f_forward(&x, &b).unwrap(), want);
    }

    #[test]
    fn ascm_faithful_layout() {
        let mut rng = SeededRng::new(3);
        for n in 1..=3 {
            let cfg = C2fConfig::new(Variant::Ascm, 4, 8).with_n(n);
            let b = C2fBlock::<f64>::random(cfg, &mut rng).unwrap();
            let x = Tensor4::random([1, 4, 6, 6], -1.0, 1.0, &mut rng);
            let cat = b.concat(&x).unwrap();
            assert_eq!(cat.c(), 20);
            let Units::Asc(units) = &b.units else { unreachable!() };
            let cx = b.stem.forward(&x).unwrap();
            let y2 = asc_block_forward(&cx.narrow_channels(4, 4).unwrap(), &units[0]).unwrap();
            let mut y2p = y2.clone();
            for u in &units[1..] {
                y2p = asc_block_forward(&y2p, u).unwrap();
            }
            let want = Tensor4::concat_channels(&[&cx.narrow_channels(0, 4).unwrap(), &cx, &y2, &y2p]).unwrap();
            assert_eq!(cat, want);
            if n == 1 {
                assert_eq!(cat.narrow_channels(12, 4).unwrap(), cat.narrow_channels(16, 4).unwrap());
            }
            assert_eq!(ascm_c2f_forward(&x, &b).unwrap().dims().as_array(), [1, 8, 6, 6]);
        }
    }

    #[test]
    fn ascm_standard_semantics() {
        let mut rng = SeededRng::new(4);
        let cfg = C2fConfig::new(Variant::Ascm, 4, 4).with_hidden(2).with_n(3).with_faithful(false);
        let b = C2fBlock::<f32>::random(cfg, &mut rng).unwrap();
        let x = Tensor4::random([1, 4, 5, 5], -1.0, 1.0, &mut rng);
        assert_eq!(b.concat(&x).unwrap().c(), 10);
    }

    #[test]
    fn lkscm_annihilated_units_pass_through() {
        let mut rng = SeededRng::new(5);
        let cfg = C2fConfig::new(Variant::Lkscm, 4, 4).with_hidden(2).with_kernel(7, 5);
        let random = C2fBlock::<f64>::random(cfg, &mut rng).unwrap();
        let spec = cfg.lksc_spec();
        let zero = plan_lksc(spec, vec![0.0; 70], vec![0.0; 70], vec![0.0; 50]).unwrap();
        assert_eq!(zero.pointwise, ConvParams::identity(pointwise_spec(2)).unwrap());
        let b = C2fBlock::new(cfg, random.stem.clone(), Units::Lksc(vec![zero]), random.head.clone()).unwrap();
        let x = Tensor4::random([1, 4, 9, 9], -1.0, 1.0, &mut rng);
        let cx = b.stem.forward(&x).unwrap();
        let x2 = cx.narrow_channels(2, 2).unwrap();
        let want = b.head.forward(&Tensor4::concat_channels(&[&cx, &x2]).unwrap()).unwrap();
        assert_eq!(lkscm_c2f_forward(&x, &b).unwrap(), want);
    }

    #[test]
    fn lkscm_random_matches_composition_and_shape() {
        let mut rng = SeededRng::new(6);
        let cfg = C2fConfig::new(Variant::Lkscm, 64, 64).with_hidden(32).with_kernel(7, 5);
        let b = C2fBlock::<f32>::random(cfg, &mut rng).unwrap();
        let x = Tensor4::random([1, 64, 32, 32], -1.0, 1.0, &mut rng);
        let y = lkscm_c2f_forward(&x, &b).unwrap();
        assert_eq!(y.dims().as_array(), [1, 64, 32, 32]);
        let Units::Lksc(units) = &b.units else { unreachable!() };
        let cx = b.stem.forward(&x).unwrap();
        let x2 = cx.narrow_channels(32, 32).unwrap();
        let u = x2.add(&lksc_forward(&x2, &units[0]).unwrap()).unwrap();
        let want = b.head.forward(&Tensor4::concat_channels(&[&cx, &u]).unwrap()).unwrap();
        assert_eq!(y, want);
    }

    #[test]
    fn channel_mismatch_is_shape_error() {
        let mut rng = SeededRng::new(7);
        let b = C2fBlock::<f64>::random(C2fConfig::new(Variant::Standard, 4, 4), &mut rng).unwrap();
        let err = c2f_forward(&Tensor4::zeros([1, 3, 4, 4]), &b).unwrap_err();
        assert!(matches!(err, Error::Shape { axis: "c", expected: 4, actual: 3, .. }));
    }
}
