//! Parameter and multiply-accumulate accounting for C2f block stacks.
//!
//! Counting rules:
//!
//! * convolution: `n · c_out · h_out · w_out · (c_in / groups) · kh · kw` MACs;
//!   parameters are weights plus bias;
//! * batch norm contributes its scale and shift as parameters and no MACs;
//!   activations and residual additions are free;
//! * ASC: base-kernel contraction as a convolution, the field generator as a
//!   convolution, 8 MACs per bilinear sample and 1 per modulation product,
//!   one sample per (position, input channel, kernel point);
//! * LKSC: the non-zero taps of the three depthwise branches per position and
//!   channel (padding rows of the tiles are not counted), plus the pointwise
//!   mixer; shifts cost nothing.

use serde::Serialize;

use crate::c2f::{C2fConfig, Variant};
use crate::conv::ConvSpec;
use crate::error::{Error, Result};
use crate::lksc::LkscSpec;
use crate::tensor::Dims4;

pub const BILINEAR_MACS: u64 = 8;
pub const MODULATION_MACS: u64 = 1;

/// How LKSCM blocks are realized when counting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Realization {
    /// Every block as configured.
    AsConfigured,
    /// Every block replaced by a standard C2f of the same widths.
    Baseline,
    /// LKSCM units replaced by a dense `kh × kw` depthwise kernel with the
    /// same pointwise mixer and batch norm.
    DenseLargeKernel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Cost {
    pub params: u64,
    pub macs: u64,
}

impl Cost {
    pub const ZERO: Cost = Cost { params: 0, macs: 0 };

    fn add(self, o: Cost) -> Cost {
        Cost {
            params: self.params + o.params,
            macs: self.macs + o.macs,
        }
    }

    fn times(self, k: u64) -> Cost {
        Cost {
            params: self.params * k,
            macs: self.macs * k,
        }
    }
}

impl std::iter::Sum for Cost {
    fn sum<I: Iterator<Item = Cost>>(iter: I) -> Cost {
        iter.fold(Cost::ZERO, Cost::add)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockCost {
    pub index: usize,
    pub variant: Variant,
    pub input: [usize; 4],
    pub output: [usize; 4],
    pub concat_width: usize,
    pub params: u64,
    pub macs: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostReport {
    pub realization: Realization,
    pub blocks: Vec<BlockCost>,
    pub total_params: u64,
    pub total_macs: u64,
}

/// Parameters and MACs of one convolution applied to `input`.
pub fn conv_cost(spec: &ConvSpec, input: Dims4) -> Result<Cost> {
    Ok(Cost {
        params: spec.param_count() as u64,
        macs: spec.macs(input)?,
    })
}

/// Convolution followed by batch norm and SiLU.
pub fn conv_bn_act_cost(spec: &ConvSpec, input: Dims4) -> Result<Cost> {
    let c = conv_cost(spec, input)?;
    Ok(Cost {
        params: c.params + 2 * spec.c_out as u64,
        macs: c.macs,
    })
}

/// One ASC block (operator, generator, batch norm) on `input`.
pub fn asc_block_cost(cfg: &C2fConfig, input: Dims4) -> Result<Cost> {
    let spec = cfg.asc_spec();
    spec.validate()?;
    let base = conv_cost(&spec.conv_spec(), input)?;
    let generator = conv_cost(&spec.generator_spec(), input)?;
    let out = spec.output_dims(input)?;
    let samples = (out.n * out.h * out.w * spec.c_in * spec.k()) as u64;
    Ok(Cost {
        params: base.params + generator.params + 2 * spec.c_out as u64,
        macs: base.macs + generator.macs + samples * (BILINEAR_MACS + MODULATION_MACS),
    })
}

/// One LKSC unit: depthwise branches, pointwise mixer, batch norm.
pub fn lksc_unit_cost(spec: &LkscSpec, input: Dims4) -> Result<Cost> {
    spec.validate()?;
    depthwise_unit_cost(spec.channels, spec.branch_taps(), input)
}

/// The same unit with one dense `kh × kw` depthwise kernel.
pub fn dense_unit_cost(spec: &LkscSpec, input: Dims4) -> Result<Cost> {
    spec.validate()?;
    depthwise_unit_cost(spec.channels, spec.dense_taps(), input)
}

fn depthwise_unit_cost(c: usize, taps: usize, input: Dims4) -> Result<Cost> {
    if input.c != c {
        return Err(Error::shape("LKSC cost", "c", c, input.c));
    }
    let positions = (input.n * input.h * input.w) as u64;
    let (c64, t64) = (c as u64, taps as u64);
    Ok(Cost {
        params: c64 * t64 + c64 * c64 + c64 + 2 * c64,
        macs: positions * c64 * t64 + positions * c64 * c64,
    })
}

fn block_cost(cfg: &C2fConfig, realization: Realization, input: Dims4) -> Result<(Cost, Dims4, usize)> {
    let mut cfg = *cfg;
    if realization == Realization::Baseline {
        cfg.variant = Variant::Standard;
    }
    cfg.validate()?;
    if input.c != cfg.c_in {
        return Err(Error::shape("block chain", "c", cfg.c_in, input.c));
    }
    let stem = conv_bn_act_cost(&cfg.stem_spec(), input)?;
    let half = Dims4::new(input.n, cfg.hidden(), input.h, input.w);
    let unit = match cfg.variant {
        Variant::Standard => {
            let b = cfg.bottleneck_spec();
            conv_bn_act_cost(&b, half)?.times(2)
        }
        Variant::Ascm => asc_block_cost(&cfg, half)?,
        Variant::Lkscm if realization == Realization::DenseLargeKernel => dense_unit_cost(&cfg.lksc_spec(), half)?,
        Variant::Lkscm => lksc_unit_cost(&cfg.lksc_spec(), half)?,
    };
    let cat = Dims4::new(input.n, cfg.concat_width(), input.h, input.w);
    let head = conv_bn_act_cost(&cfg.head_spec(), cat)?;
    let out = cfg.head_spec().output_dims(cat)?;
    Ok((stem.add(unit.times(cfg.n as u64)).add(head), out, cfg.concat_width()))
}

fn count(cfgs: &[C2fConfig], input: Dims4, realization: Realization) -> Result<CostReport> {
    if cfgs.is_empty() {
        return Err(Error::Input("block list is empty".into()));
    }
    let mut cur = input;
    let mut blocks = Vec::with_capacity(cfgs.len());
    for (index, cfg) in cfgs.iter().enumerate() {
        let (c, out, concat_width) = block_cost(cfg, realization, cur)?;
        let variant = if realization == Realization::Baseline { Variant::Standard } else { cfg.variant };
        blocks.push(BlockCost {
            index,
            variant,
            input: cur.as_array(),
            output: out.as_array(),
            concat_width,
            params: c.params,
            macs: c.macs,
        });
        cur = out;
    }
    let total = blocks.iter().map(|b| Cost { params: b.params, macs: b.macs }).sum::<Cost>();
    Ok(CostReport {
        realization,
        blocks,
        total_params: total.params,
        total_macs: total.macs,
    })
}

/// Per-block and total counts for the stack as configured.
pub fn count_params_flops(cfgs: &[C2fConfig], input: Dims4) -> Result<CostReport> {
    count(cfgs, input, Realization::AsConfigured)
}

pub fn count_realized(cfgs: &[C2fConfig], input: Dims4, realization: Realization) -> Result<CostReport> {
    count(cfgs, input, realization)
}

/// Per-channel kernel elements of one LKSC unit against its dense kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BranchAccounting {
    pub kernel: usize,
    pub tile: usize,
    pub branch_params_per_channel: usize,
    pub dense_params_per_channel: usize,
    pub ratio: f64,
    pub macs_per_position: usize,
    pub dense_macs_per_position: usize,
}

impl BranchAccounting {
    pub fn of(spec: &LkscSpec) -> Self {
        Self {
            kernel: spec.kh,
            tile: spec.tile,
            branch_params_per_channel: spec.branch_taps(),
            dense_params_per_channel: spec.dense_taps(),
            ratio: spec.taps_ratio(),
            macs_per_position: spec.branch_taps(),
            dense_macs_per_position: spec.dense_taps(),
        }
    }
}

/// The configured stack next to its standard-C2f baseline and its
/// dense-large-kernel counterpart.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StackComparison {
    pub input: [usize; 4],
    pub configured: CostReport,
    pub baseline: CostReport,
    pub dense_large_kernel: CostReport,
    /// `configured - baseline` parameters.
    pub params_delta_vs_baseline: i64,
    /// `configured - dense` parameters.
    pub params_delta_vs_dense: i64,
    /// Configured parameters ≤ dense-large-kernel parameters.
    pub modified_not_larger_than_dense: bool,
    /// One entry per distinct LKSC (kernel, tile) in the stack.
    pub branch_accounting: Vec<BranchAccounting>,
}

pub fn compare_stack(cfgs: &[C2fConfig], input: Dims4) -> Result<StackComparison> {
    let configured = count(cfgs, input, Realization::AsConfigured)?;
    let baseline = count(cfgs, input, Realization::Baseline)?;
    let dense = count(cfgs, input, Realization::DenseLargeKernel)?;
    let mut branch_accounting: Vec<BranchAccounting> = Vec::new();
    for cfg in cfgs.iter().filter(|c| c.variant == Variant::Lkscm) {
        let acc = BranchAccounting::of(&cfg.lksc_spec());
        if !branch_accounting.iter().any(|b| b.kernel == acc.kernel && b.tile == acc.tile) {
            branch_accounting.push(acc);
        }
    }
    Ok(StackComparison {
        input: input.as_array(),
        params_delta_vs_baseline: configured.total_params as i64 - baseline.total_params as i64,
        params_delta_vs_dense: configured.total_params as i64 - dense.total_params as i64,
        modified_not_larger_than_dense: configured.total_params <= dense.total_params,
        configured,
        baseline,
        dense_large_kernel: dense,
        branch_accounting,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::c2f::C2fBlock;
    use crate::rng::SeededRng;

    #[test]
    fn plain_conv_closed_form() {
        let s = ConvSpec::new(16, 16, 3, 3).same_padding();
        let c = conv_cost(&s, Dims4::new(1, 16, 8, 8)).unwrap();
        assert_eq!(c.params, 2304);
        assert_eq!(c.macs, 2304 * 64);
    }

    #[test]
    fn branch_ratio() {
        let a = BranchAccounting::of(&LkscSpec::new(32, 51, 5));
        assert_eq!((a.branch_params_per_channel, a.dense_params_per_channel), (535, 2601));
        assert!((a.ratio - 0.2057).abs() <= 1e-4);
        assert!((2601.0 / 535.0 - 4.86f64).abs() < 0.01);
    }

    #[test]
    fn params_agree_with_instantiated_blocks() {
        let mut rng = SeededRng::new(3);
        let cfgs = [
            C2fConfig::new(Variant::Standard, 6, 8).with_n(2),
            C2fConfig::new(Variant::Ascm, 8, 8).with_n(2).with_groups(2),
            C2fConfig::new(Variant::Ascm, 8, 8).with_faithful(false),
            C2fConfig::new(Variant::Lkscm, 8, 12).with_kernel(9, 3).with_n(3),
        ];
        let r = count_params_flops(&cfgs, Dims4::new(1, 6, 10, 10)).unwrap();
        for (cfg, b) in cfgs.iter().zip(&r.blocks) {
            let block = C2fBlock::<f32>::random(*cfg, &mut rng).unwrap();
            assert_eq!(block.param_count() as u64, b.params, "{cfg:?}");
        }
        assert_eq!(r.total_params, r.blocks.iter().map(|b| b.params).sum::<u64>());
        assert_eq!(r.total_macs, r.blocks.iter().map(|b| b.macs).sum::<u64>());
        assert_eq!(r.blocks[3].output, [1, 12, 10, 10]);
    }

    #[test]
    fn standard_block_by_hand() {
        // c_in 4, c_out 4, c' 2, n 1 on 1x4x5x5.
        let cfg = C2fConfig::new(Variant::Standard, 4, 4);
        let r = count_params_flops(&[cfg], Dims4::new(1, 4, 5, 5)).unwrap();
        let stem = 4 * 4 + 8;
        let bott = 2 * (2 * 2 * 9 + 4);
        let head = 6 * 4 + 8;
        assert_eq!(r.total_params, (stem + bott + head) as u64);
        let macs = 25 * (4 * 4 + 2 * 2 * 2 * 9 + 4 * 6);
        assert_eq!(r.total_macs, macs as u64);
    }

    #[test]
    fn chain_errors() {
        assert!(matches!(count_params_flops(&[], Dims4::new(1, 4, 4, 4)), Err(Error::Input(_))));
        let cfgs = [C2fConfig::new(Variant::Standard, 4, 8), C2fConfig::new(Variant::Standard, 6, 8)];
        let err = count_params_flops(&cfgs, Dims4::new(1, 4, 4, 4)).unwrap_err();
        assert!(matches!(err, Error::Shape { expected: 6, actual: 8, .. }));
        assert!(count_params_flops(&cfgs[..1], Dims4::new(1, 3, 4, 4)).is_err());
    }

    #[test]
    fn lkscm_cheaper_than_dense() {
        let cfg = C2fConfig::new(Variant::Lkscm, 64, 64).with_hidden(32);
        let cmp = compare_stack(&[cfg], Dims4::new(1, 64, 64, 64)).unwrap();
        assert!(cmp.configured.total_params < cmp.dense_large_kernel.total_params);
        assert!(cmp.configured.total_macs < cmp.dense_large_kernel.total_macs);
        assert!(cmp.modified_not_larger_than_dense);
        assert_eq!(cmp.params_delta_vs_dense, -(32 * (2601 - 535)));
        assert_eq!(cmp.branch_accounting.len(), 1);
        assert_eq!(cmp.baseline.blocks[0].variant, Variant::Standard);
    }
}
