//! Timing of the dense large depthwise kernel against its shift-tile
//! decomposition. Outputs are compared before anything is timed.

use std::time::Instant;

use aslks_core::lksc::{anchored_depthwise_conv, lksc_linear, LkscPlan, LkscSpec};
use aslks_core::rng::SeededRng;
use aslks_core::{DType, Dims4, Real, Tensor4};
use serde::Serialize;

use crate::verify::equivalence_tol;
use crate::{CliError, CliResult};

pub const MIN_REPEATS: usize = 3;

#[derive(Debug, Clone, Copy)]
pub struct BenchArgs {
    pub input: Dims4,
    pub kernel: usize,
    pub tile: usize,
    pub repeats: usize,
    pub seed: u64,
    pub dtype: DType,
}

#[derive(Debug, Clone, Serialize)]
pub struct PathStats {
    /// Linear-stage multiply-accumulates, counted from kernel elements.
    pub macs: u64,
    /// Depthwise kernel elements over all channels.
    pub params: u64,
    pub min_s: f64,
    pub median_s: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub input: [usize; 4],
    pub kernel: usize,
    pub tile: usize,
    pub dtype: DType,
    pub seed: u64,
    pub version: String,
    pub repeats: usize,
    pub direct: PathStats,
    pub decomposed: PathStats,
    /// decomposed / direct.
    pub mac_ratio: f64,
    pub param_ratio: f64,
    pub max_abs_diff: f64,
    pub tolerance: f64,
}

fn time_runs<T: Real>(repeats: usize, mut f: impl FnMut() -> aslks_core::Result<Tensor4<T>>) -> CliResult<(f64, f64)> {
    f()?;
    let mut times = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let t0 = Instant::now();
        std::hint::black_box(f()?);
        times.push(t0.elapsed().as_secs_f64());
    }
    times.sort_by(f64::total_cmp);
    let median = if repeats % 2 == 1 {
        times[repeats / 2]
    } else {
        0.5 * (times[repeats / 2 - 1] + times[repeats / 2])
    };
    Ok((times[0], median))
}

fn run_typed<T: Real>(a: &BenchArgs) -> CliResult<BenchReport> {
    let spec = LkscSpec::new(a.input.c, a.kernel, a.tile);
    spec.validate()?;
    let mut rng = SeededRng::new(a.seed);
    let scale = 1.0 / (spec.branch_taps() as f64).sqrt();
    let plan = LkscPlan::<T>::random(spec, scale, &mut rng)?;
    let x = Tensor4::<T>::random(a.input, -1.0, 1.0, &mut rng);
    let (dense, anchor) = plan.dense_equivalent();

    let direct_out = anchored_depthwise_conv(&x, &dense, anchor)?;
    let decomposed_out = lksc_linear(&x, &plan)?;
    let diff = direct_out.max_abs_diff(&decomposed_out)?;
    let tol = equivalence_tol(a.dtype);
    if !(diff <= tol) {
        return Err(CliError::Verification(format!(
            "decomposed output differs from the dense kernel by {diff:e} (tolerance {tol:e}); no timings reported"
        )));
    }

    let (dmin, dmed) = time_runs(a.repeats, || anchored_depthwise_conv(&x, &dense, anchor))?;
    let (smin, smed) = time_runs(a.repeats, || lksc_linear(&x, &plan))?;

    let positions = (a.input.n * a.input.h * a.input.w) as u64;
    let c = a.input.c as u64;
    let (dense_taps, branch_taps) = (spec.dense_taps() as u64, spec.branch_taps() as u64);
    Ok(BenchReport {
        input: a.input.as_array(),
        kernel: a.kernel,
        tile: a.tile,
        dtype: a.dtype,
        seed: a.seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
        repeats: a.repeats,
        direct: PathStats {
            macs: positions * c * dense_taps,
            params: c * dense_taps,
            min_s: dmin,
            median_s: dmed,
        },
        decomposed: PathStats {
            macs: positions * c * branch_taps,
            params: c * branch_taps,
            min_s: smin,
            median_s: smed,
        },
        mac_ratio: branch_taps as f64 / dense_taps as f64,
        param_ratio: branch_taps as f64 / dense_taps as f64,
        max_abs_diff: diff,
        tolerance: tol,
    })
}

pub fn run(a: &BenchArgs) -> CliResult<BenchReport> {
    if a.repeats < MIN_REPEATS {
        return Err(CliError::Usage(format!("--repeats must be >= {MIN_REPEATS}, got {}", a.repeats)));
    }
    match a.dtype {
        DType::F32 => run_typed::<f32>(a),
        DType::F64 => run_typed::<f64>(a),
    }
}
