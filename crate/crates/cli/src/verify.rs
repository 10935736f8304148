//! `verify` suites. Every case records the observed error next to its
//! tolerance; a case passes when `max_err <= tolerance`.

use std::fmt;

use aslks_core::c2f::Variant;
use aslks_core::gradcheck::GradCheckReport;
use aslks_core::lksc::BranchKind;
use aslks_core::{DType, Dims4, Real};
use clap::ValueEnum;
use serde::Serialize;

use crate::checks;

/// Environment variable naming a fixture to corrupt before it is checked.
/// `asc` bumps the first base weight of the ASC fixture inside its
/// serialized bytes, which must make `asc/fixture_roundtrip` fail.
pub const CORRUPT_ENV: &str = "ASLKS_CORRUPT_FIXTURE";

pub const GRAD_TOL: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    All,
    Tensor,
    Asc,
    Lksc,
    C2f,
    Metrics,
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.to_possible_value().expect("no skipped variants").get_name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseResult {
    pub name: String,
    pub status: Status,
    /// `null` when the case could not be evaluated.
    pub max_err: Option<f64>,
    pub tolerance: f64,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub suite: Suite,
    pub seed: u64,
    pub dtype: DType,
    pub version: String,
    pub pass: bool,
    pub cases: Vec<CaseResult>,
}

impl VerifyReport {
    pub fn failed(&self) -> impl Iterator<Item = &CaseResult> {
        self.cases.iter().filter(|c| c.status == Status::Fail)
    }
}

#[derive(Default)]
struct Cases(Vec<CaseResult>);

impl Cases {
    fn value(&mut self, name: impl Into<String>, seed: u64, tol: f64, r: aslks_core::Result<f64>) {
        let (max_err, detail) = match r {
            Ok(v) => (Some(v), None),
            Err(e) => (None, Some(e.to_string())),
        };
        let ok = matches!(max_err, Some(v) if v <= tol);
        self.0.push(CaseResult {
            name: name.into(),
            status: if ok { Status::Pass } else { Status::Fail },
            max_err,
            tolerance: tol,
            seed,
            detail,
        });
    }

    fn count(&mut self, name: impl Into<String>, seed: u64, r: aslks_core::Result<usize>) {
        self.value(name, seed, 0.0, r.map(|v| v as f64));
    }

    fn grads(&mut self, seed: u64, prefix: &str, r: aslks_core::Result<Vec<GradCheckReport>>) {
        match r {
            Ok(reports) => {
                for g in reports {
                    self.value(format!("grad/{}", g.op_name), seed, g.tolerance, Ok(g.max_rel_err));
                }
            }
            Err(e) => self.value(format!("grad/{prefix}"), seed, GRAD_TOL, Err(e)),
        }
    }
}

/// Equivalence tolerance for the working precision.
pub fn equivalence_tol(dtype: DType) -> f64 {
    match dtype {
        DType::F64 => 1e-12,
        DType::F32 => 1e-5,
    }
}

fn tensor_suite<T: Real>(c: &mut Cases, seed: u64) {
    let tol = equivalence_tol(T::DTYPE);
    c.value("tensor/container_roundtrip", seed, 0.0, checks::container_roundtrip_error::<T>(seed));
    c.count("tensor/shift_zero_fill", seed, Ok(checks::shift_defects(seed)));
    for k in 0..5 {
        let s = seed.wrapping_add(k);
        c.value(format!("conv/oracle_{}", s % 5), s, tol, checks::conv_oracle_error::<T>(s));
    }
    c.grads(seed, "conv2d", checks::conv_grad_reports(seed, GRAD_TOL));
    let b = checks::bilinear_grad_report(seed, GRAD_TOL).map(|r| vec![r]);
    c.grads(seed, "bilinear", b);
}

fn asc_suite<T: Real>(c: &mut Cases, seed: u64, corrupt: bool) {
    for g in [1, 2, 4] {
        for k in [1, 3] {
            c.value(format!("asc/degeneracy_g{g}_k{k}"), seed, 0.0, checks::asc_degeneracy_error::<T>(g, k, seed));
        }
    }
    c.value("asc/oracle", seed, equivalence_tol(T::DTYPE), checks::asc_oracle_error::<T>(seed));
    c.grads(seed, "asc", checks::asc_grad_reports(seed, GRAD_TOL));
    c.value("asc/fixture_roundtrip", seed, 0.0, checks::asc_fixture_error(seed, corrupt));
}

fn lksc_suite<T: Real>(c: &mut Cases, seed: u64) {
    let tol = equivalence_tol(T::DTYPE);
    c.count("lksc/tile_count_51_5", seed, checks::lksc_tile_count(51, 5).map(|n| n.abs_diff(11)));
    let dims = Dims4::new(2, 4, 64, 64);
    for (kind, label) in [
        (BranchKind::Vertical, "51x5"),
        (BranchKind::Horizontal, "5x51"),
        (BranchKind::Core, "5x5"),
    ] {
        let r = checks::lksc_branch_error::<T>(kind, 51, 5, dims, seed);
        c.value(format!("lksc/equivalence_{label}"), seed, tol, r);
    }
    for (kind, label) in [(BranchKind::Vertical, "7x5"), (BranchKind::Horizontal, "5x7")] {
        let r = checks::lksc_branch_error::<T>(kind, 7, 5, Dims4::new(1, 3, 13, 11), seed);
        c.value(format!("lksc/equivalence_{label}"), seed, tol, r);
    }
    c.count("lksc/reassembly", seed, checks::lksc_reassembly_defects(seed));
    c.grads(seed, "lksc", checks::lksc_grad_reports(seed, GRAD_TOL));
}

fn c2f_suite<T: Real>(c: &mut Cases, seed: u64) {
    for n in 1..=3 {
        let w = checks::ascm_concat_width(32, n, seed).map(|w| w.abs_diff(5 * 32));
        c.count(format!("c2f/ascm_width_n{n}"), seed, w);
    }
    for v in [Variant::Standard, Variant::Ascm, Variant::Lkscm] {
        let r = checks::c2f_composition_error::<T>(v, seed);
        c.value(format!("c2f/composition_{}", v.label()), seed, 0.0, r);
    }
    c.value("cost/branch_ratio_51_5", seed, 1e-4, Ok((checks::branch_ratio_51_5() - 0.2057).abs()));
    let below = checks::lkscm_vs_dense_params().map(|(lk, dense)| if lk < dense { 0 } else { 1 });
    c.count("cost/lkscm_below_dense", seed, below);
}

fn metrics_suite(c: &mut Cases, seed: u64) {
    c.value("metrics/oracle_200", seed, 1e-12, checks::map50_oracle_error(seed, 200));
    c.value("metrics/hand_two_class", seed, 1e-12, checks::hand_map_value().map(|v| (v - 0.75).abs()));
}

fn run_typed<T: Real>(suite: Suite, seed: u64, corrupt: Option<&str>) -> Vec<CaseResult> {
    let mut c = Cases::default();
    let want = |s: Suite| suite == Suite::All || suite == s;
    if want(Suite::Tensor) {
        tensor_suite::<T>(&mut c, seed);
    }
    if want(Suite::Asc) {
        asc_suite::<T>(&mut c, seed, corrupt == Some("asc"));
    }
    if want(Suite::Lksc) {
        lksc_suite::<T>(&mut c, seed);
    }
    if want(Suite::C2f) {
        c2f_suite::<T>(&mut c, seed);
    }
    if want(Suite::Metrics) {
        metrics_suite(&mut c, seed);
    }
    c.0
}

/// Runs `suite`. `corrupt` names a fixture to damage first (see
/// [`CORRUPT_ENV`]).
pub fn run(suite: Suite, seed: u64, dtype: DType, corrupt: Option<&str>) -> VerifyReport {
    let cases = match dtype {
        DType::F32 => run_typed::<f32>(suite, seed, corrupt),
        DType::F64 => run_typed::<f64>(suite, seed, corrupt),
    };
    VerifyReport {
        suite,
        seed,
        dtype,
        version: env!("CARGO_PKG_VERSION").to_string(),
        pass: cases.iter().all(|c| c.status == Status::Pass),
        cases,
    }
}
