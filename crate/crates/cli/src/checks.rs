//! Measurement routines shared by `verify` and the acceptance tests. Each one
//! builds a seeded instance, runs a fast path against its reference and
//! returns the observed error; deciding pass or fail is left to the caller.

use aslks_core::asc::{asc_backward, asc_block_forward, asc_forward, AscFields, AscParams, AscSpec};
use aslks_core::c2f::{C2fBlock, C2fConfig, Units, Variant};
use aslks_core::conv::{conv2d_backward, conv2d_direct, ConvParams, ConvSpec};
use aslks_core::cost::{compare_stack, BranchAccounting};
use aslks_core::gradcheck::{compare_grads, finite_diff_grad, GradCheckReport, DEFAULT_STEP};
use aslks_core::lksc::{
    branch_direct, lksc_backward, lksc_forward, plan_lksc, shift_conv_forward, BranchKind, BranchPlan, LkscPlan,
    LkscSpec,
};
use aslks_core::metrics::{map50, BBox, Detection, GroundTruth, ImageId};
use aslks_core::oracle::{asc_bruteforce, conv2d_bruteforce, map50_exhaustive};
use aslks_core::rng::SeededRng;
use aslks_core::sample::{bilinear_sample, bilinear_taps, shift2d};
use aslks_core::{Dims4, Real, Result, Tensor4};

/// Minimum distance of every sampling position used in gradient fixtures
/// from the bilinear lattice lines.
pub const KINK_MARGIN: f64 = 1e-3;

/// Strip or core kernel with weights uniform in `±1/sqrt(rows·cols)`, the
/// usual fan-in scale, so outputs stay of order one.
pub fn random_branch<T: Real>(
    kind: BranchKind,
    channels: usize,
    kernel: usize,
    tile: usize,
    rng: &mut SeededRng,
) -> Result<BranchPlan<T>> {
    let (rows, cols) = match kind {
        BranchKind::Vertical => (kernel, tile),
        BranchKind::Horizontal => (tile, kernel),
        BranchKind::Core => (tile, tile),
    };
    let bound = 1.0 / ((rows * cols) as f64).sqrt();
    let w = (0..channels * rows * cols).map(|_| T::lit(rng.uniform(-bound, bound))).collect();
    BranchPlan::new(kind, channels, tile, rows, cols, w)
}

/// Max |shift-decomposed − direct padded-kernel| for one branch.
pub fn lksc_branch_error<T: Real>(kind: BranchKind, kernel: usize, tile: usize, dims: Dims4, seed: u64) -> Result<f64> {
    let mut rng = SeededRng::new(seed);
    let branch = random_branch::<T>(kind, dims.c, kernel, tile, &mut rng)?;
    let x = Tensor4::<T>::random(dims, -1.0, 1.0, &mut rng);
    shift_conv_forward(&x, &branch)?.max_abs_diff(&branch_direct(&x, &branch)?)
}

pub fn lksc_tile_count(kernel: usize, tile: usize) -> Result<usize> {
    let spec = LkscSpec::new(1, kernel, tile);
    let mut rng = SeededRng::new(0);
    let plan = LkscPlan::<f64>::random(spec, 1.0, &mut rng)?;
    Ok(plan.vertical().tiles.len())
}

/// Number of mismatching elements between reassembled tiles and the padded
/// kernels, plus non-zero padding entries.
pub fn lksc_reassembly_defects(seed: u64) -> Result<usize> {
    let mut rng = SeededRng::new(seed);
    let plan = LkscPlan::<f64>::random(LkscSpec::new(3, 51, 5), 1.0, &mut rng)?;
    let mut bad = 0;
    for b in &plan.branches {
        bad += b.reassemble().iter().zip(&b.padded).filter(|(a, p)| a.to_bits() != p.to_bits()).count();
        for c in 0..b.channels {
            for u in 0..b.padded_rows {
                for q in 0..b.padded_cols {
                    let v = b.padded[(c * b.padded_rows + u) * b.padded_cols + q];
                    if (u >= b.rows || q >= b.cols) && v != 0.0 {
                        bad += 1;
                    }
                }
            }
        }
    }
    Ok(bad)
}

fn random_conv_case(seed: u64) -> (ConvSpec, Dims4) {
    let cases = [
        (ConvSpec::new(4, 6, 3, 3).same_padding().with_bias(true), Dims4::new(2, 4, 7, 6)),
        (ConvSpec::new(4, 4, 3, 3).with_padding(1, 1).with_groups(2).with_bias(true), Dims4::new(1, 4, 6, 6)),
        (ConvSpec::new(3, 6, 3, 2).with_stride(2).with_padding(1, 0).with_groups(3).with_bias(true), Dims4::new(2, 3, 7, 8)),
        (ConvSpec::new(4, 4, 5, 5).same_padding().with_groups(4).with_bias(true), Dims4::new(1, 4, 6, 7)),
        (ConvSpec::new(2, 3, 1, 1).with_bias(true), Dims4::new(2, 2, 4, 4)),
    ];
    cases[(seed % cases.len() as u64) as usize]
}

/// Max |conv2d_direct − nested-loop reference| over a seeded instance.
pub fn conv_oracle_error<T: Real>(seed: u64) -> Result<f64> {
    let mut rng = SeededRng::new(seed);
    let (spec, dims) = random_conv_case(seed);
    let p = ConvParams::<T>::random(spec, 1.0, &mut rng)?;
    let x = Tensor4::<T>::random(dims, -1.0, 1.0, &mut rng);
    conv2d_direct(&x, &p)?.max_abs_diff(&conv2d_bruteforce(&x, &p)?)
}

/// Container round trip; returns the max abs difference (0 when lossless).
pub fn container_roundtrip_error<T: Real>(seed: u64) -> Result<f64> {
    let mut rng = SeededRng::new(seed);
    let x = Tensor4::<T>::random([2, 3, 5, 4], -1e3, 1e3, &mut rng);
    let back = Tensor4::<T>::from_bytes(&x.to_bytes())?;
    Ok(if back.to_bytes() == x.to_bytes() { 0.0 } else { f64::INFINITY })
}

/// Elements where `shift(shift(x, d), -d)` disagrees with `x` masked to the
/// surviving window.
pub fn shift_defects(seed: u64) -> usize {
    let mut rng = SeededRng::new(seed);
    let x = Tensor4::<f64>::random([1, 2, 9, 7], -1.0, 1.0, &mut rng);
    let mut bad = 0;
    for _ in 0..8 {
        let dy = rng.below(13) as isize - 6;
        let dx = rng.below(11) as isize - 5;
        let back = shift2d(&shift2d(&x, dy, dx), -dy, -dx);
        for c in 0..2 {
            for i in 0..9isize {
                for j in 0..7isize {
                    let kept = (0..9).contains(&(i + dy)) && (0..7).contains(&(j + dx));
                    let want = if kept { x.at(0, c, i as usize, j as usize) } else { 0.0 };
                    if back.at(0, c, i as usize, j as usize) != want {
                        bad += 1;
                    }
                }
            }
        }
    }
    bad
}

/// Random fields whose sampling positions stay at least [`KINK_MARGIN`]
/// away from lattice lines: integer offset plus a fraction in `[0.05, 0.95]`.
pub fn off_lattice_fields<T: Real>(spec: &AscSpec, out: Dims4, rng: &mut SeededRng) -> AscFields<T> {
    let offsets = Tensor4::from_fn([out.n, spec.offset_channels(), out.h, out.w], |_, _, _, _| {
        let whole = rng.below(5) as f64 - 2.0;
        T::lit(whole + rng.uniform(0.05, 0.95))
    });
    let modulation = Tensor4::from_fn([out.n, spec.modulation_channels(), out.h, out.w], |_, _, _, _| {
        T::lit(rng.uniform(0.05, 0.95))
    });
    AscFields::new(offsets, modulation).expect("valid fields")
}

/// Unrestricted random fields: offsets in `[-3, 3]`, modulation in `[0, 1]`.
pub fn random_fields<T: Real>(spec: &AscSpec, out: Dims4, rng: &mut SeededRng) -> AscFields<T> {
    let offsets = Tensor4::random([out.n, spec.offset_channels(), out.h, out.w], -3.0, 3.0, rng);
    let modulation = Tensor4::random([out.n, spec.modulation_channels(), out.h, out.w], 0.0, 1.0, rng);
    AscFields::new(offsets, modulation).expect("valid fields")
}

/// Max |ASC with zero offsets and unit modulation − grouped conv|.
pub fn asc_degeneracy_error<T: Real>(groups: usize, kernel: usize, seed: u64) -> Result<f64> {
    let mut rng = SeededRng::new(seed);
    let spec = AscSpec::same(4, 8, kernel, groups);
    let p = AscParams::<T>::random(spec, 0.5, &mut rng)?;
    let x = Tensor4::<T>::random([2, 4, 7, 6], -1.0, 1.0, &mut rng);
    let out = spec.output_dims(x.dims())?;
    let fields = AscFields::uniform(&spec, out, T::zero(), T::zero(), T::one());
    asc_forward(&x, &p, &fields)?.max_abs_diff(&conv2d_direct(&x, &p.base_conv())?)
}

/// ASC configurations with `h, w ≤ 8` used for oracle comparison.
pub fn asc_oracle_specs() -> Vec<(AscSpec, Dims4)> {
    let mut v = Vec::new();
    for &(groups, c_in, c_out) in &[(1, 2, 3), (2, 4, 4), (4, 4, 8)] {
        for &k in &[1usize, 3, 5] {
            v.push((AscSpec::same(c_in, c_out, k, groups), Dims4::new(2, c_in, 8, 7)));
        }
    }
    let strided = AscSpec { stride: 2, ..AscSpec::same(2, 4, 3, 2) };
    v.push((strided, Dims4::new(1, 2, 8, 8)));
    let narrow = AscSpec { pad_h: 0, pad_w: 0, ..AscSpec::same(3, 3, 3, 1) };
    v.push((narrow, Dims4::new(1, 3, 6, 5)));
    v.push((AscSpec::same(1, 1, 3, 1), Dims4::new(1, 1, 1, 1)));
    v
}

/// Max |asc_forward − nested-loop reference| over every configuration of
/// [`asc_oracle_specs`], with explicit random fields and with generated ones.
pub fn asc_oracle_error<T: Real>(seed: u64) -> Result<f64> {
    let mut rng = SeededRng::new(seed);
    let mut worst = 0.0f64;
    for (spec, dims) in asc_oracle_specs() {
        let p = AscParams::<T>::random(spec, 0.5, &mut rng)?;
        let x = Tensor4::<T>::random(dims, -1.0, 1.0, &mut rng);
        let out = spec.output_dims(dims)?;
        let explicit = random_fields(&spec, out, &mut rng);
        let generated = aslks_core::asc::asc_generate_fields(&x, &p)?;
        for f in [&explicit, &generated] {
            let err = asc_forward(&x, &p, f)?.max_abs_diff(&asc_bruteforce(&x, &spec, &p.base_weights, f)?)?;
            worst = worst.max(err);
        }
    }
    Ok(worst)
}

/// ASC block output before and after an `ASC1` container round trip. With
/// `corrupt` set, the first base weight is bumped by 1.0 inside the bytes.
pub fn asc_fixture_error(seed: u64, corrupt: bool) -> Result<f64> {
    let mut rng = SeededRng::new(seed);
    let spec = AscSpec::same(4, 4, 3, 2);
    let p = AscParams::<f64>::random(spec, 0.5, &mut rng)?;
    let mut bytes = p.to_bytes();
    if corrupt {
        let at = aslks_core::asc::ASC_HEADER_LEN + aslks_core::tensor::HEADER_LEN;
        let v = f64::from_le_bytes(bytes[at..at + 8].try_into().expect("8 bytes")) + 1.0;
        bytes[at..at + 8].copy_from_slice(&v.to_le_bytes());
    }
    let loaded = AscParams::<f64>::from_bytes(&bytes)?;
    let x = Tensor4::random([1, 4, 6, 6], -1.0, 1.0, &mut rng);
    asc_block_forward(&x, &p)?.max_abs_diff(&asc_block_forward(&x, &loaded)?)
}

/// `<f(θ), r>` gradient check where `f` is evaluated through `eval`.
fn check(
    name: &str,
    theta: &[f64],
    analytic: Vec<f64>,
    tol: f64,
    mut eval: impl FnMut(&[f64]) -> Result<f64>,
) -> Result<GradCheckReport> {
    let mut failure = None;
    let numeric = finite_diff_grad(
        |t| match eval(t) {
            Ok(v) => v,
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        },
        theta,
        DEFAULT_STEP,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    compare_grads(name, &numeric?, &analytic, tol, DEFAULT_STEP)
}

/// `<y, r>` with Neumaier-compensated summation. A perturbation of one
/// coordinate then changes the objective only through the outputs it touches
/// instead of through the rounding of every later partial sum.
pub fn compensated_dot(y: &Tensor4<f64>, r: &Tensor4<f64>) -> Result<f64> {
    y.ensure_same_dims(r, "compensated_dot")?;
    let (mut sum, mut carry) = (0.0f64, 0.0f64);
    for (a, b) in y.data().iter().zip(r.data()) {
        let v = a * b;
        let t = sum + v;
        carry += if sum.abs() >= v.abs() { (sum - t) + v } else { (v - t) + sum };
        sum = t;
    }
    Ok(sum + carry)
}

fn with_data(t: &Tensor4<f64>, data: &[f64]) -> Tensor4<f64> {
    Tensor4::from_vec(t.dims(), data.to_vec()).expect("same length")
}

/// Gradient checks of conv2d with respect to input, weights and bias.
pub fn conv_grad_reports(seed: u64, tol: f64) -> Result<Vec<GradCheckReport>> {
    let mut rng = SeededRng::new(seed);
    let (spec, dims) = random_conv_case(seed);
    let p = ConvParams::<f64>::random(spec, 1.0, &mut rng)?;
    let x = Tensor4::<f64>::random(dims, -1.0, 1.0, &mut rng);
    let r = Tensor4::<f64>::random(spec.output_dims(dims)?, -1.0, 1.0, &mut rng);
    let g = conv2d_backward(&x, &p, &r)?;
    let loss = |x: &Tensor4<f64>, p: &ConvParams<f64>| compensated_dot(&conv2d_direct(x, p)?, &r);
    let bias = p.bias.clone().expect("bias");
    Ok(vec![
        check("conv2d/x", x.data(), g.grad_x.data().to_vec(), tol, |t| loss(&with_data(&x, t), &p))?,
        check("conv2d/w", &p.weights, g.grad_w.clone(), tol, |t| {
            loss(&x, &ConvParams::new(spec, t.to_vec(), p.bias.clone())?)
        })?,
        check("conv2d/b", &bias, g.grad_b.clone().expect("bias"), tol, |t| {
            loss(&x, &ConvParams::new(spec, p.weights.clone(), Some(t.to_vec()))?)
        })?,
    ])
}

/// Gradient check of bilinear sampling with respect to the sampling
/// positions, all kept off the lattice.
pub fn bilinear_grad_report(seed: u64, tol: f64) -> Result<GradCheckReport> {
    let mut rng = SeededRng::new(seed);
    let x = Tensor4::<f64>::random([1, 2, 6, 7], -1.0, 1.0, &mut rng);
    let n_pts = 24;
    let mut theta = Vec::with_capacity(2 * n_pts);
    for _ in 0..n_pts {
        // Integer part in [-1, 6] so some points straddle the zero border.
        theta.push(rng.below(8) as f64 - 1.0 + rng.uniform(0.05, 0.95));
        theta.push(rng.below(9) as f64 - 1.0 + rng.uniform(0.05, 0.95));
    }
    let weights: Vec<f64> = rng.uniform_vec(n_pts, -1.0, 1.0);
    let chan: Vec<usize> = (0..n_pts).map(|_| rng.below(2)).collect();
    let mut analytic = Vec::with_capacity(theta.len());
    for k in 0..n_pts {
        let t = bilinear_taps(&x, 0, chan[k], theta[2 * k], theta[2 * k + 1]);
        analytic.push(weights[k] * t.d_py);
        analytic.push(weights[k] * t.d_px);
    }
    check("bilinear/position", &theta, analytic, tol, |t| {
        Ok((0..n_pts).map(|k| weights[k] * bilinear_sample(&x, 0, chan[k], t[2 * k], t[2 * k + 1])).sum())
    })
}

/// Gradient checks of ASC with respect to input, base weights, offsets and
/// modulation on `(1, 2, 6, 6)`, two groups, 3×3 kernel.
pub fn asc_grad_reports(seed: u64, tol: f64) -> Result<Vec<GradCheckReport>> {
    let mut rng = SeededRng::new(seed);
    let spec = AscSpec::same(2, 2, 3, 2);
    let p = AscParams::<f64>::random(spec, 0.5, &mut rng)?;
    let x = Tensor4::<f64>::random([1, 2, 6, 6], -1.0, 1.0, &mut rng);
    let out = spec.output_dims(x.dims())?;
    let f = off_lattice_fields::<f64>(&spec, out, &mut rng);
    let r = Tensor4::<f64>::random(out, -1.0, 1.0, &mut rng);
    let g = asc_backward(&x, &p, &f, &r)?;
    let loss = |x: &Tensor4<f64>, p: &AscParams<f64>, f: &AscFields<f64>| compensated_dot(&asc_forward(x, p, f)?, &r);
    Ok(vec![
        check("asc/x", x.data(), g.grad_x.data().to_vec(), tol, |t| loss(&with_data(&x, t), &p, &f))?,
        check("asc/base_weights", &p.base_weights, g.grad_base_weights.clone(), tol, |t| {
            let mut q = p.clone();
            q.base_weights = t.to_vec();
            loss(&x, &q, &f)
        })?,
        check("asc/offsets", f.offsets.data(), g.grad_offsets.data().to_vec(), tol, |t| {
            let fields = AscFields { offsets: with_data(&f.offsets, t), modulation: f.modulation.clone() };
            loss(&x, &p, &fields)
        })?,
        check("asc/modulation", f.modulation.data(), g.grad_modulation.data().to_vec(), tol, |t| {
            let fields = AscFields { offsets: f.offsets.clone(), modulation: with_data(&f.modulation, t) };
            loss(&x, &p, &fields)
        })?,
    ])
}

/// Gradient checks of the full LKSC unit on `(1, 2, 12, 12)`, kernel 7,
/// tile 5: input, branch weights and pointwise parameters.
pub fn lksc_grad_reports(seed: u64, tol: f64) -> Result<Vec<GradCheckReport>> {
    let mut rng = SeededRng::new(seed);
    let spec = LkscSpec::new(2, 7, 5);
    let plan = LkscPlan::<f64>::random(spec, 0.3, &mut rng)?;
    let x = Tensor4::<f64>::random([1, 2, 12, 12], -1.0, 1.0, &mut rng);
    let r = Tensor4::<f64>::random(x.dims(), -1.0, 1.0, &mut rng);
    let g = lksc_backward(&x, &plan, &r)?;

    let lens: Vec<usize> = plan.branches.iter().map(|b| b.weights.len()).collect();
    let branch_theta: Vec<f64> = plan.branches.iter().flat_map(|b| b.weights.iter().copied()).collect();
    let branch_grad: Vec<f64> = g.grad_branch_weights.iter().flatten().copied().collect();
    let rebuild = |t: &[f64]| -> Result<LkscPlan<f64>> {
        let (v, rest) = t.split_at(lens[0]);
        let (h, c) = rest.split_at(lens[1]);
        plan_lksc(spec, v.to_vec(), h.to_vec(), c.to_vec())?
            .with_pointwise(plan.pointwise.clone())?
            .with_bn(plan.bn.clone())
    };
    let pw_len = plan.pointwise.weights.len();
    let pw_theta: Vec<f64> = plan
        .pointwise
        .weights
        .iter()
        .chain(plan.pointwise.bias.as_ref().expect("bias"))
        .copied()
        .collect();
    let pw_grad: Vec<f64> = g.grad_pointwise_w.iter().chain(&g.grad_pointwise_b).copied().collect();

    Ok(vec![
        check("lksc/x", x.data(), g.grad_x.data().to_vec(), tol, |t| compensated_dot(&lksc_forward(&with_data(&x, t), &plan)?, &r))?,
        check("lksc/branch_weights", &branch_theta, branch_grad, tol, |t| compensated_dot(&lksc_forward(&x, &rebuild(t)?)?, &r))?,
        check("lksc/pointwise", &pw_theta, pw_grad, tol, |t| {
            let (w, b) = t.split_at(pw_len);
            let pw = ConvParams::new(plan.pointwise.spec, w.to_vec(), Some(b.to_vec()))?;
            compensated_dot(&lksc_forward(&x, &plan.clone().with_pointwise(pw)?)?, &r)
        })?,
    ])
}

/// Executed pre-head concat width of a faithful ASCM block.
pub fn ascm_concat_width(c_prime: usize, n: usize, seed: u64) -> Result<usize> {
    let mut rng = SeededRng::new(seed);
    let cfg = C2fConfig::new(Variant::Ascm, 2 * c_prime, 2 * c_prime).with_hidden(c_prime).with_n(n);
    let block = C2fBlock::<f64>::random(cfg, &mut rng)?;
    let x = Tensor4::random([1, cfg.c_in, 6, 6], -1.0, 1.0, &mut rng);
    let y = block.forward(&x)?;
    if y.dims() != x.dims() {
        return Ok(0);
    }
    Ok(block.concat(&x)?.c())
}

/// Max |block.forward − explicit composition of stem, units, concat, head|.
pub fn c2f_composition_error<T: Real>(variant: Variant, seed: u64) -> Result<f64> {
    let mut rng = SeededRng::new(seed);
    let cfg = C2fConfig::new(variant, 6, 8).with_n(2).with_kernel(
        if variant == Variant::Lkscm { 7 } else { 3 },
        5,
    );
    let block = C2fBlock::<T>::random(cfg, &mut rng)?;
    let x = Tensor4::<T>::random([1, 6, 9, 8], -1.0, 1.0, &mut rng);
    let c = cfg.hidden();
    let conv_x = block.stem.forward(&x)?;
    let (x1, x2) = (conv_x.narrow_channels(0, c)?, conv_x.narrow_channels(c, c)?);
    let mut outs = Vec::new();
    let mut cur = x2.clone();
    for i in 0..cfg.n {
        cur = match &block.units {
            Units::Bottlenecks(u) => cur.add(&u[i].cv2.forward(&u[i].cv1.forward(&cur)?)?)?,
            Units::Asc(u) => asc_block_forward(&cur, &u[i])?,
            Units::Lksc(u) => cur.add(&lksc_forward(&cur, &u[i])?)?,
        };
        outs.push(cur.clone());
    }
    let cat = if variant == Variant::Ascm {
        Tensor4::concat_channels(&[&x1, &conv_x, &outs[0], &outs[cfg.n - 1]])?
    } else {
        let mut parts = vec![&x1, &x2];
        parts.extend(outs.iter());
        Tensor4::concat_channels(&parts)?
    };
    block.head.forward(&cat)?.max_abs_diff(&block.forward(&x)?)
}

/// Reported branch-parameter ratio for kernel 51, tile 5.
pub fn branch_ratio_51_5() -> f64 {
    BranchAccounting::of(&LkscSpec::new(32, 51, 5)).ratio
}

/// `(lkscm params, dense-51×51 params)` for one LKSCM C2f at `c′ = 32` on a
/// 64×64 input.
pub fn lkscm_vs_dense_params() -> Result<(u64, u64)> {
    let cfg = C2fConfig::new(Variant::Lkscm, 64, 64).with_hidden(32).with_kernel(51, 5);
    let cmp = compare_stack(&[cfg], Dims4::new(1, 64, 64, 64))?;
    Ok((cmp.configured.total_params, cmp.dense_large_kernel.total_params))
}

/// Small random detection problem: up to 3 classes, 1–2 images, at most 5
/// detections and 3 ground truths per class. Boxes sit on a coarse grid and
/// confidences on tenths, so IoU ties, exact 0.5 overlaps and equal scores
/// all occur.
pub fn random_detection_instance(rng: &mut SeededRng) -> (Vec<Detection>, Vec<GroundTruth>, usize) {
    let n_classes = 1 + rng.below(3);
    let n_images = 1 + rng.below(2);
    let boxes = |rng: &mut SeededRng| {
        let x1 = rng.below(4) as f64;
        let y1 = rng.below(4) as f64;
        let w = 1.0 + rng.below(3) as f64;
        let h = 1.0 + rng.below(3) as f64;
        BBox::new(x1, y1, x1 + w, y1 + h).expect("positive size")
    };
    let (mut dets, mut gts) = (Vec::new(), Vec::new());
    for class_id in 0..n_classes {
        for _ in 0..rng.below(4) {
            let image_id = ImageId::Int(rng.below(n_images) as i64);
            gts.push(GroundTruth { image_id, class_id, bbox: boxes(rng) });
        }
        for _ in 0..rng.below(6) {
            let image_id = ImageId::Int(rng.below(n_images) as i64);
            let confidence = (1 + rng.below(10)) as f64 / 10.0;
            dets.push(Detection { image_id, class_id, bbox: boxes(rng), confidence });
        }
    }
    (dets, gts, n_classes)
}

/// Max |map50 − exhaustive oracle| over mAP and per-class AP, across
/// `instances` random problems.
pub fn map50_oracle_error(seed: u64, instances: usize) -> Result<f64> {
    let mut rng = SeededRng::new(seed);
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let (d, g, n) = random_detection_instance(&mut rng);
        let got = map50(&d, &g, n)?;
        let (want, per) = map50_exhaustive(&d, &g, n);
        worst = worst.max((got.map50 - want).abs());
        for (a, b) in got.per_class_ap.iter().zip(&per) {
            worst = worst.max((a - b).abs());
        }
    }
    Ok(worst)
}

/// Two classes: one detected perfectly, one with a false positive ranked
/// above the only true positive (AP 0.5).
pub fn hand_map_fixture() -> (Vec<Detection>, Vec<GroundTruth>) {
    let b = |x: f64| BBox::new(x, 0.0, x + 10.0, 10.0).expect("box");
    let gts = vec![
        GroundTruth { image_id: ImageId::Int(0), class_id: 0, bbox: b(0.0) },
        GroundTruth { image_id: ImageId::Int(0), class_id: 1, bbox: b(50.0) },
    ];
    let dets = vec![
        Detection { image_id: ImageId::Int(0), class_id: 0, bbox: b(0.0), confidence: 0.9 },
        Detection { image_id: ImageId::Int(0), class_id: 1, bbox: b(100.0), confidence: 0.8 },
        Detection { image_id: ImageId::Int(0), class_id: 1, bbox: b(50.0), confidence: 0.7 },
    ];
    (dets, gts)
}

pub fn hand_map_value() -> Result<f64> {
    let (d, g) = hand_map_fixture();
    Ok(map50(&d, &g, 2)?.map50)
}
