use aslks_core::lksc::{
    anchored_depthwise_conv, branch_direct, lksc_backward, lksc_forward, lksc_linear, plan_lksc, shift_conv_forward, BranchKind,
    BranchPlan, LkscPlan, LkscSpec,
};
use aslks_core::rng::SeededRng;
use aslks_core::Tensor4;
use proptest::prelude::*;

fn branch(rows: usize, cols: usize, tile: usize, c: usize, rng: &mut SeededRng) -> BranchPlan<f64> {
    let w = rng.uniform_vec(c * rows * cols, -1.0, 1.0);
    BranchPlan::new(BranchKind::Vertical, c, tile, rows, cols, w).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn shifted_tiles_match_direct_kernel(
        tile in prop::sample::select(vec![1usize, 3, 5]),
        extra_r in 0usize..9,
        extra_c in 0usize..9,
        h in 1usize..14,
        w in 1usize..14,
        seed in any::<u64>(),
    ) {
        let mut rng = SeededRng::new(seed);
        let b = branch(tile + extra_r, tile + extra_c, tile, 2, &mut rng);
        let x = Tensor4::<f64>::random([1, 2, h, w], -1.0, 1.0, &mut rng);
        let direct = branch_direct(&x, &b).unwrap();
        let shifted = shift_conv_forward(&x, &b).unwrap();
        prop_assert!(direct.max_abs_diff(&shifted).unwrap() <= 1e-12);
    }

    #[test]
    fn tiles_cover_kernel_once(rows in 5usize..30, cols in 5usize..30, seed in any::<u64>()) {
        let mut rng = SeededRng::new(seed);
        let b = branch(rows, cols, 5, 1, &mut rng);
        let (tr, tc) = b.tile_grid();
        prop_assert_eq!(b.tiles.len(), tr * tc);
        prop_assert_eq!(b.reassemble(), b.padded.clone());
    }
}

#[test]
fn full_unit_matches_dense_equivalent() {
    let mut rng = SeededRng::new(3);
    let plan = LkscPlan::<f64>::random(LkscSpec::new(3, 13, 5), 0.2, &mut rng).unwrap();
    let x = Tensor4::<f64>::random([2, 3, 17, 15], -1.0, 1.0, &mut rng);
    let lin = lksc_linear(&x, &plan).unwrap();
    let (dense, anchor) = plan.dense_equivalent();
    let by_branch = plan
        .branches
        .iter()
        .map(|b| anchored_depthwise_conv(&x, &b.padded_conv(), b.anchor).unwrap())
        .reduce(|a, b| a.add(&b).unwrap())
        .unwrap();
    let by_dense = anchored_depthwise_conv(&x, &dense, anchor).unwrap();
    assert!(by_branch.max_abs_diff(&by_dense).unwrap() < 1e-12);
    let mixed = aslks_core::conv::conv2d_direct(&by_dense, &plan.pointwise).unwrap();
    assert_eq!(lin.dims(), mixed.dims());
}

fn small_plan(rng: &mut SeededRng) -> LkscPlan<f64> {
    let c = 2;
    let wv = rng.uniform_vec(c * 9 * 3, -1.0, 1.0);
    let wh = rng.uniform_vec(c * 3 * 9, -1.0, 1.0);
    let wc = rng.uniform_vec(c * 3 * 3, -1.0, 1.0);
    plan_lksc(LkscSpec::new(c, 9, 3), wv, wh, wc).unwrap()
}

#[test]
fn linear_part_is_linear() {
    let mut rng = SeededRng::new(11);
    let plan = small_plan(&mut rng);
    let a = Tensor4::<f64>::random([1, 2, 10, 8], -1.0, 1.0, &mut rng);
    let b = Tensor4::<f64>::random([1, 2, 10, 8], -1.0, 1.0, &mut rng);
    let lhs = lksc_linear(&a.add(&b.scale(-0.5)).unwrap(), &plan).unwrap();
    let rhs = lksc_linear(&a, &plan).unwrap().add(&lksc_linear(&b, &plan).unwrap().scale(-0.5)).unwrap();
    assert!(lhs.max_abs_diff(&rhs).unwrap() < 1e-12);
}

#[test]
fn input_gradient_matches_directional_difference() {
    let mut rng = SeededRng::new(12);
    let plan = small_plan(&mut rng);
    let x = Tensor4::<f64>::random([1, 2, 10, 8], -1.0, 1.0, &mut rng);
    let g = Tensor4::<f64>::random([1, 2, 10, 8], -1.0, 1.0, &mut rng);
    let v = Tensor4::<f64>::random([1, 2, 10, 8], -1.0, 1.0, &mut rng);
    let f = |t: &Tensor4<f64>| g.dot(&lksc_forward(t, &plan).unwrap()).unwrap();
    let h = 1e-5;
    let fd = (f(&x.add(&v.scale(h)).unwrap()) - f(&x.add(&v.scale(-h)).unwrap())) / (2.0 * h);
    let grads = lksc_backward(&x, &plan, &g).unwrap();
    let analytic = grads.grad_x.dot(&v).unwrap();
    assert!((fd - analytic).abs() <= 1e-6 * (1.0 + analytic.abs()), "{fd} vs {analytic}");
}
