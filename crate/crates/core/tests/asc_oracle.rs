use aslks_core::asc::{asc_forward, asc_generate_fields, AscParams, AscSpec};
use aslks_core::conv::conv2d_direct;
use aslks_core::oracle::{asc_bruteforce, conv2d_bruteforce};
use aslks_core::rng::SeededRng;
use aslks_core::{asc::AscFields, Tensor4};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn generated_fields_match_textbook_sum(
        groups in prop::sample::select(vec![1usize, 2]),
        per_group in 1usize..3,
        kernel in prop::sample::select(vec![1usize, 3, 5]),
        h in 1usize..9,
        w in 1usize..9,
        scale in 0.0f64..3.0,
        seed in any::<u64>(),
    ) {
        let c = groups * per_group;
        let spec = AscSpec::same(c, c, kernel, groups);
        let mut rng = SeededRng::new(seed);
        let p = AscParams::<f64>::random(spec, scale, &mut rng).unwrap();
        let x = Tensor4::<f64>::random([1, c, h, w], -1.0, 1.0, &mut rng);
        let fields = asc_generate_fields(&x, &p).unwrap();
        let fast = asc_forward(&x, &p, &fields).unwrap();
        let slow = asc_bruteforce(&x, &spec, &p.base_weights, &fields).unwrap();
        prop_assert!(fast.max_abs_diff(&slow).unwrap() <= 1e-12);
    }

    #[test]
    fn zero_offsets_full_modulation_is_grouped_conv(
        groups in prop::sample::select(vec![1usize, 2, 4]),
        kernel in prop::sample::select(vec![1usize, 3]),
        seed in any::<u64>(),
    ) {
        let c = 4;
        let spec = AscSpec::same(c, c, kernel, groups);
        let mut rng = SeededRng::new(seed);
        let p = AscParams::<f64>::random(spec, 1.0, &mut rng).unwrap();
        let x = Tensor4::<f64>::random([2, c, 7, 6], -1.0, 1.0, &mut rng);
        let out = spec.output_dims(x.dims()).unwrap();
        let fields = AscFields::uniform(&spec, out, 0.0, 0.0, 1.0);
        let asc = asc_forward(&x, &p, &fields).unwrap();
        let conv = conv2d_direct(&x, &p.base_conv()).unwrap();
        prop_assert_eq!(asc.data(), conv.data());
        let brute = conv2d_bruteforce(&x, &p.base_conv()).unwrap();
        prop_assert_eq!(conv.data(), brute.data());
    }
}

#[test]
fn container_roundtrip_is_bit_exact() {
    let mut rng = SeededRng::new(5);
    let p = AscParams::<f64>::random(AscSpec::same(4, 4, 3, 2), 1.0, &mut rng).unwrap();
    let back = AscParams::<f64>::from_bytes(&p.to_bytes()).unwrap();
    assert_eq!(p, back);
    let mut bad = p.to_bytes();
    bad.truncate(bad.len() - 1);
    assert!(AscParams::<f64>::from_bytes(&bad).is_err());
}
