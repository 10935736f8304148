use aslks_core::metrics::{map50, BBox, Detection, GroundTruth, ImageId};
use aslks_core::oracle::map50_exhaustive;
use proptest::prelude::*;

fn bbox() -> impl Strategy<Value = BBox> {
    (0u8..8, 0u8..8, 1u8..5, 1u8..5)
        .prop_map(|(x, y, w, h)| BBox::new(x as f64, y as f64, (x + w) as f64, (y + h) as f64).unwrap())
}

fn gts() -> impl Strategy<Value = Vec<GroundTruth>> {
    prop::collection::vec((0i64..3, 0usize..2, bbox()), 0..6).prop_map(|v| {
        v.into_iter()
            .map(|(i, c, b)| GroundTruth { image_id: ImageId::Int(i), class_id: c, bbox: b })
            .collect()
    })
}

fn dets() -> impl Strategy<Value = Vec<Detection>> {
    prop::collection::vec((0i64..3, 0usize..2, bbox(), 0u8..=10), 0..7).prop_map(|v| {
        v.into_iter()
            .map(|(i, c, b, s)| Detection { image_id: ImageId::Int(i), class_id: c, bbox: b, confidence: s as f64 / 10.0 })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn greedy_matching_agrees_with_exhaustive(d in dets(), g in gts()) {
        let fast = map50(&d, &g, 2).unwrap();
        let (slow, per_class) = map50_exhaustive(&d, &g, 2);
        prop_assert!((fast.map50 - slow).abs() <= 1e-12);
        for (a, b) in fast.per_class_ap.iter().zip(&per_class) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
        prop_assert!((0.0..=1.0).contains(&fast.map50));
    }
}

#[test]
fn class_without_ground_truth_counts_as_zero() {
    let d = vec![Detection {
        image_id: ImageId::Name("a".into()),
        class_id: 1,
        bbox: BBox::new(0.0, 0.0, 1.0, 1.0).unwrap(),
        confidence: 0.9,
    }];
    let g = vec![GroundTruth { image_id: ImageId::Name("a".into()), class_id: 0, bbox: BBox::new(0.0, 0.0, 1.0, 1.0).unwrap() }];
    let r = map50(&d, &g, 2).unwrap();
    assert_eq!(r.per_class_ap, vec![0.0, 0.0]);
    assert_eq!(r.classes_without_gt, vec![1]);
}

#[test]
fn json_records_parse_with_string_and_int_ids() {
    let text = r#"[{"image_id": 3, "class_id": 0, "box": [0, 0, 2, 2], "confidence": 0.5},
                   {"image_id": "x", "class_id": 1, "box": [1, 1, 2, 3], "confidence": 1.0}]"#;
    let d: Vec<Detection> = serde_json::from_str(text).unwrap();
    assert_eq!(d[0].image_id, ImageId::Int(3));
    assert_eq!(d[1].image_id, ImageId::Name("x".into()));
    assert!(serde_json::from_str::<Vec<Detection>>(r#"[{"image_id": 1, "class_id": 0, "box": [2, 0, 1, 1], "confidence": 0.5}]"#).is_err());
}
