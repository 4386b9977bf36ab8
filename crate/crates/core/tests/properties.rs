use chrono::NaiveDate;
use mbsr_core::array::Array2;
use mbsr_core::grid::{decode_bgrid, encode_bgrid, EmissionGrid};
use mbsr_core::interconnection::pcc;
use mbsr_core::metrics::{error_map, nmse_db};
use mbsr_core::transform::QuantileTransform;
use proptest::prelude::*;

fn array(max_side: usize, lo: f64, hi: f64) -> impl Strategy<Value = Array2> {
    (1..=max_side, 1..=max_side).prop_flat_map(move |(r, c)| {
        prop::collection::vec(lo..hi, r * c).prop_map(move |v| Array2::from_vec(r, c, v).unwrap())
    })
}

fn pair(side: usize) -> impl Strategy<Value = (Array2, Array2)> {
    (2..=side, 2..=side).prop_flat_map(|(r, c)| {
        let v = || prop::collection::vec(-10.0f64..10.0, r * c);
        (v(), v()).prop_map(move |(a, b)| (Array2::from_vec(r, c, a).unwrap(), Array2::from_vec(r, c, b).unwrap()))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bgrid_round_trip(values in array(24, 0.0, 1e-9), day in 1u32..28, res in 0.01f64..2.0) {
        let date = NaiveDate::from_ymd_opt(2010, 3, day).unwrap();
        let g = EmissionGrid::new("c", date, res, res * 2.0, values).unwrap();
        let back = decode_bgrid(&encode_bgrid(&g)).unwrap();
        prop_assert_eq!(back, g);
    }

    #[test]
    fn transform_is_monotone(
        fit in prop::collection::vec(prop_oneof![Just(0.0), 0.0f64..1e-9], 20..400),
        mut probe in prop::collection::vec(0.0f64..1.2e-9, 2..100),
    ) {
        let t = QuantileTransform::fit(fit, 50, "c").unwrap();
        probe.sort_by(f64::total_cmp);
        let u = t.apply(&probe).unwrap();
        prop_assert!(u.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(u.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn pcc_is_affine_invariant((a, b) in pair(12), k in 0.1f64..50.0, c in -100.0f64..100.0) {
        let scaled = b.map(|v| k * v + c);
        match (pcc(&a, &b).unwrap(), pcc(&a, &scaled).unwrap()) {
            (Some(x), Some(y)) => prop_assert!((x - y).abs() <= 1e-9, "{x} vs {y}"),
            (None, None) => {}
            other => prop_assert!(false, "{other:?}"),
        }
        let flipped = b.map(|v| -k * v + c);
        if let (Some(x), Some(y)) = (pcc(&a, &b).unwrap(), pcc(&a, &flipped).unwrap()) {
            prop_assert!((x + y).abs() <= 1e-9);
        }
    }

    #[test]
    fn error_map_is_symmetric((a, b) in pair(12)) {
        let ab = error_map(&a, &b).unwrap();
        prop_assert_eq!(&ab, &error_map(&b, &a).unwrap());
        prop_assert!(ab.as_slice().iter().all(|v| *v >= 0.0));
        prop_assert!(error_map(&a, &a).unwrap().as_slice().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn nmse_is_scale_invariant((a, b) in pair(12), k in 1e-12f64..1e3) {
        prop_assume!(a.as_slice().iter().any(|v| *v != 0.0));
        let x = nmse_db(&a, &b).unwrap();
        let y = nmse_db(&a.map(|v| v * k), &b.map(|v| v * k)).unwrap();
        prop_assert!((x - y).abs() <= 1e-9, "{x} vs {y}");
    }
}
