use compass::mow::{quantize_values, window_size, BitString};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

proptest! {
    #[test]
    fn output_length_is_whole_windows(values in prop::collection::vec(-5.0f64..5.0, 1..300), w in 3usize..12) {
        let q = quantize_values(&values, w).unwrap();
        prop_assert_eq!(q.len(), values.len().div_ceil(w) * w);
    }

    #[test]
    fn affine_maps_within_each_window_preserve_bits(
        values in prop::collection::vec(-5.0f64..5.0, 3..120),
        w in 3usize..8,
        scale in prop::collection::vec((0.5f64..4.0, -3.0f64..3.0), 40),
    ) {
        let mapped: Vec<f64> = values
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let (a, b) = scale[(i / w) % scale.len()];
                a * v + b
            })
            .collect();
        let q1 = quantize_values(&values, w).unwrap();
        let q2 = quantize_values(&mapped, w).unwrap();
        prop_assert_eq!(q1, q2);
    }

    #[test]
    fn padding_bits_are_zero(values in prop::collection::vec(-5.0f64..5.0, 1..50), w in 3usize..10) {
        let q = quantize_values(&values, w).unwrap();
        prop_assert!(q.bits()[values.len()..].iter().all(|&b| !b));
    }
}

#[test]
fn affine_exact_on_dyadic_values() {
    let values: Vec<f64> = (0..30).map(|i| ((i * 7) % 11) as f64).collect();
    let mapped: Vec<f64> = values.iter().map(|v| 2.0 * v + 8.0).collect();
    assert_eq!(quantize_values(&values, 5), quantize_values(&mapped, 5));
}

#[test]
fn ones_fraction_on_iid_noise() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let w = 5;
    let values: Vec<f64> = (0..1000 * w).map(|_| StandardNormal.sample(&mut rng)).collect();
    let q = quantize_values(&values, w).unwrap();
    let ones = q.bits().iter().filter(|&&b| b).count() as f64 / q.len() as f64;
    assert!((0.35..=0.65).contains(&ones), "fraction {ones}");
}

#[test]
fn window_from_rtt_and_interval() {
    assert_eq!(window_size(&[2.0e-3, 2.2e-3], 1e-3), Ok(3));
    assert_eq!(window_size(&[4.5e-3], 1e-3), Ok(5));
}

#[test]
fn bit_distance() {
    let a: BitString = "0110".parse().unwrap();
    let b: BitString = "0011".parse().unwrap();
    assert_eq!(a.distance(&b), 2);
    let c: BitString = "011011".parse().unwrap();
    assert_eq!(a.distance(&c), 2);
}
