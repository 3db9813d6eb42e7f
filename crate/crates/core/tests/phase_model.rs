use compass::channel::synth_phase;
use compass::dapper::model_jacobian;
use compass::{model_value, unwrap_phase, wrap_half_turn, ChannelParams};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn synth_phase_matches_golden_reference() {
    let golden: Vec<(usize, f64)> = include_str!("golden/synth_phase_reference.txt")
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| {
            let mut it = l.split_whitespace();
            (it.next().unwrap().parse().unwrap(), it.next().unwrap().parse().unwrap())
        })
        .collect();
    assert_eq!(golden.len(), 56);
    let phi = synth_phase(&ChannelParams::REFERENCE, 56, 1.0).unwrap();
    for ((k, want), got) in golden.iter().zip(phi.values()) {
        assert!((got - want).abs() <= 1e-12, "k={k}: {got} vs {want}");
    }
}

#[test]
fn synth_phase_single_subcarrier() {
    let phi = synth_phase(&ChannelParams::REFERENCE, 1, 1.0).unwrap();
    assert_eq!(phi.len(), 1);
    assert!((phi.values()[0] - 0.2117559696780436).abs() < 1e-12);
}

fn random_point(rng: &mut ChaCha8Rng) -> ChannelParams {
    let base = ChannelParams::REFERENCE.to_array();
    ChannelParams::from_array(std::array::from_fn(|i| base[i] * rng.random_range(0.8..1.2)))
}

/// Central differences against the analytic Jacobian on every subcarrier.
#[test]
fn jacobian_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0f64;
    for _ in 0..100 {
        let p = random_point(&mut rng);
        let jac = model_jacobian(&p, 56, 1.0).unwrap();
        for (k, row) in jac.iter().enumerate() {
            for j in 0..5 {
                let x = p.to_array();
                let h = 1e-6 * x[j].abs().max(1e-3);
                let mut hi = x;
                let mut lo = x;
                hi[j] += h;
                lo[j] -= h;
                let f = |v: [f64; 5]| model_value(&ChannelParams::from_array(v), k + 1, 1.0).unwrap();
                let fd = (f(hi) - f(lo)) / (2.0 * h);
                let scale = row[j].abs().max(1.0);
                let rel = (fd - row[j]).abs() / scale;
                worst = worst.max(rel);
            }
        }
    }
    assert!(worst < 1e-5, "worst relative error {worst}");
}

proptest! {
    #[test]
    fn unwrap_keeps_steps_within_pi(values in prop::collection::vec(-10.0f64..10.0, 1..80)) {
        let un = unwrap_phase(&values);
        prop_assert_eq!(un.len(), values.len());
        for w in un.windows(2) {
            prop_assert!((w[1] - w[0]).abs() <= std::f64::consts::PI + 1e-9);
        }
        for (u, v) in un.iter().zip(&values) {
            let turns = (u - v) / (2.0 * std::f64::consts::PI);
            prop_assert!((turns - turns.round()).abs() < 1e-9);
        }
    }

    #[test]
    fn wrap_half_turn_is_idempotent(x in -100.0f64..100.0) {
        let w = wrap_half_turn(x);
        prop_assert!((wrap_half_turn(w) - w).abs() < 1e-12);
    }
}
