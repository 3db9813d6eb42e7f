//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::time::Instant;

use compass::channel::{synth_phase, SimConfig};
use compass::dapper::{fit_phase_params, model_jacobian};
use compass::mow::{quantize_values, BitOrigin, BitString};
use compass::passphrase::{derive_psk, estimate_strength, human_style_corpus, Passphrase};
use compass::pinsketch::{recover, sketch, Gf128, BLOCK_PAYLOAD_BITS};
use compass::protocol::{default_identities, run_session, HandshakeOptions, SessionOutcome, SessionStatus};
use compass::{model_value, ChannelParams};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn bits(v: Vec<bool>) -> BitString {
    BitString::new(v, BitOrigin::Quantized).unwrap()
}

fn flip_per_block(q: &[bool], weights: &[usize], rng: &mut ChaCha8Rng) -> Vec<bool> {
    let mut out = q.to_vec();
    for (b, &w) in weights.iter().enumerate() {
        for i in sample(rng, BLOCK_PAYLOAD_BITS, w) {
            out[b * BLOCK_PAYLOAD_BITS + i] ^= true;
        }
    }
    out
}

fn c1_sketch_round_trip() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut failures = 0;
    for _ in 0..10_000 {
        let q: Vec<bool> = (0..168).map(|_| rng.random()).collect();
        let weights: Vec<usize> = (0..3).map(|_| rng.random_range(0..=9)).collect();
        let noisy = flip_per_block(&q, &weights, &mut rng);
        match recover(&bits(noisy), &sketch(&bits(q.clone()))) {
            Ok(r) if r.bits() == &q[..] => {}
            _ => failures += 1,
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        failures == 0 && secs < 10.0,
        format!("10000 cases, {failures} failures, {secs:.2} s"),
    )
}

fn c2_beyond_capability() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut rejected, mut miscorrected, mut silent) = (0, 0, 0);
    for _ in 0..500 {
        let q: Vec<bool> = (0..168).map(|_| rng.random()).collect();
        let noisy = flip_per_block(&q, &[10, 10, 10], &mut rng);
        match recover(&bits(noisy.clone()), &sketch(&bits(q.clone()))) {
            Err(_) => rejected += 1,
            Ok(r) if r.bits() == &noisy[..] || r.bits() == &q[..] => silent += 1,
            Ok(_) => miscorrected += 1,
        }
    }
    verdict(
        silent == 0,
        format!("500 trials: {rejected} reconciliation failures, {miscorrected} detectable mismatches, {silent} silent"),
    )
}

fn c3_field_axioms() -> Verdict {
    let start = Instant::now();
    let all: Vec<Gf128> = (0..128u8).map(|v| Gf128::new(v).unwrap()).collect();
    let mut ok = true;
    for &a in &all {
        ok &= a + Gf128::ZERO == a && a * Gf128::ONE == a && a + a == Gf128::ZERO;
        if !a.is_zero() {
            ok &= a * a.inverse().unwrap() == Gf128::ONE;
        }
        for &b in &all {
            ok &= a + b == b + a && a * b == b * a;
            for &c in &all {
                ok &= (a + b) + c == a + (b + c);
                ok &= (a * b) * c == a * (b * c);
                ok &= a * (b + c) == a * b + a * c;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(ok && secs < 1.0, format!("128 elements, {secs:.3} s"))
}

fn random_truth(rng: &mut ChaCha8Rng) -> ChannelParams {
    let base = ChannelParams::REFERENCE.to_array();
    ChannelParams::from_array(std::array::from_fn(|i| base[i] * rng.random_range(0.8..1.2)))
}

fn oracle_cost(phi: &[f64], p: [f64; 5]) -> f64 {
    let [g, z, th, l, b] = p;
    phi.iter()
        .enumerate()
        .map(|(i, &y)| {
            let c = 2.0 * PI * (i + 1) as f64;
            let d = y - ((g * (c * z + th).sin() / (c * z).cos()).atan() - c * l + b);
            let r = d - PI * (d / PI).round();
            r * r
        })
        .sum()
}

/// Within one cell of the grid minimizer over `(eps_g, zeta, lambda)`.
fn matches_grid_oracle(phi: &[f64], truth: &ChannelParams, fitted: [f64; 5]) -> bool {
    const STEPS: usize = 21;
    let dims = [0usize, 1, 3];
    let t = truth.to_array();
    let half: [f64; 3] = std::array::from_fn(|d| 0.05 * t[dims[d]].abs());
    let cell: [f64; 3] = std::array::from_fn(|d| 2.0 * half[d] / (STEPS - 1) as f64);
    let mut best = (f64::INFINITY, [0.0; 3]);
    for i in 0..STEPS {
        for j in 0..STEPS {
            for k in 0..STEPS {
                let at = [i, j, k];
                let mut p = fitted;
                let mut sub = [0.0; 3];
                for d in 0..3 {
                    sub[d] = t[dims[d]] - half[d] + at[d] as f64 * cell[d];
                    p[dims[d]] = sub[d];
                }
                let c = oracle_cost(phi, p);
                if c < best.0 {
                    best = (c, sub);
                }
            }
        }
    }
    (0..3).all(|d| (fitted[dims[d]] - best.1[d]).abs() <= cell[d] + 1e-15)
}

fn c4_fit_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let truths: Vec<ChannelParams> = (0..100).map(|_| random_truth(&mut rng)).collect();
    let results: Vec<(f64, bool)> = truths
        .par_iter()
        .map(|truth| {
            let phi = synth_phase(truth, 56, 1.0).unwrap();
            let Ok(fit) = fit_phase_params(&phi, &ChannelParams::REFERENCE, 1.0) else {
                return (f64::INFINITY, false);
            };
            let x = fit.params.to_array();
            let err = x
                .iter()
                .zip(truth.to_array())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            (err, matches_grid_oracle(phi.values(), truth, x))
        })
        .collect();
    let worst = results.iter().map(|r| r.0).fold(0.0, f64::max);
    let grid_ok = results.iter().filter(|r| r.1).count();
    verdict(
        worst < 1e-3 && grid_ok == 100,
        format!("100 fits, worst abs error {worst:.2e}, grid oracle agreement {grid_ok}/100"),
    )
}

fn c5_jacobian() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0f64;
    for _ in 0..100 {
        let p = random_truth(&mut rng);
        let jac = model_jacobian(&p, 56, 1.0).unwrap();
        for (k, row) in jac.iter().enumerate() {
            for (j, &analytic) in row.iter().enumerate() {
                let x = p.to_array();
                let h = 1e-6 * x[j].abs().max(1e-3);
                let (mut hi, mut lo) = (x, x);
                hi[j] += h;
                lo[j] -= h;
                let f = |v: [f64; 5]| model_value(&ChannelParams::from_array(v), k + 1, 1.0).unwrap();
                let fd = (f(hi) - f(lo)) / (2.0 * h);
                worst = worst.max((fd - analytic).abs() / analytic.abs().max(1.0));
            }
        }
    }
    verdict(worst < 1e-5, format!("100 points x 56 subcarriers x 5 params, worst rel error {worst:.2e}"))
}

struct Run {
    outcome: SessionOutcome,
    both_sides_equal: bool,
    secs: f64,
}

fn handshakes(correlation: f64, eve: bool, runs: u64) -> Vec<Run> {
    let (a, e, p) = default_identities();
    let opts = HandshakeOptions::default();
    (0..runs)
        .into_par_iter()
        .map(|seed| {
            let channel = SimConfig {
                correlation,
                noise_sigma: 0.02,
                n_packets: 200,
                eve_enabled: eve,
                seed,
                ..SimConfig::default()
            };
            let start = Instant::now();
            let r = run_session(&a, &e, &p, &channel, seed, &opts).expect("session runs");
            let secs = start.elapsed().as_secs_f64();
            let both_sides_equal = r.enrollee.passphrase_2().is_some()
                && r.enrollee.passphrase_2() == r.access_point.passphrase_2(&e.mac);
            Run {
                outcome: r.outcome,
                both_sides_equal,
                secs,
            }
        })
        .collect()
}

fn joined(runs: &[Run]) -> usize {
    runs.iter()
        .filter(|r| r.outcome.status == SessionStatus::Joined && r.both_sides_equal)
        .count()
}

fn c6_agreement(near: &[Run]) -> Verdict {
    let ok = joined(near);
    let slowest = near.iter().map(|r| r.secs).fold(0.0, f64::max);
    verdict(
        ok >= 95 && slowest < 2.0,
        format!("{ok}/100 joined with equal passphrase_2, slowest run {slowest:.2} s"),
    )
}

fn c7_proximity(near: &[Run]) -> Verdict {
    let rates: Vec<(f64, usize)> = [0.2, 0.5, 0.8]
        .iter()
        .map(|&c| {
            let runs = handshakes(c, false, 100);
            let failed = runs
                .iter()
                .filter(|r| {
                    matches!(
                        r.outcome.status,
                        SessionStatus::ReconFailedPass1 | SessionStatus::ReconFailedPass2
                    )
                })
                .count();
            (c, if c == 0.2 { 100 - failed } else { joined(&runs) })
        })
        .chain(std::iter::once((1.0, joined(near))))
        .collect();
    let far_failures = 100 - rates[0].1;
    let inversions = rates.windows(2).filter(|w| w[1].1 < w[0].1).count();
    let shown: Vec<String> = rates.iter().map(|(c, s)| format!("{c}:{s}")).collect();
    verdict(
        far_failures >= 95 && inversions <= 1,
        format!(
            "{far_failures}/100 reconciliation failures at 0.2; successes {}; {inversions} inversions",
            shown.join(" ")
        ),
    )
}

fn c8_eavesdropper() -> Verdict {
    let runs = handshakes(1.0, true, 100);
    let eve_failed = runs
        .iter()
        .filter(|r| !r.outcome.eve.is_empty() && r.outcome.eve.iter().all(|e| !e.recover_ok))
        .count();
    let joined_runs: Vec<&Run> = runs
        .iter()
        .filter(|r| r.outcome.status == SessionStatus::Joined)
        .collect();
    let leaks = joined_runs
        .iter()
        .filter(|r| {
            r.outcome
                .eve
                .iter()
                .any(|e| e.passphrase.is_some() && e.passphrase == r.outcome.passphrase2)
        })
        .count();
    let n = runs.iter().flat_map(|r| r.outcome.eve.iter().filter_map(|e| e.bit_mismatch)).count();
    let mismatch = runs
        .iter()
        .flat_map(|r| r.outcome.eve.iter().filter_map(|e| e.bit_mismatch))
        .sum::<f64>()
        / n.max(1) as f64;
    verdict(
        eve_failed >= 99 && leaks == 0,
        format!(
            "Eve failed recover in {eve_failed}/100 runs, matched the passphrase in {leaks}/{} joined runs, mean bit mismatch {mismatch:.3}",
            joined_runs.len()
        ),
    )
}

fn c9_entropy(near: &[Run]) -> Verdict {
    let simulated: Vec<&Passphrase> = near
        .iter()
        .filter_map(|r| r.outcome.passphrase2.as_ref())
        .take(50)
        .collect();
    let mean = |ps: &[&Passphrase]| {
        ps.iter().map(|p| estimate_strength(p).entropy_bits).sum::<f64>() / ps.len() as f64
    };
    let corpus = human_style_corpus();
    let human = mean(&corpus.iter().collect::<Vec<_>>());
    let ours = mean(&simulated);
    verdict(
        simulated.len() == 50 && ours >= 100.0 && ours >= 2.5 * human,
        format!(
            "{} simulated passphrases mean {ours:.1} bits, human corpus mean {human:.1} bits, ratio {:.2}",
            simulated.len(),
            ours / human
        ),
    )
}

/// Computed independently with Python's `hashlib.pbkdf2_hmac("sha1", p, ssid, 4096, 32)`.
const PSK_VECTORS: [(&str, &str, &str); 6] = [
    ("password", "IEEE", "f42c6fc52df0ebef9ebb4b90b38a5f902e83fe1b135a70e23aed762e9710a12e"),
    ("ThisIsAPassword", "ThisIsASSID", "0dc0d6eb90555ed6419756b9a15ec3e3209b63df707dd508d14581f8982721af"),
    (
        "aaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaa",
        "ZZZZZZZZZZZZZZZZZZZZZZZZZZZZZZZZ",
        "becb93866bb8c3832cb777c2f559807c8c59afcb6eae734885001300a981cc62",
    ),
    ("password", "ieee", "10fe786a8493ba05e31a2828a89da104b19ce6523f564e21a56a1d268bee8199"),
    ("0A0Ac3!xyz", "compass-net", "b3e2249e91e23bb31cd46a1d921508a77636c73e0e1e650353605ce68499e9f5"),
    ("G7#kq00FFab", "HomeNet", "a9a3c0df73fa65a758475aa18271715338f0e0a89400077d8d4caf659c9ba39d"),
];

fn c10_psk() -> Verdict {
    let ok = PSK_VECTORS
        .iter()
        .filter(|(p, ssid, want)| {
            derive_psk(&Passphrase::new(*p).unwrap(), ssid).is_ok_and(|k| k.to_hex() == *want)
        })
        .count();
    verdict(ok == PSK_VECTORS.len(), format!("{ok}/{} vectors bit-exact", PSK_VECTORS.len()))
}

fn c11_quantizer() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut length_ok = true;
    let mut affine_ok = true;
    for _ in 0..500 {
        let n: usize = rng.random_range(1..400);
        let w: usize = rng.random_range(3..12);
        let v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let q = quantize_values(&v, w).unwrap();
        length_ok &= q.len() == n.div_ceil(w) * w;
        let maps: Vec<(f64, f64)> = (0..n.div_ceil(w))
            .map(|_| (rng.random_range(0.1..10.0), rng.random_range(-5.0..5.0)))
            .collect();
        let mapped: Vec<f64> = v
            .iter()
            .enumerate()
            .map(|(i, &x)| maps[i / w].0 * x + maps[i / w].1)
            .collect();
        affine_ok &= quantize_values(&mapped, w).unwrap() == q;
    }
    let w = 5;
    let v: Vec<f64> = (0..1000 * w).map(|_| StandardNormal.sample(&mut rng)).collect();
    let q = quantize_values(&v, w).unwrap();
    let ones = q.bits().iter().filter(|&&b| b).count() as f64 / q.len() as f64;
    verdict(
        length_ok && affine_ok && (0.35..=0.65).contains(&ones),
        format!("length law {length_ok}, affine invariance {affine_ok}, ones fraction {ones:.3} over 1000 windows"),
    )
}

/// Runs a fixed sequence of invocations in `dir`; returns every stdout and
/// every produced file, in a fixed order.
fn cli_session(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let d = |name: &str| dir.join(name).to_str().unwrap().to_string();
    let script: Vec<Vec<String>> = [
        vec!["simulate", "--seed", "12", "--packets", "40", "--eve", "--out", &d("sim")],
        vec!["fit", "--trace-in", &d("sim/trace_a.csi"), "--out", &d("sa.txt")],
        vec!["fit", "--trace-in", &d("sim/trace_b.csi")],
        vec!["quantize", "--series", &d("sa.txt"), "--trace-in", &d("sim/trace_a.csi"), "--out", &d("qa.txt")],
        vec!["sketch", "--bits", &d("qa.txt"), "--sketch-out", &d("s.txt")],
        vec!["recover", "--bits", &d("qa.txt"), "--sketch-in", &d("s.txt"), "--out", &d("r.txt")],
        vec!["passphrase", "--bits", &d("r.txt"), "--ssid", "HomeNet"],
        vec!["psk", "--passphrase", "password", "--ssid", "IEEE"],
        vec!["handshake", "--seed", "12", "--packets", "80", "--eve", "--transcript-out", &d("t.txt")],
        vec!["campaign", "--correlation", "1.0,0.2", "--seeds-per-cell", "2", "--packets", "40", "--out", &d("camp")],
    ]
    .into_iter()
    .map(|v| v.into_iter().map(String::from).collect())
    .collect();

    let mut captured = Vec::new();
    for (i, args) in script.iter().enumerate() {
        let argv: Vec<String> = std::iter::once("compass".to_string()).chain(args.iter().cloned()).collect();
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = compass_cli::run(&argv, &mut out, &mut err);
        captured.push((format!("step {i} exit"), code.to_string().into_bytes()));
        captured.push((format!("step {i} stdout"), out));
    }
    for f in [
        "sim/trace_a.csi", "sim/trace_b.csi", "sim/trace_e.csi", "sa.txt", "qa.txt", "s.txt", "r.txt",
        "t.txt", "camp/campaign.csv",
    ] {
        captured.push((f.to_string(), fs::read(dir.join(f)).unwrap_or_default()));
    }
    captured
}

fn c12_determinism() -> Verdict {
    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let first = cli_session(d1.path());
    // Paths differ between the two runs; compare with them normalised.
    let norm = |v: Vec<(String, Vec<u8>)>, dir: &Path| -> Vec<(String, Vec<u8>)> {
        let p = dir.to_str().unwrap();
        v.into_iter()
            .map(|(k, bytes)| (k, String::from_utf8_lossy(&bytes).replace(p, "<dir>").into_bytes()))
            .collect()
    };
    let first = norm(first, d1.path());
    let second = norm(cli_session(d2.path()), d2.path());
    let diffs: Vec<&String> = first.iter().zip(&second).filter(|(a, b)| a != b).map(|(a, _)| &a.0).collect();
    let all_ran = first
        .iter()
        .filter(|(k, _)| k.ends_with("exit"))
        .all(|(_, v)| v == b"0");
    let files_present = first.iter().skip(20).all(|(_, v)| !v.is_empty());
    verdict(
        diffs.is_empty() && all_ran && files_present,
        format!(
            "10 invocations x 2 sessions, {} outputs compared, {} differ, all exit 0: {all_ran}",
            first.len(),
            diffs.len()
        ),
    )
}

fn main() {
    let mut results: Vec<(u32, &str, Verdict)> = Vec::new();
    let mut report = |n: u32, name: &'static str, v: Verdict| {
        println!("{} {n:>2} {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        results.push((n, name, v));
    };
    report(1, "secure-sketch round-trip", c1_sketch_round_trip());
    report(2, "beyond-capability detection", c2_beyond_capability());
    report(3, "GF(2^7) field axioms", c3_field_axioms());
    report(4, "fit oracle", c4_fit_oracle());
    report(5, "Jacobian check", c5_jacobian());
    let near = handshakes(1.0, false, 100);
    report(6, "end-to-end agreement", c6_agreement(&near));
    report(7, "proximity", c7_proximity(&near));
    report(8, "eavesdropper", c8_eavesdropper());
    report(9, "entropy", c9_entropy(&near));
    report(10, "PSK oracle", c10_psk());
    report(11, "quantizer laws", c11_quantizer());
    report(12, "CLI determinism", c12_determinism());
    let failed = results.iter().filter(|r| !r.2.pass).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
