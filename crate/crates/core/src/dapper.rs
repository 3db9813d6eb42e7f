//! Delay-aware parameter extraction.
//!
//! Each packet's measured phase is fitted against the five-parameter model by
//! damped Gauss–Newton (Levenberg–Marquardt). The gain mismatch `eps_g` of every
//! packet whose cumulative delay stays near the median is kept; late packets are
//! dropped.

use std::io::{BufRead, Write};

use nalgebra::{Matrix5, Vector5};
use thiserror::Error;

use crate::channel::CsiTrace;
use crate::phase_model::{self, ChannelParams, PhaseVector};

pub const MIN_PHASE_LEN: usize = 5;

#[derive(Debug, Error, PartialEq)]
pub enum DapperError {
    #[error("phase vector has {0} values, at least 5 are required")]
    TooShort(usize),
    #[error("model is degenerate at the current parameters: {0}")]
    Degenerate(String),
    #[error("antenna path ({rx}, {tx}) is outside the CSI matrix")]
    PathOutOfBounds { rx: usize, tx: usize },
    #[error("trace is empty")]
    EmptyTrace,
    #[error("every packet was dropped")]
    EmptySeries,
    #[error("malformed parameter series at line {line}: {reason}")]
    Format { line: usize, reason: String },
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for DapperError {
    fn from(e: std::io::Error) -> Self {
        DapperError::Io(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub max_iterations: usize,
    pub step_tolerance: f64,
    pub gradient_tolerance: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            step_tolerance: 1e-10,
            gradient_tolerance: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitResult {
    pub params: ChannelParams,
    /// Sum of squared residuals.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Residuals `φ_k − model_k` reduced modulo π, with the model Jacobian.
fn residuals_and_jacobian(
    phase: &[f64],
    p: &ChannelParams,
    f_s: f64,
) -> Option<(Vec<f64>, Vec<[f64; 5]>)> {
    let mut r = Vec::with_capacity(phase.len());
    let mut jac = Vec::with_capacity(phase.len());
    for (i, &phi) in phase.iter().enumerate() {
        let (m, g) = phase_model::model_with_gradient(p, i + 1, f_s)?;
        r.push(phase_model::wrap_half_turn(phi - m));
        jac.push(g);
    }
    Some((r, jac))
}

fn cost_at(phase: &[f64], p: &ChannelParams, f_s: f64) -> Option<f64> {
    let mut sum = 0.0;
    for (i, &phi) in phase.iter().enumerate() {
        let m = phase_model::model_value(p, i + 1, f_s)?;
        let r = phase_model::wrap_half_turn(phi - m);
        sum += r * r;
    }
    Some(sum)
}

/// Model Jacobian at `p`, one row per subcarrier.
pub fn model_jacobian(p: &ChannelParams, n_sc: usize, f_s: f64) -> Option<Vec<[f64; 5]>> {
    (1..=n_sc)
        .map(|k| phase_model::model_with_gradient(p, k, f_s).map(|(_, g)| g))
        .collect()
}

pub fn fit_phase_params(
    phase: &PhaseVector,
    init: &ChannelParams,
    f_s: f64,
) -> Result<FitResult, DapperError> {
    fit_phase_params_with(phase, init, f_s, &FitOptions::default())
}

/// Subcarrier prefixes fitted in turn before the full vector. The linear delay
/// term grows with `k`, so short prefixes keep a distant start inside the
/// basin of the modulo-π residual.
const CONTINUATION_PREFIXES: [usize; 2] = [14, 28];

/// Mean squared residual above which a plain fit from `init` is retried by
/// continuation, then from a grid of `(ζ, λ)` offsets around `init`.
const RESTART_MSE: f64 = 0.01;
const RESTART_SCALES: [f64; 3] = [1.0, 0.85, 1.15];
const RESTART_SCREEN_ITERATIONS: usize = 40;

pub fn fit_phase_params_with(
    phase: &PhaseVector,
    init: &ChannelParams,
    f_s: f64,
    opts: &FitOptions,
) -> Result<FitResult, DapperError> {
    let phi = phase.values();
    if phi.len() < MIN_PHASE_LEN {
        return Err(DapperError::TooShort(phi.len()));
    }
    let acceptable = |f: &FitResult| f.converged && f.residual / phi.len() as f64 <= RESTART_MSE;
    let mut best = levenberg_marquardt(phi, init, f_s, opts)?;
    if acceptable(&best) {
        return Ok(best);
    }
    if let Ok(fit) = fit_continuation(phi, init, f_s, opts) {
        if fit.residual < best.residual {
            best = fit;
        }
    }
    if acceptable(&best) {
        return Ok(best);
    }
    let screen = FitOptions {
        max_iterations: opts.max_iterations.min(RESTART_SCREEN_ITERATIONS),
        ..*opts
    };
    let mut candidate: Option<FitResult> = None;
    for &sz in &RESTART_SCALES {
        for &sl in &RESTART_SCALES {
            if sz == 1.0 && sl == 1.0 {
                continue;
            }
            let start = ChannelParams {
                zeta: init.zeta * sz,
                lambda: init.lambda * sl,
                ..*init
            };
            if let Ok(fit) = fit_continuation(phi, &start, f_s, &screen) {
                if candidate.is_none_or(|c| fit.residual < c.residual) {
                    candidate = Some(fit);
                }
            }
        }
    }
    if let Some(c) = candidate.filter(|c| c.residual < best.residual) {
        let refined = if c.converged {
            c
        } else {
            levenberg_marquardt(phi, &c.params, f_s, opts).unwrap_or(c)
        };
        if refined.residual < best.residual {
            best = refined;
        }
    }
    Ok(best)
}

fn fit_continuation(
    phi: &[f64],
    init: &ChannelParams,
    f_s: f64,
    opts: &FitOptions,
) -> Result<FitResult, DapperError> {
    let mut start = *init;
    for &n in CONTINUATION_PREFIXES.iter().filter(|&&n| n < phi.len()) {
        if let Ok(fit) = levenberg_marquardt(&phi[..n], &start, f_s, opts) {
            start = fit.params;
        }
    }
    levenberg_marquardt(phi, &start, f_s, opts)
}

/// Plain damped Gauss–Newton from `init` over the whole vector.
pub fn levenberg_marquardt(
    phi: &[f64],
    init: &ChannelParams,
    f_s: f64,
    opts: &FitOptions,
) -> Result<FitResult, DapperError> {
    if phi.len() < MIN_PHASE_LEN {
        return Err(DapperError::TooShort(phi.len()));
    }
    let mut x = Vector5::from(init.to_array());
    let params = |x: &Vector5<f64>| ChannelParams::from_array([x[0], x[1], x[2], x[3], x[4]]);

    let (mut r, mut jac) = residuals_and_jacobian(phi, init, f_s)
        .ok_or_else(|| DapperError::Degenerate("model singular at initial parameters".into()))?;
    let mut cost: f64 = r.iter().map(|v| v * v).sum();

    let normal = |r: &[f64], jac: &[[f64; 5]]| {
        let mut a = Matrix5::<f64>::zeros();
        let mut g = Vector5::<f64>::zeros();
        for (ri, row) in r.iter().zip(jac) {
            let row = Vector5::from(*row);
            a += row * row.transpose();
            g += row * *ri;
        }
        (a, g)
    };
    let (mut a, mut g) = normal(&r, &jac);
    if a.diagonal().iter().all(|&d| d == 0.0) {
        return Err(DapperError::Degenerate("Jacobian is identically zero".into()));
    }

    let mut mu = 1e-3 * a.diagonal().max();
    let mut nu = 2.0;
    let mut iterations = 0;
    let mut converged = g.amax() < opts.gradient_tolerance;

    while !converged && iterations < opts.max_iterations {
        iterations += 1;
        let damped = a + Matrix5::identity() * mu;
        let Some(step) = damped.cholesky().map(|c| c.solve(&g)) else {
            mu *= nu;
            nu *= 2.0;
            continue;
        };
        if step.norm() <= opts.step_tolerance * (x.norm() + opts.step_tolerance) {
            converged = true;
            break;
        }
        let candidate = x + step;
        let predicted = 0.5 * step.dot(&(step * mu + g));
        let trial_cost = cost_at(phi, &params(&candidate), f_s);
        let gain = match trial_cost {
            Some(c) if predicted > 0.0 => (cost - c) / predicted,
            _ => -1.0,
        };
        if gain > 0.0 {
            x = candidate;
            let Some((nr, nj)) = residuals_and_jacobian(phi, &params(&x), f_s) else {
                return Err(DapperError::Degenerate("model singular after accepted step".into()));
            };
            r = nr;
            jac = nj;
            cost = r.iter().map(|v| v * v).sum();
            (a, g) = normal(&r, &jac);
            mu *= (1.0f64 / 3.0).max(1.0 - (2.0 * gain - 1.0).powi(3));
            nu = 2.0;
            converged = g.amax() < opts.gradient_tolerance;
        } else {
            mu *= nu;
            nu *= 2.0;
            if !mu.is_finite() {
                break;
            }
        }
    }

    let params = params(&x);
    if !params.is_finite() || !cost.is_finite() {
        return Err(DapperError::Degenerate("fit diverged".into()));
    }
    Ok(FitResult {
        params,
        residual: cost,
        iterations,
        converged,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesEntry {
    pub packet_index: u64,
    pub eps_g: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParameterSeries {
    pub entries: Vec<SeriesEntry>,
    pub dropped: Vec<u64>,
}

impl ParameterSeries {
    pub fn values(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.eps_g).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Text form: one `packet_index eps_g` line per entry, then a
    /// `# dropped ...` line listing dropped packets.
    pub fn write_text<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for e in &self.entries {
            writeln!(out, "{} {}", e.packet_index, e.eps_g)?;
        }
        write!(out, "# dropped")?;
        for d in &self.dropped {
            write!(out, " {d}")?;
        }
        writeln!(out)
    }

    pub fn read_text<R: BufRead>(input: R) -> Result<Self, DapperError> {
        let mut series = ParameterSeries::default();
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            let fmt = |reason: &str| DapperError::Format {
                line: i + 1,
                reason: reason.into(),
            };
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("# dropped") {
                for tok in rest.split_whitespace() {
                    series.dropped.push(tok.parse().map_err(|_| fmt("bad dropped index"))?);
                }
                continue;
            }
            if line.starts_with('#') {
                continue;
            }
            let mut tok = line.split_whitespace();
            let (Some(idx), Some(val), None) = (tok.next(), tok.next(), tok.next()) else {
                return Err(fmt("expected `packet_index eps_g`"));
            };
            let packet_index: u64 = idx.parse().map_err(|_| fmt("bad packet_index"))?;
            let eps_g: f64 = val.parse().map_err(|_| fmt("bad eps_g"))?;
            if !eps_g.is_finite() {
                return Err(fmt("eps_g not finite"));
            }
            if series.entries.last().is_some_and(|e| e.packet_index >= packet_index) {
                return Err(fmt("packet_index must increase"));
            }
            series.entries.push(SeriesEntry { packet_index, eps_g });
        }
        Ok(series)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtractOptions {
    pub path: (usize, usize),
    pub f_s: f64,
    /// Fixed drop threshold on `|λ_i − median(λ)|`; `None` uses
    /// `max(5·MAD(λ), delay_floor)`.
    pub delay_threshold: Option<f64>,
    pub delay_floor: f64,
    pub fit: FitOptions,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        Self {
            path: (0, 0),
            f_s: 1.0,
            delay_threshold: None,
            delay_floor: 1e-3,
            fit: FitOptions::default(),
        }
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

pub fn extract_eps_g(
    trace: &CsiTrace,
    init: &ChannelParams,
    path: (usize, usize),
    f_s: f64,
) -> Result<ParameterSeries, DapperError> {
    let opts = ExtractOptions {
        path,
        f_s,
        ..ExtractOptions::default()
    };
    extract_eps_g_with(trace, init, &opts)
}

pub fn extract_eps_g_with(
    trace: &CsiTrace,
    init: &ChannelParams,
    opts: &ExtractOptions,
) -> Result<ParameterSeries, DapperError> {
    if trace.is_empty() {
        return Err(DapperError::EmptyTrace);
    }
    let (rx, tx) = opts.path;
    let mut fitted: Vec<(u64, FitResult)> = Vec::with_capacity(trace.len());
    let mut failed: Vec<u64> = Vec::new();

    for (i, packet) in trace.packets.iter().enumerate() {
        let phase = trace
            .path_phase(i, rx, tx)
            .ok_or(DapperError::PathOutOfBounds { rx, tx })?;
        let fit = PhaseVector::new(phase)
            .ok_or_else(|| DapperError::Degenerate("non-finite phase".into()))
            .and_then(|p| fit_phase_params_with(&p, init, opts.f_s, &opts.fit));
        match fit {
            Ok(f) if f.converged => fitted.push((packet.packet_index, f)),
            Ok(_) | Err(DapperError::Degenerate(_)) | Err(DapperError::TooShort(_)) => {
                log::debug!("packet {} fit failed", packet.packet_index);
                failed.push(packet.packet_index);
            }
            Err(e) => return Err(e),
        }
    }
    if fitted.is_empty() {
        return Err(DapperError::EmptySeries);
    }

    let mut lambdas: Vec<f64> = fitted.iter().map(|(_, f)| f.params.lambda).collect();
    let lambda_ref = median(&mut lambdas);
    let threshold = opts.delay_threshold.unwrap_or_else(|| {
        let mut dev: Vec<f64> = fitted
            .iter()
            .map(|(_, f)| (f.params.lambda - lambda_ref).abs())
            .collect();
        (5.0 * median(&mut dev)).max(opts.delay_floor)
    });

    let mut series = ParameterSeries::default();
    for (idx, f) in fitted {
        if (f.params.lambda - lambda_ref).abs() > threshold {
            series.dropped.push(idx);
        } else {
            series.entries.push(SeriesEntry {
                packet_index: idx,
                eps_g: f.params.eps_g,
            });
        }
    }
    series.dropped.extend(failed);
    series.dropped.sort_unstable();
    if series.entries.is_empty() {
        return Err(DapperError::EmptySeries);
    }
    Ok(series)
}
