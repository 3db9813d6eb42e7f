//! Five-parameter decomposition of the measured CSI phase across subcarriers.
//!
//! For subcarrier `k` (starting at 1) and spacing factor `f_s`:
//!
//! ```text
//! phi_k = atan(eps_g * sin(2π f_s k ζ + eps_θ) / cos(2π f_s k ζ)) - 2π f_s k λ + β
//! ```

use std::f64::consts::PI;

/// Magnitude below which `cos(2π f_s k ζ)` is treated as zero.
pub const SINGULAR_COS: f64 = 1e-12;

/// Parameters of the phase decomposition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelParams {
    /// Gain mismatch.
    pub eps_g: f64,
    /// Timing offset.
    pub zeta: f64,
    /// Phase mismatch (radians).
    pub eps_theta: f64,
    /// Cumulative delay: time of flight, packet detection delay, sampling frequency offset.
    pub lambda: f64,
    /// Phase offset (radians).
    pub beta: f64,
}

impl ChannelParams {
    /// Reference operating point used to initialize every fit.
    pub const REFERENCE: ChannelParams = ChannelParams {
        eps_g: 0.512,
        zeta: -0.02812,
        eps_theta: -0.006355,
        lambda: -0.02762,
        beta: 0.1326,
    };

    pub const fn new(eps_g: f64, zeta: f64, eps_theta: f64, lambda: f64, beta: f64) -> Self {
        Self {
            eps_g,
            zeta,
            eps_theta,
            lambda,
            beta,
        }
    }

    pub fn to_array(self) -> [f64; 5] {
        [self.eps_g, self.zeta, self.eps_theta, self.lambda, self.beta]
    }

    pub fn from_array(v: [f64; 5]) -> Self {
        Self::new(v[0], v[1], v[2], v[3], v[4])
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self::REFERENCE
    }
}

/// Phase values in radians, indexed by subcarrier `k = 1..=n_sc`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseVector {
    values: Vec<f64>,
}

impl PhaseVector {
    /// Returns `None` if any value is not finite.
    pub fn new(values: Vec<f64>) -> Option<Self> {
        values
            .iter()
            .all(|v| v.is_finite())
            .then_some(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.values
    }
}

/// Model value at subcarrier `k`, or `None` when the cosine term vanishes or the
/// result is not finite.
pub fn model_value(p: &ChannelParams, k: usize, f_s: f64) -> Option<f64> {
    let c = 2.0 * PI * f_s * k as f64;
    let a = c * p.zeta;
    let den = a.cos();
    if den.abs() < SINGULAR_COS {
        return None;
    }
    let v = (p.eps_g * (a + p.eps_theta).sin() / den).atan() - c * p.lambda + p.beta;
    v.is_finite().then_some(v)
}

/// Model value and its partial derivatives with respect to
/// `(eps_g, zeta, eps_theta, lambda, beta)`.
pub fn model_with_gradient(p: &ChannelParams, k: usize, f_s: f64) -> Option<(f64, [f64; 5])> {
    let value = model_value(p, k, f_s)?;
    let c = 2.0 * PI * f_s * k as f64;
    let a = c * p.zeta;
    let num_sin = (a + p.eps_theta).sin();
    let num_cos = (a + p.eps_theta).cos();
    let den = a.cos();
    let num = p.eps_g * num_sin;
    // d/dx atan(N/D) = (N' D - N D') / (N^2 + D^2)
    let q = num * num + den * den;
    let grad = [
        num_sin * den / q,
        p.eps_g * c * p.eps_theta.cos() / q,
        p.eps_g * num_cos * den / q,
        -c,
        1.0,
    ];
    grad.iter().all(|g| g.is_finite()).then_some((value, grad))
}

/// Maps `x` onto `[-π/2, π/2]` modulo π.
///
/// The arctangent term jumps by π wherever `cos(2π f_s k ζ)` changes sign, so
/// comparing phases modulo π keeps the least-squares cost continuous in ζ.
pub fn wrap_half_turn(x: f64) -> f64 {
    x - PI * (x / PI).round()
}

/// Unwraps a phase sequence so adjacent values differ by at most π.
pub fn unwrap_phase(values: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut correction = 0.0;
    for (i, &v) in values.iter().enumerate() {
        if i > 0 {
            let d = v - values[i - 1];
            if d.abs() > PI {
                let mut wrapped = (d + PI).rem_euclid(2.0 * PI) - PI;
                if wrapped == -PI && d > 0.0 {
                    wrapped = PI;
                }
                correction += wrapped - d;
            }
        }
        out.push(v + correction);
    }
    out
}
