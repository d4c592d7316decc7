//! Closed-form Schrödinger evolution of the Gaussian packet in `V = K x`.
//!
//! ρ_Q and J_Q are evaluated from their closed forms, never by differentiating ψ.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::model::{normal_pdf, PacketSpec, Tolerances, EXP_FLOOR, HBAR};

pub type WaveAmplitude = Complex64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantumSample {
    pub x: f64,
    pub t: f64,
    pub rho: f64,
    pub current: f64,
}

/// C + ħt/(2mσ₀²), the imaginary part of the complex width.
fn width_phase(spec: &PacketSpec, t: f64) -> f64 {
    spec.c_param + spec.spread_rate() * t
}

/// σ_Q(t)² = σ₀²(1 + (C + ħt/2mσ₀²)²)
pub fn sigma_q_sq(spec: &PacketSpec, t: f64) -> f64 {
    let a = width_phase(spec, t);
    spec.sigma0 * spec.sigma0 * (1.0 + a * a)
}

pub fn sigma_q(spec: &PacketSpec, t: f64) -> f64 {
    sigma_q_sq(spec, t).sqrt()
}

pub fn psi(spec: &PacketSpec, x: f64, t: f64) -> WaveAmplitude {
    let m = spec.mass;
    let k = spec.k_slope;
    let s0 = spec.sigma0;
    let width = Complex64::new(1.0, width_phase(spec, t));
    let offset = x - spec.center(t);

    let envelope = -offset * offset / (4.0 * s0 * s0 * width);
    if envelope.re < EXP_FLOOR {
        return Complex64::new(0.0, 0.0);
    }
    let phase = m / HBAR * spec.drift_velocity(t) * (x - 0.5 * spec.u * t)
        - k * k * t * t * t / (6.0 * m * HBAR);
    let prefactor = 1.0 / ((2.0 * std::f64::consts::PI * s0 * s0).powf(0.25) * width.sqrt());
    prefactor * (Complex64::new(0.0, phase) + envelope).exp()
}

pub fn rho_q(spec: &PacketSpec, x: f64, t: f64) -> f64 {
    normal_pdf(x - spec.center(t), sigma_q(spec, t))
}

/// Local velocity J_Q/ρ_Q: u − Kt/m + ħ(C + ħt/2mσ₀²)(x − x_c)/(2mσ_Q²).
pub fn velocity_q(spec: &PacketSpec, x: f64, t: f64) -> f64 {
    let offset = x - spec.center(t);
    spec.drift_velocity(t) + HBAR * width_phase(spec, t) * offset / (2.0 * spec.mass * sigma_q_sq(spec, t))
}

pub fn j_q(spec: &PacketSpec, x: f64, t: f64) -> f64 {
    let rho = rho_q(spec, x, t);
    if rho == 0.0 {
        return 0.0;
    }
    rho * velocity_q(spec, x, t)
}

pub fn sample_q(spec: &PacketSpec, x: f64, t: f64) -> QuantumSample {
    QuantumSample { x, t, rho: rho_q(spec, x, t), current: j_q(spec, x, t) }
}

/// Velocity scale used to normalise the continuity residual: drift plus momentum spread.
fn velocity_scale(spec: &PacketSpec, t: f64) -> f64 {
    spec.drift_velocity(t).abs() + spec.momentum_width() / spec.mass
}

/// Finite-difference steps `(h_x, h_t)` proportional to the local packet width.
pub fn default_fd_steps(spec: &PacketSpec, t: f64, tol: &Tolerances) -> (f64, f64) {
    let width = sigma_q(spec, t);
    let h_x = tol.fd_step_scale * width;
    let mut h_t = tol.fd_step_scale * width / velocity_scale(spec, t);
    if t > 0.0 && h_t > 0.5 * t {
        h_t = 0.5 * t;
    }
    (h_x, h_t)
}

/// |∂ρ/∂t + ∂J/∂x| by central differences, relative to ρ·v/σ_Q at the point.
pub fn continuity_residual(spec: &PacketSpec, x: f64, t: f64, h_x: f64, h_t: f64) -> f64 {
    debug_assert!(h_x > 0.0 && h_t > 0.0 && t - h_t >= 0.0);
    let drho_dt = (rho_q(spec, x, t + h_t) - rho_q(spec, x, t - h_t)) / (2.0 * h_t);
    let dj_dx = (j_q(spec, x + h_x, t) - j_q(spec, x - h_x, t)) / (2.0 * h_x);
    let scale = rho_q(spec, x, t) * velocity_scale(spec, t) / sigma_q(spec, t);
    (drho_dt + dj_dx).abs() / scale
}
