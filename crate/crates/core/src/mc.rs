//! Monte Carlo check of the classical arrival statistics.
//!
//! Particles are drawn from the product-form initial density, moved along the
//! exact parabolic trajectories, and every crossing of the detector inside the
//! window is recorded with unit weight. Counting crossings in both directions
//! estimates the same functional as the |J_C| quadrature.
//!
//! Random numbers: each block of [`BLOCK_SIZE`] particles owns a ChaCha8 stream
//! selected by `(seed, block index)`; normals come from `rand_distr`'s ziggurat
//! `StandardNormal`. Results therefore do not depend on the number of threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arrival::positive_roots;
use crate::classical::PhaseSpacePoint;
use crate::model::{DetectorSpec, PacketSpec};

pub const BLOCK_SIZE: usize = 1 << 14;

/// Number of contiguous groups used for the jackknife error of `delta_t`.
pub const JACKKNIFE_GROUPS: usize = 20;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum McError {
    #[error("no particle crossed the detector within {t_window:e} s")]
    NoCrossings { t_window: f64 },
    #[error("invalid Monte Carlo configuration: {0}")]
    Config(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub n_particles: usize,
    pub seed: u64,
    /// s
    pub t_window: f64,
}

impl McConfig {
    pub fn new(n_particles: usize, seed: u64, t_window: f64) -> Self {
        Self { n_particles, seed, t_window }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean_t: f64,
    pub delta_t: f64,
    pub stderr_mean: f64,
    /// Jackknife standard error of `delta_t`.
    pub stderr_delta: f64,
    pub n_crossings: usize,
    /// Particles that never reach the detector inside the window.
    pub n_never: usize,
    pub n_particles: usize,
}

impl McEstimate {
    /// Crossings per particle; estimates ∫|J_C| dt over the window.
    pub fn crossing_fraction(&self) -> f64 {
        self.n_crossings as f64 / self.n_particles as f64
    }
}

fn block_rng(seed: u64, block: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(block as u64);
    rng
}

fn sample_block(spec: &PacketSpec, seed: u64, block: usize, count: usize) -> Vec<PhaseSpacePoint> {
    let mut rng = block_rng(seed, block);
    let x_width = spec.position_width();
    let p_width = spec.momentum_width();
    let p_bar = spec.p_bar();
    (0..count)
        .map(|_| {
            let zx: f64 = StandardNormal.sample(&mut rng);
            let zp: f64 = StandardNormal.sample(&mut rng);
            PhaseSpacePoint::new(x_width * zx, p_bar + p_width * zp)
        })
        .collect()
}

fn blocks(n: usize) -> impl IndexedParallelIterator<Item = (usize, usize)> {
    let n_blocks = n.div_ceil(BLOCK_SIZE);
    (0..n_blocks).into_par_iter().map(move |b| (b, BLOCK_SIZE.min(n - b * BLOCK_SIZE)))
}

/// Initial ensemble: x₀ ~ N(0, σ₀²(1+C²)), p₀ ~ N(p̄, ħ²/4σ₀²), independent.
pub fn sample_initial(spec: &PacketSpec, cfg: &McConfig) -> Vec<PhaseSpacePoint> {
    let parts: Vec<Vec<PhaseSpacePoint>> = blocks(cfg.n_particles)
        .map(|(b, count)| sample_block(spec, cfg.seed, b, count))
        .collect();
    parts.concat()
}

/// Times in (0, t_window] at which the trajectory from `point` passes `x_det`, ascending.
pub fn crossing_times(spec: &PacketSpec, point: PhaseSpacePoint, x_det: f64, t_window: f64) -> Vec<f64> {
    // x₀ + p₀t/m − (K/2m)t² = X
    let a = -0.5 * spec.k_slope / spec.mass;
    let b = point.p / spec.mass;
    let c = point.x - x_det;
    let mut roots = positive_roots(a, b, c);
    roots.retain(|&t| t <= t_window);
    roots
}

fn mean_and_var(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|t| (t - mean) * (t - mean)).sum();
    (mean, if values.len() > 1 { ss / (n - 1.0) } else { 0.0 })
}

/// Leave-one-group-out jackknife of the standard deviation.
fn jackknife_std_error(times: &[f64]) -> f64 {
    let n = times.len();
    if n < 2 * JACKKNIFE_GROUPS {
        return f64::NAN;
    }
    let group = n / JACKKNIFE_GROUPS;
    let total: f64 = times.iter().sum();
    let total_sq: f64 = times.iter().map(|t| t * t).sum();
    let mut estimates = Vec::with_capacity(JACKKNIFE_GROUPS);
    for g in 0..JACKKNIFE_GROUPS {
        let lo = g * group;
        let hi = if g + 1 == JACKKNIFE_GROUPS { n } else { lo + group };
        let s: f64 = times[lo..hi].iter().sum();
        let sq: f64 = times[lo..hi].iter().map(|t| t * t).sum();
        let m = (n - (hi - lo)) as f64;
        let mean = (total - s) / m;
        let var = ((total_sq - sq) / m - mean * mean).max(0.0) * m / (m - 1.0);
        estimates.push(var.sqrt());
    }
    let g = JACKKNIFE_GROUPS as f64;
    let avg = estimates.iter().sum::<f64>() / g;
    let spread: f64 = estimates.iter().map(|e| (e - avg) * (e - avg)).sum();
    ((g - 1.0) / g * spread).sqrt()
}

/// Pools every crossing of every particle and reports mean, spread and their errors.
pub fn estimate(spec: &PacketSpec, det: &DetectorSpec, cfg: &McConfig) -> Result<McEstimate, McError> {
    if cfg.n_particles == 0 {
        return Err(McError::Config("n_particles must be positive"));
    }
    if !(cfg.t_window > 0.0) {
        return Err(McError::Config("t_window must be positive"));
    }
    let x_det = det.x_detector;
    let per_block: Vec<(Vec<f64>, usize)> = blocks(cfg.n_particles)
        .map(|(b, count)| {
            let mut times = Vec::with_capacity(count);
            let mut never = 0;
            for point in sample_block(spec, cfg.seed, b, count) {
                let crossings = crossing_times(spec, point, x_det, cfg.t_window);
                if crossings.is_empty() {
                    never += 1;
                }
                times.extend(crossings);
            }
            (times, never)
        })
        .collect();

    let n_never = per_block.iter().map(|(_, n)| n).sum();
    let times: Vec<f64> = per_block.into_iter().flat_map(|(t, _)| t).collect();
    if times.is_empty() {
        return Err(McError::NoCrossings { t_window: cfg.t_window });
    }
    let (mean_t, var) = mean_and_var(&times);
    let n = times.len();
    Ok(McEstimate {
        mean_t,
        delta_t: var.sqrt(),
        stderr_mean: (var / n as f64).sqrt(),
        stderr_delta: jackknife_std_error(&times),
        n_crossings: n,
        n_never,
        n_particles: cfg.n_particles,
    })
}
