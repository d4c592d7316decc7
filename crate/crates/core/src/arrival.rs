//! Arrival-time distributions built from |J(X, t)|.
//!
//! The integrals formally run to t = ∞. Here they run over an explicit window
//! `[0, T]` that is either fixed or grown by doubling until the norm and first
//! moment stop changing. The window and whether it hit the cap are part of every
//! result.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classical;
use crate::model::{DetectorSpec, ModelError, PacketSpec, Tolerances, WindowMode};
use crate::quadrature::{integrate_partitioned, QuadError};
use crate::quantum;

/// ∫|J|dt below this counts as "nothing reaches the detector".
pub const NO_ARRIVAL_NORM: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ArrivalError {
    #[error("no probability flux reaches the detector within {t_window:e} s")]
    NoArrival { t_window: f64 },
    #[error(transparent)]
    Quadrature(#[from] QuadError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mechanics {
    Quantum,
    Classical,
}

impl Mechanics {
    pub const BOTH: [Mechanics; 2] = [Mechanics::Quantum, Mechanics::Classical];

    /// Signed current J(x, t) for this mechanics.
    pub fn current(self, spec: &PacketSpec, x: f64, t: f64) -> f64 {
        match self {
            Mechanics::Quantum => quantum::j_q(spec, x, t),
            Mechanics::Classical => classical::j_c(spec, x, t),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mechanics::Quantum => "quantum",
            Mechanics::Classical => "classical",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrivalStats {
    /// ∫|J| dt over the window.
    pub norm: f64,
    /// s
    pub mean_t: f64,
    /// s
    pub delta_t: f64,
    /// Upper limit actually used, s.
    pub t_window: f64,
    /// The adaptive window hit its cap before converging.
    pub truncation_flag: bool,
    /// The variance came out negative beyond rounding and was clamped to zero.
    pub variance_clamped: bool,
    pub neval: usize,
}

/// Where the pulse sits in time; used to seed quadrature breakpoints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pulse {
    pub t_peak: f64,
    pub width: f64,
}

impl Pulse {
    /// Time unit for the scaled integrals; stays positive when the peak sits at t = 0.
    fn time_scale(&self) -> f64 {
        self.t_peak.max(self.width).max(f64::MIN_POSITIVE)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub t_max: f64,
    pub truncated: bool,
    pub pulse: Pulse,
}

/// Smallest positive root of x_c(t) = X, if the packet centre ever reaches the detector.
pub fn ballistic_time(spec: &PacketSpec, x_det: f64) -> Option<f64> {
    // −(K/2m) t² + u t − X = 0
    let a = -0.5 * spec.k_slope / spec.mass;
    let b = spec.u;
    let c = -x_det;
    positive_roots(a, b, c).into_iter().next()
}

/// Positive real roots of a t² + b t + c = 0 in ascending order.
pub(crate) fn positive_roots(a: f64, b: f64, c: f64) -> Vec<f64> {
    let mut roots = Vec::with_capacity(2);
    // Treat the quadratic as linear when its curvature cannot move the root.
    let linear = a == 0.0 || (b != 0.0 && (a * c / (b * b)).abs() < 1e-18);
    if linear {
        if b != 0.0 {
            let r = -c / b;
            if a != 0.0 {
                // one root from the linear limit, the other far away at −b/a
                roots.push(r);
                roots.push(-b / a - r);
            } else {
                roots.push(r);
            }
        }
    } else {
        let disc = b * b - 4.0 * a * c;
        if disc >= 0.0 {
            let sign = if b < 0.0 { -1.0 } else { 1.0 };
            let q = -0.5 * (b + sign * disc.sqrt());
            let r1 = q / a;
            let r2 = if q != 0.0 { c / q } else { r1 };
            roots.push(r1);
            if r2 != r1 {
                roots.push(r2);
            }
        }
    }
    roots.retain(|r| r.is_finite() && *r > 0.0);
    roots.sort_by(f64::total_cmp);
    roots
}

/// First guess for the arrival time and the temporal width of the pulse.
fn pulse_guess(spec: &PacketSpec, x_det: f64) -> Pulse {
    let spread_velocity = spec.momentum_width() / spec.mass;
    let t_guess = ballistic_time(spec, x_det).unwrap_or_else(|| {
        let reach = (x_det.abs() + spec.position_width()) / (spec.u.abs() + spread_velocity);
        if reach.is_finite() && reach > 0.0 {
            reach
        } else {
            1.0 / spec.spread_rate()
        }
    });
    let width_x = quantum::sigma_q(spec, t_guess).max(classical::sigma_c(spec, t_guess));
    let speed = spec.drift_velocity(t_guess).abs() + spread_velocity;
    let width = (width_x / speed).min(t_guess);
    Pulse { t_peak: t_guess, width }
}

fn golden_section_max<F: Fn(f64) -> f64>(f: &F, mut lo: f64, mut hi: f64, iterations: usize) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..iterations {
        if fc >= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv_phi * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv_phi * (hi - lo);
            fd = f(d);
        }
    }
    0.5 * (lo + hi)
}

/// Locates the maximum of |J| near `guess` by a coarse scan followed by golden-section refinement.
pub fn locate_pulse<F: Fn(f64) -> f64>(current: &F, guess: Pulse, t_hi: f64) -> Pulse {
    const SCAN: usize = 400;
    let abs_j = |t: f64| current(t).abs();
    let scan = |lo: f64, hi: f64, log: bool| -> Option<(usize, Vec<f64>)> {
        let grid: Vec<f64> = (0..=SCAN)
            .map(|i| {
                let f = i as f64 / SCAN as f64;
                if log {
                    lo * (hi / lo).powf(f)
                } else {
                    lo + (hi - lo) * f
                }
            })
            .collect();
        let (best, val) = grid
            .iter()
            .enumerate()
            .map(|(i, &t)| (i, abs_j(t)))
            .fold((0, 0.0), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
        (val > 0.0).then_some((best, grid))
    };

    let lo = (guess.t_peak - 12.0 * guess.width).max(0.0);
    let hi = (guess.t_peak + 12.0 * guess.width).min(t_hi).max(lo + guess.width);
    let found = scan(lo, hi, false).or_else(|| {
        let floor = (guess.t_peak * 1e-6).max(f64::MIN_POSITIVE);
        scan(floor, t_hi.max(2.0 * floor), true)
    });
    let Some((best, grid)) = found else {
        return guess;
    };
    let a = grid[best.saturating_sub(1)];
    let b = grid[(best + 1).min(SCAN)];
    let t_peak = golden_section_max(&abs_j, a, b, 80);
    Pulse { t_peak, width: guess.width }
}

/// Breakpoints for `[a, b]`: dense around the pulse, geometric in the tails.
pub fn pulse_partition(pulse: Pulse, a: f64, b: f64) -> Vec<f64> {
    let mut points = vec![a, b];
    let w = pulse.width.max(f64::MIN_POSITIVE);
    let mut steps = vec![0.0, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 6.0];
    let mut s = 8.0;
    while pulse.t_peak + s * w < b || pulse.t_peak - s * w > a {
        steps.push(s);
        s *= 2.0;
        if steps.len() > 200 {
            break;
        }
    }
    for k in steps {
        for sign in [-1.0, 1.0] {
            let t = pulse.t_peak + sign * k * w;
            if t > a && t < b {
                points.push(t);
            }
        }
    }
    points.sort_by(f64::total_cmp);
    let span = b - a;
    points.dedup_by(|x, y| (*x - *y).abs() <= 1e-13 * span);
    points
}

#[derive(Debug, Clone, Copy)]
struct Moments {
    norm: f64,
    first: f64,
    neval: usize,
}

/// ∫|J| and ∫|J| t over [a, b], computed in the scaled time s = t / τ.
fn window_moments<F: Fn(f64) -> f64>(
    current: &F,
    pulse: Pulse,
    a: f64,
    b: f64,
    tol: &Tolerances,
) -> Result<Moments, QuadError> {
    let tau = pulse.time_scale();
    let scaled: Vec<f64> = pulse_partition(pulse, a, b).iter().map(|t| t / tau).collect();
    let g = |s: f64| current(s * tau).abs() * tau;
    let n = integrate_partitioned(g, &scaled, tol)?;
    let m = integrate_partitioned(|s| g(s) * s, &scaled, tol)?;
    Ok(Moments { norm: n.value, first: m.value * tau, neval: n.neval + m.neval })
}

fn relative_change(old: f64, new: f64) -> f64 {
    if new == 0.0 {
        0.0
    } else {
        ((new - old) / new).abs()
    }
}

/// Resolves the integration window shared by all `currents`.
pub fn resolve_window<F: Fn(f64) -> f64>(
    currents: &[F],
    guess: Pulse,
    det: &DetectorSpec,
    tol: &Tolerances,
) -> Result<Window, ArrivalError> {
    let policy = det.window;
    let start = match policy.mode {
        WindowMode::Fixed => policy.t_max,
        WindowMode::Adaptive => (4.0 * guess.t_peak).min(policy.t_cap),
    };
    // Breakpoints are centred on the first current's peak; the narrowest width wins.
    let pulses: Vec<Pulse> = currents.iter().map(|j| locate_pulse(j, guess, policy.t_cap.max(start))).collect();
    let pulse = match pulses.first() {
        Some(first) => Pulse {
            t_peak: first.t_peak,
            width: pulses.iter().map(|p| p.width).fold(f64::INFINITY, f64::min),
        },
        None => guess,
    };

    if policy.mode == WindowMode::Fixed {
        return Ok(Window { t_max: policy.t_max, truncated: false, pulse });
    }

    let mut t = start;
    let mut totals: Vec<Moments> = currents
        .iter()
        .map(|j| window_moments(j, pulse, 0.0, t, tol))
        .collect::<Result<_, _>>()?;
    loop {
        if t >= policy.t_cap {
            if totals.iter().all(|m| m.norm < NO_ARRIVAL_NORM) {
                return Err(ArrivalError::NoArrival { t_window: t });
            }
            return Ok(Window { t_max: t, truncated: true, pulse });
        }
        let next = (2.0 * t).min(policy.t_cap);
        let mut converged = true;
        for (j, total) in currents.iter().zip(totals.iter_mut()) {
            let inc = window_moments(j, pulse, t, next, tol)?;
            let updated = Moments {
                norm: total.norm + inc.norm,
                first: total.first + inc.first,
                neval: total.neval + inc.neval,
            };
            let arrived = updated.norm >= NO_ARRIVAL_NORM;
            if !arrived
                || relative_change(total.norm, updated.norm) > policy.rel_tol_norm
                || relative_change(total.first, updated.first) > policy.rel_tol_moment
            {
                converged = false;
            }
            *total = updated;
        }
        t = next;
        if converged {
            return Ok(Window { t_max: t, truncated: false, pulse });
        }
    }
}

/// Window for both quantum and classical currents at the detector.
pub fn choose_window(spec: &PacketSpec, det: &DetectorSpec, tol: &Tolerances) -> Result<Window, ArrivalError> {
    spec.validate()?;
    det.validate()?;
    let x = det.x_detector;
    let currents = Mechanics::BOTH.map(|mech| move |t: f64| mech.current(spec, x, t));
    resolve_window(&currents, pulse_guess(spec, x), det, tol)
}

/// Normalization, mean and r.m.s. spread of the distribution ∝ |J(t)| on `[0, window.t_max]`.
pub fn arrival_stats<F: Fn(f64) -> f64>(
    current: F,
    window: &Window,
    tol: &Tolerances,
) -> Result<ArrivalStats, ArrivalError> {
    let pulse = window.pulse;
    let tau = pulse.time_scale();
    let t_max = window.t_max;
    let scaled: Vec<f64> = pulse_partition(pulse, 0.0, t_max).iter().map(|t| t / tau).collect();
    let g = |s: f64| current(s * tau).abs();

    let norm_q = integrate_partitioned(g, &scaled, tol)?;
    let norm_scaled = norm_q.value;
    if norm_scaled * tau < NO_ARRIVAL_NORM {
        return Err(ArrivalError::NoArrival { t_window: t_max });
    }
    let first_q = integrate_partitioned(|s| g(s) * s, &scaled, tol)?;
    let mean_s = first_q.value / norm_scaled;
    let central_q = integrate_partitioned(|s| g(s) * (s - mean_s) * (s - mean_s), &scaled, tol)?;
    let mut var_s = central_q.value / norm_scaled;
    let mut variance_clamped = false;
    if var_s < 0.0 {
        variance_clamped = var_s < -1e-12 * mean_s * mean_s;
        var_s = 0.0;
    }

    Ok(ArrivalStats {
        norm: norm_scaled * tau,
        mean_t: mean_s * tau,
        delta_t: var_s.sqrt() * tau,
        t_window: t_max,
        truncation_flag: window.truncated,
        variance_clamped,
        neval: norm_q.neval + first_q.neval + central_q.neval,
    })
}

/// Quantum and classical statistics on a shared window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrivalPair {
    pub quantum: ArrivalStats,
    pub classical: ArrivalStats,
    pub window: Window,
}

pub fn arrival_pair(spec: &PacketSpec, det: &DetectorSpec, tol: &Tolerances) -> Result<ArrivalPair, ArrivalError> {
    let window = choose_window(spec, det, tol)?;
    let x = det.x_detector;
    let quantum = arrival_stats(|t| Mechanics::Quantum.current(spec, x, t), &window, tol)?;
    let classical = arrival_stats(|t| Mechanics::Classical.current(spec, x, t), &window, tol)?;
    Ok(ArrivalPair { quantum, classical, window })
}

/// Sampled current at the detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurrentSeries {
    pub mechanics: Mechanics,
    /// s, strictly increasing
    pub times: Vec<f64>,
    /// |J(X, t)|, s⁻¹
    pub values: Vec<f64>,
    /// J(X, t), s⁻¹
    pub signed: Vec<f64>,
}

impl CurrentSeries {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn peak(&self) -> Option<(f64, f64)> {
        self.times
            .iter()
            .zip(&self.values)
            .fold(None, |acc: Option<(f64, f64)>, (&t, &v)| match acc {
                Some((_, best)) if best >= v => acc,
                _ => Some((t, v)),
            })
    }
}

/// Uniform grid of `n ≥ 2` samples over `[t_start, t_end]`.
pub fn sample_series<F: Fn(f64) -> f64>(
    current: F,
    mechanics: Mechanics,
    t_start: f64,
    t_end: f64,
    n: usize,
) -> CurrentSeries {
    assert!(n >= 2, "a series needs at least two samples");
    assert!(t_end > t_start, "empty sampling interval");
    let step = (t_end - t_start) / (n - 1) as f64;
    let times: Vec<f64> = (0..n)
        .map(|i| if i + 1 == n { t_end } else { t_start + step * i as f64 })
        .collect();
    let signed: Vec<f64> = times.iter().map(|&t| current(t)).collect();
    let values = signed.iter().map(|j| j.abs()).collect();
    CurrentSeries { mechanics, times, values, signed }
}
