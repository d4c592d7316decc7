//! Liouville evolution of the product-form initial phase-space density.
//!
//! The production path uses the closed forms for D(x,p,t), ρ_C and J_C. The
//! `*_by_momentum_quadrature` functions recompute ρ_C and J_C by integrating
//! D over p numerically and exist to cross-check the closed forms.

use serde::{Deserialize, Serialize};

use crate::model::{normal_pdf, PacketSpec, Tolerances, EXP_FLOOR, HBAR};
use crate::quadrature::{integrate_partitioned, QuadError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseSpacePoint {
    /// cm
    pub x: f64,
    /// g·cm/s
    pub p: f64,
}

impl PhaseSpacePoint {
    pub fn new(x: f64, p: f64) -> Self {
        Self { x, p }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassicalSample {
    pub x: f64,
    pub t: f64,
    pub rho: f64,
    pub current: f64,
}

/// An initial phase-space density that can be transported along the Hamilton flow.
pub trait InitialDensity {
    fn density(&self, point: PhaseSpacePoint) -> f64;
}

/// |Ψ(x₀,0)|² |Φ(p₀,0)|², the product of the initial quantum marginals.
#[derive(Debug, Clone, Copy)]
pub struct ProductDensity<'a> {
    pub spec: &'a PacketSpec,
}

impl InitialDensity for ProductDensity<'_> {
    fn density(&self, point: PhaseSpacePoint) -> f64 {
        d0(self.spec, point.x, point.p)
    }
}

fn d_exponent(spec: &PacketSpec, x_term: f64, p_term: f64) -> f64 {
    let s0 = spec.sigma0;
    let c = spec.c_param;
    -x_term * x_term / (2.0 * s0 * s0 * (1.0 + c * c)) - 2.0 * s0 * s0 * p_term * p_term / (HBAR * HBAR)
}

fn d_prefactor(spec: &PacketSpec) -> f64 {
    let c = spec.c_param;
    1.0 / (std::f64::consts::PI * HBAR * (1.0 + c * c).sqrt())
}

pub fn d0(spec: &PacketSpec, x0: f64, p0: f64) -> f64 {
    let e = d_exponent(spec, x0, p0 - spec.p_bar());
    if e < EXP_FLOOR {
        return 0.0;
    }
    d_prefactor(spec) * e.exp()
}

/// Hamilton flow for H = p²/2m + K x.
pub fn hamilton_flow(spec: &PacketSpec, point: PhaseSpacePoint, t: f64) -> PhaseSpacePoint {
    let m = spec.mass;
    let k = spec.k_slope;
    PhaseSpacePoint {
        x: point.x + point.p * t / m - 0.5 * k / m * t * t,
        p: point.p - k * t,
    }
}

/// Maps a point at time `t` back to its initial condition.
pub fn inverse_flow(spec: &PacketSpec, point: PhaseSpacePoint, t: f64) -> PhaseSpacePoint {
    let m = spec.mass;
    let k = spec.k_slope;
    let p0 = point.p + k * t;
    PhaseSpacePoint { x: point.x - p0 * t / m + 0.5 * k / m * t * t, p: p0 }
}

/// D(x,p,t) written out directly in (x, p, t).
pub fn d_t(spec: &PacketSpec, x: f64, p: f64, t: f64) -> f64 {
    let m = spec.mass;
    let k = spec.k_slope;
    let x_term = x - p * t / m - 0.5 * k / m * t * t;
    let p_term = p + k * t - spec.p_bar();
    let e = d_exponent(spec, x_term, p_term);
    if e < EXP_FLOOR {
        return 0.0;
    }
    d_prefactor(spec) * e.exp()
}

/// D(x,p,t) as the initial density pulled back along the flow.
pub fn evolve_density<D: InitialDensity>(initial: &D, spec: &PacketSpec, x: f64, p: f64, t: f64) -> f64 {
    initial.density(inverse_flow(spec, PhaseSpacePoint::new(x, p), t))
}

pub fn d_t_via_flow(spec: &PacketSpec, x: f64, p: f64, t: f64) -> f64 {
    evolve_density(&ProductDensity { spec }, spec, x, p, t)
}

/// σ_C(t)² = σ₀²(1 + C² + (ħt/2mσ₀²)²)
pub fn sigma_c_sq(spec: &PacketSpec, t: f64) -> f64 {
    let c = spec.c_param;
    let rt = spec.spread_rate() * t;
    spec.sigma0 * spec.sigma0 * (1.0 + c * c + rt * rt)
}

pub fn sigma_c(spec: &PacketSpec, t: f64) -> f64 {
    sigma_c_sq(spec, t).sqrt()
}

pub fn rho_c(spec: &PacketSpec, x: f64, t: f64) -> f64 {
    normal_pdf(x - spec.center(t), sigma_c(spec, t))
}

/// Mean velocity of the ensemble at (x, t): u − Kt/m + (x − x_c)(ħ²t/2mσ₀²)/(2mσ_C²).
pub fn velocity_c(spec: &PacketSpec, x: f64, t: f64) -> f64 {
    let m = spec.mass;
    let s0 = spec.sigma0;
    let offset = x - spec.center(t);
    spec.drift_velocity(t) + offset * (HBAR * HBAR * t / (2.0 * m * s0 * s0)) / (2.0 * m * sigma_c_sq(spec, t))
}

pub fn j_c(spec: &PacketSpec, x: f64, t: f64) -> f64 {
    let rho = rho_c(spec, x, t);
    if rho == 0.0 {
        return 0.0;
    }
    rho * velocity_c(spec, x, t)
}

pub fn sample_c(spec: &PacketSpec, x: f64, t: f64) -> ClassicalSample {
    ClassicalSample { x, t, rho: rho_c(spec, x, t), current: j_c(spec, x, t) }
}

/// Integration grid in p for a fixed (x, t): the momentum marginal p̄ − Kt ± 12 widths,
/// refined around the conditional peak of D in p.
fn momentum_partition(spec: &PacketSpec, x: f64, t: f64) -> Vec<f64> {
    const SPAN: f64 = 12.0;
    let m = spec.mass;
    let k = spec.k_slope;
    let s0 = spec.sigma0;
    let c = spec.c_param;
    let centre = spec.p_bar() - k * t;
    let width = spec.momentum_width();
    let (lo, hi) = (centre - SPAN * width, centre + SPAN * width);

    // D is Gaussian in p with curvature a(t/m)² + b.
    let a = 1.0 / (2.0 * s0 * s0 * (1.0 + c * c));
    let b = 2.0 * s0 * s0 / (HBAR * HBAR);
    let curv = a * (t / m) * (t / m) + b;
    let peak = (a * (t / m) * (x - 0.5 * k / m * t * t) + b * centre) / curv;
    let cond_width = (0.5 / curv).sqrt();

    let mut points = vec![lo, hi];
    for n in [0.0, 1.0, 2.0, 4.0, 8.0, 16.0] {
        for sign in [-1.0, 1.0] {
            let p = peak + sign * n * cond_width;
            if p > lo && p < hi {
                points.push(p);
            }
        }
    }
    points.sort_by(f64::total_cmp);
    points.dedup_by(|x, y| (*x - *y).abs() <= 1e-12 * width);
    points
}

fn momentum_tolerances() -> Tolerances {
    Tolerances { quad_abs: f64::MIN_POSITIVE, quad_rel: 1e-13, ..Tolerances::default() }
}

/// ∫ D(x,p,t) dp by adaptive quadrature.
pub fn rho_c_by_momentum_quadrature(spec: &PacketSpec, x: f64, t: f64) -> Result<f64, QuadError> {
    let points = momentum_partition(spec, x, t);
    let q = integrate_partitioned(|p| d_t(spec, x, p, t), &points, &momentum_tolerances())?;
    Ok(q.value)
}

/// (1/m) ∫ p D(x,p,t) dp by adaptive quadrature.
pub fn j_c_by_momentum_quadrature(spec: &PacketSpec, x: f64, t: f64) -> Result<f64, QuadError> {
    let points = momentum_partition(spec, x, t);
    let q = integrate_partitioned(|p| p * d_t(spec, x, p, t), &points, &momentum_tolerances())?;
    Ok(q.value / spec.mass)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PacketSpec;
    use crate::quadrature::integrate_adaptive;
    use crate::quantum;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }

    fn tilted() -> PacketSpec {
        PacketSpec::with_mass_amu(1e-4, 3.0, 10.0, 50.0, 2e-21)
    }

    fn table1_heavy() -> PacketSpec {
        PacketSpec::with_mass_amu(1e-4, 1000.0, 10.0, 10000.0, 0.0)
    }

    fn random_point(spec: &PacketSpec, rng: &mut ChaCha8Rng) -> PhaseSpacePoint {
        PhaseSpacePoint::new(
            rng.random_range(-2.0..2.0) * spec.position_width(),
            spec.p_bar() + rng.random_range(-2.0..2.0) * spec.momentum_width(),
        )
    }

    #[test]
    fn d0_peak_and_normalization() {
        let spec = tilted();
        let peak = d0(&spec, 0.0, spec.p_bar());
        assert!(rel(peak, 1.0 / (std::f64::consts::PI * HBAR * 10f64.sqrt())) < 1e-15);

        let tol = Tolerances { quad_abs: f64::MIN_POSITIVE, quad_rel: 1e-12, ..Tolerances::default() };
        let xw = spec.position_width();
        let pw = spec.momentum_width();
        let inner = |x0: f64| {
            integrate_adaptive(|p0| d0(&spec, x0, p0), spec.p_bar() - 12.0 * pw, spec.p_bar() + 12.0 * pw, &tol)
                .unwrap()
                .value
        };
        let total = integrate_adaptive(inner, -12.0 * xw, 12.0 * xw, &tol).unwrap().value;
        assert!((total - 1.0).abs() < 1e-8, "{total}");
    }

    #[test]
    fn d0_marginals_are_quantum_marginals() {
        let spec = tilted();
        let pw = spec.momentum_width();
        let xw = spec.position_width();
        let tol = Tolerances { quad_abs: f64::MIN_POSITIVE, quad_rel: 1e-13, ..Tolerances::default() };
        for i in -8..=8 {
            let x0 = i as f64 * 0.4 * xw;
            let marginal = integrate_adaptive(
                |p0| d0(&spec, x0, p0),
                spec.p_bar() - 12.0 * pw,
                spec.p_bar() + 12.0 * pw,
                &tol,
            )
            .unwrap()
            .value;
            assert!(rel(marginal, quantum::psi(&spec, x0, 0.0).norm_sqr()) < 1e-10);

            let p0 = spec.p_bar() + i as f64 * 0.4 * pw;
            let marginal = integrate_adaptive(|x| d0(&spec, x, p0), -12.0 * xw, 12.0 * xw, &tol).unwrap().value;
            // |Φ(p,0)|² = √(2σ₀²/πħ²) exp(−2σ₀²(p−p̄)²/ħ²)
            let s0 = spec.sigma0;
            let dp = p0 - spec.p_bar();
            let phi_sq = (2.0 * s0 * s0 / (std::f64::consts::PI * HBAR * HBAR)).sqrt()
                * (-2.0 * s0 * s0 * dp * dp / (HBAR * HBAR)).exp();
            assert!(rel(marginal, phi_sq) < 1e-10);
        }
    }

    #[test]
    fn flow_identities() {
        let spec = tilted();
        let pt = PhaseSpacePoint::new(1e-3, spec.p_bar() * 0.9);
        assert_eq!(hamilton_flow(&spec, pt, 0.0), pt);

        let free = PacketSpec { k_slope: 0.0, ..spec };
        let moved = hamilton_flow(&free, pt, 0.3);
        assert_eq!(moved.p, pt.p);
        assert!(rel(moved.x, pt.x + pt.p * 0.3 / free.mass) < 1e-15);
        let two_step = hamilton_flow(&free, hamilton_flow(&free, pt, 0.1), 0.2);
        assert!(rel(two_step.x, moved.x) < 1e-12);
        assert!(rel(two_step.p, moved.p) < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let start = random_point(&spec, &mut rng);
            let t = rng.random_range(0.0..0.05);
            let back = inverse_flow(&spec, hamilton_flow(&spec, start, t), t);
            assert!((back.x - start.x).abs() <= 1e-12 * spec.position_width().max(start.x.abs()));
            assert!(rel(back.p, start.p) < 1e-12);
        }
    }

    #[test]
    fn verbatim_density_equals_pullback() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for spec in [tilted(), PacketSpec { k_slope: -5e-21, ..tilted() }, table1_heavy()] {
            for _ in 0..500 {
                let t = rng.random_range(0.0..0.05);
                let pt = hamilton_flow(&spec, random_point(&spec, &mut rng), t);
                let a = d_t(&spec, pt.x, pt.p, t);
                let b = d_t_via_flow(&spec, pt.x, pt.p, t);
                assert!(rel(a, b) < 1e-12, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn density_constant_along_characteristics() {
        let spec = tilted();
        assert_eq!(d_t(&spec, 2e-4, spec.p_bar(), 0.0), d0(&spec, 2e-4, spec.p_bar()));
        // Rounding in x − pt/m grows with the distance travelled in units of the packet
        // width, so the times are kept to a few hundred widths of travel.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for spec in [spec, table1_heavy()] {
            let t_max = 100.0 * spec.position_width() / spec.u;
            for _ in 0..1000 {
                let start = random_point(&spec, &mut rng);
                let t = rng.random_range(0.0..t_max);
                let end = hamilton_flow(&spec, start, t);
                assert!(rel(d_t(&spec, end.x, end.p, t), d0(&spec, start.x, start.p)) < 1e-12);
            }
        }
    }

    #[test]
    fn widths() {
        let spec = tilted();
        assert_eq!(sigma_c(&spec, 0.0), quantum::sigma_q(&spec, 0.0));
        assert!(rel(sigma_c(&spec, 0.0), spec.position_width()) < 1e-15);
        // 50-digit reference 0.100000050083883903356034...
        assert!(rel(sigma_c(&table1_heavy(), 0.0129), 0.100_000_050_083_883_903_4) < 1e-14);
        let min_unc = PacketSpec { c_param: 0.0, ..spec };
        for &t in &[1e-3, 0.1, 3.0] {
            assert_eq!(sigma_c(&min_unc, t), quantum::sigma_q(&min_unc, t));
        }
    }

    #[test]
    fn center_values() {
        let spec = tilted();
        let t = 0.02;
        let xc = spec.center(t);
        let sc = sigma_c(&spec, t);
        assert!(rel(rho_c(&spec, xc, t), 1.0 / (2.0 * std::f64::consts::PI * sc * sc).sqrt()) < 1e-15);
        assert!(rel(j_c(&spec, xc, t), rho_c(&spec, xc, t) * spec.drift_velocity(t)) < 1e-15);
    }

    #[test]
    fn closed_forms_match_momentum_integrals() {
        for spec in [tilted(), table1_heavy(), PacketSpec::with_mass_amu(1e-5, 50.0, 1e4, 1.0, 0.0)] {
            let t_ref = 0.1 / spec.u;
            for it in 1..=5 {
                let t = t_ref * it as f64 * 0.4;
                let sc = sigma_c(&spec, t);
                for ix in 0..10 {
                    let x = spec.center(t) + (ix as f64 - 4.5) * 0.6 * sc;
                    let rho = rho_c_by_momentum_quadrature(&spec, x, t).unwrap();
                    let j = j_c_by_momentum_quadrature(&spec, x, t).unwrap();
                    assert!(rel(rho, rho_c(&spec, x, t)) < 1e-8, "rho at x={x} t={t}");
                    assert!(rel(j, j_c(&spec, x, t)) < 1e-8, "j at x={x} t={t}");
                }
            }
        }
    }

    #[test]
    fn c_zero_currents_coincide() {
        let spec = PacketSpec { c_param: 0.0, ..tilted() };
        for &t in &[1e-4, 1e-2, 0.5] {
            for i in -10..=10 {
                let x = spec.center(t) + i as f64 * 0.3 * sigma_c(&spec, t);
                let q = quantum::j_q(&spec, x, t);
                let c = j_c(&spec, x, t);
                assert!(rel(c, q) < 1e-12);
            }
        }
    }
}
