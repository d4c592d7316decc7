//! Physical constants, validated parameter sets and numeric tolerance policy.
//!
//! Everything inside the crate is CGS: lengths in cm, masses in g, times in s,
//! forces in dyn. Conversions from the user-facing units (a.m.u., ms) happen at
//! the boundary through [`amu_to_grams`] and friends.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Reduced Planck constant, erg·s.
pub const HBAR: f64 = 1.054571817e-27;

/// Atomic mass unit, g.
pub const AMU: f64 = 1.66053906660e-24;

/// Gaussian exponents below this are flushed to zero instead of producing subnormals.
pub const EXP_FLOOR: f64 = -700.0;

/// The two physical constants the model depends on, bundled for serialization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    pub hbar: f64,
    pub amu: f64,
}

impl Constants {
    pub const CGS: Constants = Constants { hbar: HBAR, amu: AMU };
}

pub fn amu_to_grams(mass_amu: f64) -> f64 {
    mass_amu * AMU
}

pub fn grams_to_amu(mass_g: f64) -> f64 {
    mass_g / AMU
}

pub fn ms_to_s(t_ms: f64) -> f64 {
    t_ms * 1e-3
}

pub fn s_to_ms(t_s: f64) -> f64 {
    t_s * 1e3
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("{0} must be strictly positive")]
    NonPositive(&'static str),
    #[error("{0} must be finite")]
    NonFinite(&'static str),
    #[error("{0} must lie in (0, 1)")]
    OutOfUnitInterval(&'static str),
}

/// Initial Gaussian packet plus the slope of the linear potential `V = K x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PacketSpec {
    /// Width parameter σ₀, cm.
    pub sigma0: f64,
    /// Phase-space correlation parameter C; zero is the minimum-uncertainty packet.
    pub c_param: f64,
    /// Group velocity, cm/s.
    pub u: f64,
    /// Particle mass, g.
    pub mass: f64,
    /// Potential slope K, dyn.
    pub k_slope: f64,
}

/// Combinations of the packet parameters that recur in every closed form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedQuantities {
    /// Mean momentum m·u, g·cm/s.
    pub p_bar: f64,
    /// Carrier wavenumber m·u/ħ, cm⁻¹.
    pub k_wave: f64,
    /// Dispersion rate ħ/(2mσ₀²), s⁻¹.
    pub spread_rate: f64,
}

impl PacketSpec {
    pub fn new(sigma0: f64, c_param: f64, u: f64, mass: f64, k_slope: f64) -> Self {
        Self { sigma0, c_param, u, mass, k_slope }
    }

    /// Same as [`PacketSpec::new`] with the mass given in a.m.u.
    pub fn with_mass_amu(sigma0: f64, c_param: f64, u: f64, mass_amu: f64, k_slope: f64) -> Self {
        Self::new(sigma0, c_param, u, amu_to_grams(mass_amu), k_slope)
    }

    pub fn mass_amu(&self) -> f64 {
        grams_to_amu(self.mass)
    }

    pub fn validate(self) -> Result<Self, ModelError> {
        let fields = [
            ("sigma0", self.sigma0),
            ("c_param", self.c_param),
            ("u", self.u),
            ("mass", self.mass),
            ("k_slope", self.k_slope),
        ];
        if let Some((name, _)) = fields.iter().find(|(_, v)| !v.is_finite()) {
            return Err(ModelError::NonFinite(name));
        }
        if self.sigma0 <= 0.0 {
            return Err(ModelError::NonPositive("sigma0"));
        }
        if self.mass <= 0.0 {
            return Err(ModelError::NonPositive("mass"));
        }
        let d = self.derived();
        if !d.p_bar.is_finite() || !d.k_wave.is_finite() || !d.spread_rate.is_finite() {
            return Err(ModelError::NonFinite("derived quantities"));
        }
        Ok(self)
    }

    pub fn derived(&self) -> DerivedQuantities {
        DerivedQuantities {
            p_bar: self.mass * self.u,
            k_wave: self.mass * self.u / HBAR,
            spread_rate: self.spread_rate(),
        }
    }

    /// ħ/(2mσ₀²)
    pub fn spread_rate(&self) -> f64 {
        HBAR / (2.0 * self.mass * self.sigma0 * self.sigma0)
    }

    pub fn p_bar(&self) -> f64 {
        self.mass * self.u
    }

    /// Packet centre u·t − K t²/(2m); shared by the quantum and classical densities.
    pub fn center(&self, t: f64) -> f64 {
        self.u * t - 0.5 * self.k_slope / self.mass * t * t
    }

    /// Velocity of the packet centre, u − K t/m.
    pub fn drift_velocity(&self, t: f64) -> f64 {
        self.u - self.k_slope * t / self.mass
    }

    /// Standard deviation of the initial momentum distribution, ħ/(2σ₀).
    pub fn momentum_width(&self) -> f64 {
        HBAR / (2.0 * self.sigma0)
    }

    /// Standard deviation of the initial position distribution, σ₀√(1+C²).
    pub fn position_width(&self) -> f64 {
        self.sigma0 * (1.0 + self.c_param * self.c_param).sqrt()
    }
}

/// How the upper limit of the time integrals is picked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowMode {
    Fixed,
    Adaptive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowPolicy {
    pub mode: WindowMode,
    /// Upper limit used verbatim in fixed mode, s.
    pub t_max: f64,
    /// Relative change of ∫|J|dt between doublings that counts as converged.
    pub rel_tol_norm: f64,
    /// Relative change of ∫|J| t dt between doublings that counts as converged.
    pub rel_tol_moment: f64,
    /// Hard cap on the adaptive window, s.
    pub t_cap: f64,
}

impl Default for WindowPolicy {
    fn default() -> Self {
        Self {
            mode: WindowMode::Adaptive,
            t_max: 1.0,
            rel_tol_norm: 1e-10,
            rel_tol_moment: 1e-9,
            t_cap: 10.0,
        }
    }
}

impl WindowPolicy {
    pub fn fixed(t_max: f64) -> Self {
        Self { mode: WindowMode::Fixed, t_max, ..Self::default() }
    }

    pub fn validate(self) -> Result<Self, ModelError> {
        for (name, v) in [
            ("t_max", self.t_max),
            ("t_cap", self.t_cap),
            ("rel_tol_norm", self.rel_tol_norm),
            ("rel_tol_moment", self.rel_tol_moment),
        ] {
            if !v.is_finite() {
                return Err(ModelError::NonFinite(name));
            }
            if v <= 0.0 {
                return Err(ModelError::NonPositive(name));
            }
        }
        if self.rel_tol_norm >= 1.0 {
            return Err(ModelError::OutOfUnitInterval("rel_tol_norm"));
        }
        if self.rel_tol_moment >= 1.0 {
            return Err(ModelError::OutOfUnitInterval("rel_tol_moment"));
        }
        Ok(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorSpec {
    /// Detector position X, cm.
    pub x_detector: f64,
    pub window: WindowPolicy,
}

impl DetectorSpec {
    pub fn new(x_detector: f64, window: WindowPolicy) -> Self {
        Self { x_detector, window }
    }

    pub fn validate(self) -> Result<Self, ModelError> {
        if !self.x_detector.is_finite() {
            return Err(ModelError::NonFinite("x_detector"));
        }
        self.window.validate()?;
        Ok(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Absolute quadrature tolerance, applied to integrals in scaled (dimensionless) variables.
    pub quad_abs: f64,
    pub quad_rel: f64,
    /// Finite-difference step as a fraction of the local packet width.
    pub fd_step_scale: f64,
    pub max_subdivisions: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { quad_abs: 1e-13, quad_rel: 1e-11, fd_step_scale: 1e-4, max_subdivisions: 4000 }
    }
}

impl Tolerances {
    pub fn validate(self) -> Result<Self, ModelError> {
        for (name, v) in [
            ("quad_abs", self.quad_abs),
            ("quad_rel", self.quad_rel),
            ("fd_step_scale", self.fd_step_scale),
        ] {
            if !v.is_finite() {
                return Err(ModelError::NonFinite(name));
            }
            if v <= 0.0 {
                return Err(ModelError::NonPositive(name));
            }
        }
        if self.quad_rel >= 1.0 {
            return Err(ModelError::OutOfUnitInterval("quad_rel"));
        }
        if self.max_subdivisions == 0 {
            return Err(ModelError::NonPositive("max_subdivisions"));
        }
        Ok(self)
    }
}

/// Normalized Gaussian density with the crate-wide underflow policy.
pub fn normal_pdf(offset: f64, width: f64) -> f64 {
    let z = offset / width;
    let exponent = -0.5 * z * z;
    if exponent < EXP_FLOOR {
        return 0.0;
    }
    exponent.exp() / ((2.0 * std::f64::consts::PI).sqrt() * width)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table1_light() -> PacketSpec {
        PacketSpec::with_mass_amu(1e-4, 1000.0, 10.0, 1.0, 0.0)
    }

    #[test]
    fn accepts_table_and_figure_parameters() {
        assert!(table1_light().validate().is_ok());
        let fig1 = PacketSpec::with_mass_amu(1e-5, 50.0, 1e4, 720.0, 0.0);
        assert_eq!(fig1.validate(), Ok(fig1));
    }

    #[test]
    fn rejects_bad_fields() {
        let mut s = table1_light();
        s.sigma0 = 0.0;
        assert_eq!(s.validate(), Err(ModelError::NonPositive("sigma0")));
        let mut s = table1_light();
        s.mass = -1.0;
        assert_eq!(s.validate(), Err(ModelError::NonPositive("mass")));
        let mut s = table1_light();
        s.c_param = f64::NAN;
        assert_eq!(s.validate(), Err(ModelError::NonFinite("c_param")));
        let mut s = table1_light();
        s.u = f64::INFINITY;
        assert_eq!(s.validate(), Err(ModelError::NonFinite("u")));
    }

    #[test]
    fn derived_quantities_match_golden_values() {
        let s = PacketSpec::with_mass_amu(1e-4, 0.0, 10.0, 1.0, 0.0);
        let d = s.derived();
        assert_eq!(d.p_bar, 1.66053906660e-23);
        // 50-digit reference: 31753.899628488270822113279632249...
        let golden = 31753.899628488270822;
        assert!((d.spread_rate - golden).abs() / golden < 1e-14, "{}", d.spread_rate);

        let still = PacketSpec::with_mass_amu(1e-4, 0.0, 0.0, 1.0, 0.0).derived();
        assert_eq!(still.p_bar, 0.0);
        assert_eq!(still.k_wave, 0.0);
    }

    #[test]
    fn derived_is_pure() {
        let s = table1_light();
        let a = s.derived();
        let b = s.derived();
        assert_eq!(a.spread_rate.to_bits(), b.spread_rate.to_bits());
        assert_eq!(a.k_wave.to_bits(), b.k_wave.to_bits());
    }

    #[test]
    fn window_and_tolerance_validation() {
        assert!(WindowPolicy::default().validate().is_ok());
        let w = WindowPolicy { rel_tol_norm: 1.0, ..WindowPolicy::default() };
        assert_eq!(w.validate(), Err(ModelError::OutOfUnitInterval("rel_tol_norm")));
        assert_eq!(WindowPolicy::fixed(0.0).validate(), Err(ModelError::NonPositive("t_max")));
        let t = Tolerances { quad_rel: 2.0, ..Tolerances::default() };
        assert!(t.validate().is_err());
        assert!(DetectorSpec::new(f64::NAN, WindowPolicy::default()).validate().is_err());
    }

    #[test]
    fn normal_pdf_underflow_policy() {
        assert_eq!(normal_pdf(50.0, 1.0), 0.0);
        let peak = normal_pdf(0.0, 2.0);
        assert!((peak - 1.0 / (2.0 * (2.0 * std::f64::consts::PI).sqrt())).abs() < 1e-16);
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn amu_round_trip_within_one_ulp(m in 1e-3f64..1e8) {
                let back = grams_to_amu(amu_to_grams(m));
                let ulp = f64::EPSILON * m;
                prop_assert!((back - m).abs() <= ulp);
            }
        }
    }
}
