//! Shared fixtures for the criterion benches.

use arrival_core::{DetectorSpec, PacketSpec, WindowPolicy};

/// Table-1 packet (C = 1000, σ₀ = 1e-4 cm, u = 10 cm/s) at the given mass.
pub fn table1_packet(mass_amu: f64) -> PacketSpec {
    PacketSpec::with_mass_amu(1e-4, 1000.0, 10.0, mass_amu, 0.0)
}

pub fn table_detector() -> DetectorSpec {
    DetectorSpec::new(0.1, WindowPolicy::default())
}
