//! Quantum and classical arrival-time distributions for a Gaussian wave packet
//! in a linear potential `V = K x`.
//!
//! The quantum side evolves the packet with the Schrödinger equation; the
//! classical side transports the matching phase-space ensemble with the
//! Liouville equation. Both define an arrival-time distribution at a detector
//! through the modulus of the probability current, |J(X, t)|.

#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![cfg_attr(test, allow(clippy::excessive_precision))]

pub mod arrival;
pub mod classical;
pub mod mc;
pub mod model;
pub mod quadrature;
pub mod quantum;
pub mod report;
pub mod selftest;
pub mod sweep;

pub use arrival::{arrival_pair, arrival_stats, choose_window, ArrivalError, ArrivalPair, ArrivalStats, CurrentSeries, Mechanics, Window};
pub use classical::PhaseSpacePoint;
pub use model::{DetectorSpec, ModelError, PacketSpec, Tolerances, WindowMode, WindowPolicy, AMU, HBAR};
pub use mc::{McConfig, McError, McEstimate};
pub use sweep::{convergence_threshold, figure_data, run_sweep, table_plan, ConvergenceReport, FigureData, FigureId, SeriesPair, SweepError, SweepPlan, SweepRow};
