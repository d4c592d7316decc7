//! End-to-end checks of the reproduction targets and physical invariants.
//!
//! Each check returns a [`CheckOutcome`] instead of panicking so the same code
//! backs both the test suite and the `selftest` command.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::arrival::arrival_pair;
use crate::classical::{j_c, j_c_by_momentum_quadrature, rho_c, rho_c_by_momentum_quadrature, sigma_c, sigma_c_sq};
use crate::mc::{self, McConfig};
use crate::model::{DetectorSpec, PacketSpec, Tolerances, WindowPolicy};
use crate::quantum::{continuity_residual, default_fd_steps, j_q, sigma_q, sigma_q_sq};
use crate::report::{write_figure, write_rows, Format};
use crate::sweep::{convergence_threshold, figure_data, run_sweep, table_plan, FigureId, SeriesPair, SweepRow, DEFAULT_EPS};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckOutcome {
    fn new(id: u8, name: &'static str, failures: Vec<String>, summary: String) -> Self {
        let passed = failures.is_empty();
        let detail = if passed { summary } else { format!("{summary}; {}", failures.join("; ")) };
        Self { id, name, passed, detail }
    }

    pub fn line(&self) -> String {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        format!("[{tag}] {}. {}: {}", self.id, self.name, self.detail)
    }
}

/// Reference rows `(table, mass_amu, t_c, t_q, dt_c, dt_q)` in ms.
pub const REFERENCE_ROWS: [(u8, f64, [f64; 4]); 24] = [
    (1, 1.0, [68.684, 141.671, 16.592, 22.543]),
    (1, 5.0, [13.008, 14.575, 8.069, 9.523]),
    (1, 25.0, [12.881, 13.172, 7.940, 8.199]),
    (1, 50.0, [12.877, 13.025, 7.936, 8.064]),
    (1, 100.0, [12.876, 12.947, 7.935, 7.999]),
    (1, 500.0, [12.876, 12.890, 7.935, 7.947]),
    (1, 1000.0, [12.876, 12.883, 7.935, 7.941]),
    (1, 5000.0, [12.876, 12.877, 7.935, 7.936]),
    (1, 10000.0, [12.876, 12.876, 7.935, 7.935]),
    (2, 1.0, [115.021, 150.207, 22.686, 24.223]),
    (2, 5.0, [10.397, 11.324, 4.808, 5.654]),
    (2, 25.0, [10.281, 10.456, 4.711, 4.865]),
    (2, 50.0, [10.277, 10.365, 4.708, 4.784]),
    (2, 100.0, [10.276, 10.321, 4.707, 4.745]),
    (2, 500.0, [10.276, 10.285, 4.707, 4.715]),
    (2, 1000.0, [10.276, 10.281, 4.707, 4.711]),
    (2, 5000.0, [10.276, 10.276, 4.707, 4.707]),
    (3, 1.0, [201.172, 187.203, 28.556, 27.540]),
    (3, 5.0, [10.124, 10.321, 1.206, 1.697]),
    (3, 25.0, [10.037, 10.126, 1.064, 1.329]),
    (3, 50.0, [10.001, 10.002, 1.003, 1.128]),
    (3, 100.0, [10.000, 10.009, 1.000, 1.032]),
    (3, 500.0, [10.000, 10.002, 1.000, 1.006]),
    (3, 1000.0, [10.000, 10.000, 1.000, 1.000]),
];

/// Rows with smaller masses depend on the unstated window and are only reported.
pub const ASSERTED_MIN_MASS_AMU: f64 = 25.0;
pub const TABLE_TOLERANCE: f64 = 5e-3;
pub const TABLE_RUNTIME_LIMIT_S: f64 = 60.0;
pub const MC_PARTICLES: usize = 1_000_000;
pub const MC_SEED: u64 = 20_240_601;

const COLUMNS: [&str; 4] = ["t_c", "t_q", "dt_c", "dt_q"];

fn row_values(row: &SweepRow) -> [f64; 4] {
    [row.t_c_ms, row.t_q_ms, row.dt_c_ms, row.dt_q_ms]
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn table_rows(table: u8) -> Vec<SweepRow> {
    run_sweep(&table_plan(table).expect("built-in table")).expect("built-in plan is valid")
}

/// Table rows with m ≥ 25 amu within ±0.5% of the reference values, all three tables in under 60 s.
pub fn check_table_reproduction() -> CheckOutcome {
    let start = Instant::now();
    let tables: Vec<(u8, Vec<SweepRow>)> = (1..=3).map(|t| (t, table_rows(t))).collect();
    let elapsed = start.elapsed().as_secs_f64();

    let mut failures = Vec::new();
    let mut informational = Vec::new();
    let mut worst = 0.0f64;
    for (table, mass, reference) in REFERENCE_ROWS {
        let rows = &tables[table as usize - 1].1;
        let Some(row) = rows.iter().find(|r| r.mass_amu == mass) else {
            failures.push(format!("T{table} m={mass} missing"));
            continue;
        };
        let got = row_values(row);
        for (k, (&g, &want)) in got.iter().zip(&reference).enumerate() {
            let dev = rel(g, want);
            if mass < ASSERTED_MIN_MASS_AMU {
                if k == 0 {
                    informational.push(format!(
                        "T{table} m={mass}: t_c={g:.3} (ref {want}), window {:.3} s{}",
                        row.window_s,
                        if row.truncated { " truncated" } else { "" }
                    ));
                }
                continue;
            }
            worst = worst.max(dev);
            if !(dev <= TABLE_TOLERANCE) {
                failures.push(format!("T{table} m={mass} {}={g:.3} vs {want} ({:.2}%)", COLUMNS[k], 100.0 * dev));
            }
        }
    }
    if elapsed >= TABLE_RUNTIME_LIMIT_S {
        failures.push(format!("runtime {elapsed:.1} s"));
    }
    let summary = format!(
        "worst asserted deviation {:.3}%, runtime {:.4} s; informational: {}",
        100.0 * worst,
        elapsed,
        informational.join(", ")
    );
    CheckOutcome::new(1, "table reproduction", failures, summary)
}

/// Convergence thresholds at ε = 1e-3: 1000 amu for the C = 100 plan and 5000 amu for the C = 500 plan.
pub fn check_convergence_thresholds() -> CheckOutcome {
    let mut failures = Vec::new();
    let mut found = Vec::new();
    for (table, expected) in [(3u8, 1000.0), (2u8, 5000.0)] {
        match convergence_threshold(&table_rows(table), DEFAULT_EPS) {
            Ok(report) => {
                found.push(format!("T{table} -> {}", report.threshold_mass_amu));
                if report.threshold_mass_amu != expected {
                    failures.push(format!("T{table} threshold {} amu, expected {expected}", report.threshold_mass_amu));
                }
            }
            Err(err) => {
                found.push(format!("T{table} -> {err}"));
                failures.push(format!("T{table}: {err}, expected {expected} amu"));
            }
        }
    }
    CheckOutcome::new(2, "convergence thresholds", failures, found.join(", "))
}

fn random_c0_spec(rng: &mut ChaCha8Rng, x_det: f64) -> PacketSpec {
    let mass_amu = 10f64.powf(rng.random_range(0.0..4.0));
    let sigma0 = 10f64.powf(rng.random_range(-5.0..-3.0));
    let u = 10f64.powf(rng.random_range(0.0..3.0));
    let accel = rng.random_range(-1.0..1.0) * u * u / (4.0 * x_det);
    let spec = PacketSpec::with_mass_amu(sigma0, 0.0, u, mass_amu, 0.0);
    PacketSpec { k_slope: spec.mass * accel, ..spec }
}

/// With C = 0 the quantum and classical currents and arrival statistics coincide.
pub fn check_c_zero_coincidence() -> CheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x_det = 0.1;
    let det = DetectorSpec::new(x_det, WindowPolicy::default());
    let tol = Tolerances::default();
    let mut failures = Vec::new();
    let (mut worst_j, mut worst_stats) = (0.0f64, 0.0f64);
    for draw in 0..5 {
        let spec = random_c0_spec(&mut rng, x_det);
        let t_b = x_det / spec.u;
        let mut gaps = Vec::with_capacity(2000);
        let mut peak = 0.0f64;
        for it in 0..20 {
            let t = t_b * (0.1 + 1.9 * it as f64 / 19.0);
            let width = sigma_q(&spec, t);
            for ix in 0..100 {
                let x = spec.center(t) + (ix as f64 / 99.0 * 8.0 - 4.0) * width;
                let q = j_q(&spec, x, t);
                peak = peak.max(q.abs());
                gaps.push((q - j_c(&spec, x, t)).abs());
            }
        }
        let gap = gaps.iter().fold(0.0f64, |a, &b| a.max(b)) / peak;
        worst_j = worst_j.max(gap);
        if !(gap < 1e-10) {
            failures.push(format!("draw {draw}: current gap {gap:e}"));
        }
        match arrival_pair(&spec, &det, &tol) {
            Ok(pair) => {
                let d = rel(pair.quantum.mean_t, pair.classical.mean_t)
                    .max(rel(pair.quantum.delta_t, pair.classical.delta_t));
                worst_stats = worst_stats.max(d);
                if !(d < 1e-9) {
                    failures.push(format!("draw {draw}: stats differ by {d:e}"));
                }
            }
            Err(err) => failures.push(format!("draw {draw}: {err}")),
        }
    }
    let summary = format!("max current gap {worst_j:.2e}, max stats deviation {worst_stats:.2e}");
    CheckOutcome::new(3, "C=0 coincidence", failures, summary)
}

/// σ_C² − σ_Q² = −2Cσ₀²·ħt/(2mσ₀²) for random parameters, with the sign of −C.
pub fn check_width_identity() -> CheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut failures = Vec::new();
    let mut worst = 0.0f64;
    for i in 0..1000 {
        let c = rng.random_range(-1000.0..1000.0);
        let sigma0 = 10f64.powf(rng.random_range(-5.0..-3.0));
        let spec = PacketSpec::with_mass_amu(sigma0, c, 10.0, 10f64.powf(rng.random_range(0.0..4.0)), 0.0);
        let t = 10f64.powf(rng.random_range(-2.0..2.0)) / spec.spread_rate();
        let diff = sigma_c_sq(&spec, t) - sigma_q_sq(&spec, t);
        let expected = -2.0 * c * sigma0 * sigma0 * spec.spread_rate() * t;
        let dev = rel(diff, expected);
        worst = worst.max(dev);
        if !(dev < 1e-10) || diff.signum() != (-c).signum() {
            failures.push(format!("draw {i}: C={c} diff {diff:e} vs {expected:e}"));
        }
    }
    failures.truncate(5);
    CheckOutcome::new(4, "width identity", failures, format!("1000 draws, max relative deviation {worst:.2e}"))
}

/// Quantum continuity residual below 1e-6 with second-order convergence under step halving.
pub fn check_continuity() -> CheckOutcome {
    let specs = [
        PacketSpec::with_mass_amu(1e-5, 50.0, 1e4, 1.0, 0.0),
        PacketSpec::with_mass_amu(1e-4, 3.0, 10.0, 50.0, 2e-21),
        PacketSpec::with_mass_amu(1e-4, 1000.0, 10.0, 1000.0, 0.0),
    ];
    let tol = Tolerances::default();
    let coarse = Tolerances { fd_step_scale: 2e-2, ..tol };
    let mut failures = Vec::new();
    let (mut worst_residual, mut orders) = (0.0f64, Vec::new());
    for (i, spec) in specs.iter().enumerate() {
        let t = 0.7 / spec.spread_rate().max(100.0);
        for offset in [-1.2, 0.8] {
            let x = spec.center(t) + offset * sigma_q(spec, t);
            let (hx, ht) = default_fd_steps(spec, t, &tol);
            let r = continuity_residual(spec, x, t, hx, ht);
            worst_residual = worst_residual.max(r);
            if !(r < 1e-6) {
                failures.push(format!("spec {i}: residual {r:e}"));
            }
            let (hx, ht) = default_fd_steps(spec, t, &coarse);
            let r1 = continuity_residual(spec, x, t, hx, ht);
            let r2 = continuity_residual(spec, x, t, hx / 2.0, ht / 2.0);
            let order = (r1 / r2).log2();
            orders.push(order);
            if !(1.8..=2.2).contains(&order) {
                failures.push(format!("spec {i}: order {order:.3}"));
            }
        }
    }
    let (lo, hi) = orders.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &o| (a.min(o), b.max(o)));
    let summary = format!("max residual {worst_residual:.2e}, order in [{lo:.3}, {hi:.3}]");
    CheckOutcome::new(5, "continuity residual", failures, summary)
}

/// Monte Carlo mean, spread and crossing fraction agree with quadrature for every m ≥ 25 amu table row.
pub fn check_oracle_equivalence(n_particles: usize) -> CheckOutcome {
    let mut failures = Vec::new();
    let mut worst = 0.0f64;
    let mut count = 0;
    for table in 1..=3u8 {
        let plan = table_plan(table).expect("built-in table");
        for &mass in plan.masses_amu.iter().filter(|&&m| m >= ASSERTED_MIN_MASS_AMU) {
            let spec = plan.spec_for(mass, plan.c_values[0]);
            let pair = match arrival_pair(&spec, &plan.det, &plan.tol) {
                Ok(pair) => pair,
                Err(err) => {
                    failures.push(format!("T{table} m={mass}: {err}"));
                    continue;
                }
            };
            let cfg = McConfig::new(n_particles, MC_SEED, pair.window.t_max);
            let est = match mc::estimate(&spec, &plan.det, &cfg) {
                Ok(est) => est,
                Err(err) => {
                    failures.push(format!("T{table} m={mass}: {err}"));
                    continue;
                }
            };
            let c = pair.classical;
            // Binomial spread of the crossing count predicted by the quadrature norm, plus one count.
            let p = c.norm.min(1.0);
            let n = n_particles as f64;
            let count_band = (p * (1.0 - p) / n).sqrt() + 1.0 / (3.0 * n);
            let z = [
                (est.mean_t - c.mean_t).abs() / est.stderr_mean,
                (est.delta_t - c.delta_t).abs() / est.stderr_delta,
                (est.crossing_fraction() - c.norm).abs() / count_band,
            ];
            count += 1;
            for (k, &zk) in z.iter().enumerate() {
                worst = worst.max(zk);
                if !(zk < 3.0) {
                    let what = ["mean", "delta", "crossing fraction"][k];
                    failures.push(format!("T{table} m={mass} {what} off by {zk:.2} stderr"));
                }
            }
        }
    }
    let summary = format!("{count} rows, n={n_particles}, largest discrepancy {worst:.2} stderr");
    CheckOutcome::new(6, "oracle equivalence", failures, summary)
}

/// Closed-form ρ_C and J_C against numerical momentum integrals on a 10×5 grid.
pub fn check_momentum_integrals() -> CheckOutcome {
    let specs = [
        PacketSpec::with_mass_amu(1e-4, 3.0, 10.0, 50.0, 2e-21),
        PacketSpec::with_mass_amu(1e-4, 1000.0, 10.0, 10000.0, 0.0),
        PacketSpec::with_mass_amu(1e-5, 50.0, 1e4, 1.0, 0.0),
    ];
    let mut failures = Vec::new();
    let mut worst = 0.0f64;
    for (i, spec) in specs.iter().enumerate() {
        let t_ref = 0.1 / spec.u;
        for it in 1..=5 {
            let t = t_ref * it as f64 * 0.4;
            let sc = sigma_c(spec, t);
            for ix in 0..10 {
                let x = spec.center(t) + (ix as f64 - 4.5) * 0.6 * sc;
                let pairs = [
                    (rho_c_by_momentum_quadrature(spec, x, t), rho_c(spec, x, t)),
                    (j_c_by_momentum_quadrature(spec, x, t), j_c(spec, x, t)),
                ];
                for (numeric, closed) in pairs {
                    match numeric {
                        Ok(v) => {
                            let d = rel(v, closed);
                            worst = worst.max(d);
                            if !(d < 1e-8) {
                                failures.push(format!("spec {i} x={x:e} t={t:e}: {d:e}"));
                            }
                        }
                        Err(err) => failures.push(format!("spec {i}: {err}")),
                    }
                }
            }
        }
    }
    failures.truncate(5);
    CheckOutcome::new(7, "momentum-integral cross-check", failures, format!("max relative deviation {worst:.2e}"))
}

/// Heaviest mass-scan pair within 1% of peak; C-scan gap shrinking as C goes 100 → 10 → 1.
pub fn check_figure_shapes() -> CheckOutcome {
    let fig1 = figure_data(FigureId::MassScan, crate::sweep::FIGURE_SAMPLES);
    let fig2 = figure_data(FigureId::CScan, crate::sweep::FIGURE_SAMPLES);
    let gaps1: Vec<f64> = fig1.pairs.iter().map(SeriesPair::max_gap_fraction).collect();
    let gaps2: Vec<f64> = fig2.pairs.iter().map(SeriesPair::max_gap_fraction).collect();
    let mut failures = Vec::new();
    if !(gaps1[2] < 0.01) {
        failures.push(format!("m=720 gap {:.3}%", 100.0 * gaps1[2]));
    }
    if !(gaps2[0] > gaps2[1] && gaps2[1] > gaps2[2]) {
        failures.push("C scan not monotone".into());
    }
    let pct = |g: &[f64]| g.iter().map(|x| format!("{:.2}%", 100.0 * x)).collect::<Vec<_>>().join("/");
    let summary = format!("mass scan gaps {} (m=1/50/720), C scan gaps {} (C=100/10/1)", pct(&gaps1), pct(&gaps2));
    CheckOutcome::new(8, "figure shapes", failures, summary)
}

fn artifact_bytes(n_particles: usize) -> Vec<u8> {
    let mut out = Vec::new();
    for table in 1..=3 {
        let mut plan = table_plan(table).expect("built-in table");
        plan.include_mc = true;
        plan.mc.n_particles = n_particles;
        let rows = run_sweep(&plan).expect("built-in plan is valid");
        write_rows(&plan, &rows, Format::Csv, &mut out).expect("in-memory write");
        write_rows(&plan, &rows, Format::Json, &mut out).expect("in-memory write");
    }
    for id in [FigureId::MassScan, FigureId::CScan] {
        let fig = figure_data(id, 201);
        write_figure(&fig, Format::Csv, &mut out).expect("in-memory write");
        write_figure(&fig, Format::Json, &mut out).expect("in-memory write");
    }
    out
}

/// Byte-identical CSV and JSON output for repeated runs and several thread counts.
pub fn check_determinism(n_particles: usize) -> CheckOutcome {
    let reference = artifact_bytes(n_particles);
    let mut failures = Vec::new();
    let threads = [1usize, 2, 3, 8];
    for &n in &threads {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(n).build().expect("thread pool");
        if pool.install(|| artifact_bytes(n_particles)) != reference {
            failures.push(format!("{n} threads differ"));
        }
    }
    if artifact_bytes(n_particles) != reference {
        failures.push("repeat run differs".into());
    }
    let summary = format!("{} bytes compared across {threads:?} threads and a repeat run", reference.len());
    CheckOutcome::new(9, "determinism", failures, summary)
}

/// Runs every check in order.
pub fn run_all() -> Vec<CheckOutcome> {
    vec![
        check_table_reproduction(),
        check_convergence_thresholds(),
        check_c_zero_coincidence(),
        check_width_identity(),
        check_continuity(),
        check_oracle_equivalence(MC_PARTICLES),
        check_momentum_integrals(),
        check_figure_shapes(),
        check_determinism(100_000),
    ]
}

