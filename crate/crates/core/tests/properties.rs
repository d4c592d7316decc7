use arrival_core::arrival::{arrival_stats, choose_window, Mechanics, Window};
use arrival_core::sweep::{run_point, saturation_mass, table_plan};
use arrival_core::{arrival_pair, run_sweep, DetectorSpec, PacketSpec, Tolerances, WindowPolicy};
use proptest::prelude::*;

fn table1_asserted() -> Vec<arrival_core::SweepRow> {
    let mut plan = table_plan(1).unwrap();
    plan.masses_amu.retain(|&m| m >= 25.0);
    run_sweep(&plan).unwrap()
}

#[test]
fn deviations_shrink_with_mass() {
    let rows = table1_asserted();
    for w in rows.windows(2) {
        assert!(w[1].rel_dev_mean < w[0].rel_dev_mean, "m={} -> {}", w[0].mass_amu, w[1].mass_amu);
        assert!((w[1].t_q_ms - w[1].t_c_ms).abs() < (w[0].t_q_ms - w[0].t_c_ms).abs());
    }
}

#[test]
fn classical_saturates_before_quantum() {
    let rows = run_sweep(&table_plan(1).unwrap()).unwrap();
    let classical = saturation_mass(&rows, |r| r.t_c_ms, 1e-4).expect("classical saturates");
    let quantum = saturation_mass(&rows, |r| r.t_q_ms, 1e-4).expect("quantum saturates");
    assert!(classical <= quantum, "classical {classical}, quantum {quantum}");
}

#[test]
fn rows_do_not_depend_on_their_neighbours() {
    let plan = table_plan(2).unwrap();
    let rows = run_sweep(&plan).unwrap();
    let mut shuffled: Vec<(usize, f64)> = plan.masses_amu.iter().copied().enumerate().collect();
    shuffled.reverse();
    shuffled.rotate_left(3);
    for (i, m) in shuffled {
        assert_eq!(run_point(&plan, m, plan.c_values[0]), rows[i]);
    }
    let mut sub = plan.clone();
    sub.masses_amu = vec![plan.masses_amu[2], plan.masses_amu[5]];
    let sub_rows = run_sweep(&sub).unwrap();
    assert_eq!(sub_rows[0], rows[2]);
    assert_eq!(sub_rows[1], rows[5]);
}

#[test]
fn c_sweep_orders_rows_c_major() {
    let mut plan = table_plan(3).unwrap();
    plan.masses_amu = vec![100.0, 1000.0];
    plan.c_values = vec![10.0, 100.0];
    let rows = run_sweep(&plan).unwrap();
    let keys: Vec<(f64, f64)> = rows.iter().map(|r| (r.c_param, r.mass_amu)).collect();
    assert_eq!(keys, [(10.0, 100.0), (10.0, 1000.0), (100.0, 100.0), (100.0, 1000.0)]);
}

#[test]
fn larger_fixed_window_never_loses_flux() {
    let spec = PacketSpec::with_mass_amu(1e-4, 1000.0, 10.0, 5.0, 0.0);
    let tol = Tolerances::default();
    let mut last = 0.0;
    for t_max in [0.005, 0.01, 0.02, 0.05, 0.1, 0.5, 2.0] {
        let det = DetectorSpec::new(0.1, WindowPolicy::fixed(t_max));
        let pair = arrival_pair(&spec, &det, &tol).unwrap();
        for stats in [pair.quantum, pair.classical] {
            assert_eq!(stats.t_window, t_max);
        }
        assert!(pair.classical.norm >= last, "t_max {t_max}");
        last = pair.classical.norm;
    }
}

#[test]
fn heavy_packets_approach_ballistic_limit() {
    let tol = Tolerances::default();
    let det = DetectorSpec::new(0.1, WindowPolicy::default());
    let mut last_spread = f64::INFINITY;
    for m in [1e2, 1e3, 1e4, 1e5, 1e6] {
        let spec = PacketSpec::with_mass_amu(1e-6, 0.0, 10.0, m, 0.0);
        let pair = arrival_pair(&spec, &det, &tol).unwrap();
        assert!(pair.classical.delta_t < last_spread);
        last_spread = pair.classical.delta_t;
        if m >= 1e4 {
            assert!((pair.classical.mean_t - 0.01).abs() / 0.01 < 1e-3);
        }
    }
}

fn stats_scaled(spec: &PacketSpec, window: &Window, factor: f64) -> (f64, f64) {
    let tol = Tolerances::default();
    let s = arrival_stats(|t| factor * Mechanics::Quantum.current(spec, 0.1, t), window, &tol).unwrap();
    (s.mean_t, s.delta_t)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn moments_ignore_current_scale(
        log_mass in 1.0f64..4.0,
        c in 0.0f64..1000.0,
        log_factor in -6.0f64..6.0,
    ) {
        let spec = PacketSpec::with_mass_amu(1e-4, c, 10.0, 10f64.powf(log_mass), 0.0);
        let det = DetectorSpec::new(0.1, WindowPolicy::default());
        let window = choose_window(&spec, &det, &Tolerances::default()).unwrap();
        let (m1, d1) = stats_scaled(&spec, &window, 1.0);
        let (m2, d2) = stats_scaled(&spec, &window, 10f64.powf(log_factor));
        prop_assert!(((m2 - m1) / m1).abs() < 1e-12);
        prop_assert!(((d2 - d1) / d1).abs() < 1e-12);
    }
}
