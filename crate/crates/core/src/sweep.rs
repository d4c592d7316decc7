//! Mass and C sweeps, deviation metrics, convergence threshold and figure data.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arrival::{arrival_pair, sample_series, ArrivalError, CurrentSeries, Mechanics};
use crate::mc::{self, McConfig};
use crate::{classical, quantum};
use crate::model::{s_to_ms, DetectorSpec, ModelError, PacketSpec, Tolerances, WindowPolicy};

/// Default relative threshold for "quantum and classical agree".
pub const DEFAULT_EPS: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SweepError {
    #[error("no listed mass satisfies both deviations < {eps:e}")]
    NotConverged { eps: f64 },
    #[error("rows mix several values of C")]
    MixedC,
    #[error("invalid sweep plan: {0}")]
    Plan(&'static str),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPlan {
    /// Template packet; `mass` and `c_param` are overwritten per row.
    pub base: PacketSpec,
    pub det: DetectorSpec,
    pub masses_amu: Vec<f64>,
    pub c_values: Vec<f64>,
    pub include_mc: bool,
    pub mc: McConfig,
    pub tol: Tolerances,
}

impl SweepPlan {
    pub fn validate(&self) -> Result<(), SweepError> {
        if self.masses_amu.is_empty() {
            return Err(SweepError::Plan("mass list is empty"));
        }
        if self.c_values.is_empty() {
            return Err(SweepError::Plan("C list is empty"));
        }
        if self.masses_amu.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(SweepError::Plan("masses must be strictly increasing"));
        }
        for &m in &self.masses_amu {
            if !(m > 0.0 && m.is_finite()) {
                return Err(SweepError::Plan("masses must be positive"));
            }
        }
        self.base.validate()?;
        self.det.validate()?;
        self.tol.validate()?;
        Ok(())
    }

    /// `(mass_amu, C)` pairs in output order: C outer, mass inner.
    pub fn points(&self) -> Vec<(f64, f64)> {
        self.c_values
            .iter()
            .flat_map(|&c| self.masses_amu.iter().map(move |&m| (m, c)))
            .collect()
    }

    pub fn spec_for(&self, mass_amu: f64, c_param: f64) -> PacketSpec {
        PacketSpec::with_mass_amu(self.base.sigma0, c_param, self.base.u, mass_amu, self.base.k_slope)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub mass_amu: f64,
    pub c_param: f64,
    pub t_c_ms: f64,
    pub t_q_ms: f64,
    pub dt_c_ms: f64,
    pub dt_q_ms: f64,
    pub rel_dev_mean: f64,
    pub rel_dev_fluct: f64,
    pub window_s: f64,
    pub truncated: bool,
    pub mc_mean_ms: Option<f64>,
    pub mc_stderr_ms: Option<f64>,
    /// `ok`, or the error that stopped this row.
    pub status: String,
}

impl SweepRow {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }

    fn failed(mass_amu: f64, c_param: f64, status: String) -> Self {
        Self {
            mass_amu,
            c_param,
            t_c_ms: f64::NAN,
            t_q_ms: f64::NAN,
            dt_c_ms: f64::NAN,
            dt_q_ms: f64::NAN,
            rel_dev_mean: f64::NAN,
            rel_dev_fluct: f64::NAN,
            window_s: f64::NAN,
            truncated: false,
            mc_mean_ms: None,
            mc_stderr_ms: None,
            status,
        }
    }
}

fn error_status(err: &ArrivalError) -> String {
    match err {
        ArrivalError::NoArrival { .. } => "no_arrival".into(),
        ArrivalError::Quadrature(_) => "max_subdivisions".into(),
        ArrivalError::Model(_) => "invalid_parameters".into(),
    }
}

/// One row, computed directly.
pub fn run_point(plan: &SweepPlan, mass_amu: f64, c_param: f64) -> SweepRow {
    let spec = plan.spec_for(mass_amu, c_param);
    let pair = match arrival_pair(&spec, &plan.det, &plan.tol) {
        Ok(pair) => pair,
        Err(err) => return SweepRow::failed(mass_amu, c_param, error_status(&err)),
    };
    let (q, c) = (pair.quantum, pair.classical);
    let mut row = SweepRow {
        mass_amu,
        c_param,
        t_c_ms: s_to_ms(c.mean_t),
        t_q_ms: s_to_ms(q.mean_t),
        dt_c_ms: s_to_ms(c.delta_t),
        dt_q_ms: s_to_ms(q.delta_t),
        rel_dev_mean: (q.mean_t - c.mean_t).abs() / c.mean_t,
        rel_dev_fluct: (q.delta_t - c.delta_t).abs() / c.delta_t,
        window_s: pair.window.t_max,
        truncated: pair.window.truncated,
        mc_mean_ms: None,
        mc_stderr_ms: None,
        status: "ok".into(),
    };
    if plan.include_mc {
        let cfg = McConfig { t_window: pair.window.t_max, ..plan.mc };
        match mc::estimate(&spec, &plan.det, &cfg) {
            Ok(est) => {
                row.mc_mean_ms = Some(s_to_ms(est.mean_t));
                row.mc_stderr_ms = Some(s_to_ms(est.stderr_mean));
            }
            Err(_) => row.status = "mc_no_crossings".into(),
        }
    }
    row
}

/// All rows of the plan, in plan order. Failures are recorded per row.
pub fn run_sweep(plan: &SweepPlan) -> Result<Vec<SweepRow>, SweepError> {
    plan.validate()?;
    Ok(plan.points().par_iter().map(|&(m, c)| run_point(plan, m, c)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub threshold_mass_amu: f64,
    pub criterion_eps: f64,
    /// Largest listed mass that still fails the criterion, or the threshold itself when none does.
    pub monotone_after_amu: f64,
}

/// Smallest listed mass from which both relative deviations stay below `eps`.
pub fn convergence_threshold(rows: &[SweepRow], eps: f64) -> Result<ConvergenceReport, SweepError> {
    if let Some(first) = rows.first() {
        if rows.iter().any(|r| r.c_param != first.c_param) {
            return Err(SweepError::MixedC);
        }
    }
    let mut sorted: Vec<&SweepRow> = rows.iter().collect();
    sorted.sort_by(|a, b| a.mass_amu.total_cmp(&b.mass_amu));
    let passes = |r: &SweepRow| r.is_ok() && r.rel_dev_mean < eps && r.rel_dev_fluct < eps;

    let mut threshold = None;
    let mut last_fail = None;
    for row in &sorted {
        if passes(row) {
            threshold.get_or_insert(row.mass_amu);
        } else {
            threshold = None;
            last_fail = Some(row.mass_amu);
        }
    }
    let threshold_mass_amu = threshold.ok_or(SweepError::NotConverged { eps })?;
    Ok(ConvergenceReport {
        threshold_mass_amu,
        criterion_eps: eps,
        monotone_after_amu: last_fail.unwrap_or(threshold_mass_amu),
    })
}

/// First listed mass after which successive relative changes of `value` stay below `tol`.
pub fn saturation_mass(rows: &[SweepRow], value: impl Fn(&SweepRow) -> f64, tol: f64) -> Option<f64> {
    let mut saturated = None;
    for w in rows.windows(2) {
        let (a, b) = (value(&w[0]), value(&w[1]));
        if ((b - a) / a).abs() < tol {
            saturated.get_or_insert(w[0].mass_amu);
        } else {
            saturated = None;
        }
    }
    saturated
}

/// Built-in tables: C = 1000, 500, 100 with σ₀ = 1e-4 cm, u = 10 cm/s, X = 0.1 cm, K = 0.
pub fn table_plan(table: u8) -> Option<SweepPlan> {
    let (c, masses): (f64, &[f64]) = match table {
        1 => (1000.0, &[1.0, 5.0, 25.0, 50.0, 100.0, 500.0, 1000.0, 5000.0, 10000.0]),
        2 => (500.0, &[1.0, 5.0, 25.0, 50.0, 100.0, 500.0, 1000.0, 5000.0]),
        3 => (100.0, &[1.0, 5.0, 25.0, 50.0, 100.0, 500.0, 1000.0]),
        _ => return None,
    };
    Some(SweepPlan {
        base: PacketSpec::with_mass_amu(1e-4, c, 10.0, 1.0, 0.0),
        det: DetectorSpec::new(0.1, WindowPolicy::default()),
        masses_amu: masses.to_vec(),
        c_values: vec![c],
        include_mc: false,
        mc: McConfig::new(1_000_000, 20_240_601, 0.0),
        tol: Tolerances::default(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FigureId {
    /// C = 50, masses 1, 50, 720 amu.
    MassScan,
    /// m = 1 amu, C = 100, 10, 1.
    CScan,
}

impl FigureId {
    pub fn from_number(id: u8) -> Option<Self> {
        match id {
            1 => Some(FigureId::MassScan),
            2 => Some(FigureId::CScan),
            _ => None,
        }
    }

    pub fn number(self) -> u8 {
        match self {
            FigureId::MassScan => 1,
            FigureId::CScan => 2,
        }
    }

    /// `(mass_amu, C)` for each curve pair.
    pub fn curves(self) -> [(f64, f64); 3] {
        match self {
            FigureId::MassScan => [(1.0, 50.0), (50.0, 50.0), (720.0, 50.0)],
            FigureId::CScan => [(1.0, 100.0), (1.0, 10.0), (1.0, 1.0)],
        }
    }
}

pub const FIGURE_SIGMA0: f64 = 1e-5;
pub const FIGURE_U: f64 = 1e4;
pub const FIGURE_X: f64 = 1.0;
pub const FIGURE_SAMPLES: usize = 2001;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesPair {
    pub mass_amu: f64,
    pub c_param: f64,
    pub quantum: CurrentSeries,
    pub classical: CurrentSeries,
}

impl SeriesPair {
    /// max_t |J_Q − J_C| relative to the larger of the two peaks.
    pub fn max_gap_fraction(&self) -> f64 {
        let peak = self.quantum.values.iter().chain(&self.classical.values).fold(0.0f64, |a, &b| a.max(b));
        let gap = self
            .quantum
            .values
            .iter()
            .zip(&self.classical.values)
            .fold(0.0f64, |a, (q, c)| a.max((q - c).abs()));
        gap / peak
    }

    /// |t_peak,Q − t_peak,C| relative to the quantum peak time.
    pub fn peak_offset_fraction(&self) -> f64 {
        let (tq, _) = self.quantum.peak().expect("series is non-empty");
        let (tc, _) = self.classical.peak().expect("series is non-empty");
        (tq - tc).abs() / tq
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FigureData {
    pub figure: u8,
    pub sigma0: f64,
    pub u: f64,
    pub x_detector: f64,
    pub pairs: Vec<SeriesPair>,
}

/// Half-width of the sampled interval in units of the wider packet's transit time.
pub const FIGURE_HALF_WIDTH: f64 = 8.0;

/// Currents at the detector sampled uniformly over X/u ± 8 σ(X/u)/u, with σ the wider of σ_Q, σ_C.
pub fn figure_data(id: FigureId, n: usize) -> FigureData {
    let t_b = FIGURE_X / FIGURE_U;
    let pairs = id
        .curves()
        .iter()
        .map(|&(mass_amu, c_param)| {
            let spec = PacketSpec::with_mass_amu(FIGURE_SIGMA0, c_param, FIGURE_U, mass_amu, 0.0);
            let width = quantum::sigma_q(&spec, t_b).max(classical::sigma_c(&spec, t_b)) / FIGURE_U;
            let t_start = (t_b - FIGURE_HALF_WIDTH * width).max(0.0);
            let t_end = t_b + FIGURE_HALF_WIDTH * width;
            let series = |mech: Mechanics| sample_series(|t| mech.current(&spec, FIGURE_X, t), mech, t_start, t_end, n);
            SeriesPair { mass_amu, c_param, quantum: series(Mechanics::Quantum), classical: series(Mechanics::Classical) }
        })
        .collect();
    FigureData { figure: id.number(), sigma0: FIGURE_SIGMA0, u: FIGURE_U, x_detector: FIGURE_X, pairs }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(mass: f64, dm: f64, df: f64) -> SweepRow {
        SweepRow { rel_dev_mean: dm, rel_dev_fluct: df, status: "ok".into(), ..SweepRow::failed(mass, 7.0, String::new()) }
    }

    #[test]
    fn plan_validation() {
        let mut plan = table_plan(1).unwrap();
        assert!(plan.validate().is_ok());
        plan.masses_amu = vec![5.0, 1.0];
        assert!(matches!(plan.validate(), Err(SweepError::Plan(_))));
        plan.masses_amu.clear();
        assert!(plan.validate().is_err());
        assert!(table_plan(4).is_none());
    }

    #[test]
    fn table_sizes() {
        assert_eq!(table_plan(1).unwrap().points().len(), 9);
        assert_eq!(table_plan(2).unwrap().points().len(), 8);
        assert_eq!(table_plan(3).unwrap().points().len(), 7);
    }

    #[test]
    fn single_mass_sweep_equals_direct_call() {
        let mut plan = table_plan(1).unwrap();
        plan.masses_amu = vec![10000.0];
        let rows = run_sweep(&plan).unwrap();
        assert_eq!(rows.len(), 1);
        let spec = plan.spec_for(10000.0, 1000.0);
        let pair = arrival_pair(&spec, &plan.det, &plan.tol).unwrap();
        assert_eq!(rows[0].t_q_ms, s_to_ms(pair.quantum.mean_t));
        assert_eq!(rows[0].dt_c_ms, s_to_ms(pair.classical.delta_t));
        assert_eq!(rows[0].window_s, pair.window.t_max);
    }

    #[test]
    fn failed_rows_do_not_abort() {
        let mut plan = table_plan(3).unwrap();
        plan.base.u = -10.0;
        plan.c_values = vec![0.0];
        plan.masses_amu = vec![100.0, 1000.0];
        let rows = run_sweep(&plan).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| r.status == "no_arrival"));
    }

    #[test]
    fn threshold_requires_staying_below() {
        let rows = vec![
            synthetic(1.0, 0.1, 0.1),
            synthetic(10.0, 1e-4, 1e-4),
            synthetic(100.0, 2e-3, 1e-4),
            synthetic(1000.0, 5e-4, 9e-4),
            synthetic(5000.0, 1e-5, 1e-5),
        ];
        let report = convergence_threshold(&rows, 1e-3).unwrap();
        assert_eq!(report.threshold_mass_amu, 1000.0);
        assert_eq!(report.monotone_after_amu, 100.0);
        assert_eq!(report.criterion_eps, 1e-3);
    }

    #[test]
    fn huge_deviations_do_not_converge() {
        let rows: Vec<SweepRow> = [1.0, 10.0, 100.0].iter().map(|&m| synthetic(m, 1.0, 1.0)).collect();
        assert_eq!(convergence_threshold(&rows, 1e-3), Err(SweepError::NotConverged { eps: 1e-3 }));
        let mut mixed = rows.clone();
        mixed[1].c_param = 3.0;
        assert_eq!(convergence_threshold(&mixed, 1e-3), Err(SweepError::MixedC));
    }

    #[test]
    fn saturation_detection() {
        let mut rows: Vec<SweepRow> = [1.0, 2.0, 3.0, 4.0].iter().map(|&m| synthetic(m, 0.0, 0.0)).collect();
        for (row, v) in rows.iter_mut().zip([5.0, 4.0, 4.0001, 4.0002]) {
            row.t_c_ms = v;
        }
        assert_eq!(saturation_mass(&rows, |r| r.t_c_ms, 1e-4), Some(2.0));
        assert_eq!(saturation_mass(&rows, |r| r.t_c_ms, 1e-6), None);
    }

    #[test]
    fn figure_shapes() {
        let fig1 = figure_data(FigureId::MassScan, 801);
        assert_eq!(fig1.pairs.len(), 3);
        assert_eq!(fig1.pairs[0].quantum.len(), 801);
        let gaps: Vec<f64> = fig1.pairs.iter().map(SeriesPair::max_gap_fraction).collect();
        assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2], "{gaps:?}");
        assert!(gaps[2] < 0.01, "{gaps:?}");

        let fig2 = figure_data(FigureId::CScan, 801);
        let gaps: Vec<f64> = fig2.pairs.iter().map(SeriesPair::max_gap_fraction).collect();
        assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2], "{gaps:?}");
        assert!(gaps[0] > 0.1 && gaps[2] < 0.02, "{gaps:?}");
    }
}
