use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use arrival_core::classical;
use arrival_core::mc::{self, McConfig};
use arrival_core::model::{ms_to_s, s_to_ms};
use arrival_core::quantum;
use arrival_core::report::{self, Format, ReportError};
use arrival_core::selftest;
use arrival_core::sweep::{self, FigureId, SweepPlan, DEFAULT_EPS};
use arrival_core::{
    arrival_pair, ArrivalError, ArrivalStats, DetectorSpec, McError, ModelError, PacketSpec, SweepError, Tolerances,
    WindowMode, WindowPolicy,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use serde_json::{json, Value};

#[derive(Parser, Debug)]
#[command(name = "arrival-lab", version, about = "Quantum and classical arrival-time distributions for a Gaussian packet")]
struct Cli {
    /// Flat JSON object whose keys mirror the flag names; flags given on the command line win.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, global = true, env = "ARRIVAL_LAB_THREADS")]
    threads: Option<usize>,
    /// Output file; standard output when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Output format; inferred from the --out extension, JSON otherwise.
    #[arg(long, global = true, value_enum)]
    format: Option<FormatArg>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Densities, currents and widths at one (x, t).
    Eval {
        #[command(flatten)]
        packet: PacketArgs,
        #[arg(long)]
        t_ms: f64,
        /// Position, cm; defaults to the detector position.
        #[arg(long)]
        at_cm: Option<f64>,
    },
    /// Quantum and classical arrival statistics at the detector.
    Arrive {
        #[command(flatten)]
        packet: PacketArgs,
        #[command(flatten)]
        window: WindowArgs,
    },
    /// Mass sweep, either a built-in table or a custom mass/C list.
    Sweep {
        #[command(flatten)]
        packet: PacketArgs,
        #[command(flatten)]
        window: WindowArgs,
        /// Built-in plan 1, 2 or 3 (C = 1000, 500, 100).
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
        table: Option<u8>,
        #[arg(long, value_delimiter = ',')]
        masses_amu: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        c_values: Option<Vec<f64>>,
        /// Add Monte Carlo columns.
        #[arg(long)]
        mc: bool,
        #[command(flatten)]
        mc_args: McArgs,
        /// Require convergence at this threshold; exit 1 when no mass qualifies.
        #[arg(long)]
        eps: Option<f64>,
    },
    /// Current series behind the two comparison figures.
    Figure {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
        id: u8,
        #[arg(long, default_value_t = sweep::FIGURE_SAMPLES)]
        samples: usize,
    },
    /// Monte Carlo estimate of the classical statistics next to the quadrature result.
    Oracle {
        #[command(flatten)]
        packet: PacketArgs,
        #[command(flatten)]
        window: WindowArgs,
        #[command(flatten)]
        mc_args: McArgs,
    },
    /// Runs the built-in checks and reports pass/fail counts.
    Selftest,
}

#[derive(Args, Debug, Default)]
struct PacketArgs {
    #[arg(long)]
    mass_amu: Option<f64>,
    #[arg(long)]
    sigma0_cm: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    u_cm_s: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    c: Option<f64>,
    /// Force slope K of V = Kx, dyn.
    #[arg(long, allow_negative_numbers = true)]
    k_dyn: Option<f64>,
    /// Detector position, cm.
    #[arg(long, allow_negative_numbers = true)]
    x_cm: Option<f64>,
}

#[derive(Args, Debug, Default)]
struct WindowArgs {
    #[arg(long, value_enum)]
    window: Option<WindowArg>,
    /// Fixed window length, ms.
    #[arg(long)]
    t_max_ms: Option<f64>,
    /// Adaptive window cap, ms.
    #[arg(long)]
    t_cap_ms: Option<f64>,
    /// Relative change that stops the adaptive window from growing.
    #[arg(long)]
    rel_tol: Option<f64>,
}

#[derive(Args, Debug, Default)]
struct McArgs {
    #[arg(long)]
    particles: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
    /// Aligned text with times rounded to 3 decimals (sweep only).
    Table,
}

#[derive(Clone, Copy, Debug, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
enum WindowArg {
    Adaptive,
    Fixed,
}

#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
struct ConfigFile {
    mass_amu: Option<f64>,
    sigma0_cm: Option<f64>,
    u_cm_s: Option<f64>,
    c: Option<f64>,
    k_dyn: Option<f64>,
    x_cm: Option<f64>,
    window: Option<WindowArg>,
    t_max_ms: Option<f64>,
    t_cap_ms: Option<f64>,
    rel_tol: Option<f64>,
    particles: Option<usize>,
    seed: Option<u64>,
    threads: Option<usize>,
}

const DEFAULT_MASS_AMU: f64 = 1000.0;
const DEFAULT_SIGMA0_CM: f64 = 1e-4;
const DEFAULT_U_CM_S: f64 = 10.0;
const DEFAULT_X_CM: f64 = 0.1;
const DEFAULT_PARTICLES: usize = 1_000_000;

enum Failure {
    Usage(String),
    Domain { kind: &'static str, message: String },
    Io(String),
}

impl From<ModelError> for Failure {
    fn from(err: ModelError) -> Self {
        Failure::Usage(err.to_string())
    }
}

impl From<ArrivalError> for Failure {
    fn from(err: ArrivalError) -> Self {
        let kind = match err {
            ArrivalError::NoArrival { .. } => "NoArrival",
            ArrivalError::Quadrature(_) => "MaxSubdivisions",
            ArrivalError::Model(_) => return Failure::Usage(err.to_string()),
        };
        Failure::Domain { kind, message: err.to_string() }
    }
}

impl From<McError> for Failure {
    fn from(err: McError) -> Self {
        match err {
            McError::NoCrossings { .. } => Failure::Domain { kind: "NoCrossings", message: err.to_string() },
            McError::Config(_) => Failure::Usage(err.to_string()),
        }
    }
}

impl From<SweepError> for Failure {
    fn from(err: SweepError) -> Self {
        match err {
            SweepError::NotConverged { .. } => Failure::Domain { kind: "NotConverged", message: err.to_string() },
            _ => Failure::Usage(err.to_string()),
        }
    }
}

impl From<ReportError> for Failure {
    fn from(err: ReportError) -> Self {
        Failure::Io(err.to_string())
    }
}

impl From<io::Error> for Failure {
    fn from(err: io::Error) -> Self {
        Failure::Io(err.to_string())
    }
}

fn load_config(path: Option<&Path>) -> Result<ConfigFile, Failure> {
    let Some(path) = path else {
        return Ok(ConfigFile::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn packet(args: &PacketArgs, cfg: &ConfigFile) -> Result<(PacketSpec, f64), Failure> {
    let spec = PacketSpec::with_mass_amu(
        args.sigma0_cm.or(cfg.sigma0_cm).unwrap_or(DEFAULT_SIGMA0_CM),
        args.c.or(cfg.c).unwrap_or(0.0),
        args.u_cm_s.or(cfg.u_cm_s).unwrap_or(DEFAULT_U_CM_S),
        args.mass_amu.or(cfg.mass_amu).unwrap_or(DEFAULT_MASS_AMU),
        args.k_dyn.or(cfg.k_dyn).unwrap_or(0.0),
    )
    .validate()?;
    let x = args.x_cm.or(cfg.x_cm).unwrap_or(DEFAULT_X_CM);
    Ok((spec, x))
}

fn window(args: &WindowArgs, cfg: &ConfigFile) -> Result<WindowPolicy, Failure> {
    let mut policy = WindowPolicy::default();
    let t_max_ms = args.t_max_ms.or(cfg.t_max_ms);
    let mode = args.window.or(cfg.window).unwrap_or(if t_max_ms.is_some() { WindowArg::Fixed } else { WindowArg::Adaptive });
    policy.mode = match mode {
        WindowArg::Adaptive => WindowMode::Adaptive,
        WindowArg::Fixed => WindowMode::Fixed,
    };
    if let Some(t) = t_max_ms {
        policy.t_max = ms_to_s(t);
    }
    if let Some(t) = args.t_cap_ms.or(cfg.t_cap_ms) {
        policy.t_cap = ms_to_s(t);
    }
    if let Some(r) = args.rel_tol.or(cfg.rel_tol) {
        policy.rel_tol_norm = r;
        policy.rel_tol_moment = r;
    }
    Ok(policy.validate()?)
}

fn detector(packet_args: &PacketArgs, window_args: &WindowArgs, cfg: &ConfigFile) -> Result<(PacketSpec, DetectorSpec), Failure> {
    let (spec, x) = packet(packet_args, cfg)?;
    let det = DetectorSpec::new(x, window(window_args, cfg)?).validate()?;
    Ok((spec, det))
}

fn mc_config(args: &McArgs, cfg: &ConfigFile, t_window: f64) -> McConfig {
    McConfig::new(
        args.particles.or(cfg.particles).unwrap_or(DEFAULT_PARTICLES),
        args.seed.or(cfg.seed).unwrap_or(selftest::MC_SEED),
        t_window,
    )
}

fn stats_json(s: &ArrivalStats) -> Value {
    json!({
        "mean_t_ms": s_to_ms(s.mean_t),
        "delta_t_ms": s_to_ms(s.delta_t),
        "norm": s.norm,
        "t_window_ms": s_to_ms(s.t_window),
        "truncated": s.truncation_flag,
        "variance_clamped": s.variance_clamped,
    })
}

fn spec_json(spec: &PacketSpec, x: f64) -> Value {
    json!({
        "mass_amu": spec.mass_amu(),
        "sigma0_cm": spec.sigma0,
        "u_cm_s": spec.u,
        "c": spec.c_param,
        "k_dyn": spec.k_slope,
        "x_cm": x,
    })
}

struct Output {
    path: Option<PathBuf>,
    format: Format,
    table: bool,
}

impl Output {
    fn new(cli: &Cli) -> Self {
        let inferred = cli.out.as_deref().and_then(|p| p.extension()).and_then(|e| e.to_str()).and_then(|e| {
            match e.to_ascii_lowercase().as_str() {
                "csv" => Some(Format::Csv),
                "json" => Some(Format::Json),
                _ => None,
            }
        });
        let format = match cli.format {
            Some(FormatArg::Csv) => Format::Csv,
            Some(FormatArg::Json | FormatArg::Table) => Format::Json,
            None => inferred.unwrap_or(Format::Json),
        };
        let table = matches!(cli.format, Some(FormatArg::Table));
        Self { path: cli.out.clone(), format, table }
    }

    fn write(&self, f: impl FnOnce(&mut dyn Write) -> Result<(), Failure>) -> Result<(), Failure> {
        match &self.path {
            Some(path) => {
                let mut sink = BufWriter::new(File::create(path)?);
                f(&mut sink)?;
                sink.flush()?;
            }
            None => {
                let stdout = io::stdout();
                let mut sink = stdout.lock();
                f(&mut sink)?;
                sink.flush()?;
            }
        }
        Ok(())
    }

    fn json(&self, value: &Value) -> Result<(), Failure> {
        if self.format == Format::Csv || self.table {
            return Err(Failure::Usage("this command only writes JSON".into()));
        }
        self.write(|sink| {
            serde_json::to_writer_pretty(&mut *sink, value).map_err(|e| Failure::Io(e.to_string()))?;
            sink.write_all(b"\n")?;
            Ok(())
        })
    }
}

fn write_table(rows: &[sweep::SweepRow], sink: &mut dyn Write) -> io::Result<()> {
    writeln!(
        sink,
        "{:>10} {:>8} {:>10} {:>10} {:>10} {:>10} {:>10}  status",
        "mass_amu", "C", "t_C ms", "t_Q ms", "dt_C ms", "dt_Q ms", "window s"
    )?;
    for r in rows {
        writeln!(
            sink,
            "{:>10} {:>8} {:>10.3} {:>10.3} {:>10.3} {:>10.3} {:>10.3}  {}{}",
            r.mass_amu,
            r.c_param,
            r.t_c_ms,
            r.t_q_ms,
            r.dt_c_ms,
            r.dt_q_ms,
            r.window_s,
            r.status,
            if r.truncated { " (truncated)" } else { "" }
        )?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    let cfg = load_config(cli.config.as_deref())?;
    if let Some(n) = cli.threads.or(cfg.threads) {
        if n == 0 {
            return Err(Failure::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Usage(e.to_string()))?;
    }
    let out = Output::new(&cli);
    let tol = Tolerances::default();

    match &cli.command {
        Command::Eval { packet: packet_args, t_ms, at_cm } => {
            let (spec, x_det) = packet(packet_args, &cfg)?;
            let t = ms_to_s(*t_ms);
            if !(t >= 0.0 && t.is_finite()) {
                return Err(Failure::Usage("--t-ms must be a non-negative number".into()));
            }
            let x = at_cm.unwrap_or(x_det);
            out.json(&json!({
                "parameters": spec_json(&spec, x_det),
                "x_cm": x,
                "t_ms": t_ms,
                "sigma_q_cm": quantum::sigma_q(&spec, t),
                "sigma_c_cm": classical::sigma_c(&spec, t),
                "rho_q": quantum::rho_q(&spec, x, t),
                "rho_c": classical::rho_c(&spec, x, t),
                "j_q": quantum::j_q(&spec, x, t),
                "j_c": classical::j_c(&spec, x, t),
            }))
        }
        Command::Arrive { packet: packet_args, window: window_args } => {
            let (spec, det) = detector(packet_args, window_args, &cfg)?;
            let pair = arrival_pair(&spec, &det, &tol)?;
            out.json(&json!({
                "parameters": spec_json(&spec, det.x_detector),
                "quantum": stats_json(&pair.quantum),
                "classical": stats_json(&pair.classical),
                "window_s": pair.window.t_max,
                "truncated": pair.window.truncated,
            }))
        }
        Command::Sweep { packet: packet_args, window: window_args, table, masses_amu, c_values, mc, mc_args, eps } => {
            let mut plan = match table {
                Some(n) => sweep::table_plan(*n).expect("range checked by the parser"),
                None => {
                    let (spec, det) = detector(packet_args, window_args, &cfg)?;
                    SweepPlan {
                        base: spec,
                        det,
                        masses_amu: Vec::new(),
                        c_values: vec![spec.c_param],
                        include_mc: false,
                        mc: mc_config(mc_args, &cfg, 0.0),
                        tol,
                    }
                }
            };
            if let Some(m) = masses_amu {
                plan.masses_amu = m.clone();
            } else if table.is_none() {
                return Err(Failure::Usage("sweep needs --table or --masses-amu".into()));
            }
            if let Some(c) = c_values {
                plan.c_values = c.clone();
            }
            plan.include_mc = *mc;
            plan.mc = mc_config(mc_args, &cfg, 0.0);
            let rows = sweep::run_sweep(&plan)?;
            let convergence = if plan.c_values.len() == 1 {
                sweep::convergence_threshold(&rows, eps.unwrap_or(DEFAULT_EPS))
            } else {
                Err(SweepError::MixedC)
            };
            out.write(|sink| {
                match out.format {
                    _ if out.table => write_table(&rows, sink)?,
                    Format::Csv => report::write_rows_csv(&rows, sink)?,
                    Format::Json => report::write_rows_json(&plan, &rows, convergence.as_ref().ok(), sink)?,
                }
                Ok(())
            })?;
            if eps.is_some() {
                convergence?;
            }
            Ok(())
        }
        Command::Figure { id, samples } => {
            if out.table {
                return Err(Failure::Usage("figure data has no table view".into()));
            }
            if *samples < 2 {
                return Err(Failure::Usage("--samples must be at least 2".into()));
            }
            let fig = sweep::figure_data(FigureId::from_number(*id).expect("range checked by the parser"), *samples);
            out.write(|sink| Ok(report::write_figure(&fig, out.format, sink)?))
        }
        Command::Oracle { packet: packet_args, window: window_args, mc_args } => {
            let (spec, det) = detector(packet_args, window_args, &cfg)?;
            let pair = arrival_pair(&spec, &det, &tol)?;
            let mc_cfg = mc_config(mc_args, &cfg, pair.window.t_max);
            let est = mc::estimate(&spec, &det, &mc_cfg)?;
            let c = pair.classical;
            out.json(&json!({
                "parameters": spec_json(&spec, det.x_detector),
                "seed": mc_cfg.seed,
                "particles": mc_cfg.n_particles,
                "quadrature": stats_json(&c),
                "monte_carlo": {
                    "mean_t_ms": s_to_ms(est.mean_t),
                    "delta_t_ms": s_to_ms(est.delta_t),
                    "stderr_mean_ms": s_to_ms(est.stderr_mean),
                    "stderr_delta_ms": s_to_ms(est.stderr_delta),
                    "crossing_fraction": est.crossing_fraction(),
                    "n_crossings": est.n_crossings,
                    "n_never": est.n_never,
                },
                "z_mean": (est.mean_t - c.mean_t) / est.stderr_mean,
                "z_delta": (est.delta_t - c.delta_t) / est.stderr_delta,
            }))
        }
        Command::Selftest => {
            let outcomes = selftest::run_all();
            let passed = outcomes.iter().filter(|o| o.passed).count();
            let failed = outcomes.len() - passed;
            out.write(|sink| {
                for o in &outcomes {
                    writeln!(sink, "{}", o.line())?;
                }
                writeln!(sink, "{passed} passed, {failed} failed")?;
                Ok(())
            })?;
            if failed > 0 {
                return Err(Failure::Domain { kind: "SelftestFailed", message: format!("{failed} of {} checks failed", outcomes.len()) });
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Domain { kind, message }) => {
            eprintln!("{}", json!({ "error": kind, "message": message }));
            ExitCode::from(1)
        }
        Err(Failure::Io(message)) => {
            eprintln!("{}", json!({ "error": "IoError", "message": message }));
            ExitCode::from(1)
        }
        Err(Failure::Usage(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
    }
}
