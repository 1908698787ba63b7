//! Command-line surface.
//!
//! Exit codes: 0 success, 1 invalid input or configuration, 2 runtime
//! failure during time integration, 3 an experiment assertion failed. Every
//! error is also written to stderr as one NDJSON object
//! `{"code", "message", "t"?, "index"?}`.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use serde_json::{json, Value};

use crate::config::{parse_config, Format, RunConfig};
use crate::error::Error;
use crate::functionals::absorbing_radius;
use crate::harness::{
    convergence_study, lipschitz_probe, run_absorbing_experiment, run_decay_experiment_with,
    run_ensemble, run_trajectory, sample_member, FIELD_NAMES,
};
use crate::output::{write_columns, write_text, write_timeseries_file, RunMetadata};
use crate::state::{Grid, Order};
use crate::timestep::StepControl;

#[derive(Debug, Parser)]
#[command(name = "micropolar", version, about = "Micropolar fluid simulator and verification harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Configuration file; defaults apply to everything it omits.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides `[ensemble] seed`.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Overrides `[output] directory`.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Suppresses the summary on stdout.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Run the first sampled initial datum and write its diagnostics.
    Simulate,
    /// Run every sampled trajectory and write one diagnostics file each.
    Ensemble,
    /// Fit exponential decay rates to the deviation norm of each trajectory.
    Decay,
    /// Check entry into and stay in the absorbing ball.
    Absorb,
    /// Measure separation growth under small perturbations.
    Lipschitz,
    /// Grid self-convergence study.
    Converge,
    /// Validate the configuration and print the box evaluation.
    Check,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Ensemble => "ensemble",
            Command::Decay => "decay",
            Command::Absorb => "absorb",
            Command::Lipschitz => "lipschitz",
            Command::Converge => "converge",
            Command::Check => "check",
        }
    }
}

enum Failure {
    Invalid(Error),
    Runtime(Error),
    Experiment(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_runtime() {
            Failure::Runtime(e)
        } else {
            Failure::Invalid(e)
        }
    }
}

impl Failure {
    fn exit_code(&self) -> i32 {
        match self {
            Failure::Invalid(_) => 1,
            Failure::Runtime(_) => 2,
            Failure::Experiment(_) => 3,
        }
    }

    fn to_json(&self) -> Value {
        match self {
            Failure::Invalid(e) | Failure::Runtime(e) => error_json(e),
            Failure::Experiment(m) => json!({"code": "experiment_failed", "message": m}),
        }
    }
}

fn error_json(e: &Error) -> Value {
    let mut v = json!({"code": e.code(), "message": e.to_string()});
    if let Some(t) = e.time() {
        v["t"] = json!(t);
    }
    if let Some(i) = e.index() {
        v["index"] = json!(i);
    }
    v
}

/// Summary text and JSON accumulated by a command.
struct Report {
    text: String,
    json: Value,
}

struct Ctx {
    cfg: RunConfig,
    grid: Grid,
    dir: PathBuf,
    meta: RunMetadata,
    report: Report,
}

impl Ctx {
    fn csv(&self) -> bool {
        self.cfg.output.wants(Format::Csv)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn line(&mut self, s: impl AsRef<str>) {
        self.report.text.push_str(s.as_ref());
        self.report.text.push('\n');
    }
}

/// Runs the CLI against the process streams.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_cli_with(argv, &mut stdout.lock(), &mut stderr.lock())
}

/// Runs the CLI with explicit output streams; returns the exit code.
pub fn run_cli_with<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{e}");
                return 0;
            }
            let _ = writeln!(err, "{}", json!({"code": "usage", "message": e.to_string()}));
            return 1;
        }
    };
    let quiet = cli.quiet;
    let command = cli.command;
    let mut ctx = match setup(cli) {
        Ok(c) => c,
        Err(f) => {
            let _ = writeln!(err, "{}", f.to_json());
            return f.exit_code();
        }
    };
    let outcome = dispatch(command, &mut ctx);
    let status = match &outcome {
        Ok(()) => "ok",
        Err(Failure::Invalid(_)) => "invalid",
        Err(Failure::Runtime(_)) => "runtime_error",
        Err(Failure::Experiment(_)) => "experiment_failed",
    };
    ctx.report.json["status"] = json!(status);
    if let Err(f) = &outcome {
        ctx.report.json["error"] = f.to_json();
    }
    let written = write_summary(command, &ctx);
    if !quiet {
        let _ = out.write_all(ctx.report.text.as_bytes());
    }
    let outcome = match (outcome, written) {
        (Ok(()), Err(e)) => Err(Failure::Invalid(e)),
        (o, _) => o,
    };
    match outcome {
        Ok(()) => 0,
        Err(f) => {
            let _ = writeln!(err, "{}", f.to_json());
            f.exit_code()
        }
    }
}

fn setup(cli: Cli) -> Result<Ctx, Failure> {
    let text = match &cli.config {
        Some(p) => std::fs::read_to_string(p)
            .map_err(|e| Error::Io(format!("cannot read {}: {e}", p.display())))?,
        None => String::new(),
    };
    let mut cfg = parse_config(&text)?;
    if let Some(seed) = cli.seed {
        cfg.ensemble.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output.directory = out.to_string_lossy().into_owned();
    }
    cfg.validate()?;
    let grid = cfg.grid()?;
    let dir = PathBuf::from(&cfg.output.directory);
    let meta = RunMetadata::new(cli.command.name(), &cfg);
    let json = json!({
        "command": cli.command.name(),
        "seed": meta.seed,
        "generator": meta.generator,
        "config_sha256": meta.config_sha256,
        "version": meta.version,
    });
    Ok(Ctx {
        cfg,
        grid,
        dir,
        meta,
        report: Report {
            text: String::new(),
            json,
        },
    })
}

fn write_summary(command: Command, ctx: &Ctx) -> Result<(), Error> {
    if matches!(command, Command::Check) {
        return Ok(());
    }
    write_text(&ctx.path(&format!("{}.summary.txt", command.name())), &ctx.report.text)?;
    if ctx.cfg.output.wants(Format::Json) {
        let mut s = serde_json::to_string_pretty(&ctx.report.json).expect("summary serializes");
        s.push('\n');
        write_text(&ctx.path(&format!("{}.summary.json", command.name())), &s)?;
    }
    Ok(())
}

fn dispatch(command: Command, ctx: &mut Ctx) -> Result<(), Failure> {
    let header = format!(
        "{} | n_cells {} | seed {} | config {}",
        command.name(),
        ctx.cfg.n_cells,
        ctx.meta.seed,
        &ctx.meta.config_sha256[..12]
    );
    ctx.line(header);
    match command {
        Command::Simulate => simulate(ctx),
        Command::Ensemble => ensemble(ctx),
        Command::Decay => decay(ctx),
        Command::Absorb => absorb(ctx),
        Command::Lipschitz => lipschitz(ctx),
        Command::Converge => converge(ctx),
        Command::Check => check(ctx),
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "none".to_string(), |v| format!("{v}"))
}

fn simulate(ctx: &mut Ctx) -> Result<(), Failure> {
    let c = &ctx.cfg;
    let sample = sample_member(&c.ensemble, &ctx.grid, &c.physics, 0)?;
    let x = &c.experiment;
    let traj = run_trajectory(&sample.state, &c.physics, &c.control, &ctx.grid, x.t_end, x.sample_dt)?;
    if ctx.csv() {
        write_timeseries_file(&ctx.path("simulate.csv"), &traj.records, &ctx.meta)?;
    }
    let first = &traj.records[0];
    let last = traj.records.last().expect("at least two samples");
    let mut text = String::new();
    let _ = writeln!(text, "{}", sample.membership);
    let _ = writeln!(
        text,
        "equilibrium u_bar = {} theta_bar = {}",
        traj.equilibrium.u_bar, traj.equilibrium.theta_bar
    );
    let _ = writeln!(
        text,
        "t_end = {} steps = {} rejected = {}",
        last.t, traj.stats.steps_taken, traj.stats.steps_rejected
    );
    let _ = writeln!(text, "mass drift   {:e}", last.mass / first.mass - 1.0);
    let _ = writeln!(text, "energy drift {:e}", last.energy / first.energy - 1.0);
    let _ = write!(text, "entropy {} -> {}", first.entropy, last.entropy);
    ctx.line(text);
    ctx.report.json["membership"] = serde_json::to_value(&sample.membership).expect("serializes");
    ctx.report.json["steps"] = json!(traj.stats.steps_taken);
    ctx.report.json["final"] = serde_json::to_value(last).expect("serializes");
    Ok(())
}

fn ensemble(ctx: &mut Ctx) -> Result<(), Failure> {
    let c = ctx.cfg.clone();
    let x = &c.experiment;
    let members = run_ensemble(&c.ensemble, &c.physics, &c.control, &ctx.grid, x.t_end, x.sample_dt)?;
    let mut first_failure = None;
    let mut rows = Vec::new();
    for m in members {
        let i = m.sample.index;
        match m.outcome {
            Ok(traj) => {
                if ctx.csv() {
                    let path = ctx.path(&format!("traj_{i:03}.csv"));
                    write_timeseries_file(&path, &traj.records, &ctx.meta)?;
                }
                let r0 = &traj.records[0];
                let mass = traj.records.iter().map(|r| (r.mass / r0.mass - 1.0).abs()).fold(0.0, f64::max);
                let energy = traj.records.iter().map(|r| (r.energy / r0.energy - 1.0).abs()).fold(0.0, f64::max);
                let entropy_drop = traj
                    .records
                    .windows(2)
                    .map(|w| w[0].entropy - w[1].entropy)
                    .fold(f64::NEG_INFINITY, f64::max);
                ctx.line(format!(
                    "traj {i:3}: steps {} mass drift {mass:.3e} energy drift {energy:.3e} max entropy drop {entropy_drop:.3e}",
                    traj.stats.steps_taken
                ));
                rows.push(json!({"index": i, "steps": traj.stats.steps_taken, "mass_drift": mass, "energy_drift": energy, "max_entropy_drop": entropy_drop}));
            }
            Err(e) => {
                ctx.line(format!("traj {i:3}: failed: {e}"));
                rows.push(json!({"index": i, "error": error_json(&e)}));
                first_failure.get_or_insert(e);
            }
        }
    }
    ctx.report.json["trajectories"] = Value::Array(rows);
    match first_failure {
        Some(e) => Err(e.into()),
        None => Ok(()),
    }
}

fn decay(ctx: &mut Ctx) -> Result<(), Failure> {
    let c = ctx.cfg.clone();
    let x = &c.experiment;
    let samples = crate::harness::sample_ensemble(&c.ensemble, &ctx.grid, &c.physics)?;
    let mut rows = Vec::new();
    let mut bad = Vec::new();
    for s in &samples {
        let run = run_decay_experiment_with(
            &s.state, &c.physics, &c.control, &ctx.grid, x.t_end, x.sample_dt, x.order, &x.fit,
        )?;
        if ctx.csv() {
            let data: Vec<Vec<f64>> = run.series.iter().map(|&(t, q)| vec![t, q]).collect();
            write_columns(&ctx.path(&format!("decay_{:03}.csv", s.index)), &["t", "q"], &data, &ctx.meta)?;
        }
        match &run.fit {
            Ok(f) => {
                let env = f.envelope_ratio(&run.series);
                ctx.line(format!(
                    "traj {:3}: gamma {:.6} prefactor {:.6e} residual {:.3e} window [{}, {}] points {} envelope {:.4}",
                    s.index, f.gamma, f.prefactor, f.residual, f.window.0, f.window.1, f.n_points, env
                ));
                if !(f.gamma > 0.0) {
                    bad.push(format!("trajectory {}: fitted gamma {} is not positive", s.index, f.gamma));
                }
                rows.push(json!({"index": s.index, "fit": f, "envelope_ratio": env}));
            }
            Err(e) => {
                ctx.line(format!("traj {:3}: {e}", s.index));
                bad.push(format!("trajectory {}: {e}", s.index));
                rows.push(json!({"index": s.index, "error": error_json(e)}));
            }
        }
    }
    ctx.report.json["order"] = json!(x.order.as_int());
    ctx.report.json["trajectories"] = Value::Array(rows);
    if bad.is_empty() {
        Ok(())
    } else {
        Err(Failure::Experiment(bad.join("; ")))
    }
}

fn absorb(ctx: &mut Ctx) -> Result<(), Failure> {
    let c = ctx.cfg.clone();
    let x = &c.experiment;
    let r = run_absorbing_experiment(&c.ensemble, &c.physics, &c.control, &ctx.grid, x.t_end, x.sample_dt, x.order)?;
    ctx.line(format!(
        "order {} radius {} max entry {} max initial norm {}",
        r.order,
        r.radius,
        fmt_opt(r.max_entry_time),
        r.max_initial_norm
    ));
    let mut bad = Vec::new();
    for t in &r.trajectories {
        if ctx.csv() {
            let data: Vec<Vec<f64>> = t.series.iter().map(|&(a, b)| vec![a, b]).collect();
            write_columns(&ctx.path(&format!("absorb_{:03}.csv", t.index)), &["t", "norm_sq"], &data, &ctx.meta)?;
        }
        let stayed = t.stayed.map_or("n/a".to_string(), |s| s.to_string());
        ctx.line(format!(
            "traj {:3}: initial {:.4} peak {:.4} entry {} stayed {} bounds hold from {} violations after entry {}{}",
            t.index,
            t.initial_norm_sq.sqrt(),
            t.peak_norm_sq.sqrt(),
            fmt_opt(t.entry_time),
            stayed,
            fmt_opt(t.bounds_hold_from),
            t.bounds_violations_after_entry,
            t.failure.as_ref().map_or(String::new(), |f| format!(" failed: {f}"))
        ));
        if !t.absorbed() {
            bad.push(format!("trajectory {} was not absorbed", t.index));
        } else if t.bounds_violations_after_entry > 0 {
            bad.push(format!("trajectory {} violates the pointwise bounds after entry", t.index));
        }
    }
    ctx.report.json["report"] = serde_json::to_value(&r).expect("serializes");
    if bad.is_empty() {
        Ok(())
    } else {
        Err(Failure::Experiment(bad.join("; ")))
    }
}

fn lipschitz(ctx: &mut Ctx) -> Result<(), Failure> {
    let c = ctx.cfg.clone();
    let x = &c.experiment;
    let sample = sample_member(&c.ensemble, &ctx.grid, &c.physics, 0)?;
    let mut reports = Vec::new();
    for &eps in &x.epsilons {
        reports.push(lipschitz_probe(&sample.state, &c.physics, &c.control, &ctx.grid, eps, x.t_end, x.sample_dt)?);
    }
    if ctx.csv() {
        let mut header = vec!["t".to_string()];
        header.extend(x.epsilons.iter().map(|e| format!("r_{e:e}")));
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        let data: Vec<Vec<f64>> = (0..reports[0].series.len())
            .map(|k| {
                let mut row = vec![reports[0].series[k].0];
                row.extend(reports.iter().map(|r| r.series[k].1));
                row
            })
            .collect();
        write_columns(&ctx.path("lipschitz.csv"), &header, &data, &ctx.meta)?;
    }
    let mut bad = Vec::new();
    for r in &reports {
        ctx.line(format!(
            "epsilon {:e}: exponent {:.6} max excess {:.4} final r {:.6e}",
            r.epsilon,
            r.exponent,
            r.max_excess,
            r.series.last().map_or(f64::NAN, |s| s.1)
        ));
        if r.max_excess > 0.5 {
            bad.push(format!("epsilon {:e}: log r exceeds the fitted line by {}", r.epsilon, r.max_excess));
        }
    }
    let spread = reports
        .iter()
        .skip(1)
        .flat_map(|r| r.series.iter().zip(&reports[0].series).map(|(a, b)| (a.1 / b.1 - 1.0).abs()))
        .fold(0.0, f64::max);
    ctx.line(format!("max relative spread between epsilons {spread:.3e}"));
    ctx.report.json["probes"] = serde_json::to_value(&reports).expect("serializes");
    ctx.report.json["max_relative_spread"] = json!(spread);
    if bad.is_empty() {
        Ok(())
    } else {
        Err(Failure::Experiment(bad.join("; ")))
    }
}

fn converge(ctx: &mut Ctx) -> Result<(), Failure> {
    let c = ctx.cfg.clone();
    let x = &c.experiment;
    let sample = sample_member(&c.ensemble, &ctx.grid, &c.physics, 0)?;
    let control = StepControl {
        dt_max: c.control.dt_max.min(x.converge_dt_max),
        ..c.control
    };
    let r = convergence_study(&sample.profile, &c.physics, &control, &x.converge_ns, x.converge_t_end)?;
    if ctx.csv() {
        let data: Vec<Vec<f64>> = r
            .errors
            .iter()
            .zip(&r.ns)
            .map(|(e, &n)| {
                let mut row = vec![n as f64];
                row.extend(e);
                row
            })
            .collect();
        write_columns(&ctx.path("converge.csv"), &["n", "e_u", "e_v", "e_omega", "e_theta"], &data, &ctx.meta)?;
    }
    for (k, o) in r.orders.iter().enumerate() {
        let cells: Vec<String> = FIELD_NAMES
            .iter()
            .zip(o)
            .map(|(f, v)| format!("{f} {}", v.map_or("exact".to_string(), |v| format!("{v:.4}"))))
            .collect();
        ctx.line(format!("n {} / {} / {}: {}", r.ns[k], r.ns[k + 1], r.ns[k + 2], cells.join(", ")));
    }
    ctx.report.json["report"] = serde_json::to_value(&r).expect("serializes");
    if r.orders_within(x.converge_order_min, x.converge_order_max) {
        Ok(())
    } else {
        Err(Failure::Experiment(format!(
            "convergence orders outside [{}, {}]",
            x.converge_order_min, x.converge_order_max
        )))
    }
}

fn check(ctx: &mut Ctx) -> Result<(), Failure> {
    let c = ctx.cfg.clone();
    let b = c.ensemble.delta;
    let p = c.physics;
    let bound = b.d4_lower_bound(&p);
    let r1 = absorbing_radius(&b, &p, Order::H1)?;
    let r2 = absorbing_radius(&b, &p, Order::H2)?;
    ctx.line(format!(
        "box d1 = {} d2 = {} d3 = {} d4 = {} d5 = {}",
        b.d1, b.d2, b.d3, b.d4, b.d5
    ));
    ctx.line(format!(
        "d4 lower bound max(exp(d1/K) / (2 (2 d2/C_v)^(C_v/K)), d3) = {bound}: {}",
        if b.d4 >= bound { "satisfied" } else { "violated" }
    ));
    ctx.line(format!("absorbing radius R1 = {r1}"));
    ctx.line(format!("absorbing radius R2 = {r2}"));
    let sample = sample_member(&c.ensemble, &ctx.grid, &p, 0)?;
    ctx.line(format!("first sampled datum ({} draws):\n{}", sample.draws, sample.membership));
    Ok(())
}
