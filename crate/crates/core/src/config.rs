//! Run configuration: a line-oriented `key = value` format with `[section]`
//! headers.
//!
//! ```text
//! # comment
//! [grid]
//! n_cells = 128
//!
//! [physics]
//! K = 1.0
//! ```
//!
//! Sections and keys (all optional; defaults in parentheses):
//!
//! - `[grid]` `n_cells` (128)
//! - `[physics]` `K`, `D`, `A`, `C_v` (1 each)
//! - `[control]` `cfl` (0.25), `dt_min` (1e-12), `dt_max` (0.1),
//!   `positivity_floor` (1e-10), `max_retries` (40)
//! - `[box]` `d1` (-1), `d2` (2), `d3` (0.5), `d4` (1), `d5` (0.5)
//! - `[ensemble]` `n_traj` (10), `seed` (20240917), `k_max` (4), `amp_u` (0.3),
//!   `amp_v` (0.5), `amp_omega` (0.5), `amp_theta` (0.3), `base_u` (0.8),
//!   `base_theta` (1), `max_rejections` (1000)
//! - `[experiment]` `t_end` (5), `sample_dt` (0.05), `order` (1),
//!   `fit_start_fraction` (0.1), `fit_floor_fraction` (1e3 machine epsilon),
//!   `epsilons` (1e-6, 1e-4), `converge_ns` (32, 64, 128, 256),
//!   `converge_t_end` (0.1), `converge_dt_max` (1e-4),
//!   `converge_order_min` (1.8), `converge_order_max` (2.2)
//! - `[output]` `directory` (out), `formats` (csv, json)
//!
//! Keys are case-sensitive. Lists are comma-separated. Unknown sections and
//! keys are errors.

use std::collections::HashSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::harness::{EnsembleSpec, FitWindow};
use crate::state::{DeltaBox, Grid, Order, PhysParams};
use crate::timestep::StepControl;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    /// Time series as CSV.
    Csv,
    /// Machine-readable run summary.
    Json,
}

impl Format {
    fn name(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub t_end: f64,
    pub sample_dt: f64,
    pub order: Order,
    pub fit: FitWindow,
    pub epsilons: Vec<f64>,
    pub converge_ns: Vec<usize>,
    pub converge_t_end: f64,
    pub converge_dt_max: f64,
    pub converge_order_min: f64,
    pub converge_order_max: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            t_end: 5.0,
            sample_dt: 0.05,
            order: Order::H1,
            fit: FitWindow::default(),
            epsilons: vec![1e-6, 1e-4],
            converge_ns: vec![32, 64, 128, 256],
            converge_t_end: 0.1,
            converge_dt_max: 1e-4,
            converge_order_min: 1.8,
            converge_order_max: 2.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputConfig {
    pub directory: String,
    pub formats: Vec<Format>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: "out".to_string(),
            formats: vec![Format::Csv, Format::Json],
        }
    }
}

impl OutputConfig {
    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }
}

/// Everything a run needs. `ensemble.delta` holds the `[box]` section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub n_cells: usize,
    pub physics: PhysParams,
    pub control: StepControl,
    pub ensemble: EnsembleSpec,
    pub experiment: ExperimentConfig,
    pub output: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            n_cells: 128,
            physics: PhysParams::default(),
            control: StepControl::default(),
            ensemble: EnsembleSpec::default(),
            experiment: ExperimentConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

const SECTIONS: [&str; 7] = ["grid", "physics", "control", "box", "ensemble", "experiment", "output"];

fn parse_f64(v: &str) -> Result<f64, String> {
    v.parse::<f64>().map_err(|_| format!("expected a number, got {v:?}"))
}

fn parse_usize(v: &str) -> Result<usize, String> {
    v.parse::<usize>()
        .map_err(|_| format!("expected a non-negative integer, got {v:?}"))
}

fn parse_list<T>(v: &str, item: fn(&str) -> Result<T, String>) -> Result<Vec<T>, String> {
    if v.is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|x| item(x.trim())).collect()
}

fn parse_format(v: &str) -> Result<Format, String> {
    match v {
        "csv" => Ok(Format::Csv),
        "json" => Ok(Format::Json),
        _ => Err(format!("unknown output format {v:?} (expected csv or json)")),
    }
}

fn unquote(v: &str) -> &str {
    v.strip_prefix('"')
        .and_then(|x| x.strip_suffix('"'))
        .unwrap_or(v)
}

impl RunConfig {
    fn set(&mut self, section: &str, key: &str, value: &str) -> Result<(), String> {
        let unknown = || format!("unknown key {key:?} in [{section}]");
        match section {
            "grid" => match key {
                "n_cells" => self.n_cells = parse_usize(value)?,
                _ => return Err(unknown()),
            },
            "physics" => {
                let x = match key {
                    "K" => &mut self.physics.k,
                    "D" => &mut self.physics.d,
                    "A" => &mut self.physics.a,
                    "C_v" => &mut self.physics.c_v,
                    _ => return Err(unknown()),
                };
                *x = parse_f64(value)?;
            }
            "control" => {
                let c = &mut self.control;
                match key {
                    "cfl" => c.cfl = parse_f64(value)?,
                    "dt_min" => c.dt_min = parse_f64(value)?,
                    "dt_max" => c.dt_max = parse_f64(value)?,
                    "positivity_floor" => c.positivity_floor = parse_f64(value)?,
                    "max_retries" => {
                        c.max_retries = value
                            .parse()
                            .map_err(|_| format!("expected a non-negative integer, got {value:?}"))?
                    }
                    _ => return Err(unknown()),
                }
            }
            "box" => {
                let b = &mut self.ensemble.delta;
                let x = match key {
                    "d1" => &mut b.d1,
                    "d2" => &mut b.d2,
                    "d3" => &mut b.d3,
                    "d4" => &mut b.d4,
                    "d5" => &mut b.d5,
                    _ => return Err(unknown()),
                };
                *x = parse_f64(value)?;
            }
            "ensemble" => {
                let e = &mut self.ensemble;
                match key {
                    "n_traj" => e.n_traj = parse_usize(value)?,
                    "seed" => {
                        e.seed = value
                            .parse()
                            .map_err(|_| format!("expected a 64-bit unsigned seed, got {value:?}"))?
                    }
                    "k_max" => e.k_max = parse_usize(value)?,
                    "amp_u" => e.amp_u = parse_f64(value)?,
                    "amp_v" => e.amp_v = parse_f64(value)?,
                    "amp_omega" => e.amp_omega = parse_f64(value)?,
                    "amp_theta" => e.amp_theta = parse_f64(value)?,
                    "base_u" => e.base_u = parse_f64(value)?,
                    "base_theta" => e.base_theta = parse_f64(value)?,
                    "max_rejections" => e.max_rejections = parse_usize(value)?,
                    _ => return Err(unknown()),
                }
            }
            "experiment" => {
                let x = &mut self.experiment;
                match key {
                    "t_end" => x.t_end = parse_f64(value)?,
                    "sample_dt" => x.sample_dt = parse_f64(value)?,
                    "order" => {
                        let k = value
                            .parse::<u32>()
                            .map_err(|_| format!("expected 1 or 2, got {value:?}"))?;
                        x.order = Order::from_int(k).map_err(|e| e.to_string())?;
                    }
                    "fit_start_fraction" => x.fit.start_fraction = parse_f64(value)?,
                    "fit_floor_fraction" => x.fit.floor_fraction = parse_f64(value)?,
                    "epsilons" => x.epsilons = parse_list(value, parse_f64)?,
                    "converge_ns" => x.converge_ns = parse_list(value, parse_usize)?,
                    "converge_t_end" => x.converge_t_end = parse_f64(value)?,
                    "converge_dt_max" => x.converge_dt_max = parse_f64(value)?,
                    "converge_order_min" => x.converge_order_min = parse_f64(value)?,
                    "converge_order_max" => x.converge_order_max = parse_f64(value)?,
                    _ => return Err(unknown()),
                }
            }
            "output" => match key {
                "directory" => self.output.directory = unquote(value).to_string(),
                "formats" => self.output.formats = parse_list(value, parse_format)?,
                _ => return Err(unknown()),
            },
            _ => unreachable!("section names are checked by the parser"),
        }
        Ok(())
    }

    /// Every cross-field problem, in section order.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let Err(e) = Grid::new(self.n_cells) {
            out.push(format!("[grid] {e}"));
        }
        let physics = self.physics.problems();
        out.extend(physics.iter().map(|m| format!("[physics] {m}")));
        out.extend(self.control.problems().iter().map(|m| format!("[control] {m}")));
        if physics.is_empty() {
            out.extend(
                self.ensemble
                    .delta
                    .violations(&self.physics)
                    .iter()
                    .map(|v| format!("[box] {v}")),
            );
            out.extend(
                self.ensemble
                    .problems(&self.physics)
                    .into_iter()
                    .filter(|m| !m.starts_with("box: "))
                    .map(|m| format!("[ensemble] {m}")),
            );
        }
        let x = &self.experiment;
        let positive = |name: &str, v: f64, out: &mut Vec<String>| {
            if !(v > 0.0 && v.is_finite()) {
                out.push(format!("[experiment] {name} must be positive, got {v}"));
            }
        };
        positive("t_end", x.t_end, &mut out);
        positive("sample_dt", x.sample_dt, &mut out);
        positive("converge_t_end", x.converge_t_end, &mut out);
        positive("converge_dt_max", x.converge_dt_max, &mut out);
        if x.order == Order::H2 && self.n_cells < 3 {
            out.push("[experiment] order 2 needs n_cells >= 3".to_string());
        }
        if !(x.fit.start_fraction > 0.0 && x.fit.start_fraction <= 1.0) {
            out.push(format!(
                "[experiment] fit_start_fraction must lie in (0, 1], got {}",
                x.fit.start_fraction
            ));
        }
        if !(x.fit.floor_fraction >= 0.0 && x.fit.floor_fraction < x.fit.start_fraction) {
            out.push(format!(
                "[experiment] fit_floor_fraction must lie in [0, fit_start_fraction), got {}",
                x.fit.floor_fraction
            ));
        }
        if x.epsilons.is_empty() {
            out.push("[experiment] epsilons must not be empty".to_string());
        }
        for &e in &x.epsilons {
            positive("every entry of epsilons", e, &mut out);
        }
        if x.converge_ns.len() < 2 {
            out.push("[experiment] converge_ns needs at least two grid sizes".to_string());
        }
        if x.converge_ns.first().is_some_and(|&n| n < 2) {
            out.push("[experiment] converge_ns entries must be at least 2".to_string());
        }
        for w in x.converge_ns.windows(2) {
            if !(w[1] > w[0] && w[0] > 0 && w[1] % w[0] == 0) {
                out.push(format!(
                    "[experiment] converge_ns must increase and each entry must divide the next, got {} then {}",
                    w[0], w[1]
                ));
            }
        }
        if !(x.converge_order_min <= x.converge_order_max) {
            out.push("[experiment] converge_order_min must not exceed converge_order_max".to_string());
        }
        if self.output.directory.is_empty() {
            out.push("[output] directory must not be empty".to_string());
        }
        out
    }

    pub fn validate(&self) -> Result<(), Error> {
        let problems = self.problems();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }

    pub fn grid(&self) -> crate::Result<Grid> {
        Grid::new(self.n_cells)
    }

    pub fn delta(&self) -> &DeltaBox {
        &self.ensemble.delta
    }

    /// Canonical text form; `parse_config(&c.to_text()) == Ok(c)`.
    pub fn to_text(&self) -> String {
        let list = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", ");
        let mut s = String::new();
        let p = &self.physics;
        let c = &self.control;
        let b = &self.ensemble.delta;
        let e = &self.ensemble;
        let x = &self.experiment;
        let _ = writeln!(s, "[grid]\nn_cells = {}\n", self.n_cells);
        let _ = writeln!(
            s,
            "[physics]\nK = {:?}\nD = {:?}\nA = {:?}\nC_v = {:?}\n",
            p.k, p.d, p.a, p.c_v
        );
        let _ = writeln!(
            s,
            "[control]\ncfl = {:?}\ndt_min = {:?}\ndt_max = {:?}\npositivity_floor = {:?}\nmax_retries = {}\n",
            c.cfl, c.dt_min, c.dt_max, c.positivity_floor, c.max_retries
        );
        let _ = writeln!(
            s,
            "[box]\nd1 = {:?}\nd2 = {:?}\nd3 = {:?}\nd4 = {:?}\nd5 = {:?}\n",
            b.d1, b.d2, b.d3, b.d4, b.d5
        );
        let _ = writeln!(
            s,
            "[ensemble]\nn_traj = {}\nseed = {}\nk_max = {}\namp_u = {:?}\namp_v = {:?}\namp_omega = {:?}\namp_theta = {:?}\nbase_u = {:?}\nbase_theta = {:?}\nmax_rejections = {}\n",
            e.n_traj, e.seed, e.k_max, e.amp_u, e.amp_v, e.amp_omega, e.amp_theta, e.base_u,
            e.base_theta, e.max_rejections
        );
        let _ = writeln!(
            s,
            "[experiment]\nt_end = {:?}\nsample_dt = {:?}\norder = {}\nfit_start_fraction = {:?}\nfit_floor_fraction = {:?}\nepsilons = {}\nconverge_ns = {}\nconverge_t_end = {:?}\nconverge_dt_max = {:?}\nconverge_order_min = {:?}\nconverge_order_max = {:?}\n",
            x.t_end,
            x.sample_dt,
            x.order.as_int(),
            x.fit.start_fraction,
            x.fit.floor_fraction,
            list(&x.epsilons),
            x.converge_ns.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(", "),
            x.converge_t_end,
            x.converge_dt_max,
            x.converge_order_min,
            x.converge_order_max
        );
        let _ = write!(
            s,
            "[output]\ndirectory = \"{}\"\nformats = {}\n",
            self.output.directory,
            self.output.formats.iter().map(|f| f.name()).collect::<Vec<_>>().join(", ")
        );
        s
    }
}

/// Parses and validates a configuration. Syntax errors, unknown keys and
/// validation failures are all collected and reported together.
pub fn parse_config(text: &str) -> Result<RunConfig, Error> {
    let mut cfg = RunConfig::default();
    let mut problems = Vec::new();
    let mut section: Option<&str> = None;
    let mut in_unknown_section = false;
    let mut seen = HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            match rest.strip_suffix(']').map(str::trim) {
                Some(name) if SECTIONS.contains(&name) => {
                    section = SECTIONS.iter().copied().find(|s| *s == name);
                    in_unknown_section = false;
                }
                Some(name) => {
                    problems.push(format!("line {line_no}: unknown section [{name}]"));
                    section = None;
                    in_unknown_section = true;
                }
                None => problems.push(format!("line {line_no}: malformed section header {line:?}")),
            }
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            problems.push(format!("line {line_no}: expected `key = value`, got {line:?}"));
            continue;
        };
        let (key, value) = (key.trim(), value.trim());
        let Some(sec) = section else {
            if in_unknown_section {
                continue;
            }
            problems.push(format!("line {line_no}: key {key:?} outside of a known section"));
            continue;
        };
        if !seen.insert((sec, key.to_string())) {
            problems.push(format!("line {line_no}: duplicate key {key:?} in [{sec}]"));
            continue;
        }
        if let Err(m) = cfg.set(sec, key, value) {
            problems.push(format!("line {line_no}: {m}"));
        }
    }
    if problems.is_empty() {
        problems.extend(cfg.problems());
    }
    if problems.is_empty() {
        Ok(cfg)
    } else {
        Err(Error::Config(problems))
    }
}
