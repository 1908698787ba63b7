//! Experiment drivers: seeded sampling of admissible initial data, decay-rate
//! fitting, absorbing-ball entry, continuous-dependence probes and grid
//! self-convergence.
//!
//! Every driver is a pure function of its inputs and the seed. Trajectories
//! of an ensemble may run in parallel; results are always returned in
//! trajectory-index order.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::{
    absorbing_radius, difference_norms, pointwise_bounds_check, sobolev_norms, state_norms, DiagnosticsRecord,
};
use crate::state::{
    ensure_valid, equilibrium_of, h_delta_membership, DeltaBox, Equilibrium, FluidState, Grid,
    MembershipReport, Order, PhysParams,
};
use crate::timestep::{advance, stable_dt, StepControl, StepStats};

/// Name of the pseudo-random generator, recorded in every output artifact.
pub const GENERATOR: &str = "ChaCha8Rng (rand_chacha 0.3), seed_from_u64(seed), stream = trajectory index";

/// Parameters of the seeded initial-data sampler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub n_traj: usize,
    pub seed: u64,
    /// Highest Fourier mode.
    pub k_max: usize,
    pub amp_u: f64,
    pub amp_v: f64,
    pub amp_omega: f64,
    pub amp_theta: f64,
    pub base_u: f64,
    pub base_theta: f64,
    pub delta: DeltaBox,
    /// Draws allowed per trajectory before giving up.
    pub max_rejections: usize,
}

impl Default for EnsembleSpec {
    fn default() -> Self {
        Self {
            n_traj: 10,
            seed: 20_240_917,
            k_max: 4,
            amp_u: 0.3,
            amp_v: 0.5,
            amp_omega: 0.5,
            amp_theta: 0.3,
            base_u: 0.8,
            base_theta: 1.0,
            delta: DeltaBox::default(),
            max_rejections: 1000,
        }
    }
}

impl EnsembleSpec {
    /// Every problem with the spec itself (the box is checked against `p`).
    pub fn problems(&self, p: &PhysParams) -> Vec<String> {
        let mut out = Vec::new();
        if self.n_traj < 1 {
            out.push("n_traj must be at least 1".to_string());
        }
        if self.k_max < 1 {
            out.push("k_max must be at least 1".to_string());
        }
        if self.max_rejections < 1 {
            out.push("max_rejections must be at least 1".to_string());
        }
        for (name, a) in [
            ("amp_u", self.amp_u),
            ("amp_v", self.amp_v),
            ("amp_omega", self.amp_omega),
            ("amp_theta", self.amp_theta),
        ] {
            if !(a >= 0.0 && a.is_finite()) {
                out.push(format!("{name} must be non-negative, got {a}"));
            }
        }
        for (name, b) in [("base_u", self.base_u), ("base_theta", self.base_theta)] {
            if !(b > 0.0 && b.is_finite()) {
                out.push(format!("{name} must be positive, got {b}"));
            }
        }
        out.extend(self.delta.violations(p).iter().map(|v| format!("box: {v}")));
        out
    }

    pub fn validate(&self, p: &PhysParams) -> Result<()> {
        let problems = self.problems(p);
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(problems.join("; ")))
        }
    }
}

/// Fourier description of smooth initial data, independent of the grid:
///
/// `u₀ = base_u (1 + Σ a_k cos kπx)`, `θ₀ = base_theta (1 + Σ c_k cos kπx)`,
/// `v₀ = Σ b_k sin kπx`, `ω₀ = Σ e_k sin kπx`, for `k = 1..`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialProfile {
    pub base_u: f64,
    pub base_theta: f64,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub e: Vec<f64>,
}

fn cosine_series(coeffs: &[f64], x: f64) -> f64 {
    coeffs
        .iter()
        .enumerate()
        .map(|(i, a)| a * ((i + 1) as f64 * PI * x).cos())
        .sum()
}

fn sine_series(coeffs: &[f64], x: f64) -> f64 {
    coeffs
        .iter()
        .enumerate()
        .map(|(i, b)| b * ((i + 1) as f64 * PI * x).sin())
        .sum()
}

impl InitialProfile {
    pub fn constant(base_u: f64, base_theta: f64) -> Self {
        Self {
            base_u,
            base_theta,
            a: Vec::new(),
            b: Vec::new(),
            c: Vec::new(),
            e: Vec::new(),
        }
    }

    /// Samples the profile on `g`. Boundary nodes of `v` and `ω` are set to
    /// exactly zero.
    pub fn on_grid(&self, g: &Grid) -> FluidState {
        let n = g.n_cells();
        let centers: Vec<f64> = g.cell_centers().collect();
        let mut s = FluidState {
            u: centers
                .iter()
                .map(|&x| self.base_u * (1.0 + cosine_series(&self.a, x)))
                .collect(),
            theta: centers
                .iter()
                .map(|&x| self.base_theta * (1.0 + cosine_series(&self.c, x)))
                .collect(),
            v: g.nodes().map(|x| sine_series(&self.b, x)).collect(),
            omega: g.nodes().map(|x| sine_series(&self.e, x)).collect(),
        };
        for arr in [&mut s.v, &mut s.omega] {
            arr[0] = 0.0;
            arr[n] = 0.0;
        }
        s
    }
}

/// An admissible initial datum and how it was obtained.
#[derive(Debug, Clone)]
pub struct Sample {
    pub index: usize,
    pub profile: InitialProfile,
    pub state: FluidState,
    pub membership: MembershipReport,
    /// Draws used, including the accepted one.
    pub draws: usize,
}

fn rng_for(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn draw_profile(spec: &EnsembleSpec, rng: &mut ChaCha8Rng) -> InitialProfile {
    let mut profile = InitialProfile::constant(spec.base_u, spec.base_theta);
    for k in 1..=spec.k_max {
        let decay = 1.0 / (k * k) as f64;
        let mut coeff = |amp: f64| amp * decay * rng.gen_range(-1.0..=1.0);
        let a = coeff(spec.amp_u);
        let b = coeff(spec.amp_v);
        let c = coeff(spec.amp_theta);
        let e = coeff(spec.amp_omega);
        profile.a.push(a);
        profile.b.push(b);
        profile.c.push(c);
        profile.e.push(e);
    }
    profile
}

/// Draws trajectory `index` of the ensemble, rejecting until the datum lies
/// in the admissible set of `spec.delta`.
pub fn sample_member(spec: &EnsembleSpec, g: &Grid, p: &PhysParams, index: usize) -> Result<Sample> {
    spec.validate(p)?;
    let mut rng = rng_for(spec.seed, index);
    for draw in 1..=spec.max_rejections {
        let profile = draw_profile(spec, &mut rng);
        let state = profile.on_grid(g);
        if ensure_valid(&state, g).is_err() {
            continue;
        }
        let membership = h_delta_membership(&state, &spec.delta, p, g, Order::H1)?;
        if membership.member {
            return Ok(Sample {
                index,
                profile,
                state,
                membership,
                draws: draw,
            });
        }
    }
    Err(Error::RejectionExhausted {
        draws: spec.max_rejections,
    })
}

/// The first trajectory's initial datum.
pub fn sample_initial_data(spec: &EnsembleSpec, g: &Grid, p: &PhysParams) -> Result<FluidState> {
    sample_member(spec, g, p, 0).map(|s| s.state)
}

/// All `n_traj` initial data, in index order.
pub fn sample_ensemble(spec: &EnsembleSpec, g: &Grid, p: &PhysParams) -> Result<Vec<Sample>> {
    (0..spec.n_traj)
        .map(|i| sample_member(spec, g, p, i))
        .collect()
}

/// A view handed to sampling callbacks.
pub struct SamplePoint<'a> {
    pub t: f64,
    pub state: &'a FluidState,
    /// Largest accepted step in the preceding sampling interval; at `t = 0`
    /// the step the controller proposes for the initial state.
    pub dt_used: f64,
}

/// Advances `s0` to `t_end`, stopping exactly at the sample times
/// `0, sample_dt, 2 sample_dt, …, t_end` and calling `on_sample` at each.
pub fn sample_trajectory<F>(
    s0: &FluidState,
    p: &PhysParams,
    c: &StepControl,
    g: &Grid,
    t_end: f64,
    sample_dt: f64,
    mut on_sample: F,
) -> Result<(FluidState, StepStats)>
where
    F: FnMut(SamplePoint<'_>) -> Result<()>,
{
    ensure_valid(s0, g)?;
    c.validate()?;
    if !(t_end > 0.0 && t_end.is_finite() && sample_dt > 0.0 && sample_dt.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "t_end and sample_dt must be positive, got {t_end} and {sample_dt}"
        )));
    }
    let n_samples = ((t_end / sample_dt) - 1e-9).ceil().max(1.0) as usize;
    on_sample(SamplePoint {
        t: 0.0,
        state: s0,
        dt_used: stable_dt(s0, p, c, g),
    })?;

    let mut state = s0.clone();
    let mut total = StepStats::default();
    let mut t_prev = 0.0;
    for k in 1..=n_samples {
        let t_k = if k == n_samples {
            t_end
        } else {
            k as f64 * sample_dt
        };
        let (next, stats) = advance(&state, p, c, g, t_k - t_prev, |_, _| {}).map_err(|e| {
            shift_time(e, t_prev)
        })?;
        state = next;
        total.steps_taken += stats.steps_taken;
        total.steps_rejected += stats.steps_rejected;
        total.steps_clamped += stats.steps_clamped;
        total.dt_last = stats.dt_last;
        total.dt_max_used = total.dt_max_used.max(stats.dt_max_used);
        on_sample(SamplePoint {
            t: t_k,
            state: &state,
            dt_used: stats.dt_max_used,
        })?;
        t_prev = t_k;
    }
    total.t_reached = t_end;
    Ok((state, total))
}

/// Rebases the time carried by a runtime error from segment-local to
/// trajectory time.
fn shift_time(e: Error, offset: f64) -> Error {
    match e {
        Error::NonFinite {
            field,
            index,
            t,
            dt,
        } => Error::NonFinite {
            field,
            index,
            t: t + offset,
            dt,
        },
        Error::DtUnderflow {
            t,
            dt,
            dt_min,
            index,
        } => Error::DtUnderflow {
            t: t + offset,
            dt,
            dt_min,
            index,
        },
        Error::PositivityBreach {
            field,
            index,
            value,
            t,
            dt,
        } => Error::PositivityBreach {
            field,
            index,
            value,
            t: t + offset,
            dt,
        },
        other => other,
    }
}

/// Diagnostics time series of one trajectory.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub equilibrium: Equilibrium,
    pub records: Vec<DiagnosticsRecord>,
    pub final_state: FluidState,
    pub stats: StepStats,
}

pub fn run_trajectory(
    s0: &FluidState,
    p: &PhysParams,
    c: &StepControl,
    g: &Grid,
    t_end: f64,
    sample_dt: f64,
) -> Result<Trajectory> {
    let equilibrium = equilibrium_of(s0, p, g)?;
    let mut records = Vec::new();
    let (final_state, stats) = sample_trajectory(s0, p, c, g, t_end, sample_dt, |pt| {
        records.push(DiagnosticsRecord::evaluate(
            pt.t,
            pt.dt_used,
            pt.state,
            &equilibrium,
            p,
            g,
        )?);
        Ok(())
    })?;
    Ok(Trajectory {
        equilibrium,
        records,
        final_state,
        stats,
    })
}

/// One trajectory of an ensemble run. Runtime failures are kept per member.
#[derive(Debug, Clone)]
pub struct EnsembleMember {
    pub sample: Sample,
    pub outcome: std::result::Result<Trajectory, Error>,
}

pub fn run_ensemble(
    spec: &EnsembleSpec,
    p: &PhysParams,
    c: &StepControl,
    g: &Grid,
    t_end: f64,
    sample_dt: f64,
) -> Result<Vec<EnsembleMember>> {
    let samples = sample_ensemble(spec, g, p)?;
    Ok(samples
        .into_par_iter()
        .map(|sample| {
            let outcome = run_trajectory(&sample.state, p, c, g, t_end, sample_dt);
            EnsembleMember { sample, outcome }
        })
        .collect())
}

/// Rule selecting the samples used for an exponential fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitWindow {
    /// The window opens at the first sample with `Q ≤ start_fraction · Q(0)`.
    pub start_fraction: f64,
    /// and closes before the first later sample with `Q < floor_fraction · Q(0)`.
    pub floor_fraction: f64,
}

impl Default for FitWindow {
    fn default() -> Self {
        Self {
            start_fraction: 0.1,
            floor_fraction: 1e3 * f64::EPSILON,
        }
    }
}

impl FitWindow {
    /// Uses every sample.
    pub fn all() -> Self {
        Self {
            start_fraction: 1.0,
            floor_fraction: 0.0,
        }
    }
}

/// `Q(t) ≈ prefactor · e^{-gamma t}` over `window`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub gamma: f64,
    pub prefactor: f64,
    pub window: (f64, f64),
    /// RMS of the residuals of `log Q`.
    pub residual: f64,
    pub n_points: usize,
}

impl DecayFit {
    /// `max e^{gamma t} Q(t) / prefactor` over the fit window.
    pub fn envelope_ratio(&self, series: &[(f64, f64)]) -> f64 {
        series
            .iter()
            .filter(|(t, _)| *t >= self.window.0 && *t <= self.window.1)
            .map(|(t, q)| (self.gamma * t).exp() * q / self.prefactor)
            .fold(0.0, f64::max)
    }
}

/// Ordinary least-squares line `y = slope·x + intercept`; returns
/// `(slope, intercept, rms residual)`.
fn least_squares(points: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = points.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let rss: f64 = points
        .iter()
        .map(|(x, y)| (y - slope * x - intercept).powi(2))
        .sum();
    (slope, intercept, (rss / n).sqrt())
}

/// Least-squares fit of `log Q` against `t` over the samples picked by
/// `window`.
pub fn fit_exponential(series: &[(f64, f64)], window: &FitWindow) -> Result<DecayFit> {
    let q0 = match series.first() {
        Some(&(_, q)) if q > 0.0 && q.is_finite() => q,
        _ => return Err(Error::Fit("no usable points".to_string())),
    };
    let start = series
        .iter()
        .position(|&(_, q)| q <= window.start_fraction * q0)
        .ok_or_else(|| Error::Fit("no usable points: Q never drops below the start fraction".into()))?;
    let floor = window.floor_fraction * q0;
    let mut pts = Vec::new();
    for &(t, q) in &series[start..] {
        if q < floor {
            break;
        }
        if !(q > 0.0 && q.is_finite()) {
            return Err(Error::Fit(format!("non-positive Q = {q} at t = {t} inside the window")));
        }
        pts.push((t, q.ln()));
    }
    if pts.len() < 3 {
        return Err(Error::Fit(format!(
            "{} usable points, need at least 3",
            pts.len()
        )));
    }
    let (slope, intercept, residual) = least_squares(&pts);
    Ok(DecayFit {
        gamma: -slope,
        prefactor: intercept.exp(),
        window: (pts[0].0, pts[pts.len() - 1].0),
        residual,
        n_points: pts.len(),
    })
}

#[derive(Debug, Clone)]
pub struct DecayRun {
    pub equilibrium: Equilibrium,
    /// `(t, Q(t))` with `Q` the squared deviation norm of the chosen order.
    pub series: Vec<(f64, f64)>,
    pub fit: std::result::Result<DecayFit, Error>,
    pub stats: StepStats,
}

/// Samples the squared deviation norm from the initial datum's equilibrium
/// and fits an exponential rate to it with the default window.
pub fn run_decay_experiment(
    s0: &FluidState,
    p: &PhysParams,
    c: &StepControl,
    g: &Grid,
    t_end: f64,
    sample_dt: f64,
    order: Order,
) -> Result<DecayRun> {
    run_decay_experiment_with(s0, p, c, g, t_end, sample_dt, order, &FitWindow::default())
}

/// As [`run_decay_experiment`], fitting over `window`.
#[allow(clippy::too_many_arguments)]
pub fn run_decay_experiment_with(
    s0: &FluidState,
    p: &PhysParams,
    c: &StepControl,
    g: &Grid,
    t_end: f64,
    sample_dt: f64,
    order: Order,
    window: &FitWindow,
) -> Result<DecayRun> {
    let equilibrium = equilibrium_of(s0, p, g)?;
    let mut series = Vec::new();
    let (_, stats) = sample_trajectory(s0, p, c, g, t_end, sample_dt, |pt| {
        let q = sobolev_norms(pt.state, &equilibrium, g, order)?.total(order);
        series.push((pt.t, q));
        Ok(())
    })?;
    let fit = fit_exponential(&series, window);
    Ok(DecayRun {
        equilibrium,
        series,
        fit,
        stats,
    })
}

/// Absorbing-ball record of one trajectory.
#[derive(Debug, Clone, Serialize)]
pub struct TrajectoryAbsorb {
    pub index: usize,
    pub initial_norm_sq: f64,
    pub peak_norm_sq: f64,
    pub final_norm_sq: f64,
    /// First sample time with `‖(u, v, ω, θ)‖² ≤ R²`.
    pub entry_time: Option<f64>,
    /// Whether every sample from `entry_time` on stays in the ball; `None`
    /// when the ball was never entered.
    pub stayed: Option<bool>,
    /// Earliest sample time from which every later sample satisfies the
    /// pointwise bounds.
    pub bounds_hold_from: Option<f64>,
    /// Samples at or after `entry_time` violating the pointwise bounds.
    pub bounds_violations_after_entry: usize,
    pub series: Vec<(f64, f64)>,
    pub failure: Option<String>,
}

impl TrajectoryAbsorb {
    pub fn absorbed(&self) -> bool {
        self.failure.is_none() && self.stayed == Some(true)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AbsorbReport {
    pub order: Order,
    pub radius: f64,
    pub trajectories: Vec<TrajectoryAbsorb>,
    pub max_entry_time: Option<f64>,
    pub max_initial_norm: f64,
    pub all_absorbed: bool,
}

impl AbsorbReport {
    fn summarize(order: Order, radius: f64, trajectories: Vec<TrajectoryAbsorb>) -> Self {
        let all_absorbed = trajectories.iter().all(TrajectoryAbsorb::absorbed);
        let max_entry_time = trajectories
            .iter()
            .map(|t| t.entry_time)
            .try_fold(0.0f64, |acc, e| e.map(|e| acc.max(e)));
        let max_initial_norm = trajectories
            .iter()
            .map(|t| t.initial_norm_sq.sqrt())
            .fold(0.0, f64::max);
        Self {
            order,
            radius,
            trajectories,
            max_entry_time,
            max_initial_norm,
            all_absorbed,
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn absorb_one(
    sample: &Sample,
    spec: &EnsembleSpec,
    p: &PhysParams,
    c: &StepControl,
    g: &Grid,
    t_end: f64,
    sample_dt: f64,
    order: Order,
    radius_sq: f64,
) -> TrajectoryAbsorb {
    let mut series = Vec::new();
    let mut bounds_ok = Vec::new();
    let run = sample_trajectory(&sample.state, p, c, g, t_end, sample_dt, |pt| {
        series.push((pt.t, state_norms(pt.state, g, order)?.total(order)));
        bounds_ok.push(pointwise_bounds_check(pt.state, &spec.delta, p, g).pass);
        Ok(())
    });
    let entry = series.iter().position(|&(_, n)| n <= radius_sq);
    let stayed = entry.map(|i| series[i..].iter().all(|&(_, n)| n <= radius_sq));
    let bounds_hold_from = match bounds_ok.iter().rposition(|ok| !ok) {
        None => series.first().map(|s| s.0),
        Some(last_bad) => series.get(last_bad + 1).map(|s| s.0),
    };
    let bounds_violations_after_entry = entry
        .map(|i| bounds_ok[i..].iter().filter(|ok| !**ok).count())
        .unwrap_or(0);
    TrajectoryAbsorb {
        index: sample.index,
        initial_norm_sq: series.first().map_or(f64::NAN, |s| s.1),
        peak_norm_sq: series.iter().map(|s| s.1).fold(0.0, f64::max),
        final_norm_sq: series.last().map_or(f64::NAN, |s| s.1),
        entry_time: entry.map(|i| series[i].0),
        stayed,
        bounds_hold_from,
        bounds_violations_after_entry,
        series,
        failure: run.err().map(|e| e.to_string()),
    }
}

/// Runs the sampled ensemble and records when each trajectory enters the
/// ball of radius `absorbing_radius(box)` in the raw-field norm of `order`,
/// and whether it stays there.
pub fn run_absorbing_experiment(
    spec: &EnsembleSpec,
    p: &PhysParams,
    c: &StepControl,
    g: &Grid,
    t_end: f64,
    sample_dt: f64,
    order: Order,
) -> Result<AbsorbReport> {
    let radius = absorbing_radius(&spec.delta, p, order)?;
    if order == Order::H2 && g.n_cells() < 3 {
        return Err(Error::GridTooSmall {
            n_cells: g.n_cells(),
            min: 3,
        });
    }
    let samples = sample_ensemble(spec, g, p)?;
    let trajectories = samples
        .par_iter()
        .map(|s| absorb_one(s, spec, p, c, g, t_end, sample_dt, order, radius * radius))
        .collect();
    Ok(AbsorbReport::summarize(order, radius, trajectories))
}

#[derive(Debug, Clone, Serialize)]
pub struct LipschitzReport {
    pub epsilon: f64,
    /// `(t, r(t))`, with `r` the H¹ distance normalized by its initial value.
    pub series: Vec<(f64, f64)>,
    /// Slope of the least-squares line through `(t, log r)`.
    pub exponent: f64,
    pub intercept: f64,
    /// `max_t (log r(t) - exponent · t)`.
    pub max_excess: f64,
}

/// Perturbs `v` by `epsilon · sin(πx)` and tracks the normalized H¹
/// separation between the two trajectories.
pub fn lipschitz_probe(
    s0: &FluidState,
    p: &PhysParams,
    c: &StepControl,
    g: &Grid,
    epsilon: f64,
    t_end: f64,
    sample_dt: f64,
) -> Result<LipschitzReport> {
    ensure_valid(s0, g)?;
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    let mut perturbed = s0.clone();
    for j in 1..g.n_cells() {
        perturbed.v[j] += epsilon * (PI * g.node(j)).sin();
    }
    ensure_valid(&perturbed, g)?;

    let record = |s: &FluidState| -> Result<Vec<(f64, FluidState)>> {
        let mut out = Vec::new();
        sample_trajectory(s, p, c, g, t_end, sample_dt, |pt| {
            out.push((pt.t, pt.state.clone()));
            Ok(())
        })?;
        Ok(out)
    };
    let (base, pert) = rayon::join(|| record(s0), || record(&perturbed));
    let (base, pert) = (base?, pert?);

    let d0 = difference_norms(&base[0].1, &pert[0].1, g)?.total(Order::H1).sqrt();
    let mut series = Vec::with_capacity(base.len());
    for ((t, a), (_, b)) in base.iter().zip(&pert) {
        let d = difference_norms(a, b, g)?.total(Order::H1).sqrt();
        series.push((*t, d / d0));
    }
    if let Some(&(t, _)) = series.iter().find(|(_, x)| !x.is_finite()) {
        return Err(Error::NonFinite {
            field: "separation",
            index: 0,
            t,
            dt: f64::NAN,
        });
    }
    let logs: Vec<(f64, f64)> = series.iter().map(|&(t, r)| (t, r.ln())).collect();
    let (exponent, intercept, _) = least_squares(&logs);
    let max_excess = logs
        .iter()
        .map(|(t, l)| l - exponent * t)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(LipschitzReport {
        epsilon,
        series,
        exponent,
        intercept,
        max_excess,
    })
}

pub const FIELD_NAMES: [&str; 4] = ["u", "v", "omega", "theta"];

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceReport {
    pub ns: Vec<usize>,
    pub t_end: f64,
    /// `errors[k][f]`: L² difference of field `f` between run `k` and run
    /// `k + 1` restricted to grid `k`.
    pub errors: Vec<[f64; 4]>,
    /// `orders[k][f]` from `errors[k]` and `errors[k + 1]`; `None` when both
    /// errors are exactly zero.
    pub orders: Vec<[Option<f64>; 4]>,
}

impl ConvergenceReport {
    /// True when every reported order lies in `[lo, hi]` or is exact.
    pub fn orders_within(&self, lo: f64, hi: f64) -> bool {
        self.orders
            .iter()
            .flatten()
            .all(|o| o.is_none_or(|x| x >= lo && x <= hi))
    }
}

fn restrict_cells(fine: &[f64], ratio: usize) -> Vec<f64> {
    fine.chunks(ratio)
        .map(|c| c.iter().sum::<f64>() / ratio as f64)
        .collect()
}

fn restrict_nodes(fine: &[f64], ratio: usize) -> Vec<f64> {
    fine.iter().step_by(ratio).copied().collect()
}

/// Self-convergence study: the profile is run to `t_end` on every grid in
/// `ns`, and consecutive runs are compared after restricting the finer one
/// (cell averages for cell fields, injection for node fields).
///
/// Keep `c.dt_max` small enough that time-integration error is negligible,
/// otherwise the measured order is not a spatial one.
pub fn convergence_study(
    profile: &InitialProfile,
    p: &PhysParams,
    c: &StepControl,
    ns: &[usize],
    t_end: f64,
) -> Result<ConvergenceReport> {
    if ns.len() < 2 {
        return Err(Error::InvalidArgument(
            "convergence study needs at least two grid sizes".into(),
        ));
    }
    for w in ns.windows(2) {
        if !(w[1] > w[0] && w[1] % w[0] == 0) {
            return Err(Error::InvalidArgument(format!(
                "grid sizes must increase and divide each other, got {} then {}",
                w[0], w[1]
            )));
        }
    }
    let runs: Vec<(Grid, FluidState)> = ns
        .par_iter()
        .map(|&n| {
            let g = Grid::new(n)?;
            let s0 = profile.on_grid(&g);
            let (s, _) = advance(&s0, p, c, &g, t_end, |_, _| {})?;
            Ok((g, s))
        })
        .collect::<Result<_>>()?;

    let mut errors = Vec::new();
    for w in runs.windows(2) {
        let (gc, coarse) = &w[0];
        let (gf, fine) = &w[1];
        let ratio = gf.n_cells() / gc.n_cells();
        let dx = gc.dx();
        let l2 = |a: &[f64], b: &[f64]| {
            (dx * a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>()).sqrt()
        };
        errors.push([
            l2(&coarse.u, &restrict_cells(&fine.u, ratio)),
            l2(&coarse.v, &restrict_nodes(&fine.v, ratio)),
            l2(&coarse.omega, &restrict_nodes(&fine.omega, ratio)),
            l2(&coarse.theta, &restrict_cells(&fine.theta, ratio)),
        ]);
    }
    let orders = errors
        .windows(2)
        .zip(ns.windows(2))
        .map(|(e, n)| {
            let log_ratio = ((n[1] / n[0]) as f64).ln();
            let mut o = [None; 4];
            for f in 0..4 {
                if !(e[0][f] == 0.0 && e[1][f] == 0.0) {
                    o[f] = Some((e[0][f] / e[1][f]).ln() / log_ratio);
                }
            }
            o
        })
        .collect();
    Ok(ConvergenceReport {
        ns: ns.to_vec(),
        t_end,
        errors,
        orders,
    })
}
