//! Classical RK4 in time with a parabolic step-size bound and a
//! retry-with-halving positivity guard.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::{rhs_into, TimeDerivative, Workspace};
use crate::state::{ensure_valid, FluidState, Grid, PhysParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepControl {
    /// Safety factor in (0, 1].
    pub cfl: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    /// Smallest admissible value of `u` or `θ` after a step.
    pub positivity_floor: f64,
    /// Halvings allowed per step before giving up.
    pub max_retries: u32,
}

impl Default for StepControl {
    fn default() -> Self {
        Self {
            cfl: 0.25,
            dt_min: 1e-12,
            dt_max: 0.1,
            positivity_floor: 1e-10,
            max_retries: 40,
        }
    }
}

impl StepControl {
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            out.push(format!("cfl must lie in (0, 1], got {}", self.cfl));
        }
        if !(self.dt_min > 0.0 && self.dt_min.is_finite()) {
            out.push(format!("dt_min must be positive, got {}", self.dt_min));
        }
        if !(self.dt_max >= self.dt_min && self.dt_max.is_finite()) {
            out.push(format!(
                "dt_max must be finite and >= dt_min, got dt_max = {}, dt_min = {}",
                self.dt_max, self.dt_min
            ));
        }
        if !(self.positivity_floor > 0.0 && self.positivity_floor.is_finite()) {
            out.push(format!(
                "positivity_floor must be positive, got {}",
                self.positivity_floor
            ));
        }
        if self.max_retries < 1 {
            out.push("max_retries must be at least 1".to_string());
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidControl(p.join("; ")))
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub steps_taken: u64,
    pub steps_rejected: u64,
    /// Accepted steps whose proposed size was clamped to `[dt_min, dt_max]`.
    pub steps_clamped: u64,
    pub dt_last: f64,
    /// Largest accepted step.
    pub dt_max_used: f64,
    pub t_reached: f64,
}

/// Unclamped bound `cfl · min(dx² u_min / ν_eff, 1 / (A u_max))` with
/// `ν_eff = max(1, A, D/C_v)`.
pub fn raw_stable_dt(s: &FluidState, p: &PhysParams, c: &StepControl, g: &Grid) -> f64 {
    let dx = g.dx();
    let nu_eff = 1f64.max(p.a).max(p.d / p.c_v);
    let diffusive = c.cfl * dx * dx * s.u_min() / nu_eff;
    let reaction = c.cfl / (p.a * s.u_max());
    diffusive.min(reaction)
}

/// Proposed step size, clamped silently to `[dt_min, dt_max]`.
pub fn stable_dt(s: &FluidState, p: &PhysParams, c: &StepControl, g: &Grid) -> f64 {
    raw_stable_dt(s, p, c, g).clamp(c.dt_min, c.dt_max)
}

/// Allocation-free RK4 stepper for one grid.
#[derive(Debug, Clone)]
pub struct Rk4 {
    ws: Workspace,
    k: [TimeDerivative; 4],
    stage: FluidState,
}

impl Rk4 {
    pub fn new(g: &Grid) -> Self {
        Self {
            ws: Workspace::new(g),
            k: [
                TimeDerivative::zeros(g),
                TimeDerivative::zeros(g),
                TimeDerivative::zeros(g),
                TimeDerivative::zeros(g),
            ],
            stage: FluidState::constant(g, 1.0, 1.0),
        }
    }

    /// Writes one RK4 step of size `dt` from `s` into `out`. Boundary values of
    /// `v` and `ω` are re-pinned to zero.
    pub fn step_into(
        &mut self,
        s: &FluidState,
        p: &PhysParams,
        g: &Grid,
        dt: f64,
        out: &mut FluidState,
    ) {
        let [k1, k2, k3, k4] = &mut self.k;
        rhs_into(s, p, g, &mut self.ws, k1);
        axpy_state(&mut self.stage, s, 0.5 * dt, k1);
        rhs_into(&self.stage, p, g, &mut self.ws, k2);
        axpy_state(&mut self.stage, s, 0.5 * dt, k2);
        rhs_into(&self.stage, p, g, &mut self.ws, k3);
        axpy_state(&mut self.stage, s, dt, k3);
        rhs_into(&self.stage, p, g, &mut self.ws, k4);

        let w = dt / 6.0;
        let combine = |out: &mut [f64], base: &[f64], a: &[f64], b: &[f64], c: &[f64], d: &[f64]| {
            for i in 0..out.len() {
                out[i] = base[i] + w * (a[i] + 2.0 * b[i] + 2.0 * c[i] + d[i]);
            }
        };
        combine(&mut out.u, &s.u, &k1.du, &k2.du, &k3.du, &k4.du);
        combine(
            &mut out.theta,
            &s.theta,
            &k1.dtheta,
            &k2.dtheta,
            &k3.dtheta,
            &k4.dtheta,
        );
        combine(&mut out.v, &s.v, &k1.dv, &k2.dv, &k3.dv, &k4.dv);
        combine(
            &mut out.omega,
            &s.omega,
            &k1.domega,
            &k2.domega,
            &k3.domega,
            &k4.domega,
        );
        pin_boundaries(out);
    }
}

fn axpy_state(dst: &mut FluidState, base: &FluidState, h: f64, k: &TimeDerivative) {
    let axpy = |d: &mut [f64], b: &[f64], k: &[f64]| {
        for i in 0..d.len() {
            d[i] = b[i] + h * k[i];
        }
    };
    axpy(&mut dst.u, &base.u, &k.du);
    axpy(&mut dst.theta, &base.theta, &k.dtheta);
    axpy(&mut dst.v, &base.v, &k.dv);
    axpy(&mut dst.omega, &base.omega, &k.domega);
}

fn pin_boundaries(s: &mut FluidState) {
    let n = s.v.len() - 1;
    s.v[0] = 0.0;
    s.v[n] = 0.0;
    s.omega[0] = 0.0;
    s.omega[n] = 0.0;
}

fn first_non_finite(s: &FluidState) -> Option<(&'static str, usize)> {
    for (name, arr) in [
        ("u", &s.u),
        ("theta", &s.theta),
        ("v", &s.v),
        ("omega", &s.omega),
    ] {
        if let Some(i) = arr.iter().position(|x| !x.is_finite()) {
            return Some((name, i));
        }
    }
    None
}

/// One classical RK4 step. Positivity of the result is not checked.
pub fn rk4_step(s: &FluidState, p: &PhysParams, g: &Grid, dt: f64) -> Result<FluidState> {
    ensure_valid(s, g)?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    let mut out = s.clone();
    Rk4::new(g).step_into(s, p, g, dt, &mut out);
    if let Some((field, index)) = first_non_finite(&out) {
        return Err(Error::NonFinite {
            field,
            index,
            t: 0.0,
            dt,
        });
    }
    Ok(out)
}

enum StepFailure {
    NonFinite(&'static str, usize),
    Positivity(&'static str, usize, f64),
}

fn check_step(s: &FluidState, floor: f64) -> Option<StepFailure> {
    if let Some((field, i)) = first_non_finite(s) {
        return Some(StepFailure::NonFinite(field, i));
    }
    for (field, arr) in [("u", &s.u), ("theta", &s.theta)] {
        if let Some((i, &x)) = arr.iter().enumerate().find(|(_, &x)| x < floor) {
            return Some(StepFailure::Positivity(field, i, x));
        }
    }
    None
}

/// Integrates from `s0` over `[0, t_end]`, calling `observer(t, state)` after
/// every accepted step.
///
/// Each step proposes `min(stable_dt, t_end - t)`. A result with `u` or `θ`
/// below the positivity floor (or with non-finite entries) is discarded and
/// retried at half the step, at most `max_retries` times.
pub fn advance<F>(
    s0: &FluidState,
    p: &PhysParams,
    c: &StepControl,
    g: &Grid,
    t_end: f64,
    mut observer: F,
) -> Result<(FluidState, StepStats)>
where
    F: FnMut(f64, &FluidState),
{
    ensure_valid(s0, g)?;
    p.validate()?;
    c.validate()?;
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "t_end must be positive, got {t_end}"
        )));
    }

    let mut rk = Rk4::new(g);
    let mut current = s0.clone();
    let mut trial = s0.clone();
    let mut stats = StepStats::default();
    let mut t = 0.0;

    while t < t_end {
        let raw = raw_stable_dt(&current, p, c, g);
        let proposed = raw.clamp(c.dt_min, c.dt_max);
        let clamped = proposed != raw;
        let remaining = t_end - t;
        let finishing = remaining <= proposed;
        let mut dt = if finishing { remaining } else { proposed };
        let mut retries = 0;

        loop {
            rk.step_into(&current, p, g, dt, &mut trial);
            let Some(failure) = check_step(&trial, c.positivity_floor) else {
                break;
            };
            stats.steps_rejected += 1;
            if retries >= c.max_retries {
                return Err(match failure {
                    StepFailure::NonFinite(field, index) => Error::NonFinite { field, index, t, dt },
                    StepFailure::Positivity(field, index, value) => Error::PositivityBreach {
                        field,
                        index,
                        value,
                        t,
                        dt,
                    },
                });
            }
            retries += 1;
            dt *= 0.5;
            if dt < c.dt_min {
                let index = match failure {
                    StepFailure::NonFinite(_, i) | StepFailure::Positivity(_, i, _) => Some(i),
                };
                return Err(Error::DtUnderflow {
                    t,
                    dt,
                    dt_min: c.dt_min,
                    index,
                });
            }
        }

        std::mem::swap(&mut current, &mut trial);
        t = if finishing && retries == 0 { t_end } else { t + dt };
        stats.steps_taken += 1;
        if clamped && retries == 0 {
            stats.steps_clamped += 1;
        }
        stats.dt_last = dt;
        stats.dt_max_used = stats.dt_max_used.max(dt);
        observer(t, &current);
    }
    stats.t_reached = t;
    Ok((current, stats))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn smooth_state(g: &Grid) -> FluidState {
        let pi = std::f64::consts::PI;
        let mut s = FluidState::constant(g, 1.0, 1.0);
        for i in 0..g.n_cells() {
            let x = g.cell_center(i);
            s.u[i] = 1.0 + 0.1 * (pi * x).cos();
            s.theta[i] = 1.0 + 0.1 * (2.0 * pi * x).cos();
        }
        for j in 1..g.n_cells() {
            let x = g.node(j);
            s.v[j] = 0.1 * (pi * x).sin();
            s.omega[j] = 0.1 * (pi * x).sin();
        }
        s
    }

    #[test]
    fn stable_dt_examples() {
        let g = Grid::new(10).unwrap();
        let s = FluidState::constant(&g, 1.0, 1.0);
        let c = StepControl::default();
        let p = PhysParams::default();
        assert!((stable_dt(&s, &p, &c, &g) - 0.0025).abs() < 1e-15);

        let mut s = s;
        s.u[4] = 0.5;
        let p2 = PhysParams::new(1.0, 2.0, 1.0, 1.0).unwrap();
        assert!((stable_dt(&s, &p2, &c, &g) - 0.000625).abs() < 1e-15);

        let g2 = Grid::new(20).unwrap();
        let s2 = FluidState::constant(&g2, 1.0, 1.0);
        let s1 = FluidState::constant(&g, 1.0, 1.0);
        let ratio = raw_stable_dt(&s1, &p, &c, &g) / raw_stable_dt(&s2, &p, &c, &g2);
        assert!((ratio - 4.0).abs() < 1e-12);
    }

    #[test]
    fn reaction_cap_binds_for_large_a() {
        let g = Grid::new(2).unwrap();
        let s = FluidState::constant(&g, 1.0, 1.0);
        let p = PhysParams::new(1.0, 1.0, 1000.0, 1.0).unwrap();
        let c = StepControl {
            cfl: 1.0,
            ..StepControl::default()
        };
        // diffusive: 0.25 / 1000; reaction: 1 / 1000
        assert!((raw_stable_dt(&s, &p, &c, &g) - 0.25e-3).abs() < 1e-15);
        let p = PhysParams::new(1.0, 1.0, 1.0, 1.0).unwrap();
        let s = FluidState::constant(&g, 10.0, 1.0);
        // diffusive: 0.25*10 = 2.5; reaction: 0.1
        assert!((raw_stable_dt(&s, &p, &c, &g) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn rk4_constant_state_is_fixed() {
        let g = Grid::new(9).unwrap();
        let s = FluidState::constant(&g, 0.7, 1.9);
        let out = rk4_step(&s, &PhysParams::default(), &g, 0.37).unwrap();
        assert_eq!(out, s);
    }

    #[test]
    fn rk4_two_cell_velocity_update() {
        let g = Grid::new(2).unwrap();
        let s = FluidState::new(vec![1.0; 2], vec![1.0; 2], vec![0.0, 0.1, 0.0], vec![0.0; 3]);
        let out = rk4_step(&s, &PhysParams::default(), &g, 1e-4).unwrap();
        assert!((out.v[1] - 0.09992).abs() < 1e-7);
        assert_eq!(out.v[0], 0.0);
        assert_eq!(out.v[2], 0.0);
    }

    #[test]
    fn rk4_local_error_is_fifth_order() {
        let g = Grid::new(16).unwrap();
        let p = PhysParams::default();
        let s = smooth_state(&g);
        let local_error = |dt: f64| {
            let one = rk4_step(&s, &p, &g, dt).unwrap();
            let half = rk4_step(&s, &p, &g, dt / 2.0).unwrap();
            let two = rk4_step(&half, &p, &g, dt / 2.0).unwrap();
            one.u
                .iter()
                .chain(&one.theta)
                .chain(&one.v)
                .chain(&one.omega)
                .zip(two.u.iter().chain(&two.theta).chain(&two.v).chain(&two.omega))
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        };
        let e1 = local_error(2e-3);
        let e2 = local_error(1e-3);
        let order = (e1 / e2).log2();
        assert!((order - 5.0).abs() < 0.3, "observed local order {order}");
    }

    #[test]
    fn advance_keeps_equilibrium_bit_identical() {
        let g = Grid::new(32).unwrap();
        let s = FluidState::constant(&g, 1.0, 1.0);
        let mut calls = 0;
        let (out, stats) =
            advance(&s, &PhysParams::default(), &StepControl::default(), &g, 0.05, |_, st| {
                calls += 1;
                assert_eq!(st, &s);
            })
            .unwrap();
        assert_eq!(out, s);
        assert_eq!(stats.t_reached, 0.05);
        assert_eq!(calls as u64, stats.steps_taken);
    }

    #[test]
    fn semigroup_on_identical_step_sequences() {
        let g = Grid::new(8).unwrap();
        let p = PhysParams::default();
        let dt = 2f64.powi(-12);
        let c = StepControl {
            dt_max: dt,
            ..StepControl::default()
        };
        let s = smooth_state(&g);
        let t1 = 2f64.powi(-6);
        let t2 = 3.0 * 2f64.powi(-7);
        let (a, _) = advance(&s, &p, &c, &g, t1, |_, _| {}).unwrap();
        let (ab, _) = advance(&a, &p, &c, &g, t2, |_, _| {}).unwrap();
        let (direct, stats) = advance(&s, &p, &c, &g, t1 + t2, |_, _| {}).unwrap();
        assert_eq!(stats.steps_clamped, stats.steps_taken);
        assert_eq!(ab, direct);
    }

    #[test]
    fn near_vacuum_compression_breaches_positivity() {
        let g = Grid::new(16).unwrap();
        let p = PhysParams::default();
        let c = StepControl {
            dt_min: 1e-30,
            max_retries: 3,
            ..StepControl::default()
        };
        let mut s = FluidState::constant(&g, 1.0, 1.0);
        s.u[7] = c.positivity_floor * 1.01;
        s.v[7] = 1e3;
        s.v[8] = -1e3;
        let err = advance(&s, &p, &c, &g, 1.0, |_, _| {}).unwrap_err();
        match err {
            Error::PositivityBreach { field, index, .. } => {
                assert_eq!(field, "u");
                assert_eq!(index, 7);
            }
            other => panic!("expected a positivity breach, got {other:?}"),
        }
    }

    #[test]
    fn halving_below_dt_min_is_underflow() {
        let g = Grid::new(16).unwrap();
        let c = StepControl::default();
        let mut s = FluidState::constant(&g, 1.0, 1.0);
        s.u[7] = c.positivity_floor * 1.01;
        s.v[7] = 1e3;
        s.v[8] = -1e3;
        let err = advance(&s, &PhysParams::default(), &c, &g, 1.0, |_, _| {}).unwrap_err();
        assert!(matches!(err, Error::DtUnderflow { index: Some(7), .. }), "{err:?}");
    }

    #[test]
    fn advance_rejects_bad_inputs() {
        let g = Grid::new(4).unwrap();
        let s = FluidState::constant(&g, 1.0, 1.0);
        let p = PhysParams::default();
        assert!(advance(&s, &p, &StepControl::default(), &g, 0.0, |_, _| {}).is_err());
        let bad = StepControl {
            cfl: 1.5,
            ..StepControl::default()
        };
        assert!(matches!(
            advance(&s, &p, &bad, &g, 1.0, |_, _| {}),
            Err(Error::InvalidControl(_))
        ));
    }
}
