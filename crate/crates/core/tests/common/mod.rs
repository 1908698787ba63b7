#![allow(dead_code)]

use micropolar::operators::rhs;
use micropolar::{FluidState, Grid, PhysParams};
use rand::Rng;

/// A valid state with positive `u`, `θ` and pinned boundary nodes.
pub fn random_state<R: Rng>(rng: &mut R, g: &Grid) -> FluidState {
    let n = g.n_cells();
    let mut s = FluidState {
        u: (0..n).map(|_| rng.gen_range(0.2..3.0)).collect(),
        theta: (0..n).map(|_| rng.gen_range(0.2..3.0)).collect(),
        v: (0..=n).map(|_| rng.gen_range(-2.0..2.0)).collect(),
        omega: (0..=n).map(|_| rng.gen_range(-2.0..2.0)).collect(),
    };
    for f in [&mut s.v, &mut s.omega] {
        f[0] = 0.0;
        f[n] = 0.0;
    }
    s
}

pub fn random_params<R: Rng>(rng: &mut R) -> PhysParams {
    PhysParams::new(
        rng.gen_range(0.2..3.0),
        rng.gen_range(0.2..3.0),
        rng.gen_range(0.2..3.0),
        rng.gen_range(0.2..3.0),
    )
    .unwrap()
}

/// `(dE/dt, Σ|terms|)` assembled from the right-hand side.
pub fn energy_rate(s: &FluidState, p: &PhysParams, g: &Grid) -> (f64, f64) {
    let d = rhs(s, p, g).unwrap();
    let n = g.n_cells();
    let dx = g.dx();
    let mut sum = 0.0;
    let mut mag = 0.0;
    for i in 0..n {
        let t = p.c_v * d.dtheta[i];
        sum += t;
        mag += t.abs();
    }
    for j in 1..n {
        let a = s.v[j] * d.dv[j];
        let b = s.omega[j] * d.domega[j] / p.a;
        sum += a + b;
        mag += a.abs() + b.abs();
    }
    (dx * sum, dx * mag)
}

/// `(dS/dt, Σ|terms|)` assembled from the right-hand side.
pub fn entropy_rate(s: &FluidState, p: &PhysParams, g: &Grid) -> (f64, f64) {
    let d = rhs(s, p, g).unwrap();
    let dx = g.dx();
    let mut sum = 0.0;
    let mut mag = 0.0;
    for i in 0..g.n_cells() {
        let a = p.c_v * d.dtheta[i] / s.theta[i];
        let b = p.k * d.du[i] / s.u[i];
        sum += a + b;
        mag += a.abs() + b.abs();
    }
    (dx * sum, dx * mag)
}
