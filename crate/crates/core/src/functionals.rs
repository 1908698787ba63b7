//! Discrete integrals and norms: mass, energy, entropy, entropy production,
//! Sobolev deviations from equilibrium, pointwise bounds and the radius of
//! the absorbing ball.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::Workspace;
use crate::state::{
    ensure_valid, theta_bounds, volume_bounds, DeltaBox, Equilibrium, FluidState, Grid, Order,
    PhysParams,
};

pub(crate) fn mass_unchecked(s: &FluidState, g: &Grid) -> f64 {
    g.dx() * s.u.iter().sum::<f64>()
}

pub(crate) fn energy_unchecked(s: &FluidState, p: &PhysParams, g: &Grid) -> f64 {
    let n = g.n_cells();
    let thermal: f64 = s.theta.iter().map(|th| p.c_v * th).sum();
    let inv_2a = 0.5 / p.a;
    let mechanical: f64 = (1..n)
        .map(|j| 0.5 * s.v[j] * s.v[j] + inv_2a * s.omega[j] * s.omega[j])
        .sum();
    g.dx() * (thermal + mechanical)
}

pub(crate) fn entropy_unchecked(s: &FluidState, p: &PhysParams, g: &Grid) -> f64 {
    g.dx()
        * s.u
            .iter()
            .zip(&s.theta)
            .map(|(u, th)| p.c_v * th.ln() + p.k * u.ln())
            .sum::<f64>()
}

/// `∫ u dx`.
pub fn mass(s: &FluidState, g: &Grid) -> Result<f64> {
    s.check_shape(g)?;
    Ok(mass_unchecked(s, g))
}

/// `∫ (C_v θ + v²/2 + ω²/(2A)) dx`.
pub fn energy(s: &FluidState, p: &PhysParams, g: &Grid) -> Result<f64> {
    s.check_shape(g)?;
    Ok(energy_unchecked(s, p, g))
}

/// `∫ (C_v log θ + K log u) dx`. Requires a valid (positive) state.
pub fn entropy(s: &FluidState, p: &PhysParams, g: &Grid) -> Result<f64> {
    ensure_valid(s, g)?;
    Ok(entropy_unchecked(s, p, g))
}

pub(crate) fn dissipation_with(s: &FluidState, p: &PhysParams, g: &Grid, ws: &mut Workspace) -> f64 {
    ws.prepare(s, g);
    let n = g.n_cells();
    let dx = g.dx();
    let mut cells = 0.0;
    for i in 0..n {
        let vx = ws.vx[i];
        let wx = ws.wx[i];
        let th = s.theta[i];
        cells += (vx * vx + wx * wx) / (s.u[i] * th) + ws.reaction_source(s, i) / th;
    }
    let mut conduction = 0.0;
    for j in 1..n {
        let jump = s.theta[j] - s.theta[j - 1];
        conduction += jump * jump / (dx * ws.u_node[j] * s.theta[j - 1] * s.theta[j]);
    }
    dx * cells + p.d * conduction
}

/// Entropy production rate, built from the same difference stencils as the
/// right-hand side so that it equals the discrete `dS/dt` identically.
pub fn dissipation_rate(s: &FluidState, p: &PhysParams, g: &Grid) -> Result<f64> {
    ensure_valid(s, g)?;
    let mut ws = Workspace::new(g);
    Ok(dissipation_with(s, p, g, &mut ws))
}

/// Squared discrete norms of one field: the `L²` part and the first and
/// second derivative seminorms.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FieldNorms {
    pub l2: f64,
    pub grad: f64,
    pub hess: f64,
}

impl FieldNorms {
    pub fn h1(&self) -> f64 {
        self.l2 + self.grad
    }

    pub fn h2(&self) -> f64 {
        self.h1() + self.hess
    }

    pub fn of_order(&self, order: Order) -> f64 {
        match order {
            Order::H1 => self.h1(),
            Order::H2 => self.h2(),
        }
    }
}

/// Squared norms of the four fields, each measured on its own grid.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    pub u: FieldNorms,
    pub v: FieldNorms,
    pub omega: FieldNorms,
    pub theta: FieldNorms,
}

impl NormReport {
    pub fn fields(&self) -> [(&'static str, FieldNorms); 4] {
        [
            ("u", self.u),
            ("v", self.v),
            ("omega", self.omega),
            ("theta", self.theta),
        ]
    }

    pub fn total_l2(&self) -> f64 {
        self.fields().iter().map(|(_, f)| f.l2).sum()
    }

    pub fn total(&self, order: Order) -> f64 {
        self.fields().iter().map(|(_, f)| f.of_order(order)).sum()
    }
}

/// Norms of a cell field shifted by `shift`. The first difference lives on
/// interior nodes, the second back on cells whose two nodes are interior.
pub(crate) fn cell_field_norms(f: &[f64], shift: f64, dx: f64) -> FieldNorms {
    let n = f.len();
    let l2 = dx * f.iter().map(|x| (x - shift) * (x - shift)).sum::<f64>();
    let inv_dx = 1.0 / dx;
    let grad_at = |j: usize| (f[j] - f[j - 1]) * inv_dx;
    let grad = dx * (1..n).map(|j| grad_at(j).powi(2)).sum::<f64>();
    let hess = dx
        * (1..n.saturating_sub(1))
            .map(|i| ((grad_at(i + 1) - grad_at(i)) * inv_dx).powi(2))
            .sum::<f64>();
    FieldNorms { l2, grad, hess }
}

/// Norms of a node field. The first difference lives on every cell, the
/// second on interior nodes.
pub(crate) fn node_field_norms(f: &[f64], dx: f64) -> FieldNorms {
    let n = f.len() - 1;
    let l2 = dx * f[1..n].iter().map(|x| x * x).sum::<f64>();
    let inv_dx = 1.0 / dx;
    let grad_at = |i: usize| (f[i + 1] - f[i]) * inv_dx;
    let grad = dx * (0..n).map(|i| grad_at(i).powi(2)).sum::<f64>();
    let hess = dx
        * (1..n)
            .map(|j| ((grad_at(j) - grad_at(j - 1)) * inv_dx).powi(2))
            .sum::<f64>();
    FieldNorms { l2, grad, hess }
}

fn norms_about(s: &FluidState, u_ref: f64, theta_ref: f64, g: &Grid) -> NormReport {
    let dx = g.dx();
    NormReport {
        u: cell_field_norms(&s.u, u_ref, dx),
        v: node_field_norms(&s.v, dx),
        omega: node_field_norms(&s.omega, dx),
        theta: cell_field_norms(&s.theta, theta_ref, dx),
    }
}

fn check_order(order: Order, g: &Grid) -> Result<()> {
    if order == Order::H2 && g.n_cells() < 3 {
        return Err(Error::GridTooSmall {
            n_cells: g.n_cells(),
            min: 3,
        });
    }
    Ok(())
}

/// Squared Sobolev norms of `(u - ū, v, ω, θ - θ̄)`.
///
/// Second differences are summed over interior points only; the one-sided
/// boundary stencils are left out, which under-counts by O(dx).
pub fn sobolev_norms(s: &FluidState, eq: &Equilibrium, g: &Grid, order: Order) -> Result<NormReport> {
    ensure_valid(s, g)?;
    check_order(order, g)?;
    Ok(norms_about(s, eq.u_bar, eq.theta_bar, g))
}

/// Squared Sobolev norms of the raw fields `(u, v, ω, θ)`, the quantity the
/// absorbing ball is measured in.
pub fn state_norms(s: &FluidState, g: &Grid, order: Order) -> Result<NormReport> {
    ensure_valid(s, g)?;
    check_order(order, g)?;
    Ok(norms_about(s, 0.0, 0.0, g))
}

/// Squared norms of the difference of two states on the same grid.
pub fn difference_norms(a: &FluidState, b: &FluidState, g: &Grid) -> Result<NormReport> {
    a.check_shape(g)?;
    b.check_shape(g)?;
    let sub = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p - q).collect::<Vec<_>>();
    let dx = g.dx();
    Ok(NormReport {
        u: cell_field_norms(&sub(&a.u, &b.u), 0.0, dx),
        v: node_field_norms(&sub(&a.v, &b.v), dx),
        omega: node_field_norms(&sub(&a.omega, &b.omega), dx),
        theta: cell_field_norms(&sub(&a.theta, &b.theta), 0.0, dx),
    })
}

/// Radius `2 sqrt((C_v² δ4² + δ2²) / C_v²)` of the absorbing ball; the same
/// expression serves both orders.
pub fn absorbing_radius(b: &DeltaBox, p: &PhysParams, _order: Order) -> Result<f64> {
    b.validate(p).map_err(Error::InvalidBox)?;
    let cv2 = p.c_v * p.c_v;
    Ok(2.0 * ((cv2 * b.d4 * b.d4 + b.d2 * b.d2) / cv2).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundKind {
    Lower,
    Upper,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundViolation {
    pub field: &'static str,
    pub index: usize,
    pub value: f64,
    pub bound: f64,
    pub kind: BoundKind,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundsCheck {
    pub pass: bool,
    pub violations: Vec<BoundViolation>,
}

/// Checks `δ3/2 ≤ u ≤ 2δ4` and `δ5/(2C_v) ≤ θ ≤ 2δ2/C_v` on every cell.
pub fn pointwise_bounds_check(s: &FluidState, b: &DeltaBox, p: &PhysParams, g: &Grid) -> BoundsCheck {
    let (u_lo, u_hi) = volume_bounds(b);
    let (t_lo, t_hi) = theta_bounds(b, p);
    let mut violations = Vec::new();
    let n = g.n_cells().min(s.u.len()).min(s.theta.len());
    for (field, arr, lo, hi) in [("u", &s.u, u_lo, u_hi), ("theta", &s.theta, t_lo, t_hi)] {
        for (index, &value) in arr[..n].iter().enumerate() {
            if !(value >= lo) {
                violations.push(BoundViolation {
                    field,
                    index,
                    value,
                    bound: lo,
                    kind: BoundKind::Lower,
                });
            }
            if !(value <= hi) {
                violations.push(BoundViolation {
                    field,
                    index,
                    value,
                    bound: hi,
                    kind: BoundKind::Upper,
                });
            }
        }
    }
    BoundsCheck {
        pass: violations.is_empty(),
        violations,
    }
}

/// One row of diagnostics at a sample time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub dt_used: f64,
    pub mass: f64,
    pub energy: f64,
    pub entropy: f64,
    pub dissipation: f64,
    /// Deviation norms from the trajectory's equilibrium.
    pub norms: NormReport,
    pub l2_total: f64,
    pub h1_total: f64,
    /// NaN on grids too coarse for second differences.
    pub h2_total: f64,
    pub u_min: f64,
    pub u_max: f64,
    pub theta_min: f64,
    pub theta_max: f64,
}

impl DiagnosticsRecord {
    pub fn evaluate(
        t: f64,
        dt_used: f64,
        s: &FluidState,
        eq: &Equilibrium,
        p: &PhysParams,
        g: &Grid,
    ) -> Result<Self> {
        ensure_valid(s, g)?;
        let norms = norms_about(s, eq.u_bar, eq.theta_bar, g);
        let h2_total = if g.n_cells() >= 3 {
            norms.total(Order::H2)
        } else {
            f64::NAN
        };
        let mut ws = Workspace::new(g);
        Ok(Self {
            t,
            dt_used,
            mass: mass_unchecked(s, g),
            energy: energy_unchecked(s, p, g),
            entropy: entropy_unchecked(s, p, g),
            dissipation: dissipation_with(s, p, g, &mut ws),
            l2_total: norms.total_l2(),
            h1_total: norms.total(Order::H1),
            h2_total,
            norms,
            u_min: s.u_min(),
            u_max: s.u_max(),
            theta_min: s.theta_min(),
            theta_max: s.theta_max(),
        })
    }
}
