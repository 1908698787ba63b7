//! Staggered difference operators and the semi-discrete right-hand side.
//!
//! Node-to-cell differences and cell-to-node flux differences are adjoint
//! under the midpoint quadrature, so summation by parts holds exactly and the
//! discrete mass, energy and entropy balances mirror the continuum ones term
//! by term.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::state::{ensure_valid, FluidState, Grid, PhysParams};

/// Time derivatives of the four unknowns. Boundary entries of `dv` and
/// `domega` are always exactly zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeDerivative {
    pub du: Vec<f64>,
    pub dtheta: Vec<f64>,
    pub dv: Vec<f64>,
    pub domega: Vec<f64>,
}

impl TimeDerivative {
    pub fn zeros(g: &Grid) -> Self {
        Self {
            du: vec![0.0; g.n_cells()],
            dtheta: vec![0.0; g.n_cells()],
            dv: vec![0.0; g.n_nodes()],
            domega: vec![0.0; g.n_nodes()],
        }
    }

    pub(crate) fn first_non_finite(&self) -> Option<(&'static str, usize)> {
        for (name, arr) in [
            ("du", &self.du),
            ("dtheta", &self.dtheta),
            ("dv", &self.dv),
            ("domega", &self.domega),
        ] {
            if let Some(i) = arr.iter().position(|x| !x.is_finite()) {
                return Some((name, i));
            }
        }
        None
    }
}

fn check_len(what: &'static str, len: usize, expected: usize) -> Result<()> {
    if len == expected {
        Ok(())
    } else {
        Err(Error::Shape {
            what,
            expected,
            actual: len,
        })
    }
}

/// `(a_{i+1} - a_i) / dx` for every cell `i`, from a node array.
pub fn diff_node_to_cell(a: &[f64], g: &Grid) -> Result<Vec<f64>> {
    check_len("node array", a.len(), g.n_nodes())?;
    let inv_dx = 1.0 / g.dx();
    Ok(a.windows(2).map(|w| (w[1] - w[0]) * inv_dx).collect())
}

/// `(c_j - c_{j-1}) / dx` on interior nodes `j = 1..n_cells-1`, from a cell
/// array. Entry `k` of the result belongs to node `k + 1`.
pub fn diff_cell_to_node(c: &[f64], g: &Grid) -> Result<Vec<f64>> {
    check_len("cell array", c.len(), g.n_cells())?;
    let inv_dx = 1.0 / g.dx();
    Ok(c.windows(2).map(|w| (w[1] - w[0]) * inv_dx).collect())
}

/// Arithmetic mean of the two cells adjacent to each interior node.
/// Entry `k` belongs to node `k + 1`.
pub fn node_average_u(u: &[f64], g: &Grid) -> Result<Vec<f64>> {
    check_len("cell array", u.len(), g.n_cells())?;
    Ok(u.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect())
}

/// Total stress `σ = -K θ/u + v_x/u` on cells.
pub fn stress(s: &FluidState, p: &PhysParams, g: &Grid) -> Result<Vec<f64>> {
    ensure_valid(s, g)?;
    let dv = diff_node_to_cell(&s.v, g)?;
    Ok(s.u
        .iter()
        .zip(&s.theta)
        .zip(&dv)
        .map(|((&u, &th), &vx)| (-p.k * th + vx) / u)
        .collect())
}

/// Heat flux `θ_x / u` on nodes, without the factor `D`. Zero at both
/// boundary nodes (insulated ends).
pub fn heat_flux(s: &FluidState, _p: &PhysParams, g: &Grid) -> Result<Vec<f64>> {
    ensure_valid(s, g)?;
    let mut q = vec![0.0; g.n_nodes()];
    let dx = g.dx();
    for (j, qj) in q.iter_mut().enumerate().take(g.n_cells()).skip(1) {
        let u_hat = 0.5 * (s.u[j - 1] + s.u[j]);
        *qj = (s.theta[j] - s.theta[j - 1]) / (dx * u_hat);
    }
    Ok(q)
}

/// Reusable buffers for the right-hand side; sized for one grid.
#[derive(Debug, Clone)]
pub struct Workspace {
    /// `v_x` on cells.
    pub(crate) vx: Vec<f64>,
    /// `ω_x` on cells.
    pub(crate) wx: Vec<f64>,
    /// Node mean of `u`, zero on the two boundary nodes.
    pub(crate) u_node: Vec<f64>,
    sigma: Vec<f64>,
    tau: Vec<f64>,
    q: Vec<f64>,
}

impl Workspace {
    pub fn new(g: &Grid) -> Self {
        let n = g.n_cells();
        Self {
            vx: vec![0.0; n],
            wx: vec![0.0; n],
            u_node: vec![0.0; n + 1],
            sigma: vec![0.0; n],
            tau: vec![0.0; n],
            q: vec![0.0; n + 1],
        }
    }

    /// Fills the derivative and mean buffers shared by the right-hand side
    /// and the dissipation functional.
    pub(crate) fn prepare(&mut self, s: &FluidState, g: &Grid) {
        let n = g.n_cells();
        let inv_dx = 1.0 / g.dx();
        for i in 0..n {
            self.vx[i] = (s.v[i + 1] - s.v[i]) * inv_dx;
            self.wx[i] = (s.omega[i + 1] - s.omega[i]) * inv_dx;
        }
        self.u_node[0] = 0.0;
        self.u_node[n] = 0.0;
        for j in 1..n {
            self.u_node[j] = 0.5 * (s.u[j - 1] + s.u[j]);
        }
    }

    /// Half-sum `S_i` of `ũ ω²` over the two nodes of cell `i`.
    #[inline]
    pub(crate) fn reaction_source(&self, s: &FluidState, i: usize) -> f64 {
        let left = self.u_node[i] * s.omega[i] * s.omega[i];
        let right = self.u_node[i + 1] * s.omega[i + 1] * s.omega[i + 1];
        0.5 * (left + right)
    }
}

/// Right-hand side without validation, for use inside the time integrator
/// where stage states are trusted. Shapes must match `g`.
pub(crate) fn rhs_into(
    s: &FluidState,
    p: &PhysParams,
    g: &Grid,
    ws: &mut Workspace,
    out: &mut TimeDerivative,
) {
    let n = g.n_cells();
    let dx = g.dx();
    let inv_dx = 1.0 / dx;
    ws.prepare(s, g);

    for i in 0..n {
        let inv_u = 1.0 / s.u[i];
        ws.sigma[i] = (-p.k * s.theta[i] + ws.vx[i]) * inv_u;
        ws.tau[i] = ws.wx[i] * inv_u;
    }
    ws.q[0] = 0.0;
    ws.q[n] = 0.0;
    for j in 1..n {
        ws.q[j] = (s.theta[j] - s.theta[j - 1]) * inv_dx / ws.u_node[j];
    }

    out.du.copy_from_slice(&ws.vx);

    out.dv[0] = 0.0;
    out.dv[n] = 0.0;
    out.domega[0] = 0.0;
    out.domega[n] = 0.0;
    for j in 1..n {
        out.dv[j] = (ws.sigma[j] - ws.sigma[j - 1]) * inv_dx;
        out.domega[j] =
            p.a * ((ws.tau[j] - ws.tau[j - 1]) * inv_dx - ws.u_node[j] * s.omega[j]);
    }

    let inv_cv = 1.0 / p.c_v;
    for i in 0..n {
        let inv_u = 1.0 / s.u[i];
        let vx = ws.vx[i];
        let wx = ws.wx[i];
        let work = (-p.k * s.theta[i] * vx + vx * vx + wx * wx) * inv_u;
        let conduction = p.d * (ws.q[i + 1] - ws.q[i]) * inv_dx;
        out.dtheta[i] = inv_cv * (work + ws.reaction_source(s, i) + conduction);
    }
}

/// Semi-discrete right-hand side of the Lagrangian micropolar system.
pub fn rhs(s: &FluidState, p: &PhysParams, g: &Grid) -> Result<TimeDerivative> {
    ensure_valid(s, g)?;
    let mut ws = Workspace::new(g);
    let mut out = TimeDerivative::zeros(g);
    rhs_into(s, p, g, &mut ws, &mut out);
    if let Some((field, index)) = out.first_non_finite() {
        return Err(Error::NonFinite {
            field,
            index,
            t: f64::NAN,
            dt: f64::NAN,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn two_cell_example() -> (FluidState, PhysParams, Grid) {
        let g = Grid::new(2).unwrap();
        let s = FluidState::new(vec![1.0; 2], vec![1.0; 2], vec![0.0, 0.1, 0.0], vec![0.0; 3]);
        (s, PhysParams::default(), g)
    }

    #[test]
    fn node_to_cell_differences() {
        let g = Grid::new(2).unwrap();
        let d = diff_node_to_cell(&[0.0, 0.1, 0.0], &g).unwrap();
        assert!(close(d[0], 0.2, 1e-15) && close(d[1], -0.2, 1e-15));

        let g = Grid::new(10).unwrap();
        let c = diff_node_to_cell(&[3.5; 11], &g).unwrap();
        assert!(c.iter().all(|&x| x == 0.0));
        let lin: Vec<f64> = g.nodes().collect();
        let ones = diff_node_to_cell(&lin, &g).unwrap();
        assert!(ones.iter().all(|&x| close(x, 1.0, 1e-12)));

        assert!(diff_node_to_cell(&[0.0; 10], &g).is_err());
    }

    #[test]
    fn node_average_examples() {
        let g = Grid::new(2).unwrap();
        assert_eq!(node_average_u(&[1.0, 3.0], &g).unwrap(), vec![2.0]);
        let g = Grid::new(6).unwrap();
        assert_eq!(node_average_u(&[0.7; 6], &g).unwrap(), vec![0.7; 5]);
        let m = node_average_u(&[1.0, 2.0, 4.0, 4.5, 7.0, 9.0], &g).unwrap();
        assert!(m.windows(2).all(|w| w[0] <= w[1]));
        assert!(node_average_u(&[1.0; 5], &g).is_err());
    }

    #[test]
    fn stress_examples() {
        let (s, p, g) = two_cell_example();
        let sig = stress(&s, &p, &g).unwrap();
        assert!(close(sig[0], -0.8, 1e-14) && close(sig[1], -1.2, 1e-14));

        let g = Grid::new(5).unwrap();
        let mut s = FluidState::constant(&g, 1.0, 1.0);
        for (i, u) in s.u.iter_mut().enumerate() {
            *u = 0.5 + 0.1 * i as f64;
        }
        s.theta = s.u.clone();
        let p = PhysParams::new(2.5, 1.0, 1.0, 1.0).unwrap();
        assert!(stress(&s, &p, &g).unwrap().iter().all(|&x| close(x, -2.5, 1e-14)));
    }

    #[test]
    fn stress_viscous_part_is_linear_in_v() {
        let g = Grid::new(8).unwrap();
        let p = PhysParams::default();
        let mut s = FluidState::constant(&g, 1.3, 0.9);
        for j in 1..8 {
            s.v[j] = (j as f64 * 0.7).sin();
        }
        let base = stress(&FluidState::constant(&g, 1.3, 0.9), &p, &g).unwrap();
        let one = stress(&s, &p, &g).unwrap();
        let mut scaled = s.clone();
        scaled.v.iter_mut().for_each(|x| *x *= 3.0);
        let three = stress(&scaled, &p, &g).unwrap();
        for i in 0..8 {
            let visc1 = one[i] - base[i];
            let visc3 = three[i] - base[i];
            assert!(close(visc3, 3.0 * visc1, 1e-12));
        }
    }

    #[test]
    fn heat_flux_examples() {
        let g = Grid::new(2).unwrap();
        let s = FluidState::new(vec![1.0, 3.0], vec![1.0, 2.0], vec![0.0; 3], vec![0.0; 3]);
        let q = heat_flux(&s, &PhysParams::default(), &g).unwrap();
        assert_eq!(q, vec![0.0, 1.0, 0.0]);

        let g = Grid::new(9).unwrap();
        let s = FluidState::constant(&g, 1.7, 2.2);
        let q = heat_flux(&s, &PhysParams::default(), &g).unwrap();
        assert!(q.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn rhs_two_cell_example() {
        let (s, p, g) = two_cell_example();
        let r = rhs(&s, &p, &g).unwrap();
        let expect = |a: &[f64], b: &[f64]| {
            assert_eq!(a.len(), b.len());
            for (x, y) in a.iter().zip(b) {
                assert!(close(*x, *y, 1e-14), "{a:?} vs {b:?}");
            }
        };
        expect(&r.du, &[0.2, -0.2]);
        expect(&r.dv, &[0.0, -0.8, 0.0]);
        expect(&r.domega, &[0.0, 0.0, 0.0]);
        expect(&r.dtheta, &[-0.16, 0.24]);

        let dx = g.dx();
        let de: f64 = dx
            * (r.dtheta.iter().map(|x| p.c_v * x).sum::<f64>()
                + s.v.iter().zip(&r.dv).map(|(v, dv)| v * dv).sum::<f64>());
        assert!(de.abs() < 1e-15);
    }

    #[test]
    fn rhs_vanishes_on_constant_states() {
        for &(n, u, th) in &[(2, 1.0, 1.0), (17, 0.3, 4.0), (64, 2.5, 0.7)] {
            let g = Grid::new(n).unwrap();
            let s = FluidState::constant(&g, u, th);
            let p = PhysParams::new(1.4, 0.3, 2.0, 0.8).unwrap();
            let r = rhs(&s, &p, &g).unwrap();
            for arr in [&r.du, &r.dtheta, &r.dv, &r.domega] {
                assert!(arr.iter().all(|&x| x == 0.0));
            }
        }
    }

    #[test]
    fn rhs_rejects_invalid_state() {
        let g = Grid::new(4).unwrap();
        let mut s = FluidState::constant(&g, 1.0, 1.0);
        s.omega[4] = 1e-3;
        assert!(matches!(
            rhs(&s, &PhysParams::default(), &g),
            Err(Error::InvalidState(_))
        ));
    }

    #[test]
    fn domega_is_affine_in_omega_with_frozen_u() {
        let g = Grid::new(12).unwrap();
        let p = PhysParams::new(1.0, 1.0, 2.0, 1.0).unwrap();
        let mut s = FluidState::constant(&g, 0.8, 1.1);
        for j in 1..12 {
            s.omega[j] = (0.9 * j as f64).cos();
        }
        let r1 = rhs(&s, &p, &g).unwrap();
        let mut s2 = s.clone();
        s2.omega.iter_mut().for_each(|x| *x *= -2.0);
        let r2 = rhs(&s2, &p, &g).unwrap();
        for j in 0..=12 {
            assert!(close(r2.domega[j], -2.0 * r1.domega[j], 1e-11));
        }
    }
}
