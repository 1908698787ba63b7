//! Grids, physical constants, fluid states and the constraint boxes that cut
//! out the admissible sets of initial data.
//!
//! All arrays use 0-based indices. Cell `i` (0..n_cells) sits between nodes `i`
//! and `i + 1`; nodes run 0..=n_cells. Specific volume and temperature are
//! cell-centered, velocity and microrotation live on nodes.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals;

/// Uniform grid on the mass interval [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    n_cells: usize,
    dx: f64,
}

impl Grid {
    pub const MIN_CELLS: usize = 2;

    pub fn new(n_cells: usize) -> Result<Self> {
        if n_cells < Self::MIN_CELLS {
            return Err(Error::GridTooSmall {
                n_cells,
                min: Self::MIN_CELLS,
            });
        }
        Ok(Self {
            n_cells,
            dx: 1.0 / n_cells as f64,
        })
    }

    #[inline]
    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    #[inline]
    pub fn n_nodes(&self) -> usize {
        self.n_cells + 1
    }

    #[inline]
    pub fn dx(&self) -> f64 {
        self.dx
    }

    /// Center of cell `i`, `(i + 1/2) dx`.
    #[inline]
    pub fn cell_center(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.dx
    }

    /// Position of node `j`, `j dx`.
    #[inline]
    pub fn node(&self, j: usize) -> f64 {
        j as f64 * self.dx
    }

    pub fn cell_centers(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_cells).map(|i| self.cell_center(i))
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_nodes()).map(|j| self.node(j))
    }
}

/// The positive constants of the constitutive law: pressure `p = K θ / u`,
/// heat conductivity `D`, microrotation coefficient `A` and specific heat `C_v`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysParams {
    pub k: f64,
    pub d: f64,
    pub a: f64,
    pub c_v: f64,
}

impl Default for PhysParams {
    fn default() -> Self {
        Self {
            k: 1.0,
            d: 1.0,
            a: 1.0,
            c_v: 1.0,
        }
    }
}

impl PhysParams {
    pub fn new(k: f64, d: f64, a: f64, c_v: f64) -> Result<Self> {
        let p = Self { k, d, a, c_v };
        p.validate()?;
        Ok(p)
    }

    pub fn problems(&self) -> Vec<String> {
        [("K", self.k), ("D", self.d), ("A", self.a), ("C_v", self.c_v)]
            .into_iter()
            .filter(|(_, x)| !(x.is_finite() && *x > 0.0))
            .map(|(name, x)| format!("{name} must be positive and finite, got {x}"))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let problems = self.problems();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidParams(problems.join("; ")))
        }
    }
}

/// Grid function for the unknowns `(u, v, ω, θ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluidState {
    /// Specific volume on cells.
    pub u: Vec<f64>,
    /// Absolute temperature on cells.
    pub theta: Vec<f64>,
    /// Velocity on nodes.
    pub v: Vec<f64>,
    /// Microrotation velocity on nodes.
    pub omega: Vec<f64>,
}

impl FluidState {
    pub fn new(u: Vec<f64>, theta: Vec<f64>, v: Vec<f64>, omega: Vec<f64>) -> Self {
        Self { u, theta, v, omega }
    }

    /// Spatially constant state at rest: `u ≡ u0`, `θ ≡ theta0`, `v ≡ ω ≡ 0`.
    pub fn constant(g: &Grid, u0: f64, theta0: f64) -> Self {
        Self {
            u: vec![u0; g.n_cells()],
            theta: vec![theta0; g.n_cells()],
            v: vec![0.0; g.n_nodes()],
            omega: vec![0.0; g.n_nodes()],
        }
    }

    pub fn n_cells(&self) -> usize {
        self.u.len()
    }

    pub fn check_shape(&self, g: &Grid) -> Result<()> {
        let n = g.n_cells();
        for (what, len, expected) in [
            ("u", self.u.len(), n),
            ("theta", self.theta.len(), n),
            ("v", self.v.len(), n + 1),
            ("omega", self.omega.len(), n + 1),
        ] {
            if len != expected {
                return Err(Error::Shape {
                    what,
                    expected,
                    actual: len,
                });
            }
        }
        Ok(())
    }

    pub fn u_min(&self) -> f64 {
        self.u.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn u_max(&self) -> f64 {
        self.u.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn theta_min(&self) -> f64 {
        self.theta.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn theta_max(&self) -> f64 {
        self.theta.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Boundary side of the interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Left => "left",
            Side::Right => "right",
        })
    }
}

/// One violated state invariant.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Violation {
    NonFinite {
        field: &'static str,
        index: usize,
        value: f64,
    },
    NonPositiveVolume {
        cell: usize,
        value: f64,
    },
    NonPositiveTemperature {
        cell: usize,
        value: f64,
    },
    BoundaryVelocity {
        side: Side,
        value: f64,
    },
    BoundaryMicrorotation {
        side: Side,
        value: f64,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NonFinite {
                field,
                index,
                value,
            } => write!(f, "{field}[{index}] = {value} is not finite"),
            Violation::NonPositiveVolume { cell, value } => {
                write!(f, "u at cell {cell} = {value} is not positive")
            }
            Violation::NonPositiveTemperature { cell, value } => {
                write!(f, "theta at cell {cell} = {value} is not positive")
            }
            Violation::BoundaryVelocity { side, value } => {
                write!(f, "v at {side} boundary = {value}, must be 0")
            }
            Violation::BoundaryMicrorotation { side, value } => {
                write!(f, "omega at {side} boundary = {value}, must be 0")
            }
        }
    }
}

/// Lists every violated invariant of `s`; an empty list means the state is valid.
pub fn validate_state(s: &FluidState, g: &Grid) -> Result<Vec<Violation>> {
    s.check_shape(g)?;
    let mut out = Vec::new();
    for (field, arr) in [
        ("u", &s.u),
        ("theta", &s.theta),
        ("v", &s.v),
        ("omega", &s.omega),
    ] {
        for (index, &value) in arr.iter().enumerate() {
            if !value.is_finite() {
                out.push(Violation::NonFinite {
                    field,
                    index,
                    value,
                });
            }
        }
    }
    for (cell, &value) in s.u.iter().enumerate() {
        if value <= 0.0 {
            out.push(Violation::NonPositiveVolume { cell, value });
        }
    }
    for (cell, &value) in s.theta.iter().enumerate() {
        if value <= 0.0 {
            out.push(Violation::NonPositiveTemperature { cell, value });
        }
    }
    let last = g.n_cells();
    for (side, j) in [(Side::Left, 0), (Side::Right, last)] {
        if s.v[j] != 0.0 {
            out.push(Violation::BoundaryVelocity {
                side,
                value: s.v[j],
            });
        }
        if s.omega[j] != 0.0 {
            out.push(Violation::BoundaryMicrorotation {
                side,
                value: s.omega[j],
            });
        }
    }
    Ok(out)
}

/// Shape check plus invariant check, as a single `Result`.
pub fn ensure_valid(s: &FluidState, g: &Grid) -> Result<()> {
    let violations = validate_state(s, g)?;
    if violations.is_empty() {
        Ok(())
    } else {
        Err(Error::InvalidState(violations))
    }
}

/// Mean specific volume and equilibrium temperature carried by a state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Equilibrium {
    pub u_bar: f64,
    pub theta_bar: f64,
}

/// The rest state a trajectory started from `s` relaxes to: the mass
/// `∫u` and the temperature `(1/C_v) ∫(v²/2 + ω²/(2A) + C_v θ)`.
pub fn equilibrium_of(s: &FluidState, p: &PhysParams, g: &Grid) -> Result<Equilibrium> {
    ensure_valid(s, g)?;
    Ok(Equilibrium {
        u_bar: functionals::mass_unchecked(s, g),
        theta_bar: functionals::energy_unchecked(s, p, g) / p.c_v,
    })
}

/// Which Sobolev family a membership or norm refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Order {
    H1,
    H2,
}

impl Order {
    pub fn from_int(k: u32) -> Result<Self> {
        match k {
            1 => Ok(Order::H1),
            2 => Ok(Order::H2),
            _ => Err(Error::InvalidArgument(format!("order must be 1 or 2, got {k}"))),
        }
    }

    pub fn as_int(self) -> u32 {
        match self {
            Order::H1 => 1,
            Order::H2 => 2,
        }
    }
}

impl fmt::Display for Order {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "H{}", self.as_int())
    }
}

/// The five constants `δ1..δ5` parameterizing the constrained phase spaces.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaBox {
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
    pub d4: f64,
    pub d5: f64,
}

impl Default for DeltaBox {
    fn default() -> Self {
        Self {
            d1: -1.0,
            d2: 2.0,
            d3: 0.5,
            d4: 1.0,
            d5: 0.5,
        }
    }
}

/// A failed inequality of the box constraints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BoxViolation {
    NonFinite { name: &'static str, value: f64 },
    D5NotPositive { d5: f64 },
    D5NotBelowD2 { d5: f64, d2: f64 },
    D3NotPositive { d3: f64 },
    D4BelowBound { d4: f64, bound: f64 },
}

impl fmt::Display for BoxViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BoxViolation::NonFinite { name, value } => write!(f, "{name} = {value} is not finite"),
            BoxViolation::D5NotPositive { d5 } => write!(f, "need 0 < d5, got d5 = {d5}"),
            BoxViolation::D5NotBelowD2 { d5, d2 } => {
                write!(f, "need d5 < d2 strictly, got d5 = {d5}, d2 = {d2}")
            }
            BoxViolation::D3NotPositive { d3 } => write!(f, "need d3 > 0, got d3 = {d3}"),
            BoxViolation::D4BelowBound { d4, bound } => write!(
                f,
                "need d4 >= max(exp(d1/K) / (2 (2 d2/C_v)^(C_v/K)), d3) = {bound}, got d4 = {d4}"
            ),
        }
    }
}

impl DeltaBox {
    /// `max(e^{δ1/K} / (2 (2δ2/C_v)^{C_v/K}), δ3)`.
    pub fn d4_lower_bound(&self, p: &PhysParams) -> f64 {
        let entropy_part =
            (self.d1 / p.k).exp() / (2.0 * (2.0 * self.d2 / p.c_v).powf(p.c_v / p.k));
        entropy_part.max(self.d3)
    }

    /// Every failed inequality, in the order they are stated.
    pub fn violations(&self, p: &PhysParams) -> Vec<BoxViolation> {
        let mut out = Vec::new();
        for (name, value) in [
            ("d1", self.d1),
            ("d2", self.d2),
            ("d3", self.d3),
            ("d4", self.d4),
            ("d5", self.d5),
        ] {
            if !value.is_finite() {
                out.push(BoxViolation::NonFinite { name, value });
            }
        }
        if !out.is_empty() {
            return out;
        }
        if self.d5 <= 0.0 {
            out.push(BoxViolation::D5NotPositive { d5: self.d5 });
        }
        if self.d5 >= self.d2 {
            out.push(BoxViolation::D5NotBelowD2 {
                d5: self.d5,
                d2: self.d2,
            });
        }
        if self.d3 <= 0.0 {
            out.push(BoxViolation::D3NotPositive { d3: self.d3 });
        }
        let bound = self.d4_lower_bound(p);
        if !(self.d4 >= bound && bound > 0.0) {
            out.push(BoxViolation::D4BelowBound { d4: self.d4, bound });
        }
        out
    }

    /// `Ok` iff every inequality holds with the stated strictness; otherwise
    /// the first failed inequality.
    pub fn validate(&self, p: &PhysParams) -> std::result::Result<(), BoxViolation> {
        match self.violations(p).into_iter().next() {
            None => Ok(()),
            Some(v) => Err(v),
        }
    }
}

/// One inequality evaluated during a membership test.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstraintCheck {
    /// Which of the five constraints (1..=5) this inequality belongs to.
    pub constraint: u8,
    pub name: &'static str,
    pub measured: f64,
    pub bound: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MembershipReport {
    pub order: Order,
    pub member: bool,
    pub checks: Vec<ConstraintCheck>,
}

impl MembershipReport {
    pub fn failures(&self) -> impl Iterator<Item = &ConstraintCheck> {
        self.checks.iter().filter(|c| !c.pass)
    }
}

impl fmt::Display for MembershipReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "membership in H_delta^({}): {}",
            self.order.as_int(),
            if self.member { "yes" } else { "no" }
        )?;
        for c in &self.checks {
            writeln!(
                f,
                "  ({}) {:<28} measured {:<24} bound {:<24} {}",
                c.constraint,
                c.name,
                c.measured,
                c.bound,
                if c.pass { "ok" } else { "FAIL" }
            )?;
        }
        Ok(())
    }
}

/// Evaluates the entropy, energy, mass and pointwise constraints defining
/// the admissible set for box `b`. `order` is recorded, not enforced: every
/// grid function has finite discrete H¹ and H² norms.
pub fn h_delta_membership(
    s: &FluidState,
    b: &DeltaBox,
    p: &PhysParams,
    g: &Grid,
    order: Order,
) -> Result<MembershipReport> {
    ensure_valid(s, g)?;
    b.validate(p).map_err(Error::InvalidBox)?;

    let entropy = functionals::entropy_unchecked(s, p, g);
    let energy = functionals::energy_unchecked(s, p, g);
    let mass = functionals::mass_unchecked(s, g);
    let (t_lo, t_hi) = theta_bounds(b, p);
    let (u_lo, u_hi) = volume_bounds(b);

    let lower = |constraint, name, measured: f64, bound: f64| ConstraintCheck {
        constraint,
        name,
        measured,
        bound,
        pass: measured >= bound,
    };
    let upper = |constraint, name, measured: f64, bound: f64| ConstraintCheck {
        constraint,
        name,
        measured,
        bound,
        pass: measured <= bound,
    };

    let checks = vec![
        lower(1, "entropy >= d1", entropy, b.d1),
        lower(2, "energy >= d5", energy, b.d5),
        upper(2, "energy <= d2", energy, b.d2),
        lower(3, "mass >= d3", mass, b.d3),
        upper(3, "mass <= d4", mass, b.d4),
        lower(4, "theta_min >= d5/(2 C_v)", s.theta_min(), t_lo),
        upper(4, "theta_max <= 2 d2/C_v", s.theta_max(), t_hi),
        lower(5, "u_min >= d3/2", s.u_min(), u_lo),
        upper(5, "u_max <= 2 d4", s.u_max(), u_hi),
    ];
    Ok(MembershipReport {
        order,
        member: checks.iter().all(|c| c.pass),
        checks,
    })
}

/// Pointwise temperature window `[δ5/(2C_v), 2δ2/C_v]`.
pub fn theta_bounds(b: &DeltaBox, p: &PhysParams) -> (f64, f64) {
    (b.d5 / (2.0 * p.c_v), 2.0 * b.d2 / p.c_v)
}

/// Pointwise specific-volume window `[δ3/2, 2δ4]`.
pub fn volume_bounds(b: &DeltaBox) -> (f64, f64) {
    (b.d3 / 2.0, 2.0 * b.d4)
}
