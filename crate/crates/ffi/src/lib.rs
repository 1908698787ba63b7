//! C ABI for the micropolar simulator.
//!
//! A simulation is an opaque `MpSimulation` handle created by
//! `mp_simulation_new` or `mp_simulation_from_config` and released with
//! `mp_simulation_free`. Every fallible call returns an `MpStatus`; on
//! failure a message is kept per thread and can be read with
//! `mp_last_error_message`. Panics never cross the boundary.
//!
//! # Safety
//!
//! Pointer arguments must be null or valid for the access the function
//! documents: handles must come from this library and not yet be freed,
//! array pointers must hold at least the stated length, and strings must be
//! NUL-terminated. A handle must not be used from two threads at once.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use micropolar::config::parse_config;
use micropolar::functionals::{absorbing_radius, DiagnosticsRecord};
use micropolar::harness::sample_member;
use micropolar::state::{equilibrium_of, ensure_valid};
use micropolar::timestep::advance;
use micropolar::{DeltaBox, Equilibrium, Error, FluidState, Grid, Order, PhysParams, StepControl};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidConfig = 3,
    InvalidState = 4,
    InvalidBox = 5,
    BufferTooSmall = 6,
    DtUnderflow = 7,
    PositivityBreach = 8,
    NonFinite = 9,
    RejectionExhausted = 10,
    Panic = 11,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MpField {
    U = 0,
    Theta = 1,
    V = 2,
    Omega = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MpParams {
    pub k: f64,
    pub d: f64,
    pub a: f64,
    pub c_v: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MpControl {
    pub cfl: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    pub positivity_floor: f64,
    pub max_retries: u32,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MpBox {
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
    pub d4: f64,
    pub d5: f64,
}

/// Diagnostics of the current state. Norms are of the deviation from the
/// equilibrium fixed when the state was last set; `h2_total` is NaN below
/// three cells.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MpDiagnostics {
    pub t: f64,
    pub mass: f64,
    pub energy: f64,
    pub entropy: f64,
    pub dissipation: f64,
    pub l2_total: f64,
    pub h1_total: f64,
    pub h2_total: f64,
    pub u_min: f64,
    pub u_max: f64,
    pub theta_min: f64,
    pub theta_max: f64,
}

/// Opaque simulation handle.
pub struct MpSimulation {
    grid: Grid,
    params: PhysParams,
    control: StepControl,
    state: FluidState,
    equilibrium: Equilibrium,
    t: f64,
}

impl From<MpParams> for PhysParams {
    fn from(p: MpParams) -> Self {
        PhysParams {
            k: p.k,
            d: p.d,
            a: p.a,
            c_v: p.c_v,
        }
    }
}

impl From<PhysParams> for MpParams {
    fn from(p: PhysParams) -> Self {
        MpParams {
            k: p.k,
            d: p.d,
            a: p.a,
            c_v: p.c_v,
        }
    }
}

impl From<MpControl> for StepControl {
    fn from(c: MpControl) -> Self {
        StepControl {
            cfl: c.cfl,
            dt_min: c.dt_min,
            dt_max: c.dt_max,
            positivity_floor: c.positivity_floor,
            max_retries: c.max_retries,
        }
    }
}

impl From<StepControl> for MpControl {
    fn from(c: StepControl) -> Self {
        MpControl {
            cfl: c.cfl,
            dt_min: c.dt_min,
            dt_max: c.dt_max,
            positivity_floor: c.positivity_floor,
            max_retries: c.max_retries,
        }
    }
}

impl From<MpBox> for DeltaBox {
    fn from(b: MpBox) -> Self {
        DeltaBox {
            d1: b.d1,
            d2: b.d2,
            d3: b.d3,
            d4: b.d4,
            d5: b.d5,
        }
    }
}

impl From<DeltaBox> for MpBox {
    fn from(b: DeltaBox) -> Self {
        MpBox {
            d1: b.d1,
            d2: b.d2,
            d3: b.d3,
            d4: b.d4,
            d5: b.d5,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_last_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

struct Failure(MpStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Shape { .. } | Error::InvalidState(_) => MpStatus::InvalidState,
            Error::InvalidBox(_) => MpStatus::InvalidBox,
            Error::Config(_) => MpStatus::InvalidConfig,
            Error::DtUnderflow { .. } => MpStatus::DtUnderflow,
            Error::PositivityBreach { .. } => MpStatus::PositivityBreach,
            Error::NonFinite { .. } => MpStatus::NonFinite,
            Error::RejectionExhausted { .. } => MpStatus::RejectionExhausted,
            _ => MpStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(MpStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, converting errors and panics into a status code.
fn guard<F>(f: F) -> MpStatus
where
    F: FnOnce() -> Result<(), Failure>,
{
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error(String::new());
            MpStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".to_string());
            set_last_error(format!("internal panic: {msg}"));
            MpStatus::Panic
        }
    }
}

unsafe fn sim_ref<'a>(sim: *const MpSimulation) -> Result<&'a MpSimulation, Failure> {
    sim.as_ref().ok_or_else(|| null("simulation"))
}

unsafe fn sim_mut<'a>(sim: *mut MpSimulation) -> Result<&'a mut MpSimulation, Failure> {
    sim.as_mut().ok_or_else(|| null("simulation"))
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

impl MpSimulation {
    fn install(&mut self, state: FluidState) -> Result<(), Failure> {
        ensure_valid(&state, &self.grid)?;
        self.equilibrium = equilibrium_of(&state, &self.params, &self.grid)?;
        self.state = state;
        self.t = 0.0;
        Ok(())
    }
}

/// Writes the default physical parameters (all 1).
#[no_mangle]
pub unsafe extern "C" fn mp_params_default(out: *mut MpParams) -> MpStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = PhysParams::default().into();
        Ok(())
    })
}

/// Writes the default step control.
#[no_mangle]
pub unsafe extern "C" fn mp_control_default(out: *mut MpControl) -> MpStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = StepControl::default().into();
        Ok(())
    })
}

/// Writes the default box (-1, 2, 0.5, 1, 0.5).
#[no_mangle]
pub unsafe extern "C" fn mp_box_default(out: *mut MpBox) -> MpStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = DeltaBox::default().into();
        Ok(())
    })
}

/// Creates a simulation on `n_cells` cells holding the constant state
/// `u = theta = 1`, `v = omega = 0`. `params` and `control` may be null for
/// defaults.
#[no_mangle]
pub unsafe extern "C" fn mp_simulation_new(
    n_cells: usize,
    params: *const MpParams,
    control: *const MpControl,
    out: *mut *mut MpSimulation,
) -> MpStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = ptr::null_mut();
        let grid = Grid::new(n_cells)?;
        let params: PhysParams = params.as_ref().map_or_else(PhysParams::default, |p| (*p).into());
        params.validate()?;
        let control: StepControl = control.as_ref().map_or_else(StepControl::default, |c| (*c).into());
        control.validate()?;
        let state = FluidState::constant(&grid, 1.0, 1.0);
        let equilibrium = equilibrium_of(&state, &params, &grid)?;
        *out = Box::into_raw(Box::new(MpSimulation {
            grid,
            params,
            control,
            state,
            equilibrium,
            t: 0.0,
        }));
        Ok(())
    })
}

/// Creates a simulation from configuration text. The state is the first
/// sampled initial datum of the configured ensemble.
#[no_mangle]
pub unsafe extern "C" fn mp_simulation_from_config(text: *const c_char, out: *mut *mut MpSimulation) -> MpStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = ptr::null_mut();
        if text.is_null() {
            return Err(null("text"));
        }
        let text = CStr::from_ptr(text)
            .to_str()
            .map_err(|_| Failure(MpStatus::InvalidConfig, "configuration is not UTF-8".into()))?;
        let cfg = parse_config(text)?;
        let grid = cfg.grid()?;
        let sample = sample_member(&cfg.ensemble, &grid, &cfg.physics, 0)?;
        let equilibrium = equilibrium_of(&sample.state, &cfg.physics, &grid)?;
        *out = Box::into_raw(Box::new(MpSimulation {
            grid,
            params: cfg.physics,
            control: cfg.control,
            state: sample.state,
            equilibrium,
            t: 0.0,
        }));
        Ok(())
    })
}

/// Releases a handle. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn mp_simulation_free(sim: *mut MpSimulation) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}

/// Replaces the state with constants and resets the clock.
#[no_mangle]
pub unsafe extern "C" fn mp_simulation_set_constant(sim: *mut MpSimulation, u0: f64, theta0: f64) -> MpStatus {
    guard(|| {
        let sim = sim_mut(sim)?;
        let state = FluidState::constant(&sim.grid, u0, theta0);
        sim.install(state)
    })
}

/// Replaces the state and resets the clock. `u` and `theta` hold `n_cells`
/// values, `v` and `omega` hold `n_cells + 1`.
#[no_mangle]
pub unsafe extern "C" fn mp_simulation_set_state(
    sim: *mut MpSimulation,
    u: *const f64,
    u_len: usize,
    theta: *const f64,
    theta_len: usize,
    v: *const f64,
    v_len: usize,
    omega: *const f64,
    omega_len: usize,
) -> MpStatus {
    guard(|| {
        let sim = sim_mut(sim)?;
        let state = FluidState::new(
            slice(u, u_len, "u")?.to_vec(),
            slice(theta, theta_len, "theta")?.to_vec(),
            slice(v, v_len, "v")?.to_vec(),
            slice(omega, omega_len, "omega")?.to_vec(),
        );
        sim.install(state)
    })
}

/// Advances by `duration`. On failure the state is left unchanged.
#[no_mangle]
pub unsafe extern "C" fn mp_simulation_advance(sim: *mut MpSimulation, duration: f64) -> MpStatus {
    guard(|| {
        let sim = sim_mut(sim)?;
        if !(duration >= 0.0 && duration.is_finite()) {
            return Err(Failure(
                MpStatus::InvalidArgument,
                format!("duration must be non-negative and finite, got {duration}"),
            ));
        }
        if duration == 0.0 {
            return Ok(());
        }
        let (next, _) = advance(&sim.state, &sim.params, &sim.control, &sim.grid, duration, |_, _| {})
            .map_err(Failure::from)?;
        sim.state = next;
        sim.t += duration;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn mp_simulation_time(sim: *const MpSimulation, out: *mut f64) -> MpStatus {
    guard(|| {
        let sim = sim_ref(sim)?;
        *out.as_mut().ok_or_else(|| null("out"))? = sim.t;
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn mp_simulation_n_cells(sim: *const MpSimulation, out: *mut usize) -> MpStatus {
    guard(|| {
        let sim = sim_ref(sim)?;
        *out.as_mut().ok_or_else(|| null("out"))? = sim.grid.n_cells();
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn mp_simulation_diagnostics(sim: *const MpSimulation, out: *mut MpDiagnostics) -> MpStatus {
    guard(|| {
        let sim = sim_ref(sim)?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let r = DiagnosticsRecord::evaluate(sim.t, 0.0, &sim.state, &sim.equilibrium, &sim.params, &sim.grid)?;
        *out = MpDiagnostics {
            t: r.t,
            mass: r.mass,
            energy: r.energy,
            entropy: r.entropy,
            dissipation: r.dissipation,
            l2_total: r.l2_total,
            h1_total: r.h1_total,
            h2_total: r.h2_total,
            u_min: r.u_min,
            u_max: r.u_max,
            theta_min: r.theta_min,
            theta_max: r.theta_max,
        };
        Ok(())
    })
}

/// Copies one field into `buf`. `written` (may be null) receives the field
/// length; if `len` is too small nothing is copied and
/// `MP_STATUS_BUFFER_TOO_SMALL` is returned.
#[no_mangle]
pub unsafe extern "C" fn mp_simulation_copy_field(
    sim: *const MpSimulation,
    field: MpField,
    buf: *mut f64,
    len: usize,
    written: *mut usize,
) -> MpStatus {
    guard(|| {
        let sim = sim_ref(sim)?;
        let data = match field {
            MpField::U => &sim.state.u,
            MpField::Theta => &sim.state.theta,
            MpField::V => &sim.state.v,
            MpField::Omega => &sim.state.omega,
        };
        if let Some(w) = written.as_mut() {
            *w = data.len();
        }
        if len < data.len() {
            return Err(Failure(
                MpStatus::BufferTooSmall,
                format!("field needs {} values, buffer holds {len}", data.len()),
            ));
        }
        if buf.is_null() {
            return Err(null("buf"));
        }
        ptr::copy_nonoverlapping(data.as_ptr(), buf, data.len());
        Ok(())
    })
}

/// Checks the box against `params` (null for defaults) and writes the
/// lower bound on `d4` to `d4_bound` (may be null). Returns
/// `MP_STATUS_INVALID_BOX` when any inequality fails.
#[no_mangle]
pub unsafe extern "C" fn mp_box_check(b: *const MpBox, params: *const MpParams, d4_bound: *mut f64) -> MpStatus {
    guard(|| {
        let b: DeltaBox = (*b.as_ref().ok_or_else(|| null("box"))?).into();
        let p: PhysParams = params.as_ref().map_or_else(PhysParams::default, |p| (*p).into());
        p.validate()?;
        if let Some(out) = d4_bound.as_mut() {
            *out = b.d4_lower_bound(&p);
        }
        b.validate(&p).map_err(|v| Failure::from(Error::InvalidBox(v)))
    })
}

/// Absorbing-ball radius for `order` 1 or 2.
#[no_mangle]
pub unsafe extern "C" fn mp_absorbing_radius(
    b: *const MpBox,
    params: *const MpParams,
    order: u32,
    out: *mut f64,
) -> MpStatus {
    guard(|| {
        let b: DeltaBox = (*b.as_ref().ok_or_else(|| null("box"))?).into();
        let p: PhysParams = params.as_ref().map_or_else(PhysParams::default, |p| (*p).into());
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = absorbing_radius(&b, &p, Order::from_int(order)?)?;
        Ok(())
    })
}

/// Copies the calling thread's last error message, NUL-terminated and
/// truncated to `len`. Returns the buffer size needed for the full message.
#[no_mangle]
pub unsafe extern "C" fn mp_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len() + 1
    })
}

/// Static name of a status code.
#[no_mangle]
pub extern "C" fn mp_status_name(status: MpStatus) -> *const c_char {
    let s: &'static CStr = match status {
        MpStatus::Ok => c"ok",
        MpStatus::NullPointer => c"null_pointer",
        MpStatus::InvalidArgument => c"invalid_argument",
        MpStatus::InvalidConfig => c"invalid_config",
        MpStatus::InvalidState => c"invalid_state",
        MpStatus::InvalidBox => c"invalid_box",
        MpStatus::BufferTooSmall => c"buffer_too_small",
        MpStatus::DtUnderflow => c"dt_underflow",
        MpStatus::PositivityBreach => c"positivity_breach",
        MpStatus::NonFinite => c"non_finite",
        MpStatus::RejectionExhausted => c"rejection_exhausted",
        MpStatus::Panic => c"panic",
    };
    s.as_ptr()
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
