use std::ffi::{CStr, CString};
use std::ptr;

use micropolar_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as std::ffi::c_char; 512];
    unsafe {
        mp_last_error_message(buf.as_mut_ptr(), buf.len());
        CStr::from_ptr(buf.as_ptr()).to_string_lossy().into_owned()
    }
}

fn new_sim(n: usize) -> *mut MpSimulation {
    let mut sim = ptr::null_mut();
    let st = unsafe { mp_simulation_new(n, ptr::null(), ptr::null(), &mut sim) };
    assert_eq!(st, MpStatus::Ok);
    assert!(!sim.is_null());
    sim
}

#[test]
fn equilibrium_handle_round_trip() {
    let sim = new_sim(16);
    unsafe {
        let mut d = MpDiagnostics::default();
        assert_eq!(mp_simulation_diagnostics(sim, &mut d), MpStatus::Ok);
        assert_eq!((d.mass, d.energy, d.entropy, d.dissipation), (1.0, 1.0, 0.0, 0.0));

        assert_eq!(mp_simulation_advance(sim, 0.1), MpStatus::Ok);
        let mut t = 0.0;
        assert_eq!(mp_simulation_time(sim, &mut t), MpStatus::Ok);
        assert_eq!(t, 0.1);

        let mut u = [0.0; 16];
        let mut n = 0;
        assert_eq!(mp_simulation_copy_field(sim, MpField::U, u.as_mut_ptr(), 16, &mut n), MpStatus::Ok);
        assert_eq!(n, 16);
        assert!(u.iter().all(|&x| x == 1.0));
        mp_simulation_free(sim);
    }
}

#[test]
fn set_state_and_conserve_mass() {
    let sim = new_sim(8);
    let n = 8;
    let u: Vec<f64> = (0..n).map(|i| 1.0 + 0.1 * (i as f64 / n as f64)).collect();
    let theta = vec![1.0; n];
    let mut v: Vec<f64> = (0..=n).map(|j| (std::f64::consts::PI * j as f64 / n as f64).sin()).collect();
    v[0] = 0.0;
    v[n] = 0.0;
    let omega = vec![0.0; n + 1];
    unsafe {
        let st = mp_simulation_set_state(
            sim, u.as_ptr(), n, theta.as_ptr(), n, v.as_ptr(), n + 1, omega.as_ptr(), n + 1,
        );
        assert_eq!(st, MpStatus::Ok);
        let mut d0 = MpDiagnostics::default();
        mp_simulation_diagnostics(sim, &mut d0);
        assert_eq!(mp_simulation_advance(sim, 0.2), MpStatus::Ok);
        let mut d1 = MpDiagnostics::default();
        mp_simulation_diagnostics(sim, &mut d1);
        assert!((d1.mass / d0.mass - 1.0).abs() < 1e-13);
        assert!(d1.entropy >= d0.entropy);
        mp_simulation_free(sim);
    }
}

#[test]
fn bad_state_is_rejected_with_message() {
    let sim = new_sim(4);
    let u = [1.0, -1.0, 1.0, 1.0];
    let theta = [1.0; 4];
    let z = [0.0; 5];
    unsafe {
        let st = mp_simulation_set_state(sim, u.as_ptr(), 4, theta.as_ptr(), 4, z.as_ptr(), 5, z.as_ptr(), 5);
        assert_eq!(st, MpStatus::InvalidState);
        assert!(last_error().contains("invalid state"), "{}", last_error());
        let st = mp_simulation_set_state(sim, u.as_ptr(), 3, theta.as_ptr(), 4, z.as_ptr(), 5, z.as_ptr(), 5);
        assert_eq!(st, MpStatus::InvalidState);
        mp_simulation_free(sim);
    }
}

#[test]
fn small_buffer_reports_required_length() {
    let sim = new_sim(4);
    let mut buf = [0.0; 2];
    let mut n = 0;
    unsafe {
        let st = mp_simulation_copy_field(sim, MpField::V, buf.as_mut_ptr(), 2, &mut n);
        assert_eq!(st, MpStatus::BufferTooSmall);
        assert_eq!(n, 5);
        mp_simulation_free(sim);
    }
}

#[test]
fn null_pointers_are_reported() {
    unsafe {
        assert_eq!(mp_simulation_advance(ptr::null_mut(), 1.0), MpStatus::NullPointer);
        assert_eq!(mp_simulation_time(ptr::null(), ptr::null_mut()), MpStatus::NullPointer);
        assert_eq!(
            mp_simulation_new(8, ptr::null(), ptr::null(), ptr::null_mut()),
            MpStatus::NullPointer
        );
        mp_simulation_free(ptr::null_mut());
    }
}

#[test]
fn invalid_construction() {
    let mut sim = ptr::null_mut();
    unsafe {
        assert_eq!(mp_simulation_new(1, ptr::null(), ptr::null(), &mut sim), MpStatus::InvalidArgument);
        assert!(sim.is_null());
        let p = MpParams { k: 1.0, d: -1.0, a: 1.0, c_v: 1.0 };
        assert_eq!(mp_simulation_new(8, &p, ptr::null(), &mut sim), MpStatus::InvalidArgument);
        assert!(last_error().contains("D"));
    }
}

#[test]
fn config_text_constructs_a_sampled_state() {
    let text = CString::new("[grid]\nn_cells = 32\n").unwrap();
    let mut sim = ptr::null_mut();
    unsafe {
        assert_eq!(mp_simulation_from_config(text.as_ptr(), &mut sim), MpStatus::Ok);
        let mut n = 0;
        mp_simulation_n_cells(sim, &mut n);
        assert_eq!(n, 32);
        let mut d = MpDiagnostics::default();
        mp_simulation_diagnostics(sim, &mut d);
        assert!(d.h1_total > 0.0);
        mp_simulation_free(sim);

        let bad = CString::new("[grid]\nn_cells = banana\n").unwrap();
        assert_eq!(mp_simulation_from_config(bad.as_ptr(), &mut sim), MpStatus::InvalidConfig);
        assert!(last_error().contains("line 2"));
        assert!(sim.is_null());
    }
}

#[test]
fn box_check_and_radius() {
    let mut b = MpBox { d1: 0.0, d2: 0.0, d3: 0.0, d4: 0.0, d5: 0.0 };
    unsafe {
        mp_box_default(&mut b);
        let mut bound = 0.0;
        assert_eq!(mp_box_check(&b, ptr::null(), &mut bound), MpStatus::Ok);
        assert_eq!(bound, 0.5);
        let mut r = 0.0;
        assert_eq!(mp_absorbing_radius(&b, ptr::null(), 1, &mut r), MpStatus::Ok);
        assert!((r - 2.0 * 5f64.sqrt()).abs() < 1e-12);
        assert_eq!(mp_absorbing_radius(&b, ptr::null(), 3, &mut r), MpStatus::InvalidArgument);

        b.d4 = 0.01;
        assert_eq!(mp_box_check(&b, ptr::null(), &mut bound), MpStatus::InvalidBox);
        assert!(last_error().contains("d4"));
    }
}

#[test]
fn runtime_failure_leaves_state_untouched() {
    let sim = new_sim(16);
    let mut c = MpControl { cfl: 0.0, dt_min: 0.0, dt_max: 0.0, positivity_floor: 0.0, max_retries: 0 };
    unsafe {
        mp_control_default(&mut c);
        let n = 16;
        let mut u = vec![1.0; n];
        u[7] = 1.01e-10;
        let theta = vec![1.0; n];
        let mut v = vec![0.0; n + 1];
        v[7] = 1e3;
        v[8] = -1e3;
        let z = vec![0.0; n + 1];
        assert_eq!(
            mp_simulation_set_state(sim, u.as_ptr(), n, theta.as_ptr(), n, v.as_ptr(), n + 1, z.as_ptr(), n + 1),
            MpStatus::Ok
        );
        let st = mp_simulation_advance(sim, 1.0);
        assert!(matches!(st, MpStatus::DtUnderflow | MpStatus::PositivityBreach), "{st:?}");
        let mut t = -1.0;
        mp_simulation_time(sim, &mut t);
        assert_eq!(t, 0.0);
        let mut out = vec![0.0; n];
        mp_simulation_copy_field(sim, MpField::U, out.as_mut_ptr(), n, ptr::null_mut());
        assert_eq!(out, u);
        mp_simulation_free(sim);
    }
}

#[test]
fn status_names_and_version() {
    unsafe {
        assert_eq!(CStr::from_ptr(mp_status_name(MpStatus::Ok)).to_str().unwrap(), "ok");
        assert_eq!(
            CStr::from_ptr(mp_status_name(MpStatus::DtUnderflow)).to_str().unwrap(),
            "dt_underflow"
        );
        assert_eq!(CStr::from_ptr(mp_version()).to_str().unwrap(), env!("CARGO_PKG_VERSION"));
    }
}

#[test]
fn last_error_truncates() {
    unsafe {
        mp_simulation_advance(ptr::null_mut(), 1.0);
        let need = mp_last_error_message(ptr::null_mut(), 0);
        let mut small = [1 as std::ffi::c_char; 4];
        assert_eq!(mp_last_error_message(small.as_mut_ptr(), 4), need);
        assert_eq!(small[3], 0);
    }
}

#[test]
fn header_compiles_as_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/micropolar.h");
    let text = std::fs::read_to_string(header).unwrap();
    for sym in ["mp_simulation_new", "mp_simulation_advance", "MP_STATUS_OK", "typedef struct MpSimulation MpSimulation"] {
        assert!(text.contains(sym), "header lacks {sym}");
    }
    let dir = tempfile_dir();
    let src = dir.join("use_header.c");
    std::fs::write(
        &src,
        "#include \"micropolar.h\"\nint main(void) { MpSimulation *s = 0; MpStatus st = mp_simulation_new(8, 0, 0, &s); (void)st; return 0; }\n",
    )
    .unwrap();
    let status = std::process::Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-I"])
        .arg(concat!(env!("CARGO_MANIFEST_DIR"), "/include"))
        .arg(&src)
        .status();
    let _ = std::fs::remove_dir_all(&dir);
    match status {
        Ok(s) => assert!(s.success(), "header failed to compile"),
        Err(e) => eprintln!("skipping C compile check: {e}"),
    }
}

fn tempfile_dir() -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("micropolar-ffi-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}
