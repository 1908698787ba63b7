//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the process exits non-zero if any fails.

mod common;

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use common::{energy_rate, entropy_rate, random_params, random_state};
use micropolar::functionals::{dissipation_rate, energy, entropy, mass};
use micropolar::harness::{
    convergence_study, lipschitz_probe, run_absorbing_experiment,
    run_decay_experiment, run_decay_experiment_with, sample_ensemble, sample_member,
    AbsorbReport, EnsembleSpec, FitWindow, InitialProfile,
};
use micropolar::operators::rhs;
use micropolar::timestep::advance;
use micropolar::{FluidState, Grid, Order, PhysParams, StepControl};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn criterion(results: &mut Vec<bool>, id: usize, name: &str, budget: Duration, f: impl FnOnce() -> Outcome) {
    let start = Instant::now();
    let o = f();
    let elapsed = start.elapsed();
    let in_budget = elapsed <= budget;
    let pass = o.pass && in_budget;
    println!(
        "criterion {id:2} {:4} {name}: {} [{:.1}s of {}s]",
        if pass { "PASS" } else { "FAIL" },
        o.detail,
        elapsed.as_secs_f64(),
        budget.as_secs()
    );
    results.push(pass);
}

/// Per-step extremes along one trajectory.
#[derive(Default)]
struct Drift {
    mass: f64,
    energy: f64,
    /// Worst `S(prev) - S(next) - slack` over steps (≤ 0 means monotone).
    entropy_excess: f64,
}

fn step_drift(s0: &FluidState, p: &PhysParams, c: &StepControl, g: &Grid, t_end: f64) -> Drift {
    let m0 = mass(s0, g).unwrap();
    let e0 = energy(s0, p, g).unwrap();
    let mut prev = entropy(s0, p, g).unwrap();
    let mut d = Drift {
        entropy_excess: f64::NEG_INFINITY,
        ..Drift::default()
    };
    advance(s0, p, c, g, t_end, |_, s| {
        d.mass = d.mass.max((mass(s, g).unwrap() / m0 - 1.0).abs());
        d.energy = d.energy.max((energy(s, p, g).unwrap() / e0 - 1.0).abs());
        let next = entropy(s, p, g).unwrap();
        d.entropy_excess = d.entropy_excess.max(prev - next - 1e-10 * (1.0 + next.abs()));
        prev = next;
    })
    .unwrap();
    d
}

fn random_case(rng: &mut ChaCha8Rng) -> (Grid, PhysParams, FluidState) {
    let g = Grid::new(rng.gen_range(2..128)).unwrap();
    let p = random_params(rng);
    let s = random_state(rng, &g);
    (g, p, s)
}

fn main() {
    let unit = PhysParams::default();
    let defaults = StepControl::default();
    let spec = EnsembleSpec::default();
    let mut results = Vec::new();

    // The trajectories run here are reused by criteria 2 and 3.
    let g128 = Grid::new(128).unwrap();
    let mut drifts: Vec<Drift> = Vec::new();
    criterion(&mut results, 1, "mass conservation", Duration::from_secs(60), || {
        drifts = sample_ensemble(&spec, &g128, &unit)
            .unwrap()
            .iter()
            .map(|m| step_drift(&m.state, &unit, &defaults, &g128, 5.0))
            .collect();
        let worst = drifts.iter().map(|d| d.mass).fold(0.0, f64::max);
        outcome(
            worst <= 1e-13 && drifts.len() == 10,
            format!("max |M/M0 - 1| = {worst:.2e} over 10 trajectories, n=128, t=5, every step"),
        )
    });

    criterion(&mut results, 2, "energy identity", Duration::from_secs(120), || {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let worst_rel = (0..1000)
            .map(|_| {
                let (g, p, s) = random_case(&mut rng);
                let (rate, mag) = energy_rate(&s, &p, &g);
                rate.abs() / mag.max(f64::MIN_POSITIVE)
            })
            .fold(0.0, f64::max);
        let traj = drifts.iter().map(|d| d.energy).fold(0.0, f64::max);

        let g = Grid::new(16).unwrap();
        let s0 = sample_member(&spec, &g, &unit, 0).unwrap().state;
        let drift_at = |dt_max: f64| {
            let c = StepControl { cfl: 0.6, dt_max, ..defaults };
            step_drift(&s0, &unit, &c, &g, 5.0).energy
        };
        let (coarse, fine) = (drift_at(1e-3), drift_at(5e-4));
        let ratio = coarse / fine;
        outcome(
            worst_rel <= 1e-12 && traj <= 1e-8 && ratio >= 8.0,
            format!("random states max rel {worst_rel:.2e}; trajectory drift {traj:.2e}; halving dt_max {coarse:.2e} -> {fine:.2e} (x{ratio:.1})"),
        )
    });

    criterion(&mut results, 3, "entropy-dissipation identity", Duration::from_secs(120), || {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let worst_rel = (0..1000)
            .map(|_| {
                let (g, p, s) = random_case(&mut rng);
                let (rate, mag) = entropy_rate(&s, &p, &g);
                let diss = dissipation_rate(&s, &p, &g).unwrap();
                (rate - diss).abs() / mag.max(diss).max(f64::MIN_POSITIVE)
            })
            .fold(0.0, f64::max);
        let excess = drifts.iter().map(|d| d.entropy_excess).fold(f64::NEG_INFINITY, f64::max);
        outcome(
            worst_rel <= 1e-12 && excess <= 0.0,
            format!("random states max rel {worst_rel:.2e}; worst per-step entropy decrease beyond slack {excess:.2e}"),
        )
    });

    criterion(&mut results, 4, "equilibrium fixed point", Duration::from_secs(10), || {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut ok = true;
        for _ in 0..5 {
            let g = Grid::new(rng.gen_range(2..100)).unwrap();
            let p = random_params(&mut rng);
            let s = FluidState::constant(&g, rng.gen_range(0.2..3.0), rng.gen_range(0.2..3.0));
            let d = rhs(&s, &p, &g).unwrap();
            ok &= [&d.du, &d.dtheta, &d.dv, &d.domega].iter().all(|f| f.iter().all(|&x| x == 0.0));
            let (end, _) = advance(&s, &p, &defaults, &g, 1.0, |_, _| {}).unwrap();
            ok &= end == s;
        }
        outcome(ok, "5 random constant states: rhs exactly 0, state after t=1 bit-identical".into())
    });

    criterion(&mut results, 5, "linearized decay oracle", Duration::from_secs(60), || {
        let g = Grid::new(256).unwrap();
        let mut profile = InitialProfile::constant(1.0, 1.0);
        profile.e = vec![1e-6];
        let s0 = profile.on_grid(&g);
        let run = run_decay_experiment(&s0, &unit, &defaults, &g, 1.5, 0.01, Order::H1).unwrap();
        let expected = 2.0 * unit.a * (PI * PI + 1.0);
        match run.fit {
            Ok(f) => {
                let rel = (f.gamma / expected - 1.0).abs();
                outcome(rel <= 0.01, format!("gamma {:.4} vs {expected:.4} (rel {rel:.2e})", f.gamma))
            }
            Err(e) => outcome(false, e.to_string()),
        }
    });

    criterion(&mut results, 6, "nonlinear decay", Duration::from_secs(300), || {
        let g = Grid::new(64).unwrap();
        let window = FitWindow { start_fraction: 1e-3, ..FitWindow::default() };
        let mut worst_res: f64 = 0.0;
        let mut worst_env: f64 = 0.0;
        let mut min_gamma = f64::INFINITY;
        let mut failures = Vec::new();
        for m in sample_ensemble(&spec, &g, &unit).unwrap() {
            let run = run_decay_experiment_with(&m.state, &unit, &defaults, &g, 20.0, 0.1, Order::H1, &window).unwrap();
            match run.fit {
                Ok(f) => {
                    let env = f.envelope_ratio(&run.series);
                    worst_res = worst_res.max(f.residual);
                    worst_env = worst_env.max(env);
                    min_gamma = min_gamma.min(f.gamma);
                    if !(f.gamma > 0.0 && f.residual <= 0.1 && env <= 2.0) {
                        failures.push(m.index);
                    }
                }
                Err(_) => failures.push(m.index),
            }
        }
        outcome(
            failures.is_empty(),
            format!("min gamma {min_gamma:.3}, max residual {worst_res:.2e}, max envelope/prefactor {worst_env:.3}; failing {failures:?}"),
        )
    });

    let absorb_spec = EnsembleSpec {
        amp_u: 0.75,
        amp_v: 1.25,
        amp_omega: 1.25,
        amp_theta: 0.75,
        ..spec.clone()
    };
    let g64 = Grid::new(64).unwrap();
    let mut reports: Vec<AbsorbReport> = Vec::new();
    criterion(&mut results, 7, "absorbing ball (orders 1 and 2)", Duration::from_secs(600), || {
        let mut detail = Vec::new();
        let mut ok = true;
        for order in [Order::H1, Order::H2] {
            let r = run_absorbing_experiment(&absorb_spec, &unit, &defaults, &g64, 20.0, 0.05, order).unwrap();
            let max_init = r.max_initial_norm;
            ok &= r.trajectories.len() == 10 && r.all_absorbed && max_init <= 5.0 * r.radius;
            detail.push(format!(
                "{order}: R {:.4}, max initial norm {max_init:.3} ({:.2} R), max entry {:?}, all stayed {}",
                r.radius,
                max_init / r.radius,
                r.max_entry_time,
                r.all_absorbed
            ));
            reports.push(r);
        }
        outcome(ok, detail.join("; "))
    });

    criterion(&mut results, 8, "eventual pointwise bounds", Duration::from_secs(60), || {
        let mut ok = reports.len() == 2;
        let mut violations = 0;
        let mut latest: f64 = 0.0;
        for r in &reports {
            for t in &r.trajectories {
                ok &= t.entry_time.is_some() && t.failure.is_none();
                violations += t.bounds_violations_after_entry;
                latest = latest.max(t.bounds_hold_from.unwrap_or(f64::INFINITY));
            }
        }
        outcome(
            ok && violations == 0,
            format!("{violations} bound violations at or after entry; bounds hold from t = {latest} at the latest"),
        )
    });

    criterion(&mut results, 9, "continuous dependence", Duration::from_secs(60), || {
        let s0 = sample_member(&spec, &g128, &unit, 0).unwrap().state;
        let a = lipschitz_probe(&s0, &unit, &defaults, &g128, 1e-6, 2.0, 0.05).unwrap();
        let b = lipschitz_probe(&s0, &unit, &defaults, &g128, 1e-4, 2.0, 0.05).unwrap();
        let spread = a
            .series
            .iter()
            .zip(&b.series)
            .map(|(x, y)| (x.1 / y.1 - 1.0).abs())
            .fold(0.0, f64::max);
        let finite = a.series.iter().chain(&b.series).all(|(_, r)| r.is_finite());
        let excess = a.max_excess.max(b.max_excess);
        outcome(
            spread <= 0.1 && finite && excess <= 0.5,
            format!("max pointwise spread {spread:.2e}, exponents {:.4} / {:.4}, max log-excess {excess:.3}", a.exponent, b.exponent),
        )
    });

    criterion(&mut results, 10, "spatial convergence", Duration::from_secs(300), || {
        let mut profile = InitialProfile::constant(1.0, 1.0);
        profile.a = vec![0.2];
        profile.b = vec![0.3];
        profile.c = vec![0.2];
        profile.e = vec![0.3];
        let c = StepControl { dt_max: 1e-4, ..defaults };
        let r = convergence_study(&profile, &unit, &c, &[32, 64, 128, 256], 0.1).unwrap();
        let all: Vec<String> = r
            .orders
            .iter()
            .flatten()
            .map(|o| o.map_or("exact".into(), |v| format!("{v:.3}")))
            .collect();
        let complete = r.orders.iter().flatten().all(Option::is_some);
        outcome(complete && r.orders_within(1.8, 2.2), format!("orders (u, v, omega, theta) per pair: {}", all.join(" ")))
    });

    let passed = results.iter().filter(|p| **p).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
