//! Time-stepping behaviour: convergence, determinism, steady states, restarts.

use pks::checkpoint::Checkpoint;
use pks::grid::{Field, Grid};
use pks::integrator::{run, ImexStepper, Mode, RecordConfig, RunStatus, StepConfig};
use pks::model::{ModelParams, PksState, Regime, ShearProfile};

fn smooth_problem() -> (Grid, ShearProfile, ModelParams, PksState) {
    let g = Grid::new(16, 33, 3.0).unwrap();
    let n = Field::from_fn(g, |x, y| 1.0 + 0.5 * x.cos() * (-y * y).exp());
    let c = Field::from_fn(g, |x, y| 0.3 * (-(y - 0.3).powi(2)).exp() * (1.0 + 0.2 * x.sin()));
    (
        g,
        ShearProfile::couette(&g),
        ModelParams::new(2.0, Regime::Parabolic).unwrap(),
        PksState::new(0.0, n, c).unwrap(),
    )
}

fn march(dt: f64, t_end: f64) -> Vec<f64> {
    let (_, shear, params, state) = smooth_problem();
    let mut s = ImexStepper::new(&state, &shear, &params, Mode::Pks).unwrap();
    let steps = (t_end / dt).round() as usize;
    for _ in 0..steps {
        s.step(dt).unwrap();
    }
    let mut v = s.density().into_values();
    v.extend(s.chemical().into_values());
    v
}

#[test]
fn crank_nicolson_ab2_is_second_order() {
    let t_end = 1.0;
    let reference = march(1.0 / 1280.0, t_end);
    let errs: Vec<f64> = [0.1, 0.05, 0.025, 0.0125]
        .iter()
        .map(|&dt| {
            march(dt, t_end)
                .iter()
                .zip(&reference)
                .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
        })
        .collect();
    for w in errs.windows(2) {
        let p = (w[0] / w[1]).log2();
        assert!((1.7..=2.2).contains(&p), "order {p:.3} from {errs:?}");
    }
}

#[test]
fn identical_inputs_give_bit_identical_records() {
    let (_, shear, params, state) = smooth_problem();
    let cfg = StepConfig {
        t_end: 3.0,
        record_interval: 0.1,
        ..StepConfig::default()
    };
    let a = run(&state, &shear, &params, &cfg, Mode::Pks, &RecordConfig::default()).unwrap();
    let b = run(&state, &shear, &params, &cfg, Mode::Pks, &RecordConfig::default()).unwrap();
    assert_eq!(a.status, RunStatus::Completed);
    assert_eq!(a.records.len(), b.records.len());
    for (p, q) in a.records.iter().zip(&b.records) {
        assert_eq!(serde_json::to_string(p).unwrap(), serde_json::to_string(q).unwrap());
    }
}

#[test]
fn homogeneous_equilibrium_stays_put() {
    let g = Grid::new(16, 33, 4.0).unwrap();
    let state = PksState::new(0.0, Field::constant(g, 1.5), Field::constant(g, 1.5)).unwrap();
    let shear = ShearProfile::couette(&g);
    let params = ModelParams::new(10.0, Regime::Parabolic).unwrap();
    let mut s = ImexStepper::new(&state, &shear, &params, Mode::Pks).unwrap();
    for _ in 0..1000 {
        s.step(0.05).unwrap();
    }
    for f in [s.density(), s.chemical()] {
        let dev = f.values().iter().fold(0.0_f64, |m, v| m.max((v - 1.5).abs()));
        assert!(dev < 1e-12, "drift {dev:.3e}");
    }
}

#[test]
fn checkpoint_restart_reproduces_the_uninterrupted_run() {
    let (g, shear, params, state) = smooth_problem();
    let mut a = ImexStepper::new(&state, &shear, &params, Mode::Pks).unwrap();
    for dt in [0.01, 0.02, 0.02, 0.03] {
        a.step(dt).unwrap();
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("checkpoint.json");
    a.checkpoint("cafe").save(&path).unwrap();
    let cp = Checkpoint::load(&path).unwrap();
    cp.check_hash("cafe").unwrap();
    assert!(cp.check_hash("beef").is_err());
    let mut b = ImexStepper::restore(&cp, &g, &shear, &params, Mode::Pks).unwrap();
    assert_eq!(b.steps(), 4);
    for dt in [0.03, 0.025, 0.025] {
        a.step(dt).unwrap();
        b.step(dt).unwrap();
    }
    assert_eq!(a.t().to_bits(), b.t().to_bits());
    assert_eq!(a.n_hat().as_slice(), b.n_hat().as_slice());
    assert_eq!(a.c_hat().as_slice(), b.c_hat().as_slice());
}

#[test]
fn checkpoint_for_another_grid_is_rejected() {
    let (_, shear, params, state) = smooth_problem();
    let s = ImexStepper::new(&state, &shear, &params, Mode::Pks).unwrap();
    let cp = s.checkpoint("x");
    let other = Grid::new(32, 33, 3.0).unwrap();
    let shear2 = ShearProfile::couette(&other);
    assert!(ImexStepper::restore(&cp, &other, &shear2, &params, Mode::Pks).is_err());
}

#[test]
fn elliptic_regime_keeps_the_chemical_slaved() {
    let (_, shear, _, state) = smooth_problem();
    let params = ModelParams::new(2.0, Regime::Elliptic).unwrap();
    let mut s = ImexStepper::new(&state, &shear, &params, Mode::Pks).unwrap();
    for _ in 0..20 {
        s.step(0.02).unwrap();
    }
    let c = pks::model::chem_elliptic_solve(&s.density()).unwrap();
    let dev = c
        .values()
        .iter()
        .zip(s.chemical().values())
        .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
    assert!(dev < 1e-12, "{dev:.3e}");
}
