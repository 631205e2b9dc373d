use quadtank::harness::{
    compute_metrics, run_closed_loop, steady_cvs, ClosedLoopConfig, ControllerKind, RunRecord,
    SetpointSchedule,
};
use quadtank::plant::NoiseMode;
use quadtank::ModelParams;

fn config(seed: u64) -> ClosedLoopConfig {
    let mut cfg =
        ClosedLoopConfig::new(ModelParams::estimated(), ModelParams::filter_tuning(), seed);
    cfg.duration = 300.0;
    cfg.mpc.horizon = 40;
    cfg
}

#[test]
fn equilibrium_is_held_without_noise() {
    let mut cfg = config(0);
    cfg.noise = NoiseMode::NONE;
    let z_s = steady_cvs(&cfg.u_s, &cfg.plant).unwrap();
    for kind in ControllerKind::ALL {
        let rec = run_closed_loop(&cfg, kind, &SetpointSchedule::constant(z_s)).unwrap();
        let worst = rec.errors().iter().map(|e| e.amax()).fold(0.0, f64::max);
        assert!(worst < 1e-6, "{kind}: {worst}");
        assert_eq!(rec.rows.len(), cfg.samples());
    }
}

#[test]
fn runs_are_reproducible_and_seed_dependent() {
    let cfg = config(21);
    let z_s = steady_cvs(&cfg.u_s, &cfg.plant).unwrap();
    let schedule = SetpointSchedule::constant(z_s);
    for kind in [ControllerKind::Pid, ControllerKind::Lmpc] {
        let a = run_closed_loop(&cfg, kind, &schedule).unwrap();
        let b = run_closed_loop(&cfg, kind, &schedule).unwrap();
        assert_eq!(a, b);
        let c = run_closed_loop(&config(22), kind, &schedule).unwrap();
        assert_ne!(a.rows, c.rows);
    }
}

#[test]
fn saved_record_reloads_with_identical_metrics() {
    let cfg = config(3);
    let z_s = steady_cvs(&cfg.u_s, &cfg.plant).unwrap();
    let schedule = SetpointSchedule::constant(z_s + nalgebra::Vector2::new(1.0, -1.0));
    let rec = run_closed_loop(&cfg, ControllerKind::Nmpc, &schedule).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.csv");
    rec.save(&path).unwrap();
    let back = RunRecord::load(&path).unwrap();
    assert_eq!(back, rec);
    assert_eq!(
        compute_metrics(&back).unwrap(),
        compute_metrics(&rec).unwrap()
    );
}

#[test]
fn inputs_respect_bounds_on_large_steps() {
    let cfg = config(4);
    let schedule = SetpointSchedule::constant(nalgebra::Vector2::new(60.0, 5.0));
    for kind in ControllerKind::ALL {
        let rec = run_closed_loop(&cfg, kind, &schedule).unwrap();
        assert!(rec
            .inputs()
            .iter()
            .all(|u| u.iter().all(|v| (cfg.bounds.0..=cfg.bounds.1).contains(v))));
    }
}
