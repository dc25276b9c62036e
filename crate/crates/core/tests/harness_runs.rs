use std::sync::Arc;

use sos_core::dynamics::{coupled_run, CoupledFamily};
use sos_core::harness::{
    run_ceiling_fall, run_custom, run_equilibrium_profile, run_floor_vs_nofloor, run_staircase, Checkpoint,
    ExperimentConfig, ModelSpec, Preset,
};
use sos_core::{equilibrium_height, BoundaryCondition, FloorMode, HeightField, ModelParams, SosSystem};

fn spec(l: usize, beta: f64, n: i32) -> ModelSpec {
    ModelSpec::from_params(&ModelParams::new(l, beta, n))
}

#[test]
fn resuming_a_checkpoint_reproduces_the_uninterrupted_run() {
    let dir = tempfile::tempdir().unwrap();
    let mut full = ExperimentConfig::preset(Preset::Custom);
    full.model = spec(8, 0.8, 4);
    full.budget_sweeps = 30;
    full.checkpoint_every_sweeps = Some(4);
    let (plain, plain_end) = run_custom(&full, 11, None).unwrap();

    // an interrupted run: the same trajectory cut at 12 sweeps
    let mut short = full.clone();
    short.budget_sweeps = 12;
    let ck = dir.path().join("ck.json");
    run_custom(&short, 11, Some(&ck)).unwrap();
    let mut c = Checkpoint::load(&ck).unwrap();
    assert_eq!(c.step, 12 * 64);
    c.config_hash = full.config_hash();
    c.save(&ck).unwrap();

    let (resumed, resumed_end) = run_custom(&full, 11, Some(&ck)).unwrap();
    assert_eq!(resumed, plain);
    assert_eq!(resumed_end, plain_end);
    assert_eq!(resumed.to_csv(), plain.to_csv());

    // a checkpoint from another seed is refused
    assert!(run_custom(&full, 12, Some(&ck)).is_err());
}

#[test]
fn omega_a_times_are_nondecreasing_in_a() {
    let mut cfg = ExperimentConfig::preset(Preset::Staircase);
    cfg.model = spec(32, 0.4, 6);
    assert_eq!(equilibrium_height(&cfg.model.params()).0, 2);
    cfg.seeds = vec![1, 2];
    cfg.budget_sweeps = 300;
    cfg.staircase.a_grid = vec![0.3, 0.6, 0.9];
    cfg.staircase.fraction = 0.8;
    for r in run_staircase(&cfg).unwrap() {
        let taus: Vec<f64> =
            ["a_0.3", "a_0.6", "a_0.9"].iter().map(|k| r.tau_sweeps[*k].unwrap_or(f64::INFINITY)).collect();
        assert!(taus.windows(2).all(|w| w[0] <= w[1]), "{taus:?}");
        assert!(taus[0].is_finite());
    }
}

#[test]
fn starting_at_the_equilibrium_height_stays_there() {
    let mut cfg = ExperimentConfig::preset(Preset::CeilingFall);
    cfg.seeds = vec![4];
    cfg.ceiling_fall.start_height = 1;
    cfg.ceiling_fall.window_sweeps = 1;
    cfg.ceiling_fall.entry_deadline_sweeps = 0;
    cfg.ceiling_fall.hold_sweeps = 150;
    assert_eq!(equilibrium_height(&cfg.model.params()).0, 1);
    let r = &run_ceiling_fall(&cfg).unwrap()[0];
    assert_eq!(r.entry_sweep, Some(0));
    assert!(r.held);
}

#[test]
fn fall_from_the_ceiling_stays_above_the_rise_from_the_floor() {
    let sys = Arc::new(SosSystem::new(ModelParams::new(16, 0.9, 10), BoundaryCondition::constant(0)).unwrap());
    let chains = vec![sys.bottom(), HeightField::constant(16, 16, 10)];
    let mut fam = CoupledFamily::new(sys, chains).unwrap();
    let mut ok = true;
    coupled_run(&mut fam, 3, 200_000, |_, f| ok &= f.ordered(0, 1) && f.chains[0].mean() <= f.chains[1].mean());
    assert!(ok);
}

#[test]
fn single_site_comparison_coalesces_on_the_first_sweep() {
    let mut cfg = ExperimentConfig::preset(Preset::FloorVsNoFloor);
    cfg.model = spec(1, 1.0, 1);
    cfg.compare.sides = vec![1];
    cfg.seeds = (0..5).collect();
    let rows = run_floor_vs_nofloor(&cfg).unwrap();
    assert_eq!(rows[0].floored_median, 1.0);
    assert_eq!(rows[0].symmetric_median, 1.0);
    assert!(!rows[0].median_censored);
}

#[test]
fn equilibrium_profile_shape() {
    let mut cfg = ExperimentConfig::preset(Preset::EquilibriumProfile);
    cfg.model = spec(64, 1.0, 10);
    cfg.seeds = vec![0];
    cfg.profile.burn_in_sweeps = 500;
    cfg.profile.samples = 60;
    let p = run_equilibrium_profile(&cfg).unwrap();
    assert_eq!(p.h, 1);
    assert!((p.h - 1..=p.h + 1).contains(&p.mode), "mode {}", p.mode);
    // with H = 1 the floor cuts the downward tail at k = 1: nothing to fit
    assert_eq!(p.down.len(), 2);
    assert!(p.down_rate.is_none());
    let up = p.up_rate.expect("upward tail has several levels");
    assert!(up > 0.0);
}

#[test]
fn downward_tail_decays_at_rate_two_beta() {
    // H = 3 here, so the downward tail has three levels above the floor
    let beta = 0.4;
    let mut cfg = ExperimentConfig::preset(Preset::EquilibriumProfile);
    cfg.model = spec(256, beta, 10);
    cfg.seeds = vec![0];
    cfg.profile.burn_in_sweeps = 600;
    cfg.profile.samples = 40;
    let p = run_equilibrium_profile(&cfg).unwrap();
    assert_eq!(p.h, 3);
    let rate = p.down_rate.unwrap();
    assert!(rate >= 2.0 * beta * 0.75, "downward rate {rate}");
    let area = (256 * 256) as f64;
    for k in 1..p.down.len() {
        let mean = p.down[k] as f64 / p.samples as f64;
        assert!(mean <= (-2.0 * beta * k as f64).exp() * area, "k={k}: {mean}");
    }
}

#[test]
fn no_walls_spike_probabilities() {
    let beta = 0.5;
    let mut cfg = ExperimentConfig::preset(Preset::EquilibriumProfile);
    cfg.model = ModelSpec::from_params(&ModelParams::new(12, beta, 1).with_mode(FloorMode::NoWalls).with_window(8));
    cfg.seeds = vec![0, 1];
    cfg.profile.burn_in_sweeps = 300;
    cfg.profile.samples = 300;
    cfg.profile.gap_sweeps = 5;
    let p = run_equilibrium_profile(&cfg).unwrap();
    let total: u64 = p.histogram.iter().map(|e| e.1).sum();
    let at_least = |h: i32| p.histogram.iter().filter(|e| e.0 >= h).map(|e| e.1).sum::<u64>() as f64 / total as f64;
    let mut c = 0.0f64;
    for h in 1..=2 {
        let scale = (-4.0 * beta * h as f64).exp();
        assert!(at_least(h) >= 0.5 * scale, "h={h}: {} vs {}", at_least(h), 0.5 * scale);
        c = c.max(at_least(h) / scale);
    }
    // the fitted constant is a modest number, not a sign of a wrong exponent
    assert!(c < 10.0, "fitted c = {c}");
}
