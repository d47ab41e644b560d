use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use skyreserve::geometry::Vec2;
use skyreserve::powerplant::{segment_energy, AircraftConfig, CruiseModel};
use skyreserve::report::percentile;
use skyreserve::simkit::{
    assign_exit, batch_runs, compute_overhead, run_scenario, spawn_scenario, Agent, ScenarioConfig, Simulation,
};
use skyreserve::units::{knots, nautical_miles};
use skyreserve::Error;

fn cruise() -> CruiseModel {
    CruiseModel::new(AircraftConfig::default()).unwrap()
}

#[test]
fn minimum_spacing_by_density() {
    let base = ScenarioConfig::default();
    assert!((base.with_n(10).d_min() - 9342.4).abs() < 0.1);
    assert!((base.with_n(60).d_min() - 3814.0).abs() < 0.1);
    assert!((base.with_n(60).d_min() / nautical_miles(1.0) - 2.06).abs() < 0.01);
}

#[test]
fn config_validation() {
    let base = ScenarioConfig::default();
    assert!(base.validate().is_ok());
    assert!(base.with_n(1).validate().is_err());
    assert!(ScenarioConfig {
        dt: 0.0,
        ..base.clone()
    }
    .validate()
    .is_err());
    assert!(ScenarioConfig {
        radial_scale_min: 0.9,
        radial_scale_max: 0.5,
        ..base.clone()
    }
    .validate()
    .is_err());
    // spacing too tight to leave room for the NMAC margin
    assert!(ScenarioConfig { alpha: 0.01, ..base }.validate().is_err());
}

#[test]
fn exit_bearing_is_uniform_in_range() {
    let cfg = ScenarioConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let n = 20_000;
    let mut betas: Vec<f64> = (0..n)
        .map(|i| {
            let entry = Vec2::from_angle(i as f64 * 0.37) * 15_000.0;
            let exit = assign_exit(entry, &cfg, &mut rng).unwrap();
            assert!((exit.norm() - cfg.sector_radius).abs() < 1e-6);
            let d = (exit.angle() - entry.angle()).rem_euclid(2.0 * PI);
            d.min(2.0 * PI - d)
        })
        .collect();
    betas.sort_by(f64::total_cmp);
    let (lo, hi) = (cfg.exit_bearing_min, cfg.exit_bearing_max);
    assert!(betas[0] >= lo - 1e-9 && betas[n - 1] <= hi + 1e-9);
    let ks = betas
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let f = (b - lo) / (hi - lo);
            (f - i as f64 / n as f64)
                .abs()
                .max(((i + 1) as f64 / n as f64 - f).abs())
        })
        .fold(0.0, f64::max);
    // 1% critical value
    assert!(ks < 1.63 / (n as f64).sqrt(), "KS statistic {ks}");
}

#[test]
fn spawn_places_agents_inside_annulus() {
    let cfg = ScenarioConfig::default().with_n(30);
    let mut rng = cfg.run_rng(0);
    let spawn = spawn_scenario(&cfg, knots(157.0), &mut rng).unwrap();
    assert_eq!(spawn.agents.len(), 30);
    let flagged = spawn.agents.iter().filter(|a| a.relaxed_spawn).count();
    assert_eq!(flagged, spawn.relaxed);
    for (i, a) in spawn.agents.iter().enumerate() {
        let r = a.state.position.norm() / cfg.sector_radius;
        assert!((0.6 - 1e-12..=1.0 + 1e-12).contains(&r));
        assert!((a.state.speed() - knots(157.0)).abs() < 1e-9);
        for b in &spawn.agents[..i] {
            let d = a.state.position.distance(b.state.position);
            assert!(d >= cfg.detection.protected_radius);
            if !a.relaxed_spawn {
                assert!(d >= cfg.d_min());
            }
        }
    }
}

#[test]
fn impossible_spacing_is_reported() {
    let cfg = ScenarioConfig {
        n_aircraft: 60,
        sector_radius: 3000.0,
        alpha: 1.0,
        radial_scale_min: 1.0,
        max_spawn_attempts: 50,
        ..Default::default()
    };
    let mut rng = cfg.run_rng(0);
    assert!(matches!(
        spawn_scenario(&cfg, 80.0, &mut rng),
        Err(Error::ScenarioInfeasible { .. })
    ));
}

#[test]
fn single_aircraft_has_no_overhead() {
    let cfg = ScenarioConfig::default();
    let model = cruise();
    let entry = Vec2::new(-cfg.sector_radius * 0.8, 1000.0);
    let exit = Vec2::from_angle(0.3) * cfg.sector_radius;
    let agent = Agent::new(0, entry, exit, model.best_range_speed);
    let mut sim = Simulation::new(&cfg, &model, vec![agent]).record_profiles();
    sim.run_to_completion().unwrap();
    let a = &sim.agents[0];
    assert!(!a.active && !a.timed_out && !a.maneuvering);
    let de = compute_overhead(a, &model).unwrap();
    assert!(de.abs() < 1e-6, "{de}");
    let straight = entry.distance(exit);
    assert!(a.path_length_acc <= straight + model.best_range_speed);
    assert!(a.path_length_acc >= straight - 2.0 * model.best_range_speed);
    let f = a.features.unwrap();
    assert!(!f.in_conflict() && !a.started_in_conflict);
}

fn head_on() -> (ScenarioConfig, CruiseModel, Vec<Agent>) {
    let cfg = ScenarioConfig::default().with_n(2);
    let model = cruise();
    let r = cfg.sector_radius;
    let v = model.best_range_speed;
    let a = Agent::new(0, Vec2::new(-0.9 * r, 0.0), Vec2::new(r, 0.0), v);
    let b = Agent::new(1, Vec2::new(0.9 * r, 0.0), Vec2::new(-r, 0.0), v);
    (cfg, model, vec![a, b])
}

#[test]
fn head_on_pair_resolves() {
    let (cfg, model, agents) = head_on();
    let mut sim = Simulation::new(&cfg, &model, agents);
    let mut maneuvered = [false; 2];
    while !sim.is_finished() {
        sim.step().unwrap();
        for (m, a) in maneuvered.iter_mut().zip(&sim.agents) {
            *m |= a.maneuvering;
        }
    }
    assert_eq!(maneuvered, [true, true]);
    assert!(
        sim.min_separation >= cfg.detection.protected_radius * (1.0 - 1e-3),
        "{}",
        sim.min_separation
    );
    assert_eq!(sim.los_count, 0);
    assert_eq!(sim.nmac_count, 0);
    for a in &sim.agents {
        assert!(!a.timed_out);
        assert!(a.exit_waypoint.distance(a.state.position) < 2.0 * knots(185.0));
        assert!(compute_overhead(a, &model).unwrap() > 0.0);
        assert!(!a.maneuvering && a.conflict_memory.is_empty());
    }
}

#[test]
fn energy_matches_segment_integral() {
    let cfg = ScenarioConfig::default().with_n(20);
    let model = cruise();
    let mut rng = cfg.run_rng(3);
    let spawn = spawn_scenario(&cfg, model.best_range_speed, &mut rng).unwrap();
    let mut sim = Simulation::new(&cfg, &model, spawn.agents).record_profiles();
    sim.run_to_completion().unwrap();
    let profiles = sim.profiles().unwrap().to_vec();
    let mut varied = 0;
    for (a, prof) in sim.agents.iter().zip(&profiles) {
        let e = segment_energy(&model.config, prof, model.density).unwrap();
        assert!((a.energy_acc - e).abs() <= 1e-9 * e, "{} vs {e}", a.energy_acc);
        if prof.iter().any(|(_, s)| (s - model.best_range_speed).abs() > 1e-6) {
            varied += 1;
        }
    }
    assert!(varied > 0);
}

#[test]
fn constant_top_speed_overhead() {
    let model = cruise();
    let vmax = knots(185.0);
    let mut a = Agent::new(0, Vec2::new(1.0, 0.0), Vec2::new(2.0, 0.0), vmax);
    a.active = false;
    a.energy_acc = model.power(vmax).unwrap() * 100.0;
    a.path_length_acc = vmax * 100.0;
    let expected = (model.power(vmax).unwrap() / vmax)
        / (model.power(model.best_range_speed).unwrap() / model.best_range_speed)
        - 1.0;
    let got = compute_overhead(&a, &model).unwrap();
    assert!((got - expected).abs() < 1e-12 && got > 0.0);
    a.active = true;
    assert!(compute_overhead(&a, &model).is_err());
}

#[test]
fn batch_is_deterministic_and_thread_independent() {
    let cfg = ScenarioConfig {
        runs: 4,
        ..ScenarioConfig::default().with_n(25)
    };
    let model = cruise();
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let many = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    let a = one.install(|| batch_runs(&cfg, &model)).unwrap();
    let b = many.install(|| batch_runs(&cfg, &model)).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.iter().map(|r| r.run).collect::<Vec<_>>(), vec![0, 1, 2, 3]);
    assert_eq!(run_scenario(&cfg, &model, 2).unwrap(), a[2]);
    let other = batch_runs(&ScenarioConfig { seed: 99, ..cfg }, &model).unwrap();
    assert_ne!(a, other);
}

#[test]
fn transits_finish_and_never_beat_best_range() {
    let model = cruise();
    for n in [10, 40, 60] {
        let cfg = ScenarioConfig {
            runs: 3,
            ..ScenarioConfig::default().with_n(n)
        };
        for r in batch_runs(&cfg, &model).unwrap() {
            assert_eq!(r.transits.len(), n);
            assert_eq!(r.nmac_count, 0);
            for t in &r.transits {
                assert!(!t.incomplete);
                assert!(t.time_in_sector < cfg.max_sim_time);
                assert!(t.delta_e >= -1e-4);
                assert_eq!(t.started_in_conflict, t.features.in_conflict());
            }
        }
    }
}

#[test]
fn conflict_share_rises_with_density() {
    let model = cruise();
    let densities = [10usize, 20, 30, 40, 50, 60];
    let shares: Vec<f64> = densities
        .iter()
        .map(|&n| {
            let cfg = ScenarioConfig {
                runs: 6,
                ..ScenarioConfig::default().with_n(n)
            };
            let runs = batch_runs(&cfg, &model).unwrap();
            let all: Vec<bool> = runs
                .iter()
                .flat_map(|r| r.transits.iter().map(|t| t.started_in_conflict))
                .collect();
            all.iter().filter(|b| **b).count() as f64 / all.len() as f64
        })
        .collect();
    // Spearman correlation between density and conflict-free share
    let free: Vec<f64> = shares.iter().map(|s| 1.0 - s).collect();
    let rank = |v: &[f64]| -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        for (k, i) in idx.into_iter().enumerate() {
            r[i] = k as f64;
        }
        r
    };
    let rx = rank(&densities.iter().map(|&n| n as f64).collect::<Vec<_>>());
    let ry = rank(&free);
    let n = rx.len() as f64;
    let d2: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - b).powi(2)).sum();
    let rho = 1.0 - 6.0 * d2 / (n * (n * n - 1.0));
    assert!(rho < 0.0, "{shares:?}");
}

#[test]
fn finer_step_keeps_batch_median() {
    let model = cruise();
    let coarse = ScenarioConfig {
        runs: 6,
        ..ScenarioConfig::default().with_n(40)
    };
    let fine = ScenarioConfig {
        dt: 0.1,
        ..coarse.clone()
    };
    let median = |cfg: &ScenarioConfig| {
        let mut v: Vec<f64> = batch_runs(cfg, &model)
            .unwrap()
            .iter()
            .flat_map(|r| r.completed_overheads().collect::<Vec<_>>())
            .collect();
        percentile(&mut v, 50.0).unwrap()
    };
    let (a, b) = (median(&coarse), median(&fine));
    assert!((a - b).abs() < 1e-3, "dt=1: {a}, dt=0.1: {b}");
}
