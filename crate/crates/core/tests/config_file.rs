use std::path::Path;

use skyreserve::config::Config;
use skyreserve::powerplant::{best_range_speed, AircraftConfig, DEFAULT_PARASITE_CALIBRATION};
use skyreserve::units::to_knots;

fn shipped() -> Config {
    Config::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("../../config/default.toml")).unwrap()
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

#[test]
fn shipped_file_matches_built_in_defaults() {
    let file = shipped();
    let def = Config::default();
    assert_eq!(file.sweep, def.sweep);
    assert_eq!(file.network, def.network);
    assert_eq!(file.training, def.training);
    assert_eq!(file.aircraft.drag_components, def.aircraft.drag_components);
    assert_eq!(file.aircraft.parasite_calibration_factor, DEFAULT_PARASITE_CALIBRATION);

    let (a, b) = (file.aircraft_config(), AircraftConfig::default());
    for (x, y) in [
        (a.blade_chord, b.blade_chord),
        (a.cruise_rotor_speed, b.cruise_rotor_speed),
        (a.hotel_power, b.hotel_power),
        (a.max_shaft_power, b.max_shaft_power),
        (a.cruise_altitude, b.cruise_altitude),
        (a.speed_min, b.speed_min),
        (a.speed_max, b.speed_max),
        (a.mtom, b.mtom),
    ] {
        assert!(close(x, y), "{x} vs {y}");
    }

    let (s, t) = (file.scenario_config(), def.scenario_config());
    assert_eq!(
        (s.n_aircraft, s.runs, s.seed, s.max_spawn_attempts),
        (t.n_aircraft, t.runs, t.seed, t.max_spawn_attempts)
    );
    for (x, y) in [
        (s.alpha, t.alpha),
        (s.sector_radius, t.sector_radius),
        (s.detection.protected_radius, t.detection.protected_radius),
        (s.detection.lookahead, t.detection.lookahead),
        (s.max_sim_time, t.max_sim_time),
        (s.nmac_threshold, t.nmac_threshold),
        (s.neighbor_radius, t.neighbor_radius),
        (s.exit_bearing_min, t.exit_bearing_min),
        (s.radial_scale_min, t.radial_scale_min),
    ] {
        assert!(close(x, y), "{x} vs {y}");
    }
}

#[test]
fn shipped_file_gives_calibrated_best_range_speed() {
    let a = shipped().aircraft_config();
    let v = to_knots(best_range_speed(&a, a.cruise_density().unwrap()));
    assert!((v - 157.0).abs() < 0.05, "{v}");
}

#[test]
fn missing_file_is_a_config_error() {
    let err = Config::load(Path::new("/nonexistent/skyreserve.toml")).unwrap_err();
    assert!(matches!(err, skyreserve::Error::Config { .. }));
}
