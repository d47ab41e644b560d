//! TOML configuration in operator units (knots, nautical miles, feet, kW).
//!
//! Every key is optional; missing keys take the built-in defaults and
//! unknown keys are rejected.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::deconflict::DetectionParams;
use crate::error::{Error, Result};
use crate::powerplant::{AircraftConfig, DragComponent};
use crate::predictor::{NetConfig, TrainConfig};
use crate::simkit::ScenarioConfig;
use crate::units::{
    feet, knots, nautical_miles, rpm, METERS_PER_FOOT, METERS_PER_NAUTICAL_MILE, METERS_PER_SECOND_PER_KNOT,
    RAD_PER_SECOND_PER_RPM,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AircraftSection {
    pub n_rotors: u32,
    pub rotor_radius_m: f64,
    pub n_blades: u32,
    pub solidity: f64,
    pub cruise_rpm: f64,
    pub wing_area_m2: f64,
    pub aspect_ratio: f64,
    pub oswald: f64,
    pub mtom_kg: f64,
    pub gravity: f64,
    pub kappa: f64,
    pub k_mu: f64,
    pub blade_cd0: f64,
    pub k_lift: f64,
    pub drivetrain_efficiency: f64,
    pub hotel_power_kw: f64,
    pub max_shaft_power_kw: f64,
    pub cruise_altitude_ft: f64,
    pub speed_min_kt: f64,
    pub speed_max_kt: f64,
    pub parasite_calibration_factor: f64,
    pub drag_components: Vec<DragComponent>,
}

impl Default for AircraftSection {
    fn default() -> Self {
        Self::from_config(&AircraftConfig::default())
    }
}

impl AircraftSection {
    pub fn from_config(c: &AircraftConfig) -> Self {
        Self {
            n_rotors: c.n_rotors,
            rotor_radius_m: c.rotor_radius,
            n_blades: c.n_blades,
            solidity: 0.083,
            cruise_rpm: c.cruise_rotor_speed / RAD_PER_SECOND_PER_RPM,
            wing_area_m2: c.wing_area,
            aspect_ratio: c.aspect_ratio,
            oswald: c.oswald,
            mtom_kg: c.mtom,
            gravity: c.gravity,
            kappa: c.kappa,
            k_mu: c.k_mu,
            blade_cd0: c.blade_cd0,
            k_lift: c.k_lift,
            drivetrain_efficiency: c.drivetrain_efficiency,
            hotel_power_kw: c.hotel_power / 1000.0,
            max_shaft_power_kw: c.max_shaft_power / 1000.0,
            cruise_altitude_ft: (c.cruise_altitude / METERS_PER_FOOT * 1e9).round() / 1e9,
            speed_min_kt: (c.speed_min / METERS_PER_SECOND_PER_KNOT * 1e9).round() / 1e9,
            speed_max_kt: (c.speed_max / METERS_PER_SECOND_PER_KNOT * 1e9).round() / 1e9,
            parasite_calibration_factor: c.parasite_calibration_factor,
            drag_components: c.drag_components.clone(),
        }
    }

    pub fn to_config(&self) -> AircraftConfig {
        AircraftConfig {
            n_rotors: self.n_rotors,
            rotor_radius: self.rotor_radius_m,
            n_blades: self.n_blades,
            blade_chord: self.solidity * PI * self.rotor_radius_m / self.n_blades.max(1) as f64,
            cruise_rotor_speed: rpm(self.cruise_rpm),
            wing_area: self.wing_area_m2,
            aspect_ratio: self.aspect_ratio,
            oswald: self.oswald,
            mtom: self.mtom_kg,
            gravity: self.gravity,
            kappa: self.kappa,
            k_mu: self.k_mu,
            blade_cd0: self.blade_cd0,
            k_lift: self.k_lift,
            drivetrain_efficiency: self.drivetrain_efficiency,
            hotel_power: self.hotel_power_kw * 1000.0,
            max_shaft_power: self.max_shaft_power_kw * 1000.0,
            cruise_altitude: feet(self.cruise_altitude_ft),
            speed_min: knots(self.speed_min_kt),
            speed_max: knots(self.speed_max_kt),
            drag_components: self.drag_components.clone(),
            parasite_calibration_factor: self.parasite_calibration_factor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSection {
    pub n_aircraft: usize,
    pub runs: usize,
    pub seed: u64,
    pub dt_s: f64,
    /// Defaults to three crossings of the sector diameter at minimum speed.
    pub max_sim_time_s: Option<f64>,
    pub sector_radius_nm: f64,
    pub alpha: f64,
    pub rpz_nm: f64,
    pub tlook_s: f64,
    pub exit_bearing_min_deg: f64,
    pub exit_bearing_max_deg: f64,
    pub radial_scale_min: f64,
    pub radial_scale_max: f64,
    pub nmac_ft: f64,
    pub neighbor_radius_nm: f64,
    pub max_spawn_attempts: usize,
    pub grazing_correction: bool,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        let s = ScenarioConfig::default();
        let round = |x: f64| (x * 1e9).round() / 1e9;
        Self {
            n_aircraft: s.n_aircraft,
            runs: s.runs,
            seed: s.seed,
            dt_s: s.dt,
            max_sim_time_s: None,
            sector_radius_nm: round(s.sector_radius / METERS_PER_NAUTICAL_MILE),
            alpha: s.alpha,
            rpz_nm: round(s.detection.protected_radius / METERS_PER_NAUTICAL_MILE),
            tlook_s: s.detection.lookahead,
            exit_bearing_min_deg: round(s.exit_bearing_min.to_degrees()),
            exit_bearing_max_deg: round(s.exit_bearing_max.to_degrees()),
            radial_scale_min: s.radial_scale_min,
            radial_scale_max: s.radial_scale_max,
            nmac_ft: round(s.nmac_threshold / METERS_PER_FOOT),
            neighbor_radius_nm: round(s.neighbor_radius / METERS_PER_NAUTICAL_MILE),
            max_spawn_attempts: s.max_spawn_attempts,
            grazing_correction: s.grazing_correction,
        }
    }
}

impl ScenarioSection {
    pub fn to_config(&self, aircraft: &AircraftConfig) -> ScenarioConfig {
        let sector_radius = nautical_miles(self.sector_radius_nm);
        ScenarioConfig {
            n_aircraft: self.n_aircraft,
            sector_radius,
            alpha: self.alpha,
            exit_bearing_min: self.exit_bearing_min_deg.to_radians(),
            exit_bearing_max: self.exit_bearing_max_deg.to_radians(),
            radial_scale_min: self.radial_scale_min,
            radial_scale_max: self.radial_scale_max,
            dt: self.dt_s,
            max_sim_time: self
                .max_sim_time_s
                .unwrap_or(3.0 * 2.0 * sector_radius / aircraft.speed_min),
            seed: self.seed,
            runs: self.runs,
            detection: DetectionParams {
                protected_radius: nautical_miles(self.rpz_nm),
                lookahead: self.tlook_s,
            },
            grazing_correction: self.grazing_correction,
            nmac_threshold: feet(self.nmac_ft),
            neighbor_radius: nautical_miles(self.neighbor_radius_nm),
            max_spawn_attempts: self.max_spawn_attempts,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub densities: Vec<usize>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            densities: vec![10, 30, 60],
        }
    }
}

impl SweepSection {
    /// Densities 10, 15, ..., 60.
    pub fn full() -> Self {
        Self {
            densities: (10..=60).step_by(5).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSection {
    pub hidden_dim: usize,
    pub n_blocks: usize,
    pub ffn_inner_dim: usize,
    pub dropout: f64,
    pub logvar_min: f64,
    pub logvar_max: f64,
}

impl Default for NetworkSection {
    fn default() -> Self {
        let n = NetConfig::default();
        Self {
            hidden_dim: n.hidden_dim,
            n_blocks: n.n_blocks,
            ffn_inner_dim: n.ffn_inner_dim,
            dropout: n.dropout,
            logvar_min: n.logvar_min,
            logvar_max: n.logvar_max,
        }
    }
}

impl NetworkSection {
    pub fn to_config(&self) -> NetConfig {
        NetConfig {
            hidden_dim: self.hidden_dim,
            n_blocks: self.n_blocks,
            ffn_inner_dim: self.ffn_inner_dim,
            dropout: self.dropout,
            logvar_min: self.logvar_min,
            logvar_max: self.logvar_max,
            ..NetConfig::default()
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub aircraft: AircraftSection,
    pub scenario: ScenarioSection,
    pub sweep: SweepSection,
    pub network: NetworkSection,
    pub training: TrainConfig,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Self::parse(&text, path)
    }

    /// Parses and validates; `path` is only used in messages.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::Config {
            path: path.to_path_buf(),
            message: e.to_string().trim_end().to_string(),
        })?;
        cfg.validate(path)?;
        Ok(cfg)
    }

    pub fn validate(&self, path: &Path) -> Result<()> {
        let wrap = |section: &str, e: Error| Error::Config {
            path: PathBuf::from(path),
            message: format!("[{section}] {e}"),
        };
        let aircraft = self.aircraft.to_config();
        aircraft.validate().map_err(|e| wrap("aircraft", e))?;
        self.scenario_config().validate().map_err(|e| wrap("scenario", e))?;
        if self.sweep.densities.is_empty() {
            return Err(wrap("sweep", crate::error::domain("densities must not be empty")));
        }
        for &n in &self.sweep.densities {
            self.scenario_config()
                .with_n(n)
                .validate()
                .map_err(|e| wrap("sweep", e))?;
        }
        self.network.to_config().validate().map_err(|e| wrap("network", e))?;
        self.training.validate().map_err(|e| wrap("training", e))?;
        Ok(())
    }

    pub fn aircraft_config(&self) -> AircraftConfig {
        self.aircraft.to_config()
    }

    pub fn scenario_config(&self) -> ScenarioConfig {
        self.scenario.to_config(&self.aircraft.to_config())
    }

    pub fn net_config(&self) -> NetConfig {
        self.network.to_config()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }
}
