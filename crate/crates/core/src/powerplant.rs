//! Cruise power model for a six-rotor tilt-rotor.
//!
//! Drag is built up component by component (flat-plate skin friction times
//! form factor for streamlined parts, a fixed drag coefficient on a frontal
//! area for bluff parts) plus lifting-line induced drag. The rotors supply
//! thrust equal to total drag; rotor power splits into induced (Glauert
//! high-speed inflow), profile (blade-element) and parasite terms, then
//! drivetrain losses and a constant hotel load give electrical power.

use std::f64::consts::PI;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::units::{self, knots, AIR_VISCOSITY};

/// Below this Reynolds number the turbulent flat-plate formula is not valid.
pub const MIN_TURBULENT_REYNOLDS: f64 = 1e4;

/// Parasite-drag scale that puts the default aircraft's best-range speed at
/// 157 kt at 2000 ft. Found with [`calibrate_parasite_factor`].
pub const DEFAULT_PARASITE_CALIBRATION: f64 = 0.179_668_6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DragComponent {
    pub name: String,
    /// Wetted area, m². For bluff bodies this holds the frontal-area proxy.
    pub wetted_area: f64,
    #[serde(default = "one")]
    pub form_factor: f64,
    /// Length used for the Reynolds number, m.
    #[serde(default = "one")]
    pub characteristic_length: f64,
    #[serde(default)]
    pub bluff_body: bool,
    #[serde(default)]
    pub bluff_cd: f64,
}

fn one() -> f64 {
    1.0
}

impl DragComponent {
    pub fn streamlined(name: &str, wetted_area: f64, form_factor: f64, length: f64) -> Self {
        Self {
            name: name.to_owned(),
            wetted_area,
            form_factor,
            characteristic_length: length,
            bluff_body: false,
            bluff_cd: 0.0,
        }
    }

    pub fn bluff(name: &str, frontal_area: f64, cd: f64) -> Self {
        Self {
            name: name.to_owned(),
            wetted_area: frontal_area,
            form_factor: 1.0,
            characteristic_length: 1.0,
            bluff_body: true,
            bluff_cd: cd,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.wetted_area > 0.0) {
            return Err(domain(format!("component {}: wetted_area must be > 0", self.name)));
        }
        if self.bluff_body {
            if !(self.bluff_cd > 0.0) {
                return Err(domain(format!("component {}: bluff_cd must be > 0", self.name)));
            }
        } else {
            if !(self.form_factor >= 1.0) {
                return Err(domain(format!("component {}: form_factor must be >= 1", self.name)));
            }
            if !(self.characteristic_length > 0.0) {
                return Err(domain(format!(
                    "component {}: characteristic_length must be > 0",
                    self.name
                )));
            }
        }
        Ok(())
    }

    /// Zero-lift drag coefficient referenced to `reference_area`.
    fn drag_coefficient(&self, airspeed: f64, density: f64, reference_area: f64) -> Result<f64> {
        if self.bluff_body {
            return Ok(self.bluff_cd * self.wetted_area / reference_area);
        }
        let re = density * airspeed * self.characteristic_length / AIR_VISCOSITY;
        Ok(self.form_factor * skin_friction(re)? * self.wetted_area / reference_area)
    }
}

/// Immutable parameter set for the baseline aircraft. All values SI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AircraftConfig {
    pub n_rotors: u32,
    pub rotor_radius: f64,
    pub n_blades: u32,
    pub blade_chord: f64,
    /// Rotor angular speed in cruise, rad/s.
    pub cruise_rotor_speed: f64,
    pub wing_area: f64,
    pub aspect_ratio: f64,
    pub oswald: f64,
    pub mtom: f64,
    pub gravity: f64,
    /// Induced-power correction factor.
    pub kappa: f64,
    /// Advance-ratio coefficient of the profile power.
    pub k_mu: f64,
    pub blade_cd0: f64,
    pub k_lift: f64,
    pub drivetrain_efficiency: f64,
    pub hotel_power: f64,
    pub max_shaft_power: f64,
    pub cruise_altitude: f64,
    pub speed_min: f64,
    pub speed_max: f64,
    pub drag_components: Vec<DragComponent>,
    pub parasite_calibration_factor: f64,
}

impl Default for AircraftConfig {
    fn default() -> Self {
        let rotor_radius = 1.45;
        let n_blades = 5;
        Self {
            n_rotors: 6,
            rotor_radius,
            n_blades,
            // solidity 0.083
            blade_chord: 0.083 * PI * rotor_radius / n_blades as f64,
            cruise_rotor_speed: units::rpm(300.0),
            wing_area: 10.83,
            aspect_ratio: 10.8,
            oswald: 0.8,
            mtom: 2177.0,
            gravity: 9.81,
            kappa: 1.15,
            k_mu: 4.65,
            blade_cd0: 0.012,
            k_lift: 6.0,
            drivetrain_efficiency: 0.85,
            hotel_power: 2000.0,
            max_shaft_power: 690_000.0,
            cruise_altitude: units::feet(2000.0),
            speed_min: knots(85.0),
            speed_max: knots(185.0),
            drag_components: default_drag_components(),
            parasite_calibration_factor: DEFAULT_PARASITE_CALIBRATION,
        }
    }
}

/// Wing, fuselage, tail, six propulsion pods and landing gear.
pub fn default_drag_components() -> Vec<DragComponent> {
    let mut parts = vec![
        DragComponent::streamlined("wing", 20.2, 1.45, 1.016),
        DragComponent::streamlined("fuselage", 24.0, 1.49, 6.5),
        DragComponent::streamlined("tail", 7.0, 1.30, 0.8),
    ];
    for i in 1..=6 {
        parts.push(DragComponent::bluff(&format!("pod{i}"), 0.12, 0.25));
    }
    parts.push(DragComponent::bluff("gear", 0.35, 0.5));
    parts
}

impl AircraftConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("rotor_radius", self.rotor_radius),
            ("blade_chord", self.blade_chord),
            ("cruise_rotor_speed", self.cruise_rotor_speed),
            ("wing_area", self.wing_area),
            ("aspect_ratio", self.aspect_ratio),
            ("oswald", self.oswald),
            ("mtom", self.mtom),
            ("gravity", self.gravity),
            ("kappa", self.kappa),
            ("speed_min", self.speed_min),
            ("parasite_calibration_factor", self.parasite_calibration_factor),
            ("max_shaft_power", self.max_shaft_power),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(domain(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if self.n_rotors == 0 || self.n_blades == 0 {
            return Err(domain("n_rotors and n_blades must be >= 1"));
        }
        if !(self.drivetrain_efficiency > 0.0 && self.drivetrain_efficiency <= 1.0) {
            return Err(domain("drivetrain_efficiency must lie in (0, 1]"));
        }
        if !(self.speed_min < self.speed_max) {
            return Err(domain("speed_min must be below speed_max"));
        }
        if self.hotel_power < 0.0 || self.blade_cd0 < 0.0 || self.k_lift < 0.0 || self.k_mu < 0.0 {
            return Err(domain("hotel_power, blade_cd0, k_lift and k_mu must be non-negative"));
        }
        if self.drag_components.is_empty() {
            return Err(domain("drag component list is empty"));
        }
        for c in &self.drag_components {
            c.validate()?;
        }
        Ok(())
    }

    /// Rotor solidity N_b·c/(π·R).
    pub fn solidity(&self) -> f64 {
        self.n_blades as f64 * self.blade_chord / (PI * self.rotor_radius)
    }

    /// Single-rotor disk area, m².
    pub fn disk_area(&self) -> f64 {
        PI * self.rotor_radius * self.rotor_radius
    }

    pub fn total_disk_area(&self) -> f64 {
        self.disk_area() * self.n_rotors as f64
    }

    pub fn tip_speed(&self) -> f64 {
        self.cruise_rotor_speed * self.rotor_radius
    }

    pub fn weight(&self) -> f64 {
        self.mtom * self.gravity
    }

    /// Air density at the configured cruise altitude.
    pub fn cruise_density(&self) -> Result<f64> {
        units::isa_density(self.cruise_altitude)
    }
}

/// Prandtl-Schlichting turbulent flat-plate skin friction coefficient.
pub fn skin_friction(reynolds: f64) -> Result<f64> {
    if !(reynolds > MIN_TURBULENT_REYNOLDS) {
        return Err(domain(format!(
            "Reynolds number {reynolds} is not in the turbulent range (> {MIN_TURBULENT_REYNOLDS})"
        )));
    }
    Ok(0.455 / reynolds.log10().powf(2.58))
}

/// Total parasite drag coefficient referenced to the wing area.
pub fn parasite_drag_coefficient(config: &AircraftConfig, airspeed: f64, density: f64) -> Result<f64> {
    if !(airspeed > 0.0) {
        return Err(domain(format!("airspeed must be positive, got {airspeed}")));
    }
    if config.drag_components.is_empty() {
        return Err(domain("drag component list is empty"));
    }
    let mut sum = 0.0;
    for c in &config.drag_components {
        sum += c.drag_coefficient(airspeed, density, config.wing_area)?;
    }
    Ok(sum * config.parasite_calibration_factor)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Drag {
    pub parasite: f64,
    pub induced: f64,
    pub total: f64,
}

pub fn dynamic_pressure(airspeed: f64, density: f64) -> f64 {
    0.5 * density * airspeed * airspeed
}

pub fn total_drag(config: &AircraftConfig, airspeed: f64, density: f64) -> Result<Drag> {
    let q = dynamic_pressure(airspeed, density);
    let parasite = parasite_drag_coefficient(config, airspeed, density)? * q * config.wing_area;
    let w = config.weight();
    let induced = w * w / (PI * config.aspect_ratio * config.oswald * q * config.wing_area);
    Ok(Drag {
        parasite,
        induced,
        total: parasite + induced,
    })
}

/// Rotor induced power with the Glauert high-speed inflow `v_i = v_h²/V`.
pub fn induced_power(config: &AircraftConfig, thrust: f64, airspeed: f64, density: f64) -> Result<f64> {
    if !(airspeed > 0.0) {
        return Err(domain("Glauert inflow needs a positive airspeed"));
    }
    if thrust < 0.0 {
        return Err(domain(format!("thrust must be non-negative, got {thrust}")));
    }
    let hover_inflow_sq = thrust / (2.0 * density * config.total_disk_area());
    let inflow = hover_inflow_sq / airspeed;
    Ok(config.kappa * thrust * inflow)
}

/// Blade profile power summed over all rotors.
pub fn profile_power(config: &AircraftConfig, thrust: f64, airspeed: f64, density: f64) -> Result<f64> {
    let tip = config.tip_speed();
    if !(tip > 0.0) {
        return Err(domain("rotor tip speed must be positive"));
    }
    let n = config.n_rotors as f64;
    let area = config.disk_area();
    let sigma = config.solidity();
    let advance = airspeed / tip;
    let ct = thrust / (density * area * tip * tip * n);
    let blade_cd = config.blade_cd0 * (1.0 + config.k_lift * (ct / sigma).powi(2));
    Ok(blade_cd * sigma / 8.0 * (1.0 + config.k_mu * advance * advance) * density * area * tip.powi(3) * n)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerBreakdown {
    pub induced: f64,
    pub profile: f64,
    pub parasite: f64,
    pub shaft_total: f64,
    pub hotel: f64,
    pub electrical_total: f64,
}

fn check_speed(config: &AircraftConfig, airspeed: f64) -> Result<()> {
    // clamped commands may land a few ulps outside the band
    let slack = 1e-9 * config.speed_max;
    if !(airspeed >= config.speed_min - slack && airspeed <= config.speed_max + slack) {
        return Err(domain(format!(
            "airspeed {airspeed:.4} m/s outside the permitted range [{:.4}, {:.4}] m/s",
            config.speed_min, config.speed_max
        )));
    }
    Ok(())
}

/// Full cruise power breakdown at `airspeed`.
pub fn total_power(config: &AircraftConfig, airspeed: f64, density: f64) -> Result<PowerBreakdown> {
    check_speed(config, airspeed)?;
    Ok(power_unchecked(config, airspeed, density)?)
}

fn power_unchecked(config: &AircraftConfig, airspeed: f64, density: f64) -> Result<PowerBreakdown> {
    let drag = total_drag(config, airspeed, density)?;
    let thrust = drag.total;
    let induced = induced_power(config, thrust, airspeed, density)?;
    let profile = profile_power(config, thrust, airspeed, density)?;
    let parasite = drag.total * airspeed;
    let shaft_total = induced + profile + parasite;
    if shaft_total > config.max_shaft_power {
        warn!(
            "shaft power {:.1} kW exceeds the {:.1} kW limit at {:.1} kt",
            shaft_total / 1e3,
            config.max_shaft_power / 1e3,
            units::to_knots(airspeed)
        );
    }
    Ok(PowerBreakdown {
        induced,
        profile,
        parasite,
        shaft_total,
        hotel: config.hotel_power,
        electrical_total: shaft_total / config.drivetrain_efficiency + config.hotel_power,
    })
}

/// Energy (J) along a sampled `(time s, airspeed m/s)` profile, trapezoidal rule.
pub fn segment_energy(config: &AircraftConfig, profile: &[(f64, f64)], density: f64) -> Result<f64> {
    if profile.len() < 2 {
        return Err(domain("a speed profile needs at least two samples"));
    }
    let mut energy = 0.0;
    let mut prev_power = total_power(config, profile[0].1, density)?.electrical_total;
    for w in profile.windows(2) {
        let (t0, _) = w[0];
        let (t1, v1) = w[1];
        if !(t1 > t0) {
            return Err(domain(format!(
                "timestamps must be strictly increasing ({t0} then {t1})"
            )));
        }
        let p = total_power(config, v1, density)?.electrical_total;
        energy += 0.5 * (prev_power + p) * (t1 - t0);
        prev_power = p;
    }
    Ok(energy)
}

/// Electrical energy per metre flown at constant `airspeed`, J/m.
pub fn energy_per_metre(config: &AircraftConfig, airspeed: f64, density: f64) -> Result<f64> {
    Ok(total_power(config, airspeed, density)?.electrical_total / airspeed)
}

/// Speed in `[speed_min, speed_max]` minimising electrical power per unit
/// distance, by golden-section search to 0.01 m/s.
pub fn best_range_speed(config: &AircraftConfig, density: f64) -> f64 {
    let cost = |v: f64| {
        power_unchecked(config, v, density)
            .map(|p| p.electrical_total / v)
            .unwrap_or(f64::INFINITY)
    };
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (config.speed_min, config.speed_max);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (cost(c), cost(d));
    while b - a > 1e-3 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = cost(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = cost(d);
        }
    }
    let mid = 0.5 * (a + b);
    // the optimum may sit on a bound
    [config.speed_min, mid, config.speed_max]
        .into_iter()
        .min_by(|x, y| cost(*x).total_cmp(&cost(*y)))
        .unwrap_or(mid)
}

/// Bisects the parasite calibration factor until the best-range speed hits
/// `target_speed` (m/s) to within 1e-4 m/s. Larger factors lower the speed.
pub fn calibrate_parasite_factor(config: &AircraftConfig, density: f64, target_speed: f64) -> Result<f64> {
    let mut trial = config.clone();
    let mut speed_at = |k: f64| {
        trial.parasite_calibration_factor = k;
        best_range_speed(&trial, density)
    };
    let (mut lo, mut hi) = (1e-3, 10.0);
    if !(speed_at(lo) > target_speed && speed_at(hi) < target_speed) {
        return Err(domain(
            "target best-range speed is not bracketed by the calibration search",
        ));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let v = speed_at(mid);
        if (v - target_speed).abs() < 1e-4 || hi - lo < 1e-12 {
            return Ok(mid);
        }
        if v > target_speed {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Cruise quantities fixed for a whole scenario: density, best-range speed
/// and the conflict-free energy per metre.
#[derive(Debug, Clone)]
pub struct CruiseModel {
    pub config: AircraftConfig,
    pub density: f64,
    pub best_range_speed: f64,
    pub baseline_energy_per_metre: f64,
}

impl CruiseModel {
    pub fn new(config: AircraftConfig) -> Result<Self> {
        config.validate()?;
        let density = config.cruise_density()?;
        let best_range_speed = best_range_speed(&config, density);
        let baseline_energy_per_metre = energy_per_metre(&config, best_range_speed, density)?;
        Ok(Self {
            config,
            density,
            best_range_speed,
            baseline_energy_per_metre,
        })
    }

    pub fn power(&self, airspeed: f64) -> Result<f64> {
        Ok(total_power(&self.config, airspeed, self.density)?.electrical_total)
    }
}

/// One row of the power-versus-speed table, in kt and kW.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerTableRow {
    pub speed_kt: f64,
    pub p_induced_kw: f64,
    pub p_profile_kw: f64,
    pub p_parasite_kw: f64,
    pub p_hotel_kw: f64,
    pub p_total_kw: f64,
}

/// Power breakdown on a `step_kt` grid across the permitted speed range.
pub fn power_table(config: &AircraftConfig, density: f64, step_kt: f64) -> Result<Vec<PowerTableRow>> {
    if !(step_kt > 0.0) {
        return Err(domain("table step must be positive"));
    }
    let lo = units::to_knots(config.speed_min);
    let hi = units::to_knots(config.speed_max);
    let n = ((hi - lo) / step_kt + 1e-9).floor() as usize;
    (0..=n)
        .map(|i| {
            let kt = (lo + i as f64 * step_kt).min(hi);
            let p = total_power(config, knots(kt), density)?;
            Ok(PowerTableRow {
                speed_kt: kt,
                p_induced_kw: p.induced / 1e3,
                p_profile_kw: p.profile / 1e3,
                p_parasite_kw: p.parasite / 1e3,
                p_hotel_kw: p.hotel / 1e3,
                p_total_kw: p.electrical_total / 1e3,
            })
        })
        .collect()
}

pub fn write_power_table<W: std::io::Write>(rows: &[PowerTableRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "speed_kt",
        "p_induced_kW",
        "p_profile_kW",
        "p_parasite_kW",
        "p_hotel_kW",
        "p_total_kW",
    ])?;
    for r in rows {
        w.write_record(
            [
                r.speed_kt,
                r.p_induced_kw,
                r.p_profile_kw,
                r.p_parasite_kw,
                r.p_hotel_kw,
                r.p_total_kw,
            ]
            .map(|x| format!("{x:.6}")),
        )?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::to_knots;

    const RHO_2000FT: f64 = 1.154_897_260_756_782_7;

    fn cfg() -> AircraftConfig {
        AircraftConfig::default()
    }

    #[test]
    fn default_config_is_valid() {
        let c = cfg();
        c.validate().unwrap();
        assert!((c.solidity() - 0.083).abs() < 1e-9 * 0.083);
        assert!((c.total_disk_area() - 6.0 * PI * 1.45 * 1.45).abs() < 1e-12);
        assert!((c.cruise_density().unwrap() - RHO_2000FT).abs() < 1e-12);
    }

    #[test]
    fn skin_friction_values() {
        // 0.455 / 7^2.58 and 0.455 / 6^2.58
        assert!((skin_friction(1e7).unwrap() - 0.003_003_713).abs() < 1e-9);
        assert!((skin_friction(1e6).unwrap() - 0.004_470_758).abs() < 1e-9);
        assert!(skin_friction(1e8).unwrap() < skin_friction(1e7).unwrap());
        assert!(skin_friction(1e4).is_err());
    }

    #[test]
    fn single_unit_component_reduces_to_skin_friction() {
        let mut c = cfg();
        c.parasite_calibration_factor = 1.0;
        c.drag_components = vec![DragComponent::streamlined("plate", c.wing_area, 1.0, 2.0)];
        let v = 70.0;
        let re = RHO_2000FT * v * 2.0 / AIR_VISCOSITY;
        let cd = parasite_drag_coefficient(&c, v, RHO_2000FT).unwrap();
        assert!((cd - skin_friction(re).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn parasite_coefficient_linear_in_wetted_area() {
        let c = cfg();
        let mut doubled = c.clone();
        for comp in &mut doubled.drag_components {
            comp.wetted_area *= 2.0;
        }
        let a = parasite_drag_coefficient(&c, 80.0, RHO_2000FT).unwrap();
        let b = parasite_drag_coefficient(&doubled, 80.0, RHO_2000FT).unwrap();
        assert!((b - 2.0 * a).abs() < 1e-14);
    }

    #[test]
    fn empty_component_list_is_rejected() {
        let mut c = cfg();
        c.drag_components.clear();
        assert!(parasite_drag_coefficient(&c, 80.0, RHO_2000FT).is_err());
        assert!(c.validate().is_err());
    }

    #[test]
    fn induced_drag_hand_value() {
        // W = 21,356.37 N, q = 3767 Pa -> W²/(π·10.8·0.8·q·10.83) ≈ 411.9 N
        let d = total_drag(&cfg(), 80.77, 1.1548).unwrap();
        assert!((d.induced - 411.9).abs() < 0.5, "{}", d.induced);
        let d2 = total_drag(&cfg(), 161.54, 1.1548).unwrap();
        assert!((d2.induced - d.induced / 4.0).abs() < 1e-9);
        assert!((d.total - d.parasite - d.induced).abs() < 1e-12);
    }

    #[test]
    fn induced_power_values() {
        let c = cfg();
        assert_eq!(induced_power(&c, 0.0, 80.77, 1.1548).unwrap(), 0.0);
        let mut c2 = c.clone();
        // A_total = 39.63 m²
        c2.rotor_radius = (39.63 / (6.0 * PI)).sqrt();
        let p = induced_power(&c2, 2000.0, 80.77, 1.1548).unwrap();
        assert!((p - 622.2).abs() < 0.5, "{p}");
        let p2 = induced_power(&c2, 4000.0, 80.77, 1.1548).unwrap();
        assert!((p2 - 4.0 * p).abs() < 1e-9);
        assert!(induced_power(&c, 100.0, 0.0, 1.1548).is_err());
    }

    #[test]
    fn profile_power_values() {
        let c = cfg();
        let tip = c.tip_speed();
        assert!((tip - 45.553).abs() < 1e-3);
        assert!((knots(157.0) / tip - 1.7730).abs() < 1e-4);
        let base = 0.012 * 0.083 / 8.0 * RHO_2000FT * c.disk_area() * tip.powi(3) * 6.0;
        let p0 = profile_power(&c, 0.0, 0.0, RHO_2000FT).unwrap();
        assert!((p0 - base).abs() < 1e-9 * base);
        let mut last = 0.0;
        for v in [40.0, 60.0, 80.0, 95.0] {
            let p = profile_power(&c, 800.0, v, RHO_2000FT).unwrap();
            assert!(p > last);
            last = p;
        }
    }

    #[test]
    fn breakdown_identities_and_ordering() {
        let c = cfg();
        let vbr = best_range_speed(&c, RHO_2000FT);
        let p = total_power(&c, vbr, RHO_2000FT).unwrap();
        let d = total_drag(&c, vbr, RHO_2000FT).unwrap();
        assert!((p.parasite - d.total * vbr).abs() < 1e-9 * p.parasite);
        assert!(p.electrical_total > p.shaft_total);
        assert!(p.parasite > p.profile && p.profile > p.induced);
    }

    #[test]
    fn out_of_range_speed_is_rejected() {
        let c = cfg();
        assert!(total_power(&c, knots(80.0), RHO_2000FT).is_err());
        assert!(total_power(&c, knots(190.0), RHO_2000FT).is_err());
    }

    #[test]
    fn constant_speed_energy() {
        let c = cfg();
        let v = knots(140.0);
        let p = total_power(&c, v, RHO_2000FT).unwrap().electrical_total;
        let e = segment_energy(&c, &[(0.0, v), (10.0, v), (25.0, v)], RHO_2000FT).unwrap();
        assert!((e - 25.0 * p).abs() < 1e-9 * e);
        assert!(segment_energy(&c, &[(0.0, v)], RHO_2000FT).is_err());
        assert!(segment_energy(&c, &[(0.0, v), (0.0, v)], RHO_2000FT).is_err());
    }

    fn smooth_profile(dt: f64, t_end: f64) -> Vec<(f64, f64)> {
        let n = (t_end / dt).round() as usize;
        (0..=n)
            .map(|i| {
                let t = i as f64 * dt;
                (t, knots(150.0) + 10.0 * (t / 30.0).sin())
            })
            .collect()
    }

    #[test]
    fn trapezoid_converges_under_refinement() {
        let c = cfg();
        let coarse = segment_energy(&c, &smooth_profile(0.1, 300.0), RHO_2000FT).unwrap();
        let fine = segment_energy(&c, &smooth_profile(0.01, 300.0), RHO_2000FT).unwrap();
        assert!(((coarse - fine) / fine).abs() < 1e-3);
    }

    #[test]
    fn energy_is_additive_over_segments() {
        let c = cfg();
        let prof = smooth_profile(1.0, 200.0);
        let whole = segment_energy(&c, &prof, RHO_2000FT).unwrap();
        let a = segment_energy(&c, &prof[..=120], RHO_2000FT).unwrap();
        let b = segment_energy(&c, &prof[120..], RHO_2000FT).unwrap();
        assert!((whole - a - b).abs() < 1e-9 * whole);
    }

    #[test]
    fn best_range_speed_matches_grid_oracle() {
        let c = cfg();
        let vbr = to_knots(best_range_speed(&c, RHO_2000FT));
        assert!((152.0..=162.0).contains(&vbr), "{vbr}");
        let mut best = (f64::INFINITY, 0.0);
        for i in 0..=1000 {
            let kt = 85.0 + 0.1 * i as f64;
            let r = energy_per_metre(&c, knots(kt), RHO_2000FT).unwrap();
            if r < best.0 {
                best = (r, kt);
            }
        }
        assert!((vbr - best.1).abs() <= 0.2, "golden {vbr} grid {}", best.1);
    }

    #[test]
    fn heavier_parasite_drag_lowers_best_range_speed() {
        let c = cfg();
        let mut heavy = c.clone();
        heavy.parasite_calibration_factor *= 1.5;
        assert!(best_range_speed(&heavy, RHO_2000FT) < best_range_speed(&c, RHO_2000FT));
    }

    #[test]
    fn cost_per_metre_is_unimodal() {
        let c = cfg();
        let costs: Vec<f64> = (85..=185)
            .map(|kt| energy_per_metre(&c, knots(kt as f64), RHO_2000FT).unwrap())
            .collect();
        let local_minima = (1..costs.len() - 1)
            .filter(|&i| costs[i] < costs[i - 1] && costs[i] < costs[i + 1])
            .count();
        assert_eq!(local_minima, 1);
    }

    #[test]
    fn drag_trends() {
        let c = cfg();
        let at = |kt: f64| total_drag(&c, knots(kt), RHO_2000FT).unwrap();
        for kt in 85..185 {
            let (a, b) = (at(kt as f64), at(kt as f64 + 1.0));
            assert!(b.parasite > a.parasite);
            assert!(b.induced < a.induced);
        }
        assert!(at(185.0).total > at(184.0).total);
    }

    #[test]
    fn shipped_factor_reproduces_calibration() {
        let c = cfg();
        let k = calibrate_parasite_factor(&c, RHO_2000FT, knots(157.0)).unwrap();
        assert!((k - DEFAULT_PARASITE_CALIBRATION).abs() < 1e-5, "{k}");
    }

    #[test]
    fn table_covers_range() {
        let rows = power_table(&cfg(), RHO_2000FT, 1.0).unwrap();
        assert_eq!(rows.len(), 101);
        assert_eq!(rows[0].speed_kt, 85.0);
        assert!((rows[100].speed_kt - 185.0).abs() < 1e-9);
    }
}
