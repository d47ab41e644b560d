//! Unit conversions and the standard atmosphere.
//!
//! Everything inside the crate is SI: metres, seconds, kilograms, newtons,
//! watts and radians. Aviation units (knots, nautical miles, feet, RPM)
//! only appear at the edges, in config files and report tables.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

pub const METERS_PER_SECOND_PER_KNOT: f64 = 0.514444;
pub const METERS_PER_NAUTICAL_MILE: f64 = 1852.0;
pub const METERS_PER_FOOT: f64 = 0.3048;
pub const RAD_PER_SECOND_PER_RPM: f64 = 2.0 * PI / 60.0;

/// Sea-level ISA density, kg/m³.
pub const SEA_LEVEL_DENSITY: f64 = 1.225;
/// Dynamic viscosity of air used for every Reynolds number, Pa·s.
pub const AIR_VISCOSITY: f64 = 1.7894e-5;
/// Top of the ISA troposphere, m.
pub const TROPOPAUSE: f64 = 11_000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dimension {
    Length,
    Speed,
    AngularRate,
    Angle,
    Power,
    Time,
    Mass,
    Force,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Unit {
    Meter,
    NauticalMile,
    Foot,
    MeterPerSecond,
    Knot,
    RadianPerSecond,
    Rpm,
    Radian,
    Degree,
    Watt,
    Kilowatt,
    Second,
    Kilogram,
    Newton,
}

impl Unit {
    pub fn dimension(self) -> Dimension {
        use Unit::*;
        match self {
            Meter | NauticalMile | Foot => Dimension::Length,
            MeterPerSecond | Knot => Dimension::Speed,
            RadianPerSecond | Rpm => Dimension::AngularRate,
            Radian | Degree => Dimension::Angle,
            Watt | Kilowatt => Dimension::Power,
            Second => Dimension::Time,
            Kilogram => Dimension::Mass,
            Newton => Dimension::Force,
        }
    }

    /// Multiplier taking a value in this unit to the SI unit of its dimension.
    pub fn to_si(self) -> f64 {
        use Unit::*;
        match self {
            Meter | MeterPerSecond | RadianPerSecond | Radian | Watt | Second | Kilogram | Newton => 1.0,
            NauticalMile => METERS_PER_NAUTICAL_MILE,
            Foot => METERS_PER_FOOT,
            Knot => METERS_PER_SECOND_PER_KNOT,
            Rpm => RAD_PER_SECOND_PER_RPM,
            Degree => PI / 180.0,
            Kilowatt => 1000.0,
        }
    }
}

/// Converts `value` between two units of the same dimension.
pub fn convert(value: f64, from: Unit, to: Unit) -> Result<f64> {
    if from.dimension() != to.dimension() {
        return Err(domain(format!(
            "cannot convert {from:?} ({:?}) to {to:?} ({:?})",
            from.dimension(),
            to.dimension()
        )));
    }
    if from == to {
        return Ok(value);
    }
    Ok(value * from.to_si() / to.to_si())
}

pub fn knots(v: f64) -> f64 {
    v * METERS_PER_SECOND_PER_KNOT
}

pub fn to_knots(v: f64) -> f64 {
    v / METERS_PER_SECOND_PER_KNOT
}

pub fn nautical_miles(d: f64) -> f64 {
    d * METERS_PER_NAUTICAL_MILE
}

pub fn to_nautical_miles(d: f64) -> f64 {
    d / METERS_PER_NAUTICAL_MILE
}

pub fn feet(d: f64) -> f64 {
    d * METERS_PER_FOOT
}

pub fn rpm(w: f64) -> f64 {
    w * RAD_PER_SECOND_PER_RPM
}

/// ISA troposphere density at `altitude` metres.
pub fn isa_density(altitude: f64) -> Result<f64> {
    if !(0.0..=TROPOPAUSE).contains(&altitude) {
        return Err(domain(format!(
            "altitude {altitude} m outside the ISA troposphere [0, {TROPOPAUSE}] m"
        )));
    }
    Ok(SEA_LEVEL_DENSITY * (1.0 - 2.25577e-5 * altitude).powf(4.25588))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn density_reference_points() {
        assert_eq!(isa_density(0.0).unwrap(), 1.225);
        // hand-evaluated: 1.225 * (1 - 2.25577e-5 h)^4.25588
        assert!((isa_density(609.6).unwrap() - 1.154897).abs() < 1e-6);
        assert!((isa_density(1000.0).unwrap() - 1.111642).abs() < 1e-6);
    }

    #[test]
    fn density_rejects_out_of_range() {
        assert!(isa_density(-1.0).is_err());
        assert!(isa_density(11_001.0).is_err());
    }

    #[test]
    fn aviation_conversions() {
        assert!((convert(157.0, Unit::Knot, Unit::MeterPerSecond).unwrap() - 80.767708).abs() < 1e-9);
        assert!((convert(0.6, Unit::NauticalMile, Unit::Meter).unwrap() - 1111.2).abs() < 1e-9);
        assert_eq!(convert(0.0, Unit::Foot, Unit::NauticalMile).unwrap(), 0.0);
        assert!((convert(300.0, Unit::Rpm, Unit::RadianPerSecond).unwrap() - 10.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch() {
        assert!(convert(1.0, Unit::Knot, Unit::Meter).is_err());
    }

    const UNITS: [Unit; 14] = [
        Unit::Meter,
        Unit::NauticalMile,
        Unit::Foot,
        Unit::MeterPerSecond,
        Unit::Knot,
        Unit::RadianPerSecond,
        Unit::Rpm,
        Unit::Radian,
        Unit::Degree,
        Unit::Watt,
        Unit::Kilowatt,
        Unit::Second,
        Unit::Kilogram,
        Unit::Newton,
    ];

    proptest! {
        #[test]
        fn round_trip(x in -1e9f64..1e9, a in 0usize..14, b in 0usize..14) {
            let a = UNITS[a];
            let same: Vec<Unit> = UNITS.iter().copied().filter(|u| u.dimension() == a.dimension()).collect();
            let b = same[b % same.len()];
            let back = convert(convert(x, a, b).unwrap(), b, a).unwrap();
            prop_assert!((back - x).abs() <= 1e-12 * x.abs().max(1e-300));
        }

        #[test]
        fn density_decreasing(h in 0.0f64..10_999.0, dh in 0.01f64..1000.0) {
            let h2 = (h + dh).min(TROPOPAUSE);
            prop_assert!(isa_density(h2).unwrap() < isa_density(h).unwrap());
        }
    }
}
