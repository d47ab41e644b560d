//! Shifted log-normal summaries of a Gaussian in `z = ln(1 + delta_e)`.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianPrediction {
    pub mu_z: f64,
    pub sigma_z2: f64,
}

impl GaussianPrediction {
    pub fn new(mu_z: f64, sigma_z2: f64) -> Result<Self> {
        if !mu_z.is_finite() || !(sigma_z2 > 0.0 && sigma_z2.is_finite()) {
            return Err(domain(format!("invalid prediction mu={mu_z} var={sigma_z2}")));
        }
        Ok(Self { mu_z, sigma_z2 })
    }

    pub fn from_logvar(mu_z: f64, logvar: f64) -> Self {
        Self {
            mu_z,
            sigma_z2: logvar.exp(),
        }
    }

    pub fn sigma_z(&self) -> f64 {
        self.sigma_z2.sqrt()
    }

    /// Expected overhead.
    pub fn mean(&self) -> f64 {
        (self.mu_z + 0.5 * self.sigma_z2).exp_m1()
    }

    /// Overhead quantile at level `q` in (0, 1).
    pub fn quantile(&self, q: f64) -> Result<f64> {
        Ok((self.mu_z + self.sigma_z() * inverse_normal_cdf(q)?).exp_m1())
    }

    /// Central interval holding `level` of the probability mass.
    pub fn interval(&self, level: f64) -> Result<(f64, f64)> {
        if !(level > 0.0 && level < 1.0) {
            return Err(domain(format!("interval level must lie in (0, 1), got {level}")));
        }
        Ok((self.quantile(0.5 * (1.0 - level))?, self.quantile(0.5 * (1.0 + level))?))
    }

    /// Standardised residual of an observed overhead.
    pub fn z_residual(&self, delta_e: f64) -> f64 {
        (to_z(delta_e) - self.mu_z) / self.sigma_z()
    }
}

pub fn to_z(delta_e: f64) -> f64 {
    delta_e.ln_1p()
}

pub fn from_z(z: f64) -> f64 {
    z.exp_m1()
}

fn horner(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().fold(0.0, |acc, c| acc * x + c)
}

// coefficients highest power first
const A: [f64; 8] = [
    2509.0809287301226727,
    33430.575583588128105,
    67265.770927008700853,
    45921.953931549871457,
    13731.693765509461125,
    1971.5909503065514427,
    133.14166789178437745,
    3.387132872796366608,
];
const B: [f64; 8] = [
    5226.495278852545925,
    28729.085735721942674,
    39307.89580009271061,
    21213.794301586595867,
    5394.1960214247511077,
    687.1870074920579083,
    42.313330701600911252,
    1.0,
];
const C: [f64; 8] = [
    7.7454501427834140764e-4,
    0.0227238449892691845833,
    0.24178072517745061177,
    1.27045825245236838258,
    3.64784832476320460504,
    5.7694972214606914055,
    4.6303378461565452959,
    1.42343711074968357734,
];
const D: [f64; 8] = [
    1.05075007164441684324e-9,
    5.475938084995344946e-4,
    0.0151986665636164571966,
    0.14810397642748007459,
    0.68976733498510000455,
    1.6763848301838038494,
    2.05319162663775882187,
    1.0,
];
const E: [f64; 8] = [
    2.01033439929228813265e-7,
    2.71155556874348757815e-5,
    0.0012426609473880784386,
    0.026532189526576123093,
    0.29656057182850489123,
    1.7848265399172913358,
    5.4637849111641143699,
    6.6579046435011037772,
];
const F: [f64; 8] = [
    2.04426310338993978564e-15,
    1.4215117583164458887e-7,
    1.8463183175100546818e-5,
    7.868691311456132591e-4,
    0.0148753612908506148525,
    0.13692988092273580531,
    0.59983220655588793769,
    1.0,
];

/// Standard normal quantile (Wichura's AS241, about 16 digits).
pub fn inverse_normal_cdf(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(domain(format!("probability must lie in (0, 1), got {p}")));
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return Ok(q * horner(&A, r) / horner(&B, r));
    }
    let r = (-(if q < 0.0 { p } else { 1.0 - p }).ln()).sqrt();
    let x = if r <= 5.0 {
        horner(&C, r - 1.6) / horner(&D, r - 1.6)
    } else {
        horner(&E, r - 5.0) / horner(&F, r - 5.0)
    };
    Ok(if q < 0.0 { -x } else { x })
}
