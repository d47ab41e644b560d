//! Point and interval diagnostics on held-out transits.

use std::io::Write;

use serde::Serialize;

use super::infer::GaussianPrediction;
use crate::error::{domain, Result};
use crate::features::fmt_float;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    pub n: usize,
    pub mae: f64,
    pub rmse: f64,
    pub r2: f64,
    pub pearson: f64,
    pub coverage_80: f64,
    pub coverage_90: f64,
    pub width_80: f64,
    pub width_90: f64,
    pub z_resid_mean: f64,
    pub z_resid_std: f64,
    pub nll: f64,
}

impl Metrics {
    pub fn rows(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("n", self.n as f64),
            ("mae", self.mae),
            ("rmse", self.rmse),
            ("r2", self.r2),
            ("pearson", self.pearson),
            ("coverage_80", self.coverage_80),
            ("coverage_90", self.coverage_90),
            ("width_80", self.width_80),
            ("width_90", self.width_90),
            ("z_resid_mean", self.z_resid_mean),
            ("z_resid_std", self.z_resid_std),
            ("nll", self.nll),
        ]
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    if saa == 0.0 || sbb == 0.0 {
        return 0.0;
    }
    sab / (saa * sbb).sqrt()
}

pub fn evaluate(preds: &[GaussianPrediction], observed: &[f64]) -> Result<Metrics> {
    if preds.is_empty() || preds.len() != observed.len() {
        return Err(domain(
            "evaluation needs matching, nonempty predictions and observations",
        ));
    }
    let n = preds.len();
    let point: Vec<f64> = preds.iter().map(|p| p.mean()).collect();
    let err: Vec<f64> = point.iter().zip(observed).map(|(p, o)| p - o).collect();
    let sse: f64 = err.iter().map(|e| e * e).sum();
    let mo = mean(observed);
    let sst: f64 = observed.iter().map(|o| (o - mo).powi(2)).sum();
    let mut inside = [0usize; 2];
    let mut width = [0.0; 2];
    for (p, &o) in preds.iter().zip(observed) {
        for (k, level) in [0.8, 0.9].into_iter().enumerate() {
            let (lo, hi) = p.interval(level)?;
            if lo <= o && o <= hi {
                inside[k] += 1;
            }
            width[k] += hi - lo;
        }
    }
    let zr: Vec<f64> = preds.iter().zip(observed).map(|(p, &o)| p.z_residual(o)).collect();
    let zm = mean(&zr);
    let nll = mean(
        &preds
            .iter()
            .zip(observed)
            .map(|(p, &o)| 0.5 * (p.sigma_z2.ln() + (o.ln_1p() - p.mu_z).powi(2) / p.sigma_z2))
            .collect::<Vec<_>>(),
    );
    Ok(Metrics {
        n,
        mae: mean(&err.iter().map(|e| e.abs()).collect::<Vec<_>>()),
        rmse: (sse / n as f64).sqrt(),
        r2: if sst > 0.0 { 1.0 - sse / sst } else { f64::NAN },
        pearson: pearson(&point, observed),
        coverage_80: inside[0] as f64 / n as f64,
        coverage_90: inside[1] as f64 / n as f64,
        width_80: width[0] / n as f64,
        width_90: width[1] / n as f64,
        z_resid_mean: zm,
        z_resid_std: (zr.iter().map(|z| (z - zm).powi(2)).sum::<f64>() / n as f64).sqrt(),
        nll,
    })
}

pub fn write_metrics<W: Write>(m: &Metrics, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["metric", "value"])?;
    for (k, v) in m.rows() {
        w.write_record([k.to_string(), fmt_float(v)])?;
    }
    w.flush()?;
    Ok(())
}

pub const PREDICTION_QUANTILES: [f64; 5] = [0.05, 0.10, 0.50, 0.90, 0.95];

pub fn write_predictions<W: Write>(preds: &[GaussianPrediction], observed: &[f64], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["delta_e_obs", "delta_e_mean", "q05", "q10", "q50", "q90", "q95"])?;
    for (p, &o) in preds.iter().zip(observed) {
        let mut row = vec![fmt_float(o), fmt_float(p.mean())];
        for q in PREDICTION_QUANTILES {
            row.push(fmt_float(p.quantile(q)?));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
