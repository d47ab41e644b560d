//! Summary statistics over simulated transits.

use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;

use crate::error::{domain, Result};
use crate::features::{fmt_float, TransitRecord};
use crate::simkit::RunResult;

/// Percentile `p` (0-100) of `values`, linearly interpolated between order
/// statistics. Sorts `values` in place. `None` when empty.
pub fn percentile(values: &mut [f64], p: f64) -> Option<f64> {
    if values.is_empty() || !(0.0..=100.0).contains(&p) {
        return None;
    }
    values.sort_by(f64::total_cmp);
    Some(percentile_sorted(values, p))
}

/// As [`percentile`] for data that is already sorted ascending.
pub fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    let rank = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Overhead statistics for one traffic density, in fractional units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OverheadStats {
    pub n_aircraft: usize,
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub p90: f64,
    pub p95: f64,
    pub max: f64,
}

impl OverheadStats {
    pub fn from_values(n_aircraft: usize, values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(domain(format!("no completed transits at N = {n_aircraft}")));
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Ok(Self {
            n_aircraft,
            count: v.len(),
            mean: v.iter().sum::<f64>() / v.len() as f64,
            median: percentile_sorted(&v, 50.0),
            p90: percentile_sorted(&v, 90.0),
            p95: percentile_sorted(&v, 95.0),
            max: v[v.len() - 1],
        })
    }
}

fn by_density(records: &[TransitRecord]) -> BTreeMap<usize, Vec<&TransitRecord>> {
    let mut map: BTreeMap<usize, Vec<&TransitRecord>> = BTreeMap::new();
    for r in records {
        map.entry(r.n_aircraft).or_default().push(r);
    }
    map
}

/// Per-density overhead statistics over completed transits.
pub fn overhead_table(records: &[TransitRecord]) -> Result<Vec<OverheadStats>> {
    by_density(records)
        .into_iter()
        .map(|(n, rs)| {
            let v: Vec<f64> = rs.iter().filter(|r| !r.incomplete).map(|r| r.delta_e).collect();
            OverheadStats::from_values(n, &v)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConflictFraction {
    pub n_aircraft: usize,
    pub transits: usize,
    pub in_conflict: f64,
    pub conflict_free: f64,
}

/// Share of aircraft in detected conflict at the first step, per density.
pub fn conflict_fractions(records: &[TransitRecord]) -> Vec<ConflictFraction> {
    by_density(records)
        .into_iter()
        .map(|(n, rs)| {
            let hit = rs.iter().filter(|r| r.started_in_conflict).count() as f64 / rs.len() as f64;
            ConflictFraction {
                n_aircraft: n,
                transits: rs.len(),
                in_conflict: hit,
                conflict_free: 1.0 - hit,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HistogramBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
}

/// Histogram of `log10(delta_e)` with `bins` equal-width bins.
/// Non-positive overheads are counted separately and returned as the second value.
pub fn log_histogram(values: &[f64], bins: usize) -> Result<(Vec<HistogramBin>, usize)> {
    if bins == 0 {
        return Err(domain("bins must be positive"));
    }
    let logs: Vec<f64> = values.iter().filter(|v| **v > 0.0).map(|v| v.log10()).collect();
    let non_positive = values.len() - logs.len();
    if logs.is_empty() {
        return Ok((Vec::new(), non_positive));
    }
    let lo = logs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let mut out: Vec<HistogramBin> = (0..bins)
        .map(|i| HistogramBin {
            lower: 10f64.powf(lo + i as f64 * width),
            upper: 10f64.powf(lo + (i + 1) as f64 * width),
            count: 0,
        })
        .collect();
    for l in logs {
        let k = (((l - lo) / width) as usize).min(bins - 1);
        out[k].count += 1;
    }
    Ok((out, non_positive))
}

/// One row of a per-density histogram on shared log-spaced bins.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DensityBin {
    pub n_aircraft: usize,
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
}

/// Log-space histograms of completed-transit overheads for each density,
/// all on the same `bins` edges spanning the positive values. The second
/// value counts non-positive overheads per density.
pub fn density_histograms(records: &[TransitRecord], bins: usize) -> Result<(Vec<DensityBin>, Vec<(usize, usize)>)> {
    if bins == 0 {
        return Err(domain("bins must be positive"));
    }
    let logs: Vec<f64> = records
        .iter()
        .filter(|r| !r.incomplete && r.delta_e > 0.0)
        .map(|r| r.delta_e.log10())
        .collect();
    let lo = logs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let mut rows = Vec::new();
    let mut zeros = Vec::new();
    for (n, rs) in by_density(records) {
        let done: Vec<f64> = rs.iter().filter(|r| !r.incomplete).map(|r| r.delta_e).collect();
        let mut counts = vec![0usize; bins];
        let mut non_positive = 0;
        for d in done {
            if d > 0.0 {
                counts[(((d.log10() - lo) / width) as usize).min(bins - 1)] += 1;
            } else {
                non_positive += 1;
            }
        }
        zeros.push((n, non_positive));
        if logs.is_empty() {
            continue;
        }
        for (i, c) in counts.into_iter().enumerate() {
            rows.push(DensityBin {
                n_aircraft: n,
                lower: 10f64.powf(lo + i as f64 * width),
                upper: 10f64.powf(lo + (i + 1) as f64 * width),
                count: c,
            });
        }
    }
    Ok((rows, zeros))
}

pub fn write_density_histograms<W: Write>(rows: &[DensityBin], zeros: &[(usize, usize)], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["n_aircraft", "lower", "upper", "count"])?;
    for (n, z) in zeros {
        w.write_record([n.to_string(), "-inf".into(), "0".into(), z.to_string()])?;
    }
    for r in rows {
        w.write_record([
            r.n_aircraft.to_string(),
            fmt_float(r.lower),
            fmt_float(r.upper),
            r.count.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_overhead_table<W: Write>(rows: &[OverheadStats], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "n_aircraft",
        "count",
        "mean_pct",
        "median_pct",
        "p90_pct",
        "p95_pct",
        "max_pct",
    ])?;
    for r in rows {
        w.write_record([
            r.n_aircraft.to_string(),
            r.count.to_string(),
            fmt_float(100.0 * r.mean),
            fmt_float(100.0 * r.median),
            fmt_float(100.0 * r.p90),
            fmt_float(100.0 * r.p95),
            fmt_float(100.0 * r.max),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_conflict_fractions<W: Write>(rows: &[ConflictFraction], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["n_aircraft", "transits", "in_conflict", "conflict_free"])?;
    for r in rows {
        w.write_record([
            r.n_aircraft.to_string(),
            r.transits.to_string(),
            fmt_float(r.in_conflict),
            fmt_float(r.conflict_free),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_histogram<W: Write>(bins: &[HistogramBin], non_positive: usize, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["lower", "upper", "count"])?;
    w.write_record(["-inf".to_string(), "0".to_string(), non_positive.to_string()])?;
    for b in bins {
        w.write_record([fmt_float(b.lower), fmt_float(b.upper), b.count.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// One row per run: density, run index, LoS and NMAC counts, median overhead.
pub fn write_run_summary<W: Write>(runs: &[RunResult], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "n_aircraft",
        "run",
        "los_count",
        "nmac_count",
        "relaxed_spawns",
        "min_separation_m",
        "median_overhead",
    ])?;
    for r in runs {
        w.write_record([
            r.n_aircraft.to_string(),
            r.run.to_string(),
            r.los_count.to_string(),
            r.nmac_count.to_string(),
            r.relaxed_spawns.to_string(),
            fmt_float(r.min_separation),
            fmt_float(r.median_overhead()),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn oracle(v: &[f64], p: f64) -> f64 {
        let mut s = v.to_vec();
        s.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let h = (s.len() - 1) as f64 * p / 100.0;
        let i = h as usize;
        if i + 1 >= s.len() {
            return s[s.len() - 1];
        }
        s[i] + (h - i as f64) * (s[i + 1] - s[i])
    }

    #[test]
    fn small_cases() {
        assert_eq!(percentile(&mut [3.0, 1.0, 2.0], 50.0), Some(2.0));
        assert_eq!(percentile(&mut [1.0, 2.0, 3.0, 4.0], 50.0), Some(2.5));
        assert_eq!(percentile(&mut [5.0], 95.0), Some(5.0));
        assert_eq!(percentile(&mut [], 50.0), None);
        assert!((percentile(&mut [0.0, 10.0], 95.0).unwrap() - 9.5).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn matches_order_statistics(v in prop::collection::vec(-1e3f64..1e3, 1..200), p in 0.0f64..=100.0) {
            let got = percentile(&mut v.clone(), p).unwrap();
            prop_assert!((got - oracle(&v, p)).abs() <= 1e-12 * (1.0 + got.abs()));
        }
    }

    #[test]
    fn histogram_counts_everything() {
        let v = [0.0, -1e-5, 1e-3, 1e-2, 1e-2, 0.1];
        let (bins, np) = log_histogram(&v, 4).unwrap();
        assert_eq!(np, 2);
        assert_eq!(bins.iter().map(|b| b.count).sum::<usize>(), 4);
        assert_eq!(bins[3].count, 1);
    }

    #[test]
    fn stats_row() {
        let v: Vec<f64> = (0..=100).map(|i| i as f64 / 1000.0).collect();
        let s = OverheadStats::from_values(10, &v).unwrap();
        assert!((s.median - 0.05).abs() < 1e-15);
        assert!((s.p95 - 0.095).abs() < 1e-15);
        assert_eq!(s.max, 0.1);
        assert!((s.mean - 0.05).abs() < 1e-12);
    }
}
