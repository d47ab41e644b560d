//! Pre-flight feature vectors, z-score normalisation and the dataset CSV.
//!
//! Features are computed once per aircraft from the step-0 snapshot: the
//! aircraft's own state, its neighbourhood, and the conflicts and MVP
//! command seen at the start of cruise. Nothing after step 0 is used.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::deconflict::{severity, AgentId, ConflictPair, DetectionParams, KinematicState, ResolutionCommand};
use crate::error::{domain, Error, Result};
use crate::geometry::{wrap_angle, Vec2};
use crate::units::METERS_PER_NAUTICAL_MILE;

pub const N_FEATURES: usize = 13;

pub const FEATURE_NAMES: [&str; N_FEATURES] = [
    "speed_dev",
    "radial_pos",
    "route_dist",
    "bearing_var",
    "speed_var",
    "heading_offset",
    "mvp_dpsi",
    "mvp_dv",
    "congestion",
    "nbr_conflict_density",
    "w_deg",
    "min_tcpa",
    "min_dcpa",
];

/// Raw (un-normalised) feature values in [`FEATURE_NAMES`] order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub [f64; N_FEATURES]);

impl FeatureVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn w_deg(&self) -> f64 {
        self.0[10]
    }

    pub fn min_tcpa(&self) -> f64 {
        self.0[11]
    }

    pub fn min_dcpa(&self) -> f64 {
        self.0[12]
    }

    pub fn congestion(&self) -> f64 {
        self.0[8]
    }

    /// Whether any conflict was detected at step 0.
    pub fn in_conflict(&self) -> bool {
        self.min_dcpa() < 1.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

/// Scenario-level quantities the extractor needs.
#[derive(Debug, Clone, Copy)]
pub struct FeatureContext {
    pub n_aircraft: usize,
    pub sector_radius: f64,
    pub best_range_speed: f64,
    pub neighbor_radius: f64,
    pub detection: DetectionParams,
}

/// Aircraft per 1000 nm² for `n` aircraft in a sector of `radius` metres.
pub fn congestion_per_1000_nm2(n: usize, radius: f64) -> f64 {
    let r_nm = radius / METERS_PER_NAUTICAL_MILE;
    n as f64 / (std::f64::consts::PI * r_nm * r_nm) * 1000.0
}

fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64
}

/// Feature vector of agent `own` (an index into `snapshot`).
///
/// `snapshot` holds every active agent at step 0; `in_conflict(i, j)`
/// reports whether agents `i` and `j` are in detected conflict. `command`
/// is the MVP command computed for `own` at step 0, if it had conflicts.
pub fn extract_features<F>(
    own: usize,
    snapshot: &[(AgentId, KinematicState, Vec2)],
    conflicts: &[ConflictPair],
    command: Option<&ResolutionCommand>,
    in_conflict: F,
    ctx: &FeatureContext,
) -> Result<FeatureVector>
where
    F: Fn(usize, usize) -> bool,
{
    let (_, state, exit) = snapshot
        .get(own)
        .copied()
        .ok_or_else(|| domain(format!("agent index {own} not in snapshot")))?;
    let vbr = ctx.best_range_speed;
    let speed = state.speed();
    let heading = state.velocity.angle();

    let neighbours: Vec<usize> = (0..snapshot.len())
        .filter(|&j| j != own && snapshot[j].1.position.distance(state.position) <= ctx.neighbor_radius)
        .collect();

    let bearings: Vec<f64> = neighbours
        .iter()
        .map(|&j| wrap_angle((snapshot[j].1.position - state.position).angle() - heading))
        .collect();
    let speeds: Vec<f64> = neighbours.iter().map(|&j| snapshot[j].1.speed() / vbr).collect();
    let heading_offset = if neighbours.is_empty() {
        0.0
    } else {
        let mean_dir = neighbours
            .iter()
            .filter_map(|&j| snapshot[j].1.velocity.unit())
            .fold(Vec2::ZERO, |acc, u| acc + u);
        if mean_dir.norm() < 1e-12 {
            0.0
        } else {
            wrap_angle(heading - mean_dir.angle()).abs()
        }
    };

    let (dpsi, dv) = match command {
        Some(cmd) if !conflicts.is_empty() => (cmd.heading_change(state.velocity), cmd.delta_v.norm() / vbr),
        _ => (0.0, 0.0),
    };

    let mut group = neighbours.clone();
    group.push(own);
    let group_pairs = group.len() * (group.len().saturating_sub(1)) / 2;
    let nbr_conflict_density = if group.len() < 2 {
        0.0
    } else {
        let mut hits = 0usize;
        for (a, &i) in group.iter().enumerate() {
            for &j in &group[a + 1..] {
                if in_conflict(i, j) {
                    hits += 1;
                }
            }
        }
        hits as f64 / group_pairs as f64
    };

    let w_deg = if conflicts.is_empty() {
        0.0
    } else {
        severity(conflicts, ctx.n_aircraft, &ctx.detection)?
    };
    let min_tcpa = conflicts
        .iter()
        .map(|c| c.t_cpa / ctx.detection.lookahead)
        .fold(1.0, f64::min)
        .clamp(0.0, 1.0);
    let min_dcpa = conflicts
        .iter()
        .map(|c| c.d_cpa / ctx.detection.protected_radius)
        .fold(1.0, f64::min)
        .clamp(0.0, 1.0);

    let fv = FeatureVector([
        (speed - vbr) / vbr,
        (state.position.norm() / ctx.sector_radius).min(1.0),
        (exit - state.position).norm() / (2.0 * ctx.sector_radius),
        variance(&bearings),
        variance(&speeds),
        heading_offset,
        dpsi,
        dv,
        congestion_per_1000_nm2(ctx.n_aircraft, ctx.sector_radius),
        nbr_conflict_density,
        w_deg,
        min_tcpa,
        min_dcpa,
    ]);
    if !fv.is_finite() {
        return Err(domain(format!("non-finite feature vector {fv:?}")));
    }
    Ok(fv)
}

/// One aircraft's sector crossing: pre-flight features and realised overhead.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitRecord {
    pub n_aircraft: usize,
    pub run: usize,
    pub agent: AgentId,
    pub started_in_conflict: bool,
    pub incomplete: bool,
    pub features: FeatureVector,
    pub delta_e: f64,
}

/// Per-feature z-score statistics fit on a training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Features with non-zero training variance; the rest are dropped.
    pub kept: Vec<bool>,
}

const MIN_STD: f64 = 1e-12;

impl NormalizationStats {
    pub fn fit(records: &[FeatureVector]) -> Result<Self> {
        if records.len() < 2 {
            return Err(domain("normalisation needs at least two training records"));
        }
        let n = records.len() as f64;
        let mut mean = vec![0.0; N_FEATURES];
        for r in records {
            for (m, x) in mean.iter_mut().zip(r.0) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; N_FEATURES];
        for r in records {
            for ((v, x), m) in var.iter_mut().zip(r.0).zip(&mean) {
                *v += (x - m).powi(2);
            }
        }
        let std: Vec<f64> = var.iter().map(|v| (v / n).sqrt()).collect();
        let kept: Vec<bool> = std.iter().map(|&s| s > MIN_STD).collect();
        for (i, k) in kept.iter().enumerate() {
            if !k {
                warn!(
                    "feature {} has zero variance in the training split; dropped",
                    FEATURE_NAMES[i]
                );
            }
        }
        Ok(Self { mean, std, kept })
    }

    /// Number of features after dropping constant ones.
    pub fn dim(&self) -> usize {
        self.kept.iter().filter(|k| **k).count()
    }

    pub fn apply(&self, v: &FeatureVector) -> Vec<f64> {
        v.0.iter()
            .enumerate()
            .filter(|(i, _)| self.kept[*i])
            .map(|(i, x)| (x - self.mean[i]) / self.std[i])
            .collect()
    }

    /// Inverse of [`apply`](Self::apply); dropped features come back as their mean.
    pub fn invert(&self, z: &[f64]) -> Result<FeatureVector> {
        if z.len() != self.dim() {
            return Err(domain(format!(
                "expected {} normalised features, got {}",
                self.dim(),
                z.len()
            )));
        }
        let mut out = [0.0; N_FEATURES];
        let mut it = z.iter();
        for i in 0..N_FEATURES {
            out[i] = if self.kept[i] {
                it.next().map(|x| x * self.std[i] + self.mean[i]).unwrap_or(f64::NAN)
            } else {
                self.mean[i]
            };
        }
        Ok(FeatureVector(out))
    }
}

pub fn dataset_header() -> Vec<String> {
    let mut h: Vec<String> = ["n_aircraft", "run", "agent", "started_in_conflict", "incomplete"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    h.extend((1..=N_FEATURES).map(|i| format!("f{i}")));
    h.push("delta_e".into());
    h
}

/// Nine significant digits.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.8e}")
}

pub fn write_records<W: Write>(records: &[TransitRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(dataset_header())?;
    for r in records {
        let mut row = vec![
            r.n_aircraft.to_string(),
            r.run.to_string(),
            r.agent.to_string(),
            (r.started_in_conflict as u8).to_string(),
            (r.incomplete as u8).to_string(),
        ];
        row.extend(r.features.0.iter().map(|&x| fmt_float(x)));
        row.push(fmt_float(r.delta_e));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_dataset(records: &[TransitRecord], path: &Path) -> Result<()> {
    write_records(records, BufWriter::new(File::create(path)?))
}

fn parse_flag(s: &str) -> std::result::Result<bool, String> {
    match s {
        "0" | "false" => Ok(false),
        "1" | "true" => Ok(true),
        _ => Err(format!("expected 0/1 flag, got {s:?}")),
    }
}

pub fn read_records<R: std::io::Read>(input: R) -> Result<Vec<TransitRecord>> {
    let mut rd = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(input);
    let header = rd.headers()?.clone();
    let expected = dataset_header();
    if header.iter().ne(expected.iter().map(String::as_str)) {
        return Err(Error::Data {
            line: 1,
            message: format!("unexpected header {:?}", header.iter().collect::<Vec<_>>()),
        });
    }
    let mut out = Vec::new();
    for row in rd.records() {
        let row = row?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let bad = |message: String| Error::Data { line, message };
        if row.len() != expected.len() {
            return Err(bad(format!("expected {} fields, got {}", expected.len(), row.len())));
        }
        let int = |i: usize| {
            row[i]
                .trim()
                .parse::<usize>()
                .map_err(|e| bad(format!("{}: {e}", expected[i])))
        };
        let float = |i: usize| {
            row[i]
                .trim()
                .parse::<f64>()
                .map_err(|e| bad(format!("{}: {e}", expected[i])))
        };
        let mut features = [0.0; N_FEATURES];
        for (k, f) in features.iter_mut().enumerate() {
            *f = float(5 + k)?;
        }
        let rec = TransitRecord {
            n_aircraft: int(0)?,
            run: int(1)?,
            agent: int(2)?,
            started_in_conflict: parse_flag(row[3].trim()).map_err(bad)?,
            incomplete: parse_flag(row[4].trim()).map_err(bad)?,
            features: FeatureVector(features),
            delta_e: float(5 + N_FEATURES)?,
        };
        if !(rec.delta_e > -1.0) {
            return Err(bad(format!("delta_e must exceed -1, got {}", rec.delta_e)));
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn read_dataset(path: &Path) -> Result<Vec<TransitRecord>> {
    read_records(File::open(path)?)
}
