//! Trained model container and its on-disk format.
//!
//! Layout: 8-byte magic, little-endian `u32` version, `u64` header length,
//! a JSON header, then every tensor as little-endian `f64` in header order.

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use super::infer::GaussianPrediction;
use super::net::{forward, NetConfig, NetParams, TensorSpec};
use super::train::{design, split_records, EpochLog, Split, TrainConfig};
use crate::error::{Error, Result};
use crate::features::{FeatureVector, NormalizationStats, TransitRecord};

pub const MAGIC: &[u8; 8] = b"SKYRCKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub net: NetConfig,
    pub train: TrainConfig,
    pub normalization: NormalizationStats,
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_val_nll: f64,
    pub params: NetParams,
}

#[derive(Serialize, Deserialize)]
struct Header {
    version: u32,
    net: NetConfig,
    train: TrainConfig,
    normalization: NormalizationStats,
    log: Vec<EpochLog>,
    best_epoch: usize,
    best_val_nll: f64,
    tensors: Vec<TensorSpec>,
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            version: VERSION,
            net: self.net.clone(),
            train: self.train.clone(),
            normalization: self.normalization.clone(),
            log: self.log.clone(),
            best_epoch: self.best_epoch,
            best_val_nll: self.best_val_nll,
            tensors: self.params.specs(),
        };
        let json = serde_json::to_vec(&header).map_err(|e| corrupt(e.to_string()))?;
        let mut out = Vec::with_capacity(20 + json.len() + 8 * self.params.n_params());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for s in self.params.slices() {
            for x in s {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(corrupt("not a checkpoint file"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != VERSION {
            return Err(corrupt(format!("unsupported checkpoint version {version}")));
        }
        let len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let body = bytes.get(20..20 + len).ok_or_else(|| corrupt("truncated header"))?;
        let header: Header = serde_json::from_slice(body).map_err(|e| corrupt(format!("bad header: {e}")))?;
        header.net.validate()?;
        let mut params = NetParams::zeros(&header.net);
        if params.specs() != header.tensors {
            return Err(corrupt("tensor table does not match the network configuration"));
        }
        if header.normalization.dim() != header.net.input_dim {
            return Err(corrupt("normalisation statistics do not match the input width"));
        }
        let mut data = &bytes[20 + len..];
        if data.len() != 8 * params.n_params() {
            return Err(corrupt(format!(
                "expected {} parameter bytes, found {}",
                8 * params.n_params(),
                data.len()
            )));
        }
        for s in params.slices_mut() {
            for x in s.iter_mut() {
                *x = f64::from_le_bytes(data[..8].try_into().unwrap());
                data = &data[8..];
            }
        }
        if !params.is_finite() {
            return Err(corrupt("non-finite parameter"));
        }
        Ok(Self {
            net: header.net,
            train: header.train,
            normalization: header.normalization,
            log: header.log,
            best_epoch: header.best_epoch,
            best_val_nll: header.best_val_nll,
            params,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path)?;
        f.write_all(&self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }

    /// Predictive distributions for raw feature vectors.
    pub fn predict(&self, features: &[FeatureVector]) -> Result<Vec<GaussianPrediction>> {
        let d = self.normalization.dim();
        let mut x = Array2::zeros((features.len(), d));
        for (mut row, f) in x.axis_iter_mut(Axis(0)).zip(features) {
            for (dst, v) in row.iter_mut().zip(self.normalization.apply(f)) {
                *dst = v;
            }
        }
        self.predict_normalised(&x)
    }

    fn predict_normalised(&self, x: &Array2<f64>) -> Result<Vec<GaussianPrediction>> {
        let out = forward(&self.params, &self.net, x.view(), None)?;
        Ok(out
            .mu
            .iter()
            .zip(&out.logvar)
            .map(|(&m, &lv)| GaussianPrediction::from_logvar(m, lv))
            .collect())
    }

    pub fn predict_one(&self, features: &FeatureVector) -> Result<GaussianPrediction> {
        Ok(self.predict(std::slice::from_ref(features))?[0])
    }

    /// The train/validation split this checkpoint was fit on.
    pub fn split(&self, records: &[TransitRecord]) -> Result<Split> {
        split_records(records, self.train.train_fraction, self.train.seed)
    }

    /// Mean NLL over `records` (completed transits only).
    pub fn nll(&self, records: &[TransitRecord]) -> Result<f64> {
        let done: Vec<TransitRecord> = records.iter().filter(|r| !r.incomplete).copied().collect();
        let (x, z) = design(&done, &self.normalization);
        let out = forward(&self.params, &self.net, x.view(), None)?;
        super::net::nll_loss(out.mu.view(), out.logvar.view(), z.view())
    }
}
