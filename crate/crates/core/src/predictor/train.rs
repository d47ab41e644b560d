//! AdamW training loop with validation-NLL model selection.

use log::{info, warn};
use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::checkpoint::Checkpoint;
use super::infer::to_z;
use super::net::{forward, loss_and_grad, nll_loss, DropoutMasks, NetConfig, NetParams};
use crate::error::{domain, Error, Result};
use crate::features::{NormalizationStats, TransitRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch_size: usize,
    pub grad_clip_norm: f64,
    pub epochs: usize,
    /// Epochs without validation improvement before stopping; 0 disables.
    pub patience: usize,
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 3e-4,
            weight_decay: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            batch_size: 256,
            grad_clip_norm: 1.0,
            epochs: 300,
            patience: 50,
            train_fraction: 0.8,
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(domain("train_fraction must lie in (0, 1)"));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(domain("batch_size and epochs must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.weight_decay >= 0.0 && self.grad_clip_norm > 0.0) {
            return Err(domain(
                "learning_rate and grad_clip_norm must be positive, weight_decay non-negative",
            ));
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2) && self.eps > 0.0) {
            return Err(domain("Adam betas must lie in [0, 1) and eps must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    /// 0 is the untrained network.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_nll: f64,
    pub grad_norm: f64,
}

/// Completed transits split into training and validation parts.
#[derive(Debug, Clone)]
pub struct Split {
    pub train: Vec<TransitRecord>,
    pub validation: Vec<TransitRecord>,
}

/// Deterministic shuffle-and-cut of the completed transits in `records`.
pub fn split_records(records: &[TransitRecord], train_fraction: f64, seed: u64) -> Result<Split> {
    let usable: Vec<&TransitRecord> = records.iter().filter(|r| !r.incomplete).collect();
    if usable.len() < 4 {
        return Err(domain(format!(
            "need at least 4 completed transits, got {}",
            usable.len()
        )));
    }
    let mut idx: Vec<usize> = (0..usable.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    idx.shuffle(&mut rng);
    let n_train = ((usable.len() as f64 * train_fraction).round() as usize).clamp(2, usable.len() - 1);
    Ok(Split {
        train: idx[..n_train].iter().map(|&i| *usable[i]).collect(),
        validation: idx[n_train..].iter().map(|&i| *usable[i]).collect(),
    })
}

/// Normalised design matrix and z targets.
pub fn design(records: &[TransitRecord], stats: &NormalizationStats) -> (Array2<f64>, Array1<f64>) {
    let d = stats.dim();
    let mut x = Array2::zeros((records.len(), d));
    for (mut row, r) in x.axis_iter_mut(Axis(0)).zip(records) {
        row.assign(&Array1::from(stats.apply(&r.features)));
    }
    let z = records.iter().map(|r| to_z(r.delta_e)).collect();
    (x, z)
}

struct AdamW {
    m: NetParams,
    v: NetParams,
    decay: Vec<bool>,
    t: i32,
}

impl AdamW {
    fn new(params: &NetParams) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
            decay: params.specs().iter().map(|s| s.decay).collect(),
            t: 0,
        }
    }

    fn step(&mut self, params: &mut NetParams, grad: &NetParams, cfg: &TrainConfig) {
        self.t += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.t);
        let bc2 = 1.0 - cfg.beta2.powi(self.t);
        let lr = cfg.learning_rate;
        for ((((p, g), m), v), decay) in params
            .slices_mut()
            .into_iter()
            .zip(grad.slices())
            .zip(self.m.slices_mut())
            .zip(self.v.slices_mut())
            .zip(&self.decay)
        {
            for i in 0..p.len() {
                if *decay {
                    p[i] *= 1.0 - lr * cfg.weight_decay;
                }
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
                p[i] -= lr * (m[i] / bc1) / ((v[i] / bc2).sqrt() + cfg.eps);
            }
        }
    }
}

/// Scales `grad` to at most `max_norm`; returns the norm before clipping.
pub fn clip_grad_norm(grad: &mut NetParams, max_norm: f64) -> f64 {
    let norm = grad.global_norm();
    if norm > max_norm {
        let scale = max_norm / (norm + 1e-6);
        for s in grad.slices_mut() {
            s.iter_mut().for_each(|x| *x *= scale);
        }
    }
    norm
}

fn evaluate_nll(params: &NetParams, net: &NetConfig, x: &Array2<f64>, z: &Array1<f64>) -> Result<f64> {
    let out = forward(params, net, x.view(), None)?;
    nll_loss(out.mu.view(), out.logvar.view(), z.view())
}

/// Trains on the completed transits of `records` and returns the checkpoint
/// with the lowest validation NLL. `net.input_dim` is replaced by the number
/// of features that survive normalisation.
pub fn train(records: &[TransitRecord], net: &NetConfig, cfg: &TrainConfig) -> Result<Checkpoint> {
    cfg.validate()?;
    let split = split_records(records, cfg.train_fraction, cfg.seed)?;
    if split.train.len() + split.validation.len() < 1000 {
        warn!(
            "training on only {} records",
            split.train.len() + split.validation.len()
        );
    }
    let stats = NormalizationStats::fit(&split.train.iter().map(|r| r.features).collect::<Vec<_>>())?;
    let net = NetConfig {
        input_dim: stats.dim(),
        ..net.clone()
    };
    net.validate()?;
    let (xt, zt) = design(&split.train, &stats);
    let (xv, zv) = design(&split.validation, &stats);

    let stream = |s: u64| {
        let mut r = ChaCha8Rng::seed_from_u64(cfg.seed);
        r.set_stream(s);
        r
    };
    let mut init_rng = stream(2);
    let mut order_rng = stream(3);
    let mut dropout_rng = stream(4);

    let mut params = NetParams::init(&net, &mut init_rng);
    let mut opt = AdamW::new(&params);
    let initial = evaluate_nll(&params, &net, &xv, &zv)?;
    let mut log = vec![EpochLog {
        epoch: 0,
        train_loss: evaluate_nll(&params, &net, &xt, &zt)?,
        val_nll: initial,
        grad_norm: 0.0,
    }];
    let mut best = (0usize, initial, params.clone());
    let mut order: Vec<usize> = (0..xt.nrows()).collect();

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut order_rng);
        let mut loss_sum = 0.0;
        let mut norm_sum = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let xb = xt.select(Axis(0), chunk);
            let zb = zt.select(Axis(0), chunk);
            let masks = (net.dropout > 0.0).then(|| DropoutMasks::sample(&net, chunk.len(), &mut dropout_rng));
            let (loss, mut grad) = loss_and_grad(&params, &net, xb.view(), zb.view(), masks.as_ref())?;
            if !loss.is_finite() || !grad.is_finite() {
                return Err(Error::NonFinite {
                    epoch,
                    message: format!("batch {batches}: loss {loss}, gradient norm {}", grad.global_norm()),
                });
            }
            norm_sum += clip_grad_norm(&mut grad, cfg.grad_clip_norm);
            opt.step(&mut params, &grad, cfg);
            loss_sum += loss * chunk.len() as f64;
            batches += 1;
        }
        let val_nll = evaluate_nll(&params, &net, &xv, &zv)?;
        if !val_nll.is_finite() {
            return Err(Error::NonFinite {
                epoch,
                message: format!("validation NLL {val_nll}"),
            });
        }
        let entry = EpochLog {
            epoch,
            train_loss: loss_sum / xt.nrows() as f64,
            val_nll,
            grad_norm: norm_sum / batches as f64,
        };
        if epoch % 10 == 0 || epoch == 1 {
            info!(
                "epoch {epoch}: train {:.5} val {:.5} |g| {:.3}",
                entry.train_loss, entry.val_nll, entry.grad_norm
            );
        }
        log.push(entry);
        if val_nll < best.1 {
            best = (epoch, val_nll, params.clone());
        } else if cfg.patience > 0 && epoch - best.0 >= cfg.patience {
            info!("no improvement for {} epochs, stopping at {epoch}", cfg.patience);
            break;
        }
    }
    info!("best validation NLL {:.5} at epoch {}", best.1, best.0);
    Ok(Checkpoint {
        net,
        train: cfg.clone(),
        normalization: stats,
        log,
        best_epoch: best.0,
        best_val_nll: best.1,
        params: best.2,
    })
}
