//! Residual MLP with Gaussian output heads, forward and reverse passes.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub n_blocks: usize,
    pub ffn_inner_dim: usize,
    pub dropout: f64,
    pub logvar_min: f64,
    pub logvar_max: f64,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            input_dim: 13,
            hidden_dim: 128,
            n_blocks: 4,
            ffn_inner_dim: 256,
            dropout: 0.05,
            logvar_min: -8.0,
            logvar_max: 3.0,
        }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden_dim == 0 || self.n_blocks == 0 || self.ffn_inner_dim == 0 {
            return Err(domain("network dimensions and block count must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(domain("dropout must lie in [0, 1)"));
        }
        if !(self.logvar_min < self.logvar_max) {
            return Err(domain("log-variance clamp must satisfy min < max"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    /// (out, in)
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Linear {
    fn zeros(out: usize, inp: usize) -> Self {
        Self {
            w: Array2::zeros((out, inp)),
            b: Array1::zeros(out),
        }
    }

    fn glorot<R: Rng>(out: usize, inp: usize, rng: &mut R) -> Self {
        let a = (6.0 / (inp + out) as f64).sqrt();
        Self {
            w: Array2::from_shape_simple_fn((out, inp), || rng.random_range(-a..=a)),
            b: Array1::zeros(out),
        }
    }

    /// `x · Wᵀ + b` for a batch of rows.
    fn apply(&self, x: ArrayView2<f64>) -> Array2<f64> {
        x.dot(&self.w.t()) + &self.b
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub ffn1: Linear,
    pub ffn2: Linear,
    pub ln_gain: Array1<f64>,
    pub ln_shift: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Head {
    pub w: Array1<f64>,
    pub b: Array1<f64>,
}

impl Head {
    fn zeros(d: usize) -> Self {
        Self {
            w: Array1::zeros(d),
            b: Array1::zeros(1),
        }
    }

    fn apply(&self, h: ArrayView2<f64>) -> Array1<f64> {
        h.dot(&self.w) + self.b[0]
    }
}

/// All trainable tensors. Gradients and optimiser moments reuse this type.
#[derive(Debug, Clone, PartialEq)]
pub struct NetParams {
    pub embed: Linear,
    pub blocks: Vec<Block>,
    pub head_mu: Head,
    pub head_logvar: Head,
}

/// Name, shape and decay flag of one tensor, in [`NetParams::slices`] order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub decay: bool,
}

impl NetParams {
    pub fn zeros(cfg: &NetConfig) -> Self {
        let d = cfg.hidden_dim;
        Self {
            embed: Linear::zeros(d, cfg.input_dim),
            blocks: (0..cfg.n_blocks)
                .map(|_| Block {
                    ffn1: Linear::zeros(cfg.ffn_inner_dim, d),
                    ffn2: Linear::zeros(d, cfg.ffn_inner_dim),
                    ln_gain: Array1::zeros(d),
                    ln_shift: Array1::zeros(d),
                })
                .collect(),
            head_mu: Head::zeros(d),
            head_logvar: Head::zeros(d),
        }
    }

    /// Glorot-uniform weights, unit LayerNorm gains, and a log-variance
    /// head that starts at `-2`.
    pub fn init<R: Rng>(cfg: &NetConfig, rng: &mut R) -> Self {
        let d = cfg.hidden_dim;
        let embed = Linear::glorot(d, cfg.input_dim, rng);
        let blocks = (0..cfg.n_blocks)
            .map(|_| Block {
                ffn1: Linear::glorot(cfg.ffn_inner_dim, d, rng),
                ffn2: Linear::glorot(d, cfg.ffn_inner_dim, rng),
                ln_gain: Array1::ones(d),
                ln_shift: Array1::zeros(d),
            })
            .collect();
        let a = (6.0 / (d + 1) as f64).sqrt();
        let head_mu = Head {
            w: Array1::from_shape_simple_fn(d, || rng.random_range(-a..=a)),
            b: Array1::zeros(1),
        };
        let head_logvar = Head {
            w: Array1::zeros(d),
            b: Array1::from_elem(1, -2.0),
        };
        Self {
            embed,
            blocks,
            head_mu,
            head_logvar,
        }
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for s in z.slices_mut() {
            s.fill(0.0);
        }
        z
    }

    pub fn specs(&self) -> Vec<TensorSpec> {
        let spec = |name: String, shape: &[usize], decay| TensorSpec {
            name,
            shape: shape.to_vec(),
            decay,
        };
        let mut v = vec![
            spec("embed.w".into(), self.embed.w.shape(), true),
            spec("embed.b".into(), self.embed.b.shape(), false),
        ];
        for (i, b) in self.blocks.iter().enumerate() {
            v.push(spec(format!("block{i}.ffn1.w"), b.ffn1.w.shape(), true));
            v.push(spec(format!("block{i}.ffn1.b"), b.ffn1.b.shape(), false));
            v.push(spec(format!("block{i}.ffn2.w"), b.ffn2.w.shape(), true));
            v.push(spec(format!("block{i}.ffn2.b"), b.ffn2.b.shape(), false));
            v.push(spec(format!("block{i}.ln.gain"), b.ln_gain.shape(), false));
            v.push(spec(format!("block{i}.ln.shift"), b.ln_shift.shape(), false));
        }
        v.push(spec("head_mu.w".into(), self.head_mu.w.shape(), true));
        v.push(spec("head_mu.b".into(), self.head_mu.b.shape(), false));
        v.push(spec("head_logvar.w".into(), self.head_logvar.w.shape(), true));
        v.push(spec("head_logvar.b".into(), self.head_logvar.b.shape(), false));
        v
    }

    pub fn slices(&self) -> Vec<&[f64]> {
        let mut v: Vec<&[f64]> = vec![self.embed.w.as_slice().unwrap(), self.embed.b.as_slice().unwrap()];
        for b in &self.blocks {
            v.push(b.ffn1.w.as_slice().unwrap());
            v.push(b.ffn1.b.as_slice().unwrap());
            v.push(b.ffn2.w.as_slice().unwrap());
            v.push(b.ffn2.b.as_slice().unwrap());
            v.push(b.ln_gain.as_slice().unwrap());
            v.push(b.ln_shift.as_slice().unwrap());
        }
        v.push(self.head_mu.w.as_slice().unwrap());
        v.push(self.head_mu.b.as_slice().unwrap());
        v.push(self.head_logvar.w.as_slice().unwrap());
        v.push(self.head_logvar.b.as_slice().unwrap());
        v
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v: Vec<&mut [f64]> = vec![
            self.embed.w.as_slice_mut().unwrap(),
            self.embed.b.as_slice_mut().unwrap(),
        ];
        for b in &mut self.blocks {
            v.push(b.ffn1.w.as_slice_mut().unwrap());
            v.push(b.ffn1.b.as_slice_mut().unwrap());
            v.push(b.ffn2.w.as_slice_mut().unwrap());
            v.push(b.ffn2.b.as_slice_mut().unwrap());
            v.push(b.ln_gain.as_slice_mut().unwrap());
            v.push(b.ln_shift.as_slice_mut().unwrap());
        }
        v.push(self.head_mu.w.as_slice_mut().unwrap());
        v.push(self.head_mu.b.as_slice_mut().unwrap());
        v.push(self.head_logvar.w.as_slice_mut().unwrap());
        v.push(self.head_logvar.b.as_slice_mut().unwrap());
        v
    }

    pub fn n_params(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    pub fn global_norm(&self) -> f64 {
        self.slices()
            .iter()
            .flat_map(|s| s.iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|x| x.is_finite()))
    }

    fn check(&self, cfg: &NetConfig) -> Result<()> {
        let expected = NetParams::zeros(cfg).specs();
        if self.specs() != expected {
            return Err(domain("parameter shapes do not match the network configuration"));
        }
        Ok(())
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

pub fn silu_grad(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

/// Per-batch Gaussian outputs in z-space.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchOutput {
    pub mu: Array1<f64>,
    /// Clamped log-variance.
    pub logvar: Array1<f64>,
    /// Rows whose raw log-variance fell outside the clamp.
    pub clamped: Vec<bool>,
}

/// Dropout masks for one training pass, already scaled by `1/(1-p)`.
#[derive(Debug, Clone)]
pub struct DropoutMasks {
    embed: Array2<f64>,
    blocks: Vec<Array2<f64>>,
}

impl DropoutMasks {
    pub fn sample<R: Rng>(cfg: &NetConfig, batch: usize, rng: &mut R) -> Self {
        let keep = 1.0 - cfg.dropout;
        let mut draw = || {
            Array2::from_shape_simple_fn((batch, cfg.hidden_dim), || {
                if cfg.dropout == 0.0 || rng.random::<f64>() < keep {
                    1.0 / keep
                } else {
                    0.0
                }
            })
        };
        let embed = draw();
        let blocks = (0..cfg.n_blocks).map(|_| draw()).collect();
        Self { embed, blocks }
    }
}

struct BlockCache {
    h_in: Array2<f64>,
    u: Array2<f64>,
    s: Array2<f64>,
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
}

struct Cache {
    a0: Array2<f64>,
    blocks: Vec<BlockCache>,
    h_out: Array2<f64>,
}

fn layer_norm(r: &Array2<f64>, gain: &Array1<f64>, shift: &Array1<f64>) -> (Array2<f64>, Array2<f64>, Array1<f64>) {
    let d = r.ncols() as f64;
    let mean = r.sum_axis(Axis(1)) / d;
    let centred = r - &mean.view().insert_axis(Axis(1));
    let var = centred.mapv(|x| x * x).sum_axis(Axis(1)) / d;
    let inv_std = var.mapv(|v| 1.0 / (v + LN_EPS).sqrt());
    let xhat = centred * &inv_std.view().insert_axis(Axis(1));
    let y = &xhat * gain + shift;
    (y, xhat, inv_std)
}

fn run(
    params: &NetParams,
    cfg: &NetConfig,
    x: ArrayView2<f64>,
    masks: Option<&DropoutMasks>,
) -> Result<(BatchOutput, Cache)> {
    if x.ncols() != cfg.input_dim {
        return Err(domain(format!(
            "expected {} input features, got {}",
            cfg.input_dim,
            x.ncols()
        )));
    }
    params.check(cfg)?;
    let a0 = params.embed.apply(x);
    let mut h = a0.mapv(silu);
    if let Some(m) = masks {
        h *= &m.embed;
    }
    let mut caches = Vec::with_capacity(params.blocks.len());
    for (k, b) in params.blocks.iter().enumerate() {
        let u = b.ffn1.apply(h.view());
        let s = u.mapv(silu);
        let mut f = b.ffn2.apply(s.view());
        if let Some(m) = masks {
            f *= &m.blocks[k];
        }
        let r = &h + &f;
        let (y, xhat, inv_std) = layer_norm(&r, &b.ln_gain, &b.ln_shift);
        caches.push(BlockCache {
            h_in: h,
            u,
            s,
            xhat,
            inv_std,
        });
        h = y;
    }
    let mu = params.head_mu.apply(h.view());
    let raw = params.head_logvar.apply(h.view());
    let clamped = raw.iter().map(|&v| v < cfg.logvar_min || v > cfg.logvar_max).collect();
    let logvar = raw.mapv(|v| v.clamp(cfg.logvar_min, cfg.logvar_max));
    Ok((
        BatchOutput { mu, logvar, clamped },
        Cache {
            a0,
            blocks: caches,
            h_out: h,
        },
    ))
}

/// Forward pass over a batch of normalised feature rows. Dropout is applied
/// only when `masks` is given.
pub fn forward(
    params: &NetParams,
    cfg: &NetConfig,
    x: ArrayView2<f64>,
    masks: Option<&DropoutMasks>,
) -> Result<BatchOutput> {
    run(params, cfg, x, masks).map(|(o, _)| o)
}

/// Mean Gaussian negative log-likelihood without the constant term.
pub fn nll_loss(mu: ArrayView1<f64>, logvar: ArrayView1<f64>, z: ArrayView1<f64>) -> Result<f64> {
    if z.is_empty() || mu.len() != z.len() || logvar.len() != z.len() {
        return Err(domain("loss needs a nonempty batch with matching lengths"));
    }
    let mut total = 0.0;
    Zip::from(&mu).and(&logvar).and(&z).for_each(|&m, &lv, &t| {
        total += 0.5 * (lv + (t - m).powi(2) * (-lv).exp());
    });
    Ok(total / z.len() as f64)
}

/// Loss and its exact gradient for one batch.
pub fn loss_and_grad(
    params: &NetParams,
    cfg: &NetConfig,
    x: ArrayView2<f64>,
    z: ArrayView1<f64>,
    masks: Option<&DropoutMasks>,
) -> Result<(f64, NetParams)> {
    let (out, cache) = run(params, cfg, x, masks)?;
    let loss = nll_loss(out.mu.view(), out.logvar.view(), z)?;
    let n = z.len() as f64;

    let prec = out.logvar.mapv(|lv| (-lv).exp());
    let resid = &z - &out.mu;
    let dmu = -(&resid * &prec) / n;
    let mut dlv = (1.0 - &resid * &resid * &prec) * 0.5 / n;
    for (g, c) in dlv.iter_mut().zip(&out.clamped) {
        if *c {
            *g = 0.0;
        }
    }

    let mut grad = params.zeros_like();
    let h = &cache.h_out;
    grad.head_mu.w = h.t().dot(&dmu);
    grad.head_mu.b[0] = dmu.sum();
    grad.head_logvar.w = h.t().dot(&dlv);
    grad.head_logvar.b[0] = dlv.sum();
    let mut dh = dmu
        .view()
        .insert_axis(Axis(1))
        .dot(&params.head_mu.w.view().insert_axis(Axis(0)))
        + dlv
            .view()
            .insert_axis(Axis(1))
            .dot(&params.head_logvar.w.view().insert_axis(Axis(0)));

    for (k, (b, c)) in params.blocks.iter().zip(&cache.blocks).enumerate().rev() {
        let g = &mut grad.blocks[k];
        g.ln_gain = (&dh * &c.xhat).sum_axis(Axis(0));
        g.ln_shift = dh.sum_axis(Axis(0));
        let dxhat = &dh * &b.ln_gain;
        let d = dxhat.ncols() as f64;
        let m1 = dxhat.sum_axis(Axis(1)) / d;
        let m2 = (&dxhat * &c.xhat).sum_axis(Axis(1)) / d;
        let dr = (dxhat - &m1.view().insert_axis(Axis(1)) - &c.xhat * &m2.view().insert_axis(Axis(1)))
            * &c.inv_std.view().insert_axis(Axis(1));
        let mut df = dr.clone();
        if let Some(m) = masks {
            df *= &m.blocks[k];
        }
        g.ffn2.w = df.t().dot(&c.s);
        g.ffn2.b = df.sum_axis(Axis(0));
        let mut du = df.dot(&b.ffn2.w);
        Zip::from(&mut du).and(&c.u).for_each(|d, &u| *d *= silu_grad(u));
        g.ffn1.w = du.t().dot(&c.h_in);
        g.ffn1.b = du.sum_axis(Axis(0));
        dh = dr + du.dot(&b.ffn1.w);
    }

    let mut da0 = dh;
    if let Some(m) = masks {
        da0 *= &m.embed;
    }
    Zip::from(&mut da0).and(&cache.a0).for_each(|d, &a| *d *= silu_grad(a));
    grad.embed.w = da0.t().dot(&x);
    grad.embed.b = da0.sum_axis(Axis(0));
    Ok((loss, grad))
}
