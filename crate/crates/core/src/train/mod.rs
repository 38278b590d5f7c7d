//! Desk-scale supervised training.
//!
//! Targets live in the gamma domain `(y / max y)^0.45`; the network never
//! sees a linear-domain loss. Each iteration samples patch pairs, degrades
//! the SDR side on the fly, and takes one Adam step.

mod gamma;
mod loss;
mod optim;

use std::fmt;

use lhdr_tensor::{Eval, Tape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use gamma::{postprocess_gamma, preprocess_gamma, GAMMA};
pub use loss::{loss, LossTerms};
pub use optim::{adam_step, kaiming_init, lr_schedule, AdamState};

use crate::degrade::{conventional_degrade, DegradationConfig};
use crate::image::Image;
use crate::imageio::sample_offsets;
use crate::kv::KeyValues;
use crate::net::{lhdr_forward, Checkpoint, Model, ModelConfig};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lr0: f64,
    pub lr_half_every: u64,
    pub batch: usize,
    pub patch_size: usize,
    pub max_iters: u64,
    pub loss_grad_weight: f64,
    pub gamma: f64,
    pub seed: u64,
    /// Apply the conventional degradation chain to every sampled SDR patch.
    pub degrade: bool,
    /// Sampling weight per data source; empty means uniform over pairs.
    pub source_weights: Vec<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr0: 2e-4,
            lr_half_every: 250_000,
            batch: 1,
            patch_size: 64,
            max_iters: 1000,
            loss_grad_weight: 0.1,
            gamma: GAMMA,
            seed: 0,
            degrade: true,
            source_weights: Vec::new(),
        }
    }
}

const KEYS: [&str; 10] = [
    "lr0",
    "lr_half_every",
    "batch",
    "patch_size",
    "max_iters",
    "loss_grad_weight",
    "gamma",
    "seed",
    "degrade",
    "source_weights",
];

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return Err(Error::config("lr0 must be positive"));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::config("gamma must lie in (0, 1)"));
        }
        if !(self.loss_grad_weight >= 0.0 && self.loss_grad_weight.is_finite()) {
            return Err(Error::config("loss_grad_weight must be non-negative"));
        }
        if self.batch == 0 || self.patch_size == 0 || self.lr_half_every == 0 {
            return Err(Error::config("batch, patch_size and lr_half_every must be positive"));
        }
        if self.source_weights.iter().any(|w| !(*w >= 0.0 && w.is_finite()))
            || (!self.source_weights.is_empty() && self.source_weights.iter().sum::<f64>() <= 0.0)
        {
            return Err(Error::config("source_weights must be non-negative with a positive sum"));
        }
        Ok(())
    }

    pub fn to_kv(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.set("lr0", self.lr0);
        kv.set("lr_half_every", self.lr_half_every);
        kv.set("batch", self.batch);
        kv.set("patch_size", self.patch_size);
        kv.set("max_iters", self.max_iters);
        kv.set("loss_grad_weight", self.loss_grad_weight);
        kv.set("gamma", self.gamma);
        kv.set("seed", self.seed);
        kv.set("degrade", self.degrade);
        let w: Vec<_> = self.source_weights.iter().map(|w| w.to_string()).collect();
        kv.set("source_weights", w.join(","));
        kv
    }

    /// Reads the training keys, ignoring everything else.
    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        let mut c = TrainConfig::default();
        kv.read_into("lr0", &mut c.lr0)?;
        kv.read_into("lr_half_every", &mut c.lr_half_every)?;
        kv.read_into("batch", &mut c.batch)?;
        kv.read_into("patch_size", &mut c.patch_size)?;
        kv.read_into("max_iters", &mut c.max_iters)?;
        kv.read_into("loss_grad_weight", &mut c.loss_grad_weight)?;
        kv.read_into("gamma", &mut c.gamma)?;
        kv.read_into("seed", &mut c.seed)?;
        kv.read_into("degrade", &mut c.degrade)?;
        if let Some(s) = kv.get_str("source_weights") {
            c.source_weights = s
                .split(',')
                .filter(|t| !t.trim().is_empty())
                .map(|t| t.trim().parse::<f64>().map_err(|e| Error::config(format!("source_weights: {e}"))))
                .collect::<Result<_>>()?;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn keys() -> &'static [&'static str] {
        &KEYS
    }
}

/// A linear HDR image and its clean SDR rendering, same size.
#[derive(Clone, Debug)]
pub struct TrainPair {
    pub hdr: Image,
    pub sdr: Image,
    pub source: usize,
}

impl TrainPair {
    pub fn new(hdr: Image, sdr: Image) -> Result<Self> {
        if !hdr.same_size(&sdr) {
            return Err(Error::invalid(format!(
                "HDR {}x{} and SDR {}x{} differ in size",
                hdr.width(),
                hdr.height(),
                sdr.width(),
                sdr.height()
            )));
        }
        Ok(TrainPair { hdr, sdr, source: 0 })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossRecord {
    pub iter: u64,
    pub lr: f64,
    pub l1: f64,
    pub lg: f64,
    pub total: f64,
}

impl fmt::Display for LossRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}, {:e}, {:.6}, {:.6}, {:.6}", self.iter, self.lr, self.l1, self.lg, self.total)
    }
}

pub fn loss_log_text(records: &[LossRecord]) -> String {
    let mut s = String::from("# iter, lr, l1, lg, total\n");
    for r in records {
        s.push_str(&format!("{r}\n"));
    }
    s
}

pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub log: Vec<LossRecord>,
}

/// One training batch: stacked degraded SDR inputs and gamma-domain targets.
pub struct Batch {
    pub input: Tensor<f32>,
    pub target: Tensor<f32>,
}

fn pick_pair<R: Rng + ?Sized>(data: &[TrainPair], weights: &[f64], rng: &mut R) -> usize {
    if weights.is_empty() {
        return rng.random_range(0..data.len());
    }
    let total: f64 = data.iter().map(|p| weights.get(p.source).copied().unwrap_or(0.0)).sum();
    let mut r = rng.random_range(0.0..total);
    for (i, p) in data.iter().enumerate() {
        r -= weights.get(p.source).copied().unwrap_or(0.0);
        if r < 0.0 {
            return i;
        }
    }
    data.len() - 1
}

pub fn sample_batch<R: Rng + ?Sized>(
    data: &[TrainPair],
    cfg: &TrainConfig,
    dcfg: &DegradationConfig,
    rng: &mut R,
) -> Result<Batch> {
    let mut inputs = Vec::with_capacity(cfg.batch);
    let mut targets = Vec::with_capacity(cfg.batch);
    let ps = cfg.patch_size;
    for _ in 0..cfg.batch {
        let pair = &data[pick_pair(data, &cfg.source_weights, rng)];
        let (x, y) = sample_offsets(pair.hdr.width(), pair.hdr.height(), ps, 1, rng)
            .ok_or_else(|| Error::invalid("image smaller than patch_size"))?[0];
        let hdr = pair.hdr.crop(x, y, ps, ps)?;
        let mut sdr = pair.sdr.crop(x, y, ps, ps)?;
        if cfg.degrade {
            sdr = conventional_degrade(&sdr, dcfg, rng)?.0;
        }
        let (target, _) = preprocess_gamma(&hdr, cfg.gamma)?;
        inputs.push(sdr.to_tensor());
        targets.push(target.to_tensor());
    }
    Ok(Batch {
        input: Tensor::stack_batch(&inputs)?,
        target: Tensor::stack_batch(&targets)?,
    })
}

/// Forward, loss and backward on one batch. Returns the loss terms and the
/// parameter gradients (weights then biases).
pub fn compute_gradients(model: &Model, batch: &Batch, grad_weight: f64) -> Result<((f64, f64, f64), Vec<Tensor<f32>>)> {
    let mut tape = Tape::<f32>::new();
    let p = model.bind(&mut tape);
    let pred = lhdr_forward(&mut tape, model, &p, &batch.input)?;
    let target = tape.leaf(batch.target.clone(), false);
    let terms = loss(&mut tape, &pred, &target, grad_weight)?;
    let scalar = |v| tape.get(v).data()[0] as f64;
    let values = (scalar(terms.l1), scalar(terms.lg), scalar(terms.total));
    let mut grads = tape.backward(terms.total)?;
    let out = p
        .weights
        .iter()
        .chain(&p.biases)
        .map(|&v| grads.take(v).unwrap_or_else(|| Tensor::zeros(tape.get(v).dims())))
        .collect();
    Ok((values, out))
}

/// Mean loss over whole images of `data` with undegraded inputs. Unlike the
/// training log this is free of sampling noise, so two models can be
/// compared on it directly.
pub fn dataset_loss(model: &Model, data: &[TrainPair], cfg: &TrainConfig) -> Result<LossRecord> {
    if data.is_empty() {
        return Err(Error::invalid("no image pairs to evaluate"));
    }
    let p = model.bind(&mut Eval);
    let (mut l1, mut lg, mut total) = (0.0, 0.0, 0.0);
    for pair in data {
        let (target, _) = preprocess_gamma(&pair.hdr, cfg.gamma)?;
        let pred: Tensor<f32> = lhdr_forward(&mut Eval, model, &p, &pair.sdr.to_tensor())?;
        let t = loss(&mut Eval, &pred, &target.to_tensor(), cfg.loss_grad_weight)?;
        l1 += t.l1.data()[0] as f64;
        lg += t.lg.data()[0] as f64;
        total += t.total.data()[0] as f64;
    }
    let n = data.len() as f64;
    Ok(LossRecord {
        iter: 0,
        lr: 0.0,
        l1: l1 / n,
        lg: lg / n,
        total: total / n,
    })
}

fn checkpoint_meta(ck: &mut Checkpoint, cfg: &TrainConfig, state: &AdamState) {
    ck.meta.set("adam.beta1", state.beta1);
    ck.meta.set("adam.beta2", state.beta2);
    ck.meta.set("adam.eps", state.eps);
    ck.meta.set("train.iterations", state.step);
    for (k, v) in cfg.to_kv().iter() {
        ck.meta.set(&format!("train.{k}"), v);
    }
}

/// Trains from a Kaiming initialization seeded by `cfg.seed`.
pub fn train_loop(
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    dcfg: &DegradationConfig,
    data: &[TrainPair],
    on_iter: impl FnMut(&LossRecord),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let model = kaiming_init(model_cfg, &mut rng)?;
    train_model(model, cfg, dcfg, data, &mut rng, on_iter)
}

/// Continues training `model` with the caller's generator.
pub fn train_model<R: Rng + ?Sized>(
    mut model: Model,
    cfg: &TrainConfig,
    dcfg: &DegradationConfig,
    data: &[TrainPair],
    rng: &mut R,
    mut on_iter: impl FnMut(&LossRecord),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::invalid("training needs at least one image pair"));
    }
    let min = cfg.patch_size.max(model.config().size_multiple());
    if let Some(p) = data.iter().find(|p| p.hdr.width() < min || p.hdr.height() < min) {
        return Err(Error::invalid(format!(
            "{}x{} image is smaller than the {min}px patch size",
            p.hdr.width(),
            p.hdr.height()
        )));
    }
    let mut state = AdamState::new(&model);
    let mut log = Vec::with_capacity(cfg.max_iters as usize);
    for iter in 0..cfg.max_iters {
        let lr = lr_schedule(iter, cfg.lr0, cfg.lr_half_every);
        let batch = sample_batch(data, cfg, dcfg, rng)?;
        let ((l1, lg, total), grads) = compute_gradients(&model, &batch, cfg.loss_grad_weight)?;
        if !total.is_finite() {
            return Err(Error::NonFinite {
                what: "loss",
                iteration: iter as usize,
            });
        }
        adam_step(&mut model, &grads, &mut state, lr).map_err(|e| match e {
            Error::NonFinite { what, .. } => Error::NonFinite {
                what,
                iteration: iter as usize,
            },
            e => e,
        })?;
        let rec = LossRecord { iter, lr, l1, lg, total };
        on_iter(&rec);
        log.push(rec);
    }
    let mut checkpoint = Checkpoint::new(model);
    checkpoint_meta(&mut checkpoint, cfg, &state);
    Ok(TrainOutcome { checkpoint, log })
}
