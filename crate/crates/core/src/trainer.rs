//! SGD training with gradient accumulation over whole sequences, scene
//! splits and resumable checkpoints.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::diffcore::{reparameterize, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::evaluator::{evaluate_dataset, EvalOptions};
use crate::kv::KeyValues;
use crate::model::{
    decode, prior_forward, recog_forward, CvaeModel, GraphInput, Mode, ModelConfig, ParamStore, ParamVars, Precision,
};
use crate::objective::{total_loss, AnnealSchedule, LossReport, MetricsLog};
use crate::trajdata::{to_displacements, SequenceWindow};

/// Hyperparameters of a training run.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Sequences whose gradients are accumulated per SGD step.
    pub batch_size: usize,
    pub lr_initial: f64,
    pub lr_after: f64,
    /// First epoch index trained with `lr_after`.
    pub lr_switch_epoch: usize,
    pub seed: u64,
    pub latent_length: usize,
    pub held_out_scene: Option<String>,
    /// KL weight increase per epoch.
    pub kl_slope: f64,
    /// Epoch from which the KL weight stays constant.
    pub cap_epochs: usize,
    /// Rescales a step whose gradient norm exceeds this; 0 disables.
    pub grad_clip: f64,
    /// Validation cadence in epochs; 0 disables.
    pub validate_every: usize,
    /// Samples per window during validation.
    pub validate_k: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 250,
            batch_size: 128,
            lr_initial: 0.01,
            lr_after: 0.002,
            lr_switch_epoch: 150,
            seed: 0,
            latent_length: 20,
            held_out_scene: None,
            kl_slope: 2e-5,
            cap_epochs: 250,
            grad_clip: 10.0,
            validate_every: 10,
            validate_k: 20,
        }
    }
}

const CONFIG_KEYS: [&str; 13] = [
    "epochs",
    "batch_size",
    "lr_initial",
    "lr_after",
    "lr_switch_epoch",
    "seed",
    "latent_length",
    "held_out_scene",
    "kl_slope",
    "cap_epochs",
    "grad_clip",
    "validate_every",
    "validate_k",
];

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be positive".into()));
        }
        if self.lr_switch_epoch >= self.epochs {
            return Err(Error::Config(format!(
                "lr_switch_epoch {} must be below epochs {}",
                self.lr_switch_epoch, self.epochs
            )));
        }
        let rates = [self.lr_initial, self.lr_after, self.kl_slope, self.grad_clip];
        if rates.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Config("rates, kl_slope and grad_clip must be finite and nonnegative".into()));
        }
        if self.latent_length == 0 || self.validate_k == 0 {
            return Err(Error::Config("latent_length and validate_k must be positive".into()));
        }
        Ok(())
    }

    pub fn anneal(&self) -> AnnealSchedule {
        AnnealSchedule { slope: self.kl_slope, cap_epochs: self.cap_epochs as i64 }
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig::with_latent_length(self.latent_length)
    }

    /// Keys as named by the struct fields; unknown keys are rejected and
    /// absent ones keep their defaults.
    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        if let Some(k) = kv.keys().find(|k| !CONFIG_KEYS.contains(k)) {
            return Err(Error::Config(format!("unknown config key {k:?}")));
        }
        let d = Self::default();
        let cfg = Self {
            epochs: kv.get("epochs")?.unwrap_or(d.epochs),
            batch_size: kv.get("batch_size")?.unwrap_or(d.batch_size),
            lr_initial: kv.get("lr_initial")?.unwrap_or(d.lr_initial),
            lr_after: kv.get("lr_after")?.unwrap_or(d.lr_after),
            lr_switch_epoch: kv.get("lr_switch_epoch")?.unwrap_or(d.lr_switch_epoch),
            seed: kv.get("seed")?.unwrap_or(d.seed),
            latent_length: kv.get("latent_length")?.unwrap_or(d.latent_length),
            held_out_scene: kv.get_str("held_out_scene").map(str::to_string).or(d.held_out_scene),
            kl_slope: kv.get("kl_slope")?.unwrap_or(d.kl_slope),
            cap_epochs: kv.get("cap_epochs")?.unwrap_or(d.cap_epochs),
            grad_clip: kv.get("grad_clip")?.unwrap_or(d.grad_clip),
            validate_every: kv.get("validate_every")?.unwrap_or(d.validate_every),
            validate_k: kv.get("validate_k")?.unwrap_or(d.validate_k),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_kv(&KeyValues::read(path)?)
    }

    pub fn to_kv(&self) -> KeyValues {
        let mut kv = KeyValues::default();
        kv.set("epochs", self.epochs);
        kv.set("batch_size", self.batch_size);
        kv.set("lr_initial", self.lr_initial);
        kv.set("lr_after", self.lr_after);
        kv.set("lr_switch_epoch", self.lr_switch_epoch);
        kv.set("seed", self.seed);
        kv.set("latent_length", self.latent_length);
        if let Some(h) = &self.held_out_scene {
            kv.set("held_out_scene", h);
        }
        kv.set("kl_slope", self.kl_slope);
        kv.set("cap_epochs", self.cap_epochs);
        kv.set("grad_clip", self.grad_clip);
        kv.set("validate_every", self.validate_every);
        kv.set("validate_k", self.validate_k);
        kv
    }
}

/// Step size for `epoch`.
pub fn lr_schedule(epoch: usize, config: &TrainConfig) -> Result<f64> {
    if epoch >= config.epochs {
        return Err(Error::Parameter(format!("epoch {epoch} outside 0..{}", config.epochs)));
    }
    Ok(if epoch < config.lr_switch_epoch { config.lr_initial } else { config.lr_after })
}

/// A window with its graphs and reconstruction target built once.
#[derive(Clone, Debug)]
pub struct PreparedWindow {
    pub window: SequenceWindow,
    pub obs: GraphInput,
    pub full: GraphInput,
    /// `2 x 20 x N` displacements.
    pub target: Tensor,
}

impl PreparedWindow {
    pub fn new(window: SequenceWindow) -> Result<Self> {
        let full = GraphInput::from_window(&window)?;
        let obs = GraphInput::observed(&window)?;
        let target = to_displacements(&window).values;
        Ok(Self { window, obs, full, target })
    }
}

/// Training-mode loss of one window on `tape`: recognition posterior,
/// prior, a reparameterized sample from the posterior, decode.
pub fn window_loss(
    tape: &mut Tape,
    pv: &ParamVars,
    config: &ModelConfig,
    prepared: &PreparedWindow,
    epoch: usize,
    schedule: &AnnealSchedule,
    rng: &mut ChaCha8Rng,
) -> Result<(Var, LossReport)> {
    let q = recog_forward(tape, pv, config, &prepared.full, Mode::Train, rng)?;
    let p = prior_forward(tape, pv, config, &prepared.obs)?;
    let z = reparameterize(tape, q.mu, q.logvar, rng)?;
    let pred = decode(tape, pv, config, z, &prepared.obs)?;
    total_loss(tape, pred, &prepared.target, q, p, epoch as i64, schedule)
}

/// Parameter gradients of [`window_loss`].
pub fn window_gradients(
    model: &CvaeModel,
    prepared: &PreparedWindow,
    epoch: usize,
    schedule: &AnnealSchedule,
    rng: &mut ChaCha8Rng,
) -> Result<(ParamStore, LossReport)> {
    let mut tape = Tape::new();
    let pv = model.params.bind(&mut tape);
    let (loss, report) = window_loss(&mut tape, &pv, &model.config, prepared, epoch, schedule, rng)?;
    let grads = tape.backward(loss)?;
    Ok((pv.gradients(&tape, &grads), report))
}

/// Everything needed to continue a run bit-identically.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub model: CvaeModel,
    /// Next epoch to train.
    pub epoch: usize,
    /// SGD steps taken so far.
    pub step: u64,
    pub rng: ChaCha8Rng,
    pub best_val: f64,
}

impl TrainState {
    pub fn new(config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let model = CvaeModel::new(config.model_config(), &mut rng)?;
        Ok(Self { model, epoch: 0, step: 0, rng, best_val: f64::INFINITY })
    }
}

/// Epoch-mean loss components.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochSummary {
    pub report: LossReport,
    pub steps: u64,
    pub windows: usize,
    pub skipped: usize,
}

fn sgd_step(model: &mut CvaeModel, acc: &mut ParamStore, count: usize, lr: f64, clip: f64) -> Result<()> {
    acc.scale(1.0 / count as f64);
    if clip > 0.0 {
        let norm = acc.global_norm();
        if norm > clip {
            acc.scale(clip / norm);
        }
    }
    model.params.axpy(-lr, acc)?;
    acc.scale(0.0);
    Ok(())
}

/// One pass over `windows` in a freshly shuffled order, stepping every
/// `batch_size` windows and once more for a trailing partial batch.
pub fn train_epoch(state: &mut TrainState, windows: &[PreparedWindow], config: &TrainConfig) -> Result<EpochSummary> {
    if windows.is_empty() {
        return Err(Error::Parameter("no training windows".into()));
    }
    let lr = lr_schedule(state.epoch, config)?;
    let schedule = config.anneal();
    let mut order: Vec<usize> = (0..windows.len()).collect();
    order.shuffle(&mut state.rng);

    let mut acc = state.model.params.zeros_like();
    let (mut pending, mut used, mut skipped, mut steps) = (0usize, 0usize, 0usize, 0u64);
    let (mut rec, mut kl) = (0.0, 0.0);
    let mut weight = 0.0;
    for &i in &order {
        let w = &windows[i];
        if w.window.agents() == 0 {
            skipped += 1;
            continue;
        }
        let (g, r) = window_gradients(&state.model, w, state.epoch, &schedule, &mut state.rng)?;
        acc.axpy(1.0, &g)?;
        rec += r.rec;
        kl += r.kl;
        weight = r.weight;
        pending += 1;
        used += 1;
        if pending == config.batch_size {
            sgd_step(&mut state.model, &mut acc, pending, lr, config.grad_clip)?;
            pending = 0;
            steps += 1;
        }
    }
    if pending > 0 {
        sgd_step(&mut state.model, &mut acc, pending, lr, config.grad_clip)?;
        steps += 1;
    }
    state.step += steps;
    let n = used.max(1) as f64;
    let (rec, kl) = (rec / n, kl / n);
    let report = LossReport { total: rec + weight * kl, rec, kl, weight, epoch: state.epoch as i64 };
    state.epoch += 1;
    Ok(EpochSummary { report, steps, windows: used, skipped })
}

/// Leave-one-scene-out partition: `held_out`'s windows for test, the rest for training.
pub fn make_split(windows: &[SequenceWindow], held_out: &str) -> Result<(Vec<SequenceWindow>, Vec<SequenceWindow>)> {
    if !windows.iter().any(|w| w.scene == held_out) {
        let mut names: Vec<&str> = windows.iter().map(|w| w.scene.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        return Err(Error::Config(format!("unknown scene {held_out:?}; available: {}", names.join(", "))));
    }
    Ok(windows.iter().cloned().partition(|w| w.scene != held_out))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn unhex(s: &str) -> Result<[u8; 32]> {
    let bad = || Error::Format(format!("bad rng seed {s:?}"));
    if s.len() != 64 {
        return Err(bad());
    }
    let mut out = [0u8; 32];
    for (i, o) in out.iter_mut().enumerate() {
        *o = u8::from_str_radix(&s[2 * i..2 * i + 2], 16).map_err(|_| bad())?;
    }
    Ok(out)
}

/// Writes float64 parameters plus a sidecar carrying the run position and rng state.
pub fn checkpoint(state: &TrainState, path: &Path) -> Result<()> {
    let mut kv = KeyValues::default();
    kv.set("epoch", state.epoch);
    kv.set("step", state.step);
    kv.set("best_val", state.best_val);
    kv.set("rng_seed", hex(&state.rng.get_seed()));
    kv.set("rng_stream", state.rng.get_stream());
    kv.set("rng_word_pos", state.rng.get_word_pos());
    state.model.save(path, Precision::F64, &kv)
}

pub fn restore(path: &Path) -> Result<TrainState> {
    let (model, kv) = CvaeModel::load(path)?;
    let fmt = |e: Error| Error::Format(format!("checkpoint sidecar: {e}"));
    let mut rng = ChaCha8Rng::from_seed(unhex(&kv.require::<String>("rng_seed").map_err(fmt)?)?);
    rng.set_stream(kv.require("rng_stream").map_err(fmt)?);
    rng.set_word_pos(kv.require("rng_word_pos").map_err(fmt)?);
    Ok(TrainState {
        model,
        epoch: kv.require("epoch").map_err(fmt)?,
        step: kv.require("step").map_err(fmt)?,
        rng,
        best_val: kv.require("best_val").map_err(fmt)?,
    })
}

/// Files written by [`fit`].
#[derive(Clone, Debug)]
pub struct RunFiles {
    pub dir: PathBuf,
}

impl RunFiles {
    pub fn last(&self) -> PathBuf {
        self.dir.join("last.stgc")
    }

    pub fn best(&self) -> PathBuf {
        self.dir.join("best.stgc")
    }

    pub fn metrics(&self) -> PathBuf {
        self.dir.join("metrics.csv")
    }
}

/// Trains from `state` until `config.epochs`, logging one metrics row per
/// epoch, checkpointing after every epoch and keeping the best validation
/// checkpoint when `validation` is nonempty.
///
/// `on_epoch` sees each summary as it completes.
pub fn fit(
    state: &mut TrainState,
    train: &[PreparedWindow],
    validation: &[SequenceWindow],
    config: &TrainConfig,
    out: Option<&RunFiles>,
    mut on_epoch: impl FnMut(&EpochSummary, Option<f64>),
) -> Result<()> {
    let mut log = match out {
        Some(f) => {
            std::fs::create_dir_all(&f.dir)?;
            Some(MetricsLog::open(&f.metrics())?)
        }
        None => None,
    };
    while state.epoch < config.epochs {
        let summary = train_epoch(state, train, config)?;
        if let Some(log) = log.as_mut() {
            log.append(&summary.report, state.step)?;
        }
        let mut val = None;
        if config.validate_every > 0 && !validation.is_empty() && state.epoch % config.validate_every == 0 {
            let opts = EvalOptions { k: config.validate_k, seed: config.seed, ..Default::default() };
            let ade = evaluate_dataset(&state.model, validation, &opts)?.ade;
            val = Some(ade);
            if ade < state.best_val {
                state.best_val = ade;
                if let Some(f) = out {
                    checkpoint(state, &f.best())?;
                }
            }
        }
        if let Some(f) = out {
            checkpoint(state, &f.last())?;
        }
        on_epoch(&summary, val);
    }
    Ok(())
}
