//! Mini-batch training loop, evaluation, and finite-difference gradient
//! checking.
//!
//! Each sample is run on its own tape (sequences are ragged); per-sample
//! gradients are averaged into one batch gradient per optimizer step. The
//! whole loop is deterministic under the configured seed, and `TrainState`
//! carries everything needed to resume mid-run bit-exactly.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::config::FasConfig;
use crate::error::{Error, Result};
use crate::metrics::{argmax, compute_metrics, Metrics};
use crate::model::{forward, SampleData};
use crate::optim::{adamw_step, lr_at, OptimizerState};
use crate::params::{init_params, GradMap, ParameterStore};
use crate::rng::{Stream, StreamRng};
use crate::tape::Tape;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Clamped to the dataset size; the last partial batch is kept.
    pub batch_size: usize,
    pub base_lr: f64,
    pub warmup_ratio: f64,
    pub weight_decay: f64,
    pub seed: u64,
    /// Evaluate on the held-out set every this many epochs (0 disables).
    pub eval_every: usize,
    /// Parameter-name prefixes excluded from optimizer updates.
    pub freeze: Vec<String>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 2048,
            base_lr: 2e-4,
            warmup_ratio: 0.05,
            weight_decay: 1e-4,
            seed: 42,
            eval_every: 0,
            freeze: Vec::new(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.batch_size < 1 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return Err(Error::Config(format!("base_lr must be positive, got {}", self.base_lr)));
        }
        if !(0.0..1.0).contains(&self.warmup_ratio) {
            return Err(Error::Config(format!(
                "warmup_ratio must be in [0, 1), got {}",
                self.warmup_ratio
            )));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Config(format!(
                "weight_decay must be >= 0, got {}",
                self.weight_decay
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    /// Learning rate of the last optimizer step in the epoch.
    pub lr: f64,
    pub eval_accuracy: Option<f64>,
    pub eval_macro_f1: Option<f64>,
}

/// Everything mutated by training; checkpointable and resumable bit-exactly.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub params: ParameterStore,
    pub opt: OptimizerState,
    /// Epochs completed so far.
    pub epoch: usize,
    /// Optimizer steps completed so far.
    pub global_step: u64,
    pub shuffle_rng: StreamRng,
    pub dropout_rng: StreamRng,
    pub history: Vec<EpochRecord>,
}

pub fn init_state(cfg: &FasConfig, tcfg: &TrainConfig) -> Result<TrainState> {
    cfg.validate()?;
    tcfg.validate()?;
    let mut init_rng = StreamRng::new(tcfg.seed, Stream::Init);
    let mut params = init_params(cfg, &mut init_rng)?;
    // frozen subnetworks start (and stay) at zero, so they carry no signal
    for prefix in &tcfg.freeze {
        params.zero_prefix(prefix);
    }
    let opt = OptimizerState::new(&params, tcfg.weight_decay);
    Ok(TrainState {
        params,
        opt,
        epoch: 0,
        global_step: 0,
        shuffle_rng: StreamRng::new(tcfg.seed, Stream::Shuffle),
        dropout_rng: StreamRng::new(tcfg.seed, Stream::Dropout),
        history: Vec::new(),
    })
}

fn with_context(e: Error, epoch: usize, step: u64) -> Error {
    match e {
        Error::NonFinite { op } => {
            Error::NonFinite { op: format!("{op} (epoch {epoch}, step {step})") }
        }
        other => other,
    }
}

/// Run (or resume) training up to `tcfg.epochs`, or to `stop_after` epochs
/// if given (an interruption point; the lr schedule still spans the full
/// `tcfg.epochs`, so resuming later is bit-identical to not stopping).
/// `on_epoch` is called with each finished epoch's record.
pub fn train(
    state: &mut TrainState,
    cfg: &FasConfig,
    tcfg: &TrainConfig,
    train_set: &[SampleData],
    eval_set: Option<&[SampleData]>,
    stop_after: Option<usize>,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<()> {
    if train_set.is_empty() {
        return Err(Error::Input("training set is empty".into()));
    }
    let n = train_set.len();
    let batch = tcfg.batch_size.min(n);
    let steps_per_epoch = n.div_ceil(batch) as u64;
    let total_steps = tcfg.epochs as u64 * steps_per_epoch;
    let until = stop_after.map_or(tcfg.epochs, |s| s.min(tcfg.epochs));

    for epoch in state.epoch..until {
        let mut order: Vec<usize> = (0..n).collect();
        state.shuffle_rng.shuffle(&mut order);

        let mut loss_sum = 0.0;
        let mut last_lr = 0.0;
        for chunk in order.chunks(batch) {
            let mut acc = GradMap::new();
            for &i in chunk {
                let sample = &train_set[i];
                let mut tape = Tape::new();
                let out = forward(&mut tape, sample, &state.params, cfg, true, &mut state.dropout_rng)
                    .map_err(|e| with_context(e, epoch, state.global_step))?;
                let loss = tape
                    .cross_entropy(out.logits, sample.label)
                    .map_err(|e| with_context(e, epoch, state.global_step))?;
                loss_sum += tape.value(loss).at(0, 0);
                let grads = tape
                    .backward(loss)
                    .map_err(|e| with_context(e, epoch, state.global_step))?;
                for (name, g) in grads {
                    match acc.get_mut(&name) {
                        Some(a) => a.add_assign(&g)?,
                        None => {
                            acc.insert(name, g);
                        }
                    }
                }
            }
            let inv = 1.0 / chunk.len() as f64;
            for g in acc.values_mut() {
                g.scale_in_place(inv);
            }
            state.global_step += 1;
            last_lr = lr_at(state.global_step, total_steps, tcfg.base_lr, tcfg.warmup_ratio)?;
            adamw_step(&mut state.params, &acc, &mut state.opt, last_lr, &tcfg.freeze)
                .map_err(|e| with_context(e, epoch, state.global_step))?;
        }

        let mut record = EpochRecord {
            epoch,
            mean_loss: loss_sum / n as f64,
            lr: last_lr,
            eval_accuracy: None,
            eval_macro_f1: None,
        };
        if let Some(eval) = eval_set {
            if tcfg.eval_every > 0 && (epoch + 1) % tcfg.eval_every == 0 {
                let m = evaluate(&state.params, cfg, eval, tcfg.seed)?;
                record.eval_accuracy = Some(m.accuracy);
                record.eval_macro_f1 = Some(m.macro_f1);
            }
        }
        on_epoch(&record);
        state.history.push(record);
        state.epoch = epoch + 1;
    }
    Ok(())
}

/// Eval-mode forward over a set (dropout off); argmax predictions vs labels.
pub fn evaluate(
    params: &ParameterStore,
    cfg: &FasConfig,
    set: &[SampleData],
    seed: u64,
) -> Result<Metrics> {
    if set.is_empty() {
        return Err(Error::Input("evaluation set is empty".into()));
    }
    // only the random-selection ablation consumes this during eval
    let mut rng = StreamRng::new(seed, Stream::Dropout);
    let mut pairs = Vec::with_capacity(set.len());
    for sample in set {
        let mut tape = Tape::new();
        let out = forward(&mut tape, sample, params, cfg, false, &mut rng)?;
        pairs.push((sample.label, argmax(tape.value(out.logits).row(0))));
    }
    compute_metrics(cfg.n_classes, &pairs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_err: f64,
    pub worst_param: String,
    pub worst_entry: usize,
    pub tolerance: f64,
    pub passed: bool,
}

/// Compare analytic gradients against central finite differences on a random
/// subset of parameter entries. `loss_of` must be a pure function of the
/// parameter values (any internal randomness reseeded identically per call).
pub fn compare_grads_fd(
    params: &mut ParameterStore,
    grads: &GradMap,
    mut loss_of: impl FnMut(&ParameterStore) -> Result<f64>,
    eps: f64,
    max_entries: usize,
    tolerance: f64,
    seed: u64,
) -> Result<GradCheckReport> {
    let mut entries: Vec<(String, usize)> = Vec::new();
    for (name, value) in params.iter() {
        for i in 0..value.rows() * value.cols() {
            entries.push((name.to_string(), i));
        }
    }
    if entries.len() > max_entries {
        let mut rng = StreamRng::new(seed, Stream::Shuffle);
        let picked = rng.sample_without_replacement(entries.len(), max_entries);
        entries = picked.into_iter().map(|i| entries[i].clone()).collect();
    }

    let mut worst = (0.0f64, String::new(), 0usize);
    for (name, i) in &entries {
        let g = grads
            .get(name)
            .ok_or_else(|| Error::Contract(format!("no gradient for '{name}'")))?
            .data()[*i];
        let orig = params.get(name)?.data()[*i];
        params.get_mut(name)?.data_mut()[*i] = orig + eps;
        let plus = loss_of(params)?;
        params.get_mut(name)?.data_mut()[*i] = orig - eps;
        let minus = loss_of(params)?;
        params.get_mut(name)?.data_mut()[*i] = orig;
        let fd = (plus - minus) / (2.0 * eps);
        let denom = g.abs().max(fd.abs()).max(1e-6);
        let rel = (g - fd).abs() / denom;
        if rel > worst.0 {
            worst = (rel, name.clone(), *i);
        }
    }
    Ok(GradCheckReport {
        checked: entries.len(),
        max_rel_err: worst.0,
        worst_param: worst.1,
        worst_entry: worst.2,
        tolerance,
        passed: worst.0 <= tolerance,
    })
}

/// End-to-end gradient check of the full forward pass on one random sample,
/// in training mode with the dropout stream reseeded per evaluation so the
/// loss is a deterministic function of the parameters.
pub fn gradient_check(
    cfg: &FasConfig,
    seed: u64,
    eps: f64,
    max_entries: usize,
    tolerance: f64,
) -> Result<GradCheckReport> {
    cfg.validate()?;
    let mut init_rng = StreamRng::new(seed, Stream::Init);
    let mut params = init_params(cfg, &mut init_rng)?;

    let mut data_rng = StreamRng::new(seed, Stream::Synth);
    let t_aco = 4 * cfg.s + 2;
    let t_sem = 6 * cfg.s + 3;
    let sample = SampleData {
        aco: crate::matrix::Matrix::from_fn(t_aco, cfg.d_aco_in, |_, _| data_rng.normal()),
        sem: crate::matrix::Matrix::from_fn(t_sem, cfg.d_sem_in, |_, _| data_rng.normal()),
        label: (seed % cfg.n_classes as u64) as usize,
    };

    let loss_of = |p: &ParameterStore| -> Result<f64> {
        let mut rng = StreamRng::new(seed, Stream::Dropout);
        let mut tape = Tape::new();
        let out = forward(&mut tape, &sample, p, cfg, true, &mut rng)?;
        let loss = tape.cross_entropy(out.logits, sample.label)?;
        Ok(tape.value(loss).at(0, 0))
    };

    let grads = {
        let mut rng = StreamRng::new(seed, Stream::Dropout);
        let mut tape = Tape::new();
        let out = forward(&mut tape, &sample, &params, cfg, true, &mut rng)?;
        let loss = tape.cross_entropy(out.logits, sample.label)?;
        tape.backward(loss)?
    };

    compare_grads_fd(&mut params, &grads, loss_of, eps, max_entries, tolerance, seed)
}
