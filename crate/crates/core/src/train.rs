//! Adam, the step-halving learning-rate schedule and the training loop.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::arch::Model;
use crate::autograd::Tape;
use crate::data::{BatchPlan, TrainingSet};
use crate::{Error, Real, Result, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LossKind {
    #[default]
    L1,
    L2,
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::L1 => "l1",
            LossKind::L2 => "l2",
        })
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "l1" => Ok(LossKind::L1),
            "l2" | "mse" => Ok(LossKind::L2),
            other => Err(Error::config(format!("unknown loss {other:?} (expected l1 or l2)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub initial_lr: f32,
    /// Epochs between learning-rate halvings.
    pub halving_period: usize,
    pub total_epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub loss: LossKind,
    /// Random dihedral augmentation of every patch.
    pub augment: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            initial_lr: 1e-4,
            halving_period: 50,
            total_epochs: 300,
            batch_size: 16,
            seed: 0,
            loss: LossKind::L1,
            augment: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.initial_lr >= 0.0 && self.initial_lr.is_finite()) {
            return Err(Error::config(format!(
                "learning rate {} must be finite and >= 0",
                self.initial_lr
            )));
        }
        if self.halving_period == 0 {
            return Err(Error::config("halving period must be >= 1 epoch"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch size must be >= 1"));
        }
        Ok(())
    }

    /// `initial_lr · 2^-⌊epoch / halving_period⌋`.
    pub fn lr(&self, epoch: usize) -> f32 {
        lr_schedule(self.initial_lr, self.halving_period, epoch)
    }
}

pub fn lr_schedule(initial_lr: f32, halving_period: usize, epoch: usize) -> f32 {
    let halvings = (epoch / halving_period.max(1)).min(i32::MAX as usize) as i32;
    initial_lr * 0.5f32.powi(halvings)
}

/// Adam moments for a list of parameter tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    /// Steps taken so far.
    pub t: u64,
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
}

impl<T: Real> AdamState<T> {
    /// β₁ = 0.9, β₂ = 0.999, ε = 1e-8 and zero moments shaped like `params`.
    pub fn new(params: &[&Tensor<T>]) -> Self {
        AdamState {
            beta1: T::of_f64(0.9),
            beta2: T::of_f64(0.999),
            eps: T::of_f64(1e-8),
            t: 0,
            m: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            v: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
        }
    }

    /// One bias-corrected Adam update. Nothing is modified when a gradient
    /// is non-finite or mis-shaped.
    pub fn step(&mut self, params: &mut [&mut Tensor<T>], grads: &[&Tensor<T>], lr: T) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::shape(format!(
                "adam tracks {} tensors, got {} parameters and {} gradients",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != self.m[i].shape() || g.shape() != self.m[i].shape() {
                return Err(Error::shape(format!("adam tensor {i}: shapes differ")));
            }
            if !g.is_finite() {
                return Err(Error::NonFinite(format!("gradient of parameter tensor {i}")));
            }
        }
        self.t += 1;
        let one = T::one();
        let exp = self.t.min(i32::MAX as u64) as i32;
        let bc1 = one - self.beta1.powi(exp);
        let bc2 = one - self.beta2.powi(exp);
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            for (((theta, &g), m), v) in p.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
                *m = b1 * *m + (one - b1) * g;
                *v = b2 * *v + (one - b2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *theta = *theta - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Position in the training run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Progress {
    pub epoch: usize,
    /// Batches already consumed in `epoch`.
    pub batch_in_epoch: usize,
    /// Optimizer steps since the start of training.
    pub step: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub epoch: usize,
    pub step: u64,
    pub scale: usize,
    pub lr: f32,
    pub loss: f32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochSummary {
    pub epoch: usize,
    /// Global step count at the end of the epoch.
    pub step: u64,
    pub lr: f32,
    /// Mean batch loss per scale.
    pub loss_by_scale: BTreeMap<usize, f32>,
}

impl EpochSummary {
    /// Mean over scales.
    pub fn mean_loss(&self) -> f32 {
        let n = self.loss_by_scale.len().max(1) as f32;
        self.loss_by_scale.values().sum::<f32>() / n
    }
}

/// Hooks invoked by [`Trainer::run`].
pub trait TrainCallback {
    fn on_step(&mut self, _report: &StepReport) {}

    /// Called after every epoch; may return a validation PSNR for the log.
    fn on_epoch_end(&mut self, _summary: &EpochSummary, _trainer: &Trainer) -> Result<Option<f64>> {
        Ok(None)
    }
}

impl TrainCallback for () {}

pub const METRICS_HEADER: &str = "epoch,step,scale,lr,loss,val_psnr";

/// CSV rows of the metrics log for one epoch, one per scale.
pub fn metrics_rows(summary: &EpochSummary, val_psnr: Option<f64>) -> Vec<String> {
    summary
        .loss_by_scale
        .iter()
        .map(|(scale, loss)| {
            format!(
                "{},{},{},{:e},{:.8},{}",
                summary.epoch,
                summary.step,
                scale,
                summary.lr,
                loss,
                val_psnr.map(|v| format!("{v:.4}")).unwrap_or_default()
            )
        })
        .collect()
}

/// Owns the model and optimizer state for one training run.
#[derive(Debug, Clone)]
pub struct Trainer {
    model: Model<f32>,
    adam: AdamState<f32>,
    config: TrainConfig,
    progress: Progress,
    aug_rng: ChaCha8Rng,
    plan: Option<(usize, Vec<BatchPlan>)>,
    partial: BTreeMap<usize, (f32, usize)>,
}

impl Trainer {
    pub fn new(model: Model<f32>, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let adam = AdamState::new(&model.tensors());
        Ok(Trainer {
            model,
            adam,
            config,
            progress: Progress::default(),
            aug_rng: ChaCha8Rng::seed_from_u64(config.seed),
            plan: None,
            partial: BTreeMap::new(),
        })
    }

    /// Restores a run; used by checkpoint loading.
    pub fn from_parts(
        model: Model<f32>,
        adam: AdamState<f32>,
        config: TrainConfig,
        progress: Progress,
        aug_rng: ChaCha8Rng,
    ) -> Result<Self> {
        config.validate()?;
        let shapes_match = adam.m.len() == model.tensors().len()
            && adam
                .m
                .iter()
                .zip(&adam.v)
                .zip(model.tensors())
                .all(|((m, v), p)| m.shape() == p.shape() && v.shape() == p.shape());
        if !shapes_match {
            return Err(Error::Format("optimizer state does not match the model".into()));
        }
        Ok(Trainer {
            model,
            adam,
            config,
            progress,
            aug_rng,
            plan: None,
            partial: BTreeMap::new(),
        })
    }

    pub fn model(&self) -> &Model<f32> {
        &self.model
    }

    pub fn into_model(self) -> Model<f32> {
        self.model
    }

    pub fn adam(&self) -> &AdamState<f32> {
        &self.adam
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    /// Extends or shortens the run; already completed epochs are kept.
    pub fn set_total_epochs(&mut self, total: usize) {
        self.config.total_epochs = total;
    }

    pub fn progress(&self) -> Progress {
        self.progress
    }

    pub fn aug_rng(&self) -> &ChaCha8Rng {
        &self.aug_rng
    }

    pub fn is_finished(&self) -> bool {
        self.progress.epoch >= self.config.total_epochs
    }

    fn current_plan(&mut self, set: &TrainingSet) -> &[BatchPlan] {
        let epoch = self.progress.epoch;
        if self.plan.as_ref().map(|(e, _)| *e) != Some(epoch) {
            let plan = set.epoch_plan(self.config.batch_size, self.config.seed, epoch);
            self.plan = Some((epoch, plan));
        }
        &self.plan.as_ref().expect("plan").1
    }

    /// Loss of the current model on one batch, with gradients.
    fn loss_and_grads(&self, inputs: &Tensor<f32>, targets: &Tensor<f32>) -> Result<(f32, Vec<Tensor<f32>>)> {
        let mut tape = Tape::new();
        let x = tape.leaf(inputs.clone(), false);
        let y = tape.leaf(targets.clone(), false);
        let (out, vars) = self.model.forward_taped(&mut tape, x)?;
        let loss = match self.config.loss {
            LossKind::L1 => tape.l1_loss(out, y)?,
            LossKind::L2 => tape.l2_loss(out, y)?,
        };
        let value = tape.value(loss).item()?;
        if !value.is_finite() {
            return Err(Error::NonFinite(format!("training loss {value}")));
        }
        tape.backward(loss)?;
        let grads = vars
            .flat()
            .into_iter()
            .map(|v| {
                tape.grad(v)
                    .cloned()
                    .unwrap_or_else(|| Tensor::zeros(tape.value(v).shape()))
            })
            .collect();
        Ok((value, grads))
    }

    /// Consumes the next batch of the current epoch and applies one update.
    /// On error the model and optimizer are left untouched.
    pub fn train_step(&mut self, set: &TrainingSet) -> Result<StepReport> {
        if self.is_finished() {
            return Err(Error::Usage("training already finished".into()));
        }
        let plan_len = self.current_plan(set).len();
        if plan_len == 0 {
            return Err(Error::Empty("epoch without batches".into()));
        }
        let at = self.progress.batch_in_epoch;
        let plan = self.current_plan(set)[at].clone();
        let mut rng = self.aug_rng.clone();
        let batch = set.assemble(&plan, self.config.augment.then_some(&mut rng))?;
        let (loss, grads) = self.loss_and_grads(&batch.inputs, &batch.targets)?;
        let lr = self.config.lr(self.progress.epoch);
        let grad_refs: Vec<&Tensor<f32>> = grads.iter().collect();
        let mut params = self.model.tensors_mut();
        self.adam.step(&mut params, &grad_refs, lr)?;
        self.aug_rng = rng;

        let report = StepReport {
            epoch: self.progress.epoch,
            step: self.progress.step + 1,
            scale: batch.scale,
            lr,
            loss,
        };
        let entry = self.partial.entry(batch.scale).or_insert((0.0, 0));
        entry.0 += loss;
        entry.1 += 1;
        self.progress.step += 1;
        self.progress.batch_in_epoch += 1;
        if self.progress.batch_in_epoch == plan_len {
            self.progress.epoch += 1;
            self.progress.batch_in_epoch = 0;
        }
        Ok(report)
    }

    /// Finishes the current epoch (from wherever it was resumed).
    pub fn run_epoch(&mut self, set: &TrainingSet, callbacks: &mut dyn TrainCallback) -> Result<EpochSummary> {
        let epoch = self.progress.epoch;
        let lr = self.config.lr(epoch);
        if self.progress.batch_in_epoch == 0 {
            self.partial.clear();
        }
        while self.progress.epoch == epoch {
            let r = self.train_step(set)?;
            callbacks.on_step(&r);
        }
        let loss_by_scale = std::mem::take(&mut self.partial)
            .into_iter()
            .map(|(s, (sum, n))| (s, sum / n as f32))
            .collect();
        Ok(EpochSummary {
            epoch,
            step: self.progress.step,
            lr,
            loss_by_scale,
        })
    }

    /// Trains until `total_epochs`.
    pub fn run(&mut self, set: &TrainingSet, callbacks: &mut dyn TrainCallback) -> Result<Vec<EpochSummary>> {
        let mut out = Vec::new();
        while !self.is_finished() {
            let summary = self.run_epoch(set, callbacks)?;
            callbacks.on_epoch_end(&summary, self)?;
            out.push(summary);
        }
        Ok(out)
    }

    /// Mean training loss of the current model over one un-augmented pass.
    pub fn evaluate_loss(&self, set: &TrainingSet) -> Result<f32> {
        let mut total = 0.0f64;
        let mut n = 0usize;
        for batch in set.batch_iterator(self.config.batch_size, self.config.seed, 0) {
            let batch = batch?;
            let out = self.model.forward(&batch.inputs)?;
            let d = out.data().iter().zip(batch.targets.data()).map(|(a, b)| {
                let e = (a - b) as f64;
                match self.config.loss {
                    LossKind::L1 => e.abs(),
                    LossKind::L2 => e * e,
                }
            });
            total += d.sum::<f64>();
            n += out.len();
        }
        Ok((total / n.max(1) as f64) as f32)
    }
}
