//! Central finite-difference gradient checks.
//!
//! The numerical side only ever calls forward computations, never a backward
//! rule, so it is an independent oracle for the tape.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::arch::Model;
use crate::autograd::{Tape, Var};
use crate::train::LossKind;
use crate::{Error, Result, Tensor};

/// Denominator floor for relative errors, so that coordinates with
/// vanishing gradient compare absolutely.
pub const REL_FLOOR: f64 = 1e-7;

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_FLOOR)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Coordinates compared.
    pub checked: usize,
    /// Coordinates skipped because a ReLU or |·| kink lies within one step.
    pub skipped: usize,
    pub max_rel_err: f64,
    /// (label, analytic, numeric) of the worst coordinate.
    pub worst: Option<(String, f64, f64)>,
}

impl GradCheckReport {
    fn new() -> Self {
        GradCheckReport {
            checked: 0,
            skipped: 0,
            max_rel_err: 0.0,
            worst: None,
        }
    }

    fn record(&mut self, label: impl FnOnce() -> String, analytic: f64, numeric: f64) {
        self.checked += 1;
        let e = rel_err(analytic, numeric);
        if e > self.max_rel_err || self.worst.is_none() {
            self.max_rel_err = self.max_rel_err.max(e);
            self.worst = Some((label(), analytic, numeric));
        }
    }

    pub fn passes(&self, tol: f64, min_checked: usize) -> bool {
        self.checked >= min_checked && self.max_rel_err < tol
    }
}

enum Probe {
    Smooth(f64),
    Kink,
}

/// Central difference of `f` around its current point, rejecting points where
/// the one-sided slopes disagree (a kink inside the stencil).
fn probe(f0: f64, f_plus: f64, f_minus: f64, step: f64) -> Probe {
    let fwd = (f_plus - f0) / step;
    let bwd = (f0 - f_minus) / step;
    let central = (f_plus - f_minus) / (2.0 * step);
    if (fwd - bwd).abs() > 1e-3 * fwd.abs().max(bwd.abs()).max(1e-5) {
        Probe::Kink
    } else {
        Probe::Smooth(central)
    }
}

fn eval_loss(kind: LossKind, pred: &Tensor<f64>, target: &Tensor<f64>) -> f64 {
    let n = pred.len() as f64;
    let s: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(a, b)| match kind {
            LossKind::L1 => (a - b).abs(),
            LossKind::L2 => (a - b) * (a - b),
        })
        .sum();
    s / n
}

/// Compares tape gradients of `loss(model(x), target)` with central
/// differences on `samples` randomly chosen parameters.
pub fn check_model(
    model: &Model<f64>,
    x: &Tensor<f64>,
    target: &Tensor<f64>,
    loss: LossKind,
    samples: usize,
    step: f64,
    seed: u64,
) -> Result<GradCheckReport> {
    let mut tape = Tape::new();
    let xv = tape.leaf(x.clone(), false);
    let tv = tape.leaf(target.clone(), false);
    let (out, vars) = model.forward_taped(&mut tape, xv)?;
    let l = match loss {
        LossKind::L1 => tape.l1_loss(out, tv)?,
        LossKind::L2 => tape.l2_loss(out, tv)?,
    };
    tape.backward(l)?;
    let flat = vars.flat();
    let names = model.tensor_names();

    let loss_at = |m: &Model<f64>| -> Result<f64> { Ok(eval_loss(loss, &m.forward(x)?, target)) };
    let f0 = loss_at(model)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = GradCheckReport::new();
    let mut work = model.clone();
    let mut attempts = 0;
    while report.checked < samples && attempts < samples * 4 {
        attempts += 1;
        let t = rng.random_range(0..flat.len());
        let idx = rng.random_range(0..tape.value(flat[t]).len());
        let analytic = tape.grad(flat[t]).map_or(0.0, |g| g.data()[idx]);
        let orig = work.tensors()[t].data()[idx];
        work.tensors_mut()[t].data_mut()[idx] = orig + step;
        let fp = loss_at(&work)?;
        work.tensors_mut()[t].data_mut()[idx] = orig - step;
        let fm = loss_at(&work)?;
        work.tensors_mut()[t].data_mut()[idx] = orig;
        match probe(f0, fp, fm, step) {
            Probe::Kink => report.skipped += 1,
            Probe::Smooth(numeric) => report.record(|| format!("{}[{idx}]", names[t]), analytic, numeric),
        }
    }
    Ok(report)
}

/// Gradient check of a single tape op. `build` records the op on the given
/// input leaves; its (possibly non-scalar) output is contracted with a fixed
/// random tensor to obtain a scalar.
pub fn check_op<F>(inputs: &[Tensor<f64>], build: F, samples: usize, step: f64, seed: u64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let forward = |vals: &[Tensor<f64>]| -> Result<Tensor<f64>> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = vals.iter().map(|v| tape.leaf(v.clone(), false)).collect();
        let out = build(&mut tape, &vars)?;
        Ok(tape.value(out).clone())
    };
    let out_shape = forward(inputs)?.shape();
    let weights = Tensor::from_fn(out_shape, |_| rng.random_range(0.5..1.5));
    let objective = |vals: &[Tensor<f64>]| -> Result<f64> {
        let out = forward(vals)?;
        Ok(out.data().iter().zip(weights.data()).map(|(a, b)| a * b).sum())
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|v| tape.leaf(v.clone(), true)).collect();
    let out = build(&mut tape, &vars)?;
    let w = tape.leaf(weights.clone(), false);
    let prod = tape.mul(out, w)?;
    let total = tape.sum(prod)?;
    tape.backward(total)?;

    let total_len: usize = inputs.iter().map(|t| t.len()).sum();
    if total_len == 0 {
        return Err(Error::Empty("gradient check without inputs".into()));
    }
    let f0 = objective(inputs)?;
    let mut work: Vec<Tensor<f64>> = inputs.to_vec();
    let mut report = GradCheckReport::new();
    let mut attempts = 0;
    while report.checked < samples && attempts < samples * 4 {
        attempts += 1;
        let i = rng.random_range(0..inputs.len());
        if inputs[i].is_empty() {
            continue;
        }
        let idx = rng.random_range(0..inputs[i].len());
        let analytic = tape.grad(vars[i]).map_or(0.0, |g| g.data()[idx]);
        let orig = work[i].data()[idx];
        work[i].data_mut()[idx] = orig + step;
        let fp = objective(&work)?;
        work[i].data_mut()[idx] = orig - step;
        let fm = objective(&work)?;
        work[i].data_mut()[idx] = orig;
        match probe(f0, fp, fm, step) {
            Probe::Kink => report.skipped += 1,
            Probe::Smooth(numeric) => report.record(|| format!("input{i}[{idx}]"), analytic, numeric),
        }
    }
    Ok(report)
}
