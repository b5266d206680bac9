//! Training and autoregressive inference.

use crate::error::{arg_err, shape_err, Result};
use crate::model::blocks::{bind_params, forward, forward_inference};
use crate::model::config::ModelConfig;
use crate::model::params::ParamStore;
use crate::rng::Rng;
use crate::tape::{GradTape, Var};
use crate::tensor::Tensor;

/// Optimizer and loop hyperparameters.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f32,
    pub epochs: usize,
    pub seed: u64,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    pub weight_decay: f32,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 16,
            learning_rate: 1e-3,
            epochs: 1,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return arg_err("batch_size must be >= 1");
        }
        if self.epochs == 0 {
            return arg_err("epochs must be >= 1");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return arg_err(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            ));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return arg_err(format!("{name} must be in [0, 1), got {b}"));
            }
        }
        if !(self.eps.is_finite() && self.eps > 0.0) {
            return arg_err(format!("eps must be positive, got {}", self.eps));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return arg_err(format!(
                "weight_decay must be >= 0, got {}",
                self.weight_decay
            ));
        }
        Ok(())
    }
}

/// Mean over all elements of |d| + d², d = pred − target, in f64.
pub fn l1l2_loss_value(pred: &Tensor, target: &Tensor) -> Result<f64> {
    if pred.shape() != target.shape() {
        return shape_err(format!(
            "loss shapes differ: {:?} vs {:?}",
            pred.shape(),
            target.shape()
        ));
    }
    let n = pred.numel() as f64;
    let mut acc = 0f64;
    for (&p, &t) in pred.data().iter().zip(target.data()) {
        let d = p as f64 - t as f64;
        acc += d.abs() + d * d;
    }
    Ok(acc / n)
}

impl GradTape {
    /// Records the training objective: mean(|pred − target| + (pred − target)²)
    /// as a single fused node. Gradient w.r.t. pred is (sign(d) + 2d)/n,
    /// with sign(0) = 0; the target receives the negation.
    pub fn l1l2_loss(&mut self, pred: Var, target: Var) -> Result<Var> {
        let pv = self.value(pred).clone();
        let tv = self.value(target).clone();
        let value = Tensor::scalar(l1l2_loss_value(&pv, &tv)? as f32);
        let n = pv.numel() as f64;
        Ok(self.push(
            value,
            vec![pred, target],
            Some(Box::new(move |g: &Tensor| {
                let scale = g.data()[0] as f64 / n;
                let dpred = Tensor::from_fn(pv.shape(), |i| {
                    let d = pv.data()[i] as f64 - tv.data()[i] as f64;
                    let sign = if d > 0.0 {
                        1.0
                    } else if d < 0.0 {
                        -1.0
                    } else {
                        0.0
                    };
                    (scale * (sign + 2.0 * d)) as f32
                });
                let dtarget = dpred.scale(-1.0);
                vec![dpred, dtarget]
            })),
        ))
    }
}

/// One decoupled-weight-decay Adam update over every parameter.
///
/// `grads` must align with the store's entries (same order, same shapes);
/// `step` is the 1-based update count shared by all parameters. For each
/// parameter: `m ← β1·m + (1−β1)·g`, `v ← β2·v + (1−β2)·g²`, then
/// `p ← p·(1 − lr·wd) − lr·m̂ / (√v̂ + eps)` with bias-corrected moments.
pub fn adamw_step(
    store: &mut ParamStore,
    grads: &[Tensor],
    tc: &TrainConfig,
    step: u64,
) -> Result<()> {
    tc.validate()?;
    if step == 0 {
        return arg_err("adamw step count is 1-based");
    }
    if grads.len() != store.len() {
        return shape_err(format!(
            "got {} gradients for {} parameters",
            grads.len(),
            store.len()
        ));
    }
    let bc1 = 1.0 - (tc.beta1 as f64).powi(step as i32);
    let bc2 = 1.0 - (tc.beta2 as f64).powi(step as i32);
    let lr = tc.learning_rate as f64;
    let decay_factor = 1.0 - lr * tc.weight_decay as f64;
    for (entry, grad) in store.entries_mut().iter_mut().zip(grads) {
        if grad.shape() != entry.value.shape() {
            return shape_err(format!(
                "gradient for {:?} has shape {:?}, expected {:?}",
                entry.name,
                grad.shape(),
                entry.value.shape()
            ));
        }
        let n = entry.value.numel();
        let mut new_m = Vec::with_capacity(n);
        let mut new_v = Vec::with_capacity(n);
        let mut new_p = Vec::with_capacity(n);
        for i in 0..n {
            let g = grad.data()[i] as f64;
            let m = tc.beta1 as f64 * entry.m.data()[i] as f64 + (1.0 - tc.beta1 as f64) * g;
            let v = tc.beta2 as f64 * entry.v.data()[i] as f64 + (1.0 - tc.beta2 as f64) * g * g;
            let m_hat = m / bc1;
            let v_hat = v / bc2;
            let p = entry.value.data()[i] as f64 * decay_factor
                - lr * m_hat / (v_hat.sqrt() + tc.eps as f64);
            new_m.push(m as f32);
            new_v.push(v as f32);
            new_p.push(p as f32);
        }
        entry.m = Tensor::new(entry.value.shape(), new_m)?;
        entry.v = Tensor::new(entry.value.shape(), new_v)?;
        entry.value = Tensor::new(entry.value.shape(), new_p)?;
    }
    Ok(())
}

/// One optimizer step's log line.
#[derive(Clone, Debug, PartialEq)]
pub struct LossRecord {
    pub epoch: usize,
    /// Global 1-based step index.
    pub step: u64,
    pub loss: f64,
}

/// Stacks per-sample `(T, C, H, W)` rows into one `(B, T, C, H, W)` batch.
fn stack_rows(rows: &[&(Tensor, Tensor)]) -> Result<(Tensor, Tensor)> {
    let mut xs = Vec::with_capacity(rows.len());
    let mut ys = Vec::with_capacity(rows.len());
    for (x, y) in rows {
        let mut shape = vec![1];
        shape.extend_from_slice(x.shape());
        xs.push(x.reshape(&shape)?);
        let mut shape = vec![1];
        shape.extend_from_slice(y.shape());
        ys.push(y.reshape(&shape)?);
    }
    Ok((Tensor::concat(&xs, 0)?, Tensor::concat(&ys, 0)?))
}

/// Trains a freshly initialized model on `(input, target)` rows, each of
/// shape `(in_time, in_channels, height, width)`.
///
/// Per epoch the row order is reshuffled and consumed in `batch_size` chunks
/// (the last chunk may be smaller). Initialization, shuffling, and batching
/// are all derived from `tc.seed`, so repeated runs produce bit-identical
/// parameters and losses. `on_step` fires after every optimizer step.
pub fn train(
    cfg: &ModelConfig,
    rows: &[(Tensor, Tensor)],
    tc: &TrainConfig,
    mut on_step: impl FnMut(&LossRecord),
) -> Result<(ParamStore, Vec<LossRecord>)> {
    cfg.validate()?;
    tc.validate()?;
    if rows.is_empty() {
        return arg_err("training requires at least one sample");
    }
    let expect = [cfg.in_time, cfg.in_channels, cfg.height, cfg.width];
    for (i, (x, y)) in rows.iter().enumerate() {
        if x.shape() != expect {
            return shape_err(format!(
                "sample {i} input shape {:?}, expected {expect:?}",
                x.shape()
            ));
        }
        if y.shape() != expect {
            return shape_err(format!(
                "sample {i} target shape {:?}, expected {expect:?}",
                y.shape()
            ));
        }
    }

    let mut store = ParamStore::init(cfg, tc.seed)?;
    let mut shuffle_rng = Rng::new(tc.seed ^ 0x5A17_AB1E);
    let mut log = Vec::new();
    let mut step: u64 = 0;
    for epoch in 0..tc.epochs {
        let mut order: Vec<usize> = (0..rows.len()).collect();
        shuffle_rng.shuffle(&mut order);
        for chunk in order.chunks(tc.batch_size) {
            let batch: Vec<&(Tensor, Tensor)> = chunk.iter().map(|&i| &rows[i]).collect();
            let (x, y) = stack_rows(&batch)?;
            let mut tape = GradTape::new();
            let bound = bind_params(&mut tape, &store);
            let xv = tape.constant(x);
            let yv = tape.constant(y);
            let pred = forward(&mut tape, xv, &bound, cfg)?;
            let loss = tape.l1l2_loss(pred, yv)?;
            let loss_value = tape.value(loss).data()[0] as f64;
            let grads = tape.backward(loss)?;
            let grad_tensors: Vec<Tensor> = bound
                .ordered()
                .iter()
                .map(|&v| grads.get(&tape, v))
                .collect::<Result<_>>()?;
            step += 1;
            adamw_step(&mut store, &grad_tensors, tc, step)?;
            let record = LossRecord {
                epoch,
                step,
                loss: loss_value,
            };
            on_step(&record);
            log.push(record);
        }
    }
    Ok((store, log))
}

/// Result of an autoregressive rollout.
pub struct Rollout {
    /// Predicted frames, `(B, t_out, C, H, W)`.
    pub frames: Tensor,
    /// Number of forward passes used: ceil(t_out / in_time).
    pub passes: usize,
}

/// Predicts `t_out` future frames from `(B, in_time, C, H, W)` context by
/// feeding each full prediction window back in as the next input; the final
/// window is truncated to the requested horizon. For `t_out <= in_time` this
/// is a single forward pass whose leading frames are returned unchanged.
pub fn predict_autoregressive(
    store: &ParamStore,
    cfg: &ModelConfig,
    x: &Tensor,
    t_out: usize,
) -> Result<Rollout> {
    if t_out == 0 {
        return arg_err("t_out must be >= 1");
    }
    let t = cfg.in_time;
    let passes = t_out.div_ceil(t);
    let mut windows = Vec::with_capacity(passes);
    let mut window = x.clone();
    for _ in 0..passes {
        window = forward_inference(store, cfg, &window)?;
        windows.push(window.clone());
    }
    let all = Tensor::concat(&windows, 1)?;
    let frames = if all.shape()[1] == t_out {
        all
    } else {
        all.slice_axis(1, 0, t_out)?
    };
    Ok(Rollout { frames, passes })
}
