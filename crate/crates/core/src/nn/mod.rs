//! Small CPU tensor layers with hand-written backward passes, in f64 and
//! single-threaded so forward passes are bitwise deterministic.
//!
//! Layers expose `forward(&self, x) -> (y, Ctx)` and
//! `backward(&mut self, ctx, dy) -> dx`; backward accumulates parameter
//! gradients in place. Composite models hand all tensors to callers through
//! [`ParamMut`] visitors keyed by dotted names, which drives the optimizer,
//! gradient clipping and checkpoints with no trait hierarchy.

mod conv;
mod gru;
mod linear;
mod norm;
mod pool;

pub use conv::{Conv1d, Conv1dCtx, Conv2d, Conv2dCtx, Conv3d, Conv3dCtx};
pub use gru::{BiGru, BiGruCtx, BiGruStack, BiGruStackCtx, Gru, GruCtx};
pub use linear::{Linear, LinearCtx};
pub use norm::{BatchNorm, BatchNormCtx};
pub use pool::{AvgPool1d, AvgPool1dCtx, GlobalAvgPool2d, MaxPool2d, MaxPool2dCtx};

use ndarray::{Array, Array2, ArrayViewMutD, Dimension};
use rand::Rng;
use std::collections::BTreeMap;

/// A trainable tensor and its gradient accumulator.
#[derive(Debug, Clone)]
pub struct Param<D: Dimension> {
    pub value: Array<f64, D>,
    pub grad: Array<f64, D>,
}

impl<D: Dimension> Param<D> {
    pub fn new(value: Array<f64, D>) -> Param<D> {
        let grad = Array::zeros(value.raw_dim());
        Param { value, grad }
    }

    pub fn visit(&mut self, name: String, f: &mut TensorVisitor<'_>) {
        f(
            name,
            ParamMut {
                value: self.value.view_mut().into_dyn(),
                grad: Some(self.grad.view_mut().into_dyn()),
            },
        );
    }
}

/// Mutable view of one named tensor; `grad` is `None` for running buffers,
/// which checkpoints persist but the optimizer skips.
pub struct ParamMut<'a> {
    pub value: ArrayViewMutD<'a, f64>,
    pub grad: Option<ArrayViewMutD<'a, f64>>,
}

/// Callback receiving every named tensor of a model.
pub type TensorVisitor<'a> = dyn FnMut(String, ParamMut<'_>) + 'a;

/// Joins name components with dots, skipping an empty prefix.
pub fn join_name(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// Uniform init in [-bound, bound] with bound = 1/sqrt(fan_in), matching
/// the usual default for linear, convolutional and recurrent layers.
pub fn uniform_init<D: Dimension>(
    shape: D,
    fan_in: usize,
    rng: &mut impl Rng,
) -> Array<f64, D> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    Array::from_shape_simple_fn(shape, || rng.gen_range(-bound..bound))
}

/// Elementwise max(0, x); the mask feeds the backward pass.
pub fn relu<D: Dimension>(x: &Array<f64, D>) -> (Array<f64, D>, Array<bool, D>) {
    let mask = x.mapv(|v| v > 0.0);
    let y = x.mapv(|v| v.max(0.0));
    (y, mask)
}

pub fn relu_backward<D: Dimension>(mask: &Array<bool, D>, dy: &Array<f64, D>) -> Array<f64, D> {
    let mut dx = dy.clone();
    dx.zip_mut_with(mask, |d, &m| {
        if !m {
            *d = 0.0;
        }
    });
    dx
}

/// Row-wise log-softmax of (T, C) logits.
pub fn log_softmax(x: &Array2<f64>) -> Array2<f64> {
    let mut out = x.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        row.mapv_inplace(|v| v - lse);
    }
    out
}

/// Backward of log-softmax: `dx = dy - softmax(x) * sum(dy)` per row, with
/// `y` the forward output.
pub fn log_softmax_backward(y: &Array2<f64>, dy: &Array2<f64>) -> Array2<f64> {
    let mut dx = dy.clone();
    for (mut dx_row, (y_row, dy_row)) in
        dx.rows_mut().into_iter().zip(y.rows().into_iter().zip(dy.rows()))
    {
        let total: f64 = dy_row.sum();
        for (d, &yv) in dx_row.iter_mut().zip(y_row) {
            *d -= yv.exp() * total;
        }
    }
    dx
}

/// Zeroes every gradient the visitor exposes.
pub fn zero_grads(visit: impl FnOnce(&mut TensorVisitor<'_>)) {
    visit(&mut |_name, mut p: ParamMut<'_>| {
        if let Some(g) = p.grad.as_mut() {
            g.fill(0.0);
        }
    });
}

/// Global L2 norm over all gradients.
pub fn grad_norm(visit: impl FnOnce(&mut TensorVisitor<'_>)) -> f64 {
    let mut sq = 0.0;
    visit(&mut |_name, p: ParamMut<'_>| {
        if let Some(g) = p.grad.as_ref() {
            sq += g.iter().map(|v| v * v).sum::<f64>();
        }
    });
    sq.sqrt()
}

/// Scales all gradients so the global norm does not exceed `max_norm`;
/// returns the pre-clip norm.
pub fn clip_grad_norm(
    max_norm: f64,
    mut visit: impl FnMut(&mut TensorVisitor<'_>),
) -> f64 {
    let mut sq = 0.0;
    visit(&mut |_name, p: ParamMut<'_>| {
        if let Some(g) = p.grad.as_ref() {
            sq += g.iter().map(|v| v * v).sum::<f64>();
        }
    });
    let norm = sq.sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        visit(&mut |_name, mut p: ParamMut<'_>| {
            if let Some(g) = p.grad.as_mut() {
                g.mapv_inplace(|v| v * scale);
            }
        });
    }
    norm
}

/// Adam with per-tensor moments keyed by parameter name.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step_count: u64,
    pub moments: BTreeMap<String, (ndarray::ArrayD<f64>, ndarray::ArrayD<f64>)>,
}

impl Adam {
    pub fn new(lr: f64) -> Adam {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step_count: 0,
            moments: BTreeMap::new(),
        }
    }

    /// One update over every visited parameter (buffers are skipped).
    pub fn step(&mut self, visit: impl FnOnce(&mut TensorVisitor<'_>)) {
        self.step_count += 1;
        let t = self.step_count as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (lr, beta1, beta2, eps) = (self.lr, self.beta1, self.beta2, self.eps);
        let moments = &mut self.moments;
        visit(&mut |name, mut p: ParamMut<'_>| {
            let Some(g) = p.grad.as_ref() else {
                return;
            };
            let (m, v) = moments.entry(name).or_insert_with(|| {
                (
                    ndarray::ArrayD::zeros(g.raw_dim()),
                    ndarray::ArrayD::zeros(g.raw_dim()),
                )
            });
            for (((w, m), v), &g) in p
                .value
                .iter_mut()
                .zip(m.iter_mut())
                .zip(v.iter_mut())
                .zip(g.iter())
            {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        });
    }
}
