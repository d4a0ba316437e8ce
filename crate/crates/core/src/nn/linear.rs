use ndarray::{Array2, Ix1, Ix2};
use rand::Rng;

use super::{join_name, uniform_init, Param, TensorVisitor};

/// Affine map applied to each row: `y = x W^T + b`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: Param<Ix2>, // (out, in)
    pub bias: Param<Ix1>,   // (out)
}

pub struct LinearCtx {
    x: Array2<f64>,
}

impl Linear {
    pub fn new(in_dim: usize, out_dim: usize, rng: &mut impl Rng) -> Linear {
        Linear {
            weight: Param::new(uniform_init(Ix2(out_dim, in_dim), in_dim, rng)),
            bias: Param::new(uniform_init(Ix1(out_dim), in_dim, rng)),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.value.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.value.nrows()
    }

    /// (T, in) -> (T, out)
    pub fn forward(&self, x: &Array2<f64>) -> (Array2<f64>, LinearCtx) {
        let y = x.dot(&self.weight.value.t()) + &self.bias.value;
        (y, LinearCtx { x: x.clone() })
    }

    pub fn backward(&mut self, ctx: &LinearCtx, dy: &Array2<f64>) -> Array2<f64> {
        self.weight.grad += &dy.t().dot(&ctx.x);
        self.bias.grad += &dy.sum_axis(ndarray::Axis(0));
        dy.dot(&self.weight.value)
    }

    pub fn visit(&mut self, prefix: &str, f: &mut TensorVisitor<'_>) {
        self.weight.visit(join_name(prefix, "weight"), f);
        self.bias.visit(join_name(prefix, "bias"), f);
    }
}
