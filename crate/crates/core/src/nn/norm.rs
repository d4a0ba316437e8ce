use ndarray::{Array1, Array2, Ix1};

use super::{join_name, Param, ParamMut, TensorVisitor};

/// Batch normalization over per-channel rows.
///
/// Each batch item is a (channels, positions) matrix; statistics pool every
/// position of every item, so variable-length sequences contribute exactly
/// their own timesteps and no padding is involved. Callers with spatial or
/// spatiotemporal activations flatten the trailing axes into the position
/// axis before calling.
#[derive(Debug, Clone)]
pub struct BatchNorm {
    pub gamma: Param<Ix1>,
    pub beta: Param<Ix1>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
    pub momentum: f64,
    pub eps: f64,
}

pub struct BatchNormCtx {
    x_hat: Vec<Array2<f64>>,
    inv_std: Array1<f64>,
    train: bool,
}

impl BatchNorm {
    pub fn new(channels: usize) -> BatchNorm {
        BatchNorm {
            gamma: Param::new(Array1::ones(channels)),
            beta: Param::new(Array1::zeros(channels)),
            running_mean: Array1::zeros(channels),
            running_var: Array1::ones(channels),
            momentum: 0.1,
            eps: 1e-5,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.value.len()
    }

    /// Normalizes every item of the batch. In training mode the batch
    /// statistics are used and the running estimates updated; in eval mode
    /// the running estimates are used and nothing is mutated.
    pub fn forward(&mut self, xs: &[Array2<f64>], train: bool) -> (Vec<Array2<f64>>, BatchNormCtx) {
        let ch = self.channels();
        for x in xs {
            assert_eq!(x.shape()[0], ch, "channel count mismatch");
        }
        let (mean, var) = if train {
            let n: usize = xs.iter().map(|x| x.shape()[1]).sum();
            assert!(n > 0, "empty batch");
            let mut mean = Array1::<f64>::zeros(ch);
            for x in xs {
                mean += &x.sum_axis(ndarray::Axis(1));
            }
            mean /= n as f64;
            let mut var = Array1::<f64>::zeros(ch);
            for x in xs {
                for (c, row) in x.outer_iter().enumerate() {
                    var[c] += row.iter().map(|v| (v - mean[c]).powi(2)).sum::<f64>();
                }
            }
            var /= n as f64;

            let unbiased = if n > 1 {
                &var * (n as f64 / (n as f64 - 1.0))
            } else {
                var.clone()
            };
            let m = self.momentum;
            self.running_mean = &self.running_mean * (1.0 - m) + &mean * m;
            self.running_var = &self.running_var * (1.0 - m) + &unbiased * m;
            (mean, var)
        } else {
            (self.running_mean.clone(), self.running_var.clone())
        };

        let inv_std = var.mapv(|v| 1.0 / (v + self.eps).sqrt());
        let mut x_hat = Vec::with_capacity(xs.len());
        let mut ys = Vec::with_capacity(xs.len());
        for x in xs {
            let mut xh = x.clone();
            for (c, mut row) in xh.outer_iter_mut().enumerate() {
                row.mapv_inplace(|v| (v - mean[c]) * inv_std[c]);
            }
            let mut y = xh.clone();
            for (c, mut row) in y.outer_iter_mut().enumerate() {
                row.mapv_inplace(|v| v * self.gamma.value[c] + self.beta.value[c]);
            }
            x_hat.push(xh);
            ys.push(y);
        }
        (
            ys,
            BatchNormCtx {
                x_hat,
                inv_std,
                train,
            },
        )
    }

    pub fn backward(&mut self, ctx: &BatchNormCtx, dys: &[Array2<f64>]) -> Vec<Array2<f64>> {
        let ch = self.channels();
        assert_eq!(dys.len(), ctx.x_hat.len());
        for (dy, xh) in dys.iter().zip(&ctx.x_hat) {
            assert_eq!(dy.dim(), xh.dim());
        }
        let n: usize = dys.iter().map(|d| d.shape()[1]).sum();

        let mut sum_dy = Array1::<f64>::zeros(ch);
        let mut sum_dy_xhat = Array1::<f64>::zeros(ch);
        for (dy, xh) in dys.iter().zip(&ctx.x_hat) {
            for c in 0..ch {
                let drow = dy.row(c);
                let xrow = xh.row(c);
                sum_dy[c] += drow.sum();
                sum_dy_xhat[c] += drow.iter().zip(xrow.iter()).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        for c in 0..ch {
            self.beta.grad[c] += sum_dy[c];
            self.gamma.grad[c] += sum_dy_xhat[c];
        }

        let mut dxs = Vec::with_capacity(dys.len());
        if ctx.train {
            let nf = n as f64;
            for (dy, xh) in dys.iter().zip(&ctx.x_hat) {
                let mut dx = dy.clone();
                for (c, mut row) in dx.outer_iter_mut().enumerate() {
                    let mean_dy = sum_dy[c] / nf;
                    let mean_dy_xhat = sum_dy_xhat[c] / nf;
                    let scale = self.gamma.value[c] * ctx.inv_std[c];
                    for (v, xhv) in row.iter_mut().zip(xh.row(c).iter()) {
                        *v = scale * (*v - mean_dy - xhv * mean_dy_xhat);
                    }
                }
                dxs.push(dx);
            }
        } else {
            for dy in dys {
                let mut dx = dy.clone();
                for (c, mut row) in dx.outer_iter_mut().enumerate() {
                    let scale = self.gamma.value[c] * ctx.inv_std[c];
                    row.mapv_inplace(|v| v * scale);
                }
                dxs.push(dx);
            }
        }
        dxs
    }

    pub fn visit(&mut self, prefix: &str, f: &mut TensorVisitor<'_>) {
        self.gamma.visit(join_name(prefix, "gamma"), f);
        self.beta.visit(join_name(prefix, "beta"), f);
        f(
            join_name(prefix, "running_mean"),
            ParamMut {
                value: self.running_mean.view_mut().into_dyn(),
                grad: None,
            },
        );
        f(
            join_name(prefix, "running_var"),
            ParamMut {
                value: self.running_var.view_mut().into_dyn(),
                grad: None,
            },
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_batch(widths: &[usize], ch: usize, rng: &mut ChaCha8Rng) -> Vec<Array2<f64>> {
        widths
            .iter()
            .map(|&w| Array2::from_shape_simple_fn((ch, w), || rng.gen_range(-2.0..2.0)))
            .collect()
    }

    #[test]
    fn training_output_has_zero_mean_unit_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut bn = BatchNorm::new(3);
        let xs = rand_batch(&[7, 5, 4], 3, &mut rng);
        let (ys, _) = bn.forward(&xs, true);
        let n: usize = xs.iter().map(|x| x.shape()[1]).sum();
        for c in 0..3 {
            let mut vals = Vec::new();
            for y in &ys {
                vals.extend(y.row(c).iter().copied());
            }
            let mean = vals.iter().sum::<f64>() / n as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
            assert!(mean.abs() < 1e-12, "channel {c} mean {mean}");
            assert!((var - 1.0).abs() < 1e-4, "channel {c} var {var}");
        }
    }

    #[test]
    fn eval_mode_uses_running_statistics_and_does_not_mutate() {
        let mut bn = BatchNorm::new(2);
        bn.running_mean = Array1::from_vec(vec![1.0, -1.0]);
        bn.running_var = Array1::from_vec(vec![4.0, 0.25]);
        let x = Array2::from_shape_vec((2, 2), vec![3.0, 1.0, 0.0, -1.0]).unwrap();
        let (ys, _) = bn.forward(&[x], false);
        let y = &ys[0];
        assert!((y[[0, 0]] - 2.0 / (4.0_f64 + 1e-5).sqrt()).abs() < 1e-12);
        assert!((y[[1, 1]] - 0.0).abs() < 1e-12);
        assert_eq!(bn.running_mean[0], 1.0, "eval must not touch running stats");
    }

    #[test]
    fn running_statistics_blend_with_momentum() {
        let mut bn = BatchNorm::new(1);
        let x = Array2::from_shape_vec((1, 4), vec![1.0, 3.0, 5.0, 7.0]).unwrap();
        bn.forward(&[x], true);
        // batch mean 4, biased var 5, unbiased var 20/3
        assert!((bn.running_mean[0] - 0.4).abs() < 1e-12);
        assert!((bn.running_var[0] - (0.9 + 0.1 * 20.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn gradients_match_finite_differences_across_items() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut bn = BatchNorm::new(2);
        bn.gamma.value = Array1::from_vec(vec![1.3, 0.7]);
        bn.beta.value = Array1::from_vec(vec![0.2, -0.4]);
        let xs = rand_batch(&[4, 3], 2, &mut rng);
        let ws: Vec<Array2<f64>> = xs
            .iter()
            .map(|x| Array2::from_shape_simple_fn(x.raw_dim(), || rng.gen_range(-1.0..1.0)))
            .collect();

        let objective = |bn: &BatchNorm, xs: &[Array2<f64>]| {
            let mut probe = bn.clone();
            let (ys, _) = probe.forward(xs, true);
            ys.iter().zip(&ws).map(|(y, w)| (y * w).sum()).sum::<f64>()
        };

        let (_, ctx) = bn.forward(&xs, true);
        let dxs = bn.backward(&ctx, &ws);

        let h = 1e-6;
        let mut xs_pert = xs.clone();
        for item in 0..xs.len() {
            for c in 0..2 {
                for j in 0..xs[item].shape()[1] {
                    let orig = xs_pert[item][[c, j]];
                    xs_pert[item][[c, j]] = orig + h;
                    let up = objective(&bn, &xs_pert);
                    xs_pert[item][[c, j]] = orig - h;
                    let down = objective(&bn, &xs_pert);
                    xs_pert[item][[c, j]] = orig;
                    let fd = (up - down) / (2.0 * h);
                    let got = dxs[item][[c, j]];
                    assert!(
                        (got - fd).abs() < 1e-6 * fd.abs().max(1.0),
                        "dx item {item} ({c},{j}): got {got} fd {fd}"
                    );
                }
            }
        }
        for c in 0..2 {
            let orig = bn.gamma.value[c];
            bn.gamma.value[c] = orig + h;
            let up = objective(&bn, &xs);
            bn.gamma.value[c] = orig - h;
            let down = objective(&bn, &xs);
            bn.gamma.value[c] = orig;
            let fd = (up - down) / (2.0 * h);
            assert!((bn.gamma.grad[c] - fd).abs() < 1e-6, "dgamma {c}");
        }
    }

    #[test]
    fn visitor_exposes_running_buffers_without_gradients() {
        let mut bn = BatchNorm::new(2);
        let mut seen = Vec::new();
        bn.visit("bn", &mut |name, p| seen.push((name, p.grad.is_some())));
        assert_eq!(
            seen,
            vec![
                ("bn.gamma".to_string(), true),
                ("bn.beta".to_string(), true),
                ("bn.running_mean".to_string(), false),
                ("bn.running_var".to_string(), false),
            ]
        );
    }
}
