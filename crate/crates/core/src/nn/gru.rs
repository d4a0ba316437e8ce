use ndarray::{s, Array1, Array2, Ix1, Ix2};
use rand::Rng;

use super::{join_name, uniform_init, Param, TensorVisitor};

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Single-direction gated recurrent unit over a (time, features) sequence.
///
/// Gate tensors stack reset, update and candidate rows in that order, so
/// `w_ih` is (3 * hidden, input) and the pre-activations split into three
/// equal blocks. With `reverse` set the sequence is consumed back to front
/// and the output row at position `t` holds the state after reading
/// everything from the end down to `t`.
#[derive(Debug, Clone)]
pub struct Gru {
    pub w_ih: Param<Ix2>,
    pub w_hh: Param<Ix2>,
    pub b_ih: Param<Ix1>,
    pub b_hh: Param<Ix1>,
    pub reverse: bool,
}

pub struct GruCtx {
    x: Array2<f64>,
    h_prev: Array2<f64>,
    r: Array2<f64>,
    z: Array2<f64>,
    n: Array2<f64>,
    u_n: Array2<f64>,
}

impl Gru {
    pub fn new(input: usize, hidden: usize, reverse: bool, rng: &mut impl Rng) -> Gru {
        Gru {
            w_ih: Param::new(uniform_init(Ix2(3 * hidden, input), hidden, rng)),
            w_hh: Param::new(uniform_init(Ix2(3 * hidden, hidden), hidden, rng)),
            b_ih: Param::new(uniform_init(Ix1(3 * hidden), hidden, rng)),
            b_hh: Param::new(uniform_init(Ix1(3 * hidden), hidden, rng)),
            reverse,
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_hh.value.shape()[1]
    }

    pub fn input_dim(&self) -> usize {
        self.w_ih.value.shape()[1]
    }

    fn steps(&self, t_len: usize) -> Vec<usize> {
        if self.reverse {
            (0..t_len).rev().collect()
        } else {
            (0..t_len).collect()
        }
    }

    /// (T, input) -> (T, hidden)
    pub fn forward(&self, x: &Array2<f64>) -> (Array2<f64>, GruCtx) {
        let (t_len, _) = x.dim();
        let hd = self.hidden_dim();
        let mut y = Array2::zeros((t_len, hd));
        let mut ctx = GruCtx {
            x: x.clone(),
            h_prev: Array2::zeros((t_len, hd)),
            r: Array2::zeros((t_len, hd)),
            z: Array2::zeros((t_len, hd)),
            n: Array2::zeros((t_len, hd)),
            u_n: Array2::zeros((t_len, hd)),
        };
        let mut h = Array1::<f64>::zeros(hd);
        for t in self.steps(t_len) {
            let xt = x.row(t);
            let gx = self.w_ih.value.dot(&xt) + &self.b_ih.value;
            let gh = self.w_hh.value.dot(&h) + &self.b_hh.value;
            ctx.h_prev.row_mut(t).assign(&h);
            let mut h_new = Array1::zeros(hd);
            for j in 0..hd {
                let r = sigmoid(gx[j] + gh[j]);
                let z = sigmoid(gx[hd + j] + gh[hd + j]);
                let u_n = gh[2 * hd + j];
                let n = (gx[2 * hd + j] + r * u_n).tanh();
                ctx.r[[t, j]] = r;
                ctx.z[[t, j]] = z;
                ctx.n[[t, j]] = n;
                ctx.u_n[[t, j]] = u_n;
                h_new[j] = (1.0 - z) * n + z * h[j];
            }
            h = h_new;
            y.row_mut(t).assign(&h);
        }
        (y, ctx)
    }

    pub fn backward(&mut self, ctx: &GruCtx, dy: &Array2<f64>) -> Array2<f64> {
        let (t_len, hd) = dy.dim();
        let mut dx = Array2::zeros(ctx.x.raw_dim());
        let mut carry = Array1::<f64>::zeros(hd);

        let w_r = self.w_ih.value.slice(s![0..hd, ..]).to_owned();
        let w_z = self.w_ih.value.slice(s![hd..2 * hd, ..]).to_owned();
        let w_n = self.w_ih.value.slice(s![2 * hd.., ..]).to_owned();
        let u_r = self.w_hh.value.slice(s![0..hd, ..]).to_owned();
        let u_z = self.w_hh.value.slice(s![hd..2 * hd, ..]).to_owned();
        let u_n = self.w_hh.value.slice(s![2 * hd.., ..]).to_owned();

        let mut order = self.steps(t_len);
        order.reverse();
        for t in order {
            let dh = &dy.row(t) + &carry;
            let h_prev = ctx.h_prev.row(t);
            let xt = ctx.x.row(t);

            let mut dn_pre = Array1::zeros(hd);
            let mut dr_pre = Array1::zeros(hd);
            let mut dz_pre = Array1::zeros(hd);
            let mut d_un = Array1::zeros(hd);
            let mut dh_prev = Array1::zeros(hd);
            for j in 0..hd {
                let (r, z, n) = (ctx.r[[t, j]], ctx.z[[t, j]], ctx.n[[t, j]]);
                let dz = dh[j] * (h_prev[j] - n);
                let dn = dh[j] * (1.0 - z);
                dh_prev[j] = dh[j] * z;
                let dnp = dn * (1.0 - n * n);
                dn_pre[j] = dnp;
                let dr = dnp * ctx.u_n[[t, j]];
                d_un[j] = dnp * r;
                dz_pre[j] = dz * z * (1.0 - z);
                dr_pre[j] = dr * r * (1.0 - r);
            }

            for (rows, d_pre) in [(0, &dr_pre), (hd, &dz_pre), (2 * hd, &dn_pre)] {
                for j in 0..hd {
                    let g = d_pre[j];
                    if g == 0.0 {
                        continue;
                    }
                    self.b_ih.grad[rows + j] += g;
                    let mut wrow = self.w_ih.grad.row_mut(rows + j);
                    wrow.zip_mut_with(&xt, |w, &xv| *w += g * xv);
                }
            }
            // candidate recurrent path sees the reset gate, so its
            // pre-activation gradient is d_un rather than dn_pre
            for (rows, d_pre) in [(0, &dr_pre), (hd, &dz_pre), (2 * hd, &d_un)] {
                for j in 0..hd {
                    let g = d_pre[j];
                    if g == 0.0 {
                        continue;
                    }
                    self.b_hh.grad[rows + j] += g;
                    let mut urow = self.w_hh.grad.row_mut(rows + j);
                    urow.zip_mut_with(&h_prev, |u, &hv| *u += g * hv);
                }
            }

            let mut dxt = w_n.t().dot(&dn_pre);
            dxt += &w_r.t().dot(&dr_pre);
            dxt += &w_z.t().dot(&dz_pre);
            dx.row_mut(t).assign(&dxt);

            dh_prev += &u_n.t().dot(&d_un);
            dh_prev += &u_r.t().dot(&dr_pre);
            dh_prev += &u_z.t().dot(&dz_pre);
            carry = dh_prev;
        }
        dx
    }

    pub fn visit(&mut self, prefix: &str, f: &mut TensorVisitor<'_>) {
        self.w_ih.visit(join_name(prefix, "w_ih"), f);
        self.w_hh.visit(join_name(prefix, "w_hh"), f);
        self.b_ih.visit(join_name(prefix, "b_ih"), f);
        self.b_hh.visit(join_name(prefix, "b_hh"), f);
    }
}

/// Bidirectional GRU: forward and reverse passes over the same input with
/// their outputs concatenated, (T, input) -> (T, 2 * hidden).
#[derive(Debug, Clone)]
pub struct BiGru {
    pub fwd: Gru,
    pub bwd: Gru,
}

pub struct BiGruCtx {
    fwd: GruCtx,
    bwd: GruCtx,
}

impl BiGru {
    pub fn new(input: usize, hidden: usize, rng: &mut impl Rng) -> BiGru {
        BiGru {
            fwd: Gru::new(input, hidden, false, rng),
            bwd: Gru::new(input, hidden, true, rng),
        }
    }

    pub fn out_dim(&self) -> usize {
        2 * self.fwd.hidden_dim()
    }

    pub fn forward(&self, x: &Array2<f64>) -> (Array2<f64>, BiGruCtx) {
        let (yf, cf) = self.fwd.forward(x);
        let (yb, cb) = self.bwd.forward(x);
        let y = ndarray::concatenate(ndarray::Axis(1), &[yf.view(), yb.view()]).unwrap();
        (y, BiGruCtx { fwd: cf, bwd: cb })
    }

    pub fn backward(&mut self, ctx: &BiGruCtx, dy: &Array2<f64>) -> Array2<f64> {
        let hd = self.fwd.hidden_dim();
        let dyf = dy.slice(s![.., 0..hd]).to_owned();
        let dyb = dy.slice(s![.., hd..]).to_owned();
        let mut dx = self.fwd.backward(&ctx.fwd, &dyf);
        dx += &self.bwd.backward(&ctx.bwd, &dyb);
        dx
    }

    pub fn visit(&mut self, prefix: &str, f: &mut TensorVisitor<'_>) {
        self.fwd.visit(&join_name(prefix, "fwd"), f);
        self.bwd.visit(&join_name(prefix, "bwd"), f);
    }
}

/// Two stacked bidirectional GRU layers, (T, input) -> (T, 2 * hidden).
#[derive(Debug, Clone)]
pub struct BiGruStack {
    pub layers: Vec<BiGru>,
}

pub struct BiGruStackCtx {
    layers: Vec<BiGruCtx>,
}

impl BiGruStack {
    pub fn new(input: usize, hidden: usize, rng: &mut impl Rng) -> BiGruStack {
        BiGruStack {
            layers: vec![
                BiGru::new(input, hidden, rng),
                BiGru::new(2 * hidden, hidden, rng),
            ],
        }
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().unwrap().out_dim()
    }

    pub fn forward(&self, x: &Array2<f64>) -> (Array2<f64>, BiGruStackCtx) {
        let mut cur = x.clone();
        let mut ctxs = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (y, ctx) = layer.forward(&cur);
            cur = y;
            ctxs.push(ctx);
        }
        (cur, BiGruStackCtx { layers: ctxs })
    }

    pub fn backward(&mut self, ctx: &BiGruStackCtx, dy: &Array2<f64>) -> Array2<f64> {
        let mut cur = dy.clone();
        for (layer, lctx) in self.layers.iter_mut().zip(&ctx.layers).rev() {
            cur = layer.backward(lctx, &cur);
        }
        cur
    }

    pub fn visit(&mut self, prefix: &str, f: &mut TensorVisitor<'_>) {
        for (i, layer) in self.layers.iter_mut().enumerate() {
            layer.visit(&join_name(prefix, &format!("layer{i}")), f);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rand_input(t: usize, d: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
        Array2::from_shape_simple_fn((t, d), || rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn output_shape_and_state_flow_direction() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let gru = Gru::new(3, 4, false, &mut rng);
        let x = rand_input(6, 3, &mut rng);
        let (y, _) = gru.forward(&x);
        assert_eq!(y.shape(), &[6, 4]);

        // A forward pass over a truncated prefix must reproduce the
        // corresponding output rows, states only depend on the past.
        let x_prefix = x.slice(s![0..3, ..]).to_owned();
        let (y_prefix, _) = gru.forward(&x_prefix);
        for t in 0..3 {
            for j in 0..4 {
                assert!((y[[t, j]] - y_prefix[[t, j]]).abs() < 1e-15);
            }
        }

        // For the reverse direction the suffix plays that role.
        let rev = Gru::new(3, 4, true, &mut rng);
        let (yr, _) = rev.forward(&x);
        let x_suffix = x.slice(s![3.., ..]).to_owned();
        let (yr_suffix, _) = rev.forward(&x_suffix);
        for t in 0..3 {
            for j in 0..4 {
                assert!((yr[[3 + t, j]] - yr_suffix[[t, j]]).abs() < 1e-15);
            }
        }
    }

    fn check_gru_gradients(reverse: bool, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut gru = Gru::new(3, 4, reverse, &mut rng);
        let x = rand_input(5, 3, &mut rng);
        let (y, ctx) = gru.forward(&x);
        let w = Array2::from_shape_simple_fn(y.raw_dim(), || rng.gen_range(-1.0..1.0));
        let dx = gru.backward(&ctx, &w);

        let h = 1e-6;
        let objective = |gru: &Gru, x: &Array2<f64>| (gru.forward(x).0 * &w).sum();

        let mut x_pert = x.clone();
        for t in 0..5 {
            for d in 0..3 {
                let orig = x_pert[[t, d]];
                x_pert[[t, d]] = orig + h;
                let up = objective(&gru, &x_pert);
                x_pert[[t, d]] = orig - h;
                let down = objective(&gru, &x_pert);
                x_pert[[t, d]] = orig;
                let fd = (up - down) / (2.0 * h);
                assert!(
                    (dx[[t, d]] - fd).abs() < 1e-6,
                    "dx at ({t},{d}): got {} fd {fd}",
                    dx[[t, d]]
                );
            }
        }

        for idx in [[0, 0], [5, 2], [11, 1], [7, 0]] {
            let orig = gru.w_ih.value[idx];
            gru.w_ih.value[idx] = orig + h;
            let up = objective(&gru, &x);
            gru.w_ih.value[idx] = orig - h;
            let down = objective(&gru, &x);
            gru.w_ih.value[idx] = orig;
            let fd = (up - down) / (2.0 * h);
            assert!((gru.w_ih.grad[idx] - fd).abs() < 1e-6, "w_ih at {idx:?}");
        }
        for idx in [[0, 0], [6, 3], [11, 2], [4, 1]] {
            let orig = gru.w_hh.value[idx];
            gru.w_hh.value[idx] = orig + h;
            let up = objective(&gru, &x);
            gru.w_hh.value[idx] = orig - h;
            let down = objective(&gru, &x);
            gru.w_hh.value[idx] = orig;
            let fd = (up - down) / (2.0 * h);
            assert!((gru.w_hh.grad[idx] - fd).abs() < 1e-6, "w_hh at {idx:?}");
        }
        for j in [0, 5, 11] {
            let orig = gru.b_hh.value[j];
            gru.b_hh.value[j] = orig + h;
            let up = objective(&gru, &x);
            gru.b_hh.value[j] = orig - h;
            let down = objective(&gru, &x);
            gru.b_hh.value[j] = orig;
            let fd = (up - down) / (2.0 * h);
            assert!((gru.b_hh.grad[j] - fd).abs() < 1e-6, "b_hh at {j}");
        }
    }

    #[test]
    fn forward_gru_gradients_match_finite_differences() {
        check_gru_gradients(false, 1);
    }

    #[test]
    fn reverse_gru_gradients_match_finite_differences() {
        check_gru_gradients(true, 2);
    }

    #[test]
    fn bidirectional_concatenates_both_directions() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let bi = BiGru::new(3, 4, &mut rng);
        let x = rand_input(5, 3, &mut rng);
        let (y, _) = bi.forward(&x);
        assert_eq!(y.shape(), &[5, 8]);
        let (yf, _) = bi.fwd.forward(&x);
        let (yb, _) = bi.bwd.forward(&x);
        for t in 0..5 {
            for j in 0..4 {
                assert_eq!(y[[t, j]], yf[[t, j]]);
                assert_eq!(y[[t, 4 + j]], yb[[t, j]]);
            }
        }
    }

    #[test]
    fn stacked_bigru_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut stack = BiGruStack::new(3, 2, &mut rng);
        assert_eq!(stack.out_dim(), 4);
        let x = rand_input(4, 3, &mut rng);
        let (y, ctx) = stack.forward(&x);
        assert_eq!(y.shape(), &[4, 4]);
        let w = Array2::from_shape_simple_fn(y.raw_dim(), || rng.gen_range(-1.0..1.0));
        let dx = stack.backward(&ctx, &w);

        let h = 1e-6;
        let objective = |stack: &BiGruStack, x: &Array2<f64>| (stack.forward(x).0 * &w).sum();
        let mut x_pert = x.clone();
        for t in 0..4 {
            for d in 0..3 {
                let orig = x_pert[[t, d]];
                x_pert[[t, d]] = orig + h;
                let up = objective(&stack, &x_pert);
                x_pert[[t, d]] = orig - h;
                let down = objective(&stack, &x_pert);
                x_pert[[t, d]] = orig;
                let fd = (up - down) / (2.0 * h);
                assert!((dx[[t, d]] - fd).abs() < 1e-6, "dx at ({t},{d})");
            }
        }

        // one sampled weight in each layer
        let probes: Vec<(usize, [usize; 2])> = vec![(0, [3, 1]), (1, [2, 2])];
        for (layer, idx) in probes {
            let orig = stack.layers[layer].fwd.w_ih.value[idx];
            stack.layers[layer].fwd.w_ih.value[idx] = orig + h;
            let up = objective(&stack, &x);
            stack.layers[layer].fwd.w_ih.value[idx] = orig - h;
            let down = objective(&stack, &x);
            stack.layers[layer].fwd.w_ih.value[idx] = orig;
            let fd = (up - down) / (2.0 * h);
            let got = stack.layers[layer].fwd.w_ih.grad[idx];
            assert!((got - fd).abs() < 1e-6, "layer {layer} w_ih {idx:?}");
        }
    }

    #[test]
    fn visitor_covers_all_parameter_tensors() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut stack = BiGruStack::new(3, 2, &mut rng);
        let mut names = Vec::new();
        stack.visit("gru", &mut |name, _| names.push(name));
        assert_eq!(names.len(), 2 * 2 * 4);
        assert!(names.contains(&"gru.layer0.fwd.w_ih".to_string()));
        assert!(names.contains(&"gru.layer1.bwd.b_hh".to_string()));
    }
}
