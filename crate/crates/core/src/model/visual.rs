use ndarray::{s, Array2, Array3, Array4, Axis};
use rand::Rng;

use super::ModelConfig;
use crate::error::{Error, Result};
use crate::nn::{
    relu, relu_backward, BatchNorm, BatchNormCtx, BiGruStack, BiGruStackCtx, Conv2d, Conv2dCtx,
    Conv3d, Conv3dCtx, GlobalAvgPool2d, MaxPool2d, MaxPool2dCtx, TensorVisitor,
};

/// Per-item activations are (channels, frames, height, width); batch norm
/// sees them flattened to (channels, everything else).
fn flatten(x: &Array4<f64>) -> Array2<f64> {
    let (c, t, h, w) = x.dim();
    let v: Vec<f64> = x.iter().copied().collect();
    Array2::from_shape_vec((c, t * h * w), v).unwrap()
}

fn unflatten(m: &Array2<f64>, dims: (usize, usize, usize, usize)) -> Array4<f64> {
    let v: Vec<f64> = m.iter().copied().collect();
    Array4::from_shape_vec(dims, v).unwrap()
}

fn frame(x: &Array4<f64>, t: usize) -> Array3<f64> {
    x.index_axis(Axis(1), t).to_owned()
}

fn set_frame(x: &mut Array4<f64>, t: usize, fr: &Array3<f64>) {
    x.slice_mut(s![.., t, .., ..]).assign(fr);
}

/// Standard two-convolution residual block applied frame by frame, with an
/// optional strided 1x1 projection on the skip path when the shape changes.
#[derive(Debug, Clone)]
pub struct BasicBlock {
    conv1: Conv2d,
    bn1: BatchNorm,
    conv2: Conv2d,
    bn2: BatchNorm,
    down: Option<(Conv2d, BatchNorm)>,
}

pub struct BasicBlockCtx {
    conv1: Vec<Vec<Conv2dCtx>>,
    bn1: BatchNormCtx,
    mask1: Vec<Array4<bool>>,
    conv2: Vec<Vec<Conv2dCtx>>,
    bn2: BatchNormCtx,
    down: Option<(Vec<Vec<Conv2dCtx>>, BatchNormCtx)>,
    mask_out: Vec<Array4<bool>>,
    mid_dims: Vec<(usize, usize, usize, usize)>,
}

impl BasicBlock {
    pub fn new(in_ch: usize, out_ch: usize, stride: usize, rng: &mut impl Rng) -> BasicBlock {
        let down = if stride != 1 || in_ch != out_ch {
            Some((
                Conv2d::new(in_ch, out_ch, 1, stride, 0, rng),
                BatchNorm::new(out_ch),
            ))
        } else {
            None
        };
        BasicBlock {
            conv1: Conv2d::new(in_ch, out_ch, 3, stride, 1, rng),
            bn1: BatchNorm::new(out_ch),
            conv2: Conv2d::new(out_ch, out_ch, 3, 1, 1, rng),
            bn2: BatchNorm::new(out_ch),
            down,
        }
    }

    fn conv_batch(
        conv: &Conv2d,
        xs: &[Array4<f64>],
    ) -> (Vec<Array4<f64>>, Vec<Vec<Conv2dCtx>>) {
        let mut outs = Vec::with_capacity(xs.len());
        let mut ctxs = Vec::with_capacity(xs.len());
        for x in xs {
            let t_len = x.shape()[1];
            let mut frames = Vec::with_capacity(t_len);
            let mut fctxs = Vec::with_capacity(t_len);
            for t in 0..t_len {
                let (y, c) = conv.forward(&frame(x, t));
                frames.push(y);
                fctxs.push(c);
            }
            let (c, h, w) = frames[0].dim();
            let mut out = Array4::zeros((c, t_len, h, w));
            for (t, fr) in frames.iter().enumerate() {
                set_frame(&mut out, t, fr);
            }
            outs.push(out);
            ctxs.push(fctxs);
        }
        (outs, ctxs)
    }

    fn conv_batch_backward(
        conv: &mut Conv2d,
        ctxs: &[Vec<Conv2dCtx>],
        dys: &[Array4<f64>],
        in_dims: impl Fn(usize) -> (usize, usize, usize, usize),
    ) -> Vec<Array4<f64>> {
        let mut dxs = Vec::with_capacity(dys.len());
        for (i, dy) in dys.iter().enumerate() {
            let dims = in_dims(i);
            let mut dx = Array4::zeros(dims);
            for t in 0..dy.shape()[1] {
                let d = conv.backward(&ctxs[i][t], &frame(dy, t));
                set_frame(&mut dx, t, &d);
            }
            dxs.push(dx);
        }
        dxs
    }

    fn bn_batch(
        bn: &mut BatchNorm,
        xs: &[Array4<f64>],
        train: bool,
    ) -> (Vec<Array4<f64>>, BatchNormCtx) {
        let flat: Vec<Array2<f64>> = xs.iter().map(flatten).collect();
        let (ys, ctx) = bn.forward(&flat, train);
        let out = ys
            .iter()
            .zip(xs)
            .map(|(y, x)| unflatten(y, x.dim()))
            .collect();
        (out, ctx)
    }

    fn bn_batch_backward(
        bn: &mut BatchNorm,
        ctx: &BatchNormCtx,
        dys: &[Array4<f64>],
    ) -> Vec<Array4<f64>> {
        let flat: Vec<Array2<f64>> = dys.iter().map(flatten).collect();
        let dxs = bn.backward(ctx, &flat);
        dxs.iter()
            .zip(dys)
            .map(|(d, dy)| unflatten(d, dy.dim()))
            .collect()
    }

    pub fn forward_batch(
        &mut self,
        xs: &[Array4<f64>],
        train: bool,
    ) -> (Vec<Array4<f64>>, BasicBlockCtx) {
        let (a, conv1_ctx) = Self::conv_batch(&self.conv1, xs);
        let (b, bn1_ctx) = Self::bn_batch(&mut self.bn1, &a, train);
        let mut mask1 = Vec::with_capacity(b.len());
        let mut c = Vec::with_capacity(b.len());
        let mut mid_dims = Vec::with_capacity(b.len());
        for item in &b {
            let (y, m) = relu(item);
            mid_dims.push(item.dim());
            mask1.push(m);
            c.push(y);
        }
        let (d, conv2_ctx) = Self::conv_batch(&self.conv2, &c);
        let (e, bn2_ctx) = Self::bn_batch(&mut self.bn2, &d, train);

        let (skips, down_ctx) = match &mut self.down {
            Some((conv, bn)) => {
                let (s, cctx) = Self::conv_batch(conv, xs);
                let (s, bctx) = Self::bn_batch(bn, &s, train);
                (s, Some((cctx, bctx)))
            }
            None => (xs.to_vec(), None),
        };

        let mut ys = Vec::with_capacity(e.len());
        let mut mask_out = Vec::with_capacity(e.len());
        for (main, skip) in e.iter().zip(&skips) {
            let summed = main + skip;
            let (y, m) = relu(&summed);
            ys.push(y);
            mask_out.push(m);
        }
        (
            ys,
            BasicBlockCtx {
                conv1: conv1_ctx,
                bn1: bn1_ctx,
                mask1,
                conv2: conv2_ctx,
                bn2: bn2_ctx,
                down: down_ctx,
                mask_out,
                mid_dims,
            },
        )
    }

    pub fn backward_batch(
        &mut self,
        ctx: &BasicBlockCtx,
        dys: &[Array4<f64>],
        in_dims: &[(usize, usize, usize, usize)],
    ) -> Vec<Array4<f64>> {
        let d_pre: Vec<Array4<f64>> = dys
            .iter()
            .zip(&ctx.mask_out)
            .map(|(dy, m)| relu_backward(m, dy))
            .collect();

        let d_d = Self::bn_batch_backward(&mut self.bn2, &ctx.bn2, &d_pre);
        let d_c = Self::conv_batch_backward(&mut self.conv2, &ctx.conv2, &d_d, |i| {
            ctx.mid_dims[i]
        });
        let d_b: Vec<Array4<f64>> = d_c
            .iter()
            .zip(&ctx.mask1)
            .map(|(d, m)| relu_backward(m, d))
            .collect();
        let d_a = Self::bn_batch_backward(&mut self.bn1, &ctx.bn1, &d_b);
        let mut dx =
            Self::conv_batch_backward(&mut self.conv1, &ctx.conv1, &d_a, |i| in_dims[i]);

        match (&mut self.down, &ctx.down) {
            (Some((conv, bn)), Some((cctx, bctx))) => {
                let d_s = Self::bn_batch_backward(bn, bctx, &d_pre);
                let d_skip = Self::conv_batch_backward(conv, cctx, &d_s, |i| in_dims[i]);
                for (dx_i, ds_i) in dx.iter_mut().zip(&d_skip) {
                    *dx_i += ds_i;
                }
            }
            (None, None) => {
                for (dx_i, dp_i) in dx.iter_mut().zip(&d_pre) {
                    *dx_i += dp_i;
                }
            }
            _ => unreachable!("context and block structure always agree"),
        }
        dx
    }

    pub fn visit(&mut self, prefix: &str, f: &mut TensorVisitor<'_>) {
        self.conv1.visit(&format!("{prefix}.conv1"), f);
        self.bn1.visit(&format!("{prefix}.bn1"), f);
        self.conv2.visit(&format!("{prefix}.conv2"), f);
        self.bn2.visit(&format!("{prefix}.bn2"), f);
        if let Some((conv, bn)) = &mut self.down {
            conv.visit(&format!("{prefix}.down_conv"), f);
            bn.visit(&format!("{prefix}.down_bn"), f);
        }
    }
}

/// Visual stream: a spatiotemporal convolution over the ROI sequence, a
/// per-frame residual trunk ending in global average pooling, and a 2-layer
/// bidirectional GRU over the resulting frame features. Temporal padding in
/// the front end preserves the frame count end to end.
#[derive(Debug, Clone)]
pub struct VisualStream {
    frontend: Conv3d,
    fbn: BatchNorm,
    fpool: MaxPool2d,
    blocks: Vec<BasicBlock>,
    gap: GlobalAvgPool2d,
    gru: BiGruStack,
    input_h: usize,
    input_w: usize,
}

pub struct VisualTrunkCtx {
    frontend: Vec<Conv3dCtx>,
    fbn: BatchNormCtx,
    fmask: Vec<Array4<bool>>,
    fpool: Vec<Vec<MaxPool2dCtx>>,
    blocks: Vec<BasicBlockCtx>,
    block_in_dims: Vec<Vec<(usize, usize, usize, usize)>>,
    gap_dims: (usize, usize, usize),
}

pub struct VisualStreamCtx {
    trunk: VisualTrunkCtx,
    gru: Vec<BiGruStackCtx>,
}

impl VisualStream {
    pub fn new(cfg: &ModelConfig, rng: &mut impl Rng) -> VisualStream {
        let v = &cfg.visual;
        let frontend = Conv3d::new(
            1,
            v.frontend_channels,
            (v.temporal_kernel, v.spatial_kernel, v.spatial_kernel),
            (1, v.spatial_stride, v.spatial_stride),
            (v.temporal_kernel / 2, v.spatial_padding, v.spatial_padding),
            rng,
        );
        let mut blocks = Vec::new();
        let mut in_ch = v.frontend_channels;
        for stage in &v.stages {
            for b in 0..stage.blocks {
                let stride = if b == 0 { stage.stride } else { 1 };
                blocks.push(BasicBlock::new(in_ch, stage.channels, stride, rng));
                in_ch = stage.channels;
            }
        }
        VisualStream {
            frontend,
            fbn: BatchNorm::new(v.frontend_channels),
            fpool: MaxPool2d::new(v.pool_kernel, v.pool_stride, v.pool_padding),
            blocks,
            gap: GlobalAvgPool2d,
            gru: BiGruStack::new(v.feature_dim(), cfg.gru_cells_per_direction, rng),
            input_h: v.input_h,
            input_w: v.input_w,
        }
    }

    pub fn out_dim(&self) -> usize {
        self.gru.out_dim()
    }

    /// ROI sequences -> per-item (frames, trunk feature) matrices, stopping
    /// before the recurrent layers. Exposed so the purely convolutional part
    /// of the stream can be probed on its own.
    pub fn trunk_forward_batch(
        &mut self,
        rois: &[Array3<f64>],
        train: bool,
    ) -> Result<(Vec<Array2<f64>>, VisualTrunkCtx)> {
        for roi in rois {
            let (_, h, w) = roi.dim();
            if h != self.input_h || w != self.input_w {
                return Err(Error::FrameDimMismatch {
                    got_h: h,
                    got_w: w,
                    want_h: self.input_h,
                    want_w: self.input_w,
                });
            }
        }

        let mut fr_ctxs = Vec::with_capacity(rois.len());
        let mut activ = Vec::with_capacity(rois.len());
        for roi in rois {
            let (t, h, w) = roi.dim();
            let x = unflatten(&flatten_3d(roi), (1, t, h, w));
            let (y, c) = self.frontend.forward(&x);
            fr_ctxs.push(c);
            activ.push(y);
        }
        let (normed, fbn_ctx) = BasicBlock::bn_batch(&mut self.fbn, &activ, train);
        let mut fmask = Vec::with_capacity(normed.len());
        let mut pooled = Vec::with_capacity(normed.len());
        let mut fpool_ctxs = Vec::with_capacity(normed.len());
        for item in &normed {
            let (y, m) = relu(item);
            fmask.push(m);
            let t_len = y.shape()[1];
            let mut fctxs = Vec::with_capacity(t_len);
            let mut frames = Vec::with_capacity(t_len);
            for t in 0..t_len {
                let (p, c) = self.fpool.forward(&frame(&y, t));
                frames.push(p);
                fctxs.push(c);
            }
            let (c, h, w) = frames[0].dim();
            let mut out = Array4::zeros((c, t_len, h, w));
            for (t, fr) in frames.iter().enumerate() {
                set_frame(&mut out, t, fr);
            }
            pooled.push(out);
            fpool_ctxs.push(fctxs);
        }

        let mut block_ctxs = Vec::with_capacity(self.blocks.len());
        let mut block_in_dims = Vec::with_capacity(self.blocks.len());
        let mut cur = pooled;
        for block in &mut self.blocks {
            block_in_dims.push(cur.iter().map(|x| x.dim()).collect::<Vec<_>>());
            let (ys, ctx) = block.forward_batch(&cur, train);
            block_ctxs.push(ctx);
            cur = ys;
        }

        let (c, _, h, w) = cur[0].dim();
        let mut feats = Vec::with_capacity(cur.len());
        for item in &cur {
            let t_len = item.shape()[1];
            let mut m = Array2::zeros((t_len, c));
            for t in 0..t_len {
                m.row_mut(t).assign(&self.gap.forward(&frame(item, t)));
            }
            feats.push(m);
        }
        Ok((
            feats,
            VisualTrunkCtx {
                frontend: fr_ctxs,
                fbn: fbn_ctx,
                fmask,
                fpool: fpool_ctxs,
                blocks: block_ctxs,
                block_in_dims,
                gap_dims: (c, h, w),
            },
        ))
    }

    /// ROI sequences -> per-item (frames, feature) matrices.
    pub fn forward_batch(
        &mut self,
        rois: &[Array3<f64>],
        train: bool,
    ) -> Result<(Vec<Array2<f64>>, VisualStreamCtx)> {
        let (feats, trunk) = self.trunk_forward_batch(rois, train)?;
        let mut out = Vec::with_capacity(feats.len());
        let mut gru_ctxs = Vec::with_capacity(feats.len());
        for f in &feats {
            let (y, c) = self.gru.forward(f);
            out.push(y);
            gru_ctxs.push(c);
        }
        Ok((
            out,
            VisualStreamCtx {
                trunk,
                gru: gru_ctxs,
            },
        ))
    }

    pub fn backward_batch(&mut self, ctx: &VisualStreamCtx, dys: &[Array2<f64>]) {
        let mut d_feats = Vec::with_capacity(dys.len());
        for (i, dy) in dys.iter().enumerate() {
            d_feats.push(self.gru.backward(&ctx.gru[i], dy));
        }
        self.trunk_backward_batch(&ctx.trunk, &d_feats);
    }

    fn trunk_backward_batch(&mut self, ctx: &VisualTrunkCtx, d_feats: &[Array2<f64>]) {
        let (c, h, w) = ctx.gap_dims;
        let mut cur: Vec<Array4<f64>> = d_feats
            .iter()
            .map(|df| {
                let t_len = df.shape()[0];
                let mut d = Array4::zeros((c, t_len, h, w));
                for t in 0..t_len {
                    let row = df.row(t).to_owned();
                    set_frame(&mut d, t, &self.gap.backward((c, h, w), &row));
                }
                d
            })
            .collect();

        for (b, block) in self.blocks.iter_mut().enumerate().rev() {
            cur = block.backward_batch(&ctx.blocks[b], &cur, &ctx.block_in_dims[b]);
        }

        let mut d_relu = Vec::with_capacity(cur.len());
        for (i, d_pool) in cur.iter().enumerate() {
            let dims = ctx.fmask[i].dim();
            let mut d = Array4::zeros(dims);
            for t in 0..d_pool.shape()[1] {
                let dframe = self.fpool.backward(&ctx.fpool[i][t], &frame(d_pool, t));
                set_frame(&mut d, t, &dframe);
            }
            d_relu.push(relu_backward(&ctx.fmask[i], &d));
        }
        let d_front = BasicBlock::bn_batch_backward(&mut self.fbn, &ctx.fbn, &d_relu);
        for (i, d) in d_front.iter().enumerate() {
            self.frontend.backward(&ctx.frontend[i], d);
        }
    }

    pub fn visit(&mut self, prefix: &str, f: &mut TensorVisitor<'_>) {
        self.frontend.visit(&format!("{prefix}.frontend"), f);
        self.fbn.visit(&format!("{prefix}.frontend_bn"), f);
        for (i, block) in self.blocks.iter_mut().enumerate() {
            block.visit(&format!("{prefix}.block{i}"), f);
        }
        self.gru.visit(&format!("{prefix}.gru"), f);
    }
}

fn flatten_3d(x: &Array3<f64>) -> Array2<f64> {
    let (t, h, w) = x.dim();
    let v: Vec<f64> = x.iter().copied().collect();
    Array2::from_shape_vec((1, t * h * w), v).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn roi(t: usize, cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Array3<f64> {
        Array3::from_shape_simple_fn((t, cfg.visual.input_h, cfg.visual.input_w), || {
            rng.gen_range(-1.0..1.0)
        })
    }

    #[test]
    fn tiny_stream_preserves_frame_count() {
        let cfg = ModelConfig::tiny();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut stream = VisualStream::new(&cfg, &mut rng);
        let x = roi(25, &cfg, &mut rng);
        let (ys, _) = stream.forward_batch(&[x], false).unwrap();
        assert_eq!(ys[0].shape(), &[25, 32]);
    }

    #[test]
    fn full_stream_emits_256_features_per_frame() {
        let cfg = ModelConfig::full();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut stream = VisualStream::new(&cfg, &mut rng);
        let x = roi(5, &cfg, &mut rng);
        let (ys, _) = stream.forward_batch(&[x], false).unwrap();
        assert_eq!(ys[0].shape(), &[5, 256]);
    }

    #[test]
    fn wrong_roi_dimensions_are_rejected() {
        let cfg = ModelConfig::tiny();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut stream = VisualStream::new(&cfg, &mut rng);
        let x = Array3::zeros((6, 30, 36));
        let err = stream.forward_batch(&[x], false).err().unwrap();
        assert!(matches!(
            err,
            Error::FrameDimMismatch {
                got_h: 30,
                want_h: 28,
                ..
            }
        ));
    }

    #[test]
    fn trunk_receptive_field_spans_two_frames_each_side() {
        let cfg = ModelConfig::tiny();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut stream = VisualStream::new(&cfg, &mut rng);
        let base = roi(20, &cfg, &mut rng);
        let mut poked = base.clone();
        for h in 0..cfg.visual.input_h {
            for w in 0..cfg.visual.input_w {
                poked[[10, h, w]] += rng.gen_range(0.1..0.5);
            }
        }
        let (a, _) = stream.trunk_forward_batch(&[base], false).unwrap();
        let (b, _) = stream.trunk_forward_batch(&[poked], false).unwrap();
        for t in 0..20 {
            let differs = a[0]
                .row(t)
                .iter()
                .zip(b[0].row(t).iter())
                .any(|(x, y)| (x - y).abs() > 1e-12);
            assert_eq!(
                differs,
                (8..=12).contains(&t),
                "frame {t} should {}differ",
                if (8..=12).contains(&t) { "" } else { "not " }
            );
        }
    }

    /// Delaying the input by one frame delays interior trunk rows by one
    /// frame. Rows within kernel reach of the sequence ends are excluded:
    /// they mix with the zero padding, which does not shift.
    #[test]
    fn trunk_is_temporally_shift_equivariant_in_the_interior() {
        let cfg = ModelConfig::tiny();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut stream = VisualStream::new(&cfg, &mut rng);
        let x = roi(9, &cfg, &mut rng);
        let pad = roi(1, &cfg, &mut rng);
        let mut delayed = x.clone();
        delayed.index_axis_mut(Axis(0), 0).assign(&pad.index_axis(Axis(0), 0));
        for t in 1..9 {
            delayed
                .index_axis_mut(Axis(0), t)
                .assign(&x.index_axis(Axis(0), t - 1));
        }
        let (a, _) = stream.trunk_forward_batch(&[x], false).unwrap();
        let (b, _) = stream.trunk_forward_batch(&[delayed], false).unwrap();
        for t in 3..=6 {
            for j in 0..a[0].shape()[1] {
                assert!((b[0][[t, j]] - a[0][[t - 1, j]]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_input_with_zero_biases_gives_zero_trunk_output() {
        let cfg = ModelConfig::tiny();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut stream = VisualStream::new(&cfg, &mut rng);
        stream.visit("v", &mut |name, p| {
            if name.ends_with("bias") || name.ends_with("beta") {
                let mut v = p.value;
                v.fill(0.0);
            }
        });
        let x = Array3::zeros((6, cfg.visual.input_h, cfg.visual.input_w));
        let (ys, _) = stream.trunk_forward_batch(&[x], false).unwrap();
        assert!(ys[0].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn parameter_gradients_match_finite_differences() {
        let cfg = ModelConfig::tiny();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut stream = VisualStream::new(&cfg, &mut rng);
        let rois = vec![roi(5, &cfg, &mut rng), roi(6, &cfg, &mut rng)];
        let (ys, ctx) = stream.forward_batch(&rois, true).unwrap();
        let weights: Vec<Array2<f64>> = ys
            .iter()
            .map(|y| Array2::from_shape_simple_fn(y.raw_dim(), || rng.gen_range(-1.0..1.0)))
            .collect();
        stream.backward_batch(&ctx, &weights);

        let objective = |stream: &VisualStream, rois: &[Array3<f64>]| {
            let mut probe = stream.clone();
            let (ys, _) = probe.forward_batch(rois, true).unwrap();
            ys.iter()
                .zip(&weights)
                .map(|(y, w)| (y * w).sum())
                .sum::<f64>()
        };

        let h = 1e-6;
        let fd_of = |stream: &mut VisualStream, poke: &dyn Fn(&mut VisualStream, f64)| {
            poke(stream, h);
            let up = objective(stream, &rois);
            poke(stream, -2.0 * h);
            let down = objective(stream, &rois);
            poke(stream, h);
            (up - down) / (2.0 * h)
        };

        let fd = fd_of(&mut stream, &|s, d| {
            s.frontend.weight.value[[3, 0, 2, 1, 1]] += d
        });
        let got = stream.frontend.weight.grad[[3, 0, 2, 1, 1]];
        assert!(
            (got - fd).abs() < 1e-4 * fd.abs().max(1e-4),
            "frontend: {got} vs {fd}"
        );

        let fd = fd_of(&mut stream, &|s, d| {
            s.blocks[0].conv1.weight.value[[5, 2, 1, 1]] += d
        });
        let got = stream.blocks[0].conv1.weight.grad[[5, 2, 1, 1]];
        assert!(
            (got - fd).abs() < 1e-4 * fd.abs().max(1e-4),
            "block conv: {got} vs {fd}"
        );

        let fd = fd_of(&mut stream, &|s, d| {
            if let Some((conv, _)) = &mut s.blocks[0].down {
                conv.weight.value[[7, 3, 0, 0]] += d;
            }
        });
        let got = stream.blocks[0]
            .down
            .as_ref()
            .map(|(c, _)| c.weight.grad[[7, 3, 0, 0]])
            .unwrap();
        assert!(
            (got - fd).abs() < 1e-4 * fd.abs().max(1e-4),
            "skip conv: {got} vs {fd}"
        );

        let fd = fd_of(&mut stream, &|s, d| {
            s.gru.layers[0].fwd.w_ih.value[[4, 3]] += d
        });
        let got = stream.gru.layers[0].fwd.w_ih.grad[[4, 3]];
        assert!(
            (got - fd).abs() < 1e-4 * fd.abs().max(1e-4),
            "gru: {got} vs {fd}"
        );
    }
}
