use ndarray::{Array1, Array2};
use rand::Rng;

use super::ModelConfig;
use crate::error::{Error, Result};
use crate::nn::{
    relu, relu_backward, AvgPool1d, AvgPool1dCtx, BatchNorm, BatchNormCtx, BiGruStack,
    BiGruStackCtx, Conv1d, Conv1dCtx, TensorVisitor,
};

/// Audio stream: strided temporal conv blocks (conv, ReLU, batch norm) over
/// the raw waveform, a 2-layer bidirectional GRU at the conv output rate,
/// then average pooling down to the 25 fps video frame rate.
///
/// Batch items couple only through batch-norm statistics, so the batch API
/// takes a slice of variable-length waveforms and never pads.
#[derive(Debug, Clone)]
pub struct AudioStream {
    convs: Vec<Conv1d>,
    norms: Vec<BatchNorm>,
    gru: BiGruStack,
    pool: AvgPool1d,
    samples_per_frame: usize,
}

pub struct AudioStreamCtx {
    conv: Vec<Vec<Conv1dCtx>>,
    mask: Vec<Vec<Array2<bool>>>,
    bn: Vec<BatchNormCtx>,
    gru: Vec<BiGruStackCtx>,
    pool: Vec<AvgPool1dCtx>,
}

impl AudioStream {
    pub fn new(cfg: &ModelConfig, rng: &mut impl Rng) -> AudioStream {
        let a = &cfg.audio;
        let mut convs = Vec::new();
        let mut norms = Vec::new();
        let mut in_ch = 1;
        for ((&out_ch, &k), &s) in a.channels.iter().zip(&a.kernels).zip(&a.strides) {
            convs.push(Conv1d::new(in_ch, out_ch, k, s, rng));
            norms.push(BatchNorm::new(out_ch));
            in_ch = out_ch;
        }
        AudioStream {
            convs,
            norms,
            gru: BiGruStack::new(in_ch, cfg.gru_cells_per_direction, rng),
            pool: AvgPool1d::new(a.pool_window),
            samples_per_frame: cfg.samples_per_frame(),
        }
    }

    pub fn out_dim(&self) -> usize {
        self.gru.out_dim()
    }

    pub fn out_frames(&self, n_samples: usize) -> usize {
        n_samples / self.samples_per_frame
    }

    /// Waveforms -> per-item (frames, feature) matrices at 25 fps.
    pub fn forward_batch(
        &mut self,
        waves: &[Array1<f64>],
        train: bool,
    ) -> Result<(Vec<Array2<f64>>, AudioStreamCtx)> {
        for wave in waves {
            if wave.len() < self.samples_per_frame {
                return Err(Error::AudioTooShort {
                    got: wave.len(),
                    need: self.samples_per_frame,
                });
            }
        }
        let mut ctx = AudioStreamCtx {
            conv: Vec::new(),
            mask: Vec::new(),
            bn: Vec::new(),
            gru: Vec::new(),
            pool: Vec::new(),
        };

        let mut cur: Vec<Array2<f64>> = waves
            .iter()
            .map(|w| {
                Array2::from_shape_vec((1, w.len()), w.to_vec()).expect("waveform reshape")
            })
            .collect();
        for (conv, norm) in self.convs.iter().zip(&mut self.norms) {
            let mut conv_ctxs = Vec::with_capacity(cur.len());
            let mut masks = Vec::with_capacity(cur.len());
            let mut activ = Vec::with_capacity(cur.len());
            for x in &cur {
                let (y, cctx) = conv.forward(x);
                let (y, mask) = relu(&y);
                conv_ctxs.push(cctx);
                masks.push(mask);
                activ.push(y);
            }
            let (normed, bctx) = norm.forward(&activ, train);
            ctx.conv.push(conv_ctxs);
            ctx.mask.push(masks);
            ctx.bn.push(bctx);
            cur = normed;
        }

        let mut out = Vec::with_capacity(cur.len());
        for x in &cur {
            let (h, gctx) = self.gru.forward(&x.t().to_owned());
            let (pooled, pctx) = self.pool.forward(&h.t().to_owned());
            ctx.gru.push(gctx);
            ctx.pool.push(pctx);
            out.push(pooled.t().to_owned());
        }
        Ok((out, ctx))
    }

    /// Accumulates parameter gradients from per-item output gradients. The
    /// gradient with respect to the raw waveform is not needed and dropped.
    pub fn backward_batch(&mut self, ctx: &AudioStreamCtx, dys: &[Array2<f64>]) {
        let mut d_bn: Vec<Array2<f64>> = Vec::with_capacity(dys.len());
        for (i, dy) in dys.iter().enumerate() {
            let d_pool = self.pool.backward(&ctx.pool[i], &dy.t().to_owned());
            let d_gru = self.gru.backward(&ctx.gru[i], &d_pool.t().to_owned());
            d_bn.push(d_gru.t().to_owned());
        }
        for l in (0..self.convs.len()).rev() {
            let d_act = self.norms[l].backward(&ctx.bn[l], &d_bn);
            let mut d_prev = Vec::with_capacity(d_act.len());
            for (i, d) in d_act.into_iter().enumerate() {
                let d = relu_backward(&ctx.mask[l][i], &d);
                if l > 0 {
                    d_prev.push(self.convs[l].backward(&ctx.conv[l][i], &d));
                } else {
                    self.convs[l].backward(&ctx.conv[l][i], &d);
                }
            }
            d_bn = d_prev;
        }
    }

    pub fn visit(&mut self, prefix: &str, f: &mut TensorVisitor<'_>) {
        for (i, conv) in self.convs.iter_mut().enumerate() {
            conv.visit(&format!("{prefix}.conv{i}"), f);
        }
        for (i, norm) in self.norms.iter_mut().enumerate() {
            norm.visit(&format!("{prefix}.bn{i}"), f);
        }
        self.gru.visit(&format!("{prefix}.gru"), f);
    }
}
