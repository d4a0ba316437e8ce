use ndarray::{s, Array1, Array2, Array3, Axis};
use rand::Rng;

use super::{
    AudioStream, AudioStreamCtx, FeatureSequence, LogProbSequence, ModelConfig, VisualStream,
    VisualStreamCtx,
};
use crate::error::{Error, Result};
use crate::nn::{
    log_softmax, log_softmax_backward, BiGruStack, BiGruStackCtx, Linear, LinearCtx,
    TensorVisitor,
};

/// Classification head shared by every model variant: a 2-layer
/// bidirectional GRU over the (possibly concatenated) stream features and a
/// per-frame linear projection to character log-probabilities.
#[derive(Debug, Clone)]
pub struct FusionHead {
    gru: BiGruStack,
    out: Linear,
}

pub struct FusionHeadCtx {
    gru: Vec<BiGruStackCtx>,
    lin: Vec<LinearCtx>,
    logp: Vec<Array2<f64>>,
}

impl FusionHead {
    pub fn new(input_dim: usize, hidden: usize, charset: usize, rng: &mut impl Rng) -> FusionHead {
        FusionHead {
            gru: BiGruStack::new(input_dim, hidden, rng),
            out: Linear::new(2 * hidden, charset, rng),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.gru.layers[0].fwd.input_dim()
    }

    pub fn charset_size(&self) -> usize {
        self.out.out_dim()
    }

    /// Feature sequences -> per-item (frames, charset) log-probability rows.
    pub fn forward_batch(&self, feats: &[Array2<f64>]) -> (Vec<Array2<f64>>, FusionHeadCtx) {
        let mut out = Vec::with_capacity(feats.len());
        let mut ctx = FusionHeadCtx {
            gru: Vec::with_capacity(feats.len()),
            lin: Vec::with_capacity(feats.len()),
            logp: Vec::with_capacity(feats.len()),
        };
        for f in feats {
            let (h, gctx) = self.gru.forward(f);
            let (logits, lctx) = self.out.forward(&h);
            let logp = log_softmax(&logits);
            ctx.gru.push(gctx);
            ctx.lin.push(lctx);
            ctx.logp.push(logp.clone());
            out.push(logp);
        }
        (out, ctx)
    }

    /// Returns the gradient with respect to the input features.
    pub fn backward_batch(
        &mut self,
        ctx: &FusionHeadCtx,
        dys: &[Array2<f64>],
    ) -> Vec<Array2<f64>> {
        let mut dxs = Vec::with_capacity(dys.len());
        for (i, dy) in dys.iter().enumerate() {
            let d_logits = log_softmax_backward(&ctx.logp[i], dy);
            let d_h = self.out.backward(&ctx.lin[i], &d_logits);
            dxs.push(self.gru.backward(&ctx.gru[i], &d_h));
        }
        dxs
    }

    pub fn visit(&mut self, prefix: &str, f: &mut TensorVisitor<'_>) {
        self.gru.visit(&format!("{prefix}.gru"), f);
        self.out.visit(&format!("{prefix}.out"), f);
    }
}

/// Audio-only recognizer: audio stream plus head over its 256-dim features.
#[derive(Debug, Clone)]
pub struct AudioModel {
    pub stream: AudioStream,
    pub head: FusionHead,
}

pub struct AudioModelCtx {
    stream: AudioStreamCtx,
    head: FusionHeadCtx,
}

impl AudioModel {
    pub fn new(cfg: &ModelConfig, rng: &mut impl Rng) -> AudioModel {
        AudioModel {
            stream: AudioStream::new(cfg, rng),
            head: FusionHead::new(
                cfg.stream_feature_dim,
                cfg.fusion_cells_per_direction,
                cfg.charset_size,
                rng,
            ),
        }
    }

    pub fn forward_batch(
        &mut self,
        waves: &[Array1<f64>],
        train: bool,
    ) -> Result<(Vec<Array2<f64>>, AudioModelCtx)> {
        let (feats, sctx) = self.stream.forward_batch(waves, train)?;
        let (logps, hctx) = self.head.forward_batch(&feats);
        Ok((
            logps,
            AudioModelCtx {
                stream: sctx,
                head: hctx,
            },
        ))
    }

    pub fn backward_batch(&mut self, ctx: &AudioModelCtx, dys: &[Array2<f64>]) {
        let d_feats = self.head.backward_batch(&ctx.head, dys);
        self.stream.backward_batch(&ctx.stream, &d_feats);
    }

    pub fn forward(&mut self, wave: &Array1<f64>) -> Result<LogProbSequence> {
        let (mut logps, _) = self.forward_batch(std::slice::from_ref(wave), false)?;
        Ok(LogProbSequence {
            rows: logps.remove(0),
        })
    }

    pub fn visit(&mut self, prefix: &str, f: &mut TensorVisitor<'_>) {
        self.stream.visit(&format!("{prefix}.stream"), f);
        self.head.visit(&format!("{prefix}.head"), f);
    }
}

/// Lipreading recognizer: visual stream plus head over its features.
#[derive(Debug, Clone)]
pub struct VisualModel {
    pub stream: VisualStream,
    pub head: FusionHead,
}

pub struct VisualModelCtx {
    stream: VisualStreamCtx,
    head: FusionHeadCtx,
}

impl VisualModel {
    pub fn new(cfg: &ModelConfig, rng: &mut impl Rng) -> VisualModel {
        VisualModel {
            stream: VisualStream::new(cfg, rng),
            head: FusionHead::new(
                cfg.stream_feature_dim,
                cfg.fusion_cells_per_direction,
                cfg.charset_size,
                rng,
            ),
        }
    }

    pub fn forward_batch(
        &mut self,
        rois: &[Array3<f64>],
        train: bool,
    ) -> Result<(Vec<Array2<f64>>, VisualModelCtx)> {
        let (feats, sctx) = self.stream.forward_batch(rois, train)?;
        let (logps, hctx) = self.head.forward_batch(&feats);
        Ok((
            logps,
            VisualModelCtx {
                stream: sctx,
                head: hctx,
            },
        ))
    }

    pub fn backward_batch(&mut self, ctx: &VisualModelCtx, dys: &[Array2<f64>]) {
        let d_feats = self.head.backward_batch(&ctx.head, dys);
        self.stream.backward_batch(&ctx.stream, &d_feats);
    }

    pub fn forward(&mut self, rois: &Array3<f64>) -> Result<LogProbSequence> {
        let (mut logps, _) = self.forward_batch(std::slice::from_ref(rois), false)?;
        Ok(LogProbSequence {
            rows: logps.remove(0),
        })
    }

    pub fn visit(&mut self, prefix: &str, f: &mut TensorVisitor<'_>) {
        self.stream.visit(&format!("{prefix}.stream"), f);
        self.head.visit(&format!("{prefix}.head"), f);
    }
}

/// Audio-visual recognizer: both streams feeding a fusion head over the
/// frame-wise concatenation (visual features first, then audio).
#[derive(Debug, Clone)]
pub struct AvModel {
    pub audio: AudioStream,
    pub visual: VisualStream,
    pub head: FusionHead,
}

pub struct AvModelCtx {
    audio: AudioStreamCtx,
    visual: VisualStreamCtx,
    head: FusionHeadCtx,
    split: usize,
}

impl AvModel {
    pub fn new(cfg: &ModelConfig, rng: &mut impl Rng) -> AvModel {
        AvModel {
            audio: AudioStream::new(cfg, rng),
            visual: VisualStream::new(cfg, rng),
            head: FusionHead::new(
                2 * cfg.stream_feature_dim,
                cfg.fusion_cells_per_direction,
                cfg.charset_size,
                rng,
            ),
        }
    }

    /// Runs both streams and the head. With `freeze_streams` the streams run
    /// in eval mode regardless of `train`, which keeps their batch-norm
    /// statistics untouched while the head trains on top of them.
    pub fn forward_batch(
        &mut self,
        waves: &[Array1<f64>],
        rois: &[Array3<f64>],
        train: bool,
        freeze_streams: bool,
    ) -> Result<(Vec<Array2<f64>>, AvModelCtx)> {
        assert_eq!(waves.len(), rois.len(), "one waveform per ROI sequence");
        let stream_train = train && !freeze_streams;
        let (vfeats, vctx) = self.visual.forward_batch(rois, stream_train)?;
        let (afeats, actx) = self.audio.forward_batch(waves, stream_train)?;
        let mut feats = Vec::with_capacity(vfeats.len());
        for (v, a) in vfeats.iter().zip(&afeats) {
            if v.shape()[0] != a.shape()[0] {
                return Err(Error::FrameCountMismatch {
                    visual: v.shape()[0],
                    audio: a.shape()[0],
                });
            }
            feats.push(ndarray::concatenate(Axis(1), &[v.view(), a.view()]).unwrap());
        }
        let (logps, hctx) = self.head.forward_batch(&feats);
        Ok((
            logps,
            AvModelCtx {
                audio: actx,
                visual: vctx,
                head: hctx,
                split: vfeats[0].shape()[1],
            },
        ))
    }

    /// Backpropagates through the head and, unless the streams are frozen,
    /// into both streams.
    pub fn backward_batch(&mut self, ctx: &AvModelCtx, dys: &[Array2<f64>], into_streams: bool) {
        let d_feats = self.head.backward_batch(&ctx.head, dys);
        if !into_streams {
            return;
        }
        let mut d_v = Vec::with_capacity(d_feats.len());
        let mut d_a = Vec::with_capacity(d_feats.len());
        for d in &d_feats {
            d_v.push(d.slice(s![.., 0..ctx.split]).to_owned());
            d_a.push(d.slice(s![.., ctx.split..]).to_owned());
        }
        self.visual.backward_batch(&ctx.visual, &d_v);
        self.audio.backward_batch(&ctx.audio, &d_a);
    }

    /// Head-only forward over precomputed stream features.
    pub fn fusion_forward(
        &self,
        v: &FeatureSequence,
        a: &FeatureSequence,
    ) -> Result<LogProbSequence> {
        if v.n_frames() != a.n_frames() {
            return Err(Error::FrameCountMismatch {
                visual: v.n_frames(),
                audio: a.n_frames(),
            });
        }
        let feats =
            ndarray::concatenate(Axis(1), &[v.frames.view(), a.frames.view()]).unwrap();
        let (mut logps, _) = self.head.forward_batch(&[feats]);
        Ok(LogProbSequence {
            rows: logps.remove(0),
        })
    }

    pub fn forward(&mut self, wave: &Array1<f64>, rois: &Array3<f64>) -> Result<LogProbSequence> {
        let (mut logps, _) = self.forward_batch(
            std::slice::from_ref(wave),
            std::slice::from_ref(rois),
            false,
            false,
        )?;
        Ok(LogProbSequence {
            rows: logps.remove(0),
        })
    }

    pub fn visit(&mut self, prefix: &str, f: &mut TensorVisitor<'_>) {
        self.audio.visit(&format!("{prefix}.audio"), f);
        self.visual.visit(&format!("{prefix}.visual"), f);
        self.head.visit(&format!("{prefix}.head"), f);
    }
}
