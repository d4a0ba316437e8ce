//! Network architecture: an audio stream and a visual stream that emit
//! synchronized 25 fps feature sequences, and a fusion head that turns one
//! or both streams into per-frame character log-probabilities.

mod audio;
mod checkpoint;
mod head;
mod visual;

pub use audio::{AudioStream, AudioStreamCtx};
pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use head::{
    AudioModel, AudioModelCtx, AvModel, AvModelCtx, FusionHead, FusionHeadCtx, VisualModel,
    VisualModelCtx,
};
pub use visual::{VisualStream, VisualStreamCtx, VisualTrunkCtx};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::audio::SAMPLE_RATE_HZ;
use crate::charset::CHARSET_SIZE;
use crate::error::{Error, Result};

/// Which input streams a model consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Audio,
    Visual,
    Av,
}

impl std::fmt::Display for Modality {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Modality::Audio => "audio",
            Modality::Visual => "visual",
            Modality::Av => "av",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Modality> {
        match s.to_ascii_lowercase().as_str() {
            "audio" | "a" => Ok(Modality::Audio),
            "visual" | "video" | "v" => Ok(Modality::Visual),
            "av" | "audiovisual" => Ok(Modality::Av),
            _ => Err(Error::Parse {
                what: "modality",
                input: s.to_string(),
            }),
        }
    }
}

/// Temporal convolution trunk of the audio stream: a chain of strided conv
/// blocks followed by average pooling over time. The product of all strides
/// times the pooling window must equal the samples-per-video-frame count so
/// the stream lands exactly on the visual frame rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AudioTrunkConfig {
    pub channels: Vec<usize>,
    pub kernels: Vec<usize>,
    pub strides: Vec<usize>,
    pub pool_window: usize,
}

impl AudioTrunkConfig {
    pub fn n_blocks(&self) -> usize {
        self.channels.len()
    }

    pub fn trunk_channels(&self) -> usize {
        *self.channels.last().unwrap()
    }

    pub fn samples_per_output_frame(&self) -> usize {
        self.strides.iter().product::<usize>() * self.pool_window
    }
}

/// One residual stage of the visual trunk: `blocks` basic blocks at the
/// given width, the first of which applies the stage stride.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VisualStageConfig {
    pub channels: usize,
    pub blocks: usize,
    pub stride: usize,
}

/// Spatiotemporal front end plus residual stages of the visual stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisualTrunkConfig {
    pub frontend_channels: usize,
    pub temporal_kernel: usize,
    pub spatial_kernel: usize,
    pub spatial_stride: usize,
    pub spatial_padding: usize,
    pub pool_kernel: usize,
    pub pool_stride: usize,
    pub pool_padding: usize,
    pub stages: Vec<VisualStageConfig>,
    pub input_h: usize,
    pub input_w: usize,
}

impl VisualTrunkConfig {
    pub fn feature_dim(&self) -> usize {
        self.stages.last().unwrap().channels
    }

    /// Spatial dimensions after the front end, pooling and every stage, or
    /// an error if some layer would collapse a dimension to zero.
    pub fn spatial_out(&self) -> Result<(usize, usize)> {
        let conv = |n: usize, k: usize, s: usize, p: usize| -> Result<usize> {
            if n + 2 * p < k {
                return Err(Error::InvalidModelConfig(format!(
                    "kernel {k} exceeds padded input {}",
                    n + 2 * p
                )));
            }
            Ok((n + 2 * p - k) / s + 1)
        };
        let mut h = conv(
            self.input_h,
            self.spatial_kernel,
            self.spatial_stride,
            self.spatial_padding,
        )?;
        let mut w = conv(
            self.input_w,
            self.spatial_kernel,
            self.spatial_stride,
            self.spatial_padding,
        )?;
        h = conv(h, self.pool_kernel, self.pool_stride, self.pool_padding)?;
        w = conv(w, self.pool_kernel, self.pool_stride, self.pool_padding)?;
        for stage in &self.stages {
            h = conv(h, 3, stage.stride, 1)?;
            w = conv(w, 3, stage.stride, 1)?;
        }
        Ok((h, w))
    }
}

/// Complete architecture description. `full()` mirrors the reference system;
/// `tiny()` is a reduced-width variant that trains in seconds on a CPU and
/// matches the synthetic fixture media dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub charset_size: usize,
    pub gru_cells_per_direction: usize,
    pub stream_feature_dim: usize,
    pub fusion_cells_per_direction: usize,
    pub target_fps: usize,
    pub audio: AudioTrunkConfig,
    pub visual: VisualTrunkConfig,
}

impl ModelConfig {
    pub fn full() -> ModelConfig {
        ModelConfig {
            charset_size: CHARSET_SIZE,
            gru_cells_per_direction: 128,
            stream_feature_dim: 256,
            fusion_cells_per_direction: 128,
            target_fps: 25,
            audio: AudioTrunkConfig {
                channels: vec![64, 64, 64, 64, 64],
                kernels: vec![80, 4, 4, 4, 4],
                strides: vec![4, 2, 2, 2, 2],
                pool_window: 10,
            },
            visual: VisualTrunkConfig {
                frontend_channels: 64,
                temporal_kernel: 5,
                spatial_kernel: 7,
                spatial_stride: 2,
                spatial_padding: 3,
                pool_kernel: 3,
                pool_stride: 2,
                pool_padding: 1,
                stages: vec![
                    VisualStageConfig {
                        channels: 64,
                        blocks: 2,
                        stride: 1,
                    },
                    VisualStageConfig {
                        channels: 128,
                        blocks: 2,
                        stride: 2,
                    },
                    VisualStageConfig {
                        channels: 256,
                        blocks: 2,
                        stride: 2,
                    },
                    VisualStageConfig {
                        channels: 512,
                        blocks: 2,
                        stride: 2,
                    },
                ],
                input_h: 190,
                input_w: 130,
            },
        }
    }

    pub fn tiny() -> ModelConfig {
        ModelConfig {
            charset_size: CHARSET_SIZE,
            gru_cells_per_direction: 16,
            stream_feature_dim: 32,
            fusion_cells_per_direction: 16,
            target_fps: 25,
            audio: AudioTrunkConfig {
                channels: vec![8, 16],
                kernels: vec![80, 16],
                strides: vec![8, 8],
                pool_window: 10,
            },
            visual: VisualTrunkConfig {
                frontend_channels: 8,
                temporal_kernel: 5,
                spatial_kernel: 3,
                spatial_stride: 1,
                spatial_padding: 1,
                pool_kernel: 2,
                pool_stride: 2,
                pool_padding: 0,
                stages: vec![VisualStageConfig {
                    channels: 16,
                    blocks: 1,
                    stride: 2,
                }],
                input_h: 28,
                input_w: 36,
            },
        }
    }

    pub fn samples_per_frame(&self) -> usize {
        SAMPLE_RATE_HZ as usize / self.target_fps
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidModelConfig(msg));
        if self.charset_size != CHARSET_SIZE {
            return fail(format!(
                "charset size {} does not match the {CHARSET_SIZE}-symbol alphabet",
                self.charset_size
            ));
        }
        if self.stream_feature_dim != 2 * self.gru_cells_per_direction {
            return fail(format!(
                "stream feature dim {} must be twice the {} cells per direction",
                self.stream_feature_dim, self.gru_cells_per_direction
            ));
        }
        if self.fusion_cells_per_direction == 0 || self.gru_cells_per_direction == 0 {
            return fail("recurrent widths must be nonzero".to_string());
        }
        if self.target_fps == 0 || SAMPLE_RATE_HZ as usize % self.target_fps != 0 {
            return fail(format!(
                "target fps {} must divide the {SAMPLE_RATE_HZ} Hz sample rate",
                self.target_fps
            ));
        }

        let a = &self.audio;
        if a.channels.is_empty()
            || a.channels.len() != a.kernels.len()
            || a.channels.len() != a.strides.len()
        {
            return fail("audio trunk lists must be nonempty and equal-length".to_string());
        }
        for (k, s) in a.kernels.iter().zip(&a.strides) {
            if *s == 0 || k < s {
                return fail(format!("audio conv kernel {k} must be at least stride {s}"));
            }
        }
        if a.pool_window == 0 {
            return fail("audio pool window must be nonzero".to_string());
        }
        if a.samples_per_output_frame() != self.samples_per_frame() {
            return fail(format!(
                "audio downsampling {} samples per frame does not reach {} fps ({} samples)",
                a.samples_per_output_frame(),
                self.target_fps,
                self.samples_per_frame()
            ));
        }

        let v = &self.visual;
        if v.temporal_kernel % 2 == 0 || v.temporal_kernel == 0 {
            return fail(format!(
                "temporal kernel {} must be odd so padding preserves frame count",
                v.temporal_kernel
            ));
        }
        if v.stages.is_empty() || v.stages.iter().any(|s| s.channels == 0 || s.blocks == 0) {
            return fail("visual stages must be nonempty with nonzero widths".to_string());
        }
        if v.spatial_stride == 0 || v.pool_stride == 0 || v.pool_padding >= v.pool_kernel {
            return fail("visual stride and pooling parameters out of range".to_string());
        }
        v.spatial_out()?;
        Ok(())
    }
}

/// A stream output: one 25 fps row of features per video frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    pub frames: Array2<f64>,
    pub fps: usize,
}

impl FeatureSequence {
    pub fn new(frames: Array2<f64>, fps: usize) -> Result<FeatureSequence> {
        if frames.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteSample);
        }
        Ok(FeatureSequence { frames, fps })
    }

    pub fn n_frames(&self) -> usize {
        self.frames.shape()[0]
    }

    pub fn dim(&self) -> usize {
        self.frames.shape()[1]
    }
}

/// Per-frame character log-probabilities; every row is a normalized
/// distribution in log space.
#[derive(Debug, Clone, PartialEq)]
pub struct LogProbSequence {
    pub rows: Array2<f64>,
}

impl LogProbSequence {
    pub fn n_frames(&self) -> usize {
        self.rows.shape()[0]
    }

    pub fn charset_size(&self) -> usize {
        self.rows.shape()[1]
    }

    /// Largest absolute row log-sum-exp; 0 for perfectly normalized rows.
    pub fn max_normalization_error(&self) -> f64 {
        let mut worst = 0.0_f64;
        for row in self.rows.outer_iter() {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            worst = worst.max(lse.abs());
        }
        worst
    }
}
