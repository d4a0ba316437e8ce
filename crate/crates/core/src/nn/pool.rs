use ndarray::{Array1, Array2, Array3};

/// Max pooling over one (channels, height, width) frame. Padding positions
/// never win the max, so the cached argmax always points at a real input
/// element.
#[derive(Debug, Clone)]
pub struct MaxPool2d {
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

pub struct MaxPool2dCtx {
    argmax: Vec<(usize, usize)>, // (row, col) per output element, C-order
    in_dim: (usize, usize, usize),
}

impl MaxPool2d {
    pub fn new(kernel: usize, stride: usize, padding: usize) -> MaxPool2d {
        assert!(kernel >= 1 && stride >= 1 && padding < kernel);
        MaxPool2d {
            kernel,
            stride,
            padding,
        }
    }

    pub fn out_hw(&self, h: usize, w: usize) -> (usize, usize) {
        (
            (h + 2 * self.padding - self.kernel) / self.stride + 1,
            (w + 2 * self.padding - self.kernel) / self.stride + 1,
        )
    }

    pub fn forward(&self, x: &Array3<f64>) -> (Array3<f64>, MaxPool2dCtx) {
        let (ch, in_h, in_w) = x.dim();
        let (out_h, out_w) = self.out_hw(in_h, in_w);
        let mut y = Array3::zeros((ch, out_h, out_w));
        let mut argmax = Vec::with_capacity(ch * out_h * out_w);
        for c in 0..ch {
            for oy in 0..out_h {
                for ox in 0..out_w {
                    let y0 = oy * self.stride;
                    let x0 = ox * self.stride;
                    let mut best = f64::NEG_INFINITY;
                    let mut best_at = (0, 0);
                    for ky in 0..self.kernel {
                        let iy = match (y0 + ky).checked_sub(self.padding) {
                            Some(v) if v < in_h => v,
                            _ => continue,
                        };
                        for kx in 0..self.kernel {
                            let ix = match (x0 + kx).checked_sub(self.padding) {
                                Some(v) if v < in_w => v,
                                _ => continue,
                            };
                            let v = x[[c, iy, ix]];
                            if v > best {
                                best = v;
                                best_at = (iy, ix);
                            }
                        }
                    }
                    y[[c, oy, ox]] = best;
                    argmax.push(best_at);
                }
            }
        }
        (
            y,
            MaxPool2dCtx {
                argmax,
                in_dim: (ch, in_h, in_w),
            },
        )
    }

    pub fn backward(&self, ctx: &MaxPool2dCtx, dy: &Array3<f64>) -> Array3<f64> {
        let mut dx = Array3::zeros(ctx.in_dim);
        let (_, out_h, out_w) = dy.dim();
        for c in 0..ctx.in_dim.0 {
            for oy in 0..out_h {
                for ox in 0..out_w {
                    let (iy, ix) = ctx.argmax[(c * out_h + oy) * out_w + ox];
                    dx[[c, iy, ix]] += dy[[c, oy, ox]];
                }
            }
        }
        dx
    }
}

/// Non-overlapping temporal average pooling over (channels, length) input.
/// The window doubles as the stride, trailing samples that do not fill a
/// whole window are dropped, so the output length is `floor(len / window)`.
#[derive(Debug, Clone)]
pub struct AvgPool1d {
    pub window: usize,
}

pub struct AvgPool1dCtx {
    in_len: usize,
}

impl AvgPool1d {
    pub fn new(window: usize) -> AvgPool1d {
        assert!(window >= 1);
        AvgPool1d { window }
    }

    pub fn out_len(&self, in_len: usize) -> usize {
        in_len / self.window
    }

    pub fn forward(&self, x: &Array2<f64>) -> (Array2<f64>, AvgPool1dCtx) {
        let (ch, in_len) = x.dim();
        let out_len = self.out_len(in_len);
        let mut y = Array2::zeros((ch, out_len));
        for c in 0..ch {
            for t in 0..out_len {
                let start = t * self.window;
                y[[c, t]] = x
                    .slice(ndarray::s![c, start..start + self.window])
                    .mean()
                    .unwrap();
            }
        }
        (y, AvgPool1dCtx { in_len })
    }

    pub fn backward(&self, ctx: &AvgPool1dCtx, dy: &Array2<f64>) -> Array2<f64> {
        let (ch, out_len) = dy.dim();
        let mut dx = Array2::zeros((ch, ctx.in_len));
        let scale = 1.0 / self.window as f64;
        for c in 0..ch {
            for t in 0..out_len {
                let g = dy[[c, t]] * scale;
                let start = t * self.window;
                dx.slice_mut(ndarray::s![c, start..start + self.window])
                    .mapv_inplace(|v| v + g);
            }
        }
        dx
    }
}

/// Collapses the spatial axes of one (channels, height, width) frame to a
/// channel vector by averaging.
#[derive(Debug, Clone)]
pub struct GlobalAvgPool2d;

impl GlobalAvgPool2d {
    pub fn forward(&self, x: &Array3<f64>) -> Array1<f64> {
        let (ch, h, w) = x.dim();
        let mut y = Array1::zeros(ch);
        for c in 0..ch {
            y[c] = x.slice(ndarray::s![c, .., ..]).sum() / (h * w) as f64;
        }
        y
    }

    pub fn backward(&self, in_dim: (usize, usize, usize), dy: &Array1<f64>) -> Array3<f64> {
        let (ch, h, w) = in_dim;
        let scale = 1.0 / (h * w) as f64;
        let mut dx = Array3::zeros(in_dim);
        for c in 0..ch {
            dx.slice_mut(ndarray::s![c, .., ..]).fill(dy[c] * scale);
        }
        dx
    }
}
