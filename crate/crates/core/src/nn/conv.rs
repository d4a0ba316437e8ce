use ndarray::{Array3, Array4, Ix1, Ix3, Ix4, Ix5};
use rand::Rng;

use super::{join_name, uniform_init, Param, TensorVisitor};

/// Temporal convolution over (channels, length) input.
///
/// Padding is fixed to `kernel - stride` in total, split evenly with the
/// extra sample on the right, which makes the output length exactly
/// `floor(len / stride)` for every input length. Chains of such layers
/// therefore compose to `floor(len / product_of_strides)`, the property the
/// audio frame-rate contract relies on.
#[derive(Debug, Clone)]
pub struct Conv1d {
    pub weight: Param<Ix3>, // (out, in, kernel)
    pub bias: Param<Ix1>,
    pub stride: usize,
}

pub struct Conv1dCtx {
    x_padded: ndarray::Array2<f64>, // (in, padded len)
    in_len: usize,
}

impl Conv1d {
    pub fn new(
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        rng: &mut impl Rng,
    ) -> Conv1d {
        assert!(kernel >= stride && stride >= 1);
        let fan_in = in_ch * kernel;
        Conv1d {
            weight: Param::new(uniform_init(Ix3(out_ch, in_ch, kernel), fan_in, rng)),
            bias: Param::new(uniform_init(Ix1(out_ch), fan_in, rng)),
            stride,
        }
    }

    pub fn kernel(&self) -> usize {
        self.weight.value.shape()[2]
    }

    pub fn pad_left(&self) -> usize {
        (self.kernel() - self.stride) / 2
    }

    pub fn out_len(&self, in_len: usize) -> usize {
        in_len / self.stride
    }

    /// (in, L) -> (out, floor(L / stride))
    pub fn forward(&self, x: &ndarray::Array2<f64>) -> (ndarray::Array2<f64>, Conv1dCtx) {
        let (in_ch, in_len) = x.dim();
        let out_ch = self.weight.value.shape()[0];
        let kernel = self.kernel();
        let total_pad = kernel - self.stride;
        let padded_len = in_len + total_pad;
        let out_len = self.out_len(in_len);

        let mut x_padded = ndarray::Array2::zeros((in_ch, padded_len));
        x_padded
            .slice_mut(ndarray::s![.., self.pad_left()..self.pad_left() + in_len])
            .assign(x);

        let mut y = ndarray::Array2::zeros((out_ch, out_len));
        for o in 0..out_ch {
            let bias = self.bias.value[o];
            for t in 0..out_len {
                let start = t * self.stride;
                let mut acc = bias;
                for i in 0..in_ch {
                    let w = self.weight.value.slice(ndarray::s![o, i, ..]);
                    let xs = x_padded.slice(ndarray::s![i, start..start + kernel]);
                    acc += w
                        .as_slice()
                        .unwrap()
                        .iter()
                        .zip(xs.as_slice().unwrap())
                        .map(|(a, b)| a * b)
                        .sum::<f64>();
                }
                y[[o, t]] = acc;
            }
        }
        (y, Conv1dCtx { x_padded, in_len })
    }

    pub fn backward(&mut self, ctx: &Conv1dCtx, dy: &ndarray::Array2<f64>) -> ndarray::Array2<f64> {
        let (out_ch, out_len) = dy.dim();
        let in_ch = self.weight.value.shape()[1];
        let kernel = self.kernel();
        let padded_len = ctx.x_padded.shape()[1];

        let mut dx_padded = ndarray::Array2::<f64>::zeros((in_ch, padded_len));
        for o in 0..out_ch {
            for t in 0..out_len {
                let g = dy[[o, t]];
                if g == 0.0 {
                    continue;
                }
                self.bias.grad[o] += g;
                let start = t * self.stride;
                for i in 0..in_ch {
                    for k in 0..kernel {
                        let xv = ctx.x_padded[[i, start + k]];
                        self.weight.grad[[o, i, k]] += g * xv;
                        dx_padded[[i, start + k]] += g * self.weight.value[[o, i, k]];
                    }
                }
            }
        }
        dx_padded
            .slice(ndarray::s![.., self.pad_left()..self.pad_left() + ctx.in_len])
            .to_owned()
    }

    pub fn visit(&mut self, prefix: &str, f: &mut TensorVisitor<'_>) {
        self.weight.visit(join_name(prefix, "weight"), f);
        self.bias.visit(join_name(prefix, "bias"), f);
    }
}

/// Spatial convolution over one (channels, height, width) frame with
/// symmetric zero padding.
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub weight: Param<Ix4>, // (out, in, kh, kw)
    pub bias: Param<Ix1>,
    pub stride: usize,
    pub padding: usize,
}

pub struct Conv2dCtx {
    x_padded: Array3<f64>,
    in_h: usize,
    in_w: usize,
}

impl Conv2d {
    pub fn new(
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        rng: &mut impl Rng,
    ) -> Conv2d {
        let fan_in = in_ch * kernel * kernel;
        Conv2d {
            weight: Param::new(uniform_init(
                Ix4(out_ch, in_ch, kernel, kernel),
                fan_in,
                rng,
            )),
            bias: Param::new(uniform_init(Ix1(out_ch), fan_in, rng)),
            stride,
            padding,
        }
    }

    pub fn out_hw(&self, h: usize, w: usize) -> (usize, usize) {
        let k = self.weight.value.shape()[2];
        (
            (h + 2 * self.padding - k) / self.stride + 1,
            (w + 2 * self.padding - k) / self.stride + 1,
        )
    }

    /// (in, H, W) -> (out, H', W')
    pub fn forward(&self, x: &Array3<f64>) -> (Array3<f64>, Conv2dCtx) {
        let (in_ch, in_h, in_w) = x.dim();
        let out_ch = self.weight.value.shape()[0];
        let k = self.weight.value.shape()[2];
        let (out_h, out_w) = self.out_hw(in_h, in_w);

        let mut x_padded =
            Array3::zeros((in_ch, in_h + 2 * self.padding, in_w + 2 * self.padding));
        x_padded
            .slice_mut(ndarray::s![
                ..,
                self.padding..self.padding + in_h,
                self.padding..self.padding + in_w
            ])
            .assign(x);

        let mut y = Array3::zeros((out_ch, out_h, out_w));
        for o in 0..out_ch {
            let bias = self.bias.value[o];
            for oy in 0..out_h {
                let y0 = oy * self.stride;
                for ox in 0..out_w {
                    let x0 = ox * self.stride;
                    let mut acc = bias;
                    for i in 0..in_ch {
                        for ky in 0..k {
                            let wrow = self.weight.value.slice(ndarray::s![o, i, ky, ..]);
                            let xrow =
                                x_padded.slice(ndarray::s![i, y0 + ky, x0..x0 + k]);
                            acc += wrow
                                .as_slice()
                                .unwrap()
                                .iter()
                                .zip(xrow.as_slice().unwrap())
                                .map(|(a, b)| a * b)
                                .sum::<f64>();
                        }
                    }
                    y[[o, oy, ox]] = acc;
                }
            }
        }
        (
            y,
            Conv2dCtx {
                x_padded,
                in_h,
                in_w,
            },
        )
    }

    pub fn backward(&mut self, ctx: &Conv2dCtx, dy: &Array3<f64>) -> Array3<f64> {
        let (out_ch, out_h, out_w) = dy.dim();
        let in_ch = self.weight.value.shape()[1];
        let k = self.weight.value.shape()[2];
        let mut dx_padded = Array3::<f64>::zeros(ctx.x_padded.raw_dim());
        for o in 0..out_ch {
            for oy in 0..out_h {
                let y0 = oy * self.stride;
                for ox in 0..out_w {
                    let g = dy[[o, oy, ox]];
                    if g == 0.0 {
                        continue;
                    }
                    self.bias.grad[o] += g;
                    let x0 = ox * self.stride;
                    for i in 0..in_ch {
                        for ky in 0..k {
                            for kx in 0..k {
                                let xv = ctx.x_padded[[i, y0 + ky, x0 + kx]];
                                self.weight.grad[[o, i, ky, kx]] += g * xv;
                                dx_padded[[i, y0 + ky, x0 + kx]] +=
                                    g * self.weight.value[[o, i, ky, kx]];
                            }
                        }
                    }
                }
            }
        }
        dx_padded
            .slice(ndarray::s![
                ..,
                self.padding..self.padding + ctx.in_h,
                self.padding..self.padding + ctx.in_w
            ])
            .to_owned()
    }

    pub fn visit(&mut self, prefix: &str, f: &mut TensorVisitor<'_>) {
        self.weight.visit(join_name(prefix, "weight"), f);
        self.bias.visit(join_name(prefix, "bias"), f);
    }
}

/// Spatiotemporal convolution over (channels, frames, height, width) input
/// with per-axis stride and padding.
#[derive(Debug, Clone)]
pub struct Conv3d {
    pub weight: Param<Ix5>, // (out, in, kt, kh, kw)
    pub bias: Param<Ix1>,
    pub stride: (usize, usize, usize),
    pub padding: (usize, usize, usize),
}

pub struct Conv3dCtx {
    x_padded: Array4<f64>,
    in_dims: (usize, usize, usize),
}

impl Conv3d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        in_ch: usize,
        out_ch: usize,
        kernel: (usize, usize, usize),
        stride: (usize, usize, usize),
        padding: (usize, usize, usize),
        rng: &mut impl Rng,
    ) -> Conv3d {
        let fan_in = in_ch * kernel.0 * kernel.1 * kernel.2;
        Conv3d {
            weight: Param::new(uniform_init(
                Ix5(out_ch, in_ch, kernel.0, kernel.1, kernel.2),
                fan_in,
                rng,
            )),
            bias: Param::new(uniform_init(Ix1(out_ch), fan_in, rng)),
            stride,
            padding,
        }
    }

    pub fn out_dims(&self, t: usize, h: usize, w: usize) -> (usize, usize, usize) {
        let ks = self.weight.value.shape();
        let (kt, kh, kw) = (ks[2], ks[3], ks[4]);
        (
            (t + 2 * self.padding.0 - kt) / self.stride.0 + 1,
            (h + 2 * self.padding.1 - kh) / self.stride.1 + 1,
            (w + 2 * self.padding.2 - kw) / self.stride.2 + 1,
        )
    }

    /// (in, T, H, W) -> (out, T', H', W')
    pub fn forward(&self, x: &Array4<f64>) -> (Array4<f64>, Conv3dCtx) {
        let (in_ch, t, h, w) = x.dim();
        let ks = self.weight.value.shape();
        let (out_ch, kt, kh, kw) = (ks[0], ks[2], ks[3], ks[4]);
        let (pt, ph, pw) = self.padding;
        let (ot, oh, ow) = self.out_dims(t, h, w);

        let mut x_padded = Array4::zeros((in_ch, t + 2 * pt, h + 2 * ph, w + 2 * pw));
        x_padded
            .slice_mut(ndarray::s![.., pt..pt + t, ph..ph + h, pw..pw + w])
            .assign(x);

        let mut y = Array4::zeros((out_ch, ot, oh, ow));
        for o in 0..out_ch {
            let bias = self.bias.value[o];
            for tt in 0..ot {
                let t0 = tt * self.stride.0;
                for yy in 0..oh {
                    let y0 = yy * self.stride.1;
                    for xx in 0..ow {
                        let x0 = xx * self.stride.2;
                        let mut acc = bias;
                        for i in 0..in_ch {
                            for dt in 0..kt {
                                for dy in 0..kh {
                                    let wrow = self
                                        .weight
                                        .value
                                        .slice(ndarray::s![o, i, dt, dy, ..]);
                                    let xrow = x_padded.slice(ndarray::s![
                                        i,
                                        t0 + dt,
                                        y0 + dy,
                                        x0..x0 + kw
                                    ]);
                                    acc += wrow
                                        .as_slice()
                                        .unwrap()
                                        .iter()
                                        .zip(xrow.as_slice().unwrap())
                                        .map(|(a, b)| a * b)
                                        .sum::<f64>();
                                }
                            }
                        }
                        y[[o, tt, yy, xx]] = acc;
                    }
                }
            }
        }
        (
            y,
            Conv3dCtx {
                x_padded,
                in_dims: (t, h, w),
            },
        )
    }

    pub fn backward(&mut self, ctx: &Conv3dCtx, dy: &Array4<f64>) -> Array4<f64> {
        let (out_ch, ot, oh, ow) = dy.dim();
        let ks = self.weight.value.shape();
        let (in_ch, kt, kh, kw) = (ks[1], ks[2], ks[3], ks[4]);
        let (pt, ph, pw) = self.padding;
        let (t, h, w) = ctx.in_dims;

        let mut dx_padded = Array4::<f64>::zeros(ctx.x_padded.raw_dim());
        for o in 0..out_ch {
            for tt in 0..ot {
                let t0 = tt * self.stride.0;
                for yy in 0..oh {
                    let y0 = yy * self.stride.1;
                    for xx in 0..ow {
                        let g = dy[[o, tt, yy, xx]];
                        if g == 0.0 {
                            continue;
                        }
                        self.bias.grad[o] += g;
                        let x0 = xx * self.stride.2;
                        for i in 0..in_ch {
                            for dt in 0..kt {
                                for dyk in 0..kh {
                                    for dxk in 0..kw {
                                        let xv = ctx.x_padded
                                            [[i, t0 + dt, y0 + dyk, x0 + dxk]];
                                        self.weight.grad[[o, i, dt, dyk, dxk]] += g * xv;
                                        dx_padded[[i, t0 + dt, y0 + dyk, x0 + dxk]] +=
                                            g * self.weight.value[[o, i, dt, dyk, dxk]];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        dx_padded
            .slice(ndarray::s![.., pt..pt + t, ph..ph + h, pw..pw + w])
            .to_owned()
    }

    pub fn visit(&mut self, prefix: &str, f: &mut TensorVisitor<'_>) {
        self.weight.visit(join_name(prefix, "weight"), f);
        self.bias.visit(join_name(prefix, "bias"), f);
    }
}
