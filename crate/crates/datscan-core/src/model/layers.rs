//! Neural-network layers.
//!
//! All layers work on `f64` tensors in NHWC layout (`[batch, height,
//! width, channels]`), carry their own gradient buffers, and cache
//! whatever the backward pass needs when `train` is set. Gradients
//! accumulate with `+=`, so callers zero them once per optimization
//! step, and `backward` must mirror the `forward` call order exactly.
//!
//! Double precision is deliberate: the convolution is an im2col matrix
//! product and every backward formula is exact, which keeps analytic
//! gradients within finite-difference noise of central differences —
//! the property the gradient checker pins down.

use crate::rng::PipelineRng;
use ndarray::{Array1, Array2, Array4, ArrayViewMutD, Dimension};
use rand::Rng;

/// A named view onto one parameter tensor and its gradient. The order
/// in which a model yields these is part of its checkpoint and
/// optimizer-state contract. Non-`trainable` entries are buffers
/// (normalization running statistics): they persist in checkpoints but
/// the optimizer and the gradient checker skip them.
pub struct ParamRef<'a> {
    pub name: String,
    pub value: ArrayViewMutD<'a, f64>,
    pub grad: ArrayViewMutD<'a, f64>,
    pub trainable: bool,
}

/// Glorot-uniform initial values, drawn in row-major element order.
pub(crate) fn glorot_uniform(
    len: usize,
    fan_in: usize,
    fan_out: usize,
    rng: &mut PipelineRng,
) -> Vec<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..len).map(|_| rng.random_range(-limit..limit)).collect()
}

/// 2D convolution, stride 1, valid padding. Weights are `[kh, kw, cin,
/// cout]`; an input `[n, h, w, cin]` maps to `[n, h-kh+1, w-kw+1,
/// cout]`.
pub struct Conv2d {
    weight: Array4<f64>,
    wgrad: Array4<f64>,
    bias: Option<Array1<f64>>,
    bgrad: Option<Array1<f64>>,
    cache: Option<ConvCache>,
}

struct ConvCache {
    x_dim: (usize, usize, usize, usize),
    cols: Array2<f64>,
}

impl Conv2d {
    pub fn new(kh: usize, kw: usize, cin: usize, cout: usize, rng: &mut PipelineRng) -> Self {
        let mut conv = Self::without_bias(kh, kw, cin, cout, rng);
        conv.bias = Some(Array1::zeros(cout));
        conv.bgrad = Some(Array1::zeros(cout));
        conv
    }

    /// A convolution with no additive bias, for use directly under a
    /// normalization layer whose shift makes a bias redundant. Weight
    /// initialization draws exactly as in [`Conv2d::new`].
    pub fn without_bias(
        kh: usize,
        kw: usize,
        cin: usize,
        cout: usize,
        rng: &mut PipelineRng,
    ) -> Self {
        let fan_in = kh * kw * cin;
        let fan_out = kh * kw * cout;
        let weight = Array4::from_shape_vec(
            (kh, kw, cin, cout),
            glorot_uniform(fan_in * cout, fan_in, fan_out, rng),
        )
        .expect("shape matches draw count");
        Conv2d {
            wgrad: Array4::zeros(weight.raw_dim()),
            weight,
            bias: None,
            bgrad: None,
            cache: None,
        }
    }

    pub fn out_channels(&self) -> usize {
        self.weight.dim().3
    }

    fn weight_matrix(&self) -> Array2<f64> {
        let (kh, kw, cin, cout) = self.weight.dim();
        self.weight
            .view()
            .into_shape_with_order((kh * kw * cin, cout))
            .expect("owned weights are contiguous")
            .to_owned()
    }

    fn im2col(x: &Array4<f64>, kh: usize, kw: usize) -> Array2<f64> {
        let (n, h, w, cin) = x.dim();
        let (oh, ow) = (h - kh + 1, w - kw + 1);
        let xs = x.as_slice().expect("standard layout");
        let mut cols = Array2::zeros((n * oh * ow, kh * kw * cin));
        let cs = cols.as_slice_mut().expect("freshly allocated");
        let row_len = kh * kw * cin;

        let mut row = 0;
        for ni in 0..n {
            for oy in 0..oh {
                for ox in 0..ow {
                    let out_base = row * row_len;
                    for ky in 0..kh {
                        for kx in 0..kw {
                            let src = (((ni * h + oy + ky) * w) + ox + kx) * cin;
                            let dst = out_base + (ky * kw + kx) * cin;
                            cs[dst..dst + cin].copy_from_slice(&xs[src..src + cin]);
                        }
                    }
                    row += 1;
                }
            }
        }
        cols
    }

    pub fn forward(&mut self, x: &Array4<f64>, train: bool) -> Array4<f64> {
        let (n, h, w, cin) = x.dim();
        let (kh, kw, w_cin, cout) = self.weight.dim();
        assert_eq!(cin, w_cin, "input channels do not match kernel");
        assert!(h >= kh && w >= kw, "input {h}x{w} smaller than kernel {kh}x{kw}");
        let (oh, ow) = (h - kh + 1, w - kw + 1);

        let cols = Self::im2col(x, kh, kw);
        let mut y_flat = cols.dot(&self.weight_matrix());
        if let Some(bias) = &self.bias {
            y_flat += bias;
        }
        let y = y_flat
            .into_shape_with_order((n, oh, ow, cout))
            .expect("row count equals n*oh*ow");

        self.cache = if train {
            Some(ConvCache { x_dim: x.dim(), cols })
        } else {
            None
        };
        y
    }

    pub fn backward(&mut self, dy: &Array4<f64>) -> Array4<f64> {
        let ConvCache { x_dim, cols } = self.cache.take().expect("forward(train) precedes backward");
        let (n, h, w, cin) = x_dim;
        let (kh, kw, _, cout) = self.weight.dim();
        let (dn, oh, ow, dcout) = dy.dim();
        assert_eq!((dn, dcout), (n, cout));

        let dy_flat = dy
            .view()
            .into_shape_with_order((n * oh * ow, cout))
            .expect("standard layout");

        let dw_mat = cols.t().dot(&dy_flat);
        let dw = dw_mat
            .into_shape_with_order((kh, kw, cin, cout))
            .expect("weight-shaped");
        self.wgrad += &dw;
        if let Some(bgrad) = &mut self.bgrad {
            *bgrad += &dy_flat.sum_axis(ndarray::Axis(0));
        }

        // col2im: scatter-add the column gradients back onto the input.
        let dcols = dy_flat.dot(&self.weight_matrix().t());
        let dcs = dcols.as_slice().expect("standard layout");
        let mut dx = Array4::zeros((n, h, w, cin));
        let dxs = dx.as_slice_mut().expect("freshly allocated");
        let row_len = kh * kw * cin;

        let mut row = 0;
        for ni in 0..n {
            for oy in 0..oh {
                for ox in 0..ow {
                    let in_base = row * row_len;
                    for ky in 0..kh {
                        for kx in 0..kw {
                            let dst = (((ni * h + oy + ky) * w) + ox + kx) * cin;
                            let src = in_base + (ky * kw + kx) * cin;
                            for c in 0..cin {
                                dxs[dst + c] += dcs[src + c];
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
        dx
    }

    pub fn params_mut(&mut self) -> Vec<ParamRef<'_>> {
        let mut out = vec![ParamRef {
            name: "weight".into(),
            value: self.weight.view_mut().into_dyn(),
            grad: self.wgrad.view_mut().into_dyn(),
            trainable: true,
        }];
        if let (Some(bias), Some(bgrad)) = (&mut self.bias, &mut self.bgrad) {
            out.push(ParamRef {
                name: "bias".into(),
                value: bias.view_mut().into_dyn(),
                grad: bgrad.view_mut().into_dyn(),
                trainable: true,
            });
        }
        out
    }
}

/// How fast the running statistics forget: each training batch keeps
/// `BN_MOMENTUM` of the old average. At 0.9 the averages converge to the
/// data statistics within a couple hundred optimizer steps, so even
/// short trainings evaluate with settled statistics.
const BN_MOMENTUM: f64 = 0.9;
/// Variance floor inside the normalizing square root.
const BN_EPSILON: f64 = 1e-3;

/// Per-channel batch normalization of NHWC feature maps.
///
/// Training batches are standardized by their own per-channel mean and
/// population variance, then scaled and shifted by the learned `gamma`
/// and `beta`. Evaluation standardizes by exponential running averages
/// of the batch statistics instead, so a single image is judged against
/// the distribution training converged to rather than against itself.
/// The running averages are buffers: checkpointed, never optimized.
pub struct BatchNorm2d {
    gamma: Array1<f64>,
    ggrad: Array1<f64>,
    beta: Array1<f64>,
    bgrad: Array1<f64>,
    running_mean: Array1<f64>,
    running_var: Array1<f64>,
    // Zero-filled stand-ins so buffers fit the uniform ParamRef shape.
    rm_grad: Array1<f64>,
    rv_grad: Array1<f64>,
    cache: Option<BnCache>,
}

struct BnCache {
    x_hat: Array2<f64>,
    inv_std: Array1<f64>,
}

impl BatchNorm2d {
    pub fn new(channels: usize) -> Self {
        BatchNorm2d {
            gamma: Array1::ones(channels),
            ggrad: Array1::zeros(channels),
            beta: Array1::zeros(channels),
            bgrad: Array1::zeros(channels),
            running_mean: Array1::zeros(channels),
            running_var: Array1::ones(channels),
            rm_grad: Array1::zeros(channels),
            rv_grad: Array1::zeros(channels),
            cache: None,
        }
    }

    pub fn forward(&mut self, x: &Array4<f64>, train: bool) -> Array4<f64> {
        let (n, h, w, c) = x.dim();
        assert_eq!(c, self.gamma.len(), "channel count does not match");
        let rows = n * h * w;
        let flat = x
            .view()
            .into_shape_with_order((rows, c))
            .expect("standard layout");

        let y_flat = if train {
            let m = rows as f64;
            let mean = flat.sum_axis(ndarray::Axis(0)) / m;
            let centered = &flat - &mean;
            let var = centered.mapv(|v| v * v).sum_axis(ndarray::Axis(0)) / m;
            let inv_std = var.mapv(|v| 1.0 / (v + BN_EPSILON).sqrt());
            let x_hat = centered * &inv_std;

            self.running_mean = &self.running_mean * BN_MOMENTUM + &mean * (1.0 - BN_MOMENTUM);
            self.running_var = &self.running_var * BN_MOMENTUM + &var * (1.0 - BN_MOMENTUM);

            let y = &x_hat * &self.gamma + &self.beta;
            self.cache = Some(BnCache { x_hat, inv_std });
            y
        } else {
            self.cache = None;
            let inv_std = self.running_var.mapv(|v| 1.0 / (v + BN_EPSILON).sqrt());
            (&flat - &self.running_mean) * &(&inv_std * &self.gamma) + &self.beta
        };
        y_flat
            .into_shape_with_order((n, h, w, c))
            .expect("row count matches")
    }

    pub fn backward(&mut self, dy: &Array4<f64>) -> Array4<f64> {
        let BnCache { x_hat, inv_std } =
            self.cache.take().expect("forward(train) precedes backward");
        let (n, h, w, c) = dy.dim();
        let rows = n * h * w;
        let m = rows as f64;
        let dy_flat = dy
            .view()
            .into_shape_with_order((rows, c))
            .expect("standard layout");

        let sum_dy = dy_flat.sum_axis(ndarray::Axis(0));
        let sum_dy_xhat = (&dy_flat * &x_hat).sum_axis(ndarray::Axis(0));
        self.ggrad += &sum_dy_xhat;
        self.bgrad += &sum_dy;

        // Input gradient through the batch statistics, folded into one
        // expression: dx = gamma*inv_std/m * (m*dy - Σdy - x_hat*Σ(dy*x_hat)).
        let coef = &self.gamma * &inv_std / m;
        let dx = (&dy_flat * m - &sum_dy - &x_hat * &sum_dy_xhat) * &coef;
        dx.into_shape_with_order((n, h, w, c))
            .expect("row count matches")
    }

    pub fn params_mut(&mut self) -> Vec<ParamRef<'_>> {
        vec![
            ParamRef {
                name: "gamma".into(),
                value: self.gamma.view_mut().into_dyn(),
                grad: self.ggrad.view_mut().into_dyn(),
                trainable: true,
            },
            ParamRef {
                name: "beta".into(),
                value: self.beta.view_mut().into_dyn(),
                grad: self.bgrad.view_mut().into_dyn(),
                trainable: true,
            },
            ParamRef {
                name: "running_mean".into(),
                value: self.running_mean.view_mut().into_dyn(),
                grad: self.rm_grad.view_mut().into_dyn(),
                trainable: false,
            },
            ParamRef {
                name: "running_var".into(),
                value: self.running_var.view_mut().into_dyn(),
                grad: self.rv_grad.view_mut().into_dyn(),
                trainable: false,
            },
        ]
    }
}

/// Rectifier with cached activation mask. The subgradient at zero is
/// taken as zero.
pub struct Relu<D: Dimension> {
    mask: Option<ndarray::Array<f64, D>>,
}

impl<D: Dimension> Relu<D> {
    pub fn new() -> Self {
        Relu { mask: None }
    }

    pub fn forward(&mut self, x: &ndarray::Array<f64, D>, train: bool) -> ndarray::Array<f64, D> {
        if train {
            self.mask = Some(x.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 }));
        }
        x.mapv(|v| v.max(0.0))
    }

    pub fn backward(&mut self, dy: &ndarray::Array<f64, D>) -> ndarray::Array<f64, D> {
        let mask = self.mask.take().expect("forward(train) precedes backward");
        dy * &mask
    }
}

impl<D: Dimension> Default for Relu<D> {
    fn default() -> Self {
        Self::new()
    }
}

/// 2x2 max pooling with stride 2; a trailing odd row or column is
/// dropped. The backward pass routes each gradient to the cell that
/// won the forward maximum (ties to the first in scan order).
pub struct MaxPool2 {
    cache: Option<(usize, usize, usize, usize, Array4<u8>)>,
}

impl MaxPool2 {
    pub fn new() -> Self {
        MaxPool2 { cache: None }
    }

    pub fn forward(&mut self, x: &Array4<f64>, train: bool) -> Array4<f64> {
        let (n, h, w, c) = x.dim();
        assert!(h >= 2 && w >= 2, "cannot 2x2-pool a {h}x{w} map");
        let (oh, ow) = (h / 2, w / 2);
        let mut y = Array4::zeros((n, oh, ow, c));
        let mut argmax = Array4::zeros((n, oh, ow, c));
        for ni in 0..n {
            for oy in 0..oh {
                for ox in 0..ow {
                    for ch in 0..c {
                        let mut best = f64::NEG_INFINITY;
                        let mut best_at = 0u8;
                        for dy in 0..2 {
                            for dx in 0..2 {
                                let v = x[[ni, oy * 2 + dy, ox * 2 + dx, ch]];
                                if v > best {
                                    best = v;
                                    best_at = (dy * 2 + dx) as u8;
                                }
                            }
                        }
                        y[[ni, oy, ox, ch]] = best;
                        argmax[[ni, oy, ox, ch]] = best_at;
                    }
                }
            }
        }
        if train {
            self.cache = Some((n, h, w, c, argmax));
        }
        y
    }

    pub fn backward(&mut self, dy: &Array4<f64>) -> Array4<f64> {
        let (n, h, w, c, argmax) = self.cache.take().expect("forward(train) precedes backward");
        let (_, oh, ow, _) = dy.dim();
        let mut dx = Array4::zeros((n, h, w, c));
        for ni in 0..n {
            for oy in 0..oh {
                for ox in 0..ow {
                    for ch in 0..c {
                        let at = argmax[[ni, oy, ox, ch]] as usize;
                        let (ay, ax) = (at / 2, at % 2);
                        dx[[ni, oy * 2 + ay, ox * 2 + ax, ch]] += dy[[ni, oy, ox, ch]];
                    }
                }
            }
        }
        dx
    }
}

impl Default for MaxPool2 {
    fn default() -> Self {
        Self::new()
    }
}

/// Mean over the spatial axes: `[n, h, w, c]` to `[n, c]`.
pub struct GlobalAvgPool {
    cache: Option<(usize, usize)>,
}

impl GlobalAvgPool {
    pub fn new() -> Self {
        GlobalAvgPool { cache: None }
    }

    pub fn forward(&mut self, x: &Array4<f64>, train: bool) -> Array2<f64> {
        let (n, h, w, c) = x.dim();
        assert!(h > 0 && w > 0, "cannot average an empty {h}x{w} map");
        let mut y = Array2::zeros((n, c));
        let scale = 1.0 / (h * w) as f64;
        for ni in 0..n {
            for yy in 0..h {
                for xx in 0..w {
                    for ch in 0..c {
                        y[[ni, ch]] += x[[ni, yy, xx, ch]] * scale;
                    }
                }
            }
        }
        if train {
            self.cache = Some((h, w));
        }
        y
    }

    pub fn backward(&mut self, dy: &Array2<f64>) -> Array4<f64> {
        let (h, w) = self.cache.take().expect("forward(train) precedes backward");
        let (n, c) = dy.dim();
        let scale = 1.0 / (h * w) as f64;
        let mut dx = Array4::zeros((n, h, w, c));
        for ni in 0..n {
            for yy in 0..h {
                for xx in 0..w {
                    for ch in 0..c {
                        dx[[ni, yy, xx, ch]] = dy[[ni, ch]] * scale;
                    }
                }
            }
        }
        dx
    }
}

impl Default for GlobalAvgPool {
    fn default() -> Self {
        Self::new()
    }
}

/// Fully connected layer: `[n, din]` to `[n, dout]`.
pub struct Dense {
    weight: Array2<f64>,
    wgrad: Array2<f64>,
    bias: Array1<f64>,
    bgrad: Array1<f64>,
    cache: Option<Array2<f64>>,
}

impl Dense {
    pub fn new(din: usize, dout: usize, rng: &mut PipelineRng) -> Self {
        let weight =
            Array2::from_shape_vec((din, dout), glorot_uniform(din * dout, din, dout, rng))
                .expect("shape matches draw count");
        Dense {
            wgrad: Array2::zeros(weight.raw_dim()),
            weight,
            bias: Array1::zeros(dout),
            bgrad: Array1::zeros(dout),
            cache: None,
        }
    }

    pub fn forward(&mut self, x: &Array2<f64>, train: bool) -> Array2<f64> {
        let y = x.dot(&self.weight) + &self.bias;
        self.cache = if train { Some(x.clone()) } else { None };
        y
    }

    pub fn backward(&mut self, dy: &Array2<f64>) -> Array2<f64> {
        let x = self.cache.take().expect("forward(train) precedes backward");
        self.wgrad += &x.t().dot(dy);
        self.bgrad += &dy.sum_axis(ndarray::Axis(0));
        dy.dot(&self.weight.t())
    }

    pub fn params_mut(&mut self) -> Vec<ParamRef<'_>> {
        vec![
            ParamRef {
                name: "weight".into(),
                value: self.weight.view_mut().into_dyn(),
                grad: self.wgrad.view_mut().into_dyn(),
                trainable: true,
            },
            ParamRef {
                name: "bias".into(),
                value: self.bias.view_mut().into_dyn(),
                grad: self.bgrad.view_mut().into_dyn(),
                trainable: true,
            },
        ]
    }
}

/// Inverted dropout: surviving activations are scaled by `1/(1-rate)`
/// during training so evaluation needs no rescaling. With no RNG (or a
/// zero rate) the layer is the identity.
pub struct Dropout {
    rate: f64,
    mask: Option<Array2<f64>>,
}

impl Dropout {
    pub fn new(rate: f64) -> Self {
        assert!((0.0..1.0).contains(&rate), "dropout rate must be in [0, 1), got {rate}");
        Dropout { rate, mask: None }
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn forward(&mut self, x: &Array2<f64>, rng: Option<&mut PipelineRng>) -> Array2<f64> {
        match rng {
            Some(rng) if self.rate > 0.0 => {
                let keep = 1.0 - self.rate;
                let mask = Array2::from_shape_vec(
                    x.raw_dim(),
                    (0..x.len())
                        .map(|_| {
                            if rng.random::<f64>() < self.rate {
                                0.0
                            } else {
                                1.0 / keep
                            }
                        })
                        .collect(),
                )
                .expect("shape matches draw count");
                let y = x * &mask;
                self.mask = Some(mask);
                y
            }
            _ => {
                self.mask = None;
                x.clone()
            }
        }
    }

    pub fn backward(&mut self, dy: &Array2<f64>) -> Array2<f64> {
        match self.mask.take() {
            Some(mask) => dy * &mask,
            None => dy.clone(),
        }
    }
}
