//! Dense CHW tensors and the primitive layers the decoder is assembled from:
//! same-padded convolution, ReLU, inference-mode batch normalization,
//! nearest-neighbor upsampling, channel softmax and channel argmax.
//!
//! Every operation is a pure function returning a fresh tensor.

use rayon::prelude::*;

use crate::error::{Result, SegError};
use crate::mask::LabelImage;

/// Rank-3 real array in row-major (channel, row, column) order.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(SegError::Contract(format!(
                "tensor dimensions must be positive, got {channels}x{height}x{width}"
            )));
        }
        if data.len() != channels * height * width {
            return Err(SegError::Contract(format!(
                "tensor {channels}x{height}x{width} needs {} values, got {}",
                channels * height * width,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(SegError::Contract(format!(
                "tensor value at flat index {pos} is not finite"
            )));
        }
        Ok(Tensor {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self::filled(channels, height, width, 0.0)
    }

    /// # Panics
    /// If any dimension is zero or `value` is not finite.
    pub fn filled(channels: usize, height: usize, width: usize, value: f64) -> Self {
        assert!(
            channels > 0 && height > 0 && width > 0,
            "tensor dimensions must be positive"
        );
        assert!(value.is_finite());
        Tensor {
            channels,
            height,
            width,
            data: vec![value; channels * height * width],
        }
    }

    /// Builds a tensor by evaluating `f(c, y, x)` at every position.
    pub fn from_fn(
        channels: usize,
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(channels * height * width);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x));
                }
            }
        }
        Self::new(channels, height, width, data)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// `(channels, height, width)`
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    /// The `height × width` plane of channel `c`.
    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// Convolution weights laid out as (out, in, row, column), plus one bias per output channel.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelBank {
    out_channels: usize,
    in_channels: usize,
    k_h: usize,
    k_w: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl KernelBank {
    pub fn new(
        out_channels: usize,
        in_channels: usize,
        k_h: usize,
        k_w: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
    ) -> Result<Self> {
        if out_channels == 0 || in_channels == 0 || k_h == 0 || k_w == 0 {
            return Err(SegError::Config(format!(
                "kernel bank dimensions must be positive, got {out_channels}x{in_channels}x{k_h}x{k_w}"
            )));
        }
        if k_h.is_multiple_of(2) || k_w.is_multiple_of(2) {
            return Err(SegError::Config(format!(
                "kernel size {k_h}x{k_w} must be odd in both dimensions for same padding"
            )));
        }
        let expected = out_channels * in_channels * k_h * k_w;
        if weights.len() != expected {
            return Err(SegError::Contract(format!(
                "kernel bank {out_channels}x{in_channels}x{k_h}x{k_w} needs {expected} weights, got {}",
                weights.len()
            )));
        }
        if bias.len() != out_channels {
            return Err(SegError::Contract(format!(
                "kernel bank needs {out_channels} biases, got {}",
                bias.len()
            )));
        }
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(SegError::Contract("kernel bank contains non-finite values".into()));
        }
        Ok(KernelBank {
            out_channels,
            in_channels,
            k_h,
            k_w,
            weights,
            bias,
        })
    }

    pub fn zeros(out_channels: usize, in_channels: usize, k_h: usize, k_w: usize) -> Result<Self> {
        Self::new(
            out_channels,
            in_channels,
            k_h,
            k_w,
            vec![0.0; out_channels * in_channels * k_h * k_w],
            vec![0.0; out_channels],
        )
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn kernel_size(&self) -> (usize, usize) {
        (self.k_h, self.k_w)
    }

    /// `[out, in, k_h, k_w]`
    pub fn dims(&self) -> [usize; 4] {
        [self.out_channels, self.in_channels, self.k_h, self.k_w]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    #[inline]
    pub fn weight(&self, o: usize, i: usize, ky: usize, kx: usize) -> f64 {
        self.weights[((o * self.in_channels + i) * self.k_h + ky) * self.k_w + kx]
    }
}

pub const DEFAULT_BN_EPSILON: f64 = 1e-3;

/// Per-channel inference-mode batch normalization parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct BnParams {
    gamma: Vec<f64>,
    beta: Vec<f64>,
    running_mean: Vec<f64>,
    running_var: Vec<f64>,
    epsilon: f64,
}

impl BnParams {
    /// Epsilon may be zero as long as every `running_var + epsilon` stays positive.
    pub fn new(
        gamma: Vec<f64>,
        beta: Vec<f64>,
        running_mean: Vec<f64>,
        running_var: Vec<f64>,
        epsilon: f64,
    ) -> Result<Self> {
        let n = gamma.len();
        if n == 0 || beta.len() != n || running_mean.len() != n || running_var.len() != n {
            return Err(SegError::Contract(format!(
                "batch norm vectors must share a nonzero length, got gamma {n}, beta {}, mean {}, var {}",
                beta.len(),
                running_mean.len(),
                running_var.len()
            )));
        }
        if !epsilon.is_finite() || epsilon < 0.0 {
            return Err(SegError::Config(format!("batch norm epsilon {epsilon} must be >= 0")));
        }
        if let Some(c) = running_var
            .iter()
            .position(|&v| v.is_nan() || v < 0.0 || v + epsilon <= 0.0)
        {
            return Err(SegError::Config(format!(
                "batch norm channel {c}: running variance {} with epsilon {epsilon} gives a non-positive denominator",
                running_var[c]
            )));
        }
        if gamma
            .iter()
            .chain(&beta)
            .chain(&running_mean)
            .chain(&running_var)
            .any(|v| !v.is_finite())
        {
            return Err(SegError::Contract(
                "batch norm parameters contain non-finite values".into(),
            ));
        }
        Ok(BnParams {
            gamma,
            beta,
            running_mean,
            running_var,
            epsilon,
        })
    }

    /// gamma = 1, beta = 0, mean = 0, var = 1.
    pub fn identity(channels: usize, epsilon: f64) -> Result<Self> {
        Self::new(
            vec![1.0; channels],
            vec![0.0; channels],
            vec![0.0; channels],
            vec![1.0; channels],
            epsilon,
        )
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn running_mean(&self) -> &[f64] {
        &self.running_mean
    }

    pub fn running_var(&self) -> &[f64] {
        &self.running_var
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
}

/// Fixed-order dot product over eight interleaved partial sums.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// Stride-1 convolution with zero same-padding.
pub fn conv2d(x: &Tensor, k: &KernelBank) -> Result<Tensor> {
    conv2d_strided(x, k, 1)
}

/// Zero-padded convolution with padding `k/2` on each side and the given stride.
///
/// Output size is `(n - 1) / stride + 1` along each axis, so stride 1 preserves
/// the input size and stride 2 halves even sizes.
pub fn conv2d_strided(x: &Tensor, k: &KernelBank, stride: usize) -> Result<Tensor> {
    if stride == 0 {
        return Err(SegError::Config("convolution stride must be positive".into()));
    }
    if x.channels != k.in_channels {
        return Err(SegError::Contract(format!(
            "convolution expects {} input channels, tensor has {}",
            k.in_channels, x.channels
        )));
    }
    let (h, w) = (x.height, x.width);
    let out_h = (h - 1) / stride + 1;
    let out_w = (w - 1) / stride + 1;
    let pad_y = (k.k_h / 2) as isize;
    let pad_x = (k.k_w / 2) as isize;

    // im2col: one row of (in, ky, kx) taps per output pixel, zero outside the image.
    let taps = k.in_channels * k.k_h * k.k_w;
    let pixels = out_h * out_w;
    let mut patches = vec![0.0; pixels * taps];
    patches.par_chunks_mut(taps).enumerate().for_each(|(p, row)| {
        let (oy, ox) = ((p / out_w) as isize, (p % out_w) as isize);
        let mut t = 0;
        for i in 0..k.in_channels {
            let src = x.plane(i);
            for ky in 0..k.k_h as isize {
                let iy = oy * stride as isize + ky - pad_y;
                for kx in 0..k.k_w as isize {
                    let ix = ox * stride as isize + kx - pad_x;
                    if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                        row[t] = src[iy as usize * w + ix as usize];
                    }
                    t += 1;
                }
            }
        }
    });

    let mut out = vec![0.0; k.out_channels * pixels];
    out.par_chunks_mut(pixels).enumerate().for_each(|(o, dst)| {
        let filter = &k.weights[o * taps..(o + 1) * taps];
        for (v, patch) in dst.iter_mut().zip(patches.chunks_exact(taps)) {
            *v = k.bias[o] + dot(filter, patch);
        }
    });

    Ok(Tensor {
        channels: k.out_channels,
        height: out_h,
        width: out_w,
        data: out,
    })
}

pub fn relu(x: &Tensor) -> Tensor {
    x.map(|v| v.max(0.0))
}

/// `gamma·(v − mean)/sqrt(var + epsilon) + beta` per channel, using running statistics.
pub fn batch_norm(x: &Tensor, p: &BnParams) -> Result<Tensor> {
    if p.channels() != x.channels {
        return Err(SegError::Contract(format!(
            "batch norm has {} channels, tensor has {}",
            p.channels(),
            x.channels
        )));
    }
    let plane = x.height * x.width;
    let mut data = Vec::with_capacity(x.data.len());
    for c in 0..x.channels {
        let scale = p.gamma[c] / (p.running_var[c] + p.epsilon).sqrt();
        let mean = p.running_mean[c];
        let beta = p.beta[c];
        data.extend(
            x.data[c * plane..(c + 1) * plane]
                .iter()
                .map(|&v| scale * (v - mean) + beta),
        );
    }
    Ok(Tensor {
        channels: x.channels,
        height: x.height,
        width: x.width,
        data,
    })
}

/// Replicates each pixel into a `factor × factor` block.
pub fn upsample_nearest(x: &Tensor, factor: usize) -> Result<Tensor> {
    if factor == 0 {
        return Err(SegError::Config("upsampling factor must be at least 1".into()));
    }
    let (oh, ow) = (x.height * factor, x.width * factor);
    let mut data = Vec::with_capacity(x.channels * oh * ow);
    for c in 0..x.channels {
        let src = x.plane(c);
        for oy in 0..oh {
            let row = &src[(oy / factor) * x.width..(oy / factor + 1) * x.width];
            data.extend((0..ow).map(|ox| row[ox / factor]));
        }
    }
    Ok(Tensor {
        channels: x.channels,
        height: oh,
        width: ow,
        data,
    })
}

/// Per-pixel softmax across channels, with max subtraction.
pub fn softmax_channels(x: &Tensor) -> Result<Tensor> {
    if x.channels < 2 {
        return Err(SegError::Config(format!(
            "softmax needs at least 2 channels, got {}",
            x.channels
        )));
    }
    let plane = x.height * x.width;
    let mut data = vec![0.0; x.data.len()];
    let mut scratch = vec![0.0; x.channels];
    for p in 0..plane {
        let max = (0..x.channels)
            .map(|c| x.data[c * plane + p])
            .fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for (c, e) in scratch.iter_mut().enumerate() {
            *e = (x.data[c * plane + p] - max).exp();
            sum += *e;
        }
        for (c, e) in scratch.iter().enumerate() {
            data[c * plane + p] = e / sum;
        }
    }
    Ok(Tensor {
        channels: x.channels,
        height: x.height,
        width: x.width,
        data,
    })
}

/// Index of the largest channel per pixel; ties go to the lowest index.
pub fn argmax_channels(x: &Tensor) -> LabelImage {
    let plane = x.height * x.width;
    let labels = (0..plane)
        .map(|p| {
            let mut best = 0;
            let mut best_v = x.data[p];
            for c in 1..x.channels {
                let v = x.data[c * plane + p];
                if v > best_v {
                    best = c;
                    best_v = v;
                }
            }
            best as u32
        })
        .collect();
    LabelImage::new(x.height, x.width, labels).expect("plane size matches tensor")
}
