use std::cell::RefCell;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{loss_depth, loss_joint, loss_pipe, LossWeights};
use crate::error::{Error, Result};
use crate::signal::MelSegment;

/// Log-mel values sit in `[-80, 0]` dB; they enter the network as
/// `x / 80 + 1`.
pub const INPUT_SCALE_DB: f64 = 80.0;

/// Layer sizes of the encoder and both heads.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub input_rows: usize,
    pub input_cols: usize,
    /// Adds a channel holding the normalized band index, so that the
    /// position-free max pooling can still tell low bands from high ones.
    pub coord_channel: bool,
    pub conv1_channels: usize,
    pub conv1_kernel: usize,
    pub conv2_channels: usize,
    pub conv2_kernel: usize,
    pub pipe_hidden: usize,
    pub depth_hidden: [usize; 2],
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            input_rows: MelSegment::ROWS,
            input_cols: MelSegment::COLS,
            coord_channel: true,
            conv1_channels: 128,
            conv1_kernel: 5,
            conv2_channels: 128,
            conv2_kernel: 3,
            pipe_hidden: 128,
            depth_hidden: [256, 128],
        }
    }
}

impl ModelConfig {
    pub fn in_channels(&self) -> usize {
        1 + usize::from(self.coord_channel)
    }

    pub fn validate(&self) -> Result<()> {
        let sizes = [
            self.conv1_channels,
            self.conv2_channels,
            self.conv1_kernel,
            self.conv2_kernel,
            self.pipe_hidden,
            self.depth_hidden[0],
            self.depth_hidden[1],
        ];
        if sizes.contains(&0) {
            return Err(Error::InvalidParameter("layer sizes must be nonzero".into()));
        }
        let span = self.conv1_kernel + self.conv2_kernel - 1;
        if self.input_rows < span || self.input_cols < span {
            return Err(Error::InvalidShape {
                expected: format!("input of at least {span}x{span}"),
                actual: format!("{}x{}", self.input_rows, self.input_cols),
            });
        }
        Ok(())
    }
}

/// Channels x rows x cols, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub channels: usize,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl FeatureMap {
    pub fn new(channels: usize, rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != channels * rows * cols {
            return Err(Error::InvalidShape {
                expected: format!("{channels}x{rows}x{cols}"),
                actual: format!("{} values", data.len()),
            });
        }
        Ok(Self {
            channels,
            rows,
            cols,
            data,
        })
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.rows + y) * self.cols + x]
    }
}

/// Square-kernel convolution, one bias per output channel. Weights are
/// indexed `[out][in][dy][dx]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conv2d {
    pub out_channels: usize,
    pub in_channels: usize,
    pub kernel: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Conv2d {
    pub fn zeros(out_channels: usize, in_channels: usize, kernel: usize) -> Self {
        Self {
            out_channels,
            in_channels,
            kernel,
            weights: vec![0.0; out_channels * in_channels * kernel * kernel],
            biases: vec![0.0; out_channels],
        }
    }

    fn patch(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    pub fn weight(&self, o: usize, c: usize, dy: usize, dx: usize) -> f64 {
        self.weights[((o * self.in_channels + c) * self.kernel + dy) * self.kernel + dx]
    }
}

/// Fully connected layer, weights `[out][in]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub out_features: usize,
    pub in_features: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Dense {
    pub fn zeros(out_features: usize, in_features: usize) -> Self {
        Self {
            out_features,
            in_features,
            weights: vec![0.0; out_features * in_features],
            biases: vec![0.0; out_features],
        }
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.in_features)
            .zip(&self.biases)
            .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect()
    }

    /// Accumulates parameter gradients for upstream `dy` and input `x`, and
    /// returns `Wᵀ dy`.
    fn backward(&self, x: &[f64], dy: &[f64], grad: &mut Dense) -> Vec<f64> {
        let mut dx = vec![0.0; self.in_features];
        for (o, &g) in dy.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            grad.biases[o] += g;
            let row = &self.weights[o * self.in_features..(o + 1) * self.in_features];
            let grow = &mut grad.weights[o * self.in_features..(o + 1) * self.in_features];
            for i in 0..self.in_features {
                grow[i] += g * x[i];
                dx[i] += g * row[i];
            }
        }
        dx
    }
}

/// Unfolds `input` (c x h x w) into a `(c·k·k) x (oh·ow)` patch matrix.
fn im2col(input: &[f64], c: usize, h: usize, w: usize, k: usize) -> (Vec<f64>, usize, usize) {
    let (oh, ow) = (h + 1 - k, w + 1 - k);
    let p = oh * ow;
    let mut col = vec![0.0; c * k * k * p];
    for ci in 0..c {
        for dy in 0..k {
            for dx in 0..k {
                let row = (ci * k + dy) * k + dx;
                let dst = &mut col[row * p..(row + 1) * p];
                for y in 0..oh {
                    let src = &input[(ci * h + y + dy) * w + dx..][..ow];
                    dst[y * ow..(y + 1) * ow].copy_from_slice(src);
                }
            }
        }
    }
    (col, oh, ow)
}

/// `C = A · B` for row-major `A` (m x k) and `B` (k x n).
fn matmul(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    // SAFETY: the slices hold at least m*k, k*n and m*n elements with the
    // row-major strides passed here.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            k as isize,
            1,
            b.as_ptr(),
            n as isize,
            1,
            0.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn conv_apply(layer: &Conv2d, col: &[f64], positions: usize) -> Vec<f64> {
    let mut out = vec![0.0; layer.out_channels * positions];
    matmul(layer.out_channels, layer.patch(), positions, &layer.weights, col, &mut out);
    for (row, b) in out.chunks_exact_mut(positions).zip(&layer.biases) {
        row.iter_mut().for_each(|v| *v += b);
    }
    out
}

thread_local! {
    // Transformed filters, tiles and products. Every element is rewritten on
    // each call; keeping them avoids page faults on multi-megabyte buffers.
    static WINOGRAD_SCRATCH: RefCell<[Vec<f64>; 3]> = const { RefCell::new([Vec::new(), Vec::new(), Vec::new()]) };
}

/// 3x3 valid cross-correlation by Winograd F(2x2, 3x3): 16 small GEMMs over
/// 4x4 input tiles instead of one im2col GEMM, 2.25x fewer multiplies.
fn winograd3x3(layer: &Conv2d, input: &[f64], h: usize, w: usize) -> (Vec<f64>, usize, usize) {
    WINOGRAD_SCRATCH.with_borrow_mut(|[u, v, m]| winograd_with(layer, input, h, w, u, v, m))
}

fn winograd_with(
    layer: &Conv2d,
    input: &[f64],
    h: usize,
    w: usize,
    u: &mut Vec<f64>,
    v: &mut Vec<f64>,
    m: &mut Vec<f64>,
) -> (Vec<f64>, usize, usize) {
    let (k_out, c) = (layer.out_channels, layer.in_channels);
    let (oh, ow) = (h - 2, w - 2);
    let (th, tw) = (oh.div_ceil(2), ow.div_ceil(2));
    let p = th * tw;

    // U = G g Gᵀ per filter.
    let kc = k_out * c;
    u.resize(16 * kc, 0.0);
    for (f, g) in layer.weights.chunks_exact(9).enumerate() {
        let mut t = [[0.0; 3]; 4];
        for j in 0..3 {
            let (g0, g1, g2) = (g[j], g[3 + j], g[6 + j]);
            t[0][j] = g0;
            t[1][j] = 0.5 * (g0 + g1 + g2);
            t[2][j] = 0.5 * (g0 - g1 + g2);
            t[3][j] = g2;
        }
        for (i, r) in t.iter().enumerate() {
            let row = [r[0], 0.5 * (r[0] + r[1] + r[2]), 0.5 * (r[0] - r[1] + r[2]), r[2]];
            for (j, v) in row.into_iter().enumerate() {
                u[(4 * i + j) * kc + f] = v;
            }
        }
    }

    // V = Bᵀ d B per input tile, zero-padded past the right and bottom edges.
    let cp = c * p;
    v.resize(16 * cp, 0.0);
    for ci in 0..c {
        let plane = &input[ci * h * w..(ci + 1) * h * w];
        for ty in 0..th {
            for tx in 0..tw {
                let mut d = [[0.0; 4]; 4];
                for (i, row) in d.iter_mut().enumerate() {
                    let y = 2 * ty + i;
                    if y >= h {
                        break;
                    }
                    for (j, e) in row.iter_mut().enumerate() {
                        let x = 2 * tx + j;
                        if x < w {
                            *e = plane[y * w + x];
                        }
                    }
                }
                let mut b = [[0.0; 4]; 4];
                for j in 0..4 {
                    b[0][j] = d[0][j] - d[2][j];
                    b[1][j] = d[1][j] + d[2][j];
                    b[2][j] = d[2][j] - d[1][j];
                    b[3][j] = d[1][j] - d[3][j];
                }
                let at = ci * p + ty * tw + tx;
                for (i, r) in b.iter().enumerate() {
                    let row = [r[0] - r[2], r[1] + r[2], r[2] - r[1], r[1] - r[3]];
                    for (j, x) in row.into_iter().enumerate() {
                        v[(4 * i + j) * cp + at] = x;
                    }
                }
            }
        }
    }

    let kp = k_out * p;
    m.resize(16 * kp, 0.0);
    for xi in 0..16 {
        matmul(k_out, c, p, &u[xi * kc..(xi + 1) * kc], &v[xi * cp..(xi + 1) * cp], &mut m[xi * kp..(xi + 1) * kp]);
    }

    // Y = Aᵀ M A, cropped to the valid output.
    let mut out = vec![0.0; k_out * oh * ow];
    for o in 0..k_out {
        let bias = layer.biases[o];
        let plane = &mut out[o * oh * ow..(o + 1) * oh * ow];
        for ty in 0..th {
            for tx in 0..tw {
                let at = o * p + ty * tw + tx;
                let e = |xi: usize| m[xi * kp + at];
                let mut s = [[0.0; 4]; 2];
                for j in 0..4 {
                    s[0][j] = e(j) + e(4 + j) + e(8 + j);
                    s[1][j] = e(4 + j) - e(8 + j) - e(12 + j);
                }
                for (i, r) in s.iter().enumerate() {
                    let y = 2 * ty + i;
                    if y >= oh {
                        break;
                    }
                    let pair = [r[0] + r[1] + r[2], r[1] - r[2] - r[3]];
                    for (j, val) in pair.into_iter().enumerate() {
                        let x = 2 * tx + j;
                        if x < ow {
                            plane[y * ow + x] = val + bias;
                        }
                    }
                }
            }
        }
    }
    (out, oh, ow)
}

/// Valid cross-correlation, stride 1, no activation.
pub fn conv_forward(layer: &Conv2d, input: &FeatureMap) -> Result<FeatureMap> {
    if input.channels != layer.in_channels || input.rows < layer.kernel || input.cols < layer.kernel {
        return Err(Error::InvalidShape {
            expected: format!("{} channels of at least {k}x{k}", layer.in_channels, k = layer.kernel),
            actual: format!("{}x{}x{}", input.channels, input.rows, input.cols),
        });
    }
    let (col, oh, ow) = im2col(&input.data, input.channels, input.rows, input.cols, layer.kernel);
    FeatureMap::new(layer.out_channels, oh, ow, conv_apply(layer, &col, oh * ow))
}

fn softmax(logits: &[f64]) -> [f64; 2] {
    let m = logits[0].max(logits[1]);
    let e0 = (logits[0] - m).exp();
    let e1 = (logits[1] - m).exp();
    let s = e0 + e1;
    [e0 / s, e1 / s]
}

/// Pipe probabilities `(p_no_pipe, p_pipe)` and depth in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub pipe_probs: [f64; 2],
    pub depth: f64,
}

impl Prediction {
    pub fn has_pipe(&self) -> bool {
        self.pipe_probs[1] > self.pipe_probs[0]
    }
}

/// Supervision for one input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Targets {
    pub pipe_label: u8,
    /// `None` masks the depth term.
    pub depth: Option<f64>,
}

struct Cache {
    col1: Vec<f64>,
    a1: Vec<f64>,
    p1: (usize, usize),
    p2: (usize, usize),
    argmax: Vec<usize>,
    f: Vec<f64>,
    pipe_h: Vec<f64>,
    depth_h1: Vec<f64>,
    depth_h2: Vec<f64>,
    prediction: Prediction,
}

/// Shared two-layer convolutional encoder with a pipe classifier head and a
/// depth regression head.
///
/// Both convolutions are followed by tanh; the second is max-pooled over the
/// whole map into the feature vector `f`, which feeds both heads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperFeatureModel {
    pub config: ModelConfig,
    pub conv1: Conv2d,
    pub conv2: Conv2d,
    pub pipe1: Dense,
    pub pipe2: Dense,
    pub depth1: Dense,
    pub depth2: Dense,
    pub depth3: Dense,
    pub seed: u64,
}

impl HyperFeatureModel {
    /// All-zero parameters with the layout of `config`.
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let c2 = config.conv2_channels;
        Ok(Self {
            conv1: Conv2d::zeros(config.conv1_channels, config.in_channels(), config.conv1_kernel),
            conv2: Conv2d::zeros(c2, config.conv1_channels, config.conv2_kernel),
            pipe1: Dense::zeros(config.pipe_hidden, c2),
            pipe2: Dense::zeros(2, config.pipe_hidden),
            depth1: Dense::zeros(config.depth_hidden[0], c2),
            depth2: Dense::zeros(config.depth_hidden[1], config.depth_hidden[0]),
            depth3: Dense::zeros(1, config.depth_hidden[1]),
            config,
            seed: 0,
        })
    }

    /// Glorot-uniform weights from `seed`, zero biases.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        let mut m = Self::zeros(config)?;
        m.seed = seed;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fill = |w: &mut [f64], fan_in: usize, fan_out: usize| {
            let s = (6.0 / (fan_in + fan_out) as f64).sqrt();
            w.iter_mut().for_each(|v| *v = rng.gen_range(-s..=s));
        };
        let k1 = m.conv1.kernel * m.conv1.kernel;
        let k2 = m.conv2.kernel * m.conv2.kernel;
        fill(&mut m.conv1.weights, m.conv1.in_channels * k1, m.conv1.out_channels * k1);
        fill(&mut m.conv2.weights, m.conv2.in_channels * k2, m.conv2.out_channels * k2);
        for d in [&mut m.pipe1, &mut m.pipe2, &mut m.depth1, &mut m.depth2, &mut m.depth3] {
            let (i, o) = (d.in_features, d.out_features);
            fill(&mut d.weights, i, o);
        }
        Ok(m)
    }

    pub fn zeros_like(&self) -> Self {
        let mut m = Self::zeros(self.config.clone()).expect("config already validated");
        m.seed = self.seed;
        m
    }

    /// Every parameter tensor, encoder first, as (name, values).
    pub fn tensors(&self) -> Vec<(&'static str, &Vec<f64>)> {
        vec![
            ("conv1.weights", &self.conv1.weights),
            ("conv1.biases", &self.conv1.biases),
            ("conv2.weights", &self.conv2.weights),
            ("conv2.biases", &self.conv2.biases),
            ("pipe1.weights", &self.pipe1.weights),
            ("pipe1.biases", &self.pipe1.biases),
            ("pipe2.weights", &self.pipe2.weights),
            ("pipe2.biases", &self.pipe2.biases),
            ("depth1.weights", &self.depth1.weights),
            ("depth1.biases", &self.depth1.biases),
            ("depth2.weights", &self.depth2.weights),
            ("depth2.biases", &self.depth2.biases),
            ("depth3.weights", &self.depth3.weights),
            ("depth3.biases", &self.depth3.biases),
        ]
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Vec<f64>> {
        vec![
            &mut self.conv1.weights,
            &mut self.conv1.biases,
            &mut self.conv2.weights,
            &mut self.conv2.biases,
            &mut self.pipe1.weights,
            &mut self.pipe1.biases,
            &mut self.pipe2.weights,
            &mut self.pipe2.biases,
            &mut self.depth1.weights,
            &mut self.depth1.biases,
            &mut self.depth2.weights,
            &mut self.depth2.biases,
            &mut self.depth3.weights,
            &mut self.depth3.biases,
        ]
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    /// `self += alpha · other`.
    pub fn axpy(&mut self, alpha: f64, other: &Self) {
        for (dst, src) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (d, s) in dst.iter_mut().zip(src.1) {
                *d += alpha * s;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }

    /// Scaled input plus the optional band-index channel.
    pub fn prepare_input(&self, values: &[f64]) -> Result<Vec<f64>> {
        let (h, w) = (self.config.input_rows, self.config.input_cols);
        if values.len() != h * w {
            return Err(Error::InvalidShape {
                expected: format!("{h}x{w}"),
                actual: format!("{} values", values.len()),
            });
        }
        let mut x: Vec<f64> = values.iter().map(|v| v / INPUT_SCALE_DB + 1.0).collect();
        if self.config.coord_channel {
            let denom = (h.max(2) - 1) as f64;
            for r in 0..h {
                let v = 2.0 * r as f64 / denom - 1.0;
                x.extend(std::iter::repeat(v).take(w));
            }
        }
        Ok(x)
    }

    fn forward_cached(&self, values: &[f64]) -> Result<Cache> {
        let cfg = &self.config;
        let x = self.prepare_input(values)?;
        let (col1, oh1, ow1) = im2col(&x, cfg.in_channels(), cfg.input_rows, cfg.input_cols, cfg.conv1_kernel);
        let mut a1 = conv_apply(&self.conv1, &col1, oh1 * ow1);
        a1.iter_mut().for_each(|v| *v = v.tanh());
        let (z2, oh2, ow2) = if cfg.conv2_kernel == 3 {
            winograd3x3(&self.conv2, &a1, oh1, ow1)
        } else {
            let (col2, oh2, ow2) = im2col(&a1, cfg.conv1_channels, oh1, ow1, cfg.conv2_kernel);
            (conv_apply(&self.conv2, &col2, oh2 * ow2), oh2, ow2)
        };
        let p2 = oh2 * ow2;
        let mut argmax = Vec::with_capacity(cfg.conv2_channels);
        let mut f = Vec::with_capacity(cfg.conv2_channels);
        for row in z2.chunks_exact(p2) {
            let (idx, &m) = row
                .iter()
                .enumerate()
                .fold((0, &row[0]), |best, cur| if cur.1 > best.1 { cur } else { best });
            argmax.push(idx);
            f.push(m.tanh());
        }
        let mut pipe_h = self.pipe1.apply(&f);
        pipe_h.iter_mut().for_each(|v| *v = v.tanh());
        let pipe_probs = softmax(&self.pipe2.apply(&pipe_h));
        let mut depth_h1 = self.depth1.apply(&f);
        depth_h1.iter_mut().for_each(|v| *v = v.tanh());
        let mut depth_h2 = self.depth2.apply(&depth_h1);
        depth_h2.iter_mut().for_each(|v| *v = v.tanh());
        let depth = self.depth3.apply(&depth_h2)[0];
        Ok(Cache {
            col1,
            a1,
            p1: (oh1, ow1),
            p2: (oh2, ow2),
            argmax,
            f,
            pipe_h,
            depth_h1,
            depth_h2,
            prediction: Prediction { pipe_probs, depth },
        })
    }

    /// Prediction for a raw input of `input_rows x input_cols` dB values.
    pub fn forward_values(&self, values: &[f64]) -> Result<Prediction> {
        Ok(self.forward_cached(values)?.prediction)
    }

    pub fn forward(&self, segment: &MelSegment) -> Result<Prediction> {
        self.forward_values(&segment.values)
    }

    /// Pooled encoder feature `f(ME)` shared by both heads.
    pub fn features(&self, values: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_cached(values)?.f)
    }

    /// Joint loss and its exact gradient with respect to every parameter.
    pub fn backward(&self, values: &[f64], targets: &Targets, weights: &LossWeights) -> Result<(f64, Self)> {
        let mut grad = self.zeros_like();
        let loss = self.accumulate_gradient(values, targets, weights, &mut grad)?;
        Ok((loss, grad))
    }

    /// Adds this sample's gradient into `grad` and returns its loss.
    pub fn accumulate_gradient(
        &self,
        values: &[f64],
        targets: &Targets,
        weights: &LossWeights,
        grad: &mut Self,
    ) -> Result<f64> {
        let cache = self.forward_cached(values)?;
        let pred = cache.prediction;
        let label = targets.pipe_label.min(1);
        let depth_loss = targets.depth.map(|y| loss_depth(pred.depth, y));
        let loss = loss_joint(depth_loss, loss_pipe(&pred.pipe_probs, label), weights.depth, weights.pipe);

        // Softmax + cross-entropy.
        let mut dlogits = pred.pipe_probs;
        dlogits[usize::from(label)] -= 1.0;
        dlogits.iter_mut().for_each(|v| *v *= weights.pipe);
        let ddepth = targets.depth.map_or(0.0, |y| weights.depth * 2.0 * (pred.depth - y));

        let dh = self.pipe2.backward(&cache.pipe_h, &dlogits, &mut grad.pipe2);
        let dh: Vec<f64> = dh.iter().zip(&cache.pipe_h).map(|(g, h)| g * (1.0 - h * h)).collect();
        let mut df = self.pipe1.backward(&cache.f, &dh, &mut grad.pipe1);

        let du2 = self.depth3.backward(&cache.depth_h2, &[ddepth], &mut grad.depth3);
        let du2: Vec<f64> = du2.iter().zip(&cache.depth_h2).map(|(g, h)| g * (1.0 - h * h)).collect();
        let du1 = self.depth2.backward(&cache.depth_h1, &du2, &mut grad.depth2);
        let du1: Vec<f64> = du1.iter().zip(&cache.depth_h1).map(|(g, h)| g * (1.0 - h * h)).collect();
        let df_depth = self.depth1.backward(&cache.f, &du1, &mut grad.depth1);
        df.iter_mut().zip(&df_depth).for_each(|(a, b)| *a += b);

        // Through the global max: only the winning position of each channel
        // receives gradient.
        let (oh1, ow1) = cache.p1;
        let (_, ow2) = cache.p2;
        let p1 = oh1 * ow1;
        let k2 = self.conv2.kernel;
        let c1 = self.conv2.in_channels;
        let patch2 = self.conv2.patch();
        let mut da1 = vec![0.0; c1 * p1];
        for (c, (&pos, &fc)) in cache.argmax.iter().zip(&cache.f).enumerate() {
            let dm = df[c] * (1.0 - fc * fc);
            if dm == 0.0 {
                continue;
            }
            grad.conv2.biases[c] += dm;
            let gw = &mut grad.conv2.weights[c * patch2..(c + 1) * patch2];
            let w = &self.conv2.weights[c * patch2..(c + 1) * patch2];
            let (y, x) = (pos / ow2, pos % ow2);
            for r in 0..patch2 {
                let ci = r / (k2 * k2);
                let dy = (r / k2) % k2;
                let dx = r % k2;
                let at = ci * p1 + (y + dy) * ow1 + x + dx;
                gw[r] += dm * cache.a1[at];
                da1[at] += dm * w[r];
            }
        }
        let dz1: Vec<f64> = da1.iter().zip(&cache.a1).map(|(g, a)| g * (1.0 - a * a)).collect();
        let patch1 = self.conv1.patch();
        let mut gw1 = vec![0.0; self.conv1.out_channels * patch1];
        // dW1 = dZ1 · col1ᵀ
        // SAFETY: dz1 is (c1 x p1), col1 is (patch1 x p1) read transposed via
        // its strides, gw1 is (c1 x patch1).
        unsafe {
            matrixmultiply::dgemm(
                self.conv1.out_channels,
                p1,
                patch1,
                1.0,
                dz1.as_ptr(),
                p1 as isize,
                1,
                cache.col1.as_ptr(),
                1,
                p1 as isize,
                0.0,
                gw1.as_mut_ptr(),
                patch1 as isize,
                1,
            );
        }
        grad.conv1.weights.iter_mut().zip(&gw1).for_each(|(g, v)| *g += v);
        for (c, row) in dz1.chunks_exact(p1).enumerate() {
            grad.conv1.biases[c] += row.iter().sum::<f64>();
        }
        Ok(loss)
    }
}
