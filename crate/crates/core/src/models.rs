//! Small models with hand-written backpropagation: multinomial logistic
//! regression, a ReLU multilayer perceptron and a one-convolution network.
//!
//! All parameters live in one flat vector described by [`ModelSpec::layout`].
//! Weight matrices are stored row-major as `[out, in]`; the convolution kernel
//! as `[filters, channels, kernel_h, kernel_w]`. Inputs are flat rows of
//! length [`ModelSpec::in_dim`] (`[channels, height, width]` for the conv net).

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::params::{GroupPartition, Layout, ParamVector};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    LogisticRegression {
        in_dim: usize,
        classes: usize,
    },
    /// `widths = [input, hidden..., classes]`, ReLU between layers.
    Mlp {
        widths: Vec<usize>,
    },
    /// Valid convolution (stride 1, no padding), ReLU, then one
    /// fully-connected layer to the classes.
    TinyConvNet {
        channels: usize,
        height: usize,
        width: usize,
        filters: usize,
        kernel_h: usize,
        kernel_w: usize,
        classes: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupScheme {
    /// One group per input neuron of a fully-connected layer.
    Column,
    /// One group per output neuron of a fully-connected layer.
    Row,
    /// Blocks of `block` consecutive input columns of a fully-connected layer.
    ColumnBlock,
    /// `W[:, j, :, :]` of a convolution.
    Channel,
    /// `W[i, :, :, :]` of a convolution.
    Filter,
    /// `W[i, j, :, :]` of a convolution.
    Kernel,
}

/// Grouping applied to one weight tensor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerGrouping {
    pub layer: String,
    pub scheme: GroupScheme,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub block: Option<usize>,
}

impl LayerGrouping {
    pub fn new(layer: impl Into<String>, scheme: GroupScheme) -> Self {
        Self { layer: layer.into(), scheme, block: None }
    }
}

/// Per-sample buffers reused across a batch.
#[derive(Default)]
struct Scratch {
    acts: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
    dz: Vec<f64>,
    da: Vec<f64>,
}

/// `(log-sum-exp, loss)` for logits `z` and label `y`; writes `softmax - onehot`
/// into `dz`.
fn softmax_cross_entropy(z: &[f64], y: usize, dz: &mut Vec<f64>) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = z.iter().map(|v| (v - max).exp()).sum();
    let lse = max + sum.ln();
    dz.clear();
    dz.extend(z.iter().map(|v| (v - lse).exp()));
    dz[y] -= 1.0;
    lse - z[y]
}

fn cross_entropy(z: &[f64], y: usize) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = z.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln() - z[y]
}

/// `out = W x + b` for `W` of shape `[out.len(), x.len()]`.
fn affine(w: &[f64], b: &[f64], x: &[f64], out: &mut Vec<f64>) {
    let n_in = x.len();
    out.clear();
    out.extend(b.iter().enumerate().map(|(k, bk)| {
        let row = &w[k * n_in..(k + 1) * n_in];
        bk + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
    }));
}

/// `gw += dz x^T`, `gb += dz`.
fn affine_backward(dz: &[f64], x: &[f64], gw: &mut [f64], gb: &mut [f64]) {
    let n_in = x.len();
    for (k, d) in dz.iter().enumerate() {
        if *d == 0.0 {
            continue;
        }
        for (g, xi) in gw[k * n_in..(k + 1) * n_in].iter_mut().zip(x) {
            *g += d * xi;
        }
        gb[k] += d;
    }
}

/// `da = W^T dz`.
fn affine_backward_input(w: &[f64], dz: &[f64], n_in: usize, da: &mut Vec<f64>) {
    da.clear();
    da.resize(n_in, 0.0);
    for (k, d) in dz.iter().enumerate() {
        for (a, wk) in da.iter_mut().zip(&w[k * n_in..(k + 1) * n_in]) {
            *a += d * wk;
        }
    }
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            ModelSpec::LogisticRegression { in_dim, classes } => *in_dim > 0 && *classes >= 2,
            ModelSpec::Mlp { widths } => {
                widths.len() >= 2 && widths.iter().all(|w| *w > 0) && *widths.last().unwrap() >= 2
            }
            ModelSpec::TinyConvNet { channels, height, width, filters, kernel_h, kernel_w, classes } => {
                *channels > 0
                    && *filters > 0
                    && *kernel_h > 0
                    && *kernel_w > 0
                    && kernel_h <= height
                    && kernel_w <= width
                    && *classes >= 2
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::structural(format!("invalid model spec {self:?}")))
        }
    }

    pub fn in_dim(&self) -> usize {
        match self {
            ModelSpec::LogisticRegression { in_dim, .. } => *in_dim,
            ModelSpec::Mlp { widths } => widths[0],
            ModelSpec::TinyConvNet { channels, height, width, .. } => channels * height * width,
        }
    }

    pub fn classes(&self) -> usize {
        match self {
            ModelSpec::LogisticRegression { classes, .. } | ModelSpec::TinyConvNet { classes, .. } => *classes,
            ModelSpec::Mlp { widths } => *widths.last().unwrap(),
        }
    }

    fn conv_out(&self) -> (usize, usize) {
        match self {
            ModelSpec::TinyConvNet { height, width, kernel_h, kernel_w, .. } => {
                (height - kernel_h + 1, width - kernel_w + 1)
            }
            _ => (0, 0),
        }
    }

    /// Named tensors with their fan-in (used for initialization).
    fn tensors(&self) -> Vec<(String, Vec<usize>, usize)> {
        match self {
            ModelSpec::LogisticRegression { in_dim, classes } => vec![
                ("fc.weight".into(), vec![*classes, *in_dim], *in_dim),
                ("fc.bias".into(), vec![*classes], *in_dim),
            ],
            ModelSpec::Mlp { widths } => widths
                .windows(2)
                .enumerate()
                .flat_map(|(l, w)| {
                    [
                        (format!("fc{l}.weight"), vec![w[1], w[0]], w[0]),
                        (format!("fc{l}.bias"), vec![w[1]], w[0]),
                    ]
                })
                .collect(),
            ModelSpec::TinyConvNet { channels, filters, kernel_h, kernel_w, classes, .. } => {
                let (oh, ow) = self.conv_out();
                let fan_conv = channels * kernel_h * kernel_w;
                let flat = filters * oh * ow;
                vec![
                    ("conv.weight".into(), vec![*filters, *channels, *kernel_h, *kernel_w], fan_conv),
                    ("conv.bias".into(), vec![*filters], fan_conv),
                    ("fc.weight".into(), vec![*classes, flat], flat),
                    ("fc.bias".into(), vec![*classes], flat),
                ]
            }
        }
    }

    pub fn layout(&self) -> Result<Layout> {
        self.validate()?;
        Layout::from_shapes(self.tensors().into_iter().map(|(n, s, _)| (n, s)))
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|(_, s, _)| s.iter().product::<usize>()).sum()
    }

    /// Names of the weight tensors (biases excluded).
    pub fn weight_layers(&self) -> Vec<String> {
        self.tensors().into_iter().map(|t| t.0).filter(|n| n.ends_with(".weight")).collect()
    }

    /// Uniform `[-a, a]` with `a = 1 / sqrt(fan_in)` per tensor.
    pub fn init(&self, seed: u64) -> Result<ParamVector> {
        let layout = Arc::new(self.layout()?);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut values = Vec::with_capacity(layout.dim());
        for (_, shape, fan_in) in self.tensors() {
            let a = 1.0 / (fan_in as f64).sqrt();
            let n: usize = shape.iter().product();
            values.extend((0..n).map(|_| rng.random_range(-a..=a)));
        }
        ParamVector::new(values, layout)
    }

    /// Training/evaluation grouping used when none is configured: columns of
    /// fully-connected layers and channels of the convolution.
    pub fn default_train_grouping(&self) -> Vec<LayerGrouping> {
        self.weight_layers()
            .into_iter()
            .map(|l| {
                let scheme = if l.starts_with("conv") { GroupScheme::Channel } else { GroupScheme::Column };
                LayerGrouping::new(l, scheme)
            })
            .collect()
    }

    /// Kernel-wise for the convolution, column-wise for dense layers.
    pub fn default_eval_grouping(&self) -> Vec<LayerGrouping> {
        self.weight_layers()
            .into_iter()
            .map(|l| {
                let scheme = if l.starts_with("conv") { GroupScheme::Kernel } else { GroupScheme::Column };
                LayerGrouping::new(l, scheme)
            })
            .collect()
    }

    /// Disjoint groups over the weight tensors with weights `sqrt(|I_g|)`.
    /// Biases are never grouped.
    pub fn build_groups(&self, groupings: &[LayerGrouping]) -> Result<GroupPartition> {
        let layout = self.layout()?;
        let mut groups: Vec<Vec<usize>> = Vec::new();
        for g in groupings {
            let slot = layout
                .slot(&g.layer)
                .filter(|s| s.name.ends_with(".weight"))
                .ok_or_else(|| Error::structural(format!("no weight tensor named `{}`", g.layer)))?;
            let base = slot.range.start;
            match (g.scheme, slot.shape.as_slice()) {
                (GroupScheme::Column, &[rows, cols]) => {
                    groups.extend((0..cols).map(|j| (0..rows).map(|i| base + i * cols + j).collect()));
                }
                (GroupScheme::Row, &[rows, cols]) => {
                    groups.extend((0..rows).map(|i| (0..cols).map(|j| base + i * cols + j).collect()));
                }
                (GroupScheme::ColumnBlock, &[rows, cols]) => {
                    let block = g.block.filter(|b| *b > 0).ok_or_else(|| {
                        Error::structural(format!("column_block grouping of `{}` needs a positive block", g.layer))
                    })?;
                    groups.extend((0..cols).step_by(block).map(|start| {
                        (start..(start + block).min(cols))
                            .flat_map(|j| (0..rows).map(move |i| base + i * cols + j))
                            .collect()
                    }));
                }
                (GroupScheme::Channel, &[f, c, kh, kw]) => {
                    let k = kh * kw;
                    groups.extend((0..c).map(|j| {
                        (0..f).flat_map(|i| (0..k).map(move |p| base + (i * c + j) * k + p)).collect()
                    }));
                }
                (GroupScheme::Filter, &[f, c, kh, kw]) => {
                    let n = c * kh * kw;
                    groups.extend((0..f).map(|i| (base + i * n..base + (i + 1) * n).collect()));
                }
                (GroupScheme::Kernel, &[f, c, kh, kw]) => {
                    let k = kh * kw;
                    groups.extend((0..f * c).map(|ij| (base + ij * k..base + (ij + 1) * k).collect()));
                }
                (scheme, shape) => {
                    return Err(Error::structural(format!(
                        "{scheme:?} grouping does not apply to `{}` with shape {shape:?}",
                        g.layer
                    )))
                }
            }
        }
        GroupPartition::with_size_weights(layout.dim(), groups)
    }

    fn check_batch(&self, w: &[f64], inputs: &[f64], labels: &[usize]) -> Result<()> {
        if w.len() != self.param_count() {
            return Err(Error::structural(format!(
                "{} parameters for a model with {}",
                w.len(),
                self.param_count()
            )));
        }
        if labels.is_empty() {
            return Err(Error::structural("empty batch"));
        }
        if inputs.len() != labels.len() * self.in_dim() {
            return Err(Error::structural(format!(
                "{} input values for {} samples of dimension {}",
                inputs.len(),
                labels.len(),
                self.in_dim()
            )));
        }
        if let Some(y) = labels.iter().find(|y| **y >= self.classes()) {
            return Err(Error::structural(format!("label {y} out of range for {} classes", self.classes())));
        }
        Ok(())
    }

    /// Forward pass for one sample; the logits end up in `s.acts.last()`.
    fn forward(&self, w: &[f64], x: &[f64], s: &mut Scratch) {
        match self {
            ModelSpec::LogisticRegression { in_dim, classes } => {
                s.acts.resize_with(1, Vec::new);
                let (wm, b) = w.split_at(in_dim * classes);
                affine(wm, b, x, &mut s.acts[0]);
            }
            ModelSpec::Mlp { widths } => {
                let layers = widths.len() - 1;
                s.acts.resize_with(layers, Vec::new);
                s.pre.resize_with(layers, Vec::new);
                let mut off = 0;
                for l in 0..layers {
                    let (n_in, n_out) = (widths[l], widths[l + 1]);
                    let wm = &w[off..off + n_in * n_out];
                    let b = &w[off + n_in * n_out..off + n_in * n_out + n_out];
                    off += n_in * n_out + n_out;
                    let (before, after) = s.acts.split_at_mut(l);
                    let input = if l == 0 { x } else { &before[l - 1] };
                    affine(wm, b, input, &mut s.pre[l]);
                    let out = &mut after[0];
                    out.clear();
                    if l + 1 == layers {
                        out.extend_from_slice(&s.pre[l]);
                    } else {
                        out.extend(s.pre[l].iter().map(|v| v.max(0.0)));
                    }
                }
            }
            ModelSpec::TinyConvNet { channels, height, width, filters, kernel_h, kernel_w, classes } => {
                let (oh, ow) = self.conv_out();
                let (c, h, wd, f, kh, kw) = (*channels, *height, *width, *filters, *kernel_h, *kernel_w);
                let conv_w = &w[..f * c * kh * kw];
                let conv_b = &w[f * c * kh * kw..f * c * kh * kw + f];
                let fc = &w[f * c * kh * kw + f..];
                let flat = f * oh * ow;
                s.pre.resize_with(1, Vec::new);
                s.acts.resize_with(2, Vec::new);
                let pre = &mut s.pre[0];
                pre.clear();
                pre.resize(flat, 0.0);
                for fi in 0..f {
                    for i in 0..oh {
                        for j in 0..ow {
                            let mut acc = conv_b[fi];
                            for ci in 0..c {
                                for p in 0..kh {
                                    let krow = &conv_w[((fi * c + ci) * kh + p) * kw..][..kw];
                                    let xrow = &x[(ci * h + i + p) * wd + j..][..kw];
                                    acc += krow.iter().zip(xrow).map(|(a, b)| a * b).sum::<f64>();
                                }
                            }
                            pre[(fi * oh + i) * ow + j] = acc;
                        }
                    }
                }
                s.acts[0].clear();
                s.acts[0].extend(pre.iter().map(|v| v.max(0.0)));
                let (fc_w, fc_b) = fc.split_at(classes * flat);
                let (hidden, logits) = s.acts.split_at_mut(1);
                affine(fc_w, fc_b, &hidden[0], &mut logits[0]);
            }
        }
    }

    /// Backward pass for one sample given `s.dz = dL/dlogits`.
    fn backward(&self, w: &[f64], x: &[f64], s: &mut Scratch, grad: &mut [f64]) {
        match self {
            ModelSpec::LogisticRegression { in_dim, classes } => {
                let (gw, gb) = grad.split_at_mut(in_dim * classes);
                affine_backward(&s.dz, x, gw, gb);
            }
            ModelSpec::Mlp { widths } => {
                let layers = widths.len() - 1;
                let mut offsets = Vec::with_capacity(layers);
                let mut off = 0;
                for l in 0..layers {
                    offsets.push(off);
                    off += widths[l] * widths[l + 1] + widths[l + 1];
                }
                for l in (0..layers).rev() {
                    let (n_in, n_out) = (widths[l], widths[l + 1]);
                    let o = offsets[l];
                    let input = if l == 0 { x } else { &s.acts[l - 1] };
                    let (gw, gb) = grad[o..o + n_in * n_out + n_out].split_at_mut(n_in * n_out);
                    affine_backward(&s.dz, input, gw, gb);
                    if l > 0 {
                        affine_backward_input(&w[o..o + n_in * n_out], &s.dz, n_in, &mut s.da);
                        s.dz.clear();
                        s.dz.extend(s.da.iter().zip(&s.pre[l - 1]).map(|(d, p)| if *p > 0.0 { *d } else { 0.0 }));
                    }
                }
            }
            ModelSpec::TinyConvNet { channels, height, width, filters, kernel_h, kernel_w, classes } => {
                let (oh, ow) = self.conv_out();
                let (c, h, wd, f, kh, kw) = (*channels, *height, *width, *filters, *kernel_h, *kernel_w);
                let nk = f * c * kh * kw;
                let flat = f * oh * ow;
                let fc_w = &w[nk + f..nk + f + classes * flat];
                let (g_conv, g_rest) = grad.split_at_mut(nk);
                let (g_conv_b, g_fc) = g_rest.split_at_mut(f);
                let (g_fc_w, g_fc_b) = g_fc.split_at_mut(classes * flat);
                affine_backward(&s.dz, &s.acts[0], g_fc_w, g_fc_b);
                affine_backward_input(fc_w, &s.dz, flat, &mut s.da);
                for (d, p) in s.da.iter_mut().zip(&s.pre[0]) {
                    if *p <= 0.0 {
                        *d = 0.0;
                    }
                }
                for fi in 0..f {
                    for i in 0..oh {
                        for j in 0..ow {
                            let d = s.da[(fi * oh + i) * ow + j];
                            if d == 0.0 {
                                continue;
                            }
                            g_conv_b[fi] += d;
                            for ci in 0..c {
                                for p in 0..kh {
                                    let grow = &mut g_conv[((fi * c + ci) * kh + p) * kw..][..kw];
                                    let xrow = &x[(ci * h + i + p) * wd + j..][..kw];
                                    for (g, xv) in grow.iter_mut().zip(xrow) {
                                        *g += d * xv;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    /// Mean cross-entropy over the batch and its exact gradient.
    pub fn loss_and_grad(&self, w: &[f64], inputs: &[f64], labels: &[usize]) -> Result<(f64, Vec<f64>)> {
        self.check_batch(w, inputs, labels)?;
        let d = self.in_dim();
        let mut grad = vec![0.0; w.len()];
        let mut s = Scratch::default();
        let mut loss = 0.0;
        for (x, &y) in inputs.chunks_exact(d).zip(labels) {
            self.forward(w, x, &mut s);
            loss += softmax_cross_entropy(s.acts.last().unwrap(), y, &mut s.dz);
            self.backward(w, x, &mut s, &mut grad);
        }
        let n = labels.len() as f64;
        grad.iter_mut().for_each(|g| *g /= n);
        Ok((loss / n, grad))
    }

    /// Mean cross-entropy without the gradient.
    pub fn loss(&self, w: &[f64], inputs: &[f64], labels: &[usize]) -> Result<f64> {
        self.check_batch(w, inputs, labels)?;
        let d = self.in_dim();
        let mut s = Scratch::default();
        let total: f64 = inputs
            .chunks_exact(d)
            .zip(labels)
            .map(|(x, &y)| {
                self.forward(w, x, &mut s);
                cross_entropy(s.acts.last().unwrap(), y)
            })
            .sum();
        Ok(total / labels.len() as f64)
    }

    /// Logits of one sample.
    pub fn logits(&self, w: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        if w.len() != self.param_count() || x.len() != self.in_dim() {
            return Err(Error::structural("parameter or input size mismatch"));
        }
        let mut s = Scratch::default();
        self.forward(w, x, &mut s);
        Ok(s.acts.pop().unwrap())
    }

    /// Predicted class per sample; ties go to the lowest class index.
    pub fn predict(&self, w: &[f64], inputs: &[f64]) -> Result<Vec<usize>> {
        if w.len() != self.param_count() || !inputs.len().is_multiple_of(self.in_dim()) {
            return Err(Error::structural("parameter or input size mismatch"));
        }
        let mut s = Scratch::default();
        Ok(inputs
            .chunks_exact(self.in_dim())
            .map(|x| {
                self.forward(w, x, &mut s);
                argmax(s.acts.last().unwrap())
            })
            .collect())
    }

    /// Exact mean gradient over a whole dataset (no augmentation).
    pub fn full_gradient(&self, w: &[f64], data: &Dataset) -> Result<Vec<f64>> {
        Ok(self.loss_and_grad(w, data.inputs(), data.labels())?.1)
    }
}

/// Index of the first maximal entry.
pub fn argmax(z: &[f64]) -> usize {
    let mut best = 0;
    for (k, v) in z.iter().enumerate() {
        if *v > z[best] {
            best = k;
        }
    }
    best
}
