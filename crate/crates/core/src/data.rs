//! Datasets: synthetic structured-sparse tasks, IDX (MNIST-format) files, and
//! seeded minibatch sampling with optional per-draw Gaussian augmentation.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::ModelSpec;
use crate::params::{GroupPartition, ParamVector};
use crate::regularizers::zero_pattern;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Model that generated a synthetic dataset, with its group zero pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub params: ParamVector,
    pub partition: GroupPartition,
    pub pattern: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    inputs: Vec<f64>,
    in_dim: usize,
    labels: Vec<usize>,
    classes: usize,
    image_shape: Option<(usize, usize)>,
    ground_truth: Option<GroundTruth>,
}

impl Dataset {
    pub fn new(inputs: Vec<f64>, in_dim: usize, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if labels.is_empty() || in_dim == 0 {
            return Err(Error::Data("dataset must have at least one sample and one feature".into()));
        }
        if inputs.len() != labels.len() * in_dim {
            return Err(Error::Data(format!(
                "{} input values for {} samples of dimension {in_dim}",
                inputs.len(),
                labels.len()
            )));
        }
        if let Some(y) = labels.iter().find(|y| **y >= classes) {
            return Err(Error::Data(format!("label {y} outside [0, {classes})")));
        }
        if let Some(i) = inputs.iter().position(|x| !x.is_finite()) {
            return Err(Error::Data(format!("non-finite input value at flat index {i}")));
        }
        Ok(Self { inputs, in_dim, labels, classes, image_shape: None, ground_truth: None })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn inputs(&self) -> &[f64] {
        &self.inputs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn sample(&self, i: usize) -> (&[f64], usize) {
        (&self.inputs[i * self.in_dim..(i + 1) * self.in_dim], self.labels[i])
    }

    pub fn ground_truth(&self) -> Option<&GroundTruth> {
        self.ground_truth.as_ref()
    }

    pub fn image_shape(&self) -> Option<(usize, usize)> {
        self.image_shape
    }

    /// Subset in the given order; keeps the ground truth.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let mut inputs = Vec::with_capacity(indices.len() * self.in_dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            let (x, y) = self.sample(i);
            inputs.extend_from_slice(x);
            labels.push(y);
        }
        let mut out = Self::new(inputs, self.in_dim, labels, self.classes)?;
        out.image_shape = self.image_shape;
        out.ground_truth = self.ground_truth.clone();
        Ok(out)
    }

    /// Splits off the last `n` samples.
    pub fn split_tail(&self, n: usize) -> Result<(Self, Self)> {
        if n == 0 || n >= self.len() {
            return Err(Error::Data(format!("cannot split {n} samples off a dataset of {}", self.len())));
        }
        let cut = self.len() - n;
        let head: Vec<usize> = (0..cut).collect();
        let tail: Vec<usize> = (cut..self.len()).collect();
        Ok((self.select(&head)?, self.select(&tail)?))
    }
}

/// Parameters of [`gen_synthetic`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticParams {
    pub n: usize,
    pub zero_fraction: f64,
    #[serde(default = "default_margin")]
    pub margin: f64,
    /// Standard deviation of the ground-truth weights is `weight_scale / sqrt(fan_in)`.
    #[serde(default = "default_weight_scale")]
    pub weight_scale: f64,
    pub seed: u64,
}

fn default_margin() -> f64 {
    0.5
}

fn default_weight_scale() -> f64 {
    4.0
}

/// Draws a structured-sparse ground truth for `spec` and `n` standard-normal
/// inputs whose top-two logit gap under it is at least `margin`; labels are
/// the ground truth's argmax.
///
/// Exactly `ceil(zero_fraction * |G|)` groups of `partition` are zero in the
/// ground truth. Biases of the ground truth are zero.
pub fn gen_synthetic(spec: &ModelSpec, partition: &GroupPartition, params: &SyntheticParams) -> Result<Dataset> {
    if !(0.0..1.0).contains(&params.zero_fraction) {
        return Err(Error::Data(format!("zero_fraction {} outside [0, 1)", params.zero_fraction)));
    }
    if params.n == 0 || params.margin.is_nan() || params.margin < 0.0 {
        return Err(Error::Data("synthetic data needs n >= 1 and a non-negative margin".into()));
    }
    let layout = std::sync::Arc::new(spec.layout()?);
    partition.check_dim(layout.dim())?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);

    let mut truth = vec![0.0; layout.dim()];
    for slot in layout.slots().iter().filter(|s| s.name.ends_with(".weight")) {
        let fan_in: usize = slot.shape[1..].iter().product();
        let sd = params.weight_scale / (fan_in as f64).sqrt();
        for v in &mut truth[slot.range.clone()] {
            *v = sd * rng.sample::<f64, _>(StandardNormal);
        }
    }
    let n_zero = (params.zero_fraction * partition.len() as f64).ceil() as usize;
    let mut order: Vec<usize> = (0..partition.len()).collect();
    order.shuffle(&mut rng);
    for &g in &order[..n_zero] {
        for &i in &partition.groups()[g] {
            truth[i] = 0.0;
        }
    }
    let truth = ParamVector::new(truth, layout)?;
    let pattern = zero_pattern(truth.values(), partition)?;

    let d = spec.in_dim();
    let mut inputs = Vec::with_capacity(params.n * d);
    let mut labels = Vec::with_capacity(params.n);
    let mut x = vec![0.0; d];
    let mut attempts = 0usize;
    while labels.len() < params.n {
        attempts += 1;
        if attempts >= 10_000 && (labels.len() as f64) < 1e-3 * attempts as f64 {
            return Err(Error::Data(format!(
                "margin {} too large: {} of {attempts} draws accepted",
                params.margin,
                labels.len()
            )));
        }
        x.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
        let z = spec.logits(truth.values(), &x)?;
        let (best, gap) = top_two_gap(&z);
        if gap >= params.margin {
            inputs.extend_from_slice(&x);
            labels.push(best);
        }
    }
    let mut data = Dataset::new(inputs, d, labels, spec.classes())?;
    data.ground_truth = Some(GroundTruth { params: truth, partition: partition.clone(), pattern });
    Ok(data)
}

/// `(argmax, z[argmax] - second largest)`.
fn top_two_gap(z: &[f64]) -> (usize, f64) {
    let best = crate::models::argmax(z);
    let second = z.iter().enumerate().filter(|(k, _)| *k != best).map(|(_, v)| *v).fold(f64::NEG_INFINITY, f64::max);
    (best, z[best] - second)
}

/// Raw contents of an IDX image file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

fn read_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or(Error::Format { offset: bytes.len(), msg: format!("file truncated inside header field at byte {offset}") })
}

fn check_magic(bytes: &[u8], want: u32) -> Result<()> {
    let magic = read_u32(bytes, 0)?;
    if magic != want {
        return Err(Error::Format { offset: 0, msg: format!("magic {magic:#010x}, expected {want:#010x}") });
    }
    Ok(())
}

fn check_body(bytes: &[u8], header: usize, body: usize) -> Result<()> {
    let want = header + body;
    match bytes.len().cmp(&want) {
        std::cmp::Ordering::Less => Err(Error::Format {
            offset: bytes.len(),
            msg: format!("file truncated: expected {want} bytes, found {}", bytes.len()),
        }),
        std::cmp::Ordering::Greater => Err(Error::Format {
            offset: want,
            msg: format!("{} trailing bytes after the data", bytes.len() - want),
        }),
        std::cmp::Ordering::Equal => Ok(()),
    }
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<IdxImages> {
    check_magic(bytes, IDX_IMAGES_MAGIC)?;
    let count = read_u32(bytes, 4)? as usize;
    let rows = read_u32(bytes, 8)? as usize;
    let cols = read_u32(bytes, 12)? as usize;
    check_body(bytes, 16, count * rows * cols)?;
    Ok(IdxImages { count, rows, cols, pixels: bytes[16..].to_vec() })
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    check_magic(bytes, IDX_LABELS_MAGIC)?;
    let count = read_u32(bytes, 4)? as usize;
    check_body(bytes, 8, count)?;
    Ok(bytes[8..].to_vec())
}

pub fn write_idx_images(images: &IdxImages) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.pixels.len());
    for v in [IDX_IMAGES_MAGIC, images.count as u32, images.rows as u32, images.cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(&images.pixels);
    out
}

pub fn write_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Builds a dataset from IDX image and label bytes; pixels are scaled by 1/255.
pub fn dataset_from_idx(image_bytes: &[u8], label_bytes: &[u8]) -> Result<Dataset> {
    let images = parse_idx_images(image_bytes)?;
    let labels = parse_idx_labels(label_bytes)?;
    if labels.len() != images.count {
        return Err(Error::Format {
            offset: 4,
            msg: format!("label count {} does not match image count {}", labels.len(), images.count),
        });
    }
    let inputs = images.pixels.iter().map(|&p| f64::from(p) / 255.0).collect();
    let labels: Vec<usize> = labels.into_iter().map(usize::from).collect();
    let classes = labels.iter().max().map_or(0, |m| m + 1).max(10);
    let mut data = Dataset::new(inputs, images.rows * images.cols, labels, classes)?;
    data.image_shape = Some((images.rows, images.cols));
    Ok(data)
}

pub fn load_mnist_idx(image_path: impl AsRef<Path>, label_path: impl AsRef<Path>) -> Result<Dataset> {
    let images = std::fs::read(image_path.as_ref())
        .map_err(|e| Error::Data(format!("{}: {e}", image_path.as_ref().display())))?;
    let labels = std::fs::read(label_path.as_ref())
        .map_err(|e| Error::Data(format!("{}: {e}", label_path.as_ref().display())))?;
    dataset_from_idx(&images, &labels)
}

/// Inverse of [`dataset_from_idx`] for image datasets with inputs on the
/// `k / 255` grid.
pub fn dataset_to_idx(data: &Dataset) -> Result<(Vec<u8>, Vec<u8>)> {
    let (rows, cols) = data.image_shape.ok_or_else(|| Error::Data("dataset has no image shape".into()))?;
    let pixels = data
        .inputs
        .iter()
        .map(|&x| {
            let p = (x * 255.0).round();
            if (0.0..=255.0).contains(&p) {
                Ok(p as u8)
            } else {
                Err(Error::Data(format!("input {x} is not a pixel intensity")))
            }
        })
        .collect::<Result<Vec<u8>>>()?;
    let labels = data
        .labels
        .iter()
        .map(|&y| u8::try_from(y).map_err(|_| Error::Data(format!("label {y} does not fit a byte"))))
        .collect::<Result<Vec<u8>>>()?;
    let images = IdxImages { count: data.len(), rows, cols, pixels };
    Ok((write_idx_images(&images), write_idx_labels(&labels)))
}

/// Per-draw input perturbation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AugmentationPolicy {
    #[default]
    None,
    /// Adds fresh `N(0, sigma^2)` noise to every input coordinate on every draw.
    Gaussian { sigma: f64 },
}

impl AugmentationPolicy {
    pub fn validate(&self) -> Result<()> {
        match self {
            AugmentationPolicy::Gaussian { sigma } if !(sigma.is_finite() && *sigma >= 0.0) => {
                Err(Error::Config(format!("augmentation sigma must be non-negative, got {sigma}")))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub indices: Vec<usize>,
    pub inputs: Vec<f64>,
    pub labels: Vec<usize>,
}

/// Seeded epoch-wise shuffling sampler. Every call to [`Sampler::epoch`]
/// draws a fresh permutation and yields consecutive batches of it (the last
/// one may be short).
pub struct Sampler<'a> {
    data: &'a Dataset,
    batch_size: usize,
    policy: AugmentationPolicy,
    shuffle_rng: ChaCha8Rng,
    noise_rng: ChaCha8Rng,
    order: Vec<usize>,
}

impl<'a> Sampler<'a> {
    pub fn new(data: &'a Dataset, batch_size: usize, policy: AugmentationPolicy, seed: u64) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        policy.validate()?;
        let shuffle_rng = ChaCha8Rng::seed_from_u64(seed);
        let mut noise_rng = ChaCha8Rng::seed_from_u64(seed);
        noise_rng.set_stream(1);
        Ok(Self { data, batch_size, policy, shuffle_rng, noise_rng, order: (0..data.len()).collect() })
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.data.len().div_ceil(self.batch_size)
    }

    pub fn epoch(&mut self) -> EpochBatches<'_, 'a> {
        self.order.shuffle(&mut self.shuffle_rng);
        EpochBatches { sampler: self, pos: 0 }
    }
}

pub struct EpochBatches<'s, 'a> {
    sampler: &'s mut Sampler<'a>,
    pos: usize,
}

impl Iterator for EpochBatches<'_, '_> {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        let s = &mut *self.sampler;
        if self.pos >= s.order.len() {
            return None;
        }
        let end = (self.pos + s.batch_size).min(s.order.len());
        let indices = s.order[self.pos..end].to_vec();
        self.pos = end;
        let mut inputs = Vec::with_capacity(indices.len() * s.data.in_dim());
        let mut labels = Vec::with_capacity(indices.len());
        for &i in &indices {
            let (x, y) = s.data.sample(i);
            match s.policy {
                AugmentationPolicy::None => inputs.extend_from_slice(x),
                AugmentationPolicy::Gaussian { sigma } => {
                    inputs.extend(x.iter().map(|v| v + sigma * s.noise_rng.sample::<f64, _>(StandardNormal)))
                }
            }
            labels.push(y);
        }
        Some(Batch { indices, inputs, labels })
    }
}
