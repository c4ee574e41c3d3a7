//! Inference for the multi-task beam-parameter network.
//!
//! The input pattern is split into real and imaginary channels and passed
//! through a shared backbone of `conv → batch norm → ReLU → max pool`
//! stages. Each task owns a stream of attention modules that gate the
//! backbone features with sigmoid masks, followed by a fully-connected head
//! and a softmax. Networks without attention (single-parameter baselines)
//! feed the last backbone stage straight into their head.

pub mod weights;

use num_complex::Complex64;

pub use weights::{Descriptor, NetworkWeights, Tensor, TensorSpec};

use crate::error::WeightsError;
use crate::{Error, Result};

/// Channel-major feature map `[channels][length]`.
#[derive(Debug, Clone, PartialEq)]
struct Features {
    channels: usize,
    length: usize,
    data: Vec<f64>,
}

impl Features {
    fn zeros(channels: usize, length: usize) -> Self {
        Self { channels, length, data: vec![0.0; channels * length] }
    }

    fn row(&self, c: usize) -> &[f64] {
        &self.data[c * self.length..(c + 1) * self.length]
    }

    fn concat(&self, other: &Features) -> Features {
        debug_assert_eq!(self.length, other.length);
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Features { channels: self.channels + other.channels, length: self.length, data }
    }
}

/// Per-task class probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskProbabilities {
    pub tasks: Vec<Vec<f64>>,
}

impl TaskProbabilities {
    pub fn argmax(&self) -> Vec<usize> {
        self.tasks.iter().map(|p| topk(p, 1).map(|v| v[0]).unwrap_or(0)).collect()
    }
}

/// Indices of the `k` largest values, largest first; equal values keep
/// index order.
pub fn topk(values: &[f64], k: usize) -> Result<Vec<usize>> {
    if k > values.len() {
        return Err(Error::Parameter(format!("top-{k} requested from {} values", values.len())));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("non-finite probability".into()));
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    order.truncate(k);
    Ok(order)
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / sum).collect()
}

/// A validated network ready for inference.
#[derive(Debug, Clone)]
pub struct Network {
    weights: NetworkWeights,
}

impl Network {
    pub fn new(weights: NetworkWeights) -> Result<Self> {
        weights.validate()?;
        Ok(Self { weights })
    }

    pub fn descriptor(&self) -> &Descriptor {
        &self.weights.descriptor
    }

    pub fn weights(&self) -> &NetworkWeights {
        &self.weights
    }

    /// Checks that the heads match a codebook of dimensions `dims` and an
    /// input pattern of length `input_length`.
    pub fn check_architecture(&self, input_length: usize, dims: &[usize]) -> Result<()> {
        let d = self.descriptor();
        if d.input_length != input_length || d.class_counts != dims {
            return Err(WeightsError::Mismatch(format!(
                "network expects input {} and classes {:?}, search needs input {} and classes {:?}",
                d.input_length, d.class_counts, input_length, dims
            ))
            .into());
        }
        Ok(())
    }

    fn conv(&self, x: &Features, prefix: &str, kernel: usize) -> Features {
        let w = self.weights.data(&format!("{prefix}.weight"));
        let b = self.weights.data(&format!("{prefix}.bias"));
        let cout = b.len();
        let pad = kernel / 2;
        let len = x.length;
        let mut out = Features::zeros(cout, len);
        for o in 0..cout {
            let dst = &mut out.data[o * len..(o + 1) * len];
            dst.fill(b[o] as f64);
            for i in 0..x.channels {
                let src = x.row(i);
                let taps = &w[(o * x.channels + i) * kernel..(o * x.channels + i + 1) * kernel];
                for (t, &wt) in taps.iter().enumerate() {
                    let wt = wt as f64;
                    if wt == 0.0 {
                        continue;
                    }
                    // output p reads input p + t − pad
                    let lo = pad.saturating_sub(t);
                    let hi = (len + pad).saturating_sub(t).min(len);
                    for p in lo..hi {
                        dst[p] += wt * src[p + t - pad];
                    }
                }
            }
        }
        out
    }

    fn batch_norm(&self, x: &mut Features, prefix: &str) {
        let eps = self.descriptor().bn_eps;
        let get = |f: &str| self.weights.data(&format!("{prefix}.{f}"));
        let (gamma, beta, mean, var) = (get("gamma"), get("beta"), get("mean"), get("var"));
        for c in 0..x.channels {
            let scale = gamma[c] as f64 / (var[c] as f64 + eps).sqrt();
            let shift = beta[c] as f64 - mean[c] as f64 * scale;
            for v in &mut x.data[c * x.length..(c + 1) * x.length] {
                *v = *v * scale + shift;
            }
        }
    }

    fn max_pool(&self, x: &Features) -> Features {
        let k = self.descriptor().pool;
        let len = x.length / k;
        let mut out = Features::zeros(x.channels, len);
        for c in 0..x.channels {
            let src = x.row(c);
            for p in 0..len {
                out.data[c * len + p] = src[p * k..(p + 1) * k].iter().copied().fold(f64::NEG_INFINITY, f64::max);
            }
        }
        out
    }

    fn backbone(&self, input: Features) -> Vec<Features> {
        let k = self.descriptor().kernel_size;
        let mut stages = Vec::new();
        let mut x = input;
        for j in 0..self.descriptor().backbone_channels.len() {
            let mut y = self.conv(&x, &format!("backbone.{j}.conv"), k);
            self.batch_norm(&mut y, &format!("backbone.{j}.bn"));
            y.data.iter_mut().for_each(|v| *v = v.max(0.0));
            x = self.max_pool(&y);
            stages.push(x.clone());
        }
        stages
    }

    /// Gated features of task `i` after the last attention module.
    fn attention_stream(&self, i: usize, stages: &[Features]) -> Features {
        let mut gated: Option<Features> = None;
        for (j, f) in stages.iter().enumerate() {
            let input = match &gated {
                None => f.clone(),
                Some(prev) => f.concat(&self.max_pool(prev)),
            };
            let p = format!("tasks.{i}.attn.{j}");
            let mut h = self.conv(&input, &format!("{p}.conv1"), 1);
            self.batch_norm(&mut h, &format!("{p}.bn1"));
            h.data.iter_mut().for_each(|v| *v = v.max(0.0));
            let mut m = self.conv(&h, &format!("{p}.conv2"), 1);
            self.batch_norm(&mut m, &format!("{p}.bn2"));
            let mut out = f.clone();
            for (o, mv) in out.data.iter_mut().zip(&m.data) {
                *o *= 1.0 / (1.0 + (-mv).exp());
            }
            gated = Some(out);
        }
        gated.expect("backbone has at least one stage")
    }

    fn head(&self, i: usize, x: &Features) -> Vec<f64> {
        let w = self.weights.data(&format!("heads.{i}.fc.weight"));
        let b = self.weights.data(&format!("heads.{i}.fc.bias"));
        let n = x.data.len();
        b.iter()
            .enumerate()
            .map(|(c, &bias)| {
                let row = &w[c * n..(c + 1) * n];
                bias as f64 + row.iter().zip(&x.data).map(|(&a, &v)| a as f64 * v).sum::<f64>()
            })
            .collect()
    }

    /// Raw head outputs per task.
    pub fn logits(&self, pattern: &[Complex64]) -> Result<Vec<Vec<f64>>> {
        let d = self.descriptor();
        if pattern.len() != d.input_length {
            return Err(Error::Input(format!("pattern length {} but network expects {}", pattern.len(), d.input_length)));
        }
        if pattern.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::Input("pattern contains non-finite values".into()));
        }
        let mut input = Features::zeros(2, pattern.len());
        for (p, v) in pattern.iter().enumerate() {
            input.data[p] = v.re;
            input.data[pattern.len() + p] = v.im;
        }
        let stages = self.backbone(input);
        Ok((0..d.tasks())
            .map(|i| {
                let features = if d.attention_mid_ratio.is_some() {
                    self.attention_stream(i, &stages)
                } else {
                    stages.last().unwrap().clone()
                };
                self.head(i, &features)
            })
            .collect())
    }

    pub fn forward(&self, pattern: &[Complex64]) -> Result<TaskProbabilities> {
        Ok(TaskProbabilities { tasks: self.logits(pattern)?.iter().map(|l| softmax(l)).collect() })
    }
}
