//! `AMPW0001` weights container.
//!
//! Layout, little-endian throughout:
//!
//! ```text
//! magic        8 bytes  "AMPW0001"
//! version      u32      1
//! desc_len     u32
//! descriptor   desc_len bytes of UTF-8 JSON
//! count        u32      number of tensors
//! count × { name_len u32, name bytes, dtype u8 (0 = f32), rank u32,
//!           dims u32 × rank, offset u64 }
//! data         raw f32 values; offsets are relative to the start of data
//! ```
//!
//! Tensor names (zero-based):
//! `backbone.{j}.conv.{weight|bias}`, `backbone.{j}.bn.{gamma|beta|mean|var}`,
//! `tasks.{i}.attn.{j}.conv{1|2}.{weight|bias}`,
//! `tasks.{i}.attn.{j}.bn{1|2}.{gamma|beta|mean|var}`,
//! `heads.{i}.fc.{weight|bias}`.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::WeightsError;
use crate::Result;

pub const MAGIC: &[u8; 8] = b"AMPW0001";
pub const VERSION: u32 = 1;
const DTYPE_F32: u8 = 0;

/// Architecture description stored alongside the tensors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Descriptor {
    pub input_length: usize,
    pub input_channels: usize,
    pub backbone_channels: Vec<usize>,
    pub kernel_size: usize,
    pub pool: usize,
    /// Attention mid channels are `out / ratio`; `None` disables attention
    /// (single-parameter networks).
    pub attention_mid_ratio: Option<usize>,
    pub class_counts: Vec<usize>,
    #[serde(default = "default_eps")]
    pub bn_eps: f64,
}

fn default_eps() -> f64 {
    1e-5
}

/// Name and shape of one expected tensor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorSpec {
    pub name: String,
    pub dims: Vec<usize>,
}

impl TensorSpec {
    fn new(name: String, dims: Vec<usize>) -> Self {
        Self { name, dims }
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

const BN_FIELDS: [&str; 4] = ["gamma", "beta", "mean", "var"];

impl Descriptor {
    /// Multi-task network with attention streams, channel ladder
    /// (64, 128, 256), kernel 3, pool 2 and mid ratio 4.
    pub fn ampbt(input_length: usize, class_counts: Vec<usize>) -> Self {
        Self {
            input_length,
            input_channels: 2,
            backbone_channels: vec![64, 128, 256],
            kernel_size: 3,
            pool: 2,
            attention_mid_ratio: Some(4),
            class_counts,
            bn_eps: default_eps(),
        }
    }

    /// Single-task network: same backbone, no attention, one head.
    pub fn spbt(input_length: usize, classes: usize) -> Self {
        Self { attention_mid_ratio: None, class_counts: vec![classes], ..Self::ampbt(input_length, Vec::new()) }
    }

    pub fn tasks(&self) -> usize {
        self.class_counts.len()
    }

    /// Sequence length after each backbone stage (index 0 is the input).
    pub fn stage_lengths(&self) -> Vec<usize> {
        let mut lengths = vec![self.input_length];
        for _ in &self.backbone_channels {
            lengths.push(lengths.last().unwrap() / self.pool);
        }
        lengths
    }

    pub fn head_features(&self) -> usize {
        self.backbone_channels.last().copied().unwrap_or(0) * self.stage_lengths().last().copied().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<(), WeightsError> {
        let bad = |m: String| Err(WeightsError::Descriptor(m));
        if self.input_channels != 2 {
            return bad(format!("input channels must be 2 (re, im), got {}", self.input_channels));
        }
        if self.backbone_channels.is_empty() || self.backbone_channels.contains(&0) {
            return bad("backbone channels must be nonempty and positive".into());
        }
        if self.kernel_size == 0 || self.kernel_size.is_multiple_of(2) {
            return bad(format!("kernel size must be odd, got {}", self.kernel_size));
        }
        if self.pool == 0 {
            return bad("pool size must be positive".into());
        }
        if *self.stage_lengths().last().unwrap() == 0 {
            return bad(format!("input length {} too short for the backbone", self.input_length));
        }
        if self.class_counts.is_empty() || self.class_counts.contains(&0) {
            return bad("class counts must be nonempty and positive".into());
        }
        if let Some(ratio) = self.attention_mid_ratio {
            if ratio == 0 || self.backbone_channels.iter().any(|c| c % ratio != 0) {
                return bad(format!("attention ratio {ratio} must divide every backbone width"));
            }
        }
        if !(self.bn_eps > 0.0) {
            return bad(format!("bn epsilon must be positive, got {}", self.bn_eps));
        }
        Ok(())
    }

    fn attention_input(&self, j: usize) -> usize {
        if j == 0 {
            self.backbone_channels[0]
        } else {
            self.backbone_channels[j] + self.backbone_channels[j - 1]
        }
    }

    /// Every tensor the descriptor implies, in canonical order.
    pub fn tensor_specs(&self) -> Vec<TensorSpec> {
        let mut specs = Vec::new();
        let bn = |specs: &mut Vec<TensorSpec>, prefix: &str, width: usize| {
            for f in BN_FIELDS {
                specs.push(TensorSpec::new(format!("{prefix}.{f}"), vec![width]));
            }
        };
        let mut cin = self.input_channels;
        for (j, &cout) in self.backbone_channels.iter().enumerate() {
            specs.push(TensorSpec::new(format!("backbone.{j}.conv.weight"), vec![cout, cin, self.kernel_size]));
            specs.push(TensorSpec::new(format!("backbone.{j}.conv.bias"), vec![cout]));
            bn(&mut specs, &format!("backbone.{j}.bn"), cout);
            cin = cout;
        }
        if let Some(ratio) = self.attention_mid_ratio {
            for i in 0..self.tasks() {
                for (j, &width) in self.backbone_channels.iter().enumerate() {
                    let p = format!("tasks.{i}.attn.{j}");
                    let mid = width / ratio;
                    specs.push(TensorSpec::new(format!("{p}.conv1.weight"), vec![mid, self.attention_input(j), 1]));
                    specs.push(TensorSpec::new(format!("{p}.conv1.bias"), vec![mid]));
                    bn(&mut specs, &format!("{p}.bn1"), mid);
                    specs.push(TensorSpec::new(format!("{p}.conv2.weight"), vec![width, mid, 1]));
                    specs.push(TensorSpec::new(format!("{p}.conv2.bias"), vec![width]));
                    bn(&mut specs, &format!("{p}.bn2"), width);
                }
            }
        }
        let features = self.head_features();
        for (i, &classes) in self.class_counts.iter().enumerate() {
            specs.push(TensorSpec::new(format!("heads.{i}.fc.weight"), vec![classes, features]));
            specs.push(TensorSpec::new(format!("heads.{i}.fc.bias"), vec![classes]));
        }
        specs
    }

    /// Trainable parameters of the shared backbone: conv weights and biases
    /// plus the batch-norm scale and shift.
    pub fn backbone_parameters(&self) -> usize {
        let mut cin = self.input_channels;
        let mut total = 0;
        for &cout in &self.backbone_channels {
            total += cin * cout * self.kernel_size + cout + 2 * cout;
            cin = cout;
        }
        total
    }

    /// Trainable parameters of one task's attention stream.
    pub fn attention_parameters_per_task(&self) -> usize {
        let Some(ratio) = self.attention_mid_ratio else {
            return 0;
        };
        self.backbone_channels
            .iter()
            .enumerate()
            .map(|(j, &w)| {
                let mid = w / ratio;
                let cin = self.attention_input(j);
                (cin * mid + mid + 2 * mid) + (mid * w + w + 2 * w)
            })
            .sum()
    }

    pub fn head_parameters(&self) -> usize {
        self.class_counts.iter().map(|&c| c * self.head_features() + c).sum()
    }

    /// Multiply-accumulate count of the backbone convolutions, evaluated at
    /// the pre-pool (conv output) lengths.
    pub fn backbone_macs(&self) -> usize {
        let lengths = self.stage_lengths();
        let mut cin = self.input_channels;
        let mut total = 0;
        for (j, &cout) in self.backbone_channels.iter().enumerate() {
            total += cin * cout * self.kernel_size * lengths[j];
            cin = cout;
        }
        total
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

/// Validated weights container.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkWeights {
    pub descriptor: Descriptor,
    /// Descriptor bytes as stored, kept verbatim for byte-exact rewrites.
    descriptor_json: String,
    tensors: Vec<Tensor>,
    index: HashMap<String, usize>,
}

impl NetworkWeights {
    /// Builds a container for `descriptor`, filling each tensor with `init`.
    pub fn from_fn(descriptor: Descriptor, mut init: impl FnMut(&TensorSpec) -> Vec<f32>) -> Result<Self, WeightsError> {
        descriptor.validate()?;
        let tensors = descriptor
            .tensor_specs()
            .into_iter()
            .map(|spec| {
                let data = init(&spec);
                Tensor { name: spec.name, dims: spec.dims, data }
            })
            .collect();
        let json = serde_json::to_string(&descriptor).map_err(|e| WeightsError::Descriptor(e.to_string()))?;
        Self::assemble(descriptor, json, tensors)
    }

    /// Zero convolutions, identity batch norm, zero head weights and the
    /// given head biases: the output is `softmax(bias)` for every input.
    pub fn constant(descriptor: Descriptor, head_biases: &[Vec<f32>]) -> Result<Self, WeightsError> {
        if head_biases.len() != descriptor.tasks() {
            return Err(WeightsError::Mismatch(format!(
                "{} head biases for {} tasks",
                head_biases.len(),
                descriptor.tasks()
            )));
        }
        Self::from_fn(descriptor, |spec| {
            let n = spec.len();
            let parts: Vec<&str> = spec.name.split('.').collect();
            if parts[0] == "heads" && spec.name.ends_with("fc.bias") {
                let i: usize = parts[1].parse().unwrap();
                return head_biases[i].clone();
            }
            match *parts.last().unwrap() {
                "gamma" | "var" => vec![1.0; n],
                _ => vec![0.0; n],
            }
        })
    }

    fn assemble(descriptor: Descriptor, descriptor_json: String, tensors: Vec<Tensor>) -> Result<Self, WeightsError> {
        let index = tensors.iter().enumerate().map(|(k, t)| (t.name.clone(), k)).collect();
        let w = Self { descriptor, descriptor_json, tensors, index };
        w.validate()?;
        Ok(w)
    }

    /// Checks names, shapes, finiteness and batch-norm variances.
    pub fn validate(&self) -> Result<(), WeightsError> {
        self.descriptor.validate()?;
        let specs = self.descriptor.tensor_specs();
        for spec in &specs {
            let t = self.tensor(&spec.name).ok_or_else(|| WeightsError::Missing(spec.name.clone()))?;
            if t.dims != spec.dims || t.data.len() != spec.len() {
                return Err(WeightsError::Shape { name: spec.name.clone(), expected: spec.dims.clone(), found: t.dims.clone() });
            }
        }
        if self.tensors.len() != specs.len() {
            let known: std::collections::HashSet<&str> = specs.iter().map(|s| s.name.as_str()).collect();
            let extra = self.tensors.iter().find(|t| !known.contains(t.name.as_str())).map(|t| t.name.clone());
            return Err(WeightsError::Unexpected(extra.unwrap_or_else(|| "duplicate tensor".into())));
        }
        for t in &self.tensors {
            if t.data.iter().any(|v| !v.is_finite()) {
                return Err(WeightsError::NonFinite(t.name.clone()));
            }
            if t.name.ends_with(".var") && t.data.iter().any(|&v| v < 0.0) {
                return Err(WeightsError::NegativeVariance(t.name.clone()));
            }
        }
        Ok(())
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.index.get(name).map(|&k| &self.tensors[k])
    }

    pub(crate) fn data(&self, name: &str) -> &[f32] {
        &self.tensor(name).unwrap_or_else(|| panic!("validated weights lack {name}")).data
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.descriptor_json.len() as u32).to_le_bytes());
        out.extend_from_slice(self.descriptor_json.as_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        let mut offset = 0u64;
        for t in &self.tensors {
            out.extend_from_slice(&(t.name.len() as u32).to_le_bytes());
            out.extend_from_slice(t.name.as_bytes());
            out.push(DTYPE_F32);
            out.extend_from_slice(&(t.dims.len() as u32).to_le_bytes());
            for &d in &t.dims {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            out.extend_from_slice(&offset.to_le_bytes());
            offset += 4 * t.data.len() as u64;
        }
        for t in &self.tensors {
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, WeightsError> {
        let mut cur = Cursor { bytes, pos: 0 };
        let magic = cur.take(8, "magic")?;
        if magic != MAGIC {
            return Err(WeightsError::BadMagic(String::from_utf8_lossy(magic).into_owned()));
        }
        let version = cur.u32("version")?;
        if version != VERSION {
            return Err(WeightsError::UnsupportedVersion(version));
        }
        let desc_len = cur.u32("descriptor length")? as usize;
        let desc_bytes = cur.take(desc_len, "descriptor")?;
        let descriptor_json =
            String::from_utf8(desc_bytes.to_vec()).map_err(|e| WeightsError::Descriptor(e.to_string()))?;
        let descriptor: Descriptor =
            serde_json::from_str(&descriptor_json).map_err(|e| WeightsError::Descriptor(e.to_string()))?;
        let count = cur.u32("tensor count")? as usize;
        let mut table = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let name_len = cur.u32("tensor name length")? as usize;
            let name = String::from_utf8(cur.take(name_len, "tensor name")?.to_vec())
                .map_err(|e| WeightsError::Descriptor(format!("tensor name: {e}")))?;
            let dtype = cur.take(1, "dtype")?[0];
            if dtype != DTYPE_F32 {
                return Err(WeightsError::Descriptor(format!("tensor {name}: unsupported dtype {dtype}")));
            }
            let rank = cur.u32("rank")? as usize;
            let dims = (0..rank).map(|_| cur.u32("dims").map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
            let offset = cur.u64("offset")?;
            table.push((name, dims, offset));
        }
        let data = &bytes[cur.pos..];
        let mut tensors = Vec::with_capacity(table.len());
        for (name, dims, offset) in table {
            let n: usize = dims.iter().product();
            let start = usize::try_from(offset).map_err(|_| WeightsError::Truncated(name.clone()))?;
            let end = start.checked_add(4 * n).filter(|&e| e <= data.len());
            let Some(end) = end else {
                return Err(WeightsError::Truncated(format!("tensor {name} extends past the data section")));
            };
            let values =
                data[start..end].chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
            tensors.push(Tensor { name, dims, data: values });
        }
        if tensors.len() != count {
            return Err(WeightsError::Truncated("tensor table".into()));
        }
        Self::assemble(descriptor, descriptor_json, tensors)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Ok(Self::from_bytes(&bytes)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], WeightsError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| WeightsError::Truncated(what.to_string()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32, WeightsError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64, WeightsError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Descriptor {
        Descriptor { backbone_channels: vec![8, 16, 32], ..Descriptor::ampbt(31, vec![5, 3, 4]) }
    }

    #[test]
    fn reference_parameter_counts() {
        let d = Descriptor::ampbt(255, vec![255, 10, 51]);
        assert_eq!(d.stage_lengths(), vec![255, 127, 63, 31]);
        assert_eq!(d.backbone_parameters(), 124_608);
        assert_eq!(d.head_features(), 7936);
        assert_eq!(d.attention_parameters_per_task(), 54_928);
        assert_eq!(3 * Descriptor::spbt(255, 10).backbone_parameters(), 373_824);
    }

    #[test]
    fn counted_parameters_match_tensor_table() {
        let d = toy();
        let w = NetworkWeights::constant(d.clone(), &[vec![0.0; 5], vec![0.0; 3], vec![0.0; 4]]).unwrap();
        // batch-norm running statistics are stored but not trained
        let running: usize = d.tensor_specs().iter().filter(|s| s.name.ends_with(".mean") || s.name.ends_with(".var")).map(|s| s.len()).sum();
        let trainable = d.backbone_parameters() + 3 * d.attention_parameters_per_task() + d.head_parameters();
        assert_eq!(w.parameter_count(), trainable + running);
    }

    #[test]
    fn byte_round_trip() {
        let mut k = 0u32;
        let w = NetworkWeights::from_fn(toy(), |s| {
            (0..s.len())
                .map(|_| {
                    k = k.wrapping_mul(1_664_525).wrapping_add(1_013_904_223);
                    (k >> 8) as f32 / (1 << 24) as f32
                })
                .collect()
        })
        .unwrap();
        let bytes = w.to_bytes();
        let back = NetworkWeights::from_bytes(&bytes).unwrap();
        assert_eq!(back, w);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn distinct_rejections() {
        let w = NetworkWeights::constant(toy(), &[vec![0.0; 5], vec![0.0; 3], vec![0.0; 4]]).unwrap();
        let bytes = w.to_bytes();

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(NetworkWeights::from_bytes(&bad), Err(WeightsError::BadMagic(_))));

        let mut bad = bytes.clone();
        bad[8] = 9;
        assert_eq!(NetworkWeights::from_bytes(&bad), Err(WeightsError::UnsupportedVersion(9)));

        let mut t = w.tensors.clone();
        t[0].data[3] = f32::NAN;
        let json = w.descriptor_json.clone();
        assert!(matches!(NetworkWeights::assemble(w.descriptor.clone(), json.clone(), t), Err(WeightsError::NonFinite(_))));

        let mut t = w.tensors.clone();
        t[0].dims[0] += 1;
        t[0].data.extend(std::iter::repeat_n(0.0, 2 * 3));
        assert!(matches!(NetworkWeights::assemble(w.descriptor.clone(), json.clone(), t), Err(WeightsError::Shape { .. })));

        let mut t = w.tensors.clone();
        let v = t.iter().position(|t| t.name.ends_with(".var")).unwrap();
        t[v].data[0] = -1.0;
        assert!(matches!(NetworkWeights::assemble(w.descriptor.clone(), json.clone(), t), Err(WeightsError::NegativeVariance(_))));

        let mut t = w.tensors.clone();
        t.pop();
        assert!(matches!(NetworkWeights::assemble(w.descriptor.clone(), json, t), Err(WeightsError::Missing(_))));

        assert!(matches!(NetworkWeights::from_bytes(&bytes[..bytes.len() - 1]), Err(WeightsError::Truncated(_))));
    }

    #[test]
    fn descriptor_checks() {
        let mut d = toy();
        d.input_channels = 3;
        assert!(matches!(d.validate(), Err(WeightsError::Descriptor(_))));
        let mut d = toy();
        d.attention_mid_ratio = Some(3);
        assert!(d.validate().is_err());
        let mut d = toy();
        d.input_length = 7;
        assert!(d.validate().is_err());
    }
}
