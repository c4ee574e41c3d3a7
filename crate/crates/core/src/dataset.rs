//! Supervised samples mapping DFT beam patterns to the optimal Airy
//! codeword, and the `ABTD0001` record file.
//!
//! Record file layout, little-endian:
//!
//! ```text
//! magic "ABTD0001" | version u32 | L1 u32 | record_size u32
//! manifest_len u32 | manifest JSON
//! records: x f64, y f64, blockage f32, pattern 2·L1 f32 (re, im interleaved),
//!          l1 u16, l2 u16, l3 u16, pad u16, gain f32
//! ```

use std::collections::BTreeSet;
use std::io::{Read, Write};

use num_complex::{Complex32, Complex64};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::codebook::{Codebook, CodebookSpec, Index3};
use crate::error::FormatError;
use crate::field::Propagator;
use crate::scenario::{blockage_ratio, Region};
use crate::search::{best_per_receiver, dft_patterns};
use crate::{Error, Result};

pub const MAGIC: &[u8; 8] = b"ABTD0001";
pub const VERSION: u32 = 1;

/// One labeled receiver position.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingRecord {
    pub receiver: (f64, f64),
    pub blockage: f32,
    pub pattern: Vec<Complex32>,
    pub labels: Index3,
    /// Optimal gain. Stored as `f32` on disk.
    pub gain: f64,
}

impl TrainingRecord {
    pub fn pattern_f64(&self) -> Vec<Complex64> {
        self.pattern.iter().map(|v| Complex64::new(v.re as f64, v.im as f64)).collect()
    }
}

/// Index boundaries of a train/validation/test partition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub scenario_hash: String,
    pub codebook: CodebookSpec,
    pub pattern_length: usize,
    pub record_count: usize,
    pub seed: u64,
    pub splits: SplitSizes,
}

impl DatasetManifest {
    pub fn label_bounds(&self) -> [usize; 3] {
        [self.codebook.l1, self.codebook.l2, self.codebook.l3]
    }
}

/// How receivers are placed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ReceiverSampling {
    /// Every `stride`-th grid cell inside the area, in x-major order.
    Lattice { area: Region, stride: usize },
    /// `count` uniform positions, snapped to the grid and deduplicated.
    Random { area: Region, count: usize, seed: u64 },
}

/// Optional additive complex Gaussian noise on the stored patterns.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatternNoise {
    /// Per-component standard deviation.
    pub sigma: f64,
    pub seed: u64,
}

/// Grid-snapped receiver positions for a sampling spec.
pub fn sample_receivers(prop: &Propagator, sampling: &ReceiverSampling) -> Result<Vec<(f64, f64)>> {
    let grid = prop.grid();
    let area = match sampling {
        ReceiverSampling::Lattice { area, .. } | ReceiverSampling::Random { area, .. } => area,
    };
    let config = prop.config();
    if !(area.x_min > 0.0) || !config.region.contains(area.x_min, area.y_min) || !config.region.contains(area.x_max, area.y_max) {
        return Err(Error::Geometry(format!("receiver area {area:?} must lie inside the region with x > 0")));
    }
    if area.x_min > area.x_max || area.y_min > area.y_max {
        return Err(Error::Geometry(format!("receiver area {area:?} is inverted")));
    }
    // grid cells whose centers lie inside the area
    let eps = 1e-9;
    let c0 = (area.x_min / grid.step_x - eps).ceil().max(0.0) as usize;
    let c1 = ((area.x_max / grid.step_x + eps).floor() as usize).min(grid.cols - 1);
    let r0 = ((area.y_min / grid.step_y - eps).ceil() as i64 - grid.row_origin).max(0) as usize;
    let r1 = (((area.y_max / grid.step_y + eps).floor() as i64 - grid.row_origin).max(0) as usize).min(grid.rows - 1);
    if c0 > c1 || r0 > r1 {
        return Err(Error::Geometry(format!("receiver area {area:?} holds no grid cells")));
    }
    let points = match *sampling {
        ReceiverSampling::Lattice { stride, .. } => {
            if stride == 0 {
                return Err(Error::Parameter("lattice stride must be positive".into()));
            }
            let mut pts = Vec::new();
            for c in (c0..=c1).step_by(stride) {
                for r in (r0..=r1).step_by(stride) {
                    pts.push((grid.x(c), grid.y(r)));
                }
            }
            pts
        }
        ReceiverSampling::Random { count, seed, .. } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut seen = BTreeSet::new();
            let mut pts = Vec::with_capacity(count);
            for _ in 0..count {
                let c = rng.gen_range(c0..=c1);
                let r = rng.gen_range(r0..=r1);
                if seen.insert((c, r)) {
                    pts.push((grid.x(c), grid.y(r)));
                }
            }
            pts
        }
    };
    Ok(points)
}

/// Labels every receiver by exhaustive search over `codebook` and attaches
/// its DFT pattern and blockage ratio. Each codeword is propagated once.
pub fn generate_dataset(
    prop: &Propagator,
    codebook: &Codebook,
    spec: &CodebookSpec,
    receivers: &[(f64, f64)],
    noise: Option<PatternNoise>,
    seed: u64,
) -> Result<(Vec<TrainingRecord>, DatasetManifest)> {
    let (d1, d2, d3) = codebook.dims();
    if (d1, d2, d3) != (spec.l1, spec.l2, spec.l3) || d1 > u16::MAX as usize || d2 > u16::MAX as usize || d3 > u16::MAX as usize {
        return Err(Error::Parameter("codebook does not match its spec or exceeds 16-bit labels".into()));
    }
    let cells = prop.probe_cells(receivers)?;
    let patterns = dft_patterns(prop, receivers)?;
    let flat: Vec<usize> = (0..codebook.len()).collect();
    let best = best_per_receiver(prop, codebook, &flat, &cells)?;
    let mut rng = noise.map(|n| (ChaCha8Rng::seed_from_u64(n.seed), Normal::new(0.0, n.sigma)));
    let mut records = Vec::with_capacity(receivers.len());
    for ((&rx, pattern), (k, gain)) in receivers.iter().zip(patterns).zip(best) {
        let mut values = pattern.values;
        if let Some((rng, normal)) = rng.as_mut() {
            let normal = normal.as_ref().map_err(|e| Error::Parameter(format!("noise: {e}")))?;
            for v in &mut values {
                *v += Complex64::new(normal.sample(rng), normal.sample(rng));
            }
        }
        records.push(TrainingRecord {
            receiver: rx,
            blockage: blockage_ratio(prop.config(), rx)? as f32,
            pattern: values.iter().map(|v| Complex32::new(v.re as f32, v.im as f32)).collect(),
            labels: codebook.unflatten(k),
            gain,
        });
    }
    let n = records.len();
    let manifest = DatasetManifest {
        scenario_hash: prop.config().hash_hex(),
        codebook: *spec,
        pattern_length: prop.config().n_antennas,
        record_count: n,
        seed,
        splits: split_sizes(n),
    };
    Ok((records, manifest))
}

fn split_sizes(n: usize) -> SplitSizes {
    let train = n * 8 / 10;
    let val = n / 10;
    SplitSizes { train, val, test: n - train - val }
}

/// Seeded shuffle of `0..n` cut into `floor(0.8n)`, `floor(0.1n)` and the
/// remainder.
pub fn split_dataset(n: usize, seed: u64) -> Result<Split> {
    if n < 10 {
        return Err(Error::Size(format!("need at least 10 records to split, got {n}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let sizes = split_sizes(n);
    let test = order.split_off(sizes.train + sizes.val);
    let val = order.split_off(sizes.train);
    Ok(Split { train: order, val, test })
}

pub fn record_size(pattern_length: usize) -> usize {
    32 + 8 * pattern_length
}

pub fn write_records<W: Write>(mut w: W, manifest: &DatasetManifest, records: &[TrainingRecord]) -> Result<()> {
    if manifest.record_count != records.len() {
        return Err(FormatError::Header(format!(
            "manifest lists {} records, writing {}",
            manifest.record_count,
            records.len()
        ))
        .into());
    }
    let l1 = manifest.pattern_length;
    let json = serde_json::to_string(manifest)?;
    let mut buf = Vec::with_capacity(24 + json.len() + records.len() * record_size(l1));
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(l1 as u32).to_le_bytes());
    buf.extend_from_slice(&(record_size(l1) as u32).to_le_bytes());
    buf.extend_from_slice(&(json.len() as u32).to_le_bytes());
    buf.extend_from_slice(json.as_bytes());
    for (k, r) in records.iter().enumerate() {
        if r.pattern.len() != l1 {
            return Err(FormatError::Header(format!("record {k} has pattern length {}", r.pattern.len())).into());
        }
        check_labels(k, r.labels, manifest.label_bounds())?;
        buf.extend_from_slice(&r.receiver.0.to_le_bytes());
        buf.extend_from_slice(&r.receiver.1.to_le_bytes());
        buf.extend_from_slice(&r.blockage.to_le_bytes());
        for v in &r.pattern {
            buf.extend_from_slice(&v.re.to_le_bytes());
            buf.extend_from_slice(&v.im.to_le_bytes());
        }
        for l in [r.labels.0, r.labels.1, r.labels.2, 0] {
            buf.extend_from_slice(&(l as u16).to_le_bytes());
        }
        buf.extend_from_slice(&(r.gain as f32).to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

fn check_labels(index: usize, labels: Index3, bounds: [usize; 3]) -> Result<()> {
    for (label, bound) in [labels.0, labels.1, labels.2].into_iter().zip(bounds) {
        if label >= bound {
            return Err(FormatError::LabelOutOfRange { index, label, bound }.into());
        }
    }
    Ok(())
}

pub fn read_records<R: Read>(mut r: R) -> Result<(DatasetManifest, Vec<TrainingRecord>)> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let truncated = |what: &str| Error::Format(FormatError::Truncated(what.to_string()));
    if bytes.len() < 24 {
        return Err(truncated("header"));
    }
    if &bytes[..8] != MAGIC {
        return Err(FormatError::BadMagic {
            expected: String::from_utf8_lossy(MAGIC).into_owned(),
            found: String::from_utf8_lossy(&bytes[..8]).into_owned(),
        }
        .into());
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let version = u32_at(8);
    if version != VERSION {
        return Err(FormatError::UnsupportedVersion(version).into());
    }
    let l1 = u32_at(12) as usize;
    let size = u32_at(16) as usize;
    let json_len = u32_at(20) as usize;
    if size != record_size(l1) {
        return Err(FormatError::Header(format!("record size {size} does not match L1 = {l1}")).into());
    }
    let body_start = 24usize.checked_add(json_len).filter(|&e| e <= bytes.len()).ok_or_else(|| truncated("manifest"))?;
    let manifest: DatasetManifest = serde_json::from_slice(&bytes[24..body_start])
        .map_err(|e| FormatError::Header(format!("manifest: {e}")))?;
    if manifest.pattern_length != l1 {
        return Err(FormatError::Header(format!("manifest pattern length {} vs header {l1}", manifest.pattern_length)).into());
    }
    let body = &bytes[body_start..];
    if body.len() % size != 0 {
        return Err(truncated("record body"));
    }
    if body.len() / size != manifest.record_count {
        return Err(FormatError::Header(format!(
            "manifest lists {} records, file holds {}",
            manifest.record_count,
            body.len() / size
        ))
        .into());
    }
    let bounds = manifest.label_bounds();
    let mut records = Vec::with_capacity(manifest.record_count);
    for (k, rec) in body.chunks_exact(size).enumerate() {
        let f64_at = |o: usize| f64::from_le_bytes(rec[o..o + 8].try_into().unwrap());
        let f32_at = |o: usize| f32::from_le_bytes(rec[o..o + 4].try_into().unwrap());
        let u16_at = |o: usize| u16::from_le_bytes(rec[o..o + 2].try_into().unwrap()) as usize;
        let pattern = (0..l1).map(|i| Complex32::new(f32_at(20 + 8 * i), f32_at(24 + 8 * i))).collect();
        let tail = 20 + 8 * l1;
        let labels = (u16_at(tail), u16_at(tail + 2), u16_at(tail + 4));
        check_labels(k, labels, bounds)?;
        records.push(TrainingRecord {
            receiver: (f64_at(0), f64_at(8)),
            blockage: f32_at(16),
            pattern,
            labels,
            gain: f32_at(tail + 8) as f64,
        });
    }
    Ok((manifest, records))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditReport {
    pub checked: usize,
    /// Indices of records whose labels or gain disagree with a re-sweep.
    pub mismatches: Vec<usize>,
}

/// Re-sweeps a seeded random `fraction` of the records (at least one) and
/// compares labels and stored gains.
pub fn audit(
    prop: &Propagator,
    codebook: &Codebook,
    manifest: &DatasetManifest,
    records: &[TrainingRecord],
    fraction: f64,
    seed: u64,
) -> Result<AuditReport> {
    if manifest.scenario_hash != prop.config().hash_hex() {
        return Err(Error::Config(format!(
            "dataset was generated for scenario {} but the current scenario hashes to {}",
            manifest.scenario_hash,
            prop.config().hash_hex()
        )));
    }
    let (d1, d2, d3) = codebook.dims();
    if [d1, d2, d3] != manifest.label_bounds() {
        return Err(Error::Config("codebook dimensions differ from the dataset manifest".into()));
    }
    if records.is_empty() {
        return Ok(AuditReport { checked: 0, mismatches: Vec::new() });
    }
    let take = ((records.len() as f64 * fraction).ceil() as usize).clamp(1, records.len());
    let mut picks: Vec<usize> = (0..records.len()).collect();
    picks.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    picks.truncate(take);
    picks.sort_unstable();
    let receivers: Vec<(f64, f64)> = picks.iter().map(|&k| records[k].receiver).collect();
    let cells = prop.probe_cells(&receivers)?;
    let flat: Vec<usize> = (0..codebook.len()).collect();
    let best = best_per_receiver(prop, codebook, &flat, &cells)?;
    let mismatches = picks
        .iter()
        .zip(best)
        .filter(|(&k, (idx, gain))| {
            let r = &records[k];
            codebook.unflatten(*idx) != r.labels || (*gain as f32) != (r.gain as f32)
        })
        .map(|(&k, _)| k)
        .collect();
    Ok(AuditReport { checked: take, mismatches })
}
