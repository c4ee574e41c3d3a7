//! Codeword selection: DFT sweeps, exhaustive and hierarchical search over
//! Airy codebooks, and network-assisted candidate search.
//!
//! Gains are `|E|²` at the receiver's grid cell. Ties go to the smallest
//! flat codebook index. Codeword propagations run in parallel; results are
//! reduced in a fixed order so they do not depend on the worker count.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::codebook::{build_dft_codebook, BeamParams, Codebook, Index3};
use crate::field::{beam_gain, ApertureField, Propagator};
use crate::nn::{topk, Network, TaskProbabilities};
use crate::{Error, Result};

/// Received complex signal for each DFT codeword, in sweep order.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamPattern {
    pub values: Vec<Complex64>,
    pub receiver: (f64, f64),
}

impl BeamPattern {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.norm()).collect()
    }

    /// Pattern with the phase discarded (magnitude carried in the real part).
    pub fn magnitude_only(&self) -> Self {
        Self { values: self.values.iter().map(|v| Complex64::new(v.norm(), 0.0)).collect(), receiver: self.receiver }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub index: Index3,
    pub params: BeamParams,
    pub gain: f64,
    /// Number of codeword measurements spent.
    pub overhead: usize,
    /// Gains in evaluation order.
    pub trace: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    AiryBs,
    FocusBs,
    AiryHier,
    AiryDl,
    FocusDl,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::AiryBs, Method::FocusBs, Method::AiryHier, Method::AiryDl, Method::FocusDl];

    pub fn name(self) -> &'static str {
        match self {
            Method::AiryBs => "airy-bs",
            Method::FocusBs => "focus-bs",
            Method::AiryHier => "airy-hier",
            Method::AiryDl => "airy-dl",
            Method::FocusDl => "focus-dl",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown method {s:?}")))
    }
}

/// `(gain, flat index)` ordering: higher gain wins, then lower index.
fn better(a: (f64, usize), b: (f64, usize)) -> bool {
    a.0 > b.0 || (a.0 == b.0 && a.1 < b.1)
}

/// Propagates each listed codeword once and reads the field at every
/// receiver cell. Output is `[codeword][receiver]`.
pub fn codeword_fields(
    prop: &Propagator,
    codebook: &Codebook,
    flat: &[usize],
    cells: &[(usize, usize)],
) -> Result<Vec<Vec<Complex64>>> {
    flat.par_iter()
        .map(|&k| prop.at_cells(&ApertureField::from(&*codebook.codeword(codebook.unflatten(k))), cells))
        .collect()
}

/// Best `(flat index, gain)` per receiver over the listed codewords, without
/// holding the full gain table in memory.
pub fn best_per_receiver(
    prop: &Propagator,
    codebook: &Codebook,
    flat: &[usize],
    cells: &[(usize, usize)],
) -> Result<Vec<(usize, f64)>> {
    let init = || vec![(f64::NEG_INFINITY, usize::MAX); cells.len()];
    let merge = |mut acc: Vec<(f64, usize)>, other: Vec<(f64, usize)>| {
        for (a, b) in acc.iter_mut().zip(other) {
            if better(b, *a) {
                *a = b;
            }
        }
        acc
    };
    let best = flat
        .par_iter()
        .map(|&k| {
            let values = prop.at_cells(&ApertureField::from(&*codebook.codeword(codebook.unflatten(k))), cells)?;
            Ok(values.into_iter().map(|v| (beam_gain(v), k)).collect::<Vec<_>>())
        })
        .try_fold(init, |acc, item: Result<Vec<(f64, usize)>>| item.map(|v| merge(acc, v)))
        .try_reduce(init, |a, b| Ok(merge(a, b)))?;
    Ok(best.into_iter().map(|(g, k)| (k, g)).collect())
}

/// Sweeps the listed flat indices at one receiver. Overhead is the number
/// of indices; the trace follows the given order.
pub fn sweep_indices(prop: &Propagator, codebook: &Codebook, flat: &[usize], receiver: (f64, f64)) -> Result<SearchResult> {
    Ok(sweep_batch(prop, codebook, flat, &[receiver])?.remove(0))
}

/// [`sweep_indices`] at many receivers, propagating each codeword once.
/// Holds `flat.len() × receivers.len()` field samples.
pub fn sweep_batch(
    prop: &Propagator,
    codebook: &Codebook,
    flat: &[usize],
    receivers: &[(f64, f64)],
) -> Result<Vec<SearchResult>> {
    if flat.is_empty() {
        return Err(Error::Parameter("empty codeword list".into()));
    }
    if let Some(&bad) = flat.iter().find(|&&k| k >= codebook.len()) {
        return Err(Error::Parameter(format!("flat index {bad} outside a codebook of {}", codebook.len())));
    }
    let cells = prop.probe_cells(receivers)?;
    let fields = codeword_fields(prop, codebook, flat, &cells)?;
    Ok((0..receivers.len())
        .map(|r| {
            let trace: Vec<f64> = fields.iter().map(|f| beam_gain(f[r])).collect();
            pick(codebook, flat, trace)
        })
        .collect())
}

fn pick(codebook: &Codebook, flat: &[usize], trace: Vec<f64>) -> SearchResult {
    let mut best = (trace[0], flat[0]);
    for (&g, &k) in trace.iter().zip(flat) {
        if better((g, k), best) {
            best = (g, k);
        }
    }
    let index = codebook.unflatten(best.1);
    SearchResult { index, params: codebook.params(index), gain: best.0, overhead: flat.len(), trace }
}

/// Measures every codeword of an `N`-beam DFT codebook at the receiver.
pub fn dft_sweep(prop: &Propagator, receiver: (f64, f64)) -> Result<BeamPattern> {
    Ok(dft_patterns(prop, &[receiver])?.remove(0))
}

/// DFT patterns at many receivers, propagating each DFT codeword once.
pub fn dft_patterns(prop: &Propagator, receivers: &[(f64, f64)]) -> Result<Vec<BeamPattern>> {
    let config = prop.config();
    let dft = build_dft_codebook(config.n_antennas, config.wavenumber(), config.antenna_spacing())?;
    let cells = prop.probe_cells(receivers)?;
    let flat: Vec<usize> = (0..dft.len()).collect();
    let fields = codeword_fields(prop, &dft, &flat, &cells)?;
    Ok(receivers
        .iter()
        .enumerate()
        .map(|(r, &receiver)| BeamPattern { values: fields.iter().map(|f| f[r]).collect(), receiver })
        .collect())
}

/// Evaluates every codeword; overhead `L1·L2·L3`.
pub fn exhaustive_sweep(prop: &Propagator, codebook: &Codebook, receiver: (f64, f64)) -> Result<SearchResult> {
    let flat: Vec<usize> = (0..codebook.len()).collect();
    sweep_indices(prop, codebook, &flat, receiver)
}

/// Flat indices of the zero-curvature (focusing) sub-codebook.
pub fn focusing_indices(codebook: &Codebook) -> Result<Vec<usize>> {
    let l3 = codebook
        .zero_curvature_index()
        .ok_or_else(|| Error::Parameter("curvature set does not contain 0".into()))?;
    let (d1, d2, _) = codebook.dims();
    Ok((0..d1).flat_map(|a| (0..d2).map(move |b| (a, b))).map(|(a, b)| codebook.flat_index((a, b, l3))).collect())
}

/// Focusing sweep for (θ, r), then a curvature sweep at that pair;
/// overhead `L1·L2 + L3`.
pub fn hierarchical_search(prop: &Propagator, codebook: &Codebook, receiver: (f64, f64)) -> Result<SearchResult> {
    Ok(hierarchical_batch(prop, codebook, &[receiver])?.remove(0))
}

/// [`hierarchical_search`] at many receivers. Stage one is shared; stage two
/// is shared among receivers that picked the same (θ, r).
pub fn hierarchical_batch(prop: &Propagator, codebook: &Codebook, receivers: &[(f64, f64)]) -> Result<Vec<SearchResult>> {
    let stage1 = sweep_batch(prop, codebook, &focusing_indices(codebook)?, receivers)?;
    let (_, _, d3) = codebook.dims();
    let mut groups: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for (r, s) in stage1.iter().enumerate() {
        groups.entry((s.index.0, s.index.1)).or_default().push(r);
    }
    let mut out: Vec<Option<SearchResult>> = vec![None; receivers.len()];
    for ((l1, l2), members) in groups {
        let flat: Vec<usize> = (0..d3).map(|l3| codebook.flat_index((l1, l2, l3))).collect();
        let pts: Vec<(f64, f64)> = members.iter().map(|&r| receivers[r]).collect();
        for (&r, stage2) in members.iter().zip(sweep_batch(prop, codebook, &flat, &pts)?) {
            let mut trace = stage1[r].trace.clone();
            trace.extend(stage2.trace);
            out[r] = Some(SearchResult { overhead: stage1[r].overhead + stage2.overhead, trace, ..stage2 });
        }
    }
    Ok(out.into_iter().map(|r| r.expect("every receiver belongs to a group")).collect())
}

/// Cartesian product of the top-`k[i]` classes of each task, as sorted flat
/// indices. A codebook with a singleton dimension needs no probabilities for
/// it.
pub fn candidate_codebook(probs: &TaskProbabilities, k: &[usize], codebook: &Codebook) -> Result<Vec<usize>> {
    let (d1, d2, d3) = codebook.dims();
    let dims = [d1, d2, d3];
    let tasks = probs.tasks.len();
    if tasks == 0 || tasks > 3 || dims[tasks..].iter().any(|&d| d != 1) {
        return Err(Error::Parameter(format!("{tasks} probability vectors for a {d1}x{d2}x{d3} codebook")));
    }
    if k.len() != tasks {
        return Err(Error::Parameter(format!("{} candidate counts for {tasks} tasks", k.len())));
    }
    let mut sets: Vec<Vec<usize>> = Vec::with_capacity(3);
    for (i, (p, &ki)) in probs.tasks.iter().zip(k).enumerate() {
        if p.len() != dims[i] {
            return Err(Error::Parameter(format!("task {i} has {} probabilities, codebook has {}", p.len(), dims[i])));
        }
        if ki == 0 {
            return Err(Error::Parameter(format!("task {i} needs at least one candidate")));
        }
        sets.push(topk(p, ki)?);
    }
    while sets.len() < 3 {
        sets.push(vec![0]);
    }
    let mut flat = Vec::with_capacity(sets.iter().map(Vec::len).product());
    for &a in &sets[0] {
        for &b in &sets[1] {
            for &c in &sets[2] {
                flat.push(codebook.flat_index((a, b, c)));
            }
        }
    }
    flat.sort_unstable();
    Ok(flat)
}

/// DFT sweep, network inference and a sweep over the candidate codebook;
/// overhead `L1 + ∏ kᵢ` where `L1` is the DFT codebook size.
pub fn dl_beam_training(
    prop: &Propagator,
    network: &Network,
    codebook: &Codebook,
    receiver: (f64, f64),
    k: &[usize],
) -> Result<SearchResult> {
    let pattern = dft_sweep(prop, receiver)?;
    dl_from_pattern(prop, network, codebook, &pattern, k)
}

/// [`dl_beam_training`] with an already measured pattern.
pub fn dl_from_pattern(
    prop: &Propagator,
    network: &Network,
    codebook: &Codebook,
    pattern: &BeamPattern,
    k: &[usize],
) -> Result<SearchResult> {
    Ok(dl_batch(prop, network, codebook, std::slice::from_ref(pattern), k)?.remove(0))
}

/// Network-assisted search at many receivers from their measured patterns.
/// The union of all candidate sets is propagated once; each receiver's
/// trace covers its own candidates in ascending flat order.
pub fn dl_batch(
    prop: &Propagator,
    network: &Network,
    codebook: &Codebook,
    patterns: &[BeamPattern],
    k: &[usize],
) -> Result<Vec<SearchResult>> {
    let (d1, d2, d3) = codebook.dims();
    let dims: Vec<usize> = [d1, d2, d3][..network.descriptor().tasks().min(3)].to_vec();
    let mut candidates = Vec::with_capacity(patterns.len());
    for p in patterns {
        network.check_architecture(p.len(), &dims)?;
        candidates.push(candidate_codebook(&network.forward(&p.values)?, k, codebook)?);
    }
    let union: Vec<usize> = candidates.iter().flatten().copied().collect::<BTreeSet<_>>().into_iter().collect();
    let receivers: Vec<(f64, f64)> = patterns.iter().map(|p| p.receiver).collect();
    let cells = prop.probe_cells(&receivers)?;
    let fields = codeword_fields(prop, codebook, &union, &cells)?;
    Ok(candidates
        .iter()
        .zip(patterns)
        .enumerate()
        .map(|(r, (flat, p))| {
            let trace = flat.iter().map(|k| beam_gain(fields[union.binary_search(k).expect("candidate in union")][r])).collect();
            let mut result = pick(codebook, flat, trace);
            result.overhead += p.len();
            result
        })
        .collect())
}

/// Best gain among the first `n` measurements, for every `n`.
pub fn overhead_curve(trace: &[f64]) -> Vec<f64> {
    trace
        .iter()
        .scan(f64::NEG_INFINITY, |best, &g| {
            *best = best.max(g);
            Some(*best)
        })
        .collect()
}

#[derive(Serialize)]
struct ResultRow<'a> {
    method: &'a str,
    x: f64,
    y: f64,
    l1: usize,
    l2: usize,
    l3: usize,
    theta: f64,
    r: f64,
    c: f64,
    gain: f64,
    overhead: usize,
}

/// One CSV row per `(method, receiver, result)`.
pub fn write_results_csv<W: Write>(writer: W, rows: &[(Method, (f64, f64), SearchResult)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for (method, receiver, r) in rows {
        w.serialize(ResultRow {
            method: method.name(),
            x: receiver.0,
            y: receiver.1,
            l1: r.index.0,
            l2: r.index.1,
            l3: r.index.2,
            theta: r.params.theta,
            r: r.params.r,
            c: r.params.c,
            gain: r.gain,
            overhead: r.overhead,
        })
        .map_err(|e| Error::Io(e.into()))?;
    }
    w.flush()?;
    Ok(())
}
