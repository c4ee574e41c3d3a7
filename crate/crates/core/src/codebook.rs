//! Steering, focusing and Airy phase profiles and the codebooks built from
//! them.
//!
//! The three beam families are nested: the Airy phase adds a cubic
//! curvature term to the focusing phase, which adds a quadratic distance
//! term to the linear steering phase. `c = 0` recovers focusing and
//! additionally `r = ∞` recovers steering.

use std::borrow::Cow;
use std::f64::consts::{FRAC_PI_2, PI};
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Angle, focusing distance and curvature of one beam.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamParams {
    /// Steering angle in radians, `[−π/2, π/2]`.
    pub theta: f64,
    /// Focusing distance in meters; `f64::INFINITY` disables focusing.
    pub r: f64,
    /// Curvature coefficient in 1/m; zero disables the cubic term.
    pub c: f64,
}

impl BeamParams {
    pub fn new(theta: f64, r: f64, c: f64) -> Self {
        Self { theta, r, c }
    }

    pub fn steering(theta: f64) -> Self {
        Self { theta, r: f64::INFINITY, c: 0.0 }
    }

    pub fn focusing(theta: f64, r: f64) -> Self {
        Self { theta, r, c: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r > 0.0) {
            return Err(Error::Parameter(format!("focusing distance must be positive, got {}", self.r)));
        }
        if !self.theta.is_finite() || self.theta.abs() > FRAC_PI_2 + 1e-12 {
            return Err(Error::Parameter(format!("steering angle {} outside [-pi/2, pi/2]", self.theta)));
        }
        if !self.c.is_finite() {
            return Err(Error::Parameter(format!("curvature must be finite, got {}", self.c)));
        }
        Ok(())
    }
}

/// Continuous aperture phase at position `y0` (meters along the array).
pub fn phase_at(y0: f64, params: &BeamParams, kappa: f64) -> f64 {
    let (s, c2) = (params.theta.sin(), params.theta.cos().powi(2));
    let mut phase = -kappa * y0 * s;
    if params.r.is_finite() {
        phase += kappa * c2 / (2.0 * params.r) * y0 * y0;
    }
    if params.c != 0.0 {
        phase -= (2.0 * PI * params.c).powi(3) * y0.powi(3) / 3.0;
    }
    phase
}

/// Phase of antenna `n`:
/// `−κnδ sinθ + κ cos²θ/(2r)·n²δ² − (2πc)³n³δ³/3`.
pub fn airy_phase(n: i64, params: &BeamParams, kappa: f64, spacing: f64) -> Result<f64> {
    if !(params.r > 0.0) {
        return Err(Error::Parameter(format!("focusing distance must be positive, got {}", params.r)));
    }
    Ok(phase_at(n as f64 * spacing, params, kappa))
}

/// Unit-norm excitation vector in aperture order `n = (1−N)/2 … (N−1)/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Codeword {
    pub values: Vec<Complex64>,
    pub params: BeamParams,
}

impl Codeword {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    /// ⟨self, other⟩ = Σ conj(a)·b.
    pub fn inner(&self, other: &Codeword) -> Complex64 {
        self.values.iter().zip(&other.values).map(|(a, b)| a.conj() * b).sum()
    }
}

pub fn make_codeword(params: BeamParams, n_antennas: usize, kappa: f64, spacing: f64) -> Result<Codeword> {
    if n_antennas == 0 || n_antennas.is_multiple_of(2) {
        return Err(Error::Parameter(format!("antenna count must be positive and odd, got {n_antennas}")));
    }
    let half = (n_antennas as i64 - 1) / 2;
    let amp = 1.0 / (n_antennas as f64).sqrt();
    let values = (-half..=half)
        .map(|n| airy_phase(n, &params, kappa, spacing).map(|phi| Complex64::from_polar(amp, phi)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Codeword { values, params })
}

/// Sampling description of an Airy codebook, as stored in codebook JSON.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CodebookSpec {
    pub l1: usize,
    pub l2: usize,
    /// `1` means the singleton curvature set `{0}` (a focusing codebook).
    pub l3: usize,
    pub theta_min: f64,
    pub theta_max: f64,
    pub r_min: f64,
    pub r_max: f64,
    pub c_max: f64,
}

impl CodebookSpec {
    /// L1 = 255, L2 = 10, L3 = 51 over θ ∈ [−π/2, π/2], r ∈ [0.5, 5],
    /// c ∈ [−5, 5].
    pub fn standard() -> Self {
        Self::over_standard_ranges(255, 10, 51)
    }

    pub fn over_standard_ranges(l1: usize, l2: usize, l3: usize) -> Self {
        Self { l1, l2, l3, theta_min: -FRAC_PI_2, theta_max: FRAC_PI_2, r_min: 0.5, r_max: 5.0, c_max: 5.0 }
    }

    /// Same angle and distance grid with the curvature set collapsed to {0}.
    pub fn focusing(&self) -> Self {
        Self { l3: 1, ..*self }
    }

    pub fn size(&self) -> usize {
        self.l1 * self.l2 * self.l3
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Index of one codeword as `(l1, l2, l3)`, zero-based.
pub type Index3 = (usize, usize, usize);

/// Uniform grid of beam parameters. Codewords are generated on demand unless
/// [`Codebook::materialize`] has been called.
#[derive(Debug, Clone)]
pub struct Codebook {
    pub thetas: Vec<f64>,
    pub distances: Vec<f64>,
    pub curvatures: Vec<f64>,
    pub n_antennas: usize,
    pub kappa: f64,
    pub spacing: f64,
    materialized: Option<Vec<Codeword>>,
}

/// `k`-th of `count` uniform samples over `[lo, hi]` (zero-based).
fn uniform(lo: f64, hi: f64, k: usize, count: usize) -> f64 {
    lo + k as f64 * (hi - lo) / (count as f64 - 1.0)
}

impl Codebook {
    /// Builds the sampled grid: angles uniform in sinθ, distances uniform in
    /// r, curvatures uniform over `[−c_max, c_max]`.
    pub fn new(spec: &CodebookSpec, n_antennas: usize, kappa: f64, spacing: f64) -> Result<Self> {
        if spec.l1 < 2 || spec.l2 < 2 || spec.l3 == 0 {
            return Err(Error::Parameter(format!(
                "codebook needs L1 >= 2, L2 >= 2 and L3 >= 2 (or L3 = 1 for focusing), got {}x{}x{}",
                spec.l1, spec.l2, spec.l3
            )));
        }
        if spec.theta_min > spec.theta_max || spec.r_min > spec.r_max || spec.c_max < 0.0 {
            return Err(Error::Parameter("inverted sampling range".into()));
        }
        if spec.theta_min < -FRAC_PI_2 - 1e-12 || spec.theta_max > FRAC_PI_2 + 1e-12 {
            return Err(Error::Parameter("angle range exceeds [-pi/2, pi/2]".into()));
        }
        if !(spec.r_min > 0.0) {
            return Err(Error::Parameter(format!("r_min must be positive, got {}", spec.r_min)));
        }
        if n_antennas == 0 || n_antennas.is_multiple_of(2) {
            return Err(Error::Parameter(format!("antenna count must be positive and odd, got {n_antennas}")));
        }
        let (s_lo, s_hi) = (spec.theta_min.sin(), spec.theta_max.sin());
        let thetas = (0..spec.l1).map(|k| uniform(s_lo, s_hi, k, spec.l1).clamp(-1.0, 1.0).asin()).collect();
        let distances = (0..spec.l2).map(|k| uniform(spec.r_min, spec.r_max, k, spec.l2)).collect();
        let curvatures = if spec.l3 == 1 {
            vec![0.0]
        } else {
            (0..spec.l3).map(|k| uniform(-spec.c_max, spec.c_max, k, spec.l3)).collect()
        };
        Ok(Self { thetas, distances, curvatures, n_antennas, kappa, spacing, materialized: None })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.thetas.len(), self.distances.len(), self.curvatures.len())
    }

    pub fn len(&self) -> usize {
        self.thetas.len() * self.distances.len() * self.curvatures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat index with l1 outermost and l3 innermost.
    pub fn flat_index(&self, (l1, l2, l3): Index3) -> usize {
        let (_, d2, d3) = self.dims();
        (l1 * d2 + l2) * d3 + l3
    }

    pub fn unflatten(&self, flat: usize) -> Index3 {
        let (_, d2, d3) = self.dims();
        (flat / (d2 * d3), (flat / d3) % d2, flat % d3)
    }

    pub fn contains(&self, (l1, l2, l3): Index3) -> bool {
        let (d1, d2, d3) = self.dims();
        l1 < d1 && l2 < d2 && l3 < d3
    }

    pub fn params(&self, (l1, l2, l3): Index3) -> BeamParams {
        BeamParams::new(self.thetas[l1], self.distances[l2], self.curvatures[l3])
    }

    pub fn codeword(&self, index: Index3) -> Cow<'_, Codeword> {
        if let Some(all) = &self.materialized {
            return Cow::Borrowed(&all[self.flat_index(index)]);
        }
        Cow::Owned(
            make_codeword(self.params(index), self.n_antennas, self.kappa, self.spacing)
                .expect("codebook parameters are validated at construction"),
        )
    }

    /// Generates and stores every codeword.
    pub fn materialize(&mut self) {
        if self.materialized.is_none() {
            let all = (0..self.len()).map(|k| self.codeword(self.unflatten(k)).into_owned()).collect();
            self.materialized = Some(all);
        }
    }

    pub fn is_materialized(&self) -> bool {
        self.materialized.is_some()
    }

    /// All indices in flat order.
    pub fn indices(&self) -> impl Iterator<Item = Index3> + '_ {
        (0..self.len()).map(|k| self.unflatten(k))
    }

    /// Position of the zero curvature sample, if the curvature set holds it.
    pub fn zero_curvature_index(&self) -> Option<usize> {
        self.curvatures.iter().position(|&c| c == 0.0)
    }

    /// Grid point nearest to `params` (angles compared in sinθ).
    pub fn nearest(&self, params: &BeamParams) -> Index3 {
        let pick = |values: &[f64], target: f64, f: &dyn Fn(f64) -> f64| {
            values
                .iter()
                .enumerate()
                .min_by(|a, b| (f(*a.1) - target).abs().total_cmp(&(f(*b.1) - target).abs()))
                .map(|(k, _)| k)
                .unwrap_or(0)
        };
        (
            pick(&self.thetas, params.theta.sin(), &|t: f64| t.sin()),
            pick(&self.distances, params.r, &|r| r),
            pick(&self.curvatures, params.c, &|c| c),
        )
    }
}

/// Angle-only steering codebook with `L1 = N` beams uniform in sinθ over
/// `[−1, 1]`, matching the angle grid of an Airy codebook with the same L1.
pub fn build_dft_codebook(n_antennas: usize, kappa: f64, spacing: f64) -> Result<Codebook> {
    if n_antennas < 3 || n_antennas.is_multiple_of(2) {
        return Err(Error::Parameter(format!("antenna count must be odd and >= 3, got {n_antennas}")));
    }
    let thetas = (0..n_antennas).map(|k| uniform(-1.0, 1.0, k, n_antennas).clamp(-1.0, 1.0).asin()).collect();
    Ok(Codebook {
        thetas,
        distances: vec![f64::INFINITY],
        curvatures: vec![0.0],
        n_antennas,
        kappa,
        spacing,
        materialized: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const LAMBDA: f64 = 3e-3;

    fn kappa() -> f64 {
        2.0 * PI / LAMBDA
    }

    #[test]
    fn phase_at_center_is_zero() {
        let p = BeamParams::new(0.4, 1.3, -2.0);
        assert_eq!(airy_phase(0, &p, kappa(), 1.5e-3).unwrap(), 0.0);
    }

    #[test]
    fn phase_hand_value() {
        // κ = 2094.395, δ = 1.5 mm: κδ²/2 − (2π)³δ³/3
        let phi = airy_phase(1, &BeamParams::new(0.0, 1.0, 1.0), kappa(), 1.5e-3).unwrap();
        assert!((phi - 2.3559e-3).abs() < 1e-7, "{phi}");
    }

    #[test]
    fn steering_degeneracy() {
        let theta = 0.3;
        for n in -5..=5 {
            let phi = airy_phase(n, &BeamParams::steering(theta), kappa(), 1.5e-3).unwrap();
            assert!((phi + kappa() * n as f64 * 1.5e-3 * theta.sin()).abs() < 1e-12);
        }
    }

    #[test]
    fn nonpositive_distance_rejected() {
        assert!(matches!(airy_phase(1, &BeamParams::new(0.0, 0.0, 0.0), kappa(), 1e-3), Err(Error::Parameter(_))));
        assert!(matches!(airy_phase(1, &BeamParams::new(0.0, -1.0, 0.0), kappa(), 1e-3), Err(Error::Parameter(_))));
    }

    #[test]
    fn broadside_codeword_is_uniform() {
        let cw = make_codeword(BeamParams::steering(0.0), 31, kappa(), 1.5e-3).unwrap();
        let amp = 1.0 / 31f64.sqrt();
        assert!(cw.values.iter().all(|v| (v - Complex64::new(amp, 0.0)).norm() < 1e-15));
        assert!(make_codeword(BeamParams::steering(0.0), 32, kappa(), 1.5e-3).is_err());
    }

    #[test]
    fn mirrored_angle_conjugates_reversed_vector() {
        let a = make_codeword(BeamParams::steering(0.37), 21, kappa(), 1.5e-3).unwrap();
        let b = make_codeword(BeamParams::steering(-0.37), 21, kappa(), 1.5e-3).unwrap();
        for (k, v) in a.values.iter().enumerate() {
            // φ(n, −θ) = −φ(n, θ) = φ(−n, θ)
            assert!((b.values[k] - v.conj()).norm() < 1e-12);
            assert!((b.values[k] - a.values[20 - k]).norm() < 1e-12);
        }
    }

    #[test]
    fn full_codebook_size_and_midpoint_curvature() {
        let cb = Codebook::new(&CodebookSpec::standard(), 255, kappa(), LAMBDA / 2.0).unwrap();
        assert_eq!(cb.len(), 130_050);
        assert_eq!(cb.curvatures[25], 0.0);
        assert_eq!(cb.zero_curvature_index(), Some(25));
        assert!(!cb.is_materialized());
        let focus = Codebook::new(&CodebookSpec::standard().focusing(), 255, kappa(), LAMBDA / 2.0).unwrap();
        assert_eq!(focus.len(), 2550);
        assert_eq!(focus.curvatures, vec![0.0]);
    }

    #[test]
    fn inverted_ranges_rejected() {
        let mut spec = CodebookSpec::standard();
        spec.r_min = 6.0;
        assert!(matches!(Codebook::new(&spec, 255, kappa(), 1.5e-3), Err(Error::Parameter(_))));
        let mut spec = CodebookSpec::standard();
        spec.l1 = 1;
        assert!(Codebook::new(&spec, 255, kappa(), 1.5e-3).is_err());
    }

    #[test]
    fn sampling_follows_uniform_grids() {
        let cb = Codebook::new(&CodebookSpec::standard(), 255, kappa(), LAMBDA / 2.0).unwrap();
        assert!((cb.thetas[0] + FRAC_PI_2).abs() < 1e-12);
        assert!((cb.thetas[254] - FRAC_PI_2).abs() < 1e-12);
        assert_eq!(cb.thetas[127], 0.0);
        assert_eq!(cb.distances[0], 0.5);
        assert_eq!(cb.distances[9], 5.0);
        for w in cb.thetas.windows(2) {
            assert!((w[1].sin() - w[0].sin() - 2.0 / 254.0).abs() < 1e-12);
        }
    }

    #[test]
    fn dft_codebook_grid() {
        let dft = build_dft_codebook(255, kappa(), LAMBDA / 2.0).unwrap();
        assert_eq!(dft.dims(), (255, 1, 1));
        assert_eq!(dft.thetas[127], 0.0);
        let mid = dft.codeword((127, 0, 0));
        assert!(mid.values.iter().all(|v| (v.im).abs() < 1e-15 && (v.re - 1.0 / 255f64.sqrt()).abs() < 1e-15));
        for w in dft.thetas.windows(2) {
            assert!((w[1].sin() - w[0].sin() - 2.0 / 254.0).abs() < 1e-12);
        }
    }

    /// Brute-force Dirichlet-kernel check. With δ = λ/2 the grid endpoints
    /// sinθ = ±1 produce the same codeword; every other pair is nearly
    /// orthogonal.
    #[test]
    fn dft_codewords_nearly_orthogonal() {
        let spacing = LAMBDA / 2.0;
        let dft = build_dft_codebook(255, kappa(), spacing).unwrap();
        let words: Vec<Codeword> = (0..255).map(|l| dft.codeword((l, 0, 0)).into_owned()).collect();
        let mut worst: f64 = 0.0;
        for l in 0..255 {
            for m in (l + 1)..255 {
                let ip = words[l].inner(&words[m]).norm();
                if (l, m) == (0, 254) {
                    assert!((ip - 1.0).abs() < 1e-9);
                } else {
                    worst = worst.max(ip);
                }
            }
        }
        assert!(worst <= 0.22, "{worst}");
    }

    #[test]
    fn nearest_finds_grid_point() {
        let cb = Codebook::new(&CodebookSpec::over_standard_ranges(64, 8, 21), 255, kappa(), LAMBDA / 2.0).unwrap();
        let idx = cb.nearest(&BeamParams::new(-0.047, 1.589, -2.246));
        let p = cb.params(idx);
        assert!((p.theta - (-0.047)).abs() < 0.02);
        assert!((p.r - 1.786).abs() < 1e-3);
        assert!((p.c + 2.0).abs() < 1e-12);
    }

    #[test]
    fn materialized_codebook_matches_lazy() {
        let mut cb = Codebook::new(&CodebookSpec::over_standard_ranges(4, 3, 5), 15, kappa(), LAMBDA / 2.0).unwrap();
        let lazy: Vec<Codeword> = cb.indices().map(|i| cb.codeword(i).into_owned()).collect();
        cb.materialize();
        for (k, i) in cb.indices().enumerate() {
            assert_eq!(*cb.codeword(i), lazy[k]);
        }
    }

    proptest! {
        #[test]
        fn codewords_have_unit_norm(theta in -1.5f64..1.5, r in 0.2f64..10.0, c in -5.0f64..5.0) {
            let cw = make_codeword(BeamParams::new(theta, r, c), 63, kappa(), LAMBDA / 2.0).unwrap();
            prop_assert!((cw.norm() - 1.0).abs() < 1e-12);
            let amp = 1.0 / 63f64.sqrt();
            prop_assert!(cw.values.iter().all(|v| (v.norm() - amp).abs() < 1e-14));
        }

        #[test]
        fn degeneracy_chain(n in -127i64..=127, theta in -1.5f64..1.5, r in 0.2f64..10.0) {
            let d = LAMBDA / 2.0;
            let k = kappa();
            let airy0 = airy_phase(n, &BeamParams::new(theta, r, 0.0), k, d).unwrap();
            let focus = -k * n as f64 * d * theta.sin() + k * theta.cos().powi(2) / (2.0 * r) * (n as f64 * d).powi(2);
            prop_assert!((airy0 - focus).abs() <= 1e-9 * focus.abs().max(1.0));
            let steer = airy_phase(n, &BeamParams::new(theta, f64::INFINITY, 0.0), k, d).unwrap();
            prop_assert!((steer + k * n as f64 * d * theta.sin()).abs() <= 1e-9);
        }

        #[test]
        fn flat_index_round_trip(l1 in 0usize..7, l2 in 0usize..4, l3 in 0usize..5) {
            let cb = Codebook::new(&CodebookSpec::over_standard_ranges(7, 4, 5), 9, kappa(), LAMBDA / 2.0).unwrap();
            let flat = cb.flat_index((l1, l2, l3));
            prop_assert!(flat < cb.len());
            prop_assert_eq!(cb.unflatten(flat), (l1, l2, l3));
        }
    }
}
