//! Complex field computation from an aperture excitation.
//!
//! Three routes are provided:
//!
//! * [`direct_field`]: brute-force superposition with the point-source
//!   Rayleigh–Sommerfeld kernel `e^{−jκr}·x/(2πr²)·(jκ + 1/r)`.
//! * [`line_source_field`]: the same superposition with the exact
//!   two-dimensional kernel `−(jκx/2r)·H₁⁽²⁾(κr)`. Its spatial Fourier
//!   transform is the angular-spectrum transfer function, so this is the
//!   oracle the grid propagator is checked against.
//! * [`Propagator`]: FFT-based angular-spectrum marching with per-column
//!   blockage masks.
//!
//! The continuous aperture measure `dy₀` is discretized as the element
//! spacing δ in every route.

pub mod dump;
mod hankel;

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::codebook::Codeword;
use crate::scenario::{blockage_mask_row, GridSpec, ScenarioConfig};
use crate::{Error, Result};

pub use hankel::hankel2_1;

/// Per-element complex excitation in aperture order.
#[derive(Debug, Clone, PartialEq)]
pub struct ApertureField {
    pub values: Vec<Complex64>,
}

impl ApertureField {
    pub fn new(values: Vec<Complex64>) -> Self {
        Self { values }
    }

    pub fn zeros(n: usize) -> Self {
        Self { values: vec![Complex64::new(0.0, 0.0); n] }
    }

    pub fn energy(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum()
    }

    /// Grid row of the first element (n = (1−N)/2).
    pub fn embedding_row(&self, grid: &GridSpec) -> usize {
        let half = (self.values.len() as i64 - 1) / 2;
        grid.antenna_row(-half)
    }

    pub fn scaled(&self, a: Complex64) -> Self {
        Self { values: self.values.iter().map(|v| v * a).collect() }
    }

    pub fn plus(&self, other: &Self) -> Self {
        Self { values: self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect() }
    }
}

impl From<&Codeword> for ApertureField {
    fn from(cw: &Codeword) -> Self {
        Self { values: cw.values.clone() }
    }
}

/// One grid column of complex field values.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSlice {
    pub col: usize,
    pub x: f64,
    pub values: Vec<Complex64>,
}

impl FieldSlice {
    /// Σ|E|²·δy over the column.
    pub fn energy(&self, step_y: f64) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * step_y
    }
}

/// Received power |E|².
pub fn beam_gain(field_value: Complex64) -> f64 {
    field_value.norm_sqr()
}

fn check_oracle_inputs(aperture: &ApertureField, point: (f64, f64), config: &ScenarioConfig) -> Result<()> {
    if !config.obstacles.is_empty() {
        return Err(Error::UnsupportedOracle("free-space oracles cannot model obstacles".into()));
    }
    if !(point.0 > 0.0) {
        return Err(Error::Geometry(format!("observation point x = {} must be positive", point.0)));
    }
    if aperture.values.len() != config.n_antennas {
        return Err(Error::Parameter(format!(
            "aperture has {} elements, scenario has {}",
            aperture.values.len(),
            config.n_antennas
        )));
    }
    Ok(())
}

fn superpose(
    aperture: &ApertureField,
    point: (f64, f64),
    config: &ScenarioConfig,
    kernel: impl Fn(f64, f64) -> Complex64,
) -> Complex64 {
    let (x, y) = point;
    let half = config.half_count();
    let delta = config.antenna_spacing();
    aperture
        .values
        .iter()
        .zip(-half..=half)
        .map(|(e, n)| {
            let dy = y - n as f64 * delta;
            e * kernel(x, (dy * dy + x * x).sqrt())
        })
        .sum::<Complex64>()
        * delta
}

/// Point-source Rayleigh–Sommerfeld sum
/// `Σₙ E₀ₙ·e^{−jκrₙ}·x/(2πrₙ²)·(jκ + 1/rₙ)·δ`. Free space only.
pub fn direct_field(aperture: &ApertureField, point: (f64, f64), config: &ScenarioConfig) -> Result<Complex64> {
    check_oracle_inputs(aperture, point, config)?;
    let kappa = config.wavenumber();
    Ok(superpose(aperture, point, config, |x, r| {
        Complex64::from_polar(x / (2.0 * PI * r * r), -kappa * r) * Complex64::new(1.0 / r, kappa)
    }))
}

/// Two-dimensional Rayleigh–Sommerfeld sum with the line-source kernel
/// `−(jκx/2r)·H₁⁽²⁾(κr)`. Free space only.
pub fn line_source_field(aperture: &ApertureField, point: (f64, f64), config: &ScenarioConfig) -> Result<Complex64> {
    check_oracle_inputs(aperture, point, config)?;
    let kappa = config.wavenumber();
    Ok(superpose(aperture, point, config, |x, r| {
        Complex64::new(0.0, -kappa * x / (2.0 * r)) * hankel2_1(kappa * r)
    }))
}

/// Paraxial (Fresnel) approximation of the point-source sum,
/// `e^{−jκx}/(jλx)·Σₙ E₀ₙ·e^{−jκ(y−yₙ)²/(2x)}·δ`.
pub fn fresnel_field(aperture: &ApertureField, point: (f64, f64), config: &ScenarioConfig) -> Result<Complex64> {
    check_oracle_inputs(aperture, point, config)?;
    let (x, y) = point;
    let kappa = config.wavenumber();
    let lambda = config.wavelength();
    let half = config.half_count();
    let delta = config.antenna_spacing();
    let sum: Complex64 = aperture
        .values
        .iter()
        .zip(-half..=half)
        .map(|(e, n)| {
            let dy = y - n as f64 * delta;
            e * Complex64::from_polar(1.0, -kappa * dy * dy / (2.0 * x))
        })
        .sum();
    Ok(Complex64::from_polar(1.0, -kappa * x) / Complex64::new(0.0, lambda * x) * sum * delta)
}

/// Longitudinal wavenumber for cyclic spatial frequency `f_y`:
/// `κ√(1−λ²f²)` when propagating, `−jκ√(λ²f²−1)` when evanescent, so that
/// `H(Δx) = e^{−j·k_x·Δx}` always has magnitude ≤ 1.
fn longitudinal_wavenumber(f_y: f64, lambda: f64) -> Complex64 {
    let kappa = 2.0 * PI / lambda;
    let s2 = lambda * lambda * f_y * f_y;
    if s2 <= 1.0 {
        Complex64::new(kappa * (1.0 - s2).sqrt(), 0.0)
    } else {
        Complex64::new(0.0, -kappa * (s2 - 1.0).sqrt())
    }
}

/// Angular-spectrum transfer function over a step `dx`. Evanescent
/// frequencies decay as `e^{−κΔx√(λ²f²−1)}`.
pub fn transfer_function(f_y: f64, dx: f64, lambda: f64) -> Complex64 {
    (Complex64::new(0.0, -dx) * longitudinal_wavenumber(f_y, lambda)).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Evanescent {
    /// Keep evanescent components with their exponential decay.
    #[default]
    Decay,
    /// Discard evanescent components.
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Stepping {
    /// Jump across obstacle-free stretches in one transfer-function step.
    #[default]
    Collapsed,
    /// Step one column at a time everywhere.
    PerSlice,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagationOptions {
    pub evanescent: Evanescent,
    pub stepping: Stepping,
    /// Rows are zero-padded to the next power of two ≥ `padding_factor × rows`.
    pub padding_factor: usize,
}

impl Default for PropagationOptions {
    fn default() -> Self {
        Self { evanescent: Evanescent::Decay, stepping: Stepping::Collapsed, padding_factor: 2 }
    }
}

/// Which columns of a propagation run to return.
#[derive(Debug, Clone, PartialEq)]
pub enum Keep {
    AllSlices,
    Columns(Vec<usize>),
    /// Field at the grid cells nearest to these points.
    Probes(Vec<(f64, f64)>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum FieldOutput {
    Slices(Vec<FieldSlice>),
    Probes(Vec<Complex64>),
}

/// Angular-spectrum propagator bound to one scenario and grid.
///
/// Column `i` is obtained from column `i−1` as
/// `B(xᵢ,·) ⊙ IFFT(FFT(E(xᵢ₋₁,·))·H(f_y, δx))`. Columns whose mask is all
/// ones leave the spectrum untouched, so with [`Stepping::Collapsed`] any
/// such column is computed directly from the last masked column's spectrum
/// with `H(f_y, k·δx)`. Zero padding is stripped after every masked column.
pub struct Propagator {
    config: ScenarioConfig,
    grid: GridSpec,
    options: PropagationOptions,
    fft_len: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    scratch_len: usize,
    /// Complex longitudinal wavenumber per FFT bin (zero-mode bins flagged).
    kx: Vec<Complex64>,
    dropped: Vec<bool>,
    step: Vec<Complex64>,
    column_mask: Vec<Option<usize>>,
    masks: Vec<Vec<f64>>,
}

impl std::fmt::Debug for Propagator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Propagator")
            .field("grid", &self.grid)
            .field("options", &self.options)
            .field("fft_len", &self.fft_len)
            .field("masked_columns", &self.column_mask.iter().filter(|m| m.is_some()).count())
            .finish()
    }
}

impl Propagator {
    pub fn new(config: &ScenarioConfig, grid: &GridSpec) -> Result<Self> {
        Self::with_options(config, grid, PropagationOptions::default())
    }

    pub fn with_options(config: &ScenarioConfig, grid: &GridSpec, options: PropagationOptions) -> Result<Self> {
        config.validate()?;
        if options.padding_factor < 1 {
            return Err(Error::Parameter("padding factor must be at least 1".into()));
        }
        let fft_len = (grid.rows * options.padding_factor).next_power_of_two();
        let mut planner = FftPlanner::<f64>::new();
        let forward = planner.plan_fft_forward(fft_len);
        let inverse = planner.plan_fft_inverse(fft_len);
        let scratch_len = forward.get_inplace_scratch_len().max(inverse.get_inplace_scratch_len());

        let lambda = config.wavelength();
        let df = 1.0 / (fft_len as f64 * grid.step_y);
        let mut kx = Vec::with_capacity(fft_len);
        let mut dropped = Vec::with_capacity(fft_len);
        for m in 0..fft_len {
            let signed = if m < fft_len / 2 { m as f64 } else { m as f64 - fft_len as f64 };
            let f = signed * df;
            kx.push(longitudinal_wavenumber(f, lambda));
            dropped.push(options.evanescent == Evanescent::Zero && (lambda * f).powi(2) > 1.0);
        }

        let mut prop = Self {
            config: config.clone(),
            grid: *grid,
            options,
            fft_len,
            forward,
            inverse,
            scratch_len,
            kx,
            dropped,
            step: Vec::new(),
            column_mask: vec![None; grid.cols],
            masks: Vec::new(),
        };
        prop.step = prop.transfer(1);

        for col in 0..grid.cols {
            let x = grid.x(col);
            let touched = config.obstacles.iter().any(|o| {
                let (x0, x1) = o.x_range();
                x >= x0 - 1e-9 && x <= x1 + 1e-9
            });
            if !touched {
                continue;
            }
            let row = blockage_mask_row(config, grid, col);
            if row.iter().all(|&v| v == 1.0) {
                continue;
            }
            let id = match prop.masks.iter().position(|m| *m == row) {
                Some(id) => id,
                None => {
                    prop.masks.push(row);
                    prop.masks.len() - 1
                }
            };
            prop.column_mask[col] = Some(id);
        }
        Ok(prop)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn fft_len(&self) -> usize {
        self.fft_len
    }

    /// Number of columns carrying a non-trivial mask.
    pub fn masked_columns(&self) -> usize {
        self.column_mask.iter().filter(|m| m.is_some()).count()
    }

    /// H over `k` column steps, per FFT bin.
    fn transfer(&self, k: usize) -> Vec<Complex64> {
        let dx = k as f64 * self.grid.step_x;
        self.kx
            .iter()
            .zip(&self.dropped)
            .map(|(kx, &drop)| if drop { Complex64::new(0.0, 0.0) } else { (Complex64::new(0.0, -dx) * kx).exp() })
            .collect()
    }

    fn check_aperture(&self, aperture: &ApertureField) -> Result<()> {
        if aperture.values.len() != self.config.n_antennas {
            return Err(Error::Parameter(format!(
                "aperture has {} elements, scenario has {}",
                aperture.values.len(),
                self.config.n_antennas
            )));
        }
        if aperture.values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::Input("aperture contains non-finite values".into()));
        }
        Ok(())
    }

    /// Marches from x = 0 to the last wanted column, handing each wanted
    /// column (in increasing order) to `sink`.
    pub fn march<F>(&self, aperture: &ApertureField, wanted: &[usize], mut sink: F) -> Result<()>
    where
        F: FnMut(usize, &[Complex64]),
    {
        self.check_aperture(aperture)?;
        let mut wanted: Vec<usize> = wanted.to_vec();
        wanted.sort_unstable();
        wanted.dedup();
        let Some(&last) = wanted.last() else {
            return Ok(());
        };
        if last >= self.grid.cols {
            return Err(Error::Geometry(format!("column {last} outside the grid ({} columns)", self.grid.cols)));
        }

        let m = self.fft_len;
        let rows = self.grid.rows;
        let zero = Complex64::new(0.0, 0.0);
        let inv_m = 1.0 / m as f64;
        let mut scratch = vec![zero; self.scratch_len];
        let mut spectrum = vec![zero; m];
        let mut work = vec![zero; m];

        // Element values carry the measure δ; a finer row step needs the
        // matching weight so that Σ·δy reproduces Σ·δ.
        let weight = self.grid.rows_per_element as f64;
        let half = self.config.half_count();
        for (e, n) in aperture.values.iter().zip(-half..=half) {
            spectrum[self.grid.antenna_row(n)] = e * weight;
        }
        if let Some(id) = self.column_mask[0] {
            for (v, a) in spectrum.iter_mut().zip(&self.masks[id]) {
                *v *= a;
            }
        }
        let mut next = 0;
        if wanted[0] == 0 {
            sink(0, &spectrum[..rows]);
            next = 1;
        }
        if next == wanted.len() {
            return Ok(());
        }
        self.forward.process_with_scratch(&mut spectrum, &mut scratch);
        let mut anchor = 0usize;
        let per_slice = self.options.stepping == Stepping::PerSlice;

        for col in 1..=last {
            let is_wanted = wanted[next] == col;
            match self.column_mask[col] {
                Some(id) => {
                    let h = if col - anchor == 1 { None } else { Some(self.transfer(col - anchor)) };
                    let h = h.as_deref().unwrap_or(&self.step);
                    for ((w, s), t) in work.iter_mut().zip(&spectrum).zip(h) {
                        *w = s * t;
                    }
                    self.inverse.process_with_scratch(&mut work, &mut scratch);
                    for (w, a) in work[..rows].iter_mut().zip(&self.masks[id]) {
                        *w *= a * inv_m;
                    }
                    work[rows..].fill(zero);
                    if is_wanted {
                        sink(col, &work[..rows]);
                    }
                    std::mem::swap(&mut spectrum, &mut work);
                    self.forward.process_with_scratch(&mut spectrum, &mut scratch);
                    anchor = col;
                }
                None => {
                    if per_slice {
                        for (s, t) in spectrum.iter_mut().zip(&self.step) {
                            *s *= t;
                        }
                        anchor = col;
                    }
                    if is_wanted {
                        if anchor == col {
                            work.copy_from_slice(&spectrum);
                        } else {
                            let h = self.transfer(col - anchor);
                            for ((w, s), t) in work.iter_mut().zip(&spectrum).zip(&h) {
                                *w = s * t;
                            }
                        }
                        self.inverse.process_with_scratch(&mut work, &mut scratch);
                        for w in work[..rows].iter_mut() {
                            *w *= inv_m;
                        }
                        sink(col, &work[..rows]);
                    }
                }
            }
            if is_wanted {
                next += 1;
                if next == wanted.len() {
                    break;
                }
            }
        }
        Ok(())
    }

    pub fn slices(&self, aperture: &ApertureField, columns: &[usize]) -> Result<Vec<FieldSlice>> {
        let mut out = Vec::with_capacity(columns.len());
        self.march(aperture, columns, |col, values| {
            out.push(FieldSlice { col, x: self.grid.x(col), values: values.to_vec() })
        })?;
        Ok(out)
    }

    pub fn all_slices(&self, aperture: &ApertureField) -> Result<Vec<FieldSlice>> {
        let columns: Vec<usize> = (0..self.grid.cols).collect();
        self.slices(aperture, &columns)
    }

    /// Grid cells of `points`, or a geometry error for any point off-grid.
    pub fn probe_cells(&self, points: &[(f64, f64)]) -> Result<Vec<(usize, usize)>> {
        points
            .iter()
            .map(|&(x, y)| {
                self.grid
                    .index_of(x, y)
                    .ok_or_else(|| Error::Geometry(format!("probe ({x}, {y}) lies outside the grid")))
            })
            .collect()
    }

    /// Field at already-resolved grid cells.
    pub fn at_cells(&self, aperture: &ApertureField, cells: &[(usize, usize)]) -> Result<Vec<Complex64>> {
        let columns: Vec<usize> = cells.iter().map(|c| c.0).collect();
        let mut out = vec![Complex64::new(0.0, 0.0); cells.len()];
        let mut order: Vec<usize> = (0..cells.len()).collect();
        order.sort_by_key(|&k| cells[k].0);
        let mut cursor = 0;
        self.march(aperture, &columns, |col, values| {
            while cursor < order.len() && cells[order[cursor]].0 == col {
                out[order[cursor]] = values[cells[order[cursor]].1];
                cursor += 1;
            }
        })?;
        Ok(out)
    }

    pub fn probes(&self, aperture: &ApertureField, points: &[(f64, f64)]) -> Result<Vec<Complex64>> {
        let cells = self.probe_cells(points)?;
        self.at_cells(aperture, &cells)
    }

    pub fn run(&self, aperture: &ApertureField, keep: &Keep) -> Result<FieldOutput> {
        Ok(match keep {
            Keep::AllSlices => FieldOutput::Slices(self.all_slices(aperture)?),
            Keep::Columns(cols) => FieldOutput::Slices(self.slices(aperture, cols)?),
            Keep::Probes(points) => FieldOutput::Probes(self.probes(aperture, points)?),
        })
    }
}

/// One-shot propagation with default options.
pub fn propagate(aperture: &ApertureField, config: &ScenarioConfig, grid: &GridSpec, keep: &Keep) -> Result<FieldOutput> {
    Propagator::new(config, grid)?.run(aperture, keep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codebook::{make_codeword, BeamParams};
    use crate::scenario::{build_grid, Obstacle, Region};

    fn small_config(n: usize) -> ScenarioConfig {
        ScenarioConfig::free_space(100e9, n, Region { x_min: 0.0, x_max: 0.6, y_min: -0.3, y_max: 0.3 })
    }

    fn single_element(config: &ScenarioConfig) -> ApertureField {
        let mut ap = ApertureField::zeros(config.n_antennas);
        ap.values[config.n_antennas / 2] = Complex64::new(1.0, 0.0);
        ap
    }

    #[test]
    fn direct_field_single_element_on_axis() {
        let config = small_config(1);
        let (x, kappa, delta) = (0.7, config.wavenumber(), config.antenna_spacing());
        let e = direct_field(&single_element(&config), (x, 0.0), &config).unwrap();
        let expected = Complex64::from_polar(1.0 / (2.0 * PI * x), -kappa * x) * Complex64::new(1.0 / x, kappa) * delta;
        assert!((e - expected).norm() < 1e-14 * expected.norm());
    }

    #[test]
    fn oracles_vanish_for_zero_aperture() {
        let config = small_config(31);
        let zeros = ApertureField::zeros(31);
        assert_eq!(direct_field(&zeros, (0.5, 0.1), &config).unwrap(), Complex64::new(0.0, 0.0));
        assert_eq!(fresnel_field(&zeros, (0.5, 0.1), &config).unwrap(), Complex64::new(0.0, 0.0));
        assert_eq!(line_source_field(&zeros, (0.5, 0.1), &config).unwrap(), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn oracle_errors() {
        let config = small_config(31);
        let ap = single_element(&config);
        assert!(matches!(direct_field(&ap, (0.0, 0.1), &config), Err(Error::Geometry(_))));
        assert!(matches!(fresnel_field(&ap, (-1.0, 0.1), &config), Err(Error::Geometry(_))));
        let blocked = config.clone().with_obstacles(vec![Obstacle::new((0.3, 0.0), (0.1, 0.1), 0.0)]);
        assert!(matches!(direct_field(&ap, (0.5, 0.0), &blocked), Err(Error::UnsupportedOracle(_))));
    }

    #[test]
    fn fresnel_single_element_magnitude() {
        let config = small_config(1);
        let x = 0.9;
        let e = fresnel_field(&single_element(&config), (x, 0.0), &config).unwrap();
        let expected = config.antenna_spacing() / (config.wavelength() * x);
        assert!((e.norm() - expected).abs() < 1e-14);
    }

    #[test]
    fn transfer_function_branches() {
        let lambda = 3e-3;
        let kappa = 2.0 * PI / lambda;
        let dx = 0.01;
        let h0 = transfer_function(0.0, dx, lambda);
        assert!((h0 - Complex64::from_polar(1.0, -kappa * dx)).norm() < 1e-12);
        let h1 = transfer_function(1.0 / lambda, dx, lambda);
        assert!((h1 - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        // λ²f² = 2 and κΔx = 1 give e^{−1}
        let he = transfer_function(2f64.sqrt() / lambda, 1.0 / kappa, lambda);
        assert!((he.re - (-1f64).exp()).abs() < 1e-12 && he.im.abs() < 1e-15);
    }

    #[test]
    fn beam_gain_values() {
        assert_eq!(beam_gain(Complex64::new(0.0, 0.0)), 0.0);
        assert!((beam_gain(Complex64::new(1.0, 1.0)) - 2.0).abs() < 1e-15);
        for phi in [0.0, 0.3, 2.0, -4.0] {
            assert!((beam_gain(Complex64::from_polar(1.0, phi)) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn full_width_wall_blocks_everything_downstream() {
        let mut config = small_config(63);
        config.obstacles = vec![Obstacle::new((0.3, 0.0), (0.01, 0.6), 0.0)];
        let grid = build_grid(&config).unwrap();
        let prop = Propagator::new(&config, &grid).unwrap();
        let cw = make_codeword(BeamParams::steering(0.1), 63, config.wavenumber(), config.antenna_spacing()).unwrap();
        let after = grid.index_of(0.45, 0.0).unwrap().0;
        let slices = prop.slices(&(&cw).into(), &[after, grid.cols - 1]).unwrap();
        for s in slices {
            assert!(s.values.iter().all(|v| v.norm() == 0.0));
        }
    }

    #[test]
    fn partial_attenuation_reduces_energy() {
        let free = small_config(63);
        let mut blocked = free.clone();
        blocked.obstacles = vec![Obstacle::new((0.2, 0.0), (0.003, 0.1), 0.5)];
        let grid = build_grid(&free).unwrap();
        let cw = make_codeword(BeamParams::focusing(0.0, 0.5), 63, free.wavenumber(), free.antenna_spacing()).unwrap();
        let col = grid.index_of(0.5, 0.0).unwrap().0;
        let e_free = Propagator::new(&free, &grid).unwrap().slices(&(&cw).into(), &[col]).unwrap()[0].energy(grid.step_y);
        let e_blocked = Propagator::new(&blocked, &grid).unwrap().slices(&(&cw).into(), &[col]).unwrap()[0].energy(grid.step_y);
        assert!(e_blocked < e_free, "{e_blocked} vs {e_free}");
    }

    #[test]
    fn probe_outside_grid_is_rejected() {
        let config = small_config(31);
        let grid = build_grid(&config).unwrap();
        let prop = Propagator::new(&config, &grid).unwrap();
        let err = prop.probes(&single_element(&config), &[(0.7, 0.0)]);
        assert!(matches!(err, Err(Error::Geometry(_))));
    }

    #[test]
    fn collapsed_equals_per_slice_in_free_space() {
        let config = small_config(63);
        let grid = build_grid(&config).unwrap();
        let collapsed = Propagator::new(&config, &grid).unwrap();
        let stepped = Propagator::with_options(
            &config,
            &grid,
            PropagationOptions { stepping: Stepping::PerSlice, ..Default::default() },
        )
        .unwrap();
        let cw = make_codeword(BeamParams::new(0.2, 0.4, 1.5), 63, config.wavenumber(), config.antenna_spacing()).unwrap();
        let cols = [57, 200, grid.cols - 1];
        let a = collapsed.slices(&(&cw).into(), &cols).unwrap();
        let b = stepped.slices(&(&cw).into(), &cols).unwrap();
        for (sa, sb) in a.iter().zip(&b) {
            let peak = sa.values.iter().map(|v| v.norm()).fold(0.0, f64::max);
            for (va, vb) in sa.values.iter().zip(&sb.values) {
                assert!((va - vb).norm() <= 1e-8 * peak);
            }
        }
    }

    #[test]
    fn masked_march_matches_per_slice_reference() {
        let mut config = small_config(63);
        config.obstacles = vec![Obstacle::new((0.2, 0.05), (0.02, 0.08), 0.0)];
        let grid = build_grid(&config).unwrap();
        let collapsed = Propagator::new(&config, &grid).unwrap();
        let stepped = Propagator::with_options(
            &config,
            &grid,
            PropagationOptions { stepping: Stepping::PerSlice, ..Default::default() },
        )
        .unwrap();
        assert!(collapsed.masked_columns() > 0);
        let cw = make_codeword(BeamParams::focusing(0.1, 0.4), 63, config.wavenumber(), config.antenna_spacing()).unwrap();
        let col = grid.cols - 1;
        let a = &collapsed.slices(&(&cw).into(), &[col]).unwrap()[0];
        let b = &stepped.slices(&(&cw).into(), &[col]).unwrap()[0];
        let peak = a.values.iter().map(|v| v.norm()).fold(0.0, f64::max);
        assert!(a.values.iter().zip(&b.values).all(|(va, vb)| (va - vb).norm() <= 1e-8 * peak));
    }
}
