//! Scene description and its rasterization onto the simulation grid.
//!
//! The aperture lies on the y-axis at x = 0 with antenna `n` at `(0, n·δ)`
//! for `n ∈ {(1−N)/2, …, (N−1)/2}`. The grid lattice is anchored at the
//! origin: column `i` sits at `x = i·δx` and row `j` at
//! `y = (row_origin + j)·δy`, so every antenna falls exactly on a row.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Error, Result, SPEED_OF_LIGHT};

/// Slack used for closed-boundary tests and lattice rounding, in units of
/// the relevant length.
const EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Region {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x_min - EPS && x <= self.x_max + EPS && y >= self.y_min - EPS && y <= self.y_max + EPS
    }
}

/// Axis-aligned rectangular blocker.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Obstacle {
    pub center: (f64, f64),
    pub dims: (f64, f64),
    /// Amplitude transmission inside the rectangle, in `[0, 1)`.
    pub attenuation: f64,
}

impl Obstacle {
    pub fn new(center: (f64, f64), dims: (f64, f64), attenuation: f64) -> Self {
        Self { center, dims, attenuation }
    }

    pub fn x_range(&self) -> (f64, f64) {
        (self.center.0 - self.dims.0 / 2.0, self.center.0 + self.dims.0 / 2.0)
    }

    pub fn y_range(&self) -> (f64, f64) {
        (self.center.1 - self.dims.1 / 2.0, self.center.1 + self.dims.1 / 2.0)
    }

    /// Closed-rectangle containment.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (x0, x1) = self.x_range();
        let (y0, y1) = self.y_range();
        x >= x0 - EPS && x <= x1 + EPS && y >= y0 - EPS && y <= y1 + EPS
    }

    /// Exact slab test of the segment `a → b` against the closed rectangle.
    pub fn intersects_segment(&self, a: (f64, f64), b: (f64, f64)) -> bool {
        let (x0, x1) = self.x_range();
        let (y0, y1) = self.y_range();
        let mut t_enter = 0.0_f64;
        let mut t_exit = 1.0_f64;
        for (start, delta, lo, hi) in [(a.0, b.0 - a.0, x0, x1), (a.1, b.1 - a.1, y0, y1)] {
            if delta.abs() < f64::MIN_POSITIVE {
                if start < lo - EPS || start > hi + EPS {
                    return false;
                }
                continue;
            }
            let mut t0 = (lo - EPS - start) / delta;
            let mut t1 = (hi + EPS - start) / delta;
            if t0 > t1 {
                std::mem::swap(&mut t0, &mut t1);
            }
            t_enter = t_enter.max(t0);
            t_exit = t_exit.min(t1);
            if t_enter > t_exit {
                return false;
            }
        }
        true
    }

    /// Copy of the obstacle scaled about its center.
    pub fn dilated(&self, factor: f64) -> Self {
        Self { dims: (self.dims.0 * factor, self.dims.1 * factor), ..*self }
    }
}

/// Full physical setup of one simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub frequency_hz: f64,
    /// Odd number of array elements.
    pub n_antennas: usize,
    pub region: Region,
    pub obstacles: Vec<Obstacle>,
    /// Attenuation applied to obstacles that do not specify their own.
    pub default_attenuation: f64,
    /// Grid steps; `None` means λ/2.
    pub grid_step_x: Option<f64>,
    pub grid_step_y: Option<f64>,
}

impl ScenarioConfig {
    /// The simulation setup of the evaluation section: 100 GHz, 255
    /// elements, receiver region x ∈ (0.5, 4), y ∈ (−2, 2) and a 0.2 m square
    /// opaque obstacle centered at (0.5, 0).
    pub fn standard() -> Self {
        Self {
            frequency_hz: 100e9,
            n_antennas: 255,
            region: Region { x_min: 0.0, x_max: 4.0, y_min: -2.0, y_max: 2.0 },
            obstacles: vec![Obstacle::new((0.5, 0.0), (0.2, 0.2), 0.0)],
            default_attenuation: 0.0,
            grid_step_x: None,
            grid_step_y: None,
        }
    }

    pub fn free_space(frequency_hz: f64, n_antennas: usize, region: Region) -> Self {
        Self {
            frequency_hz,
            n_antennas,
            region,
            obstacles: Vec::new(),
            default_attenuation: 0.0,
            grid_step_x: None,
            grid_step_y: None,
        }
    }

    pub fn with_obstacles(mut self, obstacles: Vec<Obstacle>) -> Self {
        self.obstacles = obstacles;
        self
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.frequency_hz
    }

    /// κ = 2π/λ.
    pub fn wavenumber(&self) -> f64 {
        2.0 * PI / self.wavelength()
    }

    /// Element spacing δ = λ/2.
    pub fn antenna_spacing(&self) -> f64 {
        self.wavelength() / 2.0
    }

    /// Aperture length L = (N−1)δ.
    pub fn aperture(&self) -> f64 {
        (self.n_antennas as f64 - 1.0) * self.antenna_spacing()
    }

    pub fn step_x(&self) -> f64 {
        self.grid_step_x.unwrap_or_else(|| self.antenna_spacing())
    }

    pub fn step_y(&self) -> f64 {
        self.grid_step_y.unwrap_or_else(|| self.antenna_spacing())
    }

    /// Largest antenna index, (N−1)/2.
    pub fn half_count(&self) -> i64 {
        (self.n_antennas as i64 - 1) / 2
    }

    /// Antenna indices in aperture order, `(1−N)/2 ..= (N−1)/2`.
    pub fn antenna_indices(&self) -> impl Iterator<Item = i64> {
        let h = self.half_count();
        -h..=h
    }

    pub fn antenna_y(&self, n: i64) -> f64 {
        n as f64 * self.antenna_spacing()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.frequency_hz.is_finite() && self.frequency_hz > 0.0) {
            return Err(Error::Parameter(format!("carrier frequency must be positive, got {}", self.frequency_hz)));
        }
        if self.n_antennas == 0 || self.n_antennas.is_multiple_of(2) {
            return Err(Error::Parameter(format!("antenna count must be positive and odd, got {}", self.n_antennas)));
        }
        if !(0.0..1.0).contains(&self.default_attenuation) {
            return Err(Error::Parameter(format!("default attenuation {} outside [0, 1)", self.default_attenuation)));
        }
        let r = &self.region;
        if !(r.x_max > r.x_min && r.y_max > r.y_min) || ![r.x_min, r.x_max, r.y_min, r.y_max].iter().all(|v| v.is_finite()) {
            return Err(Error::Geometry(format!("region is empty or inverted: {r:?}")));
        }
        if r.x_min.abs() > EPS {
            return Err(Error::Geometry(format!("region must start at the aperture plane x = 0, got x_min = {}", r.x_min)));
        }
        for (k, ob) in self.obstacles.iter().enumerate() {
            if !(ob.dims.0 > 0.0 && ob.dims.1 > 0.0) {
                return Err(Error::Geometry(format!("obstacle {k}: dimensions must be positive, got {:?}", ob.dims)));
            }
            if !(0.0..1.0).contains(&ob.attenuation) {
                return Err(Error::Parameter(format!("obstacle {k}: attenuation {} outside [0, 1)", ob.attenuation)));
            }
            let (x0, x1) = ob.x_range();
            let (y0, y1) = ob.y_range();
            if !(r.contains(x0, y0) && r.contains(x1, y1)) {
                return Err(Error::Geometry(format!("obstacle {k} extends outside the region")));
            }
        }
        Ok(())
    }

    /// Stable hash of the physical setup, used to tie datasets to scenes.
    pub fn hash_hex(&self) -> String {
        let json = serde_json::to_string(&ScenarioFile::from(self)).expect("scenario serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let file: ScenarioFile = serde_json::from_str(s)?;
        let config = Self::from(file);
        config.validate()?;
        Ok(config)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&ScenarioFile::from(self)).expect("scenario serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }
}

/// On-disk scenario JSON. All lengths in meters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioFile {
    pub frequency_hz: f64,
    pub n_antennas: usize,
    pub region: Region,
    #[serde(default)]
    pub obstacles: Vec<ObstacleFile>,
    #[serde(default)]
    pub attenuation_default: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_step_x: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_step_y: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObstacleFile {
    pub cx: f64,
    pub cy: f64,
    pub dx: f64,
    pub dy: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attenuation: Option<f64>,
}

impl From<ScenarioFile> for ScenarioConfig {
    fn from(f: ScenarioFile) -> Self {
        let default = f.attenuation_default;
        Self {
            frequency_hz: f.frequency_hz,
            n_antennas: f.n_antennas,
            region: f.region,
            obstacles: f
                .obstacles
                .iter()
                .map(|o| Obstacle::new((o.cx, o.cy), (o.dx, o.dy), o.attenuation.unwrap_or(default)))
                .collect(),
            default_attenuation: default,
            grid_step_x: f.grid_step_x,
            grid_step_y: f.grid_step_y,
        }
    }
}

impl From<&ScenarioConfig> for ScenarioFile {
    fn from(c: &ScenarioConfig) -> Self {
        Self {
            frequency_hz: c.frequency_hz,
            n_antennas: c.n_antennas,
            region: c.region,
            obstacles: c
                .obstacles
                .iter()
                .map(|o| ObstacleFile {
                    cx: o.center.0,
                    cy: o.center.1,
                    dx: o.dims.0,
                    dy: o.dims.1,
                    attenuation: Some(o.attenuation),
                })
                .collect(),
            attenuation_default: c.default_attenuation,
            grid_step_x: c.grid_step_x,
            grid_step_y: c.grid_step_y,
        }
    }
}

/// Discretized simulation lattice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub cols: usize,
    pub rows: usize,
    pub step_x: f64,
    pub step_y: f64,
    /// Lattice index (in units of `step_y`) of row 0.
    pub row_origin: i64,
    /// Rows per antenna spacing (δ / δy, an integer ≥ 1).
    pub rows_per_element: usize,
}

impl GridSpec {
    pub fn x(&self, col: usize) -> f64 {
        col as f64 * self.step_x
    }

    pub fn y(&self, row: usize) -> f64 {
        (self.row_origin + row as i64) as f64 * self.step_y
    }

    /// Nearest cell to `(x, y)`, or `None` outside the grid.
    pub fn index_of(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let col = (x / self.step_x).round();
        let row = (y / self.step_y).round() - self.row_origin as f64;
        if col < 0.0 || row < 0.0 || col >= self.cols as f64 || row >= self.rows as f64 {
            return None;
        }
        Some((col as usize, row as usize))
    }

    /// Cell center nearest to `(x, y)`.
    pub fn snap(&self, x: f64, y: f64) -> Option<(f64, f64)> {
        self.index_of(x, y).map(|(c, r)| (self.x(c), self.y(r)))
    }

    /// Row holding antenna `n`.
    pub fn antenna_row(&self, n: i64) -> usize {
        (n * self.rows_per_element as i64 - self.row_origin) as usize
    }
}

/// Rasterizes the scenario region onto an origin-anchored lattice.
///
/// Columns run over `x = 0, δx, …` up to `x_max` (`floor(x_max/δx) + 1`
/// columns). Rows cover every lattice line `j·δy` inside `[y_min, y_max]`.
pub fn build_grid(config: &ScenarioConfig) -> Result<GridSpec> {
    config.validate()?;
    let half_lambda = config.wavelength() / 2.0;
    let (sx, sy) = (config.step_x(), config.step_y());
    for (name, step) in [("x", sx), ("y", sy)] {
        if !(step.is_finite() && step > 0.0) {
            return Err(Error::Sampling(format!("grid step along {name} must be positive, got {step}")));
        }
        if step > half_lambda * (1.0 + 1e-12) {
            return Err(Error::Sampling(format!(
                "grid step along {name} ({step:.6e} m) exceeds half a wavelength ({half_lambda:.6e} m)"
            )));
        }
    }
    let ratio = config.antenna_spacing() / sy;
    let rows_per_element = ratio.round();
    if (ratio - rows_per_element).abs() > 1e-9 * ratio {
        return Err(Error::Sampling(format!(
            "antenna spacing must be an integer multiple of the row step, got ratio {ratio}"
        )));
    }
    let rows_per_element = rows_per_element as usize;

    let r = &config.region;
    let cols = ((r.x_max - 0.0) / sx + EPS).floor() as usize + 1;
    let j_lo = (r.y_min / sy - EPS).ceil() as i64;
    let j_hi = (r.y_max / sy + EPS).floor() as i64;
    if j_hi < j_lo || cols < 2 {
        return Err(Error::Geometry(format!("region {r:?} holds no grid cells")));
    }
    let grid = GridSpec {
        cols,
        rows: (j_hi - j_lo + 1) as usize,
        step_x: sx,
        step_y: sy,
        row_origin: j_lo,
        rows_per_element,
    };
    let h = config.half_count() * rows_per_element as i64;
    if -h < j_lo || h > j_hi {
        return Err(Error::Geometry("aperture extends beyond the grid's y-range".into()));
    }
    Ok(grid)
}

/// Attenuation multipliers for grid column `x_index`. Cells inside any
/// obstacle take the smallest containing attenuation; all others are 1.
pub fn blockage_mask_row(config: &ScenarioConfig, grid: &GridSpec, x_index: usize) -> Vec<f64> {
    let x = grid.x(x_index);
    let active: Vec<&Obstacle> = config
        .obstacles
        .iter()
        .filter(|o| {
            let (x0, x1) = o.x_range();
            x >= x0 - EPS && x <= x1 + EPS
        })
        .collect();
    (0..grid.rows)
        .map(|row| {
            let y = grid.y(row);
            active.iter().filter(|o| o.contains(x, y)).map(|o| o.attenuation).fold(1.0, f64::min)
        })
        .collect()
}

/// Fraction of the array elements whose straight path to `receiver` crosses
/// an obstacle (touching counts as blocked).
pub fn blockage_ratio(config: &ScenarioConfig, receiver: (f64, f64)) -> Result<f64> {
    if !(receiver.0 > 0.0) {
        return Err(Error::Geometry(format!("receiver x = {} is not in front of the aperture", receiver.0)));
    }
    if !config.region.contains(receiver.0, receiver.1) {
        return Err(Error::Geometry(format!("receiver {receiver:?} outside the region")));
    }
    if config.obstacles.is_empty() {
        return Ok(0.0);
    }
    let blocked = config
        .antenna_indices()
        .filter(|&n| {
            let a = (0.0, config.antenna_y(n));
            config.obstacles.iter().any(|o| o.intersects_segment(a, receiver))
        })
        .count();
    Ok(blocked as f64 / config.n_antennas as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scenario_with(obstacles: Vec<Obstacle>) -> ScenarioConfig {
        ScenarioConfig::standard().with_obstacles(obstacles)
    }

    #[test]
    fn standard_grid_dimensions() {
        let config = scenario_with(vec![]);
        let grid = build_grid(&config).unwrap();
        // 4 m / 1.499 mm = 2668.5 lattice steps
        assert_eq!(grid.rows, 2669);
        assert_eq!(grid.cols, 2669);
        assert_eq!(grid.y(grid.antenna_row(0)), 0.0);
    }

    #[test]
    fn antennas_occupy_consecutive_rows() {
        let config = scenario_with(vec![]);
        let grid = build_grid(&config).unwrap();
        let rows: Vec<usize> = config.antenna_indices().map(|n| grid.antenna_row(n)).collect();
        assert_eq!(rows.len(), 255);
        assert!(rows.windows(2).all(|w| w[1] == w[0] + 1));
        for n in config.antenna_indices() {
            assert!((grid.y(grid.antenna_row(n)) - config.antenna_y(n)).abs() < 1e-12);
        }
    }

    #[test]
    fn coarse_step_is_a_sampling_violation() {
        let mut config = scenario_with(vec![]);
        config.grid_step_y = Some(config.wavelength());
        assert!(matches!(build_grid(&config), Err(Error::Sampling(_))));
    }

    #[test]
    fn empty_region_is_a_geometry_error() {
        let mut config = scenario_with(vec![]);
        config.region.y_max = config.region.y_min;
        assert!(matches!(build_grid(&config), Err(Error::Geometry(_))));
    }

    #[test]
    fn mask_row_without_obstacles_is_ones() {
        let config = scenario_with(vec![]);
        let grid = build_grid(&config).unwrap();
        assert!(blockage_mask_row(&config, &grid, 300).iter().all(|&v| v == 1.0));
    }

    #[test]
    fn mask_row_through_default_obstacle() {
        let config = ScenarioConfig::standard();
        let grid = build_grid(&config).unwrap();
        let col = grid.index_of(0.5, 0.0).unwrap().0;
        let row = blockage_mask_row(&config, &grid, col);
        for (j, &v) in row.iter().enumerate() {
            let y = grid.y(j);
            if y.abs() <= 0.1 {
                assert_eq!(v, 0.0, "y = {y}");
            } else {
                assert_eq!(v, 1.0, "y = {y}");
            }
        }
        let outside = grid.index_of(0.62, 0.0).unwrap().0;
        assert!(blockage_mask_row(&config, &grid, outside).iter().all(|&v| v == 1.0));
    }

    #[test]
    fn overlapping_obstacles_take_most_opaque() {
        let config = scenario_with(vec![
            Obstacle::new((1.0, 0.0), (0.2, 0.2), 0.5),
            Obstacle::new((1.0, 0.05), (0.2, 0.2), 0.25),
        ]);
        let grid = build_grid(&config).unwrap();
        let col = grid.index_of(1.0, 0.0).unwrap().0;
        let row = blockage_mask_row(&config, &grid, col);
        let at = |y: f64| row[grid.index_of(1.0, y).unwrap().1];
        assert_eq!(at(0.0), 0.25);
        assert_eq!(at(-0.09), 0.5);
        assert_eq!(at(0.14), 0.25);
        assert_eq!(at(0.3), 1.0);
    }

    #[test]
    fn blockage_ratio_cases() {
        assert_eq!(blockage_ratio(&scenario_with(vec![]), (2.0, 0.3)).unwrap(), 0.0);
        let wall = scenario_with(vec![Obstacle::new((1.0, 0.0), (0.1, 3.0), 0.0)]);
        assert_eq!(blockage_ratio(&wall, (2.0, 0.1)).unwrap(), 1.0);
        assert!(matches!(blockage_ratio(&wall, (0.0, 0.1)), Err(Error::Geometry(_))));
    }

    #[test]
    fn grid_round_trip_within_half_step() {
        let config = scenario_with(vec![]);
        let grid = build_grid(&config).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let x = rng.gen_range(0.0..4.0);
            let y = rng.gen_range(-1.99..1.99);
            let (c, r) = grid.index_of(x, y).unwrap();
            assert!((grid.x(c) - x).abs() <= grid.step_x / 2.0 + 1e-12);
            assert!((grid.y(r) - y).abs() <= grid.step_y / 2.0 + 1e-12);
        }
    }

    #[test]
    fn json_round_trip_and_default_attenuation() {
        let json = r#"{"frequency_hz": 1e11, "n_antennas": 63,
            "region": {"x_min": 0, "x_max": 1, "y_min": -0.5, "y_max": 0.5},
            "obstacles": [{"cx": 0.5, "cy": 0.0, "dx": 0.1, "dy": 0.1}],
            "attenuation_default": 0.3}"#;
        let config = ScenarioConfig::from_json_str(json).unwrap();
        assert_eq!(config.obstacles[0].attenuation, 0.3);
        let back = ScenarioConfig::from_json_str(&config.to_json_string()).unwrap();
        assert_eq!(back, config);
        assert_eq!(back.hash_hex(), config.hash_hex());
    }
}
