//! Airy-beam caustic, its paraxial closed form and the maximum curving
//! range.
//!
//! With the aperture phase `φ(y₀)`, write `A = φ′/κ` and `B = φ″/κ`:
//!
//! ```text
//! A(y₀) = −sinθ + (cos²θ/r)·y₀ − (2πc)³·y₀²/κ
//! B(y₀) = cos²θ/r − 2(2πc)³·y₀/κ
//! ```
//!
//! The ray leaving `(0, y₀)` has direction sine `−A`, and the envelope of
//! these rays is `x_c = (1−A²)^{3/2}/B`, `y_c = y₀ − A(1−A²)/B`.

use std::f64::consts::PI;
use std::io::Write;

use serde::Serialize;

use crate::codebook::BeamParams;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CausticPoint {
    pub y0: f64,
    #[serde(rename = "x_c")]
    pub x: f64,
    #[serde(rename = "y_c")]
    pub y: f64,
    pub valid: bool,
}

fn cubic(c: f64) -> f64 {
    (2.0 * PI * c).powi(3)
}

fn inverse_r(params: &BeamParams) -> f64 {
    if params.r.is_finite() {
        1.0 / params.r
    } else {
        0.0
    }
}

/// Normalized first and second phase derivatives `(A, B)` at `y0`.
pub fn phase_derivatives(y0: f64, params: &BeamParams, kappa: f64) -> (f64, f64) {
    let c2 = params.theta.cos().powi(2);
    let k3 = cubic(params.c) / kappa;
    let a = -params.theta.sin() + c2 * inverse_r(params) * y0 - k3 * y0 * y0;
    let b = c2 * inverse_r(params) - 2.0 * k3 * y0;
    (a, b)
}

/// Caustic point generated by the aperture position `y0`.
pub fn caustic_point(y0: f64, params: &BeamParams, kappa: f64) -> CausticPoint {
    let (a, b) = phase_derivatives(y0, params, kappa);
    let s2 = 1.0 - a * a;
    if b == 0.0 || s2 <= 0.0 {
        return CausticPoint { y0, x: f64::NAN, y: f64::NAN, valid: false };
    }
    let x = s2.powf(1.5) / b;
    let y = y0 - a * s2 / b;
    CausticPoint { y0, x, y, valid: x > 0.0 && x.is_finite() && y.is_finite() }
}

/// Samples the caustic for `samples` aperture positions uniform over
/// `[−half_span, half_span]`. Valid points come first, sorted by `x`;
/// invalid points follow in sampling order.
pub fn caustic_curve(params: &BeamParams, kappa: f64, half_span: f64, samples: usize) -> Result<Vec<CausticPoint>> {
    if samples == 0 {
        return Err(Error::Parameter("caustic needs at least one sample".into()));
    }
    let y0s: Vec<f64> = if samples == 1 {
        vec![0.0]
    } else {
        (0..samples).map(|k| -half_span + 2.0 * half_span * k as f64 / (samples - 1) as f64).collect()
    };
    let (mut valid, invalid): (Vec<_>, Vec<_>) =
        y0s.into_iter().map(|y0| caustic_point(y0, params, kappa)).partition(|p| p.valid);
    valid.sort_by(|a, b| a.x.total_cmp(&b.x));
    valid.extend(invalid);
    Ok(valid)
}

/// Slope `dy/dx` of the ray leaving the aperture at `y0`, or `None` when
/// the ray is not forward-propagating.
pub fn ray_slope(y0: f64, params: &BeamParams, kappa: f64) -> Option<f64> {
    let (a, _) = phase_derivatives(y0, params, kappa);
    (a.abs() < 1.0).then(|| -a / (1.0 - a * a).sqrt())
}

/// Slope of the caustic curve at the point generated by `y0`, from the
/// derivatives of `x_c(y₀)` and `y_c(y₀)`.
pub fn tangent_slope(y0: f64, params: &BeamParams, kappa: f64) -> Option<f64> {
    let (a, b) = phase_derivatives(y0, params, kappa);
    let db = -2.0 * cubic(params.c) / kappa;
    let s2 = 1.0 - a * a;
    if b == 0.0 || s2 <= 0.0 {
        return None;
    }
    let dx = -(3.0 * a * b * b * s2.sqrt() + s2.powf(1.5) * db) / (b * b);
    let dy = 3.0 * a * a + a * s2 * db / (b * b);
    (dx != 0.0).then(|| dy / dx)
}

/// Paraxial closed-form trajectory `y_c(x_c)`.
pub fn paraxial_trajectory(x: f64, params: &BeamParams, kappa: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::Parameter(format!("paraxial trajectory needs x > 0, got {x}")));
    }
    if params.c == 0.0 {
        return Err(Error::Parameter("paraxial trajectory needs a nonzero curvature".into()));
    }
    let d = 32.0 * PI.powi(3) * params.c.powi(3);
    let (s, c2) = (params.theta.sin(), params.theta.cos().powi(2));
    let ir = inverse_r(params);
    Ok(x * s - kappa * x * c2 * c2 * ir * ir / d - kappa / (d * x) + 2.0 * kappa * c2 * ir / d)
}

/// Largest distance over which the beam keeps curving for an aperture of
/// length `aperture`: the larger of `κr/(κcos²θ ± 8π³c³rL)`, where a
/// non-positive denominator means unbounded.
pub fn max_range(params: &BeamParams, kappa: f64, aperture: f64) -> f64 {
    if !params.r.is_finite() {
        return f64::INFINITY;
    }
    let base = kappa * params.theta.cos().powi(2);
    let term = 8.0 * PI.powi(3) * params.c.powi(3) * params.r * aperture;
    [base + term, base - term]
        .into_iter()
        .map(|den| if den <= 0.0 { f64::INFINITY } else { kappa * params.r / den })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Residuals of the two stationarity conditions at a caustic point,
/// normalized by κ and κ|B|: `φ′(y₀) + κ(y_c−y₀)/r_c` and `φ″(y₀) − κx_c²/r_c³`.
pub fn stationarity_residuals(point: &CausticPoint, params: &BeamParams, kappa: f64) -> (f64, f64) {
    let (a, b) = phase_derivatives(point.y0, params, kappa);
    let dy = point.y - point.y0;
    let rc = (point.x * point.x + dy * dy).sqrt();
    let first = a + dy / rc;
    let second = (b - point.x * point.x / rc.powi(3)) / b.abs();
    (first, second)
}

pub fn write_caustic_csv<W: Write>(writer: W, points: &[CausticPoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for p in points {
        w.serialize(p).map_err(|e| Error::Io(e.into()))?;
    }
    w.flush()?;
    Ok(())
}
