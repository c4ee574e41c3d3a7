//! Hankel function of the second kind, order one, for real positive
//! arguments. Power series below `SWITCH`, Hankel's asymptotic expansion
//! above it.

use std::f64::consts::{FRAC_PI_4, PI};

use num_complex::Complex64;

const SWITCH: f64 = 17.0;
/// Euler–Mascheroni constant.
const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// H₁⁽²⁾(z) = J₁(z) − j·Y₁(z).
pub fn hankel2_1(z: f64) -> Complex64 {
    assert!(z > 0.0, "hankel2_1 needs a positive argument, got {z}");
    if z < SWITCH {
        let (j1, y1) = series_j1_y1(z);
        Complex64::new(j1, -y1)
    } else {
        asymptotic(z)
    }
}

/// Ascending series for J₁ and Y₁.
fn series_j1_y1(z: f64) -> (f64, f64) {
    let half = z / 2.0;
    let q = -half * half;
    // term_k = (−1)^k (z/2)^{2k+1} / (k! (k+1)!)
    let mut term = half;
    // ψ(k+1) + ψ(k+2) at k = 0
    let mut psi_sum = -2.0 * EULER_GAMMA + 1.0;
    let mut j1 = 0.0;
    let mut tail = 0.0;
    for k in 0..200 {
        j1 += term;
        tail += psi_sum * term;
        let kf = k as f64;
        term *= q / ((kf + 1.0) * (kf + 2.0));
        psi_sum += 1.0 / (kf + 1.0) + 1.0 / (kf + 2.0);
        if term.abs() < 1e-18 * j1.abs().max(1e-300) && k > 2 {
            break;
        }
    }
    let y1 = -2.0 / (PI * z) + 2.0 / PI * half.ln() * j1 - tail / PI;
    (j1, y1)
}

/// √(2/(πz))·e^{−j(z − 3π/4)}·Σ (−j)^k a_k / z^k, truncated at the
/// smallest term.
fn asymptotic(z: f64) -> Complex64 {
    let mu = 4.0;
    let mut a = 1.0;
    let mut sum = Complex64::new(1.0, 0.0);
    let mut rot = Complex64::new(1.0, 0.0);
    let minus_j = Complex64::new(0.0, -1.0);
    let mut last = f64::INFINITY;
    for k in 1..60 {
        let kf = k as f64;
        a *= (mu - (2.0 * kf - 1.0).powi(2)) / (8.0 * kf * z);
        if a.abs() >= last || a == 0.0 {
            break;
        }
        last = a.abs();
        rot *= minus_j;
        sum += rot * a;
        if a.abs() < 1e-17 {
            break;
        }
    }
    let phase = -(z - 3.0 * FRAC_PI_4);
    Complex64::from_polar((2.0 / (PI * z)).sqrt(), phase) * sum
}
