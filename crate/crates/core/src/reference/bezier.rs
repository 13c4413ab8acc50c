//! Degree-5 Bézier polynomials for swing-foot interpolation.
//!
//! Six control points give enough endpoint multiplicity to pin position
//! and velocity at lift-off and touchdown simultaneously.

use crate::{Error, Result};

/// Number of control points (degree 5).
pub const BEZIER_POINTS: usize = 6;

/// Bernstein-basis evaluation of a 6-coefficient Bézier curve at phase
/// `s in [0, 1]`, returning the value and the phase derivative (via the
/// degree-4 hodograph).
pub fn bezier_eval(coeffs: &[f64], s: f64) -> Result<(f64, f64)> {
    if coeffs.len() != BEZIER_POINTS {
        return Err(Error::invalid(
            "coeffs",
            format!(
                "expected {BEZIER_POINTS} coefficients, got {}",
                coeffs.len()
            ),
        ));
    }
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::invalid(
            "s",
            format!("phase must lie in [0, 1], got {s}"),
        ));
    }
    Ok((bernstein5(coeffs, s), hodograph5(coeffs, s)))
}

#[inline]
fn bernstein5(c: &[f64], s: f64) -> f64 {
    let t = 1.0 - s;
    let t2 = t * t;
    let s2 = s * s;
    let b = [
        t2 * t2 * t,
        5.0 * t2 * t2 * s,
        10.0 * t2 * t * s2,
        10.0 * t2 * s2 * s,
        5.0 * t * s2 * s2,
        s2 * s2 * s,
    ];
    c.iter().zip(b).map(|(ci, bi)| ci * bi).sum()
}

#[inline]
fn hodograph5(c: &[f64], s: f64) -> f64 {
    let d = [
        5.0 * (c[1] - c[0]),
        5.0 * (c[2] - c[1]),
        5.0 * (c[3] - c[2]),
        5.0 * (c[4] - c[3]),
        5.0 * (c[5] - c[4]),
    ];
    let t = 1.0 - s;
    let t2 = t * t;
    let s2 = s * s;
    let b = [
        t2 * t2,
        4.0 * t2 * t * s,
        6.0 * t2 * s2,
        4.0 * t * s2 * s,
        s2 * s2,
    ];
    d.iter().zip(b).map(|(di, bi)| di * bi).sum()
}
