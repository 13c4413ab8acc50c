//! Riccati-based control Lyapunov function over output-tracking errors.
//!
//! Feedback-linearized output errors behave as decoupled double
//! integrators, so the CARE for the stacked system splits into per-channel
//! 2x2 equations with closed-form solutions. The assembled P defines
//! `V(eta) = 1/2 eta' P eta` over the stacked error
//! `eta = [y_a - y_d; dy_a - dy_d]`, together with the exponential decrease
//! condition `dV <= -c V` checked discretely and an `exp(-alpha V)` reward
//! shaping.

use nalgebra::{DMatrix, DVector, Matrix2};
use serde::{Deserialize, Serialize};

use crate::reference::{OutputReference, OUTPUT_CHANNELS};
use crate::{Error, Result};

/// Per-channel CARE weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelWeights {
    pub q_pos: f64,
    pub q_vel: f64,
    pub r: f64,
}

impl Default for ChannelWeights {
    fn default() -> Self {
        Self {
            q_pos: 1.0,
            q_vel: 0.1,
            r: 1.0,
        }
    }
}

/// Stacked output-tracking error `[position errors; velocity errors]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorState {
    pub eta: DVector<f64>,
}

/// The assembled CLF: symmetric positive-definite `P`, the decrease rate
/// `c`, and the weights each block was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct ClfMatrix {
    pub p: DMatrix<f64>,
    pub c: f64,
    pub channels: Vec<ChannelWeights>,
}

/// Closed-form CARE solution for one double-integrator channel
/// (`A = [[0,1],[0,0]]`, `B = [0,1]'`, `Q = diag(q_pos, q_vel)`, `R = [r]`):
///
/// ```text
/// p12 = sqrt(q_pos r),  p22 = sqrt(r q_vel + 2 r p12),  p11 = p12 p22 / r
/// ```
pub fn solve_care_channel(q_pos: f64, q_vel: f64, r: f64) -> Result<Matrix2<f64>> {
    if !(q_pos > 0.0 && q_pos.is_finite()) {
        return Err(Error::invalid("q_pos", format!("must be > 0, got {q_pos}")));
    }
    if !(q_vel >= 0.0 && q_vel.is_finite()) {
        return Err(Error::invalid(
            "q_vel",
            format!("must be >= 0, got {q_vel}"),
        ));
    }
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::invalid("r", format!("must be > 0, got {r}")));
    }
    let p12 = (q_pos * r).sqrt();
    let p22 = (r * q_vel + 2.0 * r * p12).sqrt();
    let p11 = p12 * p22 / r;
    Ok(Matrix2::new(p11, p12, p12, p22))
}

/// CARE residual `A'P + PA - P B R^-1 B' P + Q` for one channel; the exact
/// solution drives it to zero.
pub fn care_residual(p: &Matrix2<f64>, q_pos: f64, q_vel: f64, r: f64) -> Matrix2<f64> {
    let a = Matrix2::new(0.0, 1.0, 0.0, 0.0);
    let b = nalgebra::Vector2::new(0.0, 1.0);
    let q = Matrix2::new(q_pos, 0.0, 0.0, q_vel);
    a.transpose() * p + p * a - p * b * b.transpose() * p / r + q
}

/// Assemble the stacked P from per-channel weights, permuted into the
/// `[positions; velocities]` ordering of `eta`.
pub fn assemble_p(channels: &[ChannelWeights]) -> Result<ClfMatrix> {
    if channels.is_empty() {
        return Err(Error::invalid(
            "channels",
            "need at least one channel".to_string(),
        ));
    }
    let n = channels.len();
    let mut p = DMatrix::zeros(2 * n, 2 * n);
    for (i, w) in channels.iter().enumerate() {
        let block = solve_care_channel(w.q_pos, w.q_vel, w.r)?;
        p[(i, i)] = block[(0, 0)];
        p[(i, n + i)] = block[(0, 1)];
        p[(n + i, i)] = block[(1, 0)];
        p[(n + i, n + i)] = block[(1, 1)];
    }
    let c = decrease_rate_bound(channels)?;
    Ok(ClfMatrix {
        p,
        c,
        channels: channels.to_vec(),
    })
}

/// Spectral decrease-rate bound for the assembled CLF under the idealized
/// closed loop: `c = lambda_min(Q + P G R^-1 G' P) / lambda_max(P)`.
/// Block-diagonal structure reduces both extremes to per-channel 2x2
/// eigenvalue problems.
pub fn decrease_rate_bound(channels: &[ChannelWeights]) -> Result<f64> {
    if channels.is_empty() {
        return Err(Error::invalid(
            "channels",
            "need at least one channel".to_string(),
        ));
    }
    let mut min_num = f64::INFINITY;
    let mut max_den = f64::NEG_INFINITY;
    for w in channels {
        let p = solve_care_channel(w.q_pos, w.q_vel, w.r)?;
        let s = Matrix2::new(
            p[(0, 1)] * p[(0, 1)],
            p[(0, 1)] * p[(1, 1)],
            p[(0, 1)] * p[(1, 1)],
            p[(1, 1)] * p[(1, 1)],
        ) / w.r;
        let m = Matrix2::new(w.q_pos, 0.0, 0.0, w.q_vel) + s;
        min_num = min_num.min(sym2_eig_min(&m));
        max_den = max_den.max(sym2_eig_max(&p));
    }
    Ok(min_num / max_den)
}

fn sym2_eig_min(m: &Matrix2<f64>) -> f64 {
    let mean = (m[(0, 0)] + m[(1, 1)]) / 2.0;
    let half_diff = (m[(0, 0)] - m[(1, 1)]) / 2.0;
    mean - (half_diff * half_diff + m[(0, 1)] * m[(0, 1)]).sqrt()
}

fn sym2_eig_max(m: &Matrix2<f64>) -> f64 {
    let mean = (m[(0, 0)] + m[(1, 1)]) / 2.0;
    let half_diff = (m[(0, 0)] - m[(1, 1)]) / 2.0;
    mean + (half_diff * half_diff + m[(0, 1)] * m[(0, 1)]).sqrt()
}

/// `V(eta) = 1/2 eta' P eta`: zero exactly at zero error, positive
/// elsewhere.
pub fn lyapunov_value(error: &ErrorState, m: &ClfMatrix) -> Result<f64> {
    if error.eta.len() != m.p.nrows() {
        return Err(Error::invalid(
            "eta",
            format!(
                "dimension {} does not match P ({})",
                error.eta.len(),
                m.p.nrows()
            ),
        ));
    }
    Ok(0.5 * (error.eta.transpose() * &m.p * &error.eta)[(0, 0)])
}

/// Linearized decrease diagnostic over one sample interval:
/// `margin = (V_curr - V_prev)/dt + c V_curr`; nonpositive margins satisfy
/// the decrease condition.
pub fn decrease_margin(v_prev: f64, v_curr: f64, dt: f64, c: f64) -> f64 {
    debug_assert!(dt > 0.0);
    (v_curr - v_prev) / dt + c * v_curr
}

/// Exact discretization of the decrease condition: over a step `dt` the
/// value must contract at least as fast as `exp(-c dt)`.
pub fn decrease_holds(v_prev: f64, v_curr: f64, dt: f64, c: f64) -> bool {
    v_curr <= v_prev * (-c * dt).exp()
}

/// Bounded reward shaping `exp(-alpha V)`: 1 exactly at zero error,
/// monotone decreasing in V.
pub fn clf_reward(v: f64, alpha: f64) -> f64 {
    debug_assert!(v >= 0.0 && alpha > 0.0);
    (-alpha * v).exp()
}

/// Stack the tracking error between desired and actual outputs in the
/// fixed channel order: CoM xyz, swing xyz, pelvis yaw, swing yaw;
/// positions first, then velocities.
pub fn output_error(desired: &OutputReference, actual: &OutputReference) -> Result<ErrorState> {
    if !desired.is_finite() || !actual.is_finite() {
        return Err(Error::invalid(
            "outputs",
            "output bundles must be finite".to_string(),
        ));
    }
    let n = OUTPUT_CHANNELS;
    let mut eta = DVector::zeros(2 * n);
    let pos = |o: &OutputReference| {
        [
            o.com_pos.x,
            o.com_pos.y,
            o.com_pos.z,
            o.swing_pos.x,
            o.swing_pos.y,
            o.swing_pos.z,
            o.pelvis_yaw,
            o.swing_yaw,
        ]
    };
    let vel = |o: &OutputReference| {
        [
            o.com_vel.x,
            o.com_vel.y,
            o.com_vel.z,
            o.swing_vel.x,
            o.swing_vel.y,
            o.swing_vel.z,
            o.pelvis_yaw_rate,
            o.swing_yaw_rate,
        ]
    };
    let (dp, ap) = (pos(desired), pos(actual));
    let (dv, av) = (vel(desired), vel(actual));
    for i in 0..n {
        eta[i] = ap[i] - dp[i];
        eta[n + i] = av[i] - dv[i];
    }
    Ok(ErrorState { eta })
}
