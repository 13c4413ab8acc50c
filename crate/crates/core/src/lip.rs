//! Passive-ankle linear inverted pendulum (LIP) dynamics.
//!
//! The sagittal (or lateral) plane is reduced to a point mass at constant
//! height `z0` pivoting about the stance foot with no ankle torque:
//!
//! ```text
//!   d/dt [p, L] = [L / z0, g * p]
//! ```
//!
//! where `p` is the horizontal CoM position relative to the stance foot and
//! `L` is the mass-normalized angular momentum about it. The system is
//! linear, so the flow, its orbital energy, and the time to reach a target
//! position all have closed forms. Foot impacts reset `L` through the
//! momentum transfer about the new contact point.

use crate::{Error, Result};

/// Constants of the pendulum. `lambda` is always derived from `(z0, g)`
/// so the triple can never fall out of sync.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipParams {
    z0: f64,
    g: f64,
}

impl LipParams {
    pub fn new(z0: f64, g: f64) -> Result<Self> {
        if !(z0.is_finite() && z0 > 0.0) {
            return Err(Error::invalid(
                "z0",
                format!("must be finite and > 0, got {z0}"),
            ));
        }
        if !(g.is_finite() && g > 0.0) {
            return Err(Error::invalid(
                "g",
                format!("must be finite and > 0, got {g}"),
            ));
        }
        Ok(Self { z0, g })
    }

    /// CoM height above the virtual slope (m).
    pub fn z0(&self) -> f64 {
        self.z0
    }

    /// Gravitational acceleration (m/s^2).
    pub fn g(&self) -> f64 {
        self.g
    }

    /// Pendulum frequency `sqrt(g / z0)` (1/s), recomputed on demand.
    pub fn lambda(&self) -> f64 {
        (self.g / self.z0).sqrt()
    }
}

/// A point of the LIP state space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipState {
    /// CoM horizontal position relative to the stance foot (m).
    pub p: f64,
    /// Mass-normalized angular momentum about the stance foot (m^2/s).
    pub l: f64,
}

impl LipState {
    pub fn new(p: f64, l: f64) -> Self {
        Self { p, l }
    }

    pub fn is_finite(&self) -> bool {
        self.p.is_finite() && self.l.is_finite()
    }

    /// Horizontal CoM velocity implied by the momentum relation `dp/dt = L / z0`.
    pub fn velocity(&self, params: &LipParams) -> f64 {
        self.l / params.z0()
    }
}

/// Pre-impact geometry and CoM velocities entering the momentum reset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImpactGeometry {
    /// Swing-foot horizontal offset from the stance foot at impact (m).
    pub x_sw: f64,
    /// Swing-foot vertical offset from the stance foot at impact (m).
    pub z_sw: f64,
    /// Horizontal CoM velocity just before impact (m/s).
    pub p_dot: f64,
    /// Vertical CoM velocity just before impact (m/s).
    pub z_dot: f64,
}

/// Closed-form flow of the LIP over a duration `t >= 0`:
///
/// ```text
/// p(t) = cosh(λt) p0 + sinh(λt) L0 / (λ z0)
/// L(t) = z0 λ sinh(λt) p0 + cosh(λt) L0
/// ```
pub fn flow(state: LipState, params: &LipParams, t: f64) -> Result<LipState> {
    if !state.is_finite() {
        return Err(Error::invalid("state", "state must be finite"));
    }
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::invalid(
            "t",
            format!("must be finite and >= 0, got {t}"),
        ));
    }
    let lambda = params.lambda();
    let (sh, ch) = sinh_cosh(lambda * t);
    Ok(LipState {
        p: ch * state.p + sh * state.l / (lambda * params.z0()),
        l: params.z0() * lambda * sh * state.p + ch * state.l,
    })
}

#[inline]
fn sinh_cosh(x: f64) -> (f64, f64) {
    (x.sinh(), x.cosh())
}

/// Classical fixed-step 4th-order Runge-Kutta integration of the LIP ODE.
///
/// Serves as an independent oracle for [`flow`]; the two must agree to
/// tight tolerances but share no code path.
pub fn integrate_numeric(state: LipState, params: &LipParams, t: f64, dt: f64) -> Result<LipState> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::invalid(
            "dt",
            format!("must be finite and > 0, got {dt}"),
        ));
    }
    if !(t.is_finite() && t >= dt) {
        return Err(Error::invalid(
            "t",
            format!("must satisfy t >= dt, got t={t} dt={dt}"),
        ));
    }
    if !state.is_finite() {
        return Err(Error::invalid("state", "state must be finite"));
    }
    let z0 = params.z0();
    let g = params.g();
    let deriv = |p: f64, l: f64| (l / z0, g * p);

    let n_full = (t / dt).floor() as u64;
    let remainder = t - n_full as f64 * dt;
    let mut p = state.p;
    let mut l = state.l;
    let rk4_step = |p: &mut f64, l: &mut f64, h: f64| {
        let (k1p, k1l) = deriv(*p, *l);
        let (k2p, k2l) = deriv(*p + 0.5 * h * k1p, *l + 0.5 * h * k1l);
        let (k3p, k3l) = deriv(*p + 0.5 * h * k2p, *l + 0.5 * h * k2l);
        let (k4p, k4l) = deriv(*p + h * k3p, *l + h * k3l);
        *p += h / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p);
        *l += h / 6.0 * (k1l + 2.0 * k2l + 2.0 * k3l + k4l);
    };
    for _ in 0..n_full {
        rk4_step(&mut p, &mut l, dt);
    }
    if remainder > 1e-12 * t.max(1.0) {
        rk4_step(&mut p, &mut l, remainder);
    }
    Ok(LipState { p, l })
}

/// Orbital energy `E = (L/z0)^2 - λ^2 p^2`, conserved along the flow.
///
/// `E > 0` means the CoM carries past midstance; `E < 0` means it stalls
/// and reverses before reaching the pivot.
pub fn orbital_energy(state: LipState, params: &LipParams) -> f64 {
    let v = state.l / params.z0();
    let lambda_p = params.lambda() * state.p;
    v * v - lambda_p * lambda_p
}

/// Smallest duration `T >= 0` with `p(T) == p_target`, clamped to
/// `[t_min, t_max]`.
///
/// Substituting `u = exp(λT)` into the closed-form flow turns the target
/// condition into `(a+b) u^2 - 2c u + (a-b) = 0` with `a = p0`,
/// `b = L0/(λ z0)`, `c = p_target`; the earliest nonnegative crossing is the
/// smallest root with `u >= 1`. Returns [`Error::Unreachable`] when no such
/// root exists (negative discriminant, or all crossings lie in the past).
pub fn time_to_target(
    state: LipState,
    params: &LipParams,
    p_target: f64,
    t_min: f64,
    t_max: f64,
) -> Result<f64> {
    if !state.is_finite() || !p_target.is_finite() {
        return Err(Error::invalid("state", "state and target must be finite"));
    }
    if !(t_min < t_max) {
        return Err(Error::invalid(
            "t_min",
            format!("need t_min < t_max, got [{t_min}, {t_max}]"),
        ));
    }
    let lambda = params.lambda();
    let a = state.p;
    let b = state.l / (lambda * params.z0());
    let c = p_target;

    let u = smallest_root_geq_one(a, b, c)?;
    let t = if u <= 1.0 { 0.0 } else { u.ln() / lambda };
    Ok(t.clamp(t_min, t_max))
}

/// Smallest root `u >= 1` of `(a+b) u^2 - 2c u + (a-b) = 0`, allowing a tiny
/// tolerance below 1 for roundoff on already-at-target states.
fn smallest_root_geq_one(a: f64, b: f64, c: f64) -> Result<f64> {
    const ONE_TOL: f64 = 1.0 - 1e-12;
    let lead = a + b;
    if lead.abs() < 1e-300 {
        // Degenerate: the state rides the stable eigenvector, p(t) = a e^{-λt}.
        if c.abs() < 1e-300 {
            // Target at the origin is only approached asymptotically.
            return if a.abs() < 1e-300 {
                Ok(1.0)
            } else {
                Err(Error::Unreachable)
            };
        }
        let u = (a - b) / (2.0 * c);
        return if u >= ONE_TOL {
            Ok(u)
        } else {
            Err(Error::Unreachable)
        };
    }
    let disc = c * c - a * a + b * b;
    if disc < 0.0 {
        return Err(Error::Unreachable);
    }
    let sq = disc.sqrt();
    // Stable quadratic: compute the root away from cancellation first,
    // recover the other from the product (a-b)/(a+b).
    let q = if c >= 0.0 { c + sq } else { c - sq };
    let (r1, r2) = if q.abs() < 1e-300 {
        (0.0, 0.0)
    } else {
        (q / lead, (a - b) / q)
    };
    let (lo, hi) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
    if lo >= ONE_TOL {
        Ok(lo)
    } else if hi >= ONE_TOL {
        Ok(hi)
    } else {
        Err(Error::Unreachable)
    }
}

/// Momentum transfer about the new contact point at foot impact:
/// `L+ = L- + x_sw * ż- - z_sw * ṗ-`.
pub fn impact_reset(l_minus: f64, geom: ImpactGeometry) -> f64 {
    l_minus + geom.x_sw * geom.z_dot - geom.z_sw * geom.p_dot
}
