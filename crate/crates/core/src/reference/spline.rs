//! Cubic Hermite splines in the step phase variable `s = t / T_s`.
//!
//! Boundary velocities are supplied in time units and scaled by `T_s`
//! internally, so evaluating `d/dt` at the endpoints reproduces them
//! regardless of the step duration.

/// Cubic polynomial `c(s) = c0 + c1 s + c2 s^2 + c3 s^3` over phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CubicSpline {
    coeffs: [f64; 4],
}

/// One evaluation of a spline, converted back to time units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplineSample {
    pub pos: f64,
    pub vel: f64,
    pub acc: f64,
    /// Set when the query phase fell outside `[0, 1]` and was clamped.
    pub clamped: bool,
}

impl CubicSpline {
    /// Unique cubic with `c(0) = p_start`, `c(1) = p_end` and time-domain
    /// endpoint velocities `v_start`, `v_end` for a step of duration `t_s`.
    pub fn hermite(p_start: f64, v_start: f64, p_end: f64, v_end: f64, t_s: f64) -> Self {
        Self::hermite_on(0.0, p_start, v_start, p_end, v_end, t_s)
    }

    /// Cubic pinned at an interior anchor phase `s0 < 1` instead of 0:
    /// `c(s0) = p_start`, `c'(s0) = v_start * t_s`, `c(1) = p_end`,
    /// `c'(1) = v_end * t_s`. With `s0 = 0` this is the ordinary Hermite
    /// construction; re-anchoring at a point of an existing cubic
    /// reproduces that cubic, which keeps per-tick replanning consistent.
    pub fn hermite_on(
        s0: f64,
        p_start: f64,
        v_start: f64,
        p_end: f64,
        v_end: f64,
        t_s: f64,
    ) -> Self {
        let d0 = v_start * t_s;
        let d1 = v_end * t_s;
        let h = 1.0 - s0;
        if h.abs() < 1e-12 {
            // Degenerate window: constant at the end state.
            return Self {
                coeffs: [p_end, 0.0, 0.0, 0.0],
            };
        }
        // Hermite in the local variable u = (s - s0)/h, then expand to s.
        let dp = p_end - p_start;
        let a0 = p_start;
        let a1 = d0 * h;
        let a2 = 3.0 * dp - (2.0 * d0 + d1) * h;
        let a3 = -2.0 * dp + (d0 + d1) * h;
        // c(s) = a0 + a1 u + a2 u^2 + a3 u^3 with u = (s - s0)/h.
        let inv = 1.0 / h;
        let (b1, b2, b3) = (a1 * inv, a2 * inv * inv, a3 * inv * inv * inv);
        let c3 = b3;
        let c2 = b2 - 3.0 * b3 * s0;
        let c1 = b1 - 2.0 * b2 * s0 + 3.0 * b3 * s0 * s0;
        let c0 = a0 - b1 * s0 + b2 * s0 * s0 - b3 * s0 * s0 * s0;
        Self {
            coeffs: [c0, c1, c2, c3],
        }
    }

    pub fn constant(value: f64) -> Self {
        Self {
            coeffs: [value, 0.0, 0.0, 0.0],
        }
    }

    /// Position in phase coordinates (no time scaling).
    pub fn value(&self, s: f64) -> f64 {
        let [c0, c1, c2, c3] = self.coeffs;
        ((c3 * s + c2) * s + c1) * s + c0
    }

    /// First phase derivative `c'(s)`.
    pub fn deriv(&self, s: f64) -> f64 {
        let [_, c1, c2, c3] = self.coeffs;
        (3.0 * c3 * s + 2.0 * c2) * s + c1
    }

    fn deriv2(&self, s: f64) -> f64 {
        let [_, _, c2, c3] = self.coeffs;
        6.0 * c3 * s + 2.0 * c2
    }
}

/// Evaluate a spline at phase `s` for a step of duration `t_s`, returning
/// position, velocity and acceleration in time units. Phases outside
/// `[0, 1]` are clamped and flagged.
pub fn eval_spline(spline: &CubicSpline, s: f64, t_s: f64) -> SplineSample {
    let clamped = !(0.0..=1.0).contains(&s);
    let s = s.clamp(0.0, 1.0);
    SplineSample {
        pos: spline.value(s),
        vel: spline.deriv(s) / t_s,
        acc: spline.deriv2(s) / (t_s * t_s),
        clamped,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn constant_when_endpoints_match_and_rest() {
        let c = CubicSpline::hermite(0.4, 0.0, 0.4, 0.0, 0.5);
        for i in 0..=10 {
            let s = i as f64 / 10.0;
            let out = eval_spline(&c, s, 0.5);
            assert_abs_diff_eq!(out.pos, 0.4, epsilon = 1e-15);
            assert_abs_diff_eq!(out.vel, 0.0, epsilon = 1e-15);
            assert_abs_diff_eq!(out.acc, 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn boundary_conditions_reproduced() {
        let (p0, v0, p1, v1, t_s) = (0.1, -0.3, 0.55, 0.7, 0.42);
        let c = CubicSpline::hermite(p0, v0, p1, v1, t_s);
        let start = eval_spline(&c, 0.0, t_s);
        let end = eval_spline(&c, 1.0, t_s);
        assert_abs_diff_eq!(start.pos, p0, epsilon = 1e-14);
        assert_abs_diff_eq!(start.vel, v0, epsilon = 1e-14);
        assert_abs_diff_eq!(end.pos, p1, epsilon = 1e-13);
        assert_abs_diff_eq!(end.vel, v1, epsilon = 1e-13);
    }

    #[test]
    fn time_scaling_matches_finite_differences() {
        // d/dt at t = 0 equals v_start for a range of step durations,
        // cross-checked against a centered finite difference in phase.
        for &t_s in &[0.2, 0.35, 0.5, 0.8] {
            let c = CubicSpline::hermite(0.0, 1.3, 1.0, -0.2, t_s);
            assert_abs_diff_eq!(eval_spline(&c, 0.0, t_s).vel, 1.3, epsilon = 1e-12);
            let h = 1e-6;
            let fd = (c.value(0.5 + h) - c.value(0.5 - h)) / (2.0 * h) / t_s;
            assert_abs_diff_eq!(eval_spline(&c, 0.5, t_s).vel, fd, epsilon = 1e-6);
            // Wider step for the second difference to stay clear of
            // cancellation noise.
            let h2 = 1e-4;
            let fd2 = (c.value(0.5 + h2) - 2.0 * c.value(0.5) + c.value(0.5 - h2))
                / (h2 * h2)
                / (t_s * t_s);
            assert_abs_diff_eq!(eval_spline(&c, 0.5, t_s).acc, fd2, epsilon = 1e-4);
        }
    }

    #[test]
    fn out_of_range_phase_clamps_with_flag() {
        let c = CubicSpline::hermite(0.0, 0.0, 1.0, 0.0, 0.5);
        let below = eval_spline(&c, -0.2, 0.5);
        let above = eval_spline(&c, 1.4, 0.5);
        assert!(below.clamped && above.clamped);
        assert_eq!(below.pos, c.value(0.0));
        assert_eq!(above.pos, c.value(1.0));
        assert!(!eval_spline(&c, 0.7, 0.5).clamped);
    }

    #[test]
    fn reanchoring_reproduces_the_same_cubic() {
        // A cubic re-fit from one of its interior states back to the same
        // end state is the same polynomial.
        let t_s = 0.45;
        let orig = CubicSpline::hermite(-0.2, 0.9, 0.3, 0.1, t_s);
        let s0 = 0.37;
        let mid = eval_spline(&orig, s0, t_s);
        let refit = CubicSpline::hermite_on(
            s0,
            mid.pos,
            mid.vel,
            orig.value(1.0),
            orig.deriv(1.0) / t_s,
            t_s,
        );
        for i in 0..=20 {
            let s = i as f64 / 20.0;
            assert_abs_diff_eq!(refit.value(s), orig.value(s), epsilon = 1e-12);
        }
    }
}
