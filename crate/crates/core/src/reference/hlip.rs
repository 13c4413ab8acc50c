//! HLIP lateral stepping: step-to-step dynamics, the period-2 orbit for a
//! nominal step width, and deadbeat foot-placement feedback.
//!
//! Sampling the lateral LIP at pre-impact events gives a discrete linear
//! system `x_{k+1} = A(T) x_k + B u_k` steered by the lateral foot
//! displacement `u`. The impact reset couples the planes: placing the foot
//! `u` sideways while the CoM falls at `zdot` kicks the lateral momentum by
//! `u * zdot`, so the input matrix is `B = A [-1, zdot]'` with `zdot` the
//! planned pre-impact vertical velocity. Straight-line walking is a
//! period-2 orbit of that map with `u` alternating `±w_nominal`; the
//! deadbeat gain drives any boundary error to zero in two steps.

use nalgebra::{DMatrix, DVector, Matrix2, RowVector2, Vector2};

use crate::lip::{LipParams, LipState};

/// Stance side. Left feet stand on the `+y` side of the travel line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn flip(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }

    /// +1 for left, -1 for right.
    pub fn sign(self) -> f64 {
        match self {
            Side::Left => 1.0,
            Side::Right => -1.0,
        }
    }
}

/// Pre-impact-to-pre-impact map of the lateral LIP over one step of
/// duration `t`, with the foot displacement as input and the planned
/// impact vertical velocity folded into the reset coupling.
#[derive(Debug, Clone, Copy)]
pub struct StepToStepMap {
    pub a: Matrix2<f64>,
    pub b: Vector2<f64>,
}

impl StepToStepMap {
    pub fn new(params: &LipParams, t: f64, impact_zdot: f64) -> Self {
        let lambda = params.lambda();
        let (sh, ch) = ((lambda * t).sinh(), (lambda * t).cosh());
        let a = Matrix2::new(
            ch,
            sh / (lambda * params.z0()),
            params.z0() * lambda * sh,
            ch,
        );
        // Reset: p+ = p- - u, L+ = L- + u * zdot; then flow over the step.
        let b = a * Vector2::new(-1.0, impact_zdot);
        Self { a, b }
    }

    pub fn apply(&self, state: Vector2<f64>, u: f64) -> Vector2<f64> {
        self.a * state + self.b * u
    }
}

/// Nominal foot displacement when stepping off the given stance side:
/// from a left stance the next (right) foot lands `w_nominal` to the right.
pub fn nominal_displacement(side: Side, w_nominal: f64) -> f64 {
    -side.sign() * w_nominal
}

/// Pre-impact boundary state of the period-2 orbit for the step leaving
/// the given stance side. Solves `(I + A) sigma = -B u`; consecutive
/// boundary states mirror in sign.
pub fn period_two_orbit(map: &StepToStepMap, side: Side, w_nominal: f64) -> Vector2<f64> {
    let u = nominal_displacement(side, w_nominal);
    let lhs = Matrix2::identity() + map.a;
    lhs.try_inverse().expect("I + A is invertible for T > 0") * (-map.b * u)
}

/// Deadbeat feedback gain: `u = u_orbit + K (x - sigma)` makes the error
/// map `(A + B K)` nilpotent, so boundary errors vanish in two steps.
/// Ackermann's formula with desired characteristic polynomial `z^2`.
pub fn deadbeat_gain(map: &StepToStepMap) -> RowVector2<f64> {
    let ctrb = Matrix2::from_columns(&[map.b, map.a * map.b]);
    let inv = ctrb
        .try_inverse()
        .expect("lateral S2S pair is controllable for T > 0");
    -(RowVector2::new(0.0, 1.0) * inv * (map.a * map.a))
}

/// Output of the lateral reference computation for one plan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LateralPlan {
    /// Lateral foot target relative to the stance foot (m).
    pub w_des: f64,
    /// Period-2 orbit boundary (pre-impact) state for this step.
    pub orbit_boundary: LipState,
}

/// Stabilizing lateral foot target for the step in progress.
///
/// `pre_impact` is the predicted lateral state at the end of the step
/// (closed-form flow of the current state over the remaining time);
/// `impact_zdot` is the planned pre-impact vertical CoM velocity.
pub fn lateral_hlip_reference(
    pre_impact: LipState,
    t_s: f64,
    w_nominal: f64,
    side: Side,
    impact_zdot: f64,
    params: &LipParams,
) -> LateralPlan {
    let map = StepToStepMap::new(params, t_s, impact_zdot);
    let sigma = period_two_orbit(&map, side, w_nominal);
    let k = deadbeat_gain(&map);
    let err = Vector2::new(pre_impact.p - sigma.x, pre_impact.l - sigma.y);
    LateralPlan {
        w_des: nominal_displacement(side, w_nominal) + (k * err).x,
        orbit_boundary: LipState::new(sigma.x, sigma.y),
    }
}

/// Receding-horizon lateral placement over the next `maps.len()` impacts.
///
/// Per-step timing variation moves the period-2 orbit, so a one-step
/// deadbeat keeps chasing it; and any scheme that regulates only the
/// foot-relative state lets the gait random-walk sideways off the stones.
/// This solve augments the boundary state with the world-frame foot offset
/// from the nominal line (`world_offset`) and picks the displacement
/// sequence that, under the predicted maps, lands the boundary exactly on
/// the steady orbit with zero world offset at the end of the horizon —
/// choosing, among all such sequences, the one with the smallest deviation
/// from the nominal alternating pattern. Longer horizons spread each
/// correction over more steps. Only the first displacement is applied;
/// the plan is re-solved every tick.
///
/// `maps[k]` governs impact `k`: its flow spans the step after that
/// impact and its reset velocity is that impact's planned vertical CoM
/// velocity. `h1_ydot1` supplies the predicted `-z_sw * ydot` reset
/// offset of the imminent impact.
pub fn receding_placement(
    pre_impact: LipState,
    world_offset: f64,
    maps: &[StepToStepMap],
    side: Side,
    w_nominal: f64,
    h1_ydot1: f64,
) -> f64 {
    let n = maps.len();
    assert!(n >= 3, "horizon must cover at least three impacts");
    let d1 = maps[0].a * Vector2::new(0.0, -h1_ydot1);

    // Forward-simulate the nominal displacement pattern.
    let mut x = Vector2::new(pre_impact.p, pre_impact.l);
    let mut leaving = side;
    let mut unoms = Vec::with_capacity(n);
    for (k, map) in maps.iter().enumerate() {
        let unom = nominal_displacement(leaving, w_nominal);
        unoms.push(unom);
        x = map.apply(x, unom);
        if k == 0 {
            x += d1;
        }
        leaving = leaving.flip();
    }
    // After n impacts the boundary ends a step on side flip^n(s).
    let end_side = if n.is_multiple_of(2) {
        side
    } else {
        side.flip()
    };
    let target = period_two_orbit(&maps[n - 1], end_side, w_nominal);

    // Sensitivities of the terminal [boundary; world offset] to each
    // input deviation v_k = u_k - unom_k.
    let mut m = DMatrix::zeros(3, n);
    for k in 0..n {
        let mut col = maps[k].b;
        for map in &maps[k + 1..] {
            col = map.a * col;
        }
        m[(0, k)] = col.x;
        m[(1, k)] = col.y;
        m[(2, k)] = 1.0;
    }
    let mut rhs = DVector::from_vec(vec![target.x - x.x, target.y - x.y, -world_offset]);
    // Row equilibration: the flow products dwarf the unit world-offset
    // row; scaling rows leaves the constraint subspace (and thus the
    // minimum-norm solution) unchanged while fixing the conditioning.
    for r in 0..3 {
        let scale = (0..n).map(|k| m[(r, k)].abs()).fold(0.0, f64::max).max(1.0);
        for k in 0..n {
            m[(r, k)] /= scale;
        }
        rhs[r] /= scale;
    }
    // Minimum-norm deviation via the pseudo-inverse.
    let svd = m.clone().svd(true, true);
    match svd.solve(&rhs, 1e-12) {
        Ok(v) => unoms[0] + v[0],
        // Near-singular lookahead (degenerate prediction): fall back to
        // the single-map deadbeat.
        Err(_) => {
            let sigma = period_two_orbit(&maps[0], side, w_nominal);
            let k = deadbeat_gain(&maps[0]);
            let x1 = Vector2::new(pre_impact.p, pre_impact.l);
            nominal_displacement(side, w_nominal) + (k * (x1 - sigma)).x
        }
    }
}

/// Per-impact bounds on the input deviation `v_k = u_k - unom_k`, derived
/// from the reachable landing window of each upcoming stone.
#[derive(Debug, Clone, Copy)]
pub struct PlacementBounds {
    pub lo: f64,
    pub hi: f64,
}

/// Box-constrained variant of [`receding_placement`]: when the
/// unconstrained minimum-norm deviation would land a foot outside its
/// stone, re-solve with the violating inputs pinned at their bounds
/// (active-set enumeration over the tiny horizon) and pick the candidate
/// with the smallest terminal boundary residual, breaking ties by
/// deviation norm. Nominal walking never engages the enumeration.
pub fn receding_placement_bounded(
    pre_impact: LipState,
    world_offset: f64,
    maps: &[StepToStepMap],
    side: Side,
    w_nominal: f64,
    h1_ydot1: f64,
    bounds: &[PlacementBounds],
) -> f64 {
    let n = maps.len();
    assert_eq!(bounds.len(), n);
    let d1 = maps[0].a * Vector2::new(0.0, -h1_ydot1);

    let mut x = Vector2::new(pre_impact.p, pre_impact.l);
    let mut leaving = side;
    let mut unoms = Vec::with_capacity(n);
    for (k, map) in maps.iter().enumerate() {
        let unom = nominal_displacement(leaving, w_nominal);
        unoms.push(unom);
        x = map.apply(x, unom);
        if k == 0 {
            x += d1;
        }
        leaving = leaving.flip();
    }
    let end_side = if n.is_multiple_of(2) {
        side
    } else {
        side.flip()
    };
    let target = period_two_orbit(&maps[n - 1], end_side, w_nominal);

    let mut m = DMatrix::zeros(3, n);
    for k in 0..n {
        let mut col = maps[k].b;
        for map in &maps[k + 1..] {
            col = map.a * col;
        }
        m[(0, k)] = col.x;
        m[(1, k)] = col.y;
        m[(2, k)] = 1.0;
    }
    let mut rhs = DVector::from_vec(vec![target.x - x.x, target.y - x.y, -world_offset]);
    let mut row_scale = [1.0; 3];
    for r in 0..3 {
        let scale = (0..n).map(|k| m[(r, k)].abs()).fold(0.0, f64::max).max(1.0);
        row_scale[r] = scale;
        for k in 0..n {
            m[(r, k)] /= scale;
        }
        rhs[r] /= scale;
    }
    // The world-offset row is a soft goal during saturated recovery;
    // weight the boundary rows above it when scoring residuals.
    const F_ROW_WEIGHT: f64 = 0.3;
    for k in 0..n {
        m[(2, k)] *= F_ROW_WEIGHT;
    }
    rhs[2] *= F_ROW_WEIGHT;

    let solve_pattern = |pattern: &[i8]| -> Option<(DVector<f64>, f64, f64)> {
        // Pinned contribution and reduced system over free columns.
        let free: Vec<usize> = (0..n).filter(|&k| pattern[k] == 0).collect();
        let mut rhs_red = rhs.clone();
        let mut v = DVector::zeros(n);
        for k in 0..n {
            match pattern[k] {
                1 => v[k] = bounds[k].hi,
                -1 => v[k] = bounds[k].lo,
                _ => {}
            }
            if pattern[k] != 0 {
                for r in 0..3 {
                    rhs_red[r] -= m[(r, k)] * v[k];
                }
            }
        }
        if !free.is_empty() {
            let mut m_red = DMatrix::zeros(3, free.len());
            for (j, &k) in free.iter().enumerate() {
                for r in 0..3 {
                    m_red[(r, j)] = m[(r, k)];
                }
            }
            let sol = m_red.clone().svd(true, true).solve(&rhs_red, 1e-12).ok()?;
            for (j, &k) in free.iter().enumerate() {
                v[k] = sol[j];
            }
        }
        // Feasibility of the free entries.
        for k in 0..n {
            if pattern[k] == 0 && (v[k] < bounds[k].lo - 1e-9 || v[k] > bounds[k].hi + 1e-9) {
                return None;
            }
        }
        let residual = (&m * &v - &rhs).norm();
        Some((v.clone(), residual, v.norm()))
    };

    // Unconstrained first; engage the enumeration only on violation.
    if let Some((v, _, _)) = solve_pattern(&vec![0i8; n]) {
        return unoms[0] + v[0];
    }
    let mut best: Option<(f64, f64, f64)> = None; // (residual, norm, u1)
    let mut pattern = vec![0i8; n];
    let patterns = 3usize.pow(n as u32);
    for code in 1..patterns {
        let mut c = code;
        for slot in pattern.iter_mut() {
            *slot = [0i8, 1, -1][c % 3];
            c /= 3;
        }
        if let Some((v, residual, norm)) = solve_pattern(&pattern) {
            let candidate = (residual, norm, v[0]);
            let better = match &best {
                None => true,
                Some((r, nm, _)) => residual < r - 1e-12 || (residual < r + 1e-12 && norm < *nm),
            };
            if better {
                best = Some(candidate);
            }
        }
    }
    match best {
        Some((_, _, v0)) => unoms[0] + v0,
        None => {
            // Every pattern infeasible (cannot happen with finite bounds);
            // saturate toward the unbounded demand.
            let u = receding_placement(pre_impact, world_offset, maps, side, w_nominal, h1_ydot1);
            let v0 = (u - unoms[0]).clamp(bounds[0].lo, bounds[0].hi);
            unoms[0] + v0
        }
    }
}

/// State at the start of an on-orbit step for the given stance side, i.e.
/// the orbit boundary flowed backward over the full step duration.
pub fn orbit_start_state(
    side: Side,
    t_s: f64,
    w_nominal: f64,
    impact_zdot: f64,
    params: &LipParams,
) -> LipState {
    let map = StepToStepMap::new(params, t_s, impact_zdot);
    let sigma = period_two_orbit(&map, side, w_nominal);
    let inv = map.a.try_inverse().expect("A(T) is invertible");
    let start = inv * sigma;
    LipState::new(start.x, start.y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lip::flow;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params() -> LipParams {
        LipParams::new(0.5, 9.81).unwrap()
    }

    #[test]
    fn on_orbit_state_gets_nominal_displacement() {
        let p = params();
        let map = StepToStepMap::new(&p, 0.45, -0.3);
        let sigma = period_two_orbit(&map, Side::Left, 0.2);
        let plan = lateral_hlip_reference(
            LipState::new(sigma.x, sigma.y),
            0.45,
            0.2,
            Side::Left,
            -0.3,
            &p,
        );
        assert_abs_diff_eq!(
            plan.w_des,
            nominal_displacement(Side::Left, 0.2),
            epsilon = 1e-12
        );
    }

    #[test]
    fn deadbeat_kills_error_in_two_steps() {
        let p = params();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let t_s = rng.random_range(0.25..0.75);
            let w = rng.random_range(0.1..0.3);
            let zdot = rng.random_range(-0.5..0.2);
            let map = StepToStepMap::new(&p, t_s, zdot);
            let k = deadbeat_gain(&map);
            let mut side = Side::Left;
            let mut state = period_two_orbit(&map, side, w)
                + Vector2::new(rng.random_range(-0.1..0.1), rng.random_range(-0.3..0.3));
            for _ in 0..2 {
                let sigma = period_two_orbit(&map, side, w);
                let u = nominal_displacement(side, w) + (k * (state - sigma)).x;
                state = map.apply(state, u);
                side = side.flip();
            }
            let sigma = period_two_orbit(&map, side, w);
            assert_abs_diff_eq!(state.x, sigma.x, epsilon = 1e-10);
            assert_abs_diff_eq!(state.y, sigma.y, epsilon = 1e-10);
        }
    }

    #[test]
    fn orbit_boundaries_mirror_between_sides() {
        let p = params();
        let map = StepToStepMap::new(&p, 0.4, -0.25);
        let left = period_two_orbit(&map, Side::Left, 0.22);
        let right = period_two_orbit(&map, Side::Right, 0.22);
        assert_abs_diff_eq!(left.x, -right.x, epsilon = 1e-12);
        assert_abs_diff_eq!(left.y, -right.y, epsilon = 1e-12);
        // Fixed-point check: applying the orbit control from one boundary
        // lands on the mirrored boundary.
        let next = map.apply(left, nominal_displacement(Side::Left, 0.22));
        assert_abs_diff_eq!(next.x, right.x, epsilon = 1e-10);
        assert_abs_diff_eq!(next.y, right.y, epsilon = 1e-10);
    }

    #[test]
    fn orbit_start_flows_to_boundary() {
        let p = params();
        let t_s = 0.5;
        let start = orbit_start_state(Side::Right, t_s, 0.2, -0.3, &p);
        let end = flow(start, &p, t_s).unwrap();
        let map = StepToStepMap::new(&p, t_s, -0.3);
        let sigma = period_two_orbit(&map, Side::Right, 0.2);
        assert_abs_diff_eq!(end.p, sigma.x, epsilon = 1e-10);
        assert_abs_diff_eq!(end.l, sigma.y, epsilon = 1e-10);
    }

    #[test]
    fn receding_placement_on_orbit_gives_nominal_displacement() {
        let p = params();
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        for _ in 0..200 {
            let t_s = rng.random_range(0.25..0.75);
            let zdot = rng.random_range(-0.5..0.1);
            let w = rng.random_range(0.12..0.28);
            let map = StepToStepMap::new(&p, t_s, zdot);
            let sigma = period_two_orbit(&map, Side::Left, w);
            for n in [3, 5] {
                let maps = vec![map; n];
                let u = receding_placement(
                    LipState::new(sigma.x, sigma.y),
                    0.0,
                    &maps,
                    Side::Left,
                    w,
                    0.0,
                );
                assert_abs_diff_eq!(u, nominal_displacement(Side::Left, w), epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn receding_plan_hits_varying_orbit_and_recenters() {
        // Oracle: recover the full input sequence from the minimum-norm
        // normal equations, play it through the maps, and verify both the
        // boundary target and the zero world offset are met exactly.
        let p = params();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..200 {
            let w = 0.2;
            let n = 5;
            let maps: Vec<StepToStepMap> = (0..n)
                .map(|_| {
                    StepToStepMap::new(&p, rng.random_range(0.3..0.7), rng.random_range(-0.5..0.0))
                })
                .collect();
            let sigma1 = period_two_orbit(&maps[0], Side::Left, w);
            let x1 = Vector2::new(
                sigma1.x + rng.random_range(-0.05..0.05),
                sigma1.y + rng.random_range(-0.1..0.1),
            );
            let f1 = rng.random_range(-0.05..0.05);
            let u1 = receding_placement(LipState::new(x1.x, x1.y), f1, &maps, Side::Left, w, 0.0);

            // Oracle solve.
            let mut x = x1;
            let mut side = Side::Left;
            let mut unoms = Vec::new();
            for map in &maps {
                let unom = nominal_displacement(side, w);
                unoms.push(unom);
                x = map.apply(x, unom);
                side = side.flip();
            }
            let target = period_two_orbit(&maps[n - 1], Side::Right, w);
            let mut m = DMatrix::zeros(3, n);
            for k in 0..n {
                let mut col = maps[k].b;
                for map in &maps[k + 1..] {
                    col = map.a * col;
                }
                m[(0, k)] = col.x;
                m[(1, k)] = col.y;
                m[(2, k)] = 1.0;
            }
            let mut rhs = DVector::from_vec(vec![target.x - x.x, target.y - x.y, -f1]);
            for r in 0..3 {
                let scale = (0..n).map(|k| m[(r, k)].abs()).fold(0.0, f64::max).max(1.0);
                for k in 0..n {
                    m[(r, k)] /= scale;
                }
                rhs[r] /= scale;
            }
            let v = m.clone().svd(true, true).solve(&rhs, 1e-12).unwrap();
            assert_abs_diff_eq!(u1, unoms[0] + v[0], epsilon = 1e-9);

            // Oracle: play the solved inputs through the step-to-step
            // dynamics themselves; the terminal boundary and world offset
            // must land on target.
            let mut x = x1;
            let mut f = f1;
            for (k, map) in maps.iter().enumerate() {
                x = map.apply(x, unoms[k] + v[k]);
                f += v[k];
            }
            assert_abs_diff_eq!(x.x, target.x, epsilon = 1e-6);
            assert_abs_diff_eq!(x.y, target.y, epsilon = 1e-6);
            assert_abs_diff_eq!(f, 0.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn receding_placement_stays_bounded_on_varying_maps() {
        // Closed loop with per-step map changes: boundary errors, world
        // drift, and displacements stay tightly bounded.
        let p = params();
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let w = 0.2;
        let horizon = 5;
        let mut side = Side::Left;
        let maps: Vec<StepToStepMap> = (0..60)
            .map(|_| {
                StepToStepMap::new(
                    &p,
                    rng.random_range(0.42..0.63),
                    rng.random_range(-0.6..-0.18),
                )
            })
            .collect();
        let mut x = period_two_orbit(&maps[0], side, w);
        let mut world = 0.0;
        for k in 0..maps.len() - horizon {
            let u = receding_placement(
                LipState::new(x.x, x.y),
                world,
                &maps[k..k + horizon],
                side,
                w,
                0.0,
            );
            assert!(
                (u - nominal_displacement(side, w)).abs() < 0.08,
                "displacement {u} drifted from nominal at step {k}"
            );
            x = maps[k].apply(x, u);
            world += u - nominal_displacement(side, w);
            side = side.flip();
            assert!(
                world.abs() < 0.06,
                "world drift {world} too large at step {k}"
            );
            let sigma = period_two_orbit(&maps[k + 1], side, w);
            assert!(
                (x.x - sigma.x).abs() < 0.06 && (x.y - sigma.y).abs() < 0.2,
                "boundary error too large at step {k}: ({}, {})",
                x.x - sigma.x,
                x.y - sigma.y
            );
        }
    }

    #[test]
    fn s2s_map_agrees_with_continuous_flow_and_reset() {
        // One application of the S2S map equals the physical reset
        // (rebase + momentum kick) followed by the continuous flow.
        let p = params();
        let t_s = 0.38;
        let zdot = -0.31;
        let map = StepToStepMap::new(&p, t_s, zdot);
        let x = Vector2::new(0.08, -0.2);
        let u = -0.19;
        let discrete = map.apply(x, u);
        let post = LipState::new(x.x - u, x.y + u * zdot);
        let cont = flow(post, &p, t_s).unwrap();
        assert_abs_diff_eq!(discrete.x, cont.p, epsilon = 1e-12);
        assert_abs_diff_eq!(discrete.y, cont.l, epsilon = 1e-12);
    }
}
