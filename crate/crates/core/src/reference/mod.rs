//! Per-step planning and per-tick reference generation.
//!
//! Each control tick the planner is re-run on the current reduced-order
//! state and the surrounding stones. It determines the step duration from
//! the closed-form time for the sagittal CoM to reach the switching
//! position `epsilon * l_des`, regulates the post-impact orbital energy to
//! `E*` through the desired pre-impact vertical CoM velocity, and emits
//! smooth references: cubic CoM splines in the phase variable, the HLIP
//! analytical solution for the lateral plane, degree-5 Bézier swing-foot
//! trajectories, terrain-aligned yaw, and a phase-synchronized arm pattern.
//!
//! Re-planning is idempotent: the same state and stones produce the same
//! plan bit for bit, and under exact tracking consecutive plans describe
//! one continuous trajectory.

pub mod bezier;
pub mod hlip;
pub mod spline;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

pub use bezier::{bezier_eval, BEZIER_POINTS};
pub use hlip::{
    lateral_hlip_reference, orbit_start_state, period_two_orbit, receding_placement,
    receding_placement_bounded, LateralPlan, PlacementBounds, Side, StepToStepMap,
};

/// Number of upcoming impacts the lateral placement plans over.
pub const LATERAL_HORIZON: usize = 3;
pub use spline::{eval_spline, CubicSpline, SplineSample};

use crate::lip::{flow, LipParams, LipState};
use crate::terrain::{virtual_slope, Stone};
use crate::{Error, Result};

/// Number of tracked output channels: CoM xyz, swing xyz, pelvis yaw,
/// swing yaw.
pub const OUTPUT_CHANNELS: usize = 8;

/// Number of referenced arm joints (shoulder pitch/roll/yaw + elbow, each
/// arm).
pub const ARM_JOINTS: usize = 8;

/// Planner constants. Plain data; call [`PlannerConfig::validate`] before
/// handing a config to the planner or simulator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerConfig {
    /// Switching fraction: the step ends when the sagittal CoM reaches
    /// `epsilon * l_des`.
    pub epsilon: f64,
    /// Desired post-impact orbital energy (m^2/s^2).
    pub e_star: f64,
    /// Nominal CoM height above the virtual slope (m).
    pub z0: f64,
    /// Gravitational acceleration (m/s^2).
    pub g: f64,
    /// Nominal lateral step width (m).
    pub w_nominal: f64,
    /// Step-duration clamp (s).
    pub t_min: f64,
    pub t_max: f64,
    /// Extra swing apex height above the tallest nearby stone (m).
    pub swing_clearance_margin: f64,
    /// Exponent of the phase-based blend weight `w = s^blend_exponent`
    /// used for pre-impact estimates (1 = linear ramp).
    pub blend_exponent: f64,
    /// Swing targets keep at least this distance inside the stone edges (m).
    pub target_edge_margin: f64,
    /// Shoulder-pitch swing amplitude per meter of step length (rad/m).
    pub arm_swing_gain: f64,
    /// Nominal arm pose: shoulder pitch/roll/yaw + elbow for each arm.
    pub arm_nominal: [f64; ARM_JOINTS],
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.6,
            e_star: 0.6,
            z0: 0.5,
            g: 9.81,
            w_nominal: 0.14,
            t_min: 0.2,
            t_max: 0.8,
            swing_clearance_margin: 0.05,
            blend_exponent: 1.0,
            target_edge_margin: 0.02,
            arm_swing_gain: 0.3,
            arm_nominal: [0.0, 0.1, 0.0, 0.5, 0.0, -0.1, 0.0, 0.5],
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, arg: &'static str, reason: String| {
            if ok {
                Ok(())
            } else {
                Err(Error::invalid(arg, reason))
            }
        };
        check(
            self.epsilon > 0.0 && self.epsilon < 1.0,
            "epsilon",
            format!("must lie in (0, 1), got {}", self.epsilon),
        )?;
        check(
            self.e_star > 0.0,
            "e_star",
            format!("must be > 0, got {}", self.e_star),
        )?;
        check(self.z0 > 0.0, "z0", format!("must be > 0, got {}", self.z0))?;
        check(self.g > 0.0, "g", format!("must be > 0, got {}", self.g))?;
        check(
            self.w_nominal > 0.0,
            "w_nominal",
            format!("must be > 0, got {}", self.w_nominal),
        )?;
        check(
            self.t_min > 0.0 && self.t_min < self.t_max,
            "t_min",
            format!(
                "need 0 < t_min < t_max, got [{}, {}]",
                self.t_min, self.t_max
            ),
        )?;
        check(
            self.swing_clearance_margin >= 0.0,
            "swing_clearance_margin",
            format!("must be >= 0, got {}", self.swing_clearance_margin),
        )?;
        check(
            self.blend_exponent > 0.0,
            "blend_exponent",
            format!("must be > 0, got {}", self.blend_exponent),
        )?;
        check(
            self.target_edge_margin >= 0.0,
            "target_edge_margin",
            format!("must be >= 0, got {}", self.target_edge_margin),
        )?;
        check(
            self.arm_swing_gain >= 0.0,
            "arm_swing_gain",
            format!("must be >= 0, got {}", self.arm_swing_gain),
        )?;
        if !self.arm_nominal.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid(
                "arm_nominal",
                "entries must be finite".to_string(),
            ));
        }
        Ok(())
    }

    pub fn lip_params(&self) -> LipParams {
        LipParams::new(self.z0, self.g).expect("validated planner config")
    }
}

/// Reduced-order state recorded at the moment the step began; the CoM
/// reference splines are anchored here so the references stay fixed under
/// exact tracking instead of chasing the measured state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStart {
    pub sagittal: LipState,
    pub lateral: LipState,
    pub com_z: f64,
    pub com_z_dot: f64,
}

impl StepStart {
    pub fn is_finite(&self) -> bool {
        self.sagittal.is_finite()
            && self.lateral.is_finite()
            && self.com_z.is_finite()
            && self.com_z_dot.is_finite()
    }
}

/// Reduced-order model state handed to the planner every tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RomState {
    /// Sagittal pendulum state relative to the stance foot.
    pub sagittal: LipState,
    /// Lateral pendulum state relative to the stance foot.
    pub lateral: LipState,
    /// Vertical CoM position and velocity, world frame.
    pub com_z: f64,
    pub com_z_dot: f64,
    /// World position of the stance foot (on its stone top).
    pub stance_foot: Vector3<f64>,
    /// World position of the swing foot recorded at lift-off.
    pub swing_liftoff: Vector3<f64>,
    /// State snapshot at the step's beginning.
    pub step_start: StepStart,
    pub stance_side: Side,
    /// Time since the step started (s).
    pub elapsed: f64,
}

impl RomState {
    pub fn is_finite(&self) -> bool {
        self.sagittal.is_finite()
            && self.lateral.is_finite()
            && self.com_z.is_finite()
            && self.com_z_dot.is_finite()
            && self.stance_foot.iter().all(|v| v.is_finite())
            && self.swing_liftoff.iter().all(|v| v.is_finite())
            && self.step_start.is_finite()
            && self.elapsed.is_finite()
            && self.elapsed >= 0.0
    }
}

/// Pre-impact state estimates feeding the momentum regulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PreimpactEstimate {
    /// Predicted pre-impact CoM position (closed-form flow).
    pub p_hat: f64,
    /// Predicted pre-impact angular momentum (closed-form flow).
    pub l_hat: f64,
    /// Blended pre-impact horizontal CoM velocity.
    pub xdot_hat: f64,
    /// Blended pre-impact vertical CoM position (stance-relative).
    pub z_hat: f64,
}

/// Predict the pre-impact state: momentum and position come from the exact
/// LIP flow over the remaining time; velocity and height are convex blends
/// `w * desired + (1 - w) * current` with `w = phase^blend_exponent`, so
/// trust shifts from the measured state to the planned end state as the
/// step progresses.
pub fn estimate_preimpact(
    sagittal: LipState,
    z_current: f64,
    t_remaining: f64,
    phase: f64,
    z_desired_pre: f64,
    cfg: &PlannerConfig,
) -> Result<PreimpactEstimate> {
    if !(t_remaining.is_finite() && t_remaining >= 0.0) {
        return Err(Error::invalid(
            "t_remaining",
            format!("must be >= 0, got {t_remaining}"),
        ));
    }
    let params = cfg.lip_params();
    let flowed = flow(sagittal, &params, t_remaining)?;
    let w = phase.clamp(0.0, 1.0).powf(cfg.blend_exponent);
    let xdot_now = sagittal.l / cfg.z0;
    let xdot_pre = flowed.l / cfg.z0;
    Ok(PreimpactEstimate {
        p_hat: flowed.p,
        l_hat: flowed.l,
        xdot_hat: w * xdot_pre + (1.0 - w) * xdot_now,
        z_hat: w * z_desired_pre + (1.0 - w) * z_current,
    })
}

/// Momentum that puts the post-impact state `p+ = -(1 - epsilon) l_des` on
/// the orbital-energy level `E*`:
/// `L_des = z0 sqrt(E* + lambda^2 ((1 - epsilon) l_des)^2)`.
pub fn desired_momentum(cfg: &PlannerConfig, l_des: f64) -> f64 {
    debug_assert!(l_des > 0.0);
    let lambda_sq = cfg.g / cfg.z0;
    let p_post = (1.0 - cfg.epsilon) * l_des;
    cfg.z0 * (cfg.e_star + lambda_sq * p_post * p_post).sqrt()
}

/// Desired pre-impact vertical CoM velocity from the required momentum
/// change and the stone geometry:
/// `u_des = (L_des - L̂- + h_des ẋ̂-) / l_des`.
pub fn desired_impact_velocity(
    l_des_momentum: f64,
    l_hat_minus: f64,
    h_des: f64,
    xdot_hat_minus: f64,
    l_des: f64,
) -> Result<f64> {
    if !(l_des > 0.0) {
        return Err(Error::invalid("l_des", format!("must be > 0, got {l_des}")));
    }
    Ok((l_des_momentum - l_hat_minus + h_des * xdot_hat_minus) / l_des)
}

/// Ablation hooks threaded through from the evaluation harness; the
/// planner itself always runs the full method.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PlanOverrides {
    /// Pin the total step duration (this step and all predicted ones)
    /// instead of inverting the LIP timing.
    pub fixed_step_time: Option<f64>,
    /// Pin the desired pre-impact vertical velocity (e.g. 0 to disable
    /// momentum shaping).
    pub fixed_impact_velocity: Option<f64>,
    /// Pin only the current step's total duration, leaving lookahead
    /// predictions analytic. The simulator uses this at the guard so the
    /// pre-impact estimates collapse to the exact current state.
    pub pin_step_time: Option<f64>,
}

/// A complete plan for the step in progress. All positions are relative to
/// the stance foot unless suffixed `_world`; vertical quantities use the
/// stance-foot height as datum.
#[derive(Debug, Clone, PartialEq)]
pub struct StepPlan {
    /// Total step duration (s).
    pub t_s: f64,
    /// Phase at which this plan was built (`elapsed / t_s`).
    pub phase_anchor: f64,
    /// Horizontal and vertical center-to-center offsets to the next stone.
    pub l_des: f64,
    pub h_des: f64,
    /// Lateral foot target relative to the stance foot.
    pub w_des: f64,
    /// Desired pre-impact vertical CoM velocity (m/s).
    pub u_des: f64,
    /// Heading of the stance-to-next stone line (rad).
    pub heading: f64,
    /// Set when the timing inversion reported the target unreachable and
    /// the duration fell back to `t_max`.
    pub timing_fallback: bool,
    /// Sagittal CoM reference over phase (stance-relative).
    pub com_spline_x: CubicSpline,
    /// Vertical CoM reference over phase (stance-foot datum).
    pub com_spline_z: CubicSpline,
    /// Lateral state at the step start; the lateral reference is its
    /// closed-form flow over the step.
    pub lateral_anchor: LipState,
    /// Pre-impact boundary state of the nominal period-2 lateral orbit.
    pub lateral_boundary: LipState,
    /// Swing-foot interpolation profiles.
    pub bezier_h: [f64; BEZIER_POINTS],
    pub bezier_v: [f64; BEZIER_POINTS],
    /// Swing apex clearance target above the stance-foot datum (m).
    pub z_sw_max: f64,
    /// Swing-foot pose at lift-off (stance-relative).
    pub liftoff_swing_pose: Vector3<f64>,
    /// Touchdown target (stance-relative).
    pub swing_target: Vector3<f64>,
    /// World anchor of the stance foot.
    pub stance_foot_world: Vector3<f64>,
    pub stance_side: Side,
    /// Pendulum constants the plan was built with.
    pub lip: LipParams,
    /// Arm pattern parameters.
    pub arm_nominal: [f64; ARM_JOINTS],
    pub arm_swing_amp: f64,
}

impl StepPlan {
    /// Remaining duration after the anchor phase.
    pub fn t_remaining(&self) -> f64 {
        (1.0 - self.phase_anchor) * self.t_s
    }
}

/// Horizontal swing profile: three repeated control points at each end pin
/// endpoint positions and zero endpoint velocity.
const BEZIER_H: [f64; BEZIER_POINTS] = [0.0, 0.0, 0.0, 1.0, 1.0, 1.0];

/// The stones a plan is built against: the stance stone, the target, the
/// previous stone (swing clearance), and the stones beyond the target for
/// the lateral step-to-step prediction (possibly empty near the course
/// end; predictions replicate the last known geometry).
#[derive(Debug, Clone, Copy)]
pub struct StoneContext<'a> {
    pub stance: &'a Stone,
    pub next: &'a Stone,
    pub prev: &'a Stone,
    pub lookahead: &'a [Stone],
}

/// Plan (or re-plan) the step in progress. Pure and deterministic.
pub fn plan_step(rom: &RomState, stones: &StoneContext, cfg: &PlannerConfig) -> Result<StepPlan> {
    plan_step_with(rom, stones, cfg, &PlanOverrides::default())
}

pub fn plan_step_with(
    rom: &RomState,
    stones: &StoneContext,
    cfg: &PlannerConfig,
    overrides: &PlanOverrides,
) -> Result<StepPlan> {
    if !rom.is_finite() {
        return Err(Error::invalid("rom", "reduced-order state must be finite"));
    }
    let (stance, next, prev) = (stones.stance, stones.next, stones.prev);
    let params = cfg.lip_params();
    let (l_des, h_des, heading) = virtual_slope(stance, next);
    if !(l_des > 0.0) {
        return Err(Error::invalid(
            "stones",
            "next stone must lie ahead of the stance stone",
        ));
    }

    // Step timing: total duration = elapsed + analytic time-to-target,
    // clamped; unreachable targets fall back to the maximum duration.
    let p_switch = cfg.epsilon * l_des;
    let pinned = overrides.pin_step_time.or(overrides.fixed_step_time);
    let (t_s, timing_fallback) = match pinned {
        Some(t) => (t.max(rom.elapsed), false),
        None => {
            match crate::lip::time_to_target(rom.sagittal, &params, p_switch, 0.0, f64::INFINITY) {
                Ok(t_raw) => (
                    (rom.elapsed + t_raw)
                        .clamp(cfg.t_min, cfg.t_max)
                        .max(rom.elapsed),
                    false,
                ),
                Err(Error::Unreachable) => (cfg.t_max.max(rom.elapsed), true),
                Err(e) => return Err(e),
            }
        }
    };
    let t_rem = (t_s - rom.elapsed).max(0.0);
    let phase_anchor = (rom.elapsed / t_s).min(1.0);

    // Momentum regulation via the desired pre-impact vertical velocity.
    // The momentum target puts the PREDICTED post-impact position on the
    // E* level, so regulation survives timing clamps and disturbances; on
    // the nominal gait the prediction is -(1 - epsilon) l_des.
    let foot = rom.stance_foot;
    let z_rel = rom.com_z - foot.z;
    let z_end_rel = cfg.epsilon * h_des + cfg.z0;
    let est = estimate_preimpact(rom.sagittal, z_rel, t_rem, phase_anchor, z_end_rel, cfg)?;
    let p_post_hat = est.p_hat - l_des;
    let lambda_sq = cfg.g / cfg.z0;
    let l_des_momentum = cfg.z0 * (cfg.e_star + lambda_sq * p_post_hat * p_post_hat).sqrt();
    let u_des = match overrides.fixed_impact_velocity {
        Some(u) => u,
        None => desired_impact_velocity(l_des_momentum, est.l_hat, h_des, est.xdot_hat, l_des)?,
    };

    // CoM splines: anchored at the step-start state, ending at the
    // analytic end-of-step state (sagittal) and the momentum-consistent
    // impact state (vertical).
    let start = &rom.step_start;
    let com_spline_x = CubicSpline::hermite(
        start.sagittal.p,
        start.sagittal.velocity(&params),
        p_switch,
        est.l_hat / cfg.z0,
        t_s,
    );
    let com_spline_z =
        CubicSpline::hermite(start.com_z - foot.z, start.com_z_dot, z_end_rel, u_des, t_s);

    // Lateral foot target: receding minimum-norm placement onto the HLIP
    // period-2 orbit, regulating the world-frame foot offset alongside the
    // boundary state. Future step durations and impact velocities are
    // predicted by walking the lookahead stones under energy regulation;
    // past the end of the lookahead the last known geometry replicates.
    let lateral_pre = flow(rom.lateral, &params, t_rem)?;
    let mut maps = Vec::with_capacity(LATERAL_HORIZON);
    let mut bounds = Vec::with_capacity(LATERAL_HORIZON);
    let mut from = next;
    let mut l_prev = l_des;
    let mut t_pred = t_s;
    let mut zdot = u_des;
    let world_offset =
        rom.stance_foot.y - (stance.center[1] + rom.stance_side.sign() * cfg.w_nominal / 2.0);
    let mut landing_side = rom.stance_side.flip();
    for k in 0..LATERAL_HORIZON {
        let to = stones.lookahead.get(k);
        let (t_next, u_next, _) =
            predict_next_step(from, to, l_prev, (t_pred, zdot), cfg, overrides, &params)?;
        maps.push(StepToStepMap::new(&params, t_next, zdot));
        // Landing window of impact k on its stone (`from` is the stone
        // impact k lands on), expressed as a deviation box around the
        // nominal alternating pattern.
        let half = (from.width_y / 2.0 - cfg.target_edge_margin).max(0.0);
        let nominal_off = landing_side.sign() * cfg.w_nominal / 2.0;
        bounds.push(PlacementBounds {
            lo: -half - nominal_off - world_offset,
            hi: half - nominal_off - world_offset,
        });
        landing_side = landing_side.flip();
        if let Some(to) = to {
            l_prev = virtual_slope(from, to).0;
            from = to;
        }
        t_pred = t_next;
        zdot = u_next;
    }
    let w_des = receding_placement_bounded(
        lateral_pre,
        world_offset,
        &maps,
        rom.stance_side,
        cfg.w_nominal,
        h_des * (lateral_pre.l / cfg.z0),
        &bounds,
    );
    let orbit_a = period_two_orbit(&maps[0], rom.stance_side, cfg.w_nominal);
    let lat = LateralPlan {
        w_des,
        orbit_boundary: LipState::new(orbit_a.x, orbit_a.y),
    };

    // Swing-foot Bézier profiles between lift-off and the stone target.
    // The target stays strictly within the upcoming stone: lateral (and
    // longitudinal) corrections are clamped to its top surface minus an
    // edge margin, so the planner never commands an off-stone landing.
    let liftoff = rom.swing_liftoff - foot;
    let clamp_to_stone = |value_world: f64, center: f64, half: f64| {
        let m = cfg.target_edge_margin.min(half);
        value_world.clamp(center - half + m, center + half - m)
    };
    let target_y_world = clamp_to_stone(foot.y + lat.w_des, next.center[1], next.width_y / 2.0);
    let swing_target = Vector3::new(
        clamp_to_stone(next.center[0], next.center[0], next.depth_x / 2.0) - foot.x,
        target_y_world - foot.y,
        next.top() - foot.z,
    );
    let z_sw_max =
        prev.top().max(stance.top()).max(next.top()) - foot.z + cfg.swing_clearance_margin;
    // Interior control point inflated so the curve itself (not just its
    // hull) reaches the apex: b_v(1/2) == z_sw_max exactly.
    let z_interior = (32.0 * z_sw_max - liftoff.z - 6.0 * swing_target.z) / 25.0;
    let bezier_v = [
        liftoff.z,
        z_interior,
        z_interior,
        z_interior,
        swing_target.z,
        swing_target.z,
    ];

    Ok(StepPlan {
        t_s,
        phase_anchor,
        l_des,
        h_des,
        w_des: lat.w_des,
        u_des,
        heading,
        timing_fallback,
        com_spline_x,
        com_spline_z,
        lateral_anchor: rom.step_start.lateral,
        lateral_boundary: lat.orbit_boundary,
        bezier_h: BEZIER_H,
        bezier_v,
        z_sw_max,
        liftoff_swing_pose: liftoff,
        swing_target,
        stance_foot_world: foot,
        stance_side: rom.stance_side,
        lip: params,
        arm_nominal: cfg.arm_nominal,
        arm_swing_amp: cfg.arm_swing_gain * l_des,
    })
}

/// Predicted duration, impact vertical velocity, and height offset of the
/// step leaving `from` toward `to`, assuming the walker arrives at `from`
/// energy-regulated after a step of length `l_prev`. Without a lookahead
/// stone the last known timing replicates.
fn predict_next_step(
    from: &Stone,
    to: Option<&Stone>,
    l_prev: f64,
    fallback: (f64, f64),
    cfg: &PlannerConfig,
    overrides: &PlanOverrides,
    params: &LipParams,
) -> Result<(f64, f64, f64)> {
    let Some(to) = to else {
        return Ok((fallback.0, fallback.1, 0.0));
    };
    let (l, h, _) = virtual_slope(from, to);
    if !(l > 0.0) {
        return Ok((fallback.0, fallback.1, 0.0));
    }
    let post = LipState::new(-(1.0 - cfg.epsilon) * l_prev, desired_momentum(cfg, l_prev));
    let t = match overrides.fixed_step_time {
        Some(ft) => ft,
        None => match crate::lip::time_to_target(post, params, cfg.epsilon * l, 0.0, f64::INFINITY)
        {
            Ok(t) => t.clamp(cfg.t_min, cfg.t_max),
            Err(_) => cfg.t_max,
        },
    };
    let u = match overrides.fixed_impact_velocity {
        Some(u) => u,
        None => {
            let l_hat = flow(post, params, t)?.l;
            desired_impact_velocity(desired_momentum(cfg, l), l_hat, h, l_hat / cfg.z0, l)?
        }
    };
    Ok((t, u, h))
}

/// Swing-foot reference at phase `s`: horizontal channels interpolate from
/// lift-off to the target through `b_h`, the vertical channel follows
/// `b_v`; velocities come from the hodograph divided by the step duration.
/// Returned in world coordinates.
pub fn swing_reference(plan: &StepPlan, s: f64) -> Result<(Vector3<f64>, Vector3<f64>)> {
    let (bh, bh_d) = bezier_eval(&plan.bezier_h, s)?;
    let (bv, bv_d) = bezier_eval(&plan.bezier_v, s)?;
    let lo = plan.liftoff_swing_pose;
    let tg = plan.swing_target;
    let pos_rel = Vector3::new(
        (1.0 - bh) * lo.x + bh * tg.x,
        (1.0 - bh) * lo.y + bh * tg.y,
        bv,
    );
    let vel = Vector3::new(
        bh_d * (tg.x - lo.x) / plan.t_s,
        bh_d * (tg.y - lo.y) / plan.t_s,
        bv_d / plan.t_s,
    );
    Ok((plan.stance_foot_world + pos_rel, vel))
}

/// The per-tick output bundle: everything the CLF metric tracks.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputReference {
    pub com_pos: Vector3<f64>,
    pub com_vel: Vector3<f64>,
    pub swing_pos: Vector3<f64>,
    pub swing_vel: Vector3<f64>,
    pub pelvis_yaw: f64,
    pub swing_yaw: f64,
    pub pelvis_yaw_rate: f64,
    pub swing_yaw_rate: f64,
    pub arm_joint_ref: [f64; ARM_JOINTS],
    pub phase: f64,
}

impl OutputReference {
    pub fn is_finite(&self) -> bool {
        self.com_pos.iter().all(|v| v.is_finite())
            && self.com_vel.iter().all(|v| v.is_finite())
            && self.swing_pos.iter().all(|v| v.is_finite())
            && self.swing_vel.iter().all(|v| v.is_finite())
            && self.pelvis_yaw.is_finite()
            && self.swing_yaw.is_finite()
            && self.arm_joint_ref.iter().all(|v| v.is_finite())
    }
}

/// Arm joint references at phase `s`: an anti-phase sinusoid on the
/// shoulder pitch of each arm with amplitude proportional to the step
/// length; every joint starts (and ends) the step at its nominal value.
pub fn arm_reference(plan: &StepPlan, s: f64) -> [f64; ARM_JOINTS] {
    let mut joints = plan.arm_nominal;
    let swing = plan.arm_swing_amp * (std::f64::consts::PI * s).sin();
    let sign = plan.stance_side.sign();
    joints[0] -= sign * swing; // left shoulder pitch
    joints[4] += sign * swing; // right shoulder pitch
    joints
}

/// Assemble the desired outputs at phase `s in [0, 1]` from the active
/// plan: CoM from the splines (lateral from the HLIP closed form), swing
/// foot from the Bézier profiles, yaw aligned with the terrain heading,
/// arms from the phase-synchronized pattern.
pub fn sample_references(plan: &StepPlan, s: f64) -> Result<OutputReference> {
    if !(0.0..=1.0 + 1e-9).contains(&s) {
        return Err(Error::invalid(
            "s",
            format!("phase must lie in [0, 1], got {s}"),
        ));
    }
    let s = s.min(1.0);
    let foot = plan.stance_foot_world;
    let x = eval_spline(&plan.com_spline_x, s, plan.t_s);
    let z = eval_spline(&plan.com_spline_z, s, plan.t_s);
    // Lateral reference: analytical flow of the step-start HLIP state.
    let lat = flow(plan.lateral_anchor, &plan.lip, s * plan.t_s)?;
    let (swing_pos, swing_vel) = swing_reference(plan, s)?;
    Ok(OutputReference {
        com_pos: Vector3::new(foot.x + x.pos, foot.y + lat.p, foot.z + z.pos),
        com_vel: Vector3::new(x.vel, lat.l / plan.lip.z0(), z.vel),
        swing_pos,
        swing_vel,
        pelvis_yaw: plan.heading,
        swing_yaw: plan.heading,
        pelvis_yaw_rate: 0.0,
        swing_yaw_rate: 0.0,
        arm_joint_ref: arm_reference(plan, s),
        phase: s,
    })
}
