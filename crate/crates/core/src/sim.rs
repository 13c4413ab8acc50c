//! Hybrid closed-loop rollout engine.
//!
//! The continuous domain advances the passive horizontal pendulums by
//! their closed-form flow while the actuated channels (vertical CoM and
//! swing foot) track the planner references; the guard fires at step
//! completion (phase 1), where the momentum reset map rebases both planes
//! onto the new stance foot. The planner is re-run every tick, so step
//! timing and the regulated impact velocity always reflect the current
//! state, including any injected disturbances. Failures are trace
//! outcomes, not errors: a rollout ends in success, a foot miss, a fall,
//! or divergence.

use nalgebra::Vector3;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::clf::{
    assemble_p, clf_reward, decrease_margin, lyapunov_value, output_error, ChannelWeights,
    ClfMatrix,
};
use crate::lip::{flow, impact_reset, orbital_energy, ImpactGeometry, LipState};
use crate::reference::{
    eval_spline, orbit_start_state, plan_step_with, sample_references, swing_reference,
    OutputReference, PlanOverrides, PlannerConfig, RomState, Side, StepPlan, StepStart,
    StoneContext, OUTPUT_CHANNELS,
};
use crate::terrain::{virtual_slope, StoneSequence};
use crate::{Error, Result};

/// Sub-step tolerance for firing the guard (s).
const GUARD_TOL: f64 = 1e-12;
/// Divergence bounds on the horizontal pendulum states.
const P_LIMIT: f64 = 5.0;
const L_LIMIT: f64 = 50.0;

/// Tracking-noise model: uniform bounded offsets applied at impact, as a
/// stand-in for full-body tracking error. Per-tick tracking is exact.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub enabled: bool,
    /// Landing position offset bound (+/- m, per horizontal axis).
    pub landing_pos: f64,
    /// Impact vertical-velocity offset bound (+/- m/s).
    pub impact_velocity: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            landing_pos: 0.01,
            impact_velocity: 0.05,
        }
    }
}

/// One velocity perturbation: the horizontal CoM velocity offset `dv` is
/// delivered over `[time, time + duration)`, pro-rated per tick
/// (instantaneous when `duration` is zero). Equivalent momentum kick:
/// `z0 * dv` per plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisturbanceWindow {
    pub time: f64,
    pub dv: [f64; 2],
    #[serde(default)]
    pub duration: f64,
}

/// Randomized impulsive pushes, sampled per rollout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RandomPushes {
    pub count: u32,
    /// Magnitude bound on |dv| (m/s).
    pub max_magnitude: f64,
    /// Pushes are placed uniformly over `[0, horizon)` seconds.
    pub horizon: f64,
    /// Delivery window of each push (s).
    pub duration: f64,
    /// Scale on the lateral (y) push component. Foot placement is the
    /// reduced model's only lateral actuator and is bounded by the stone
    /// width, so lateral authority is far below the full-body policy the
    /// perturbation levels were calibrated for.
    pub lateral_scale: f64,
}

impl Default for RandomPushes {
    fn default() -> Self {
        Self {
            count: 1,
            max_magnitude: 0.3,
            horizon: 8.0,
            duration: 0.2,
            lateral_scale: 1.0,
        }
    }
}

/// CLF weighting used for the trace metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClfConfig {
    pub q_pos: [f64; OUTPUT_CHANNELS],
    pub q_vel: [f64; OUTPUT_CHANNELS],
    pub r: [f64; OUTPUT_CHANNELS],
    /// Decrease rate; `None` uses the spectral bound of the assembled P.
    pub c: Option<f64>,
    /// Reward shaping exponent.
    pub alpha: f64,
}

impl Default for ClfConfig {
    fn default() -> Self {
        Self {
            q_pos: [1.0; OUTPUT_CHANNELS],
            q_vel: [0.1; OUTPUT_CHANNELS],
            r: [1.0; OUTPUT_CHANNELS],
            c: None,
            alpha: 1.0,
        }
    }
}

impl ClfConfig {
    pub fn channels(&self) -> Vec<ChannelWeights> {
        (0..OUTPUT_CHANNELS)
            .map(|i| ChannelWeights {
                q_pos: self.q_pos[i],
                q_vel: self.q_vel[i],
                r: self.r[i],
            })
            .collect()
    }

    pub fn matrix(&self) -> Result<ClfMatrix> {
        let mut m = assemble_p(&self.channels())?;
        if let Some(c) = self.c {
            if !(c > 0.0) {
                return Err(Error::invalid("c", format!("must be > 0, got {c}")));
            }
            m.c = c;
        }
        Ok(m)
    }
}

/// Full rollout configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub planner: PlannerConfig,
    pub clf: ClfConfig,
    /// Control tick (s); 0.02 matches a 50 Hz policy rate.
    pub dt: f64,
    /// Kinematic bound on the horizontal stance-to-landing distance (m);
    /// targets beyond it are clamped radially and generally miss.
    pub max_step_reach: f64,
    /// Fall when the CoM drops below the stance-foot height plus this (m).
    pub fall_threshold: f64,
    pub noise: NoiseConfig,
    /// Explicit disturbance schedule.
    pub disturbances: Vec<DisturbanceWindow>,
    /// Optional seeded random pushes, added on top of the schedule.
    pub random_pushes: Option<RandomPushes>,
    /// Magnitude cap on any |dv| entering the rollout (m/s).
    pub disturbance_cap: f64,
    /// Initial sagittal orbital energy; `None` starts on the `E*` level.
    pub init_energy: Option<f64>,
    /// Hard wall-clock bound on simulated time (s).
    pub max_sim_time: f64,
    /// Ablation hooks (fixed step timing / fixed impact velocity).
    pub overrides: PlanOverridesConfig,
}

/// Serializable mirror of [`PlanOverrides`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlanOverridesConfig {
    pub fixed_step_time: Option<f64>,
    pub fixed_impact_velocity: Option<f64>,
}

impl PlanOverridesConfig {
    fn as_overrides(&self) -> PlanOverrides {
        PlanOverrides {
            fixed_step_time: self.fixed_step_time,
            fixed_impact_velocity: self.fixed_impact_velocity,
            pin_step_time: None,
        }
    }
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            planner: PlannerConfig::default(),
            clf: ClfConfig::default(),
            dt: 0.02,
            max_step_reach: 1.2,
            // 70% collapse of the nominal CoM height z0 = 0.5.
            fall_threshold: 0.15,
            noise: NoiseConfig::default(),
            disturbances: Vec::new(),
            random_pushes: None,
            disturbance_cap: 0.5,
            init_energy: None,
            max_sim_time: 120.0,
            overrides: PlanOverridesConfig::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.planner.validate()?;
        if !(self.dt > 0.0) {
            return Err(Error::invalid(
                "dt",
                format!("must be > 0, got {}", self.dt),
            ));
        }
        if !(self.max_step_reach > 0.0) {
            return Err(Error::invalid("max_step_reach", "must be > 0".to_string()));
        }
        if !(self.fall_threshold > 0.0 && self.fall_threshold < self.planner.z0) {
            return Err(Error::invalid(
                "fall_threshold",
                "must lie in (0, z0)".to_string(),
            ));
        }
        if self.noise.landing_pos < 0.0 || self.noise.impact_velocity < 0.0 {
            return Err(Error::invalid(
                "noise",
                "amplitudes must be >= 0".to_string(),
            ));
        }
        for (i, w) in self.disturbances.iter().enumerate() {
            let mag = (w.dv[0] * w.dv[0] + w.dv[1] * w.dv[1]).sqrt();
            if mag > self.disturbance_cap + 1e-12 {
                return Err(Error::invalid(
                    "disturbances",
                    format!(
                        "window {i} magnitude {mag} exceeds cap {}",
                        self.disturbance_cap
                    ),
                ));
            }
            if w.duration < 0.0 || w.time < 0.0 {
                return Err(Error::invalid(
                    "disturbances",
                    format!("window {i} has negative time"),
                ));
            }
        }
        if let Some(p) = &self.random_pushes {
            if p.max_magnitude > self.disturbance_cap + 1e-12 {
                return Err(Error::invalid(
                    "random_pushes",
                    format!(
                        "magnitude {} exceeds cap {}",
                        p.max_magnitude, self.disturbance_cap
                    ),
                ));
            }
        }
        self.clf.matrix().map(|_| ())
    }
}

/// Continuous simulator state between events.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimState {
    pub t: f64,
    /// Time since the current step started.
    pub elapsed: f64,
    /// Phase under the active plan (`elapsed / t_s`).
    pub phase: f64,
    pub sagittal: LipState,
    pub lateral: LipState,
    pub com_z: f64,
    pub com_z_dot: f64,
    /// Actual swing-foot world position.
    pub swing_pose: Vector3<f64>,
    pub stance_foot: Vector3<f64>,
    pub swing_liftoff: Vector3<f64>,
    /// Post-impact snapshot anchoring the step's reference splines.
    pub step_start: StepStart,
    pub stance_index: usize,
    pub stance_side: Side,
}

impl SimState {
    pub fn rom_state(&self) -> RomState {
        RomState {
            sagittal: self.sagittal,
            lateral: self.lateral,
            com_z: self.com_z,
            com_z_dot: self.com_z_dot,
            stance_foot: self.stance_foot,
            swing_liftoff: self.swing_liftoff,
            step_start: self.step_start,
            stance_side: self.stance_side,
            elapsed: self.elapsed,
        }
    }

    pub fn com_world(&self) -> Vector3<f64> {
        Vector3::new(
            self.stance_foot.x + self.sagittal.p,
            self.stance_foot.y + self.lateral.p,
            self.com_z,
        )
    }
}

/// Discrete things that happened at (or since the tick before) a record.
#[derive(Debug, Clone, PartialEq)]
pub enum Event {
    Impact {
        step: usize,
        landing_error: f64,
        post_energy: f64,
    },
    ReplannedTs {
        from: f64,
        to: f64,
    },
    Disturbance {
        dv: [f64; 2],
    },
    Miss {
        step: usize,
        landing: [f64; 2],
    },
    Fall,
    Diverge,
    Success,
}

impl Event {
    pub fn label(&self) -> &'static str {
        match self {
            Event::Impact { .. } => "impact",
            Event::ReplannedTs { .. } => "replanned_ts",
            Event::Disturbance { .. } => "disturbance",
            Event::Miss { .. } => "miss",
            Event::Fall => "fall",
            Event::Diverge => "diverge",
            Event::Success => "success",
        }
    }
}

/// Terminal outcome of a rollout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Success,
    Miss,
    Fall,
    Diverge,
}

impl Outcome {
    pub fn is_success(&self) -> bool {
        matches!(self, Outcome::Success)
    }

    pub fn label(&self) -> &'static str {
        match self {
            Outcome::Success => "success",
            Outcome::Miss => "miss",
            Outcome::Fall => "fall",
            Outcome::Diverge => "diverge",
        }
    }
}

/// Everything recorded about one impact.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImpactRecord {
    /// Index of the stone landed on.
    pub stone: usize,
    pub t: f64,
    pub landing: [f64; 2],
    pub landing_error: f64,
    pub geometry: ImpactGeometry,
    pub pre_momentum: f64,
    pub post_momentum: f64,
    pub pre_energy: f64,
    pub post_energy: f64,
    pub u_des_applied: f64,
}

/// One per-tick trace row: the full state snapshot plus the derived
/// reference/metric columns.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub state: SimState,
    pub desired: OutputReference,
    pub actual: OutputReference,
    pub energy: f64,
    pub t_s: f64,
    pub u_des: f64,
    pub v: f64,
    pub clf_margin: f64,
    pub reward: f64,
    pub events: Vec<Event>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutTrace {
    pub records: Vec<TraceRecord>,
    pub impacts: Vec<ImpactRecord>,
    pub outcome: Outcome,
}

/// Traversal report derived from a finished trace.
#[derive(Debug, Clone, PartialEq)]
pub struct SuccessReport {
    pub success: bool,
    pub outcome: Outcome,
    /// Step index at which a miss occurred, if any.
    pub failed_step: Option<usize>,
    pub stones_traversed: usize,
    pub landing_errors: Vec<f64>,
    pub post_impact_energies: Vec<f64>,
    pub v_min: f64,
    pub v_max: f64,
}

impl SuccessReport {
    pub fn mean_landing_error(&self) -> f64 {
        mean(&self.landing_errors)
    }

    /// Mean |E+ - E*| over impacts after the first.
    pub fn mean_energy_error(&self, e_star: f64) -> f64 {
        let errs: Vec<f64> = self
            .post_impact_energies
            .iter()
            .skip(1)
            .map(|e| (e - e_star).abs())
            .collect();
        mean(&errs)
    }
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Initial state: standing on stone 0 as if just after an impact, on the
/// configured energy level, with the lateral pendulum on the period-2
/// orbit for the first step's duration.
pub fn initial_state(seq: &StoneSequence, cfg: &SimConfig) -> Result<SimState> {
    if seq.stones.len() < 2 {
        return Err(Error::invalid(
            "seq",
            "need at least two stones".to_string(),
        ));
    }
    let planner = &cfg.planner;
    let params = planner.lip_params();
    let (l0, _, _) = virtual_slope(&seq.stones[0], &seq.stones[1]);
    let e_init = cfg.init_energy.unwrap_or(planner.e_star);
    let p0 = -(1.0 - planner.epsilon) * l0;
    let lambda_sq = planner.g / planner.z0;
    let mom = planner.z0 * (e_init + lambda_sq * p0 * p0).sqrt();
    let sagittal = LipState::new(p0, mom);

    let side = Side::Right;
    let foot = Vector3::new(
        seq.stones[0].center[0],
        seq.stones[0].center[1] + side.sign() * planner.w_nominal / 2.0,
        seq.stones[0].top(),
    );
    let liftoff = Vector3::new(
        seq.stones[0].center[0],
        seq.stones[0].center[1] - side.sign() * planner.w_nominal / 2.0,
        seq.stones[0].top(),
    );

    // First-step timing and impact velocity depend only on the sagittal
    // state; plan provisionally to seed the lateral pendulum on its orbit.
    let provisional = RomState {
        sagittal,
        lateral: LipState::new(0.0, 0.0),
        com_z: foot.z + planner.z0,
        com_z_dot: 0.0,
        stance_foot: foot,
        swing_liftoff: liftoff,
        step_start: StepStart {
            sagittal,
            lateral: LipState::new(0.0, 0.0),
            com_z: foot.z + planner.z0,
            com_z_dot: 0.0,
        },
        stance_side: side,
        elapsed: 0.0,
    };
    let plan0 = plan_step_with(
        &provisional,
        &stones_around(seq, 0),
        planner,
        &cfg.overrides.as_overrides(),
    )?;
    let lateral = orbit_start_state(side, plan0.t_s, planner.w_nominal, plan0.u_des, &params);

    Ok(SimState {
        t: 0.0,
        elapsed: 0.0,
        phase: 0.0,
        sagittal,
        lateral,
        com_z: foot.z + planner.z0,
        com_z_dot: 0.0,
        swing_pose: liftoff,
        stance_foot: foot,
        swing_liftoff: liftoff,
        step_start: StepStart {
            sagittal,
            lateral,
            com_z: foot.z + planner.z0,
            com_z_dot: 0.0,
        },
        stance_index: 0,
        stance_side: side,
    })
}

/// Advance the continuous state by `dt_adv` under the active plan: the
/// horizontal pendulums follow their closed-form flow, while the vertical
/// CoM and swing foot track the plan references at the new phase exactly.
pub fn step_phase(
    state: &SimState,
    plan: &StepPlan,
    dt_adv: f64,
    cfg: &SimConfig,
) -> Result<SimState> {
    let params = cfg.planner.lip_params();
    let sagittal = flow(state.sagittal, &params, dt_adv)?;
    let lateral = flow(state.lateral, &params, dt_adv)?;
    let elapsed = if (state.elapsed + dt_adv) >= plan.t_s - GUARD_TOL {
        plan.t_s
    } else {
        state.elapsed + dt_adv
    };
    let phase = (elapsed / plan.t_s).min(1.0);

    let z = eval_spline(&plan.com_spline_z, phase, plan.t_s);
    let com_z = plan.stance_foot_world.z + z.pos;
    let com_z_dot = z.vel;

    let (swing_pose, _) = swing_reference(plan, phase)?;

    Ok(SimState {
        t: state.t + dt_adv,
        elapsed,
        phase,
        sagittal,
        lateral,
        com_z,
        com_z_dot,
        swing_pose,
        ..*state
    })
}

/// Time-based guard: the step completes at phase 1, where the swing
/// reference reaches its target with zero velocity by construction.
pub fn check_guard(state: &SimState, plan: &StepPlan) -> Option<Vector3<f64>> {
    if state.elapsed >= plan.t_s - GUARD_TOL {
        Some(plan.stance_foot_world + plan.swing_target)
    } else {
        None
    }
}

/// Momentum kick applied over a tick from the active disturbance windows;
/// returns the updated state and the velocity offsets delivered.
pub fn apply_disturbance(
    state: &SimState,
    windows: &[DisturbanceWindow],
    tick_start: f64,
    tick_len: f64,
    z0: f64,
) -> (SimState, Vec<[f64; 2]>) {
    let mut out = *state;
    let mut applied = Vec::new();
    for w in windows {
        let end = w.time + w.duration.max(1e-9);
        let lo = tick_start.max(w.time);
        let hi = (tick_start + tick_len).min(end);
        if hi <= lo {
            continue;
        }
        // Same endpoint arithmetic in numerator and denominator, so a tick
        // covering the whole window delivers the kick exactly once.
        let frac = ((hi - lo) / (end - w.time)).min(1.0);
        let dv = [w.dv[0] * frac, w.dv[1] * frac];
        out.sagittal.l += z0 * dv[0];
        out.lateral.l += z0 * dv[1];
        applied.push(dv);
    }
    (out, applied)
}

/// Tracking error realized at touchdown.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ImpactNoise {
    pub landing_x: f64,
    pub landing_y: f64,
    pub impact_z_dot: f64,
}

/// Result of resolving a pending impact.
#[derive(Debug, Clone, Copy, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum ImpactOutcome {
    Landed {
        state: SimState,
        record: ImpactRecord,
    },
    Missed {
        landing: [f64; 2],
    },
}

/// Resolve the impact at the end of the current step: land the swing foot
/// at the plan's target (plus tracking noise, clamped to the kinematic
/// reach), check containment on the upcoming stone, reset both horizontal
/// momenta about the new contact, rebase the pendulum coordinates, and
/// swap stance. `plan` should be the guard-instant replan so `u_des`
/// reflects the exact pre-impact state.
pub fn apply_impact(
    state: &SimState,
    plan: &StepPlan,
    seq: &StoneSequence,
    cfg: &SimConfig,
    noise: ImpactNoise,
) -> ImpactOutcome {
    let params = cfg.planner.lip_params();
    let mut landing = Vector3::new(
        plan.stance_foot_world.x + plan.swing_target.x + noise.landing_x,
        plan.stance_foot_world.y + plan.swing_target.y + noise.landing_y,
        plan.stance_foot_world.z + plan.swing_target.z,
    );
    // Kinematic reach limit from the stance foot.
    let offset = Vector3::new(
        landing.x - state.stance_foot.x,
        landing.y - state.stance_foot.y,
        0.0,
    );
    let dist = offset.norm();
    if dist > cfg.max_step_reach {
        let scale = cfg.max_step_reach / dist;
        landing.x = state.stance_foot.x + offset.x * scale;
        landing.y = state.stance_foot.y + offset.y * scale;
    }

    let target_stone = &seq.stones[state.stance_index + 1];
    if !target_stone.contains([landing.x, landing.y]) {
        return ImpactOutcome::Missed {
            landing: [landing.x, landing.y],
        };
    }

    let z_dot_impact = plan.u_des + noise.impact_z_dot;
    let geometry = ImpactGeometry {
        x_sw: landing.x - state.stance_foot.x,
        z_sw: landing.z - state.stance_foot.z,
        p_dot: state.sagittal.l / cfg.planner.z0,
        z_dot: z_dot_impact,
    };
    let lateral_geometry = ImpactGeometry {
        x_sw: landing.y - state.stance_foot.y,
        z_sw: landing.z - state.stance_foot.z,
        p_dot: state.lateral.l / cfg.planner.z0,
        z_dot: z_dot_impact,
    };
    let post_l = impact_reset(state.sagittal.l, geometry);
    let post_lat_l = impact_reset(state.lateral.l, lateral_geometry);
    let new_sagittal = LipState::new(state.sagittal.p - geometry.x_sw, post_l);
    let new_lateral = LipState::new(state.lateral.p - lateral_geometry.x_sw, post_lat_l);
    let landing_error = ((landing.x - target_stone.center[0]).powi(2)
        + (landing.y - target_stone.center[1]).powi(2))
    .sqrt();
    let record = ImpactRecord {
        stone: state.stance_index + 1,
        t: state.t,
        landing: [landing.x, landing.y],
        landing_error,
        geometry,
        pre_momentum: state.sagittal.l,
        post_momentum: post_l,
        pre_energy: orbital_energy(state.sagittal, &params),
        post_energy: orbital_energy(new_sagittal, &params),
        u_des_applied: z_dot_impact,
    };
    let old_stance_foot = state.stance_foot;
    let landed = SimState {
        t: state.t,
        elapsed: 0.0,
        phase: 0.0,
        sagittal: new_sagittal,
        lateral: new_lateral,
        com_z: state.com_z,
        com_z_dot: z_dot_impact,
        swing_pose: old_stance_foot,
        stance_foot: landing,
        swing_liftoff: old_stance_foot,
        step_start: StepStart {
            sagittal: new_sagittal,
            lateral: new_lateral,
            com_z: state.com_z,
            com_z_dot: z_dot_impact,
        },
        stance_index: state.stance_index + 1,
        stance_side: state.stance_side.flip(),
    };
    ImpactOutcome::Landed {
        state: landed,
        record,
    }
}

struct MetricsCtx {
    matrix: ClfMatrix,
    alpha: f64,
    prev_v: Option<(f64, f64)>, // (t, V)
}

impl MetricsCtx {
    fn evaluate(
        &mut self,
        t: f64,
        desired: &OutputReference,
        actual: &OutputReference,
    ) -> Result<(f64, f64, f64)> {
        let eta = output_error(desired, actual)?;
        let v = lyapunov_value(&eta, &self.matrix)?;
        let margin = match self.prev_v {
            Some((t_prev, v_prev)) if t > t_prev => {
                decrease_margin(v_prev, v, t - t_prev, self.matrix.c)
            }
            _ => self.matrix.c * v,
        };
        self.prev_v = Some((t, v));
        Ok((v, margin, clf_reward(v, self.alpha)))
    }
}

fn actual_outputs(state: &SimState, plan: &StepPlan, phase: f64) -> Result<OutputReference> {
    let z0 = plan.lip.z0();
    let (_, swing_vel) = swing_reference(plan, phase)?;
    let refs = sample_references(plan, phase)?;
    Ok(OutputReference {
        com_pos: state.com_world(),
        com_vel: Vector3::new(state.sagittal.l / z0, state.lateral.l / z0, state.com_z_dot),
        swing_pos: state.swing_pose,
        swing_vel,
        pelvis_yaw: refs.pelvis_yaw,
        swing_yaw: refs.swing_yaw,
        pelvis_yaw_rate: refs.pelvis_yaw_rate,
        swing_yaw_rate: refs.swing_yaw_rate,
        arm_joint_ref: refs.arm_joint_ref,
        phase,
    })
}

fn stones_around(seq: &StoneSequence, idx: usize) -> StoneContext<'_> {
    let stance = &seq.stones[idx];
    StoneContext {
        stance,
        next: &seq.stones[idx + 1],
        prev: if idx > 0 {
            &seq.stones[idx - 1]
        } else {
            stance
        },
        lookahead: &seq.stones[(idx + 2).min(seq.stones.len())..],
    }
}

/// Run one closed-loop rollout over a stone sequence. Deterministic in
/// `(seq, cfg, seed)`.
pub fn rollout(seq: &StoneSequence, cfg: &SimConfig, seed: u64) -> Result<RolloutTrace> {
    cfg.validate()?;
    seq.check_invariants()?;
    let planner = &cfg.planner;
    let params = planner.lip_params();
    let overrides = cfg.overrides.as_overrides();

    // Independent RNG streams: 1 = impact noise, 2 = random pushes.
    let mut noise_rng = ChaCha8Rng::seed_from_u64(seed);
    noise_rng.set_stream(1);
    let mut push_rng = ChaCha8Rng::seed_from_u64(seed);
    push_rng.set_stream(2);

    let mut windows = cfg.disturbances.clone();
    if let Some(p) = &cfg.random_pushes {
        for _ in 0..p.count {
            let time = push_rng.random::<f64>() * p.horizon;
            let angle = push_rng.random::<f64>() * std::f64::consts::TAU;
            let mag = push_rng.random::<f64>() * p.max_magnitude;
            windows.push(DisturbanceWindow {
                time,
                dv: [mag * angle.cos(), mag * angle.sin() * p.lateral_scale],
                duration: p.duration,
            });
        }
    }

    let mut metrics = MetricsCtx {
        matrix: cfg.clf.matrix()?,
        alpha: cfg.clf.alpha,
        prev_v: None,
    };
    let mut state = initial_state(seq, cfg)?;
    let mut records: Vec<TraceRecord> = Vec::new();
    let mut impacts: Vec<ImpactRecord> = Vec::new();
    let mut pending_events: Vec<Event> = Vec::new();
    let mut prev_plan_ts: Option<f64> = None;
    // Latched when an advance lands on the active plan's step end; the
    // impact must then happen regardless of what a fresh replan would say
    // (the state may have crossed the switching target in between).
    let mut pending_impact = false;

    let final_stone = seq.stones.len() - 1;
    let outcome: Outcome;

    'sim: loop {
        let stones = stones_around(seq, state.stance_index);

        // Impact at the guard.
        if pending_impact {
            pending_impact = false;
            // Final replan pinned at the guard instant so the regulation
            // quantities use exact pre-impact estimates.
            let guard_overrides = PlanOverrides {
                pin_step_time: Some(state.elapsed.max(1e-9)),
                ..overrides
            };
            let plan_f = plan_step_with(&state.rom_state(), &stones, planner, &guard_overrides)?;

            let mut noise = ImpactNoise::default();
            if cfg.noise.enabled {
                noise.landing_x = (noise_rng.random::<f64>() * 2.0 - 1.0) * cfg.noise.landing_pos;
                noise.landing_y = (noise_rng.random::<f64>() * 2.0 - 1.0) * cfg.noise.landing_pos;
                noise.impact_z_dot =
                    (noise_rng.random::<f64>() * 2.0 - 1.0) * cfg.noise.impact_velocity;
            }
            match apply_impact(&state, &plan_f, seq, cfg, noise) {
                ImpactOutcome::Landed {
                    state: landed,
                    record,
                } => {
                    impacts.push(record);
                    pending_events.push(Event::Impact {
                        step: record.stone,
                        landing_error: record.landing_error,
                        post_energy: record.post_energy,
                    });
                    state = landed;
                    prev_plan_ts = None;
                    if state.stance_index == final_stone {
                        pending_events.push(Event::Success);
                        push_terminal_raw(
                            &mut records,
                            &mut pending_events,
                            &state,
                            &mut metrics,
                            &plan_f,
                        )?;
                        outcome = Outcome::Success;
                        break 'sim;
                    }
                }
                ImpactOutcome::Missed { landing } => {
                    pending_events.push(Event::Miss {
                        step: state.stance_index + 1,
                        landing,
                    });
                    push_terminal_raw(
                        &mut records,
                        &mut pending_events,
                        &state,
                        &mut metrics,
                        &plan_f,
                    )?;
                    outcome = Outcome::Miss;
                    break 'sim;
                }
            }
            continue 'sim;
        }

        // Ordinary tick: replan, record, disturb, advance, check failures.
        let plan = match plan_step_with(&state.rom_state(), &stones, planner, &overrides) {
            Ok(p) => p,
            Err(_) => {
                push_terminal(
                    &mut records,
                    &mut pending_events,
                    &state,
                    &mut metrics,
                    Event::Diverge,
                )?;
                outcome = Outcome::Diverge;
                break 'sim;
            }
        };
        state.phase = (state.elapsed / plan.t_s).min(1.0);
        if let Some(prev_ts) = prev_plan_ts {
            if (plan.t_s - prev_ts).abs() > 1e-9 {
                pending_events.push(Event::ReplannedTs {
                    from: prev_ts,
                    to: plan.t_s,
                });
            }
        }
        prev_plan_ts = Some(plan.t_s);

        let desired = sample_references(&plan, state.phase)?;
        let actual = actual_outputs(&state, &plan, state.phase)?;
        let (v, margin, reward) = metrics.evaluate(state.t, &desired, &actual)?;
        records.push(TraceRecord {
            state,
            desired,
            actual,
            energy: orbital_energy(state.sagittal, &params),
            t_s: plan.t_s,
            u_des: plan.u_des,
            v,
            clf_margin: margin,
            reward,
            events: std::mem::take(&mut pending_events),
        });

        if state.t > cfg.max_sim_time {
            push_terminal(
                &mut records,
                &mut pending_events,
                &state,
                &mut metrics,
                Event::Diverge,
            )?;
            outcome = Outcome::Diverge;
            break 'sim;
        }

        let t_rem = plan.t_s - state.elapsed;
        let dt_adv = t_rem.min(cfg.dt);
        let (disturbed, applied) = apply_disturbance(&state, &windows, state.t, dt_adv, planner.z0);
        for dv in applied {
            pending_events.push(Event::Disturbance { dv });
        }
        state = disturbed;
        state = step_phase(&state, &plan, dt_adv, cfg)?;
        if check_guard(&state, &plan).is_some() {
            pending_impact = true;
            prev_plan_ts = None;
        }

        if state.com_z < state.stance_foot.z + cfg.fall_threshold {
            push_terminal(
                &mut records,
                &mut pending_events,
                &state,
                &mut metrics,
                Event::Fall,
            )?;
            outcome = Outcome::Fall;
            break 'sim;
        }
        if !state.sagittal.is_finite()
            || !state.lateral.is_finite()
            || state.sagittal.p.abs() > P_LIMIT
            || state.sagittal.l.abs() > L_LIMIT
            || state.lateral.p.abs() > P_LIMIT
            || state.lateral.l.abs() > L_LIMIT
        {
            push_terminal(
                &mut records,
                &mut pending_events,
                &state,
                &mut metrics,
                Event::Diverge,
            )?;
            outcome = Outcome::Diverge;
            break 'sim;
        }
    }

    Ok(RolloutTrace {
        records,
        impacts,
        outcome,
    })
}

/// Emit a terminal record by re-planning at the current state (used for
/// fall/divergence, where a plan is still well-formed).
fn push_terminal(
    records: &mut Vec<TraceRecord>,
    pending: &mut Vec<Event>,
    state: &SimState,
    metrics: &mut MetricsCtx,
    event: Event,
) -> Result<()> {
    pending.push(event);
    // Synthesize minimal outputs from the raw state; references may be
    // unavailable (e.g. non-finite state), so reuse the actual as desired
    // to keep the record well-formed.
    let com = state.com_world();
    let bundle = OutputReference {
        com_pos: com,
        com_vel: Vector3::zeros(),
        swing_pos: state.swing_pose,
        swing_vel: Vector3::zeros(),
        pelvis_yaw: 0.0,
        swing_yaw: 0.0,
        pelvis_yaw_rate: 0.0,
        swing_yaw_rate: 0.0,
        arm_joint_ref: [0.0; 8],
        phase: state.phase,
    };
    let (v, margin, reward) = metrics.evaluate(state.t, &bundle, &bundle)?;
    records.push(TraceRecord {
        state: *state,
        desired: bundle.clone(),
        actual: bundle,
        energy: 0.0,
        t_s: 0.0,
        u_des: 0.0,
        v,
        clf_margin: margin,
        reward,
        events: std::mem::take(pending),
    });
    Ok(())
}

/// Terminal record that still has a valid plan (miss, success).
fn push_terminal_raw(
    records: &mut Vec<TraceRecord>,
    pending: &mut Vec<Event>,
    state: &SimState,
    metrics: &mut MetricsCtx,
    plan: &StepPlan,
) -> Result<()> {
    let phase = state.phase.min(1.0);
    let desired = sample_references(plan, phase)?;
    let actual = actual_outputs(state, plan, phase)?;
    let (v, margin, reward) = metrics.evaluate(state.t, &desired, &actual)?;
    let params = plan.lip;
    records.push(TraceRecord {
        state: *state,
        desired,
        actual,
        energy: orbital_energy(state.sagittal, &params),
        t_s: plan.t_s,
        u_des: plan.u_des,
        v,
        clf_margin: margin,
        reward,
        events: std::mem::take(pending),
    });
    Ok(())
}

/// Score a finished trace: success means every impact landed on its stone
/// and the final stone was reached without a fall.
pub fn evaluate_success(trace: &RolloutTrace, seq: &StoneSequence) -> SuccessReport {
    let mut failed_step = None;
    for record in &trace.records {
        for ev in &record.events {
            if let Event::Miss { step, .. } = ev {
                failed_step = Some(*step);
            }
        }
    }
    let landing_errors: Vec<f64> = trace.impacts.iter().map(|i| i.landing_error).collect();
    let post_impact_energies: Vec<f64> = trace.impacts.iter().map(|i| i.post_energy).collect();
    let (mut v_min, mut v_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for r in &trace.records {
        v_min = v_min.min(r.v);
        v_max = v_max.max(r.v);
    }
    let success = trace.outcome.is_success()
        && trace.impacts.len() == seq.stones.len() - 1
        && trace
            .impacts
            .iter()
            .all(|i| seq.stones[i.stone].contains(i.landing));
    SuccessReport {
        success,
        outcome: trace.outcome,
        failed_step,
        stones_traversed: trace.impacts.len(),
        landing_errors,
        post_impact_energies,
        v_min,
        v_max,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::terrain::{generate_terrain, Stone, TerrainKind};
    use approx::assert_abs_diff_eq;

    fn flat_seq(n: usize, gap: f64) -> StoneSequence {
        let mut stones = Vec::new();
        let mut x = 0.0;
        for i in 0..n {
            if i > 0 {
                x += 0.2 + gap;
            }
            stones.push(Stone {
                center: [x, 0.0, 0.0],
                depth_x: 0.2,
                width_y: 0.4,
                block_height: 1.0,
            });
        }
        StoneSequence {
            kind: TerrainKind::FlatStones,
            stones,
            platform_drop: 0.5,
            difficulty: 0.0,
            seed: 0,
        }
    }

    #[test]
    fn flat_rollout_succeeds_with_energy_regulation() {
        let seq = flat_seq(20, 0.3);
        let cfg = SimConfig::default();
        let trace = rollout(&seq, &cfg, 1).unwrap();
        assert_eq!(trace.outcome, Outcome::Success);
        let report = evaluate_success(&trace, &seq);
        assert!(report.success);
        assert_eq!(report.stones_traversed, 19);
        for imp in trace.impacts.iter().skip(1) {
            assert!(
                (imp.post_energy - cfg.planner.e_star).abs() <= 1e-6,
                "energy {} off target at stone {}",
                imp.post_energy,
                imp.stone
            );
        }
    }

    #[test]
    fn post_impact_position_splits_step_length() {
        let seq = flat_seq(6, 0.3);
        let cfg = SimConfig::default();
        let trace = rollout(&seq, &cfg, 2).unwrap();
        assert_eq!(trace.outcome, Outcome::Success);
        // After each impact the CoM sits -(1-eps) l_des behind the new
        // stance foot.
        for (i, imp) in trace.impacts.iter().enumerate().skip(1) {
            let stance = &seq.stones[imp.stone - 1];
            let next = &seq.stones[imp.stone];
            let l_des = next.center[0] - stance.center[0];
            // Find the first record of the new step.
            let rec = trace
                .records
                .iter()
                .find(|r| r.state.stance_index == imp.stone)
                .unwrap_or_else(|| panic!("no record for step {i}"));
            assert_abs_diff_eq!(
                rec.state.sagittal.p,
                -(1.0 - cfg.planner.epsilon) * l_des,
                epsilon = 1e-9
            );
        }
    }

    #[test]
    fn unreachable_gap_misses() {
        let seq = flat_seq(3, 2.0);
        let cfg = SimConfig::default();
        let trace = rollout(&seq, &cfg, 3).unwrap();
        assert_eq!(trace.outcome, Outcome::Miss);
        let report = evaluate_success(&trace, &seq);
        assert!(!report.success);
        assert_eq!(report.failed_step, Some(1));
    }

    #[test]
    fn rollouts_are_bit_identical() {
        let seq = generate_terrain(TerrainKind::HeightVarying, 0.5, 44, 12).unwrap();
        let mut cfg = SimConfig::default();
        cfg.noise.enabled = true;
        cfg.random_pushes = Some(RandomPushes::default());
        let a = rollout(&seq, &cfg, 99).unwrap();
        let b = rollout(&seq, &cfg, 99).unwrap();
        assert_eq!(a, b);
        let c = rollout(&seq, &cfg, 100).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn step_phase_tracks_references_exactly() {
        let seq = flat_seq(4, 0.3);
        let cfg = SimConfig::default();
        let state = initial_state(&seq, &cfg).unwrap();
        let plan = plan_step_with(
            &state.rom_state(),
            &stones_around(&seq, 0),
            &cfg.planner,
            &PlanOverrides::default(),
        )
        .unwrap();
        let advanced = step_phase(&state, &plan, cfg.dt, &cfg).unwrap();
        // Horizontal advance equals the closed-form flow.
        let params = cfg.planner.lip_params();
        let expected = flow(state.sagittal, &params, cfg.dt).unwrap();
        assert_eq!(advanced.sagittal, expected);
        // Vertical equals the spline at the new phase, exactly.
        let z_ref = plan.stance_foot_world.z
            + eval_spline(&plan.com_spline_z, advanced.phase, plan.t_s).pos;
        assert_eq!(advanced.com_z, z_ref);
        // Swing pose equals the Bézier reference at the new phase.
        let (swing_ref, _) = swing_reference(&plan, advanced.phase).unwrap();
        assert_eq!(advanced.swing_pose, swing_ref);
    }

    #[test]
    fn zero_amplitude_noise_equals_exact_mode() {
        let seq = flat_seq(8, 0.35);
        let exact = SimConfig::default();
        let noisy = SimConfig {
            noise: NoiseConfig {
                enabled: true,
                landing_pos: 0.0,
                impact_velocity: 0.0,
            },
            ..SimConfig::default()
        };
        let a = rollout(&seq, &exact, 5).unwrap();
        let b = rollout(&seq, &noisy, 5).unwrap();
        assert_eq!(a.impacts, b.impacts);
        assert_eq!(a.outcome, b.outcome);
    }

    #[test]
    fn guard_fires_only_at_phase_one() {
        let seq = flat_seq(4, 0.3);
        let cfg = SimConfig::default();
        let state = initial_state(&seq, &cfg).unwrap();
        let plan = plan_step_with(
            &state.rom_state(),
            &stones_around(&seq, 0),
            &cfg.planner,
            &PlanOverrides::default(),
        )
        .unwrap();
        assert!(check_guard(&state, &plan).is_none());
        let mut mid = state;
        mid.elapsed = 0.5 * plan.t_s;
        assert!(check_guard(&mid, &plan).is_none());
        let mut done = state;
        done.elapsed = plan.t_s;
        let landing = check_guard(&done, &plan).unwrap();
        assert_abs_diff_eq!(
            (landing - (plan.stance_foot_world + plan.swing_target)).norm(),
            0.0,
            epsilon = 0.0
        );
    }

    #[test]
    fn apply_impact_edge_landing_convention() {
        // Landing exactly on the stone edge counts; one millimeter beyond
        // misses.
        let seq = flat_seq(4, 0.3);
        let cfg = SimConfig::default();
        let state = initial_state(&seq, &cfg).unwrap();
        let plan = plan_step_with(
            &state.rom_state(),
            &stones_around(&seq, 0),
            &cfg.planner,
            &PlanOverrides::default(),
        )
        .unwrap();
        let target = &seq.stones[1];
        let nominal_y = plan.stance_foot_world.y + plan.swing_target.y;
        let edge = target.center[1] + target.width_y / 2.0;
        let on_edge = ImpactNoise {
            landing_y: edge - nominal_y,
            ..Default::default()
        };
        match apply_impact(&state, &plan, &seq, &cfg, on_edge) {
            ImpactOutcome::Landed { record, .. } => assert_eq!(record.landing[1], edge),
            other => panic!("edge landing should count: {other:?}"),
        }
        let beyond = ImpactNoise {
            landing_y: edge - nominal_y + 0.001,
            ..Default::default()
        };
        assert!(matches!(
            apply_impact(&state, &plan, &seq, &cfg, beyond),
            ImpactOutcome::Missed { .. }
        ));
    }

    #[test]
    fn impact_momentum_continuity_is_exact() {
        let seq = generate_terrain(TerrainKind::HeightVarying, 0.5, 7, 10).unwrap();
        let cfg = SimConfig::default();
        let trace = rollout(&seq, &cfg, 11).unwrap();
        assert!(!trace.impacts.is_empty());
        for imp in &trace.impacts {
            assert_eq!(
                imp.post_momentum,
                impact_reset(imp.pre_momentum, imp.geometry)
            );
        }
    }

    #[test]
    fn empty_disturbance_schedule_is_identity() {
        let seq = flat_seq(4, 0.3);
        let cfg = SimConfig::default();
        let state = initial_state(&seq, &cfg).unwrap();
        let (out, applied) = apply_disturbance(&state, &[], 0.1, 0.02, cfg.planner.z0);
        assert_eq!(out, state);
        assert!(applied.is_empty());
    }

    #[test]
    fn disturbance_jumps_momentum_by_z0_dv() {
        let seq = flat_seq(4, 0.3);
        let cfg = SimConfig::default();
        let state = initial_state(&seq, &cfg).unwrap();
        let w = DisturbanceWindow {
            time: 0.1,
            dv: [0.1, 0.0],
            duration: 0.0,
        };
        // Tick covering the window start receives the whole kick.
        let (out, applied) = apply_disturbance(&state, &[w], 0.1, 0.02, cfg.planner.z0);
        assert_eq!(applied.len(), 1);
        assert_abs_diff_eq!(
            out.sagittal.l - state.sagittal.l,
            cfg.planner.z0 * 0.1,
            epsilon = 1e-12
        );
        assert_eq!(out.lateral.l, state.lateral.l);
        // A tick before the window is untouched.
        let (out, applied) = apply_disturbance(&state, &[w], 0.0, 0.02, cfg.planner.z0);
        assert_eq!(out, state);
        assert!(applied.is_empty());
    }

    #[test]
    fn disturbance_triggers_replanned_ts_event() {
        let seq = flat_seq(10, 0.35);
        let cfg = SimConfig {
            disturbances: vec![DisturbanceWindow {
                time: 0.1,
                dv: [0.2, 0.0],
                duration: 0.0,
            }],
            ..SimConfig::default()
        };
        let trace = rollout(&seq, &cfg, 13).unwrap();
        let has_disturbance = trace.records.iter().any(|r| {
            r.events
                .iter()
                .any(|e| matches!(e, Event::Disturbance { .. }))
        });
        let has_replan = trace.records.iter().any(|r| {
            r.events
                .iter()
                .any(|e| matches!(e, Event::ReplannedTs { .. }))
        });
        assert!(has_disturbance);
        assert!(
            has_replan,
            "disturbance should change the planned step duration"
        );
    }

    #[test]
    fn hybrid_consistency_counts() {
        let seq = flat_seq(12, 0.32);
        let cfg = SimConfig::default();
        let trace = rollout(&seq, &cfg, 17).unwrap();
        assert_eq!(trace.outcome, Outcome::Success);
        let impact_events: usize = trace
            .records
            .iter()
            .flat_map(|r| &r.events)
            .filter(|e| matches!(e, Event::Impact { .. }))
            .count();
        let stance_changes = trace
            .records
            .windows(2)
            .filter(|w| w[1].state.stance_index != w[0].state.stance_index)
            .count();
        assert_eq!(impact_events, trace.impacts.len());
        assert_eq!(stance_changes, trace.impacts.len());
        assert_eq!(trace.impacts.len(), seq.stones.len() - 1);
    }

    #[test]
    fn timestamps_strictly_increase_and_single_terminal_event() {
        for seed in 0..5 {
            let seq = generate_terrain(TerrainKind::FlatStones, 0.5, seed, 10).unwrap();
            let cfg = SimConfig::default();
            let trace = rollout(&seq, &cfg, seed).unwrap();
            for w in trace.records.windows(2) {
                assert!(
                    w[1].state.t > w[0].state.t,
                    "timestamps must strictly increase"
                );
            }
            let terminal: usize = trace
                .records
                .iter()
                .flat_map(|r| &r.events)
                .filter(|e| {
                    matches!(
                        e,
                        Event::Success | Event::Miss { .. } | Event::Fall | Event::Diverge
                    )
                })
                .count();
            assert_eq!(terminal, 1);
        }
    }

    #[test]
    fn sagittal_energy_conserved_between_impacts() {
        let seq = flat_seq(8, 0.35);
        let cfg = SimConfig::default();
        let trace = rollout(&seq, &cfg, 23).unwrap();
        let mut prev: Option<(usize, f64)> = None;
        for r in &trace.records {
            if let Some((idx, e)) = prev {
                if r.state.stance_index == idx
                    && !r.events.iter().any(|ev| matches!(ev, Event::Success))
                {
                    assert!(
                        (r.energy - e).abs() <= 1e-9 * e.abs().max(1.0),
                        "energy drifted within a step"
                    );
                }
            }
            prev = Some((r.state.stance_index, r.energy));
        }
    }

    #[test]
    fn reference_continuity_across_impacts_on_uniform_course() {
        // Converged nominal walking: position references are C0 across the
        // stance swap (per-foot and CoM world positions).
        let seq = flat_seq(14, 0.3);
        let cfg = SimConfig::default();
        let trace = rollout(&seq, &cfg, 31).unwrap();
        assert_eq!(trace.outcome, Outcome::Success);

        // Skip the first few steps so the lateral deadbeat has converged.
        for pair in trace.records.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            if b.state.stance_index != a.state.stance_index
                && a.state.stance_index >= 3
                && !b.events.iter().any(|e| matches!(e, Event::Success))
            {
                // End-of-step references of the outgoing plan: rebuild it
                // from the stored state.
                let plan = plan_step_with(
                    &a.state.rom_state(),
                    &stones_around(&seq, a.state.stance_index),
                    &cfg.planner,
                    &PlanOverrides::default(),
                )
                .unwrap();
                let end = sample_references(&plan, 1.0).unwrap();
                let start = &b.desired;
                assert_abs_diff_eq!((end.com_pos - start.com_pos).norm(), 0.0, epsilon = 1e-8);
                // Feet: the outgoing swing target becomes the new stance
                // foot; the outgoing stance foot becomes the new swing.
                assert_abs_diff_eq!(
                    (end.swing_pos - b.state.stance_foot).norm(),
                    0.0,
                    epsilon = 1e-9
                );
                assert_abs_diff_eq!(
                    (a.state.stance_foot - start.swing_pos).norm(),
                    0.0,
                    epsilon = 1e-9
                );
            }
        }
    }

    #[test]
    fn trace_replay_reproduces_derived_columns() {
        let seq = generate_terrain(TerrainKind::HeightVarying, 0.4, 3, 8).unwrap();
        let cfg = SimConfig::default();
        let trace = rollout(&seq, &cfg, 41).unwrap();
        let params = cfg.planner.lip_params();
        let matrix = cfg.clf.matrix().unwrap();
        let mut prev_v: Option<(f64, f64)> = None;
        for r in &trace.records {
            if r.state.stance_index + 1 >= seq.stones.len()
                || r.events.iter().any(|e| {
                    matches!(
                        e,
                        Event::Miss { .. } | Event::Fall | Event::Diverge | Event::Success
                    )
                })
            {
                break;
            }
            // References recomputed from the stored state must match the
            // stored columns bit for bit.
            let plan = plan_step_with(
                &r.state.rom_state(),
                &stones_around(&seq, r.state.stance_index),
                &cfg.planner,
                &PlanOverrides::default(),
            )
            .unwrap();
            assert_eq!(plan.t_s, r.t_s);
            assert_eq!(plan.u_des, r.u_des);
            let desired = sample_references(&plan, r.state.phase).unwrap();
            assert_eq!(desired, r.desired);
            assert_eq!(orbital_energy(r.state.sagittal, &params), r.energy);
            let actual = actual_outputs(&r.state, &plan, r.state.phase).unwrap();
            let eta = output_error(&desired, &actual).unwrap();
            let v = lyapunov_value(&eta, &matrix).unwrap();
            assert_eq!(v, r.v);
            let margin = match prev_v {
                Some((t_prev, v_prev)) if r.state.t > t_prev => {
                    decrease_margin(v_prev, v, r.state.t - t_prev, matrix.c)
                }
                _ => matrix.c * v,
            };
            assert_eq!(margin, r.clf_margin);
            assert_eq!(clf_reward(v, cfg.clf.alpha), r.reward);
            prev_v = Some((r.state.t, v));
        }
    }

    #[test]
    fn evaluate_success_consistency() {
        let seq = flat_seq(10, 0.3);
        let cfg = SimConfig::default();
        let trace = rollout(&seq, &cfg, 53).unwrap();
        let report = evaluate_success(&trace, &seq);
        assert!(report.success);
        assert_eq!(report.landing_errors.len(), trace.impacts.len());
        for (err, imp) in report.landing_errors.iter().zip(&trace.impacts) {
            let c = seq.stones[imp.stone].center;
            let recomputed =
                ((imp.landing[0] - c[0]).powi(2) + (imp.landing[1] - c[1]).powi(2)).sqrt();
            assert_eq!(*err, recomputed);
        }
        assert!(report.v_min >= 0.0);
        assert!(report.v_max >= report.v_min);
    }

    #[test]
    fn all_families_succeed_at_low_difficulty() {
        let cfg = SimConfig::default();
        for kind in TerrainKind::ALL {
            for seed in 0..10 {
                let seq = generate_terrain(kind, 0.5, seed, 12).unwrap();
                let trace = rollout(&seq, &cfg, seed).unwrap();
                assert_eq!(
                    trace.outcome,
                    Outcome::Success,
                    "{} seed {seed} failed",
                    kind.name()
                );
                for imp in trace.impacts.iter().skip(1) {
                    assert!(
                        (imp.post_energy - cfg.planner.e_star).abs() <= 1e-6,
                        "{} seed {seed}: energy {}",
                        kind.name(),
                        imp.post_energy
                    );
                }
            }
        }
    }
}
