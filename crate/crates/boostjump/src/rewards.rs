//! Reward terms, the bounded tolerance kernel, and the success predicates.
//!
//! Every term carries its raw value and weight so telemetry can log the
//! full breakdown. Weights follow the training reward table; rows with no
//! planar counterpart are recorded in [`reward_table_audit`].

use crate::sim2d::AgentId;
use std::f64::consts::PI;

/// Bounded reward kernel: 1 inside `[lower, upper]`, decaying through a
/// long-tail profile outside, reaching exactly `value_at_margin` when the
/// deviation equals `margin`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToleranceSpec {
    lower: f64,
    upper: f64,
    margin: f64,
    value_at_margin: f64,
}

impl ToleranceSpec {
    /// Panics if `margin <= 0`, `value_at_margin` is outside (0, 1), or
    /// `lower > upper`. Validation happens here, never at call time.
    pub fn new(lower: f64, upper: f64, margin: f64, value_at_margin: f64) -> Self {
        assert!(lower <= upper, "tolerance bounds inverted: [{lower}, {upper}]");
        assert!(margin > 0.0, "tolerance margin must be positive, got {margin}");
        assert!(
            value_at_margin > 0.0 && value_at_margin < 1.0,
            "value_at_margin must be in (0, 1), got {value_at_margin}"
        );
        ToleranceSpec {
            lower,
            upper,
            margin,
            value_at_margin,
        }
    }
}

/// Evaluate the tolerance kernel at `x`.
pub fn tolerance(x: f64, spec: &ToleranceSpec) -> f64 {
    if x >= spec.lower && x <= spec.upper {
        return 1.0;
    }
    let deviation = if x < spec.lower {
        spec.lower - x
    } else {
        x - spec.upper
    };
    let z = deviation / spec.margin;
    let scale = (1.0 / spec.value_at_margin - 1.0).sqrt();
    1.0 / ((z * scale).powi(2) + 1.0)
}

/// One named reward term: raw (gated) value times weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Term {
    pub name: &'static str,
    pub raw: f64,
    pub weight: f64,
}

impl Term {
    pub fn weighted(&self) -> f64 {
        self.raw * self.weight
    }
}

pub fn term_sum(terms: &[Term]) -> f64 {
    terms.iter().map(Term::weighted).sum()
}

/// Jump phase as seen by the reward gates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhaseKind {
    Initial,
    Flight,
    Landing,
}

/// Success thresholds for the touchdown predicate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuccessSpec {
    pub min_height: f64,
    pub max_xy_error: f64,
    pub flip_min_pitch: f64,
}

impl Default for SuccessSpec {
    fn default() -> Self {
        SuccessSpec {
            min_height: 1.0,
            max_xy_error: 0.4,
            flip_min_pitch: 1.5 * PI,
        }
    }
}

/// Everything one agent's task and regularization terms need for a step.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentSnapshot {
    pub agent: AgentId,
    pub base_height: f64,
    pub vx: f64,
    pub pitch: f64,
    /// Base height latched at reset, reference for the squat term.
    pub h_init: f64,
    pub leg_lengths: [f64; 2],
    pub leg_rates: [f64; 2],
    pub leg_prev_rates: [f64; 2],
    pub leg_forces: [f64; 2],
    pub leg_targets: [f64; 2],
    pub leg_defaults: [f64; 2],
    /// Foot height relative to the base (foot z minus base z).
    pub feet_rel_z: [f64; 2],
    pub foot_contact: [bool; 2],
    pub base_contact: bool,
    pub action: [f64; 4],
    pub prev_action: [f64; 4],
    pub prev_prev_action: [f64; 4],
    pub phase: PhaseKind,
    pub success: bool,
    pub control_dt: f64,
}

/// Shared quantities for the cooperation block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoopSnapshot {
    pub h_jumper: f64,
    pub h_launcher: f64,
    pub pitch_jumper: f64,
    /// Largest base contact force on either robot this control step (N).
    pub max_base_force: f64,
    pub success: bool,
}

/// The per-agent launch command.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Command {
    pub target_vx: f64,
    pub target_height: f64,
}

fn sq_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

const PITCH_DEV_THRESHOLD: f64 = PI / 12.0;

/// Regularization block: smoothness, effort, and posture penalties.
pub fn regularization_reward(s: &AgentSnapshot) -> Vec<Term> {
    let rate_sq = sq_norm(&s.leg_rates);
    let accel: Vec<f64> = (0..2)
        .map(|i| (s.leg_rates[i] - s.leg_prev_rates[i]) / s.control_dt)
        .collect();
    let force_weight = match s.agent {
        AgentId::Launcher => -2.5e-6,
        AgentId::Jumper => -2.5e-5,
    };
    let smooth: Vec<f64> = (0..4)
        .map(|i| s.action[i] - 2.0 * s.prev_action[i] + s.prev_prev_action[i])
        .collect();
    let act_rate: Vec<f64> = (0..4).map(|i| s.action[i] - s.prev_action[i]).collect();
    let tracking: Vec<f64> = (0..2).map(|i| s.leg_lengths[i] - s.leg_targets[i]).collect();
    let upright_raw = s.pitch.sin().powi(2);

    let mut terms = vec![
        Term {
            name: "leg_rate_sq",
            raw: rate_sq,
            weight: -1.0e-4,
        },
        Term {
            name: "leg_accel_sq",
            raw: sq_norm(&accel),
            weight: -2.5e-7,
        },
        Term {
            name: "leg_force_sq",
            raw: sq_norm(&s.leg_forces),
            weight: force_weight,
        },
        Term {
            name: "target_tracking",
            raw: sq_norm(&tracking),
            weight: -0.5,
        },
        Term {
            name: "action_smoothness",
            raw: sq_norm(&smooth),
            weight: -0.1,
        },
        Term {
            name: "action_rate",
            raw: sq_norm(&act_rate),
            weight: -0.1,
        },
        Term {
            name: "front_leg_deviation",
            raw: (s.leg_lengths[0] - s.leg_defaults[0]).powi(2),
            weight: -0.5,
        },
        Term {
            name: "rear_leg_deviation",
            raw: (s.leg_lengths[1] - s.leg_defaults[1]).powi(2),
            weight: -0.2,
        },
        Term {
            name: "body_contact",
            raw: if s.base_contact { 1.0 } else { 0.0 },
            weight: -0.8,
        },
        Term {
            name: "pitch_deviation",
            raw: if s.pitch.abs() > PITCH_DEV_THRESHOLD {
                1.0
            } else {
                0.0
            },
            weight: -6.0,
        },
    ];
    match s.agent {
        AgentId::Launcher => terms.push(Term {
            name: "upright_posture",
            raw: upright_raw,
            weight: -5.0,
        }),
        AgentId::Jumper => terms.push(Term {
            name: "upright_posture",
            raw: if s.success { upright_raw } else { 0.0 },
            weight: -2.0,
        }),
    }
    terms
}

/// Task block: phase-gated tracking, contact, and stabilization terms.
pub fn task_reward(s: &AgentSnapshot, cmd: &Command) -> Vec<Term> {
    let flight = s.phase == PhaseKind::Flight;
    let initial = s.phase == PhaseKind::Initial;
    let landing = s.phase == PhaseKind::Landing;
    let gate = |on: bool, v: f64| if on { v } else { 0.0 };

    let height_spec = ToleranceSpec::new(0.0, f64::INFINITY, 0.2, 0.2);
    let vel_spec = ToleranceSpec::new(f64::NEG_INFINITY, 0.2, 0.5, 0.2);
    let squat_spec = ToleranceSpec::new(f64::NEG_INFINITY, 0.0, 0.1, 0.5);

    let both_feet = s.foot_contact[0] && s.foot_contact[1];
    let retraction: f64 = s.feet_rel_z.iter().map(|z| (z + 0.15).powi(2)).sum();

    vec![
        Term {
            name: "height_tracking",
            raw: gate(flight, tolerance(s.base_height - cmd.target_height, &height_spec)),
            weight: 8.0,
        },
        Term {
            name: "velocity_tracking",
            raw: gate(flight, tolerance(s.vx - cmd.target_vx, &vel_spec)),
            weight: 10.0,
        },
        Term {
            name: "feet_retraction",
            raw: gate(flight, retraction),
            weight: -2.0,
        },
        Term {
            name: "contact_maintenance",
            raw: gate((initial || landing) && both_feet, 1.0),
            weight: 3.0,
        },
        Term {
            name: "squat",
            raw: gate(initial, tolerance(s.base_height - s.h_init, &squat_spec)),
            weight: 2.0,
        },
        Term {
            name: "asymmetric_contact",
            raw: gate(s.foot_contact[0] != s.foot_contact[1], 1.0),
            weight: -0.1,
        },
        Term {
            name: "post_landing_stabilization",
            raw: gate(landing && s.success, 1.0),
            weight: 2.0,
        },
    ]
}

/// Cooperation block, credited identically to both agents.
pub fn cooperation_reward(c: &CoopSnapshot) -> Vec<Term> {
    let hd_spec = ToleranceSpec::new(0.6, f64::INFINITY, 0.3, 0.2);
    vec![
        Term {
            name: "height_difference",
            raw: tolerance(c.h_jumper - c.h_launcher, &hd_spec),
            weight: 6.0,
        },
        Term {
            name: "jumper_pitch",
            raw: if c.pitch_jumper < 0.0 || c.pitch_jumper > PI / 4.0 {
                1.0
            } else {
                0.0
            },
            weight: -2.0,
        },
        Term {
            name: "success",
            raw: if c.success { 1.0 } else { 0.0 },
            weight: 40.0,
        },
        Term {
            name: "termination",
            raw: if c.max_base_force > 1500.0 { 1.0 } else { 0.0 },
            weight: -2.0,
        },
        Term {
            name: "jumper_fall",
            raw: if c.h_jumper < 0.4 { 1.0 } else { 0.0 },
            weight: -2.0,
        },
    ]
}

/// Touchdown predicate: height, horizontal precision, uprightness, and a
/// physical foot-on-platform contact (a strengthening that rules out a
/// fly-over counting as a landing).
pub fn check_touchdown(
    base_height: f64,
    base_x: f64,
    gravity_proj_z: f64,
    foot_on_target: bool,
    platform_x: f64,
    spec: &SuccessSpec,
) -> bool {
    base_height > spec.min_height
        && (base_x - platform_x).abs() < spec.max_xy_error
        && gravity_proj_z < 0.0
        && foot_on_target
}

pub fn check_success(touchdown: bool) -> bool {
    touchdown
}

pub fn check_flip_success(touchdown: bool, accumulated_pitch: f64, spec: &SuccessSpec) -> bool {
    touchdown && accumulated_pitch > spec.flip_min_pitch
}

/// Full per-step reward bookkeeping for both agents.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardBreakdown {
    pub task: [Vec<Term>; 2],
    pub regu: [Vec<Term>; 2],
    pub coop: Vec<Term>,
    pub r_task: [f64; 2],
    pub r_regu: [f64; 2],
    pub r_coop: f64,
    pub total: [f64; 2],
}

/// Combine the three blocks with unit scaling coefficients.
pub fn total_reward(task: [Vec<Term>; 2], regu: [Vec<Term>; 2], coop: Vec<Term>) -> RewardBreakdown {
    let r_task = [term_sum(&task[0]), term_sum(&task[1])];
    let r_regu = [term_sum(&regu[0]), term_sum(&regu[1])];
    let r_coop = term_sum(&coop);
    let total = [r_task[0] + r_regu[0] + r_coop, r_task[1] + r_regu[1] + r_coop];
    RewardBreakdown {
        task,
        regu,
        coop,
        r_task,
        r_regu,
        r_coop,
        total,
    }
}

/// How a reward-table row maps onto the planar implementation.
#[derive(Debug, Clone, PartialEq)]
pub enum RowMapping {
    Implemented {
        term: &'static str,
        weight_launcher: Option<f64>,
        weight_jumper: Option<f64>,
    },
    Omitted {
        reason: &'static str,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditEntry {
    pub row: &'static str,
    pub block: &'static str,
    pub mapping: RowMapping,
}

/// One entry per training-table row: either the implemented planar term
/// carrying the table weight, or an explicit omission record.
pub fn reward_table_audit() -> Vec<AuditEntry> {
    use RowMapping::*;
    let imp = |term, wl: f64, wj: f64| Implemented {
        term,
        weight_launcher: Some(wl),
        weight_jumper: Some(wj),
    };
    vec![
        AuditEntry {
            row: "roll angle deviation penalty",
            block: "regu",
            mapping: imp("pitch_deviation", -6.0, -6.0),
        },
        AuditEntry {
            row: "yaw angle deviation penalty",
            block: "regu",
            mapping: Omitted {
                reason: "single planar rotation DoF; folded into pitch_deviation to avoid double-counting",
            },
        },
        AuditEntry {
            row: "joint acceleration penalty",
            block: "regu",
            mapping: imp("leg_accel_sq", -2.5e-7, -2.5e-7),
        },
        AuditEntry {
            row: "joint velocity penalty",
            block: "regu",
            mapping: imp("leg_rate_sq", -1.0e-4, -1.0e-4),
        },
        AuditEntry {
            row: "joint torque penalty",
            block: "regu",
            mapping: imp("leg_force_sq", -2.5e-6, -2.5e-5),
        },
        AuditEntry {
            row: "joint tracking penalty",
            block: "regu",
            mapping: imp("target_tracking", -0.5, -0.5),
        },
        AuditEntry {
            row: "action smoothness penalty",
            block: "regu",
            mapping: imp("action_smoothness", -0.1, -0.1),
        },
        AuditEntry {
            row: "action rate penalty",
            block: "regu",
            mapping: imp("action_rate", -0.1, -0.1),
        },
        AuditEntry {
            row: "hip joint deviation penalty",
            block: "regu",
            mapping: imp("front_leg_deviation", -0.5, -0.5),
        },
        AuditEntry {
            row: "thigh joint deviation penalty",
            block: "regu",
            mapping: imp("rear_leg_deviation", -0.2, -0.2),
        },
        AuditEntry {
            row: "calf joint deviation penalty",
            block: "regu",
            mapping: Omitted {
                reason: "planar leg has one prismatic DoF; merged with the rear-leg deviation term",
            },
        },
        AuditEntry {
            row: "calf contact penalty",
            block: "regu",
            mapping: Omitted {
                reason: "no distinct calf segment in the planar body",
            },
        },
        AuditEntry {
            row: "thigh contact penalty",
            block: "regu",
            mapping: Omitted {
                reason: "no distinct thigh segment in the planar body",
            },
        },
        AuditEntry {
            row: "base contact penalty",
            block: "regu",
            mapping: imp("body_contact", -0.8, -0.8),
        },
        AuditEntry {
            row: "upright posture penalty",
            block: "regu",
            mapping: Implemented {
                term: "upright_posture",
                weight_launcher: Some(-5.0),
                weight_jumper: None,
            },
        },
        AuditEntry {
            row: "upright posture penalty after successful jumping",
            block: "regu",
            mapping: Implemented {
                term: "upright_posture",
                weight_launcher: None,
                weight_jumper: Some(-2.0),
            },
        },
        AuditEntry {
            row: "command height tracking (flight)",
            block: "task",
            mapping: imp("height_tracking", 8.0, 8.0),
        },
        AuditEntry {
            row: "command velocity tracking (flight)",
            block: "task",
            mapping: imp("velocity_tracking", 10.0, 10.0),
        },
        AuditEntry {
            row: "desired yaw-rate tracking (flight)",
            block: "task",
            mapping: Omitted {
                reason: "yaw rate has no planar counterpart",
            },
        },
        AuditEntry {
            row: "feet height retraction reward (flight)",
            block: "task",
            mapping: imp("feet_retraction", -2.0, -2.0),
        },
        AuditEntry {
            row: "foot contact maintenance",
            block: "task",
            mapping: imp("contact_maintenance", 3.0, 3.0),
        },
        AuditEntry {
            row: "squatting encouragement (initial)",
            block: "task",
            mapping: imp("squat", 2.0, 2.0),
        },
        AuditEntry {
            row: "asymmetric feet contact penalty",
            block: "task",
            mapping: imp("asymmetric_contact", -0.1, -0.1),
        },
        AuditEntry {
            row: "post-landing stabilization",
            block: "task",
            mapping: imp("post_landing_stabilization", 2.0, 2.0),
        },
        AuditEntry {
            row: "height difference reward",
            block: "coop",
            mapping: imp("height_difference", 6.0, 6.0),
        },
        AuditEntry {
            row: "jumper pitch deviation penalty",
            block: "coop",
            mapping: imp("jumper_pitch", -2.0, -2.0),
        },
        AuditEntry {
            row: "success reward",
            block: "coop",
            mapping: imp("success", 40.0, 40.0),
        },
        AuditEntry {
            row: "termination penalty",
            block: "coop",
            mapping: imp("termination", -2.0, -2.0),
        },
        AuditEntry {
            row: "falling penalty",
            block: "coop",
            mapping: imp("jumper_fall", -2.0, -2.0),
        },
    ]
}
