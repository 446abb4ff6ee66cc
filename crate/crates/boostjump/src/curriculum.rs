//! Staged training schedules: gravity ramp, target-range expansion,
//! initialization pose interpolation, settling-delay growth, and the
//! flip torque-assist decay. All schedules are monotone over a run.

use rand::Rng;

/// Schedule parameters. Milestones and thresholds default to the training
/// recipe; ablations disable individual schedules.
#[derive(Debug, Clone, PartialEq)]
pub struct CurriculumConfig {
    pub gravity_initial: f64,
    pub gravity_final: f64,
    /// Steps at which gravity increases (equal increments between levels).
    pub gravity_milestones: [u64; 3],
    /// Whether `global_step` counts training iterations (default) or
    /// environment steps.
    pub gravity_counts_env_steps: bool,
    /// Successful jumps required per expansion phase.
    pub success_threshold: u64,
    /// Horizontal target-offset phases before height expansion begins.
    pub n_offset_phases: u32,
    pub offset_step: f64,
    pub height_min: f64,
    pub height_step: f64,
    pub height_max: f64,
    pub n_init_stages: u32,
    pub init_gap_start: f64,
    pub init_gap_end: f64,
    pub n_delay_stages: u32,
    pub delay_final_min: f64,
    pub delay_final_max: f64,
    pub flip_assist_initial: f64,
    pub flip_assist_step: f64,
    pub gravity_enabled: bool,
    pub init_enabled: bool,
    pub delay_enabled: bool,
    pub target_enabled: bool,
}

impl Default for CurriculumConfig {
    fn default() -> Self {
        CurriculumConfig {
            gravity_initial: 7.0,
            gravity_final: 9.81,
            gravity_milestones: [15_000, 20_000, 25_000],
            gravity_counts_env_steps: false,
            success_threshold: 25_000,
            n_offset_phases: 6,
            offset_step: 0.1,
            height_min: 0.8,
            height_step: 0.1,
            height_max: 1.0,
            n_init_stages: 15,
            init_gap_start: 1.0,
            init_gap_end: 0.77,
            n_delay_stages: 10,
            delay_final_min: 1.0,
            delay_final_max: 1.6,
            flip_assist_initial: 120.0,
            flip_assist_step: 4.0,
            gravity_enabled: true,
            init_enabled: true,
            delay_enabled: true,
            target_enabled: true,
        }
    }
}

/// Live curriculum position. Stages only ever advance within a run.
#[derive(Debug, Clone, PartialEq)]
pub struct CurriculumState {
    pub global_step: u64,
    pub success_count: u64,
    pub target_stage: u32,
    pub init_stage: u32,
    pub delay_stage: u32,
    pub flip_stage: u32,
    pub unlocked_height_max: f64,
    pub unlocked_offset_max: f64,
}

impl CurriculumState {
    pub fn new(cfg: &CurriculumConfig) -> Self {
        let mut s = CurriculumState {
            global_step: 0,
            success_count: 0,
            target_stage: 0,
            init_stage: if cfg.init_enabled { 0 } else { cfg.n_init_stages },
            delay_stage: 0,
            flip_stage: 0,
            unlocked_height_max: cfg.height_min,
            unlocked_offset_max: 0.0,
        };
        if !cfg.target_enabled {
            s.target_stage = cfg.n_offset_phases + height_phases(cfg);
            apply_target_stage(&mut s, cfg);
        }
        s
    }
}

fn height_phases(cfg: &CurriculumConfig) -> u32 {
    (((cfg.height_max - cfg.height_min) / cfg.height_step).round() as i64).max(0) as u32
}

fn apply_target_stage(state: &mut CurriculumState, cfg: &CurriculumConfig) {
    let offset_phases = state.target_stage.min(cfg.n_offset_phases);
    state.unlocked_offset_max = f64::from(offset_phases) * cfg.offset_step;
    let hp = state.target_stage.saturating_sub(cfg.n_offset_phases).min(height_phases(cfg));
    state.unlocked_height_max = (cfg.height_min + f64::from(hp) * cfg.height_step).min(cfg.height_max);
}

/// A stage transition, for the run's event log.
#[derive(Debug, Clone, PartialEq)]
pub struct CurriculumEvent {
    pub global_step: u64,
    pub schedule: &'static str,
    pub stage: u32,
    pub value: f64,
}

/// Gravity as a piecewise-constant, non-decreasing function of the step
/// counter: the initial value before the first milestone, equal increments
/// at each milestone, the nominal value at and after the last.
pub fn gravity_at(cfg: &CurriculumConfig, global_step: u64) -> f64 {
    if !cfg.gravity_enabled {
        return cfg.gravity_final;
    }
    let levels = cfg.gravity_milestones.len() as f64;
    let inc = (cfg.gravity_final - cfg.gravity_initial) / levels;
    let mut g = cfg.gravity_initial;
    for &m in &cfg.gravity_milestones {
        if global_step >= m {
            g += inc;
        }
    }
    g.min(cfg.gravity_final)
}

/// Record new successes and expand the target ranges on each threshold
/// crossing: horizontal offset first, then command height, one range per
/// crossing.
pub fn advance_target(
    state: &mut CurriculumState,
    cfg: &CurriculumConfig,
    new_successes: u64,
) -> Vec<CurriculumEvent> {
    let before = state.success_count / cfg.success_threshold;
    state.success_count += new_successes;
    let after = state.success_count / cfg.success_threshold;
    let mut events = Vec::new();
    if !cfg.target_enabled {
        return events;
    }
    let max_stage = cfg.n_offset_phases + height_phases(cfg);
    for _ in before..after {
        if state.target_stage >= max_stage {
            break;
        }
        state.target_stage += 1;
        apply_target_stage(state, cfg);
        let value = if state.target_stage <= cfg.n_offset_phases {
            state.unlocked_offset_max
        } else {
            state.unlocked_height_max
        };
        events.push(CurriculumEvent {
            global_step: state.global_step,
            schedule: "target",
            stage: state.target_stage,
            value,
        });
    }
    events
}

/// Advance every threshold-driven schedule (target, initialization, delay,
/// flip assist) after `new_successes` further successful episodes.
pub fn advance_on_successes(
    state: &mut CurriculumState,
    cfg: &CurriculumConfig,
    new_successes: u64,
) -> Vec<CurriculumEvent> {
    let before = state.success_count / cfg.success_threshold;
    let mut events = advance_target(state, cfg, new_successes);
    let after = state.success_count / cfg.success_threshold;
    for _ in before..after {
        if cfg.init_enabled && state.init_stage < cfg.n_init_stages {
            state.init_stage += 1;
            events.push(CurriculumEvent {
                global_step: state.global_step,
                schedule: "init",
                stage: state.init_stage,
                value: init_config_at(cfg, state.init_stage).gap,
            });
        }
        if cfg.delay_enabled && state.delay_stage < cfg.n_delay_stages {
            state.delay_stage += 1;
            events.push(CurriculumEvent {
                global_step: state.global_step,
                schedule: "delay",
                stage: state.delay_stage,
                value: f64::from(state.delay_stage) / f64::from(cfg.n_delay_stages),
            });
        }
        if flip_assist_at(cfg, state.flip_stage) > 0.0 {
            state.flip_stage += 1;
            events.push(CurriculumEvent {
                global_step: state.global_step,
                schedule: "flip_assist",
                stage: state.flip_stage,
                value: flip_assist_at(cfg, state.flip_stage),
            });
        }
    }
    events
}

/// Initialization pose for the jumper at a given stage: the vertical gap
/// between its feet and the launcher platform, and the fraction of leg
/// extension (1 = standing at default length, 0 = fully retracted/prone).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitPose {
    pub gap: f64,
    pub leg_extension: f64,
}

pub fn init_config_at(cfg: &CurriculumConfig, init_stage: u32) -> InitPose {
    assert!(
        init_stage <= cfg.n_init_stages,
        "init stage {init_stage} out of range 0..={}",
        cfg.n_init_stages
    );
    let t = f64::from(init_stage) / f64::from(cfg.n_init_stages);
    InitPose {
        gap: cfg.init_gap_start + (cfg.init_gap_end - cfg.init_gap_start) * t,
        leg_extension: 1.0 - t,
    }
}

/// Sample the settling delay for an episode. Stage 0 is always zero; the
/// final stage samples uniformly in the full range; intermediate stages
/// scale both bounds linearly.
pub fn delay_at<R: Rng>(cfg: &CurriculumConfig, delay_stage: u32, rng: &mut R) -> f64 {
    let stage = delay_stage.min(cfg.n_delay_stages);
    let frac = f64::from(stage) / f64::from(cfg.n_delay_stages);
    if frac == 0.0 {
        return 0.0;
    }
    let lo = frac * cfg.delay_final_min;
    let hi = frac * cfg.delay_final_max;
    lo + rng.gen::<f64>() * (hi - lo)
}

/// Flip-assist torque: linear decay in fixed steps, floored at zero.
pub fn flip_assist_at(cfg: &CurriculumConfig, flip_stage: u32) -> f64 {
    (cfg.flip_assist_initial - cfg.flip_assist_step * f64::from(flip_stage)).max(0.0)
}
