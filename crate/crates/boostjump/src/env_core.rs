//! Episode lifecycle and decentralized-execution plumbing.
//!
//! Owns one environment instance: reset places the launcher on the ground
//! and the jumper above its back platform per the initialization curriculum,
//! step sequences the settling delay, actuator lag, physics substeps, the
//! per-agent phase machine, rewards and termination. Observations are
//! strictly local to each agent; the centralized critic additionally sees
//! both observations plus the relative base position.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::curriculum::{
    delay_at, flip_assist_at, gravity_at, init_config_at, CurriculumConfig, CurriculumState,
};
use crate::randomize::{
    sample_episode_perturbation, sample_push, ActionLagBuffer, EpisodePerturbation,
    RandomizationConfig,
};
use crate::rewards::{
    check_flip_success, check_touchdown, cooperation_reward, regularization_reward, task_reward,
    total_reward, AgentSnapshot, Command, CoopSnapshot, PhaseKind, RewardBreakdown, SuccessSpec,
};
use crate::sim2d::{
    foot_point, leg_targets_from_action, substep, AgentId, BodyState, ControlInputs, ObjectState,
    RobotConfig, SimState, WorldParams,
};

pub const OBS_DIM: usize = 14;
pub const GLOBAL_DIM: usize = 30;

/// What one agent perceives: proprioception, its own previous action, its
/// command, and the target platform relative to its own base. Never contains
/// any quantity derived from the other agent's state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentObservation {
    pub pitch_rate: f64,
    /// Unit gravity direction in the body frame: (sin pitch, -cos pitch).
    pub gravity_projection: [f64; 2],
    pub leg_lengths: [f64; 2],
    pub leg_rates: [f64; 2],
    pub prev_action: [f64; 4],
    /// (target launch velocity, target base height)
    pub command: [f64; 2],
    /// (platform x relative to own base, platform surface height, halfwidth)
    pub object: [f64; 3],
}

impl AgentObservation {
    pub fn to_vec(&self) -> [f64; OBS_DIM] {
        let mut v = [0.0; OBS_DIM];
        v[0] = self.pitch_rate;
        v[1..3].copy_from_slice(&self.gravity_projection);
        v[3..5].copy_from_slice(&self.leg_lengths);
        v[5..7].copy_from_slice(&self.leg_rates);
        v[7..11].copy_from_slice(&self.prev_action);
        v[11..13].copy_from_slice(&self.command);
        // Of the object block only the relative platform x is informative:
        // its height equals the commanded height already present, and the
        // halfwidth is a per-run constant. Dropping both keeps the flat
        // vector at 14.
        v[13] = self.object[0];
        v
    }
}

/// Input to the centralized critic: both agents' observations plus the
/// launcher-minus-jumper base offset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlobalState {
    pub obs_launcher: AgentObservation,
    pub obs_jumper: AgentObservation,
    pub base_diff: [f64; 2],
}

impl GlobalState {
    pub fn to_vec(&self) -> [f64; GLOBAL_DIM] {
        let mut v = [0.0; GLOBAL_DIM];
        v[..OBS_DIM].copy_from_slice(&self.obs_launcher.to_vec());
        v[OBS_DIM..2 * OBS_DIM].copy_from_slice(&self.obs_jumper.to_vec());
        v[2 * OBS_DIM] = self.base_diff[0];
        v[2 * OBS_DIM + 1] = self.base_diff[1];
        v
    }
}

/// Per-agent episode phase. `flight_entered` latches so Landing can only be
/// reached through Flight, and Initial never recurs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Phase {
    pub value: PhaseKind,
    pub flight_entered: bool,
}

impl Phase {
    pub fn new() -> Self {
        Phase {
            value: PhaseKind::Initial,
            flight_entered: false,
        }
    }
}

impl Default for Phase {
    fn default() -> Self {
        Phase::new()
    }
}

/// Advance the three-phase machine from foot contact flags.
///
/// Panics if both flags are raised at once (a foot cannot be simultaneously
/// in contact and fully detached).
pub fn update_phase(phase: Phase, both_feet_contact: bool, no_feet_contact: bool) -> Phase {
    assert!(
        !(both_feet_contact && no_feet_contact),
        "contradictory contact flags"
    );
    match phase.value {
        PhaseKind::Initial if no_feet_contact => Phase {
            value: PhaseKind::Flight,
            flight_entered: true,
        },
        PhaseKind::Flight if !no_feet_contact => Phase {
            value: PhaseKind::Landing,
            flight_entered: true,
        },
        _ => phase,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TerminationReason {
    None,
    BaseForce,
    Timeout,
    JumperFell,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeInfo {
    pub step_count: u32,
    pub delay_remaining: f64,
    pub success: bool,
    pub terminated_reason: TerminationReason,
}

impl Default for EpisodeInfo {
    fn default() -> Self {
        EpisodeInfo {
            step_count: 0,
            delay_remaining: 0.0,
            success: false,
            terminated_reason: TerminationReason::None,
        }
    }
}

/// Build one agent's observation from the world state. Hard-faults on a
/// non-finite state, naming the agent.
pub fn assemble_observation(
    state: &SimState,
    id: AgentId,
    prev_action: [f64; 4],
    cmd: &Command,
    obj: &ObjectState,
) -> AgentObservation {
    assert!(
        state.is_finite(),
        "non-finite state while observing {id:?}"
    );
    let ai = id.idx();
    let body = &state.bodies[ai];
    AgentObservation {
        pitch_rate: body.pitch_rate,
        gravity_projection: [body.pitch.sin(), -body.pitch.cos()],
        leg_lengths: [state.legs[ai][0].length, state.legs[ai][1].length],
        leg_rates: [state.legs[ai][0].rate, state.legs[ai][1].rate],
        prev_action,
        command: [cmd.target_vx, cmd.target_height],
        object: [
            obj.platform_x - body.x,
            obj.platform_z,
            obj.platform_halfwidth,
        ],
    }
}

pub fn assemble_global_state(
    obs_l: AgentObservation,
    obs_j: AgentObservation,
    state: &SimState,
) -> GlobalState {
    let l = &state.bodies[AgentId::Launcher.idx()];
    let j = &state.bodies[AgentId::Jumper.idx()];
    GlobalState {
        obs_launcher: obs_l,
        obs_jumper: obs_j,
        base_diff: [l.x - j.x, l.z - j.z],
    }
}

/// Static environment configuration (physics, randomization, limits).
#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig {
    pub robots: [RobotConfig; 2],
    pub world: WorldParams,
    pub randomization: RandomizationConfig,
    pub success: SuccessSpec,
    /// Episode length in control steps (8 s at 50 Hz).
    pub horizon: u32,
    /// Control period (50 Hz).
    pub control_dt: f64,
    /// Physics substeps per control step.
    pub n_substeps: u32,
    pub platform_halfwidth: f64,
    /// Horizontal distance from the launcher to the target platform centre
    /// before any curriculum offset, so the platform never overhangs the
    /// robots' starting stack (m).
    pub platform_standoff: f64,
    /// Commanded launch velocity per metre of platform distance (1/s).
    pub vx_per_offset: f64,
    /// Train the backflip variant: success additionally requires the
    /// accumulated pitch threshold, and the assist torque is applied.
    pub flip_mode: bool,
    /// Base contact force beyond which the episode terminates (N).
    pub base_force_limit: f64,
    /// Jumper base height below which the fall penalty and termination fire.
    pub fall_height: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            robots: [
                RobotConfig::default_launcher(),
                RobotConfig::default_jumper(),
            ],
            world: WorldParams::default(),
            randomization: RandomizationConfig::disabled(),
            success: SuccessSpec::default(),
            horizon: 400,
            control_dt: 0.02,
            n_substeps: 4,
            platform_halfwidth: 0.5,
            platform_standoff: 0.8,
            vx_per_offset: 1.0,
            flip_mode: false,
            base_force_limit: 1500.0,
            fall_height: 0.4,
        }
    }
}

/// Everything step() returns: next observations, critic state, rewards with
/// their full per-term breakdown, and episode bookkeeping.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub obs: [AgentObservation; 2],
    pub global: GlobalState,
    pub reward: [f64; 2],
    pub breakdown: RewardBreakdown,
    pub done: bool,
    pub info: EpisodeInfo,
}

/// One environment instance. Strictly single-threaded; arrays of instances
/// can be stepped in parallel since nothing is shared.
#[derive(Debug, Clone)]
pub struct Env {
    pub cfg: EnvConfig,
    eff_robots: [RobotConfig; 2],
    eff_world: WorldParams,
    perturbation: EpisodePerturbation,
    state: SimState,
    object: ObjectState,
    command: Command,
    phases: [Phase; 2],
    info: EpisodeInfo,
    h_init: [f64; 2],
    act: [[f64; 4]; 2],
    act_prev: [[f64; 4]; 2],
    act_prev2: [[f64; 4]; 2],
    lag: [ActionLagBuffer; 2],
    assist_torque: f64,
    touchdown_latched: bool,
    done: bool,
    rng: ChaCha8Rng,
}

impl Env {
    pub fn new(cfg: EnvConfig, seed: u64) -> Self {
        let state = SimState::new(&cfg.robots, 9.81);
        Env {
            eff_robots: cfg.robots.clone(),
            eff_world: cfg.world.clone(),
            perturbation: sample_episode_perturbation(
                &RandomizationConfig::disabled(),
                &mut ChaCha8Rng::seed_from_u64(0),
            ),
            state,
            object: ObjectState {
                platform_x: 0.0,
                platform_z: 0.8,
                platform_halfwidth: cfg.platform_halfwidth,
            },
            command: Command {
                target_vx: 0.0,
                target_height: 0.8,
            },
            phases: [Phase::new(); 2],
            info: EpisodeInfo::default(),
            h_init: [0.0; 2],
            act: [[0.0; 4]; 2],
            act_prev: [[0.0; 4]; 2],
            act_prev2: [[0.0; 4]; 2],
            lag: [ActionLagBuffer::new(), ActionLagBuffer::new()],
            assist_torque: 0.0,
            touchdown_latched: false,
            done: true, // must reset before stepping
            rng: ChaCha8Rng::seed_from_u64(seed),
            cfg,
        }
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn object(&self) -> &ObjectState {
        &self.object
    }

    pub fn command(&self) -> &Command {
        &self.command
    }

    pub fn info(&self) -> &EpisodeInfo {
        &self.info
    }

    pub fn phases(&self) -> &[Phase; 2] {
        &self.phases
    }

    pub fn perturbation(&self) -> &EpisodePerturbation {
        &self.perturbation
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Begin a new episode under the given curriculum. The launcher stands
    /// on the ground at the origin; the jumper hangs above the launcher's
    /// back platform at the initialization-stage gap and leg extension.
    pub fn reset(
        &mut self,
        ccfg: &CurriculumConfig,
        cstate: &CurriculumState,
    ) -> [AgentObservation; 2] {
        self.perturbation = sample_episode_perturbation(&self.cfg.randomization, &mut self.rng);
        self.eff_robots = self.cfg.robots.clone();
        self.eff_robots[0].mass += self.perturbation.added_mass_launcher;
        self.eff_robots[1].mass += self.perturbation.added_mass_jumper;
        for r in &mut self.eff_robots {
            r.pd_kp *= self.perturbation.stiffness_gain;
            r.pd_kd *= self.perturbation.damping_gain;
        }
        self.eff_world = self.cfg.world.clone();
        self.eff_world.mu_static = self.perturbation.static_friction;
        self.eff_world.mu_dynamic = self.perturbation.dynamic_friction;

        let gravity = gravity_at(ccfg, cstate.global_step);
        self.state = SimState::new(&self.eff_robots, gravity);

        // launcher standing at the origin, feet on the ground
        let lcfg = &self.eff_robots[0];
        let launcher_z = lcfg.default_rest_lengths[0];
        self.state.bodies[0] = BodyState::at_rest(0.0, launcher_z);

        // jumper above the back platform at the curriculum gap and pose
        let pose = init_config_at(ccfg, cstate.init_stage);
        let jcfg = &self.eff_robots[1];
        let leg_len = jcfg.min_leg_length
            + pose.leg_extension * (jcfg.default_rest_lengths[0] - jcfg.min_leg_length);
        for leg in &mut self.state.legs[1] {
            leg.length = leg_len;
        }
        let platform_surface = launcher_z + lcfg.platform_mount_height;
        let jumper_z = platform_surface + pose.gap + leg_len;
        self.state.bodies[1] = BodyState::at_rest(self.perturbation.rel_pos_offset, jumper_z);
        self.state.bodies[1].pitch = self.perturbation.rel_pitch_offset;

        // command and target platform per the unlocked target ranges
        let offset = self.rng.gen_range(0.0..=cstate.unlocked_offset_max.max(1e-12));
        let height = self
            .rng
            .gen_range(ccfg.height_min..=cstate.unlocked_height_max.max(ccfg.height_min + 1e-12));
        let platform_x = self.cfg.platform_standoff + offset;
        self.command = Command {
            target_vx: self.cfg.vx_per_offset * platform_x,
            target_height: height,
        };
        self.object = ObjectState {
            platform_x,
            platform_z: height,
            platform_halfwidth: self.cfg.platform_halfwidth,
        };

        self.info = EpisodeInfo {
            delay_remaining: delay_at(ccfg, cstate.delay_stage, &mut self.rng),
            ..EpisodeInfo::default()
        };
        self.assist_torque = if self.cfg.flip_mode {
            flip_assist_at(ccfg, cstate.flip_stage)
        } else {
            0.0
        };
        self.h_init = [self.state.bodies[0].z, self.state.bodies[1].z];
        self.phases = [Phase::new(); 2];
        self.act = [[0.0; 4]; 2];
        self.act_prev = [[0.0; 4]; 2];
        self.act_prev2 = [[0.0; 4]; 2];
        for l in &mut self.lag {
            l.reset();
        }
        self.touchdown_latched = false;
        self.done = false;
        self.observe()
    }

    fn observe(&self) -> [AgentObservation; 2] {
        AgentId::BOTH.map(|id| {
            assemble_observation(
                &self.state,
                id,
                self.act[id.idx()],
                &self.command,
                &self.object,
            )
        })
    }

    /// Advance one control step. Panics if called after the episode ended
    /// or with non-finite actions.
    pub fn step(&mut self, joint_action: [[f64; 4]; 2]) -> StepOutcome {
        assert!(!self.done, "step after episode end");
        for a in joint_action.iter().flatten() {
            assert!(a.is_finite(), "non-finite action");
        }

        let clamped = joint_action.map(|a| a.map(|v| v.clamp(-1.0, 1.0)));
        self.act_prev2 = self.act_prev;
        self.act_prev = self.act;

        let in_delay = self.info.delay_remaining > 0.0;
        let commanded = if in_delay {
            self.info.delay_remaining =
                (self.info.delay_remaining - self.cfg.control_dt).max(0.0);
            self.act = [[0.0; 4]; 2];
            [[0.0; 4]; 2]
        } else {
            self.act = clamped;
            clamped
        };
        let lagged = [0, 1].map(|ai| {
            self.lag[ai].push_and_get(
                commanded[ai],
                self.perturbation.total_lag(),
                self.cfg.control_dt,
            )
        });

        let push = if in_delay {
            [[0.0; 3]; 2]
        } else {
            sample_push(&self.cfg.randomization, &mut self.rng)
        };
        let ctl = ControlInputs {
            leg_targets: [0, 1].map(|ai| leg_targets_from_action(&lagged[ai], &self.eff_robots[ai])),
            assist_torque: self.assist_torque,
            push,
            com_offset: [self.perturbation.com_offset; 2],
        };

        let leg_prev_rates =
            [0, 1].map(|ai| [self.state.legs[ai][0].rate, self.state.legs[ai][1].rate]);
        let dt = self.cfg.control_dt / f64::from(self.cfg.n_substeps);
        let mut max_base_force: [f64; 2] = [0.0; 2];
        for _ in 0..self.cfg.n_substeps {
            substep(
                &mut self.state,
                &self.eff_robots,
                &self.eff_world,
                &self.object,
                &ctl,
                dt,
            );
            for ai in 0..2 {
                max_base_force[ai] = max_base_force[ai].max(self.state.base_contact_force[ai]);
            }
        }

        for id in AgentId::BOTH {
            let fc = self.state.foot_contacts(id);
            let both = fc[0] && fc[1];
            let none = !fc[0] && !fc[1];
            self.phases[id.idx()] = update_phase(self.phases[id.idx()], both, none);
        }

        // success predicate on the jumper at the current state
        let jumper = &self.state.bodies[1];
        let touchdown = check_touchdown(
            jumper.z,
            jumper.x,
            -jumper.pitch.cos(),
            self.state
                .foot_on_surface(AgentId::Jumper, crate::sim2d::SurfaceKind::TargetPlatform),
            self.object.platform_x,
            &self.cfg.success,
        );
        let success_now = if self.cfg.flip_mode {
            check_flip_success(touchdown, jumper.accumulated_pitch, &self.cfg.success)
        } else {
            touchdown
        };
        if success_now {
            self.touchdown_latched = true;
        }

        let snapshots = AgentId::BOTH.map(|id| self.agent_snapshot(id, leg_prev_rates, success_now));
        let coop = CoopSnapshot {
            h_jumper: self.state.bodies[1].z,
            h_launcher: self.state.bodies[0].z,
            pitch_jumper: self.state.bodies[1].pitch,
            max_base_force: max_base_force[0].max(max_base_force[1]),
            success: success_now,
        };
        let breakdown = total_reward(
            [
                task_reward(&snapshots[0], &self.command),
                task_reward(&snapshots[1], &self.command),
            ],
            [
                regularization_reward(&snapshots[0]),
                regularization_reward(&snapshots[1]),
            ],
            cooperation_reward(&coop),
        );

        self.info.step_count += 1;
        let reason = if max_base_force[0].max(max_base_force[1]) > self.cfg.base_force_limit {
            TerminationReason::BaseForce
        } else if self.state.bodies[1].z < self.cfg.fall_height {
            TerminationReason::JumperFell
        } else if self.info.step_count >= self.cfg.horizon {
            TerminationReason::Timeout
        } else {
            TerminationReason::None
        };
        self.done = reason != TerminationReason::None;
        self.info.terminated_reason = reason;
        // a crash or fall after touchdown is not a successful episode
        self.info.success = self.touchdown_latched
            && matches!(
                reason,
                TerminationReason::None | TerminationReason::Timeout
            );

        let obs = self.observe();
        StepOutcome {
            obs,
            global: assemble_global_state(obs[0], obs[1], &self.state),
            reward: breakdown.total,
            breakdown,
            done: self.done,
            info: self.info,
        }
    }

    fn agent_snapshot(
        &self,
        id: AgentId,
        leg_prev_rates: [[f64; 2]; 2],
        success_now: bool,
    ) -> AgentSnapshot {
        let ai = id.idx();
        let body = &self.state.bodies[ai];
        let cfg = &self.eff_robots[ai];
        let fc = self.state.foot_contacts(id);
        let base_contact = self
            .state
            .contacts
            .iter()
            .any(|c| c.active && c.agent == id && !c.point.is_foot());
        let targets = leg_targets_from_action(&self.act[ai], cfg);
        AgentSnapshot {
            agent: id,
            base_height: body.z,
            vx: body.vx,
            pitch: body.pitch,
            h_init: self.h_init[ai],
            leg_lengths: [self.state.legs[ai][0].length, self.state.legs[ai][1].length],
            leg_rates: [self.state.legs[ai][0].rate, self.state.legs[ai][1].rate],
            leg_prev_rates: leg_prev_rates[ai],
            leg_forces: [
                self.state.legs[ai][0].last_force,
                self.state.legs[ai][1].last_force,
            ],
            leg_targets: [targets[0].length, targets[1].length],
            leg_defaults: cfg.default_rest_lengths,
            feet_rel_z: [0, 1].map(|li| {
                foot_point(body, &self.state.legs[ai][li])[1] - body.z
            }),
            foot_contact: fc,
            base_contact,
            action: self.act[ai],
            prev_action: self.act_prev[ai],
            prev_prev_action: self.act_prev2[ai],
            phase: self.phases[ai].value,
            success: success_now,
            control_dt: self.cfg.control_dt,
        }
    }
}
