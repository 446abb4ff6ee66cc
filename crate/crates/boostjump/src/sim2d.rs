//! Deterministic planar rigid-body dynamics for two stacked robots.
//!
//! Each robot is a rigid body in the sagittal plane with two force-limited
//! prismatic legs. Contacts (feet and body corners against the ground, the
//! launcher's back platform, and the raised target platform) use a penalty
//! spring-damper normal model with stick/slide Coulomb friction. Integration
//! is symplectic: velocities are kicked by net force, positions advance on
//! the velocity midpoint, which is exact for constant acceleration.

/// Which of the two robots a quantity belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AgentId {
    Launcher,
    Jumper,
}

impl AgentId {
    pub const BOTH: [AgentId; 2] = [AgentId::Launcher, AgentId::Jumper];

    pub fn idx(self) -> usize {
        match self {
            AgentId::Launcher => 0,
            AgentId::Jumper => 1,
        }
    }

    pub fn other(self) -> AgentId {
        match self {
            AgentId::Launcher => AgentId::Jumper,
            AgentId::Jumper => AgentId::Launcher,
        }
    }
}

/// Contact attachment points on a robot: the two feet and the two body
/// corners ("base" contacts, which feed the termination force check).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContactPoint {
    FootFront,
    FootRear,
    BaseFront,
    BaseRear,
}

impl ContactPoint {
    pub const ALL: [ContactPoint; 4] = [
        ContactPoint::FootFront,
        ContactPoint::FootRear,
        ContactPoint::BaseFront,
        ContactPoint::BaseRear,
    ];

    pub fn idx(self) -> usize {
        match self {
            ContactPoint::FootFront => 0,
            ContactPoint::FootRear => 1,
            ContactPoint::BaseFront => 2,
            ContactPoint::BaseRear => 3,
        }
    }

    pub fn is_foot(self) -> bool {
        matches!(self, ContactPoint::FootFront | ContactPoint::FootRear)
    }

    /// Leg index for foot points (front = 0, rear = 1).
    pub fn leg_idx(self) -> Option<usize> {
        match self {
            ContactPoint::FootFront => Some(0),
            ContactPoint::FootRear => Some(1),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SurfaceKind {
    Ground,
    LauncherPlatform,
    TargetPlatform,
}

/// Pose and twist of one rigid body. `accumulated_pitch` is the unwrapped
/// integral of the pitch rate since reset (used by the flip predicate).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BodyState {
    pub x: f64,
    pub z: f64,
    pub pitch: f64,
    pub vx: f64,
    pub vz: f64,
    pub pitch_rate: f64,
    pub accumulated_pitch: f64,
}

impl BodyState {
    pub fn at_rest(x: f64, z: f64) -> Self {
        BodyState {
            x,
            z,
            pitch: 0.0,
            vx: 0.0,
            vz: 0.0,
            pitch_rate: 0.0,
            accumulated_pitch: 0.0,
        }
    }

    pub fn is_finite(&self) -> bool {
        [self.x, self.z, self.pitch, self.vx, self.vz, self.pitch_rate]
            .iter()
            .all(|v| v.is_finite())
    }
}

/// One prismatic leg: a length servo along a steerable axis in the body
/// frame. `angle` is the deflection of the leg axis from body-down.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LegState {
    pub length: f64,
    pub rate: f64,
    pub rest_length: f64,
    pub attach_offset: f64,
    pub force_limit: f64,
    pub last_force: f64,
    pub angle: f64,
    pub angle_rate: f64,
}

/// Commanded setpoint for one leg, produced from a policy action.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LegTarget {
    pub length: f64,
    pub angle: f64,
}

/// Physical parameters of one robot.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotConfig {
    pub mass: f64,
    pub inertia: f64,
    pub half_length: f64,
    /// Vertical drop from the body centre to the base contact corners.
    pub base_drop: f64,
    /// Height of the back platform surface above the body centre
    /// (launcher only; zero disables the platform).
    pub platform_mount_height: f64,
    pub pd_kp: f64,
    pub pd_kd: f64,
    pub default_rest_lengths: [f64; 2],
    pub attach_offsets: [f64; 2],
    pub leg_force_limit: f64,
    pub min_leg_length: f64,
    pub max_leg_length: f64,
    /// Rate limit on leg extension (m/s).
    pub max_leg_rate: f64,
    /// Servo time constant for the leg-angle DoF (s).
    pub servo_tau: f64,
    /// Action scale for length targets (m per unit action).
    pub action_scale: f64,
    /// Action scale for leg-axis deflection targets (rad per unit action).
    pub angle_scale: f64,
    pub max_leg_angle: f64,
    pub max_leg_angle_rate: f64,
}

impl RobotConfig {
    pub fn default_launcher() -> Self {
        RobotConfig {
            mass: 90.0,
            inertia: 5.0,
            half_length: 0.35,
            base_drop: 0.06,
            platform_mount_height: 0.15,
            pd_kp: 40_000.0,
            pd_kd: 1_500.0,
            default_rest_lengths: [0.45, 0.45],
            attach_offsets: [0.30, -0.30],
            leg_force_limit: 2_400.0,
            min_leg_length: 0.15,
            max_leg_length: 0.65,
            max_leg_rate: 3.0,
            servo_tau: 0.04,
            action_scale: 0.15,
            angle_scale: 0.3,
            max_leg_angle: 0.5,
            max_leg_angle_rate: 10.0,
        }
    }

    pub fn default_jumper() -> Self {
        RobotConfig {
            mass: 15.0,
            inertia: 0.4,
            half_length: 0.25,
            base_drop: 0.05,
            platform_mount_height: 0.0,
            pd_kp: 8_000.0,
            pd_kd: 300.0,
            default_rest_lengths: [0.30, 0.30],
            attach_offsets: [0.20, -0.20],
            leg_force_limit: 450.0,
            min_leg_length: 0.10,
            max_leg_length: 0.45,
            max_leg_rate: 3.0,
            servo_tau: 0.04,
            action_scale: 0.15,
            angle_scale: 0.3,
            max_leg_angle: 0.5,
            max_leg_angle_rate: 10.0,
        }
    }
}

/// Contact material and geometry parameters shared by all surfaces.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldParams {
    pub k_contact: f64,
    pub d_contact: f64,
    pub tangent_stiffness: f64,
    pub tangent_damping: f64,
    pub mu_static: f64,
    pub mu_dynamic: f64,
    pub launcher_platform_halfwidth: f64,
    /// Penetration cap for one-sided surfaces; deeper overlap means the
    /// point approached from below and is ignored.
    pub capture_depth: f64,
}

impl Default for WorldParams {
    fn default() -> Self {
        WorldParams {
            k_contact: 1.5e5,
            d_contact: 1_000.0,
            tangent_stiffness: 7.5e4,
            tangent_damping: 500.0,
            mu_static: 0.8,
            mu_dynamic: 0.7,
            launcher_platform_halfwidth: 0.4,
            capture_depth: 0.2,
        }
    }
}

/// The raised target platform the jumper must land on. One-sided: only the
/// jumper interacts with it, and only from above.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectState {
    pub platform_x: f64,
    pub platform_z: f64,
    pub platform_halfwidth: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactRecord {
    pub agent: AgentId,
    pub point: ContactPoint,
    pub surface: SurfaceKind,
    pub normal_force: f64,
    pub tangent_force: f64,
    pub sliding: bool,
    pub active: bool,
    pub position: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Anchor {
    surface: SurfaceKind,
    xi: f64,
}

/// Full physical state of the two-robot world.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub bodies: [BodyState; 2],
    pub legs: [[LegState; 2]; 2],
    pub contacts: Vec<ContactRecord>,
    pub gravity: f64,
    pub time: f64,
    /// Sum of normal force magnitudes on each robot's base corners at the
    /// most recent substep.
    pub base_contact_force: [f64; 2],
    anchors: [[Option<Anchor>; 4]; 2],
}

impl SimState {
    pub fn new(configs: &[RobotConfig; 2], gravity: f64) -> Self {
        let legs = [0, 1].map(|a| {
            [0, 1].map(|l| LegState {
                length: configs[a].default_rest_lengths[l],
                rate: 0.0,
                rest_length: configs[a].default_rest_lengths[l],
                attach_offset: configs[a].attach_offsets[l],
                force_limit: configs[a].leg_force_limit,
                last_force: 0.0,
                angle: 0.0,
                angle_rate: 0.0,
            })
        });
        SimState {
            bodies: [BodyState::at_rest(0.0, 0.0), BodyState::at_rest(0.0, 0.0)],
            legs,
            contacts: Vec::new(),
            gravity,
            time: 0.0,
            base_contact_force: [0.0, 0.0],
            anchors: [[None; 4]; 2],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.bodies.iter().all(|b| b.is_finite())
            && self
                .legs
                .iter()
                .flatten()
                .all(|l| l.length.is_finite() && l.rate.is_finite() && l.angle.is_finite())
    }

    pub fn foot_contacts(&self, agent: AgentId) -> [bool; 2] {
        let mut out = [false; 2];
        for c in &self.contacts {
            if c.active && c.agent == agent {
                if let Some(i) = c.point.leg_idx() {
                    out[i] = true;
                }
            }
        }
        out
    }

    /// True when the agent has at least one active foot contact on the
    /// given surface.
    pub fn foot_on_surface(&self, agent: AgentId, surface: SurfaceKind) -> bool {
        self.contacts
            .iter()
            .any(|c| c.active && c.agent == agent && c.surface == surface && c.point.is_foot())
    }
}

/// Per-step actuation and disturbance inputs to the physics.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlInputs {
    pub leg_targets: [[LegTarget; 2]; 2],
    /// Flip-assist pitching torque applied to the jumper (N·m).
    pub assist_torque: f64,
    /// Per-agent external push: (fx, fz, torque).
    pub push: [[f64; 3]; 2],
    /// Per-agent centre-of-mass offset along the body x axis (m).
    pub com_offset: [f64; 2],
}

impl ControlInputs {
    pub fn passive(configs: &[RobotConfig; 2]) -> Self {
        ControlInputs {
            leg_targets: [0, 1].map(|a| {
                [0, 1].map(|l| LegTarget {
                    length: configs[a].default_rest_lengths[l],
                    angle: 0.0,
                })
            }),
            assist_torque: 0.0,
            push: [[0.0; 3]; 2],
            com_offset: [0.0; 2],
        }
    }
}

pub fn rotate(theta: f64, v: [f64; 2]) -> [f64; 2] {
    let (s, c) = theta.sin_cos();
    [v[0] * c - v[1] * s, v[0] * s + v[1] * c]
}

/// World-frame unit vector along the leg axis (attach point toward foot).
pub fn leg_axis(pitch: f64, leg_angle: f64) -> [f64; 2] {
    let phi = pitch + leg_angle;
    [phi.sin(), -phi.cos()]
}

pub fn attach_point(body: &BodyState, leg: &LegState) -> [f64; 2] {
    let r = rotate(body.pitch, [leg.attach_offset, 0.0]);
    [body.x + r[0], body.z + r[1]]
}

pub fn foot_point(body: &BodyState, leg: &LegState) -> [f64; 2] {
    let a = attach_point(body, leg);
    let d = leg_axis(body.pitch, leg.angle);
    [a[0] + leg.length * d[0], a[1] + leg.length * d[1]]
}

fn point_velocity(body: &BodyState, p: [f64; 2]) -> [f64; 2] {
    let rx = p[0] - body.x;
    let rz = p[1] - body.z;
    [body.vx - body.pitch_rate * rz, body.vz + body.pitch_rate * rx]
}

fn foot_velocity(body: &BodyState, leg: &LegState) -> [f64; 2] {
    let p = foot_point(body, leg);
    let v = point_velocity(body, p);
    let d = leg_axis(body.pitch, leg.angle);
    // perpendicular to the leg axis, in the direction of increasing angle
    let perp = [-d[1], d[0]];
    let swing = leg.angle_rate * leg.length;
    [
        v[0] + leg.rate * d[0] + swing * perp[0],
        v[1] + leg.rate * d[1] + swing * perp[1],
    ]
}

fn base_corner(body: &BodyState, cfg: &RobotConfig, front: bool) -> [f64; 2] {
    let sx = if front { cfg.half_length } else { -cfg.half_length };
    let r = rotate(body.pitch, [sx, -cfg.base_drop]);
    [body.x + r[0], body.z + r[1]]
}

pub fn contact_point_position(
    state: &SimState,
    cfg: &RobotConfig,
    agent: AgentId,
    point: ContactPoint,
) -> [f64; 2] {
    let body = &state.bodies[agent.idx()];
    match point {
        ContactPoint::FootFront => foot_point(body, &state.legs[agent.idx()][0]),
        ContactPoint::FootRear => foot_point(body, &state.legs[agent.idx()][1]),
        ContactPoint::BaseFront => base_corner(body, cfg, true),
        ContactPoint::BaseRear => base_corner(body, cfg, false),
    }
}

fn contact_point_velocity(
    state: &SimState,
    cfg: &RobotConfig,
    agent: AgentId,
    point: ContactPoint,
) -> [f64; 2] {
    let body = &state.bodies[agent.idx()];
    match point {
        ContactPoint::FootFront => foot_velocity(body, &state.legs[agent.idx()][0]),
        ContactPoint::FootRear => foot_velocity(body, &state.legs[agent.idx()][1]),
        _ => point_velocity(body, contact_point_position(state, cfg, agent, point)),
    }
}

/// Clamp raw policy actions to [-1, 1] and convert to per-leg setpoints:
/// `target length = default + scale * a[leg]`, `target angle = angle_scale
/// * a[2 + leg]`.
pub fn leg_targets_from_action(action: &[f64; 4], cfg: &RobotConfig) -> [LegTarget; 2] {
    let a: Vec<f64> = action.iter().map(|v| v.clamp(-1.0, 1.0)).collect();
    [0, 1].map(|l| LegTarget {
        length: (cfg.default_rest_lengths[l] + cfg.action_scale * a[l])
            .clamp(cfg.min_leg_length, cfg.max_leg_length),
        angle: (cfg.angle_scale * a[2 + l]).clamp(-cfg.max_leg_angle, cfg.max_leg_angle),
    })
}

/// PD actuator force toward the target length, clamped to the leg limit.
pub fn pd_force(cfg: &RobotConfig, leg: &LegState, target_length: f64) -> f64 {
    let f = cfg.pd_kp * (target_length - leg.length) - cfg.pd_kd * leg.rate;
    f.clamp(-leg.force_limit, leg.force_limit)
}

#[derive(Debug, Clone, Copy, Default)]
struct BodyForces {
    fx: f64,
    fz: f64,
    torque: f64,
}

impl BodyForces {
    fn apply_at(&mut self, body: &BodyState, p: [f64; 2], f: [f64; 2]) {
        self.fx += f[0];
        self.fz += f[1];
        self.torque += (p[0] - body.x) * f[1] - (p[1] - body.z) * f[0];
    }
}

struct SurfaceHit {
    surface: SurfaceKind,
    penetration: f64,
    normal: [f64; 2],
    tangent: [f64; 2],
    surface_velocity: [f64; 2],
    xi: f64,
}

fn candidate_surfaces(
    state: &SimState,
    world: &WorldParams,
    platform: &ObjectState,
    launcher_cfg: &RobotConfig,
    agent: AgentId,
    p: [f64; 2],
) -> Vec<SurfaceHit> {
    let mut hits = Vec::new();
    // ground
    if p[1] < 0.0 {
        hits.push(SurfaceHit {
            surface: SurfaceKind::Ground,
            penetration: -p[1],
            normal: [0.0, 1.0],
            tangent: [1.0, 0.0],
            surface_velocity: [0.0, 0.0],
            xi: p[0],
        });
    }
    if agent == AgentId::Jumper {
        // launcher back platform, rigidly attached to the launcher body
        let lb = &state.bodies[AgentId::Launcher.idx()];
        if launcher_cfg.platform_mount_height > 0.0 {
            let c = {
                let r = rotate(lb.pitch, [0.0, launcher_cfg.platform_mount_height]);
                [lb.x + r[0], lb.z + r[1]]
            };
            let n = rotate(lb.pitch, [0.0, 1.0]);
            let t = rotate(lb.pitch, [1.0, 0.0]);
            let d = (p[0] - c[0]) * n[0] + (p[1] - c[1]) * n[1];
            let xi = (p[0] - c[0]) * t[0] + (p[1] - c[1]) * t[1];
            if d < 0.0 && d > -world.capture_depth && xi.abs() <= world.launcher_platform_halfwidth
            {
                hits.push(SurfaceHit {
                    surface: SurfaceKind::LauncherPlatform,
                    penetration: -d,
                    normal: n,
                    tangent: t,
                    surface_velocity: point_velocity(lb, p),
                    xi,
                });
            }
        }
        // raised target platform, one-sided from above
        let pen = platform.platform_z - p[1];
        if pen > 0.0
            && pen <= world.capture_depth
            && (p[0] - platform.platform_x).abs() <= platform.platform_halfwidth
        {
            hits.push(SurfaceHit {
                surface: SurfaceKind::TargetPlatform,
                penetration: pen,
                normal: [0.0, 1.0],
                tangent: [1.0, 0.0],
                surface_velocity: [0.0, 0.0],
                xi: p[0],
            });
        }
    }
    hits
}

/// Resolve every contact point against its candidate surfaces, producing
/// contact records and the per-body forces they induce.
fn resolve_contacts_impl(
    state: &mut SimState,
    configs: &[RobotConfig; 2],
    world: &WorldParams,
    platform: &ObjectState,
    forces: &mut [BodyForces; 2],
) {
    state.contacts.clear();
    state.base_contact_force = [0.0, 0.0];
    for agent in AgentId::BOTH {
        let ai = agent.idx();
        for point in ContactPoint::ALL {
            let p = contact_point_position(state, &configs[ai], agent, point);
            let hits = candidate_surfaces(state, world, platform, &configs[0], agent, p);
            let Some(hit) = hits
                .into_iter()
                .max_by(|a, b| a.penetration.total_cmp(&b.penetration))
            else {
                state.anchors[ai][point.idx()] = None;
                state.contacts.push(ContactRecord {
                    agent,
                    point,
                    surface: SurfaceKind::Ground,
                    normal_force: 0.0,
                    tangent_force: 0.0,
                    sliding: false,
                    active: false,
                    position: p,
                });
                if let Some(li) = point.leg_idx() {
                    // airborne leg: report the actuator PD force
                    let leg = state.legs[ai][li];
                    let f = cfg_pd_report(&configs[ai], &leg);
                    state.legs[ai][li].last_force = f;
                }
                continue;
            };

            let v_rel = {
                let vp = contact_point_velocity(state, &configs[ai], agent, point);
                [vp[0] - hit.surface_velocity[0], vp[1] - hit.surface_velocity[1]]
            };
            let vn = v_rel[0] * hit.normal[0] + v_rel[1] * hit.normal[1];
            let vt = v_rel[0] * hit.tangent[0] + v_rel[1] * hit.tangent[1];
            let mut normal_force =
                (world.k_contact * hit.penetration - world.d_contact * vn).max(0.0);

            // Feet transmit force through the leg; clamp the axial component
            // to the actuator limit.
            if let Some(li) = point.leg_idx() {
                let leg = &state.legs[ai][li];
                let axis = leg_axis(state.bodies[ai].pitch, leg.angle);
                let dot = -(hit.normal[0] * axis[0] + hit.normal[1] * axis[1]);
                let bottomed = leg.length <= configs[ai].min_leg_length + 1e-9;
                if dot > 0.2 && !bottomed {
                    normal_force = normal_force.min(leg.force_limit / dot);
                }
                state.legs[ai][li].last_force =
                    (normal_force * dot).clamp(-leg.force_limit, leg.force_limit);
            }

            // stick/slide friction against an anchored tangential spring
            let anchor = state.anchors[ai][point.idx()];
            let xi_anchor = match anchor {
                Some(a) if a.surface == hit.surface => a.xi,
                _ => hit.xi,
            };
            let stick = -world.tangent_stiffness * (hit.xi - xi_anchor)
                - world.tangent_damping * vt;
            let (tangent_force, sliding, new_anchor) = if normal_force <= 0.0 {
                (0.0, false, hit.xi)
            } else if stick.abs() > world.mu_static * normal_force {
                let f = world.mu_dynamic * normal_force * stick.signum();
                (f, true, hit.xi + f / world.tangent_stiffness)
            } else {
                (stick, false, xi_anchor)
            };
            state.anchors[ai][point.idx()] = Some(Anchor {
                surface: hit.surface,
                xi: new_anchor,
            });

            let f = [
                normal_force * hit.normal[0] + tangent_force * hit.tangent[0],
                normal_force * hit.normal[1] + tangent_force * hit.tangent[1],
            ];
            let body = state.bodies[ai];
            forces[ai].apply_at(&body, p, f);
            if hit.surface == SurfaceKind::LauncherPlatform {
                let lb = state.bodies[AgentId::Launcher.idx()];
                forces[AgentId::Launcher.idx()].apply_at(&lb, p, [-f[0], -f[1]]);
            }
            if !point.is_foot() {
                state.base_contact_force[ai] += normal_force;
            }
            state.contacts.push(ContactRecord {
                agent,
                point,
                surface: hit.surface,
                normal_force,
                tangent_force,
                sliding,
                active: true,
                position: p,
            });
        }
    }
}

fn cfg_pd_report(cfg: &RobotConfig, leg: &LegState) -> f64 {
    let f = cfg.pd_kp * (leg.rest_length - leg.length) - cfg.pd_kd * leg.rate;
    f.clamp(-leg.force_limit, leg.force_limit)
}

/// Stand-alone contact resolution, exposed for oracle tests. Returns the
/// contact records without integrating the bodies.
pub fn resolve_contacts(
    state: &mut SimState,
    configs: &[RobotConfig; 2],
    world: &WorldParams,
    platform: &ObjectState,
) -> Vec<ContactRecord> {
    let mut forces = [BodyForces::default(), BodyForces::default()];
    resolve_contacts_impl(state, configs, world, platform, &mut forces);
    state.contacts.clone()
}

/// Advance the world by one physics substep.
///
/// Order per substep: leg servos track their targets (rate limited), all
/// contacts are resolved at the new geometry, then bodies are integrated
/// under gravity, contact, assist and push forces.
///
/// Panics if a non-finite force or state appears, naming the offender.
pub fn substep(
    state: &mut SimState,
    configs: &[RobotConfig; 2],
    world: &WorldParams,
    platform: &ObjectState,
    ctl: &ControlInputs,
    dt: f64,
) {
    // Leg servos. The angle DoF tracks kinematically (first order, rate
    // limited). The length DoF obeys a PD actuator balanced implicitly
    // against the contact penalty spring, so legs yield under overload and
    // the stiff spring-servo loop stays stable at any stiffness.
    for ai in 0..2 {
        let cfg = &configs[ai];
        for li in 0..2 {
            let tgt = ctl.leg_targets[ai][li];
            let (l_prev, angle_prev) = {
                let leg = &state.legs[ai][li];
                (leg.length, leg.angle)
            };
            let arate = ((tgt.angle - angle_prev) / cfg.servo_tau)
                .clamp(-cfg.max_leg_angle_rate, cfg.max_leg_angle_rate);
            let angle_new =
                (angle_prev + arate * dt).clamp(-cfg.max_leg_angle, cfg.max_leg_angle);
            {
                let leg = &mut state.legs[ai][li];
                leg.angle = angle_new;
                leg.angle_rate = arate;
            }

            // unconstrained first-order tracking toward the target
            let body = state.bodies[ai];
            let leg_now = state.legs[ai][li];
            let free_rate = (cfg.pd_kp * (tgt.length - l_prev) / cfg.pd_kd)
                .clamp(-cfg.max_leg_rate, cfg.max_leg_rate);
            let l_free =
                (l_prev + free_rate * dt).clamp(cfg.min_leg_length, cfg.max_leg_length);

            let attach = attach_point(&body, &leg_now);
            let dir = leg_axis(body.pitch, angle_new);
            let p_free = [attach[0] + l_free * dir[0], attach[1] + l_free * dir[1]];
            let agent = AgentId::BOTH[ai];
            let hit = candidate_surfaces(state, world, platform, &configs[0], agent, p_free)
                .into_iter()
                .max_by(|a, b| a.penetration.total_cmp(&b.penetration));

            let mut l_new = l_free;
            if let Some(hit) = hit {
                // penetration grows linearly with length along the axis
                let g = -(dir[0] * hit.normal[0] + dir[1] * hit.normal[1]);
                if g > 0.05 {
                    let kv = cfg.pd_kd / dt;
                    let pen_at = |l: f64| hit.penetration + (l - l_free) * g;
                    // PD force equals the axially transmitted contact force
                    let denom = cfg.pd_kp + kv + world.k_contact * g * g;
                    let mut l = (cfg.pd_kp * tgt.length + kv * l_prev
                        - world.k_contact * g * (hit.penetration - g * l_free))
                        / denom;
                    let f_pd = cfg.pd_kp * (tgt.length - l) - kv * (l - l_prev);
                    if f_pd.abs() > cfg.leg_force_limit {
                        // actuator saturates: constant-force strut
                        let f = cfg.leg_force_limit * f_pd.signum();
                        l = l_free + (f / (world.k_contact * g) - hit.penetration) / g;
                    }
                    if pen_at(l) > 0.0 {
                        l_new = l;
                    }
                }
            }
            let l_final = l_new
                .clamp(l_prev - cfg.max_leg_rate * dt, l_prev + cfg.max_leg_rate * dt)
                .clamp(cfg.min_leg_length, cfg.max_leg_length);
            let leg = &mut state.legs[ai][li];
            leg.length = l_final;
            leg.rate = (l_final - l_prev) / dt;
        }
    }

    let mut forces = [BodyForces::default(), BodyForces::default()];
    resolve_contacts_impl(state, configs, world, platform, &mut forces);

    for ai in 0..2 {
        let cfg = &configs[ai];
        let body = &state.bodies[ai];
        // gravity, acting at the (possibly offset) centre of mass
        forces[ai].fz -= cfg.mass * state.gravity;
        let off = ctl.com_offset[ai];
        if off != 0.0 {
            // torque of the gravity force about the geometric centre
            let r = rotate(body.pitch, [off, 0.0]);
            forces[ai].torque += r[0] * (-cfg.mass * state.gravity);
        }
        forces[ai].fx += ctl.push[ai][0];
        forces[ai].fz += ctl.push[ai][1];
        forces[ai].torque += ctl.push[ai][2];
    }
    forces[AgentId::Jumper.idx()].torque += ctl.assist_torque;

    for ai in 0..2 {
        let cfg = &configs[ai];
        let f = &forces[ai];
        assert!(
            f.fx.is_finite() && f.fz.is_finite() && f.torque.is_finite(),
            "non-finite force on agent {ai}: fx={} fz={} torque={}",
            f.fx,
            f.fz,
            f.torque
        );
        let body = &mut state.bodies[ai];
        let ax = f.fx / cfg.mass;
        let az = f.fz / cfg.mass;
        let aw = f.torque / cfg.inertia;
        let vx_new = body.vx + ax * dt;
        let vz_new = body.vz + az * dt;
        let w_new = body.pitch_rate + aw * dt;
        body.x += 0.5 * (body.vx + vx_new) * dt;
        body.z += 0.5 * (body.vz + vz_new) * dt;
        let dpitch = 0.5 * (body.pitch_rate + w_new) * dt;
        body.pitch += dpitch;
        body.accumulated_pitch += dpitch;
        body.vx = vx_new;
        body.vz = vz_new;
        body.pitch_rate = w_new;
    }
    state.time += dt;
    assert!(state.is_finite(), "non-finite state after substep at t={}", state.time);
}

/// Closed-form projectile pose after time `t` under gravity `g`, ignoring
/// contacts and actuation. Test oracle for the integrator.
pub fn ballistic_oracle(body: &BodyState, g: f64, t: f64) -> BodyState {
    assert!(t >= 0.0);
    BodyState {
        x: body.x + body.vx * t,
        z: body.z + body.vz * t - 0.5 * g * t * t,
        pitch: body.pitch + body.pitch_rate * t,
        vx: body.vx,
        vz: body.vz - g * t,
        pitch_rate: body.pitch_rate,
        accumulated_pitch: body.accumulated_pitch + body.pitch_rate * t,
    }
}

/// Kinetic plus gravitational potential energy of both bodies. Legs are
/// massless, so this is exact over contact-free intervals.
pub fn mechanical_energy(state: &SimState, configs: &[RobotConfig; 2]) -> f64 {
    let mut e = 0.0;
    for ai in 0..2 {
        let b = &state.bodies[ai];
        let c = &configs[ai];
        e += 0.5 * c.mass * (b.vx * b.vx + b.vz * b.vz)
            + 0.5 * c.inertia * b.pitch_rate * b.pitch_rate
            + c.mass * state.gravity * b.z;
    }
    e
}

#[cfg(test)]
mod tests {
    use super::*;

    fn configs() -> [RobotConfig; 2] {
        [RobotConfig::default_launcher(), RobotConfig::default_jumper()]
    }

    fn far_platform() -> ObjectState {
        ObjectState {
            platform_x: 100.0,
            platform_z: 1.0,
            platform_halfwidth: 0.5,
        }
    }

    /// Park both robots far apart and in the air so no contact fires.
    fn airborne_state(configs: &[RobotConfig; 2]) -> SimState {
        let mut s = SimState::new(configs, 9.81);
        s.bodies[0] = BodyState::at_rest(-50.0, 10.0);
        s.bodies[1] = BodyState::at_rest(50.0, 10.0);
        s
    }

    #[test]
    fn ballistic_flight_matches_oracle() {
        let cfgs = configs();
        let mut s = airborne_state(&cfgs);
        s.bodies[1].vx = 1.5;
        s.bodies[1].vz = 3.0;
        s.bodies[1].pitch_rate = 2.0;
        let start = s.bodies[1];
        let ctl = ControlInputs::passive(&cfgs);
        let dt = 0.02 / 4.0;
        for _ in 0..100 {
            substep(&mut s, &cfgs, &WorldParams::default(), &far_platform(), &ctl, dt);
        }
        let expect = ballistic_oracle(&start, 9.81, 0.5);
        let dz_expect = expect.z - start.z;
        let dz_got = s.bodies[1].z - start.z;
        assert!(
            (dz_got - dz_expect).abs() / dz_expect.abs() < 0.005,
            "dz got {dz_got}, expected {dz_expect}"
        );
        assert!((s.bodies[1].x - expect.x).abs() < 1e-9);
        assert!((s.bodies[1].vz - expect.vz).abs() < 1e-9);
        assert!((s.bodies[1].accumulated_pitch - expect.accumulated_pitch).abs() < 1e-9);
    }

    #[test]
    fn free_fall_half_second_drop() {
        let cfgs = configs();
        let mut s = airborne_state(&cfgs);
        let z0 = s.bodies[1].z;
        let ctl = ControlInputs::passive(&cfgs);
        for _ in 0..100 {
            substep(&mut s, &cfgs, &WorldParams::default(), &far_platform(), &ctl, 0.005);
        }
        let dz = s.bodies[1].z - z0;
        assert!((dz + 1.226).abs() / 1.226 < 0.005, "dz = {dz}");
    }

    #[test]
    fn apex_gain_matches_closed_form() {
        // vz = 3.0, g = 9.81 -> apex gain v^2 / 2g = 0.4587 m
        let b = BodyState {
            vz: 3.0,
            ..BodyState::at_rest(0.0, 0.0)
        };
        let t_apex = 3.0 / 9.81;
        let o = ballistic_oracle(&b, 9.81, t_apex);
        assert!((o.z - 0.45871559633).abs() < 1e-9);
        let id = ballistic_oracle(&b, 9.81, 0.0);
        assert_eq!(id, b);
        let b2 = BodyState {
            vx: 1.0,
            ..BodyState::at_rest(0.0, 0.0)
        };
        assert!((ballistic_oracle(&b2, 9.81, 1.0).x - 1.0).abs() < 1e-12);
    }

    #[test]
    fn momentum_and_velocity_kick_are_exact_without_contact() {
        let cfgs = configs();
        let mut s = airborne_state(&cfgs);
        s.bodies[0].vx = 0.7;
        s.bodies[1].vx = -0.3;
        let ctl = ControlInputs::passive(&cfgs);
        let dt = 0.005;
        for step in 1..=50 {
            let vz_before = s.bodies[0].vz;
            substep(&mut s, &cfgs, &WorldParams::default(), &far_platform(), &ctl, dt);
            assert_eq!(s.bodies[0].vz, vz_before - 9.81 * dt);
            let _ = step;
        }
        assert_eq!(s.bodies[0].vx, 0.7);
        assert_eq!(s.bodies[1].vx, -0.3);
    }

    #[test]
    fn energy_drift_is_negligible_in_free_flight() {
        let cfgs = configs();
        let mut s = airborne_state(&cfgs);
        s.bodies[1].vz = 2.0;
        s.bodies[1].vx = 1.0;
        let e0 = mechanical_energy(&s, &cfgs);
        let ctl = ControlInputs::passive(&cfgs);
        for _ in 0..200 {
            substep(&mut s, &cfgs, &WorldParams::default(), &far_platform(), &ctl, 0.005);
        }
        let e1 = mechanical_energy(&s, &cfgs);
        assert!((e1 - e0).abs() / e0.abs() < 0.001, "drift {}", (e1 - e0) / e0);
    }

    fn settle_jumper_on_ground(cfgs: &[RobotConfig; 2]) -> SimState {
        let mut s = SimState::new(cfgs, 9.81);
        s.bodies[0] = BodyState::at_rest(-50.0, 10.0); // launcher parked in the air
        s.bodies[1] = BodyState::at_rest(0.0, cfgs[1].default_rest_lengths[0]);
        let ctl = ControlInputs::passive(cfgs);
        for _ in 0..2000 {
            substep(&mut s, cfgs, &WorldParams::default(), &far_platform(), &ctl, 0.005);
            // keep the launcher from falling into the scene
            s.bodies[0] = BodyState::at_rest(-50.0, 10.0);
        }
        s
    }

    #[test]
    fn static_rest_supports_weight() {
        let cfgs = configs();
        let s = settle_jumper_on_ground(&cfgs);
        let total: f64 = s
            .contacts
            .iter()
            .filter(|c| c.active && c.agent == AgentId::Jumper)
            .map(|c| c.normal_force)
            .sum();
        let weight = 15.0 * 9.81;
        assert!(
            (total - weight).abs() / weight < 0.02,
            "total normal {total}, weight {weight}"
        );
    }

    #[test]
    fn rest_penetration_below_5mm() {
        let cfgs = configs();
        let s = settle_jumper_on_ground(&cfgs);
        for c in s.contacts.iter().filter(|c| c.active) {
            assert!(-c.position[1] < 0.005, "penetration {}", -c.position[1]);
        }
    }

    #[test]
    fn separated_foot_gives_inactive_record() {
        let cfgs = configs();
        let mut s = SimState::new(&cfgs, 9.81);
        s.bodies[1] = BodyState::at_rest(50.0, cfgs[1].default_rest_lengths[0] + 0.01);
        s.bodies[0] = BodyState::at_rest(-50.0, 10.0);
        let recs = resolve_contacts(&mut s, &cfgs, &WorldParams::default(), &far_platform());
        for r in recs.iter().filter(|r| r.agent == AgentId::Jumper) {
            assert!(!r.active);
            assert_eq!(r.normal_force, 0.0);
            assert_eq!(r.tangent_force, 0.0);
        }
    }

    #[test]
    fn friction_cone_and_slide_magnitude() {
        let cfgs = configs();
        let world = WorldParams::default();
        let mut s = settle_jumper_on_ground(&cfgs);
        // drag the jumper sideways fast enough to break static friction
        s.bodies[1].vx = 2.0;
        let recs = resolve_contacts(&mut s, &cfgs, &world, &far_platform());
        let mut saw_slide = false;
        for r in recs.iter().filter(|r| r.active && r.agent == AgentId::Jumper) {
            if r.sliding {
                saw_slide = true;
                assert!(
                    (r.tangent_force.abs() - world.mu_dynamic * r.normal_force).abs() < 1e-9,
                    "slide force not on cone"
                );
            } else {
                assert!(r.tangent_force.abs() <= world.mu_static * r.normal_force + 1e-9);
            }
        }
        assert!(saw_slide, "expected at least one sliding contact");
    }

    #[test]
    fn pd_force_zero_at_setpoint_and_clamps() {
        let cfg = RobotConfig::default_jumper();
        let leg = LegState {
            length: cfg.default_rest_lengths[0],
            rate: 0.0,
            rest_length: cfg.default_rest_lengths[0],
            attach_offset: cfg.attach_offsets[0],
            force_limit: cfg.leg_force_limit,
            last_force: 0.0,
            angle: 0.0,
            angle_rate: 0.0,
        };
        assert_eq!(pd_force(&cfg, &leg, cfg.default_rest_lengths[0]), 0.0);
        // demand far beyond what kp*error can deliver: exact clamp
        assert_eq!(pd_force(&cfg, &leg, 10.0), cfg.leg_force_limit);
        assert_eq!(pd_force(&cfg, &leg, -10.0), -cfg.leg_force_limit);
    }

    #[test]
    fn assist_torque_flows_through_to_pitch_acceleration() {
        let cfgs = configs();
        let mut s = airborne_state(&cfgs);
        let mut ctl = ControlInputs::passive(&cfgs);
        ctl.assist_torque = 120.0;
        let dt = 0.005;
        substep(&mut s, &cfgs, &WorldParams::default(), &far_platform(), &ctl, dt);
        let alpha = s.bodies[1].pitch_rate / dt;
        assert!((alpha - 120.0 / cfgs[1].inertia).abs() < 1e-9);
        // launcher unaffected
        assert_eq!(s.bodies[0].pitch_rate, 0.0);
    }

    #[test]
    fn action_scaling_and_clamp() {
        let cfg = RobotConfig::default_jumper();
        let t = leg_targets_from_action(&[0.5, -0.5, 0.0, 0.0], &cfg);
        assert!((t[0].length - (0.30 + 0.15 * 0.5)).abs() < 1e-12);
        assert!((t[1].length - (0.30 - 0.15 * 0.5)).abs() < 1e-12);
        // out-of-range action is clamped to [-1, 1] before scaling
        let t = leg_targets_from_action(&[5.0, 0.0, 0.0, 0.0], &cfg);
        assert!((t[0].length - 0.45).abs() < 1e-12);
    }

    #[test]
    fn richardson_halved_step_agrees_to_second_order() {
        let cfgs = configs();
        let ctl = ControlInputs::passive(&cfgs);
        let world = WorldParams::default();
        let run = |dt: f64, n: usize| {
            let mut s = airborne_state(&cfgs);
            s.bodies[1].vz = 1.0;
            s.bodies[1].pitch_rate = 0.5;
            for _ in 0..n {
                substep(&mut s, &cfgs, &world, &far_platform(), &ctl, dt);
            }
            s.bodies[1]
        };
        let coarse = run(0.005, 100);
        let fine = run(0.0025, 200);
        assert!((coarse.z - fine.z).abs() < 1e-6);
        assert!((coarse.x - fine.x).abs() < 1e-6);
    }

    #[test]
    fn accumulated_pitch_is_rate_times_time() {
        let cfgs = configs();
        let mut s = airborne_state(&cfgs);
        s.bodies[1].pitch_rate = 1.7;
        let ctl = ControlInputs::passive(&cfgs);
        // no torque: pitch rate stays constant, accumulation is exact
        for _ in 0..100 {
            substep(&mut s, &cfgs, &WorldParams::default(), &far_platform(), &ctl, 0.005);
        }
        assert!((s.bodies[1].accumulated_pitch - 1.7 * 0.5).abs() < 1e-12);
    }
}
