//! Domain randomization: per-episode physical perturbations, per-step push
//! disturbances, and the action lag buffer for actuator/communication
//! delays. Disabled rows collapse to their midpoint deterministically.

use rand::Rng;
use std::collections::VecDeque;

/// One randomization row: a uniform range plus an enable flag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangeSpec {
    pub min: f64,
    pub max: f64,
    pub enabled: bool,
}

impl RangeSpec {
    pub fn new(min: f64, max: f64) -> Self {
        assert!(min <= max, "randomization range inverted: [{min}, {max}]");
        RangeSpec {
            min,
            max,
            enabled: true,
        }
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.min + self.max)
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        if !self.enabled || self.min == self.max {
            self.midpoint()
        } else {
            self.min + rng.gen::<f64>() * (self.max - self.min)
        }
    }
}

/// Ranges for every randomized parameter. Lags are in seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomizationConfig {
    pub static_friction: RangeSpec,
    pub dynamic_friction: RangeSpec,
    pub push_force: RangeSpec,
    pub push_torque: RangeSpec,
    pub actuator_lag: RangeSpec,
    pub com_offset: RangeSpec,
    pub stiffness_gain: RangeSpec,
    pub damping_gain: RangeSpec,
    pub added_mass_jumper: RangeSpec,
    pub added_mass_launcher: RangeSpec,
    pub comm_delay: RangeSpec,
    pub rel_pos_offset: RangeSpec,
    pub rel_pitch_offset: RangeSpec,
}

impl Default for RandomizationConfig {
    fn default() -> Self {
        RandomizationConfig {
            static_friction: RangeSpec::new(0.6, 1.0),
            dynamic_friction: RangeSpec::new(0.5, 0.9),
            push_force: RangeSpec::new(-5.0, 5.0),
            push_torque: RangeSpec::new(-0.5, 0.5),
            actuator_lag: RangeSpec::new(0.0, 0.010),
            com_offset: RangeSpec::new(-0.02, 0.02),
            stiffness_gain: RangeSpec::new(0.9, 1.1),
            damping_gain: RangeSpec::new(0.9, 1.1),
            added_mass_jumper: RangeSpec::new(-2.0, 2.0),
            added_mass_launcher: RangeSpec::new(-1.0, 1.0),
            comm_delay: RangeSpec::new(0.0, 0.005),
            rel_pos_offset: RangeSpec::new(-0.02, 0.02),
            rel_pitch_offset: RangeSpec::new(-0.08, 0.08),
        }
    }
}

impl RandomizationConfig {
    /// All rows disabled: every draw is the deterministic midpoint.
    pub fn disabled() -> Self {
        let mut cfg = RandomizationConfig::default();
        for row in cfg.rows_mut() {
            row.enabled = false;
        }
        cfg
    }

    pub fn set_all_enabled(&mut self, enabled: bool) {
        for row in self.rows_mut() {
            row.enabled = enabled;
        }
    }

    pub fn rows(&self) -> [(&'static str, &RangeSpec); 13] {
        [
            ("static_friction", &self.static_friction),
            ("dynamic_friction", &self.dynamic_friction),
            ("push_force", &self.push_force),
            ("push_torque", &self.push_torque),
            ("actuator_lag", &self.actuator_lag),
            ("com_offset", &self.com_offset),
            ("stiffness_gain", &self.stiffness_gain),
            ("damping_gain", &self.damping_gain),
            ("added_mass_jumper", &self.added_mass_jumper),
            ("added_mass_launcher", &self.added_mass_launcher),
            ("comm_delay", &self.comm_delay),
            ("rel_pos_offset", &self.rel_pos_offset),
            ("rel_pitch_offset", &self.rel_pitch_offset),
        ]
    }

    fn rows_mut(&mut self) -> [&mut RangeSpec; 13] {
        [
            &mut self.static_friction,
            &mut self.dynamic_friction,
            &mut self.push_force,
            &mut self.push_torque,
            &mut self.actuator_lag,
            &mut self.com_offset,
            &mut self.stiffness_gain,
            &mut self.damping_gain,
            &mut self.added_mass_jumper,
            &mut self.added_mass_launcher,
            &mut self.comm_delay,
            &mut self.rel_pos_offset,
            &mut self.rel_pitch_offset,
        ]
    }
}

/// Perturbation drawn once per episode at reset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodePerturbation {
    pub static_friction: f64,
    pub dynamic_friction: f64,
    pub com_offset: f64,
    pub stiffness_gain: f64,
    pub damping_gain: f64,
    pub added_mass_jumper: f64,
    pub added_mass_launcher: f64,
    pub actuator_lag: f64,
    pub comm_delay: f64,
    pub rel_pos_offset: f64,
    pub rel_pitch_offset: f64,
}

impl EpisodePerturbation {
    /// Combined actuator plus communication lag applied to actions.
    pub fn total_lag(&self) -> f64 {
        self.actuator_lag + self.comm_delay
    }
}

pub fn sample_episode_perturbation<R: Rng>(
    cfg: &RandomizationConfig,
    rng: &mut R,
) -> EpisodePerturbation {
    EpisodePerturbation {
        static_friction: cfg.static_friction.sample(rng),
        dynamic_friction: cfg.dynamic_friction.sample(rng),
        com_offset: cfg.com_offset.sample(rng),
        stiffness_gain: cfg.stiffness_gain.sample(rng),
        damping_gain: cfg.damping_gain.sample(rng),
        added_mass_jumper: cfg.added_mass_jumper.sample(rng),
        added_mass_launcher: cfg.added_mass_launcher.sample(rng),
        actuator_lag: cfg.actuator_lag.sample(rng),
        comm_delay: cfg.comm_delay.sample(rng),
        rel_pos_offset: cfg.rel_pos_offset.sample(rng),
        rel_pitch_offset: cfg.rel_pitch_offset.sample(rng),
    }
}

/// Per-agent push (fx, fz, torque) for one control step.
pub fn sample_push<R: Rng>(cfg: &RandomizationConfig, rng: &mut R) -> [[f64; 3]; 2] {
    let mut out = [[0.0; 3]; 2];
    for push in &mut out {
        push[0] = cfg.push_force.sample(rng);
        push[1] = cfg.push_force.sample(rng);
        push[2] = cfg.push_torque.sample(rng);
    }
    out
}

/// Fixed-capacity history of executed actions implementing the delay line.
/// A lag of `d` control steps (possibly fractional) returns the linear
/// interpolation between the actions `floor(d)` and `ceil(d)` steps ago.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionLagBuffer {
    history: VecDeque<[f64; 4]>,
}

impl ActionLagBuffer {
    pub fn new() -> Self {
        let mut history = VecDeque::with_capacity(8);
        for _ in 0..8 {
            history.push_back([0.0; 4]);
        }
        ActionLagBuffer { history }
    }

    pub fn reset(&mut self) {
        for a in &mut self.history {
            *a = [0.0; 4];
        }
    }

    /// Record the newest commanded action and return the one to execute
    /// under the given lag.
    pub fn push_and_get(&mut self, action: [f64; 4], lag: f64, control_dt: f64) -> [f64; 4] {
        assert!(lag >= 0.0 && control_dt > 0.0);
        self.history.pop_back();
        self.history.push_front(action);
        let d = lag / control_dt;
        let i0 = (d.floor() as usize).min(self.history.len() - 1);
        let i1 = (d.ceil() as usize).min(self.history.len() - 1);
        let frac = d - d.floor();
        let a0 = self.history[i0];
        let a1 = self.history[i1];
        let mut out = [0.0; 4];
        for k in 0..4 {
            out[k] = (1.0 - frac) * a0[k] + frac * a1[k];
        }
        out
    }
}

impl Default for ActionLagBuffer {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn disabled_rows_sample_midpoints() {
        let cfg = RandomizationConfig::disabled();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = sample_episode_perturbation(&cfg, &mut rng);
        assert_eq!(p.static_friction, 0.8);
        assert_eq!(p.dynamic_friction, 0.7);
        assert_eq!(p.added_mass_jumper, 0.0);
        assert_eq!(p.added_mass_launcher, 0.0);
        assert_eq!(p.com_offset, 0.0);
        assert_eq!(p.stiffness_gain, 1.0);
        assert_eq!(p.rel_pos_offset, 0.0);
    }

    #[test]
    fn samples_respect_table_ranges() {
        let cfg = RandomizationConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..10_000 {
            let p = sample_episode_perturbation(&cfg, &mut rng);
            assert!((0.6..=1.0).contains(&p.static_friction));
            assert!((0.5..=0.9).contains(&p.dynamic_friction));
            assert!((-0.02..=0.02).contains(&p.rel_pos_offset));
            assert!((-0.08..=0.08).contains(&p.rel_pitch_offset));
            assert!((-2.0..=2.0).contains(&p.added_mass_jumper));
            assert!((0.0..=0.010).contains(&p.actuator_lag));
            assert!((0.0..=0.005).contains(&p.comm_delay));
        }
    }

    #[test]
    fn push_zero_mean_and_bounded() {
        let cfg = RandomizationConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut sum = 0.0;
        let n = 20_000;
        for _ in 0..n {
            let p = sample_push(&cfg, &mut rng);
            for agent in &p {
                assert!(agent[0].abs() <= 5.0 && agent[1].abs() <= 5.0);
                assert!(agent[2].abs() <= 0.5);
                sum += agent[0];
            }
        }
        let mean = sum / (2.0 * f64::from(n));
        assert!(mean.abs() < 0.1, "mean push {mean}");
    }

    #[test]
    fn zeroed_push_ranges_leave_forces_unchanged() {
        let mut cfg = RandomizationConfig::default();
        cfg.push_force = RangeSpec::new(0.0, 0.0);
        cfg.push_torque = RangeSpec::new(0.0, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        assert_eq!(sample_push(&cfg, &mut rng), [[0.0; 3]; 2]);
    }

    #[test]
    fn lag_buffer_passthrough_and_delays() {
        let dt = 0.02;
        let mut buf = ActionLagBuffer::new();
        let a1 = [1.0, 2.0, 3.0, 4.0];
        let a2 = [5.0, 6.0, 7.0, 8.0];
        // lag 0: passthrough
        assert_eq!(buf.push_and_get(a1, 0.0, dt), a1);
        assert_eq!(buf.push_and_get(a2, 0.0, dt), a2);

        // lag 20 ms at 50 Hz: previous step's action exactly
        let mut buf = ActionLagBuffer::new();
        buf.push_and_get(a1, 0.020, dt);
        assert_eq!(buf.push_and_get(a2, 0.020, dt), a1);

        // lag 10 ms at 50 Hz: midpoint of the last two actions
        let mut buf = ActionLagBuffer::new();
        buf.push_and_get(a1, 0.010, dt);
        let got = buf.push_and_get(a2, 0.010, dt);
        for k in 0..4 {
            assert!((got[k] - 0.5 * (a1[k] + a2[k])).abs() < 1e-12);
        }
    }

    #[test]
    fn lag_buffer_preserves_ordering() {
        let dt = 0.02;
        let mut buf = ActionLagBuffer::new();
        let mut executed = Vec::new();
        for i in 0..20 {
            let a = [f64::from(i); 4];
            executed.push(buf.push_and_get(a, 0.02, dt)[0]);
        }
        // each input appears exactly once, in order, shifted by one step
        assert_eq!(executed[0], 0.0);
        for i in 1..20 {
            assert_eq!(executed[i], (i - 1) as f64);
        }
    }
}
