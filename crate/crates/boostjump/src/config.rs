//! Run configuration: a flat INI-style `key = value` format with dotted
//! sections, a snapshot writer, and strict parsing (unknown keys are a
//! hard error, never a silent typo).
//!
//! The key schema is defined once in [`walk`]; the parser and the snapshot
//! serializer both traverse it, so a written snapshot always re-parses to
//! an identical configuration.

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::marl::ppo::OptimizerKind;
use crate::marl::trainer::TrainConfig;
use crate::randomize::RangeSpec;
use crate::sim2d::RobotConfig;

/// Everything a run needs: the training recipe plus evaluation defaults
/// and the output location.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    /// Episodes per seed for `eval` and `ablate`.
    pub eval_episodes: usize,
    pub eval_seeds: Vec<u64>,
    /// Run directory; subcommands fall back to a CLI flag when unset.
    pub out_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            train: TrainConfig::default(),
            eval_episodes: 10,
            eval_seeds: vec![0, 1, 2],
            out_dir: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value` or `[section]`, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("unknown configuration key `{key}`")]
    UnknownKey { key: String },
    #[error("key `{key}`: cannot parse {value:?} as {expected}")]
    BadValue {
        key: String,
        value: String,
        expected: &'static str,
    },
    #[error("config i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// One visit per configuration key; implemented by the parser and the
/// snapshot writer.
trait Visit {
    fn f64(&mut self, key: &str, v: &mut f64) -> Result<(), ConfigError>;
    fn u64(&mut self, key: &str, v: &mut u64) -> Result<(), ConfigError>;
    fn u32(&mut self, key: &str, v: &mut u32) -> Result<(), ConfigError>;
    fn usize(&mut self, key: &str, v: &mut usize) -> Result<(), ConfigError>;
    fn bool(&mut self, key: &str, v: &mut bool) -> Result<(), ConfigError>;
    fn f64_list(&mut self, key: &str, v: &mut [f64]) -> Result<(), ConfigError>;
    fn u64_list(&mut self, key: &str, v: &mut [u64]) -> Result<(), ConfigError>;
    fn u64_vec(&mut self, key: &str, v: &mut Vec<u64>) -> Result<(), ConfigError>;
    fn usize_vec(&mut self, key: &str, v: &mut Vec<usize>) -> Result<(), ConfigError>;
    fn optimizer(&mut self, key: &str, v: &mut OptimizerKind) -> Result<(), ConfigError>;
    fn opt_path(&mut self, key: &str, v: &mut Option<PathBuf>) -> Result<(), ConfigError>;
}

fn walk_robot(prefix: &str, r: &mut RobotConfig, v: &mut impl Visit) -> Result<(), ConfigError> {
    let k = |name: &str| format!("{prefix}.{name}");
    v.f64(&k("mass"), &mut r.mass)?;
    v.f64(&k("inertia"), &mut r.inertia)?;
    v.f64(&k("half_length"), &mut r.half_length)?;
    v.f64(&k("base_drop"), &mut r.base_drop)?;
    v.f64(&k("platform_mount_height"), &mut r.platform_mount_height)?;
    v.f64(&k("pd_kp"), &mut r.pd_kp)?;
    v.f64(&k("pd_kd"), &mut r.pd_kd)?;
    v.f64_list(&k("default_rest_lengths"), &mut r.default_rest_lengths)?;
    v.f64_list(&k("attach_offsets"), &mut r.attach_offsets)?;
    v.f64(&k("leg_force_limit"), &mut r.leg_force_limit)?;
    v.f64(&k("min_leg_length"), &mut r.min_leg_length)?;
    v.f64(&k("max_leg_length"), &mut r.max_leg_length)?;
    v.f64(&k("max_leg_rate"), &mut r.max_leg_rate)?;
    v.f64(&k("servo_tau"), &mut r.servo_tau)?;
    v.f64(&k("action_scale"), &mut r.action_scale)?;
    v.f64(&k("angle_scale"), &mut r.angle_scale)?;
    v.f64(&k("max_leg_angle"), &mut r.max_leg_angle)?;
    v.f64(&k("max_leg_angle_rate"), &mut r.max_leg_angle_rate)?;
    Ok(())
}

fn walk_range(name: &str, r: &mut RangeSpec, v: &mut impl Visit) -> Result<(), ConfigError> {
    v.f64(&format!("randomize.{name}.min"), &mut r.min)?;
    v.f64(&format!("randomize.{name}.max"), &mut r.max)?;
    v.bool(&format!("randomize.{name}.enabled"), &mut r.enabled)?;
    Ok(())
}

/// The full key schema. Every configurable field appears here exactly once.
fn walk(c: &mut RunConfig, v: &mut impl Visit) -> Result<(), ConfigError> {
    v.u64("seed", &mut c.train.seed)?;
    v.usize("n_envs", &mut c.train.n_envs)?;
    v.u64("total_env_steps", &mut c.train.total_env_steps)?;
    v.u64("checkpoint_every", &mut c.train.checkpoint_every)?;
    v.usize_vec("hidden", &mut c.train.hidden)?;
    v.usize("eval_episodes", &mut c.eval_episodes)?;
    v.u64_vec("eval_seeds", &mut c.eval_seeds)?;
    v.opt_path("out", &mut c.out_dir)?;

    let h = &mut c.train.hyper;
    v.f64("hyper.gamma", &mut h.gamma)?;
    v.f64("hyper.lambda", &mut h.lambda)?;
    v.f64("hyper.lr", &mut h.lr)?;
    v.f64("hyper.lr_min", &mut h.lr_min)?;
    v.f64("hyper.lr_max", &mut h.lr_max)?;
    v.f64("hyper.kl_target", &mut h.kl_target)?;
    v.f64("hyper.grad_norm_clip", &mut h.grad_norm_clip)?;
    v.f64("hyper.ratio_clip", &mut h.ratio_clip)?;
    v.f64("hyper.value_clip", &mut h.value_clip)?;
    v.usize("hyper.epochs", &mut h.epochs)?;
    v.usize("hyper.minibatches", &mut h.minibatches)?;
    v.usize("hyper.rollout_steps", &mut h.rollout_steps)?;
    v.optimizer("hyper.optimizer", &mut h.optimizer)?;

    let e = &mut c.train.env;
    v.u32("env.horizon", &mut e.horizon)?;
    v.f64("env.control_dt", &mut e.control_dt)?;
    v.u32("env.n_substeps", &mut e.n_substeps)?;
    v.f64("env.platform_halfwidth", &mut e.platform_halfwidth)?;
    v.f64("env.platform_standoff", &mut e.platform_standoff)?;
    v.f64("env.vx_per_offset", &mut e.vx_per_offset)?;
    v.bool("env.flip_mode", &mut e.flip_mode)?;
    v.f64("env.base_force_limit", &mut e.base_force_limit)?;
    v.f64("env.fall_height", &mut e.fall_height)?;

    let w = &mut c.train.env.world;
    v.f64("world.k_contact", &mut w.k_contact)?;
    v.f64("world.d_contact", &mut w.d_contact)?;
    v.f64("world.tangent_stiffness", &mut w.tangent_stiffness)?;
    v.f64("world.tangent_damping", &mut w.tangent_damping)?;
    v.f64("world.mu_static", &mut w.mu_static)?;
    v.f64("world.mu_dynamic", &mut w.mu_dynamic)?;
    v.f64(
        "world.launcher_platform_halfwidth",
        &mut w.launcher_platform_halfwidth,
    )?;
    v.f64("world.capture_depth", &mut w.capture_depth)?;

    let s = &mut c.train.env.success;
    v.f64("success.min_height", &mut s.min_height)?;
    v.f64("success.max_xy_error", &mut s.max_xy_error)?;
    v.f64("success.flip_min_pitch", &mut s.flip_min_pitch)?;

    let [launcher, jumper] = &mut c.train.env.robots;
    walk_robot("launcher", launcher, v)?;
    walk_robot("jumper", jumper, v)?;

    let cu = &mut c.train.curriculum;
    v.f64("curriculum.gravity_initial", &mut cu.gravity_initial)?;
    v.f64("curriculum.gravity_final", &mut cu.gravity_final)?;
    v.u64_list("curriculum.gravity_milestones", &mut cu.gravity_milestones)?;
    v.bool(
        "curriculum.gravity_counts_env_steps",
        &mut cu.gravity_counts_env_steps,
    )?;
    v.u64("curriculum.success_threshold", &mut cu.success_threshold)?;
    v.u32("curriculum.n_offset_phases", &mut cu.n_offset_phases)?;
    v.f64("curriculum.offset_step", &mut cu.offset_step)?;
    v.f64("curriculum.height_min", &mut cu.height_min)?;
    v.f64("curriculum.height_step", &mut cu.height_step)?;
    v.f64("curriculum.height_max", &mut cu.height_max)?;
    v.u32("curriculum.n_init_stages", &mut cu.n_init_stages)?;
    v.f64("curriculum.init_gap_start", &mut cu.init_gap_start)?;
    v.f64("curriculum.init_gap_end", &mut cu.init_gap_end)?;
    v.u32("curriculum.n_delay_stages", &mut cu.n_delay_stages)?;
    v.f64("curriculum.delay_final_min", &mut cu.delay_final_min)?;
    v.f64("curriculum.delay_final_max", &mut cu.delay_final_max)?;
    v.f64("curriculum.flip_assist_initial", &mut cu.flip_assist_initial)?;
    v.f64("curriculum.flip_assist_step", &mut cu.flip_assist_step)?;
    v.bool("curriculum.gravity_enabled", &mut cu.gravity_enabled)?;
    v.bool("curriculum.init_enabled", &mut cu.init_enabled)?;
    v.bool("curriculum.delay_enabled", &mut cu.delay_enabled)?;
    v.bool("curriculum.target_enabled", &mut cu.target_enabled)?;

    let r = &mut c.train.env.randomization;
    walk_range("static_friction", &mut r.static_friction, v)?;
    walk_range("dynamic_friction", &mut r.dynamic_friction, v)?;
    walk_range("push_force", &mut r.push_force, v)?;
    walk_range("push_torque", &mut r.push_torque, v)?;
    walk_range("actuator_lag", &mut r.actuator_lag, v)?;
    walk_range("com_offset", &mut r.com_offset, v)?;
    walk_range("stiffness_gain", &mut r.stiffness_gain, v)?;
    walk_range("damping_gain", &mut r.damping_gain, v)?;
    walk_range("added_mass_jumper", &mut r.added_mass_jumper, v)?;
    walk_range("added_mass_launcher", &mut r.added_mass_launcher, v)?;
    walk_range("comm_delay", &mut r.comm_delay, v)?;
    walk_range("rel_pos_offset", &mut r.rel_pos_offset, v)?;
    walk_range("rel_pitch_offset", &mut r.rel_pitch_offset, v)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// parsing

struct Applier<'a> {
    key: &'a str,
    value: &'a str,
    found: bool,
}

impl Applier<'_> {
    fn parse_scalar<T: std::str::FromStr>(
        &mut self,
        expected: &'static str,
    ) -> Result<T, ConfigError> {
        self.found = true;
        self.value
            .parse()
            .map_err(|_| ConfigError::BadValue {
                key: self.key.to_string(),
                value: self.value.to_string(),
                expected,
            })
    }

    fn parse_items<T: std::str::FromStr>(
        &mut self,
        expected: &'static str,
    ) -> Result<Vec<T>, ConfigError> {
        self.found = true;
        self.value
            .split(',')
            .map(|p| p.trim().parse())
            .collect::<Result<Vec<T>, _>>()
            .map_err(|_| ConfigError::BadValue {
                key: self.key.to_string(),
                value: self.value.to_string(),
                expected,
            })
    }
}

macro_rules! scalar_apply {
    ($meth:ident, $ty:ty, $expected:literal) => {
        fn $meth(&mut self, key: &str, v: &mut $ty) -> Result<(), ConfigError> {
            if key == self.key {
                *v = self.parse_scalar($expected)?;
            }
            Ok(())
        }
    };
}

impl Visit for Applier<'_> {
    scalar_apply!(f64, f64, "a number");
    scalar_apply!(u64, u64, "a non-negative integer");
    scalar_apply!(u32, u32, "a non-negative integer");
    scalar_apply!(usize, usize, "a non-negative integer");
    scalar_apply!(bool, bool, "true or false");

    fn f64_list(&mut self, key: &str, v: &mut [f64]) -> Result<(), ConfigError> {
        if key == self.key {
            let items: Vec<f64> = self.parse_items("a comma-separated number list")?;
            if items.len() != v.len() {
                return Err(ConfigError::BadValue {
                    key: key.to_string(),
                    value: self.value.to_string(),
                    expected: "a list of the documented length",
                });
            }
            v.copy_from_slice(&items);
        }
        Ok(())
    }

    fn u64_list(&mut self, key: &str, v: &mut [u64]) -> Result<(), ConfigError> {
        if key == self.key {
            let items: Vec<u64> = self.parse_items("a comma-separated integer list")?;
            if items.len() != v.len() {
                return Err(ConfigError::BadValue {
                    key: key.to_string(),
                    value: self.value.to_string(),
                    expected: "a list of the documented length",
                });
            }
            v.copy_from_slice(&items);
        }
        Ok(())
    }

    fn u64_vec(&mut self, key: &str, v: &mut Vec<u64>) -> Result<(), ConfigError> {
        if key == self.key {
            *v = self.parse_items("a comma-separated integer list")?;
        }
        Ok(())
    }

    fn usize_vec(&mut self, key: &str, v: &mut Vec<usize>) -> Result<(), ConfigError> {
        if key == self.key {
            *v = self.parse_items("a comma-separated integer list")?;
        }
        Ok(())
    }

    fn optimizer(&mut self, key: &str, v: &mut OptimizerKind) -> Result<(), ConfigError> {
        if key == self.key {
            self.found = true;
            *v = match self.value {
                "adam" => OptimizerKind::Adam,
                "sgd" => OptimizerKind::Sgd,
                _ => {
                    return Err(ConfigError::BadValue {
                        key: key.to_string(),
                        value: self.value.to_string(),
                        expected: "`adam` or `sgd`",
                    })
                }
            };
        }
        Ok(())
    }

    fn opt_path(&mut self, key: &str, v: &mut Option<PathBuf>) -> Result<(), ConfigError> {
        if key == self.key {
            self.found = true;
            *v = Some(PathBuf::from(self.value));
        }
        Ok(())
    }
}

impl RunConfig {
    /// Parse a config from text; fields absent from the text keep their
    /// documented defaults.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = RunConfig::default();
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                section = name.trim().to_string();
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError::Syntax {
                    line: i + 1,
                    text: line.to_string(),
                });
            };
            let (key, value) = (key.trim(), value.trim());
            let full_key = if section.is_empty() {
                key.to_string()
            } else {
                format!("{section}.{key}")
            };
            let mut a = Applier {
                key: &full_key,
                value,
                found: false,
            };
            walk(&mut cfg, &mut a)?;
            if !a.found {
                return Err(ConfigError::UnknownKey { key: full_key });
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Serialize every key; the result re-parses to an identical config.
    pub fn snapshot(&self) -> String {
        struct Serializer {
            out: String,
        }
        impl Serializer {
            fn put(&mut self, key: &str, value: impl std::fmt::Display) {
                self.out.push_str(key);
                self.out.push_str(" = ");
                self.out.push_str(&value.to_string());
                self.out.push('\n');
            }
            fn put_list<T: std::fmt::Debug>(&mut self, key: &str, items: &[T]) {
                let joined = items
                    .iter()
                    .map(|x| format!("{x:?}"))
                    .collect::<Vec<_>>()
                    .join(",");
                self.put(key, joined);
            }
        }
        macro_rules! scalar_ser {
            ($meth:ident, $ty:ty) => {
                fn $meth(&mut self, key: &str, v: &mut $ty) -> Result<(), ConfigError> {
                    self.put(key, format!("{:?}", *v));
                    Ok(())
                }
            };
        }
        impl Visit for Serializer {
            scalar_ser!(f64, f64);
            scalar_ser!(u64, u64);
            scalar_ser!(u32, u32);
            scalar_ser!(usize, usize);
            scalar_ser!(bool, bool);
            fn f64_list(&mut self, key: &str, v: &mut [f64]) -> Result<(), ConfigError> {
                self.put_list(key, v);
                Ok(())
            }
            fn u64_list(&mut self, key: &str, v: &mut [u64]) -> Result<(), ConfigError> {
                self.put_list(key, v);
                Ok(())
            }
            fn u64_vec(&mut self, key: &str, v: &mut Vec<u64>) -> Result<(), ConfigError> {
                self.put_list(key, v);
                Ok(())
            }
            fn usize_vec(&mut self, key: &str, v: &mut Vec<usize>) -> Result<(), ConfigError> {
                self.put_list(key, v);
                Ok(())
            }
            fn optimizer(&mut self, key: &str, v: &mut OptimizerKind) -> Result<(), ConfigError> {
                self.put(
                    key,
                    match v {
                        OptimizerKind::Adam => "adam",
                        OptimizerKind::Sgd => "sgd",
                    },
                );
                Ok(())
            }
            fn opt_path(&mut self, key: &str, v: &mut Option<PathBuf>) -> Result<(), ConfigError> {
                if let Some(p) = v {
                    self.put(key, p.display());
                }
                Ok(())
            }
        }
        let mut s = Serializer { out: String::new() };
        // walk takes &mut for the parser's benefit; serialization only reads
        walk(&mut self.clone(), &mut s).expect("serializer never fails");
        s.out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_snapshot_round_trips_identically() {
        let cfg = RunConfig::default();
        let snap = cfg.snapshot();
        let reparsed = RunConfig::parse(&snap).unwrap();
        assert_eq!(cfg, reparsed);
        // and the snapshot of the reparse is byte-identical
        assert_eq!(snap, reparsed.snapshot());
    }

    #[test]
    fn modified_config_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.train.seed = 987;
        cfg.train.n_envs = 4096;
        cfg.train.hidden = vec![512, 512, 256, 128];
        cfg.train.hyper.lr = 3.0e-4;
        cfg.train.env.flip_mode = true;
        cfg.train.env.robots[1].mass = 17.5;
        cfg.train.curriculum.gravity_milestones = [1000, 2000, 3000];
        cfg.train.env.randomization.push_force.enabled = false;
        cfg.eval_seeds = vec![42];
        cfg.out_dir = Some(PathBuf::from("/tmp/run1"));
        let reparsed = RunConfig::parse(&cfg.snapshot()).unwrap();
        assert_eq!(cfg, reparsed);
    }

    #[test]
    fn unknown_key_is_a_hard_error_naming_the_key() {
        let err = RunConfig::parse("hyper.gama = 0.99\n").unwrap_err();
        match err {
            ConfigError::UnknownKey { key } => assert_eq!(key, "hyper.gama"),
            other => panic!("wrong error: {other}"),
        }
    }

    #[test]
    fn section_headers_and_dotted_keys_are_equivalent() {
        let a = RunConfig::parse("[hyper]\nlr = 0.001\n").unwrap();
        let b = RunConfig::parse("hyper.lr = 0.001\n").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.train.hyper.lr, 0.001);
    }

    #[test]
    fn comments_and_blanks_are_ignored() {
        let cfg = RunConfig::parse("# a comment\n; another\n\nseed = 5\n").unwrap();
        assert_eq!(cfg.train.seed, 5);
    }

    #[test]
    fn bad_value_names_key_and_value() {
        let err = RunConfig::parse("seed = banana\n").unwrap_err();
        assert!(matches!(err, ConfigError::BadValue { .. }));
        let msg = err.to_string();
        assert!(msg.contains("seed") && msg.contains("banana"), "{msg}");
    }

    #[test]
    fn syntax_error_reports_line_number() {
        let err = RunConfig::parse("seed = 1\nnot a kv line\n").unwrap_err();
        match err {
            ConfigError::Syntax { line, .. } => assert_eq!(line, 2),
            other => panic!("wrong error: {other}"),
        }
    }

    #[test]
    fn paper_scale_values_accepted() {
        let cfg =
            RunConfig::parse("n_envs = 4096\nhidden = 512, 512, 256, 128\n").unwrap();
        assert_eq!(cfg.train.n_envs, 4096);
        assert_eq!(cfg.train.hidden, vec![512, 512, 256, 128]);
    }

    #[test]
    fn wrong_list_length_rejected() {
        let err =
            RunConfig::parse("curriculum.gravity_milestones = 1,2\n").unwrap_err();
        assert!(matches!(err, ConfigError::BadValue { .. }));
    }
}
