//! Two-robot cooperative jumping in the sagittal plane.
//!
//! A heavy "launcher" robot carries a light "jumper" on a back-mounted
//! platform and boosts it onto a raised target. Both robots are trained
//! jointly with multi-agent PPO under centralized training / decentralized
//! execution. The crate bundles the physics ([`sim2d`]), the reward shaping
//! ([`rewards`]), the training curricula ([`curriculum`]), domain
//! randomization ([`randomize`]), the episode machinery ([`env_core`]), the
//! learner ([`marl`]), evaluation tooling ([`evalkit`]) and a CLI.

pub mod config;
pub mod curriculum;
pub mod env_core;
pub mod evalkit;
pub mod marl;
pub mod randomize;
pub mod rewards;
pub mod sim2d;
