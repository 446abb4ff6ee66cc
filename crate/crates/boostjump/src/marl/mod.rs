//! Multi-agent PPO under centralized training / decentralized execution:
//! per-agent Gaussian actors on local observations, per-agent critics on
//! the shared global state, GAE, clipped-surrogate updates with value and
//! gradient-norm clipping, a KL-adaptive learning rate, streaming
//! observation standardization, and binary checkpointing. All gradients
//! come from a module-internal reverse-mode pass over the fixed MLP graph.

pub mod checkpoint;
pub mod gae;
pub mod nn;
pub mod ppo;
pub mod standardizer;
pub mod trainer;
