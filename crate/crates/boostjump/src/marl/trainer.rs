//! Vectorized rollout collection and the MAPPO training loop.
//!
//! A bank of independent environments is stepped in lockstep; transitions
//! feed the clipped-surrogate update after every 16-step rollout. The
//! curriculum advances from episode successes and the iteration counter,
//! and all schedules, stats and checkpoints stream to the run directory.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::checkpoint::{save_checkpoint, Checkpoint};
use super::gae::compute_gae;
use super::nn::{policy_sample, MlpParams};
use super::ppo::{
    adapt_lr, ppo_update, Optimizers, Policies, TrainerHyper, TransitionBatch, UpdateStats,
};
use super::standardizer::RunningStandardizer;
use crate::curriculum::{advance_on_successes, CurriculumConfig, CurriculumState};
use crate::env_core::{
    assemble_global_state, AgentObservation, Env, EnvConfig, GLOBAL_DIM, OBS_DIM,
};

pub const ACTION_DIM: usize = 4;

/// Full training recipe: environment, curriculum, optimization and scale.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub env: EnvConfig,
    pub curriculum: CurriculumConfig,
    pub hyper: TrainerHyper,
    pub n_envs: usize,
    pub total_env_steps: u64,
    /// Actor/critic hidden layer widths.
    pub hidden: Vec<usize>,
    pub seed: u64,
    /// Checkpoint cadence in training iterations (0 = only final).
    pub checkpoint_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            env: EnvConfig::default(),
            curriculum: CurriculumConfig::default(),
            hyper: TrainerHyper::default(),
            n_envs: 256,
            total_env_steps: 5_000_000,
            hidden: vec![128, 128, 64],
            seed: 0,
            checkpoint_every: 100,
        }
    }
}

/// Per-iteration training telemetry, one CSV row each.
#[derive(Debug, Clone, Copy)]
pub struct IterationStats {
    pub iteration: u64,
    pub env_steps: u64,
    pub mean_reward: f64,
    pub episodes: u64,
    pub success_rate: f64,
    pub update: UpdateStats,
    pub lr: f64,
    pub gravity: f64,
}

pub struct Trainer {
    pub cfg: TrainConfig,
    pub policies: Policies,
    pub opts: Optimizers,
    pub obs_standardizers: [RunningStandardizer; 2],
    pub global_standardizer: RunningStandardizer,
    pub curriculum: CurriculumState,
    pub lr: f64,
    /// Curriculum events emitted since the last telemetry flush.
    pub pending_events: Vec<crate::curriculum::CurriculumEvent>,
    envs: Vec<Env>,
    raw_obs: Vec<[AgentObservation; 2]>,
    rng: ChaCha8Rng,
    env_steps: u64,
    iteration: u64,
    episodes_total: u64,
    successes_total: u64,
}

fn layer_sizes(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut s = Vec::with_capacity(hidden.len() + 2);
    s.push(input);
    s.extend_from_slice(hidden);
    s.push(output);
    s
}

impl Trainer {
    pub fn new(cfg: TrainConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let actor_sizes = layer_sizes(OBS_DIM, &cfg.hidden, ACTION_DIM);
        let critic_sizes = layer_sizes(GLOBAL_DIM, &cfg.hidden, 1);
        let policies = Policies {
            actors: [
                MlpParams::new(&actor_sizes, true, &mut rng),
                MlpParams::new(&actor_sizes, true, &mut rng),
            ],
            critics: [
                MlpParams::new(&critic_sizes, false, &mut rng),
                MlpParams::new(&critic_sizes, false, &mut rng),
            ],
        };
        let opts = Optimizers::new(&policies, cfg.hyper.optimizer);
        let curriculum = CurriculumState::new(&cfg.curriculum);
        let mut envs: Vec<Env> = (0..cfg.n_envs)
            .map(|i| Env::new(cfg.env.clone(), cfg.seed.wrapping_add(1 + i as u64)))
            .collect();
        let raw_obs = envs
            .iter_mut()
            .map(|e| e.reset(&cfg.curriculum, &curriculum))
            .collect();
        Trainer {
            lr: cfg.hyper.lr,
            cfg,
            policies,
            opts,
            obs_standardizers: [
                RunningStandardizer::new(OBS_DIM),
                RunningStandardizer::new(OBS_DIM),
            ],
            global_standardizer: RunningStandardizer::new(GLOBAL_DIM),
            curriculum,
            pending_events: Vec::new(),
            envs,
            raw_obs,
            rng,
            env_steps: 0,
            iteration: 0,
            episodes_total: 0,
            successes_total: 0,
        }
    }

    /// Resume from a checkpoint, keeping this config's environments
    /// (the morphology warm-start path: physical config may differ).
    pub fn from_checkpoint(cfg: TrainConfig, ckpt: Checkpoint) -> Self {
        let mut t = Trainer::new(cfg);
        assert_eq!(
            t.policies.actors[0].sizes, ckpt.policies.actors[0].sizes,
            "checkpoint network shape does not match config"
        );
        t.policies = ckpt.policies.clone();
        t.opts = Optimizers::new(&ckpt.policies, t.cfg.hyper.optimizer);
        t.obs_standardizers = ckpt.obs_standardizers;
        t.global_standardizer = ckpt.global_standardizer;
        t.curriculum = ckpt.curriculum;
        t.lr = ckpt.lr;
        // re-place the environments under the restored curriculum
        let (ccfg, cstate) = (t.cfg.curriculum.clone(), t.curriculum.clone());
        t.raw_obs = t.envs.iter_mut().map(|e| e.reset(&ccfg, &cstate)).collect();
        t
    }

    pub fn env_steps(&self) -> u64 {
        self.env_steps
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            policies: self.policies.clone(),
            obs_standardizers: self.obs_standardizers.clone(),
            global_standardizer: self.global_standardizer.clone(),
            curriculum: self.curriculum.clone(),
            lr: self.lr,
        }
    }

    /// Collect one rollout and apply one MAPPO update.
    pub fn train_iteration(&mut self) -> IterationStats {
        let steps = self.cfg.hyper.rollout_steps;
        let n_envs = self.cfg.n_envs;
        // [env][t] sequences for GAE, flattened afterwards
        let mut seq_obs: Vec<Vec<[Vec<f64>; 2]>> = vec![Vec::with_capacity(steps); n_envs];
        let mut seq_global: Vec<Vec<Vec<f64>>> = vec![Vec::with_capacity(steps); n_envs];
        let mut seq_actions: Vec<Vec<[[f64; 4]; 2]>> = vec![Vec::with_capacity(steps); n_envs];
        let mut seq_logp: Vec<Vec<[f64; 2]>> = vec![Vec::with_capacity(steps); n_envs];
        let mut seq_values: Vec<Vec<[f64; 2]>> = vec![Vec::with_capacity(steps); n_envs];
        let mut seq_rewards: Vec<Vec<[f64; 2]>> = vec![Vec::with_capacity(steps); n_envs];
        let mut seq_dones: Vec<Vec<bool>> = vec![Vec::with_capacity(steps); n_envs];

        let mut reward_sum = 0.0;
        let mut episodes = 0u64;
        let mut successes = 0u64;
        let mut events = Vec::new();

        for _ in 0..steps {
            for e in 0..n_envs {
                let raw = self.raw_obs[e];
                let raw_global =
                    assemble_global_state(raw[0], raw[1], self.envs[e].state());
                let mut std_obs: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
                for a in 0..2 {
                    let v = raw[a].to_vec();
                    self.obs_standardizers[a].update(&v);
                    std_obs[a] = self.obs_standardizers[a].standardize(&v);
                }
                let gv = raw_global.to_vec();
                self.global_standardizer.update(&gv);
                let std_global = self.global_standardizer.standardize(&gv);

                let mut actions = [[0.0; 4]; 2];
                let mut logps = [0.0; 2];
                let mut values = [0.0; 2];
                for a in 0..2 {
                    let (act, lp) =
                        policy_sample(&self.policies.actors[a], &std_obs[a], &mut self.rng);
                    actions[a] = [act[0], act[1], act[2], act[3]];
                    logps[a] = lp;
                    values[a] = self.policies.critics[a].forward(&std_global)[0];
                }

                let out = self.envs[e].step(actions);
                self.env_steps += 1;
                reward_sum += 0.5 * (out.reward[0] + out.reward[1]);

                seq_obs[e].push(std_obs);
                seq_global[e].push(std_global);
                seq_actions[e].push(actions);
                seq_logp[e].push(logps);
                seq_values[e].push(values);
                seq_rewards[e].push(out.reward);
                seq_dones[e].push(out.done);

                if out.done {
                    episodes += 1;
                    if out.info.success {
                        successes += 1;
                        events.extend(advance_on_successes(
                            &mut self.curriculum,
                            &self.cfg.curriculum,
                            1,
                        ));
                    }
                    self.raw_obs[e] =
                        self.envs[e].reset(&self.cfg.curriculum, &self.curriculum);
                } else {
                    self.raw_obs[e] = out.obs;
                }
            }
        }
        self.episodes_total += episodes;
        self.successes_total += successes;

        // bootstrap values at the post-rollout states and assemble the batch
        let mut batch = TransitionBatch::default();
        for e in 0..n_envs {
            let raw = self.raw_obs[e];
            let raw_global = assemble_global_state(raw[0], raw[1], self.envs[e].state());
            let std_global = self.global_standardizer.standardize(&raw_global.to_vec());
            for a in 0..2 {
                let bootstrap = self.policies.critics[a].forward(&std_global)[0];
                let rewards: Vec<f64> = seq_rewards[e].iter().map(|r| r[a]).collect();
                let values: Vec<f64> = seq_values[e].iter().map(|v| v[a]).collect();
                let (adv, ret) = compute_gae(
                    &rewards,
                    &values,
                    &seq_dones[e],
                    bootstrap,
                    self.cfg.hyper.gamma,
                    self.cfg.hyper.lambda,
                );
                for t in 0..steps {
                    batch.obs[a].push(seq_obs[e][t][a].clone());
                    batch.actions[a].push(seq_actions[e][t][a].to_vec());
                    batch.log_probs[a].push(seq_logp[e][t][a]);
                    batch.values[a].push(values[t]);
                    batch.rewards[a].push(rewards[t]);
                    batch.advantages[a].push(adv[t]);
                    batch.returns[a].push(ret[t]);
                }
            }
            for t in 0..steps {
                batch.global.push(seq_global[e][t].clone());
                batch.dones.push(seq_dones[e][t]);
            }
        }

        let update = ppo_update(
            &mut batch,
            &mut self.policies,
            &mut self.opts,
            &self.cfg.hyper,
            self.lr,
            &mut self.rng,
        );
        self.lr = adapt_lr(update.approx_kl, self.lr, &self.cfg.hyper);

        self.iteration += 1;
        self.curriculum.global_step += if self.cfg.curriculum.gravity_counts_env_steps {
            (steps * n_envs) as u64
        } else {
            1
        };
        let gravity =
            crate::curriculum::gravity_at(&self.cfg.curriculum, self.curriculum.global_step);
        self.pending_events.extend(events);

        IterationStats {
            iteration: self.iteration,
            env_steps: self.env_steps,
            mean_reward: reward_sum / (steps * n_envs) as f64,
            episodes,
            success_rate: if episodes > 0 {
                successes as f64 / episodes as f64
            } else {
                0.0
            },
            update,
            lr: self.lr,
            gravity,
        }
    }
}

/// Run directory layout: config.snapshot (written by the CLI), stats.csv,
/// events.csv, checkpoints/iter_<n>.ckpt.
pub struct RunWriter {
    dir: PathBuf,
    stats: fs::File,
    events: fs::File,
}

impl RunWriter {
    pub fn create(dir: &Path) -> std::io::Result<Self> {
        fs::create_dir_all(dir.join("checkpoints"))?;
        let mut stats = fs::File::create(dir.join("stats.csv"))?;
        writeln!(
            stats,
            "iteration,env_steps,mean_reward,episodes,success_rate,policy_loss,value_loss,approx_kl,grad_norm,lr,gravity"
        )?;
        let mut events = fs::File::create(dir.join("events.csv"))?;
        writeln!(events, "global_step,schedule,stage,value")?;
        Ok(RunWriter {
            dir: dir.to_path_buf(),
            stats,
            events,
        })
    }

    pub fn write_stats(&mut self, s: &IterationStats) -> std::io::Result<()> {
        writeln!(
            self.stats,
            "{},{},{},{},{},{},{},{},{},{},{}",
            s.iteration,
            s.env_steps,
            s.mean_reward,
            s.episodes,
            s.success_rate,
            s.update.policy_loss,
            s.update.value_loss,
            s.update.approx_kl,
            s.update.grad_norm,
            s.lr,
            s.gravity
        )
    }

    pub fn write_event(&mut self, e: &crate::curriculum::CurriculumEvent) -> std::io::Result<()> {
        writeln!(
            self.events,
            "{},{},{},{}",
            e.global_step, e.schedule, e.stage, e.value
        )
    }

    pub fn checkpoint_path(&self, iteration: u64) -> PathBuf {
        self.dir.join(format!("checkpoints/iter_{iteration}.ckpt"))
    }
}

/// Train until the configured env-step budget, streaming telemetry to the
/// run directory when one is given.
pub fn train(cfg: TrainConfig, out_dir: Option<&Path>) -> std::io::Result<Trainer> {
    let mut writer = out_dir.map(RunWriter::create).transpose()?;
    let mut trainer = Trainer::new(cfg);
    train_loop(&mut trainer, &mut writer)?;
    Ok(trainer)
}

fn train_loop(trainer: &mut Trainer, writer: &mut Option<RunWriter>) -> std::io::Result<()> {
    while trainer.env_steps < trainer.cfg.total_env_steps {
        let stats = trainer.train_iteration();
        if let Some(w) = writer.as_mut() {
            w.write_stats(&stats)?;
            for e in trainer.pending_events.drain(..) {
                w.write_event(&e)?;
            }
            let every = trainer.cfg.checkpoint_every;
            if every > 0 && stats.iteration % every == 0 {
                let path = w.checkpoint_path(stats.iteration);
                save_checkpoint(&trainer.checkpoint(), &path)
                    .map_err(|e| std::io::Error::other(e.to_string()))?;
            }
        } else {
            trainer.pending_events.clear();
        }
    }
    if let Some(w) = writer.as_mut() {
        let path = w.checkpoint_path(trainer.iteration());
        save_checkpoint(&trainer.checkpoint(), &path)
            .map_err(|e| std::io::Error::other(e.to_string()))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> TrainConfig {
        let mut cfg = TrainConfig::default();
        cfg.n_envs = 4;
        cfg.total_env_steps = 4 * 16 * 3; // 3 iterations
        cfg.hidden = vec![16, 16];
        cfg.checkpoint_every = 0;
        cfg
    }

    #[test]
    fn iterations_are_deterministic_for_a_seed() {
        let mut a = Trainer::new(tiny_config());
        let mut b = Trainer::new(tiny_config());
        for _ in 0..2 {
            let sa = a.train_iteration();
            let sb = b.train_iteration();
            assert_eq!(sa.mean_reward.to_bits(), sb.mean_reward.to_bits());
            assert_eq!(
                sa.update.policy_loss.to_bits(),
                sb.update.policy_loss.to_bits()
            );
        }
        assert_eq!(a.policies.actors[0].flatten(), b.policies.actors[0].flatten());
    }

    #[test]
    fn train_writes_run_directory() {
        let dir = tempfile::tempdir().unwrap();
        let trainer = train(tiny_config(), Some(dir.path())).unwrap();
        assert!(trainer.env_steps() >= trainer.cfg.total_env_steps);
        let stats = std::fs::read_to_string(dir.path().join("stats.csv")).unwrap();
        assert!(stats.lines().next().unwrap().starts_with("iteration,"));
        assert_eq!(stats.lines().count(), 1 + 3); // header + 3 iterations
        assert!(dir.path().join("events.csv").exists());
        // final checkpoint written
        assert!(dir.path().join("checkpoints/iter_3.ckpt").exists());
    }

    #[test]
    fn checkpoint_resume_restores_learner_state() {
        let mut t = Trainer::new(tiny_config());
        t.train_iteration();
        let ckpt = t.checkpoint();
        let resumed = Trainer::from_checkpoint(tiny_config(), ckpt.clone());
        assert_eq!(
            resumed.policies.actors[1].flatten(),
            ckpt.policies.actors[1].flatten()
        );
        assert_eq!(resumed.curriculum, ckpt.curriculum);
        assert_eq!(resumed.lr, ckpt.lr);
    }
}
