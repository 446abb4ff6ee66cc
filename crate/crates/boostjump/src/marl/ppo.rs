//! Clipped-surrogate MAPPO update with value clipping, gradient-norm
//! clipping and a KL-adaptive learning rate.
//!
//! Two independent Gaussian actors (one per agent) and two independent
//! critics evaluated on the shared global state. All gradients are exact
//! analytic reverse-mode passes; the Gaussian log-density gradients with
//! respect to the mean and log-std are closed-form.

use rand::Rng;

use super::gae::normalize_advantages;
use super::nn::{gaussian_log_prob, MlpGrads, MlpParams};

/// MAPPO hyperparameters. Defaults follow the reference implementation
/// table: gamma 0.99, lambda 0.95, lr 5e-4, KL threshold 0.016, gradient
/// norm clip 1.0, ratio/value clips 0.2, 5 epochs over 4 minibatches,
/// 16-step rollouts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainerHyper {
    pub gamma: f64,
    pub lambda: f64,
    pub lr: f64,
    pub lr_min: f64,
    pub lr_max: f64,
    pub kl_target: f64,
    pub grad_norm_clip: f64,
    pub ratio_clip: f64,
    pub value_clip: f64,
    pub epochs: usize,
    pub minibatches: usize,
    pub rollout_steps: usize,
    pub optimizer: OptimizerKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

impl Default for TrainerHyper {
    fn default() -> Self {
        TrainerHyper {
            gamma: 0.99,
            lambda: 0.95,
            lr: 5e-4,
            lr_min: 1e-6,
            lr_max: 1e-2,
            kl_target: 0.016,
            grad_norm_clip: 1.0,
            ratio_clip: 0.2,
            value_clip: 0.2,
            epochs: 5,
            minibatches: 4,
            rollout_steps: 16,
            optimizer: OptimizerKind::Adam,
        }
    }
}

/// KL-adaptive learning-rate rule: shrink by 1.5x above twice the target,
/// grow by 1.5x below half of it, clamped to [lr_min, lr_max].
pub fn adapt_lr(approx_kl: f64, lr: f64, hyper: &TrainerHyper) -> f64 {
    assert!(lr > 0.0);
    if approx_kl > 2.0 * hyper.kl_target {
        (lr / 1.5).max(hyper.lr_min)
    } else if approx_kl < hyper.kl_target / 2.0 {
        (lr * 1.5).min(hyper.lr_max)
    } else {
        lr
    }
}

/// Flat rollout storage: one entry per (step, env), aligned across fields.
#[derive(Debug, Clone, Default)]
pub struct TransitionBatch {
    pub obs: [Vec<Vec<f64>>; 2],
    pub global: Vec<Vec<f64>>,
    pub actions: [Vec<Vec<f64>>; 2],
    pub log_probs: [Vec<f64>; 2],
    pub values: [Vec<f64>; 2],
    pub rewards: [Vec<f64>; 2],
    pub dones: Vec<bool>,
    pub advantages: [Vec<f64>; 2],
    pub returns: [Vec<f64>; 2],
}

impl TransitionBatch {
    pub fn len(&self) -> usize {
        self.global.len()
    }

    pub fn is_empty(&self) -> bool {
        self.global.is_empty()
    }

    fn assert_aligned(&self) {
        let n = self.len();
        for a in 0..2 {
            assert_eq!(self.obs[a].len(), n, "batch field misaligned");
            assert_eq!(self.actions[a].len(), n, "batch field misaligned");
            assert_eq!(self.log_probs[a].len(), n, "batch field misaligned");
            assert_eq!(self.values[a].len(), n, "batch field misaligned");
            assert_eq!(self.advantages[a].len(), n, "batch field misaligned");
            assert_eq!(self.returns[a].len(), n, "batch field misaligned");
        }
        assert_eq!(self.dones.len(), n, "batch field misaligned");
    }
}

/// Adam (or plain SGD) over one network's flattened parameters.
#[derive(Debug, Clone)]
pub struct OptState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    kind: OptimizerKind,
}

impl OptState {
    pub fn new(params: &MlpParams, kind: OptimizerKind) -> Self {
        OptState {
            m: vec![0.0; params.n_params()],
            v: vec![0.0; params.n_params()],
            t: 0,
            kind,
        }
    }

    pub fn step(&mut self, params: &mut MlpParams, grads: &mut MlpGrads, lr: f64) {
        let mut flat = Vec::with_capacity(self.m.len());
        grads.for_each_mut(|_, g| flat.push(*g));
        match self.kind {
            OptimizerKind::Sgd => {
                params.for_each_param_mut(|i, p| *p -= lr * flat[i]);
            }
            OptimizerKind::Adam => {
                self.t += 1;
                let (b1, b2, eps): (f64, f64, f64) = (0.9, 0.999, 1e-8);
                let bc1 = 1.0 - b1.powi(self.t as i32);
                let bc2 = 1.0 - b2.powi(self.t as i32);
                let (m, v) = (&mut self.m, &mut self.v);
                params.for_each_param_mut(|i, p| {
                    m[i] = b1 * m[i] + (1.0 - b1) * flat[i];
                    v[i] = b2 * v[i] + (1.0 - b2) * flat[i] * flat[i];
                    let mh = m[i] / bc1;
                    let vh = v[i] / bc2;
                    *p -= lr * mh / (vh.sqrt() + eps);
                });
            }
        }
        params.clamp_log_std();
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub approx_kl: f64,
    pub grad_norm: f64,
    /// A non-finite loss appeared; the update was rolled back entirely.
    pub aborted: bool,
}

/// All learnable state for the two-agent team.
#[derive(Debug, Clone)]
pub struct Policies {
    pub actors: [MlpParams; 2],
    pub critics: [MlpParams; 2],
}

pub struct Optimizers {
    pub actors: [OptState; 2],
    pub critics: [OptState; 2],
}

impl Optimizers {
    pub fn new(p: &Policies, kind: OptimizerKind) -> Self {
        Optimizers {
            actors: [
                OptState::new(&p.actors[0], kind),
                OptState::new(&p.actors[1], kind),
            ],
            critics: [
                OptState::new(&p.critics[0], kind),
                OptState::new(&p.critics[1], kind),
            ],
        }
    }
}

fn clip_grad_norm(grads: &mut MlpGrads, max_norm: f64) -> f64 {
    let norm = grads.global_norm();
    if norm > max_norm && norm > 0.0 {
        grads.scale(max_norm / norm);
    }
    norm
}

/// One MAPPO update over a full rollout batch: normalizes advantages, then
/// runs `epochs` passes of shuffled minibatches through the clipped
/// surrogate and clipped value losses for both agents.
///
/// A non-finite loss or gradient anywhere rolls the whole update back and
/// reports it in the stats rather than corrupting the parameters.
pub fn ppo_update<R: Rng>(
    batch: &mut TransitionBatch,
    policies: &mut Policies,
    opts: &mut Optimizers,
    hyper: &TrainerHyper,
    lr: f64,
    rng: &mut R,
) -> UpdateStats {
    batch.assert_aligned();
    let n = batch.len();
    assert!(n > 0, "empty batch");
    for a in 0..2 {
        normalize_advantages(&mut batch.advantages[a]);
    }
    let snapshot = policies.clone();

    let mut stats = UpdateStats::default();
    let mut loss_samples = 0usize;
    let mut kl_samples = 0usize;
    let mut grad_norm_acc = 0.0;
    let mut grad_norm_count = 0usize;

    let mut order: Vec<usize> = (0..n).collect();
    let mb_size = n.div_ceil(hyper.minibatches);
    'epochs: for _ in 0..hyper.epochs {
        // Fisher-Yates shuffle
        for i in (1..n).rev() {
            order.swap(i, rng.gen_range(0..=i));
        }
        for mb in order.chunks(mb_size) {
            let m = mb.len() as f64;
            for agent in 0..2 {
                let actor = &policies.actors[agent];
                let critic = &policies.critics[agent];
                let mut ga = MlpGrads::zeros_like(actor);
                let mut gc = MlpGrads::zeros_like(critic);
                let mut mb_policy_loss = 0.0;
                let mut mb_value_loss = 0.0;
                for &i in mb {
                    let cache = actor.forward_cached(&batch.obs[agent][i]);
                    let mean = &cache.output;
                    let log_std = actor.log_std.as_ref().expect("actor without log_std");
                    let action = &batch.actions[agent][i];
                    let logp_new = gaussian_log_prob(mean, log_std, action);
                    let logp_old = batch.log_probs[agent][i];
                    let adv = batch.advantages[agent][i];
                    let ratio = (logp_new - logp_old).exp();
                    let clipped = ratio.clamp(1.0 - hyper.ratio_clip, 1.0 + hyper.ratio_clip);
                    let surr = (ratio * adv).min(clipped * adv);
                    mb_policy_loss -= surr / m;
                    stats.approx_kl += logp_old - logp_new;
                    kl_samples += 1;

                    // dLoss/dlogp_new through the active branch of min()
                    let unclipped_active = ratio * adv <= clipped * adv;
                    let inside_clip = ratio > 1.0 - hyper.ratio_clip
                        && ratio < 1.0 + hyper.ratio_clip;
                    let dl_dlogp = if unclipped_active || inside_clip {
                        -adv * ratio / m
                    } else {
                        0.0
                    };
                    if dl_dlogp != 0.0 {
                        let mut grad_mean = vec![0.0; mean.len()];
                        for k in 0..mean.len() {
                            let inv_var = (-2.0 * log_std[k]).exp();
                            let diff = action[k] - mean[k];
                            grad_mean[k] = dl_dlogp * diff * inv_var;
                            let z2 = diff * diff * inv_var;
                            if let Some(gls) = &mut ga.log_std {
                                gls[k] += dl_dlogp * (z2 - 1.0);
                            }
                        }
                        actor.backward(&cache, &grad_mean, &mut ga);
                    }

                    // clipped value loss on the shared global state
                    let vcache = critic.forward_cached(&batch.global[i]);
                    let v = vcache.output[0];
                    let v_old = batch.values[agent][i];
                    let ret = batch.returns[agent][i];
                    let v_clip = v_old + (v - v_old).clamp(-hyper.value_clip, hyper.value_clip);
                    let l_raw = (v - ret).powi(2);
                    let l_clip = (v_clip - ret).powi(2);
                    mb_value_loss += l_raw.max(l_clip) / m;
                    let dv = if l_raw >= l_clip {
                        2.0 * (v - ret) / m
                    } else if (v - v_old).abs() < hyper.value_clip {
                        2.0 * (v_clip - ret) / m
                    } else {
                        0.0
                    };
                    critic.backward(&vcache, &[dv], &mut gc);
                }
                if !mb_policy_loss.is_finite()
                    || !mb_value_loss.is_finite()
                    || !ga.is_finite()
                    || !gc.is_finite()
                {
                    *policies = snapshot;
                    stats.aborted = true;
                    break 'epochs;
                }
                stats.policy_loss += mb_policy_loss;
                stats.value_loss += mb_value_loss;
                loss_samples += 1;
                grad_norm_acc += clip_grad_norm(&mut ga, hyper.grad_norm_clip);
                grad_norm_acc += clip_grad_norm(&mut gc, hyper.grad_norm_clip);
                grad_norm_count += 2;
                opts.actors[agent].step(&mut policies.actors[agent], &mut ga, lr);
                opts.critics[agent].step(&mut policies.critics[agent], &mut gc, lr);
            }
        }
    }
    if loss_samples > 0 {
        stats.policy_loss /= loss_samples as f64;
        stats.value_loss /= loss_samples as f64;
    }
    if kl_samples > 0 {
        stats.approx_kl /= kl_samples as f64;
    }
    if grad_norm_count > 0 {
        stats.grad_norm = grad_norm_acc / grad_norm_count as f64;
    }
    stats
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy_policies(rng: &mut ChaCha8Rng) -> Policies {
        Policies {
            actors: [
                MlpParams::new(&[3, 8, 2], true, rng),
                MlpParams::new(&[3, 8, 2], true, rng),
            ],
            critics: [
                MlpParams::new(&[5, 8, 1], false, rng),
                MlpParams::new(&[5, 8, 1], false, rng),
            ],
        }
    }

    fn toy_batch(policies: &Policies, rng: &mut ChaCha8Rng, n: usize) -> TransitionBatch {
        let mut b = TransitionBatch::default();
        for _ in 0..n {
            let obs: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0f64)).collect();
            let global: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0f64)).collect();
            for a in 0..2 {
                let (act, lp) =
                    super::super::nn::policy_sample(&policies.actors[a], &obs, rng);
                b.obs[a].push(obs.clone());
                b.actions[a].push(act);
                b.log_probs[a].push(lp);
                b.values[a].push(policies.critics[a].forward(&global)[0]);
                b.rewards[a].push(rng.gen_range(-1.0..1.0));
                b.advantages[a].push(rng.gen_range(-1.0..1.0));
                b.returns[a].push(rng.gen_range(-1.0..1.0));
            }
            b.global.push(global);
            b.dones.push(false);
        }
        b
    }

    #[test]
    fn adapt_lr_band_rule() {
        let h = TrainerHyper::default();
        assert_eq!(adapt_lr(0.016, 1e-3, &h), 1e-3);
        assert!((adapt_lr(0.05, 1e-3, &h) - 1e-3 / 1.5).abs() < 1e-15);
        assert!((adapt_lr(0.001, 1e-3, &h) - 1.5e-3).abs() < 1e-15);
        // cap at lr_max
        assert_eq!(adapt_lr(0.001, 9e-3, &h), h.lr_max);
        // floor at lr_min
        assert_eq!(adapt_lr(0.5, 1.2e-6, &h), h.lr_min);
    }

    #[test]
    fn ratio_is_one_before_any_step() {
        // with unchanged params the new log-prob equals the stored one
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let policies = toy_policies(&mut rng);
        let b = toy_batch(&policies, &mut rng, 8);
        for a in 0..2 {
            for i in 0..b.len() {
                let mean = policies.actors[a].forward(&b.obs[a][i]);
                let lp = gaussian_log_prob(
                    &mean,
                    policies.actors[a].log_std.as_ref().unwrap(),
                    &b.actions[a][i],
                );
                let ratio = (lp - b.log_probs[a][i]).exp();
                assert!((ratio - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn clip_bites_at_ratio_15() {
        // A > 0, ratio = 1.5 -> surrogate is 1.2 * A
        let (adv, ratio, clip) = (2.0, 1.5f64, 0.2);
        let clipped = ratio.clamp(1.0 - clip, 1.0 + clip);
        let surr = (ratio * adv).min(clipped * adv);
        assert_eq!(surr, 1.2 * adv);
    }

    #[test]
    fn update_moves_params_and_reports_finite_stats() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut policies = toy_policies(&mut rng);
        let mut b = toy_batch(&policies, &mut rng, 32);
        let hyper = TrainerHyper::default();
        let mut opts = Optimizers::new(&policies, hyper.optimizer);
        let before = policies.actors[0].flatten();
        let stats = ppo_update(&mut b, &mut policies, &mut opts, &hyper, 1e-3, &mut rng);
        assert!(!stats.aborted);
        assert!(stats.policy_loss.is_finite());
        assert!(stats.value_loss.is_finite());
        assert!(policies.actors[0].flatten() != before);
        // log_std clamp holds after update
        for a in &policies.actors {
            for &ls in a.log_std.as_ref().unwrap() {
                assert!((super::super::nn::LOG_STD_MIN..=super::super::nn::LOG_STD_MAX)
                    .contains(&ls));
            }
        }
    }

    #[test]
    fn non_finite_batch_rolls_back() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut policies = toy_policies(&mut rng);
        let mut b = toy_batch(&policies, &mut rng, 8);
        b.log_probs[0][3] = f64::NAN;
        let hyper = TrainerHyper::default();
        let mut opts = Optimizers::new(&policies, hyper.optimizer);
        let before = policies.clone();
        let stats = ppo_update(&mut b, &mut policies, &mut opts, &hyper, 1e-3, &mut rng);
        assert!(stats.aborted);
        assert_eq!(policies.actors[0].flatten(), before.actors[0].flatten());
        assert_eq!(policies.critics[1].flatten(), before.critics[1].flatten());
    }

    #[test]
    fn unclipped_single_epoch_matches_vanilla_policy_gradient() {
        // With infinite clips, one epoch and one minibatch, the SGD update
        // direction equals the plain policy-gradient direction.
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut policies = toy_policies(&mut rng);
        let mut b = toy_batch(&policies, &mut rng, 16);
        let mut hyper = TrainerHyper::default();
        hyper.ratio_clip = f64::INFINITY;
        hyper.value_clip = f64::INFINITY;
        hyper.epochs = 1;
        hyper.minibatches = 1;
        hyper.grad_norm_clip = f64::INFINITY;
        hyper.optimizer = OptimizerKind::Sgd;
        let mut opts = Optimizers::new(&policies, hyper.optimizer);

        // vanilla policy gradient of -mean(logp * A) on the same batch
        // (advantages as normalized inside the update)
        let mut adv = b.advantages[0].clone();
        normalize_advantages(&mut adv);
        let actor = policies.actors[0].clone();
        let mut vanilla = MlpGrads::zeros_like(&actor);
        let m = b.len() as f64;
        for i in 0..b.len() {
            let cache = actor.forward_cached(&b.obs[0][i]);
            let log_std = actor.log_std.as_ref().unwrap();
            let mut grad_mean = vec![0.0; 2];
            for k in 0..2 {
                let inv_var = (-2.0 * log_std[k]).exp();
                let diff = b.actions[0][i][k] - cache.output[k];
                grad_mean[k] = -adv[i] / m * diff * inv_var;
                if let Some(g) = &mut vanilla.log_std {
                    g[k] += -adv[i] / m * (diff * diff * inv_var - 1.0);
                }
            }
            actor.backward(&cache, &grad_mean, &mut vanilla);
        }
        let mut flat_vanilla = Vec::new();
        vanilla.for_each_mut(|_, g| flat_vanilla.push(*g));

        let before = policies.actors[0].flatten();
        let lr = 1e-4;
        ppo_update(&mut b, &mut policies, &mut opts, &hyper, lr, &mut rng);
        let after = policies.actors[0].flatten();
        let delta: Vec<f64> = after.iter().zip(&before).map(|(a, b)| a - b).collect();
        // delta should be -lr * vanilla gradient: cosine similarity 1
        let dot: f64 = delta
            .iter()
            .zip(&flat_vanilla)
            .map(|(d, g)| d * (-lr * g))
            .sum();
        let na: f64 = delta.iter().map(|d| d * d).sum::<f64>().sqrt();
        let nb: f64 = flat_vanilla
            .iter()
            .map(|g| (lr * g) * (lr * g))
            .sum::<f64>()
            .sqrt();
        let cos = dot / (na * nb);
        assert!((cos - 1.0).abs() < 1e-10, "cosine {cos}");
    }

    #[test]
    #[should_panic(expected = "does not match first layer")]
    fn critic_rejects_single_agent_observation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        // critic built for the 30-wide global state
        let critic = MlpParams::new(&[30, 16, 1], false, &mut rng);
        let obs14 = vec![0.0; 14];
        critic.forward(&obs14);
    }
}
