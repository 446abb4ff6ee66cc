//! Generalized advantage estimation over one environment's trajectory.

/// Compute GAE advantages and returns for a single time-ordered sequence.
/// `dones[t]` marks that the episode ended at step t: neither the value
/// bootstrap nor the advantage recursion crosses it.
///
/// Panics on mismatched sequence lengths.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap_value: f64,
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(rewards.len(), values.len(), "length mismatch");
    assert_eq!(rewards.len(), dones.len(), "length mismatch");
    let n = rewards.len();
    let mut advantages = vec![0.0; n];
    let mut acc = 0.0;
    for t in (0..n).rev() {
        let not_done = if dones[t] { 0.0 } else { 1.0 };
        let next_value = if t + 1 < n { values[t + 1] } else { bootstrap_value };
        let delta = rewards[t] + gamma * next_value * not_done - values[t];
        acc = delta + gamma * lambda * not_done * acc;
        advantages[t] = acc;
    }
    let returns = advantages
        .iter()
        .zip(values)
        .map(|(a, v)| a + v)
        .collect();
    (advantages, returns)
}

/// In-place normalization to zero mean / unit standard deviation, applied
/// to the whole batch of advantages before the surrogate loss.
pub fn normalize_advantages(adv: &mut [f64]) {
    if adv.is_empty() {
        return;
    }
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt().max(1e-8);
    for a in adv.iter_mut() {
        *a = (*a - mean) / std;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Brute-force recursive oracle: A_t defined directly by the recursion,
    /// recomputed from scratch at every t.
    fn oracle(
        rewards: &[f64],
        values: &[f64],
        dones: &[bool],
        bootstrap: f64,
        gamma: f64,
        lambda: f64,
        t: usize,
    ) -> f64 {
        let next_value = if t + 1 < values.len() {
            values[t + 1]
        } else {
            bootstrap
        };
        let nd = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * nd - values[t];
        if t + 1 < rewards.len() {
            delta
                + gamma
                    * lambda
                    * nd
                    * oracle(rewards, values, dones, bootstrap, gamma, lambda, t + 1)
        } else {
            delta
        }
    }

    #[test]
    fn zeros_give_zero_advantages() {
        let (a, r) = compute_gae(&[0.0; 5], &[0.0; 5], &[false; 5], 0.0, 0.99, 0.95);
        assert_eq!(a, vec![0.0; 5]);
        assert_eq!(r, vec![0.0; 5]);
    }

    #[test]
    fn single_step_hand_value() {
        let (a, r) = compute_gae(&[1.0], &[0.0], &[true], 0.0, 0.99, 0.95);
        assert_eq!(a, vec![1.0]);
        assert_eq!(r, vec![1.0]);
    }

    #[test]
    fn matches_brute_force_oracle_on_random_sequences() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..1000 {
            let n = rng.gen_range(1..=10);
            let rewards: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let values: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let dones: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.3)).collect();
            let bootstrap = rng.gen_range(-2.0..2.0);
            let (a, r) = compute_gae(&rewards, &values, &dones, bootstrap, 0.99, 0.95);
            for t in 0..n {
                let want = oracle(&rewards, &values, &dones, bootstrap, 0.99, 0.95, t);
                assert!((a[t] - want).abs() < 1e-10, "t={t}: {} vs {want}", a[t]);
                assert!((r[t] - (want + values[t])).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn lambda_one_recovers_monte_carlo_returns() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let n = 10;
            let rewards: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let values: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let bootstrap = rng.gen_range(-1.0..1.0);
            let gamma = 0.99;
            let (_, returns) =
                compute_gae(&rewards, &values, &[false; 10], bootstrap, gamma, 1.0);
            for t in 0..n {
                let mut mc = 0.0;
                for (k, &r) in rewards[t..].iter().enumerate() {
                    mc += gamma.powi(k as i32) * r;
                }
                mc += gamma.powi((n - t) as i32) * bootstrap;
                assert!((returns[t] - mc).abs() < 1e-10);
            }
        }
    }

    #[test]
    #[should_panic(expected = "length mismatch")]
    fn mismatched_lengths_fault() {
        compute_gae(&[1.0, 2.0], &[0.0], &[false], 0.0, 0.99, 0.95);
    }

    #[test]
    fn normalization_centers_and_scales() {
        let mut a = vec![1.0, 2.0, 3.0, 4.0];
        normalize_advantages(&mut a);
        let m: f64 = a.iter().sum::<f64>() / 4.0;
        let v: f64 = a.iter().map(|x| (x - m).powi(2)).sum::<f64>() / 4.0;
        assert!(m.abs() < 1e-12);
        assert!((v - 1.0).abs() < 1e-12);
    }
}
