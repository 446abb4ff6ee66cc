//! Minimal dense MLP with hand-written reverse-mode differentiation.
//!
//! Networks are small and their graph is fixed (affine layers with ELU
//! hidden activations and a linear head), so the backward pass is spelled
//! out directly instead of pulling in an autodiff framework. Actor networks
//! carry an extra per-dimension `log_std` head for the diagonal Gaussian.

use rand::Rng;

/// Dense MLP parameters. `sizes` lists layer widths from input to output;
/// weights are row-major `[out x in]` per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub sizes: Vec<usize>,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    /// Per-output-dimension log standard deviation (actors only).
    pub log_std: Option<Vec<f64>>,
}

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;

fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp() - 1.0
    }
}

fn elu_grad(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        x.exp()
    }
}

impl MlpParams {
    /// He-style uniform initialization scaled by 1/sqrt(fan_in).
    pub fn new<R: Rng>(sizes: &[usize], with_log_std: bool, rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "need at least input and output layers");
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (1.0 / fan_in as f64).sqrt();
            weights.push(
                (0..fan_in * fan_out)
                    .map(|_| rng.gen_range(-bound..bound))
                    .collect(),
            );
            biases.push(vec![0.0; fan_out]);
        }
        MlpParams {
            sizes: sizes.to_vec(),
            weights,
            biases,
            log_std: with_log_std.then(|| vec![0.0; *sizes.last().unwrap()]),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn n_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn n_params(&self) -> usize {
        let wb: usize = self
            .weights
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| w.len() + b.len())
            .sum();
        wb + self.log_std.as_ref().map_or(0, |l| l.len())
    }

    /// Apply a closure to every scalar parameter, in a fixed order.
    pub fn for_each_param_mut(&mut self, mut f: impl FnMut(usize, &mut f64)) {
        let mut i = 0;
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            for p in w.iter_mut().chain(b.iter_mut()) {
                f(i, p);
                i += 1;
            }
        }
        if let Some(ls) = &mut self.log_std {
            for p in ls.iter_mut() {
                f(i, p);
                i += 1;
            }
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
        if let Some(ls) = &self.log_std {
            out.extend_from_slice(ls);
        }
        out
    }

    pub fn clamp_log_std(&mut self) {
        if let Some(ls) = &mut self.log_std {
            for v in ls.iter_mut() {
                *v = v.clamp(LOG_STD_MIN, LOG_STD_MAX);
            }
        }
    }

    /// Plain forward pass. Panics on an input-dimension mismatch.
    pub fn forward(&self, input: &[f64]) -> Vec<f64> {
        self.forward_cached(input).output
    }

    /// Forward pass that keeps every layer's pre-activation and activation
    /// for the backward pass.
    pub fn forward_cached(&self, input: &[f64]) -> ForwardCache {
        assert_eq!(
            input.len(),
            self.input_dim(),
            "input dimension {} does not match first layer {}",
            input.len(),
            self.input_dim()
        );
        let n = self.n_layers();
        let mut activations = Vec::with_capacity(n + 1);
        let mut pre = Vec::with_capacity(n);
        activations.push(input.to_vec());
        for l in 0..n {
            let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
            let a = &activations[l];
            let mut z = self.biases[l].clone();
            for o in 0..fan_out {
                let row = &self.weights[l][o * fan_in..(o + 1) * fan_in];
                z[o] += row.iter().zip(a).map(|(w, x)| w * x).sum::<f64>();
            }
            let act = if l + 1 == n {
                z.clone() // linear head
            } else {
                z.iter().map(|&v| elu(v)).collect()
            };
            pre.push(z);
            activations.push(act);
        }
        ForwardCache {
            output: activations.last().unwrap().clone(),
            activations,
            pre,
        }
    }

    /// Reverse-mode pass: given dLoss/dOutput, accumulate parameter
    /// gradients into `grads` and return dLoss/dInput.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        grad_output: &[f64],
        grads: &mut MlpGrads,
    ) -> Vec<f64> {
        assert_eq!(grad_output.len(), self.output_dim());
        let n = self.n_layers();
        let mut delta = grad_output.to_vec();
        for l in (0..n).rev() {
            let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
            if l + 1 != n {
                for (d, &z) in delta.iter_mut().zip(&cache.pre[l]) {
                    *d *= elu_grad(z);
                }
            }
            let a = &cache.activations[l];
            for o in 0..fan_out {
                grads.biases[l][o] += delta[o];
                let row = &mut grads.weights[l][o * fan_in..(o + 1) * fan_in];
                for (g, &x) in row.iter_mut().zip(a) {
                    *g += delta[o] * x;
                }
            }
            let mut prev = vec![0.0; fan_in];
            for o in 0..fan_out {
                let row = &self.weights[l][o * fan_in..(o + 1) * fan_in];
                for (p, &w) in prev.iter_mut().zip(row) {
                    *p += delta[o] * w;
                }
            }
            delta = prev;
        }
        delta
    }
}

#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub output: Vec<f64>,
    activations: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
}

/// Gradient accumulator with the same shapes as [`MlpParams`].
#[derive(Debug, Clone)]
pub struct MlpGrads {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    pub log_std: Option<Vec<f64>>,
}

impl MlpGrads {
    pub fn zeros_like(p: &MlpParams) -> Self {
        MlpGrads {
            weights: p.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: p.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
            log_std: p.log_std.as_ref().map(|l| vec![0.0; l.len()]),
        }
    }

    pub fn for_each_mut(&mut self, mut f: impl FnMut(usize, &mut f64)) {
        let mut i = 0;
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            for p in w.iter_mut().chain(b.iter_mut()) {
                f(i, p);
                i += 1;
            }
        }
        if let Some(ls) = &mut self.log_std {
            for p in ls.iter_mut() {
                f(i, p);
                i += 1;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.for_each_mut(|_, g| *g *= s);
    }

    pub fn global_norm(&mut self) -> f64 {
        let mut sq = 0.0;
        self.for_each_mut(|_, g| sq += *g * *g);
        sq.sqrt()
    }

    pub fn is_finite(&mut self) -> bool {
        let mut ok = true;
        self.for_each_mut(|_, g| ok &= g.is_finite());
        ok
    }
}

/// Exact diagonal-Gaussian log density of `action` under (mean, log_std).
pub fn gaussian_log_prob(mean: &[f64], log_std: &[f64], action: &[f64]) -> f64 {
    assert_eq!(mean.len(), log_std.len());
    assert_eq!(mean.len(), action.len());
    let ln_2pi = (2.0 * std::f64::consts::PI).ln();
    mean.iter()
        .zip(log_std)
        .zip(action)
        .map(|((&m, &ls), &a)| {
            let inv_std = (-ls).exp();
            let z = (a - m) * inv_std;
            -0.5 * z * z - ls - 0.5 * ln_2pi
        })
        .sum()
}

/// Sample an action from the actor's diagonal Gaussian, returning the exact
/// log density of the sample.
pub fn policy_sample<R: Rng>(
    actor: &MlpParams,
    obs: &[f64],
    rng: &mut R,
) -> (Vec<f64>, f64) {
    let mean = actor.forward(obs);
    let log_std = actor.log_std.as_ref().expect("actor without log_std head");
    let action: Vec<f64> = mean
        .iter()
        .zip(log_std)
        .map(|(&m, &ls)| {
            // Box-Muller from two uniform draws
            let u1: f64 = rng.gen::<f64>().max(1e-300);
            let u2: f64 = rng.gen();
            let n = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
            m + ls.exp() * n
        })
        .collect();
    let lp = gaussian_log_prob(&mean, log_std, &action);
    (action, lp)
}

/// Deterministic evaluation-mode action: the Gaussian mean.
pub fn policy_mean(actor: &MlpParams, obs: &[f64]) -> Vec<f64> {
    actor.forward(obs)
}
