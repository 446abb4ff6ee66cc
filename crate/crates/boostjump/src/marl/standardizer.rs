//! Streaming observation standardization (Welford moments).

/// Running per-dimension mean/variance, updated one vector at a time.
/// Standardized outputs are clipped to ±10.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningStandardizer {
    pub count: u64,
    pub mean: Vec<f64>,
    m2: Vec<f64>,
}

pub const STANDARDIZE_CLIP: f64 = 10.0;

impl RunningStandardizer {
    pub fn new(dim: usize) -> Self {
        RunningStandardizer {
            count: 0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn update(&mut self, x: &[f64]) {
        assert_eq!(x.len(), self.mean.len());
        self.count += 1;
        let n = self.count as f64;
        for i in 0..x.len() {
            let d = x[i] - self.mean[i];
            self.mean[i] += d / n;
            self.m2[i] += d * (x[i] - self.mean[i]);
        }
    }

    /// Population variance of everything seen so far.
    pub fn variance(&self) -> Vec<f64> {
        if self.count == 0 {
            return vec![1.0; self.mean.len()];
        }
        self.m2.iter().map(|&m| m / self.count as f64).collect()
    }

    pub fn standardize(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.mean.len());
        if self.count < 2 {
            return x.to_vec();
        }
        let var = self.variance();
        x.iter()
            .zip(&self.mean)
            .zip(&var)
            .map(|((&v, &m), &s2)| {
                ((v - m) / s2.sqrt().max(1e-8)).clamp(-STANDARDIZE_CLIP, STANDARDIZE_CLIP)
            })
            .collect()
    }

    /// Serialize as (count, mean..., m2...) for checkpointing.
    pub fn to_raw(&self) -> (u64, Vec<f64>, Vec<f64>) {
        (self.count, self.mean.clone(), self.m2.clone())
    }

    pub fn from_raw(count: u64, mean: Vec<f64>, m2: Vec<f64>) -> Self {
        assert_eq!(mean.len(), m2.len());
        RunningStandardizer { count, mean, m2 }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn matches_two_pass_batch_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let dim = 4;
        let n = 100_000;
        let data: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..dim).map(|_| rng.gen_range(-5.0..5.0)).collect())
            .collect();
        let mut s = RunningStandardizer::new(dim);
        for x in &data {
            s.update(x);
        }
        for d in 0..dim {
            let mean: f64 = data.iter().map(|x| x[d]).sum::<f64>() / n as f64;
            let var: f64 =
                data.iter().map(|x| (x[d] - mean).powi(2)).sum::<f64>() / n as f64;
            assert!((s.mean[d] - mean).abs() < 1e-9, "mean diverged");
            assert!((s.variance()[d] - var).abs() < 1e-9, "variance diverged");
        }
    }

    #[test]
    fn standardized_output_is_zero_mean_unit_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut s = RunningStandardizer::new(1);
        let data: Vec<f64> = (0..50_000).map(|_| 3.0 + 2.0 * rng.gen::<f64>()).collect();
        for &x in &data {
            s.update(&[x]);
        }
        let z: Vec<f64> = data.iter().map(|&x| s.standardize(&[x])[0]).collect();
        let m = z.iter().sum::<f64>() / z.len() as f64;
        let v = z.iter().map(|x| (x - m).powi(2)).sum::<f64>() / z.len() as f64;
        assert!(m.abs() < 1e-2);
        assert!((v - 1.0).abs() < 1e-2);
    }

    #[test]
    fn outputs_are_clipped() {
        let mut s = RunningStandardizer::new(1);
        for _ in 0..100 {
            s.update(&[0.0]);
            s.update(&[0.001]);
        }
        let z = s.standardize(&[1e9]);
        assert_eq!(z[0], STANDARDIZE_CLIP);
    }

    #[test]
    fn raw_round_trip() {
        let mut s = RunningStandardizer::new(2);
        s.update(&[1.0, -1.0]);
        s.update(&[2.0, 0.5]);
        let (c, m, m2) = s.to_raw();
        assert_eq!(RunningStandardizer::from_raw(c, m, m2), s);
    }
}
