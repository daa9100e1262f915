use rand::Rng;

use super::DurationParams;
use crate::error::{AcedError, Result};

/// Duration distribution over `1..=max_duration` days.
///
/// Entry `d - 1` is proportional to `exp(log PoissonPMF(d | lambda) / nu)`.
/// The softmax runs in log space so that tiny temperatures stay finite.
pub fn duration_pmf(dp: DurationParams, max_duration: u32) -> Result<Vec<f64>> {
    if !(dp.lambda.is_finite() && dp.lambda > 0.0) {
        return Err(AcedError::Domain(format!("lambda must be positive and finite, got {}", dp.lambda)));
    }
    if !(dp.nu.is_finite() && dp.nu > 0.0) {
        return Err(AcedError::Domain(format!("nu must be positive and finite, got {}", dp.nu)));
    }
    if max_duration < 1 {
        return Err(AcedError::Domain("duration cap must be at least 1".into()));
    }

    let ln_lambda = dp.lambda.ln();
    let mut ln_factorial = 0.0;
    let mut logits = Vec::with_capacity(max_duration as usize);
    for d in 1..=max_duration {
        let d = d as f64;
        ln_factorial += d.ln();
        let log_pmf = d * ln_lambda - dp.lambda - ln_factorial;
        logits.push(log_pmf / dp.nu);
    }

    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut pmf: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let total: f64 = pmf.iter().sum();
    for p in &mut pmf {
        *p /= total;
    }
    Ok(pmf)
}

/// Inverse-CDF sampler over durations `1..=pmf.len()`.
#[derive(Debug, Clone)]
pub struct DurationSampler {
    cdf: Vec<f64>,
}

impl DurationSampler {
    pub fn new(pmf: &[f64]) -> Result<Self> {
        if pmf.is_empty() {
            return Err(AcedError::Input("empty duration pmf".into()));
        }
        let mut acc = 0.0;
        let mut cdf = Vec::with_capacity(pmf.len());
        for &p in pmf {
            if !(p.is_finite() && p >= 0.0) {
                return Err(AcedError::Input(format!("invalid pmf entry {p}")));
            }
            acc += p;
            cdf.push(acc);
        }
        if acc <= 0.0 {
            return Err(AcedError::Input("duration pmf has no mass".into()));
        }
        Ok(Self { cdf })
    }

    pub fn from_params(dp: DurationParams, max_duration: u32) -> Result<Self> {
        Self::new(&duration_pmf(dp, max_duration)?)
    }

    pub fn max_duration(&self) -> u32 {
        self.cdf.len() as u32
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        let total = *self.cdf.last().expect("non-empty");
        let u = rng.random::<f64>() * total;
        // Zero-mass entries share the previous cdf value, so the strict
        // comparison never selects them.
        let idx = self.cdf.partition_point(|&c| c <= u);
        (idx.min(self.cdf.len() - 1) + 1) as u32
    }
}

/// Draws one duration in `1..=pmf.len()` with probability `pmf[d - 1]`.
pub fn sample_duration<R: Rng + ?Sized>(pmf: &[f64], rng: &mut R) -> Result<u32> {
    Ok(DurationSampler::new(pmf)?.sample(rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn unit_lambda_matches_truncated_poisson() {
        // e^{-1} * {1, 1/2, 1/6}, normalised.
        let raw = [1.0, 0.5, 1.0 / 6.0];
        let z: f64 = raw.iter().sum();
        let oracle: Vec<f64> = raw.iter().map(|r| r / z).collect();
        let pmf = duration_pmf(DurationParams::new(1.0, 1.0), 3).unwrap();
        for (a, b) in pmf.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-12, "{pmf:?} vs {oracle:?}");
        }
        for (a, b) in pmf.iter().zip([0.6, 0.3, 0.1]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn hot_limit_is_uniform() {
        let pmf = duration_pmf(DurationParams::new(5.0, 1e6), 22).unwrap();
        for p in pmf {
            assert!((p - 1.0 / 22.0).abs() < 1e-4);
        }
    }

    #[test]
    fn cold_limit_peaks_at_mode() {
        let pmf = duration_pmf(DurationParams::new(8.5, 1e-6), 22).unwrap();
        assert!(pmf[7] >= 1.0 - 1e-6);
    }

    #[test]
    fn integer_lambda_ties_adjacent_modes() {
        // Poisson(8) has equal mass at 7 and 8, so the cold limit splits
        // between them.
        let pmf = duration_pmf(DurationParams::new(8.0, 1e-6), 22).unwrap();
        assert!(pmf[6] + pmf[7] >= 1.0 - 1e-6);
        assert!(pmf[6] > 0.1 && pmf[7] > 0.1);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(duration_pmf(DurationParams::new(0.0, 1.0), 22).is_err());
        assert!(duration_pmf(DurationParams::new(3.0, -1.0), 22).is_err());
        assert!(duration_pmf(DurationParams::new(f64::NAN, 1.0), 22).is_err());
        assert!(duration_pmf(DurationParams::new(3.0, f64::INFINITY), 22).is_err());
    }

    #[test]
    fn degenerate_pmfs() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            assert_eq!(sample_duration(&[1.0, 0.0, 0.0], &mut rng).unwrap(), 1);
            assert_eq!(sample_duration(&[0.0, 0.0, 1.0], &mut rng).unwrap(), 3);
        }
    }

    #[test]
    fn empirical_frequencies_within_binomial_bounds() {
        let pmf = [0.6, 0.3, 0.1];
        let sampler = DurationSampler::new(&pmf).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 1_000_000;
        let mut counts = [0usize; 3];
        for _ in 0..n {
            counts[sampler.sample(&mut rng) as usize - 1] += 1;
        }
        for (c, p) in counts.iter().zip(pmf) {
            let sd = (n as f64 * p * (1.0 - p)).sqrt();
            assert!((*c as f64 - n as f64 * p).abs() < 3.0 * sd, "{counts:?}");
        }
    }

    proptest! {
        #[test]
        fn pmf_normalised_and_unimodal(lambda in 0.05f64..44.0, log_nu in -3.0f64..3.0, cap in 1u32..60) {
            let pmf = duration_pmf(DurationParams::new(lambda, 10f64.powf(log_nu)), cap).unwrap();
            let total: f64 = pmf.iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
            let argmax = pmf
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            let tol = 1e-15;
            for w in pmf[..=argmax].windows(2) {
                prop_assert!(w[1] >= w[0] - tol);
            }
            for w in pmf[argmax..].windows(2) {
                prop_assert!(w[1] <= w[0] + tol);
            }
        }
    }
}
