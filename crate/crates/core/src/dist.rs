//! Small set of densities and samplers used by the priors and proposals.

use std::f64::consts::{PI, SQRT_2};

use rand::Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use statrs::function::beta::ln_beta;
use statrs::function::erf::{erf_inv, erfc};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

pub fn normal_ln_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    -0.5 * z * z - sd.ln() - LN_SQRT_2PI
}

/// Standard normal cdf via `erfc`, accurate in both tails.
pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / SQRT_2)
}

pub fn std_normal_quantile(p: f64) -> f64 {
    SQRT_2 * erf_inv(2.0 * p - 1.0)
}

/// Beta log density on the open unit interval; `-inf` outside.
pub fn beta_ln_pdf(x: f64, a: f64, b: f64) -> f64 {
    if !(x > 0.0 && x < 1.0) {
        return f64::NEG_INFINITY;
    }
    (a - 1.0) * x.ln() + (b - 1.0) * (-x).ln_1p() - ln_beta(a, b)
}

pub fn sample_beta<R: Rng + ?Sized>(rng: &mut R, a: f64, b: f64) -> f64 {
    Beta::new(a, b).expect("positive shape parameters").sample(rng)
}

pub fn sample_std_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Normal distribution restricted to `[lower, upper]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncatedNormal {
    pub mean: f64,
    pub sd: f64,
    pub lower: f64,
    pub upper: f64,
}

impl TruncatedNormal {
    pub fn new(mean: f64, sd: f64, lower: f64, upper: f64) -> Self {
        debug_assert!(sd > 0.0 && lower < upper);
        Self {
            mean,
            sd,
            lower,
            upper,
        }
    }

    fn alpha(&self) -> f64 {
        (self.lower - self.mean) / self.sd
    }

    fn beta(&self) -> f64 {
        (self.upper - self.mean) / self.sd
    }

    /// Probability mass of the untruncated normal inside the bounds.
    pub fn mass(&self) -> f64 {
        let (a, b) = (self.alpha(), self.beta());
        // Use the tail on the side where the difference is best conditioned.
        if a > 0.0 {
            std_normal_cdf(-a) - std_normal_cdf(-b)
        } else {
            std_normal_cdf(b) - std_normal_cdf(a)
        }
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        if !(x >= self.lower && x <= self.upper) {
            return f64::NEG_INFINITY;
        }
        normal_ln_pdf(x, self.mean, self.sd) - self.mass().ln()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= self.lower {
            return 0.0;
        }
        if x >= self.upper {
            return 1.0;
        }
        let z = (x - self.mean) / self.sd;
        ((std_normal_cdf(z) - std_normal_cdf(self.alpha())) / self.mass()).clamp(0.0, 1.0)
    }

    pub fn moments(&self) -> (f64, f64) {
        let (a, b) = (self.alpha(), self.beta());
        let phi = |z: f64| (-0.5 * z * z).exp() / (2.0 * PI).sqrt();
        let z = self.mass();
        let ratio = (phi(a) - phi(b)) / z;
        let mean = self.mean + self.sd * ratio;
        let var = self.sd * self.sd * (1.0 + (a * phi(a) - b * phi(b)) / z - ratio * ratio);
        (mean, var)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.mass() > 0.05 {
            loop {
                let x = self.mean + self.sd * sample_std_normal(rng);
                if x >= self.lower && x <= self.upper {
                    return x;
                }
            }
        }
        let lo = std_normal_cdf(self.alpha());
        let hi = std_normal_cdf(self.beta());
        let u = lo + (hi - lo) * rng.random::<f64>();
        let x = self.mean + self.sd * std_normal_quantile(u);
        x.clamp(self.lower, self.upper)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn normal_cdf_reference_values() {
        assert!((std_normal_cdf(0.0) - 0.5).abs() < 1e-15);
        assert!((std_normal_cdf(1.959_963_984_540_054) - 0.975).abs() < 1e-9, "{}", std_normal_cdf(1.959_963_984_540_054) - 0.975);
        assert!((std_normal_quantile(0.975) - 1.959_963_984_540_054).abs() < 1e-9);
    }

    #[test]
    fn beta_density_matches_closed_form() {
        // Beta(2, 3) pdf = 12 x (1-x)^2.
        let x: f64 = 0.3;
        let expected = (12.0 * x * (1.0 - x).powi(2)).ln();
        assert!((beta_ln_pdf(x, 2.0, 3.0) - expected).abs() < 1e-12);
        assert_eq!(beta_ln_pdf(0.0, 2.0, 3.0), f64::NEG_INFINITY);
    }

    #[test]
    fn truncated_normal_integrates_to_one() {
        let tn = TruncatedNormal::new(1.2, 0.5, 1.0, 22.0);
        let n = 200_000;
        let h = (tn.upper - tn.lower) / n as f64;
        let integral: f64 = (0..n)
            .map(|i| tn.ln_pdf(tn.lower + (i as f64 + 0.5) * h).exp() * h)
            .sum();
        assert!((integral - 1.0).abs() < 1e-6);
    }

    #[test]
    fn truncated_normal_samples_in_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for tn in [
            TruncatedNormal::new(1.0, 0.5, 1.0, 22.0),
            TruncatedNormal::new(-10.0, 1.0, 0.0, 22.0),
        ] {
            for _ in 0..10_000 {
                let x = tn.sample(&mut rng);
                assert!(x >= tn.lower && x <= tn.upper);
            }
        }
    }
}
