//! What-if transforms of the admissions stream and of recovery durations.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{AcedError, Result};
use crate::model::{AdmissionsHook, DurationHook, Health, Stage};

/// Returns `ceil(x)` with probability `frac(x)` and `floor(x)` otherwise, so
/// the expectation is exactly `x`.
pub fn stochastic_round<R: Rng + ?Sized>(x: f64, rng: &mut R) -> u64 {
    debug_assert!(x >= 0.0 && x.is_finite());
    let base = x.floor();
    let frac = x - base;
    if frac > 0.0 && rng.random::<f64>() < frac {
        base as u64 + 1
    } else {
        base as u64
    }
}

/// Reduction in admissions ramping linearly from 0 at `start_day` to
/// `final_reduction` after `ramp_days` days.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdmissionsSchedule {
    pub start_day: i64,
    pub ramp_days: u32,
    pub final_reduction: f64,
}

impl AdmissionsSchedule {
    pub fn new(start_day: i64, ramp_days: u32, final_reduction: f64) -> Result<Self> {
        let s = Self {
            start_day,
            ramp_days,
            final_reduction,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.final_reduction) {
            return Err(AcedError::config(
                "whatif.admissions.final_reduction",
                format!("must lie in [0, 1], got {}", self.final_reduction),
            ));
        }
        Ok(())
    }

    /// Fraction of admissions removed on `day`.
    pub fn reduction(&self, day: i64) -> f64 {
        if day < self.start_day {
            return 0.0;
        }
        if self.ramp_days == 0 {
            return self.final_reduction;
        }
        let progress = ((day - self.start_day) as f64 / self.ramp_days as f64).min(1.0);
        self.final_reduction * progress
    }
}

/// Applies the schedule to admissions on days `1..=admissions.len()`.
pub fn apply_admissions_schedule<R: Rng + ?Sized>(admissions: &[i64], sched: &AdmissionsSchedule, rng: &mut R) -> Vec<i64> {
    admissions
        .iter()
        .enumerate()
        .map(|(i, &a)| {
            let keep = 1.0 - sched.reduction(i as i64 + 1);
            stochastic_round(a.max(0) as f64 * keep, rng) as i64
        })
        .collect()
}

impl AdmissionsHook for AdmissionsSchedule {
    fn apply(&self, admissions: &[i64], mut rng: &mut dyn RngCore) -> Vec<i64> {
        apply_admissions_schedule(admissions, self, &mut rng)
    }
}

/// Shortens every recovering segment by `reduction_fraction`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecoveryDurationPolicy {
    #[serde(default = "default_recovery_reduction")]
    pub reduction_fraction: f64,
    #[serde(default = "one")]
    pub min_days: u32,
}

fn default_recovery_reduction() -> f64 {
    0.25
}

fn one() -> u32 {
    1
}

impl Default for RecoveryDurationPolicy {
    fn default() -> Self {
        Self {
            reduction_fraction: default_recovery_reduction(),
            min_days: 1,
        }
    }
}

impl RecoveryDurationPolicy {
    pub fn new(reduction_fraction: f64) -> Result<Self> {
        let p = Self {
            reduction_fraction,
            min_days: 1,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.reduction_fraction) {
            return Err(AcedError::config(
                "whatif.recovery.reduction_fraction",
                format!("must lie in [0, 1), got {}", self.reduction_fraction),
            ));
        }
        if self.min_days < 1 {
            return Err(AcedError::config("whatif.recovery.min_days", "must be at least 1"));
        }
        Ok(())
    }

    pub fn adjust_with<R: Rng + ?Sized>(&self, health: Health, days: u32, rng: &mut R) -> u32 {
        match health {
            Health::Declining => days,
            Health::Recovering => {
                let scaled = stochastic_round(days as f64 * (1.0 - self.reduction_fraction), rng) as u32;
                scaled.max(self.min_days).min(days.max(self.min_days))
            }
        }
    }
}

impl DurationHook for RecoveryDurationPolicy {
    fn adjust(&self, _: Stage, health: Health, days: u32, mut rng: &mut dyn RngCore) -> u32 {
        self.adjust_with(health, days, &mut rng)
    }
}

/// Duration transform for [`crate::model::sample_trajectory`] and the census
/// simulator.
pub fn recovery_duration_hook(policy: RecoveryDurationPolicy) -> Result<RecoveryDurationPolicy> {
    policy.validate()?;
    Ok(policy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(17)
    }

    #[test]
    fn rounding_worked_example() {
        let mut r = rng();
        let n = 200_000;
        let tens = (0..n).filter(|_| stochastic_round(9.75, &mut r) == 10).count();
        let p = tens as f64 / n as f64;
        let sd = (0.75f64 * 0.25 / n as f64).sqrt();
        assert!((p - 0.75).abs() < 3.0 * sd, "{p}");
        for _ in 0..1000 {
            let v = stochastic_round(9.75, &mut r);
            assert!(v == 9 || v == 10);
            assert_eq!(stochastic_round(7.0, &mut r), 7);
        }
    }

    #[test]
    fn rounding_is_unbiased() {
        let mut r = rng();
        let n = 1_000_000;
        let total: u64 = (0..n).map(|_| stochastic_round(2.3, &mut r)).sum();
        let mean = total as f64 / n as f64;
        let sd = (0.3f64 * 0.7 / n as f64).sqrt();
        assert!((mean - 2.3).abs() < 3.0 * sd, "{mean}");
    }

    #[test]
    fn admissions_schedule_examples() {
        let mut r = rng();
        let adm = vec![100i64; 60];
        let none = AdmissionsSchedule::new(10, 30, 0.0).unwrap();
        assert_eq!(apply_admissions_schedule(&adm, &none, &mut r), adm);

        let full = AdmissionsSchedule::new(10, 0, 1.0).unwrap();
        let out = apply_admissions_schedule(&adm, &full, &mut r);
        assert!(out[..9].iter().all(|a| *a == 100));
        assert!(out[9..].iter().all(|a| *a == 0));

        let s = AdmissionsSchedule::new(10, 30, 0.87).unwrap();
        assert_eq!(s.reduction(9), 0.0);
        assert_eq!(s.reduction(10), 0.0);
        assert_eq!(s.reduction(25), 0.435);
        assert_eq!(s.reduction(40), 0.87);
        assert_eq!(s.reduction(400), 0.87);
        assert!(AdmissionsSchedule::new(0, 1, 1.2).is_err());
    }

    #[test]
    fn recovery_hook_examples() {
        let mut r = rng();
        let p = recovery_duration_hook(RecoveryDurationPolicy::default()).unwrap();
        for _ in 0..100 {
            assert_eq!(p.adjust_with(Health::Recovering, 1, &mut r), 1);
            assert_eq!(p.adjust_with(Health::Recovering, 8, &mut r), 6);
            assert_eq!(p.adjust_with(Health::Declining, 8, &mut r), 8);
        }
        assert!(RecoveryDurationPolicy::new(1.0).is_err());
    }

    proptest! {
        #[test]
        fn recovery_hook_never_lengthens(days in 1u32..60, f in 0.0f64..0.99, seed in 0u64..100) {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            let p = RecoveryDurationPolicy::new(f).unwrap();
            let out = p.adjust_with(Health::Recovering, days, &mut r);
            prop_assert!(out >= 1 && out <= days);
        }
    }
}
