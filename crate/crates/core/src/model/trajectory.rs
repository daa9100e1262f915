use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::{duration_slot, next_stage, DurationSampler, Health, ModelParams, Stage};
use crate::error::{AcedError, Result};

/// Transforms a freshly sampled segment duration.
///
/// Interventions that change length of stay plug in here; the returned value
/// must be at least 1.
pub trait DurationHook: Send + Sync {
    fn adjust(&self, stage: Stage, health: Health, days: u32, rng: &mut dyn RngCore) -> u32;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityHook;

impl DurationHook for IdentityHook {
    fn adjust(&self, _: Stage, _: Health, days: u32, _: &mut dyn RngCore) -> u32 {
        days
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub stage: Stage,
    pub health: Health,
    pub duration: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatientTrajectory {
    pub admission_day: i64,
    pub segments: Vec<Segment>,
    pub terminal: Stage,
}

impl PatientTrajectory {
    pub fn length_of_stay(&self) -> u32 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    /// Day on which the terminal event is recorded.
    pub fn exit_day(&self) -> i64 {
        self.admission_day + self.length_of_stay() as i64
    }
}

/// Precomputed duration tables for one parameter set.
#[derive(Debug, Clone)]
pub struct TrajectorySampler {
    params: ModelParams,
    durations: Vec<DurationSampler>,
}

impl TrajectorySampler {
    pub fn new(params: &ModelParams) -> Result<Self> {
        params.validate()?;
        let mut durations = Vec::with_capacity(6);
        for stage in Stage::INTERMEDIATE {
            for health in Health::ALL {
                durations.push(DurationSampler::from_params(
                    params.duration(stage, health),
                    params.max_duration,
                )?);
            }
        }
        Ok(Self {
            params: params.clone(),
            durations,
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    /// Walks one patient from `start` until a terminal stage, calling
    /// `visit(stage, health, duration)` for each segment in order. Returns
    /// the terminal stage.
    pub fn walk<R, F>(&self, start: Stage, rng: &mut R, hook: &dyn DurationHook, mut visit: F) -> Stage
    where
        R: RngCore,
        F: FnMut(Stage, Health, u32),
    {
        let tp = &self.params.transitions;
        let mut stage = start;
        let mut health = Health::from_recovering(bernoulli(rng, tp.recovery(stage)));
        loop {
            let drawn = self.durations[duration_slot(stage, health)].sample(rng);
            let days = hook.adjust(stage, health, drawn, rng).max(1);
            visit(stage, health, days);

            let next = match health {
                Health::Recovering => next_stage(stage, health).expect("intermediate stage"),
                Health::Declining => {
                    // V declining has early-death probability 1.
                    if bernoulli(rng, tp.early_death(stage)) {
                        Stage::T
                    } else {
                        next_stage(stage, health).expect("intermediate stage")
                    }
                }
            };
            if next.is_terminal() {
                return next;
            }
            if health == Health::Declining {
                health = Health::from_recovering(bernoulli(rng, tp.recovery(next)));
            }
            stage = next;
        }
    }
}

fn bernoulli<R: RngCore>(rng: &mut R, p: f64) -> bool {
    if p >= 1.0 {
        true
    } else if p <= 0.0 {
        false
    } else {
        rng.random::<f64>() < p
    }
}

/// Samples a complete trajectory for one patient entering `start_stage` on
/// `admission_day`.
pub fn sample_trajectory<R: RngCore>(
    params: &ModelParams,
    admission_day: i64,
    start_stage: Stage,
    rng: &mut R,
    duration_hook: Option<&dyn DurationHook>,
) -> Result<PatientTrajectory> {
    if start_stage.is_terminal() {
        return Err(AcedError::Domain(format!(
            "trajectories must start in an intermediate stage, got {start_stage}"
        )));
    }
    let sampler = TrajectorySampler::new(params)?;
    let mut segments = Vec::with_capacity(5);
    let terminal = sampler.walk(start_stage, rng, duration_hook.unwrap_or(&IdentityHook), |stage, health, duration| {
        segments.push(Segment { stage, health, duration })
    });
    Ok(PatientTrajectory {
        admission_day,
        segments,
        terminal,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DurationParams, TransitionParams};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn params(rho: [f64; 3], death: [f64; 2]) -> ModelParams {
        ModelParams {
            transitions: TransitionParams {
                rho_g: rho[0],
                rho_i: rho[1],
                rho_v: rho[2],
                death_g: death[0],
                death_i: death[1],
            },
            durations: [DurationParams::new(5.0, 1.0); 6],
            max_duration: 22,
        }
    }

    fn stages(t: &PatientTrajectory) -> Vec<(Stage, Health)> {
        t.segments.iter().map(|s| (s.stage, s.health)).collect()
    }

    #[test]
    fn certain_recovery_from_ward() {
        let p = params([1.0, 0.5, 0.5], [0.1, 0.1]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let t = sample_trajectory(&p, 0, Stage::G, &mut rng, None).unwrap();
            assert_eq!(stages(&t), vec![(Stage::G, Health::Recovering)]);
            assert_eq!(t.terminal, Stage::R);
        }
    }

    #[test]
    fn certain_decline_reaches_ventilator_then_death() {
        let p = params([0.0, 0.0, 0.0], [0.0, 0.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let t = sample_trajectory(&p, 0, Stage::G, &mut rng, None).unwrap();
            assert_eq!(
                stages(&t),
                vec![
                    (Stage::G, Health::Declining),
                    (Stage::I, Health::Declining),
                    (Stage::V, Health::Declining)
                ]
            );
            assert_eq!(t.terminal, Stage::T);
        }
    }

    #[test]
    fn certain_early_death_in_ward() {
        let p = params([0.0, 0.5, 0.5], [1.0, 0.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let t = sample_trajectory(&p, 0, Stage::G, &mut rng, None).unwrap();
            assert_eq!(stages(&t), vec![(Stage::G, Health::Declining)]);
            assert_eq!(t.terminal, Stage::T);
        }
    }

    #[test]
    fn longest_path_has_five_segments() {
        // G0 -> I0 -> V1 -> I1 -> G1 -> R
        let p = params([0.0, 0.0, 1.0], [0.0, 0.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let t = sample_trajectory(&p, 0, Stage::G, &mut rng, None).unwrap();
        assert_eq!(t.segments.len(), 5);
        assert_eq!(t.terminal, Stage::R);
        assert!(t.length_of_stay() <= 5 * 22);
    }

    #[test]
    fn terminal_start_is_rejected() {
        let p = params([0.5; 3], [0.1; 2]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(sample_trajectory(&p, 0, Stage::R, &mut rng, None).is_err());
    }

    #[test]
    fn warm_start_in_ventilator() {
        let p = params([0.0, 0.0, 0.0], [0.0, 0.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let t = sample_trajectory(&p, -3, Stage::V, &mut rng, None).unwrap();
        assert_eq!(stages(&t), vec![(Stage::V, Health::Declining)]);
        assert_eq!(t.terminal, Stage::T);
    }
}
