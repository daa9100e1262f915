use serde::{Deserialize, Serialize};

use crate::error::{AcedError, Result};

/// Tolerance the default decay rate reaches at the end of burn-in when no
/// accepted distance floors it.
pub const DEFAULT_DECAY_TARGET: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    BurnIn,
    Sampling,
}

/// How the sampling tolerance is raised above the best burn-in tolerance.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RaiseMode {
    /// `eps * (1 + raise)`
    #[default]
    Relative,
    /// `eps + raise`
    Additive,
}

/// Annealing schedule for the acceptance tolerance.
///
/// During burn-in the tolerance decays by `gamma` after every single-parameter
/// proposal, never dropping below the last accepted distance, and is bumped by
/// `bump` every `bump_interval` proposals. Sampling runs at the best burn-in
/// tolerance raised by `sampling_raise`, held fixed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSchedule {
    pub eps_init: f64,
    pub gamma: f64,
    pub bump: f64,
    /// In single-parameter proposals; zero disables bumps.
    pub bump_interval: u64,
    pub burn_in_sweeps: u64,
    pub sampling_raise: f64,
    pub raise_mode: RaiseMode,
}

impl EpsilonSchedule {
    /// Schedule for `burn_in_sweeps` sweeps of `params_per_sweep` proposals,
    /// with the decay rate chosen so the tolerance falls from `eps_init` to
    /// [`DEFAULT_DECAY_TARGET`] over the burn-in and four bumps spread evenly.
    pub fn for_burn_in(burn_in_sweeps: u64, params_per_sweep: usize) -> Self {
        let eps_init = 0.7;
        let proposals = burn_in_sweeps * params_per_sweep as u64;
        Self {
            eps_init,
            gamma: default_gamma(eps_init, proposals),
            bump: 0.05,
            bump_interval: proposals / 4,
            burn_in_sweeps,
            sampling_raise: 0.15,
            raise_mode: RaiseMode::Relative,
        }
    }

    /// Fixed tolerance with no burn-in.
    pub fn fixed(eps: f64) -> Self {
        Self {
            eps_init: eps,
            gamma: 1.0,
            bump: 0.0,
            bump_interval: 0,
            burn_in_sweeps: 0,
            sampling_raise: 0.0,
            raise_mode: RaiseMode::Relative,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps_init > 0.0 && self.eps_init <= 1.0) {
            return Err(AcedError::config("schedule.eps_init", format!("must lie in (0, 1], got {}", self.eps_init)));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(AcedError::config("schedule.gamma", format!("must lie in (0, 1], got {}", self.gamma)));
        }
        if !(self.bump >= 0.0 && self.bump < 1.0) {
            return Err(AcedError::config("schedule.bump", format!("must lie in [0, 1), got {}", self.bump)));
        }
        if !(self.sampling_raise >= 0.0 && self.sampling_raise < 1.0) {
            return Err(AcedError::config(
                "schedule.sampling_raise",
                format!("must lie in [0, 1), got {}", self.sampling_raise),
            ));
        }
        Ok(())
    }

    /// Tolerance used once sampling starts.
    pub fn sampling_eps(&self, best_burn_in_eps: f64) -> f64 {
        let raised = match self.raise_mode {
            RaiseMode::Relative => best_burn_in_eps * (1.0 + self.sampling_raise),
            RaiseMode::Additive => best_burn_in_eps + self.sampling_raise,
        };
        raised.min(1.0)
    }
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        Self::for_burn_in(24_000, 17)
    }
}

/// Decay rate taking `eps_init` to [`DEFAULT_DECAY_TARGET`] in `proposals` steps.
pub fn default_gamma(eps_init: f64, proposals: u64) -> f64 {
    if proposals == 0 || eps_init <= DEFAULT_DECAY_TARGET {
        return 1.0;
    }
    (DEFAULT_DECAY_TARGET / eps_init).powf(1.0 / proposals as f64)
}

/// Tolerance after the `proposal_index`-th burn-in proposal (1-based).
pub fn epsilon_step(sch: &EpsilonSchedule, eps: f64, d_best: f64, proposal_index: u64) -> f64 {
    let mut next = (sch.gamma * eps).max(d_best);
    if sch.bump_interval > 0 && proposal_index % sch.bump_interval == 0 {
        next += sch.bump;
    }
    next.min(1.0)
}
