//! State space of the patient-flow model.
//!
//! A patient moves through a sequence of care segments. Each segment has an
//! intermediate [`Stage`] (general ward, ICU, ventilator), a [`Health`]
//! direction and a duration in whole days. Declining patients advance
//! G → I → V → T; recovering patients step down V → I → G → R.

mod census;
mod duration;
mod trajectory;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{AcedError, Result};

pub use census::{
    aggregate_counts, simulate_census, simulate_census_with_warmup, AdmissionsHook, CensusSeries,
    InitCounts, SimulationInput, StageSet, WARM_START_DAYS, WARM_START_INFLATION,
};
pub use duration::{duration_pmf, sample_duration, DurationSampler};
pub use trajectory::{
    sample_trajectory, DurationHook, IdentityHook, PatientTrajectory, Segment, TrajectorySampler,
};

/// Default per-segment duration cap in days.
pub const DEFAULT_MAX_DURATION: u32 = 22;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Stage {
    /// General ward.
    G,
    /// ICU, off the ventilator.
    I,
    /// ICU, on the ventilator.
    V,
    /// Recovered and discharged (terminal).
    R,
    /// Died (terminal).
    T,
}

impl Stage {
    pub const ALL: [Stage; 5] = [Stage::G, Stage::I, Stage::V, Stage::R, Stage::T];
    pub const INTERMEDIATE: [Stage; 3] = [Stage::G, Stage::I, Stage::V];
    pub const TERMINAL: [Stage; 2] = [Stage::R, Stage::T];

    pub fn is_terminal(self) -> bool {
        matches!(self, Stage::R | Stage::T)
    }

    pub fn is_intermediate(self) -> bool {
        !self.is_terminal()
    }

    /// Position in `Stage::ALL`.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::G => "G",
            Stage::I => "I",
            Stage::V => "V",
            Stage::R => "R",
            Stage::T => "T",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = AcedError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "G" => Ok(Stage::G),
            "I" => Ok(Stage::I),
            "V" => Ok(Stage::V),
            "R" => Ok(Stage::R),
            "T" => Ok(Stage::T),
            other => Err(AcedError::Input(format!("unknown stage `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Health {
    Declining = 0,
    Recovering = 1,
}

impl Health {
    pub const ALL: [Health; 2] = [Health::Declining, Health::Recovering];

    pub fn from_recovering(recovering: bool) -> Self {
        if recovering {
            Health::Recovering
        } else {
            Health::Declining
        }
    }
}

/// Deterministic successor of an intermediate stage given the health direction.
pub fn next_stage(stage: Stage, health: Health) -> Result<Stage> {
    use Health::*;
    use Stage::*;
    match (stage, health) {
        (G, Declining) => Ok(I),
        (I, Declining) => Ok(V),
        (V, Declining) => Ok(T),
        (V, Recovering) => Ok(I),
        (I, Recovering) => Ok(G),
        (G, Recovering) => Ok(R),
        (R | T, _) => Err(AcedError::Domain(format!(
            "next_stage is undefined for terminal stage {stage}"
        ))),
    }
}

/// Mode location and temperature of one duration distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DurationParams {
    pub lambda: f64,
    pub nu: f64,
}

impl DurationParams {
    pub fn new(lambda: f64, nu: f64) -> Self {
        Self { lambda, nu }
    }

    pub fn validate(&self, max_duration: u32) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(AcedError::Domain(format!("lambda must be positive and finite, got {}", self.lambda)));
        }
        if self.lambda > max_duration as f64 {
            return Err(AcedError::Domain(format!(
                "lambda {} exceeds the duration cap {max_duration}",
                self.lambda
            )));
        }
        if !(self.nu.is_finite() && self.nu > 0.0) {
            return Err(AcedError::Domain(format!("nu must be positive and finite, got {}", self.nu)));
        }
        Ok(())
    }
}

/// Recovery and early-death probabilities.
///
/// There is no early-death probability for the ventilator stage: a declining
/// patient leaving V always dies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionParams {
    pub rho_g: f64,
    pub rho_i: f64,
    pub rho_v: f64,
    pub death_g: f64,
    pub death_i: f64,
}

impl TransitionParams {
    /// Probability that a declining arrival to `stage` switches to recovery.
    pub fn recovery(&self, stage: Stage) -> f64 {
        match stage {
            Stage::G => self.rho_g,
            Stage::I => self.rho_i,
            Stage::V => self.rho_v,
            _ => 0.0,
        }
    }

    /// Probability that a declining segment in `stage` ends in death.
    pub fn early_death(&self, stage: Stage) -> f64 {
        match stage {
            Stage::G => self.death_g,
            Stage::I => self.death_i,
            Stage::V => 1.0,
            _ => 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("rho_G", self.rho_g),
            ("rho_I", self.rho_i),
            ("rho_V", self.rho_v),
            ("d_G", self.death_g),
            ("d_I", self.death_i),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(AcedError::Domain(format!("{name} must lie in [0, 1], got {p}")));
            }
        }
        Ok(())
    }
}

/// Index into the six duration slots, ordered G0, G1, I0, I1, V0, V1.
pub fn duration_slot(stage: Stage, health: Health) -> usize {
    debug_assert!(stage.is_intermediate());
    stage.index() * 2 + health as usize
}

/// The 17 learnable scalars plus the duration cap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub transitions: TransitionParams,
    pub durations: [DurationParams; 6],
    pub max_duration: u32,
}

impl ModelParams {
    pub fn duration(&self, stage: Stage, health: Health) -> DurationParams {
        self.durations[duration_slot(stage, health)]
    }

    pub fn duration_mut(&mut self, stage: Stage, health: Health) -> &mut DurationParams {
        &mut self.durations[duration_slot(stage, health)]
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_duration < 1 {
            return Err(AcedError::Domain("duration cap must be at least 1".into()));
        }
        self.transitions.validate()?;
        for d in &self.durations {
            d.validate(self.max_duration)?;
        }
        Ok(())
    }

    pub fn get(&self, id: ParamId) -> f64 {
        let t = &self.transitions;
        match id {
            ParamId::RhoG => t.rho_g,
            ParamId::RhoI => t.rho_i,
            ParamId::RhoV => t.rho_v,
            ParamId::DeathG => t.death_g,
            ParamId::DeathI => t.death_i,
            ParamId::Lambda(s, h) => self.duration(s, h).lambda,
            ParamId::Nu(s, h) => self.duration(s, h).nu,
        }
    }

    pub fn set(&mut self, id: ParamId, value: f64) {
        let t = &mut self.transitions;
        match id {
            ParamId::RhoG => t.rho_g = value,
            ParamId::RhoI => t.rho_i = value,
            ParamId::RhoV => t.rho_v = value,
            ParamId::DeathG => t.death_g = value,
            ParamId::DeathI => t.death_i = value,
            ParamId::Lambda(s, h) => self.duration_mut(s, h).lambda = value,
            ParamId::Nu(s, h) => self.duration_mut(s, h).nu = value,
        }
    }

    /// Value in the coordinates the sampler walks in: log10 for temperatures,
    /// natural units otherwise.
    pub fn get_working(&self, id: ParamId) -> f64 {
        match id {
            ParamId::Nu(..) => self.get(id).log10(),
            _ => self.get(id),
        }
    }

    pub fn set_working(&mut self, id: ParamId, value: f64) {
        match id {
            ParamId::Nu(..) => self.set(id, 10f64.powf(value)),
            _ => self.set(id, value),
        }
    }

    /// The 17 values in [`ParamId::ALL`] order.
    pub fn to_vec(&self) -> Vec<f64> {
        ParamId::ALL.iter().map(|&id| self.get(id)).collect()
    }

    pub fn from_slice(values: &[f64], max_duration: u32) -> Result<Self> {
        if values.len() != ParamId::COUNT {
            return Err(AcedError::Input(format!(
                "expected {} parameter values, got {}",
                ParamId::COUNT,
                values.len()
            )));
        }
        let mut params = ModelParams {
            transitions: TransitionParams {
                rho_g: 0.0,
                rho_i: 0.0,
                rho_v: 0.0,
                death_g: 0.0,
                death_i: 0.0,
            },
            durations: [DurationParams::new(1.0, 1.0); 6],
            max_duration,
        };
        for (&id, &v) in ParamId::ALL.iter().zip(values) {
            params.set(id, v);
        }
        params.validate()?;
        Ok(params)
    }
}

/// Identifies one of the 17 learnable scalars.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamId {
    RhoG,
    RhoI,
    RhoV,
    DeathG,
    DeathI,
    Lambda(Stage, Health),
    Nu(Stage, Health),
}

impl ParamId {
    pub const COUNT: usize = 17;

    /// Sweep order: transitions first, then (lambda, nu) pairs for
    /// G0, G1, I0, I1, V0, V1.
    pub const ALL: [ParamId; 17] = {
        use Health::*;
        use Stage::*;
        [
            ParamId::RhoG,
            ParamId::RhoI,
            ParamId::RhoV,
            ParamId::DeathG,
            ParamId::DeathI,
            ParamId::Lambda(G, Declining),
            ParamId::Nu(G, Declining),
            ParamId::Lambda(G, Recovering),
            ParamId::Nu(G, Recovering),
            ParamId::Lambda(I, Declining),
            ParamId::Nu(I, Declining),
            ParamId::Lambda(I, Recovering),
            ParamId::Nu(I, Recovering),
            ParamId::Lambda(V, Declining),
            ParamId::Nu(V, Declining),
            ParamId::Lambda(V, Recovering),
            ParamId::Nu(V, Recovering),
        ]
    };

    pub fn index(self) -> usize {
        ParamId::ALL.iter().position(|&p| p == self).expect("every id is listed")
    }

    pub fn name(self) -> String {
        let suffix = |s: Stage, h: Health| format!("{}{}", s, h as u8);
        match self {
            ParamId::RhoG => "rho_G".into(),
            ParamId::RhoI => "rho_I".into(),
            ParamId::RhoV => "rho_V".into(),
            ParamId::DeathG => "d_G".into(),
            ParamId::DeathI => "d_I".into(),
            ParamId::Lambda(s, h) => format!("lambda_{}", suffix(s, h)),
            ParamId::Nu(s, h) => format!("nu_{}", suffix(s, h)),
        }
    }

    pub fn from_name(name: &str) -> Option<ParamId> {
        ParamId::ALL.iter().copied().find(|id| id.name() == name)
    }

    pub fn is_recovery(self) -> bool {
        matches!(self, ParamId::RhoG | ParamId::RhoI | ParamId::RhoV)
    }

    pub fn is_death(self) -> bool {
        matches!(self, ParamId::DeathG | ParamId::DeathI)
    }
}

impl fmt::Display for ParamId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}
