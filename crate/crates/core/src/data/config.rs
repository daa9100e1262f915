use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ColumnMap, LabelColumn};
use crate::abc::{default_gamma, DistanceWeights, EpsilonSchedule, RaiseMode};
use crate::error::{AcedError, Result};
use crate::forecast::{BatchSpec, DEFAULT_LEVELS};
use crate::interventions::{AdmissionsSchedule, RecoveryDurationPolicy};
use crate::model::{InitCounts, ParamId, DEFAULT_MAX_DURATION};
use crate::priors::{PriorInputs, PriorSpec, ProposalSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    /// Longest duration in days of any single segment.
    pub max_duration: u32,
    /// Pin every temperature to 1 (truncated-Poisson durations).
    pub poisson_mode: bool,
    /// Population scale factor; `1/scale` of the patients are simulated.
    pub scale: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            max_duration: DEFAULT_MAX_DURATION,
            poisson_mode: false,
            scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightPreset {
    FullIcu,
    CombinedIcu,
    TotalBeds,
    Site,
    Synthetic,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DistanceSection {
    /// Picked from the observed labels when neither this nor explicit weights
    /// are given.
    pub preset: Option<WeightPreset>,
    pub stage_weights: Option<BTreeMap<String, f64>>,
    pub time_first: Option<f64>,
    pub time_last: Option<f64>,
}

impl DistanceSection {
    /// Weights for the observed `labels`.
    pub fn resolve(&self, labels: &[String]) -> Result<DistanceWeights> {
        let (v1, vt) = (self.time_first.unwrap_or(0.5), self.time_last.unwrap_or(1.5));
        let base = if let Some(w) = &self.stage_weights {
            let mut stage = Vec::new();
            for l in labels {
                let u = w.get(l).ok_or_else(|| {
                    AcedError::config("distance.stage_weights", format!("no weight for observed label `{l}`"))
                })?;
                stage.push((l.clone(), *u));
            }
            if let Some(extra) = w.keys().find(|k| !labels.contains(k)) {
                return Err(AcedError::config(
                    "distance.stage_weights",
                    format!("weight given for unobserved label `{extra}`"),
                ));
            }
            stage
        } else {
            let preset = match self.preset {
                Some(p) => p,
                None => preset_for(labels),
            };
            let w = match preset {
                WeightPreset::FullIcu => DistanceWeights::preset_full_icu(),
                WeightPreset::CombinedIcu => DistanceWeights::preset_combined_icu(),
                WeightPreset::TotalBeds => DistanceWeights::preset_total_beds(),
                WeightPreset::Site => DistanceWeights::preset_site(),
                WeightPreset::Synthetic => DistanceWeights::preset_synthetic(),
                WeightPreset::Uniform => DistanceWeights::uniform(labels),
            };
            let mut stage = Vec::new();
            for l in labels {
                let u = w.stage_weight(l).ok_or_else(|| {
                    AcedError::config("distance.preset", format!("preset has no weight for observed label `{l}`"))
                })?;
                stage.push((l.clone(), u));
            }
            if stage.len() != w.stage_weights().len() {
                return Err(AcedError::config(
                    "distance.preset",
                    format!("preset covers {:?} but the data has {labels:?}", w.labels()),
                ));
            }
            stage
        };
        DistanceWeights::new(base, v1, vt)
    }
}

fn preset_for(labels: &[String]) -> WeightPreset {
    let mut sorted: Vec<&str> = labels.iter().map(String::as_str).collect();
    sorted.sort_unstable();
    match sorted.as_slice() {
        ["G", "I", "T", "V"] => WeightPreset::FullIcu,
        ["G", "I+V", "T"] => WeightPreset::CombinedIcu,
        ["G+I+V", "T"] => WeightPreset::TotalBeds,
        ["G+I+V", "R", "T"] => WeightPreset::Site,
        ["G", "I", "R", "T", "V"] => WeightPreset::Synthetic,
        _ => WeightPreset::Uniform,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleSection {
    pub eps_init: f64,
    /// Per-proposal decay; derived from the burn-in length when absent.
    pub gamma: Option<f64>,
    pub bump: f64,
    /// In single-parameter proposals; a quarter of the burn-in when absent.
    pub bump_interval: Option<u64>,
    pub burn_in_sweeps: u64,
    pub sampling_raise: f64,
    pub raise_mode: RaiseMode,
}

impl Default for ScheduleSection {
    fn default() -> Self {
        Self {
            eps_init: 0.7,
            gamma: None,
            bump: 0.05,
            bump_interval: None,
            burn_in_sweeps: 24_000,
            sampling_raise: 0.15,
            raise_mode: RaiseMode::Relative,
        }
    }
}

impl ScheduleSection {
    pub fn build(&self, params_per_sweep: usize) -> Result<EpsilonSchedule> {
        let proposals = self.burn_in_sweeps * params_per_sweep as u64;
        if let Some(g) = self.gamma {
            if !(g > 0.0 && g < 1.0) {
                return Err(AcedError::config("schedule.gamma", format!("must lie in (0, 1), got {g}")));
            }
        }
        let sch = EpsilonSchedule {
            eps_init: self.eps_init,
            gamma: self.gamma.unwrap_or_else(|| default_gamma(self.eps_init, proposals)),
            bump: self.bump,
            bump_interval: self.bump_interval.unwrap_or(proposals / 4),
            burn_in_sweeps: self.burn_in_sweeps,
            sampling_raise: self.sampling_raise,
            raise_mode: self.raise_mode,
        };
        sch.validate()?;
        Ok(sch)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProposalSection {
    pub r_recover: f64,
    pub r_death: f64,
    pub lambda_variance: f64,
    pub log10_nu_variance: f64,
}

impl Default for ProposalSection {
    fn default() -> Self {
        let p = ProposalSpec::default();
        Self {
            r_recover: p.r_recover,
            r_death: p.r_death,
            lambda_variance: p.lambda_variance,
            log10_nu_variance: p.log10_nu_variance,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChainSection {
    pub n_chains: usize,
    pub samples_per_chain: usize,
    pub thin: usize,
    /// Chains whose sampling tolerance exceeds the best by more than this are
    /// left out of the pooled posterior.
    pub max_eps_spread: f64,
}

impl Default for ChainSection {
    fn default() -> Self {
        Self {
            n_chains: 10,
            samples_per_chain: 200,
            thin: 1,
            max_eps_spread: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    pub path: Option<PathBuf>,
    pub date_column: String,
    pub admissions_column: String,
    /// Observed labels and the raw columns they are computed from.
    pub labels: Vec<LabelColumn>,
    pub shift_admissions: bool,
    /// Last training day; the rest of the file is the test period. Defaults
    /// to the whole file.
    pub train_days: Option<usize>,
    /// Labels to smooth with a centered moving average.
    pub smooth: Vec<String>,
    pub smooth_window: usize,
    /// Standing population on day 0; read from the first row when absent.
    pub init_counts: Option<InitCounts>,
}

impl Default for DataSection {
    fn default() -> Self {
        let columns = ColumnMap::default();
        Self {
            path: None,
            date_column: columns.date_column,
            admissions_column: columns.admissions_column,
            labels: columns.labels,
            shift_admissions: columns.shift_admissions,
            train_days: None,
            smooth: Vec::new(),
            smooth_window: 5,
            init_counts: None,
        }
    }
}

impl DataSection {
    pub fn column_map(&self) -> ColumnMap {
        ColumnMap {
            date_column: self.date_column.clone(),
            admissions_column: self.admissions_column.clone(),
            labels: self.labels.clone(),
            shift_admissions: self.shift_admissions,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationSection {
    pub batch_size: usize,
    pub n_batches: usize,
    pub levels: Vec<f64>,
    pub coverage_targets: Vec<f64>,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        Self {
            batch_size: 100,
            n_batches: 100,
            levels: DEFAULT_LEVELS.to_vec(),
            coverage_targets: vec![50.0, 80.0, 95.0],
        }
    }
}

impl EvaluationSection {
    pub fn batches(&self) -> BatchSpec {
        BatchSpec {
            batch_size: self.batch_size,
            n_batches: self.n_batches,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateSection {
    /// Daily admissions to simulate, before the multiplier.
    pub admissions: Vec<i64>,
    pub multiplier: u32,
    pub init_counts: InitCounts,
    /// Truth parameters by name; the prior means are used for the rest.
    pub params: BTreeMap<String, f64>,
    pub start_date: String,
    pub train_days: Option<usize>,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self {
            admissions: Vec::new(),
            multiplier: 1,
            init_counts: InitCounts::default(),
            params: BTreeMap::new(),
            start_date: "2020-01-01".into(),
            train_days: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WhatifSection {
    pub admissions: Option<AdmissionsSchedule>,
    pub recovery: Option<RecoveryDurationPolicy>,
}

/// Every setting of a run. All sections and keys are optional.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelSection,
    pub priors: PriorInputs,
    pub distance: DistanceSection,
    pub schedule: ScheduleSection,
    pub proposals: ProposalSection,
    pub chains: ChainSection,
    pub data: DataSection,
    pub evaluation: EvaluationSection,
    pub simulate: SimulateSection,
    pub whatif: WhatifSection,
}

impl RunConfig {
    pub fn prior_spec(&self) -> Result<PriorSpec> {
        let fixed = self.model.poisson_mode.then_some(1.0);
        Ok(PriorSpec::new(&self.priors, self.model.max_duration)?.with_fixed_nu(fixed))
    }

    pub fn proposal_spec(&self) -> ProposalSpec {
        ProposalSpec {
            r_recover: self.proposals.r_recover,
            r_death: self.proposals.r_death,
            lambda_variance: self.proposals.lambda_variance,
            log10_nu_variance: self.proposals.log10_nu_variance,
            ..ProposalSpec::for_cap(self.model.max_duration)
        }
    }

    /// Single-parameter proposals per sweep.
    pub fn params_per_sweep(&self) -> usize {
        if self.model.poisson_mode {
            ParamId::COUNT - 6
        } else {
            ParamId::COUNT
        }
    }

    pub fn epsilon_schedule(&self) -> Result<EpsilonSchedule> {
        self.schedule.build(self.params_per_sweep())
    }

    /// Shrinks burn-in and sample counts for smoke runs.
    pub fn fast(mut self) -> Self {
        self.schedule.burn_in_sweeps = self.schedule.burn_in_sweeps.min(200);
        self.chains.n_chains = self.chains.n_chains.min(2);
        self.chains.samples_per_chain = self.chains.samples_per_chain.min(20);
        self.evaluation.batch_size = self.evaluation.batch_size.min(10);
        self.evaluation.n_batches = self.evaluation.n_batches.min(10);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.model;
        if m.max_duration < 1 {
            return Err(AcedError::config("model.max_duration", "must be at least 1"));
        }
        if !(m.scale.is_finite() && m.scale >= 1.0) {
            return Err(AcedError::config("model.scale", format!("must be at least 1, got {}", m.scale)));
        }
        self.prior_spec().map_err(|e| match e {
            AcedError::Config { .. } => e,
            other => AcedError::config("priors", other.to_string()),
        })?;
        self.proposal_spec().validate()?;
        self.epsilon_schedule()?;
        let c = &self.chains;
        for (key, v) in [
            ("chains.n_chains", c.n_chains),
            ("chains.samples_per_chain", c.samples_per_chain),
            ("chains.thin", c.thin),
            ("evaluation.batch_size", self.evaluation.batch_size),
            ("evaluation.n_batches", self.evaluation.n_batches),
        ] {
            if v == 0 {
                return Err(AcedError::config(key, "must be at least 1"));
            }
        }
        if !(c.max_eps_spread >= 0.0) {
            return Err(AcedError::config("chains.max_eps_spread", "must be non-negative"));
        }
        if self.data.smooth_window % 2 == 0 {
            return Err(AcedError::config(
                "data.smooth_window",
                format!("must be odd, got {}", self.data.smooth_window),
            ));
        }
        if let Some(l) = self.evaluation.levels.iter().find(|l| !(0.0..=100.0).contains(*l)) {
            return Err(AcedError::config("evaluation.levels", format!("{l} outside [0, 100]")));
        }
        if let Some(l) = self.evaluation.coverage_targets.iter().find(|l| !(0.0..=100.0).contains(*l)) {
            return Err(AcedError::config("evaluation.coverage_targets", format!("{l} outside [0, 100]")));
        }
        if self.simulate.multiplier == 0 {
            return Err(AcedError::config("simulate.multiplier", "must be at least 1"));
        }
        if super::parse_date(&self.simulate.start_date).is_none() {
            return Err(AcedError::config("simulate.start_date", "must be a YYYY-MM-DD date"));
        }
        if self.simulate.admissions.iter().any(|a| *a < 0) {
            return Err(AcedError::config("simulate.admissions", "must be non-negative"));
        }
        for name in self.simulate.params.keys() {
            if ParamId::from_name(name).is_none() {
                return Err(AcedError::config("simulate.params", format!("unknown parameter `{name}`")));
            }
        }
        if let Some(s) = &self.whatif.admissions {
            s.validate()?;
        }
        if let Some(p) = &self.whatif.recovery {
            p.validate()?;
        }
        Ok(())
    }
}

/// Parses and validates TOML text.
pub fn parse_config_str(text: &str) -> Result<RunConfig> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| {
        let key = e.span().map(|s| text[s].to_string()).unwrap_or_default();
        AcedError::config(key, e.message().to_string())
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_config(path: impl AsRef<Path>) -> Result<RunConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| AcedError::config(path.display().to_string(), e.to_string()))?;
    parse_config_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = parse_config_str("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.model.max_duration, 22);
        let sch = cfg.epsilon_schedule().unwrap();
        assert_eq!(sch.eps_init, 0.7);
        assert_eq!(sch.bump, 0.05);
        assert_eq!(sch.sampling_raise, 0.15);
        assert_eq!(sch.burn_in_sweeps, 24_000);
        assert_eq!(sch, EpsilonSchedule::default());
        assert_eq!(cfg.chains.samples_per_chain, 200);
        assert_eq!(cfg.chains.n_chains, 10);
    }

    #[test]
    fn accepts_longer_cap() {
        let cfg = parse_config_str("[model]\nmax_duration = 44\n").unwrap();
        assert_eq!(cfg.prior_spec().unwrap().max_duration, 44);
        assert_eq!(cfg.proposal_spec().lambda_upper, 44.0);
    }

    #[test]
    fn range_errors_name_the_key() {
        match parse_config_str("[schedule]\ngamma = 1.5\n") {
            Err(AcedError::Config { key, .. }) => assert_eq!(key, "schedule.gamma"),
            other => panic!("{other:?}"),
        }
        match parse_config_str("[model]\nscale = 0.5\n") {
            Err(AcedError::Config { key, .. }) => assert_eq!(key, "model.scale"),
            other => panic!("{other:?}"),
        }
        assert!(parse_config_str("[schedule]\nwobble = 1\n").is_err());
        assert!(parse_config_str("unknown = 3\n").is_err());
        assert!(parse_config_str("[priors]\np_vent = 0.5\n").is_err());
        assert!(parse_config_str("[simulate]\nparams = { rho_Q = 0.5 }\n").is_err());
        assert!(parse_config_str("[whatif.recovery]\nreduction_fraction = 1.0\n").is_err());
    }

    #[test]
    fn full_example() {
        let text = r#"
[model]
poisson_mode = true
scale = 5

[distance]
preset = "combined_icu"

[schedule]
burn_in_sweeps = 100
gamma = 0.999
raise_mode = "additive"

[chains]
n_chains = 3

[data]
path = "counts.csv"
train_days = 61
smooth = ["T"]
[[data.labels]]
label = "G"
expr = "hospitalized - icu"
[[data.labels]]
label = "I+V"
expr = "icu"
[[data.labels]]
label = "T"
expr = "deaths"

[whatif.admissions]
start_day = 10
ramp_days = 30
final_reduction = 0.87

[whatif.recovery]
reduction_fraction = 0.25
"#;
        let cfg = parse_config_str(text).unwrap();
        assert_eq!(cfg.params_per_sweep(), 11);
        assert_eq!(cfg.prior_spec().unwrap().fixed_nu, Some(1.0));
        assert_eq!(cfg.data.labels.len(), 3);
        let sch = cfg.epsilon_schedule().unwrap();
        assert_eq!(sch.bump_interval, 275);
        assert_eq!(sch.raise_mode, RaiseMode::Additive);
        let labels: Vec<String> = ["G", "I+V", "T"].iter().map(|s| s.to_string()).collect();
        let w = cfg.distance.resolve(&labels).unwrap();
        assert_eq!(w.stage_weight("I+V"), Some(1.0));
        assert_eq!(cfg.whatif.admissions.unwrap().final_reduction, 0.87);
    }

    #[test]
    fn weights_follow_the_labels() {
        let d = DistanceSection::default();
        let full: Vec<String> = ["G", "I", "V", "T"].iter().map(|s| s.to_string()).collect();
        assert_eq!(d.resolve(&full).unwrap().stage_weight("T"), Some(1.3));
        let odd: Vec<String> = ["G", "T"].iter().map(|s| s.to_string()).collect();
        assert_eq!(d.resolve(&odd).unwrap().stage_weight("G"), Some(1.0));

        let explicit = DistanceSection {
            stage_weights: Some(BTreeMap::from([("G".into(), 0.5), ("T".into(), 1.5)])),
            ..DistanceSection::default()
        };
        assert_eq!(explicit.resolve(&odd).unwrap().stage_weight("T"), Some(1.5));
        assert!(explicit.resolve(&full).is_err());
        let wrong = DistanceSection {
            preset: Some(WeightPreset::FullIcu),
            ..DistanceSection::default()
        };
        assert!(wrong.resolve(&odd).is_err());
    }
}
