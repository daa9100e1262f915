//! Prior distributions over the 17 model parameters and the random-walk
//! proposals used by the sampler.
//!
//! All densities are evaluated in the sampler's working coordinates:
//! probabilities and duration modes in natural units, temperatures as
//! `log10 nu`. Normalising constants are kept everywhere.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dist::{beta_ln_pdf, normal_ln_pdf, sample_beta, sample_std_normal, TruncatedNormal};
use crate::error::{AcedError, Result};
use crate::model::{DurationParams, ModelParams, ParamId, TransitionParams, DEFAULT_MAX_DURATION};

/// Lower clamp applied to the current value before a Beta proposal.
pub const BETA_PROPOSAL_CLAMP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaParams {
    pub a: f64,
    pub b: f64,
}

impl BetaParams {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a.is_finite() && a > 0.0 && b.is_finite() && b > 0.0) {
            return Err(AcedError::Domain(format!("Beta shapes must be positive, got ({a}, {b})")));
        }
        Ok(Self { a, b })
    }

    /// Beta with the given mean and concentration `a + b`.
    pub fn from_mean(mean: f64, concentration: f64) -> Result<Self> {
        Self::new(concentration * mean, concentration * (1.0 - mean))
    }

    pub fn mean(&self) -> f64 {
        self.a / (self.a + self.b)
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        beta_ln_pdf(x, self.a, self.b)
    }
}

/// Truncated-normal prior on a duration mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaPrior {
    pub mean: f64,
    pub sd: f64,
    pub lower: f64,
    pub upper: f64,
}

impl LambdaPrior {
    pub fn for_cap(max_duration: u32) -> Self {
        Self {
            mean: 8.0,
            sd: 3.0,
            lower: 0.0,
            upper: max_duration as f64,
        }
    }

    pub fn distribution(&self) -> TruncatedNormal {
        TruncatedNormal::new(self.mean, self.sd, self.lower, self.upper)
    }
}

/// Normal prior on `log10 nu`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogNuPrior {
    pub mean: f64,
    pub sd: f64,
}

impl Default for LogNuPrior {
    fn default() -> Self {
        Self { mean: 0.5, sd: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionPriors {
    pub rho_g: BetaParams,
    pub rho_i: BetaParams,
    pub rho_v: BetaParams,
    pub death_g: BetaParams,
    pub death_i: BetaParams,
}

impl TransitionPriors {
    pub fn get(&self, id: ParamId) -> Option<&BetaParams> {
        match id {
            ParamId::RhoG => Some(&self.rho_g),
            ParamId::RhoI => Some(&self.rho_i),
            ParamId::RhoV => Some(&self.rho_v),
            ParamId::DeathG => Some(&self.death_g),
            ParamId::DeathI => Some(&self.death_i),
            _ => None,
        }
    }
}

/// Inputs to [`derive_transition_priors`], defaulting to the age-averaged
/// CDC hospitalisation statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PriorInputs {
    /// Fraction of hospitalised patients transferred to the ICU.
    pub p_icu: f64,
    /// Fraction who receive ventilation.
    pub p_vent: f64,
    /// Fraction who die.
    pub p_death: f64,
    pub death_g_mean: f64,
    pub death_i_mean: f64,
    pub r_g: f64,
    pub r_death: f64,
}

impl Default for PriorInputs {
    fn default() -> Self {
        Self {
            p_icu: 0.343,
            p_vent: 0.204,
            p_death: 0.193,
            death_g_mean: 0.01,
            death_i_mean: 0.02,
            r_g: 100.0,
            r_death: 200.0,
        }
    }
}

/// Recovery-probability means solved from the population statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecoveryMeans {
    pub rho_g: f64,
    pub rho_i: f64,
    pub rho_v: f64,
}

/// Solves for the recovery means given ICU, ventilation and death fractions
/// and fixed early-death means:
///
/// ```text
/// 1 - pI = rho_G + (1 - rho_G) dG
/// pV     = pI (1 - rho_I) (1 - dI)
/// pT     = pV (1 - rho_V) + pI (1 - rho_I) dI + dG
/// ```
pub fn solve_recovery_means(inputs: &PriorInputs) -> Result<RecoveryMeans> {
    let PriorInputs {
        p_icu,
        p_vent,
        p_death,
        death_g_mean: dg,
        death_i_mean: di,
        ..
    } = *inputs;
    for (name, v) in [("p_icu", p_icu), ("p_vent", p_vent), ("p_death", p_death)] {
        if !(v > 0.0 && v < 1.0) {
            return Err(AcedError::Input(format!("{name} must lie in (0, 1), got {v}")));
        }
    }
    for (name, v) in [("death_g_mean", dg), ("death_i_mean", di)] {
        if !(0.0..1.0).contains(&v) {
            return Err(AcedError::Input(format!("{name} must lie in [0, 1), got {v}")));
        }
    }
    if p_vent >= p_icu {
        return Err(AcedError::Input(format!(
            "ventilation fraction {p_vent} must be below ICU fraction {p_icu}"
        )));
    }

    let rho_g = (1.0 - p_icu - dg) / (1.0 - dg);
    let icu_decline = p_vent / (p_icu * (1.0 - di));
    let rho_i = 1.0 - icu_decline;
    let rho_v = 1.0 - (p_death - p_icu * icu_decline * di - dg) / p_vent;

    for (name, v) in [("rho_G", rho_g), ("rho_I", rho_i), ("rho_V", rho_v)] {
        if !(v > 0.0 && v < 1.0) {
            return Err(AcedError::Input(format!(
                "statistics are inconsistent: solved {name} = {v} is outside (0, 1)"
            )));
        }
    }
    Ok(RecoveryMeans { rho_g, rho_i, rho_v })
}

/// Beta priors for the five transition probabilities.
///
/// Recovery concentrations shrink with the expected influx to each stage:
/// `r_I = r_G (1 - rho_G)` and `r_V = r_I (1 - rho_I)`.
pub fn derive_transition_priors(inputs: &PriorInputs) -> Result<TransitionPriors> {
    let m = solve_recovery_means(inputs)?;
    if !(inputs.r_g > 0.0 && inputs.r_death > 0.0) {
        return Err(AcedError::Input("prior concentrations must be positive".into()));
    }
    let r_i = inputs.r_g * (1.0 - m.rho_g);
    let r_v = r_i * (1.0 - m.rho_i);
    Ok(TransitionPriors {
        rho_g: BetaParams::from_mean(m.rho_g, inputs.r_g)?,
        rho_i: BetaParams::from_mean(m.rho_i, r_i)?,
        rho_v: BetaParams::from_mean(m.rho_v, r_v)?,
        death_g: BetaParams::from_mean(inputs.death_g_mean, inputs.r_death)?,
        death_i: BetaParams::from_mean(inputs.death_i_mean, inputs.r_death)?,
    })
}

/// Independent priors over all parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub transitions: TransitionPriors,
    pub lambda: [LambdaPrior; 6],
    pub log10_nu: [LogNuPrior; 6],
    pub max_duration: u32,
    /// When set, every temperature is pinned to this value and excluded from
    /// the prior (truncated-Poisson durations when it equals 1).
    pub fixed_nu: Option<f64>,
}

impl PriorSpec {
    pub fn new(inputs: &PriorInputs, max_duration: u32) -> Result<Self> {
        Ok(Self {
            transitions: derive_transition_priors(inputs)?,
            lambda: [LambdaPrior::for_cap(max_duration); 6],
            log10_nu: [LogNuPrior::default(); 6],
            max_duration,
            fixed_nu: None,
        })
    }

    pub fn with_fixed_nu(mut self, nu: Option<f64>) -> Self {
        self.fixed_nu = nu;
        self
    }

    /// Parameters the sampler updates, in sweep order.
    pub fn free_params(&self) -> Vec<ParamId> {
        ParamId::ALL
            .iter()
            .copied()
            .filter(|id| !(self.fixed_nu.is_some() && matches!(id, ParamId::Nu(..))))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_duration < 1 {
            return Err(AcedError::Domain("duration cap must be at least 1".into()));
        }
        for p in &self.lambda {
            if !(p.sd > 0.0 && p.lower < p.upper) {
                return Err(AcedError::Domain("invalid lambda prior".into()));
            }
        }
        for p in &self.log10_nu {
            if !(p.sd > 0.0) {
                return Err(AcedError::Domain("invalid log10 nu prior".into()));
            }
        }
        if let Some(nu) = self.fixed_nu {
            if !(nu > 0.0 && nu.is_finite()) {
                return Err(AcedError::Domain(format!("fixed nu must be positive, got {nu}")));
            }
        }
        Ok(())
    }

    /// Log prior density of one parameter in working coordinates.
    pub fn ln_density_of(&self, id: ParamId, working: f64) -> f64 {
        match id {
            ParamId::Lambda(s, h) => self.lambda[crate::model::duration_slot(s, h)]
                .distribution()
                .ln_pdf(working),
            ParamId::Nu(s, h) => {
                if self.fixed_nu.is_some() {
                    0.0
                } else {
                    let p = self.log10_nu[crate::model::duration_slot(s, h)];
                    normal_ln_pdf(working, p.mean, p.sd)
                }
            }
            _ => self.transitions.get(id).expect("transition id").ln_pdf(working),
        }
    }
}

impl Default for PriorSpec {
    fn default() -> Self {
        PriorSpec::new(&PriorInputs::default(), DEFAULT_MAX_DURATION).expect("default inputs are consistent")
    }
}

/// Draws every parameter independently from its prior.
pub fn sample_prior<R: Rng + ?Sized>(spec: &PriorSpec, rng: &mut R) -> ModelParams {
    let t = &spec.transitions;
    let beta = |rng: &mut R, b: &BetaParams| sample_beta(rng, b.a, b.b);
    let transitions = TransitionParams {
        rho_g: beta(rng, &t.rho_g),
        rho_i: beta(rng, &t.rho_i),
        rho_v: beta(rng, &t.rho_v),
        death_g: beta(rng, &t.death_g),
        death_i: beta(rng, &t.death_i),
    };
    let mut durations = [DurationParams::new(1.0, 1.0); 6];
    for (slot, d) in durations.iter_mut().enumerate() {
        let mut lambda = spec.lambda[slot].distribution().sample(rng);
        // The open lower bound at zero is not a valid mode.
        while lambda <= 0.0 {
            lambda = spec.lambda[slot].distribution().sample(rng);
        }
        let nu = match spec.fixed_nu {
            Some(nu) => nu,
            None => {
                let p = spec.log10_nu[slot];
                10f64.powf(p.mean + p.sd * sample_std_normal(rng))
            }
        };
        *d = DurationParams::new(lambda, nu);
    }
    ModelParams {
        transitions,
        durations,
        max_duration: spec.max_duration,
    }
}

/// Beta means for transitions, prior modes for durations.
pub fn prior_center(spec: &PriorSpec) -> ModelParams {
    let t = &spec.transitions;
    let transitions = TransitionParams {
        rho_g: t.rho_g.mean(),
        rho_i: t.rho_i.mean(),
        rho_v: t.rho_v.mean(),
        death_g: t.death_g.mean(),
        death_i: t.death_i.mean(),
    };
    let mut durations = [DurationParams::new(1.0, 1.0); 6];
    for (slot, d) in durations.iter_mut().enumerate() {
        let l = spec.lambda[slot];
        let nu = spec.fixed_nu.unwrap_or_else(|| 10f64.powf(spec.log10_nu[slot].mean));
        *d = DurationParams::new(l.mean.clamp(l.lower.max(f64::MIN_POSITIVE), l.upper), nu);
    }
    ModelParams {
        transitions,
        durations,
        max_duration: spec.max_duration,
    }
}

/// Sum of all component log densities; `-inf` outside the support.
pub fn prior_log_density(params: &ModelParams, spec: &PriorSpec) -> f64 {
    ParamId::ALL
        .iter()
        .map(|&id| spec.ln_density_of(id, params.get_working(id)))
        .sum()
}

/// Random-walk proposal settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProposalSpec {
    pub r_recover: f64,
    pub r_death: f64,
    pub lambda_variance: f64,
    pub lambda_lower: f64,
    pub lambda_upper: f64,
    pub log10_nu_variance: f64,
}

impl ProposalSpec {
    pub fn for_cap(max_duration: u32) -> Self {
        Self {
            r_recover: 100.0,
            r_death: 200.0,
            lambda_variance: 0.25,
            lambda_lower: 1.0,
            lambda_upper: max_duration as f64,
            log10_nu_variance: 0.01,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("r_recover", self.r_recover),
            ("r_death", self.r_death),
            ("lambda_variance", self.lambda_variance),
            ("log10_nu_variance", self.log10_nu_variance),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(AcedError::config(format!("proposals.{name}"), format!("must be positive, got {v}")));
            }
        }
        if !(self.lambda_lower < self.lambda_upper) {
            return Err(AcedError::config("proposals.lambda_lower", "must be below lambda_upper"));
        }
        Ok(())
    }

    fn beta_for(&self, id: ParamId, from: f64) -> (f64, f64) {
        let r = if id.is_death() { self.r_death } else { self.r_recover };
        let m = from.clamp(BETA_PROPOSAL_CLAMP, 1.0 - BETA_PROPOSAL_CLAMP);
        (r * m, r * (1.0 - m))
    }

    fn lambda_for(&self, from: f64) -> TruncatedNormal {
        TruncatedNormal::new(from, self.lambda_variance.sqrt(), self.lambda_lower, self.lambda_upper)
    }
}

impl Default for ProposalSpec {
    fn default() -> Self {
        Self::for_cap(DEFAULT_MAX_DURATION)
    }
}

/// Draws a candidate for parameter `kind` given its current working value.
pub fn propose<R: Rng + ?Sized>(kind: ParamId, current: f64, spec: &ProposalSpec, rng: &mut R) -> f64 {
    match kind {
        ParamId::Lambda(..) => spec.lambda_for(current).sample(rng),
        ParamId::Nu(..) => current + spec.log10_nu_variance.sqrt() * sample_std_normal(rng),
        _ => {
            let (a, b) = spec.beta_for(kind, current);
            sample_beta(rng, a, b)
        }
    }
}

/// Log density of proposing `to` from `from`, in working coordinates.
pub fn proposal_log_density(kind: ParamId, from: f64, to: f64, spec: &ProposalSpec) -> f64 {
    match kind {
        ParamId::Lambda(..) => spec.lambda_for(from).ln_pdf(to),
        ParamId::Nu(..) => normal_ln_pdf(to, from, spec.log10_nu_variance.sqrt()),
        _ => {
            let (a, b) = spec.beta_for(kind, from);
            beta_ln_pdf(to, a, b)
        }
    }
}
