use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::distance::{distance, DistanceWeights};
use super::schedule::{epsilon_step, EpsilonSchedule, Phase};
use crate::error::{AcedError, Result};
use crate::model::{aggregate_counts, simulate_census, CensusSeries, ModelParams, ParamId, SimulationInput, StageSet};
use crate::priors::{proposal_log_density, propose, sample_prior, PriorSpec, ProposalSpec};
use crate::rng::substream;

/// Everything a chain needs that stays fixed while it runs.
#[derive(Debug, Clone)]
pub struct AbcSetup {
    /// Observed training counts, one column per observed label.
    pub observed: CensusSeries,
    /// Admissions and standing population for the training days.
    pub simulation: SimulationInput,
    /// How observed labels are built from simulated stages.
    pub mapping: Vec<(String, StageSet)>,
    pub weights: DistanceWeights,
    pub priors: PriorSpec,
    pub proposals: ProposalSpec,
    pub schedule: EpsilonSchedule,
    /// Keep one row per proposal that passes the tolerance check.
    pub record_events: bool,
}

impl AbcSetup {
    pub fn validate(&self) -> Result<()> {
        self.priors.validate()?;
        self.proposals.validate()?;
        self.schedule.validate()?;
        self.simulation.validate()?;
        if self.simulation.horizon() != self.observed.len() {
            return Err(AcedError::Input(format!(
                "training admissions cover {} days but observations cover {}",
                self.simulation.horizon(),
                self.observed.len()
            )));
        }
        for label in self.observed.labels() {
            if !self.mapping.iter().any(|(l, _)| l == label) {
                return Err(AcedError::config("data.labels", format!("no stage mapping for observed label `{label}`")));
            }
            if self.weights.stage_weight(label).is_none() {
                return Err(AcedError::config("distance.stage_weights", format!("no weight for observed label `{label}`")));
            }
        }
        Ok(())
    }

    /// Simulates the training period under `params` and returns its distance
    /// to the observations.
    pub fn simulated_distance<R: rand::RngCore>(&self, params: &ModelParams, rng: &mut R) -> Result<f64> {
        let sim = simulate_census(params, &self.simulation, rng, None, None)?;
        let sim = aggregate_counts(&sim, &self.mapping)?;
        distance(&self.observed, &sim, &self.weights)
    }
}

/// Mutable state of one ABC chain.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainState {
    pub params: ModelParams,
    pub eps: f64,
    /// Distance of the last accepted proposal (0 before the first).
    pub d_best: f64,
    /// Smallest tolerance seen during burn-in.
    pub best_eps: f64,
    pub phase: Phase,
    pub samples: Vec<ModelParams>,
    /// Single-parameter proposals made so far.
    pub proposals: u64,
    pub sweeps: u64,
    pub seed: u64,
}

impl ChainState {
    /// Starts from a prior draw. Duration modes are moved into the proposal
    /// support so the random walk can leave the initial point.
    pub fn from_prior<R: Rng + ?Sized>(setup: &AbcSetup, seed: u64, rng: &mut R) -> Self {
        let mut params = sample_prior(&setup.priors, rng);
        for d in params.durations.iter_mut() {
            d.lambda = d.lambda.clamp(setup.proposals.lambda_lower, setup.proposals.lambda_upper);
        }
        Self::new(params, &setup.schedule, seed)
    }

    pub fn new(params: ModelParams, schedule: &EpsilonSchedule, seed: u64) -> Self {
        let phase = if schedule.burn_in_sweeps == 0 {
            Phase::Sampling
        } else {
            Phase::BurnIn
        };
        let eps = match phase {
            Phase::BurnIn => schedule.eps_init,
            Phase::Sampling => schedule.sampling_eps(schedule.eps_init),
        };
        Self {
            params,
            eps,
            d_best: 0.0,
            best_eps: schedule.eps_init,
            phase,
            samples: Vec::new(),
            proposals: 0,
            sweeps: 0,
            seed,
        }
    }
}

/// A proposal that passed the tolerance check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceEvent {
    pub iteration: u64,
    pub sweep: u64,
    pub param: String,
    pub phase: Phase,
    pub eps: f64,
    pub distance: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub sweep: u64,
    pub phase: Phase,
    pub eps: f64,
    pub d_best: f64,
    pub accepted: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamAcceptance {
    pub proposed: u64,
    pub passed_tolerance: u64,
    pub accepted: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ChainDiagnostics {
    pub events: Vec<DistanceEvent>,
    pub sweeps: Vec<SweepSummary>,
    /// Indexed like [`ParamId::ALL`].
    pub acceptance: Vec<ParamAcceptance>,
    pub simulation_failures: u64,
}

impl ChainDiagnostics {
    fn new() -> Self {
        Self {
            acceptance: vec![ParamAcceptance::default(); ParamId::COUNT],
            ..Self::default()
        }
    }
}

/// One full pass over the free parameters in sweep order.
pub fn abc_sweep<R: Rng>(
    state: &mut ChainState,
    setup: &AbcSetup,
    rng: &mut R,
    diag: &mut ChainDiagnostics,
) -> Result<()> {
    let mut accepted_in_sweep = 0;
    for id in setup.priors.free_params() {
        state.proposals += 1;
        let stats = &mut diag.acceptance[id.index()];
        stats.proposed += 1;

        let current = state.params.get_working(id);
        let candidate = propose(id, current, &setup.proposals, rng);
        let mut cand_params = state.params.clone();
        cand_params.set_working(id, candidate);

        let log_alpha = setup.priors.ln_density_of(id, candidate) - setup.priors.ln_density_of(id, current)
            + proposal_log_density(id, candidate, current, &setup.proposals)
            - proposal_log_density(id, current, candidate, &setup.proposals);

        // Outside the prior support the second stage can never accept.
        if log_alpha.is_finite() && cand_params.validate().is_ok() {
            match setup.simulated_distance(&cand_params, rng) {
                Ok(d) if d <= state.eps => {
                    stats.passed_tolerance += 1;
                    let accept = log_alpha >= 0.0 || rng.random::<f64>() < log_alpha.exp();
                    if accept {
                        stats.accepted += 1;
                        accepted_in_sweep += 1;
                        state.params = cand_params;
                        state.d_best = d;
                    }
                    if setup.record_events {
                        diag.events.push(DistanceEvent {
                            iteration: state.proposals,
                            sweep: state.sweeps + 1,
                            param: id.name(),
                            phase: state.phase,
                            eps: state.eps,
                            distance: d,
                            accepted: accept,
                        });
                    }
                }
                Ok(_) => {}
                Err(e) => {
                    diag.simulation_failures += 1;
                    log::warn!("simulation failed for proposal {} ({id}): {e}", state.proposals);
                }
            }
        }

        if state.phase == Phase::BurnIn {
            state.eps = epsilon_step(&setup.schedule, state.eps, state.d_best, state.proposals);
            state.best_eps = state.best_eps.min(state.eps);
        }
    }

    state.sweeps += 1;
    diag.sweeps.push(SweepSummary {
        sweep: state.sweeps,
        phase: state.phase,
        eps: state.eps,
        d_best: state.d_best,
        accepted: accepted_in_sweep,
    });
    if state.phase == Phase::BurnIn && state.sweeps >= setup.schedule.burn_in_sweeps {
        state.phase = Phase::Sampling;
        state.eps = setup.schedule.sampling_eps(state.best_eps);
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainResult {
    pub seed: u64,
    pub samples: Vec<ModelParams>,
    /// Tolerance used during sampling.
    pub final_eps: f64,
    pub best_burn_in_eps: f64,
    /// Last accepted distance when burn-in ended.
    pub burn_in_distance: f64,
    pub final_distance: f64,
    pub diagnostics: ChainDiagnostics,
}

/// Runs burn-in then collects `n_samples` parameter sets, one every `thin`
/// sampling sweeps.
pub fn run_chain(setup: &AbcSetup, n_samples: usize, thin: usize, seed: u64) -> Result<ChainResult> {
    run_chain_with_rng(setup, n_samples, thin, seed, &mut substream(seed, 0))
}

fn run_chain_with_rng(
    setup: &AbcSetup,
    n_samples: usize,
    thin: usize,
    seed: u64,
    rng: &mut ChaCha8Rng,
) -> Result<ChainResult> {
    if n_samples == 0 {
        return Err(AcedError::Input("n_samples must be at least 1".into()));
    }
    if thin == 0 {
        return Err(AcedError::Input("thin must be at least 1".into()));
    }
    setup.validate()?;
    let mut state = ChainState::from_prior(setup, seed, rng);
    let mut diag = ChainDiagnostics::new();
    let mut burn_in_distance = state.d_best;

    while state.phase == Phase::BurnIn {
        abc_sweep(&mut state, setup, rng, &mut diag)?;
        burn_in_distance = state.d_best;
    }
    let mut sampling_sweeps = 0usize;
    while state.samples.len() < n_samples {
        abc_sweep(&mut state, setup, rng, &mut diag)?;
        sampling_sweeps += 1;
        if sampling_sweeps % thin == 0 {
            state.samples.push(state.params.clone());
        }
    }
    log::info!(
        "chain {seed}: {} sweeps, sampling eps {:.4}, last accepted distance {:.4}",
        state.sweeps,
        state.eps,
        state.d_best
    );
    Ok(ChainResult {
        seed,
        samples: state.samples,
        final_eps: state.eps,
        best_burn_in_eps: state.best_eps,
        burn_in_distance,
        final_distance: state.d_best,
        diagnostics: diag,
    })
}

/// Runs `n_chains` independent chains in parallel. Chain `i` uses random
/// stream `i` of `seed`, so results do not depend on the thread count.
pub fn run_chains(
    setup: &AbcSetup,
    n_chains: usize,
    n_samples: usize,
    thin: usize,
    seed: u64,
) -> Result<Vec<ChainResult>> {
    (0..n_chains)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, i as u64);
            run_chain_with_rng(setup, n_samples, thin, seed.wrapping_add(i as u64), &mut rng)
        })
        .collect()
}

/// Pools samples from chains whose sampling tolerance is within
/// `max_eps_spread` of the best chain.
pub fn ensemble(chains: &[ChainResult], max_eps_spread: f64) -> Result<Vec<ModelParams>> {
    if chains.is_empty() {
        return Err(AcedError::Convergence("no chains to ensemble".into()));
    }
    let best = chains.iter().map(|c| c.final_eps).fold(f64::INFINITY, f64::min);
    let kept: Vec<&ChainResult> = chains
        .iter()
        .filter(|c| c.final_eps <= best + max_eps_spread)
        .collect();
    if kept.is_empty() {
        let summary: Vec<String> = chains
            .iter()
            .map(|c| format!("seed {}: eps {:.4}", c.seed, c.final_eps))
            .collect();
        return Err(AcedError::Convergence(format!(
            "every chain was filtered out ({})",
            summary.join(", ")
        )));
    }
    for c in chains.iter().filter(|c| c.final_eps > best + max_eps_spread) {
        log::warn!("excluding chain {} with eps {:.4} (best {:.4})", c.seed, c.final_eps, best);
    }
    Ok(kept.into_iter().flat_map(|c| c.samples.iter().cloned()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{InitCounts, Stage};
    use crate::priors::sample_prior;
    use rand::SeedableRng;

    fn setup(burn_in: u64) -> AbcSetup {
        let priors = PriorSpec::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let truth = sample_prior(&priors, &mut rng);
        let simulation = SimulationInput::new(vec![6; 20], InitCounts { g: 10.0, i: 4.0, v: 2.0 }, 1.0);
        let mapping: Vec<(String, StageSet)> = ["G", "I", "V", "T"]
            .iter()
            .map(|s| (s.to_string(), s.parse().unwrap()))
            .collect();
        let full = simulate_census(&truth, &simulation, &mut rng, None, None).unwrap();
        let observed = aggregate_counts(&full, &mapping).unwrap();
        AbcSetup {
            observed,
            simulation,
            mapping,
            weights: DistanceWeights::preset_full_icu(),
            priors,
            proposals: ProposalSpec::default(),
            schedule: EpsilonSchedule::for_burn_in(burn_in, ParamId::COUNT),
            record_events: true,
        }
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let s = setup(5);
        let a = run_chain(&s, 4, 1, 3).unwrap();
        let b = run_chain(&s, 4, 1, 3).unwrap();
        assert_eq!(a.samples, b.samples);
        assert_eq!(a.diagnostics.events, b.diagnostics.events);
        let c = run_chain(&s, 4, 1, 4).unwrap();
        assert_ne!(a.diagnostics.events, c.diagnostics.events);
    }

    #[test]
    fn returns_requested_samples_with_thinning() {
        let s = setup(3);
        let r = run_chain(&s, 5, 2, 1).unwrap();
        assert_eq!(r.samples.len(), 5);
        assert_eq!(r.diagnostics.sweeps.len(), 3 + 10);
        for p in &r.samples {
            p.validate().unwrap();
        }
        assert!(run_chain(&s, 0, 1, 1).is_err());
        assert!(run_chain(&s, 1, 0, 1).is_err());
    }

    #[test]
    fn tolerance_one_passes_every_valid_proposal() {
        let mut s = setup(0);
        s.schedule = EpsilonSchedule::fixed(1.0);
        let r = run_chain(&s, 3, 1, 9).unwrap();
        for (id, a) in ParamId::ALL.iter().zip(&r.diagnostics.acceptance) {
            // Beta proposals never leave the support, so nothing is filtered out.
            if !matches!(id, ParamId::Lambda(..)) {
                assert_eq!(a.proposed, a.passed_tolerance, "{id}");
            }
        }
    }

    #[test]
    fn epsilon_behaviour_across_phases() {
        let s = setup(6);
        let r = run_chain(&s, 6, 1, 2).unwrap();
        let sweeps = &r.diagnostics.sweeps;
        let sampling: Vec<_> = sweeps.iter().filter(|w| w.phase == Phase::Sampling).collect();
        assert_eq!(sampling.len(), 6);
        assert!(sampling.iter().all(|w| w.eps == r.final_eps));
        assert_eq!(r.final_eps, s.schedule.sampling_eps(r.best_burn_in_eps));
        for e in r.diagnostics.events.iter().filter(|e| e.accepted) {
            assert!(e.distance <= e.eps);
        }
        // No bump inside this burn-in: the tolerance never increases.
        let burn: Vec<f64> = sweeps.iter().filter(|w| w.phase == Phase::BurnIn).map(|w| w.eps).collect();
        let small = EpsilonSchedule {
            bump_interval: 0,
            ..s.schedule
        };
        let mut s2 = s.clone();
        s2.schedule = small;
        let r2 = run_chain(&s2, 1, 1, 2).unwrap();
        let burn2: Vec<f64> = r2
            .diagnostics
            .sweeps
            .iter()
            .filter(|w| w.phase == Phase::BurnIn)
            .map(|w| w.eps)
            .collect();
        assert!(burn2.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(burn.len(), 6);
    }

    #[test]
    fn poisson_mode_never_touches_temperatures() {
        let mut s = setup(2);
        s.priors = s.priors.clone().with_fixed_nu(Some(1.0));
        let r = run_chain(&s, 2, 1, 5).unwrap();
        for p in &r.samples {
            for st in Stage::INTERMEDIATE {
                for h in crate::model::Health::ALL {
                    assert_eq!(p.duration(st, h).nu, 1.0);
                }
            }
        }
        let nu_proposals: u64 = ParamId::ALL
            .iter()
            .zip(&r.diagnostics.acceptance)
            .filter(|(id, _)| matches!(id, ParamId::Nu(..)))
            .map(|(_, a)| a.proposed)
            .sum();
        assert_eq!(nu_proposals, 0);
    }

    #[test]
    fn parallel_chains_match_their_streams() {
        let s = setup(2);
        let all = run_chains(&s, 3, 2, 1, 40).unwrap();
        assert_eq!(all.len(), 3);
        let again = run_chains(&s, 3, 2, 1, 40).unwrap();
        for (a, b) in all.iter().zip(&again) {
            assert_eq!(a.samples, b.samples);
        }
        assert_ne!(all[0].samples, all[1].samples);
    }

    fn fake(seed: u64, eps: f64, n: usize) -> ChainResult {
        let p = sample_prior(&PriorSpec::default(), &mut ChaCha8Rng::seed_from_u64(seed));
        ChainResult {
            seed,
            samples: vec![p; n],
            final_eps: eps,
            best_burn_in_eps: eps,
            burn_in_distance: 0.0,
            final_distance: 0.0,
            diagnostics: ChainDiagnostics::default(),
        }
    }

    #[test]
    fn ensemble_filters_by_tolerance() {
        let chains: Vec<_> = (0..10).map(|i| fake(i, 0.2 + 0.001 * i as f64, 200)).collect();
        assert_eq!(ensemble(&chains, 0.05).unwrap().len(), 2000);

        let one = vec![fake(1, 0.3, 7)];
        assert_eq!(ensemble(&one, 0.0).unwrap(), one[0].samples);

        let mut mixed = chains.clone();
        mixed.push(fake(99, 0.9, 200));
        assert_eq!(ensemble(&mixed, 0.05).unwrap().len(), 2000);

        assert!(matches!(ensemble(&[], 0.1), Err(AcedError::Convergence(_))));
        let nan = vec![fake(1, f64::NAN, 3)];
        assert!(matches!(ensemble(&nan, 0.1), Err(AcedError::Convergence(_))));
    }
}
