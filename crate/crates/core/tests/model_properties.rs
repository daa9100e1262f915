use aced_hmm::model::{
    duration_pmf, sample_trajectory, simulate_census, DurationParams, Health, InitCounts, ParamId, SimulationInput,
    Stage,
};
use aced_hmm::priors::{propose, proposal_log_density, sample_prior, PriorSpec, ProposalSpec};
use aced_hmm::rng::substream;
use proptest::prelude::*;
use rand::Rng;
use statrs::distribution::{Beta, Continuous};

use Health::{Declining as D, Recovering as R};

/// Pairs with nonzero probability in the state transition table; the direct
/// jumps from recovering I and V to R are zero.
fn allowed(from: (Stage, Health), to: (Stage, Health)) -> bool {
    matches!(
        (from, to),
        ((Stage::G, D), (Stage::I, _))
            | ((Stage::I, D), (Stage::V, _))
            | ((Stage::V, R), (Stage::I, R))
            | ((Stage::I, R), (Stage::G, R))
    )
}

fn allowed_exit(last: (Stage, Health), terminal: Stage) -> bool {
    matches!(
        (last, terminal),
        ((Stage::G, R), Stage::R) | ((Stage::G, D), Stage::T) | ((Stage::I, D), Stage::T) | ((Stage::V, D), Stage::T)
    )
}

#[test]
fn trajectories_follow_transition_table() {
    let spec = PriorSpec::default();
    let mut rng = substream(100, 0);
    let starts = [Stage::G, Stage::G, Stage::G, Stage::I, Stage::V];
    let mut longest = 0;
    for k in 0..100_000 {
        if k % 1000 == 0 {
            // Fresh parameters every thousand patients.
            rng = substream(100, k / 1000 + 1);
        }
        let params = sample_prior(&spec, &mut rng);
        let start = starts[k as usize % starts.len()];
        let t = sample_trajectory(&params, 0, start, &mut rng, None).unwrap();
        assert_eq!(t.segments[0].stage, start);
        assert!(t.segments.len() <= 5, "{t:?}");
        longest = longest.max(t.segments.len());
        for pair in t.segments.windows(2) {
            let (a, b) = ((pair[0].stage, pair[0].health), (pair[1].stage, pair[1].health));
            assert!(allowed(a, b), "{a:?} -> {b:?}");
            assert!(!(a.1 == R && b.1 == D), "health decreased");
        }
        let last = t.segments.last().unwrap();
        assert!(allowed_exit((last.stage, last.health), t.terminal), "{t:?}");
        for s in &t.segments {
            assert!((1..=params.max_duration).contains(&s.duration));
        }
    }
    assert_eq!(longest, 5);
}

#[test]
fn census_is_bit_identical_under_seed() {
    let params = aced_hmm::priors::prior_center(&PriorSpec::default());
    let input = SimulationInput::new(vec![40; 30], InitCounts { g: 100.0, i: 20.0, v: 10.0 }, 3.0);
    let a = simulate_census(&params, &input, &mut substream(5, 2), None, None).unwrap();
    let b = simulate_census(&params, &input, &mut substream(5, 2), None, None).unwrap();
    assert_eq!(a, b);
    let c = simulate_census(&params, &input, &mut substream(5, 3), None, None).unwrap();
    assert_ne!(a, c);
}

#[test]
fn scaled_counts_are_multiples_of_scale() {
    let params = aced_hmm::priors::prior_center(&PriorSpec::default());
    let input = SimulationInput::new(vec![50; 20], InitCounts { g: 80.0, i: 10.0, v: 5.0 }, 5.0);
    let c = simulate_census(&params, &input, &mut substream(8, 0), None, None).unwrap();
    for (_, values) in c.iter() {
        assert!(values.iter().all(|v| v % 5.0 == 0.0));
    }
}

/// Pearson statistic of `draws` against bin probabilities obtained by
/// integrating `density` with Simpson's rule; sparse bins are merged.
fn chi_square(draws: &[f64], lo: f64, hi: f64, bins: usize, density: impl Fn(f64) -> f64) -> (f64, usize) {
    let width = (hi - lo) / bins as f64;
    let mut observed = vec![0.0; bins];
    for &x in draws {
        assert!(x >= lo && x <= hi, "draw {x} outside [{lo}, {hi}]");
        observed[(((x - lo) / width) as usize).min(bins - 1)] += 1.0;
    }
    let steps = 200;
    let h = width / steps as f64;
    let expected: Vec<f64> = (0..bins)
        .map(|b| {
            let a = lo + b as f64 * width;
            let s: f64 = (0..=steps)
                .map(|k| {
                    let w = if k == 0 || k == steps { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
                    w * density(a + k as f64 * h)
                })
                .sum();
            s * h / 3.0 * draws.len() as f64
        })
        .collect();
    let mut stat = 0.0;
    let mut cells = 0;
    let (mut o, mut e) = (0.0, 0.0);
    for (ob, ex) in observed.iter().zip(&expected) {
        o += ob;
        e += ex;
        if e >= 20.0 {
            stat += (o - e) * (o - e) / e;
            cells += 1;
            o = 0.0;
            e = 0.0;
        }
    }
    if e > 0.0 {
        stat += (o - e) * (o - e) / e;
        cells += 1;
    }
    (stat, cells)
}

/// Upper 0.001 quantile of chi-square with `df` degrees of freedom
/// (Wilson-Hilferty).
fn chi_square_critical(df: usize) -> f64 {
    let k = df as f64;
    let z = 3.090_232;
    k * (1.0 - 2.0 / (9.0 * k) + z * (2.0 / (9.0 * k)).sqrt()).powi(3)
}

#[test]
fn proposal_histograms_match_density() {
    let spec = ProposalSpec::default();
    let cases = [
        (ParamId::RhoG, 0.3, 0.0, 1.0),
        (ParamId::DeathI, 0.02, 0.0, 0.2),
        (ParamId::Lambda(Stage::G, R), 1.4, spec.lambda_lower, spec.lambda_upper),
        (ParamId::Lambda(Stage::V, D), 12.0, spec.lambda_lower, spec.lambda_upper),
        (ParamId::Nu(Stage::I, D), 0.5, 0.5 - 0.6, 0.5 + 0.6),
    ];
    for (k, (id, from, lo, hi)) in cases.into_iter().enumerate() {
        let mut rng = substream(200, k as u64);
        let draws: Vec<f64> = (0..1_000_000).map(|_| propose(id, from, &spec, &mut rng)).collect();
        let inside: Vec<f64> = draws.iter().copied().filter(|x| *x >= lo && *x <= hi).collect();
        let (stat, cells) = chi_square(&inside, lo, hi, 60, |x| {
            proposal_log_density(id, from, x, &spec).exp() * draws.len() as f64 / inside.len() as f64
        });
        let crit = chi_square_critical(cells - 1);
        assert!(stat < crit, "{id}: chi2 {stat:.1} over {cells} cells exceeds {crit:.1}");
    }
}

#[test]
fn beta_proposals_are_asymmetric() {
    let spec = ProposalSpec::default();
    let fwd = proposal_log_density(ParamId::RhoI, 0.3, 0.5, &spec);
    let back = proposal_log_density(ParamId::RhoI, 0.5, 0.3, &spec);
    let direct = |a: f64, b: f64, x: f64| Beta::new(a, b).unwrap().ln_pdf(x);
    assert!((fwd - direct(30.0, 70.0, 0.5)).abs() < 1e-10);
    assert!((back - direct(50.0, 50.0, 0.3)).abs() < 1e-10);
    assert!((fwd - back).abs() > 1e-3);
}

proptest! {
    #[test]
    fn pmf_is_normalised_and_unimodal(lambda in 0.05f64..30.0, log_nu in -3.0f64..3.0, cap in 1u32..60) {
        let pmf = duration_pmf(DurationParams::new(lambda, 10f64.powf(log_nu)), cap).unwrap();
        prop_assert!((pmf.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let peak = pmf.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        for d in 1..pmf.len() {
            if d <= peak {
                prop_assert!(pmf[d] >= pmf[d - 1] * (1.0 - 1e-12));
            } else {
                prop_assert!(pmf[d] <= pmf[d - 1] * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn census_is_nonnegative(seed in 0u64..1000, adm in proptest::collection::vec(0i64..30, 1..25)) {
        let spec = PriorSpec::default();
        let mut rng = substream(seed, 0);
        let params = sample_prior(&spec, &mut rng);
        let init = InitCounts { g: rng.random_range(0.0..50.0), i: 3.0, v: 1.0 };
        let c = simulate_census(&params, &SimulationInput::new(adm.clone(), init, 1.0), &mut rng, None, None).unwrap();
        prop_assert_eq!(c.len(), adm.len());
        for (_, v) in c.iter() {
            prop_assert!(v.iter().all(|x| *x >= 0.0 && x.fract() == 0.0));
        }
    }
}
