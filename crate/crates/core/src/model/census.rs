use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::{DurationHook, IdentityHook, ModelParams, Stage, TrajectorySampler};
use crate::error::{AcedError, Result};

/// Number of days before day 1 over which the initial population is admitted.
pub const WARM_START_DAYS: i64 = 5;

/// Multiplier on the warm-start admissions to G and V.
pub const WARM_START_INFLATION: f64 = 1.03;

/// Daily counts per observed label over consecutive days.
///
/// Intermediate stages hold point-prevalence occupancy; R and T hold daily
/// incident counts. Values are stored as `f64` so smoothed observations and
/// simulated integer counts share one type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CensusSeries {
    start_day: i64,
    labels: Vec<String>,
    values: Vec<Vec<f64>>,
}

impl CensusSeries {
    pub fn new(start_day: i64, columns: Vec<(String, Vec<f64>)>) -> Result<Self> {
        let len = columns.first().map(|c| c.1.len()).unwrap_or(0);
        let mut labels = Vec::with_capacity(columns.len());
        let mut values = Vec::with_capacity(columns.len());
        for (label, series) in columns {
            if series.len() != len {
                return Err(AcedError::Input(format!(
                    "series `{label}` has {} days, expected {len}",
                    series.len()
                )));
            }
            if let Some(bad) = series.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
                return Err(AcedError::Input(format!("series `{label}` has invalid count {bad}")));
            }
            if labels.contains(&label) {
                return Err(AcedError::Input(format!("duplicate label `{label}`")));
            }
            labels.push(label);
            values.push(series);
        }
        Ok(Self {
            start_day,
            labels,
            values,
        })
    }

    pub fn zeros(start_day: i64, labels: &[String], len: usize) -> Self {
        Self {
            start_day,
            labels: labels.to_vec(),
            values: vec![vec![0.0; len]; labels.len()],
        }
    }

    pub fn start_day(&self) -> i64 {
        self.start_day
    }

    pub fn len(&self) -> usize {
        self.values.first().map(Vec::len).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn num_labels(&self) -> usize {
        self.labels.len()
    }

    pub fn get(&self, label: &str) -> Option<&[f64]> {
        self.labels
            .iter()
            .position(|l| l == label)
            .map(|i| self.values[i].as_slice())
    }

    pub fn column(&self, idx: usize) -> &[f64] {
        &self.values[idx]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.labels
            .iter()
            .map(String::as_str)
            .zip(self.values.iter().map(Vec::as_slice))
    }

    /// Value for `label` on absolute day `day`.
    pub fn at(&self, label: &str, day: i64) -> Option<f64> {
        let idx = usize::try_from(day - self.start_day).ok()?;
        self.get(label)?.get(idx).copied()
    }

    /// Sub-series for positional indices `range`.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Result<Self> {
        if range.end > self.len() || range.start > range.end {
            return Err(AcedError::Input(format!(
                "day range {range:?} outside series of length {}",
                self.len()
            )));
        }
        Ok(Self {
            start_day: self.start_day + range.start as i64,
            labels: self.labels.clone(),
            values: self.values.iter().map(|v| v[range.clone()].to_vec()).collect(),
        })
    }

    /// Keeps only `labels`, in the given order.
    pub fn select(&self, labels: &[String]) -> Result<Self> {
        let mut columns = Vec::with_capacity(labels.len());
        for label in labels {
            let series = self
                .get(label)
                .ok_or_else(|| AcedError::Input(format!("series has no label `{label}`")))?;
            columns.push((label.clone(), series.to_vec()));
        }
        Self::new(self.start_day, columns)
    }

    pub fn map_values(&self, mut f: impl FnMut(&str, &[f64]) -> Vec<f64>) -> Result<Self> {
        let columns = self
            .iter()
            .map(|(l, v)| (l.to_string(), f(l, v)))
            .collect();
        Self::new(self.start_day, columns)
    }
}

/// A set of stages summed under one observed label, e.g. `I+V`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct StageSet(BTreeSet<Stage>);

impl StageSet {
    pub fn single(stage: Stage) -> Self {
        Self(BTreeSet::from([stage]))
    }

    pub fn stages(&self) -> impl Iterator<Item = Stage> + '_ {
        self.0.iter().copied()
    }

    pub fn contains(&self, stage: Stage) -> bool {
        self.0.contains(&stage)
    }

    pub fn label(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for StageSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<&str> = self.0.iter().map(|s| s.as_str()).collect();
        f.write_str(&parts.join("+"))
    }
}

impl FromStr for StageSet {
    type Err = AcedError;

    fn from_str(s: &str) -> Result<Self> {
        let mut set = BTreeSet::new();
        for part in s.split('+') {
            let stage: Stage = part
                .parse()
                .map_err(|_| AcedError::config("stage_label", format!("unknown stage in label `{s}`")))?;
            if !set.insert(stage) {
                return Err(AcedError::config("stage_label", format!("repeated stage in label `{s}`")));
            }
        }
        let terminal = set.iter().filter(|s| s.is_terminal()).count();
        if terminal > 0 && terminal != set.len() {
            return Err(AcedError::config(
                "stage_label",
                format!("label `{s}` mixes occupancy and incident stages"),
            ));
        }
        Ok(Self(set))
    }
}

impl TryFrom<String> for StageSet {
    type Error = AcedError;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<StageSet> for String {
    fn from(s: StageSet) -> String {
        s.to_string()
    }
}

/// Sums stage series into aggregate labels.
pub fn aggregate_counts(c: &CensusSeries, mapping: &[(String, StageSet)]) -> Result<CensusSeries> {
    let mut columns = Vec::with_capacity(mapping.len());
    for (label, set) in mapping {
        let mut sum = vec![0.0; c.len()];
        for stage in set.stages() {
            let series = c.get(stage.as_str()).ok_or_else(|| {
                AcedError::config("stage_mapping", format!("stage {stage} for label `{label}` is not in the series"))
            })?;
            for (acc, v) in sum.iter_mut().zip(series) {
                *acc += v;
            }
        }
        columns.push((label.clone(), sum));
    }
    CensusSeries::new(c.start_day(), columns)
}

/// Standing population on day 0, before the first simulated admissions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct InitCounts {
    #[serde(rename = "G", default)]
    pub g: f64,
    #[serde(rename = "I", default)]
    pub i: f64,
    #[serde(rename = "V", default)]
    pub v: f64,
}

impl InitCounts {
    pub fn get(&self, stage: Stage) -> f64 {
        match stage {
            Stage::G => self.g,
            Stage::I => self.i,
            Stage::V => self.v,
            _ => 0.0,
        }
    }
}

/// Transforms the admissions stream before simulation.
pub trait AdmissionsHook: Send + Sync {
    fn apply(&self, admissions: &[i64], rng: &mut dyn RngCore) -> Vec<i64>;
}

/// Everything the simulator needs besides parameters and randomness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationInput {
    /// Admissions to G on days `1..=admissions.len()`.
    pub admissions: Vec<i64>,
    pub init_counts: InitCounts,
    /// Population scale factor; `1/scale` of the patients are simulated.
    pub scale: f64,
}

impl SimulationInput {
    pub fn new(admissions: Vec<i64>, init_counts: InitCounts, scale: f64) -> Self {
        Self {
            admissions,
            init_counts,
            scale,
        }
    }

    pub fn horizon(&self) -> usize {
        self.admissions.len()
    }

    /// Same input restricted to the first `days` days of admissions.
    pub fn truncated(&self, days: usize) -> Self {
        Self {
            admissions: self.admissions[..days.min(self.admissions.len())].to_vec(),
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scale.is_finite() && self.scale >= 1.0) {
            return Err(AcedError::Input(format!("scale must be >= 1, got {}", self.scale)));
        }
        if let Some((day, a)) = self.admissions.iter().enumerate().find(|(_, a)| **a < 0) {
            return Err(AcedError::Input(format!("negative admissions {a} on day {}", day + 1)));
        }
        for stage in Stage::INTERMEDIATE {
            let c = self.init_counts.get(stage);
            if !(c.is_finite() && c >= 0.0) {
                return Err(AcedError::Input(format!("invalid initial count {c} for {stage}")));
            }
        }
        Ok(())
    }
}

fn stage_labels() -> Vec<String> {
    Stage::ALL.iter().map(|s| s.to_string()).collect()
}

/// Simulates daily counts for G, I, V (occupancy) and R, T (incidents)
/// including the warm-start days `-5..=0`.
///
/// A segment of duration `d` starting on day `t` occupies days
/// `t..=t+d-1`; the next segment or the terminal event falls on `t+d`.
pub fn simulate_census_with_warmup<R: RngCore>(
    params: &ModelParams,
    input: &SimulationInput,
    rng: &mut R,
    duration_hook: Option<&dyn DurationHook>,
    admissions_hook: Option<&dyn AdmissionsHook>,
) -> Result<CensusSeries> {
    input.validate()?;
    let sampler = TrajectorySampler::new(params)?;
    let hook = duration_hook.unwrap_or(&IdentityHook);
    let horizon = input.horizon() as i64;
    let first_day = -WARM_START_DAYS;
    let n_days = (horizon - first_day + 1) as usize;
    let scale = input.scale;

    // Occupancy as difference arrays (one extra slot for the closing edge).
    let mut occupancy = [(); 3].map(|_| vec![0i64; n_days + 1]);
    let mut incidents = [(); 2].map(|_| vec![0i64; n_days]);

    let mut admit = |day: i64, start: Stage, rng: &mut R| {
        let mut t = day;
        let terminal = sampler.walk(start, rng, hook, |stage, _, days| {
            let from = (t - first_day) as usize;
            if from < n_days {
                let to = ((t + days as i64 - first_day) as usize).min(n_days);
                let occ = &mut occupancy[stage.index()];
                occ[from] += 1;
                occ[to] -= 1;
            }
            t += days as i64;
        });
        let idx = t - first_day;
        if (0..n_days as i64).contains(&idx) {
            incidents[terminal.index() - 3][idx as usize] += 1;
        }
    };

    for stage in Stage::INTERMEDIATE {
        let inflation = match stage {
            Stage::G | Stage::V => WARM_START_INFLATION,
            _ => 1.0,
        };
        let n = (input.init_counts.get(stage) * inflation / scale).round() as u64;
        for _ in 0..n {
            let day = rng.random_range(-WARM_START_DAYS..=-1);
            admit(day, stage, rng);
        }
    }

    let admissions = match admissions_hook {
        Some(h) => {
            let adjusted = h.apply(&input.admissions, rng);
            if adjusted.len() != input.admissions.len() || adjusted.iter().any(|a| *a < 0) {
                return Err(AcedError::Input("admissions hook returned an invalid stream".into()));
            }
            adjusted
        }
        None => input.admissions.clone(),
    };
    for (i, &a) in admissions.iter().enumerate() {
        let day = i as i64 + 1;
        let n = (a as f64 / scale).round() as u64;
        for _ in 0..n {
            admit(day, Stage::G, rng);
        }
    }

    let rescale = |count: i64| (count as f64 * scale).round();
    let mut columns = Vec::with_capacity(5);
    for (k, label) in stage_labels().into_iter().enumerate() {
        let series: Vec<f64> = if k < 3 {
            occupancy[k]
                .iter()
                .take(n_days)
                .scan(0i64, |acc, d| {
                    *acc += d;
                    Some(rescale(*acc))
                })
                .collect()
        } else {
            incidents[k - 3].iter().map(|&c| rescale(c)).collect()
        };
        columns.push((label, series));
    }
    CensusSeries::new(first_day, columns)
}

/// Simulated counts for days `1..=admissions.len()` with labels G, I, V, R, T.
pub fn simulate_census<R: RngCore>(
    params: &ModelParams,
    input: &SimulationInput,
    rng: &mut R,
    duration_hook: Option<&dyn DurationHook>,
    admissions_hook: Option<&dyn AdmissionsHook>,
) -> Result<CensusSeries> {
    let full = simulate_census_with_warmup(params, input, rng, duration_hook, admissions_hook)?;
    let offset = (1 - full.start_day()) as usize;
    full.slice(offset..full.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DurationParams, TransitionParams};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn series(cols: &[(&str, &[f64])]) -> CensusSeries {
        CensusSeries::new(0, cols.iter().map(|(l, v)| (l.to_string(), v.to_vec())).collect()).unwrap()
    }

    #[test]
    fn aggregate_examples() {
        let c = series(&[("G", &[5.0]), ("I", &[2.0]), ("V", &[1.0])]);
        let all = aggregate_counts(&c, &[("AllBeds".into(), "G+I+V".parse().unwrap())]).unwrap();
        assert_eq!(all.get("AllBeds").unwrap(), &[8.0]);

        let c = series(&[("I", &[2.0, 3.0]), ("V", &[1.0, 1.0])]);
        let icu = aggregate_counts(&c, &[("InICU".into(), "I+V".parse().unwrap())]).unwrap();
        assert_eq!(icu.get("InICU").unwrap(), &[3.0, 4.0]);

        let ident: Vec<(String, StageSet)> = ["I", "V"]
            .iter()
            .map(|l| (l.to_string(), l.parse().unwrap()))
            .collect();
        assert_eq!(aggregate_counts(&c, &ident).unwrap(), c);
    }

    #[test]
    fn aggregate_unknown_stage_is_config_error() {
        let c = series(&[("I", &[2.0])]);
        let err = aggregate_counts(&c, &[("x".into(), StageSet::single(Stage::G))]).unwrap_err();
        assert!(matches!(err, AcedError::Config { .. }));
        assert!("G+Q".parse::<StageSet>().is_err());
        assert!("G+R".parse::<StageSet>().is_err());
    }

    fn recovering_ward_params(days: u32) -> ModelParams {
        // A near-zero temperature puts all mass on floor(lambda) for
        // non-integer lambda.
        ModelParams {
            transitions: TransitionParams {
                rho_g: 1.0,
                rho_i: 0.5,
                rho_v: 0.5,
                death_g: 0.0,
                death_i: 0.0,
            },
            durations: [DurationParams::new(days as f64 + 0.5, 1e-6); 6],
            max_duration: 22,
        }
    }

    #[test]
    fn zero_admissions_give_zero_counts() {
        let p = recovering_ward_params(3);
        let input = SimulationInput::new(vec![0; 10], InitCounts::default(), 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let c = simulate_census(&p, &input, &mut rng, None, None).unwrap();
        assert_eq!(c.len(), 10);
        assert!(c.iter().all(|(_, v)| v.iter().all(|x| *x == 0.0)));
    }

    #[test]
    fn single_patient_hand_trace() {
        let p = recovering_ward_params(3);
        let mut admissions = vec![0; 8];
        admissions[0] = 1;
        let input = SimulationInput::new(admissions, InitCounts::default(), 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let c = simulate_census(&p, &input, &mut rng, None, None).unwrap();
        assert_eq!(c.start_day(), 1);
        assert_eq!(c.get("G").unwrap(), &[1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(c.get("R").unwrap(), &[0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(c.at("R", 4), Some(1.0));
        for l in ["I", "V", "T"] {
            assert!(c.get(l).unwrap().iter().all(|x| *x == 0.0));
        }
    }

    #[test]
    fn warm_start_patients_are_inflated() {
        let p = recovering_ward_params(21);
        let init = InitCounts {
            g: 100.0,
            i: 0.0,
            v: 0.0,
        };
        let input = SimulationInput::new(vec![0; 3], init, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = simulate_census_with_warmup(&p, &input, &mut rng, None, None).unwrap();
        // Durations are 21 days so everyone is still on the ward at day 0.
        assert_eq!(c.at("G", 0), Some(103.0));
    }

    #[test]
    fn negative_admissions_rejected() {
        let p = recovering_ward_params(3);
        let input = SimulationInput::new(vec![1, -1], InitCounts::default(), 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            simulate_census(&p, &input, &mut rng, None, None),
            Err(AcedError::Input(_))
        ));
    }

    #[test]
    fn determinism_under_seed() {
        let mut p = recovering_ward_params(4);
        p.transitions.rho_g = 0.4;
        p.transitions.death_g = 0.1;
        let input = SimulationInput::new(
            (0..30).map(|d| 20 + d).collect(),
            InitCounts {
                g: 50.0,
                i: 10.0,
                v: 5.0,
            },
            1.0,
        );
        let a = simulate_census(&p, &input, &mut ChaCha8Rng::seed_from_u64(11), None, None).unwrap();
        let b = simulate_census(&p, &input, &mut ChaCha8Rng::seed_from_u64(11), None, None).unwrap();
        assert_eq!(a, b);
    }
}
