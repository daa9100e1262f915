use serde::{Deserialize, Serialize};

use crate::error::{AcedError, Result};
use crate::model::CensusSeries;

const MEAN_TOLERANCE: f64 = 1e-9;

/// Per-label weights `u_k` and linearly interpolated per-day weights `v_t`.
///
/// Both weight families average to one so the distance stays in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceWeights {
    stage: Vec<(String, f64)>,
    time_first: f64,
    time_last: f64,
}

impl DistanceWeights {
    pub fn new(stage: Vec<(String, f64)>, time_first: f64, time_last: f64) -> Result<Self> {
        if stage.is_empty() {
            return Err(AcedError::config("distance.stage_weights", "at least one label is required"));
        }
        if stage.iter().any(|(_, u)| !(u.is_finite() && *u > 0.0)) {
            return Err(AcedError::config("distance.stage_weights", "weights must be positive"));
        }
        let mean = stage.iter().map(|(_, u)| u).sum::<f64>() / stage.len() as f64;
        if (mean - 1.0).abs() > MEAN_TOLERANCE {
            return Err(AcedError::config(
                "distance.stage_weights",
                format!("weights must average to 1, got {mean}"),
            ));
        }
        if !(time_first > 0.0 && time_last > 0.0) || ((time_first + time_last) / 2.0 - 1.0).abs() > MEAN_TOLERANCE {
            return Err(AcedError::config(
                "distance.time_weights",
                format!("endpoints ({time_first}, {time_last}) must be positive and average to 1"),
            ));
        }
        Ok(Self {
            stage,
            time_first,
            time_last,
        })
    }

    /// Equal stage weights and no recency bias.
    pub fn uniform(labels: &[String]) -> Self {
        Self {
            stage: labels.iter().map(|l| (l.clone(), 1.0)).collect(),
            time_first: 1.0,
            time_last: 1.0,
        }
    }

    /// Default recency bias 0.5 → 1.5 with the given stage weights.
    pub fn with_recency(stage: &[(&str, f64)]) -> Result<Self> {
        Self::new(stage.iter().map(|(l, u)| (l.to_string(), *u)).collect(), 0.5, 1.5)
    }

    /// G, I, V and T observed separately.
    pub fn preset_full_icu() -> Self {
        Self::with_recency(&[("G", 0.7), ("I", 0.9), ("V", 1.1), ("T", 1.3)]).expect("valid preset")
    }

    /// G, combined ICU and T.
    pub fn preset_combined_icu() -> Self {
        Self::with_recency(&[("G", 0.8), ("I+V", 1.0), ("T", 1.2)]).expect("valid preset")
    }

    /// Total beds and T.
    pub fn preset_total_beds() -> Self {
        Self::with_recency(&[("G+I+V", 0.8), ("T", 1.2)]).expect("valid preset")
    }

    /// Discharges, total beds and T.
    pub fn preset_site() -> Self {
        Self::with_recency(&[("R", 0.8), ("G+I+V", 1.0), ("T", 1.2)]).expect("valid preset")
    }

    /// All five simulated series.
    pub fn preset_synthetic() -> Self {
        Self::with_recency(&[("G", 0.8), ("R", 0.9), ("I", 1.0), ("V", 1.1), ("T", 1.2)]).expect("valid preset")
    }

    pub fn labels(&self) -> Vec<String> {
        self.stage.iter().map(|(l, _)| l.clone()).collect()
    }

    pub fn stage_weights(&self) -> &[(String, f64)] {
        &self.stage
    }

    pub fn stage_weight(&self, label: &str) -> Option<f64> {
        self.stage.iter().find(|(l, _)| l == label).map(|(_, u)| *u)
    }

    pub fn time_endpoints(&self) -> (f64, f64) {
        (self.time_first, self.time_last)
    }

    pub fn time_weights(&self, days: usize) -> Vec<f64> {
        match days {
            0 => Vec::new(),
            1 => vec![(self.time_first + self.time_last) / 2.0],
            n => (0..n)
                .map(|t| self.time_first + (self.time_last - self.time_first) * t as f64 / (n - 1) as f64)
                .collect(),
        }
    }
}

/// Weighted, max-normalised mean absolute error between observed and
/// simulated counts.
///
/// Each term is `|y - y_sim| / max(y, y_sim)`; a day where both are zero
/// contributes nothing. Labels are matched by name; `y_sim` may carry extra
/// labels.
pub fn distance(y: &CensusSeries, y_sim: &CensusSeries, w: &DistanceWeights) -> Result<f64> {
    let days = y.len();
    let k = y.num_labels();
    if k == 0 || days == 0 {
        return Err(AcedError::Input("distance needs at least one label and one day".into()));
    }
    if y_sim.len() != days {
        return Err(AcedError::Input(format!(
            "observed series has {days} days but simulation has {}",
            y_sim.len()
        )));
    }
    let v = w.time_weights(days);
    let mut total = 0.0;
    for (label, obs) in y.iter() {
        let sim = y_sim
            .get(label)
            .ok_or_else(|| AcedError::Input(format!("simulation is missing label `{label}`")))?;
        let u = w
            .stage_weight(label)
            .ok_or_else(|| AcedError::Input(format!("no distance weight for label `{label}`")))?;
        for ((&a, &b), &vt) in obs.iter().zip(sim).zip(&v) {
            let m = a.max(b);
            if m > 0.0 {
                total += u * vt * (a - b).abs() / m;
            }
        }
    }
    Ok(total / (k * days) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn one(label: &str, values: &[f64]) -> CensusSeries {
        CensusSeries::new(1, vec![(label.to_string(), values.to_vec())]).unwrap()
    }

    #[test]
    fn worked_examples() {
        let w = DistanceWeights::uniform(&["G".to_string()]);
        let y = one("G", &[20.0]);
        assert_eq!(distance(&y, &one("G", &[22.0]), &w).unwrap(), 1.0 / 11.0);
        assert_eq!(distance(&y, &one("G", &[18.0]), &w).unwrap(), 1.0 / 10.0);
        assert_eq!(distance(&y, &y, &w).unwrap(), 0.0);
    }

    #[test]
    fn both_zero_contributes_nothing() {
        let w = DistanceWeights::uniform(&["T".to_string()]);
        let y = one("T", &[0.0, 4.0]);
        let s = one("T", &[0.0, 2.0]);
        assert_eq!(distance(&y, &s, &w).unwrap(), 0.25);
    }

    #[test]
    fn shape_mismatch_is_input_error() {
        let w = DistanceWeights::uniform(&["G".to_string()]);
        assert!(distance(&one("G", &[1.0, 2.0]), &one("G", &[1.0]), &w).is_err());
        assert!(distance(&one("G", &[1.0]), &one("I", &[1.0]), &w).is_err());
    }

    #[test]
    fn presets_average_to_one() {
        for w in [
            DistanceWeights::preset_full_icu(),
            DistanceWeights::preset_combined_icu(),
            DistanceWeights::preset_total_beds(),
            DistanceWeights::preset_site(),
            DistanceWeights::preset_synthetic(),
        ] {
            let n = w.stage_weights().len() as f64;
            let mean: f64 = w.stage_weights().iter().map(|(_, u)| u).sum::<f64>() / n;
            assert!((mean - 1.0).abs() < 1e-9);
            for days in [1, 2, 7, 61] {
                let v = w.time_weights(days);
                assert!((v.iter().sum::<f64>() / days as f64 - 1.0).abs() < 1e-9);
            }
        }
        assert!(DistanceWeights::with_recency(&[("G", 0.5), ("T", 1.0)]).is_err());
        assert!(DistanceWeights::new(vec![("G".into(), 1.0)], 0.5, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn bounded_and_prefers_overestimates(y in 1u32..500, delta in 1u32..200) {
            prop_assume!(delta < y);
            let w = DistanceWeights::uniform(&["G".to_string()]);
            let obs = one("G", &[y as f64]);
            let over = distance(&obs, &one("G", &[(y + delta) as f64]), &w).unwrap();
            let under = distance(&obs, &one("G", &[(y - delta) as f64]), &w).unwrap();
            prop_assert!(over < under);
            prop_assert!((0.0..=1.0).contains(&over) && (0.0..=1.0).contains(&under));
        }
    }
}
