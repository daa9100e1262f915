//! Posterior predictive forecasts and evaluation metrics.

use std::io::Write;

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{AcedError, Result};
use crate::model::{
    aggregate_counts, simulate_census, AdmissionsHook, CensusSeries, DurationHook, ModelParams, SimulationInput,
    StageSet,
};
use crate::rng::substream;

pub const DEFAULT_LEVELS: [f64; 3] = [2.5, 50.0, 97.5];

/// Optional intervention hooks applied to every forecast.
#[derive(Clone, Copy, Default)]
pub struct ForecastHooks<'a> {
    pub duration: Option<&'a dyn DurationHook>,
    pub admissions: Option<&'a dyn AdmissionsHook>,
}

/// One simulation per sample over the full horizon of `input`. Sample `i`
/// uses random stream `i` of `seed`.
///
/// With a mapping the output carries the mapped labels, otherwise G, I, V, R, T.
pub fn forecast_counts(
    samples: &[ModelParams],
    input: &SimulationInput,
    mapping: Option<&[(String, StageSet)]>,
    hooks: ForecastHooks<'_>,
    seed: u64,
) -> Result<Vec<CensusSeries>> {
    if samples.is_empty() {
        return Err(AcedError::Input("no posterior samples to forecast from".into()));
    }
    samples
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let mut rng = substream(seed, i as u64);
            let sim = simulate_census(p, input, &mut rng, hooks.duration, hooks.admissions)?;
            match mapping {
                Some(m) => aggregate_counts(&sim, m),
                None => Ok(sim),
            }
        })
        .collect()
}

/// Restricts every forecast to days `first..=last`.
pub fn forecast_window(forecasts: &[CensusSeries], first: i64, last: i64) -> Result<Vec<CensusSeries>> {
    forecasts.iter().map(|f| window(f, first, last)).collect()
}

fn window(s: &CensusSeries, first: i64, last: i64) -> Result<CensusSeries> {
    let lo = first - s.start_day();
    let hi = last - s.start_day() + 1;
    if lo < 0 || hi as usize > s.len() || lo >= hi {
        return Err(AcedError::Input(format!(
            "days {first}..={last} fall outside the series covering {}..={}",
            s.start_day(),
            s.start_day() + s.len() as i64 - 1
        )));
    }
    s.slice(lo as usize..hi as usize)
}

/// Linear interpolation between order statistics of sorted data, `p` in
/// percent.
pub fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * (p / 100.0).clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Per label and day: mean and percentile values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastSummary {
    pub start_day: i64,
    pub levels: Vec<f64>,
    pub labels: Vec<String>,
    /// `mean[label][day]`.
    pub mean: Vec<Vec<f64>>,
    /// `percentiles[label][level][day]`.
    pub percentiles: Vec<Vec<Vec<f64>>>,
}

impl ForecastSummary {
    pub fn len(&self) -> usize {
        self.mean.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn mean_series(&self) -> Result<CensusSeries> {
        CensusSeries::new(self.start_day, self.labels.iter().cloned().zip(self.mean.iter().cloned()).collect())
    }

    pub fn level(&self, label: &str, level: f64) -> Option<&[f64]> {
        let k = self.labels.iter().position(|l| l == label)?;
        let j = self.levels.iter().position(|l| *l == level)?;
        Some(&self.percentiles[k][j])
    }

    /// Rows `date, label, mean, p<level>...`. Without a start date the date
    /// column holds the day index.
    pub fn write_csv<W: Write>(&self, out: W, day_one: Option<NaiveDate>) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["date".to_string(), "label".to_string(), "mean".to_string()];
        header.extend(self.levels.iter().map(|l| format!("p{l}")));
        w.write_record(&header)?;
        for (k, label) in self.labels.iter().enumerate() {
            for t in 0..self.len() {
                let day = self.start_day + t as i64;
                let mut row = vec![format_day(day, day_one), label.clone(), self.mean[k][t].to_string()];
                row.extend(self.percentiles[k].iter().map(|p| p[t].to_string()));
                w.write_record(&row)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn format_day(day: i64, day_one: Option<NaiveDate>) -> String {
    match day_one.and_then(|d| d.checked_add_signed(chrono::Duration::days(day - 1))) {
        Some(date) => date.format("%Y-%m-%d").to_string(),
        None => day.to_string(),
    }
}

fn check_aligned(forecasts: &[CensusSeries]) -> Result<&CensusSeries> {
    let first = forecasts
        .first()
        .ok_or_else(|| AcedError::Input("at least one forecast is required".into()))?;
    for f in forecasts {
        if f.labels() != first.labels() || f.len() != first.len() || f.start_day() != first.start_day() {
            return Err(AcedError::Input("forecasts cover different labels or days".into()));
        }
    }
    Ok(first)
}

pub fn summarize_percentiles(forecasts: &[CensusSeries], levels: &[f64]) -> Result<ForecastSummary> {
    let first = check_aligned(forecasts)?;
    if let Some(l) = levels.iter().find(|l| !(0.0..=100.0).contains(*l)) {
        return Err(AcedError::Input(format!("percentile level {l} outside [0, 100]")));
    }
    let n = forecasts.len() as f64;
    let mut mean = Vec::new();
    let mut percentiles = Vec::new();
    for k in 0..first.num_labels() {
        let mut m = vec![0.0; first.len()];
        let mut per_level = vec![vec![0.0; first.len()]; levels.len()];
        let mut column = vec![0.0; forecasts.len()];
        for t in 0..first.len() {
            for (c, f) in column.iter_mut().zip(forecasts) {
                *c = f.column(k)[t];
            }
            m[t] = column.iter().sum::<f64>() / n;
            column.sort_by(f64::total_cmp);
            for (j, &lvl) in levels.iter().enumerate() {
                per_level[j][t] = percentile_sorted(&column, lvl);
            }
        }
        mean.push(m);
        percentiles.push(per_level);
    }
    Ok(ForecastSummary {
        start_day: first.start_day(),
        levels: levels.to_vec(),
        labels: first.labels().to_vec(),
        mean,
        percentiles,
    })
}

/// Mean absolute error between a point forecast and the truth.
pub fn mae(mean_forecast: &[f64], truth: &[f64]) -> Result<f64> {
    if mean_forecast.len() != truth.len() {
        return Err(AcedError::Input(format!(
            "forecast has {} days but truth has {}",
            mean_forecast.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Err(AcedError::Input("no days to evaluate".into()));
    }
    Ok(mean_forecast.iter().zip(truth).map(|(f, y)| (f - y).abs()).sum::<f64>() / truth.len() as f64)
}

/// MAE of the ensemble mean forecast for every label of `truth`.
pub fn mae_by_label(forecasts: &[CensusSeries], truth: &CensusSeries) -> Result<Vec<(String, f64)>> {
    let mean = summarize_percentiles(forecasts, &[])?.mean_series()?;
    truth
        .iter()
        .map(|(label, y)| {
            let f = mean
                .get(label)
                .ok_or_else(|| AcedError::Input(format!("forecast is missing label `{label}`")))?;
            Ok((label.to_string(), mae(f, y)?))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaeStats {
    pub label: String,
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaeReport {
    pub batch_size: usize,
    pub n_batches: usize,
    pub with_replacement: bool,
    pub labels: Vec<MaeStats>,
}

impl MaeReport {
    pub fn get(&self, label: &str) -> Option<&MaeStats> {
        self.labels.iter().find(|s| s.label == label)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["label", "mae", "p2.5", "p97.5"])?;
        for s in &self.labels {
            w.write_record([s.label.clone(), s.mean.to_string(), s.lower.to_string(), s.upper.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Settings for [`mae_with_batches`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchSpec {
    pub batch_size: usize,
    pub n_batches: usize,
}

impl Default for BatchSpec {
    fn default() -> Self {
        Self {
            batch_size: 100,
            n_batches: 100,
        }
    }
}

/// Repeated MAE of the mean of `batch_size` fresh forecasts, evaluated on the
/// days covered by `truth`.
///
/// Batches are disjoint when the pool holds `batch_size * n_batches` samples
/// and drawn with replacement otherwise.
pub fn mae_with_batches(
    samples: &[ModelParams],
    input: &SimulationInput,
    mapping: &[(String, StageSet)],
    truth: &CensusSeries,
    spec: BatchSpec,
    seed: u64,
) -> Result<MaeReport> {
    if samples.is_empty() {
        return Err(AcedError::Input("no posterior samples to evaluate".into()));
    }
    if spec.batch_size == 0 || spec.n_batches == 0 {
        return Err(AcedError::Input("batch size and batch count must be positive".into()));
    }
    let first = truth.start_day();
    let last = first + truth.len() as i64 - 1;
    let with_replacement = samples.len() < spec.batch_size * spec.n_batches;

    let mut rng = substream(seed, u64::MAX);
    let batches: Vec<Vec<usize>> = if with_replacement {
        (0..spec.n_batches)
            .map(|_| (0..spec.batch_size).map(|_| rng.random_range(0..samples.len())).collect())
            .collect()
    } else {
        let mut idx: Vec<usize> = (0..samples.len()).collect();
        idx.shuffle(&mut rng);
        idx.chunks(spec.batch_size).take(spec.n_batches).map(<[usize]>::to_vec).collect()
    };

    let per_batch: Vec<Vec<(String, f64)>> = batches
        .iter()
        .enumerate()
        .map(|(b, idx)| {
            let chosen: Vec<ModelParams> = idx.iter().map(|&i| samples[i].clone()).collect();
            let batch_seed = seed.wrapping_add((b as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15));
            let fc = forecast_counts(&chosen, input, Some(mapping), ForecastHooks::default(), batch_seed)?;
            let fc = forecast_window(&fc, first, last)?;
            mae_by_label(&fc, truth)
        })
        .collect::<Result<_>>()?;

    let labels = truth
        .labels()
        .iter()
        .enumerate()
        .map(|(k, label)| {
            let mut v: Vec<f64> = per_batch.iter().map(|b| b[k].1).collect();
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            v.sort_by(f64::total_cmp);
            MaeStats {
                label: label.clone(),
                mean,
                lower: percentile_sorted(&v, 2.5).min(mean),
                upper: percentile_sorted(&v, 97.5).max(mean),
            }
        })
        .collect();
    Ok(MaeReport {
        batch_size: spec.batch_size,
        n_batches: spec.n_batches,
        with_replacement,
        labels,
    })
}

fn coverage_counts(forecasts: &[CensusSeries], truth: &CensusSeries, target_pct: f64) -> Result<Vec<(String, usize, usize)>> {
    if !(0.0..=100.0).contains(&target_pct) {
        return Err(AcedError::Input(format!("coverage target {target_pct} outside [0, 100]")));
    }
    let lo = (100.0 - target_pct) / 2.0;
    let hi = 100.0 - lo;
    let summary = summarize_percentiles(forecasts, &[lo, hi])?;
    if summary.len() != truth.len() || summary.start_day != truth.start_day() {
        return Err(AcedError::Input("forecasts and truth cover different days".into()));
    }
    truth
        .iter()
        .map(|(label, y)| {
            let k = summary
                .labels
                .iter()
                .position(|l| l == label)
                .ok_or_else(|| AcedError::Input(format!("forecast is missing label `{label}`")))?;
            let (low, high) = (&summary.percentiles[k][0], &summary.percentiles[k][1]);
            let inside = (0..y.len()).filter(|&t| low[t] <= y[t] && y[t] <= high[t]).count();
            Ok((label.to_string(), inside, y.len()))
        })
        .collect()
}

/// Percentage of truth values inside the central `target_pct` interval,
/// pooled over labels and days.
pub fn coverage(forecasts: &[CensusSeries], truth: &CensusSeries, target_pct: f64) -> Result<f64> {
    let counts = coverage_counts(forecasts, truth, target_pct)?;
    let inside: usize = counts.iter().map(|c| c.1).sum();
    let total: usize = counts.iter().map(|c| c.2).sum();
    if total == 0 {
        return Err(AcedError::Input("no days to evaluate".into()));
    }
    Ok(100.0 * inside as f64 / total as f64)
}

pub fn coverage_by_label(forecasts: &[CensusSeries], truth: &CensusSeries, target_pct: f64) -> Result<Vec<(String, f64)>> {
    Ok(coverage_counts(forecasts, truth, target_pct)?
        .into_iter()
        .map(|(l, inside, total)| (l, 100.0 * inside as f64 / total.max(1) as f64))
        .collect())
}
