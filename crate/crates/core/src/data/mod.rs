//! Count files, preprocessing, run configuration and output files.

mod config;
mod output;

pub use config::*;
pub use output::*;

use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{AcedError, Result};
use crate::model::{CensusSeries, InitCounts, SimulationInput, Stage, StageSet};

pub const DATE_FORMAT: &str = "%Y-%m-%d";

/// An observed label computed from raw CSV columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelColumn {
    pub label: String,
    /// Sum and difference of raw columns, e.g. `hospitalized - icu`.
    /// Defaults to the column named like the label.
    #[serde(default)]
    pub expr: Option<String>,
    /// Simulated stages summed for this label. Defaults to the label itself.
    #[serde(default)]
    pub stages: Option<StageSet>,
}

impl LabelColumn {
    pub fn plain(label: &str) -> Self {
        Self {
            label: label.to_string(),
            expr: None,
            stages: None,
        }
    }

    pub fn stage_set(&self) -> Result<StageSet> {
        match &self.stages {
            Some(s) => Ok(s.clone()),
            None => self.label.parse().map_err(|_| {
                AcedError::config(
                    "data.labels",
                    format!("label `{}` is not a stage label; give its stages explicitly", self.label),
                )
            }),
        }
    }
}

/// How CSV columns become a [`Dataset`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ColumnMap {
    pub date_column: String,
    pub admissions_column: String,
    /// Empty means every other column whose name is a stage label.
    pub labels: Vec<LabelColumn>,
    /// Admissions on row `t` were reported for day `t - 1`; move them back one
    /// day and repeat the last value.
    pub shift_admissions: bool,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            date_column: "date".into(),
            admissions_column: "admissions".into(),
            labels: Vec::new(),
            shift_admissions: false,
        }
    }
}

/// Daily counts on days `0..len`. Day 0 fixes the standing population; days
/// `1..=train_end_index` are for training and the rest for testing.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub dates: Vec<NaiveDate>,
    pub admissions: Vec<i64>,
    pub observed: CensusSeries,
    pub train_end_index: usize,
    pub stage_mapping: Vec<(String, StageSet)>,
}

impl Dataset {
    pub fn new(
        dates: Vec<NaiveDate>,
        admissions: Vec<i64>,
        observed: CensusSeries,
        train_end_index: usize,
        stage_mapping: Vec<(String, StageSet)>,
    ) -> Result<Self> {
        let ds = Self {
            dates,
            admissions,
            observed,
            train_end_index,
            stage_mapping,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dates.len();
        if self.admissions.len() != n || self.observed.len() != n {
            return Err(AcedError::Input("dates, admissions and counts differ in length".into()));
        }
        if self.observed.start_day() != 0 {
            return Err(AcedError::Input("observed counts must start on day 0".into()));
        }
        if n > 0 && self.train_end_index >= n {
            return Err(AcedError::Input(format!(
                "training period ends on day {} but the data covers days 0..={}",
                self.train_end_index,
                n - 1
            )));
        }
        for label in self.observed.labels() {
            if !self.stage_mapping.iter().any(|(l, _)| l == label) {
                return Err(AcedError::Input(format!("no stage mapping for label `{label}`")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    /// Last day with data.
    pub fn last_day(&self) -> usize {
        self.len().saturating_sub(1)
    }

    pub fn test_days(&self) -> usize {
        self.last_day() - self.train_end_index
    }

    /// Calendar date of day 1.
    pub fn day_one(&self) -> Option<NaiveDate> {
        self.dates.get(1).copied().or_else(|| self.dates.first().and_then(|d| d.succ_opt()))
    }

    pub fn with_train_end(mut self, train_end_index: usize) -> Result<Self> {
        self.train_end_index = train_end_index;
        self.validate()?;
        Ok(self)
    }

    /// Counts for days `first..=last`.
    pub fn observed_days(&self, first: usize, last: usize) -> Result<CensusSeries> {
        if first > last || last >= self.len() {
            return Err(AcedError::Input(format!("days {first}..={last} are not in the data")));
        }
        self.observed.slice(first..last + 1)
    }

    pub fn training_observed(&self) -> Result<CensusSeries> {
        self.observed_days(1, self.train_end_index)
    }

    pub fn test_observed(&self) -> Result<CensusSeries> {
        self.observed_days(self.train_end_index + 1, self.last_day())
    }

    /// Standing population on day 0. Aggregate labels are split evenly over
    /// the stages not observed on their own.
    pub fn init_counts(&self) -> InitCounts {
        let mut counts = [None::<f64>; 3];
        let mut mapping: Vec<&(String, StageSet)> = self.stage_mapping.iter().collect();
        mapping.sort_by_key(|(_, s)| s.stages().count());
        for (label, set) in mapping {
            let stages: Vec<Stage> = set.stages().filter(|s| s.is_intermediate()).collect();
            let Some(day0) = self.observed.at(label, 0) else { continue };
            if stages.is_empty() {
                continue;
            }
            let known: f64 = stages.iter().filter_map(|s| counts[s.index()]).sum();
            let open: Vec<Stage> = stages.iter().copied().filter(|s| counts[s.index()].is_none()).collect();
            if open.is_empty() {
                continue;
            }
            let share = (day0 - known).max(0.0) / open.len() as f64;
            for s in open {
                counts[s.index()] = Some(share);
            }
        }
        InitCounts {
            g: counts[0].unwrap_or(0.0),
            i: counts[1].unwrap_or(0.0),
            v: counts[2].unwrap_or(0.0),
        }
    }

    /// Simulator input for days `1..=last_day`.
    pub fn simulation_input(&self, last_day: usize, init: Option<InitCounts>, scale: f64) -> Result<SimulationInput> {
        if last_day >= self.len() {
            return Err(AcedError::Input(format!(
                "admissions are known up to day {} but day {last_day} was requested",
                self.last_day()
            )));
        }
        Ok(SimulationInput::new(
            self.admissions[1..=last_day].to_vec(),
            init.unwrap_or_else(|| self.init_counts()),
            scale,
        ))
    }

    /// Smooths the listed labels in place. Training days never see test
    /// values.
    pub fn smooth(&mut self, labels: &[String], window: usize) -> Result<()> {
        if window % 2 == 0 {
            return Err(AcedError::config("data.smooth_window", format!("must be odd, got {window}")));
        }
        let boundary = self.train_end_index + 1;
        let targets = labels.to_vec();
        for l in &targets {
            if self.observed.get(l).is_none() {
                return Err(AcedError::config("data.smooth", format!("unknown label `{l}`")));
            }
        }
        self.observed = self.observed.map_values(|label, v| {
            if targets.iter().any(|t| t == label) {
                smooth_counts(v, window, Some(boundary))
            } else {
                v.to_vec()
            }
        })?;
        Ok(())
    }
}

/// Centered moving average over `window` points, shrinking at the edges.
///
/// Entries before `train_end` (exclusive) only average entries before it.
pub fn smooth_counts(series: &[f64], window: usize, train_end: Option<usize>) -> Vec<f64> {
    let half = window / 2;
    let n = series.len();
    let boundary = train_end.unwrap_or(n).min(n);
    (0..n)
        .map(|t| {
            let lo = t.saturating_sub(half);
            let mut hi = (t + half).min(n - 1);
            if t < boundary {
                hi = hi.min(boundary - 1);
            }
            let slice = &series[lo..=hi];
            slice.iter().sum::<f64>() / slice.len() as f64
        })
        .collect()
}

enum Op {
    Add,
    Sub,
}

/// Parses `a - b + c` into signed column references. Operators must be
/// separated by whitespace so names like `I+V` stay intact.
fn parse_expr(expr: &str) -> Result<Vec<(Op, String)>> {
    let mut terms = Vec::new();
    let mut sign = Some(Op::Add);
    for tok in expr.split_whitespace() {
        match (tok, sign.take()) {
            ("+", None) => sign = Some(Op::Add),
            ("-", None) => sign = Some(Op::Sub),
            (name, Some(op)) if name != "+" && name != "-" => terms.push((op, name.to_string())),
            _ => return Err(AcedError::config("data.labels.expr", format!("malformed expression `{expr}`"))),
        }
    }
    if sign.is_some() || terms.is_empty() {
        return Err(AcedError::config("data.labels.expr", format!("malformed expression `{expr}`")));
    }
    Ok(terms)
}

pub fn parse_date(s: &str) -> Option<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), DATE_FORMAT).ok()
}

/// Reads `date,admissions,<columns...>` with one row per consecutive day.
///
/// The first row is day 0. `train_end_index` of the result is the last day.
pub fn load_counts_csv(path: impl AsRef<Path>, columns: &ColumnMap) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| AcedError::data(path, None, e.to_string()))?;
    load_counts_reader(file, path, columns)
}

pub fn load_counts_reader<R: Read>(reader: R, path: &Path, columns: &ColumnMap) -> Result<Dataset> {
    let err = |row: Option<usize>, msg: String| AcedError::data(path, row, msg);
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| err(None, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let index: HashMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h.as_str(), i)).collect();
    let col = |name: &str| {
        index
            .get(name)
            .copied()
            .ok_or_else(|| err(None, format!("missing column `{name}`")))
    };
    let date_idx = col(&columns.date_column)?;
    let adm_idx = col(&columns.admissions_column)?;

    let labels: Vec<LabelColumn> = if columns.labels.is_empty() {
        headers
            .iter()
            .enumerate()
            .filter(|(i, h)| *i != date_idx && *i != adm_idx && h.parse::<StageSet>().is_ok())
            .map(|(_, h)| LabelColumn::plain(h))
            .collect()
    } else {
        columns.labels.clone()
    };
    if labels.is_empty() {
        return Err(err(None, "no count columns found".into()));
    }
    let mut plans = Vec::with_capacity(labels.len());
    let mut mapping = Vec::with_capacity(labels.len());
    for l in &labels {
        let expr = l.expr.clone().unwrap_or_else(|| l.label.clone());
        let terms = parse_expr(&expr)?
            .into_iter()
            .map(|(op, name)| Ok((op, col(&name)?)))
            .collect::<Result<Vec<_>>>()?;
        plans.push(terms);
        mapping.push((l.label.clone(), l.stage_set()?));
    }

    let mut dates: Vec<NaiveDate> = Vec::new();
    let mut admissions = Vec::new();
    let mut values: Vec<Vec<f64>> = vec![Vec::new(); labels.len()];
    for record in rdr.records() {
        let record = record.map_err(|e| err(e.position().map(|p| p.line() as usize), e.to_string()))?;
        let row = record.position().map(|p| p.line() as usize);
        let field = |i: usize| -> Result<&str> {
            match record.get(i) {
                Some(s) if !s.is_empty() => Ok(s),
                _ => Err(err(row, format!("missing value in column `{}`", headers[i]))),
            }
        };
        let number = |i: usize| -> Result<f64> {
            let s = field(i)?;
            let v: f64 = s
                .parse()
                .map_err(|_| err(row, format!("`{s}` in column `{}` is not a number", headers[i])))?;
            if !v.is_finite() {
                return Err(err(row, format!("non-finite value in column `{}`", headers[i])));
            }
            Ok(v)
        };

        let date_str = field(date_idx)?;
        let date = parse_date(date_str).ok_or_else(|| err(row, format!("`{date_str}` is not a YYYY-MM-DD date")))?;
        if let Some(prev) = dates.last() {
            if prev.succ_opt() != Some(date) {
                return Err(err(row, format!("date {date} does not follow {prev}; rows must be consecutive days")));
            }
        }
        dates.push(date);

        let a = number(adm_idx)?;
        if a < 0.0 || a.fract() != 0.0 {
            return Err(err(row, format!("admissions must be a non-negative integer, got {a}")));
        }
        admissions.push(a as i64);

        for (k, terms) in plans.iter().enumerate() {
            let mut v = 0.0;
            for (op, i) in terms {
                let x = number(*i)?;
                match op {
                    Op::Add => v += x,
                    Op::Sub => v -= x,
                }
            }
            if v < 0.0 {
                return Err(err(row, format!("negative count {v} for label `{}`", labels[k].label)));
            }
            values[k].push(v);
        }
    }
    if dates.is_empty() {
        return Err(err(None, "no data rows".into()));
    }
    if columns.shift_admissions {
        let last = *admissions.last().expect("non-empty");
        admissions.remove(0);
        admissions.push(last);
    }
    let observed = CensusSeries::new(0, labels.iter().map(|l| l.label.clone()).zip(values).collect())?;
    let end = dates.len() - 1;
    Dataset::new(dates, admissions, observed, end, mapping)
}
