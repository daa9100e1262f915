use std::fs::{self, File};
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::Serialize;

use super::{parse_date, Dataset, DATE_FORMAT};
use crate::abc::{ChainDiagnostics, ChainResult, Phase};
use crate::error::{AcedError, Result};
use crate::forecast::ForecastSummary;
use crate::model::{ModelParams, ParamId};

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

pub fn param_header() -> Vec<String> {
    ParamId::ALL.iter().map(|id| id.name()).collect()
}

/// One row per sample, one column per parameter.
pub fn write_samples<W: Write>(out: W, samples: &[ModelParams]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(param_header())?;
    for s in samples {
        w.write_record(s.to_vec().iter().map(f64::to_string))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_samples_file(path: impl AsRef<Path>, samples: &[ModelParams]) -> Result<()> {
    write_samples(create(path.as_ref())?, samples)
}

pub fn read_samples<R: Read>(input: R, path: &Path, max_duration: u32) -> Result<Vec<ModelParams>> {
    let mut rdr = csv::Reader::from_reader(input);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let order: Vec<usize> = param_header()
        .iter()
        .map(|name| {
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| AcedError::data(path, None, format!("missing column `{name}`")))
        })
        .collect::<Result<_>>()?;
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let row = record.position().map(|p| p.line() as usize);
        let values = order
            .iter()
            .map(|&i| {
                let s = record.get(i).unwrap_or("");
                s.parse::<f64>()
                    .map_err(|_| AcedError::data(path, row, format!("`{s}` in column `{}` is not a number", header[i])))
            })
            .collect::<Result<Vec<f64>>>()?;
        let p = ModelParams::from_slice(&values, max_duration).map_err(|e| AcedError::data(path, row, e.to_string()))?;
        out.push(p);
    }
    Ok(out)
}

pub fn read_samples_file(path: impl AsRef<Path>, max_duration: u32) -> Result<Vec<ModelParams>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| AcedError::data(path, None, e.to_string()))?;
    read_samples(file, path, max_duration)
}

/// Writes a dataset in the format [`super::load_counts_csv`] reads.
pub fn write_dataset<W: Write>(out: W, ds: &Dataset) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["date".to_string(), "admissions".to_string()];
    header.extend(ds.observed.labels().iter().cloned());
    w.write_record(&header)?;
    for (t, date) in ds.dates.iter().enumerate() {
        let mut row = vec![date.format(DATE_FORMAT).to_string(), ds.admissions[t].to_string()];
        row.extend((0..ds.observed.num_labels()).map(|k| ds.observed.column(k)[t].to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_dataset_file(path: impl AsRef<Path>, ds: &Dataset) -> Result<()> {
    write_dataset(create(path.as_ref())?, ds)
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut f = create(path.as_ref())?;
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(())
}

pub fn write_forecast_file(path: impl AsRef<Path>, summary: &ForecastSummary, day_one: Option<NaiveDate>) -> Result<()> {
    summary.write_csv(create(path.as_ref())?, day_one)
}

/// Reads a forecast summary written by [`ForecastSummary::write_csv`]. Dates
/// are converted back to day indices relative to `day_one`.
pub fn read_forecast<R: Read>(input: R, path: &Path, day_one: Option<NaiveDate>) -> Result<ForecastSummary> {
    let mut rdr = csv::Reader::from_reader(input);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header.len() < 3 || header[0] != "date" || header[1] != "label" || header[2] != "mean" {
        return Err(AcedError::data(path, Some(1), "expected columns date, label, mean, p..."));
    }
    let levels = header[3..]
        .iter()
        .map(|h| {
            h.strip_prefix('p')
                .and_then(|v| v.parse::<f64>().ok())
                .ok_or_else(|| AcedError::data(path, Some(1), format!("bad percentile column `{h}`")))
        })
        .collect::<Result<Vec<f64>>>()?;

    let mut labels: Vec<String> = Vec::new();
    let mut days: Vec<i64> = Vec::new();
    let mut mean: Vec<Vec<f64>> = Vec::new();
    let mut percentiles: Vec<Vec<Vec<f64>>> = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let row = record.position().map(|p| p.line() as usize);
        let bad = |msg: String| AcedError::data(path, row, msg);
        let day = match (day_one, parse_date(&record[0])) {
            (Some(d1), Some(date)) => (date - d1).num_days() + 1,
            _ => record[0]
                .parse::<i64>()
                .map_err(|_| bad(format!("`{}` is neither a date nor a day index", &record[0])))?,
        };
        let label = record[1].to_string();
        let k = match labels.iter().position(|l| *l == label) {
            Some(k) => k,
            None => {
                labels.push(label);
                mean.push(Vec::new());
                percentiles.push(vec![Vec::new(); levels.len()]);
                labels.len() - 1
            }
        };
        if k == 0 {
            days.push(day);
        } else if days.get(mean[k].len()) != Some(&day) {
            return Err(bad("labels cover different days".into()));
        }
        let num = |i: usize| {
            record[i]
                .parse::<f64>()
                .map_err(|_| bad(format!("`{}` is not a number", &record[i])))
        };
        mean[k].push(num(2)?);
        for j in 0..levels.len() {
            percentiles[k][j].push(num(3 + j)?);
        }
    }
    if days.windows(2).any(|w| w[1] != w[0] + 1) {
        return Err(AcedError::data(path, None, "days are not consecutive"));
    }
    if mean.iter().any(|m| m.len() != days.len()) {
        return Err(AcedError::data(path, None, "labels cover different days"));
    }
    Ok(ForecastSummary {
        start_day: days.first().copied().unwrap_or(1),
        levels,
        labels,
        mean,
        percentiles,
    })
}

fn phase_name(p: Phase) -> &'static str {
    match p {
        Phase::BurnIn => "burn_in",
        Phase::Sampling => "sampling",
    }
}

/// Proposals that passed the tolerance check, in proposal order.
pub fn write_events<W: Write>(out: W, diag: &ChainDiagnostics) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["iteration", "sweep", "param", "phase", "eps", "distance", "accepted"])?;
    for e in &diag.events {
        w.write_record([
            e.iteration.to_string(),
            e.sweep.to_string(),
            e.param.clone(),
            phase_name(e.phase).to_string(),
            e.eps.to_string(),
            e.distance.to_string(),
            e.accepted.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Tolerance and last accepted distance after every sweep.
pub fn write_sweeps<W: Write>(out: W, diag: &ChainDiagnostics) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["sweep", "phase", "eps", "d_best", "accepted"])?;
    for s in &diag.sweeps {
        w.write_record([
            s.sweep.to_string(),
            phase_name(s.phase).to_string(),
            s.eps.to_string(),
            s.d_best.to_string(),
            s.accepted.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Per-chain event and sweep traces, per-parameter acceptance counts and a
/// chain summary under `dir`.
pub fn write_chain_diagnostics(dir: impl AsRef<Path>, chains: &[ChainResult], kept_eps: f64) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut acc = csv::Writer::from_writer(create(&dir.join("acceptance.csv"))?);
    acc.write_record(["chain", "param", "proposed", "passed_tolerance", "accepted", "rate"])?;
    let mut summary = csv::Writer::from_writer(create(&dir.join("chains.csv"))?);
    summary.write_record([
        "chain",
        "seed",
        "final_eps",
        "best_burn_in_eps",
        "burn_in_distance",
        "final_distance",
        "samples",
        "kept",
    ])?;
    for (i, c) in chains.iter().enumerate() {
        write_events(create(&dir.join(format!("chain_{i:02}_events.csv")))?, &c.diagnostics)?;
        write_sweeps(create(&dir.join(format!("chain_{i:02}_sweeps.csv")))?, &c.diagnostics)?;
        for (id, a) in ParamId::ALL.iter().zip(&c.diagnostics.acceptance) {
            let rate = if a.proposed > 0 {
                a.accepted as f64 / a.proposed as f64
            } else {
                0.0
            };
            acc.write_record([
                i.to_string(),
                id.name(),
                a.proposed.to_string(),
                a.passed_tolerance.to_string(),
                a.accepted.to_string(),
                rate.to_string(),
            ])?;
        }
        summary.write_record([
            i.to_string(),
            c.seed.to_string(),
            c.final_eps.to_string(),
            c.best_burn_in_eps.to_string(),
            c.burn_in_distance.to_string(),
            c.final_distance.to_string(),
            c.samples.len().to_string(),
            (c.final_eps <= kept_eps).to_string(),
        ])?;
    }
    acc.flush()?;
    summary.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forecast::{summarize_percentiles, DEFAULT_LEVELS};
    use crate::model::CensusSeries;
    use crate::priors::{sample_prior, PriorSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn samples_round_trip_exactly() {
        let spec = PriorSpec::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let samples: Vec<ModelParams> = (0..2000).map(|_| sample_prior(&spec, &mut rng)).collect();
        let mut buf = Vec::new();
        write_samples(&mut buf, &samples).unwrap();
        let back = read_samples(buf.as_slice(), Path::new("mem"), 22).unwrap();
        assert_eq!(back.len(), 2000);
        for (a, b) in samples.iter().zip(&back) {
            let (va, vb) = (a.to_vec(), b.to_vec());
            assert!(va.iter().zip(&vb).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn empty_samples_are_header_only() {
        let mut buf = Vec::new();
        write_samples(&mut buf, &[]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert_eq!(text.trim_end().split(',').count(), 17);
        assert!(text.starts_with("rho_G,rho_I,rho_V,d_G,d_I,lambda_G0,nu_G0,"));
        assert!(read_samples(text.as_bytes(), Path::new("mem"), 22).unwrap().is_empty());
    }

    #[test]
    fn forecast_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let fc: Vec<CensusSeries> = (0..50)
            .map(|_| {
                use rand::Rng;
                let g: Vec<f64> = (0..6).map(|_| rng.random_range(0..100) as f64).collect();
                let t: Vec<f64> = (0..6).map(|_| rng.random_range(0..5) as f64 / 3.0).collect();
                CensusSeries::new(8, vec![("G".into(), g), ("T".into(), t)]).unwrap()
            })
            .collect();
        let s = summarize_percentiles(&fc, &DEFAULT_LEVELS).unwrap();
        let d1 = NaiveDate::from_ymd_opt(2021, 1, 1);
        for day_one in [d1, None] {
            let mut buf = Vec::new();
            s.write_csv(&mut buf, day_one).unwrap();
            let back = read_forecast(buf.as_slice(), Path::new("mem"), day_one).unwrap();
            assert_eq!(back, s);
        }
    }

    #[test]
    fn dataset_round_trip() {
        let text = "date,admissions,G,T\n2020-11-01,5,40.5,0\n2020-11-02,6,41,1\n";
        let ds = super::super::load_counts_reader(text.as_bytes(), Path::new("mem"), &Default::default()).unwrap();
        let mut buf = Vec::new();
        write_dataset(&mut buf, &ds).unwrap();
        let back = super::super::load_counts_reader(buf.as_slice(), Path::new("mem"), &Default::default()).unwrap();
        assert_eq!(back, ds);
    }
}
