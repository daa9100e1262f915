//! Command-line front end.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::abc::{ensemble, run_chains, AbcSetup};
use crate::baselines::{bayes_lr_forecast, median_forecast, LrFeatureMode};
use crate::data::{
    load_counts_csv, parse_config, parse_date, read_samples_file, write_chain_diagnostics, write_dataset_file,
    write_forecast_file, write_json, write_samples_file, Dataset, RunConfig,
};
use crate::error::{AcedError, Result};
use crate::forecast::{
    coverage_by_label, forecast_counts, forecast_window, mae, mae_by_label, mae_with_batches, summarize_percentiles,
    ForecastHooks, ForecastSummary, MaeReport, DEFAULT_LEVELS,
};
use crate::model::{
    simulate_census, CensusSeries, ModelParams, ParamId, SimulationInput, Stage, StageSet,
};
use crate::priors::prior_center;
use crate::rng::substream;

pub const EXIT_OTHER: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_CONVERGENCE: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "aced-hmm", version, about = "Simulate, fit and forecast hospital census counts")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct Common {
    /// TOML run configuration; every key is optional.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Short burn-in and few samples, for smoke tests.
    #[arg(long)]
    pub fast: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset from known parameters.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Scales admissions and the initial population.
        #[arg(long)]
        multiplier: Option<u32>,
    },
    /// Fit the posterior with ensembled ABC chains.
    Fit {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Posterior predictive bands over every day of the dataset.
    Forecast {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        samples: PathBuf,
    },
    /// Test-period MAE, coverage and baseline comparison.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        samples: PathBuf,
    },
    /// Baseline and intervention forecasts side by side.
    Whatif {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        samples: PathBuf,
    },
}

pub fn exit_code(e: &AcedError) -> i32 {
    match e {
        AcedError::Config { .. } => EXIT_CONFIG,
        AcedError::Data { .. } | AcedError::Csv(_) => EXIT_DATA,
        AcedError::Convergence(_) => EXIT_CONVERGENCE,
        _ => EXIT_OTHER,
    }
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let cfg = match &common.config {
        Some(p) => parse_config(p)?,
        None => RunConfig::default(),
    };
    Ok(if common.fast { cfg.fast() } else { cfg })
}

/// Loads the dataset named on the command line or in the config and applies
/// the configured split and smoothing.
pub fn load_dataset(cfg: &RunConfig, path: Option<&Path>) -> Result<Dataset> {
    let path = path
        .map(Path::to_path_buf)
        .or_else(|| cfg.data.path.clone())
        .ok_or_else(|| AcedError::config("data.path", "no dataset given (use --dataset or data.path)"))?;
    let mut ds = load_counts_csv(&path, &cfg.data.column_map())?;
    if let Some(t) = cfg.data.train_days {
        if t == 0 || t > ds.last_day() {
            return Err(AcedError::config(
                "data.train_days",
                format!("must lie in 1..={} for this dataset", ds.last_day()),
            ));
        }
        ds = ds.with_train_end(t)?;
    }
    if ds.train_end_index == 0 {
        return Err(AcedError::data(&path, None, "the dataset has no training days after day 0"));
    }
    if !cfg.data.smooth.is_empty() {
        ds.smooth(&cfg.data.smooth, cfg.data.smooth_window)?;
    }
    Ok(ds)
}

/// Everything a chain needs for this dataset and config.
pub fn build_setup(cfg: &RunConfig, ds: &Dataset) -> Result<AbcSetup> {
    let observed = ds.training_observed()?;
    let setup = AbcSetup {
        weights: cfg.distance.resolve(observed.labels())?,
        observed,
        simulation: ds.simulation_input(ds.train_end_index, cfg.data.init_counts, cfg.model.scale)?,
        mapping: ds.stage_mapping.clone(),
        priors: cfg.prior_spec()?,
        proposals: cfg.proposal_spec(),
        schedule: cfg.epsilon_schedule()?,
        record_events: true,
    };
    setup.validate()?;
    Ok(setup)
}

/// Parameters for synthetic data: prior centre with named overrides.
pub fn truth_params(cfg: &RunConfig) -> Result<ModelParams> {
    let mut p = prior_center(&cfg.prior_spec()?);
    for (name, v) in &cfg.simulate.params {
        let id = ParamId::from_name(name)
            .ok_or_else(|| AcedError::config("simulate.params", format!("unknown parameter `{name}`")))?;
        p.set(id, *v);
    }
    p.validate().map_err(|e| AcedError::config("simulate.params", e.to_string()))?;
    Ok(p)
}

fn all_stages() -> Vec<(String, StageSet)> {
    Stage::ALL.iter().map(|s| (s.to_string(), StageSet::single(*s))).collect()
}

pub fn cmd_simulate(cfg: &RunConfig, out: &Path, multiplier: Option<u32>, seed: u64) -> Result<Dataset> {
    let m = multiplier.unwrap_or(cfg.simulate.multiplier);
    if !matches!(m, 1 | 3 | 6 | 9) {
        log::warn!("admissions multiplier {m} is outside the usual 1, 3, 6, 9 regimes");
    }
    if m == 0 {
        return Err(AcedError::config("simulate.multiplier", "must be at least 1"));
    }
    let truth = truth_params(cfg)?;
    let sim = &cfg.simulate;
    if sim.admissions.is_empty() {
        return Err(AcedError::config("simulate.admissions", "no admissions to simulate"));
    }
    let admissions: Vec<i64> = sim.admissions.iter().map(|a| a * m as i64).collect();
    let init = crate::model::InitCounts {
        g: sim.init_counts.g * m as f64,
        i: sim.init_counts.i * m as f64,
        v: sim.init_counts.v * m as f64,
    };
    let input = SimulationInput::new(admissions.clone(), init, cfg.model.scale);
    let counts = simulate_census(&truth, &input, &mut substream(seed, 0), None, None)?;

    let day0 = parse_date(&sim.start_date)
        .ok_or_else(|| AcedError::config("simulate.start_date", "must be a YYYY-MM-DD date"))?;
    let dates: Vec<NaiveDate> = (0..=admissions.len() as u64)
        .map(|d| day0 + chrono::Days::new(d))
        .collect();
    let columns = Stage::ALL
        .iter()
        .map(|s| {
            let mut v = vec![init.get(*s)];
            v.extend_from_slice(counts.get(s.as_str()).expect("stage column"));
            (s.to_string(), v)
        })
        .collect();
    let observed = CensusSeries::new(0, columns)?;
    let mut adm = vec![0];
    adm.extend(admissions);
    let last = dates.len() - 1;
    let ds = Dataset::new(dates, adm, observed, last, all_stages())?;
    let ds = match sim.train_days {
        Some(t) if t <= last => ds.with_train_end(t)?,
        _ => ds,
    };

    write_dataset_file(out.join("counts.csv"), &ds)?;
    write_samples_file(out.join("truth.csv"), std::slice::from_ref(&truth))?;
    write_json(out.join("truth.json"), &truth)?;
    Ok(ds)
}

#[derive(Debug, Serialize)]
struct FitSummary {
    chains: usize,
    samples: usize,
    kept_eps_limit: f64,
    final_eps: Vec<f64>,
    final_distance: Vec<f64>,
}

pub fn cmd_fit(cfg: &RunConfig, ds: &Dataset, out: &Path, seed: u64) -> Result<Vec<ModelParams>> {
    let setup = build_setup(cfg, ds)?;
    let c = cfg.chains;
    log::info!(
        "fitting {} chains on days 1..={} ({} burn-in sweeps, {} samples each)",
        c.n_chains,
        ds.train_end_index,
        setup.schedule.burn_in_sweeps,
        c.samples_per_chain
    );
    let chains = run_chains(&setup, c.n_chains, c.samples_per_chain, c.thin, seed)?;
    let best = chains.iter().map(|r| r.final_eps).fold(f64::INFINITY, f64::min);
    let limit = best + c.max_eps_spread;
    write_chain_diagnostics(out.join("diagnostics"), &chains, limit)?;
    let pooled = ensemble(&chains, c.max_eps_spread)?;
    write_samples_file(out.join("samples.csv"), &pooled)?;
    write_json(
        out.join("fit_summary.json"),
        &FitSummary {
            chains: chains.len(),
            samples: pooled.len(),
            kept_eps_limit: limit,
            final_eps: chains.iter().map(|r| r.final_eps).collect(),
            final_distance: chains.iter().map(|r| r.final_distance).collect(),
        },
    )?;
    Ok(pooled)
}

fn levels(cfg: &RunConfig) -> Vec<f64> {
    if cfg.evaluation.levels.is_empty() {
        DEFAULT_LEVELS.to_vec()
    } else {
        cfg.evaluation.levels.clone()
    }
}

fn full_forecasts(
    cfg: &RunConfig,
    ds: &Dataset,
    samples: &[ModelParams],
    hooks: ForecastHooks<'_>,
    seed: u64,
) -> Result<Vec<CensusSeries>> {
    let input = ds.simulation_input(ds.last_day(), cfg.data.init_counts, cfg.model.scale)?;
    forecast_counts(samples, &input, Some(&ds.stage_mapping), hooks, seed)
}

pub fn cmd_forecast(cfg: &RunConfig, ds: &Dataset, samples: &[ModelParams], out: &Path, seed: u64) -> Result<ForecastSummary> {
    let fc = full_forecasts(cfg, ds, samples, ForecastHooks::default(), seed)?;
    let summary = summarize_percentiles(&fc, &levels(cfg))?;
    write_forecast_file(out.join("forecast.csv"), &summary, ds.day_one())?;
    write_json(out.join("forecast.json"), &summary)?;
    Ok(summary)
}

#[derive(Debug, Serialize)]
pub struct CoverageRow {
    pub label: String,
    pub target: f64,
    pub observed: f64,
}

#[derive(Debug, Serialize)]
pub struct BaselineRow {
    pub method: String,
    pub label: String,
    pub mae: f64,
}

#[derive(Debug, Serialize)]
pub struct Evaluation {
    pub train_days: usize,
    pub test_days: usize,
    pub training_mae: Vec<(String, f64)>,
    pub test_mae: MaeReport,
    pub coverage: Vec<CoverageRow>,
    pub baselines: Vec<BaselineRow>,
}

pub fn cmd_evaluate(cfg: &RunConfig, ds: &Dataset, samples: &[ModelParams], out: &Path, seed: u64) -> Result<Evaluation> {
    let t = ds.train_end_index;
    let last = ds.last_day();
    if last <= t {
        return Err(AcedError::config(
            "data.train_days",
            "evaluation needs test days after the training period",
        ));
    }
    let fc = full_forecasts(cfg, ds, samples, ForecastHooks::default(), seed)?;
    let train_fc = forecast_window(&fc, 1, t as i64)?;
    let test_fc = forecast_window(&fc, t as i64 + 1, last as i64)?;
    let truth = ds.test_observed()?;

    let training_mae = mae_by_label(&train_fc, &ds.training_observed()?)?;
    let input = ds.simulation_input(last, cfg.data.init_counts, cfg.model.scale)?;
    let test_mae = mae_with_batches(samples, &input, &ds.stage_mapping, &truth, cfg.evaluation.batches(), seed)?;

    let mut coverage = Vec::new();
    for &target in &cfg.evaluation.coverage_targets {
        for (label, observed) in coverage_by_label(&test_fc, &truth, target)? {
            coverage.push(CoverageRow { label, target, observed });
        }
    }

    let mut baselines = Vec::new();
    let train = ds.training_observed()?;
    let horizon = last - t;
    for (label, y_train) in train.iter() {
        let y_test = truth.get(label).expect("same labels");
        baselines.push(BaselineRow {
            method: "median".into(),
            label: label.into(),
            mae: mae(&median_forecast(y_train, horizon)?, y_test)?,
        });
        for (name, mode) in [
            ("bayes_lr_day", LrFeatureMode::DayOnly),
            ("bayes_lr_day_admissions", LrFeatureMode::DayPlusAdmissions21),
        ] {
            let mut rng = substream(seed, 1 << 32);
            let draws = bayes_lr_forecast(y_train, &ds.admissions, mode, horizon, 200, &mut rng)?;
            let mean: Vec<f64> = (0..horizon)
                .map(|h| draws.iter().map(|d| d[h]).sum::<f64>() / draws.len() as f64)
                .collect();
            baselines.push(BaselineRow {
                method: name.into(),
                label: label.into(),
                mae: mae(&mean, y_test)?,
            });
        }
    }

    test_mae.write_csv(std::fs::File::create(out.join("mae.csv"))?)?;
    let mut w = csv::Writer::from_path(out.join("coverage.csv"))?;
    for row in &coverage {
        w.serialize(row)?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(out.join("baselines.csv"))?;
    for row in &baselines {
        w.serialize(row)?;
    }
    w.flush()?;
    let eval = Evaluation {
        train_days: t,
        test_days: horizon,
        training_mae,
        test_mae,
        coverage,
        baselines,
    };
    write_json(out.join("evaluation.json"), &eval)?;
    Ok(eval)
}

pub fn cmd_whatif(
    cfg: &RunConfig,
    ds: &Dataset,
    samples: &[ModelParams],
    out: &Path,
    seed: u64,
) -> Result<(ForecastSummary, ForecastSummary)> {
    let w = &cfg.whatif;
    if w.admissions.is_none() && w.recovery.is_none() {
        log::warn!("no intervention configured; both forecasts use the same dynamics");
    }
    let hooks = ForecastHooks {
        duration: w.recovery.as_ref().map(|p| p as &dyn crate::model::DurationHook),
        admissions: w.admissions.as_ref().map(|s| s as &dyn crate::model::AdmissionsHook),
    };
    let lv = levels(cfg);
    let base = summarize_percentiles(&full_forecasts(cfg, ds, samples, ForecastHooks::default(), seed)?, &lv)?;
    let alt = summarize_percentiles(&full_forecasts(cfg, ds, samples, hooks, seed)?, &lv)?;
    write_forecast_file(out.join("baseline_forecast.csv"), &base, ds.day_one())?;
    write_forecast_file(out.join("whatif_forecast.csv"), &alt, ds.day_one())?;

    let mut wtr = csv::Writer::from_path(out.join("difference.csv"))?;
    wtr.write_record(["date", "label", "baseline_mean", "whatif_mean", "difference"])?;
    for (k, label) in base.labels.iter().enumerate() {
        for t in 0..base.len() {
            let day = base.start_day + t as i64;
            let (b, a) = (base.mean[k][t], alt.mean[k][t]);
            wtr.write_record([
                crate::forecast::format_day(day, ds.day_one()),
                label.clone(),
                b.to_string(),
                a.to_string(),
                (a - b).to_string(),
            ])?;
        }
    }
    wtr.flush()?;
    Ok((base, alt))
}

fn read_samples_for(cfg: &RunConfig, path: &Path) -> Result<Vec<ModelParams>> {
    let samples = read_samples_file(path, cfg.model.max_duration)?;
    if samples.is_empty() {
        return Err(AcedError::data(path, None, "no posterior samples"));
    }
    Ok(samples)
}

pub fn execute(cli: Cli) -> Result<()> {
    let common = match &cli.command {
        Command::Simulate { common, .. }
        | Command::Fit { common, .. }
        | Command::Forecast { common, .. }
        | Command::Evaluate { common, .. }
        | Command::Whatif { common, .. } => common.clone(),
    };
    if let Some(n) = common.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    let cfg = load_config(&common)?;
    std::fs::create_dir_all(&common.out)?;
    let out = common.out.as_path();
    match &cli.command {
        Command::Simulate { multiplier, .. } => {
            cmd_simulate(&cfg, out, *multiplier, common.seed)?;
        }
        Command::Fit { dataset, .. } => {
            let ds = load_dataset(&cfg, dataset.as_deref())?;
            cmd_fit(&cfg, &ds, out, common.seed)?;
        }
        Command::Forecast { dataset, samples, .. } => {
            let ds = load_dataset(&cfg, dataset.as_deref())?;
            cmd_forecast(&cfg, &ds, &read_samples_for(&cfg, samples)?, out, common.seed)?;
        }
        Command::Evaluate { dataset, samples, .. } => {
            let ds = load_dataset(&cfg, dataset.as_deref())?;
            cmd_evaluate(&cfg, &ds, &read_samples_for(&cfg, samples)?, out, common.seed)?;
        }
        Command::Whatif { dataset, samples, .. } => {
            let ds = load_dataset(&cfg, dataset.as_deref())?;
            cmd_whatif(&cfg, &ds, &read_samples_for(&cfg, samples)?, out, common.seed)?;
        }
    }
    Ok(())
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
