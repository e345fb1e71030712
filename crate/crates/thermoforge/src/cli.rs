//! Command-line pipeline: `sample | train | eval | simulate | calibrate |
//! optimize`, each writing a run directory with a manifest.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::calib::{self, SearchSpace};
use crate::config::AppConfig;
use crate::domain::{Episode, FeatureLayout};
use crate::error::{Error, Result};
use crate::manifest::RunManifest;
use crate::moo::{self, ScheduleProblem};
use crate::nn::{
    load_network, prepare_tensors, save_network, train, FfnWeights, MetamodelWeights, NetLayout,
    NetworkKind,
};
use crate::predict::{report_against, BuildingModel, MetamodelPredictor, PredictScenario};
use crate::sampler::{build_dataset, Dataset};

#[derive(Parser)]
#[command(
    name = "thermoforge",
    version,
    about = "Building thermal surrogate: sample, train, calibrate, optimize"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory for this run's artifacts.
    #[arg(long)]
    out: PathBuf,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Cap the rayon worker pool.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a training dataset from the reference simulator.
    Sample {
        #[command(flatten)]
        common: Common,
    },
    /// Train the surrogate (or the FFN baseline) on a sampled dataset.
    Train {
        #[command(flatten)]
        common: Common,
        /// Dataset directory produced by `sample`.
        #[arg(long)]
        dataset: PathBuf,
        /// Network architecture to train.
        #[arg(long, default_value = "lstm")]
        arch: String,
    },
    /// Print the metric block for a model against a dataset's validation
    /// split, or for a predicted episode against an observed one.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Trained weights (requires --dataset).
        #[arg(long)]
        weights: Option<PathBuf>,
        /// Dataset directory to evaluate on.
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Predicted episode CSV (requires --truth).
        #[arg(long)]
        pred: Option<PathBuf>,
        /// Observed episode CSV.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Simulate the configured scenario building over (a window of) the
    /// weather record.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// First weather hour of the window.
        #[arg(long, default_value_t = 0)]
        start_hour: usize,
        /// Window length; defaults to the rest of the record.
        #[arg(long)]
        hours: Option<usize>,
    },
    /// Estimate building parameters from an observed episode.
    Calibrate {
        #[command(flatten)]
        common: Common,
        /// Trained surrogate weights.
        #[arg(long)]
        weights: PathBuf,
        /// Observed episode CSV (with its JSON sidecar).
        #[arg(long)]
        observed: PathBuf,
        /// Fresh episode for held-out validation.
        #[arg(long)]
        validation: Option<PathBuf>,
    },
    /// Search HVAC schedules for consumption/comfort compromises.
    Optimize {
        #[command(flatten)]
        common: Common,
        /// Trained surrogate weights.
        #[arg(long)]
        weights: PathBuf,
        /// Calibrated parameters from `calibrate`.
        #[arg(long)]
        theta: PathBuf,
        /// Baseline episode: its schedule and weather define the reference.
        #[arg(long)]
        observed: PathBuf,
    },
}

/// Entry point used by `main`; returns the process exit code.
pub fn run() -> i32 {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Sample { common } => cmd_sample(&common),
        Command::Train {
            common,
            dataset,
            arch,
        } => cmd_train(&common, &dataset, &arch),
        Command::Eval {
            common,
            weights,
            dataset,
            pred,
            truth,
        } => cmd_eval(&common, weights, dataset, pred, truth),
        Command::Simulate {
            common,
            start_hour,
            hours,
        } => cmd_simulate(&common, start_hour, hours),
        Command::Calibrate {
            common,
            weights,
            observed,
            validation,
        } => cmd_calibrate(&common, &weights, &observed, validation),
        Command::Optimize {
            common,
            weights,
            theta,
            observed,
        } => cmd_optimize(&common, &weights, &theta, &observed),
    }
}

struct RunContext {
    config: AppConfig,
    seed: u64,
    out: PathBuf,
    manifest: RunManifest,
    started: Instant,
}

impl RunContext {
    fn new(common: &Common, command: &str) -> Result<RunContext> {
        let config = AppConfig::load(&common.config)?;
        let seed = common.seed.unwrap_or(config.seed);
        if let Some(threads) = common.threads {
            // Ignore failure when a global pool already exists (tests).
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build_global();
        }
        std::fs::create_dir_all(&common.out)?;
        let manifest = RunManifest::new(command, seed, &config.digest());
        Ok(RunContext {
            config,
            seed,
            out: common.out.clone(),
            manifest,
            started: Instant::now(),
        })
    }

    fn finish(mut self) -> Result<()> {
        self.manifest.wall_clock_secs = self.started.elapsed().as_secs_f64();
        self.manifest.write(&self.out)?;
        Ok(())
    }
}

fn cmd_sample(common: &Common) -> Result<()> {
    let mut ctx = RunContext::new(common, "sample")?;
    let cfg = &ctx.config;
    let weather = cfg.load_weather()?;
    let normalizer = cfg.build_normalizer()?;
    let layout = FeatureLayout::canonical();

    let dataset = build_dataset(
        cfg.sampling.n_examples,
        cfg.sampling.horizon_hours,
        &weather,
        &cfg.ranges,
        &cfg.geometry,
        &cfg.oracle,
        &normalizer,
        &layout,
        cfg.sampling.split_fraction,
        ctx.seed,
        cfg.scenario.anchor,
    )?;
    let dataset_dir = ctx.out.join("dataset");
    dataset.save(&dataset_dir)?;
    ctx.manifest.add_output("dataset");
    println!(
        "sampled {} episodes of {} h (digest {})",
        dataset.meta.n_examples,
        dataset.meta.horizon,
        &dataset.meta.content_digest[..12]
    );
    ctx.finish()
}

fn cmd_train(common: &Common, dataset_dir: &Path, arch: &str) -> Result<()> {
    let mut ctx = RunContext::new(common, "train")?;
    ctx.manifest.add_input("dataset", dataset_dir)?;
    let cfg = ctx.config.clone();
    let dataset = Dataset::load(dataset_dir)?;
    let layout = FeatureLayout::canonical();
    if dataset.meta.feature_columns != layout.columns() {
        return Err(Error::Schema(
            "dataset feature layout does not match this build".into(),
        ));
    }

    let (features, targets) = prepare_tensors(&dataset, &layout, cfg.training.output_mode)?;
    let train_idx = dataset.train_indices();
    let val_idx = dataset.validation_indices();
    let net_layout = NetLayout {
        input_width: layout.width(),
        d_emb: cfg.training.d_emb,
        n_layers: cfg.training.n_layers,
        n_outputs: crate::nn::output_channels(cfg.training.output_mode),
    };

    let mut init_rng = crate::rng::stage_rng(ctx.seed, crate::rng::Stream::Init);
    let weights_path = ctx.out.join("weights.json");
    let history = match arch {
        "lstm" => {
            let mut net = MetamodelWeights::init(net_layout, &mut init_rng)?;
            let history = train(
                &mut net,
                &features,
                &targets,
                &train_idx,
                &val_idx,
                &cfg.training,
                ctx.seed,
            )?;
            save_network(
                &weights_path,
                NetworkKind::Lstm,
                Some(&net),
                None,
                cfg.training.output_mode,
                layout.columns(),
                &dataset.meta.normalizer,
            )?;
            history
        }
        "ffn" => {
            let mut net = FfnWeights::init(net_layout, &mut init_rng)?;
            let history = train(
                &mut net,
                &features,
                &targets,
                &train_idx,
                &val_idx,
                &cfg.training,
                ctx.seed,
            )?;
            save_network(
                &weights_path,
                NetworkKind::Ffn,
                None,
                Some(&net),
                cfg.training.output_mode,
                layout.columns(),
                &dataset.meta.normalizer,
            )?;
            history
        }
        other => {
            return Err(Error::Config(format!(
                "unknown architecture `{other}` (expected lstm or ffn)"
            )))
        }
    };

    history.to_csv(&ctx.out.join("history.csv"))?;
    ctx.manifest.add_output("weights.json");
    ctx.manifest.add_output("history.csv");
    let last = history.epochs.last().expect("at least one epoch");
    println!(
        "trained {arch}: {} epochs, final train loss {:.3e}, val loss {}",
        history.epochs.len(),
        last.train_loss,
        last.val_loss
            .map_or("n/a".to_string(), |v| format!("{v:.3e}"))
    );
    ctx.finish()
}

fn cmd_eval(
    common: &Common,
    weights: Option<PathBuf>,
    dataset: Option<PathBuf>,
    pred: Option<PathBuf>,
    truth: Option<PathBuf>,
) -> Result<()> {
    let mut ctx = RunContext::new(common, "eval")?;
    let report = match (&weights, &dataset, &pred, &truth) {
        (Some(weights_path), Some(dataset_dir), None, None) => {
            ctx.manifest.add_input("weights", weights_path)?;
            ctx.manifest.add_input("dataset", dataset_dir)?;
            eval_weights_on_dataset(weights_path, dataset_dir)?
        }
        (None, None, Some(pred_path), Some(truth_path)) => {
            ctx.manifest.add_input("pred", pred_path)?;
            ctx.manifest.add_input("truth", truth_path)?;
            eval_episode_pair(&ctx.config, pred_path, truth_path)?
        }
        _ => {
            return Err(Error::Config(
                "eval needs either --weights with --dataset, or --pred with --truth".into(),
            ))
        }
    };
    print!("{}", report.table());
    std::fs::write(
        ctx.out.join("report.json"),
        serde_json::to_vec_pretty(&report)?,
    )?;
    ctx.manifest.add_output("report.json");
    ctx.finish()
}

fn eval_weights_on_dataset(
    weights_path: &Path,
    dataset_dir: &Path,
) -> Result<crate::metrics::EvalReport> {
    let saved = load_network(weights_path)?;
    let dataset = Dataset::load(dataset_dir)?;
    let layout = saved.feature_layout()?;
    let indices = {
        let val = dataset.validation_indices();
        if val.is_empty() {
            dataset.train_indices()
        } else {
            val
        }
    };

    // Mean of per-episode reports over the evaluation split.
    let mut sums: Option<crate::metrics::EvalReport> = None;
    let n = indices.len() as f64;
    for &i in &indices {
        let ep = &dataset.episodes[i];
        let pred = match saved.kind {
            NetworkKind::Lstm => {
                let predictor = MetamodelPredictor::new(
                    saved.lstm.clone().expect("lstm weights"),
                    saved.normalizer.clone(),
                    layout.clone(),
                    saved.output_mode,
                )?;
                predictor.predict(&PredictScenario::from_episode(ep))?
            }
            NetworkKind::Ffn => {
                let ffn = saved.ffn.as_ref().expect("ffn weights");
                let features = crate::domain::expand_inputs(
                    &ep.params,
                    &ep.usage,
                    &ep.occupancy,
                    &ep.weather,
                    ep.anchor,
                    &saved.normalizer,
                    &layout,
                )?;
                let outputs = ffn.forward(&features.view())?;
                crate::predict::series_from_norm_outputs(
                    outputs,
                    &saved.normalizer,
                    saved.output_mode,
                )?
            }
        };
        let report = report_against(&pred, ep, &saved.normalizer, saved.output_mode)?;
        sums = Some(match sums {
            None => report,
            Some(acc) => add_reports(acc, report),
        });
    }
    let mut mean = sums.ok_or_else(|| Error::Dimension("empty evaluation split".into()))?;
    scale_report(&mut mean, 1.0 / n);
    Ok(mean)
}

fn add_reports(
    a: crate::metrics::EvalReport,
    b: crate::metrics::EvalReport,
) -> crate::metrics::EvalReport {
    crate::metrics::EvalReport {
        mse_t: a.mse_t + b.mse_t,
        mse_q: a.mse_q + b.mse_q,
        mse_t_occ: a.mse_t_occ + b.mse_t_occ,
        mse_q_occ: a.mse_q_occ + b.mse_q_occ,
        delta_q_tot: a.delta_q_tot + b.delta_q_tot,
        mbe_q: a.mbe_q + b.mbe_q,
        cv_rmse_q: a.cv_rmse_q + b.cv_rmse_q,
        mbe_t: a.mbe_t + b.mbe_t,
        cv_rmse_t: a.cv_rmse_t + b.cv_rmse_t,
        r2_t: a.r2_t + b.r2_t,
        r2_q: a.r2_q + b.r2_q,
    }
}

fn scale_report(r: &mut crate::metrics::EvalReport, s: f64) {
    r.mse_t *= s;
    r.mse_q *= s;
    r.mse_t_occ *= s;
    r.mse_q_occ *= s;
    r.delta_q_tot *= s;
    r.mbe_q *= s;
    r.cv_rmse_q *= s;
    r.mbe_t *= s;
    r.cv_rmse_t *= s;
    r.r2_t *= s;
    r.r2_q *= s;
}

fn eval_episode_pair(
    config: &AppConfig,
    pred_path: &Path,
    truth_path: &Path,
) -> Result<crate::metrics::EvalReport> {
    let pred_ep = Episode::load(pred_path)?;
    let truth_ep = Episode::load(truth_path)?;
    if pred_ep.horizon() != truth_ep.horizon() {
        return Err(Error::Dimension(
            "predicted and observed episodes differ in horizon".into(),
        ));
    }
    let normalizer = config.build_normalizer()?;
    let n = pred_ep.horizon();
    let mut norm = ndarray::Array2::zeros((n, crate::domain::OUTPUT_CHANNELS.len()));
    for (j, ch) in crate::domain::OUTPUT_CHANNELS.iter().enumerate() {
        let series = pred_ep.outputs.channel(*ch);
        for k in 0..n {
            norm[[k, j]] = normalizer.normalize(ch.name(), series[k])?;
        }
    }
    let pred = crate::predict::PredictedSeries {
        t_int: pred_ep.outputs.t_int.clone(),
        q_total: pred_ep.outputs.total_consumption(),
        norm_outputs: norm,
    };
    report_against(
        &pred,
        &truth_ep,
        &normalizer,
        crate::config::OutputMode::Full,
    )
}

fn cmd_simulate(common: &Common, start_hour: usize, hours: Option<usize>) -> Result<()> {
    let mut ctx = RunContext::new(common, "simulate")?;
    let cfg = &ctx.config;
    let weather = cfg.load_weather()?;
    let hours = hours.unwrap_or(weather.len().saturating_sub(start_hour));
    let window = weather.slice(start_hour, hours)?;
    if start_hour % 24 != 0 {
        return Err(Error::Dimension(
            "start_hour must fall on a day boundary".into(),
        ));
    }
    let params = cfg.scenario_params()?;
    let anchor = cfg.scenario.anchor.advance(start_hour / 24);
    let episode = crate::refsim::simulate(
        &params,
        &cfg.scenario.usage,
        &cfg.scenario.occupancy,
        &window,
        anchor,
        start_hour,
        &cfg.oracle,
    )?;
    episode.save(&ctx.out.join("episode.csv"))?;
    ctx.manifest.add_output("episode.csv");
    ctx.manifest.add_output("episode.json");
    println!(
        "simulated {} h from hour {start_hour} (mean T {:.2} C)",
        hours,
        episode.outputs.t_int.iter().sum::<f64>() / episode.outputs.t_int.len() as f64
    );
    ctx.finish()
}

fn load_predictor(weights_path: &Path) -> Result<MetamodelPredictor> {
    let saved = load_network(weights_path)?;
    if saved.kind != NetworkKind::Lstm {
        return Err(Error::Config(
            "calibration and optimization require LSTM weights".into(),
        ));
    }
    let layout = saved.feature_layout()?;
    MetamodelPredictor::new(
        saved.lstm.expect("lstm weights"),
        saved.normalizer,
        layout,
        saved.output_mode,
    )
}

#[derive(Serialize, Deserialize)]
struct ThetaFile {
    schema_version: u32,
    theta: crate::domain::BuildingParams,
    best_cost: f64,
    converged: bool,
    calibration_window: (usize, usize),
}

fn cmd_calibrate(
    common: &Common,
    weights_path: &Path,
    observed_path: &Path,
    validation_path: Option<PathBuf>,
) -> Result<()> {
    let mut ctx = RunContext::new(common, "calibrate")?;
    ctx.manifest.add_input("weights", weights_path)?;
    ctx.manifest.add_input("observed", observed_path)?;
    let cfg = ctx.config.clone();

    let predictor = load_predictor(weights_path)?;
    let observed = Episode::load(observed_path)?;
    let space = SearchSpace::from_ranges(&cfg.ranges)?;

    // Base parameters: scenario geometry with occupant/PC counts fixed by
    // the floor-area rule.
    let mut base = cfg.scenario_params()?;
    let (n_occ, n_pcs) = cfg.fixed_occupancy_counts()?;
    base.n_occupants = n_occ;
    base.n_pcs = n_pcs;

    let outcome = calib::calibrate(
        &observed,
        &predictor,
        &space,
        &base,
        &cfg.calibration,
        ctx.seed,
    )?;

    let theta_file = ThetaFile {
        schema_version: 1,
        theta: outcome.theta_hat.clone(),
        best_cost: outcome.best_cost,
        converged: outcome.converged,
        calibration_window: (observed.start_hour, observed.horizon()),
    };
    std::fs::write(
        ctx.out.join("theta_hat.json"),
        serde_json::to_vec_pretty(&theta_file)?,
    )?;
    std::fs::write(
        ctx.out.join("report.json"),
        serde_json::to_vec_pretty(&outcome.report)?,
    )?;
    calib::trace_to_csv(&outcome.trace, &ctx.out.join("trace.csv"))?;
    ctx.manifest.add_output("theta_hat.json");
    ctx.manifest.add_output("report.json");
    ctx.manifest.add_output("trace.csv");

    println!(
        "calibration best cost {:.5} after {} evaluations ({})",
        outcome.best_cost,
        outcome.evaluations,
        if outcome.converged {
            "converged"
        } else {
            "NOT converged"
        }
    );
    print!("{}", outcome.report.table());

    if let Some(val_path) = validation_path {
        ctx.manifest.add_input("validation", &val_path)?;
        let fresh = Episode::load(&val_path)?;
        let report = calib::validate(
            &outcome.theta_hat,
            &predictor,
            &fresh,
            (observed.start_hour, observed.horizon()),
        )?;
        std::fs::write(
            ctx.out.join("validation_report.json"),
            serde_json::to_vec_pretty(&report)?,
        )?;
        ctx.manifest.add_output("validation_report.json");
        println!("validation on fresh weeks:");
        print!("{}", report.table());
    }

    let converged = outcome.converged;
    ctx.finish()?;
    if !converged {
        return Err(Error::NotConverged {
            best_cost: outcome.best_cost,
            ceiling: cfg.calibration.cost_ceiling,
        });
    }
    Ok(())
}

#[derive(Serialize)]
struct GainFile {
    schema_version: u32,
    baseline_comf: f64,
    baseline_q_mean: f64,
    selected_comf: f64,
    selected_q_mean: f64,
    relax: f64,
    comfort_met: bool,
    relative_gain_percent: f64,
    forecast_mwh: Option<f64>,
}

fn cmd_optimize(
    common: &Common,
    weights_path: &Path,
    theta_path: &Path,
    observed_path: &Path,
) -> Result<()> {
    let mut ctx = RunContext::new(common, "optimize")?;
    ctx.manifest.add_input("weights", weights_path)?;
    ctx.manifest.add_input("theta", theta_path)?;
    ctx.manifest.add_input("observed", observed_path)?;
    let cfg = ctx.config.clone();

    let predictor = load_predictor(weights_path)?;
    let theta_file: ThetaFile = serde_json::from_slice(&std::fs::read(theta_path).map_err(
        |e| Error::MissingArtifact(format!("theta {}: {e}", theta_path.display())),
    )?)?;
    let observed = Episode::load(observed_path)?;

    let problem = ScheduleProblem::new(
        &predictor,
        &theta_file.theta,
        &observed.occupancy,
        &observed.weather,
        observed.anchor,
        &cfg.ranges,
        cfg.optimization.t_ref,
    )?;
    let outcome = moo::optimize_schedule(&problem, &observed.usage, &cfg.optimization, ctx.seed)?;

    outcome.front.to_csv(&ctx.out.join("pareto.csv"))?;
    ctx.manifest.add_output("pareto.csv");

    let (baseline_comf, baseline_q) = outcome.baseline;
    let selected = moo::select_equivalent_comfort(&outcome.front, baseline_comf, 0.0)?;
    let relaxed =
        moo::select_equivalent_comfort(&outcome.front, baseline_comf, cfg.optimization.comfort_relax)?;
    let gain = moo::relative_gain(baseline_q, selected.point.q_mean)?;
    let gain_relaxed = moo::relative_gain(baseline_q, relaxed.point.q_mean)?;

    std::fs::write(
        ctx.out.join("selected.json"),
        serde_json::to_vec_pretty(&selected)?,
    )?;
    ctx.manifest.add_output("selected.json");

    let gain_file = GainFile {
        schema_version: 1,
        baseline_comf,
        baseline_q_mean: baseline_q,
        selected_comf: selected.point.comf,
        selected_q_mean: selected.point.q_mean,
        relax: cfg.optimization.comfort_relax,
        comfort_met: selected.comfort_met,
        relative_gain_percent: gain,
        forecast_mwh: cfg
            .optimization
            .monthly_consumption_mwh
            .map(|m| moo::gain_forecast_mwh(gain, m)),
    };
    std::fs::write(
        ctx.out.join("gain.json"),
        serde_json::to_vec_pretty(&gain_file)?,
    )?;
    ctx.manifest.add_output("gain.json");

    // Hourly predicted series for the selected schedule.
    let scenario = PredictScenario {
        params: &theta_file.theta,
        usage: &selected.point.schedule,
        occupancy: &observed.occupancy,
        weather: &observed.weather,
        anchor: observed.anchor,
    };
    let pred = predictor.predict(&scenario)?;
    let mut w = csv::Writer::from_path(ctx.out.join("selected_series.csv"))?;
    w.write_record(["hour", "T_INT_PRED", "Q_TOTAL_PRED"])?;
    for k in 0..pred.t_int.len() {
        w.write_record([
            k.to_string(),
            format!("{}", pred.t_int[k]),
            format!("{}", pred.q_total[k]),
        ])?;
    }
    w.flush()?;
    ctx.manifest.add_output("selected_series.csv");

    println!(
        "pareto front: {} points; baseline (Comf {:.3} C, Q {:.2} kWh/h)",
        outcome.front.points.len(),
        baseline_comf,
        baseline_q
    );
    println!(
        "equivalent comfort: Q {:.2} kWh/h, gain {:.2}% | relaxed {:.1}C: gain {:.2}%",
        selected.point.q_mean, gain, cfg.optimization.comfort_relax, gain_relaxed
    );
    ctx.finish()
}
