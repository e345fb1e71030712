//! Acceptance suite: one test per shipped criterion, each printing a
//! PASS line with its measurements. The expensive criteria share one
//! trained fixture (dataset -> surrogate + baseline -> calibration), built
//! on first use.
//!
//! Run with: `cargo test --release --test acceptance -- --nocapture`

use std::sync::LazyLock;
use std::time::Instant;

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use thermoforge::calib::{self, CalibrationOutcome, CmaesState, SearchSpace};
use thermoforge::config::{AppConfig, OutputMode, TrainingConfig, WeatherSource};
use thermoforge::domain::{Episode, FeatureLayout, WeatherSeries, Weekday};
use thermoforge::metrics;
use thermoforge::moo::{self, Nsga2Config, ScheduleProblem};
use thermoforge::nn::{
    prepare_tensors, train, FfnWeights, MetamodelWeights, NetLayout, TrainableNet,
};
use thermoforge::predict::MetamodelPredictor;
use thermoforge::rng::{stage_rng, substream, Stream};
use thermoforge::sampler::build_dataset;

// ---------------------------------------------------------------------------
// Shared fixture: desk-scale dataset, trained surrogate and baseline,
// synthetic observations from a hidden parameter set, calibration run.
// ---------------------------------------------------------------------------

struct Fixture {
    cfg: AppConfig,
    lstm_val_loss: f64,
    ffn_val_loss: f64,
    predictor: MetamodelPredictor,
    observed_cal: Episode,
    observed_val: Episode,
    calibration: CalibrationOutcome,
    train_secs: f64,
}

static FIXTURE: LazyLock<Fixture> = LazyLock::new(build_fixture);

fn desk_config() -> AppConfig {
    let mut cfg = AppConfig::synthetic_default();
    cfg.seed = 42;
    cfg.sampling.n_examples = 2000;
    cfg.sampling.horizon_hours = 336;
    cfg.sampling.split_fraction = 0.2;
    cfg.weather = WeatherSource::Synthetic {
        hours: 672,
        seed: 2020,
    };
    cfg.training = TrainingConfig {
        d_emb: 32,
        n_layers: 2,
        learning_rate: 2e-3,
        batch_size: 16,
        epochs: 40,
        dropout: 0.05,
        ..Default::default()
    };
    cfg
}

fn build_fixture() -> Fixture {
    let cfg = desk_config();
    let weather = cfg.load_weather().unwrap();
    let normalizer = cfg.build_normalizer().unwrap();
    let layout = FeatureLayout::canonical();

    let started = Instant::now();
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
        cfg.seed,
        cfg.scenario.anchor,
    )
    .unwrap();
    let (features, targets) =
        prepare_tensors(&dataset, &layout, cfg.training.output_mode).unwrap();
    let train_idx = dataset.train_indices();
    let val_idx = dataset.validation_indices();
    drop(dataset);

    let net_layout = NetLayout {
        input_width: layout.width(),
        d_emb: cfg.training.d_emb,
        n_layers: cfg.training.n_layers,
        n_outputs: 8,
    };
    let mut init_rng = stage_rng(cfg.seed, Stream::Init);
    let mut lstm = MetamodelWeights::init(net_layout, &mut init_rng).unwrap();
    let lstm_history = train(
        &mut lstm,
        &features,
        &targets,
        &train_idx,
        &val_idx,
        &cfg.training,
        cfg.seed,
    )
    .unwrap();
    let lstm_val_loss = lstm_history
        .epochs
        .iter()
        .filter_map(|e| e.val_loss)
        .fold(f64::INFINITY, f64::min);

    let mut ffn = FfnWeights::init(net_layout, &mut init_rng).unwrap();
    let ffn_history = train(
        &mut ffn,
        &features,
        &targets,
        &train_idx,
        &val_idx,
        &cfg.training,
        cfg.seed,
    )
    .unwrap();
    let ffn_val_loss = ffn_history
        .epochs
        .iter()
        .filter_map(|e| e.val_loss)
        .fold(f64::INFINITY, f64::min);
    let train_secs = started.elapsed().as_secs_f64();
    drop(features);
    drop(targets);

    // Synthetic "real building": hidden parameters simulated over the full
    // 672-hour record. The first fortnight (training weather) is calibrated
    // on; the following fortnight has fresh weather.
    let hidden = hidden_building(&cfg);
    let observed_full = thermoforge::refsim::simulate(
        &hidden,
        &cfg.scenario.usage,
        &cfg.scenario.occupancy,
        &weather,
        cfg.scenario.anchor,
        0,
        &cfg.oracle,
    )
    .unwrap();
    let observed_cal = slice_episode(&observed_full, 0, 336);
    let observed_val = slice_episode(&observed_full, 336, 336);

    let predictor = MetamodelPredictor::new(
        lstm,
        normalizer,
        layout,
        cfg.training.output_mode,
    )
    .unwrap();

    let space = SearchSpace::from_ranges(&cfg.ranges).unwrap();
    let mut base = cfg.scenario_params().unwrap();
    let (n_occ, n_pcs) = cfg.fixed_occupancy_counts().unwrap();
    base.n_occupants = n_occ;
    base.n_pcs = n_pcs;
    let calibration = calib::calibrate(
        &observed_cal,
        &predictor,
        &space,
        &base,
        &cfg.calibration,
        cfg.seed,
    )
    .unwrap();

    Fixture {
        cfg,
        lstm_val_loss,
        ffn_val_loss,
        predictor,
        observed_cal,
        observed_val,
        calibration,
        train_secs,
    }
}

/// Hidden ground-truth building for the calibration study. On-grid values,
/// distinct from the range midpoints the search starts at, with the
/// occupant/PC counts fixed by the floor-area rule.
fn hidden_building(cfg: &AppConfig) -> thermoforge::domain::BuildingParams {
    let mut p = cfg.scenario_params().unwrap();
    p.airchange_infiltration = 0.4;
    p.capacitance = 240.0;
    p.power_heat_max = 400.0;
    p.power_cool_max = 800.0;
    p.percent_light_night = 10.0;
    p.percent_pcs_night = 40.0;
    p.facade_thickness = [0.05, 0.10, 0.15, 0.10];
    p.roof_thickness = 0.15;
    p.facade_window_percent = [50.0, 40.0, 45.0, 50.0];
    let (n_occ, n_pcs) = cfg.fixed_occupancy_counts().unwrap();
    p.n_occupants = n_occ;
    p.n_pcs = n_pcs;
    p
}

fn slice_episode(full: &Episode, start: usize, len: usize) -> Episode {
    let cut = |v: &Vec<f64>| v[start..start + len].to_vec();
    Episode {
        params: full.params.clone(),
        usage: full.usage.clone(),
        occupancy: full.occupancy.clone(),
        weather: full.weather.slice(start, len).unwrap(),
        anchor: full.anchor.advance(start / 24),
        start_hour: full.start_hour + start,
        outputs: thermoforge::domain::OutputSeries {
            t_int: cut(&full.outputs.t_int),
            q_ac: cut(&full.outputs.q_ac),
            q_heat: cut(&full.outputs.q_heat),
            q_people: cut(&full.outputs.q_people),
            q_eqp: cut(&full.outputs.q_eqp),
            q_light: cut(&full.outputs.q_light),
            q_ahu_c: cut(&full.outputs.q_ahu_c),
            q_ahu_h: cut(&full.outputs.q_ahu_h),
        },
    }
}

// ---------------------------------------------------------------------------
// Criterion: gradient correctness on 20 random small networks
// ---------------------------------------------------------------------------

fn finite_difference_check(
    net: &MetamodelWeights,
    xs: &[ArrayView2<f64>],
    ys: &[ArrayView2<f64>],
) -> f64 {
    let mut rng = stage_rng(0, Stream::Training);
    let (_, grad) = net.loss_and_grad_flat(xs, ys, 0.5, 0.0, &mut rng).unwrap();
    let flat = net.to_flat();
    let h = 1e-4;
    let mut worst: f64 = 0.0;
    for i in 0..flat.len() {
        let mut probe = net.clone();
        let mut fp = flat.clone();
        fp[i] += h;
        probe.from_flat(&fp).unwrap();
        let lp = probe.eval_loss(xs, ys, 0.5).unwrap();
        fp[i] = flat[i] - h;
        probe.from_flat(&fp).unwrap();
        let lm = probe.eval_loss(xs, ys, 0.5).unwrap();
        let fd = (lp - lm) / (2.0 * h);
        let a = grad[i];
        let denom = a.abs().max(fd.abs());
        let rel = if denom > 1e-10 {
            (a - fd).abs() / denom
        } else {
            0.0
        };
        assert!(
            rel <= 1e-5,
            "parameter {i}: analytic {a}, finite-diff {fd}, rel {rel}"
        );
        worst = worst.max(rel);
    }
    worst
}

#[test]
fn criterion_gradient_correctness() {
    let started = Instant::now();
    let mut worst: f64 = 0.0;
    for case in 0..20u64 {
        let mut rng = substream(1000, Stream::Init, case);
        let layout = NetLayout {
            input_width: rng.gen_range(3..=10),
            d_emb: rng.gen_range(2..=8),
            n_layers: rng.gen_range(1..=2),
            n_outputs: rng.gen_range(2..=4),
        };
        let horizon = rng.gen_range(4..=16);
        let batch = rng.gen_range(1..=2);
        let net = MetamodelWeights::init(layout, &mut rng).unwrap();
        let xs: Vec<Array2<f64>> = (0..batch)
            .map(|_| {
                Array2::from_shape_fn((horizon, layout.input_width), |_| rng.gen_range(0.0..1.0))
            })
            .collect();
        let ys: Vec<Array2<f64>> = (0..batch)
            .map(|_| {
                Array2::from_shape_fn((horizon, layout.n_outputs), |_| rng.gen_range(0.05..0.95))
            })
            .collect();
        let xv: Vec<ArrayView2<f64>> = xs.iter().map(|x| x.view()).collect();
        let yv: Vec<ArrayView2<f64>> = ys.iter().map(|y| y.view()).collect();
        worst = worst.max(finite_difference_check(&net, &xv, &yv));
    }
    let elapsed = started.elapsed().as_secs_f64();
    assert!(elapsed < 60.0, "gradient check took {elapsed:.1}s");
    println!(
        "ACCEPTANCE gradient_correctness: PASS (20 nets, worst rel err {worst:.2e}, {elapsed:.1}s)"
    );
}

// ---------------------------------------------------------------------------
// Criterion: LSTM validation loss at least 5x below the FFN baseline
// ---------------------------------------------------------------------------

#[test]
fn criterion_surrogate_beats_ffn_by_factor_five() {
    let f = &*FIXTURE;
    assert!(
        f.train_secs < 1200.0,
        "fixture training took {:.0}s, over the 20 min budget",
        f.train_secs
    );
    let ratio = f.ffn_val_loss / f.lstm_val_loss;
    assert!(
        ratio >= 5.0,
        "FFN/LSTM validation loss ratio {ratio:.2} below 5 (lstm {:.3e}, ffn {:.3e})",
        f.lstm_val_loss,
        f.ffn_val_loss
    );
    println!(
        "ACCEPTANCE surrogate_vs_ffn: PASS (lstm {:.3e}, ffn {:.3e}, ratio {ratio:.1}, fixture {:.0}s)",
        f.lstm_val_loss, f.ffn_val_loss, f.train_secs
    );
}

// ---------------------------------------------------------------------------
// Criterion: calibration reaches the hourly guideline thresholds
// ---------------------------------------------------------------------------

#[test]
fn criterion_calibration_meets_guidelines() {
    let f = &*FIXTURE;
    let started = Instant::now();
    let report = &f.calibration.report;
    assert!(
        report.cv_rmse_q <= 20.0,
        "Cv(RMSE)_Q {:.2}% above 20%",
        report.cv_rmse_q
    );
    assert!(
        report.mbe_q.abs() <= 5.0,
        "|MBE_Q| {:.2}% above 5%",
        report.mbe_q
    );
    assert!(
        report.cv_rmse_t <= 5.0,
        "Cv(RMSE)_T {:.2}% above 5%",
        report.cv_rmse_t
    );
    assert_eq!(f.calibration.trace.len(), f.cfg.calibration.iterations);
    let elapsed = started.elapsed().as_secs_f64();
    let _ = elapsed;
    println!(
        "ACCEPTANCE calibration_guidelines: PASS (Cv_Q {:.2}%, MBE_Q {:.2}%, Cv_T {:.2}%, \
         best cost {:.4}, {} iterations)",
        report.cv_rmse_q,
        report.mbe_q,
        report.cv_rmse_t,
        f.calibration.best_cost,
        f.calibration.trace.len()
    );
}

// ---------------------------------------------------------------------------
// Criterion: held-out fortnight generalization within 1.5x
// ---------------------------------------------------------------------------

#[test]
fn criterion_validation_generalizes() {
    let f = &*FIXTURE;
    let report = calib::validate(
        &f.calibration.theta_hat,
        &f.predictor,
        &f.observed_val,
        (f.observed_cal.start_hour, f.observed_cal.horizon()),
    )
    .unwrap();
    let ratio = report.cv_rmse_q / f.calibration.report.cv_rmse_q;
    assert!(
        ratio <= 1.5,
        "validation Cv(RMSE)_Q {:.2}% is {ratio:.2}x the calibration value {:.2}%",
        report.cv_rmse_q,
        f.calibration.report.cv_rmse_q
    );
    println!(
        "ACCEPTANCE validation_generalization: PASS (cal {:.2}%, fresh {:.2}%, ratio {ratio:.2})",
        f.calibration.report.cv_rmse_q, report.cv_rmse_q
    );
}

// ---------------------------------------------------------------------------
// Criterion: CMA-ES reference behavior
// ---------------------------------------------------------------------------

fn cmaes_minimize(
    f: impl Fn(&[f64]) -> f64,
    mean0: &[f64],
    sigma0: f64,
    max_evals: usize,
    target: f64,
    rng: &mut ChaCha8Rng,
) -> (f64, usize) {
    let mut state = CmaesState::new(mean0, sigma0, None).unwrap();
    let mut best = f64::INFINITY;
    let mut evals = 0;
    while evals + state.lambda() <= max_evals && best > target {
        let candidates = state.ask(rng).unwrap();
        let fitnesses: Vec<f64> = candidates.iter().map(|c| f(c)).collect();
        evals += candidates.len();
        for v in &fitnesses {
            best = best.min(*v);
        }
        state.tell(&candidates, &fitnesses).unwrap();
    }
    (best, evals)
}

#[test]
fn criterion_cmaes_reference_runs() {
    let started = Instant::now();
    let sphere = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>();
    let rosenbrock = |x: &[f64]| {
        x.windows(2)
            .map(|w| 100.0 * (w[1] - w[0] * w[0]).powi(2) + (1.0 - w[0]).powi(2))
            .sum::<f64>()
    };

    let mut rng = stage_rng(2025, Stream::Calibration);
    let (best, evals) = cmaes_minimize(sphere, &[3.0, 3.0], 1.0, 1500, 1e-10, &mut rng);
    assert!(best < 1e-10, "sphere best {best} in {evals} evals");
    let sphere_evals = evals;

    let (best, evals) = cmaes_minimize(rosenbrock, &[0.0; 5], 0.5, 30_000, 1e-6, &mut rng);
    assert!(best < 1e-6, "rosenbrock best {best} in {evals} evals");
    let rosen_evals = evals;

    // Monotone best-so-far traces across 100 random seeds.
    for seed in 0..100 {
        let mut rng = substream(777, Stream::Calibration, seed);
        let mut state = CmaesState::new(&[2.0, -1.0, 0.5], 0.7, None).unwrap();
        let mut best = f64::INFINITY;
        let mut trace = Vec::new();
        for _ in 0..60 {
            let candidates = state.ask(&mut rng).unwrap();
            let fitnesses: Vec<f64> = candidates.iter().map(|c| sphere(c)).collect();
            for v in &fitnesses {
                best = best.min(*v);
            }
            trace.push(best);
            state.tell(&candidates, &fitnesses).unwrap();
        }
        for w in trace.windows(2) {
            assert!(w[1] <= w[0], "best-so-far rose on seed {seed}");
        }
    }
    println!(
        "ACCEPTANCE cmaes_unit: PASS (sphere {sphere_evals} evals, rosenbrock {rosen_evals} evals, \
         100 monotone traces, {:.1}s)",
        started.elapsed().as_secs_f64()
    );
}

// ---------------------------------------------------------------------------
// Criterion: fast non-dominated sort equals the O(n^2) oracle
// ---------------------------------------------------------------------------

/// Independent brute-force sorter: peel non-dominated layers.
fn brute_force_fronts(objs: &[[f64; 2]]) -> Vec<Vec<usize>> {
    let dominates = |a: &[f64; 2], b: &[f64; 2]| {
        a[0] <= b[0] && a[1] <= b[1] && (a[0] < b[0] || a[1] < b[1])
    };
    let mut remaining: Vec<usize> = (0..objs.len()).collect();
    let mut fronts = Vec::new();
    while !remaining.is_empty() {
        let layer: Vec<usize> = remaining
            .iter()
            .copied()
            .filter(|&p| {
                !remaining
                    .iter()
                    .any(|&q| q != p && dominates(&objs[q], &objs[p]))
            })
            .collect();
        remaining.retain(|i| !layer.contains(i));
        fronts.push(layer);
    }
    fronts
}

#[test]
fn criterion_nsga2_sort_matches_oracle() {
    let started = Instant::now();
    for seed in 0..500u64 {
        let mut rng = substream(31337, Stream::Optimization, seed);
        let n = rng.gen_range(1..=200);
        // Mix a coarse grid (many ties and duplicates) with continuous points.
        let objs: Vec<[f64; 2]> = (0..n)
            .map(|_| {
                if rng.gen::<f64>() < 0.5 {
                    [
                        rng.gen_range(0..6) as f64,
                        rng.gen_range(0..6) as f64,
                    ]
                } else {
                    [rng.gen::<f64>(), rng.gen::<f64>()]
                }
            })
            .collect();

        let fast = moo::non_dominated_sort(&objs);
        let brute = brute_force_fronts(&objs);
        let to_rank = |fronts: &[Vec<usize>]| {
            let mut rank = vec![usize::MAX; n];
            for (r, f) in fronts.iter().enumerate() {
                for &i in f {
                    rank[i] = r;
                }
            }
            rank
        };
        assert_eq!(to_rank(&fast), to_rank(&brute), "seed {seed}");
    }
    println!(
        "ACCEPTANCE nsga2_sort_oracle: PASS (500 populations, exact match, {:.1}s)",
        started.elapsed().as_secs_f64()
    );
}

// ---------------------------------------------------------------------------
// Criterion: end-to-end optimization yields a strictly positive gain
// ---------------------------------------------------------------------------

#[test]
fn criterion_optimization_end_to_end() {
    let f = &*FIXTURE;
    let started = Instant::now();

    let mut opt_cfg = f.cfg.optimization.clone();
    opt_cfg.population = 64;
    opt_cfg.generations = 200;
    opt_cfg.keep_eval_log = true;

    let problem = ScheduleProblem::new(
        &f.predictor,
        &f.calibration.theta_hat,
        &f.observed_cal.occupancy,
        &f.observed_cal.weather,
        f.observed_cal.anchor,
        &f.cfg.ranges,
        opt_cfg.t_ref,
    )
    .unwrap();
    let outcome =
        moo::optimize_schedule(&problem, &f.observed_cal.usage, &opt_cfg, f.cfg.seed).unwrap();

    // Exhaustive non-domination of the final front.
    outcome.front.validate().unwrap();

    // Replay check: no archive member is dominated by anything evaluated
    // during the run.
    assert_eq!(outcome.eval_log.len(), outcome.evaluations);
    for p in &outcome.front.points {
        for e in &outcome.eval_log {
            assert!(
                !moo::dominates(e, &[p.comf, p.q_mean]),
                "front member ({}, {}) dominated by evaluated point ({}, {})",
                p.comf,
                p.q_mean,
                e[0],
                e[1]
            );
        }
    }

    let (baseline_comf, baseline_q) = outcome.baseline;
    let selected = moo::select_equivalent_comfort(&outcome.front, baseline_comf, 0.0).unwrap();
    assert!(selected.comfort_met, "no equivalent-comfort member found");
    assert!(
        selected.point.q_mean < baseline_q,
        "selected Q {:.3} not strictly below baseline {:.3}",
        selected.point.q_mean,
        baseline_q
    );
    let gain = moo::relative_gain(baseline_q, selected.point.q_mean).unwrap();
    assert!(gain > 0.0);

    let elapsed = started.elapsed().as_secs_f64();
    assert!(elapsed < 600.0, "optimization took {elapsed:.0}s, over 10 min");
    println!(
        "ACCEPTANCE optimization_end_to_end: PASS (front {} points, baseline Q {:.2}, \
         selected Q {:.2}, gain {:.2}%, {} evals, {:.0}s)",
        outcome.front.points.len(),
        baseline_q,
        selected.point.q_mean,
        gain,
        outcome.evaluations,
        elapsed
    );
}

// ---------------------------------------------------------------------------
// Criterion: metric hand examples reproduce to 1e-12
// ---------------------------------------------------------------------------

#[test]
fn criterion_metric_exactness() {
    let tol = 1e-12;
    let close = |a: f64, b: f64| (a - b).abs() < tol;

    assert!(close(
        metrics::mse(
            &[21.0, 22.0, 23.0],
            &[20.0, 22.0, 24.0],
            Some(&[1.0, 0.0, 1.0])
        )
        .unwrap(),
        1.0
    ));
    assert!(close(metrics::mse(&[1.0, 1.0], &[0.0, 0.0], None).unwrap(), 1.0));
    assert!(close(metrics::mse(&[2.0], &[2.0], None).unwrap(), 0.0));

    assert!(close(
        metrics::delta_q_tot(&[1.0, 2.0, 2.4], &[1.0, 2.0, 3.0]).unwrap(),
        0.1
    ));
    assert!(close(metrics::delta_q_tot(&[2.0, 4.0], &[1.0, 2.0]).unwrap(), 1.0));

    assert!(close(
        metrics::mbe(&[10.0, 10.0, 10.0, 10.0], &[9.0, 9.0, 9.0, 9.0]).unwrap(),
        10.0
    ));
    assert!(close(
        metrics::mbe(&[20.0, 22.0, 24.0], &[21.0, 22.0, 23.0]).unwrap(),
        0.0
    ));

    assert!(close(metrics::cv_rmse(&[10.0, 10.0], &[9.0, 11.0]).unwrap(), 10.0));
    assert!(close(metrics::r2(&[1.0, 2.0, 3.0], &[1.0, 2.0, 4.0]).unwrap(), 0.5));
    assert!(close(metrics::r2(&[1.0, 2.0, 3.0], &[2.0, 2.0, 2.0]).unwrap(), 0.0));

    // Loss combination example.
    let mut pred = Array2::zeros((4, 2));
    for k in 0..4 {
        pred[[k, 0]] = (2e-5_f64).sqrt();
        pred[[k, 1]] = (4e-4_f64).sqrt();
    }
    let target = Array2::zeros((4, 2));
    assert!(close(thermoforge::nn::loss(&pred, &target, 0.5).unwrap(), 2.1e-4));

    // Comfort/consumption objective example.
    let (comf, q) = moo::objectives(&[23.5, 21.5], &[2.0, 4.0], &[1.0, 1.0], 22.5).unwrap();
    assert!(close(comf, 1.0));
    assert!(close(q, 3.0));

    // Relative gain examples.
    assert!(close(moo::relative_gain(100.0, 94.68).unwrap(), 5.32));
    assert!((moo::gain_forecast_mwh(9.92, 100.4) - 9.96).abs() < 5e-3);

    println!("ACCEPTANCE metric_exactness: PASS (all hand examples within 1e-12)");
}

// ---------------------------------------------------------------------------
// Criterion: fixed-seed pipeline reruns are byte-identical
// ---------------------------------------------------------------------------

#[test]
fn criterion_pipeline_determinism() {
    let started = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();

    let mut cfg = AppConfig::synthetic_default();
    cfg.sampling.n_examples = 25;
    cfg.sampling.horizon_hours = 96;
    cfg.weather = WeatherSource::Synthetic {
        hours: 672,
        seed: 2020,
    };
    let config_path = root.join("config.json");
    std::fs::write(&config_path, serde_json::to_vec_pretty(&cfg).unwrap()).unwrap();

    let bin = env!("CARGO_BIN_EXE_thermoforge");
    let run = |out: &std::path::Path, extra: &[&str]| {
        let mut args = vec![
            extra[0],
            "--config",
            config_path.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ];
        args.extend_from_slice(&extra[1..]);
        let status = std::process::Command::new(bin)
            .args(&args)
            .output()
            .unwrap();
        assert!(
            status.status.success(),
            "{:?}: {}",
            args,
            String::from_utf8_lossy(&status.stderr)
        );
    };

    let a = root.join("a");
    let b = root.join("b");
    run(&a, &["sample", "--threads", "2"]);
    run(&b, &["sample", "--threads", "1"]);
    for i in [0usize, 7, 24] {
        let name = format!("dataset/episode_{i:05}.csv");
        assert_eq!(
            std::fs::read(a.join(&name)).unwrap(),
            std::fs::read(b.join(&name)).unwrap(),
            "{name} differs"
        );
    }
    assert_eq!(
        std::fs::read(a.join("dataset/weather.csv")).unwrap(),
        std::fs::read(b.join("dataset/weather.csv")).unwrap()
    );

    let sa = root.join("sim_a");
    let sb = root.join("sim_b");
    run(&sa, &["simulate", "--start-hour", "0", "--hours", "336"]);
    run(&sb, &["simulate", "--start-hour", "0", "--hours", "336"]);
    assert_eq!(
        std::fs::read(sa.join("episode.csv")).unwrap(),
        std::fs::read(sb.join("episode.csv")).unwrap()
    );

    println!(
        "ACCEPTANCE pipeline_determinism: PASS (byte-identical CSVs, {:.1}s)",
        started.elapsed().as_secs_f64()
    );
}
