//! Building-parameter calibration: CMA-ES over the encoded parameter box,
//! with the surrogate (or the reference simulator) as the frozen forward
//! model and the determination coefficient as cost.

mod cmaes;

pub use cmaes::{default_lambda, CmaesState};

use serde::{Deserialize, Serialize};

use crate::config::CalibrationConfig;
use crate::domain::{BuildingParams, Episode};
use crate::error::{Error, Result};
use crate::metrics::{self, EvalReport};
use crate::predict::{report_against, BuildingModel, PredictScenario};
use crate::rng::{substream, Stream};
use crate::sampler::{ParamRange, RangesConfig};

/// Fields calibrated by default: every sampled building parameter except
/// the occupant/PC counts, which are fixed from the floor-area rule.
pub const DEFAULT_SEARCH_FIELDS: [&str; 15] = [
    "airchange_infiltration",
    "capacitance",
    "power_heat_max",
    "power_cool_max",
    "percent_light_night",
    "percent_pcs_night",
    "facade_thickness_1",
    "facade_thickness_2",
    "facade_thickness_3",
    "facade_thickness_4",
    "roof_thickness",
    "facade_window_percent_1",
    "facade_window_percent_2",
    "facade_window_percent_3",
    "facade_window_percent_4",
];

/// The calibrated parameter box: an ordered list of ranges with a linear
/// encode/decode onto `[0, 1]` per coordinate.
#[derive(Debug, Clone)]
pub struct SearchSpace {
    fields: Vec<ParamRange>,
}

impl SearchSpace {
    pub fn from_ranges(ranges: &RangesConfig) -> Result<SearchSpace> {
        let mut fields = Vec::with_capacity(DEFAULT_SEARCH_FIELDS.len());
        for name in DEFAULT_SEARCH_FIELDS {
            let r = ranges.theta_range(name)?.clone();
            if !(r.min < r.max) {
                return Err(Error::Config(format!(
                    "search field {name} has a degenerate range"
                )));
            }
            fields.push(r);
        }
        Ok(SearchSpace { fields })
    }

    pub fn dim(&self) -> usize {
        self.fields.len()
    }

    pub fn fields(&self) -> &[ParamRange] {
        &self.fields
    }

    /// Physical values -> unit coordinates.
    pub fn encode(&self, params: &BuildingParams) -> Result<Vec<f64>> {
        self.fields
            .iter()
            .map(|r| Ok((params.theta(&r.name)? - r.min) / (r.max - r.min)))
            .collect()
    }

    /// Unit coordinates -> physical values written into `base`. Coordinates
    /// must already be clipped to `[0, 1]`.
    pub fn decode_into(&self, unit: &[f64], base: &mut BuildingParams) -> Result<()> {
        if unit.len() != self.dim() {
            return Err(Error::Dimension("candidate dimension mismatch".into()));
        }
        for (u, r) in unit.iter().zip(&self.fields) {
            base.set_theta(&r.name, r.min + u * (r.max - r.min))?;
        }
        Ok(())
    }

    /// Clips to the unit box; the squared clip distance is added to the
    /// fitness as a boundary penalty.
    pub fn clip(&self, raw: &[f64]) -> (Vec<f64>, f64) {
        let mut penalty = 0.0;
        let clipped = raw
            .iter()
            .map(|u| {
                let c = u.clamp(0.0, 1.0);
                penalty += (u - c) * (u - c);
                c
            })
            .collect();
        (clipped, penalty)
    }
}

/// Calibration cost of one candidate: `1 - (R2_T + R2_Q) / 2` between the
/// model's prediction and the observed series, with the temperature R2 on
/// the indoor series and the consumption R2 on the hourly total.
pub fn calibration_cost(
    model: &dyn BuildingModel,
    candidate: &BuildingParams,
    observed: &Episode,
) -> Result<f64> {
    let scenario = PredictScenario::from_episode(observed).with_params(candidate);
    let pred = model.predict(&scenario)?;
    cost_from_prediction(&pred.t_int, &pred.q_total, observed)
}

fn cost_from_prediction(t_pred: &[f64], q_pred: &[f64], observed: &Episode) -> Result<f64> {
    let r2_t = metrics::r2(&observed.outputs.t_int, t_pred)?;
    let q_truth = observed.outputs.total_consumption();
    let r2_q = metrics::r2(&q_truth, q_pred)?;
    let cost = 1.0 - 0.5 * (r2_t + r2_q);
    if !cost.is_finite() {
        return Err(Error::NonFinite("calibration cost".into()));
    }
    Ok(cost)
}

/// One point of the convergence trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub iteration: usize,
    pub best_cost: f64,
}

/// Result of a calibration run.
#[derive(Debug, Clone)]
pub struct CalibrationOutcome {
    pub theta_hat: BuildingParams,
    pub report: EvalReport,
    pub trace: Vec<TracePoint>,
    pub best_cost: f64,
    pub converged: bool,
    pub evaluations: usize,
}

/// Estimates the building parameters from an observed episode with the
/// model weights frozen. `base` supplies geometry and the fixed fields;
/// search starts at the range midpoints.
pub fn calibrate(
    observed: &Episode,
    model: &dyn BuildingModel,
    space: &SearchSpace,
    base: &BuildingParams,
    cfg: &CalibrationConfig,
    seed: u64,
) -> Result<CalibrationOutcome> {
    if observed.horizon() < 336 {
        return Err(Error::Dimension(format!(
            "calibration window must cover at least two weeks (336 h), got {} h",
            observed.horizon()
        )));
    }
    observed.validate()?;

    let mut outcome = run_cmaes(observed, model, space, base, cfg, seed, None)?;
    if !outcome.converged && cfg.restart_on_fail {
        let doubled = 2 * default_lambda(space.dim());
        let restart = run_cmaes(observed, model, space, base, cfg, seed ^ 0x5eed, Some(doubled))?;
        if restart.best_cost < outcome.best_cost {
            let offset = outcome.trace.len();
            let mut trace = outcome.trace;
            trace.extend(restart.trace.iter().map(|p| TracePoint {
                iteration: p.iteration + offset,
                best_cost: p.best_cost,
            }));
            outcome = CalibrationOutcome { trace, ..restart };
        }
    }
    Ok(outcome)
}

fn run_cmaes(
    observed: &Episode,
    model: &dyn BuildingModel,
    space: &SearchSpace,
    base: &BuildingParams,
    cfg: &CalibrationConfig,
    seed: u64,
    lambda: Option<usize>,
) -> Result<CalibrationOutcome> {
    let mut rng = substream(seed, Stream::Calibration, 0);
    let mid = vec![0.5; space.dim()];
    let mut state = CmaesState::new(&mid, cfg.sigma0, lambda)?;

    let mut best_cost = f64::INFINITY;
    let mut best_params = base.clone();
    let mut trace = Vec::with_capacity(cfg.iterations);
    let mut evaluations = 0;

    for iteration in 0..cfg.iterations {
        let raw = state.ask(&mut rng)?;
        let mut fitnesses = Vec::with_capacity(raw.len());

        // Candidates share the episode horizon, so they run as one batch.
        let mut decoded: Vec<BuildingParams> = Vec::with_capacity(raw.len());
        let mut penalties = Vec::with_capacity(raw.len());
        for r in &raw {
            let (clipped, penalty) = space.clip(r);
            let mut candidate = base.clone();
            space.decode_into(&clipped, &mut candidate)?;
            decoded.push(candidate);
            penalties.push(penalty);
        }
        let scenarios: Vec<PredictScenario<'_>> = decoded
            .iter()
            .map(|p| PredictScenario::from_episode(observed).with_params(p))
            .collect();
        let preds = model.predict_batch(&scenarios)?;
        evaluations += preds.len();

        for ((pred, candidate), penalty) in preds.iter().zip(&decoded).zip(&penalties) {
            let cost = cost_from_prediction(&pred.t_int, &pred.q_total, observed)?;
            if cost < best_cost {
                best_cost = cost;
                best_params = candidate.clone();
            }
            fitnesses.push(cost + penalty);
        }
        state.tell(&raw, &fitnesses)?;
        trace.push(TracePoint {
            iteration,
            best_cost,
        });
    }

    let scenario = PredictScenario::from_episode(observed).with_params(&best_params);
    let pred = model.predict(&scenario)?;
    let report = report_against(&pred, observed, model.normalizer(), model.output_mode())?;

    Ok(CalibrationOutcome {
        theta_hat: best_params,
        report,
        trace,
        best_cost,
        converged: best_cost <= cfg.cost_ceiling,
        evaluations,
    })
}

/// Evaluates calibrated parameters on held-out weeks. The fresh window must
/// not overlap the calibration window.
pub fn validate(
    theta_hat: &BuildingParams,
    model: &dyn BuildingModel,
    fresh: &Episode,
    calibration_window: (usize, usize),
) -> Result<EvalReport> {
    let (cal_start, cal_len) = calibration_window;
    let fresh_start = fresh.start_hour;
    let fresh_end = fresh_start + fresh.horizon();
    let cal_end = cal_start + cal_len;
    if fresh_start < cal_end && cal_start < fresh_end {
        return Err(Error::Schema(format!(
            "validation window {fresh_start}..{fresh_end} overlaps calibration window \
             {cal_start}..{cal_end}"
        )));
    }
    let scenario = PredictScenario::from_episode(fresh).with_params(theta_hat);
    let pred = model.predict(&scenario)?;
    report_against(&pred, fresh, model.normalizer(), model.output_mode())
}

/// Writes the convergence trace as CSV.
pub fn trace_to_csv(trace: &[TracePoint], path: &std::path::Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["iteration", "best_cost"])?;
    for p in trace {
        w.write_record([p.iteration.to_string(), format!("{}", p.best_cost)])?;
    }
    w.flush()?;
    Ok(())
}
