//! Schedule optimization: NSGA-II over the weekly usage settings with the
//! calibrated model as evaluator, Pareto-front extraction, equivalent-comfort
//! selection and the relative energy gain.

pub mod nsga2;

pub use nsga2::{
    crowding_distances, dominates, hypervolume, non_dominated_sort, GenerationStats, Individual,
    Nsga2Config, Problem,
};

use serde::{Deserialize, Serialize};

use crate::config::OptimizationConfig;
use crate::domain::{
    BuildingParams, DayUsage, OccupancySchedule, UsageSchedule, WeatherSeries, Weekday,
    USAGE_FIELDS, WEEKDAYS,
};
use crate::error::{Error, Result};
use crate::predict::{BuildingModel, PredictScenario};
use crate::rng::{stage_rng, Stream};
use crate::sampler::{ParamRange, RangesConfig};

/// Comfort and mean-consumption objectives of one candidate schedule:
/// the RMS gap to the reference temperature over occupied hours, and the
/// mean hourly total consumption.
pub fn objectives(
    t_pred: &[f64],
    q_total_pred: &[f64],
    occupancy: &[f64],
    t_ref: f64,
) -> Result<(f64, f64)> {
    if t_pred.len() != occupancy.len() || q_total_pred.len() != occupancy.len() {
        return Err(Error::Dimension("objective series length mismatch".into()));
    }
    let mut sum_sq = 0.0;
    let mut n_occ = 0usize;
    for (t, o) in t_pred.iter().zip(occupancy) {
        if *o != 0.0 {
            sum_sq += (t - t_ref) * (t - t_ref);
            n_occ += 1;
        }
    }
    if n_occ == 0 {
        return Err(Error::EmptyMask);
    }
    let comf = (sum_sq / n_occ as f64).sqrt();
    let q_mean = q_total_pred.iter().sum::<f64>() / q_total_pred.len() as f64;
    Ok((comf, q_mean))
}

/// Genome layout: 7 weekdays x 12 usage fields in [`USAGE_FIELDS`] order,
/// each gene in [0, 1] and decoded onto its sampling grid.
pub const GENOME_LEN: usize = 7 * USAGE_FIELDS.len();

/// Encodes a schedule onto the unit box, snapping to the grids.
pub fn encode_schedule(usage: &UsageSchedule, ranges: &[ParamRange; 12]) -> Result<Vec<f64>> {
    let mut genome = Vec::with_capacity(GENOME_LEN);
    for day in usage.days() {
        for (j, field) in USAGE_FIELDS.iter().enumerate() {
            let r = &ranges[j];
            let v = r.snap(day.get(field)?);
            let g = if r.max > r.min {
                (v - r.min) / (r.max - r.min)
            } else {
                0.0
            };
            genome.push(g);
        }
    }
    Ok(genome)
}

/// Decodes a genome to a valid schedule: genes map linearly onto the grid,
/// then each day's ordering invariants are repaired.
pub fn decode_schedule(genome: &[f64], ranges: &[ParamRange; 12]) -> Result<UsageSchedule> {
    if genome.len() != GENOME_LEN {
        return Err(Error::Dimension(format!(
            "genome length {} is not {GENOME_LEN}",
            genome.len()
        )));
    }
    let mut days = [DayUsage {
        start_cool: 0.0,
        end_cool: 0.0,
        t_cool_reduced: 0.0,
        t_cool_comfort: 0.0,
        start_heat: 0.0,
        end_heat: 0.0,
        t_heat_reduced: 0.0,
        t_heat_comfort: 0.0,
        start_vent: 0.0,
        end_vent: 0.0,
        t_vent: 0.0,
        vol_vent: 0.0,
    }; 7];
    for (d, day) in days.iter_mut().enumerate() {
        for (j, field) in USAGE_FIELDS.iter().enumerate() {
            let r = &ranges[j];
            let g = genome[d * USAGE_FIELDS.len() + j].clamp(0.0, 1.0);
            day.set(field, r.snap(r.min + g * (r.max - r.min)))?;
        }
        repair_day(day, ranges)?;
    }
    UsageSchedule::new(days)
}

/// Projects one day back onto the feasible set: activation windows ordered,
/// reduced/comfort setpoints on the right side of each other.
fn repair_day(day: &mut DayUsage, ranges: &[ParamRange; 12]) -> Result<()> {
    let idx = |name: &str| USAGE_FIELDS.iter().position(|f| *f == name).unwrap();
    let window_pairs = [("start_cool", "end_cool"), ("start_heat", "end_heat"), ("start_vent", "end_vent")];
    for (s, e) in window_pairs {
        let (sv, ev) = (day.get(s)?, day.get(e)?);
        if sv < ev {
            continue;
        }
        let sr = &ranges[idx(s)];
        let er = &ranges[idx(e)];
        // Pull the start below the end if the grid allows it, otherwise push
        // the end up; fall back to the extreme corners.
        if let Some(fixed) = snap_below(sr, ev) {
            day.set(s, fixed)?;
        } else if let Some(fixed) = snap_above(er, sv) {
            day.set(e, fixed)?;
        } else if sr.min < er.max {
            day.set(s, sr.min)?;
            day.set(e, er.max)?;
        } else {
            return Err(Error::InvalidSchedule(format!(
                "ranges for {s}/{e} admit no ordered pair"
            )));
        }
    }

    // t_heat_reduced <= t_heat_comfort.
    if day.t_heat_reduced > day.t_heat_comfort {
        let r = &ranges[idx("t_heat_reduced")];
        match snap_at_or_below(r, day.t_heat_comfort) {
            Some(v) => day.t_heat_reduced = v,
            None => day.t_heat_reduced = day.t_heat_comfort.min(r.max).max(r.min),
        }
        if day.t_heat_reduced > day.t_heat_comfort {
            day.t_heat_comfort = day.t_heat_reduced;
        }
    }
    // t_cool_comfort <= t_cool_reduced.
    if day.t_cool_comfort > day.t_cool_reduced {
        let r = &ranges[idx("t_cool_reduced")];
        match snap_at_or_above(r, day.t_cool_comfort) {
            Some(v) => day.t_cool_reduced = v,
            None => day.t_cool_reduced = day.t_cool_comfort.min(r.max).max(r.min),
        }
        if day.t_cool_comfort > day.t_cool_reduced {
            day.t_cool_comfort = day.t_cool_reduced;
        }
    }
    Ok(())
}

fn snap_below(r: &ParamRange, x: f64) -> Option<f64> {
    // Largest grid value strictly below x.
    let steps = ((x - r.min) / r.step).ceil() - 1.0;
    if steps < 0.0 {
        return None;
    }
    let v = r.grid_value((steps as usize).min(r.n_points() - 1));
    (v < x).then_some(v)
}

fn snap_above(r: &ParamRange, x: f64) -> Option<f64> {
    let steps = ((x - r.min) / r.step).floor() + 1.0;
    if steps < 0.0 {
        return Some(r.min);
    }
    let i = steps as usize;
    if i >= r.n_points() {
        return None;
    }
    let v = r.grid_value(i);
    (v > x).then_some(v)
}

fn snap_at_or_below(r: &ParamRange, x: f64) -> Option<f64> {
    if x < r.min {
        return None;
    }
    let i = (((x - r.min) / r.step).floor() as usize).min(r.n_points() - 1);
    let v = r.grid_value(i);
    (v <= x).then_some(v)
}

fn snap_at_or_above(r: &ParamRange, x: f64) -> Option<f64> {
    if x > r.max {
        return None;
    }
    let i = (((x - r.min) / r.step).ceil().max(0.0) as usize).min(r.n_points() - 1);
    let v = r.grid_value(i);
    (v >= x).then_some(v)
}

/// The schedule-search problem handed to the NSGA-II engine.
pub struct ScheduleProblem<'a> {
    pub model: &'a dyn BuildingModel,
    pub params: &'a BuildingParams,
    pub occupancy: &'a OccupancySchedule,
    pub weather: &'a WeatherSeries,
    pub anchor: Weekday,
    pub usage_ranges: [ParamRange; 12],
    pub t_ref: f64,
}

impl<'a> ScheduleProblem<'a> {
    pub fn new(
        model: &'a dyn BuildingModel,
        params: &'a BuildingParams,
        occupancy: &'a OccupancySchedule,
        weather: &'a WeatherSeries,
        anchor: Weekday,
        ranges: &RangesConfig,
        t_ref: f64,
    ) -> Result<Self> {
        let mut usage_ranges: Vec<ParamRange> = Vec::with_capacity(12);
        for field in USAGE_FIELDS {
            usage_ranges.push(ranges.usage_range(field)?.clone());
        }
        Ok(ScheduleProblem {
            model,
            params,
            occupancy,
            weather,
            anchor,
            usage_ranges: usage_ranges.try_into().expect("12 usage ranges"),
            t_ref,
        })
    }

    fn occupancy_indicator(&self) -> Vec<f64> {
        self.occupancy
            .hourly_indicator(self.anchor, self.weather.len())
    }

    /// Objectives of one explicit schedule (the baseline, typically).
    pub fn evaluate_schedule(&self, usage: &UsageSchedule) -> Result<(f64, f64)> {
        let scenario = PredictScenario {
            params: self.params,
            usage,
            occupancy: self.occupancy,
            weather: self.weather,
            anchor: self.anchor,
        };
        let pred = self.model.predict(&scenario)?;
        objectives(
            &pred.t_int,
            &pred.q_total,
            &self.occupancy_indicator(),
            self.t_ref,
        )
    }
}

impl Problem for ScheduleProblem<'_> {
    fn genome_len(&self) -> usize {
        GENOME_LEN
    }

    fn repair(&self, genome: &mut [f64]) -> Result<()> {
        // Decode (which repairs) and re-encode so the genome matches the
        // schedule that will be evaluated.
        let schedule = decode_schedule(genome, &self.usage_ranges)?;
        let encoded = encode_schedule(&schedule, &self.usage_ranges)?;
        genome.copy_from_slice(&encoded);
        Ok(())
    }

    fn evaluate(&self, genomes: &[Vec<f64>]) -> Result<Vec<[f64; 2]>> {
        let schedules: Result<Vec<UsageSchedule>> = genomes
            .iter()
            .map(|g| decode_schedule(g, &self.usage_ranges))
            .collect();
        let schedules = schedules?;
        let scenarios: Vec<PredictScenario<'_>> = schedules
            .iter()
            .map(|usage| PredictScenario {
                params: self.params,
                usage,
                occupancy: self.occupancy,
                weather: self.weather,
                anchor: self.anchor,
            })
            .collect();
        let preds = self.model.predict_batch(&scenarios)?;
        let occ = self.occupancy_indicator();
        preds
            .iter()
            .map(|p| {
                let (comf, q) = objectives(&p.t_int, &p.q_total, &occ, self.t_ref)?;
                Ok([comf, q])
            })
            .collect()
    }
}

/// One Pareto compromise with its decoded schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoPoint {
    pub comf: f64,
    pub q_mean: f64,
    pub schedule: UsageSchedule,
    pub genome: Vec<f64>,
}

/// Non-dominated compromises sorted by ascending mean consumption.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoFront {
    pub points: Vec<ParetoPoint>,
}

impl ParetoFront {
    pub fn validate(&self) -> Result<()> {
        for (i, a) in self.points.iter().enumerate() {
            for (j, b) in self.points.iter().enumerate() {
                if i != j && dominates(&[a.comf, a.q_mean], &[b.comf, b.q_mean]) {
                    return Err(Error::Schema("front contains dominated members".into()));
                }
            }
        }
        for w in self.points.windows(2) {
            if !(w[0].q_mean < w[1].q_mean) {
                return Err(Error::Schema("front is not strictly sorted by Q".into()));
            }
        }
        Ok(())
    }

    pub fn to_csv(&self, path: &std::path::Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["comf".to_string(), "q_mean".to_string()];
        for day in WEEKDAYS {
            for field in USAGE_FIELDS {
                header.push(format!("{}_{field}", day.name()));
            }
        }
        w.write_record(&header)?;
        for p in &self.points {
            let mut row = vec![format!("{}", p.comf), format!("{}", p.q_mean)];
            for day in p.schedule.days() {
                for field in USAGE_FIELDS {
                    row.push(format!("{}", day.get(field)?));
                }
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Result of a schedule-optimization run.
#[derive(Debug)]
pub struct OptimizationOutcome {
    pub front: ParetoFront,
    pub baseline: (f64, f64),
    pub history: Vec<GenerationStats>,
    pub eval_log: Vec<[f64; 2]>,
    pub evaluations: usize,
}

/// Runs NSGA-II over the usage schedule, seeding the baseline schedule into
/// the initial population.
pub fn optimize_schedule(
    problem: &ScheduleProblem<'_>,
    baseline_usage: &UsageSchedule,
    cfg: &OptimizationConfig,
    seed: u64,
) -> Result<OptimizationOutcome> {
    let baseline = problem.evaluate_schedule(baseline_usage)?;
    let baseline_genome = encode_schedule(baseline_usage, &problem.usage_ranges)?;

    let engine_cfg = Nsga2Config {
        population: cfg.population,
        generations: cfg.generations,
        sbx_eta: cfg.sbx_eta,
        mutation_eta: cfg.mutation_eta,
        mutation_prob: None,
        keep_eval_log: cfg.keep_eval_log,
    };
    let mut rng = stage_rng(seed, Stream::Optimization);
    let result = nsga2::run(problem, &engine_cfg, &[baseline_genome], &mut rng)?;

    let points: Result<Vec<ParetoPoint>> = result
        .front
        .iter()
        .map(|ind| {
            Ok(ParetoPoint {
                comf: ind.objectives[0],
                q_mean: ind.objectives[1],
                schedule: decode_schedule(&ind.genome, &problem.usage_ranges)?,
                genome: ind.genome.clone(),
            })
        })
        .collect();
    let front = ParetoFront { points: points? };
    front.validate()?;

    Ok(OptimizationOutcome {
        front,
        baseline,
        history: result.history,
        eval_log: result.eval_log,
        evaluations: result.evaluations,
    })
}

/// The selected compromise plus whether the comfort condition had to be
/// abandoned (no member was within `baseline + relax`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedPoint {
    pub point: ParetoPoint,
    pub relax: f64,
    pub comfort_met: bool,
}

/// Picks the cheapest member whose comfort is within `baseline_comf + relax`;
/// falls back to the most comfortable member (flagged) when none qualifies.
pub fn select_equivalent_comfort(
    front: &ParetoFront,
    baseline_comf: f64,
    relax: f64,
) -> Result<SelectedPoint> {
    if front.points.is_empty() {
        return Err(Error::Schema("empty Pareto front".into()));
    }
    let qualifying = front
        .points
        .iter()
        .filter(|p| p.comf <= baseline_comf + relax)
        .min_by(|a, b| a.q_mean.partial_cmp(&b.q_mean).unwrap());
    match qualifying {
        Some(p) => Ok(SelectedPoint {
            point: p.clone(),
            relax,
            comfort_met: true,
        }),
        None => {
            let fallback = front
                .points
                .iter()
                .min_by(|a, b| a.comf.partial_cmp(&b.comf).unwrap())
                .unwrap();
            Ok(SelectedPoint {
                point: fallback.clone(),
                relax,
                comfort_met: false,
            })
        }
    }
}

/// Relative consumption gain in percent.
pub fn relative_gain(baseline_q: f64, optimized_q: f64) -> Result<f64> {
    if !(baseline_q > 0.0) {
        return Err(Error::DegenerateSeries("baseline consumption is zero".into()));
    }
    Ok(100.0 * (baseline_q - optimized_q) / baseline_q)
}

/// Monthly saving forecast from a relative gain and the real monthly
/// consumption.
pub fn gain_forecast_mwh(gain_percent: f64, monthly_consumption_mwh: f64) -> f64 {
    gain_percent / 100.0 * monthly_consumption_mwh
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::AppConfig;

    #[test]
    fn objectives_hand_values() {
        // Perfect comfort.
        let (comf, _) =
            objectives(&[22.5, 22.5], &[1.0, 1.0], &[1.0, 1.0], 22.5).unwrap();
        assert_eq!(comf, 0.0);

        // Symmetric 1-degree misses: RMS is exactly one degree.
        let (comf, q) =
            objectives(&[23.5, 21.5], &[2.0, 4.0], &[1.0, 1.0], 22.5).unwrap();
        assert!((comf - 1.0).abs() < 1e-12);
        assert!((q - 3.0).abs() < 1e-12);

        // Unoccupied hours are ignored by comfort but not by consumption.
        let (comf, q) = objectives(
            &[30.0, 22.5],
            &[2.0, 4.0],
            &[0.0, 1.0],
            22.5,
        )
        .unwrap();
        assert_eq!(comf, 0.0);
        assert!((q - 3.0).abs() < 1e-12);

        assert!(matches!(
            objectives(&[22.0], &[1.0], &[0.0], 22.5),
            Err(Error::EmptyMask)
        ));
    }

    #[test]
    fn equivalent_comfort_selection() {
        let cfg = AppConfig::synthetic_default();
        let mk = |comf: f64, q: f64| ParetoPoint {
            comf,
            q_mean: q,
            schedule: cfg.scenario.usage.clone(),
            genome: vec![],
        };
        let front = ParetoFront {
            points: vec![mk(1.0, 10.0), mk(0.5, 12.0)],
        };
        // Baseline comfort 0.6: only the (0.5, 12) member qualifies.
        let sel = select_equivalent_comfort(&front, 0.6, 0.0).unwrap();
        assert_eq!(sel.point.comf, 0.5);
        assert!(sel.comfort_met);

        // Relaxing by 0.5 admits the cheaper member.
        let sel = select_equivalent_comfort(&front, 0.6, 0.5).unwrap();
        assert_eq!(sel.point.q_mean, 10.0);

        // Nothing qualifies: fall back to best comfort, flagged.
        let sel = select_equivalent_comfort(&front, 0.1, 0.0).unwrap();
        assert_eq!(sel.point.comf, 0.5);
        assert!(!sel.comfort_met);
    }

    #[test]
    fn relative_gain_hand_values() {
        assert!((relative_gain(100.0, 94.68).unwrap() - 5.32).abs() < 1e-12);
        assert_eq!(relative_gain(50.0, 50.0).unwrap(), 0.0);
        assert!(relative_gain(0.0, 1.0).is_err());
        let forecast = gain_forecast_mwh(9.92, 100.4);
        assert!((forecast - 9.96).abs() < 5e-3);
    }

    #[test]
    fn decode_respects_grids_and_invariants() {
        let cfg = AppConfig::synthetic_default();
        let mut ranges: Vec<ParamRange> = Vec::new();
        for field in USAGE_FIELDS {
            ranges.push(cfg.ranges.usage_range(field).unwrap().clone());
        }
        let ranges: [ParamRange; 12] = ranges.try_into().unwrap();

        let mut rng = crate::rng::stage_rng(3, Stream::Optimization);
        for _ in 0..200 {
            let genome: Vec<f64> = (0..GENOME_LEN).map(|_| rand::Rng::gen(&mut rng)).collect();
            let schedule = decode_schedule(&genome, &ranges).unwrap();
            for day in schedule.days() {
                for (j, field) in USAGE_FIELDS.iter().enumerate() {
                    let v = day.get(field).unwrap();
                    let r = &ranges[j];
                    assert!(r.contains(v), "{field} value {v} outside range");
                    // On-grid check.
                    let snapped = r.snap(v);
                    assert!((snapped - v).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn encode_decode_schedule_roundtrip() {
        let cfg = AppConfig::synthetic_default();
        let mut ranges: Vec<ParamRange> = Vec::new();
        for field in USAGE_FIELDS {
            ranges.push(cfg.ranges.usage_range(field).unwrap().clone());
        }
        let ranges: [ParamRange; 12] = ranges.try_into().unwrap();
        let genome = encode_schedule(&cfg.scenario.usage, &ranges).unwrap();
        let back = decode_schedule(&genome, &ranges).unwrap();
        for (a, b) in cfg.scenario.usage.days().iter().zip(back.days()) {
            for field in USAGE_FIELDS {
                let va = a.get(field).unwrap();
                let vb = b.get(field).unwrap();
                // Values sit on the grid already except the scenario's
                // vol_vent, which snaps to the nearest grid point.
                assert!(
                    (va - vb).abs() <= ranges[USAGE_FIELDS
                        .iter()
                        .position(|f| *f == field)
                        .unwrap()]
                    .step
                        / 2.0
                        + 1e-9
                );
            }
        }
    }
}
