//! A common prediction interface over the trained surrogate and the
//! reference simulator, so calibration and optimization can drive either.

use ndarray::{Array2, ArrayView2};

use crate::config::OutputMode;
use crate::domain::{
    expand_inputs, BuildingParams, Episode, FeatureLayout, Normalizer, OccupancySchedule,
    UsageSchedule, WeatherSeries, Weekday, OUTPUT_CHANNELS,
};
use crate::error::{Error, Result};
use crate::metrics::{EvalReport, ReportInputs};
use crate::nn::MetamodelWeights;
use crate::refsim::{self, OracleConfig};

/// One prediction request: the building, its schedules and the weather.
#[derive(Clone, Copy)]
pub struct PredictScenario<'a> {
    pub params: &'a BuildingParams,
    pub usage: &'a UsageSchedule,
    pub occupancy: &'a OccupancySchedule,
    pub weather: &'a WeatherSeries,
    pub anchor: Weekday,
}

impl<'a> PredictScenario<'a> {
    pub fn from_episode(ep: &'a Episode) -> Self {
        PredictScenario {
            params: &ep.params,
            usage: &ep.usage,
            occupancy: &ep.occupancy,
            weather: &ep.weather,
            anchor: ep.anchor,
        }
    }

    pub fn with_params(self, params: &'a BuildingParams) -> Self {
        PredictScenario { params, ..self }
    }

    pub fn with_usage(self, usage: &'a UsageSchedule) -> Self {
        PredictScenario { usage, ..self }
    }
}

/// Predicted series in both model space and physical units.
#[derive(Debug, Clone)]
pub struct PredictedSeries {
    /// Indoor temperature, °C.
    pub t_int: Vec<f64>,
    /// Hourly total consumption, kWh.
    pub q_total: Vec<f64>,
    /// Raw normalized outputs, `(horizon, n_outputs)`.
    pub norm_outputs: Array2<f64>,
}

/// Forward model used by calibration and schedule optimization.
pub trait BuildingModel: Sync {
    fn normalizer(&self) -> &Normalizer;
    fn output_mode(&self) -> OutputMode;
    fn predict(&self, scenario: &PredictScenario<'_>) -> Result<PredictedSeries>;

    /// Batched prediction; scenarios must share the same horizon.
    fn predict_batch(&self, scenarios: &[PredictScenario<'_>]) -> Result<Vec<PredictedSeries>> {
        scenarios.iter().map(|s| self.predict(s)).collect()
    }
}

// ---------------------------------------------------------------------------
// Surrogate-backed predictor
// ---------------------------------------------------------------------------

/// The trained surrogate plus the preprocessing it was trained with.
pub struct MetamodelPredictor {
    pub weights: MetamodelWeights,
    pub normalizer: Normalizer,
    pub layout: FeatureLayout,
    pub output_mode: OutputMode,
}

impl MetamodelPredictor {
    pub fn new(
        weights: MetamodelWeights,
        normalizer: Normalizer,
        layout: FeatureLayout,
        output_mode: OutputMode,
    ) -> Result<Self> {
        if weights.layout.input_width != layout.width() {
            return Err(Error::Dimension(format!(
                "network input width {} does not match feature layout width {}",
                weights.layout.input_width,
                layout.width()
            )));
        }
        Ok(MetamodelPredictor {
            weights,
            normalizer,
            layout,
            output_mode,
        })
    }

    fn series_from_outputs(&self, outputs: Array2<f64>) -> Result<PredictedSeries> {
        series_from_norm_outputs(outputs, &self.normalizer, self.output_mode)
    }
}

/// Denormalizes raw model outputs into physical series.
pub fn series_from_norm_outputs(
    outputs: Array2<f64>,
    normalizer: &Normalizer,
    output_mode: OutputMode,
) -> Result<PredictedSeries> {
    let n = outputs.nrows();
    let mut t_int = Vec::with_capacity(n);
    let mut q_total = Vec::with_capacity(n);
    match output_mode {
        OutputMode::Full => {
            for k in 0..n {
                t_int.push(normalizer.denormalize("T_INT_OFFICE", outputs[[k, 0]])?);
                let mut total = 0.0;
                for (j, ch) in OUTPUT_CHANNELS.iter().enumerate().skip(1) {
                    let v = normalizer.denormalize(ch.name(), outputs[[k, j]])?;
                    // Q_PEOPLE is a gain, not a consumption.
                    if ch.name() != "Q_PEOPLE" {
                        total += v;
                    }
                }
                q_total.push(total);
            }
        }
        OutputMode::Reduced => {
            for k in 0..n {
                t_int.push(normalizer.denormalize("T_INT_OFFICE", outputs[[k, 0]])?);
                q_total.push(normalizer.denormalize("Q_TOTAL", outputs[[k, 1]])?);
            }
        }
    }
    Ok(PredictedSeries {
        t_int,
        q_total,
        norm_outputs: outputs,
    })
}

impl BuildingModel for MetamodelPredictor {
    fn normalizer(&self) -> &Normalizer {
        &self.normalizer
    }

    fn output_mode(&self) -> OutputMode {
        self.output_mode
    }

    fn predict(&self, scenario: &PredictScenario<'_>) -> Result<PredictedSeries> {
        let features = self.expand(scenario)?;
        let outputs = self.weights.forward(&features.view())?;
        self.series_from_outputs(outputs)
    }

    fn predict_batch(&self, scenarios: &[PredictScenario<'_>]) -> Result<Vec<PredictedSeries>> {
        let feature_mats: Result<Vec<Array2<f64>>> =
            scenarios.iter().map(|s| self.expand(s)).collect();
        let feature_mats = feature_mats?;
        let views: Vec<ArrayView2<f64>> = feature_mats.iter().map(|f| f.view()).collect();
        let outputs = self.weights.forward_batch(&views)?;
        outputs
            .into_iter()
            .map(|o| self.series_from_outputs(o))
            .collect()
    }
}

impl MetamodelPredictor {
    fn expand(&self, s: &PredictScenario<'_>) -> Result<Array2<f64>> {
        expand_inputs(
            s.params,
            s.usage,
            s.occupancy,
            s.weather,
            s.anchor,
            &self.normalizer,
            &self.layout,
        )
    }
}

// ---------------------------------------------------------------------------
// Oracle-backed predictor
// ---------------------------------------------------------------------------

/// The reference simulator behind the same interface; used for synthetic
/// studies and driver tests.
pub struct OraclePredictor {
    pub oracle: OracleConfig,
    pub normalizer: Normalizer,
}

impl BuildingModel for OraclePredictor {
    fn normalizer(&self) -> &Normalizer {
        &self.normalizer
    }

    fn output_mode(&self) -> OutputMode {
        OutputMode::Full
    }

    fn predict(&self, s: &PredictScenario<'_>) -> Result<PredictedSeries> {
        let ep = refsim::simulate(
            s.params,
            s.usage,
            s.occupancy,
            s.weather,
            s.anchor,
            0,
            &self.oracle,
        )?;
        let n = ep.horizon();
        let mut norm = Array2::zeros((n, OUTPUT_CHANNELS.len()));
        for (j, ch) in OUTPUT_CHANNELS.iter().enumerate() {
            let series = ep.outputs.channel(*ch);
            for k in 0..n {
                norm[[k, j]] = self.normalizer.normalize(ch.name(), series[k])?;
            }
        }
        Ok(PredictedSeries {
            t_int: ep.outputs.t_int.clone(),
            q_total: ep.outputs.total_consumption(),
            norm_outputs: norm,
        })
    }
}

// ---------------------------------------------------------------------------
// Report assembly
// ---------------------------------------------------------------------------

/// Builds the full metric block for a prediction against an observed episode.
pub fn report_against(
    pred: &PredictedSeries,
    observed: &Episode,
    normalizer: &Normalizer,
    output_mode: OutputMode,
) -> Result<EvalReport> {
    let n = observed.horizon();
    if pred.t_int.len() != n {
        return Err(Error::Dimension(format!(
            "prediction covers {} hours, observations {n}",
            pred.t_int.len()
        )));
    }
    let occupancy = observed.occupancy_indicator();

    let mut t_truth_norm = Vec::with_capacity(n);
    for k in 0..n {
        t_truth_norm.push(normalizer.normalize("T_INT_OFFICE", observed.outputs.t_int[k])?);
    }
    let t_pred_norm: Vec<f64> = pred.norm_outputs.column(0).to_vec();

    // Normalized consumption channel pairs, matching the trained heads.
    let mut q_pred_cols: Vec<Vec<f64>> = Vec::new();
    let mut q_truth_cols: Vec<Vec<f64>> = Vec::new();
    match output_mode {
        OutputMode::Full => {
            for (j, ch) in OUTPUT_CHANNELS.iter().enumerate().skip(1) {
                q_pred_cols.push(pred.norm_outputs.column(j).to_vec());
                let series = observed.outputs.channel(*ch);
                let mut truth = Vec::with_capacity(n);
                for k in 0..n {
                    truth.push(normalizer.normalize(ch.name(), series[k])?);
                }
                q_truth_cols.push(truth);
            }
        }
        OutputMode::Reduced => {
            q_pred_cols.push(pred.norm_outputs.column(1).to_vec());
            let totals = observed.outputs.total_consumption();
            let mut truth = Vec::with_capacity(n);
            for k in 0..n {
                truth.push(normalizer.normalize("Q_TOTAL", totals[k])?);
            }
            q_truth_cols.push(truth);
        }
    }

    let q_truth_total = observed.outputs.total_consumption();
    let q_norm: Vec<(&[f64], &[f64])> = q_pred_cols
        .iter()
        .zip(&q_truth_cols)
        .map(|(p, t)| (p.as_slice(), t.as_slice()))
        .collect();
    EvalReport::compute(&ReportInputs {
        t_norm: (&t_pred_norm, &t_truth_norm),
        q_norm,
        t_phys: (&pred.t_int, &observed.outputs.t_int),
        q_total_phys: (&pred.q_total, &q_truth_total),
        occupancy: &occupancy,
    })
}
