//! Run configuration: a single JSON file describing the building, the
//! sampling grids, normalization bounds, simulator coefficients and the
//! per-stage settings. Unknown keys are rejected everywhere to guard
//! against silent typos in range definitions.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::domain::{
    derive_occupancy_defaults, BuildingGeometry, BuildingParams, DayUsage, Normalizer,
    OccupancySchedule, UsageSchedule, Weekday, THETA_FIELDS,
    WEATHER_CHANNELS,
};
use crate::error::{Error, Result};
use crate::refsim::OracleConfig;
use crate::sampler::{ParamRange, RangesConfig};

fn default_schema_version() -> u32 {
    1
}

/// Where the weather record comes from: a CSV file, or the built-in
/// synthetic generator (test/bundled runs).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum WeatherSource {
    Csv { path: PathBuf },
    Synthetic { hours: usize, seed: u64 },
}

/// Physical bounds used for min-max normalization of channels that have no
/// sampling grid: weather inputs, indoor temperature and the consumption
/// outputs. Consumption bounds default to `headroom x` the largest value the
/// simulator can emit for the configured building; explicit overrides win.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundsConfig {
    pub weather: BTreeMap<String, (f64, f64)>,
    pub temperature: (f64, f64),
    pub consumption_headroom: f64,
    pub consumption_overrides: BTreeMap<String, (f64, f64)>,
}

impl Default for BoundsConfig {
    fn default() -> Self {
        let mut weather = BTreeMap::new();
        weather.insert("DNI".into(), (0.0, 1100.0));
        weather.insert("IBEAM_H".into(), (0.0, 1200.0));
        weather.insert("IBEAM_N".into(), (0.0, 1100.0));
        weather.insert("IDIFF_H".into(), (0.0, 1200.0));
        weather.insert("IGLOB_H".into(), (0.0, 1300.0));
        weather.insert("RHUM".into(), (0.0, 100.0));
        weather.insert("TAMB".into(), (-10.0, 45.0));
        BoundsConfig {
            weather,
            temperature: (0.0, 40.0),
            consumption_headroom: 1.25,
            consumption_overrides: BTreeMap::new(),
        }
    }
}

/// A concrete building scenario: parameter values plus schedules. Used by
/// `simulate` and as the hidden truth in synthetic calibration studies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub theta: BTreeMap<String, f64>,
    pub usage: UsageSchedule,
    pub occupancy: OccupancySchedule,
    pub anchor: Weekday,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplingConfig {
    pub n_examples: usize,
    pub horizon_hours: usize,
    /// Fraction of episodes tagged as the validation split.
    pub split_fraction: f64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            n_examples: 2000,
            horizon_hours: 336,
            split_fraction: 0.2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputMode {
    /// Indoor temperature plus every consumption channel (8 outputs).
    Full,
    /// Indoor temperature plus total consumption (2 outputs).
    Reduced,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    pub d_emb: usize,
    pub n_layers: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Weight of the temperature term in the combined loss.
    pub beta: f64,
    pub dropout: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub output_mode: OutputMode,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            d_emb: 64,
            n_layers: 4,
            learning_rate: 1e-3,
            batch_size: 32,
            epochs: 50,
            beta: 0.5,
            dropout: 0.1,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            output_mode: OutputMode::Full,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::Config(format!("beta {} outside [0, 1]", self.beta)));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        if self.d_emb == 0 || self.n_layers == 0 || self.batch_size == 0 {
            return Err(Error::Config(
                "d_emb, n_layers and batch_size must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrationConfig {
    /// CMA-ES generations.
    pub iterations: usize,
    /// Initial step size in encoded [0, 1] coordinates.
    pub sigma0: f64,
    /// Cost above which the run is flagged "not converged".
    pub cost_ceiling: f64,
    /// Retry once with doubled population when flagged.
    pub restart_on_fail: bool,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            iterations: 300,
            sigma0: 0.3,
            cost_ceiling: 0.25,
            restart_on_fail: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizationConfig {
    pub population: usize,
    pub generations: usize,
    /// Comfort reference temperature, °C.
    pub t_ref: f64,
    /// Comfort relaxation for the alternative selection, °C.
    pub comfort_relax: f64,
    pub sbx_eta: f64,
    pub mutation_eta: f64,
    /// Real monthly consumption used to turn the relative gain into an
    /// absolute MWh forecast.
    pub monthly_consumption_mwh: Option<f64>,
    /// Keep a log of every evaluation for non-domination replay checks.
    pub keep_eval_log: bool,
}

impl Default for OptimizationConfig {
    fn default() -> Self {
        OptimizationConfig {
            population: 64,
            generations: 3000,
            t_ref: 22.5,
            comfort_relax: 0.5,
            sbx_eta: 15.0,
            mutation_eta: 20.0,
            monthly_consumption_mwh: None,
            keep_eval_log: false,
        }
    }
}

/// Top-level run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AppConfig {
    #[serde(default = "default_schema_version")]
    pub schema_version: u32,
    pub seed: u64,
    pub geometry: BuildingGeometry,
    pub ranges: RangesConfig,
    #[serde(default)]
    pub bounds: BoundsConfig,
    #[serde(default)]
    pub oracle: OracleConfig,
    pub weather: WeatherSource,
    pub scenario: Scenario,
    #[serde(default)]
    pub sampling: SamplingConfig,
    #[serde(default)]
    pub training: TrainingConfig,
    #[serde(default)]
    pub calibration: CalibrationConfig,
    #[serde(default)]
    pub optimization: OptimizationConfig,
}

impl AppConfig {
    pub fn load(path: &Path) -> Result<AppConfig> {
        let bytes = std::fs::read(path).map_err(|e| {
            Error::MissingArtifact(format!("config {}: {e}", path.display()))
        })?;
        let cfg: AppConfig = serde_json::from_slice(&bytes)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != 1 {
            return Err(Error::Schema(format!(
                "unsupported schema_version {}",
                self.schema_version
            )));
        }
        self.geometry.validate()?;
        self.ranges.validate()?;
        self.oracle.validate()?;
        self.training.validate()?;
        for name in WEATHER_CHANNELS {
            if !self.bounds.weather.contains_key(name) {
                return Err(Error::Config(format!("missing weather bound for {name}")));
            }
        }
        for name in self.scenario.theta.keys() {
            if !THETA_FIELDS.contains(&name.as_str()) {
                return Err(Error::Config(format!("unknown scenario field {name}")));
            }
        }
        for field in THETA_FIELDS {
            if !self.scenario.theta.contains_key(field) {
                return Err(Error::Config(format!("scenario is missing {field}")));
            }
        }
        if self.optimization.population == 0 || self.optimization.population % 2 != 0 {
            return Err(Error::Config("optimization population must be even".into()));
        }
        Ok(())
    }

    /// Digest of the canonical serialized config.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }

    /// The scenario's full building description.
    pub fn scenario_params(&self) -> Result<BuildingParams> {
        let mut params = BuildingParams {
            airchange_infiltration: 0.0,
            capacitance: 0.0,
            power_heat_max: 0.0,
            power_cool_max: 0.0,
            n_occupants: 0.0,
            n_pcs: 0.0,
            percent_light_night: 0.0,
            percent_pcs_night: 0.0,
            facade_thickness: [0.0; 4],
            roof_thickness: 0.0,
            facade_window_percent: [0.0; 4],
            geometry: self.geometry.clone(),
        };
        for (name, value) in &self.scenario.theta {
            params.set_theta(name, *value)?;
        }
        params.validate()?;
        Ok(params)
    }

    /// Occupant/PC counts held fixed during calibration and optimization.
    pub fn fixed_occupancy_counts(&self) -> Result<(f64, f64)> {
        let (n_occ, n_pcs) = derive_occupancy_defaults(self.geometry.total_floor_area)?;
        Ok((n_occ as f64, n_pcs as f64))
    }

    /// Loads or synthesizes the weather record.
    pub fn load_weather(&self) -> Result<crate::domain::WeatherSeries> {
        match &self.weather {
            WeatherSource::Csv { path } => crate::domain::WeatherSeries::from_csv(path),
            WeatherSource::Synthetic { hours, seed } => {
                Ok(crate::domain::WeatherSeries::synthetic(*hours, *seed))
            }
        }
    }

    /// Builds the normalizer over every feature and output channel.
    ///
    /// Grid-sampled channels use their range bounds; weather and temperature
    /// use the configured physical bounds; consumption channels get
    /// `headroom x` the largest value the simulator can emit.
    pub fn build_normalizer(&self) -> Result<Normalizer> {
        let mut bounds: BTreeMap<String, (f64, f64)> = BTreeMap::new();
        for r in &self.ranges.theta {
            bounds.insert(r.name.clone(), (r.min, r.max));
        }
        for r in &self.ranges.usage {
            bounds.insert(r.name.clone(), (r.min, r.max));
        }
        for (name, b) in &self.bounds.weather {
            bounds.insert(name.clone(), *b);
        }
        bounds.insert("T_INT_OFFICE".into(), self.bounds.temperature);

        let h = self.bounds.consumption_headroom;
        let volume = self.geometry.total_floor_area * self.oracle.ceiling_height;
        let tamb = self.bounds.weather["TAMB"];
        let t_vent = self.ranges.usage_range("t_vent")?;
        let vol_vent_max = self.ranges.usage_range("vol_vent")?.max;
        let ahu_flow = vol_vent_max * volume * self.oracle.air_heat_capacity;

        let q_bounds: [(&str, f64); 7] = [
            ("Q_AC_OFFICE", self.ranges.theta_range("power_cool_max")?.max),
            ("Q_HEAT_OFFICE", self.ranges.theta_range("power_heat_max")?.max),
            (
                "Q_PEOPLE",
                self.ranges.theta_range("n_occupants")?.max * self.oracle.occupant_gain_w / 1000.0,
            ),
            (
                "Q_EQP",
                self.ranges.theta_range("n_pcs")?.max * self.oracle.pc_gain_w / 1000.0,
            ),
            (
                "Q_LIGHT",
                self.oracle.lighting_w_per_m2 * self.geometry.total_floor_area / 1000.0,
            ),
            ("Q_AHU_C", ahu_flow * (tamb.1 - t_vent.min).max(1.0)),
            ("Q_AHU_H", ahu_flow * (t_vent.max - tamb.0).max(1.0)),
        ];
        let mut q_total_hi = 0.0;
        for (name, peak) in q_bounds {
            let hi = h * peak;
            bounds.insert(name.into(), (0.0, hi));
            if name != "Q_PEOPLE" {
                q_total_hi += hi;
            }
        }
        bounds.insert("Q_TOTAL".into(), (0.0, q_total_hi));

        for (name, b) in &self.bounds.consumption_overrides {
            bounds.insert(name.clone(), *b);
        }
        Normalizer::new(bounds)
    }

    /// Desk-scale configuration over the canonical grids with a synthetic
    /// building and synthetic summer weather. Used by tests and as the
    /// template written by `thermoforge init-config`.
    pub fn synthetic_default() -> AppConfig {
        let theta = vec![
            range("airchange_infiltration", 0.1, 0.5, 0.1, "vol/h"),
            range("capacitance", 50.0, 300.0, 10.0, "kJ/(K*m3)"),
            range("power_heat_max", 0.0, 1000.0, 100.0, "kW"),
            range("power_cool_max", 0.0, 1000.0, 100.0, "kW"),
            range("n_occupants", 1000.0, 2000.0, 200.0, "count"),
            range("n_pcs", 1000.0, 2000.0, 200.0, "count"),
            range("percent_light_night", 0.0, 70.0, 10.0, "%"),
            range("percent_pcs_night", 0.0, 70.0, 10.0, "%"),
            range("facade_thickness_1", 0.05, 0.15, 0.05, "m"),
            range("facade_thickness_2", 0.05, 0.15, 0.05, "m"),
            range("facade_thickness_3", 0.05, 0.15, 0.05, "m"),
            range("facade_thickness_4", 0.05, 0.15, 0.05, "m"),
            range("roof_thickness", 0.05, 0.15, 0.05, "m"),
            range("facade_window_percent_1", 40.0, 50.0, 5.0, "%"),
            range("facade_window_percent_2", 40.0, 50.0, 5.0, "%"),
            range("facade_window_percent_3", 40.0, 50.0, 5.0, "%"),
            range("facade_window_percent_4", 40.0, 50.0, 5.0, "%"),
        ];
        let usage = vec![
            range("start_cool", 7.0, 9.0, 1.0, "h"),
            range("end_cool", 18.0, 20.0, 1.0, "h"),
            range("t_cool_reduced", 24.0, 30.0, 0.5, "degC"),
            range("t_cool_comfort", 20.0, 24.0, 0.5, "degC"),
            range("start_heat", 6.0, 8.0, 1.0, "h"),
            range("end_heat", 17.0, 19.0, 1.0, "h"),
            range("t_heat_reduced", 17.0, 22.0, 0.5, "degC"),
            range("t_heat_comfort", 22.0, 24.0, 0.5, "degC"),
            range("start_vent", 7.0, 9.0, 1.0, "h"),
            range("end_vent", 18.0, 20.0, 1.0, "h"),
            range("t_vent", 18.0, 26.0, 0.5, "degC"),
            // The source grid spans 0.7..1.7 by 0.3, which does not divide
            // evenly; 0.2 keeps the same span on a valid grid.
            range("vol_vent", 0.7, 1.7, 0.2, "vol/h"),
        ];
        let occupancy = vec![
            range("start_occupation", 7.0, 9.0, 1.0, "h"),
            range("end_occupation", 17.0, 20.0, 1.0, "h"),
        ];

        let mut scenario_theta = BTreeMap::new();
        for (name, v) in [
            ("airchange_infiltration", 0.3),
            ("capacitance", 210.0),
            ("power_heat_max", 600.0),
            ("power_cool_max", 700.0),
            ("n_occupants", 1028.0),
            ("n_pcs", 1234.0),
            ("percent_light_night", 20.0),
            ("percent_pcs_night", 30.0),
            ("facade_thickness_1", 0.10),
            ("facade_thickness_2", 0.10),
            ("facade_thickness_3", 0.05),
            ("facade_thickness_4", 0.15),
            ("roof_thickness", 0.10),
            ("facade_window_percent_1", 45.0),
            ("facade_window_percent_2", 40.0),
            ("facade_window_percent_3", 50.0),
            ("facade_window_percent_4", 45.0),
        ] {
            scenario_theta.insert(name.to_string(), v);
        }

        let scenario_day = DayUsage {
            start_cool: 8.0,
            end_cool: 19.0,
            t_cool_reduced: 27.0,
            t_cool_comfort: 23.0,
            start_heat: 7.0,
            end_heat: 18.0,
            t_heat_reduced: 19.0,
            t_heat_comfort: 22.5,
            start_vent: 8.0,
            end_vent: 19.0,
            t_vent: 21.0,
            vol_vent: 1.1,
        };

        AppConfig {
            schema_version: 1,
            seed: 42,
            geometry: BuildingGeometry {
                facade_area: [2314.0, 1917.0, 2123.0, 1725.0],
                roof_area: 2304.0,
                ground_area: 2304.0,
                total_floor_area: 18_512.0,
            },
            ranges: RangesConfig {
                theta,
                usage,
                occupancy,
            },
            bounds: BoundsConfig::default(),
            oracle: OracleConfig::default(),
            weather: WeatherSource::Synthetic {
                hours: 672,
                seed: 2020,
            },
            scenario: Scenario {
                theta: scenario_theta,
                usage: UsageSchedule::uniform(scenario_day).expect("valid scenario day"),
                occupancy: OccupancySchedule::uniform(8.0, 18.0).expect("valid occupancy"),
                anchor: Weekday::Monday,
            },
            sampling: SamplingConfig::default(),
            training: TrainingConfig::default(),
            calibration: CalibrationConfig::default(),
            optimization: OptimizationConfig::default(),
        }
    }
}

fn range(name: &str, min: f64, max: f64, step: f64, unit: &str) -> ParamRange {
    ParamRange::new(name, min, max, step, unit).expect("valid builtin range")
}
