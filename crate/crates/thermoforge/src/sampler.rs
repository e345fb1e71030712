//! Dataset construction by uniform grid sampling of building parameters and
//! schedules under fixed weather.

use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::domain::{
    BuildingGeometry, BuildingParams, DayUsage, Episode, OccupancySchedule, UsageSchedule,
    WeatherSeries, Weekday,
};
use crate::domain::{FeatureLayout, Normalizer};
use crate::error::{Error, Result};
use crate::refsim::{self, OracleConfig};
use crate::rng::{substream, Stream};

/// Relative tolerance when checking that a range spans a whole number of steps.
const GRID_TOL: f64 = 1e-6;

/// One sampled variable: a uniform grid `{min, min+step, ..., max}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamRange {
    pub name: String,
    pub min: f64,
    pub max: f64,
    pub step: f64,
    pub unit: String,
}

impl ParamRange {
    pub fn new(name: &str, min: f64, max: f64, step: f64, unit: &str) -> Result<Self> {
        let r = ParamRange {
            name: name.to_string(),
            min,
            max,
            step,
            unit: unit.to_string(),
        };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.min <= self.max) {
            return Err(Error::Config(format!(
                "range {}: min {} > max {}",
                self.name, self.min, self.max
            )));
        }
        if !(self.step > 0.0) {
            return Err(Error::Config(format!(
                "range {}: step must be positive",
                self.name
            )));
        }
        let span = (self.max - self.min) / self.step;
        if (span - span.round()).abs() > GRID_TOL * span.max(1.0) {
            return Err(Error::Config(format!(
                "range {}: span {}..{} is not a whole number of steps of {}",
                self.name, self.min, self.max, self.step
            )));
        }
        Ok(())
    }

    /// Number of grid points.
    pub fn n_points(&self) -> usize {
        ((self.max - self.min) / self.step).round() as usize + 1
    }

    pub fn grid_value(&self, i: usize) -> f64 {
        if i + 1 == self.n_points() {
            self.max
        } else {
            self.min + i as f64 * self.step
        }
    }

    /// Uniform draw over the grid points.
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        let n = self.n_points();
        self.grid_value(rng.gen_range(0..n))
    }

    pub fn contains(&self, x: f64) -> bool {
        self.min <= x && x <= self.max
    }

    /// Nearest grid point to `x` (after clamping to the range).
    pub fn snap(&self, x: f64) -> f64 {
        let clamped = x.clamp(self.min, self.max);
        let i = ((clamped - self.min) / self.step).round() as usize;
        self.grid_value(i.min(self.n_points() - 1))
    }
}

/// All sampling ranges: the 17 building-parameter grids, the 12 usage grids
/// (shared by every weekday) and the two occupancy grids (Monday-Friday).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RangesConfig {
    pub theta: Vec<ParamRange>,
    pub usage: Vec<ParamRange>,
    pub occupancy: Vec<ParamRange>,
}

impl RangesConfig {
    pub fn validate(&self) -> Result<()> {
        let check = |ranges: &[ParamRange], expected: &[&str], what: &str| -> Result<()> {
            let names: Vec<&str> = ranges.iter().map(|r| r.name.as_str()).collect();
            if names != expected {
                return Err(Error::Config(format!(
                    "{what} ranges must name exactly {expected:?} in order, got {names:?}"
                )));
            }
            for r in ranges {
                r.validate()?;
            }
            Ok(())
        };
        check(&self.theta, &crate::domain::THETA_FIELDS, "theta")?;
        check(&self.usage, &crate::domain::USAGE_FIELDS, "usage")?;
        check(
            &self.occupancy,
            &["start_occupation", "end_occupation"],
            "occupancy",
        )?;
        Ok(())
    }

    pub fn theta_range(&self, name: &str) -> Result<&ParamRange> {
        self.theta
            .iter()
            .find(|r| r.name == name)
            .ok_or_else(|| Error::UnknownChannel(name.to_string()))
    }

    pub fn usage_range(&self, name: &str) -> Result<&ParamRange> {
        self.usage
            .iter()
            .find(|r| r.name == name)
            .ok_or_else(|| Error::UnknownChannel(name.to_string()))
    }

    /// Content digest over the serialized ranges.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("ranges serialize");
        hex::encode(Sha256::digest(bytes))
    }
}

const RESAMPLE_CAP: usize = 1000;

/// Draws one configuration uniformly from the grids. Schedule ordering
/// invariants are enforced by resampling the violating pair.
pub fn sample_configuration(
    ranges: &RangesConfig,
    geometry: &BuildingGeometry,
    rng: &mut ChaCha8Rng,
) -> Result<(BuildingParams, UsageSchedule, OccupancySchedule)> {
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
        geometry: geometry.clone(),
    };
    for r in &ranges.theta {
        params.set_theta(&r.name, r.sample(rng))?;
    }

    let mut days = [sample_day(ranges, rng)?; 7];
    for day in days.iter_mut().skip(1) {
        *day = sample_day(ranges, rng)?;
    }
    let usage = UsageSchedule::new(days)?;

    let start_r = &ranges.occupancy[0];
    let end_r = &ranges.occupancy[1];
    let mut windows = [(0.0, 0.0); 5];
    for w in &mut windows {
        *w = sample_ordered_pair(start_r, end_r, rng)?;
    }
    let occupancy = OccupancySchedule::new(windows)?;

    Ok((params, usage, occupancy))
}

fn sample_ordered_pair(
    start: &ParamRange,
    end: &ParamRange,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, f64)> {
    for _ in 0..RESAMPLE_CAP {
        let s = start.sample(rng);
        let e = end.sample(rng);
        if s < e {
            return Ok((s, e));
        }
    }
    Err(Error::EmptyGrid(format!(
        "{}/{}: no ordered draw found",
        start.name, end.name
    )))
}

fn sample_day(ranges: &RangesConfig, rng: &mut ChaCha8Rng) -> Result<DayUsage> {
    let pair = |a: &str, b: &str, rng: &mut ChaCha8Rng| -> Result<(f64, f64)> {
        sample_ordered_pair(ranges.usage_range(a)?, ranges.usage_range(b)?, rng)
    };
    let ordered = |lo_name: &str, hi_name: &str, rng: &mut ChaCha8Rng| -> Result<(f64, f64)> {
        let lo_r = ranges.usage_range(lo_name)?;
        let hi_r = ranges.usage_range(hi_name)?;
        for _ in 0..RESAMPLE_CAP {
            let lo = lo_r.sample(rng);
            let hi = hi_r.sample(rng);
            if lo <= hi {
                return Ok((lo, hi));
            }
        }
        Err(Error::EmptyGrid(format!(
            "{lo_name}/{hi_name}: no ordered draw found"
        )))
    };

    let (start_cool, end_cool) = pair("start_cool", "end_cool", rng)?;
    let (t_cool_comfort, t_cool_reduced) = ordered("t_cool_comfort", "t_cool_reduced", rng)?;
    let (start_heat, end_heat) = pair("start_heat", "end_heat", rng)?;
    let (t_heat_reduced, t_heat_comfort) = ordered("t_heat_reduced", "t_heat_comfort", rng)?;
    let (start_vent, end_vent) = pair("start_vent", "end_vent", rng)?;
    let t_vent = ranges.usage_range("t_vent")?.sample(rng);
    let vol_vent = ranges.usage_range("vol_vent")?.sample(rng);

    Ok(DayUsage {
        start_cool,
        end_cool,
        t_cool_reduced,
        t_cool_comfort,
        start_heat,
        end_heat,
        t_heat_reduced,
        t_heat_comfort,
        start_vent,
        end_vent,
        t_vent,
        vol_vent,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Split {
    Train,
    Validation,
}

/// Sampled dataset: episodes, per-episode split tag and the metadata needed
/// to reproduce or audit it.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub episodes: Vec<Episode>,
    pub split: Vec<Split>,
    pub meta: DatasetMeta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub schema_version: u32,
    pub seed: u64,
    pub n_examples: usize,
    pub horizon: usize,
    pub split_fraction: f64,
    pub anchor: Weekday,
    pub feature_columns: Vec<String>,
    pub normalizer: Normalizer,
    pub ranges_digest: String,
    pub weather_digest: String,
    /// Content hash over all episode outputs, in index order.
    pub content_digest: String,
}

impl Dataset {
    pub fn train_indices(&self) -> Vec<usize> {
        self.indices(Split::Train)
    }

    pub fn validation_indices(&self) -> Vec<usize> {
        self.indices(Split::Validation)
    }

    fn indices(&self, which: Split) -> Vec<usize> {
        self.split
            .iter()
            .enumerate()
            .filter(|(_, s)| **s == which)
            .map(|(i, _)| i)
            .collect()
    }
}

fn weather_digest(weather: &WeatherSeries) -> String {
    let mut hasher = Sha256::new();
    for name in crate::domain::WEATHER_CHANNELS {
        for v in weather.channel(name).expect("canonical channel") {
            hasher.update(v.to_le_bytes());
        }
    }
    hex::encode(hasher.finalize())
}

fn outputs_digest(episodes: &[Episode]) -> String {
    let mut hasher = Sha256::new();
    for ep in episodes {
        for ch in crate::domain::OUTPUT_CHANNELS {
            for v in ep.outputs.channel(ch) {
                hasher.update(v.to_le_bytes());
            }
        }
    }
    hex::encode(hasher.finalize())
}

/// Builds a dataset of `n_examples` episodes simulated under the shared
/// weather record. Episode generation is rayon-parallel; results are
/// assembled in index order, so the dataset is independent of thread count.
#[allow(clippy::too_many_arguments)]
pub fn build_dataset(
    n_examples: usize,
    horizon: usize,
    weather: &WeatherSeries,
    ranges: &RangesConfig,
    geometry: &BuildingGeometry,
    oracle: &OracleConfig,
    normalizer: &Normalizer,
    layout: &FeatureLayout,
    split_fraction: f64,
    seed: u64,
    anchor: Weekday,
) -> Result<Dataset> {
    ranges.validate()?;
    if !(0.0..=1.0).contains(&split_fraction) {
        return Err(Error::Config(format!(
            "split_fraction {split_fraction} outside [0, 1]"
        )));
    }
    if weather.len() < horizon {
        return Err(Error::Dimension(format!(
            "weather record has {} hours, horizon needs {horizon}",
            weather.len()
        )));
    }
    let month = weather.slice(0, horizon)?;
    // Sampling rejects out-of-range weather instead of clamping it.
    validate_weather_in_bounds(&month, normalizer)?;

    let configs: Result<Vec<_>> = (0..n_examples)
        .map(|i| {
            let mut rng = substream(seed, Stream::Sampling, i as u64);
            sample_configuration(ranges, geometry, &mut rng)
        })
        .collect();
    let configs = configs?;

    let episodes: Result<Vec<Episode>> = configs
        .into_par_iter()
        .enumerate()
        .map(|(i, (params, usage, occ))| {
            refsim::simulate(&params, &usage, &occ, &month, anchor, 0, oracle).map_err(|e| {
                Error::Oracle(format!("episode {i}: {e} (params: {params:?})"))
            })
        })
        .collect();
    let episodes = episodes?;

    // Uniform random split: shuffle indices, first block is validation.
    let n_val = (n_examples as f64 * split_fraction).round() as usize;
    let mut order: Vec<usize> = (0..n_examples).collect();
    let mut split_rng = substream(seed, Stream::Split, 0);
    for i in (1..order.len()).rev() {
        let j = split_rng.gen_range(0..=i);
        order.swap(i, j);
    }
    let mut split = vec![Split::Train; n_examples];
    for &idx in order.iter().take(n_val) {
        split[idx] = Split::Validation;
    }

    let meta = DatasetMeta {
        schema_version: 1,
        seed,
        n_examples,
        horizon,
        split_fraction,
        anchor,
        feature_columns: layout.columns().to_vec(),
        normalizer: normalizer.clone(),
        ranges_digest: ranges.digest(),
        weather_digest: weather_digest(&month),
        content_digest: outputs_digest(&episodes),
    };

    Ok(Dataset {
        episodes,
        split,
        meta,
    })
}

fn validate_weather_in_bounds(weather: &WeatherSeries, normalizer: &Normalizer) -> Result<()> {
    for name in crate::domain::WEATHER_CHANNELS {
        let (lo, hi) = normalizer.bounds(name)?;
        for (k, v) in weather.channel(name)?.iter().enumerate() {
            if *v < lo || *v > hi {
                return Err(Error::Schema(format!(
                    "weather {name} hour {k}: {v} outside configured bounds [{lo}, {hi}]"
                )));
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Persistence: meta.json + weather.csv + per-episode outputs/inputs pairs.
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct EpisodeInputs {
    params: BuildingParams,
    usage: UsageSchedule,
    occupancy: OccupancySchedule,
    split: Split,
}

#[derive(Serialize, Deserialize)]
struct MetaFile {
    #[serde(flatten)]
    meta: DatasetMeta,
}

impl Dataset {
    /// Writes the dataset as a directory: `meta.json`, the shared
    /// `weather.csv` and one `episode_<i>.csv` / `episode_<i>.json` pair per
    /// episode.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(
            dir.join("meta.json"),
            serde_json::to_vec_pretty(&MetaFile {
                meta: self.meta.clone(),
            })?,
        )?;
        if let Some(first) = self.episodes.first() {
            first.weather.to_csv(&dir.join("weather.csv"))?;
        }
        for (i, ep) in self.episodes.iter().enumerate() {
            let csv_path = dir.join(format!("episode_{i:05}.csv"));
            write_outputs_csv(ep, &csv_path)?;
            let inputs = EpisodeInputs {
                params: ep.params.clone(),
                usage: ep.usage.clone(),
                occupancy: ep.occupancy.clone(),
                split: self.split[i],
            };
            std::fs::write(
                dir.join(format!("episode_{i:05}.json")),
                serde_json::to_vec(&inputs)?,
            )?;
        }
        Ok(())
    }

    /// Loads a dataset directory written by [`Dataset::save`].
    pub fn load(dir: &Path) -> Result<Dataset> {
        let meta_path = dir.join("meta.json");
        if !meta_path.exists() {
            return Err(Error::MissingArtifact(format!(
                "dataset metadata {}",
                meta_path.display()
            )));
        }
        let MetaFile { meta } = serde_json::from_slice(&std::fs::read(meta_path)?)?;
        let weather = WeatherSeries::from_csv(&dir.join("weather.csv"))?;

        let mut episodes = Vec::with_capacity(meta.n_examples);
        let mut split = Vec::with_capacity(meta.n_examples);
        for i in 0..meta.n_examples {
            let inputs: EpisodeInputs = serde_json::from_slice(&std::fs::read(
                dir.join(format!("episode_{i:05}.json")),
            )?)?;
            let outputs = read_outputs_csv(&dir.join(format!("episode_{i:05}.csv")))?;
            let ep = Episode {
                params: inputs.params,
                usage: inputs.usage,
                occupancy: inputs.occupancy,
                weather: weather.clone(),
                anchor: meta.anchor,
                start_hour: 0,
                outputs,
            };
            ep.validate()?;
            episodes.push(ep);
            split.push(inputs.split);
        }

        let dataset = Dataset {
            episodes,
            split,
            meta,
        };
        let digest = outputs_digest(&dataset.episodes);
        if digest != dataset.meta.content_digest {
            return Err(Error::Schema(format!(
                "dataset content digest mismatch: expected {}, found {digest}",
                dataset.meta.content_digest
            )));
        }
        Ok(dataset)
    }
}

fn write_outputs_csv(ep: &Episode, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    let names: Vec<&str> = crate::domain::OUTPUT_CHANNELS
        .iter()
        .map(|c| c.name())
        .collect();
    writer.write_record(&names)?;
    for k in 0..ep.horizon() {
        let row: Vec<String> = crate::domain::OUTPUT_CHANNELS
            .iter()
            .map(|c| format!("{}", ep.outputs.channel(*c)[k]))
            .collect();
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}

fn read_outputs_csv(path: &Path) -> Result<crate::domain::OutputSeries> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut outputs = crate::domain::OutputSeries::default();
    for record in reader.records() {
        let record = record?;
        let get = |i: usize| -> Result<f64> {
            record[i]
                .parse::<f64>()
                .map_err(|e| Error::Schema(format!("bad value in {}: {e}", path.display())))
        };
        outputs.t_int.push(get(0)?);
        outputs.q_ac.push(get(1)?);
        outputs.q_heat.push(get(2)?);
        outputs.q_people.push(get(3)?);
        outputs.q_eqp.push(get(4)?);
        outputs.q_light.push(get(5)?);
        outputs.q_ahu_c.push(get(6)?);
        outputs.q_ahu_h.push(get(7)?);
    }
    Ok(outputs)
}
