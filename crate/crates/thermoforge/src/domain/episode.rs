//! A simulated or observed month of building behavior: the inputs that
//! produced it and the hourly output series.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::params::BuildingParams;
use super::schedule::{OccupancySchedule, UsageSchedule, Weekday};
use super::weather::WeatherSeries;

/// Output channels in canonical order. Temperature comes first, then the
/// seven consumption/gain channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputChannel {
    TInt,
    QAc,
    QHeat,
    QPeople,
    QEqp,
    QLight,
    QAhuC,
    QAhuH,
}

pub const OUTPUT_CHANNELS: [OutputChannel; 8] = [
    OutputChannel::TInt,
    OutputChannel::QAc,
    OutputChannel::QHeat,
    OutputChannel::QPeople,
    OutputChannel::QEqp,
    OutputChannel::QLight,
    OutputChannel::QAhuC,
    OutputChannel::QAhuH,
];

impl OutputChannel {
    /// Column name used in episode CSV files and normalization bounds.
    pub fn name(self) -> &'static str {
        match self {
            OutputChannel::TInt => "T_INT_OFFICE",
            OutputChannel::QAc => "Q_AC_OFFICE",
            OutputChannel::QHeat => "Q_HEAT_OFFICE",
            OutputChannel::QPeople => "Q_PEOPLE",
            OutputChannel::QEqp => "Q_EQP",
            OutputChannel::QLight => "Q_LIGHT",
            OutputChannel::QAhuC => "Q_AHU_C",
            OutputChannel::QAhuH => "Q_AHU_H",
        }
    }
}

/// Hourly outputs of one episode: indoor temperature plus the consumption
/// and internal-gain channels, all in physical units (°C, kWh per hour).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct OutputSeries {
    pub t_int: Vec<f64>,
    pub q_ac: Vec<f64>,
    pub q_heat: Vec<f64>,
    pub q_people: Vec<f64>,
    pub q_eqp: Vec<f64>,
    pub q_light: Vec<f64>,
    pub q_ahu_c: Vec<f64>,
    pub q_ahu_h: Vec<f64>,
}

impl OutputSeries {
    pub fn with_capacity(hours: usize) -> Self {
        OutputSeries {
            t_int: Vec::with_capacity(hours),
            q_ac: Vec::with_capacity(hours),
            q_heat: Vec::with_capacity(hours),
            q_people: Vec::with_capacity(hours),
            q_eqp: Vec::with_capacity(hours),
            q_light: Vec::with_capacity(hours),
            q_ahu_c: Vec::with_capacity(hours),
            q_ahu_h: Vec::with_capacity(hours),
        }
    }

    pub fn len(&self) -> usize {
        self.t_int.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t_int.is_empty()
    }

    pub fn channel(&self, ch: OutputChannel) -> &[f64] {
        match ch {
            OutputChannel::TInt => &self.t_int,
            OutputChannel::QAc => &self.q_ac,
            OutputChannel::QHeat => &self.q_heat,
            OutputChannel::QPeople => &self.q_people,
            OutputChannel::QEqp => &self.q_eqp,
            OutputChannel::QLight => &self.q_light,
            OutputChannel::QAhuC => &self.q_ahu_c,
            OutputChannel::QAhuH => &self.q_ahu_h,
        }
    }

    /// Hourly total consumption: everything metered by the plant. Q_PEOPLE
    /// is a thermal gain, not a consumption, and is excluded.
    pub fn total_consumption(&self) -> Vec<f64> {
        (0..self.len())
            .map(|k| {
                self.q_ac[k]
                    + self.q_heat[k]
                    + self.q_eqp[k]
                    + self.q_light[k]
                    + self.q_ahu_c[k]
                    + self.q_ahu_h[k]
            })
            .collect()
    }

    pub fn validate(&self, horizon: usize) -> Result<()> {
        for ch in OUTPUT_CHANNELS {
            let series = self.channel(ch);
            if series.len() != horizon {
                return Err(Error::Dimension(format!(
                    "output {} has {} hours, expected {horizon}",
                    ch.name(),
                    series.len()
                )));
            }
            if series.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("output {}", ch.name())));
            }
            if ch != OutputChannel::TInt && series.iter().any(|v| *v < 0.0) {
                return Err(Error::Schema(format!("negative value in {}", ch.name())));
            }
        }
        Ok(())
    }
}

/// One month (or any whole number of days) of building behavior together
/// with the inputs that generated it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub params: BuildingParams,
    pub usage: UsageSchedule,
    pub occupancy: OccupancySchedule,
    pub weather: WeatherSeries,
    /// Weekday of hour 0.
    pub anchor: Weekday,
    /// Offset of hour 0 within the parent observation stream; used to check
    /// that calibration and validation windows do not overlap.
    pub start_hour: usize,
    pub outputs: OutputSeries,
}

impl Episode {
    pub fn horizon(&self) -> usize {
        self.weather.len()
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.weather.validate()?;
        let horizon = self.horizon();
        if horizon == 0 || horizon % 24 != 0 {
            return Err(Error::Dimension(format!(
                "horizon {horizon} is not a whole number of days"
            )));
        }
        self.outputs.validate(horizon)
    }

    /// Occupancy indicator for each hour of the episode.
    pub fn occupancy_indicator(&self) -> Vec<f64> {
        self.occupancy.hourly_indicator(self.anchor, self.horizon())
    }

    /// Writes the output series as CSV (one row per hour) and the inputs as
    /// a JSON sidecar next to it.
    pub fn save(&self, csv_path: &Path) -> Result<()> {
        let mut writer = csv::Writer::from_path(csv_path)?;
        let names: Vec<&str> = OUTPUT_CHANNELS.iter().map(|c| c.name()).collect();
        writer.write_record(&names)?;
        for k in 0..self.horizon() {
            let row: Vec<String> = OUTPUT_CHANNELS
                .iter()
                .map(|c| format!("{}", self.outputs.channel(*c)[k]))
                .collect();
            writer.write_record(&row)?;
        }
        writer.flush()?;

        let sidecar = EpisodeSidecar {
            schema_version: 1,
            params: self.params.clone(),
            usage: self.usage.clone(),
            occupancy: self.occupancy.clone(),
            anchor: self.anchor,
            start_hour: self.start_hour,
            weather: self.weather.clone(),
        };
        let json_path = csv_path.with_extension("json");
        std::fs::write(&json_path, serde_json::to_vec_pretty(&sidecar)?)?;
        Ok(())
    }

    /// Loads an episode written by [`Episode::save`].
    pub fn load(csv_path: &Path) -> Result<Episode> {
        let json_path = csv_path.with_extension("json");
        if !json_path.exists() {
            return Err(Error::MissingArtifact(format!(
                "episode sidecar {}",
                json_path.display()
            )));
        }
        let sidecar: EpisodeSidecar =
            serde_json::from_slice(&std::fs::read(&json_path)?)?;

        let mut reader = csv::Reader::from_path(csv_path)?;
        let header: Vec<String> = reader.headers()?.iter().map(|h| h.to_string()).collect();
        let expected: Vec<&str> = OUTPUT_CHANNELS.iter().map(|c| c.name()).collect();
        if header != expected {
            return Err(Error::Schema(format!(
                "episode CSV header {:?} does not match {:?}",
                header, expected
            )));
        }
        let mut outputs = OutputSeries::default();
        for record in reader.records() {
            let record = record?;
            let get = |i: usize| -> Result<f64> {
                record[i]
                    .parse::<f64>()
                    .map_err(|e| Error::Schema(format!("bad episode value: {e}")))
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

        let episode = Episode {
            params: sidecar.params,
            usage: sidecar.usage,
            occupancy: sidecar.occupancy,
            weather: sidecar.weather,
            anchor: sidecar.anchor,
            start_hour: sidecar.start_hour,
            outputs,
        };
        episode.validate()?;
        Ok(episode)
    }
}

#[derive(Serialize, Deserialize)]
struct EpisodeSidecar {
    schema_version: u32,
    params: BuildingParams,
    usage: UsageSchedule,
    occupancy: OccupancySchedule,
    anchor: Weekday,
    start_hour: usize,
    weather: WeatherSeries,
}
