//! Expansion of (building, usage, occupancy, weather) into the hourly
//! feature matrix consumed by the surrogate.
//!
//! Row `k` concatenates the normalized building-parameter block, the
//! normalized weather at hour `k`, the occupancy indicator and the
//! normalized usage settings of the weekday containing hour `k`.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::normalize::Normalizer;
use super::params::{BuildingParams, THETA_FIELDS};
use super::schedule::{OccupancySchedule, UsageSchedule, Weekday, USAGE_FIELDS};
use super::weather::{WeatherSeries, WEATHER_CHANNELS};

/// Name of the occupancy indicator column.
pub const OCCUPANCY_COLUMN: &str = "OCCUPANCY";

/// Ordered list of feature columns. The canonical layout is
/// `theta (17) | weather (7) | occupancy (1) | usage (12)`, 37 columns wide;
/// the width is recorded in dataset and weight metadata and checked on load.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureLayout {
    columns: Vec<String>,
    n_theta: usize,
}

impl FeatureLayout {
    /// The canonical layout over all building, weather and usage fields.
    pub fn canonical() -> Self {
        let mut columns: Vec<String> = THETA_FIELDS.iter().map(|s| s.to_string()).collect();
        columns.extend(WEATHER_CHANNELS.iter().map(|s| s.to_string()));
        columns.push(OCCUPANCY_COLUMN.to_string());
        columns.extend(USAGE_FIELDS.iter().map(|s| s.to_string()));
        FeatureLayout {
            columns,
            n_theta: THETA_FIELDS.len(),
        }
    }

    pub fn width(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    fn theta_range(&self) -> std::ops::Range<usize> {
        0..self.n_theta
    }

    fn weather_range(&self) -> std::ops::Range<usize> {
        self.n_theta..self.n_theta + WEATHER_CHANNELS.len()
    }

    fn occupancy_index(&self) -> usize {
        self.n_theta + WEATHER_CHANNELS.len()
    }

    fn usage_range(&self) -> std::ops::Range<usize> {
        let start = self.occupancy_index() + 1;
        start..start + USAGE_FIELDS.len()
    }
}

/// Expands the inputs into a `horizon x width` feature matrix.
///
/// The weather length defines the horizon, which must be a whole number of
/// days; `anchor` is the weekday of hour 0.
pub fn expand_inputs(
    params: &BuildingParams,
    usage: &UsageSchedule,
    occupancy: &OccupancySchedule,
    weather: &WeatherSeries,
    anchor: Weekday,
    normalizer: &Normalizer,
    layout: &FeatureLayout,
) -> Result<Array2<f64>> {
    weather.validate()?;
    let horizon = weather.len();
    if horizon == 0 || horizon % 24 != 0 {
        return Err(Error::Dimension(format!(
            "horizon {horizon} is not a whole number of days"
        )));
    }

    // Per-building block is constant across the horizon.
    let mut theta_row = Vec::with_capacity(layout.theta_range().len());
    for field in &layout.columns[layout.theta_range()] {
        theta_row.push(normalizer.normalize(field, params.theta(field)?)?);
    }

    // Usage block is constant per weekday.
    let mut usage_rows = [[0.0; USAGE_FIELDS.len()]; 7];
    for (d, day) in usage.days().iter().enumerate() {
        for (j, field) in USAGE_FIELDS.iter().enumerate() {
            usage_rows[d][j] = normalizer.normalize(field, day.get(field)?)?;
        }
    }

    let width = layout.width();
    let mut features = Array2::zeros((horizon, width));
    let weather_cols: Vec<&[f64]> = WEATHER_CHANNELS
        .iter()
        .map(|ch| weather.channel(ch).expect("canonical channel"))
        .collect();

    for k in 0..horizon {
        let weekday = anchor.advance(k / 24);
        let hod = (k % 24) as f64;
        let mut row = features.row_mut(k);

        for (i, v) in theta_row.iter().enumerate() {
            row[i] = *v;
        }
        for (j, (name, col)) in WEATHER_CHANNELS.iter().zip(&weather_cols).enumerate() {
            row[layout.weather_range().start + j] = normalizer.normalize(name, col[k])?;
        }
        row[layout.occupancy_index()] = if occupancy.occupied(weekday, hod) {
            1.0
        } else {
            0.0
        };
        let usage_start = layout.usage_range().start;
        for (j, v) in usage_rows[weekday.index()].iter().enumerate() {
            row[usage_start + j] = *v;
        }
    }
    Ok(features)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::AppConfig;
    use crate::domain::DayUsage;

    fn fixture() -> (BuildingParams, UsageSchedule, OccupancySchedule, Normalizer) {
        let cfg = AppConfig::synthetic_default();
        let normalizer = cfg.build_normalizer().unwrap();
        let params = cfg.scenario_params().unwrap();
        let usage = cfg.scenario.usage.clone();
        let occ = cfg.scenario.occupancy.clone();
        (params, usage, occ, normalizer)
    }

    #[test]
    fn canonical_shape_is_horizon_by_37() {
        let (params, usage, occ, normalizer) = fixture();
        let weather = WeatherSeries::synthetic(672, 1);
        let layout = FeatureLayout::canonical();
        let m = expand_inputs(
            &params,
            &usage,
            &occ,
            &weather,
            Weekday::Monday,
            &normalizer,
            &layout,
        )
        .unwrap();
        assert_eq!(m.shape(), &[672, 37]);
    }

    #[test]
    fn all_features_in_unit_interval() {
        let (params, usage, occ, normalizer) = fixture();
        let weather = WeatherSeries::synthetic(168, 5);
        let layout = FeatureLayout::canonical();
        let m = expand_inputs(
            &params,
            &usage,
            &occ,
            &weather,
            Weekday::Monday,
            &normalizer,
            &layout,
        )
        .unwrap();
        assert!(m.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn usage_block_broadcasts_by_weekday() {
        let (params, mut usage, occ, normalizer) = fixture();
        // Give Tuesday a distinctive ventilation setpoint.
        let mut days = *usage.days();
        days[1] = DayUsage {
            t_vent: 25.0,
            ..days[1]
        };
        usage = UsageSchedule::new(days).unwrap();

        let weather = WeatherSeries::synthetic(168, 5);
        let layout = FeatureLayout::canonical();
        let m = expand_inputs(
            &params,
            &usage,
            &occ,
            &weather,
            Weekday::Monday,
            &normalizer,
            &layout,
        )
        .unwrap();

        let t_vent_col = layout
            .columns()
            .iter()
            .position(|c| c == "t_vent")
            .unwrap();
        let expected = normalizer.normalize("t_vent", 25.0).unwrap();
        // Hours 24..48 are Tuesday.
        for k in 24..48 {
            assert_eq!(m[[k, t_vent_col]], expected);
        }
        for k in 0..24 {
            assert_ne!(m[[k, t_vent_col]], expected);
        }
    }

    #[test]
    fn occupancy_indicator_membership() {
        let (params, usage, _, normalizer) = fixture();
        let occ = OccupancySchedule::uniform(8.0, 18.0).unwrap();
        let weather = WeatherSeries::synthetic(168, 5);
        let layout = FeatureLayout::canonical();
        let m = expand_inputs(
            &params,
            &usage,
            &occ,
            &weather,
            Weekday::Monday,
            &normalizer,
            &layout,
        )
        .unwrap();
        let col = layout.occupancy_index();
        assert_eq!(m[[9, col]], 1.0); // Monday 09:00
        assert_eq!(m[[6, col]], 0.0); // Monday 06:00
        assert_eq!(m[[5 * 24 + 12, col]], 0.0); // Saturday 12:00
    }

    #[test]
    fn permuting_two_weekdays_changes_exactly_those_rows() {
        let (params, usage, occ, normalizer) = fixture();
        let mut days = *usage.days();
        days[0] = DayUsage {
            t_heat_comfort: 23.5,
            ..days[0]
        };
        let base = UsageSchedule::new(days).unwrap();
        // Swap Monday and Wednesday.
        let mut swapped = days;
        swapped.swap(0, 2);
        let perm = UsageSchedule::new(swapped).unwrap();

        let weather = WeatherSeries::synthetic(168, 5);
        let layout = FeatureLayout::canonical();
        let a = expand_inputs(&params, &base, &occ, &weather, Weekday::Monday, &normalizer, &layout).unwrap();
        let b = expand_inputs(&params, &perm, &occ, &weather, Weekday::Monday, &normalizer, &layout).unwrap();

        for k in 0..168 {
            let day = k / 24;
            let rows_equal = a.row(k) == b.row(k);
            if day == 0 || day == 2 {
                assert!(!rows_equal, "row {k} should differ");
            } else {
                assert!(rows_equal, "row {k} should match");
            }
        }
    }

    #[test]
    fn partial_day_horizon_rejected() {
        let (params, usage, occ, normalizer) = fixture();
        let weather = WeatherSeries::synthetic(100, 5);
        let layout = FeatureLayout::canonical();
        let err = expand_inputs(
            &params,
            &usage,
            &occ,
            &weather,
            Weekday::Monday,
            &normalizer,
            &layout,
        );
        assert!(err.is_err());
    }
}
