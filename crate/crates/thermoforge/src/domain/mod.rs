//! Core data types shared by every pipeline stage: the static building
//! description, usage and occupancy schedules, weather series, simulated
//! episodes, min-max normalization and the hourly feature expansion fed to
//! the surrogate.

mod episode;
mod features;
mod normalize;
mod params;
mod schedule;
mod weather;

pub use episode::{Episode, OutputChannel, OutputSeries, OUTPUT_CHANNELS};
pub use features::{expand_inputs, FeatureLayout, OCCUPANCY_COLUMN};
pub use normalize::Normalizer;
pub use params::{derive_occupancy_defaults, BuildingGeometry, BuildingParams, THETA_FIELDS};
pub use schedule::{DayUsage, OccupancySchedule, UsageSchedule, Weekday, USAGE_FIELDS, WEEKDAYS};
pub use weather::{WeatherSeries, WEATHER_CHANNELS};
