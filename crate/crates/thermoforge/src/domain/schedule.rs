//! Usage (HVAC/ventilation) and occupancy schedules.
//!
//! Both schedules are weekly: usage has an entry per day of the week,
//! occupancy covers Monday-Friday with weekends implicitly unoccupied.
//! Activation windows are half-open `[start, end)` in local hour of day.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Weekday {
    Monday,
    Tuesday,
    Wednesday,
    Thursday,
    Friday,
    Saturday,
    Sunday,
}

pub const WEEKDAYS: [Weekday; 7] = [
    Weekday::Monday,
    Weekday::Tuesday,
    Weekday::Wednesday,
    Weekday::Thursday,
    Weekday::Friday,
    Weekday::Saturday,
    Weekday::Sunday,
];

impl Weekday {
    pub fn index(self) -> usize {
        WEEKDAYS.iter().position(|w| *w == self).unwrap()
    }

    /// Weekday reached `days` after `self`.
    pub fn advance(self, days: usize) -> Weekday {
        WEEKDAYS[(self.index() + days) % 7]
    }

    pub fn is_working_day(self) -> bool {
        !matches!(self, Weekday::Saturday | Weekday::Sunday)
    }

    pub fn name(self) -> &'static str {
        match self {
            Weekday::Monday => "monday",
            Weekday::Tuesday => "tuesday",
            Weekday::Wednesday => "wednesday",
            Weekday::Thursday => "thursday",
            Weekday::Friday => "friday",
            Weekday::Saturday => "saturday",
            Weekday::Sunday => "sunday",
        }
    }
}

/// One weekday's HVAC and ventilation settings.
///
/// Field order matches [`USAGE_FIELDS`]; the same order is used for feature
/// rows and optimization genomes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DayUsage {
    pub start_cool: f64,
    pub end_cool: f64,
    pub t_cool_reduced: f64,
    pub t_cool_comfort: f64,
    pub start_heat: f64,
    pub end_heat: f64,
    pub t_heat_reduced: f64,
    pub t_heat_comfort: f64,
    pub start_vent: f64,
    pub end_vent: f64,
    pub t_vent: f64,
    pub vol_vent: f64,
}

/// Canonical names of the twelve per-weekday usage variables.
pub const USAGE_FIELDS: [&str; 12] = [
    "start_cool",
    "end_cool",
    "t_cool_reduced",
    "t_cool_comfort",
    "start_heat",
    "end_heat",
    "t_heat_reduced",
    "t_heat_comfort",
    "start_vent",
    "end_vent",
    "t_vent",
    "vol_vent",
];

impl DayUsage {
    pub fn get(&self, field: &str) -> Result<f64> {
        Ok(match field {
            "start_cool" => self.start_cool,
            "end_cool" => self.end_cool,
            "t_cool_reduced" => self.t_cool_reduced,
            "t_cool_comfort" => self.t_cool_comfort,
            "start_heat" => self.start_heat,
            "end_heat" => self.end_heat,
            "t_heat_reduced" => self.t_heat_reduced,
            "t_heat_comfort" => self.t_heat_comfort,
            "start_vent" => self.start_vent,
            "end_vent" => self.end_vent,
            "t_vent" => self.t_vent,
            "vol_vent" => self.vol_vent,
            other => return Err(Error::UnknownChannel(other.to_string())),
        })
    }

    pub fn set(&mut self, field: &str, value: f64) -> Result<()> {
        match field {
            "start_cool" => self.start_cool = value,
            "end_cool" => self.end_cool = value,
            "t_cool_reduced" => self.t_cool_reduced = value,
            "t_cool_comfort" => self.t_cool_comfort = value,
            "start_heat" => self.start_heat = value,
            "end_heat" => self.end_heat = value,
            "t_heat_reduced" => self.t_heat_reduced = value,
            "t_heat_comfort" => self.t_heat_comfort = value,
            "start_vent" => self.start_vent = value,
            "end_vent" => self.end_vent = value,
            "t_vent" => self.t_vent = value,
            "vol_vent" => self.vol_vent = value,
            other => return Err(Error::UnknownChannel(other.to_string())),
        }
        Ok(())
    }

    fn validate(&self, day: Weekday) -> Result<()> {
        let pairs = [
            ("cool", self.start_cool, self.end_cool),
            ("heat", self.start_heat, self.end_heat),
            ("vent", self.start_vent, self.end_vent),
        ];
        for (what, start, end) in pairs {
            if !(start < end) {
                return Err(Error::InvalidSchedule(format!(
                    "{}: {what} window start {start} must precede end {end}",
                    day.name()
                )));
            }
        }
        if !(self.t_heat_reduced <= self.t_heat_comfort) {
            return Err(Error::InvalidSchedule(format!(
                "{}: reduced heat setpoint {} above comfort setpoint {}",
                day.name(),
                self.t_heat_reduced,
                self.t_heat_comfort
            )));
        }
        if !(self.t_cool_comfort <= self.t_cool_reduced) {
            return Err(Error::InvalidSchedule(format!(
                "{}: comfort cool setpoint {} above reduced setpoint {}",
                day.name(),
                self.t_cool_comfort,
                self.t_cool_reduced
            )));
        }
        if self.vol_vent < 0.0 {
            return Err(Error::InvalidSchedule(format!(
                "{}: negative ventilation rate",
                day.name()
            )));
        }
        Ok(())
    }
}

/// Weekly HVAC/ventilation schedule, one [`DayUsage`] per weekday.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UsageSchedule {
    days: [DayUsage; 7],
}

impl UsageSchedule {
    /// Builds a schedule, enforcing the ordering invariants on every day.
    pub fn new(days: [DayUsage; 7]) -> Result<Self> {
        for (i, day) in days.iter().enumerate() {
            day.validate(WEEKDAYS[i])?;
        }
        Ok(Self { days })
    }

    /// Same settings every day.
    pub fn uniform(day: DayUsage) -> Result<Self> {
        Self::new([day; 7])
    }

    pub fn day(&self, weekday: Weekday) -> &DayUsage {
        &self.days[weekday.index()]
    }

    pub fn days(&self) -> &[DayUsage; 7] {
        &self.days
    }
}

/// Monday-Friday occupancy windows; Saturday and Sunday are unoccupied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancySchedule {
    /// `(start_occupation, end_occupation)` for Monday..Friday.
    windows: [(f64, f64); 5],
}

impl OccupancySchedule {
    pub fn new(windows: [(f64, f64); 5]) -> Result<Self> {
        for (i, (start, end)) in windows.iter().enumerate() {
            if !(start < end) {
                return Err(Error::InvalidSchedule(format!(
                    "{}: occupation start {start} must precede end {end}",
                    WEEKDAYS[i].name()
                )));
            }
        }
        Ok(Self { windows })
    }

    pub fn uniform(start: f64, end: f64) -> Result<Self> {
        Self::new([(start, end); 5])
    }

    pub fn windows(&self) -> &[(f64, f64); 5] {
        &self.windows
    }

    /// Whether the building is occupied on `weekday` at `hour_of_day`.
    pub fn occupied(&self, weekday: Weekday, hour_of_day: f64) -> bool {
        if !weekday.is_working_day() {
            return false;
        }
        let (start, end) = self.windows[weekday.index()];
        start <= hour_of_day && hour_of_day < end
    }

    /// Occupancy indicator for every hour of a horizon starting on `anchor`.
    pub fn hourly_indicator(&self, anchor: Weekday, horizon: usize) -> Vec<f64> {
        (0..horizon)
            .map(|k| {
                let weekday = anchor.advance(k / 24);
                let hod = (k % 24) as f64;
                if self.occupied(weekday, hod) {
                    1.0
                } else {
                    0.0
                }
            })
            .collect()
    }
}
