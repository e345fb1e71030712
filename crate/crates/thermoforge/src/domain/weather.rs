//! Hourly weather series: five irradiance channels, relative humidity and
//! outdoor temperature.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{substream, Stream};

/// Canonical weather channel names, which double as the required CSV header
/// (in this exact order).
pub const WEATHER_CHANNELS: [&str; 7] = [
    "DNI", "IBEAM_H", "IBEAM_N", "IDIFF_H", "IGLOB_H", "RHUM", "TAMB",
];

/// Hourly weather record. All channels share the same length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeatherSeries {
    pub dni: Vec<f64>,
    pub ibeam_h: Vec<f64>,
    pub ibeam_n: Vec<f64>,
    pub idiff_h: Vec<f64>,
    pub iglob_h: Vec<f64>,
    pub rhum: Vec<f64>,
    pub tamb: Vec<f64>,
}

impl WeatherSeries {
    pub fn len(&self) -> usize {
        self.tamb.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tamb.is_empty()
    }

    pub fn channel(&self, name: &str) -> Result<&[f64]> {
        Ok(match name {
            "DNI" => &self.dni,
            "IBEAM_H" => &self.ibeam_h,
            "IBEAM_N" => &self.ibeam_n,
            "IDIFF_H" => &self.idiff_h,
            "IGLOB_H" => &self.iglob_h,
            "RHUM" => &self.rhum,
            "TAMB" => &self.tamb,
            other => return Err(Error::UnknownChannel(other.to_string())),
        })
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        for name in WEATHER_CHANNELS {
            let ch = self.channel(name)?;
            if ch.len() != n {
                return Err(Error::Dimension(format!(
                    "weather channel {name} has {} hours, expected {n}",
                    ch.len()
                )));
            }
            if ch.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("weather channel {name}")));
            }
        }
        for name in ["DNI", "IBEAM_H", "IBEAM_N", "IDIFF_H", "IGLOB_H"] {
            if self.channel(name)?.iter().any(|v| *v < 0.0) {
                return Err(Error::Schema(format!("negative irradiance in {name}")));
            }
        }
        if self.rhum.iter().any(|v| !(0.0..=100.0).contains(v)) {
            return Err(Error::Schema("RHUM outside [0, 100]".into()));
        }
        Ok(())
    }

    /// Sub-series for hours `[start, start + len)`.
    pub fn slice(&self, start: usize, len: usize) -> Result<WeatherSeries> {
        if start + len > self.len() {
            return Err(Error::Dimension(format!(
                "weather slice {start}..{} exceeds {} hours",
                start + len,
                self.len()
            )));
        }
        let cut = |v: &Vec<f64>| v[start..start + len].to_vec();
        Ok(WeatherSeries {
            dni: cut(&self.dni),
            ibeam_h: cut(&self.ibeam_h),
            ibeam_n: cut(&self.ibeam_n),
            idiff_h: cut(&self.idiff_h),
            iglob_h: cut(&self.iglob_h),
            rhum: cut(&self.rhum),
            tamb: cut(&self.tamb),
        })
    }

    /// Reads weather from CSV. The header must name the seven channels in
    /// canonical order; a permuted or renamed header is a schema violation.
    pub fn from_csv(path: &Path) -> Result<WeatherSeries> {
        let mut reader = csv::Reader::from_path(path)?;
        let header: Vec<String> = reader
            .headers()?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();
        if header != WEATHER_CHANNELS {
            return Err(Error::Schema(format!(
                "weather CSV header {:?} does not match required columns {:?}",
                header, WEATHER_CHANNELS
            )));
        }
        let mut w = WeatherSeries {
            dni: vec![],
            ibeam_h: vec![],
            ibeam_n: vec![],
            idiff_h: vec![],
            iglob_h: vec![],
            rhum: vec![],
            tamb: vec![],
        };
        for (row, record) in reader.records().enumerate() {
            let record = record?;
            let parse = |i: usize| -> Result<f64> {
                record[i].trim().parse::<f64>().map_err(|e| {
                    Error::Schema(format!(
                        "weather CSV row {}: bad value `{}` ({e})",
                        row + 2,
                        &record[i]
                    ))
                })
            };
            w.dni.push(parse(0)?);
            w.ibeam_h.push(parse(1)?);
            w.ibeam_n.push(parse(2)?);
            w.idiff_h.push(parse(3)?);
            w.iglob_h.push(parse(4)?);
            w.rhum.push(parse(5)?);
            w.tamb.push(parse(6)?);
        }
        w.validate()?;
        Ok(w)
    }

    pub fn to_csv(&self, path: &Path) -> Result<()> {
        let mut writer = csv::Writer::from_path(path)?;
        writer.write_record(WEATHER_CHANNELS)?;
        for k in 0..self.len() {
            writer.write_record([
                format!("{}", self.dni[k]),
                format!("{}", self.ibeam_h[k]),
                format!("{}", self.ibeam_n[k]),
                format!("{}", self.idiff_h[k]),
                format!("{}", self.iglob_h[k]),
                format!("{}", self.rhum[k]),
                format!("{}", self.tamb[k]),
            ])?;
        }
        writer.flush()?;
        Ok(())
    }

    /// Synthetic summer weather for tests and bundled runs: sinusoidal
    /// diurnal temperature riding on autocorrelated multi-day warm and cool
    /// spells, clear-sky irradiance scaled by a persistent clearness factor.
    /// Deterministic in `seed`.
    pub fn synthetic(hours: usize, seed: u64) -> WeatherSeries {
        let mut rng = substream(seed, Stream::Weather, 0);
        let n_days = hours.div_ceil(24);
        // AR(1) daily anomalies: weather fronts last several days.
        let mut day_offset = Vec::with_capacity(n_days);
        let mut clearness = Vec::with_capacity(n_days);
        let mut m: f64 = rng.gen_range(-4.0..4.0);
        let mut c: f64 = rng.gen_range(0.5..0.9);
        for _ in 0..n_days {
            m = (0.8 * m + rng.gen_range(-3.5..3.5)).clamp(-9.0, 9.0);
            c = (0.5 + 0.8 * (c - 0.5) + rng.gen_range(-0.22..0.22)).clamp(0.3, 1.0);
            day_offset.push(m);
            clearness.push(c);
        }

        let mut w = WeatherSeries {
            dni: Vec::with_capacity(hours),
            ibeam_h: Vec::with_capacity(hours),
            ibeam_n: Vec::with_capacity(hours),
            idiff_h: Vec::with_capacity(hours),
            iglob_h: Vec::with_capacity(hours),
            rhum: Vec::with_capacity(hours),
            tamb: Vec::with_capacity(hours),
        };
        for k in 0..hours {
            let day = k / 24;
            let hod = (k % 24) as f64;
            // Diurnal swing peaking mid-afternoon.
            let diurnal = 6.0 * (std::f64::consts::PI * (hod - 9.0) / 12.0).sin().max(-0.6);
            let tamb = 19.0 + day_offset[day] + diurnal;

            // Clear-sky bell between 06:00 and 20:00.
            let sun = ((hod - 6.0) / 14.0 * std::f64::consts::PI).sin().max(0.0);
            let iglob = 850.0 * sun * clearness[day];
            let ibeam_h = 0.7 * iglob;
            let idiff_h = iglob - ibeam_h;
            let dni = if sun > 0.05 { ibeam_h / sun.max(0.2) } else { 0.0 };

            let rhum = (62.0 - 1.8 * diurnal - 8.0 * (clearness[day] - 0.7)).clamp(20.0, 95.0);

            w.dni.push(dni);
            w.ibeam_h.push(ibeam_h);
            w.ibeam_n.push(dni);
            w.idiff_h.push(idiff_h);
            w.iglob_h.push(iglob);
            w.rhum.push(rhum);
            w.tamb.push(tamb);
        }
        w
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_weather_is_valid_and_deterministic() {
        let a = WeatherSeries::synthetic(336, 7);
        let b = WeatherSeries::synthetic(336, 7);
        a.validate().unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 336);
        let c = WeatherSeries::synthetic(336, 8);
        assert_ne!(a, c);
    }

    #[test]
    fn csv_roundtrip_and_schema_check() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("weather.csv");
        let w = WeatherSeries::synthetic(48, 3);
        w.to_csv(&path).unwrap();
        let back = WeatherSeries::from_csv(&path).unwrap();
        assert_eq!(w, back);

        // Permuted header must be rejected.
        let text = std::fs::read_to_string(&path).unwrap();
        let permuted = text.replacen("DNI,IBEAM_H", "IBEAM_H,DNI", 1);
        let bad = dir.path().join("permuted.csv");
        std::fs::write(&bad, permuted).unwrap();
        match WeatherSeries::from_csv(&bad) {
            Err(Error::Schema(_)) => {}
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn slice_bounds_checked() {
        let w = WeatherSeries::synthetic(48, 3);
        assert!(w.slice(24, 24).is_ok());
        assert!(w.slice(25, 24).is_err());
    }
}
