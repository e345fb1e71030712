//! Deterministic single-zone lumped-capacitance reference simulator.
//!
//! Plays the role of the heavyweight building-physics program: it generates
//! training data, acts as the synthetic "real building" in calibration
//! tests, and provides the baseline for schedule optimization. The zone is
//! one thermal node updated by explicit Euler at a one-hour step:
//!
//! `T' = T + (Δt/C)·(Q_heat − Q_ac + Q_gains + Q_solar + UA·(T_amb − T)
//!        + Q_infiltration + Q_vent)`
//!
//! Heating and cooling follow proportional thermostat control toward the
//! active setpoint (comfort when inside the activation window and occupied,
//! reduced otherwise), clamped to the installed power. The AHU conditions
//! outside air to the ventilation setpoint during ventilation hours on
//! working days. The ground slab is treated as adiabatic.

use serde::{Deserialize, Serialize};

use crate::domain::{
    BuildingParams, Episode, OccupancySchedule, OutputSeries, UsageSchedule, WeatherSeries,
    Weekday,
};
use crate::error::{Error, Result};

/// Zone state between hourly steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZoneState {
    pub t_int: f64,
    pub hour_index: usize,
}

/// Physical coefficients of the reference simulator. These are fixed per
/// study; only [`BuildingParams`] varies across samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleConfig {
    /// Base thermal resistance of an uninsulated wall (films + structure), m²·K·W⁻¹.
    pub wall_r_base: f64,
    /// Conductivity of the insulation layer, W·m⁻¹·K⁻¹.
    pub wall_k_insulation: f64,
    /// Window U-value, W·m⁻²·K⁻¹.
    pub window_u: f64,
    /// Sensible gain per occupant, W.
    pub occupant_gain_w: f64,
    /// Gain per PC (and associated plug loads), W.
    pub pc_gain_w: f64,
    /// Lighting power density, W·m⁻².
    pub lighting_w_per_m2: f64,
    /// Volumetric heat capacity of air, kWh·m⁻³·K⁻¹.
    pub air_heat_capacity: f64,
    /// Fraction of global horizontal irradiance on glazing that reaches the zone.
    pub solar_aperture: f64,
    /// Proportional thermostat gain, kW·K⁻¹.
    pub thermostat_gain: f64,
    /// Zone height used to derive the air volume from the floor area, m.
    pub ceiling_height: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            wall_r_base: 0.2,
            wall_k_insulation: 0.035,
            window_u: 2.5,
            occupant_gain_w: 120.0,
            pc_gain_w: 130.0,
            lighting_w_per_m2: 10.0,
            air_heat_capacity: 3.4e-4,
            solar_aperture: 0.05,
            thermostat_gain: 200.0,
            ceiling_height: 3.0,
        }
    }
}

impl OracleConfig {
    pub fn validate(&self) -> Result<()> {
        let coeffs = [
            ("wall_r_base", self.wall_r_base),
            ("wall_k_insulation", self.wall_k_insulation),
            ("window_u", self.window_u),
            ("occupant_gain_w", self.occupant_gain_w),
            ("pc_gain_w", self.pc_gain_w),
            ("lighting_w_per_m2", self.lighting_w_per_m2),
            ("air_heat_capacity", self.air_heat_capacity),
            ("solar_aperture", self.solar_aperture),
            ("thermostat_gain", self.thermostat_gain),
            ("ceiling_height", self.ceiling_height),
        ];
        for (name, v) in coeffs {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!(
                    "oracle coefficient {name} must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }

    fn u_wall(&self, insulation_thickness: f64) -> f64 {
        1.0 / (self.wall_r_base + insulation_thickness / self.wall_k_insulation)
    }
}

/// Building-dependent quantities derived once per simulation.
#[derive(Debug, Clone)]
pub struct ZoneCoefficients {
    /// Zone air volume, m³.
    pub volume: f64,
    /// Lumped heat capacity, kWh·K⁻¹.
    pub capacity: f64,
    /// Envelope conductance (walls, windows, roof), kW·K⁻¹.
    pub ua_envelope: f64,
    /// Infiltration conductance, kW·K⁻¹.
    pub ua_infiltration: f64,
    /// Total glazed area, m².
    pub window_area: f64,
}

impl ZoneCoefficients {
    pub fn derive(params: &BuildingParams, cfg: &OracleConfig) -> Result<Self> {
        params.validate()?;
        cfg.validate()?;
        let g = &params.geometry;
        let volume = g.total_floor_area * cfg.ceiling_height;
        let capacity = params.capacitance * volume / 3600.0; // kJ/K -> kWh/K

        let mut ua_w = 0.0;
        let mut window_area = 0.0;
        for i in 0..4 {
            let win = g.facade_area[i] * params.facade_window_percent[i] / 100.0;
            let opaque = g.facade_area[i] - win;
            ua_w += opaque * cfg.u_wall(params.facade_thickness[i]) + win * cfg.window_u;
            window_area += win;
        }
        ua_w += g.roof_area * cfg.u_wall(params.roof_thickness);

        Ok(ZoneCoefficients {
            volume,
            capacity,
            ua_envelope: ua_w / 1000.0,
            ua_infiltration: params.airchange_infiltration * volume * cfg.air_heat_capacity,
            window_area,
        })
    }

    /// Explicit Euler at Δt = 1 h is stable (monotone) only while the total
    /// feedback conductance stays below the capacity. Checked once per
    /// simulation with the schedule's worst-case ventilation rate.
    pub fn assert_stable(&self, cfg: &OracleConfig, max_vol_vent: f64) -> Result<()> {
        let vent = max_vol_vent * self.volume * cfg.air_heat_capacity;
        let feedback =
            cfg.thermostat_gain + self.ua_envelope + self.ua_infiltration + vent;
        if feedback >= self.capacity {
            return Err(Error::Oracle(format!(
                "unstable configuration: feedback conductance {feedback:.2} kW/K \
                 exceeds hourly capacity {:.2} kWh/K",
                self.capacity
            )));
        }
        Ok(())
    }
}

/// One hour of physical inputs to the zone.
#[derive(Debug, Clone, Copy)]
pub struct HourInputs<'a> {
    pub weekday: Weekday,
    pub hour_of_day: f64,
    pub occupied: bool,
    pub tamb: f64,
    pub iglob_h: f64,
    pub usage: &'a crate::domain::DayUsage,
}

/// Outputs of one hourly step, in physical units (kWh per hour, °C).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HourOutputs {
    pub t_int: f64,
    pub q_ac: f64,
    pub q_heat: f64,
    pub q_people: f64,
    pub q_eqp: f64,
    pub q_light: f64,
    pub q_ahu_c: f64,
    pub q_ahu_h: f64,
}

/// Advances the zone by one hour.
pub fn step(
    state: ZoneState,
    inputs: HourInputs<'_>,
    params: &BuildingParams,
    coeffs: &ZoneCoefficients,
    cfg: &OracleConfig,
) -> Result<(ZoneState, HourOutputs)> {
    let du = inputs.usage;
    let hod = inputs.hour_of_day;
    let t = state.t_int;

    let in_window = |start: f64, end: f64| start <= hod && hod < end;
    let heat_target = if in_window(du.start_heat, du.end_heat) && inputs.occupied {
        du.t_heat_comfort
    } else {
        du.t_heat_reduced
    };
    let cool_target = if in_window(du.start_cool, du.end_cool) && inputs.occupied {
        du.t_cool_comfort
    } else {
        du.t_cool_reduced
    };
    let vent_on = inputs.weekday.is_working_day() && in_window(du.start_vent, du.end_vent);

    // Internal gains; outside occupancy only the configured night fractions
    // of lights and PCs remain on.
    let (q_people, q_eqp, q_light) = if inputs.occupied {
        (
            params.n_occupants * cfg.occupant_gain_w / 1000.0,
            params.n_pcs * cfg.pc_gain_w / 1000.0,
            cfg.lighting_w_per_m2 * params.geometry.total_floor_area / 1000.0,
        )
    } else {
        (
            0.0,
            params.n_pcs * cfg.pc_gain_w / 1000.0 * params.percent_pcs_night / 100.0,
            cfg.lighting_w_per_m2 * params.geometry.total_floor_area / 1000.0
                * params.percent_light_night
                / 100.0,
        )
    };
    let q_solar = cfg.solar_aperture * coeffs.window_area * inputs.iglob_h / 1000.0;

    let q_heat = (cfg.thermostat_gain * (heat_target - t)).clamp(0.0, params.power_heat_max);
    let q_ac = (cfg.thermostat_gain * (t - cool_target)).clamp(0.0, params.power_cool_max);

    let (q_ahu_h, q_ahu_c, q_vent) = if vent_on {
        let flow = du.vol_vent * coeffs.volume * cfg.air_heat_capacity; // kW/K
        let dt_supply = du.t_vent - inputs.tamb;
        (
            flow * dt_supply.max(0.0),
            flow * (-dt_supply).max(0.0),
            flow * (du.t_vent - t),
        )
    } else {
        (0.0, 0.0, 0.0)
    };

    let q_envelope = coeffs.ua_envelope * (inputs.tamb - t);
    let q_infiltration = coeffs.ua_infiltration * (inputs.tamb - t);

    let net = q_heat - q_ac + q_people + q_eqp + q_light + q_solar + q_envelope
        + q_infiltration
        + q_vent;
    let t_next = t + net / coeffs.capacity;
    if !t_next.is_finite() {
        return Err(Error::Oracle(format!(
            "non-finite temperature at hour {}",
            state.hour_index
        )));
    }

    Ok((
        ZoneState {
            t_int: t_next,
            hour_index: state.hour_index + 1,
        },
        HourOutputs {
            t_int: t_next,
            q_ac,
            q_heat,
            q_people,
            q_eqp,
            q_light,
            q_ahu_c,
            q_ahu_h,
        },
    ))
}

/// Initial zone temperature: midpoint of the setpoint band active at hour 0,
/// which avoids a long burn-in transient.
pub fn initial_temperature(usage: &UsageSchedule, occ: &OccupancySchedule, anchor: Weekday) -> f64 {
    let du = usage.day(anchor);
    let occupied = occ.occupied(anchor, 0.0);
    let heat = if du.start_heat <= 0.0 && 0.0 < du.end_heat && occupied {
        du.t_heat_comfort
    } else {
        du.t_heat_reduced
    };
    let cool = if du.start_cool <= 0.0 && 0.0 < du.end_cool && occupied {
        du.t_cool_comfort
    } else {
        du.t_cool_reduced
    };
    0.5 * (heat + cool)
}

/// Runs the zone model over the whole weather record and assembles an
/// [`Episode`]. Pure: identical inputs give bit-identical outputs.
pub fn simulate(
    params: &BuildingParams,
    usage: &UsageSchedule,
    occupancy: &OccupancySchedule,
    weather: &WeatherSeries,
    anchor: Weekday,
    start_hour: usize,
    cfg: &OracleConfig,
) -> Result<Episode> {
    weather.validate()?;
    let horizon = weather.len();
    if horizon == 0 || horizon % 24 != 0 {
        return Err(Error::Dimension(format!(
            "horizon {horizon} is not a whole number of days"
        )));
    }
    let coeffs = ZoneCoefficients::derive(params, cfg)?;
    let max_vol_vent = usage
        .days()
        .iter()
        .map(|d| d.vol_vent)
        .fold(0.0, f64::max);
    coeffs.assert_stable(cfg, max_vol_vent)?;

    let mut state = ZoneState {
        t_int: initial_temperature(usage, occupancy, anchor),
        hour_index: 0,
    };
    let mut outputs = OutputSeries::with_capacity(horizon);
    for k in 0..horizon {
        let weekday = anchor.advance(k / 24);
        let hod = (k % 24) as f64;
        let inputs = HourInputs {
            weekday,
            hour_of_day: hod,
            occupied: occupancy.occupied(weekday, hod),
            tamb: weather.tamb[k],
            iglob_h: weather.iglob_h[k],
            usage: usage.day(weekday),
        };
        let (next, out) = step(state, inputs, params, &coeffs, cfg)?;
        outputs.t_int.push(out.t_int);
        outputs.q_ac.push(out.q_ac);
        outputs.q_heat.push(out.q_heat);
        outputs.q_people.push(out.q_people);
        outputs.q_eqp.push(out.q_eqp);
        outputs.q_light.push(out.q_light);
        outputs.q_ahu_c.push(out.q_ahu_c);
        outputs.q_ahu_h.push(out.q_ahu_h);
        state = next;
    }

    let episode = Episode {
        params: params.clone(),
        usage: usage.clone(),
        occupancy: occupancy.clone(),
        weather: weather.clone(),
        anchor,
        start_hour,
        outputs,
    };
    episode.validate()?;
    Ok(episode)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::AppConfig;
    use crate::domain::DayUsage;
    use crate::rng::{substream, Stream};
    use crate::sampler::sample_configuration;

    fn idle_day() -> DayUsage {
        // Setpoints far from the test temperatures so the thermostat stays off.
        DayUsage {
            start_cool: 8.0,
            end_cool: 18.0,
            t_cool_reduced: 35.0,
            t_cool_comfort: 35.0,
            start_heat: 8.0,
            end_heat: 18.0,
            t_heat_reduced: 1.0,
            t_heat_comfort: 1.0,
            start_vent: 8.0,
            end_vent: 18.0,
            t_vent: 21.0,
            vol_vent: 1.0,
        }
    }

    fn passive_params() -> BuildingParams {
        let cfg = AppConfig::synthetic_default();
        let mut p = cfg.scenario_params().unwrap();
        p.power_heat_max = 0.0;
        p.power_cool_max = 0.0;
        p.n_occupants = 0.0;
        p.n_pcs = 0.0;
        p.percent_light_night = 0.0;
        p.percent_pcs_night = 0.0;
        p
    }

    fn saturday_inputs(day: &DayUsage, tamb: f64) -> HourInputs<'_> {
        HourInputs {
            weekday: Weekday::Saturday,
            hour_of_day: 3.0,
            occupied: false,
            tamb,
            iglob_h: 0.0,
            usage: day,
        }
    }

    #[test]
    fn thermal_equilibrium_is_a_fixed_point() {
        let cfg = OracleConfig::default();
        let params = passive_params();
        let coeffs = ZoneCoefficients::derive(&params, &cfg).unwrap();
        let day = idle_day();
        let state = ZoneState { t_int: 18.0, hour_index: 0 };
        let (next, out) = step(state, saturday_inputs(&day, 18.0), &params, &coeffs, &cfg).unwrap();
        assert_eq!(next.t_int, 18.0);
        for q in [out.q_ac, out.q_heat, out.q_people, out.q_eqp, out.q_light, out.q_ahu_c, out.q_ahu_h] {
            assert_eq!(q, 0.0);
        }
    }

    #[test]
    fn free_cooling_relaxes_without_undershoot() {
        let cfg = OracleConfig::default();
        let params = passive_params();
        let coeffs = ZoneCoefficients::derive(&params, &cfg).unwrap();
        let day = idle_day();
        let mut state = ZoneState { t_int: 15.0, hour_index: 0 };
        let mut prev = state.t_int;
        // The zone time constant is a few hundred hours at this capacitance.
        for _ in 0..800 {
            let (next, _) = step(state, saturday_inputs(&day, 10.0), &params, &coeffs, &cfg).unwrap();
            assert!(next.t_int < prev, "temperature must decrease");
            assert!(next.t_int > 10.0, "must not undershoot ambient");
            prev = next.t_int;
            state = next;
        }
        assert!(state.t_int - 10.0 < 0.5, "should approach ambient, at {}", state.t_int);
    }

    #[test]
    fn heating_saturates_exactly_at_installed_power() {
        let cfg = OracleConfig::default();
        let app = AppConfig::synthetic_default();
        let mut params = app.scenario_params().unwrap();
        params.power_heat_max = 250.0;
        let coeffs = ZoneCoefficients::derive(&params, &cfg).unwrap();
        let mut day = idle_day();
        day.t_heat_reduced = 22.0;
        day.t_heat_comfort = 22.0;
        // Demand 200 kW/K * 12 K far exceeds 250 kW.
        let state = ZoneState { t_int: 10.0, hour_index: 0 };
        let (_, out) = step(state, saturday_inputs(&day, 0.0), &params, &coeffs, &cfg).unwrap();
        assert_eq!(out.q_heat, 250.0);
    }

    #[test]
    fn doubling_capacitance_damps_diurnal_swing() {
        let app = AppConfig::synthetic_default();
        let weather = WeatherSeries::synthetic(336, 3);
        let mut params = passive_params();
        params.capacitance = 80.0;
        let usage = UsageSchedule::uniform(idle_day()).unwrap();
        let occ = app.scenario.occupancy.clone();

        let swing = |capacitance: f64| -> f64 {
            let mut p = params.clone();
            p.capacitance = capacitance;
            let ep = simulate(&p, &usage, &occ, &weather, Weekday::Monday, 0, &app.oracle).unwrap();
            // Skip the first week of burn-in, measure the last week's swing.
            let tail = &ep.outputs.t_int[168..];
            let hi = tail.iter().cloned().fold(f64::MIN, f64::max);
            let lo = tail.iter().cloned().fold(f64::MAX, f64::min);
            hi - lo
        };
        assert!(swing(160.0) < swing(80.0));
    }

    #[test]
    fn raising_heat_setpoint_never_reduces_heating_energy() {
        let app = AppConfig::synthetic_default();
        // Cold synthetic month: shift ambient down, kill the sun.
        let mut weather = WeatherSeries::synthetic(672, 9);
        for v in weather.tamb.iter_mut() {
            *v -= 16.0;
        }
        let params = app.scenario_params().unwrap();
        let occ = app.scenario.occupancy.clone();

        let heat_energy = |comfort: f64| -> f64 {
            let mut day = app.scenario.usage.day(Weekday::Monday).clone();
            day.t_heat_comfort = comfort;
            let usage = UsageSchedule::uniform(day).unwrap();
            let ep = simulate(&params, &usage, &occ, &weather, Weekday::Monday, 0, &app.oracle)
                .unwrap();
            ep.outputs.q_heat.iter().sum()
        };
        assert!(heat_energy(23.5) >= heat_energy(22.5));
    }

    #[test]
    fn energy_bookkeeping_closes() {
        let app = AppConfig::synthetic_default();
        let weather = WeatherSeries::synthetic(336, 5);
        let params = app.scenario_params().unwrap();
        let usage = app.scenario.usage.clone();
        let occ = app.scenario.occupancy.clone();
        let cfg = &app.oracle;
        let ep = simulate(&params, &usage, &occ, &weather, Weekday::Monday, 0, cfg).unwrap();

        let coeffs = ZoneCoefficients::derive(&params, cfg).unwrap();
        let t0 = initial_temperature(&usage, &occ, Weekday::Monday);

        // Re-integrate the step equation from the emitted outputs.
        let mut integral = 0.0;
        let mut t_prev = t0;
        for k in 0..ep.horizon() {
            let weekday = Weekday::Monday.advance(k / 24);
            let hod = (k % 24) as f64;
            let du = usage.day(weekday);
            let vent_on = weekday.is_working_day() && du.start_vent <= hod && hod < du.end_vent;
            let q_vent = if vent_on {
                du.vol_vent * coeffs.volume * cfg.air_heat_capacity * (du.t_vent - t_prev)
            } else {
                0.0
            };
            let q_env = (coeffs.ua_envelope + coeffs.ua_infiltration) * (weather.tamb[k] - t_prev);
            let q_solar = cfg.solar_aperture * coeffs.window_area * weather.iglob_h[k] / 1000.0;
            let net = ep.outputs.q_heat[k] - ep.outputs.q_ac[k]
                + ep.outputs.q_people[k]
                + ep.outputs.q_eqp[k]
                + ep.outputs.q_light[k]
                + q_solar
                + q_env
                + q_vent;
            integral += net;
            t_prev = ep.outputs.t_int[k];
        }
        let enthalpy_change = coeffs.capacity * (ep.outputs.t_int[ep.horizon() - 1] - t0);
        let rel = (enthalpy_change - integral).abs() / integral.abs().max(1.0);
        assert!(rel < 1e-6, "bookkeeping gap {rel}");
    }

    #[test]
    fn simulate_is_deterministic() {
        let app = AppConfig::synthetic_default();
        let weather = WeatherSeries::synthetic(336, 5);
        let params = app.scenario_params().unwrap();
        let a = simulate(&params, &app.scenario.usage, &app.scenario.occupancy, &weather,
                         Weekday::Monday, 0, &app.oracle).unwrap();
        let b = simulate(&params, &app.scenario.usage, &app.scenario.occupancy, &weather,
                         Weekday::Monday, 0, &app.oracle).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn occupant_gains_follow_occupancy_and_night_fractions() {
        let app = AppConfig::synthetic_default();
        let weather = WeatherSeries::synthetic(168, 5);
        let mut params = app.scenario_params().unwrap();
        params.percent_light_night = 40.0;
        params.percent_pcs_night = 20.0;
        let ep = simulate(&params, &app.scenario.usage, &app.scenario.occupancy, &weather,
                          Weekday::Monday, 0, &app.oracle).unwrap();
        let occ = ep.occupancy_indicator();
        let full_eqp = params.n_pcs * app.oracle.pc_gain_w / 1000.0;
        let full_light = app.oracle.lighting_w_per_m2 * params.geometry.total_floor_area / 1000.0;
        for k in 0..ep.horizon() {
            if occ[k] == 0.0 {
                assert_eq!(ep.outputs.q_people[k], 0.0);
                assert!((ep.outputs.q_eqp[k] - 0.2 * full_eqp).abs() < 1e-12);
                assert!((ep.outputs.q_light[k] - 0.4 * full_light).abs() < 1e-12);
            } else {
                assert!(ep.outputs.q_people[k] > 0.0);
                assert!((ep.outputs.q_eqp[k] - full_eqp).abs() < 1e-12);
                assert!((ep.outputs.q_light[k] - full_light).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn temperature_stays_within_guard_rails_on_random_samples() {
        let app = AppConfig::synthetic_default();
        let weather = WeatherSeries::synthetic(336, 11);
        let tamb_min = weather.tamb.iter().cloned().fold(f64::MAX, f64::min);
        let tamb_max = weather.tamb.iter().cloned().fold(f64::MIN, f64::max);
        // Setpoints can reach 30 degC in the sampled ranges.
        let upper = tamb_max.max(30.0) + 15.0;
        let lower = tamb_min - 5.0;

        for i in 0..1000 {
            let mut rng = substream(4242, Stream::Sampling, i);
            let (params, usage, occ) =
                sample_configuration(&app.ranges, &app.geometry, &mut rng).unwrap();
            let ep = simulate(&params, &usage, &occ, &weather, Weekday::Monday, 0, &app.oracle)
                .unwrap();
            for (k, t) in ep.outputs.t_int.iter().enumerate() {
                assert!(
                    (lower..=upper).contains(t),
                    "sample {i} hour {k}: T {t} outside [{lower}, {upper}]"
                );
            }
        }
    }
}
