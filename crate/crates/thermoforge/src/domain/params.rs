//! Static physical description of a building.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fixed geometry of a building. These fields describe the envelope surfaces
/// and are never sampled or calibrated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuildingGeometry {
    /// Area of the four vertical facades, m².
    pub facade_area: [f64; 4],
    /// Roof area, m².
    pub roof_area: f64,
    /// Ground slab area, m².
    pub ground_area: f64,
    /// Total conditioned floor area, m².
    pub total_floor_area: f64,
}

impl BuildingGeometry {
    pub fn validate(&self) -> Result<()> {
        let mut areas = vec![self.roof_area, self.ground_area, self.total_floor_area];
        areas.extend_from_slice(&self.facade_area);
        if areas.iter().any(|a| !a.is_finite() || *a <= 0.0) {
            return Err(Error::InvalidParameter(
                "geometry areas must be strictly positive".into(),
            ));
        }
        Ok(())
    }
}

/// Physical building parameters: the envelope, capacitance, HVAC capacity and
/// internal-gain description. All non-geometry fields are sampled during
/// dataset generation and estimated during calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuildingParams {
    /// Infiltration air change rate, zone volumes per hour.
    pub airchange_infiltration: f64,
    /// Volumetric heat capacity of the zone, kJ·K⁻¹·m⁻³.
    pub capacitance: f64,
    /// Installed heating power, kW.
    pub power_heat_max: f64,
    /// Installed cooling power, kW.
    pub power_cool_max: f64,
    /// Occupant count during occupied hours.
    pub n_occupants: f64,
    /// Number of PCs (and similar plug loads).
    pub n_pcs: f64,
    /// Share of lighting that stays on outside occupancy, %.
    pub percent_light_night: f64,
    /// Share of PCs that stay on outside occupancy, %.
    pub percent_pcs_night: f64,
    /// Insulation thickness per facade, m.
    pub facade_thickness: [f64; 4],
    /// Roof insulation thickness, m.
    pub roof_thickness: f64,
    /// Glazed share of each facade, %.
    pub facade_window_percent: [f64; 4],
    /// Fixed envelope geometry.
    pub geometry: BuildingGeometry,
}

/// Names of the sampled/calibrated parameter fields, in canonical feature
/// order. Grid ranges and normalization bounds are keyed by these names.
pub const THETA_FIELDS: [&str; 17] = [
    "airchange_infiltration",
    "capacitance",
    "power_heat_max",
    "power_cool_max",
    "n_occupants",
    "n_pcs",
    "percent_light_night",
    "percent_pcs_night",
    "facade_thickness_1",
    "facade_thickness_2",
    "facade_thickness_3",
    "facade_thickness_4",
    "roof_thickness",
    "facade_window_percent_1",
    "facade_window_percent_2",
    "facade_window_percent_3",
    "facade_window_percent_4",
];

impl BuildingParams {
    /// Reads a sampled/calibrated field by its canonical name.
    pub fn theta(&self, field: &str) -> Result<f64> {
        Ok(match field {
            "airchange_infiltration" => self.airchange_infiltration,
            "capacitance" => self.capacitance,
            "power_heat_max" => self.power_heat_max,
            "power_cool_max" => self.power_cool_max,
            "n_occupants" => self.n_occupants,
            "n_pcs" => self.n_pcs,
            "percent_light_night" => self.percent_light_night,
            "percent_pcs_night" => self.percent_pcs_night,
            "facade_thickness_1" => self.facade_thickness[0],
            "facade_thickness_2" => self.facade_thickness[1],
            "facade_thickness_3" => self.facade_thickness[2],
            "facade_thickness_4" => self.facade_thickness[3],
            "roof_thickness" => self.roof_thickness,
            "facade_window_percent_1" => self.facade_window_percent[0],
            "facade_window_percent_2" => self.facade_window_percent[1],
            "facade_window_percent_3" => self.facade_window_percent[2],
            "facade_window_percent_4" => self.facade_window_percent[3],
            other => return Err(Error::UnknownChannel(other.to_string())),
        })
    }

    /// Writes a sampled/calibrated field by its canonical name.
    pub fn set_theta(&mut self, field: &str, value: f64) -> Result<()> {
        match field {
            "airchange_infiltration" => self.airchange_infiltration = value,
            "capacitance" => self.capacitance = value,
            "power_heat_max" => self.power_heat_max = value,
            "power_cool_max" => self.power_cool_max = value,
            "n_occupants" => self.n_occupants = value,
            "n_pcs" => self.n_pcs = value,
            "percent_light_night" => self.percent_light_night = value,
            "percent_pcs_night" => self.percent_pcs_night = value,
            "facade_thickness_1" => self.facade_thickness[0] = value,
            "facade_thickness_2" => self.facade_thickness[1] = value,
            "facade_thickness_3" => self.facade_thickness[2] = value,
            "facade_thickness_4" => self.facade_thickness[3] = value,
            "roof_thickness" => self.roof_thickness = value,
            "facade_window_percent_1" => self.facade_window_percent[0] = value,
            "facade_window_percent_2" => self.facade_window_percent[1] = value,
            "facade_window_percent_3" => self.facade_window_percent[2] = value,
            "facade_window_percent_4" => self.facade_window_percent[3] = value,
            other => return Err(Error::UnknownChannel(other.to_string())),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        for field in THETA_FIELDS {
            let v = self.theta(field)?;
            if !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{field} is not finite")));
            }
        }
        Ok(())
    }
}

/// Default occupant and PC counts from the floor area: two thirds of the area
/// is occupied at 12 m² per person, with 1.2 PCs per occupant.
pub fn derive_occupancy_defaults(total_floor_area: f64) -> Result<(u64, u64)> {
    if !(total_floor_area > 0.0) {
        return Err(Error::InvalidParameter(
            "total_floor_area must be positive".into(),
        ));
    }
    let occupied = 2.0 / 3.0 * total_floor_area / 12.0;
    let n_occ = occupied.round() as u64;
    let n_pcs = (1.2 * occupied).round() as u64;
    Ok((n_occ.max(1), n_pcs.max(1)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn occupancy_defaults_match_hand_values() {
        assert_eq!(derive_occupancy_defaults(18_512.0).unwrap(), (1028, 1234));
        assert_eq!(derive_occupancy_defaults(13_594.0).unwrap(), (755, 906));
        assert_eq!(derive_occupancy_defaults(18.0).unwrap(), (1, 1));
    }

    #[test]
    fn occupancy_defaults_reject_non_positive_area() {
        assert!(derive_occupancy_defaults(0.0).is_err());
        assert!(derive_occupancy_defaults(-3.0).is_err());
    }

    #[test]
    fn theta_roundtrip_by_name() {
        let mut p = test_params();
        for (i, field) in THETA_FIELDS.iter().enumerate() {
            p.set_theta(field, 100.0 + i as f64).unwrap();
        }
        for (i, field) in THETA_FIELDS.iter().enumerate() {
            assert_eq!(p.theta(field).unwrap(), 100.0 + i as f64);
        }
        assert!(p.theta("not_a_field").is_err());
    }

    pub(crate) fn test_params() -> BuildingParams {
        BuildingParams {
            airchange_infiltration: 0.3,
            capacitance: 150.0,
            power_heat_max: 500.0,
            power_cool_max: 500.0,
            n_occupants: 1200.0,
            n_pcs: 1400.0,
            percent_light_night: 20.0,
            percent_pcs_night: 30.0,
            facade_thickness: [0.10, 0.10, 0.10, 0.10],
            roof_thickness: 0.10,
            facade_window_percent: [45.0, 45.0, 45.0, 45.0],
            geometry: BuildingGeometry {
                facade_area: [2314.0, 1917.0, 2123.0, 1725.0],
                roof_area: 2304.0,
                ground_area: 2304.0,
                total_floor_area: 18_512.0,
            },
        }
    }
}
