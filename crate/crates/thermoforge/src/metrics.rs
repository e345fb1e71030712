//! Evaluation formulas: training metrics, calibration metrics and the
//! determination-coefficient cost used by the calibration stage.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean squared error over the hours where `mask` is nonzero (all hours when
/// `mask` is `None`).
pub fn mse(pred: &[f64], truth: &[f64], mask: Option<&[f64]>) -> Result<f64> {
    check_len(pred, truth)?;
    if let Some(m) = mask {
        check_len(pred, m)?;
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    for k in 0..pred.len() {
        if mask.map_or(true, |m| m[k] != 0.0) {
            let d = pred[k] - truth[k];
            sum += d * d;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::EmptyMask);
    }
    Ok(sum / n as f64)
}

/// Absolute relative error on the cumulative consumption:
/// `|sum(pred) - sum(truth)| / sum(truth)`.
pub fn delta_q_tot(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_len(pred, truth)?;
    let total_truth: f64 = truth.iter().sum();
    if total_truth <= 0.0 {
        return Err(Error::DegenerateSeries(
            "cumulative truth consumption is zero".into(),
        ));
    }
    let total_pred: f64 = pred.iter().sum();
    Ok((total_pred - total_truth).abs() / total_truth)
}

/// Mean bias error in percent: `100 * sum(z - zhat) / sum(z)`.
/// Positive values mean under-prediction.
pub fn mbe(truth: &[f64], pred: &[f64]) -> Result<f64> {
    check_len(pred, truth)?;
    let denom: f64 = truth.iter().sum();
    if denom == 0.0 {
        return Err(Error::DegenerateSeries("sum of truth series is zero".into()));
    }
    let num: f64 = truth.iter().zip(pred).map(|(z, zh)| z - zh).sum();
    Ok(100.0 * num / denom)
}

/// Coefficient of variation of the RMSE in percent: `100 * RMSE / mean(z)`.
pub fn cv_rmse(truth: &[f64], pred: &[f64]) -> Result<f64> {
    check_len(pred, truth)?;
    if truth.is_empty() {
        return Err(Error::EmptyMask);
    }
    let mean: f64 = truth.iter().sum::<f64>() / truth.len() as f64;
    if mean == 0.0 {
        return Err(Error::DegenerateSeries("mean of truth series is zero".into()));
    }
    let mse: f64 = truth
        .iter()
        .zip(pred)
        .map(|(z, zh)| (z - zh) * (z - zh))
        .sum::<f64>()
        / truth.len() as f64;
    Ok(100.0 * mse.sqrt() / mean)
}

/// Coefficient of determination: `1 - SS_res / SS_tot`.
pub fn r2(truth: &[f64], pred: &[f64]) -> Result<f64> {
    check_len(pred, truth)?;
    if truth.is_empty() {
        return Err(Error::EmptyMask);
    }
    let mean: f64 = truth.iter().sum::<f64>() / truth.len() as f64;
    let ss_tot: f64 = truth.iter().map(|z| (z - mean) * (z - mean)).sum();
    if ss_tot == 0.0 {
        return Err(Error::DegenerateSeries("truth series is constant".into()));
    }
    let ss_res: f64 = truth
        .iter()
        .zip(pred)
        .map(|(z, zh)| (z - zh) * (z - zh))
        .sum();
    Ok(1.0 - ss_res / ss_tot)
}

fn check_len(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!(
            "series lengths differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

/// Hourly-calibration guideline thresholds.
pub const CV_RMSE_GUIDELINE: f64 = 20.0;
pub const MBE_GUIDELINE: f64 = 5.0;

/// Full metric block comparing a predicted episode against observations.
///
/// The MSE entries are computed on normalized series (the scale the
/// surrogate is trained on); bias and variation metrics are computed on
/// physical totals. `_q` aggregates use the hourly total consumption.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mse_t: f64,
    pub mse_q: f64,
    pub mse_t_occ: f64,
    pub mse_q_occ: f64,
    pub delta_q_tot: f64,
    pub mbe_q: f64,
    pub cv_rmse_q: f64,
    pub mbe_t: f64,
    pub cv_rmse_t: f64,
    pub r2_t: f64,
    pub r2_q: f64,
}

/// Inputs to [`EvalReport::compute`]: normalized per-channel series for the
/// MSE block and physical series for the calibration block.
pub struct ReportInputs<'a> {
    /// Normalized temperature, prediction and truth.
    pub t_norm: (&'a [f64], &'a [f64]),
    /// Normalized consumption channels, (prediction, truth) per channel.
    pub q_norm: Vec<(&'a [f64], &'a [f64])>,
    /// Physical indoor temperature, prediction and truth.
    pub t_phys: (&'a [f64], &'a [f64]),
    /// Physical hourly total consumption, prediction and truth.
    pub q_total_phys: (&'a [f64], &'a [f64]),
    /// Occupancy indicator per hour.
    pub occupancy: &'a [f64],
}

impl EvalReport {
    pub fn compute(inputs: &ReportInputs<'_>) -> Result<EvalReport> {
        let (t_pred_n, t_truth_n) = inputs.t_norm;
        let occ = inputs.occupancy;

        let mse_t = mse(t_pred_n, t_truth_n, None)?;
        let mse_t_occ = mse(t_pred_n, t_truth_n, Some(occ))?;

        let mut mse_q = 0.0;
        let mut mse_q_occ = 0.0;
        if inputs.q_norm.is_empty() {
            return Err(Error::Dimension("no consumption channels".into()));
        }
        for (pred, truth) in &inputs.q_norm {
            mse_q += mse(pred, truth, None)?;
            mse_q_occ += mse(pred, truth, Some(occ))?;
        }
        mse_q /= inputs.q_norm.len() as f64;
        mse_q_occ /= inputs.q_norm.len() as f64;

        let (q_pred, q_truth) = inputs.q_total_phys;
        let (t_pred, t_truth) = inputs.t_phys;
        Ok(EvalReport {
            mse_t,
            mse_q,
            mse_t_occ,
            mse_q_occ,
            delta_q_tot: delta_q_tot(q_pred, q_truth)?,
            mbe_q: mbe(q_truth, q_pred)?,
            cv_rmse_q: cv_rmse(q_truth, q_pred)?,
            mbe_t: mbe(t_truth, t_pred)?,
            cv_rmse_t: cv_rmse(t_truth, t_pred)?,
            r2_t: r2(t_truth, t_pred)?,
            r2_q: r2(q_truth, q_pred)?,
        })
    }

    /// Whether the consumption calibration meets the hourly guidelines
    /// (|MBE| within 5%, Cv(RMSE) within 20%).
    pub fn meets_hourly_guidelines(&self) -> bool {
        self.mbe_q.abs() <= MBE_GUIDELINE && self.cv_rmse_q <= CV_RMSE_GUIDELINE
    }

    /// Fixed-order metric table as printed by the CLI.
    pub fn table(&self) -> String {
        let rows = [
            ("Loss terms", None),
            ("  MSE_T", Some(self.mse_t)),
            ("  MSE_Q", Some(self.mse_q)),
            ("  MSE_T_occ", Some(self.mse_t_occ)),
            ("  MSE_Q_occ", Some(self.mse_q_occ)),
            ("  Delta_Q_tot", Some(self.delta_q_tot)),
            ("Calibration", None),
            ("  MBE_Q (%)", Some(self.mbe_q)),
            ("  Cv(RMSE)_Q (%)", Some(self.cv_rmse_q)),
            ("  MBE_T (%)", Some(self.mbe_t)),
            ("  Cv(RMSE)_T (%)", Some(self.cv_rmse_t)),
            ("  R2_T", Some(self.r2_t)),
            ("  R2_Q", Some(self.r2_q)),
        ];
        let mut out = String::new();
        for (name, value) in rows {
            match value {
                Some(v) => out.push_str(&format!("{name:<18} {v:>12.6}\n")),
                None => out.push_str(&format!("{name}\n")),
            }
        }
        out
    }
}
