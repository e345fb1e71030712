//! Min-max normalization between physical units and the surrogate's (0, 1)
//! output space.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-channel `(lo, hi)` bounds. `normalize` maps `[lo, hi]` onto `[0, 1]`,
/// clamping out-of-range inputs and counting each clamp.
#[derive(Debug, Serialize, Deserialize)]
pub struct Normalizer {
    bounds: BTreeMap<String, (f64, f64)>,
    #[serde(skip)]
    clamp_count: AtomicU64,
}

impl Clone for Normalizer {
    fn clone(&self) -> Self {
        Normalizer {
            bounds: self.bounds.clone(),
            clamp_count: AtomicU64::new(self.clamp_count.load(Ordering::Relaxed)),
        }
    }
}

impl PartialEq for Normalizer {
    fn eq(&self, other: &Self) -> bool {
        self.bounds == other.bounds
    }
}

impl Normalizer {
    pub fn new(bounds: BTreeMap<String, (f64, f64)>) -> Result<Self> {
        for (name, (lo, hi)) in &bounds {
            if !(lo < hi) {
                return Err(Error::Config(format!(
                    "channel {name}: bounds [{lo}, {hi}] must satisfy lo < hi"
                )));
            }
        }
        Ok(Normalizer {
            bounds,
            clamp_count: AtomicU64::new(0),
        })
    }

    pub fn bounds(&self, channel: &str) -> Result<(f64, f64)> {
        self.bounds
            .get(channel)
            .copied()
            .ok_or_else(|| Error::UnknownChannel(channel.to_string()))
    }

    pub fn channels(&self) -> impl Iterator<Item = &str> {
        self.bounds.keys().map(|s| s.as_str())
    }

    /// `(x - lo) / (hi - lo)`, clamped to [0, 1]. Clamps are counted, not
    /// rejected; dataset sampling validates ranges upstream instead.
    pub fn normalize(&self, channel: &str, x: f64) -> Result<f64> {
        let (lo, hi) = self.bounds(channel)?;
        let u = (x - lo) / (hi - lo);
        if !(0.0..=1.0).contains(&u) {
            self.clamp_count.fetch_add(1, Ordering::Relaxed);
            return Ok(u.clamp(0.0, 1.0));
        }
        Ok(u)
    }

    /// Exact inverse of [`Normalizer::normalize`] on in-range values.
    pub fn denormalize(&self, channel: &str, u: f64) -> Result<f64> {
        let (lo, hi) = self.bounds(channel)?;
        Ok(lo + u * (hi - lo))
    }

    /// Number of out-of-range inputs clamped so far.
    pub fn clamp_count(&self) -> u64 {
        self.clamp_count.load(Ordering::Relaxed)
    }
}
