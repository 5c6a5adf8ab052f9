//! Frozen calibration constants for one (map, θ) pair.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::config::sha256_hex;

pub const MANIFEST_SCHEMA: u32 = 1;

/// Observed values may exceed a frozen constant by this factor before a
/// report flags them.
pub const FLAG_FACTOR: f64 = 1.2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransferenceBand {
    pub k: usize,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitMeta {
    pub date: String,
    pub seed: u64,
    pub t_list: Vec<f64>,
    pub lower_t_list: Vec<f64>,
    pub eps_rules: Vec<String>,
    pub ball_center: Vec<f64>,
    pub ball_radius: f64,
    pub count_radius: f64,
    pub v: f64,
    pub bases: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationManifest {
    pub schema: u32,
    pub map: String,
    pub theta: Vec<f64>,
    /// measure_S ≤ E_S (δK ΠT/max T)^α vol(B)
    pub e_s: f64,
    /// measure_S ≤ first term + E_sharp (δ min{K, 1/r} ΠT/max T)^α
    pub e_sharp: f64,
    /// special measure ≤ K₀ (ε^{n−1/2} e^{3t/2})^{−α}
    pub k0: f64,
    /// cover radius ρ = C₀ (ε^m e^{(d+1)t})^{−1/d}
    pub c0: f64,
    /// largest inclusion constant c seen on special points
    pub c_inclusion: f64,
    /// #𝒩 ≥ C_lower ε^m e^{(d+1)t} vol(B)
    pub c_lower: f64,
    /// generic count ≤ c_generic ε^m e^{(d+1)t} vol(B)
    pub c_generic: f64,
    /// per-tile count ≤ c_tile ε^n e^t (ε e^{−t})^{−d/2}
    pub c_tile: f64,
    /// dual δ₁ ≤ c_dual v^{1/n} off 𝔊
    pub c_dual: f64,
    /// max/min of count/prediction over a sweep
    pub count_band: f64,
    pub transference: Vec<TransferenceBand>,
    pub fit: FitMeta,
}

impl CalibrationManifest {
    pub fn validate(&self) -> Result<()> {
        if self.schema != MANIFEST_SCHEMA {
            return Err(Error::Schema(format!(
                "manifest schema {} is not {MANIFEST_SCHEMA}",
                self.schema
            )));
        }
        let named = [
            ("e_s", self.e_s),
            ("e_sharp", self.e_sharp),
            ("k0", self.k0),
            ("c0", self.c0),
            ("c_inclusion", self.c_inclusion),
            ("c_lower", self.c_lower),
            ("c_generic", self.c_generic),
            ("c_tile", self.c_tile),
            ("c_dual", self.c_dual),
            ("count_band", self.count_band),
        ];
        for (name, v) in named {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Schema(format!("constant {name} must be positive, got {v}")));
            }
        }
        for b in &self.transference {
            if !(b.lo > 0.0 && b.lo <= b.hi && b.hi.is_finite()) {
                return Err(Error::Schema(format!("bad transference band for k = {}", b.k)));
            }
        }
        Ok(())
    }

    pub fn band(&self, k: usize) -> Option<(f64, f64)> {
        self.transference.iter().find(|b| b.k == k).map(|b| (b.lo, b.hi))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: CalibrationManifest = serde_json::from_str(text)?;
        m.validate()?;
        Ok(m)
    }

    /// The manifest and the sha256 of the file bytes.
    pub fn load(path: &Path) -> Result<(Self, String)> {
        let bytes = std::fs::read(path)?;
        let text = std::str::from_utf8(&bytes).map_err(|_| Error::Schema("manifest is not UTF-8".into()))?;
        Ok((CalibrationManifest::from_json(text)?, sha256_hex(&bytes)))
    }

    /// Errors unless the manifest was fitted for this map and θ.
    pub fn check_applies(&self, map: &str, theta: &[f64]) -> Result<()> {
        if self.map != map || self.theta != theta {
            return Err(Error::Schema(format!(
                "manifest is for {} θ={:?}, the run is {} θ={:?}",
                self.map, self.theta, map, theta
            )));
        }
        Ok(())
    }
}

/// Smallest power of two ≥ v.
pub fn dyadic_ceil(v: f64) -> f64 {
    2f64.powi(v.log2().ceil() as i32)
}

/// Largest power of two ≤ v.
pub fn dyadic_floor(v: f64) -> f64 {
    2f64.powi(v.log2().floor() as i32)
}
