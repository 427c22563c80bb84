//! PHY abstraction: preamble synchronisation and per-MPDU success.
//!
//! Packet error follows a logistic curve in SNR around a per-MCS midpoint,
//! defined for a reference MPDU length. Other lengths are treated as
//! independent segments: `PER(L) = 1 - (1 - PER_ref)^(L / L_ref)`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Shipped MCS table (EDMG single carrier, one channel, normal GI).
pub const DEFAULT_MCS_TABLE: &str = include_str!("../../../configs/mcs_table.toml");

#[derive(Debug, Error)]
pub enum PhyError {
    #[error("MCS {0} is not in the table")]
    UnknownMcs(u8),
    #[error("cannot read MCS table {path}: {message}")]
    Load { path: String, message: String },
    #[error("invalid MCS table: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McsEntry {
    pub index: u8,
    pub midpoint_db: f64,
    pub slope_db: f64,
    pub phy_rate_mbps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McsTable {
    pub reference_bits: u64,
    entries: BTreeMap<u8, McsEntry>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct McsFile {
    reference_bits: u64,
    mcs: Vec<McsEntry>,
}

impl McsTable {
    pub fn parse(text: &str) -> Result<McsTable, PhyError> {
        let file: McsFile =
            toml::from_str(text).map_err(|e| PhyError::Invalid(e.to_string()))?;
        if file.reference_bits == 0 {
            return Err(PhyError::Invalid("reference_bits must be positive".into()));
        }
        let mut entries = BTreeMap::new();
        for e in file.mcs {
            if !(e.slope_db > 0.0 && e.phy_rate_mbps > 0.0 && e.midpoint_db.is_finite()) {
                return Err(PhyError::Invalid(format!(
                    "MCS {} needs positive slope and rate",
                    e.index
                )));
            }
            if entries.insert(e.index, e).is_some() {
                return Err(PhyError::Invalid(format!("MCS {} listed twice", e.index)));
            }
        }
        Ok(McsTable {
            reference_bits: file.reference_bits,
            entries,
        })
    }

    pub fn load(path: &Path) -> Result<McsTable, PhyError> {
        let text = std::fs::read_to_string(path).map_err(|e| PhyError::Load {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse(&text)
    }

    pub fn builtin() -> McsTable {
        Self::parse(DEFAULT_MCS_TABLE).expect("shipped MCS table parses")
    }

    pub fn get(&self, mcs: u8) -> Result<&McsEntry, PhyError> {
        self.entries.get(&mcs).ok_or(PhyError::UnknownMcs(mcs))
    }

    pub fn phy_rate_mbps(&self, mcs: u8) -> Result<f64, PhyError> {
        Ok(self.get(mcs)?.phy_rate_mbps)
    }

    /// Probability an MPDU of `mpdu_bits` decodes at `snr_db`.
    pub fn mpdu_success_prob(&self, snr_db: f64, mcs: u8, mpdu_bits: u64) -> Result<f64, PhyError> {
        let e = self.get(mcs)?;
        Ok(success_prob(e, self.reference_bits, snr_db, mpdu_bits))
    }
}

fn success_prob(e: &McsEntry, reference_bits: u64, snr_db: f64, mpdu_bits: u64) -> f64 {
    // ln(1 - PER_ref) = -softplus(-(snr - mid) / slope), stable for any snr.
    let x = (snr_db - e.midpoint_db) / e.slope_db;
    let ln_success_ref = -softplus(-x);
    let scale = mpdu_bits as f64 / reference_bits as f64;
    (scale * ln_success_ref).exp().clamp(0.0, 1.0)
}

fn softplus(v: f64) -> f64 {
    if v > 30.0 {
        v + (-v).exp().ln_1p()
    } else {
        v.exp().ln_1p()
    }
}

/// Threshold for acquiring the PPDU preamble.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhyConfig {
    pub sync_threshold_db: f64,
}

/// Closed lower bound: exactly at threshold the preamble is acquired.
pub fn preamble_sync_ok(snr_db: f64, config: &PhyConfig) -> bool {
    snr_db >= config.sync_threshold_db
}
