//! Sectorised azimuth-only antenna patterns.

use serde::{Deserialize, Serialize};

use crate::geometry::normalize_deg;

/// Flat-top two-level pattern: `num_sectors` equal arcs, each with
/// `mainlobe_gain_db` inside and `sidelobe_gain_db` everywhere else.
///
/// Sector `s` covers local azimuths `[s * 360/N, (s + 1) * 360/N)`. The
/// local frame is the global one rotated by `orientation_deg`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AntennaModel {
    pub num_sectors: usize,
    pub mainlobe_gain_db: f64,
    pub sidelobe_gain_db: f64,
    #[serde(default)]
    pub orientation_deg: f64,
}

impl AntennaModel {
    pub fn new(num_sectors: usize, mainlobe_gain_db: f64, sidelobe_gain_db: f64) -> Self {
        AntennaModel {
            num_sectors,
            mainlobe_gain_db,
            sidelobe_gain_db,
            orientation_deg: 0.0,
        }
    }

    pub fn beam_width_deg(&self) -> f64 {
        360.0 / self.num_sectors as f64
    }

    /// The unique sector whose mainlobe covers a global azimuth.
    pub fn sector_of(&self, azimuth_deg: f64) -> usize {
        let local = normalize_deg(azimuth_deg - self.orientation_deg);
        let s = (local * self.num_sectors as f64 / 360.0).floor() as usize;
        s.min(self.num_sectors - 1)
    }

    pub fn sector_gain_db(&self, sector: usize, azimuth_deg: f64) -> f64 {
        debug_assert!(sector < self.num_sectors);
        if self.sector_of(azimuth_deg) == sector {
            self.mainlobe_gain_db
        } else {
            self.sidelobe_gain_db
        }
    }

    pub fn is_valid(&self) -> bool {
        self.num_sectors > 0
            && self.mainlobe_gain_db.is_finite()
            && self.sidelobe_gain_db.is_finite()
            && self.sidelobe_gain_db < self.mainlobe_gain_db
            && self.orientation_deg.is_finite()
    }
}

/// Free-standing form of [`AntennaModel::sector_gain_db`].
pub fn sector_gain_db(antenna: &AntennaModel, sector: usize, azimuth_deg: f64) -> f64 {
    antenna.sector_gain_db(sector, azimuth_deg)
}

/// Sector indices used on a directional link, `<tx, rx>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BeamPair {
    pub tx_sector: usize,
    pub rx_sector: usize,
}

impl BeamPair {
    pub const fn new(tx_sector: usize, rx_sector: usize) -> Self {
        BeamPair {
            tx_sector,
            rx_sector,
        }
    }

    pub fn reversed(self) -> Self {
        BeamPair::new(self.rx_sector, self.tx_sector)
    }
}
