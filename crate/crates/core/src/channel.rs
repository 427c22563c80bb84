//! Link SNR over the first-order ray set and beam-pair search.
//!
//! There is a single BSS, so the interference term is zero and SINR is SNR.
//! Links are reciprocal: reversing transmitter and receiver swaps departure
//! and arrival azimuths of every ray, so the uplink uses the downlink value
//! with the pair reversed.

use thiserror::Error;

use crate::antenna::{AntennaModel, BeamPair};
use crate::geometry::{for_each_ray, free_space_loss_db, Position, Scenario};

/// Finite stand-in for "no signal at all", below every threshold.
pub const NO_SIGNAL_DB: f64 = -1.0e3;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ChannelError {
    #[error("no propagation path exists between the link ends")]
    NoLink,
}

#[derive(Debug, Clone, Copy)]
struct Term {
    power_mw: f64,
    tx_sector: usize,
    rx_sector: usize,
}

/// Received power of every ray between two positions, resolved against a
/// pair of antennas so any beam pair can be scored cheaply.
#[derive(Debug, Clone)]
pub struct LinkPaths {
    terms: Vec<Term>,
    noise_dbm: f64,
    tx_main: f64,
    tx_side: f64,
    rx_main: f64,
    rx_side: f64,
    tx_sectors: usize,
    rx_sectors: usize,
}

impl LinkPaths {
    pub fn compute(
        scenario: &Scenario,
        tx: Position,
        rx: Position,
        tx_antenna: &AntennaModel,
        rx_antenna: &AntennaModel,
    ) -> LinkPaths {
        let mut terms = Vec::with_capacity(8);
        if tx.distance(rx) > 1e-12 {
            for_each_ray(scenario, tx, rx, |r| {
                let loss = free_space_loss_db(r.length_m, scenario.carrier_freq_hz)
                    + r.extra_loss_db;
                terms.push(Term {
                    power_mw: db_to_linear(scenario.tx_power_dbm - loss),
                    tx_sector: tx_antenna.sector_of(r.departure_azimuth_deg),
                    rx_sector: rx_antenna.sector_of(r.arrival_azimuth_deg),
                });
            });
        }
        LinkPaths {
            terms,
            noise_dbm: scenario.noise_dbm,
            tx_main: db_to_linear(tx_antenna.mainlobe_gain_db),
            tx_side: db_to_linear(tx_antenna.sidelobe_gain_db),
            rx_main: db_to_linear(rx_antenna.mainlobe_gain_db),
            rx_side: db_to_linear(rx_antenna.sidelobe_gain_db),
            tx_sectors: tx_antenna.num_sectors,
            rx_sectors: rx_antenna.num_sectors,
        }
    }

    pub fn num_paths(&self) -> usize {
        self.terms.len()
    }

    pub fn snr_db(&self, pair: BeamPair) -> f64 {
        let mut sum = 0.0;
        for t in &self.terms {
            let g_tx = if t.tx_sector == pair.tx_sector {
                self.tx_main
            } else {
                self.tx_side
            };
            let g_rx = if t.rx_sector == pair.rx_sector {
                self.rx_main
            } else {
                self.rx_side
            };
            sum += t.power_mw * g_tx * g_rx;
        }
        if sum > 0.0 {
            10.0 * sum.log10() - self.noise_dbm
        } else {
            NO_SIGNAL_DB
        }
    }

    /// Exhaustive argmax over all pairs, lowest `(tx, rx)` on ties.
    ///
    /// Only sectors that hold some ray, plus the lowest sector that holds
    /// none, can win: every other sector scores bit-identically to that
    /// lowest empty one and loses the tie.
    pub fn best_pair(&self) -> Result<BeamPair, ChannelError> {
        if self.terms.is_empty() {
            return Err(ChannelError::NoLink);
        }
        let tx = candidates(self.tx_sectors, self.terms.iter().map(|t| t.tx_sector));
        let rx = candidates(self.rx_sectors, self.terms.iter().map(|t| t.rx_sector));
        let mut best: Option<(f64, BeamPair)> = None;
        for &a in &tx {
            for &b in &rx {
                let pair = BeamPair::new(a, b);
                let snr = self.snr_db(pair);
                match best {
                    Some((s, _)) if snr <= s => {}
                    _ => best = Some((snr, pair)),
                }
            }
        }
        Ok(best.expect("non-empty candidate sets").1)
    }

    /// Best pair within `radius` sectors of `current` on each end. Ties keep
    /// `current`, then fall back to the lowest pair.
    pub fn best_near(&self, current: BeamPair, radius: usize) -> BeamPair {
        let mut best = (self.snr_db(current), current);
        let around = |c: usize, n: usize| -> Vec<usize> {
            let r = radius.min(n / 2);
            let mut v: Vec<usize> = (0..=2 * r).map(|k| (c + n + k - r) % n).collect();
            v.sort_unstable();
            v.dedup();
            v
        };
        for a in around(current.tx_sector, self.tx_sectors) {
            for b in around(current.rx_sector, self.rx_sectors) {
                let pair = BeamPair::new(a, b);
                let snr = self.snr_db(pair);
                if snr > best.0 {
                    best = (snr, pair);
                }
            }
        }
        best.1
    }
}

fn candidates(n: usize, used: impl Iterator<Item = usize>) -> Vec<usize> {
    let mut seen = vec![false; n];
    for s in used {
        seen[s] = true;
    }
    let mut out: Vec<usize> = (0..n).filter(|&s| seen[s]).collect();
    if let Some(empty) = (0..n).find(|&s| !seen[s]) {
        out.push(empty);
        out.sort_unstable();
    }
    out
}

pub fn db_to_linear(db: f64) -> f64 {
    (db * (std::f64::consts::LN_10 / 10.0)).exp()
}

/// SNR of `pair` on the link `tx -> rx`; [`NO_SIGNAL_DB`] when no ray exists.
pub fn link_snr_db(
    scenario: &Scenario,
    tx: Position,
    rx: Position,
    tx_antenna: &AntennaModel,
    rx_antenna: &AntennaModel,
    pair: BeamPair,
) -> f64 {
    LinkPaths::compute(scenario, tx, rx, tx_antenna, rx_antenna).snr_db(pair)
}

pub fn best_beam_pair(
    scenario: &Scenario,
    tx: Position,
    rx: Position,
    tx_antenna: &AntennaModel,
    rx_antenna: &AntennaModel,
) -> Result<BeamPair, ChannelError> {
    LinkPaths::compute(scenario, tx, rx, tx_antenna, rx_antenna).best_pair()
}
