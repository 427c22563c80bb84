//! MSDU arrival processes, one per direction.

use serde::{Deserialize, Serialize};

use crate::kernel::{RngStream, SimTime};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArrivalKind {
    Cbr,
    Poisson,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrafficConfig {
    /// Offered load per direction.
    pub rate_mbps: f64,
    #[serde(default = "default_msdu_bits")]
    pub msdu_size_bits: u64,
    #[serde(default = "default_arrival")]
    pub arrival: ArrivalKind,
}

fn default_msdu_bits() -> u64 {
    12_000
}

fn default_arrival() -> ArrivalKind {
    ArrivalKind::Cbr
}

impl Default for TrafficConfig {
    fn default() -> Self {
        TrafficConfig {
            rate_mbps: 10.0,
            msdu_size_bits: default_msdu_bits(),
            arrival: default_arrival(),
        }
    }
}

/// Arrival instants of one direction. CBR starts at a random phase within
/// the first interval so the two directions do not collide by construction.
#[derive(Debug, Clone)]
pub struct ArrivalProcess {
    kind: ArrivalKind,
    interval_ns: f64,
    phase_ns: f64,
    count: u64,
    next: SimTime,
    rng: RngStream,
}

impl ArrivalProcess {
    pub fn new(config: &TrafficConfig, mut rng: RngStream) -> Self {
        let active = config.rate_mbps > 0.0 && config.msdu_size_bits > 0;
        let interval_ns = if active {
            config.msdu_size_bits as f64 * 1e3 / config.rate_mbps
        } else {
            f64::INFINITY
        };
        let phase_ns = if active {
            match config.arrival {
                ArrivalKind::Cbr => rng.unit() * interval_ns,
                ArrivalKind::Poisson => rng.exponential(interval_ns),
            }
        } else {
            0.0
        };
        ArrivalProcess {
            kind: config.arrival,
            interval_ns,
            phase_ns,
            count: 0,
            next: if active {
                SimTime::from_nanos(phase_ns.round() as u64)
            } else {
                SimTime::MAX
            },
            rng,
        }
    }

    /// Time of the next arrival, `SimTime::MAX` if there is none.
    pub fn peek(&self) -> SimTime {
        self.next
    }

    /// Consumes the next arrival and returns its time.
    pub fn pop(&mut self) -> SimTime {
        let t = self.next;
        self.count += 1;
        self.next = match self.kind {
            // From the phase each time, so rounding never accumulates.
            ArrivalKind::Cbr => SimTime::from_nanos(
                (self.phase_ns + self.count as f64 * self.interval_ns).round() as u64,
            ),
            ArrivalKind::Poisson => {
                let gap = self.rng.exponential(self.interval_ns).round() as u64;
                t + SimTime::from_nanos(gap)
            }
        };
        t
    }
}
