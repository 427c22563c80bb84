//! KPI accumulation: throughput, per-packet delay and MSDU drop rate.
//!
//! Only MSDUs that arrive at or after the warmup boundary count towards the
//! KPIs. Event counters (retransmissions, preamble failures, ...) count
//! events at or after warmup.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::SimTime;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum KpiError {
    #[error("MSDU {0} reached a second terminal state")]
    DoubleTerminal(u64),
    #[error("MSDU {0} was never recorded as arrived")]
    UnknownMsdu(u64),
    #[error("conservation violated: arrived {arrived} != delivered {delivered} + dropped {dropped} + residual {residual}")]
    Conservation {
        arrived: u64,
        delivered: u64,
        dropped: u64,
        residual: u64,
    },
    #[error("run end {run_end} does not exceed warmup {warmup}")]
    EmptyWindow { warmup: SimTime, run_end: SimTime },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KpiEvent {
    Arrived { id: u64, at: SimTime },
    Delivered { id: u64, arrival: SimTime, at: SimTime, bits: u64 },
    Dropped { id: u64, arrival: SimTime, at: SimTime },
    Retransmission { at: SimTime },
    PreambleFail { at: SimTime },
    Retrain { at: SimTime },
    TrackUpdate { at: SimTime },
}

/// Additive counters. Merging is associative and commutative.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct KpiCounts {
    pub arrived: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub delivered_bits: u64,
    /// Sum of delays of counted deliveries, nanoseconds.
    pub delay_sum_ns: u128,
    pub retransmissions: u64,
    pub preamble_failures: u64,
    pub retrains: u64,
    pub beamtracking_updates: u64,
}

impl KpiCounts {
    pub fn merge(&self, o: &KpiCounts) -> KpiCounts {
        KpiCounts {
            arrived: self.arrived + o.arrived,
            delivered: self.delivered + o.delivered,
            dropped: self.dropped + o.dropped,
            delivered_bits: self.delivered_bits + o.delivered_bits,
            delay_sum_ns: self.delay_sum_ns + o.delay_sum_ns,
            retransmissions: self.retransmissions + o.retransmissions,
            preamble_failures: self.preamble_failures + o.preamble_failures,
            retrains: self.retrains + o.retrains,
            beamtracking_updates: self.beamtracking_updates + o.beamtracking_updates,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KpiRecord {
    pub throughput_mbps: f64,
    /// Absent when nothing was delivered in the window.
    pub mean_delay_ms: Option<f64>,
    pub drop_rate: f64,
    pub arrived: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub retransmissions: u64,
    pub preamble_failures: u64,
    pub retrains: u64,
    pub beamtracking_updates: u64,
    /// MSDUs still queued or in flight at run end (all, not only windowed).
    pub residual: u64,
}

impl KpiRecord {
    pub fn from_counts(c: &KpiCounts, window: SimTime, residual: u64) -> KpiRecord {
        let secs = window.as_secs_f64();
        let settled = c.delivered + c.dropped;
        KpiRecord {
            throughput_mbps: if secs > 0.0 {
                c.delivered_bits as f64 / secs / 1e6
            } else {
                0.0
            },
            mean_delay_ms: (c.delivered > 0)
                .then(|| c.delay_sum_ns as f64 / c.delivered as f64 / 1e6),
            drop_rate: if settled > 0 {
                c.dropped as f64 / settled as f64
            } else {
                0.0
            },
            arrived: c.arrived,
            delivered: c.delivered,
            dropped: c.dropped,
            retransmissions: c.retransmissions,
            preamble_failures: c.preamble_failures,
            retrains: c.retrains,
            beamtracking_updates: c.beamtracking_updates,
            residual,
        }
    }
}

/// Per-run accumulator. MSDU ids are expected to be dense from zero.
#[derive(Debug, Clone)]
pub struct KpiAccumulator {
    warmup: SimTime,
    window: KpiCounts,
    arrived_total: u64,
    terminal_total: u64,
    delivered_total: u64,
    dropped_total: u64,
    seen: Vec<u64>,
    terminal: Vec<u64>,
}

fn bit(v: &[u64], i: u64) -> bool {
    v.get((i / 64) as usize).is_some_and(|w| w >> (i % 64) & 1 == 1)
}

fn set_bit(v: &mut Vec<u64>, i: u64) {
    let w = (i / 64) as usize;
    if v.len() <= w {
        v.resize(w + 1, 0);
    }
    v[w] |= 1 << (i % 64);
}

impl KpiAccumulator {
    pub fn new(warmup: SimTime) -> Self {
        KpiAccumulator {
            warmup,
            window: KpiCounts::default(),
            arrived_total: 0,
            terminal_total: 0,
            delivered_total: 0,
            dropped_total: 0,
            seen: Vec::new(),
            terminal: Vec::new(),
        }
    }

    pub fn warmup(&self) -> SimTime {
        self.warmup
    }

    pub fn counts(&self) -> &KpiCounts {
        &self.window
    }

    /// MSDUs that arrived but have not reached a terminal state.
    pub fn live(&self) -> u64 {
        self.arrived_total - self.terminal_total
    }

    pub fn arrived_total(&self) -> u64 {
        self.arrived_total
    }

    fn terminate(&mut self, id: u64) -> Result<(), KpiError> {
        if !bit(&self.seen, id) {
            return Err(KpiError::UnknownMsdu(id));
        }
        if bit(&self.terminal, id) {
            return Err(KpiError::DoubleTerminal(id));
        }
        set_bit(&mut self.terminal, id);
        self.terminal_total += 1;
        Ok(())
    }

    pub fn record_event(&mut self, event: KpiEvent) -> Result<(), KpiError> {
        let w = self.warmup;
        match event {
            KpiEvent::Arrived { id, at } => {
                set_bit(&mut self.seen, id);
                self.arrived_total += 1;
                if at >= w {
                    self.window.arrived += 1;
                }
            }
            KpiEvent::Delivered {
                id,
                arrival,
                at,
                bits,
            } => {
                self.terminate(id)?;
                self.delivered_total += 1;
                if arrival >= w {
                    self.window.delivered += 1;
                    self.window.delivered_bits += bits;
                    self.window.delay_sum_ns += (at - arrival).as_nanos() as u128;
                }
            }
            KpiEvent::Dropped { id, arrival, .. } => {
                self.terminate(id)?;
                self.dropped_total += 1;
                if arrival >= w {
                    self.window.dropped += 1;
                }
            }
            KpiEvent::Retransmission { at } if at >= w => self.window.retransmissions += 1,
            KpiEvent::PreambleFail { at } if at >= w => self.window.preamble_failures += 1,
            KpiEvent::Retrain { at } if at >= w => self.window.retrains += 1,
            KpiEvent::TrackUpdate { at } if at >= w => self.window.beamtracking_updates += 1,
            _ => {}
        }
        Ok(())
    }

    /// Checks conservation against the MAC's own residual count, then
    /// produces the record for the window `[warmup, run_end)`.
    pub fn finalize(&self, run_end: SimTime, residual: u64) -> Result<KpiRecord, KpiError> {
        if self.arrived_total != self.delivered_total + self.dropped_total + residual {
            return Err(KpiError::Conservation {
                arrived: self.arrived_total,
                delivered: self.delivered_total,
                dropped: self.dropped_total,
                residual,
            });
        }
        if run_end <= self.warmup {
            return Err(KpiError::EmptyWindow {
                warmup: self.warmup,
                run_end,
            });
        }
        Ok(KpiRecord::from_counts(&self.window, run_end - self.warmup, residual))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ms(v: u64) -> SimTime {
        SimTime::from_millis(v)
    }

    fn deliver(k: &mut KpiAccumulator, id: u64, arr: SimTime, at: SimTime) {
        k.record_event(KpiEvent::Arrived { id, at: arr }).unwrap();
        k.record_event(KpiEvent::Delivered {
            id,
            arrival: arr,
            at,
            bits: 12_000,
        })
        .unwrap();
    }

    #[test]
    fn ten_msdus_in_twelve_ms() {
        let mut k = KpiAccumulator::new(SimTime::ZERO);
        for id in 0..10 {
            deliver(&mut k, id, ms(id), ms(id) + SimTime::from_micros(20));
        }
        let r = k.finalize(ms(12), 0).unwrap();
        assert!((r.throughput_mbps - 10.0).abs() < 1e-9);
        assert!((r.mean_delay_ms.unwrap() - 0.02).abs() < 1e-12);
    }

    #[test]
    fn empty_run() {
        let k = KpiAccumulator::new(SimTime::ZERO);
        let r = k.finalize(ms(10), 0).unwrap();
        assert_eq!(r.throughput_mbps, 0.0);
        assert_eq!(r.drop_rate, 0.0);
        assert_eq!(r.mean_delay_ms, None);
    }

    #[test]
    fn drop_ratio() {
        let mut k = KpiAccumulator::new(SimTime::ZERO);
        for id in 0..4 {
            deliver(&mut k, id, ms(1), ms(2));
        }
        k.record_event(KpiEvent::Arrived { id: 4, at: ms(1) }).unwrap();
        k.record_event(KpiEvent::Dropped {
            id: 4,
            arrival: ms(1),
            at: ms(60),
        })
        .unwrap();
        // A residual MSDU is not in the denominator.
        k.record_event(KpiEvent::Arrived { id: 5, at: ms(2) }).unwrap();
        let r = k.finalize(ms(100), 1).unwrap();
        assert!((r.drop_rate - 0.2).abs() < 1e-12);
        assert_eq!(r.residual, 1);
    }

    #[test]
    fn double_terminal_rejected() {
        let mut k = KpiAccumulator::new(SimTime::ZERO);
        deliver(&mut k, 0, ms(0), ms(1));
        let e = k.record_event(KpiEvent::Dropped {
            id: 0,
            arrival: ms(0),
            at: ms(2),
        });
        assert_eq!(e, Err(KpiError::DoubleTerminal(0)));
        assert_eq!(
            k.record_event(KpiEvent::Dropped {
                id: 9,
                arrival: ms(0),
                at: ms(2)
            }),
            Err(KpiError::UnknownMsdu(9))
        );
    }

    #[test]
    fn warmup_windowing() {
        let mut k = KpiAccumulator::new(SimTime::from_secs(1));
        deliver(&mut k, 0, ms(500), ms(501));
        deliver(&mut k, 1, ms(1500), ms(1501));
        let r = k.finalize(SimTime::from_secs(10), 0).unwrap();
        assert_eq!(r.delivered, 1);
        // 12,000 bits over a 9 s window.
        assert!((r.throughput_mbps - 12_000.0 / 9.0 / 1e6).abs() < 1e-12);
    }

    #[test]
    fn all_traffic_in_warmup() {
        let mut k = KpiAccumulator::new(SimTime::from_secs(1));
        deliver(&mut k, 0, ms(10), ms(11));
        let r = k.finalize(SimTime::from_secs(2), 0).unwrap();
        assert_eq!((r.arrived, r.delivered, r.throughput_mbps), (0, 0, 0.0));
        assert!(k.live() == 0 && k.arrived_total() == 1);
    }

    #[test]
    fn conservation_gate() {
        let mut k = KpiAccumulator::new(SimTime::ZERO);
        k.record_event(KpiEvent::Arrived { id: 0, at: ms(0) }).unwrap();
        assert!(matches!(k.finalize(ms(5), 0), Err(KpiError::Conservation { .. })));
        assert!(k.finalize(ms(5), 1).is_ok());
    }

    fn counts() -> impl Strategy<Value = KpiCounts> {
        (0u64..1000, 0u64..1000, 0u64..1000, 0u64..1_000_000, 0u64..10_000).prop_map(
            |(a, d, x, b, r)| KpiCounts {
                arrived: a,
                delivered: d,
                dropped: x,
                delivered_bits: b,
                delay_sum_ns: (b as u128) * 7,
                retransmissions: r,
                preamble_failures: r / 2,
                retrains: r / 3,
                beamtracking_updates: r / 5,
            },
        )
    }

    proptest! {
        #[test]
        fn merge_is_associative_and_commutative(a in counts(), b in counts(), c in counts()) {
            prop_assert_eq!(a.merge(&b).merge(&c), a.merge(&b.merge(&c)));
            prop_assert_eq!(a.merge(&b), b.merge(&a));
            prop_assert_eq!(a.merge(&KpiCounts::default()), a);
        }

        #[test]
        fn drop_rate_in_unit_interval(d in 0u64..1000, x in 0u64..1000) {
            let c = KpiCounts { delivered: d, dropped: x, ..KpiCounts::default() };
            let r = KpiRecord::from_counts(&c, SimTime::from_secs(1), 0);
            prop_assert!((0.0..=1.0).contains(&r.drop_rate));
        }
    }
}
