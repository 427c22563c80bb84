//! MAC data path: MSDU queues, A-MPDU construction, block-ack handling,
//! beam-link-failure detection and the round-robin medium grant.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::antenna::BeamPair;
use crate::kernel::SimTime;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MacError {
    #[error("no MSDU queued")]
    EmptyQueue,
    #[error("MSDU {0} is not in the queued state")]
    NotQueued(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Direction {
    Downlink,
    Uplink,
}

impl Direction {
    pub const BOTH: [Direction; 2] = [Direction::Downlink, Direction::Uplink];

    pub fn index(self) -> usize {
        match self {
            Direction::Downlink => 0,
            Direction::Uplink => 1,
        }
    }

    pub fn other(self) -> Direction {
        match self {
            Direction::Downlink => Direction::Uplink,
            Direction::Uplink => Direction::Downlink,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MsduState {
    Queued,
    InFlight,
    Delivered,
    Dropped,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Msdu {
    pub id: u64,
    pub size_bits: u64,
    pub direction: Direction,
    /// Time the MSDU entered the MAC queue.
    pub arrival_time: SimTime,
    pub delivery_time: Option<SimTime>,
    pub retry_count: u32,
    pub state: MsduState,
}

impl Msdu {
    pub fn new(id: u64, size_bits: u64, direction: Direction, arrival_time: SimTime) -> Self {
        Msdu {
            id,
            size_bits,
            direction,
            arrival_time,
            delivery_time: None,
            retry_count: 0,
            state: MsduState::Queued,
        }
    }
}

/// MAC timing and policy knobs. Durations are virtual time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacConfig {
    pub aggregation_size: usize,
    pub max_retries: u32,
    pub max_queue_delay: SimTime,
    pub sifs: SimTime,
    pub difs: SimTime,
    pub ack_duration: SimTime,
    pub preamble_duration: SimTime,
    pub beacon_interval: SimTime,
    pub sls_airtime: SimTime,
    pub trn_unit_duration: SimTime,
    pub failure_threshold: u32,
    pub mcs: u8,
    pub msdu_size_bits: u64,
}

impl Default for MacConfig {
    fn default() -> Self {
        MacConfig {
            aggregation_size: 1,
            max_retries: 7,
            max_queue_delay: SimTime::from_millis(50),
            sifs: SimTime::from_micros(3),
            difs: SimTime::from_micros(13),
            ack_duration: SimTime::from_micros(5),
            preamble_duration: SimTime::from_micros(3),
            beacon_interval: SimTime::from_micros(102_400),
            sls_airtime: SimTime::from_micros(1_000),
            trn_unit_duration: SimTime::from_micros(10),
            failure_threshold: 3,
            mcs: 14,
            msdu_size_bits: 12_000,
        }
    }
}

/// FIFO MSDU queue for one direction. Retransmissions go back to the head,
/// so the queue stays ordered by arrival time.
#[derive(Debug, Clone, Default)]
pub struct MacQueue {
    items: VecDeque<Msdu>,
}

impl MacQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn enqueue(&mut self, msdu: Msdu) -> Result<(), MacError> {
        if msdu.state != MsduState::Queued {
            return Err(MacError::NotQueued(msdu.id));
        }
        self.items.push_back(msdu);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn head(&self) -> Option<&Msdu> {
        self.items.front()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Msdu> {
        self.items.iter()
    }

    pub fn pop_front(&mut self) -> Option<Msdu> {
        self.items.pop_front()
    }

    /// Puts retried MSDUs back in front, preserving their relative order.
    pub fn requeue_front(&mut self, msdus: Vec<Msdu>) {
        for m in msdus.into_iter().rev() {
            self.items.push_front(m);
        }
    }

    /// Removes every MSDU that has waited longer than `max_delay`.
    pub fn drop_expired(&mut self, now: SimTime, max_delay: SimTime) -> Vec<Msdu> {
        let mut out = Vec::new();
        while let Some(h) = self.items.front() {
            if now.saturating_sub(h.arrival_time) <= max_delay {
                break;
            }
            let mut m = self.items.pop_front().expect("front exists");
            m.state = MsduState::Dropped;
            out.push(m);
        }
        out
    }
}

/// An aggregated data PPDU.
#[derive(Debug, Clone, PartialEq)]
pub struct Ppdu {
    pub direction: Direction,
    pub mpdus: Vec<Msdu>,
    pub preamble_duration: SimTime,
    pub payload_duration: SimTime,
    pub trn_tail_duration: SimTime,
    /// Pair in downlink orientation (`tx` = AP sector) at launch.
    pub tx_pair: BeamPair,
    pub launch_time: SimTime,
    phy_rate_mbps: f64,
}

impl Ppdu {
    pub fn airtime(&self) -> SimTime {
        self.preamble_duration + self.payload_duration + self.trn_tail_duration
    }

    pub fn end_time(&self) -> SimTime {
        self.launch_time + self.airtime()
    }

    /// Middle of each MPDU's slice of the payload field.
    pub fn mpdu_midpoints(&self) -> Vec<SimTime> {
        let start = self.launch_time + self.preamble_duration;
        let mut before = 0u64;
        self.mpdus
            .iter()
            .map(|m| {
                let mid_bits = before as f64 + m.size_bits as f64 / 2.0;
                before += m.size_bits;
                start + SimTime::from_nanos((mid_bits * 1e3 / self.phy_rate_mbps).round() as u64)
            })
            .collect()
    }

    pub fn phy_rate_mbps(&self) -> f64 {
        self.phy_rate_mbps
    }
}

/// Airtime of `bits` at `rate_mbps`, rounded up to the nanosecond.
pub fn payload_duration(bits: u64, rate_mbps: f64) -> SimTime {
    SimTime::from_nanos((bits as f64 * 1e3 / rate_mbps).ceil() as u64)
}

/// Takes up to `aggregation_size` head-of-line MSDUs into one PPDU.
pub fn build_ppdu(
    queue: &mut MacQueue,
    direction: Direction,
    config: &MacConfig,
    phy_rate_mbps: f64,
    beamtracking_on: bool,
    launch_time: SimTime,
    tx_pair: BeamPair,
) -> Result<Ppdu, MacError> {
    if queue.is_empty() {
        return Err(MacError::EmptyQueue);
    }
    let n = config.aggregation_size.max(1).min(queue.len());
    let mut mpdus = Vec::with_capacity(n);
    for _ in 0..n {
        let mut m = queue.pop_front().expect("length checked");
        m.state = MsduState::InFlight;
        mpdus.push(m);
    }
    let bits: u64 = mpdus.iter().map(|m| m.size_bits).sum();
    Ok(Ppdu {
        direction,
        mpdus,
        preamble_duration: config.preamble_duration,
        payload_duration: payload_duration(bits, phy_rate_mbps),
        trn_tail_duration: if beamtracking_on {
            config.trn_unit_duration
        } else {
            SimTime::ZERO
        },
        tx_pair,
        launch_time,
        phy_rate_mbps,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum PpduOutcome {
    /// The receiver never synchronised; nothing is acknowledged.
    PreambleFail,
    /// Block-ack bitmap, one entry per MPDU.
    Received { acked: Vec<bool> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PpduResult {
    pub outcome: PpduOutcome,
    /// Per-MPDU SNR at the MPDU midpoint (empty on preamble failure).
    pub mpdu_snr_db: Vec<f64>,
    pub preamble_snr_db: f64,
    /// End of the acknowledgement window: PPDU end + SIFS + ACK.
    pub ack_time: SimTime,
}

impl PpduResult {
    pub fn preamble_ok(&self) -> bool {
        !matches!(self.outcome, PpduOutcome::PreambleFail)
    }

    pub fn acked(&self, i: usize) -> bool {
        match &self.outcome {
            PpduOutcome::PreambleFail => false,
            PpduOutcome::Received { acked } => acked[i],
        }
    }

    pub fn delivered_count(&self) -> usize {
        match &self.outcome {
            PpduOutcome::PreambleFail => 0,
            PpduOutcome::Received { acked } => acked.iter().filter(|&&a| a).count(),
        }
    }
}

/// What an acknowledgement did to the MSDUs involved.
#[derive(Debug, Default)]
pub struct AckReport {
    pub delivered: Vec<Msdu>,
    pub dropped: Vec<Msdu>,
    pub retried: usize,
}

/// Settles an in-flight PPDU: acked MSDUs are delivered, the rest retried
/// at the head of the queue or dropped past `max_retries`. Finally, queued
/// MSDUs older than `max_queue_delay` are dropped.
pub fn handle_ack(ppdu: Ppdu, result: &PpduResult, queue: &mut MacQueue, config: &MacConfig) -> AckReport {
    let mut report = AckReport::default();
    let mut retry = Vec::new();
    for (i, mut m) in ppdu.mpdus.into_iter().enumerate() {
        if result.acked(i) {
            m.state = MsduState::Delivered;
            m.delivery_time = Some(result.ack_time);
            report.delivered.push(m);
        } else {
            m.retry_count += 1;
            if m.retry_count > config.max_retries {
                m.state = MsduState::Dropped;
                report.dropped.push(m);
            } else {
                m.state = MsduState::Queued;
                report.retried += 1;
                retry.push(m);
            }
        }
    }
    queue.requeue_front(retry);
    report
        .dropped
        .extend(queue.drop_expired(result.ack_time, config.max_queue_delay));
    report
}

/// Beam-link state shared by both directions; the pair is stored in
/// downlink orientation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkState {
    pub current_pair: BeamPair,
    pub link_ok: bool,
    pub last_train_time: SimTime,
    pub pending_retrain: bool,
}

impl LinkState {
    pub fn trained(pair: BeamPair, at: SimTime) -> Self {
        LinkState {
            current_pair: pair,
            link_ok: true,
            last_train_time: at,
            pending_retrain: false,
        }
    }

    pub fn can_transmit(&self) -> bool {
        self.link_ok && !self.pending_retrain
    }
}

/// Declares beam link failure once `consecutive_preamble_fails` reaches the
/// threshold; the link then waits for a beacon-time retrain.
pub fn detect_beam_link_failure(link: &mut LinkState, consecutive_preamble_fails: u32, config: &MacConfig) -> bool {
    if consecutive_preamble_fails >= config.failure_threshold && link.link_ok {
        link.link_ok = false;
        link.pending_retrain = true;
        true
    } else {
        false
    }
}

/// Counts preamble failures in a row across both directions.
#[derive(Debug, Clone, Copy, Default)]
pub struct PreambleFailCounter {
    count: u32,
}

impl PreambleFailCounter {
    pub fn observe(&mut self, preamble_ok: bool) -> u32 {
        if preamble_ok {
            self.count = 0;
        } else {
            self.count += 1;
        }
        self.count
    }

    pub fn reset(&mut self) {
        self.count = 0;
    }

    pub fn count(&self) -> u32 {
        self.count
    }
}

/// Round-robin grant over the two directions of a single link.
#[derive(Debug, Clone, Copy)]
pub struct MediumAccess {
    next: Direction,
}

impl Default for MediumAccess {
    fn default() -> Self {
        MediumAccess {
            next: Direction::Downlink,
        }
    }
}

impl MediumAccess {
    /// Picks the preferred direction if it has traffic, else the other one.
    /// The direction after a grant prefers the opposite queue.
    pub fn grant(&mut self, dl_backlogged: bool, ul_backlogged: bool) -> Option<Direction> {
        let backlogged = |d: Direction| match d {
            Direction::Downlink => dl_backlogged,
            Direction::Uplink => ul_backlogged,
        };
        let pick = if backlogged(self.next) {
            self.next
        } else if backlogged(self.next.other()) {
            self.next.other()
        } else {
            return None;
        };
        self.next = pick.other();
        Some(pick)
    }
}
