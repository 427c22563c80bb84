//! One simulation run: the event loop tying traffic, MAC, channel and the
//! beam-management scheme together.

use std::collections::VecDeque;

use thiserror::Error;

use crate::antenna::BeamPair;
use crate::channel::ChannelError;
use crate::kernel::{Kernel, RngStream, SimTime, StreamId};
use crate::kpi::{KpiAccumulator, KpiError, KpiEvent, KpiRecord};
use crate::mac::{
    build_ppdu, detect_beam_link_failure, handle_ack, Direction, LinkState, MacConfig, MacQueue,
    MediumAccess, Msdu, Ppdu, PpduOutcome, PpduResult, PreambleFailCounter,
};
use crate::phy::{preamble_sync_ok, McsTable, PhyConfig, PhyError};
use crate::schemes::{
    scheme_hooks, select_from_report, sense_location, PairSource, SchemeHooks, SchemeKind,
    SensingReport,
};
use crate::traffic::{ArrivalProcess, TrafficConfig};
use crate::world::World;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Phy(#[from] PhyError),
    #[error(transparent)]
    Kpi(#[from] KpiError),
    #[error("invariant violated at {at}: {what}")]
    Invariant { at: SimTime, what: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    MsduArrival,
    TxStart,
    TxEnd,
    AckTimeout,
    BeaconTick,
    RetrainDone,
    SensingTick,
    ReportReady,
    MobilityTick,
    SimEnd,
    SensingDone,
}

impl EventKind {
    fn code(self) -> u64 {
        self as u64 + 1
    }
}

/// Everything one run needs besides the world.
#[derive(Debug, Clone)]
pub struct SimParams {
    pub mac: MacConfig,
    pub phy: PhyConfig,
    pub mcs_table: McsTable,
    pub scheme: SchemeKind,
    pub traffic: TrafficConfig,
    pub duration: SimTime,
    pub warmup: SimTime,
    pub seed: u64,
    /// Period of position bookkeeping ticks; `None` disables them.
    pub mobility_tick: Option<SimTime>,
    /// Check MAC conservation and medium exclusivity after every event.
    pub check_invariants: bool,
}

/// Counters that are not KPIs but matter for analysis and tests.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunStats {
    pub events: u64,
    pub ppdus: u64,
    pub ppdu_airtime: SimTime,
    pub mpdus_sent: u64,
    pub mpdus_acked: u64,
    pub link_failures: u64,
    pub sensing_recoveries: u64,
    pub sls_airtime: SimTime,
    pub sensing_airtime: SimTime,
    /// Order-sensitive digest of the processed event sequence.
    pub trace_hash: u64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub record: KpiRecord,
    pub stats: RunStats,
}

/// Evaluates a launched PPDU against the true channel: preamble at launch
/// with the launch pair, then each MPDU at its airtime midpoint with the pair
/// `pair_at` yields for that instant. One uniform draw per MPDU, only when
/// the preamble is acquired.
pub fn transmit_ppdu<F>(
    ppdu: &Ppdu,
    world: &mut World,
    mac: &MacConfig,
    phy: &PhyConfig,
    table: &McsTable,
    rng: &mut RngStream,
    mut pair_at: F,
) -> Result<PpduResult, PhyError>
where
    F: FnMut(&mut World, SimTime) -> BeamPair,
{
    let ack_time = ppdu.end_time() + mac.sifs + mac.ack_duration;
    let preamble_snr_db = world.snr_at(ppdu.launch_time, ppdu.tx_pair);
    if !preamble_sync_ok(preamble_snr_db, phy) {
        return Ok(PpduResult {
            outcome: PpduOutcome::PreambleFail,
            mpdu_snr_db: Vec::new(),
            preamble_snr_db,
            ack_time,
        });
    }
    let mids = ppdu.mpdu_midpoints();
    let mut acked = Vec::with_capacity(mids.len());
    let mut snrs = Vec::with_capacity(mids.len());
    for (m, &t) in ppdu.mpdus.iter().zip(&mids) {
        let pair = pair_at(world, t);
        let snr = world.snr_at(t, pair);
        let p = table.mpdu_success_prob(snr, mac.mcs, m.size_bits)?;
        acked.push(rng.unit() < p);
        snrs.push(snr);
    }
    Ok(PpduResult {
        outcome: PpduOutcome::Received { acked },
        mpdu_snr_db: snrs,
        preamble_snr_db,
        ack_time,
    })
}

struct Report {
    report: SensingReport,
    pair: Option<Result<BeamPair, ChannelError>>,
}

struct InFlight {
    ppdu: Ppdu,
    result: Option<PpduResult>,
}

pub struct Simulation {
    kernel: Kernel<EventKind>,
    world: World,
    p: SimParams,
    hooks: SchemeHooks,
    phy_rate_mbps: f64,
    queues: [MacQueue; 2],
    arrivals: [ArrivalProcess; 2],
    next_id: u64,
    medium: MediumAccess,
    medium_free_at: SimTime,
    busy: bool,
    /// End of the last exchange put on the air, ACK or sweep included.
    occupied_until: SimTime,
    inflight: Option<InFlight>,
    link: LinkState,
    fails: PreambleFailCounter,
    retrain_running: bool,
    reports: VecDeque<Report>,
    sensing_rng: RngStream,
    channel_rng: RngStream,
    kpi: KpiAccumulator,
    stats: RunStats,
    wake_at: Option<SimTime>,
    start_at: Option<SimTime>,
    position_cache: Option<(SimTime, crate::geometry::Position)>,
    ended: bool,
}

fn dir_index(d: Direction) -> usize {
    d.index()
}

impl Simulation {
    pub fn new(world: World, params: SimParams) -> Result<Simulation, SimError> {
        let phy_rate_mbps = params.mcs_table.phy_rate_mbps(params.mac.mcs)?;
        let hooks = scheme_hooks(&params.scheme);
        let seed = params.seed;
        let arrivals = [
            ArrivalProcess::new(&params.traffic, RngStream::with_sub(seed, StreamId::Traffic, 0)),
            ArrivalProcess::new(&params.traffic, RngStream::with_sub(seed, StreamId::Traffic, 1)),
        ];
        let mut sim = Simulation {
            kernel: Kernel::new(),
            world,
            hooks,
            phy_rate_mbps,
            queues: [MacQueue::new(), MacQueue::new()],
            arrivals,
            next_id: 0,
            medium: MediumAccess::default(),
            medium_free_at: SimTime::ZERO,
            busy: false,
            occupied_until: SimTime::ZERO,
            inflight: None,
            link: LinkState::trained(BeamPair::new(0, 0), SimTime::ZERO),
            fails: PreambleFailCounter::default(),
            retrain_running: false,
            reports: VecDeque::new(),
            sensing_rng: RngStream::new(seed, StreamId::Sensing),
            channel_rng: RngStream::new(seed, StreamId::Channel),
            kpi: KpiAccumulator::new(params.warmup),
            stats: RunStats::default(),
            wake_at: None,
            start_at: None,
            position_cache: None,
            ended: false,
            p: params,
        };
        // Initial association: the link starts trained on the true best pair.
        match sim.world.best_pair_at(SimTime::ZERO) {
            Ok(pair) => sim.link = LinkState::trained(pair, SimTime::ZERO),
            Err(_) => {
                sim.link.link_ok = false;
                sim.link.pending_retrain = sim.hooks.beacon_retrain;
            }
        }
        Ok(sim)
    }

    fn schedule(&mut self, at: SimTime, kind: EventKind) {
        // Callers never schedule in the past.
        self.kernel
            .schedule(at, kind)
            .expect("event scheduled in the past");
    }

    pub fn run(mut self) -> Result<RunOutput, SimError> {
        if let SchemeKind::Isac(_) = self.p.scheme {
            self.schedule(SimTime::ZERO, EventKind::SensingTick);
        }
        self.schedule(self.p.mac.beacon_interval, EventKind::BeaconTick);
        if let Some(dt) = self.p.mobility_tick {
            if dt > SimTime::ZERO {
                self.schedule(dt, EventKind::MobilityTick);
            }
        }
        self.schedule(self.p.duration, EventKind::SimEnd);
        self.schedule_wake();

        let end = self.p.duration;
        let mut failure: Option<SimError> = None;
        while let Some(ev) = self.kernel.next_event(end) {
            let now = ev.fire_at;
            self.stats.events += 1;
            self.stats.trace_hash = fnv(fnv(self.stats.trace_hash, now.as_nanos()), ev.kind.code());
            if let Err(e) = self.handle(now, ev.kind) {
                failure = Some(e);
                break;
            }
            if self.p.check_invariants {
                if let Err(e) = self.check(now) {
                    failure = Some(e);
                    break;
                }
            }
            if self.ended {
                break;
            }
        }
        if let Some(e) = failure {
            return Err(e);
        }
        let residual = self.residual();
        let record = self.kpi.finalize(end, residual)?;
        Ok(RunOutput {
            record,
            stats: self.stats,
        })
    }

    fn residual(&self) -> u64 {
        let queued: usize = self.queues.iter().map(|q| q.len()).sum();
        let inflight = self.inflight.as_ref().map_or(0, |f| f.ppdu.mpdus.len());
        (queued + inflight) as u64
    }

    fn check(&self, now: SimTime) -> Result<(), SimError> {
        let live = self.kpi.live();
        let residual = self.residual();
        if live != residual {
            return Err(SimError::Invariant {
                at: now,
                what: format!("conservation: live {live} but queued + in flight {residual}"),
            });
        }
        if self.link.pending_retrain && self.link.link_ok {
            return Err(SimError::Invariant {
                at: now,
                what: "pending retrain on a healthy link".into(),
            });
        }
        Ok(())
    }

    fn handle(&mut self, now: SimTime, kind: EventKind) -> Result<(), SimError> {
        self.materialize(now)?;
        match kind {
            EventKind::MsduArrival => {
                if self.wake_at == Some(now) {
                    self.wake_at = None;
                }
                self.try_start(now)
            }
            EventKind::TxStart => {
                if self.start_at == Some(now) {
                    self.start_at = None;
                }
                self.try_start(now)
            }
            EventKind::TxEnd => self.on_tx_end(now),
            EventKind::AckTimeout => self.on_ack(now),
            EventKind::BeaconTick => {
                self.schedule(now + self.p.mac.beacon_interval, EventKind::BeaconTick);
                self.on_beacon(now)
            }
            EventKind::RetrainDone => self.on_retrain_done(now),
            EventKind::SensingTick => self.on_sensing(now),
            EventKind::SensingDone => {
                self.busy = false;
                self.medium_free_at = now + self.p.mac.difs;
                // A report that became ready during the burst may recover
                // the link now.
                self.on_report_ready(now)?;
                self.try_start(now)
            }
            EventKind::ReportReady => self.on_report_ready(now),
            EventKind::MobilityTick => {
                let pos = self.world.sta_at(now);
                self.position_cache = Some((now, pos));
                self.stats.trace_hash = fnv(fnv(self.stats.trace_hash, pos.x.to_bits()), pos.y.to_bits());
                if let Some(dt) = self.p.mobility_tick {
                    self.schedule(now + dt, EventKind::MobilityTick);
                }
                Ok(())
            }
            EventKind::SimEnd => {
                self.ended = true;
                Ok(())
            }
        }
    }

    /// Moves every arrival up to `now` into its queue, then applies the
    /// tolerance scan as of the newest enqueue.
    fn materialize(&mut self, now: SimTime) -> Result<(), SimError> {
        let bits = self.p.traffic.msdu_size_bits;
        for d in Direction::BOTH {
            let i = dir_index(d);
            let mut last = None;
            while self.arrivals[i].peek() <= now && self.arrivals[i].peek() < self.p.duration {
                let at = self.arrivals[i].pop();
                let id = self.next_id;
                self.next_id += 1;
                self.kpi.record_event(KpiEvent::Arrived { id, at })?;
                self.queues[i]
                    .enqueue(Msdu::new(id, bits, d, at))
                    .expect("fresh MSDU is queued");
                last = Some(at);
            }
            if let Some(at) = last {
                let dropped = self.queues[i].drop_expired(at, self.p.mac.max_queue_delay);
                for m in dropped {
                    self.kpi.record_event(KpiEvent::Dropped {
                        id: m.id,
                        arrival: m.arrival_time,
                        at,
                    })?;
                }
            }
        }
        Ok(())
    }

    fn next_arrival(&self) -> SimTime {
        self.arrivals[0].peek().min(self.arrivals[1].peek())
    }

    fn schedule_wake(&mut self) {
        let t = self.next_arrival();
        if t >= self.p.duration || self.wake_at.is_some_and(|w| w <= t) {
            return;
        }
        self.wake_at = Some(t);
        self.schedule(t, EventKind::MsduArrival);
    }

    fn can_launch(&self) -> bool {
        match self.hooks.pair_source {
            PairSource::Genie => true,
            _ => self.link.can_transmit(),
        }
    }

    fn try_start(&mut self, now: SimTime) -> Result<(), SimError> {
        if self.busy || !self.can_launch() {
            return Ok(());
        }
        if now < self.medium_free_at {
            if self.start_at != Some(self.medium_free_at) {
                self.start_at = Some(self.medium_free_at);
                self.schedule(self.medium_free_at, EventKind::TxStart);
            }
            return Ok(());
        }
        let dl = !self.queues[0].is_empty();
        let ul = !self.queues[1].is_empty();
        match self.medium.grant(dl, ul) {
            None => {
                self.schedule_wake();
                Ok(())
            }
            Some(d) => self.launch(now, d),
        }
    }

    fn launch_pair(&mut self, now: SimTime) -> BeamPair {
        match self.hooks.pair_source {
            PairSource::Tracked => self.link.current_pair,
            PairSource::Genie => self
                .world
                .best_pair_at(now)
                .unwrap_or(self.link.current_pair),
            PairSource::Sensed { .. } => self
                .report_pair(now)
                .and_then(|r| r.ok())
                .unwrap_or(self.link.current_pair),
        }
    }

    /// Claims the medium for `[now, until)`, checking nothing else is on air.
    fn occupy(&mut self, now: SimTime, until: SimTime) -> Result<(), SimError> {
        if self.p.check_invariants && now < self.occupied_until {
            return Err(SimError::Invariant {
                at: now,
                what: format!("medium still busy until {}", self.occupied_until),
            });
        }
        self.occupied_until = until;
        Ok(())
    }

    fn launch(&mut self, now: SimTime, d: Direction) -> Result<(), SimError> {
        if self.p.check_invariants && (self.link.pending_retrain || self.retrain_running) {
            return Err(SimError::Invariant {
                at: now,
                what: "PPDU launch while the link awaits retraining".into(),
            });
        }
        let pair = self.launch_pair(now);
        self.link.current_pair = pair;
        let ppdu = build_ppdu(
            &mut self.queues[dir_index(d)],
            d,
            &self.p.mac,
            self.phy_rate_mbps,
            self.hooks.trn_tail,
            now,
            pair,
        )
        .expect("granted direction has traffic");
        for m in &ppdu.mpdus {
            if m.retry_count > 0 {
                self.kpi.record_event(KpiEvent::Retransmission { at: now })?;
            }
        }
        self.occupy(now, ppdu.end_time() + self.p.mac.sifs + self.p.mac.ack_duration)?;
        self.stats.ppdus += 1;
        self.stats.ppdu_airtime += ppdu.airtime();
        self.stats.mpdus_sent += ppdu.mpdus.len() as u64;
        self.busy = true;
        self.schedule(ppdu.end_time(), EventKind::TxEnd);
        self.inflight = Some(InFlight { ppdu, result: None });
        Ok(())
    }

    fn on_tx_end(&mut self, now: SimTime) -> Result<(), SimError> {
        let mut fl = self.inflight.take().expect("TxEnd without a PPDU");
        let source = self.hooks.pair_source;
        let tx_pair = fl.ppdu.tx_pair;
        // Report pairs are looked up through a snapshot so the closure does
        // not need to borrow the simulation.
        let sensed: Vec<(SimTime, BeamPair)> = match source {
            PairSource::Sensed { intra_ppdu: true } => fl
                .ppdu
                .mpdu_midpoints()
                .into_iter()
                .map(|t| (t, self.report_pair(t).and_then(|r| r.ok()).unwrap_or(tx_pair)))
                .collect(),
            _ => Vec::new(),
        };
        let result = transmit_ppdu(
            &fl.ppdu,
            &mut self.world,
            &self.p.mac,
            &self.p.phy,
            &self.p.mcs_table,
            &mut self.channel_rng,
            |w, t| match source {
                PairSource::Genie => w.best_pair_at(t).unwrap_or(tx_pair),
                PairSource::Sensed { intra_ppdu: true } => sensed
                    .iter()
                    .find(|(mt, _)| *mt == t)
                    .map_or(tx_pair, |x| x.1),
                _ => tx_pair,
            },
        )?;
        if self.hooks.beamtracking && result.preamble_ok() {
            let next = self.world.link_at(now).best_near(self.link.current_pair, 1);
            if next != self.link.current_pair {
                self.link.current_pair = next;
                self.kpi.record_event(KpiEvent::TrackUpdate { at: now })?;
            }
        }
        self.schedule(result.ack_time, EventKind::AckTimeout);
        fl.result = Some(result);
        self.inflight = Some(fl);
        Ok(())
    }

    fn on_ack(&mut self, now: SimTime) -> Result<(), SimError> {
        let fl = self.inflight.take().expect("ACK without a PPDU");
        let result = fl.result.expect("outcome computed at PPDU end");
        let d = fl.ppdu.direction;
        self.stats.mpdus_acked += result.delivered_count() as u64;
        let report = handle_ack(fl.ppdu, &result, &mut self.queues[dir_index(d)], &self.p.mac);
        for m in report.delivered {
            self.kpi.record_event(KpiEvent::Delivered {
                id: m.id,
                arrival: m.arrival_time,
                at: m.delivery_time.expect("delivered MSDU has a time"),
                bits: m.size_bits,
            })?;
        }
        for m in report.dropped {
            self.kpi.record_event(KpiEvent::Dropped {
                id: m.id,
                arrival: m.arrival_time,
                at: now,
            })?;
        }
        let ok = result.preamble_ok();
        if !ok {
            self.kpi.record_event(KpiEvent::PreambleFail { at: now })?;
        }
        let count = self.fails.observe(ok);
        if self.hooks.beacon_retrain && detect_beam_link_failure(&mut self.link, count, &self.p.mac) {
            self.stats.link_failures += 1;
        }
        self.busy = false;
        self.medium_free_at = now + self.p.mac.difs;
        self.try_start(now)
    }

    fn on_beacon(&mut self, now: SimTime) -> Result<(), SimError> {
        if !self.link.pending_retrain || self.retrain_running || self.busy {
            return Ok(());
        }
        self.occupy(now, now + self.p.mac.sls_airtime)?;
        self.retrain_running = true;
        self.busy = true;
        self.stats.sls_airtime += self.p.mac.sls_airtime;
        self.schedule(now + self.p.mac.sls_airtime, EventKind::RetrainDone);
        Ok(())
    }

    fn on_retrain_done(&mut self, now: SimTime) -> Result<(), SimError> {
        self.retrain_running = false;
        self.busy = false;
        if let Ok(pair) = self.world.best_pair_at(now) {
            self.link = LinkState::trained(pair, now);
            self.fails.reset();
            self.kpi.record_event(KpiEvent::Retrain { at: now })?;
        }
        self.medium_free_at = now + self.p.mac.difs;
        self.try_start(now)
    }

    fn isac(&self) -> crate::schemes::IsacParams {
        match self.p.scheme {
            SchemeKind::Isac(p) => p,
            _ => unreachable!("sensing only runs for the sensing-assisted scheme"),
        }
    }

    fn on_sensing(&mut self, now: SimTime) -> Result<(), SimError> {
        let isac = self.isac();
        self.schedule(now + isac.sensing_period, EventKind::SensingTick);
        let r = isac.error_radius_m;
        // Two draws per entity on every tick keeps the stream aligned across
        // configurations; only moving entities are perturbed.
        let sta_true = self.world.sta_at(now);
        let sta = sense_location(sta_true, r, &mut self.sensing_rng);
        let ap_true = self.world.ap_at(now);
        let ap = sense_location(ap_true, r, &mut self.sensing_rng);
        let truth = self.world.blockers_at(now);
        let mut blockers = Vec::with_capacity(truth.len());
        for (i, &b) in truth.iter().enumerate() {
            let est = sense_location(b, r, &mut self.sensing_rng);
            blockers.push(if self.world.blocker_is_mobile(i) { est } else { b });
        }
        let report = SensingReport {
            generated_at: now,
            available_at: now + isac.sensing_latency,
            ap: if self.world.ap_is_mobile() { ap } else { ap_true },
            sta: if self.world.sta_is_mobile() { sta } else { sta_true },
            blockers,
        };
        let ready = report.available_at;
        self.reports.push_back(Report { report, pair: None });
        // Keep a second of history so PPDUs in flight still see the report
        // that was current at each MPDU midpoint.
        let horizon = now.saturating_sub(SimTime::from_secs(1));
        while self.reports.len() > 2 && self.reports[1].report.available_at <= horizon {
            self.reports.pop_front();
        }
        if isac.sensing_recovery {
            self.schedule(ready, EventKind::ReportReady);
        }
        let air = isac.sensing_airtime;
        if air > SimTime::ZERO && !self.busy {
            self.occupy(now, now + air)?;
            self.busy = true;
            self.stats.sensing_airtime += air;
            self.schedule(now + air, EventKind::SensingDone);
        }
        Ok(())
    }

    fn on_report_ready(&mut self, now: SimTime) -> Result<(), SimError> {
        if !self.link.pending_retrain || self.retrain_running || self.busy {
            return Ok(());
        }
        if let Some(Ok(pair)) = self.report_pair(now) {
            self.link = LinkState::trained(pair, now);
            self.fails.reset();
            self.stats.sensing_recoveries += 1;
            self.try_start(now)?;
        }
        Ok(())
    }

    /// Pair from the newest report available at `t`, computed once per report.
    fn report_pair(&mut self, t: SimTime) -> Option<Result<BeamPair, ChannelError>> {
        let idx = self.reports.partition_point(|r| r.report.available_at <= t);
        if idx == 0 {
            return None;
        }
        let i = idx - 1;
        if self.reports[i].pair.is_none() {
            let pair = select_from_report(
                self.world.map(),
                &self.reports[i].report,
                &self.world.ap_antenna,
                &self.world.sta_antenna,
            );
            self.reports[i].pair = Some(pair);
        }
        self.reports[i].pair.clone()
    }
}

/// FNV-1a over the eight bytes of `v`.
fn fnv(h: u64, v: u64) -> u64 {
    let mut h = if h == 0 { 0xcbf2_9ce4_8422_2325 } else { h };
    for b in v.to_le_bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}
