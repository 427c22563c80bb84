//! Deterministic discrete-event engine.
//!
//! The kernel owns a virtual clock in integer nanoseconds and a queue of
//! pending events ordered by `(fire_at, seq)`. Equal-time events run in
//! insertion order, which gives every run a total order and therefore a
//! reproducible trace. Random numbers come from named [`RngStream`]s so that
//! the draws of one concern (say, sensing errors) never shift the draws of
//! another (traffic arrivals).

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};
use std::fmt;
use std::ops::{Add, AddAssign, Sub};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("cannot schedule at {at} ns, clock is already at {now} ns")]
    SchedulingInPast { at: u64, now: u64 },
    #[error("invalid range [{lo}, {hi})")]
    InvalidRange { lo: f64, hi: f64 },
}

/// Virtual time in nanoseconds.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct SimTime(u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);
    pub const MAX: SimTime = SimTime(u64::MAX);

    pub const fn from_nanos(ns: u64) -> Self {
        SimTime(ns)
    }

    pub const fn from_micros(us: u64) -> Self {
        SimTime(us * 1_000)
    }

    pub const fn from_millis(ms: u64) -> Self {
        SimTime(ms * 1_000_000)
    }

    pub const fn from_secs(s: u64) -> Self {
        SimTime(s * 1_000_000_000)
    }

    /// Rounds to the nearest nanosecond. Negative and NaN inputs map to zero.
    pub fn from_secs_f64(s: f64) -> Self {
        if s.is_nan() || s <= 0.0 {
            return SimTime::ZERO;
        }
        SimTime((s * 1e9).round() as u64)
    }

    pub fn from_millis_f64(ms: f64) -> Self {
        Self::from_secs_f64(ms * 1e-3)
    }

    pub fn from_micros_f64(us: f64) -> Self {
        Self::from_secs_f64(us * 1e-6)
    }

    pub const fn as_nanos(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 * 1e-9
    }

    pub fn as_millis_f64(self) -> f64 {
        self.0 as f64 * 1e-6
    }

    pub fn as_micros_f64(self) -> f64 {
        self.0 as f64 * 1e-3
    }

    pub fn saturating_sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(rhs.0))
    }

    pub fn checked_sub(self, rhs: SimTime) -> Option<SimTime> {
        self.0.checked_sub(rhs.0).map(SimTime)
    }

    pub fn mul(self, k: u64) -> SimTime {
        SimTime(self.0 * k)
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl AddAssign for SimTime {
    fn add_assign(&mut self, rhs: SimTime) {
        self.0 += rhs.0;
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 - rhs.0)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}ns", self.0)
    }
}

/// Returned by [`Kernel::schedule`]; pass it to [`Kernel::cancel`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EventHandle(u64);

#[derive(Debug, Clone, PartialEq)]
pub struct Event<K> {
    pub fire_at: SimTime,
    pub seq: u64,
    pub kind: K,
}

struct Entry<K>(Event<K>);

impl<K> PartialEq for Entry<K> {
    fn eq(&self, other: &Self) -> bool {
        self.0.fire_at == other.0.fire_at && self.0.seq == other.0.seq
    }
}

impl<K> Eq for Entry<K> {}

impl<K> PartialOrd for Entry<K> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<K> Ord for Entry<K> {
    // BinaryHeap is a max-heap; invert so the earliest (fire_at, seq) pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        (other.0.fire_at, other.0.seq).cmp(&(self.0.fire_at, self.0.seq))
    }
}

/// Virtual clock plus pending-event queue.
pub struct Kernel<K> {
    clock: SimTime,
    next_seq: u64,
    queue: BinaryHeap<Entry<K>>,
    cancelled: HashSet<u64>,
    processed: u64,
}

impl<K> Default for Kernel<K> {
    fn default() -> Self {
        Self::new()
    }
}

impl<K> Kernel<K> {
    pub fn new() -> Self {
        Kernel {
            clock: SimTime::ZERO,
            next_seq: 0,
            queue: BinaryHeap::new(),
            cancelled: HashSet::new(),
            processed: 0,
        }
    }

    pub fn now(&self) -> SimTime {
        self.clock
    }

    /// Number of events executed so far.
    pub fn processed(&self) -> u64 {
        self.processed
    }

    pub fn pending(&self) -> usize {
        self.queue.len() - self.cancelled.len()
    }

    pub fn schedule(&mut self, fire_at: SimTime, kind: K) -> Result<EventHandle, KernelError> {
        if fire_at < self.clock {
            return Err(KernelError::SchedulingInPast {
                at: fire_at.as_nanos(),
                now: self.clock.as_nanos(),
            });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Entry(Event { fire_at, seq, kind }));
        Ok(EventHandle(seq))
    }

    pub fn schedule_in(&mut self, delay: SimTime, kind: K) -> EventHandle {
        let at = self.clock + delay;
        self.schedule(at, kind)
            .expect("a non-negative delay never lands in the past")
    }

    /// Returns false if the handle already fired or was already cancelled.
    pub fn cancel(&mut self, handle: EventHandle) -> bool {
        if handle.0 >= self.next_seq {
            return false;
        }
        let live = self.queue.iter().any(|e| e.0.seq == handle.0);
        live && self.cancelled.insert(handle.0)
    }

    /// Pops the next live event with `fire_at <= t_end` and advances the clock
    /// to it. When nothing is left in range the clock moves to `t_end`.
    pub fn next_event(&mut self, t_end: SimTime) -> Option<Event<K>> {
        while let Some(top) = self.queue.peek() {
            if top.0.fire_at > t_end {
                break;
            }
            let Entry(ev) = self.queue.pop().expect("peeked");
            if self.cancelled.remove(&ev.seq) {
                continue;
            }
            self.clock = ev.fire_at;
            self.processed += 1;
            return Some(ev);
        }
        if t_end > self.clock {
            self.clock = t_end;
        }
        None
    }

    /// Runs `handler` on every event up to and including `t_end` and returns
    /// how many fired. The handler may schedule further events.
    pub fn run_until<F>(&mut self, t_end: SimTime, mut handler: F) -> u64
    where
        F: FnMut(&mut Self, Event<K>),
    {
        let mut count = 0;
        while let Some(ev) = self.next_event(t_end) {
            handler(self, ev);
            count += 1;
        }
        count
    }
}

/// Named random streams. Each label maps to an independent ChaCha stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StreamId {
    Traffic,
    Mobility,
    Channel,
    Sensing,
}

impl StreamId {
    fn code(self) -> u64 {
        match self {
            StreamId::Traffic => 1,
            StreamId::Mobility => 2,
            StreamId::Channel => 3,
            StreamId::Sensing => 4,
        }
    }
}

/// A reproducible random stream keyed by `(master_seed, stream_id, sub)`.
///
/// `sub` separates entities sharing a label, e.g. the trajectory of each
/// moving blocker draws from its own mobility sub-stream.
#[derive(Debug, Clone)]
pub struct RngStream {
    id: StreamId,
    sub: u32,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(master_seed: u64, id: StreamId) -> Self {
        Self::with_sub(master_seed, id, 0)
    }

    pub fn with_sub(master_seed: u64, id: StreamId, sub: u32) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream((id.code() << 32) | sub as u64);
        RngStream { id, sub, rng }
    }

    pub fn id(&self) -> StreamId {
        self.id
    }

    pub fn sub(&self) -> u32 {
        self.sub
    }

    /// Uniform draw in `[lo, hi)`; `lo == hi` yields `lo` without consuming state.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> Result<f64, KernelError> {
        if !(lo.is_finite() && hi.is_finite()) || lo > hi {
            return Err(KernelError::InvalidRange { lo, hi });
        }
        if lo == hi {
            return Ok(lo);
        }
        Ok(self.rng.random_range(lo..hi))
    }

    /// Uniform draw in `[0, 1)`.
    pub fn unit(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Exponential draw with the given mean.
    pub fn exponential(&mut self, mean: f64) -> f64 {
        // 1 - u lies in (0, 1], so the log is finite.
        -mean * (1.0 - self.unit()).ln()
    }
}
