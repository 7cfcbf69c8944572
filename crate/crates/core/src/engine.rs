//! Discrete-event core: simulation clock, the time-ordered event queue and
//! the seeded random stream.
//!
//! Events are totally ordered by `(fire_time, seq)`. `seq` is assigned by the
//! queue at scheduling time, starting at 1 and increasing by one per call, so
//! two events scheduled for the same instant fire in the order they were
//! scheduled.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;
use std::ops::Add;

use thiserror::Error;

use crate::node::NodeId;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("cannot schedule at t={at} s: clock is already at t={clock} s")]
    PastTime { at: SimTime, clock: SimTime },
    #[error("invalid simulation time {0}")]
    InvalidTime(f64),
}

/// Simulation time in seconds. Always finite and non-negative.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SimTime(f64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0.0);

    pub fn try_from_secs(secs: f64) -> Result<Self, EngineError> {
        if secs.is_finite() && secs >= 0.0 {
            // normalise -0.0 so that equal instants compare and print the same
            Ok(SimTime(secs + 0.0))
        } else {
            Err(EngineError::InvalidTime(secs))
        }
    }

    /// Panics on a negative or non-finite value.
    pub fn from_secs(secs: f64) -> Self {
        Self::try_from_secs(secs).expect("simulation time must be finite and non-negative")
    }

    pub fn as_secs(self) -> f64 {
        self.0
    }
}

impl Eq for SimTime {}

impl Ord for SimTime {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl PartialOrd for SimTime {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Add<f64> for SimTime {
    type Output = SimTime;

    fn add(self, rhs: f64) -> SimTime {
        SimTime::from_secs(self.0 + rhs)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(&self.0, f)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event<P> {
    pub fire_time: SimTime,
    pub seq: u64,
    pub target: NodeId,
    pub payload: P,
}

// Min-heap adapter over (fire_time, seq).
struct Pending<P>(Event<P>);

impl<P> PartialEq for Pending<P> {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}

impl<P> Eq for Pending<P> {}

impl<P> Pending<P> {
    fn key(&self) -> (SimTime, u64) {
        (self.0.fire_time, self.0.seq)
    }
}

impl<P> PartialOrd for Pending<P> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<P> Ord for Pending<P> {
    fn cmp(&self, other: &Self) -> Ordering {
        other.key().cmp(&self.key())
    }
}

/// Pending events plus the simulation clock.
pub struct EventQueue<P> {
    heap: BinaryHeap<Pending<P>>,
    clock: SimTime,
    last_seq: u64,
}

impl<P> Default for EventQueue<P> {
    fn default() -> Self {
        Self::new()
    }
}

impl<P> EventQueue<P> {
    pub fn new() -> Self {
        EventQueue {
            heap: BinaryHeap::new(),
            clock: SimTime::ZERO,
            last_seq: 0,
        }
    }

    pub fn now(&self) -> SimTime {
        self.clock
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    /// Highest sequence number handed out so far (0 before the first schedule).
    pub fn last_seq(&self) -> u64 {
        self.last_seq
    }

    pub fn peek_time(&self) -> Option<SimTime> {
        self.heap.peek().map(|p| p.0.fire_time)
    }

    /// Schedules `payload` for `target` at `fire_time` and returns its sequence number.
    pub fn schedule(
        &mut self,
        fire_time: SimTime,
        target: NodeId,
        payload: P,
    ) -> Result<u64, EngineError> {
        if fire_time < self.clock {
            return Err(EngineError::PastTime {
                at: fire_time,
                clock: self.clock,
            });
        }
        self.last_seq += 1;
        let seq = self.last_seq;
        self.heap.push(Pending(Event {
            fire_time,
            seq,
            target,
            payload,
        }));
        Ok(seq)
    }

    /// Schedules relative to the current clock. `delay` must be non-negative.
    pub fn schedule_in(&mut self, delay: f64, target: NodeId, payload: P) -> Result<u64, EngineError> {
        let at = SimTime::try_from_secs(self.clock.as_secs() + delay)?;
        self.schedule(at, target, payload)
    }

    /// Removes the next event if it fires no later than `t_end`, advancing the
    /// clock to its fire time.
    pub fn pop_until(&mut self, t_end: SimTime) -> Option<Event<P>> {
        if self.peek_time()? > t_end {
            return None;
        }
        let event = self.heap.pop()?.0;
        self.clock = event.fire_time;
        Some(event)
    }

    /// Moves the clock forward to `t` once no events remain at or before it.
    pub fn advance_to(&mut self, t: SimTime) {
        if t > self.clock {
            self.clock = t;
        }
    }

    /// Dispatches every event with `fire_time <= t_end`, including events the
    /// handler schedules along the way, then leaves the clock at `t_end`.
    /// Returns the number of events processed.
    pub fn run_until<F>(&mut self, t_end: SimTime, mut dispatch: F) -> Result<usize, EngineError>
    where
        F: FnMut(&mut Self, Event<P>),
    {
        if t_end < self.clock {
            return Err(EngineError::PastTime {
                at: t_end,
                clock: self.clock,
            });
        }
        let mut processed = 0;
        while let Some(event) = self.pop_until(t_end) {
            dispatch(self, event);
            processed += 1;
        }
        self.advance_to(t_end);
        Ok(processed)
    }
}

/// Seeded SplitMix64 stream.
///
/// Each draw advances `state` by the golden-ratio increment
/// `0x9E3779B97F4A7C15` (wrapping) and mixes it:
///
/// ```text
/// z = state
/// z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
/// z = (z ^ (z >> 27)) * 0x94D049BB133111EB
/// z =  z ^ (z >> 31)
/// ```
///
/// with wrapping 64-bit multiplication. A unit draw is `(z >> 11) * 2^-53`,
/// which lies in `[0, 1)`. The initial state is the seed itself.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RngStream {
    seed: u64,
    state: u64,
    draws: u64,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        RngStream {
            seed,
            state: seed,
            draws: 0,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn draws(&self) -> u64 {
        self.draws
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        self.draws += 1;
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform draw in `[0, 1)`.
    pub fn draw(&mut self) -> f64 {
        const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
        (self.next_u64() >> 11) as f64 * SCALE
    }

    /// Uniform draw in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.draw()
    }

    /// Uniform integer in `0..n`. `n` must be non-zero.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "empty range");
        // multiply-shift keeps this a single draw per call
        ((self.next_u64() as u128 * n as u128) >> 64) as u64
    }
}
