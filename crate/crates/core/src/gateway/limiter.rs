use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

/// Exponential backoff: `min(base * 2^k, max)` before retry `k + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Backoff {
    base: Duration,
    max: Duration,
}

impl Backoff {
    pub fn new(base: Duration, max: Duration) -> Self {
        Self {
            base,
            max: max.max(base),
        }
    }

    pub fn delay(&self, retry: u32) -> Duration {
        let factor = 1u32.checked_shl(retry.min(31)).unwrap_or(u32::MAX);
        self.base.saturating_mul(factor).min(self.max)
    }
}

struct State {
    in_flight: usize,
    next_start: Instant,
}

/// Counting semaphore with optional pacing between request starts.
pub struct InFlightLimiter {
    limit: usize,
    interval: Duration,
    state: Mutex<State>,
    freed: Condvar,
}

/// Releases its slot on drop.
pub struct Permit<'a> {
    limiter: &'a InFlightLimiter,
}

impl InFlightLimiter {
    pub fn new(limit: usize, interval: Duration) -> Self {
        Self {
            limit: limit.max(1),
            interval,
            state: Mutex::new(State {
                in_flight: 0,
                next_start: Instant::now(),
            }),
            freed: Condvar::new(),
        }
    }

    pub fn limit(&self) -> usize {
        self.limit
    }

    pub fn in_flight(&self) -> usize {
        self.state.lock().unwrap_or_else(|e| e.into_inner()).in_flight
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut state = self.state.lock().unwrap_or_else(|e| e.into_inner());
        while state.in_flight >= self.limit {
            state = self.freed.wait(state).unwrap_or_else(|e| e.into_inner());
        }
        state.in_flight += 1;
        // Reserve a start slot, then sleep outside the lock.
        let now = Instant::now();
        let start = state.next_start.max(now);
        state.next_start = start + self.interval;
        drop(state);
        if start > now {
            std::thread::sleep(start - now);
        }
        Permit { limiter: self }
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut state = self.limiter.state.lock().unwrap_or_else(|e| e.into_inner());
        state.in_flight -= 1;
        drop(state);
        self.limiter.freed.notify_one();
    }
}
