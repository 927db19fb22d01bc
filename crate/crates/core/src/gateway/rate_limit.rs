use std::sync::Mutex;
use std::time::{Duration, Instant};

/// Spaces request issue times at least `1 / rps` apart across all callers.
///
/// Each caller reserves the next free slot under the lock and then sleeps
/// outside it, so concurrent callers queue in reservation order.
#[derive(Debug)]
pub struct RateLimiter {
    interval: Duration,
    next_slot: Mutex<Option<Instant>>,
}

impl RateLimiter {
    pub fn new(requests_per_second: f64) -> Self {
        assert!(requests_per_second > 0.0, "rate limit must be positive");
        RateLimiter {
            interval: Duration::from_secs_f64(1.0 / requests_per_second),
            next_slot: Mutex::new(None),
        }
    }

    /// Blocks until the caller may issue one request; returns the issue instant.
    pub fn acquire(&self) -> Instant {
        let slot = {
            let mut next = self.next_slot.lock().expect("rate limiter poisoned");
            let now = Instant::now();
            let slot = match *next {
                Some(t) if t > now => t,
                _ => now,
            };
            *next = Some(slot + self.interval);
            slot
        };
        let now = Instant::now();
        if slot > now {
            std::thread::sleep(slot - now);
        }
        slot
    }
}
