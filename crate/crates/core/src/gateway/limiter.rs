use std::collections::VecDeque;
use std::sync::Mutex;
use std::time::Duration;

use super::Clock;

const WINDOW: Duration = Duration::from_secs(60);

/// Sliding-window limiter: at most `per_minute` dispatches in any 60 s span.
#[derive(Debug)]
pub struct RateLimiter {
    per_minute: usize,
    sent: Mutex<VecDeque<Duration>>,
}

impl RateLimiter {
    pub fn new(per_minute: u32) -> Self {
        Self {
            per_minute: per_minute.max(1) as usize,
            sent: Mutex::new(VecDeque::new()),
        }
    }

    /// Blocks (through `clock`) until a slot is free; returns the dispatch time.
    pub fn acquire(&self, clock: &dyn Clock) -> Duration {
        loop {
            let wait = {
                let mut sent = self.sent.lock().unwrap();
                let now = clock.now();
                while sent.front().is_some_and(|&t| now >= t + WINDOW) {
                    sent.pop_front();
                }
                if sent.len() < self.per_minute {
                    sent.push_back(now);
                    return now;
                }
                sent[0] + WINDOW - now
            };
            clock.sleep(wait);
        }
    }
}
