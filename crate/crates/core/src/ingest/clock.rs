use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Mutex;

use chrono::{DateTime, Duration, Utc};

/// Time source for the pipeline and scheduler.
pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
    /// Blocks until `t` (or returns at once if `t` is past).
    fn sleep_until(&self, t: DateTime<Utc>);

    /// Like `sleep_until`, but returns early once `stop` is set. Returns
    /// whether `t` was reached.
    fn sleep_until_or_stop(&self, t: DateTime<Utc>, stop: &AtomicBool) -> bool {
        loop {
            if stop.load(Ordering::Relaxed) {
                return false;
            }
            let now = self.now();
            if now >= t {
                return true;
            }
            self.sleep_until(t.min(now + Duration::milliseconds(250)));
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }

    fn sleep_until(&self, t: DateTime<Utc>) {
        if let Ok(d) = (t - Utc::now()).to_std() {
            std::thread::sleep(d);
        }
    }
}

/// Simulated time. Sleeping jumps the clock forward instead of waiting.
#[derive(Debug)]
pub struct ManualClock {
    now: Mutex<DateTime<Utc>>,
}

impl ManualClock {
    pub fn new(start: DateTime<Utc>) -> Self {
        ManualClock { now: Mutex::new(start) }
    }

    pub fn advance(&self, d: Duration) {
        *self.now.lock().unwrap() += d;
    }

    pub fn set(&self, t: DateTime<Utc>) {
        *self.now.lock().unwrap() = t;
    }
}

impl Clock for ManualClock {
    fn now(&self) -> DateTime<Utc> {
        *self.now.lock().unwrap()
    }

    fn sleep_until(&self, t: DateTime<Utc>) {
        let mut now = self.now.lock().unwrap();
        if t > *now {
            *now = t;
        }
    }

    fn sleep_until_or_stop(&self, t: DateTime<Utc>, stop: &AtomicBool) -> bool {
        if stop.load(Ordering::Relaxed) {
            return false;
        }
        self.sleep_until(t);
        true
    }
}
