//! Fixed-rate polling. Source `s` is due at `start + k * T_s` for k = 1, 2, ...
//! Firing times are computed from `start`, not from when the previous cycle
//! finished, so slow cycles do not make the schedule drift.

use std::sync::atomic::AtomicBool;

use chrono::{DateTime, Duration, Utc};

use super::{Clock, FeedSource};

/// One firing: the sources due at `at`, by index into the source list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tick {
    pub at: DateTime<Utc>,
    pub due: Vec<usize>,
}

/// Number of cycles a source with interval `period` gets in `elapsed`.
pub fn expected_cycles(elapsed: Duration, period: Duration) -> i64 {
    if period <= Duration::zero() || elapsed < Duration::zero() {
        return 0;
    }
    elapsed.num_milliseconds() / period.num_milliseconds()
}

fn period_of(s: &FeedSource) -> Duration {
    Duration::from_std(s.poll_interval).unwrap_or(Duration::MAX).max(Duration::milliseconds(1))
}

/// Runs the schedule from `clock.now()` until `until` (inclusive) or until
/// `stop` is set. `on_tick` runs on the calling thread; the next firing is
/// waited for only after it returns. Returns the number of ticks.
pub fn run_schedule(
    sources: &[FeedSource],
    clock: &dyn Clock,
    until: Option<DateTime<Utc>>,
    stop: &AtomicBool,
    mut on_tick: impl FnMut(&Tick),
) -> usize {
    if sources.is_empty() {
        return 0;
    }
    let start = clock.now();
    let periods: Vec<Duration> = sources.iter().map(period_of).collect();
    let mut next_k: Vec<i32> = vec![1; sources.len()];
    let due_at = |i: usize, k: i32| start.checked_add_signed(periods[i] * k);
    let mut ticks = 0;
    loop {
        let Some(at) = (0..sources.len()).filter_map(|i| due_at(i, next_k[i])).min() else {
            return ticks;
        };
        if until.is_some_and(|u| at > u) {
            return ticks;
        }
        if !clock.sleep_until_or_stop(at, stop) {
            return ticks;
        }
        let due: Vec<usize> = (0..sources.len()).filter(|&i| due_at(i, next_k[i]) == Some(at)).collect();
        for &i in &due {
            next_k[i] += 1;
        }
        on_tick(&Tick { at, due });
        ticks += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::ManualClock;
    use std::sync::atomic::Ordering;
    use url::Url;

    fn source(name: &str, secs: u64) -> FeedSource {
        FeedSource::new(name, Url::parse("https://example.com/feed").unwrap(), Url::parse("https://example.com").unwrap())
            .with_poll_interval(std::time::Duration::from_secs(secs))
    }

    fn t0() -> DateTime<Utc> {
        DateTime::parse_from_rfc3339("2020-01-01T00:00:00Z").unwrap().with_timezone(&Utc)
    }

    #[test]
    fn two_hour_default_over_a_day() {
        let clock = ManualClock::new(t0());
        let stop = AtomicBool::new(false);
        let mut n = 0;
        run_schedule(&[source("a", 7200)], &clock, Some(t0() + Duration::hours(24)), &stop, |_| n += 1);
        assert_eq!(n, 12);
        assert_eq!(expected_cycles(Duration::hours(24), Duration::hours(2)), 12);
    }

    #[test]
    fn mixed_periods_share_ticks() {
        let clock = ManualClock::new(t0());
        let stop = AtomicBool::new(false);
        let mut per = [0usize; 2];
        let mut ticks = Vec::new();
        run_schedule(&[source("a", 10), source("b", 15)], &clock, Some(t0() + Duration::seconds(30)), &stop, |t| {
            t.due.iter().for_each(|&i| per[i] += 1);
            ticks.push((t.at - t0()).num_seconds());
        });
        assert_eq!(per, [3, 2]);
        assert_eq!(ticks, [10, 15, 20, 30]);
    }

    #[test]
    fn stop_flag_halts() {
        let clock = ManualClock::new(t0());
        let stop = AtomicBool::new(false);
        let mut n = 0;
        run_schedule(&[source("a", 60)], &clock, None, &stop, |_| {
            n += 1;
            if n == 5 {
                stop.store(true, Ordering::Relaxed);
            }
        });
        assert_eq!(n, 5);
    }
}
