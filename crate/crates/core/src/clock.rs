//! Simulated clock.
//!
//! Every timestamp in the system comes from a per-trial [`SimClock`]; nothing
//! reads wall time. This is what makes event logs and reports byte-stable
//! across runs.

use chrono::{Days, NaiveDate};
use serde::{Deserialize, Serialize};

/// Milliseconds since the simulation epoch.
pub type SimMillis = u64;

/// Simulation epoch: 2026-01-02T09:00:00Z (a Friday, so "next Friday" is
/// exactly the +7-day task default).
pub const SIM_EPOCH_DATE: (i32, u32, u32) = (2026, 1, 2);

pub const MILLIS_PER_DAY: u64 = 86_400_000;

/// Monotone simulated clock, one per trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimClock {
    now_ms: SimMillis,
}

impl Default for SimClock {
    fn default() -> Self {
        Self::new()
    }
}

impl SimClock {
    pub fn new() -> Self {
        Self { now_ms: 0 }
    }

    pub fn at(now_ms: SimMillis) -> Self {
        Self { now_ms }
    }

    pub fn now_ms(&self) -> SimMillis {
        self.now_ms
    }

    pub fn advance(&mut self, delta_ms: SimMillis) {
        self.now_ms = self.now_ms.saturating_add(delta_ms);
    }

    /// Jumps forward to an absolute instant. Never moves backwards.
    pub fn jump_to(&mut self, instant_ms: SimMillis) {
        if instant_ms > self.now_ms {
            self.now_ms = instant_ms;
        }
    }

    /// Calendar date at the current simulated instant.
    pub fn today(&self) -> NaiveDate {
        let (y, m, d) = SIM_EPOCH_DATE;
        let epoch = NaiveDate::from_ymd_opt(y, m, d).expect("valid sim epoch");
        epoch
            .checked_add_days(Days::new(self.now_ms / MILLIS_PER_DAY))
            .expect("sim date in range")
    }

    /// Date `days` ahead of the current simulated instant, as `YYYY-MM-DD`.
    pub fn date_in_days(&self, days: u64) -> String {
        self.today()
            .checked_add_days(Days::new(days))
            .expect("sim date in range")
            .format("%Y-%m-%d")
            .to_string()
    }
}
