//! Search budgets for anytime algorithms.
//!
//! A budget can bound wall-clock time, explored nodes, or both. Node limits
//! make runs reproducible; time limits model the mission clock.

use std::time::{Duration, Instant};

/// How many work units pass between two clock reads.
const CLOCK_STRIDE: u64 = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Budget {
    pub time: Option<Duration>,
    pub nodes: Option<u64>,
}

impl Budget {
    pub const fn unlimited() -> Self {
        Budget { time: None, nodes: None }
    }

    pub const fn time(limit: Duration) -> Self {
        Budget { time: Some(limit), nodes: None }
    }

    pub fn millis(ms: u64) -> Self {
        Self::time(Duration::from_millis(ms))
    }

    pub const fn nodes(limit: u64) -> Self {
        Budget { time: None, nodes: Some(limit) }
    }

    pub fn with_nodes(mut self, limit: u64) -> Self {
        self.nodes = Some(limit);
        self
    }

    pub fn is_unlimited(&self) -> bool {
        self.time.is_none() && self.nodes.is_none()
    }

    pub fn start(&self) -> BudgetClock {
        BudgetClock {
            started: Instant::now(),
            budget: *self,
            ticks: 0,
            exhausted: false,
        }
    }
}

/// Running view of a [`Budget`].
#[derive(Debug, Clone)]
pub struct BudgetClock {
    started: Instant,
    budget: Budget,
    ticks: u64,
    exhausted: bool,
}

impl BudgetClock {
    /// Counts one unit of work; returns `true` once the budget is spent.
    pub fn tick(&mut self) -> bool {
        if self.exhausted {
            return true;
        }
        self.ticks += 1;
        if let Some(n) = self.budget.nodes {
            if self.ticks > n {
                self.exhausted = true;
                return true;
            }
        }
        if let Some(t) = self.budget.time {
            if t.is_zero() || (self.ticks.is_multiple_of(CLOCK_STRIDE) && self.started.elapsed() >= t) {
                self.exhausted = true;
            }
        }
        self.exhausted
    }

    /// Checks the budget without consuming work.
    pub fn expired(&mut self) -> bool {
        if !self.exhausted {
            if let Some(t) = self.budget.time {
                if self.started.elapsed() >= t {
                    self.exhausted = true;
                }
            }
            if let Some(n) = self.budget.nodes {
                if self.ticks > n {
                    self.exhausted = true;
                }
            }
        }
        self.exhausted
    }

    pub fn exhausted(&self) -> bool {
        self.exhausted
    }

    pub fn ticks(&self) -> u64 {
        self.ticks
    }

    pub fn elapsed(&self) -> Duration {
        self.started.elapsed()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn node_budget_counts_exactly() {
        let mut c = Budget::nodes(3).start();
        assert!(!c.tick());
        assert!(!c.tick());
        assert!(!c.tick());
        assert!(c.tick());
        assert!(c.exhausted());
    }

    #[test]
    fn zero_time_budget_is_spent_immediately() {
        let mut c = Budget::time(Duration::ZERO).start();
        assert!(c.tick());
    }

    #[test]
    fn unlimited_never_expires() {
        let mut c = Budget::unlimited().start();
        for _ in 0..10_000 {
            assert!(!c.tick());
        }
        assert!(!c.expired());
    }
}
