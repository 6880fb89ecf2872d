//! Uniform time grid shared by the Riccati solvers, the gain schedule and
//! the path simulator.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ProblemSpec;

/// Uniform grid `t_i = i * T / N`, `i = 0..=N`, with every schedule
/// breakpoint sitting exactly on a node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    steps: usize,
    horizon: f64,
}

impl TimeGrid {
    /// Grid with exactly `steps` intervals on `[0, horizon]`. Callers that
    /// have a piecewise schedule should prefer [`TimeGrid::aligned`].
    pub fn new(steps: usize, horizon: f64) -> TimeGrid {
        assert!(steps >= 1 && horizon > 0.0);
        TimeGrid { steps, horizon }
    }

    /// Smallest `N >= requested` such that every breakpoint of the
    /// schedule coincides with a node. Single-interval schedules accept
    /// any `N`.
    pub fn aligned(spec: &ProblemSpec, requested: usize) -> Result<TimeGrid> {
        let requested = requested.max(1);
        let horizon = spec.horizon;
        let interior = &spec.schedule.breakpoints[1..spec.schedule.breakpoints.len() - 1];
        let max_steps = requested * 16 + 4096;
        'outer: for steps in requested..=max_steps {
            for &b in interior {
                let x = b / horizon * steps as f64;
                if (x - x.round()).abs() > 1e-9 * steps as f64 {
                    continue 'outer;
                }
            }
            return Ok(TimeGrid { steps, horizon });
        }
        Err(Error::GridAlignment { max_steps })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn node_count(&self) -> usize {
        self.steps + 1
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    /// `t_i`, with the last node pinned to the horizon exactly.
    pub fn time(&self, i: usize) -> f64 {
        debug_assert!(i <= self.steps);
        if i == self.steps {
            self.horizon
        } else {
            i as f64 * self.horizon / self.steps as f64
        }
    }

    /// Error unless `other` is the same grid.
    pub fn expect_same(&self, other: &TimeGrid, context: &str) -> Result<()> {
        if self != other {
            return Err(Error::GridMismatch {
                details: format!(
                    "{context}: {} steps on [0, {}] vs {} steps on [0, {}]",
                    self.steps, self.horizon, other.steps, other.horizon
                ),
            });
        }
        Ok(())
    }
}
