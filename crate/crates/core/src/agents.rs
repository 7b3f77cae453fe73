//! Baseline controllers: the hour-of-day rule-based controller that defines
//! score 1.0, plus no-op and uniform-random agents used as comparators.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{ActionLayout, ActionVector};

/// Night-charge / day-discharge schedule keyed on hour of day (1-24).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RbcSchedule {
    pub charge_hours: BTreeSet<u8>,
    pub discharge_hours: BTreeSet<u8>,
    pub charge_rate: f64,
    pub discharge_rate: f64,
}

impl Default for RbcSchedule {
    fn default() -> Self {
        Self {
            // 22:00-08:00
            charge_hours: [23, 24, 1, 2, 3, 4, 5, 6, 7, 8].into_iter().collect(),
            // 09:00-21:00
            discharge_hours: (10..=21).collect(),
            charge_rate: 1.0 / 12.0,
            discharge_rate: 1.0 / 12.0,
        }
    }
}

impl RbcSchedule {
    pub fn validate(&self) -> Result<(), String> {
        let bad_hour = self
            .charge_hours
            .iter()
            .chain(&self.discharge_hours)
            .find(|h| !(1..=24).contains(*h));
        if let Some(h) = bad_hour {
            return Err(format!("schedule hour {h} outside 1..=24"));
        }
        if let Some(h) = self.charge_hours.intersection(&self.discharge_hours).next() {
            return Err(format!("hour {h} is both a charge and a discharge hour"));
        }
        for (name, rate) in [("charge_rate", self.charge_rate), ("discharge_rate", self.discharge_rate)] {
            if !(rate > 0.0 && rate <= 1.0) {
                return Err(format!("{name} {rate} outside (0, 1]"));
            }
        }
        Ok(())
    }

    /// Action applied to every storage slot at `hour`.
    pub fn action_value(&self, hour: u8) -> f64 {
        if self.charge_hours.contains(&hour) {
            self.charge_rate
        } else if self.discharge_hours.contains(&hour) {
            -self.discharge_rate
        } else {
            0.0
        }
    }
}

pub fn rbc_action(hour: u8, schedule: &RbcSchedule, layout: &ActionLayout) -> ActionVector {
    ActionVector::new(vec![schedule.action_value(hour); layout.len()])
}

pub fn noop_action(layout: &ActionLayout) -> ActionVector {
    ActionVector::new(vec![0.0; layout.len()])
}

/// Uniform draw in [-1, 1] per slot, a pure function of `(seed, step)`.
pub fn random_action(layout: &ActionLayout, seed: u64, step: u64) -> ActionVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(step);
    ActionVector::new((0..layout.len()).map(|_| rng.random_range(-1.0..=1.0)).collect())
}

/// Which fixed controller to run through an episode.
#[derive(Debug, Clone, PartialEq)]
pub enum BaselineAgent {
    Noop,
    Rbc(RbcSchedule),
    Random { seed: u64 },
}

impl BaselineAgent {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Noop => "noop",
            Self::Rbc(_) => "rbc",
            Self::Random { .. } => "random",
        }
    }

    pub fn act(&self, t: usize, hour: u8, layout: &ActionLayout) -> ActionVector {
        match self {
            Self::Noop => noop_action(layout),
            Self::Rbc(schedule) => rbc_action(hour, schedule, layout),
            Self::Random { seed } => random_action(layout, *seed, t as u64),
        }
    }
}
