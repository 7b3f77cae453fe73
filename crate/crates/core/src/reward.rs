//! Virtual-price consumption penalty plus night-charge / day-discharge
//! shaping, scaled and clipped to `[clip_lo, clip_hi]`.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::env::ActionVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    pub beta: f64,
    pub night_window: BTreeSet<u8>,
    pub day_window: BTreeSet<u8>,
    pub night_charge_threshold: f64,
    pub shaping_magnitude: f64,
    pub scale_divisor: f64,
    pub clip_lo: f64,
    pub clip_hi: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            beta: 0.005,
            night_window: [22, 23, 24].into_iter().collect(),
            day_window: (12..=20).collect(),
            night_charge_threshold: 0.1,
            shaping_magnitude: 1000.0,
            scale_divisor: 2000.0,
            clip_lo: -1.0,
            clip_hi: 1.0,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.clip_lo < self.clip_hi) {
            return Err(format!("clip_lo {} must be below clip_hi {}", self.clip_lo, self.clip_hi));
        }
        if !(self.scale_divisor > 0.0) {
            return Err(format!("scale_divisor {} must be positive", self.scale_divisor));
        }
        if let Some(h) = self.night_window.intersection(&self.day_window).next() {
            return Err(format!("hour {h} is in both reward windows"));
        }
        Ok(())
    }
}

/// Negated virtual price: `-beta * e_total * sum(e_i)`.
pub fn price_term(e_total: f64, e_i: &[f64], beta: f64) -> f64 {
    -beta * e_total * e_i.iter().sum::<f64>()
}

pub fn shaping_term(hour: u8, actions: &ActionVector, config: &RewardConfig) -> f64 {
    let mean = actions.mean();
    let magnitude = config.shaping_magnitude;
    let night = if config.night_window.contains(&hour) {
        if mean > config.night_charge_threshold {
            magnitude
        } else if mean < 0.0 {
            -magnitude
        } else {
            0.0
        }
    } else {
        0.0
    };
    let day = if config.day_window.contains(&hour) && mean > 0.0 {
        -magnitude
    } else {
        0.0
    };
    night + day
}

pub fn reward(e_total: f64, e_i: &[f64], hour: u8, actions: &ActionVector, config: &RewardConfig) -> f64 {
    let raw = price_term(e_total, e_i, config.beta) + shaping_term(hour, actions, config);
    let scaled = raw / config.scale_divisor;
    if scaled.is_nan() {
        // only reachable with infinite inputs of opposite sign
        return config.clip_lo;
    }
    scaled.clamp(config.clip_lo, config.clip_hi)
}
