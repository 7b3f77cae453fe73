//! District load-profile cost components and baseline normalisation.

use std::fmt;
use std::ops::Range;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("trace has {0} entries; ramping needs at least 2")]
    TooShort(usize),
    #[error("trace is empty")]
    Empty,
    #[error("trace length {0} is not a whole number of days")]
    NotDayAligned(usize),
    #[error("month {0} has zero peak demand")]
    ZeroPeakMonth(usize),
    #[error("month blocks do not partition a trace of length {0}")]
    BadMonthBlocks(usize),
    #[error("agent trace has {agent} entries but baseline has {baseline}")]
    LengthMismatch { agent: usize, baseline: usize },
}

pub type Result<T, E = MetricsError> = std::result::Result<T, E>;

pub fn ramping(trace: &[f64]) -> Result<f64> {
    if trace.len() < 2 {
        return Err(MetricsError::TooShort(trace.len()));
    }
    Ok(trace.windows(2).map(|w| (w[1] - w[0]).abs()).sum())
}

/// One minus the mean over months of (month mean / month peak).
pub fn one_minus_load_factor(trace: &[f64], month_blocks: &[Range<usize>]) -> Result<f64> {
    let mut expected_start = 0;
    for block in month_blocks {
        if block.start != expected_start || block.is_empty() {
            return Err(MetricsError::BadMonthBlocks(trace.len()));
        }
        expected_start = block.end;
    }
    if expected_start != trace.len() || month_blocks.is_empty() {
        return Err(MetricsError::BadMonthBlocks(trace.len()));
    }
    let mut factor_sum = 0.0;
    for (month, block) in month_blocks.iter().enumerate() {
        let values = &trace[block.clone()];
        let peak = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if peak <= 0.0 {
            return Err(MetricsError::ZeroPeakMonth(month));
        }
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        factor_sum += mean / peak;
    }
    Ok(1.0 - factor_sum / month_blocks.len() as f64)
}

pub fn avg_daily_peak(trace: &[f64]) -> Result<f64> {
    if trace.is_empty() {
        return Err(MetricsError::Empty);
    }
    if trace.len() % 24 != 0 {
        return Err(MetricsError::NotDayAligned(trace.len()));
    }
    let days = trace.len() / 24;
    let total: f64 = trace
        .chunks_exact(24)
        .map(|day| day.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .sum();
    Ok(total / days as f64)
}

pub fn peak_demand(trace: &[f64]) -> Result<f64> {
    trace
        .iter()
        .copied()
        .reduce(f64::max)
        .ok_or(MetricsError::Empty)
}

pub fn net_consumption(trace: &[f64]) -> Result<f64> {
    if trace.is_empty() {
        return Err(MetricsError::Empty);
    }
    Ok(trace.iter().sum())
}

/// The five components, in report column order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricSet {
    pub ramping: f64,
    pub one_minus_load_factor: f64,
    pub avg_daily_peak: f64,
    pub peak_demand: f64,
    pub net_consumption: f64,
}

impl MetricSet {
    pub const NAMES: [&'static str; 5] = [
        "ramping",
        "one_minus_load_factor",
        "avg_daily_peak",
        "peak_demand",
        "net_consumption",
    ];

    pub fn compute(trace: &[f64], month_blocks: &[Range<usize>]) -> Result<Self> {
        Ok(Self {
            ramping: ramping(trace)?,
            one_minus_load_factor: one_minus_load_factor(trace, month_blocks)?,
            avg_daily_peak: avg_daily_peak(trace)?,
            peak_demand: peak_demand(trace)?,
            net_consumption: net_consumption(trace)?,
        })
    }

    pub fn to_array(self) -> [f64; 5] {
        [
            self.ramping,
            self.one_minus_load_factor,
            self.avg_daily_peak,
            self.peak_demand,
            self.net_consumption,
        ]
    }

    pub fn from_array(v: [f64; 5]) -> Self {
        Self {
            ramping: v[0],
            one_minus_load_factor: v[1],
            avg_daily_peak: v[2],
            peak_demand: v[3],
            net_consumption: v[4],
        }
    }

    pub fn mean(&self) -> f64 {
        self.to_array().iter().sum::<f64>() / 5.0
    }
}

/// Raw components for agent and baseline, their ratios, and the average score.
#[derive(Debug, Clone, PartialEq)]
pub struct CostReport {
    pub agent: MetricSet,
    pub baseline: MetricSet,
    pub ratios: MetricSet,
    pub avg_score: f64,
    /// Components whose baseline value was zero; their ratio is reported as 1.
    pub degenerate: Vec<&'static str>,
}

/// Column header of the score table.
pub const REPORT_HEADER: [&str; 6] = [
    "ramping",
    "1-load_factor",
    "avg_daily_peak",
    "peak_demand",
    "net_consumption",
    "avg_score",
];

impl CostReport {
    /// Builds a report directly from five ratios.
    pub fn from_ratios(ratios: MetricSet) -> Self {
        Self {
            agent: ratios,
            baseline: MetricSet::from_array([1.0; 5]),
            ratios,
            avg_score: ratios.mean(),
            degenerate: Vec::new(),
        }
    }

    pub fn csv_header() -> String {
        REPORT_HEADER.join(",")
    }

    /// Ratios then average score, three decimals.
    pub fn csv_row(&self) -> String {
        let mut cells: Vec<String> = self.ratios.to_array().iter().map(|v| format!("{v:.3}")).collect();
        cells.push(format!("{:.3}", self.avg_score));
        cells.join(",")
    }

    /// One-row CSV document (header plus values).
    pub fn to_csv(&self) -> String {
        format!("{}\n{}\n", Self::csv_header(), self.csv_row())
    }
}

impl fmt::Display for CostReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let r = &self.ratios;
        write!(
            f,
            "ramping {:.3} | 1-LF {:.3} | daily peak {:.3} | peak {:.3} | net {:.3} | score {:.3}",
            r.ramping, r.one_minus_load_factor, r.avg_daily_peak, r.peak_demand, r.net_consumption, self.avg_score
        )
    }
}

/// Scores `agent_trace` against `baseline_trace` with equal weights.
pub fn score(agent_trace: &[f64], baseline_trace: &[f64], month_blocks: &[Range<usize>]) -> Result<CostReport> {
    if agent_trace.len() != baseline_trace.len() {
        return Err(MetricsError::LengthMismatch {
            agent: agent_trace.len(),
            baseline: baseline_trace.len(),
        });
    }
    let agent = MetricSet::compute(agent_trace, month_blocks)?;
    let baseline = MetricSet::compute(baseline_trace, month_blocks)?;
    let mut degenerate = Vec::new();
    let ratios: [f64; 5] = std::array::from_fn(|k| {
        let (a, b) = (agent.to_array()[k], baseline.to_array()[k]);
        if b == 0.0 {
            log::warn!("baseline {} is zero; reporting ratio 1", MetricSet::NAMES[k]);
            degenerate.push(MetricSet::NAMES[k]);
            1.0
        } else {
            a / b
        }
    });
    let ratios = MetricSet::from_array(ratios);
    Ok(CostReport {
        agent,
        baseline,
        ratios,
        avg_score: ratios.mean(),
        degenerate,
    })
}
