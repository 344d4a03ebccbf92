//! Run summaries, the stability classifier and the Lyapunov diagnostic.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::repair::PartitionSpec;

/// Shortest post-warmup trace accepted by the classifier.
pub const MIN_TRACE: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Stable,
    Unstable,
    Inconclusive,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Stable => "stable",
            Verdict::Unstable => "unstable",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

/// Slope thresholds, as fractions of the mean service quantum per slot.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilityRule {
    pub stable_below: f64,
    pub unstable_above: f64,
}

impl Default for StabilityRule {
    fn default() -> Self {
        StabilityRule {
            stable_below: 0.01,
            unstable_above: 0.1,
        }
    }
}

/// Least-squares slope of `ys` against `0, 1, 2, ...`.
pub fn ls_slope(ys: &[f64]) -> f64 {
    let n = ys.len() as f64;
    if ys.len() < 2 {
        return 0.0;
    }
    let xbar = (n - 1.0) / 2.0;
    let ybar = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (k, &y) in ys.iter().enumerate() {
        let dx = k as f64 - xbar;
        sxy += dx * (y - ybar);
        sxx += dx * dx;
    }
    sxy / sxx
}

/// Classifies a total-queue trace by the slope over its second half.
/// Returns the verdict and the slope (bits/slot).
pub fn classify_stability(trace: &[f64], quantum: f64, rule: StabilityRule) -> Result<(Verdict, f64)> {
    if trace.len() < MIN_TRACE {
        return Err(Error::TraceTooShort {
            len: trace.len(),
            min: MIN_TRACE,
        });
    }
    let slope = ls_slope(&trace[trace.len() / 2..]);
    let verdict = if slope < rule.stable_below * quantum {
        Verdict::Stable
    } else if slope > rule.unstable_above * quantum {
        Verdict::Unstable
    } else {
        Verdict::Inconclusive
    };
    Ok((verdict, slope))
}

/// `(sum Q^2 + Z^2) / 2`.
pub fn lyapunov_value(queues: &[f64], z: f64) -> f64 {
    0.5 * (queues.iter().map(|q| q * q).sum::<f64>() + z * z)
}

/// Per-group code statistics.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GroupStats {
    pub completed: u64,
    pub mean_code_length: Option<f64>,
    /// `I_g` as the scheduler saw it at the end of the run (bits/slot).
    pub rate_estimate: f64,
    pub partition: Option<PartitionSpec>,
    pub eta: Vec<Option<f64>>,
}

/// Summary of one simulation run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunMetrics {
    pub seed: u64,
    pub slots: u64,
    pub warmup: u64,
    /// Time-average backlog per flow over the measurement window (bits).
    pub avg_queue: Vec<f64>,
    pub total_avg_queue: f64,
    /// Delivered bits per slot per flow over the measurement window.
    pub throughput: Vec<f64>,
    pub total_throughput: f64,
    pub avg_power: f64,
    /// Average power over the whole run.
    pub run_avg_power: f64,
    pub final_z: f64,
    pub verdict: Verdict,
    pub slope: f64,
    pub lyapunov: Vec<f64>,
    pub groups: Vec<GroupStats>,
    /// `B_mi`: counts per CSI state and action (last column is idle), when
    /// the alphabet is small enough.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub action_counts: Option<Vec<Vec<u64>>>,
    #[serde(skip)]
    pub queue_trace: Vec<f64>,
}

impl RunMetrics {
    pub fn z_per_slot(&self) -> f64 {
        self.final_z / self.slots as f64
    }
}
