//! Per-slot scheduling and power decisions.
//!
//! NC-RC picks `argmax_s Q_s I_s - Z P_s`. Unicast-like flows choose their own
//! power level, multicast groups always transmit at `P_av`.

mod fixed_rate;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use fixed_rate::{multicast_fixed_rate, FixedRateView};

/// Transmit power levels available to unicast-like flows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerSet {
    pub levels: Vec<f64>,
    pub p_av: f64,
    /// Adds an idle level `P = 0` to the unicast options.
    #[serde(default = "yes")]
    pub includes_zero: bool,
}

fn yes() -> bool {
    true
}

impl PowerSet {
    pub fn new(levels: Vec<f64>, p_av: f64, includes_zero: bool) -> Result<Self> {
        let set = PowerSet {
            levels,
            p_av,
            includes_zero,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels.is_empty() {
            return Err(Error::config("power set is empty"));
        }
        if self.levels.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::config("power levels must be finite and nonnegative"));
        }
        if self.levels.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::config("power levels must be strictly increasing"));
        }
        if !self.levels.contains(&self.p_av) {
            return Err(Error::config("P_av must be one of the power levels"));
        }
        Ok(())
    }

    /// Levels a unicast-like flow may pick, ascending.
    pub fn options(&self) -> Vec<f64> {
        let mut v = self.levels.clone();
        if self.includes_zero && v[0] > 0.0 {
            v.insert(0, 0.0);
        }
        v
    }

    pub fn max_level(&self) -> f64 {
        *self.levels.last().unwrap()
    }
}

/// `M / (M + I_max K)`: share of accumulated MI that is not overshoot.
pub fn rate_loss_factor(message_bits: f64, i_max_k: f64) -> f64 {
    message_bits / (message_bits + i_max_k)
}

/// Per-flow input to a decision.
#[derive(Clone, Debug, PartialEq)]
pub enum FlowView<'a> {
    /// Unicast or repair flow; `expected_mi` is `E{I(h, P) | hhat}` in
    /// bits/symbol for every option of the power set.
    Unicast {
        backlog: f64,
        expected_mi: &'a [f64],
        message_bits: f64,
    },
    Multicast {
        backlog: f64,
        code_index: u64,
        sum_lengths: u64,
        message_bits: f64,
    },
    /// A unicast-like flow that cannot be scheduled this slot. It still
    /// occupies its slots in the action index.
    Inactive,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UnicastChoice {
    pub level: usize,
    pub power: f64,
    pub metric: f64,
    /// Service rate estimate `I_u` (bits/slot).
    pub rate: f64,
}

/// A scheduling decision. `power == 0` means no transmission.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ControlAction {
    pub flow: usize,
    pub power: f64,
    /// Index into the action set, or `None` for the idle slot.
    pub index: Option<usize>,
    pub metric: f64,
}

impl ControlAction {
    pub fn transmits(&self) -> bool {
        self.power > 0.0
    }
}

/// The NC-RC decision rule.
#[derive(Clone, Debug)]
pub struct NcRc {
    options: Vec<f64>,
    p_av: f64,
    includes_zero: bool,
    i_max_k: f64,
    epsilon: f64,
    symbols: f64,
}

impl NcRc {
    pub fn new(power: &PowerSet, i_max: f64, symbols: f64, epsilon: f64) -> Self {
        NcRc {
            options: power.options(),
            p_av: power.p_av,
            includes_zero: power.includes_zero,
            i_max_k: i_max * symbols,
            epsilon,
            symbols,
        }
    }

    pub fn options(&self) -> &[f64] {
        &self.options
    }

    /// Rate-loss factor with MI scaled down by `1 + eps`.
    pub fn loss_factor(&self, message_bits: f64) -> f64 {
        rate_loss_factor(message_bits, self.i_max_k / (1.0 + self.epsilon))
    }

    /// Best power for a unicast-like flow. Ties keep the lowest level.
    pub fn unicast_metric(&self, backlog: f64, z: f64, expected_mi: &[f64], message_bits: f64) -> UnicastChoice {
        let scale = self.symbols / (1.0 + self.epsilon) * self.loss_factor(message_bits);
        let mut best: Option<UnicastChoice> = None;
        for (level, (&p, &e)) in self.options.iter().zip(expected_mi).enumerate() {
            let rate = e * scale;
            let metric = backlog * rate - z * p;
            if best.is_none_or(|b| metric > b.metric) {
                best = Some(UnicastChoice {
                    level,
                    power: p,
                    metric,
                    rate,
                });
            }
        }
        best.expect("at least one power option")
    }

    /// `(metric, I_g)` for a multicast group.
    pub fn multicast_metric(&self, backlog: f64, z: f64, code_index: u64, sum_lengths: u64, message_bits: f64) -> (f64, f64) {
        let rate = multicast_rate(code_index, sum_lengths, message_bits, self.i_max_k);
        (backlog * rate - z * self.p_av, rate)
    }

    /// Picks the flow and power for this slot. Ties go to the lowest flow id.
    pub fn decide(&self, z: f64, flows: &[FlowView<'_>]) -> ControlAction {
        let o = self.options.len();
        let mut best: Option<ControlAction> = None;
        let mut offset = 0;
        for (flow, view) in flows.iter().enumerate() {
            let cand = match *view {
                FlowView::Unicast {
                    backlog,
                    expected_mi,
                    message_bits,
                } => {
                    let c = self.unicast_metric(backlog, z, expected_mi, message_bits);
                    let idx = offset + c.level;
                    offset += o;
                    Some(ControlAction {
                        flow,
                        power: c.power,
                        index: Some(idx),
                        metric: c.metric,
                    })
                }
                FlowView::Multicast {
                    backlog,
                    code_index,
                    sum_lengths,
                    message_bits,
                } => {
                    let (metric, _) = self.multicast_metric(backlog, z, code_index, sum_lengths, message_bits);
                    let idx = offset;
                    offset += 1;
                    Some(ControlAction {
                        flow,
                        power: self.p_av,
                        index: Some(idx),
                        metric,
                    })
                }
                FlowView::Inactive => {
                    offset += o;
                    None
                }
            };
            if let Some(c) = cand {
                if best.is_none_or(|b| c.metric > b.metric) {
                    best = Some(c);
                }
            }
        }
        match best {
            Some(b) if !(self.includes_zero && b.metric < 0.0) => b,
            _ => ControlAction {
                flow: best.map_or(0, |b| b.flow),
                power: 0.0,
                index: None,
                metric: 0.0,
            },
        }
    }
}

/// `I_g = n_g M_g / sum L` for `n_g > 1`, else `I_max K`.
pub fn multicast_rate(code_index: u64, sum_lengths: u64, message_bits: f64, i_max_k: f64) -> f64 {
    if code_index > 1 && sum_lengths > 0 {
        code_index as f64 * message_bits / sum_lengths as f64
    } else {
        i_max_k
    }
}

/// Number of actions: unicast-like flows get every option, groups one each.
pub fn action_count(unicast_like: usize, groups: usize, options: usize) -> usize {
    unicast_like * options + groups
}
