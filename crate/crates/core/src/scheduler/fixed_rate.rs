//! Fixed-rate baseline: physical-layer codes of a chosen rate, with rateless
//! coding only at the application layer.

use super::{ControlAction, NcRc};
use crate::channel::{Channel, RateChoice, Receiver, RicianPosterior};

/// Per-flow input to a fixed-rate decision.
#[derive(Clone, Debug, PartialEq)]
pub enum FixedRateView<'a> {
    /// `choices[k]` is the goodput-optimal rate at power option `k`.
    Unicast { backlog: f64, choices: &'a [RateChoice] },
    Multicast {
        backlog: f64,
        code_index: u64,
        sum_lengths: u64,
        message_bits: f64,
    },
    Inactive,
}

impl NcRc {
    /// Same argmax as NC-RC with goodput in place of the expected MI.
    /// Returns the action and the code rate in bits (zero when idle).
    pub fn fixed_rate_decide(&self, z: f64, flows: &[FixedRateView<'_>], multicast_rate: &[f64]) -> (ControlAction, f64) {
        let o = self.options.len();
        let mut best: Option<(ControlAction, f64)> = None;
        let mut offset = 0;
        let mut group = 0;
        for (flow, view) in flows.iter().enumerate() {
            let cand = match *view {
                FixedRateView::Unicast { backlog, choices } => {
                    let mut pick: Option<(usize, f64)> = None;
                    for (k, (&p, c)) in self.options.iter().zip(choices).enumerate() {
                        let m = backlog * c.goodput - z * p;
                        if pick.is_none_or(|(_, b)| m > b) {
                            pick = Some((k, m));
                        }
                    }
                    let (k, metric) = pick.expect("at least one power option");
                    let idx = offset + k;
                    offset += o;
                    Some((
                        ControlAction {
                            flow,
                            power: self.options[k],
                            index: Some(idx),
                            metric,
                        },
                        choices[k].rate,
                    ))
                }
                FixedRateView::Multicast {
                    backlog,
                    code_index,
                    sum_lengths,
                    message_bits,
                } => {
                    let (metric, _) = self.multicast_metric(backlog, z, code_index, sum_lengths, message_bits);
                    let idx = offset;
                    offset += 1;
                    let rate = multicast_rate[group];
                    group += 1;
                    Some((
                        ControlAction {
                            flow,
                            power: self.p_av,
                            index: Some(idx),
                            metric,
                        },
                        rate,
                    ))
                }
                FixedRateView::Inactive => {
                    offset += o;
                    None
                }
            };
            if let Some(c) = cand {
                if best.is_none_or(|b| c.0.metric > b.0.metric) {
                    best = Some(c);
                }
            }
        }
        match best {
            Some(b) if !(self.includes_zero && b.0.metric < 0.0) && b.0.power > 0.0 => b,
            other => (
                ControlAction {
                    flow: other.map_or(0, |b| b.0.flow),
                    power: 0.0,
                    index: other.and_then(|b| b.0.index.filter(|_| b.0.power == 0.0)),
                    metric: 0.0,
                },
                0.0,
            ),
        }
    }
}

/// Rate for a group without CSI: maximises the worst member's goodput at `P_av`.
pub fn multicast_fixed_rate(channel: &Channel, group: usize, p_av: f64) -> RateChoice {
    let (rates, radii) = channel.rate_candidates(p_av);
    let mut best = RateChoice::NONE;
    for (&r, &c) in rates.iter().zip(&radii) {
        let worst = channel
            .group_members(group)
            .map(|rx| member_success(channel, rx, c))
            .fold(1.0f64, f64::min);
        let g = r * worst;
        if g > best.goodput {
            best = RateChoice {
                rate: r,
                success: worst,
                goodput: g,
            };
        }
    }
    best
}

fn member_success(channel: &Channel, rx: Receiver, radius: f64) -> f64 {
    if !radius.is_finite() {
        return 0.0;
    }
    RicianPosterior::new(0.0, channel.variance(rx)).survival_many(&[radius])[0]
}
