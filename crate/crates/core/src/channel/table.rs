//! Per-bin lookup tables built once per run.
//!
//! Decisions only see the quantized report, so the tables hold expectations
//! conditioned on the report falling in a bin, averaged over the bin.

use std::collections::HashMap;

use super::posterior::{pieces, rule, RicianPosterior};
use super::{Channel, Receiver};

/// Number of rate candidates on the uniform grid `k * I_max * K / 256`.
pub const RATE_GRID_POINTS: usize = 256;

const OUTER_NODES: usize = 64;

/// Upper limit of `|hhat|^2 / var` for the top bin; the mass beyond is `e^-50`.
const TAIL_S: f64 = 50.0;

/// Bin quantile of magnitude `x`.
fn quantile_of(x: f64, var: f64) -> f64 {
    -(-x * x / var).exp_m1()
}

/// Quadrature nodes `(|hhat|, weight)` for the report distribution
/// conditioned on bin `bin`. Weights sum to one.
///
/// Works in `s = |hhat|^2 / var`, where the report density is `e^-s`, and
/// splits the range at `kinks` (magnitudes) and a few fixed points so the
/// top bin's long tail stays well resolved.
fn bin_nodes(var: f64, bin: usize, bins: usize, kinks: &[f64]) -> Vec<(f64, f64)> {
    let b = bins as f64;
    let s_lo = -(-(bin as f64) / b).ln_1p();
    let s_hi = if bin + 1 == bins {
        TAIL_S.max(s_lo + TAIL_S)
    } else {
        -(-((bin + 1) as f64) / b).ln_1p()
    };
    let mut splits: Vec<f64> = kinks.iter().map(|&x| x * x / var).collect();
    splits.extend([2.0, 5.0, 10.0, 20.0].iter().map(|d| s_lo + d));
    let outer = rule(OUTER_NODES);
    let mut nodes: Vec<(f64, f64)> = pieces(s_lo, s_hi, &splits)
        .into_iter()
        .flat_map(|(a, c)| outer.on(a, c).map(|(s, w)| ((s * var).sqrt(), w * (-s).exp())))
        .collect();
    let total: f64 = nodes.iter().map(|n| n.1).sum();
    for n in nodes.iter_mut() {
        n.1 /= total;
    }
    nodes
}

impl Channel {
    /// Average of `g(|hhat|)` over bin `bin` of `rx`, split where `g` may kink.
    fn bin_average<G: Fn(f64) -> f64>(&self, rx: Receiver, bin: usize, kinks: &[f64], g: G) -> f64 {
        bin_nodes(self.variance(rx), bin, self.bins(), kinks)
            .into_iter()
            .map(|(x, w)| w * g(x))
            .sum()
    }

    /// `E{I(h, P) | hhat in bin}` in bits/symbol.
    pub fn bin_expected_mi(&self, rx: Receiver, bin: usize, p: f64) -> f64 {
        if p <= 0.0 {
            return 0.0;
        }
        let rho = self.rho();
        if rho == 0.0 {
            return self.ergodic_mi(rx, p);
        }
        let var = self.variance(rx);
        let kinks: Vec<f64> = self
            .mi_model()
            .breakpoints(p, self.i_max())
            .into_iter()
            .map(|r| r / rho.sqrt())
            .collect();
        self.bin_average(rx, bin, &kinks, |x| {
            let post = RicianPosterior::new(rho.sqrt() * x, (1.0 - rho) * var);
            self.expected_mi_under(post, p)
        })
    }

    /// Rate candidates (bits/slot) at power `p` and the magnitude each needs.
    ///
    /// The uniform grid is extended with the values a lattice MI model can
    /// take, so atoms of the MI distribution are always candidates.
    pub fn rate_candidates(&self, p: f64) -> (Vec<f64>, Vec<f64>) {
        let k = self.symbols();
        let model = self.mi_model();
        let top = model.max_value(self.i_max());
        let mut rates: Vec<f64> = (1..=RATE_GRID_POINTS)
            .map(|n| n as f64 * top * k / RATE_GRID_POINTS as f64)
            .collect();
        if let super::MiModel::Lattice { step } = model {
            let levels = (top / step + 1e-9).round() as usize;
            rates.extend((1..=levels).map(|n| n as f64 * step * k));
        }
        rates.sort_by(f64::total_cmp);
        rates.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        let radii = rates
            .iter()
            .map(|&r| model.radius_for(r / k, p, self.i_max()))
            .collect();
        (rates, radii)
    }

    /// Goodput-maximising fixed rate for a single posterior.
    pub fn rate_choice(&self, post: RicianPosterior, p: f64) -> RateChoice {
        if p <= 0.0 {
            return RateChoice::NONE;
        }
        let (mut rates, mut radii) = self.rate_candidates(p);
        if post.is_point_mass() {
            // The goodput of a point mass peaks exactly at its own MI.
            let own = self.mi_model().evaluate(post.nu * post.nu, p, self.i_max()) * self.symbols();
            if own > 0.0 {
                rates.push(own);
                radii.push(post.nu);
            }
        }
        let survival = post.survival_many(&sorted_finite(&radii));
        let survival = expand(&radii, &survival);
        best_rate(&rates, &survival)
    }

    /// Goodput-maximising fixed rate given only that the report is in `bin`.
    pub fn bin_rate_choice(&self, rx: Receiver, bin: usize, p: f64) -> RateChoice {
        if p <= 0.0 {
            return RateChoice::NONE;
        }
        let (rates, radii) = self.rate_candidates(p);
        let survival = self.bin_survival(rx, bin, &radii);
        best_rate(&rates, &survival)
    }

    /// `P(|h| >= c | hhat in bin)` for each threshold.
    pub fn bin_survival(&self, rx: Receiver, bin: usize, radii: &[f64]) -> Vec<f64> {
        let rho = self.rho();
        let var = self.variance(rx);
        let b = self.bins() as f64;
        let lo = bin as f64 / b;
        let hi = (bin + 1) as f64 / b;
        if rho == 1.0 {
            // |h| = |hhat|: the fraction of the bin above each threshold.
            return radii
                .iter()
                .map(|&c| {
                    let f = if c.is_finite() { quantile_of(c, var) } else { 1.0 };
                    ((hi - lo.max(f)).max(0.0) * b).min(1.0)
                })
                .collect();
        }
        let sorted = sorted_finite(radii);
        let mut acc = vec![0.0; sorted.len()];
        if rho == 0.0 {
            acc = RicianPosterior::new(0.0, var).survival_many(&sorted);
        } else {
            for (x, w) in bin_nodes(var, bin, self.bins(), &[]) {
                let post = RicianPosterior::new(rho.sqrt() * x, (1.0 - rho) * var);
                for (a, s) in acc.iter_mut().zip(post.survival_many(&sorted)) {
                    *a += w * s;
                }
            }
        }
        expand(radii, &acc)
    }
}

fn sorted_finite(radii: &[f64]) -> Vec<f64> {
    let mut s: Vec<f64> = radii.iter().copied().filter(|r| r.is_finite()).collect();
    s.sort_by(f64::total_cmp);
    s.dedup();
    s
}

/// Maps survival values of the sorted finite thresholds back onto `radii`.
fn expand(radii: &[f64], survival_sorted: &[f64]) -> Vec<f64> {
    let sorted = sorted_finite(radii);
    radii
        .iter()
        .map(|&r| {
            if !r.is_finite() {
                0.0
            } else {
                let k = sorted.partition_point(|&s| s < r);
                survival_sorted[k]
            }
        })
        .collect()
}

/// Picks the candidate with the largest `R * P(success)`; ties keep the lowest rate.
pub(crate) fn best_rate(rates: &[f64], survival: &[f64]) -> RateChoice {
    let mut order: Vec<usize> = (0..rates.len()).collect();
    order.sort_by(|&a, &b| rates[a].total_cmp(&rates[b]));
    let mut best = RateChoice::NONE;
    for i in order {
        let g = rates[i] * survival[i];
        if g > best.goodput {
            best = RateChoice {
                rate: rates[i],
                success: survival[i],
                goodput: g,
            };
        }
    }
    best
}

/// A fixed transmission rate and its success probability.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateChoice {
    /// Bits per slot.
    pub rate: f64,
    pub success: f64,
    pub goodput: f64,
}

impl RateChoice {
    pub const NONE: RateChoice = RateChoice {
        rate: 0.0,
        success: 0.0,
        goodput: 0.0,
    };
}

/// `E{I(h, P^m) | bin}` per receiver, bin and power level (bits/symbol).
#[derive(Clone, Debug)]
pub struct ExpectationTable {
    levels: Vec<f64>,
    values: HashMap<Receiver, Vec<Vec<f64>>>,
}

impl ExpectationTable {
    pub fn build(channel: &Channel, receivers: &[Receiver], levels: &[f64]) -> Self {
        let values = receivers
            .iter()
            .map(|&rx| {
                let per_bin = (0..channel.bins())
                    .map(|b| levels.iter().map(|&p| channel.bin_expected_mi(rx, b, p)).collect())
                    .collect();
                (rx, per_bin)
            })
            .collect();
        ExpectationTable {
            levels: levels.to_vec(),
            values,
        }
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    /// Values for every power level; panics if `rx` was not tabulated.
    pub fn get(&self, rx: Receiver, bin: usize) -> &[f64] {
        &self.values[&rx][bin]
    }
}

/// Goodput-optimal fixed rates per receiver, bin and power level.
#[derive(Clone, Debug)]
pub struct GoodputTable {
    values: HashMap<Receiver, Vec<Vec<RateChoice>>>,
}

impl GoodputTable {
    pub fn build(channel: &Channel, receivers: &[Receiver], levels: &[f64]) -> Self {
        let values = receivers
            .iter()
            .map(|&rx| {
                let per_bin = (0..channel.bins())
                    .map(|b| levels.iter().map(|&p| channel.bin_rate_choice(rx, b, p)).collect())
                    .collect();
                (rx, per_bin)
            })
            .collect();
        GoodputTable { values }
    }

    pub fn get(&self, rx: Receiver, bin: usize) -> &[RateChoice] {
        &self.values[&rx][bin]
    }
}
