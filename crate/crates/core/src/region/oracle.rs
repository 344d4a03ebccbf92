//! Reference values for mean code lengths and multicast MI shares.
//!
//! With lattice MI every member's accumulated MI is a finite Markov chain, so
//! expected session lengths follow from first-step analysis.

use rand::Rng;

use crate::channel::{Channel, MiModel, Receiver};
use crate::error::{Error, Result};

/// Largest joint chain `lbar_oracle_exact` will enumerate.
pub const ORACLE_STATE_CAP: usize = 1_000_000;

/// Expected number of slots until every member's accumulated MI reaches
/// `threshold` lattice units.
///
/// `pmfs[j][k]` is the probability that member `j` gains `k` units in a slot.
/// Members are independent within a slot. Solved on the joint chain by
/// backward recursion from the absorbing corner.
pub fn lbar_oracle_exact(pmfs: &[Vec<f64>], threshold: usize) -> Result<f64> {
    let j = pmfs.len();
    if j == 0 || threshold == 0 {
        return Ok(if j == 0 { 0.0 } else { 1.0 });
    }
    let radix = threshold + 1;
    let states = (radix as u128).checked_pow(j as u32).unwrap_or(u128::MAX);
    if states > ORACLE_STATE_CAP as u128 {
        return Err(Error::StateSpaceOverflow {
            states,
            cap: ORACLE_STATE_CAP,
        });
    }
    let states = states as usize;
    let strides: Vec<usize> = (0..j).map(|k| radix.pow(k as u32)).collect();
    let mut expect = vec![0.0f64; states];
    let mut levels = vec![0usize; j];
    // States reachable from s have componentwise larger values, hence larger
    // mixed-radix index, so a descending sweep sees them first.
    for s in (0..states - 1).rev() {
        let mut rest = s;
        for lv in levels.iter_mut() {
            *lv = rest % radix;
            rest /= radix;
        }
        let mut p_self = 0.0;
        let mut acc = 0.0;
        // Enumerate joint increments of the members still short of the threshold.
        let active: Vec<usize> = (0..j).filter(|&k| levels[k] < threshold).collect();
        let mut choice = vec![0usize; active.len()];
        loop {
            let mut p = 1.0;
            let mut next = s;
            for (a, &k) in active.iter().enumerate() {
                let inc = choice[a];
                p *= pmfs[k][inc];
                let to = (levels[k] + inc).min(threshold);
                next = next - levels[k] * strides[k] + to * strides[k];
            }
            if p > 0.0 {
                if next == s {
                    p_self += p;
                } else {
                    acc += p * expect[next];
                }
            }
            // Advance the odometer.
            let mut a = 0;
            while a < active.len() {
                choice[a] += 1;
                if choice[a] < pmfs[active[a]].len() {
                    break;
                }
                choice[a] = 0;
                a += 1;
            }
            if a == active.len() {
                break;
            }
        }
        if p_self >= 1.0 {
            return Err(Error::config("member can never reach the threshold"));
        }
        expect[s] = (1.0 + acc) / (1.0 - p_self);
    }
    Ok(expect[0])
}

/// `lbar_oracle_exact` for `members` identical members.
pub fn lbar_oracle_iid(pmf: &[f64], threshold: usize, members: usize) -> Result<f64> {
    lbar_oracle_exact(&vec![pmf.to_vec(); members], threshold)
}

/// `P(T_j <= t)` for `t = 0, 1, ...` until the tail is below `tol`.
fn absorption_cdf(pmf: &[f64], threshold: usize, tol: f64) -> Vec<f64> {
    let mut dist = vec![0.0; threshold + 1];
    dist[0] = 1.0;
    let mut cdf = vec![if threshold == 0 { 1.0 } else { 0.0 }];
    while 1.0 - cdf.last().unwrap() > tol {
        dist = convolve_capped(&dist, pmf, threshold);
        cdf.push(dist[threshold]);
        if cdf.len() > 10_000_000 {
            break;
        }
    }
    cdf
}

/// Distribution of `min(X + Y, cap)` with `X ~ dist` and `Y ~ pmf`; mass at
/// `cap` stays put.
fn convolve_capped(dist: &[f64], pmf: &[f64], cap: usize) -> Vec<f64> {
    let mut out = vec![0.0; cap + 1];
    out[cap] = dist[cap];
    for (x, &px) in dist[..cap].iter().enumerate() {
        if px == 0.0 {
            continue;
        }
        for (y, &py) in pmf.iter().enumerate() {
            out[(x + y).min(cap)] += px * py;
        }
    }
    out
}

/// Mean session length from the product of independent member CDFs:
/// `E[max_j T_j] = sum_t (1 - prod_j P(T_j <= t))`.
pub fn lbar_from_marginals(pmfs: &[Vec<f64>], threshold: usize) -> f64 {
    let cdfs: Vec<Vec<f64>> = pmfs.iter().map(|p| absorption_cdf(p, threshold, 1e-15)).collect();
    let horizon = cdfs.iter().map(Vec::len).max().unwrap_or(0);
    (0..horizon)
        .map(|t| 1.0 - cdfs.iter().map(|c| *c.get(t).unwrap_or(&1.0)).product::<f64>())
        .sum()
}

/// `E[min(S_T, N)] / N`: share of a message a straggler gathers while the
/// covered members decode. `S_t` sums `t` draws from `straggler`, independent
/// of the session length `T`.
pub fn eta_oracle(covered: &[Vec<f64>], straggler: &[f64], threshold: usize) -> f64 {
    let cdfs: Vec<Vec<f64>> = covered.iter().map(|p| absorption_cdf(p, threshold, 1e-15)).collect();
    let horizon = cdfs.iter().map(Vec::len).max().unwrap_or(0);
    let cdf_at = |t: usize| cdfs.iter().map(|c| *c.get(t).unwrap_or(&1.0)).product::<f64>();
    let mut dist = vec![0.0; threshold + 1];
    dist[0] = 1.0;
    let mut prev = cdf_at(0);
    let mut acc = 0.0;
    for t in 1..=horizon {
        dist = convolve_capped(&dist, straggler, threshold);
        let cur = cdf_at(t);
        let mean: f64 = dist.iter().enumerate().map(|(x, p)| x as f64 * p).sum();
        acc += (cur - prev) * mean;
        prev = cur;
    }
    acc / threshold as f64
}

/// Per-slot MI distribution of a receiver at power `p` under a lattice model,
/// with the lattice unit in bits/slot. Index `k` is `k` units.
pub fn lattice_pmf(channel: &Channel, rx: Receiver, p: f64) -> Result<(Vec<f64>, f64)> {
    let MiModel::Lattice { step } = channel.mi_model() else {
        return Err(Error::config("lattice_pmf needs a lattice MI model"));
    };
    let levels = (channel.i_max() / step + 1e-9).floor() as usize;
    let var = channel.variance(rx);
    let tail: Vec<f64> = (0..=levels + 1)
        .map(|k| {
            if k == 0 {
                1.0
            } else if k > levels || p <= 0.0 {
                0.0
            } else {
                let r = ((k as f64 * step).exp2() - 1.0) / p;
                (-r / var).exp()
            }
        })
        .collect();
    let pmf = (0..=levels).map(|k| tail[k] - tail[k + 1]).collect();
    Ok((pmf, step * channel.symbols()))
}

/// Monte Carlo estimate of session statistics for one group.
#[derive(Clone, Debug, PartialEq)]
pub struct McEstimate {
    pub lbar: f64,
    pub lbar_stderr: f64,
    /// `eta` of every straggler, in the order given.
    pub eta: Vec<f64>,
}

/// Simulates `codes` multicast sessions of group `g` at `P_av` with
/// independent channel draws every slot.
pub fn lbar_monte_carlo<R: Rng + ?Sized>(
    channel: &Channel,
    group: usize,
    covered: &[usize],
    stragglers: &[usize],
    message_bits: f64,
    p: f64,
    codes: usize,
    rng: &mut R,
) -> McEstimate {
    let k = channel.symbols();
    let members: Vec<Receiver> = channel.group_members(group).collect();
    let sd: Vec<f64> = members.iter().map(|&rx| (0.5 * channel.variance(rx)).sqrt()).collect();
    let draw = |j: usize, rng: &mut R| {
        let re: f64 = rng.sample(rand_distr::StandardNormal);
        let im: f64 = rng.sample(rand_distr::StandardNormal);
        let gain = sd[j] * sd[j] * (re * re + im * im);
        channel.mi_model().evaluate(gain, p, channel.i_max()) * k
    };
    let (mut sum, mut sum2) = (0.0, 0.0);
    let mut collected = vec![0.0; stragglers.len()];
    let mut acc = vec![0.0; members.len()];
    for _ in 0..codes {
        acc.iter_mut().for_each(|a| *a = 0.0);
        let mut len = 0u64;
        loop {
            len += 1;
            for (j, a) in acc.iter_mut().enumerate() {
                *a += draw(j, rng);
            }
            if covered.iter().all(|&j| acc[j] >= message_bits) {
                break;
            }
        }
        sum += len as f64;
        sum2 += (len * len) as f64;
        for (c, &j) in collected.iter_mut().zip(stragglers) {
            *c += acc[j].min(message_bits);
        }
    }
    let n = codes as f64;
    let mean = sum / n;
    let var = (sum2 / n - mean * mean).max(0.0);
    McEstimate {
        lbar: mean,
        lbar_stderr: (var / n).sqrt(),
        eta: collected.iter().map(|c| c / (n * message_bits)).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_lengths() {
        // One unit = 1 bit; MI always 5, M = 40.
        let mut pmf = vec![0.0; 6];
        pmf[5] = 1.0;
        assert!((lbar_oracle_iid(&pmf, 40, 1).unwrap() - 8.0).abs() < 1e-12);
        assert!((lbar_oracle_iid(&pmf, 40, 3).unwrap() - 8.0).abs() < 1e-12);
        assert!((lbar_from_marginals(&[pmf.clone()], 40) - 8.0).abs() < 1e-12);
    }

    #[test]
    fn geometric_single_member() {
        // Gains the whole threshold w.p. q per slot: mean 1/q.
        let pmf = vec![0.75, 0.25];
        assert!((lbar_oracle_iid(&pmf, 1, 1).unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn routes_agree() {
        let mut two_point = vec![0.0; 6];
        two_point[2] = 0.5;
        two_point[5] = 0.5;
        let other = vec![0.1, 0.2, 0.3, 0.2, 0.1, 0.1];
        let pmfs = vec![two_point.clone(), other];
        let a = lbar_oracle_exact(&pmfs, 40).unwrap();
        let b = lbar_from_marginals(&pmfs, 40);
        assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }

    #[test]
    fn eta_extremes() {
        let mut five = vec![0.0; 6];
        five[5] = 1.0;
        assert!((eta_oracle(&[five.clone()], &five, 40) - 1.0).abs() < 1e-12);
        assert!(eta_oracle(&[five], &[1.0], 40).abs() < 1e-12);
    }

    #[test]
    fn overflow_is_reported() {
        let pmf = vec![0.5, 0.5];
        assert!(matches!(
            lbar_oracle_iid(&pmf, 40, 4),
            Err(Error::StateSpaceOverflow { .. })
        ));
    }
}
