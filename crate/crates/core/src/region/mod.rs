//! Throughput regions as linear programs over time-sharing variables.
//!
//! Variables are `alpha[m][i]`, the fraction of slots in CSI state `i` spent
//! on action `m`, plus the scale `t`. The LP maximises `t` such that
//! `t * direction` is supportable under the power budget.

mod oracle;
mod search;

use microlp::{ComparisonOp, LinearExpr, OptimizationDirection, Problem};
use serde::Serialize;

use crate::channel::{Channel, Receiver};
use crate::error::{Error, Result};
use crate::scheduler::{rate_loss_factor, PowerSet};

pub use oracle::{
    eta_oracle, lattice_pmf, lbar_from_marginals, lbar_monte_carlo, lbar_oracle_exact, lbar_oracle_iid,
    McEstimate, ORACLE_STATE_CAP,
};
pub use search::{empirical_boundary_search, Bracket};

/// How service rates enter the region.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RateModel {
    /// Rateless codes with the overshoot loss factor.
    NcRc,
    /// Infinite block length: no loss factor, multicast at the weakest
    /// member's ergodic rate.
    Genie,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StragglerRegion {
    pub member: usize,
    /// Share of each message a straggler gathers during multicast.
    pub eta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GroupRegion {
    pub message_bits: f64,
    /// Mean multicast session length over the covered members (slots).
    pub lbar: f64,
    /// Members served by repair flows; empty for plain multicast.
    pub stragglers: Vec<StragglerRegion>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegionSpec {
    pub unicast_bits: Vec<f64>,
    pub groups: Vec<GroupRegion>,
    /// Nonnegative demand per unicast flow, then per group.
    pub direction: Vec<f64>,
    pub model: RateModel,
    pub epsilon: f64,
    /// Largest joint CSI alphabet accepted.
    pub cap: usize,
}

/// One rate constraint `demand * t <= sum coef * alpha`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateRow {
    pub label: String,
    pub demand: f64,
    /// Dense `F x E` coefficients, already weighted by `pi_i`.
    pub coef: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegionProblem {
    pub actions: usize,
    pub states: usize,
    pub pi: Vec<f64>,
    /// Transmit power of every action.
    pub power: Vec<f64>,
    /// Flow served by every action.
    pub action_flow: Vec<usize>,
    pub rows: Vec<RateRow>,
    pub p_av: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegionSolution {
    pub lambda_star: f64,
    /// `alpha[m][i]`.
    pub alpha: Vec<Vec<f64>>,
    pub binding: Vec<String>,
    pub power_used: f64,
}

impl RegionSolution {
    /// Fraction of slots spent on each action.
    pub fn action_shares(&self, pi: &[f64]) -> Vec<f64> {
        self.alpha
            .iter()
            .map(|row| row.iter().zip(pi).map(|(a, p)| a * p).sum())
            .collect()
    }
}

/// Receivers whose reports form the joint CSI state: unicast users, then
/// stragglers.
pub fn region_reporters(channel: &Channel, spec: &RegionSpec) -> Vec<Receiver> {
    let mut v: Vec<Receiver> = channel.unicast_receivers().collect();
    for (g, group) in spec.groups.iter().enumerate() {
        v.extend(group.stragglers.iter().map(|s| Receiver::Member { group: g, member: s.member }));
    }
    v
}

/// Assembles the LP for the given flows.
pub fn build_region(channel: &Channel, power: &PowerSet, spec: &RegionSpec) -> Result<RegionProblem> {
    let u = spec.unicast_bits.len();
    let g_count = spec.groups.len();
    if u != channel.config().num_unicast() || g_count != channel.config().group_snr_db.len() {
        return Err(Error::config("region flows do not match the channel layout"));
    }
    if spec.direction.len() != u + g_count || spec.direction.iter().any(|d| !(*d >= 0.0)) {
        return Err(Error::config("direction needs one nonnegative entry per unicast flow and group"));
    }
    let reporters = region_reporters(channel, spec);
    let b = channel.bins();
    let states = (b as u128).checked_pow(reporters.len() as u32).unwrap_or(u128::MAX);
    if states > spec.cap as u128 {
        return Err(Error::AlphabetTooLarge { states, cap: spec.cap });
    }
    let states = states as usize;
    let options = power.options();
    let o = options.len();
    let stragglers: usize = spec.groups.iter().map(|g| g.stragglers.len()).sum();
    let actions = (u + stragglers) * o + g_count;
    let pi = vec![1.0 / states as f64; states];
    let k = channel.symbols();
    let scale = 1.0 / (1.0 + spec.epsilon);
    let i_max_k = channel.i_max() * k * scale;

    // Per-reporter, per-bin expected MI (bits/slot) for every option.
    let expected: Vec<Vec<Vec<f64>>> = reporters
        .iter()
        .map(|&rx| {
            (0..b)
                .map(|bin| options.iter().map(|&p| channel.bin_expected_mi(rx, bin, p) * k * scale).collect())
                .collect()
        })
        .collect();
    let digit = |state: usize, r: usize| (state / b.pow(r as u32)) % b;

    let mut power_of = Vec::with_capacity(actions);
    let mut action_flow = Vec::with_capacity(actions);
    for flow in 0..u {
        power_of.extend(&options);
        action_flow.extend(std::iter::repeat_n(flow, o));
    }
    for g in 0..g_count {
        power_of.push(power.p_av);
        action_flow.push(u + g);
    }
    let mut flow = u + g_count;
    for group in &spec.groups {
        for _ in &group.stragglers {
            power_of.extend(&options);
            action_flow.extend(std::iter::repeat_n(flow, o));
            flow += 1;
        }
    }

    let idx = |m: usize, i: usize| m * states + i;
    let mut rows = Vec::new();
    for (uu, &bits) in spec.unicast_bits.iter().enumerate() {
        let factor = match spec.model {
            RateModel::NcRc => rate_loss_factor(bits, i_max_k),
            RateModel::Genie => 1.0,
        };
        let mut coef = vec![0.0; actions * states];
        for lvl in 0..o {
            let m = uu * o + lvl;
            for i in 0..states {
                coef[idx(m, i)] = expected[uu][digit(i, uu)][lvl] * factor * pi[i];
            }
        }
        rows.push(RateRow {
            label: format!("unicast {uu}"),
            demand: spec.direction[uu],
            coef,
        });
    }
    let mut reporter = u;
    let mut repair_action = (u * o) + g_count;
    for (g, group) in spec.groups.iter().enumerate() {
        let m_g = u * o + g;
        let rate = match spec.model {
            RateModel::NcRc => {
                if !(group.lbar >= 1.0) {
                    return Err(Error::config(format!("group {g}: mean code length must be at least one slot")));
                }
                group.message_bits / group.lbar
            }
            RateModel::Genie => {
                channel
                    .group_members(g)
                    .map(|rx| channel.ergodic_mi(rx, power.p_av))
                    .fold(f64::INFINITY, f64::min)
                    * k
                    * scale
            }
        };
        let mut coef = vec![0.0; actions * states];
        for i in 0..states {
            coef[idx(m_g, i)] = rate * pi[i];
        }
        rows.push(RateRow {
            label: format!("group {g}"),
            demand: spec.direction[u + g],
            coef,
        });
        for s in &group.stragglers {
            if !(0.0..=1.0).contains(&s.eta) {
                return Err(Error::config("eta must lie in [0, 1]"));
            }
            let residual = (1.0 - s.eta) * group.message_bits;
            let factor = if residual > 0.0 { rate_loss_factor(residual, i_max_k) } else { 0.0 };
            let mut coef = vec![0.0; actions * states];
            for lvl in 0..o {
                let m = repair_action + lvl;
                for i in 0..states {
                    coef[idx(m, i)] = expected[reporter][digit(i, reporter)][lvl] * factor * pi[i];
                }
            }
            for i in 0..states {
                coef[idx(m_g, i)] = s.eta * group.message_bits / group.lbar * pi[i];
            }
            rows.push(RateRow {
                label: format!("group {g} member {}", s.member),
                demand: spec.direction[u + g],
                coef,
            });
            reporter += 1;
            repair_action += o;
        }
    }
    Ok(RegionProblem {
        actions,
        states,
        pi,
        power: power_of,
        action_flow,
        rows,
        p_av: power.p_av,
    })
}

/// Solves `max t` over the region.
///
/// Returns `lambda_star = 0` if even the cheapest action exceeds the budget.
pub fn solve_boundary(problem: &RegionProblem) -> Result<RegionSolution> {
    let (f, e) = (problem.actions, problem.states);
    let mut lp = Problem::new(OptimizationDirection::Maximize);
    let t = lp.add_var(1.0, (0.0, f64::INFINITY));
    let alpha: Vec<_> = (0..f * e).map(|_| lp.add_var(0.0, (0.0, 1.0))).collect();
    let mut any_demand = false;
    for row in &problem.rows {
        if row.demand <= 0.0 {
            continue;
        }
        any_demand = true;
        let mut expr = LinearExpr::empty();
        expr.add(t, row.demand);
        for (j, &c) in row.coef.iter().enumerate() {
            if c != 0.0 {
                expr.add(alpha[j], -c);
            }
        }
        lp.add_constraint(expr, ComparisonOp::Le, 0.0);
    }
    if !any_demand {
        return Err(Error::config("direction has no positive entry"));
    }
    let power: LinearExpr = (0..f)
        .flat_map(|m| (0..e).map(move |i| (m, i)))
        .filter(|&(m, _)| problem.power[m] != 0.0)
        .map(|(m, i)| (alpha[m * e + i], problem.power[m] * problem.pi[i]))
        .collect();
    lp.add_constraint(power, ComparisonOp::Le, problem.p_av);
    for i in 0..e {
        let simplex: LinearExpr = (0..f).map(|m| (alpha[m * e + i], 1.0)).collect();
        lp.add_constraint(simplex, ComparisonOp::Eq, 1.0);
    }
    let solution = match lp.solve() {
        Ok(outcome) => outcome
            .into_solution()
            .map_err(|_| Error::Solver("LP solve interrupted".into()))?,
        Err(microlp::Error::Infeasible) => {
            return Ok(RegionSolution {
                lambda_star: 0.0,
                alpha: vec![vec![0.0; e]; f],
                binding: vec!["power".into()],
                power_used: 0.0,
            })
        }
        Err(err) => return Err(Error::Solver(err.to_string())),
    };
    let mut a: Vec<Vec<f64>> = (0..f)
        .map(|m| (0..e).map(|i| solution.var_value(alpha[m * e + i]).max(0.0)).collect())
        .collect();
    for i in 0..e {
        let s: f64 = (0..f).map(|m| a[m][i]).sum();
        for row in a.iter_mut() {
            row[i] /= s;
        }
    }
    let supplied: Vec<f64> = problem
        .rows
        .iter()
        .map(|row| {
            row.coef
                .iter()
                .enumerate()
                .map(|(j, c)| c * a[j / e][j % e])
                .sum::<f64>()
        })
        .collect();
    let lambda_star = problem
        .rows
        .iter()
        .zip(&supplied)
        .filter(|(r, _)| r.demand > 0.0)
        .map(|(r, s)| s / r.demand)
        .fold(f64::INFINITY, f64::min)
        .min(solution.objective());
    let power_used: f64 = (0..f)
        .map(|m| problem.power[m] * (0..e).map(|i| a[m][i] * problem.pi[i]).sum::<f64>())
        .sum();
    let tol = 1e-7 * (1.0 + lambda_star.abs());
    let mut binding: Vec<String> = problem
        .rows
        .iter()
        .zip(&supplied)
        .filter(|(r, s)| r.demand > 0.0 && (*s - r.demand * lambda_star).abs() <= tol * r.demand.max(1.0))
        .map(|(r, _)| r.label.clone())
        .collect();
    if (power_used - problem.p_av).abs() <= 1e-7 * (1.0 + problem.p_av) {
        binding.push("power".into());
    }
    Ok(RegionSolution {
        lambda_star,
        alpha: a,
        binding,
        power_used,
    })
}

/// `lambda_star` of the genie bound for plain multicast.
pub fn genie_region_rate(channel: &Channel, power: &PowerSet, unicast_bits: &[f64], group_bits: &[f64], direction: &[f64], cap: usize) -> Result<f64> {
    let spec = RegionSpec {
        unicast_bits: unicast_bits.to_vec(),
        groups: group_bits
            .iter()
            .map(|&m| GroupRegion {
                message_bits: m,
                lbar: 1.0,
                stragglers: Vec::new(),
            })
            .collect(),
        direction: direction.to_vec(),
        model: RateModel::Genie,
        epsilon: 0.0,
        cap,
    };
    Ok(solve_boundary(&build_region(channel, power, &spec)?)?.lambda_star)
}
