//! Slot-level simulation engine.
//!
//! Each slot runs in a fixed order:
//! 1. draw true channels and reports,
//! 2. decide from queue state and quantized reports only,
//! 3. transmit and accumulate the realised MI,
//! 4. handle ACKs (and multicast session settlement),
//! 5. serve data queues, then add arrivals,
//! 6. update the power queue.

mod metrics;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{Channel, ChannelConfig, ChannelDraw, ExpectationTable, GoodputTable, Receiver};
use crate::error::{Error, Result};
use crate::queueing::{ArrivalMode, ArrivalProcess, DataQueue, PowerQueue};
use crate::rateless::{mean_code_length, MulticastReception, UnicastReception};
use crate::repair::{estimate_partition, PartitionSpec, RepairFlow, Settlement};
use crate::scheduler::{multicast_fixed_rate, multicast_rate, ControlAction, FixedRateView, FlowView, NcRc, PowerSet};

pub use metrics::{
    classify_stability, ls_slope, lyapunov_value, GroupStats, RunMetrics, StabilityRule, Verdict, MIN_TRACE,
};

/// Default cap on the joint CSI alphabet, shared with the region solver.
pub const ALPHABET_CAP: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    NcRc,
    FixedRate,
    UnicastOnly,
    NcRcCombined,
}

impl Policy {
    pub fn as_str(&self) -> &'static str {
        match self {
            Policy::NcRc => "nc_rc",
            Policy::FixedRate => "fixed_rate",
            Policy::UnicastOnly => "unicast_only",
            Policy::NcRcCombined => "nc_rc_combined",
        }
    }
}

impl std::str::FromStr for Policy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nc_rc" => Ok(Policy::NcRc),
            "fixed_rate" => Ok(Policy::FixedRate),
            "unicast_only" => Ok(Policy::UnicastOnly),
            "nc_rc_combined" => Ok(Policy::NcRcCombined),
            other => Err(Error::config(format!("unknown policy `{other}`"))),
        }
    }
}

fn forty() -> f64 {
    40.0
}

fn repair_warmup_default() -> u64 {
    200
}

fn alphabet_cap_default() -> usize {
    ALPHABET_CAP
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnicastFlow {
    /// Mean arrivals (bits/slot).
    pub lambda: f64,
    #[serde(default = "forty")]
    pub message_bits: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupFlow {
    pub lambda: f64,
    #[serde(default = "forty")]
    pub message_bits: f64,
    /// `l(g)`: members covered by multicast under combined delivery.
    #[serde(default)]
    pub covered: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub channel: ChannelConfig,
    pub power: PowerSet,
    #[serde(default)]
    pub unicast: Vec<UnicastFlow>,
    #[serde(default)]
    pub groups: Vec<GroupFlow>,
    pub policy: Policy,
    pub horizon: u64,
    /// Defaults to `horizon / 10`.
    #[serde(default)]
    pub warmup: Option<u64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub epsilon: f64,
    #[serde(default)]
    pub arrivals: ArrivalMode,
    /// Multicast sessions observed before the partition is fixed.
    #[serde(default = "repair_warmup_default")]
    pub repair_warmup_sessions: u64,
    #[serde(default)]
    pub check_invariants: bool,
    #[serde(default)]
    pub stability: StabilityRule,
    #[serde(default = "alphabet_cap_default")]
    pub alphabet_cap: usize,
}

impl SimConfig {
    pub fn warmup_slots(&self) -> u64 {
        self.warmup.unwrap_or(self.horizon / 10)
    }

    pub fn validate(&self) -> Result<()> {
        self.channel.validate()?;
        self.power.validate()?;
        if self.unicast.len() != self.channel.num_unicast() {
            return Err(Error::config(format!(
                "{} unicast flows but {} unicast SNRs",
                self.unicast.len(),
                self.channel.num_unicast()
            )));
        }
        if self.groups.len() != self.channel.group_snr_db.len() {
            return Err(Error::config(format!(
                "{} groups but {} group SNR lists",
                self.groups.len(),
                self.channel.group_snr_db.len()
            )));
        }
        if self.horizon <= self.warmup_slots() {
            return Err(Error::config("horizon must exceed warmup"));
        }
        let lambdas = self.unicast.iter().map(|f| (f.lambda, f.message_bits));
        let lambdas = lambdas.chain(self.groups.iter().map(|g| (g.lambda, g.message_bits)));
        for (lambda, m) in lambdas {
            if !(lambda >= 0.0 && lambda.is_finite()) {
                return Err(Error::config("arrival rates must be finite and nonnegative"));
            }
            if !(m > 0.0 && m.is_finite()) {
                return Err(Error::config("message sizes must be positive"));
            }
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::config("epsilon must be nonnegative"));
        }
        for (g, flow) in self.groups.iter().enumerate() {
            if let Some(l) = flow.covered {
                let j = self.channel.group_snr_db[g].len();
                if l == 0 || l > j {
                    return Err(Error::config(format!("group {g}: covered count {l} outside 1..={j}")));
                }
            }
        }
        Ok(())
    }

    /// The same traffic served entirely by unicast: every group member gets
    /// its own flow carrying a copy of the group's arrivals.
    pub fn as_unicast_only(&self) -> SimConfig {
        let mut cfg = self.clone();
        for (g, flow) in self.groups.iter().enumerate() {
            for &snr in &self.channel.group_snr_db[g] {
                cfg.channel.unicast_snr_db.push(snr);
                cfg.unicast.push(UnicastFlow {
                    lambda: flow.lambda,
                    message_bits: flow.message_bits,
                });
            }
        }
        cfg.channel.group_snr_db.clear();
        cfg.groups.clear();
        cfg.policy = Policy::NcRc;
        cfg
    }

    pub fn mean_quantum(&self) -> f64 {
        let all: Vec<f64> = self
            .unicast
            .iter()
            .map(|f| f.message_bits)
            .chain(self.groups.iter().map(|g| g.message_bits))
            .collect();
        if all.is_empty() {
            1.0
        } else {
            all.iter().sum::<f64>() / all.len() as f64
        }
    }
}

/// Arrival rates in the shape of the original config.
#[derive(Clone, Debug, PartialEq)]
pub struct Loads {
    pub unicast: Vec<f64>,
    pub groups: Vec<f64>,
}

impl Loads {
    pub fn of(cfg: &SimConfig) -> Self {
        Loads {
            unicast: cfg.unicast.iter().map(|f| f.lambda).collect(),
            groups: cfg.groups.iter().map(|g| g.lambda).collect(),
        }
    }

    /// `lambda_u = lambda_g = lambda` for every flow.
    pub fn uniform(cfg: &SimConfig, lambda: f64) -> Self {
        Loads {
            unicast: vec![lambda; cfg.unicast.len()],
            groups: vec![lambda; cfg.groups.len()],
        }
    }

    pub fn scaled(&self, t: f64) -> Self {
        Loads {
            unicast: self.unicast.iter().map(|x| x * t).collect(),
            groups: self.groups.iter().map(|x| x * t).collect(),
        }
    }
}

/// A prepared simulation: validated config, channel and lookup tables.
#[derive(Clone, Debug)]
pub struct Engine {
    original: SimConfig,
    cfg: SimConfig,
    channel: Channel,
    policy: NcRc,
    options: Vec<f64>,
    expectation: Option<ExpectationTable>,
    goodput: Option<GoodputTable>,
    group_rates: Vec<f64>,
}

/// Every report-bearing receiver that may need a table entry.
fn table_receivers(channel: &Channel, combined: bool) -> Vec<Receiver> {
    let mut rx: Vec<Receiver> = channel.unicast_receivers().collect();
    if combined {
        for g in 0..channel.config().group_snr_db.len() {
            rx.extend(channel.group_members(g));
        }
    }
    rx
}

impl Engine {
    pub fn new(config: &SimConfig) -> Result<Self> {
        config.validate()?;
        let cfg = match config.policy {
            Policy::UnicastOnly => config.as_unicast_only(),
            _ => config.clone(),
        };
        let channel = Channel::new(cfg.channel.clone(), cfg.power.p_av)?;
        let policy = NcRc::new(&cfg.power, channel.i_max(), channel.symbols(), cfg.epsilon);
        let options = cfg.power.options();
        let combined = cfg.policy == Policy::NcRcCombined;
        let receivers = table_receivers(&channel, combined);
        let (expectation, goodput, group_rates) = if cfg.policy == Policy::FixedRate {
            let rates = (0..cfg.groups.len())
                .map(|g| multicast_fixed_rate(&channel, g, cfg.power.p_av).rate)
                .collect();
            (None, Some(GoodputTable::build(&channel, &receivers, &options)), rates)
        } else {
            (Some(ExpectationTable::build(&channel, &receivers, &options)), None, Vec::new())
        };
        Ok(Engine {
            original: config.clone(),
            cfg,
            channel,
            policy,
            options,
            expectation,
            goodput,
            group_rates,
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.original
    }

    pub fn channel(&self) -> &Channel {
        &self.channel
    }

    /// Code rate used for each group under the fixed-rate policy (bits/slot).
    pub fn group_fixed_rates(&self) -> &[f64] {
        &self.group_rates
    }

    pub fn run(&self) -> Result<RunMetrics> {
        self.run_with(self.original.seed, &Loads::of(&self.original))
    }

    /// Runs with another seed and arrival rates.
    pub fn run_with(&self, seed: u64, loads: &Loads) -> Result<RunMetrics> {
        self.run_logged(seed, loads, &mut |_| {})
    }

    /// Like [`Engine::run_with`], passing every settlement to `log`.
    pub fn run_logged(&self, seed: u64, loads: &Loads, log: &mut dyn FnMut(&Settlement)) -> Result<RunMetrics> {
        if loads.unicast.len() != self.original.unicast.len() || loads.groups.len() != self.original.groups.len() {
            return Err(Error::config("load vector does not match the flow layout"));
        }
        let unicast_loads: Vec<f64> = match self.original.policy {
            Policy::UnicastOnly => {
                let mut v = loads.unicast.clone();
                for (g, &l) in loads.groups.iter().enumerate() {
                    v.extend(std::iter::repeat_n(l, self.original.channel.group_snr_db[g].len()));
                }
                v
            }
            _ => loads.unicast.clone(),
        };
        let group_loads = match self.original.policy {
            Policy::UnicastOnly => Vec::new(),
            _ => loads.groups.clone(),
        };
        Run::new(self, seed, &unicast_loads, &group_loads).execute(log)
    }
}

/// Mutable state of a single run.
struct Run<'e> {
    e: &'e Engine,
    seed: u64,
    channel_rng: ChaCha8Rng,
    arrival_rng: ChaCha8Rng,
    unicast_rx: Vec<UnicastReception>,
    unicast_q: Vec<DataQueue>,
    unicast_arr: Vec<ArrivalProcess>,
    group_rx: Vec<MulticastReception>,
    group_q: Vec<DataQueue>,
    group_arr: Vec<ArrivalProcess>,
    /// Repair flows per group, in straggler order; empty until activation.
    repair: Vec<Vec<RepairFlow>>,
    /// Repair slots reserved per group (`J - l`).
    repair_slots: Vec<usize>,
    partitions: Vec<Option<PartitionSpec>>,
    z: PowerQueue,
    prev: Option<ChannelDraw>,
}

#[derive(Clone, Copy)]
enum Kind {
    Unicast(usize),
    Group(usize),
    Repair(usize, usize),
}

fn invariant(slot: u64, detail: impl Into<String>) -> Error {
    Error::Invariant {
        slot,
        detail: detail.into(),
    }
}

impl<'e> Run<'e> {
    fn new(e: &'e Engine, seed: u64, unicast_loads: &[f64], group_loads: &[f64]) -> Self {
        let cfg = &e.cfg;
        let channel_rng = ChaCha8Rng::seed_from_u64(seed);
        let mut arrival_rng = ChaCha8Rng::seed_from_u64(seed);
        arrival_rng.set_stream(1);
        let combined = cfg.policy == Policy::NcRcCombined;
        let repair_slots = cfg
            .groups
            .iter()
            .enumerate()
            .map(|(g, f)| match (combined, f.covered) {
                (true, Some(l)) => cfg.channel.group_snr_db[g].len() - l,
                _ => 0,
            })
            .collect();
        Run {
            e,
            seed,
            channel_rng,
            arrival_rng,
            unicast_rx: cfg.unicast.iter().map(|f| UnicastReception::new(f.message_bits, cfg.epsilon)).collect(),
            unicast_q: cfg.unicast.iter().map(|_| DataQueue::new(0.0)).collect(),
            unicast_arr: unicast_loads.iter().map(|&l| ArrivalProcess::new(l, cfg.arrivals)).collect(),
            group_rx: cfg
                .groups
                .iter()
                .enumerate()
                .map(|(g, f)| {
                    let eps = if cfg.policy == Policy::FixedRate { 0.0 } else { cfg.epsilon };
                    MulticastReception::new(cfg.channel.group_snr_db[g].len(), f.message_bits, eps)
                })
                .collect(),
            group_q: cfg.groups.iter().map(|_| DataQueue::new(0.0)).collect(),
            group_arr: group_loads.iter().map(|&l| ArrivalProcess::new(l, cfg.arrivals)).collect(),
            repair: cfg.groups.iter().map(|_| Vec::new()).collect(),
            repair_slots,
            partitions: cfg.groups.iter().map(|_| None).collect(),
            z: PowerQueue::new(cfg.power.p_av),
            prev: None,
        }
    }

    fn flow_kinds(&self) -> Vec<Kind> {
        let mut k: Vec<Kind> = (0..self.unicast_rx.len()).map(Kind::Unicast).collect();
        k.extend((0..self.group_rx.len()).map(Kind::Group));
        for (g, &n) in self.repair_slots.iter().enumerate() {
            k.extend((0..n).map(|r| Kind::Repair(g, r)));
        }
        k
    }

    fn backlogs(&self, kinds: &[Kind]) -> Vec<f64> {
        kinds
            .iter()
            .map(|k| match *k {
                Kind::Unicast(u) => self.unicast_q[u].backlog,
                Kind::Group(g) => self.group_q[g].backlog,
                Kind::Repair(g, r) => self.repair[g].get(r).map_or(0.0, |f| f.queue.backlog),
            })
            .collect()
    }

    fn straggler_rx(&self, g: usize, r: usize) -> Option<Receiver> {
        self.repair[g].get(r).map(|f| Receiver::Member { group: g, member: f.member })
    }

    /// Reporting receivers whose bins form the joint CSI state.
    fn reporters(&self) -> Vec<Receiver> {
        let mut v: Vec<Receiver> = self.e.channel.unicast_receivers().collect();
        for (g, flows) in self.repair.iter().enumerate() {
            v.extend(flows.iter().map(|f| Receiver::Member { group: g, member: f.member }));
        }
        v
    }

    fn decide(&self, kinds: &[Kind], draw: &ChannelDraw, scale: f64) -> (ControlAction, f64) {
        let e = self.e;
        let ch = &e.channel;
        let z = self.z.z * scale;
        if let Some(table) = &e.goodput {
            let views: Vec<FixedRateView> = kinds
                .iter()
                .map(|k| match *k {
                    Kind::Unicast(u) => {
                        let rx = Receiver::Unicast(u);
                        FixedRateView::Unicast {
                            backlog: self.unicast_q[u].backlog * scale,
                            choices: table.get(rx, ch.bin_of(rx, draw.unicast[u].hhat)),
                        }
                    }
                    Kind::Group(g) => FixedRateView::Multicast {
                        backlog: self.group_q[g].backlog * scale,
                        code_index: self.group_rx[g].code_index(),
                        sum_lengths: self.group_rx[g].total_length,
                        message_bits: self.group_rx[g].message_bits,
                    },
                    Kind::Repair(..) => FixedRateView::Inactive,
                })
                .collect();
            return e.policy.fixed_rate_decide(z, &views, &e.group_rates);
        }
        let table = e.expectation.as_ref().expect("expectation table");
        let views: Vec<FlowView> = kinds
            .iter()
            .map(|k| match *k {
                Kind::Unicast(u) => {
                    let rx = Receiver::Unicast(u);
                    FlowView::Unicast {
                        backlog: self.unicast_q[u].backlog * scale,
                        expected_mi: table.get(rx, ch.bin_of(rx, draw.unicast[u].hhat)),
                        message_bits: self.unicast_rx[u].message_bits,
                    }
                }
                Kind::Group(g) => FlowView::Multicast {
                    backlog: self.group_q[g].backlog * scale,
                    code_index: self.group_rx[g].code_index(),
                    sum_lengths: self.group_rx[g].total_length,
                    message_bits: self.group_rx[g].message_bits,
                },
                Kind::Repair(g, r) => match (self.repair[g].get(r), self.straggler_rx(g, r)) {
                    (Some(flow), Some(rx)) if flow.head().is_some() => FlowView::Unicast {
                        backlog: flow.queue.backlog * scale,
                        expected_mi: table.get(rx, ch.bin_of(rx, draw.gains(rx).hhat)),
                        message_bits: flow.head().unwrap(),
                    },
                    _ => FlowView::Inactive,
                },
            })
            .collect();
        (e.policy.decide(z, &views), 0.0)
    }

    fn execute(mut self, log: &mut dyn FnMut(&Settlement)) -> Result<RunMetrics> {
        let e = self.e;
        let cfg = &e.cfg;
        let ch = &e.channel;
        let k_sym = ch.symbols();
        let horizon = cfg.horizon;
        let warmup = cfg.warmup_slots();
        let window = (horizon - warmup) as f64;
        let check = cfg.check_invariants;
        let combined = cfg.policy == Policy::NcRcCombined;
        let kinds = self.flow_kinds();
        let n_flows = kinds.len();
        let o = e.options.len();
        let unicast_like = kinds.iter().filter(|k| !matches!(k, Kind::Group(_))).count();
        let f_actions = unicast_like * o + self.group_rx.len();

        let mut queue_sum = vec![0.0; n_flows];
        let mut delivered = vec![0.0; n_flows];
        let mut power_sum = 0.0;
        let mut trace = Vec::with_capacity((horizon - warmup) as usize);
        let lyap_every = (horizon / 1000).max(1);
        let mut lyapunov = Vec::new();
        let mut counts: Option<Vec<Vec<u64>>> = None;
        let mut counts_ready = !combined || self.repair_slots.iter().all(|&n| n == 0);
        let mut reporters = self.reporters();

        for slot in 0..horizon {
            let measuring = slot >= warmup;
            let draw = e.channel.sample_slot(&mut self.channel_rng, self.prev.as_ref());

            // Decision.
            let (action, code_rate) = self.decide(&kinds, &draw, 1.0);
            if check {
                let (twin, _) = self.decide(&kinds, &draw, 2.0);
                if twin.flow != action.flow || twin.power != action.power {
                    return Err(invariant(slot, "decision changed under common scaling of Q and Z"));
                }
            }
            if counts_ready && counts.is_none() {
                if let Some(states) = ch.alphabet_size(reporters.len()).filter(|&s| s <= cfg.alphabet_cap) {
                    counts = Some(vec![vec![0; f_actions + 1]; states]);
                }
            }
            if let Some(c) = counts.as_mut() {
                let state = ch.quantize_csi(&draw, &reporters);
                c[state][action.index.unwrap_or(f_actions)] += 1;
            }

            // Transmission and reception.
            let mut service = vec![0.0; n_flows];
            let mut settled: Vec<(usize, u64, Vec<f64>)> = Vec::new();
            if action.transmits() {
                let p = action.power;
                match kinds[action.flow] {
                    Kind::Unicast(u) => {
                        let mi = ch.mi(draw.unicast[u].h, p) * k_sym;
                        if e.goodput.is_some() {
                            if mi >= code_rate {
                                service[action.flow] = code_rate;
                            }
                        } else if self.unicast_rx[u].step(true, mi) {
                            service[action.flow] = self.unicast_rx[u].message_bits;
                        }
                    }
                    Kind::Group(g) => {
                        let mis: Vec<f64> = draw.members[g]
                            .iter()
                            .map(|gain| {
                                let mi = ch.mi(gain.h, p) * k_sym;
                                if e.goodput.is_some() {
                                    if mi >= code_rate {
                                        code_rate
                                    } else {
                                        0.0
                                    }
                                } else {
                                    mi
                                }
                            })
                            .collect();
                        if let Some(end) = self.group_rx[g].step(true, &mis) {
                            service[action.flow] = self.group_rx[g].message_bits;
                            if check {
                                let rx = &self.group_rx[g];
                                let max_tracked = (0..rx.tracked.len())
                                    .filter(|&j| rx.tracked[j])
                                    .filter_map(|j| rx.member_lengths[j].last().copied())
                                    .max();
                                if max_tracked != Some(end.length) {
                                    return Err(invariant(slot, format!("group {g}: L_g is not the max over members")));
                                }
                            }
                            settled.push((g, self.group_rx[g].completed, end.accumulated));
                        }
                    }
                    Kind::Repair(..) => {}
                }
            }

            for (g, session, registers) in settled {
                for flow in self.repair[g].iter_mut() {
                    let s = flow.settle(session, registers[flow.member]);
                    if check && (s.collected + s.residual - flow.message_bits).abs() > 1e-12 * flow.message_bits {
                        return Err(invariant(slot, "settlement mass balance broken"));
                    }
                    log(&s);
                }
                if combined && self.partitions[g].is_none() && self.repair_slots[g] > 0 {
                    self.maybe_activate(g)?;
                    if self.partitions[g].is_some() {
                        reporters = self.reporters();
                        counts_ready = self.partitions.iter().zip(&self.repair_slots).all(|(p, &n)| n == 0 || p.is_some());
                    }
                }
            }

            // Data queues: service, then arrivals.
            for (idx, kind) in kinds.iter().enumerate() {
                let out = match *kind {
                    Kind::Unicast(u) => {
                        let a = self.unicast_arr[u].draw(&mut self.arrival_rng);
                        self.unicast_q[u].step(service[idx], a)
                    }
                    Kind::Group(g) => {
                        let a = self.group_arr[g].draw(&mut self.arrival_rng);
                        for flow in self.repair[g].iter_mut() {
                            flow.queue.add(a);
                        }
                        self.group_q[g].step(service[idx], a)
                    }
                    Kind::Repair(g, r) => {
                        let scheduled = action.transmits() && action.flow == idx;
                        match self.repair[g].get_mut(r) {
                            Some(flow) if scheduled => {
                                let rx = Receiver::Member { group: g, member: flow.member };
                                let mi = ch.mi(draw.gains(rx).h, action.power) * k_sym;
                                flow.step(true, mi, 0.0)
                            }
                            _ => 0.0,
                        }
                    }
                };
                if measuring {
                    delivered[idx] += out;
                }
            }

            // Power queue.
            let z_before = self.z.z;
            self.z.step(action.power);
            if check {
                let expect = (z_before - cfg.power.p_av).max(0.0) + action.power;
                if self.z.z != expect {
                    return Err(invariant(slot, "power queue recursion"));
                }
                self.check_slot(slot)?;
            }

            let backlogs = self.backlogs(&kinds);
            if measuring {
                for (s, b) in queue_sum.iter_mut().zip(&backlogs) {
                    *s += b;
                }
                trace.push(backlogs.iter().sum());
                power_sum += action.power;
            }
            if slot % lyap_every == 0 {
                lyapunov.push(lyapunov_value(&backlogs, self.z.z));
            }
            self.prev = Some(draw);
        }

        if !self.z.rate_bound_holds() {
            return Err(invariant(horizon, "time-average power exceeds P_av + Z(T)/T"));
        }
        let avg_queue: Vec<f64> = queue_sum.iter().map(|s| s / window).collect();
        let throughput: Vec<f64> = delivered.iter().map(|d| d / window).collect();
        let (verdict, slope) = match classify_stability(&trace, cfg.mean_quantum(), cfg.stability) {
            Ok(v) => v,
            Err(Error::TraceTooShort { .. }) => (Verdict::Inconclusive, ls_slope(&trace)),
            Err(err) => return Err(err),
        };
        let groups = self
            .group_rx
            .iter()
            .enumerate()
            .map(|(g, rx)| GroupStats {
                completed: rx.completed,
                mean_code_length: mean_code_length(&rx.lengths).ok(),
                rate_estimate: multicast_rate(rx.code_index(), rx.total_length, rx.message_bits, ch.i_max() * k_sym),
                partition: self.partitions[g].clone(),
                eta: self.repair[g].iter().map(RepairFlow::eta).collect(),
            })
            .collect();
        Ok(RunMetrics {
            seed: self.seed,
            slots: horizon,
            warmup,
            total_avg_queue: avg_queue.iter().sum(),
            avg_queue,
            total_throughput: throughput.iter().sum(),
            throughput,
            avg_power: power_sum / window,
            run_avg_power: self.z.spent / horizon as f64,
            final_z: self.z.z,
            verdict,
            slope,
            lyapunov,
            groups,
            action_counts: counts,
            queue_trace: trace,
        })
    }

    /// Fixes the partition of group `g` once enough sessions have completed.
    fn maybe_activate(&mut self, g: usize) -> Result<()> {
        let cfg = &self.e.cfg;
        let rx = &self.group_rx[g];
        if rx.completed < cfg.repair_warmup_sessions {
            return Ok(());
        }
        let l = cfg.groups[g].covered.expect("repair slots imply a covered count");
        // Members that never decoded alone rank last.
        let histories: Vec<Vec<u64>> = rx
            .member_lengths
            .iter()
            .map(|h| if h.is_empty() { vec![u64::MAX / 4] } else { h.clone() })
            .collect();
        let spec = estimate_partition(&histories, rx.message_bits, l)?;
        let backlog = self.group_q[g].backlog;
        self.repair[g] = spec
            .stragglers()
            .iter()
            .map(|&j| RepairFlow::new(g, j, rx.message_bits, cfg.epsilon, backlog))
            .collect();
        self.group_rx[g].set_tracked(spec.covered_set());
        self.partitions[g] = Some(spec);
        Ok(())
    }

    fn check_slot(&self, slot: u64) -> Result<()> {
        for (u, r) in self.unicast_rx.iter().enumerate() {
            if r.accumulated >= r.threshold() {
                return Err(invariant(slot, format!("unicast {u}: register reached the decode threshold")));
            }
        }
        let queues = self
            .unicast_q
            .iter()
            .chain(&self.group_q)
            .chain(self.repair.iter().flatten().map(|f| &f.queue));
        if queues.clone().any(|q| !q.identity_holds() || q.backlog < 0.0) {
            return Err(invariant(slot, "queue identity Q = Q(0) + A - D"));
        }
        for (g, r) in self.group_rx.iter().enumerate() {
            let open = r.decoded.iter().zip(&r.accumulated).any(|(&d, &a)| !d && a >= r.threshold());
            if open {
                return Err(invariant(slot, format!("group {g}: undecoded register reached the threshold")));
            }
            if r.completed > slot + 1 {
                return Err(invariant(slot, format!("group {g}: more codes than slots")));
            }
        }
        for f in self.repair.iter().flatten() {
            if let Some(m) = f.head() {
                if f.accumulated >= m * (1.0 + f.epsilon) {
                    return Err(invariant(slot, "repair register reached the decode threshold"));
                }
            }
        }
        if self.repair.iter().flatten().any(|f| !f.backlog_covers_pending()) {
            return Err(invariant(slot, "repair backlog below pending residuals"));
        }
        Ok(())
    }
}
