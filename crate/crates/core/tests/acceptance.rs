//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary so every line is printed even when an earlier
//! criterion fails. Exits nonzero if any criterion fails.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use ncrc_core::channel::{Channel, ChannelConfig, MiModel, Receiver};
use ncrc_core::region::{
    build_region, empirical_boundary_search, lattice_pmf, lbar_monte_carlo, lbar_oracle_exact, solve_boundary,
    GroupRegion, RateModel, RegionSpec, StragglerRegion,
};
use ncrc_core::scenario::{preset, render, replication_seed, run_scenario, symmetric_boundary, Format, ScenarioName};
use ncrc_core::scheduler::{rate_loss_factor, NcRc, PowerSet};
use ncrc_core::sim::{Engine, GroupFlow, Loads, Policy, RunMetrics, SimConfig, UnicastFlow, Verdict};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn sim_config(unicast_snr: Vec<f64>, group_snr: Vec<Vec<f64>>, rho: f64, bins: usize) -> SimConfig {
    let mut channel = ChannelConfig::uniform(0, &[], 10.0, rho);
    channel.quant_bins = bins;
    let unicast = unicast_snr
        .iter()
        .map(|_| UnicastFlow {
            lambda: 0.0,
            message_bits: 40.0,
        })
        .collect();
    let groups = group_snr
        .iter()
        .map(|_| GroupFlow {
            lambda: 0.0,
            message_bits: 40.0,
            covered: None,
        })
        .collect();
    channel.unicast_snr_db = unicast_snr;
    channel.group_snr_db = group_snr;
    SimConfig {
        channel,
        power: PowerSet::new(vec![10.0, 20.0], 10.0, true).unwrap(),
        unicast,
        groups,
        policy: Policy::NcRc,
        horizon: 100_000,
        warmup: None,
        seed: 0,
        epsilon: 0.0,
        arrivals: Default::default(),
        repair_warmup_sessions: 200,
        check_invariants: false,
        stability: Default::default(),
        alphabet_cap: 4096,
    }
}

fn count(runs: &[RunMetrics], v: Verdict) -> usize {
    runs.iter().filter(|m| m.verdict == v).count()
}

fn slope_range(runs: &[RunMetrics]) -> (f64, f64) {
    runs.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), m| (lo.min(m.slope), hi.max(m.slope)))
}

fn criterion_1() -> Outcome {
    let factor = rate_loss_factor(40.0, 5.0);
    let ps = PowerSet::new(vec![10.0], 10.0, true).unwrap();
    let policy = NcRc::new(&ps, 5.0, 1.0, 0.0);
    let from_policy = policy.loss_factor(40.0);
    let exact = 8.0 / 9.0;
    outcome(
        factor == exact && from_policy == exact,
        format!("factor {factor:.17}, scheduler {from_policy:.17}, 8/9 = {exact:.17}"),
    )
}

/// Shared by criteria 2 and 3.
struct RegionRuns {
    lambda_star: f64,
    quantum: f64,
    below: Vec<RunMetrics>,
    above: Vec<RunMetrics>,
}

fn region_runs() -> RegionRuns {
    let scenario = preset(ScenarioName::RegionCheck);
    let cfg = scenario.base.clone();
    let lambda_star = symmetric_boundary(&cfg, RateModel::NcRc, scenario.seed).unwrap();
    let engine = Engine::new(&cfg).unwrap();
    let batch = |scale: f64| -> Vec<RunMetrics> {
        (0..10)
            .into_par_iter()
            .map(|rep| {
                engine
                    .run_with(replication_seed(scenario.seed, rep), &Loads::uniform(&cfg, scale * lambda_star))
                    .unwrap()
            })
            .collect()
    };
    RegionRuns {
        lambda_star,
        quantum: cfg.mean_quantum(),
        below: batch(0.9),
        above: batch(1.1),
    }
}

fn criterion_2(r: &RegionRuns) -> Outcome {
    let stable = count(&r.below, Verdict::Stable);
    let unstable = count(&r.above, Verdict::Unstable);
    let (lo, hi) = slope_range(&r.above);
    let offered = 3.0 * 1.1 * r.lambda_star;
    let served: f64 = r.above.iter().map(|m| m.total_throughput).sum::<f64>() / r.above.len() as f64;
    let q_below: f64 = r.below.iter().map(|m| m.total_avg_queue).sum::<f64>() / 10.0;
    let q_above: f64 = r.above.iter().map(|m| m.total_avg_queue).sum::<f64>() / 10.0;
    outcome(
        stable >= 9 && unstable >= 9,
        format!(
            "lambda* {:.4}; 0.9x: {stable}/10 stable; 1.1x: {unstable}/10 unstable ({} stable, {} inconclusive), \
             slopes {lo:.3}..{hi:.3} bits/slot vs thresholds {:.2}/{:.2}, served {served:.3} of {offered:.3} bits/slot, \
             mean backlog {q_below:.0} -> {q_above:.0} bits",
            r.lambda_star,
            count(&r.above, Verdict::Stable),
            count(&r.above, Verdict::Inconclusive),
            0.01 * r.quantum,
            0.1 * r.quantum,
        ),
    )
}

fn criterion_3(r: &RegionRuns) -> Outcome {
    // Extra stable runs: every policy on a multicast-bearing config.
    let mut extra = Vec::new();
    for policy in [Policy::NcRc, Policy::FixedRate, Policy::UnicastOnly] {
        let mut cfg = sim_config(vec![10.0; 2], vec![vec![10.0; 4]], 0.5, 4);
        cfg.policy = policy;
        cfg.horizon = 200_000;
        let engine = Engine::new(&cfg).unwrap();
        extra.push(engine.run_with(11, &Loads::uniform(&cfg, 0.3)).unwrap());
    }
    let p_av = 10.0;
    let runs: Vec<&RunMetrics> = r.below.iter().chain(&r.above).chain(&extra).collect();
    let stable: Vec<&&RunMetrics> = runs.iter().filter(|m| m.verdict == Verdict::Stable).collect();
    let mut worst_excess = f64::NEG_INFINITY;
    let mut worst_z = 0.0f64;
    let mut ok = !stable.is_empty();
    for m in &stable {
        let t = m.slots as f64;
        let bound = p_av + m.final_z / t;
        worst_excess = worst_excess.max(m.run_avg_power - bound);
        worst_z = worst_z.max(m.final_z / t);
        ok &= m.run_avg_power <= bound * (1.0 + 1e-12) && m.final_z / t <= 1e-3 * p_av && m.slots == 200_000;
    }
    outcome(
        ok,
        format!(
            "{} stable runs of 2e5 slots; max (avg power - P_av - Z(T)/T) = {worst_excess:.2e} W, max Z(T)/T = {worst_z:.2e} W (limit {:.0e})",
            stable.len(),
            1e-3 * p_av
        ),
    )
}

fn criterion_4() -> Outcome {
    let mut cfg = sim_config(vec![], vec![vec![10.0, 7.0, 4.0]], 0.5, 4);
    cfg.channel.mi_model = MiModel::Lattice { step: 1.0 };
    cfg.groups[0].lambda = 10.0;
    cfg.horizon = 500_000;
    let m = Engine::new(&cfg).unwrap().run().unwrap();
    let stats = &m.groups[0];
    let ch = Channel::new(cfg.channel.clone(), cfg.power.p_av).unwrap();
    let pmfs: Vec<Vec<f64>> = ch.group_members(0).map(|rx| lattice_pmf(&ch, rx, cfg.power.p_av).unwrap().0).collect();
    let lbar = lbar_oracle_exact(&pmfs, 40).unwrap();
    let target = 40.0 / lbar;
    let err = (stats.rate_estimate - target).abs() / target;
    outcome(
        stats.completed >= 10_000 && err <= 0.02,
        format!(
            "{} codes, I_g {:.4} vs M/Lbar {:.4} (Lbar {:.4}), rel err {:.3}%",
            stats.completed,
            stats.rate_estimate,
            target,
            lbar,
            100.0 * err
        ),
    )
}

/// Mean multicast code length by direct simulation of lattice MI sessions.
fn mc_code_length(snr_db: &[f64], p_av: f64, codes: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let means: Vec<f64> = snr_db.iter().map(|s| 10f64.powf(s / 10.0) / p_av).collect();
    let mut total = 0u64;
    let mut acc = vec![0.0; snr_db.len()];
    for _ in 0..codes {
        acc.iter_mut().for_each(|a| *a = 0.0);
        let mut len = 0u64;
        while acc.iter().any(|&a| a < 40.0) {
            len += 1;
            for (a, &mean) in acc.iter_mut().zip(&means) {
                let gain = -mean * (1.0 - rng.gen::<f64>()).ln();
                *a += (1.0 + gain * p_av).log2().floor().min(5.0);
            }
        }
        total += len;
    }
    total as f64 / codes as f64
}

fn criterion_5() -> Outcome {
    let configs: [&[f64]; 3] = [&[10.0], &[10.0, 6.0], &[12.0, 8.0, 4.0]];
    let mut ok = true;
    let mut parts = Vec::new();
    for (i, snrs) in configs.iter().enumerate() {
        let mut cfg = ChannelConfig::uniform(0, &[snrs.len()], 10.0, 0.5);
        cfg.group_snr_db = vec![snrs.to_vec()];
        cfg.mi_model = MiModel::Lattice { step: 1.0 };
        let ch = Channel::new(cfg, 10.0).unwrap();
        let pmfs: Vec<Vec<f64>> = ch.group_members(0).map(|rx| lattice_pmf(&ch, rx, 10.0).unwrap().0).collect();
        let exact = lbar_oracle_exact(&pmfs, 40).unwrap();
        let mc = mc_code_length(snrs, 10.0, 100_000, 50 + i as u64);
        let err = (mc - exact).abs() / exact;
        ok &= err <= 0.01;
        parts.push(format!("J={}: MC {mc:.4} vs exact {exact:.4} ({:.3}%)", snrs.len(), 100.0 * err));
    }
    outcome(ok, parts.join("; "))
}

fn criterion_6() -> Outcome {
    let scenario = preset(ScenarioName::Fig3);
    let mut cfg = scenario.base.clone();
    cfg.channel.unicast_snr_db.truncate(2);
    cfg.unicast.truncate(2);
    cfg.channel.group_snr_db.truncate(1);
    cfg.groups.truncate(1);
    cfg.groups[0].covered = Some(3);
    cfg.channel.rho = 0.9;
    cfg.horizon = 200_000;

    // LP boundaries along the symmetric direction.
    let plain = symmetric_boundary(&cfg, RateModel::NcRc, 6).unwrap();
    let ch = Channel::new(cfg.channel.clone(), cfg.power.p_av).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let est = lbar_monte_carlo(&ch, 0, &[0, 1, 2], &[3], 40.0, cfg.power.p_av, 100_000, &mut rng);
    let spec = RegionSpec {
        unicast_bits: vec![40.0; 2],
        groups: vec![GroupRegion {
            message_bits: 40.0,
            lbar: est.lbar,
            stragglers: vec![StragglerRegion {
                member: 3,
                eta: est.eta[0],
            }],
        }],
        direction: vec![1.0; 3],
        model: RateModel::NcRc,
        epsilon: 0.0,
        cap: 4096,
    };
    let combined = solve_boundary(&build_region(&ch, &cfg.power, &spec).unwrap()).unwrap().lambda_star;

    // Simulated stable load per paired seed.
    let engines: Vec<Engine> = [Policy::NcRc, Policy::NcRcCombined]
        .iter()
        .map(|&p| {
            let mut c = cfg.clone();
            c.policy = p;
            Engine::new(&c).unwrap()
        })
        .collect();
    let brackets: Vec<(f64, f64, f64)> = (0..5)
        .into_par_iter()
        .map(|rep| {
            let seed = replication_seed(scenario.seed, rep);
            let search = |engine: &Engine| {
                let b = empirical_boundary_search(
                    |t| Ok(engine.run_with(seed, &Loads::uniform(&cfg, t))?.verdict == Verdict::Stable),
                    plain,
                    0.01,
                    24,
                )
                .unwrap();
                (b.stable, b.unstable - b.stable)
            };
            let (a, wa) = search(&engines[0]);
            let (b, wb) = search(&engines[1]);
            (a, b, wa.max(wb))
        })
        .collect();
    let margin = brackets.iter().map(|(a, b, _)| b - a).sum::<f64>() / brackets.len() as f64;
    let width = brackets.iter().map(|x| x.2).fold(0.0, f64::max);
    let per_seed: Vec<String> = brackets.iter().map(|(a, b, _)| format!("{:+.3}", b - a)).collect();
    outcome(
        combined >= plain && margin > 0.0,
        format!(
            "LP: combined {combined:.4} vs plain {plain:.4}; simulated stable load margin {margin:+.4} bits/slot \
             (paired {}; bisection width <= {width:.4}); plain {:.3}, combined {:.3}",
            per_seed.join(" "),
            brackets.iter().map(|x| x.0).sum::<f64>() / 5.0,
            brackets.iter().map(|x| x.1).sum::<f64>() / 5.0,
        ),
    )
}

/// Largest grid load with every replication stable at it and below.
fn max_stable_load(engine: &Engine, cfg: &SimConfig, grid: &[f64], seeds: &[u64]) -> (f64, f64) {
    let mut best = 0.0;
    let mut ratio = 1.0;
    for &lambda in grid {
        let runs: Vec<RunMetrics> = seeds
            .par_iter()
            .map(|&s| engine.run_with(s, &Loads::uniform(cfg, lambda)).unwrap())
            .collect();
        if runs.iter().any(|m| m.verdict != Verdict::Stable) {
            break;
        }
        best = lambda;
        let flows = cfg.unicast.len() as f64 + cfg.groups.iter().map(|_| 1.0).sum::<f64>();
        let offered = if cfg.policy == Policy::UnicastOnly {
            lambda * (cfg.unicast.len() + cfg.channel.group_snr_db.iter().map(Vec::len).sum::<usize>()) as f64
        } else {
            lambda * flows
        };
        ratio = runs.iter().map(|m| m.total_throughput).sum::<f64>() / (runs.len() as f64 * offered);
    }
    (best, ratio)
}

fn criterion_7() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for rho in [0.1, 0.8] {
        let base = sim_config(vec![10.0; 2], vec![vec![10.0; 4]], rho, 4);
        let genie = symmetric_boundary(&base, RateModel::Genie, 7).unwrap();
        let grid: Vec<f64> = (6..=30).map(|k| 0.05 * k as f64 * genie).collect();
        let seeds: Vec<u64> = (0..3).map(|r| replication_seed(7, r)).collect();
        let mut loads = Vec::new();
        for policy in [Policy::NcRc, Policy::FixedRate, Policy::UnicastOnly] {
            let mut cfg = base.clone();
            cfg.policy = policy;
            let engine = Engine::new(&cfg).unwrap();
            loads.push(max_stable_load(&engine, &cfg, &grid, &seeds));
        }
        let (nc, fr, uo) = (loads[0].0, loads[1].0, loads[2].0);
        let pass = nc >= fr && fr >= uo && nc >= 0.85 * genie;
        ok &= pass;
        parts.push(format!(
            "rho {rho}: nc_rc {nc:.3} ({:.2} x genie, served/offered {:.3}) >= fixed_rate {fr:.3} >= unicast_only {uo:.3}; genie {genie:.3}",
            nc / genie,
            loads[0].1
        ));
    }
    outcome(ok, parts.join("; "))
}

/// `E[min(log2(1 + |h|^2 P), i_max)]` for `h ~ CN(mean, var)` by stratified
/// sampling on a `strata x strata` grid over the noise radius quantile and
/// phase, one jittered draw per cell.
fn stratified_mi(mean: Complex64, var: f64, p: f64, i_max: f64, strata: usize, rng: &mut ChaCha8Rng) -> f64 {
    let n = strata as f64;
    let mut sum = 0.0;
    for a in 0..strata {
        let mut row = 0.0;
        for b in 0..strata {
            let u = (a as f64 + rng.gen::<f64>()) / n;
            let phi = 2.0 * PI * (b as f64 + rng.gen::<f64>()) / n;
            let radius = (-var * (1.0 - u).ln()).sqrt();
            let h = mean + Complex64::from_polar(radius, phi);
            row += (1.0 + h.norm_sqr() * p).log2().min(i_max);
        }
        sum += row;
    }
    sum / (n * n)
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let triples: Vec<(Complex64, f64, f64, u64)> = (0..20)
        .map(|i| {
            let hhat = Complex64::new(rng.gen::<f64>() * 2.0 - 1.0, rng.gen::<f64>() * 2.0 - 1.0) * 1.2;
            let p = 0.5 + 19.5 * rng.gen::<f64>();
            let rho = 0.02 + 0.96 * rng.gen::<f64>();
            (hhat, p, rho, 100 + i)
        })
        .collect();
    let errors: Vec<f64> = triples
        .par_iter()
        .map(|&(hhat, p, rho, seed)| {
            let ch = Channel::new(ChannelConfig::uniform(1, &[], 10.0, rho), 10.0).unwrap();
            let var = ch.variance(Receiver::Unicast(0));
            let quad = ch.conditional_expected_mi(Receiver::Unicast(0), hhat, p);
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            let mc = stratified_mi(hhat * rho.sqrt(), (1.0 - rho) * var, p, 5.0, 1000, &mut r);
            (quad - mc).abs()
        })
        .collect();
    let worst = errors.iter().cloned().fold(0.0, f64::max);
    outcome(worst <= 1e-3, format!("20 triples, 10^6 samples each, max |quadrature - MC| = {worst:.2e}"))
}

fn criterion_9() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for name in [
        ScenarioName::Fig1,
        ScenarioName::Fig2,
        ScenarioName::Fig3,
        ScenarioName::RegionCheck,
        ScenarioName::Custom,
    ] {
        let mut scenario = preset(name);
        scenario.base.horizon = 20_000;
        scenario.base.warmup = None;
        scenario.replications = 2;
        let a = run_scenario(&scenario).unwrap();
        let b = run_scenario(&scenario).unwrap();
        let same_rows = render(&a.rows, Format::Csv).unwrap() == render(&b.rows, Format::Csv).unwrap();
        let same_ref = serde_json::to_vec(&a.reference).unwrap() == serde_json::to_vec(&b.reference).unwrap();
        ok &= same_rows && same_ref && !a.rows.is_empty();
        parts.push(format!("{name:?} {} rows {}", a.rows.len(), if same_rows && same_ref { "identical" } else { "DIFFER" }));
    }
    outcome(ok, parts.join(", "))
}

fn criterion_10() -> Outcome {
    let mut cases: Vec<(String, SimConfig)> = Vec::new();
    for policy in [Policy::NcRc, Policy::FixedRate, Policy::UnicastOnly] {
        let mut cfg = sim_config(vec![10.0, 6.0], vec![vec![10.0; 3]], 0.6, 4);
        cfg.policy = policy;
        cfg.epsilon = 0.1;
        cases.push((policy.as_str().to_string(), cfg));
    }
    for lattice in [false, true] {
        let mut cfg = sim_config(vec![12.0, 8.0], vec![vec![12.0, 9.0, 6.0, 3.0]], 0.9, 4);
        cfg.policy = Policy::NcRcCombined;
        cfg.groups[0].covered = Some(3);
        cfg.repair_warmup_sessions = 20;
        cfg.epsilon = 0.1;
        if lattice {
            cfg.channel.mi_model = MiModel::Lattice { step: 1.0 };
        }
        cases.push((format!("nc_rc_combined{}", if lattice { "/lattice" } else { "" }), cfg));
    }
    let mut ok = true;
    let mut parts = Vec::new();
    for (label, mut cfg) in cases {
        cfg.horizon = 10_000;
        cfg.check_invariants = true;
        let loads = Loads::uniform(&cfg, 0.6);
        let mut settlements = 0u64;
        let res = Engine::new(&cfg)
            .unwrap()
            .run_logged(3, &loads, &mut |s| {
                if (s.collected + s.residual - 40.0).abs() <= 1e-12 * 40.0 {
                    settlements += 1;
                }
            });
        match res {
            Ok(m) => {
                let repaired = cfg.policy != Policy::NcRcCombined || (settlements > 0 && m.groups[0].partition.is_some());
                ok &= repaired;
                parts.push(format!("{label} ok ({settlements} settlements)"));
            }
            Err(e) => {
                ok = false;
                parts.push(format!("{label}: {e}"));
            }
        }
    }
    outcome(ok, parts.join(", "))
}

fn main() {
    let budgets: [Option<u64>; 10] = [None, Some(120), None, Some(60), Some(60), Some(300), Some(600), Some(60), None, None];
    let names = [
        "rate-loss factor",
        "region boundary vs simulation",
        "power constraint",
        "multicast rate tracking",
        "code-length oracle equivalence",
        "combined-delivery dominance",
        "policy ordering",
        "conditional-expectation accuracy",
        "determinism",
        "invariant suite",
    ];
    let mut failed = 0;
    let mut report = |idx: usize, result: Outcome, elapsed: Duration| {
        let secs = elapsed.as_secs_f64();
        let within = budgets[idx].is_none_or(|b| secs <= b as f64);
        let pass = result.pass && within;
        if !pass {
            failed += 1;
        }
        let budget = budgets[idx].map_or(String::new(), |b| format!(" / {b} s"));
        println!(
            "criterion {:>2} {} {}: {} [{secs:.1} s{budget}]",
            idx + 1,
            if pass { "PASS" } else { "FAIL" },
            names[idx],
            result.detail
        );
    };

    let t = Instant::now();
    report(0, criterion_1(), t.elapsed());
    let t = Instant::now();
    let runs = region_runs();
    report(1, criterion_2(&runs), t.elapsed());
    let t = Instant::now();
    report(2, criterion_3(&runs), t.elapsed());
    let steps: [(usize, fn() -> Outcome); 7] = [
        (3, criterion_4),
        (4, criterion_5),
        (5, criterion_6),
        (6, criterion_7),
        (7, criterion_8),
        (8, criterion_9),
        (9, criterion_10),
    ];
    for (idx, f) in steps {
        let t = Instant::now();
        let result = f();
        report(idx, result, t.elapsed());
    }
    println!("acceptance: {} of 10 criteria passed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
