//! Experiment presets, sweep orchestration and result files.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{Channel, ChannelConfig, MiModel};
use crate::error::{Error, Result};
use crate::region::{build_region, empirical_boundary_search, genie_region_rate, solve_boundary, GroupRegion, RateModel, RegionSpec};
use crate::scheduler::PowerSet;
use crate::sim::{Engine, GroupFlow, Loads, Policy, SimConfig, UnicastFlow, Verdict};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioName {
    Fig1,
    Fig2,
    Fig3,
    RegionCheck,
    Custom,
}

impl std::str::FromStr for ScenarioName {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fig1" => Ok(ScenarioName::Fig1),
            "fig2" => Ok(ScenarioName::Fig2),
            "fig3" => Ok(ScenarioName::Fig3),
            "region_check" => Ok(ScenarioName::RegionCheck),
            "custom" => Ok(ScenarioName::Custom),
            other => Err(Error::config(format!("unknown scenario `{other}`"))),
        }
    }
}

/// Quantity varied across the grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVar {
    /// Common arrival rate of every flow.
    Lambda,
    Rho,
    /// Covered members per group.
    Covered,
    /// Multiplier on the LP boundary along the symmetric direction.
    LoadScale,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: ScenarioName,
    pub sweep: SweepVar,
    pub grid: Vec<f64>,
    pub replications: usize,
    pub policies: Vec<Policy>,
    /// Master seed; replication seeds derive from it.
    #[serde(default)]
    pub seed: u64,
    pub base: SimConfig,
}

/// One simulated run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub policy: String,
    pub sweep: f64,
    pub seed: u64,
    pub avg_queue_bits: f64,
    pub throughput_bps: f64,
    pub avg_power_w: f64,
    pub verdict: String,
}

/// Analytical reference values emitted next to the rows.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReferenceLine {
    pub label: String,
    /// Grid value the line belongs to, if it varies with the sweep.
    pub sweep: Option<f64>,
    /// Largest common arrival rate supported along the symmetric direction.
    pub lambda_star: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bracket: Option<(f64, f64)>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ScenarioOutput {
    pub rows: Vec<ResultRow>,
    pub reference: Vec<ReferenceLine>,
}

/// SplitMix64 output function.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of replication `rep`: `splitmix64(master + rep * golden)`. Depends
/// only on `(master, rep)`, so extra replications never shift earlier ones.
pub fn replication_seed(master: u64, rep: usize) -> u64 {
    splitmix64(master.wrapping_add((rep as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)))
}

fn base_config(unicast_snr: Vec<f64>, group_snr: Vec<Vec<f64>>, rho: f64, bins: usize) -> SimConfig {
    let unicast = unicast_snr.iter().map(|_| UnicastFlow { lambda: 0.0, message_bits: 40.0 }).collect();
    let groups = group_snr
        .iter()
        .map(|_| GroupFlow { lambda: 0.0, message_bits: 40.0, covered: None })
        .collect();
    SimConfig {
        channel: ChannelConfig {
            unicast_snr_db: unicast_snr,
            group_snr_db: group_snr,
            rho,
            i_max: 5.0,
            symbols_per_slot: 1,
            mode: Default::default(),
            ar_coeff: 0.0,
            quant_bins: bins,
            mi_model: MiModel::Continuous,
        },
        power: PowerSet {
            levels: vec![10.0, 20.0],
            p_av: 10.0,
            includes_zero: true,
        },
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
        alphabet_cap: crate::sim::ALPHABET_CAP,
    }
}

/// Built-in experiment definitions.
pub fn preset(name: ScenarioName) -> Scenario {
    let homogeneous = |rho| base_config(vec![10.0; 5], vec![vec![10.0; 4]; 2], rho, 4);
    let lambda_grid = vec![0.2, 0.4, 0.6, 0.8, 1.0, 1.2, 1.4, 1.6];
    let baselines = vec![Policy::NcRc, Policy::FixedRate, Policy::UnicastOnly];
    match name {
        ScenarioName::Fig1 => Scenario {
            name,
            sweep: SweepVar::Lambda,
            grid: lambda_grid,
            replications: 5,
            policies: baselines,
            seed: 1,
            base: homogeneous(0.1),
        },
        ScenarioName::Fig2 => Scenario {
            name,
            sweep: SweepVar::Lambda,
            grid: lambda_grid,
            replications: 5,
            policies: baselines,
            seed: 2,
            base: homogeneous(0.8),
        },
        ScenarioName::Fig3 => {
            let mut base = base_config(
                vec![12.0, 10.0, 8.0, 6.0, 4.0],
                vec![vec![12.0, 9.0, 6.0, 3.0]; 2],
                0.9,
                4,
            );
            base.groups.iter_mut().for_each(|g| g.covered = Some(3));
            Scenario {
                name,
                sweep: SweepVar::Lambda,
                grid: lambda_grid,
                replications: 5,
                policies: vec![Policy::NcRc, Policy::NcRcCombined],
                seed: 3,
                base,
            }
        }
        ScenarioName::RegionCheck => {
            let mut base = base_config(vec![10.0; 2], vec![vec![10.0; 2]], 0.8, 2);
            base.channel.mi_model = MiModel::Lattice { step: 1.0 };
            base.horizon = 200_000;
            Scenario {
                name,
                sweep: SweepVar::LoadScale,
                grid: vec![0.5, 0.7, 0.9, 1.1, 1.3],
                replications: 3,
                policies: vec![Policy::NcRc],
                seed: 4,
                base,
            }
        }
        ScenarioName::Custom => {
            let mut base = base_config(vec![10.0], vec![], 0.8, 4);
            base.horizon = 20_000;
            Scenario {
                name,
                sweep: SweepVar::Lambda,
                grid: vec![1.0],
                replications: 1,
                policies: vec![Policy::NcRc],
                seed: 0,
                base,
            }
        }
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::config("sweep grid is empty"));
        }
        if self.grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::config("sweep grid must be strictly increasing"));
        }
        if self.replications == 0 {
            return Err(Error::config("replications must be at least 1"));
        }
        if self.policies.is_empty() {
            return Err(Error::config("no policies selected"));
        }
        self.base.validate()
    }

    /// Config and loads at one grid point.
    fn point(&self, x: f64, policy: Policy, lp_scale: Option<f64>) -> Result<(SimConfig, Loads)> {
        let mut cfg = self.base.clone();
        cfg.policy = policy;
        match self.sweep {
            SweepVar::Lambda => {
                cfg.unicast.iter_mut().for_each(|f| f.lambda = x);
                cfg.groups.iter_mut().for_each(|g| g.lambda = x);
            }
            SweepVar::Rho => cfg.channel.rho = x,
            SweepVar::Covered => {
                let l = x.round() as usize;
                cfg.groups.iter_mut().for_each(|g| g.covered = Some(l));
            }
            SweepVar::LoadScale => {
                let lambda = x * lp_scale.ok_or_else(|| Error::config("load-scale sweep needs an LP boundary"))?;
                cfg.unicast.iter_mut().for_each(|f| f.lambda = lambda);
                cfg.groups.iter_mut().for_each(|g| g.lambda = lambda);
            }
        }
        cfg.validate()?;
        let loads = Loads::of(&cfg);
        Ok((cfg, loads))
    }
}

/// Symmetric-direction NC-RC or genie boundary of a plain config.
///
/// Multicast session lengths come from the exact oracle under lattice MI and
/// from Monte Carlo otherwise.
pub fn symmetric_boundary(cfg: &SimConfig, model: RateModel, seed: u64) -> Result<f64> {
    let channel = Channel::new(cfg.channel.clone(), cfg.power.p_av)?;
    let direction = vec![1.0; cfg.unicast.len() + cfg.groups.len()];
    let unicast_bits: Vec<f64> = cfg.unicast.iter().map(|f| f.message_bits).collect();
    if model == RateModel::Genie {
        let group_bits: Vec<f64> = cfg.groups.iter().map(|g| g.message_bits).collect();
        return genie_region_rate(&channel, &cfg.power, &unicast_bits, &group_bits, &direction, cfg.alphabet_cap);
    }
    let groups = cfg
        .groups
        .iter()
        .enumerate()
        .map(|(g, flow)| {
            Ok(GroupRegion {
                message_bits: flow.message_bits,
                lbar: group_lbar(&channel, g, flow.message_bits, cfg.power.p_av, cfg.epsilon, seed)?,
                stragglers: Vec::new(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let spec = RegionSpec {
        unicast_bits,
        groups,
        direction,
        model,
        epsilon: cfg.epsilon,
        cap: cfg.alphabet_cap,
    };
    Ok(solve_boundary(&build_region(&channel, &cfg.power, &spec)?)?.lambda_star)
}

/// Mean multicast session length with every member tracked.
pub fn group_lbar(channel: &Channel, g: usize, message_bits: f64, p_av: f64, epsilon: f64, seed: u64) -> Result<f64> {
    let members: Vec<usize> = (0..channel.config().group_snr_db[g].len()).collect();
    if let MiModel::Lattice { .. } = channel.mi_model() {
        let mut pmfs = Vec::new();
        let mut unit = 1.0;
        for rx in channel.group_members(g) {
            let (pmf, u) = crate::region::lattice_pmf(channel, rx, p_av)?;
            unit = u;
            pmfs.push(pmf);
        }
        let threshold = (message_bits * (1.0 + epsilon) / unit - 1e-9).ceil() as usize;
        return Ok(crate::region::lbar_from_marginals(&pmfs, threshold));
    }
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let est = crate::region::lbar_monte_carlo(
        channel,
        g,
        &members,
        &[],
        message_bits * (1.0 + epsilon),
        p_av,
        100_000,
        &mut rng,
    );
    Ok(est.lbar)
}

/// Runs every grid point, policy and replication.
///
/// Work is spread over the rayon pool; rows come back in grid, policy,
/// replication order regardless of scheduling.
pub fn run_scenario(scenario: &Scenario) -> Result<ScenarioOutput> {
    scenario.validate()?;
    let mut reference = Vec::new();
    let lp_scale = match scenario.sweep {
        SweepVar::LoadScale => {
            let mut cfg = scenario.base.clone();
            cfg.policy = Policy::NcRc;
            let l = symmetric_boundary(&cfg, RateModel::NcRc, scenario.seed)?;
            reference.push(ReferenceLine {
                label: "nc_rc_lp".into(),
                sweep: None,
                lambda_star: l,
                bracket: None,
            });
            Some(l)
        }
        _ => None,
    };

    let points: Vec<(usize, f64, Policy)> = scenario
        .grid
        .iter()
        .enumerate()
        .flat_map(|(k, &x)| scenario.policies.iter().map(move |&p| (k, x, p)))
        .collect();
    let engines: Vec<(Engine, Loads)> = points
        .par_iter()
        .map(|&(_, x, policy)| {
            let (cfg, loads) = scenario.point(x, policy, lp_scale)?;
            Ok((Engine::new(&cfg)?, loads))
        })
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, usize)> = (0..points.len())
        .flat_map(|p| (0..scenario.replications).map(move |r| (p, r)))
        .collect();
    let rows = jobs
        .par_iter()
        .map(|&(p, r)| {
            let (engine, loads) = &engines[p];
            let seed = replication_seed(scenario.seed, r);
            let m = engine.run_with(seed, loads)?;
            Ok(ResultRow {
                policy: points[p].2.as_str().to_string(),
                sweep: points[p].1,
                seed,
                avg_queue_bits: m.total_avg_queue,
                throughput_bps: m.total_throughput,
                avg_power_w: m.avg_power,
                verdict: m.verdict.as_str().to_string(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let baselines = scenario
        .policies
        .iter()
        .any(|p| matches!(p, Policy::FixedRate | Policy::UnicastOnly));
    match scenario.sweep {
        SweepVar::Lambda if baselines => {
            reference.push(ReferenceLine {
                label: "genie".into(),
                sweep: None,
                lambda_star: symmetric_boundary(&scenario.base, RateModel::Genie, scenario.seed)?,
                bracket: None,
            });
        }
        SweepVar::Rho if baselines => {
            for &rho in &scenario.grid {
                let mut cfg = scenario.base.clone();
                cfg.channel.rho = rho;
                reference.push(ReferenceLine {
                    label: "genie".into(),
                    sweep: Some(rho),
                    lambda_star: symmetric_boundary(&cfg, RateModel::Genie, scenario.seed)?,
                    bracket: None,
                });
            }
        }
        SweepVar::LoadScale => {
            let l = lp_scale.unwrap_or(0.0);
            let mut cfg = scenario.base.clone();
            cfg.policy = Policy::NcRc;
            let engine = Engine::new(&cfg)?;
            let reps = scenario.replications;
            let bracket = empirical_boundary_search(
                |t| {
                    let loads = Loads::uniform(&cfg, t * l);
                    let stable = (0..reps)
                        .into_par_iter()
                        .map(|r| Ok(engine.run_with(replication_seed(scenario.seed, r), &loads)?.verdict == Verdict::Stable))
                        .collect::<Result<Vec<bool>>>()?;
                    Ok(2 * stable.iter().filter(|&&s| s).count() > reps)
                },
                1.0,
                0.05,
                12,
            )?;
            reference.push(ReferenceLine {
                label: "nc_rc_empirical".into(),
                sweep: None,
                lambda_star: bracket.midpoint() * l,
                bracket: Some((bracket.stable * l, bracket.unstable * l)),
            });
        }
        _ => {}
    }
    Ok(ScenarioOutput { rows, reference })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(Error::config(format!("unknown format `{other}`"))),
        }
    }
}

pub const CSV_HEADER: [&str; 7] = [
    "policy",
    "sweep",
    "seed",
    "avg_queue_bits",
    "throughput_bps",
    "avg_power_w",
    "verdict",
];

/// Serialises rows; CSV always starts with the fixed header.
pub fn render(rows: &[ResultRow], format: Format) -> Result<Vec<u8>> {
    match format {
        Format::Csv => {
            let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
            let fmt_err = |e: csv::Error| Error::Format {
                path: PathBuf::new(),
                message: e.to_string(),
            };
            w.write_record(CSV_HEADER).map_err(fmt_err)?;
            for r in rows {
                w.serialize(r).map_err(fmt_err)?;
            }
            w.into_inner().map_err(|e| Error::Format {
                path: PathBuf::new(),
                message: e.to_string(),
            })
        }
        Format::Json => {
            let mut v = serde_json::to_vec_pretty(rows).map_err(|e| Error::Format {
                path: PathBuf::new(),
                message: e.to_string(),
            })?;
            v.push(b'\n');
            Ok(v)
        }
    }
}

/// Writes rows to `path`.
pub fn emit(rows: &[ResultRow], format: Format, path: &Path) -> Result<()> {
    let bytes = render(rows, format)?;
    write_file(path, &bytes)
}

/// Writes reference lines as JSON.
pub fn emit_reference(reference: &[ReferenceLine], path: &Path) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(reference).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    bytes.push(b'\n');
    write_file(path, &bytes)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let io = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut f = fs::File::create(path).map_err(io)?;
    f.write_all(bytes).map_err(io)
}

/// Contents of a run-config file. Every section is optional; a preset named
/// in `[scenario]` supplies the defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub scenario: Option<ScenarioSection>,
    #[serde(default)]
    pub sim: Option<SimConfig>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    pub name: Option<ScenarioName>,
    pub sweep: Option<SweepVar>,
    pub grid: Option<Vec<f64>>,
    pub replications: Option<usize>,
    pub policies: Option<Vec<Policy>>,
    pub seed: Option<u64>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text).map_err(|e| match e {
            Error::Format { message, .. } => Error::Format {
                path: path.to_path_buf(),
                message,
            },
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Format {
            path: PathBuf::new(),
            message: e.to_string(),
        })
    }

    /// Builds the scenario, starting from `fallback` when no preset is named.
    pub fn into_scenario(self, fallback: ScenarioName) -> Scenario {
        let head = self.scenario.unwrap_or_default();
        let mut s = preset(head.name.unwrap_or(fallback));
        if let Some(v) = head.sweep {
            s.sweep = v;
        }
        if let Some(v) = head.grid {
            s.grid = v;
        }
        if let Some(v) = head.replications {
            s.replications = v;
        }
        if let Some(v) = head.policies {
            s.policies = v;
        }
        if let Some(v) = head.seed {
            s.seed = v;
        }
        if let Some(sim) = self.sim {
            s.base = sim;
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(seed: u64) -> ResultRow {
        ResultRow {
            policy: "nc_rc".into(),
            sweep: 0.5,
            seed,
            avg_queue_bits: 12.25,
            throughput_bps: 1.5,
            avg_power_w: 9.75,
            verdict: "stable".into(),
        }
    }

    #[test]
    fn csv_shapes() {
        let empty = String::from_utf8(render(&[], Format::Csv).unwrap()).unwrap();
        assert_eq!(empty, "policy,sweep,seed,avg_queue_bits,throughput_bps,avg_power_w,verdict\n");
        let one = String::from_utf8(render(&[row(7)], Format::Csv).unwrap()).unwrap();
        assert_eq!(one.lines().count(), 2);
        assert_eq!(one.lines().nth(1).unwrap(), "nc_rc,0.5,7,12.25,1.5,9.75,stable");
    }

    #[test]
    fn json_is_array_of_rows() {
        let v: serde_json::Value = serde_json::from_slice(&render(&[row(1), row(2)], Format::Json).unwrap()).unwrap();
        assert_eq!(v.as_array().unwrap().len(), 2);
        assert_eq!(v[1]["seed"], 2);
    }

    #[test]
    fn seeds_are_prefix_stable() {
        let a: Vec<u64> = (0..3).map(|r| replication_seed(9, r)).collect();
        let b: Vec<u64> = (0..5).map(|r| replication_seed(9, r)).collect();
        assert_eq!(a[..], b[..3]);
        assert_ne!(a[0], a[1]);
    }

    #[test]
    fn presets_validate() {
        for name in [
            ScenarioName::Fig1,
            ScenarioName::Fig2,
            ScenarioName::Fig3,
            ScenarioName::RegionCheck,
            ScenarioName::Custom,
        ] {
            preset(name).validate().unwrap();
        }
        assert_eq!(preset(ScenarioName::Fig1).grid.len(), 8);
    }

    #[test]
    fn config_file_overrides_preset() {
        let f = ConfigFile::parse("[scenario]\nname = \"fig2\"\nreplications = 2\ngrid = [0.1, 0.2]\n").unwrap();
        let s = f.into_scenario(ScenarioName::Custom);
        assert_eq!(s.name, ScenarioName::Fig2);
        assert_eq!(s.replications, 2);
        assert_eq!(s.base.channel.rho, 0.8);
        assert!(ConfigFile::parse("[scenario]\nbogus = 1\n").is_err());
    }
}
