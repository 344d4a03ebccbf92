//! `ncrc`: run simulation sweeps and write result tables.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use ncrc_core::scenario::{emit, emit_reference, run_scenario, ConfigFile, Format, ScenarioName, SweepVar};
use ncrc_core::sim::Policy;

#[derive(Parser, Debug)]
#[command(name = "ncrc", version, about = "Downlink rateless-code scheduling simulator")]
struct Args {
    /// Preset: fig1, fig2, fig3, region_check or custom.
    #[arg(long)]
    scenario: Option<ScenarioName>,
    /// TOML run-config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run a single load point at this common arrival rate (bits/slot).
    #[arg(long)]
    lambda: Option<f64>,
    /// CSI accuracy for every run.
    #[arg(long)]
    rho: Option<f64>,
    /// Horizon per run (slots).
    #[arg(long)]
    slots: Option<u64>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Replications per grid point and policy.
    #[arg(long)]
    reps: Option<usize>,
    /// Restrict to one policy: nc_rc, fixed_rate, unicast_only, nc_rc_combined.
    #[arg(long)]
    policy: Option<Policy>,
    /// Output file; reference lines go to `<out>.reference.json`.
    #[arg(long, default_value = "results.csv")]
    out: PathBuf,
    #[arg(long, default_value = "csv")]
    format: Format,
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            ExitCode::FAILURE
        }
    }
}

fn run(args: Args) -> ncrc_core::Result<()> {
    let mut file = match &args.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    if let Some(name) = args.scenario {
        file.scenario.get_or_insert_default().name = Some(name);
    }
    let mut scenario = file.into_scenario(ScenarioName::Custom);
    if let Some(lambda) = args.lambda {
        scenario.sweep = SweepVar::Lambda;
        scenario.grid = vec![lambda];
    }
    if let Some(rho) = args.rho {
        scenario.base.channel.rho = rho;
        if scenario.sweep == SweepVar::Rho {
            scenario.grid = vec![rho];
        }
    }
    if let Some(slots) = args.slots {
        scenario.base.horizon = slots;
        scenario.base.warmup = None;
    }
    if let Some(seed) = args.seed {
        scenario.seed = seed;
    }
    if let Some(reps) = args.reps {
        scenario.replications = reps;
    }
    if let Some(policy) = args.policy {
        scenario.policies = vec![policy];
    }
    let output = run_scenario(&scenario)?;
    emit(&output.rows, args.format, &args.out)?;
    if !output.reference.is_empty() {
        let mut name = args.out.clone().into_os_string();
        name.push(".reference.json");
        emit_reference(&output.reference, &PathBuf::from(name))?;
    }
    eprintln!("wrote {} rows to {}", output.rows.len(), args.out.display());
    Ok(())
}
