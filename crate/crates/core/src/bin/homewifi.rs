use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use homewifi_core::config::Config;
use homewifi_core::runner::{self, Criterion, Overrides, RunConfig};
use homewifi_core::scenarios::{self, Scenario};
use homewifi_core::selection::Mechanism;
use homewifi_core::Error;

#[derive(Parser)]
#[command(name = "homewifi", version, about = "Home WiFi AP/Extender selection simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum MechanismArg {
    Rssi,
    Loadaware,
}

#[derive(Subcommand)]
enum Command {
    /// Run a built-in test, or the scenario from --config when --test is omitted.
    Run {
        #[arg(long)]
        test: Option<String>,
        #[arg(long)]
        alpha: Option<f64>,
        /// Share of 802.11k/v capable STAs, in percent.
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum)]
        mechanism: Option<MechanismArg>,
        #[arg(long, default_value = "results")]
        out: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
        /// Write one NDJSON frame log per deployment.
        #[arg(long)]
        emit_events: bool,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Print the built-in test grids.
    ListTests,
    /// Check the scenario of a config file.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
    },
}

fn load_config(path: Option<&PathBuf>) -> Result<Config, Error> {
    match path {
        Some(p) => Config::load(p),
        None => Ok(Config::builtin().clone()),
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_run(
    test: Option<String>,
    overrides: Overrides,
    out: PathBuf,
    workers: Option<usize>,
    emit_events: bool,
    config: Option<PathBuf>,
) -> Result<(), Error> {
    let config = load_config(config.as_ref())?;
    let mut cfg = match &test {
        Some(id) => RunConfig::for_test(id, &config, &overrides)?,
        None => RunConfig::for_scenario(&config, &overrides)?,
    };
    if workers.is_some() {
        cfg.workers = workers;
    }
    cfg.emit_events |= emit_events;
    eprintln!(
        "running test {}: {} points, {} deployments",
        cfg.test_id,
        cfg.points.len(),
        cfg.total_deployments()
    );
    let (aggregates, paths) = runner::run_to_dir(&cfg, &out)?;
    for (label, s) in runner::series(&aggregates) {
        if s.len() < 2 {
            continue;
        }
        let r = |c| runner::operational_range(&s, c).map(|v| v / 1e6);
        println!(
            "{label}: range thr>=99% {:.2} Mbps, delay<=10ms {:.2} Mbps, no congestion {:.2} Mbps",
            r(Criterion::Thr99)?,
            r(Criterion::Delay10ms)?,
            r(Criterion::NoCongestion)?
        );
    }
    println!("rows: {}", paths.rows_csv.display());
    println!("aggregates: {}", paths.aggregates_csv.display());
    println!("json: {}", paths.json.display());
    Ok(())
}

fn cmd_list() -> Result<(), Error> {
    let defaults = Config::builtin().grid_defaults();
    for m in scenarios::grid_manifest()? {
        let n = scenarios::build_test(&m.test_id, &defaults)?.len();
        println!("{}  points={} k={}  {}", m.test_id, n, m.k, m.description);
    }
    Ok(())
}

fn cmd_validate(path: PathBuf) -> Result<bool, Error> {
    let config = Config::load(&path)?;
    let topology = match (&config.scenario.spec, &config.scenario.explicit) {
        (Some(spec), None) => {
            let dep = scenarios::build_deployment(&Scenario::Spec(spec.clone()), 0, 0.0, &config.propagation)?;
            dep.topology
        }
        (None, Some(e)) => e.topology.clone(),
        _ => return Err(Error::Config("config has no scenario".into())),
    };
    let violations = topology.validate();
    if violations.is_empty() {
        println!(
            "ok: {} nodes, {} extenders, {} STAs",
            topology.nodes.len(),
            topology.extenders().count(),
            topology.stas().count()
        );
        return Ok(true);
    }
    for v in violations {
        println!("violation: {v:?}");
    }
    Ok(false)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            test,
            alpha,
            beta,
            k,
            seed,
            mechanism,
            out,
            workers,
            emit_events,
            config,
        } => {
            let overrides = Overrides {
                alpha,
                beta_pct: beta,
                k,
                seed,
                mechanism: mechanism.map(|m| match m {
                    MechanismArg::Rssi => Mechanism::RssiBased,
                    MechanismArg::Loadaware => Mechanism::LoadAware,
                }),
            };
            cmd_run(test, overrides, out, workers, emit_events, config).map(|_| true)
        }
        Command::ListTests => cmd_list().map(|_| true),
        Command::Validate { scenario } => cmd_validate(scenario),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
