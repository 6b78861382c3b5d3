use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use wsn_multipath::distributor::Scheme;
use wsn_multipath::harness::{self, HarnessError};
use wsn_multipath::routing::{self, Route};
use wsn_multipath::scenario::{self, ScenarioConfig, TopologySpec};

/// Exit code when the run succeeded but an ordering claim did not hold.
const ORDERING_FAILED: u8 = 2;

#[derive(Parser)]
#[command(version, about = "Multipath energy-delay scheme comparison for sensor networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every scheme on a scenario and write CSVs plus report.txt.
    Run {
        scenario: PathBuf,
        /// Output directory (defaults to the scenario's out_dir, then ./out).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated schemes, e.g. 1,2,3 or single,adaptive.
        #[arg(long, value_delimiter = ',')]
        schemes: Option<Vec<Scheme>>,
        /// Override the number of packets D.
        #[arg(long)]
        packets: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Also write one event-trace file per scheme.
        #[arg(long)]
        trace: bool,
    },
    /// Load and check a scenario without running it.
    Validate { scenario: PathBuf },
    /// Print the routes the scenario's source would use.
    Paths { scenario: PathBuf },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn load(path: &Path) -> Result<ScenarioConfig, Box<dyn std::error::Error>> {
    Ok(scenario::load_scenario(path)?)
}

fn execute(cmd: Command) -> Result<ExitCode, Box<dyn std::error::Error>> {
    match cmd {
        Command::Run {
            scenario,
            out,
            schemes,
            packets,
            seed,
            trace,
        } => {
            let mut cfg = load(&scenario)?;
            if let Some(s) = schemes {
                cfg.schemes = s;
            }
            if let Some(d) = packets {
                cfg.packets = d;
            }
            if let Some(s) = seed {
                cfg.sim.seed = s;
            }
            cfg.sim.trace = trace;
            let dir = out
                .or_else(|| cfg.out_dir.clone())
                .unwrap_or_else(|| PathBuf::from("out"));

            let report = harness::run_comparison(&cfg, true)?;
            harness::emit_outputs(&report, &dir)?;
            if trace {
                for r in &report.schemes {
                    let path = dir.join(format!("trace-{}.txt", r.scheme.name()));
                    let mut text = r.transfer.trace.join("\n");
                    text.push('\n');
                    fs::write(&path, text).map_err(|source| HarnessError::Io {
                        path: path.display().to_string(),
                        source,
                    })?;
                }
            }
            print!("{}", harness::render_report(&report));
            println!("\noutputs written to {}", dir.display());
            Ok(if report.orderings_hold() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(ORDERING_FAILED)
            })
        }
        Command::Validate { scenario } => {
            let cfg = load(&scenario)?;
            let topology = match &cfg.topology {
                TopologySpec::Paths { profiles, .. } => format!("{} explicit paths", profiles.len()),
                TopologySpec::Field { spec, .. } => format!(
                    "field {} x {} m, {} nodes, radio range {} m",
                    spec.width, spec.height, spec.node_count, spec.radio_range
                ),
            };
            let schemes: Vec<String> = cfg.schemes.iter().map(|s| s.to_string()).collect();
            println!(
                "{}: ok ({topology}; D = {}; m = {}; schemes {})",
                scenario.display(),
                cfg.packets,
                cfg.sim.max_attempts,
                schemes.join(",")
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Paths { scenario } => {
            let cfg = load(&scenario)?;
            let net = harness::build_network(&cfg)?;
            let routes: Vec<Route> = net.entries().iter().map(|e| e.route.clone()).collect();
            print!("{}", routing::export_routes(&routes));
            for e in net.entries() {
                println!(
                    "# path {}: H = {}, tau = {} s, T = {} m",
                    e.profile.id,
                    e.profile.hops,
                    harness::fmt_sig(e.profile.hop_delay),
                    harness::fmt_sig(e.profile.distance)
                );
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
