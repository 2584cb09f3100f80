use std::fs;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tracer_api::{AppState, Service, ServiceConfig};
use tracer_core::canonical;
use tracer_core::chaincode::model::ProvenanceEvent;
use tracer_core::chaincode::{get_provenance, ChaincodeError};
use tracer_core::ledger::{verify_log_bytes, Ledger, LOG_FILE};
use tracer_core::pipeline::scenario::{run_scenario_on, Scenario};
use tracer_core::pipeline::NetworkConfig;

mod bundled;

#[derive(Parser)]
#[command(name = "tracer", version, about = "Commodity provenance ledger: service, scenarios and chain tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP API over a fresh or recovered ledger.
    Serve(ServeArgs),
    /// Scenario files.
    #[command(subcommand)]
    Scenario(ScenarioCommand),
    /// Print a commodity's ownership chain and renovations.
    QueryProvenance {
        #[arg(long)]
        data_dir: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Human)]
        format: Format,
        commodity_id: String,
    },
    /// Check hash links, data hashes and encoding of the stored block log.
    VerifyChain {
        #[arg(long)]
        data_dir: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Human)]
        format: Format,
    },
}

#[derive(Subcommand)]
enum ScenarioCommand {
    /// Run a scenario through the simulated network and check its expectations.
    Run(RunArgs),
    /// List the bundled scenarios.
    List,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Human,
    Canonical,
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file.
    #[arg(long, required_unless_present = "bundled", conflicts_with = "bundled")]
    scenario: Option<PathBuf>,
    /// Name of a bundled scenario instead of a file.
    #[arg(long)]
    bundled: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Where to write the event trace (one canonical record per line).
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Keep the anchor peer's ledger in this (empty) directory.
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// `canonical` prints the trace to stdout; `human` prints a summary.
    #[arg(long, value_enum, default_value_t = Format::Human)]
    format: Format,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    data_dir: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    listen: SocketAddr,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 3)]
    peers: usize,
    /// Endorsements required (m).
    #[arg(long, default_value_t = 2)]
    endorsements: usize,
    /// Endorser set size (n); defaults to every peer.
    #[arg(long)]
    endorsers: Option<usize>,
    #[arg(long, default_value_t = 10)]
    batch_size: usize,
    #[arg(long, default_value_t = 2)]
    batch_timeout_ticks: u64,
    /// Wall-clock length of one logical tick.
    #[arg(long, default_value_t = 100)]
    tick_ms: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Serve(args) => serve(args),
        Command::Scenario(ScenarioCommand::Run(args)) => scenario_run(args),
        Command::Scenario(ScenarioCommand::List) => {
            for (name, _) in bundled::SCENARIOS {
                println!("{name}");
            }
            ExitCode::SUCCESS
        }
        Command::QueryProvenance { data_dir, format, commodity_id } => {
            query_provenance(&data_dir, &commodity_id, format)
        }
        Command::VerifyChain { data_dir, format } => verify_chain(&data_dir, format),
    }
}

fn fail(message: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {message}");
    ExitCode::from(1)
}

fn serve(args: ServeArgs) -> ExitCode {
    let network = NetworkConfig {
        peers: args.peers,
        endorsers: args.endorsers,
        required_endorsements: args.endorsements,
        max_batch_size: args.batch_size,
        batch_timeout_ticks: args.batch_timeout_ticks,
        ..NetworkConfig::default()
    };
    let service = match Service::open(ServiceConfig { network, seed: args.seed, data_dir: Some(args.data_dir) }) {
        Ok(service) => service,
        Err(e) => return fail(e),
    };
    let height = service.network().anchor().height();
    let runtime = match tokio::runtime::Runtime::new() {
        Ok(rt) => rt,
        Err(e) => return fail(e),
    };
    runtime.block_on(async move {
        let listener = match tokio::net::TcpListener::bind(args.listen).await {
            Ok(l) => l,
            Err(e) => return fail(format!("cannot bind {}: {e}", args.listen)),
        };
        let addr = listener.local_addr().map(|a| a.to_string()).unwrap_or_default();
        println!("listening on http://{addr} (chain height {height})");
        match tracer_api::serve(listener, AppState::new(service), Duration::from_millis(args.tick_ms.max(1))).await {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => fail(e),
        }
    })
}

fn scenario_run(args: RunArgs) -> ExitCode {
    let text = match (&args.scenario, &args.bundled) {
        (Some(path), _) => match fs::read_to_string(path) {
            Ok(text) => text,
            Err(e) => return fail(format!("{}: {e}", path.display())),
        },
        (None, Some(name)) => match bundled::get(name) {
            Some(text) => text.to_string(),
            None => return fail(format!("no bundled scenario named {name}")),
        },
        (None, None) => unreachable!("clap requires one of --scenario or --bundled"),
    };
    let scenario = match Scenario::parse(&text) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(2);
        }
    };
    let anchor = match &args.data_dir {
        None => Ledger::new(),
        Some(dir) => match Ledger::open(dir) {
            Ok(ledger) if ledger.height() == 0 => ledger,
            Ok(_) => {
                return fail(format!("{} already holds a chain; scenarios need an empty directory", dir.display()))
            }
            Err(e) => return fail(e),
        },
    };
    let run = match run_scenario_on(&scenario, args.seed, anchor) {
        Ok(run) => run,
        Err(e) => return fail(e),
    };

    if let Some(dir) = &args.data_dir {
        if let Err(e) = tracer_api::save_registry(dir, run.network.registry()) {
            return fail(e);
        }
    }

    let trace = run.trace_bytes();
    if let Some(path) = &args.trace {
        if let Err(e) = fs::write(path, &trace) {
            return fail(format!("{}: {e}", path.display()));
        }
    }
    let mut out = std::io::stdout().lock();
    match args.format {
        Format::Canonical => {
            let _ = out.write_all(&trace);
        }
        Format::Human => {
            let net = &run.network;
            let _ = writeln!(
                out,
                "scenario {:?} seed {}: {} steps, height {}, {} peers{}",
                scenario.name,
                args.seed,
                scenario.steps.len(),
                net.anchor().height(),
                net.peers().len(),
                if net.converged() { ", converged" } else { ", NOT converged" },
            );
            for (name, id) in &run.bindings {
                let _ = writeln!(out, "  ${name} = {id}");
            }
            for step in &run.steps {
                let _ = writeln!(out, "  step {:>3}: {}", step.step, step.outcome);
            }
        }
    }
    drop(out);

    if run.passed() {
        if args.format == Format::Human {
            println!("all expectations hold");
        }
        ExitCode::SUCCESS
    } else {
        for failure in &run.failures {
            eprintln!("expectation failed: {failure}");
        }
        ExitCode::from(1)
    }
}

fn query_provenance(data_dir: &Path, commodity_id: &str, format: Format) -> ExitCode {
    if !data_dir.join(LOG_FILE).exists() {
        return fail(format!("no ledger in {}", data_dir.display()));
    }
    let ledger = match Ledger::open(data_dir) {
        Ok(ledger) => ledger,
        Err(e) => return fail(e),
    };
    let provenance = match get_provenance(&ledger, commodity_id) {
        Ok(p) => p,
        Err(ChaincodeError::UnknownCommodity) => return fail(format!("unknown commodity {commodity_id}")),
        Err(e) => return fail(e.code()),
    };
    match format {
        Format::Canonical => println!("{}", String::from_utf8_lossy(&canonical::encode(&provenance))),
        Format::Human => {
            println!("{} ({}) owned by {}", provenance.commodity_id, provenance.description, provenance.owner);
            for event in &provenance.timeline {
                let v = event.version();
                match event {
                    ProvenanceEvent::Ownership(r) => {
                        println!("  [{}:{}] owner {} via {}", v.block_number, v.tx_index, r.owner, r.via_listing_id)
                    }
                    ProvenanceEvent::Renovation(r) => println!(
                        "  [{}:{}] renovation {} on {} by {}, cost {}: {}",
                        v.block_number,
                        v.tx_index,
                        r.renovation.renovation_id,
                        r.renovation.date,
                        r.renovation.renovating_owner,
                        r.renovation.cost,
                        r.renovation.description
                    ),
                }
            }
        }
    }
    ExitCode::SUCCESS
}

fn verify_chain(data_dir: &Path, format: Format) -> ExitCode {
    let path = data_dir.join(LOG_FILE);
    let report = match fs::read(&path) {
        Ok(bytes) => verify_log_bytes(&bytes, None),
        // An empty store is a genesis-only chain.
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => verify_log_bytes(&Ledger::new().log_bytes(), None),
        Err(e) => return fail(format!("{}: {e}", path.display())),
    };
    match format {
        Format::Canonical => println!("{}", String::from_utf8_lossy(&canonical::encode(&report))),
        Format::Human if report.ok => println!("chain ok: {} blocks verified", report.blocks_checked),
        Format::Human => {
            println!("chain INVALID: first bad block {}", report.first_bad_block.map_or("?".into(), |b| b.to_string()));
            for problem in &report.problems {
                println!("  block {}: {:?}: {}", problem.block, problem.kind, problem.detail);
            }
        }
    }
    if report.ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
