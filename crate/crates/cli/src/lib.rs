//! The `infernet` command line.
//!
//! Machine-readable output goes to stdout and diagnostics to stderr. The exit
//! code is 0 on success, 1 on a domain error (invalid network, unreadable
//! dataset, ...) and 2 on a usage error.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, BufRead, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use infernet::simulator::SimulationError;
use infernet::{
    compare_report, generate_dataset, load_network, run_trials, transform_tree, ComparisonReport,
    Dataset, DepthVector, EvidenceValue, LoadError, Mode, Network, NodeId, StrategySpec,
};
use infernet_service::{Observation, ServiceError, SessionManager, SessionRecord};
use thiserror::Error;

#[derive(Debug, Parser)]
#[command(
    name = "infernet",
    version,
    about = "Evidential reasoning on tree inference networks"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a network file and print "valid" or the list of violations.
    Validate {
        #[arg(long)]
        network: PathBuf,
    },
    /// Condense a network under a depth vector and print the virtual tree.
    Transform {
        #[arg(long)]
        network: PathBuf,
        /// Comma-separated level jumps, e.g. "1,1".
        #[arg(long)]
        depth_vector: DepthVector,
        /// Write to this file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Interactive diagnosis session in the terminal.
    Run {
        #[arg(long)]
        network: PathBuf,
        /// Strategy JSON file, or a bare mode name (flat, grouped, distributed, isolated).
        #[arg(long, default_value = "grouped")]
        strategy: String,
        /// Persist the session log in this store directory.
        #[arg(long)]
        store: Option<PathBuf>,
    },
    /// Sample cases from a network and write them as CSV.
    Generate {
        #[arg(long)]
        network: PathBuf,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        n: u64,
        #[arg(long)]
        seed: u64,
        /// Write to this file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sample cases and compare strategies on them.
    Simulate {
        #[arg(long)]
        network: PathBuf,
        /// Strategy JSON file or mode name; repeat to compare several.
        #[arg(long, required = true)]
        strategy: Vec<String>,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        n: u64,
        #[arg(long)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// Compare strategies on an existing dataset.
    Compare {
        #[arg(long)]
        network: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, required = true)]
        strategy: Vec<String>,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// Serve the session API over HTTP.
    Serve {
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        /// Store directory; sessions are kept in memory only when omitted.
        #[arg(long)]
        store: Option<PathBuf>,
        /// Networks to register at startup.
        #[arg(long)]
        network: Vec<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Json,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Read { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Network { path: PathBuf, source: LoadError },
    #[error("{0}")]
    Strategy(String),
    #[error(transparent)]
    Simulation(#[from] SimulationError),
    #[error(transparent)]
    Service(#[from] ServiceError),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("{0}")]
    Domain(String),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

/// Streams a command runs against.
pub struct Io<'a> {
    pub input: &'a mut dyn BufRead,
    pub out: &'a mut dyn Write,
    pub err: &'a mut dyn Write,
}

pub fn read_network(path: &Path) -> Result<Network, CliError> {
    let bytes = fs::read(path).map_err(|source| CliError::Read {
        path: path.into(),
        source,
    })?;
    load_network(&bytes).map_err(|source| CliError::Network {
        path: path.into(),
        source,
    })
}

/// Reads a strategy JSON file. An argument that is not a file but names a
/// mode gives that mode with default settings.
pub fn read_strategy(arg: &str) -> Result<StrategySpec, CliError> {
    let path = Path::new(arg);
    if path.is_file() {
        let text = fs::read_to_string(path).map_err(|source| CliError::Read {
            path: path.into(),
            source,
        })?;
        return serde_json::from_str(&text).map_err(|e| CliError::Strategy(format!("{arg}: {e}")));
    }
    let mode = match arg {
        "flat" => Mode::Flat,
        "grouped" => Mode::Grouped,
        "distributed" => Mode::Distributed,
        "isolated" => Mode::Isolated,
        _ => {
            return Err(CliError::Strategy(format!(
                "{arg}: no such strategy file or mode"
            )))
        }
    };
    Ok(StrategySpec::new(mode))
}

fn write_output(out: Option<&Path>, text: &str, io: &mut Io) -> Result<(), CliError> {
    match out {
        Some(p) => fs::write(p, text).map_err(|source| CliError::Read {
            path: p.into(),
            source,
        }),
        None => Ok(io.out.write_all(text.as_bytes())?),
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_owned(), |x| format!("{x:.3}"))
}

/// Renders a comparison report as a fixed-width table or as JSON.
pub fn render_report(report: &ComparisonReport, format: Format) -> Result<String, CliError> {
    if report.strategies.is_empty() {
        return Err(CliError::Domain("empty report".into()));
    }
    if format == Format::Json {
        let mut s =
            serde_json::to_string_pretty(report).map_err(|e| CliError::Domain(e.to_string()))?;
        s.push('\n');
        return Ok(s);
    }
    let width = report
        .strategies
        .iter()
        .map(|s| s.strategy.len())
        .chain(["strategy".len()])
        .max()
        .unwrap_or(8);
    let mut s = String::new();
    writeln!(
        s,
        "{:<width$}  {:>7}  {:>7}  {:>8}  {:>9}  {:>6}  {:>6}  {:>6}  {:>8}",
        "strategy", "trials", "mean_q", "median_q", "mean_cost", "+", "\u{2212}", "?", "accuracy"
    )
    .unwrap();
    for row in &report.strategies {
        writeln!(
            s,
            "{:<width$}  {:>7}  {:>7.3}  {:>8.1}  {:>9.3}  {:>6}  {:>6}  {:>6}  {:>8}",
            row.strategy,
            row.trials,
            row.mean_queries,
            row.median_queries,
            row.mean_cost,
            row.root.positive,
            row.root.negative,
            row.root.undecided,
            fmt_opt(row.root.accuracy),
        )
        .unwrap();
    }
    Ok(s)
}

fn compare_on(
    net: Network,
    dataset: &Dataset,
    strategies: &[String],
    seed: Option<u64>,
) -> Result<ComparisonReport, CliError> {
    let net = Arc::new(net);
    let mut groups = Vec::new();
    for arg in strategies {
        let spec = read_strategy(arg)?;
        groups.push(run_trials(&net, &spec.label(), &spec, dataset)?);
    }
    Ok(compare_report(&net, seed, &groups)?)
}

enum Answer {
    Value(EvidenceValue),
    Override(NodeId, EvidenceValue),
    Skip,
    Quit,
}

fn parse_reading(s: &str) -> Result<EvidenceValue, String> {
    let v: f64 = s.trim().parse().map_err(|_| format!("not a number: {s}"))?;
    EvidenceValue::from_reading(v).map_err(|e| e.to_string())
}

fn parse_answer(line: &str) -> Result<Answer, String> {
    let line = line.trim();
    match line {
        "1" => Ok(Answer::Value(EvidenceValue::Hard(true))),
        "0" => Ok(Answer::Value(EvidenceValue::Hard(false))),
        "skip" => Ok(Answer::Skip),
        "quit" | "q" => Ok(Answer::Quit),
        _ => {
            if let Some(v) = line.strip_prefix("s=") {
                return parse_reading(v).map(Answer::Value);
            }
            if let Some((node, v)) = line.split_once('=') {
                return parse_reading(v).map(|v| Answer::Override(NodeId::new(node.trim()), v));
            }
            Err(format!("unrecognized answer {line:?}"))
        }
    }
}

/// Drives one session from line-oriented answers. Returns the closed record.
pub fn run_session(
    manager: &SessionManager,
    network: &str,
    strategy: StrategySpec,
    io: &mut Io,
) -> Result<SessionRecord, CliError> {
    let id = manager.create_session(network, strategy)?.session_id;
    let mut excluded: Vec<NodeId> = Vec::new();
    loop {
        let view = manager.get_state(&id)?;
        if view.decisions.is_some() {
            break;
        }
        let leaf = match manager.suggest(&id, &excluded)? {
            Some(leaf) => leaf,
            None if excluded.is_empty() => break,
            None => {
                writeln!(
                    io.err,
                    "every remaining indicator was skipped; asking again"
                )?;
                excluded.clear();
                continue;
            }
        };
        let root = &view.nodes[0];
        writeln!(io.err, "P({}) = {:.3}", root.id, root.posterior)?;
        write!(io.err, "Observe {leaf}? [1/0/s=<soft>/skip/quit] ")?;
        io.err.flush()?;
        let mut line = String::new();
        if io.input.read_line(&mut line)? == 0 {
            writeln!(io.err)?;
            break;
        }
        let obs = match parse_answer(&line) {
            Ok(Answer::Quit) => break,
            Ok(Answer::Skip) => {
                excluded.push(leaf);
                continue;
            }
            Ok(Answer::Value(value)) => Observation {
                node: leaf,
                value,
                overridden: false,
                excluded: std::mem::take(&mut excluded),
            },
            Ok(Answer::Override(node, value)) => Observation {
                node,
                value,
                overridden: true,
                excluded: Vec::new(),
            },
            Err(msg) => {
                writeln!(io.err, "{msg}")?;
                continue;
            }
        };
        let retry = obs.excluded.clone();
        if let Err(e) = manager.observe(&id, obs) {
            writeln!(io.err, "{e}")?;
            excluded = retry;
        } else {
            excluded.clear();
        }
    }
    let record = manager.close(&id)?;
    if let Some(decisions) = record.state.decisions() {
        for (node, d) in decisions {
            writeln!(io.err, "{node}: {d}")?;
        }
    } else {
        writeln!(io.err, "session closed before a decision")?;
    }
    Ok(record)
}

pub fn dispatch(cli: Cli, io: &mut Io) -> Result<(), CliError> {
    match cli.command {
        Command::Validate { network } => {
            let bytes = fs::read(&network).map_err(|source| CliError::Read {
                path: network.clone(),
                source,
            })?;
            match load_network(&bytes) {
                Ok(_) => writeln!(io.out, "valid")?,
                Err(LoadError::Invalid(violations)) => {
                    for v in &violations {
                        writeln!(io.err, "{v}")?;
                    }
                    return Err(CliError::Domain(format!(
                        "{} violation(s)",
                        violations.len()
                    )));
                }
                Err(e) => {
                    return Err(CliError::Network {
                        path: network,
                        source: e,
                    })
                }
            }
        }
        Command::Transform {
            network,
            depth_vector,
            out,
        } => {
            let net = read_network(&network)?;
            let vt =
                transform_tree(&net, &depth_vector).map_err(|e| CliError::Domain(e.to_string()))?;
            let mut text =
                serde_json::to_string_pretty(&vt).map_err(|e| CliError::Domain(e.to_string()))?;
            text.push('\n');
            write_output(out.as_deref(), &text, io)?;
        }
        Command::Run {
            network,
            strategy,
            store,
        } => {
            let net = read_network(&network)?;
            let spec = read_strategy(&strategy)?;
            let manager = match store {
                Some(dir) => SessionManager::with_store(dir)?,
                None => SessionManager::in_memory(),
            };
            let name = net.name().to_owned();
            manager.register(net)?;
            let record = run_session(&manager, &name, spec, io)?;
            let text = serde_json::to_string_pretty(&record)
                .map_err(|e| CliError::Domain(e.to_string()))?;
            writeln!(io.out, "{text}")?;
        }
        Command::Generate {
            network,
            n,
            seed,
            out,
        } => {
            let net = read_network(&network)?;
            let dataset = generate_dataset(&net, n as usize, seed)?;
            write_output(out.as_deref(), &dataset.to_csv_string(), io)?;
        }
        Command::Simulate {
            network,
            strategy,
            n,
            seed,
            format,
        } => {
            let net = read_network(&network)?;
            let dataset = generate_dataset(&net, n as usize, seed)?;
            let report = compare_on(net, &dataset, &strategy, Some(seed))?;
            io.out
                .write_all(render_report(&report, format)?.as_bytes())?;
        }
        Command::Compare {
            network,
            dataset,
            strategy,
            format,
        } => {
            let net = read_network(&network)?;
            let file = fs::File::open(&dataset).map_err(|source| CliError::Read {
                path: dataset.clone(),
                source,
            })?;
            let data = Dataset::read_csv(io::BufReader::new(file))?;
            let report = compare_on(net, &data, &strategy, None)?;
            io.out
                .write_all(render_report(&report, format)?.as_bytes())?;
        }
        Command::Serve {
            host,
            port,
            store,
            network,
        } => {
            let addr: SocketAddr = format!("{host}:{port}")
                .parse()
                .map_err(|_| CliError::Usage(format!("--host: not an address: {host}")))?;
            let manager = match store {
                Some(dir) => SessionManager::with_store(dir)?,
                None => SessionManager::in_memory(),
            };
            for path in &network {
                manager.register(read_network(path)?)?;
            }
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(infernet_service::serve(Arc::new(manager), addr))?;
        }
    }
    Ok(())
}
