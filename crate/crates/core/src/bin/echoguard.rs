use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use echoguard::agent::{Agent, AgentError, LogSubmission};
use echoguard::bench::{self, BenchError, CorpusSpec, EvalMode};
use echoguard::config::Config;
use echoguard::detection::Detector;
use echoguard::embedding::HashEmbedder;
use echoguard::graph::NodeId;
use echoguard::ontology::ConfigError;
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(name = "echoguard", version, about = "Log, analyze and reflect on interpersonal interactions")]
struct Cli {
    /// Configuration file; the built-in ontology is used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory holding per-user logs.
    #[arg(long, global = true, default_value = "echoguard-data")]
    data_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP API.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
    },
    /// Log submissions (one JSON object per line) and run a full cycle for each.
    Log {
        #[arg(long)]
        user: String,
        #[arg(long)]
        file: PathBuf,
    },
    /// Print the stored analysis of an event.
    Analyze {
        #[arg(long)]
        user: String,
        #[arg(long)]
        event: u64,
    },
    /// Evaluate a corpus.
    Bench {
        #[arg(long)]
        corpus: PathBuf,
        /// full, keyword_only, no_memory or all.
        #[arg(long, default_value = "all")]
        mode: String,
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Seed the corpus was generated with, recorded in the report.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Generate a synthetic corpus.
    GenCorpus {
        #[arg(long, default_value_t = 200)]
        n: usize,
        #[arg(long, default_value_t = 0.3)]
        foil_rate: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Use bank entries verbatim instead of paraphrasing them.
        #[arg(long)]
        verbatim: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a user's mutation log as JSON lines.
    Export {
        #[arg(long)]
        user: String,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Exit code 1 for bad input or missing entities, 2 for I/O failures.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn input(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }

    fn io(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<AgentError> for Failure {
    fn from(e: AgentError) -> Self {
        match e {
            AgentError::Io(_) | AgentError::Internal(_) => Failure::io(e.to_string()),
            _ => Failure::input(e.to_string()),
        }
    }
}

impl From<BenchError> for Failure {
    fn from(e: BenchError) -> Self {
        match e {
            BenchError::Io(_) => Failure::io(e.to_string()),
            BenchError::Agent(a) => a.into(),
            _ => Failure::input(e.to_string()),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io(_) => Failure::io(format!("config: {e}")),
            _ => Failure::input(format!("config: {e}")),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::io(e.to_string())
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::io(format!("{}: {e}", path.display())))
}

fn open(path: &Path) -> Result<BufReader<File>, Failure> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Failure::io(format!("{}: {e}", path.display())))
}

fn print_json<T: serde::Serialize>(value: &T) {
    println!("{}", serde_json::to_string(value).expect("serializable"));
}

fn run(cli: Cli) -> Result<(), Failure> {
    let config = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    let agent = || Agent::builder(config.clone()).data_dir(&cli.data_dir).build();
    match cli.command {
        Command::Serve { addr } => {
            let agent = Arc::new(agent()?);
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(echoguard::service::serve(agent, addr))?;
        }
        Command::Log { user, file } => {
            let agent = agent()?;
            agent.ensure_user(&user)?;
            for (i, line) in open(&file)?.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let submission: LogSubmission =
                    serde_json::from_str(&line).map_err(|e| Failure::input(format!("{}:{}: {e}", file.display(), i + 1)))?;
                print_json(&agent.run_cycle(&user, &submission)?);
            }
        }
        Command::Analyze { user, event } => {
            print_json(&agent()?.stored_analysis(&user, NodeId(event))?);
        }
        Command::Bench {
            corpus,
            mode,
            report,
            csv,
            seed,
        } => {
            let modes: Vec<EvalMode> = if mode == "all" {
                EvalMode::ALL.to_vec()
            } else {
                vec![mode.parse()?]
            };
            let corpus = bench::read_corpus(open(&corpus)?)?;
            let detector = Detector::new(config.kg.clone(), Arc::new(HashEmbedder), config.detection.clone());
            let reports = modes
                .into_iter()
                .map(|m| bench::run_eval(&corpus, &config, &detector, m, seed))
                .collect::<Result<Vec<_>, _>>()?;
            let markdown = bench::render_markdown(&reports);
            match report {
                Some(p) => create(&p)?.write_all(markdown.as_bytes())?,
                None => print!("{markdown}"),
            }
            if let Some(p) = csv {
                create(&p)?.write_all(bench::render_csv(&reports).as_bytes())?;
            }
        }
        Command::GenCorpus {
            n,
            foil_rate,
            seed,
            verbatim,
            out,
        } => {
            if !(0.0..=1.0).contains(&foil_rate) {
                return Err(Failure::input("--foil-rate must lie in [0, 1]"));
            }
            let spec = CorpusSpec {
                noise: !verbatim,
                ..CorpusSpec::new(seed, n, foil_rate)
            };
            bench::write_corpus(&bench::gen_corpus(&spec, &config), create(&out)?)?;
        }
        Command::Export { user, out } => {
            let records = agent()?.export_log(&user)?;
            let mut w = create(&out)?;
            for r in &records {
                serde_json::to_writer(&mut w, r).map_err(|e| Failure::io(e.to_string()))?;
                w.write_all(b"\n")?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
