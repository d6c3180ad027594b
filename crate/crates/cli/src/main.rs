use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fusesim_core::{parse_scenario, run_matrix, run_scenario, ChainParams, ProtocolKind, Scenario, TraceFormat};

#[derive(Parser)]
#[command(name = "fusesim", version, about = "Timed-commitment protocols against a malleating network")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario file and emit its trace.
    Run {
        scenario: PathBuf,
        /// Override the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Write the trace here instead of stdout.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long, default_value = "records")]
        format: TraceFormat,
    },
    /// Run every strategy combination of a protocol and summarize verdicts.
    Matrix {
        protocol: ProtocolKind,
        #[arg(long, default_value_t = 1)]
        max_bb: u64,
        #[arg(long, default_value_t = Scenario::DEFAULT_D)]
        d: u64,
        #[arg(long, default_value_t = Scenario::DEFAULT_T)]
        t: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "text")]
        format: TraceFormat,
    },
}

const EXIT_UNEXPECTED: u8 = 1;
const EXIT_CONFIG: u8 = 2;

fn config_error(message: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {message}");
    ExitCode::from(EXIT_CONFIG)
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run { scenario, seed, trace, format } => {
            let text = match fs::read_to_string(&scenario) {
                Ok(text) => text,
                Err(e) => return config_error(format!("{}: {e}", scenario.display())),
            };
            let mut parsed = match parse_scenario(&text) {
                Ok(s) => s,
                Err(e) => return config_error(e),
            };
            if let Some(seed) = seed {
                parsed = parsed.with_seed(seed);
            }
            let report = match run_scenario(&parsed) {
                Ok(r) => r,
                Err(e) => return config_error(e),
            };
            let rendered = report.trace.render(format);
            match trace {
                Some(path) => {
                    if let Err(e) = fs::write(&path, rendered) {
                        eprintln!("error: {}: {e}", path.display());
                        return ExitCode::FAILURE;
                    }
                }
                None => print!("{rendered}"),
            }
            let v = &report.verdict;
            eprintln!(
                "verdict {} dA={:+} dB={:+} phase={} conserved={}",
                v.classification, v.deltas[0], v.deltas[1], v.phase, v.conserved
            );
            if parsed.protocol != ProtocolKind::ScsLegacy && v.classification.is_unfair() {
                return ExitCode::from(EXIT_UNEXPECTED);
            }
            ExitCode::SUCCESS
        }
        Command::Matrix { protocol, max_bb, d, t, seed, format } => {
            let params = match ChainParams::new(max_bb, d, t) {
                Ok(p) => p,
                Err(e) => return config_error(e),
            };
            let summary = match run_matrix(protocol, params, seed) {
                Ok(s) => s,
                Err(e) => return config_error(e),
            };
            print!("{}", summary.render(format));
            if summary.as_expected() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_UNEXPECTED)
            }
        }
    }
}
