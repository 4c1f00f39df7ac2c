use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qkdn_sim::report::{self, Format};
use qkdn_sim::scenario::{EXIT_CONFIG, EXIT_OTHER};
use qkdn_sim::{compare_protocols, parse_config, plot_series, run_scenario, Protocol, ScenarioConfig};

#[derive(Parser)]
#[command(name = "qkdn", version, about = "Onion-routed key distribution over simulated QKD networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scenario and report outcome and metrics.
    Run {
        #[command(flatten)]
        common: Common,
        /// Overrides the scenario protocol.
        #[arg(long)]
        protocol: Option<Protocol>,
    },
    /// Run the scenario and report secrecy and anonymity verdicts plus the transcript.
    Audit {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        protocol: Option<Protocol>,
    },
    /// Run the scenario once per protocol.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Comma-separated list; all protocols by default.
        #[arg(long, value_delimiter = ',')]
        protocol: Vec<Protocol>,
    },
    /// Columnar op-count series over line topologies with 1..=max-n relays.
    PlotData {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        protocol: Vec<Protocol>,
        #[arg(long, default_value_t = 6)]
        max_n: usize,
    },
}

fn load(common: &Common) -> Result<ScenarioConfig, (i32, String)> {
    let text = std::fs::read_to_string(&common.config)
        .map_err(|e| (EXIT_CONFIG, format!("{}: {e}", common.config.display())))?;
    let mut config = parse_config(&text).map_err(|e| (EXIT_CONFIG, format!("{}: {e}", common.config.display())))?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), (i32, String)> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| (EXIT_OTHER, format!("{}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn protocols(list: Vec<Protocol>) -> Vec<Protocol> {
    if list.is_empty() {
        Protocol::ALL.to_vec()
    } else {
        list
    }
}

fn execute(cli: Cli) -> Result<i32, (i32, String)> {
    let fail = |e: qkdn_sim::ScenarioError| (e.exit_code(), e.to_string());
    match cli.command {
        Command::Run { common, protocol } => {
            let mut config = load(&common)?;
            if let Some(p) = protocol {
                config.protocol = p;
            }
            let r = run_scenario(&config).map_err(fail)?;
            emit(common.out.as_deref(), &report::run_report(&r, &config, common.format))?;
            Ok(r.outcome.exit_code())
        }
        Command::Audit { common, protocol } => {
            let mut config = load(&common)?;
            if let Some(p) = protocol {
                config.protocol = p;
            }
            let r = run_scenario(&config).map_err(fail)?;
            emit(common.out.as_deref(), &report::audit_report(&r, &config, common.format))?;
            Ok(r.outcome.exit_code())
        }
        Command::Compare { common, protocol } => {
            let config = load(&common)?;
            let rows = compare_protocols(&config, &protocols(protocol)).map_err(fail)?;
            emit(common.out.as_deref(), &report::comparison_report(&rows, common.format))?;
            Ok(0)
        }
        Command::PlotData { common, protocol, max_n } => {
            let config = load(&common)?;
            let rows = plot_series(&config, &protocols(protocol), max_n).map_err(fail)?;
            emit(common.out.as_deref(), &report::plot_report(&rows, common.format))?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let code = match execute(Cli::parse()) {
        Ok(code) => code,
        Err((code, msg)) => {
            eprintln!("qkdn: {msg}");
            code
        }
    };
    ExitCode::from(code as u8)
}
