use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use coopsense::fusion::FusionMode;
use coopsense::net::transport::configured_port;
use coopsense::scenario::{
    builtin_names, check_report, emit_report, run_scenario, Link, Mode, ReportFormat, RunOptions, ScenarioSpec,
};

const EXIT_RUNTIME: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_ACCEPTANCE: u8 = 3;

#[derive(Parser)]
#[command(name = "coopsense", version, about = "Vehicle-road cooperative perception scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Solo,
    Coop,
}

#[derive(Clone, Copy, ValueEnum)]
enum FusionArg {
    Feature,
    Pixel,
}

#[derive(Clone, Copy, ValueEnum)]
enum TransportArg {
    Inproc,
    Udp,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its report.
    Run {
        /// Built-in scenario name or path to a scenario file.
        #[arg(long)]
        scenario: String,
        #[arg(long, value_enum)]
        mode: ModeArg,
        #[arg(long, value_enum, default_value = "feature")]
        fusion: FusionArg,
        /// Defaults to the seed in the scenario file.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// UDP uses COOPSENSE_PORT, default 47800.
        #[arg(long, value_enum, default_value = "inproc")]
        transport: TransportArg,
        #[arg(long, value_enum, default_value = "json")]
        format: FormatArg,
    },
    /// List the built-in scenarios.
    ListScenarios,
    /// Parse and check a scenario file without running it.
    Validate { file: PathBuf },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::ListScenarios => {
            for name in builtin_names() {
                let spec = ScenarioSpec::builtin(name).expect("built-in scenarios parse");
                println!("{name}\t{}", spec.description);
            }
            ExitCode::SUCCESS
        }
        Command::Validate { file } => match ScenarioSpec::from_file(&file) {
            Ok(spec) => {
                println!("{}: ok ({} actors, {} ticks)", spec.name, spec.actors.len(), spec.duration_ticks);
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("{}: {e}", file.display());
                ExitCode::from(EXIT_CONFIG)
            }
        },
        Command::Run { scenario, mode, fusion, seed, out, transport, format } => {
            let spec = match ScenarioSpec::load(&scenario) {
                Ok(s) => s,
                Err(e) => {
                    eprintln!("{scenario}: {e}");
                    return ExitCode::from(EXIT_CONFIG);
                }
            };
            let options = RunOptions {
                mode: match mode {
                    ModeArg::Solo => Mode::Solo,
                    ModeArg::Coop => Mode::Coop,
                },
                fusion: match fusion {
                    FusionArg::Feature => FusionMode::Feature,
                    FusionArg::Pixel => FusionMode::Pixel,
                },
                seed: seed.unwrap_or(spec.seed),
                link: match transport {
                    TransportArg::Inproc => Link::InProcess,
                    TransportArg::Udp => Link::Udp { port: configured_port() },
                },
            };
            let report = match run_scenario(&spec, &options) {
                Ok(r) => r,
                Err(e) => {
                    eprintln!("run failed: {e}");
                    return ExitCode::from(EXIT_RUNTIME);
                }
            };
            let format = match format {
                FormatArg::Json => ReportFormat::Json,
                FormatArg::Csv => ReportFormat::Csv,
            };
            if let Err(e) = emit_report(&report, format, &out) {
                eprintln!("{e}");
                return ExitCode::from(EXIT_RUNTIME);
            }
            let checks = check_report(&report);
            let mut failed = false;
            for c in &checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
                failed |= !c.passed;
            }
            if failed {
                ExitCode::from(EXIT_ACCEPTANCE)
            } else {
                ExitCode::SUCCESS
            }
        }
    }
}
