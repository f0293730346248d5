use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use balnet::config::{parse_config, Mode};
use balnet::scenario::{run_scenario, Overrides};
use balnet::{presets, Error};

#[derive(Parser)]
#[command(name = "balnet", version, about = "Balanced E/I network simulator and limit solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file (or a bundled preset name).
    Run {
        #[arg(long)]
        config: String,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the bundled scenarios.
    Presets,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Limit,
    Particle,
    Compare,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Limit => Mode::Limit,
            ModeArg::Particle => Mode::Particle,
            ModeArg::Compare => Mode::Compare,
        }
    }
}

fn workers() -> Result<Option<usize>, String> {
    match std::env::var("NTHREADS") {
        Err(_) => Ok(None),
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(0) | Err(_) => Err(format!("NTHREADS must be a positive integer, got '{s}'")),
            Ok(k) => Ok(Some(k)),
        },
    }
}

fn run(config: &str, overrides: Overrides) -> Result<i32, String> {
    let text = match presets::get(config) {
        Some(text) if !std::path::Path::new(config).exists() => text.to_string(),
        _ => std::fs::read_to_string(config).map_err(|e| format!("cannot read {config}: {e}"))?,
    };
    let mut scenario = parse_config(&text).map_err(|e| format!("{config}: {e}"))?;
    scenario.apply(&overrides).map_err(|e| format!("{config}: {e}"))?;
    let outcome = run_scenario(&scenario, workers()?).map_err(|e| match e {
        Error::BlowUp { t, index, population, .. } => format!(
            "blow-up at t = {t}: {} neuron {index} left the bounded region (partial particle.csv written)",
            population.label()
        ),
        other => other.to_string(),
    })?;
    for f in &outcome.files {
        println!("wrote {}", f.display());
    }
    if let Some(report) = &outcome.report {
        println!(
            "sup mean error e = {:.4e}, i = {:.4e}, sup variance error = {:.4e}: {}",
            report.sup_mean_error[0],
            report.sup_mean_error[1],
            report.sup_var_error,
            if report.passed { "PASS" } else { "FAIL" }
        );
    }
    Ok(outcome.exit_code())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Presets => {
            for (name, summary, _) in presets::ALL {
                println!("{name:8} {summary}");
            }
            ExitCode::SUCCESS
        }
        Command::Run {
            config,
            mode,
            n,
            seed,
            out,
        } => {
            let overrides = Overrides {
                mode: mode.map(Mode::from),
                n,
                seed,
                out,
            };
            match run(&config, overrides) {
                Ok(0) => ExitCode::SUCCESS,
                Ok(code) => ExitCode::from(code as u8),
                Err(msg) => {
                    eprintln!("error: {msg}");
                    ExitCode::from(2)
                }
            }
        }
    }
}
