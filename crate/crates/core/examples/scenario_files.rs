//! Scenario files: parse a bundled preset, shrink it, run it, and read the
//! CSV output back.
//!
//!     cargo run --release --example scenario_files [-- out-dir]

use balnet::config::{parse_config, Mode};
use balnet::presets;
use balnet::scenario::{read_csv, run_scenario, Overrides};

fn main() -> balnet::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "out/example".into());
    let mut config = parse_config(presets::TEST2)?;
    config.apply(&Overrides {
        mode: Some(Mode::Compare),
        n: Some(2000),
        seed: Some(11),
        out: Some(out.into()),
    })?;
    config.run.t_end = 1.0;

    let outcome = run_scenario(&config, None)?;
    for file in &outcome.files {
        println!("wrote {}", file.display());
    }
    let (columns, rows) = read_csv(&config.output.dir.join("particle.csv"))?;
    println!("particle.csv: {} rows of {}", rows.len(), columns.join(", "));
    print!("{}", std::fs::read_to_string(config.output.dir.join("verdict.txt"))?);
    std::process::exit(outcome.exit_code());
}
