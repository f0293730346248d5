//! The ring network has no stable balanced state; finite networks
//! oscillate instead, and faster as they grow.
//!
//!     cargo run --release --example ring_oscillations [-- n1 n2 ...]

use balnet::analysis::dominant_frequency;
use balnet::balance::{BalanceSystem, SolverOptions};
use balnet::particle::{simulate, InitialLaw, SimConfig};
use balnet::quadrature::GaussHermiteRule;
use balnet::{presets, Error, Population};

fn main() -> balnet::Result<()> {
    let model = presets::test3_model();
    let k0 = presets::TEST3_EQUILIBRIUM_VARIANCE;

    let system = BalanceSystem::new(&model, GaussHermiteRule::default())?;
    let guess = [0.0, 0.2, 0.0, 0.0, 0.2, 0.0];
    match system.solve(k0, k0, &guess, &SolverOptions::default()) {
        Err(Error::UnstableRoot { report }) => println!(
            "limit: only balanced root is v = {:?}, stability margin {:.2e}",
            report.v, report.stability_margin
        ),
        other => println!("limit: unexpected {other:?}"),
    }

    let sizes: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let sizes = if sizes.is_empty() { vec![100, 500] } else { sizes };
    for n in sizes {
        let series = simulate(SimConfig {
            model: model.clone(),
            n,
            dt: 1e-3,
            t_end: 20.0,
            seed: 3,
            stride: 10,
            initial: InitialLaw {
                means: guess.to_vec(),
                variances: [k0, k0],
            },
            workers: None,
            snapshot_every: 0,
        })?;
        print!("n = {n:5}:");
        for p in Population::ALL {
            for (a, name) in ["1", "cos", "sin"].iter().enumerate() {
                let f = dominant_frequency(&series, p, a)?;
                print!("  f[{}{name}] = {f:.3}", p.label());
            }
        }
        let amp = series
            .coefficient(Population::Excitatory, 1)
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        println!("  max|v_e,cos| = {amp:.3}");
    }
    Ok(())
}
