//! Particle networks of growing size against their kinetic limit: the sup
//! mean error and the Wasserstein distance of the fluctuations shrink
//! roughly like n^{-1/2}.
//!
//!     cargo run --release --example convergence

use balnet::analysis::{compare, Tolerances};
use balnet::balance::{BalanceSystem, SolverOptions};
use balnet::limit::{integrate_limit, LimitOptions};
use balnet::particle::{simulate, InitialLaw, SimConfig};
use balnet::presets;
use balnet::quadrature::GaussHermiteRule;

fn main() -> balnet::Result<()> {
    let model = presets::test2_model();
    let k0 = [1.0, 2.0];
    let system = BalanceSystem::new(&model, GaussHermiteRule::default())?;
    let (v0, _) = system.solve(k0[0], k0[1], &[0.0, 0.0], &SolverOptions::default())?;
    let t_end = 2.0;
    let traj = integrate_limit(
        &system,
        &v0,
        k0,
        &LimitOptions {
            t_end,
            record_stride: 10,
            ..LimitOptions::default()
        },
    )?;

    println!("{:>6} {:>10} {:>10} {:>10} {:>10}", "n", "err v_e", "err v_i", "err K", "sup W1");
    for n in [250, 1000, 4000, 16000] {
        let series = simulate(SimConfig {
            model: model.clone(),
            n,
            dt: 1e-3,
            t_end,
            seed: 4,
            stride: 10,
            initial: InitialLaw {
                means: v0.clone(),
                variances: k0,
            },
            workers: None,
            snapshot_every: 20,
        })?;
        let report = compare(&series, &traj, &Tolerances::default())?;
        println!(
            "{n:6} {:10.5} {:10.5} {:10.5} {:10.5}",
            report.sup_mean_error[0],
            report.sup_mean_error[1],
            report.sup_var_error,
            report.sup_wasserstein().unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
