//! The kinetic limit of the tanh network: covariances relax from (1, 2)
//! to 1/2 and the balanced means follow.
//!
//!     cargo run --release --example limit_trajectory

use balnet::balance::{BalanceSystem, SolverOptions};
use balnet::limit::{integrate_limit, LimitOptions};
use balnet::presets;
use balnet::quadrature::GaussHermiteRule;

fn main() -> balnet::Result<()> {
    let system = BalanceSystem::new(&presets::test2_model(), GaussHermiteRule::default())?;
    let k0 = [1.0, 2.0];
    let (v0, _) = system.solve(k0[0], k0[1], &[0.0, 0.0], &SolverOptions::default())?;
    let traj = integrate_limit(
        &system,
        &v0,
        k0,
        &LimitOptions {
            record_stride: 500,
            ..LimitOptions::default()
        },
    )?;
    println!("{:>5} {:>10} {:>10} {:>8} {:>8} {:>9} {:>8}", "t", "v_e", "v_i", "K_e", "K_i", "|G|", "margin");
    for (k, s) in traj.states.iter().enumerate() {
        println!(
            "{:5.2} {:10.6} {:10.6} {:8.5} {:8.5} {:9.1e} {:8.4}",
            s.t, s.v[0], s.v[1], s.k_e, s.k_i, traj.residual_norms[k], traj.stability_margins[k]
        );
    }
    Ok(())
}
