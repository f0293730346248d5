//! Balanced states of the two point networks: the root of the balance
//! residual, its Jacobian and the stability margin.
//!
//!     cargo run --release --example balance_roots

use balnet::balance::{BalanceSystem, MomentState, SolverOptions};
use balnet::presets;
use balnet::quadrature::GaussHermiteRule;

fn main() -> balnet::Result<()> {
    for (name, model, k) in [
        ("test1", presets::test1_model(), [0.5, 0.5]),
        ("test2", presets::test2_model(), [1.0, 2.0]),
        ("test2", presets::test2_model(), [0.5, 0.5]),
    ] {
        let system = BalanceSystem::new(&model, GaussHermiteRule::default())?;
        let (v, report) = system.solve(k[0], k[1], &[0.0, 0.0], &SolverOptions::default())?;
        println!("{name} at K = {k:?}: v = ({:.15}, {:.15})", v[0], v[1]);
        println!(
            "  {} Newton iterations, |G| = {:.1e}, stability margin {:.4}",
            report.iterations,
            report.residual_norm(),
            report.stability_margin
        );
        println!("  J = {:.5}", report.jacobian);
        let rhs = system.mean_rhs(&MomentState::new(v, k[0], k[1]))?;
        println!("  dv/dt on the balanced manifold = ({:.6}, {:.6})", rhs[0], rhs[1]);
    }
    Ok(())
}
