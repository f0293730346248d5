//! A 4000-neuron linear network started on its balanced state: the
//! empirical means and fluctuation variances stay near 0.5, 1.0 and 0.5.
//!
//!     cargo run --release --example particle_network [-- n]

use balnet::particle::{InitialLaw, ParticleSystem, SimConfig};
use balnet::presets;

fn main() -> balnet::Result<()> {
    let n = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(4000);
    let sys = ParticleSystem::new(SimConfig {
        model: presets::test1_model(),
        n,
        dt: 1e-3,
        t_end: 5.0,
        seed: 1,
        stride: 500,
        initial: InitialLaw {
            means: vec![0.5, 1.0],
            variances: [0.5, 0.5],
        },
        workers: None,
        snapshot_every: 0,
    })?;
    let series = sys.run()?;
    println!("n = {n}");
    println!("{:>5} {:>9} {:>9} {:>9} {:>9} {:>9}", "t", "v_e", "v_i", "K_e", "K_i", "defect");
    for k in 0..series.len() {
        let (v, kk) = (&series.v_hat[k], series.k_hat[k]);
        println!(
            "{:5.2} {:9.5} {:9.5} {:9.5} {:9.5} {:9.1e}",
            series.times[k], v[0], v[1], kk[0], kk[1], series.projection_defect[k]
        );
    }
    Ok(())
}
