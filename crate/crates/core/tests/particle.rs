use std::time::Instant;

use balnet::particle::{simulate, InitialLaw, ParticleSystem, SimConfig};
use balnet::{presets, GainSpec, GainTable, IntrinsicDynamics, NetworkModel, Population};
use nalgebra::{DMatrix, DVector};

fn config(model: NetworkModel, n: usize, means: Vec<f64>, variances: [f64; 2]) -> SimConfig {
    SimConfig {
        model,
        n,
        dt: 1e-3,
        t_end: 1.0,
        seed: 5,
        stride: 10,
        initial: InitialLaw { means, variances },
        workers: Some(1),
        snapshot_every: 0,
    }
}

const GOLDEN: &str = "tests/golden/em_step_n4.txt";

/// Two Euler–Maruyama steps of a 4-neuron ring, stored as exact bit
/// patterns. Set `BALNET_BLESS=1` to rewrite after an intended change.
#[test]
fn em_step_golden() {
    let mut c = config(presets::test3_model(), 4, vec![0.1, 0.2, -0.3, 0.0, 0.4, 0.1], [0.0625, 0.0625]);
    c.dt = 0.01;
    let sys = ParticleSystem::new(c).unwrap();
    let mut ens = sys.sample_initial();
    sys.em_step(&mut ens).unwrap();
    sys.em_step(&mut ens).unwrap();
    let text: String = Population::ALL
        .iter()
        .flat_map(|p| ens.states(*p).iter().enumerate().map(move |(j, z)| (p, j, z)))
        .map(|(p, j, z)| format!("{} {j} {:016x}\n", p.label(), z.to_bits()))
        .collect();
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join(GOLDEN);
    if std::env::var_os("BALNET_BLESS").is_some() {
        std::fs::write(&path, &text).unwrap();
    }
    assert_eq!(text, std::fs::read_to_string(&path).unwrap());
}

#[test]
fn worker_count_does_not_change_results() {
    let mut c = config(presets::test3_model(), 3001, vec![0.0, 0.2, 0.0, 0.0, 0.2, 0.0], [0.0625, 0.0625]);
    c.t_end = 0.2;
    c.snapshot_every = 5;
    let reference = simulate(c.clone()).unwrap();
    for workers in [2, 3, 8] {
        c.workers = Some(workers);
        assert_eq!(simulate(c.clone()).unwrap(), reference, "{workers} workers");
    }
    assert_eq!(reference.snapshots.len(), 5);
}

#[test]
fn stride_does_not_change_the_path() {
    let mut c = config(presets::test2_model(), 700, vec![0.08, 0.2], [1.0, 2.0]);
    c.t_end = 0.1;
    c.stride = 1;
    let fine = simulate(c.clone()).unwrap();
    c.stride = 25;
    let coarse = simulate(c).unwrap();
    assert_eq!(coarse.times.len(), 5);
    for (k, t) in coarse.times.iter().enumerate() {
        let j = fine.times.iter().position(|s| s == t).unwrap();
        assert_eq!(coarse.v_hat[k], fine.v_hat[j]);
        assert_eq!(coarse.k_hat[k], fine.k_hat[j]);
    }
}

#[test]
fn final_partial_stride_is_recorded() {
    let mut c = config(presets::test1_model(), 50, vec![0.5, 1.0], [0.5, 0.5]);
    c.t_end = 0.105;
    let series = simulate(c).unwrap();
    assert_eq!(series.times.len(), 12);
    assert!((series.times[11] - 0.105).abs() < 1e-12);
}

/// With no noise and identical neurons the network reduces to a linear ODE
/// `z' = b + M z` for the common state, solved exactly by the matrix
/// exponential; Euler–Maruyama must converge to it at first order.
#[test]
fn noiseless_linear_network_converges_at_first_order() {
    let mut model = presets::test1_model();
    model.dynamics = IntrinsicDynamics::linear([1.0, 1.0], [0.0, 0.0]);
    model.gains = GainTable([
        [GainSpec::Constant(1.0), GainSpec::Linear(1.0)],
        [GainSpec::Linear(1.0), GainSpec::Linear(0.5)],
    ]);
    let n = 4;
    let root_n = (n as f64).sqrt();
    // e: -z_e + √n (1 - z_i);  i: -z_i + √n (z_e - 0.5 z_i)
    let m = DMatrix::from_row_slice(2, 2, &[-1.0, -root_n, root_n, -1.0 - 0.5 * root_n]);
    let b = DVector::from_vec(vec![root_n, 0.0]);
    let z0 = DVector::from_vec(vec![0.2, 0.9]);
    let t_end = 1.0;
    let z_star = -m.clone().try_inverse().unwrap() * &b;
    let exact = &z_star + (m * t_end).exp() * (&z0 - &z_star);

    let error = |dt: f64| {
        let mut c = config(model.clone(), n, vec![0.2, 0.9], [0.0, 0.0]);
        c.dt = dt;
        c.t_end = t_end;
        let series = simulate(c).unwrap();
        let v = series.v_hat.last().unwrap();
        ((v[0] - exact[0]).powi(2) + (v[1] - exact[1]).powi(2)).sqrt()
    };
    let (e1, e2) = (error(0.01), error(0.005));
    let ratio = e1 / e2;
    assert!((1.8..2.2).contains(&ratio), "e1={e1:.3e} e2={e2:.3e} ratio={ratio:.3}");
}

/// Wall time per step grows linearly in `n`. Timing-sensitive, so only run
/// on request: `cargo test --release -- --ignored cost_scaling`.
#[test]
#[ignore]
fn cost_scaling_is_linear() {
    let per_step = |n: usize| {
        let mut c = config(presets::test2_model(), n, vec![0.08, 0.2], [1.0, 2.0]);
        c.workers = Some(1);
        let sys = ParticleSystem::new(c).unwrap();
        let mut ens = sys.sample_initial();
        let steps = (2_000_000 / n).max(5);
        let mut best = f64::INFINITY;
        for _ in 0..3 {
            let start = Instant::now();
            for _ in 0..steps {
                sys.em_step(&mut ens).unwrap();
            }
            best = best.min(start.elapsed().as_secs_f64() / steps as f64);
        }
        best
    };
    let (t3, t4, t5) = (per_step(1_000), per_step(10_000), per_step(100_000));
    for (lo, hi) in [(t3, t4), (t4, t5)] {
        let slope = (hi / lo).log10();
        assert!(slope > 1.0 / 1.3 && slope < 1.3, "t = {t3:.2e}, {t4:.2e}, {t5:.2e}");
    }
}
