//! Euler–Maruyama integration of the `2n`-neuron network
//!
//! ```text
//! dz_α^j = { f_α(z_α^j) + n^{-1/2} Σ_k [ K_αe(x^j,x^k) G_αe(z_e^k) - K_αi(x^j,x^k) G_αi(z_i^k) ] } dt
//!          + σ_α(x^j, z_α^j) dW_α^j
//! ```
//!
//! The kernel has rank `M`, so the `O(n²)` double sum is evaluated as
//! `4M` basis-weighted sums `S_αβ,b = Σ_k h_b(x^k) G_αβ(z_β^k)` followed by an
//! `O(nM)` synthesis. The sums go through a fixed-shape tree and the noise
//! is counter-based, which makes every run bit-identical for any worker
//! count.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::limit::step_count;
use crate::model::{NetworkModel, Population, ProjectionWorkspace};
use crate::reduce::tree_sum;
use crate::rng::{NormalStream, Purpose};

/// States beyond this magnitude abort the run.
pub const BLOW_UP_THRESHOLD: f64 = 1e6;

const CHUNK: usize = 1024;

/// Law of the initial states: `z_α^j(0) = m_α(x^j) + sqrt(K_α(0)) ζ_α^j`.
#[derive(Clone, Debug, PartialEq)]
pub struct InitialLaw {
    /// Mean basis coefficients, `2M`, excitatory first.
    pub means: Vec<f64>,
    /// `[K_e(0), K_i(0)]`.
    pub variances: [f64; 2],
}

#[derive(Clone, Debug)]
pub struct SimConfig {
    pub model: NetworkModel,
    pub n: usize,
    pub dt: f64,
    pub t_end: f64,
    pub seed: u64,
    /// Steps between recorded observables.
    pub stride: usize,
    pub initial: InitialLaw,
    /// Worker threads; `None` uses rayon's default. Never changes results.
    pub workers: Option<usize>,
    /// Keep the fluctuations `y` at every this many records; 0 keeps none.
    pub snapshot_every: usize,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Validation("n must be at least 1".into()));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Validation(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_end >= self.dt) {
            return Err(Error::Validation(format!("T = {} must be at least dt", self.t_end)));
        }
        if self.stride == 0 {
            return Err(Error::Validation("observable stride must be at least 1".into()));
        }
        if self.initial.means.len() != self.model.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.model.dim(),
                got: self.initial.means.len(),
            });
        }
        for k in self.initial.variances {
            if !(k >= 0.0) {
                return Err(Error::NegativeVariance(k));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParticleEnsemble {
    pub z_e: Vec<f64>,
    pub z_i: Vec<f64>,
    pub t: f64,
    /// Number of steps taken so far.
    pub step: u64,
}

impl ParticleEnsemble {
    pub fn n(&self) -> usize {
        self.z_e.len()
    }

    pub fn states(&self, p: Population) -> &[f64] {
        match p {
            Population::Excitatory => &self.z_e,
            Population::Inhibitory => &self.z_i,
        }
    }
}

/// Fluctuations at one recorded time.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub y_e: Vec<f64>,
    pub y_i: Vec<f64>,
}

/// Empirical observables of one run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ObservableSeries {
    pub times: Vec<f64>,
    /// Empirical mean coefficients `v̂`, `2M` per time, excitatory first.
    pub v_hat: Vec<Vec<f64>>,
    /// Fluctuation sample variances `[K̂_e, K̂_i]`.
    pub k_hat: Vec<[f64; 2]>,
    /// `max_{α,a} |Σ_j h_a(x^j) y_α^j| / (n max|z|)`; zero up to rounding.
    pub projection_defect: Vec<f64>,
    pub snapshots: Vec<Snapshot>,
}

impl ObservableSeries {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Time series of one mean coefficient.
    pub fn coefficient(&self, p: Population, a: usize) -> Vec<f64> {
        let m = self.v_hat.first().map_or(0, |v| v.len() / 2);
        self.v_hat.iter().map(|v| v[p.index() * m + a]).collect()
    }
}

/// Observables of one ensemble.
#[derive(Clone, Debug)]
pub struct Observation {
    pub v_hat: Vec<f64>,
    pub k_hat: [f64; 2],
    pub projection_defect: f64,
    pub y_e: Vec<f64>,
    pub y_i: Vec<f64>,
}

/// A configured particle system: projection tables, noise stream and
/// worker pool for one `(model, n, seed)`.
pub struct ParticleSystem {
    config: SimConfig,
    workspace: ProjectionWorkspace,
    noise: NormalStream,
    pool: rayon::ThreadPool,
}

impl ParticleSystem {
    pub fn new(config: SimConfig) -> Result<Self> {
        config.validate()?;
        let workspace = ProjectionWorkspace::build(&config.model.basis, config.n)?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers.unwrap_or(0))
            .build()
            .map_err(|e| Error::Validation(format!("cannot start worker pool: {e}")))?;
        let noise = NormalStream::new(config.seed);
        Ok(Self {
            config,
            workspace,
            noise,
            pool,
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn workspace(&self) -> &ProjectionWorkspace {
        &self.workspace
    }

    /// Draws the initial ensemble; deterministic given the seed.
    pub fn sample_initial(&self) -> ParticleEnsemble {
        let m = self.config.model.basis.len();
        let init = &self.config.initial;
        let draw = |p: Population| -> Vec<f64> {
            let means = &init.means[p.index() * m..(p.index() + 1) * m];
            let sd = init.variances[p.index()].sqrt();
            self.pool.install(|| {
                (0..self.config.n)
                    .into_par_iter()
                    .map(|j| {
                        let mean = self.workspace.synthesize(means, j);
                        if sd == 0.0 {
                            mean
                        } else {
                            mean + sd * self.noise.normal(Purpose::InitialState, 0, j, p)
                        }
                    })
                    .collect()
            })
        };
        ParticleEnsemble {
            z_e: draw(Population::Excitatory),
            z_i: draw(Population::Inhibitory),
            t: 0.0,
            step: 0,
        }
    }

    /// `u_α,a = Σ_b c_αe,ab S_αe,b - c_αi,ab S_αi,b`, so that the interaction
    /// drift of neuron `j` is `n^{-1/2} Σ_a h_a(x^j) u_α,a`.
    fn interaction_coefficients(&self, ens: &ParticleEnsemble) -> [Vec<f64>; 2] {
        let m = self.workspace.rank();
        let gains = &self.config.model.gains;
        let kernel = &self.config.model.kernel;
        let ws = &self.workspace;
        // Layout: [(α, β, b)] = (2α + β) M + b.
        let sums = tree_sum(ens.n(), 4 * m, |range, acc| {
            for j in range {
                let h = ws.basis_row(j);
                for alpha in Population::ALL {
                    for beta in Population::ALL {
                        let g = gains.get(alpha, beta).value(ens.states(beta)[j]);
                        let off = (2 * alpha.index() + beta.index()) * m;
                        for b in 0..m {
                            acc[off + b] += h[b] * g;
                        }
                    }
                }
            }
        });
        Population::ALL.map(|alpha| {
            let s_e = &sums[(2 * alpha.index()) * m..(2 * alpha.index() + 1) * m];
            let s_i = &sums[(2 * alpha.index() + 1) * m..(2 * alpha.index() + 2) * m];
            (0..m)
                .map(|a| {
                    (0..m)
                        .map(|b| {
                            kernel.coeff(alpha, Population::Excitatory, a, b) * s_e[b]
                                - kernel.coeff(alpha, Population::Inhibitory, a, b) * s_i[b]
                        })
                        .sum()
                })
                .collect()
        })
    }

    /// Per-neuron interaction drift `(e, i)` via the rank-`M` factorisation.
    pub fn interaction_drift(&self, ens: &ParticleEnsemble) -> (Vec<f64>, Vec<f64>) {
        let u = self.pool.install(|| self.interaction_coefficients(ens));
        let scale = 1.0 / (ens.n() as f64).sqrt();
        let synth = |p: Population| -> Vec<f64> {
            (0..ens.n())
                .map(|j| scale * self.workspace.synthesize(&u[p.index()], j))
                .collect()
        };
        (synth(Population::Excitatory), synth(Population::Inhibitory))
    }

    /// One Euler–Maruyama step. On blow-up the ensemble holds the offending
    /// state and `Error::BlowUp` carries an empty partial series.
    pub fn em_step(&self, ens: &mut ParticleEnsemble) -> Result<()> {
        self.pool.install(|| self.em_step_inner(ens))
    }

    fn em_step_inner(&self, ens: &mut ParticleEnsemble) -> Result<()> {
        let dt = self.config.dt;
        let sqrt_dt = dt.sqrt();
        let scale = 1.0 / (ens.n() as f64).sqrt();
        let u = self.interaction_coefficients(ens);
        let dynamics = &self.config.model.dynamics;
        let ws = &self.workspace;
        let noise = &self.noise;
        let step = ens.step;
        let positions = ws.positions();

        ens.z_e
            .par_chunks_mut(CHUNK)
            .zip(ens.z_i.par_chunks_mut(CHUNK))
            .enumerate()
            .for_each(|(c, (ze, zi))| {
                let base = c * CHUNK;
                for (k, (ze, zi)) in ze.iter_mut().zip(zi.iter_mut()).enumerate() {
                    let j = base + k;
                    let x = positions[j];
                    let mut xi: Option<[f64; 2]> = None;
                    for (p, z) in [(Population::Excitatory, ze), (Population::Inhibitory, zi)] {
                        let drift = dynamics.drift(p).eval(*z) + scale * ws.synthesize(&u[p.index()], j);
                        let sigma = dynamics.noise(p).eval(x, *z);
                        let kick = if sigma == 0.0 {
                            0.0
                        } else {
                            let xi = xi.get_or_insert_with(|| noise.pair(Purpose::Increment, step, j));
                            sigma * sqrt_dt * xi[p.index()]
                        };
                        *z += drift * dt + kick;
                    }
                }
            });
        ens.step += 1;
        ens.t = ens.step as f64 * dt;

        for p in Population::ALL {
            let bad = ens
                .states(p)
                .par_iter()
                .position_first(|z| !(z.abs() <= BLOW_UP_THRESHOLD));
            if let Some(index) = bad {
                return Err(Error::BlowUp {
                    t: ens.t,
                    index,
                    population: p,
                    partial: Box::default(),
                });
            }
        }
        Ok(())
    }

    /// Decomposes both populations and measures the projection identity.
    pub fn observe(&self, ens: &ParticleEnsemble) -> Result<Observation> {
        self.pool.install(|| {
            let n = ens.n();
            let (v_e, y_e) = self.workspace.decompose(&ens.z_e)?;
            let (v_i, y_i) = self.workspace.decompose(&ens.z_i)?;
            let m = self.workspace.rank();
            let ws = &self.workspace;
            // [K̂_e, K̂_i, |z|max placeholder..., Σ h_a y_e, Σ h_a y_i]
            let sums = tree_sum(n, 2 + 2 * m, |range, acc| {
                for j in range {
                    acc[0] += y_e[j] * y_e[j];
                    acc[1] += y_i[j] * y_i[j];
                    let h = ws.basis_row(j);
                    for a in 0..m {
                        acc[2 + a] += h[a] * y_e[j];
                        acc[2 + m + a] += h[a] * y_i[j];
                    }
                }
            });
            let zmax = ens
                .z_e
                .iter()
                .chain(&ens.z_i)
                .fold(0.0f64, |acc, z| acc.max(z.abs()))
                .max(f64::MIN_POSITIVE);
            let defect = sums[2..].iter().fold(0.0f64, |acc, s| acc.max(s.abs())) / (n as f64 * zmax);
            let mut v_hat = v_e;
            v_hat.extend(v_i);
            Ok(Observation {
                v_hat,
                k_hat: [sums[0] / n as f64, sums[1] / n as f64],
                projection_defect: defect,
                y_e,
                y_i,
            })
        })
    }

    fn record(&self, series: &mut ObservableSeries, ens: &ParticleEnsemble) -> Result<()> {
        let obs = self.observe(ens)?;
        series.times.push(ens.t);
        series.v_hat.push(obs.v_hat);
        series.k_hat.push(obs.k_hat);
        series.projection_defect.push(obs.projection_defect);
        let every = self.config.snapshot_every;
        if every > 0 && (series.times.len() - 1).is_multiple_of(every) {
            series.snapshots.push(Snapshot {
                t: ens.t,
                y_e: obs.y_e,
                y_i: obs.y_i,
            });
        }
        Ok(())
    }

    /// Runs `ceil(T/dt)` steps from a fresh initial ensemble, recording
    /// observables at step 0, every `stride` steps, and at the final step.
    pub fn run(&self) -> Result<ObservableSeries> {
        let mut ens = self.sample_initial();
        self.run_from(&mut ens)
    }

    pub fn run_from(&self, ens: &mut ParticleEnsemble) -> Result<ObservableSeries> {
        let steps = step_count(self.config.t_end, self.config.dt) as u64;
        let mut series = ObservableSeries::default();
        self.record(&mut series, ens)?;
        while ens.step < steps {
            if let Err(err) = self.em_step(ens) {
                return Err(match err {
                    Error::BlowUp {
                        t, index, population, ..
                    } => Error::BlowUp {
                        t,
                        index,
                        population,
                        partial: Box::new(series),
                    },
                    other => other,
                });
            }
            if ens.step.is_multiple_of(self.config.stride as u64) || ens.step == steps {
                self.record(&mut series, ens)?;
            }
        }
        Ok(series)
    }
}

/// Builds the system and runs it.
pub fn simulate(config: SimConfig) -> Result<ObservableSeries> {
    ParticleSystem::new(config)?.run()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Drift, GainTable, IntrinsicDynamics, Noise, SpatialBasis};
    use crate::presets;

    fn config(model: NetworkModel, n: usize, means: Vec<f64>, variances: [f64; 2]) -> SimConfig {
        SimConfig {
            model,
            n,
            dt: 1e-3,
            t_end: 1e-2,
            seed: 11,
            stride: 1,
            initial: InitialLaw { means, variances },
            workers: Some(1),
            snapshot_every: 0,
        }
    }

    #[test]
    fn deterministic_start_without_variance() {
        let sys = ParticleSystem::new(config(presets::test3_model(), 50, vec![0.1, 0.2, 0.3, -0.1, 0.0, 0.4], [0.0, 0.0])).unwrap();
        let ens = sys.sample_initial();
        for j in 0..50 {
            let x = sys.workspace().positions()[j];
            let me = 0.1 + 0.2 * x.cos() + 0.3 * x.sin();
            let mi = -0.1 + 0.4 * x.sin();
            assert_eq!(ens.z_e[j], me);
            assert_eq!(ens.z_i[j], mi);
        }
    }

    #[test]
    fn initial_law_of_large_numbers() {
        let n = 100_000;
        let mut means = [[0.0; 2]; 2];
        let mut vars = [[0.0; 2]; 2];
        let seeds = [1u64, 2, 3, 4];
        for &seed in &seeds {
            let mut c = config(presets::test1_model(), n, vec![0.5, 1.0], [0.5, 0.5]);
            c.seed = seed;
            let ens = ParticleSystem::new(c).unwrap().sample_initial();
            for p in Population::ALL {
                let z = ens.states(p);
                let mean = z.iter().sum::<f64>() / n as f64;
                let var = z.iter().map(|z| (z - mean).powi(2)).sum::<f64>() / n as f64;
                means[p.index()][0] += mean / seeds.len() as f64;
                vars[p.index()][0] += var / seeds.len() as f64;
            }
        }
        for (p, target) in [(0, 0.5), (1, 1.0)] {
            assert!((means[p][0] - target).abs() < 4.0 * (0.5f64 / n as f64).sqrt());
            assert!((vars[p][0] - 0.5).abs() < 0.05 * 0.5);
        }
        let _ = (&mut means[0][1], &mut vars[0][1]);
    }

    #[test]
    fn same_seed_same_ensemble() {
        let c = config(presets::test2_model(), 1000, vec![0.1, 0.2], [1.0, 2.0]);
        let a = ParticleSystem::new(c.clone()).unwrap().sample_initial();
        let b = ParticleSystem::new(c).unwrap().sample_initial();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_negative_variance() {
        let c = config(presets::test1_model(), 10, vec![0.5, 1.0], [-0.1, 0.5]);
        assert!(matches!(ParticleSystem::new(c), Err(Error::NegativeVariance(_))));
    }

    #[test]
    fn zero_gains_zero_drift() {
        let mut model = presets::test3_model();
        model.gains = GainTable::zero();
        let sys = ParticleSystem::new(config(model, 64, vec![0.3; 6], [1.0, 1.0])).unwrap();
        let (de, di) = sys.interaction_drift(&sys.sample_initial());
        assert!(de.iter().chain(&di).all(|d| *d == 0.0));
    }

    #[test]
    fn single_neuron_drift() {
        let sys = ParticleSystem::new(config(presets::test1_model(), 1, vec![0.0, 0.0], [0.0, 0.0])).unwrap();
        let ens = ParticleEnsemble {
            z_e: vec![0.7],
            z_i: vec![-0.4],
            t: 0.0,
            step: 0,
        };
        let (de, di) = sys.interaction_drift(&ens);
        // K ≡ 1: drift_e = A - C_ei z_i, drift_i = C_ie z_e - C_ii z_i.
        assert_eq!(de[0], 1.0 - (-0.4));
        assert_eq!(di[0], 0.7 - 0.5 * -0.4);
    }

    #[test]
    fn linear_decay_step() {
        let mut model = presets::test1_model();
        model.gains = GainTable::zero();
        model.dynamics = IntrinsicDynamics::linear([2.0, 0.5], [0.0, 0.0]);
        let mut c = config(model, 8, vec![1.5, -3.0], [0.0, 0.0]);
        c.dt = 0.01;
        let sys = ParticleSystem::new(c).unwrap();
        let mut ens = sys.sample_initial();
        sys.em_step(&mut ens).unwrap();
        assert!(ens.z_e.iter().all(|z| (z - 1.5 * (1.0 - 0.01 / 2.0)).abs() < 1e-15));
        assert!(ens.z_i.iter().all(|z| (z + 3.0 * (1.0 - 0.01 / 0.5)).abs() < 1e-15));
        assert_eq!(ens.step, 1);
    }

    #[test]
    fn balanced_start_cancels_interaction() {
        // At the balanced mean with no fluctuations the O(√n) interaction
        // terms cancel exactly; only the O(1) intrinsic decay moves the means,
        // and the noiseless system settles within O(n^{-1/2}) of the limit.
        let mut model = presets::test1_model();
        model.dynamics = IntrinsicDynamics::linear([1.0, 1.0], [0.0, 0.0]);
        let n = 10_000;
        let mut c = config(model, n, vec![0.5, 1.0], [0.0, 0.0]);
        c.t_end = 2.0;
        c.stride = 100;
        let sys = ParticleSystem::new(c).unwrap();
        let mut ens = sys.sample_initial();
        let (de, di) = sys.interaction_drift(&ens);
        assert!(de.iter().chain(&di).all(|d| d.abs() < 1e-12));
        sys.em_step(&mut ens).unwrap();
        assert!((ens.z_e[0] - (0.5 - 0.5e-3)).abs() < 1e-14);
        assert!((ens.z_i[0] - (1.0 - 1e-3)).abs() < 1e-14);
        let series = sys.run().unwrap();
        let eps = 1.0 / (n as f64).sqrt();
        for v in &series.v_hat {
            assert!((v[0] - 0.5).abs() < 2.0 * eps && (v[1] - 1.0).abs() < 2.0 * eps, "{v:?}");
        }
    }

    #[test]
    fn blow_up_is_reported() {
        // Excitation without inhibition: G_ee linear and nothing to stop it.
        let mut model = presets::test1_model();
        model.gains = GainTable([
            [crate::GainSpec::Linear(5.0), crate::GainSpec::Constant(0.0)],
            [crate::GainSpec::Constant(0.0), crate::GainSpec::Constant(0.0)],
        ]);
        let mut c = config(model, 400, vec![1.0, 0.0], [0.1, 0.1]);
        c.t_end = 10.0;
        c.stride = 50;
        match simulate(c) {
            Err(Error::BlowUp {
                population, partial, t, ..
            }) => {
                assert_eq!(population, Population::Excitatory);
                assert!(!partial.is_empty());
                assert!(t < 10.0);
            }
            other => panic!("expected blow-up, got {other:?}"),
        }
    }

    #[test]
    fn custom_drift_and_state_noise_are_accepted() {
        let mut model = presets::test2_model();
        model.dynamics = IntrinsicDynamics {
            drift: [
                Drift::Custom(crate::model::ScalarFn(std::sync::Arc::new(|z: f64| -z - z.powi(3)))),
                Drift::LinearDecay { tau: 1.0 },
            ],
            noise: [
                Noise::StateDependent {
                    sigma: crate::model::NoiseFn(std::sync::Arc::new(|_x: f64, z: f64| 1.0 + 0.5 * z.tanh())),
                    bound: 2.0,
                },
                Noise::Additive { sigma: 1.0 },
            ],
        };
        let c = config(model, 500, vec![0.1, 0.2], [1.0, 1.0]);
        let series = simulate(c).unwrap();
        assert_eq!(series.len(), 11);
        assert!(series.v_hat.iter().flatten().all(|v| v.is_finite()));
    }

    #[test]
    fn observations_respect_projection_identity() {
        let mut c = config(presets::test3_model(), 333, vec![0.1, 0.2, -0.3, 0.0, 0.5, 0.1], [0.0625, 0.0625]);
        c.stride = 3;
        let series = simulate(c).unwrap();
        assert_eq!(series.times.len(), 5);
        assert!(series.projection_defect.iter().all(|d| *d < 1e-12));
    }

    #[test]
    fn point_basis_rejects_ring_functions() {
        assert!(SpatialBasis::new(crate::Domain::Point, vec![crate::BasisFunction::Sine]).is_err());
    }
}
