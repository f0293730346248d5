//! The balanced manifold under the Gaussian closure.
//!
//! For basis coefficients `v = (v_e^1..v_e^M, v_i^1..v_i^M)` and spatially
//! constant fluctuation variances `(K_e, K_i)`, the balance residual is
//!
//! ```text
//! G_α^a = ∫∫ h_a(z) [ K_αe(z,x) E[G_αe(Y_e + v_e(x))] - K_αi(z,x) E[G_αi(Y_i + v_i(x))] ] dκ(x) dκ(z)
//! ```
//!
//! with `Y_β ~ N(0, K_β)`. Because the kernel has finite rank the `z`
//! integral collapses to the matrix `A_αβ = Gram · C_αβ`, leaving one
//! spatial integral per basis function. On the ring that integral uses the
//! composite trapezoid rule with [`RING_QUADRATURE_NODES`] nodes, which is
//! exact for the trigonometric products that appear here.
//!
//! [`RING_QUADRATURE_NODES`]: crate::model::RING_QUADRATURE_NODES

use nalgebra::{DMatrix, DVector, Schur};

use crate::error::{Error, Result};
use crate::model::{GainSpec, NetworkModel, Population};
use crate::quadrature::{GaussHermiteRule, GaussianLaw, ScoreWeight};

/// Roots whose stability margin is not below `-STABILITY_TOLERANCE` are
/// classified as unstable. Purely imaginary spectra come out of the QR
/// iteration with real parts of order 1e-16 of either sign.
pub const STABILITY_TOLERANCE: f64 = 1e-9;

/// `|det J|` below this is treated as singular.
pub const SINGULAR_DET: f64 = 1e-12;

const ARMIJO_C: f64 = 1e-4;
const MIN_STEP: f64 = 1.0 / (1u64 << 30) as f64;
const EIGEN_MAX_ITER: usize = 10_000;

/// Mean coefficients and fluctuation variances of the Gaussian limit law.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentState {
    /// `2M` coefficients, excitatory first.
    pub v: Vec<f64>,
    pub k_e: f64,
    pub k_i: f64,
    pub t: f64,
}

impl MomentState {
    pub fn new(v: Vec<f64>, k_e: f64, k_i: f64) -> Self {
        Self { v, k_e, k_i, t: 0.0 }
    }

    pub fn variance(&self, p: Population) -> f64 {
        match p {
            Population::Excitatory => self.k_e,
            Population::Inhibitory => self.k_i,
        }
    }

    /// Coefficients of one population.
    pub fn coefficients(&self, p: Population) -> &[f64] {
        let m = self.v.len() / 2;
        &self.v[p.index() * m..(p.index() + 1) * m]
    }
}

#[derive(Clone, Debug)]
pub struct BalanceReport {
    /// The point the report describes.
    pub v: Vec<f64>,
    pub residual: Vec<f64>,
    pub jacobian: DMatrix<f64>,
    /// Largest real part over the eigenvalues of `jacobian`.
    pub stability_margin: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl BalanceReport {
    pub fn residual_norm(&self) -> f64 {
        inf_norm(&self.residual)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    /// Required `|G|_∞` at the root.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_iterations: 100,
        }
    }
}

/// Max real part over the eigenvalues of a square matrix.
pub fn stability_margin(j: &DMatrix<f64>) -> Result<f64> {
    assert!(j.is_square(), "stability margin needs a square matrix");
    if j.iter().any(|x| !x.is_finite()) {
        return Err(Error::EigenFailure);
    }
    if j.nrows() == 0 {
        return Ok(f64::NEG_INFINITY);
    }
    let schur = Schur::try_new(j.clone(), f64::EPSILON, EIGEN_MAX_ITER).ok_or(Error::EigenFailure)?;
    Ok(schur
        .complex_eigenvalues()
        .iter()
        .map(|l| l.re)
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Balance residual, Jacobian and implicit mean velocity for one model.
#[derive(Clone, Debug)]
pub struct BalanceSystem {
    model: NetworkModel,
    rule: GaussHermiteRule,
    m: usize,
    nodes: Vec<f64>,
    node_weight: f64,
    /// `h_b(x_q)`, row-major `nodes × M`.
    node_basis: Vec<f64>,
    /// `A_αβ = Gram · C_αβ`, indexed `[α][β]`, row-major `M×M`.
    coupling: [[Vec<f64>; 2]; 2],
    /// `(τ, Σ)` per population.
    gaussian: [(f64, f64); 2],
}

impl BalanceSystem {
    /// Fails with `UnsupportedLimit` unless both populations have linear
    /// decay and additive noise.
    pub fn new(model: &NetworkModel, rule: GaussHermiteRule) -> Result<Self> {
        let mut gaussian = [(0.0, 0.0); 2];
        for p in Population::ALL {
            gaussian[p.index()] = model.dynamics.gaussian_parameters(p).ok_or_else(|| {
                Error::UnsupportedLimit(format!(
                    "population {} needs linear decay and additive noise for the Gaussian closure",
                    p.label()
                ))
            })?;
        }
        let m = model.basis.len();
        let (nodes, node_weight) = model.basis.spatial_nodes();
        let mut node_basis = vec![0.0; nodes.len() * m];
        for (row, &x) in node_basis.chunks_mut(m).zip(&nodes) {
            model.basis.eval_into(x, row);
        }
        let gram = model.basis.gram();
        let coupling = [Population::Excitatory, Population::Inhibitory].map(|alpha| {
            [Population::Excitatory, Population::Inhibitory].map(|beta| {
                let c = model.kernel.block(alpha, beta);
                let mut a_mat = vec![0.0; m * m];
                for a in 0..m {
                    for b in 0..m {
                        a_mat[a * m + b] = (0..m).map(|k| gram[a * m + k] * c[k * m + b]).sum();
                    }
                }
                a_mat
            })
        });
        Ok(Self {
            model: model.clone(),
            rule,
            m,
            nodes,
            node_weight,
            node_basis,
            coupling,
            gaussian,
        })
    }

    pub fn model(&self) -> &NetworkModel {
        &self.model
    }

    pub fn rule(&self) -> &GaussHermiteRule {
        &self.rule
    }

    /// `2M`.
    pub fn dim(&self) -> usize {
        2 * self.m
    }

    /// `(τ, Σ)` of a population.
    pub fn time_constant_and_noise(&self, p: Population) -> (f64, f64) {
        self.gaussian[p.index()]
    }

    /// `dK/dt = -2K/τ + Σ²`.
    pub fn variance_rate(&self, p: Population, k: f64) -> f64 {
        let (tau, sigma) = self.gaussian[p.index()];
        -2.0 * k / tau + sigma * sigma
    }

    fn check(&self, state: &MomentState) -> Result<()> {
        if state.v.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: state.v.len(),
            });
        }
        GaussianLaw::centered(state.k_e)?;
        GaussianLaw::centered(state.k_i)?;
        Ok(())
    }

    /// Law of `Y_β + v_β(x_q)` at spatial node `q`.
    fn node_law(&self, state: &MomentState, beta: Population, q: usize) -> GaussianLaw {
        let h = &self.node_basis[q * self.m..(q + 1) * self.m];
        let mean = h.iter().zip(state.coefficients(beta)).map(|(h, v)| h * v).sum();
        GaussianLaw {
            mean,
            variance: state.variance(beta),
        }
    }

    /// `[α][b] = ∫ h_b(x) φ(G_αβ, law(x)) dκ(x)` for a fixed source `β`.
    fn source_moments<F>(&self, state: &MomentState, beta: Population, phi: F) -> [Vec<f64>; 2]
    where
        F: Fn(&GainSpec, &GaussianLaw) -> f64,
    {
        let m = self.m;
        let mut out = [vec![0.0; m], vec![0.0; m]];
        for q in 0..self.nodes.len() {
            let law = self.node_law(state, beta, q);
            let h = &self.node_basis[q * m..(q + 1) * m];
            for alpha in Population::ALL {
                let val = self.node_weight * phi(self.model.gains.get(alpha, beta), &law);
                for (o, hb) in out[alpha.index()].iter_mut().zip(h) {
                    *o += hb * val;
                }
            }
        }
        out
    }

    /// Combines per-source moments into the `2M` vector
    /// `Σ_b A_αe[a][b] s_e[α][b] - A_αi[a][b] s_i[α][b]`.
    fn assemble(&self, src_e: &[Vec<f64>; 2], src_i: &[Vec<f64>; 2]) -> Vec<f64> {
        let m = self.m;
        let mut out = vec![0.0; 2 * m];
        for alpha in Population::ALL {
            let ai = alpha.index();
            let a_e = &self.coupling[ai][0];
            let a_i = &self.coupling[ai][1];
            for a in 0..m {
                out[ai * m + a] = (0..m)
                    .map(|b| a_e[a * m + b] * src_e[ai][b] - a_i[a * m + b] * src_i[ai][b])
                    .sum();
            }
        }
        out
    }

    fn expectation<'a>(&'a self) -> impl Fn(&GainSpec, &GaussianLaw) -> f64 + 'a {
        move |g, law| match *g {
            GainSpec::Constant(a) => a,
            GainSpec::Linear(c) => c * law.mean,
            _ => self.rule.expect(law, |y| g.value(y)),
        }
    }

    /// Balance residual `G(v, K)`.
    pub fn residual(&self, state: &MomentState) -> Result<Vec<f64>> {
        self.check(state)?;
        let e = self.source_moments(state, Population::Excitatory, self.expectation());
        let i = self.source_moments(state, Population::Inhibitory, self.expectation());
        Ok(self.assemble(&e, &i))
    }

    /// `∂G/∂v`, rows and columns ordered `(e,1..M, i,1..M)`.
    pub fn jacobian(&self, state: &MomentState) -> Result<DMatrix<f64>> {
        self.check(state)?;
        let m = self.m;
        let mut j = DMatrix::zeros(2 * m, 2 * m);
        for beta in Population::ALL {
            let sign = if beta == Population::Excitatory { 1.0 } else { -1.0 };
            // d[α][b][b'] = ∫ h_b h_b' E[Ġ_αβ] dκ
            let mut d = [vec![0.0; m * m], vec![0.0; m * m]];
            for q in 0..self.nodes.len() {
                let law = self.node_law(state, beta, q);
                let h = &self.node_basis[q * m..(q + 1) * m];
                for alpha in Population::ALL {
                    let g = self.model.gains.get(alpha, beta);
                    let e_dot = match *g {
                        GainSpec::Constant(_) => 0.0,
                        GainSpec::Linear(c) => c,
                        _ => self.rule.expect(&law, |y| g.derivative(y)),
                    };
                    let val = self.node_weight * e_dot;
                    for b in 0..m {
                        for b2 in 0..m {
                            d[alpha.index()][b * m + b2] += val * h[b] * h[b2];
                        }
                    }
                }
            }
            for alpha in Population::ALL {
                let a_mat = &self.coupling[alpha.index()][beta.index()];
                for a in 0..m {
                    for b2 in 0..m {
                        let s: f64 = (0..m).map(|b| a_mat[a * m + b] * d[alpha.index()][b * m + b2]).sum();
                        j[(alpha.index() * m + a, beta.index() * m + b2)] = sign * s;
                    }
                }
            }
        }
        Ok(j)
    }

    /// `H = ∂G/∂K · dK/dt`: the rate at which the residual would move if the
    /// means were frozen while the variances relax.
    pub fn variance_forcing(&self, state: &MomentState) -> Result<Vec<f64>> {
        self.check(state)?;
        let score = |g: &GainSpec, law: &GaussianLaw| match *g {
            GainSpec::Constant(_) | GainSpec::Linear(_) => 0.0,
            _ => self
                .rule
                .expect_weighted(law, |y| g.value(y), ScoreWeight::VarianceScore),
        };
        let kdot_e = self.variance_rate(Population::Excitatory, state.k_e);
        let kdot_i = self.variance_rate(Population::Inhibitory, state.k_i);
        let mut e = self.source_moments(state, Population::Excitatory, score);
        let mut i = self.source_moments(state, Population::Inhibitory, score);
        for v in e.iter_mut().flatten() {
            *v *= kdot_e;
        }
        for v in i.iter_mut().flatten() {
            *v *= kdot_i;
        }
        Ok(self.assemble(&e, &i))
    }

    /// Mean velocity `dv/dt = -J⁻¹ H` that keeps `G ≡ 0` while the variances
    /// follow their relaxation ODE.
    pub fn mean_rhs(&self, state: &MomentState) -> Result<Vec<f64>> {
        let r = self.residual(state)?;
        if inf_norm(&r) > 1e-6 {
            log::warn!(
                "mean_rhs evaluated off the balanced manifold (|G|_inf = {:.3e})",
                inf_norm(&r)
            );
        }
        let j = self.jacobian(state)?;
        let h = self.variance_forcing(state)?;
        let lu = j.lu();
        let det = lu.determinant();
        if !(det.abs() >= SINGULAR_DET) {
            return Err(Error::SingularJacobian { det });
        }
        let x = lu
            .solve(&DVector::from_vec(h))
            .ok_or(Error::SingularJacobian { det })?;
        Ok(x.iter().map(|x| -x).collect())
    }

    /// Damped Newton on `G(·, K) = 0` from `guess`, then the stability check.
    ///
    /// Steps are halved until `|G|²` satisfies an Armijo decrease. The root
    /// is returned only if it is strictly stable; an unstable root is
    /// reported through [`Error::UnstableRoot`].
    pub fn solve(
        &self,
        k_e: f64,
        k_i: f64,
        guess: &[f64],
        opts: &SolverOptions,
    ) -> Result<(Vec<f64>, BalanceReport)> {
        let mut state = MomentState::new(guess.to_vec(), k_e, k_i);
        self.check(&state)?;
        let mut r = self.residual(&state)?;
        let mut iterations = 0;
        while inf_norm(&r) >= opts.tolerance {
            if iterations == opts.max_iterations {
                return Err(Error::NoConvergence {
                    iterations,
                    residual: inf_norm(&r),
                    reason: "iteration limit",
                });
            }
            iterations += 1;
            let j = self.jacobian(&state)?;
            let step = match j.lu().solve(&DVector::from_column_slice(&r)) {
                Some(s) if s.iter().all(|x| x.is_finite()) => s,
                _ => {
                    return Err(Error::NoConvergence {
                        iterations,
                        residual: inf_norm(&r),
                        reason: "singular Jacobian",
                    })
                }
            };
            let f0 = sq_norm(&r);
            let mut lambda = 1.0;
            loop {
                let trial: Vec<f64> = state.v.iter().zip(step.iter()).map(|(v, s)| v - lambda * s).collect();
                let trial_state = MomentState::new(trial, k_e, k_i);
                let r_trial = self.residual(&trial_state)?;
                if sq_norm(&r_trial) <= (1.0 - 2.0 * ARMIJO_C * lambda) * f0 {
                    state = trial_state;
                    r = r_trial;
                    break;
                }
                lambda *= 0.5;
                if lambda < MIN_STEP {
                    return Err(Error::NoConvergence {
                        iterations,
                        residual: inf_norm(&r),
                        reason: "step underflow",
                    });
                }
            }
        }
        let jacobian = self.jacobian(&state)?;
        let margin = stability_margin(&jacobian)?;
        let report = BalanceReport {
            v: state.v.clone(),
            residual: r,
            jacobian,
            stability_margin: margin,
            converged: true,
            iterations,
        };
        if margin >= -STABILITY_TOLERANCE {
            return Err(Error::UnstableRoot {
                report: Box::new(report),
            });
        }
        Ok((state.v, report))
    }
}

pub(crate) fn inf_norm(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn sq_norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}
