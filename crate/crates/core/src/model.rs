//! Network description shared by the particle and limit sides: the spatial
//! basis, the finite-rank connectivity kernel, interaction gains, intrinsic
//! dynamics, and the projection that splits states into basis modes plus
//! fluctuations.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::reduce::tree_sum;

/// Number of trapezoid nodes used for integrals over the ring.
pub const RING_QUADRATURE_NODES: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Population {
    Excitatory,
    Inhibitory,
}

impl Population {
    pub const ALL: [Population; 2] = [Population::Excitatory, Population::Inhibitory];

    pub fn index(self) -> usize {
        match self {
            Population::Excitatory => 0,
            Population::Inhibitory => 1,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Population::Excitatory => "e",
            Population::Inhibitory => "i",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Domain {
    /// A single site; the mean-field case.
    Point,
    /// The circle `(-pi, pi]` with normalised arc length.
    Ring,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BasisFunction {
    Constant,
    Cosine,
    Sine,
}

impl BasisFunction {
    #[inline]
    pub fn eval(self, x: f64) -> f64 {
        match self {
            BasisFunction::Constant => 1.0,
            BasisFunction::Cosine => x.cos(),
            BasisFunction::Sine => x.sin(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BasisFunction::Constant => "constant",
            BasisFunction::Cosine => "cos",
            BasisFunction::Sine => "sin",
        }
    }
}

/// The functions `h_1..h_M` together with the neuron placement rule.
///
/// The reference measure is uniform (counting measure on a point, normalised
/// arc length on the ring). The basis is *not* renormalised: `cos` has
/// `∫cos² dκ = 1/2`, and everything downstream goes through the Gram matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SpatialBasis {
    domain: Domain,
    functions: Vec<BasisFunction>,
}

impl SpatialBasis {
    pub fn new(domain: Domain, functions: Vec<BasisFunction>) -> Result<Self> {
        if functions.is_empty() {
            return Err(Error::InvalidModel("basis needs at least one function".into()));
        }
        for (k, f) in functions.iter().enumerate() {
            if functions[..k].contains(f) {
                return Err(Error::InvalidModel(format!("basis function {} repeated", f.name())));
            }
        }
        if domain == Domain::Point && functions != [BasisFunction::Constant] {
            return Err(Error::InvalidModel(
                "the point domain supports only the constant basis".into(),
            ));
        }
        Ok(Self { domain, functions })
    }

    pub fn point() -> Self {
        Self {
            domain: Domain::Point,
            functions: vec![BasisFunction::Constant],
        }
    }

    pub fn ring(functions: Vec<BasisFunction>) -> Result<Self> {
        Self::new(Domain::Ring, functions)
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn functions(&self) -> &[BasisFunction] {
        &self.functions
    }

    /// `M`, the number of basis functions.
    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }

    /// `[h_1(x), .., h_M(x)]`.
    pub fn eval(&self, x: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        self.eval_into(x, &mut out);
        out
    }

    #[inline]
    pub fn eval_into(&self, x: f64, out: &mut [f64]) {
        for (o, f) in out.iter_mut().zip(&self.functions) {
            *o = f.eval(x);
        }
    }

    /// Neuron positions `x^j = 2πj/n`, `j = 1..n` (all zero on a point).
    pub fn positions(&self, n: usize) -> Vec<f64> {
        match self.domain {
            Domain::Point => vec![0.0; n],
            Domain::Ring => (1..=n).map(|j| TAU * j as f64 / n as f64).collect(),
        }
    }

    /// Nodes and common weight of the rule used for `∫ · dκ`.
    pub fn spatial_nodes(&self) -> (Vec<f64>, f64) {
        match self.domain {
            Domain::Point => (vec![0.0], 1.0),
            Domain::Ring => {
                let q = RING_QUADRATURE_NODES;
                let nodes = (0..q).map(|k| -PI + TAU * (k as f64 + 1.0) / q as f64).collect();
                (nodes, 1.0 / q as f64)
            }
        }
    }

    /// Gram matrix `∫ h_a h_b dκ`, row-major `M×M`.
    pub fn gram(&self) -> Vec<f64> {
        let m = self.len();
        let (nodes, w) = self.spatial_nodes();
        let mut gram = vec![0.0; m * m];
        let mut h = vec![0.0; m];
        for &x in &nodes {
            self.eval_into(x, &mut h);
            for a in 0..m {
                for b in 0..m {
                    gram[a * m + b] += w * h[a] * h[b];
                }
            }
        }
        gram
    }
}

/// Coefficients `c_{αβ,ab}` of `K_{αβ}(x,x') = Σ c_{αβ,ab} h_a(x) h_b(x')`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConnectivityKernel {
    m: usize,
    coeffs: Vec<f64>,
}

impl ConnectivityKernel {
    /// `blocks[α][β]` is the row-major `M×M` block for the pair `(α, β)`.
    pub fn new(m: usize, blocks: [[Vec<f64>; 2]; 2]) -> Result<Self> {
        let mut coeffs = Vec::with_capacity(4 * m * m);
        for row in &blocks {
            for block in row {
                if block.len() != m * m {
                    return Err(Error::DimensionMismatch {
                        expected: m * m,
                        got: block.len(),
                    });
                }
                if block.iter().any(|c| !c.is_finite()) {
                    return Err(Error::InvalidModel("kernel coefficients must be finite".into()));
                }
                coeffs.extend_from_slice(block);
            }
        }
        Ok(Self { m, coeffs })
    }

    /// Diagonal kernel: `diagonals[α][β][a] = c_{αβ,aa}`.
    pub fn diagonal(diagonals: [[Vec<f64>; 2]; 2]) -> Result<Self> {
        let m = diagonals[0][0].len();
        let blocks = diagonals.map(|row| {
            row.map(|d| {
                let mut block = vec![0.0; d.len() * d.len()];
                for (a, c) in d.iter().enumerate() {
                    block[a * d.len() + a] = *c;
                }
                block
            })
        });
        Self::new(m, blocks)
    }

    /// Mean-field kernel on a point: `K_{αβ} ≡ scale[α][β]`.
    pub fn mean_field(scale: [[f64; 2]; 2]) -> Self {
        Self {
            m: 1,
            coeffs: vec![scale[0][0], scale[0][1], scale[1][0], scale[1][1]],
        }
    }

    pub fn rank(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn coeff(&self, alpha: Population, beta: Population, a: usize, b: usize) -> f64 {
        self.coeffs[self.offset(alpha, beta) + a * self.m + b]
    }

    /// Row-major block for `(α, β)`.
    pub fn block(&self, alpha: Population, beta: Population) -> &[f64] {
        let o = self.offset(alpha, beta);
        &self.coeffs[o..o + self.m * self.m]
    }

    fn offset(&self, alpha: Population, beta: Population) -> usize {
        (alpha.index() * 2 + beta.index()) * self.m * self.m
    }

    /// `K_{αβ}(x, x')`, via `h(x)ᵀ C h(x')`.
    pub fn eval(&self, basis: &SpatialBasis, alpha: Population, beta: Population, x: f64, x2: f64) -> f64 {
        let hx = basis.eval(x);
        let hx2 = basis.eval(x2);
        let c = self.block(alpha, beta);
        hx.iter()
            .enumerate()
            .map(|(a, ha)| {
                let row: f64 = (0..self.m).map(|b| c[a * self.m + b] * hx2[b]).sum();
                ha * row
            })
            .sum()
    }
}

/// Interaction nonlinearity `G_{αβ}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GainSpec {
    /// `A`
    Constant(f64),
    /// `C z`
    Linear(f64),
    /// `C tanh(γ (z - ξ))`
    Tanh { amplitude: f64, slope: f64, threshold: f64 },
}

impl GainSpec {
    pub fn tanh(amplitude: f64, slope: f64, threshold: f64) -> Self {
        GainSpec::Tanh {
            amplitude,
            slope,
            threshold,
        }
    }

    #[inline]
    pub fn value(&self, z: f64) -> f64 {
        match *self {
            GainSpec::Constant(a) => a,
            GainSpec::Linear(c) => c * z,
            GainSpec::Tanh {
                amplitude,
                slope,
                threshold,
            } => amplitude * (slope * (z - threshold)).tanh(),
        }
    }

    #[inline]
    pub fn derivative(&self, z: f64) -> f64 {
        match *self {
            GainSpec::Constant(_) => 0.0,
            GainSpec::Linear(c) => c,
            GainSpec::Tanh {
                amplitude,
                slope,
                threshold,
            } => {
                let t = (slope * (z - threshold)).tanh();
                amplitude * slope * (1.0 - t * t)
            }
        }
    }

    #[inline]
    pub fn second_derivative(&self, z: f64) -> f64 {
        match *self {
            GainSpec::Constant(_) | GainSpec::Linear(_) => 0.0,
            GainSpec::Tanh {
                amplitude,
                slope,
                threshold,
            } => {
                let t = (slope * (z - threshold)).tanh();
                -2.0 * amplitude * slope * slope * t * (1.0 - t * t)
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        match *self {
            GainSpec::Constant(a) | GainSpec::Linear(a) => a.is_finite(),
            GainSpec::Tanh {
                amplitude,
                slope,
                threshold,
            } => amplitude.is_finite() && slope.is_finite() && threshold.is_finite(),
        }
    }
}

/// `G_{αβ}` for all four ordered pairs, indexed `[α][β]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GainTable(pub [[GainSpec; 2]; 2]);

impl GainTable {
    pub fn zero() -> Self {
        GainTable([[GainSpec::Constant(0.0); 2]; 2])
    }

    #[inline]
    pub fn get(&self, alpha: Population, beta: Population) -> &GainSpec {
        &self.0[alpha.index()][beta.index()]
    }
}

/// Shared scalar function used for custom drift descriptors.
#[derive(Clone)]
pub struct ScalarFn(pub Arc<dyn Fn(f64) -> f64 + Send + Sync>);

impl fmt::Debug for ScalarFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ScalarFn(..)")
    }
}

/// Shared `σ(x, z)` used for state-dependent noise descriptors.
#[derive(Clone)]
pub struct NoiseFn(pub Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>);

impl fmt::Debug for NoiseFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("NoiseFn(..)")
    }
}

/// Intrinsic drift `f_α`.
#[derive(Clone, Debug)]
pub enum Drift {
    /// `-z / τ`
    LinearDecay { tau: f64 },
    /// Any twice-differentiable `f`; accepted by the particle integrator only.
    Custom(ScalarFn),
}

impl Drift {
    #[inline]
    pub fn eval(&self, z: f64) -> f64 {
        match self {
            Drift::LinearDecay { tau } => -z / tau,
            Drift::Custom(f) => (f.0)(z),
        }
    }
}

/// Noise amplitude `σ_α(x, z)`.
#[derive(Clone, Debug)]
pub enum Noise {
    /// Constant `Σ`.
    Additive { sigma: f64 },
    /// Bounded state-dependent noise; `bound` is the declared `C_σ`.
    StateDependent { sigma: NoiseFn, bound: f64 },
}

impl Noise {
    #[inline]
    pub fn eval(&self, x: f64, z: f64) -> f64 {
        match self {
            Noise::Additive { sigma } => *sigma,
            Noise::StateDependent { sigma, bound } => (sigma.0)(x, z).clamp(-bound, *bound),
        }
    }
}

#[derive(Clone, Debug)]
pub struct IntrinsicDynamics {
    pub drift: [Drift; 2],
    pub noise: [Noise; 2],
}

impl IntrinsicDynamics {
    /// Linear decay with additive noise for both populations.
    pub fn linear(tau: [f64; 2], sigma: [f64; 2]) -> Self {
        Self {
            drift: tau.map(|tau| Drift::LinearDecay { tau }),
            noise: sigma.map(|sigma| Noise::Additive { sigma }),
        }
    }

    pub fn drift(&self, p: Population) -> &Drift {
        &self.drift[p.index()]
    }

    pub fn noise(&self, p: Population) -> &Noise {
        &self.noise[p.index()]
    }

    /// `(τ, Σ)` when the population is linear with additive noise, which is
    /// what the Gaussian closure needs.
    pub fn gaussian_parameters(&self, p: Population) -> Option<(f64, f64)> {
        match (self.drift(p), self.noise(p)) {
            (Drift::LinearDecay { tau }, Noise::Additive { sigma }) => Some((*tau, *sigma)),
            _ => None,
        }
    }

    fn validate(&self) -> Result<()> {
        for p in Population::ALL {
            if let Drift::LinearDecay { tau } = self.drift(p) {
                if !(*tau > 0.0 && tau.is_finite()) {
                    return Err(Error::InvalidModel(format!("tau_{} must be positive", p.label())));
                }
            }
            match self.noise(p) {
                Noise::Additive { sigma } if !sigma.is_finite() => {
                    return Err(Error::InvalidModel(format!("sigma_{} must be finite", p.label())));
                }
                Noise::StateDependent { bound, .. } if !(*bound >= 0.0 && bound.is_finite()) => {
                    return Err(Error::InvalidModel(format!(
                        "noise bound for {} must be finite and non-negative",
                        p.label()
                    )));
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// Everything that defines a network, independent of its size `n`.
#[derive(Clone, Debug)]
pub struct NetworkModel {
    pub basis: SpatialBasis,
    pub kernel: ConnectivityKernel,
    pub gains: GainTable,
    pub dynamics: IntrinsicDynamics,
}

impl NetworkModel {
    pub fn new(
        basis: SpatialBasis,
        kernel: ConnectivityKernel,
        gains: GainTable,
        dynamics: IntrinsicDynamics,
    ) -> Result<Self> {
        if kernel.rank() != basis.len() {
            return Err(Error::DimensionMismatch {
                expected: basis.len(),
                got: kernel.rank(),
            });
        }
        if gains.0.iter().flatten().any(|g| !g.is_finite()) {
            return Err(Error::InvalidModel("gain parameters must be finite".into()));
        }
        dynamics.validate()?;
        Ok(Self {
            basis,
            kernel,
            gains,
            dynamics,
        })
    }

    /// Number of mean coefficients, `2M`.
    pub fn dim(&self) -> usize {
        2 * self.basis.len()
    }
}

/// Per-`n` precomputation: `Q`, `Q⁻¹` and the `n×M` table `h_b(x^j)`.
#[derive(Clone, Debug)]
pub struct ProjectionWorkspace {
    n: usize,
    m: usize,
    positions: Vec<f64>,
    q: Vec<f64>,
    q_inv: Vec<f64>,
    basis_values: Vec<f64>,
}

impl ProjectionWorkspace {
    /// Builds the workspace, requiring `det(Gram⁻¹ Q) > 1/2`.
    ///
    /// Normalising by the Gram matrix makes the threshold meaningful for
    /// bases that are orthogonal but not orthonormal; for an orthonormal
    /// basis it is exactly `det Q > 1/2`.
    pub fn build(basis: &SpatialBasis, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Validation("n must be at least 1".into()));
        }
        let m = basis.len();
        let positions = basis.positions(n);
        let mut basis_values = vec![0.0; n * m];
        for (row, &x) in basis_values.chunks_mut(m).zip(&positions) {
            basis.eval_into(x, row);
        }
        let q = tree_sum(n, m * m, |range, acc| {
            for j in range {
                let h = &basis_values[j * m..(j + 1) * m];
                for a in 0..m {
                    for b in 0..m {
                        acc[a * m + b] += h[a] * h[b];
                    }
                }
            }
        })
        .into_iter()
        .map(|s| s / n as f64)
        .collect::<Vec<_>>();

        let q_mat = DMatrix::from_row_slice(m, m, &q);
        let gram = DMatrix::from_row_slice(m, m, &basis.gram());
        let normalised = gram
            .clone()
            .try_inverse()
            .map(|g| (g * &q_mat).determinant())
            .unwrap_or(0.0);
        if !(normalised > 0.5) {
            return Err(Error::SingularProjection { det: normalised });
        }
        let q_inv_mat = q_mat
            .try_inverse()
            .ok_or(Error::SingularProjection { det: normalised })?;
        let q_inv = q_inv_mat.transpose().as_slice().to_vec();
        Ok(Self {
            n,
            m,
            positions,
            q,
            q_inv,
            basis_values,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn rank(&self) -> usize {
        self.m
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    /// Row-major `Q`.
    pub fn q(&self) -> &[f64] {
        &self.q
    }

    /// Row-major `Q⁻¹`.
    pub fn q_inv(&self) -> &[f64] {
        &self.q_inv
    }

    /// `[h_1(x^j), .., h_M(x^j)]`.
    #[inline]
    pub fn basis_row(&self, j: usize) -> &[f64] {
        &self.basis_values[j * self.m..(j + 1) * self.m]
    }

    /// `Σ_a coeffs[a] h_a(x^j)`.
    #[inline]
    pub fn synthesize(&self, coeffs: &[f64], j: usize) -> f64 {
        self.basis_row(j).iter().zip(coeffs).map(|(h, c)| h * c).sum()
    }

    /// Basis coefficients `v^a = n⁻¹ Σ_k Σ_b Q⁻¹_{ab} z^k h_b(x^k)`.
    pub fn project(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: z.len(),
            });
        }
        let m = self.m;
        let moments = tree_sum(self.n, m, |range, acc| {
            for j in range {
                let h = self.basis_row(j);
                for b in 0..m {
                    acc[b] += h[b] * z[j];
                }
            }
        });
        Ok((0..m)
            .map(|a| {
                (0..m)
                    .map(|b| self.q_inv[a * m + b] * moments[b])
                    .sum::<f64>()
                    / self.n as f64
            })
            .collect())
    }

    /// Splits one population's states into basis coefficients `v` and the
    /// fluctuations `y^j = z^j - Σ_a v^a h_a(x^j)`.
    pub fn decompose(&self, z: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let v = self.project(z)?;
        let y = z
            .iter()
            .enumerate()
            .map(|(j, zj)| zj - self.synthesize(&v, j))
            .collect();
        Ok((v, y))
    }
}
