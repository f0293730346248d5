//! Gaussian densities and expectations `E[g(Y)]`, `Y ~ N(m, V)`, by
//! Gauss–Hermite quadrature.
//!
//! Nodes come from the eigenvalues of the symmetric tridiagonal Jacobi
//! matrix (Golub–Welsch) and are then polished by Newton iteration on the
//! orthonormal Hermite recurrence; weights are the Christoffel numbers
//! `1 / Σ_j p_j(x_k)²`, which stay accurate for the tiny tail weights where
//! eigenvector components would lose relative precision.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// tanh has poles at distance π/2 from the real axis, so Gauss–Hermite
/// converges only like `exp(-c·sqrt(p/V))`; 200 points reach ~1e-13 for
/// `V ≤ 2` with unit slope.
pub const DEFAULT_ORDER: usize = 200;

/// Variances below this are rejected rather than treated as point masses.
pub const MIN_VARIANCE: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct GaussHermiteRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl Default for GaussHermiteRule {
    fn default() -> Self {
        Self::new(DEFAULT_ORDER)
    }
}

impl GaussHermiteRule {
    /// `p`-point rule for `∫ g(u) e^{-u²} du`.
    pub fn new(order: usize) -> Self {
        assert!(order >= 1, "Gauss-Hermite order must be positive");
        let p = order;
        let mut jacobi = DMatrix::<f64>::zeros(p, p);
        for k in 1..p {
            let b = (k as f64 / 2.0).sqrt();
            jacobi[(k, k - 1)] = b;
            jacobi[(k - 1, k)] = b;
        }
        let mut guesses: Vec<f64> = jacobi.symmetric_eigenvalues().iter().copied().collect();
        guesses.sort_by(|a, b| a.total_cmp(b));

        let mut nodes = Vec::with_capacity(p);
        let mut weights = Vec::with_capacity(p);
        for x0 in guesses {
            let mut x = x0;
            for _ in 0..8 {
                let (pn, pn1, _) = orthonormal_hermite(p, x);
                // p_n' = sqrt(2n) p_{n-1}
                let dx = pn / ((2.0 * p as f64).sqrt() * pn1);
                x -= dx;
                if dx.abs() <= 1e-16 * x.abs().max(1.0) {
                    break;
                }
            }
            let (_, _, sumsq) = orthonormal_hermite(p, x);
            nodes.push(x);
            weights.push(1.0 / sumsq);
        }
        // Exact symmetry about zero.
        for k in 0..p / 2 {
            let j = p - 1 - k;
            let x = 0.5 * (nodes[j] - nodes[k]);
            let w = 0.5 * (weights[j] + weights[k]);
            nodes[k] = -x;
            nodes[j] = x;
            weights[k] = w;
            weights[j] = w;
        }
        if p % 2 == 1 {
            nodes[p / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `E[g(Y)]` for `Y ~ law`: `Σ_k w_k g(m + sqrt(2V) u_k) / sqrt(π)`.
    pub fn expect<G: Fn(f64) -> f64>(&self, law: &GaussianLaw, g: G) -> f64 {
        let s = (2.0 * law.variance).sqrt();
        let sum: f64 = self
            .nodes
            .iter()
            .zip(&self.weights)
            .map(|(u, w)| w * g(law.mean + s * u))
            .sum();
        sum / PI.sqrt()
    }

    /// `E[g(Y) · score(Y)]` where the score is `∂_m` or `∂_V` of the log
    /// density, so the result is the corresponding derivative of
    /// [`expect`](Self::expect).
    pub fn expect_weighted<G: Fn(f64) -> f64>(&self, law: &GaussianLaw, g: G, weight: ScoreWeight) -> f64 {
        let v = law.variance;
        let s = (2.0 * v).sqrt();
        let sum: f64 = self
            .nodes
            .iter()
            .zip(&self.weights)
            .map(|(u, w)| {
                let d = s * u;
                let score = match weight {
                    ScoreWeight::ShiftOverV => d / v,
                    ScoreWeight::VarianceScore => -0.5 / v + d * d / (2.0 * v * v),
                };
                w * g(law.mean + d) * score
            })
            .sum();
        sum / PI.sqrt()
    }
}

/// Returns `(p_n(x), p_{n-1}(x), Σ_{j<n} p_j(x)²)` for the Hermite
/// polynomials orthonormal against `e^{-x²}`.
fn orthonormal_hermite(n: usize, x: f64) -> (f64, f64, f64) {
    let mut prev = 0.0;
    let mut cur = PI.powf(-0.25);
    let mut sumsq = 0.0;
    for j in 0..n {
        sumsq += cur * cur;
        let next = (2.0 / (j as f64 + 1.0)).sqrt() * x * cur - (j as f64 / (j as f64 + 1.0)).sqrt() * prev;
        prev = cur;
        cur = next;
    }
    (cur, prev, sumsq)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScoreWeight {
    /// `(y - m) / V`
    ShiftOverV,
    /// `-1/(2V) + (y - m)² / (2V²)`
    VarianceScore,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianLaw {
    pub mean: f64,
    pub variance: f64,
}

impl GaussianLaw {
    pub fn new(mean: f64, variance: f64) -> Result<Self> {
        if !(variance >= MIN_VARIANCE) || !variance.is_finite() {
            return Err(Error::NonPositiveVariance(variance));
        }
        Ok(Self { mean, variance })
    }

    pub fn centered(variance: f64) -> Result<Self> {
        Self::new(0.0, variance)
    }

    /// `ρ(m, V, y)`.
    pub fn density(&self, y: f64) -> f64 {
        let d = y - self.mean;
        (-d * d / (2.0 * self.variance)).exp() / (2.0 * PI * self.variance).sqrt()
    }
}

/// `ρ(m, V, y)`, rejecting `V ≤ 0`.
pub fn density(mean: f64, variance: f64, y: f64) -> Result<f64> {
    Ok(GaussianLaw::new(mean, variance)?.density(y))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Composite trapezoid of `g · ρ` on `[m - 10√V, m + 10√V]`.
    fn trapezoid_expect(law: &GaussianLaw, g: impl Fn(f64) -> f64, points: usize) -> f64 {
        let half = 10.0 * law.variance.sqrt();
        let (a, b) = (law.mean - half, law.mean + half);
        let h = (b - a) / (points - 1) as f64;
        let mut s = 0.0;
        for k in 0..points {
            let y = a + h * k as f64;
            let f = g(y) * law.density(y);
            s += if k == 0 || k == points - 1 { 0.5 * f } else { f };
        }
        s * h
    }

    fn double_factorial(k: u32) -> f64 {
        (1..=k).rev().step_by(2).map(|x| x as f64).product()
    }

    #[test]
    fn rule_basics() {
        for p in [6, 20, 40, 80, 200, 400] {
            let r = GaussHermiteRule::new(p);
            let total: f64 = r.weights().iter().sum();
            assert!((total - PI.sqrt()).abs() < 1e-13, "p={p} total={total}");
            for k in 0..p {
                assert_eq!(r.nodes()[k], -r.nodes()[p - 1 - k]);
                // Far-tail weights of the large rules underflow to zero.
                assert!(r.weights()[k] > 0.0 || (p > 200 && r.weights()[k] == 0.0));
            }
        }
    }

    #[test]
    fn polynomial_exactness() {
        // ∫ u^k e^{-u²} du = Γ((k+1)/2) = (k-1)!! sqrt(π) / 2^{k/2} for even k.
        for p in [6, 40] {
            let r = GaussHermiteRule::new(p);
            for k in 0..=10u32 {
                let q: f64 = r.nodes().iter().zip(r.weights()).map(|(u, w)| w * u.powi(k as i32)).sum();
                let exact = if k % 2 == 1 {
                    0.0
                } else {
                    double_factorial(k.saturating_sub(1)) * PI.sqrt() / 2f64.powi(k as i32 / 2)
                };
                assert!((q - exact).abs() < 1e-12 * exact.abs().max(1.0), "p={p} k={k}: {q} vs {exact}");
            }
        }
    }

    #[test]
    fn gaussian_moments_exact() {
        // E[Y^4] for N(m,V) = m⁴ + 6m²V + 3V².
        let r = GaussHermiteRule::default();
        let law = GaussianLaw::new(0.7, 1.9).unwrap();
        let e4 = r.expect(&law, |y| y.powi(4));
        let (m, v) = (0.7f64, 1.9f64);
        let exact = m.powi(4) + 6.0 * m * m * v + 3.0 * v * v;
        assert!((e4 - exact).abs() < 1e-12 * exact);
    }

    #[test]
    fn density_examples() {
        let s2pi = (2.0 * PI).sqrt();
        assert!((density(0.0, 1.0, 0.0).unwrap() - 1.0 / s2pi).abs() < 1e-16);
        assert!((density(2.0, 1.0, 2.0).unwrap() - 1.0 / s2pi).abs() < 1e-16);
        assert!((density(0.0, 4.0, 0.0).unwrap() - 1.0 / (8.0 * PI).sqrt()).abs() < 1e-16);
        assert!(matches!(density(0.0, 0.0, 1.0), Err(Error::NonPositiveVariance(_))));
        assert!(GaussianLaw::new(0.0, 1e-13).is_err());
    }

    #[test]
    fn density_integrates_to_one() {
        let r = GaussHermiteRule::default();
        let law = GaussianLaw::new(-1.0, 0.3).unwrap();
        // ∫ρ dy = E[1/ρ · ρ] evaluated through the rule's own change of variables.
        let total = r.expect(&law, |_| 1.0);
        assert!((total - 1.0).abs() < 1e-12);
        let via_density: f64 = {
            let s = (2.0 * law.variance).sqrt();
            r.nodes()
                .iter()
                .zip(r.weights())
                .map(|(u, w)| w * (u * u).exp() * s * law.density(law.mean + s * u))
                .sum()
        };
        assert!((via_density - 1.0).abs() < 1e-12);
    }

    #[test]
    fn expect_examples() {
        let r = GaussHermiteRule::default();
        let law = GaussianLaw::new(2.0, 3.0).unwrap();
        assert!((r.expect(&law, |_| 1.0) - 1.0).abs() < 1e-14);
        assert!((r.expect(&law, |y| y) - 2.0).abs() < 1e-13);
    }

    #[test]
    fn expect_tanh_matches_trapezoid() {
        let r = GaussHermiteRule::default();
        let law = GaussianLaw::new(1.0, 2.0).unwrap();
        let gh = r.expect(&law, f64::tanh);
        let tr = trapezoid_expect(&law, f64::tanh, 1_000_001);
        assert!((gh - tr).abs() < 1e-10 * tr.abs(), "{gh} vs {tr}");
        // Independent adaptive quadrature (scipy) gave 0.4521243904499749.
        assert!((gh - 0.452_124_390_449_974_9).abs() < 1e-12);
    }

    #[test]
    fn weighted_examples() {
        let r = GaussHermiteRule::default();
        let law = GaussianLaw::new(0.4, 1.3).unwrap();
        for w in [ScoreWeight::ShiftOverV, ScoreWeight::VarianceScore] {
            assert!(r.expect_weighted(&law, |_| 1.0, w).abs() < 1e-14);
        }
        assert!((r.expect_weighted(&law, |y| y, ScoreWeight::ShiftOverV) - 1.0).abs() < 1e-13);
    }

    #[test]
    fn weighted_match_finite_differences() {
        let r = GaussHermiteRule::default();
        let h = 1e-5;
        let e = |m: f64, v: f64| r.expect(&GaussianLaw::new(m, v).unwrap(), f64::tanh);
        let law = GaussianLaw::new(0.0, 1.0).unwrap();
        let dm = (e(h, 1.0) - e(-h, 1.0)) / (2.0 * h);
        let dv = (e(0.0, 1.0 + h) - e(0.0, 1.0 - h)) / (2.0 * h);
        assert!((r.expect_weighted(&law, f64::tanh, ScoreWeight::ShiftOverV) - dm).abs() < 1e-8);
        assert!((r.expect_weighted(&law, f64::tanh, ScoreWeight::VarianceScore) - dv).abs() < 1e-8);
    }

    #[test]
    fn shift_score_consistency_random_laws() {
        let r = GaussHermiteRule::default();
        let h = 1e-5;
        let mut state = 12345u64;
        let mut uniform = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..200 {
            let m = -3.0 + 6.0 * uniform();
            let v = 0.05 + 1.95 * uniform();
            let law = GaussianLaw::new(m, v).unwrap();
            let fd = (r.expect(&GaussianLaw::new(m + h, v).unwrap(), f64::tanh)
                - r.expect(&GaussianLaw::new(m - h, v).unwrap(), f64::tanh))
                / (2.0 * h);
            let an = r.expect_weighted(&law, f64::tanh, ScoreWeight::ShiftOverV);
            assert!((an - fd).abs() < 1e-7, "m={m} v={v}: {an} vs {fd}");
        }
    }

    #[test]
    fn refinement_is_converged() {
        let r40 = GaussHermiteRule::default();
        let r80 = GaussHermiteRule::new(2 * DEFAULT_ORDER);
        for (m, v) in [(0.0, 1.0), (1.5, 0.2), (-2.0, 2.0), (1.0, 2.0), (0.3, 0.0625)] {
            let law = GaussianLaw::new(m, v).unwrap();
            for g in [
                crate::model::GainSpec::Constant(0.1),
                crate::model::GainSpec::Linear(1.0),
                crate::model::GainSpec::tanh(1.0, 1.0, 0.0),
                crate::model::GainSpec::tanh(4.0, 1.0, 0.5),
            ] {
                let a = r40.expect(&law, |y| g.value(y));
                let b = r80.expect(&law, |y| g.value(y));
                assert!((a - b).abs() < 1e-12, "{g:?} at ({m},{v}): {a} vs {b}");
            }
        }
    }
}
