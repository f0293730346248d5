//! Deterministic kinetic limit: closed-form variance relaxation plus the
//! constrained mean dynamics `dv/dt = -J⁻¹ H`.
//!
//! Each step is a classical RK4 predictor on `mean_rhs` followed by a Newton
//! corrector that puts `v` back on `G(·, K(t)) = 0`, so the balance identity
//! does not drift over long horizons.

use crate::balance::{inf_norm, stability_margin, BalanceSystem, MomentState, SolverOptions, SINGULAR_DET, STABILITY_TOLERANCE};
use crate::error::{Error, Result};
use crate::model::Population;

/// Exact solution of `dK/dt = -2K/τ + Σ²` from `K(0) = k0`.
pub fn covariance_at(k0: f64, tau: f64, sigma: f64, t: f64) -> f64 {
    let k_star = 0.5 * tau * sigma * sigma;
    k_star + (k0 - k_star) * (-2.0 * t / tau).exp()
}

/// Why a trajectory stopped before its horizon.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TerminationReason {
    /// The balance Jacobian became singular.
    DetJZero,
    /// The balanced root lost stability.
    Unstable,
}

#[derive(Clone, Debug, Default)]
pub struct LimitTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<MomentState>,
    pub residual_norms: Vec<f64>,
    pub stability_margins: Vec<f64>,
    /// Breakdown time and reason, if the trajectory ended early.
    pub terminated: Option<(f64, TerminationReason)>,
}

impl LimitTrajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> Option<&MomentState> {
        self.states.last()
    }

    /// Index of the recorded time equal to `t` (within `1e-9 · max(1, |t|)`).
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let tol = 1e-9 * t.abs().max(1.0);
        let k = self.times.partition_point(|s| *s < t - tol);
        (k < self.times.len() && (self.times[k] - t).abs() <= tol).then_some(k)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LimitOptions {
    pub dt: f64,
    pub t_end: f64,
    /// Record every `record_stride`-th step (the final step is always kept).
    pub record_stride: usize,
    /// Re-project onto the balanced manifold after each predictor step.
    pub correct: bool,
    pub solver: SolverOptions,
}

impl Default for LimitOptions {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            t_end: 5.0,
            record_stride: 1,
            correct: true,
            solver: SolverOptions::default(),
        }
    }
}

/// Number of steps of size `dt` needed to reach `t_end`.
pub(crate) fn step_count(t_end: f64, dt: f64) -> usize {
    ((t_end / dt) - 1e-9).ceil().max(0.0) as usize
}

/// Integrates the limit from a balanced, stable `v0` at variances `k0`.
pub fn integrate_limit(
    system: &BalanceSystem,
    v0: &[f64],
    k0: [f64; 2],
    opts: &LimitOptions,
) -> Result<LimitTrajectory> {
    if !(opts.dt > 0.0) || !(opts.t_end >= 0.0) || opts.record_stride == 0 {
        return Err(Error::Validation("need dt > 0, t_end >= 0 and record_stride >= 1".into()));
    }
    let params = Population::ALL.map(|p| system.time_constant_and_noise(p));
    let variances = |t: f64| -> (f64, f64) {
        (
            covariance_at(k0[0], params[0].0, params[0].1, t),
            covariance_at(k0[1], params[1].0, params[1].1, t),
        )
    };
    let state_at = |v: Vec<f64>, t: f64| {
        let (k_e, k_i) = variances(t);
        MomentState { v, k_e, k_i, t }
    };

    let s0 = state_at(v0.to_vec(), 0.0);
    let r0 = inf_norm(&system.residual(&s0)?);
    if !(r0 < 1e-8) {
        return Err(Error::InvalidInitialState(format!(
            "initial means are not balanced (|G|_inf = {r0:.3e})"
        )));
    }
    let margin0 = stability_margin(&system.jacobian(&s0)?)?;
    if margin0 >= -STABILITY_TOLERANCE {
        return Err(Error::InvalidInitialState(format!(
            "initial balanced state is not stable (margin = {margin0:.3e})"
        )));
    }

    let mut traj = LimitTrajectory::default();
    traj.times.push(0.0);
    traj.residual_norms.push(r0);
    traj.stability_margins.push(margin0);
    traj.states.push(s0);

    let steps = step_count(opts.t_end, opts.dt);
    let dt = opts.dt;
    let mut v = v0.to_vec();
    let axpy = |v: &[f64], h: f64, k: &[f64]| -> Vec<f64> { v.iter().zip(k).map(|(a, b)| a + h * b).collect() };

    for step in 0..steps {
        let t = step as f64 * dt;
        let t_next = (step + 1) as f64 * dt;
        let rhs = |v: Vec<f64>, t: f64| system.mean_rhs(&state_at(v, t));
        let stages = (|| -> Result<Vec<f64>> {
            let k1 = rhs(v.clone(), t)?;
            let k2 = rhs(axpy(&v, 0.5 * dt, &k1), t + 0.5 * dt)?;
            let k3 = rhs(axpy(&v, 0.5 * dt, &k2), t + 0.5 * dt)?;
            let k4 = rhs(axpy(&v, dt, &k3), t_next)?;
            Ok((0..v.len())
                .map(|c| v[c] + dt / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]))
                .collect())
        })();
        let predicted = match stages {
            Ok(p) => p,
            Err(Error::SingularJacobian { .. }) => {
                traj.terminated = Some((t, TerminationReason::DetJZero));
                break;
            }
            Err(e) => return Err(e),
        };

        let (k_e, k_i) = variances(t_next);
        v = if opts.correct {
            match system.solve(k_e, k_i, &predicted, &opts.solver) {
                Ok((root, _)) => root,
                Err(Error::UnstableRoot { report }) => {
                    record(&mut traj, state_at(report.v.clone(), t_next), report.residual_norm(), report.stability_margin);
                    traj.terminated = Some((t_next, TerminationReason::Unstable));
                    break;
                }
                Err(e) => return Err(e),
            }
        } else {
            predicted
        };

        let state = state_at(v.clone(), t_next);
        let last = step + 1 == steps;
        if (step + 1) % opts.record_stride == 0 || last {
            let residual = inf_norm(&system.residual(&state)?);
            let j = system.jacobian(&state)?;
            let margin = stability_margin(&j)?;
            let det = j.determinant();
            record(&mut traj, state, residual, margin);
            if !(det.abs() >= SINGULAR_DET) {
                traj.terminated = Some((t_next, TerminationReason::DetJZero));
                break;
            }
            if margin >= -STABILITY_TOLERANCE {
                traj.terminated = Some((t_next, TerminationReason::Unstable));
                break;
            }
        }
    }
    Ok(traj)
}

fn record(traj: &mut LimitTrajectory, state: MomentState, residual: f64, margin: f64) {
    traj.times.push(state.t);
    traj.residual_norms.push(residual);
    traj.stability_margins.push(margin);
    traj.states.push(state);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;
    use crate::quadrature::GaussHermiteRule;

    fn system(model: crate::NetworkModel) -> BalanceSystem {
        BalanceSystem::new(&model, GaussHermiteRule::default()).unwrap()
    }

    #[test]
    fn covariance_examples() {
        for t in [0.0, 0.3, 10.0] {
            assert_eq!(covariance_at(0.5, 1.0, 1.0, t), 0.5);
        }
        assert!((covariance_at(1.0, 1.0, 0.0, 0.5) - (-1.0f64).exp()).abs() < 1e-16);
        assert!((covariance_at(2.0, 1.0, 1.0, 1e3) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn covariance_satisfies_its_ode() {
        let h = 1e-6;
        for (k0, tau, sigma) in [(2.0, 1.0, 1.0), (0.1, 0.5, 0.5), (1.0, 3.0, 0.2)] {
            for t in [0.0, 0.4, 2.0] {
                let t = t + h;
                let d = (covariance_at(k0, tau, sigma, t + h) - covariance_at(k0, tau, sigma, t - h)) / (2.0 * h);
                let k = covariance_at(k0, tau, sigma, t);
                assert!((d - (-2.0 * k / tau + sigma * sigma)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn test1_trajectory_is_constant() {
        let sys = system(presets::test1_model());
        let opts = LimitOptions {
            t_end: 1.0,
            ..Default::default()
        };
        for k0 in [[0.5, 0.5], [1.0, 2.0]] {
            let traj = integrate_limit(&sys, &[0.5, 1.0], k0, &opts).unwrap();
            assert!(traj.terminated.is_none());
            assert_eq!(traj.len(), 1001);
            for s in &traj.states {
                assert!((s.v[0] - 0.5).abs() < 1e-10 && (s.v[1] - 1.0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn test2_follows_resolved_roots() {
        let sys = system(presets::test2_model());
        let opts = LimitOptions {
            t_end: 1.0,
            ..Default::default()
        };
        let (v0, _) = sys.solve(1.0, 2.0, &[0.0, 0.0], &opts.solver).unwrap();
        let traj = integrate_limit(&sys, &v0, [1.0, 2.0], &opts).unwrap();
        assert!(traj.residual_norms.iter().all(|r| *r < 1e-9));
        for s in traj.states.iter().step_by(50) {
            let (root, _) = sys.solve(s.k_e, s.k_i, &[0.0, 0.0], &opts.solver).unwrap();
            for (r, v) in root.iter().zip(&s.v) {
                assert!((r - v).abs() < 1e-8, "t={}", s.t);
            }
        }
    }

    #[test]
    fn predictor_alone_is_fourth_order() {
        let sys = system(presets::test2_model());
        let tight = SolverOptions {
            tolerance: 1e-14,
            max_iterations: 100,
        };
        let (v0, _) = sys.solve(1.0, 2.0, &[0.0, 0.0], &tight).unwrap();
        let t_end = 1.0;
        let run = |dt: f64| {
            let opts = LimitOptions {
                dt,
                t_end,
                correct: false,
                solver: tight,
                record_stride: 1,
            };
            integrate_limit(&sys, &v0, [1.0, 2.0], &opts).unwrap().last().unwrap().v.clone()
        };
        let k_e = covariance_at(1.0, 1.0, 1.0, t_end);
        let k_i = covariance_at(2.0, 1.0, 1.0, t_end);
        let (exact, _) = sys.solve(k_e, k_i, &v0, &tight).unwrap();
        let err = |v: Vec<f64>| inf_norm(&[v[0] - exact[0], v[1] - exact[1]]);
        let e1 = err(run(0.1));
        let e2 = err(run(0.05));
        let ratio = e1 / e2;
        assert!(ratio > 12.0 && ratio < 20.0, "e1={e1:e} e2={e2:e} ratio={ratio}");
    }

    #[test]
    fn step_size_robustness() {
        let sys = system(presets::test2_model());
        let (v0, _) = sys.solve(1.0, 2.0, &[0.0, 0.0], &SolverOptions::default()).unwrap();
        let run = |dt: f64| {
            let opts = LimitOptions {
                dt,
                t_end: 2.0,
                ..Default::default()
            };
            integrate_limit(&sys, &v0, [1.0, 2.0], &opts).unwrap().last().unwrap().v.clone()
        };
        let a = run(2e-3);
        let b = run(1e-3);
        assert!((a[0] - b[0]).abs() < 1e-8 && (a[1] - b[1]).abs() < 1e-8);
    }

    #[test]
    fn rejects_unbalanced_start() {
        let sys = system(presets::test1_model());
        assert!(matches!(
            integrate_limit(&sys, &[0.0, 0.0], [0.5, 0.5], &LimitOptions::default()),
            Err(Error::InvalidInitialState(_))
        ));
    }

    #[test]
    fn rejects_unstable_start() {
        let sys = system(presets::test3_model());
        let k = presets::TEST3_EQUILIBRIUM_VARIANCE;
        assert!(matches!(
            integrate_limit(&sys, &[0.0; 6], [k, k], &LimitOptions::default()),
            Err(Error::InvalidInitialState(_))
        ));
    }

    #[test]
    fn index_lookup() {
        let traj = LimitTrajectory {
            times: vec![0.0, 0.1, 0.2, 0.30000000000000004],
            ..Default::default()
        };
        assert_eq!(traj.index_of(0.3), Some(3));
        assert_eq!(traj.index_of(0.1), Some(1));
        assert_eq!(traj.index_of(0.15), None);
    }
}
