//! Particle-versus-limit statistics: mean and covariance errors, Wasserstein
//! distances of the fluctuation marginals, and spectral peak detection.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::limit::LimitTrajectory;
use crate::model::Population;
use crate::particle::ObservableSeries;

/// Exact 1-Wasserstein distance between two empirical distributions.
pub fn wasserstein1d(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    if a.len() == b.len() {
        let total: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum();
        return Ok(total / a.len() as f64);
    }
    // ∫ |F_a - F_b| over the merged breakpoints.
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut x = a[0].min(b[0]);
    let mut total = 0.0;
    while i < a.len() || j < b.len() {
        let next = match (a.get(i), b.get(j)) {
            (Some(p), Some(q)) => p.min(*q),
            (Some(p), None) => *p,
            (None, Some(q)) => *q,
            (None, None) => unreachable!(),
        };
        total += (i as f64 / na - j as f64 / nb).abs() * (next - x);
        x = next;
        while i < a.len() && a[i] == x {
            i += 1;
        }
        while j < b.len() && b[j] == x {
            j += 1;
        }
    }
    Ok(total)
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal")
}

/// Standard normal CDF; libm's `erfc` keeps full relative accuracy in the
/// lower tail.
fn normal_cdf(s: f64) -> f64 {
    0.5 * libm::erfc(-s / std::f64::consts::SQRT_2)
}

/// Standard normal quantile, statrs' estimate polished by Newton steps on
/// [`normal_cdf`].
fn normal_quantile(normal: &Normal, u: f64) -> f64 {
    let mut q = normal.inverse_cdf(u);
    for _ in 0..2 {
        let d = phi(q);
        if d > 0.0 {
            q -= (normal_cdf(q) - u) / d;
        }
    }
    q
}

fn phi(s: f64) -> f64 {
    if s.is_finite() {
        (-0.5 * s * s).exp() / (2.0 * std::f64::consts::PI).sqrt()
    } else {
        0.0
    }
}

/// Exact 1-Wasserstein distance between the empirical law of `samples` and
/// `N(mean, variance)`, integrated in closed form over the quantile coupling.
pub fn wasserstein_to_gaussian(samples: &[f64], mean: f64, variance: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptySample);
    }
    if !(variance >= 0.0) {
        return Err(Error::NegativeVariance(variance));
    }
    if variance == 0.0 {
        return Ok(samples.iter().map(|y| (y - mean).abs()).sum::<f64>() / samples.len() as f64);
    }
    let sd = variance.sqrt();
    let mut s: Vec<f64> = samples.iter().map(|y| (y - mean) / sd).collect();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    let normal = std_normal();
    // φ(Φ⁻¹(k/n)) for k = 0..=n.
    let density_at: Vec<f64> = (0..=n)
        .map(|k| match k {
            0 => 0.0,
            k if k == n => 0.0,
            k => phi(normal_quantile(&normal, k as f64 / n as f64)),
        })
        .collect();
    let mut total = 0.0;
    for (k, &y) in s.iter().enumerate() {
        let (u1, u2) = (k as f64 / n as f64, (k + 1) as f64 / n as f64);
        let u = normal_cdf(y);
        let (u_star, d_star) = if u <= u1 {
            (u1, density_at[k])
        } else if u >= u2 {
            (u2, density_at[k + 1])
        } else {
            (u, phi(y))
        };
        // ∫_{u1}^{u2} |y - Φ⁻¹(u)| du, split where Φ⁻¹ crosses y.
        total += y * (u_star - u1) - (density_at[k] - d_star) + (d_star - density_at[k + 1]) - y * (u2 - u_star);
    }
    Ok(sd * total)
}

/// Bracket on the distance between the fluctuation ensemble and the limit
/// law under the cost `|y_e - z_e| + |y_i - z_i|`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DistanceBracket {
    pub lower: f64,
    pub upper: f64,
}

/// The limit fluctuations are independent centred Gaussians with variances
/// `K_α`, a product law, so the sum of the marginal distances is both the
/// lower bound and the cost of the coordinate-wise quantile coupling.
pub fn distance_to_limit(y_e: &[f64], y_i: &[f64], variances: [f64; 2]) -> Result<DistanceBracket> {
    let d = wasserstein_to_gaussian(y_e, 0.0, variances[0])? + wasserstein_to_gaussian(y_i, 0.0, variances[1])?;
    Ok(DistanceBracket { lower: d, upper: d })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerances {
    pub mean_e: f64,
    pub mean_i: f64,
    pub variance: f64,
    /// Only checked when snapshots are available.
    pub wasserstein: Option<f64>,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            mean_e: 0.05,
            mean_i: 0.05,
            variance: 0.1,
            wasserstein: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonReport {
    /// `sup_t max_a |v̂_α,a - v̄_α,a|`.
    pub sup_mean_error: [f64; 2],
    /// `sup_t max_α |K̂_α - K_α|`.
    pub sup_var_error: f64,
    /// `(t, bracket)` at every snapshot.
    pub wasserstein: Vec<(f64, DistanceBracket)>,
    pub samples: usize,
    pub passed: bool,
}

impl ComparisonReport {
    pub fn sup_wasserstein(&self) -> Option<f64> {
        self.wasserstein.iter().map(|(_, b)| b.upper).reduce(f64::max)
    }
}

/// Compares a particle run against the limit trajectory on the run's times,
/// each of which must be a recorded limit time.
pub fn compare(series: &ObservableSeries, traj: &LimitTrajectory, tol: &Tolerances) -> Result<ComparisonReport> {
    let mut sup_mean = [0.0f64; 2];
    let mut sup_var = 0.0f64;
    for (k, &t) in series.times.iter().enumerate() {
        let idx = traj
            .index_of(t)
            .ok_or_else(|| Error::GridMismatch(format!("particle time {t} is not on the limit grid")))?;
        let state = &traj.states[idx];
        let v_hat = &series.v_hat[k];
        if v_hat.len() != state.v.len() {
            return Err(Error::DimensionMismatch {
                expected: state.v.len(),
                got: v_hat.len(),
            });
        }
        let m = v_hat.len() / 2;
        for p in Population::ALL {
            let range = p.index() * m..(p.index() + 1) * m;
            let err = v_hat[range.clone()]
                .iter()
                .zip(&state.v[range])
                .fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs()));
            sup_mean[p.index()] = nan_max(sup_mean[p.index()], err);
            sup_var = nan_max(sup_var, (series.k_hat[k][p.index()] - state.variance(p)).abs());
        }
    }
    let mut wasserstein = Vec::with_capacity(series.snapshots.len());
    for snap in &series.snapshots {
        let idx = traj
            .index_of(snap.t)
            .ok_or_else(|| Error::GridMismatch(format!("snapshot time {} is not on the limit grid", snap.t)))?;
        let state = &traj.states[idx];
        wasserstein.push((snap.t, distance_to_limit(&snap.y_e, &snap.y_i, [state.k_e, state.k_i])?));
    }
    let mut report = ComparisonReport {
        sup_mean_error: sup_mean,
        sup_var_error: sup_var,
        wasserstein,
        samples: series.times.len(),
        passed: false,
    };
    report.passed = sup_mean[0] < tol.mean_e
        && sup_mean[1] < tol.mean_i
        && sup_var < tol.variance
        && match (tol.wasserstein, report.sup_wasserstein()) {
            (Some(limit), Some(d)) => d < limit,
            _ => true,
        };
    Ok(report)
}

fn nan_max(a: f64, b: f64) -> f64 {
    if a.is_nan() || b.is_nan() {
        f64::NAN
    } else {
        a.max(b)
    }
}

/// Minimum series length for spectral analysis.
pub const MIN_SPECTRAL_SAMPLES: usize = 64;

/// Frequency (cycles per unit time) of the strongest non-zero spectral peak
/// of one mean coefficient, or 0 if no peak clears 3× the spectral median.
pub fn dominant_frequency(series: &ObservableSeries, population: Population, coefficient: usize) -> Result<f64> {
    let n = series.len();
    if n < MIN_SPECTRAL_SAMPLES {
        return Err(Error::TooFewSamples {
            need: MIN_SPECTRAL_SAMPLES,
            got: n,
        });
    }
    let dt = series.times[1] - series.times[0];
    let uniform = series
        .times
        .windows(2)
        .all(|w| ((w[1] - w[0]) - dt).abs() <= 1e-9 * dt.abs().max(1.0));
    if !(dt > 0.0) || !uniform {
        return Err(Error::GridMismatch("spectral analysis needs a uniform time grid".into()));
    }
    dominant_frequency_of(&series.coefficient(population, coefficient), dt)
}

/// [`dominant_frequency`] for a raw signal sampled every `dt`.
pub fn dominant_frequency_of(signal: &[f64], dt: f64) -> Result<f64> {
    let n = signal.len();
    if n < MIN_SPECTRAL_SAMPLES {
        return Err(Error::TooFewSamples {
            need: MIN_SPECTRAL_SAMPLES,
            got: n,
        });
    }
    let mean = signal.iter().sum::<f64>() / n as f64;
    let mut buf: Vec<Complex<f64>> = signal.iter().map(|x| Complex::new(x - mean, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let mags: Vec<f64> = buf[1..=n / 2].iter().map(|c| c.norm()).collect();
    let mut sorted = mags.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    let (k, peak) = mags
        .iter()
        .enumerate()
        .fold((0, 0.0f64), |best, (k, &m)| if m > best.1 { (k, m) } else { best });
    if !(peak > 3.0 * median) {
        return Ok(0.0);
    }
    Ok((k + 1) as f64 / (n as f64 * dt))
}
