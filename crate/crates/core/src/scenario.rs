//! Runs one configured scenario and writes `limit.csv`, `particle.csv` and
//! `verdict.txt`.
//!
//! CSV files start with a `#` line naming the scenario and seed, then a
//! column header. Numbers are written in scientific notation with the
//! configured number of significant digits; at 17 they re-parse to the same
//! doubles.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};

use crate::analysis::{compare, ComparisonReport};
use crate::balance::BalanceSystem;
use crate::config::{MeanSource, Mode, ScenarioConfig};
use crate::error::{Error, Result};
use crate::limit::{integrate_limit, LimitOptions, LimitTrajectory, TerminationReason};
use crate::model::Population;
use crate::particle::{InitialLaw, ObservableSeries, ParticleSystem, SimConfig};
use crate::quadrature::GaussHermiteRule;

/// Command-line overrides; `None` keeps the file's value.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub mode: Option<Mode>,
    pub n: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

impl ScenarioConfig {
    pub fn apply(&mut self, overrides: &Overrides) -> Result<()> {
        if let Some(mode) = overrides.mode {
            self.mode = mode;
        }
        if let Some(n) = overrides.n {
            self.run.n = n;
        }
        if let Some(seed) = overrides.seed {
            self.run.seed = seed;
        }
        if let Some(out) = &overrides.out {
            self.output.dir = out.clone();
        }
        self.validate()
    }
}

#[derive(Debug)]
pub struct ScenarioOutcome {
    pub mode: Mode,
    pub limit: Option<LimitTrajectory>,
    pub series: Option<ObservableSeries>,
    pub report: Option<ComparisonReport>,
    /// `Some` in compare mode.
    pub passed: Option<bool>,
    pub files: Vec<PathBuf>,
}

impl ScenarioOutcome {
    /// 0 unless a comparison ran and failed.
    pub fn exit_code(&self) -> i32 {
        match self.passed {
            Some(false) => 1,
            _ => 0,
        }
    }
}

/// Runs the scenario with the given worker cap; results do not depend on it.
pub fn run_scenario(config: &ScenarioConfig, workers: Option<usize>) -> Result<ScenarioOutcome> {
    config.validate()?;
    let dir = &config.output.dir;
    fs::create_dir_all(dir)?;
    let mut outcome = ScenarioOutcome {
        mode: config.mode,
        limit: None,
        series: None,
        report: None,
        passed: None,
        files: Vec::new(),
    };

    let balanced = if config.mode.needs_limit() || config.init.particle_means == MeanSource::Balanced {
        let system = BalanceSystem::new(&config.model, GaussHermiteRule::new(config.run.quadrature_order))?;
        let [k_e, k_i] = config.init.k0;
        let (v0, report) = system.solve(k_e, k_i, &config.init.v_guess, &config.run.solver)?;
        info!(
            "balanced root {:?} after {} Newton iterations, stability margin {:.3e}",
            v0, report.iterations, report.stability_margin
        );
        Some((system, v0))
    } else {
        None
    };

    if config.mode.needs_limit() {
        let (system, v0) = balanced.as_ref().expect("solved above");
        let opts = LimitOptions {
            dt: config.run.dt,
            t_end: config.run.t_end,
            record_stride: config.run.stride,
            correct: true,
            solver: config.run.solver,
        };
        let traj = integrate_limit(system, v0, config.init.k0, &opts)?;
        if let Some((t, reason)) = traj.terminated {
            warn!("limit trajectory stopped at t = {t}: {reason:?}");
        }
        let path = dir.join("limit.csv");
        fs::write(&path, limit_csv(config, &traj))?;
        outcome.files.push(path);
        outcome.limit = Some(traj);
    }

    if config.mode.needs_particles() {
        let means = match config.init.particle_means {
            MeanSource::Balanced => balanced.as_ref().expect("solved above").1.clone(),
            MeanSource::Guess => config.init.v_guess.clone(),
        };
        let sim = SimConfig {
            model: config.model.clone(),
            n: config.run.n,
            dt: config.run.dt,
            t_end: config.run.t_end,
            seed: config.run.seed,
            stride: config.run.stride,
            initial: InitialLaw {
                means,
                variances: config.init.k0,
            },
            workers,
            snapshot_every: if config.mode == Mode::Compare {
                config.run.wasserstein_every
            } else {
                0
            },
        };
        let path = dir.join("particle.csv");
        match ParticleSystem::new(sim)?.run() {
            Ok(series) => {
                fs::write(&path, particle_csv(config, &series))?;
                outcome.files.push(path);
                outcome.series = Some(series);
            }
            Err(Error::BlowUp {
                t,
                index,
                population,
                partial,
            }) => {
                fs::write(&path, particle_csv(config, &partial))?;
                return Err(Error::BlowUp {
                    t,
                    index,
                    population,
                    partial,
                });
            }
            Err(e) => return Err(e),
        }
    }

    if config.mode == Mode::Compare {
        let traj = outcome.limit.as_ref().expect("limit ran");
        let series = outcome.series.as_ref().expect("particles ran");
        let horizon = *traj.times.last().expect("non-empty trajectory");
        let covered = restrict(series, horizon);
        let mut report = compare(&covered, traj, &config.run.tolerances)?;
        if traj.terminated.is_some() {
            report.passed = false;
        }
        let path = dir.join("verdict.txt");
        fs::write(&path, verdict(config, &report, traj.terminated))?;
        outcome.files.push(path);
        outcome.passed = Some(report.passed);
        outcome.report = Some(report);
    }
    Ok(outcome)
}

/// The part of a series recorded no later than `horizon`.
fn restrict(series: &ObservableSeries, horizon: f64) -> ObservableSeries {
    let tol = 1e-9 * horizon.abs().max(1.0);
    let keep = series.times.partition_point(|t| *t <= horizon + tol);
    ObservableSeries {
        times: series.times[..keep].to_vec(),
        v_hat: series.v_hat[..keep].to_vec(),
        k_hat: series.k_hat[..keep].to_vec(),
        projection_defect: series.projection_defect[..keep].to_vec(),
        snapshots: series.snapshots.iter().filter(|s| s.t <= horizon + tol).cloned().collect(),
    }
}

fn number(x: f64, precision: usize) -> String {
    format!("{:.*e}", precision.saturating_sub(1), x)
}

fn coefficient_columns(config: &ScenarioConfig, prefix: &str) -> Vec<String> {
    Population::ALL
        .iter()
        .flat_map(|p| {
            config
                .model
                .basis
                .functions()
                .iter()
                .map(move |f| format!("{prefix}_{}_{}", p.label(), f.name()))
        })
        .collect()
}

fn header(config: &ScenarioConfig, kind: &str, columns: &[String]) -> String {
    format!(
        "# balnet {kind} scenario={} seed={} n={} dt={} t_end={}\n{}\n",
        config.name,
        config.run.seed,
        config.run.n,
        config.run.dt,
        config.run.t_end,
        columns.join(",")
    )
}

/// Columns: `t, v_<pop>_<basis>..., k_e, k_i, residual_norm, stability_margin`.
pub fn limit_csv(config: &ScenarioConfig, traj: &LimitTrajectory) -> String {
    let mut columns = vec!["t".to_string()];
    columns.extend(coefficient_columns(config, "v"));
    columns.extend(["k_e", "k_i", "residual_norm", "stability_margin"].map(String::from));
    let mut out = header(config, "limit", &columns);
    let p = config.output.precision;
    for (k, s) in traj.states.iter().enumerate() {
        let row: Vec<String> = std::iter::once(traj.times[k])
            .chain(s.v.iter().copied())
            .chain([s.k_e, s.k_i, traj.residual_norms[k], traj.stability_margins[k]])
            .map(|x| number(x, p))
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Columns: `t, vhat_<pop>_<basis>..., khat_e, khat_i, projection_defect`.
pub fn particle_csv(config: &ScenarioConfig, series: &ObservableSeries) -> String {
    let mut columns = vec!["t".to_string()];
    columns.extend(coefficient_columns(config, "vhat"));
    columns.extend(["khat_e", "khat_i", "projection_defect"].map(String::from));
    let mut out = header(config, "particle", &columns);
    let p = config.output.precision;
    for k in 0..series.len() {
        let row: Vec<String> = std::iter::once(series.times[k])
            .chain(series.v_hat[k].iter().copied())
            .chain(series.k_hat[k])
            .chain([series.projection_defect[k]])
            .map(|x| number(x, p))
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

fn verdict(config: &ScenarioConfig, report: &ComparisonReport, terminated: Option<(f64, TerminationReason)>) -> String {
    let p = config.output.precision;
    let tol = &config.run.tolerances;
    let mut out = String::new();
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(out, "{k} = {v}");
    };
    kv("scenario", config.name.clone());
    kv("seed", config.run.seed.to_string());
    kv("n", config.run.n.to_string());
    kv("samples", report.samples.to_string());
    kv("sup_mean_error_e", number(report.sup_mean_error[0], p));
    kv("sup_mean_error_i", number(report.sup_mean_error[1], p));
    kv("sup_var_error", number(report.sup_var_error, p));
    if let Some(w) = report.sup_wasserstein() {
        kv("sup_wasserstein", number(w, p));
    }
    kv("tolerance_mean_e", number(tol.mean_e, p));
    kv("tolerance_mean_i", number(tol.mean_i, p));
    kv("tolerance_variance", number(tol.variance, p));
    if let Some(w) = tol.wasserstein {
        kv("tolerance_wasserstein", number(w, p));
    }
    kv(
        "limit_terminated",
        match terminated {
            None => "no".into(),
            Some((t, TerminationReason::DetJZero)) => format!("singular_jacobian at t = {}", number(t, p)),
            Some((t, TerminationReason::Unstable)) => format!("unstable at t = {}", number(t, p)),
        },
    );
    kv("passed", report.passed.to_string());
    out
}

/// Reads a CSV written by this module back into rows of numbers.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.starts_with('#'));
    let (_, head) = lines.next().ok_or(Error::Parse {
        line: 1,
        message: "missing column header".into(),
    })?;
    let columns = head.split(',').map(String::from).collect::<Vec<_>>();
    let rows = lines
        .map(|(k, l)| {
            l.split(',')
                .map(|x| {
                    x.parse::<f64>().map_err(|e| Error::Parse {
                        line: k + 1,
                        message: e.to_string(),
                    })
                })
                .collect()
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    Ok((columns, rows))
}
