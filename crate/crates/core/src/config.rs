//! Strict INI-style scenario files.
//!
//! ```text
//! [scenario]  name, mode = limit | particle | compare
//! [model]     domain = point | ring, basis = constant, cos, sin
//!             tau_e, tau_i, sigma_e, sigma_i
//!             kernel_ee .. kernel_ii   M diagonal values, or M rows of M
//!                                      values separated by ';'
//!             gain_ee .. gain_ii       constant A | linear C | tanh C gamma xi
//! [run]       n, dt, t_end, seed, stride
//!             quadrature_order, newton_tolerance, newton_max_iterations
//!             tolerance_mean_e, tolerance_mean_i, tolerance_variance,
//!             tolerance_wasserstein, wasserstein_every
//! [init]      k_e, k_i, v_guess, particle_means = balanced | guess
//! [output]    dir, precision
//! ```
//!
//! `#` and `;` start comments. Unknown sections and keys, duplicates and
//! malformed values are errors carrying the 1-based line number.

use std::collections::HashMap;
use std::path::PathBuf;

use crate::analysis::Tolerances;
use crate::balance::SolverOptions;
use crate::error::{Error, Result};
use crate::model::{
    BasisFunction, ConnectivityKernel, Domain, GainSpec, GainTable, IntrinsicDynamics, NetworkModel, Population,
    SpatialBasis,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Limit,
    Particle,
    Compare,
}

impl Mode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "limit" => Some(Mode::Limit),
            "particle" => Some(Mode::Particle),
            "compare" => Some(Mode::Compare),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Mode::Limit => "limit",
            Mode::Particle => "particle",
            Mode::Compare => "compare",
        }
    }

    pub fn needs_limit(self) -> bool {
        self != Mode::Particle
    }

    pub fn needs_particles(self) -> bool {
        self != Mode::Limit
    }
}

/// Where the particle means start.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MeanSource {
    /// The balanced root found from `v_guess` at `(k_e, k_i)`.
    Balanced,
    /// `v_guess` itself.
    Guess,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunSettings {
    pub n: usize,
    pub dt: f64,
    pub t_end: f64,
    pub seed: u64,
    pub stride: usize,
    pub quadrature_order: usize,
    pub solver: SolverOptions,
    pub tolerances: Tolerances,
    /// Distance to the limit law every this many records; 0 disables.
    pub wasserstein_every: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InitSettings {
    pub k0: [f64; 2],
    pub v_guess: Vec<f64>,
    pub particle_means: MeanSource,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OutputSettings {
    pub dir: PathBuf,
    /// Significant digits in CSV output.
    pub precision: usize,
}

#[derive(Clone, Debug)]
pub struct ScenarioConfig {
    pub name: String,
    pub mode: Mode,
    pub model: NetworkModel,
    pub run: RunSettings,
    pub init: InitSettings,
    pub output: OutputSettings,
}

const SECTIONS: [(&str, &[&str]); 5] = [
    ("scenario", &["name", "mode"]),
    (
        "model",
        &[
            "domain", "basis", "tau_e", "tau_i", "sigma_e", "sigma_i", "kernel_ee", "kernel_ei", "kernel_ie",
            "kernel_ii", "gain_ee", "gain_ei", "gain_ie", "gain_ii",
        ],
    ),
    (
        "run",
        &[
            "n",
            "dt",
            "t_end",
            "seed",
            "stride",
            "quadrature_order",
            "newton_tolerance",
            "newton_max_iterations",
            "tolerance_mean_e",
            "tolerance_mean_i",
            "tolerance_variance",
            "tolerance_wasserstein",
            "wasserstein_every",
        ],
    ),
    ("init", &["k_e", "k_i", "v_guess", "particle_means"]),
    ("output", &["dir", "precision"]),
];

struct Entry {
    value: String,
    line: usize,
}

struct Document {
    entries: HashMap<(String, String), Entry>,
    last_line: usize,
}

fn strip_comment(line: &str) -> &str {
    match line.find(['#', ';']) {
        Some(k) if line[..k].trim().is_empty() => "",
        // Inline comments need whitespace before them, so that `a;b` kernel
        // rows survive.
        _ => match line.find(" #") {
            Some(k) => &line[..k],
            None => line,
        },
    }
}

fn lex(text: &str) -> Result<Document> {
    let mut entries = HashMap::new();
    let mut section: Option<&'static str> = None;
    let mut seen_sections: Vec<&str> = Vec::new();
    let mut last_line = 0;
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        last_line = line;
        let content = strip_comment(raw).trim();
        if content.is_empty() {
            continue;
        }
        let err = |message: String| Error::Parse { line, message };
        if let Some(rest) = content.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| err(format!("malformed section header '{content}'")))?
                .trim();
            let known = SECTIONS
                .iter()
                .find(|(s, _)| *s == name)
                .ok_or_else(|| err(format!("unknown section [{name}]")))?;
            if seen_sections.contains(&known.0) {
                return Err(err(format!("duplicate section [{name}]")));
            }
            seen_sections.push(known.0);
            section = Some(known.0);
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| err(format!("expected 'key = value', got '{content}'")))?;
        let (key, value) = (key.trim(), value.trim());
        let section = section.ok_or_else(|| err(format!("key '{key}' outside any section")))?;
        let allowed = SECTIONS.iter().find(|(s, _)| *s == section).map(|(_, k)| *k).unwrap_or(&[]);
        if !allowed.contains(&key) {
            return Err(err(format!("unknown key '{key}' in [{section}]")));
        }
        if value.is_empty() {
            return Err(err(format!("empty value for '{key}'")));
        }
        let slot = (section.to_string(), key.to_string());
        if entries.contains_key(&slot) {
            return Err(err(format!("duplicate key '{key}' in [{section}]")));
        }
        entries.insert(
            slot,
            Entry {
                value: value.to_string(),
                line,
            },
        );
    }
    Ok(Document {
        entries,
        last_line: last_line.max(1),
    })
}

impl Document {
    fn get(&self, section: &str, key: &str) -> Option<&Entry> {
        self.entries.get(&(section.to_string(), key.to_string()))
    }

    fn required(&self, section: &str, key: &str) -> Result<&Entry> {
        self.get(section, key).ok_or_else(|| Error::Parse {
            line: self.last_line,
            message: format!("missing key '{key}' in [{section}]"),
        })
    }

    fn parse_with<T>(&self, section: &str, key: &str, f: impl Fn(&str) -> Option<T>, what: &str) -> Result<Option<T>> {
        match self.get(section, key) {
            None => Ok(None),
            Some(e) => f(&e.value).map(Some).ok_or_else(|| Error::Parse {
                line: e.line,
                message: format!("'{key}' must be {what}, got '{}'", e.value),
            }),
        }
    }

    fn parse_required<T>(&self, section: &str, key: &str, f: impl Fn(&str) -> Option<T>, what: &str) -> Result<T> {
        self.required(section, key)?;
        Ok(self.parse_with(section, key, f, what)?.expect("present"))
    }

    fn number(&self, section: &str, key: &str) -> Result<Option<f64>> {
        self.parse_with(section, key, parse_f64, "a number")
    }

    fn count(&self, section: &str, key: &str) -> Result<Option<u64>> {
        self.parse_with(section, key, |s| s.parse::<u64>().ok(), "a non-negative integer")
    }

    fn req_number(&self, section: &str, key: &str) -> Result<f64> {
        self.required(section, key)?;
        Ok(self.number(section, key)?.expect("present"))
    }

    fn req_count(&self, section: &str, key: &str) -> Result<u64> {
        self.required(section, key)?;
        Ok(self.count(section, key)?.expect("present"))
    }
}

fn parse_f64(s: &str) -> Option<f64> {
    s.parse::<f64>().ok().filter(|x| x.is_finite())
}

fn parse_list(s: &str) -> Option<Vec<f64>> {
    s.split(',').map(|x| parse_f64(x.trim())).collect()
}

fn parse_gain(s: &str) -> Option<GainSpec> {
    let mut words = s.split_whitespace();
    let kind = words.next()?;
    let args: Vec<f64> = words.map(parse_f64).collect::<Option<_>>()?;
    match (kind, args.as_slice()) {
        ("constant", [a]) => Some(GainSpec::Constant(*a)),
        ("linear", [c]) => Some(GainSpec::Linear(*c)),
        ("tanh", [c, gamma, xi]) => Some(GainSpec::tanh(*c, *gamma, *xi)),
        _ => None,
    }
}

fn parse_basis_function(s: &str) -> Option<BasisFunction> {
    match s {
        "constant" | "1" => Some(BasisFunction::Constant),
        "cos" => Some(BasisFunction::Cosine),
        "sin" => Some(BasisFunction::Sine),
        _ => None,
    }
}

/// `M` values → diagonal, `M` rows of `M` values → full matrix (row-major).
fn parse_kernel_block(s: &str, m: usize) -> Option<Vec<f64>> {
    if s.contains(';') {
        let rows: Vec<Vec<f64>> = s.split(';').map(parse_list).collect::<Option<_>>()?;
        (rows.len() == m && rows.iter().all(|r| r.len() == m)).then(|| rows.concat())
    } else {
        let diag = parse_list(s)?;
        (diag.len() == m).then(|| {
            let mut full = vec![0.0; m * m];
            for (a, d) in diag.iter().enumerate() {
                full[a * m + a] = *d;
            }
            full
        })
    }
}

fn pair_key(prefix: &str, alpha: Population, beta: Population) -> String {
    format!("{prefix}_{}{}", alpha.label(), beta.label())
}

fn validation<T>(message: impl Into<String>) -> Result<T> {
    Err(Error::Validation(message.into()))
}

/// Parses and validates a scenario file.
pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let doc = lex(text)?;

    let name = doc.required("scenario", "name")?.value.clone();
    let mode = doc.parse_required("scenario", "mode", Mode::parse, "limit, particle or compare")?;

    let domain = doc.parse_required("model", "domain",
            |s| match s {
                "point" => Some(Domain::Point),
                "ring" => Some(Domain::Ring),
                _ => None,
            },
            "point or ring",
        )?;
    let functions = doc.parse_required("model", "basis",
            |s| s.split(',').map(|f| parse_basis_function(f.trim())).collect::<Option<Vec<_>>>(),
            "a list of constant, cos, sin",
        )?;
    let basis = SpatialBasis::new(domain, functions).map_err(|e| Error::Parse {
        line: doc.get("model", "basis").map_or(0, |e| e.line),
        message: e.to_string(),
    })?;
    let m = basis.len();

    let mut blocks: [[Vec<f64>; 2]; 2] = Default::default();
    let mut gains = GainTable::zero();
    for alpha in Population::ALL {
        for beta in Population::ALL {
            let key = pair_key("kernel", alpha, beta);
            blocks[alpha.index()][beta.index()] = doc.parse_required(
                "model",
                &key,
                |s| parse_kernel_block(s, m),
                &format!("{m} diagonal values or {m} rows of {m}"),
            )?;
            let key = pair_key("gain", alpha, beta);
            gains.0[alpha.index()][beta.index()] =
                doc.parse_required("model", &key, parse_gain, "'constant A', 'linear C' or 'tanh C gamma xi'")?;
        }
    }
    let kernel = ConnectivityKernel::new(m, blocks)?;
    let tau = [doc.req_number("model", "tau_e")?, doc.req_number("model", "tau_i")?];
    let sigma = [doc.req_number("model", "sigma_e")?, doc.req_number("model", "sigma_i")?];
    if tau.iter().any(|t| *t <= 0.0) {
        return validation("tau_e and tau_i must be positive");
    }
    let model = NetworkModel::new(basis, kernel, gains, IntrinsicDynamics::linear(tau, sigma))
        .map_err(|e| Error::Validation(e.to_string()))?;
    check_feasibility(&model)?;

    let defaults = Tolerances::default();
    let solver_defaults = SolverOptions::default();
    let run = RunSettings {
        n: doc.req_count("run", "n")? as usize,
        dt: doc.req_number("run", "dt")?,
        t_end: doc.req_number("run", "t_end")?,
        seed: doc.req_count("run", "seed")?,
        stride: doc.req_count("run", "stride")? as usize,
        quadrature_order: doc.count("run", "quadrature_order")?.map_or(crate::quadrature::DEFAULT_ORDER, |k| k as usize),
        solver: SolverOptions {
            tolerance: doc.number("run", "newton_tolerance")?.unwrap_or(solver_defaults.tolerance),
            max_iterations: doc
                .count("run", "newton_max_iterations")?
                .map_or(solver_defaults.max_iterations, |k| k as usize),
        },
        tolerances: Tolerances {
            mean_e: doc.number("run", "tolerance_mean_e")?.unwrap_or(defaults.mean_e),
            mean_i: doc.number("run", "tolerance_mean_i")?.unwrap_or(defaults.mean_i),
            variance: doc.number("run", "tolerance_variance")?.unwrap_or(defaults.variance),
            wasserstein: doc.number("run", "tolerance_wasserstein")?,
        },
        wasserstein_every: doc.count("run", "wasserstein_every")?.unwrap_or(0) as usize,
    };

    let init = InitSettings {
        k0: [doc.req_number("init", "k_e")?, doc.req_number("init", "k_i")?],
        v_guess: doc.parse_with("init", "v_guess", parse_list, "a comma-separated list of numbers")?
            .unwrap_or_else(|| vec![0.0; model.dim()]),
        particle_means: doc.parse_with("init", "particle_means",
                |s| match s {
                    "balanced" => Some(MeanSource::Balanced),
                    "guess" => Some(MeanSource::Guess),
                    _ => None,
                },
                "balanced or guess",
            )?
            .unwrap_or(MeanSource::Balanced),
    };

    let output = OutputSettings {
        dir: doc
            .get("output", "dir")
            .map_or_else(|| PathBuf::from("out").join(&name), |e| PathBuf::from(&e.value)),
        precision: doc.count("output", "precision")?.unwrap_or(17) as usize,
    };

    let config = ScenarioConfig {
        name,
        mode,
        model,
        run,
        init,
        output,
    };
    config.validate()?;
    Ok(config)
}

/// On a single point with a constant excitatory drive `A_e` and a tanh
/// inhibitory gain of amplitude `C_ei`, the inhibitory input saturates at
/// `c_ei·C_ei`; balance needs it to exceed `c_ee·A_e`.
fn check_feasibility(model: &NetworkModel) -> Result<()> {
    if model.basis.domain() != Domain::Point {
        return Ok(());
    }
    let (e, i) = (Population::Excitatory, Population::Inhibitory);
    if let (GainSpec::Constant(a), GainSpec::Tanh { amplitude, .. }) = (model.gains.get(e, e), model.gains.get(e, i)) {
        let drive = model.kernel.coeff(e, e, 0, 0) * a;
        let ceiling = model.kernel.coeff(e, i, 0, 0) * amplitude.abs();
        if !(ceiling > drive) {
            return validation(format!(
                "balance is infeasible: the excitatory drive A_e = {drive} must stay below the saturated \
                 inhibition C_ei = {ceiling} (balance requires C_ei > A_e)"
            ));
        }
    }
    Ok(())
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let r = &self.run;
        if r.n == 0 {
            return validation("n must be at least 1");
        }
        if !(r.dt > 0.0) {
            return validation(format!("dt must be positive, got {}", r.dt));
        }
        if !(r.t_end >= r.dt) {
            return validation(format!("t_end = {} must be at least dt = {}", r.t_end, r.dt));
        }
        if r.stride == 0 {
            return validation("stride must be at least 1");
        }
        if !(2..=1000).contains(&r.quadrature_order) {
            return validation("quadrature_order must lie in 2..=1000");
        }
        if !(r.solver.tolerance > 0.0) || r.solver.max_iterations == 0 {
            return validation("newton_tolerance must be positive and newton_max_iterations at least 1");
        }
        let t = &r.tolerances;
        if [t.mean_e, t.mean_i, t.variance].iter().chain(t.wasserstein.iter()).any(|x| !(*x > 0.0)) {
            return validation("comparison tolerances must be positive");
        }
        if self.init.k0.iter().any(|k| !(*k >= 0.0)) {
            return validation("initial variances k_e, k_i must be non-negative");
        }
        if self.init.v_guess.len() != self.model.dim() {
            return validation(format!(
                "v_guess needs {} values (M = {} per population), got {}",
                self.model.dim(),
                self.model.basis.len(),
                self.init.v_guess.len()
            ));
        }
        if !(1..=17).contains(&self.output.precision) {
            return validation("precision must lie in 1..=17");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    #[test]
    fn bundled_presets_parse() {
        let c = parse_config(presets::TEST1).unwrap();
        assert_eq!(c.name, "test1");
        assert_eq!(c.mode, Mode::Compare);
        assert_eq!(c.run.n, 40000);
        let (e, i) = (Population::Excitatory, Population::Inhibitory);
        assert_eq!(c.model.dynamics.gaussian_parameters(e), Some((1.0, 1.0)));
        assert_eq!(c.model.dynamics.gaussian_parameters(i), Some((1.0, 1.0)));
        assert_eq!(*c.model.gains.get(e, e), GainSpec::Constant(1.0));
        assert_eq!(*c.model.gains.get(e, i), GainSpec::Linear(1.0));
        assert_eq!(*c.model.gains.get(i, e), GainSpec::Linear(1.0));
        assert_eq!(*c.model.gains.get(i, i), GainSpec::Linear(0.5));

        for (text, built) in [
            (presets::TEST1, presets::test1_model()),
            (presets::TEST2, presets::test2_model()),
            (presets::TEST3, presets::test3_model()),
        ] {
            let c = parse_config(text).unwrap();
            assert_eq!(c.model.basis, built.basis);
            assert_eq!(c.model.kernel, built.kernel);
            assert_eq!(c.model.gains, built.gains);
            for p in Population::ALL {
                assert_eq!(
                    c.model.dynamics.gaussian_parameters(p),
                    built.dynamics.gaussian_parameters(p)
                );
            }
        }
    }

    #[test]
    fn empty_text_is_a_parse_error() {
        assert!(matches!(parse_config(""), Err(Error::Parse { .. })));
    }

    #[test]
    fn infeasible_balance_is_rejected() {
        let text = presets::TEST2.replace("gain_ee = constant 0.1", "gain_ee = constant 2.0");
        match parse_config(&text) {
            Err(Error::Validation(msg)) => assert!(msg.contains("C_ei > A_e"), "{msg}"),
            other => panic!("expected a validation error, got {other:?}"),
        }
    }

    fn line_of(text: &str, needle: &str) -> usize {
        text.lines().position(|l| l.contains(needle)).unwrap() + 1
    }

    #[test]
    fn errors_carry_line_numbers() {
        let unknown = presets::TEST1.replace("seed = 1", "seed = 1\nsede = 2");
        let line = line_of(&unknown, "sede");
        assert!(matches!(parse_config(&unknown), Err(Error::Parse { line: l, .. }) if l == line));

        let dup = presets::TEST1.replace("seed = 1", "seed = 1\nseed = 2");
        let line = line_of(&dup, "seed = 2");
        assert!(matches!(parse_config(&dup), Err(Error::Parse { line: l, .. }) if l == line));

        let bad = presets::TEST1.replace("dt = 0.001", "dt = fast");
        let line = line_of(&bad, "dt = fast");
        assert!(matches!(parse_config(&bad), Err(Error::Parse { line: l, .. }) if l == line));

        let section = presets::TEST1.replace("[output]", "[outputs]");
        assert!(matches!(parse_config(&section), Err(Error::Parse { .. })));

        let missing = presets::TEST1.replace("tau_i = 1\n", "");
        match parse_config(&missing) {
            Err(Error::Parse { message, .. }) => assert!(message.contains("tau_i")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn semantic_errors_are_validation_errors() {
        for (from, to) in [
            ("dt = 0.001", "dt = 0"),
            ("dt = 0.001", "dt = -1"),
            ("stride = 10", "stride = 0"),
            ("n = 40000", "n = 0"),
            ("precision = 17", "precision = 18"),
            ("v_guess = 0.5, 1.0", "v_guess = 0.5"),
            ("k_e = 0.5", "k_e = -0.5"),
            ("tau_e = 1", "tau_e = 0"),
        ] {
            let text = presets::TEST1.replace(from, to);
            assert!(matches!(parse_config(&text), Err(Error::Validation(_))), "{to}");
        }
    }

    #[test]
    fn full_kernel_blocks_and_defaults() {
        let text = presets::TEST3
            .replace("kernel_ee = 0.5, 2, 2", "kernel_ee = 0.5, 0, 0; 0, 2, 0.1; 0, 0, 2")
            .replace("newton_tolerance = 1e-10\n", "")
            .replace("[output]\ndir = out/test3\n", "[output]\n");
        let c = parse_config(&text).unwrap();
        let e = Population::Excitatory;
        assert_eq!(c.model.kernel.coeff(e, e, 1, 2), 0.1);
        assert_eq!(c.run.solver.tolerance, 1e-10);
        assert_eq!(c.output.dir, PathBuf::from("out/test3"));
        assert_eq!(c.init.particle_means, MeanSource::Guess);

        let wrong = presets::TEST3.replace("kernel_ee = 0.5, 2, 2", "kernel_ee = 0.5, 2");
        assert!(matches!(parse_config(&wrong), Err(Error::Parse { .. })));
    }

    #[test]
    fn comments_and_whitespace() {
        let text = presets::TEST1
            .replace("n = 40000", "  n   =   4000   # desk scale")
            .replace("[run]", "; run block\n[run]");
        assert_eq!(parse_config(&text).unwrap().run.n, 4000);
    }
}
