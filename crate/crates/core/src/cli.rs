//! Experiment runner behind the `hardgraph` binary.
//!
//! Configs are flat `key = value` files, one key per line, `#` starting a
//! comment. Every key the subcommand uses is parsed and validated before
//! any computation runs; unknown keys are rejected so typos surface.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::bounds;
use crate::bounds::BoundScenario;
use crate::corrections;
use crate::error::{Error, Result};
use crate::factorize::{self, FactorLoss, OptimizeConfig};
use crate::graph::{GraphMode, GraphParams, SimilarityGraph};
use crate::harness::{Experiment, LossVariant, TrainConfig};
use crate::perturb::{self, PerturbConfig, PerturbLevel};
use crate::probe::{ProbeSetup, DEFAULT_RIDGE};
use crate::spectrum;

pub const KNOWN_KEYS: &[&str] = &[
    "n",
    "r",
    "n_d",
    "alpha",
    "beta",
    "gamma",
    "delta",
    "k",
    "epsilon",
    "trials",
    "seed",
    // factorize / perturb extras
    "mode",
    "steps",
    "level",
    "law_n",
    "law_trials",
    "law_bins",
    // harness
    "batch_size",
    "tau",
    "sigma",
    "rho",
    "pos_high",
    "pos_low",
    "epochs",
    "learning_rate",
    "mix_ratio",
    "per_class",
    "dims",
    "jitter",
    "variant",
    "classes",
    "separation",
    "embed_dims",
    "eval_per_class",
];

/// Closed-form agreement demanded by the spectrum subcommand.
const SPECTRUM_TOLERANCE: f64 = 1e-10;
const CORRECTION_TOLERANCE: f64 = 1e-10;
/// Rounding slack when checking that optimization never beats the
/// Eckart–Young residual.
const RESIDUAL_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Spectrum,
    Bounds,
    Correct,
    Factorize,
    Probe,
    Train,
    Perturb,
}

impl Command {
    pub const ALL: [Command; 7] = [
        Command::Spectrum,
        Command::Bounds,
        Command::Correct,
        Command::Factorize,
        Command::Probe,
        Command::Train,
        Command::Perturb,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Command::Spectrum => "spectrum",
            Command::Bounds => "bounds",
            Command::Correct => "correct",
            Command::Factorize => "factorize",
            Command::Probe => "probe",
            Command::Train => "train",
            Command::Perturb => "perturb",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Command::ALL
            .into_iter()
            .find(|c| c.label() == s)
            .ok_or_else(|| Error::Config(format!("unknown subcommand '{s}'")))
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    entries: BTreeMap<String, String>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected 'key = value', got '{line}'", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if !KNOWN_KEYS.contains(&key) {
                return Err(Error::Config(format!("line {}: unknown key '{key}'", lineno + 1)));
            }
            if value.is_empty() {
                return Err(Error::Config(format!("line {}: key '{key}' has no value", lineno + 1)));
            }
            if entries.insert(key.to_string(), value.to_string()).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key '{key}'", lineno + 1)));
            }
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: impl fmt::Display) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|_| Error::Config(format!("key '{key}': cannot parse '{v}'")))
            })
            .transpose()
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T> {
        self.parsed(key)?
            .ok_or_else(|| Error::Config(format!("missing required key '{key}'")))
    }

    pub fn or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.parsed(key)?.unwrap_or(default))
    }

    pub fn seed(&self) -> Result<u64> {
        self.or("seed", 0)
    }

    /// Strictly validated graph parameters.
    pub fn graph_params(&self) -> Result<GraphParams> {
        GraphParams::new(
            self.require("n")?,
            self.require("r")?,
            self.require("n_d")?,
            self.require("alpha")?,
            self.require("beta")?,
            self.require("gamma")?,
        )
    }

    /// `k`, defaulting to `r + 1`, the first index the difficult-example
    /// bound covers.
    pub fn k(&self, params: &GraphParams) -> Result<usize> {
        self.or("k", params.r + 1)
    }

    pub fn delta(&self) -> Result<f64> {
        let delta: f64 = self.or("delta", 0.01)?;
        if !(0.0..=0.5).contains(&delta) {
            return Err(Error::InvalidParams(format!(
                "0 <= delta <= 0.5 violated (delta = {delta})"
            )));
        }
        Ok(delta)
    }

    pub fn mode(&self, default: GraphMode) -> Result<GraphMode> {
        match self.get("mode") {
            None => Ok(default),
            Some(v) => GraphMode::ALL.into_iter().find(|m| m.label() == v).ok_or_else(|| {
                Error::Config(format!(
                    "key 'mode': unknown graph mode '{v}' (expected without, with or removed)"
                ))
            }),
        }
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let d = TrainConfig::default();
        let config = TrainConfig {
            batch_size: self.or("batch_size", d.batch_size)?,
            tau: self.or("tau", d.tau)?,
            sigma: self.or("sigma", d.sigma)?,
            rho: self.or("rho", d.rho)?,
            pos_high: self.or("pos_high", d.pos_high)?,
            pos_low: self.or("pos_low", d.pos_low)?,
            epochs: self.or("epochs", d.epochs)?,
            learning_rate: self.or("learning_rate", d.learning_rate)?,
            seed: self.seed()?,
            embed_dims: self.or("embed_dims", d.embed_dims)?,
            jitter: self.or("jitter", d.jitter)?,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn experiment(&self) -> Result<Experiment> {
        let d = Experiment::default();
        let e = Experiment {
            classes: self.or("classes", d.classes)?,
            per_class: self.or("per_class", d.per_class)?,
            dims: self.or("dims", d.dims)?,
            separation: self.or("separation", d.separation)?,
            mix_ratio: self.or("mix_ratio", d.mix_ratio)?,
            eval_per_class: self.or("eval_per_class", d.eval_per_class)?,
        };
        // Cheap dry run of the generator's preconditions.
        crate::harness::make_dataset(e.classes, 1, e.dims, e.separation, e.mix_ratio, 0)?;
        if e.per_class == 0 || e.eval_per_class == 0 {
            return Err(Error::InvalidParams(
                "per_class >= 1 and eval_per_class >= 1 required".into(),
            ));
        }
        Ok(e)
    }

    pub fn variants(&self) -> Result<Vec<LossVariant>> {
        match self.get("variant") {
            None | Some("all") => Ok(LossVariant::ALL.to_vec()),
            Some(v) => Ok(vec![v.parse()?]),
        }
    }
}

/// `x` with 12 significant digits: fixed notation for exponents in
/// `[-5, 12)`, scientific otherwise.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.11e}", x);
    let exp: i32 = sci.rsplit('e').next().and_then(|e| e.parse().ok()).unwrap_or(0);
    if (-5..12).contains(&exp) {
        format!("{:.*}", (11 - exp) as usize, x)
    } else {
        sci
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Csv {
    pub name: &'static str,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Csv {
    fn new(name: &'static str, header: &[&'static str]) -> Self {
        Csv {
            name,
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub tables: Vec<Csv>,
    /// One message per asserted inequality that failed.
    pub failures: Vec<String>,
    pub summary: Vec<String>,
}

impl Report {
    pub fn all_hold(&self) -> bool {
        self.failures.is_empty()
    }
}

fn output_names(command: Command, config: &RunConfig) -> Vec<&'static str> {
    match command {
        Command::Spectrum => vec!["spectrum.csv"],
        Command::Bounds => vec!["bounds.csv"],
        Command::Correct => vec!["corrections.csv"],
        Command::Factorize => vec!["factorize.csv"],
        Command::Probe => vec!["probe.csv"],
        Command::Train => vec!["train.csv"],
        Command::Perturb if config.get("law_n").is_some() => vec!["perturb.csv", "spectral_law.csv"],
        Command::Perturb => vec!["perturb.csv"],
    }
}

/// Parse, validate, compute and write. Outputs are only written once the
/// whole computation succeeded.
pub fn run(
    command: Command,
    config_path: &Path,
    out_dir: &Path,
    seed: Option<u64>,
    force: bool,
) -> Result<(Report, Vec<PathBuf>)> {
    let mut config = RunConfig::load(config_path)?;
    if let Some(seed) = seed {
        config.set("seed", seed);
    }
    let targets: Vec<PathBuf> = output_names(command, &config).iter().map(|f| out_dir.join(f)).collect();
    if !force {
        if let Some(existing) = targets.iter().find(|p| p.exists()) {
            return Err(Error::Config(format!(
                "{} exists; pass --force to overwrite",
                existing.display()
            )));
        }
    }
    let report = execute(command, &config)?;
    fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    for table in &report.tables {
        let path = out_dir.join(table.name);
        fs::write(&path, table.render())?;
        written.push(path);
    }
    Ok((report, written))
}

pub fn execute(command: Command, config: &RunConfig) -> Result<Report> {
    match command {
        Command::Spectrum => run_spectrum(config),
        Command::Bounds => run_bounds(config),
        Command::Correct => run_correct(config),
        Command::Factorize => run_factorize(config),
        Command::Probe => run_probe(config),
        Command::Train => run_train(config),
        Command::Perturb => run_perturb(config),
    }
}

fn removed_applies(params: &GraphParams) -> bool {
    params.n_d < params.n
}

fn run_spectrum(config: &RunConfig) -> Result<Report> {
    let params = config.graph_params()?;
    let mut csv = Csv::new("spectrum.csv", &["mode", "eigenvalue", "multiplicity", "source"]);
    let mut failures = Vec::new();
    let mut summary = Vec::new();
    for mode in GraphMode::ALL {
        if mode == GraphMode::Removed && !removed_applies(&params) {
            continue;
        }
        let closed = spectrum::closed_form(&params, mode)?;
        let a_bar = SimilarityGraph::build(&params, mode)?.normalize().a_bar;
        let numerical = spectrum::dense_eigenvalues(&a_bar)?;
        for s in [&closed, &numerical] {
            for g in &s.groups {
                csv.push(vec![
                    mode.label().into(),
                    fmt_num(g.value),
                    g.multiplicity.to_string(),
                    s.source.to_string(),
                ]);
            }
        }
        let diff = closed.max_abs_diff(&numerical)?;
        summary.push(format!("{}: max |closed - numerical| = {diff:e}", mode.label()));
        if !(diff <= SPECTRUM_TOLERANCE) {
            failures.push(format!(
                "{} spectrum deviates by {diff:e} > {SPECTRUM_TOLERANCE:e}",
                mode.label()
            ));
        }
    }
    Ok(Report {
        tables: vec![csv],
        failures,
        summary,
    })
}

fn run_bounds(config: &RunConfig) -> Result<Report> {
    let params = config.graph_params()?;
    let delta = config.delta()?;
    let k = config.k(&params)?;
    let cmp = bounds::compare_bounds(&params, delta, k)?;
    let mut csv = Csv::new("bounds.csv", &["scenario", "delta", "k", "lambda_term", "bound"]);
    for r in &cmp.reports {
        csv.push(vec![
            r.scenario.label().into(),
            fmt_num(r.delta),
            r.k.map_or_else(String::new, |k| k.to_string()),
            fmt_num(r.lambda_term),
            fmt_num(r.bound_value),
        ]);
    }
    let mut failures = Vec::new();
    let strict = params.n_d >= 1 && params.gamma > params.beta;
    if strict && !cmp.with_exceeds_without {
        failures.push("bound_with > bound_without violated".into());
    }
    let order: Vec<&str> = cmp.order().iter().map(|s| s.label()).collect();
    Ok(Report {
        tables: vec![csv],
        failures,
        summary: vec![format!("ascending: {}", order.join(" < "))],
    })
}

fn run_correct(config: &RunConfig) -> Result<Report> {
    let params = config.graph_params()?;
    let margin = corrections::verify_margin_correction(&params)?;
    let temperature = corrections::verify_temperature_correction(&params)?;
    let mut csv = Csv::new("corrections.csv", &["check", "max_deviation"]);
    let mut failures = Vec::new();
    for (name, dev) in [("margin", margin), ("temperature", temperature)] {
        csv.push(vec![name.into(), fmt_num(dev)]);
        if !(dev <= CORRECTION_TOLERANCE) {
            failures.push(format!(
                "{name} correction deviates by {dev:e} > {CORRECTION_TOLERANCE:e}"
            ));
        }
    }
    Ok(Report {
        tables: vec![csv],
        failures,
        summary: vec![format!("margin {margin:e}, temperature {temperature:e}")],
    })
}

fn run_factorize(config: &RunConfig) -> Result<Report> {
    let params = config.graph_params()?;
    let mode = config.mode(GraphMode::WithoutDifficult)?;
    let d = OptimizeConfig::default();
    let opt = OptimizeConfig {
        k: config.or("k", d.k)?,
        steps: config.or("steps", d.steps)?,
        learning_rate: config.or("learning_rate", d.learning_rate)?,
        seed: config.seed()?,
        ..d
    };
    opt.validate()?;
    let a_bar = SimilarityGraph::build(&params, mode)?.normalize().a_bar;
    let result = factorize::optimize(&opt, &FactorLoss::Frobenius, &a_bar)?;
    let residual = factorize::eckart_young_residual(&crate::eigen::eigenvalues(&a_bar)?, opt.k);
    let mut csv = Csv::new("factorize.csv", &["step", "loss"]);
    for (step, loss) in result.trace.iter().enumerate() {
        csv.push(vec![step.to_string(), fmt_num(*loss)]);
    }
    let final_loss = result.final_loss();
    let mut failures = Vec::new();
    if final_loss < residual - RESIDUAL_SLACK {
        failures.push(format!(
            "final loss {final_loss} below the rank-{} residual {residual}",
            opt.k
        ));
    }
    Ok(Report {
        tables: vec![csv],
        failures,
        summary: vec![format!(
            "final loss {} (rank-{} residual {}), converged: {}",
            fmt_num(final_loss),
            opt.k,
            fmt_num(residual),
            result.converged
        )],
    })
}

fn run_probe(config: &RunConfig) -> Result<Report> {
    let params = config.graph_params()?;
    let delta = config.delta()?;
    let d = OptimizeConfig::default();
    let opt = OptimizeConfig {
        k: config.k(&params)?,
        steps: config.or("steps", d.steps)?,
        learning_rate: config.or("learning_rate", d.learning_rate)?,
        ..d
    };
    opt.validate()?;
    let trials: usize = config.or("trials", 20)?;
    let base_seed = config.seed()?;
    let mut scenarios = vec![BoundScenario::WithoutDifficult, BoundScenario::WithDifficult];
    if params.n_d >= 1 && removed_applies(&params) {
        scenarios.push(BoundScenario::Removed);
    }
    scenarios.push(BoundScenario::MarginTuned);
    if params.beta > 0.0 {
        scenarios.push(BoundScenario::TemperatureScaled);
    }
    let mut csv = Csv::new("probe.csv", &["seed", "scenario", "error", "bound", "within_bound"]);
    let mut failures = Vec::new();
    for scenario in scenarios {
        let setup = ProbeSetup::new(&params, scenario, &opt)?;
        for t in 0..trials {
            let seed = base_seed.wrapping_add(t as u64);
            let result = setup.run(delta, seed, DEFAULT_RIDGE)?;
            let holds = result.within_bound();
            csv.push(vec![
                seed.to_string(),
                scenario.label().into(),
                fmt_num(result.weighted_error),
                fmt_num(result.bound_checked.bound_value),
                holds.to_string(),
            ]);
            if !holds {
                failures.push(format!(
                    "{} seed {seed}: error {} exceeds bound {}",
                    scenario.label(),
                    result.weighted_error,
                    result.bound_checked.bound_value
                ));
            }
        }
    }
    let summary = vec![format!("{} runs, {} over the bound", csv.rows.len(), failures.len())];
    Ok(Report {
        tables: vec![csv],
        failures,
        summary,
    })
}

fn run_train(config: &RunConfig) -> Result<Report> {
    let train = config.train_config()?;
    let experiment = config.experiment()?;
    let variants = config.variants()?;
    let mut csv = Csv::new(
        "train.csv",
        &["epoch", "variant", "loss", "probe_accuracy", "diff_class_ratio"],
    );
    let mut summary = Vec::new();
    for variant in variants {
        let outcome = experiment.run(train.seed, &train, variant)?;
        for m in &outcome.metrics {
            csv.push(vec![
                m.epoch.to_string(),
                variant.label().into(),
                fmt_num(m.loss),
                m.probe_accuracy.map_or_else(String::new, fmt_num),
                fmt_num(m.diff_class_ratio),
            ]);
        }
        if let Some(acc) = outcome.final_accuracy() {
            summary.push(format!("{variant}: final probe accuracy {}", fmt_num(acc)));
        }
    }
    Ok(Report {
        tables: vec![csv],
        failures: Vec::new(),
        summary,
    })
}

fn run_perturb(config: &RunConfig) -> Result<Report> {
    let params = config.graph_params()?;
    let level = match config.get("level") {
        None | Some("normalized") => PerturbLevel::Normalized,
        Some("adjacency") => PerturbLevel::Adjacency,
        Some(other) => {
            return Err(Error::Config(format!(
                "key 'level': unknown level '{other}' (expected normalized or adjacency)"
            )))
        }
    };
    let pc = PerturbConfig {
        epsilon: config.or("epsilon", 1e-3)?,
        trials: config.or("trials", 100)?,
        seed: config.seed()?,
        k: config.k(&params)?,
        level,
    };
    pc.validate()?;
    let mode = config.mode(GraphMode::WithDifficult)?;
    let law = match config.get("law_n") {
        Some(_) => {
            let n: usize = config.require("law_n")?;
            if n < 64 {
                return Err(Error::InvalidParams(format!("law_n >= 64 violated (law_n = {n})")));
            }
            Some((n, config.or("law_trials", 20usize)?, config.or("law_bins", 50usize)?))
        }
        None => None,
    };

    let report = perturb::mc_lambda_shift(&params, mode, &pc)?;
    let mut csv = Csv::new("perturb.csv", &["trial", "lambda_k1", "weyl_bound", "holds"]);
    let mut failures = Vec::new();
    for t in &report.trials {
        csv.push(vec![
            t.trial.to_string(),
            fmt_num(t.lambda_k1),
            fmt_num(t.weyl_bound),
            t.holds.to_string(),
        ]);
        if !t.holds {
            failures.push(format!(
                "trial {}: lambda {} exceeds Weyl bound {}",
                t.trial, t.lambda_k1, t.weyl_bound
            ));
        }
    }
    let mut summary = vec![format!(
        "lambda_{}: unperturbed {}, mean {}, std {}",
        pc.k + 1,
        fmt_num(report.baseline),
        fmt_num(report.mean),
        fmt_num(report.std)
    )];
    let mut tables = vec![csv];
    if let Some((n, trials, bins)) = law {
        let law = perturb::empirical_spectral_law(n, trials, bins, pc.seed)?;
        let mut hist = Csv::new("spectral_law.csv", &["bin_lo", "bin_hi", "density", "semicircle"]);
        for b in &law.histogram {
            hist.push(vec![
                fmt_num(b.lo),
                fmt_num(b.hi),
                fmt_num(b.density),
                fmt_num(b.semicircle),
            ]);
        }
        summary.push(format!("semicircle KS distance {}", fmt_num(law.ks_distance)));
        tables.push(hist);
    }
    Ok(Report {
        tables,
        failures,
        summary,
    })
}
