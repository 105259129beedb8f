//! Gaussian symmetric perturbations of the normalized similarity matrix.
//!
//! The perturbation added to `Ā` is `E = ε (W − diag W)` with `W` a
//! symmetric standard-normal matrix, so the diagonal is untouched. Every
//! trial checks Weyl's inequality on the realized `E`:
//! `λ_{k+1}(Ā + E) ≤ min_{i+j=k+2} λ_i(Ā) + λ_j(E)`.

use ndarray::Array2;
use rayon::prelude::*;

use crate::eigen;
use crate::error::{Error, Result};
use crate::graph::{GraphMode, GraphParams, SimilarityGraph};
use crate::rng::SeededRng;
use crate::spectrum::weyl_min;

/// Slack for rounding in the per-trial Weyl check, relative to the
/// spectral scale of the two summands.
const WEYL_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PerturbLevel {
    /// Perturb `Ā` directly.
    Normalized,
    /// Perturb `A`, then renormalize with the perturbed degrees.
    Adjacency,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbConfig {
    pub epsilon: f64,
    pub trials: usize,
    pub seed: u64,
    pub k: usize,
    pub level: PerturbLevel,
}

impl PerturbConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "epsilon >= 0 violated (epsilon = {})",
                self.epsilon
            )));
        }
        if self.trials == 0 {
            return Err(Error::InvalidParams("trials >= 1 violated".into()));
        }
        Ok(())
    }
}

fn gaussian_with(n: usize, rng: &mut SeededRng) -> Array2<f64> {
    let mut w = Array2::zeros((n, n));
    for i in 0..n {
        for j in i..n {
            let x = rng.normal();
            w[[i, j]] = x;
            w[[j, i]] = x;
        }
    }
    w
}

/// Symmetric matrix whose upper triangle (diagonal included) is i.i.d.
/// standard normal, filled row by row.
pub fn sample_symmetric_gaussian(n: usize, seed: u64) -> Result<Array2<f64>> {
    if n < 2 {
        return Err(Error::InvalidParams(format!("N >= 2 violated (N = {n})")));
    }
    Ok(gaussian_with(n, &mut SeededRng::new(seed)))
}

fn off_diagonal(mut w: Array2<f64>, epsilon: f64) -> Array2<f64> {
    w.diag_mut().fill(0.0);
    w * epsilon
}

/// `Ā + ε W − ε diag(W)`.
pub fn perturb_normalized(a_bar: &Array2<f64>, epsilon: f64, seed: u64) -> Result<Array2<f64>> {
    let n = a_bar.nrows();
    eigen::check_symmetric(a_bar)?;
    if !(epsilon >= 0.0) {
        return Err(Error::InvalidParams(format!(
            "epsilon >= 0 violated (epsilon = {epsilon})"
        )));
    }
    Ok(a_bar + &off_diagonal(sample_symmetric_gaussian(n, seed)?, epsilon))
}

/// `D̃^{-1/2} (A + εW − ε diag W) D̃^{-1/2}` with `D̃` the perturbed row sums.
pub fn perturb_adjacency(graph: &SimilarityGraph, epsilon: f64, seed: u64) -> Result<Array2<f64>> {
    if !(epsilon >= 0.0) {
        return Err(Error::InvalidParams(format!(
            "epsilon >= 0 violated (epsilon = {epsilon})"
        )));
    }
    let a = &graph.adjacency + &off_diagonal(sample_symmetric_gaussian(graph.len(), seed)?, epsilon);
    renormalize(&a)
}

fn renormalize(a: &Array2<f64>) -> Result<Array2<f64>> {
    let degrees = a.sum_axis(ndarray::Axis(1));
    if let Some(i) = degrees.iter().position(|&w| !(w > 0.0)) {
        return Err(Error::Degenerate(format!(
            "perturbed degree of row {i} is {} (epsilon too large)",
            degrees[i]
        )));
    }
    let s = degrees.mapv(|w| 1.0 / w.sqrt());
    Ok(Array2::from_shape_fn(a.dim(), |(i, j)| a[[i, j]] * s[i] * s[j]))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub trial: usize,
    pub lambda_k1: f64,
    pub weyl_bound: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LambdaShiftReport {
    /// `λ_{k+1}` of the unperturbed `Ā`.
    pub baseline: f64,
    pub trials: Vec<TrialRecord>,
    pub mean: f64,
    pub std: f64,
    /// Largest `|λ̃_{k+1} − λ_{k+1}|` over trials.
    pub max_shift: f64,
}

impl LambdaShiftReport {
    pub fn all_hold(&self) -> bool {
        self.trials.iter().all(|t| t.holds)
    }
}

/// Perturbed `Ā` for one trial seed.
fn perturbed_matrix(
    graph: &SimilarityGraph,
    a_bar: &Array2<f64>,
    level: PerturbLevel,
    epsilon: f64,
    seed: u64,
) -> Result<Array2<f64>> {
    match level {
        PerturbLevel::Normalized => perturb_normalized(a_bar, epsilon, seed),
        PerturbLevel::Adjacency => perturb_adjacency(graph, epsilon, seed),
    }
}

/// Monte Carlo distribution of `λ̃_{k+1}` over `trials` independent
/// perturbations, trial `t` seeded from `(seed, t)`.
pub fn mc_lambda_shift(params: &GraphParams, mode: GraphMode, config: &PerturbConfig) -> Result<LambdaShiftReport> {
    config.validate()?;
    let graph = SimilarityGraph::build(params, mode)?;
    let size = graph.len();
    if config.k + 1 > size {
        return Err(Error::OutOfRange {
            k: config.k,
            range: format!("k + 1 <= N = {size}"),
        });
    }
    let a_bar = graph.normalize().a_bar;
    let base = eigen::eigenvalues(&a_bar)?;
    let base_scale = base.iter().fold(0.0_f64, |m, x| m.max(x.abs()));

    let trials: Vec<TrialRecord> = (0..config.trials)
        .into_par_iter()
        .map(|trial| {
            let seed = trial_seed(config.seed, trial);
            let perturbed = perturbed_matrix(&graph, &a_bar, config.level, config.epsilon, seed)?;
            let realized = &perturbed - &a_bar;
            let values = eigen::eigenvalues(&perturbed)?;
            let e_values = eigen::eigenvalues(&realized)?;
            let bound = weyl_min(&base, &e_values, config.k)?;
            let scale = base_scale + e_values.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
            let lambda_k1 = values[config.k];
            Ok(TrialRecord {
                trial,
                lambda_k1,
                weyl_bound: bound,
                holds: lambda_k1 <= bound + WEYL_SLACK * scale.max(1.0),
            })
        })
        .collect::<Result<_>>()?;

    let count = trials.len() as f64;
    let mean = trials.iter().map(|t| t.lambda_k1).sum::<f64>() / count;
    let var = if trials.len() > 1 {
        trials.iter().map(|t| (t.lambda_k1 - mean).powi(2)).sum::<f64>() / (count - 1.0)
    } else {
        0.0
    };
    let baseline = base[config.k];
    let max_shift = trials
        .iter()
        .map(|t| (t.lambda_k1 - baseline).abs())
        .fold(0.0, f64::max);
    Ok(LambdaShiftReport {
        baseline,
        trials,
        mean,
        std: var.sqrt(),
        max_shift,
    })
}

/// Per-trial seed; shared by every routine so paired comparisons reuse the
/// same noise stream.
pub fn trial_seed(seed: u64, trial: usize) -> u64 {
    seed.wrapping_add(trial as u64)
}

/// Fraction of trials in which `λ̃_{k+1}` of the difficult-example graph
/// exceeds that of the no-difficult graph, each perturbed with the same
/// trial seed.
pub fn ordering_fraction(params: &GraphParams, config: &PerturbConfig) -> Result<f64> {
    let with = mc_lambda_shift(params, GraphMode::WithDifficult, config)?;
    let without = mc_lambda_shift(params, GraphMode::WithoutDifficult, config)?;
    let wins = with
        .trials
        .iter()
        .zip(&without.trials)
        .filter(|(a, b)| a.lambda_k1 > b.lambda_k1)
        .count();
    Ok(wins as f64 / config.trials as f64)
}

/// Semicircle CDF on `[-2, 2]`.
pub fn semicircle_cdf(x: f64) -> f64 {
    if x <= -2.0 {
        0.0
    } else if x >= 2.0 {
        1.0
    } else {
        0.5 + x * (4.0 - x * x).sqrt() / (4.0 * std::f64::consts::PI) + (x / 2.0).asin() / std::f64::consts::PI
    }
}

pub fn semicircle_density(x: f64) -> f64 {
    if x.abs() >= 2.0 {
        0.0
    } else {
        (4.0 - x * x).sqrt() / (2.0 * std::f64::consts::PI)
    }
}

/// Kolmogorov–Smirnov distance of a sample to a continuous CDF.
pub fn ks_distance(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub density: f64,
    pub semicircle: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralLaw {
    pub eigenvalues: Vec<f64>,
    pub ks_distance: f64,
    /// Bins over `[-2.5, 2.5]`.
    pub histogram: Vec<HistogramBin>,
}

impl SpectralLaw {
    pub fn fraction_within(&self, radius: f64) -> f64 {
        self.eigenvalues.iter().filter(|x| x.abs() <= radius).count() as f64 / self.eigenvalues.len() as f64
    }

    /// Empirical mass on `(0, ∞)` and `(−∞, 0)`.
    pub fn side_masses(&self) -> (f64, f64) {
        let n = self.eigenvalues.len() as f64;
        let pos = self.eigenvalues.iter().filter(|&&x| x > 0.0).count() as f64;
        let neg = self.eigenvalues.iter().filter(|&&x| x < 0.0).count() as f64;
        (pos / n, neg / n)
    }
}

/// Eigenvalues of `W/√N` pooled over `trials` draws, compared with the
/// semicircle law.
pub fn empirical_spectral_law(n: usize, trials: usize, bins: usize, seed: u64) -> Result<SpectralLaw> {
    if n < 64 {
        return Err(Error::InvalidParams(format!("N >= 64 violated (N = {n})")));
    }
    if trials == 0 || bins == 0 {
        return Err(Error::InvalidParams("trials >= 1 and bins >= 1 required".into()));
    }
    let scale = 1.0 / (n as f64).sqrt();
    let per_trial: Vec<Vec<f64>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let w = sample_symmetric_gaussian(n, trial_seed(seed, t))? * scale;
            eigen::eigenvalues(&w)
        })
        .collect::<Result<_>>()?;
    let eigenvalues: Vec<f64> = per_trial.into_iter().flatten().collect();
    let ks = ks_distance(&eigenvalues, semicircle_cdf);

    let (lo, hi) = (-2.5, 2.5);
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &x in &eigenvalues {
        if (lo..hi).contains(&x) {
            counts[((x - lo) / width) as usize] += 1;
        }
    }
    let total = eigenvalues.len() as f64;
    let histogram = counts
        .iter()
        .enumerate()
        .map(|(b, &c)| {
            let a = lo + b as f64 * width;
            HistogramBin {
                lo: a,
                hi: a + width,
                density: c as f64 / (total * width),
                semicircle: (semicircle_cdf(a + width) - semicircle_cdf(a)) / width,
            }
        })
        .collect();
    Ok(SpectralLaw {
        eigenvalues,
        ks_distance: ks,
        histogram,
    })
}
