//! Linear probing of factorized embeddings under injected label noise.
//!
//! The labelling error `δ` is realised by corrupting exactly `round(δN)`
//! samples. The probe is fit on the corrupted labels and its error is
//! measured against the true labels, weighted by degree `w_x / Σ w`.

use ndarray::{Array1, Array2};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::bounds::{self, BoundReport, BoundScenario};
use crate::corrections;
use crate::error::{Error, Result};
use crate::factorize::{self, FactorLoss, OptimizeConfig};
use crate::graph::{GraphMode, GraphParams, SimilarityGraph};
use crate::rng::SeededRng;

pub const DEFAULT_RIDGE: f64 = 1e-6;

/// Scores within this relative distance of the maximum count as tied;
/// ties go to the lower class index.
const TIE_TOLERANCE: f64 = 1e-9;

/// Block labels of the canonical layout with `round(δN)` distinct samples
/// moved to a uniformly chosen wrong class.
pub fn corrupt_labels(truth: &[usize], classes: usize, delta: f64, seed: u64) -> Result<Vec<usize>> {
    if !(0.0..=0.5).contains(&delta) {
        return Err(Error::InvalidParams(format!(
            "0 <= delta <= 0.5 violated (delta = {delta})"
        )));
    }
    if classes < 2 {
        return Err(Error::InvalidParams("label corruption needs at least 2 classes".into()));
    }
    let mut labels = truth.to_vec();
    let count = (delta * truth.len() as f64).round() as usize;
    let mut rng = SeededRng::new(seed);
    for i in rng.sample_indices(truth.len(), count) {
        let shift = 1 + rng.below(classes - 1);
        labels[i] = (truth[i] + shift) % classes;
    }
    Ok(labels)
}

/// Corrupted labels for the difficult-example layout of `params`.
pub fn generate_labels(params: &GraphParams, delta: f64, seed: u64) -> Result<Vec<usize>> {
    let truth: Vec<usize> = (0..params.n * params.classes()).map(|i| i / params.n).collect();
    corrupt_labels(&truth, params.classes(), delta, seed)
}

/// Probe weights `B`, one row per class.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeWeights {
    pub b: Array2<f64>,
}

impl ProbeWeights {
    pub fn predict(&self, features: &Array2<f64>) -> Vec<usize> {
        let scores = features.dot(&self.b.t());
        scores
            .rows()
            .into_iter()
            .map(|row| argmax_low(row.as_slice().unwrap_or(&row.to_vec())))
            .collect()
    }
}

fn argmax_low(scores: &[f64]) -> usize {
    let best = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let slack = TIE_TOLERANCE * best.abs().max(f64::MIN_POSITIVE);
    scores.iter().position(|&s| s >= best - slack).unwrap_or(0)
}

/// Ridge least squares of one-hot labels on the feature rows:
/// `B = Yᵀ X (Xᵀ X + ridge I)⁻¹`.
pub fn fit_linear_probe(features: &Array2<f64>, labels: &[usize], classes: usize, ridge: f64) -> Result<ProbeWeights> {
    if !(ridge >= 0.0) {
        return Err(Error::InvalidParams(format!("ridge >= 0 violated (ridge = {ridge})")));
    }
    let (n, k) = features.dim();
    if labels.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} labels for {n} rows",
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::InvalidParams(format!("label {bad} outside 0..{classes}")));
    }
    let mut gram = features.t().dot(features);
    for i in 0..k {
        gram[[i, i]] += ridge;
    }
    let mut rhs = Array2::<f64>::zeros((k, classes));
    for (row, &label) in features.rows().into_iter().zip(labels) {
        for j in 0..k {
            rhs[[j, label]] += row[j];
        }
    }
    let solution = cholesky_solve(&gram, &rhs)?;
    Ok(ProbeWeights {
        b: solution.t().to_owned(),
    })
}

/// Solve `A X = B` for symmetric positive-definite `A`.
fn cholesky_solve(a: &Array2<f64>, b: &Array2<f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    let scale = (0..n).map(|i| a[[i, i]].abs()).fold(0.0, f64::max);
    let mut l = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let mut d = a[[j, j]];
        for p in 0..j {
            d -= l[[j, p]] * l[[j, p]];
        }
        if !(d > 1e-13 * scale) {
            return Err(Error::Singular);
        }
        let d = d.sqrt();
        l[[j, j]] = d;
        for i in (j + 1)..n {
            let mut s = a[[i, j]];
            for p in 0..j {
                s -= l[[i, p]] * l[[j, p]];
            }
            l[[i, j]] = s / d;
        }
    }
    let mut x = b.clone();
    for mut col in x.columns_mut() {
        for i in 0..n {
            let mut s = col[i];
            for p in 0..i {
                s -= l[[i, p]] * col[p];
            }
            col[i] = s / l[[i, i]];
        }
        for i in (0..n).rev() {
            let mut s = col[i];
            for p in (i + 1)..n {
                s -= l[[p, i]] * col[p];
            }
            col[i] = s / l[[i, i]];
        }
    }
    Ok(x)
}

/// Degree-weighted misclassification rate against `true_labels`.
pub fn probe_error(
    features: &Array2<f64>,
    probe: &ProbeWeights,
    true_labels: &[usize],
    degrees: &Array1<f64>,
) -> Result<f64> {
    if true_labels.len() != features.nrows() || degrees.len() != features.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "{} rows, {} labels, {} degrees",
            features.nrows(),
            true_labels.len(),
            degrees.len()
        )));
    }
    let predicted = probe.predict(features);
    let total: f64 = degrees.sum();
    let wrong: f64 = predicted
        .iter()
        .zip(true_labels)
        .zip(degrees)
        .filter(|((p, t), _)| p != t)
        .map(|(_, w)| w)
        .sum();
    Ok(wrong / total)
}

#[derive(Debug, Clone)]
pub struct ProbeResult {
    pub probe_weights: ProbeWeights,
    pub weighted_error: f64,
    pub delta_used: f64,
    pub bound_checked: BoundReport,
}

impl ProbeResult {
    pub fn within_bound(&self) -> bool {
        self.weighted_error <= self.bound_checked.bound_value
    }
}

/// One scenario's optimized embedding, ready to be probed under any number
/// of label corruptions.
#[derive(Debug, Clone)]
pub struct ProbeSetup {
    pub scenario: BoundScenario,
    pub params: GraphParams,
    pub k: usize,
    pub classes: usize,
    pub truth: Vec<usize>,
    pub degrees: Array1<f64>,
    /// `f(x) = u_x / √w_x` from the optimized factor.
    pub features: Array2<f64>,
    pub final_loss: f64,
}

impl ProbeSetup {
    /// Build the scenario's factorization target, optimize it and keep the
    /// resulting features. The with-difficult bound needs `k` in its range.
    pub fn new(params: &GraphParams, scenario: BoundScenario, config: &OptimizeConfig) -> Result<Self> {
        params.validate()?;
        let graph_mode = match scenario {
            BoundScenario::WithoutDifficult => GraphMode::WithoutDifficult,
            BoundScenario::Removed => GraphMode::Removed,
            _ => GraphMode::WithDifficult,
        };
        let ng = SimilarityGraph::build(params, graph_mode)?.normalize();
        let (target, loss) = match scenario {
            BoundScenario::WithoutDifficult | BoundScenario::WithDifficult | BoundScenario::Removed => {
                (ng.a_bar.clone(), FactorLoss::Frobenius)
            }
            BoundScenario::MarginTuned => (corrections::margin_corrected(params)?, FactorLoss::Frobenius),
            BoundScenario::TemperatureScaled => {
                let t = corrections::temperature_matrix(params)?;
                (
                    t.apply(&ng.a_bar),
                    FactorLoss::Weighted(factorize::temperature_weights(&t.entries)),
                )
            }
        };
        let optimized = factorize::optimize(config, &loss, &target)?;
        let features = factorize::features(&optimized.f, &ng.degrees)?;
        Ok(Self {
            scenario,
            params: *params,
            k: config.k,
            classes: params.classes(),
            truth: ng.graph.class_of.clone(),
            degrees: ng.degrees,
            features,
            final_loss: optimized.final_loss(),
        })
    }

    pub fn bound(&self, delta: f64) -> Result<BoundReport> {
        let mut report = match self.scenario {
            BoundScenario::WithoutDifficult => bounds::bound_without(&self.params, delta),
            BoundScenario::WithDifficult => bounds::bound_with(&self.params, delta, self.k),
            BoundScenario::Removed => bounds::bound_removed(&self.params, delta),
            BoundScenario::MarginTuned => bounds::bound_margin(&self.params, delta),
            BoundScenario::TemperatureScaled => bounds::bound_temperature(&self.params, delta),
        }?;
        report.k = Some(self.k);
        Ok(report)
    }

    /// Corrupt labels with `seed`, fit on them, score against the truth.
    pub fn run(&self, delta: f64, seed: u64, ridge: f64) -> Result<ProbeResult> {
        let noisy = corrupt_labels(&self.truth, self.classes, delta, seed)?;
        let probe = fit_linear_probe(&self.features, &noisy, self.classes, ridge)?;
        let weighted_error = probe_error(&self.features, &probe, &self.truth, &self.degrees)?;
        Ok(ProbeResult {
            probe_weights: probe,
            weighted_error,
            delta_used: delta,
            bound_checked: self.bound(delta)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WelchResult {
    pub t: f64,
    pub dof: f64,
    pub p_two_sided: f64,
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Welch's unequal-variance t-test with Welch–Satterthwaite degrees of
/// freedom and a two-sided p-value.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<WelchResult> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::Degenerate("each sample needs at least 2 values".into()));
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    if va == 0.0 && vb == 0.0 {
        return Err(Error::Degenerate("both samples have zero variance".into()));
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (sa, sb) = (va / na, vb / nb);
    let t = (ma - mb) / (sa + sb).sqrt();
    let dof = (sa + sb).powi(2) / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, dof).map_err(|e| Error::Degenerate(e.to_string()))?;
    let p_two_sided = (2.0 * dist.sf(t.abs())).min(1.0);
    Ok(WelchResult { t, dof, p_two_sided })
}
