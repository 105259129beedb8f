//! Population spectral losses and their matrix-factorization forms.
//!
//! For an embedding matrix `F` with rows `u_x = √w_x f(x)` and `G = F Fᵀ`:
//!
//! ```text
//! spectral      −2 Σ w_xx' f·f' + Σ w_x w_x' (f·f')²          = ‖Ā − G‖² − ‖Ā‖²
//! margin        −2 Σ w_xx' f·f' + Σ w_x w_x' (f·f' + m_xx')²  = ‖(Ā − M̄) − G‖² + const
//! temperature   −2 Σ w_xx' f·f'/τ + Σ w_x w_x' (f·f'/τ)²      = Σ τ⁻² (τĀ − G)² − ‖Ā‖²
//! ```
//!
//! The spectral forms are evaluated literally from `f`, `w` and the raw
//! adjacency, so the identities are checked rather than assumed.

use ndarray::{Array1, Array2, Zip};

use crate::error::{Error, Result};
use crate::graph::{NormalizedGraph, SimilarityGraph};
use crate::rng::SeededRng;

fn check_square_like(name: &str, m: &Array2<f64>, n: usize) -> Result<()> {
    if m.dim() != (n, n) {
        return Err(Error::DimensionMismatch(format!(
            "{name} is {}x{}, expected {n}x{n}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

fn gram(f: &Array2<f64>) -> Array2<f64> {
    f.dot(&f.t())
}

/// `f(x) = u_x / √w_x`.
pub fn features(f: &Array2<f64>, degrees: &Array1<f64>) -> Result<Array2<f64>> {
    if f.nrows() != degrees.len() {
        return Err(Error::DimensionMismatch(format!(
            "embedding has {} rows for {} samples",
            f.nrows(),
            degrees.len()
        )));
    }
    let mut out = f.clone();
    for (mut row, &w) in out.rows_mut().into_iter().zip(degrees) {
        row /= w.sqrt();
    }
    Ok(out)
}

/// `‖target − F Fᵀ‖²_F`.
pub fn mf_loss(f: &Array2<f64>, target: &Array2<f64>) -> Result<f64> {
    check_square_like("target", target, f.nrows())?;
    let g = gram(f);
    Ok(Zip::from(target).and(&g).fold(0.0, |acc, t, g| acc + (t - g).powi(2)))
}

/// `Σ W ⊙ (target − F Fᵀ)²`.
pub fn weighted_mf_loss(f: &Array2<f64>, target: &Array2<f64>, weights: &Array2<f64>) -> Result<f64> {
    check_square_like("target", target, f.nrows())?;
    check_square_like("weights", weights, f.nrows())?;
    let g = gram(f);
    Ok(Zip::from(target)
        .and(&g)
        .and(weights)
        .fold(0.0, |acc, t, g, w| acc + w * (t - g).powi(2)))
}

/// Spectral loss over the graph with per-pair margin `m` and temperature
/// `τ`; `None` means `m = 0` and `τ = 1`.
fn general_spectral_loss(
    f: &Array2<f64>,
    graph: &NormalizedGraph,
    margin: Option<&Array2<f64>>,
    temperature: Option<&Array2<f64>>,
) -> Result<f64> {
    let n = graph.len();
    if let Some(m) = margin {
        check_square_like("margin", m, n)?;
    }
    if let Some(t) = temperature {
        check_square_like("temperature", t, n)?;
    }
    let feats = features(f, &graph.degrees)?;
    let inner = gram(&feats);
    let a = &graph.graph.adjacency;
    let w = &graph.degrees;
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            let tau = temperature.map_or(1.0, |t| t[[i, j]]);
            let m = margin.map_or(0.0, |m| m[[i, j]]);
            let s = inner[[i, j]] / tau;
            total += -2.0 * a[[i, j]] * s + w[i] * w[j] * (s + m).powi(2);
        }
    }
    Ok(total)
}

pub fn spectral_loss(f: &Array2<f64>, graph: &NormalizedGraph) -> Result<f64> {
    general_spectral_loss(f, graph, None, None)
}

/// Spectral loss with the raw (unnormalized) margin matrix `M`.
pub fn margin_spectral_loss(f: &Array2<f64>, graph: &NormalizedGraph, margin: &Array2<f64>) -> Result<f64> {
    general_spectral_loss(f, graph, Some(margin), None)
}

/// `‖(Ā − M̄) − F Fᵀ‖²_F`.
pub fn margin_mf_loss(f: &Array2<f64>, a_bar: &Array2<f64>, m_bar: &Array2<f64>) -> Result<f64> {
    check_square_like("normalized margin", m_bar, a_bar.nrows())?;
    mf_loss(f, &(a_bar - m_bar))
}

/// `spectral − mf` for the margin loss: `Σ 2 w_xx' m_xx' − w_xx'²/(w_x w_x')`.
pub fn margin_offset(graph: &NormalizedGraph, margin: &Array2<f64>) -> f64 {
    let a = &graph.graph.adjacency;
    let w = &graph.degrees;
    let n = graph.len();
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            total += 2.0 * a[[i, j]] * margin[[i, j]] - a[[i, j]].powi(2) / (w[i] * w[j]);
        }
    }
    total
}

fn check_positive(t: &Array2<f64>) -> Result<()> {
    match t.iter().find(|&&x| !(x > 0.0)) {
        Some(bad) => Err(Error::InvalidParams(format!(
            "temperature entries must be > 0 (found {bad})"
        ))),
        None => Ok(()),
    }
}

pub fn temperature_spectral_loss(f: &Array2<f64>, graph: &NormalizedGraph, t: &Array2<f64>) -> Result<f64> {
    check_square_like("temperature", t, graph.len())?;
    check_positive(t)?;
    general_spectral_loss(f, graph, None, Some(t))
}

/// `Σ τ⁻² ((T ⊙ Ā) − F Fᵀ)²`.
pub fn temperature_mf_loss(f: &Array2<f64>, a_bar: &Array2<f64>, t: &Array2<f64>) -> Result<f64> {
    check_square_like("temperature", t, a_bar.nrows())?;
    check_positive(t)?;
    weighted_mf_loss(f, &(t * a_bar), &temperature_weights(t))
}

/// `1/τ²`, the weights of the temperature factorization loss.
pub fn temperature_weights(t: &Array2<f64>) -> Array2<f64> {
    t.mapv(|x| 1.0 / (x * x))
}

pub fn frobenius_sq(m: &Array2<f64>) -> f64 {
    m.iter().map(|x| x * x).sum()
}

/// `φ̃ = Σ_{x,x'} w_xx'/τ_xx'² · 1[ŷ(x) ≠ ŷ(x')]` over ordered pairs, with
/// the raw adjacency weights.
pub fn phi_tilde(graph: &SimilarityGraph, t: Option<&Array2<f64>>, labels: &[usize]) -> Result<f64> {
    let n = graph.len();
    if labels.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} labels for {n} samples",
            labels.len()
        )));
    }
    if let Some(t) = t {
        check_square_like("temperature", t, n)?;
        check_positive(t)?;
    }
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            if labels[i] != labels[j] {
                let tau = t.map_or(1.0, |t| t[[i, j]]);
                total += graph.adjacency[[i, j]] / (tau * tau);
            }
        }
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq)]
pub enum FactorLoss {
    /// `‖target − F Fᵀ‖²`
    Frobenius,
    /// `Σ W ⊙ (target − F Fᵀ)²` with symmetric weights `W`.
    Weighted(Array2<f64>),
}

impl FactorLoss {
    pub fn loss(&self, f: &Array2<f64>, target: &Array2<f64>) -> Result<f64> {
        match self {
            FactorLoss::Frobenius => mf_loss(f, target),
            FactorLoss::Weighted(w) => weighted_mf_loss(f, target, w),
        }
    }
}

/// Analytic gradient in `F`: `−4 (W ⊙ (target − F Fᵀ)) F`, with `W = 1`
/// for the plain loss. Assumes symmetric `target` and `W`.
pub fn gradient(f: &Array2<f64>, loss: &FactorLoss, target: &Array2<f64>) -> Result<Array2<f64>> {
    check_square_like("target", target, f.nrows())?;
    let mut residual = target - &gram(f);
    if let FactorLoss::Weighted(w) = loss {
        check_square_like("weights", w, f.nrows())?;
        residual *= w;
    }
    Ok(residual.dot(f) * -4.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizeConfig {
    pub k: usize,
    pub steps: usize,
    pub learning_rate: f64,
    pub init_scale: f64,
    pub seed: u64,
    /// Stop once `‖∇‖_F` falls below this.
    pub tolerance: f64,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        Self {
            k: 2,
            steps: 5000,
            learning_rate: 0.05,
            init_scale: 0.1,
            seed: 0,
            tolerance: 1e-8,
        }
    }
}

impl OptimizeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidParams("k >= 1 violated".into()));
        }
        if self.steps == 0 {
            return Err(Error::InvalidParams("steps >= 1 violated".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidParams("learning_rate > 0 violated".into()));
        }
        if !(self.init_scale > 0.0) {
            return Err(Error::InvalidParams("init_scale > 0 violated".into()));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidParams("tolerance > 0 violated".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Optimized {
    pub f: Array2<f64>,
    /// Loss at the start of every step, then the final loss.
    pub trace: Vec<f64>,
    pub converged: bool,
}

impl Optimized {
    pub fn final_loss(&self) -> f64 {
        *self.trace.last().expect("trace is never empty")
    }
}

const DIVERGENCE_RUN: usize = 50;

/// Fixed-step gradient descent from a seeded uniform `±init_scale` start.
pub fn optimize(config: &OptimizeConfig, loss: &FactorLoss, target: &Array2<f64>) -> Result<Optimized> {
    config.validate()?;
    let n = target.nrows();
    check_square_like("target", target, n)?;
    let mut rng = SeededRng::new(config.seed);
    let mut f = Array2::from_shape_simple_fn((n, config.k), || {
        rng.uniform_range(-config.init_scale, config.init_scale)
    });

    let mut trace = Vec::with_capacity(config.steps + 1);
    let mut rising = 0;
    let mut converged = false;
    for step in 0..config.steps {
        let value = loss.loss(&f, target)?;
        if !value.is_finite() {
            return Err(Error::Diverged { step, loss: value });
        }
        if let Some(&prev) = trace.last() {
            rising = if value > prev { rising + 1 } else { 0 };
            if rising >= DIVERGENCE_RUN {
                return Err(Error::Diverged { step, loss: value });
            }
        }
        trace.push(value);
        let grad = gradient(&f, loss, target)?;
        if frobenius_sq(&grad).sqrt() < config.tolerance {
            converged = true;
            break;
        }
        f.scaled_add(-config.learning_rate, &grad);
    }
    trace.push(loss.loss(&f, target)?);
    Ok(Optimized { f, trace, converged })
}

/// Best achievable `‖target − F Fᵀ‖²` with `F` of width `k`: the squared
/// eigenvalues left out of the best PSD rank-`k` approximation. Negative
/// eigenvalues are always left out.
pub fn eckart_young_residual(eigenvalues: &[f64], k: usize) -> f64 {
    let mut sorted = eigenvalues.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let kept = sorted.iter().take(k).filter(|&&v| v > 0.0).count();
    let kept_sum: f64 = sorted.iter().take(kept).map(|v| v * v).sum();
    sorted.iter().map(|v| v * v).sum::<f64>() - kept_sum
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corrections;
    use crate::eigen;
    use crate::graph::{GraphMode, GraphParams};
    use approx::assert_abs_diff_eq;

    fn p0() -> GraphParams {
        GraphParams::new(4, 1, 1, 0.8, 0.1, 0.5).unwrap()
    }

    fn graph(params: &GraphParams, mode: GraphMode) -> NormalizedGraph {
        SimilarityGraph::build(params, mode).unwrap().normalize()
    }

    fn random_f(n: usize, k: usize, seed: u64) -> Array2<f64> {
        let mut rng = SeededRng::new(seed);
        Array2::from_shape_simple_fn((n, k), || rng.normal() * 0.5)
    }

    #[test]
    fn zero_embedding_loss_is_frobenius_norm() {
        let ng = graph(&p0(), GraphMode::WithoutDifficult);
        let zero = Array2::zeros((8, 2));
        let expected = 1.0 + (3.0_f64 / 3.8).powi(2) + 6.0 * (0.2_f64 / 3.8).powi(2);
        assert_abs_diff_eq!(mf_loss(&zero, &ng.a_bar).unwrap(), expected, epsilon = 1e-12);
        assert_abs_diff_eq!(expected, 1.6398892, epsilon = 1e-7);
        let eig: f64 = eigen::eigenvalues(&ng.a_bar).unwrap().iter().map(|v| v * v).sum();
        assert_abs_diff_eq!(eig, expected, epsilon = 1e-12);
    }

    #[test]
    fn spectral_identity_constant() {
        let ng = graph(&p0(), GraphMode::WithDifficult);
        let norm = frobenius_sq(&ng.a_bar);
        for seed in 0..10 {
            let f = random_f(8, 3, seed);
            let diff = mf_loss(&f, &ng.a_bar).unwrap() - spectral_loss(&f, &ng).unwrap();
            assert_abs_diff_eq!(diff, norm, epsilon = 1e-12);
        }
    }

    #[test]
    fn exact_factorization_has_zero_loss() {
        let ng = graph(&p0(), GraphMode::WithoutDifficult);
        // Ā_wo is PD here, so F = V Λ^{1/2} reproduces it exactly.
        let (vals, vecs) = eigen::eigh(&ng.a_bar).unwrap();
        let f = Array2::from_shape_fn((8, 8), |(i, j)| vecs[[i, j]] * vals[j].sqrt());
        assert!(mf_loss(&f, &ng.a_bar).unwrap() < 1e-24);
    }

    #[test]
    fn margin_offset_constant_and_matches_formula() {
        let params = p0();
        let ng = graph(&params, GraphMode::WithDifficult);
        let m = corrections::margin_matrix(&params).unwrap();
        let m_bar = m.normalized(&ng.degrees);
        let offset = margin_offset(&ng, &m.entries);
        for seed in 0..10 {
            let f = random_f(8, 2, seed);
            let diff =
                margin_spectral_loss(&f, &ng, &m.entries).unwrap() - margin_mf_loss(&f, &ng.a_bar, &m_bar).unwrap();
            assert_abs_diff_eq!(diff, offset, epsilon = 1e-12);
        }
        let zero = Array2::zeros((8, 8));
        let f = random_f(8, 2, 3);
        assert_abs_diff_eq!(
            margin_mf_loss(&f, &ng.a_bar, &zero).unwrap(),
            mf_loss(&f, &ng.a_bar).unwrap(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn temperature_offset_constant() {
        let params = p0();
        let ng = graph(&params, GraphMode::WithDifficult);
        let t = corrections::temperature_matrix(&params).unwrap().entries;
        let norm = frobenius_sq(&ng.a_bar);
        for seed in 0..10 {
            let f = random_f(8, 2, seed);
            let diff =
                temperature_spectral_loss(&f, &ng, &t).unwrap() - temperature_mf_loss(&f, &ng.a_bar, &t).unwrap();
            assert_abs_diff_eq!(diff, -norm, epsilon = 1e-12);
        }
        let ones = Array2::from_elem((8, 8), 1.0);
        let f = random_f(8, 2, 4);
        assert_abs_diff_eq!(
            temperature_mf_loss(&f, &ng.a_bar, &ones).unwrap(),
            mf_loss(&f, &ng.a_bar).unwrap(),
            epsilon = 1e-14
        );
        let mut bad = ones.clone();
        bad[[0, 1]] = 0.0;
        assert!(temperature_mf_loss(&f, &ng.a_bar, &bad).is_err());
    }

    #[test]
    fn dimension_mismatch() {
        let ng = graph(&p0(), GraphMode::WithoutDifficult);
        let f = Array2::zeros((7, 2));
        assert!(matches!(mf_loss(&f, &ng.a_bar), Err(Error::DimensionMismatch(_))));
        assert!(spectral_loss(&f, &ng).is_err());
    }

    fn fd_check(loss: &FactorLoss, target: &Array2<f64>, f: &Array2<f64>) -> f64 {
        let grad = gradient(f, loss, target).unwrap();
        let h = 1e-5;
        let mut worst = 0.0_f64;
        for i in 0..f.nrows() {
            for j in 0..f.ncols() {
                let mut plus = f.clone();
                plus[[i, j]] += h;
                let mut minus = f.clone();
                minus[[i, j]] -= h;
                let fd = (loss.loss(&plus, target).unwrap() - loss.loss(&minus, target).unwrap()) / (2.0 * h);
                let rel = (fd - grad[[i, j]]).abs() / grad[[i, j]].abs().max(1e-3);
                worst = worst.max(rel);
            }
        }
        worst
    }

    #[test]
    fn gradients_match_finite_differences() {
        let params = p0();
        let ng = graph(&params, GraphMode::WithDifficult);
        let t = corrections::temperature_matrix(&params).unwrap().entries;
        let f = random_f(8, 2, 17);
        assert!(fd_check(&FactorLoss::Frobenius, &ng.a_bar, &f) < 1e-6);
        let weighted = FactorLoss::Weighted(temperature_weights(&t));
        assert!(fd_check(&weighted, &(&t * &ng.a_bar), &f) < 1e-6);
    }

    #[test]
    fn p0_residual() {
        let ng = graph(&p0(), GraphMode::WithoutDifficult);
        let out = optimize(&OptimizeConfig::default(), &FactorLoss::Frobenius, &ng.a_bar).unwrap();
        assert!(out.converged);
        let expected = 6.0 * (0.2_f64 / 3.8).powi(2);
        assert_abs_diff_eq!(out.final_loss(), expected, epsilon = 1e-8);
        assert_abs_diff_eq!(expected, 0.0166205, epsilon = 1e-7);
        let eig = eigen::eigenvalues(&ng.a_bar).unwrap();
        assert_abs_diff_eq!(eckart_young_residual(&eig, 2), expected, epsilon = 1e-14);
    }

    #[test]
    fn full_rank_residual_vanishes() {
        let ng = graph(&p0(), GraphMode::WithoutDifficult);
        let config = OptimizeConfig {
            k: 8,
            steps: 200_000,
            learning_rate: 0.2,
            init_scale: 0.3,
            ..Default::default()
        };
        let out = optimize(&config, &FactorLoss::Frobenius, &ng.a_bar).unwrap();
        assert!(out.final_loss() < 1e-10, "{}", out.final_loss());
    }

    #[test]
    fn residual_excludes_negative_eigenvalues() {
        assert_abs_diff_eq!(eckart_young_residual(&[1.0, -0.5, 0.25], 3), 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(eckart_young_residual(&[1.0, 0.5, 0.25], 1), 0.3125, epsilon = 1e-15);
    }

    #[test]
    fn divergence_detected() {
        let ng = graph(&p0(), GraphMode::WithoutDifficult);
        let config = OptimizeConfig {
            learning_rate: 50.0,
            ..Default::default()
        };
        let err = optimize(&config, &FactorLoss::Frobenius, &ng.a_bar).unwrap_err();
        assert!(matches!(err, Error::Diverged { .. }));
        assert!(err.to_string().contains("learning_rate"));
    }

    #[test]
    fn config_validation() {
        let bad = OptimizeConfig {
            learning_rate: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = OptimizeConfig {
            steps: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn phi_tilde_ground_truth() {
        let g = SimilarityGraph::build(&p0(), GraphMode::WithoutDifficult).unwrap();
        // Brute-force double loop oracle.
        let mut oracle = 0.0;
        for i in 0..8 {
            for j in 0..8 {
                if g.class_of[i] != g.class_of[j] {
                    oracle += g.adjacency[[i, j]];
                }
            }
        }
        let phi = phi_tilde(&g, None, &g.class_of).unwrap();
        assert_abs_diff_eq!(phi, oracle, epsilon = 1e-12);
        assert_abs_diff_eq!(phi, 3.2, epsilon = 1e-12);
        assert_eq!(phi_tilde(&g, None, &[0; 8]).unwrap(), 0.0);
    }
}
