//! Margin matrix `M` and temperature matrix `T` that undo the effect of the
//! difficult samples on the normalized graph:
//!
//! ```text
//! Ā − D^{1/2} M D^{1/2} = T ⊙ Ā = Ā_target
//! Ā_target[x, x'] = (1, α, β)[diagonal, same class, different class] / c2
//! ```
//!
//! `Ā_target` is the normalized graph without difficult examples.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::graph::{DegreeConstants, GraphMode, GraphParams, NormalizedGraph, SimilarityGraph};

#[derive(Debug, Clone)]
pub struct MarginMatrix {
    pub entries: Array2<f64>,
    pub params: GraphParams,
}

impl MarginMatrix {
    /// `M̄ = D^{1/2} M D^{1/2}`.
    pub fn normalized(&self, degrees: &Array1<f64>) -> Array2<f64> {
        let s = degrees.mapv(f64::sqrt);
        Array2::from_shape_fn(self.entries.dim(), |(i, j)| s[i] * self.entries[[i, j]] * s[j])
    }
}

#[derive(Debug, Clone)]
pub struct TemperatureMatrix {
    pub entries: Array2<f64>,
    pub params: GraphParams,
}

impl TemperatureMatrix {
    /// `T ⊙ Ā`.
    pub fn apply(&self, a_bar: &Array2<f64>) -> Array2<f64> {
        &self.entries * a_bar
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PairKind {
    Diagonal,
    SameClass,
    HardHard,
    Mixed,
    Easy,
}

/// Case order: diagonal, same class, difficult-difficult, mixed, easy.
/// Within-class cases are further split by difficulty by the callers.
fn pair_kind(graph: &SimilarityGraph, i: usize, j: usize) -> PairKind {
    if i == j {
        PairKind::Diagonal
    } else if graph.class_of[i] == graph.class_of[j] {
        PairKind::SameClass
    } else if graph.is_difficult[i] && graph.is_difficult[j] {
        PairKind::HardHard
    } else if graph.is_difficult[i] || graph.is_difficult[j] {
        PairKind::Mixed
    } else {
        PairKind::Easy
    }
}

fn difficult_graph(params: &GraphParams) -> Result<NormalizedGraph> {
    Ok(SimilarityGraph::build(params, GraphMode::WithDifficult)?.normalize())
}

pub fn margin_matrix(params: &GraphParams) -> Result<MarginMatrix> {
    margin_matrix_from(params, &params.degree_constants())
}

/// Margin matrix from explicitly supplied degree constants. Only the true
/// constants restore the target; others are useful as a negative control.
pub fn margin_matrix_from(params: &GraphParams, dc: &DegreeConstants) -> Result<MarginMatrix> {
    let graph = SimilarityGraph::build(params, GraphMode::WithDifficult)?;
    let GraphParams {
        r,
        n_d,
        alpha,
        beta,
        gamma,
        ..
    } = *params;
    let DegreeConstants { c0, c1, c2 } = *dc;
    let gap = gamma - beta;
    let hard_diag = -(n_d as f64) * r as f64 * gap / (c1 * c1 * c2);
    let root = (c1 / c2).sqrt() - 1.0;

    let hard = &graph.is_difficult;
    let entries = Array2::from_shape_fn((graph.len(), graph.len()), |(i, j)| {
        let both = hard[i] && hard[j];
        let one = hard[i] != hard[j];
        match pair_kind(&graph, i, j) {
            PairKind::Diagonal if hard[i] => hard_diag,
            PairKind::SameClass if both => alpha * hard_diag,
            PairKind::SameClass if one => -alpha * root / (c1 * c2),
            PairKind::HardHard => c0 * gap / (c1 * c1 * c2),
            PairKind::Mixed => -beta * root / (c1 * c2),
            _ => 0.0,
        }
    });
    Ok(MarginMatrix {
        entries,
        params: *params,
    })
}

pub fn temperature_matrix(params: &GraphParams) -> Result<TemperatureMatrix> {
    if params.beta <= 0.0 {
        return Err(Error::DivisionByZero(
            "temperature matrix needs beta > 0: the difficult pair temperature (c1/c2)(beta/gamma) would vanish".into(),
        ));
    }
    let graph = SimilarityGraph::build(params, GraphMode::WithDifficult)?;
    let DegreeConstants { c1, c2, .. } = params.degree_constants();
    let ratio = c1 / c2;
    let hard = &graph.is_difficult;
    let entries = Array2::from_shape_fn((graph.len(), graph.len()), |(i, j)| {
        let both = hard[i] && hard[j];
        let one = hard[i] != hard[j];
        match pair_kind(&graph, i, j) {
            PairKind::Diagonal | PairKind::SameClass if both => ratio,
            PairKind::Diagonal | PairKind::SameClass | PairKind::Mixed if one => ratio.sqrt(),
            PairKind::HardHard => ratio * params.beta / params.gamma,
            _ => 1.0,
        }
    });
    Ok(TemperatureMatrix {
        entries,
        params: *params,
    })
}

/// The no-difficult normalized graph laid out on the difficult-graph
/// samples: `1/c2`, `α/c2`, `β/c2` on the diagonal, within and across classes.
pub fn target_matrix(params: &GraphParams) -> Result<Array2<f64>> {
    let graph = SimilarityGraph::build(params, GraphMode::WithDifficult)?;
    let c2 = params.degree_constants().c2;
    Ok(Array2::from_shape_fn((graph.len(), graph.len()), |(i, j)| {
        if i == j {
            1.0 / c2
        } else if graph.class_of[i] == graph.class_of[j] {
            params.alpha / c2
        } else {
            params.beta / c2
        }
    }))
}

fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// `Ā − M̄` for the difficult graph.
pub fn margin_corrected(params: &GraphParams) -> Result<Array2<f64>> {
    let ng = difficult_graph(params)?;
    let m = margin_matrix(params)?;
    Ok(&ng.a_bar - &m.normalized(&ng.degrees))
}

/// `T ⊙ Ā` for the difficult graph.
pub fn temperature_corrected(params: &GraphParams) -> Result<Array2<f64>> {
    let ng = difficult_graph(params)?;
    Ok(temperature_matrix(params)?.apply(&ng.a_bar))
}

/// `max |(Ā − M̄) − Ā_target|`.
pub fn verify_margin_correction(params: &GraphParams) -> Result<f64> {
    Ok(max_abs_diff(&margin_corrected(params)?, &target_matrix(params)?))
}

/// `max |T ⊙ Ā − Ā_target|`.
pub fn verify_temperature_correction(params: &GraphParams) -> Result<f64> {
    Ok(max_abs_diff(&temperature_corrected(params)?, &target_matrix(params)?))
}
