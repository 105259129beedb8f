//! Structured similarity graphs over `n (r + 1)` augmented samples.
//!
//! Samples are laid out class-major: class `c` occupies rows
//! `c n .. (c + 1) n`, and the last `n_d` samples of every class are the
//! difficult ones. Every index computation in the crate assumes this layout.
//!
//! Entry rules for the adjacency `A = (w_xx')`:
//!
//! ```text
//! w_xx' = 1   if x = x'
//!         α   if x ≠ x' and both in the same class
//!         γ   if x, x' are both difficult and in different classes
//!         β   otherwise
//! ```

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

/// `(n, r, n_d, α, β, γ)`: `n` samples per class, `r + 1` classes,
/// `n_d` difficult samples per class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphParams {
    pub n: usize,
    pub r: usize,
    pub n_d: usize,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

/// Row-sum constants of the three constructions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DegreeConstants {
    /// `(1-α) + nα + (n-n_d) r β`
    pub c0: f64,
    /// Degree of a difficult sample: `c2 + n_d r (γ-β)`.
    pub c1: f64,
    /// Degree of an easy sample: `(1-α) + nα + n r β`.
    pub c2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GraphMode {
    WithoutDifficult,
    WithDifficult,
    Removed,
}

impl GraphMode {
    pub const ALL: [GraphMode; 3] = [
        GraphMode::WithoutDifficult,
        GraphMode::WithDifficult,
        GraphMode::Removed,
    ];

    pub fn label(self) -> &'static str {
        match self {
            GraphMode::WithoutDifficult => "without",
            GraphMode::WithDifficult => "with",
            GraphMode::Removed => "removed",
        }
    }
}

impl GraphParams {
    /// Construct and validate with the strict ordering `0 ≤ β < γ < α < 1`.
    pub fn new(n: usize, r: usize, n_d: usize, alpha: f64, beta: f64, gamma: f64) -> Result<Self> {
        let params = Self {
            n,
            r,
            n_d,
            alpha,
            beta,
            gamma,
        };
        params.validate()?;
        Ok(params)
    }

    /// Strict validation: counts plus `0 ≤ β < γ < α < 1`.
    pub fn validate(&self) -> Result<()> {
        self.validate_counts()?;
        let Self { alpha, beta, gamma, .. } = *self;
        check(beta >= 0.0, || format!("0 <= beta violated (beta = {beta})"))?;
        check(beta < gamma, || {
            format!("beta < gamma violated (beta = {beta}, gamma = {gamma})")
        })?;
        check(gamma < alpha, || {
            format!("gamma < alpha violated (gamma = {gamma}, alpha = {alpha})")
        })?;
        check(alpha < 1.0, || format!("alpha < 1 violated (alpha = {alpha})"))
    }

    /// Weak ordering `0 ≤ β ≤ γ ≤ α < 1`. Used by limit checks such as
    /// `γ = β` or `α = β`, which the strict model excludes.
    pub fn validate_relaxed(&self) -> Result<()> {
        self.validate_counts()?;
        let Self { alpha, beta, gamma, .. } = *self;
        check(beta >= 0.0, || format!("0 <= beta violated (beta = {beta})"))?;
        check(beta <= gamma, || {
            format!("beta <= gamma violated (beta = {beta}, gamma = {gamma})")
        })?;
        check(gamma <= alpha, || {
            format!("gamma <= alpha violated (gamma = {gamma}, alpha = {alpha})")
        })?;
        check(alpha < 1.0, || format!("alpha < 1 violated (alpha = {alpha})"))
    }

    fn validate_counts(&self) -> Result<()> {
        check(self.n >= 1, || "n >= 1 violated".to_string())?;
        check(self.r >= 1, || "r >= 1 violated".to_string())?;
        check(self.n_d <= self.n, || {
            format!("n_d <= n violated (n_d = {}, n = {})", self.n_d, self.n)
        })?;
        let finite = [self.alpha, self.beta, self.gamma].iter().all(|v| v.is_finite());
        check(finite, || "alpha, beta, gamma must be finite".to_string())
    }

    /// `κ = n / n_d` when it is integral.
    pub fn kappa(&self) -> Option<usize> {
        (self.n_d > 0 && self.n.is_multiple_of(self.n_d)).then(|| self.n / self.n_d)
    }

    pub fn require_kappa(&self) -> Result<usize> {
        if self.n_d == 0 {
            return Err(Error::InvalidParams("n_d >= 1 required".into()));
        }
        self.kappa().ok_or_else(|| {
            Error::InvalidParams(format!(
                "n mod n_d = 0 violated (n = {}, n_d = {}): kappa = n / n_d must be integral",
                self.n, self.n_d
            ))
        })
    }

    pub fn classes(&self) -> usize {
        self.r + 1
    }

    /// Easy samples per class.
    pub fn n_easy(&self) -> usize {
        self.n - self.n_d
    }

    pub fn degree_constants(&self) -> DegreeConstants {
        degree_constants(self)
    }

    /// Degree of every sample of the `Removed` construction.
    pub fn removed_degree(&self) -> f64 {
        let r = self.r as f64;
        (1.0 - self.alpha) + self.n_easy() as f64 * (self.alpha + r * self.beta)
    }
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidParams(msg()))
    }
}

pub fn degree_constants(params: &GraphParams) -> DegreeConstants {
    let GraphParams {
        n,
        r,
        n_d,
        alpha,
        beta,
        gamma,
    } = *params;
    let (n, r, n_d) = (n as f64, r as f64, n_d as f64);
    let c2 = (1.0 - alpha) + n * alpha + n * r * beta;
    let c1 = c2 + n_d * r * (gamma - beta);
    let c0 = (1.0 - alpha) + n * alpha + (n - n_d) * r * beta;
    DegreeConstants { c0, c1, c2 }
}

/// `(α, β, γ)` triples of the reference parameter grid.
pub const GRID_TRIPLES: [(f64, f64, f64); 3] = [(0.8, 0.1, 0.5), (0.6, 0.05, 0.3), (0.9, 0.2, 0.25)];

/// Reference grid: `n ∈ {2, 4, 8, 16}`, `r ∈ {1, 2, 4}`, `n_d` ranging over
/// the divisors of `n`, and the [`GRID_TRIPLES`].
pub fn reference_grid() -> Vec<GraphParams> {
    let mut grid = Vec::new();
    for n in [2, 4, 8, 16] {
        for r in [1, 2, 4] {
            for n_d in (1..=n).filter(|d| n % d == 0) {
                for (alpha, beta, gamma) in GRID_TRIPLES {
                    grid.push(GraphParams {
                        n,
                        r,
                        n_d,
                        alpha,
                        beta,
                        gamma,
                    });
                }
            }
        }
    }
    grid
}

#[derive(Debug, Clone)]
pub struct SimilarityGraph {
    pub mode: GraphMode,
    pub params: GraphParams,
    pub adjacency: Array2<f64>,
    pub class_of: Vec<usize>,
    pub is_difficult: Vec<bool>,
}

impl SimilarityGraph {
    /// Build with strict parameter validation.
    pub fn build(params: &GraphParams, mode: GraphMode) -> Result<Self> {
        params.validate()?;
        Self::assemble(params, mode)
    }

    /// Build under the weak ordering `0 ≤ β ≤ γ ≤ α < 1`.
    pub fn build_relaxed(params: &GraphParams, mode: GraphMode) -> Result<Self> {
        params.validate_relaxed()?;
        Self::assemble(params, mode)
    }

    fn assemble(params: &GraphParams, mode: GraphMode) -> Result<Self> {
        let classes = params.classes();
        let (per_class, n_difficult) = match mode {
            GraphMode::WithoutDifficult => (params.n, 0),
            GraphMode::WithDifficult => {
                if params.n_d > 0 {
                    params.require_kappa()?;
                }
                (params.n, params.n_d)
            }
            GraphMode::Removed => {
                if params.n_d == params.n {
                    return Err(Error::Degenerate(
                        "removing n_d = n difficult samples leaves an empty dataset".into(),
                    ));
                }
                (params.n_easy(), 0)
            }
        };

        let size = per_class * classes;
        let class_of: Vec<usize> = (0..size).map(|i| i / per_class).collect();
        let is_difficult: Vec<bool> = (0..size).map(|i| i % per_class >= per_class - n_difficult).collect();

        let adjacency = Array2::from_shape_fn((size, size), |(i, j)| {
            if i == j {
                1.0
            } else if class_of[i] == class_of[j] {
                params.alpha
            } else if is_difficult[i] && is_difficult[j] {
                params.gamma
            } else {
                params.beta
            }
        });

        Ok(Self {
            mode,
            params: *params,
            adjacency,
            class_of,
            is_difficult,
        })
    }

    pub fn len(&self) -> usize {
        self.class_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.class_of.is_empty()
    }

    pub fn normalize(&self) -> NormalizedGraph {
        normalize(self)
    }
}

pub fn build_adjacency(params: &GraphParams, mode: GraphMode) -> Result<SimilarityGraph> {
    SimilarityGraph::build(params, mode)
}

/// Graph together with its degrees `w_x` and `Ā = D^{-1/2} A D^{-1/2}`.
#[derive(Debug, Clone)]
pub struct NormalizedGraph {
    pub graph: SimilarityGraph,
    pub degrees: Array1<f64>,
    pub a_bar: Array2<f64>,
}

impl NormalizedGraph {
    pub fn len(&self) -> usize {
        self.graph.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graph.is_empty()
    }

    /// `(√w_x)_x`, the eigenvector of `Ā` for eigenvalue 1.
    pub fn sqrt_degrees(&self) -> Array1<f64> {
        self.degrees.mapv(f64::sqrt)
    }
}

pub fn normalize(graph: &SimilarityGraph) -> NormalizedGraph {
    let degrees = graph.adjacency.sum_axis(ndarray::Axis(1));
    let inv_sqrt = degrees.mapv(|w| 1.0 / w.sqrt());
    let a_bar = Array2::from_shape_fn(graph.adjacency.dim(), |(i, j)| {
        graph.adjacency[[i, j]] * inv_sqrt[i] * inv_sqrt[j]
    });
    NormalizedGraph {
        graph: graph.clone(),
        degrees,
        a_bar,
    }
}
