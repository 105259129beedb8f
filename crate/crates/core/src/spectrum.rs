//! Eigenvalue groups of the structured graphs.
//!
//! The closed forms come from writing each normalized adjacency as a sum of
//! Kronecker products of `I`, `J = 11ᵀ` and rank-one degree vectors. For
//! the difficult-example graph the exact split used here is
//!
//! ```text
//! Ā₂[x, x'] = (α 1[same class] + β 1[different class]) / √(w_x w_x')
//! Ā₁ = Ā − Ā₂ = (1-α) D⁻¹ + (γ-β)/c1 · 1[x, x' difficult, different class]
//! ```
//!
//! which reconstructs `Ā` for every `n_d`. Its spectra coincide with the
//! usual enumeration when `n_d = 1` but differ for larger `n_d`, where the
//! hard block carries `J_{n_d}` rather than `I_{n_d}`.

use std::fmt;

use ndarray::Array2;

use crate::eigen;
use crate::error::{Error, Result};
use crate::graph::{GraphMode, GraphParams};

/// Eigenvalues closer than this are reported as one group.
pub const GROUP_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpectrumSource {
    ClosedForm,
    Numerical,
}

impl fmt::Display for SpectrumSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SpectrumSource::ClosedForm => "closed_form",
            SpectrumSource::Numerical => "numerical",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenGroup {
    pub value: f64,
    pub multiplicity: usize,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    /// Sorted by descending value, no two within [`GROUP_TOLERANCE`].
    pub groups: Vec<EigenGroup>,
    pub source: SpectrumSource,
}

impl Spectrum {
    /// Zero-multiplicity groups are dropped; coinciding values merge.
    pub fn from_groups(groups: Vec<EigenGroup>, source: SpectrumSource) -> Self {
        let mut groups: Vec<EigenGroup> = groups.into_iter().filter(|g| g.multiplicity > 0).collect();
        groups.sort_by(|a, b| b.value.total_cmp(&a.value));
        let mut merged: Vec<EigenGroup> = Vec::with_capacity(groups.len());
        for g in groups {
            match merged.last_mut() {
                Some(last) if (last.value - g.value).abs() <= GROUP_TOLERANCE => {
                    last.multiplicity += g.multiplicity;
                    last.label = format!("{}+{}", last.label, g.label);
                }
                _ => merged.push(g),
            }
        }
        Self { groups: merged, source }
    }

    /// Groups a raw eigenvalue list (any order).
    pub fn from_values(values: &[f64], source: SpectrumSource) -> Self {
        let mut sorted = values.to_vec();
        sorted.sort_by(|a, b| b.total_cmp(a));
        let mut groups: Vec<EigenGroup> = Vec::new();
        let mut anchor = f64::NAN;
        for v in sorted {
            match groups.last_mut() {
                Some(last) if (anchor - v).abs() <= GROUP_TOLERANCE => {
                    // Running mean keeps the reported value centred.
                    let m = last.multiplicity as f64;
                    last.value = (last.value * m + v) / (m + 1.0);
                    last.multiplicity += 1;
                }
                _ => {
                    anchor = v;
                    groups.push(EigenGroup {
                        value: v,
                        multiplicity: 1,
                        label: format!("group{}", groups.len() + 1),
                    });
                }
            }
        }
        Self { groups, source }
    }

    pub fn len(&self) -> usize {
        self.groups.iter().map(|g| g.multiplicity).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    /// Every eigenvalue repeated by multiplicity, descending.
    pub fn expanded(&self) -> Vec<f64> {
        self.groups
            .iter()
            .flat_map(|g| std::iter::repeat_n(g.value, g.multiplicity))
            .collect()
    }

    pub fn top(&self) -> Option<f64> {
        self.groups.first().map(|g| g.value)
    }

    /// `λ_i`, 1-indexed in descending order.
    pub fn nth(&self, i: usize) -> Option<f64> {
        if i == 0 {
            return None;
        }
        let mut seen = 0;
        for g in &self.groups {
            seen += g.multiplicity;
            if i <= seen {
                return Some(g.value);
            }
        }
        None
    }

    /// Largest gap between the two sorted, expanded eigenvalue lists.
    pub fn max_abs_diff(&self, other: &Spectrum) -> Result<f64> {
        let (a, b) = (self.expanded(), other.expanded());
        if a.len() != b.len() {
            return Err(Error::DimensionMismatch(format!(
                "spectra of sizes {} and {}",
                a.len(),
                b.len()
            )));
        }
        Ok(a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max))
    }
}

fn group(value: f64, multiplicity: usize, label: &str) -> EigenGroup {
    EigenGroup {
        value,
        multiplicity,
        label: label.to_string(),
    }
}

fn closed(groups: Vec<EigenGroup>) -> Spectrum {
    Spectrum::from_groups(groups, SpectrumSource::ClosedForm)
}

/// Normalized graph without difficult examples.
pub fn closed_form_without(params: &GraphParams) -> Spectrum {
    uniform_spectrum(params.n, params)
}

/// Normalized graph with the difficult examples deleted: the no-difficult
/// spectrum at `n - n_d` samples per class.
pub fn closed_form_removed(params: &GraphParams) -> Result<Spectrum> {
    if params.n_d == params.n {
        return Err(Error::Degenerate(
            "removing n_d = n difficult samples leaves an empty dataset".into(),
        ));
    }
    Ok(uniform_spectrum(params.n_easy(), params))
}

fn uniform_spectrum(n: usize, params: &GraphParams) -> Spectrum {
    let GraphParams { r, alpha, beta, .. } = *params;
    let (nf, rf) = (n as f64, r as f64);
    let c = (1.0 - alpha) + nf * alpha + nf * rf * beta;
    closed(vec![
        group(1.0, 1, "top"),
        group(((1.0 - alpha) + nf * (alpha - beta)) / c, r, "class"),
        group((1.0 - alpha) / c, n * (r + 1) - r - 1, "within"),
    ])
}

/// Full closed-form spectrum of the difficult-example graph.
///
/// Vectors summing to zero inside the easy block (or inside the hard block)
/// of a class give `(1-α)/c2` (or `(1-α)/c1`). The remaining `2(r+1)`
/// eigenvalues come from one 2x2 block per class pattern: the all-classes
/// pattern (`s = r`, once) and the `r` contrast patterns (`s = -1`):
///
/// ```text
/// [ ((1-α) + n_e(α + sβ))/c2           √(n_e n_d)(α + sβ)/√(c1 c2) ]
/// [ √(n_e n_d)(α + sβ)/√(c1 c2)        ((1-α) + n_d(α + sγ))/c1    ]
/// ```
pub fn closed_form_with(params: &GraphParams) -> Spectrum {
    let GraphParams {
        n,
        r,
        n_d,
        alpha,
        beta,
        gamma,
    } = *params;
    if n_d == 0 {
        return closed_form_without(params);
    }
    let dc = params.degree_constants();
    let (c1, c2) = (dc.c1, dc.c2);
    let n_e = n - n_d;
    let (ne, nd) = (n_e as f64, n_d as f64);

    let mut groups = vec![
        group((1.0 - alpha) / c1, (r + 1) * (n_d - 1), "hard_within"),
        group((1.0 - alpha) / c2, (r + 1) * n_e.saturating_sub(1), "easy_within"),
    ];
    for (s, mult, name) in [(r as f64, 1, "shared"), (-1.0, r, "contrast")] {
        let hard = ((1.0 - alpha) + nd * (alpha + s * gamma)) / c1;
        if n_e == 0 {
            groups.push(group(hard, mult, name));
            continue;
        }
        let easy = ((1.0 - alpha) + ne * (alpha + s * beta)) / c2;
        let off = (ne * nd).sqrt() * (alpha + s * beta) / (c1 * c2).sqrt();
        let half_tr = 0.5 * (easy + hard);
        let disc = (0.25 * (easy - hard).powi(2) + off * off).sqrt();
        groups.push(group(half_tr + disc, mult, &format!("{name}_hi")));
        groups.push(group(half_tr - disc, mult, &format!("{name}_lo")));
    }
    closed(groups)
}

pub fn closed_form(params: &GraphParams, mode: GraphMode) -> Result<Spectrum> {
    match mode {
        GraphMode::WithoutDifficult => Ok(closed_form_without(params)),
        GraphMode::WithDifficult => Ok(closed_form_with(params)),
        GraphMode::Removed => closed_form_removed(params),
    }
}

/// Spectra of the two summands `Ā = Ā₁ + Ā₂` (see the module docs).
///
/// `S = (n - n_d)/c2 + n_d/c1 = ((κ-1)/c2 + 1/c1) n_d` is the squared norm
/// of the per-class inverse square-root degree vector.
pub fn closed_form_with_components(params: &GraphParams) -> Result<(Spectrum, Spectrum)> {
    params.validate()?;
    params.require_kappa()?;
    let GraphParams {
        n,
        r,
        n_d,
        alpha,
        beta,
        gamma,
    } = *params;
    let dc = params.degree_constants();
    let (c1, c2) = (dc.c1, dc.c2);
    let (rf, nd) = (r as f64, n_d as f64);

    let a1 = closed(vec![
        group(((1.0 - alpha) + rf * nd * (gamma - beta)) / c1, 1, "hard_shared"),
        group(((1.0 - alpha) - nd * (gamma - beta)) / c1, r, "hard_contrast"),
        group((1.0 - alpha) / c1, (r + 1) * (n_d - 1), "hard_within"),
        group((1.0 - alpha) / c2, (r + 1) * (n - n_d), "easy"),
    ]);
    let s = (n - n_d) as f64 / c2 + nd / c1;
    let a2 = closed(vec![
        group((alpha + rf * beta) * s, 1, "shared"),
        group((alpha - beta) * s, r, "contrast"),
        group(0.0, (r + 1) * n - r - 1, "null"),
    ]);
    Ok((a1, a2))
}

/// Dense `(Ā₁, Ā₂)` for the difficult-example graph, in the canonical layout.
pub fn component_matrices(params: &GraphParams) -> Result<(Array2<f64>, Array2<f64>)> {
    let graph = crate::graph::SimilarityGraph::build(params, GraphMode::WithDifficult)?;
    let ng = graph.normalize();
    let w = &ng.degrees;
    let class = &ng.graph.class_of;
    let a2 = Array2::from_shape_fn(ng.a_bar.dim(), |(i, j)| {
        let sim = if class[i] == class[j] {
            params.alpha
        } else {
            params.beta
        };
        sim / (w[i] * w[j]).sqrt()
    });
    let a1 = &ng.a_bar - &a2;
    Ok((a1, a2))
}

pub fn dense_eigenvalues(matrix: &Array2<f64>) -> Result<Spectrum> {
    let values = eigen::eigenvalues(matrix)?;
    Ok(Spectrum::from_values(&values, SpectrumSource::Numerical))
}

/// `((1-α) + r(γ-β))/c1`, the Weyl-derived bound on `λ_{k+1}` of the
/// difficult-example graph, for `r + 1 ≤ k < n_d + r + 1`.
///
/// For `n_d > 1` the bound can fail at `k = r + 1`; see
/// [`enumerated_weyl_bound`] for the bound implied by the exact split.
pub fn weyl_lambda_bound(params: &GraphParams, k: usize) -> Result<f64> {
    check_k_range(params, k)?;
    let dc = params.degree_constants();
    Ok(((1.0 - params.alpha) + params.r as f64 * (params.gamma - params.beta)) / dc.c1)
}

pub(crate) fn check_k_range(params: &GraphParams, k: usize) -> Result<()> {
    let lo = params.r + 1;
    let hi = params.n_d + params.r + 1;
    if k < lo || k >= hi {
        return Err(Error::OutOfRange {
            k,
            range: format!("r+1 <= k < n_d+r+1, i.e. [{lo}, {hi})"),
        });
    }
    Ok(())
}

/// `min_{i+j=k+2} λ_i(Ā₁) + λ_j(Ā₂)` over the exact component spectra.
pub fn enumerated_weyl_bound(params: &GraphParams, k: usize) -> Result<f64> {
    let (a1, a2) = closed_form_with_components(params)?;
    weyl_min(&a1.expanded(), &a2.expanded(), k)
}

/// `min_{i+j=k+2} a_i + b_j` with 1-indexed descending lists, i.e. the
/// Weyl bound on `λ_{k+1}(A + B)`.
pub fn weyl_min(a: &[f64], b: &[f64], k: usize) -> Result<f64> {
    let target = k + 2;
    let best = (1..target)
        .filter_map(|i| {
            let j = target - i;
            Some(a.get(i - 1)? + b.get(j - 1)?)
        })
        .fold(f64::INFINITY, f64::min);
    if best.is_finite() {
        Ok(best)
    } else {
        Err(Error::OutOfRange {
            k,
            range: format!("k + 1 <= {}", a.len().min(b.len())),
        })
    }
}
