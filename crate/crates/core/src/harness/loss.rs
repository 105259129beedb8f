//! InfoNCE variants over a batch of `2N` views where rows `2k` and `2k+1`
//! are the two views of one point.
//!
//! Each variant maps a similarity `s` and selection flag `p` to a logit:
//!
//! ```text
//! Baseline     s / τ
//! Removal      s (1-p) / τ
//! Margin       (s + pσ) / τ
//! Temperature  s / ((pρ + 1 - p) τ)
//! Combined     (s + pσ) / ((pρ + 1 - p) τ)
//! ```
//!
//! and `ℓ(i, j) = −log(exp q_ij / Σ_{k≠i} exp q_ik)`. Removal zeroes the
//! selected similarities, so each selected term still contributes `e⁰`
//! to the denominator; it does not drop the term.

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossVariant {
    Baseline,
    Removal,
    Margin,
    Temperature,
    Combined,
}

impl LossVariant {
    pub const ALL: [LossVariant; 5] = [
        LossVariant::Baseline,
        LossVariant::Removal,
        LossVariant::Margin,
        LossVariant::Temperature,
        LossVariant::Combined,
    ];

    pub fn label(self) -> &'static str {
        match self {
            LossVariant::Baseline => "baseline",
            LossVariant::Removal => "removal",
            LossVariant::Margin => "margin",
            LossVariant::Temperature => "temperature",
            LossVariant::Combined => "combined",
        }
    }
}

impl fmt::Display for LossVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for LossVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LossVariant::ALL.into_iter().find(|v| v.label() == s).ok_or_else(|| {
            Error::Config(format!(
                "unknown variant '{s}' (expected baseline, removal, margin, temperature or combined)"
            ))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParams {
    pub tau: f64,
    pub sigma: f64,
    pub rho: f64,
}

impl LossParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) {
            return Err(Error::InvalidParams(format!("tau > 0 violated (tau = {})", self.tau)));
        }
        if !(self.rho > 0.0) {
            return Err(Error::InvalidParams(format!("rho > 0 violated (rho = {})", self.rho)));
        }
        if !(self.sigma >= 0.0) {
            return Err(Error::InvalidParams(format!(
                "sigma >= 0 violated (sigma = {})",
                self.sigma
            )));
        }
        Ok(())
    }

    /// Logit `q` and `dq/ds` for one pair.
    fn logit(&self, variant: LossVariant, s: f64, p: f64) -> (f64, f64) {
        let LossParams { tau, sigma, rho } = *self;
        match variant {
            LossVariant::Baseline => (s / tau, 1.0 / tau),
            LossVariant::Removal => (s * (1.0 - p) / tau, (1.0 - p) / tau),
            LossVariant::Margin => ((s + p * sigma) / tau, 1.0 / tau),
            LossVariant::Temperature => {
                let t = (p * rho + 1.0 - p) * tau;
                (s / t, 1.0 / t)
            }
            LossVariant::Combined => {
                let t = (p * rho + 1.0 - p) * tau;
                ((s + p * sigma) / t, 1.0 / t)
            }
        }
    }
}

fn check_batch(s: &Array2<f64>, p: &Array2<f64>) -> Result<()> {
    if s.nrows() != s.ncols() || s.dim() != p.dim() {
        return Err(Error::DimensionMismatch(format!(
            "similarities {:?} and selection {:?} must be equal square shapes",
            s.dim(),
            p.dim()
        )));
    }
    Ok(())
}

/// Row `i`'s logits and their softmax over `k ≠ i`.
struct RowTerms {
    q: Vec<f64>,
    dq: Vec<f64>,
    soft: Vec<f64>,
    log_z: f64,
}

impl RowTerms {
    fn nll(&self, j: usize) -> f64 {
        self.log_z - self.q[j]
    }
}

fn row_softmax(i: usize, s: &Array2<f64>, p: &Array2<f64>, variant: LossVariant, lp: &LossParams) -> RowTerms {
    let n = s.nrows();
    let mut q = vec![f64::NEG_INFINITY; n];
    let mut dq = vec![0.0; n];
    for k in 0..n {
        if k != i {
            let (value, slope) = lp.logit(variant, s[[i, k]], p[[i, k]]);
            q[k] = value;
            dq[k] = slope;
        }
    }
    let max = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut soft: Vec<f64> = q.iter().map(|&v| (v - max).exp()).collect();
    let z: f64 = soft.iter().sum();
    for v in &mut soft {
        *v /= z;
    }
    RowTerms {
        q,
        dq,
        soft,
        log_z: max + z.ln(),
    }
}

/// `ℓ(i, j)` for one anchor/positive pair.
pub fn pair_loss(
    i: usize,
    j: usize,
    s: &Array2<f64>,
    p: &Array2<f64>,
    variant: LossVariant,
    lp: &LossParams,
) -> Result<f64> {
    lp.validate()?;
    check_batch(s, p)?;
    let n = s.nrows();
    if i >= n || j >= n || i == j {
        return Err(Error::OutOfRange {
            k: j,
            range: format!("anchor {i} and positive must be distinct indices below {n}"),
        });
    }
    Ok(row_softmax(i, s, p, variant, lp).nll(j))
}

/// `L = (1/2N) Σ_k [ℓ(2k, 2k+1) + ℓ(2k+1, 2k)]`.
pub fn batch_loss(s: &Array2<f64>, p: &Array2<f64>, variant: LossVariant, lp: &LossParams) -> Result<f64> {
    Ok(batch_loss_grad(s, p, variant, lp)?.0)
}

/// Loss and `dL/dS`, treating every `s_ij` as an independent input and
/// `P` as a constant.
pub fn batch_loss_grad(
    s: &Array2<f64>,
    p: &Array2<f64>,
    variant: LossVariant,
    lp: &LossParams,
) -> Result<(f64, Array2<f64>)> {
    lp.validate()?;
    check_batch(s, p)?;
    let n = s.nrows();
    if !n.is_multiple_of(2) || n == 0 {
        return Err(Error::DimensionMismatch(format!(
            "batch has {n} views; expected an even, positive count"
        )));
    }
    let scale = 1.0 / n as f64;
    let mut grad = Array2::zeros((n, n));
    let mut total = 0.0;
    for i in 0..n {
        let partner = i ^ 1;
        let row = row_softmax(i, s, p, variant, lp);
        total += row.nll(partner);
        for k in 0..n {
            if k != i {
                let indicator = if k == partner { 1.0 } else { 0.0 };
                grad[[i, k]] = scale * (row.soft[k] - indicator) * row.dq[k];
            }
        }
    }
    Ok((total * scale, grad))
}
