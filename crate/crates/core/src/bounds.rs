//! Linear-probing error bounds of the form
//!
//! ```text
//! E ≤ 4δ · factor / (1 - λ) + 8δ
//! ```
//!
//! where `λ` is the relevant `λ_{k+1}` (or its upper bound) of the
//! normalized graph and `factor = 1` except for temperature scaling.

use std::fmt;

use crate::error::{Error, Result};
use crate::graph::GraphParams;
use crate::spectrum::check_k_range;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundScenario {
    WithoutDifficult,
    WithDifficult,
    Removed,
    TemperatureScaled,
    MarginTuned,
}

impl BoundScenario {
    pub fn label(self) -> &'static str {
        match self {
            BoundScenario::WithoutDifficult => "without",
            BoundScenario::WithDifficult => "with",
            BoundScenario::Removed => "removed",
            BoundScenario::TemperatureScaled => "temperature",
            BoundScenario::MarginTuned => "margin",
        }
    }
}

impl fmt::Display for BoundScenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundReport {
    pub scenario: BoundScenario,
    pub delta: f64,
    pub k: Option<usize>,
    pub lambda_term: f64,
    pub factor: f64,
    pub bound_value: f64,
}

impl BoundReport {
    fn new(scenario: BoundScenario, delta: f64, k: Option<usize>, lambda_term: f64, factor: f64) -> Self {
        Self {
            scenario,
            delta,
            k,
            lambda_term,
            factor,
            bound_value: bound_form(delta, factor, lambda_term),
        }
    }

    /// Bounds are not clipped; values above 1 are vacuous but still comparable.
    pub fn exceeds_one(&self) -> bool {
        self.bound_value > 1.0
    }
}

/// `4δ·factor/(1-λ) + 8δ`.
pub fn bound_form(delta: f64, factor: f64, lambda: f64) -> f64 {
    4.0 * delta * factor / (1.0 - lambda) + 8.0 * delta
}

fn check_delta(delta: f64) -> Result<()> {
    if (0.0..=1.0).contains(&delta) {
        Ok(())
    } else {
        Err(Error::InvalidParams(format!(
            "0 <= delta <= 1 violated (delta = {delta})"
        )))
    }
}

pub fn lambda_without(params: &GraphParams) -> f64 {
    (1.0 - params.alpha) / params.degree_constants().c2
}

/// Upper bound on `λ_{k+1}` of the difficult-example graph. With no
/// difficult samples the graph is the no-difficult one.
pub fn lambda_with(params: &GraphParams) -> f64 {
    if params.n_d == 0 {
        return lambda_without(params);
    }
    let c1 = params.degree_constants().c1;
    ((1.0 - params.alpha) + params.r as f64 * (params.gamma - params.beta)) / c1
}

pub fn lambda_removed(params: &GraphParams) -> f64 {
    (1.0 - params.alpha) / params.removed_degree()
}

pub fn bound_without(params: &GraphParams, delta: f64) -> Result<BoundReport> {
    params.validate_relaxed()?;
    check_delta(delta)?;
    Ok(BoundReport::new(
        BoundScenario::WithoutDifficult,
        delta,
        None,
        lambda_without(params),
        1.0,
    ))
}

/// Valid for `r + 1 ≤ k < n_d + r + 1`; `n_d = 0` falls back to the
/// no-difficult bound for every `k`.
pub fn bound_with(params: &GraphParams, delta: f64, k: usize) -> Result<BoundReport> {
    params.validate_relaxed()?;
    if params.n_d > 0 {
        check_k_range(params, k)?;
    }
    check_delta(delta)?;
    Ok(BoundReport::new(
        BoundScenario::WithDifficult,
        delta,
        Some(k),
        lambda_with(params),
        1.0,
    ))
}

pub fn bound_removed(params: &GraphParams, delta: f64) -> Result<BoundReport> {
    params.validate_relaxed()?;
    check_delta(delta)?;
    if params.n_d == 0 {
        return Err(Error::InvalidParams(
            "n_d >= 1 required: there are no difficult samples to remove".into(),
        ));
    }
    if params.n_d == params.n {
        return Err(Error::Degenerate(
            "removing n_d = n difficult samples leaves an empty dataset".into(),
        ));
    }
    Ok(BoundReport::new(
        BoundScenario::Removed,
        delta,
        None,
        lambda_removed(params),
        1.0,
    ))
}

/// The margin-tuned loss restores the no-difficult graph exactly, so its
/// bound is the no-difficult bound.
pub fn bound_margin(params: &GraphParams, delta: f64) -> Result<BoundReport> {
    let mut report = bound_without(params, delta)?;
    report.scenario = BoundScenario::MarginTuned;
    Ok(report)
}

/// `1 - (n_d/n)² + (γ/β)² (n_d/n)²`.
pub fn temperature_factor(params: &GraphParams) -> Result<f64> {
    if params.beta == 0.0 {
        return Err(Error::DivisionByZero(
            "temperature factor needs beta > 0 (gamma / beta undefined)".into(),
        ));
    }
    let frac = params.n_d as f64 / params.n as f64;
    let ratio = params.gamma / params.beta;
    Ok(1.0 - frac * frac + ratio * ratio * frac * frac)
}

pub fn bound_temperature(params: &GraphParams, delta: f64) -> Result<BoundReport> {
    params.validate_relaxed()?;
    check_delta(delta)?;
    let factor = temperature_factor(params)?;
    Ok(BoundReport::new(
        BoundScenario::TemperatureScaled,
        delta,
        None,
        lambda_without(params),
        factor,
    ))
}

/// `n_d (1-α)(α + rγ) / (r [(1-α) + (n-n_d)(α + rβ)])`.
///
/// Removing the difficult samples gives the smaller bound iff `γ - β`
/// exceeds this value. The value depends on `γ` itself; the crossing
/// point is its fixed point, see [`removal_crossover_gap`].
pub fn removal_crossover_threshold(params: &GraphParams) -> Result<f64> {
    params.validate_relaxed()?;
    let GraphParams {
        r, n_d, alpha, gamma, ..
    } = *params;
    let rf = r as f64;
    Ok(n_d as f64 * (1.0 - alpha) * (alpha + rf * gamma) / (rf * params.removed_degree()))
}

/// The gap `Δ* = γ* - β` at which the removed and with-difficult bounds
/// coincide, solved in closed form:
///
/// ```text
/// Δ* = n_d (1-α)(α + rβ) / (r [c_R - n_d (1-α)]),   c_R = (1-α) + (n-n_d)(α + rβ)
/// ```
///
/// `Δ*` is the fixed point of [`removal_crossover_threshold`] in `γ`.
/// Infinite when `c_R ≤ n_d (1-α)`: removal then never wins.
pub fn removal_crossover_gap(params: &GraphParams) -> Result<f64> {
    params.validate_relaxed()?;
    let GraphParams {
        r, n_d, alpha, beta, ..
    } = *params;
    let rf = r as f64;
    let slack = params.removed_degree() - n_d as f64 * (1.0 - alpha);
    if slack <= 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(n_d as f64 * (1.0 - alpha) * (alpha + rf * beta) / (rf * slack))
}

/// `√(r / ((α + rβ)(γ + β))) · β · √n`; temperature scaling beats the
/// with-difficult bound when `n_d` is below this value.
pub fn temperature_nd_threshold(params: &GraphParams) -> Result<f64> {
    params.validate_relaxed()?;
    let GraphParams {
        n,
        r,
        alpha,
        beta,
        gamma,
        ..
    } = *params;
    let rf = r as f64;
    Ok((rf / ((alpha + rf * beta) * (gamma + beta))).sqrt() * beta * (n as f64).sqrt())
}

#[derive(Debug, Clone)]
pub struct BoundComparison {
    /// Applicable bounds, ascending by value.
    pub reports: Vec<BoundReport>,
    /// `bound_with > bound_without`.
    pub with_exceeds_without: bool,
}

impl BoundComparison {
    pub fn get(&self, scenario: BoundScenario) -> Option<&BoundReport> {
        self.reports.iter().find(|r| r.scenario == scenario)
    }

    pub fn order(&self) -> Vec<BoundScenario> {
        self.reports.iter().map(|r| r.scenario).collect()
    }
}

/// Every bound that applies to `params`, on shared `δ` and `k`.
pub fn compare_bounds(params: &GraphParams, delta: f64, k: usize) -> Result<BoundComparison> {
    let without = bound_without(params, delta)?;
    let with = bound_with(params, delta, k)?;
    let mut reports = vec![without, with, bound_margin(params, delta)?];
    if params.n_d >= 1 && params.n_d < params.n {
        reports.push(bound_removed(params, delta)?);
    }
    if params.beta > 0.0 {
        reports.push(bound_temperature(params, delta)?);
    }
    for report in &mut reports {
        report.k = Some(k);
    }
    reports.sort_by(|a, b| a.bound_value.total_cmp(&b.bound_value));
    Ok(BoundComparison {
        reports,
        with_exceeds_without: with.bound_value > without.bound_value,
    })
}
