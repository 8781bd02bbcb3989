//! Near-critical fits: prefactors of `χ` and `χ̂` around `λ_c`.
//!
//! Both sides of the transition are parametrized by the relative distance
//! `δ = |λ/λ_c − 1|`; the prefactor is the `δ → 0` intercept of a polynomial
//! least-squares fit of `δ·χ` (or `δ·χ̂`) against `δ`.

use serde::Serialize;

use crate::branching::{modified_susceptibility, DENSE_SOLVE_LIMIT};
use crate::closedform::{rank1_chi_hat_at_xi, rank1_lambda_c};
use crate::fit::polyfit;
use crate::kernels::Profile;
use crate::operator::DiscreteOperator;
use crate::{Error, Result, TypeSpace};

/// Relative tolerance for the susceptibility evaluations inside a fit.
pub const FIT_TOL: f64 = 1e-12;
const FIT_J_MAX: usize = 1_000_000;

/// Result of a prefactor fit.
#[derive(Clone, Debug, Serialize)]
pub struct PrefactorFit {
    /// Fitted `δ → 0` limit of `δ·χ`.
    pub prefactor: f64,
    /// Polynomial coefficients in `δ`, constant term first.
    pub coefficients: Vec<f64>,
    /// The `δ` values used.
    pub deltas: Vec<f64>,
    /// The corresponding `λ` values.
    pub lambdas: Vec<f64>,
    /// `δ·χ` (or `δ·χ̂`) at each point.
    pub scaled: Vec<f64>,
}

fn fit(deltas: Vec<f64>, lambdas: Vec<f64>, scaled: Vec<f64>, degree: usize) -> Result<PrefactorFit> {
    let coefficients = polyfit(&deltas, &scaled, degree)?;
    Ok(PrefactorFit {
        prefactor: coefficients[0],
        coefficients,
        deltas,
        lambdas,
        scaled,
    })
}

fn check_deltas(deltas: &[f64]) -> Result<()> {
    if deltas.iter().any(|&d| !(d > 0.0 && d < 1.0)) {
        return Err(Error::invalid("deltas", "each delta must lie in (0, 1)"));
    }
    Ok(())
}

/// `χ(λκ)` for a subcritical operator: dense solve for small meshes,
/// otherwise the series.
pub fn subcritical_chi(op: &DiscreteOperator) -> Result<f64> {
    if op.len() <= DENSE_SOLVE_LIMIT {
        let f = op.solve_linear()?;
        return Ok(op.integrate(&f) / op.total_mass());
    }
    let series = op.susceptibility_series(FIT_TOL, FIT_J_MAX);
    series.value.ok_or(Error::Diverged { what: "susceptibility series" })
}

/// Fit `a` in `χ(λκ) ≈ a/(1 − λ/λ_c)` from `λ = λ_c(1 − δ)`.
///
/// `op` is the unscaled operator of `κ` and `lambda_c` its critical value.
pub fn subcritical_prefactor(op: &DiscreteOperator, lambda_c: f64, deltas: &[f64], degree: usize) -> Result<PrefactorFit> {
    check_deltas(deltas)?;
    let mut lambdas = Vec::with_capacity(deltas.len());
    let mut scaled = Vec::with_capacity(deltas.len());
    for &d in deltas {
        let lambda = lambda_c * (1.0 - d);
        lambdas.push(lambda);
        scaled.push(d * subcritical_chi(&op.scaled(lambda))?);
    }
    fit(deltas.to_vec(), lambdas, scaled, degree)
}

/// Fit `b` in `χ̂(λκ) ≈ b/(λ/λ_c − 1)` from `λ = λ_c(1 + δ)` using the
/// branching-process route.
pub fn supercritical_prefactor(op: &DiscreteOperator, lambda_c: f64, deltas: &[f64], degree: usize) -> Result<PrefactorFit> {
    check_deltas(deltas)?;
    let mut lambdas = Vec::with_capacity(deltas.len());
    let mut scaled = Vec::with_capacity(deltas.len());
    for &d in deltas {
        let lambda = lambda_c * (1.0 + d);
        let result = modified_susceptibility(&op.scaled(lambda), FIT_TOL)?;
        let chi_hat = result.chi_hat.ok_or(Error::Diverged { what: "dual susceptibility" })?;
        lambdas.push(lambda);
        scaled.push(d * chi_hat);
    }
    fit(deltas.to_vec(), lambdas, scaled, degree)
}

/// Supercritical prefactor of the rank-1 kernel `ψ(x)ψ(y)` from the
/// explicit `ξ`-parametrization, sampled at the given `ξ` values.
pub fn rank1_supercritical_prefactor(psi: &Profile, ts: &TypeSpace, xis: &[f64], degree: usize) -> Result<PrefactorFit> {
    let lambda_c = rank1_lambda_c(psi, ts)?;
    let mut deltas = Vec::with_capacity(xis.len());
    let mut lambdas = Vec::with_capacity(xis.len());
    let mut scaled = Vec::with_capacity(xis.len());
    for &xi in xis {
        let (lambda, chi_hat) = rank1_chi_hat_at_xi(psi, ts, xi)?;
        let d = lambda / lambda_c - 1.0;
        if !(d > 0.0) {
            return Err(Error::invalid("xi", format!("xi={xi} does not resolve above the critical point")));
        }
        deltas.push(d);
        lambdas.push(lambda);
        scaled.push(d * chi_hat);
    }
    fit(deltas, lambdas, scaled, degree)
}

/// Constant term `c` in `χ̂((1+ε)κ) = 1/ε + c + O(ε)` for the single-type
/// kernel, fitted linearly in `ε` on the branching-process route.
pub fn er_taylor_constant(eps: &[f64]) -> Result<f64> {
    check_deltas(eps)?;
    let op = DiscreteOperator::discretize(&crate::Kernel::constant(1.0)?, &TypeSpace::atom())?;
    let mut y = Vec::with_capacity(eps.len());
    for &e in eps {
        let result = modified_susceptibility(&op.scaled(1.0 + e), FIT_TOL)?;
        let chi_hat = result.chi_hat.ok_or(Error::Diverged { what: "dual susceptibility" })?;
        y.push(chi_hat - 1.0 / e);
    }
    Ok(polyfit(eps, &y, 1)?[0])
}
