//! Analytic reference values for the explicit kernel families.
//!
//! Every function states its validity region; queries outside it return
//! [`Closed::Diverged`] or [`Closed::Unavailable`] instead of extrapolating.

use serde::Serialize;

use crate::kernels::Profile;
use crate::ode::{rk4, steps_for};
use crate::{Error, Result, TypeSpace};

/// A closed-form value together with its regime.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "status", content = "value")]
pub enum Closed {
    Value(f64),
    Diverged,
    Unavailable,
}

impl Closed {
    pub fn value(self) -> Option<f64> {
        match self {
            Closed::Value(v) => Some(v),
            _ => None,
        }
    }

    pub fn status(self) -> &'static str {
        match self {
            Closed::Value(_) => "value",
            Closed::Diverged => "diverged",
            Closed::Unavailable => "unavailable",
        }
    }
}

/// Default step for the fixed-step ODE integrations.
pub const ODE_STEP: f64 = 1e-4;

// ---------------------------------------------------------------- Erdős–Rényi

/// `1/(1−λ)` for `λ < 1`.
pub fn er_chi(lambda: f64) -> Closed {
    if lambda < 1.0 {
        Closed::Value(1.0 / (1.0 - lambda))
    } else {
        Closed::Diverged
    }
}

/// Largest solution of `ρ = 1 − e^{−λρ}`; zero for `λ ≤ 1`.
pub fn er_rho(lambda: f64) -> f64 {
    if lambda <= 1.0 {
        return 0.0;
    }
    // monotone iteration from 1, then Newton to full precision
    let mut rho: f64 = 1.0;
    for _ in 0..1_000_000 {
        let next = -(-lambda * rho).exp_m1();
        let step = rho - next;
        rho = next;
        if step < 1e-10 {
            break;
        }
    }
    for _ in 0..8 {
        let g = rho + (-lambda * rho).exp_m1();
        let dg = 1.0 - lambda * (-lambda * rho).exp();
        let next = rho - g / dg;
        if !(next > 0.0 && next <= 1.0) {
            break;
        }
        rho = next;
    }
    rho
}

/// `χ̂ = (1−ρ)/(1−λ(1−ρ))`, equal to `χ` below criticality.
pub fn er_chi_hat(lambda: f64) -> Closed {
    if lambda < 1.0 {
        return er_chi(lambda);
    }
    if lambda == 1.0 {
        return Closed::Diverged;
    }
    let q = 1.0 - er_rho(lambda);
    Closed::Value(q / (1.0 - lambda * q))
}

/// `ln k!`.
pub fn ln_factorial(k: u64) -> f64 {
    (2..=k).map(|i| (i as f64).ln()).sum()
}

/// Borel law `P(|X| = k) = k^{k−1}/k! · λ^{k−1} e^{−kλ}`.
pub fn er_borel_rhok(lambda: f64, k: u64) -> f64 {
    assert!(k >= 1, "k must be at least 1");
    let kf = k as f64;
    if lambda == 0.0 {
        return if k == 1 { 1.0 } else { 0.0 };
    }
    ((kf - 1.0) * kf.ln() - ln_factorial(k) + (kf - 1.0) * lambda.ln() - kf * lambda).exp()
}

// ---------------------------------------------------------------------- rank 1

/// `1 + λ(∫ψ)²/(1 − λ∫ψ²)` for `λ∫ψ² < 1`.
pub fn rank1_chi_sub(m1: f64, m2: f64, lambda: f64) -> Closed {
    let d = 1.0 - lambda * m2;
    if d > 0.0 {
        Closed::Value(1.0 + lambda * m1 * m1 / d)
    } else {
        Closed::Diverged
    }
}

/// Subcritical prefactor `a = (∫ψ)²/∫ψ²`.
pub fn rank1_prefactor(m1: f64, m2: f64) -> f64 {
    m1 * m1 / m2
}

/// `1 − e^{−y}`.
fn one_minus_exp(y: f64) -> f64 {
    -(-y).exp_m1()
}

/// `1 − e^{−y}(1 + y)`, accurate for small `y`.
fn one_minus_exp_times(y: f64) -> f64 {
    if y < 0.5 {
        // Σ_{n≥2} (−1)^n (n−1) yⁿ / n!
        let mut term = -y; // (−y)ⁿ/n! at n = 1
        let mut sum = 0.0;
        for n in 2..40 {
            term *= -y / n as f64;
            let next = (n as f64 - 1.0) * term;
            sum += next;
            if next.abs() < 1e-18 * sum.abs() {
                break;
            }
        }
        sum
    } else {
        1.0 - (-y).exp() * (1.0 + y)
    }
}

/// `λ(ξ) = ξ / ∫(1 − e^{−ξψ}) ψ dμ`.
pub fn rank1_xi_to_lambda(psi: &Profile, ts: &TypeSpace, xi: f64) -> Result<f64> {
    if !(xi > 0.0) {
        return Err(Error::invalid("xi", format!("need xi > 0, got {xi}")));
    }
    let denom = ts.integrate(|x| {
        let p = psi.eval(x);
        one_minus_exp(xi * p) * p
    })?;
    Ok(xi / denom)
}

/// `λ_c = 1/∫ψ²`.
pub fn rank1_lambda_c(psi: &Profile, ts: &TypeSpace) -> Result<f64> {
    Ok(1.0 / ts.integrate(|x| psi.eval(x).powi(2))?)
}

/// Inverse of [`rank1_xi_to_lambda`] by bisection; `λ(ξ)` is increasing.
pub fn rank1_lambda_to_xi(psi: &Profile, ts: &TypeSpace, lambda: f64, tol: f64) -> Result<f64> {
    let lc = rank1_lambda_c(psi, ts)?;
    if !(lambda > lc) {
        return Err(Error::invalid("lambda", format!("{lambda} is not above the critical value {lc}")));
    }
    let mut hi = 1.0;
    while rank1_xi_to_lambda(psi, ts, hi)? < lambda {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::NoConvergence {
                what: "xi bracket",
                iterations: 40,
                last: hi,
            });
        }
    }
    let mut lo = 0.0;
    while hi - lo > tol * hi.max(1e-300) && hi - lo > f64::MIN_POSITIVE {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if rank1_xi_to_lambda(psi, ts, mid)? < lambda {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `(λ, χ̂)` at parameter `ξ`:
/// `χ̂ = ∫e^{−ξψ} + ξ(∫e^{−ξψ}ψ)² / ∫(1 − e^{−ξψ}(1+ξψ))ψ`.
pub fn rank1_chi_hat_at_xi(psi: &Profile, ts: &TypeSpace, xi: f64) -> Result<(f64, f64)> {
    let lambda = rank1_xi_to_lambda(psi, ts, xi)?;
    let a = ts.integrate(|x| (-xi * psi.eval(x)).exp())?;
    let b = ts.integrate(|x| {
        let p = psi.eval(x);
        (-xi * p).exp() * p
    })?;
    let c = ts.integrate(|x| {
        let p = psi.eval(x);
        one_minus_exp_times(xi * p) * p
    })?;
    if !(c > 0.0) {
        return Err(Error::NonFinite {
            location: format!("rank-1 denominator at xi={xi}"),
            value: c,
        });
    }
    Ok((lambda, a + xi * b * b / c))
}

/// Supercritical `χ̂(λ ψ⊗ψ)`.
pub fn rank1_chi_hat(psi: &Profile, ts: &TypeSpace, lambda: f64, tol: f64) -> Result<f64> {
    let xi = rank1_lambda_to_xi(psi, ts, lambda, tol)?;
    Ok(rank1_chi_hat_at_xi(psi, ts, xi)?.1)
}

// ----------------------------------------------------------------------- CHKNS

/// `(1 − √(1−4λ))/(2λ)` for `λ ≤ 1/4`.
pub fn chkns_chi(lambda: f64) -> Closed {
    if lambda > 0.25 {
        return Closed::Diverged;
    }
    if lambda <= 0.0 {
        return Closed::Value(1.0);
    }
    // rationalized to avoid cancellation at small λ
    Closed::Value(2.0 / (1.0 + (1.0 - 4.0 * lambda).max(0.0).sqrt()))
}

/// `χ̂`: the subcritical value up to `1/4`, then `1/λ`.
pub fn chkns_chi_hat(lambda: f64) -> f64 {
    match chkns_chi(lambda) {
        Closed::Value(v) => v,
        _ => 1.0 / lambda,
    }
}

/// `α₊ = 1/2 + √(1/4 − λ)`.
pub fn alpha_plus(lambda: f64) -> Result<f64> {
    if lambda > 0.25 {
        return Err(Error::invalid("lambda", format!("{lambda} exceeds the critical value 1/4")));
    }
    Ok(0.5 + (0.25 - lambda).max(0.0).sqrt())
}

/// `c · x^{e}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PowerFunction {
    pub coefficient: f64,
    pub exponent: f64,
}

impl PowerFunction {
    pub fn eval(&self, x: f64) -> f64 {
        self.coefficient * x.powf(self.exponent)
    }

    /// `∫₀¹`, finite for exponents above −1.
    pub fn integral_unit(&self) -> f64 {
        self.coefficient / (self.exponent + 1.0)
    }
}

/// `sus(λκ; x) = x^{α₊−1}` for CHKNS at `λ ≤ 1/4`.
pub fn chkns_chi_solution_pointwise(lambda: f64) -> Result<PowerFunction> {
    let a = alpha_plus(lambda)?;
    Ok(PowerFunction {
        coefficient: 1.0,
        exponent: a - 1.0,
    })
}

/// `ρ_1, …, ρ_K` from `ρ_k = kλ/(2(1+kλ)) Σ_{j=1}^{k−1} ρ_{k−j} ρ_j`.
pub fn chkns_rhok_recursion(lambda: f64, k_max: usize) -> Vec<f64> {
    let mut rho = Vec::with_capacity(k_max);
    if k_max == 0 {
        return rho;
    }
    rho.push(1.0 / (1.0 + lambda));
    for k in 2..=k_max {
        // symmetric sum: pair j with k−j
        let mut s = 0.0;
        for j in 1..=(k - 1) / 2 {
            s += 2.0 * rho[k - j - 1] * rho[j - 1];
        }
        if k % 2 == 0 {
            let h = rho[k / 2 - 1];
            s += h * h;
        }
        let kl = k as f64 * lambda;
        rho.push(kl / (2.0 * (1.0 + kl)) * s);
    }
    rho
}

/// Explicit `ρ_1 … ρ_4` for CHKNS.
pub fn chkns_rhok_closed(lambda: f64, k: usize) -> Closed {
    let l = lambda;
    let v = match k {
        1 => 1.0 / (1.0 + l),
        2 => l / ((1.0 + l).powi(2) * (1.0 + 2.0 * l)),
        3 => 3.0 * l * l / ((1.0 + l).powi(3) * (1.0 + 2.0 * l) * (1.0 + 3.0 * l)),
        4 => {
            2.0 * l.powi(3) * (7.0 + 15.0 * l)
                / ((1.0 + l).powi(4) * (1.0 + 2.0 * l).powi(2) * (1.0 + 3.0 * l) * (1.0 + 4.0 * l))
        }
        _ => return Closed::Unavailable,
    };
    Closed::Value(v)
}

/// Survival probability from the generating-function ODE.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct OdeRho {
    pub rho: f64,
    /// `|ρ(h) − ρ(2h)|`.
    pub richardson_gap: f64,
}

/// `ρ = 1 − G(1)` where `G′ = (z − G)/(λ z (1 − G))`, started at
/// `z₀ = 10⁻⁴` from `G ≈ ρ₁z₀ + ρ₂z₀²`.
///
/// The integration runs in `s = ln z`, where the equation is not stiff
/// near the origin; `step` is the step in `s`.
pub fn chkns_rho_via_ode(lambda: f64, step: f64) -> Result<OdeRho> {
    if lambda <= 0.25 {
        return Ok(OdeRho {
            rho: 0.0,
            richardson_gap: 0.0,
        });
    }
    let fine = chkns_ode_once(lambda, step)?;
    let coarse = chkns_ode_once(lambda, 2.0 * step)?;
    Ok(OdeRho {
        rho: fine,
        richardson_gap: (fine - coarse).abs(),
    })
}

fn chkns_ode_once(lambda: f64, step: f64) -> Result<f64> {
    let z0: f64 = 1e-4;
    let rho1 = 1.0 / (1.0 + lambda);
    let rho2 = lambda / ((1.0 + lambda).powi(2) * (1.0 + 2.0 * lambda));
    let g0 = rho1 * z0 + rho2 * z0 * z0;
    let s0 = z0.ln();
    let n = steps_for(s0, 0.0, step);
    let mut blew_up = false;
    let g = rk4(
        |s, g: &[f64; 1]| {
            let z = s.exp();
            [(z - g[0]) / (lambda * (1.0 - g[0]))]
        },
        s0,
        0.0,
        [g0],
        n,
        |_, g| blew_up |= !(g[0] < 1.0),
    );
    if blew_up || !g[0].is_finite() {
        return Err(Error::NoConvergence {
            what: "generating-function ODE (G reached 1)",
            iterations: n,
            last: g[0],
        });
    }
    Ok(1.0 - g[0])
}

/// `E(|X|²; |X| < ∞) = 1/(λρ)`.
pub fn chkns_second_moment(lambda: f64, rho: f64) -> f64 {
    1.0 / (lambda * rho)
}

/// `E(|X|³; |X| < ∞) = 2/(λρ)² + 1/(λρ)`.
pub fn chkns_third_moment(lambda: f64, rho: f64) -> f64 {
    let lr = lambda * rho;
    2.0 / (lr * lr) + 1.0 / lr
}

// ---------------------------------------------------------------------- Dubins

/// `(1 − 2λ − √(1−4λ))/(2λ²)` for `λ ≤ 1/4`; no closed form beyond.
pub fn dubins_chi(lambda: f64) -> Closed {
    if lambda > 0.25 {
        return Closed::Unavailable;
    }
    if lambda <= 0.0 {
        return Closed::Value(1.0);
    }
    Closed::Value(2.0 / (1.0 - 2.0 * lambda + (1.0 - 4.0 * lambda).max(0.0).sqrt()))
}

/// `α₊⁻¹ x^{α₊−1}`, the minimal solution for Dubins at `λ ≤ 1/4`.
pub fn dubins_chi_solution_pointwise(lambda: f64) -> Result<PowerFunction> {
    let a = alpha_plus(lambda)?;
    Ok(PowerFunction {
        coefficient: 1.0 / a,
        exponent: a - 1.0,
    })
}

/// Integrated `ρ_1, ρ_2, ρ_3` for Dubins.
pub fn dubins_rhok(lambda: f64, k: usize) -> Closed {
    let l = lambda;
    let v = match k {
        1 => (-l).exp() / (1.0 + l),
        2 => 2.0 * l * (-2.0 * l).exp() / ((1.0 + l) * (1.0 + 2.0 * l)),
        3 => {
            (15.0 * l * l + 18.0 * l.powi(3)) * (-3.0 * l).exp()
                / (2.0 * (1.0 + l).powi(2) * (1.0 + 2.0 * l) * (1.0 + 3.0 * l))
        }
        _ => return Closed::Unavailable,
    };
    Closed::Value(v)
}

/// `T_{λκ}(x^γ)(x) = λ/γ − λ/(γ(γ+1)) x^γ` for the Dubins kernel, `γ > −1`, `γ ≠ 0`.
pub fn dubins_apply_power(lambda: f64, gamma: f64, x: f64) -> f64 {
    lambda / gamma - lambda / (gamma * (gamma + 1.0)) * x.powf(gamma)
}

// ------------------------------------------------------------ max(x, y) kernels

/// Result of the Sturm–Liouville route for `κ = φ(x ∨ y)`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct MaxKernelChi {
    /// `χ = c F̃(1)`, present only on the subcritical side.
    pub chi: Option<f64>,
    /// `c = 1/(F̃′(1) − λφ(1)F̃(1))`.
    pub scale: f64,
    /// `c > 0` and `c F̃′ ≥ 0` on the whole grid.
    pub subcritical: bool,
}

/// Solve `F″ = λφ′F`, `F̃(0) = 0`, `F̃′(0) = 1` and rescale to
/// `F′(1) = λφ(1)F(1) + 1`.
pub fn maxkernel_chi_ode(phi: &Profile, lambda: f64, step: f64) -> Result<MaxKernelChi> {
    if !phi.has_derivative() {
        return Err(Error::invalid("phi", format!("profile {} has no derivative", phi.name())));
    }
    let n = steps_for(0.0, 1.0, step);
    let mut min_slope = f64::INFINITY;
    let mut max_slope = f64::NEG_INFINITY;
    let y = rk4(
        |x, y: &[f64; 2]| [y[1], lambda * phi.derivative(x).expect("checked") * y[0]],
        0.0,
        1.0,
        [0.0, 1.0],
        n,
        |_, y| {
            min_slope = min_slope.min(y[1]);
            max_slope = max_slope.max(y[1]);
        },
    );
    let (f1, df1) = (y[0], y[1]);
    if !f1.is_finite() || !df1.is_finite() {
        return Err(Error::NonFinite {
            location: "Sturm-Liouville shooting".to_owned(),
            value: f1,
        });
    }
    let c = 1.0 / (df1 - lambda * phi.eval(1.0) * f1);
    let subcritical = c > 0.0 && c.is_finite() && min_slope.min(1.0) >= 0.0;
    Ok(MaxKernelChi {
        chi: subcritical.then_some(c * f1),
        scale: c,
        subcritical,
    })
}

/// `λ_c` for `φ(x ∨ y)` by bisection on the sign of the scaling constant.
pub fn maxkernel_lambda_c(phi: &Profile, lo: f64, hi: f64, tol: f64, step: f64) -> Result<f64> {
    if !(0.0 <= lo && lo < hi) {
        return Err(Error::invalid("bracket", format!("need 0 <= lo < hi, got [{lo}, {hi}]")));
    }
    let sub = |l: f64| maxkernel_chi_ode(phi, l, step).map(|r| r.subcritical);
    if !sub(lo)? || sub(hi)? {
        return Err(Error::invalid("bracket", format!("[{lo}, {hi}] does not straddle the threshold")));
    }
    let (mut a, mut b) = (lo, hi);
    while b - a > tol {
        let mid = 0.5 * (a + b);
        if sub(mid)? {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(0.5 * (a + b))
}
