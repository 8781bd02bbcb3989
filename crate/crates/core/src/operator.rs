//! Nyström realization of the integral operator `(T f)(x) = ∫ κ(x, y) f(y) dμ(y)`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::rng::{self, Purpose};
use crate::{Error, Kernel, Result, TypeSpace};

/// Iteration cap for the power method.
pub const POWER_ITERATION_CAP: usize = 100_000;

/// Consecutive term ratios `≥ 1` that declare the series divergent.
pub const DIVERGENCE_RUN: usize = 10;

/// Half-width of the band around 1 in which results are flagged as
/// limited by the mesh rather than by the continuum operator.
pub const CRITICAL_BAND: f64 = 1e-6;

const PARALLEL_ROWS: usize = 256;

/// `T_κ` on a finite type space: `(T f)_i = scale · Σ_j K_ij w_j f_j`.
///
/// The kernel matrix is shared between scaled copies and dual operators, so
/// changing `λ` or the weights never re-evaluates the kernel.
#[derive(Clone, Debug)]
pub struct DiscreteOperator {
    m: usize,
    matrix: Arc<Vec<f64>>,
    scale: f64,
    points: Arc<Vec<f64>>,
    weights: Vec<f64>,
    sqrt_weights: Vec<f64>,
    total_mass: f64,
    kernel_name: String,
    mesh: String,
}

/// Why [`DiscreteOperator::susceptibility_series`] stopped.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    RatioGeOne,
    JMaxHit,
}

#[derive(Clone, Debug, Serialize)]
pub struct SeriesResult {
    /// `χ = μ(S)⁻¹ Σ_j ⟨Tʲ1, 1⟩`, including the geometric tail estimate;
    /// `None` when the series diverged. On `JMaxHit` this is the partial sum.
    pub value: Option<f64>,
    /// `⟨Tʲ1, 1⟩_μ` for `j = 0..=j_stop`.
    pub terms: Vec<f64>,
    pub j_stop: usize,
    pub reason: StopReason,
    /// Last observed ratio of consecutive terms; it converges to `‖T‖`.
    pub last_ratio: f64,
    /// Geometric tail added to the partial sum (already divided by `μ(S)`).
    pub tail: f64,
    /// The observed ratio lies within [`CRITICAL_BAND`] of 1.
    pub near_critical: bool,
}

impl SeriesResult {
    /// Whether the run indicates `‖T‖ < 1`. An exhausted run counts as
    /// subcritical when its last ratio is below 1.
    pub fn is_subcritical(&self) -> bool {
        match self.reason {
            StopReason::Converged => true,
            StopReason::RatioGeOne => false,
            StopReason::JMaxHit => self.last_ratio < 1.0,
        }
    }

    pub fn status(&self) -> &'static str {
        match self.reason {
            StopReason::Converged => "converged",
            StopReason::RatioGeOne => "diverged",
            StopReason::JMaxHit => "undecided",
        }
    }
}

/// Outcome of checking `f ≥ T f + 1`.
#[derive(Clone, Debug, Serialize)]
pub struct SupersolutionReport {
    /// `min_i (f_i − (T f)_i − 1)`.
    pub min_residual: f64,
    pub argmin: usize,
    /// A non-negative residual certifies `χ < ∞` for the discretized operator.
    pub certifies_finite: bool,
}

impl DiscreteOperator {
    /// Evaluate `κ` on all pairs of nodes of `ts`.
    pub fn discretize(kernel: &Kernel, ts: &TypeSpace) -> Result<Self> {
        let m = ts.len();
        let x = ts.points();
        let mut matrix = vec![0.0; m * m];
        matrix
            .par_chunks_mut(m)
            .enumerate()
            .try_for_each(|(i, row)| -> Result<()> {
                for (j, out) in row.iter_mut().enumerate() {
                    let (a, b) = if i <= j { (x[i], x[j]) } else { (x[j], x[i]) };
                    let v = kernel.base(a, b);
                    if !v.is_finite() || v < 0.0 {
                        return Err(Error::NonFinite {
                            location: format!("{}({}, {})", kernel.name(), x[i], x[j]),
                            value: v,
                        });
                    }
                    *out = v;
                }
                Ok(())
            })?;
        Ok(DiscreteOperator {
            m,
            matrix: Arc::new(matrix),
            scale: kernel.scale(),
            points: Arc::new(x.to_vec()),
            sqrt_weights: ts.weights().iter().map(|w| w.sqrt()).collect(),
            weights: ts.weights().to_vec(),
            total_mass: ts.total_mass(),
            kernel_name: kernel.name(),
            mesh: ts.description().to_owned(),
        })
    }

    /// `λ T`, sharing the kernel matrix.
    pub fn scaled(&self, lambda: f64) -> Self {
        DiscreteOperator {
            scale: self.scale * lambda,
            ..self.clone()
        }
    }

    /// Same kernel matrix on new node weights `w̃_i`.
    pub fn with_weights(&self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.m {
            return Err(Error::LengthMismatch {
                expected: self.m,
                actual: weights.len(),
            });
        }
        if let Some(bad) = weights.iter().find(|w| !(**w >= 0.0) || !w.is_finite()) {
            return Err(Error::invalid("weights", format!("weights must be non-negative, got {bad}")));
        }
        Ok(DiscreteOperator {
            sqrt_weights: weights.iter().map(|w| w.sqrt()).collect(),
            total_mass: weights.iter().sum(),
            weights,
            ..self.clone()
        })
    }

    pub fn len(&self) -> usize {
        self.m
    }

    pub fn is_empty(&self) -> bool {
        self.m == 0
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    pub fn kernel_name(&self) -> &str {
        &self.kernel_name
    }

    pub fn mesh(&self) -> &str {
        &self.mesh
    }

    /// `K_ij` including the scale.
    #[inline]
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.scale * self.matrix[i * self.m + j]
    }

    /// Row `i` of the unscaled kernel matrix.
    #[inline]
    fn row(&self, i: usize) -> &[f64] {
        &self.matrix[i * self.m..(i + 1) * self.m]
    }

    /// Dense `K` including the scale.
    pub fn kernel_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.m, self.m, |i, j| self.entry(i, j))
    }

    /// `S = W^{1/2} K W^{1/2}`, symmetric with the same spectrum as `T`.
    pub fn symmetric_form(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.m, self.m, |i, j| self.sqrt_weights[i] * self.entry(i, j) * self.sqrt_weights[j])
    }

    /// `y_i = Σ_j M_ij v_j` for the unscaled kernel matrix `M`.
    fn matvec(&self, v: &[f64], out: &mut [f64]) {
        let body = |(i, o): (usize, &mut f64)| {
            *o = self.row(i).iter().zip(v).map(|(k, x)| k * x).sum();
        };
        if self.m >= PARALLEL_ROWS {
            out.par_iter_mut().enumerate().for_each(body);
        } else {
            out.iter_mut().enumerate().for_each(body);
        }
    }

    fn apply_into(&self, f: &[f64], scratch: &mut [f64], out: &mut [f64]) {
        for ((s, w), x) in scratch.iter_mut().zip(&self.weights).zip(f) {
            *s = w * x;
        }
        self.matvec(scratch, out);
        for o in out.iter_mut() {
            *o *= self.scale;
        }
    }

    /// `(T f)_i = Σ_j K_ij w_j f_j`.
    pub fn apply(&self, f: &[f64]) -> Result<Vec<f64>> {
        self.check_len(f)?;
        let mut scratch = vec![0.0; self.m];
        let mut out = vec![0.0; self.m];
        self.apply_into(f, &mut scratch, &mut out);
        Ok(out)
    }

    /// `(T 1)_i`, the expected number of children of a type-`i` individual.
    pub fn row_sums(&self) -> Vec<f64> {
        self.apply(&vec![1.0; self.m]).expect("length matches")
    }

    fn check_len(&self, f: &[f64]) -> Result<()> {
        if f.len() != self.m {
            return Err(Error::LengthMismatch {
                expected: self.m,
                actual: f.len(),
            });
        }
        Ok(())
    }

    /// `⟨f, g⟩_μ`.
    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        self.weights.iter().zip(f).zip(g).map(|((w, a), b)| w * a * b).sum()
    }

    /// `∫ f dμ`.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        self.weights.iter().zip(f).map(|(w, a)| w * a).sum()
    }

    /// `‖T‖` on `L²(μ)`: spectral radius of the symmetric form by power
    /// iteration from a seeded random positive vector. Stops when the relative
    /// change of `sqrt(⟨Sv, Sv⟩ / ⟨v, v⟩)` falls below `tol`.
    pub fn operator_norm(&self, tol: f64) -> Result<f64> {
        if !(tol > 0.0) {
            return Err(Error::invalid("tol", "tolerance must be positive"));
        }
        let mut start = rng::stream(0, Purpose::PowerStart, self.m as u64);
        let mut v: Vec<f64> = (0..self.m).map(|_| 0.5 + start.random::<f64>()).collect();
        let mut scratch = vec![0.0; self.m];
        let mut sv = vec![0.0; self.m];
        let mut last = f64::NAN;
        for _ in 0..POWER_ITERATION_CAP {
            for ((s, r), x) in scratch.iter_mut().zip(&self.sqrt_weights).zip(&v) {
                *s = r * x;
            }
            self.matvec(&scratch, &mut sv);
            for (y, r) in sv.iter_mut().zip(&self.sqrt_weights) {
                *y *= r;
            }
            let vv: f64 = v.iter().map(|x| x * x).sum();
            let ss: f64 = sv.iter().map(|x| x * x).sum();
            if ss == 0.0 {
                return Ok(0.0);
            }
            let est = (ss / vv).sqrt();
            let norm = ss.sqrt();
            for (x, y) in v.iter_mut().zip(&sv) {
                *x = y / norm;
            }
            if (est - last).abs() <= tol * est {
                return Ok(self.scale * est);
            }
            last = est;
        }
        Err(Error::NoConvergence {
            what: "power iteration",
            iterations: POWER_ITERATION_CAP,
            last: self.scale * last,
        })
    }

    /// `χ = μ(S)⁻¹ Σ_j ⟨Tʲ1, 1⟩_μ`.
    ///
    /// Stops once the term ratio has settled below 1 and the geometric tail
    /// estimate is below `tol`, or after [`DIVERGENCE_RUN`] consecutive
    /// ratios `≥ 1`.
    pub fn susceptibility_series(&self, tol: f64, j_max: usize) -> SeriesResult {
        let mass = self.total_mass;
        let mut g = vec![1.0; self.m];
        let mut next = vec![0.0; self.m];
        let mut scratch = vec![0.0; self.m];
        let mut terms = vec![self.integrate(&g)];
        let mut sum = terms[0];
        let mut prev_ratio = f64::NAN;
        let mut run_ge_one = 0;
        let finish = |terms: Vec<f64>, value, reason, ratio: f64, tail| SeriesResult {
            j_stop: terms.len() - 1,
            value,
            terms,
            reason,
            last_ratio: ratio,
            tail,
            near_critical: (ratio - 1.0).abs() <= CRITICAL_BAND,
        };
        if terms[0] == 0.0 {
            return finish(terms, Some(0.0), StopReason::Converged, 0.0, 0.0);
        }
        for _ in 1..=j_max {
            self.apply_into(&g, &mut scratch, &mut next);
            std::mem::swap(&mut g, &mut next);
            let t = self.integrate(&g);
            let t_prev = *terms.last().expect("non-empty");
            terms.push(t);
            sum += t;
            if !t.is_finite() {
                return finish(terms, None, StopReason::RatioGeOne, f64::INFINITY, 0.0);
            }
            if t == 0.0 {
                return finish(terms, Some(sum / mass), StopReason::Converged, 0.0, 0.0);
            }
            let r = t / t_prev;
            if r >= 1.0 {
                run_ge_one += 1;
                if run_ge_one >= DIVERGENCE_RUN {
                    return finish(terms, None, StopReason::RatioGeOne, r, 0.0);
                }
            } else {
                run_ge_one = 0;
                let settled = (r - prev_ratio).abs() <= 1e-3 * (1.0 - r);
                let tail = t * r / (1.0 - r) / mass;
                if settled && tail < tol {
                    return finish(terms, Some(sum / mass + tail), StopReason::Converged, r, tail);
                }
            }
            prev_ratio = r;
        }
        finish(terms, Some(sum / mass), StopReason::JMaxHit, prev_ratio, 0.0)
    }

    /// Convergence status of the series in [`Self::susceptibility_series`]
    /// by the ratio test alone: `true` once the term ratio has settled below
    /// 1, `false` after [`DIVERGENCE_RUN`] consecutive ratios `≥ 1`. An
    /// exhausted run is judged by its last ratio.
    pub fn series_converges(&self, j_max: usize) -> bool {
        let mut g = vec![1.0; self.m];
        let mut next = vec![0.0; self.m];
        let mut scratch = vec![0.0; self.m];
        let mut t_prev = self.integrate(&g);
        if t_prev == 0.0 {
            return true;
        }
        let mut prev_ratio = f64::NAN;
        let mut run_ge_one = 0;
        for _ in 1..=j_max {
            self.apply_into(&g, &mut scratch, &mut next);
            std::mem::swap(&mut g, &mut next);
            let t = self.integrate(&g);
            if !t.is_finite() {
                return false;
            }
            if t == 0.0 {
                return true;
            }
            let r = t / t_prev;
            if r >= 1.0 {
                run_ge_one += 1;
                if run_ge_one >= DIVERGENCE_RUN {
                    return false;
                }
            } else {
                run_ge_one = 0;
                if (r - prev_ratio).abs() <= 1e-3 * (1.0 - r) {
                    return true;
                }
            }
            prev_ratio = r;
            t_prev = t;
        }
        prev_ratio < 1.0
    }

    /// `sus(κ; x_i) = Σ_j (Tʲ1)_i`, the minimal solution of `f = T f + 1`,
    /// by the monotone iteration `f ← T f + 1` from `f = 0`.
    pub fn susceptibility_pointwise(&self, tol: f64, j_max: usize) -> Result<Vec<f64>> {
        self.minimal_solution(tol, j_max, |_| {})
    }

    /// As [`Self::susceptibility_pointwise`], calling `observe` on every iterate.
    ///
    /// The increment after `j` steps is `Tʲ1`, so divergence is judged on the
    /// ratio of its integrals exactly as in the series. Convergence needs the
    /// geometric tail of the largest relative increment below `tol`.
    pub fn minimal_solution(&self, tol: f64, j_max: usize, mut observe: impl FnMut(&[f64])) -> Result<Vec<f64>> {
        let mut f = vec![0.0; self.m];
        let mut tf = vec![0.0; self.m];
        let mut inc = vec![0.0; self.m];
        let mut scratch = vec![0.0; self.m];
        let mut prev_term = f64::NAN;
        let mut prev_ratio = f64::NAN;
        let mut run_ge_one = 0;
        observe(&f);
        for _ in 0..j_max {
            self.apply_into(&f, &mut scratch, &mut tf);
            let mut rel_step: f64 = 0.0;
            for ((x, t), d) in f.iter_mut().zip(&tf).zip(inc.iter_mut()) {
                let new = t + 1.0;
                *d = new - *x;
                rel_step = rel_step.max(*d / new);
                *x = new;
            }
            let term = self.integrate(&inc);
            if !term.is_finite() {
                return Err(Error::Diverged { what: "minimal solution" });
            }
            if rel_step == 0.0 || term == 0.0 {
                observe(&f);
                return Ok(f);
            }
            let r = term / prev_term;
            if r >= 1.0 {
                run_ge_one += 1;
                if run_ge_one >= DIVERGENCE_RUN {
                    return Err(Error::Diverged { what: "minimal solution" });
                }
            } else if r < 1.0 {
                run_ge_one = 0;
                let settled = (r - prev_ratio).abs() <= 1e-3 * (1.0 - r);
                if settled && rel_step * r / (1.0 - r) < tol {
                    observe(&f);
                    // remaining increments are geometric along the last one
                    let q = r / (1.0 - r);
                    for (x, d) in f.iter_mut().zip(&inc) {
                        *x += q * d;
                    }
                    return Ok(f);
                }
            }
            observe(&f);
            prev_ratio = r;
            prev_term = term;
        }
        Err(Error::NoConvergence {
            what: "minimal solution",
            iterations: j_max,
            last: prev_term,
        })
    }

    /// Solve `(I − K diag(w)) f = 1` directly. Refused unless `‖T‖ < 1`,
    /// since otherwise the solution is not the minimal one.
    pub fn solve_linear(&self) -> Result<Vec<f64>> {
        let norm = self.operator_norm(1e-12)?;
        if norm >= 1.0 {
            return Err(Error::NotSubcritical { norm });
        }
        self.solve_unchecked()
    }

    pub(crate) fn solve_unchecked(&self) -> Result<Vec<f64>> {
        let a = DMatrix::from_fn(self.m, self.m, |i, j| {
            let d = if i == j { 1.0 } else { 0.0 };
            d - self.entry(i, j) * self.weights[j]
        });
        let b = DVector::from_element(self.m, 1.0);
        let f = a.lu().solve(&b).ok_or(Error::Singular)?;
        if let Some(bad) = f.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                location: "linear solve".to_owned(),
                value: *bad,
            });
        }
        Ok(f.iter().copied().collect())
    }

    /// Check `f ≥ T f + 1` componentwise.
    pub fn verify_supersolution(&self, f: &[f64]) -> Result<SupersolutionReport> {
        let tf = self.apply(f)?;
        let (argmin, min_residual) = f
            .iter()
            .zip(&tf)
            .map(|(a, t)| a - (t + 1.0))
            .enumerate()
            .fold((0, f64::INFINITY), |best, (i, r)| if r < best.1 { (i, r) } else { best });
        Ok(SupersolutionReport {
            min_residual,
            argmin,
            certifies_finite: min_residual >= 0.0,
        })
    }
}

/// `λ_c = 1 / ‖T_κ‖` on the given mesh.
pub fn critical_lambda_norm(kernel: &Kernel, ts: &TypeSpace) -> Result<f64> {
    let norm = DiscreteOperator::discretize(kernel, ts)?.operator_norm(1e-12)?;
    if norm == 0.0 {
        return Err(Error::invalid("kernel", "zero operator has no critical point"));
    }
    Ok(1.0 / norm)
}

/// Iteration cap used when classifying `λ` as sub- or supercritical.
pub const SOLVABILITY_J_MAX: usize = 20_000;

/// `λ_c` as the point where `f = 1 + λ T f` stops having a finite
/// non-negative solution, located by bisection on the series status.
pub fn critical_lambda_solvability(kernel: &Kernel, ts: &TypeSpace, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    if !(lo > 0.0 && lo < hi) {
        return Err(Error::invalid("bracket", format!("need 0 < lo < hi, got [{lo}, {hi}]")));
    }
    if !(tol > 0.0) {
        return Err(Error::invalid("tol", "tolerance must be positive"));
    }
    let op = DiscreteOperator::discretize(kernel, ts)?;
    let subcritical = |lambda: f64| op.scaled(lambda).series_converges(SOLVABILITY_J_MAX);
    if !subcritical(lo) {
        return Err(Error::invalid("lo", format!("{lo} is not subcritical")));
    }
    if subcritical(hi) {
        return Err(Error::invalid("hi", format!("{hi} is not supercritical")));
    }
    let (mut a, mut b) = (lo, hi);
    while b - a > tol {
        let mid = 0.5 * (a + b);
        if subcritical(mid) {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(0.5 * (a + b))
}
