//! The multi-type Poisson branching process `X_κ(x)` driven by a
//! discretized operator: survival probabilities, the dual operator,
//! the modified susceptibility, the laws `ρ_k`, and Monte Carlo.

use std::collections::VecDeque;

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::Serialize;

use crate::operator::{DiscreteOperator, CRITICAL_BAND};
use crate::rng::{self, Purpose};
use crate::{Error, Result};

/// Largest `k` accepted by [`rho_k_pointwise`].
pub const K_MAX_GUARD: usize = 40;

/// Above this size the dual equation is solved by iteration instead of LU.
pub const DENSE_SOLVE_LIMIT: usize = 2500;

/// Tolerance for the agreement of the two `χ̂` routes.
pub const LSUSQ_TOL: f64 = 1e-8;

/// Maximal solution of `f = 1 − exp(−T f)` together with diagnostics.
#[derive(Clone, Debug, Serialize)]
pub struct Survival {
    pub rho: Vec<f64>,
    pub iterations: usize,
    pub last_step: f64,
}

/// Iterate `f ← 1 − exp(−T f)` from `f ≡ 1` until the sup-norm step is
/// below `tol`. The iterates decrease monotonically to the maximal solution.
pub fn survival_probability(op: &DiscreteOperator, tol: f64, max_iter: usize) -> Result<Survival> {
    survival_observed(op, tol, max_iter, |_| {})
}

/// As [`survival_probability`], calling `observe` on every iterate.
pub fn survival_observed(
    op: &DiscreteOperator,
    tol: f64,
    max_iter: usize,
    mut observe: impl FnMut(&[f64]),
) -> Result<Survival> {
    if !(tol > 0.0) {
        return Err(Error::invalid("tol", "tolerance must be positive"));
    }
    let mut f = vec![1.0; op.len()];
    observe(&f);
    let mut last_step = f64::INFINITY;
    for it in 1..=max_iter {
        let tf = op.apply(&f)?;
        let mut step: f64 = 0.0;
        for (x, t) in f.iter_mut().zip(&tf) {
            let new = -(-t).exp_m1();
            step = step.max((*x - new).abs());
            *x = new;
        }
        observe(&f);
        last_step = step;
        if step < tol {
            return Ok(Survival {
                rho: f,
                iterations: it,
                last_step,
            });
        }
    }
    Err(Error::NoConvergence {
        what: "survival probability",
        iterations: max_iter,
        last: last_step,
    })
}

/// `T_κ̃`: the same kernel on `dμ̃ = (1 − ρ) dμ`.
pub fn dual_operator(op: &DiscreteOperator, rho: &[f64]) -> Result<DiscreteOperator> {
    if rho.len() != op.len() {
        return Err(Error::LengthMismatch {
            expected: op.len(),
            actual: rho.len(),
        });
    }
    if let Some(bad) = rho.iter().find(|r| !(0.0..=1.0).contains(*r)) {
        return Err(Error::invalid("rho", format!("survival probability {bad} outside [0, 1]")));
    }
    op.with_weights(op.weights().iter().zip(rho).map(|(w, r)| w * (1.0 - r)).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Flag {
    Subcritical,
    Supercritical,
    /// `‖T‖` within [`CRITICAL_BAND`] of 1: values are limited by the mesh.
    AtCriticalityMeshLimited,
    /// `‖T_κ̃‖ ≥ 1 − CRITICAL_BAND`; `χ̂` is not reported.
    DualCritical,
    SurvivalNotConverged,
    /// The two `χ̂` routes differ by more than [`LSUSQ_TOL`].
    LsusqMismatch,
    /// Supercritical `χ̂` is reported without checking compactness of `T`.
    CompactnessAssumed,
    /// The dual equation was solved by iteration rather than LU.
    IterativeDualSolve,
}

#[derive(Clone, Debug, Serialize)]
pub struct BranchingResult {
    pub rho: Vec<f64>,
    /// `ρ(κ) = ∫ρ dμ`.
    pub rho_total: f64,
    pub norm: f64,
    pub dual_norm: f64,
    /// `χ(κ)`; `None` when infinite.
    pub chi: Option<f64>,
    /// `χ̂ = μ(S)⁻¹ ⟨(I − T_κ̃)⁻¹ 1, 1⟩_μ̃`.
    pub chi_hat: Option<f64>,
    /// `(1 − ρ(κ)/μ(S)) · χ(κ̃′)` from the series on the renormalized dual.
    pub chi_hat_series: Option<f64>,
    /// Relative gap between the two `χ̂` routes.
    pub lsusq_gap: Option<f64>,
    pub iterations: usize,
    pub flags: Vec<Flag>,
}

/// Survival probability, dual operator and `χ̂` in one pass, with the
/// series route on the renormalized dual as an independent check.
pub fn modified_susceptibility(op: &DiscreteOperator, tol: f64) -> Result<BranchingResult> {
    let mass = op.total_mass();
    let norm = op.operator_norm(1e-12)?;
    let mut flags = Vec::new();
    if (norm - 1.0).abs() <= CRITICAL_BAND {
        flags.push(Flag::AtCriticalityMeshLimited);
    }
    let (rho, iterations) = if norm <= 1.0 {
        flags.push(Flag::Subcritical);
        (vec![0.0; op.len()], 0)
    } else {
        flags.push(Flag::Supercritical);
        flags.push(Flag::CompactnessAssumed);
        match survival_probability(op, tol.min(1e-13), 1_000_000) {
            Ok(s) => (s.rho, s.iterations),
            Err(Error::NoConvergence { iterations, .. }) => {
                flags.push(Flag::SurvivalNotConverged);
                let s = survival_probability(op, f64::INFINITY, iterations)?;
                (s.rho, s.iterations)
            }
            Err(e) => return Err(e),
        }
    };
    let rho_total = op.integrate(&rho);
    let dual = dual_operator(op, &rho)?;
    let dual_norm = if norm <= 1.0 { norm } else { dual.operator_norm(1e-12)? };

    let series_tol = tol.min(1e-12);
    let chi = if norm < 1.0 {
        op.susceptibility_series(series_tol, 1_000_000).value
    } else {
        None
    };

    let mut chi_hat = None;
    let mut chi_hat_series = None;
    let mut lsusq_gap = None;
    if dual_norm >= 1.0 - CRITICAL_BAND {
        flags.push(Flag::DualCritical);
    } else {
        let f = if dual.len() <= DENSE_SOLVE_LIMIT {
            dual.solve_unchecked()?
        } else {
            flags.push(Flag::IterativeDualSolve);
            dual.susceptibility_pointwise(series_tol, 1_000_000)?
        };
        let solve = dual.integrate(&f) / mass;
        // χ(κ̃′) lives on the probability space μ̃/μ̃(S) with kernel μ̃(S)κ
        let dual_mass = dual.total_mass();
        let renormalized = dual
            .with_weights(dual.weights().iter().map(|w| w / dual_mass).collect())?
            .scaled(dual_mass);
        let series = renormalized.susceptibility_series(series_tol, 1_000_000);
        if let Some(s) = series.value.filter(|_| series.is_subcritical()) {
            let via_series = dual_mass / mass * s;
            let gap = (solve - via_series).abs() / solve.abs().max(f64::MIN_POSITIVE);
            if gap > LSUSQ_TOL {
                flags.push(Flag::LsusqMismatch);
            }
            chi_hat_series = Some(via_series);
            lsusq_gap = Some(gap);
        }
        chi_hat = Some(solve);
    }

    Ok(BranchingResult {
        rho,
        rho_total,
        norm,
        dual_norm,
        chi,
        chi_hat,
        chi_hat_series,
        lsusq_gap,
        iterations,
        flags,
    })
}

/// `ρ_k(κ; x_i)` for `k = 1..=k_max` and their integrals `ρ_k(κ)`.
#[derive(Clone, Debug, Serialize)]
pub struct RhoKTable {
    pub k_max: usize,
    /// `pointwise[k − 1][i] = ρ_k(κ; x_i)`.
    pub pointwise: Vec<Vec<f64>>,
    /// `totals[k − 1] = ∫ρ_k dμ`.
    pub totals: Vec<f64>,
}

/// `ρ₁ = exp(−T1)` and, for `k ≥ 2`,
/// `ρ_k = ρ₁ Σ_{partitions 1^{m₁}2^{m₂}… of k−1} Π_j (Tρ_j)^{m_j}/m_j!`.
pub fn rho_k_pointwise(op: &DiscreteOperator, k_max: usize) -> Result<RhoKTable> {
    if k_max == 0 || k_max > K_MAX_GUARD {
        return Err(Error::invalid("k_max", format!("must lie in 1..={K_MAX_GUARD}, got {k_max}")));
    }
    let m = op.len();
    let rho1: Vec<f64> = op.row_sums().iter().map(|t| (-t).exp()).collect();
    let mut pointwise = vec![rho1.clone()];
    let mut t_rho = vec![op.apply(&rho1)?];
    for k in 2..=k_max {
        let mut sum = vec![0.0; m];
        partitions(k - 1, k - 1, &vec![1.0; m], &t_rho, &mut sum);
        let rho_k: Vec<f64> = sum.iter().zip(&rho1).map(|(s, r)| s * r).collect();
        if k < k_max {
            t_rho.push(op.apply(&rho_k)?);
        }
        pointwise.push(rho_k);
    }
    let totals = pointwise.iter().map(|r| op.integrate(r)).collect();
    Ok(RhoKTable {
        k_max,
        pointwise,
        totals,
    })
}

/// Add `acc · Σ Π (Tρ_s)^c / c!` over partitions of `remaining` into parts
/// of size at most `max_part`, each size used with multiplicity `c ≥ 1`.
fn partitions(remaining: usize, max_part: usize, acc: &[f64], t_rho: &[Vec<f64>], out: &mut [f64]) {
    if remaining == 0 {
        for (o, a) in out.iter_mut().zip(acc) {
            *o += a;
        }
        return;
    }
    for s in (1..=max_part.min(remaining)).rev() {
        let ts = &t_rho[s - 1];
        let mut prod = acc.to_vec();
        for c in 1..=remaining / s {
            for (p, t) in prod.iter_mut().zip(ts) {
                *p *= t / c as f64;
            }
            partitions(remaining - c * s, s - 1, &prod, t_rho, out);
        }
    }
}

/// Where the root of a simulated process sits.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Root {
    Type(usize),
    /// Drawn from `μ/μ(S)`.
    Random,
}

/// Total progeny of one run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Progeny {
    pub size: u64,
    pub cap_hit: bool,
}

/// Precomputed offspring laws: `Poisson((T1)_i)` children, typed by the
/// row distribution `K_ij w_j / (T1)_i`.
pub struct BranchingSampler {
    m: usize,
    offspring: Vec<Option<Poisson<f64>>>,
    cumulative: Vec<f64>,
    root_cumulative: Vec<f64>,
}

impl BranchingSampler {
    pub fn new(op: &DiscreteOperator) -> Result<Self> {
        let m = op.len();
        let mut cumulative = vec![0.0; m * m];
        let mut offspring = Vec::with_capacity(m);
        for (i, row) in cumulative.chunks_mut(m).enumerate() {
            let mut acc = 0.0;
            for (j, c) in row.iter_mut().enumerate() {
                acc += op.entry(i, j) * op.weights()[j];
                *c = acc;
            }
            offspring.push(if acc > 0.0 {
                Some(Poisson::new(acc).map_err(|e| Error::invalid("intensity", e.to_string()))?)
            } else {
                None
            });
        }
        let mut acc = 0.0;
        let root_cumulative = op
            .weights()
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        Ok(BranchingSampler {
            m,
            offspring,
            cumulative,
            root_cumulative,
        })
    }

    fn pick(cumulative: &[f64], u: f64) -> usize {
        let target = u * cumulative[cumulative.len() - 1];
        cumulative.partition_point(|&c| c <= target).min(cumulative.len() - 1)
    }

    /// Breadth-first generation until extinction or `cap` individuals.
    pub fn run<R: Rng + ?Sized>(&self, root: Root, cap: u64, rng: &mut R) -> Progeny {
        let root = match root {
            Root::Type(i) => i,
            Root::Random if self.m == 1 => 0,
            Root::Random => Self::pick(&self.root_cumulative, rng.random()),
        };
        let mut queue = VecDeque::from([root]);
        let mut size = 1u64;
        while let Some(i) = queue.pop_front() {
            let Some(law) = &self.offspring[i] else { continue };
            let children = law.sample(rng) as u64;
            if size + children >= cap {
                return Progeny { size: cap, cap_hit: true };
            }
            size += children;
            let row = &self.cumulative[i * self.m..(i + 1) * self.m];
            for _ in 0..children {
                queue.push_back(if self.m == 1 { 0 } else { Self::pick(row, rng.random()) });
            }
        }
        Progeny { size, cap_hit: false }
    }
}

/// One run of the process; see [`BranchingSampler::run`].
pub fn simulate_branching(op: &DiscreteOperator, root: Root, cap: u64, seed: u64) -> Result<Progeny> {
    if cap == 0 {
        return Err(Error::invalid("cap", "cap must be at least 1"));
    }
    if let Root::Type(i) = root {
        if i >= op.len() {
            return Err(Error::invalid("root", format!("type index {i} out of range")));
        }
    }
    let sampler = BranchingSampler::new(op)?;
    Ok(sampler.run(root, cap, &mut rng::stream(seed, Purpose::BranchingRun, 0)))
}

/// Sizes tabulated exactly in [`McEstimate::histogram`].
pub const HISTOGRAM_LEN: usize = 64;

#[derive(Clone, Debug, Serialize)]
pub struct McEstimate {
    pub n_runs: u64,
    pub cap: u64,
    /// Mean of `min(|X|, cap)`, an estimate of `χ` when subcritical.
    pub mean_capped: f64,
    pub se_capped: f64,
    /// Mean of `|X|` over runs that died out: `E(|X| | |X| < ∞)`.
    pub mean_on_finite: f64,
    pub se_on_finite: f64,
    /// Fraction of runs reaching the cap, an estimate of `ρ(κ)/μ(S)`.
    pub frac_cap_hit: f64,
    pub se_frac_cap_hit: f64,
    /// `E(|X|; |X| < ∞)`, an estimate of `χ̂` biased by the cap.
    pub chi_hat: f64,
    pub se_chi_hat: f64,
    /// `histogram[k − 1]` runs with total progeny exactly `k`.
    pub histogram: Vec<u64>,
}

impl McEstimate {
    /// Empirical `P(|X| = k)` and its standard error.
    pub fn p_k(&self, k: usize) -> (f64, f64) {
        let n = self.n_runs as f64;
        let p = self.histogram.get(k.wrapping_sub(1)).copied().unwrap_or(0) as f64 / n;
        (p, (p * (1.0 - p) / n).sqrt())
    }
}

/// Independent runs with roots drawn from `μ/μ(S)`; run `r` uses its own
/// stream, so the estimate does not depend on thread scheduling.
pub fn mc_susceptibility(op: &DiscreteOperator, n_runs: u64, cap: u64, seed: u64) -> Result<McEstimate> {
    if n_runs == 0 {
        return Err(Error::invalid("n_runs", "need at least one run"));
    }
    if cap == 0 {
        return Err(Error::invalid("cap", "cap must be at least 1"));
    }
    let sampler = BranchingSampler::new(op)?;
    let runs: Vec<Progeny> = (0..n_runs)
        .into_par_iter()
        .map(|r| sampler.run(Root::Random, cap, &mut rng::stream(seed, Purpose::BranchingRun, r)))
        .collect();

    let mut histogram = vec![0u64; HISTOGRAM_LEN];
    let (mut s1, mut s2) = (0u128, 0u128);
    let (mut f1, mut f2, mut finite) = (0u128, 0u128, 0u64);
    for p in &runs {
        let x = p.size as u128;
        s1 += x;
        s2 += x * x;
        if !p.cap_hit {
            finite += 1;
            f1 += x;
            f2 += x * x;
            if let Some(h) = histogram.get_mut(p.size as usize - 1) {
                *h += 1;
            }
        }
    }
    let n = n_runs as f64;
    let mean_se = |s1: u128, s2: u128, count: f64| -> (f64, f64) {
        if count == 0.0 {
            return (f64::NAN, f64::NAN);
        }
        let mean = s1 as f64 / count;
        let var = (s2 as f64 / count - mean * mean).max(0.0) * count / (count - 1.0).max(1.0);
        (mean, (var / count).sqrt())
    };
    let (mean_capped, se_capped) = mean_se(s1, s2, n);
    let (mean_on_finite, se_on_finite) = mean_se(f1, f2, finite as f64);
    // per-run contribution |X|·1{finite}
    let (chi_hat, se_chi_hat) = mean_se(f1, f2, n);
    let frac = (n_runs - finite) as f64 / n;
    Ok(McEstimate {
        n_runs,
        cap,
        mean_capped,
        se_capped,
        mean_on_finite,
        se_on_finite,
        frac_cap_hit: frac,
        se_frac_cap_hit: (frac * (1.0 - frac) / n).sqrt(),
        chi_hat,
        se_chi_hat,
        histogram,
    })
}
