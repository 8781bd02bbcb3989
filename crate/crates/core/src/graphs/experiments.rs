//! Replicated experiments comparing finite graphs with the limit objects.

use rayon::prelude::*;
use serde::Serialize;

use super::{components, sample_graph, EdgeRule, Strategy, VertexSpec};
use crate::branching::{modified_susceptibility, rho_k_pointwise};
use crate::operator::DiscreteOperator;
use crate::rng::child_seed;
use crate::{Kernel, Result, TypeSpace};

/// Run `f(child_seed(seed, r))` for `r = 0..reps` in parallel; results come
/// back in replicate order.
pub fn replicate<T: Send>(reps: usize, seed: u64, f: impl Fn(u64) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    (0..reps as u64).into_par_iter().map(|r| f(child_seed(seed, r))).collect()
}

/// Sample mean and standard error of the mean.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[derive(Clone, Debug, Serialize)]
pub struct NkRow {
    pub n: usize,
    pub k: usize,
    pub mean: f64,
    pub se: f64,
    pub predicted: f64,
    pub gap: f64,
}

/// `N_k(G_n)/n` over replicates against `ρ_k(κ)` computed on `mesh`.
#[allow(clippy::too_many_arguments)]
pub fn empirical_nk_convergence(
    kernel: &Kernel,
    vs: &VertexSpec,
    lambda: f64,
    n_list: &[usize],
    reps: usize,
    k_max: usize,
    seed: u64,
    rule: EdgeRule,
    mesh: &TypeSpace,
) -> Result<Vec<NkRow>> {
    let op = DiscreteOperator::discretize(&kernel.scaled(lambda), mesh)?;
    let table = rho_k_pointwise(&op, k_max)?;
    let mass = op.total_mass();
    let mut rows = Vec::new();
    for (i, &n) in n_list.iter().enumerate() {
        let fractions = replicate(reps, child_seed(seed, i as u64), |s| {
            let g = sample_graph(kernel, vs, n, lambda, rule, s, Strategy::Auto)?;
            let c = components(&g);
            Ok((1..=k_max).map(|k| c.fraction_in_size(k)).collect::<Vec<_>>())
        })?;
        for k in 1..=k_max {
            let xs: Vec<f64> = fractions.iter().map(|f| f[k - 1]).collect();
            let (mean, se) = mean_se(&xs);
            let predicted = table.totals[k - 1] / mass;
            rows.push(NkRow {
                n,
                k,
                mean,
                se,
                predicted,
                gap: mean - predicted,
            });
        }
    }
    Ok(rows)
}

#[derive(Clone, Debug, Serialize)]
pub struct PlantRow {
    pub n: usize,
    pub rep: usize,
    pub planted_count: usize,
    pub chi: f64,
    /// Same kernel and base space without planted atoms.
    pub chi_control: f64,
    /// `n^{0.4}`.
    pub bound: f64,
}

/// Graphs with `⌊n^{3/4}⌋` vertices at each of two types `a`, `b` with
/// `λκ(a, b) > n`, next to unplanted controls.
#[allow(clippy::too_many_arguments)]
pub fn plant_atoms_experiment(
    kernel: &Kernel,
    lambda: f64,
    base: &TypeSpace,
    a: f64,
    b: f64,
    n_list: &[usize],
    reps: usize,
    seed: u64,
) -> Result<Vec<PlantRow>> {
    let planted = VertexSpec::PlantedAtoms {
        base: base.clone(),
        a,
        b,
    };
    let control = VertexSpec::Iid(base.clone());
    let mut rows = Vec::new();
    for (i, &n) in n_list.iter().enumerate() {
        let pairs = replicate(reps, child_seed(seed, i as u64), |s| {
            let g = sample_graph(kernel, &planted, n, lambda, EdgeRule::Clip, s, Strategy::Auto)?;
            let h = sample_graph(kernel, &control, n, lambda, EdgeRule::Clip, s, Strategy::Auto)?;
            Ok((components(&g).chi, components(&h).chi))
        })?;
        for (rep, (chi, chi_control)) in pairs.into_iter().enumerate() {
            rows.push(PlantRow {
                n,
                rep,
                planted_count: super::planted_count(n),
                chi,
                chi_control,
                bound: (n as f64).powf(0.4),
            });
        }
    }
    Ok(rows)
}

#[derive(Clone, Debug, Serialize)]
pub struct ScanRow {
    pub lambda: f64,
    pub n: usize,
    pub rep_count: usize,
    pub mean_chi: f64,
    pub se_chi: f64,
    pub mean_chi_hat: f64,
    pub se_chi_hat: f64,
    pub pred_chi: Option<f64>,
    pub pred_chi_hat: Option<f64>,
    pub status: String,
}

impl ScanRow {
    pub const CSV_HEADER: &'static str =
        "lambda,n,rep_count,mean_chi,se_chi,mean_chi_hat,se_chi_hat,pred_chi,pred_chi_hat,status";

    pub fn csv_line(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(|| "inf".to_owned(), |x| x.to_string());
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.lambda,
            self.n,
            self.rep_count,
            self.mean_chi,
            self.se_chi,
            self.mean_chi_hat,
            self.se_chi_hat,
            opt(self.pred_chi),
            opt(self.pred_chi_hat),
            self.status
        )
    }
}

/// Empirical `χ` and `χ̂` over a `λ` grid, beside the operator predictions
/// on `mesh`. Each `λ` is a fixed parameter; `λ_n → λ_c` limits are not
/// covered.
#[allow(clippy::too_many_arguments)]
pub fn scan(
    kernel: &Kernel,
    vs: &VertexSpec,
    mesh: &TypeSpace,
    grid: &[f64],
    n: usize,
    reps: usize,
    seed: u64,
    rule: EdgeRule,
) -> Result<Vec<ScanRow>> {
    let base = DiscreteOperator::discretize(kernel, mesh)?;
    grid.iter()
        .enumerate()
        .map(|(i, &lambda)| {
            let stats = replicate(reps, child_seed(seed, i as u64), |s| {
                let g = sample_graph(kernel, vs, n, lambda, rule, s, Strategy::Auto)?;
                let c = components(&g);
                Ok((c.chi, c.chi_hat))
            })?;
            let chis: Vec<f64> = stats.iter().map(|s| s.0).collect();
            let hats: Vec<f64> = stats.iter().map(|s| s.1).collect();
            let (mean_chi, se_chi) = mean_se(&chis);
            let (mean_chi_hat, se_chi_hat) = mean_se(&hats);
            let pred = modified_susceptibility(&base.scaled(lambda), 1e-10)?;
            let status = if pred
                .flags
                .contains(&crate::branching::Flag::AtCriticalityMeshLimited)
            {
                "near_critical"
            } else if pred.norm < 1.0 {
                "subcritical"
            } else {
                "supercritical"
            };
            Ok(ScanRow {
                lambda,
                n,
                rep_count: reps,
                mean_chi,
                se_chi,
                mean_chi_hat,
                se_chi_hat,
                pred_chi: pred.chi,
                pred_chi_hat: pred.chi_hat,
                status: status.to_owned(),
            })
        })
        .collect()
}
