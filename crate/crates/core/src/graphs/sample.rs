//! Samplers for `G(n, κ)` and the CHKNS family.

use rand::seq::index;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::Serialize;

use crate::kernels::Shape;
use crate::rng::{self, Purpose};
use crate::{Error, Kernel, Result, TypeSpace};

/// How an intensity `λκ(x, y)/n` becomes an edge probability.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeRule {
    /// `min(λκ/n, 1)`.
    #[default]
    Clip,
    /// `1 − exp(−λκ/n)`.
    Exponential,
}

impl EdgeRule {
    #[inline]
    pub fn probability(self, intensity: f64) -> f64 {
        match self {
            EdgeRule::Clip => intensity.min(1.0),
            EdgeRule::Exponential => -(-intensity).exp_m1(),
        }
    }
}

impl std::str::FromStr for EdgeRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "clip" => Ok(EdgeRule::Clip),
            "exponential" | "exp" => Ok(EdgeRule::Exponential),
            _ => Err(Error::parse("edge rule", s, "expected clip | exponential")),
        }
    }
}

/// Which edge sampler to run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// The structured sampler for the kernel's shape.
    #[default]
    Auto,
    /// One Bernoulli trial per pair.
    Naive,
    /// Same as `Auto`; named for explicit comparisons with `Naive`.
    Skip,
}

/// How the `n` vertex types are produced.
#[derive(Clone, Debug)]
pub enum VertexSpec {
    /// i.i.d. from `μ/μ(S)`.
    Iid(TypeSpace),
    /// `x_i = i/n`.
    Grid,
    /// `⌊n^{3/4}⌋` vertices of type `a`, as many of type `b`, the rest i.i.d.
    PlantedAtoms { base: TypeSpace, a: f64, b: f64 },
}

/// `⌊n^{3/4}⌋`, computed exactly.
pub fn planted_count(n: usize) -> usize {
    let n3 = (n as u128).pow(3);
    let mut c = (n as f64).powf(0.75) as u128;
    while c.pow(4) > n3 {
        c -= 1;
    }
    while (c + 1).pow(4) <= n3 {
        c += 1;
    }
    c as usize
}

impl VertexSpec {
    pub fn types(&self, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = rng::stream(seed, Purpose::Types, 0);
        match self {
            VertexSpec::Iid(ts) => (0..n).map(|_| ts.sample_type(&mut rng)).collect(),
            VertexSpec::Grid => (1..=n).map(|i| i as f64 / n as f64).collect(),
            VertexSpec::PlantedAtoms { base, a, b } => {
                let c = planted_count(n).min(n / 2);
                let mut t = Vec::with_capacity(n);
                t.extend(std::iter::repeat_n(*a, c));
                t.extend(std::iter::repeat_n(*b, c));
                t.extend((2 * c..n).map(|_| base.sample_type(&mut rng)));
                t
            }
        }
    }

    pub fn describe(&self) -> String {
        match self {
            VertexSpec::Iid(ts) => format!("iid from {}", ts.description()),
            VertexSpec::Grid => "grid x_i = i/n".to_owned(),
            VertexSpec::PlantedAtoms { base, a, b } => {
                format!("planted atoms a={a} b={b} over iid from {}", base.description())
            }
        }
    }
}

/// One realization of a random graph. Edges are `(i, j)` with `i < j`,
/// 0-based, sorted and free of duplicates.
#[derive(Clone, Debug, Serialize)]
pub struct GraphSample {
    pub n: usize,
    pub types: Vec<f64>,
    pub edges: Vec<(u32, u32)>,
    pub seed: u64,
    pub edge_rule: EdgeRule,
    pub model: String,
    pub sampler: &'static str,
}

impl GraphSample {
    pub fn from_edges(n: usize, mut edges: Vec<(u32, u32)>) -> Self {
        for e in edges.iter_mut() {
            if e.0 > e.1 {
                *e = (e.1, e.0);
            }
        }
        edges.retain(|e| e.0 != e.1);
        edges.sort_unstable();
        edges.dedup();
        GraphSample {
            n,
            types: vec![],
            edges,
            seed: 0,
            edge_rule: EdgeRule::Clip,
            model: "explicit".to_owned(),
            sampler: "explicit",
        }
    }

    /// `u,v` lines, 1-based.
    pub fn write_edges_csv<W: std::io::Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "u,v")?;
        for (u, v) in &self.edges {
            writeln!(out, "{},{}", u + 1, v + 1)?;
        }
        Ok(())
    }
}

/// Sample `G(n, λκ)` on the vertex types produced by `vs`.
pub fn sample_graph(
    kernel: &Kernel,
    vs: &VertexSpec,
    n: usize,
    lambda: f64,
    rule: EdgeRule,
    seed: u64,
    strategy: Strategy,
) -> Result<GraphSample> {
    if n == 0 {
        return Err(Error::invalid("n", "need at least one vertex"));
    }
    if u32::try_from(n).is_err() {
        return Err(Error::invalid("n", "vertex count exceeds u32"));
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::invalid("lambda", format!("need lambda >= 0, got {lambda}")));
    }
    if let VertexSpec::PlantedAtoms { a, b, .. } = vs {
        let v = kernel.scaled(lambda).evaluate(*a, *b);
        if !(v > n as f64) {
            return Err(Error::invalid(
                "planted atoms",
                format!("lambda*kappa(a, b) = {v} does not exceed n = {n}"),
            ));
        }
    }
    let types = vs.types(n, seed);
    let k = kernel.scaled(lambda);
    let nf = n as f64;
    let p = |x: f64, y: f64| if lambda == 0.0 { 0.0 } else { rule.probability(k.evaluate(x, y) / nf) };

    let (edges, sampler) = match strategy {
        Strategy::Naive => (naive(&types, &p, seed), "naive"),
        Strategy::Auto | Strategy::Skip => match kernel.shape() {
            Shape::Constant(_) => (blocks(&types, |_| 0, &p, seed), "block_skip"),
            Shape::Finite { .. } => (blocks(&types, |x| x.round() as i64, &p, seed), "block_skip"),
            Shape::Rank1(_) => (rank1_walk(&types, kernel, &p, seed), "rank1_skip"),
            Shape::Chkns | Shape::Dubins | Shape::Max(_) => (max_family(&types, &p, seed)?, "max_binomial"),
        },
    };
    let mut g = GraphSample::from_edges(n, edges);
    g.types = types;
    g.seed = seed;
    g.edge_rule = rule;
    g.model = format!("G(n, {lambda}*{}) on {}", kernel.name(), vs.describe());
    g.sampler = sampler;
    Ok(g)
}

/// One trial per pair; row `j` draws from its own stream so rows run in
/// parallel without changing the result.
fn naive(types: &[f64], p: &(impl Fn(f64, f64) -> f64 + Sync), seed: u64) -> Vec<(u32, u32)> {
    (1..types.len())
        .into_par_iter()
        .flat_map_iter(|j| {
            let mut rng = rng::stream(seed, Purpose::EdgeRow, j as u64);
            let xj = types[j];
            (0..j)
                .filter(|&i| rng.random::<f64>() < p(types[i], xj))
                .map(|i| (i as u32, j as u32))
                .collect::<Vec<_>>()
        })
        .collect()
}

/// Number of failures before the next success of a Bernoulli(`p`) stream.
#[inline]
fn geometric_skip(rng: &mut ChaCha8Rng, log_q: f64) -> u64 {
    let u: f64 = rng.random();
    let s = (-u).ln_1p() / log_q;
    if s >= u64::MAX as f64 {
        u64::MAX
    } else {
        s as u64
    }
}

/// Piecewise-constant kernels: group vertices by `block` key and skip
/// through the pairs of each block with the block's constant probability.
fn blocks(types: &[f64], block: impl Fn(f64) -> i64, p: &impl Fn(f64, f64) -> f64, seed: u64) -> Vec<(u32, u32)> {
    let keys: Vec<i64> = types.iter().map(|&x| block(x)).collect();
    let mut order: Vec<u32> = (0..types.len() as u32).collect();
    order.sort_by_key(|&a| keys[a as usize]);
    let mut groups: Vec<&[u32]> = Vec::new();
    let mut start = 0;
    for i in 1..=order.len() {
        if i == order.len() || keys[order[i] as usize] != keys[order[start] as usize] {
            groups.push(&order[start..i]);
            start = i;
        }
    }
    let mut rng = rng::stream(seed, Purpose::Edges, 0);
    let mut edges = Vec::new();
    for (g, a) in groups.iter().enumerate() {
        for b in &groups[g..] {
            let same = std::ptr::eq(*a, *b);
            let pr = p(types[a[0] as usize], types[b[0] as usize]);
            let total = if same {
                a.len() as u64 * (a.len() as u64).saturating_sub(1) / 2
            } else {
                a.len() as u64 * b.len() as u64
            };
            if pr <= 0.0 || total == 0 {
                continue;
            }
            let mut emit = |t: u64| {
                if same {
                    // t-th pair (r, c), r < c, in the order (0,1), (0,2), (1,2), (0,3), ...
                    let c = ((((8 * t + 1) as f64).sqrt() + 1.0) / 2.0) as u64;
                    let mut c = c.max(1);
                    while c * (c - 1) / 2 > t {
                        c -= 1;
                    }
                    while (c + 1) * c / 2 <= t {
                        c += 1;
                    }
                    let r = t - c * (c - 1) / 2;
                    edges.push((a[r as usize], a[c as usize]));
                } else {
                    let (r, c) = (t / b.len() as u64, t % b.len() as u64);
                    edges.push((a[r as usize], b[c as usize]));
                }
            };
            if pr >= 1.0 {
                (0..total).for_each(&mut emit);
                continue;
            }
            let log_q = (-pr).ln_1p();
            let mut t = geometric_skip(&mut rng, log_q);
            while t < total {
                emit(t);
                t = t.saturating_add(1).saturating_add(geometric_skip(&mut rng, log_q));
            }
        }
    }
    edges
}

/// Rank-1 kernels: visit vertices in decreasing `ψ`; along each row the
/// probability is non-increasing, so geometric skips at the current
/// probability followed by thinning are exact.
fn rank1_walk(types: &[f64], kernel: &Kernel, p: &impl Fn(f64, f64) -> f64, seed: u64) -> Vec<(u32, u32)> {
    let Shape::Rank1(psi) = kernel.shape() else { unreachable!("rank-1 only") };
    let mut order: Vec<u32> = (0..types.len() as u32).collect();
    let w: Vec<f64> = types.iter().map(|&x| psi.eval(x)).collect();
    order.sort_by(|&a, &b| w[b as usize].total_cmp(&w[a as usize]));
    let n = order.len();
    let mut rng = rng::stream(seed, Purpose::Edges, 0);
    let mut edges = Vec::new();
    let ty = |r: usize| types[order[r] as usize];
    for u in 0..n.saturating_sub(1) {
        let mut v = u + 1;
        let mut pr = p(ty(u), ty(v));
        while v < n && pr > 0.0 {
            if pr < 1.0 {
                let skip = geometric_skip(&mut rng, (-pr).ln_1p());
                v = v.saturating_add(usize::try_from(skip).unwrap_or(usize::MAX));
            }
            if v < n {
                let q = p(ty(u), ty(v));
                if rng.random::<f64>() * pr < q {
                    edges.push((order[u], order[v]));
                }
                pr = q;
                v += 1;
            }
        }
    }
    edges
}

/// `κ = φ(x ∨ y)`: in increasing type order, every earlier vertex meets the
/// current one with the same probability, so draw a binomial count and
/// choose that many distinct partners.
fn max_family(types: &[f64], p: &impl Fn(f64, f64) -> f64, seed: u64) -> Result<Vec<(u32, u32)>> {
    let mut order: Vec<u32> = (0..types.len() as u32).collect();
    order.sort_by(|&a, &b| types[a as usize].total_cmp(&types[b as usize]));
    let mut rng = rng::stream(seed, Purpose::Edges, 0);
    let mut edges = Vec::new();
    for r in 1..order.len() {
        let x = types[order[r] as usize];
        let pr = p(x, x);
        choose_earlier(&mut rng, r, pr, |s| edges.push((order[s], order[r])))?;
    }
    Ok(edges)
}

/// Pick each of `0..r` independently with probability `p`.
fn choose_earlier(rng: &mut ChaCha8Rng, r: usize, p: f64, emit: impl FnMut(usize)) -> Result<()> {
    if !(p > 0.0) {
        return Ok(());
    }
    let count = if p >= 1.0 {
        r
    } else {
        Binomial::new(r as u64, p)
            .map_err(|e| Error::invalid("edge probability", e.to_string()))?
            .sample(rng) as usize
    };
    if count == r {
        (0..r).for_each(emit);
    } else {
        index::sample(rng, r, count).into_iter().for_each(emit);
    }
    Ok(())
}

/// Members of the CHKNS family on vertices `1..=n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ChknsVariant {
    /// Intensity `λ(1/(j−1) − 1/n)` for `i < j`.
    I,
    /// Intensity `λ(1/j − 1/n)`.
    II,
    /// Intensity `λ(1/j − 1/(n+1))`.
    III,
    /// The growth process: one vertex per step, then with probability
    /// `δ = λ/2` one edge between two uniform existing vertices.
    Growth,
}

impl std::str::FromStr for ChknsVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "I" | "i" | "1" => Ok(ChknsVariant::I),
            "II" | "ii" | "2" => Ok(ChknsVariant::II),
            "III" | "iii" | "3" => Ok(ChknsVariant::III),
            "growth" => Ok(ChknsVariant::Growth),
            _ => Err(Error::parse("CHKNS variant", s, "expected I | II | III | growth")),
        }
    }
}

/// Sample a CHKNS-family graph. The Poisson variants coalesce multi-edges,
/// so pair `(i, j)` is present with probability `1 − exp(−λ_ij)`.
pub fn sample_chkns_family(variant: ChknsVariant, lambda: f64, n: usize, seed: u64) -> Result<GraphSample> {
    if n == 0 || u32::try_from(n).is_err() {
        return Err(Error::invalid("n", format!("vertex count {n} out of range")));
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::invalid("lambda", format!("need lambda >= 0, got {lambda}")));
    }
    let nf = n as f64;
    let mut rng = rng::stream(seed, Purpose::Growth, 0);
    let mut edges = Vec::new();
    match variant {
        ChknsVariant::Growth => {
            let delta = lambda / 2.0;
            if delta >= 1.0 {
                return Err(Error::invalid("lambda", format!("growth step probability lambda/2 = {delta} must be below 1")));
            }
            for t in 2..=n {
                if rng.random::<f64>() < delta {
                    let u = rng.random_range(0..t as u32);
                    let v = rng.random_range(0..t as u32);
                    edges.push((u, v));
                }
            }
        }
        _ => {
            for j in 2..=n {
                let jf = j as f64;
                let intensity = lambda
                    * match variant {
                        ChknsVariant::I => 1.0 / (jf - 1.0) - 1.0 / nf,
                        ChknsVariant::II => 1.0 / jf - 1.0 / nf,
                        _ => 1.0 / jf - 1.0 / (nf + 1.0),
                    };
                let p = EdgeRule::Exponential.probability(intensity.max(0.0));
                choose_earlier(&mut rng, j - 1, p, |i| edges.push((i as u32, j as u32 - 1)))?;
            }
        }
    }
    let mut g = GraphSample::from_edges(n, edges);
    g.types = (1..=n).map(|i| i as f64 / nf).collect();
    g.seed = seed;
    g.edge_rule = EdgeRule::Exponential;
    g.model = format!("CHKNS variant {variant:?}, lambda={lambda}");
    g.sampler = if variant == ChknsVariant::Growth { "growth" } else { "chkns_binomial" };
    Ok(g)
}
