//! Connected components and the empirical susceptibilities.

use serde::Serialize;

use super::GraphSample;

/// Disjoint-set forest with path compression and union by size.
#[derive(Clone, Debug)]
pub struct UnionFind {
    parent: Vec<u32>,
    size: Vec<u32>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n as u32).collect(),
            size: vec![1; n],
        }
    }

    pub fn find(&mut self, mut x: u32) -> u32 {
        let mut root = x;
        while self.parent[root as usize] != root {
            root = self.parent[root as usize];
        }
        while self.parent[x as usize] != root {
            let next = self.parent[x as usize];
            self.parent[x as usize] = root;
            x = next;
        }
        root
    }

    pub fn union(&mut self, a: u32, b: u32) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra as usize] < self.size[rb as usize] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb as usize] = ra;
        self.size[ra as usize] += self.size[rb as usize];
        true
    }

    pub fn size_of(&mut self, x: u32) -> u32 {
        let r = self.find(x);
        self.size[r as usize]
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ComponentStats {
    pub n: usize,
    /// Component sizes, largest first.
    pub sizes: Vec<u64>,
    /// `n_k[k − 1]` = number of vertices in components of size `k`.
    pub n_k: Vec<u64>,
    /// `Σ |C_i|² / n`.
    pub chi: f64,
    /// As `chi` without the largest component.
    pub chi_hat: f64,
    /// Smallest vertex id in the largest component; ties between equally
    /// large components go to the one with the smallest such id.
    pub largest_root: usize,
    pub largest_size: u64,
}

impl ComponentStats {
    /// `Σ_{|C| ≤ δn} |C|² / n`.
    pub fn chi_trunc(&self, delta: f64) -> f64 {
        let limit = delta * self.n as f64;
        let s: u128 = self
            .sizes
            .iter()
            .filter(|&&s| s as f64 <= limit)
            .map(|&s| s as u128 * s as u128)
            .sum();
        s as f64 / self.n as f64
    }

    /// `N_k / n`.
    pub fn fraction_in_size(&self, k: usize) -> f64 {
        self.n_k.get(k.wrapping_sub(1)).copied().unwrap_or(0) as f64 / self.n as f64
    }

    /// `Σ_k k N_k / n`, equal to `chi`.
    pub fn chi_from_nk(&self) -> f64 {
        self.n_k
            .iter()
            .enumerate()
            .map(|(i, &c)| (i as f64 + 1.0) * c as f64)
            .sum::<f64>()
            / self.n as f64
    }
}

pub fn components(g: &GraphSample) -> ComponentStats {
    let n = g.n;
    let mut uf = UnionFind::new(n);
    for &(u, v) in &g.edges {
        uf.union(u, v);
    }
    // per root: size and smallest member; vertices are scanned in order, so
    // the first visit of a root is its smallest member
    let mut first_seen = vec![u32::MAX; n];
    let mut roots = Vec::new();
    for v in 0..n as u32 {
        let r = uf.find(v) as usize;
        if first_seen[r] == u32::MAX {
            first_seen[r] = v;
            roots.push(r);
        }
    }
    let mut comps: Vec<(u64, u32)> = roots.iter().map(|&r| (uf.size[r] as u64, first_seen[r])).collect();
    comps.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));

    let sizes: Vec<u64> = comps.iter().map(|c| c.0).collect();
    let (largest_size, largest_root) = comps.first().map(|c| (c.0, c.1 as usize)).unwrap_or((0, 0));
    let mut n_k = vec![0u64; largest_size as usize];
    for &s in &sizes {
        n_k[s as usize - 1] += s;
    }
    let sq: u128 = sizes.iter().map(|&s| s as u128 * s as u128).sum();
    let nf = n as f64;
    let chi = sq as f64 / nf;
    let chi_hat = (sq - largest_size as u128 * largest_size as u128) as f64 / nf;
    ComponentStats {
        n,
        sizes,
        n_k,
        chi,
        chi_hat,
        largest_root,
        largest_size,
    }
}
