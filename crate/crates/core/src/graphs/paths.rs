//! Brute-force path counts for small graphs.

use super::GraphSample;
use crate::{Error, Result};

/// Largest graph accepted by [`count_paths`].
pub const PATH_COUNT_MAX_N: usize = 14;

/// `P_ℓ` = number of ordered self-avoiding paths `v₀v₁…v_ℓ`, for
/// `ℓ = 0..=l_max`. `P_0 = n`.
pub fn count_paths(g: &GraphSample, l_max: usize) -> Result<Vec<u64>> {
    if g.n > PATH_COUNT_MAX_N {
        return Err(Error::invalid("n", format!("path enumeration limited to n <= {PATH_COUNT_MAX_N}, got {}", g.n)));
    }
    let mut adj = vec![0u32; g.n];
    for &(u, v) in &g.edges {
        adj[u as usize] |= 1 << v;
        adj[v as usize] |= 1 << u;
    }
    let mut counts = vec![0u64; l_max + 1];
    fn walk(adj: &[u32], v: usize, visited: u32, len: usize, counts: &mut [u64]) {
        counts[len] += 1;
        if len + 1 == counts.len() {
            return;
        }
        let mut next = adj[v] & !visited;
        while next != 0 {
            let w = next.trailing_zeros() as usize;
            next &= next - 1;
            walk(adj, w, visited | 1 << w, len + 1, counts);
        }
    }
    for v in 0..g.n {
        walk(&adj, v, 1 << v, 0, &mut counts);
    }
    Ok(counts)
}
