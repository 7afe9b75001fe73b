//! Shared fixtures for in-crate tests.

use crate::weights::ContiguityWeights;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Random connected graph: a random spanning tree plus up to n extra edges.
pub(crate) fn random_connected(n: usize, rng: &mut ChaCha8Rng) -> ContiguityWeights {
    let mut edges = Vec::new();
    for v in 1..n {
        edges.push((rng.gen_range(0..v), v));
    }
    let extra = rng.gen_range(0..=n);
    for _ in 0..extra {
        let i = rng.gen_range(0..n);
        let j = rng.gen_range(0..n);
        if i != j {
            edges.push((i.min(j), i.max(j)));
        }
    }
    ContiguityWeights::from_edges(n, &edges)
}

/// Queen adjacency on a rows x cols lattice, row-major unit order.
pub(crate) fn grid_queen(rows: usize, cols: usize) -> ContiguityWeights {
    let idx = |r: usize, c: usize| r * cols + c;
    let mut edges = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            for (dr, dc) in [(0i64, 1i64), (1, -1), (1, 0), (1, 1)] {
                let (nr, nc) = (r as i64 + dr, c as i64 + dc);
                if nr >= 0 && nr < rows as i64 && nc >= 0 && nc < cols as i64 {
                    edges.push((idx(r, c), idx(nr as usize, nc as usize)));
                }
            }
        }
    }
    ContiguityWeights::from_edges(rows * cols, &edges)
}
