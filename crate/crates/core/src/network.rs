//! Watts–Strogatz small-world contact networks.

use std::io::Write;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::rng::rng_from_seed;

pub const DEFAULT_MEAN_DEGREE: usize = 10;
pub const DEFAULT_REWIRE_PROB: f64 = 0.1;

/// Generator inputs for a small-world network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmallWorldParams {
    /// Even mean degree of the starting ring lattice.
    pub k: usize,
    pub p_rewire: f64,
}

impl Default for SmallWorldParams {
    fn default() -> Self {
        SmallWorldParams {
            k: DEFAULT_MEAN_DEGREE,
            p_rewire: DEFAULT_REWIRE_PROB,
        }
    }
}

impl SmallWorldParams {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.k < 2 || !self.k.is_multiple_of(2) || self.k >= n {
            return Err(SimError::InvalidDegree { n, k: self.k });
        }
        if !(0.0..=1.0).contains(&self.p_rewire) {
            return Err(SimError::invalid(
                "p_rewire",
                format!("must lie in [0, 1], got {}", self.p_rewire),
            ));
        }
        Ok(())
    }
}

/// Undirected simple graph stored as sorted adjacency lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkTopology {
    adjacency: Vec<Vec<u32>>,
    k: usize,
    p_rewire_bits: u64,
    seed: u64,
}

impl NetworkTopology {
    pub fn n(&self) -> usize {
        self.adjacency.len()
    }

    pub fn neighbors(&self, node: usize) -> &[u32] {
        &self.adjacency[node]
    }

    pub fn adjacency(&self) -> &[Vec<u32>] {
        &self.adjacency
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn gen_params(&self) -> (SmallWorldParams, u64) {
        (
            SmallWorldParams {
                k: self.k,
                p_rewire: f64::from_bits(self.p_rewire_bits),
            },
            self.seed,
        )
    }

    /// Edges `(i, j)` with `i < j`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adjacency.iter().enumerate().flat_map(|(i, nb)| {
            nb.iter()
                .map(|&j| j as usize)
                .filter(move |&j| j > i)
                .map(move |j| (i, j))
        })
    }

    /// Writes one `i j` pair per line, nodes 0-indexed.
    pub fn write_edge_list<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (i, j) in self.edges() {
            writeln!(out, "{i} {j}")?;
        }
        Ok(())
    }

    pub fn save_edge_list(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| SimError::io(path, e))?;
        let mut buf = std::io::BufWriter::new(file);
        self.write_edge_list(&mut buf)
            .and_then(|_| buf.flush())
            .map_err(|e| SimError::io(path, e))
    }
}

/// Ring lattice on `n` nodes, each joined to its `k/2` nearest neighbours on
/// either side, with every lattice edge rewired with probability `p_rewire`.
///
/// Rewiring keeps the source endpoint and moves the other end to a uniform
/// node that is neither the source nor already adjacent to it, so the edge
/// count stays `n·k/2`.
pub fn build_small_world(n: usize, gen: SmallWorldParams, seed: u64) -> Result<NetworkTopology> {
    gen.validate(n)?;
    if n > u32::MAX as usize {
        return Err(SimError::invalid("n", "network too large"));
    }
    let half = gen.k / 2;
    let mut adj: Vec<Vec<u32>> = (0..n)
        .map(|u| {
            let mut nb = Vec::with_capacity(gen.k + 2);
            for j in 1..=half {
                nb.push(((u + j) % n) as u32);
                nb.push(((u + n - j) % n) as u32);
            }
            nb
        })
        .collect();

    if gen.p_rewire > 0.0 {
        let mut rng = rng_from_seed(seed);
        for j in 1..=half {
            for u in 0..n {
                let v = (u + j) % n;
                if rng.random::<f64>() >= gen.p_rewire {
                    continue;
                }
                // the lattice edge may already have been removed by an
                // earlier rewiring that started at v
                if !adj[u].contains(&(v as u32)) {
                    continue;
                }
                if adj[u].len() >= n - 1 {
                    continue;
                }
                let w = loop {
                    let w = rng.random_range(0..n);
                    if w != u && !adj[u].contains(&(w as u32)) {
                        break w;
                    }
                };
                remove(&mut adj[u], v);
                remove(&mut adj[v], u);
                adj[u].push(w as u32);
                adj[w].push(u as u32);
            }
        }
    }
    for nb in adj.iter_mut() {
        nb.sort_unstable();
    }
    Ok(NetworkTopology {
        adjacency: adj,
        k: gen.k,
        p_rewire_bits: gen.p_rewire.to_bits(),
        seed,
    })
}

fn remove(list: &mut Vec<u32>, x: usize) {
    if let Some(pos) = list.iter().position(|&y| y as usize == x) {
        list.swap_remove(pos);
    }
}
