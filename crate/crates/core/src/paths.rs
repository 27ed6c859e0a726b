//! Bounded Source-to-Target path enumeration, scoring and per-cell frequency.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{NodeKind, SpatialGraph};
use crate::grid::Cell;

pub const DEFAULT_MAX_LEN: usize = 11;
pub const DEFAULT_PATH_CAP: usize = 1_000_000;

#[derive(Debug, Error)]
pub enum PathError {
    #[error("path enumeration exceeded the cap of {cap} paths")]
    PathExplosion { cap: usize },
    #[error("maximum path length must be at least 2 nodes (got {0})")]
    MaxLenTooSmall(usize),
    #[error("invalid path {index}: {reason}")]
    InvalidPath { index: usize, reason: String },
}

/// A simple path from a Source node to a Target node.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LinkagePath {
    pub nodes: Vec<usize>,
    pub edge_weights: Vec<i8>,
}

impl LinkagePath {
    pub fn length_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn positive_edges(&self) -> usize {
        self.edge_weights.iter().filter(|&&w| w > 0).count()
    }

    pub fn score(&self) -> f64 {
        path_score(&self.edge_weights)
    }

    pub fn source(&self) -> usize {
        self.nodes[0]
    }

    pub fn target(&self) -> usize {
        *self.nodes.last().expect("paths are never empty")
    }

    pub fn cells(&self, graph: &SpatialGraph) -> Vec<Cell> {
        self.nodes.iter().map(|&n| graph.nodes()[n].cell).collect()
    }

    /// Rebuilds a path from node ids, reading weights from the graph.
    pub fn from_nodes(graph: &SpatialGraph, nodes: Vec<usize>) -> Option<LinkagePath> {
        if nodes.len() < 2 || nodes.iter().any(|&n| n >= graph.node_count()) {
            return None;
        }
        let edge_weights = nodes
            .windows(2)
            .map(|w| graph.weight(w[0], w[1]))
            .collect::<Option<Vec<i8>>>()?;
        Some(LinkagePath {
            nodes,
            edge_weights,
        })
    }
}

/// Fraction of +1 edges.
pub fn path_score(weights: &[i8]) -> f64 {
    if weights.is_empty() {
        return 0.0;
    }
    let positive = weights.iter().filter(|&&w| w > 0).count();
    positive as f64 / weights.len() as f64
}

/// Hop count from every node to the nearest target, moving only through
/// non-target nodes. `usize::MAX` when no target is reachable.
fn hops_to_target(graph: &SpatialGraph, targets: &[bool]) -> Vec<usize> {
    let mut dist = vec![usize::MAX; graph.node_count()];
    let mut queue = VecDeque::new();
    for (i, &t) in targets.iter().enumerate() {
        if t {
            dist[i] = 0;
            queue.push_back(i);
        }
    }
    while let Some(x) = queue.pop_front() {
        for &(y, _) in graph.neighbors(x) {
            if !targets[y] && dist[y] == usize::MAX {
                dist[y] = dist[x] + 1;
                queue.push_back(y);
            }
        }
    }
    dist
}

struct Budget<'a> {
    counter: &'a AtomicUsize,
    cap: usize,
}

impl Budget<'_> {
    fn take(&self, n: usize) -> Result<(), PathError> {
        let before = self.counter.fetch_add(n, Ordering::Relaxed);
        if before + n > self.cap {
            Err(PathError::PathExplosion { cap: self.cap })
        } else {
            Ok(())
        }
    }
}

fn bfs_inner(
    graph: &SpatialGraph,
    source: usize,
    max_len: usize,
    targets: &[bool],
    hops: &[usize],
    budget: Option<&Budget>,
) -> Result<Vec<LinkagePath>, PathError> {
    let mut out = Vec::new();
    if targets[source] || hops[source] == usize::MAX || hops[source] + 1 > max_len {
        return Ok(out);
    }
    let mut frontier: Vec<Vec<usize>> = vec![vec![source]];
    while !frontier.is_empty() {
        let mut next = Vec::new();
        for path in &frontier {
            let tail = *path.last().unwrap();
            for &(nb, _) in graph.neighbors(tail) {
                if path.contains(&nb) {
                    continue;
                }
                let len = path.len() + 1;
                if targets[nb] {
                    let mut nodes = path.clone();
                    nodes.push(nb);
                    let edge_weights = nodes
                        .windows(2)
                        .map(|w| graph.weight(w[0], w[1]).unwrap())
                        .collect();
                    if let Some(b) = budget {
                        b.take(1)?;
                    }
                    out.push(LinkagePath {
                        nodes,
                        edge_weights,
                    });
                } else if hops[nb] != usize::MAX && len + hops[nb] <= max_len {
                    let mut nodes = path.clone();
                    nodes.push(nb);
                    next.push(nodes);
                }
            }
        }
        if let Some(b) = budget {
            if next.len() > b.cap {
                return Err(PathError::PathExplosion { cap: b.cap });
            }
        }
        frontier = next;
    }
    Ok(out)
}

/// All simple paths from `source` to a node flagged in `targets`, with at most
/// `max_len` nodes and no target in the interior. Breadth-first, neighbours in
/// ascending id order.
pub fn bfs_paths(
    graph: &SpatialGraph,
    source: usize,
    max_len: usize,
    targets: &[bool],
) -> Vec<LinkagePath> {
    let hops = hops_to_target(graph, targets);
    bfs_inner(graph, source, max_len, targets, &hops, None).expect("no budget, no error")
}

/// Paths from every node in `sources` to any node flagged in `targets`,
/// sorted by node sequence. Fails once more than `cap` paths are found.
pub fn extract_paths_between(
    graph: &SpatialGraph,
    sources: &[usize],
    targets: &[bool],
    max_len: usize,
    cap: usize,
) -> Result<Vec<LinkagePath>, PathError> {
    if max_len < 2 {
        return Err(PathError::MaxLenTooSmall(max_len));
    }
    let hops = hops_to_target(graph, targets);
    let counter = AtomicUsize::new(0);
    let budget = Budget {
        counter: &counter,
        cap,
    };
    let mut sources = sources.to_vec();
    sources.sort_unstable();
    sources.dedup();
    let per_source: Vec<Vec<LinkagePath>> = sources
        .par_iter()
        .map(|&s| bfs_inner(graph, s, max_len, targets, &hops, Some(&budget)))
        .collect::<Result<_, _>>()?;
    let mut all: Vec<LinkagePath> = per_source.into_iter().flatten().collect();
    all.sort_by(|a, b| a.nodes.cmp(&b.nodes));
    all.dedup_by(|a, b| a.nodes == b.nodes);
    Ok(all)
}

/// Union of [`bfs_paths`] over all Source nodes with Target nodes as targets.
pub fn extract_all_paths(
    graph: &SpatialGraph,
    max_len: usize,
    cap: usize,
) -> Result<Vec<LinkagePath>, PathError> {
    let sources: Vec<usize> = graph
        .nodes()
        .iter()
        .filter(|n| n.kind == NodeKind::Source)
        .map(|n| n.id)
        .collect();
    let targets: Vec<bool> = graph
        .nodes()
        .iter()
        .map(|n| n.kind == NodeKind::Target)
        .collect();
    extract_paths_between(graph, &sources, &targets, max_len, cap)
}

/// Per-cell count of paths passing through each cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinkageFrequency {
    pub rows: usize,
    pub cols: usize,
    pub counts: Vec<u32>,
}

impl LinkageFrequency {
    pub fn get(&self, cell: Cell) -> u32 {
        self.counts[cell.row * self.cols + cell.col]
    }

    pub fn max(&self) -> u32 {
        self.counts.iter().copied().max().unwrap_or(0)
    }

    /// Non-zero cells in row-major order.
    pub fn nonzero(&self) -> impl Iterator<Item = (Cell, u32)> + '_ {
        self.counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(i, &c)| (Cell::new(i / self.cols, i % self.cols), c))
    }
}

/// Counts, for every cell, how many of the given paths contain it.
pub fn linkage_frequency<P: AsRef<[Cell]>>(
    paths: &[P],
    rows: usize,
    cols: usize,
) -> LinkageFrequency {
    let mut counts = vec![0u32; rows * cols];
    for path in paths {
        let mut cells = path.as_ref().to_vec();
        cells.sort_unstable();
        cells.dedup();
        for c in cells {
            counts[c.row * cols + c.col] += 1;
        }
    }
    LinkageFrequency { rows, cols, counts }
}
