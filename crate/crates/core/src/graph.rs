//! Flat and layered proximity graphs.

use crate::error::{Error, Result};

/// Directed graph over point ids `0..n` with out-degree cap `max_degree`.
///
/// Each node's list holds pruned edges first, followed by `extra[u]` edges that
/// connectivity repair appended. Only those trailing edges may push a node past
/// the cap; a node with `extra[u] > 0` is "tagged".
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProximityGraph {
    max_degree: usize,
    entry: u32,
    adjacency: Vec<Vec<u32>>,
    extra: Vec<u32>,
}

impl ProximityGraph {
    pub fn new(n: usize, max_degree: usize) -> Self {
        ProximityGraph {
            max_degree,
            entry: 0,
            adjacency: vec![Vec::new(); n],
            extra: vec![0; n],
        }
    }

    /// Builds a graph from per-node lists, validating ids, self-loops,
    /// duplicates and the degree cap.
    pub fn from_lists(lists: Vec<Vec<u32>>, max_degree: usize, entry: u32) -> Result<Self> {
        let n = lists.len();
        let g = ProximityGraph {
            max_degree,
            entry,
            extra: vec![0; n],
            adjacency: lists,
        };
        g.validate()?;
        Ok(g)
    }

    pub(crate) fn from_parts(
        adjacency: Vec<Vec<u32>>,
        extra: Vec<u32>,
        max_degree: usize,
        entry: u32,
    ) -> Self {
        ProximityGraph {
            max_degree,
            entry,
            adjacency,
            extra,
        }
    }

    /// Complete digraph on `members` (every member links to every other one).
    pub fn complete_on(n: usize, members: &[u32], max_degree: usize) -> Self {
        let mut g = ProximityGraph::new(n, max_degree);
        for &u in members {
            g.adjacency[u as usize] = members.iter().copied().filter(|&v| v != u).collect();
        }
        if let Some(&first) = members.first() {
            g.entry = first;
        }
        g
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.adjacency.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.adjacency.is_empty()
    }

    #[inline]
    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    #[inline]
    pub fn entry(&self) -> u32 {
        self.entry
    }

    pub fn set_entry(&mut self, entry: u32) {
        self.entry = entry;
    }

    #[inline]
    pub fn neighbors(&self, u: u32) -> &[u32] {
        &self.adjacency[u as usize]
    }

    pub fn lists(&self) -> &[Vec<u32>] {
        &self.adjacency
    }

    /// Number of edges appended to `u` by connectivity repair.
    #[inline]
    pub fn connect_edges(&self, u: u32) -> usize {
        self.extra[u as usize] as usize
    }

    pub fn is_tagged(&self, u: u32) -> bool {
        self.extra[u as usize] > 0
    }

    /// Replaces the pruned edges of `u`; clears any connect edges.
    pub fn set_neighbors(&mut self, u: u32, list: Vec<u32>) {
        self.adjacency[u as usize] = list;
        self.extra[u as usize] = 0;
    }

    /// Appends a connectivity edge `u -> v`, which may exceed the degree cap.
    pub fn push_connect_edge(&mut self, u: u32, v: u32) {
        self.adjacency[u as usize].push(v);
        self.extra[u as usize] += 1;
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum()
    }

    pub fn mean_degree(&self) -> f64 {
        self.edge_count() as f64 / self.len().max(1) as f64
    }

    /// Nodes reachable from `start` along out-edges (iterative DFS).
    pub fn reachable_from(&self, start: u32) -> Vec<bool> {
        let mut seen = vec![false; self.len()];
        self.mark_reachable(start, &mut seen);
        seen
    }

    pub(crate) fn mark_reachable(&self, start: u32, seen: &mut [bool]) -> usize {
        if seen[start as usize] {
            return 0;
        }
        let mut stack = vec![start];
        seen[start as usize] = true;
        let mut count = 1;
        while let Some(u) = stack.pop() {
            for &v in self.neighbors(u) {
                if !seen[v as usize] {
                    seen[v as usize] = true;
                    count += 1;
                    stack.push(v);
                }
            }
        }
        count
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        if self.extra.len() != n {
            return Err(Error::corrupt(
                "connect-edge table length differs from node count",
            ));
        }
        if n > 0 && self.entry as usize >= n {
            return Err(Error::corrupt(format!(
                "entry point {} out of range",
                self.entry
            )));
        }
        let mut mark = vec![u32::MAX; n];
        for (u, list) in self.adjacency.iter().enumerate() {
            let extra = self.extra[u] as usize;
            if extra > list.len() {
                return Err(Error::corrupt(format!(
                    "node {u}: more connect edges than edges"
                )));
            }
            if list.len() - extra > self.max_degree {
                return Err(Error::corrupt(format!(
                    "node {u}: degree {} exceeds cap {}",
                    list.len() - extra,
                    self.max_degree
                )));
            }
            for &v in list {
                if v as usize >= n {
                    return Err(Error::corrupt(format!(
                        "node {u}: neighbor id {v} >= n = {n}"
                    )));
                }
                if v as usize == u {
                    return Err(Error::corrupt(format!("node {u}: self-loop")));
                }
                if mark[v as usize] == u as u32 {
                    return Err(Error::corrupt(format!("node {u}: duplicate neighbor {v}")));
                }
                mark[v as usize] = u as u32;
            }
        }
        Ok(())
    }
}

/// A stack of graphs `G_0 .. G_top` over one dataset.
///
/// Node `u` belongs to layers `0..=levels[u]`; nodes outside a layer have empty
/// lists there. `entry` is a member of the top layer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayeredGraph {
    levels: Vec<u8>,
    layers: Vec<ProximityGraph>,
    entry: u32,
}

impl LayeredGraph {
    pub fn new(levels: Vec<u8>, layers: Vec<ProximityGraph>, entry: u32) -> Result<Self> {
        let g = LayeredGraph {
            levels,
            layers,
            entry,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn entry(&self) -> u32 {
        self.entry
    }

    pub fn levels(&self) -> &[u8] {
        &self.levels
    }

    pub fn level(&self, u: u32) -> usize {
        self.levels[u as usize] as usize
    }

    /// Index of the top layer.
    pub fn top(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn layer(&self, i: usize) -> &ProximityGraph {
        &self.layers[i]
    }

    pub fn layers(&self) -> &[ProximityGraph] {
        &self.layers
    }

    pub fn members(&self, i: usize) -> Vec<u32> {
        (0..self.len() as u32)
            .filter(|&u| self.levels[u as usize] as usize >= i)
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.levels.len();
        if n == 0 || self.layers.is_empty() {
            return Err(Error::corrupt("layered graph without nodes or layers"));
        }
        let top = self.layers.len() - 1;
        let max_level = *self.levels.iter().max().unwrap() as usize;
        if max_level != top {
            return Err(Error::corrupt(format!(
                "highest node level {max_level} but {} layers",
                self.layers.len()
            )));
        }
        if self.entry as usize >= n || self.levels[self.entry as usize] as usize != top {
            return Err(Error::corrupt(
                "entry point is not a member of the top layer",
            ));
        }
        for (i, layer) in self.layers.iter().enumerate() {
            if layer.len() != n {
                return Err(Error::corrupt(format!(
                    "layer {i} has {} nodes, expected {n}",
                    layer.len()
                )));
            }
            layer.validate()?;
            for u in 0..n as u32 {
                let member = self.levels[u as usize] as usize >= i;
                let list = layer.neighbors(u);
                if !member && !list.is_empty() {
                    return Err(Error::corrupt(format!(
                        "layer {i}: non-member {u} has edges"
                    )));
                }
                if let Some(&v) = list
                    .iter()
                    .find(|&&v| (self.levels[v as usize] as usize) < i)
                {
                    return Err(Error::corrupt(format!(
                        "layer {i}: edge {u} -> {v} leaves the layer"
                    )));
                }
            }
        }
        Ok(())
    }
}
