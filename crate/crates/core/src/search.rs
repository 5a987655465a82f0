//! Beam search over a proximity graph, plus greedy descent through a layered
//! graph.
//!
//! The search keeps a pool of at most `L` candidates sorted by distance to the
//! query, repeatedly expands the closest unexpanded one, and stops once every
//! pool entry has been expanded. A visited set stops already-offered ids from
//! being measured twice; that changes the distance count but never the result,
//! since the pool would reject the duplicate anyway.

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::graph::{LayeredGraph, ProximityGraph};
use crate::neighbor::{CandidatePool, Neighbor};

/// Reusable per-thread search buffers.
#[derive(Clone, Debug)]
pub struct SearchScratch {
    pub(crate) pool: CandidatePool,
    stamps: Vec<u32>,
    generation: u32,
    /// Distance kernel calls since the scratch was created.
    pub dist_count: u64,
}

impl SearchScratch {
    pub fn new(n: usize) -> Self {
        SearchScratch {
            pool: CandidatePool::new(1),
            stamps: vec![0; n],
            generation: 0,
            dist_count: 0,
        }
    }

    pub(crate) fn begin(&mut self, n: usize, l: usize) {
        self.pool.reset(l);
        if self.stamps.len() < n {
            self.stamps.resize(n, 0);
        }
        self.generation = self.generation.wrapping_add(1);
        if self.generation == 0 {
            self.stamps.iter_mut().for_each(|s| *s = 0);
            self.generation = 1;
        }
    }

    /// Marks `id` visited; false if it already was in this search.
    #[inline]
    pub(crate) fn visit(&mut self, id: u32) -> bool {
        let slot = &mut self.stamps[id as usize];
        if *slot == self.generation {
            false
        } else {
            *slot = self.generation;
            true
        }
    }
}

fn check(g: &ProximityGraph, ds: &Dataset, q: &[f32], k: usize, l: usize, ep: u32) -> Result<()> {
    if g.is_empty() {
        return Err(Error::arg("search on an empty graph"));
    }
    if k == 0 || k > l {
        return Err(Error::arg(format!(
            "need 1 <= k <= L, got k = {k}, L = {l}"
        )));
    }
    if ep as usize >= g.len() {
        return Err(Error::arg(format!("entry point {ep} out of range")));
    }
    if g.len() > ds.len() {
        return Err(Error::arg("graph has more nodes than the dataset"));
    }
    ds.check_query(q)
}

#[inline]
fn run<F: FnMut(Neighbor)>(
    g: &ProximityGraph,
    ds: &Dataset,
    q: &[f32],
    l: usize,
    ep: u32,
    s: &mut SearchScratch,
    mut on_expand: F,
) {
    s.begin(g.len(), l);
    s.visit(ep);
    s.dist_count += 1;
    s.pool.insert_new(Neighbor::new(ep, ds.dist_to(q, ep)));
    while let Some(cur) = s.pool.next_unexpanded() {
        on_expand(cur);
        for &v in g.neighbors(cur.id) {
            if !s.visit(v) {
                continue;
            }
            s.dist_count += 1;
            s.pool.insert_new(Neighbor::new(v, ds.dist_to(q, v)));
        }
    }
}

/// Beam search for dataset point `u` that never returns `u` itself. Starting
/// at `u` means `u` counts as expanded and its out-neighbors seed the pool.
pub(crate) fn run_for_point(
    g: &ProximityGraph,
    ds: &Dataset,
    u: u32,
    l: usize,
    start: u32,
    s: &mut SearchScratch,
) {
    let q = ds.row(u);
    s.begin(g.len(), l);
    s.visit(u);
    let seeds: &[u32] = if start == u {
        g.neighbors(u)
    } else {
        std::slice::from_ref(&start)
    };
    for &v in seeds {
        if s.visit(v) {
            s.dist_count += 1;
            s.pool.insert_new(Neighbor::new(v, ds.dist_to(q, v)));
        }
    }
    while let Some(cur) = s.pool.next_unexpanded() {
        for &v in g.neighbors(cur.id) {
            if !s.visit(v) {
                continue;
            }
            s.dist_count += 1;
            s.pool.insert_new(Neighbor::new(v, ds.dist_to(q, v)));
        }
    }
}

/// Top-`k` of a beam search with pool width `l` started at `ep`.
pub fn kann_search(
    g: &ProximityGraph,
    ds: &Dataset,
    q: &[f32],
    k: usize,
    l: usize,
    ep: u32,
) -> Result<Vec<Neighbor>> {
    let mut scratch = SearchScratch::new(g.len());
    kann_search_with(g, ds, q, k, l, ep, &mut scratch)
}

/// [`kann_search`] reusing caller-owned buffers.
pub fn kann_search_with(
    g: &ProximityGraph,
    ds: &Dataset,
    q: &[f32],
    k: usize,
    l: usize,
    ep: u32,
    scratch: &mut SearchScratch,
) -> Result<Vec<Neighbor>> {
    check(g, ds, q, k, l, ep)?;
    run(g, ds, q, l, ep, scratch, |_| {});
    Ok(scratch.pool.truncated(k))
}

/// Everything [`kann_search_instrumented`] observed.
#[derive(Clone, Debug)]
pub struct SearchTrace {
    pub results: Vec<Neighbor>,
    /// Distance kernel invocations, including the entry point.
    pub dist_count: u64,
    /// Nodes in the order they were expanded.
    pub expanded: Vec<u32>,
    /// Largest exact rank (1-based) among expanded nodes, when ranks were given.
    pub max_rank_on_path: Option<u32>,
}

/// Same search as [`kann_search`], recording the expansion order, the distance
/// count and, given a rank table from [`crate::oracle::rank_table`], the
/// highest exact rank the search passed through.
pub fn kann_search_instrumented(
    g: &ProximityGraph,
    ds: &Dataset,
    q: &[f32],
    k: usize,
    l: usize,
    ep: u32,
    ranks: Option<&[u32]>,
) -> Result<SearchTrace> {
    check(g, ds, q, k, l, ep)?;
    let mut scratch = SearchScratch::new(g.len());
    let mut expanded = Vec::new();
    run(g, ds, q, l, ep, &mut scratch, |nb| expanded.push(nb.id));
    let max_rank_on_path =
        ranks.map(|r| expanded.iter().map(|&u| r[u as usize]).max().unwrap_or(0));
    Ok(SearchTrace {
        results: scratch.pool.truncated(k),
        dist_count: scratch.dist_count,
        expanded,
        max_rank_on_path,
    })
}

/// Greedy 1-NN descent from the top layer down to layer 1, then a width-`l`
/// beam search on layer 0 from the node reached.
pub fn layered_search(
    lg: &LayeredGraph,
    ds: &Dataset,
    q: &[f32],
    k: usize,
    l: usize,
) -> Result<Vec<Neighbor>> {
    let mut scratch = SearchScratch::new(lg.len());
    layered_search_with(lg, ds, q, k, l, &mut scratch)
}

pub fn layered_search_with(
    lg: &LayeredGraph,
    ds: &Dataset,
    q: &[f32],
    k: usize,
    l: usize,
    scratch: &mut SearchScratch,
) -> Result<Vec<Neighbor>> {
    let mut w = lg.entry();
    for i in (1..=lg.top()).rev() {
        w = kann_search_with(lg.layer(i), ds, q, 1, 1, w, scratch)?[0].id;
    }
    kann_search_with(lg.layer(0), ds, q, k, l, w, scratch)
}
