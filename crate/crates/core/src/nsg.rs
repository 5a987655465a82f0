//! NSG construction: the classic search-then-refine pipeline and the
//! iterative refine-before-search pipeline.
//!
//! The classic builder searches a KNNG for every node and prunes the results.
//! The iterative builder instead prunes the current candidate lists into a
//! small-degree alpha-pruned graph, searches that graph for every node to get
//! better candidates, and repeats; a final RNG refinement yields the index.
//!
//! Consecutive rounds repeat most of their work. [`opt_kcna_cached`] removes
//! the repetition without changing any output:
//!
//! * search: when a node `v` expanded for `u` in the previous round is expanded
//!   again, distances from `u` to neighbors that `v` already had are read from
//!   a per-node memo instead of recomputed;
//! * pruning: each prune call records, for every candidate, whether it was kept
//!   or which kept neighbor dominated it (see [`crate::prune::PruneCache`]).

use std::sync::Arc;
use std::time::Instant;

use rand::seq::index;
use rayon::prelude::*;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::graph::ProximityGraph;
use crate::knng::{build_knng_with, KnngParams, KnngState};
use crate::neighbor::{ids, Neighbor};
use crate::oracle::exact_knn_excluding;
use crate::prune::{
    entry_point, refine, refine_cached, PruneCache, PruneParams, RefineParams, RefineStats,
};
use crate::search::{run_for_point, SearchScratch};
use crate::seed;

/// Candidate lists `C(u)`, one per node, sorted and self-free.
#[derive(Clone, Debug, PartialEq)]
pub struct CnaState {
    lists: Vec<Vec<Neighbor>>,
    iteration: usize,
}

impl CnaState {
    pub fn from_lists(lists: Vec<Vec<Neighbor>>) -> Self {
        CnaState {
            lists,
            iteration: 0,
        }
    }

    pub fn from_knng(knng: KnngState) -> Self {
        CnaState::from_lists(knng.into_lists())
    }

    pub fn lists(&self) -> &[Vec<Neighbor>] {
        &self.lists
    }

    pub fn into_lists(self) -> Vec<Vec<Neighbor>> {
        self.lists
    }

    /// Rounds of [`opt_kcna`] applied so far.
    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn len(&self) -> usize {
        self.lists.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lists.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KcnaParams {
    pub k: usize,
    pub l: usize,
    pub m: usize,
    pub alpha: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct KcnaStats {
    pub refine: RefineStats,
    pub search_dist: u64,
}

impl KcnaStats {
    /// Distance kernel calls in pruning, bridging and searching.
    pub fn dist_total(&self) -> u64 {
        self.refine.prune.dist + self.refine.connect_dist + self.search_dist
    }
}

#[derive(Clone, Debug)]
pub struct KcnaRound {
    pub state: CnaState,
    /// The alpha-pruned, connected graph the round searched.
    pub graph: ProximityGraph,
    pub stats: KcnaStats,
}

const NO_POS: u32 = u32::MAX;

// Distances from u to the neighbors of every node its search expanded, laid
// out per expanded node in that node's adjacency order.
#[derive(Clone, Debug, Default)]
struct SearchMemo {
    expanded: Vec<u32>,
    offsets: Vec<u32>,
    dists: Vec<f32>,
}

impl SearchMemo {
    fn offset_of(&self, v: u32) -> Option<usize> {
        self.expanded
            .binary_search(&v)
            .ok()
            .map(|i| self.offsets[i] as usize)
    }
}

/// State carried between rounds of [`opt_kcna_cached`].
#[derive(Clone, Debug, Default)]
pub struct KcnaCache {
    prune: PruneCache,
    graph: Option<ProximityGraph>,
    memos: Vec<SearchMemo>,
}

impl KcnaCache {
    pub fn new() -> Self {
        KcnaCache::default()
    }

    /// Bytes held by the search memos.
    pub fn memo_bytes(&self) -> usize {
        self.memos
            .iter()
            .map(|m| 4 * (m.expanded.len() + m.offsets.len() + m.dists.len()))
            .sum()
    }
}

// For every edge v -> w of `cur`, the position of w in v's list in `prev`.
fn prev_positions(prev: &ProximityGraph, cur: &ProximityGraph) -> Vec<Vec<u32>> {
    (0..cur.len() as u32)
        .into_par_iter()
        .map(|v| {
            let old = prev.neighbors(v);
            let mut sorted: Vec<(u32, u32)> = old
                .iter()
                .enumerate()
                .map(|(i, &w)| (w, i as u32))
                .collect();
            sorted.sort_unstable();
            cur.neighbors(v)
                .iter()
                .map(|w| match sorted.binary_search_by_key(w, |p| p.0) {
                    Ok(i) => sorted[i].1,
                    Err(_) => NO_POS,
                })
                .collect()
        })
        .collect()
}

struct NodeScratch {
    search: SearchScratch,
    dist: Vec<f32>,
}

/// Search for `u` on `g` starting at `u` itself. With `memo`/`prev_pos`
/// known distances are reused; with `record` a memo for the next round is
/// returned. Results are the same in every mode.
fn search_node(
    g: &ProximityGraph,
    ds: &Dataset,
    u: u32,
    l: usize,
    s: &mut NodeScratch,
    reuse: Option<(&SearchMemo, &[Vec<u32>])>,
    record: bool,
) -> (u64, Option<SearchMemo>) {
    let q = ds.row(u);
    let sc = &mut s.search;
    sc.begin(g.len(), l);
    sc.visit(u);
    s.dist[u as usize] = 0.0;
    let mut computed = 0u64;
    let mut memo = SearchMemo::default();
    let mut pairs: Vec<(u32, u32)> = Vec::new();

    let mut expand = |v: u32, sc: &mut SearchScratch, dist: &mut [f32]| {
        let known = reuse.and_then(|(m, pp)| m.offset_of(v).map(|off| (m, off, &pp[v as usize])));
        if record {
            pairs.push((v, memo.dists.len() as u32));
        }
        for (j, &w) in g.neighbors(v).iter().enumerate() {
            if !sc.visit(w) {
                if record {
                    memo.dists.push(dist[w as usize]);
                }
                continue;
            }
            let d = match known {
                Some((m, off, pp)) if pp[j] != NO_POS => m.dists[off + pp[j] as usize],
                _ => {
                    computed += 1;
                    ds.dist_to(q, w)
                }
            };
            dist[w as usize] = d;
            if record {
                memo.dists.push(d);
            }
            sc.pool.insert_new(Neighbor::new(w, d));
        }
    };

    expand(u, sc, &mut s.dist);
    while let Some(cur) = sc.pool.next_unexpanded() {
        expand(cur.id, sc, &mut s.dist);
    }
    sc.dist_count += computed;
    let memo = record.then(|| {
        pairs.sort_unstable();
        let (expanded, offsets) = pairs.into_iter().unzip();
        SearchMemo {
            expanded,
            offsets,
            dists: memo.dists,
        }
    });
    (computed, memo)
}

// Top-k of the pool, topped up from the previous list when the search reached
// fewer than k nodes; fresh marks entries absent from the previous list.
fn next_list(pool: &[Neighbor], prev: &[Neighbor], k: usize) -> Vec<Neighbor> {
    let mut prev_ids: Vec<u32> = ids(prev);
    prev_ids.sort_unstable();
    let mut out: Vec<Neighbor> = pool
        .iter()
        .take(k)
        .map(|nb| Neighbor {
            fresh: prev_ids.binary_search(&nb.id).is_err(),
            ..*nb
        })
        .collect();
    if out.len() < k {
        for nb in prev {
            if out.len() >= k {
                break;
            }
            if !out.iter().any(|o| o.id == nb.id) {
                out.push(Neighbor {
                    fresh: false,
                    ..*nb
                });
            }
        }
        crate::neighbor::sort_neighbors(&mut out);
    }
    out
}

fn check_kcna(state: &CnaState, ds: &Dataset, p: &KcnaParams) -> Result<()> {
    if state.len() != ds.len() {
        return Err(Error::arg("candidate state and dataset sizes differ"));
    }
    if p.k == 0 || p.k > p.l {
        return Err(Error::arg(format!(
            "need 1 <= k <= L, got k = {}, L = {}",
            p.k, p.l
        )));
    }
    Ok(())
}

/// One refine-before-search round: alpha-prune the candidates into a
/// connected graph, then search it from every node for new candidates.
pub fn opt_kcna(state: &CnaState, ds: &Dataset, p: &KcnaParams, entry: u32) -> Result<KcnaRound> {
    kcna_round(state, ds, p, entry, None)
}

/// [`opt_kcna`] with repeated kernel calls removed. Produces exactly the same
/// round; `cache` must be the one passed to the previous round (or empty).
pub fn opt_kcna_cached(
    state: &CnaState,
    ds: &Dataset,
    p: &KcnaParams,
    entry: u32,
    cache: &mut KcnaCache,
) -> Result<KcnaRound> {
    kcna_round(state, ds, p, entry, Some(cache))
}

fn kcna_round(
    state: &CnaState,
    ds: &Dataset,
    p: &KcnaParams,
    entry: u32,
    mut cache: Option<&mut KcnaCache>,
) -> Result<KcnaRound> {
    check_kcna(state, ds, p)?;
    let n = ds.len();
    let k = p.k.min(n - 1);
    let mut rp = RefineParams::new(PruneParams::alpha(p.m, p.alpha)?, true);
    rp.connect_l = p.l;
    let t = Instant::now();
    let (graph, refine_stats) = match cache.as_deref_mut() {
        Some(c) => refine_cached(ds, state.lists(), &rp, entry, &mut c.prune)?,
        None => refine(ds, state.lists(), &rp, entry)?,
    };

    let prev_pos = cache
        .as_deref()
        .and_then(|c| c.graph.as_ref())
        .map(|prev| prev_positions(prev, &graph));
    let record = cache.is_some();
    log::debug!("k-cna refine: {:.2} s", t.elapsed().as_secs_f64());
    let t = Instant::now();
    let memos: &[SearchMemo] = cache.as_deref().map_or(&[], |c| &c.memos[..]);

    let results: Vec<(Vec<Neighbor>, u64, Option<SearchMemo>)> = (0..n as u32)
        .into_par_iter()
        .map_init(
            || NodeScratch {
                search: SearchScratch::new(n),
                dist: vec![0.0; n],
            },
            |s, u| {
                let reuse = match (&prev_pos, memos.get(u as usize)) {
                    (Some(pp), Some(m)) => Some((m, &pp[..])),
                    _ => None,
                };
                let (count, memo) = search_node(&graph, ds, u, p.l, s, reuse, record);
                let list = next_list(s.search.pool.entries(), &state.lists[u as usize], k);
                (list, count, memo)
            },
        )
        .collect();

    let mut lists = Vec::with_capacity(n);
    let mut search_dist = 0;
    let mut new_memos = Vec::with_capacity(if record { n } else { 0 });
    for (list, count, memo) in results {
        lists.push(list);
        search_dist += count;
        new_memos.extend(memo);
    }
    log::debug!("k-cna search: {:.2} s", t.elapsed().as_secs_f64());
    if let Some(c) = cache {
        c.memos = new_memos;
        c.graph = Some(graph.clone());
    }
    Ok(KcnaRound {
        state: CnaState {
            lists,
            iteration: state.iteration + 1,
        },
        graph,
        stats: KcnaStats {
            refine: refine_stats,
            search_dist,
        },
    })
}

/// Smallest sample size with `|r_hat - r| < eps / 2` at probability at least
/// `1 - n^-l`: `ceil((8 + 2 eps) l ln n / eps^2)`, capped at `n`.
pub fn sample_size(n: usize, epsilon: f64, l: f64) -> usize {
    let raw = ((8.0 + 2.0 * epsilon) * l * (n as f64).ln() / (epsilon * epsilon)).ceil();
    (raw.max(1.0) as usize).min(n)
}

#[derive(Clone, Debug, PartialEq)]
pub struct QualityEstimate {
    /// Mean recall of the sampled candidate lists.
    pub r_hat: f64,
    pub n_s: usize,
    pub epsilon: f64,
    pub l: f64,
    pub samples: Vec<u32>,
}

/// Estimates the mean recall@k of the candidate lists against exact
/// neighbors, from a uniform sample of nodes sized by [`sample_size`].
pub fn estimate_quality(
    state: &CnaState,
    ds: &Dataset,
    epsilon: f64,
    l: f64,
    k: usize,
    seed_value: u64,
) -> Result<QualityEstimate> {
    if !(epsilon > 0.0 && epsilon <= 1.0) || !(1.0..).contains(&l) {
        return Err(Error::arg("need 0 < epsilon <= 1 and l >= 1"));
    }
    let n = ds.len();
    if n < 2 || state.len() != n {
        return Err(Error::arg(
            "quality needs at least two points and one list per point",
        ));
    }
    let k = k.min(n - 1);
    if k == 0 {
        return Err(Error::arg("k must be at least 1"));
    }
    let n_s = sample_size(n, epsilon, l);
    let mut rng = seed::rng(seed_value, &[seed::QUALITY]);
    let mut samples: Vec<u32> = index::sample(&mut rng, n, n_s)
        .into_iter()
        .map(|i| i as u32)
        .collect();
    samples.sort_unstable();
    let total: f64 = samples
        .par_iter()
        .map(|&u| {
            let truth = exact_knn_excluding(ds, ds.row(u), k, Some(u))?;
            let mut t = ids(&truth);
            t.sort_unstable();
            let hits = state.lists[u as usize]
                .iter()
                .take(k)
                .filter(|nb| t.binary_search(&nb.id).is_ok())
                .count();
            Ok(hits as f64 / k as f64)
        })
        .collect::<Result<Vec<f64>>>()?
        .iter()
        .sum();
    Ok(QualityEstimate {
        r_hat: total / n_s as f64,
        n_s,
        epsilon,
        l,
        samples,
    })
}

/// Parameters shared by both NSG builders.
#[derive(Clone, Debug, PartialEq)]
pub struct NsgParams {
    /// Neighbors per node in the initial KNNG.
    pub k0: usize,
    /// Candidates kept per node.
    pub k: usize,
    /// Beam width of candidate searches.
    pub l: usize,
    /// Out-degree cap of the final graph.
    pub m: usize,
    pub knng_iters: usize,
    pub knng_rho: f64,
    pub seed: u64,
}

impl NsgParams {
    pub fn new(k0: usize, k: usize, l: usize, m: usize) -> Self {
        NsgParams {
            k0,
            k,
            l,
            m,
            knng_iters: 10,
            knng_rho: 1.0,
            seed: 0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.k0 == 0 || self.k == 0 || self.m == 0 {
            return Err(Error::arg("k0, k and M must be at least 1"));
        }
        if self.k > self.l {
            return Err(Error::arg(format!(
                "need k <= L, got k = {}, L = {}",
                self.k, self.l
            )));
        }
        Ok(())
    }

    fn knng(&self, n: usize) -> KnngParams {
        let mut p = KnngParams::new(self.k0.min(n - 1), self.knng_iters, self.seed);
        p.rho = self.knng_rho;
        p
    }
}

/// When the iterative builder stops refining candidates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StopRule {
    /// Exactly this many rounds.
    MaxIters(usize),
    /// Until the sampled quality estimate reaches `target` (checked after every
    /// round, so at least one round runs), or `max_iters` rounds.
    TargetRecall {
        target: f64,
        epsilon: f64,
        l: f64,
        max_iters: usize,
    },
}

/// How quality estimates are scheduled relative to refinement rounds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QualityMode {
    /// Estimate after each round, before deciding whether to continue.
    Sync,
    /// Estimate round `i` on a background thread while round `i + 1` runs;
    /// the stop decision uses the latest finished estimate. The number of
    /// rounds then depends on timing.
    Async,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FastNsgParams {
    pub base: NsgParams,
    /// Alpha-pruning threshold in degrees for intermediate graphs.
    pub alpha: f64,
    pub stop: StopRule,
    pub quality: QualityMode,
    /// Reuse kernel results across rounds (output is unaffected).
    pub cache: bool,
    /// Bridge unreachable nodes in the final graph.
    pub connect: bool,
}

impl FastNsgParams {
    pub fn new(k0: usize, k: usize, l: usize, m: usize) -> Self {
        FastNsgParams {
            base: NsgParams::new(k0, k, l, m),
            alpha: 66.0,
            stop: StopRule::MaxIters(2),
            quality: QualityMode::Sync,
            cache: true,
            connect: true,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RoundStats {
    pub kcna: KcnaStats,
    pub estimate: Option<f64>,
    pub secs: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct NsgBuildStats {
    pub knng_dist: u64,
    pub knng_secs: f64,
    /// Candidate searches of the classic builder.
    pub search_dist: u64,
    pub search_secs: f64,
    pub rounds: Vec<RoundStats>,
    pub refine: RefineStats,
    pub refine_secs: f64,
    pub total_secs: f64,
}

impl NsgBuildStats {
    pub fn dist_total(&self) -> u64 {
        self.knng_dist
            + self.search_dist
            + self.rounds.iter().map(|r| r.kcna.dist_total()).sum::<u64>()
            + self.refine.prune.dist
            + self.refine.connect_dist
    }
}

#[derive(Clone, Debug)]
pub struct NsgBuild {
    pub graph: ProximityGraph,
    /// Candidate lists the final refinement consumed.
    pub candidates: Vec<Vec<Neighbor>>,
    pub stats: NsgBuildStats,
}

fn trivial(ds: &Dataset, m: usize) -> NsgBuild {
    NsgBuild {
        graph: ProximityGraph::new(ds.len(), m),
        candidates: vec![Vec::new(); ds.len()],
        stats: NsgBuildStats::default(),
    }
}

fn knng_graph(knng: &KnngState) -> ProximityGraph {
    let lists = knng.lists().iter().map(|l| ids(l)).collect();
    ProximityGraph::from_parts(lists, vec![0; knng.len()], knng.k0(), 0)
}

fn final_refine(
    ds: &Dataset,
    candidates: Vec<Vec<Neighbor>>,
    p: &NsgParams,
    connect: bool,
    entry: u32,
    stats: &mut NsgBuildStats,
) -> Result<NsgBuild> {
    let t = Instant::now();
    let mut rp = RefineParams::new(PruneParams::rng(p.m), connect);
    rp.connect_l = p.l;
    let (graph, rs) = refine(ds, &candidates, &rp, entry)?;
    stats.refine = rs;
    stats.refine_secs = t.elapsed().as_secs_f64();
    Ok(NsgBuild {
        graph,
        candidates,
        stats: stats.clone(),
    })
}

/// Classic NSG: KNNG, entry point near the centroid, a beam search on the
/// KNNG for every node, then RNG refinement with bridging.
pub fn build_nsg_original(ds: &Dataset, p: &NsgParams) -> Result<NsgBuild> {
    p.validate()?;
    let start = Instant::now();
    let n = ds.len();
    if n == 1 {
        return Ok(trivial(ds, p.m));
    }
    let mut stats = NsgBuildStats::default();
    let t = Instant::now();
    let knng = build_knng_with(ds, &p.knng(n))?;
    stats.knng_dist = knng.dist_count;
    stats.knng_secs = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let gk = knng_graph(&knng);
    drop(knng);
    let entry = entry_point(ds, &gk, p.k, p.l, p.seed)?;
    let k = p.k.min(n - 1);
    let results: Vec<(Vec<Neighbor>, u64)> = (0..n as u32)
        .into_par_iter()
        .map_init(
            || SearchScratch::new(n),
            |s, u| {
                let before = s.dist_count;
                run_for_point(&gk, ds, u, p.l, entry, s);
                (s.pool.truncated(k), s.dist_count - before)
            },
        )
        .collect();
    drop(gk);
    stats.search_dist = results.iter().map(|r| r.1).sum();
    let candidates: Vec<Vec<Neighbor>> = results.into_iter().map(|r| r.0).collect();
    stats.search_secs = t.elapsed().as_secs_f64();

    let mut out = final_refine(ds, candidates, p, true, entry, &mut stats)?;
    out.stats.total_secs = start.elapsed().as_secs_f64();
    Ok(out)
}

/// Iterative NSG: KNNG, rounds of [`opt_kcna`] until the stop rule fires,
/// then RNG refinement of the last candidate lists.
pub fn build_fastnsg(ds: &Dataset, p: &FastNsgParams) -> Result<NsgBuild> {
    let b = &p.base;
    b.validate()?;
    PruneParams::alpha(b.m, p.alpha)?;
    let (target, max_iters, epsilon, conf) = match p.stop {
        StopRule::MaxIters(i) => (None, i, 0.0, 0.0),
        StopRule::TargetRecall {
            target,
            epsilon,
            l,
            max_iters,
        } => {
            if !(epsilon > 0.0 && epsilon <= 1.0) || !(1.0..).contains(&l) {
                return Err(Error::arg("need 0 < epsilon <= 1 and l >= 1"));
            }
            (Some(target), max_iters.max(1), epsilon, l)
        }
    };
    let start = Instant::now();
    let n = ds.len();
    if n == 1 {
        return Ok(trivial(ds, b.m));
    }
    let mut stats = NsgBuildStats::default();
    let t = Instant::now();
    let knng = build_knng_with(ds, &b.knng(n))?;
    stats.knng_dist = knng.dist_count;
    stats.knng_secs = t.elapsed().as_secs_f64();
    let entry = entry_point(ds, &knng_graph(&knng), b.k, b.l, b.seed)?;

    let kp = KcnaParams {
        k: b.k,
        l: b.l,
        m: b.m,
        alpha: p.alpha,
    };
    let mut state = CnaState::from_knng(knng);
    let mut cache = p.cache.then(KcnaCache::new);
    let mut round = |state: &CnaState| -> Result<(CnaState, RoundStats)> {
        let t = Instant::now();
        let r = match cache.as_mut() {
            Some(c) => opt_kcna_cached(state, ds, &kp, entry, c)?,
            None => opt_kcna(state, ds, &kp, entry)?,
        };
        let rs = RoundStats {
            kcna: r.stats,
            estimate: None,
            secs: t.elapsed().as_secs_f64(),
        };
        log::debug!("round {}: {:?}", r.state.iteration(), r.stats);
        Ok((r.state, rs))
    };
    let estimate =
        |s: &CnaState| estimate_quality(s, ds, epsilon, conf, b.k, b.seed ^ s.iteration() as u64);

    match (target, p.quality) {
        (None, _) => {
            for _ in 0..max_iters {
                let (next, rs) = round(&state)?;
                state = next;
                stats.rounds.push(rs);
            }
        }
        (Some(target), QualityMode::Sync) => loop {
            let (next, mut rs) = round(&state)?;
            state = next;
            let est = estimate(&state)?.r_hat;
            rs.estimate = Some(est);
            stats.rounds.push(rs);
            if est >= target || state.iteration() >= max_iters {
                break;
            }
        },
        (Some(target), QualityMode::Async) => {
            std::thread::scope(|scope| -> Result<()> {
                let mut pending: Option<std::thread::ScopedJoinHandle<'_, Result<f64>>> = None;
                let mut latest: Option<f64> = None;
                loop {
                    let (next, mut rs) = round(&state)?;
                    state = next;
                    if pending.as_ref().is_some_and(|h| h.is_finished()) {
                        let h = pending.take().unwrap();
                        latest = Some(
                            h.join()
                                .map_err(|_| Error::arg("quality thread panicked"))??,
                        );
                    }
                    rs.estimate = latest;
                    stats.rounds.push(rs);
                    if latest.is_some_and(|e| e >= target) || state.iteration() >= max_iters {
                        break;
                    }
                    if pending.is_none() {
                        let snapshot = Arc::new(state.clone());
                        let est = &estimate;
                        pending = Some(scope.spawn(move || est(&snapshot).map(|q| q.r_hat)));
                    }
                }
                Ok(())
            })?;
        }
    }
    drop(cache);

    let mut out = final_refine(ds, state.into_lists(), b, p.connect, entry, &mut stats)?;
    out.stats.total_secs = start.elapsed().as_secs_f64();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::knng::{build_knng, knng_init_random};
    use crate::oracle::ground_truth_table;
    use crate::search::kann_search;
    use crate::synth::{gen_synthetic, Distribution};

    fn cna_recall(state: &CnaState, truth: &[Vec<u32>], k: usize) -> f64 {
        let hits: usize = state
            .lists()
            .iter()
            .zip(truth)
            .map(|(l, t)| {
                l.iter()
                    .take(k)
                    .filter(|nb| t[..k].contains(&nb.id))
                    .count()
            })
            .sum();
        hits as f64 / (k * truth.len()) as f64
    }

    fn check_state(state: &CnaState, k: usize) {
        for (u, l) in state.lists().iter().enumerate() {
            assert_eq!(l.len(), k);
            assert!(l.windows(2).all(|w| w[0].precedes(&w[1])));
            assert!(l.iter().all(|nb| nb.id as usize != u));
        }
    }

    #[test]
    fn sample_sizes() {
        assert_eq!(sample_size(1_000_000, 0.6, 1.0), 354);
        assert_eq!(sample_size(5000, 0.6, 1.0), 218);
        assert_eq!(sample_size(10, 0.1, 1.0), 10);
    }

    #[test]
    fn exact_lists_estimate_perfectly() {
        let ds = gen_synthetic(600, 4, Distribution::Uniform, 1).unwrap();
        let lists = (0..600u32)
            .map(|u| exact_knn_excluding(&ds, ds.row(u), 10, Some(u)).unwrap())
            .collect();
        let state = CnaState::from_lists(lists);
        for s in 0..3 {
            assert_eq!(
                estimate_quality(&state, &ds, 0.6, 1.0, 10, s)
                    .unwrap()
                    .r_hat,
                1.0
            );
        }
    }

    #[test]
    fn round_improves_random_candidates() {
        let ds = gen_synthetic(2000, 16, Distribution::Uniform, 2).unwrap();
        let truth = ground_truth_table(&ds, &ds, 20, true).unwrap();
        let state = CnaState::from_knng(knng_init_random(&ds, 20, 3).unwrap());
        let before = cna_recall(&state, &truth, 20);
        let p = KcnaParams {
            k: 20,
            l: 40,
            m: 20,
            alpha: 66.0,
        };
        let r = opt_kcna(&state, &ds, &p, 0).unwrap();
        check_state(&r.state, 20);
        let after = cna_recall(&r.state, &truth, 20);
        assert!(after > before, "{before} -> {after}");
        assert!(r.graph.reachable_from(0).iter().all(|&x| x));
    }

    #[test]
    fn exact_candidates_do_not_regress() {
        let ds = gen_synthetic(2000, 8, Distribution::Uniform, 4).unwrap();
        let truth = ground_truth_table(&ds, &ds, 10, true).unwrap();
        let lists = truth
            .iter()
            .enumerate()
            .map(|(u, t)| {
                t.iter()
                    .map(|&v| Neighbor::new(v, ds.dist(u as u32, v)))
                    .collect()
            })
            .collect();
        let state = CnaState::from_lists(lists);
        let p = KcnaParams {
            k: 10,
            l: 30,
            m: 16,
            alpha: 90.0,
        };
        let r = opt_kcna(&state, &ds, &p, 0).unwrap();
        assert!(cna_recall(&r.state, &truth, 10) >= cna_recall(&state, &truth, 10));
    }

    #[test]
    fn pruned_graph_is_sparser_than_knng() {
        let ds = gen_synthetic(1000, 8, Distribution::Uniform, 5).unwrap();
        let state = CnaState::from_knng(build_knng(&ds, 24, 4, 1).unwrap());
        let r = opt_kcna(
            &state,
            &ds,
            &KcnaParams {
                k: 24,
                l: 40,
                m: 12,
                alpha: 66.0,
            },
            0,
        )
        .unwrap();
        assert!(r.graph.mean_degree() < 24.0);
    }

    #[test]
    fn cached_rounds_match_plain_rounds() {
        let ds = gen_synthetic(1500, 12, Distribution::Gaussian, 6).unwrap();
        let p = KcnaParams {
            k: 16,
            l: 32,
            m: 12,
            alpha: 66.0,
        };
        let mut plain = CnaState::from_knng(build_knng(&ds, 16, 2, 2).unwrap());
        let mut cached = plain.clone();
        let mut cache = KcnaCache::new();
        for round in 0..3 {
            let a = opt_kcna(&plain, &ds, &p, 0).unwrap();
            let b = opt_kcna_cached(&cached, &ds, &p, 0, &mut cache).unwrap();
            assert_eq!(a.state, b.state);
            assert_eq!(a.graph, b.graph);
            if round == 0 {
                assert_eq!(a.stats, b.stats);
            } else {
                assert!(b.stats.search_dist < a.stats.search_dist);
                assert!(b.stats.refine.prune.dist < a.stats.refine.prune.dist);
            }
            plain = a.state;
            cached = b.state;
        }
    }

    #[test]
    fn converged_state_prunes_for_free() {
        let ds = gen_synthetic(500, 4, Distribution::Uniform, 7).unwrap();
        let lists: Vec<Vec<Neighbor>> = (0..500u32)
            .map(|u| exact_knn_excluding(&ds, ds.row(u), 12, Some(u)).unwrap())
            .collect();
        let state = CnaState::from_lists(lists);
        let p = KcnaParams {
            k: 12,
            l: 24,
            m: 10,
            alpha: 66.0,
        };
        let mut cache = KcnaCache::new();
        opt_kcna_cached(&state, &ds, &p, 0, &mut cache).unwrap();
        let again = opt_kcna_cached(&state, &ds, &p, 0, &mut cache).unwrap();
        assert_eq!(again.stats.refine.prune.dist, 0);
        assert_eq!(again.stats.search_dist, 0);
    }

    #[test]
    fn original_on_a_line() {
        let rows: Vec<[f32; 1]> = (0..10).map(|i| [i as f32]).collect();
        let ds = Dataset::from_rows(&rows).unwrap();
        let mut p = NsgParams::new(9, 5, 10, 4);
        p.seed = 3;
        let b = build_nsg_original(&ds, &p).unwrap();
        for u in 0..10u32 {
            let nn = if u == 0 { 1 } else { u - 1 };
            assert!(b.graph.neighbors(u).contains(&nn) || b.graph.neighbors(u).contains(&(u + 1)));
        }
        assert!(b.graph.reachable_from(b.graph.entry()).iter().all(|&r| r));
        let again = build_nsg_original(&ds, &p).unwrap();
        assert_eq!(b.graph, again.graph);
    }

    #[test]
    fn stop_rules() {
        let ds = gen_synthetic(800, 8, Distribution::Uniform, 8).unwrap();
        let mut p = FastNsgParams::new(16, 16, 32, 12);
        p.stop = StopRule::TargetRecall {
            target: 0.0,
            epsilon: 0.6,
            l: 1.0,
            max_iters: 5,
        };
        let b = build_fastnsg(&ds, &p).unwrap();
        assert_eq!(b.stats.rounds.len(), 1);
        assert!(b.stats.rounds[0].estimate.is_some());

        p.stop = StopRule::TargetRecall {
            target: 1.1,
            epsilon: 0.6,
            l: 1.0,
            max_iters: 3,
        };
        assert_eq!(build_fastnsg(&ds, &p).unwrap().stats.rounds.len(), 3);

        p.quality = QualityMode::Async;
        let b = build_fastnsg(&ds, &p).unwrap();
        assert_eq!(b.stats.rounds.len(), 3);
        assert!(b.graph.reachable_from(b.graph.entry()).iter().all(|&r| r));
    }

    #[test]
    fn cache_does_not_change_the_build() {
        let ds = gen_synthetic(1000, 8, Distribution::Uniform, 9).unwrap();
        let mut p = FastNsgParams::new(16, 16, 32, 12);
        p.stop = StopRule::MaxIters(3);
        let a = build_fastnsg(&ds, &p).unwrap();
        p.cache = false;
        let b = build_fastnsg(&ds, &p).unwrap();
        assert_eq!(a.graph, b.graph);
        assert!(a.stats.dist_total() < b.stats.dist_total());
    }

    #[test]
    fn fast_build_is_searchable() {
        let ds = gen_synthetic(2000, 8, Distribution::Uniform, 10).unwrap();
        let b = build_fastnsg(&ds, &FastNsgParams::new(20, 20, 40, 16)).unwrap();
        b.graph.validate().unwrap();
        let mut hits = 0;
        for u in (0..2000u32).step_by(20) {
            let res = kann_search(&b.graph, &ds, ds.row(u), 1, 20, b.graph.entry()).unwrap();
            hits += usize::from(res[0].id == u);
        }
        assert!(hits >= 95, "{hits} of 100 self queries found");
    }

    #[test]
    fn rejects_bad_params() {
        let ds = gen_synthetic(50, 2, Distribution::Uniform, 1).unwrap();
        assert!(build_nsg_original(&ds, &NsgParams::new(10, 20, 10, 8)).is_err());
        let mut p = FastNsgParams::new(10, 10, 20, 8);
        p.alpha = 45.0;
        assert!(build_fastnsg(&ds, &p).is_err());
        let one = Dataset::from_rows(&[[1.0f32]]).unwrap();
        assert_eq!(
            build_fastnsg(&one, &FastNsgParams::new(4, 4, 8, 4))
                .unwrap()
                .graph
                .len(),
            1
        );
    }
}
