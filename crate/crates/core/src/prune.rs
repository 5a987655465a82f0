//! Edge selection and graph refinement.
//!
//! Both strategies scan a node's candidates in ascending `(dist, id)` order and
//! keep a candidate `v` unless some already kept `w` dominates it:
//!
//! * RNG: `d(v, w) < d(u, v)`, i.e. `uv` is the longest side of triangle `uwv`;
//! * alpha: additionally the apex angle at `w` exceeds `alpha`, tested as
//!   `cos(angle uwv) < cos(alpha)`.
//!
//! Because kept neighbors are scanned first, `d(u, w) <= d(u, v)` always holds,
//! so in a dominated triangle `uv` is the strictly longest side and the angle
//! at `w` is above 60 degrees. With `alpha = 60` the two strategies agree
//! exactly, including in floating point: the cosine is evaluated in `f64` from
//! the `f32` squared distances, which resolves the gap below `0.5` that the
//! longest-side condition guarantees.
//!
//! When `w` coincides with `v` (`d(v, w) = 0`) or with `u`, the angle is
//! undefined; the candidate then counts as dominated whenever the RNG
//! condition holds.
//!
//! [`refine`] turns candidate lists into a graph in three phases: prune every
//! list, re-prune each node's pruned list together with its reverse edges, and
//! optionally bridge every node not reachable from the entry point.

use rand::Rng;
use rayon::prelude::*;

use crate::dataset::Dataset;
use crate::distance::cos_from_squared;
use crate::error::{Error, Result};
use crate::graph::ProximityGraph;
use crate::neighbor::{sort_neighbors, Neighbor};
use crate::search::{kann_search, kann_search_with, SearchScratch};
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Strategy {
    Rng,
    Alpha,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PruneParams {
    pub max_degree: usize,
    pub strategy: Strategy,
    alpha_deg: f64,
    cos_alpha: f64,
}

impl PruneParams {
    pub fn rng(max_degree: usize) -> Self {
        PruneParams {
            max_degree,
            strategy: Strategy::Rng,
            alpha_deg: 60.0,
            cos_alpha: 0.5,
        }
    }

    /// Alpha pruning with the threshold in degrees, `60 <= alpha < 180`.
    pub fn alpha(max_degree: usize, alpha_deg: f64) -> Result<Self> {
        if !(60.0..180.0).contains(&alpha_deg) {
            return Err(Error::arg(format!("alpha = {alpha_deg} outside [60, 180)")));
        }
        Ok(PruneParams {
            max_degree,
            strategy: Strategy::Alpha,
            alpha_deg,
            cos_alpha: alpha_deg.to_radians().cos(),
        })
    }

    pub fn alpha_degrees(&self) -> f64 {
        self.alpha_deg
    }

    fn validate(&self) -> Result<()> {
        if self.max_degree == 0 {
            return Err(Error::arg("max degree must be at least 1"));
        }
        Ok(())
    }
}

/// Kernel calls made while pruning.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PruneCounters {
    pub dist: u64,
    pub angle: u64,
}

impl std::ops::AddAssign for PruneCounters {
    fn add_assign(&mut self, o: Self) {
        self.dist += o.dist;
        self.angle += o.angle;
    }
}

impl std::iter::Sum for PruneCounters {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(PruneCounters::default(), |mut a, b| {
            a += b;
            a
        })
    }
}

const KEPT: u32 = u32::MAX;

/// Verdicts of one prune call: for each candidate examined, either kept or
/// the id of the kept neighbor that dominated it. Dominance of `v` by `w` is
/// a property of the triangle `(u, w, v)` alone, so a recorded verdict stays
/// valid in later calls for the same `u`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PruneRecord {
    ids: Vec<u32>,
    verdicts: Vec<u32>,
}

impl PruneRecord {
    fn get(&self, id: u32) -> Option<u32> {
        self.ids.binary_search(&id).ok().map(|i| self.verdicts[i])
    }

    fn from_pairs(mut pairs: Vec<(u32, u32)>) -> Self {
        pairs.sort_unstable_by_key(|p| p.0);
        let (ids, verdicts) = pairs.into_iter().unzip();
        PruneRecord { ids, verdicts }
    }
}

/// Per-node verdict records of the previous refine, one set per phase.
#[derive(Clone, Debug, Default)]
pub struct PruneCache {
    phase_a: Vec<PruneRecord>,
    phase_b: Vec<PruneRecord>,
}

impl PruneCache {
    pub fn new() -> Self {
        PruneCache::default()
    }
}

#[derive(Clone, Copy)]
struct Pruner<'a> {
    ds: &'a Dataset,
    params: PruneParams,
}

impl Pruner<'_> {
    /// Whether kept `w` (at `uw` from `u`) dominates candidate `v` (at `uv`).
    #[inline]
    fn dominates(&self, uw: f32, w: u32, uv: f32, v: u32, c: &mut PruneCounters) -> bool {
        let vw = self.ds.dist(v, w);
        c.dist += 1;
        if vw >= uv {
            return false;
        }
        match self.params.strategy {
            Strategy::Rng => true,
            Strategy::Alpha => match cos_from_squared(uw, vw, uv) {
                Some(cos) => {
                    c.angle += 1;
                    cos < self.params.cos_alpha
                }
                None => true,
            },
        }
    }

    fn prune(
        &self,
        cands: &[Neighbor],
        prev: Option<&PruneRecord>,
        c: &mut PruneCounters,
        record: bool,
    ) -> (Vec<Neighbor>, Option<PruneRecord>) {
        let m = self.params.max_degree;
        let mut kept: Vec<Neighbor> = Vec::with_capacity(m);
        // whether each kept neighbor was also kept by the previous call
        let mut kept_before: Vec<bool> = Vec::with_capacity(m);
        let mut pairs = Vec::new();
        for &v in cands {
            if kept.len() >= m {
                break;
            }
            let last = prev.and_then(|p| p.get(v.id));
            let dominator = match last {
                Some(KEPT) => kept
                    .iter()
                    .zip(&kept_before)
                    .filter(|(_, &old)| !old)
                    .find(|(w, _)| self.dominates(w.dist, w.id, v.dist, v.id, c))
                    .map(|(w, _)| w.id),
                Some(w) if kept.iter().any(|k| k.id == w) => Some(w),
                _ => kept
                    .iter()
                    .find(|w| self.dominates(w.dist, w.id, v.dist, v.id, c))
                    .map(|w| w.id),
            };
            match dominator {
                None => {
                    kept.push(v);
                    kept_before.push(last == Some(KEPT));
                    if record {
                        pairs.push((v.id, KEPT));
                    }
                }
                Some(w) if record => pairs.push((v.id, w)),
                Some(_) => {}
            }
        }
        (kept, record.then(|| PruneRecord::from_pairs(pairs)))
    }
}

/// Greedy prune of `u`'s sorted candidates with the given strategy.
pub fn prune(
    ds: &Dataset,
    cands: &[Neighbor],
    params: &PruneParams,
    counters: &mut PruneCounters,
) -> Vec<Neighbor> {
    Pruner {
        ds,
        params: *params,
    }
    .prune(cands, None, counters, false)
    .0
}

/// RNG pruning to at most `m` neighbors.
pub fn rng_prune(ds: &Dataset, cands: &[Neighbor], m: usize) -> Vec<Neighbor> {
    prune(
        ds,
        cands,
        &PruneParams::rng(m),
        &mut PruneCounters::default(),
    )
}

/// Alpha pruning to at most `m` neighbors.
pub fn alpha_prune(
    ds: &Dataset,
    cands: &[Neighbor],
    m: usize,
    alpha_deg: f64,
) -> Result<Vec<Neighbor>> {
    let params = PruneParams::alpha(m, alpha_deg)?;
    Ok(prune(ds, cands, &params, &mut PruneCounters::default()))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RefineParams {
    pub prune: PruneParams,
    /// Bridge nodes unreachable from the entry point.
    pub connect: bool,
    /// Beam width of the searches that pick bridge sources.
    pub connect_l: usize,
}

impl RefineParams {
    pub fn new(prune: PruneParams, connect: bool) -> Self {
        RefineParams {
            prune,
            connect,
            connect_l: 100,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RefineStats {
    pub prune: PruneCounters,
    pub connect_dist: u64,
    pub connect_edges: usize,
}

fn check_candidates(n: usize, candidates: &[Vec<Neighbor>]) -> Result<()> {
    if candidates.len() != n {
        return Err(Error::arg(format!(
            "{} candidate lists for {n} points",
            candidates.len()
        )));
    }
    for (u, list) in candidates.iter().enumerate() {
        if list
            .iter()
            .any(|nb| nb.id as usize >= n || nb.id as usize == u)
        {
            return Err(Error::arg(format!(
                "candidate list {u} has a self or out-of-range id"
            )));
        }
    }
    Ok(())
}

/// Builds a graph from per-node candidate lists (each sorted by `(dist, id)`,
/// distances measured from the owner).
pub fn refine(
    ds: &Dataset,
    candidates: &[Vec<Neighbor>],
    params: &RefineParams,
    entry: u32,
) -> Result<(ProximityGraph, RefineStats)> {
    refine_impl(ds, candidates, params, entry, None)
}

/// [`refine`] that reuses and then replaces the verdicts in `cache`. The
/// output is identical to [`refine`]; only kernel calls are saved.
pub fn refine_cached(
    ds: &Dataset,
    candidates: &[Vec<Neighbor>],
    params: &RefineParams,
    entry: u32,
    cache: &mut PruneCache,
) -> Result<(ProximityGraph, RefineStats)> {
    refine_impl(ds, candidates, params, entry, Some(cache))
}

fn refine_impl(
    ds: &Dataset,
    candidates: &[Vec<Neighbor>],
    params: &RefineParams,
    entry: u32,
    cache: Option<&mut PruneCache>,
) -> Result<(ProximityGraph, RefineStats)> {
    let n = ds.len();
    params.prune.validate()?;
    check_candidates(n, candidates)?;
    if entry as usize >= n {
        return Err(Error::arg(format!("entry point {entry} out of range")));
    }
    let pruner = Pruner {
        ds,
        params: params.prune,
    };
    let record = cache.is_some();
    let none = Vec::new();
    let (prev_a, prev_b) = match cache.as_deref() {
        Some(c) => (&c.phase_a, &c.phase_b),
        None => (&none, &none),
    };

    let phase_a: Vec<(Vec<Neighbor>, Option<PruneRecord>, PruneCounters)> = candidates
        .par_iter()
        .enumerate()
        .map(|(u, cands)| {
            let mut c = PruneCounters::default();
            let (kept, rec) = pruner.prune(cands, prev_a.get(u), &mut c, record);
            (kept, rec, c)
        })
        .collect();

    let mut reverse: Vec<Vec<Neighbor>> = vec![Vec::new(); n];
    for (u, (kept, _, _)) in phase_a.iter().enumerate() {
        for nb in kept {
            reverse[nb.id as usize].push(Neighbor::new(u as u32, nb.dist));
        }
    }

    let phase_b: Vec<(Vec<u32>, Option<PruneRecord>, PruneCounters)> = phase_a
        .par_iter()
        .zip(reverse.par_iter_mut())
        .enumerate()
        .map(|(u, ((kept, _, _), rev))| {
            rev.extend_from_slice(kept);
            sort_neighbors(rev);
            rev.dedup_by_key(|nb| nb.id);
            let mut c = PruneCounters::default();
            let (kept, rec) = pruner.prune(rev, prev_b.get(u), &mut c, record);
            (kept.iter().map(|nb| nb.id).collect(), rec, c)
        })
        .collect();

    let mut stats = RefineStats {
        prune: phase_a.iter().map(|x| x.2).sum::<PruneCounters>(),
        ..RefineStats::default()
    };
    stats.prune += phase_b.iter().map(|x| x.2).sum::<PruneCounters>();

    let mut adjacency = Vec::with_capacity(n);
    let mut records_b = Vec::with_capacity(if record { n } else { 0 });
    for (ids, rec, _) in phase_b {
        adjacency.push(ids);
        records_b.extend(rec);
    }
    if let Some(c) = cache {
        c.phase_a = phase_a.into_iter().filter_map(|x| x.1).collect();
        c.phase_b = records_b;
    }

    let mut g = ProximityGraph::from_parts(adjacency, vec![0; n], params.prune.max_degree, entry);
    if params.connect {
        let (dist, edges) = connect(&mut g, ds, entry, params.connect_l.max(1))?;
        stats.connect_dist = dist;
        stats.connect_edges = edges;
    }
    Ok((g, stats))
}

/// Makes every node reachable from `entry`: for each unreached node in id
/// order, searches for it from `entry` and links the closest reached node to
/// it. Returns the distance count and the number of edges added.
pub fn connect(g: &mut ProximityGraph, ds: &Dataset, entry: u32, l: usize) -> Result<(u64, usize)> {
    let n = g.len();
    let mut seen = vec![false; n];
    let mut reached = g.mark_reachable(entry, &mut seen);
    let mut scratch = SearchScratch::new(n);
    let mut added = 0;
    for v in 0..n as u32 {
        if reached == n {
            break;
        }
        if seen[v as usize] {
            continue;
        }
        let from = kann_search_with(g, ds, ds.row(v), 1, l, entry, &mut scratch)?[0].id;
        g.push_connect_edge(from, v);
        added += 1;
        reached += g.mark_reachable(v, &mut seen);
    }
    Ok((scratch.dist_count, added))
}

/// Top-1 of a search for the dataset centroid, started from a seeded random
/// node: an approximate medoid.
pub fn entry_point(
    ds: &Dataset,
    g: &ProximityGraph,
    k: usize,
    l: usize,
    seed_value: u64,
) -> Result<u32> {
    if g.len() != ds.len() {
        return Err(Error::arg("graph and dataset sizes differ"));
    }
    let start = seed::rng(seed_value, &[seed::ENTRY]).random_range(0..g.len() as u32);
    let centroid = ds.centroid();
    Ok(kann_search(g, ds, &centroid, k.min(l), l, start)?[0].id)
}
