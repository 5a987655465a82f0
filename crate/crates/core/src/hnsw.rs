//! Layered (HNSW-style) graphs.
//!
//! Every node draws a top layer `l(u) = floor(-ln(U) * m_factor)` and belongs
//! to layers `0..=l(u)`. [`build_hnsw_original`] inserts nodes one at a time,
//! so each node only ever sees the nodes inserted before it.
//! [`build_fasthnsw`] fixes all layers first and builds every layer from its
//! complete member set with the iterative NSG builder.

use std::sync::Mutex;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::graph::{LayeredGraph, ProximityGraph};
use crate::neighbor::{ids, sort_neighbors, Neighbor};
use crate::nsg::{build_fastnsg, FastNsgParams, NsgBuildStats, QualityMode, StopRule};
use crate::prune::{prune, PruneCounters, PruneParams};
use crate::search::SearchScratch;
use crate::seed;

/// Standard level multiplier `1 / ln(M)`.
pub fn default_m_factor(m: usize) -> f64 {
    1.0 / (m.max(2) as f64).ln()
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerAssignment {
    pub levels: Vec<u8>,
    pub m_factor: f64,
}

impl LayerAssignment {
    /// Index of the highest non-empty layer.
    pub fn top(&self) -> usize {
        self.levels.iter().copied().max().unwrap_or(0) as usize
    }

    /// Members of layer `i`, ascending.
    pub fn members(&self, i: usize) -> Vec<u32> {
        (0..self.levels.len() as u32)
            .filter(|&u| self.levels[u as usize] as usize >= i)
            .collect()
    }
}

/// Draws `l(u) = floor(-ln(U) * m_factor)` with `U` uniform on `(0, 1]`.
pub fn assign_layers(n: usize, m_factor: f64, seed_value: u64) -> Result<LayerAssignment> {
    if !(m_factor > 0.0 && m_factor.is_finite()) {
        return Err(Error::arg(format!(
            "level multiplier {m_factor} must be positive"
        )));
    }
    let mut rng = seed::rng(seed_value, &[seed::LAYERS]);
    let levels = (0..n)
        .map(|_| {
            let u: f64 = 1.0 - rng.random::<f64>();
            (-u.ln() * m_factor).floor().min(u8::MAX as f64) as u8
        })
        .collect();
    Ok(LayerAssignment { levels, m_factor })
}

#[derive(Clone, Debug, PartialEq)]
pub struct HnswParams {
    pub ef: usize,
    pub m: usize,
    /// Level multiplier; `None` means [`default_m_factor`].
    pub m_factor: Option<f64>,
    pub seed: u64,
    /// Insert nodes concurrently. Faster with many threads, but the result
    /// then depends on scheduling.
    pub parallel: bool,
}

impl HnswParams {
    pub fn new(ef: usize, m: usize) -> Self {
        HnswParams {
            ef,
            m,
            m_factor: None,
            seed: 0,
            parallel: false,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct HnswStats {
    pub dist_count: u64,
    pub prune: PruneCounters,
    pub secs: f64,
    /// Per-layer statistics of the iterative builder, top layer first.
    pub layers: Vec<(usize, Option<NsgBuildStats>)>,
}

#[derive(Clone, Debug)]
pub struct HnswBuild {
    pub graph: LayeredGraph,
    /// Layer-0 candidates of every node: for the incremental builder the beam
    /// search result at insertion time, for the layer-global builder the final
    /// candidate lists of layer 0.
    pub candidates: Vec<Vec<u32>>,
    pub stats: HnswStats,
}

type Layer = Vec<Mutex<Vec<u32>>>;

struct Inserter<'a> {
    ds: &'a Dataset,
    levels: &'a [u8],
    layers: Vec<Layer>,
    entry: Mutex<Option<(u32, usize)>>,
    ef: usize,
    m: usize,
}

struct Counts {
    dist: u64,
    prune: PruneCounters,
}

impl Inserter<'_> {
    // Beam search over lists that other inserters may be editing; each list is
    // copied out under its lock.
    #[allow(clippy::too_many_arguments)]
    fn search(
        &self,
        layer: usize,
        q: &[f32],
        l: usize,
        start: u32,
        s: &mut SearchScratch,
        buf: &mut Vec<u32>,
        c: &mut Counts,
    ) -> Vec<Neighbor> {
        let lists = &self.layers[layer];
        s.begin(lists.len(), l);
        s.visit(start);
        c.dist += 1;
        s.pool
            .insert_new(Neighbor::new(start, self.ds.dist_to(q, start)));
        while let Some(cur) = s.pool.next_unexpanded() {
            buf.clear();
            buf.extend_from_slice(&lists[cur.id as usize].lock().unwrap());
            for &v in buf.iter() {
                if s.visit(v) {
                    c.dist += 1;
                    s.pool.insert_new(Neighbor::new(v, self.ds.dist_to(q, v)));
                }
            }
        }
        s.pool.entries().to_vec()
    }

    fn insert(&self, u: u32, s: &mut SearchScratch, buf: &mut Vec<u32>) -> (Vec<u32>, Counts) {
        let mut c = Counts {
            dist: 0,
            prune: PruneCounters::default(),
        };
        let level = self.levels[u as usize] as usize;
        let Some((ep, top)) = *self.entry.lock().unwrap() else {
            *self.entry.lock().unwrap() = Some((u, level));
            return (Vec::new(), c);
        };
        let q = self.ds.row(u);
        let mut w = ep;
        for i in (level + 1..=top).rev() {
            w = self.search(i, q, 1, w, s, buf, &mut c)[0].id;
        }
        let rng = PruneParams::rng(self.m);
        let mut w0 = Vec::new();
        for i in (0..=level.min(top)).rev() {
            let found = self.search(i, q, self.ef, w, s, buf, &mut c);
            w = found[0].id;
            if i == 0 {
                w0 = ids(&found);
            }
            let kept = prune(self.ds, &found, &rng, &mut c.prune);
            *self.layers[i][u as usize].lock().unwrap() = ids(&kept);
            for nb in &kept {
                let mut list = self.layers[i][nb.id as usize].lock().unwrap();
                list.push(u);
                if list.len() > self.m {
                    let v = nb.id;
                    let mut cands: Vec<Neighbor> = list
                        .iter()
                        .map(|&x| Neighbor::new(x, self.ds.dist(v, x)))
                        .collect();
                    c.dist += cands.len() as u64;
                    sort_neighbors(&mut cands);
                    *list = ids(&prune(self.ds, &cands, &rng, &mut c.prune));
                }
            }
        }
        if level > top {
            let mut e = self.entry.lock().unwrap();
            if e.map_or(true, |(_, t)| level > t) {
                *e = Some((u, level));
            }
        }
        (w0, c)
    }
}

/// Incremental HNSW: nodes are inserted in id order; each descends greedily
/// through the layers above its own, beam-searches every layer it joins with
/// width `ef`, keeps an RNG-pruned subset as out-edges and links back, re-pruning
/// any neighbor pushed over `M`.
pub fn build_hnsw_original(ds: &Dataset, p: &HnswParams) -> Result<HnswBuild> {
    if p.ef == 0 || p.m == 0 {
        return Err(Error::arg("ef and M must be at least 1"));
    }
    let start = Instant::now();
    let n = ds.len();
    let assignment = assign_layers(
        n,
        p.m_factor.unwrap_or_else(|| default_m_factor(p.m)),
        p.seed,
    )?;
    let levels = &assignment.levels;
    let top = assignment.top();
    let ins = Inserter {
        ds,
        levels,
        layers: (0..=top)
            .map(|_| (0..n).map(|_| Mutex::new(Vec::new())).collect())
            .collect(),
        entry: Mutex::new(None),
        ef: p.ef,
        m: p.m,
    };
    let mut s = SearchScratch::new(n);
    let mut buf = Vec::new();
    let (first, _) = ins.insert(0, &mut s, &mut buf);
    let rest: Vec<(Vec<u32>, Counts)> = if p.parallel {
        (1..n as u32)
            .into_par_iter()
            .map_init(
                || (SearchScratch::new(n), Vec::new()),
                |(s, buf), u| ins.insert(u, s, buf),
            )
            .collect()
    } else {
        (1..n as u32)
            .map(|u| ins.insert(u, &mut s, &mut buf))
            .collect()
    };

    let mut stats = HnswStats::default();
    let mut candidates = vec![first];
    for (w0, c) in rest {
        candidates.push(w0);
        stats.dist_count += c.dist;
        stats.prune += c.prune;
    }
    let (entry, _) = ins
        .entry
        .into_inner()
        .unwrap()
        .expect("dataset is non-empty");
    let layers = ins
        .layers
        .into_iter()
        .map(|layer| {
            let lists = layer.into_iter().map(|m| m.into_inner().unwrap()).collect();
            ProximityGraph::from_parts(lists, vec![0; n], p.m, entry)
        })
        .collect();
    let graph = LayeredGraph::new(assignment.levels.clone(), layers, entry)?;
    stats.secs = start.elapsed().as_secs_f64();
    Ok(HnswBuild {
        graph,
        candidates,
        stats,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct FastHnswParams {
    pub k0: usize,
    pub ef: usize,
    pub m: usize,
    pub alpha: f64,
    pub m_factor: Option<f64>,
    pub stop: StopRule,
    pub knng_iters: usize,
    pub knng_rho: f64,
    /// Bridge unreachable nodes in every layer built by the iterative builder.
    pub connect: bool,
    pub cache: bool,
    pub seed: u64,
}

impl FastHnswParams {
    pub fn new(k0: usize, ef: usize, m: usize) -> Self {
        FastHnswParams {
            k0,
            ef,
            m,
            alpha: 66.0,
            m_factor: None,
            stop: StopRule::MaxIters(2),
            knng_iters: 10,
            knng_rho: 1.0,
            connect: true,
            cache: true,
            seed: 0,
        }
    }
}

/// Layer-global HNSW: layers are assigned up front, the entry point is a
/// seeded pick from the top layer, and each layer is built top-down from all
/// of its members, as a complete graph when it has at most `M` members and
/// with the iterative NSG builder (`k = L = ef`) otherwise.
pub fn build_fasthnsw(ds: &Dataset, p: &FastHnswParams) -> Result<HnswBuild> {
    if p.ef == 0 || p.m == 0 || p.k0 == 0 {
        return Err(Error::arg("k0, ef and M must be at least 1"));
    }
    PruneParams::alpha(p.m, p.alpha)?;
    let start = Instant::now();
    let n = ds.len();
    let assignment = assign_layers(
        n,
        p.m_factor.unwrap_or_else(|| default_m_factor(p.m)),
        p.seed,
    )?;
    let top = assignment.top();
    let top_members = assignment.members(top);
    let pick = seed::rng(p.seed, &[seed::HNSW_ENTRY]).random_range(0..top_members.len());
    let entry = top_members[pick];

    let mut stats = HnswStats::default();
    let mut layers = vec![ProximityGraph::new(0, p.m); top + 1];
    let mut candidates = vec![Vec::new(); n];
    for i in (0..=top).rev() {
        let members = assignment.members(i);
        if members.len() <= p.m {
            layers[i] = ProximityGraph::complete_on(n, &members, p.m);
            layers[i].set_entry(entry);
            if i == 0 {
                for &u in &members {
                    candidates[u as usize] = layers[0].neighbors(u).to_vec();
                }
            }
            stats.layers.push((members.len(), None));
            continue;
        }
        let mut fp = FastNsgParams::new(p.k0.min(members.len() - 1), p.ef, p.ef, p.m);
        fp.alpha = p.alpha;
        fp.stop = p.stop;
        fp.quality = QualityMode::Sync;
        fp.cache = p.cache;
        fp.connect = p.connect;
        fp.base.knng_iters = p.knng_iters;
        fp.base.knng_rho = p.knng_rho;
        fp.base.seed = seed::derive(p.seed, &[seed::LAYER_BUILD, i as u64]);
        let sub;
        let data = if members.len() == n {
            ds
        } else {
            sub = ds.select(&members)?;
            &sub
        };
        let built = build_fastnsg(data, &fp)?;
        let mut adjacency = vec![Vec::new(); n];
        let mut extra = vec![0u32; n];
        for (j, &u) in members.iter().enumerate() {
            adjacency[u as usize] = built
                .graph
                .neighbors(j as u32)
                .iter()
                .map(|&x| members[x as usize])
                .collect();
            extra[u as usize] = built.graph.connect_edges(j as u32) as u32;
            if i == 0 {
                candidates[u as usize] = built.candidates[j]
                    .iter()
                    .map(|nb| members[nb.id as usize])
                    .collect();
            }
        }
        stats.dist_count += built.stats.dist_total();
        stats.layers.push((members.len(), Some(built.stats)));
        layers[i] = ProximityGraph::from_parts(adjacency, extra, p.m, entry);
    }
    let graph = LayeredGraph::new(assignment.levels, layers, entry)?;
    stats.secs = start.elapsed().as_secs_f64();
    Ok(HnswBuild {
        graph,
        candidates,
        stats,
    })
}
