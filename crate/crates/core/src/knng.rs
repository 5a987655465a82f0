//! Approximate k-nearest-neighbor graph by NN-Descent.
//!
//! Each round samples the entries of every list that are still flagged new,
//! adds sampled reverse neighbors, and joins every pair (new, new) and
//! (new, old) around each node: a pair `(a, b)` offers `b` to `a`'s list and `a`
//! to `b`'s. A list only accepts a candidate that strictly precedes its current
//! worst entry under `(dist, id)`, so after a round each list is the top-`k0` of
//! its old entries plus everything offered to it. That makes the result
//! independent of the order in which parallel workers deliver offers.

use std::sync::atomic::{AtomicU32, Ordering};
use std::sync::Mutex;

use rand::seq::index;
use rayon::prelude::*;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::neighbor::{sort_neighbors, Neighbor};
use crate::seed;

#[derive(Clone, Debug)]
pub struct KnngParams {
    pub k0: usize,
    /// Upper bound on NN-Descent rounds; 0 keeps the random initialization.
    pub iters: usize,
    /// Fraction of new entries (and reverse entries) sampled per round.
    pub rho: f64,
    /// Stop once a round changes fewer than `early_stop * n * k0` slots.
    pub early_stop: f64,
    pub seed: u64,
}

impl KnngParams {
    pub fn new(k0: usize, iters: usize, seed: u64) -> Self {
        KnngParams {
            k0,
            iters,
            rho: 1.0,
            early_stop: 0.001,
            seed,
        }
    }
}

/// Per-node neighbor lists of an approximate KNNG under construction.
#[derive(Clone, Debug, PartialEq)]
pub struct KnngState {
    k0: usize,
    rho: f64,
    seed: u64,
    iteration: usize,
    lists: Vec<Vec<Neighbor>>,
    /// Distance kernel calls spent so far, initialization included.
    pub dist_count: u64,
}

impl KnngState {
    /// Wraps existing sorted, self-free lists of equal length `k0`. Distances
    /// must be the ones [`Dataset::dist`] returns for each pair.
    pub fn from_lists(lists: Vec<Vec<Neighbor>>, seed: u64) -> Result<Self> {
        let k0 = lists.first().map_or(0, Vec::len);
        for (u, l) in lists.iter().enumerate() {
            if l.len() != k0 {
                return Err(Error::arg(format!(
                    "list {u} has {} entries, expected {k0}",
                    l.len()
                )));
            }
            if l.iter()
                .any(|nb| nb.id as usize == u || nb.id as usize >= lists.len())
            {
                return Err(Error::arg(format!(
                    "list {u} has a self or out-of-range id"
                )));
            }
            if !l.windows(2).all(|w| w[0].precedes(&w[1])) {
                return Err(Error::arg(format!("list {u} is not strictly sorted")));
            }
        }
        Ok(KnngState {
            k0,
            rho: 1.0,
            seed,
            iteration: 0,
            lists,
            dist_count: 0,
        })
    }

    pub fn k0(&self) -> usize {
        self.k0
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn set_rho(&mut self, rho: f64) -> Result<()> {
        if !(rho > 0.0 && rho <= 1.0) {
            return Err(Error::arg(format!("sample rate {rho} outside (0, 1]")));
        }
        self.rho = rho;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.lists.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lists.is_empty()
    }

    pub fn list(&self, u: u32) -> &[Neighbor] {
        &self.lists[u as usize]
    }

    pub fn lists(&self) -> &[Vec<Neighbor>] {
        &self.lists
    }

    pub fn into_lists(self) -> Vec<Vec<Neighbor>> {
        self.lists
    }
}

/// Every node gets `k0` distinct random non-self neighbors.
pub fn knng_init_random(ds: &Dataset, k0: usize, seed: u64) -> Result<KnngState> {
    let n = ds.len();
    if k0 == 0 || k0 >= n {
        return Err(Error::arg(format!("k0 = {k0} must be in 1..{n}")));
    }
    let lists = (0..n as u32)
        .into_par_iter()
        .map(|u| {
            let mut rng = seed::rng(seed, &[seed::KNNG_INIT, u as u64]);
            let mut list: Vec<Neighbor> = index::sample(&mut rng, n - 1, k0)
                .into_iter()
                .map(|j| {
                    let v = if j >= u as usize { j + 1 } else { j } as u32;
                    Neighbor::new(v, ds.dist(u, v))
                })
                .collect();
            sort_neighbors(&mut list);
            list
        })
        .collect();
    Ok(KnngState {
        k0,
        rho: 1.0,
        seed,
        iteration: 0,
        lists,
        dist_count: (n * k0) as u64,
    })
}

fn sample_ids(ids: &mut Vec<u32>, keep: usize, parts: &[u64], seed_value: u64) {
    if ids.len() > keep {
        let mut rng = seed::rng(seed_value, parts);
        let mut picked: Vec<usize> = index::sample(&mut rng, ids.len(), keep).into_vec();
        picked.sort_unstable();
        *ids = picked.into_iter().map(|i| ids[i]).collect();
    }
}

// A list under construction plus the f32 bits of its worst distance once full,
// so most rejections skip the lock. Distances are non-negative, so the bit
// patterns order like the values.
struct Slot {
    list: Mutex<Vec<Neighbor>>,
    worst: AtomicU32,
}

impl Slot {
    fn new(list: Vec<Neighbor>, cap: usize) -> Self {
        let worst = if list.len() >= cap {
            list[cap - 1].dist
        } else {
            f32::INFINITY
        };
        Slot {
            list: Mutex::new(list),
            worst: AtomicU32::new(worst.to_bits()),
        }
    }

    fn offer(&self, cand: Neighbor, cap: usize) {
        if cand.dist.to_bits() > self.worst.load(Ordering::Relaxed) {
            return;
        }
        let mut list = self.list.lock().unwrap();
        if list.len() >= cap && !cand.precedes(&list[cap - 1]) {
            return;
        }
        // a pair always gets the same distance, so a repeat lands on its twin
        let pos = list.partition_point(|nb| nb.precedes(&cand));
        if list.get(pos).is_some_and(|nb| nb.id == cand.id) {
            return;
        }
        list.insert(pos, cand);
        list.truncate(cap);
        if list.len() >= cap {
            self.worst
                .store(list[cap - 1].dist.to_bits(), Ordering::Relaxed);
        }
    }
}

/// One NN-Descent round. Returns the number of list slots whose occupant is
/// new after the round.
pub fn knng_descent_iterate(state: &mut KnngState, ds: &Dataset) -> usize {
    let n = state.lists.len();
    let k0 = state.k0;
    let keep = ((state.rho * k0 as f64).ceil() as usize).max(1);
    let (sd, it) = (state.seed, state.iteration as u64);

    // Sample new entries and flip them to old; everything already old joins as old.
    let (mut new, mut old): (Vec<Vec<u32>>, Vec<Vec<u32>>) = state
        .lists
        .par_iter_mut()
        .enumerate()
        .map(|(u, list)| {
            let old: Vec<u32> = list.iter().filter(|nb| !nb.fresh).map(|nb| nb.id).collect();
            let mut fresh: Vec<u32> = list.iter().filter(|nb| nb.fresh).map(|nb| nb.id).collect();
            sample_ids(&mut fresh, keep, &[seed::KNNG_SAMPLE, it, u as u64, 0], sd);
            fresh.sort_unstable();
            for nb in list.iter_mut() {
                if nb.fresh && fresh.binary_search(&nb.id).is_ok() {
                    nb.fresh = false;
                }
            }
            (fresh, old)
        })
        .unzip();
    let mut rnew = vec![Vec::new(); n];
    let mut rold = vec![Vec::new(); n];
    for u in 0..n {
        for &v in &new[u] {
            rnew[v as usize].push(u as u32);
        }
        for &v in &old[u] {
            rold[v as usize].push(u as u32);
        }
    }
    new.par_iter_mut()
        .zip(old.par_iter_mut())
        .zip(rnew.par_iter_mut().zip(rold.par_iter_mut()))
        .enumerate()
        .for_each(|(v, ((nw, od), (rn, ro)))| {
            sample_ids(rn, keep, &[seed::KNNG_SAMPLE, it, v as u64, 1], sd);
            sample_ids(ro, keep, &[seed::KNNG_SAMPLE, it, v as u64, 2], sd);
            nw.extend_from_slice(rn);
            nw.sort_unstable();
            nw.dedup();
            od.extend_from_slice(ro);
            od.sort_unstable();
            od.dedup();
            od.retain(|x| nw.binary_search(x).is_err());
        });

    let before: Vec<Vec<u32>> = state
        .lists
        .par_iter()
        .map(|l| {
            let mut ids: Vec<u32> = l.iter().map(|nb| nb.id).collect();
            ids.sort_unstable();
            ids
        })
        .collect();
    let shared: Vec<Slot> = std::mem::take(&mut state.lists)
        .into_iter()
        .map(|l| Slot::new(l, k0))
        .collect();

    let dist_count: u64 = (0..n)
        .into_par_iter()
        .map(|u| {
            let (nw, od) = (&new[u], &old[u]);
            let mut count = 0u64;
            for (i, &a) in nw.iter().enumerate() {
                for &b in nw[i + 1..].iter().chain(od.iter()) {
                    if a == b {
                        continue;
                    }
                    let d = ds.dist(a, b);
                    count += 1;
                    shared[a as usize].offer(Neighbor::new(b, d), k0);
                    shared[b as usize].offer(Neighbor::new(a, d), k0);
                }
            }
            count
        })
        .sum();

    state.lists = shared
        .into_iter()
        .map(|s| s.list.into_inner().unwrap())
        .collect();
    state.dist_count += dist_count;
    state.iteration += 1;
    state
        .lists
        .par_iter()
        .zip(before.par_iter())
        .map(|(l, b)| {
            l.iter()
                .filter(|nb| b.binary_search(&nb.id).is_err())
                .count()
        })
        .sum()
}

/// Random initialization followed by up to `iters` rounds.
pub fn build_knng(ds: &Dataset, k0: usize, iters: usize, seed: u64) -> Result<KnngState> {
    build_knng_with(ds, &KnngParams::new(k0, iters, seed))
}

pub fn build_knng_with(ds: &Dataset, p: &KnngParams) -> Result<KnngState> {
    let mut state = knng_init_random(ds, p.k0, p.seed)?;
    state.set_rho(p.rho)?;
    let threshold = p.early_stop * ds.len() as f64 * p.k0 as f64;
    for _ in 0..p.iters {
        let updates = knng_descent_iterate(&mut state, ds);
        log::debug!("nn-descent round {}: {updates} updates", state.iteration);
        if (updates as f64) < threshold {
            break;
        }
    }
    Ok(state)
}
