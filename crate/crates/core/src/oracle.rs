//! Brute-force exact nearest neighbors: the ground truth behind every recall
//! figure in the crate.

use rayon::prelude::*;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::graph::ProximityGraph;
use crate::neighbor::{sort_neighbors, Neighbor};

/// The `k` smallest `(dist, id)` pairs over the whole dataset, ascending.
pub fn exact_knn(ds: &Dataset, query: &[f32], k: usize) -> Result<Vec<Neighbor>> {
    exact_knn_excluding(ds, query, k, None)
}

/// [`exact_knn`] with one id left out, typically the query's own row.
pub fn exact_knn_excluding(
    ds: &Dataset,
    query: &[f32],
    k: usize,
    exclude: Option<u32>,
) -> Result<Vec<Neighbor>> {
    ds.check_query(query)?;
    let available = ds.len() - usize::from(exclude.is_some_and(|e| (e as usize) < ds.len()));
    if k == 0 || k > available {
        return Err(Error::arg(format!("k = {k} must be in 1..={available}")));
    }
    let mut all: Vec<Neighbor> = (0..ds.len() as u32)
        .filter(|&id| Some(id) != exclude)
        .map(|id| Neighbor::new(id, ds.dist_to(query, id)))
        .collect();
    if k < all.len() {
        all.select_nth_unstable_by(k - 1, Neighbor::order);
        all.truncate(k);
    }
    sort_neighbors(&mut all);
    Ok(all)
}

/// Exact `k`-NN ids for every query, in parallel. With `exclude_self`, query
/// `i` never returns dataset id `i` (queries are dataset rows).
pub fn ground_truth_table(
    ds: &Dataset,
    queries: &Dataset,
    k: usize,
    exclude_self: bool,
) -> Result<Vec<Vec<u32>>> {
    if queries.dim() != ds.dim() {
        return Err(Error::DimensionMismatch {
            expected: ds.dim(),
            got: queries.dim(),
        });
    }
    (0..queries.len() as u32)
        .into_par_iter()
        .map(|i| {
            let exclude = exclude_self.then_some(i);
            exact_knn_excluding(ds, queries.row(i), k, exclude)
                .map(|list| list.iter().map(|n| n.id).collect())
        })
        .collect()
}

/// `|returned ∩ truth| / k`, with `truth` holding exactly `k` ids.
pub fn recall_at_k(returned: &[u32], truth: &[u32], k: usize) -> Result<f64> {
    if k == 0 || truth.len() != k {
        return Err(Error::arg(format!(
            "truth has {} ids, expected k = {k}",
            truth.len()
        )));
    }
    let mut truth_sorted = truth.to_vec();
    truth_sorted.sort_unstable();
    let mut got = returned.to_vec();
    got.sort_unstable();
    got.dedup();
    let hits = got
        .iter()
        .filter(|id| truth_sorted.binary_search(id).is_ok())
        .count();
    Ok(hits as f64 / k as f64)
}

/// Mean recall of `results[i]` against `truth[i]` truncated to `k`.
pub fn mean_recall(results: &[Vec<u32>], truth: &[Vec<u32>], k: usize) -> Result<f64> {
    if results.len() != truth.len() || results.is_empty() {
        return Err(Error::arg("result and truth tables differ in length"));
    }
    let mut total = 0.0;
    for (r, t) in results.iter().zip(truth) {
        if t.len() < k {
            return Err(Error::arg(format!(
                "truth row has {} ids, need {k}",
                t.len()
            )));
        }
        let r = &r[..r.len().min(k)];
        total += recall_at_k(r, &t[..k], k)?;
    }
    Ok(total / results.len() as f64)
}

/// 1-based rank of every dataset point with respect to `query` under the
/// `(dist, id)` order.
pub fn rank_table(ds: &Dataset, query: &[f32]) -> Vec<u32> {
    let mut all: Vec<Neighbor> = (0..ds.len() as u32)
        .map(|id| Neighbor::new(id, ds.dist_to(query, id)))
        .collect();
    sort_neighbors(&mut all);
    let mut ranks = vec![0u32; ds.len()];
    for (r, nb) in all.iter().enumerate() {
        ranks[nb.id as usize] = r as u32 + 1;
    }
    ranks
}

/// Smallest `t` such that `target` is reachable from `start` along a path
/// whose nodes all have rank at most `t`, i.e. the least possible maximum
/// rank over all paths. `ranks` comes from [`rank_table`]. `None` when
/// `target` is unreachable. Tries every threshold in turn with a full
/// traversal, so it is meant for small graphs.
pub fn bottleneck_rank(g: &ProximityGraph, ranks: &[u32], start: u32, target: u32) -> Option<u32> {
    let n = g.len();
    let lo = ranks[start as usize].max(ranks[target as usize]);
    let mut seen = vec![false; n];
    let mut stack = Vec::new();
    (lo..=n as u32).find(|&t| {
        seen.iter_mut().for_each(|s| *s = false);
        stack.clear();
        stack.push(start);
        seen[start as usize] = true;
        while let Some(u) = stack.pop() {
            if u == target {
                return true;
            }
            for &v in g.neighbors(u) {
                if !seen[v as usize] && ranks[v as usize] <= t {
                    seen[v as usize] = true;
                    stack.push(v);
                }
            }
        }
        false
    })
}
