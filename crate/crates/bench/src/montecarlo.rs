//! Monte-Carlo checks of the pruning-angle and sampling analysis.

use std::f64::consts::PI;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use proxgraph::distance::cos_from_squared;
use proxgraph::nsg::{estimate_quality, sample_size, CnaState};
use proxgraph::oracle::{bottleneck_rank, exact_knn_excluding, ground_truth_table, rank_table};
use proxgraph::prune::{prune, PruneCounters, PruneParams};
use proxgraph::synth::{gen_synthetic, Distribution};
use proxgraph::{kann_search, Dataset, ProximityGraph};

use crate::{BenchError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WedgeReport {
    pub alpha_deg: f64,
    pub trials: usize,
    /// Fraction of queries for which `w` is farther than both `u` and `v`.
    pub frequency: f64,
    /// `(pi - alpha) / (2 pi)`.
    pub expected: f64,
    pub stderr: f64,
    /// Mean number of prunings per rank increase, `trials / hits`.
    pub prunings_per_loss: f64,
    /// `2 pi / (pi - alpha)`.
    pub expected_prunings_per_loss: f64,
}

/// In the plane, places `w` at the origin and `u`, `v` at random lengths with
/// `angle(u, w, v) = alpha`, then draws queries uniformly from a disk much
/// larger than the triangle and counts how often `w` is the farthest of the three.
pub fn wedge(alpha_deg: f64, trials: usize, seed: u64) -> Result<WedgeReport> {
    if !(alpha_deg > 0.0 && alpha_deg < 180.0) || trials == 0 {
        return Err(BenchError::Usage(
            "need 0 < alpha < 180 and trials >= 1".into(),
        ));
    }
    const RADIUS: f64 = 1e4;
    let alpha = alpha_deg.to_radians();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = 0usize;
    for _ in 0..trials {
        let ru = rng.random_range(0.5..1.0);
        let rv = rng.random_range(0.5..1.0);
        let u = (ru, 0.0);
        let v = (rv * alpha.cos(), rv * alpha.sin());
        let r = RADIUS * rng.random::<f64>().sqrt();
        let t = rng.random_range(0.0..2.0 * PI);
        let q = (r * t.cos(), r * t.sin());
        let d = |p: (f64, f64)| (q.0 - p.0).powi(2) + (q.1 - p.1).powi(2);
        let dw = d((0.0, 0.0));
        if dw > d(u) && dw > d(v) {
            hits += 1;
        }
    }
    let frequency = hits as f64 / trials as f64;
    let expected = (PI - alpha) / (2.0 * PI);
    Ok(WedgeReport {
        alpha_deg,
        trials,
        frequency,
        expected,
        stderr: (frequency * (1.0 - frequency) / trials as f64).sqrt(),
        prunings_per_loss: trials as f64 / hits.max(1) as f64,
        expected_prunings_per_loss: 1.0 / expected,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PruneAngleReport {
    pub n: usize,
    pub d: usize,
    pub k: usize,
    pub nodes: usize,
    pub prunings: usize,
    pub mean_deg: f64,
    pub stderr_deg: f64,
    /// Counts per 10-degree bucket, `[0, 10)` first.
    pub histogram: Vec<usize>,
}

/// Runs the uncapped RNG scan over the exact `k` nearest neighbors of `nodes`
/// random points of `ds` and records `angle(u, w, v)` at the neighbor `w`
/// that removes each pruned `v`.
pub fn prune_angle(ds: &Dataset, k: usize, nodes: usize, seed: u64) -> Result<PruneAngleReport> {
    let n = ds.len();
    if k == 0 || k >= n || nodes == 0 || nodes > n {
        return Err(BenchError::Usage(format!(
            "need 1 <= k < n and 1 <= nodes <= n (n = {n})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks: Vec<u32> = index::sample(&mut rng, n, nodes)
        .into_iter()
        .map(|i| i as u32)
        .collect();
    let angles: Vec<f64> = picks
        .par_iter()
        .map(|&u| -> Result<Vec<f64>> {
            let cands = exact_knn_excluding(ds, ds.row(u), k, Some(u))?;
            let mut kept: Vec<(u32, f32)> = Vec::new();
            let mut out = Vec::new();
            for v in &cands {
                let dominator = kept.iter().find_map(|&(w, duw)| {
                    let dvw = ds.dist(v.id, w);
                    (dvw < v.dist).then_some((duw, dvw))
                });
                match dominator {
                    Some((duw, dvw)) => {
                        if let Some(c) = cos_from_squared(duw, dvw, v.dist) {
                            out.push(c.clamp(-1.0, 1.0).acos().to_degrees());
                        }
                    }
                    None => kept.push((v.id, v.dist)),
                }
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    let count = angles.len();
    let mean = angles.iter().sum::<f64>() / count.max(1) as f64;
    let var = angles.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (count.max(2) - 1) as f64;
    let mut histogram = vec![0usize; 18];
    for a in &angles {
        histogram[((a / 10.0) as usize).min(17)] += 1;
    }
    Ok(PruneAngleReport {
        n,
        d: ds.dim(),
        k,
        nodes,
        prunings: count,
        mean_deg: mean,
        stderr_deg: (var / count.max(1) as f64).sqrt(),
        histogram,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleBoundReport {
    pub n: usize,
    pub k: usize,
    pub epsilon: f64,
    pub l: f64,
    pub n_s: usize,
    /// Mean recall over all nodes.
    pub true_recall: f64,
    pub resamples: usize,
    /// Estimates with `|r_hat - r| < epsilon / 2`.
    pub within: usize,
    pub coverage: f64,
    /// `1 - n^-l`.
    pub required: f64,
    pub max_error: f64,
}

/// Draws `resamples` independent quality estimates of `state` and counts how
/// many fall within `epsilon / 2` of the exact mean recall.
pub fn sample_bound(
    ds: &Dataset,
    state: &CnaState,
    k: usize,
    epsilon: f64,
    l: f64,
    resamples: usize,
    seed: u64,
) -> Result<SampleBoundReport> {
    let n = ds.len();
    if resamples == 0 {
        return Err(BenchError::Usage("need at least one resample".into()));
    }
    let truth = ground_truth_table(ds, ds, k, true)?;
    let true_recall = state
        .lists()
        .iter()
        .zip(&truth)
        .map(|(list, t)| {
            list.iter().take(k).filter(|nb| t.contains(&nb.id)).count() as f64 / k as f64
        })
        .sum::<f64>()
        / n as f64;
    let mut within = 0;
    let mut max_error: f64 = 0.0;
    for i in 0..resamples {
        let est = estimate_quality(state, ds, epsilon, l, k, seed.wrapping_add(i as u64))?;
        let err = (est.r_hat - true_recall).abs();
        max_error = max_error.max(err);
        if err < epsilon / 2.0 {
            within += 1;
        }
    }
    Ok(SampleBoundReport {
        n,
        k,
        epsilon,
        l,
        n_s: sample_size(n, epsilon, l),
        true_recall,
        resamples,
        within,
        coverage: within as f64 / resamples as f64,
        required: 1.0 - (n as f64).powf(-l),
        max_error,
    })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RankPathReport {
    pub instances: usize,
    pub queries: usize,
    /// Targets `p_k` (k <= L) found on the KNN graph whose best path rank is
    /// the same on the pruned graph.
    pub cases: usize,
    /// Of those, targets the search on the pruned graph misses.
    pub violations: usize,
    /// `cases` restricted to best path rank at most L.
    pub cases_within_l: usize,
    pub violations_within_l: usize,
}

/// Random small instances: an exact KNN graph `G`, its alpha-pruned copy,
/// and random queries searched on both from the same entry with the same L.
/// For every target among the query's L nearest neighbors whose least
/// possible maximum path rank (from the entry) is equal on both graphs, checks
/// that being found on `G` implies being found on the pruned graph.
pub fn rank_paths(
    instances: usize,
    queries: usize,
    max_n: usize,
    seed: u64,
) -> Result<RankPathReport> {
    if instances == 0 || queries == 0 || max_n < 20 {
        return Err(BenchError::Usage(
            "need instances, queries >= 1 and max_n >= 20".into(),
        ));
    }
    let reports = (0..instances as u64)
        .into_par_iter()
        .map(|i| -> Result<RankPathReport> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i));
            let n = rng.random_range(20..=max_n);
            let d = rng.random_range(2..=8);
            let k0 = rng.random_range(4..=12.min(n - 1));
            let alpha = rng.random_range(60.0..120.0);
            let l = rng.random_range(4..=16.min(n));
            let ds = gen_synthetic(n, d, Distribution::Uniform, rng.random())?;
            let lists = (0..n as u32)
                .map(|u| exact_knn_excluding(&ds, ds.row(u), k0, Some(u)))
                .collect::<proxgraph::Result<Vec<_>>>()?;
            let params = PruneParams::alpha(k0, alpha)?;
            let mut counters = PruneCounters::default();
            let pruned = lists
                .iter()
                .map(|c| {
                    prune(&ds, c, &params, &mut counters)
                        .iter()
                        .map(|nb| nb.id)
                        .collect()
                })
                .collect();
            let full = lists
                .iter()
                .map(|c| c.iter().map(|nb| nb.id).collect())
                .collect();
            let g = ProximityGraph::from_lists(full, k0, 0)?;
            let gp = ProximityGraph::from_lists(pruned, k0, 0)?;
            let ep = rng.random_range(0..n as u32);
            let mut r = RankPathReport {
                instances: 1,
                queries,
                ..Default::default()
            };
            for _ in 0..queries {
                let q: Vec<f32> = (0..d).map(|_| rng.random()).collect();
                let ranks = rank_table(&ds, &q);
                let s1 = kann_search(&g, &ds, &q, l, l, ep)?;
                let s2 = kann_search(&gp, &ds, &q, l, l, ep)?;
                let mut by_rank = vec![0u32; n];
                for (id, &rk) in ranks.iter().enumerate() {
                    by_rank[rk as usize - 1] = id as u32;
                }
                for &pk in &by_rank[..l] {
                    let delta = bottleneck_rank(&g, &ranks, ep, pk);
                    if delta.is_none() || delta != bottleneck_rank(&gp, &ranks, ep, pk) {
                        continue;
                    }
                    if !s1.iter().any(|nb| nb.id == pk) {
                        continue;
                    }
                    let missed = !s2.iter().any(|nb| nb.id == pk);
                    let within = delta.unwrap() as usize <= l;
                    r.cases += 1;
                    r.violations += missed as usize;
                    r.cases_within_l += within as usize;
                    r.violations_within_l += (missed && within) as usize;
                }
            }
            Ok(r)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(reports
        .into_iter()
        .fold(RankPathReport::default(), |a, b| RankPathReport {
            instances: a.instances + b.instances,
            queries: a.queries + b.queries,
            cases: a.cases + b.cases,
            violations: a.violations + b.violations,
            cases_within_l: a.cases_within_l + b.cases_within_l,
            violations_within_l: a.violations_within_l + b.violations_within_l,
        }))
}
