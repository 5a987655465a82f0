use std::time::Instant;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use proxgraph::hnsw::{build_fasthnsw, build_hnsw_original, HnswBuild};
use proxgraph::io::{load_vecs, ElemKind, Index};
use proxgraph::nsg::{build_fastnsg, build_nsg_original, NsgBuild};
use proxgraph::oracle::{ground_truth_table, mean_recall};
use proxgraph::search::{kann_search_with, layered_search_with, SearchScratch};
use proxgraph::synth::gen_synthetic;
use proxgraph::Dataset;

use crate::config::{BuildConfig, Builder, DataSource};
use crate::report::EnvStamp;
use crate::{BenchError, Result};

pub fn load_source(src: &DataSource) -> Result<Dataset> {
    match src {
        DataSource::File(path) => {
            let kind = ElemKind::from_path(path).ok_or_else(|| {
                BenchError::Usage(format!(
                    "{}: expected a .fvecs, .ivecs or .bvecs file",
                    path.display()
                ))
            })?;
            Ok(load_vecs(path, kind)?)
        }
        DataSource::Synthetic { dist, n, d, seed } => {
            Ok(gen_synthetic(*n, *d, dist.distribution(), *seed)?)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    pub dist: u64,
    pub prune_dist: u64,
    pub search_dist: u64,
    pub angle: u64,
    pub secs: f64,
    pub estimate: Option<f64>,
}

/// Phase breakdown of an NSG-style build.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NsgPhases {
    pub knng_dist: u64,
    pub knng_secs: f64,
    pub search_dist: u64,
    pub search_secs: f64,
    pub rounds: Vec<RoundReport>,
    pub refine_dist: u64,
    pub refine_secs: f64,
    pub connect_edges: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerReport {
    pub level: usize,
    pub members: usize,
    pub mean_degree: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BuildReport {
    pub config: BuildConfig,
    pub source: String,
    pub n: usize,
    pub d: usize,
    pub build_secs: f64,
    pub dist_total: u64,
    pub mean_degree: f64,
    pub nsg: Option<NsgPhases>,
    pub layers: Option<Vec<LayerReport>>,
    pub env: EnvStamp,
}

pub struct BuildOutcome {
    pub index: Index,
    /// Final candidate ids per node (layer 0 for layered builders).
    pub candidates: Vec<Vec<u32>>,
    pub report: BuildReport,
}

fn nsg_phases(b: &NsgBuild) -> NsgPhases {
    let s = &b.stats;
    NsgPhases {
        knng_dist: s.knng_dist,
        knng_secs: s.knng_secs,
        search_dist: s.search_dist,
        search_secs: s.search_secs,
        rounds: s
            .rounds
            .iter()
            .map(|r| RoundReport {
                dist: r.kcna.dist_total(),
                prune_dist: r.kcna.refine.prune.dist,
                search_dist: r.kcna.search_dist,
                angle: r.kcna.refine.prune.angle,
                secs: r.secs,
                estimate: r.estimate,
            })
            .collect(),
        refine_dist: s.refine.prune.dist + s.refine.connect_dist,
        refine_secs: s.refine_secs,
        connect_edges: s.refine.connect_edges,
    }
}

fn layer_reports(b: &HnswBuild) -> Vec<LayerReport> {
    (0..=b.graph.top())
        .map(|i| {
            let layer = b.graph.layer(i);
            let members = b.graph.members(i).len();
            LayerReport {
                level: i,
                members,
                mean_degree: layer.edge_count() as f64 / members as f64,
            }
        })
        .collect()
}

/// Runs the selected builder and times it end to end.
pub fn cmd_build(ds: &Dataset, cfg: &BuildConfig, source: &str) -> Result<BuildOutcome> {
    cfg.validate()?;
    info!(
        "building {:?} on n = {}, d = {}",
        cfg.builder,
        ds.len(),
        ds.dim()
    );
    let start = Instant::now();
    let (index, candidates, dist_total, nsg, layers) = match cfg.builder {
        Builder::OriNsg | Builder::FastNsg => {
            let b = if cfg.builder == Builder::OriNsg {
                build_nsg_original(ds, &cfg.nsg_params())?
            } else {
                build_fastnsg(ds, &cfg.fastnsg_params())?
            };
            let cands = b
                .candidates
                .iter()
                .map(|l| l.iter().map(|nb| nb.id).collect())
                .collect();
            let phases = nsg_phases(&b);
            (
                Index::Flat(b.graph),
                cands,
                b.stats.dist_total(),
                Some(phases),
                None,
            )
        }
        Builder::OriHnsw | Builder::FastHnsw => {
            let b = if cfg.builder == Builder::OriHnsw {
                build_hnsw_original(ds, &cfg.hnsw_params())?
            } else {
                build_fasthnsw(ds, &cfg.fasthnsw_params())?
            };
            let layers = layer_reports(&b);
            (
                Index::Layered(b.graph),
                b.candidates,
                b.stats.dist_count,
                None,
                Some(layers),
            )
        }
    };
    let build_secs = start.elapsed().as_secs_f64();
    let mean_degree = match &index {
        Index::Flat(g) => g.mean_degree(),
        Index::Layered(lg) => lg.layer(0).mean_degree(),
    };
    info!("built in {build_secs:.2} s, {dist_total} distance computations");
    Ok(BuildOutcome {
        index,
        candidates,
        report: BuildReport {
            config: cfg.clone(),
            source: source.to_string(),
            n: ds.len(),
            d: ds.dim(),
            build_secs,
            dist_total,
            mean_degree,
            nsg,
            layers,
            env: EnvStamp::current(),
        },
    })
}

/// Sorted, deduplicated beam widths; each must be at least `k`.
pub fn normalize_ls(ls: &[usize], k: usize) -> Result<Vec<usize>> {
    if ls.is_empty() {
        return Err(BenchError::Usage("no L values given".into()));
    }
    if let Some(&bad) = ls.iter().find(|&&l| l < k) {
        return Err(BenchError::Usage(format!(
            "L = {bad} is smaller than k = {k}"
        )));
    }
    let mut out = ls.to_vec();
    out.sort_unstable();
    out.dedup();
    if out.len() < ls.len() {
        warn!("dropped {} duplicate L values", ls.len() - out.len());
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub l: usize,
    pub recall: f64,
    pub qps: f64,
    pub mean_dist: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub k: usize,
    pub queries: usize,
    pub rows: Vec<SweepRow>,
    pub env: EnvStamp,
}

/// For each beam width, answers every query on one thread and records mean
/// recall@k against `truth` and queries per second.
pub fn cmd_search_sweep(
    index: &Index,
    ds: &Dataset,
    queries: &Dataset,
    truth: &[Vec<u32>],
    k: usize,
    ls: &[usize],
) -> Result<SweepReport> {
    if k == 0 {
        return Err(BenchError::Usage("k must be at least 1".into()));
    }
    let ls = normalize_ls(ls, k)?;
    let n = match index {
        Index::Flat(g) => g.len(),
        Index::Layered(lg) => lg.len(),
    };
    if n != ds.len() {
        return Err(BenchError::Usage(format!(
            "index has {n} nodes, dataset {}",
            ds.len()
        )));
    }
    if truth.len() != queries.len() {
        return Err(BenchError::Usage(format!(
            "{} truth rows for {} queries",
            truth.len(),
            queries.len()
        )));
    }
    if truth.iter().any(|t| t.len() < k) {
        return Err(BenchError::Usage(format!(
            "truth rows hold fewer than k = {k} ids"
        )));
    }
    let mut scratch = SearchScratch::new(n);
    let mut rows = Vec::with_capacity(ls.len());
    for &l in &ls {
        let mut results = Vec::with_capacity(queries.len());
        let before = scratch.dist_count;
        let start = Instant::now();
        for q in queries.rows() {
            let hits = match index {
                Index::Flat(g) => kann_search_with(g, ds, q, k, l, g.entry(), &mut scratch)?,
                Index::Layered(lg) => layered_search_with(lg, ds, q, k, l, &mut scratch)?,
            };
            results.push(hits.iter().map(|nb| nb.id).collect::<Vec<u32>>());
        }
        let secs = start.elapsed().as_secs_f64();
        let recall = mean_recall(&results, truth, k)?;
        let row = SweepRow {
            l,
            recall,
            qps: queries.len() as f64 / secs.max(1e-9),
            mean_dist: (scratch.dist_count - before) as f64 / queries.len() as f64,
        };
        info!("L = {l}: recall@{k} {:.4}, {:.0} QPS", row.recall, row.qps);
        rows.push(row);
    }
    Ok(SweepReport {
        k,
        queries: queries.len(),
        rows,
        env: EnvStamp::current(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaRow {
    pub alpha: f64,
    pub build_secs: f64,
    pub dist_total: u64,
    pub recall: f64,
    pub qps: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaGridReport {
    pub config: BuildConfig,
    pub k: usize,
    pub l: usize,
    pub rows: Vec<AlphaRow>,
    pub env: EnvStamp,
}

/// Rebuilds an iterative index at every alpha in `alphas` and measures build
/// cost and recall@k at beam width `l`, to pick alpha for a dataset.
pub fn cmd_alpha_grid(
    ds: &Dataset,
    queries: &Dataset,
    truth: &[Vec<u32>],
    cfg: &BuildConfig,
    alphas: &[f64],
    k: usize,
    l: usize,
) -> Result<AlphaGridReport> {
    if !matches!(cfg.builder, Builder::FastNsg | Builder::FastHnsw) {
        return Err(BenchError::Usage(
            "alpha only affects fast-nsg and fast-hnsw".into(),
        ));
    }
    if alphas.is_empty() {
        return Err(BenchError::Usage("empty alpha grid".into()));
    }
    let mut rows = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let mut c = cfg.clone();
        c.alpha = alpha;
        c.validate()?;
        let built = cmd_build(ds, &c, "alpha grid")?;
        let sweep = cmd_search_sweep(&built.index, ds, queries, truth, k, &[l])?;
        let row = AlphaRow {
            alpha,
            build_secs: built.report.build_secs,
            dist_total: built.report.dist_total,
            recall: sweep.rows[0].recall,
            qps: sweep.rows[0].qps,
        };
        info!(
            "alpha {alpha}: {:.2} s, recall@{k} {:.4}",
            row.build_secs, row.recall
        );
        rows.push(row);
    }
    Ok(AlphaGridReport {
        config: cfg.clone(),
        k,
        l,
        rows,
        env: EnvStamp::current(),
    })
}

/// Exact `k`-NN ids of every query, computed in blocks with progress logging.
pub fn cmd_gen_gt(
    ds: &Dataset,
    queries: &Dataset,
    k: usize,
    exclude_self: bool,
) -> Result<Vec<Vec<u32>>> {
    let available = ds.len() - usize::from(exclude_self);
    if k == 0 || k > available {
        return Err(BenchError::Usage(format!(
            "k = {k} but only {available} candidates per query"
        )));
    }
    if exclude_self && queries.len() > ds.len() {
        return Err(BenchError::Usage(
            "excluding self needs queries drawn from the dataset".into(),
        ));
    }
    const BLOCK: usize = 1000;
    let mut out = Vec::with_capacity(queries.len());
    for start in (0..queries.len()).step_by(BLOCK) {
        let end = (start + BLOCK).min(queries.len());
        let ids: Vec<u32> = (start as u32..end as u32).collect();
        let block = queries.select(&ids)?;
        if exclude_self {
            for (i, q) in block.rows().enumerate() {
                let id = (start + i) as u32;
                let list = proxgraph::oracle::exact_knn_excluding(ds, q, k, Some(id))?;
                out.push(list.iter().map(|nb| nb.id).collect());
            }
        } else {
            out.extend(ground_truth_table(ds, &block, k, false)?);
        }
        info!("ground truth: {end}/{} queries", queries.len());
    }
    Ok(out)
}
