//! Proximity-graph indexes for approximate nearest neighbor search.
//!
//! The crate builds NSG-style graphs (RNG pruning with connectivity repair) and
//! HNSW-style layered graphs, either the classic way or by iterating a cheap
//! prune-then-search loop on the candidate lists before the final refinement.
//! All distances are squared Euclidean, all orderings break ties by id, and
//! every builder is deterministic for a fixed seed.
//!
//! ```
//! use proxgraph::nsg::{build_fastnsg, FastNsgParams};
//! use proxgraph::synth::{gen_synthetic, Distribution};
//! use proxgraph::kann_search;
//!
//! let ds = gen_synthetic(500, 8, Distribution::Uniform, 1).unwrap();
//! let index = build_fastnsg(&ds, &FastNsgParams::new(16, 24, 24, 12)).unwrap();
//! let g = &index.graph;
//! let hits = kann_search(g, &ds, ds.row(3), 5, 20, g.entry()).unwrap();
//! assert_eq!(hits[0].id, 3);
//! ```

pub mod dataset;
pub mod distance;
pub mod error;
pub mod graph;
pub mod hnsw;
pub mod io;
pub mod knng;
pub mod neighbor;
pub mod nsg;
pub mod oracle;
pub mod prune;
pub mod search;
pub mod synth;

mod seed;

pub use dataset::Dataset;
pub use error::{Error, Result};
pub use graph::{LayeredGraph, ProximityGraph};
pub use hnsw::{build_fasthnsw, build_hnsw_original, FastHnswParams, HnswParams};
pub use io::{load_index, load_vecs, save_index, save_vecs, ElemKind, Index};
pub use neighbor::{CandidatePool, Neighbor};
pub use nsg::{build_fastnsg, build_nsg_original, FastNsgParams, NsgParams, StopRule};
pub use search::{kann_search, kann_search_instrumented, layered_search, SearchScratch};

// The guide's code blocks compile and run as doc-tests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/distances.md")]
    mod distances {}
    #[doc = include_str!("../../../book/src/search.md")]
    mod search {}
    #[doc = include_str!("../../../book/src/pruning.md")]
    mod pruning {}
    #[doc = include_str!("../../../book/src/refinement.md")]
    mod refinement {}
    #[doc = include_str!("../../../book/src/iterative.md")]
    mod iterative {}
    #[doc = include_str!("../../../book/src/layered.md")]
    mod layered {}
    #[doc = include_str!("../../../book/src/file-formats.md")]
    mod file_formats {}
    #[doc = include_str!("../../../book/src/benchmarks.md")]
    mod benchmarks {}
}
