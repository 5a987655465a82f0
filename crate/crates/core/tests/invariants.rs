//! Structural checks on every builder's output over small random instances.

use proptest::prelude::*;

use proxgraph::io::{decode_index, encode_index, Index};
use proxgraph::knng::build_knng;
use proxgraph::neighbor::Neighbor;
use proxgraph::synth::{gen_synthetic, Distribution};
use proxgraph::{
    build_fasthnsw, build_fastnsg, build_hnsw_original, build_nsg_original, Dataset,
    FastHnswParams, FastNsgParams, HnswParams, LayeredGraph, NsgParams, ProximityGraph,
};

fn dataset(n: usize, d: usize, clustered: bool, seed: u64) -> Dataset {
    let dist = if clustered {
        Distribution::clustered(4)
    } else {
        Distribution::Uniform
    };
    gen_synthetic(n, d, dist, seed).unwrap()
}

fn assert_sorted_unique(u: u32, list: &[Neighbor]) {
    for w in list.windows(2) {
        assert!(w[0].precedes(&w[1]), "node {u}: list not strictly sorted");
    }
    assert!(list.iter().all(|nb| nb.id != u), "node {u}: self in list");
}

/// The pruned part of each list keeps the order of the candidates it came from.
fn assert_pruned_prefix_sorted(g: &ProximityGraph, ds: &Dataset) {
    for u in 0..g.len() as u32 {
        let list = g.neighbors(u);
        let own = &list[..list.len() - g.connect_edges(u)];
        for w in own.windows(2) {
            let a = Neighbor::new(w[0], ds.dist(u, w[0]));
            let b = Neighbor::new(w[1], ds.dist(u, w[1]));
            assert!(a.precedes(&b), "node {u}: pruned list out of order");
        }
    }
}

fn round_trip(index: Index, dim: usize) {
    let bytes = encode_index(&index, dim).unwrap();
    let back = decode_index(&bytes).unwrap();
    assert_eq!(back.dim, dim);
    assert_eq!(back.index, index);
    assert_eq!(encode_index(&back.index, dim).unwrap(), bytes);
}

fn check_flat(g: &ProximityGraph, ds: &Dataset, m: usize, connected: bool) {
    g.validate().unwrap();
    assert_eq!(g.len(), ds.len());
    assert_eq!(g.max_degree(), m);
    assert_pruned_prefix_sorted(g, ds);
    if connected {
        assert!(
            g.reachable_from(g.entry()).iter().all(|&r| r),
            "unreachable nodes"
        );
    }
    round_trip(Index::Flat(g.clone()), ds.dim());
}

fn check_layered(lg: &LayeredGraph, ds: &Dataset, m: usize) {
    lg.validate().unwrap();
    assert_eq!(lg.len(), ds.len());
    assert_eq!(lg.level(lg.entry()), lg.top());
    for (i, layer) in lg.layers().iter().enumerate() {
        let cap = if i == 0 { 2 * m } else { m };
        assert!(layer.max_degree() <= cap);
        for u in 0..lg.len() as u32 {
            if lg.level(u) < i {
                assert!(layer.neighbors(u).is_empty());
            }
            for &v in layer.neighbors(u) {
                assert!(lg.level(v) >= i, "layer {i}: edge to non-member {v}");
            }
        }
    }
    round_trip(Index::Layered(lg.clone()), ds.dim());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn knng_lists(n in 20usize..150, d in 1usize..8, k0 in 1usize..12, seed in 0u64..1000) {
        let ds = dataset(n, d, seed % 2 == 0, seed);
        let state = build_knng(&ds, k0, 3, seed).unwrap();
        for (u, list) in state.lists().iter().enumerate() {
            prop_assert_eq!(list.len(), k0.min(n - 1));
            assert_sorted_unique(u as u32, list);
        }
    }

    #[test]
    fn nsg_builders(n in 30usize..200, d in 2usize..8, m in 3usize..12, seed in 0u64..1000) {
        let ds = dataset(n, d, seed % 3 == 0, seed);
        let mut p = NsgParams::new(12, 10, 16, m);
        p.seed = seed;
        let ori = build_nsg_original(&ds, &p).unwrap();
        check_flat(&ori.graph, &ds, m, true);
        for (u, list) in ori.candidates.iter().enumerate() {
            assert_sorted_unique(u as u32, list);
        }
        prop_assert_eq!(&build_nsg_original(&ds, &p).unwrap().graph, &ori.graph);

        let mut fp = FastNsgParams::new(8, 10, 16, m);
        fp.base.seed = seed;
        let fast = build_fastnsg(&ds, &fp).unwrap();
        check_flat(&fast.graph, &ds, m, true);
        for (u, list) in fast.candidates.iter().enumerate() {
            assert_sorted_unique(u as u32, list);
        }
        prop_assert_eq!(&build_fastnsg(&ds, &fp).unwrap().graph, &fast.graph);

        fp.connect = false;
        check_flat(&build_fastnsg(&ds, &fp).unwrap().graph, &ds, m, false);
    }

    #[test]
    fn hnsw_builders(n in 30usize..200, d in 2usize..8, m in 2usize..8, seed in 0u64..1000) {
        let ds = dataset(n, d, seed % 3 == 1, seed);
        let mut p = HnswParams::new(16, m);
        p.seed = seed;
        let ori = build_hnsw_original(&ds, &p).unwrap();
        check_layered(&ori.graph, &ds, m);
        prop_assert_eq!(&build_hnsw_original(&ds, &p).unwrap().graph, &ori.graph);

        let mut fp = FastHnswParams::new(8, 16, m);
        fp.seed = seed;
        let fast = build_fasthnsw(&ds, &fp).unwrap();
        check_layered(&fast.graph, &ds, m);
        prop_assert_eq!(&build_fasthnsw(&ds, &fp).unwrap().graph, &fast.graph);
    }
}

#[test]
fn duplicate_points_are_handled() {
    let mut rows: Vec<[f32; 3]> = (0..40)
        .map(|i| [(i % 7) as f32, (i % 3) as f32, 0.0])
        .collect();
    rows.extend(std::iter::repeat_n([1.0, 1.0, 0.0], 20));
    let ds = Dataset::from_rows(&rows).unwrap();
    let nsg = build_fastnsg(&ds, &FastNsgParams::new(8, 10, 16, 6)).unwrap();
    check_flat(&nsg.graph, &ds, 6, true);
    let hnsw = build_hnsw_original(&ds, &HnswParams::new(16, 4)).unwrap();
    check_layered(&hnsw.graph, &ds, 4);
}
