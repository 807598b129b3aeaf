mod common;

use common::*;
use hetgcn::corpus::UdTag;
use hetgcn::dense::Matrix;
use hetgcn::graph::EdgeType;
use hetgcn::sparse::{sym_normalize_and_slice, CooEntry};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const TYPES: [EdgeType; 3] = [
    EdgeType::WordDoc(UdTag::Adj),
    EdgeType::Similarity,
    EdgeType::Translation,
];

#[test]
fn isolated_nodes_normalize_to_one() {
    let slices = sym_normalize_and_slice::<EdgeType>(&[], 3, 1.0, EdgeType::SelfLoop).unwrap();
    assert_eq!(slices.len(), 1);
    assert_eq!(slices[&EdgeType::SelfLoop].to_dense(), Matrix::identity(3));
}

#[test]
fn shared_pair_uses_union_weight_in_each_slice() {
    let mut edges = Vec::new();
    for etype in [EdgeType::Similarity, EdgeType::Translation] {
        edges.push(CooEntry {
            row: 0,
            col: 1,
            weight: 1.0,
            etype,
        });
        edges.push(CooEntry {
            row: 1,
            col: 0,
            weight: 1.0,
            etype,
        });
    }
    let slices = sym_normalize_and_slice(&edges, 2, 1.0, EdgeType::SelfLoop).unwrap();
    // Degrees are 3; the pair carries 2.
    let expected = 2.0 / 3.0;
    assert_eq!(slices[&EdgeType::Similarity].get(0, 1), expected);
    assert_eq!(slices[&EdgeType::Translation].get(1, 0), expected);
    assert_eq!(slices[&EdgeType::SelfLoop].get(0, 0), 1.0 / 3.0);
}

#[test]
fn rejects_asymmetric_or_bad_edges() {
    let one_way = [CooEntry {
        row: 0,
        col: 1,
        weight: 1.0,
        etype: EdgeType::Similarity,
    }];
    assert!(sym_normalize_and_slice(&one_way, 2, 1.0, EdgeType::SelfLoop).is_err());
    let negative = [
        CooEntry {
            row: 0,
            col: 1,
            weight: -1.0,
            etype: EdgeType::Similarity,
        },
        CooEntry {
            row: 1,
            col: 0,
            weight: -1.0,
            etype: EdgeType::Similarity,
        },
    ];
    assert!(sym_normalize_and_slice(&negative, 2, 1.0, EdgeType::SelfLoop).is_err());
    let reserved = [CooEntry {
        row: 0,
        col: 0,
        weight: 1.0,
        etype: EdgeType::SelfLoop,
    }];
    assert!(sym_normalize_and_slice(&reserved, 1, 1.0, EdgeType::SelfLoop).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn slices_are_symmetric_bounded_and_sum_to_oracle(seed in any::<u64>(), n in 1usize..40, density in 0.0f64..0.6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let edges = random_edges(&mut rng, n, &TYPES, density);
        let graph = graph_from_edges(n, n, &edges, &TYPES);
        for a in graph.adjacency.values() {
            prop_assert!(a.is_symmetric());
            prop_assert!(a.values().iter().all(|&v| v > 0.0 && v <= 1.0));
        }
        let oracle = Matrix::from_rows(&dense_normalized(n, &edges)).unwrap();
        prop_assert!(sum_slices(&graph).max_abs_diff(&oracle).unwrap() <= 1e-12);
    }

    #[test]
    fn spmm_distributes_over_addition(seed in any::<u64>(), n in 1usize..30, d in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let edges = random_edges(&mut rng, n, &TYPES, 0.3);
        let graph = graph_from_edges(n, n, &edges, &TYPES);
        let x = random_matrix(&mut rng, n, d);
        let y = random_matrix(&mut rng, n, d);
        let mut sum = x.clone();
        sum.add_assign(&y).unwrap();
        for a in graph.adjacency.values() {
            let mut split = a.spmm(&x).unwrap();
            split.add_assign(&a.spmm(&y).unwrap()).unwrap();
            prop_assert!(a.spmm(&sum).unwrap().max_abs_diff(&split).unwrap() <= 1e-12);
            prop_assert!(a.spmm(&x).unwrap().max_abs_diff(&a.to_dense().matmul(&x).unwrap()).unwrap() <= 1e-12);
        }
    }
}
