#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

use hetgcn::dense::Matrix;
use hetgcn::graph::{EdgeType, GraphConfig, HeteroGraph, NodeKey};
use hetgcn::sparse::{sym_normalize_and_slice, CooEntry};
use rand::Rng;

/// Random undirected typed edges over `n` nodes, each pair drawn at most
/// once and given one type from `types`, weights in (0.1, 2].
pub fn random_edges(
    rng: &mut impl Rng,
    n: usize,
    types: &[EdgeType],
    density: f64,
) -> Vec<CooEntry<EdgeType>> {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen_bool(density) {
                let etype = types[rng.gen_range(0..types.len())];
                let weight = rng.gen_range(0.1..=2.0);
                edges.push(CooEntry {
                    row: i,
                    col: j,
                    weight,
                    etype,
                });
                edges.push(CooEntry {
                    row: j,
                    col: i,
                    weight,
                    etype,
                });
            }
        }
    }
    edges
}

/// Graph over `n` nodes, the first `docs` of which are documents.
pub fn graph_from_edges(
    n: usize,
    docs: usize,
    edges: &[CooEntry<EdgeType>],
    types: &[EdgeType],
) -> HeteroGraph {
    let mut adjacency = sym_normalize_and_slice(edges, n, 1.0, EdgeType::SelfLoop).unwrap();
    // A type that drew no edges still gets an (empty) slice, so every requested
    // type carries weights in the model.
    for t in types {
        adjacency
            .entry(*t)
            .or_insert_with(|| hetgcn::sparse::CsrMatrix::zeros(n, n));
    }
    let nodes = (0..n)
        .map(|i| {
            if i < docs {
                NodeKey::Doc(format!("d{i}"))
            } else {
                NodeKey::Word {
                    language: "xx".into(),
                    surface: format!("w{i}"),
                }
            }
        })
        .collect();
    HeteroGraph {
        nodes,
        doc_count: docs,
        word_count: n - docs,
        doc_positions: (0..docs).collect(),
        adjacency,
        config: GraphConfig::default(),
    }
}

/// D^{-1/2}(A + I)D^{-1/2}, computed densely and independently of the sparse path.
pub fn dense_normalized(n: usize, edges: &[CooEntry<EdgeType>]) -> Vec<Vec<f64>> {
    let mut a = vec![vec![0.0; n]; n];
    for e in edges {
        a[e.row][e.col] += e.weight;
    }
    for (i, row) in a.iter_mut().enumerate() {
        row[i] += 1.0;
    }
    let d: Vec<f64> = a.iter().map(|r| r.iter().sum()).collect();
    (0..n)
        .map(|i| (0..n).map(|j| a[i][j] / (d[i] * d[j]).sqrt()).collect())
        .collect()
}

pub fn naive_matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let (n, m) = (a.len(), b[0].len());
    (0..n)
        .map(|i| {
            (0..m)
                .map(|j| (0..b.len()).map(|k| a[i][k] * b[k][j]).sum())
                .collect()
        })
        .collect()
}

pub fn to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

pub fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

pub fn sum_slices(graph: &HeteroGraph) -> Matrix {
    let mut total = Matrix::zeros(graph.n(), graph.n());
    for a in graph.adjacency.values() {
        total.add_assign(&a.to_dense()).unwrap();
    }
    total
}

pub fn edge_type_names(graph: &HeteroGraph) -> BTreeMap<String, usize> {
    graph
        .edge_counts()
        .into_iter()
        .map(|(t, c)| (t.to_string(), c))
        .collect()
}

pub fn hetgcn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hetgcn"))
        .args(args)
        .output()
        .expect("binary runs")
}

pub fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

/// Writes a synthetic corpus with the given `synth` flags into `dir`.
pub fn synth_into(dir: &Path, extra: &[&str]) {
    let mut args = vec!["synth", "--out", path_str(dir)];
    args.extend_from_slice(extra);
    let out = hetgcn(&args);
    assert!(
        out.status.success(),
        "synth failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}
