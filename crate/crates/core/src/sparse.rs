//! CSR matrices, sparse-dense products and typed symmetric normalization.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{Display, Write as _};

use rayon::prelude::*;

use crate::dense::Matrix;
use crate::error::{Error, Result};

/// Row count times feature width above which `spmm` splits rows across threads.
const PAR_THRESHOLD: usize = 1 << 15;

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

/// A typed, weighted adjacency entry.
#[derive(Debug, Clone, PartialEq)]
pub struct CooEntry<T> {
    pub row: usize,
    pub col: usize,
    pub weight: f64,
    pub etype: T,
}

/// Assembles canonical CSR (sorted columns, duplicates summed).
pub fn csr_from_coo(
    entries: &[(usize, usize, f64)],
    n_rows: usize,
    n_cols: usize,
) -> Result<CsrMatrix> {
    for &(r, c, w) in entries {
        if r >= n_rows || c >= n_cols {
            return Err(Error::Graph(format!(
                "entry ({r}, {c}) outside {n_rows}x{n_cols}"
            )));
        }
        if !w.is_finite() {
            return Err(Error::Graph(format!(
                "entry ({r}, {c}) has non-finite weight {w}"
            )));
        }
    }
    let mut sorted: Vec<(usize, usize, f64)> = entries.to_vec();
    // Stable sort keeps duplicate summation in input order.
    sorted.sort_by_key(|&(r, c, _)| (r, c));

    let mut row_offsets = vec![0usize; n_rows + 1];
    let mut col_indices = Vec::with_capacity(sorted.len());
    let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
    let mut last: Option<(usize, usize)> = None;
    for (r, c, w) in sorted {
        if last == Some((r, c)) {
            *values.last_mut().expect("duplicate follows an entry") += w;
        } else {
            col_indices.push(c);
            values.push(w);
            row_offsets[r + 1] += 1;
            last = Some((r, c));
        }
    }
    for i in 0..n_rows {
        row_offsets[i + 1] += row_offsets[i];
    }
    Ok(CsrMatrix {
        n_rows,
        n_cols,
        row_offsets,
        col_indices,
        values,
    })
}

impl CsrMatrix {
    pub fn identity(n: usize) -> Self {
        CsrMatrix {
            n_rows: n,
            n_cols: n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        CsrMatrix {
            n_rows,
            n_cols,
            row_offsets: vec![0; n_rows + 1],
            col_indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `(col, value)` pairs of row `i`, columns ascending.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_offsets[i]..self.row_offsets[i + 1];
        self.col_indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    /// All stored `(row, col, value)` triples in row-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_rows).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let span = self.row_offsets[i]..self.row_offsets[i + 1];
        match self.col_indices[span.clone()].binary_search(&j) {
            Ok(p) => self.values[span.start + p],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> Matrix {
        let mut m = Matrix::zeros(self.n_rows, self.n_cols);
        for (i, j, v) in self.triplets() {
            m.set(i, j, v);
        }
        m
    }

    /// `A · H`. Each output row is accumulated by one task in column order,
    /// so results do not depend on the thread count.
    pub fn spmm(&self, h: &Matrix) -> Result<Matrix> {
        if self.n_cols != h.rows() {
            return Err(Error::Shape(format!(
                "spmm {}x{} by {:?}",
                self.n_rows,
                self.n_cols,
                h.shape()
            )));
        }
        let d = h.cols();
        let mut out = Matrix::zeros(self.n_rows, d);
        if d == 0 {
            return Ok(out);
        }
        let kernel = |(i, out_row): (usize, &mut [f64])| {
            for (j, a) in self.row(i) {
                for (o, &x) in out_row.iter_mut().zip(h.row(j)) {
                    *o += a * x;
                }
            }
        };
        if self.n_rows * d >= PAR_THRESHOLD {
            out.data_mut()
                .par_chunks_mut(d)
                .enumerate()
                .for_each(kernel);
        } else {
            out.data_mut().chunks_mut(d).enumerate().for_each(kernel);
        }
        Ok(out)
    }

    /// Exact structural and value symmetry.
    pub fn is_symmetric(&self) -> bool {
        self.n_rows == self.n_cols
            && self
                .triplets()
                .all(|(i, j, v)| self.get(j, i).to_bits() == v.to_bits())
    }
}

/// Normalizes the union multigraph `A + w·I` symmetrically and slices it by
/// edge type.
///
/// Degrees come from the whole union (all types plus self-loops). Self-loops
/// are stored under `self_type`. A `(row, col)` pair present under several
/// types gets the normalized value of its total union weight in every one of
/// those slices.
pub fn sym_normalize_and_slice<T>(
    entries: &[CooEntry<T>],
    n: usize,
    self_loop_weight: f64,
    self_type: T,
) -> Result<BTreeMap<T, CsrMatrix>>
where
    T: Ord + Clone + Display,
{
    if !(self_loop_weight.is_finite() && self_loop_weight > 0.0) {
        return Err(Error::Graph(format!(
            "self-loop weight must be positive and finite, got {self_loop_weight}"
        )));
    }
    if let Some(e) = entries
        .iter()
        .find(|e| !(e.weight.is_finite() && e.weight > 0.0))
    {
        return Err(Error::Graph(format!(
            "edge ({}, {}) of type {} has non-positive weight {}",
            e.row, e.col, e.etype, e.weight
        )));
    }
    if entries.iter().any(|e| e.etype == self_type) {
        return Err(Error::Graph(format!(
            "edge type {self_type} is reserved for self-loops"
        )));
    }

    let mut triples: Vec<(usize, usize, f64)> =
        entries.iter().map(|e| (e.row, e.col, e.weight)).collect();
    triples.extend((0..n).map(|i| (i, i, self_loop_weight)));
    let union = csr_from_coo(&triples, n, n)?;

    for (i, j, v) in union.triplets() {
        let back = union.get(j, i);
        let tol = 1e-12 * v.abs().max(back.abs());
        if (v - back).abs() > tol || back == 0.0 {
            return Err(Error::Graph(format!(
                "union adjacency is not symmetric at ({i}, {j}): {v} vs {back}"
            )));
        }
    }

    let degree: Vec<f64> = (0..n).map(|i| union.row(i).map(|(_, v)| v).sum()).collect();
    // Mirror the upper triangle so that every slice is exactly symmetric even
    // when summation order left the two directions a few ulps apart.
    let normalized = |i: usize, j: usize| {
        let (a, b) = (i.min(j), i.max(j));
        union.get(a, b) / (degree[a] * degree[b]).sqrt()
    };

    let mut by_type: BTreeMap<T, BTreeSet<(usize, usize)>> = BTreeMap::new();
    for e in entries {
        by_type
            .entry(e.etype.clone())
            .or_default()
            .insert((e.row, e.col));
    }
    for (t, cells) in &by_type {
        if let Some(&(i, j)) = cells.iter().find(|&&(i, j)| !cells.contains(&(j, i))) {
            return Err(Error::Graph(format!(
                "edges of type {t} are not symmetric: ({i}, {j}) has no reverse"
            )));
        }
    }

    let mut slices = BTreeMap::new();
    for (t, cells) in by_type {
        let coo: Vec<(usize, usize, f64)> = cells
            .into_iter()
            .map(|(i, j)| (i, j, normalized(i, j)))
            .collect();
        slices.insert(t, csr_from_coo(&coo, n, n)?);
    }
    let self_coo: Vec<(usize, usize, f64)> = (0..n).map(|i| (i, i, normalized(i, i))).collect();
    slices.insert(self_type, csr_from_coo(&self_coo, n, n)?);
    Ok(slices)
}

/// Text dump of typed slices: `n <n>` then `etype row col value` lines,
/// ordered by type then row then column.
pub fn dump_slices<T: Display>(n: usize, slices: &BTreeMap<T, CsrMatrix>) -> String {
    let mut out = String::new();
    writeln!(out, "n {n}").unwrap();
    for (t, m) in slices {
        for (i, j, v) in m.triplets() {
            writeln!(out, "{t} {i} {j} {v:?}").unwrap();
        }
    }
    out
}
