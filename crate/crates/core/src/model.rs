//! Two-layer heterogeneous GCN with a linear head on document rows.
//!
//! ```text
//! H¹ = σ(Σ_τ Ã_τ · H⁰ · W¹_τ)
//! H² = σ(Σ_τ Ã_τ · H¹ · W²_τ)
//! logits = H²[doc rows] · W_head + b_head
//! ```
//!
//! σ is leaky ReLU. The self-loop slice is one of the types τ. Gradients are
//! exact reverse mode, using Ã_τᵀ = Ã_τ.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;

use crate::dense::Matrix;
use crate::error::{Error, Result};
use crate::graph::{EdgeType, HeteroGraph};
use crate::optim::{AdamWState, Parameters};
use crate::rng;

pub const DEFAULT_LEAKY_SLOPE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub leaky_slope: f64,
    /// One map per graph-conv layer.
    pub layers: Vec<BTreeMap<EdgeType, Matrix>>,
    /// `d_out × C`.
    pub head_weight: Matrix,
    pub head_bias: Vec<f64>,
}

#[inline]
pub fn leaky_relu(x: f64, slope: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        slope * x
    }
}

/// Derivative of leaky ReLU, taking 1 at the kink.
#[inline]
pub fn leaky_relu_grad(x: f64, slope: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        slope
    }
}

fn glorot(rows: usize, cols: usize, rng: &mut impl Rng) -> Matrix {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| rng.gen_range(-bound..=bound))
        .collect();
    Matrix::from_vec(rows, cols, data).expect("length matches")
}

/// Glorot-uniform weights for every edge type of `graph`, zero head bias.
pub fn init_params(
    graph: &HeteroGraph,
    d_in: usize,
    d_hidden: usize,
    d_out: usize,
    classes: usize,
    seed: u64,
) -> Result<ModelParams> {
    init_params_for_types(&graph.edge_types(), [d_in, d_hidden, d_out], classes, seed)
}

pub fn init_params_for_types(
    types: &[EdgeType],
    dims: [usize; 3],
    classes: usize,
    seed: u64,
) -> Result<ModelParams> {
    if dims.contains(&0) || classes == 0 {
        return Err(Error::Config(format!(
            "model dimensions must be positive: dims {dims:?}, classes {classes}"
        )));
    }
    let mut rng = rng::stream(seed, rng::STREAM_INIT);
    let mut layers = Vec::with_capacity(2);
    for l in 0..2 {
        let layer = types
            .iter()
            .map(|&t| (t, glorot(dims[l], dims[l + 1], &mut rng)))
            .collect();
        layers.push(layer);
    }
    let head_weight = glorot(dims[2], classes, &mut rng);
    Ok(ModelParams {
        leaky_slope: DEFAULT_LEAKY_SLOPE,
        layers,
        head_weight,
        head_bias: vec![0.0; classes],
    })
}

impl ModelParams {
    pub fn d_in(&self) -> usize {
        self.first_matrix(0).map_or(0, Matrix::rows)
    }

    pub fn d_hidden(&self) -> usize {
        self.first_matrix(0).map_or(0, Matrix::cols)
    }

    pub fn d_out(&self) -> usize {
        self.head_weight.rows()
    }

    pub fn classes(&self) -> usize {
        self.head_bias.len()
    }

    pub fn edge_types(&self) -> Vec<EdgeType> {
        self.layers
            .first()
            .map(|l| l.keys().copied().collect())
            .unwrap_or_default()
    }

    fn first_matrix(&self, layer: usize) -> Option<&Matrix> {
        self.layers.get(layer).and_then(|l| l.values().next())
    }

    /// Same structure, all zeros.
    pub fn zeros_like(&self) -> ModelParams {
        ModelParams {
            leaky_slope: self.leaky_slope,
            layers: self
                .layers
                .iter()
                .map(|l| {
                    l.iter()
                        .map(|(t, m)| (*t, Matrix::zeros(m.rows(), m.cols())))
                        .collect()
                })
                .collect(),
            head_weight: Matrix::zeros(self.head_weight.rows(), self.head_weight.cols()),
            head_bias: vec![0.0; self.head_bias.len()],
        }
    }

    /// Checks that the parameters fit `graph` and `h0`.
    pub fn check_against(&self, graph: &HeteroGraph, h0: &Matrix) -> Result<()> {
        let graph_types = graph.edge_types();
        for (l, layer) in self.layers.iter().enumerate() {
            let types: Vec<EdgeType> = layer.keys().copied().collect();
            if types != graph_types {
                return Err(Error::Shape(format!(
                    "layer {l} has weights for {types:?}, graph has {graph_types:?}"
                )));
            }
        }
        if h0.shape() != (graph.n(), self.d_in()) {
            return Err(Error::Shape(format!(
                "features are {:?}, expected ({}, {})",
                h0.shape(),
                graph.n(),
                self.d_in()
            )));
        }
        Ok(())
    }
}

impl Parameters for ModelParams {
    fn visit(&self, f: &mut dyn FnMut(&str, &[f64], bool)) {
        for (l, layer) in self.layers.iter().enumerate() {
            for (t, m) in layer {
                f(&format!("layer{l}/{t}"), m.data(), true);
            }
        }
        f("head/weight", self.head_weight.data(), true);
        f("head/bias", &self.head_bias, false);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut [f64], bool)) {
        for (l, layer) in self.layers.iter_mut().enumerate() {
            for (t, m) in layer.iter_mut() {
                f(&format!("layer{l}/{t}"), m.data_mut(), true);
            }
        }
        f("head/weight", self.head_weight.data_mut(), true);
        f("head/bias", &mut self.head_bias, false);
    }
}

/// Intermediates of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `Ã_τ · H^(l)` per layer and type.
    pub propagated: Vec<BTreeMap<EdgeType, Matrix>>,
    /// Pre-activations per layer.
    pub pre: Vec<Matrix>,
    /// Post-activations per layer (the last is H²).
    pub post: Vec<Matrix>,
    pub doc_count: usize,
}

pub fn forward(
    graph: &HeteroGraph,
    h0: &Matrix,
    params: &ModelParams,
) -> Result<(Matrix, ForwardCache)> {
    params.check_against(graph, h0)?;
    let slope = params.leaky_slope;
    let mut propagated = Vec::with_capacity(params.layers.len());
    let mut pre = Vec::with_capacity(params.layers.len());
    let mut post: Vec<Matrix> = Vec::with_capacity(params.layers.len());
    for layer in &params.layers {
        let input = post.last().unwrap_or(h0);
        let d_next = layer.values().next().map_or(0, Matrix::cols);
        let mut z = Matrix::zeros(graph.n(), d_next);
        let mut props = BTreeMap::new();
        for (t, w) in layer {
            let p = graph.adjacency[t].spmm(input)?;
            z.add_assign(&p.matmul(w)?)?;
            props.insert(*t, p);
        }
        post.push(z.map(|x| leaky_relu(x, slope)));
        pre.push(z);
        propagated.push(props);
    }
    let top = post.last().unwrap_or(h0).top_rows(graph.doc_count);
    let mut logits = top.matmul(&params.head_weight)?;
    for i in 0..logits.rows() {
        for (x, b) in logits.row_mut(i).iter_mut().zip(&params.head_bias) {
            *x += b;
        }
    }
    Ok((
        logits,
        ForwardCache {
            propagated,
            pre,
            post,
            doc_count: graph.doc_count,
        },
    ))
}

/// Mean cross-entropy over `targets` (`(doc row, class)` pairs) and its
/// gradient with respect to all logits (zero on rows outside the targets).
pub fn softmax_xent(logits: &Matrix, targets: &[(usize, usize)]) -> Result<(f64, Matrix)> {
    if targets.is_empty() {
        return Err(Error::Config("loss mask is empty".into()));
    }
    let c = logits.cols();
    let scale = 1.0 / targets.len() as f64;
    let mut grad = Matrix::zeros(logits.rows(), c);
    let mut loss = 0.0;
    for &(row, label) in targets {
        if row >= logits.rows() {
            return Err(Error::Shape(format!(
                "target row {row} outside {} logits rows",
                logits.rows()
            )));
        }
        if label >= c {
            return Err(Error::Config(format!("label {label} outside [0, {c})")));
        }
        let z = logits.row(row);
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = z.iter().map(|&x| (x - max).exp()).sum();
        let log_norm = max + sum.ln();
        loss += log_norm - z[label];
        let g = grad.row_mut(row);
        for (k, gk) in g.iter_mut().enumerate() {
            let p = (z[k] - log_norm).exp();
            *gk += scale * (p - if k == label { 1.0 } else { 0.0 });
        }
    }
    Ok((loss * scale, grad))
}

/// Gradients of every parameter given `d_logits` (doc rows × classes).
pub fn backward(
    graph: &HeteroGraph,
    cache: &ForwardCache,
    d_logits: &Matrix,
    params: &ModelParams,
) -> Result<ModelParams> {
    let n_layers = params.layers.len();
    if cache.post.len() != n_layers
        || cache.doc_count != graph.doc_count
        || d_logits.shape() != (graph.doc_count, params.classes())
    {
        return Err(Error::Shape(
            "cache or upstream gradient does not match the model".into(),
        ));
    }
    let slope = params.leaky_slope;
    let mut grads = params.zeros_like();

    let top = &cache.post[n_layers - 1];
    if top.rows() != graph.n() {
        return Err(Error::Shape("stale forward cache".into()));
    }
    let top_docs = top.top_rows(graph.doc_count);
    grads.head_weight = top_docs.t_matmul(d_logits)?;
    for i in 0..d_logits.rows() {
        for (b, g) in grads.head_bias.iter_mut().zip(d_logits.row(i)) {
            *b += g;
        }
    }

    // Upstream gradient w.r.t. H^(L); word rows receive nothing from the head.
    let mut d_h = Matrix::zeros(graph.n(), top.cols());
    let d_docs = d_logits.matmul_t(&params.head_weight)?;
    for i in 0..graph.doc_count {
        d_h.row_mut(i).copy_from_slice(d_docs.row(i));
    }

    for l in (0..n_layers).rev() {
        let pre = &cache.pre[l];
        let mut delta = d_h;
        for (d, &z) in delta.data_mut().iter_mut().zip(pre.data()) {
            *d *= leaky_relu_grad(z, slope);
        }
        for t in params.layers[l].keys() {
            let p = &cache.propagated[l][t];
            grads.layers[l].insert(*t, p.t_matmul(&delta)?);
        }
        if l == 0 {
            break;
        }
        let d_in = cache.post[l - 1].cols();
        let mut next = Matrix::zeros(graph.n(), d_in);
        for (t, w) in &params.layers[l] {
            let back = delta.matmul_t(w)?;
            next.add_assign(&graph.adjacency[t].spmm(&back)?)?;
        }
        d_h = next;
    }
    Ok(grads)
}

/// Row-wise argmax with ties going to the lowest class index.
pub fn argmax_rows(logits: &Matrix) -> Vec<usize> {
    (0..logits.rows())
        .map(|i| {
            let row = logits.row(i);
            let mut best = 0;
            for (k, &x) in row.iter().enumerate().skip(1) {
                if x > row[best] {
                    best = k;
                }
            }
            best
        })
        .collect()
}

const CHECKPOINT_MAGIC: &str = "hetgcn-checkpoint";
const CHECKPOINT_VERSION: u32 = 1;

/// Parameters plus optional optimizer state, as versioned text.
///
/// Values are written in shortest round-trip form, so reading back is
/// bit-exact.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub optimizer: Option<AdamWState>,
    pub epoch: usize,
}

fn write_values(out: &mut String, values: &[f64]) {
    let mut first = true;
    for v in values {
        if !first {
            out.push(' ');
        }
        first = false;
        write!(out, "{v:?}").unwrap();
    }
    out.push('\n');
}

impl Checkpoint {
    pub fn to_text(&self) -> String {
        let p = &self.params;
        let mut out = String::new();
        writeln!(out, "{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}").unwrap();
        writeln!(out, "epoch {}", self.epoch).unwrap();
        writeln!(out, "leaky_slope {:?}", p.leaky_slope).unwrap();
        writeln!(
            out,
            "dims {} {} {} {}",
            p.d_in(),
            p.d_hidden(),
            p.d_out(),
            p.classes()
        )
        .unwrap();
        let types: Vec<String> = p.edge_types().iter().map(ToString::to_string).collect();
        writeln!(out, "types {} {}", types.len(), types.join(" ")).unwrap();
        let mut tensors: Vec<(String, Vec<f64>)> = Vec::new();
        p.visit(&mut |name, data, _| tensors.push((name.to_string(), data.to_vec())));
        for (name, data) in &tensors {
            writeln!(out, "tensor {name} {}", data.len()).unwrap();
            write_values(&mut out, data);
        }
        if let Some(s) = &self.optimizer {
            writeln!(out, "adamw {} {}", s.step, s.m.len()).unwrap();
            for (m, v) in s.m.iter().zip(&s.v) {
                writeln!(out, "moments {}", m.len()).unwrap();
                write_values(&mut out, m);
                write_values(&mut out, v);
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |msg: &str| Error::Checkpoint(msg.to_string());
        let mut lines = text.lines();
        let mut next = |what: &str| {
            lines
                .next()
                .ok_or_else(|| bad(&format!("truncated before {what}")))
        };
        let header = next("header")?;
        if header != format!("{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}") {
            return Err(bad(&format!("unsupported header {header:?}")));
        }
        let field = |line: &str, key: &str| -> Result<Vec<String>> {
            let mut parts = line.split(' ');
            if parts.next() != Some(key) {
                return Err(bad(&format!("expected {key:?}, found {line:?}")));
            }
            Ok(parts.map(str::to_string).collect())
        };
        let num = |s: &str| -> Result<usize> {
            s.parse().map_err(|_| bad(&format!("bad integer {s:?}")))
        };
        let floats = |line: &str, len: usize| -> Result<Vec<f64>> {
            let v: Vec<f64> = if line.is_empty() {
                Vec::new()
            } else {
                line.split(' ')
                    .map(|s| {
                        s.parse::<f64>()
                            .map_err(|_| bad(&format!("bad number {s:?}")))
                    })
                    .collect::<Result<_>>()?
            };
            if v.len() != len {
                return Err(bad(&format!("expected {len} values, found {}", v.len())));
            }
            Ok(v)
        };

        let epoch = num(&field(next("epoch")?, "epoch")?.concat())?;
        let slope: f64 = field(next("leaky_slope")?, "leaky_slope")?
            .concat()
            .parse()
            .map_err(|_| bad("bad leaky_slope"))?;
        let dims: Vec<usize> = field(next("dims")?, "dims")?
            .iter()
            .map(|s| num(s))
            .collect::<Result<_>>()?;
        let [d_in, d_hidden, d_out, classes] = dims[..] else {
            return Err(bad("dims needs four values"));
        };
        let type_fields = field(next("types")?, "types")?;
        let n_types = num(type_fields
            .first()
            .ok_or_else(|| bad("missing type count"))?)?;
        let types: Vec<EdgeType> = type_fields[1..]
            .iter()
            .map(|s| s.parse::<EdgeType>().map_err(|e| bad(&e.to_string())))
            .collect::<Result<_>>()?;
        if types.len() != n_types {
            return Err(bad("type count mismatch"));
        }

        let mut params = init_params_for_types(&types, [d_in, d_hidden, d_out], classes, 0)?;
        params.leaky_slope = slope;
        let mut expected = Vec::new();
        params.visit(&mut |name, data, _| expected.push((name.to_string(), data.len())));
        let mut loaded = Vec::with_capacity(expected.len());
        for (name, len) in &expected {
            let f = field(next("tensor")?, "tensor")?;
            if f.len() != 2 || &f[0] != name || num(&f[1])? != *len {
                return Err(bad(&format!("expected tensor {name} of length {len}")));
            }
            loaded.push(floats(next("values")?, *len)?);
        }
        let mut k = 0;
        params.visit_mut(&mut |_, data, _| {
            data.copy_from_slice(&loaded[k]);
            k += 1;
        });

        let optimizer = match next("optimizer") {
            Err(_) => None,
            Ok(line) => {
                let f = field(line, "adamw")?;
                if f.len() != 2 {
                    return Err(bad("adamw line needs step and count"));
                }
                let step = f[0].parse::<u64>().map_err(|_| bad("bad step"))?;
                let count = num(&f[1])?;
                let mut state = AdamWState {
                    step,
                    m: Vec::new(),
                    v: Vec::new(),
                };
                for _ in 0..count {
                    let len = num(&field(next("moments")?, "moments")?.concat())?;
                    state.m.push(floats(next("m")?, len)?);
                    state.v.push(floats(next("v")?, len)?);
                }
                Some(state)
            }
        };
        if let Ok(line) = next("end") {
            return Err(bad(&format!("trailing content {line:?}")));
        }
        Ok(Checkpoint {
            params,
            optimizer,
            epoch,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text())
            .map_err(|e| Error::io(format!("writing checkpoint {}", path.display()), e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading checkpoint {}", path.display()), e))?;
        Checkpoint::from_text(&text)
    }
}
