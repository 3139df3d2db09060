//! Reference forwards of the learned densifier: anchor aggregation, graph
//! convolutions and the depth regression head.
//!
//! Parameters load from a JSON file:
//!
//! ```json
//! {
//!   "activation": "sigmoid",
//!   "head_mode": "residual",
//!   "levels": 4,
//!   "chunks": 2,
//!   "bandwidth": null,
//!   "tensors": { "depth_mlp.0.weight": { "shape": [3, 8], "data": [...] }, ... }
//! }
//! ```
//!
//! Matrices are row-major `[out, in]`, biases `[out]`. Tensor names:
//!
//! | name | shape |
//! |------|-------|
//! | `depth_mlp.{k}.weight/bias` | `2L → … → c` |
//! | `dist_mlp.{k}.weight/bias` | `1 → … → c` |
//! | `chunk_attn.{l}.query/key/value` | `[c, c]` |
//! | `kde_a.{k}.weight/bias`, `kde_b.{k}.weight/bias` | `2L → … → e` (same `e`) |
//! | `global_attn.{l}.query/key/value` | `[ηc, ηc]` |
//! | `gnn.{l}.w0/w1`, `gnn.{l}.b0/b1` | `[ηc, ηc]`, `[ηc]`, six layers |
//! | `head.{k}.weight/bias` | `ηc → … → 1` |
//!
//! MLP layers are joined by ReLU; the last layer is linear.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::hierarchy::ClusterAssignment;
use super::mesh::PixelMesh;
use super::DensifyError;
use crate::frustum::{kde_density, silverman_bandwidth, sinusoidal_embed};

/// Number of graph-convolution layers in the stack.
pub const GNN_LAYERS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Softmax,
    #[default]
    Sigmoid,
}

/// What the regression head predicts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadMode {
    /// Depth directly.
    Absolute,
    /// Correction added to the upsampled depth.
    #[default]
    Residual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn matrix(m: &DMatrix<f64>) -> Tensor {
        Tensor {
            shape: vec![m.nrows(), m.ncols()],
            data: (0..m.nrows()).flat_map(|r| m.row(r).iter().copied().collect::<Vec<_>>()).collect(),
        }
    }

    pub fn vector(v: &DVector<f64>) -> Tensor {
        Tensor {
            shape: vec![v.len()],
            data: v.iter().copied().collect(),
        }
    }
}

/// On-disk form of [`ForwardParams`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamFile {
    #[serde(default)]
    pub activation: Activation,
    #[serde(default)]
    pub head_mode: HeadMode,
    /// Frequency levels `L` of the sinusoidal embedding.
    pub levels: usize,
    /// Anchor chunks `η`.
    pub chunks: usize,
    /// KDE bandwidth for the gating feature; Silverman's rule when absent.
    #[serde(default)]
    pub bandwidth: Option<f64>,
    pub tensors: BTreeMap<String, Tensor>,
}

/// `y = W x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: DMatrix<f64>,
    pub bias: DVector<f64>,
}

impl Dense {
    pub fn new(weight: DMatrix<f64>, bias: DVector<f64>) -> Result<Dense, DensifyError> {
        if weight.nrows() != bias.len() {
            return Err(DensifyError::Params(format!(
                "weight has {} rows but bias has {} entries",
                weight.nrows(),
                bias.len()
            )));
        }
        Ok(Dense { weight, bias })
    }

    pub fn inputs(&self) -> usize {
        self.weight.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.nrows()
    }

    /// Applies the layer to every row of `x`.
    pub fn apply_rows(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut y = x * self.weight.transpose();
        for mut row in y.row_iter_mut() {
            row += self.bias.transpose();
        }
        y
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

impl Mlp {
    pub fn new(layers: Vec<Dense>) -> Result<Mlp, DensifyError> {
        if layers.is_empty() {
            return Err(DensifyError::Params("an MLP needs at least one layer".into()));
        }
        for w in layers.windows(2) {
            if w[0].outputs() != w[1].inputs() {
                return Err(DensifyError::Params(format!(
                    "layer widths {} → {} do not chain",
                    w[0].outputs(),
                    w[1].inputs()
                )));
            }
        }
        Ok(Mlp { layers })
    }

    pub fn identity(n: usize) -> Mlp {
        Mlp {
            layers: vec![Dense {
                weight: DMatrix::identity(n, n),
                bias: DVector::zeros(n),
            }],
        }
    }

    /// Maps anything to a vector of ones: zero weights, unit bias.
    pub fn ones(inputs: usize, outputs: usize) -> Mlp {
        Mlp {
            layers: vec![Dense {
                weight: DMatrix::zeros(outputs, inputs),
                bias: DVector::from_element(outputs, 1.0),
            }],
        }
    }

    pub fn inputs(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn outputs(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs()
    }

    pub fn apply_rows(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut y = x.clone();
        for (k, layer) in self.layers.iter().enumerate() {
            y = layer.apply_rows(&y);
            if k + 1 < self.layers.len() {
                y.apply(|v| *v = v.max(0.0));
            }
        }
        y
    }
}

/// One residual attention layer `X + act(Q Kᵀ / √d) V` with linear
/// projections `Q = X W_qᵀ` and so on.
#[derive(Debug, Clone, PartialEq)]
pub struct SelfAttention {
    pub query: DMatrix<f64>,
    pub key: DMatrix<f64>,
    pub value: DMatrix<f64>,
}

impl SelfAttention {
    pub fn dim(&self) -> usize {
        self.query.nrows()
    }

    pub fn apply(&self, x: &DMatrix<f64>, act: Activation) -> DMatrix<f64> {
        if x.nrows() == 0 {
            return x.clone();
        }
        let q = x * self.query.transpose();
        let k = x * self.key.transpose();
        let v = x * self.value.transpose();
        let mut a = q * k.transpose() / (self.dim() as f64).sqrt();
        match act {
            Activation::Sigmoid => a.apply(|s| *s = sigmoid(*s)),
            Activation::Softmax => {
                for mut row in a.row_iter_mut() {
                    let m = row.max();
                    row.apply(|s| *s = (*s - m).exp());
                    let z = row.sum();
                    row /= z;
                }
            }
        }
        x + a * v
    }
}

/// One layer of the neighbourhood-averaged graph convolution.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphConv {
    pub w0: DMatrix<f64>,
    pub w1: DMatrix<f64>,
    pub b0: DVector<f64>,
    pub b1: DVector<f64>,
}

impl GraphConv {
    fn check(&self) -> Result<(), DensifyError> {
        let n = self.w0.nrows();
        let ok = self.w1.nrows() == n
            && self.w0.ncols() == self.w1.ncols()
            && self.b0.len() == n
            && self.b1.len() == n;
        if ok {
            Ok(())
        } else {
            Err(DensifyError::Params(format!(
                "graph conv shapes W0 {:?}, W1 {:?}, b0 {}, b1 {}",
                self.w0.shape(),
                self.w1.shape(),
                self.b0.len(),
                self.b1.len()
            )))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardParams {
    pub activation: Activation,
    pub head_mode: HeadMode,
    pub levels: usize,
    pub chunks: usize,
    pub bandwidth: Option<f64>,
    pub depth_mlp: Mlp,
    pub dist_mlp: Mlp,
    pub chunk_attention: Vec<SelfAttention>,
    pub kde_a: Mlp,
    pub kde_b: Mlp,
    pub global_attention: Vec<SelfAttention>,
    pub gnn: Vec<GraphConv>,
    pub head: Mlp,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn take_matrix(t: &BTreeMap<String, Tensor>, name: &str) -> Result<Option<DMatrix<f64>>, DensifyError> {
    let Some(t) = t.get(name) else { return Ok(None) };
    let [r, c] = t.shape[..] else {
        return Err(DensifyError::Params(format!("{name}: expected 2 dimensions, got {:?}", t.shape)));
    };
    if t.data.len() != r * c {
        return Err(DensifyError::Params(format!("{name}: {} values for shape [{r}, {c}]", t.data.len())));
    }
    Ok(Some(DMatrix::from_row_slice(r, c, &t.data)))
}

fn take_vector(t: &BTreeMap<String, Tensor>, name: &str) -> Result<Option<DVector<f64>>, DensifyError> {
    let Some(t) = t.get(name) else { return Ok(None) };
    let [n] = t.shape[..] else {
        return Err(DensifyError::Params(format!("{name}: expected 1 dimension, got {:?}", t.shape)));
    };
    if t.data.len() != n {
        return Err(DensifyError::Params(format!("{name}: {} values for shape [{n}]", t.data.len())));
    }
    Ok(Some(DVector::from_column_slice(&t.data)))
}

fn require<T>(v: Option<T>, name: &str) -> Result<T, DensifyError> {
    v.ok_or_else(|| DensifyError::Params(format!("missing tensor {name}")))
}

fn load_mlp(t: &BTreeMap<String, Tensor>, prefix: &str) -> Result<Mlp, DensifyError> {
    let mut layers = Vec::new();
    loop {
        let k = layers.len();
        let Some(w) = take_matrix(t, &format!("{prefix}.{k}.weight"))? else { break };
        let b = require(take_vector(t, &format!("{prefix}.{k}.bias"))?, &format!("{prefix}.{k}.bias"))?;
        layers.push(Dense::new(w, b).map_err(|e| DensifyError::Params(format!("{prefix}.{k}: {e}")))?);
    }
    if layers.is_empty() {
        return Err(DensifyError::Params(format!("missing tensor {prefix}.0.weight")));
    }
    Mlp::new(layers).map_err(|e| DensifyError::Params(format!("{prefix}: {e}")))
}

fn load_attention(t: &BTreeMap<String, Tensor>, prefix: &str) -> Result<Vec<SelfAttention>, DensifyError> {
    let mut out = Vec::new();
    while let Some(query) = take_matrix(t, &format!("{prefix}.{}.query", out.len()))? {
        let l = out.len();
        let key = require(take_matrix(t, &format!("{prefix}.{l}.key"))?, &format!("{prefix}.{l}.key"))?;
        let value = require(take_matrix(t, &format!("{prefix}.{l}.value"))?, &format!("{prefix}.{l}.value"))?;
        out.push(SelfAttention { query, key, value });
    }
    Ok(out)
}

fn store_mlp(t: &mut BTreeMap<String, Tensor>, prefix: &str, mlp: &Mlp) {
    for (k, l) in mlp.layers.iter().enumerate() {
        t.insert(format!("{prefix}.{k}.weight"), Tensor::matrix(&l.weight));
        t.insert(format!("{prefix}.{k}.bias"), Tensor::vector(&l.bias));
    }
}

fn store_attention(t: &mut BTreeMap<String, Tensor>, prefix: &str, layers: &[SelfAttention]) {
    for (l, a) in layers.iter().enumerate() {
        t.insert(format!("{prefix}.{l}.query"), Tensor::matrix(&a.query));
        t.insert(format!("{prefix}.{l}.key"), Tensor::matrix(&a.key));
        t.insert(format!("{prefix}.{l}.value"), Tensor::matrix(&a.value));
    }
}

impl ForwardParams {
    pub fn from_file_data(f: &ParamFile) -> Result<ForwardParams, DensifyError> {
        let t = &f.tensors;
        let mut gnn = Vec::new();
        for l in 0..GNN_LAYERS {
            let name = |s: &str| format!("gnn.{l}.{s}");
            gnn.push(GraphConv {
                w0: require(take_matrix(t, &name("w0"))?, &name("w0"))?,
                w1: require(take_matrix(t, &name("w1"))?, &name("w1"))?,
                b0: require(take_vector(t, &name("b0"))?, &name("b0"))?,
                b1: require(take_vector(t, &name("b1"))?, &name("b1"))?,
            });
        }
        let p = ForwardParams {
            activation: f.activation,
            head_mode: f.head_mode,
            levels: f.levels,
            chunks: f.chunks,
            bandwidth: f.bandwidth,
            depth_mlp: load_mlp(t, "depth_mlp")?,
            dist_mlp: load_mlp(t, "dist_mlp")?,
            chunk_attention: load_attention(t, "chunk_attn")?,
            kde_a: load_mlp(t, "kde_a")?,
            kde_b: load_mlp(t, "kde_b")?,
            global_attention: load_attention(t, "global_attn")?,
            gnn,
            head: load_mlp(t, "head")?,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn to_file_data(&self) -> ParamFile {
        let mut t = BTreeMap::new();
        store_mlp(&mut t, "depth_mlp", &self.depth_mlp);
        store_mlp(&mut t, "dist_mlp", &self.dist_mlp);
        store_attention(&mut t, "chunk_attn", &self.chunk_attention);
        store_mlp(&mut t, "kde_a", &self.kde_a);
        store_mlp(&mut t, "kde_b", &self.kde_b);
        store_attention(&mut t, "global_attn", &self.global_attention);
        for (l, g) in self.gnn.iter().enumerate() {
            t.insert(format!("gnn.{l}.w0"), Tensor::matrix(&g.w0));
            t.insert(format!("gnn.{l}.w1"), Tensor::matrix(&g.w1));
            t.insert(format!("gnn.{l}.b0"), Tensor::vector(&g.b0));
            t.insert(format!("gnn.{l}.b1"), Tensor::vector(&g.b1));
        }
        store_mlp(&mut t, "head", &self.head);
        ParamFile {
            activation: self.activation,
            head_mode: self.head_mode,
            levels: self.levels,
            chunks: self.chunks,
            bandwidth: self.bandwidth,
            tensors: t,
        }
    }

    pub fn load(path: &Path) -> Result<ForwardParams, DensifyError> {
        let text = std::fs::read_to_string(path).map_err(|e| DensifyError::Params(format!("{}: {e}", path.display())))?;
        let f: ParamFile =
            serde_json::from_str(&text).map_err(|e| DensifyError::Params(format!("{}: {e}", path.display())))?;
        Self::from_file_data(&f)
    }

    pub fn save(&self, path: &Path) -> Result<(), DensifyError> {
        let text = serde_json::to_string_pretty(&self.to_file_data()).expect("serializable");
        std::fs::write(path, text).map_err(|e| DensifyError::Params(format!("{}: {e}", path.display())))
    }

    /// Feature channels `c`.
    pub fn channels(&self) -> usize {
        self.depth_mlp.outputs()
    }

    /// Width `ηc` of a vertex feature after aggregation.
    pub fn width(&self) -> usize {
        self.chunks * self.channels()
    }

    pub fn validate(&self) -> Result<(), DensifyError> {
        let bad = |m: String| Err(DensifyError::Params(m));
        if self.levels == 0 || self.chunks == 0 {
            return bad("levels and chunks must be at least 1".into());
        }
        if let Some(h) = self.bandwidth {
            if !(h > 0.0 && h.is_finite()) {
                return bad(format!("bandwidth {h} is not positive"));
            }
        }
        let (c, e, w) = (self.channels(), 2 * self.levels, self.width());
        if self.depth_mlp.inputs() != e {
            return bad(format!("depth_mlp takes {} inputs, embedding has {e}", self.depth_mlp.inputs()));
        }
        if self.dist_mlp.inputs() != 1 || self.dist_mlp.outputs() != c {
            return bad(format!("dist_mlp must map 1 → {c}"));
        }
        if self.kde_a.inputs() != e || self.kde_b.inputs() != e || self.kde_a.outputs() != self.kde_b.outputs() {
            return bad(format!("kde_a and kde_b must both map {e} → the same width"));
        }
        for (name, layers, d) in [("chunk_attn", &self.chunk_attention, c), ("global_attn", &self.global_attention, w)] {
            for (l, a) in layers.iter().enumerate() {
                if [&a.query, &a.key, &a.value].iter().any(|m| m.shape() != (d, d)) {
                    return bad(format!("{name}.{l} projections must be {d}×{d}"));
                }
            }
        }
        if self.gnn.len() != GNN_LAYERS {
            return bad(format!("{} graph layers, expected {GNN_LAYERS}", self.gnn.len()));
        }
        for (l, g) in self.gnn.iter().enumerate() {
            g.check()?;
            if g.w0.shape() != (w, w) {
                return bad(format!("gnn.{l} must be {w}×{w}"));
            }
        }
        if self.head.inputs() != w || self.head.outputs() != 1 {
            return bad(format!("head must map {w} → 1"));
        }
        let all = [&self.depth_mlp, &self.dist_mlp, &self.kde_a, &self.kde_b, &self.head];
        let finite = all.iter().all(|m| m.layers.iter().all(|l| l.weight.iter().chain(l.bias.iter()).all(|v| v.is_finite())))
            && self
                .chunk_attention
                .iter()
                .chain(&self.global_attention)
                .all(|a| a.query.iter().chain(a.key.iter()).chain(a.value.iter()).all(|v| v.is_finite()))
            && self
                .gnn
                .iter()
                .all(|g| g.w0.iter().chain(g.w1.iter()).chain(g.b0.iter()).chain(g.b1.iter()).all(|v| v.is_finite()));
        if !finite {
            return bad("non-finite parameter".into());
        }
        Ok(())
    }

    /// Random parameters with weights uniform in `±scale/√fan_in`.
    pub fn random<R: rand::Rng>(rng: &mut R, levels: usize, chunks: usize, channels: usize, scale: f64) -> ForwardParams {
        let mut mat = |r: usize, c: usize| {
            let s = scale / (c as f64).sqrt();
            DMatrix::from_fn(r, c, |_, _| rng.random_range(-s..=s))
        };
        let mut dense = |i: usize, o: usize| Dense {
            weight: mat(o, i),
            bias: DVector::from_iterator(o, mat(o, 1).iter().copied()),
        };
        let e = 2 * levels;
        let w = chunks * channels;
        let depth_mlp = Mlp { layers: vec![dense(e, channels), dense(channels, channels)] };
        let dist_mlp = Mlp { layers: vec![dense(1, channels), dense(channels, channels)] };
        let kde_a = Mlp { layers: vec![dense(e, channels)] };
        let kde_b = Mlp { layers: vec![dense(e, channels)] };
        let head = Mlp { layers: vec![dense(w, channels), dense(channels, 1)] };
        let mut mat = |r: usize, c: usize| {
            let s = scale / (c as f64).sqrt();
            DMatrix::from_fn(r, c, |_, _| rng.random_range(-s..=s))
        };
        let mut attn = |d: usize| SelfAttention {
            query: mat(d, d),
            key: mat(d, d),
            value: mat(d, d),
        };
        let chunk_attention = vec![attn(channels), attn(channels)];
        let global_attention = vec![attn(w)];
        let gnn = (0..GNN_LAYERS)
            .map(|_| GraphConv {
                w0: mat(w, w),
                w1: mat(w, w),
                b0: DVector::from_iterator(w, mat(w, 1).iter().copied()),
                b1: DVector::from_iterator(w, mat(w, 1).iter().copied()),
            })
            .collect();
        ForwardParams {
            activation: Activation::Sigmoid,
            head_mode: HeadMode::Residual,
            levels,
            chunks,
            bandwidth: None,
            depth_mlp,
            dist_mlp,
            chunk_attention,
            kde_a,
            kde_b,
            global_attention,
            gnn,
            head,
        }
    }
}

/// Location-weighted anchor features `MLP(Embed(d)) ⊙ MLP(dist)`, one row per
/// anchor.
pub fn anchor_features(depths: &[f64], distances: &[f64], params: &ForwardParams) -> Result<DMatrix<f64>, DensifyError> {
    if depths.len() != distances.len() {
        return Err(DensifyError::Shape(format!("{} depths for {} distances", depths.len(), distances.len())));
    }
    let e = 2 * params.levels;
    let mut emb = DMatrix::zeros(depths.len(), e);
    for (r, d) in depths.iter().enumerate() {
        for (k, v) in sinusoidal_embed(&[*d], params.levels).into_iter().enumerate() {
            emb[(r, k)] = v;
        }
    }
    let dist = DMatrix::from_column_slice(distances.len(), 1, distances);
    Ok(params
        .depth_mlp
        .apply_rows(&emb)
        .component_mul(&params.dist_mlp.apply_rows(&dist)))
}

/// `sigmoid(A Bᵀ) F`, where the rows of `A` and `B` are the two KDE MLPs
/// applied to the embedded densities `mu`.
pub fn kde_gate(features: &DMatrix<f64>, mu: &[f64], params: &ForwardParams) -> DMatrix<f64> {
    let mut emb = DMatrix::zeros(mu.len(), 2 * params.levels);
    for (r, m) in mu.iter().enumerate() {
        for (k, v) in sinusoidal_embed(&[*m], params.levels).into_iter().enumerate() {
            emb[(r, k)] = v;
        }
    }
    let a = params.kde_a.apply_rows(&emb);
    let b = params.kde_b.apply_rows(&emb);
    let mut g = a * b.transpose();
    g.apply(|v| *v = sigmoid(*v));
    g * features
}

/// KDE density of each anchor depth among all anchors.
pub fn anchor_density(mesh: &PixelMesh, params: &ForwardParams) -> Result<Vec<f64>, DensifyError> {
    let depths = mesh.anchor_depths();
    if depths.is_empty() {
        return Err(DensifyError::NoAnchors);
    }
    let h = params.bandwidth.unwrap_or_else(|| silverman_bandwidth(&depths));
    kde_density(&depths, h).map_err(|e| DensifyError::Params(e.to_string()))
}

/// Local-to-global aggregation: per query vertex, embed every anchor, run
/// the chunk attention layers and KDE gating per chunk, max-pool each chunk
/// (zeros for an empty chunk), concatenate the `η` chunks, then apply the
/// global attention layers across query vertices. Returns `m × ηc`.
pub fn aggregation_forward(
    mesh: &PixelMesh,
    clusters: &ClusterAssignment,
    params: &ForwardParams,
) -> Result<DMatrix<f64>, DensifyError> {
    params.validate()?;
    if clusters.chunks() != params.chunks {
        return Err(DensifyError::Shape(format!(
            "{} chunks assigned, parameters expect {}",
            clusters.chunks(),
            params.chunks
        )));
    }
    if clusters.bounds.last() != Some(&mesh.anchors.len()) {
        return Err(DensifyError::Shape("cluster assignment does not match the mesh anchors".into()));
    }
    let mu = anchor_density(mesh, params)?;
    let anchor_depths = mesh.anchor_depths();
    let c = params.channels();
    let mut out = DMatrix::zeros(clusters.queries.len(), params.width());
    for q in 0..clusters.queries.len() {
        for k in 0..params.chunks {
            let members = clusters.chunk(q, k);
            if members.is_empty() {
                continue;
            }
            let (lo, hi) = (clusters.bounds[k], clusters.bounds[k + 1]);
            let depths: Vec<f64> = members.iter().map(|&a| anchor_depths[a]).collect();
            let mut f = anchor_features(&depths, &clusters.distances[q][lo..hi], params)?;
            for layer in &params.chunk_attention {
                f = layer.apply(&f, params.activation);
            }
            let mu_k: Vec<f64> = members.iter().map(|&a| mu[a]).collect();
            let f = kde_gate(&f, &mu_k, params);
            for j in 0..c {
                out[(q, k * c + j)] = f.column(j).max();
            }
        }
    }
    for layer in &params.global_attention {
        out = layer.apply(&out, params.activation);
    }
    Ok(out)
}

fn neighbours(n: usize, edges: &[[usize; 2]]) -> Result<Vec<Vec<usize>>, DensifyError> {
    let mut adj = vec![Vec::new(); n];
    for &[a, b] in edges {
        if a >= n || b >= n {
            return Err(DensifyError::Shape(format!("edge ({a}, {b}) outside {n} vertices")));
        }
        if a != b {
            adj[a].push(b);
            adj[b].push(a);
        }
    }
    for l in &mut adj {
        l.sort_unstable();
        l.dedup();
    }
    Ok(adj)
}

/// `f′ᵢ = (W₀fᵢ + b₀ + Σ_{j∈N(i)} (W₁fⱼ + b₁)) / (1 + |N(i)|)` for every row.
pub fn graph_conv_forward(
    features: &DMatrix<f64>,
    edges: &[[usize; 2]],
    layer: &GraphConv,
) -> Result<DMatrix<f64>, DensifyError> {
    layer.check()?;
    if features.ncols() != layer.w0.ncols() {
        return Err(DensifyError::Shape(format!(
            "features have {} columns, layer takes {}",
            features.ncols(),
            layer.w0.ncols()
        )));
    }
    let adj = neighbours(features.nrows(), edges)?;
    let own = features * layer.w0.transpose();
    let msg = features * layer.w1.transpose();
    let mut out = DMatrix::zeros(features.nrows(), layer.w0.nrows());
    for (i, nb) in adj.iter().enumerate() {
        let mut row = own.row(i) + layer.b0.transpose();
        for &j in nb {
            row += msg.row(j) + layer.b1.transpose();
        }
        out.set_row(i, &(row / (1 + nb.len()) as f64));
    }
    Ok(out)
}

/// Sequential graph convolutions; after every second layer the input of
/// that pair is added back.
pub fn graph_conv_stack(
    features: &DMatrix<f64>,
    edges: &[[usize; 2]],
    layers: &[GraphConv],
) -> Result<DMatrix<f64>, DensifyError> {
    let mut x = features.clone();
    let mut skip = features.clone();
    for (l, layer) in layers.iter().enumerate() {
        x = graph_conv_forward(&x, edges, layer)?;
        if l % 2 == 1 {
            if x.shape() != skip.shape() {
                return Err(DensifyError::Shape("residual widths differ".into()));
            }
            x += &skip;
            skip = x.clone();
        }
    }
    Ok(x)
}

/// Depth per row. In residual mode `base` (the upsampled depth) is required
/// and the head output is added to it.
pub fn regression_head(features: &DMatrix<f64>, params: &ForwardParams, base: Option<&[f64]>) -> Result<Vec<f64>, DensifyError> {
    let y = params.head.apply_rows(features);
    let raw: Vec<f64> = y.column(0).iter().copied().collect();
    match params.head_mode {
        HeadMode::Absolute => Ok(raw),
        HeadMode::Residual => {
            let base = base.ok_or_else(|| DensifyError::Shape("residual head needs base depths".into()))?;
            if base.len() != raw.len() {
                return Err(DensifyError::Shape(format!("{} base depths for {} vertices", base.len(), raw.len())));
            }
            Ok(raw.iter().zip(base).map(|(r, b)| r + b).collect())
        }
    }
}

/// Aggregation, graph stack over `edges` (indices into `clusters.queries`)
/// and the head: one predicted depth per query vertex.
pub fn densify_forward(
    mesh: &PixelMesh,
    clusters: &ClusterAssignment,
    edges: &[[usize; 2]],
    params: &ForwardParams,
    base: Option<&[f64]>,
) -> Result<Vec<f64>, DensifyError> {
    let f = aggregation_forward(mesh, clusters, params)?;
    let g = graph_conv_stack(&f, edges, &params.gnn)?;
    regression_head(&g, params, base)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::densify::build_pixel_mesh;
    use crate::geometry::{CameraCalib, InstanceMask, ObjectClass};
    use rand::SeedableRng;

    fn calib() -> CameraCalib {
        CameraCalib::pinhole(700.0, 700.0, 600.0, 180.0, (1200, 360))
    }

    fn zero_conv(n: usize) -> GraphConv {
        GraphConv {
            w0: DMatrix::zeros(n, n),
            w1: DMatrix::zeros(n, n),
            b0: DVector::zeros(n),
            b1: DVector::zeros(n),
        }
    }

    #[test]
    fn identity_mlps_give_the_raw_embedding() {
        let mut p = ForwardParams::random(&mut rand_chacha::ChaCha8Rng::seed_from_u64(1), 3, 1, 6, 1.0);
        p.depth_mlp = Mlp::identity(6);
        p.dist_mlp = Mlp::ones(1, 6);
        let f = anchor_features(&[12.5], &[0.0], &p).unwrap();
        let e = sinusoidal_embed(&[12.5], 3);
        assert_eq!(f.row(0).iter().copied().collect::<Vec<_>>(), e);
    }

    #[test]
    fn zero_weights_propagate_biases() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let mut p = ForwardParams::random(&mut rng, 2, 2, 3, 1.0);
        let zero = |m: &mut Mlp| {
            for l in &mut m.layers {
                l.weight.fill(0.0);
            }
        };
        zero(&mut p.depth_mlp);
        zero(&mut p.dist_mlp);
        p.chunk_attention.iter_mut().chain(p.global_attention.iter_mut()).for_each(|a| a.value.fill(0.0));
        // two-layer MLPs with zero weights output their final bias
        let db = &p.depth_mlp.layers[1].bias;
        let sb = &p.dist_mlp.layers[1].bias;
        let mask = InstanceMask::rectangle(10, 10, 3, 2, (1200, 360), ObjectClass::Car).unwrap();
        let anchors = [((10, 10), 8.0), ((12, 10), 9.0), ((11, 11), 8.5)];
        let mesh = build_pixel_mesh(&mask, &anchors, &calib()).unwrap();
        let clusters = ClusterAssignment::build(&mesh, &[1, 3, 5], 2).unwrap();
        let out = aggregation_forward(&mesh, &clusters, &p).unwrap();
        let mu = anchor_density(&mesh, &p).unwrap();
        for q in 0..3 {
            for k in 0..2 {
                let members = clusters.chunk(q, k);
                let mu_k: Vec<f64> = members.iter().map(|&a| mu[a]).collect();
                let ones = DMatrix::from_element(members.len(), 3, 1.0);
                let base = DMatrix::from_fn(members.len(), 3, |_, j| db[j] * sb[j]);
                // every row equals the bias product, so gating scales it by the row sums of G
                let g = kde_gate(&ones, &mu_k, &p);
                for j in 0..3 {
                    let want = (0..members.len()).map(|r| g[(r, j)] * base[(r, j)]).fold(f64::NEG_INFINITY, f64::max);
                    assert!((out[(q, k * 3 + j)] - want).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn isolated_vertex_with_identity_is_unchanged() {
        let mut l = zero_conv(3);
        l.w0 = DMatrix::identity(3, 3);
        let f = DMatrix::from_row_slice(1, 3, &[1.0, -2.0, 0.5]);
        assert_eq!(graph_conv_forward(&f, &[], &l).unwrap(), f);
    }

    #[test]
    fn path_middle_vertex_averages() {
        let mut l = zero_conv(2);
        l.w0 = DMatrix::identity(2, 2);
        l.w1 = DMatrix::identity(2, 2);
        let f = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 4.0, 8.0, 16.0, 32.0]);
        let out = graph_conv_forward(&f, &[[0, 1], [1, 2]], &l).unwrap();
        assert!((out[(1, 0)] - 7.0).abs() < 1e-15);
        assert!((out[(1, 1)] - 14.0).abs() < 1e-15);
        assert!((out[(0, 0)] - 2.5).abs() < 1e-15);
    }

    #[test]
    fn residual_pairs_in_the_stack() {
        // zero layers: each pair outputs zero, so the skip carries the input
        let f = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let layers: Vec<GraphConv> = (0..GNN_LAYERS).map(|_| zero_conv(2)).collect();
        assert_eq!(graph_conv_stack(&f, &[[0, 1]], &layers).unwrap(), f);
        // identity self weights double the signal at every pair
        let mut id = zero_conv(2);
        id.w0 = DMatrix::identity(2, 2);
        let layers = vec![id; GNN_LAYERS];
        assert_eq!(graph_conv_stack(&f, &[], &layers).unwrap(), f * 8.0);
    }

    #[test]
    fn head_modes() {
        let mut p = ForwardParams::random(&mut rand_chacha::ChaCha8Rng::seed_from_u64(3), 2, 1, 2, 1.0);
        p.head = Mlp {
            layers: vec![Dense::new(DMatrix::from_row_slice(1, 2, &[1.0, -1.0]), DVector::from_element(1, 0.5)).unwrap()],
        };
        let f = DMatrix::from_row_slice(2, 2, &[3.0, 1.0, 0.0, 0.0]);
        p.head_mode = HeadMode::Absolute;
        assert_eq!(regression_head(&f, &p, None).unwrap(), vec![2.5, 0.5]);
        p.head_mode = HeadMode::Residual;
        assert_eq!(regression_head(&f, &p, Some(&[10.0, 20.0])).unwrap(), vec![12.5, 20.5]);
        assert!(regression_head(&f, &p, None).is_err());
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let a = SelfAttention {
            query: DMatrix::identity(2, 2),
            key: DMatrix::identity(2, 2),
            value: DMatrix::identity(2, 2),
        };
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let y = a.apply(&x, Activation::Softmax) - &x;
        // with V = I, each output row is a convex combination of input rows
        for r in 0..3 {
            let s: f64 = y.row(r).sum();
            assert!(s > 1.0 - 1e-12 && s < 2.0 + 1e-12);
        }
    }

    #[test]
    fn params_round_trip_through_json() {
        let p = ForwardParams::random(&mut rand_chacha::ChaCha8Rng::seed_from_u64(4), 2, 2, 3, 1.0);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("params.json");
        p.save(&path).unwrap();
        assert_eq!(ForwardParams::load(&path).unwrap(), p);
        let mut f = p.to_file_data();
        f.tensors.remove("gnn.5.b1");
        assert!(matches!(ForwardParams::from_file_data(&f), Err(DensifyError::Params(m)) if m.contains("gnn.5.b1")));
        let mut f = p.to_file_data();
        f.tensors.get_mut("head.0.weight").unwrap().data.pop();
        assert!(ForwardParams::from_file_data(&f).is_err());
    }

    #[test]
    fn chunk_count_must_match() {
        let p = ForwardParams::random(&mut rand_chacha::ChaCha8Rng::seed_from_u64(5), 2, 2, 3, 1.0);
        let mask = InstanceMask::rectangle(10, 10, 3, 2, (1200, 360), ObjectClass::Car).unwrap();
        let mesh = build_pixel_mesh(&mask, &[((10, 10), 8.0)], &calib()).unwrap();
        let clusters = ClusterAssignment::build(&mesh, &[1, 2], 3).unwrap();
        assert!(matches!(aggregation_forward(&mesh, &clusters, &p), Err(DensifyError::Shape(_))));
    }
}
