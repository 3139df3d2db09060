//! Element-by-element loops for the reference forwards. Nothing here calls
//! matrix products or the crate's embedding and density code.

use crate::densify::forward::{Activation, ForwardParams, GraphConv, HeadMode, Mlp, SelfAttention};
use crate::densify::{ClusterAssignment, PixelMesh};

pub type Rows = Vec<Vec<f64>>;

fn linear(x: &[f64], w: &nalgebra::DMatrix<f64>, b: Option<&nalgebra::DVector<f64>>) -> Vec<f64> {
    let mut y = vec![0.0; w.nrows()];
    for (r, yr) in y.iter_mut().enumerate() {
        let mut s = 0.0;
        for (c, xc) in x.iter().enumerate() {
            s += w[(r, c)] * xc;
        }
        *yr = s + b.map_or(0.0, |b| b[r]);
    }
    y
}

fn mlp(x: &[f64], m: &Mlp) -> Vec<f64> {
    let mut y = x.to_vec();
    for (k, l) in m.layers.iter().enumerate() {
        y = linear(&y, &l.weight, Some(&l.bias));
        if k + 1 < m.layers.len() {
            for v in &mut y {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
        }
    }
    y
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn embed(x: f64, levels: usize) -> Vec<f64> {
    let mut out = Vec::new();
    for l in 0..levels {
        let a = 2f64.powi(l as i32) * std::f64::consts::PI * x;
        out.push(a.sin());
        out.push(a.cos());
    }
    out
}

fn attention(x: &Rows, a: &SelfAttention, act: Activation) -> Rows {
    let n = x.len();
    let d = a.query.nrows();
    let q: Rows = x.iter().map(|r| linear(r, &a.query, None)).collect();
    let k: Rows = x.iter().map(|r| linear(r, &a.key, None)).collect();
    let v: Rows = x.iter().map(|r| linear(r, &a.value, None)).collect();
    let mut out = x.clone();
    for i in 0..n {
        let mut s = vec![0.0; n];
        for j in 0..n {
            let mut dot = 0.0;
            for c in 0..d {
                dot += q[i][c] * k[j][c];
            }
            s[j] = dot / (d as f64).sqrt();
        }
        match act {
            Activation::Sigmoid => s.iter_mut().for_each(|v| *v = logistic(*v)),
            Activation::Softmax => {
                let m = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let z: f64 = s.iter().map(|v| (v - m).exp()).sum();
                s.iter_mut().for_each(|v| *v = (*v - m).exp() / z);
            }
        }
        for j in 0..n {
            for c in 0..d {
                out[i][c] += s[j] * v[j][c];
            }
        }
    }
    out
}

fn density(depths: &[f64], h: f64) -> Vec<f64> {
    let n = depths.len() as f64;
    depths
        .iter()
        .map(|x| {
            let mut s = 0.0;
            for y in depths {
                let z = (x - y) / h;
                s += (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
            }
            s / (n * h)
        })
        .collect()
}

fn silverman(depths: &[f64]) -> f64 {
    if depths.len() < 2 {
        return 0.01;
    }
    let n = depths.len() as f64;
    let mean = depths.iter().sum::<f64>() / n;
    let var = depths.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n;
    f64::max(1.06 * var.sqrt() / n.powf(0.2), 0.01)
}

/// Aggregation forward written as nested loops; `m × ηc` rows.
pub fn aggregation_oracle(mesh: &PixelMesh, clusters: &ClusterAssignment, p: &ForwardParams) -> Rows {
    let anchor_depths: Vec<f64> = mesh.anchors.iter().map(|&a| mesh.depths[a]).collect();
    let h = p.bandwidth.unwrap_or_else(|| silverman(&anchor_depths));
    let mu = density(&anchor_depths, h);
    let c = p.depth_mlp.outputs();
    let eta = clusters.bounds.len() - 1;
    let mut out: Rows = Vec::new();
    for q in 0..clusters.queries.len() {
        let mut row = vec![0.0; eta * c];
        for k in 0..eta {
            let (lo, hi) = (clusters.bounds[k], clusters.bounds[k + 1]);
            if lo == hi {
                continue;
            }
            let mut f: Rows = (lo..hi)
                .map(|r| {
                    let a = clusters.order[q][r];
                    let e = mlp(&embed(anchor_depths[a], p.levels), &p.depth_mlp);
                    let w = mlp(&[clusters.distances[q][r]], &p.dist_mlp);
                    (0..c).map(|j| e[j] * w[j]).collect()
                })
                .collect();
            for layer in &p.chunk_attention {
                f = attention(&f, layer, p.activation);
            }
            let ea: Rows = (lo..hi).map(|r| mlp(&embed(mu[clusters.order[q][r]], p.levels), &p.kde_a)).collect();
            let eb: Rows = (lo..hi).map(|r| mlp(&embed(mu[clusters.order[q][r]], p.levels), &p.kde_b)).collect();
            let t = hi - lo;
            for j in 0..c {
                let mut best = f64::NEG_INFINITY;
                for r in 0..t {
                    let mut s = 0.0;
                    for r2 in 0..t {
                        let mut g = 0.0;
                        for x in 0..ea[r].len() {
                            g += ea[r][x] * eb[r2][x];
                        }
                        s += logistic(g) * f[r2][j];
                    }
                    best = best.max(s);
                }
                row[k * c + j] = best;
            }
        }
        out.push(row);
    }
    for layer in &p.global_attention {
        out = attention(&out, layer, p.activation);
    }
    out
}

/// Graph convolution with neighbours found by scanning the edge list.
pub fn graph_conv_oracle(features: &Rows, edges: &[[usize; 2]], layer: &GraphConv) -> Rows {
    let n = features.len();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut nb: Vec<usize> = Vec::new();
        for &[a, b] in edges {
            let j = if a == i { b } else if b == i { a } else { continue };
            if j != i && !nb.contains(&j) {
                nb.push(j);
            }
        }
        let own = linear(&features[i], &layer.w0, Some(&layer.b0));
        let mut acc = own;
        for &j in &nb {
            let m = linear(&features[j], &layer.w1, Some(&layer.b1));
            for (a, v) in acc.iter_mut().zip(m) {
                *a += v;
            }
        }
        out.push(acc.into_iter().map(|v| v / (1 + nb.len()) as f64).collect());
    }
    out
}

/// Six layers composed by hand: `x2 = g1(g0(x0)) + x0`, and so on.
pub fn graph_stack_oracle(features: &Rows, edges: &[[usize; 2]], layers: &[GraphConv]) -> Rows {
    let add = |a: &Rows, b: &Rows| -> Rows {
        a.iter().zip(b).map(|(x, y)| x.iter().zip(y).map(|(u, v)| u + v).collect()).collect()
    };
    let mut x = features.clone();
    for pair in layers.chunks(2) {
        let mut y = x.clone();
        for l in pair {
            y = graph_conv_oracle(&y, edges, l);
        }
        x = if pair.len() == 2 { add(&y, &x) } else { y };
    }
    x
}

pub fn head_oracle(features: &Rows, p: &ForwardParams, base: Option<&[f64]>) -> Vec<f64> {
    features
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let y = mlp(f, &p.head)[0];
            match p.head_mode {
                HeadMode::Absolute => y,
                HeadMode::Residual => y + base.expect("residual head needs a base")[i],
            }
        })
        .collect()
}

pub fn to_rows(m: &nalgebra::DMatrix<f64>) -> Rows {
    (0..m.nrows()).map(|r| (0..m.ncols()).map(|c| m[(r, c)]).collect()).collect()
}

/// Largest absolute difference between two row sets of the same shape.
pub fn max_abs_diff(a: &Rows, b: &Rows) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| {
            assert_eq!(x.len(), y.len());
            x.iter().zip(y).map(|(u, v)| (u - v).abs())
        })
        .fold(0.0, f64::max)
}

/// Random graph on `n ≤ 12` vertices with random features and a random
/// layer of width `w`.
pub fn random_graph<R: rand::Rng>(rng: &mut R, n: usize, w: usize) -> (Rows, Vec<[usize; 2]>, GraphConv) {
    let feats = (0..n).map(|_| (0..w).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
    let mut edges = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if rng.random_bool(0.3) {
                edges.push([a, b]);
            }
        }
    }
    let mut m = |r: usize, c: usize| nalgebra::DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0));
    let layer = GraphConv {
        w0: m(w, w),
        w1: m(w, w),
        b0: m(w, 1).column(0).into_owned(),
        b1: m(w, 1).column(0).into_owned(),
    };
    (feats, edges, layer)
}
