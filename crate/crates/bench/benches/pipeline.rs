use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use vpdense_bench::{box_scene, depth_set, rng};
use vpdense_core::config::{DensifyConfig, FrustumConfig, GtConfig};
use vpdense_core::densify::forward::graph_conv_forward;
use vpdense_core::densify::{mesh_loss_gradient, LossWeights};
use vpdense_core::frustum::adaptive_bins;
use vpdense_core::gtgen::generate_visible_depth;
use vpdense_core::oracle::forward::random_graph;
use vpdense_core::oracle::gradient::random_instance;
use vpdense_core::oracle::raycast::random_pair;
use vpdense_core::ray_triangle_intersect;

fn ray_triangle(c: &mut Criterion) {
    let mut r = rng(1);
    let pairs: Vec<_> = (0..1024).map(|_| random_pair(&mut r)).collect();
    c.bench_function("ray_triangle_1024", |b| {
        b.iter(|| {
            pairs
                .iter()
                .filter(|(ray, [a, bb, cc])| ray_triangle_intersect(black_box(ray), a, bb, cc).is_some())
                .count()
        })
    });
}

fn bins(c: &mut Criterion) {
    let h = FrustumConfig::default().bins;
    let mut g = c.benchmark_group("adaptive_bins");
    for n in [100, 500, 2000] {
        let d = depth_set(n);
        g.bench_with_input(BenchmarkId::from_parameter(n), &d, |b, d| b.iter(|| adaptive_bins(black_box(d), None, h)));
    }
    g.finish();
}

fn graph_conv(c: &mut Criterion) {
    let mut r = rng(2);
    let (rows, edges, layer) = random_graph(&mut r, 12, 16);
    let f = nalgebra::DMatrix::from_fn(rows.len(), rows[0].len(), |i, j| rows[i][j]);
    c.bench_function("graph_conv_12x16", |b| b.iter(|| graph_conv_forward(black_box(&f), &edges, &layer)));
}

fn loss_gradient(c: &mut Criterion) {
    let d = DensifyConfig::default();
    let w = LossWeights {
        stage: d.stage_weights,
        omega_edge: d.omega_edge,
        omega_normal: d.omega_normal,
    };
    let mut g = c.benchmark_group("mesh_loss_gradient");
    for n in [50, 200, 1000] {
        let inst = random_instance(&mut rng(3), n);
        let depths = inst.targets.clone();
        g.bench_with_input(BenchmarkId::from_parameter(n), &inst, |b, inst| {
            b.iter(|| mesh_loss_gradient(&inst.mesh, &inst.hierarchy, black_box(&depths), Some(&inst.targets), &w))
        });
    }
    g.finish();
}

fn visible_depth(c: &mut Criterion) {
    let (query, pool, calib) = box_scene();
    let cfg = GtConfig::default();
    let mut g = c.benchmark_group("generate_visible_depth");
    g.sample_size(10);
    g.bench_function("box_car", |b| b.iter(|| generate_visible_depth(black_box(&query.sample), &pool, &calib, &cfg)));
    g.finish();
}

criterion_group!(benches, ray_triangle, bins, graph_conv, loss_gradient, visible_depth);
criterion_main!(benches);
