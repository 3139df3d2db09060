//! Acceptance checks 1–8, shared by the `acceptance` test target and the
//! `selftest` command. Each check is deterministic (fixed seeds) and reports
//! what it measured, whether it passed and how long it took.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::deform::{plane_case, sphere_cap_case, DeformCase};
use super::forward::{graph_conv_oracle, graph_stack_oracle, max_abs_diff, random_graph, to_rows, Rows};
use super::gradient::{check_gradient, random_instance, FD_STEP};
use super::metrics::{confusion_iou, two_pass_rmse};
use super::raycast::{plane_hit, random_pair};
use super::scenes::{kitti_calib, random_shape, with_mask, ShapeKind, ShapeObject};
use crate::config::{DensifyConfig, GtConfig, PipelineConfig, PoolConfig};
use crate::densify::forward::{graph_conv_forward, graph_conv_stack, GraphConv};
use crate::densify::{build_stage_hierarchy, deform_optimize, LossWeights};
use crate::frustum::{adaptive_bins, density_scores, kde_density, silverman_bandwidth};
use crate::geometry::{ray_triangle_intersect, Box3D, InstanceMask, ObjectClass, PointCloud, Vec3};
use crate::gtgen::{generate_visible_depth, ObjectPool, ObjectSample};
use crate::metrics::{bce_loss, depth_rmse, mean_iou, DepthMap};

/// Outcome of one acceptance check.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub id: u32,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
    pub limit_seconds: Option<f64>,
}

impl Outcome {
    fn new(id: u32, name: &'static str, limit: Option<f64>, start: Instant, passed: bool, detail: String) -> Outcome {
        let seconds = start.elapsed().as_secs_f64();
        let within = limit.is_none_or(|l| seconds < l);
        let detail = match limit {
            Some(l) if !within => format!("{detail}; runtime {seconds:.2}s over the {l}s limit"),
            _ => detail,
        };
        Outcome {
            id,
            name,
            passed: passed && within,
            detail,
            seconds,
            limit_seconds: limit,
        }
    }

    /// `[PASS] 3 bin invariants (1.20s < 10s): detail`
    pub fn line(&self) -> String {
        let limit = self.limit_seconds.map_or(String::new(), |l| format!(" < {l}s"));
        format!(
            "[{}] {} {} ({:.2}s{}): {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.seconds,
            limit,
            self.detail
        )
    }
}

/// Tolerances of the checks.
pub mod tol {
    pub const ANALYTIC_DEPTH: f64 = 1e-6;
    pub const RAY_T: f64 = 1e-9;
    pub const SCORE_MASS: f64 = 1e-9;
    pub const GRADIENT: f64 = 1e-5;
    pub const PLANE_RMSE: f64 = 0.01;
    pub const CHORD_FACTOR: f64 = 5.0;
    pub const GRAPH_CONV: f64 = 1e-12;
    pub const IOU: f64 = 1e-12;
    pub const BCE: f64 = 1e-12;
}

/// Ray-cast bijection on boxes, spheres and blobs, plus the analytic depth
/// error at unit expansion on boxes and spheres.
pub fn ray_cast_bijection() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let calib = kitti_calib();
    let families = [(ShapeKind::Box, 17), (ShapeKind::Sphere, 17), (ShapeKind::Blob, 16)];
    let gt = GtConfig::default();
    let unit = GtConfig {
        alpha_small: 1.0,
        alpha_large: 1.0,
        max_retries: 0,
        ..GtConfig::default()
    };
    let (mut total, mut ok) = (0, 0);
    let (mut min_px, mut max_px) = (usize::MAX, 0);
    let mut failures = Vec::new();
    let mut box_err = 0.0f64;
    let mut sphere_err = 0.0f64;
    let mut unit_failures = 0;
    for (kind, count) in families {
        let objects: Vec<ShapeObject> = (0..count)
            .map(|k| random_shape(&mut rng, &calib, kind, &format!("{kind:?}{k}"), 50, 3000))
            .collect();
        let (pool, _) = ObjectPool::build(objects.iter().map(|o| o.sample.clone()), &PoolConfig::default());
        for o in &objects {
            total += 1;
            min_px = min_px.min(o.sample.mask.len());
            max_px = max_px.max(o.sample.mask.len());
            match generate_visible_depth(&o.sample, &pool, &calib, &gt) {
                Ok(v) if v.gt.depths.len() == o.sample.mask.len() => ok += 1,
                Ok(_) => failures.push(format!("{}: depth count", o.sample.id)),
                Err(e) => failures.push(format!("{}: {e}", o.sample.id)),
            }
            if kind == ShapeKind::Blob {
                continue;
            }
            let inner = with_mask(o, o.inner_pixels(2));
            match generate_visible_depth(&inner, &pool, &calib, &unit) {
                Ok(v) => {
                    let err = v
                        .gt
                        .iter()
                        .map(|((u, w), d)| (d - o.depth(&calib, u, w).expect("inside the silhouette")).abs())
                        .fold(0.0, f64::max);
                    match kind {
                        ShapeKind::Box => box_err = box_err.max(err),
                        _ => sphere_err = sphere_err.max(err),
                    }
                }
                Err(_) => unit_failures += 1,
            }
        }
    }
    let passed = ok == total
        && unit_failures == 0
        && box_err < tol::ANALYTIC_DEPTH
        && sphere_err < tol::ANALYTIC_DEPTH;
    let mut detail = format!(
        "bijection {ok}/{total} (masks {min_px}-{max_px} px); unit-expansion depth error: boxes {box_err:.2e} m, spheres {sphere_err:.2e} m (limit {:.0e}); unit-expansion misses {unit_failures}",
        tol::ANALYTIC_DEPTH
    );
    if !failures.is_empty() {
        detail += &format!("; failures: {}", failures.join(", "));
    }
    Outcome::new(1, "ray-cast bijection", Some(30.0), start, passed, detail)
}

/// Möller–Trumbore against the plane/barycentric oracle.
pub fn intersection_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let (mut hits, mut agree, mut boundary, mut worst) = (0, 0, 0, 0.0f64);
    let n = 10_000;
    for _ in 0..n {
        let (ray, [a, b, c]) = random_pair(&mut rng);
        let fast = ray_triangle_intersect(&ray, &a, &b, &c);
        let oracle = plane_hit(&ray, &a, &b, &c);
        let near_edge = oracle.is_none_or(|o| o.min_weight.abs() < 1e-9 || o.t.abs() < 1e-9);
        if near_edge {
            boundary += 1;
            agree += 1;
            continue;
        }
        let o = oracle.expect("checked");
        match (fast, o.is_hit()) {
            (Some(t), true) => {
                hits += 1;
                let e = (t - o.t).abs() / o.t.abs().max(1.0);
                worst = worst.max(e);
                if e <= tol::RAY_T {
                    agree += 1;
                }
            }
            (None, false) => agree += 1,
            _ => {}
        }
    }
    let passed = agree == n;
    let detail = format!(
        "{agree}/{n} agree ({hits} hits, {boundary} within 1e-9 of an edge or parallel), worst relative t error {worst:.2e} (limit {:.0e})",
        tol::RAY_T
    );
    Outcome::new(2, "intersection oracle", Some(5.0), start, passed, detail)
}

fn random_depth_set(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let clusters = rng.random_range(1..5);
    let centres: Vec<(f64, f64)> = (0..clusters).map(|_| (rng.random_range(3.0..70.0), rng.random_range(0.05..5.0))).collect();
    let mut d: Vec<f64> = (0..n)
        .map(|_| {
            let (c, s) = centres[rng.random_range(0..clusters)];
            (c + s * rng.random_range(-1.0..1.0f64)).max(0.5)
        })
        .collect();
    d.sort_by(f64::total_cmp);
    d
}

/// Widths of the bin holding the cluster before and after halving its spread.
fn narrowing_case(rng: &mut ChaCha8Rng) -> (f64, f64) {
    let m = rng.random_range(30..=80);
    let centre = rng.random_range(8.0..20.0);
    let spread = rng.random_range(0.4..2.0);
    let far: Vec<f64> = (0..rng.random_range(20..=60)).map(|_| rng.random_range(centre + 10.0..centre + 40.0)).collect();
    let bins = rng.random_range(4..=8);
    let width = |s: f64| {
        let mut d: Vec<f64> = (0..m).map(|i| centre - 0.5 * s + s * i as f64 / (m - 1) as f64).collect();
        d.extend(&far);
        d.sort_by(f64::total_cmp);
        let b = adaptive_bins(&d, None, bins).expect("valid input");
        let k = d.iter().position(|x| *x >= centre).expect("cluster present");
        b.width(b.assignment[k])
    };
    (width(spread), width(0.5 * spread))
}

/// Score mass, bin count and ordering on random sets, and the narrowing
/// property on constructed bimodal sets.
pub fn bin_invariants() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let (mut mass_bad, mut count_bad, mut order_bad, mut worst_mass) = (0, 0, 0, 0.0f64);
    for _ in 0..1000 {
        let n = rng.random_range(20..=500);
        let bins = rng.random_range(4..=16);
        let d = random_depth_set(&mut rng, n);
        let scores = density_scores(&kde_density(&d, silverman_bandwidth(&d)).expect("positive bandwidth"), bins)
            .expect("valid bins");
        let e = (scores.iter().sum::<f64>() - bins as f64).abs();
        worst_mass = worst_mass.max(e);
        mass_bad += usize::from(e >= tol::SCORE_MASS);
        let b = adaptive_bins(&d, None, bins).expect("valid input");
        count_bad += usize::from(b.len() != bins);
        order_bad += usize::from(!b.boundaries.windows(2).all(|w| w[0] < w[1]));
    }
    let mut widened = Vec::new();
    for k in 0..100 {
        let (before, after) = narrowing_case(&mut rng);
        if after > before + 1e-12 {
            widened.push(format!("case {k}: {before:.3} -> {after:.3} m"));
        }
    }
    let passed = mass_bad == 0 && count_bad == 0 && order_bad == 0 && widened.is_empty();
    let mut detail = format!(
        "1000 sets: score-mass violations {mass_bad} (worst {worst_mass:.1e}), wrong bin count {count_bad}, non-increasing boundaries {order_bad}; narrowing violated in {}/100 bimodal cases",
        widened.len()
    );
    if !widened.is_empty() {
        detail += &format!(" ({})", widened.join(", "));
    }
    Outcome::new(3, "bin invariants", Some(10.0), start, passed, detail)
}

/// Analytic mesh-loss gradient against finite differences.
pub fn gradient_check() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let d = DensifyConfig::default();
    let w = LossWeights {
        stage: d.stage_weights,
        omega_edge: d.omega_edge,
        omega_normal: d.omega_normal,
    };
    let (mut worst, mut worst_plain, mut comps) = (0.0f64, 0.0f64, 0);
    for _ in 0..100 {
        let n = rng.random_range(10..=200);
        let inst = random_instance(&mut rng, n);
        let c = check_gradient(&inst.mesh, &inst.hierarchy, Some(&inst.targets), &w, FD_STEP).expect("valid instance");
        worst = worst.max(c.extrapolated);
        worst_plain = worst_plain.max(c.central);
        comps += c.components;
    }
    let passed = worst < tol::GRADIENT;
    let detail = format!(
        "100 meshes, {comps} components: max relative error {worst:.2e} against Richardson-extrapolated central differences (h = {FD_STEP:.0e}, h/2; limit {:.0e}); plain central differences at h: {worst_plain:.2e}",
        tol::GRADIENT
    );
    Outcome::new(4, "gradient check", Some(60.0), start, passed, detail)
}

fn deform_run(c: &DeformCase) -> (Vec<f64>, bool) {
    let h = build_stage_hierarchy(&c.mesh, (0.5, 0.2)).expect("valid ratios");
    let out = deform_optimize(&c.mesh, &h, None, &DensifyConfig::default()).expect("anchored mesh");
    let monotone = out.stages.iter().all(|s| s.losses.windows(2).all(|w| w[1] <= w[0]));
    (out.depths, monotone)
}

/// Sphere-cap and plane completion from 30 % anchors.
pub fn deformation_quality() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let (mut monotone, mut runs) = (true, 0);
    let mut ratios = Vec::new();
    for _ in 0..5 {
        let r = rng.random_range(8.0..14.0);
        let c = sphere_cap_case(&mut rng, r, 0.3);
        let (d, m) = deform_run(&c);
        monotone &= m;
        runs += 1;
        ratios.push(c.held_out_rmse(&d) / c.chord_bound());
    }
    let mut plane = 0.0f64;
    for _ in 0..5 {
        let r = rng.random_range(8.0..14.0);
        let c = plane_case(&mut rng, r, 0.3);
        let (d, m) = deform_run(&c);
        monotone &= m;
        runs += 1;
        plane = plane.max(c.held_out_rmse(&d));
    }
    let worst_ratio = ratios.iter().copied().fold(0.0, f64::max);
    let passed = monotone && worst_ratio < tol::CHORD_FACTOR && plane < tol::PLANE_RMSE;
    let detail = format!(
        "sphere caps: held-out RMSE up to {worst_ratio:.2}x the chord bound (limit {}x); planes: held-out RMSE up to {:.2} mm (limit {} mm); loss monotone in {} of {runs} runs",
        tol::CHORD_FACTOR,
        plane * 1e3,
        tol::PLANE_RMSE * 1e3,
        if monotone { runs } else { 0 }
    );
    Outcome::new(5, "deformation quality", Some(60.0), start, passed, detail)
}

fn from_rows(r: &Rows) -> DMatrix<f64> {
    DMatrix::from_fn(r.len(), r[0].len(), |i, j| r[i][j])
}

/// Graph convolution and the six-layer residual stack against loop oracles.
pub fn graph_conv_check() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let (mut worst, mut worst_stack) = (0.0f64, 0.0f64);
    for _ in 0..200 {
        let n = rng.random_range(1..=12);
        let w = rng.random_range(1..=6);
        let (f, edges, layer) = random_graph(&mut rng, n, w);
        let got = graph_conv_forward(&from_rows(&f), &edges, &layer).expect("matching widths");
        worst = worst.max(max_abs_diff(&to_rows(&got), &graph_conv_oracle(&f, &edges, &layer)));
        let layers: Vec<GraphConv> = (0..6).map(|_| random_graph(&mut rng, 1, w).2).collect();
        let got = graph_conv_stack(&from_rows(&f), &edges, &layers).expect("matching widths");
        let want = graph_stack_oracle(&f, &edges, &layers);
        let scale = want.iter().flatten().fold(1.0f64, |m, v| m.max(v.abs()));
        worst_stack = worst_stack.max(max_abs_diff(&to_rows(&got), &want) / scale);
    }
    let passed = worst < tol::GRAPH_CONV && worst_stack < tol::GRAPH_CONV;
    let detail = format!(
        "200 graphs: single layer max abs diff {worst:.1e}, 6-layer stack max diff {worst_stack:.1e} relative to output scale (limit {:.0e})",
        tol::GRAPH_CONV
    );
    Outcome::new(6, "graph convolution oracle", None, start, passed, detail)
}

fn fuzzed_map(rng: &mut ChaCha8Rng, w: u32, h: u32) -> DepthMap {
    let mut m = DepthMap::empty(w, h);
    for d in &mut m.data {
        if rng.random_bool(0.7) {
            *d = rng.random_range(0.5..80.0);
        }
    }
    m
}

/// mIOU, BCE and RMSE properties.
pub fn metrics_check() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let mut worst_iou = 0.0f64;
    for _ in 0..1000 {
        let classes = rng.random_range(2..=6);
        let n = rng.random_range(1..=300);
        let gt: Vec<usize> = (0..n).map(|_| rng.random_range(0..classes)).collect();
        let pred: Vec<usize> = gt
            .iter()
            .map(|&g| if rng.random_bool(0.6) { g } else { rng.random_range(0..classes) })
            .collect();
        let got = mean_iou(&pred, &gt, classes).expect("valid labels").mean;
        worst_iou = worst_iou.max((got - confusion_iou(&pred, &gt, classes)).abs());
    }
    let ln2 = std::f64::consts::LN_2;
    let bce_err = [1.0, 0.0]
        .iter()
        .map(|&y| (bce_loss(&[0.0], &[y]).expect("valid") - ln2).abs())
        .fold(0.0, f64::max);
    let (mut asym, mut zero_bad, mut oracle_diff) = (0, 0, 0.0f64);
    for _ in 0..200 {
        let (w, h) = (rng.random_range(1..40), rng.random_range(1..30));
        let a = fuzzed_map(&mut rng, w, h);
        let mut b = fuzzed_map(&mut rng, w, h);
        if rng.random_bool(0.3) {
            b = a.clone();
        }
        let (Ok(ab), Ok(ba)) = (depth_rmse(&a, &b, None), depth_rmse(&b, &a, None)) else { continue };
        asym += usize::from(ab.value != ba.value);
        let equal_on_overlap = a.data.iter().zip(&b.data).all(|(x, y)| *x == 0.0 || *y == 0.0 || x == y);
        zero_bad += usize::from((ab.value == 0.0) != equal_on_overlap);
        oracle_diff = oracle_diff.max((ab.value - two_pass_rmse(&a.data, &b.data).0).abs());
        zero_bad += usize::from(depth_rmse(&a, &a, None).expect("self overlap").value != 0.0);
    }
    let passed = worst_iou < tol::IOU && bce_err < tol::BCE && asym == 0 && zero_bad == 0 && oracle_diff < 1e-12;
    let detail = format!(
        "mIOU vs confusion matrix max diff {worst_iou:.1e} over 1000 labelings; BCE(0) - ln 2 = {bce_err:.1e}; RMSE asymmetric in {asym}, zero-iff-equal broken in {zero_bad} of 200 map pairs, max diff vs two-pass oracle {oracle_diff:.1e}"
    );
    Outcome::new(7, "metrics", None, start, passed, detail)
}

fn sample_with(points: usize, class: ObjectClass) -> ObjectSample {
    let bx = Box3D::new(Vec3::new(0.0, 0.0, 10.0), Vec3::new(4.0, 2.0, 2.0), 0.0).expect("valid");
    let cloud = PointCloud::new((0..points).map(|i| Vec3::new(0.01 * i as f64, 0.0, 0.0)).collect()).expect("finite");
    let mask = InstanceMask::rectangle(0, 0, 2, 2, (10, 10), class).expect("valid");
    ObjectSample::new(format!("{class}{points}"), cloud, bx, mask).expect("inside")
}

/// Configuration defaults and pool admission thresholds.
pub fn default_constants() -> Outcome {
    let start = Instant::now();
    let text = PipelineConfig::default().to_toml_string();
    let v: toml::Table = text.parse().expect("serialized config parses");
    let get = |sec: &str, key: &str| v.get(sec).and_then(|s| s.get(key)).cloned();
    let float = |sec: &str, key: &str| get(sec, key).and_then(|x| x.as_float());
    let mut wrong = Vec::new();
    for (sec, key, want) in [
        ("densify", "omega_edge", 2.0),
        ("densify", "omega_normal", 2.0),
        ("densify", "lambda_mesh", 1.0),
        ("gt", "alpha_small", 1.2),
        ("gt", "alpha_large", 1.05),
    ] {
        if float(sec, key) != Some(want) {
            wrong.push(format!("{sec}.{key} = {:?}", get(sec, key)));
        }
    }
    if get("gt", "alpha_threshold_px").and_then(|x| x.as_integer()) != Some(2000) {
        wrong.push(format!("gt.alpha_threshold_px = {:?}", get("gt", "alpha_threshold_px")));
    }
    let pool = PoolConfig::default();
    for (class, limit) in [(ObjectClass::Car, 20), (ObjectClass::Pedestrian, 10)] {
        if ObjectPool::admits(&pool, &sample_with(limit, class)) || !ObjectPool::admits(&pool, &sample_with(limit + 1, class)) {
            wrong.push(format!("{class} admission at {limit}/{}", limit + 1));
        }
    }
    let passed = wrong.is_empty();
    let detail = if passed {
        "omega_edge 2.0, omega_normal 2.0, lambda_mesh 1.0, alpha 1.2 below 2000 px else 1.05; car admitted above 20 points, pedestrian above 10".to_string()
    } else {
        format!("mismatches: {}", wrong.join(", "))
    };
    Outcome::new(8, "default constants", None, start, passed, detail)
}

/// Checks 1–8 in order.
pub fn run_all() -> Vec<Outcome> {
    vec![
        ray_cast_bijection(),
        intersection_oracle(),
        bin_invariants(),
        gradient_check(),
        deformation_quality(),
        graph_conv_check(),
        metrics_check(),
        default_constants(),
    ]
}
