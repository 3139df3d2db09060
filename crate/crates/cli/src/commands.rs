use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use vpdense_core::config::PipelineConfig;
use vpdense_core::geometry::{InstanceMask, ObjectClass};
use vpdense_core::gtgen::{AdmissionReport, VisibleDepthGt};
use vpdense_core::io::{list_split, load_frame, read_depth, write_depth, FrameBundle, IoError};
use vpdense_core::metrics::{depth_rmse, foreground_rmse, vp_point_ratio_counts, DepthMap, MetricReport, MetricsError};
use vpdense_core::oracle::acceptance;
use vpdense_core::pipeline::{build_pool, densify_object, object_gt, segment_frame, split_objects, GtRecord};

use crate::{load_scene, Cli, CliError, Command};

pub(crate) fn dispatch(cli: &Cli, cfg: &PipelineConfig, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, CliError> {
    let root = cli.data.as_path();
    match &cli.command {
        Command::GenGt { split, out: dir } => gen_gt(root, split, dir, cfg, out),
        Command::Segment { frame, out: file } => segment(root, frame, file.as_deref(), cfg, out),
        Command::Densify { frame, out: dir } => densify(root, frame, dir, cfg, out),
        Command::Eval {
            pred,
            gt,
            foreground,
            out: file,
        } => eval(pred, gt, *foreground, file.as_deref(), cfg, out, err),
        Command::Stats { split, manifest } => stats(root, split, manifest.as_deref(), cfg, out),
        Command::Selftest { only } => selftest(only, out),
        Command::Synth { split, frames, scene } => {
            let scene = load_scene(scene.as_deref())?;
            let ids = vpdense_core::io::synth::generate_split(root, split, *frames, cli.seed, &scene)?;
            emit(out, &SynthLine { split, frames: &ids })?;
            Ok(0)
        }
    }
}

fn emit<T: Serialize>(out: &mut dyn Write, value: &T) -> Result<(), CliError> {
    let line = serde_json::to_string(value).expect("serializable");
    writeln!(out, "{line}").map_err(|e| CliError::Data(format!("cannot write output: {e}")))
}

fn jsonl<T: Serialize>(rows: &[T]) -> String {
    rows.iter()
        .map(|r| serde_json::to_string(r).expect("serializable") + "\n")
        .collect()
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| IoError::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| IoError::io(path, e))?;
    Ok(())
}

fn object_file(dir: &Path, frame: &str, instance: u16) -> PathBuf {
    dir.join(format!("{frame}_{instance}.png"))
}

fn write_object_depth(path: &Path, gt: &VisibleDepthGt) -> Result<(), CliError> {
    let (w, h) = gt.mask.image_size;
    let mut map = DepthMap::empty(w, h);
    map.paint(gt)?;
    write_depth(path, &map)?;
    Ok(())
}

fn load_split(root: &Path, split: &str) -> Result<Vec<FrameBundle>, CliError> {
    let frames = list_split(root, split)?;
    Ok(frames.par_iter().map(|f| load_frame(root, f)).collect::<Result<Vec<_>, _>>()?)
}

type ObjectGt = (GtRecord, Option<VisibleDepthGt>);

/// Ground truth of every object of a split, in split order, with the frame
/// count and pool admission counts.
pub(crate) fn split_gt(root: &Path, split: &str, cfg: &PipelineConfig) -> Result<(usize, AdmissionReport, Vec<ObjectGt>), CliError> {
    let bundles = load_split(root, split)?;
    let by_frame: HashMap<&str, &FrameBundle> = bundles.iter().map(|b| (b.frame.as_str(), b)).collect();
    let objects = split_objects(&bundles)?;
    let (pool, report) = build_pool(&objects, &cfg.pool);
    let results = objects
        .par_iter()
        .map(|o| object_gt(o, &pool, by_frame[o.frame.as_str()], cfg))
        .collect();
    Ok((bundles.len(), report, results))
}

#[derive(Serialize)]
struct SynthLine<'a> {
    split: &'a str,
    frames: &'a [String],
}

#[derive(Serialize)]
struct GenGtSummary {
    frames: usize,
    objects: usize,
    written: usize,
    failed: usize,
    pool: AdmissionReport,
}

fn gen_gt(root: &Path, split: &str, dir: &Path, cfg: &PipelineConfig, out: &mut dyn Write) -> Result<i32, CliError> {
    let (frames, pool, results) = split_gt(root, split, cfg)?;
    results
        .par_iter()
        .filter_map(|(rec, gt)| gt.as_ref().map(|g| (rec, g)))
        .try_for_each(|(rec, g)| write_object_depth(&object_file(dir, &rec.frame, rec.instance), g))?;
    let records: Vec<&GtRecord> = results.iter().map(|(r, _)| r).collect();
    write_text(&dir.join("manifest.jsonl"), &jsonl(&records))?;
    let written = results.iter().filter(|(_, g)| g.is_some()).count();
    let failed = results.len() - written;
    emit(
        out,
        &GenGtSummary {
            frames,
            objects: results.len(),
            written,
            failed,
            pool,
        },
    )?;
    Ok(if failed == 0 { 0 } else { 1 })
}

#[derive(Serialize)]
struct SegmentLine<'a> {
    frame: &'a str,
    instance: u16,
    class: ObjectClass,
    points: usize,
    foreground: usize,
    /// Frustum points inside the labelled box.
    in_label_box: usize,
    mean_iou: Option<f64>,
    foreground_iou: Option<f64>,
    result: &'a vpdense_core::frustum::SegmentationResult,
}

fn segment(root: &Path, frame: &str, file: Option<&Path>, cfg: &PipelineConfig, out: &mut dyn Write) -> Result<i32, CliError> {
    let bundle = load_frame(root, frame)?;
    let segs = segment_frame(&bundle, &cfg.frustum)?;
    let lines: Vec<SegmentLine> = segs
        .iter()
        .map(|s| SegmentLine {
            frame,
            instance: s.instance,
            class: s.class,
            points: s.frustum.len(),
            foreground: s.result.foreground_indices().len(),
            in_label_box: s.reference.iter().filter(|r| **r).count(),
            mean_iou: s.iou.as_ref().map(|r| r.mean),
            foreground_iou: s.iou.as_ref().and_then(|r| r.per_class[1]),
            result: &s.result,
        })
        .collect();
    match file {
        Some(p) => write_text(p, &jsonl(&lines))?,
        None => {
            for l in &lines {
                emit(out, l)?;
            }
        }
    }
    Ok(0)
}

#[derive(Serialize, Deserialize)]
struct DensifyRecord {
    frame: String,
    instance: u16,
    class: ObjectClass,
    mask_pixels: usize,
    anchors: usize,
    iterations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    final_loss: Option<f64>,
    /// No frustum point was kept as foreground.
    skipped: bool,
}

fn densify(root: &Path, frame: &str, dir: &Path, cfg: &PipelineConfig, out: &mut dyn Write) -> Result<i32, CliError> {
    let bundle = load_frame(root, frame)?;
    let segs = segment_frame(&bundle, &cfg.frustum)?;
    let results = segs
        .par_iter()
        .map(|s| densify_object(s, &bundle, cfg))
        .collect::<Result<Vec<_>, _>>()?;
    let mut records = Vec::new();
    for (s, d) in segs.iter().zip(&results) {
        if let Some(d) = d {
            write_object_depth(&object_file(dir, frame, s.instance), &d.depth)?;
        }
        records.push(DensifyRecord {
            frame: frame.to_string(),
            instance: s.instance,
            class: s.class,
            mask_pixels: s.frustum.mask.len(),
            anchors: d.as_ref().map_or(0, |d| d.anchors),
            iterations: d.as_ref().map_or(0, |d| d.iterations),
            final_loss: d.as_ref().map(|d| d.final_loss),
            skipped: d.is_none(),
        });
    }
    write_text(&dir.join(format!("{frame}.jsonl")), &jsonl(&records))?;
    for r in &records {
        emit(out, r)?;
    }
    Ok(0)
}

#[derive(Serialize)]
struct EvalLine<'a> {
    file: Option<&'a str>,
    #[serde(flatten)]
    report: &'a MetricReport,
}

#[derive(Serialize)]
struct EvalSummary {
    files: usize,
    evaluated: usize,
    missing_pred: usize,
    no_overlap: usize,
}

fn valid_pixels(map: &DepthMap) -> Vec<(u32, u32)> {
    (0..map.height)
        .flat_map(|v| (0..map.width).map(move |u| (u, v)))
        .filter(|&(u, v)| map.get(u, v).is_some())
        .collect()
}

fn png_names(dir: &Path) -> Result<Vec<String>, CliError> {
    let entries = std::fs::read_dir(dir).map_err(|e| IoError::io(dir, e))?;
    let mut names = Vec::new();
    for e in entries {
        let e = e.map_err(|e| IoError::io(dir, e))?;
        let name = e.file_name().to_string_lossy().into_owned();
        if name.ends_with(".png") {
            names.push(name);
        }
    }
    names.sort();
    Ok(names)
}

fn eval(
    pred_dir: &Path,
    gt_dir: &Path,
    foreground: bool,
    file: Option<&Path>,
    cfg: &PipelineConfig,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<i32, CliError> {
    let names = png_names(gt_dir)?;
    let per_file = names
        .par_iter()
        .map(|name| -> Result<Option<Result<MetricReport, MetricsError>>, CliError> {
            let p = pred_dir.join(name);
            if !p.exists() {
                return Ok(None);
            }
            let (pred, gt) = (read_depth(&p)?, read_depth(&gt_dir.join(name))?);
            let r = if foreground {
                // each ground-truth file holds one object; the class does not enter the RMSE
                let mask = match InstanceMask::new(valid_pixels(&gt), (gt.width, gt.height), ObjectClass::Car) {
                    Ok(m) => m,
                    Err(_) => return Ok(Some(Err(MetricsError::NoOverlap))),
                };
                foreground_rmse(&pred, &gt, &[mask], false)
            } else {
                depth_rmse(&pred, &gt, None)
            };
            Ok(Some(r))
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut lines = Vec::new();
    let mut reports = Vec::new();
    let (mut missing, mut no_overlap) = (0, 0);
    for (name, r) in names.iter().zip(per_file) {
        match r {
            None => missing += 1,
            Some(Err(MetricsError::NoOverlap)) => no_overlap += 1,
            Some(Err(e)) => return Err(CliError::Data(format!("{name}: {e}"))),
            Some(Ok(r)) => reports.push((name.as_str(), r)),
        }
    }
    if reports.is_empty() {
        return Err(CliError::Data(format!(
            "no overlapping depth in {} ground-truth files ({missing} without a prediction)",
            names.len()
        )));
    }
    if missing > 0 {
        let _ = writeln!(err, "warning: {missing} ground-truth files have no prediction");
    }
    let total = if foreground && cfg.eval.per_object {
        let mean = reports.iter().map(|(_, r)| r.value).sum::<f64>() / reports.len() as f64;
        MetricReport::new("rmse_foreground_per_object", mean, reports.len())
    } else {
        let n: usize = reports.iter().map(|(_, r)| r.support).sum();
        let se: f64 = reports.iter().map(|(_, r)| r.value * r.value * r.support as f64).sum();
        let name = if foreground { "rmse_foreground" } else { "rmse" };
        MetricReport::new(name, (se / n as f64).sqrt(), n)
    };
    for (name, r) in &reports {
        lines.push(serde_json::to_string(&EvalLine { file: Some(name), report: r }).expect("serializable"));
    }
    lines.push(serde_json::to_string(&EvalLine { file: None, report: &total }).expect("serializable"));
    lines.push(
        serde_json::to_string(&EvalSummary {
            files: names.len(),
            evaluated: reports.len(),
            missing_pred: missing,
            no_overlap,
        })
        .expect("serializable"),
    );
    let text: String = lines.iter().map(|l| format!("{l}\n")).collect();
    if let Some(p) = file {
        write_text(p, &text)?;
    }
    out.write_all(text.as_bytes())
        .map_err(|e| CliError::Data(format!("cannot write output: {e}")))?;
    Ok(0)
}

/// Visible-part pixels against full-shape points over the objects whose
/// ground truth succeeded.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VpRatioReport {
    pub objects: usize,
    pub with_gt: usize,
    pub vp_pixels: usize,
    pub fs_points: usize,
    pub ratio: Option<f64>,
}

fn vp_ratio<'a>(records: impl Iterator<Item = &'a GtRecord>) -> VpRatioReport {
    let (mut objects, mut vp, mut fs) = (0, Vec::new(), Vec::new());
    for r in records {
        objects += 1;
        if let (None, Some(f)) = (&r.error, r.full_shape_points) {
            vp.push(r.mask_pixels);
            fs.push(f);
        }
    }
    VpRatioReport {
        objects,
        with_gt: vp.len(),
        vp_pixels: vp.iter().sum(),
        fs_points: fs.iter().sum(),
        ratio: vp_point_ratio_counts(&vp, &fs).ok(),
    }
}

/// Generates ground truth for a split and reports the visible-part ratio.
pub fn vp_ratio_report(root: &Path, split: &str, cfg: &PipelineConfig) -> Result<VpRatioReport, CliError> {
    let (_, _, results) = split_gt(root, split, cfg)?;
    Ok(vp_ratio(results.iter().map(|(r, _)| r)))
}

#[derive(Serialize)]
struct PoolLine {
    pool: AdmissionReport,
    objects: usize,
    cars: usize,
    pedestrians: usize,
}

fn stats(root: &Path, split: &str, manifest: Option<&Path>, cfg: &PipelineConfig, out: &mut dyn Write) -> Result<i32, CliError> {
    let bundles = load_split(root, split)?;
    let objects = split_objects(&bundles)?;
    let (_, pool) = build_pool(&objects, &cfg.pool);
    let count = |c: ObjectClass| objects.iter().filter(|o| o.sample.class() == c).count();
    emit(
        out,
        &PoolLine {
            pool,
            objects: objects.len(),
            cars: count(ObjectClass::Car),
            pedestrians: count(ObjectClass::Pedestrian),
        },
    )?;
    let report = match manifest {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| IoError::io(p, e))?;
            let records = text
                .lines()
                .filter(|l| !l.trim().is_empty())
                .map(serde_json::from_str::<GtRecord>)
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?;
            vp_ratio(records.iter())
        }
        None => vp_ratio_report(root, split, cfg)?,
    };
    emit(out, &report)?;
    if let Some(r) = report.ratio {
        emit(out, &MetricReport::new("vp_point_ratio", r, report.with_gt))?;
    }
    Ok(0)
}

fn selftest(only: &[u32], out: &mut dyn Write) -> Result<i32, CliError> {
    let checks: [fn() -> acceptance::Outcome; 8] = [
        acceptance::ray_cast_bijection,
        acceptance::intersection_oracle,
        acceptance::bin_invariants,
        acceptance::gradient_check,
        acceptance::deformation_quality,
        acceptance::graph_conv_check,
        acceptance::metrics_check,
        acceptance::default_constants,
    ];
    if let Some(bad) = only.iter().find(|k| !(1..=8).contains(*k)) {
        return Err(CliError::Usage(format!("no check {bad}; checks are 1-8")));
    }
    let mut all = true;
    for (k, check) in (1..).zip(checks) {
        if !only.is_empty() && !only.contains(&k) {
            continue;
        }
        let o = check();
        all &= o.passed;
        writeln!(out, "{}", o.line()).map_err(|e| CliError::Data(format!("cannot write output: {e}")))?;
    }
    Ok(if all { 0 } else { 1 })
}
