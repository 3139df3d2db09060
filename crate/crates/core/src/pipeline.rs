//! Per-frame drivers tying the modules together: ground-truth generation over
//! a split, frustum segmentation and densification of one frame.

use serde::{Deserialize, Serialize};

use crate::config::{FrustumConfig, PipelineConfig, PoolConfig};
use crate::densify::{build_pixel_mesh, build_stage_hierarchy, deform_optimize, DensifyError};
use crate::frustum::{foreground_filter, Frustum, FrustumError, SegmentationResult};
use crate::geometry::{points_in_box3d, ObjectClass, PixelSet};
use crate::gtgen::{generate_visible_depth, AdmissionReport, GtGenError, ObjectPool, ObjectSample, VisibleDepthGt};
use crate::io::{FrameBundle, IoError};
use crate::metrics::{mean_iou, IouReport, MetricsError};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    GtGen(#[from] GtGenError),
    #[error(transparent)]
    Frustum(#[from] FrustumError),
    #[error(transparent)]
    Densify(#[from] DensifyError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// One object of a split, ready for ground-truth generation.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitObject {
    pub frame: String,
    pub instance: u16,
    pub sample: ObjectSample,
    pub predicted: Option<PixelSet>,
}

pub fn split_objects(bundles: &[FrameBundle]) -> Result<Vec<SplitObject>, PipelineError> {
    let mut out = Vec::new();
    for b in bundles {
        for (o, (sample, predicted)) in b.objects().iter().zip(b.samples()?) {
            out.push(SplitObject {
                frame: b.frame.clone(),
                instance: o.instance,
                sample,
                predicted,
            });
        }
    }
    Ok(out)
}

/// Pool over every object of the split, with the mask agreement filter
/// applied where predicted masks exist.
pub fn build_pool(objects: &[SplitObject], cfg: &PoolConfig) -> (ObjectPool, AdmissionReport) {
    ObjectPool::build_with_predictions(objects.iter().map(|o| (o.sample.clone(), o.predicted.clone())), cfg)
}

/// Manifest row of one object's ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GtRecord {
    pub frame: String,
    pub instance: u16,
    pub class: ObjectClass,
    pub mask_pixels: usize,
    pub object_points: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha_used: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub retries: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub matched: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub full_shape_points: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Ground truth for one object; failures are reported in the record.
pub fn object_gt(obj: &SplitObject, pool: &ObjectPool, bundle: &FrameBundle, cfg: &PipelineConfig) -> (GtRecord, Option<VisibleDepthGt>) {
    let mut rec = GtRecord {
        frame: obj.frame.clone(),
        instance: obj.instance,
        class: obj.sample.class(),
        mask_pixels: obj.sample.mask.len(),
        object_points: obj.sample.len(),
        alpha_used: None,
        retries: None,
        matched: None,
        full_shape_points: None,
        error: None,
    };
    match generate_visible_depth(&obj.sample, pool, &bundle.calib, &cfg.gt) {
        Ok(v) => {
            rec.alpha_used = Some(v.alpha_used);
            rec.retries = Some(v.retries);
            rec.matched = Some(v.matched);
            rec.full_shape_points = Some(v.full_shape_points);
            (rec, Some(v.gt))
        }
        Err(e) => {
            rec.error = Some(e.to_string());
            (rec, None)
        }
    }
}

/// Frustum segmentation of one object with its label-derived reference.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectSegmentation {
    pub instance: u16,
    pub class: ObjectClass,
    pub frustum: Frustum,
    pub result: SegmentationResult,
    /// Whether each frustum point lies inside the labelled box.
    pub reference: Vec<bool>,
    /// Foreground/background IOU against `reference`; `None` for an empty frustum.
    pub iou: Option<IouReport>,
}

pub fn segment_frame(bundle: &FrameBundle, cfg: &FrustumConfig) -> Result<Vec<ObjectSegmentation>, PipelineError> {
    let cam = bundle.camera_cloud();
    let mut out = Vec::new();
    for o in bundle.objects() {
        let frustum = Frustum::from_cloud(&bundle.cloud, o.mask, &bundle.calib);
        let bx = o
            .label
            .box3d()
            .map_err(|e| IoError::Malformed {
                path: bundle.frame.clone().into(),
                reason: e.to_string(),
            })?;
        let inside = points_in_box3d(&cam, &bx);
        let reference: Vec<bool> = frustum.point_indices.iter().map(|i| inside.binary_search(i).is_ok()).collect();
        let (result, iou) = if frustum.is_empty() {
            (SegmentationResult::from_scores(Vec::new(), cfg.threshold), None)
        } else {
            let r = foreground_filter(&frustum, &bundle.calib, cfg)?;
            let pred: Vec<usize> = r.foreground.iter().map(|&f| f as usize).collect();
            let gt: Vec<usize> = reference.iter().map(|&f| f as usize).collect();
            let iou = mean_iou(&pred, &gt, 2)?;
            (r, Some(iou))
        };
        out.push(ObjectSegmentation {
            instance: o.instance,
            class: o.mask.class,
            frustum,
            result,
            reference,
            iou,
        });
    }
    Ok(out)
}

/// Dense depth of one object from its foreground lidar points.
#[derive(Debug, Clone, PartialEq)]
pub struct DensifiedObject {
    pub instance: u16,
    pub anchors: usize,
    pub iterations: usize,
    pub final_loss: f64,
    pub depth: VisibleDepthGt,
}

/// Densifies one segmented object from its foreground points; `None` when no
/// point was kept.
pub fn densify_object(
    seg: &ObjectSegmentation,
    bundle: &FrameBundle,
    cfg: &PipelineConfig,
) -> Result<Option<DensifiedObject>, PipelineError> {
    let anchors: Vec<((u32, u32), f64)> = seg
        .result
        .foreground_indices()
        .into_iter()
        .map(|i| (seg.frustum.pixels[i], seg.frustum.depths[i]))
        .collect();
    if anchors.is_empty() {
        return Ok(None);
    }
    let mesh = build_pixel_mesh(&seg.frustum.mask, &anchors, &bundle.calib)?;
    let hierarchy = build_stage_hierarchy(&mesh, cfg.densify.stage_ratios)?;
    let out = deform_optimize(&mesh, &hierarchy, None, &cfg.densify)?;
    let iterations = out.stages.iter().map(|s| s.iterations).sum();
    let final_loss = out.stages[2].losses.last().copied().unwrap_or(0.0);
    let depth = VisibleDepthGt::new(seg.frustum.mask.clone(), out.depths)?;
    Ok(Some(DensifiedObject {
        instance: seg.instance,
        anchors: mesh.anchors.len(),
        iterations,
        final_loss,
        depth,
    }))
}

/// Densifies every segmented object that has at least one foreground point.
/// Objects without foreground points are returned with their instance id in
/// the second list.
pub fn densify_frame(
    bundle: &FrameBundle,
    cfg: &PipelineConfig,
) -> Result<(Vec<DensifiedObject>, Vec<u16>), PipelineError> {
    let mut done = Vec::new();
    let mut skipped = Vec::new();
    for seg in segment_frame(bundle, &cfg.frustum)? {
        match densify_object(&seg, bundle, cfg)? {
            Some(d) => done.push(d),
            None => skipped.push(seg.instance),
        }
    }
    Ok((done, skipped))
}
