use std::path::{Path, PathBuf};

use super::{
    read_calib, read_labels, read_masks, read_point_cloud, read_text, write_calib, write_file, write_labels,
    write_masks, write_point_cloud, IoError, Label, MaskEntry,
};
use crate::geometry::{CameraCalib, InstanceMask, PixelSet, PointCloud};
use crate::gtgen::ObjectSample;

/// File locations of one frame below a dataset root.
#[derive(Debug, Clone, PartialEq)]
pub struct FramePaths {
    pub velodyne: PathBuf,
    pub calib: PathBuf,
    pub label: PathBuf,
    pub mask_image: PathBuf,
    pub mask_table: PathBuf,
    /// Optional predicted masks in the same format.
    pub pred_image: PathBuf,
    pub pred_table: PathBuf,
}

impl FramePaths {
    pub fn new(root: &Path, frame: &str) -> FramePaths {
        FramePaths {
            velodyne: root.join("velodyne").join(format!("{frame}.bin")),
            calib: root.join("calib").join(format!("{frame}.txt")),
            label: root.join("label_2").join(format!("{frame}.txt")),
            mask_image: root.join("mask").join(format!("{frame}.png")),
            mask_table: root.join("mask").join(format!("{frame}.txt")),
            pred_image: root.join("mask_pred").join(format!("{frame}.png")),
            pred_table: root.join("mask_pred").join(format!("{frame}.txt")),
        }
    }
}

/// Everything known about one frame. Mask id `k` belongs to the `k`-th
/// label row (1-based, `DontCare` rows excluded).
#[derive(Debug, Clone, PartialEq)]
pub struct FrameBundle {
    pub frame: String,
    /// Sensor frame, as stored.
    pub cloud: PointCloud,
    pub calib: CameraCalib,
    pub labels: Vec<Label>,
    pub masks: Vec<MaskEntry>,
    pub predicted: Option<Vec<MaskEntry>>,
}

/// A labelled object with its mask.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameObject<'a> {
    pub instance: u16,
    pub label: &'a Label,
    pub mask: &'a InstanceMask,
    pub predicted: Option<&'a PixelSet>,
}

impl FrameBundle {
    pub fn camera_cloud(&self) -> PointCloud {
        self.calib.cloud_to_camera(&self.cloud)
    }

    /// Car and pedestrian labels that have a mask of the same class.
    pub fn objects(&self) -> Vec<FrameObject<'_>> {
        self.masks
            .iter()
            .filter_map(|m| {
                let label = self.labels.get((m.id as usize).checked_sub(1)?)?;
                (label.object_class == Some(m.mask.class)).then(|| FrameObject {
                    instance: m.id,
                    label,
                    mask: &m.mask,
                    predicted: self
                        .predicted
                        .as_ref()
                        .and_then(|p| p.iter().find(|e| e.id == m.id))
                        .map(|e| &e.mask.pixels),
                })
            })
            .collect()
    }

    /// One sample per object, named `<frame>_<instance>`, with its predicted
    /// pixels when available.
    pub fn samples(&self) -> Result<Vec<(ObjectSample, Option<PixelSet>)>, IoError> {
        let cam = self.camera_cloud();
        self.objects()
            .into_iter()
            .map(|o| {
                let bx = o
                    .label
                    .box3d()
                    .map_err(|e| IoError::malformed(Path::new(&self.frame), e.to_string()))?;
                let s = ObjectSample::from_camera_cloud(format!("{}_{}", self.frame, o.instance), &cam, bx, o.mask.clone());
                Ok((s, o.predicted.cloned()))
            })
            .collect()
    }
}

/// Loads one frame. The label file is optional (empty when absent); masks
/// must be present. Predicted masks are read when both files exist.
pub fn load_frame(root: &Path, frame: &str) -> Result<FrameBundle, IoError> {
    let p = FramePaths::new(root, frame);
    let labels = if p.label.exists() { read_labels(&p.label)? } else { Vec::new() };
    let predicted = if p.pred_image.exists() && p.pred_table.exists() {
        Some(read_masks(&p.pred_image, &p.pred_table)?)
    } else {
        None
    };
    Ok(FrameBundle {
        frame: frame.to_string(),
        cloud: read_point_cloud(&p.velodyne)?,
        calib: read_calib(&p.calib)?,
        labels,
        masks: read_masks(&p.mask_image, &p.mask_table)?,
        predicted,
    })
}

pub fn write_frame(root: &Path, bundle: &FrameBundle) -> Result<(), IoError> {
    let p = FramePaths::new(root, &bundle.frame);
    write_point_cloud(&p.velodyne, &bundle.cloud)?;
    write_calib(&p.calib, &bundle.calib)?;
    write_labels(&p.label, &bundle.labels)?;
    write_masks(&p.mask_image, &p.mask_table, bundle.calib.image_size, &bundle.masks)?;
    if let Some(pred) = &bundle.predicted {
        write_masks(&p.pred_image, &p.pred_table, bundle.calib.image_size, pred)?;
    }
    Ok(())
}

fn split_path(root: &Path, split: &str) -> PathBuf {
    root.join(format!("{split}.txt"))
}

/// Frame ids listed in `<root>/<split>.txt`, one per line.
pub fn list_split(root: &Path, split: &str) -> Result<Vec<String>, IoError> {
    let path = split_path(root, split);
    Ok(read_text(&path)?
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect())
}

pub fn write_split(root: &Path, split: &str, frames: &[String]) -> Result<(), IoError> {
    let text: String = frames.iter().map(|f| format!("{f}\n")).collect();
    write_file(&split_path(root, split), text.as_bytes())
}
