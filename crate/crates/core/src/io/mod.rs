//! Reading and writing KITTI-style data: velodyne scans, calibration,
//! labels, instance masks and 16-bit depth maps, plus a synthetic scene
//! generator that writes the same layout.

mod calib;
mod dataset;
mod depth;
mod labels;
mod masks;
pub mod synth;
mod velodyne;

use std::path::{Path, PathBuf};

pub use calib::{format_calib, parse_calib, read_calib, write_calib};
pub use dataset::{list_split, load_frame, write_frame, write_split, FrameBundle, FrameObject, FramePaths};
pub use depth::{decode_depth, encode_depth, read_depth, write_depth, DEPTH_SCALE};
pub use labels::{format_labels, parse_labels, read_labels, write_labels, Label};
pub use masks::{read_masks, write_masks, MaskEntry};
pub use velodyne::{read_point_cloud, write_point_cloud};

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {reason}")]
    Malformed { path: PathBuf, reason: String },
    #[error("{path}: missing key {key}")]
    MissingKey { path: PathBuf, key: String },
    #[error("{path}: instance id {id} has no class in the table")]
    UnknownClass { path: PathBuf, id: u16 },
    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("depth {0} m cannot be encoded")]
    DepthRange(f64),
}

impl IoError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        IoError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn malformed(path: &Path, reason: impl Into<String>) -> Self {
        IoError::Malformed {
            path: path.to_path_buf(),
            reason: reason.into(),
        }
    }

    pub(crate) fn image(path: &Path, source: image::ImageError) -> Self {
        IoError::Image {
            path: path.to_path_buf(),
            source,
        }
    }
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>, IoError> {
    std::fs::read(path).map_err(|e| IoError::io(path, e))
}

pub(crate) fn read_text(path: &Path) -> Result<String, IoError> {
    std::fs::read_to_string(path).map_err(|e| IoError::io(path, e))
}

pub(crate) fn write_file(path: &Path, data: &[u8]) -> Result<(), IoError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| IoError::io(dir, e))?;
    }
    std::fs::write(path, data).map_err(|e| IoError::io(path, e))
}
