use std::collections::HashMap;
use std::path::Path;

use nalgebra::{Matrix3, Matrix3x4, Matrix4};

use super::{read_text, write_file, IoError};
use crate::geometry::{CameraCalib, KITTI_IMAGE_SIZE};

fn parse_rows(path: &Path, text: &str) -> Result<HashMap<String, Vec<f64>>, IoError> {
    let mut rows = HashMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (key, rest) = line
            .split_once(':')
            .ok_or_else(|| IoError::malformed(path, format!("line {}: expected `key: values`", n + 1)))?;
        let values = rest
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| IoError::malformed(path, format!("line {}: {e}", n + 1)))?;
        rows.insert(key.trim().to_string(), values);
    }
    Ok(rows)
}

fn take<'a>(path: &Path, rows: &'a HashMap<String, Vec<f64>>, key: &str, len: usize) -> Result<&'a [f64], IoError> {
    let v = rows.get(key).ok_or_else(|| IoError::MissingKey {
        path: path.to_path_buf(),
        key: key.to_string(),
    })?;
    if v.len() != len {
        return Err(IoError::malformed(path, format!("{key} has {} values, expected {len}", v.len())));
    }
    Ok(v)
}

/// Parses the `P2`, `R0_rect` and `Tr_velo_to_cam` rows of a KITTI
/// calibration file. An optional `image_size: w h` row sets the image size,
/// which otherwise defaults to the KITTI colour image size.
pub fn parse_calib(path: &Path, text: &str) -> Result<CameraCalib, IoError> {
    let rows = parse_rows(path, text)?;
    let p2 = Matrix3x4::from_row_slice(take(path, &rows, "P2", 12)?);
    let r0 = Matrix3::from_row_slice(take(path, &rows, "R0_rect", 9)?);
    let tr = take(path, &rows, "Tr_velo_to_cam", 12)?;
    let mut velo = Matrix4::identity();
    velo.fixed_view_mut::<3, 4>(0, 0).copy_from(&Matrix3x4::from_row_slice(tr));
    let size = match rows.get("image_size") {
        None => KITTI_IMAGE_SIZE,
        Some(v) if v.len() == 2 && v.iter().all(|x| *x >= 1.0 && x.fract() == 0.0) => (v[0] as u32, v[1] as u32),
        Some(v) => return Err(IoError::malformed(path, format!("image_size {v:?}"))),
    };
    CameraCalib::new(p2, r0, velo, size).map_err(|e| IoError::malformed(path, e.to_string()))
}

pub fn read_calib(path: &Path) -> Result<CameraCalib, IoError> {
    parse_calib(path, &read_text(path)?)
}

fn row(key: &str, values: impl IntoIterator<Item = f64>) -> String {
    let v: Vec<String> = values.into_iter().map(|x| format!("{x:e}")).collect();
    format!("{key}: {}\n", v.join(" "))
}

/// KITTI text form; every value is written with enough digits to parse back
/// exactly.
pub fn format_calib(calib: &CameraCalib) -> String {
    let p = &calib.intrinsic;
    let r = &calib.rect;
    let t = &calib.lidar_to_cam;
    let mut s = String::new();
    s += &row("P2", (0..3).flat_map(|i| (0..4).map(move |j| p[(i, j)])));
    s += &row("R0_rect", (0..3).flat_map(|i| (0..3).map(move |j| r[(i, j)])));
    s += &row("Tr_velo_to_cam", (0..3).flat_map(|i| (0..4).map(move |j| t[(i, j)])));
    s += &format!("image_size: {} {}\n", calib.image_size.0, calib.image_size.1);
    s
}

pub fn write_calib(path: &Path, calib: &CameraCalib) -> Result<(), IoError> {
    write_file(path, format_calib(calib).as_bytes())
}
