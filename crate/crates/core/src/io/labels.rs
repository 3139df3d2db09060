use std::f64::consts::PI;
use std::path::Path;

use super::{read_text, write_file, IoError};
use crate::geometry::{Box3D, GeometryError, ObjectClass, Vec3};

/// One row of a KITTI label file, camera frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Label {
    pub type_name: String,
    /// `None` for types other than `Car` and `Pedestrian`.
    pub object_class: Option<ObjectClass>,
    pub truncation: f64,
    /// 0 fully visible, 1 partly occluded, 2 largely occluded, 3 unknown.
    pub occlusion: i32,
    pub alpha: f64,
    /// `(left, top, right, bottom)` in pixels.
    pub bbox2d: [f64; 4],
    pub height: f64,
    pub width: f64,
    pub length: f64,
    /// Bottom centre of the box.
    pub location: Vec3,
    pub rotation_y: f64,
    pub score: Option<f64>,
}

impl Label {
    /// Box with its geometric centre half a height above the KITTI location.
    pub fn box3d(&self) -> Result<Box3D, GeometryError> {
        let mut heading = self.rotation_y;
        if heading <= -PI {
            heading += 2.0 * PI;
        }
        Box3D::new(
            self.location - Vec3::new(0.0, 0.5 * self.height, 0.0),
            Vec3::new(self.length, self.width, self.height),
            heading,
        )
    }

    pub fn to_line(&self) -> String {
        let mut s = format!(
            "{} {} {} {} {} {} {} {} {} {} {} {} {} {} {}",
            self.type_name,
            self.truncation,
            self.occlusion,
            self.alpha,
            self.bbox2d[0],
            self.bbox2d[1],
            self.bbox2d[2],
            self.bbox2d[3],
            self.height,
            self.width,
            self.length,
            self.location.x,
            self.location.y,
            self.location.z,
            self.rotation_y
        );
        if let Some(sc) = self.score {
            s += &format!(" {sc}");
        }
        s
    }
}

fn parse_line(path: &Path, n: usize, line: &str) -> Result<Option<Label>, IoError> {
    let t: Vec<&str> = line.split_whitespace().collect();
    if t.is_empty() || t[0] == "DontCare" {
        return Ok(None);
    }
    if t.len() != 15 && t.len() != 16 {
        return Err(IoError::malformed(path, format!("line {n}: {} fields, expected 15 or 16", t.len())));
    }
    let f = |k: usize| {
        t[k].parse::<f64>()
            .map_err(|e| IoError::malformed(path, format!("line {n} field {}: {e}", k + 1)))
    };
    let occlusion = t[2]
        .parse::<i32>()
        .map_err(|e| IoError::malformed(path, format!("line {n} occlusion: {e}")))?;
    let label = Label {
        type_name: t[0].to_string(),
        object_class: match t[0] {
            "Car" => Some(ObjectClass::Car),
            "Pedestrian" => Some(ObjectClass::Pedestrian),
            _ => None,
        },
        truncation: f(1)?,
        occlusion,
        alpha: f(3)?,
        bbox2d: [f(4)?, f(5)?, f(6)?, f(7)?],
        height: f(8)?,
        width: f(9)?,
        length: f(10)?,
        location: Vec3::new(f(11)?, f(12)?, f(13)?),
        rotation_y: f(14)?,
        score: if t.len() == 16 { Some(f(15)?) } else { None },
    };
    label.box3d().map_err(|e| IoError::malformed(path, format!("line {n}: {e}")))?;
    Ok(Some(label))
}

/// Parses label rows, skipping `DontCare`.
pub fn parse_labels(path: &Path, text: &str) -> Result<Vec<Label>, IoError> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if let Some(l) = parse_line(path, n + 1, line)? {
            out.push(l);
        }
    }
    Ok(out)
}

pub fn read_labels(path: &Path) -> Result<Vec<Label>, IoError> {
    parse_labels(path, &read_text(path)?)
}

pub fn format_labels(labels: &[Label]) -> String {
    labels.iter().map(|l| l.to_line() + "\n").collect()
}

pub fn write_labels(path: &Path, labels: &[Label]) -> Result<(), IoError> {
    write_file(path, format_labels(labels).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOLDEN: &str = "\
Car 0.00 0 -1.58 587.01 173.33 614.12 200.12 1.65 1.67 3.64 -0.65 1.71 46.70 -1.59
DontCare -1 -1 -10 503.89 169.71 590.61 190.13 -1 -1 -1 -1000 -1000 -1000 -10
Pedestrian 0.00 2 -0.20 712.40 143.00 810.73 307.92 1.89 0.48 1.20 1.84 1.47 8.41 0.01
Cyclist 0.30 1 1.00 100.0 150.0 200.0 250.0 1.70 0.60 1.80 -4.00 1.60 12.00 -3.141592653589793
";

    #[test]
    fn golden_car_row() {
        let l = parse_labels(Path::new("g"), GOLDEN).unwrap();
        assert_eq!(l.len(), 3);
        let car = &l[0];
        assert_eq!(car.object_class, Some(ObjectClass::Car));
        assert_eq!(car.bbox2d, [587.01, 173.33, 614.12, 200.12]);
        let b = car.box3d().unwrap();
        assert_eq!(b.center, Vec3::new(-0.65, 1.71 - 0.825, 46.70));
        assert_eq!(b.size, Vec3::new(3.64, 1.67, 1.65));
        assert_eq!(b.heading, -1.59);
    }

    #[test]
    fn dont_care_skipped_and_occlusion_kept() {
        let l = parse_labels(Path::new("g"), GOLDEN).unwrap();
        assert!(l.iter().all(|x| x.type_name != "DontCare"));
        assert_eq!(l[1].occlusion, 2);
        assert_eq!(l[2].object_class, None);
        assert!((l[2].box3d().unwrap().heading - PI).abs() < 1e-15);
    }

    #[test]
    fn bad_rows_rejected() {
        assert!(parse_labels(Path::new("g"), "Car 0 0 0 1 2 3").is_err());
        assert!(parse_labels(Path::new("g"), "Car 0 x 0 1 2 3 4 1 1 1 0 0 5 0").is_err());
        assert!(parse_labels(Path::new("g"), "Car 0 0 0 1 2 3 4 0 1 1 0 0 5 0").is_err());
    }

    #[test]
    fn format_parse_round_trip() {
        let l = parse_labels(Path::new("g"), GOLDEN).unwrap();
        let back = parse_labels(Path::new("rt"), &format_labels(&l)).unwrap();
        assert_eq!(back, l);
    }
}
