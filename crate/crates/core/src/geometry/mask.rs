use serde::{Deserialize, Serialize};

use super::{project_points, CameraCalib, GeometryError, PointCloud};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectClass {
    Car,
    Pedestrian,
}

impl ObjectClass {
    pub fn parse(s: &str) -> Option<ObjectClass> {
        match s.to_ascii_lowercase().as_str() {
            "car" => Some(ObjectClass::Car),
            "pedestrian" => Some(ObjectClass::Pedestrian),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            ObjectClass::Car => "car",
            ObjectClass::Pedestrian => "pedestrian",
        }
    }
}

impl std::fmt::Display for ObjectClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Set of integer pixels `(u, v)`, kept sorted in row-major order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelSet {
    pixels: Vec<(u32, u32)>,
}

fn row_major(p: &(u32, u32)) -> (u32, u32) {
    (p.1, p.0)
}

impl PixelSet {
    /// Builds a set, dropping duplicates.
    pub fn from_pixels(mut pixels: Vec<(u32, u32)>) -> PixelSet {
        pixels.sort_by_key(row_major);
        pixels.dedup();
        PixelSet { pixels }
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn contains(&self, p: (u32, u32)) -> bool {
        self.pixels.binary_search_by_key(&row_major(&p), row_major).is_ok()
    }

    /// Position of `p` in the sorted order.
    pub fn index_of(&self, p: (u32, u32)) -> Option<usize> {
        self.pixels.binary_search_by_key(&row_major(&p), row_major).ok()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.pixels.iter().copied()
    }

    pub fn as_slice(&self) -> &[(u32, u32)] {
        &self.pixels
    }

    pub fn intersection_len(&self, other: &PixelSet) -> usize {
        let (mut i, mut j, mut n) = (0, 0, 0);
        while i < self.pixels.len() && j < other.pixels.len() {
            match row_major(&self.pixels[i]).cmp(&row_major(&other.pixels[j])) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    n += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        n
    }

    /// Inclusive bounding box `(u_min, v_min, u_max, v_max)`.
    pub fn bbox(&self) -> Option<(u32, u32, u32, u32)> {
        let first = self.pixels.first()?;
        let mut b = (first.0, first.1, first.0, first.1);
        for &(u, v) in &self.pixels {
            b.0 = b.0.min(u);
            b.1 = b.1.min(v);
            b.2 = b.2.max(u);
            b.3 = b.3.max(v);
        }
        Some(b)
    }
}

/// Pixels of one 2D object instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceMask {
    pub pixels: PixelSet,
    /// `(width, height)`
    pub image_size: (u32, u32),
    pub class: ObjectClass,
}

impl InstanceMask {
    pub fn new(
        pixels: Vec<(u32, u32)>,
        image_size: (u32, u32),
        class: ObjectClass,
    ) -> Result<Self, GeometryError> {
        if pixels.is_empty() {
            return Err(GeometryError::InvalidMask("empty pixel set".into()));
        }
        if let Some(p) = pixels.iter().find(|p| p.0 >= image_size.0 || p.1 >= image_size.1) {
            return Err(GeometryError::InvalidMask(format!(
                "pixel {p:?} outside image {}x{}",
                image_size.0, image_size.1
            )));
        }
        let n = pixels.len();
        let set = PixelSet::from_pixels(pixels);
        if set.len() != n {
            return Err(GeometryError::InvalidMask("duplicate pixels".into()));
        }
        Ok(InstanceMask {
            pixels: set,
            image_size,
            class,
        })
    }

    /// Axis-aligned rectangle of pixels `[u0, u0+w) × [v0, v0+h)`.
    pub fn rectangle(
        u0: u32,
        v0: u32,
        w: u32,
        h: u32,
        image_size: (u32, u32),
        class: ObjectClass,
    ) -> Result<Self, GeometryError> {
        let pixels = (v0..v0 + h).flat_map(|v| (u0..u0 + w).map(move |u| (u, v))).collect();
        Self::new(pixels, image_size, class)
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    /// Pixel extent `(width, height)` of the mask's bounding box.
    pub fn extent(&self) -> (u32, u32) {
        let (u0, v0, u1, v1) = self.pixels.bbox().expect("non-empty mask");
        (u1 - u0 + 1, v1 - v0 + 1)
    }
}

/// Indices of sensor-frame points in front of the camera whose rounded
/// projection lands on a pixel of `pixels`.
pub fn points_in_pixels(cloud: &PointCloud, pixels: &PixelSet, calib: &CameraCalib) -> Vec<usize> {
    if pixels.is_empty() {
        return Vec::new();
    }
    project_points(cloud, calib)
        .iter()
        .enumerate()
        .filter_map(|(i, proj)| {
            let (u, v) = proj.pixel()?;
            if u < 0 || v < 0 || u > u32::MAX as i64 || v > u32::MAX as i64 {
                return None;
            }
            pixels.contains((u as u32, v as u32)).then_some(i)
        })
        .collect()
}

pub fn points_in_mask(cloud: &PointCloud, mask: &InstanceMask, calib: &CameraCalib) -> Vec<usize> {
    points_in_pixels(cloud, &mask.pixels, calib)
}
