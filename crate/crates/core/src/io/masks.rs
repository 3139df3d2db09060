use std::collections::BTreeMap;
use std::path::Path;

use image::{ImageBuffer, Luma};

use super::{read_text, write_file, IoError};
use crate::geometry::{InstanceMask, ObjectClass};

/// A mask and the instance id it carries in the id image.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskEntry {
    pub id: u16,
    pub mask: InstanceMask,
}

fn parse_table(path: &Path, text: &str) -> Result<BTreeMap<u16, ObjectClass>, IoError> {
    let mut table = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let t: Vec<&str> = line.split_whitespace().collect();
        if t.is_empty() {
            continue;
        }
        let bad = || IoError::malformed(path, format!("line {}: expected `<id> <class>`", n + 1));
        if t.len() != 2 {
            return Err(bad());
        }
        let id: u16 = t[0].parse().map_err(|_| bad())?;
        let class = ObjectClass::parse(t[1])
            .ok_or_else(|| IoError::malformed(path, format!("line {}: unknown class {}", n + 1, t[1])))?;
        if id == 0 || table.insert(id, class).is_some() {
            return Err(bad());
        }
    }
    Ok(table)
}

/// Reads a 16-bit id image (0 = background) and its `<id> <class>` table.
/// Masks come out in increasing id order.
pub fn read_masks(image_path: &Path, table_path: &Path) -> Result<Vec<MaskEntry>, IoError> {
    let table = parse_table(table_path, &read_text(table_path)?)?;
    let img = image::open(image_path).map_err(|e| IoError::image(image_path, e))?;
    if !matches!(img.color(), image::ColorType::L16 | image::ColorType::L8) {
        return Err(IoError::malformed(image_path, format!("expected a single-channel image, got {:?}", img.color())));
    }
    let img = img.into_luma16();
    let size = img.dimensions();
    let mut pixels: BTreeMap<u16, Vec<(u32, u32)>> = BTreeMap::new();
    for (u, v, p) in img.enumerate_pixels() {
        if p[0] != 0 {
            pixels.entry(p[0]).or_default().push((u, v));
        }
    }
    pixels
        .into_iter()
        .map(|(id, px)| {
            let class = *table.get(&id).ok_or(IoError::UnknownClass {
                path: table_path.to_path_buf(),
                id,
            })?;
            let mask = InstanceMask::new(px, size, class).map_err(|e| IoError::malformed(image_path, e.to_string()))?;
            Ok(MaskEntry { id, mask })
        })
        .collect()
}

/// Writes the id image and table. Masks must not overlap.
pub fn write_masks(image_path: &Path, table_path: &Path, size: (u32, u32), masks: &[MaskEntry]) -> Result<(), IoError> {
    let mut img: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::new(size.0, size.1);
    let mut table = String::new();
    for e in masks {
        if e.id == 0 {
            return Err(IoError::malformed(image_path, "instance id 0 is background"));
        }
        for (u, v) in e.mask.pixels.iter() {
            if u >= size.0 || v >= size.1 {
                return Err(IoError::malformed(image_path, format!("pixel ({u},{v}) outside the image")));
            }
            let p = img.get_pixel_mut(u, v);
            if p[0] != 0 {
                return Err(IoError::malformed(image_path, format!("masks {} and {} overlap at ({u},{v})", p[0], e.id)));
            }
            p[0] = e.id;
        }
        table += &format!("{} {}\n", e.id, e.mask.class);
    }
    let mut png = Vec::new();
    img.write_to(&mut std::io::Cursor::new(&mut png), image::ImageFormat::Png)
        .map_err(|e| IoError::image(image_path, e))?;
    write_file(image_path, &png)?;
    write_file(table_path, table.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn save(path: &Path, img: &ImageBuffer<Luma<u16>, Vec<u16>>) {
        img.save(path).unwrap();
    }

    #[test]
    fn two_instances_exact_pixels() {
        let dir = tempfile::tempdir().unwrap();
        let (png, txt) = (dir.path().join("m.png"), dir.path().join("m.txt"));
        let mut img = ImageBuffer::new(6, 4);
        img.put_pixel(1, 1, Luma([3u16]));
        img.put_pixel(2, 1, Luma([3u16]));
        img.put_pixel(5, 3, Luma([700u16]));
        save(&png, &img);
        std::fs::write(&txt, "3 car\n700 pedestrian\n").unwrap();
        let m = read_masks(&png, &txt).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m[0].id, 3);
        assert_eq!(m[0].mask.pixels.as_slice(), &[(1, 1), (2, 1)]);
        assert_eq!(m[0].mask.class, ObjectClass::Car);
        assert_eq!(m[1].mask.pixels.as_slice(), &[(5, 3)]);
        assert_eq!(m[1].mask.class, ObjectClass::Pedestrian);
        assert_eq!(m[1].mask.image_size, (6, 4));
    }

    #[test]
    fn all_zero_and_unknown_id() {
        let dir = tempfile::tempdir().unwrap();
        let (png, txt) = (dir.path().join("m.png"), dir.path().join("m.txt"));
        let mut img: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::new(5, 5);
        save(&png, &img);
        std::fs::write(&txt, "").unwrap();
        assert!(read_masks(&png, &txt).unwrap().is_empty());
        img.put_pixel(0, 0, Luma([9]));
        save(&png, &img);
        std::fs::write(&txt, "1 car\n").unwrap();
        assert!(matches!(read_masks(&png, &txt), Err(IoError::UnknownClass { id: 9, .. })));
        std::fs::write(&txt, "9 bicycle\n").unwrap();
        assert!(matches!(read_masks(&png, &txt), Err(IoError::Malformed { .. })));
    }

    #[test]
    fn truncated_png_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let (png, txt) = (dir.path().join("m.png"), dir.path().join("m.txt"));
        let img: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::from_fn(40, 30, |u, v| Luma([((u + v) % 3) as u16]));
        save(&png, &img);
        std::fs::write(&txt, "1 car\n2 car\n").unwrap();
        let bytes = std::fs::read(&png).unwrap();
        std::fs::write(&png, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(read_masks(&png, &txt), Err(IoError::Image { .. })));
    }

    #[test]
    fn pixel_counts_match_histogram() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let dir = tempfile::tempdir().unwrap();
        let (png, txt) = (dir.path().join("m.png"), dir.path().join("m.txt"));
        for _ in 0..5 {
            let (w, h) = (rng.random_range(10..80), rng.random_range(10..60));
            let ids = [0u16, 0, 1, 2, 5, 40000];
            let img = ImageBuffer::from_fn(w, h, |_, _| Luma([ids[rng.random_range(0..ids.len())]]));
            save(&png, &img);
            std::fs::write(&txt, "1 car\n2 pedestrian\n5 car\n40000 car\n").unwrap();
            let mut hist = [0usize; 65536];
            for p in img.pixels() {
                hist[p[0] as usize] += 1;
            }
            let masks = read_masks(&png, &txt).unwrap();
            for m in &masks {
                assert_eq!(m.mask.len(), hist[m.id as usize]);
            }
            let present = hist[1..].iter().filter(|c| **c > 0).count();
            assert_eq!(masks.len(), present);
        }
    }

    #[test]
    fn write_read_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let (png, txt) = (dir.path().join("a/m.png"), dir.path().join("a/m.txt"));
        let a = InstanceMask::rectangle(0, 0, 3, 2, (10, 8), ObjectClass::Car).unwrap();
        let b = InstanceMask::rectangle(5, 5, 2, 2, (10, 8), ObjectClass::Pedestrian).unwrap();
        let entries = vec![MaskEntry { id: 1, mask: a.clone() }, MaskEntry { id: 2, mask: b }];
        write_masks(&png, &txt, (10, 8), &entries).unwrap();
        assert_eq!(read_masks(&png, &txt).unwrap(), entries);
        let clash = vec![MaskEntry { id: 1, mask: a.clone() }, MaskEntry { id: 2, mask: a }];
        assert!(write_masks(&png, &txt, (10, 8), &clash).is_err());
    }
}
