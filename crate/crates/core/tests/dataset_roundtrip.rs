use std::path::Path;

use nalgebra::{Isometry3, Matrix3x4, Rotation3, Translation3, UnitQuaternion};
use proptest::prelude::*;
use vpdense_core::io::synth::{generate_frame, generate_split, SynthConfig};
use vpdense_core::io::{format_calib, list_split, load_frame, parse_calib};
use vpdense_core::pipeline::{build_pool, split_objects};
use vpdense_core::CameraCalib;

#[test]
fn synthetic_split_survives_disk() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SynthConfig::default();
    let ids = generate_split(dir.path(), "train", 2, 5, &cfg).unwrap();
    assert_eq!(list_split(dir.path(), "train").unwrap(), ids);
    for (k, id) in ids.iter().enumerate() {
        let loaded = load_frame(dir.path(), id).unwrap();
        let made = generate_frame(id, 5 + k as u64, &cfg);
        assert_eq!(loaded.cloud.points, made.cloud.points.iter().map(|p| p.map(|x| x as f32 as f64)).collect::<Vec<_>>());
        assert_eq!(loaded.masks, made.masks);
        assert_eq!(loaded.labels.len(), made.labels.len());
        assert_eq!(loaded.objects().len(), loaded.masks.len());
    }
}

#[test]
fn split_objects_cover_every_mask() {
    let frames: Vec<_> = (0..2).map(|k| generate_frame(&format!("{k}"), 20 + k, &SynthConfig::default())).collect();
    let objects = split_objects(&frames).unwrap();
    assert_eq!(objects.len(), frames.iter().map(|f| f.masks.len()).sum::<usize>());
    for o in &objects {
        assert!(o.sample.cloud.points.iter().all(|q| o.sample.bbox.size.iter().zip(q.iter()).all(|(s, x)| x.abs() < 0.5 * s)));
    }
    let (_, report) = build_pool(&objects, &Default::default());
    assert_eq!(report.admitted + report.too_sparse + report.mask_disagreement, objects.len());
}

proptest! {
    #[test]
    fn calib_text_roundtrip(
        f in (100.0f64..2000.0, 100.0f64..2000.0),
        rest in prop::array::uniform8(-1e3f64..1e3),
        rect in prop::array::uniform3(-3.1f64..3.1),
        rot in prop::array::uniform3(-3.1f64..3.1),
        t in prop::array::uniform3(-10.0f64..10.0),
        size in (1u32..4000, 1u32..4000),
    ) {
        let mut p = Matrix3x4::zeros();
        p[(0, 0)] = f.0;
        p[(1, 1)] = f.1;
        for (k, (i, j)) in [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 2), (2, 3), (1, 0)].into_iter().enumerate() {
            p[(i, j)] = rest[k];
        }
        let r0 = Rotation3::from_euler_angles(rect[0], rect[1], rect[2]).into_inner();
        let tr = Isometry3::from_parts(Translation3::new(t[0], t[1], t[2]), UnitQuaternion::from_euler_angles(rot[0], rot[1], rot[2]))
            .to_homogeneous();
        let c = CameraCalib::new(p, r0, tr, size);
        prop_assume!(c.is_ok());
        let c = c.unwrap();
        let back = parse_calib(Path::new("x"), &format_calib(&c)).unwrap();
        prop_assert_eq!(back, c);
    }
}
