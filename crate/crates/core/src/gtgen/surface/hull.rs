//! Incremental 3D convex hull on exact orientation predicates.

use std::collections::HashSet;

use robust::Coord3D;

fn c3(p: &[f64; 3]) -> Coord3D<f64> {
    Coord3D { x: p[0], y: p[1], z: p[2] }
}

fn orient(pts: &[[f64; 3]], f: &[usize; 3], p: usize) -> f64 {
    robust::orient3d(c3(&pts[f[0]]), c3(&pts[f[1]]), c3(&pts[f[2]]), c3(&pts[p]))
}

fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (0..3).map(|k| (a[k] - b[k]).powi(2)).sum()
}

/// Hull facets of `pts`, oriented so the interior lies below each face in the
/// sense of `orient3d` (outward normal `(b − a) × (c − a)`). `None` when the
/// points do not span a volume.
pub(crate) fn convex_hull(pts: &[[f64; 3]]) -> Option<Vec<[usize; 3]>> {
    let n = pts.len();
    if n < 4 {
        return None;
    }
    let i0 = 0;
    let i1 = (1..n).max_by(|&a, &b| dist2(&pts[i0], &pts[a]).total_cmp(&dist2(&pts[i0], &pts[b])))?;
    let line = |p: usize| {
        let (a, b, q) = (pts[i0], pts[i1], pts[p]);
        let ab = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
        let aq = [q[0] - a[0], q[1] - a[1], q[2] - a[2]];
        let cx = [ab[1] * aq[2] - ab[2] * aq[1], ab[2] * aq[0] - ab[0] * aq[2], ab[0] * aq[1] - ab[1] * aq[0]];
        cx.iter().map(|c| c * c).sum::<f64>()
    };
    let i2 = (0..n).max_by(|&a, &b| line(a).total_cmp(&line(b)))?;
    if line(i2) == 0.0 {
        return None;
    }
    let base = [i0, i1, i2];
    let i3 = (0..n).max_by(|&a, &b| orient(pts, &base, a).abs().total_cmp(&orient(pts, &base, b).abs()))?;
    if orient(pts, &base, i3) == 0.0 {
        return None;
    }
    let (a, b, c, d) = if orient(pts, &base, i3) > 0.0 { (i0, i1, i2, i3) } else { (i1, i0, i2, i3) };
    // (a, b, c) has d below; the other faces follow from the same tetrahedron
    let mut faces = vec![[a, b, c], [a, d, b], [b, d, c], [c, d, a]];
    let seed = [a, b, c, d];
    for p in 0..n {
        if seed.contains(&p) {
            continue;
        }
        let visible: Vec<bool> = faces.iter().map(|f| orient(pts, f, p) < 0.0).collect();
        if !visible.iter().any(|&v| v) {
            continue;
        }
        let mut edges = HashSet::new();
        for (f, _) in faces.iter().zip(&visible).filter(|(_, &v)| v) {
            for k in 0..3 {
                edges.insert((f[k], f[(k + 1) % 3]));
            }
        }
        let mut next: Vec<[usize; 3]> = faces.iter().zip(&visible).filter(|(_, &v)| !v).map(|(f, _)| *f).collect();
        for (f, _) in faces.iter().zip(&visible).filter(|(_, &v)| v) {
            for k in 0..3 {
                let (u, w) = (f[k], f[(k + 1) % 3]);
                if !edges.contains(&(w, u)) {
                    next.push([u, w, p]);
                }
            }
        }
        faces = next;
    }
    Some(faces)
}
