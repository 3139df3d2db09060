//! Small spatial queries: nearest neighbours by an x-sorted sweep and radius
//! queries on a uniform hash grid.

use std::collections::HashMap;

use crate::geometry::Vec3;

/// Points sorted by `x` for nearest-neighbour sweeps.
pub(crate) struct SortedSweep<'a> {
    points: &'a [Vec3],
    order: Vec<usize>,
    xs: Vec<f64>,
}

impl<'a> SortedSweep<'a> {
    pub(crate) fn new(points: &'a [Vec3]) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        order.sort_by(|&a, &b| points[a].x.total_cmp(&points[b].x).then(a.cmp(&b)));
        let xs = order.iter().map(|&i| points[i].x).collect();
        SortedSweep { points, order, xs }
    }

    /// Distance from `q` to its nearest point, skipping index `skip`.
    pub(crate) fn nearest(&self, q: &Vec3, skip: Option<usize>) -> Option<(usize, f64)> {
        let start = self.xs.partition_point(|&x| x < q.x);
        let mut best: Option<(usize, f64)> = None;
        let mut best_d2 = f64::INFINITY;
        let consider = |k: usize, best: &mut Option<(usize, f64)>, best_d2: &mut f64| {
            let i = self.order[k];
            if Some(i) == skip {
                return;
            }
            let d2 = (self.points[i] - q).norm_squared();
            if d2 < *best_d2 || (d2 == *best_d2 && best.is_some_and(|(j, _)| i < j)) {
                *best_d2 = d2;
                *best = Some((i, d2));
            }
        };
        let mut k = start;
        while k < self.order.len() {
            let dx = self.xs[k] - q.x;
            if dx * dx > best_d2 {
                break;
            }
            consider(k, &mut best, &mut best_d2);
            k += 1;
        }
        let mut k = start;
        while k > 0 {
            k -= 1;
            let dx = q.x - self.xs[k];
            if dx * dx > best_d2 {
                break;
            }
            consider(k, &mut best, &mut best_d2);
        }
        best.map(|(i, d2)| (i, d2.sqrt()))
    }
}

/// Nearest-neighbour distance of every point to the rest of the set
/// (`INFINITY` for a lone point).
pub(crate) fn nearest_neighbor_spacing(points: &[Vec3]) -> Vec<f64> {
    let sweep = SortedSweep::new(points);
    (0..points.len())
        .map(|i| sweep.nearest(&points[i], Some(i)).map_or(f64::INFINITY, |(_, d)| d))
        .collect()
}

/// Uniform hash grid over a point set.
pub(crate) struct Grid<'a> {
    points: &'a [Vec3],
    cell: f64,
    cells: HashMap<[i64; 3], Vec<usize>>,
}

impl<'a> Grid<'a> {
    pub(crate) fn new(points: &'a [Vec3], cell: f64) -> Self {
        assert!(cell > 0.0);
        let mut cells: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(Self::key(p, cell)).or_default().push(i);
        }
        Grid { points, cell, cells }
    }

    fn key(p: &Vec3, cell: f64) -> [i64; 3] {
        [(p.x / cell).floor() as i64, (p.y / cell).floor() as i64, (p.z / cell).floor() as i64]
    }

    /// Calls `f(i)` for every point with `|p_i − c| < radius`. Stops early and
    /// returns `true` as soon as `f` returns `true`.
    pub(crate) fn any_within(&self, c: &Vec3, radius: f64, mut f: impl FnMut(usize) -> bool) -> bool {
        let lo = Self::key(&(c - Vec3::repeat(radius)), self.cell);
        let hi = Self::key(&(c + Vec3::repeat(radius)), self.cell);
        let r2 = radius * radius;
        for x in lo[0]..=hi[0] {
            for y in lo[1]..=hi[1] {
                for z in lo[2]..=hi[2] {
                    let Some(bucket) = self.cells.get(&[x, y, z]) else {
                        continue;
                    };
                    for &i in bucket {
                        if (self.points[i] - c).norm_squared() < r2 && f(i) {
                            return true;
                        }
                    }
                }
            }
        }
        false
    }
}
