//! Incremental 3D Delaunay tetrahedralization (Bowyer–Watson) on exact
//! orientation and in-sphere predicates.

use std::collections::{BTreeSet, HashMap};

use robust::Coord3D;

const NONE: usize = usize::MAX;

#[derive(Debug, Clone)]
struct Tet {
    v: [usize; 4],
    /// `nb[i]` shares the face opposite `v[i]`.
    nb: [usize; 4],
    alive: bool,
}

/// Tetrahedralization of `points` (plus four enclosing vertices with indices
/// `n..n+4`). Input points must be pairwise distinct and in general position;
/// callers perturb them first.
pub(crate) struct Delaunay3 {
    pts: Vec<[f64; 3]>,
    tets: Vec<Tet>,
    free: Vec<usize>,
    n_real: usize,
    last: usize,
}

fn c3(p: &[f64; 3]) -> Coord3D<f64> {
    Coord3D { x: p[0], y: p[1], z: p[2] }
}

impl Delaunay3 {
    pub(crate) fn build(points: &[[f64; 3]]) -> Delaunay3 {
        let n = points.len();
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in points {
            for k in 0..3 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        let c = [0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1]), 0.5 * (lo[2] + hi[2])];
        let r = (0..3).map(|k| hi[k] - lo[k]).fold(0.0f64, f64::max).max(1e-3);
        let s = 1e4 * r;
        let mut pts = points.to_vec();
        // regular tetrahedron around the bounding box
        for d in [[1.0, 1.0, 1.0], [1.0, -1.0, -1.0], [-1.0, 1.0, -1.0], [-1.0, -1.0, 1.0]] {
            pts.push([c[0] + s * d[0], c[1] + s * d[1], c[2] + s * d[2]]);
        }
        let mut v = [n, n + 1, n + 2, n + 3];
        if robust::orient3d(c3(&pts[v[0]]), c3(&pts[v[1]]), c3(&pts[v[2]]), c3(&pts[v[3]])) < 0.0 {
            v.swap(0, 1);
        }
        let mut dt = Delaunay3 {
            pts,
            tets: vec![Tet { v, nb: [NONE; 4], alive: true }],
            free: Vec::new(),
            n_real: n,
            last: 0,
        };
        for i in 0..n {
            dt.insert(i);
        }
        dt
    }

    fn orient(&self, a: usize, b: usize, c: usize, d: usize) -> f64 {
        robust::orient3d(c3(&self.pts[a]), c3(&self.pts[b]), c3(&self.pts[c]), c3(&self.pts[d]))
    }

    fn in_sphere(&self, t: usize, p: usize) -> bool {
        let v = self.tets[t].v;
        robust::insphere(
            c3(&self.pts[v[0]]),
            c3(&self.pts[v[1]]),
            c3(&self.pts[v[2]]),
            c3(&self.pts[v[3]]),
            c3(&self.pts[p]),
        ) > 0.0
    }

    /// Orientation of tet `t` with vertex `i` replaced by point `p`.
    fn orient_replaced(&self, t: usize, i: usize, p: usize) -> f64 {
        let mut v = self.tets[t].v;
        v[i] = p;
        self.orient(v[0], v[1], v[2], v[3])
    }

    fn locate(&self, p: usize) -> usize {
        let mut t = self.last;
        let mut steps = 0usize;
        'walk: loop {
            steps += 1;
            // rotate the starting face to avoid cycling on degenerate paths
            let start = steps % 4;
            for k in 0..4 {
                let i = (start + k) % 4;
                if self.orient_replaced(t, i, p) < 0.0 {
                    let nb = self.tets[t].nb[i];
                    if nb != NONE {
                        t = nb;
                        continue 'walk;
                    }
                }
            }
            return t;
        }
    }

    fn alloc(&mut self, tet: Tet) -> usize {
        if let Some(i) = self.free.pop() {
            self.tets[i] = tet;
            i
        } else {
            self.tets.push(tet);
            self.tets.len() - 1
        }
    }

    fn insert(&mut self, p: usize) {
        let start = self.locate(p);
        let mut in_cavity = BTreeSet::from([start]);
        let mut stack = vec![start];
        while let Some(t) = stack.pop() {
            for &nb in &self.tets[t].nb {
                if nb != NONE && !in_cavity.contains(&nb) && self.in_sphere(nb, p) {
                    in_cavity.insert(nb);
                    stack.push(nb);
                }
            }
        }
        // Grow the cavity until every boundary face sees `p` strictly, which
        // keeps the new tetrahedra positively oriented.
        let boundary = loop {
            let mut boundary = Vec::new();
            let mut grow = None;
            for &t in &in_cavity {
                for i in 0..4 {
                    let nb = self.tets[t].nb[i];
                    if nb != NONE && in_cavity.contains(&nb) {
                        continue;
                    }
                    if self.orient_replaced(t, i, p) <= 0.0 {
                        if nb != NONE {
                            grow = Some(nb);
                            break;
                        }
                    }
                    boundary.push((t, i, nb));
                }
                if grow.is_some() {
                    break;
                }
            }
            match grow {
                Some(nb) => {
                    in_cavity.insert(nb);
                }
                None => break boundary,
            }
        };
        let mut edge_map: HashMap<(usize, usize), (usize, usize)> = HashMap::new();
        let mut created = Vec::with_capacity(boundary.len());
        for &(t, i, outside) in &boundary {
            let mut v = self.tets[t].v;
            v[i] = p;
            let mut nb = [NONE; 4];
            nb[i] = outside;
            let nt = self.alloc(Tet { v, nb, alive: true });
            created.push(nt);
            if outside != NONE {
                let back = self.tets[outside].nb.iter().position(|&x| x == t).expect("symmetric adjacency");
                self.tets[outside].nb[back] = nt;
            }
            // faces through p: the face opposite v[j] (j != i) contains p
            for j in 0..4 {
                if j == i {
                    continue;
                }
                let mut e: Vec<usize> = (0..4).filter(|&k| k != i && k != j).map(|k| v[k]).collect();
                e.sort_unstable();
                let key = (e[0], e[1]);
                if let Some((ot, oj)) = edge_map.remove(&key) {
                    self.tets[nt].nb[j] = ot;
                    self.tets[ot].nb[oj] = nt;
                } else {
                    edge_map.insert(key, (nt, j));
                }
            }
        }
        debug_assert!(edge_map.is_empty(), "cavity boundary not closed");
        // cavity slots are recycled only after the new tets have been linked
        for &t in &in_cavity {
            self.tets[t].alive = false;
        }
        self.free.extend(in_cavity);
        self.last = *created.first().expect("cavity has a boundary");
    }

    /// Every triangle (sorted vertex triple) of the triangulation whose three
    /// vertices are input points.
    pub(crate) fn real_faces(&self) -> Vec<[usize; 3]> {
        let mut out = Vec::new();
        for (ti, t) in self.tets.iter().enumerate() {
            if !t.alive {
                continue;
            }
            for i in 0..4 {
                let nb = t.nb[i];
                if nb != NONE && nb < ti {
                    continue;
                }
                let mut f: Vec<usize> = (0..4).filter(|&k| k != i).map(|k| t.v[k]).collect();
                if f.iter().any(|&x| x >= self.n_real) {
                    continue;
                }
                f.sort_unstable();
                out.push([f[0], f[1], f[2]]);
            }
        }
        out.sort_unstable();
        out
    }

    /// Live tetrahedra made only of input points.
    #[cfg(test)]
    pub(crate) fn real_tets(&self) -> Vec<[usize; 4]> {
        self.tets
            .iter()
            .filter(|t| t.alive && t.v.iter().all(|&x| x < self.n_real))
            .map(|t| t.v)
            .collect()
    }
}
