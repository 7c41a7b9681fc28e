//! Periodic symmetric triangulations of the plane at mesh `eps`.
//!
//! The workhorse is the face-centered square ("Union-Jack") pattern: the
//! square grid of side `eps` with every cell center added and joined to the
//! four cell corners. It is a triangulation, periodic, and invariant under
//! horizontal reflection and quarter-turn rotation about any grid corner —
//! the symmetries the sign-percolation duality argument needs. A triangular
//! lattice is kept as the negative control: it fails the quarter-turn audit.

use std::collections::{HashMap, HashSet};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LatticeFamily {
    FaceCenteredSquare,
    Triangular,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lattice {
    pub family: LatticeFamily,
    pub mesh_eps: f64,
}

impl Lattice {
    pub fn face_centered_square(mesh_eps: f64) -> Result<Self> {
        Self::new(LatticeFamily::FaceCenteredSquare, mesh_eps)
    }

    pub fn triangular(mesh_eps: f64) -> Result<Self> {
        Self::new(LatticeFamily::Triangular, mesh_eps)
    }

    fn new(family: LatticeFamily, mesh_eps: f64) -> Result<Self> {
        if !(mesh_eps.is_finite() && mesh_eps > 0.0) {
            return Err(Error::Validation(format!(
                "mesh_eps: must be a positive finite real, got {mesh_eps}"
            )));
        }
        Ok(Lattice { family, mesh_eps })
    }

    /// Vertices per unit area of the unscaled (eps = 1) pattern.
    pub fn unit_density(&self) -> f64 {
        match self.family {
            // One corner plus one center per unit cell.
            LatticeFamily::FaceCenteredSquare => 2.0,
            LatticeFamily::Triangular => 2.0 / 3.0f64.sqrt(),
        }
    }

    /// Vertices per unit area at mesh `eps`: scales like `eps^-2`.
    pub fn density(&self) -> f64 {
        self.unit_density() / (self.mesh_eps * self.mesh_eps)
    }

    /// Longest edge length of the unscaled pattern (the cell side for the
    /// face-centered square, the common edge for the triangular lattice).
    pub fn unit_longest_edge(&self) -> f64 {
        1.0
    }

    /// Longest edge length at mesh `eps`.
    pub fn longest_edge(&self) -> f64 {
        self.unit_longest_edge() * self.mesh_eps
    }

    /// If the unscaled vertices lie on `(1/N) Z^2`, returns `N`.
    /// The triangular lattice has irrational ordinates, hence `None`.
    pub fn integrality(&self) -> Option<u32> {
        match self.family {
            LatticeFamily::FaceCenteredSquare => Some(2),
            LatticeFamily::Triangular => None,
        }
    }

    /// Coordinates of the vertex with integer key `(i, j)`.
    ///
    /// Face-centered square: keys live on the half-step grid, a vertex needs
    /// `i ≡ j (mod 2)` (even/even = cell corner, odd/odd = cell center) and
    /// sits at `(i, j) * eps / 2`. Triangular: axial coordinates,
    /// `(i + j/2, j * sqrt(3)/2) * eps`.
    pub fn point_of(&self, key: (i64, i64)) -> [f64; 2] {
        let e = self.mesh_eps;
        match self.family {
            LatticeFamily::FaceCenteredSquare => {
                [key.0 as f64 * (e / 2.0), key.1 as f64 * (e / 2.0)]
            }
            LatticeFamily::Triangular => [
                (key.0 as f64 + key.1 as f64 / 2.0) * e,
                key.1 as f64 * (3.0f64.sqrt() / 2.0) * e,
            ],
        }
    }

    fn is_vertex_key(&self, key: (i64, i64)) -> bool {
        match self.family {
            LatticeFamily::FaceCenteredSquare => (key.0 + key.1) % 2 == 0,
            LatticeFamily::Triangular => true,
        }
    }

    /// Neighbor offsets pointing in the lexicographically positive direction
    /// only, so that scanning vertices in key order emits each edge once.
    fn forward_offsets(&self, key: (i64, i64)) -> &'static [(i64, i64)] {
        match self.family {
            LatticeFamily::FaceCenteredSquare => {
                if key.0 % 2 == 0 {
                    // Corner: axis edges to the next corners, diagonals to
                    // the two centers on the right.
                    &[(2, 0), (0, 2), (1, 1), (1, -1)]
                } else {
                    // Center: diagonals to the two corners on the right.
                    &[(1, 1), (1, -1)]
                }
            }
            LatticeFamily::Triangular => &[(1, 0), (0, 1), (1, -1)],
        }
    }
}

/// Axis-aligned square window `[cx - h, cx + h] x [cy - h, cy + h]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Box2 {
    pub center: [f64; 2],
    pub half_side: f64,
}

impl Box2 {
    pub fn new(center: [f64; 2], half_side: f64) -> Result<Self> {
        if !(half_side.is_finite() && half_side > 0.0)
            || !center[0].is_finite()
            || !center[1].is_finite()
        {
            return Err(Error::Validation(format!(
                "box: center must be finite and half_side positive, got {center:?}, {half_side}"
            )));
        }
        Ok(Box2 { center, half_side })
    }

    /// `B_s = [-s, s]^2`.
    pub fn centered(half_side: f64) -> Result<Self> {
        Self::new([0.0, 0.0], half_side)
    }

    pub fn contains(&self, p: [f64; 2], tol: f64) -> bool {
        (p[0] - self.center[0]).abs() <= self.half_side + tol
            && (p[1] - self.center[1]).abs() <= self.half_side + tol
    }
}

/// Vertices and edges of a lattice restricted to a closed box.
///
/// `keys` are exact integer lattice coordinates; `points` their scaled
/// positions. Edges keep both endpoints in the box. Adjacency is CSR.
#[derive(Debug, Clone)]
pub struct Enumeration {
    pub lattice: Lattice,
    pub window: Box2,
    pub keys: Vec<(i64, i64)>,
    pub points: Vec<[f64; 2]>,
    pub edges: Vec<(u32, u32)>,
    pub index: HashMap<(i64, i64), u32>,
    adj_head: Vec<u32>,
    adj_list: Vec<u32>,
}

impl Enumeration {
    pub fn vertex_count(&self) -> usize {
        self.points.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn neighbors(&self, v: u32) -> &[u32] {
        &self.adj_list[self.adj_head[v as usize] as usize..self.adj_head[v as usize + 1] as usize]
    }
}

/// Enumerate all lattice vertices inside the closed box together with every
/// edge whose two endpoints both lie inside. Boundary vertices are included
/// (with a relative tolerance of 1e-9 mesh steps against rounding noise) so
/// that side-touching events are well defined. A box smaller than one mesh
/// cell yields an empty or edgeless enumeration, not an error.
pub fn enumerate(lattice: &Lattice, window: &Box2) -> Enumeration {
    let [cx, cy] = window.center;
    let h = window.half_side;
    let slack = 1e-9;
    let mut keys = Vec::new();

    match lattice.family {
        LatticeFamily::FaceCenteredSquare => {
            let step = lattice.mesh_eps / 2.0;
            let i_lo = ((cx - h) / step - slack).ceil() as i64;
            let i_hi = ((cx + h) / step + slack).floor() as i64;
            let j_lo = ((cy - h) / step - slack).ceil() as i64;
            let j_hi = ((cy + h) / step + slack).floor() as i64;
            for i in i_lo..=i_hi {
                for j in j_lo..=j_hi {
                    if lattice.is_vertex_key((i, j)) {
                        keys.push((i, j));
                    }
                }
            }
        }
        LatticeFamily::Triangular => {
            let e = lattice.mesh_eps;
            let step_y = e * 3.0f64.sqrt() / 2.0;
            let j_lo = ((cy - h) / step_y - slack).ceil() as i64;
            let j_hi = ((cy + h) / step_y + slack).floor() as i64;
            for j in j_lo..=j_hi {
                let i_lo = ((cx - h) / e - j as f64 / 2.0 - slack).ceil() as i64;
                let i_hi = ((cx + h) / e - j as f64 / 2.0 + slack).floor() as i64;
                for i in i_lo..=i_hi {
                    keys.push((i, j));
                }
            }
        }
    }

    let points: Vec<[f64; 2]> = keys.iter().map(|&k| lattice.point_of(k)).collect();
    let index: HashMap<(i64, i64), u32> =
        keys.iter().enumerate().map(|(v, &k)| (k, v as u32)).collect();

    let mut edges = Vec::new();
    for (v, &k) in keys.iter().enumerate() {
        for &(di, dj) in lattice.forward_offsets(k) {
            if let Some(&u) = index.get(&(k.0 + di, k.1 + dj)) {
                let v = v as u32;
                edges.push(if v < u { (v, u) } else { (u, v) });
            }
        }
    }

    // CSR adjacency.
    let n = keys.len();
    let mut deg = vec![0u32; n];
    for &(a, b) in &edges {
        deg[a as usize] += 1;
        deg[b as usize] += 1;
    }
    let mut adj_head = vec![0u32; n + 1];
    for v in 0..n {
        adj_head[v + 1] = adj_head[v] + deg[v];
    }
    let mut adj_list = vec![0u32; edges.len() * 2];
    let mut cursor = adj_head.clone();
    for &(a, b) in &edges {
        adj_list[cursor[a as usize] as usize] = b;
        cursor[a as usize] += 1;
        adj_list[cursor[b as usize] as usize] = a;
        cursor[b as usize] += 1;
    }

    Enumeration {
        lattice: *lattice,
        window: *window,
        keys,
        points,
        edges,
        index,
        adj_head,
        adj_list,
    }
}

/// Outcome of a symmetry audit: set invariance of vertices and edges under
/// horizontal reflection and under quarter-turn rotation about a center.
/// A witness is a vertex whose image (or one of whose incident edge images)
/// is missing from the pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetryAudit {
    pub reflection_ok: bool,
    pub rotation_ok: bool,
    pub reflection_witness: Option<[f64; 2]>,
    pub rotation_witness: Option<[f64; 2]>,
}

impl SymmetryAudit {
    pub fn pass(&self) -> bool {
        self.reflection_ok && self.rotation_ok
    }
}

/// Audit an enumerated lattice patch about the window center.
pub fn symmetry_audit(lattice: &Lattice, window: &Box2) -> SymmetryAudit {
    let e = enumerate(lattice, window);
    point_symmetry_audit(&e.points, &e.edges, window.center, lattice.mesh_eps * 1e-6)
}

/// Audit an arbitrary point/edge pattern: checks that reflecting across the
/// horizontal line through `center`, and rotating by a quarter turn about
/// `center`, each map the vertex set onto itself and every edge onto an
/// edge (up to `tol` in max-norm).
pub fn point_symmetry_audit(
    points: &[[f64; 2]],
    edges: &[(u32, u32)],
    center: [f64; 2],
    tol: f64,
) -> SymmetryAudit {
    let locator = PointLocator::new(points, tol);
    let edge_set: HashSet<(u32, u32)> = edges
        .iter()
        .map(|&(a, b)| if a < b { (a, b) } else { (b, a) })
        .collect();

    let reflect = |p: [f64; 2]| [p[0], 2.0 * center[1] - p[1]];
    let rotate = |p: [f64; 2]| [center[0] - (p[1] - center[1]), center[1] + (p[0] - center[0])];

    let check = |map: &dyn Fn([f64; 2]) -> [f64; 2]| -> Option<[f64; 2]> {
        let mut image = vec![0u32; points.len()];
        for (v, &p) in points.iter().enumerate() {
            match locator.find(map(p)) {
                Some(u) => image[v] = u,
                None => return Some(p),
            }
        }
        for &(a, b) in &edge_set {
            let (ia, ib) = (image[a as usize], image[b as usize]);
            let e = if ia < ib { (ia, ib) } else { (ib, ia) };
            if !edge_set.contains(&e) {
                return Some(points[a as usize]);
            }
        }
        None
    };

    let reflection_witness = check(&reflect);
    let rotation_witness = check(&rotate);
    SymmetryAudit {
        reflection_ok: reflection_witness.is_none(),
        rotation_ok: rotation_witness.is_none(),
        reflection_witness,
        rotation_witness,
    }
}

/// Tolerance-aware point lookup via a quantized grid; probes the 3x3
/// neighborhood of the quantized cell so near-boundary points still match.
struct PointLocator {
    points: Vec<[f64; 2]>,
    cells: HashMap<(i64, i64), Vec<u32>>,
    tol: f64,
    qcell: f64,
}

impl PointLocator {
    fn new(points: &[[f64; 2]], tol: f64) -> Self {
        let tol = tol.max(1e-300);
        let qcell = tol * 4.0;
        let quantize = |p: [f64; 2]| {
            ((p[0] / qcell).round() as i64, (p[1] / qcell).round() as i64)
        };
        let mut cells: HashMap<(i64, i64), Vec<u32>> = HashMap::new();
        for (v, &p) in points.iter().enumerate() {
            cells.entry(quantize(p)).or_default().push(v as u32);
        }
        PointLocator { points: points.to_vec(), cells, tol, qcell }
    }

    fn find(&self, p: [f64; 2]) -> Option<u32> {
        let (qi, qj) =
            ((p[0] / self.qcell).round() as i64, (p[1] / self.qcell).round() as i64);
        for di in -1..=1 {
            for dj in -1..=1 {
                if let Some(vs) = self.cells.get(&(qi + di, qj + dj)) {
                    for &v in vs {
                        let q = self.points[v as usize];
                        if (q[0] - p[0]).abs() <= self.tol && (q[1] - p[1]).abs() <= self.tol {
                            return Some(v);
                        }
                    }
                }
            }
        }
        None
    }
}
