//! Connectivity engine for sign colorings: union-find cluster labeling and
//! the crossing/circuit/arm event detectors.
//!
//! Side-touching uses boundary strips: a vertex belongs to a side strip when
//! its distance to the side is strictly less than half the longest edge
//! length. On the face-centered square lattice with boxes aligned to the
//! corner sublattice this keeps cell centers (at exactly half an edge from
//! the side lines) out of the strips, which is precisely the convention that
//! makes square-box duality exact — one and only one of {black left-right
//! crossing, white top-bottom crossing} per sample. Annulus events instead
//! use closed radial bands one full edge length deep, wide enough that no
//! lattice edge can jump over them, which keeps one-arm events monotone in
//! the outer scale sample by sample.

use crate::coloring::Coloring;
use crate::lattice::Enumeration;
use crate::{Error, Result};

/// Vertex color a query asks about.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Color {
    Black,
    White,
}

impl Color {
    fn as_black(self) -> bool {
        matches!(self, Color::Black)
    }

    pub fn opposite(self) -> Color {
        match self {
            Color::Black => Color::White,
            Color::White => Color::Black,
        }
    }
}

/// Which pair of rectangle sides a crossing must join.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SidePair {
    LeftRight,
    TopBottom,
}

/// Axis-aligned rectangle with a marked pair of opposite sides.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quad {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
    pub side_pair: SidePair,
}

impl Quad {
    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64, side_pair: SidePair) -> Result<Self> {
        if !(x0 < x1 && y0 < y1) || ![x0, x1, y0, y1].iter().all(|v| v.is_finite()) {
            return Err(Error::Validation(format!(
                "quad: need x0 < x1 and y0 < y1, got [{x0}, {x1}] x [{y0}, {y1}]"
            )));
        }
        Ok(Quad { x0, x1, y0, y1, side_pair })
    }

    /// The square `[-h, h]^2` crossed left to right.
    pub fn square(h: f64) -> Result<Self> {
        Self::new(-h, h, -h, h, SidePair::LeftRight)
    }

    fn contains(&self, p: [f64; 2], tol: f64) -> bool {
        p[0] >= self.x0 - tol && p[0] <= self.x1 + tol && p[1] >= self.y0 - tol && p[1] <= self.y1 + tol
    }
}

/// What a detector was asked about.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Crossing,
    Circuit,
    WindowedCrossing,
    FourStripLink,
    OneArm,
    NodalTrap,
}

/// Detector verdict; `witness` is a same-colored vertex path (indices into
/// the enumeration) present exactly when the event occurred and a witness
/// was requested. Circuit and four-strip results never carry witnesses:
/// those detectors certify connectivity patterns, not single paths.
#[derive(Debug, Clone, PartialEq)]
pub struct PercResult {
    pub event: EventKind,
    pub occurred: bool,
    pub witness: Option<Vec<u32>>,
}

/// Disjoint-set forest with path halving and union by size.
pub struct UnionFind {
    parent: Vec<u32>,
    size: Vec<u32>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        UnionFind { parent: (0..n as u32).collect(), size: vec![1; n] }
    }

    pub fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let grand = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = grand;
            x = grand;
        }
        x
    }

    pub fn union(&mut self, a: u32, b: u32) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra as usize] < self.size[rb as usize] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb as usize] = ra;
        self.size[ra as usize] += self.size[rb as usize];
        true
    }

    pub fn connected(&mut self, a: u32, b: u32) -> bool {
        self.find(a) == self.find(b)
    }
}

fn tol_of(e: &Enumeration) -> f64 {
    e.lattice.mesh_eps * 1e-9
}

/// Strict side-strip membership: distance to the side line below half the
/// longest edge length (minus rounding slack), so vertices exactly half an
/// edge away stay out.
fn in_side_strip(coord: f64, side: f64, e: &Enumeration) -> bool {
    (coord - side).abs() < e.lattice.longest_edge() / 2.0 - tol_of(e)
}

fn maxnorm(p: [f64; 2]) -> f64 {
    p[0].abs().max(p[1].abs())
}

fn require_in_window(e: &Enumeration, x0: f64, x1: f64, y0: f64, y1: f64) -> Result<()> {
    let w = &e.window;
    let tol = tol_of(e);
    let ok = x0 >= w.center[0] - w.half_side - tol
        && x1 <= w.center[0] + w.half_side + tol
        && y0 >= w.center[1] - w.half_side - tol
        && y1 <= w.center[1] + w.half_side + tol;
    if ok {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "region [{x0}, {x1}] x [{y0}, {y1}] exceeds the enumerated window"
        )))
    }
}

fn check_coloring(e: &Enumeration, c: &Coloring) -> Result<()> {
    if c.len() != e.vertex_count() {
        return Err(Error::Validation(format!(
            "alignment: coloring has {} bits for {} vertices",
            c.len(),
            e.vertex_count()
        )));
    }
    Ok(())
}

/// Core detector: is there a path of `black`-matching vertices, inside
/// `region`, from a `source` vertex to a `target` vertex? Union-find for the
/// verdict; BFS for an explicit path when requested.
fn path_event(
    e: &Enumeration,
    c: &Coloring,
    black: bool,
    region: &dyn Fn([f64; 2]) -> bool,
    source: &dyn Fn([f64; 2]) -> bool,
    target: &dyn Fn([f64; 2]) -> bool,
    want_witness: bool,
) -> (bool, Option<Vec<u32>>) {
    let n = e.vertex_count();
    let mut active = vec![false; n];
    for v in 0..n {
        active[v] = c.matches(v as u32, black) && region(e.points[v]);
    }

    let (s_node, t_node) = (n as u32, n as u32 + 1);
    let mut uf = UnionFind::new(n + 2);
    for v in 0..n {
        if !active[v] {
            continue;
        }
        let p = e.points[v];
        if source(p) {
            uf.union(s_node, v as u32);
        }
        if target(p) {
            uf.union(t_node, v as u32);
        }
    }
    for &(a, b) in &e.edges {
        if active[a as usize] && active[b as usize] {
            uf.union(a, b);
        }
    }
    let occurred = uf.connected(s_node, t_node);
    if !occurred || !want_witness {
        return (occurred, None);
    }

    // Breadth-first search for an explicit path.
    let mut parent: Vec<i64> = vec![-2; n]; // -2 unvisited, -1 root
    let mut queue = std::collections::VecDeque::new();
    for v in 0..n {
        if active[v] && source(e.points[v]) {
            parent[v] = -1;
            queue.push_back(v as u32);
        }
    }
    while let Some(v) = queue.pop_front() {
        if target(e.points[v as usize]) {
            let mut path = vec![v];
            let mut cur = v;
            while parent[cur as usize] >= 0 {
                cur = parent[cur as usize] as u32;
                path.push(cur);
            }
            path.reverse();
            return (true, Some(path));
        }
        for &u in e.neighbors(v) {
            if active[u as usize] && parent[u as usize] == -2 {
                parent[u as usize] = i64::from(v);
                queue.push_back(u);
            }
        }
    }
    unreachable!("union-find reported a connection the breadth-first search cannot find");
}

/// Monochromatic crossing of a quad between its marked sides.
pub fn crosses(
    e: &Enumeration,
    c: &Coloring,
    quad: &Quad,
    color: Color,
    want_witness: bool,
) -> Result<PercResult> {
    check_coloring(e, c)?;
    require_in_window(e, quad.x0, quad.x1, quad.y0, quad.y1)?;
    let tol = tol_of(e);
    let region = |p: [f64; 2]| quad.contains(p, tol);
    let q = *quad;
    let (occurred, witness) = match quad.side_pair {
        SidePair::LeftRight => path_event(
            e,
            c,
            color.as_black(),
            &region,
            &|p| in_side_strip(p[0], q.x0, e),
            &|p| in_side_strip(p[0], q.x1, e),
            want_witness,
        ),
        SidePair::TopBottom => path_event(
            e,
            c,
            color.as_black(),
            &region,
            &|p| in_side_strip(p[1], q.y0, e),
            &|p| in_side_strip(p[1], q.y1, e),
            want_witness,
        ),
    };
    Ok(PercResult { event: EventKind::Crossing, occurred, witness })
}

/// Monochromatic circuit in the annulus between the boxes of half-sides
/// `s < t`, detected by duality on the triangulation: a circuit of `color`
/// exists iff no opposite-colored vertex path crosses the annulus radially.
pub fn circuit(e: &Enumeration, c: &Coloring, s: f64, t: f64, color: Color) -> Result<PercResult> {
    check_coloring(e, c)?;
    if !(s > 0.0 && s < t) {
        return Err(Error::Domain(format!("annulus: need 0 < s < t, got s={s}, t={t}")));
    }
    require_in_window(e, -t, t, -t, t)?;
    let tol = tol_of(e);
    let band = e.lattice.longest_edge();
    let region = |p: [f64; 2]| {
        let m = maxnorm(p);
        m >= s - tol && m <= t + tol
    };
    let (blocked, _) = path_event(
        e,
        c,
        color.opposite().as_black(),
        &region,
        &|p| maxnorm(p) <= s + band + tol,
        &|p| maxnorm(p) >= t - band - tol,
        false,
    );
    Ok(PercResult { event: EventKind::Circuit, occurred: !blocked, witness: None })
}

/// Black path in the square of half-side `s/2` from the whole left side to
/// the part of the right side with ordinate in `[alpha, beta]`.
pub fn cross_to_window(
    e: &Enumeration,
    c: &Coloring,
    s: f64,
    alpha: f64,
    beta: f64,
    want_witness: bool,
) -> Result<PercResult> {
    check_coloring(e, c)?;
    let h = s / 2.0;
    if !(s > 0.0) || !(-h <= alpha && alpha <= beta && beta <= h) {
        return Err(Error::Domain(format!(
            "target window: need -s/2 <= alpha <= beta <= s/2, got alpha={alpha}, beta={beta}, s={s}"
        )));
    }
    require_in_window(e, -h, h, -h, h)?;
    let tol = tol_of(e);
    let region = |p: [f64; 2]| maxnorm(p) <= h + tol;
    let (occurred, witness) = path_event(
        e,
        c,
        true,
        &region,
        &|p| in_side_strip(p[0], -h, e),
        &|p| in_side_strip(p[0], h, e) && p[1] >= alpha - tol && p[1] <= beta + tol,
        want_witness,
    );
    Ok(PercResult { event: EventKind::WindowedCrossing, occurred, witness })
}

/// One black component in the square of half-side `s/2` touching all four
/// boundary strips `{±s/2} x ([-s/2, -alpha] and [alpha, s/2])`: equivalent
/// to the three-path picture (a connector along each vertical side joining
/// its low and high segments, plus a bridge between the sides).
pub fn four_strip_link(e: &Enumeration, c: &Coloring, s: f64, alpha: f64) -> Result<PercResult> {
    check_coloring(e, c)?;
    let h = s / 2.0;
    if !(s > 0.0) || !(0.0 <= alpha && alpha <= h) {
        return Err(Error::Domain(format!(
            "strip split: need 0 <= alpha <= s/2, got alpha={alpha}, s={s}"
        )));
    }
    require_in_window(e, -h, h, -h, h)?;
    let tol = tol_of(e);

    let n = e.vertex_count();
    let mut uf = UnionFind::new(n);
    let mut active = vec![false; n];
    for v in 0..n {
        active[v] = c.is_black(v as u32) && maxnorm(e.points[v]) <= h + tol;
    }
    for &(a, b) in &e.edges {
        if active[a as usize] && active[b as usize] {
            uf.union(a, b);
        }
    }

    let low = |y: f64| y >= -h - tol && y <= -alpha + tol;
    let high = |y: f64| y >= alpha - tol && y <= h + tol;
    // Per-component flags [left-low, left-high, right-low, right-high]. A
    // vertex on the axis with alpha = 0 belongs to both segments of its side.
    let mut touched: std::collections::HashMap<u32, [bool; 4]> = std::collections::HashMap::new();
    for v in 0..n {
        if !active[v] {
            continue;
        }
        let p = e.points[v];
        let left = in_side_strip(p[0], -h, e);
        let right = in_side_strip(p[0], h, e);
        if !(left || right) {
            continue;
        }
        let root = uf.find(v as u32);
        let flags = touched.entry(root).or_insert([false; 4]);
        if low(p[1]) {
            flags[if right { 2 } else { 0 }] = true;
        }
        if high(p[1]) {
            flags[if right { 3 } else { 1 }] = true;
        }
    }
    let occurred = touched.values().any(|f| f.iter().all(|&x| x));
    Ok(PercResult { event: EventKind::FourStripLink, occurred, witness: None })
}

/// Same-colored path joining the boundary band of the box of half-side `s`
/// to the boundary band of the box of half-side `t`, inside the closed box
/// of half-side `t`. Bands reach one full edge length inward, so the event
/// is monotone decreasing in `t` sample by sample.
pub fn one_arm(
    e: &Enumeration,
    c: &Coloring,
    s: f64,
    t: f64,
    color: Color,
    want_witness: bool,
) -> Result<PercResult> {
    check_coloring(e, c)?;
    if !(s >= 1.0 && s < t) {
        return Err(Error::Domain(format!("scales: need 1 <= s < t, got s={s}, t={t}")));
    }
    require_in_window(e, -t, t, -t, t)?;
    let tol = tol_of(e);
    let band = e.lattice.longest_edge();
    let region = |p: [f64; 2]| maxnorm(p) <= t + tol;
    let (occurred, witness) = path_event(
        e,
        c,
        color.as_black(),
        &region,
        &|p| {
            let m = maxnorm(p);
            m >= s - band - tol && m <= s + tol
        },
        &|p| {
            let m = maxnorm(p);
            m >= t - band - tol && m <= t + tol
        },
        want_witness,
    );
    Ok(PercResult { event: EventKind::OneArm, occurred, witness })
}

/// Discrete nodal-crossing trap: the quad is split perpendicular to its
/// crossing direction into two sub-rectangles separated by `gap`; the event
/// asks for a black crossing of the upper (or right) sub-rectangle and a
/// white crossing of the lower (or left) one. A zero line of the field then
/// has to run between them.
pub fn quad_nodal_crossing(
    e: &Enumeration,
    c: &Coloring,
    quad: &Quad,
    gap: f64,
    want_witness: bool,
) -> Result<PercResult> {
    check_coloring(e, c)?;
    if !(gap > 0.0 && gap.is_finite()) {
        return Err(Error::Domain(format!("gap: must be positive, got {gap}")));
    }
    let (upper, lower) = match quad.side_pair {
        SidePair::LeftRight => {
            let mid = (quad.y0 + quad.y1) / 2.0;
            if quad.y1 - quad.y0 <= gap {
                return Err(Error::Domain(format!(
                    "quad of height {} cannot hold two sub-rectangles separated by gap {gap}",
                    quad.y1 - quad.y0
                )));
            }
            (
                Quad::new(quad.x0, quad.x1, mid + gap / 2.0, quad.y1, SidePair::LeftRight)?,
                Quad::new(quad.x0, quad.x1, quad.y0, mid - gap / 2.0, SidePair::LeftRight)?,
            )
        }
        SidePair::TopBottom => {
            let mid = (quad.x0 + quad.x1) / 2.0;
            if quad.x1 - quad.x0 <= gap {
                return Err(Error::Domain(format!(
                    "quad of width {} cannot hold two sub-rectangles separated by gap {gap}",
                    quad.x1 - quad.x0
                )));
            }
            (
                Quad::new(mid + gap / 2.0, quad.x1, quad.y0, quad.y1, SidePair::TopBottom)?,
                Quad::new(quad.x0, mid - gap / 2.0, quad.y0, quad.y1, SidePair::TopBottom)?,
            )
        }
    };
    let black = crosses(e, c, &upper, Color::Black, want_witness)?;
    let white = crosses(e, c, &lower, Color::White, want_witness)?;
    let occurred = black.occurred && white.occurred;
    let witness = if occurred && want_witness {
        let mut w = black.witness.unwrap_or_default();
        w.extend(white.witness.unwrap_or_default());
        Some(w)
    } else {
        None
    };
    Ok(PercResult { event: EventKind::NodalTrap, occurred, witness })
}
