//! Level lines on the dual lattice.
//!
//! Dual vertex `(i, j)` is the point `(i - 1/2, j - 1/2)`, i.e. the
//! south-west corner of site `(i, j)`. The separating bonds of the level set
//! `{η >= h}` are traced into circuits; where four separating bonds meet at a
//! vertex, the north and west arms are paired and so are the south and east
//! arms (both bonds of a pair lie on the same side of the south-west to
//! north-east diagonal through the vertex). With this rule the high set is
//! connected across north-east/south-west diagonals.
//!
//! Only bonds touching a site of `Λ` are traced. Circuits are closed
//! contours; traces that run into a bond between two outside sites are open
//! contours anchored on the perimeter of the box. The four corner sites
//! outside the box (not part of `∂Λ`) take the smaller of their two adjacent
//! boundary heights.

use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Result, SosError};
use crate::model::{FloorMode, HeightField, Lattice, SosSystem};

const E: usize = 0;
const N: usize = 1;
const W: usize = 2;
const S: usize = 3;

/// Linked partner of each arm.
const PARTNER: [usize; 4] = [S, W, N, E];
const OPPOSITE: [usize; 4] = [W, S, E, N];

/// A unit bond of the dual lattice between dual vertices `a < b`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DualBond {
    pub a: (i64, i64),
    pub b: (i64, i64),
}

impl DualBond {
    pub fn new(p: (i64, i64), q: (i64, i64)) -> Self {
        debug_assert_eq!((p.0 - q.0).abs() + (p.1 - q.1).abs(), 1);
        if p <= q {
            DualBond { a: p, b: q }
        } else {
            DualBond { a: q, b: p }
        }
    }

    pub fn is_horizontal(&self) -> bool {
        self.a.1 == self.b.1
    }

    /// The two sites this bond separates (below/above or left/right).
    pub fn separated_sites(&self) -> [(i64, i64); 2] {
        let (i, j) = self.a;
        if self.is_horizontal() {
            [(i, j - 1), (i, j)]
        } else {
            [(i - 1, j), (i, j)]
        }
    }

    /// Dual bond crossing the lattice edge between adjacent sites `s` and `t`.
    pub fn between_sites(s: (i64, i64), t: (i64, i64)) -> Self {
        let (p, q) = if s <= t { (s, t) } else { (t, s) };
        if p.1 == q.1 {
            // horizontal neighbours: vertical bond at x = q.0 - 1/2
            DualBond::new((q.0, q.1), (q.0, q.1 + 1))
        } else {
            DualBond::new((p.0, q.1), (p.0 + 1, q.1))
        }
    }

    /// Endpoints in real coordinates.
    pub fn coords(&self) -> [[f64; 2]; 2] {
        let f = |v: (i64, i64)| [v.0 as f64 - 0.5, v.1 as f64 - 0.5];
        [f(self.a), f(self.b)]
    }

    fn arm_at(&self, v: (i64, i64)) -> usize {
        let other = if self.a == v { self.b } else { self.a };
        match (other.0 - v.0, other.1 - v.1) {
            (1, 0) => E,
            (0, 1) => N,
            (-1, 0) => W,
            _ => S,
        }
    }
}

fn arm_bond(v: (i64, i64), arm: usize) -> DualBond {
    let (i, j) = v;
    let w = match arm {
        E => (i + 1, j),
        N => (i, j + 1),
        W => (i - 1, j),
        _ => (i, j - 1),
    };
    DualBond::new(v, w)
}

fn arm_end(v: (i64, i64), arm: usize) -> (i64, i64) {
    let b = arm_bond(v, arm);
    if b.a == v {
        b.b
    } else {
        b.a
    }
}

/// Whether two arms meeting at a vertex form a linked pair.
pub fn is_linked_pair(arm1: usize, arm2: usize) -> bool {
    PARTNER[arm1] == arm2
}

fn sites_around(v: (i64, i64)) -> [(i64, i64); 4] {
    let (i, j) = v;
    [(i - 1, j - 1), (i, j - 1), (i - 1, j), (i, j)]
}

/// A closed or open sequence of dual bonds together with its interior and
/// boundary annuli.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Contour {
    pub h: i32,
    pub closed: bool,
    pub bonds: Vec<DualBond>,
    /// Sites of `Λ_γ` (sorted). Empty for open contours.
    pub interior: Vec<(i64, i64)>,
    pub delta_plus: Vec<(i64, i64)>,
    pub delta_minus: Vec<(i64, i64)>,
}

impl Contour {
    pub fn length(&self) -> usize {
        self.bonds.len()
    }

    pub fn area(&self) -> usize {
        self.interior.len()
    }

    pub fn bond_set(&self) -> BTreeSet<DualBond> {
        self.bonds.iter().copied().collect()
    }

    /// Interior as site indices of the box.
    pub fn interior_indices(&self, lattice: Lattice) -> Vec<usize> {
        self.interior.iter().map(|&(x, y)| lattice.index(x as usize, y as usize)).collect()
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "h": self.h,
            "closed": self.closed,
            "length": self.length(),
            "area": self.area(),
            "bonds": self.bonds.iter().map(|b| b.coords()).collect::<Vec<_>>(),
        })
    }

    /// Build geometry (interior, `Δ±`) for an ordered bond sequence.
    pub fn from_bonds(h: i32, bonds: Vec<DualBond>, closed: bool) -> Self {
        let interior = if closed { interior_by_parity(&bonds) } else { Vec::new() };
        let inside: HashSet<(i64, i64)> = interior.iter().copied().collect();
        let mut delta: BTreeSet<(i64, i64)> = BTreeSet::new();
        for b in &bonds {
            delta.extend(b.separated_sites());
        }
        let n = bonds.len();
        let pairs = if closed { n } else { n.saturating_sub(1) };
        for k in 0..pairs {
            let (e1, e2) = (bonds[k], bonds[(k + 1) % n]);
            if let Some(v) = shared_vertex(&e1, &e2) {
                let (a1, a2) = (e1.arm_at(v), e2.arm_at(v));
                if a1 != OPPOSITE[a2] && !is_linked_pair(a1, a2) {
                    delta.extend(sites_around(v));
                }
            }
        }
        let (plus, minus): (Vec<_>, Vec<_>) = delta.into_iter().partition(|s| inside.contains(s));
        Contour { h, closed, bonds, interior, delta_plus: plus, delta_minus: minus }
    }
}

fn shared_vertex(e1: &DualBond, e2: &DualBond) -> Option<(i64, i64)> {
    [e1.a, e1.b].into_iter().find(|v| *v == e2.a || *v == e2.b)
}

/// Sites enclosed by a closed bond sequence, by horizontal ray parity.
fn interior_by_parity(bonds: &[DualBond]) -> Vec<(i64, i64)> {
    let mut rows: HashMap<i64, Vec<i64>> = HashMap::new();
    for b in bonds.iter().filter(|b| !b.is_horizontal()) {
        // vertical bond from (i, j) to (i, j + 1) crosses the ray of row j
        rows.entry(b.a.1).or_default().push(b.a.0);
    }
    let mut out = Vec::new();
    for (y, mut xs) in rows {
        xs.sort_unstable();
        // sites strictly between consecutive crossings i_0 < i_1: x in [i_0, i_1)
        for pair in xs.chunks(2) {
            if let [lo, hi] = *pair {
                out.extend((lo..hi).map(|x| (x, y)));
            }
        }
    }
    out.sort_unstable();
    out
}

/// Height lookup on `Λ ∪ ∂Λ` plus the four outside corners.
pub fn extended_height(sys: &SosSystem, eta: &HeightField, x: i64, y: i64) -> Option<i32> {
    if let Some(h) = sys.height_at(eta, x, y) {
        return Some(h);
    }
    let (l, m) = (sys.lattice().l as i64, sys.lattice().m as i64);
    let cx = x == -1 || x == l;
    let cy = y == -1 || y == m;
    if cx && cy {
        let hx = sys.height_at(eta, x, if y == -1 { 0 } else { m - 1 })?;
        let hy = sys.height_at(eta, if x == -1 { 0 } else { l - 1 }, y)?;
        Some(hx.min(hy))
    } else {
        None
    }
}

struct LevelView<'a> {
    sys: &'a SosSystem,
    eta: &'a HeightField,
    h: i32,
}

impl LevelView<'_> {
    fn high(&self, s: (i64, i64)) -> bool {
        extended_height(self.sys, self.eta, s.0, s.1).is_some_and(|v| v >= self.h)
    }

    fn in_box(&self, s: (i64, i64)) -> bool {
        self.sys.lattice().contains(s.0, s.1)
    }

    fn separating(&self, v: (i64, i64), arm: usize) -> bool {
        let [p, q] = arm_bond(v, arm).separated_sites();
        self.high(p) != self.high(q)
    }

    fn included(&self, v: (i64, i64), arm: usize) -> bool {
        let [p, q] = arm_bond(v, arm).separated_sites();
        (self.in_box(p) || self.in_box(q)) && self.high(p) != self.high(q)
    }

    fn next_arm(&self, v: (i64, i64), incoming: usize) -> usize {
        let sep: Vec<usize> = (0..4).filter(|&a| self.separating(v, a)).collect();
        if sep.len() == 4 {
            PARTNER[incoming]
        } else {
            *sep.iter().find(|&&a| a != incoming).expect("separating arms come in pairs")
        }
    }

    fn vertices(&self) -> impl Iterator<Item = (i64, i64)> {
        let (l, m) = (self.sys.lattice().l as i64, self.sys.lattice().m as i64);
        (0..=m).flat_map(move |j| (0..=l).map(move |i| (i, j)))
    }

    /// Trace from vertex `v` leaving through `arm` until the trace closes or
    /// hits a bond outside the traced set.
    fn trace(&self, v0: (i64, i64), arm0: usize, visited: &mut HashSet<DualBond>) -> (Vec<DualBond>, bool) {
        let first = arm_bond(v0, arm0);
        let mut bonds = vec![first];
        visited.insert(first);
        let mut v = arm_end(v0, arm0);
        let mut incoming = OPPOSITE[arm0];
        loop {
            let next = self.next_arm(v, incoming);
            let b = arm_bond(v, next);
            if b == first {
                return (bonds, true);
            }
            if !self.included(v, next) {
                return (bonds, false);
            }
            // closed traces return through `first`; anything else revisited is a bug
            assert!(visited.insert(b), "contour tracing revisited a bond");
            bonds.push(b);
            incoming = OPPOSITE[next];
            v = arm_end(v, next);
        }
    }

    fn all_traces(&self) -> Vec<(Vec<DualBond>, bool)> {
        let mut visited = HashSet::new();
        let mut out = Vec::new();
        // open traces first, from their perimeter endpoints
        for v in self.vertices() {
            for arm in 0..4 {
                if self.included(v, arm)
                    && !visited.contains(&arm_bond(v, arm))
                    && !self.included(v, self.next_arm(v, arm))
                {
                    out.push(self.trace(v, arm, &mut visited));
                }
            }
        }
        for v in self.vertices() {
            for arm in 0..4 {
                if self.included(v, arm) && !visited.contains(&arm_bond(v, arm)) {
                    out.push(self.trace(v, arm, &mut visited));
                }
            }
        }
        out
    }
}

/// Every trace (closed or open) of the level-`h` separating bonds.
pub fn geometric_contours(sys: &SosSystem, eta: &HeightField, h: i32) -> Vec<Contour> {
    let view = LevelView { sys, eta, h };
    view.all_traces().into_iter().map(|(bonds, closed)| Contour::from_bonds(h, bonds, closed)).collect()
}

/// Literal `h`-contour test: `η <= h - 1` on `Δ⁻` and `η >= h` on `Δ⁺`.
pub fn is_h_contour(sys: &SosSystem, eta: &HeightField, gamma: &Contour, h: i32) -> bool {
    if !gamma.closed || gamma.interior.is_empty() {
        return false;
    }
    let lat = sys.lattice();
    if !gamma.interior.iter().all(|&(x, y)| lat.contains(x, y)) {
        return false;
    }
    let at = |s: &(i64, i64)| extended_height(sys, eta, s.0, s.1);
    gamma.delta_plus.iter().all(|s| at(s).is_some_and(|v| v >= h))
        && gamma.delta_minus.iter().all(|s| at(s).is_none_or(|v| v < h))
}

/// All `h`-contours of `η` with interior in `Λ`.
pub fn extract_h_contours(sys: &SosSystem, eta: &HeightField, h: i32) -> Result<Vec<Contour>> {
    if sys.params().floor_mode == FloorMode::FloorAtZero && h < 1 {
        return Err(SosError::InvalidParams(format!("h = {h} must be at least 1 with a floor")));
    }
    if eta.dims() != sys.params().dims() {
        return Err(SosError::DimensionMismatch { expected: sys.params().dims(), got: eta.dims() });
    }
    let mut out: Vec<Contour> = geometric_contours(sys, eta, h)
        .into_iter()
        .filter(|c| c.closed && is_h_contour(sys, eta, c, h))
        .collect();
    out.sort_by(|a, b| a.bonds.iter().min().cmp(&b.bonds.iter().min()));
    Ok(out)
}

/// Open level lines at height `h` anchored on the perimeter of the box, as
/// induced by a boundary condition that crosses level `h`.
pub fn extract_open_contours(sys: &SosSystem, eta: &HeightField, h: i32) -> Vec<Contour> {
    geometric_contours(sys, eta, h).into_iter().filter(|c| !c.closed).collect()
}

/// `T_γ`: lower every height inside `γ` by one.
pub fn shift_map_t(sys: &SosSystem, gamma: &Contour, eta: &HeightField) -> Result<HeightField> {
    if !is_h_contour(sys, eta, gamma, gamma.h) {
        return Err(SosError::NotAContour(format!("length {} at h = {}", gamma.length(), gamma.h)));
    }
    let mut out = eta.clone();
    for &(x, y) in &gamma.interior {
        let i = sys.lattice().index(x as usize, y as usize);
        out.heights[i] -= 1;
    }
    Ok(out)
}

/// `S`: push site `v` away from zero by `h` (no-walls model only).
pub fn spike_map_s(sys: &SosSystem, v: usize, h: i32, eta: &HeightField) -> Result<HeightField> {
    if sys.params().floor_mode != FloorMode::NoWalls {
        return Err(SosError::WrongMode(sys.params().floor_mode.name()));
    }
    let mut out = eta.clone();
    let cur = out.heights[v];
    out.heights[v] = if cur >= 0 { cur + h } else { cur - h };
    Ok(out)
}

/// `U_A`: raise every site off `A` by one and send `A` to zero, where `A`
/// is a subset of the level set `{η = h}`.
pub fn raise_map_u(a: &[usize], h: i32, eta: &HeightField) -> Result<HeightField> {
    if let Some(&bad) = a.iter().find(|&&v| eta.heights.get(v) != Some(&h)) {
        return Err(SosError::NotInLevelSet(format!("site {bad} is not at height {h}")));
    }
    let set: HashSet<usize> = a.iter().copied().collect();
    let heights = eta
        .heights
        .iter()
        .enumerate()
        .map(|(v, &x)| if set.contains(&v) { 0 } else { x + 1 })
        .collect();
    Ok(HeightField { l: eta.l, m: eta.m, heights })
}

/// Axis-parallel rectangle of sites `[x0, x0 + w) x [y0, y0 + h)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: usize,
    pub y0: usize,
    pub w: usize,
    pub h: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChainMode {
    /// Heights at least `n` (the event `F₊`).
    AtLeast,
    /// Heights at most `n` (the event `F₋`).
    AtMost,
}

/// Whether a nearest-neighbour chain inside `region` joins the two shorter
/// sides with heights `>= n` (or `<= n`). Square regions are crossed left
/// to right. Returns a witness chain of site indices.
pub fn spanning_chain_exists(
    eta: &HeightField,
    region: Rect,
    n: i32,
    mode: ChainMode,
) -> Result<(bool, Option<Vec<usize>>)> {
    if region.w == 0 || region.h == 0 || region.x0 + region.w > eta.l || region.y0 + region.h > eta.m {
        return Err(SosError::InvalidParams("region must be a nonempty sub-rectangle of the box".into()));
    }
    let ok = |x: usize, y: usize| {
        let v = eta.get(x, y);
        match mode {
            ChainMode::AtLeast => v >= n,
            ChainMode::AtMost => v <= n,
        }
    };
    let horizontal = region.w >= region.h;
    let (x1, y1) = (region.x0 + region.w - 1, region.y0 + region.h - 1);
    let lat = eta.lattice();
    let mut parent: HashMap<usize, Option<usize>> = HashMap::new();
    let mut queue = VecDeque::new();
    let starts: Vec<(usize, usize)> = if horizontal {
        (region.y0..=y1).map(|y| (region.x0, y)).collect()
    } else {
        (region.x0..=x1).map(|x| (x, region.y0)).collect()
    };
    for (x, y) in starts {
        if ok(x, y) {
            let i = lat.index(x, y);
            parent.insert(i, None);
            queue.push_back((x, y));
        }
    }
    while let Some((x, y)) = queue.pop_front() {
        let done = if horizontal { x == x1 } else { y == y1 };
        if done {
            let mut chain = vec![lat.index(x, y)];
            while let Some(Some(p)) = parent.get(chain.last().unwrap()) {
                chain.push(*p);
            }
            chain.reverse();
            return Ok((true, Some(chain)));
        }
        for (nx, ny) in Lattice::neighbor_coords(x as i64, y as i64) {
            if nx < region.x0 as i64 || ny < region.y0 as i64 || nx > x1 as i64 || ny > y1 as i64 {
                continue;
            }
            let (nx, ny) = (nx as usize, ny as usize);
            let j = lat.index(nx, ny);
            if ok(nx, ny) && !parent.contains_key(&j) {
                parent.insert(j, Some(lat.index(x, y)));
                queue.push_back((nx, ny));
            }
        }
    }
    Ok((false, None))
}

/// A connected component of the nonzero-gradient dual bonds.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GradientCluster {
    pub bonds: Vec<DualBond>,
    /// Sites of `Λ` enclosed by the cluster.
    pub area: usize,
}

impl GradientCluster {
    pub fn size(&self) -> usize {
        self.bonds.len()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GradientClusterSet {
    pub clusters: Vec<GradientCluster>,
}

impl GradientClusterSet {
    /// CSV `cluster_id,size,area`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("cluster_id,size,area\n");
        for (i, c) in self.clusters.iter().enumerate() {
            s.push_str(&format!("{i},{},{}\n", c.size(), c.area));
        }
        s
    }

    pub fn all_bonds(&self) -> HashSet<DualBond> {
        self.clusters.iter().flat_map(|c| c.bonds.iter().copied()).collect()
    }
}

/// Dual bonds crossing lattice edges of `Λ` (including edges to `∂Λ`) with
/// nonzero height gradient.
pub fn gradient_bonds(sys: &SosSystem, eta: &HeightField) -> Vec<DualBond> {
    let lat = sys.lattice();
    let mut out = Vec::new();
    for y in 0..lat.m as i64 {
        for x in 0..lat.l as i64 {
            let hx = eta.get(x as usize, y as usize);
            for (nx, ny) in Lattice::neighbor_coords(x, y) {
                let inside = lat.contains(nx, ny);
                // internal edges once (east/north), boundary edges always
                if inside && !(nx == x + 1 || ny == y + 1) {
                    continue;
                }
                let hy = sys.height_at(eta, nx, ny).expect("neighbour in Λ or ∂Λ");
                if hx != hy {
                    out.push(DualBond::between_sites((x, y), (nx, ny)));
                }
            }
        }
    }
    out
}

pub fn gradient_clusters(sys: &SosSystem, eta: &HeightField) -> GradientClusterSet {
    let bonds = gradient_bonds(sys, eta);
    // union-find on bonds, joined through shared dual vertices
    let mut parent: Vec<usize> = (0..bonds.len()).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    let mut at_vertex: HashMap<(i64, i64), usize> = HashMap::new();
    for (k, b) in bonds.iter().enumerate() {
        for v in [b.a, b.b] {
            if let Some(&other) = at_vertex.get(&v) {
                let (r1, r2) = (find(&mut parent, k), find(&mut parent, other));
                parent[r1] = r2;
            } else {
                at_vertex.insert(v, k);
            }
        }
    }
    let mut groups: HashMap<usize, Vec<DualBond>> = HashMap::new();
    for (k, b) in bonds.iter().enumerate() {
        let r = find(&mut parent, k);
        groups.entry(r).or_default().push(*b);
    }
    let mut clusters: Vec<GradientCluster> = groups
        .into_values()
        .map(|mut bonds| {
            bonds.sort();
            let area = enclosed_area(sys.lattice(), &bonds);
            GradientCluster { bonds, area }
        })
        .collect();
    clusters.sort_by(|a, b| a.bonds[0].cmp(&b.bonds[0]));
    GradientClusterSet { clusters }
}

/// Sites of `Λ` not reachable from outside the box without crossing `walls`.
fn enclosed_area(lat: Lattice, walls: &[DualBond]) -> usize {
    let walls: HashSet<DualBond> = walls.iter().copied().collect();
    let (l, m) = (lat.l as i64, lat.m as i64);
    let inside = |x: i64, y: i64| (-1..=l).contains(&x) && (-1..=m).contains(&y);
    let mut seen: HashSet<(i64, i64)> = HashSet::new();
    let mut queue: VecDeque<(i64, i64)> = VecDeque::new();
    for y in -1..=m {
        for x in -1..=l {
            if !lat.contains(x, y) {
                seen.insert((x, y));
                queue.push_back((x, y));
            }
        }
    }
    while let Some((x, y)) = queue.pop_front() {
        for (nx, ny) in Lattice::neighbor_coords(x, y) {
            if inside(nx, ny)
                && !seen.contains(&(nx, ny))
                && !walls.contains(&DualBond::between_sites((x, y), (nx, ny)))
            {
                seen.insert((nx, ny));
                queue.push_back((nx, ny));
            }
        }
    }
    lat.n_sites() - seen.iter().filter(|&&(x, y)| lat.contains(x, y)).count()
}
