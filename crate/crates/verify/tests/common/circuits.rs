//! Direct enumeration of dual circuits on the 3x3 box, with their interiors
//! and boundary layers computed geometrically.

use std::collections::{BTreeSet, HashMap};

use sos_core::contours::{extract_h_contours, DualBond};
use sos_core::{BoundaryCondition, HeightField, ModelParams, SosSystem};

pub const L: i64 = 3;

pub type V = (i64, i64);

pub fn all_bonds() -> Vec<(V, V)> {
    let mut out = Vec::new();
    for j in 0..=L {
        for i in 0..L {
            out.push(((i, j), (i + 1, j)));
        }
    }
    for i in 0..=L {
        for j in 0..L {
            out.push(((i, j), (i, j + 1)));
        }
    }
    out
}

fn other(b: (V, V), v: V) -> V {
    if b.0 == v {
        b.1
    } else {
        b.0
    }
}

/// Direction of a bond leaving `v`.
fn dir(b: (V, V), v: V) -> (i64, i64) {
    let w = other(b, v);
    (w.0 - v.0, w.1 - v.1)
}

/// Same side of the line through the vertex at 45 degrees (direction (1,1)).
fn linked(d1: (i64, i64), d2: (i64, i64)) -> bool {
    let side = |d: (i64, i64)| (d.1 - d.0).signum();
    d1.0 * d2.0 + d1.1 * d2.1 == 0 && side(d1) == side(d2)
}

pub struct Circuit {
    pub mask: u32,
    pub delta_plus: Vec<V>,
    pub delta_minus: Vec<V>,
}

/// Closed trails whose self-touching vertices are crossed in linked pairs.
pub fn enumerate_circuits(bonds: &[(V, V)]) -> Vec<Vec<usize>> {
    let mut inc: HashMap<V, Vec<usize>> = HashMap::new();
    for (k, b) in bonds.iter().enumerate() {
        inc.entry(b.0).or_default().push(k);
        inc.entry(b.1).or_default().push(k);
    }
    let mut found: Vec<Vec<usize>> = Vec::new();
    let mut seen: BTreeSet<u32> = BTreeSet::new();
    fn dfs(
        k0: usize,
        v0: V,
        cur: V,
        used: u32,
        path: &mut Vec<usize>,
        inc: &HashMap<V, Vec<usize>>,
        bonds: &[(V, V)],
        out: &mut Vec<Vec<usize>>,
    ) {
        if cur == v0 && path.len() >= 4 {
            out.push(path.clone());
        }
        for &k in &inc[&cur] {
            if k > k0 && used & (1 << k) == 0 {
                path.push(k);
                dfs(k0, v0, other(bonds[k], cur), used | (1 << k), path, inc, bonds, out);
                path.pop();
            }
        }
    }
    for k0 in 0..bonds.len() {
        let (a, b) = bonds[k0];
        let mut path = vec![k0];
        let mut local = Vec::new();
        dfs(k0, a, b, 1 << k0, &mut path, &inc, bonds, &mut local);
        for c in local {
            if valid_crossings(&c, bonds) {
                let mask = c.iter().fold(0u32, |m, &k| m | (1 << k));
                if seen.insert(mask) {
                    found.push(c);
                }
            }
        }
    }
    found
}

fn shared(b1: (V, V), b2: (V, V)) -> V {
    if b1.0 == b2.0 || b1.0 == b2.1 {
        b1.0
    } else {
        b1.1
    }
}

fn valid_crossings(c: &[usize], bonds: &[(V, V)]) -> bool {
    let n = c.len();
    let mut pairs: HashMap<V, Vec<((i64, i64), (i64, i64))>> = HashMap::new();
    for k in 0..n {
        let (b1, b2) = (bonds[c[k]], bonds[c[(k + 1) % n]]);
        let v = shared(b1, b2);
        pairs.entry(v).or_default().push((dir(b1, v), dir(b2, v)));
    }
    pairs.values().all(|ps| ps.len() == 1 || ps.iter().all(|&(d1, d2)| linked(d1, d2)))
}

pub fn geometry(c: &[usize], bonds: &[(V, V)]) -> Circuit {
    let mask = c.iter().fold(0u32, |m, &k| m | (1 << k));
    // sites whose centers are half-integers shifted; site (x, y) has center
    // (x, y) and dual vertex (i, j) sits at (i - 1/2, j - 1/2)
    let wall = |s: V, t: V| {
        c.iter().any(|&k| {
            let (p, q) = bonds[k];
            let mid = ((p.0 + q.0) as f64 / 2.0 - 0.5, (p.1 + q.1) as f64 / 2.0 - 0.5);
            let smid = ((s.0 + t.0) as f64 / 2.0, (s.1 + t.1) as f64 / 2.0);
            (mid.0 - smid.0).abs() < 1e-9 && (mid.1 - smid.1).abs() < 1e-9
        })
    };
    // vertices the circuit passes twice; the linked smoothing there cuts
    // off the north-west and south-east corners, joining the other two sites
    let mut visits: HashMap<V, usize> = HashMap::new();
    for k in 0..c.len() {
        *visits.entry(shared(bonds[c[k]], bonds[c[(k + 1) % c.len()]])).or_default() += 1;
    }
    let diagonal_open = |s: V, t: V| {
        let (lo, hi) = if s < t { (s, t) } else { (t, s) };
        hi == (lo.0 + 1, lo.1 + 1) && visits.get(&hi).copied().unwrap_or(0) == 2
    };
    // flood fill from outside over a margin-2 grid
    let range = -2..=L + 1;
    let mut reached: BTreeSet<V> = BTreeSet::new();
    let mut stack = vec![(-2, -2)];
    reached.insert((-2, -2));
    while let Some(s) = stack.pop() {
        for d in [(1, 0), (0, 1), (-1, 0), (0, -1), (1, 1), (-1, -1)] {
            let t = (s.0 + d.0, s.1 + d.1);
            let pass = if d.0 == d.1 { diagonal_open(s, t) } else { !wall(s, t) };
            if range.contains(&t.0) && range.contains(&t.1) && !reached.contains(&t) && pass {
                reached.insert(t);
                stack.push(t);
            }
        }
    }
    let interior: BTreeSet<V> = range
        .clone()
        .flat_map(|y| range.clone().map(move |x| (x, y)))
        .filter(|s| !reached.contains(s))
        .collect();
    let mut delta: BTreeSet<V> = BTreeSet::new();
    let dist_to_bond = |s: V, b: (V, V)| {
        let (p, q) = b;
        let (px, py) = (p.0 as f64 - 0.5, p.1 as f64 - 0.5);
        let (qx, qy) = (q.0 as f64 - 0.5, q.1 as f64 - 0.5);
        let (sx, sy) = (s.0 as f64, s.1 as f64);
        let cx = sx.clamp(px.min(qx), px.max(qx));
        let cy = sy.clamp(py.min(qy), py.max(qy));
        ((sx - cx).powi(2) + (sy - cy).powi(2)).sqrt()
    };
    let n = c.len();
    for y in range.clone() {
        for x in range.clone() {
            let s = (x, y);
            if c.iter().any(|&k| (dist_to_bond(s, bonds[k]) - 0.5).abs() < 1e-9) {
                delta.insert(s);
            }
            for k in 0..n {
                let (b1, b2) = (bonds[c[k]], bonds[c[(k + 1) % n]]);
                let v = shared(b1, b2);
                let (d1, d2) = (dir(b1, v), dir(b2, v));
                let orth = d1.0 * d2.0 + d1.1 * d2.1 == 0;
                if orth && !linked(d1, d2) {
                    let (vx, vy) = (v.0 as f64 - 0.5, v.1 as f64 - 0.5);
                    let d = ((x as f64 - vx).powi(2) + (y as f64 - vy).powi(2)).sqrt();
                    if (d - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-9 {
                        delta.insert(s);
                    }
                }
            }
        }
    }
    let (delta_plus, delta_minus) = delta.into_iter().partition(|s| interior.contains(s));
    assert!(interior.iter().all(|&(x, y)| (0..L).contains(&x) && (0..L).contains(&y)));
    Circuit { mask, delta_plus, delta_minus }
}

/// Outcome of comparing extraction with the enumeration on all `3^9` fields
/// at `h ∈ {1, 2}`.
pub struct Agreement {
    pub fields: usize,
    pub contours: usize,
    pub mismatches: Vec<String>,
}

pub fn compare_all_fields() -> Agreement {
    let bonds = all_bonds();
    let circuits: Vec<Circuit> = enumerate_circuits(&bonds).iter().map(|c| geometry(c, &bonds)).collect();
    let index: HashMap<DualBond, usize> =
        bonds.iter().enumerate().map(|(k, &(p, q))| (DualBond::new(p, q), k)).collect();
    let sys = SosSystem::new(ModelParams::new(3, 1.0, 2), BoundaryCondition::constant(0)).unwrap();
    let mut out = Agreement { fields: 0, contours: 0, mismatches: Vec::new() };
    for code in 0..3u32.pow(9) {
        let mut c = code;
        let heights: Vec<i32> = (0..9)
            .map(|_| {
                let d = (c % 3) as i32;
                c /= 3;
                d
            })
            .collect();
        let eta = HeightField::from_vec(3, 3, heights).unwrap();
        let at = |s: V| -> i32 {
            if (0..L).contains(&s.0) && (0..L).contains(&s.1) {
                eta.get(s.0 as usize, s.1 as usize)
            } else {
                0
            }
        };
        out.fields += 1;
        for h in 1..=2 {
            let expected: BTreeSet<u32> = circuits
                .iter()
                .filter(|c| c.delta_plus.iter().all(|&s| at(s) >= h) && c.delta_minus.iter().all(|&s| at(s) < h))
                .map(|c| c.mask)
                .collect();
            let got: BTreeSet<u32> = extract_h_contours(&sys, &eta, h)
                .unwrap()
                .iter()
                .map(|g| g.bonds.iter().fold(0u32, |m, b| m | (1 << index[b])))
                .collect();
            if got != expected {
                out.mismatches.push(format!("field {:?} at h = {h}", eta.heights));
            }
            out.contours += got.len();
        }
    }
    out
}
