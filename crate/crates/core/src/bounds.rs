//! Canonical paths and congestion bounds on the relaxation time.
//!
//! Paths visit sites diagonal by diagonal, starting at the north-west corner
//! and reading each diagonal from south-west to north-east; each site is
//! moved to its target height by unit steps. Path length is the number of
//! transitions.

use std::collections::HashMap;

use serde::Serialize;

use crate::error::{Result, SosError};
use crate::exact::ExactChain;
use crate::model::HeightField;
use crate::observables::diagonal_lines_rect;

/// Site indices in canonical-path order.
pub fn site_order(l: usize, m: usize) -> Vec<usize> {
    diagonal_lines_rect(l, m).concat()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CanonicalPath {
    pub states: Vec<Vec<i32>>,
}

impl CanonicalPath {
    pub fn length(&self) -> usize {
        self.states.len() - 1
    }

    /// Consecutive pairs `(σ, σ')`.
    pub fn edges(&self) -> impl Iterator<Item = (&[i32], &[i32])> {
        self.states.windows(2).map(|w| (w[0].as_slice(), w[1].as_slice()))
    }
}

pub fn canonical_path(eta: &HeightField, target: &HeightField) -> Result<CanonicalPath> {
    if eta.dims() != target.dims() {
        return Err(SosError::DimensionMismatch { expected: eta.dims(), got: target.dims() });
    }
    let mut cur = eta.heights.clone();
    let mut states = vec![cur.clone()];
    for v in site_order(eta.l, eta.m) {
        let step = (target.heights[v] - cur[v]).signum();
        while cur[v] != target.heights[v] {
            cur[v] += step;
            states.push(cur.clone());
        }
    }
    Ok(CanonicalPath { states })
}

#[derive(Clone, Debug, Serialize)]
pub struct EdgeLoad {
    pub from: usize,
    pub to: usize,
    /// `(1/Q(a,b)) Σ |γ| π(η) π(η')` over paths through the edge.
    pub congestion: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CongestionReport {
    /// Maximum congestion over loaded edges.
    pub bound: f64,
    pub argmax: (usize, usize),
    pub edges: Vec<EdgeLoad>,
    pub good_set_size: usize,
    pub max_path_length: usize,
}

impl CongestionReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Walks the canonical path between states `i` and `j` of `chain`, calling
/// `visit(a, b, v, dir)` on each transition; returns the length.
fn walk_path(
    chain: &ExactChain,
    order: &[usize],
    powers: &[usize],
    i: usize,
    j: usize,
    mut visit: impl FnMut(usize, usize) -> Result<()>,
) -> Result<usize> {
    let (src, dst) = (chain.heights(i), chain.heights(j));
    let mut idx = i;
    let mut len = 0;
    for &v in order {
        let diff = dst[v] - src[v];
        for _ in 0..diff.abs() {
            let next = if diff > 0 { idx + powers[v] } else { idx - powers[v] };
            visit(idx, next)?;
            idx = next;
            len += 1;
        }
    }
    debug_assert_eq!(idx, j);
    Ok(len)
}

fn radix_powers(chain: &ExactChain) -> Vec<usize> {
    let n = chain.system().n_sites();
    let (lo, hi) = chain.system().height_range();
    let span = (hi - lo + 1) as usize;
    let mut p = vec![1usize; n];
    for v in 1..n {
        p[v] = p[v - 1] * span;
    }
    p
}

/// Congestion over all ordered pairs of distinct states.
pub fn congestion_bound(chain: &ExactChain) -> Result<CongestionReport> {
    congestion_in(chain, |_| true)
}

/// Congestion `W(G)` over pairs in `G`; every path must stay in `G`.
pub fn congestion_in(chain: &ExactChain, good: impl Fn(&[i32]) -> bool) -> Result<CongestionReport> {
    let n = chain.n_states();
    let in_g: Vec<bool> = (0..n).map(|i| good(&chain.heights(i))).collect();
    let members: Vec<usize> = (0..n).filter(|&i| in_g[i]).collect();
    let (l, m) = chain.system().params().dims();
    let order = site_order(l, m);
    let powers = radix_powers(chain);
    let pi = chain.pi();
    let mut load: HashMap<(usize, usize), f64> = HashMap::new();
    let mut max_len = 0;
    let mut edges = Vec::new();
    for &i in &members {
        for &j in &members {
            if i == j {
                continue;
            }
            edges.clear();
            let len = walk_path(chain, &order, &powers, i, j, |a, b| {
                if !in_g[b] {
                    return Err(SosError::PathLeavesGoodSet);
                }
                edges.push((a, b));
                Ok(())
            })?;
            max_len = max_len.max(len);
            let w = len as f64 * pi[i] * pi[j];
            for e in &edges {
                *load.entry(*e).or_default() += w;
            }
        }
    }
    let mut out: Vec<EdgeLoad> = Vec::with_capacity(load.len());
    for ((a, b), s) in load {
        let q = pi[a] * chain.p(a, b);
        if q == 0.0 {
            return Err(SosError::ZeroProbabilityEdge(a));
        }
        out.push(EdgeLoad { from: a, to: b, congestion: s / q });
    }
    out.sort_by(|x, y| (x.from, x.to).cmp(&(y.from, y.to)));
    let best = out.iter().max_by(|x, y| x.congestion.total_cmp(&y.congestion));
    let (bound, argmax) = best.map_or((0.0, (0, 0)), |e| (e.congestion, (e.from, e.to)));
    Ok(CongestionReport { bound, argmax, edges: out, good_set_size: members.len(), max_path_length: max_len })
}

#[derive(Clone, Debug, Serialize)]
pub struct GoodSetReport {
    pub w_g: f64,
    pub t: u64,
    pub p_min: f64,
    /// Supplied `α`, used in the bound.
    pub alpha: f64,
    /// `min_x P^T(x, G)`, computed exactly.
    pub alpha_certified: f64,
    /// Whether the supplied `α` is at most the certified one.
    pub alpha_valid: bool,
    pub bound: f64,
}

/// Smallest positive entry of the kernel.
pub fn p_min(chain: &ExactChain) -> f64 {
    (0..chain.n_states())
        .flat_map(|i| chain.row(i).iter().map(|e| e.1))
        .filter(|&p| p > 0.0)
        .fold(f64::INFINITY, f64::min)
}

/// `min_x P^T(x, G)`.
pub fn certify_alpha(chain: &ExactChain, good: impl Fn(&[i32]) -> bool, t: u64) -> f64 {
    let n = chain.n_states();
    let in_g: Vec<bool> = (0..n).map(|i| good(&chain.heights(i))).collect();
    (0..n)
        .map(|x| {
            let mut mu = chain.point_mass(x);
            for _ in 0..t {
                mu = chain.step(&mu);
            }
            mu.iter().zip(&in_g).filter(|(_, &g)| g).map(|(p, _)| p).sum::<f64>()
        })
        .fold(f64::INFINITY, f64::min)
}

/// `(6/α)(T²/p_min + W(G)/α)`.
pub fn good_set_bound(
    chain: &ExactChain,
    good: impl Fn(&[i32]) -> bool + Copy,
    t: u64,
    alpha: f64,
) -> Result<GoodSetReport> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(SosError::InvalidParams(format!("alpha = {alpha} must lie in (0, 1]")));
    }
    let w_g = congestion_in(chain, good)?.bound;
    let p_min = p_min(chain);
    let alpha_certified = certify_alpha(chain, good, t);
    let tt = t as f64;
    let bound = 6.0 / alpha * (tt * tt / p_min + w_g / alpha);
    Ok(GoodSetReport { w_g, t, p_min, alpha, alpha_certified, alpha_valid: alpha <= alpha_certified + 1e-15, bound })
}

/// `L² m² n⁺ exp(7 β m n⁺)`: the closed form up to its unspecified constant.
pub fn closed_form_scale(l: usize, m: usize, beta: f64, n_plus: i32) -> f64 {
    let (l, m, n) = (l as f64, m as f64, n_plus as f64);
    l * l * m * m * n * (7.0 * beta * m * n).exp()
}

/// For the transition `σ -> σ^{x*,±}` on the path from `η` to `η'`, the
/// complementary state `σ*`: `η` on sites before `x*`, `η'` after, and
/// `σ_{x*} ± 1` at `x*`.
pub fn edge_complement(order: &[usize], eta: &[i32], target: &[i32], sigma: &[i32], x_star: usize, dir: i32) -> Vec<i32> {
    let pos = order.iter().position(|&v| v == x_star).expect("site in order");
    let mut out = vec![0; eta.len()];
    for (k, &v) in order.iter().enumerate() {
        out[v] = match k.cmp(&pos) {
            std::cmp::Ordering::Less => eta[v],
            std::cmp::Ordering::Greater => target[v],
            std::cmp::Ordering::Equal => sigma[v] + dir,
        };
    }
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct InjectivityReport {
    pub edges_checked: usize,
    pub pairs_checked: usize,
    pub collisions: usize,
}

/// For every edge, check that `(η, η') -> σ*` is injective over the pairs
/// whose canonical path uses the edge.
pub fn check_edge_encoding(chain: &ExactChain) -> InjectivityReport {
    let n = chain.n_states();
    let (l, m) = chain.system().params().dims();
    let order = site_order(l, m);
    // (edge source, site, dir) -> σ* -> first pair seen
    let mut seen: HashMap<(usize, usize, i32), HashMap<Vec<i32>, (usize, usize)>> = HashMap::new();
    let mut pairs = 0;
    let mut collisions = 0;
    for i in 0..n {
        let eta = chain.heights(i);
        for j in 0..n {
            if i == j {
                continue;
            }
            let target = chain.heights(j);
            let path = canonical_path(&chain.state(i), &chain.state(j)).expect("same dims");
            for (a, b) in path.edges() {
                let x = (0..a.len()).find(|&v| a[v] != b[v]).expect("edge changes one site");
                let dir = b[x] - a[x];
                let star = edge_complement(&order, &eta, &target, a, x, dir);
                pairs += 1;
                let key = (chain.index_of(a).expect("enumerated"), x, dir);
                let slot = seen.entry(key).or_default();
                match slot.get(&star) {
                    Some(&p) if p != (i, j) => collisions += 1,
                    Some(_) => {}
                    None => {
                        slot.insert(star, (i, j));
                    }
                }
            }
        }
    }
    InjectivityReport { edges_checked: seen.len(), pairs_checked: pairs, collisions }
}

/// CSV row set comparing bounds to the exact relaxation time.
pub fn comparison_csv(rows: &[(String, f64, f64, f64)]) -> String {
    let mut s = String::from("instance,t_rel,congestion_bound,good_set_bound\n");
    for (name, t_rel, c, g) in rows {
        s.push_str(&format!("{name},{t_rel:.10e},{c:.10e},{g:.10e}\n"));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::DEFAULT_STATE_CAP;
    use crate::model::{BoundaryCondition, ModelParams, SosSystem};

    fn chain(l: usize, m: usize, beta: f64, n: i32) -> ExactChain {
        let sys = SosSystem::new(ModelParams::new(l, beta, n).with_dims(l, m), BoundaryCondition::constant(0)).unwrap();
        ExactChain::enumerate(&sys, DEFAULT_STATE_CAP).unwrap()
    }

    #[test]
    fn path_shapes() {
        let a = HeightField::constant(3, 3, 1);
        assert_eq!(canonical_path(&a, &a).unwrap().length(), 0);
        let mut b = a.clone();
        b.heights[4] = 4;
        let p = canonical_path(&a, &b).unwrap();
        assert_eq!(p.length(), 3);
        assert!(p.edges().all(|(x, y)| x[4] + 1 == y[4]));
        // north-west corner first
        assert_eq!(site_order(3, 3)[0], 6);
        assert!(canonical_path(&a, &HeightField::constant(2, 3, 0)).is_err());
    }

    #[test]
    fn two_state_closed_form() {
        // π(0)=1/z, π(1)=e^{-4β}/z, Q = π(0)π(1); each edge carries one
        // path of length 1, so the congestion is exactly 1 = T_rel
        let c = chain(1, 1, 0.9, 1);
        let r = congestion_bound(&c).unwrap();
        assert!((r.bound - 1.0).abs() < 1e-12);
        assert_eq!(r.max_path_length, 1);
    }

    #[test]
    fn good_set_specialization() {
        let c = chain(2, 1, 1.0, 2);
        let full = congestion_bound(&c).unwrap().bound;
        let g = good_set_bound(&c, |_| true, 0, 1.0).unwrap();
        assert!((g.bound - 6.0 * full).abs() < 1e-9 * full);
        assert_eq!(g.alpha_certified, 1.0);
        assert!(good_set_bound(&c, |_| true, 0, 0.0).is_err());
        // a non-box set is not closed under canonical paths
        let diag = |h: &[i32]| h[0] == h[1];
        assert!(matches!(congestion_in(&c, diag), Err(SosError::PathLeavesGoodSet)));
    }

    #[test]
    fn encoding_injective_for_unit_ceiling_only() {
        let r = check_edge_encoding(&chain(2, 2, 1.0, 1));
        assert_eq!(r.collisions, 0);
        assert!(r.edges_checked > 0);
        let r = check_edge_encoding(&chain(1, 1, 1.0, 2));
        assert!(r.collisions > 0);
    }
}
