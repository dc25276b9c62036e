//! State space, Hamiltonian and single-site conditionals of the SOS model.
//!
//! Sites of an `L x m` box are indexed row-major: site `(x, y)` with
//! `0 <= x < L`, `0 <= y < m` has index `y * L + x`. The external boundary
//! `∂Λ` is the ring of sites at lattice distance one from the box (the four
//! corner sites are not part of it).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SosError};

/// Which heights are admissible.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FloorMode {
    /// Hard floor at 0 and ceiling at `n_plus`.
    FloorAtZero,
    /// Heights in `[-n_plus, n_plus]`.
    Symmetric,
    /// No walls; heights truncated to `[-W, W]` with `W` the configured window.
    NoWalls,
}

impl FloorMode {
    pub fn name(self) -> &'static str {
        match self {
            FloorMode::FloorAtZero => "floor-at-zero",
            FloorMode::Symmetric => "symmetric",
            FloorMode::NoWalls => "no-walls",
        }
    }
}

/// Parameters fixing one Gibbs-measure variant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Horizontal side `L`.
    pub l: usize,
    /// Vertical side `m`.
    pub m: usize,
    pub beta: f64,
    pub n_plus: i32,
    pub floor_mode: FloorMode,
    pub field_enabled: bool,
    /// The `L` in the `1/L` prefactor of the external field.
    pub field_prefactor_l: usize,
    /// Half-width `W` of the truncation window in [`FloorMode::NoWalls`];
    /// `None` means `4 * n_plus`.
    #[serde(default)]
    pub window: Option<i32>,
}

impl ModelParams {
    /// Square `L x L` box with floor at zero, no field.
    pub fn new(l: usize, beta: f64, n_plus: i32) -> Self {
        ModelParams {
            l,
            m: l,
            beta,
            n_plus,
            floor_mode: FloorMode::FloorAtZero,
            field_enabled: false,
            field_prefactor_l: l,
            window: None,
        }
    }

    pub fn with_dims(mut self, l: usize, m: usize) -> Self {
        if self.field_prefactor_l == self.l {
            self.field_prefactor_l = l;
        }
        self.l = l;
        self.m = m;
        self
    }

    pub fn with_mode(mut self, mode: FloorMode) -> Self {
        self.floor_mode = mode;
        self
    }

    pub fn with_field(mut self, enabled: bool) -> Self {
        self.field_enabled = enabled;
        self
    }

    pub fn with_field_prefactor(mut self, l: usize) -> Self {
        self.field_prefactor_l = l;
        self
    }

    pub fn with_window(mut self, w: i32) -> Self {
        self.window = Some(w);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |s: &str| Err(SosError::InvalidParams(s.to_string()));
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return bad("beta must be a positive finite number");
        }
        if self.l == 0 || self.m == 0 {
            return bad("box sides must be at least 1");
        }
        if self.n_plus < 1 {
            return bad("n_plus must be at least 1");
        }
        if self.field_prefactor_l == 0 {
            return bad("field prefactor L must be positive");
        }
        if self.floor_mode == FloorMode::Symmetric && self.field_enabled {
            return bad("the external field is only defined with a floor");
        }
        if let Some(w) = self.window {
            if w < 1 {
                return bad("no-walls window must be at least 1");
            }
        }
        if self.l * self.m > u32::MAX as usize {
            return bad("box too large");
        }
        Ok(())
    }

    pub fn n_sites(&self) -> usize {
        self.l * self.m
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.l, self.m)
    }

    /// Admissible height window `(lo, hi)`, inclusive.
    pub fn height_range(&self) -> (i32, i32) {
        match self.floor_mode {
            FloorMode::FloorAtZero => (0, self.n_plus),
            FloorMode::Symmetric => (-self.n_plus, self.n_plus),
            FloorMode::NoWalls => {
                let w = self.window.unwrap_or(4 * self.n_plus);
                (-w, w)
            }
        }
    }
}

/// `H(L) = floor(ln L / (4 beta))`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EquilibriumHeight(pub i32);

pub fn equilibrium_height(params: &ModelParams) -> EquilibriumHeight {
    let h = (params.l as f64).ln() / (4.0 * params.beta);
    EquilibriumHeight(h.floor().max(0.0) as i32)
}

/// Geometry of an `L x m` box.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Lattice {
    pub l: usize,
    pub m: usize,
}

impl Lattice {
    pub fn new(l: usize, m: usize) -> Self {
        Lattice { l, m }
    }

    pub fn n_sites(&self) -> usize {
        self.l * self.m
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.l + x
    }

    #[inline]
    pub fn coords(&self, i: usize) -> (usize, usize) {
        (i % self.l, i / self.l)
    }

    pub fn contains(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.l && (y as usize) < self.m
    }

    /// Sites of `∂Λ` in a fixed order: bottom row, top row, left column,
    /// right column.
    pub fn boundary_sites(&self) -> Vec<(i64, i64)> {
        let (l, m) = (self.l as i64, self.m as i64);
        let mut out = Vec::with_capacity(2 * (self.l + self.m));
        out.extend((0..l).map(|x| (x, -1)));
        out.extend((0..l).map(|x| (x, m)));
        out.extend((0..m).map(|y| (-1, y)));
        out.extend((0..m).map(|y| (l, y)));
        out
    }

    pub fn is_boundary(&self, x: i64, y: i64) -> bool {
        let (l, m) = (self.l as i64, self.m as i64);
        ((y == -1 || y == m) && (0..l).contains(&x)) || ((x == -1 || x == l) && (0..m).contains(&y))
    }

    /// The four lattice neighbours of `(x, y)` in the order E, N, W, S.
    pub fn neighbor_coords(x: i64, y: i64) -> [(i64, i64); 4] {
        [(x + 1, y), (x, y + 1), (x - 1, y), (x, y - 1)]
    }
}

/// Boundary condition `ξ` on `∂Λ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoundaryCondition {
    Constant { h: i32 },
    Explicit { values: BTreeMap<String, i32> },
}

impl BoundaryCondition {
    pub fn constant(h: i32) -> Self {
        BoundaryCondition::Constant { h }
    }

    /// Explicit boundary from `(x, y, h)` triples.
    pub fn explicit<I: IntoIterator<Item = (i64, i64, i32)>>(it: I) -> Self {
        BoundaryCondition::Explicit {
            values: it.into_iter().map(|(x, y, h)| (format!("{x},{y}"), h)).collect(),
        }
    }

    /// Explicit boundary evaluating `f` on every site of `∂Λ`.
    pub fn from_fn(lattice: Lattice, f: impl Fn(i64, i64) -> i32) -> Self {
        Self::explicit(lattice.boundary_sites().into_iter().map(|(x, y)| (x, y, f(x, y))))
    }

    /// Resolve to ring values in [`Lattice::boundary_sites`] order.
    pub fn resolve(&self, lattice: Lattice) -> Result<Vec<i32>> {
        let sites = lattice.boundary_sites();
        match self {
            BoundaryCondition::Constant { h } => Ok(vec![*h; sites.len()]),
            BoundaryCondition::Explicit { values } => {
                let mut parsed = BTreeMap::new();
                for (k, &h) in values {
                    let (x, y) = parse_key(k)?;
                    if !lattice.is_boundary(x, y) {
                        return Err(SosError::ExtraBoundarySite(x, y));
                    }
                    parsed.insert((x, y), h);
                }
                sites
                    .iter()
                    .map(|&(x, y)| parsed.get(&(x, y)).copied().ok_or(SosError::MissingBoundarySite(x, y)))
                    .collect()
            }
        }
    }
}

fn parse_key(k: &str) -> Result<(i64, i64)> {
    let bad = || SosError::Format(format!("bad boundary key {k:?}, expected \"x,y\""));
    let (a, b) = k.split_once(',').ok_or_else(bad)?;
    Ok((a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?))
}

/// Integer height configuration `η` on the box.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HeightField {
    pub l: usize,
    pub m: usize,
    pub heights: Vec<i32>,
}

impl HeightField {
    pub fn constant(l: usize, m: usize, h: i32) -> Self {
        HeightField { l, m, heights: vec![h; l * m] }
    }

    pub fn from_vec(l: usize, m: usize, heights: Vec<i32>) -> Result<Self> {
        if heights.len() != l * m {
            return Err(SosError::Format(format!(
                "expected {} heights for {l}x{m}, got {}",
                l * m,
                heights.len()
            )));
        }
        Ok(HeightField { l, m, heights })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.l, self.m)
    }

    pub fn lattice(&self) -> Lattice {
        Lattice::new(self.l, self.m)
    }

    pub fn len(&self) -> usize {
        self.heights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heights.is_empty()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> i32 {
        self.heights[y * self.l + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, h: i32) {
        self.heights[y * self.l + x] = h;
    }

    pub fn mean(&self) -> f64 {
        self.heights.iter().map(|&h| h as f64).sum::<f64>() / self.heights.len() as f64
    }

    /// Pointwise `self <= other`.
    pub fn le(&self, other: &HeightField) -> bool {
        self.heights.iter().zip(&other.heights).all(|(a, b)| a <= b)
    }

    pub fn check_admissible(&self, params: &ModelParams) -> Result<()> {
        if self.dims() != params.dims() {
            return Err(SosError::DimensionMismatch { expected: params.dims(), got: self.dims() });
        }
        let (lo, hi) = params.height_range();
        match self.heights.iter().position(|&h| h < lo || h > hi) {
            Some(site) => Err(SosError::Inadmissible { site, height: self.heights[site], lo, hi }),
            None => Ok(()),
        }
    }
}

/// A lattice neighbour: either a site of `Λ` or a fixed boundary height.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Neighbor {
    Site(u32),
    Fixed(i32),
}

/// Probability vector over the heights `lo, lo+1, ...`.
#[derive(Clone, Debug, PartialEq)]
pub struct HeightDistribution {
    pub lo: i32,
    pub probs: Vec<f64>,
}

impl HeightDistribution {
    pub fn prob(&self, k: i32) -> f64 {
        let i = k - self.lo;
        if i < 0 {
            return 0.0;
        }
        self.probs.get(i as usize).copied().unwrap_or(0.0)
    }

    pub fn cdf(&self) -> Vec<f64> {
        let mut acc = 0.0;
        self.probs
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect()
    }
}

/// A fully resolved model: parameters, boundary ring, neighbour table and
/// weight tables. Immutable once built.
#[derive(Clone, Debug)]
pub struct SosSystem {
    params: ModelParams,
    boundary: BoundaryCondition,
    lattice: Lattice,
    ring: Vec<i32>,
    neighbors: Vec<[Neighbor; 4]>,
    lo: i32,
    hi: i32,
    /// `exp(-beta d)` for `d = 0..=4 (hi - lo)`.
    exp_table: Vec<f64>,
    /// Per-height field contribution `f(k) / L_f` (zero when disabled).
    field_log: Vec<f64>,
    field_factor: Vec<f64>,
}

impl SosSystem {
    pub fn new(params: ModelParams, boundary: BoundaryCondition) -> Result<Self> {
        params.validate()?;
        let lattice = Lattice::new(params.l, params.m);
        let ring = boundary.resolve(lattice)?;
        let ring_index: BTreeMap<(i64, i64), usize> =
            lattice.boundary_sites().into_iter().enumerate().map(|(i, s)| (s, i)).collect();
        let neighbors = (0..lattice.n_sites())
            .map(|i| {
                let (x, y) = lattice.coords(i);
                Lattice::neighbor_coords(x as i64, y as i64).map(|(nx, ny)| {
                    if lattice.contains(nx, ny) {
                        Neighbor::Site(lattice.index(nx as usize, ny as usize) as u32)
                    } else {
                        Neighbor::Fixed(ring[ring_index[&(nx, ny)]])
                    }
                })
            })
            .collect();
        let (lo, hi) = params.height_range();
        let span = (hi - lo) as usize;
        let exp_table = (0..=4 * span).map(|d| (-params.beta * d as f64).exp()).collect();
        let field_log: Vec<f64> = (lo..=hi)
            .map(|k| {
                if params.field_enabled {
                    field_value(k, &params) / params.field_prefactor_l as f64
                } else {
                    0.0
                }
            })
            .collect();
        let field_factor = field_log.iter().map(|f| f.exp()).collect();
        Ok(SosSystem {
            params,
            boundary,
            lattice,
            ring,
            neighbors,
            lo,
            hi,
            exp_table,
            field_log,
            field_factor,
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn boundary(&self) -> &BoundaryCondition {
        &self.boundary
    }

    pub fn lattice(&self) -> Lattice {
        self.lattice
    }

    pub fn n_sites(&self) -> usize {
        self.lattice.n_sites()
    }

    /// Boundary heights in [`Lattice::boundary_sites`] order.
    pub fn ring(&self) -> &[i32] {
        &self.ring
    }

    pub fn neighbors(&self, x: usize) -> &[Neighbor; 4] {
        &self.neighbors[x]
    }

    pub fn height_range(&self) -> (i32, i32) {
        (self.lo, self.hi)
    }

    /// Lowest admissible configuration (all `lo`).
    pub fn bottom(&self) -> HeightField {
        HeightField::constant(self.lattice.l, self.lattice.m, self.lo)
    }

    /// Highest admissible configuration (all `hi`).
    pub fn top(&self) -> HeightField {
        HeightField::constant(self.lattice.l, self.lattice.m, self.hi)
    }

    /// Height of `(x, y)` where the point may be in `Λ` or on `∂Λ`.
    pub fn height_at(&self, eta: &HeightField, x: i64, y: i64) -> Option<i32> {
        if self.lattice.contains(x, y) {
            Some(eta.get(x as usize, y as usize))
        } else if self.lattice.is_boundary(x, y) {
            let (l, m) = (self.lattice.l as i64, self.lattice.m as i64);
            let idx = if y == -1 {
                x
            } else if y == m {
                l + x
            } else if x == -1 {
                2 * l + y
            } else {
                2 * l + m + y
            };
            Some(self.ring[idx as usize])
        } else {
            None
        }
    }

    fn check_dims(&self, eta: &HeightField) -> Result<()> {
        if eta.dims() != self.lattice_dims() {
            return Err(SosError::DimensionMismatch { expected: self.lattice_dims(), got: eta.dims() });
        }
        Ok(())
    }

    fn lattice_dims(&self) -> (usize, usize) {
        (self.lattice.l, self.lattice.m)
    }

    /// Integer SOS energy with the resolved boundary.
    pub fn energy(&self, heights: &[i32]) -> i64 {
        let mut e = 0i64;
        for (x, nb) in self.neighbors.iter().enumerate() {
            let hx = heights[x];
            for n in nb {
                match *n {
                    // each internal bond seen from both ends; count once
                    Neighbor::Site(y) if (y as usize) > x => e += (hx - heights[y as usize]).abs() as i64,
                    Neighbor::Site(_) => {}
                    Neighbor::Fixed(h) => e += (hx - h).abs() as i64,
                }
            }
        }
        e
    }

    pub fn hamiltonian(&self, eta: &HeightField) -> Result<f64> {
        self.check_dims(eta)?;
        Ok(self.energy(&eta.heights) as f64)
    }

    /// Field contribution `(1/L_f) sum_y f_y(η_y)`; zero when disabled.
    pub fn field_term(&self, heights: &[i32]) -> f64 {
        if !self.params.field_enabled {
            return 0.0;
        }
        heights.iter().map(|&h| self.field_log[(h - self.lo) as usize]).sum()
    }

    /// Unnormalised log Gibbs weight. Panics-free only for admissible
    /// heights; use [`SosSystem::log_weight`] for checked input.
    pub fn log_weight_unchecked(&self, heights: &[i32]) -> f64 {
        -self.params.beta * self.energy(heights) as f64 + self.field_term(heights)
    }

    pub fn log_weight(&self, eta: &HeightField) -> Result<f64> {
        eta.check_admissible(&self.params)?;
        Ok(self.log_weight_unchecked(&eta.heights))
    }

    /// Heights of the four neighbours of site `x`.
    #[inline]
    pub fn env(&self, x: usize, heights: &[i32]) -> [i32; 4] {
        self.neighbors[x].map(|n| match n {
            Neighbor::Site(y) => heights[y as usize],
            Neighbor::Fixed(h) => h,
        })
    }

    /// Conditional law at `x` given the rest of `η`.
    pub fn conditional(&self, x: usize, eta: &HeightField) -> HeightDistribution {
        self.conditional_env(&self.env(x, &eta.heights), self.lo, self.hi)
    }

    /// Conditional law for neighbour heights `env`, restricted to `[a, b]`.
    pub fn conditional_env(&self, env: &[i32; 4], a: i32, b: i32) -> HeightDistribution {
        let emin = self.min_local_energy(env, a, b);
        let mut w: Vec<f64> = (a..=b).map(|k| self.local_weight(env, k, emin)).collect();
        let total: f64 = w.iter().sum();
        for p in &mut w {
            *p /= total;
        }
        HeightDistribution { lo: a, probs: w }
    }

    #[inline]
    fn local_energy(env: &[i32; 4], k: i32) -> i32 {
        (k - env[0]).abs() + (k - env[1]).abs() + (k - env[2]).abs() + (k - env[3]).abs()
    }

    /// Minimum of the convex local energy over `[a, b]`, attained at the
    /// median of the environment clamped into the window.
    #[inline]
    fn min_local_energy(&self, env: &[i32; 4], a: i32, b: i32) -> i32 {
        let mut s = *env;
        s.sort_unstable();
        Self::local_energy(env, s[1].clamp(a, b))
    }

    #[inline]
    fn local_weight(&self, env: &[i32; 4], k: i32, emin: i32) -> f64 {
        let d = (Self::local_energy(env, k) - emin) as usize;
        // boundary heights far outside the window can push d past the table
        let e = match self.exp_table.get(d) {
            Some(&v) => v,
            None => (-self.params.beta * d as f64).exp(),
        };
        e * self.field_factor[(k - self.lo) as usize]
    }

    /// Inverse-CDF draw from the conditional restricted to `[a, b]`:
    /// the smallest `k` with `CDF(k) >= u`.
    #[inline]
    pub fn sample_env(&self, env: &[i32; 4], u: f64, a: i32, b: i32) -> i32 {
        let emin = self.min_local_energy(env, a, b);
        let mut total = 0.0;
        for k in a..=b {
            total += self.local_weight(env, k, emin);
        }
        let target = u * total;
        let mut acc = 0.0;
        for k in a..b {
            acc += self.local_weight(env, k, emin);
            if acc >= target {
                return k;
            }
        }
        b
    }

    /// Heat-bath draw at site `x` from the full conditional.
    #[inline]
    pub fn sample_site(&self, x: usize, heights: &[i32], u: f64) -> i32 {
        self.sample_env(&self.env(x, heights), u, self.lo, self.hi)
    }
}

/// `f_y(k) = sum_{j=1}^{n+ - H} e^{-beta j} 1{k <= H + j}` with `H` the
/// equilibrium height of the ambient box of side `field_prefactor_l`.
fn field_value(k: i32, params: &ModelParams) -> f64 {
    let ambient = params.clone().with_dims(params.field_prefactor_l, params.field_prefactor_l);
    let h = equilibrium_height(&ambient).0;
    (1..=(params.n_plus - h))
        .filter(|&j| k <= h + j)
        .map(|j| (-params.beta * j as f64).exp())
        .sum()
}

/// SOS Hamiltonian of `η` with boundary `ξ`.
pub fn hamiltonian(eta: &HeightField, xi: &BoundaryCondition) -> Result<f64> {
    let lattice = eta.lattice();
    let ring = xi.resolve(lattice)?;
    let ring_index: BTreeMap<(i64, i64), i32> = lattice.boundary_sites().into_iter().zip(ring).collect();
    let mut e = 0i64;
    for y in 0..eta.m as i64 {
        for x in 0..eta.l as i64 {
            let h = eta.get(x as usize, y as usize) as i64;
            // east and north bonds inside, all four to the ring
            for (nx, ny) in Lattice::neighbor_coords(x, y) {
                if lattice.contains(nx, ny) {
                    if nx == x + 1 || ny == y + 1 {
                        e += (h - eta.get(nx as usize, ny as usize) as i64).abs();
                    }
                } else {
                    e += (h - ring_index[&(nx, ny)] as i64).abs();
                }
            }
        }
    }
    Ok(e as f64)
}

/// External field `f_y(k)` of the floored model.
pub fn external_field_site(k: i32, params: &ModelParams) -> Result<f64> {
    if params.floor_mode == FloorMode::Symmetric {
        return Err(SosError::WrongMode("symmetric"));
    }
    Ok(field_value(k, params))
}

/// `-beta H(η, ξ) + (1/L_f) sum_y f_y(η_y)`, the field term only when enabled.
pub fn log_gibbs_weight(eta: &HeightField, xi: &BoundaryCondition, params: &ModelParams) -> Result<f64> {
    SosSystem::new(params.clone(), xi.clone())?.log_weight(eta)
}

/// Conditional law of `η_x` given all other heights.
pub fn conditional_distribution(
    x: usize,
    eta: &HeightField,
    xi: &BoundaryCondition,
    params: &ModelParams,
) -> Result<HeightDistribution> {
    let sys = SosSystem::new(params.clone(), xi.clone())?;
    sys.check_dims(eta)?;
    if x >= sys.n_sites() {
        return Err(SosError::InvalidParams(format!("site {x} outside the box")));
    }
    Ok(sys.conditional(x, eta))
}
