//! Exact chains on tiny boxes: full enumeration of the state space, the
//! Gibbs vector, the heat-bath kernel, TV curves, mixing time and gap.
//!
//! States are indexed in mixed radix: `index = sum_v (η_v - lo) span^v`.
//! Kernel rows are stored sparsely (at most `|Λ| span` entries per row);
//! spectral computations densify when the chain is small enough.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use crate::dynamics::CensorSchedule;
use crate::error::{Result, SosError};
use crate::model::{HeightField, SosSystem};
use crate::rng::{EventStream, ROLE_AUX};

pub const DEFAULT_STATE_CAP: usize = 1 << 20;
/// Largest chain handed to the dense symmetric eigensolver.
pub const DENSE_EIGEN_LIMIT: usize = 4096;
/// Threshold defining the mixing time.
pub fn tmix_threshold() -> f64 {
    1.0 / (2.0 * std::f64::consts::E)
}

#[derive(Clone, Debug)]
pub struct ExactChain {
    sys: SosSystem,
    lo: i32,
    span: usize,
    n_sites: usize,
    n_states: usize,
    log_weights: Vec<f64>,
    pi: Vec<f64>,
    rows: Vec<Vec<(usize, f64)>>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectralInfo {
    pub gap: f64,
    pub lambda2: f64,
    pub lambda_min: f64,
    pub t_rel: f64,
    /// Eigenfunction of `λ₂` in the original coordinates.
    #[serde(skip)]
    pub eigenfunction: Vec<f64>,
}

impl ExactChain {
    pub fn enumerate(sys: &SosSystem, cap: usize) -> Result<Self> {
        let (lo, hi) = sys.height_range();
        let span = (hi - lo + 1) as usize;
        let n_sites = sys.n_sites();
        let total = (span as u128).checked_pow(n_sites as u32).unwrap_or(u128::MAX);
        if total > cap as u128 {
            return Err(SosError::CapExceeded { states: total, cap });
        }
        let n_states = total as usize;
        let mut powers = vec![1usize; n_sites];
        for v in 1..n_sites {
            powers[v] = powers[v - 1] * span;
        }
        let mut chain = ExactChain {
            sys: sys.clone(),
            lo,
            span,
            n_sites,
            n_states,
            log_weights: Vec::with_capacity(n_states),
            pi: Vec::new(),
            rows: Vec::with_capacity(n_states),
        };
        let inv_n = 1.0 / n_sites as f64;
        let mut heights = vec![lo; n_sites];
        for i in 0..n_states {
            chain.decode_into(i, &mut heights);
            chain.log_weights.push(sys.log_weight_unchecked(&heights));
            let mut row: Vec<(usize, f64)> = Vec::with_capacity(n_sites * (span - 1) + 1);
            let mut diag = 0.0;
            for v in 0..n_sites {
                let d = sys.conditional_env(&sys.env(v, &heights), lo, hi);
                let cur = heights[v];
                for (off, p) in d.probs.iter().enumerate() {
                    let k = lo + off as i32;
                    if k == cur {
                        diag += p * inv_n;
                    } else {
                        let j = (i as i64 + (k - cur) as i64 * powers[v] as i64) as usize;
                        row.push((j, p * inv_n));
                    }
                }
            }
            row.push((i, diag));
            row.sort_unstable_by_key(|e| e.0);
            chain.rows.push(row);
        }
        let max = chain.log_weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = chain.log_weights.iter().map(|lw| (lw - max).exp()).collect();
        let z: f64 = w.iter().sum();
        chain.pi = w.into_iter().map(|x| x / z).collect();
        Ok(chain)
    }

    pub fn system(&self) -> &SosSystem {
        &self.sys
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn pi(&self) -> &[f64] {
        &self.pi
    }

    pub fn pi_min(&self) -> f64 {
        self.pi.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    /// Sparse row `P(i, ·)`, sorted by column.
    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn p(&self, i: usize, j: usize) -> f64 {
        let r = &self.rows[i];
        r.binary_search_by_key(&j, |e| e.0).map_or(0.0, |k| r[k].1)
    }

    fn decode_into(&self, mut i: usize, out: &mut [i32]) {
        for h in out.iter_mut() {
            *h = self.lo + (i % self.span) as i32;
            i /= self.span;
        }
    }

    pub fn heights(&self, i: usize) -> Vec<i32> {
        let mut out = vec![0; self.n_sites];
        self.decode_into(i, &mut out);
        out
    }

    pub fn state(&self, i: usize) -> HeightField {
        let (l, m) = self.sys.params().dims();
        HeightField { l, m, heights: self.heights(i) }
    }

    pub fn index_of(&self, heights: &[i32]) -> Option<usize> {
        if heights.len() != self.n_sites {
            return None;
        }
        let mut idx = 0usize;
        for &h in heights.iter().rev() {
            let d = h - self.lo;
            if d < 0 || d as usize >= self.span {
                return None;
            }
            idx = idx * self.span + d as usize;
        }
        Some(idx)
    }

    /// Index of the all-minimum state `⊔`.
    pub fn bottom_index(&self) -> usize {
        0
    }

    /// Index of the all-maximum state `⊓`.
    pub fn top_index(&self) -> usize {
        self.n_states - 1
    }

    pub fn point_mass(&self, i: usize) -> Vec<f64> {
        let mut mu = vec![0.0; self.n_states];
        mu[i] = 1.0;
        mu
    }

    /// `μ P`.
    pub fn step(&self, mu: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_states];
        for (i, &m) in mu.iter().enumerate() {
            if m != 0.0 {
                for &(j, p) in &self.rows[i] {
                    out[j] += m * p;
                }
            }
        }
        out
    }

    pub fn tv_to_pi(&self, mu: &[f64]) -> f64 {
        tv_distance(mu, &self.pi)
    }

    pub fn stationarity_residual(&self) -> f64 {
        let next = self.step(&self.pi);
        next.iter().zip(&self.pi).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    pub fn row_sum_residual(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| (r.iter().map(|e| e.1).sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// `max |π(a) P(a, b) - π(b) P(b, a)|`.
    pub fn detailed_balance_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (a, row) in self.rows.iter().enumerate() {
            for &(b, pab) in row {
                worst = worst.max((self.pi[a] * pab - self.pi[b] * self.p(b, a)).abs());
            }
        }
        worst
    }

    /// `(t, TV(δ_start P^t, π))` for `t = 0..=horizon`.
    pub fn tv_curve(&self, start: usize, horizon: u64) -> Vec<(u64, f64)> {
        let mut mu = self.point_mass(start);
        let mut out = Vec::with_capacity(horizon as usize + 1);
        for t in 0..=horizon {
            if t > 0 {
                mu = self.step(&mu);
            }
            out.push((t, self.tv_to_pi(&mu)));
        }
        out
    }

    /// `tv[t][start]` for every start state and `t = 0..=horizon`.
    pub fn tv_all_starts(&self, horizon: u64) -> Vec<Vec<f64>> {
        let n = self.n_states;
        let mut dist: Vec<Vec<f64>> = (0..n).map(|i| self.point_mass(i)).collect();
        let mut out = Vec::with_capacity(horizon as usize + 1);
        for t in 0..=horizon {
            if t > 0 {
                dist = dist.iter().map(|mu| self.step(mu)).collect();
            }
            out.push(dist.iter().map(|mu| self.tv_to_pi(mu)).collect());
        }
        out
    }

    /// Worst-case TV over start states, `t = 0..=horizon`.
    pub fn worst_tv_curve(&self, horizon: u64) -> Vec<f64> {
        self.tv_all_starts(horizon)
            .into_iter()
            .map(|r| r.into_iter().fold(0.0, f64::max))
            .collect()
    }

    /// Smallest `t` with worst-case TV at most `1/(2e)`.
    pub fn exact_tmix(&self, max_t: u64) -> Result<u64> {
        let n = self.n_states;
        let mut dist: Vec<Vec<f64>> = (0..n).map(|i| self.point_mass(i)).collect();
        let eps = tmix_threshold();
        for t in 0..=max_t {
            if t > 0 {
                dist = dist.iter().map(|mu| self.step(mu)).collect();
            }
            if dist.iter().all(|mu| self.tv_to_pi(mu) <= eps) {
                return Ok(t);
            }
        }
        Err(SosError::InvalidParams(format!("mixing time exceeds {max_t} steps")))
    }

    /// Spectral gap `1 - λ₂` of the kernel.
    pub fn exact_gap(&self) -> Result<SpectralInfo> {
        if self.n_states == 1 {
            return Ok(SpectralInfo {
                gap: 1.0,
                lambda2: 0.0,
                lambda_min: 1.0,
                t_rel: 1.0,
                eigenfunction: vec![0.0],
            });
        }
        if self.n_states <= DENSE_EIGEN_LIMIT {
            self.dense_gap()
        } else {
            self.power_gap()
        }
    }

    fn dense_gap(&self) -> Result<SpectralInfo> {
        let n = self.n_states;
        let sq: Vec<f64> = self.pi.iter().map(|p| p.sqrt()).collect();
        let mut s = DMatrix::<f64>::zeros(n, n);
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, p) in row {
                s[(i, j)] += 0.5 * sq[i] * p / sq[j];
                s[(j, i)] += 0.5 * sq[i] * p / sq[j];
            }
        }
        let eig = SymmetricEigen::try_new(s, 1e-13, 100_000)
            .ok_or_else(|| SosError::Eigen("symmetric eigensolver did not converge".into()))?;
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let l1 = eig.eigenvalues[order[0]];
        if (l1 - 1.0).abs() > 1e-8 {
            return Err(SosError::Eigen(format!("top eigenvalue {l1} is not 1")));
        }
        let k = order[1];
        let lambda2 = eig.eigenvalues[k];
        let v = eig.eigenvectors.column(k);
        let eigenfunction = (0..n).map(|i| v[i] / sq[i]).collect();
        let gap = 1.0 - lambda2;
        Ok(SpectralInfo {
            gap,
            lambda2,
            lambda_min: eig.eigenvalues[order[n - 1]],
            t_rel: 1.0 / gap,
            eigenfunction,
        })
    }

    /// Power iteration on the symmetrized kernel with `sqrt(π)` deflated.
    /// The random-scan heat-bath kernel is positive semidefinite, so the
    /// dominant remaining eigenvalue is `λ₂`.
    fn power_gap(&self) -> Result<SpectralInfo> {
        let n = self.n_states;
        let sq: Vec<f64> = self.pi.iter().map(|p| p.sqrt()).collect();
        let mut rng = EventStream::new(0x5eed, ROLE_AUX, 1);
        let mut v: Vec<f64> = (0..n).map(|_| rng.next_uniform() - 0.5).collect();
        let deflate = |v: &mut Vec<f64>| {
            let d: f64 = v.iter().zip(&sq).map(|(a, b)| a * b).sum();
            for (x, s) in v.iter_mut().zip(&sq) {
                *x -= d * s;
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            for x in v.iter_mut() {
                *x /= norm;
            }
        };
        deflate(&mut v);
        let mut lambda = 0.0;
        for _ in 0..5_000_000 {
            let mut w = vec![0.0; n];
            for (i, row) in self.rows.iter().enumerate() {
                w[i] = row.iter().map(|&(j, p)| sq[i] * p / sq[j] * v[j]).sum();
            }
            let next: f64 = w.iter().zip(&v).map(|(a, b)| a * b).sum();
            deflate(&mut w);
            v = w;
            if (next - lambda).abs() < 1e-14 {
                lambda = next;
                let gap = 1.0 - lambda;
                return Ok(SpectralInfo {
                    gap,
                    lambda2: lambda,
                    lambda_min: f64::NAN,
                    t_rel: 1.0 / gap,
                    eigenfunction: (0..n).map(|i| v[i] / sq[i]).collect(),
                });
            }
            lambda = next;
        }
        Err(SosError::Eigen("power iteration did not converge".into()))
    }

    /// `E(f, f) = ½ Σ π(a) P(a, b) (f(a) - f(b))²`.
    pub fn dirichlet_form(&self, f: &[f64]) -> f64 {
        let mut s = 0.0;
        for (a, row) in self.rows.iter().enumerate() {
            for &(b, p) in row {
                s += self.pi[a] * p * (f[a] - f[b]).powi(2);
            }
        }
        0.5 * s
    }

    pub fn variance(&self, f: &[f64]) -> f64 {
        let mean: f64 = f.iter().zip(&self.pi).map(|(x, p)| x * p).sum();
        f.iter().zip(&self.pi).map(|(x, p)| p * (x - mean).powi(2)).sum()
    }

    /// `E(f, f) / Var(f)`; bounded below by the gap for nonconstant `f`.
    pub fn rayleigh_quotient(&self, f: &[f64]) -> f64 {
        self.dirichlet_form(f) / self.variance(f)
    }

    /// One step of the censored kernel in force at step `t`.
    pub fn censored_step(&self, mu: &[f64], schedule: &CensorSchedule, t: u64) -> Result<Vec<f64>> {
        let phase = schedule
            .phase_at(t)
            .ok_or_else(|| SosError::InvalidSchedule(format!("step {t} outside schedule horizon")))?;
        let inv_n = 1.0 / self.n_sites as f64;
        let mut out = vec![0.0; self.n_states];
        let mut heights = vec![0; self.n_sites];
        let mut power = vec![1usize; self.n_sites];
        for v in 1..self.n_sites {
            power[v] = power[v - 1] * self.span;
        }
        for (i, &m) in mu.iter().enumerate() {
            if m == 0.0 {
                continue;
            }
            self.decode_into(i, &mut heights);
            for v in 0..self.n_sites {
                let cur = heights[v];
                if !phase.sites[v] || cur < phase.a || cur > phase.b {
                    out[i] += m * inv_n;
                    continue;
                }
                let d = self.sys.conditional_env(&self.sys.env(v, &heights), phase.a, phase.b);
                for (off, p) in d.probs.iter().enumerate() {
                    let k = phase.a + off as i32;
                    let j = (i as i64 + (k - cur) as i64 * power[v] as i64) as usize;
                    out[j] += m * p * inv_n;
                }
            }
        }
        Ok(out)
    }

    /// Exact laws at each of `times` (sorted) of the censored chain from `mu0`.
    pub fn censored_laws(&self, mu0: &[f64], schedule: &CensorSchedule, times: &[u64]) -> Result<Vec<Vec<f64>>> {
        let mut mu = mu0.to_vec();
        let mut out = Vec::with_capacity(times.len());
        let mut t = 0u64;
        for &target in times {
            if target < t {
                return Err(SosError::InvalidParams("times must be sorted".into()));
            }
            while t < target {
                mu = self.censored_step(&mu, schedule, t)?;
                t += 1;
            }
            out.push(mu.clone());
        }
        Ok(out)
    }

    /// Whether `lower ⪯ upper` in the coordinatewise order.
    pub fn domination(&self, lower: &[f64], upper: &[f64]) -> DominationReport {
        let states: Vec<Vec<i32>> = (0..self.n_states).map(|i| self.heights(i)).collect();
        let le = |a: &[i32], b: &[i32]| a.iter().zip(b).all(|(x, y)| x <= y);
        // principal up-sets {η >= σ}: intersections of threshold events
        let mut principal_margin = f64::INFINITY;
        for s in &states {
            let (mut ml, mut mu) = (0.0, 0.0);
            for (k, t) in states.iter().enumerate() {
                if le(s, t) {
                    ml += lower[k];
                    mu += upper[k];
                }
            }
            principal_margin = principal_margin.min(mu - ml);
        }
        // every up-set: a monotone coupling exists iff the max flow is full
        let n = self.n_states;
        let mut net = FlowNet::new(2 * n + 2);
        let (src, snk) = (2 * n, 2 * n + 1);
        for i in 0..n {
            if lower[i] > 0.0 {
                net.add(src, i, lower[i]);
            }
            if upper[i] > 0.0 {
                net.add(n + i, snk, upper[i]);
            }
        }
        for i in (0..n).filter(|&i| lower[i] > 0.0) {
            for j in (0..n).filter(|&j| upper[j] > 0.0) {
                if le(&states[i], &states[j]) {
                    net.add(i, n + j, f64::INFINITY);
                }
            }
        }
        let flow = net.max_flow(src, snk);
        let total: f64 = lower.iter().sum();
        let flow_deficit = total - flow;
        DominationReport {
            principal_margin,
            flow_deficit,
            holds: principal_margin >= -1e-12 && flow_deficit <= 1e-9,
        }
    }

    /// Empirical TV of a visit histogram to `π`.
    pub fn empirical_tv(&self, counts: &[u64]) -> f64 {
        let total: u64 = counts.iter().sum();
        let mu: Vec<f64> = counts.iter().map(|&c| c as f64 / total as f64).collect();
        self.tv_to_pi(&mu)
    }

    pub fn summary(&self, tmix_cap: u64) -> Result<ChainSummary> {
        let spec = self.exact_gap()?;
        Ok(ChainSummary {
            n_states: self.n_states,
            pi_min: self.pi_min(),
            gap: spec.gap,
            t_rel: spec.t_rel,
            t_mix: self.exact_tmix(tmix_cap)?,
            detailed_balance_residual: self.detailed_balance_residual(),
        })
    }

    /// CSV `index,heights,pi`.
    pub fn pi_csv(&self) -> String {
        let mut s = String::from("index,heights,pi\n");
        for i in 0..self.n_states {
            let h: Vec<String> = self.heights(i).iter().map(|x| x.to_string()).collect();
            s.push_str(&format!("{i},{},{:.17e}\n", h.join(" "), self.pi[i]));
        }
        s
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ChainSummary {
    pub n_states: usize,
    pub pi_min: f64,
    pub gap: f64,
    pub t_rel: f64,
    pub t_mix: u64,
    pub detailed_balance_residual: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DominationReport {
    /// `min_σ upper(η >= σ) - lower(η >= σ)`.
    pub principal_margin: f64,
    /// Mass not routed by the best monotone coupling.
    pub flow_deficit: f64,
    pub holds: bool,
}

pub fn tv_distance(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

/// CSV `t,tv`.
pub fn tv_curve_csv(curve: &[(u64, f64)]) -> String {
    let mut s = String::from("t,tv\n");
    for (t, v) in curve {
        s.push_str(&format!("{t},{v:.17e}\n"));
    }
    s
}

/// Dinic max-flow with real capacities.
struct FlowNet {
    adj: Vec<Vec<usize>>,
    to: Vec<usize>,
    cap: Vec<f64>,
}

impl FlowNet {
    const EPS: f64 = 1e-15;

    fn new(n: usize) -> Self {
        FlowNet { adj: vec![Vec::new(); n], to: Vec::new(), cap: Vec::new() }
    }

    fn add(&mut self, u: usize, v: usize, c: f64) {
        self.adj[u].push(self.to.len());
        self.to.push(v);
        self.cap.push(c);
        self.adj[v].push(self.to.len());
        self.to.push(u);
        self.cap.push(0.0);
    }

    fn max_flow(&mut self, s: usize, t: usize) -> f64 {
        let n = self.adj.len();
        let mut flow = 0.0;
        loop {
            let mut level = vec![usize::MAX; n];
            level[s] = 0;
            let mut queue = std::collections::VecDeque::from([s]);
            while let Some(u) = queue.pop_front() {
                for &e in &self.adj[u] {
                    let v = self.to[e];
                    if self.cap[e] > Self::EPS && level[v] == usize::MAX {
                        level[v] = level[u] + 1;
                        queue.push_back(v);
                    }
                }
            }
            if level[t] == usize::MAX {
                return flow;
            }
            let mut it = vec![0usize; n];
            loop {
                let f = self.augment(s, t, f64::INFINITY, &level, &mut it);
                if f <= Self::EPS {
                    break;
                }
                flow += f;
            }
        }
    }

    fn augment(&mut self, u: usize, t: usize, limit: f64, level: &[usize], it: &mut [usize]) -> f64 {
        if u == t {
            return limit;
        }
        while it[u] < self.adj[u].len() {
            let e = self.adj[u][it[u]];
            let v = self.to[e];
            if self.cap[e] > Self::EPS && level[v] == level[u] + 1 {
                let f = self.augment(v, t, limit.min(self.cap[e]), level, it);
                if f > Self::EPS {
                    self.cap[e] -= f;
                    self.cap[e ^ 1] += f;
                    return f;
                }
            }
            it[u] += 1;
        }
        0.0
    }
}
