//! Heat-bath Glauber dynamics, the global monotone coupling and censored
//! dynamics.
//!
//! Time is discrete: one step is one single-site update, one sweep is
//! `|Λ|` steps. A continuous-time clock of rate one per site corresponds to
//! one sweep per unit of time.
//!
//! The grand coupling drives every chain with the same [`UpdateEvent`] and
//! samples by inverse CDF. Single-site conditionals are stochastically
//! increasing in the environment, so pointwise order between chains is
//! preserved.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SosError};
use crate::io;
use crate::model::{FloorMode, HeightField, SosSystem};
pub use crate::rng::UpdateEvent;
use crate::rng::{EventStream, ROLE_UPDATES};

/// Resample `η_x` at `ev.site` by inverse CDF at `ev.u`.
#[inline]
pub fn heatbath_step(sys: &SosSystem, eta: &mut HeightField, ev: UpdateEvent) {
    let k = sys.sample_site(ev.site, &eta.heights, ev.u);
    eta.heights[ev.site] = k;
}

/// One phase of a censoring schedule: during steps `t_start <= t < t_end`
/// only sites in `sites` whose height lies in `[a, b]` may be updated, and
/// they are resampled inside `[a, b]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CensorPhase {
    pub t_start: u64,
    pub t_end: u64,
    /// Membership mask over sites.
    pub sites: Vec<bool>,
    pub a: i32,
    pub b: i32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CensorSchedule {
    pub phases: Vec<CensorPhase>,
}

impl CensorSchedule {
    /// Check that phases tile `[0, T)` contiguously and windows are valid.
    pub fn new(phases: Vec<CensorPhase>, sys: &SosSystem) -> Result<Self> {
        let bad = |s: String| Err(SosError::InvalidSchedule(s));
        let (lo, hi) = sys.height_range();
        let mut t = 0;
        for (i, p) in phases.iter().enumerate() {
            if p.t_start != t || p.t_end <= p.t_start {
                return bad(format!("phase {i} does not continue the tiling at step {t}"));
            }
            if !(lo <= p.a && p.a <= p.b && p.b <= hi) {
                return bad(format!("phase {i} window [{}, {}] outside [{lo}, {hi}]", p.a, p.b));
            }
            if p.sites.len() != sys.n_sites() {
                return bad(format!("phase {i} site mask has wrong length"));
            }
            t = p.t_end;
        }
        if phases.is_empty() {
            return bad("schedule has no phases".into());
        }
        Ok(CensorSchedule { phases })
    }

    /// Single phase with every site and the full window: no censoring.
    pub fn uncensored(sys: &SosSystem, horizon: u64) -> Self {
        let (a, b) = sys.height_range();
        CensorSchedule {
            phases: vec![CensorPhase { t_start: 0, t_end: horizon, sites: vec![true; sys.n_sites()], a, b }],
        }
    }

    pub fn horizon(&self) -> u64 {
        self.phases.last().map_or(0, |p| p.t_end)
    }

    pub fn phase_at(&self, t: u64) -> Option<&CensorPhase> {
        let i = self.phases.partition_point(|p| p.t_end <= t);
        self.phases.get(i).filter(|p| p.t_start <= t)
    }
}

/// Censored update at step `t`.
pub fn censored_step(
    sys: &SosSystem,
    eta: &mut HeightField,
    ev: UpdateEvent,
    schedule: &CensorSchedule,
    t: u64,
) -> Result<()> {
    let phase = schedule
        .phase_at(t)
        .ok_or_else(|| SosError::InvalidSchedule(format!("step {t} outside schedule horizon")))?;
    let x = ev.site;
    let h = eta.heights[x];
    if !phase.sites[x] || h < phase.a || h > phase.b {
        return Ok(());
    }
    let env = sys.env(x, &eta.heights);
    eta.heights[x] = sys.sample_env(&env, ev.u, phase.a, phase.b);
    Ok(())
}

/// Chains driven by one shared update stream.
#[derive(Clone, Debug)]
pub struct CoupledFamily {
    systems: Vec<Arc<SosSystem>>,
    pub chains: Vec<HeightField>,
    pub step_count: u64,
}

impl CoupledFamily {
    /// All chains share one system.
    pub fn new(sys: Arc<SosSystem>, chains: Vec<HeightField>) -> Result<Self> {
        let systems = vec![sys; chains.len()];
        Self::with_systems(systems, chains)
    }

    /// One system per chain; systems may differ only in their boundary.
    pub fn with_systems(systems: Vec<Arc<SosSystem>>, chains: Vec<HeightField>) -> Result<Self> {
        if systems.len() != chains.len() || chains.is_empty() {
            return Err(SosError::InvalidParams("need one system per chain".into()));
        }
        let p0 = systems[0].params();
        for (s, c) in systems.iter().zip(&chains) {
            let p = s.params();
            if p.dims() != p0.dims() || p.beta != p0.beta || p.height_range() != p0.height_range() {
                return Err(SosError::InvalidParams("coupled chains must share Λ and parameters".into()));
            }
            c.check_admissible(p)?;
        }
        Ok(CoupledFamily { systems, chains, step_count: 0 })
    }

    pub fn n_sites(&self) -> usize {
        self.systems[0].n_sites()
    }

    #[inline]
    pub fn coupled_step(&mut self, ev: UpdateEvent) {
        for (sys, eta) in self.systems.iter().zip(self.chains.iter_mut()) {
            heatbath_step(sys, eta, ev);
        }
        self.step_count += 1;
    }

    /// Whether `chains[i] <= chains[j]` pointwise.
    pub fn ordered(&self, i: usize, j: usize) -> bool {
        self.chains[i].le(&self.chains[j])
    }
}

/// A named scalar observable sampled during a run.
pub struct Observable {
    pub name: String,
    pub f: Box<dyn Fn(&HeightField) -> f64 + Send + Sync>,
}

impl Observable {
    pub fn new(name: impl Into<String>, f: impl Fn(&HeightField) -> f64 + Send + Sync + 'static) -> Self {
        Observable { name: name.into(), f: Box::new(f) }
    }

    pub fn mean_height() -> Self {
        Observable::new("mean_height", |eta| eta.mean())
    }
}

/// A named hitting predicate.
pub struct Predicate {
    pub name: String,
    pub f: Box<dyn Fn(&HeightField) -> bool + Send + Sync>,
}

impl Predicate {
    pub fn new(name: impl Into<String>, f: impl Fn(&HeightField) -> bool + Send + Sync + 'static) -> Self {
        Predicate { name: name.into(), f: Box::new(f) }
    }
}

/// Sampling plan for [`run`].
pub struct RunConfig {
    pub seed: u64,
    pub steps: u64,
    /// Observables are recorded every `sample_every` steps (default: one sweep).
    pub sample_every: u64,
    /// Predicates are checked every `check_every` steps (default: one sweep).
    pub check_every: u64,
    /// Stop early once every predicate has been hit.
    pub stop_when_all_hit: bool,
    /// Explicit sample times overriding `sample_every` (e.g. a log grid).
    pub sample_times: Option<Vec<u64>>,
    pub observables: Vec<Observable>,
    pub predicates: Vec<Predicate>,
}

impl RunConfig {
    pub fn new(seed: u64, steps: u64, n_sites: usize) -> Self {
        RunConfig {
            seed,
            steps,
            sample_every: n_sites as u64,
            check_every: n_sites as u64,
            stop_when_all_hit: false,
            sample_times: None,
            observables: Vec::new(),
            predicates: Vec::new(),
        }
    }

    pub fn observe(mut self, o: Observable) -> Self {
        self.observables.push(o);
        self
    }

    pub fn until(mut self, p: Predicate) -> Self {
        self.predicates.push(p);
        self
    }

    fn is_sample_time(&self, t: u64) -> bool {
        match &self.sample_times {
            Some(ts) => ts.binary_search(&t).is_ok(),
            None => t % self.sample_every.max(1) == 0,
        }
    }
}

/// Trajectory record of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub sweep: u64,
    pub times: Vec<u64>,
    pub series: BTreeMap<String, Vec<f64>>,
    pub hitting_times: BTreeMap<String, Option<u64>>,
    pub final_step: u64,
    pub final_digest: String,
}

#[derive(Serialize)]
struct RunSummary<'a> {
    seed: u64,
    config_hash: &'a str,
    final_step: u64,
    hitting_times: &'a BTreeMap<String, Option<u64>>,
    final_state_digest: &'a str,
}

impl RunRecord {
    fn empty(cfg: &RunConfig, sweep: u64) -> Self {
        RunRecord {
            seed: cfg.seed,
            sweep,
            times: Vec::new(),
            series: cfg.observables.iter().map(|o| (o.name.clone(), Vec::new())).collect(),
            hitting_times: cfg.predicates.iter().map(|p| (p.name.clone(), None)).collect(),
            final_step: 0,
            final_digest: String::new(),
        }
    }

    /// CSV with columns `step, sweep, <observables...>`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,sweep");
        for name in self.series.keys() {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for (i, t) in self.times.iter().enumerate() {
            out.push_str(&format!("{t},{}", *t as f64 / self.sweep as f64));
            for v in self.series.values() {
                out.push_str(&format!(",{}", v[i]));
            }
            out.push('\n');
        }
        out
    }

    pub fn summary_json(&self, config_hash: &str) -> Result<String> {
        Ok(serde_json::to_string_pretty(&RunSummary {
            seed: self.seed,
            config_hash,
            final_step: self.final_step,
            hitting_times: &self.hitting_times,
            final_state_digest: &self.final_digest,
        })?)
    }

    /// Append a continuation recorded by [`run_from`].
    pub fn extend(&mut self, next: RunRecord) {
        self.times.extend(next.times);
        for (k, v) in next.series {
            self.series.entry(k).or_default().extend(v);
        }
        for (k, v) in next.hitting_times {
            let e = self.hitting_times.entry(k).or_insert(None);
            if e.is_none() {
                *e = v;
            }
        }
        self.final_step = next.final_step;
        self.final_digest = next.final_digest;
    }
}

/// Run `cfg.steps` heat-bath updates on `eta` starting at step 0.
pub fn run(sys: &SosSystem, eta: &mut HeightField, cfg: &RunConfig) -> RunRecord {
    run_from(sys, eta, cfg, 0, &BTreeMap::new())
}

/// Continue a run from step `start` (the state `eta` must be the state at
/// `start`). Samples are recorded at sample times in `(start, cfg.steps]`,
/// plus time 0 when `start == 0`; predicates already in `already_hit` are
/// not rechecked.
pub fn run_from(
    sys: &SosSystem,
    eta: &mut HeightField,
    cfg: &RunConfig,
    start: u64,
    already_hit: &BTreeMap<String, Option<u64>>,
) -> RunRecord {
    let sweep = sys.n_sites() as u64;
    let mut rec = RunRecord::empty(cfg, sweep);
    for (k, v) in already_hit {
        if v.is_some() {
            rec.hitting_times.insert(k.clone(), *v);
        }
    }
    let mut stream = EventStream::at(cfg.seed, ROLE_UPDATES, sys.n_sites(), start);
    let check_every = cfg.check_every.max(1);

    let observe = |rec: &mut RunRecord, eta: &HeightField, t: u64| {
        if cfg.is_sample_time(t) {
            rec.times.push(t);
            for o in &cfg.observables {
                rec.series.get_mut(&o.name).unwrap().push((o.f)(eta));
            }
        }
        let mut all_hit = true;
        if t % check_every == 0 {
            for p in &cfg.predicates {
                let slot = rec.hitting_times.get_mut(&p.name).unwrap();
                if slot.is_none() && (p.f)(eta) {
                    *slot = Some(t);
                }
                all_hit &= slot.is_some();
            }
        } else {
            all_hit = rec.hitting_times.values().all(Option::is_some);
        }
        all_hit && !cfg.predicates.is_empty()
    };

    let mut t = start;
    let mut done = false;
    if start == 0 {
        done = observe(&mut rec, eta, 0) && cfg.stop_when_all_hit;
    }
    while !done && t < cfg.steps {
        heatbath_step(sys, eta, stream.next_event());
        t += 1;
        done = observe(&mut rec, eta, t) && cfg.stop_when_all_hit;
    }
    rec.final_step = t;
    rec.final_digest = io::digest(eta);
    rec
}

/// First checked time (multiple of `check_every`) at which `pred` holds,
/// within `budget` steps.
pub fn hitting_time(
    sys: &SosSystem,
    eta: &mut HeightField,
    seed: u64,
    pred: impl Fn(&HeightField) -> bool,
    check_every: u64,
    budget: u64,
) -> Result<Option<u64>> {
    if check_every == 0 {
        return Err(SosError::InvalidParams("check_every must be at least 1".into()));
    }
    let mut stream = EventStream::new(seed, ROLE_UPDATES, sys.n_sites());
    if pred(eta) {
        return Ok(Some(0));
    }
    let mut t = 0;
    while t < budget {
        heatbath_step(sys, eta, stream.next_event());
        t += 1;
        if t % check_every == 0 && pred(eta) {
            return Ok(Some(t));
        }
    }
    Ok(None)
}

/// First step at which the grand-coupled chains started from the bottom
/// and top configurations agree everywhere.
pub fn coalescence_time(sys: &SosSystem, max_steps: u64, seed: u64) -> Result<Option<u64>> {
    if sys.params().floor_mode == FloorMode::NoWalls {
        return Err(SosError::WrongMode("no-walls"));
    }
    let mut low = sys.bottom();
    let mut high = sys.top();
    let mut mismatched = low.heights.iter().zip(&high.heights).filter(|(a, b)| a != b).count();
    if mismatched == 0 {
        return Ok(Some(0));
    }
    let mut stream = EventStream::new(seed, ROLE_UPDATES, sys.n_sites());
    for t in 1..=max_steps {
        let ev = stream.next_event();
        let x = ev.site;
        let before = low.heights[x] != high.heights[x];
        heatbath_step(sys, &mut low, ev);
        heatbath_step(sys, &mut high, ev);
        let after = low.heights[x] != high.heights[x];
        match (before, after) {
            (true, false) => mismatched -= 1,
            (false, true) => mismatched += 1,
            _ => {}
        }
        if mismatched == 0 {
            return Ok(Some(t));
        }
    }
    Ok(None)
}

/// Grand-coupled evolution of the bottom and top chains, returning the
/// per-step trajectory pair at the given times (used by the sandwich checks).
pub fn coupled_run(
    family: &mut CoupledFamily,
    seed: u64,
    steps: u64,
    mut visit: impl FnMut(u64, &CoupledFamily),
) {
    let mut stream = EventStream::at(seed, ROLE_UPDATES, family.n_sites(), family.step_count);
    for _ in 0..steps {
        family.coupled_step(stream.next_event());
        visit(family.step_count, family);
    }
}
