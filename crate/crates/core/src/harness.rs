//! Experiment presets, TOML configuration, seed fan-out and checkpoints.
//!
//! Every run is a function of `(config, seed)`. Time is reported in sweeps
//! (`|Λ|` single-site updates) unless a field says otherwise.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bounds::{certify_alpha, closed_form_scale, congestion_bound, good_set_bound, GoodSetReport};
use crate::dynamics::{coalescence_time, run_from, Observable, Predicate, RunConfig, RunRecord};
use crate::error::{Result, SosError};
use crate::exact::{ChainSummary, ExactChain, DEFAULT_STATE_CAP};
use crate::io;
use crate::model::{equilibrium_height, BoundaryCondition, FloorMode, HeightField, ModelParams, SosSystem};
use crate::observables::{fluctuation_counts, level_occupied, omega_a_member};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Preset {
    Staircase,
    CeilingFall,
    FloorVsNoFloor,
    EquilibriumProfile,
    OracleSuite,
    BoundsSuite,
    Custom,
}

/// Model section of a config file; omitted fields take the usual defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub l: usize,
    #[serde(default)]
    pub m: Option<usize>,
    pub beta: f64,
    pub n_plus: i32,
    #[serde(default = "default_floor_mode")]
    pub floor_mode: FloorMode,
    #[serde(default)]
    pub field_enabled: bool,
    #[serde(default)]
    pub field_prefactor_l: Option<usize>,
    #[serde(default)]
    pub window: Option<i32>,
}

fn default_floor_mode() -> FloorMode {
    FloorMode::FloorAtZero
}

impl ModelSpec {
    pub fn params(&self) -> ModelParams {
        let mut p = ModelParams::new(self.l, self.beta, self.n_plus)
            .with_dims(self.l, self.m.unwrap_or(self.l))
            .with_mode(self.floor_mode)
            .with_field(self.field_enabled);
        if let Some(f) = self.field_prefactor_l {
            p = p.with_field_prefactor(f);
        }
        p.window = self.window;
        p
    }

    pub fn from_params(p: &ModelParams) -> Self {
        ModelSpec {
            l: p.l,
            m: Some(p.m),
            beta: p.beta,
            n_plus: p.n_plus,
            floor_mode: p.floor_mode,
            field_enabled: p.field_enabled,
            field_prefactor_l: Some(p.field_prefactor_l),
            window: p.window,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StaircaseOptions {
    /// Heights `h` whose occupancy events `#{η >= h} > fraction |Λ|` are timed.
    pub levels: Vec<i32>,
    /// Optional `a` grid for the `Ω_a` events.
    pub a_grid: Vec<f64>,
    pub fraction: f64,
    /// Ratio between consecutive log-grid sample times.
    pub log_ratio: f64,
}

impl Default for StaircaseOptions {
    fn default() -> Self {
        StaircaseOptions { levels: vec![1, 2], a_grid: vec![0.25, 0.5, 0.75], fraction: 0.9, log_ratio: 1.1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CeilingOptions {
    pub start_height: i32,
    pub window_sweeps: u64,
    pub band: [f64; 2],
    /// Latest sweep at which the windowed mean may enter the band.
    pub entry_deadline_sweeps: u64,
    /// Sweeps the windowed mean must then stay in the band.
    pub hold_sweeps: u64,
}

impl Default for CeilingOptions {
    fn default() -> Self {
        CeilingOptions {
            start_height: 10,
            window_sweeps: 100,
            band: [0.5, 1.5],
            entry_deadline_sweeps: 10_000,
            hold_sweeps: 10_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareOptions {
    pub sides: Vec<usize>,
}

impl Default for CompareOptions {
    fn default() -> Self {
        CompareOptions { sides: vec![8, 12, 16] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProfileOptions {
    pub burn_in_sweeps: u64,
    pub samples: u64,
    pub gap_sweeps: u64,
}

impl Default for ProfileOptions {
    fn default() -> Self {
        ProfileOptions { burn_in_sweeps: 2_000, samples: 200, gap_sweeps: 10 }
    }
}

fn default_boundary() -> BoundaryCondition {
    BoundaryCondition::constant(0)
}
fn default_seeds() -> Vec<u64> {
    vec![0]
}
fn default_budget() -> u64 {
    1_000_000
}
fn default_one() -> u64 {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub preset: Preset,
    pub model: ModelSpec,
    #[serde(default = "default_boundary")]
    pub boundary: BoundaryCondition,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Maximum sweeps per run.
    #[serde(default = "default_budget")]
    pub budget_sweeps: u64,
    #[serde(default = "default_one")]
    pub sample_every_sweeps: u64,
    /// Initial constant height for custom runs (default: the bottom state).
    #[serde(default)]
    pub start_height: Option<i32>,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub checkpoint_every_sweeps: Option<u64>,
    #[serde(default)]
    pub staircase: StaircaseOptions,
    #[serde(default)]
    pub ceiling_fall: CeilingOptions,
    #[serde(default)]
    pub compare: CompareOptions,
    #[serde(default)]
    pub profile: ProfileOptions,
}

impl ExperimentConfig {
    pub fn preset(preset: Preset) -> Self {
        let model = |l, beta, n_plus| ModelSpec::from_params(&ModelParams::new(l, beta, n_plus));
        let mut c = ExperimentConfig {
            preset,
            model: model(32, 0.8, 5),
            boundary: default_boundary(),
            seeds: vec![0],
            budget_sweeps: default_budget(),
            sample_every_sweeps: 1,
            start_height: None,
            out_dir: None,
            checkpoint_every_sweeps: None,
            staircase: StaircaseOptions::default(),
            ceiling_fall: CeilingOptions::default(),
            compare: CompareOptions::default(),
            profile: ProfileOptions::default(),
        };
        match preset {
            Preset::Staircase => {
                c.model = model(256, 0.6, 10);
                c.seeds = (0..10).collect();
                c.budget_sweeps = 1_000;
            }
            Preset::CeilingFall => {
                c.model = model(64, 0.9, 10);
                c.seeds = (0..10).collect();
                c.budget_sweeps = 20_000;
            }
            Preset::FloorVsNoFloor => {
                c.model = model(8, 1.0, 4);
                c.seeds = (0..25).collect();
            }
            Preset::EquilibriumProfile => {
                c.model = model(64, 1.0, 10);
            }
            Preset::OracleSuite | Preset::BoundsSuite => {
                c.model = model(2, 1.0, 2);
            }
            Preset::Custom => c.budget_sweeps = 1_000,
        }
        c
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let c: ExperimentConfig = toml::from_str(s).map_err(|e| SosError::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path)?;
        Self::from_toml_str(&s)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| SosError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |s: &str| Err(SosError::Config(s.to_string()));
        self.model.params().validate().map_err(|e| SosError::Config(e.to_string()))?;
        if self.seeds.is_empty() {
            return bad("at least one seed is required");
        }
        if self.sample_every_sweeps == 0 {
            return bad("sample_every_sweeps must be at least 1");
        }
        if self.checkpoint_every_sweeps == Some(0) {
            return bad("checkpoint_every_sweeps must be at least 1");
        }
        let s = &self.staircase;
        if !(s.fraction > 0.0 && s.fraction < 1.0) || !(s.log_ratio > 1.0) {
            return bad("staircase fraction must lie in (0, 1) and log_ratio exceed 1");
        }
        if s.a_grid.iter().any(|&a| !(a > 0.0 && a < 1.0)) {
            return bad("every a in a_grid must lie in (0, 1)");
        }
        let cf = &self.ceiling_fall;
        if cf.window_sweeps == 0 || cf.band[0] > cf.band[1] {
            return bad("ceiling_fall needs a positive window and an ordered band");
        }
        if self.compare.sides.is_empty() || self.compare.sides.contains(&0) {
            return bad("compare.sides must list positive box sides");
        }
        Ok(())
    }

    pub fn system(&self) -> Result<SosSystem> {
        SosSystem::new(self.model.params(), self.boundary.clone())
    }

    /// Hex digest of the canonical JSON encoding, ignoring where output goes.
    pub fn config_hash(&self) -> String {
        let mut c = self.clone();
        c.out_dir = None;
        let json = serde_json::to_string(&c).expect("config serializes");
        let d = Sha256::digest(json.as_bytes());
        d.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

/// Map `f` over `items` on a pool of scoped threads; results keep input order.
pub fn par_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(items.len()).max(1);
    let next = AtomicUsize::new(0);
    let out: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                out.lock().unwrap()[i] = Some(r);
            });
        }
    });
    out.into_inner().unwrap().into_iter().map(|r| r.expect("every item mapped")).collect()
}

/// Geometric grid of step counts in `[1, max]` (plus 0), deduplicated.
pub fn log_grid(max: u64, ratio: f64) -> Vec<u64> {
    let mut out = vec![0];
    let mut t = 1.0f64;
    while (t as u64) <= max {
        let s = t as u64;
        if *out.last().unwrap() != s {
            out.push(s);
        }
        t = (t * ratio).max(t + 1.0);
    }
    if *out.last().unwrap() != max {
        out.push(max);
    }
    out
}

fn require_floor(sys: &SosSystem, what: &str) -> Result<()> {
    if sys.params().floor_mode != FloorMode::FloorAtZero {
        return Err(SosError::Config(format!("{what} requires the floored model")));
    }
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
pub struct StaircaseRun {
    pub seed: u64,
    /// Hitting times in sweeps, `None` when the budget ran out first.
    pub tau_sweeps: BTreeMap<String, Option<f64>>,
    #[serde(skip)]
    pub record: RunRecord,
}

pub fn level_name(h: i32) -> String {
    format!("level_{h}")
}

/// Rise from the all-zero state; mean height on a log-time grid and hitting
/// times of the level and `Ω_a` events.
pub fn run_staircase(cfg: &ExperimentConfig) -> Result<Vec<StaircaseRun>> {
    cfg.validate()?;
    let sys = cfg.system()?;
    require_floor(&sys, "the staircase preset")?;
    let n = sys.n_sites() as u64;
    let steps = cfg.budget_sweeps * n;
    let opts = cfg.staircase.clone();
    let params = sys.params().clone();
    let times = log_grid(steps, opts.log_ratio);
    let runs = par_map(&cfg.seeds, |&seed| {
        let mut rc = RunConfig::new(seed, steps, n as usize).observe(Observable::mean_height());
        rc.sample_times = Some(times.clone());
        for &h in &opts.levels {
            let f = opts.fraction;
            rc = rc.until(Predicate::new(level_name(h), move |e| level_occupied(e, h, f)));
        }
        for &a in &opts.a_grid {
            let (f, p) = (opts.fraction, params.clone());
            rc = rc.until(Predicate::new(format!("a_{a}"), move |e| omega_a_member(e, a, f, &p).unwrap_or(false)));
        }
        let mut eta = sys.bottom();
        let record = run_from(&sys, &mut eta, &rc, 0, &BTreeMap::new());
        let tau_sweeps =
            record.hitting_times.iter().map(|(k, v)| (k.clone(), v.map(|t| t as f64 / n as f64))).collect();
        StaircaseRun { seed, tau_sweeps, record }
    });
    Ok(runs)
}

#[derive(Clone, Debug, Serialize)]
pub struct CeilingFallRun {
    pub seed: u64,
    /// First sweep at which the windowed mean lies in the band.
    pub entry_sweep: Option<u64>,
    /// Whether it then stayed in the band for the hold period.
    pub held: bool,
    pub final_window_mean: f64,
    #[serde(skip)]
    pub record: RunRecord,
}

/// Trailing means over `w` samples; element `i` covers samples `i+1-w ..= i`.
pub fn window_means(xs: &[f64], w: usize) -> Vec<Option<f64>> {
    let mut out = Vec::with_capacity(xs.len());
    let mut acc = 0.0;
    for i in 0..xs.len() {
        acc += xs[i];
        if i >= w {
            acc -= xs[i - w];
        }
        out.push((i + 1 >= w).then(|| acc / w as f64));
    }
    out
}

/// Fall from a constant start above `H`; mean height sampled every sweep.
pub fn run_ceiling_fall(cfg: &ExperimentConfig) -> Result<Vec<CeilingFallRun>> {
    cfg.validate()?;
    let sys = cfg.system()?;
    require_floor(&sys, "the ceiling-fall preset")?;
    let o = cfg.ceiling_fall.clone();
    let start = HeightField::constant(sys.lattice().l, sys.lattice().m, o.start_height);
    start.check_admissible(sys.params())?;
    let n = sys.n_sites() as u64;
    let sweeps = cfg.budget_sweeps.min(o.entry_deadline_sweeps + o.hold_sweeps);
    Ok(par_map(&cfg.seeds, |&seed| {
        let rc = RunConfig::new(seed, sweeps * n, n as usize).observe(Observable::mean_height());
        let mut eta = start.clone();
        let record = run_from(&sys, &mut eta, &rc, 0, &BTreeMap::new());
        // sample i is taken at sweep i
        let means = window_means(&record.series["mean_height"], o.window_sweeps as usize);
        let inside = |v: Option<f64>| v.is_some_and(|x| x >= o.band[0] && x <= o.band[1]);
        let entry = (0..means.len()).find(|&i| inside(means[i])).map(|i| i as u64);
        let held = entry.is_some_and(|e| {
            e <= o.entry_deadline_sweeps
                && e + o.hold_sweeps < means.len() as u64
                && (e..=e + o.hold_sweeps).all(|i| inside(means[i as usize]))
        });
        let final_window_mean = means.last().copied().flatten().unwrap_or(f64::NAN);
        CeilingFallRun { seed, entry_sweep: entry, held, final_window_mean, record }
    }))
}

#[derive(Clone, Debug, Serialize)]
pub struct CompareRow {
    pub l: usize,
    /// Median coalescence time in sweeps; censored entries count as the budget.
    pub floored_median: f64,
    pub symmetric_median: f64,
    pub ratio: f64,
    pub floored_censored: usize,
    pub symmetric_censored: usize,
    /// More than half of the runs hit the budget, so the median is a lower bound.
    pub median_censored: bool,
    pub seeds: usize,
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Matched floored (`[0, n⁺]`) and symmetric (`[-n⁺, n⁺]`) coalescence times.
pub fn run_floor_vs_nofloor(cfg: &ExperimentConfig) -> Result<Vec<CompareRow>> {
    cfg.validate()?;
    let base = cfg.model.params();
    let mut rows = Vec::new();
    for &l in &cfg.compare.sides {
        let mut medians = Vec::new();
        let mut censored = Vec::new();
        for mode in [FloorMode::FloorAtZero, FloorMode::Symmetric] {
            let p = base.clone().with_dims(l, l).with_mode(mode).with_field(false);
            let sys = SosSystem::new(p, cfg.boundary.clone())?;
            let n = sys.n_sites() as u64;
            let budget = cfg.budget_sweeps * n;
            let times = par_map(&cfg.seeds, |&seed| coalescence_time(&sys, budget, seed));
            let times = times.into_iter().collect::<Result<Vec<_>>>()?;
            censored.push(times.iter().filter(|t| t.is_none()).count());
            let sweeps: Vec<f64> = times.iter().map(|t| t.unwrap_or(budget) as f64 / n as f64).collect();
            medians.push(median(&sweeps));
        }
        let half = cfg.seeds.len() / 2;
        rows.push(CompareRow {
            l,
            floored_median: medians[0],
            symmetric_median: medians[1],
            ratio: medians[0] / medians[1],
            floored_censored: censored[0],
            symmetric_censored: censored[1],
            median_censored: censored[0] > half || censored[1] > half,
            seeds: cfg.seeds.len(),
        });
    }
    Ok(rows)
}

pub fn compare_csv(rows: &[CompareRow]) -> String {
    let mut s = String::from("l,floored_median,symmetric_median,ratio,floored_censored,symmetric_censored,seeds\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.l, r.floored_median, r.symmetric_median, r.ratio, r.floored_censored, r.symmetric_censored, r.seeds
        ));
    }
    s
}

#[derive(Clone, Debug, Serialize)]
pub struct ProfileResult {
    pub h: i32,
    /// Aggregated `down[k]` over all samples.
    pub down: Vec<u64>,
    pub up: Vec<u64>,
    /// Height histogram `(height, count)`.
    pub histogram: Vec<(i32, u64)>,
    pub mode: i32,
    /// Fitted `r` in `N_k ≈ C e^{-r k}` over `k >= 1`.
    pub down_rate: Option<f64>,
    pub up_rate: Option<f64>,
    /// Empirical `P(η_v >= H + k)` for `k >= 1`; entry 0 is 1.
    pub tail_above: Vec<f64>,
    pub samples: u64,
}

/// Least-squares decay rate of `ln N_k` against `k` for `k >= k0` with
/// positive counts.
pub fn fit_decay_rate(counts: &[u64], k0: usize) -> Option<f64> {
    let pts: Vec<(f64, f64)> =
        counts.iter().enumerate().skip(k0).filter(|(_, &c)| c > 0).map(|(k, &c)| (k as f64, (c as f64).ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
    let (mx, my) = (sx / n, sy / n);
    let cov: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let var: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(-cov / var)
}

/// Burn in, then aggregate fluctuation counts over spaced samples from
/// every seed.
pub fn run_equilibrium_profile(cfg: &ExperimentConfig) -> Result<ProfileResult> {
    cfg.validate()?;
    let sys = cfg.system()?;
    let o = cfg.profile.clone();
    let n = sys.n_sites() as u64;
    let params = sys.params().clone();
    let h = equilibrium_height(&params).0;
    let (lo, hi) = sys.height_range();
    let per_seed = par_map(&cfg.seeds, |&seed| {
        let mut eta = HeightField::constant(sys.lattice().l, sys.lattice().m, h.clamp(lo, hi));
        let (mut down, mut up, mut hist) = (Vec::new(), Vec::new(), BTreeMap::<i32, u64>::new());
        let mut t = 0;
        for i in 0..o.samples {
            let target = (o.burn_in_sweeps + i * o.gap_sweeps) * n;
            let mut chunk = RunConfig::new(seed, target, n as usize);
            chunk.sample_times = Some(Vec::new());
            run_from(&sys, &mut eta, &chunk, t, &BTreeMap::new());
            t = target;
            let s = fluctuation_counts(&eta, &params);
            add_into(&mut down, &s.down);
            add_into(&mut up, &s.up);
            for &x in &eta.heights {
                *hist.entry(x).or_default() += 1;
            }
        }
        (down, up, hist)
    });
    let mut down = Vec::new();
    let mut up = Vec::new();
    let mut hist: BTreeMap<i32, u64> = BTreeMap::new();
    for (d, u, hgram) in per_seed {
        add_into(&mut down, &d);
        add_into(&mut up, &u);
        for (k, v) in hgram {
            *hist.entry(k).or_default() += v;
        }
    }
    let total: u64 = hist.values().sum();
    let mode = hist.iter().max_by_key(|(_, &c)| c).map_or(h, |(&k, _)| k);
    let tail_above =
        (0..up.len()).map(|k| up.iter().skip(k).sum::<u64>() as f64 / total.max(1) as f64).collect();
    Ok(ProfileResult {
        h,
        down_rate: fit_decay_rate(&down, 1),
        up_rate: fit_decay_rate(&up, 1),
        down,
        up,
        histogram: hist.into_iter().collect(),
        mode,
        tail_above,
        samples: o.samples * cfg.seeds.len() as u64,
    })
}

fn add_into<T: Copy + TryInto<u64>>(acc: &mut Vec<u64>, xs: &[T]) {
    if acc.len() < xs.len() {
        acc.resize(xs.len(), 0);
    }
    for (a, &x) in acc.iter_mut().zip(xs) {
        *a += x.try_into().unwrap_or(u64::MAX);
    }
}

/// Saved state of a single run, enough to continue it exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config_hash: String,
    pub seed: u64,
    pub step: u64,
    pub state: HeightField,
    pub record: RunRecord,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_atomic(path, serde_json::to_string(self)?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Initial state of a custom run.
pub fn custom_start(cfg: &ExperimentConfig, sys: &SosSystem) -> Result<HeightField> {
    match cfg.start_height {
        Some(h) => {
            let eta = HeightField::constant(sys.lattice().l, sys.lattice().m, h);
            eta.check_admissible(sys.params())?;
            Ok(eta)
        }
        None => Ok(sys.bottom()),
    }
}

/// Custom run for one seed with the mean height sampled every
/// `sample_every_sweeps`. With a checkpoint path, progress is saved every
/// `checkpoint_every_sweeps` and an existing checkpoint for the same config
/// and seed is resumed.
pub fn run_custom(cfg: &ExperimentConfig, seed: u64, checkpoint: Option<&Path>) -> Result<(RunRecord, HeightField)> {
    cfg.validate()?;
    let sys = cfg.system()?;
    let n = sys.n_sites() as u64;
    let total = cfg.budget_sweeps * n;
    let hash = cfg.config_hash();
    let mut rc = RunConfig::new(seed, total, n as usize).observe(Observable::mean_height());
    rc.sample_every = cfg.sample_every_sweeps * n;
    let (mut eta, mut record, mut t) = match checkpoint.filter(|p| p.exists()) {
        Some(p) => {
            let c = Checkpoint::load(p)?;
            if c.config_hash != hash || c.seed != seed {
                return Err(SosError::Config("checkpoint belongs to a different config or seed".into()));
            }
            (c.state, Some(c.record), c.step)
        }
        None => (custom_start(cfg, &sys)?, None, 0),
    };
    let every = cfg.checkpoint_every_sweeps.map(|s| s * n).filter(|_| checkpoint.is_some());
    while t < total || record.is_none() {
        let end = every.map_or(total, |e| ((t / e + 1) * e).min(total));
        rc.steps = end;
        let hit = record.as_ref().map(|r| r.hitting_times.clone()).unwrap_or_default();
        let chunk = run_from(&sys, &mut eta, &rc, t, &hit);
        match record.as_mut() {
            Some(r) => r.extend(chunk),
            None => record = Some(chunk),
        }
        t = end;
        if let Some(p) = checkpoint {
            let rec = record.clone().expect("record set");
            Checkpoint { config_hash: hash.clone(), seed, step: t, state: eta.clone(), record: rec }.save(p)?;
        }
    }
    Ok((record.expect("record set"), eta))
}

/// Small enumerable instance with the good set `{η : η_v <= good_cap}`
/// used for the good-set bound at horizon `t`.
#[derive(Clone, Debug)]
pub struct OracleInstance {
    pub name: String,
    pub sys: SosSystem,
    pub good_cap: i32,
    pub t: u64,
}

impl OracleInstance {
    pub fn new(name: &str, params: ModelParams, boundary: BoundaryCondition, good_cap: i32) -> Result<Self> {
        Ok(OracleInstance { name: name.to_string(), sys: SosSystem::new(params, boundary)?, good_cap, t: 10 })
    }

    pub fn chain(&self) -> Result<ExactChain> {
        ExactChain::enumerate(&self.sys, DEFAULT_STATE_CAP)
    }
}

/// Instances spanning `β`, shape, ceiling, mode, boundary and field.
pub fn oracle_suite() -> Result<Vec<OracleInstance>> {
    let zero = BoundaryCondition::constant(0);
    let p = ModelParams::new;
    let stepped = BoundaryCondition::from_fn(crate::Lattice::new(2, 2), |x, _| if x < 1 { 3 } else { 0 });
    Ok(vec![
        OracleInstance::new("1x1_n2_b1", p(1, 1.0, 2), zero.clone(), 1)?,
        OracleInstance::new("2x2_n2_b0.5", p(2, 0.5, 2), zero.clone(), 1)?,
        OracleInstance::new("2x2_n2_b1", p(2, 1.0, 2), zero.clone(), 1)?,
        OracleInstance::new("2x2_n2_b1.5", p(2, 1.5, 2), zero.clone(), 1)?,
        OracleInstance::new("2x1_n3_b1", p(2, 1.0, 3).with_dims(2, 1), zero.clone(), 2)?,
        OracleInstance::new("3x2_n1_b0.7", p(3, 0.7, 1).with_dims(3, 2), zero.clone(), 1)?,
        OracleInstance::new("3x3_n1_b1", p(3, 1.0, 1), zero.clone(), 1)?,
        OracleInstance::new("2x2_sym_n1_b1", p(2, 1.0, 1).with_mode(FloorMode::Symmetric), zero.clone(), 0)?,
        OracleInstance::new("2x2_n2_b1_field", p(2, 1.0, 2).with_field(true), zero, 1)?,
        OracleInstance::new("2x2_n3_b3_stepped", p(2, 3.0, 3), stepped, 2)?,
    ])
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundsRow {
    pub name: String,
    pub n_states: usize,
    pub t_rel: f64,
    pub t_mix: u64,
    pub congestion: f64,
    pub good_set: GoodSetReport,
    pub closed_form_scale: f64,
}

/// Congestion and good-set bounds against the exact relaxation time. The
/// good-set bound uses the certified `α`.
pub fn bounds_row(inst: &OracleInstance) -> Result<BoundsRow> {
    let chain = inst.chain()?;
    let spec = chain.exact_gap()?;
    let cap = inst.good_cap;
    let good = move |h: &[i32]| h.iter().all(|&x| x <= cap);
    let alpha = certify_alpha(&chain, good, inst.t);
    let p = inst.sys.params();
    Ok(BoundsRow {
        name: inst.name.clone(),
        n_states: chain.n_states(),
        t_rel: spec.t_rel,
        t_mix: chain.exact_tmix(1_000_000)?,
        congestion: congestion_bound(&chain)?.bound,
        good_set: good_set_bound(&chain, good, inst.t, alpha)?,
        closed_form_scale: closed_form_scale(p.l, p.m, p.beta, p.n_plus),
    })
}

pub fn bounds_csv(rows: &[BoundsRow]) -> String {
    let mut s = String::from("instance,n_states,t_rel,t_mix,congestion_bound,good_set_bound,alpha,closed_form_scale\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{:.10e},{},{:.10e},{:.10e},{:.10e},{:.10e}\n",
            r.name, r.n_states, r.t_rel, r.t_mix, r.congestion, r.good_set.bound, r.good_set.alpha, r.closed_form_scale
        ));
    }
    s
}

#[derive(Clone, Debug, Serialize)]
pub struct OracleRow {
    pub name: String,
    pub summary: ChainSummary,
    pub stationarity_residual: f64,
}

pub fn oracle_row(inst: &OracleInstance) -> Result<OracleRow> {
    let chain = inst.chain()?;
    Ok(OracleRow {
        name: inst.name.clone(),
        summary: chain.summary(1_000_000)?,
        stationarity_residual: chain.stationarity_residual(),
    })
}

pub fn oracle_csv(rows: &[OracleRow]) -> String {
    let mut s = String::from("instance,n_states,pi_min,gap,t_rel,t_mix,detailed_balance_residual,stationarity_residual\n");
    for r in rows {
        let c = &r.summary;
        s.push_str(&format!(
            "{},{},{:.10e},{:.10e},{:.10e},{},{:.3e},{:.3e}\n",
            r.name, c.n_states, c.pi_min, c.gap, c.t_rel, c.t_mix, c.detailed_balance_residual, r.stationarity_residual
        ));
    }
    s
}

/// Write `name` under `dir`, creating the directory.
pub fn write_output(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    io::write_atomic(&path, contents.as_bytes())?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip_and_defaults() {
        let c = ExperimentConfig::from_toml_str(
            r#"
            preset = "CeilingFall"
            seeds = [3, 4]
            [model]
            l = 16
            beta = 0.9
            n_plus = 6
            "#,
        )
        .unwrap();
        assert_eq!(c.model.params().m, 16);
        assert_eq!(c.boundary, BoundaryCondition::constant(0));
        assert_eq!(c.budget_sweeps, 1_000_000);
        assert_eq!(c.ceiling_fall, CeilingOptions::default());
        let back = ExperimentConfig::from_toml_str(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.config_hash(), c.config_hash());
    }

    #[test]
    fn config_errors() {
        let base = "preset = \"Custom\"\n[model]\nl = 4\nbeta = 1.0\n";
        assert!(matches!(ExperimentConfig::from_toml_str(base), Err(SosError::Config(_))));
        let neg = format!("{base}n_plus = 2\nextra = 1\n");
        assert!(ExperimentConfig::from_toml_str(&neg).is_err());
        let zero_beta = "preset = \"Custom\"\n[model]\nl = 4\nbeta = 0.0\nn_plus = 2\n";
        assert!(ExperimentConfig::from_toml_str(zero_beta).is_err());
        let sym_field = "preset = \"Custom\"\n[model]\nl = 4\nbeta = 1.0\nn_plus = 2\nfloor_mode = \"Symmetric\"\nfield_enabled = true\n";
        assert!(ExperimentConfig::from_toml_str(sym_field).is_err());
    }

    #[test]
    fn grids_and_windows() {
        let g = log_grid(100, 1.5);
        assert_eq!(g[..4], [0, 1, 2, 3]);
        assert_eq!(*g.last().unwrap(), 100);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
        let w = window_means(&[1.0, 2.0, 3.0, 4.0], 2);
        assert_eq!(w, vec![None, Some(1.5), Some(2.5), Some(3.5)]);
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!((fit_decay_rate(&[0, 100, 10, 1], 1).unwrap() - 10f64.ln()).abs() < 1e-12);
        assert_eq!(par_map(&[1, 2, 3], |x| x * 10), vec![10, 20, 30]);
    }

    #[test]
    fn presets_validate() {
        for p in [
            Preset::Staircase,
            Preset::CeilingFall,
            Preset::FloorVsNoFloor,
            Preset::EquilibriumProfile,
            Preset::OracleSuite,
            Preset::BoundsSuite,
            Preset::Custom,
        ] {
            ExperimentConfig::preset(p).validate().unwrap();
        }
    }

    #[test]
    fn staircase_without_equilibrium_height_stays_flat() {
        // H = 0: the surface has nothing to climb to
        let mut c = ExperimentConfig::preset(Preset::Staircase);
        c.model = ModelSpec::from_params(&ModelParams::new(8, 3.0, 3));
        c.seeds = vec![1];
        c.budget_sweeps = 50;
        c.staircase.levels = vec![1];
        let r = &run_staircase(&c).unwrap()[0];
        assert!(r.record.series["mean_height"].iter().all(|&m| m < 0.1));
        assert_eq!(r.tau_sweeps["level_1"], None);
    }
}
