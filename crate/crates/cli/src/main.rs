use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use sos_core::contours::{extract_h_contours, extract_open_contours, gradient_clusters};
use sos_core::harness::{self, ExperimentConfig, Preset};
use sos_core::{io, BoundaryCondition, ModelParams, SosError, SosSystem};

#[derive(Parser)]
#[command(name = "sos", version, about = "SOS surface simulator and exact-chain toolkit")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML experiment config; the subcommand's preset defaults otherwise.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run a single seed instead of the configured list.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Budget in sweeps.
    #[arg(long)]
    budget: Option<u64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Plain trajectory with mean height samples; resumable.
    Sample {
        #[command(flatten)]
        common: Common,
        /// Checkpoint file, resumed when present.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Rise from the all-zero state; level hitting times on a log grid.
    Staircase(Common),
    /// Fall from a constant start above the equilibrium height.
    CeilingFall(Common),
    /// Coalescence times with and without the floor.
    CompareFloor(Common),
    /// Equilibrium fluctuation statistics.
    Profile(Common),
    /// Exact chain summaries on the small-instance suite.
    Oracle(Common),
    /// Canonical-path bounds against exact relaxation times.
    Bounds(Common),
    /// Contours of a saved height field.
    Contours {
        #[command(flatten)]
        common: Common,
        /// Height field JSON document.
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 1)]
        level: i32,
    },
}

enum Failure {
    Config(String),
    Budget(String),
    Other(String),
}

impl From<SosError> for Failure {
    fn from(e: SosError) -> Self {
        match e {
            SosError::Config(_) | SosError::InvalidParams(_) | SosError::WrongMode(_) => Failure::Config(e.to_string()),
            SosError::CapExceeded { .. } => Failure::Budget(e.to_string()),
            _ => Failure::Other(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Other(e.to_string())
    }
}

type Outcome = std::result::Result<(), Failure>;

fn load(common: &Common, preset: Preset) -> std::result::Result<ExperimentConfig, Failure> {
    let mut cfg = match &common.config {
        Some(p) => {
            let s = std::fs::read_to_string(p).map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?;
            ExperimentConfig::from_toml_str(&s)?
        }
        None => ExperimentConfig::preset(preset),
    };
    if let Some(s) = common.seed {
        cfg.seeds = vec![s];
    }
    if let Some(b) = common.budget {
        cfg.budget_sweeps = b;
    }
    if let Some(o) = &common.out {
        cfg.out_dir = Some(o.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.out_dir.clone().unwrap_or_else(|| PathBuf::from("out"))
}

fn meta(cfg: &ExperimentConfig) -> Value {
    json!({
        "preset": cfg.preset,
        "config_hash": cfg.config_hash(),
        "budget_sweeps": cfg.budget_sweeps,
        "seeds": cfg.seeds,
        "asymptotic_time_scales_reachable": false,
    })
}

fn write(dir: &Path, name: &str, contents: &str) -> Outcome {
    let p = harness::write_output(dir, name, contents)?;
    println!("wrote {}", p.display());
    Ok(())
}

fn write_json(dir: &Path, name: &str, v: &Value) -> Outcome {
    write(dir, name, &serde_json::to_string_pretty(v).map_err(|e| Failure::Other(e.to_string()))?)
}

fn save_config(cfg: &ExperimentConfig, dir: &Path) -> Outcome {
    write(dir, "config.toml", &cfg.to_toml()?)
}

fn sample(common: &Common, checkpoint: Option<&Path>) -> Outcome {
    let cfg = load(common, Preset::Custom)?;
    let dir = out_dir(&cfg);
    save_config(&cfg, &dir)?;
    if checkpoint.is_some() && cfg.seeds.len() > 1 {
        return Err(Failure::Config("a checkpoint covers a single seed; pass --seed".into()));
    }
    let hash = cfg.config_hash();
    for &seed in &cfg.seeds {
        let (record, eta) = harness::run_custom(&cfg, seed, checkpoint)?;
        write(&dir, &format!("sample_seed{seed}.csv"), &record.to_csv())?;
        write(&dir, &format!("sample_seed{seed}.json"), &record.summary_json(&hash)?)?;
        write(&dir, &format!("final_seed{seed}.json"), &io::to_json(&eta, cfg.model.floor_mode)?)?;
    }
    Ok(())
}

fn staircase(common: &Common) -> Outcome {
    let cfg = load(common, Preset::Staircase)?;
    let dir = out_dir(&cfg);
    save_config(&cfg, &dir)?;
    let runs = harness::run_staircase(&cfg)?;
    for r in &runs {
        write(&dir, &format!("staircase_seed{}.csv", r.seed), &r.record.to_csv())?;
    }
    write_json(&dir, "summary.json", &json!({ "meta": meta(&cfg), "runs": runs }))
}

fn ceiling_fall(common: &Common) -> Outcome {
    let cfg = load(common, Preset::CeilingFall)?;
    let dir = out_dir(&cfg);
    save_config(&cfg, &dir)?;
    let runs = harness::run_ceiling_fall(&cfg)?;
    for r in &runs {
        write(&dir, &format!("ceiling_seed{}.csv", r.seed), &r.record.to_csv())?;
    }
    let held = runs.iter().filter(|r| r.held).count();
    write_json(&dir, "summary.json", &json!({ "meta": meta(&cfg), "held": held, "runs": runs }))
}

fn compare_floor(common: &Common) -> Outcome {
    let cfg = load(common, Preset::FloorVsNoFloor)?;
    let dir = out_dir(&cfg);
    save_config(&cfg, &dir)?;
    let rows = harness::run_floor_vs_nofloor(&cfg)?;
    write(&dir, "compare.csv", &harness::compare_csv(&rows))?;
    write_json(&dir, "summary.json", &json!({ "meta": meta(&cfg), "rows": rows }))?;
    if let Some(r) = rows.iter().find(|r| r.median_censored) {
        return Err(Failure::Budget(format!("median coalescence time at L = {} exceeds the budget", r.l)));
    }
    Ok(())
}

fn profile(common: &Common) -> Outcome {
    let cfg = load(common, Preset::EquilibriumProfile)?;
    let dir = out_dir(&cfg);
    save_config(&cfg, &dir)?;
    let p = harness::run_equilibrium_profile(&cfg)?;
    let mut csv = String::from("k,down,up\n");
    for k in 0..p.down.len().max(p.up.len()) {
        let at = |v: &[u64]| v.get(k).copied().unwrap_or(0);
        csv.push_str(&format!("{k},{},{}\n", at(&p.down), at(&p.up)));
    }
    write(&dir, "profile.csv", &csv)?;
    write_json(&dir, "summary.json", &json!({ "meta": meta(&cfg), "profile": p }))
}

/// The configured model alone when a config is given, the built-in suite otherwise.
fn instances(common: &Common, preset: Preset) -> std::result::Result<Vec<harness::OracleInstance>, Failure> {
    match &common.config {
        Some(_) => {
            let cfg = load(common, preset)?;
            let cap = cfg.model.n_plus - 1;
            Ok(vec![harness::OracleInstance::new("configured", cfg.model.params(), cfg.boundary.clone(), cap)?])
        }
        None => Ok(harness::oracle_suite()?),
    }
}

fn oracle(common: &Common) -> Outcome {
    let dir = common.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    let rows = instances(common, Preset::OracleSuite)?
        .iter()
        .map(harness::oracle_row)
        .collect::<sos_core::Result<Vec<_>>>()?;
    write(&dir, "oracle.csv", &harness::oracle_csv(&rows))?;
    write_json(&dir, "summary.json", &json!({ "rows": rows }))
}

fn bounds(common: &Common) -> Outcome {
    let dir = common.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    let rows = instances(common, Preset::BoundsSuite)?
        .iter()
        .map(harness::bounds_row)
        .collect::<sos_core::Result<Vec<_>>>()?;
    write(&dir, "bounds.csv", &harness::bounds_csv(&rows))?;
    write_json(&dir, "summary.json", &json!({ "rows": rows }))
}

fn contours(common: &Common, input: &Path, level: i32) -> Outcome {
    let text = std::fs::read_to_string(input).map_err(|e| Failure::Config(format!("{}: {e}", input.display())))?;
    let (eta, mode) = io::from_json(&text).map_err(|e| Failure::Config(e.to_string()))?;
    let sys = match &common.config {
        Some(_) => load(common, Preset::Custom)?.system()?,
        None => {
            let top = eta.heights.iter().map(|h| h.abs()).max().unwrap_or(0).max(level.abs()).max(1);
            let mut p = ModelParams::new(eta.l, 1.0, top).with_dims(eta.l, eta.m).with_mode(mode);
            p.window = Some(top);
            SosSystem::new(p, BoundaryCondition::constant(0))?
        }
    };
    let closed = extract_h_contours(&sys, &eta, level)?;
    let open = extract_open_contours(&sys, &eta, level);
    let clusters = gradient_clusters(&sys, &eta);
    let dir = common.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    write(&dir, "clusters.csv", &clusters.to_csv())?;
    write_json(
        &dir,
        "contours.json",
        &json!({
            "level": level,
            "h_contours": closed.iter().map(|c| c.to_json()).collect::<Vec<_>>(),
            "open_contours": open.iter().map(|c| c.to_json()).collect::<Vec<_>>(),
        }),
    )
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.cmd {
        Cmd::Sample { common, checkpoint } => sample(common, checkpoint.as_deref()),
        Cmd::Staircase(c) => staircase(c),
        Cmd::CeilingFall(c) => ceiling_fall(c),
        Cmd::CompareFloor(c) => compare_floor(c),
        Cmd::Profile(c) => profile(c),
        Cmd::Oracle(c) => oracle(c),
        Cmd::Bounds(c) => bounds(c),
        Cmd::Contours { common, input, level } => contours(common, input, *level),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("config error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Budget(m)) => {
            eprintln!("budget exhausted: {m}");
            ExitCode::from(3)
        }
        Err(Failure::Other(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
