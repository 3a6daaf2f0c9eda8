//! `diffarb`: classify diffusion markets and cross-check the verdicts by simulation.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use diffarb_core::arb_classifier::{classify, Status, Verdict};
use diffarb_core::config::Tolerances;
use diffarb_core::mc_engine::{simulate, SimulationConfig, SimulationReport};
use diffarb_core::model_catalog::{build_model, entries, entry, golden_sweep, Params};
use diffarb_core::spec_io::load_model;
use diffarb_core::DiffusionSpec;
use serde_json::Value;

#[derive(Parser, Debug)]
#[command(name = "diffarb", version, about = "No-arbitrage classification for one-dimensional diffusion markets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Classify NIP, NSA and NUPBR for a model.
    Classify {
        #[command(flatten)]
        model: ModelArgs,
        /// Directory for `verdict.json` and `verdict.txt`.
        #[arg(long, env = "DIFFARB_OUT")]
        out: Option<PathBuf>,
    },
    /// Simulate the model and run the empirical checks.
    Simulate {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        sim: SimArgs,
        #[arg(long, env = "DIFFARB_OUT", default_value = "diffarb-out")]
        out: PathBuf,
    },
    /// Browse the model catalog.
    Catalog {
        #[command(subcommand)]
        action: CatalogAction,
    },
    /// Merge verdicts and simulation flags found under a directory into one table.
    Report {
        /// Directory searched recursively for run outputs.
        #[arg(long, env = "DIFFARB_OUT", default_value = "diffarb-out")]
        out: PathBuf,
        /// Classify the whole catalog sweep instead of reading run outputs.
        #[arg(long)]
        sweep: bool,
    },
}

#[derive(Subcommand, Debug)]
enum CatalogAction {
    /// List catalog entries.
    List,
    /// Show parameters and rationale of one entry.
    Show { name: String },
}

#[derive(Args, Debug)]
struct ModelArgs {
    /// JSON model file.
    #[arg(long, env = "DIFFARB_MODEL", conflicts_with = "catalog")]
    model: Option<PathBuf>,
    /// Catalog entry name.
    #[arg(long, env = "DIFFARB_CATALOG")]
    catalog: Option<String>,
    /// Catalog parameters, `k=v,k=v`.
    #[arg(long, env = "DIFFARB_PARAMS", default_value = "", requires = "catalog")]
    params: String,
    /// Tolerance override `key=value`; repeatable.
    #[arg(long = "tol", env = "DIFFARB_TOL", value_delimiter = ';')]
    tol: Vec<String>,
}

#[derive(Args, Debug)]
struct SimArgs {
    #[arg(long, env = "DIFFARB_SEED", default_value_t = 42)]
    seed: u64,
    #[arg(long, env = "DIFFARB_GRID", default_value_t = 512)]
    grid: usize,
    #[arg(long, env = "DIFFARB_PATHS", default_value_t = 10_000)]
    paths: usize,
    #[arg(long, env = "DIFFARB_LEVELS", default_value_t = 3)]
    levels: usize,
}

impl ModelArgs {
    fn load(&self) -> Result<DiffusionSpec> {
        let spec = match (&self.model, &self.catalog) {
            (Some(path), None) => load_model(path)?,
            (None, Some(name)) => build_model(name, &Params::parse(&self.params)?)?,
            _ => bail!("give one of --model and --catalog"),
        };
        if self.tol.is_empty() {
            return Ok(spec);
        }
        let mut tol: Tolerances = spec.tol;
        for kv in &self.tol {
            let (k, v) = kv.split_once('=').with_context(|| format!("--tol expects key=value, got `{kv}`"))?;
            tol.set(k.trim(), v.trim())?;
        }
        Ok(spec.with_tolerances(tol))
    }
}

fn write(dir: &Path, name: &str, text: &str) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn verdict_code(v: &Verdict) -> u8 {
    if [v.nip, v.nsa, v.nupbr].contains(&Status::Inconclusive) {
        2
    } else {
        0
    }
}

fn save_verdict(dir: &Path, v: &Verdict) -> Result<()> {
    write(dir, "verdict.json", &(serde_json::to_string_pretty(v)? + "\n"))?;
    write(dir, "verdict.txt", &v.render())
}

fn cmd_classify(model: &ModelArgs, out: Option<&Path>) -> Result<u8> {
    let spec = model.load()?;
    let v = classify(&spec)?;
    print!("{}", v.render());
    if let Some(dir) = out {
        save_verdict(dir, &v)?;
    }
    Ok(verdict_code(&v))
}

fn cmd_simulate(model: &ModelArgs, sim: &SimArgs, out: &Path) -> Result<u8> {
    let spec = model.load()?;
    let cfg = SimulationConfig { grid: sim.grid, paths: sim.paths, levels: sim.levels, seed: sim.seed };
    let verdict = classify(&spec)?;
    let report: SimulationReport = simulate(&spec, &cfg)?;
    save_verdict(out, &verdict)?;
    write(out, "simulation.json", &(serde_json::to_string_pretty(&report)? + "\n"))?;
    write(out, "simulation.txt", &report.render())?;
    write(out, "k_ladder.csv", &report.k_ladder_csv())?;
    write(out, "payoff_histogram.csv", &report.payoff_histogram_csv(40))?;
    print!("{}", verdict.render());
    print!("{}", report.render());
    println!("outputs written to {}", out.display());
    Ok(0)
}

fn cmd_catalog(action: &CatalogAction) -> Result<u8> {
    match action {
        CatalogAction::List => {
            for e in entries() {
                let params: Vec<String> = e.params.iter().map(|p| format!("{}={}", p.name, p.default)).collect();
                println!("{:<22} {}  [{}]", e.name, e.summary, params.join(", "));
            }
        }
        CatalogAction::Show { name } => {
            println!("{}", serde_json::to_string_pretty(&entry(name)?.describe())?);
        }
    }
    Ok(0)
}

/// One row of the summary table.
struct Row {
    model_id: String,
    r: String,
    verdict: [String; 4],
    arbitrage: String,
    divergent: String,
}

fn status_cell(v: &Value, key: &str) -> String {
    match v.get(key).and_then(Value::as_str) {
        Some("holds") => "✓".into(),
        Some("fails") => "✗".into(),
        Some("inconclusive") => "?".into(),
        _ => "-".into(),
    }
}

fn read_json(path: &Path) -> Result<Value> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("malformed {}", path.display()))
}

fn collect_rows(dir: &Path, rows: &mut Vec<Row>) -> Result<()> {
    let verdict = dir.join("verdict.json");
    let sim = dir.join("simulation.json");
    if verdict.is_file() || sim.is_file() {
        let v = if verdict.is_file() { Some(read_json(&verdict)?) } else { None };
        let s = if sim.is_file() { Some(read_json(&sim)?) } else { None };
        let id = v.as_ref().or(s.as_ref()).and_then(|x| x.get("model_id")).and_then(Value::as_str).unwrap_or("?");
        let flag = |key: &str| {
            s.as_ref()
                .and_then(|s| s.pointer(&format!("/flags/{key}")))
                .and_then(Value::as_bool)
                .map_or("-".to_string(), |b| b.to_string())
        };
        rows.push(Row {
            model_id: id.to_string(),
            r: v.as_ref().and_then(|v| v.get("r")).map_or("-".into(), |r| r.to_string()),
            verdict: ["nip", "nsa", "nupbr", "rp"].map(|k| v.as_ref().map_or("-".into(), |v| status_cell(v, k))),
            arbitrage: flag("empirical_arbitrage"),
            divergent: flag("k_divergent"),
        });
    }
    let mut subdirs: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("cannot read {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    subdirs.sort();
    for d in subdirs {
        collect_rows(&d, rows)?;
    }
    Ok(())
}

fn print_table(rows: &[Row]) {
    let width = rows.iter().map(|r| r.model_id.chars().count()).max().unwrap_or(5).max(5);
    println!("{:<width$}  {:>5}  NIP NSA NUPBR RP  arbitrage  K-divergent", "model", "r");
    for r in rows {
        println!(
            "{:<width$}  {:>5}   {}   {}    {}    {}  {:<9}  {}",
            r.model_id, r.r, r.verdict[0], r.verdict[1], r.verdict[2], r.verdict[3], r.arbitrage, r.divergent
        );
    }
}

fn write_csv(path: &Path, rows: &[Row]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot write {}", path.display()))?;
    w.write_record(["model_id", "r", "nip", "nsa", "nupbr", "rp", "empirical_arbitrage", "k_divergent"])?;
    for r in rows {
        w.write_record([&r.model_id, &r.r, &r.verdict[0], &r.verdict[1], &r.verdict[2], &r.verdict[3], &r.arbitrage, &r.divergent])?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_report(out: &Path, sweep: bool) -> Result<u8> {
    let mut rows = Vec::new();
    if sweep {
        for (name, params) in golden_sweep() {
            let v = classify(&build_model(name, &params)?)?;
            let dir = out.join(v.model_id.replace(['(', ')', ',', '='], "_"));
            save_verdict(&dir, &v)?;
        }
    }
    if !out.is_dir() {
        bail!("{} is not a directory", out.display());
    }
    collect_rows(out, &mut rows)?;
    if rows.is_empty() {
        bail!("no run outputs under {}", out.display());
    }
    print_table(&rows);
    write_csv(&out.join("summary.csv"), &rows)?;
    Ok(0)
}

fn run(cli: Cli) -> Result<u8> {
    match &cli.command {
        Command::Classify { model, out } => cmd_classify(model, out.as_deref()),
        Command::Simulate { model, sim, out } => cmd_simulate(model, sim, out),
        Command::Catalog { action } => cmd_catalog(action),
        Command::Report { out, sweep } => cmd_report(out, *sweep),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
