use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use radnls_cli::campaign::{parse_campaign, run_campaign, run_config, CampaignReport};
use radnls_cli::config::{parse_table, Task};
use radnls_cli::{exit, RunManifest};
use toml::{Table, Value};

#[derive(Parser)]
#[command(name = "radnls", version, about = "Radial inhomogeneous NLS: ground states, spectra and evolutions")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand)]
enum Verb {
    /// Parse and validate a run or campaign file without running it.
    Validate { file: PathBuf },
    /// Shooting and discrete ground state, tail fit (or the height scan when omega < 0).
    GroundState(RunArgs),
    /// Threshold action by constrained descent.
    MOmega(RunArgs),
    /// Uniqueness condition and the J sign scan along the ground state.
    Uniqueness(RunArgs),
    /// Low spectrum of the linearized operator by angular sector.
    Spectrum(RunArgs),
    /// Time evolution from scaled ground-state or Gaussian data.
    Evolve(RunArgs),
    /// Run every `[[run]]` table of a campaign file (or a single run file).
    Campaign {
        file: PathBuf,
        /// Overrides the campaign's worker count.
        #[arg(long)]
        workers: Option<usize>,
    },
}

/// Flags mirror the config fields and override values from `--config`.
#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    output: Option<String>,
    #[arg(long)]
    seed: Option<i64>,
    #[arg(long)]
    dim: Option<i64>,
    #[arg(long)]
    b1: Option<f64>,
    #[arg(long)]
    b2: Option<f64>,
    #[arg(long)]
    p1: Option<f64>,
    #[arg(long)]
    p2: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    omega: Option<f64>,
    #[arg(long)]
    r_max: Option<f64>,
    #[arg(long)]
    n: Option<i64>,
    /// scaled-ground-state or gaussian.
    #[arg(long)]
    initial: Option<String>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    amplitude: Option<f64>,
    #[arg(long)]
    width: Option<f64>,
    #[arg(long)]
    t_final: Option<f64>,
    #[arg(long)]
    dt_max: Option<f64>,
    #[arg(long)]
    sponge: Option<bool>,
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long)]
    virial_radius: Option<f64>,
    #[arg(long)]
    seeds: Option<i64>,
    #[arg(long)]
    pohozaev_tol: Option<f64>,
    #[arg(long)]
    cache: Option<String>,
}

fn read(path: &PathBuf) -> Result<String, String> {
    std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))
}

fn overlay(args: RunArgs, task: Task) -> Result<Table, String> {
    let mut doc: Table = match &args.config {
        Some(p) => read(p)?.parse().map_err(|e: toml::de::Error| e.message().to_string())?,
        None => Table::new(),
    };
    doc.insert("task".into(), Value::String(task.name().into()));
    if let Some(o) = args.output {
        doc.insert("output".into(), Value::String(o));
    }
    if let Some(s) = args.seed {
        doc.insert("seed".into(), Value::Integer(s));
    }
    let mut set = |section: &str, key: &str, v: Option<Value>| {
        if let Some(v) = v {
            let t = doc
                .entry(section.to_string())
                .or_insert_with(|| Value::Table(Table::new()));
            if let Value::Table(t) = t {
                t.insert(key.into(), v);
            }
        }
    };
    let f = |x: Option<f64>| x.map(Value::Float);
    let i = |x: Option<i64>| x.map(Value::Integer);
    set("params", "dim", i(args.dim));
    set("params", "b1", f(args.b1));
    set("params", "b2", f(args.b2));
    set("params", "p1", f(args.p1));
    set("params", "p2", f(args.p2));
    set("params", "omega", f(args.omega));
    set("grid", "r_max", f(args.r_max));
    set("grid", "n", i(args.n));
    set("options", "initial", args.initial.map(Value::String));
    set("options", "lambda", f(args.lambda));
    set("options", "amplitude", f(args.amplitude));
    set("options", "width", f(args.width));
    set("options", "t_final", f(args.t_final));
    set("options", "dt_max", f(args.dt_max));
    set("options", "sponge", args.sponge.map(Value::Boolean));
    set("options", "radius", f(args.radius));
    set("options", "virial_radius", f(args.virial_radius));
    set("options", "seeds", i(args.seeds));
    set("options", "pohozaev_tol", f(args.pohozaev_tol));
    set("options", "cache", args.cache.map(Value::String));
    Ok(doc)
}

fn print_manifest(m: &RunManifest) {
    println!("{} -> {}", m.config.task.name(), m.config.output.display());
    for (name, ok) in &m.checks.passed {
        println!("  {} {name}", if *ok { "PASS" } else { "FAIL" });
    }
    for (name, why) in &m.checks.skipped {
        println!("  SKIP {name}: {why}");
    }
    if let Some(e) = &m.error {
        println!("  ERROR {e}");
    }
}

fn manifest_code(m: &RunManifest) -> i32 {
    if m.error.is_some() {
        exit::ERROR
    } else if m.checks.all_pass() {
        exit::OK
    } else {
        exit::CHECK_FAILED
    }
}

fn report_code(r: &CampaignReport) -> i32 {
    for m in &r.manifests {
        match m {
            Ok(m) => print_manifest(m),
            Err(e) => println!("run failed before writing a manifest: {e}"),
        }
    }
    match &r.spot_check {
        Some(Ok(s)) => println!(
            "cache spot check {}: {} cached {} fresh {} (relative {:.2e})",
            if s.passed { "PASS" } else { "FAIL" },
            s.key,
            s.cached,
            s.fresh,
            s.relative_difference
        ),
        Some(Err(e)) => println!("cache spot check ERROR {e}"),
        None => {}
    }
    if r.any_error() {
        exit::ERROR
    } else if r.all_checks_pass() {
        exit::OK
    } else {
        exit::CHECK_FAILED
    }
}

fn run(cli: Cli) -> Result<i32, String> {
    let (args, task) = match cli.verb {
        Verb::Validate { file } => {
            let c = parse_campaign(&read(&file)?).map_err(|e| e.to_string())?;
            for r in &c.runs {
                println!("ok: {} -> {}", r.task.name(), r.output.display());
            }
            return Ok(exit::OK);
        }
        Verb::Campaign { file, workers } => {
            let mut c = parse_campaign(&read(&file)?).map_err(|e| e.to_string())?;
            if let Some(w) = workers {
                c.workers = w.max(1);
            }
            let r = run_campaign(&c).map_err(|e| e.to_string())?;
            return Ok(report_code(&r));
        }
        Verb::GroundState(a) => (a, Task::GroundState),
        Verb::MOmega(a) => (a, Task::MOmega),
        Verb::Uniqueness(a) => (a, Task::UniquenessScan),
        Verb::Spectrum(a) => (a, Task::Spectrum),
        Verb::Evolve(a) => (a, Task::Evolve),
    };
    let cfg = parse_table(&overlay(args, task)?).map_err(|e| e.to_string())?;
    let m = run_config(&cfg, None).map_err(|e| e.to_string())?;
    print_manifest(&m);
    Ok(manifest_code(&m))
}

fn main() -> ExitCode {
    let code = match run(Cli::parse()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            exit::ERROR
        }
    };
    ExitCode::from(code as u8)
}
