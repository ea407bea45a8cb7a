//! Run configurations: a TOML document with `task`, `output`, `seed` and the
//! `[params]`, `[grid]` and `[options]` tables. Parsing collects every problem
//! instead of stopping at the first.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use radnls::params::{validate_params, Admissibility};
use radnls::ModelParams;
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    GroundState,
    MOmega,
    UniquenessScan,
    Spectrum,
    Evolve,
    BlowupStudy,
    ScatteringStudy,
}

impl Task {
    pub const ALL: [Task; 7] = [
        Task::GroundState,
        Task::MOmega,
        Task::UniquenessScan,
        Task::Spectrum,
        Task::Evolve,
        Task::BlowupStudy,
        Task::ScatteringStudy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Task::GroundState => "ground-state",
            Task::MOmega => "m-omega",
            Task::UniquenessScan => "uniqueness-scan",
            Task::Spectrum => "spectrum",
            Task::Evolve => "evolve",
            Task::BlowupStudy => "blowup-study",
            Task::ScatteringStudy => "scattering-study",
        }
    }

    fn from_name(s: &str) -> Option<Task> {
        Task::ALL.into_iter().find(|t| t.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub r_max: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialKind {
    /// λ·Q_h with Q_h the discrete ground state.
    ScaledGroundState,
    /// amplitude·exp(-r²/width²).
    Gaussian,
}

/// Task options; which ones are required depends on the task.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TaskOptions {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pohozaev_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seeds: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eigen_count: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sectors: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambdas: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub width: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_final: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt_scale: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sponge: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub record_interval: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snapshot_interval: Option<f64>,
    /// Ball radius for local mass, scattering and coercivity.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    /// Scale of the cutoff virial weight written next to the history.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub virial_radius: Option<f64>,
    /// χ_R truncation of the blow-up family.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cutoff_radius: Option<f64>,
    /// Scattering threshold as a fraction of ‖u₀‖₂.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cache: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub task: Task,
    pub output: PathBuf,
    pub seed: u64,
    pub params: ModelParams,
    pub grid: GridSpec,
    #[serde(default)]
    pub options: TaskOptions,
}

impl RunConfig {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigErrors(pub Vec<String>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

#[derive(Clone, Copy)]
enum Kind {
    Float,
    Int,
    Bool,
    Str,
    FloatList,
}

const PARAM_KEYS: [&str; 6] = ["dim", "b1", "b2", "p1", "p2", "omega"];
const GRID_KEYS: [(&str, Kind); 2] = [("r_max", Kind::Float), ("n", Kind::Int)];
const OPTION_KEYS: [(&str, Kind); 20] = [
    ("pohozaev_tol", Kind::Float),
    ("seeds", Kind::Int),
    ("eigen_count", Kind::Int),
    ("sectors", Kind::Int),
    ("initial", Kind::Str),
    ("lambda", Kind::Float),
    ("lambdas", Kind::FloatList),
    ("amplitude", Kind::Float),
    ("width", Kind::Float),
    ("t_final", Kind::Float),
    ("dt_max", Kind::Float),
    ("dt_scale", Kind::Float),
    ("sponge", Kind::Bool),
    ("record_interval", Kind::Float),
    ("snapshot_interval", Kind::Float),
    ("radius", Kind::Float),
    ("virial_radius", Kind::Float),
    ("cutoff_radius", Kind::Float),
    ("eps", Kind::Float),
    ("cache", Kind::Str),
];

fn type_ok(v: &Value, k: Kind) -> bool {
    match k {
        Kind::Float => v.is_float() || v.is_integer(),
        Kind::Int => v.as_integer().is_some_and(|i| i >= 0),
        Kind::Bool => v.is_bool(),
        Kind::Str => v.is_str(),
        Kind::FloatList => v
            .as_array()
            .is_some_and(|a| a.iter().all(|x| x.is_float() || x.is_integer())),
    }
}

fn kind_name(k: Kind) -> &'static str {
    match k {
        Kind::Float => "a number",
        Kind::Int => "a non-negative integer",
        Kind::Bool => "a boolean",
        Kind::Str => "a string",
        Kind::FloatList => "a list of numbers",
    }
}

fn float(t: &Table, key: &str) -> Option<f64> {
    t.get(key).and_then(|v| v.as_float().or(v.as_integer().map(|i| i as f64)))
}

/// Parse and validate a configuration document.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigErrors> {
    let table: Table = text
        .parse()
        .map_err(|e: toml::de::Error| ConfigErrors(vec![format!("not a TOML document: {}", e.message())]))?;
    parse_table(&table)
}

pub fn parse_table(table: &Table) -> Result<RunConfig, ConfigErrors> {
    let mut errs = Vec::new();
    let top: BTreeMap<&str, bool> = [
        ("task", true),
        ("output", true),
        ("seed", false),
        ("params", true),
        ("grid", true),
        ("options", false),
    ]
    .into_iter()
    .collect();
    for k in table.keys() {
        if !top.contains_key(k.as_str()) {
            errs.push(format!("unknown key `{k}`"));
        }
    }
    for (k, required) in &top {
        if *required && !table.contains_key(*k) {
            errs.push(format!("missing required key `{k}`"));
        }
    }

    let task = match table.get("task") {
        Some(Value::String(s)) => match Task::from_name(s) {
            Some(t) => Some(t),
            None => {
                let names: Vec<&str> = Task::ALL.iter().map(|t| t.name()).collect();
                errs.push(format!("`task` = \"{s}\" is not one of {}", names.join(", ")));
                None
            }
        },
        Some(_) => {
            errs.push("`task` must be a string".into());
            None
        }
        None => None,
    };
    let output = match table.get("output") {
        Some(Value::String(s)) if !s.is_empty() => Some(PathBuf::from(s)),
        Some(_) => {
            errs.push("`output` must be a non-empty string".into());
            None
        }
        None => None,
    };
    let seed = match table.get("seed") {
        None => Some(0),
        Some(v) => match v.as_integer() {
            Some(i) if i >= 0 => Some(i as u64),
            _ => {
                errs.push("`seed` must be a non-negative integer".into());
                None
            }
        },
    };

    let section = |name: &str, errs: &mut Vec<String>| -> Option<Table> {
        match table.get(name) {
            Some(Value::Table(t)) => Some(t.clone()),
            Some(_) => {
                errs.push(format!("`{name}` must be a table"));
                None
            }
            None => None,
        }
    };

    let params = section("params", &mut errs).and_then(|t| {
        for k in t.keys() {
            if !PARAM_KEYS.contains(&k.as_str()) {
                errs.push(format!("unknown key `params.{k}`"));
            }
        }
        let mut ok = true;
        for k in PARAM_KEYS {
            let kind = if k == "dim" { Kind::Int } else { Kind::Float };
            match t.get(k) {
                None => {
                    errs.push(format!("missing required key `params.{k}`"));
                    ok = false;
                }
                Some(v) if !type_ok(v, kind) => {
                    errs.push(format!("`params.{k}` must be {}", kind_name(kind)));
                    ok = false;
                }
                _ => {}
            }
        }
        ok.then(|| {
            ModelParams::new(
                t["dim"].as_integer().unwrap() as u32,
                float(&t, "b1").unwrap(),
                float(&t, "b2").unwrap(),
                float(&t, "p1").unwrap(),
                float(&t, "p2").unwrap(),
                float(&t, "omega").unwrap(),
            )
        })
    });
    if let (Some(p), Some(task)) = (params, task) {
        match validate_params(&p) {
            Ok(rep) => match rep.status {
                Admissibility::Accepted => {}
                Admissibility::ValidForEllipticNonexistenceDemo if task == Task::GroundState => {}
                Admissibility::ValidForEllipticNonexistenceDemo => errs.push(format!(
                    "omega < 0 is only meaningful for the ground-state task (nonexistence scan), not {}",
                    task.name()
                )),
                Admissibility::Rejected => {
                    for v in rep.violations {
                        errs.push(format!("params violate {v}"));
                    }
                }
            },
            Err(e) => errs.push(format!("params rejected: {e}")),
        }
    }

    let grid = section("grid", &mut errs).and_then(|t| {
        for k in t.keys() {
            if !GRID_KEYS.iter().any(|(g, _)| g == k) {
                errs.push(format!("unknown key `grid.{k}`"));
            }
        }
        let mut ok = true;
        for (k, kind) in GRID_KEYS {
            match t.get(k) {
                None => {
                    errs.push(format!("missing required key `grid.{k}`"));
                    ok = false;
                }
                Some(v) if !type_ok(v, kind) => {
                    errs.push(format!("`grid.{k}` must be {}", kind_name(kind)));
                    ok = false;
                }
                _ => {}
            }
        }
        if !ok {
            return None;
        }
        let g = GridSpec {
            r_max: float(&t, "r_max").unwrap(),
            n: t["n"].as_integer().unwrap() as usize,
        };
        if !(g.r_max > 0.0) || g.n < 16 {
            errs.push("grid needs r_max > 0 and n >= 16".into());
            return None;
        }
        Some(g)
    });

    let options = match section("options", &mut errs) {
        None => Some(TaskOptions::default()),
        Some(t) => {
            let mut ok = true;
            for (k, v) in &t {
                match OPTION_KEYS.iter().find(|(o, _)| o == k) {
                    None => {
                        errs.push(format!("unknown key `options.{k}`"));
                        ok = false;
                    }
                    Some((_, kind)) if !type_ok(v, *kind) => {
                        errs.push(format!("`options.{k}` must be {}", kind_name(*kind)));
                        ok = false;
                    }
                    _ => {}
                }
            }
            if let Some(Value::String(s)) = t.get("initial") {
                if s != "scaled-ground-state" && s != "gaussian" {
                    errs.push(format!("`options.initial` = \"{s}\" is not scaled-ground-state or gaussian"));
                    ok = false;
                }
            }
            if ok {
                match Value::Table(t).try_into::<TaskOptions>() {
                    Ok(o) => Some(o),
                    Err(e) => {
                        errs.push(format!("options: {e}"));
                        None
                    }
                }
            } else {
                None
            }
        }
    };

    if let (Some(task), Some(o)) = (task, &options) {
        for missing in required_options(task, o) {
            errs.push(format!("task {} needs `options.{missing}`", task.name()));
        }
        errs.extend(option_ranges(o));
    }

    if !errs.is_empty() {
        return Err(ConfigErrors(errs));
    }
    Ok(RunConfig {
        task: task.unwrap(),
        output: output.unwrap(),
        seed: seed.unwrap(),
        params: params.unwrap(),
        grid: grid.unwrap(),
        options: options.unwrap(),
    })
}

fn required_options(task: Task, o: &TaskOptions) -> Vec<&'static str> {
    let mut need = Vec::new();
    let initial = |need: &mut Vec<&'static str>| match o.initial {
        None => need.push("initial"),
        Some(InitialKind::ScaledGroundState) => {
            if o.lambda.is_none() {
                need.push("lambda");
            }
        }
        Some(InitialKind::Gaussian) => {
            if o.amplitude.is_none() {
                need.push("amplitude");
            }
            if o.width.is_none() {
                need.push("width");
            }
        }
    };
    match task {
        Task::GroundState | Task::MOmega | Task::UniquenessScan | Task::Spectrum => {}
        Task::Evolve => {
            initial(&mut need);
            if o.t_final.is_none() {
                need.push("t_final");
            }
        }
        Task::BlowupStudy => {
            for (k, present) in [
                ("lambdas", o.lambdas.is_some()),
                ("cutoff_radius", o.cutoff_radius.is_some()),
                ("t_final", o.t_final.is_some()),
            ] {
                if !present {
                    need.push(k);
                }
            }
        }
        Task::ScatteringStudy => {
            initial(&mut need);
            for (k, present) in [
                ("t_final", o.t_final.is_some()),
                ("radius", o.radius.is_some()),
                ("eps", o.eps.is_some()),
            ] {
                if !present {
                    need.push(k);
                }
            }
        }
    }
    need
}

fn option_ranges(o: &TaskOptions) -> Vec<String> {
    let mut errs = Vec::new();
    let positive = [
        ("pohozaev_tol", o.pohozaev_tol),
        ("lambda", o.lambda),
        ("amplitude", o.amplitude),
        ("width", o.width),
        ("t_final", o.t_final),
        ("dt_max", o.dt_max),
        ("dt_scale", o.dt_scale),
        ("record_interval", o.record_interval),
        ("snapshot_interval", o.snapshot_interval),
        ("radius", o.radius),
        ("virial_radius", o.virial_radius),
        ("cutoff_radius", o.cutoff_radius),
        ("eps", o.eps),
    ];
    for (k, v) in positive {
        if let Some(x) = v {
            if !(x > 0.0) || !x.is_finite() {
                errs.push(format!("`options.{k}` must be positive, got {x}"));
            }
        }
    }
    if let Some(ls) = &o.lambdas {
        if ls.is_empty() || ls.iter().any(|l| !(*l > 0.0)) {
            errs.push("`options.lambdas` must be a non-empty list of positive numbers".into());
        }
    }
    if o.seeds == Some(0) {
        errs.push("`options.seeds` must be at least 1".into());
    }
    errs
}
