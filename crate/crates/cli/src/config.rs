//! Command-line arguments, grids and model loading.

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use renewal_ldp::model::file::{load_preset, parse_model, LoadedModel};
use serde_json::{Map, Value};

/// Exit codes: 2 for configuration errors, 3 for numerical failures.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Numeric(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl From<renewal_ldp::Error> for CliError {
    fn from(e: renewal_ldp::Error) -> Self {
        if e.is_numeric() {
            CliError::Numeric(e.to_string())
        } else {
            CliError::Config(e.to_string())
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(
    name = "renewal-ldp",
    version,
    about = "Free energies, rate functions and exact oracles for pinning models"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Model description in JSON.
    #[arg(long, global = true, conflicts_with = "preset")]
    pub model: Option<PathBuf>,

    /// Named preset: poland_scheraga, cluster, wsme, geometric, dirac, zeta.
    #[arg(long, global = true)]
    pub preset: Option<String>,

    /// Preset parameters as a JSON object.
    #[arg(long, global = true, requires = "preset")]
    pub params: Option<String>,

    /// Dual points `a:b:n` (every axis in more than one dimension).
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub k_grid: Option<String>,

    /// Reward densities `a:b:n` (every axis in more than one dimension).
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub w_grid: Option<String>,

    /// Constant potentials `a:b:n` for the phase diagram.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub beta: Option<String>,

    /// Comma-separated horizons.
    #[arg(long, global = true)]
    pub t: Option<String>,

    /// Deviation threshold for `sample`.
    #[arg(long, global = true)]
    pub delta: Option<f64>,

    #[arg(long, global = true)]
    pub samples: Option<usize>,

    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Base tolerance of `verify`.
    #[arg(long, global = true, default_value_t = 1e-9)]
    pub tol: f64,

    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    /// Check the modelling assumptions and print the derived constants.
    Validate,
    /// Tabulate z, its gradient and theta over the k-grid.
    FreeEnergy,
    /// Tabulate the rate function over the w-grid.
    Rate,
    /// Sweep the constant potential and classify the transition.
    PhaseDiagram,
    /// Finite-t rates from the exact reward distribution.
    Exact,
    /// Exact path samples, or deviation probabilities with --delta.
    Sample,
    /// Run the oracle and invariant checks on the model.
    Verify,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

/// `n` evenly spaced points from `a` to `b` inclusive.
pub fn parse_grid(spec: &str, flag: &str) -> CliResult<Vec<f64>> {
    let bad = |why: &str| CliError::Config(format!("--{flag} {spec:?}: {why}; expected a:b:n"));
    let parts: Vec<&str> = spec.split(':').collect();
    let [a, b, n] = parts.as_slice() else {
        return Err(bad("wrong number of fields"));
    };
    let a: f64 = a.trim().parse().map_err(|_| bad("start is not a number"))?;
    let b: f64 = b.trim().parse().map_err(|_| bad("end is not a number"))?;
    let n: usize = n.trim().parse().map_err(|_| bad("count is not a positive integer"))?;
    if !a.is_finite() || !b.is_finite() {
        return Err(bad("ends must be finite"));
    }
    match n {
        0 => Err(bad("count must be positive")),
        1 if a == b => Ok(vec![a]),
        1 => Err(bad("a single point needs a = b")),
        _ if a < b => {
            let m = (n - 1) as f64;
            Ok((0..n).map(|i| (a * (m - i as f64) + b * i as f64) / m).collect())
        }
        _ => Err(bad("grid must be strictly increasing")),
    }
}

pub fn parse_t_list(spec: &str) -> CliResult<Vec<usize>> {
    let bad = || {
        CliError::Config(format!(
            "--t {spec:?}: expected increasing positive integers separated by commas"
        ))
    };
    let ts: Vec<usize> = spec
        .split(',')
        .map(|s| s.trim().parse::<usize>().map_err(|_| bad()))
        .collect::<CliResult<_>>()?;
    if ts.is_empty() || ts[0] == 0 || ts.windows(2).any(|w| w[1] <= w[0]) {
        return Err(bad());
    }
    Ok(ts)
}

/// Tensor-product grid over `d` axes, last axis fastest.
pub fn product_grid(axis: &[f64], d: usize) -> Vec<Vec<f64>> {
    let mut points = vec![Vec::new()];
    for _ in 0..d {
        points = points
            .into_iter()
            .flat_map(|p| {
                axis.iter().map(move |&x| {
                    let mut q = p.clone();
                    q.push(x);
                    q
                })
            })
            .collect();
    }
    points
}

pub fn load_model(cli: &Cli) -> CliResult<LoadedModel> {
    match (&cli.model, &cli.preset) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            Ok(parse_model(&text)?)
        }
        (None, Some(name)) => {
            let params = match &cli.params {
                Some(s) => match serde_json::from_str::<Value>(s) {
                    Ok(Value::Object(m)) => m,
                    Ok(_) => return Err(CliError::Config("--params must be a JSON object".into())),
                    Err(e) => return Err(CliError::Config(format!("--params: {e}"))),
                },
                None => Map::new(),
            };
            Ok(load_preset(name, params)?)
        }
        (None, None) => Err(CliError::Config("give --model FILE or --preset NAME".into())),
    }
}

pub fn required<'a>(v: &'a Option<String>, flag: &str, command: &str) -> CliResult<&'a str> {
    v.as_deref()
        .ok_or_else(|| CliError::Config(format!("{command} needs --{flag}")))
}
