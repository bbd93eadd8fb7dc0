//! Command-line drivers for `fundform`: file I/O, configuration layering,
//! run manifests, and the experiment drivers behind each subcommand.

pub mod commands;
pub mod config;
pub mod depend;
pub mod error;
pub mod manifest;

use std::fs;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use serde_json::{json, Value};

use config::Layer;
use error::CliError;
use manifest::Manifest;

#[derive(Debug, Parser)]
#[command(name = "fundform", version, about = "Reconstruct immersions from fundamental forms and run rigidity diagnostics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Input file, repeatable; see each subcommand for the expected order.
    #[arg(short = 'i', long = "input", global = true)]
    pub input: Vec<PathBuf>,

    /// Directory for outputs and the run manifest (created if missing).
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,

    /// Lebesgue exponent of the norms (`inf` allowed).
    #[arg(long, global = true)]
    pub p: Option<f64>,

    /// Absolute residual threshold replacing the calibrated one.
    #[arg(long, global = true)]
    pub tol: Option<f64>,

    /// Number of sine modes per axis in the test dictionary.
    #[arg(long, global = true)]
    pub dict_size: Option<usize>,

    /// Integrate even when the data fail the compatibility check.
    #[arg(long, global = true)]
    pub force: bool,

    /// Seed for every randomized choice; recorded in the manifest.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Flat `key = <JSON>` file, a JSON object, or a previous manifest.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Comma-separated ε values (converge).
    #[arg(long, global = true, value_delimiter = ',')]
    pub eps: Option<Vec<f64>>,

    /// Comma-separated perturbation sizes t (rigidity).
    #[arg(long, global = true, value_delimiter = ',')]
    pub t: Option<Vec<f64>>,

    /// Comma-separated family parameters s (depend).
    #[arg(long, global = true, value_delimiter = ',')]
    pub s: Option<Vec<f64>>,

    /// Grid points per axis, comma-separated for non-square grids.
    #[arg(long, global = true, value_delimiter = ',')]
    pub resolution: Option<Vec<usize>>,

    /// Perturbation family for depend: sphere-radius, graph-amplitude, gauge.
    #[arg(long, global = true)]
    pub family: Option<String>,

    /// Fixture name: plane, cylinder, sphere-cap, saddle.
    #[arg(long, global = true)]
    pub fixture: Option<String>,

    /// Membrane generator for converge: wrinkle, flat (others via --config).
    #[arg(long, global = true)]
    pub generator: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Integrate (g, B, ∇ᴱ) to an immersion: -i g -i B [-i ∇ᴱ] [-i init.json].
    Reconstruct,
    /// Harvest (g, B, ∇ᴱ) from an immersion: -i f.
    Forms,
    /// Gauss, Codazzi and Ricci residuals: -i g -i B [-i ∇ᴱ].
    CheckGcr,
    /// Rigidly align the first immersion onto the second: -i f -i f_ref.
    Align,
    /// Perturbed-rotation sphere maps: defect against distance to a rotation.
    Rigidity,
    /// Lipschitz dependence of the immersion on compatible data.
    Depend,
    /// Oscillating membrane sequences: rates, error terms, weak limits.
    Converge,
    /// Write a closed-form fixture immersion.
    Fixture,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Reconstruct => "reconstruct",
            Command::Forms => "forms",
            Command::CheckGcr => "check-gcr",
            Command::Align => "align",
            Command::Rigidity => "rigidity",
            Command::Depend => "depend",
            Command::Converge => "converge",
            Command::Fixture => "fixture",
        }
    }
}

impl Cli {
    /// The flags actually given, as a configuration layer.
    pub fn flag_layer(&self) -> Layer {
        let mut l = Layer::new();
        let mut put = |k: &str, v: Value| {
            l.insert(k.to_string(), v);
        };
        if !self.input.is_empty() {
            put("inputs", json!(self.input));
        }
        if let Some(v) = &self.output_dir {
            put("output_dir", json!(v));
        }
        if let Some(v) = self.p {
            put("p", if v.is_infinite() { json!("inf") } else { json!(v) });
        }
        if let Some(v) = self.tol {
            put("tol", json!(v));
        }
        if let Some(v) = self.dict_size {
            put("dict_size", json!(v));
        }
        if self.force {
            put("force", json!(true));
        }
        if let Some(v) = self.seed {
            put("seed", json!(v));
        }
        if let Some(v) = &self.eps {
            put("eps", json!(v));
        }
        if let Some(v) = &self.t {
            put("t", json!(v));
        }
        if let Some(v) = &self.s {
            put("s", json!(v));
        }
        if let Some(v) = &self.resolution {
            put("resolution", json!(v));
        }
        if let Some(v) = &self.family {
            put("family", json!(v));
        }
        if let Some(v) = &self.fixture {
            put("fixture", json!(v));
        }
        if let Some(v) = &self.generator {
            put("generator", json!({ "name": v }));
        }
        l
    }
}

/// Caps the rayon pool from `FF_THREADS`.
pub fn init_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("FF_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::validation(format!("FF_THREADS = {raw:?} is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::validation(e.to_string()))
}

/// Runs one command end to end and returns the process exit code.
pub fn run(cli: &Cli) -> i32 {
    let cfg = match config::resolve(cli.command.name(), cli.config.as_deref(), cli.flag_layer()) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    if let Err(e) = fs::create_dir_all(&cfg.output_dir) {
        eprintln!("error: cannot create {}: {e}", cfg.output_dir.display());
        return 2;
    }
    let mut out = commands::Outputs::new(&cfg.output_dir);
    let result = commands::execute(&cfg, &mut out);
    let code = result.as_ref().map_or_else(CliError::exit_code, |_| 0);
    if let Err(e) = Manifest::build(&cfg, &out.files, code).and_then(|m| m.write(&cfg.output_dir)) {
        eprintln!("warning: manifest not written: {e}");
    }
    match result {
        Ok(()) => {
            for f in &out.files {
                println!("{}", cfg.output_dir.join(f).display());
            }
        }
        Err(e) => eprintln!("error: {e}"),
    }
    code
}
