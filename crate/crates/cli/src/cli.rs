//! Argument parsing and subcommand dispatch.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};
use urban_dml::pipeline::{self, PipelineConfig, PipelineError};
use urban_dml::synth::{generate_city, CitySpec};

#[derive(Debug, Parser)]
#[command(name = "urban-dml", version, about = "Built-environment effects on household travel emissions")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// JSON pipeline config; flags override its values
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub folds: Option<usize>,
    /// directory with the input files
    #[arg(long, global = true)]
    pub input: Option<PathBuf>,
    /// directory for artifacts
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse and validate every input file
    Ingest,
    /// Build neighborhood profiles
    Features,
    /// Cross-fit the nuisance models and grow the causal forest
    Fit,
    /// Per-neighborhood effects and fit metrics
    Effects,
    /// Shares of each feature and 5D group
    Decompose,
    /// SHAP tables and the repeated-fit moderation check
    Explain,
    /// Preset and custom housing scenarios
    Scenario,
    /// Every stage in order
    Run {
        /// include the moderation check
        #[arg(long)]
        explain: bool,
    },
    /// Write a synthetic city in the input format, with its ground truth
    Synth {
        /// target directory
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        neighborhoods: Option<usize>,
        /// JSON city spec; flags override its values
        #[arg(long)]
        spec: Option<PathBuf>,
    },
    /// Serve a completed output directory over HTTP
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        /// static UI assets served under `/`
        #[arg(long = "static")]
        static_dir: Option<PathBuf>,
    },
}

pub fn resolve_config(g: &GlobalArgs) -> Result<PipelineConfig, PipelineError> {
    let mut cfg = match &g.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(k) = g.folds {
        cfg.folds = k;
    }
    if let Some(d) = &g.input {
        cfg.input_dir = d.clone();
    }
    if let Some(d) = &g.output {
        cfg.output_dir = d.clone();
    }
    Ok(cfg)
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

fn synth(g: &GlobalArgs, out: &Path, n: Option<usize>, spec: Option<&PathBuf>) -> Result<Value, PipelineError> {
    let mut s = match spec {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|_| PipelineError::MissingInput { path: p.clone() })?;
            serde_json::from_str(&text).map_err(|e| PipelineError::Config(e.to_string()))?
        }
        None => CitySpec::default(),
    };
    if let Some(n) = n {
        s.n_neighborhoods = n;
    }
    if let Some(seed) = g.seed {
        s.seed = seed;
    }
    let city = generate_city(&s);
    city.write(out).map_err(|e| PipelineError::Artifact {
        path: out.to_path_buf(),
        reason: e.to_string(),
    })?;
    Ok(json!({
        "schema_version": pipeline::ARTIFACT_SCHEMA_VERSION,
        "out": out.display().to_string(),
        "neighborhoods": city.neighborhoods.len(),
        "households": city.households.len(),
        "trips": city.trips.len(),
        "spec": s,
    }))
}

/// Runs one subcommand, returning its JSON summary for stdout.
pub fn execute(cli: &Cli) -> Result<Value, PipelineError> {
    if let Command::Synth { out, neighborhoods, spec } = &cli.command {
        return synth(&cli.global, out, *neighborhoods, spec.as_ref());
    }
    let cfg = resolve_config(&cli.global)?;
    Ok(match &cli.command {
        Command::Ingest => to_value(&pipeline::run_ingest(&cfg)?),
        Command::Features => {
            let set = pipeline::run_features(&cfg)?;
            json!({
                "schema_version": set.schema_version,
                "neighborhoods": set.profiles.len(),
                "low_support": set.profiles.iter().filter(|p| p.low_support).count(),
                "unsurveyed": set.unsurveyed,
                "centers": set.centers,
            })
        }
        Command::Fit => {
            let fit = pipeline::run_fit(&cfg)?;
            json!({
                "schema_version": pipeline::ARTIFACT_SCHEMA_VERSION,
                "n_trees": fit.model.trees.len(),
                "nuisance_r2_y": fit.residuals.nuisance_r2_y,
                "nuisance_r2_t": fit.residuals.nuisance_r2_t,
            })
        }
        Command::Effects => to_value(&pipeline::run_effects(&cfg)?.metrics),
        Command::Decompose => to_value(&pipeline::run_decompose(&cfg)?),
        Command::Explain => to_value(&pipeline::run_explain(&cfg)?),
        Command::Scenario => to_value(&pipeline::run_scenario(&cfg)?),
        Command::Run { explain } => to_value(&pipeline::run_all(&cfg, *explain)?),
        Command::Serve { addr, static_dir } => {
            crate::server::serve(&cfg, *addr, static_dir.clone())?;
            json!({"schema_version": pipeline::ARTIFACT_SCHEMA_VERSION, "stopped": true})
        }
        Command::Synth { .. } => unreachable!(),
    })
}
