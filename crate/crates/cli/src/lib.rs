//! Command-line front end: one subcommand per pipeline stage plus an
//! end-to-end `pipeline` run, all driven by a single TOML config.

pub mod commands;
pub mod config;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use thiserror::Error;
use urbanforge::ingest::IngestError;
use urbanforge::metrics::MetricsError;
use urbanforge::model::ModelError;
use urbanforge::planners::PlannerError;
use urbanforge::solver::SolverError;

use commands::{IngestOptions, PipelineOptions, PlanOptions};
use config::{OnLlmError, PipelineConfig};

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad config, unreadable input or invalid data. Exit code 2.
    #[error("{0}")]
    Input(String),
    /// The remote planner could not be used. Exit code 3.
    #[error("{0}")]
    Service(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Service(_) => 3,
        }
    }
}

macro_rules! input_error {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Input(e.to_string())
            }
        }
    )*};
}

input_error!(IngestError, MetricsError, ModelError, SolverError);

impl From<PlannerError> for CliError {
    fn from(e: PlannerError) -> Self {
        match e {
            PlannerError::Service(_) => CliError::Service(e.to_string()),
            other => CliError::Input(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "urbanforge", version, about = "Land-use layout ingestion, optimization and planning")]
pub struct Cli {
    /// Pipeline config (TOML). Defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the GA random seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides the output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Segment the map into a region inventory.
    Ingest {
        /// Map image; overrides the config.
        #[arg(long)]
        map: Option<PathBuf>,
        #[arg(long)]
        min_area: Option<u64>,
        /// Hue, saturation, value tolerance, e.g. `4,0.08,0.08`.
        #[arg(long, value_delimiter = ',')]
        hsv_tolerance: Option<Vec<f64>>,
        /// Keep only regions whose centroid falls on a white pixel.
        #[arg(long)]
        mask: Option<PathBuf>,
    },
    /// Greedy placement and GA refinement of an inventory or layout.
    Optimize {
        /// Defaults to `<out>/inventory.json`.
        #[arg(long)]
        inventory: Option<PathBuf>,
    },
    /// Collect regional proposals and integrate the accepted ones.
    Plan {
        /// Defaults to `<out>/stage2_layout.json`.
        #[arg(long)]
        layout: Option<PathBuf>,
        #[arg(long)]
        rounds: Option<usize>,
        #[arg(long, value_enum)]
        on_llm_error: Option<OnLlmError>,
    },
    /// Score a layout and append the row to the metrics CSV.
    Evaluate {
        #[arg(long)]
        layout: PathBuf,
        #[arg(long, default_value = "stage1")]
        stage: String,
        /// Defaults to `<out>/metrics.csv`.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Run every stage end to end.
    Pipeline {
        /// Stop after the optimizer.
        #[arg(long)]
        skip_plan: bool,
        #[arg(long, value_enum)]
        on_llm_error: Option<OnLlmError>,
    },
}

/// Loads the config and applies global flags. `--map` is applied before
/// validation so a config without a map can still drive `ingest`.
fn load_config(cli: &Cli) -> Result<PipelineConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Input(format!("cannot read config {}: {e}", path.display())))?;
            let mut cfg = PipelineConfig::from_toml(&text)?;
            cfg.resolve_paths(path.parent().unwrap_or(std::path::Path::new("")));
            cfg
        }
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.solver.ga.rng_seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    if let Command::Ingest {
        map,
        min_area,
        hsv_tolerance,
        ..
    } = &cli.command
    {
        if let Some(m) = map {
            cfg.map = Some(m.clone());
        }
        if let Some(a) = min_area {
            cfg.ingest.min_area = *a;
        }
        if let Some(t) = hsv_tolerance {
            let [h, s, v] = t[..] else {
                return Err(CliError::Input("--hsv-tolerance takes three values: h,s,v".into()));
            };
            cfg.ingest.hsv_tolerance = [h, s, v];
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::Ingest { mask, .. } => {
            commands::cmd_ingest(&cfg, &IngestOptions { mask: mask.clone() })?;
        }
        Command::Optimize { inventory } => {
            let path = inventory.clone().unwrap_or_else(|| cfg.out_path(commands::INVENTORY));
            let layout = commands::load_layout(&path)?;
            commands::cmd_optimize(&cfg, &layout)?;
        }
        Command::Plan {
            layout,
            rounds,
            on_llm_error,
        } => {
            let path = layout.clone().unwrap_or_else(|| cfg.out_path(&commands::layout_file(2)));
            let layout = commands::load_layout(&path)?;
            let opts = PlanOptions {
                rounds: rounds.unwrap_or(cfg.planning.rounds),
                on_llm_error: on_llm_error.unwrap_or(cfg.planning.on_llm_error),
            };
            commands::cmd_plan(&cfg, &layout, &opts)?;
        }
        Command::Evaluate { layout, stage, csv } => {
            let layout = commands::load_layout(layout)?;
            let csv = csv.clone().unwrap_or_else(|| cfg.out_path(commands::METRICS));
            commands::cmd_evaluate(&cfg, &layout, stage, &csv)?;
        }
        Command::Pipeline {
            skip_plan,
            on_llm_error,
        } => {
            let opts = PipelineOptions {
                skip_plan: *skip_plan,
                plan: PlanOptions {
                    rounds: cfg.planning.rounds,
                    on_llm_error: on_llm_error.unwrap_or(cfg.planning.on_llm_error),
                },
            };
            commands::cmd_pipeline(&cfg, &opts)?;
        }
    }
    Ok(())
}
