//! `hullunc`: convex-hull uncertainty scores for batches of generated responses.
//!
//! Exit codes: 0 when every cell was scored (guarded cells count as scored),
//! 1 when some cells failed, 2 on configuration or input errors.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use hull_uncertainty::clustering::EpsSchedule;
use hull_uncertainty::ingestion::{write_records, EmbeddingProviderConfig, ProviderMode};
use hull_uncertainty::pipeline::{AlgorithmConfig, CellOutcome, CellResult, Guards};
use hull_uncertainty::report::fmt4;
use hull_uncertainty::synth::{generate, Dispersion, SynthConfig};
use hull_uncertainty::workflow::{analyze, inspect_cell, RunConfig};

/// Quantify response uncertainty as the convex-hull area of clustered embeddings.
#[derive(Parser)]
#[command(name = "hullunc", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score every (prompt, model, temperature) cell and write reports
    Analyze {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Score and print a single cell
    Cell {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, env = "HULLUNC_PROMPT_ID")]
        prompt_id: String,
        #[arg(long, env = "HULLUNC_MODEL")]
        model: String,
        #[arg(long, env = "HULLUNC_TEMPERATURE")]
        temperature: f64,
    },
    /// Write a seeded synthetic record file
    Synth(SynthArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Line-delimited JSON record file
    #[arg(long, env = "HULLUNC_INPUT")]
    input: PathBuf,
    /// Output directory for reports and hull dumps
    #[arg(long, env = "HULLUNC_OUT", default_value = "hullunc-out")]
    out: PathBuf,
    /// Where embeddings come from
    #[arg(long, env = "HULLUNC_PROVIDER", default_value = "inline")]
    provider: ProviderMode,
    /// Embedding service URL (http provider)
    #[arg(long, env = "HULLUNC_ENDPOINT")]
    endpoint: Option<String>,
    /// Embedding cache directory (http provider)
    #[arg(long, env = "HULLUNC_CACHE")]
    cache: Option<PathBuf>,
    /// Sidecar embedding file (file provider)
    #[arg(long, env = "HULLUNC_SIDECAR")]
    sidecar: Option<PathBuf>,
    /// Texts per embedding request
    #[arg(long, env = "HULLUNC_BATCH_SIZE", default_value_t = 32, value_parser = clap::value_parser!(u64).range(1..))]
    batch_size: u64,
    /// Concurrent embedding requests
    #[arg(long, env = "HULLUNC_MAX_IN_FLIGHT", default_value_t = 4, value_parser = clap::value_parser!(u64).range(1..))]
    max_in_flight: u64,
    /// Per-request timeout in seconds
    #[arg(long, env = "HULLUNC_TIMEOUT_SECS", default_value_t = 30)]
    timeout_secs: u64,
    /// DBSCAN radius is eps_base * temperature * eps_scale
    #[arg(long, env = "HULLUNC_EPS_BASE", default_value_t = 0.25)]
    eps_base: f64,
    #[arg(long, env = "HULLUNC_EPS_SCALE", default_value_t = 4.0)]
    eps_scale: f64,
    /// Fixed DBSCAN radius, ignoring temperature
    #[arg(long, env = "HULLUNC_EPS")]
    eps: Option<f64>,
    #[arg(long, env = "HULLUNC_MIN_SAMPLES", default_value_t = 3, value_parser = clap::value_parser!(u64).range(1..))]
    min_samples: u64,
    /// Cells with fewer responses score 0
    #[arg(long, env = "HULLUNC_MIN_POINTS", default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
    min_points: u64,
    /// Decimal places for the distinct-point check before building a hull
    #[arg(long, env = "HULLUNC_ROUND_DECIMALS", default_value_t = 6)]
    round_decimals: u32,
    /// Write per-cell hull dumps
    #[arg(long, env = "HULLUNC_DUMP_HULLS")]
    dump_hulls: bool,
    /// Worker threads for cell scoring
    #[arg(long, env = "HULLUNC_PARALLELISM", default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    parallelism: u64,
}

impl RunArgs {
    fn into_config(self) -> RunConfig {
        RunConfig {
            input_path: self.input,
            output_dir: self.out,
            provider: EmbeddingProviderConfig {
                mode: self.provider,
                endpoint_url: self.endpoint,
                cache_path: self.cache,
                sidecar_path: self.sidecar,
                batch_size: self.batch_size as usize,
                timeout: Duration::from_secs(self.timeout_secs),
                max_in_flight: self.max_in_flight as usize,
                ..EmbeddingProviderConfig::default()
            },
            algorithm: AlgorithmConfig {
                eps: EpsSchedule {
                    base: self.eps_base,
                    scale: self.eps_scale,
                },
                eps_override: self.eps,
                min_samples: self.min_samples as usize,
                guards: Guards {
                    min_points: self.min_points as usize,
                    round_decimals: self.round_decimals,
                },
            },
            parallelism: self.parallelism as usize,
            dump_hulls: self.dump_hulls,
        }
    }
}

#[derive(Args)]
struct SynthArgs {
    /// Record file to write
    #[arg(long, env = "HULLUNC_OUT")]
    out: PathBuf,
    #[arg(long, env = "HULLUNC_SEED", default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 5)]
    prompts_per_type: usize,
    #[arg(long, default_value_t = 20)]
    responses_per_cell: usize,
    /// Comma-separated temperatures
    #[arg(long, value_delimiter = ',', default_values_t = [0.25, 0.5, 0.75, 1.0])]
    temperatures: Vec<f64>,
    #[arg(long, default_value_t = 16)]
    embed_dim: usize,
    /// Comma-separated model names
    #[arg(long, value_delimiter = ',', default_values_t = ["synth-a".to_string(), "synth-b".to_string(), "synth-c".to_string()])]
    models: Vec<String>,
    #[arg(long, default_value_t = 0.3)]
    dispersion_easy: f64,
    #[arg(long, default_value_t = 0.6)]
    dispersion_moderate: f64,
    #[arg(long, default_value_t = 1.5)]
    dispersion_confusing: f64,
    /// Allow fewer than 10 responses per cell
    #[arg(long)]
    allow_small_cells: bool,
}

enum Failure {
    Config(anyhow::Error),
    Cells,
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Config(e)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Analyze { run } => cmd_analyze(run.into_config()),
        Command::Cell {
            run,
            prompt_id,
            model,
            temperature,
        } => cmd_cell(run.into_config(), &prompt_id, &model, temperature),
        Command::Synth(args) => cmd_synth(args).map_err(Failure::Config),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Cells) => ExitCode::from(1),
        Err(Failure::Config(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn cmd_analyze(config: RunConfig) -> Result<(), Failure> {
    let summary = analyze(&config).context("analyze failed")?;
    println!(
        "scored {} cell(s), {} failed, {} rejected line(s)",
        summary.cells,
        summary.failed.len(),
        summary.rejects.len()
    );
    for reject in &summary.rejects {
        println!("  rejected line {}: {}", reject.line, reject.reason);
    }
    if summary.fetch.requests > 0 || summary.fetch.cache_hits > 0 {
        println!(
            "embeddings: {} request(s), {} retr(ies), {} cache hit(s)",
            summary.fetch.requests, summary.fetch.retries, summary.fetch.cache_hits
        );
    }
    println!("reports written to {}", config.output_dir.display());
    if summary.all_computed() {
        return Ok(());
    }
    eprintln!("failed cells:");
    for (key, error) in &summary.failed {
        eprintln!("  {key}: {error}");
    }
    Err(Failure::Cells)
}

fn print_cell(r: &CellResult, min_points: usize) {
    println!("cell: {}", r.key);
    println!("prompt type: {}", r.prompt_type);
    println!("responses: {}", r.n_responses);
    match r.guard {
        Some(guard) => println!(
            "total hull area: {} (guard: {}, {} < {min_points} responses)",
            fmt4(r.total_hull_area),
            guard.as_str(),
            r.n_responses
        ),
        None => println!("total hull area: {}", fmt4(r.total_hull_area)),
    }
    if let Some(eps) = r.eps {
        println!("eps: {}", fmt4(eps));
    }
    println!("clusters: {}", r.num_clusters);
    println!("noise points: {}", r.noise_count);
    for c in &r.clusters {
        println!(
            "  cluster {}: {} point(s), area {} ({:?})",
            c.label,
            c.point_count,
            fmt4(c.area),
            c.status
        );
    }
}

fn cmd_cell(
    config: RunConfig,
    prompt_id: &str,
    model: &str,
    temperature: f64,
) -> Result<(), Failure> {
    let (outcome, dump) =
        inspect_cell(&config, prompt_id, model, temperature).map_err(anyhow::Error::from)?;
    match outcome {
        CellOutcome::Computed(r) => {
            print_cell(&r, config.algorithm.guards.min_points);
            if let Some(path) = dump {
                println!("hull dump: {}", path.display());
            }
            Ok(())
        }
        CellOutcome::Failed(f) => {
            eprintln!("cell {} failed: {}", f.key, f.error);
            Err(Failure::Cells)
        }
    }
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let config = SynthConfig {
        seed: args.seed,
        prompts_per_type: args.prompts_per_type,
        responses_per_cell: args.responses_per_cell,
        temperatures: args.temperatures,
        embed_dim: args.embed_dim,
        dispersion: Dispersion {
            easy: args.dispersion_easy,
            moderate: args.dispersion_moderate,
            confusing: args.dispersion_confusing,
        },
        models: args.models,
        allow_small_cells: args.allow_small_cells,
    };
    let records = generate(&config)?;
    write_records(&args.out, &records)?;
    println!(
        "wrote {} record(s) to {}",
        records.len(),
        args.out.display()
    );
    Ok(())
}
