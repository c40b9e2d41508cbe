use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use visannot_core::engine::question_upper_bound;
use visannot_core::reliability::{krippendorff_alpha_nominal, ReliabilityData};
use visannot_core::service::{AnnotationService, DATA_DIR_ENV};
use visannot_core::simulation::{run_method_comparison, SimConfig};
use visannot_core::storage::{
    export_dataset, export_to_ndjson, ingest_manifest, localize_all, parse_detector_output,
    replay_state, EventLog, ExportOptions, ImageCatalog,
};
use visannot_core::{Hierarchy, HierarchyError};

#[derive(Debug, Parser)]
#[command(
    name = "visannot",
    version,
    about = "Hierarchical visual annotation campaigns"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Csv,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a hierarchy document and list every violation.
    ValidateHierarchy { path: PathBuf },
    /// Validate manifests, apply detector crops and merge into one catalog.
    Ingest {
        #[arg(required = true)]
        manifests: Vec<PathBuf>,
        /// Detector output, one JSON object per line.
        #[arg(long)]
        detections: Option<PathBuf>,
        #[arg(long, default_value_t = 0.5)]
        min_confidence: f64,
        /// Catalog file to merge into and rewrite; stdout when absent.
        #[arg(long)]
        catalog: Option<PathBuf>,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Directory holding one event log per campaign.
        #[arg(long, env = DATA_DIR_ENV)]
        log_path: Option<PathBuf>,
        /// Seconds between sweeps for idle claims.
        #[arg(long, default_value_t = 30)]
        expire_every: u64,
    },
    /// Run a method comparison from a config file.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the seed in the config.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
        /// Also write the cost table as CSV.
        #[arg(long)]
        cost_out: Option<PathBuf>,
    },
    /// Compute nominal alpha from a unit,observer,value CSV file.
    Alpha { path: PathBuf },
    /// Export the labelled dataset recorded in a campaign event log.
    Export {
        #[arg(long)]
        log_path: PathBuf,
        #[arg(long)]
        include_unresolved: bool,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("cannot write {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn validate_hierarchy(path: &Path) -> Result<()> {
    match Hierarchy::parse(&read(path)?) {
        Ok(h) => {
            let depth = h.nodes().iter().map(|n| n.id.depth()).max().unwrap_or(0);
            println!(
                "valid: {} categories, {} leaves, depth {}, at most {} questions per image",
                h.len(),
                h.leaves().len(),
                depth,
                question_upper_bound(&h)
            );
            Ok(())
        }
        Err(HierarchyError::Validation(violations)) => {
            for v in &violations {
                eprintln!("{v}");
            }
            bail!("{}: {} violation(s)", path.display(), violations.len())
        }
        Err(e) => Err(e).with_context(|| format!("{}", path.display())),
    }
}

fn ingest(
    manifests: &[PathBuf],
    detections: Option<&Path>,
    min_confidence: f64,
    catalog_path: Option<&Path>,
) -> Result<()> {
    let mut catalog = ImageCatalog::new();
    if let Some(p) = catalog_path.filter(|p| p.exists()) {
        catalog.ingest(ingest_manifest(&read(p)?).with_context(|| p.display().to_string())?);
    }
    let detections = match detections {
        Some(p) => parse_detector_output(&read(p)?).with_context(|| p.display().to_string())?,
        None => Vec::new(),
    };
    for path in manifests {
        let records = ingest_manifest(&read(path)?).with_context(|| path.display().to_string())?;
        let records = localize_all(&records, &detections, min_confidence)?;
        let report = catalog.ingest(records);
        eprintln!(
            "{}: {} added, {} duplicate(s), {} conflict(s)",
            path.display(),
            report.added,
            report.duplicates.len(),
            report.conflicts.len()
        );
        for id in &report.conflicts {
            eprintln!(
                "  conflict: {id} differs from the catalogued record, kept the catalogued one"
            );
        }
    }
    let text: String = catalog
        .records()
        .iter()
        .map(|r| r.to_manifest_line() + "\n")
        .collect();
    write_or_print(catalog_path, &text)
}

async fn serve(port: u16, host: &str, log_path: Option<&Path>, expire_every: u64) -> Result<()> {
    let service = match log_path {
        Some(dir) => AnnotationService::open(dir)?,
        None => AnnotationService::in_memory(),
    };
    let shared = visannot_service::shared(service);
    let sweeper = shared.clone();
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(Duration::from_secs(expire_every.max(1)));
        loop {
            tick.tick().await;
            let result = sweeper.lock().map(|mut s| s.expire_stale());
            if let Ok(Err(e)) = result {
                eprintln!("claim sweep failed: {e}");
            }
        }
    });
    let addr: SocketAddr = format!("{host}:{port}")
        .parse()
        .with_context(|| format!("invalid address {host}:{port}"))?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, visannot_service::router(shared))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

fn simulate(
    config: &Path,
    seed: Option<u64>,
    format: Format,
    cost_out: Option<&Path>,
) -> Result<()> {
    let (mut cfg, h) = SimConfig::load(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let report = run_method_comparison(&cfg, &h)?;
    match format {
        Format::Text => print!("{}", report.to_text()),
        Format::Csv => print!("{}", report.to_csv()),
    }
    if let Some(p) = cost_out {
        fs::write(p, report.cost_csv()).with_context(|| format!("cannot write {}", p.display()))?;
    }
    Ok(())
}

fn alpha(path: &Path) -> Result<()> {
    let data = ReliabilityData::from_csv(&read(path)?)?;
    let a = krippendorff_alpha_nominal(&data)?;
    println!("{a:?}");
    Ok(())
}

fn export(log_path: &Path, include_unresolved: bool, out: Option<&Path>) -> Result<()> {
    let records = EventLog::parse(&read(log_path)?)?;
    let state = replay_state(&records)?;
    let rows = export_dataset(&state, ExportOptions { include_unresolved })?;
    write_or_print(out, &export_to_ndjson(&rows))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::ValidateHierarchy { path } => validate_hierarchy(&path),
        Command::Ingest {
            manifests,
            detections,
            min_confidence,
            catalog,
        } => ingest(
            &manifests,
            detections.as_deref(),
            min_confidence,
            catalog.as_deref(),
        ),
        Command::Serve {
            port,
            host,
            log_path,
            expire_every,
        } => tokio::runtime::Runtime::new()?.block_on(serve(
            port,
            &host,
            log_path.as_deref(),
            expire_every,
        )),
        Command::Simulate {
            config,
            seed,
            format,
            cost_out,
        } => simulate(&config, seed, format, cost_out.as_deref()),
        Command::Alpha { path } => alpha(&path),
        Command::Export {
            log_path,
            include_unresolved,
            out,
        } => export(&log_path, include_unresolved, out.as_deref()),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
