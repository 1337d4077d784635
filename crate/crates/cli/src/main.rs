use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use anyhow::{anyhow, Context};
use binfecund_core::binary::Compressor;
use binfecund_core::build::CrashLog;
use binfecund_core::campaign::{run_campaign, CampaignConfig, RunControl};
use binfecund_core::report::{build_report, crash_groups, format_crash_table, Baselines, ReportError};
use binfecund_core::service::{run_service, ServiceConfig};
use binfecund_core::{parse_catalog, CampaignStats};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "binfecund", version, about = "Search compiler flags for structurally distinct binaries")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a campaign described by a TOML config.
    Run {
        #[arg(short, long)]
        config: PathBuf,
    },
    /// NCD of every archived variant against O0 (and optionally O3) baselines, as CSV.
    Report {
        #[arg(short, long)]
        archive: PathBuf,
        #[arg(short, long)]
        program: Option<String>,
        /// Baseline binary, either `PATH` for every program or `PROGRAM=PATH`.
        #[arg(long, required = true)]
        o0: Vec<String>,
        #[arg(long)]
        o3: Vec<String>,
        /// LZMA preset used for NCD.
        #[arg(long, default_value_t = 9, value_parser = clap::value_parser!(u32).range(0..=9))]
        level: u32,
    },
    /// Group recorded compiler crashes by signature.
    Crashes {
        #[arg(short, long)]
        archive: PathBuf,
    },
    /// Serve the fitness checker over HTTP.
    Serve {
        #[arg(short, long)]
        config: PathBuf,
    },
    /// Validate a flag catalog and print its layout summary.
    CatalogCheck { file: PathBuf },
}

/// An error plus the process exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    fn config(error: impl Into<anyhow::Error>) -> Self {
        Self { code: 2, error: error.into() }
    }

    fn runtime(error: impl Into<anyhow::Error>) -> Self {
        Self { code: 1, error: error.into() }
    }
}

fn cmd_run(config: PathBuf) -> Result<(), Failure> {
    let campaign = CampaignConfig::load(&config)
        .and_then(CampaignConfig::into_campaign)
        .map_err(|e| if e.is_configuration() { Failure::config(e) } else { Failure::runtime(e) })?;
    let stop = Arc::new(AtomicBool::new(false));
    {
        let stop = stop.clone();
        ctrlc::set_handler(move || stop.store(true, Ordering::Relaxed))
            .context("installing signal handler")
            .map_err(Failure::runtime)?;
    }
    let progress = |s: &CampaignStats| println!("{}", s.progress_line());
    let control = RunControl {
        stop: Some(&stop),
        on_progress: Some(&progress),
        on_iteration: None,
    };
    let outcome = run_campaign(&campaign, control)
        .map_err(|e| if e.is_configuration() { Failure::config(e) } else { Failure::runtime(e) })?;
    if stop.load(Ordering::Relaxed) {
        eprintln!("interrupted; checkpoint written");
    }
    println!("unique={}", outcome.stats.unique_binaries);
    Ok(())
}

fn cmd_report(
    archive: PathBuf,
    program: Option<String>,
    o0: Vec<String>,
    o3: Vec<String>,
    level: u32,
) -> Result<(), Failure> {
    let baselines = Baselines::from_args(&o0, &o3);
    let report = build_report(&archive, program.as_deref(), &baselines, &Compressor::new(level)).map_err(|e| match e {
        ReportError::Read { .. } => Failure::config(e),
        _ => Failure::runtime(e),
    })?;
    print!("{}", report.to_csv());
    if report.has_errors() {
        let missing: Vec<&str> = report
            .programs
            .iter()
            .filter(|p| p.error.is_some())
            .map(|p| p.program_id.as_str())
            .collect();
        return Err(Failure::runtime(anyhow!("no baseline for: {}", missing.join(", "))));
    }
    Ok(())
}

fn cmd_crashes(archive: PathBuf) -> Result<(), Failure> {
    let path = CrashLog::under(&archive);
    let records = CrashLog::read(&path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(Failure::runtime)?;
    print!("{}", format_crash_table(&crash_groups(&records)));
    Ok(())
}

fn cmd_serve(config: PathBuf) -> Result<(), Failure> {
    let config = ServiceConfig::load(&config).map_err(|e| Failure::config(anyhow!(e)))?;
    let bind = config.bind.clone();
    run_service(config)
        .with_context(|| format!("serving on {bind}"))
        .map_err(Failure::runtime)
}

fn cmd_catalog_check(file: PathBuf) -> Result<(), Failure> {
    let text = std::fs::read_to_string(&file)
        .with_context(|| format!("cannot read {}", file.display()))
        .map_err(Failure::config)?;
    let catalog = parse_catalog(&text)
        .with_context(|| file.display().to_string())
        .map_err(Failure::config)?;
    println!("{catalog}");
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config } => cmd_run(config),
        Command::Report {
            archive,
            program,
            o0,
            o3,
            level,
        } => cmd_report(archive, program, o0, o3, level),
        Command::Crashes { archive } => cmd_crashes(archive),
        Command::Serve { config } => cmd_serve(config),
        Command::CatalogCheck { file } => cmd_catalog_check(file),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("binfecund: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
