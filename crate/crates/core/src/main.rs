use std::path::PathBuf;
use std::process::ExitCode;

use augunlearn::experiment::{
    preset, run_experiment, verify, write_reports, ExperimentConfig, ReportFormat, RunManifest,
    PRESETS,
};
use augunlearn::Error;
use clap::{Parser, Subcommand, ValueEnum};

/// Augmentation-aware machine unlearning experiments.
///
/// Set UNLEARN_SEED to a seed or comma-separated seed list to override the
/// configured seeds. Exit codes: 0 ok, 1 config error, 2 run failures, 3 I/O error.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment grid described by a config file.
    Run { config: PathBuf },
    /// Re-emit the reports of a finished run.
    Report {
        manifest: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Write a named preset config.
    Preset {
        #[arg(value_parser = PRESETS)]
        name: String,
        #[arg(long)]
        write: PathBuf,
    },
    /// Re-check stored checkpoints and metrics against a manifest.
    Verify { manifest: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

const CONFIG_ERROR: u8 = 1;
const RUN_FAILURE: u8 = 2;
const IO_ERROR: u8 = 3;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. } => IO_ERROR,
        Error::Config { .. } | Error::Input(_) | Error::Format { .. } | Error::Serde(_) => {
            CONFIG_ERROR
        }
        _ => RUN_FAILURE,
    }
}

fn execute(cli: Cli) -> Result<u8, Error> {
    match cli.command {
        Command::Run { config } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            cfg.apply_seed_override()?;
            let manifest = run_experiment(&cfg)?;
            let failures = manifest.failures();
            println!(
                "{} runs, {} failed; reports in {}",
                manifest.runs.len(),
                failures,
                cfg.output_dir.display()
            );
            Ok(if failures > 0 { RUN_FAILURE } else { 0 })
        }
        Command::Report { manifest, format } => {
            let m = RunManifest::load(&manifest)?;
            let dir = manifest.parent().map(PathBuf::from).unwrap_or_default();
            let format = match format {
                Format::Csv => ReportFormat::Csv,
                Format::Json => ReportFormat::Json,
            };
            let written = write_reports(&m, &dir, &[format])?;
            if written.is_empty() {
                eprintln!("no completed runs to report");
                return Ok(RUN_FAILURE);
            }
            for w in written {
                println!("{}", dir.join(w).display());
            }
            Ok(if m.failures() > 0 { RUN_FAILURE } else { 0 })
        }
        Command::Preset { name, write } => {
            let text = preset(&name)?.to_toml()?;
            std::fs::write(&write, text).map_err(|e| Error::Io {
                path: write.clone(),
                source: e,
            })?;
            println!("wrote {}", write.display());
            Ok(0)
        }
        Command::Verify { manifest } => {
            let report = verify(&manifest)?;
            for p in &report.problems {
                println!("FAIL {p}");
            }
            println!(
                "checked {} runs, {} problems",
                report.checked,
                report.problems.len()
            );
            Ok(if report.ok() { 0 } else { RUN_FAILURE })
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // help and --version go to stdout and are not failures
            return ExitCode::from(if e.use_stderr() { CONFIG_ERROR } else { 0 });
        }
    };
    match execute(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
