use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use aslks_cli::bench::{self, BenchArgs};
use aslks_cli::verify::{self, Suite, CORRUPT_ENV};
use aslks_cli::{configure_threads, flops, metrics_cmd, parse_dims, read_text, write_output, CliError, CliResult};
use aslks_core::{DType, Dims4};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "aslks", version, about = "Verification, benchmarking and accounting for ASC and LKSC operators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

fn parse_dtype(s: &str) -> Result<DType, String> {
    match s {
        "f32" => Ok(DType::F32),
        "f64" => Ok(DType::F64),
        _ => Err(format!("expected f32 or f64, got '{s}'")),
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run oracle, equivalence and gradient suites and print a JSON report.
    Verify {
        #[arg(long, value_enum, default_value_t = Suite::All)]
        suite: Suite,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_parser = parse_dtype, default_value = "f64")]
        dtype: DType,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Time the dense large kernel against the shift-tile decomposition.
    Bench {
        #[arg(long, value_parser = parse_dims, default_value = "1,16,128,128")]
        input: Dims4,
        #[arg(long, default_value_t = 51)]
        kernel: usize,
        #[arg(long, default_value_t = 5)]
        tile: usize,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_parser = parse_dtype, default_value = "f32")]
        dtype: DType,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parameter and MAC counts of a block stack; JSON plus a CSV table.
    Flops {
        #[arg(long)]
        config: PathBuf,
        /// Defaults to 1 × (first block c_in) × 64 × 64.
        #[arg(long, value_parser = parse_dims)]
        input: Option<Dims4>,
        /// JSON goes here and the CSV next to it with a `.csv` extension.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// mAP@50 over JSON detection and ground-truth files.
    Metrics {
        #[arg(long)]
        detections: PathBuf,
        #[arg(long = "ground-truth")]
        ground_truth: PathBuf,
        #[arg(long = "n-classes")]
        n_classes: usize,
    },
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("report serializes")
}

fn run(cmd: Command) -> CliResult<()> {
    match cmd {
        Command::Verify { suite, seed, dtype, out } => {
            let corrupt = std::env::var(CORRUPT_ENV).ok();
            let t0 = Instant::now();
            let report = verify::run(suite, seed, dtype, corrupt.as_deref());
            eprintln!(
                "verify {suite}: {} cases, {} failed, {:.2}s",
                report.cases.len(),
                report.failed().count(),
                t0.elapsed().as_secs_f64()
            );
            write_output(out.as_deref(), &to_json(&report))?;
            if report.pass {
                Ok(())
            } else {
                let names: Vec<&str> = report.failed().map(|c| c.name.as_str()).collect();
                Err(CliError::Verification(format!("failing cases: {}", names.join(", "))))
            }
        }
        Command::Bench { input, kernel, tile, repeats, seed, dtype, out } => {
            let report = bench::run(&BenchArgs { input, kernel, tile, repeats, seed, dtype })?;
            write_output(out.as_deref(), &to_json(&report))
        }
        Command::Flops { config, input, out } => {
            let cfgs = flops::parse_config(&read_text(&config)?)?;
            let cmp = flops::run(&cfgs, input)?;
            write_output(out.as_deref(), &to_json(&cmp))?;
            if let Some(p) = out {
                write_output(Some(&p.with_extension("csv")), &flops::to_csv(&cmp)?)?;
            }
            Ok(())
        }
        Command::Metrics { detections, ground_truth, n_classes } => {
            let r = metrics_cmd::run(&read_text(&detections)?, &read_text(&ground_truth)?, n_classes)?;
            println!("{}", metrics_cmd::format_result(&r));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|_| run(cli.command));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
