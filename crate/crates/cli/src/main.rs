use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use ecsk_cli::commands::{cmd_export, cmd_pipeline, cmd_reach, cmd_verify, ExportFormat};
use ecsk_cli::error::{CliError, CliResult};
use ecsk_cli::export::Slice;
use ecsk_cli::PipelineConfig;

#[derive(Parser, Debug)]
#[command(name = "ecsk", version, about = "Eyes-closed safety kernel pipeline")]
struct Cli {
    /// Worker threads for the solver and simulator (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Overrides the config's rng_seed; the verification seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Forward reachable set of the external system.
    Reach { config: OsString },
    /// Reach, unsafe tube, avoid tube and kernel artifacts.
    Pipeline { config: OsString },
    /// Closed-loop runs of a kernel under full observation loss.
    Verify {
        kernel: OsString,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        /// Minimum kernel value of the sampled start states (m).
        #[arg(long, default_value_t = 0.5)]
        margin: f64,
        /// Report path; defaults to verify_report.json next to the kernel.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Writes an artifact as VTK files or a CSV section.
    Export {
        artifact: OsString,
        #[arg(long, value_enum)]
        format: Format,
        /// Grid dimension held fixed for csv-slice.
        #[arg(long, requires = "slice_coord")]
        slice_dim: Option<usize>,
        /// Coordinate of the fixed dimension.
        #[arg(long, requires = "slice_dim", allow_hyphen_values = true)]
        slice_coord: Option<f64>,
        /// Snapshot time for csv-slice; defaults to the first.
        #[arg(long, allow_hyphen_values = true)]
        time: Option<f64>,
        /// Output directory (vtk) or file (csv-slice).
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Format {
    Vtk,
    CsvSlice,
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    match cli.command {
        Command::Reach { config } => {
            let cfg = PipelineConfig::load(config.as_ref())?.resolve(cli.seed);
            let path = cmd_reach(&cfg)?;
            println!("{}", path.display());
        }
        Command::Pipeline { config } => {
            let cfg = PipelineConfig::load(config.as_ref())?.resolve(cli.seed);
            let out = cmd_pipeline(&cfg)?;
            println!("{}", out.dir.display());
        }
        Command::Verify {
            kernel,
            trials,
            margin,
            report,
        } => {
            let kernel = PathBuf::from(kernel);
            let report = report.unwrap_or_else(|| {
                kernel
                    .parent()
                    .unwrap_or(std::path::Path::new("."))
                    .join("verify_report.json")
            });
            let rec = cmd_verify(&kernel, trials, margin, cli.seed.unwrap_or(0), &report)?;
            println!(
                "{} trials, {} collisions, {} aborted -> {}",
                rec.trials,
                rec.collisions,
                rec.aborted,
                report.display()
            );
        }
        Command::Export {
            artifact,
            format,
            slice_dim,
            slice_coord,
            time,
            out,
        } => {
            let artifact = PathBuf::from(artifact);
            let slice = slice_dim.zip(slice_coord).map(|(dim, coord)| Slice { dim, coord });
            let format = match format {
                Format::Vtk => ExportFormat::Vtk,
                Format::CsvSlice => ExportFormat::CsvSlice,
            };
            for p in cmd_export(&artifact, format, slice, time, &out)? {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
