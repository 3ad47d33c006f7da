use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use disham_cli::runner;
use disham_cli::scenario::{parse_scenario, Mode, Scenario};

#[derive(Parser)]
#[command(
    name = "disham",
    about = "Simulate Hamiltonian trajectories across a discontinuity surface"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and emit trajectory CSV files.
    Run {
        scenario_file: PathBuf,
        /// Directory for emitted files.
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        /// Override the scenario's mode (SMOOTH, LIMIT, VINOGRADOV, COMPARE).
        #[arg(long)]
        mode: Option<String>,
        /// Override the scenario's layer widths (repeatable).
        #[arg(long = "delta")]
        deltas: Vec<f64>,
    },
    /// Parse and validate a scenario file without running it.
    Check { scenario_file: PathBuf },
}

fn load(path: &PathBuf) -> Result<Scenario, (i32, String)> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| (4, format!("cannot read {}: {e}", path.display())))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "scenario".to_string());
    let s = parse_scenario(&text, &name).map_err(|e| (4, e.to_string()))?;
    if s.normalized_surface_data {
        eprintln!("notice: surface (a, b) data was rescaled to unit normalization");
    }
    Ok(s)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Check { scenario_file } => load(&scenario_file).map(|s| {
            println!(
                "ok: dim {}, mode {}, {} level(s), t in [{}, {}]",
                s.dim,
                s.mode.tag().to_uppercase(),
                s.levels.len(),
                s.init.t,
                s.t_end
            );
        }),
        Command::Run {
            scenario_file,
            out_dir,
            mode,
            deltas,
        } => load(&scenario_file).and_then(|mut s| {
            if let Some(m) = mode {
                s.mode = Mode::parse(&m).ok_or_else(|| {
                    (
                        4,
                        format!("--mode: `{m}` is not one of SMOOTH, LIMIT, VINOGRADOV, COMPARE"),
                    )
                })?;
            }
            if !deltas.is_empty() {
                if deltas.iter().any(|d| !(*d > 0.0)) {
                    return Err((4, "--delta values must be positive".to_string()));
                }
                s.deltas = deltas;
            }
            let report = runner::run(&s, &out_dir).map_err(|f| (f.code, f.message))?;
            print!("{}", report.stdout);
            for f in &report.files {
                println!("wrote {}", f.display());
            }
            Ok(())
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err((code, message)) => {
            eprintln!("error: {message}");
            ExitCode::from(code as u8)
        }
    }
}
