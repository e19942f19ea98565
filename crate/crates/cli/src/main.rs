use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dmpcut::{load_config, run, CliError, Experiment};
use dmpcut_core::mesh::{generate, MeshFamily, MeshKind};

#[derive(Parser)]
#[command(name = "dmpcut", version, about = "Maximum-principle cutoff experiments for finite-element solutions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a configuration file.
    Run { config: PathBuf },
    /// Scan mesh families for DMP violations (`experiment = dmp_search`).
    Search { config: PathBuf },
    /// Generate a mesh and write it in text form.
    Mesh {
        #[arg(long, default_value = "structured")]
        kind: String,
        #[arg(long, default_value_t = 4)]
        n: usize,
        #[arg(long, default_value_t = 0.0)]
        perturbation: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        output: PathBuf,
    },
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("DMPCUT_THREADS") else { return Ok(()) };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("DMPCUT_THREADS: `{raw}` is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(format!("DMPCUT_THREADS: {e}")))
}

fn dispatch(command: Command) -> Result<(), CliError> {
    configure_threads()?;
    match command {
        Command::Run { config } => {
            let cfg = load_config(&config)?;
            let out = run(&cfg)?;
            print!("{}", out.report(&cfg));
        }
        Command::Search { config } => {
            let cfg = load_config(&config)?;
            if cfg.experiment != Experiment::DmpSearch {
                return Err(CliError::Config(format!(
                    "experiment: `search` needs dmp_search, found {}",
                    cfg.experiment.as_str()
                )));
            }
            let out = run(&cfg)?;
            print!("{}", out.results);
        }
        Command::Mesh { kind, n, perturbation, seed, output } => {
            let kind: MeshKind = kind.parse()?;
            let mesh = generate(&MeshFamily::new(kind, n, perturbation, seed))?;
            mesh.save(&output).map_err(|e| match e {
                dmpcut_core::Error::Io(source) => CliError::Io { path: output.clone(), source },
                other => other.into(),
            })?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dmpcut: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
