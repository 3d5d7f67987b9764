use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use wrom::config::ExperimentConfig;
use wrom::error::ErrorCategory;
use wrom::experiment::{self, UNREACHED};
use wrom::online::Extrapolation;
use wrom::{Error, Result};

#[derive(Parser)]
#[command(name = "wrom", version, about = "Barycentric model reduction of 1D two-phase flow")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Preset name (example1, example2) or path to a JSON config.
    #[arg(long, short, default_value = "example1")]
    config: String,
    /// Output directory (defaults to the config's, then out/<name>).
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct Tolerances {
    /// Comma-separated tolerances (defaults to the config's).
    #[arg(long, value_delimiter = ',')]
    tolerances: Option<Vec<f64>>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the full parameter sweep into a snapshot store.
    Generate {
        #[command(flatten)]
        common: Common,
    },
    /// Train the dictionary and fit the reduced model.
    Offline {
        #[command(flatten)]
        common: Common,
        /// Maximum dictionary size.
        #[arg(long)]
        n_max: Option<usize>,
    },
    /// Reconstruct profiles at new parameter points.
    Online {
        #[command(flatten)]
        common: Common,
        /// CSV with header and columns t, y1, ...
        #[arg(long)]
        points: PathBuf,
        /// Clamp points outside the training box instead of failing.
        #[arg(long)]
        clamp: bool,
    },
    /// Linear POD baseline.
    Pod {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        tol: Tolerances,
    },
    /// Atoms and POD modes needed per tolerance.
    Tables {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        tol: Tolerances,
    },
    /// Conditioning and simplex-volume curves.
    Diag {
        #[command(flatten)]
        common: Common,
    },
    /// Error landscape over the simplex of the first few atoms.
    Landscape {
        #[command(flatten)]
        common: Common,
        /// Index of the stored snapshot used as target.
        #[arg(long, default_value_t = 0)]
        snapshot: usize,
        /// Number of atoms (polygon vertices).
        #[arg(long, default_value_t = 3)]
        atoms: usize,
        /// Samples per side of the raster.
        #[arg(long, default_value_t = 201)]
        resolution: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot set up {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let category = e.category();
            let name = match category {
                ErrorCategory::Input => "input",
                ErrorCategory::Io => "io",
                ErrorCategory::Numerical => "numerical",
            };
            eprintln!("error ({name}): {e}");
            ExitCode::from(category.exit_code() as u8)
        }
    }
}

fn setup(common: &Common) -> Result<(ExperimentConfig, PathBuf)> {
    let config = experiment::load_config(&common.config)?;
    config.validate()?;
    let out = experiment::output_dir(&config, common.out.as_deref());
    Ok((config, out))
}

fn tolerances(config: &ExperimentConfig, tol: &Tolerances) -> Vec<f64> {
    tol.tolerances.clone().unwrap_or_else(|| config.tolerances.clone())
}

fn count(n: Option<usize>) -> String {
    n.map_or_else(|| UNREACHED.to_string(), |n| n.to_string())
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Generate { common } => {
            let (config, out) = setup(&common)?;
            let store = experiment::cmd_generate(&config, &out)?;
            println!(
                "{} snapshots in {}",
                store.len(),
                out.join(experiment::STORE_DIR).display()
            );
        }
        Command::Offline { common, n_max } => {
            let (config, out) = setup(&common)?;
            if n_max == Some(0) || n_max == Some(1) {
                return Err(Error::InvalidInput("--n-max must be at least 2".into()));
            }
            let result = experiment::cmd_offline(&config, &out, n_max)?;
            let report = &result.run.report;
            println!("n_atoms mean_l1 max_l1 mean_w2");
            for t in &result.training {
                println!("{} {:.6} {:.6} {:.6e}", t.n_atoms, t.mean_l1, t.max_l1, t.mean_w2);
            }
            if let Some(term) = report.termination {
                println!("stopped: {}", term.as_str());
            }
        }
        Command::Online { common, points, clamp } => {
            let (_, out) = setup(&common)?;
            let pts = experiment::read_points(&points)?;
            let truth = experiment::load_store(&out).ok();
            let mode = if clamp {
                Extrapolation::Clamp
            } else {
                Extrapolation::Error
            };
            let result = experiment::cmd_online(&out, &pts, truth.as_ref(), mode)?;
            println!(
                "{} reconstructions in {}",
                result.reconstructions.len(),
                out.join(experiment::ONLINE_DIR).display()
            );
            for (k, e) in &result.errors {
                println!("point {k}: relative L1 error {e:.6}");
            }
        }
        Command::Pod { common, tol } => {
            let (config, out) = setup(&common)?;
            let eps = tolerances(&config, &tol);
            let result = experiment::cmd_pod(&config, &out, &eps)?;
            println!("{} modes", result.basis.n_modes());
            println!("epsilon n_pod n_pod_max");
            for e in eps {
                println!(
                    "{e} {} {}",
                    count(wrom::pod::first_below(&result.summary, e, wrom::pod::ErrorStat::Mean)),
                    count(wrom::pod::first_below(&result.summary, e, wrom::pod::ErrorStat::Max))
                );
            }
        }
        Command::Tables { common, tol } => {
            let (config, out) = setup(&common)?;
            let eps = tolerances(&config, &tol);
            let rows = experiment::cmd_tables(&config, &out, &eps)?;
            println!("epsilon n_gbar n_pod n_pod_max");
            for r in rows {
                println!(
                    "{} {} {} {}",
                    r.epsilon,
                    count(r.n_gbar),
                    count(r.n_pod),
                    count(r.n_pod_max)
                );
            }
        }
        Command::Diag { common } => {
            let (_, out) = setup(&common)?;
            let report = experiment::cmd_diag(&out)?;
            println!("n_atoms condition volume");
            for i in 0..report.n_atoms.len() {
                println!(
                    "{} {:.3e} {:.3e}",
                    report.n_atoms[i], report.condition[i], report.simplex_volume[i]
                );
            }
        }
        Command::Landscape {
            common,
            snapshot,
            atoms,
            resolution,
        } => {
            let (config, out) = setup(&common)?;
            let result = experiment::cmd_landscape(&config, &out, snapshot, atoms, resolution)?;
            if let Some(min) = result.grid.minimum() {
                println!("grid minimum log10 W2 {:.4} at {:?}", min.log10_w2, min.x);
            }
            println!(
                "optimal log10 W2 {:.4} with weights {:?}",
                result.qp_log10_w2, result.qp_weights
            );
            print_location(&out, atoms, snapshot);
        }
    }
    Ok(())
}

fn print_location(out: &Path, atoms: usize, snapshot: usize) {
    let path = out
        .join(experiment::LANDSCAPE_DIR)
        .join(format!("n{atoms}_snapshot{snapshot}.csv"));
    println!("written to {}", path.display());
}
