use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dvlnav::NavError;
use dvlnav_cli::commands;
use dvlnav_cli::config::{Overrides, Resolved, RunConfig};

/// INS/DVL navigation through DVL outages with a learned velocity predictor.
#[derive(Parser)]
#[command(name = "dvlnav", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic corpus: IMU/DVL/ground-truth CSVs and a manifest.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Train the velocity predictor on the corpus's training missions.
    Train {
        #[command(flatten)]
        common: Common,
        /// Network preset: toy or full.
        #[arg(long)]
        preset: Option<String>,
    },
    /// Run the outage sweep on the corpus's evaluation missions.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Network preset the weights were trained with.
        #[arg(long)]
        preset: Option<String>,
        /// Weights file [default: <out>/weights.json].
        #[arg(long)]
        weights: Option<PathBuf>,
        /// Outage durations in seconds, comma separated.
        #[arg(long, value_delimiter = ',')]
        durations: Option<Vec<f64>>,
        /// Also write a north/east trajectory plot per scenario.
        #[arg(long)]
        svg: bool,
    },
    /// Render the evaluation summary as a Markdown table.
    Report {
        /// Directory holding summary.csv.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Global seed (overrides the configuration).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory [default: out].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Directory of simulated data [default: <out>/data].
    #[arg(long)]
    data: Option<PathBuf>,
    /// Worker threads [default: available cores].
    #[arg(long)]
    workers: Option<usize>,
}

impl Common {
    fn resolve(&self, preset: Option<String>, durations: Option<Vec<f64>>) -> dvlnav::Result<Resolved> {
        let config = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        config.resolve(&Overrides {
            seed: self.seed,
            out: self.out.clone(),
            preset,
            durations,
        })
    }

    fn data_dir(&self, r: &Resolved) -> PathBuf {
        self.data.clone().unwrap_or_else(|| r.out.join("data"))
    }

    fn pool(&self) -> dvlnav::Result<rayon::ThreadPool> {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(n) = self.workers {
            if n == 0 {
                return Err(NavError::Config("--workers must be at least 1".into()));
            }
            builder = builder.num_threads(n);
        }
        builder.build().map_err(|e| NavError::Config(e.to_string()))
    }
}

fn run(cli: Cli) -> dvlnav::Result<()> {
    match cli.command {
        Command::Simulate { common } => {
            let r = common.resolve(None, None)?;
            let dir = common.data_dir(&r);
            let files = common.pool()?.install(|| commands::simulate(&r, &dir))?;
            println!("wrote {} files to {} (config {})", files.len(), dir.display(), &r.hash[..12]);
        }
        Command::Train { common, preset } => {
            let r = common.resolve(preset, None)?;
            let dir = common.data_dir(&r);
            let report = common.pool()?.install(|| commands::train(&r, &dir))?;
            println!(
                "trained {} epochs; best validation MSE {:.6} (m/s)² at epoch {}; weights in {}",
                report.history.len(),
                report.best_val_mse,
                report.best_epoch,
                r.out.join(commands::WEIGHTS_FILE).display()
            );
        }
        Command::Evaluate {
            common,
            preset,
            weights,
            durations,
            svg,
        } => {
            let r = common.resolve(preset, durations)?;
            let dir = common.data_dir(&r);
            let weights = weights.unwrap_or_else(|| r.out.join(commands::WEIGHTS_FILE));
            let report = common.pool()?.install(|| commands::evaluate(&r, &dir, &weights, svg))?;
            for c in &report.summary {
                let imp = c.improvement();
                println!(
                    "{} {:>4} s  vel RMSE {:.3} vs {:.3} m/s ({:+.1}%)  AFPE {:.2} vs {:.2} m ({:+.1}%)",
                    c.mission,
                    c.duration,
                    c.st_aided.vel_rmse,
                    c.pure_ins.vel_rmse,
                    imp.vel_rmse,
                    c.st_aided.afpe,
                    c.pure_ins.afpe,
                    imp.afpe
                );
            }
        }
        Command::Report { out } => print!("{}", commands::report(&out)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
