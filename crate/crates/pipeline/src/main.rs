use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};

use acnn_pipeline::commands::{self, EvalJob, SpectralDescriptor};
use acnn_pipeline::descriptors::MatrixFormat;
use acnn_pipeline::{exit_code, user, PipelineConfig};

#[derive(Parser)]
#[command(name = "acnn", version, about = "Anisotropic CNN shape correspondence pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Pipeline configuration (TOML).
    #[arg(short, long)]
    config: PathBuf,
    /// Override a config key, e.g. `--set training.steps=200`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<PipelineConfig> {
        PipelineConfig::load(&self.config, &self.overrides)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Build and cache frames, operators, eigenbases and patch operators.
    Precompute(ConfigArgs),
    /// Train the network and write a checkpoint and loss history.
    Train(ConfigArgs),
    /// Predict correspondences for query meshes (default: the test set).
    Infer {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long = "query")]
        queries: Vec<PathBuf>,
        /// Skip writing the dense soft correspondence.
        #[arg(long)]
        no_soft: bool,
    },
    /// Refine point maps through a functional map.
    Refine {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, requires = "query")]
        map: Option<PathBuf>,
        #[arg(long, requires = "map")]
        query: Option<PathBuf>,
    },
    /// Princeton curves and error summaries against ground truth.
    Eval {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, requires_all = ["ground_truth", "query"])]
        map: Option<PathBuf>,
        #[arg(long, requires = "map")]
        ground_truth: Option<PathBuf>,
        #[arg(long, requires = "map")]
        query: Option<PathBuf>,
        /// Evaluate the refined maps of the test set.
        #[arg(long, conflicts_with = "map")]
        refined: bool,
    },
    /// Compute HKS or WKS descriptors of a mesh.
    Descriptors {
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long, value_enum, default_value_t = Kind::Hks)]
        kind: Kind,
        #[arg(long, default_value_t = 16)]
        count: usize,
        #[arg(long, default_value_t = 300)]
        eigen_count: usize,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Write the synthetic mesh pair with ground truth and an example config.
    Synth {
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(short, long)]
        output: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Hks,
    Wks,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Binary,
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Precompute(c) => {
            let report = commands::precompute(&c.load()?)?;
            println!(
                "{} shapes, {} eigendecompositions",
                report.shapes, report.eigendecompositions
            );
        }
        Command::Train(c) => {
            let report = commands::train(&c.load()?)?;
            println!(
                "loss {:.4} -> {:.4}, training accuracy {:.4}; checkpoint {}",
                report.initial_loss,
                report.final_loss,
                report.training_accuracy,
                report.checkpoint.display()
            );
        }
        Command::Infer {
            config,
            checkpoint,
            queries,
            no_soft,
        } => {
            for path in commands::infer(&config.load()?, checkpoint.as_deref(), &queries, !no_soft)? {
                println!("{}", path.display());
            }
        }
        Command::Refine { config, map, query } => {
            let jobs: Vec<_> = map.zip(query).into_iter().collect();
            for r in commands::refine(&config.load()?, &jobs)? {
                println!("{} ({} confident points)", r.refined.display(), r.selected);
            }
        }
        Command::Eval {
            config,
            map,
            ground_truth,
            query,
            refined,
        } => {
            let config = config.load()?;
            let jobs = match (map, ground_truth, query) {
                (Some(map), Some(ground_truth), Some(query)) => vec![EvalJob {
                    map,
                    ground_truth,
                    query,
                }],
                (None, None, None) => commands::default_eval_jobs(&config, if refined { ".refined" } else { "" })?,
                _ => return Err(user("--map, --ground-truth and --query go together")),
            };
            for s in commands::eval(&config, &jobs)? {
                println!(
                    "{}: {:.4} exact, mean error {:.5}, curve {}",
                    s.map.display(),
                    s.fraction_exact,
                    s.mean_error,
                    s.curve.display()
                );
            }
        }
        Command::Descriptors {
            mesh,
            kind,
            count,
            eigen_count,
            format,
            output,
        } => {
            let kind = match kind {
                Kind::Hks => SpectralDescriptor::Hks,
                Kind::Wks => SpectralDescriptor::Wks,
            };
            let format = match format {
                Format::Text => MatrixFormat::Text,
                Format::Binary => MatrixFormat::Binary,
            };
            let m = commands::descriptors(&mesh, kind, count, eigen_count, &output, format)?;
            println!("{} x {} descriptors written to {}", m.nrows(), m.ncols(), output.display());
        }
        Command::Synth { seed, output } => {
            println!("{}", commands::synth(seed, &output)?.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
