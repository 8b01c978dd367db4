use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use entroprop::cli::{
    cmd_compare, cmd_oracle_check, cmd_profile, cmd_train_sweep, parse_f64_list, parse_usize_list,
    parse_widths, Corruption, DatasetKind, ExperimentConfig, FormName, Metric, Overrides, Task,
};
use entroprop::stats::Direction;
use entroprop::{Error, Result};

#[derive(Parser)]
#[command(name = "entroprop", version, about = "Entropy propagation through dense and conv layers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Randomized self-checks of the closed-form entropy formulas
    OracleCheck {
        #[arg(long, default_value_t = 8)]
        max_dim: usize,
        #[arg(long, default_value_t = 1000)]
        cases: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// test mode: use a deliberately wrong conv formula (must fail)
        #[arg(long, hide = true)]
        corrupt: bool,
    },
    /// Autoencoder sweep over latent widths and λ₁
    TrainAe(SweepArgs),
    /// CNN classifier sweep over conv widths and λ₂
    TrainCnn(SweepArgs),
    /// Per-layer entropy-change profile of an ENTW weight dump
    Profile {
        dump: PathBuf,
        #[arg(long)]
        input_h: usize,
        #[arg(long)]
        input_w: usize,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Significance grid and baseline comparisons from a runs.csv
    Compare {
        runs: PathBuf,
        #[arg(long, default_value_t = 0.01)]
        alpha: f64,
        #[arg(long, value_enum, default_value_t = MetricArg::Val)]
        metric: MetricArg,
        #[arg(long, value_enum, default_value_t = DirectionArg::Higher)]
        direction: DirectionArg,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricArg {
    Val,
    Train,
    Stop,
}

#[derive(Clone, Copy, ValueEnum)]
enum DirectionArg {
    Higher,
    Lower,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormArg {
    Log,
    Recip,
}

#[derive(Clone, Copy, ValueEnum)]
enum DatasetArg {
    Mnist,
    Cifar10,
}

#[derive(Args)]
struct SweepArgs {
    /// TOML experiment config; flags below override it
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// fraction of the training split to keep (class-stratified)
    #[arg(long)]
    subset: Option<f64>,
    /// fraction of the validation split to keep
    #[arg(long)]
    val_subset: Option<f64>,
    /// comma-separated λ values
    #[arg(long)]
    lambda: Option<String>,
    /// comma-separated 1-based layer ordinals carrying the entropy term
    #[arg(long)]
    layers: Option<String>,
    #[arg(long, value_enum)]
    form: Option<FormArg>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    replications: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, value_enum)]
    dataset: Option<DatasetArg>,
    /// comma-separated latent widths (autoencoder)
    #[arg(long)]
    latent: Option<String>,
    /// conv widths, blocks joined by '-', architectures by ';' (e.g. "32;16-32")
    #[arg(long)]
    widths: Option<String>,
    #[arg(long)]
    max_epochs: Option<usize>,
    /// write the final weights of every run as ENTW dumps
    #[arg(long)]
    save_weights: bool,
}

impl SweepArgs {
    fn into_config(self, task: Task) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::from_file(p)?,
            None => ExperimentConfig {
                task,
                dataset: match task {
                    Task::Autoencoder => DatasetKind::Mnist,
                    Task::Cnn => DatasetKind::Cifar10,
                },
                ..Default::default()
            },
        };
        if cfg.task != task {
            return Err(Error::Config(format!("config describes a {:?} sweep", cfg.task)));
        }
        Overrides {
            data_dir: self.data_dir,
            out_dir: self.out_dir,
            seed: self.seed,
            subset: self.subset,
            val_subset: self.val_subset,
            lambdas: self.lambda.as_deref().map(parse_f64_list).transpose()?,
            layers: self.layers.as_deref().map(parse_usize_list).transpose()?,
            form: self.form.map(|f| match f {
                FormArg::Log => FormName::Log,
                FormArg::Recip => FormName::Recip,
            }),
            epsilon: self.eps,
            replications: self.replications,
            alpha: self.alpha,
            dataset: self.dataset.map(|d| match d {
                DatasetArg::Mnist => DatasetKind::Mnist,
                DatasetArg::Cifar10 => DatasetKind::Cifar10,
            }),
            latent_dims: self.latent.as_deref().map(parse_usize_list).transpose()?,
            widths: self.widths.as_deref().map(parse_widths).transpose()?,
            max_epochs: self.max_epochs,
            save_weights: self.save_weights,
        }
        .apply(&mut cfg);
        cfg.validate()?;
        Ok(cfg)
    }
}

fn sweep(args: SweepArgs, task: Task) -> Result<()> {
    let cfg = args.into_config(task)?;
    let (outcome, files) = cmd_train_sweep(&cfg)?;
    println!("{} runs -> {}", outcome.rows.len(), files.runs.display());
    println!("aggregate -> {}", files.aggregate.display());
    println!("grids -> {}", files.grid.display());
    for (arch, metric, grid) in &outcome.grids {
        println!("\n{arch} — {} (alpha = {})", metric.name(), grid.alpha);
        print!("{}", grid.render());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::OracleCheck {
            max_dim,
            cases,
            seed,
            corrupt,
        } => {
            let corruption = if corrupt {
                Corruption::ConvDeltaOffByOne
            } else {
                Corruption::None
            };
            let report = cmd_oracle_check(max_dim, cases, seed, corruption)?;
            print!("{}", report.render());
        }
        Command::TrainAe(args) => sweep(args, Task::Autoencoder)?,
        Command::TrainCnn(args) => sweep(args, Task::Cnn)?,
        Command::Profile {
            dump,
            input_h,
            input_w,
            out_dir,
        } => {
            let (report, path) = cmd_profile(&dump, input_h, input_w, &out_dir)?;
            for l in &report.layers {
                println!(
                    "layer {:>2} {:<6} mean Δ {:>12.4} nats  per element {:>9.4}  outliers {}",
                    l.layer_index,
                    l.kind.as_str(),
                    l.total.mean,
                    l.per_element.mean,
                    l.outliers.len()
                );
            }
            println!("-> {}", path.display());
        }
        Command::Compare {
            runs,
            alpha,
            metric,
            direction,
            out_dir,
        } => {
            let metric = match metric {
                MetricArg::Val => Metric::FinalVal,
                MetricArg::Train => Metric::FinalTrain,
                MetricArg::Stop => Metric::StoppingEpoch,
            };
            let direction = match direction {
                DirectionArg::Higher => Direction::HigherIsBetter,
                DirectionArg::Lower => Direction::LowerIsBetter,
            };
            let report = cmd_compare(&runs, metric, alpha, direction, out_dir.as_deref())?;
            print!("{}", report.render());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            eprintln!("E_USAGE: {first}");
            return ExitCode::from(64);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}: {}", e.code(), e.to_string().replace('\n', " "));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
