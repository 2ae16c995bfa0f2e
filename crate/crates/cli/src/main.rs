use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use vahf::features::{write_bundle, FeatureBundle};
use vahf::harness::{
    dataset_features, dataset_root, list_samples, preprocess_dataset, samples_features, simulate_dataset, EvalPlan,
    EvalReport, HarnessConfig, DATASET_ENV,
};
use vahf::model::{save_checkpoint, train};
use vahf::simulate::default_plans;
use vahf::{Exec, ModelSelector, SensorCombo};

#[derive(Parser, Debug)]
#[command(name = "vahf", version, about = "Voice-accompanying hand-to-face gesture toolkit")]
struct Cli {
    /// Seed for simulation and training; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// TOML config; unset keys keep their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output path.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads; 1 runs sequentially.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct DatasetArg {
    /// Dataset root.
    #[arg(env = DATASET_ENV)]
    dataset: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a dataset into --out.
    Simulate {
        #[arg(long)]
        users: Option<u32>,
        /// Use the confusable gesture setting.
        #[arg(long)]
        confusable: bool,
    },
    /// Segment raw sessions into per-sample files under --out.
    Preprocess(DatasetArg),
    /// Write feature bundles of a preprocessed tree to --out.
    Features {
        #[command(flatten)]
        data: DatasetArg,
        #[arg(long, default_value = "ALL-4ch", value_parser = parse_combo)]
        combo: SensorCombo,
        #[arg(long, default_value = "ALL-F", value_parser = parse_selector)]
        selector: ModelSelector,
    },
    /// Train on every user and write a checkpoint to --out.
    Train {
        #[command(flatten)]
        data: DatasetArg,
        #[arg(long, default_value = "ALL-4ch", value_parser = parse_combo)]
        combo: SensorCombo,
        #[arg(long, default_value = "ALL-F", value_parser = parse_selector)]
        selector: ModelSelector,
        /// Leave this user out of training.
        #[arg(long)]
        holdout: Option<u32>,
    },
    /// Leave-one-user-out evaluation; writes report files into --out.
    Eval {
        #[command(flatten)]
        data: DatasetArg,
        /// Every valid combination and selector.
        #[arg(long)]
        grid: bool,
        /// Signature gestures against empty.
        #[arg(long)]
        reduced: bool,
        /// Training ablations.
        #[arg(long)]
        ablation: bool,
        #[arg(long, value_parser = parse_combo)]
        combo: Option<SensorCombo>,
        #[arg(long, value_parser = parse_selector)]
        selector: Option<ModelSelector>,
    },
    /// Render a report.json.
    Report {
        report: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Format {
    Table,
    Csv,
    Confusion,
    Json,
}

fn parse_combo(s: &str) -> Result<SensorCombo, String> {
    s.parse().map_err(|e: vahf::Error| e.to_string())
}

fn parse_selector(s: &str) -> Result<ModelSelector, String> {
    s.parse().map_err(|e: vahf::Error| e.to_string())
}

enum Failure {
    Usage(String),
    Run(vahf::Error),
}

impl From<vahf::Error> for Failure {
    fn from(e: vahf::Error) -> Self {
        Failure::Run(e)
    }
}

fn dataset(arg: &DatasetArg) -> Result<PathBuf, Failure> {
    match dataset_root(arg.dataset.as_deref()) {
        Some(p) if p.is_dir() => Ok(p),
        Some(p) => Err(Failure::Usage(format!("dataset path {} does not exist", p.display()))),
        None => Err(Failure::Usage(format!(
            "no dataset path given and {DATASET_ENV} is unset"
        ))),
    }
}

fn config(cli: &Cli) -> Result<HarnessConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(p) => HarnessConfig::load(p)?,
        None => HarnessConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg = cfg.with_seed(seed);
    }
    match cli.jobs {
        Some(0) => return Err(Failure::Usage("--jobs must be at least 1".into())),
        Some(1) => cfg.exec = Exec::Sequential,
        Some(n) => {
            // Read by rayon when its global pool starts.
            std::env::set_var("RAYON_NUM_THREADS", n.to_string());
            cfg.exec = Exec::Parallel;
        }
        None => {}
    }
    Ok(cfg)
}

/// Raw sessions or an already segmented tree.
fn features(root: &Path, cfg: &HarnessConfig) -> vahf::Result<Vec<vahf::features::SampleFeatures>> {
    if list_samples(root).is_ok() {
        samples_features(root, &cfg.features, cfg.exec)
    } else {
        dataset_features(root, &cfg.preprocess, &cfg.features, cfg.exec)
    }
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let mut cfg = config(cli)?;
    match &cli.command {
        Command::Simulate { users, confusable } => {
            if let Some(u) = users {
                cfg.users = *u;
            }
            cfg.sim.confusable |= confusable;
            let plans = default_plans(cfg.users, cfg.seed);
            simulate_dataset(&cli.out, &plans, &cfg.sim, cfg.exec)?;
            std::fs::write(cli.out.join("config.toml"), cfg.to_toml()).map_err(vahf::Error::from)?;
            println!("{} sessions written to {}", plans.len(), cli.out.display());
        }
        Command::Preprocess(data) => {
            let root = dataset(data)?;
            let n = preprocess_dataset(&root, &cli.out, &cfg.preprocess, cfg.exec)?;
            println!("{n} samples written to {}", cli.out.display());
        }
        Command::Features { data, combo, selector } => {
            selector.check(*combo)?;
            let root = dataset(data)?;
            let feats = features(&root, &cfg)?;
            std::fs::create_dir_all(&cli.out).map_err(vahf::Error::from)?;
            let hash = cfg.features.hash();
            for (i, f) in feats.iter().enumerate() {
                let b = FeatureBundle::from_features(f, *combo, *selector)?;
                let stem = cli.out.join(format!("u{}_g{}_{i:04}", f.user_id, f.label.id()));
                write_bundle(&stem, &b, &hash)?;
            }
            println!("{} bundles written to {}", feats.len(), cli.out.display());
        }
        Command::Train {
            data,
            combo,
            selector,
            holdout,
        } => {
            selector.check(*combo)?;
            let root = dataset(data)?;
            let bundles = features(&root, &cfg)?
                .iter()
                .filter(|f| Some(f.user_id) != *holdout)
                .map(|f| FeatureBundle::from_features(f, *combo, *selector))
                .collect::<vahf::Result<Vec<_>>>()?;
            let mut model = train(&bundles, &cfg.eval().train)?;
            model.config_hash = cfg.hash();
            if let Some(dir) = cli.out.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(vahf::Error::from)?;
            }
            save_checkpoint(&cli.out, &model)?;
            println!(
                "trained on {} samples; checkpoint at {}",
                bundles.len(),
                cli.out.display()
            );
        }
        Command::Eval {
            data,
            grid,
            reduced,
            ablation,
            combo,
            selector,
        } => {
            if let (Some(c), Some(s)) = (combo, selector) {
                s.check(*c)?;
            }
            let plan = EvalPlan {
                grid: *grid || !(*reduced || *ablation),
                reduced: *reduced,
                ablation: *ablation,
                combo: *combo,
                selector: *selector,
            };
            let root = dataset(data)?;
            let feats = features(&root, &cfg)?;
            let report = EvalReport::run(&feats, &cfg, &plan)?;
            report.write(&cli.out)?;
            print!("{}", report.render_grid());
        }
        Command::Report { report, format } => {
            let text =
                std::fs::read_to_string(report).map_err(|e| Failure::Usage(format!("{}: {e}", report.display())))?;
            let r = EvalReport::from_json(&text)?;
            let out = match format {
                Format::Table => [r.render_grid(), r.render_reduced(), r.render_ablation()].join("\n"),
                Format::Csv => r.to_csv(),
                Format::Confusion => r.render_confusions(),
                Format::Json => r.to_json(),
            };
            print!("{out}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}\n");
            eprintln!("{}", Cli::command().render_usage());
            ExitCode::from(2)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
