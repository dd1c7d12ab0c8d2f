mod args;

use std::fs;
use std::path::Path;
use std::process::ExitCode;

use clap::error::ErrorKind as ClapErrorKind;
use clap::Parser;
use labelscope::cartography::{analyze, render_datamap, CartographyReport};
use labelscope::confident::find_label_issues;
use labelscope::data::{
    load_dataset, load_dataset_with_manifest, read_prob_matrix, save_dataset, stratified_split,
    write_prob_matrix, LabeledDataset, ProbKind, SplitSpec,
};
use labelscope::evaluation::{apply_filter, evaluate_predictions, random_control, Method};
use labelscope::experiment::{run_experiment, ExperimentConfig};
use labelscope::model::{
    oof_predict, predict_proba, record_dynamics, train, DynamicsLog, TrainConfig,
};
use labelscope::noise::{inject_noise, NoiseSpec, SyntheticSpec};
use labelscope::{Error, ErrorKind, Result};
use serde::Serialize;

use args::{Cli, Command, DatasetArgs, TrainArgs};

const DEFAULT_K: usize = 4;
const DEFAULT_DM_EPOCHS: usize = 10;

fn load(args: &DatasetArgs) -> Result<LabeledDataset> {
    match &args.manifest {
        Some(m) => load_dataset_with_manifest(&args.input, m),
        None => load_dataset(&args.input),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn train_config(args: &TrainArgs, seed: Option<u64>) -> Result<TrainConfig> {
    let mut cfg = match &args.train_config {
        Some(path) => serde_json::from_str(&read_text(path)?)?,
        None => TrainConfig::default(),
    };
    if let Some(v) = args.train_epochs {
        cfg.epochs = v;
    }
    if let Some(v) = args.learning_rate {
        cfg.learning_rate = v;
    }
    if let Some(v) = args.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = args.feature_dims {
        cfg.feature_dims = v;
    }
    if let Some(v) = args.l2 {
        cfg.l2 = v;
    }
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Relative data paths in a config resolve against the config's directory.
fn resolve_paths(cfg: &mut ExperimentConfig, config_path: &Path) {
    let base = config_path.parent().unwrap_or_else(|| Path::new(""));
    if let Some(files) = &mut cfg.data {
        files.path = base.join(&files.path);
        files.manifest = files.manifest.as_ref().map(|m| base.join(m));
    }
}

fn run(cli: Cli) -> Result<()> {
    let seed = cli.seed;
    match cli.command {
        Command::Split(a) => {
            let ds = load(&a.data)?;
            let spec = SplitSpec::new(a.ratios, seed.unwrap_or(0))?;
            let (train_set, val, test) = stratified_split(&ds, &spec)?;
            create_dir(&a.out_dir)?;
            for (name, part) in [("train", &train_set), ("val", &val), ("test", &test)] {
                save_dataset(part, &a.out_dir.join(format!("{name}.jsonl")))?;
            }
            log::info!(
                "split {} examples into {}/{}/{}",
                ds.len(),
                train_set.len(),
                val.len(),
                test.len()
            );
        }
        Command::MakeSynthetic(a) => {
            let ds = SyntheticSpec {
                n: a.n,
                classes: a.classes,
                separation: a.separation,
                vocab: a.vocab,
                length: a.length,
                seed: seed.unwrap_or(0),
            }
            .generate()?;
            save_dataset(&ds, &a.output)?;
        }
        Command::InjectNoise(a) => {
            let ds = load(&a.data)?;
            let spec = NoiseSpec::new(a.rate, seed.unwrap_or(0))?;
            let (noisy, flips) = inject_noise(&ds, &spec)?;
            save_dataset(&noisy, &a.output)?;
            let flips_path = a
                .flips
                .unwrap_or_else(|| a.output.with_extension("flips.json"));
            write_json(&flips_path, &flips)?;
            log::info!("flipped {} of {} labels", flips.len(), ds.len());
        }
        Command::Cl(a) => {
            let ds = load(&a.data)?;
            let pm = match &a.proba {
                Some(path) => read_prob_matrix(path, ds.classes(), ProbKind::OutOfFold)?,
                None => {
                    let cfg = train_config(&a.train, seed)?;
                    let k = a.k.map_or(DEFAULT_K, |k| k as usize);
                    oof_predict(&ds, k, &cfg)?
                }
            };
            let issues = find_label_issues(&pm, &ds)?;
            let filtered = apply_filter(
                &ds,
                issues.flagged.iter().map(String::as_str),
                Method::ConfidentLearning,
            )?;
            create_dir(&a.out_dir)?;
            write_prob_matrix(&pm, ds.classes(), &a.out_dir.join("proba.csv"))?;
            write_json(&a.out_dir.join("issues.json"), &issues)?;
            save_dataset(&filtered.retained, &a.out_dir.join("filtered.jsonl"))?;
            println!(
                "flagged {} of {} examples ({:.2}%)",
                issues.flagged_count(),
                ds.len(),
                issues.flagged_percent()
            );
        }
        Command::Dm(a) => {
            let ds = load(&a.data)?;
            let log = match &a.dynamics {
                Some(path) => DynamicsLog::read_csv(path, ds.classes())?,
                None => {
                    let mut cfg = train_config(&a.train, seed)?;
                    cfg.epochs = a.epochs.map_or(DEFAULT_DM_EPOCHS, |e| e as usize);
                    record_dynamics(&ds, &cfg)?
                }
            };
            let report = analyze(&log, &ds)?;
            let filtered = apply_filter(
                &ds,
                report.removed.iter().map(String::as_str),
                Method::Cartography,
            )?;
            create_dir(&a.out_dir)?;
            log.write_csv(ds.classes(), &a.out_dir.join("dynamics.csv"))?;
            write_text(&a.out_dir.join("cartography.json"), &report.to_json()?)?;
            let title = format!("Data map ({} examples)", ds.len());
            write_text(
                &a.out_dir.join("datamap.svg"),
                &render_datamap(&report.records, &title),
            )?;
            save_dataset(&filtered.retained, &a.out_dir.join("filtered.jsonl"))?;
            println!(
                "threshold {:.3}: removed {} of {} examples ({:.2}%)",
                report.threshold,
                filtered.removed_count,
                ds.len(),
                filtered.removed_percent
            );
        }
        Command::RandomControl(a) => {
            let ds = load(&a.data)?;
            let filtered = random_control(&ds, a.count, seed.unwrap_or(0))?;
            save_dataset(&filtered.retained, &a.output)?;
        }
        Command::Evaluate(a) => {
            let test = load_dataset(&a.test)?;
            let pm = match (&a.train, &a.proba) {
                (Some(path), _) => {
                    let train_set = load_dataset(path)?;
                    if train_set.classes() != test.classes() {
                        return Err(Error::InvalidManifest(
                            "train and test class manifests differ".into(),
                        ));
                    }
                    let params = train(&train_set, &train_config(&a.train_opts, seed)?)?;
                    predict_proba(&params, &test)
                }
                (None, Some(path)) => read_prob_matrix(path, test.classes(), ProbKind::InSample)?,
                (None, None) => unreachable!("clap requires one source"),
            };
            let report = evaluate_predictions(&pm, &test)?;
            match &a.output {
                Some(path) => write_json(path, &report)?,
                None => println!("{}", serde_json::to_string_pretty(&report)?),
            }
        }
        Command::Experiment(a) => {
            let mut cfg = ExperimentConfig::from_json(&read_text(&a.config)?)?;
            resolve_paths(&mut cfg, &a.config);
            if let Some(seed) = seed {
                cfg.seeds = vec![seed];
            }
            let report = run_experiment(&cfg)?;
            create_dir(&a.out_dir)?;
            write_text(&a.out_dir.join("report.json"), &report.to_json()?)?;
            let summary = report.summary_csv();
            write_text(&a.out_dir.join("summary.csv"), &summary)?;
            print!("{summary}");
        }
        Command::Datamap(a) => {
            let report = CartographyReport::from_json(&read_text(&a.cartography)?)?;
            write_text(&a.output, &render_datamap(&report.records, &a.title))?;
        }
    }
    Ok(())
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Usage => 1,
        ErrorKind::Data => 2,
        ErrorKind::Numeric => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ClapErrorKind::DisplayHelp
                | ClapErrorKind::DisplayVersion
                | ClapErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(usize::from(jobs))
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.kind()))
        }
    }
}
