//! End-to-end comparison of baseline, confident learning, cartography and
//! size-matched random removal on one corpus.

use std::fmt::Write as _;
use std::path::PathBuf;

use indexmap::IndexMap;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cartography::{analyze, CorpusDynamicsStats};
use crate::confident::find_label_issues;
use crate::data::{
    load_dataset, load_dataset_with_manifest, stratified_split, LabeledDataset, SplitSpec,
};
use crate::error::{Error, Result, StageExt};
use crate::evaluation::{
    apply_filter, delta_report, evaluate_predictions, format_delta, random_control, DeltaReport,
    EvalReport, FilterResult, Method,
};
use crate::model::{oof_predict, predict_proba, record_dynamics, train, TrainConfig};
use crate::noise::{detection_metrics, inject_noise, DetectionReport, NoiseSpec, SyntheticSpec};
use crate::seed::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataFiles {
    pub path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClConfig {
    #[serde(default = "default_k")]
    pub k: usize,
}

impl Default for ClConfig {
    fn default() -> Self {
        Self { k: default_k() }
    }
}

fn default_k() -> usize {
    4
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DmConfig {
    #[serde(default = "default_dm_epochs")]
    pub epochs: usize,
}

impl Default for DmConfig {
    fn default() -> Self {
        Self {
            epochs: default_dm_epochs(),
        }
    }
}

fn default_dm_epochs() -> usize {
    10
}

fn default_split() -> SplitSpec {
    SplitSpec::standard(0)
}

fn default_noise() -> NoiseSpec {
    NoiseSpec { rate: 0.0, seed: 0 }
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

/// Experiment description. Exactly one of `data` and `synthetic` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<DataFiles>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticSpec>,
    #[serde(default = "default_split")]
    pub split: SplitSpec,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub cl: ClConfig,
    #[serde(default)]
    pub dm: DmConfig,
    #[serde(default = "default_noise")]
    pub noise: NoiseSpec,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
}

impl ExperimentConfig {
    pub fn synthetic(spec: SyntheticSpec) -> Self {
        Self {
            name: None,
            data: None,
            synthetic: Some(spec),
            split: default_split(),
            train: TrainConfig::default(),
            cl: ClConfig::default(),
            dm: DmConfig::default(),
            noise: default_noise(),
            seeds: default_seeds(),
        }
    }

    pub fn from_json(raw: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(raw)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        match (&self.data, &self.synthetic) {
            (Some(_), Some(_)) => return bad("config sets both `data` and `synthetic`"),
            (None, None) => return bad("config needs a `data` or `synthetic` block"),
            (None, Some(s)) => s.validate()?,
            (Some(_), None) => {}
        }
        if self.seeds.is_empty() {
            return bad("`seeds` must not be empty");
        }
        if self.cl.k < 2 {
            return bad("cl.k must be at least 2");
        }
        if self.dm.epochs < 2 {
            return bad("dm.epochs must be at least 2");
        }
        self.noise.validate()?;
        self.train.validate()
    }

    /// Corpus label for summaries.
    pub fn corpus_name(&self) -> String {
        if let Some(name) = &self.name {
            return name.clone();
        }
        match &self.data {
            Some(files) => files
                .path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "data".into()),
            None => "synthetic".into(),
        }
    }
}

/// Seeds used by one replicate, all derived from the replicate seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageSeeds {
    pub replicate: u64,
    pub corpus: u64,
    pub split: u64,
    pub noise: u64,
    pub train: u64,
    pub control_cl: u64,
    pub control_dm: u64,
}

impl StageSeeds {
    pub fn derive(cfg: &ExperimentConfig, replicate: u64) -> Self {
        let corpus_base = cfg.synthetic.as_ref().map_or(0, |s| s.seed);
        Self {
            replicate,
            corpus: derive_seed(replicate ^ corpus_base, "corpus"),
            split: derive_seed(replicate ^ cfg.split.seed(), "split"),
            noise: derive_seed(replicate ^ cfg.noise.seed, "noise"),
            train: derive_seed(replicate ^ cfg.train.seed, "train"),
            control_cl: derive_seed(replicate, "control-cl"),
            control_dm: derive_seed(replicate, "control-dm"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionResult {
    pub method: String,
    pub train_size: usize,
    pub removed: usize,
    pub percent: f64,
    pub eval: EvalReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

/// Everything measured for one replicate seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRun {
    pub seeds: StageSeeds,
    pub split: SplitSizes,
    pub flipped: usize,
    /// baseline, CL, DM, random(CL), random(DM) in that order.
    pub conditions: Vec<ConditionResult>,
    pub deltas: DeltaReport,
    pub detection: IndexMap<String, DetectionReport>,
    pub cl_undecided: usize,
    pub dm_threshold: f64,
    pub dynamics: CorpusDynamicsStats,
}

impl SeedRun {
    pub fn condition(&self, method: &str) -> Option<&ConditionResult> {
        self.conditions.iter().find(|c| c.method == method)
    }
}

/// One line of the cross-seed summary; means over replicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: String,
    pub removed: f64,
    pub percent: f64,
    pub f1: f64,
    pub delta_base: Option<f64>,
    pub delta_random: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub corpus: String,
    pub config: ExperimentConfig,
    pub runs: Vec<SeedRun>,
    pub summary: Vec<SummaryRow>,
}

impl ExperimentReport {
    pub fn to_json(&self) -> Result<String> {
        let mut out = serde_json::to_string_pretty(self)?;
        out.push('\n');
        Ok(out)
    }

    /// `corpus,method,removed,percent,f1,delta_base,delta_rnd`; delta cells
    /// are empty for rows without a paired comparison.
    pub fn summary_csv(&self) -> String {
        let mut out = String::from("corpus,method,removed,percent,f1,delta_base,delta_rnd\n");
        for row in &self.summary {
            let delta = |d: Option<f64>| d.map(format_delta).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{:.2},{:.4},{},{}",
                csv_field(&self.corpus),
                csv_field(&row.method),
                row.removed,
                row.percent,
                row.f1,
                delta(row.delta_base),
                delta(row.delta_random)
            );
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub const BASELINE: &str = "baseline";
pub const RANDOM_CL: &str = "random(CL)";
pub const RANDOM_DM: &str = "random(DM)";

fn load_corpus(cfg: &ExperimentConfig, seeds: &StageSeeds) -> Result<LabeledDataset> {
    match (&cfg.data, &cfg.synthetic) {
        (Some(files), _) => match &files.manifest {
            Some(manifest) => load_dataset_with_manifest(&files.path, manifest),
            None => load_dataset(&files.path),
        },
        (None, Some(spec)) => SyntheticSpec {
            seed: seeds.corpus,
            ..spec.clone()
        }
        .generate(),
        (None, None) => Err(Error::InvalidConfig("no data source".into())),
    }
}

fn fit_and_score(
    train_set: &LabeledDataset,
    test: &LabeledDataset,
    cfg: &TrainConfig,
) -> Result<EvalReport> {
    let params = train(train_set, cfg)?;
    evaluate_predictions(&predict_proba(&params, test), test)
}

fn condition(
    name: &str,
    filter: Option<&FilterResult>,
    size: usize,
    eval: EvalReport,
) -> ConditionResult {
    ConditionResult {
        method: name.to_string(),
        train_size: filter.map_or(size, |f| f.retained.len()),
        removed: filter.map_or(0, |f| f.removed_count),
        percent: filter.map_or(0.0, |f| f.removed_percent),
        eval,
    }
}

/// Runs every condition for one replicate seed.
pub fn run_seed(cfg: &ExperimentConfig, replicate: u64) -> Result<SeedRun> {
    let seeds = StageSeeds::derive(cfg, replicate);
    let corpus = load_corpus(cfg, &seeds).stage("load")?;
    let (clean_train, val, test) =
        stratified_split(&corpus, &cfg.split.with_seed(seeds.split)).stage("split")?;
    let noise = NoiseSpec {
        rate: cfg.noise.rate,
        seed: seeds.noise,
    };
    let (train_set, flips) = inject_noise(&clean_train, &noise).stage("noise")?;
    let train_cfg = TrainConfig {
        seed: seeds.train,
        ..cfg.train.clone()
    };
    let dm_cfg = TrainConfig {
        epochs: cfg.dm.epochs,
        ..train_cfg.clone()
    };

    let ((baseline, cl), dm) = rayon::join(
        || {
            rayon::join(
                || fit_and_score(&train_set, &test, &train_cfg).stage("baseline"),
                || -> Result<_> {
                    let pm = oof_predict(&train_set, cfg.cl.k, &train_cfg).stage("cl")?;
                    let issues = find_label_issues(&pm, &train_set).stage("cl")?;
                    let filtered = apply_filter(
                        &train_set,
                        issues.flagged.iter().map(String::as_str),
                        Method::ConfidentLearning,
                    )
                    .stage("cl")?;
                    let eval =
                        fit_and_score(&filtered.retained, &test, &train_cfg).stage("cl retrain")?;
                    Ok((issues, filtered, eval))
                },
            )
        },
        || -> Result<_> {
            let log = record_dynamics(&train_set, &dm_cfg).stage("dm")?;
            let report = analyze(&log, &train_set).stage("dm")?;
            let filtered = apply_filter(
                &train_set,
                report.removed.iter().map(String::as_str),
                Method::Cartography,
            )
            .stage("dm")?;
            let eval = fit_and_score(&filtered.retained, &test, &train_cfg).stage("dm retrain")?;
            Ok((report, filtered, eval))
        },
    );
    let baseline = baseline?;
    let (issues, cl_filter, cl_eval) = cl?;
    let (carto, dm_filter, dm_eval) = dm?;

    let control = |k: usize, seed: u64| -> Result<(FilterResult, EvalReport)> {
        let f = random_control(&train_set, k, seed)?;
        let eval = fit_and_score(&f.retained, &test, &train_cfg)?;
        Ok((f, eval))
    };
    let (rnd_cl, rnd_dm) = rayon::join(
        || control(cl_filter.removed_count, seeds.control_cl).stage("random control"),
        || control(dm_filter.removed_count, seeds.control_dm).stage("random control"),
    );
    let (rnd_cl_filter, rnd_cl_eval) = rnd_cl?;
    let (rnd_dm_filter, rnd_dm_eval) = rnd_dm?;

    let cl_tag = Method::ConfidentLearning.to_string();
    let dm_tag = Method::Cartography.to_string();
    let variants = IndexMap::from([
        (cl_tag.clone(), cl_eval.clone()),
        (dm_tag.clone(), dm_eval.clone()),
    ]);
    let controls = IndexMap::from([
        (cl_tag.clone(), rnd_cl_eval.clone()),
        (dm_tag.clone(), rnd_dm_eval.clone()),
    ]);
    let deltas = delta_report(&baseline, &variants, &controls).stage("deltas")?;

    let detection = IndexMap::from([
        (
            cl_tag.clone(),
            detection_metrics(issues.flagged.iter().map(String::as_str), &flips),
        ),
        (
            dm_tag.clone(),
            detection_metrics(carto.removed.iter().map(String::as_str), &flips),
        ),
    ]);

    let n = train_set.len();
    let conditions = vec![
        condition(BASELINE, None, n, baseline),
        condition(&cl_tag, Some(&cl_filter), n, cl_eval),
        condition(&dm_tag, Some(&dm_filter), n, dm_eval),
        condition(RANDOM_CL, Some(&rnd_cl_filter), n, rnd_cl_eval),
        condition(RANDOM_DM, Some(&rnd_dm_filter), n, rnd_dm_eval),
    ];
    log::info!(
        "seed {replicate}: baseline {:.4}, CL {:.4} ({} removed), DM {:.4} ({} removed)",
        deltas.baseline,
        deltas.variants[&cl_tag].f1,
        cl_filter.removed_count,
        deltas.variants[&dm_tag].f1,
        dm_filter.removed_count
    );
    Ok(SeedRun {
        seeds,
        split: SplitSizes {
            train: n,
            val: val.len(),
            test: test.len(),
        },
        flipped: flips.len(),
        conditions,
        deltas,
        detection,
        cl_undecided: issues.undecided,
        dm_threshold: carto.threshold,
        dynamics: carto.stats,
    })
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

fn summarize(runs: &[SeedRun]) -> Vec<SummaryRow> {
    let Some(first) = runs.first() else {
        return Vec::new();
    };
    first
        .conditions
        .iter()
        .map(|c| {
            let method = c.method.clone();
            let of = |f: &dyn Fn(&ConditionResult) -> f64| {
                mean(runs.iter().filter_map(|r| r.condition(&method)).map(f))
            };
            let delta = |f: &dyn Fn(&crate::evaluation::DeltaEntry) -> f64| {
                first.deltas.variants.get(&method).map(|_| {
                    mean(
                        runs.iter()
                            .filter_map(|r| r.deltas.variants.get(&method))
                            .map(f),
                    )
                })
            };
            SummaryRow {
                removed: of(&|c| c.removed as f64),
                percent: of(&|c| c.percent),
                f1: of(&|c| c.eval.f1_macro),
                delta_base: delta(&|d| d.delta_base),
                delta_random: delta(&|d| d.delta_random),
                method,
            }
        })
        .collect()
}

/// Runs all replicate seeds (concurrently) and assembles the report in seed
/// order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let runs = cfg
        .seeds
        .par_iter()
        .map(|&s| run_seed(cfg, s))
        .collect::<Result<Vec<_>>>()?;
    let summary = summarize(&runs);
    Ok(ExperimentReport {
        corpus: cfg.corpus_name(),
        config: cfg.clone(),
        runs,
        summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(rate: f64) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::synthetic(SyntheticSpec {
            n: 240,
            classes: 2,
            separation: 0.9,
            vocab: 50,
            length: SyntheticSpec::DEFAULT_LENGTH,
            seed: 1,
        });
        cfg.noise.rate = rate;
        cfg.dm.epochs = 3;
        cfg.train.feature_dims = 1 << 10;
        cfg.seeds = vec![3, 4];
        cfg
    }

    #[test]
    fn config_defaults_and_validation() {
        let cfg = ExperimentConfig::from_json(
            r#"{"synthetic": {"n": 100, "classes": 2, "separation": 0.5, "vocab": 10}}"#,
        )
        .unwrap();
        assert_eq!(cfg.cl.k, 4);
        assert_eq!(cfg.dm.epochs, 10);
        assert_eq!(cfg.seeds, [0]);
        assert_eq!(cfg.split.ratios(), [0.8, 0.1, 0.1]);

        assert!(ExperimentConfig::from_json(r#"{"seeds": [1]}"#).is_err());
        assert!(ExperimentConfig::from_json(
            r#"{"synthetic": {"n": 100, "classes": 2, "separation": 0.5, "vocab": 10}, "cl": {"k": 1}}"#
        )
        .is_err());
        assert!(ExperimentConfig::from_json(
            r#"{"synthetic": {"n": 100, "classes": 2, "separation": 0.5, "vocab": 10}, "bogus": 1}"#
        )
        .is_err());
    }

    #[test]
    fn controls_match_method_sizes_and_test_split_is_shared() {
        let report = run_experiment(&small(0.2)).unwrap();
        assert_eq!(report.runs.len(), 2);
        for run in &report.runs {
            let removed = |m: &str| run.condition(m).unwrap().removed;
            assert_eq!(removed("CL"), removed(RANDOM_CL));
            assert_eq!(removed("DM"), removed(RANDOM_DM));
            assert_eq!(removed(BASELINE), 0);
            for c in &run.conditions {
                assert_eq!(c.train_size + c.removed, run.split.train);
            }
            assert_eq!(run.split.train + run.split.val + run.split.test, 240);
            let base = run.deltas.baseline;
            let cl = &run.deltas.variants["CL"];
            assert_eq!(cl.delta_base, cl.f1 - base);
            assert_eq!(cl.f1, run.condition("CL").unwrap().eval.f1_macro);
        }
    }

    #[test]
    fn zero_noise_flips_nothing() {
        let report = run_experiment(&small(0.0)).unwrap();
        assert!(report.runs.iter().all(|r| r.flipped == 0));
    }

    #[test]
    fn summary_csv_layout() {
        let report = run_experiment(&small(0.2)).unwrap();
        let csv = report.summary_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(
            lines[0],
            "corpus,method,removed,percent,f1,delta_base,delta_rnd"
        );
        assert_eq!(lines.len(), 6);
        assert!(lines[1].starts_with("synthetic,baseline,0,0.00,"));
        assert!(lines[1].ends_with(",,"));
        assert!(!lines[2].ends_with(",,"));
    }

    #[test]
    fn repeated_runs_are_identical() {
        let cfg = small(0.2);
        let a = run_experiment(&cfg).unwrap().to_json().unwrap();
        let b = run_experiment(&cfg).unwrap().to_json().unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn stage_errors_name_the_stage() {
        let mut cfg = small(0.0);
        cfg.synthetic = None;
        cfg.data = Some(DataFiles {
            path: "/nonexistent/corpus.jsonl".into(),
            manifest: None,
        });
        let err = run_experiment(&cfg).unwrap_err();
        assert!(err.to_string().contains("load"), "{err}");
    }
}
