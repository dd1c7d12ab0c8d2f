//! Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any
//! failure.

use std::panic;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use indexmap::IndexMap;
use labelscope::cartography::{
    compute_metrics, count_forgetting, knee_threshold, CartographyRecord,
};
use labelscope::confident::{class_thresholds, confident_joint, find_label_issues};
use labelscope::data::{ClassMap, Example, LabeledDataset, ProbKind, ProbMatrix};
use labelscope::evaluation::{delta_report, f1_macro, format_delta, percent, EvalReport};
use labelscope::experiment::{run_experiment, ExperimentConfig, ExperimentReport};
use labelscope::model::{featurize, objective, DynamicsLog, ModelParams};
use labelscope::noise::SyntheticSpec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(elapsed < limit, || {
        format!("took {elapsed:.2?}, limit {limit:?}")
    })
}

fn dataset(labels: &[usize], n_classes: usize) -> LabeledDataset {
    let classes = ClassMap::new((0..n_classes).map(|c| format!("k{c}"))).unwrap();
    let examples = labels
        .iter()
        .enumerate()
        .map(|(i, &y)| Example::new(format!("x{i:03}"), format!("text {i}"), y))
        .collect();
    LabeledDataset::new(examples, classes).unwrap()
}

fn matrix(ds: &LabeledDataset, rows: Vec<Vec<f64>>) -> ProbMatrix {
    ProbMatrix::new(
        ds.ids().map(String::from).collect(),
        rows,
        ProbKind::OutOfFold,
    )
    .unwrap()
}

/// Rows from small integer weights, so exact ties are common.
fn random_row(rng: &mut ChaCha8Rng, c: usize) -> Vec<f64> {
    loop {
        let w: Vec<f64> = if rng.gen_bool(0.5) {
            (0..c).map(|_| f64::from(rng.gen_range(0u8..4))).collect()
        } else {
            (0..c).map(|_| rng.gen::<f64>()).collect()
        };
        let s: f64 = w.iter().sum();
        if s > 0.0 {
            return w.iter().map(|v| v / s).collect();
        }
    }
}

struct JointOracle {
    counts: Vec<Vec<usize>>,
    undecided: usize,
    flagged: Vec<String>,
}

fn joint_oracle(rows: &[Vec<f64>], labels: &[usize], ids: &[String], c: usize) -> JointOracle {
    let thresholds: Vec<Option<f64>> = (0..c)
        .map(|j| {
            let vals: Vec<f64> = rows
                .iter()
                .zip(labels)
                .filter(|(_, &y)| y == j)
                .map(|(r, _)| r[j])
                .collect();
            (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
        })
        .collect();
    let mut counts = vec![vec![0; c]; c];
    let mut undecided = 0;
    let mut flagged = Vec::new();
    for ((row, &y), id) in rows.iter().zip(labels).zip(ids) {
        let confident: Vec<usize> = (0..c)
            .filter(|&j| thresholds[j].is_some_and(|t| row[j] >= t))
            .collect();
        if confident.is_empty() {
            undecided += 1;
            continue;
        }
        let top = confident
            .iter()
            .map(|&j| row[j])
            .fold(f64::NEG_INFINITY, f64::max);
        let winner = *confident.iter().find(|&&j| row[j] == top).unwrap();
        counts[y][winner] += 1;
        if winner != y {
            flagged.push(id.clone());
        }
    }
    flagged.sort();
    JointOracle {
        counts,
        undecided,
        flagged,
    }
}

fn confident_joint_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for trial in 0..1000 {
        let c = rng.gen_range(2..=4);
        let n = rng.gen_range(1..=50);
        let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..c)).collect();
        let ds = dataset(&labels, c);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| random_row(&mut rng, c)).collect();
        let pm = matrix(&ds, rows.clone());
        let ids: Vec<String> = ds.ids().map(String::from).collect();
        let expected = joint_oracle(&rows, &labels, &ids, c);

        let t = class_thresholds(&pm, &ds).map_err(|e| e.to_string())?;
        let joint = confident_joint(&pm, &ds, &t).map_err(|e| e.to_string())?;
        let report = find_label_issues(&pm, &ds).map_err(|e| e.to_string())?;
        ensure(joint.counts == expected.counts, || {
            format!(
                "trial {trial}: joint {:?} != {:?}",
                joint.counts, expected.counts
            )
        })?;
        ensure(joint.undecided == expected.undecided, || {
            format!("trial {trial}: undecided differs")
        })?;
        ensure(report.flagged == expected.flagged, || {
            format!(
                "trial {trial}: flagged {:?} != {:?}",
                report.flagged, expected.flagged
            )
        })?;
        for (i, id) in ids.iter().enumerate() {
            ensure(report.quality[id] == rows[i][labels[i]], || {
                format!("trial {trial}: quality of {id}")
            })?;
        }
    }
    let elapsed = start.elapsed();
    within(elapsed, Duration::from_secs(10))?;
    Ok(format!("1000 instances exact, {elapsed:.2?}"))
}

fn f1_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for trial in 0..1000 {
        let c = rng.gen_range(1..=5);
        let n = rng.gen_range(0..=20);
        let golds: Vec<usize> = (0..n).map(|_| rng.gen_range(0..c)).collect();
        let preds: Vec<usize> = (0..n).map(|_| rng.gen_range(0..c)).collect();

        let mut confusion = vec![vec![0usize; c]; c];
        for (&g, &p) in golds.iter().zip(&preds) {
            confusion[g][p] += 1;
        }
        let mut f1s = Vec::new();
        for (k, row) in confusion.iter().enumerate() {
            let tp = row[k] as f64;
            let fp = confusion.iter().map(|r| r[k]).sum::<usize>() as f64 - tp;
            let fneg = row.iter().sum::<usize>() as f64 - tp;
            let p = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
            let r = if tp + fneg > 0.0 {
                tp / (tp + fneg)
            } else {
                0.0
            };
            f1s.push(if p + r > 0.0 {
                2.0 * p * r / (p + r)
            } else {
                0.0
            });
        }
        let expected = f1s.iter().sum::<f64>() / c as f64;
        let acc = if n == 0 {
            0.0
        } else {
            (0..c).map(|k| confusion[k][k]).sum::<usize>() as f64 / n as f64
        };

        let got = f1_macro(&preds, &golds, c).map_err(|e| e.to_string())?;
        ensure((got.f1_macro - expected).abs() <= 1e-12, || {
            format!("trial {trial}: f1 {} vs {expected}", got.f1_macro)
        })?;
        ensure((got.accuracy - acc).abs() <= 1e-12, || {
            format!("trial {trial}: accuracy {} vs {acc}", got.accuracy)
        })?;
    }
    let elapsed = start.elapsed();
    within(elapsed, Duration::from_secs(5))?;
    Ok(format!("1000 instances within 1e-12, {elapsed:.2?}"))
}

fn log_for(series: &[&[f64]]) -> DynamicsLog {
    let epochs = series[0].len();
    let snapshots = (0..epochs)
        .map(|e| series.iter().map(|s| vec![s[e], 1.0 - s[e]]).collect())
        .collect();
    let ids = (0..series.len()).map(|i| format!("x{i:03}")).collect();
    DynamicsLog::new(ids, snapshots).unwrap()
}

fn cartography_fixtures() -> Outcome {
    let ds = dataset(&[0], 2);
    let records =
        compute_metrics(&log_for(&[&[0.5, 0.5, 1.0, 1.0]]), &ds).map_err(|e| e.to_string())?;
    let r = &records[0];
    ensure(r.confidence == 0.75 && r.variability == 0.25, || {
        format!("confidence {} variability {}", r.confidence, r.variability)
    })?;

    let flags = [false, true, true, false, true];
    ensure(count_forgetting(&flags) == 1, || {
        "forgetfulness of 01101".into()
    })?;
    let records =
        compute_metrics(&log_for(&[&[0.4, 0.6, 0.7, 0.3, 0.8]]), &ds).map_err(|e| e.to_string())?;
    ensure(
        records[0].forgetfulness == 1 && records[0].correctness_count == 3,
        || format!("forgetfulness {} via dynamics", records[0].forgetfulness),
    )?;
    Ok("confidence 0.75, variability 0.25, forgetfulness 1".into())
}

fn removal_percents() -> Outcome {
    let cases = [
        (829, 2337, "35.47"),
        (1841, 49123, "3.75"),
        (4558, 49123, "9.28"),
        (1567, 8524, "18.38"),
        (1234, 8524, "14.48"),
        (256, 2337, "10.95"),
    ];
    for (part, total, want) in cases {
        let got = percent(part, total);
        ensure(
            format!("{got:.2}") == want && got == want.parse::<f64>().unwrap(),
            || format!("{part}/{total} gave {got}, want {want}"),
        )?;
    }
    Ok("6 of 6 removal percentages".into())
}

fn delta_arithmetic() -> Outcome {
    let f1 = |v: f64| EvalReport {
        f1_macro: v,
        accuracy: 0.0,
        per_class_f1: vec![],
    };
    // Base, CL, DM, Rnd(CL), Rnd(DM); then CL-Base, DM-Base, CL-Rnd, DM-Rnd
    let rows = [
        (
            [0.9353, 0.9320, 0.9260, 0.9325, 0.9237],
            ["-0.0033", "-0.0093", "-0.0005", "+0.0023"],
        ),
        (
            [0.6635, 0.6262, 0.6438, 0.6096, 0.6297],
            ["-0.0373", "-0.0197", "+0.0166", "+0.0141"],
        ),
        (
            [0.6444, 0.6578, 0.6441, 0.5230, 0.5851],
            ["+0.0134", "-0.0003", "+0.1348", "+0.0590"],
        ),
    ];
    let mut checked = 0;
    for (scores, want) in rows {
        let variants = IndexMap::from([
            ("CL".to_string(), f1(scores[1])),
            ("DM".to_string(), f1(scores[2])),
        ]);
        let controls = IndexMap::from([
            ("CL".to_string(), f1(scores[3])),
            ("DM".to_string(), f1(scores[4])),
        ]);
        let report =
            delta_report(&f1(scores[0]), &variants, &controls).map_err(|e| e.to_string())?;
        let got = [
            format_delta(report.variants["CL"].delta_base),
            format_delta(report.variants["DM"].delta_base),
            format_delta(report.variants["CL"].delta_random),
            format_delta(report.variants["DM"].delta_random),
        ];
        for (g, w) in got.iter().zip(want) {
            ensure(g == w, || format!("{scores:?}: got {g}, want {w}"))?;
            checked += 1;
        }
    }
    Ok(format!("{checked} of 12 deltas"))
}

fn regime_config(rate: f64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::synthetic(SyntheticSpec {
        n: 2000,
        classes: 2,
        separation: 0.9,
        vocab: 500,
        length: 8,
        seed: 0,
    });
    cfg.noise.rate = rate;
    cfg.train.epochs = 20;
    cfg.train.learning_rate = 0.2;
    cfg.seeds = vec![0, 1, 2, 3, 4];
    cfg
}

fn high_noise(report: &ExperimentReport, elapsed: Duration) -> Outcome {
    let mut min_gap = f64::INFINITY;
    for run in &report.runs {
        let gap = run.deltas.variants["CL"].delta_random;
        ensure(gap > 0.0, || {
            format!("seed {}: CL minus random = {gap:+.4}", run.seeds.replicate)
        })?;
        min_gap = min_gap.min(gap);
    }
    let n = report.runs.len() as f64;
    let recall = report
        .runs
        .iter()
        .map(|r| r.detection["CL"].recall)
        .sum::<f64>()
        / n;
    let precision = report
        .runs
        .iter()
        .map(|r| r.detection["CL"].precision)
        .sum::<f64>()
        / n;
    ensure(recall >= 0.7, || format!("mean recall {recall:.3}"))?;
    ensure(precision >= 0.5, || {
        format!("mean precision {precision:.3}")
    })?;
    within(elapsed, Duration::from_secs(300))?;
    Ok(format!(
        "min CL-Rnd {min_gap:+.4}, recall {recall:.3}, precision {precision:.3}, {elapsed:.2?}"
    ))
}

fn clean(report: &ExperimentReport) -> Outcome {
    let mut worst_flag = 0.0f64;
    let mut worst_delta = 0.0f64;
    for run in &report.runs {
        let cl = run.condition("CL").unwrap();
        let share = cl.removed as f64 / run.split.train as f64;
        ensure(share < 0.05, || {
            format!(
                "seed {}: CL flagged {:.2}%",
                run.seeds.replicate,
                100.0 * share
            )
        })?;
        worst_flag = worst_flag.max(share);
        for c in &run.conditions {
            let d = c.eval.f1_macro - run.deltas.baseline;
            ensure(d.abs() < 0.05, || {
                format!(
                    "seed {}: {} differs from baseline by {d:+.4}",
                    run.seeds.replicate, c.method
                )
            })?;
            worst_delta = worst_delta.max(d.abs());
        }
    }
    Ok(format!(
        "max CL flag share {:.2}%, max |delta base| {worst_delta:.4}",
        100.0 * worst_flag
    ))
}

fn records(confidences: &[f64]) -> Vec<CartographyRecord> {
    confidences
        .iter()
        .enumerate()
        .map(|(i, &c)| CartographyRecord {
            id: format!("r{i}"),
            confidence: c,
            variability: 0.0,
            correctness_count: 0,
            correctness_fraction: 0.0,
            forgetfulness: 0,
            category: None,
        })
        .collect()
}

fn knee_fixtures() -> Outcome {
    let step = knee_threshold(&records(&[0.05, 0.06, 0.07, 0.90, 0.91, 0.92]))
        .map_err(|e| e.to_string())?;
    ensure(step.removed == ["r0", "r1", "r2"], || {
        format!("step fixture removed {:?}", step.removed)
    })?;
    let linear =
        knee_threshold(&records(&[0.1, 0.2, 0.3, 0.4, 0.5, 0.6])).map_err(|e| e.to_string())?;
    ensure(linear.removed.is_empty(), || {
        format!("linear fixture removed {:?}", linear.removed)
    })?;
    Ok(format!(
        "step cut at {:.2} removes 3, linear removes 0",
        step.threshold
    ))
}

fn gradient_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let h = 1e-5;
    let mut worst = 0.0f64;
    for instance in 0..20 {
        let c = rng.gen_range(2..=4);
        let dims = 16;
        let n = rng.gen_range(1..=6);
        let features: Vec<_> = (0..n)
            .map(|_| {
                let text: Vec<String> = (0..6)
                    .map(|_| format!("t{}", rng.gen_range(0..40)))
                    .collect();
                featurize(&text.join(" "), dims)
            })
            .collect();
        let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..c)).collect();
        let l2 = rng.gen_range(0.0..0.1);
        let mut params = ModelParams::zeros(c, dims);
        for k in 0..c {
            for d in 0..dims {
                params.set_weight(k, d, rng.gen_range(-1.0..1.0));
            }
            params.bias_mut()[k] = rng.gen_range(-1.0..1.0);
        }
        let (_, grad) = objective(&params, &features, &labels, l2);
        for _ in 0..5 {
            let k = rng.gen_range(0..c);
            // one extra slot stands for the bias
            let d = rng.gen_range(0..=dims);
            let shifted = |delta: f64| {
                let mut p = params.clone();
                if d == dims {
                    p.bias_mut()[k] += delta;
                } else {
                    p.set_weight(k, d, params.weight(k, d) + delta);
                }
                objective(&p, &features, &labels, l2).0
            };
            let numeric = (shifted(h) - shifted(-h)) / (2.0 * h);
            let analytic = if d == dims {
                grad.bias()[k]
            } else {
                grad.weight(k, d)
            };
            let scale = analytic.abs().max(numeric.abs()).max(1e-8);
            let rel = (analytic - numeric).abs() / scale;
            ensure(rel < 1e-4, || {
                format!("instance {instance}, class {k}, slot {d}: {analytic} vs {numeric}")
            })?;
            worst = worst.max(rel);
        }
    }
    Ok(format!("100 coordinates, max relative error {worst:.2e}"))
}

fn determinism(first: &str) -> Outcome {
    let again = run_experiment(&regime_config(0.3))
        .and_then(|r| r.to_json())
        .map_err(|e| e.to_string())?;
    ensure(first == again, || "reports differ between runs".into())?;
    Ok(format!("{} bytes identical", first.len()))
}

fn main() -> ExitCode {
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    let mut check = |name: &'static str, f: &dyn Fn() -> Outcome| {
        let outcome = panic::catch_unwind(panic::AssertUnwindSafe(f))
            .unwrap_or_else(|_| Err("panicked".to_string()));
        match &outcome {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(why) => println!("FAIL  {name}: {why}"),
        }
        results.push((name, outcome));
    };

    check(
        "confident joint matches brute-force oracle",
        &confident_joint_oracle,
    );
    check("F1-macro matches confusion-matrix oracle", &f1_oracle);
    check("cartography metric fixtures", &cartography_fixtures);
    check(
        "removal percentages round to two decimals",
        &removal_percents,
    );
    check("delta report on reference F1 scores", &delta_arithmetic);

    let start = Instant::now();
    let noisy = run_experiment(&regime_config(0.3));
    let noisy_elapsed = start.elapsed();
    check(
        "high-noise regime: CL beats random, recall and precision",
        &|| {
            let report = noisy.as_ref().map_err(|e| e.to_string())?;
            high_noise(report, noisy_elapsed)
        },
    );
    check("clean regime: few flags, no condition moves F1", &|| {
        let report = run_experiment(&regime_config(0.0)).map_err(|e| e.to_string())?;
        clean(&report)
    });
    check("knee filter fixtures", &knee_fixtures);
    check(
        "analytic gradient matches central differences",
        &gradient_check,
    );
    check("experiment report is byte-identical across runs", &|| {
        let report = noisy.as_ref().map_err(|e| e.to_string())?;
        determinism(&report.to_json().map_err(|e| e.to_string())?)
    });

    let failed = results.iter().filter(|(_, r)| r.is_err()).count();
    println!(
        "{} of {} criteria passed",
        results.len() - failed,
        results.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
