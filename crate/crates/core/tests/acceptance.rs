//! Acceptance checks: one PASS/FAIL line per criterion.
//!
//! Checks that need the published encounter table read it from
//! `READMISSION_DATA_DIR` (or `<workspace>/data`) and fail when it is absent.
//! Everything else runs on generated fixtures. Exits non-zero if any check
//! fails.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use readmission::cost::{above_all, optimize_threshold, saved_cost, Cents, CostParams};
use readmission::eval::{auprc, confusion};
use readmission::ingest::Readmitted;
use readmission::models::{BayesNet, BayesNetParams, MlpObjective, MlpParams, NaiveBayes, NaiveBayesParams};
use readmission::pipeline::MANIFEST_FILE;
use readmission::preprocess::{prepare, Task, TaskData};
use readmission::rules::{mine_frequent, Item, Transactions};
use readmission::synthetic::{self, SyntheticSpec, FULL_SIZE};

const BIN: &str = env!("CARGO_BIN_EXE_readmission");

struct Report {
    failed: usize,
}

impl Report {
    fn check(&mut self, name: &str, pass: bool, detail: impl AsRef<str>) {
        if !pass {
            self.failed += 1;
        }
        println!("{} {name}: {}", if pass { "PASS" } else { "FAIL" }, detail.as_ref());
    }

    fn within(&mut self, name: &str, value: f64, target: f64, tol: f64) {
        let pass = (value - target).abs() <= tol;
        self.check(name, pass, format!("{value:.4} (target {target} ± {tol})"));
    }
}

fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").canonicalize().expect("workspace root")
}

fn data_dir() -> PathBuf {
    std::env::var_os("READMISSION_DATA_DIR").map_or_else(|| workspace_root().join("data"), PathBuf::from)
}

/// Run `readmission reproduce` with the default configuration.
fn reproduce(dataset: &Path, mappings: &Path, out: &Path, seed: u64) -> Duration {
    let started = Instant::now();
    let status = Command::new(BIN)
        .arg("--config")
        .arg(workspace_root().join("config/default.toml"))
        .arg("--data")
        .arg(dataset)
        .arg("--mappings")
        .arg(mappings)
        .arg("--out")
        .arg(out)
        .arg("--seed")
        .arg(seed.to_string())
        .arg("reproduce")
        .env("RUST_LOG", "warn")
        .status()
        .expect("run readmission");
    assert!(status.success(), "reproduce failed: {status}");
    started.elapsed()
}

fn json(path: impl AsRef<Path>) -> Value {
    let p = path.as_ref();
    serde_json::from_str(&fs::read_to_string(p).unwrap_or_else(|e| panic!("{}: {e}", p.display())))
        .unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

fn f(v: &Value) -> f64 {
    v.as_f64().expect("number")
}

fn auprc_of(train_eval: &Value, task: &str, model: &str) -> f64 {
    let t = train_eval["tasks"]
        .as_array()
        .unwrap()
        .iter()
        .find(|t| t["task"] == task)
        .unwrap_or_else(|| panic!("task {task} missing"));
    f(&t["models"].as_array().unwrap().iter().find(|m| m["model"] == model).unwrap()["auprc"])
}

fn chance_of(train_eval: &Value, task: &str) -> f64 {
    f(&train_eval["tasks"].as_array().unwrap().iter().find(|t| t["task"] == task).unwrap()["chance_auprc"])
}

fn top_features(ablation: &Value, k: usize) -> Vec<String> {
    let mut rows: Vec<(String, f64)> = ablation["features"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| (r["feature"].as_str().unwrap().to_string(), f(&r["importance"])))
        .collect();
    rows.sort_by(|a, b| b.1.total_cmp(&a.1));
    rows.into_iter().take(k).map(|r| r.0).collect()
}

/// The rule with exactly these items, from any class-sensitive rules file.
fn find_rule(out: &Path, items: &[(&str, &str)]) -> Option<Value> {
    let mut want: Vec<(String, String)> = items.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect();
    want.sort();
    for stem in ["readmitted", "not_readmitted", "within_30", "after_30"] {
        let p = out.join(format!("rules/{stem}.json"));
        if !p.exists() {
            continue;
        }
        for r in json(&p)["rules"].as_array().unwrap() {
            let mut got: Vec<(String, String)> = r["itemset"]
                .as_array()
                .unwrap()
                .iter()
                .map(|i| (i["feature"].as_str().unwrap().to_string(), i["value"].as_str().unwrap().to_string()))
                .collect();
            got.sort();
            if got == want {
                return Some(r.clone());
            }
        }
    }
    None
}

fn stage_seconds(out: &Path, stage: &str) -> f64 {
    json(out.join(MANIFEST_FILE))["stages"]
        .as_array()
        .unwrap()
        .iter()
        .find(|s| s["stage"] == stage)
        .map_or(f64::NAN, |s| f(&s["seconds"]))
}

fn real_data_checks(r: &mut Report) -> Option<Duration> {
    let dir = data_dir();
    let dataset = dir.join("diabetic_data.csv");
    let mappings = dir.join("IDs_mapping.csv");
    let names = [
        "1a filtered size",
        "1b class distribution",
        "1c preprocessing time",
        "2a ANY_READMISSION random forest AUPRC",
        "2b ANY_READMISSION naive Bayes AUPRC",
        "2c ANY_READMISSION model ordering",
        "3a SHORT_TERM random forest AUPRC",
        "3b SHORT_TERM random forest above prevalence",
        "4a HIGH_RISK ablation top five",
        "4b DIFFERENTIATE ablation top five",
        "5a rule {discharge=3, admission source=7}",
        "5b rule {A1Cresult=None, insulin=No}",
        "6a random forest extrapolated saving",
    ];
    if !dataset.is_file() || !mappings.is_file() {
        for n in names {
            r.check(n, false, format!("dataset not found at {}", dir.display()));
        }
        return None;
    }

    let tmp = tempfile::tempdir().expect("tempdir");
    let out = tmp.path();
    let elapsed = reproduce(&dataset, &mappings, out, 42);

    let pre = json(out.join("preprocess/preprocess_report.json"));
    let kept = f(&pre["filter"]["rows_out"]);
    r.check(
        names[0],
        (kept - 98_053.0).abs() <= 0.01 * 98_053.0,
        format!("{kept} rows (target 98053 ± 1%)"),
    );
    let frac = &pre["class_distribution"]["fractions"];
    let (lt, gt, no) = (f(&frac["<30"]), f(&frac[">30"]), f(&frac["NO"]));
    r.check(
        names[1],
        (lt - 0.11).abs() <= 0.02 && (gt - 0.35).abs() <= 0.02 && (no - 0.54).abs() <= 0.02,
        format!("<30 {lt:.4}, >30 {gt:.4}, NO {no:.4} (targets .11/.35/.54 ± .02)"),
    );
    let secs = stage_seconds(out, "preprocess");
    r.check(names[2], secs < 60.0, format!("{secs:.1}s (limit 60s)"));

    let te = json(out.join("train_eval/train_eval.json"));
    let any = |m| auprc_of(&te, "any_readmission", m);
    let (nb, bn, rf, ada, mlp) = (any("naive_bayes"), any("bayes_net"), any("random_forest"), any("adaboost"), any("mlp"));
    r.within(names[3], rf, 0.65, 0.05);
    r.within(names[4], nb, 0.63, 0.05);
    let lo_top = rf.min(mlp);
    let mid = nb.max(bn);
    r.check(
        names[5],
        lo_top >= mid && mid >= ada,
        format!("min(RF {rf:.4}, MLP {mlp:.4}) >= max(NB {nb:.4}, BN {bn:.4}) >= AdaBoost {ada:.4}"),
    );
    let rf_short = auprc_of(&te, "short_term", "random_forest");
    r.within(names[6], rf_short, 0.242, 0.06);
    let prev = chance_of(&te, "short_term");
    r.check(names[7], rf_short > prev, format!("{rf_short:.4} vs prevalence {prev:.4}"));

    let hi = top_features(&json(out.join("ablation/any_readmission.json")), 5);
    let need = ["number_inpatient", "discharge_disposition_id", "admission_type_id"];
    r.check(names[8], need.iter().all(|n| hi.iter().any(|h| h == n)), format!("top five {hi:?}"));
    let diff = top_features(&json(out.join("ablation/differentiate.json")), 5);
    let need = ["num_lab_procedures", "discharge_disposition_id"];
    r.check(names[9], need.iter().all(|n| diff.iter().any(|h| h == n)), format!("top five {diff:?}"));

    match find_rule(out, &[("discharge_disposition_id", "3"), ("admission_source_id", "7")]) {
        Some(rule) => {
            let total = f(&rule["total_matches"]);
            let lt30 = 100.0 * f(&rule["fraction_lt30"]);
            r.check(
                names[10],
                (total - 8_290.0).abs() <= 82.9 && (lt30 - 15.19).abs() <= 0.5,
                format!("{total} matches (8290 ± 1%), <30 {lt30:.2}% (15.19 ± 0.5)"),
            );
        }
        None => r.check(names[10], false, "itemset not mined"),
    }
    match find_rule(out, &[("A1Cresult", "None"), ("insulin", "No")]) {
        Some(rule) => {
            let total = f(&rule["total_matches"]);
            r.check(
                names[11],
                (total - 39_978.0).abs() <= 399.78,
                format!("{total} matches (39978 ± 1%)"),
            );
        }
        None => r.check(names[11], false, "itemset not mined"),
    }

    let cost = json(out.join("cost/cost.json"));
    let rf_row = cost["models"].as_array().unwrap().iter().find(|m| m["model"] == "random_forest");
    match rf_row {
        Some(row) => {
            let dollars = f(&row["paper"]["extrapolated_total"]) / 100.0;
            r.check(
                names[12],
                (200e6..=300e6).contains(&dollars),
                format!("${dollars:.0} (range $200M to $300M)"),
            );
        }
        None => r.check(names[12], false, "random forest missing from cost report"),
    }
    Some(elapsed)
}

fn cost_checks(r: &mut Report) {
    let params = CostParams::new(Cents::from_dollars(10_591), Cents::from_dollars(2_409)).unwrap();
    let cm = readmission::eval::ConfusionMatrix { tp: 100, fp: 50, fn_: 0, tn: 0 };
    let saved = saved_cost(&cm, &params);
    r.check(
        "6b saved cost of 100 true and 50 false positives",
        saved == Cents::from_dollars(697_750),
        format!("${}", saved.plain()),
    );

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut mismatches = 0;
    for _ in 0..100 {
        let n = rng.random_range(2..60);
        let mut scores: Vec<(f64, bool)> = (0..n)
            .map(|_| ((rng.random_range(0..20) as f64) / 20.0, rng.random_bool(0.3)))
            .collect();
        scores[0].1 = true;
        scores[1].1 = false;
        let alpha = rng.random_range(2..20_000i64);
        let beta = rng.random_range(1..alpha);
        let params = CostParams::new(Cents(alpha), Cents(beta)).unwrap();

        // oracle: every candidate, ascending, keeping the first best
        let mut cands: Vec<f64> = scores.iter().map(|s| s.0).chain([0.0, above_all()]).collect();
        cands.sort_by(f64::total_cmp);
        cands.dedup();
        let mut best: Option<(f64, Cents)> = None;
        for t in cands {
            let s = saved_cost(&confusion(&scores, t).unwrap(), &params);
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((t, s));
            }
        }
        let got = optimize_threshold(&scores, &params).unwrap();
        if Some((got.threshold, got.saved)) != best {
            mismatches += 1;
        }
    }
    r.check(
        "6c threshold optimiser equals brute force",
        mismatches == 0,
        format!("{mismatches} of 100 random fixtures differ"),
    );
}

fn apriori_check(r: &mut Report) {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut mismatches = 0;
    let mut largest = 0;
    for _ in 0..100 {
        // four features with up to three values each: at most twelve items
        let n = rng.random_range(1..60);
        let rows: Vec<Vec<(String, String)>> = (0..n)
            .map(|_| {
                (0..4)
                    .filter_map(|f| {
                        let present = rng.random_bool(0.85);
                        let value = rng.random_range(0..3);
                        present.then(|| (format!("f{f}"), value.to_string()))
                    })
                    .collect()
            })
            .collect();
        let min_support = rng.random_range(1..8);
        let max_len = rng.random_range(1..5);
        let outcomes = (0..n).map(|_| Readmitted::ALL[rng.random_range(0..3)]).collect();
        let tx = Transactions::new(&rows, outcomes).unwrap();
        largest = largest.max(tx.items().len());

        let mined: BTreeMap<Vec<Item>, usize> = mine_frequent(&tx, min_support, max_len)
            .unwrap()
            .into_iter()
            .map(|s| {
                let mut k = s.items;
                k.sort();
                (k, s.support)
            })
            .collect();

        let mut universe: Vec<Item> = tx.items().to_vec();
        universe.sort();
        let mut oracle = BTreeMap::new();
        for mask in 1u32..(1 << universe.len()) {
            let set: Vec<&Item> = (0..universe.len()).filter(|i| mask >> i & 1 == 1).map(|i| &universe[i]).collect();
            if set.len() > max_len {
                continue;
            }
            let support = rows
                .iter()
                .filter(|row| set.iter().all(|it| row.iter().any(|(f, v)| *f == it.feature && *v == it.value)))
                .count();
            if support >= min_support {
                oracle.insert(set.into_iter().cloned().collect::<Vec<_>>(), support);
            }
        }
        if mined != oracle {
            mismatches += 1;
        }
    }
    r.check(
        "7a Apriori equals brute-force enumeration",
        mismatches == 0,
        format!("{mismatches} of 100 datasets differ (up to {largest} items)"),
    );
}

fn small_task(task: Task, rows: usize) -> TaskData {
    let raw = synthetic::generate(&SyntheticSpec { rows, seed: 11 });
    let prepared = prepare(raw).unwrap();
    TaskData::build(&prepared.rows, task, 11).unwrap()
}

fn gradient_check(r: &mut Report) {
    let data = small_task(Task::AnyReadmission, 1_500);
    let train = data.train();
    let params = MlpParams::default();
    let obj = MlpObjective::new(&data.schema, &train, params.hidden, params.l2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut g = vec![0.0; obj.n_params()];
    let mut scratch = vec![0.0; obj.n_params()];
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let theta: Vec<f64> = (0..obj.n_params()).map(|_| rng.random_range(-0.5..0.5)).collect();
        obj.value_and_gradient(&theta, &mut g);
        let scale = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..theta.len() {
            let h = 1e-5;
            let mut tp = theta.clone();
            tp[i] += h;
            let mut tm = theta.clone();
            tm[i] -= h;
            let fd = (obj.value_and_gradient(&tp, &mut scratch) - obj.value_and_gradient(&tm, &mut scratch)) / (2.0 * h);
            // relative to the component, floored at a millionth of the largest
            let denom = g[i].abs().max(fd.abs()).max(1e-6 * scale);
            worst = worst.max((g[i] - fd).abs() / denom);
        }
    }
    r.check(
        "7b MLP gradient against central differences",
        worst < 1e-4,
        format!("max relative error {worst:.2e} over 10 points, {} parameters (limit 1e-4)", obj.n_params()),
    );
}

fn posterior_check(r: &mut Report) {
    let data = small_task(Task::AnyReadmission, 3_000);
    let train = data.train();
    let test = data.test();
    let nb = NaiveBayes::train(&data.schema, &train, &NaiveBayesParams::default()).unwrap();
    let bn = BayesNet::train(&data.schema, &train, &BayesNetParams::default()).unwrap();
    let mut worst: f64 = 0.0;
    for x in &test {
        for p in [nb.posterior(x), bn.posterior(x)] {
            worst = worst.max((p[0] + p[1] - 1.0).abs());
        }
    }
    r.check(
        "7c naive Bayes and Bayes net posteriors sum to one",
        worst <= 1e-9,
        format!("max deviation {worst:.2e} over {} encounters (limit 1e-9)", test.len()),
    );
}

fn auprc_fixture(r: &mut Report) {
    let area = auprc(&[(0.9, true), (0.8, false), (0.7, true), (0.1, false)]).unwrap();
    r.within("7d AUPRC of the four-point fixture", area, 0.8333333333333334, 1e-9);
}

fn files(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().is_some_and(|n| n != MANIFEST_FILE) {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

/// Two seeded full-size runs on generated data; returns the first run's time.
fn determinism_check(r: &mut Report) -> Duration {
    let tmp = tempfile::tempdir().expect("tempdir");
    let data = tmp.path().join("data");
    let status = Command::new(BIN)
        .args(["--seed", "42", "--out"])
        .arg(&data)
        .args(["synth", "--rows", &FULL_SIZE.to_string()])
        .env("RUST_LOG", "warn")
        .status()
        .unwrap();
    assert!(status.success());
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let dataset = data.join("diabetic_data.csv");
    let mappings = data.join("IDs_mapping.csv");
    let elapsed = reproduce(&dataset, &mappings, &a, 42);
    reproduce(&dataset, &mappings, &b, 42);
    let (fa, fb) = (files(&a), files(&b));
    let differing: Vec<_> = fa
        .keys()
        .chain(fb.keys())
        .filter(|k| fa.get(*k) != fb.get(*k))
        .map(|k| k.display().to_string())
        .collect();
    r.check(
        "7e two seeded full runs are byte-identical",
        differing.is_empty() && !fa.is_empty(),
        if differing.is_empty() {
            format!("{} report files identical ({FULL_SIZE} generated encounters)", fa.len())
        } else {
            format!("differing: {differing:?}")
        },
    );
    elapsed
}

fn main() -> ExitCode {
    let mut r = Report { failed: 0 };
    let real = real_data_checks(&mut r);
    cost_checks(&mut r);
    apriori_check(&mut r);
    gradient_check(&mut r);
    posterior_check(&mut r);
    auprc_fixture(&mut r);
    let synthetic_time = determinism_check(&mut r);

    let limit = Duration::from_secs(2 * 3600);
    match real {
        Some(t) => r.check("8 full reproduce run time", t < limit, format!("{:.0}s (limit 7200s)", t.as_secs_f64())),
        None => r.check(
            "8 full reproduce run time",
            synthetic_time < limit,
            format!(
                "{:.0}s on {FULL_SIZE} generated encounters, published table unavailable (limit 7200s)",
                synthetic_time.as_secs_f64()
            ),
        ),
    }

    println!("{} checks failed", r.failed);
    if r.failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
