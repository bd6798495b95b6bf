//! End-to-end orchestration behind the command-line subcommands.
//!
//! A [`Pipeline`] owns one [`RunConfig`] and caches every intermediate
//! result (loaded table, prepared rows, task splits, fitted models), so
//! `reproduce` runs each stage once. Every report embeds the config hash and
//! seed; JSON reports carry them as fields and CSV reports as a leading
//! `#` comment line. Wall-clock information is confined to
//! `run_manifest.json`, so two runs with the same config and seed produce
//! byte-identical reports.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::config::RunConfig;
use crate::cost::{
    derive_beta, extrapolate_total, optimize_threshold, saved_cost, Cents, CostParams, ThresholdResult,
};
use crate::error::{Error, Result};
use crate::eval::{confusion, pr_curve, ConfusionMatrix};
use crate::feature_analysis::{ablation_study, AblationReport};
use crate::ingest::{load_dataset, load_id_mappings, IdMappings, LoadStats, MappingTable, RawEncounter};
use crate::models::{cross_validate, CvReport, LearnerConfig, ModelKind, Scorer};
use crate::preprocess::{
    extract_all, feature_index, prepare, ClassDistribution, ExtractionWarnings, FeatureSchema, FilterReport,
    Prepared, Task, TaskData, FEATURES,
};
use crate::rules::{class_stats, mine_class_sensitive, ClassFilter, ClassRuleStats, Item, Transactions};

/// Name of the only output file that records wall-clock times.
pub const MANIFEST_FILE: &str = "run_manifest.json";

#[derive(Serialize)]
struct Stamped<'a, T: Serialize> {
    config_hash: &'a str,
    seed: u64,
    #[serde(flatten)]
    report: &'a T,
}

/// A model fitted for one task, with the configuration that produced it.
#[derive(Debug, Clone)]
pub struct Fitted {
    pub config: LearnerConfig,
    pub cv: Option<CvReport>,
    pub scorer: Scorer,
}

pub struct Pipeline {
    config: RunConfig,
    hash: String,
    raw: Option<(Vec<RawEncounter>, LoadStats)>,
    mappings: Option<Option<IdMappings>>,
    prepared: Option<Prepared>,
    tasks: BTreeMap<Task, TaskData>,
    fitted: BTreeMap<(Task, ModelKind), Fitted>,
    written: BTreeSet<PathBuf>,
    stages: Vec<StageTiming>,
}

#[derive(Debug, Clone, Serialize)]
struct StageTiming {
    stage: String,
    seconds: f64,
}

impl Pipeline {
    pub fn new(config: RunConfig) -> Result<Self> {
        config.validate()?;
        let hash = config.hash();
        Ok(Self {
            config,
            hash,
            raw: None,
            mappings: None,
            prepared: None,
            tasks: BTreeMap::new(),
            fitted: BTreeMap::new(),
            written: BTreeSet::new(),
            stages: Vec::new(),
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn config_hash(&self) -> &str {
        &self.hash
    }

    fn out(&self) -> &Path {
        &self.config.output
    }

    // ---- cached stages -------------------------------------------------

    fn raw(&mut self) -> Result<&[RawEncounter]> {
        if self.raw.is_none() {
            let path = &self.config.data.dataset;
            if !path.is_file() {
                return Err(Error::Data(format!("dataset not found at {}", path.display())));
            }
            let ds = load_dataset(path)?;
            log::info!("loaded {} encounters from {}", ds.stats.rows, path.display());
            self.raw = Some((ds.encounters, ds.stats));
        }
        Ok(&self.raw.as_ref().expect("loaded").0)
    }

    fn mappings(&mut self) -> Result<Option<&IdMappings>> {
        if self.mappings.is_none() {
            let loaded = match &self.config.data.mappings {
                None => None,
                Some(path) => {
                    if !path.is_file() {
                        return Err(Error::Data(format!("id mapping file not found at {}", path.display())));
                    }
                    Some(IdMappings::from_entries(load_id_mappings(path)?)?)
                }
            };
            self.mappings = Some(loaded);
        }
        Ok(self.mappings.as_ref().expect("loaded").as_ref())
    }

    pub fn prepared(&mut self) -> Result<&Prepared> {
        if self.prepared.is_none() {
            let raw = self.raw()?.to_vec();
            self.prepared = Some(prepare(raw)?);
        }
        Ok(self.prepared.as_ref().expect("prepared"))
    }

    pub fn task_data(&mut self, task: Task) -> Result<&TaskData> {
        if !self.tasks.contains_key(&task) {
            let seed = self.config.seed;
            let data = TaskData::build(&self.prepared()?.rows, task, seed)?;
            log::info!(
                "{task}: {} train / {} test encounters",
                data.split.train_ids.len(),
                data.split.test_ids.len()
            );
            self.tasks.insert(task, data);
        }
        Ok(&self.tasks[&task])
    }

    /// Model selected by cross-validation (when enabled) and refitted on
    /// the whole training split.
    pub fn fitted(&mut self, task: Task, kind: ModelKind) -> Result<&Fitted> {
        if !self.fitted.contains_key(&(task, kind)) {
            let seed = self.config.seed;
            let use_cv = self.config.cv.enabled;
            let candidates = if use_cv {
                self.config.candidates(kind)
            } else {
                vec![self.config.learner(kind)]
            };
            let data = self.task_data(task)?;
            let (config, cv) = if use_cv {
                let report = cross_validate(&candidates, data, seed)?;
                (report.best().config.clone(), Some(report))
            } else {
                (candidates[0].clone(), None)
            };
            let started = Instant::now();
            let scorer = config.train(&data.schema, &data.train(), seed)?;
            log::info!("{task}/{kind}: trained in {:.1}s", started.elapsed().as_secs_f64());
            self.fitted.insert((task, kind), Fitted { config, cv, scorer });
        }
        Ok(&self.fitted[&(task, kind)])
    }

    // ---- output helpers ------------------------------------------------

    fn path(&self, rel: &str) -> Result<PathBuf> {
        let p = self.out().join(rel);
        if let Some(dir) = p.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        Ok(p)
    }

    fn write_bytes(&mut self, rel: &str, bytes: &[u8]) -> Result<PathBuf> {
        let p = self.path(rel)?;
        fs::write(&p, bytes).map_err(|e| Error::io(&p, e))?;
        self.written.insert(PathBuf::from(rel));
        Ok(p)
    }

    fn write_json<T: Serialize>(&mut self, rel: &str, report: &T) -> Result<PathBuf> {
        let stamped = Stamped {
            config_hash: &self.hash,
            seed: self.config.seed,
            report,
        };
        let mut bytes = serde_json::to_vec_pretty(&stamped)?;
        bytes.push(b'\n');
        self.write_bytes(rel, &bytes)
    }

    /// CSV with a leading `# config_hash=… seed=…` line.
    fn write_csv<F>(&mut self, rel: &str, body: F) -> Result<PathBuf>
    where
        F: FnOnce(&mut Vec<u8>) -> Result<()>,
    {
        let mut bytes = format!("# config_hash={} seed={}\n", self.hash, self.config.seed).into_bytes();
        body(&mut bytes)?;
        self.write_bytes(rel, &bytes)
    }

    fn timed<T>(&mut self, stage: &str, f: impl FnOnce(&mut Self) -> Result<T>) -> Result<T> {
        let started = Instant::now();
        let out = f(self)?;
        let seconds = started.elapsed().as_secs_f64();
        log::info!("{stage} finished in {seconds:.1}s");
        self.stages.push(StageTiming {
            stage: stage.to_string(),
            seconds,
        });
        Ok(out)
    }

    // ---- subcommands ---------------------------------------------------

    pub fn cmd_preprocess(&mut self) -> Result<PreprocessReport> {
        self.timed("preprocess", |p| p.preprocess_inner())
    }

    fn preprocess_inner(&mut self) -> Result<PreprocessReport> {
        self.raw()?;
        let mapping_check = self.check_mappings()?;
        let load = self.raw.as_ref().expect("loaded").1.clone();
        let prepared = self.prepared()?;
        let stay = average_stay(prepared)?;
        let report_base = (
            prepared.filter.clone(),
            prepared.warnings.clone(),
            prepared.missing.clone(),
            prepared.class_distribution.clone(),
        );
        let mut cache = Vec::new();
        write_encounters_csv(&mut cache, prepared)?;
        let schema = self.task_data(Task::AnyReadmission)?.schema.clone();
        let report = PreprocessReport {
            load,
            filter: report_base.0,
            warnings: report_base.1,
            missing: report_base.2,
            class_distribution: report_base.3,
            average_time_in_hospital: stay,
            mappings: mapping_check,
            schema_task: Task::AnyReadmission,
            schema,
        };
        self.write_json("preprocess/preprocess_report.json", &report)?;
        self.write_csv("preprocess/encounters.csv", |w| {
            w.extend_from_slice(&cache);
            Ok(())
        })?;
        Ok(report)
    }

    fn check_mappings(&mut self) -> Result<Option<MappingCheck>> {
        let raw_ids: Vec<BTreeSet<String>> = {
            let raw = self.raw()?;
            MappingTable::ALL
                .iter()
                .map(|t| {
                    raw.iter()
                        .map(|r| r.attribute(t.column()).expect("id column").trim().to_string())
                        .collect()
                })
                .collect()
        };
        let Some(maps) = self.mappings()? else {
            return Ok(None);
        };
        let mut check = MappingCheck {
            entries: maps.len(),
            unmapped: BTreeMap::new(),
        };
        for (t, ids) in MappingTable::ALL.iter().zip(raw_ids) {
            let missing: Vec<String> = ids.into_iter().filter(|id| maps.describe(*t, id).is_none()).collect();
            if !missing.is_empty() {
                log::warn!("{t}: ids without a description: {}", missing.join(", "));
                check.unmapped.insert(t.column().to_string(), missing);
            }
        }
        Ok(Some(check))
    }

    pub fn cmd_train_eval(&mut self) -> Result<TrainEvalReport> {
        self.timed("train-eval", |p| p.train_eval_inner())
    }

    fn train_eval_inner(&mut self) -> Result<TrainEvalReport> {
        let tasks = self.config.tasks.clone();
        let models = self.config.models.clone();
        let mut report = TrainEvalReport { tasks: Vec::new() };
        for &task in &tasks {
            let (n_train, n_test, fingerprint, test) = {
                let d = self.task_data(task)?;
                (d.split.train_ids.len(), d.split.test_ids.len(), d.schema.fingerprint().to_string(), d.test())
            };
            let mut evals = Vec::new();
            let mut prevalence = 0.0;
            for &kind in &models {
                let fitted = self.fitted(task, kind)?.clone();
                let scored = fitted.scorer.scored(&test)?;
                let curve = pr_curve(&scored)?;
                prevalence = curve.prevalence();
                let stem = format!("{}_{}", task.name(), kind.name());
                let pr_file = format!("train_eval/pr/{stem}.csv");
                self.write_csv(&pr_file, |w| curve.write_csv(w))?;
                let model_file = format!("models/{stem}.json");
                let mut bytes = Vec::new();
                fitted.scorer.write_json(&mut bytes)?;
                self.write_bytes(&model_file, &bytes)?;
                log::info!("{task}/{kind}: test AUPRC {:.4}", curve.area);
                evals.push(ModelEval {
                    model: kind,
                    auprc: curve.area,
                    config: fitted.config.clone(),
                    cv: fitted.cv.as_ref().map(CvSummary::from),
                    pr_file,
                    model_file,
                });
            }
            report.tasks.push(TaskEval {
                task,
                positive: task.positive_definition().to_string(),
                n_train,
                n_test,
                schema_fingerprint: fingerprint,
                chance_auprc: prevalence,
                models: evals,
            });
        }
        self.write_json("train_eval/train_eval.json", &report)?;
        let table = report.auprc_table();
        self.write_csv("train_eval/auprc.csv", |w| write_auprc_csv(w, &tasks, &table))?;
        Ok(report)
    }

    pub fn cmd_ablation(&mut self) -> Result<Vec<AblationReport>> {
        self.timed("ablation", |p| p.ablation_inner())
    }

    fn ablation_inner(&mut self) -> Result<Vec<AblationReport>> {
        let mut out = Vec::new();
        let (params, subsample, seed) = (
            self.config.random_forest.clone(),
            self.config.ablation.subsample,
            self.config.seed,
        );
        for task in self.config.ablation.tasks.clone() {
            let report = {
                let data = self.task_data(task)?;
                ablation_study(&data.schema, &data.train(), task, &params, subsample, seed)?
            };
            let name = task.name();
            self.write_csv(&format!("ablation/{name}.csv"), |w| report.write_csv(w, false))?;
            self.write_csv(&format!("ablation/{name}_ranked.csv"), |w| report.write_csv(w, true))?;
            self.write_json(&format!("ablation/{name}.json"), &report)?;
            out.push(report);
        }
        Ok(out)
    }

    /// Transactions for rule mining: the whole table by default, or only the
    /// filtered encounters.
    pub fn transactions(&mut self) -> Result<Transactions> {
        if self.config.rules.filtered {
            Transactions::from_feature_rows(&self.prepared()?.rows)
        } else {
            let (rows, _) = extract_all(self.raw()?)?;
            Transactions::from_feature_rows(&rows)
        }
    }

    pub fn cmd_rules(&mut self) -> Result<Vec<RulesReport>> {
        self.timed("rules", |p| p.rules_inner())
    }

    fn rules_inner(&mut self) -> Result<Vec<RulesReport>> {
        let tx = self.transactions()?;
        let maps = self.mappings()?.cloned();
        let rc = self.config.rules.clone();
        let mut out = Vec::new();
        for class in rc.classes.iter().copied() {
            let sets = mine_class_sensitive(&tx, class, rc.min_support, rc.max_len)?;
            let stats = class_stats(&tx, &sets, Some(class));
            log::info!("rules for {}: {} itemsets", class.name(), stats.len());
            let report = RulesReport {
                class,
                class_label: class.name().to_string(),
                source: if rc.filtered { "filtered encounters" } else { "all encounters" }.to_string(),
                transactions: tx.len(),
                min_support: rc.min_support,
                max_len: rc.max_len,
                descriptions: describe_items(maps.as_ref(), &stats),
                rules: stats,
            };
            let stem = class_file_stem(class);
            self.write_csv(&format!("rules/{stem}.csv"), |w| crate::rules::write_rules_csv(w, &report.rules))?;
            self.write_json(&format!("rules/{stem}.json"), &report)?;
            out.push(report);
        }
        Ok(out)
    }

    pub fn cmd_cost(&mut self) -> Result<CostReport> {
        self.timed("cost", |p| p.cost_inner())
    }

    fn cost_inner(&mut self) -> Result<CostReport> {
        let task = Task::AnyReadmission;
        let cc = self.config.cost.clone();
        let (n_total, avg_stay) = {
            let p = self.prepared()?;
            (p.rows.len() as u64, average_stay(p)?)
        };
        let alpha = Cents::from_dollars_f64(cc.alpha)?;
        let derived = derive_beta(alpha, avg_stay)?;
        let beta = if cc.derive_beta {
            derived
        } else {
            Cents::from_dollars_f64(cc.beta)?
        };
        let params = CostParams::new(alpha, beta)?;
        let seed = self.config.seed;
        let (test, validation_split) = {
            let d = self.task_data(task)?;
            (d.test(), d.fold(0))
        };
        let n_test = test.len() as u64;
        let mut rows = Vec::new();
        for kind in self.config.models.clone() {
            let fitted = self.fitted(task, kind)?.clone();
            let scored = fitted.scorer.scored(&test)?;
            let best = optimize_threshold(&scored, &params)?;
            let paper = CostOutcome::new(&best, n_test, n_total)?;
            let honest = if cc.honest {
                let schema = &self.tasks[&task].schema;
                let (fit, held) = &validation_split;
                let scorer = fitted.config.train(schema, fit, seed)?;
                let tuned = optimize_threshold(&scorer.scored(held)?, &params)?;
                let cm = confusion(&scorer.scored(&test)?, tuned.threshold)?;
                let on_test = ThresholdResult {
                    threshold: tuned.threshold,
                    confusion: cm,
                    saved: saved_cost(&cm, &params),
                };
                Some(HonestOutcome {
                    validation_rows: held.len(),
                    validation_saved: tuned.saved,
                    test: CostOutcome::new(&on_test, n_test, n_total)?,
                })
            } else {
                None
            };
            log::info!("cost/{kind}: saved {} on test, {} extrapolated", paper.saved_test, paper.extrapolated_total);
            rows.push(CostRow { model: kind, paper, honest });
        }
        let report = CostReport {
            task,
            alpha,
            beta,
            beta_source: if cc.derive_beta { "derived" } else { "config" }.to_string(),
            derived_beta: derived,
            average_time_in_hospital: avg_stay,
            n_test,
            n_total,
            models: rows,
        };
        self.write_json("cost/cost.json", &report)?;
        self.write_csv("cost/cost.csv", |w| write_cost_csv(w, &report))?;
        Ok(report)
    }

    /// Every stage in sequence, then the run manifest.
    pub fn cmd_reproduce(&mut self) -> Result<()> {
        let started = SystemTime::now();
        self.cmd_preprocess()?;
        self.cmd_train_eval()?;
        self.cmd_ablation()?;
        self.cmd_rules()?;
        self.cmd_cost()?;
        self.write_manifest("reproduce", started)
    }

    /// Record what ran, when, and which files it wrote. This is the only
    /// output carrying wall-clock data.
    pub fn write_manifest(&mut self, command: &str, started: SystemTime) -> Result<()> {
        let unix = |t: SystemTime| t.duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64());
        let manifest = serde_json::json!({
            "command": command,
            "version": env!("CARGO_PKG_VERSION"),
            "config_hash": self.hash,
            "seed": self.config.seed,
            "started_unix": unix(started),
            "finished_unix": unix(SystemTime::now()),
            "stages": self.stages,
            "files": self.written,
        });
        let p = self.path(MANIFEST_FILE)?;
        let mut bytes = serde_json::to_vec_pretty(&manifest)?;
        bytes.push(b'\n');
        fs::write(&p, bytes).map_err(|e| Error::io(&p, e))
    }

    /// Files written so far, relative to the output directory.
    pub fn written(&self) -> impl Iterator<Item = &Path> {
        self.written.iter().map(PathBuf::as_path)
    }
}

// ---- reports -------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct MappingCheck {
    pub entries: usize,
    /// Ids used in the table that have no description, by column.
    pub unmapped: BTreeMap<String, Vec<String>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PreprocessReport {
    pub load: LoadStats,
    pub filter: FilterReport,
    pub warnings: ExtractionWarnings,
    /// Missing values per source column, before filtering.
    pub missing: BTreeMap<String, usize>,
    /// Outcome mix after filtering.
    pub class_distribution: ClassDistribution,
    pub average_time_in_hospital: f64,
    pub mappings: Option<MappingCheck>,
    /// Task whose training split the reported schema was fitted on.
    pub schema_task: Task,
    pub schema: FeatureSchema,
}

#[derive(Debug, Clone, Serialize)]
pub struct CvSummary {
    pub candidates: Vec<(LearnerConfig, Vec<f64>, f64)>,
    pub selected: usize,
}

impl From<&CvReport> for CvSummary {
    fn from(r: &CvReport) -> Self {
        Self {
            candidates: r
                .candidates
                .iter()
                .map(|c| (c.config.clone(), c.fold_auprc.clone(), c.mean_auprc))
                .collect(),
            selected: r.selected,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ModelEval {
    pub model: ModelKind,
    pub auprc: f64,
    pub config: LearnerConfig,
    pub cv: Option<CvSummary>,
    pub pr_file: String,
    pub model_file: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct TaskEval {
    pub task: Task,
    pub positive: String,
    pub n_train: usize,
    pub n_test: usize,
    pub schema_fingerprint: String,
    /// Test-set prevalence: the area a label-independent scorer approaches.
    pub chance_auprc: f64,
    pub models: Vec<ModelEval>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainEvalReport {
    pub tasks: Vec<TaskEval>,
}

impl TrainEvalReport {
    /// Test AUPRC per model, per task.
    pub fn auprc_table(&self) -> BTreeMap<ModelKind, BTreeMap<Task, f64>> {
        let mut t: BTreeMap<ModelKind, BTreeMap<Task, f64>> = BTreeMap::new();
        for te in &self.tasks {
            for m in &te.models {
                t.entry(m.model).or_default().insert(te.task, m.auprc);
            }
        }
        t
    }

    pub fn auprc(&self, task: Task, model: ModelKind) -> Option<f64> {
        self.auprc_table().get(&model)?.get(&task).copied()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ItemDescription {
    pub item: Item,
    pub description: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RulesReport {
    pub class: ClassFilter,
    pub class_label: String,
    pub source: String,
    pub transactions: usize,
    pub min_support: usize,
    pub max_len: usize,
    /// Readable names of the id-coded items appearing in `rules`.
    pub descriptions: Vec<ItemDescription>,
    pub rules: Vec<ClassRuleStats>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CostOutcome {
    pub threshold: f64,
    pub confusion: ConfusionMatrix,
    /// Cents.
    pub saved_test: Cents,
    /// Cents, scaled from the test set to every filtered encounter.
    pub extrapolated_total: Cents,
}

impl CostOutcome {
    fn new(r: &ThresholdResult, n_test: u64, n_total: u64) -> Result<Self> {
        Ok(Self {
            threshold: r.threshold,
            confusion: r.confusion,
            saved_test: r.saved,
            extrapolated_total: extrapolate_total(r.saved, n_test, n_total)?,
        })
    }
}

/// Threshold tuned on a validation fold by a model fitted on the other
/// folds, then applied to the test set.
#[derive(Debug, Clone, Serialize)]
pub struct HonestOutcome {
    pub validation_rows: usize,
    pub validation_saved: Cents,
    pub test: CostOutcome,
}

#[derive(Debug, Clone, Serialize)]
pub struct CostRow {
    pub model: ModelKind,
    /// Threshold tuned on the test set itself.
    pub paper: CostOutcome,
    pub honest: Option<HonestOutcome>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CostReport {
    pub task: Task,
    /// Cents.
    pub alpha: Cents,
    /// Cents.
    pub beta: Cents,
    pub beta_source: String,
    pub derived_beta: Cents,
    pub average_time_in_hospital: f64,
    pub n_test: u64,
    pub n_total: u64,
    pub models: Vec<CostRow>,
}

impl CostReport {
    pub fn row(&self, model: ModelKind) -> Option<&CostRow> {
        self.models.iter().find(|r| r.model == model)
    }
}

// ---- helpers -------------------------------------------------------------

fn average_stay(p: &Prepared) -> Result<f64> {
    let i = feature_index("time_in_hospital").expect("time_in_hospital is a feature");
    if p.rows.is_empty() {
        return Err(Error::Data("no encounters left after filtering".into()));
    }
    let sum: f64 = p.rows.iter().map(|r| r.values[i].as_number().unwrap_or(0.0)).sum();
    Ok(sum / p.rows.len() as f64)
}

fn write_encounters_csv<W: Write>(w: W, p: &Prepared) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["encounter_id", "readmitted"];
    header.extend(FEATURES.iter().map(|f| f.column));
    wtr.write_record(&header)?;
    for r in &p.rows {
        let mut rec = vec![r.encounter_id.to_string(), r.readmitted.to_string()];
        rec.extend(r.values.iter().map(ToString::to_string));
        wtr.write_record(&rec)?;
    }
    wtr.flush().map_err(|e| Error::Data(format!("writing encounters: {e}")))
}

fn write_auprc_csv(w: &mut Vec<u8>, tasks: &[Task], table: &BTreeMap<ModelKind, BTreeMap<Task, f64>>) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["model".to_string()];
    header.extend(tasks.iter().map(|t| t.name().to_string()));
    wtr.write_record(&header)?;
    for (model, row) in table {
        let mut rec = vec![model.name().to_string()];
        rec.extend(tasks.iter().map(|t| row.get(t).map_or(String::new(), |v| format!("{v:.6}"))));
        wtr.write_record(&rec)?;
    }
    wtr.flush().map_err(|e| Error::Data(format!("writing AUPRC table: {e}")))
}

fn write_cost_csv(w: &mut Vec<u8>, r: &CostReport) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([
        "model",
        "mode",
        "threshold",
        "tp",
        "fp",
        "fn",
        "tn",
        "saved_test",
        "extrapolated_total",
    ])?;
    for row in &r.models {
        let mut modes = vec![("paper", &row.paper)];
        if let Some(h) = &row.honest {
            modes.push(("honest", &h.test));
        }
        for (mode, o) in modes {
            let c = o.confusion;
            wtr.write_record([
                row.model.name().to_string(),
                mode.to_string(),
                o.threshold.to_string(),
                c.tp.to_string(),
                c.fp.to_string(),
                c.fn_.to_string(),
                c.tn.to_string(),
                o.saved_test.plain(),
                o.extrapolated_total.plain(),
            ])?;
        }
    }
    wtr.flush().map_err(|e| Error::Data(format!("writing cost report: {e}")))
}

fn class_file_stem(c: ClassFilter) -> &'static str {
    match c {
        ClassFilter::Within30 => "within_30",
        ClassFilter::After30 => "after_30",
        ClassFilter::No => "not_readmitted",
        ClassFilter::Readmitted => "readmitted",
    }
}

fn describe_items(maps: Option<&IdMappings>, stats: &[ClassRuleStats]) -> Vec<ItemDescription> {
    let Some(maps) = maps else {
        return Vec::new();
    };
    let items: BTreeSet<&Item> = stats.iter().flat_map(|s| &s.itemset).collect();
    items
        .into_iter()
        .filter_map(|item| {
            let table = MappingTable::from_column(&item.feature)?;
            Some(ItemDescription {
                item: item.clone(),
                description: maps.describe(table, &item.value)?.to_string(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{self, SyntheticSpec};

    fn small_config(dir: &Path, rows: usize) -> RunConfig {
        let data = dir.join("data.csv");
        let maps = dir.join("ids.csv");
        synthetic::write_csv(fs::File::create(&data).unwrap(), &SyntheticSpec { rows, seed: 11 }).unwrap();
        synthetic::write_id_mappings(fs::File::create(&maps).unwrap()).unwrap();
        let mut cfg = RunConfig::default();
        cfg.data.dataset = data;
        cfg.data.mappings = Some(maps);
        cfg.output = dir.join("out");
        cfg.random_forest.n_trees = 12;
        cfg.cv.random_forest_n_trees = vec![12];
        cfg.adaboost.rounds = 8;
        cfg.cv.adaboost_rounds = vec![8];
        cfg.mlp.max_iterations = 30;
        cfg.rules.min_support = 60;
        cfg.rules.max_len = 2;
        cfg.ablation.subsample = 0.5;
        cfg
    }

    #[test]
    fn missing_dataset_is_a_data_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = RunConfig::default();
        cfg.data.dataset = dir.path().join("absent.csv");
        cfg.output = dir.path().join("out");
        let err = Pipeline::new(cfg).unwrap().cmd_preprocess().unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("dataset not found at"), "{err}");
    }

    #[test]
    fn reproduce_writes_stamped_reports() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_config(dir.path(), 1500);
        let out = cfg.output.clone();
        let mut p = Pipeline::new(cfg).unwrap();
        p.cmd_reproduce().unwrap();
        let hash = p.config_hash().to_string();
        let files: Vec<PathBuf> = p.written().map(Path::to_path_buf).collect();
        for f in [
            "preprocess/preprocess_report.json",
            "preprocess/encounters.csv",
            "train_eval/auprc.csv",
            "train_eval/train_eval.json",
            "train_eval/pr/any_readmission_random_forest.csv",
            "models/short_term_mlp.json",
            "ablation/differentiate_ranked.csv",
            "rules/readmitted.csv",
            "rules/not_readmitted.json",
            "cost/cost.json",
            "cost/cost.csv",
        ] {
            assert!(files.contains(&PathBuf::from(f)), "missing {f}");
        }
        for f in &files {
            let text = fs::read_to_string(out.join(f)).unwrap();
            if f.extension().is_some_and(|e| e == "csv") {
                assert!(text.starts_with(&format!("# config_hash={hash} seed=42\n")), "{}", f.display());
            } else if !f.starts_with("models") {
                let v: serde_json::Value = serde_json::from_str(&text).unwrap();
                assert_eq!(v["config_hash"], hash.as_str(), "{}", f.display());
                assert_eq!(v["seed"], 42);
            }
        }
        let manifest: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(out.join(MANIFEST_FILE)).unwrap()).unwrap();
        assert_eq!(manifest["stages"].as_array().unwrap().len(), 5);
        // saved models load back and keep the fingerprint of their task
        let s = Scorer::load(&out.join("models/any_readmission_naive_bayes.json")).unwrap();
        assert_eq!(s.kind(), ModelKind::NaiveBayes);
    }

    #[test]
    fn cost_rows_satisfy_the_saved_cost_identity() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small_config(dir.path(), 1200);
        cfg.models = vec![ModelKind::NaiveBayes, ModelKind::RandomForest];
        let mut p = Pipeline::new(cfg).unwrap();
        let r = p.cmd_cost().unwrap();
        let params = CostParams::new(r.alpha, r.beta).unwrap();
        for row in &r.models {
            assert_eq!(row.paper.saved_test, saved_cost(&row.paper.confusion, &params));
            assert!(row.paper.saved_test >= Cents(0), "never worse than flagging nobody");
            let h = row.honest.as_ref().unwrap();
            assert_eq!(h.test.saved_test, saved_cost(&h.test.confusion, &params));
            assert!(row.paper.saved_test >= h.test.saved_test);
            assert_eq!(row.paper.confusion.total(), r.n_test);
        }
        assert!(r.n_total > r.n_test);
    }

    #[test]
    fn mapping_check_reports_unmapped_ids() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_config(dir.path(), 400);
        fs::write(cfg.data.mappings.as_ref().unwrap(), "admission_type_id,description\n1,Emergency\n").unwrap();
        let mut p = Pipeline::new(cfg).unwrap();
        let r = p.cmd_preprocess().unwrap();
        let m = r.mappings.unwrap();
        assert_eq!(m.entries, 1);
        assert!(m.unmapped["admission_type_id"].iter().all(|id| id != "1"));
        assert!(m.unmapped.contains_key("discharge_disposition_id"));
    }
}
