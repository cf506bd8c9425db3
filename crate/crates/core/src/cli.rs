//! Subcommand implementations and the artifacts they read and write.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::attack::{leakage_experiment, AttackSetting, ReconstructionReport};
use crate::data::{federated_split, load_triples, read_split, write_split, SplitStats};
use crate::error::{Error, Result};
use crate::eval::{evaluate, CommReport, MetricsReport, Split};
use crate::federation::{run_training, Mode, RoundLog, SecureConfig, TrainOutcome};
use crate::manifest::{Command, RunManifest};
use crate::model::{read_checkpoint, write_checkpoint, EmbeddingTable, ModelKind, TrainConfig};

pub const RUN_FILE: &str = "run.json";
pub const METRICS_FILE: &str = "metrics.json";
pub const ROUNDS_FILE: &str = "rounds.csv";
pub const CONVERGENCE_FILE: &str = "convergence.csv";
pub const TIMING_FILE: &str = "timing.log";
pub const CHECKPOINT_DIR: &str = "checkpoints";
pub const LEAKAGE_FILE: &str = "leakage.json";
pub const COMM_REPORT_FILE: &str = "comm_report.json";
pub const SUMMARY_FILE: &str = "summary.csv";

pub fn checkpoint_path(run_dir: &Path, client: usize) -> PathBuf {
    run_dir.join(CHECKPOINT_DIR).join(format!("client_{client}.ckpt"))
}

fn write(path: &Path, body: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut body = serde_json::to_string_pretty(value)?;
    body.push('\n');
    write(path, body)
}

pub fn cmd_split(m: &RunManifest) -> Result<SplitStats> {
    m.validate(Command::Split)?;
    let triples = m.dataset.triples.as_deref().expect("validated");
    let (kg, stats) = load_triples(triples, m.dataset.entities.as_deref(), m.dataset.relations.as_deref())?;
    if stats.duplicates > 0 {
        log::warn!("{}: collapsed {} duplicate triples", triples.display(), stats.duplicates);
    }
    let clients = federated_split(&kg, m.dataset.num_clients, m.dataset.ratios, m.seed)?;
    let dir = m.split_dir();
    let stats = write_split(&dir, &kg, &clients)?;
    log::info!("wrote {} clients to {}", clients.len(), dir.display());
    Ok(stats)
}

/// Identity of a training run, written to `run.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub mode: Mode,
    pub model: ModelKind,
    pub seed: u64,
    pub num_clients: usize,
    pub num_entities: usize,
    pub num_relations: usize,
    pub dataset_fingerprint: String,
    pub secure: SecureConfig,
    pub hyper: TrainConfig,
    pub rounds: usize,
    pub sample_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub rounds_run: usize,
    pub best_round: Option<usize>,
    pub best_valid_mrr: Option<f64>,
    pub stopped_early: bool,
    pub test: MetricsReport,
}

pub fn cmd_train(m: &RunManifest) -> Result<(RunRecord, RunMetrics)> {
    m.validate(Command::Train)?;
    let split = read_split(&m.split_dir())?;
    let fed = m.federation();
    let outcome = run_training(
        &split.clients,
        split.entities.len(),
        split.relations.len(),
        m.train.model,
        &m.train.hyper,
        &fed,
    )?;
    let test = evaluate(&split.clients, &outcome.tables, Split::Test, &fed.eval)?;
    let record = RunRecord {
        mode: m.train.mode,
        model: m.train.model,
        seed: m.seed,
        num_clients: split.clients.len(),
        num_entities: split.entities.len(),
        num_relations: split.relations.len(),
        dataset_fingerprint: split.fingerprint(),
        secure: m.secure,
        hyper: m.train.hyper.clone(),
        rounds: m.train.rounds,
        sample_fraction: m.train.sample_fraction,
    };
    let metrics = RunMetrics {
        rounds_run: outcome.logs.len(),
        best_round: outcome.best_round,
        best_valid_mrr: outcome.best_valid_mrr,
        stopped_early: outcome.stopped_early,
        test,
    };
    write_run(&m.output_dir, &record, &metrics, &outcome)?;
    Ok((record, metrics))
}

pub fn write_run(dir: &Path, record: &RunRecord, metrics: &RunMetrics, outcome: &TrainOutcome) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_json(&dir.join(RUN_FILE), record)?;
    write_json(&dir.join(METRICS_FILE), metrics)?;
    write(&dir.join(ROUNDS_FILE), rounds_csv(&outcome.logs)?)?;
    let mut conv = String::from("round,valid_mrr\n");
    for l in &outcome.logs {
        if let Some(mrr) = l.valid_mrr {
            let _ = writeln!(conv, "{},{mrr}", l.round);
        }
    }
    write(&dir.join(CONVERGENCE_FILE), conv)?;
    let mut timing = String::new();
    for l in &outcome.logs {
        let _ = writeln!(timing, "round {} wall_ms {:.3}", l.round, l.wall_ms);
    }
    write(&dir.join(TIMING_FILE), timing)?;
    for (c, table) in outcome.tables.iter().enumerate() {
        let path = checkpoint_path(dir, c);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        write_checkpoint(&path, table, record.seed)?;
    }
    Ok(())
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(";")
}

/// One line of `rounds.csv`; list fields are `;`-separated.
#[derive(Debug, Serialize, Deserialize)]
struct RoundRow {
    round: usize,
    participants: String,
    upload_bytes: String,
    payload_elements: u64,
    loss: f64,
    valid_mrr: Option<f64>,
}

pub fn rounds_csv(logs: &[RoundLog]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for l in logs {
        w.serialize(RoundRow {
            round: l.round,
            participants: join(&l.participants),
            upload_bytes: join(&l.upload_bytes),
            payload_elements: l.payload_elements(),
            loss: l.loss,
            valid_mrr: l.valid_mrr,
        })
        .map_err(|e| Error::Encoding(e.to_string()))?;
    }
    w.into_inner().map_err(|e| Error::Encoding(e.to_string()))
}

pub fn parse_rounds_csv(path: &Path, text: &str) -> Result<Vec<RoundLog>> {
    let bad = |line: usize, message: String| Error::Parse {
        path: path.to_owned(),
        line,
        message,
    };
    let mut r = csv::Reader::from_reader(text.as_bytes());
    r.deserialize::<RoundRow>()
        .enumerate()
        .map(|(i, row)| {
            let lineno = i + 2;
            let row = row.map_err(|e| bad(lineno, e.to_string()))?;
            let list = |s: &str| -> Result<Vec<u64>> {
                s.split(';')
                    .filter(|x| !x.is_empty())
                    .map(|x| x.parse().map_err(|_| bad(lineno, format!("bad integer `{x}`"))))
                    .collect()
            };
            Ok(RoundLog {
                round: row.round,
                participants: list(&row.participants)?.into_iter().map(|x| x as usize).collect(),
                upload_bytes: list(&row.upload_bytes)?,
                loss: row.loss,
                valid_mrr: row.valid_mrr,
                wall_ms: 0.0,
            })
        })
        .collect()
}

pub fn read_rounds(run_dir: &Path) -> Result<Vec<RoundLog>> {
    let path = run_dir.join(ROUNDS_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    parse_rounds_csv(&path, &text)
}

pub fn read_tables(run_dir: &Path, num_clients: usize) -> Result<Vec<EmbeddingTable>> {
    (0..num_clients)
        .map(|c| read_checkpoint(&checkpoint_path(run_dir, c)).map(|(_, t)| t))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakageEntry {
    pub leakage_ratio: f64,
    pub mean_err: f64,
    pub mean_trr: f64,
    pub targets: Vec<ReconstructionReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakageReport {
    pub mode: Mode,
    pub model: ModelKind,
    pub psu: bool,
    pub secagg: bool,
    pub traitor: usize,
    pub results: Vec<LeakageEntry>,
}

pub fn cmd_attack(m: &RunManifest) -> Result<LeakageReport> {
    m.validate(Command::Attack)?;
    let run_dir = m.attack_run_dir();
    let record: RunRecord = read_json(&run_dir.join(RUN_FILE))?;
    let split = read_split(&m.split_dir())?;
    let fp = split.fingerprint();
    if fp != record.dataset_fingerprint {
        return Err(Error::FingerprintMismatch(format!(
            "run {} was trained on {} but the split is {fp}",
            run_dir.display(),
            record.dataset_fingerprint
        )));
    }
    let tables = read_tables(&run_dir, record.num_clients)?;
    let setting = AttackSetting {
        mode: record.mode,
        secagg: record.secure.secagg,
        traitor: m.attack.traitor,
        seed: m.seed,
    };
    let results = m
        .attack
        .leakage_ratios
        .iter()
        .map(|&ratio| {
            let targets = leakage_experiment(setting, ratio, &split.clients, &tables)?;
            let n = targets.len().max(1) as f64;
            Ok(LeakageEntry {
                leakage_ratio: ratio,
                mean_err: targets.iter().map(|t| t.err).sum::<f64>() / n,
                mean_trr: targets.iter().map(|t| t.trr).sum::<f64>() / n,
                targets,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let report = LeakageReport {
        mode: record.mode,
        model: record.model,
        psu: record.secure.psu,
        secagg: record.secure.secagg,
        traitor: m.attack.traitor,
        results,
    };
    write_json(&m.output_dir.join(LEAKAGE_FILE), &report)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reduction {
    pub reduced: String,
    pub baseline: String,
    pub reduction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetComparison {
    #[serde(flatten)]
    pub comm: CommReport,
    pub reductions: Vec<Reduction>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub dataset_fingerprint: String,
    pub targets: Vec<TargetComparison>,
}

struct LoadedRun {
    label: String,
    record: RunRecord,
    metrics: RunMetrics,
    logs: Vec<RoundLog>,
}

fn load_runs(dirs: &[PathBuf]) -> Result<Vec<LoadedRun>> {
    let mut runs: Vec<LoadedRun> = Vec::with_capacity(dirs.len());
    for dir in dirs {
        let record: RunRecord = read_json(&dir.join(RUN_FILE))?;
        let metrics: RunMetrics = read_json(&dir.join(METRICS_FILE))?;
        let logs = read_rounds(dir)?;
        let mut label = format!("{}-{}", record.mode, record.model);
        if runs.iter().any(|r| r.label == label) {
            label = format!("{label}@{}", dir.display());
        }
        runs.push(LoadedRun {
            label,
            record,
            metrics,
            logs,
        });
    }
    let first = &runs[0];
    let mismatched: Vec<String> = runs
        .iter()
        .zip(dirs)
        .filter(|(r, _)| r.record.dataset_fingerprint != first.record.dataset_fingerprint)
        .map(|(r, d)| format!("{}: {}", d.display(), r.record.dataset_fingerprint))
        .collect();
    if !mismatched.is_empty() {
        return Err(Error::FingerprintMismatch(format!(
            "{}: {} differs from {}",
            dirs[0].display(),
            first.record.dataset_fingerprint,
            mismatched.join(", ")
        )));
    }
    Ok(runs)
}

pub fn cmd_report(m: &RunManifest) -> Result<ComparisonReport> {
    m.validate(Command::Report)?;
    let runs = load_runs(&m.report.runs)?;
    let targets = m
        .report
        .targets
        .iter()
        .map(|&target| {
            let comm = CommReport::build(target, runs.iter().map(|r| (r.label.as_str(), r.logs.as_slice())))?;
            let reductions = reduction_pairs(&runs)
                .into_iter()
                .map(|(reduced, baseline)| Reduction {
                    reduction: comm.reduction(&reduced, &baseline),
                    reduced,
                    baseline,
                })
                .collect();
            Ok(TargetComparison { comm, reductions })
        })
        .collect::<Result<Vec<_>>>()?;
    let report = ComparisonReport {
        dataset_fingerprint: runs[0].record.dataset_fingerprint.clone(),
        targets,
    };
    write_json(&m.output_dir.join(COMM_REPORT_FILE), &report)?;
    write(&m.output_dir.join(SUMMARY_FILE), summary_csv(&runs, &report))?;
    Ok(report)
}

/// FedR runs paired with the FedE run of the same model.
fn reduction_pairs(runs: &[LoadedRun]) -> Vec<(String, String)> {
    let mut out = Vec::new();
    for r in runs.iter().filter(|r| r.record.mode == Mode::FedR) {
        if let Some(b) = runs
            .iter()
            .find(|b| b.record.mode == Mode::FedE && b.record.model == r.record.model)
        {
            out.push((r.label.clone(), b.label.clone()));
        }
    }
    out
}

fn summary_csv(runs: &[LoadedRun], report: &ComparisonReport) -> String {
    let mut out = String::from("run,mode,model,mrr,hits1,hits3,hits10,payload_per_round");
    for t in &report.targets {
        let x = t.comm.target_mrr;
        let _ = write!(out, ",rounds_to_{x},cost_{x},reduction_{x}");
    }
    out.push('\n');
    let opt = |v: Option<String>| v.unwrap_or_default();
    for r in runs {
        let test = &r.metrics.test;
        let _ = write!(
            out,
            "{},{},{},{},{},{},{}",
            r.label, r.record.mode, r.record.model, test.mrr, test.hits1, test.hits3, test.hits10
        );
        let payload = report.targets.first().and_then(|t| t.comm.entry(&r.label)).map(|e| e.payload_per_round);
        let _ = write!(out, ",{}", opt(payload.map(|p| p.to_string())));
        for t in &report.targets {
            let e = t.comm.entry(&r.label);
            let red = t
                .reductions
                .iter()
                .find(|x| x.reduced == r.label)
                .and_then(|x| x.reduction);
            let _ = write!(
                out,
                ",{},{},{}",
                opt(e.and_then(|e| e.rounds_to_target).map(|v| v.to_string())),
                opt(e.and_then(|e| e.cost).map(|v| v.to_string())),
                opt(red.map(|v| v.to_string()))
            );
        }
        out.push('\n');
    }
    out
}

/// Per-mode summary used by the `train` subcommand's log line.
pub fn describe(metrics: &RunMetrics) -> BTreeMap<&'static str, f64> {
    BTreeMap::from([
        ("mrr", metrics.test.mrr),
        ("hits1", metrics.test.hits1),
        ("hits3", metrics.test.hits3),
        ("hits10", metrics.test.hits10),
    ])
}
