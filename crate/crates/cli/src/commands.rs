//! Pipeline stages. Each one reads its inputs from the output directory,
//! writes its results there and records a `<stage>.manifest.json`.

use std::fs::{self, OpenOptions};
use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};

use beamcausal::channel::dft_codebook;
use beamcausal::eval::{BenchContext, BenchReport};
use beamcausal::lingam::{self, CausalGraph};
use beamcausal::mlp::{self, MlpModel};
use beamcausal::scene::{self, Dataset, Split};
use beamcausal::select::{self, Method, SelectionResult, ShapleyConfig};
use beamcausal::stream::derive_seed;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

pub const DATASET: &str = "dataset.txt";
pub const GRAPH: &str = "graph.txt";
pub const SELECTION: &str = "selection.txt";
pub const MODEL: &str = "model.txt";
pub const EVAL_CSV: &str = "eval.csv";
pub const EVAL_JSON: &str = "eval.json";
pub const BENCH_CSV: &str = "bench.csv";
pub const BENCH_JSON: &str = "bench.json";
pub const LOCK: &str = ".beamcausal.lock";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Gen,
    Discover,
    Select,
    Train,
    Eval,
    Bench,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Gen => "gen",
            Stage::Discover => "discover",
            Stage::Select => "select",
            Stage::Train => "train",
            Stage::Eval => "eval",
            Stage::Bench => "bench",
        }
    }
}

/// Exclusive claim on an output directory, released on drop.
#[derive(Debug)]
pub struct DirLock {
    path: PathBuf,
}

impl DirLock {
    pub fn acquire(out: &Path) -> CliResult<DirLock> {
        let path = out.join(LOCK);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(DirLock { path })
            }
            Err(e) if e.kind() == ErrorKind::AlreadyExists => Err(CliError::Locked(path)),
            Err(e) => Err(CliError::Config(format!("cannot lock {}: {e}", out.display()))),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FileDigest {
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: String,
    pub command: String,
    pub seed: u64,
    pub config: serde_json::Map<String, serde_json::Value>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

/// What a stage wrote, for the caller to report.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub outputs: Vec<PathBuf>,
    pub summary: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn digest(dir: &Path, name: &str) -> CliResult<FileDigest> {
    let bytes = fs::read(dir.join(name)).map_err(|e| data_io(&dir.join(name), e))?;
    Ok(FileDigest {
        file: name.to_string(),
        sha256: sha256_hex(&bytes),
    })
}

fn data_io(path: &Path, e: std::io::Error) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

fn write_file(dir: &Path, name: &str, contents: &str) -> CliResult<()> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| data_io(&path, e))
}

/// Loads a stage input, naming the stage that produces it when missing.
fn read_input<T>(dir: &Path, name: &str, producer: &str, load: impl FnOnce(&Path) -> beamcausal::Result<T>) -> CliResult<T> {
    let path = dir.join(name);
    if !path.is_file() {
        return Err(CliError::Data(format!(
            "{} not found; run `beamcausal {producer}` first",
            path.display()
        )));
    }
    load(&path).map_err(|e| match CliError::from(e) {
        CliError::Data(msg) | CliError::Config(msg) => CliError::Data(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Runs one stage against `out`, which must already exist.
pub fn run(stage: Stage, cfg: &RunConfig, out: &Path) -> CliResult<Outcome> {
    if !out.is_dir() {
        return Err(CliError::Config(format!("output directory {} does not exist", out.display())));
    }
    let _lock = DirLock::acquire(out)?;
    let (inputs, outputs, summary) = match stage {
        Stage::Gen => gen(cfg, out)?,
        Stage::Discover => discover(cfg, out)?,
        Stage::Select => select_stage(cfg, out)?,
        Stage::Train => train(cfg, out)?,
        Stage::Eval => eval(cfg, out)?,
        Stage::Bench => bench(cfg, out).map(|(i, o, s, _)| (i, o, s))?,
    };
    write_manifest(stage, cfg, out, &inputs, &outputs)?;
    Ok(Outcome {
        outputs: outputs.iter().map(|n| out.join(n)).collect(),
        summary,
    })
}

/// The bench stage, also returning the in-memory report.
pub fn run_bench(cfg: &RunConfig, out: &Path) -> CliResult<(Outcome, BenchReport)> {
    if !out.is_dir() {
        return Err(CliError::Config(format!("output directory {} does not exist", out.display())));
    }
    let _lock = DirLock::acquire(out)?;
    let (inputs, outputs, summary, report) = bench(cfg, out)?;
    write_manifest(Stage::Bench, cfg, out, &inputs, &outputs)?;
    Ok((
        Outcome {
            outputs: outputs.iter().map(|n| out.join(n)).collect(),
            summary,
        },
        report,
    ))
}

type StageFiles = (Vec<&'static str>, Vec<&'static str>, String);

fn write_manifest(stage: Stage, cfg: &RunConfig, out: &Path, inputs: &[&str], outputs: &[&str]) -> CliResult<()> {
    let manifest = Manifest {
        tool: format!("beamcausal {}", env!("CARGO_PKG_VERSION")),
        command: stage.name().to_string(),
        seed: cfg.seed,
        config: cfg
            .entries()
            .into_iter()
            .map(|(k, v)| (k.to_string(), serde_json::Value::String(v)))
            .collect(),
        inputs: inputs.iter().map(|n| digest(out, n)).collect::<CliResult<_>>()?,
        outputs: outputs.iter().map(|n| digest(out, n)).collect::<CliResult<_>>()?,
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_file(out, &format!("{}.manifest.json", stage.name()), &(text + "\n"))
}

pub fn build_dataset(cfg: &RunConfig) -> CliResult<Dataset> {
    let scene = scene::generate_scene(&cfg.scene)?;
    let sensing = dft_codebook(cfg.scene.n_bs, 1)?;
    let narrow = dft_codebook(cfg.scene.n_bs, cfg.scene.oversampling)?;
    Ok(scene::build_dataset(&scene, &sensing, &narrow, &cfg.scene)?)
}

fn gen(cfg: &RunConfig, out: &Path) -> CliResult<StageFiles> {
    let d = build_dataset(cfg)?;
    write_file(out, DATASET, &scene::dataset_to_string(&d)?)?;
    let summary = format!(
        "{} samples ({} train / {} val / {} test), {} sensing beams, {} classes",
        d.len(),
        d.splits.train.len(),
        d.splits.val.len(),
        d.splits.test.len(),
        d.m_w,
        d.y_classes
    );
    Ok((vec![], vec![DATASET], summary))
}

fn load_dataset(out: &Path) -> CliResult<Dataset> {
    read_input(out, DATASET, "gen", |p| scene::load_dataset(p))
}

fn load_graph(out: &Path, d: &Dataset) -> CliResult<CausalGraph> {
    let g = read_input(out, GRAPH, "discover", |p| lingam::load_graph(p))?;
    if g.p() != d.m_w + 1 || g.target != Some(d.m_w) {
        return Err(CliError::Data(format!(
            "{GRAPH} has {} variables and target {:?}; the dataset needs {} with target {}",
            g.p(),
            g.target,
            d.m_w + 1,
            d.m_w
        )));
    }
    Ok(g)
}

fn discover(cfg: &RunConfig, out: &Path) -> CliResult<StageFiles> {
    let d = load_dataset(out)?;
    let z = d.joint_matrix(d.split(Split::Train));
    let g = lingam::discover(z.view(), d.m_w, cfg.lingam_threshold)?;
    write_file(out, GRAPH, &lingam::graph_to_string(&g))?;
    let parents = select::direct_parents(&g, d.m_w);
    let summary = format!(
        "{} variables, {} edges, {} direct parents of the label",
        g.p(),
        g.effects.iter().filter(|&&b| b != 0.0).count(),
        parents.len()
    );
    Ok((vec![DATASET], vec![GRAPH], summary))
}

fn train_seed(cfg: &RunConfig) -> u64 {
    derive_seed(cfg.seed, "train")
}

fn trained_model(cfg: &RunConfig, d: &Dataset, subset: &[usize]) -> CliResult<MlpModel> {
    let mut model = mlp::init_model(subset.len(), d.y_classes, train_seed(cfg))?;
    let tc = mlp::TrainConfig {
        seed: train_seed(cfg),
        ..cfg.train.clone()
    };
    mlp::train(&mut model, d, subset, &tc)?;
    Ok(model)
}

fn select_stage(cfg: &RunConfig, out: &Path) -> CliResult<StageFiles> {
    let d = load_dataset(out)?;
    let m = cfg.m_tilde;
    let mut inputs = vec![DATASET];
    let s: SelectionResult = match cfg.method {
        Method::Causal => {
            let g = load_graph(out, &d)?;
            inputs.push(GRAPH);
            select::causal_select(&g, d.m_w, m)?
        }
        Method::Correlation => select::correlation_select(&d, d.split(Split::Train), m)?,
        Method::Shapley => {
            let all: Vec<usize> = (0..d.m_w).collect();
            let model = trained_model(cfg, &d, &all)?;
            let sc = ShapleyConfig {
                seed: derive_seed(cfg.seed, "shapley"),
                ..cfg.shapley.clone()
            };
            select::shapley_select(&model, &d, d.split(Split::Train), d.split(Split::Val), m, &sc)?
        }
        Method::Random => select::random_select(d.m_w, m, derive_seed(cfg.seed, &format!("random/{m}/0")))?,
    };
    write_file(out, SELECTION, &select::selection_to_string(&s))?;
    let beams: Vec<String> = s.selected.iter().map(|b| (b + 1).to_string()).collect();
    let summary = format!("{} selected beams {}", s.method, beams.join(","));
    Ok((inputs, vec![SELECTION], summary))
}

fn load_selection(out: &Path, d: &Dataset) -> CliResult<SelectionResult> {
    let s = read_input(out, SELECTION, "select", |p| select::load_selection(p))?;
    if s.selected.iter().any(|&b| b >= d.m_w) {
        return Err(CliError::Data(format!("{SELECTION} names a beam outside 1..={}", d.m_w)));
    }
    Ok(s)
}

fn sorted(s: &SelectionResult) -> Vec<usize> {
    let mut v = s.selected.clone();
    v.sort_unstable();
    v
}

fn train(cfg: &RunConfig, out: &Path) -> CliResult<StageFiles> {
    let d = load_dataset(out)?;
    let s = load_selection(out, &d)?;
    let model = trained_model(cfg, &d, &sorted(&s))?;
    write_file(out, MODEL, &mlp::model_to_string(&model))?;
    let best = model.history.iter().map(|h| h.val_top1).fold(0.0, f64::max);
    let summary = format!(
        "{} inputs, {} epochs, best validation top-1 {best:.4}",
        model.input_dim(),
        model.epochs_trained
    );
    Ok((vec![DATASET, SELECTION], vec![MODEL], summary))
}

#[derive(Debug, Serialize)]
struct EvalSummary {
    split: &'static str,
    /// `top_k[i]` is the top-(i+1) accuracy.
    top_k: Vec<f64>,
    row: beamcausal::eval::BenchRow,
}

fn eval(cfg: &RunConfig, out: &Path) -> CliResult<StageFiles> {
    let d = load_dataset(out)?;
    let s = load_selection(out, &d)?;
    let model = read_input(out, MODEL, "train", |p| mlp::load_model(p))?;
    let subset = sorted(&s);
    let ctx = BenchContext::new(&d, cfg.bench())?;
    let row = ctx.score_model(&model, &s, 0, s.elapsed_seconds)?;
    let k_max = cfg.se.k.max(2).min(model.classes());
    let top_k = (1..=k_max)
        .map(|k| beamcausal::eval::top_k_accuracy(&model, &d, cfg.eval_split, &subset, k))
        .collect::<beamcausal::Result<Vec<_>>>()?;
    let report = BenchReport {
        rows: vec![row.clone()],
        seed: cfg.seed,
        machine: beamcausal::eval::machine_descriptor(),
    };
    write_file(out, EVAL_CSV, &report.to_csv())?;
    let summary = format!(
        "top-1 {:.4}, top-2 {:.4}, mean SE {:.4} bit/s/Hz",
        row.top1, row.top2, row.mean_se
    );
    let json = EvalSummary {
        split: cfg.eval_split.name(),
        top_k,
        row,
    };
    write_file(out, EVAL_JSON, &(serde_json::to_string_pretty(&json).expect("serializes") + "\n"))?;
    Ok((vec![DATASET, SELECTION, MODEL], vec![EVAL_CSV, EVAL_JSON], summary))
}

#[derive(Debug, Serialize)]
struct MethodSummary {
    method: String,
    /// Budget with the highest mean SE and that SE.
    best_m_tilde: usize,
    best_se: f64,
    best_top1: f64,
    max_select_seconds: f64,
}

#[derive(Debug, Serialize)]
struct BenchSummary<'a> {
    seed: u64,
    machine: &'a str,
    columns: &'a [&'a str],
    methods: Vec<MethodSummary>,
    rows: &'a [beamcausal::eval::BenchRow],
}

fn bench(cfg: &RunConfig, out: &Path) -> CliResult<(Vec<&'static str>, Vec<&'static str>, String, BenchReport)> {
    let d = load_dataset(out)?;
    let report = beamcausal::eval::run_bench(&d, &cfg.bench_methods, &cfg.bench_grid, &cfg.bench())?;
    write_file(out, BENCH_CSV, &report.to_csv())?;
    let mut methods = Vec::new();
    for m in &cfg.bench_methods {
        let rows: Vec<_> = report.rows.iter().filter(|r| r.method == m.name()).collect();
        let best = rows
            .iter()
            .copied()
            .reduce(|a, b| if b.mean_se > a.mean_se { b } else { a })
            .expect("every method yields a row");
        methods.push(MethodSummary {
            method: m.name().to_string(),
            best_m_tilde: best.m_tilde,
            best_se: best.mean_se,
            best_top1: best.top1,
            max_select_seconds: rows.iter().map(|r| r.select_seconds).fold(0.0, f64::max),
        });
    }
    let summary_text = methods
        .iter()
        .map(|m| format!("{}: best SE {:.4} at m_tilde {}", m.method, m.best_se, m.best_m_tilde))
        .collect::<Vec<_>>()
        .join("\n");
    let json = BenchSummary {
        seed: report.seed,
        machine: &report.machine,
        columns: &beamcausal::eval::CSV_COLUMNS,
        methods,
        rows: &report.rows,
    };
    write_file(out, BENCH_JSON, &(serde_json::to_string_pretty(&json).expect("serializes") + "\n"))?;
    Ok((vec![DATASET], vec![BENCH_CSV, BENCH_JSON], summary_text, report))
}
