//! Metrics and the method-versus-method benchmark harness.

use std::fmt::Write as _;
use std::sync::OnceLock;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::channel::{argmax, beam_gain, dft_codebook, quantized_mrt, Codebook};
use crate::error::{invalid, Error, Result};
use crate::lingam::{self, CausalGraph};
use crate::mlp::{self, MlpModel, TrainConfig};
use crate::scene::{sample_gain, sweep_power, Dataset, Split};
use crate::select::{self, Method, SelectionResult, ShapleyConfig};
use crate::stream;

/// Frame timing for the effective spectral efficiency.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeConfig {
    /// Coherent frame duration, seconds.
    pub t_frame: f64,
    /// Time to sweep one beam, seconds.
    pub t_slot: f64,
    /// Inference time, seconds.
    pub t_predict: f64,
    /// Number of predicted beams swept for refinement.
    pub k: usize,
}

impl Default for SeConfig {
    fn default() -> Self {
        SeConfig {
            t_frame: 10e-3,
            t_slot: 0.1e-3,
            t_predict: 0.0,
            k: 1,
        }
    }
}

impl SeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_frame > 0.0) || !(self.t_slot >= 0.0) || !(self.t_predict >= 0.0) || self.k == 0 {
            return Err(invalid("t_frame must be positive, t_slot and t_predict non-negative, k >= 1"));
        }
        Ok(())
    }

    /// Beams swept per frame for a model-based method: `m + k * 1{k > 1}`.
    pub fn sweep_beams(&self, m_tilde: usize) -> usize {
        m_tilde + if self.k > 1 { self.k } else { 0 }
    }
}

/// `((T_frame - T_IA) / T_frame) * log2(1 + snr)` with `T_IA = n_b t_s + T_predict`.
pub fn effective_se(snr_linear: f64, n_b: usize, cfg: &SeConfig) -> Result<f64> {
    cfg.validate()?;
    if !(snr_linear >= 0.0) {
        return Err(invalid("snr must be non-negative"));
    }
    let t_ia = n_b as f64 * cfg.t_slot + cfg.t_predict;
    if t_ia > cfg.t_frame {
        return Err(invalid(format!(
            "initial access takes {t_ia} s, longer than the {} s frame",
            cfg.t_frame
        )));
    }
    Ok((cfg.t_frame - t_ia) / cfg.t_frame * (1.0 + snr_linear).log2())
}

/// `(M + N_U k 1{k>1}, N_U M + N_U 1{k>1})`: beams swept and reports fed back.
pub fn overhead(m_tilde: u64, n_users: u64, k: u64) -> (u64, u64) {
    let refine = u64::from(k > 1);
    (m_tilde + n_users * k * refine, n_users * m_tilde + n_users * refine)
}

/// Fraction of `split` whose label is among the model's top `k` on `subset`.
pub fn top_k_accuracy(model: &MlpModel, d: &Dataset, split: Split, subset: &[usize], k: usize) -> Result<f64> {
    let rows = d.split(split);
    if rows.is_empty() {
        return Err(invalid("split is empty"));
    }
    if k == 0 || k > model.classes() {
        return Err(invalid(format!("k must be in 1..={}", model.classes())));
    }
    let probs = model.predict_proba(d.features(rows, subset).view())?;
    let hits = probs
        .rows()
        .into_iter()
        .zip(rows)
        .filter(|(p, &r)| mlp::top_k(p.as_slice().expect("contiguous"), k).contains(&d.samples[r].y))
        .count();
    Ok(hits as f64 / rows.len() as f64)
}

/// Methods the benchmark can compare.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BenchMethod {
    Select(Method),
    /// Noisy sweep of every narrow beam, strongest measurement wins.
    Exhaustive,
    /// Quantized matched filter from perfect channel knowledge.
    QuantizedMrt,
}

impl BenchMethod {
    pub fn name(self) -> &'static str {
        match self {
            BenchMethod::Select(m) => m.name(),
            BenchMethod::Exhaustive => "exhaustive",
            BenchMethod::QuantizedMrt => "svd",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "exhaustive" => Ok(BenchMethod::Exhaustive),
            "svd" | "mrt" => Ok(BenchMethod::QuantizedMrt),
            other => other.parse().map(BenchMethod::Select).map_err(Error::InvalidArgument),
        }
    }

    /// Whether the method selects sensing beams (and so has an m_tilde axis).
    pub fn uses_selection(self) -> bool {
        matches!(self, BenchMethod::Select(_))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub train: TrainConfig,
    pub se: SeConfig,
    pub shapley: ShapleyConfig,
    /// Pruning threshold on standardized effects.
    pub lingam_threshold: f64,
    /// Independent random subsets per m_tilde.
    pub random_trials: usize,
    pub phase_bits: u32,
    pub eval_split: Split,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            train: TrainConfig::default(),
            se: SeConfig::default(),
            shapley: ShapleyConfig::default(),
            lingam_threshold: 0.05,
            random_trials: 1,
            phase_bits: 3,
            eval_split: Split::Test,
            seed: 0,
        }
    }
}

/// One report line: a method at one sensing budget.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub method: String,
    pub m_tilde: usize,
    pub trial: usize,
    pub k: usize,
    pub n_b: usize,
    pub top1: f64,
    pub top2: f64,
    pub mean_snr_db: f64,
    pub mean_se: f64,
    pub sweep_count: u64,
    pub feedback_count: u64,
    pub select_seconds: f64,
    pub select_with_training_seconds: f64,
    pub requires_perfect_csi: bool,
    pub ia_exceeds_frame: bool,
    /// 1-based beam indices, `;`-separated.
    pub selected: String,
}

pub const CSV_COLUMNS: [&str; 16] = [
    "method",
    "m_tilde",
    "trial",
    "k",
    "n_b",
    "top1",
    "top2",
    "mean_snr_db",
    "mean_se",
    "sweep_count",
    "feedback_count",
    "select_seconds",
    "select_with_training_seconds",
    "requires_perfect_csi",
    "ia_exceeds_frame",
    "selected",
];

impl BenchRow {
    fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.method,
            self.m_tilde,
            self.trial,
            self.k,
            self.n_b,
            self.top1,
            self.top2,
            self.mean_snr_db,
            self.mean_se,
            self.sweep_count,
            self.feedback_count,
            self.select_seconds,
            self.select_with_training_seconds,
            self.requires_perfect_csi,
            self.ia_exceeds_frame,
            self.selected
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub seed: u64,
    pub machine: String,
}

pub fn machine_descriptor() -> String {
    let threads = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    format!("{}-{} threads={threads}", std::env::consts::OS, std::env::consts::ARCH)
}

impl BenchReport {
    pub fn to_csv(&self) -> String {
        let mut out = CSV_COLUMNS.join(",");
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(out, "{}", r.csv_line());
        }
        out
    }

    /// Rows with the timing columns blanked, for determinism comparisons.
    pub fn without_timing(&self) -> Vec<BenchRow> {
        self.rows
            .iter()
            .map(|r| BenchRow {
                select_seconds: 0.0,
                select_with_training_seconds: 0.0,
                ..r.clone()
            })
            .collect()
    }
}

/// Caches the pieces shared by all budgets of one benchmark: the causal graph,
/// the full-input model and its Shapley ranking.
pub struct BenchContext<'a> {
    pub d: &'a Dataset,
    pub cfg: BenchConfig,
    narrow: Codebook,
    graph: OnceLock<std::result::Result<(CausalGraph, f64), String>>,
    shapley: OnceLock<std::result::Result<ShapleyRanking, String>>,
}

#[derive(Debug, Clone)]
struct ShapleyRanking {
    importance: Vec<f64>,
    train_seconds: f64,
    attribution_seconds: f64,
}

/// Per-method wall-clock for one selection.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionTiming {
    pub method: String,
    pub select_seconds: f64,
    /// Including prerequisite model training (Shapley only).
    pub with_training_seconds: f64,
}

fn lock_result<T: Clone>(cell: &OnceLock<std::result::Result<T, String>>, f: impl FnOnce() -> Result<T>) -> Result<T> {
    cell.get_or_init(|| f().map_err(|e| e.to_string()))
        .clone()
        .map_err(Error::Numerical)
}

impl<'a> BenchContext<'a> {
    pub fn new(d: &'a Dataset, cfg: BenchConfig) -> Result<Self> {
        cfg.se.validate()?;
        cfg.train.validate()?;
        if !d.has_channels() {
            return Err(invalid("benchmarking needs a dataset with channel columns"));
        }
        let oversampling = d.y_classes / d.n_bs.max(1);
        if oversampling == 0 || oversampling * d.n_bs != d.y_classes {
            return Err(invalid("y_classes is not a multiple of n_bs"));
        }
        let narrow = dft_codebook(d.n_bs, oversampling)?;
        Ok(BenchContext {
            d,
            cfg,
            narrow,
            graph: OnceLock::new(),
            shapley: OnceLock::new(),
        })
    }

    fn train_rows(&self) -> &[usize] {
        self.d.split(Split::Train)
    }

    /// DirectLiNGAM on the training split; returns the graph and seconds spent.
    pub fn causal_graph(&self) -> Result<(CausalGraph, f64)> {
        lock_result(&self.graph, || {
            let start = Instant::now();
            let z = self.d.joint_matrix(self.train_rows());
            let g = lingam::discover(z.view(), self.d.m_w, self.cfg.lingam_threshold)?;
            Ok((g, start.elapsed().as_secs_f64()))
        })
    }

    fn train_seed(&self) -> u64 {
        stream::derive_seed(self.cfg.seed, "train")
    }

    fn trained_model(&self, subset: &[usize]) -> Result<MlpModel> {
        let mut model = mlp::init_model(subset.len(), self.d.y_classes, self.train_seed())?;
        let cfg = TrainConfig {
            seed: self.train_seed(),
            ..self.cfg.train.clone()
        };
        mlp::train(&mut model, self.d, subset, &cfg)?;
        Ok(model)
    }

    fn shapley_ranking(&self) -> Result<ShapleyRanking> {
        lock_result(&self.shapley, || {
            let all: Vec<usize> = (0..self.d.m_w).collect();
            let start = Instant::now();
            let model = self.trained_model(&all)?;
            let train_seconds = start.elapsed().as_secs_f64();
            let start = Instant::now();
            let cfg = ShapleyConfig {
                seed: stream::derive_seed(self.cfg.seed, "shapley"),
                ..self.cfg.shapley.clone()
            };
            let importance =
                select::shapley_importance(&model, self.d, self.train_rows(), self.d.split(Split::Val), &cfg)?;
            Ok(ShapleyRanking {
                importance,
                train_seconds,
                attribution_seconds: start.elapsed().as_secs_f64(),
            })
        })
    }

    /// Runs one selection method; the second value adds prerequisite training time.
    pub fn select(&self, method: Method, m_tilde: usize, trial: usize) -> Result<(SelectionResult, f64)> {
        match method {
            Method::Causal => {
                let (g, discover_s) = self.causal_graph()?;
                let mut s = select::causal_select(&g, self.d.m_w, m_tilde)?;
                s.elapsed_seconds += discover_s;
                let t = s.elapsed_seconds;
                Ok((s, t))
            }
            Method::Correlation => {
                let s = select::correlation_select(self.d, self.train_rows(), m_tilde)?;
                let t = s.elapsed_seconds;
                Ok((s, t))
            }
            Method::Shapley => {
                let start = Instant::now();
                let r = self.shapley_ranking()?;
                let selected = select::rank_top(&r.importance, m_tilde);
                if selected.len() != m_tilde {
                    return Err(invalid(format!("m_tilde must be in 1..={}", self.d.m_w)));
                }
                let rank_s = start.elapsed().as_secs_f64().min(1e-3);
                let s = SelectionResult {
                    method,
                    selected,
                    parents: Vec::new(),
                    elapsed_seconds: r.attribution_seconds + rank_s,
                };
                Ok((s, r.attribution_seconds + r.train_seconds + rank_s))
            }
            Method::Random => {
                let seed = stream::derive_seed(self.cfg.seed, &format!("random/{m_tilde}/{trial}"));
                let s = select::random_select(self.d.m_w, m_tilde, seed)?;
                let t = s.elapsed_seconds;
                Ok((s, t))
            }
        }
    }

    fn se_of(&self, snr: f64, n_b: usize) -> Result<(f64, bool)> {
        match effective_se(snr, n_b, &self.cfg.se) {
            Ok(v) => Ok((v, false)),
            // sweeping alone outlasts the frame: no data time left
            Err(Error::InvalidArgument(_)) if n_b as f64 * self.cfg.se.t_slot + self.cfg.se.t_predict > self.cfg.se.t_frame => {
                Ok((0.0, true))
            }
            Err(e) => Err(e),
        }
    }

    /// Mean SNR (dB) and mean SE given the achieved gain per evaluated sample.
    fn link_metrics(&self, gains: &[f64], n_b: usize) -> Result<(f64, f64, bool)> {
        let noise = self.d.noise_power;
        if noise <= 0.0 {
            return Ok((f64::INFINITY, f64::NAN, false));
        }
        let mut snr_db = 0.0;
        let mut se = 0.0;
        let mut exceeded = false;
        for &g in gains {
            let snr = g / noise;
            snr_db += 10.0 * snr.max(1e-30).log10();
            let (v, ex) = self.se_of(snr, n_b)?;
            se += v;
            exceeded |= ex;
        }
        let n = gains.len() as f64;
        Ok((snr_db / n, se / n, exceeded))
    }

    pub fn evaluate(&self, method: BenchMethod, m_tilde: usize, trial: usize) -> Result<BenchRow> {
        let rows = self.d.split(self.cfg.eval_split);
        if rows.is_empty() {
            return Err(invalid("evaluation split is empty"));
        }
        let n_users = rows.len() as u64;
        match method {
            BenchMethod::Select(sel) => {
                let (selection, with_training) = self.select(sel, m_tilde, trial)?;
                let mut subset = selection.selected.clone();
                subset.sort_unstable();
                let model = self.trained_model(&subset)?;
                self.score_model(&model, &selection, trial, with_training)
            }
            BenchMethod::Exhaustive => {
                let y_classes = self.narrow.size();
                let mut hits1 = 0;
                let mut hits2 = 0;
                let mut gains = Vec::with_capacity(rows.len());
                for &r in rows {
                    let s = &self.d.samples[r];
                    let h = s.channel.as_ref().expect("checked in new");
                    let mut rng = stream::rng_indexed(self.cfg.seed, "exhaustive", s.ue as u64);
                    let measured = sweep_power(h, &self.narrow, self.d.noise_power, &mut rng)?;
                    let ranked = mlp::top_k(&measured, 2);
                    hits1 += usize::from(ranked[0] == s.y);
                    hits2 += usize::from(ranked.contains(&s.y));
                    gains.push(beam_gain(h, self.narrow.vector(argmax(&measured)))?);
                }
                let (mean_snr_db, mean_se, ia_exceeds_frame) = self.link_metrics(&gains, y_classes)?;
                let (sweep_count, feedback_count) = overhead(y_classes as u64, n_users, 1);
                Ok(BenchRow {
                    method: method.name().into(),
                    m_tilde: y_classes,
                    trial,
                    k: 1,
                    n_b: y_classes,
                    top1: hits1 as f64 / rows.len() as f64,
                    top2: hits2 as f64 / rows.len() as f64,
                    mean_snr_db,
                    mean_se,
                    sweep_count,
                    feedback_count,
                    select_seconds: 0.0,
                    select_with_training_seconds: 0.0,
                    requires_perfect_csi: false,
                    ia_exceeds_frame,
                    selected: String::new(),
                })
            }
            BenchMethod::QuantizedMrt => {
                let gains = rows
                    .iter()
                    .map(|&r| {
                        let h = self.d.samples[r].channel.as_ref().expect("checked in new");
                        let w = quantized_mrt(h, self.cfg.phase_bits)?;
                        beam_gain(h, &w)
                    })
                    .collect::<Result<Vec<_>>>()?;
                let (mean_snr_db, mean_se, ia_exceeds_frame) = self.link_metrics(&gains, 0)?;
                Ok(BenchRow {
                    method: method.name().into(),
                    m_tilde: 0,
                    trial,
                    k: 1,
                    n_b: 0,
                    top1: f64::NAN,
                    top2: f64::NAN,
                    mean_snr_db,
                    mean_se,
                    sweep_count: 0,
                    feedback_count: 0,
                    select_seconds: 0.0,
                    select_with_training_seconds: 0.0,
                    requires_perfect_csi: true,
                    ia_exceeds_frame,
                    selected: String::new(),
                })
            }
        }
    }

    /// Report row for a model trained on `selection` (inputs in ascending
    /// beam order), scored on the evaluation split.
    pub fn score_model(
        &self,
        model: &MlpModel,
        selection: &SelectionResult,
        trial: usize,
        with_training_seconds: f64,
    ) -> Result<BenchRow> {
        let rows = self.d.split(self.cfg.eval_split);
        if rows.is_empty() {
            return Err(invalid("evaluation split is empty"));
        }
        let mut subset = selection.selected.clone();
        subset.sort_unstable();
        if model.input_dim() != subset.len() || model.classes() != self.d.y_classes {
            return Err(invalid(format!(
                "model shape {}->{} does not fit {} selected beams and {} classes",
                model.input_dim(),
                model.classes(),
                subset.len(),
                self.d.y_classes
            )));
        }
        let m_tilde = subset.len();
        let n_users = rows.len() as u64;
        let k = self.cfg.se.k;
        let probs = model.predict_proba(self.d.features(rows, &subset).view())?;
        let kk = k.max(2).min(model.classes());
        let mut hits1 = 0;
        let mut hits2 = 0;
        let mut gains = Vec::with_capacity(rows.len());
        for (p, &r) in probs.rows().into_iter().zip(rows) {
            let ranked = mlp::top_k(p.as_slice().expect("contiguous"), kk);
            let y = self.d.samples[r].y;
            hits1 += usize::from(ranked[0] == y);
            hits2 += usize::from(ranked[..2.min(kk)].contains(&y));
            // refinement sweeps the top k and keeps the strongest
            let mut best = 0.0f64;
            for &b in &ranked[..k.min(kk)] {
                best = best.max(sample_gain(self.d, r, self.narrow.vector(b))?);
            }
            gains.push(best);
        }
        let n_b = self.cfg.se.sweep_beams(m_tilde);
        let (mean_snr_db, mean_se, ia_exceeds_frame) = self.link_metrics(&gains, n_b)?;
        let (sweep_count, feedback_count) = overhead(m_tilde as u64, n_users, k as u64);
        Ok(BenchRow {
            method: selection.method.name().into(),
            m_tilde,
            trial,
            k,
            n_b,
            top1: hits1 as f64 / rows.len() as f64,
            top2: hits2 as f64 / rows.len() as f64,
            mean_snr_db,
            mean_se,
            sweep_count,
            feedback_count,
            select_seconds: selection.elapsed_seconds,
            select_with_training_seconds: with_training_seconds,
            requires_perfect_csi: false,
            ia_exceeds_frame,
            selected: selection
                .selected
                .iter()
                .map(|b| (b + 1).to_string())
                .collect::<Vec<_>>()
                .join(";"),
        })
    }

    /// Rows for every budget in `m_values` (and every random trial).
    /// Baselines without a sensing budget produce a single row.
    pub fn sweep(&self, method: BenchMethod, m_values: &[usize]) -> Result<Vec<BenchRow>> {
        if !method.uses_selection() {
            return Ok(vec![self.evaluate(method, 0, 0)?]);
        }
        let trials = if method == BenchMethod::Select(Method::Random) {
            self.cfg.random_trials.max(1)
        } else {
            1
        };
        // shared state first, so parallel budgets do not race to build it
        match method {
            BenchMethod::Select(Method::Causal) => {
                self.causal_graph()?;
            }
            BenchMethod::Select(Method::Shapley) => {
                self.shapley_ranking()?;
            }
            _ => {}
        }
        let jobs: Vec<(usize, usize)> = m_values
            .iter()
            .flat_map(|&m| (0..trials).map(move |t| (m, t)))
            .collect();
        jobs.par_iter()
            .map(|&(m, t)| self.evaluate(method, m, t))
            .collect()
    }

    /// Wall-clock of each selection method on the same data.
    pub fn time_selection(&self, methods: &[Method], m_tilde: usize) -> Result<Vec<SelectionTiming>> {
        methods
            .iter()
            .map(|&m| {
                let (s, with_training) = self.select(m, m_tilde, 0)?;
                Ok(SelectionTiming {
                    method: m.name().into(),
                    select_seconds: s.elapsed_seconds,
                    with_training_seconds: with_training,
                })
            })
            .collect()
    }
}

/// One method at one budget on a fresh context.
pub fn evaluate_method(d: &Dataset, method: BenchMethod, m_tilde: usize, cfg: &BenchConfig) -> Result<BenchRow> {
    BenchContext::new(d, cfg.clone())?.evaluate(method, m_tilde, 0)
}

/// One method over a grid of budgets.
pub fn sweep_m_tilde(d: &Dataset, method: BenchMethod, m_values: &[usize], cfg: &BenchConfig) -> Result<BenchReport> {
    let ctx = BenchContext::new(d, cfg.clone())?;
    Ok(BenchReport {
        rows: ctx.sweep(method, m_values)?,
        seed: cfg.seed,
        machine: machine_descriptor(),
    })
}

/// Every method over the grid, sharing one context.
pub fn run_bench(d: &Dataset, methods: &[BenchMethod], m_values: &[usize], cfg: &BenchConfig) -> Result<BenchReport> {
    let ctx = BenchContext::new(d, cfg.clone())?;
    let mut rows = Vec::new();
    for &m in methods {
        rows.extend(ctx.sweep(m, m_values)?);
    }
    Ok(BenchReport {
        rows,
        seed: cfg.seed,
        machine: machine_descriptor(),
    })
}

pub fn time_selection(d: &Dataset, methods: &[Method], m_tilde: usize, cfg: &BenchConfig) -> Result<Vec<SelectionTiming>> {
    BenchContext::new(d, cfg.clone())?.time_selection(methods, m_tilde)
}
