//! Sensing-beam selection: the causal selector and three baselines.

use std::fmt::{self, Write as _};
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::error::{invalid, parse_err, Result};
use crate::lingam::CausalGraph;
use crate::mlp::MlpModel;
use crate::scene::Dataset;
use crate::stream;
use crate::textio::{self, Cursor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Causal,
    Correlation,
    Shapley,
    Random,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Causal, Method::Correlation, Method::Shapley, Method::Random];

    pub fn name(self) -> &'static str {
        match self {
            Method::Causal => "causal",
            Method::Correlation => "correlation",
            Method::Shapley => "shapley",
            Method::Random => "random",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown selection method {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    pub method: Method,
    /// Sensing-beam indices in selection order.
    pub selected: Vec<usize>,
    /// Direct parents of the target, strongest first (causal method only).
    /// May contain beams trimmed from `selected` when parents exceed the budget.
    pub parents: Vec<usize>,
    pub elapsed_seconds: f64,
}

impl SelectionResult {
    pub fn m_tilde(&self) -> usize {
        self.selected.len()
    }
}

fn check_budget(m_w: usize, m_tilde: usize) -> Result<()> {
    if m_tilde == 0 || m_tilde > m_w {
        return Err(invalid(format!("m_tilde must be in 1..={m_w}, got {m_tilde}")));
    }
    Ok(())
}

/// `{ i : E[target, i] != 0 }`, ascending.
pub fn direct_parents(g: &CausalGraph, target: usize) -> Vec<usize> {
    if target >= g.p() {
        return Vec::new();
    }
    g.effects
        .row(target)
        .iter()
        .enumerate()
        .filter(|(_, &v)| v != 0.0)
        .map(|(i, _)| i)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Connectivity {
    pub incoming: usize,
    pub outgoing: usize,
    pub total: usize,
}

/// Nonzero-effect counts per node: incoming from row `i`, outgoing from column `i`.
pub fn connectivity(g: &CausalGraph) -> Vec<Connectivity> {
    let e = &g.effects;
    (0..g.p())
        .map(|i| {
            let incoming = e.row(i).iter().filter(|&&v| v != 0.0).count();
            let outgoing = e.column(i).iter().filter(|&&v| v != 0.0).count();
            Connectivity {
                incoming,
                outgoing,
                total: incoming + outgoing,
            }
        })
        .collect()
}

/// Causal beam selection.
///
/// Starts from the direct parents of `target`, ordered by `|E[target, i]|`
/// (descending, lower index on ties). If there are more parents than
/// `m_tilde` the weakest are trimmed; otherwise the remaining slots are filled
/// with non-target nodes by descending total connectivity, lower index first
/// on ties. Variable indices above `target` are shifted down by one to give
/// sensing-beam indices.
pub fn causal_select(g: &CausalGraph, target: usize, m_tilde: usize) -> Result<SelectionResult> {
    let start = Instant::now();
    let p = g.p();
    if target >= p {
        return Err(invalid(format!("target {target} out of range for {p} variables")));
    }
    check_budget(p - 1, m_tilde)?;
    let beam = |v: usize| if v > target { v - 1 } else { v };

    let strength = |i: usize| g.effects[[target, i]].abs();
    let mut parents = direct_parents(g, target);
    parents.sort_by(|&a, &b| strength(b).total_cmp(&strength(a)).then(a.cmp(&b)));

    let conn = connectivity(g);
    let mut ranked: Vec<usize> = (0..p).filter(|&i| i != target).collect();
    ranked.sort_by(|&a, &b| conn[b].total.cmp(&conn[a].total).then(a.cmp(&b)));

    let mut selected: Vec<usize> = parents.iter().copied().take(m_tilde).collect();
    for &v in &ranked {
        if selected.len() >= m_tilde {
            break;
        }
        if !selected.contains(&v) {
            selected.push(v);
        }
    }
    Ok(SelectionResult {
        method: Method::Causal,
        selected: selected.into_iter().map(beam).collect(),
        parents: parents.into_iter().map(beam).collect(),
        elapsed_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Pearson correlation; zero when either input is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa <= 0.0 || sbb <= 0.0 {
        0.0
    } else {
        sab / (saa * sbb).sqrt()
    }
}

/// Top `m_tilde` features by `|corr(x_i, y)|` with the label as a real number.
pub fn correlation_select(d: &Dataset, rows: &[usize], m_tilde: usize) -> Result<SelectionResult> {
    let start = Instant::now();
    check_budget(d.m_w, m_tilde)?;
    if rows.len() < 2 {
        return Err(invalid("correlation ranking needs at least two rows"));
    }
    let y: Vec<f64> = rows.iter().map(|&r| d.samples[r].y as f64).collect();
    let scores: Vec<f64> = (0..d.m_w)
        .map(|i| {
            let x: Vec<f64> = rows.iter().map(|&r| d.samples[r].x[i]).collect();
            pearson(&x, &y).abs()
        })
        .collect();
    let mut idx: Vec<usize> = (0..d.m_w).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(m_tilde);
    Ok(SelectionResult {
        method: Method::Correlation,
        selected: idx,
        parents: Vec::new(),
        elapsed_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Anything that scores a batch of rows against their labels; the Shapley
/// value function is this score.
pub trait ValueFunction: Sync {
    fn n_inputs(&self) -> usize;
    /// One value per row of `x`.
    fn values(&self, x: ArrayView2<f64>, labels: &[usize]) -> Result<Vec<f64>>;
}

/// Probability the model assigns to the labelled class.
impl ValueFunction for MlpModel {
    fn n_inputs(&self) -> usize {
        self.input_dim()
    }

    fn values(&self, x: ArrayView2<f64>, labels: &[usize]) -> Result<Vec<f64>> {
        let p = self.predict_proba(x)?;
        Ok(labels.iter().enumerate().map(|(r, &y)| p[[r, y]]).collect())
    }
}

/// Monte-Carlo permutation Shapley values, one row per explained sample.
///
/// For each sampled feature permutation, features are switched from the
/// background value to the sample's value in permutation order and the change
/// in the value function is credited to the feature just switched. Every
/// permutation draws from its own seeded stream and the per-permutation
/// results are summed in permutation order.
pub fn shapley_values<F: ValueFunction>(
    f: &F,
    x: ArrayView2<f64>,
    labels: &[usize],
    background: &[f64],
    n_perms: usize,
    seed: u64,
) -> Result<Array2<f64>> {
    let (n, m) = x.dim();
    if m != f.n_inputs() || background.len() != m {
        return Err(invalid("feature dimension mismatch"));
    }
    if n_perms == 0 || n == 0 || labels.len() != n {
        return Err(invalid("need at least one permutation and one labelled sample"));
    }
    let per_perm = |k: usize| -> Result<Array2<f64>> {
        let mut perm: Vec<usize> = (0..m).collect();
        perm.shuffle(&mut stream::rng_indexed(seed, "shapley", k as u64));
        let mut cur = Array2::from_shape_fn((n, m), |(_, c)| background[c]);
        let mut prev = f.values(cur.view(), labels)?;
        let mut phi = Array2::zeros((n, m));
        for &feat in &perm {
            cur.column_mut(feat).assign(&x.column(feat));
            let now = f.values(cur.view(), labels)?;
            for r in 0..n {
                phi[[r, feat]] = now[r] - prev[r];
            }
            prev = now;
        }
        Ok(phi)
    };
    let mut total = Array2::zeros((n, m));
    const CHUNK: usize = 16;
    for chunk_start in (0..n_perms).step_by(CHUNK) {
        let end = (chunk_start + CHUNK).min(n_perms);
        let parts = (chunk_start..end)
            .into_par_iter()
            .map(per_perm)
            .collect::<Result<Vec<_>>>()?;
        for part in parts {
            total += &part;
        }
    }
    Ok(total / n_perms as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShapleyConfig {
    pub n_perms: usize,
    /// Cap on explained rows (taken from the front of the given rows).
    pub max_explain: usize,
    pub seed: u64,
}

impl Default for ShapleyConfig {
    fn default() -> Self {
        ShapleyConfig {
            n_perms: 256,
            max_explain: 1000,
            seed: 0,
        }
    }
}

/// Mean absolute Shapley value per feature of a trained full-input model.
/// The background is the feature mean over `background_rows`.
pub fn shapley_importance(
    model: &MlpModel,
    d: &Dataset,
    background_rows: &[usize],
    explain_rows: &[usize],
    cfg: &ShapleyConfig,
) -> Result<Vec<f64>> {
    if !model.is_trained() {
        return Err(invalid("Shapley ranking needs a trained model"));
    }
    if model.input_dim() != d.m_w {
        return Err(invalid("Shapley ranking needs a model over all sensing beams"));
    }
    if background_rows.is_empty() || explain_rows.is_empty() {
        return Err(invalid("background and explained rows must be non-empty"));
    }
    let all: Vec<usize> = (0..d.m_w).collect();
    let background = d
        .features(background_rows, &all)
        .mean_axis(Axis(0))
        .expect("non-empty")
        .to_vec();
    let rows = &explain_rows[..explain_rows.len().min(cfg.max_explain.max(1))];
    let x = d.features(rows, &all);
    let phi = shapley_values(model, x.view(), &d.labels(rows), &background, cfg.n_perms, cfg.seed)?;
    Ok(phi.mapv(f64::abs).mean_axis(Axis(0)).expect("non-empty").to_vec())
}

/// Top `m_tilde` features of an importance vector, ties to the lower index.
pub fn rank_top(importance: &[f64], m_tilde: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..importance.len()).collect();
    idx.sort_by(|&a, &b| importance[b].total_cmp(&importance[a]).then(a.cmp(&b)));
    idx.truncate(m_tilde);
    idx
}

pub fn shapley_select(
    model: &MlpModel,
    d: &Dataset,
    background_rows: &[usize],
    explain_rows: &[usize],
    m_tilde: usize,
    cfg: &ShapleyConfig,
) -> Result<SelectionResult> {
    let start = Instant::now();
    check_budget(d.m_w, m_tilde)?;
    let importance = shapley_importance(model, d, background_rows, explain_rows, cfg)?;
    Ok(SelectionResult {
        method: Method::Shapley,
        selected: rank_top(&importance, m_tilde),
        parents: Vec::new(),
        elapsed_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Uniform subset without replacement, in draw order.
pub fn random_select(m_w: usize, m_tilde: usize, seed: u64) -> Result<SelectionResult> {
    let start = Instant::now();
    check_budget(m_w, m_tilde)?;
    let mut rng = stream::rng(seed, "random-select");
    let selected = rand::seq::index::sample(&mut rng, m_w, m_tilde).into_vec();
    Ok(SelectionResult {
        method: Method::Random,
        selected,
        parents: Vec::new(),
        elapsed_seconds: start.elapsed().as_secs_f64(),
    })
}

const SELECTION_KIND: &str = "selection";
const SELECTION_VERSION: u32 = 1;

pub fn selection_to_string(s: &SelectionResult) -> String {
    let mut out = textio::header(SELECTION_KIND, SELECTION_VERSION);
    let _ = writeln!(out, "method = {}", s.method);
    let _ = writeln!(out, "m_tilde = {}", s.m_tilde());
    let _ = writeln!(out, "selected = {}", textio::join(&s.selected));
    let _ = writeln!(out, "parents = {}", textio::join(&s.parents));
    let _ = writeln!(out, "elapsed_seconds = {}", s.elapsed_seconds);
    out
}

pub fn selection_from_str(text: &str) -> Result<SelectionResult> {
    let mut cur = Cursor::new(text);
    cur.expect_header(SELECTION_KIND, SELECTION_VERSION)?;
    let (no, m) = cur.expect_kv("method")?;
    let method: Method = m.parse().map_err(|e: String| parse_err(no, e))?;
    let m_tilde: usize = cur.parse_kv("m_tilde")?;
    let (no, s) = cur.expect_kv("selected")?;
    let selected: Vec<usize> = textio::parse_list(no, s, "beam index")?;
    if selected.len() != m_tilde {
        return Err(parse_err(no, format!("{} indices listed for m_tilde = {m_tilde}", selected.len())));
    }
    let mut sorted = selected.clone();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != selected.len() {
        return Err(parse_err(no, "duplicate beam index"));
    }
    let (no, p) = cur.expect_kv("parents")?;
    let parents = textio::parse_list(no, p, "beam index")?;
    let elapsed_seconds: f64 = cur.parse_kv("elapsed_seconds")?;
    Ok(SelectionResult {
        method,
        selected,
        parents,
        elapsed_seconds,
    })
}

pub fn save_selection(s: &SelectionResult, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, selection_to_string(s))?;
    Ok(())
}

pub fn load_selection(path: impl AsRef<Path>) -> Result<SelectionResult> {
    selection_from_str(&fs::read_to_string(path)?)
}
