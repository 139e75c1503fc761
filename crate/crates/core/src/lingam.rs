//! DirectLiNGAM: causal ordering by residual independence, then least-squares
//! effect estimation along the ordering.
//!
//! The model is `z = E z + e` with mutually independent non-Gaussian
//! disturbances. `E[i, j] != 0` means an edge `j -> i`. Permuting rows and
//! columns of `E` by the recovered ordering gives a strictly lower-triangular
//! matrix.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use log::warn;
use ndarray::{Array2, ArrayView2, Axis};
use rayon::prelude::*;

use crate::error::{invalid, parse_err, Error, Result};
use crate::textio::{self, Cursor};

/// Relative residual variance below which a column counts as a linear
/// combination of earlier ones.
const COLLINEAR_TOL: f64 = 1e-12;
/// Relative Cholesky pivot below which the Gram matrix gets diagonal jitter.
const JITTER_TOL: f64 = 1e-9;
const JITTER: f64 = 1e-9;

/// Unit-variance nonlinear views of one standardized variable.
struct Contrasts {
    z: Vec<f64>,
    odd: Vec<f64>,
    even: Vec<f64>,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Zero mean, unit variance; `None` for (numerically) constant input.
fn standardize(v: &[f64]) -> Option<Vec<f64>> {
    let m = mean(v);
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64;
    let scale = m.abs().max(1.0);
    if !(var > (1e-14 * scale) * (1e-14 * scale)) || !var.is_finite() {
        return None;
    }
    let sd = var.sqrt();
    Some(v.iter().map(|x| (x - m) / sd).collect())
}

/// Centers and scales in place; constant vectors become all zeros.
fn whiten(mut v: Vec<f64>) -> Vec<f64> {
    let m = mean(&v);
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64;
    let inv = if var > 0.0 { 1.0 / var.sqrt() } else { 0.0 };
    for x in &mut v {
        *x = (*x - m) * inv;
    }
    v
}

fn log_cosh(t: f64) -> f64 {
    let a = t.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

impl Contrasts {
    fn from_standardized(z: Vec<f64>) -> Self {
        let odd = whiten(z.iter().map(|&t| t * (-0.5 * t * t).exp()).collect());
        let even = whiten(z.iter().map(|&t| log_cosh(t)).collect());
        Contrasts { z, odd, even }
    }
}

fn dot_mean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / a.len() as f64
}

/// Sum of squared nonlinear correlations: odd-vs-linear both ways plus
/// log-cosh against log-cosh.
fn contrast_score(a: &Contrasts, b: &Contrasts) -> f64 {
    let c1 = dot_mean(&a.odd, &b.z);
    let c2 = dot_mean(&a.z, &b.odd);
    let c3 = dot_mean(&a.even, &b.even);
    c1 * c1 + c2 * c2 + c3 * c3
}

/// Pairwise dependence proxy built from the negentropy contrast functions
/// `t exp(-t^2/2)` (odd) and `log cosh t` (even), applied to standardized
/// inputs. Zero for independent inputs up to sampling noise of order `1/n`.
pub fn independence_score(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() || u.len() < 2 {
        return Err(invalid("independence_score needs two vectors of equal length >= 2"));
    }
    let zu = standardize(u).ok_or_else(|| invalid("first input is constant"))?;
    let zv = standardize(v).ok_or_else(|| invalid("second input is constant"))?;
    Ok(contrast_score(
        &Contrasts::from_standardized(zu),
        &Contrasts::from_standardized(zv),
    ))
}

fn columns(x: ArrayView2<f64>) -> Vec<Vec<f64>> {
    x.axis_iter(Axis(1)).map(|c| c.to_vec()).collect()
}

fn variance(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64
}

fn covariance(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / a.len() as f64
}

/// `x_i - (cov(x_i, x_j) / var(x_j)) x_j`.
fn residual(xi: &[f64], xj: &[f64]) -> Vec<f64> {
    let b = covariance(xi, xj) / variance(xj);
    xi.iter().zip(xj).map(|(a, c)| a - b * c).collect()
}

/// Causal ordering, exogenous variables first.
///
/// `target`, when given, is withheld from candidacy until it is the only
/// variable left, so it never gets outgoing edges.
pub fn causal_order(x: ArrayView2<f64>, target: Option<usize>) -> Result<Vec<usize>> {
    let (n, p) = x.dim();
    if p == 0 {
        return Err(invalid("data has no columns"));
    }
    if n <= p {
        return Err(invalid(format!("need more rows than columns, got {n} x {p}")));
    }
    if let Some(t) = target {
        if t >= p {
            return Err(invalid(format!("target {t} out of range for {p} columns")));
        }
    }
    let mut cols = columns(x);
    let base_var: Vec<f64> = cols.iter().map(|c| variance(c)).collect();
    for (j, v) in base_var.iter().enumerate() {
        if !(*v > 0.0) || !v.is_finite() {
            return Err(invalid(format!("column {j} is constant or non-finite")));
        }
    }

    let mut remaining: Vec<usize> = (0..p).collect();
    let mut order = Vec::with_capacity(p);
    while !remaining.is_empty() {
        for &i in &remaining {
            if variance(&cols[i]) <= COLLINEAR_TOL * base_var[i] {
                return Err(Error::Numerical(format!(
                    "column {i} is a linear combination of columns {order:?} (rank-deficient data)"
                )));
            }
        }
        let candidates: Vec<usize> = remaining
            .iter()
            .copied()
            .filter(|&j| Some(j) != target || remaining.len() == 1)
            .collect();
        let picked = if candidates.len() == 1 {
            candidates[0]
        } else {
            let scores: Vec<f64> = candidates
                .par_iter()
                .map(|&j| candidate_score(&cols, &remaining, j))
                .collect();
            let mut best = 0;
            for k in 1..scores.len() {
                if scores[k] < scores[best] {
                    best = k;
                }
            }
            candidates[best]
        };
        order.push(picked);
        remaining.retain(|&i| i != picked);
        let xj = cols[picked].clone();
        for &i in &remaining {
            cols[i] = residual(&cols[i], &xj);
        }
    }
    Ok(order)
}

/// Summed dependence between candidate `j` and the residuals of every other
/// remaining variable regressed on it.
fn candidate_score(cols: &[Vec<f64>], remaining: &[usize], j: usize) -> f64 {
    let zj = match standardize(&cols[j]) {
        Some(z) => Contrasts::from_standardized(z),
        None => return f64::INFINITY,
    };
    remaining
        .iter()
        .filter(|&&i| i != j)
        .map(|&i| match standardize(&residual(&cols[i], &cols[j])) {
            Some(r) => contrast_score(&zj, &Contrasts::from_standardized(r)),
            // residual vanished: i is an exact multiple of j, no evidence either way
            None => 0.0,
        })
        .sum()
}

fn covariance_matrix(x: ArrayView2<f64>) -> Array2<f64> {
    let n = x.nrows() as f64;
    let means = x.mean_axis(Axis(0)).expect("non-empty");
    let centered = &x - &means;
    centered.t().dot(&centered) / n
}

/// Solves `g a = rhs` by Cholesky. Returns the solution and whether jitter was
/// needed; errors when a column is a linear combination of earlier ones.
fn cholesky_solve(g: &Array2<f64>, rhs: &[f64], names: &[usize]) -> Result<(Vec<f64>, bool)> {
    let k = rhs.len();
    let mut jittered = false;
    let mut l = Array2::<f64>::zeros((k, k));
    for c in 0..k {
        for r in c..k {
            let mut s = g[[r, c]];
            for t in 0..c {
                s -= l[[r, t]] * l[[c, t]];
            }
            if r == c {
                let diag = g[[c, c]];
                if s <= COLLINEAR_TOL * diag {
                    return Err(Error::Numerical(format!(
                        "singular Gram matrix: column {} is collinear with {:?}",
                        names[c],
                        &names[..c]
                    )));
                }
                if s <= JITTER_TOL * diag {
                    s += JITTER * diag;
                    jittered = true;
                }
                l[[c, c]] = s.sqrt();
            } else {
                l[[r, c]] = s / l[[c, c]];
            }
        }
    }
    let mut y = vec![0.0; k];
    for r in 0..k {
        let mut s = rhs[r];
        for t in 0..r {
            s -= l[[r, t]] * y[t];
        }
        y[r] = s / l[[r, r]];
    }
    let mut a = vec![0.0; k];
    for r in (0..k).rev() {
        let mut s = y[r];
        for t in r + 1..k {
            s -= l[[t, r]] * a[t];
        }
        a[r] = s / l[[r, r]];
    }
    Ok((a, jittered))
}

fn check_permutation(order: &[usize], p: usize) -> Result<()> {
    let mut seen = vec![false; p];
    if order.len() != p {
        return Err(invalid(format!("order has {} entries for {p} variables", order.len())));
    }
    for &o in order {
        if o >= p || seen[o] {
            return Err(invalid(format!("order is not a permutation of 0..{p}")));
        }
        seen[o] = true;
    }
    Ok(())
}

/// Least-squares regression of each variable on all of its predecessors in
/// `order`. Coefficients whose standardized magnitude
/// `|b| * sd(cause) / sd(effect)` is at most `threshold` are set to zero.
pub fn estimate_effects(x: ArrayView2<f64>, order: &[usize], threshold: f64) -> Result<Array2<f64>> {
    let p = x.ncols();
    check_permutation(order, p)?;
    if threshold.is_nan() || threshold < 0.0 {
        return Err(invalid("threshold must be >= 0"));
    }
    let cov = covariance_matrix(x);
    let mut effects = Array2::zeros((p, p));
    for k in 1..p {
        let t = order[k];
        let preds = &order[..k];
        let g = Array2::from_shape_fn((k, k), |(a, b)| cov[[preds[a], preds[b]]]);
        let rhs: Vec<f64> = preds.iter().map(|&j| cov[[j, t]]).collect();
        let (coef, jittered) = cholesky_solve(&g, &rhs, preds)?;
        if jittered {
            warn!("near-singular Gram matrix for variable {t}; added diagonal jitter");
        }
        let sd_t = cov[[t, t]].sqrt();
        for (&j, &b) in preds.iter().zip(&coef) {
            let standardized = b * cov[[j, j]].sqrt() / sd_t;
            if standardized.abs() > threshold {
                effects[[t, j]] = b;
            }
        }
    }
    Ok(effects)
}

/// Ordering plus effect matrix over `p` variables.
#[derive(Debug, Clone, PartialEq)]
pub struct CausalGraph {
    pub order: Vec<usize>,
    /// `effects[[i, j]]` is the direct effect of variable `j` on variable `i`.
    pub effects: Array2<f64>,
    pub threshold: f64,
    pub target: Option<usize>,
}

impl CausalGraph {
    pub fn p(&self) -> usize {
        self.order.len()
    }

    /// Acyclicity under `order` and, with a target, no edges out of it.
    pub fn check_invariants(&self) -> Result<()> {
        let p = self.p();
        check_permutation(&self.order, p)?;
        if self.effects.dim() != (p, p) {
            return Err(invalid("effect matrix shape does not match the ordering"));
        }
        let mut pos = vec![0; p];
        for (k, &v) in self.order.iter().enumerate() {
            pos[v] = k;
        }
        for i in 0..p {
            for j in 0..p {
                if self.effects[[i, j]] != 0.0 && pos[j] >= pos[i] {
                    return Err(invalid(format!("edge {j} -> {i} contradicts the ordering")));
                }
            }
        }
        if let Some(t) = self.target {
            if t >= p {
                return Err(invalid("target out of range"));
            }
            if self.effects.column(t).iter().any(|&v| v != 0.0) {
                return Err(invalid("target variable has outgoing edges"));
            }
        }
        Ok(())
    }
}

/// Ordering then effect estimation; the target column is forced to zero.
pub fn discover(x: ArrayView2<f64>, target: usize, threshold: f64) -> Result<CausalGraph> {
    if target >= x.ncols() {
        return Err(invalid(format!("target {target} out of range")));
    }
    let order = causal_order(x, Some(target))?;
    let mut effects = estimate_effects(x, &order, threshold)?;
    effects.column_mut(target).fill(0.0);
    let g = CausalGraph {
        order,
        effects,
        threshold,
        target: Some(target),
    };
    g.check_invariants()?;
    Ok(g)
}

const GRAPH_KIND: &str = "graph";
const GRAPH_VERSION: u32 = 1;

pub fn graph_to_string(g: &CausalGraph) -> String {
    let mut out = textio::header(GRAPH_KIND, GRAPH_VERSION);
    let _ = writeln!(out, "p = {}", g.p());
    let target = g.target.map(|t| t.to_string()).unwrap_or_else(|| "none".into());
    let _ = writeln!(out, "target = {target}");
    let _ = writeln!(out, "threshold = {}", g.threshold);
    let _ = writeln!(out, "order = {}", textio::join(&g.order));
    out.push_str("---\n");
    for row in g.effects.rows() {
        let _ = writeln!(out, "{}", textio::join(&row.to_vec()));
    }
    out
}

pub fn graph_from_str(text: &str) -> Result<CausalGraph> {
    let mut cur = Cursor::new(text);
    cur.expect_header(GRAPH_KIND, GRAPH_VERSION)?;
    let p: usize = cur.parse_kv("p")?;
    let (no, t) = cur.expect_kv("target")?;
    let target = if t == "none" {
        None
    } else {
        Some(textio::parse_value(no, t, "target")?)
    };
    let threshold: f64 = cur.parse_kv("threshold")?;
    let (no, o) = cur.expect_kv("order")?;
    let order: Vec<usize> = textio::parse_list(no, o, "order entry")?;
    let (no, sep) = cur.expect_line("`---` separator")?;
    if sep.trim() != "---" {
        return Err(parse_err(no, "expected `---` separator"));
    }
    let mut effects = Array2::zeros((p, p));
    for i in 0..p {
        let (no, line) = cur.expect_line(&format!("effect row {i}"))?;
        let row: Vec<f64> = textio::parse_list(no, line, "effect")?;
        if row.len() != p {
            return Err(parse_err(no, format!("effect row {i} has {} values, expected {p}", row.len())));
        }
        for (j, v) in row.into_iter().enumerate() {
            effects[[i, j]] = v;
        }
    }
    let g = CausalGraph {
        order,
        effects,
        threshold,
        target,
    };
    g.check_invariants()
        .map_err(|e| parse_err(cur.line_no(), format!("graph fails invariants: {e}")))?;
    Ok(g)
}

pub fn save_graph(g: &CausalGraph, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, graph_to_string(g))?;
    Ok(())
}

pub fn load_graph(path: impl AsRef<Path>) -> Result<CausalGraph> {
    graph_from_str(&fs::read_to_string(path)?)
}
