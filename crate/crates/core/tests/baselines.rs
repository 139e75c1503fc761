mod common;

use approx::assert_abs_diff_eq;
use beamcausal::select::{correlation_select, random_select, shapley_values, ValueFunction};
use beamcausal::Result;
use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Linear(Vec<f64>);

impl ValueFunction for Linear {
    fn n_inputs(&self) -> usize {
        self.0.len()
    }

    fn values(&self, x: ArrayView2<f64>, _labels: &[usize]) -> Result<Vec<f64>> {
        Ok(x.rows().into_iter().map(|r| r.iter().zip(&self.0).map(|(a, w)| a * w).sum()).collect())
    }
}

/// `f(x) = x0 * x1`: the interaction term is split by permutation order, so
/// the estimate has sampling noise.
struct Product;

impl ValueFunction for Product {
    fn n_inputs(&self) -> usize {
        3
    }

    fn values(&self, x: ArrayView2<f64>, _labels: &[usize]) -> Result<Vec<f64>> {
        Ok(x.rows().into_iter().map(|r| r[0] * r[1] + r[2]).collect())
    }
}

#[test]
fn linear_model_shapley_is_exact() {
    let w = vec![1.5, -2.0, 0.0, 0.25];
    let background = vec![0.1, 0.2, -0.3, 1.0];
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = Array2::from_shape_simple_fn((20, 4), || rng.random_range(-1.0..1.0));
    let labels = vec![0; 20];
    for n_perms in [1, 7, 64] {
        let phi = shapley_values(&Linear(w.clone()), x.view(), &labels, &background, n_perms, 3).unwrap();
        for r in 0..20 {
            for i in 0..4 {
                assert_abs_diff_eq!(phi[[r, i]], w[i] * (x[[r, i]] - background[i]), epsilon = 1e-12);
            }
        }
    }
}

#[test]
fn shapley_values_sum_to_value_difference() {
    let x = Array2::from_shape_vec((2, 3), vec![1.0, 2.0, 3.0, -1.0, 0.5, 0.0]).unwrap();
    let background = [0.0; 3];
    let phi = shapley_values(&Product, x.view(), &[0, 0], &background, 5, 0).unwrap();
    for r in 0..2 {
        let total: f64 = phi.row(r).sum();
        let expected = x[[r, 0]] * x[[r, 1]] + x[[r, 2]];
        assert_abs_diff_eq!(total, expected, epsilon = 1e-12);
    }
}

#[test]
fn shapley_standard_error_shrinks_with_more_permutations() {
    // With background 0, phi_0 is x0*x1 when 0 comes after 1 and 0 otherwise:
    // a Bernoulli(1/2) estimate of x0*x1/2 with per-permutation sd x0*x1/2.
    let x = Array2::from_shape_vec((1, 3), vec![2.0, 3.0, 0.0]).unwrap();
    let background = [0.0; 3];
    let spread = |n_perms: usize| {
        let est: Vec<f64> = (0..400)
            .map(|s| shapley_values(&Product, x.view(), &[0], &background, n_perms, s).unwrap()[[0, 0]])
            .collect();
        let mean = est.iter().sum::<f64>() / est.len() as f64;
        let var = est.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / (est.len() - 1) as f64;
        (mean, var.sqrt())
    };
    let (m1, s1) = spread(16);
    let (m2, s2) = spread(32);
    assert_abs_diff_eq!(m1, 3.0, epsilon = 0.15);
    assert_abs_diff_eq!(m2, 3.0, epsilon = 0.15);
    assert_abs_diff_eq!(s1, 3.0 / 16f64.sqrt(), epsilon = 0.1);
    let ratio = s1 / s2;
    assert!((ratio - 2f64.sqrt()).abs() < 0.2, "ratio {ratio}");
}

fn correlated_dataset() -> beamcausal::scene::Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let n = 500;
    let mut x = Vec::new();
    let mut y = Vec::new();
    for _ in 0..n {
        let label = rng.random_range(0..8usize);
        let yf = label as f64;
        let noise: f64 = rng.random_range(-1.0..1.0);
        let weak = 0.6 * yf + rng.random_range(-6.0..6.0);
        x.push(vec![noise, weak, yf, -2.0 * yf + 1.0]);
        y.push(label);
    }
    common::dataset(x, y, 8)
}

#[test]
fn correlation_ranks_label_copies_first() {
    let d = correlated_dataset();
    let rows: Vec<usize> = (0..d.len()).collect();
    let s = correlation_select(&d, &rows, 2).unwrap();
    // Features 2 and 3 both have |rho| = 1; ties go to the lower index.
    assert_eq!(s.selected, vec![2, 3]);
    let s = correlation_select(&d, &rows, 3).unwrap();
    assert_eq!(s.selected[2], 1);
}

#[test]
fn correlation_full_budget_returns_every_feature() {
    let d = correlated_dataset();
    let rows: Vec<usize> = (0..d.len()).collect();
    let mut s = correlation_select(&d, &rows, 4).unwrap().selected;
    s.sort_unstable();
    assert_eq!(s, vec![0, 1, 2, 3]);
    assert!(correlation_select(&d, &rows, 5).is_err());
    assert!(correlation_select(&d, &rows, 0).is_err());
}

#[test]
fn random_selection_is_uniform() {
    let (m_w, m_tilde, draws) = (32usize, 1usize, 10_000usize);
    let mut counts = vec![0usize; m_w];
    for seed in 0..draws as u64 {
        let s = random_select(m_w, m_tilde, seed).unwrap();
        counts[s.selected[0]] += 1;
    }
    let p = 1.0 / m_w as f64;
    let mean = draws as f64 * p;
    let sd = (draws as f64 * p * (1.0 - p)).sqrt();
    for (i, &c) in counts.iter().enumerate() {
        assert!((c as f64 - mean).abs() <= 4.0 * sd, "beam {i} drawn {c} times");
    }
}

#[test]
fn random_selection_has_distinct_entries() {
    for seed in 0..50 {
        let s = random_select(32, 13, seed).unwrap().selected;
        let mut sorted = s.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), 13);
        assert!(s.iter().all(|&i| i < 32));
        assert_eq!(random_select(32, 13, seed).unwrap().selected, s);
    }
}
