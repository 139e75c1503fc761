//! DirectLiNGAM against synthetic linear non-Gaussian SEMs with known truth.

use beamcausal::lingam::{causal_order, discover, estimate_effects};
use beamcausal::stream;
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;

/// Dense strictly lower-triangular SEM over a random relabelling of the
/// variables. Returns the data and `b[[i, j]]` = effect of `j` on `i`.
fn sem(p: usize, n: usize, seed: u64) -> (Array2<f64>, Array2<f64>) {
    let mut rng = stream::rng(seed, "sem");
    let mut labels: Vec<usize> = (0..p).collect();
    labels.shuffle(&mut rng);
    let mut b = Array2::zeros((p, p));
    for i in 1..p {
        for j in 0..i {
            b[[labels[i], labels[j]]] = rng.random_range(0.3..0.9);
        }
    }
    let mut x = Array2::zeros((n, p));
    for r in 0..n {
        for &v in &labels {
            let mut s = rng.random::<f64>() - 0.5;
            for c in 0..p {
                s += b[[v, c]] * x[[r, c]];
            }
            x[[r, v]] = s;
        }
    }
    (x, b)
}

fn consistent(order: &[usize], b: &Array2<f64>) -> bool {
    let p = order.len();
    let mut pos = vec![0; p];
    for (k, &v) in order.iter().enumerate() {
        pos[v] = k;
    }
    (0..p).all(|i| (0..p).all(|j| b[[i, j]] == 0.0 || pos[j] < pos[i]))
}

#[test]
fn six_variable_orders_are_recovered() {
    let mut ok = 0;
    for trial in 0..20 {
        let (x, b) = sem(6, 20_000, 100 + trial);
        let order = causal_order(x.view(), None).unwrap();
        if consistent(&order, &b) {
            ok += 1;
        }
    }
    eprintln!("{ok}/20 orderings consistent");
    assert!(ok >= 19, "{ok}/20 orderings consistent");
}

#[test]
fn six_variable_effects_within_tolerance() {
    let (x, b) = sem(6, 20_000, 100);
    let order = causal_order(x.view(), None).unwrap();
    let e = estimate_effects(x.view(), &order, 0.0).unwrap();
    let err = (&e - &b).iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(err <= 0.05, "max abs error {err}");
}

#[test]
fn target_column_is_zeroed_and_last() {
    let (x, _) = sem(6, 5_000, 3);
    let g = discover(x.view(), 5, 0.05).unwrap();
    assert_eq!(*g.order.last().unwrap(), 5);
    assert!(g.effects.column(5).iter().all(|&v| v == 0.0));
    g.check_invariants().unwrap();
}

#[test]
fn column_shuffle_relabels_the_dag() {
    let (x, _) = sem(5, 10_000, 8);
    let g = discover(x.view(), 4, 0.05).unwrap();
    let perm = [3usize, 0, 4, 1, 2];
    let shuffled = Array2::from_shape_fn(x.dim(), |(r, c)| x[[r, perm[c]]]);
    let new_target = perm.iter().position(|&c| c == 4).unwrap();
    let h = discover(shuffled.view(), new_target, 0.05).unwrap();
    let mapped: Vec<usize> = h.order.iter().map(|&c| perm[c]).collect();
    assert_eq!(mapped, g.order);
    for i in 0..5 {
        for j in 0..5 {
            let a = g.effects[[perm[i], perm[j]]];
            let b = h.effects[[i, j]];
            assert!((a - b).abs() < 1e-9, "E[{i},{j}]");
        }
    }
}

#[test]
fn positive_column_scaling() {
    let (x, _) = sem(4, 10_000, 21);
    let order = causal_order(x.view(), None).unwrap();
    let c = 7.5;
    let mut scaled = x.clone();
    scaled.column_mut(2).mapv_inplace(|v| v * c);
    assert_eq!(causal_order(scaled.view(), None).unwrap(), order);
    let e = estimate_effects(x.view(), &order, 0.0).unwrap();
    let es = estimate_effects(scaled.view(), &order, 0.0).unwrap();
    for k in 0..4 {
        if k != 2 {
            assert!((es[[k, 2]] - e[[k, 2]] / c).abs() < 1e-9);
            assert!((es[[2, k]] - e[[2, k]] * c).abs() < 1e-9);
        }
    }
}
