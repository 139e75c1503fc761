use beamcausal::channel::{best_beam, dft_codebook, snr, synth_channel, Path, PathSet, C64};
use beamcausal::eval::overhead;
use beamcausal::lingam::CausalGraph;
use beamcausal::mlp::top_k;
use beamcausal::select::causal_select;
use ndarray::Array2;
use proptest::prelude::*;
use std::f64::consts::FRAC_PI_2;

fn channel_strategy(n: usize) -> impl Strategy<Value = Vec<C64>> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), n).prop_map(|v| v.into_iter().map(|(re, im)| C64::new(re, im)).collect())
}

fn paths_strategy() -> impl Strategy<Value = PathSet> {
    prop::collection::vec((-2.0f64..2.0, -2.0f64..2.0, -FRAC_PI_2..FRAC_PI_2), 1..4).prop_map(|v| {
        PathSet::new(
            v.into_iter()
                .map(|(re, im, aod)| Path {
                    gain: C64::new(re, im),
                    aod,
                })
                .collect(),
        )
        .unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn best_beam_ignores_positive_scaling(h in channel_strategy(16), c in 0.01f64..100.0, os in 1usize..5) {
        let cb = dft_codebook(16, os).unwrap();
        let scaled: Vec<C64> = h.iter().map(|v| v * c).collect();
        prop_assert_eq!(best_beam(&h, &cb).unwrap(), best_beam(&scaled, &cb).unwrap());
    }

    #[test]
    fn snr_ignores_global_phase(paths in paths_strategy(), theta in -3.2f64..3.2, beam in 0usize..32) {
        let h = synth_channel(&paths, 32).unwrap();
        let cb = dft_codebook(32, 1).unwrap();
        let rot = C64::from_polar(1.0, theta);
        let rotated: Vec<C64> = h.as_slice().iter().map(|v| v * rot).collect();
        let a = snr(h.as_slice(), cb.vector(beam), 1.0, 0.1).unwrap();
        let b = snr(&rotated, cb.vector(beam), 1.0, 0.1).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
    }

    #[test]
    fn best_beam_matches_brute_force(paths in paths_strategy()) {
        let h = synth_channel(&paths, 32).unwrap();
        let cb = dft_codebook(32, 4).unwrap();
        let gains: Vec<f64> = cb
            .vectors()
            .iter()
            .map(|w| {
                let s: C64 = w.iter().zip(h.as_slice()).map(|(w, h)| h.conj() * w).sum();
                s.norm_sqr()
            })
            .collect();
        let best = best_beam(h.as_slice(), &cb).unwrap();
        prop_assert!(gains.iter().all(|&g| g <= gains[best]));
        prop_assert!(gains[..best].iter().all(|&g| g < gains[best]));
    }

    #[test]
    fn top_k_is_prefix_of_top_k_plus_one(probs in prop::collection::vec(0.0f64..1.0, 2..40), k in 1usize..39) {
        let k = k.min(probs.len() - 1);
        let a = top_k(&probs, k);
        let b = top_k(&probs, k + 1);
        prop_assert_eq!(&a[..], &b[..k]);
        for w in b.windows(2) {
            prop_assert!(probs[w[0]] >= probs[w[1]]);
        }
    }

    #[test]
    fn causal_select_ignores_effect_scale(
        entries in prop::collection::vec(prop_oneof![Just(0.0), -2.0f64..2.0], 36),
        c in 0.01f64..50.0,
        m in 1usize..6,
    ) {
        // Strictly lower-triangular in a fixed order, so the graph is a DAG.
        let p = 6;
        let effects = Array2::from_shape_fn((p, p), |(i, j)| if j < i { entries[i * p + j] } else { 0.0 });
        let g = CausalGraph { order: (0..p).collect(), effects: effects.clone(), threshold: 0.0, target: Some(p - 1) };
        let scaled = CausalGraph { effects: effects * c, ..g.clone() };
        let a = causal_select(&g, p - 1, m).unwrap();
        let b = causal_select(&scaled, p - 1, m).unwrap();
        prop_assert_eq!(a.selected, b.selected);
        prop_assert_eq!(a.parents, b.parents);
    }

    #[test]
    fn overhead_closed_form(m in 1u64..=32, n_users in 1u64..5000, k in 1u64..=4) {
        let (sweep, feedback) = overhead(m, n_users, k);
        if k == 1 {
            prop_assert_eq!((sweep, feedback), (m, n_users * m));
        } else {
            prop_assert_eq!((sweep, feedback), (m + n_users * k, n_users * m + n_users));
        }
    }
}
