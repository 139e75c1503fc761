#![allow(dead_code)]

use beamcausal::scene::{Dataset, Sample, Splits};

/// Channel-free dataset over the given feature rows and labels.
pub fn dataset(x: Vec<Vec<f64>>, y: Vec<usize>, y_classes: usize) -> Dataset {
    let m_w = x.first().map_or(0, Vec::len);
    let n = x.len();
    let samples = x
        .into_iter()
        .zip(y)
        .enumerate()
        .map(|(ue, (x, y))| Sample {
            x,
            y,
            ue,
            opt_gain: 1.0,
            channel: None,
        })
        .collect();
    Dataset {
        samples,
        splits: Splits::draw(n, 0),
        m_w,
        y_classes,
        n_bs: 0,
        seed: 0,
        normalization: 1.0,
        noise_power: 0.0,
        sensing_snr_db: f64::INFINITY,
    }
}
