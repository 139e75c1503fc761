//! Effective spectral efficiency of the causal selector over every budget.
//!
//! Usage: `se_sweep [seed] [path_decay_db]`

use beamcausal::channel::dft_codebook;
use beamcausal::eval::{sweep_m_tilde, BenchConfig, BenchMethod};
use beamcausal::scene::{build_dataset, generate_scene, SceneConfig};
use beamcausal::select::Method;

fn main() -> beamcausal::Result<()> {
    let mut args = std::env::args().skip(1);
    let mut cfg = SceneConfig::default();
    if let Some(seed) = args.next() {
        cfg.seed = seed.parse().expect("seed");
    }
    if let Some(decay) = args.next() {
        cfg.path_decay_db = decay.parse().expect("path decay");
    }
    let scene = generate_scene(&cfg)?;
    let d = build_dataset(&scene, &dft_codebook(32, 1)?, &dft_codebook(32, 4)?, &cfg)?;
    let grid: Vec<usize> = (1..=32).collect();
    let bench = BenchConfig {
        seed: cfg.seed,
        ..BenchConfig::default()
    };
    let report = sweep_m_tilde(&d, BenchMethod::Select(Method::Causal), &grid, &bench)?;
    let se: Vec<f64> = report.rows.iter().map(|r| r.mean_se).collect();
    for r in &report.rows {
        println!(
            "{:>2} top1={:.3} top2={:.3} snr={:.2} se={:.4}",
            r.m_tilde, r.top1, r.top2, r.mean_snr_db, r.mean_se
        );
    }
    let smooth: Vec<f64> = se.windows(2).map(|w| (w[0] + w[1]) / 2.0).collect();
    let signs: Vec<f64> = smooth
        .windows(2)
        .map(|w| w[1] - w[0])
        .filter(|v| *v != 0.0)
        .map(f64::signum)
        .collect();
    let changes = signs.windows(2).filter(|w| w[0] != w[1]).count();
    println!("seed {} decay {} dB: smoothed sign changes {changes}", cfg.seed, cfg.path_decay_db);
    Ok(())
}
