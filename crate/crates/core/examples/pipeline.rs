//! End-to-end run on the standard synthetic scene: causal selection at 13
//! beams against the full 32-beam model and a random subset.

use std::time::Instant;

use beamcausal::channel::dft_codebook;
use beamcausal::eval::{BenchConfig, BenchContext, BenchMethod};
use beamcausal::scene::{build_dataset, generate_scene, SceneConfig};
use beamcausal::select::Method;

fn main() -> beamcausal::Result<()> {
    let cfg = SceneConfig::default();
    let t = Instant::now();
    let scene = generate_scene(&cfg)?;
    let d = build_dataset(&scene, &dft_codebook(32, 1)?, &dft_codebook(32, 4)?, &cfg)?;
    println!("dataset: {} samples in {:.2?}", d.len(), t.elapsed());

    let ctx = BenchContext::new(&d, BenchConfig::default())?;
    let t = Instant::now();
    let (g, secs) = ctx.causal_graph()?;
    println!("discover: {secs:.2} s, order {:?}", g.order);
    let methods = [
        (BenchMethod::Select(Method::Causal), 13),
        (BenchMethod::Select(Method::Causal), 32),
        (BenchMethod::Select(Method::Random), 13),
        (BenchMethod::Exhaustive, 0),
    ];
    for (m, k) in methods {
        let t = Instant::now();
        let row = ctx.evaluate(m, k, 0)?;
        println!(
            "{:<12} m={:<3} top1={:.3} top2={:.3} snr={:.1} dB se={:.3} selected={} ({:.1?})",
            row.method, row.m_tilde, row.top1, row.top2, row.mean_snr_db, row.mean_se, row.selected, t.elapsed()
        );
    }
    println!("total {:.1?}", t.elapsed());
    Ok(())
}
