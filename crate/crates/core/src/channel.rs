//! Beamforming math for a half-wavelength ULA.
//!
//! Angles are measured from array broadside. Element `n` of a steering
//! vector carries the phase `pi * n * sin(aod)`; the wavelength never appears
//! at runtime because the spacing is fixed at half a wavelength.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

pub type C64 = Complex64;

/// Unit-norm array response toward one angle of departure.
#[derive(Debug, Clone, PartialEq)]
pub struct SteeringVector(Vec<C64>);

impl SteeringVector {
    pub fn as_slice(&self) -> &[C64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<C64> {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CodebookKind {
    /// Plain `N_BS`-point DFT, used for the wide sensing sweep.
    SensingDft,
    /// Oversampled DFT, the narrow data beams.
    NarrowOdft,
}

/// A set of constant-modulus, unit-norm beamformers.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    vectors: Vec<Vec<C64>>,
    kind: CodebookKind,
    n_bs: usize,
}

impl Codebook {
    pub fn kind(&self) -> CodebookKind {
        self.kind
    }

    pub fn n_bs(&self) -> usize {
        self.n_bs
    }

    pub fn size(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn vector(&self, index: usize) -> &[C64] {
        &self.vectors[index]
    }

    pub fn vectors(&self) -> &[Vec<C64>] {
        &self.vectors
    }
}

/// One propagation path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Path {
    pub gain: C64,
    /// Angle of departure in radians, within `[-pi/2, pi/2]`.
    pub aod: f64,
}

/// The paths of one UE; never empty.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSet(Vec<Path>);

impl PathSet {
    pub fn new(paths: Vec<Path>) -> Result<Self> {
        if paths.is_empty() {
            return Err(invalid("a path set needs at least one path"));
        }
        for p in &paths {
            if !(p.gain.re.is_finite() && p.gain.im.is_finite()) {
                return Err(invalid("path gain is not finite"));
            }
            if !p.aod.is_finite() || p.aod.abs() > PI / 2.0 + 1e-12 {
                return Err(invalid(format!("aod {} outside [-pi/2, pi/2]", p.aod)));
            }
        }
        Ok(PathSet(paths))
    }

    pub fn paths(&self) -> &[Path] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Downlink channel vector `h`, one entry per BS antenna.
#[derive(Debug, Clone, PartialEq)]
pub struct Channel(pub Vec<C64>);

impl Channel {
    pub fn as_slice(&self) -> &[C64] {
        &self.0
    }

    pub fn n_bs(&self) -> usize {
        self.0.len()
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn scaled(&self, factor: f64) -> Channel {
        Channel(self.0.iter().map(|c| c * factor).collect())
    }
}

pub fn steering_vector(aod: f64, n_bs: usize) -> Result<SteeringVector> {
    if n_bs == 0 {
        return Err(invalid("n_bs must be at least 1"));
    }
    if !aod.is_finite() {
        return Err(invalid(format!("aod must be finite, got {aod}")));
    }
    let amp = 1.0 / (n_bs as f64).sqrt();
    let step = PI * aod.sin();
    Ok(SteeringVector(
        (0..n_bs)
            .map(|n| C64::from_polar(amp, step * n as f64))
            .collect(),
    ))
}

/// DFT codebook with `n_bs * oversampling` beams. Beam `m` has entries
/// `exp(-i 2 pi n m / (n_bs * oversampling)) / sqrt(n_bs)`.
pub fn dft_codebook(n_bs: usize, oversampling: usize) -> Result<Codebook> {
    if n_bs == 0 || oversampling == 0 {
        return Err(invalid("codebook dimensions must be positive"));
    }
    let size = n_bs * oversampling;
    let amp = 1.0 / (n_bs as f64).sqrt();
    let vectors = (0..size)
        .map(|m| {
            (0..n_bs)
                .map(|n| {
                    // reduce n*m modulo size first so large grids keep full phase precision
                    let k = (n * m) % size;
                    C64::from_polar(amp, -2.0 * PI * k as f64 / size as f64)
                })
                .collect()
        })
        .collect();
    let kind = if oversampling == 1 {
        CodebookKind::SensingDft
    } else {
        CodebookKind::NarrowOdft
    };
    Ok(Codebook {
        vectors,
        kind,
        n_bs,
    })
}

/// Sum of `gain * b(aod)` over all paths.
pub fn synth_channel(paths: &PathSet, n_bs: usize) -> Result<Channel> {
    let mut h = vec![C64::new(0.0, 0.0); n_bs];
    for p in paths.paths() {
        let b = steering_vector(p.aod, n_bs)?;
        for (acc, e) in h.iter_mut().zip(b.as_slice()) {
            *acc += p.gain * e;
        }
    }
    Ok(Channel(h))
}

/// `h^H w`.
pub fn inner(h: &[C64], w: &[C64]) -> Result<C64> {
    if h.len() != w.len() {
        return Err(invalid(format!(
            "dimension mismatch: channel has {} entries, beam has {}",
            h.len(),
            w.len()
        )));
    }
    Ok(h.iter().zip(w).map(|(a, b)| a.conj() * b).sum())
}

/// `|h^H w|^2`.
pub fn beam_gain(h: &[C64], w: &[C64]) -> Result<f64> {
    Ok(inner(h, w)?.norm_sqr())
}

pub fn snr(h: &[C64], w: &[C64], p_bs: f64, noise_power: f64) -> Result<f64> {
    if !(p_bs > 0.0) || !(noise_power > 0.0) {
        return Err(invalid("transmit and noise power must be positive"));
    }
    Ok(p_bs * beam_gain(h, w)? / noise_power)
}

/// Gains of every codeword, in codebook order.
pub fn codebook_gains(h: &[C64], codebook: &Codebook) -> Result<Vec<f64>> {
    codebook.vectors.iter().map(|w| beam_gain(h, w)).collect()
}

/// Index of the strongest codeword; ties go to the lowest index.
pub fn best_beam(h: &[C64], codebook: &Codebook) -> Result<usize> {
    if codebook.is_empty() {
        return Err(invalid("empty codebook"));
    }
    let gains = codebook_gains(h, codebook)?;
    Ok(argmax(&gains))
}

/// First index of the maximum; NaN entries never win.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Matched-filter beamformer with `phase_bits`-bit phase shifters.
///
/// For a single-antenna UE the channel is rank one, so the dominant right
/// singular vector is `h / |h|`; each element phase is rounded to the nearest
/// of `2^phase_bits` levels on `[0, 2pi)`, exact half-way phases rounding down.
pub fn quantized_mrt(h: &[C64], phase_bits: u32) -> Result<Vec<C64>> {
    if phase_bits == 0 || phase_bits > 52 {
        return Err(invalid("phase_bits must be in 1..=52"));
    }
    if h.is_empty() || h.iter().all(|c| c.norm_sqr() == 0.0) {
        return Err(invalid("zero channel has no defined phase"));
    }
    let levels = 1u64 << phase_bits;
    let step = 2.0 * PI / levels as f64;
    let amp = 1.0 / (h.len() as f64).sqrt();
    Ok(h.iter()
        .map(|c| {
            let theta = c.arg().rem_euclid(2.0 * PI);
            let level = quantize_level(theta / step) % levels;
            C64::from_polar(amp, level as f64 * step)
        })
        .collect())
}

fn quantize_level(t: f64) -> u64 {
    (t - 0.5).ceil().max(0.0) as u64
}
