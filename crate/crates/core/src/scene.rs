//! Synthetic scenes, RSSI sweeps and labelled datasets.
//!
//! A scene is one [`PathSet`] per UE. [`build_dataset`] normalizes every
//! channel by the largest channel entry across the whole scene, labels each
//! UE with the noise-free best O-DFT beam and records a noisy sweep over the
//! sensing DFT beams as the feature vector.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::Path as FsPath;

use rand::Rng;
use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{
    argmax, beam_gain, codebook_gains, inner, synth_channel, Codebook, CodebookKind, Path, PathSet,
    C64,
};
use crate::error::{invalid, parse_err, Error, Result};
use crate::stream;
use crate::textio::{self, Cursor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub n_bs: usize,
    pub n_users: usize,
    pub l_paths: usize,
    /// Lower edge of the AoD interval, radians.
    pub aod_min: f64,
    /// Upper edge of the AoD interval, radians.
    pub aod_max: f64,
    /// Mean power drop per path index, dB.
    pub path_decay_db: f64,
    pub seed: u64,
    /// SNR of the strongest sensing beam of the strongest UE; `inf` disables noise.
    pub sensing_snr_db: f64,
    /// Oversampling factor of the narrow codebook.
    pub oversampling: usize,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            n_bs: 32,
            n_users: 8000,
            l_paths: 3,
            aod_min: -0.6,
            aod_max: -0.1,
            path_decay_db: 6.0,
            seed: 7,
            sensing_snr_db: 20.0,
            oversampling: 4,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_bs == 0 || self.n_users == 0 || self.l_paths == 0 || self.oversampling == 0 {
            return Err(invalid("n_bs, n_users, l_paths and oversampling must be positive"));
        }
        if !(self.aod_min.is_finite() && self.aod_max.is_finite()) || self.aod_min > self.aod_max {
            return Err(invalid(format!(
                "empty aod range [{}, {}]",
                self.aod_min, self.aod_max
            )));
        }
        if self.aod_min < -PI / 2.0 || self.aod_max > PI / 2.0 {
            return Err(invalid("aod range must lie within [-pi/2, pi/2]"));
        }
        if !self.path_decay_db.is_finite() {
            return Err(invalid("path_decay_db must be finite"));
        }
        if self.sensing_snr_db.is_nan() || self.sensing_snr_db == f64::NEG_INFINITY {
            return Err(invalid("sensing_snr_db must be a number or +inf"));
        }
        Ok(())
    }
}

/// Multipath parameters of every UE.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub n_bs: usize,
    pub users: Vec<PathSet>,
}

pub fn generate_scene(cfg: &SceneConfig) -> Result<Scene> {
    cfg.validate()?;
    let users = (0..cfg.n_users)
        .into_par_iter()
        .map(|u| {
            let mut rng = stream::rng_indexed(cfg.seed, "scene", u as u64);
            let paths = (0..cfg.l_paths)
                .map(|l| {
                    let aod = if cfg.aod_max > cfg.aod_min {
                        rng.random_range(cfg.aod_min..=cfg.aod_max)
                    } else {
                        cfg.aod_min
                    };
                    let power = 10f64.powf(-cfg.path_decay_db * l as f64 / 10.0);
                    let gain = complex_gaussian(&mut rng, power);
                    Path { gain, aod }
                })
                .collect();
            PathSet::new(paths)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Scene {
        n_bs: cfg.n_bs,
        users,
    })
}

/// Circularly symmetric complex Gaussian with the given variance.
fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> C64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(re * s, im * s)
}

/// Received power on each sensing beam, `|h^H w_i + z_i|^2` with unit symbol
/// and transmit power folded into the channel normalization.
pub fn sweep_rssi<R: Rng + ?Sized>(
    h: &[C64],
    sensing: &Codebook,
    noise_power: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if sensing.kind() != CodebookKind::SensingDft {
        return Err(invalid("sensing sweep expects a plain DFT codebook"));
    }
    sweep_power(h, sensing, noise_power, rng)
}

/// Same as [`sweep_rssi`] for any codebook; the exhaustive baseline sweeps
/// the narrow beams with it.
pub fn sweep_power<R: Rng + ?Sized>(
    h: &[C64],
    codebook: &Codebook,
    noise_power: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if !(noise_power >= 0.0) {
        return Err(invalid("noise power must be non-negative"));
    }
    codebook
        .vectors()
        .iter()
        .map(|w| {
            let mut r = inner(h, w)?;
            if noise_power > 0.0 {
                r += complex_gaussian(rng, noise_power);
            }
            Ok(r.norm_sqr())
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn from_name(s: &str) -> Option<Split> {
        match s {
            "train" => Some(Split::Train),
            "val" => Some(Split::Val),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// RSSI per sensing beam.
    pub x: Vec<f64>,
    /// Best narrow beam, 0-based.
    pub y: usize,
    pub ue: usize,
    /// `|h^H w_y|^2` of the labelled beam.
    pub opt_gain: f64,
    /// Normalized channel; absent for imported files without channel columns.
    pub channel: Option<Vec<C64>>,
}

/// Ascending index lists of the three splits.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Splits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Splits {
    /// Seeded 70/10/20 partition of `0..n`.
    pub fn draw(n: usize, seed: u64) -> Splits {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut stream::rng(seed, "split"));
        let n_train = (0.7 * n as f64).round() as usize;
        let n_val = ((0.1 * n as f64).round() as usize).min(n - n_train);
        let mut train = idx[..n_train].to_vec();
        let mut val = idx[n_train..n_train + n_val].to_vec();
        let mut test = idx[n_train + n_val..].to_vec();
        train.sort_unstable();
        val.sort_unstable();
        test.sort_unstable();
        Splits { train, val, test }
    }

    pub fn get(&self, split: Split) -> &[usize] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    fn tags(&self, n: usize) -> Result<Vec<Split>> {
        let mut tags = vec![None; n];
        for split in [Split::Train, Split::Val, Split::Test] {
            for &i in self.get(split) {
                match tags.get_mut(i) {
                    Some(slot @ None) => *slot = Some(split),
                    Some(Some(_)) => return Err(invalid(format!("sample {i} in two splits"))),
                    None => return Err(invalid(format!("split index {i} out of range"))),
                }
            }
        }
        tags.into_iter()
            .enumerate()
            .map(|(i, t)| t.ok_or_else(|| invalid(format!("sample {i} belongs to no split"))))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub splits: Splits,
    pub m_w: usize,
    pub y_classes: usize,
    /// Antennas per stored channel; 0 when channels are absent.
    pub n_bs: usize,
    pub seed: u64,
    /// Max-abs channel entry the raw channels were divided by.
    pub normalization: f64,
    /// Sensing noise variance in normalized units.
    pub noise_power: f64,
    pub sensing_snr_db: f64,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn split(&self, split: Split) -> &[usize] {
        self.splits.get(split)
    }

    pub fn has_channels(&self) -> bool {
        self.n_bs > 0 && self.samples.iter().all(|s| s.channel.is_some())
    }

    /// Feature matrix restricted to `rows` and feature columns `subset`.
    pub fn features(&self, rows: &[usize], subset: &[usize]) -> ndarray::Array2<f64> {
        ndarray::Array2::from_shape_fn((rows.len(), subset.len()), |(r, c)| {
            self.samples[rows[r]].x[subset[c]]
        })
    }

    pub fn labels(&self, rows: &[usize]) -> Vec<usize> {
        rows.iter().map(|&r| self.samples[r].y).collect()
    }

    /// Joint matrix `[x_1 .. x_Mw, y]` over `rows`, the label as a real column.
    pub fn joint_matrix(&self, rows: &[usize]) -> ndarray::Array2<f64> {
        let p = self.m_w + 1;
        ndarray::Array2::from_shape_fn((rows.len(), p), |(r, c)| {
            let s = &self.samples[rows[r]];
            if c < self.m_w {
                s.x[c]
            } else {
                s.y as f64
            }
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.m_w == 0 || self.y_classes == 0 {
            return Err(invalid("m_w and y_classes must be positive"));
        }
        for (i, s) in self.samples.iter().enumerate() {
            if s.x.len() != self.m_w {
                return Err(invalid(format!("sample {i} has {} features", s.x.len())));
            }
            if s.y >= self.y_classes {
                return Err(invalid(format!("sample {i} label {} out of range", s.y)));
            }
            if s.x.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
                return Err(invalid(format!("sample {i} has a negative or non-finite RSSI")));
            }
            match &s.channel {
                Some(h) if h.len() != self.n_bs => {
                    return Err(invalid(format!("sample {i} channel has {} entries", h.len())))
                }
                None if self.n_bs > 0 => {
                    return Err(invalid(format!("sample {i} is missing its channel")))
                }
                _ => {}
            }
        }
        self.splits.tags(self.samples.len())?;
        Ok(())
    }
}

/// Labels, sweeps and splits a scene.
pub fn build_dataset(
    scene: &Scene,
    sensing: &Codebook,
    narrow: &Codebook,
    cfg: &SceneConfig,
) -> Result<Dataset> {
    cfg.validate()?;
    if scene.n_bs != cfg.n_bs || sensing.n_bs() != cfg.n_bs || narrow.n_bs() != cfg.n_bs {
        return Err(invalid(format!(
            "antenna count mismatch: scene {}, sensing {}, narrow {}, config {}",
            scene.n_bs,
            sensing.n_bs(),
            narrow.n_bs(),
            cfg.n_bs
        )));
    }
    if sensing.kind() != CodebookKind::SensingDft {
        return Err(invalid("sensing codebook must be a plain DFT"));
    }
    if scene.users.is_empty() {
        return Err(invalid("scene has no users"));
    }

    let raw = scene
        .users
        .par_iter()
        .map(|ps| synth_channel(ps, cfg.n_bs))
        .collect::<Result<Vec<_>>>()?;
    let normalization = raw.iter().map(|h| h.max_abs()).fold(0.0, f64::max);
    if !(normalization > 0.0) || !normalization.is_finite() {
        return Err(Error::Numerical("all channels are zero".into()));
    }
    let channels: Vec<Vec<C64>> = raw.iter().map(|h| h.scaled(1.0 / normalization).0).collect();

    let noise_power = if cfg.sensing_snr_db == f64::INFINITY {
        0.0
    } else {
        let peak = channels
            .par_iter()
            .map(|h| codebook_gains(h, sensing).map(|g| g.into_iter().fold(0.0, f64::max)))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        peak / 10f64.powf(cfg.sensing_snr_db / 10.0)
    };

    let samples = channels
        .into_par_iter()
        .enumerate()
        .map(|(u, h)| {
            let gains = codebook_gains(&h, narrow)?;
            let y = argmax(&gains);
            let mut rng = stream::rng_indexed(cfg.seed, "noise", u as u64);
            let x = sweep_rssi(&h, sensing, noise_power, &mut rng)?;
            Ok(Sample {
                x,
                y,
                ue: u,
                opt_gain: gains[y],
                channel: Some(h),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let splits = Splits::draw(samples.len(), cfg.seed);
    Ok(Dataset {
        samples,
        splits,
        m_w: sensing.size(),
        y_classes: narrow.size(),
        n_bs: cfg.n_bs,
        seed: cfg.seed,
        normalization,
        noise_power,
        sensing_snr_db: cfg.sensing_snr_db,
    })
}

/// Gain of narrow beam `beam` for sample `i`, needs stored channels.
pub fn sample_gain(d: &Dataset, i: usize, w: &[C64]) -> Result<f64> {
    let h = d.samples[i]
        .channel
        .as_ref()
        .ok_or_else(|| invalid("dataset has no channel columns"))?;
    beam_gain(h, w)
}

const DATASET_KIND: &str = "dataset";
const DATASET_VERSION: u32 = 1;

/// Serializes a dataset; every float is written in shortest round-trip form.
pub fn dataset_to_string(d: &Dataset) -> Result<String> {
    d.validate()?;
    let tags = d.splits.tags(d.samples.len())?;
    let mut out = textio::header(DATASET_KIND, DATASET_VERSION);
    let _ = writeln!(out, "m_w = {}", d.m_w);
    let _ = writeln!(out, "y_classes = {}", d.y_classes);
    let _ = writeln!(out, "n_bs = {}", d.n_bs);
    let _ = writeln!(out, "count = {}", d.samples.len());
    let _ = writeln!(out, "seed = {}", d.seed);
    let _ = writeln!(out, "normalization = {}", d.normalization);
    let _ = writeln!(out, "noise_power = {}", d.noise_power);
    let _ = writeln!(out, "sensing_snr_db = {}", d.sensing_snr_db);
    out.push_str("---\n");
    for (s, tag) in d.samples.iter().zip(tags) {
        let _ = write!(out, "{},{},{},{}", tag.name(), s.ue, s.y, s.opt_gain);
        for v in &s.x {
            let _ = write!(out, ",{v}");
        }
        if let Some(h) = &s.channel {
            for c in h {
                let _ = write!(out, ",{},{}", c.re, c.im);
            }
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn dataset_from_str(text: &str) -> Result<Dataset> {
    let mut cur = Cursor::new(text);
    cur.expect_header(DATASET_KIND, DATASET_VERSION)?;
    let m_w: usize = cur.parse_kv("m_w")?;
    let y_classes: usize = cur.parse_kv("y_classes")?;
    let n_bs: usize = cur.parse_kv("n_bs")?;
    let count: usize = cur.parse_kv("count")?;
    let seed: u64 = cur.parse_kv("seed")?;
    let normalization: f64 = cur.parse_kv("normalization")?;
    let noise_power: f64 = cur.parse_kv("noise_power")?;
    let sensing_snr_db: f64 = cur.parse_kv("sensing_snr_db")?;
    let (no, sep) = cur.expect_line("`---` separator")?;
    if sep.trim() != "---" {
        return Err(parse_err(no, "expected `---` separator"));
    }
    if m_w == 0 || y_classes == 0 {
        return Err(parse_err(no, "m_w and y_classes must be positive"));
    }

    let width = 4 + m_w + 2 * n_bs;
    let mut samples = Vec::with_capacity(count);
    let mut splits = Splits::default();
    for row in 0..count {
        let (no, line) = cur.expect_line(&format!("row {row} of {count}"))?;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != width {
            return Err(parse_err(
                no,
                format!(
                    "row {row} has {} fields, header implies {width} (m_w = {m_w}, n_bs = {n_bs})",
                    fields.len()
                ),
            ));
        }
        let split = Split::from_name(fields[0])
            .ok_or_else(|| parse_err(no, format!("row {row}: unknown split {:?}", fields[0])))?;
        let ue: usize = textio::parse_value(no, fields[1], "ue index")?;
        let y: usize = textio::parse_value(no, fields[2], "label")?;
        if y >= y_classes {
            return Err(parse_err(no, format!("row {row}: label {y} >= y_classes {y_classes}")));
        }
        let opt_gain: f64 = textio::parse_value(no, fields[3], "optimal gain")?;
        let x = fields[4..4 + m_w]
            .iter()
            .map(|f| textio::parse_value::<f64>(no, f, "rssi"))
            .collect::<Result<Vec<_>>>()?;
        if x.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(parse_err(no, format!("row {row}: negative or non-finite RSSI")));
        }
        let channel = if n_bs > 0 {
            let vals = fields[4 + m_w..]
                .iter()
                .map(|f| textio::parse_value::<f64>(no, f, "channel entry"))
                .collect::<Result<Vec<_>>>()?;
            Some(vals.chunks(2).map(|c| C64::new(c[0], c[1])).collect())
        } else {
            None
        };
        match split {
            Split::Train => splits.train.push(row),
            Split::Val => splits.val.push(row),
            Split::Test => splits.test.push(row),
        }
        samples.push(Sample {
            x,
            y,
            ue,
            opt_gain,
            channel,
        });
    }
    let trailing = cur.next_line();
    if let Some((no, l)) = trailing {
        if !l.trim().is_empty() {
            return Err(parse_err(no, format!("more rows than count = {count}")));
        }
    }
    Ok(Dataset {
        samples,
        splits,
        m_w,
        y_classes,
        n_bs,
        seed,
        normalization,
        noise_power,
        sensing_snr_db,
    })
}

pub fn save_dataset(d: &Dataset, path: impl AsRef<FsPath>) -> Result<()> {
    fs::write(path, dataset_to_string(d)?)?;
    Ok(())
}

/// Loads a dataset file; also the import path for externally produced dumps.
pub fn load_dataset(path: impl AsRef<FsPath>) -> Result<Dataset> {
    dataset_from_str(&fs::read_to_string(path)?)
}
