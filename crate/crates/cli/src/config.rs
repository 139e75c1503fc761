//! Run configuration: a named profile, then a flat `section.key = value`
//! file, then `BEAMCAUSAL_SECTION__KEY` environment variables, then flags.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use beamcausal::eval::{BenchConfig, BenchMethod, SeConfig};
use beamcausal::mlp::TrainConfig;
use beamcausal::scene::{SceneConfig, Split};
use beamcausal::select::{Method, ShapleyConfig};

use crate::error::{CliError, CliResult};

/// Prefix of environment overrides; `scene.n_users` is `BEAMCAUSAL_SCENE__N_USERS`.
pub const ENV_PREFIX: &str = "BEAMCAUSAL_";

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Profile {
    /// 8000 UEs, runs on a laptop in minutes.
    Desk,
    /// Full-size preset: 57144 training samples.
    Table1,
}

impl Profile {
    pub fn name(self) -> &'static str {
        match self {
            Profile::Desk => "desk",
            Profile::Table1 => "table1",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub profile: Profile,
    /// Global seed; every stream (scene, noise, split, init, ...) derives from it.
    pub seed: u64,
    pub scene: SceneConfig,
    pub train: TrainConfig,
    pub se: SeConfig,
    pub method: Method,
    pub m_tilde: usize,
    pub lingam_threshold: f64,
    pub shapley: ShapleyConfig,
    pub bench_methods: Vec<BenchMethod>,
    pub bench_grid: Vec<usize>,
    pub random_trials: usize,
    pub phase_bits: u32,
    pub eval_split: Split,
}

/// Every recognised key, in echo order.
pub const KEYS: [&str; 28] = [
    "seed",
    "scene.n_bs",
    "scene.n_users",
    "scene.l_paths",
    "scene.aod_min",
    "scene.aod_max",
    "scene.path_decay_db",
    "scene.sensing_snr_db",
    "codebook.oversampling",
    "train.epochs",
    "train.learning_rate",
    "train.batch_size",
    "train.keep_best",
    "se.t_frame",
    "se.t_slot",
    "se.t_predict",
    "se.k",
    "select.method",
    "select.m_tilde",
    "select.lingam_threshold",
    "select.shapley_perms",
    "select.shapley_max_explain",
    "bench.methods",
    "bench.grid",
    "bench.random_trials",
    "bench.phase_bits",
    "bench.split",
    "profile",
];

impl RunConfig {
    pub fn profile(profile: Profile) -> RunConfig {
        let seed = 7;
        let mut cfg = RunConfig {
            profile,
            seed,
            scene: SceneConfig {
                seed,
                ..SceneConfig::default()
            },
            train: TrainConfig::default(),
            se: SeConfig::default(),
            method: Method::Causal,
            m_tilde: 13,
            lingam_threshold: 0.05,
            shapley: ShapleyConfig::default(),
            bench_methods: vec![
                BenchMethod::Select(Method::Causal),
                BenchMethod::Select(Method::Correlation),
                BenchMethod::Select(Method::Shapley),
                BenchMethod::Select(Method::Random),
                BenchMethod::Exhaustive,
                BenchMethod::QuantizedMrt,
            ],
            bench_grid: vec![4, 8, 13, 16, 32],
            random_trials: 1,
            phase_bits: 3,
            eval_split: Split::Test,
        };
        if profile == Profile::Table1 {
            // 70% of 81634 is 57144 training samples
            cfg.scene.n_users = 81634;
            cfg.scene.n_bs = 32;
            cfg.scene.oversampling = 4;
            cfg.train.learning_rate = 1e-3;
            cfg.train.batch_size = 128;
            cfg.train.epochs = 100;
        }
        cfg
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.scene.seed = seed;
    }

    /// Assigns one key from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> CliResult<()> {
        let v = value.trim();
        match key {
            "seed" => self.set_seed(parse(key, v)?),
            "scene.n_bs" => self.scene.n_bs = parse(key, v)?,
            "scene.n_users" => self.scene.n_users = parse(key, v)?,
            "scene.l_paths" => self.scene.l_paths = parse(key, v)?,
            "scene.aod_min" => self.scene.aod_min = parse(key, v)?,
            "scene.aod_max" => self.scene.aod_max = parse(key, v)?,
            "scene.path_decay_db" => self.scene.path_decay_db = parse(key, v)?,
            "scene.sensing_snr_db" => self.scene.sensing_snr_db = parse(key, v)?,
            "codebook.oversampling" => self.scene.oversampling = parse(key, v)?,
            "train.epochs" => self.train.epochs = parse(key, v)?,
            "train.learning_rate" => self.train.learning_rate = parse(key, v)?,
            "train.batch_size" => self.train.batch_size = parse(key, v)?,
            "train.keep_best" => self.train.keep_best = parse(key, v)?,
            "se.t_frame" => self.se.t_frame = parse(key, v)?,
            "se.t_slot" => self.se.t_slot = parse(key, v)?,
            "se.t_predict" => self.se.t_predict = parse(key, v)?,
            "se.k" => self.se.k = parse(key, v)?,
            "select.method" => self.method = v.parse().map_err(|e| bad(key, v, e))?,
            "select.m_tilde" => self.m_tilde = parse(key, v)?,
            "select.lingam_threshold" => self.lingam_threshold = parse(key, v)?,
            "select.shapley_perms" => self.shapley.n_perms = parse(key, v)?,
            "select.shapley_max_explain" => self.shapley.max_explain = parse(key, v)?,
            "bench.methods" => {
                self.bench_methods = split_list(v)
                    .map(|m| BenchMethod::parse(m).map_err(|e| bad(key, v, e)))
                    .collect::<CliResult<_>>()?
            }
            "bench.grid" => self.bench_grid = parse_grid(key, v)?,
            "bench.random_trials" => self.random_trials = parse(key, v)?,
            "bench.phase_bits" => self.phase_bits = parse(key, v)?,
            "bench.split" => {
                self.eval_split = Split::from_name(v).ok_or_else(|| bad(key, v, "expected train, val or test"))?
            }
            "profile" => return Err(CliError::Config("profile can only be chosen with --profile".into())),
            _ => return Err(CliError::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let s = match key {
            "seed" => self.seed.to_string(),
            "scene.n_bs" => self.scene.n_bs.to_string(),
            "scene.n_users" => self.scene.n_users.to_string(),
            "scene.l_paths" => self.scene.l_paths.to_string(),
            "scene.aod_min" => self.scene.aod_min.to_string(),
            "scene.aod_max" => self.scene.aod_max.to_string(),
            "scene.path_decay_db" => self.scene.path_decay_db.to_string(),
            "scene.sensing_snr_db" => self.scene.sensing_snr_db.to_string(),
            "codebook.oversampling" => self.scene.oversampling.to_string(),
            "train.epochs" => self.train.epochs.to_string(),
            "train.learning_rate" => self.train.learning_rate.to_string(),
            "train.batch_size" => self.train.batch_size.to_string(),
            "train.keep_best" => self.train.keep_best.to_string(),
            "se.t_frame" => self.se.t_frame.to_string(),
            "se.t_slot" => self.se.t_slot.to_string(),
            "se.t_predict" => self.se.t_predict.to_string(),
            "se.k" => self.se.k.to_string(),
            "select.method" => self.method.to_string(),
            "select.m_tilde" => self.m_tilde.to_string(),
            "select.lingam_threshold" => self.lingam_threshold.to_string(),
            "select.shapley_perms" => self.shapley.n_perms.to_string(),
            "select.shapley_max_explain" => self.shapley.max_explain.to_string(),
            "bench.methods" => self.bench_methods.iter().map(|m| m.name()).collect::<Vec<_>>().join(","),
            "bench.grid" => self.bench_grid.iter().map(|m| m.to_string()).collect::<Vec<_>>().join(","),
            "bench.random_trials" => self.random_trials.to_string(),
            "bench.phase_bits" => self.phase_bits.to_string(),
            "bench.split" => self.eval_split.name().to_string(),
            "profile" => self.profile.name().to_string(),
            _ => return None,
        };
        Some(s)
    }

    /// `(key, value)` for every key; the manifest echo.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        KEYS.iter().map(|&k| (k, self.get(k).expect("listed key"))).collect()
    }

    /// Applies a `key = value` document; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> CliResult<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("{origin}:{}: expected key = value", i + 1)))?;
            self.set(key.trim(), value)
                .map_err(|e| CliError::Config(format!("{origin}:{}: {}", i + 1, strip(&e))))?;
        }
        Ok(())
    }

    /// Applies `BEAMCAUSAL_*` variables. Unknown names are errors so typos
    /// do not pass silently.
    pub fn apply_env<I>(&mut self, vars: I) -> CliResult<()>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        for (name, value) in vars {
            let Some(rest) = name.strip_prefix(ENV_PREFIX) else {
                continue;
            };
            let key = rest.to_ascii_lowercase().replace("__", ".");
            if !KEYS.contains(&key.as_str()) || key == "profile" {
                return Err(CliError::Config(format!("unknown environment override {name}")));
            }
            self.set(&key, &value)
                .map_err(|e| CliError::Config(format!("{name}: {}", strip(&e))))?;
        }
        Ok(())
    }

    /// Cross-field checks, run once all layers are applied.
    pub fn validate(&self) -> CliResult<()> {
        self.scene.validate()?;
        self.train.validate()?;
        self.se.validate()?;
        if self.m_tilde == 0 || self.m_tilde > self.scene.n_bs {
            return Err(CliError::Config(format!(
                "select.m_tilde must be in 1..={}",
                self.scene.n_bs
            )));
        }
        if let Some(&m) = self.bench_grid.iter().find(|&&m| m == 0 || m > self.scene.n_bs) {
            return Err(CliError::Config(format!("bench.grid entry {m} outside 1..={}", self.scene.n_bs)));
        }
        if self.bench_methods.is_empty() || self.bench_grid.is_empty() {
            return Err(CliError::Config("bench.methods and bench.grid must be non-empty".into()));
        }
        if !(self.lingam_threshold >= 0.0) {
            return Err(CliError::Config("select.lingam_threshold must be non-negative".into()));
        }
        if self.shapley.n_perms == 0 || self.random_trials == 0 {
            return Err(CliError::Config("select.shapley_perms and bench.random_trials must be positive".into()));
        }
        if self.phase_bits == 0 || self.phase_bits > 16 {
            return Err(CliError::Config("bench.phase_bits must be in 1..=16".into()));
        }
        Ok(())
    }

    pub fn bench(&self) -> BenchConfig {
        BenchConfig {
            train: self.train.clone(),
            se: self.se.clone(),
            shapley: self.shapley.clone(),
            lingam_threshold: self.lingam_threshold,
            random_trials: self.random_trials,
            phase_bits: self.phase_bits,
            eval_split: self.eval_split,
            seed: self.seed,
        }
    }
}

impl fmt::Display for RunConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in self.entries() {
            writeln!(f, "{k} = {v}")?;
        }
        Ok(())
    }
}

/// Profile, then config file, then environment, then an explicit seed.
pub fn load(
    profile: Profile,
    file: Option<&Path>,
    env: impl IntoIterator<Item = (String, String)>,
    seed: Option<u64>,
) -> CliResult<RunConfig> {
    let mut cfg = RunConfig::profile(profile);
    if let Some(path) = file {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        cfg.apply_text(&text, &path.display().to_string())?;
    }
    cfg.apply_env(env)?;
    if let Some(seed) = seed {
        cfg.set_seed(seed);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn bad(key: &str, value: &str, why: impl fmt::Display) -> CliError {
    CliError::Config(format!("{key} = {value:?}: {why}"))
}

fn parse<T: FromStr>(key: &str, value: &str) -> CliResult<T>
where
    T::Err: fmt::Display,
{
    value.parse().map_err(|e| bad(key, value, e))
}

fn strip(e: &CliError) -> String {
    let s = e.to_string();
    s.strip_prefix("config error: ").unwrap_or(&s).to_string()
}

fn split_list(v: &str) -> impl Iterator<Item = &str> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty())
}

/// Comma list of budgets; `a-b` is the inclusive range.
fn parse_grid(key: &str, v: &str) -> CliResult<Vec<usize>> {
    let mut out = Vec::new();
    for item in split_list(v) {
        match item.split_once('-') {
            Some((a, b)) => {
                let (a, b): (usize, usize) = (parse(key, a.trim())?, parse(key, b.trim())?);
                if a > b {
                    return Err(bad(key, v, format!("empty range {item}")));
                }
                out.extend(a..=b);
            }
            None => out.push(parse(key, item)?),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_env_and_seed_layer_in_order() {
        let env = vec![
            ("BEAMCAUSAL_SCENE__N_USERS".to_string(), "300".to_string()),
            ("PATH".to_string(), "/bin".to_string()),
        ];
        let mut cfg = RunConfig::profile(Profile::Desk);
        cfg.apply_text("scene.n_users = 622 # small\ntrain.epochs=5\n\nbench.grid = 1-3, 8\n", "t").unwrap();
        assert_eq!(cfg.scene.n_users, 622);
        cfg.apply_env(env).unwrap();
        assert_eq!(cfg.scene.n_users, 300);
        assert_eq!(cfg.train.epochs, 5);
        assert_eq!(cfg.bench_grid, vec![1, 2, 3, 8]);
        cfg.set_seed(11);
        assert_eq!(cfg.scene.seed, 11);
    }

    #[test]
    fn echo_round_trips() {
        let mut cfg = RunConfig::profile(Profile::Table1);
        cfg.set("bench.methods", "causal, svd, exhaustive").unwrap();
        cfg.set("scene.sensing_snr_db", "inf").unwrap();
        let echo: String = cfg
            .entries()
            .into_iter()
            .filter(|(k, _)| *k != "profile")
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect();
        let mut back = RunConfig::profile(Profile::Table1);
        back.apply_text(&echo, "echo").unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn table1_preset() {
        let cfg = RunConfig::profile(Profile::Table1);
        assert_eq!(cfg.scene.n_bs, 32);
        assert_eq!(cfg.scene.n_bs * cfg.scene.oversampling, 128);
        assert_eq!(cfg.train.learning_rate, 1e-3);
        assert_eq!((cfg.scene.n_users as f64 * 0.7).round() as usize, 57144);
    }

    #[test]
    fn bad_input_is_a_config_error() {
        let mut cfg = RunConfig::profile(Profile::Desk);
        for (k, v) in [("scene.n_users", "many"), ("nope", "1"), ("select.method", "lasso"), ("bench.grid", "5-2")] {
            assert!(matches!(cfg.set(k, v), Err(CliError::Config(_))), "{k}");
        }
        assert!(cfg.apply_text("just words", "f").is_err());
        assert!(cfg.apply_env([("BEAMCAUSAL_SCENE__USERS".to_string(), "1".to_string())]).is_err());
        cfg.m_tilde = 33;
        assert!(cfg.validate().is_err());
    }
}
