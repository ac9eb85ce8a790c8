//! Sectioned `key = value` experiment files.
//!
//! ```text
//! # comment
//! [parameters]
//! a = 3
//! [forcing]
//! kind = time-periodic
//! amplitudes = 0.5, 0.2, 0.1
//! ```
//!
//! Reals are decimal literals; each is kept verbatim for the manifest and
//! converted once with correct rounding. Every key the file omits resolves
//! to a documented default, and the resolved table records both.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use hrlab::model::{ForcingKind, ForcingSpec, HrParameters};
use hrlab::solver::{DiffusionMethod, ProcessConfig, Scheme};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("unknown section [{0}]")]
    UnknownSection(String),
    #[error("line {line}: unknown key `{key}` in section [{section}]")]
    UnknownKey { section: String, key: String, line: usize },
    #[error("duplicate key `{key}` in section [{section}]")]
    DuplicateKey { section: String, key: String },
    #[error("[{section}] {key} = {value}: {reason}")]
    BadValue {
        section: String,
        key: String,
        value: String,
        reason: String,
    },
}

pub const SECTIONS: [&str; 6] = ["parameters", "grid", "forcing", "solver", "experiment", "output"];

/// A checked decimal literal: `[+-]digits[.digits][(e|E)[+-]digits]`, with
/// digits allowed on either side of the point but not missing on both.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decimal(String);

impl Decimal {
    pub fn parse(s: &str) -> Option<Self> {
        let b = s.as_bytes();
        let mut i = 0;
        if i < b.len() && (b[i] == b'+' || b[i] == b'-') {
            i += 1;
        }
        let int_start = i;
        while i < b.len() && b[i].is_ascii_digit() {
            i += 1;
        }
        let mut digits = i - int_start;
        if i < b.len() && b[i] == b'.' {
            i += 1;
            let frac_start = i;
            while i < b.len() && b[i].is_ascii_digit() {
                i += 1;
            }
            digits += i - frac_start;
        }
        if digits == 0 {
            return None;
        }
        if i < b.len() && (b[i] == b'e' || b[i] == b'E') {
            i += 1;
            if i < b.len() && (b[i] == b'+' || b[i] == b'-') {
                i += 1;
            }
            let exp_start = i;
            while i < b.len() && b[i].is_ascii_digit() {
                i += 1;
            }
            if i == exp_start {
                return None;
            }
        }
        (i == b.len()).then(|| Decimal(s.to_string()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Nearest `f64`.
    pub fn to_f64(&self) -> f64 {
        self.0.parse().expect("validated decimal literal")
    }
}

#[derive(Debug, Clone)]
struct RawEntry {
    value: String,
    line: usize,
}

/// Parsed but untyped file.
#[derive(Debug, Clone, Default)]
pub struct RawConfig {
    sections: BTreeMap<String, BTreeMap<String, RawEntry>>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut out = RawConfig::default();
        let mut current: Option<String> = None;
        for (idx, raw_line) in text.lines().enumerate() {
            let line = idx + 1;
            let content = strip_comment(raw_line).trim();
            if content.is_empty() {
                continue;
            }
            if let Some(rest) = content.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| ConfigError::Syntax {
                    line,
                    message: format!("unterminated section header `{content}`"),
                })?;
                let name = name.trim();
                if !SECTIONS.contains(&name) {
                    return Err(ConfigError::UnknownSection(name.to_string()));
                }
                out.sections.entry(name.to_string()).or_default();
                current = Some(name.to_string());
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line,
                message: format!("expected `key = value`, got `{content}`"),
            })?;
            let key = key.trim();
            if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                return Err(ConfigError::Syntax {
                    line,
                    message: format!("malformed key `{key}`"),
                });
            }
            let section = current.clone().ok_or_else(|| ConfigError::Syntax {
                line,
                message: format!("key `{key}` outside any section"),
            })?;
            let table = out.sections.entry(section.clone()).or_default();
            if table.contains_key(key) {
                return Err(ConfigError::DuplicateKey {
                    section,
                    key: key.to_string(),
                });
            }
            table.insert(
                key.to_string(),
                RawEntry {
                    value: value.trim().to_string(),
                    line,
                },
            );
        }
        Ok(out)
    }
}

fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(i) => &line[..i],
        None => line,
    }
}

/// Typed reads from one section; unread keys are reported by `finish`.
struct Reader<'a> {
    section: &'static str,
    entries: BTreeMap<String, RawEntry>,
    used: BTreeSet<String>,
    resolved: &'a mut BTreeMap<String, String>,
}

impl Reader<'_> {
    fn raw(&mut self, key: &str, default: &str) -> String {
        self.used.insert(key.to_string());
        let v = self
            .entries
            .get(key)
            .map(|e| e.value.clone())
            .unwrap_or_else(|| default.to_string());
        self.resolved.insert(key.to_string(), v.clone());
        v
    }

    fn bad(&self, key: &str, value: &str, reason: impl Into<String>) -> ConfigError {
        ConfigError::BadValue {
            section: self.section.to_string(),
            key: key.to_string(),
            value: value.to_string(),
            reason: reason.into(),
        }
    }

    fn real(&mut self, key: &str, default: &str) -> Result<f64, ConfigError> {
        let v = self.raw(key, default);
        Decimal::parse(&v)
            .map(|d| d.to_f64())
            .ok_or_else(|| self.bad(key, &v, "not a decimal number"))
    }

    fn reals(&mut self, key: &str, default: &str) -> Result<Vec<f64>, ConfigError> {
        let v = self.raw(key, default);
        if v.trim().is_empty() {
            return Ok(vec![]);
        }
        v.split(',')
            .map(|s| {
                Decimal::parse(s.trim())
                    .map(|d| d.to_f64())
                    .ok_or_else(|| self.bad(key, &v, format!("`{}` is not a decimal number", s.trim())))
            })
            .collect()
    }

    fn triple(&mut self, key: &str, default: &str) -> Result<[f64; 3], ConfigError> {
        let xs = self.reals(key, default)?;
        xs.clone().try_into().map_err(|_| {
            self.bad(
                key,
                &self.resolved[key].clone(),
                format!("expected 3 values, got {}", xs.len()),
            )
        })
    }

    fn uint(&mut self, key: &str, default: &str) -> Result<u64, ConfigError> {
        let v = self.raw(key, default);
        v.parse().map_err(|_| self.bad(key, &v, "not a nonnegative integer"))
    }

    fn uints(&mut self, key: &str, default: &str) -> Result<Vec<usize>, ConfigError> {
        let v = self.raw(key, default);
        v.split(',')
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|_| self.bad(key, &v, format!("`{}` is not an integer", s.trim())))
            })
            .collect()
    }

    fn finish(self) -> Result<(), ConfigError> {
        let unused = self
            .entries
            .iter()
            .filter(|(k, _)| !self.used.contains(*k))
            .min_by_key(|(_, e)| e.line);
        match unused {
            Some((k, e)) => Err(ConfigError::UnknownKey {
                section: self.section.to_string(),
                key: k.clone(),
                line: e.line,
            }),
            None => Ok(()),
        }
    }
}

/// A squared radius given as a number or as a multiple of `K1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Radius {
    Absolute(f64),
    K1Multiple(f64),
}

impl Radius {
    fn parse(s: &str) -> Option<Self> {
        let s = s.trim();
        if s == "k1" {
            return Some(Radius::K1Multiple(1.0));
        }
        if let Some(m) = s.strip_suffix("*k1") {
            let m = m.trim();
            return Decimal::parse(m).map(|d| Radius::K1Multiple(d.to_f64()));
        }
        Decimal::parse(s).map(|d| Radius::Absolute(d.to_f64()))
    }

    pub fn resolve(self, k1: Option<f64>) -> Option<f64> {
        match self {
            Radius::Absolute(r) => Some(r),
            Radius::K1Multiple(m) => k1.map(|k| m * k),
        }
    }
}

/// How the state at `tau` is built.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialData {
    Zero,
    Uniform([f64; 3]),
    /// Smooth random field with `‖g‖² = norm_sq`, drawn from the experiment seed.
    Random {
        norm_sq: f64,
    },
    /// Homogeneous point of the fast nullcline at the given `w`.
    SlowManifold {
        w: f64,
    },
}

impl InitialData {
    pub fn is_uniform(&self) -> bool {
        !matches!(self, InitialData::Random { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyConfig {
    pub runs: usize,
    pub max_norm_sq: Radius,
    pub pairs: usize,
    pub pair_horizon: f64,
    pub pair_distance: f64,
    pub absorbing_members: usize,
    pub ball_norm_sq: Vec<f64>,
    pub smoothing_pairs: usize,
    pub smoothing_taus: usize,
    pub smoothing_spacing: f64,
    pub smoothing_distance: f64,
    pub holder_lags: Vec<f64>,
    pub holder_w: f64,
    /// Monitor this trajectory CSV instead of fresh runs.
    pub fixture: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PullbackConfig {
    pub taus: Vec<f64>,
    pub horizons: Vec<f64>,
    pub per_level: usize,
    pub ball_norm_sq: Radius,
    pub tol_attr: f64,
    pub scales: Vec<f64>,
    pub profile_horizons: Vec<f64>,
    pub profile_members: usize,
    pub invariance_deltas: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub seed: u64,
    pub tau: f64,
    pub t_end: f64,
    pub initial: InitialData,
    pub t_mstar: f64,
    pub verify: VerifyConfig,
    pub pullback: PullbackConfig,
}

/// A fully resolved experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub params: HrParameters<f64>,
    pub lengths: Vec<f64>,
    pub cells: Vec<usize>,
    pub forcing: ForcingSpec<f64>,
    pub solver: ProcessConfig<f64>,
    pub experiment: Experiment,
    pub output_dir: Option<PathBuf>,
    /// Every key with the literal it resolved to, by section.
    pub resolved: BTreeMap<String, BTreeMap<String, String>>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut raw = RawConfig::parse(text)?;
        let mut resolved: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
        let mut take = |name: &'static str| (name, raw.sections.remove(name).unwrap_or_default());

        let (name, entries) = take("parameters");
        let mut table = BTreeMap::new();
        let mut r = reader(name, entries, &mut table);
        let params = HrParameters {
            d1: r.real("d1", "0.05")?,
            d2: r.real("d2", "0.05")?,
            d3: r.real("d3", "0.05")?,
            a: r.real("a", "3")?,
            b: r.real("b", "1")?,
            alpha: r.real("alpha", "1")?,
            beta: r.real("beta", "5")?,
            q: r.real("q", "0.02")?,
            r: r.real("r", "0.005")?,
            c: r.real("c", "-1.6")?,
            j: r.real("J", "3.25")?,
        };
        r.finish()?;
        resolved.insert(name.into(), table);

        let (name, entries) = take("grid");
        let mut table = BTreeMap::new();
        let mut r = reader(name, entries, &mut table);
        let lengths = r.reals("lengths", "1")?;
        let cells = r.uints("cells", "127")?;
        r.finish()?;
        resolved.insert(name.into(), table);

        let (name, entries) = take("forcing");
        let mut table = BTreeMap::new();
        let mut r = reader(name, entries, &mut table);
        let kind_text = r.raw("kind", "zero");
        let kind = ForcingKind::parse(&kind_text).ok_or_else(|| {
            r.bad(
                "kind",
                &kind_text,
                "expected zero, constant, time-periodic, space-modulated or bounded-noise",
            )
        })?;
        let forcing = ForcingSpec {
            kind,
            amplitudes: r.triple("amplitudes", "0, 0, 0")?,
            frequency: r.real("frequency", "0")?,
            phase: r.real("phase", "0")?,
            seed: r.uint("seed", "0")?,
        };
        r.finish()?;
        resolved.insert(name.into(), table);

        let (name, entries) = take("solver");
        let mut table = BTreeMap::new();
        let mut r = reader(name, entries, &mut table);
        let scheme_text = r.raw("scheme", Scheme::default().name());
        let scheme = Scheme::parse(&scheme_text)
            .ok_or_else(|| r.bad("scheme", &scheme_text, "expected imex-euler, imex-cnab2 or imex-ars343"))?;
        let diff_text = r.raw("diffusion", DiffusionMethod::default().name());
        let diffusion = DiffusionMethod::parse(&diff_text).ok_or_else(|| {
            r.bad(
                "diffusion",
                &diff_text,
                "expected tridiagonal-direct or cosine-spectral",
            )
        })?;
        let snap_text = r.raw("snapshot_stride", "none");
        let snapshot_stride = match snap_text.as_str() {
            "none" => None,
            s => Some(
                s.parse()
                    .map_err(|_| r.bad("snapshot_stride", s, "expected `none` or an integer"))?,
            ),
        };
        let solver = ProcessConfig {
            dt: r.real("dt", "0.001")?,
            scheme,
            diffusion,
            max_steps: r.uint("max_steps", "10000000")?,
            stride: r.uint("stride", "1")? as usize,
            snapshot_stride,
        };
        r.finish()?;
        resolved.insert(name.into(), table);

        let (name, entries) = take("experiment");
        let mut table = BTreeMap::new();
        let mut r = reader(name, entries, &mut table);
        let seed = r.uint("seed", "0")?;
        let tau = r.real("tau", "0")?;
        let t_end = r.real("t_end", "50")?;
        let initial_text = r.raw("initial", "zero");
        let initial_state = r.triple("initial_state", "0, 0, 0")?;
        let initial_norm_sq = r.real("initial_norm_sq", "1")?;
        let initial_w = r.real("initial_w", "1000")?;
        let initial = match initial_text.as_str() {
            "zero" => InitialData::Zero,
            "uniform" => InitialData::Uniform(initial_state),
            "random" => InitialData::Random {
                norm_sq: initial_norm_sq,
            },
            "slow-manifold" => InitialData::SlowManifold { w: initial_w },
            other => return Err(r.bad("initial", other, "expected zero, uniform, random or slow-manifold")),
        };
        let t_mstar = r.real("t_mstar", "5")?;
        let radius = |r: &mut Reader, key: &str, default: &str| {
            let v = r.raw(key, default);
            Radius::parse(&v).ok_or_else(|| r.bad(key, &v, "expected a decimal or `<m>*k1`"))
        };
        let verify = VerifyConfig {
            runs: r.uint("verify_runs", "4")? as usize,
            max_norm_sq: radius(&mut r, "verify_max_norm_sq", "10*k1")?,
            pairs: r.uint("verify_pairs", "10")? as usize,
            pair_horizon: r.real("verify_pair_horizon", "10")?,
            pair_distance: r.real("verify_pair_distance", "0.001")?,
            absorbing_members: r.uint("verify_absorbing_members", "4")? as usize,
            ball_norm_sq: r.reals("verify_ball_factors", "1, 10")?,
            smoothing_pairs: r.uint("verify_smoothing_pairs", "4")? as usize,
            smoothing_taus: r.uint("verify_smoothing_taus", "2")? as usize,
            smoothing_spacing: r.real("verify_smoothing_spacing", "10")?,
            smoothing_distance: r.real("verify_smoothing_distance", "0.0001")?,
            holder_lags: r.reals("verify_holder_lags", "0.01, 0.03, 0.1, 0.3, 1, 2, 5")?,
            holder_w: r.real("verify_holder_w", "1000")?,
            fixture: Some(r.raw("verify_fixture", ""))
                .filter(|p| !p.is_empty())
                .map(PathBuf::from),
        };
        let pullback = PullbackConfig {
            taus: r.reals("pullback_taus", "0")?,
            horizons: r.reals("pullback_horizons", "5, 10, 20, 40, 80")?,
            per_level: r.uint("pullback_per_level", "5")? as usize,
            ball_norm_sq: radius(&mut r, "pullback_ball_norm_sq", "k1")?,
            tol_attr: r.real("pullback_tol_attr", "0.0001")?,
            scales: r.reals("pullback_scales", "0.5, 0.25, 0.125, 0.0625, 0.03125")?,
            profile_horizons: r.reals("pullback_profile_horizons", "1, 2, 4, 8, 16, 32")?,
            profile_members: r.uint("pullback_profile_members", "8")? as usize,
            invariance_deltas: r.reals("pullback_invariance_deltas", "")?,
        };
        r.finish()?;
        resolved.insert(name.into(), table);
        let experiment = Experiment {
            seed,
            tau,
            t_end,
            initial,
            t_mstar,
            verify,
            pullback,
        };

        let (name, entries) = take("output");
        let mut table = BTreeMap::new();
        let mut r = reader(name, entries, &mut table);
        let dir = r.raw("dir", "");
        r.finish()?;
        resolved.insert(name.into(), table);
        let output_dir = (!dir.is_empty()).then(|| PathBuf::from(dir));

        Ok(ExperimentConfig {
            params,
            lengths,
            cells,
            forcing,
            solver,
            experiment,
            output_dir,
            resolved,
        })
    }

    /// Replaces the experiment seed, keeping the resolved table in sync.
    pub fn override_seed(&mut self, seed: u64) {
        self.experiment.seed = seed;
        self.resolved
            .entry("experiment".into())
            .or_default()
            .insert("seed".into(), seed.to_string());
    }

    /// Canonical text form: every section and key, sorted.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for name in SECTIONS {
            if let Some(table) = self.resolved.get(name) {
                s.push_str(&format!("[{name}]\n"));
                for (k, v) in table {
                    s.push_str(&format!("{k} = {v}\n"));
                }
            }
        }
        s
    }
}

fn reader<'a>(
    section: &'static str,
    entries: BTreeMap<String, RawEntry>,
    resolved: &'a mut BTreeMap<String, String>,
) -> Reader<'a> {
    Reader {
        section,
        entries,
        used: BTreeSet::new(),
        resolved,
    }
}
