//! Run configuration: strict TOML documents, built-in presets, and `run.json` echoes.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ensemble::FastInitial;
use crate::fast_map::{FastMap, DEFAULT_BURN_IN};
use crate::func::{Multiplier, Observable, SlowDrift};
use crate::levy::StableNoiseSpec;
use crate::sde::Interpretation;
use crate::slow::{NoiseScaling, DEFAULT_GRID_DT};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid TOML config: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("invalid JSON config: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Invalid(String),
}

pub const PRESETS: &[(&str, &str)] = &[
    ("paper-sec6", include_str!("../presets/paper-sec6.toml")),
    ("paper-fig1", include_str!("../presets/paper-fig1.toml")),
    ("paper-fig2", include_str!("../presets/paper-fig2.toml")),
    ("paper-fig3", include_str!("../presets/paper-fig3.toml")),
    ("levy", include_str!("../presets/levy.toml")),
];

fn default_realizations() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_realizations")]
    pub realizations: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    pub map: FastMap,
    #[serde(default = "default_observable")]
    pub observable: Observable,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slow: Option<SlowSection>,
    #[serde(default)]
    pub ensemble: EnsembleSection,
    #[serde(default)]
    pub sigma: SigmaSection,
    #[serde(default)]
    pub sde: SdeSection,
    #[serde(default)]
    pub cir: CirSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levy: Option<LevySection>,
}

fn default_observable() -> Observable {
    Observable::Identity
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlowSection {
    pub xi: f64,
    pub epsilons: Vec<f64>,
    #[serde(default)]
    pub h: Multiplier,
    #[serde(default)]
    pub f: SlowDrift,
    #[serde(default)]
    pub scaling: NoiseScaling,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSection {
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_grid_dt")]
    pub grid_dt: f64,
    #[serde(default)]
    pub initial: FastInitial,
    #[serde(default = "default_bins")]
    pub bins: usize,
    #[serde(default)]
    pub moment_times: Vec<f64>,
    /// Write every path to `paths.csv` (small runs only).
    #[serde(default)]
    pub keep_paths: bool,
}

fn default_horizon() -> f64 {
    10.0
}
fn default_grid_dt() -> f64 {
    DEFAULT_GRID_DT
}
fn default_bins() -> usize {
    200
}

impl Default for EnsembleSection {
    fn default() -> Self {
        Self {
            horizon: default_horizon(),
            grid_dt: default_grid_dt(),
            initial: FastInitial::default(),
            bins: default_bins(),
            moment_times: Vec::new(),
            keep_paths: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SigmaSection {
    #[serde(default = "default_orbit_length")]
    pub orbit_length: usize,
    #[serde(default = "default_lag")]
    pub lag_cutoff: usize,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    #[serde(default = "default_block_length")]
    pub block_length: usize,
    #[serde(default = "default_blocks")]
    pub blocks: usize,
    #[serde(default = "default_true")]
    pub centered: bool,
}

fn default_orbit_length() -> usize {
    10_000_000
}
fn default_lag() -> usize {
    crate::covariance::DEFAULT_LAG_CUTOFF
}
fn default_burn_in() -> usize {
    DEFAULT_BURN_IN
}
fn default_block_length() -> usize {
    10_000
}
fn default_blocks() -> usize {
    1000
}
fn default_true() -> bool {
    true
}

impl Default for SigmaSection {
    fn default() -> Self {
        Self {
            orbit_length: default_orbit_length(),
            lag_cutoff: default_lag(),
            burn_in: default_burn_in(),
            block_length: default_block_length(),
            blocks: default_blocks(),
            centered: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SdeSection {
    #[serde(default)]
    pub interpretations: Vec<Interpretation>,
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Limit variance; estimated by Green-Kubo when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma2: Option<f64>,
    /// `int f0^2 dmu`; estimated from the orbit when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f0_second_moment: Option<f64>,
    /// `int y^k dmu` used to average `f = (a + b x) y^k`; estimated when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y_moment: Option<f64>,
    /// Overrides the top-level realization count for SDE ensembles.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub realizations: Option<usize>,
}

fn default_dt() -> f64 {
    crate::sde::DEFAULT_DT
}

impl Default for SdeSection {
    fn default() -> Self {
        Self {
            interpretations: Vec::new(),
            dt: default_dt(),
            sigma2: None,
            f0_second_moment: None,
            y_moment: None,
            realizations: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CirSection {
    /// Add the exact CIR law when the limit is a CIR process.
    #[serde(default = "default_true")]
    pub enabled: bool,
    /// Spacing of exact transitions for moment curves.
    #[serde(default = "default_cir_dt")]
    pub grid_dt: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub realizations: Option<usize>,
}

fn default_cir_dt() -> f64 {
    1.0
}

impl Default for CirSection {
    fn default() -> Self {
        Self {
            enabled: true,
            grid_dt: 1.0,
            realizations: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevySection {
    pub noise: StableNoiseSpec,
    /// Step of the Marcus integrator.
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Run the Marcus SDE ensemble alongside the map ensemble.
    #[serde(default = "default_true")]
    pub marcus: bool,
    /// Direct draws from the stable sampler for its own tail fit (0 disables).
    #[serde(default)]
    pub stable_samples: usize,
    #[serde(default = "default_stable_tail")]
    pub stable_tail: [f64; 2],
    /// Fit window for `|x(T)|` of the map and Marcus ensembles.
    #[serde(default = "default_path_tail")]
    pub path_tail: [f64; 2],
    /// Fast-map iterates scanned for laminar excursion sizes (0 disables).
    #[serde(default)]
    pub excursion_length: usize,
    #[serde(default = "default_excursion_tail")]
    pub excursion_tail: [f64; 2],
    #[serde(default = "default_tail_points")]
    pub tail_points: usize,
}

fn default_stable_tail() -> [f64; 2] {
    [10.0, 1000.0]
}
fn default_path_tail() -> [f64; 2] {
    [0.3, 1.5]
}
fn default_excursion_tail() -> [f64; 2] {
    [10.0, 10_000.0]
}
fn default_tail_points() -> usize {
    12
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn preset(name: &str) -> Option<Result<Self, ConfigError>> {
        PRESETS
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, text)| Self::from_toml(text))
    }

    /// Loads a preset name, a TOML file, or a `run.json` written by a previous run.
    pub fn load(arg: &str) -> Result<Self, ConfigError> {
        if let Some(c) = Self::preset(arg) {
            return c;
        }
        let path = Path::new(arg);
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if path.extension().is_some_and(|e| e == "json") || text.trim_start().starts_with('{') {
            #[derive(Deserialize)]
            struct Echo {
                config: RunConfig,
            }
            let echo: Echo = serde_json::from_str(&text)?;
            return Ok(echo.config);
        }
        Self::from_toml(&text)
    }

    pub fn slow(&self) -> Result<&SlowSection, ConfigError> {
        self.slow
            .as_ref()
            .ok_or_else(|| ConfigError::Invalid("config needs a [slow] section".into()))
    }

    pub fn levy(&self) -> Result<&LevySection, ConfigError> {
        self.levy
            .as_ref()
            .ok_or_else(|| ConfigError::Invalid("config needs a [levy] section".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_parse() {
        for (name, _) in PRESETS {
            let c = RunConfig::preset(name)
                .unwrap()
                .unwrap_or_else(|e| panic!("{name}: {e}"));
            let back = RunConfig::from_toml(&toml::to_string(&c).unwrap()).unwrap();
            assert_eq!(back, c, "{name}");
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let base = "[map]\nkind = \"doubling\"\n";
        assert!(RunConfig::from_toml(base).is_ok());
        assert!(RunConfig::from_toml(&format!("{base}bogus = 1\n")).is_err());
        assert!(RunConfig::from_toml("seeed = 1\n[map]\nkind = \"doubling\"\n").is_err());
        assert!(
            RunConfig::from_toml(&format!("{base}[ensemble]\nhorizon = 1.0\nbin = 3\n")).is_err()
        );
        assert!(
            RunConfig::from_toml("[map]\nkind = \"pomeau-manneville\"\ngamma = 1.5\n").is_err()
        );
    }

    #[test]
    fn json_echo_round_trip() {
        let c = RunConfig::preset("paper-fig1").unwrap().unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.json");
        std::fs::write(
            &p,
            serde_json::to_string(&serde_json::json!({ "config": c, "ks": [] })).unwrap(),
        )
        .unwrap();
        assert_eq!(RunConfig::load(p.to_str().unwrap()).unwrap(), c);
    }

    #[test]
    fn missing_file_is_an_error() {
        assert!(matches!(
            RunConfig::load("/nonexistent/x.toml"),
            Err(ConfigError::Io { .. })
        ));
    }
}
