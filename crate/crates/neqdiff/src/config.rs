//! Experiment configuration: a versioned TOML schema with defaults.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Validate,
    Simulate,
    EntropyBrownian,
    EntropyLangevin,
    BoundTheorem1,
    BoundTheorem3,
    Jarzynski,
    ZeroVariance,
    ReversalTest,
    OmegaOpt,
    OmegaScaling,
    All,
}

impl Experiment {
    /// Every experiment that `all` expands to.
    pub const SUITE: [Experiment; 11] = [
        Experiment::Validate,
        Experiment::Simulate,
        Experiment::EntropyBrownian,
        Experiment::EntropyLangevin,
        Experiment::BoundTheorem1,
        Experiment::BoundTheorem3,
        Experiment::Jarzynski,
        Experiment::ZeroVariance,
        Experiment::ReversalTest,
        Experiment::OmegaOpt,
        Experiment::OmegaScaling,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Validate => "validate",
            Experiment::Simulate => "simulate",
            Experiment::EntropyBrownian => "entropy-brownian",
            Experiment::EntropyLangevin => "entropy-langevin",
            Experiment::BoundTheorem1 => "bound-theorem1",
            Experiment::BoundTheorem3 => "bound-theorem3",
            Experiment::Jarzynski => "jarzynski",
            Experiment::ZeroVariance => "zero-variance",
            Experiment::ReversalTest => "reversal-test",
            Experiment::OmegaOpt => "omega-opt",
            Experiment::OmegaScaling => "omega-scaling",
            Experiment::All => "all",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::SUITE
            .iter()
            .chain(std::iter::once(&Experiment::All))
            .copied()
            .find(|e| e.name() == s)
            .ok_or_else(|| format!("unknown experiment `{s}`"))
    }
}

/// Parameters of the model family shared by the experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelParams {
    pub beta: f64,
    pub horizon: f64,
    /// Stiffness of the quadratic potential at `s = 0` and at `s = T`.
    pub stiffness_start: f64,
    pub stiffness_end: f64,
    pub friction: f64,
    /// Peak of `a(s) = amplitude · sin(πs)` in the tanh-perturbed potential.
    pub tanh_amplitude: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self { beta: 1.0, horizon: 1.0, stiffness_start: 1.0, stiffness_end: 2.0, friction: 1.0, tanh_amplitude: 0.3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonteCarloParams {
    /// Paths of the free-energy and normalization ensembles.
    pub paths: usize,
    /// Paths of each ensemble in the law-equivalence test.
    pub equivalence_paths: usize,
    pub dt: f64,
}

impl Default for MonteCarloParams {
    fn default() -> Self {
        Self { paths: 100_000, equivalence_paths: 20_000, dt: 1e-3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridParams {
    pub cells: usize,
    pub q_cells: usize,
    pub p_cells: usize,
    pub dt: f64,
}

impl Default for GridParams {
    fn default() -> Self {
        Self { cells: 800, q_cells: 96, p_cells: 96, dt: 1e-3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub seed: u64,
    pub quick: bool,
    pub jobs: usize,
    pub out: PathBuf,
    pub model: ModelParams,
    pub monte_carlo: MonteCarloParams,
    pub grid: GridParams,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            seed: 1,
            quick: false,
            jobs: 1,
            out: PathBuf::from("runs"),
            model: ModelParams::default(),
            monte_carlo: MonteCarloParams::default(),
            grid: GridParams::default(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid configuration:\n{}", .0.join("\n"))]
    Schema(Vec<String>),
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_owned(), source })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Schema diagnostics, one per offending field.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut errs = Vec::new();
        if self.schema_version != SCHEMA_VERSION {
            errs.push(format!("schema_version: expected {SCHEMA_VERSION}, found {}", self.schema_version));
        }
        let positive = [
            ("model.beta", self.model.beta),
            ("model.horizon", self.model.horizon),
            ("model.stiffness_start", self.model.stiffness_start),
            ("model.stiffness_end", self.model.stiffness_end),
            ("model.friction", self.model.friction),
            ("monte_carlo.dt", self.monte_carlo.dt),
            ("grid.dt", self.grid.dt),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                errs.push(format!("{name}: must be positive and finite, found {v}"));
            }
        }
        if !(self.model.tanh_amplitude.abs() < 3.0 * 3f64.sqrt() / 4.0) {
            errs.push(format!(
                "model.tanh_amplitude: |a| must stay below 3√3/4 for a convex potential, found {}",
                self.model.tanh_amplitude
            ));
        }
        for (name, v) in [("monte_carlo.dt", self.monte_carlo.dt), ("grid.dt", self.grid.dt)] {
            let k = (self.model.horizon / v).round();
            if v > 0.0 && (k < 1.0 || (k * v - self.model.horizon).abs() > 1e-9 * self.model.horizon) {
                errs.push(format!("{name}: must divide model.horizon = {}", self.model.horizon));
            }
        }
        for (name, v, min) in [
            ("monte_carlo.paths", self.monte_carlo.paths, 100),
            ("monte_carlo.equivalence_paths", self.monte_carlo.equivalence_paths, 100),
            ("grid.cells", self.grid.cells, 50),
            ("grid.q_cells", self.grid.q_cells, 16),
            ("grid.p_cells", self.grid.p_cells, 16),
            ("jobs", self.jobs, 1),
        ] {
            if v < min {
                errs.push(format!("{name}: must be at least {min}, found {v}"));
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Schema(errs))
        }
    }

    /// Reduced sample sizes and kinetic grid; the same checks run.
    pub fn quick(mut self) -> Self {
        self.quick = true;
        self.monte_carlo.paths = 20_000;
        self.monte_carlo.equivalence_paths = 5_000;
        self.grid.q_cells = 64;
        self.grid.p_cells = 64;
        self
    }

    /// SHA-256 of the configuration, excluding the output directory and job count.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.out = PathBuf::new();
        canonical.jobs = 1;
        let bytes = serde_json::to_vec(&canonical).expect("config serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = ExperimentConfig::default();
        assert_eq!(ExperimentConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn partial_files_take_defaults() {
        let cfg = ExperimentConfig::from_toml("schema_version = 1\nseed = 7\n[model]\nbeta = 2.0\n").unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.model.beta, 2.0);
        assert_eq!(cfg.model.horizon, 1.0);
    }

    #[test]
    fn schema_errors_name_every_field() {
        let e = ExperimentConfig::from_toml("schema_version = 2\n[model]\nbeta = -1.0\n[monte_carlo]\ndt = 0.3\n")
            .unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("schema_version"), "{msg}");
        assert!(msg.contains("model.beta"), "{msg}");
        assert!(msg.contains("monte_carlo.dt"), "{msg}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(ExperimentConfig::from_toml("colour = 3\n"), Err(ConfigError::Parse(_))));
    }

    #[test]
    fn hash_ignores_output_location() {
        let a = ExperimentConfig::default();
        let b = ExperimentConfig { out: PathBuf::from("/elsewhere"), jobs: 4, ..a.clone() };
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), ExperimentConfig { seed: 2, ..a }.hash());
    }

    #[test]
    fn experiment_names_parse() {
        for e in Experiment::SUITE {
            assert_eq!(e.name().parse::<Experiment>().unwrap(), e);
        }
        assert!("nope".parse::<Experiment>().is_err());
    }
}
