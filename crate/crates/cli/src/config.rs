//! Declarative experiment description read from a TOML file.

use std::fmt;
use std::path::PathBuf;

use elastic_pinn::beam::BeamSpec;
use elastic_pinn::collocation::Fractions;
use elastic_pinn::elasticity::{MaterialParams, PlaneMode};
use elastic_pinn::loss::{LossWeights, PlateMode};
use elastic_pinn::plate::PlateSpec;
use elastic_pinn::trainer::TrainConfig;
use elastic_pinn::{ActivationKind, NetworkSpec};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemKind {
    Beam,
    Plate,
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProblemKind::Beam => "beam",
            ProblemKind::Plate => "plate",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BeamSection {
    pub length: f64,
    pub half_height: f64,
    pub thickness: f64,
    pub load: f64,
    pub youngs_modulus: f64,
    pub poisson_ratio: f64,
    pub plane_mode: PlaneMode,
}

impl Default for BeamSection {
    fn default() -> Self {
        let s = BeamSpec::default();
        BeamSection {
            length: s.length,
            half_height: s.half_height,
            thickness: s.thickness,
            load: s.load,
            youngs_modulus: s.material.e,
            poisson_ratio: s.material.nu,
            plane_mode: s.material.mode,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlateSection {
    pub a: f64,
    pub b: f64,
    pub thickness: f64,
    pub q0: f64,
    pub rigidity: f64,
    pub youngs_modulus: f64,
    pub poisson_ratio: f64,
    pub residual_mode: PlateMode,
}

impl Default for PlateSection {
    fn default() -> Self {
        let s = PlateSpec::default();
        PlateSection {
            a: s.a,
            b: s.b,
            thickness: s.thickness,
            q0: s.q0,
            rigidity: s.rigidity,
            youngs_modulus: s.material.e,
            poisson_ratio: s.material.nu,
            residual_mode: PlateMode::Auto,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkSection {
    pub hidden_width: usize,
    pub hidden_layers: usize,
    pub activation: ActivationKind,
    pub init_seed: u64,
}

impl Default for NetworkSection {
    fn default() -> Self {
        NetworkSection { hidden_width: 20, hidden_layers: 5, activation: ActivationKind::Tanh, init_seed: 1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CollocationSection {
    pub total: usize,
    pub seed: u64,
    pub interior: f64,
    /// One fraction per boundary segment, in the benchmark's segment order.
    pub segments: Vec<f64>,
}

impl Default for CollocationSection {
    fn default() -> Self {
        let f = Fractions::default();
        CollocationSection { total: 5000, seed: 1, interior: f.interior, segments: f.segments }
    }
}

impl CollocationSection {
    pub fn fractions(&self) -> Fractions {
        Fractions { interior: self.interior, segments: self.segments.clone() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub grid_resolution: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection { grid_resolution: 100 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WarmStartSection {
    /// Size of the enlarged collocation set; the original points are kept.
    pub total: usize,
    pub epochs: usize,
    /// Seed for the added points.
    pub seed: u64,
}

impl Default for WarmStartSection {
    fn default() -> Self {
        WarmStartSection { total: 15_000, epochs: 250, seed: 2 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemKind,
    #[serde(default = "default_label")]
    pub label: String,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub beam: BeamSection,
    #[serde(default)]
    pub plate: PlateSection,
    #[serde(default)]
    pub network: NetworkSection,
    #[serde(default)]
    pub loss: LossWeights,
    #[serde(default)]
    pub collocation: CollocationSection,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub warm_start: WarmStartSection,
}

fn default_label() -> String {
    "run".into()
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Keys whose default depends on the benchmark, with the plate value.
const PLATE_DEFAULTS: [(&str, &str, u64); 5] = [
    ("network", "hidden_width", 40),
    ("network", "hidden_layers", 10),
    ("collocation", "total", 10_000),
    ("train", "epochs", 1000),
    ("train", "batch_size", 50),
];

/// A configuration problem, anchored to a line of the source when one can be found.
#[derive(Debug)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

/// Command-line overrides applied after parsing.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub epochs: Option<usize>,
    pub out_dir: Option<PathBuf>,
    pub deterministic: bool,
}

pub struct Loaded {
    pub config: ExperimentConfig,
    pub source: String,
}

impl Loaded {
    fn error(&self, section: &str, key: &str, message: impl Into<String>) -> ConfigError {
        ConfigError {
            line: locate(&self.source, section, key),
            message: format!("{section}.{key}: {}", message.into()),
        }
    }
}

/// 1-based line of `key = ...` inside `[section]` (top level when `section` is empty).
pub fn locate(source: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    for (n, raw) in source.lines().enumerate() {
        let line = raw.trim();
        if let Some(rest) = line.strip_prefix('[') {
            current = rest.trim_end_matches(']').trim().to_string();
            continue;
        }
        if current == section {
            if let Some((k, _)) = line.split_once('=') {
                if k.trim() == key {
                    return Some(n + 1);
                }
            }
        }
    }
    None
}

fn line_of(source: &str, offset: usize) -> usize {
    source[..offset.min(source.len())].bytes().filter(|b| *b == b'\n').count() + 1
}

pub fn parse(source: &str) -> Result<ExperimentConfig, ConfigError> {
    let mut config: ExperimentConfig = toml::from_str(source).map_err(|e| ConfigError {
        line: e.span().map(|s| line_of(source, s.start)),
        message: e.message().trim().to_string(),
    })?;
    if config.problem == ProblemKind::Plate {
        let table: toml::Table =
            toml::from_str(source).map_err(|e| ConfigError { line: None, message: e.to_string() })?;
        for (section, key, value) in PLATE_DEFAULTS {
            let present = table.get(section).and_then(|s| s.get(key)).is_some();
            if !present {
                match (section, key) {
                    ("network", "hidden_width") => config.network.hidden_width = value as usize,
                    ("network", "hidden_layers") => config.network.hidden_layers = value as usize,
                    ("collocation", "total") => config.collocation.total = value as usize,
                    ("train", "epochs") => config.train.epochs = value as usize,
                    ("train", "batch_size") => config.train.batch_size = value as usize,
                    _ => unreachable!(),
                }
            }
        }
    }
    Ok(config)
}

pub fn load(path: &std::path::Path, overrides: &Overrides) -> Result<Loaded, ConfigError> {
    let source = std::fs::read_to_string(path)
        .map_err(|e| ConfigError { line: None, message: format!("cannot read {}: {e}", path.display()) })?;
    let mut config = parse(&source)?;
    if let Some(seed) = overrides.seed {
        config.train.seed = seed;
        config.network.init_seed = seed;
        config.collocation.seed = seed;
    }
    if let Some(epochs) = overrides.epochs {
        config.train.epochs = epochs;
    }
    if let Some(dir) = &overrides.out_dir {
        config.out_dir = dir.clone();
    }
    if overrides.deterministic {
        config.train.deterministic_reduction = true;
    }
    let loaded = Loaded { config, source };
    loaded.validate()?;
    Ok(loaded)
}

impl Loaded {
    /// Every check that can fail before training starts.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let c = &self.config;
        if c.label.is_empty() || c.label.contains(['/', '\\']) {
            return Err(self.error("", "label", "must be a non-empty name without path separators"));
        }
        self.network_spec().validate().map_err(|e| self.error("network", "hidden_width", e.to_string()))?;
        c.loss.validate().map_err(|e| self.error("loss", "", e.to_string()))?;
        let domain = match c.problem {
            ProblemKind::Beam => self.beam_spec()?.domain(),
            ProblemKind::Plate => self.plate_spec()?.domain(),
        };
        let fr = c.collocation.fractions();
        fr.validate(domain.segments.len()).map_err(|e| self.error("collocation", "segments", e.to_string()))?;
        if c.collocation.total == 0 {
            return Err(self.error("collocation", "total", "must be positive"));
        }
        c.train.validate(c.collocation.total).map_err(|e| self.error("train", "batch_size", e.to_string()))?;
        if c.eval.grid_resolution < 2 {
            return Err(self.error("eval", "grid_resolution", "must be at least 2"));
        }
        if c.warm_start.total < c.collocation.total {
            return Err(self.error("warm_start", "total", "must not be smaller than collocation.total"));
        }
        Ok(())
    }

    pub fn network_spec(&self) -> NetworkSpec {
        let n = &self.config.network;
        NetworkSpec::new(n.hidden_width, n.hidden_layers, n.activation, n.init_seed)
    }

    pub fn beam_spec(&self) -> Result<BeamSpec, ConfigError> {
        let s = &self.config.beam;
        let material = MaterialParams::new(s.youngs_modulus, s.poisson_ratio, s.plane_mode)
            .map_err(|e| self.error("beam", "poisson_ratio", e.to_string()))?;
        let spec =
            BeamSpec { length: s.length, half_height: s.half_height, thickness: s.thickness, load: s.load, material };
        spec.validate().map_err(|e| self.error("beam", "", e.to_string()))?;
        Ok(spec)
    }

    pub fn plate_spec(&self) -> Result<PlateSpec, ConfigError> {
        let s = &self.config.plate;
        let material = MaterialParams::new(s.youngs_modulus, s.poisson_ratio, PlaneMode::PlaneStress)
            .map_err(|e| self.error("plate", "poisson_ratio", e.to_string()))?;
        let spec = PlateSpec { a: s.a, b: s.b, thickness: s.thickness, q0: s.q0, rigidity: s.rigidity, material };
        spec.validate().map_err(|e| self.error("plate", "", e.to_string()))?;
        Ok(spec)
    }

    pub fn config_error(&self, section: &str, key: &str, message: impl Into<String>) -> ConfigError {
        self.error(section, key, message)
    }
}
