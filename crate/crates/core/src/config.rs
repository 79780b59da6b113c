//! Experiment configuration, read from TOML.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::demogen::DemoGenConfig;
use crate::dynamics::SystemSpec;
use crate::error::{Error, Result};
use crate::gridmdp::{ActionSet, GridSpec, HypothesisSet, Region};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    /// Built-in system: `pendulum` or `tip`.
    pub name: String,
    /// Gravity in m/s².
    pub g: Option<f64>,
    /// Pendulum length in m (pendulum only).
    pub l: Option<f64>,
    /// Bound overrides keyed by state or control label.
    #[serde(default)]
    pub bounds: BTreeMap<String, (f64, f64)>,
}

impl Default for SystemConfig {
    fn default() -> Self {
        SystemConfig {
            name: "pendulum".into(),
            g: None,
            l: None,
            bounds: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HypothesisConfig {
    /// State labels the hypothesis boxes constrain; other dims are wildcards.
    pub dims: Vec<String>,
    pub counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthConfig {
    pub name: String,
    /// Box bounds keyed by state label. Empty means the named pendulum preset (`C1`, `C2`).
    #[serde(default)]
    pub bounds: BTreeMap<String, (f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DemoSource {
    Generate,
    Ingest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DemoConfig {
    pub source: DemoSource,
    /// CSV file to read when `source = "ingest"`.
    pub path: Option<PathBuf>,
    /// Use at most this many accepted demonstrations (all when absent).
    pub count: Option<usize>,
    /// Goal state labels; empty means all.
    pub goal_dims: Vec<String>,
    #[serde(flatten)]
    pub generator: DemoGenConfig,
}

impl Default for DemoConfig {
    fn default() -> Self {
        DemoConfig {
            source: DemoSource::Generate,
            path: None,
            count: None,
            goal_dims: Vec::new(),
            generator: DemoGenConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AccuracyConfig {
    /// Total cell counts; each is split evenly over the state dims (must be a perfect power).
    pub cells: Vec<usize>,
    pub dts: Vec<f64>,
    pub pairs: usize,
    /// Policy rollouts per pair.
    pub rollouts: usize,
}

impl Default for AccuracyConfig {
    fn default() -> Self {
        AccuracyConfig {
            cells: vec![100, 400, 900, 1600],
            dts: vec![0.05, 0.1, 0.2],
            pairs: 100,
            rollouts: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RankingConfig {
    pub max_demos: usize,
    pub shuffles: usize,
}

impl Default for RankingConfig {
    fn default() -> Self {
        RankingConfig {
            max_demos: 9,
            shuffles: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistanceConfig {
    pub cells: Vec<usize>,
    pub dts: Vec<f64>,
    /// Single-demo trials per truth constraint (all usable demos when absent).
    pub trials: Option<usize>,
}

impl Default for DistanceConfig {
    fn default() -> Self {
        DistanceConfig {
            cells: vec![100, 400],
            dts: vec![0.1],
            trials: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemConfig,
    /// Cells per state dim.
    pub cells: Vec<usize>,
    /// Action levels per control dim.
    pub action_levels: Vec<usize>,
    /// MDP transition interval Δt in seconds.
    pub dt: f64,
    /// Demonstration horizon T̃ in seconds.
    pub horizon: f64,
    pub substeps: usize,
    pub hypotheses: HypothesisConfig,
    pub truth: Vec<TruthConfig>,
    pub demos: DemoConfig,
    pub seed: u64,
    pub prior: f64,
    pub top_k: usize,
    pub output: PathBuf,
    pub accuracy: AccuracyConfig,
    pub ranking: RankingConfig,
    pub distance: DistanceConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            system: SystemConfig::default(),
            cells: vec![20, 20],
            action_levels: vec![9],
            dt: 0.1,
            horizon: 5.0,
            substeps: 20,
            hypotheses: HypothesisConfig {
                dims: vec!["theta".into(), "theta_dot".into()],
                counts: vec![10, 10],
            },
            truth: vec![
                TruthConfig {
                    name: "C1".into(),
                    bounds: BTreeMap::new(),
                },
                TruthConfig {
                    name: "C2".into(),
                    bounds: BTreeMap::new(),
                },
            ],
            demos: DemoConfig::default(),
            seed: 0,
            prior: 0.5,
            top_k: 5,
            output: PathBuf::from("out"),
            accuracy: AccuracyConfig::default(),
            ranking: RankingConfig::default(),
            distance: DistanceConfig::default(),
        }
    }
}

/// Pendulum ground-truth presets.
pub fn preset_region(name: &str) -> Option<Region> {
    match name {
        "C1" => Some(Region::from_dims(2, &[(0, PI, 1.2 * PI), (1, 0.0, 1.2)])),
        "C2" => Some(Region::from_dims(2, &[(0, 1.6 * PI, 1.8 * PI), (1, 0.0, 1.2)])),
        _ => None,
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.system()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Short content hash of the resolved configuration.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        hex::encode(&digest[..8])
    }

    pub fn system(&self) -> Result<SystemSpec> {
        let mut sys = SystemSpec::by_name(&self.system.name)?;
        match &mut sys.field {
            crate::dynamics::VectorField::Pendulum { g, l } => {
                if let Some(v) = self.system.g {
                    *g = v;
                }
                if let Some(v) = self.system.l {
                    *l = v;
                }
            }
            crate::dynamics::VectorField::Tip { g } => {
                if let Some(v) = self.system.g {
                    *g = v;
                }
                if self.system.l.is_some() {
                    return Err(Error::Config("the tip system has no fixed length parameter".into()));
                }
            }
        }
        for (label, &(lo, hi)) in &self.system.bounds {
            if let Some(d) = sys.state_dims.iter_mut().find(|d| &d.label == label) {
                d.lower = lo;
                d.upper = hi;
            } else if let Some(d) = sys.control_dims.iter_mut().find(|d| &d.label == label) {
                d.lower = lo;
                d.upper = hi;
            } else {
                return Err(Error::Config(format!("unknown dimension '{label}'")));
            }
        }
        sys.validate()?;
        Ok(sys)
    }

    pub fn dim_indices(&self, system: &SystemSpec, labels: &[String]) -> Result<Vec<usize>> {
        labels
            .iter()
            .map(|l| {
                system
                    .dim_index(l)
                    .ok_or_else(|| Error::Config(format!("unknown state dimension '{l}'")))
            })
            .collect()
    }

    pub fn grid(&self, system: &SystemSpec) -> Result<GridSpec> {
        GridSpec::from_system(system, &self.cells)
    }

    /// Grid with `total` cells split evenly over the state dims.
    pub fn grid_with_total(&self, system: &SystemSpec, total: usize) -> Result<GridSpec> {
        let n = system.state_len() as u32;
        let per = (total as f64).powf(1.0 / n as f64).round() as usize;
        if per.pow(n) != total {
            return Err(Error::Config(format!(
                "{total} cells cannot be split evenly over {n} dims"
            )));
        }
        GridSpec::from_system(system, &vec![per; n as usize])
    }

    pub fn actions(&self, system: &SystemSpec) -> Result<ActionSet> {
        ActionSet::evenly_spaced(system, &self.action_levels)
    }

    pub fn hypotheses(&self, system: &SystemSpec) -> Result<HypothesisSet> {
        let dims = self.dim_indices(system, &self.hypotheses.dims)?;
        HypothesisSet::grid(system, &dims, &self.hypotheses.counts)
    }

    pub fn truth_regions(&self, system: &SystemSpec) -> Result<Vec<(String, Region)>> {
        self.truth
            .iter()
            .map(|t| {
                let region = if t.bounds.is_empty() {
                    if system.name != "pendulum" {
                        return Err(Error::Config(format!("truth '{}' needs explicit bounds", t.name)));
                    }
                    preset_region(&t.name).ok_or_else(|| Error::Config(format!("unknown preset '{}'", t.name)))?
                } else {
                    let mut dims = Vec::new();
                    for (label, &(lo, hi)) in &t.bounds {
                        let i = system
                            .dim_index(label)
                            .ok_or_else(|| Error::Config(format!("unknown state dimension '{label}'")))?;
                        if !(lo < hi) {
                            return Err(Error::Config(format!(
                                "truth '{}': empty interval on '{label}'",
                                t.name
                            )));
                        }
                        dims.push((i, lo, hi));
                    }
                    Region::from_dims(system.state_len(), &dims)
                };
                Ok((t.name.clone(), region))
            })
            .collect()
    }

    /// Demo generator settings with goal dims resolved and the horizon taken from the
    /// experiment.
    pub fn demo_generator(&self, system: &SystemSpec) -> Result<DemoGenConfig> {
        let mut g = self.demos.generator.clone();
        g.goal_dims = self.goal_dims(system)?;
        g.horizon = self.horizon;
        Ok(g)
    }

    pub fn goal_dims(&self, system: &SystemSpec) -> Result<Vec<usize>> {
        if self.demos.goal_dims.is_empty() {
            Ok(system.all_dims())
        } else {
            self.dim_indices(system, &self.demos.goal_dims)
        }
    }
}

/// Deterministic sub-seed for a named stage of an experiment.
pub fn sub_seed(seed: u64, tag: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(tag.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}
