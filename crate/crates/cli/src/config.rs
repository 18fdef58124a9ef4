use std::path::{Path, PathBuf};

use idbounds::error::{Error, Result};
use idbounds::model::{DiscreteDistribution, ModelSpec};
use idbounds::models::entry::{
    build_entry_model, simulate_entry_data, CfCase, CfTarget, EntryGameConfig, MomentVariant, Selection, ShockLaw,
};
use idbounds::models::interval::{build_interval_model, simulate_interval_data, IntervalRegConfig, NoiseLaw};
use idbounds::models::location::{build_location_model, location_data, LocationConfig};
use idbounds::support::CriterionOptions;
use serde::Deserialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelConfig {
    Interval(IntervalRegConfig),
    Entry(EntryGameConfig),
    Location(LocationConfig),
    /// Recognized so the error can name the scope boundary.
    Production(#[allow(dead_code)] serde::de::IgnoredAny),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Csv(PathBuf),
    Simulate(SimulateConfig),
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    /// Observations; defaults to one full stratum cycle of the model.
    pub n: Option<usize>,
    pub seed: u64,
    /// Data-generating parameter; defaults to the model's own values.
    pub theta0: Option<Vec<f64>>,
    pub noise: NoiseLaw,
    pub shock_law: ShockLaw,
    pub selection: Option<Selection>,
    /// Support points of the complete location model.
    pub points: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CounterfactualConfig {
    pub case: CfCase,
    pub target: CfTarget,
    /// Baseline points; defaults to the LP member set on the parameter grid.
    #[serde(default)]
    pub thetas: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub max_thetas: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReduceConfig {
    /// Extra simulation seeds added to the distribution family.
    pub family_seeds: Vec<u64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub data: DataSource,
    #[serde(default)]
    pub truncations: Vec<f64>,
    #[serde(default)]
    pub criterion: CriterionOptions,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Explicit parameter points instead of the model's grid.
    #[serde(default)]
    pub thetas: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub counterfactual: Option<CounterfactualConfig>,
    #[serde(default)]
    pub reduce: ReduceConfig,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("idtool-out")
}

pub struct Loaded {
    pub config: RunConfig,
    pub hash: String,
    pub base_dir: PathBuf,
}

pub fn load(path: &Path) -> Result<Loaded> {
    let bytes = std::fs::read(path)?;
    let hash = hex::encode(Sha256::digest(&bytes));
    let de = &mut serde_json::Deserializer::from_slice(&bytes);
    let config: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let at = e.path().to_string();
        Error::Config(format!("at `{at}`: {}", e.inner()))
    })?;
    if let ModelConfig::Production(_) = config.model {
        return Err(Error::NotSupported(
            "the production-function model and its quantile counterfactuals are outside this tool's scope".into(),
        ));
    }
    if config.truncations.iter().any(|m| !(*m > 0.0) || !m.is_finite()) {
        return Err(Error::Config("truncations must be positive".into()));
    }
    Ok(Loaded {
        config,
        hash,
        base_dir: path.parent().map(Path::to_path_buf).unwrap_or_default(),
    })
}

impl RunConfig {
    pub fn build_model(&self) -> Result<ModelSpec> {
        match &self.model {
            ModelConfig::Interval(c) => build_interval_model(c),
            ModelConfig::Entry(c) => build_entry_model(c),
            ModelConfig::Location(c) => build_location_model(c),
            ModelConfig::Production(_) => Err(Error::NotSupported("production-function model".into())),
        }
    }

    pub fn theta_names(&self, dim: usize) -> Vec<String> {
        match &self.model {
            ModelConfig::Interval(_) => vec!["alpha".into(), "beta".into()],
            ModelConfig::Location(_) => vec!["mean".into(), "second_moment".into()],
            ModelConfig::Entry(c) => {
                let mut v: Vec<String> = (0..c.k()).map(|i| format!("alpha_{i}")).collect();
                v.extend((0..c.n_firms).map(|j| format!("delta_{j}")));
                if c.variant == MomentVariant::UncorrVariance {
                    v.extend((0..c.n_firms).map(|j| format!("tau_{j}")));
                }
                v
            }
            ModelConfig::Production(_) => (0..dim).map(|i| format!("theta_{i}")).collect(),
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match &self.data {
            DataSource::Simulate(s) => Some(s.seed),
            DataSource::Csv(_) => None,
        }
    }

    pub fn load_data(&self, base_dir: &Path) -> Result<DiscreteDistribution> {
        match &self.data {
            DataSource::Csv(p) => {
                let p = if p.is_absolute() { p.clone() } else { base_dir.join(p) };
                idbounds::io::read_distribution_csv(std::fs::File::open(&p)?)
            }
            DataSource::Simulate(s) => self.simulate(s, s.seed),
        }
    }

    pub fn simulate(&self, s: &SimulateConfig, seed: u64) -> Result<DiscreteDistribution> {
        match &self.model {
            ModelConfig::Interval(c) => {
                let theta0 = s.theta0.clone().unwrap_or_else(|| vec![0.5, 0.25]);
                simulate_interval_data(c, &theta0, s.n.unwrap_or(300), &s.noise, seed)
            }
            ModelConfig::Entry(c) => {
                let theta0 = s.theta0.clone().unwrap_or_else(|| c.theta0());
                let combos = match &s.shock_law {
                    ShockLaw::Discrete(v) => c.x_support.len() * v.len().pow(c.n_firms as u32),
                    _ => 100,
                };
                // a random selection rule draws from the run seed
                let selection = match s.selection {
                    Some(Selection::Random(_)) => Selection::Random(seed),
                    Some(sel) => sel,
                    None => Selection::FirstLex,
                };
                simulate_entry_data(c, &theta0, s.n.unwrap_or(combos), selection, &s.shock_law)
            }
            ModelConfig::Location(_) => {
                let pts = if s.points.is_empty() { vec![0.0, 1.0] } else { s.points.clone() };
                location_data(&pts)
            }
            ModelConfig::Production(_) => Err(Error::NotSupported("production-function model".into())),
        }
    }

    pub fn entry_config(&self) -> Result<&EntryGameConfig> {
        match &self.model {
            ModelConfig::Entry(c) => Ok(c),
            _ => Err(Error::NotSupported("counterfactuals are shipped for the entry game only".into())),
        }
    }
}
