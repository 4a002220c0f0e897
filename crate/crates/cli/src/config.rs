//! Run configuration: a TOML or JSON file whose values command-line flags
//! override.

use std::collections::BTreeMap;
use std::path::Path;

use optproxy::cases;
use optproxy::dual::DualConfig;
use optproxy::grid::Network;
use optproxy::instance::{DatasetConfig, ProblemKind, SamplerConfig};
use optproxy::models::{EdModel, Penalties};
use optproxy::pdl::PdlConfig;
use optproxy::primal::TrainConfig;
use optproxy::risk::{with_line_limit, ScenarioConfig, Thresholds};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub n_instances: usize,
    pub split: [f64; 3],
    pub seed: u64,
    pub problem: ProblemKind,
    /// Defaults depend on `problem` when absent.
    pub sampler: Option<SamplerConfig>,
    pub labels: bool,
}

impl Default for DataSection {
    fn default() -> Self {
        let d = DatasetConfig::default();
        Self {
            n_instances: d.n_instances,
            split: d.split,
            seed: d.seed,
            problem: d.problem,
            sampler: None,
            labels: true,
        }
    }
}

/// Sampler used for `problem` unless one is configured.
pub fn default_sampler(problem: ProblemKind) -> SamplerConfig {
    match problem {
        ProblemKind::Ed => SamplerConfig::default(),
        ProblemKind::Dcopf => SamplerConfig::loads_only(),
        ProblemKind::Scopf => SamplerConfig::scopf(),
    }
}

impl DataSection {
    pub fn dataset_config(&self) -> DatasetConfig {
        DatasetConfig {
            n_instances: self.n_instances,
            split: self.split,
            seed: self.seed,
            problem: self.problem,
            sampler: self.sampler.clone().unwrap_or_else(|| default_sampler(self.problem)),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RiskSection {
    pub scenarios: ScenarioConfig,
    pub thresholds: Thresholds,
    /// Also run the oracle when a proxy model is the engine.
    pub oracle: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Bundled case name or grid file path.
    pub network: Option<String>,
    /// Line limits replaced before any model is built, by line id.
    pub line_limits: BTreeMap<String, f64>,
    pub penalties: Penalties,
    pub dataset: DataSection,
    pub train: TrainConfig,
    pub dual: DualConfig,
    pub pdl: PdlConfig,
    pub risk: RiskSection,
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let origin = path.display();
        if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{origin}: {e}")))
        } else {
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{origin}: {e}")))
        }
    }

    pub fn load_or_default(path: Option<&Path>) -> CliResult<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    /// Grid with the configured line limits applied.
    pub fn network(&self) -> CliResult<Network> {
        let name = self
            .network
            .as_deref()
            .ok_or_else(|| CliError::Config("no network: pass --network or set `network` in the config".into()))?;
        if cases::by_name(name).is_none() && !std::path::Path::new(name).is_file() {
            return Err(CliError::Config(format!(
                "unknown network {name:?}: use case3, case30, scopf3 or a grid file"
            )));
        }
        let mut net = cases::resolve(name)?;
        for (id, &f_max) in &self.line_limits {
            net = with_line_limit(&net, id, f_max)?;
        }
        Ok(net)
    }

    pub fn ed_model(&self) -> CliResult<EdModel> {
        Ok(EdModel::with_penalties(self.network()?, self.penalties)?)
    }
}

/// Parse `id=value` line-limit overrides.
pub fn parse_line_limit(s: &str) -> Result<(String, f64), String> {
    let (id, v) = s.split_once('=').ok_or_else(|| format!("expected id=value, got {s:?}"))?;
    let v: f64 = v.trim().parse().map_err(|e| format!("{s:?}: {e}"))?;
    Ok((id.trim().to_string(), v))
}
