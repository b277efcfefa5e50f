use std::path::Path;

use serde::{Deserialize, Serialize};

use super::SystemsError;
use crate::graph::Network;
use crate::reach::TemplatePreset;
use crate::relax::IntervalBound;

/// A benchmark scenario: a network file plus the sets and horizon it is
/// analysed with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioFixture {
    pub name: String,
    /// Network file, relative to the manifest.
    pub network: String,
    pub x0: IntervalBound,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w: Option<IntervalBound>,
    pub horizon: usize,
    pub template: TemplatePreset,
    #[serde(default)]
    pub note: String,
}

impl ScenarioFixture {
    /// Check the sets against the network's state and disturbance sizes.
    pub fn validate(&self, net: &Network) -> Result<(), SystemsError> {
        if self.x0.dim() != net.state_dim {
            return Err(SystemsError::Dimension { what: "initial set", expected: net.state_dim, got: self.x0.dim() });
        }
        let w = self.w.as_ref().map_or(0, IntervalBound::dim);
        if w != net.disturbance_dim {
            return Err(SystemsError::Dimension { what: "disturbance set", expected: net.disturbance_dim, got: w });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub scenarios: Vec<ScenarioFixture>,
}

impl Manifest {
    pub fn from_json(text: &str) -> Result<Self, SystemsError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn get(&self, name: &str) -> Option<&ScenarioFixture> {
        self.scenarios.iter().find(|s| s.name == name)
    }

    /// Load a scenario's network from disk, resolving its path against
    /// `dir`, and validate the scenario against it.
    pub fn load(&self, name: &str, dir: impl AsRef<Path>) -> Result<(ScenarioFixture, Network), SystemsError> {
        let s = self.get(name).ok_or_else(|| SystemsError::UnknownFixture(name.into()))?;
        let net = Network::load(dir.as_ref().join(&s.network))?;
        s.validate(&net)?;
        Ok((s.clone(), net))
    }
}

const MANIFEST: &str = include_str!("../../fixtures/manifest.json");

const NETWORKS: [(&str, &str); 4] = [
    ("rayleigh_duffing.json", include_str!("../../fixtures/rayleigh_duffing.json")),
    ("cartpole_feedforward.json", include_str!("../../fixtures/cartpole_feedforward.json")),
    ("cartpole_residual.json", include_str!("../../fixtures/cartpole_residual.json")),
    ("counterexample_forward.json", include_str!("../../fixtures/counterexample_forward.json")),
];

/// Names of the scenarios compiled into the library.
pub const BUILTIN_NAMES: [&str; 4] = ["rayleigh-duffing", "cartpole-feedforward", "cartpole-residual", "counterexample-forward"];

pub fn builtin_manifest() -> Manifest {
    Manifest::from_json(MANIFEST).expect("embedded manifest parses")
}

/// A compiled-in scenario and its network.
pub fn builtin_fixture(name: &str) -> Result<(ScenarioFixture, Network), SystemsError> {
    let m = builtin_manifest();
    let s = m.get(name).ok_or_else(|| SystemsError::UnknownFixture(name.into()))?;
    let (_, text) = NETWORKS
        .iter()
        .find(|(file, _)| *file == s.network)
        .ok_or_else(|| SystemsError::UnknownFixture(s.network.clone()))?;
    let net = Network::from_json(text)?;
    s.validate(&net)?;
    Ok((s.clone(), net))
}
