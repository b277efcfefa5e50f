//! Scenario files: a network plus everything needed to analyse it.

use std::path::{Path, PathBuf};

use nnreach::graph::Network;
use nnreach::reach::{Propagator, Template, TemplatePreset};
use nnreach::relax::IntervalBound;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FrameworkChoice {
    Recursive,
    OneShot,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TemplateSpec {
    Preset(TemplatePreset),
    Directions(Vec<Vec<f64>>),
}

impl TemplateSpec {
    pub fn build(&self, n: usize) -> Result<Template, CliError> {
        match self {
            TemplateSpec::Preset(p) => Ok(Template::preset(*p, n)),
            TemplateSpec::Directions(d) => {
                let t = Template::custom(d.clone()).map_err(|e| CliError::field("template", e))?;
                if t.dim() != n {
                    return Err(CliError::field("template", format!("directions have length {}, state has {n}", t.dim())));
                }
                Ok(t)
            }
        }
    }
}

fn default_samples() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    /// Network file, relative to the scenario file.
    pub network: PathBuf,
    pub x0: IntervalBound,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w: Option<IntervalBound>,
    pub horizon: usize,
    pub framework: FrameworkChoice,
    pub propagator: Propagator,
    pub template: TemplateSpec,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub avoid: Vec<IntervalBound>,
    #[serde(default)]
    pub seed: u64,
    /// Sampled trajectories used for the soundness audit and plot data.
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

fn check_box(field: &str, b: &IntervalBound, n: usize) -> Result<(), CliError> {
    if b.lo.len() != b.hi.len() {
        return Err(CliError::field(field, "lo and hi differ in length"));
    }
    if b.dim() != n {
        return Err(CliError::field(field, format!("has dimension {}, expected {n}", b.dim())));
    }
    if b.lo.iter().zip(&b.hi).any(|(l, h)| !(l <= h) || !l.is_finite() || !h.is_finite()) {
        return Err(CliError::field(field, "needs finite bounds with lo <= hi"));
    }
    Ok(())
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Scenario(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text)
    }

    /// Check every field that can be checked without the network.
    pub fn validate_shape(&self) -> Result<(), CliError> {
        if self.horizon == 0 {
            return Err(CliError::field("horizon", "must be at least 1"));
        }
        if !(self.propagator.bnb_time_limit_s > 0.0) {
            return Err(CliError::field("propagator.bnb_time_limit_s", "must be positive"));
        }
        if self.samples == 0 {
            return Err(CliError::field("samples", "must be at least 1"));
        }
        Ok(())
    }

    /// Check the sets against a loaded network.
    pub fn validate(&self, net: &Network) -> Result<(), CliError> {
        self.validate_shape()?;
        check_box("x0", &self.x0, net.state_dim)?;
        match (&self.w, net.disturbance_dim) {
            (None, 0) => {}
            (None, d) => return Err(CliError::field("w", format!("missing; network has {d} disturbance inputs"))),
            (Some(w), d) => check_box("w", w, d)?,
        }
        for (i, a) in self.avoid.iter().enumerate() {
            check_box(&format!("avoid[{i}]"), a, net.state_dim)?;
        }
        self.template.build(net.state_dim)?;
        Ok(())
    }

    /// Load and validate the scenario's network, resolving its path against
    /// the scenario file's directory.
    pub fn load_network(&self, scenario_dir: &Path) -> Result<Network, CliError> {
        let path = scenario_dir.join(&self.network);
        let net = Network::load(&path).map_err(|e| CliError::field("network", e))?;
        self.validate(&net)?;
        Ok(net)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"{
        "network": "net.json",
        "x0": {"lo": [0.0, 0.0], "hi": [1.0, 1.0]},
        "horizon": 2,
        "framework": "both",
        "propagator": {"method": "lp"},
        "template": "octagon",
        "avoid": [{"lo": [5.0, 5.0], "hi": [6.0, 6.0]}]
    }"#;

    #[test]
    fn parse_roundtrip() {
        let s = Scenario::from_json(SAMPLE).unwrap();
        assert_eq!(s.samples, 1000);
        assert_eq!(s.template, TemplateSpec::Preset(TemplatePreset::Octagon));
        let again = Scenario::from_json(&s.to_json()).unwrap();
        assert_eq!(again, s);
        assert_eq!(again.to_json(), s.to_json());
    }

    #[test]
    fn explicit_directions() {
        let s = Scenario::from_json(&SAMPLE.replace("\"octagon\"", "[[1.0, 0.0], [0.0, -2.0]]")).unwrap();
        let t = s.template.build(2).unwrap();
        assert_eq!(t.directions[1], vec![0.0, -1.0]);
        assert!(s.template.build(3).is_err());
    }

    #[test]
    fn errors_name_the_field() {
        let e = Scenario::from_json(&SAMPLE.replace("\"horizon\": 2", "\"horizn\": 2")).unwrap_err();
        assert!(e.to_string().contains("horizn"), "{e}");
        let e = Scenario::from_json(&SAMPLE.replace("\"lp\"", "\"simplex\"")).unwrap_err();
        assert!(e.to_string().contains("simplex"), "{e}");
        let s = Scenario::from_json(&SAMPLE.replace("\"horizon\": 2", "\"horizon\": 0")).unwrap();
        assert!(s.validate_shape().unwrap_err().to_string().contains("horizon"));
    }
}
