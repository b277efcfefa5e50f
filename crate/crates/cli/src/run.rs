use std::path::{Path, PathBuf};

use nnreach::graph::Network;
use nnreach::reach::{check_avoid, one_shot_reach, recursive_reach, Framework, ReachResult, Verdict};
use nnreach::systems::{sample_trajectories, soundness_audit};
use serde::Serialize;

use crate::output::{create_dir, write_boxes, write_comparison, write_text, write_trajectories};
use crate::scenario::{FrameworkChoice, Scenario};
use crate::CliError;

/// Largest tolerated template violation by a sampled trajectory.
pub const SOUNDNESS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Safe,
    Unknown,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Safe => 0,
            Outcome::Unknown => 2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub results: Vec<ReachResult>,
    /// Per step, safe when any framework certifies it.
    pub verdicts: Option<Vec<Verdict>>,
    /// Worst trajectory violation over all steps and frameworks.
    pub max_violation: f64,
    pub files: Vec<PathBuf>,
    pub outcome: Outcome,
}

impl RunReport {
    pub fn result(&self, f: Framework) -> Option<&ReachResult> {
        self.results.iter().find(|r| r.framework == f)
    }
}

#[derive(Serialize)]
struct VerdictFile<'a> {
    combined: &'a [Verdict],
    per_framework: Vec<(&'static str, Vec<Verdict>)>,
}

/// Run a validated scenario on its network and write results under `out`.
pub fn run_scenario(s: &Scenario, net: &Network, out: &Path) -> Result<RunReport, CliError> {
    s.validate(net)?;
    create_dir(out)?;
    let f = &net.graph;
    let template = s.template.build(net.state_dim)?;
    let frameworks: &[Framework] = match s.framework {
        FrameworkChoice::Recursive => &[Framework::Recursive],
        FrameworkChoice::OneShot => &[Framework::OneShot],
        FrameworkChoice::Both => &[Framework::Recursive, Framework::OneShot],
    };
    let mut results = Vec::new();
    let mut files = Vec::new();
    for &fw in frameworks {
        log::info!("running {} with {:?}", fw.name(), s.propagator.method);
        let r = match fw {
            Framework::Recursive => recursive_reach(&s.propagator, f, &s.x0, s.w.as_ref(), s.horizon, &template)?,
            Framework::OneShot => one_shot_reach(&s.propagator, f, &s.x0, s.w.as_ref(), s.horizon, &template)?,
        };
        files.push(write_text(&out.join(format!("{}.json", fw.name())), &r.to_json()?)?);
        results.push(r);
    }

    let batch = sample_trajectories(f, &s.x0, s.w.as_ref(), s.horizon, s.samples, s.seed)?;
    let mut max_violation = f64::NEG_INFINITY;
    for r in &results {
        for (t, v) in soundness_audit(r, &batch)?.into_iter().enumerate() {
            if v > SOUNDNESS_TOL {
                return Err(CliError::Unsound { framework: r.framework.name(), t, violation: v });
            }
            max_violation = max_violation.max(v);
        }
    }
    let refs: Vec<&ReachResult> = results.iter().collect();
    files.push(write_trajectories(&out.join("trajectories.csv"), &batch)?);
    files.push(write_boxes(&out.join("boxes.csv"), &refs)?);
    files.push(write_comparison(&out.join("comparison.csv"), &refs)?);

    let mut verdicts = None;
    let mut outcome = Outcome::Safe;
    if !s.avoid.is_empty() {
        let per: Vec<(&'static str, Vec<Verdict>)> = results
            .iter()
            .map(|r| Ok((r.framework.name(), check_avoid(r, &s.avoid)?)))
            .collect::<Result<_, CliError>>()?;
        let combined: Vec<Verdict> = (0..=s.horizon)
            .map(|t| if per.iter().any(|(_, v)| v[t] == Verdict::Safe) { Verdict::Safe } else { Verdict::Unknown })
            .collect();
        if combined.contains(&Verdict::Unknown) {
            outcome = Outcome::Unknown;
        }
        let text = serde_json::to_string_pretty(&VerdictFile { combined: &combined, per_framework: per })
            .expect("verdicts serialize");
        files.push(write_text(&out.join("verdicts.json"), &text)?);
        verdicts = Some(combined);
    }
    Ok(RunReport { results, verdicts, max_violation, files, outcome })
}

/// Load a scenario file and run it. Results go to `out`, else the
/// scenario's `output` (relative to the scenario file), else `./out`.
pub fn run_file(path: &Path, out: Option<&Path>) -> Result<RunReport, CliError> {
    let s = Scenario::load(path)?;
    s.validate_shape()?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let net = s.load_network(dir)?;
    let out = match (out, &s.output) {
        (Some(o), _) => o.to_path_buf(),
        (None, Some(o)) => dir.join(o),
        (None, None) => PathBuf::from("out"),
    };
    run_scenario(&s, &net, &out)
}

/// One line per step and framework for the terminal.
pub fn summary(report: &RunReport) -> String {
    let mut lines = Vec::new();
    for r in &report.results {
        for s in &r.steps {
            let widths = s.polytope.widths().unwrap_or_default();
            let w: Vec<String> = widths.iter().map(|w| format!("{w:.4}")).collect();
            let v = report.verdicts.as_ref().map_or(String::new(), |v| format!(" {:?}", v[s.t]).to_lowercase());
            lines.push(format!(
                "{:>9} t={:<3} widths=[{}] {:.1} ms {:?}{}",
                r.framework.name(),
                s.t,
                w.join(", "),
                s.wall_ms,
                s.status,
                v
            ));
        }
    }
    lines.push(format!("max trajectory violation {:.3e}", report.max_violation));
    lines.join("\n")
}
