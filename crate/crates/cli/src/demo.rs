//! Canned scenario matrices over the built-in fixtures.

use std::path::Path;

use nnreach::graph::Network;
use nnreach::reach::{compare_tightness, Framework, Method, Propagator, ReachResult, TemplatePreset, CONTAINMENT_TOL};
use nnreach::systems::{builtin_fixture, counterexample_search, Manifest, ScenarioFixture, ShapeSpace, SystemsError};
use serde_json::json;

use crate::output::{create_dir, write_text};
use crate::run::{run_scenario, Outcome, RunReport};
use crate::scenario::{FrameworkChoice, Scenario, TemplateSpec};
use crate::CliError;

pub const DEMOS: [&str; 4] = ["counterexample-forward", "duffing-lp-templates", "cartpole-feedforward", "cartpole-residual"];

/// Seeds scanned by the counterexample demo.
pub const SEARCH_SEEDS: u64 = 10_000;

#[derive(Debug, Clone)]
pub struct DemoReport {
    pub runs: Vec<(String, RunReport)>,
    pub notes: Vec<String>,
    pub outcome: Outcome,
}

fn scenario(fx: &ScenarioFixture, method: Method, template: TemplatePreset) -> Scenario {
    Scenario {
        network: "network.json".into(),
        x0: fx.x0.clone(),
        w: fx.w.clone(),
        horizon: fx.horizon,
        framework: FrameworkChoice::Both,
        propagator: Propagator::new(method),
        template: TemplateSpec::Preset(template),
        avoid: Vec::new(),
        seed: 0,
        samples: 1000,
        output: None,
    }
}

/// Write the network and scenario next to the results, then run.
fn run_in(dir: &Path, s: &Scenario, net: &Network) -> Result<RunReport, CliError> {
    create_dir(dir)?;
    net.save(dir.join("network.json")).map_err(|e| CliError::field("network", e))?;
    write_text(&dir.join("scenario.json"), &s.to_json())?;
    run_scenario(s, net, dir)
}

fn frameworks(r: &RunReport) -> (&ReachResult, &ReachResult) {
    (r.result(Framework::Recursive).expect("recursive run"), r.result(Framework::OneShot).expect("one-shot run"))
}

/// Smallest support gap one-shot minus recursive over all steps, and
/// whether one-shot is contained in recursive at every step.
fn ordering(r: &RunReport) -> Result<(f64, bool), CliError> {
    let (rec, one) = frameworks(r);
    let cmp = compare_tightness(one, rec)?;
    let min = cmp.iter().map(|c| c.min_gap()).fold(f64::INFINITY, f64::min);
    Ok((min, cmp.iter().all(|c| c.a_in_b)))
}

pub fn demo(name: &str, out: &Path) -> Result<DemoReport, CliError> {
    create_dir(out)?;
    match name {
        "counterexample-forward" => counterexample(out),
        "duffing-lp-templates" => duffing(out),
        "cartpole-feedforward" => single(out, "cartpole-feedforward", Method::Lp),
        "cartpole-residual" => single(out, "cartpole-residual", Method::BackwardLin),
        other => Err(CliError::UnknownDemo(other.into())),
    }
}

fn single(out: &Path, fixture: &str, method: Method) -> Result<DemoReport, CliError> {
    let (fx, net) = builtin_fixture(fixture)?;
    let s = scenario(&fx, method, fx.template);
    let r = run_in(out, &s, &net)?;
    let (gap, contained) = ordering(&r)?;
    let notes = vec![format!(
        "{fixture}: {:?}, T={}; one-shot inside recursive at every step: {contained} (min support gap {gap:.3e})",
        method, fx.horizon
    )];
    Ok(DemoReport { runs: vec![(fixture.into(), r)], notes, outcome: Outcome::Safe })
}

fn duffing(out: &Path) -> Result<DemoReport, CliError> {
    let (fx, net) = builtin_fixture("rayleigh-duffing")?;
    let boxed = run_in(&out.join("box"), &scenario(&fx, Method::Lp, TemplatePreset::Box), &net)?;
    let oct = run_in(&out.join("octagon"), &scenario(&fx, Method::Lp, TemplatePreset::Octagon), &net)?;
    let (rb, ob) = frameworks(&boxed);
    let (ro, oo) = frameworks(&oct);
    let mut rows = Vec::new();
    let mut tighter = true;
    for t in 0..rb.steps.len() {
        let dirs = &rb.steps[t].polytope.template;
        let rec_oct = ro.steps[t].polytope.project(dirs)?;
        let one_oct = oo.steps[t].polytope.project(dirs)?;
        let rec_box = &rb.steps[t].polytope.support;
        let one_box = &ob.steps[t].polytope.support;
        let gain = rec_oct.iter().zip(rec_box).map(|(a, b)| a - b).fold(f64::INFINITY, f64::min);
        let gap = |one: &[f64], rec: &[f64]| one.iter().zip(rec).map(|(a, b)| a - b).fold(0.0, f64::max);
        let (gb, go) = (gap(one_box, rec_box), gap(&one_oct, &rec_oct));
        tighter &= gain >= -CONTAINMENT_TOL && go <= gb + CONTAINMENT_TOL;
        rows.push(json!({"t": t, "octagon_minus_box_recursive": gain, "gap_box": gb, "gap_octagon": go}));
    }
    write_text(&out.join("templates.json"), &serde_json::to_string_pretty(&rows).expect("rows serialize"))?;
    let notes = vec![format!(
        "rayleigh-duffing LP, T={}: octagon recursive at least as tight as box and gap no larger at every step: {tighter}",
        fx.horizon
    )];
    Ok(DemoReport { runs: vec![("box".into(), boxed), ("octagon".into(), oct)], notes, outcome: Outcome::Safe })
}

fn counterexample(out: &Path) -> Result<DemoReport, CliError> {
    let cx = match counterexample_search(0..SEARCH_SEEDS, &ShapeSpace::default()) {
        Ok(cx) => cx,
        Err(SystemsError::SearchExhausted { tried }) => {
            let report = json!({"status": "exhausted", "seeds": tried});
            write_text(&out.join("gap_report.json"), &report.to_string())?;
            let notes = vec![format!("search exhausted after {tried} seeds; no forward counterexample found")];
            return Ok(DemoReport { runs: Vec::new(), notes, outcome: Outcome::Unknown });
        }
        Err(e) => return Err(e.into()),
    };
    let net = cx.network();
    let fx = cx.fixture("counterexample-forward", "network.json");
    net.save(out.join("network.json")).map_err(|e| CliError::field("network", e))?;
    write_text(&out.join("manifest.json"), &Manifest { scenarios: vec![fx.clone()] }.to_json())?;
    let fwd = run_in(&out.join("forward_lin"), &scenario(&fx, Method::ForwardLin, TemplatePreset::Box), &net)?;
    let lp = run_in(&out.join("lp"), &scenario(&fx, Method::Lp, TemplatePreset::Box), &net)?;
    let (lp_gap, lp_ok) = ordering(&lp)?;
    let report = json!({
        "status": "found",
        "seed": cx.instance.seed,
        "seeds_tried": cx.tried,
        "forward_lin_width_excess": cx.gap,
        "step": cx.step,
        "coordinate": cx.coord + 1,
        "lp_min_support_gap": lp_gap,
        "lp_one_shot_inside_recursive": lp_ok,
    });
    write_text(&out.join("gap_report.json"), &serde_json::to_string_pretty(&report).expect("report serializes"))?;
    let notes = vec![
        format!(
            "seed {}: forward_lin one-shot box {:.2}% wider than recursive at t={}, x{}",
            cx.instance.seed,
            100.0 * cx.gap,
            cx.step,
            cx.coord + 1
        ),
        format!("same instance under lp: one-shot inside recursive {lp_ok} (min support gap {lp_gap:.3e})"),
    ];
    Ok(DemoReport { runs: vec![("forward_lin".into(), fwd), ("lp".into(), lp)], notes, outcome: Outcome::Safe })
}
