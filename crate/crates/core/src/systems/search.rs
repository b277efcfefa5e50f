use std::ops::Range;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{random_nnds, Activation, ScenarioFixture, SystemsError};
use crate::graph::{CompGraph, Network};
use crate::reach::{one_shot_reach, recursive_reach, Method, Propagator, ReachResult, Template, TemplatePreset};
use crate::relax::IntervalBound;

/// The family of random systems the search draws from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeSpace {
    pub state_dims: Vec<usize>,
    pub disturbance_dims: Vec<usize>,
    pub hidden: Vec<Vec<usize>>,
    pub activations: Vec<Activation>,
    /// Half-widths of the initial box are drawn from this range.
    pub radius: (f64, f64),
    pub disturbance_radius: f64,
    pub horizon: usize,
    /// Relative width excess that counts as a counterexample.
    pub threshold: f64,
}

impl Default for ShapeSpace {
    fn default() -> Self {
        Self {
            state_dims: vec![1, 2, 3],
            disturbance_dims: vec![0],
            hidden: vec![vec![4], vec![8], vec![6, 6]],
            activations: vec![Activation::Relu, Activation::Tanh],
            radius: (0.1, 1.0),
            disturbance_radius: 0.05,
            horizon: 2,
            threshold: 0.01,
        }
    }
}

/// One drawn system with its sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub seed: u64,
    pub n_x: usize,
    pub n_w: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub x0: IntervalBound,
    pub w: Option<IntervalBound>,
}

impl ShapeSpace {
    pub fn instance(&self, seed: u64) -> Instance {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        let n_x = *self.state_dims.choose(&mut rng).expect("state dims");
        let n_w = *self.disturbance_dims.choose(&mut rng).expect("disturbance dims");
        let hidden = self.hidden.choose(&mut rng).expect("hidden widths").clone();
        let activation = *self.activations.choose(&mut rng).expect("activations");
        let (lo, hi): (Vec<f64>, Vec<f64>) = (0..n_x)
            .map(|_| {
                let c = rng.gen_range(-1.0..=1.0);
                let r = rng.gen_range(self.radius.0..=self.radius.1);
                (c - r, c + r)
            })
            .unzip();
        let w = (n_w > 0).then(|| {
            let r = self.disturbance_radius;
            IntervalBound { lo: vec![-r; n_w], hi: vec![r; n_w] }
        });
        Instance { seed, n_x, n_w, hidden, activation, x0: IntervalBound { lo, hi }, w }
    }
}

impl Instance {
    pub fn graph(&self) -> CompGraph {
        let mut widths = self.hidden.clone();
        widths.push(self.n_x);
        random_nnds(self.seed, self.n_x, self.n_w, &widths, self.activation)
    }

    pub fn run(&self, p: &Propagator, horizon: usize) -> Result<(ReachResult, ReachResult), SystemsError> {
        let g = self.graph();
        let t = Template::boxed(self.n_x);
        let rec = recursive_reach(p, &g, &self.x0, self.w.as_ref(), horizon, &t)?;
        let one = one_shot_reach(p, &g, &self.x0, self.w.as_ref(), horizon, &t)?;
        Ok((rec, one))
    }
}

/// Largest relative box-width excess of `one` over `rec`, with its step
/// and coordinate.
pub fn width_excess(rec: &ReachResult, one: &ReachResult) -> Result<(f64, usize, usize), SystemsError> {
    let (wr, wo) = (rec.widths()?, one.widths()?);
    let mut best = (f64::NEG_INFINITY, 0, 0);
    for (t, (a, b)) in wr.iter().zip(&wo).enumerate().skip(1) {
        for (i, (&r, &o)) in a.iter().zip(b).enumerate() {
            let rel = (o - r) / r.max(1e-12);
            if rel > best.0 {
                best = (rel, t, i);
            }
        }
    }
    Ok(best)
}

/// A system on which forward propagation gives a looser one-shot box than
/// the recursive one.
#[derive(Debug, Clone, PartialEq)]
pub struct Counterexample {
    pub instance: Instance,
    pub horizon: usize,
    /// `(one-shot width - recursive width) / recursive width`.
    pub gap: f64,
    pub step: usize,
    pub coord: usize,
    pub recursive: ReachResult,
    pub one_shot: ReachResult,
    pub tried: u64,
}

impl Counterexample {
    pub fn network(&self) -> Network {
        let mut net = Network::from_graph(self.instance.graph()).expect("generated graph is a system");
        net.meta = Some(serde_json::json!({
            "generator": "random_nnds",
            "seed": self.instance.seed,
            "hidden": self.instance.hidden,
            "activation": self.instance.activation,
            "forward_lin_gap": self.gap,
        }));
        net
    }

    pub fn fixture(&self, name: &str, network_file: &str) -> ScenarioFixture {
        ScenarioFixture {
            name: name.into(),
            network: network_file.into(),
            x0: self.instance.x0.clone(),
            w: self.instance.w.clone(),
            horizon: self.horizon,
            template: TemplatePreset::Box,
            note: format!(
                "forward_lin one-shot box width exceeds recursive by {:.2}% at t={}, x{}",
                100.0 * self.gap,
                self.step,
                self.coord + 1
            ),
        }
    }
}

/// Scan `seeds` in order for the first instance whose forward one-shot box
/// is wider than the recursive one by more than `space.threshold`.
pub fn counterexample_search(seeds: Range<u64>, space: &ShapeSpace) -> Result<Counterexample, SystemsError> {
    let p = Propagator::new(Method::ForwardLin);
    let mut tried = 0;
    for seed in seeds {
        tried += 1;
        let inst = space.instance(seed);
        let (rec, one) = inst.run(&p, space.horizon)?;
        let (gap, step, coord) = width_excess(&rec, &one)?;
        if gap > space.threshold {
            log::info!("counterexample at seed {seed}: {:.3}% at t={step}", 100.0 * gap);
            return Ok(Counterexample {
                instance: inst,
                horizon: space.horizon,
                gap,
                step,
                coord,
                recursive: rec,
                one_shot: one,
                tried,
            });
        }
    }
    Err(SystemsError::SearchExhausted { tried })
}
