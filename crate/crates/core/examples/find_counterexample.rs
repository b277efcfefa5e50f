//! Search for a system where forward one-shot bounds are looser than
//! recursive ones and write it as a fixture.
//!
//! `cargo run --release --example find_counterexample -- <out_dir>`

use nnreach::systems::{counterexample_search, ShapeSpace};

fn main() {
    let dir = std::env::args().nth(1).unwrap_or_else(|| ".".into());
    let cx = match counterexample_search(0..10_000, &ShapeSpace::default()) {
        Ok(cx) => cx,
        Err(e) => {
            eprintln!("{e}");
            std::process::exit(2);
        }
    };
    println!("seed {} after {} tries: gap {:.3}% at t={} x{}", cx.instance.seed, cx.tried, 100.0 * cx.gap, cx.step, cx.coord + 1);
    let file = "counterexample_forward.json";
    cx.network().save(format!("{dir}/{file}")).expect("write network");
    let fx = cx.fixture("counterexample-forward", file);
    println!("{}", serde_json::to_string(&fx).expect("fixture serializes"));
}
