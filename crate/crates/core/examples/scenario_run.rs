//! Runs every experiment listed in a scenario file and prints the summaries.
//!
//! `cargo run --example scenario_run -- scenarios/nine_bus.json [OUT_DIR]`
use std::path::PathBuf;

use phnet::scenario::{run_experiments, summarize, RunOptions, Scenario};

fn main() -> phnet::error::Result<()> {
    let mut args = std::env::args().skip(1);
    let path = args.next().map_or_else(
        || PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios/nine_bus.json"),
        PathBuf::from,
    );
    let opts = RunOptions { out_dir: args.next().map(PathBuf::from), ..Default::default() };
    let sc = Scenario::load(&path)?;
    for r in run_experiments(&sc, &opts) {
        println!("{}", summarize(&r));
    }
    Ok(())
}
