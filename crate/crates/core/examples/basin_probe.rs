//! Fraction of random starts at a given distance that converge.
use phnet::microgrid::{build, GridConfig};
use phnet::sim::{basin_probe, Equilibrium, IntegratorConfig};

fn main() -> phnet::error::Result<()> {
    let (spec, ctrl) = build(&GridConfig::nine_bus())?;
    let (eq, _) = Equilibrium::compute(&spec, &ctrl, None)?;
    let cfg = IntegratorConfig::dp45(60.0);
    for radius in [0.1, 0.5, 1.0] {
        let p = basin_probe(&spec, &ctrl, &eq, radius, 16, &cfg, 42, 1e-4)?;
        println!("radius {radius}: {}/{} settled", p.successes, p.trials);
    }
    Ok(())
}
