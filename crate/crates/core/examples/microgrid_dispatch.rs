//! Nine-bus microgrid: optimal dispatch, line flows and frequency recovery
//! after the loads switch on.
use phnet::microgrid::{build, dispatch, GridConfig};
use phnet::network::ReducedState;
use phnet::sim::{integrate, IntegratorConfig};

fn main() -> phnet::error::Result<()> {
    let grid = GridConfig::nine_bus();
    let d = dispatch(&grid)?;
    println!("marginal cost λ = {:.6}", d.lambda);
    for u in &d.u_bar {
        println!("  bus {}: {:.6}", u.bus, u.value);
    }
    for f in &d.line_flows {
        println!("  line {}-{}: flow {:+.4} ({:.0}% of capacity)", f.from, f.to, f.flow, 100.0 * f.loading);
    }

    let (spec, ctrl) = build(&grid)?;
    let s0 = ReducedState {
        eta: nalgebra::DVector::zeros(spec.eta_len()),
        x1: nalgebra::DVector::zeros(spec.x1_len()),
        xi: ctrl.xi0().clone(),
    };
    let traj = integrate(&spec, &ctrl, &s0, &IntegratorConfig::dp45(80.0).with_stride(50))?;
    for k in (0..traj.len()).step_by((traj.len() / 8).max(1)) {
        let max_freq = (0..spec.num_nodes()).map(|i| traj.output(k, i)[0].abs()).fold(0.0, f64::max);
        println!("t = {:6.2}: max |ω| = {:.2e}", traj.times[k], max_freq);
    }
    Ok(())
}
