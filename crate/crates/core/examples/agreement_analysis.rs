//! Uncontrolled network: the agreement value, its steady state and a
//! simulation from a perturbed start.
use std::path::Path;

use phnet::control::ControllerSpec;
use phnet::scenario::Scenario;
use phnet::sim::{integrate, lyapunov_series, Equilibrium, IntegratorConfig};
use phnet::steadystate::agreement_output;

fn main() -> phnet::error::Result<()> {
    let sc = Scenario::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/ring_agreement.json"))?;
    let model = sc.build()?;
    let spec = &model.spec;
    println!("agreement output: {}", agreement_output(spec)?[0]);

    let ctrl = ControllerSpec::none(spec);
    let (eq, report) = Equilibrium::compute(spec, &ctrl, None)?;
    println!("feasible: {}, line angles: {:?}", report.feasible, report.eta_bar);

    let mut s0 = eq.state.clone();
    s0.x1[0] += 0.2;
    let traj = integrate(spec, &ctrl, &s0, &IntegratorConfig::dp45(30.0))?;
    let mon = lyapunov_series(&traj, spec, &ctrl, &eq, Some((1e-6, 3.0)));
    let last = traj.len() - 1;
    println!(
        "t = {}: output spread {:.2e}, V {:.3e} → {:.3e} (monotone: {}), settled at {:?}",
        traj.times[last],
        traj.output_spread(last),
        mon.v_initial,
        mon.v_final,
        mon.v_monotone,
        mon.settle_time
    );
    Ok(())
}
