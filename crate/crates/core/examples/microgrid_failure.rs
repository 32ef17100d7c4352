//! A generator whose input sticks at a constant: the remaining buses
//! re-dispatch and the frequency still recovers.
use phnet::microgrid::{build, dispatch, inject_failure, GridConfig};
use phnet::network::ReducedState;
use phnet::sim::{integrate, Equilibrium, IntegratorConfig};

fn main() -> phnet::error::Result<()> {
    let nominal = GridConfig::nine_bus();
    let failed = inject_failure(&nominal, &[1], &[0.2])?;
    let before = dispatch(&nominal)?;
    let after = dispatch(&failed)?;
    println!("λ before {:.6}, after {:.6}", before.lambda, after.lambda);

    // Start at the nominal optimum, carrying over the working controllers.
    let (spec0, ctrl0) = build(&nominal)?;
    let (eq0, _) = Equilibrium::compute(&spec0, &ctrl0, None)?;
    let (spec, ctrl) = build(&failed)?;
    let xi = eq0.state.xi.rows(1, ctrl.state_len()).into_owned();
    let s0 = ReducedState { eta: eq0.state.eta.clone(), x1: eq0.state.x1.clone(), xi };
    let traj = integrate(&spec, &ctrl, &s0, &IntegratorConfig::dp45(80.0))?;
    let last = traj.len() - 1;
    let max_freq = (0..spec.num_nodes()).map(|i| traj.output(last, i)[0].abs()).fold(0.0, f64::max);
    println!("terminal max |ω| = {max_freq:.2e}");
    for u in &after.u_bar {
        println!("  bus {}: input {:.6} (dispatch {:.6})", u.bus, traj.input(last, u.bus - 1)[0], u.value);
    }
    Ok(())
}
