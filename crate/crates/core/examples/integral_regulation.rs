//! Integral control regulating every output to a prescribed value.
use nalgebra::dvector;
use phnet::control::ControllerSpec;
use phnet::graph::{Graph, NodeClass};
use phnet::network::{EdgeBank, NetworkSpec, NodeSpec};
use phnet::sim::{integrate, settle, Equilibrium, IntegratorConfig};

fn main() -> phnet::error::Result<()> {
    let nodes = vec![
        NodeSpec::scalar(NodeClass::C11, 1.0, 1.0, 0.3)?,
        NodeSpec::scalar(NodeClass::C12, 0.8, 2.0, -0.1)?,
        NodeSpec::scalar(NodeClass::C21, 1.5, 1.0, 0.2)?,
        NodeSpec::scalar(NodeClass::C22, 1.2, 0.5, -0.5)?,
    ];
    let spec = NetworkSpec::new(Graph::cycle(4)?, nodes, EdgeBank::uniform_cosine(4, 2.0)?)?;
    let y_star = dvector![0.25];
    let ctrl = ControllerSpec::integral(&spec, y_star.clone())?;
    let (eq, report) = Equilibrium::compute(&spec, &ctrl, None)?;
    println!("steady inputs: {:?}", report.u_bar_vectors().iter().map(|u| u[0]).collect::<Vec<_>>());

    // Start from rest with the controller at zero.
    let mut s0 = eq.state.clone();
    s0.eta.fill(0.0);
    s0.x1.fill(0.0);
    s0.xi.fill(0.0);
    let traj = integrate(&spec, &ctrl, &s0, &IntegratorConfig::dp45(60.0))?;
    let last = traj.len() - 1;
    println!("terminal output error {:.2e}", traj.output_error(last, &y_star));
    println!("terminal controller state {} vs steady {}", traj.final_state().xi.transpose(), eq.state.xi.transpose());
    println!("settled (1e-6, 5 s window) at {:?}", settle(&traj, &y_star, 1e-6, 5.0));
    Ok(())
}
