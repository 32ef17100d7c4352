//! Distributed averaging control: agreement at the cheapest input split,
//! checked against a direct solve of the allocation problem.
use nalgebra::{dmatrix, dvector, DMatrix};
use phnet::control::ControllerSpec;
use phnet::graph::{Graph, NodeClass};
use phnet::network::{EdgeBank, NetworkSpec, NodeSpec};
use phnet::sim::{integrate, Equilibrium, IntegratorConfig};
use phnet::steadystate::{lambda_optimal, qp_oracle};

fn main() -> phnet::error::Result<()> {
    let classes = [NodeClass::C11, NodeClass::C11, NodeClass::C12, NodeClass::C21, NodeClass::C21, NodeClass::C22];
    let deltas = [0.2, -0.1, 0.15, -0.3, 0.1, -0.4];
    let nodes = classes
        .iter()
        .zip(deltas)
        .map(|(&c, d)| NodeSpec::scalar(c, 1.0, 1.0, d))
        .collect::<Result<Vec<_>, _>>()?;
    let spec = NetworkSpec::new(Graph::cycle(6)?, nodes, EdgeBank::uniform_cosine(6, 2.0)?)?;
    let q: Vec<DMatrix<f64>> = [1.0, 2.0, 0.5, 1.5].iter().map(|&w| dmatrix![w]).collect();
    let y_star = dvector![0.0];
    let ctrl = ControllerSpec::distributed(&spec, y_star.clone(), q.clone(), Graph::path(4)?)?;

    let closed = lambda_optimal(&spec, &q, &y_star)?;
    let oracle = qp_oracle(&spec, &q, &y_star)?;
    println!("λ closed form {:.12}, direct solve {:.12}", closed.lambda[0], oracle.lambda[0]);

    let (eq, _) = Equilibrium::compute(&spec, &ctrl, None)?;
    let mut s0 = eq.state.clone();
    s0.xi.fill(0.0);
    let traj = integrate(&spec, &ctrl, &s0, &IntegratorConfig::dp45(80.0))?;
    let last = traj.len() - 1;
    for (k, &node) in ctrl.active_nodes().iter().enumerate() {
        println!("node {}: input {:.6}, optimal {:.6}", node + 1, traj.input(last, node)[0], closed.u_bar[k][0]);
    }
    Ok(())
}
