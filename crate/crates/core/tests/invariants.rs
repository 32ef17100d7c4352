//! Cross-module properties on randomly generated networks.

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use phnet::control::ControllerSpec;
use phnet::energy::Hamiltonian;
use phnet::graph::{Graph, NodeClass};
use phnet::network::{EdgeBank, NetworkSpec, NodeSpec};
use phnet::sim::{integrate, lyapunov_series, settle, Equilibrium, IntegratorConfig};
use phnet::steadystate::{
    balance_residual, equilibrium_states, lambda_optimal, qp_oracle, solve_feasibility, solve_feasibility_with,
    NewtonOptions,
};

const CLASSES: [NodeClass; 4] = [NodeClass::C11, NodeClass::C12, NodeClass::C21, NodeClass::C22];

fn spd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    &a * a.transpose() + DMatrix::identity(n, n) * 0.5
}

fn skew(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    &a - a.transpose()
}

/// Random tree (or tree plus one chord) with `G = I` nodes of dimension `m`
/// and quadratic edges; at least one controlled node.
fn random_spec(seed: u64, acyclic: bool) -> NetworkSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = rng.gen_range(1..=3);
    let n = rng.gen_range(2..=8);
    let mut edges: Vec<(usize, usize)> = (1..n).map(|k| (rng.gen_range(0..k), k)).collect();
    if !acyclic && n >= 3 {
        edges.push((0, n - 1));
        edges.dedup();
    }
    let graph = Graph::new(n, edges).unwrap();
    let mut classes: Vec<NodeClass> = (0..n).map(|_| CLASSES[rng.gen_range(0..4)]).collect();
    classes[rng.gen_range(0..n)] = NodeClass::C11;
    let nodes = classes
        .iter()
        .map(|&c| {
            NodeSpec::new(
                skew(&mut rng, m),
                spd(&mut rng, m),
                DMatrix::identity(m, m),
                Hamiltonian::quadratic(spd(&mut rng, m), DVector::from_fn(m, |_, _| rng.gen_range(-0.2..0.2))).unwrap(),
                c,
                DVector::from_fn(m, |_, _| rng.gen_range(-1.0..1.0)),
            )
        })
        .collect();
    let energies = (0..graph.num_edges()).map(|_| Hamiltonian::quadratic(spd(&mut rng, m), DVector::zeros(m)).unwrap()).collect();
    NetworkSpec::new(graph, nodes, EdgeBank::new(energies).unwrap()).unwrap()
}

fn weights(seed: u64, spec: &NetworkSpec) -> Vec<DMatrix<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    spec.controlled_nodes().iter().map(|_| spd(&mut rng, spec.port_dim())).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn closed_form_allocation_matches_direct_solve(seed in any::<u64>()) {
        let spec = random_spec(seed, false);
        let q = weights(seed, &spec);
        let y_star = DVector::from_element(spec.port_dim(), 0.1);
        let closed = lambda_optimal(&spec, &q, &y_star).unwrap();
        let oracle = qp_oracle(&spec, &q, &y_star).unwrap();
        for (a, b) in closed.u_bar.iter().zip(&oracle.u_bar) {
            prop_assert!((a - b).amax() <= 1e-8);
        }
        // Σ(J−R) y* + Σ ū + Σ δ = 0.
        prop_assert!(balance_residual(&spec, &y_star, &closed.u_bar).amax() <= 1e-10);
    }

    #[test]
    fn steady_states_reproduce_the_agreement_value(seed in any::<u64>()) {
        let spec = random_spec(seed, false);
        let q = weights(seed, &spec);
        let y_star = DVector::from_element(spec.port_dim(), -0.2);
        let opt = lambda_optimal(&spec, &q, &y_star).unwrap();
        let report = solve_feasibility(&spec, &y_star, Some(&opt.u_bar)).unwrap();
        prop_assert!(report.feasible, "{:?}", report.message);
        let states = equilibrium_states(&spec, &report).unwrap();
        for (node, x) in spec.nodes().iter().zip(&states) {
            let y = node.g.transpose() * node.energy.gradient(x).unwrap();
            prop_assert!((y - &y_star).amax() <= 1e-9);
        }
    }

    #[test]
    fn tree_edge_states_do_not_depend_on_the_start(seed in any::<u64>()) {
        let spec = random_spec(seed, true);
        let q = weights(seed, &spec);
        let y_star = DVector::zeros(spec.port_dim());
        let u = lambda_optimal(&spec, &q, &y_star).unwrap().u_bar;
        let base = solve_feasibility(&spec, &y_star, Some(&u)).unwrap().eta_bar_vector().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..10 {
            let opts = NewtonOptions {
                eta0: Some(DVector::from_fn(spec.eta_len(), |_, _| rng.gen_range(-2.0..2.0))),
                ..Default::default()
            };
            let r = solve_feasibility_with(&spec, &y_star, Some(&u), &opts).unwrap();
            prop_assert!(r.feasible);
            prop_assert!((r.eta_bar_vector().unwrap() - &base).amax() <= 1e-7);
        }
    }
}

/// Small uncontrolled cosine network around its equilibrium.
fn cosine_ring(seed: u64) -> NetworkSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let classes = [NodeClass::C12, NodeClass::C22, NodeClass::C12, NodeClass::C22];
    let nodes = classes
        .iter()
        .map(|&c| NodeSpec::scalar(c, rng.gen_range(0.5..2.0), rng.gen_range(0.5..2.0), rng.gen_range(-0.3..0.3)).unwrap())
        .collect();
    let energies = (0..4).map(|_| Hamiltonian::neg_cosine(DVector::from_element(1, rng.gen_range(1.5..3.0))).unwrap()).collect();
    NetworkSpec::new(Graph::cycle(4).unwrap(), nodes, EdgeBank::new(energies).unwrap()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn storage_decreases_and_settled_outputs_agree(seed in any::<u64>(), kick in -0.3f64..0.3) {
        let spec = cosine_ring(seed);
        let ctrl = ControllerSpec::none(&spec);
        let (eq, report) = Equilibrium::compute(&spec, &ctrl, None).unwrap();
        prop_assume!(report.feasible);
        let mut s0 = eq.state.clone();
        s0.x1[0] += kick;
        s0.eta[1] -= kick / 2.0;
        let traj = integrate(&spec, &ctrl, &s0, &IntegratorConfig::dp45(30.0)).unwrap();
        let mon = lyapunov_series(&traj, &spec, &ctrl, &eq, None);
        prop_assert!(mon.v_monotone, "worst increment {}", mon.worst_increment);
        let tol = 1e-4;
        if let Some(t) = settle(&traj, &eq.y_star, tol, 3.0) {
            for k in (0..traj.len()).filter(|&k| traj.times[k] >= t) {
                prop_assert!(traj.output_spread(k) <= 2.0 * tol);
            }
        }
    }
}
