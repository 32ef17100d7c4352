//! Controllers attached to the actuated nodes (classes 11 and 21).
//!
//! * `None`: every actuated node receives zero input.
//! * `Constant`: every actuated node receives a fixed level.
//! * `Integral`: `ξ̇_i = y* − y_i`, `u_i = ξ_i` (decentralized).
//! * `Distributed`: `ξ̇_i = Σ_j (ξ_j − ξ_i) + Q_i⁻¹(y* − y_i)`, `u_i = Q_i⁻¹ ξ_i`,
//!   with neighbours taken in a communication graph over the actuated nodes.
//!
//! Nodes can be frozen at a constant level (fail mode); they then drop out of
//! the controller and are treated as uncontrolled with a shifted disturbance.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{laplacian, Graph};
use crate::network::NetworkSpec;
use crate::steadystate::{
    agreement_output, solve_feasibility, solve_optimal, SteadyStateReport,
};

#[derive(Debug, Clone, PartialEq)]
pub enum ControllerKind {
    None,
    Constant,
    Integral { y_star: DVector<f64> },
    Distributed {
        y_star: DVector<f64>,
        /// One weight per active node, in the order of [`ControllerSpec::active_nodes`].
        q: Vec<DMatrix<f64>>,
        /// Graph over the active nodes (local indices).
        comm: Graph,
    },
}

impl ControllerKind {
    pub fn name(&self) -> &'static str {
        match self {
            ControllerKind::None => "none",
            ControllerKind::Constant => "constant",
            ControllerKind::Integral { .. } => "integral",
            ControllerKind::Distributed { .. } => "distributed",
        }
    }
}

/// A controller bound to a particular network.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerSpec {
    kind: ControllerKind,
    /// Actuated nodes driven by the dynamic controller (0-based, ascending).
    active: Vec<usize>,
    /// Actuated nodes held at a constant level.
    frozen: Vec<(usize, DVector<f64>)>,
    port_dim: usize,
    num_nodes: usize,
    q_inv: Vec<DMatrix<f64>>,
    comm_laplacian: Option<DMatrix<f64>>,
    xi0: DVector<f64>,
}

fn spd_inverse(q: &DMatrix<f64>, node: usize) -> Result<DMatrix<f64>> {
    let bad = |what: &str| Error::InvalidController(format!("weight of node {} is {what}", node + 1));
    if !q.is_square() {
        return Err(bad("not square"));
    }
    if (q - q.transpose()).amax() > 1e-12 * (1.0 + q.amax()) {
        return Err(bad("not symmetric"));
    }
    Cholesky::new(q.clone()).map(|c| c.inverse()).ok_or_else(|| bad("not positive definite"))
}

impl ControllerSpec {
    /// Zero input at every actuated node.
    pub fn none(spec: &NetworkSpec) -> Self {
        let m = spec.port_dim();
        let frozen = spec.controlled_nodes().into_iter().map(|i| (i, DVector::zeros(m))).collect();
        Self::constant_inner(spec, ControllerKind::None, frozen)
    }

    /// Fixed input levels, one per actuated node in ascending order.
    pub fn constant(spec: &NetworkSpec, levels: Vec<DVector<f64>>) -> Result<Self> {
        let nodes = spec.controlled_nodes();
        if levels.len() != nodes.len() {
            return Err(Error::DimensionMismatch {
                what: "constant input levels".into(),
                expected: nodes.len(),
                found: levels.len(),
            });
        }
        for (i, l) in nodes.iter().zip(&levels) {
            if l.len() != spec.port_dim() {
                return Err(Error::DimensionMismatch {
                    what: format!("input level of node {}", i + 1),
                    expected: spec.port_dim(),
                    found: l.len(),
                });
            }
        }
        Ok(Self::constant_inner(spec, ControllerKind::Constant, nodes.into_iter().zip(levels).collect()))
    }

    fn constant_inner(spec: &NetworkSpec, kind: ControllerKind, frozen: Vec<(usize, DVector<f64>)>) -> Self {
        Self {
            kind,
            active: Vec::new(),
            frozen,
            port_dim: spec.port_dim(),
            num_nodes: spec.num_nodes(),
            q_inv: Vec::new(),
            comm_laplacian: None,
            xi0: DVector::zeros(0),
        }
    }

    fn active_nodes_of(spec: &NetworkSpec, y_star: &DVector<f64>) -> Result<Vec<usize>> {
        let nodes = spec.controlled_nodes();
        if nodes.is_empty() {
            return Err(Error::InvalidController("the network has no actuated nodes".into()));
        }
        if y_star.len() != spec.port_dim() {
            return Err(Error::DimensionMismatch {
                what: "y*".into(),
                expected: spec.port_dim(),
                found: y_star.len(),
            });
        }
        Ok(nodes)
    }

    /// Decentralized integral controller driving every actuated output to `y*`.
    pub fn integral(spec: &NetworkSpec, y_star: DVector<f64>) -> Result<Self> {
        let active = Self::active_nodes_of(spec, &y_star)?;
        let m = spec.port_dim();
        Ok(Self {
            xi0: DVector::zeros(m * active.len()),
            kind: ControllerKind::Integral { y_star },
            active,
            frozen: Vec::new(),
            port_dim: m,
            num_nodes: spec.num_nodes(),
            q_inv: Vec::new(),
            comm_laplacian: None,
        })
    }

    /// Distributed optimal controller. `q` holds one weight per actuated node
    /// (ascending); `comm` is a connected graph on those nodes, indexed
    /// locally.
    pub fn distributed(spec: &NetworkSpec, y_star: DVector<f64>, q: Vec<DMatrix<f64>>, comm: Graph) -> Result<Self> {
        let active = Self::active_nodes_of(spec, &y_star)?;
        let m = spec.port_dim();
        if let Some(&i) = active.iter().find(|&&i| !spec.nodes()[i].has_identity_port()) {
            return Err(Error::Unsupported(format!(
                "distributed control needs G = I at actuated nodes (node {} differs)",
                i + 1
            )));
        }
        if q.len() != active.len() {
            return Err(Error::DimensionMismatch { what: "controller weights".into(), expected: active.len(), found: q.len() });
        }
        if comm.num_nodes() != active.len() {
            return Err(Error::DimensionMismatch {
                what: "communication graph nodes".into(),
                expected: active.len(),
                found: comm.num_nodes(),
            });
        }
        let q_inv = q
            .iter()
            .zip(&active)
            .map(|(qk, &i)| {
                if qk.nrows() != m {
                    return Err(Error::DimensionMismatch {
                        what: format!("weight of node {}", i + 1),
                        expected: m,
                        found: qk.nrows(),
                    });
                }
                spd_inverse(qk, i)
            })
            .collect::<Result<Vec<_>>>()?;
        let lap = laplacian(&comm);
        Ok(Self {
            xi0: DVector::zeros(m * active.len()),
            kind: ControllerKind::Distributed { y_star, q, comm },
            active,
            frozen: Vec::new(),
            port_dim: m,
            num_nodes: spec.num_nodes(),
            q_inv,
            comm_laplacian: Some(lap),
        })
    }

    pub fn kind(&self) -> &ControllerKind {
        &self.kind
    }

    pub fn active_nodes(&self) -> &[usize] {
        &self.active
    }

    pub fn frozen(&self) -> &[(usize, DVector<f64>)] {
        &self.frozen
    }

    pub fn state_len(&self) -> usize {
        self.port_dim * self.active.len()
    }

    pub fn xi0(&self) -> &DVector<f64> {
        &self.xi0
    }

    pub fn y_star(&self) -> Option<&DVector<f64>> {
        match &self.kind {
            ControllerKind::Integral { y_star } | ControllerKind::Distributed { y_star, .. } => Some(y_star),
            _ => None,
        }
    }

    pub fn with_xi0(mut self, xi0: DVector<f64>) -> Result<Self> {
        if xi0.len() != self.state_len() {
            return Err(Error::DimensionMismatch {
                what: "initial controller state".into(),
                expected: self.state_len(),
                found: xi0.len(),
            });
        }
        self.xi0 = xi0;
        Ok(self)
    }

    /// Initial controller state `ξ̄ + noise`, noise uniform in `[-radius, radius]`
    /// per component.
    pub fn warm_start(self, xi_bar: &DVector<f64>, radius: f64, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noisy = xi_bar.map(|v| if radius > 0.0 { v + rng.gen_range(-radius..=radius) } else { v });
        self.with_xi0(noisy)
    }

    fn block(&self, xi: &DVector<f64>, k: usize) -> DVector<f64> {
        xi.rows(k * self.port_dim, self.port_dim).into_owned()
    }

    fn check_state(&self, xi: &DVector<f64>) -> Result<()> {
        if xi.len() != self.state_len() {
            return Err(Error::DimensionMismatch {
                what: "controller state".into(),
                expected: self.state_len(),
                found: xi.len(),
            });
        }
        Ok(())
    }

    /// Input of every node (zero where no input acts).
    pub fn inputs(&self, xi: &DVector<f64>) -> Result<Vec<DVector<f64>>> {
        self.check_state(xi)?;
        let mut u = vec![DVector::zeros(self.port_dim); self.num_nodes];
        for (node, level) in &self.frozen {
            u[*node] = level.clone();
        }
        for (k, &node) in self.active.iter().enumerate() {
            u[node] = match &self.kind {
                ControllerKind::Distributed { .. } => &self.q_inv[k] * self.block(xi, k),
                _ => self.block(xi, k),
            };
        }
        Ok(u)
    }

    /// `ξ̇` given the outputs of every node.
    pub fn rates(&self, xi: &DVector<f64>, y: &[DVector<f64>]) -> Result<DVector<f64>> {
        self.check_state(xi)?;
        if y.len() != self.num_nodes {
            return Err(Error::DimensionMismatch { what: "outputs".into(), expected: self.num_nodes, found: y.len() });
        }
        let m = self.port_dim;
        let mut rate = DVector::zeros(self.state_len());
        match &self.kind {
            ControllerKind::None | ControllerKind::Constant => {}
            ControllerKind::Integral { y_star } => {
                for (k, &node) in self.active.iter().enumerate() {
                    rate.rows_mut(k * m, m).copy_from(&(y_star - &y[node]));
                }
            }
            ControllerKind::Distributed { y_star, .. } => {
                let lap = self.comm_laplacian.as_ref().expect("distributed controller has a Laplacian");
                for (k, &node) in self.active.iter().enumerate() {
                    let mut r = &self.q_inv[k] * (y_star - &y[node]);
                    for j in 0..self.active.len() {
                        let l = lap[(k, j)];
                        if l != 0.0 {
                            r -= self.block(xi, j) * l;
                        }
                    }
                    rate.rows_mut(k * m, m).copy_from(&r);
                }
            }
        }
        Ok(rate)
    }

    /// `(ξ̇, u)` at once.
    pub fn controller_rates(&self, xi: &DVector<f64>, y: &[DVector<f64>]) -> Result<(DVector<f64>, Vec<DVector<f64>>)> {
        Ok((self.rates(xi, y)?, self.inputs(xi)?))
    }

    /// Holds the listed actuated nodes at constant levels. Freezing every
    /// active node leaves a constant controller.
    pub fn freeze(&self, nodes: &[usize], levels: &[DVector<f64>]) -> Result<Self> {
        if nodes.len() != levels.len() {
            return Err(Error::DimensionMismatch { what: "freeze levels".into(), expected: nodes.len(), found: levels.len() });
        }
        if nodes.is_empty() {
            return Ok(self.clone());
        }
        let mut out = self.clone();
        for (node, level) in nodes.iter().zip(levels) {
            if level.len() != self.port_dim {
                return Err(Error::DimensionMismatch {
                    what: format!("frozen level of node {}", node + 1),
                    expected: self.port_dim,
                    found: level.len(),
                });
            }
            if let Some(entry) = out.frozen.iter_mut().find(|(i, _)| i == node) {
                entry.1 = level.clone();
            } else if out.active.contains(node) {
                out.frozen.push((*node, level.clone()));
            } else {
                return Err(Error::InvalidController(format!("node {} is not controlled", node + 1)));
            }
        }
        out.frozen.sort_by_key(|(i, _)| *i);
        let keep: Vec<usize> = (0..self.active.len()).filter(|&k| !nodes.contains(&self.active[k])).collect();
        if keep.is_empty() {
            out.kind = ControllerKind::Constant;
            out.active.clear();
            out.q_inv.clear();
            out.comm_laplacian = None;
            out.xi0 = DVector::zeros(0);
            return Ok(out);
        }
        let m = self.port_dim;
        out.active = keep.iter().map(|&k| self.active[k]).collect();
        out.xi0 = DVector::from_iterator(
            m * keep.len(),
            keep.iter().flat_map(|&k| self.xi0.rows(k * m, m).iter().copied().collect::<Vec<_>>()),
        );
        if let ControllerKind::Distributed { y_star, q, comm } = &self.kind {
            let comm = comm.induced(&keep).map_err(|e| {
                Error::InvalidController(format!("communication graph after freezing: {e}"))
            })?;
            out.q_inv = keep.iter().map(|&k| self.q_inv[k].clone()).collect();
            out.comm_laplacian = Some(laplacian(&comm));
            out.kind = ControllerKind::Distributed {
                y_star: y_star.clone(),
                q: keep.iter().map(|&k| q[k].clone()).collect(),
                comm,
            };
        }
        Ok(out)
    }

    /// The network seen by the steady-state analysis: every node not driven by
    /// the dynamic controller becomes uncontrolled with its level folded into
    /// the disturbance.
    pub fn analysis_network(&self, spec: &NetworkSpec) -> Result<NetworkSpec> {
        spec.with_frozen_inputs(&self.frozen)
    }

    /// Steady state targeted by this controller.
    ///
    /// For controllers without a reference (`None`, `Constant`) the common
    /// output is the agreement output of the analysis network, unless
    /// `y_star` is supplied (needed when some `G_i ≠ I`).
    pub fn steady_state(&self, spec: &NetworkSpec, y_star: Option<&DVector<f64>>) -> Result<SteadyStateReport> {
        let analysis = self.analysis_network(spec)?;
        match &self.kind {
            ControllerKind::None | ControllerKind::Constant => {
                let y = match y_star {
                    Some(y) => y.clone(),
                    None => agreement_output(&analysis)?,
                };
                solve_feasibility(&analysis, &y, None)
            }
            ControllerKind::Integral { y_star } => solve_feasibility(&analysis, y_star, None),
            ControllerKind::Distributed { y_star, q, .. } => solve_optimal(&analysis, q, y_star),
        }
    }

    /// `ξ̄`: the steady inputs for the integral controller, `1 ⊗ λ` for the
    /// distributed one.
    pub fn steady_controller_state(&self, report: &SteadyStateReport) -> Result<DVector<f64>> {
        if !report.feasible {
            return Err(Error::Infeasible(
                report.message.clone().unwrap_or_else(|| "steady state is infeasible".into()),
            ));
        }
        let m = self.port_dim;
        let mut xi = DVector::zeros(self.state_len());
        match &self.kind {
            ControllerKind::None | ControllerKind::Constant => {}
            ControllerKind::Integral { .. } => {
                let u = report.u_bar.as_ref().ok_or_else(|| Error::Infeasible("report has no steady inputs".into()))?;
                for (k, &node) in self.active.iter().enumerate() {
                    let entry = u.iter().find(|e| e.index() == node).ok_or_else(|| {
                        Error::Infeasible(format!("report has no steady input for node {}", node + 1))
                    })?;
                    xi.rows_mut(k * m, m).copy_from(&entry.vector());
                }
            }
            ControllerKind::Distributed { .. } => {
                let lambda = report.lambda_vector().ok_or_else(|| Error::Infeasible("report has no multiplier".into()))?;
                for k in 0..self.active.len() {
                    xi.rows_mut(k * m, m).copy_from(&lambda);
                }
            }
        }
        Ok(xi)
    }

    /// `½‖ξ − ξ̄‖²`.
    pub fn storage(&self, xi: &DVector<f64>, xi_bar: &DVector<f64>) -> f64 {
        0.5 * (xi - xi_bar).norm_squared()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::NodeClass;
    use crate::network::{EdgeBank, NodeSpec, ReducedState};
    use crate::steadystate::equilibrium_states;
    use proptest::prelude::*;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    fn net(classes: &[NodeClass], delta: &[f64]) -> NetworkSpec {
        let nodes = classes
            .iter()
            .zip(delta)
            .map(|(c, d)| NodeSpec::scalar(*c, 1.0, 1.0, *d).unwrap())
            .collect();
        let g = Graph::path(classes.len()).unwrap();
        let m = g.num_edges();
        NetworkSpec::new(g, nodes, EdgeBank::uniform_cosine(m, 2.0).unwrap()).unwrap()
    }

    fn eye() -> DMatrix<f64> {
        DMatrix::identity(1, 1)
    }

    #[test]
    fn distributed_rates_by_hand() {
        let spec = net(&[NodeClass::C11, NodeClass::C11], &[0.0, 0.0]);
        let c = ControllerSpec::distributed(&spec, v(&[0.0]), vec![eye(), eye()], Graph::path(2).unwrap()).unwrap();
        let (rate, u) = c.controller_rates(&v(&[1.0, 0.0]), &[v(&[0.0]), v(&[0.0])]).unwrap();
        assert_eq!(rate, v(&[-1.0, 1.0]));
        assert_eq!(u[0], v(&[1.0]));
        assert_eq!(u[1], v(&[0.0]));
        // Consensus at 1⊗λ with agreement is a fixed point.
        let (rate, _) = c.controller_rates(&v(&[-3.0, -3.0]), &[v(&[0.0]), v(&[0.0])]).unwrap();
        assert_eq!(rate, v(&[0.0, 0.0]));
    }

    #[test]
    fn none_and_constant() {
        let spec = net(&[NodeClass::C11, NodeClass::C12], &[0.0, 0.0]);
        let none = ControllerSpec::none(&spec);
        assert_eq!(none.state_len(), 0);
        let (rate, u) = none.controller_rates(&v(&[]), &[v(&[1.0]), v(&[2.0])]).unwrap();
        assert_eq!(rate.len(), 0);
        assert!(u.iter().all(|u| u[0] == 0.0));
        let c = ControllerSpec::constant(&spec, vec![v(&[0.7])]).unwrap();
        assert_eq!(c.inputs(&v(&[])).unwrap()[0], v(&[0.7]));
        assert!(ControllerSpec::constant(&spec, vec![]).is_err());
    }

    #[test]
    fn steady_controller_states() {
        let spec = net(&[NodeClass::C11, NodeClass::C11], &[2.0, 4.0]);
        let c = ControllerSpec::distributed(&spec, v(&[0.0]), vec![eye(), eye()], Graph::path(2).unwrap()).unwrap();
        let report = c.steady_state(&spec, None).unwrap();
        assert_eq!(c.steady_controller_state(&report).unwrap(), v(&[-3.0, -3.0]));

        let zero = net(&[NodeClass::C11, NodeClass::C12], &[0.0, 0.0]);
        let c = ControllerSpec::integral(&zero, v(&[0.0])).unwrap();
        let report = c.steady_state(&zero, None).unwrap();
        assert_eq!(c.steady_controller_state(&report).unwrap()[0], 0.0);
    }

    #[test]
    fn closed_loop_equilibrium_has_zero_rates() {
        let spec = net(&[NodeClass::C11, NodeClass::C12, NodeClass::C21, NodeClass::C22], &[0.1, -0.2, 0.3, -0.4]);
        for c in [
            ControllerSpec::integral(&spec, v(&[0.05])).unwrap(),
            ControllerSpec::distributed(&spec, v(&[0.05]), vec![eye(), eye() * 2.0], Graph::path(2).unwrap()).unwrap(),
        ] {
            let report = c.steady_state(&spec, None).unwrap();
            assert!(report.feasible, "{report:?}");
            let xi = c.steady_controller_state(&report).unwrap();
            let states = equilibrium_states(&c.analysis_network(&spec).unwrap(), &report).unwrap();
            let s = ReducedState { eta: report.eta_bar_vector().unwrap(), x1: spec.stack_x1(&states), xi: xi.clone() };
            let u = c.inputs(&xi).unwrap();
            let ev = spec.evaluate(&s.eta, &s.x1, &u).unwrap();
            let (e, x) = spec.rates_from_eval(&ev, &u);
            let r = c.rates(&xi, &ev.outputs).unwrap();
            assert!(e.amax() <= 1e-9 && x.amax() <= 1e-9 && r.amax() <= 1e-9);
        }
    }

    #[test]
    fn freezing() {
        let spec = net(&[NodeClass::C11, NodeClass::C11, NodeClass::C21], &[0.1, 0.2, -0.5]);
        let c = ControllerSpec::distributed(
            &spec,
            v(&[0.0]),
            vec![eye(), eye() * 2.0, eye() * 3.0],
            Graph::path(3).unwrap(),
        )
        .unwrap();
        assert_eq!(c.freeze(&[], &[]).unwrap(), c);
        assert!(c.freeze(&[5], &[v(&[0.0])]).is_err());
        // Middle node of a path comm graph: the rest is disconnected.
        assert!(c.freeze(&[1], &[v(&[0.0])]).is_err());
        let f = c.freeze(&[0], &[v(&[0.25])]).unwrap();
        assert_eq!(f.active_nodes(), &[1, 2]);
        assert_eq!(f.state_len(), 2);
        let u = f.inputs(&v(&[2.0, 3.0])).unwrap();
        assert_eq!(u[0][0], 0.25);
        assert!((u[1][0] - 1.0).abs() < 1e-15);
        assert!((u[2][0] - 1.0).abs() < 1e-15);
        let analysis = f.analysis_network(&spec).unwrap();
        assert_eq!(analysis.partition().class_of(0), NodeClass::C12);
        assert!((analysis.nodes()[0].delta[0] - 0.35).abs() < 1e-15);

        // Freezing everything at the optimal inputs gives the same steady state.
        let report = c.steady_state(&spec, None).unwrap();
        let levels = report.u_bar_vectors();
        let all = c.freeze(&[0, 1, 2], &levels).unwrap();
        assert_eq!(all.kind(), &ControllerKind::Constant);
        let frozen_report = all.steady_state(&spec, Some(&v(&[0.0]))).unwrap();
        assert!(frozen_report.feasible);
        let a = report.eta_bar_vector().unwrap();
        let b = frozen_report.eta_bar_vector().unwrap();
        assert!((a - b).amax() < 1e-9);
    }

    #[test]
    fn rejects_bad_configurations() {
        let spec = net(&[NodeClass::C12, NodeClass::C22], &[0.0, 0.0]);
        assert!(ControllerSpec::integral(&spec, v(&[0.0])).is_err());
        let spec = net(&[NodeClass::C11, NodeClass::C11], &[0.0, 0.0]);
        assert!(ControllerSpec::distributed(&spec, v(&[0.0]), vec![eye(), -eye()], Graph::path(2).unwrap()).is_err());
        assert!(ControllerSpec::distributed(&spec, v(&[0.0]), vec![eye()], Graph::path(2).unwrap()).is_err());
        assert!(ControllerSpec::integral(&spec, v(&[0.0, 1.0])).is_err());
        let c = ControllerSpec::integral(&spec, v(&[0.0])).unwrap();
        assert!(c.inputs(&v(&[1.0])).is_err());
        assert!(c.clone().with_xi0(v(&[1.0, 2.0, 3.0])).is_err());
        let warm = c.warm_start(&v(&[1.0, 1.0]), 0.1, 7).unwrap();
        assert!((warm.xi0() - v(&[1.0, 1.0])).amax() <= 0.1);
    }

    proptest! {
        #[test]
        fn integral_fixed_point_iff_agreement(
            y_star in -1.0f64..1.0,
            ys in proptest::collection::vec(-1.0f64..1.0, 3),
            hit in proptest::collection::vec(any::<bool>(), 3),
        ) {
            let spec = net(&[NodeClass::C11, NodeClass::C21, NodeClass::C11], &[0.0, 0.0, 0.0]);
            let c = ControllerSpec::integral(&spec, v(&[y_star])).unwrap();
            let y: Vec<_> = ys.iter().zip(&hit).map(|(y, h)| v(&[if *h { y_star } else { *y }])).collect();
            let rate = c.rates(&v(&[0.3, -0.1, 0.2]), &y).unwrap();
            let agree = y.iter().all(|yi| yi[0] == y_star);
            prop_assert_eq!(rate.amax() == 0.0, agree);
        }
    }
}
