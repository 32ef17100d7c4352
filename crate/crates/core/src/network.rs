//! The interconnected network: port-Hamiltonian nodes coupled through
//! integrator edges.
//!
//! Node `i` evolves (differential classes) or is constrained (algebraic
//! classes) by
//!
//! ```text
//! ẋ_i or 0 = (J_i - R_i) ∇H_i(x_i) + G_i (σ_i + u_i + δ_i),   y_i = G_iᵀ ∇H_i(x_i)
//! ```
//!
//! and edge `k` by `η̇_k = v_k`, `μ_k = ∇H_{e,k}(η_k)`, with the interconnection
//! `v = (Bᵀ ⊗ I) y`, `σ = -(B ⊗ I) μ`. Algebraic nodes are eliminated in
//! closed form, which reduces the network to an ODE in `(η, x⁽¹⁾)`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::energy::Hamiltonian;
use crate::error::{Error, Result};
use crate::graph::{incidence_matrix, ClassSet, Graph, NodeClass, NodePartition};

/// Tolerance on `‖J + Jᵀ‖` (largest entry).
pub const SKEW_TOL: f64 = 1e-12;
/// Condition number of `J - R` above which elimination accuracy is flagged.
pub const CONDITION_WARN: f64 = 1e10;

/// Data of a single node.
#[derive(Debug, Clone)]
pub struct NodeSpec {
    pub j: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub energy: Hamiltonian,
    pub class: NodeClass,
    pub delta: DVector<f64>,
}

impl NodeSpec {
    pub fn new(
        j: DMatrix<f64>,
        r: DMatrix<f64>,
        g: DMatrix<f64>,
        energy: Hamiltonian,
        class: NodeClass,
        delta: DVector<f64>,
    ) -> Self {
        Self { j, r, g, energy, class, delta }
    }

    /// Scalar node with `J = 0`, `R = r`, `G = 1` and `H = ½ p x²`.
    pub fn scalar(class: NodeClass, r: f64, p: f64, delta: f64) -> Result<Self> {
        Ok(Self {
            j: DMatrix::zeros(1, 1),
            r: DMatrix::from_element(1, 1, r),
            g: DMatrix::identity(1, 1),
            energy: Hamiltonian::diagonal_quadratic(&[p])?,
            class,
            delta: DVector::from_element(1, delta),
        })
    }

    pub fn state_dim(&self) -> usize {
        self.j.nrows()
    }

    pub fn port_dim(&self) -> usize {
        self.g.ncols()
    }

    /// True when `G` is the identity.
    pub fn has_identity_port(&self) -> bool {
        self.g.is_square() && (&self.g - DMatrix::identity(self.g.nrows(), self.g.ncols())).amax() <= 1e-12
    }
}

/// Largest entry of `|J + Jᵀ|`.
pub fn skew_error(j: &DMatrix<f64>) -> f64 {
    (j + j.transpose()).amax()
}

/// Smallest eigenvalue of the symmetric part of `r`.
pub fn min_sym_eigenvalue(r: &DMatrix<f64>) -> f64 {
    let sym = (r + r.transpose()) * 0.5;
    SymmetricEigen::new(sym).eigenvalues.min()
}

/// Numerical column rank (singular values above `1e-10 · σ_max`).
pub fn column_rank(g: &DMatrix<f64>) -> usize {
    if g.is_empty() {
        return 0;
    }
    let sv = g.clone().svd(false, false).singular_values;
    let tol = 1e-10 * sv.max();
    sv.iter().filter(|s| **s > tol).count()
}

/// 2-norm condition number.
pub fn condition_number(a: &DMatrix<f64>) -> f64 {
    let sv = a.clone().svd(false, false).singular_values;
    sv.max() / sv.min()
}

/// Per-edge energies; all share the port dimension.
#[derive(Debug, Clone)]
pub struct EdgeBank {
    energies: Vec<Hamiltonian>,
}

impl EdgeBank {
    pub fn new(energies: Vec<Hamiltonian>) -> Result<Self> {
        if let Some(first) = energies.first() {
            let m = first.dim();
            if let Some((k, e)) = energies.iter().enumerate().find(|(_, e)| e.dim() != m) {
                return Err(Error::DimensionMismatch {
                    what: format!("edge {} energy", k + 1),
                    expected: m,
                    found: e.dim(),
                });
            }
        }
        Ok(Self { energies })
    }

    /// The same line energy `-γ cos η` on every edge (scalar ports).
    pub fn uniform_cosine(num_edges: usize, gamma: f64) -> Result<Self> {
        let e = Hamiltonian::neg_cosine(DVector::from_element(1, gamma))?;
        Self::new(vec![e; num_edges])
    }

    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }

    pub fn energies(&self) -> &[Hamiltonian] {
        &self.energies
    }
}

/// Reduced state: edge states, differential node states and controller
/// states, each stacked in index order.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedState {
    pub eta: DVector<f64>,
    pub x1: DVector<f64>,
    pub xi: DVector<f64>,
}

impl ReducedState {
    pub fn to_flat(&self) -> DVector<f64> {
        let mut v = DVector::zeros(self.eta.len() + self.x1.len() + self.xi.len());
        v.rows_mut(0, self.eta.len()).copy_from(&self.eta);
        v.rows_mut(self.eta.len(), self.x1.len()).copy_from(&self.x1);
        v.rows_mut(self.eta.len() + self.x1.len(), self.xi.len()).copy_from(&self.xi);
        v
    }

    pub fn from_flat(flat: &DVector<f64>, eta_len: usize, x1_len: usize) -> Self {
        let xi_len = flat.len() - eta_len - x1_len;
        Self {
            eta: flat.rows(0, eta_len).into_owned(),
            x1: flat.rows(eta_len, x1_len).into_owned(),
            xi: flat.rows(eta_len + x1_len, xi_len).into_owned(),
        }
    }
}

/// Solution of one algebraic node's constraint.
#[derive(Debug, Clone)]
pub struct AlgebraicSolution {
    pub node: usize,
    pub gradient: DVector<f64>,
    pub state: DVector<f64>,
    /// `‖(J - R)∇H(x) + G(σ + u + δ)‖∞` at the recovered state.
    pub residual: f64,
}

/// Everything the network computes at one point of the reduced state.
#[derive(Debug, Clone)]
pub struct NetworkEval {
    /// Edge co-states `μ_k = ∇H_{e,k}(η_k)`.
    pub mu: Vec<DVector<f64>>,
    /// Coupling inputs `σ_i`.
    pub sigma: Vec<DVector<f64>>,
    /// `∇H_i(x_i)` for every node.
    pub grads: Vec<DVector<f64>>,
    /// `x_i` for every node, algebraic ones recovered.
    pub states: Vec<DVector<f64>>,
    pub outputs: Vec<DVector<f64>>,
    /// Largest algebraic residual, 0 without algebraic nodes.
    pub alg_residual: f64,
}

/// A validated network.
#[derive(Debug, Clone)]
pub struct NetworkSpec {
    graph: Graph,
    partition: NodePartition,
    nodes: Vec<NodeSpec>,
    edges: EdgeBank,
    port_dim: usize,
    incidence: DMatrix<f64>,
    jr_inv: Vec<DMatrix<f64>>,
    diff_nodes: Vec<usize>,
    x1_offsets: Vec<usize>,
    x1_len: usize,
}

impl NetworkSpec {
    pub fn new(graph: Graph, nodes: Vec<NodeSpec>, edges: EdgeBank) -> Result<Self> {
        if nodes.len() != graph.num_nodes() {
            return Err(Error::DimensionMismatch {
                what: "node list".into(),
                expected: graph.num_nodes(),
                found: nodes.len(),
            });
        }
        if edges.len() != graph.num_edges() {
            return Err(Error::DimensionMismatch {
                what: "edge energies".into(),
                expected: graph.num_edges(),
                found: edges.len(),
            });
        }
        let port_dim = nodes[0].port_dim();
        if port_dim == 0 {
            return Err(Error::InvalidNode { node: 1, reason: "port dimension is zero".into() });
        }
        let mut jr_inv = Vec::with_capacity(nodes.len());
        for (i, node) in nodes.iter().enumerate() {
            jr_inv.push(validate_node(i, node, port_dim)?);
        }
        if let Some(e) = edges.energies().first() {
            if e.dim() != port_dim {
                return Err(Error::DimensionMismatch {
                    what: "edge energy (must match port dimension)".into(),
                    expected: port_dim,
                    found: e.dim(),
                });
            }
        }
        let partition = NodePartition::new(nodes.iter().map(|n| n.class).collect());
        let diff_nodes = partition.indices(ClassSet::Differential);
        let mut x1_offsets = Vec::with_capacity(diff_nodes.len());
        let mut x1_len = 0;
        for &i in &diff_nodes {
            x1_offsets.push(x1_len);
            x1_len += nodes[i].state_dim();
        }
        let incidence = incidence_matrix(&graph);
        Ok(Self {
            graph,
            partition,
            nodes,
            edges,
            port_dim,
            incidence,
            jr_inv,
            diff_nodes,
            x1_offsets,
            x1_len,
        })
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn partition(&self) -> &NodePartition {
        &self.partition
    }

    pub fn nodes(&self) -> &[NodeSpec] {
        &self.nodes
    }

    pub fn edges(&self) -> &EdgeBank {
        &self.edges
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn port_dim(&self) -> usize {
        self.port_dim
    }

    pub fn incidence(&self) -> &DMatrix<f64> {
        &self.incidence
    }

    /// `(J_i - R_i)⁻¹`.
    pub fn jr_inverse(&self, node: usize) -> &DMatrix<f64> {
        &self.jr_inv[node]
    }

    pub fn eta_len(&self) -> usize {
        self.port_dim * self.edges.len()
    }

    pub fn x1_len(&self) -> usize {
        self.x1_len
    }

    /// Differential nodes in the order their states are stacked in `x1`.
    pub fn differential_nodes(&self) -> &[usize] {
        &self.diff_nodes
    }

    pub fn algebraic_nodes(&self) -> Vec<usize> {
        self.partition.indices(ClassSet::Algebraic)
    }

    pub fn controlled_nodes(&self) -> Vec<usize> {
        self.partition.indices(ClassSet::Controlled)
    }

    pub fn all_identity_ports(&self) -> bool {
        self.nodes.iter().all(NodeSpec::has_identity_port)
    }

    /// Offset of differential node `node` inside `x1`, if it is differential.
    pub fn x1_offset(&self, node: usize) -> Option<usize> {
        self.diff_nodes
            .iter()
            .position(|&i| i == node)
            .map(|p| self.x1_offsets[p])
    }

    pub fn zero_inputs(&self) -> Vec<DVector<f64>> {
        vec![DVector::zeros(self.port_dim); self.nodes.len()]
    }

    /// `η_k` as a view into the stacked edge state.
    pub fn edge_slice(&self, eta: &DVector<f64>, k: usize) -> DVector<f64> {
        eta.rows(k * self.port_dim, self.port_dim).into_owned()
    }

    /// Stacks per-node states of the differential nodes into `x1`.
    pub fn stack_x1(&self, states: &[DVector<f64>]) -> DVector<f64> {
        let mut x1 = DVector::zeros(self.x1_len);
        for (p, &i) in self.diff_nodes.iter().enumerate() {
            x1.rows_mut(self.x1_offsets[p], self.nodes[i].state_dim()).copy_from(&states[i]);
        }
        x1
    }

    /// Copy of this network where the listed nodes lose their control input
    /// and the given constant levels are folded into their disturbances.
    pub fn with_frozen_inputs(&self, frozen: &[(usize, DVector<f64>)]) -> Result<Self> {
        let mut nodes = self.nodes.clone();
        for (node, level) in frozen {
            let spec = nodes.get_mut(*node).ok_or_else(|| {
                Error::InvalidNetwork(format!("frozen node {} does not exist", node + 1))
            })?;
            if !spec.class.is_controlled() {
                return Err(Error::InvalidNetwork(format!(
                    "node {} has no control input to freeze",
                    node + 1
                )));
            }
            if level.len() != self.port_dim {
                return Err(Error::DimensionMismatch {
                    what: format!("frozen level of node {}", node + 1),
                    expected: self.port_dim,
                    found: level.len(),
                });
            }
            spec.class = spec.class.uncontrolled();
            spec.delta += level;
        }
        Self::new(self.graph.clone(), nodes, self.edges.clone())
    }

    fn check_inputs(&self, u: &[DVector<f64>]) -> Result<()> {
        if u.len() != self.nodes.len() {
            return Err(Error::DimensionMismatch {
                what: "input map".into(),
                expected: self.nodes.len(),
                found: u.len(),
            });
        }
        for (i, ui) in u.iter().enumerate() {
            if ui.len() != self.port_dim {
                return Err(Error::DimensionMismatch {
                    what: format!("input of node {}", i + 1),
                    expected: self.port_dim,
                    found: ui.len(),
                });
            }
            if !self.nodes[i].class.is_controlled() && ui.iter().any(|v| *v != 0.0) {
                return Err(Error::InvalidNetwork(format!(
                    "node {} (class {}) does not accept an input",
                    i + 1,
                    self.nodes[i].class
                )));
            }
        }
        Ok(())
    }

    /// `μ_k = ∇H_{e,k}(η_k)` for every edge.
    pub fn edge_gradients(&self, eta: &DVector<f64>) -> Result<Vec<DVector<f64>>> {
        if eta.len() != self.eta_len() {
            return Err(Error::DimensionMismatch {
                what: "edge state".into(),
                expected: self.eta_len(),
                found: eta.len(),
            });
        }
        self.edges
            .energies()
            .iter()
            .enumerate()
            .map(|(k, h)| h.gradient(&self.edge_slice(eta, k)))
            .collect()
    }

    /// `σ = -(B ⊗ I) μ`.
    pub fn coupling(&self, mu: &[DVector<f64>]) -> Vec<DVector<f64>> {
        let mut sigma = vec![DVector::zeros(self.port_dim); self.nodes.len()];
        for (k, &(from, to)) in self.graph.edges().iter().enumerate() {
            sigma[from] -= &mu[k];
            sigma[to] += &mu[k];
        }
        sigma
    }

    fn solve_algebraic(
        &self,
        i: usize,
        sigma: &DVector<f64>,
        u: &DVector<f64>,
    ) -> Result<AlgebraicSolution> {
        let node = &self.nodes[i];
        let forcing = &node.g * (sigma + u + &node.delta);
        let w = -(&self.jr_inv[i] * &forcing);
        let state = node.energy.inverse_gradient(&w).map_err(|e| Error::AlgebraicInconsistency {
            node: i + 1,
            reason: e.to_string(),
        })?;
        let gradient = node.energy.gradient_unchecked(&state);
        let residual = ((&node.j - &node.r) * &gradient + &forcing).amax();
        Ok(AlgebraicSolution { node: i, gradient, state, residual })
    }

    /// Solves every algebraic node's constraint for its gradient and state,
    /// given the edge state and the inputs.
    pub fn eliminate_algebraic(
        &self,
        eta: &DVector<f64>,
        u: &[DVector<f64>],
    ) -> Result<Vec<AlgebraicSolution>> {
        self.check_inputs(u)?;
        let mu = self.edge_gradients(eta)?;
        let sigma = self.coupling(&mu);
        self.algebraic_nodes()
            .into_iter()
            .map(|i| self.solve_algebraic(i, &sigma[i], &u[i]))
            .collect()
    }

    /// Evaluates all node and edge quantities at `(η, x⁽¹⁾)`.
    pub fn evaluate(
        &self,
        eta: &DVector<f64>,
        x1: &DVector<f64>,
        u: &[DVector<f64>],
    ) -> Result<NetworkEval> {
        self.check_inputs(u)?;
        if x1.len() != self.x1_len {
            return Err(Error::DimensionMismatch {
                what: "differential node states".into(),
                expected: self.x1_len,
                found: x1.len(),
            });
        }
        let mu = self.edge_gradients(eta)?;
        let sigma = self.coupling(&mu);
        let n = self.nodes.len();
        let mut grads = vec![DVector::zeros(0); n];
        let mut states = vec![DVector::zeros(0); n];
        let mut alg_residual: f64 = 0.0;
        for (p, &i) in self.diff_nodes.iter().enumerate() {
            let xi = x1.rows(self.x1_offsets[p], self.nodes[i].state_dim()).into_owned();
            grads[i] = self.nodes[i].energy.gradient(&xi)?;
            states[i] = xi;
        }
        for i in self.algebraic_nodes() {
            let sol = self.solve_algebraic(i, &sigma[i], &u[i])?;
            alg_residual = alg_residual.max(sol.residual);
            grads[i] = sol.gradient;
            states[i] = sol.state;
        }
        let outputs = self
            .nodes
            .iter()
            .zip(&grads)
            .map(|(node, g)| node.g.transpose() * g)
            .collect();
        Ok(NetworkEval { mu, sigma, grads, states, outputs, alg_residual })
    }

    /// `η̇` and `ẋ⁽¹⁾` from an evaluation.
    pub fn rates_from_eval(&self, ev: &NetworkEval, u: &[DVector<f64>]) -> (DVector<f64>, DVector<f64>) {
        let m = self.port_dim;
        let mut eta_dot = DVector::zeros(self.eta_len());
        for (k, &(from, to)) in self.graph.edges().iter().enumerate() {
            eta_dot
                .rows_mut(k * m, m)
                .copy_from(&(&ev.outputs[from] - &ev.outputs[to]));
        }
        let mut x1_dot = DVector::zeros(self.x1_len);
        for (p, &i) in self.diff_nodes.iter().enumerate() {
            let node = &self.nodes[i];
            let rate = (&node.j - &node.r) * &ev.grads[i] + &node.g * (&ev.sigma[i] + &u[i] + &node.delta);
            x1_dot.rows_mut(self.x1_offsets[p], node.state_dim()).copy_from(&rate);
        }
        (eta_dot, x1_dot)
    }

    /// Time derivative of `(η, x⁽¹⁾)`.
    pub fn vector_field(
        &self,
        s: &ReducedState,
        u: &[DVector<f64>],
    ) -> Result<(DVector<f64>, DVector<f64>)> {
        let ev = self.evaluate(&s.eta, &s.x1, u)?;
        Ok(self.rates_from_eval(&ev, u))
    }

    /// Outputs `y_i = G_iᵀ ∇H_i(x_i)` of every node.
    pub fn outputs(&self, s: &ReducedState, u: &[DVector<f64>]) -> Result<Vec<DVector<f64>>> {
        Ok(self.evaluate(&s.eta, &s.x1, u)?.outputs)
    }

    /// Total stored energy `Σ H_i(x_i) + Σ H_{e,k}(η_k)` over differential
    /// nodes and edges.
    pub fn stored_energy(&self, s: &ReducedState) -> Result<f64> {
        let mut total = 0.0;
        for (p, &i) in self.diff_nodes.iter().enumerate() {
            let xi = s.x1.rows(self.x1_offsets[p], self.nodes[i].state_dim()).into_owned();
            total += self.nodes[i].energy.value(&xi)?;
        }
        for (k, h) in self.edges.energies().iter().enumerate() {
            total += h.value(&self.edge_slice(&s.eta, k))?;
        }
        Ok(total)
    }

    /// Mismatch in the dissipation identity
    /// `d/dt (H_n + H_e) = -Σ ∇H_iᵀ R_i ∇H_i + Σ y_iᵀ (u_i + δ_i)`,
    /// with the left side obtained from `s_dot` by the chain rule. Only
    /// defined for networks without algebraic nodes.
    pub fn power_balance_residual(
        &self,
        s: &ReducedState,
        u: &[DVector<f64>],
        eta_dot: &DVector<f64>,
        x1_dot: &DVector<f64>,
    ) -> Result<f64> {
        if !self.algebraic_nodes().is_empty() {
            return Err(Error::Unsupported(
                "power balance residual is only defined without algebraic nodes".into(),
            ));
        }
        let ev = self.evaluate(&s.eta, &s.x1, u)?;
        let m = self.port_dim;
        let mut h_dot = 0.0;
        for (k, mu) in ev.mu.iter().enumerate() {
            h_dot += mu.dot(&eta_dot.rows(k * m, m));
        }
        let mut supplied = 0.0;
        for (p, &i) in self.diff_nodes.iter().enumerate() {
            let node = &self.nodes[i];
            h_dot += ev.grads[i].dot(&x1_dot.rows(self.x1_offsets[p], node.state_dim()));
            supplied += -ev.grads[i].dot(&(&node.r * &ev.grads[i])) + ev.outputs[i].dot(&(&u[i] + &node.delta));
        }
        Ok((h_dot - supplied).abs())
    }
}

fn validate_node(i: usize, node: &NodeSpec, port_dim: usize) -> Result<DMatrix<f64>> {
    let bad = |reason: String| Error::InvalidNode { node: i + 1, reason };
    let n = node.state_dim();
    if n == 0 || !node.j.is_square() || node.r.shape() != (n, n) {
        return Err(bad("J and R must be square and of equal size".into()));
    }
    if node.g.nrows() != n {
        return Err(bad(format!("G has {} rows, expected {n}", node.g.nrows())));
    }
    if node.g.ncols() != port_dim {
        return Err(bad(format!(
            "port dimension {} differs from the network's {port_dim}",
            node.g.ncols()
        )));
    }
    if node.energy.dim() != n {
        return Err(bad(format!("energy has dimension {}, expected {n}", node.energy.dim())));
    }
    if node.delta.len() != port_dim {
        return Err(bad(format!("disturbance has length {}, expected {port_dim}", node.delta.len())));
    }
    let skew = skew_error(&node.j);
    if skew > SKEW_TOL {
        return Err(bad(format!("J is not skew-symmetric (‖J + Jᵀ‖ = {skew:e})")));
    }
    let asym = (&node.r - node.r.transpose()).amax();
    if asym > SKEW_TOL * (1.0 + node.r.amax()) {
        return Err(bad(format!("R is not symmetric (asymmetry {asym:e})")));
    }
    let min_eig = min_sym_eigenvalue(&node.r);
    if min_eig <= 0.0 {
        return Err(bad(format!("R is not positive definite (smallest eigenvalue {min_eig:e})")));
    }
    if column_rank(&node.g) != port_dim {
        return Err(bad("G does not have full column rank".into()));
    }
    let jr = &node.j - &node.r;
    let cond = condition_number(&jr);
    if cond > CONDITION_WARN {
        log::warn!("node {}: J - R has condition number {cond:e}", i + 1);
    }
    jr.try_inverse().ok_or_else(|| bad("J - R is singular".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    fn two_node(classes: [NodeClass; 2], gamma: f64) -> NetworkSpec {
        let nodes = classes
            .iter()
            .map(|c| NodeSpec::scalar(*c, 1.0, 1.0, 0.0).unwrap())
            .collect();
        NetworkSpec::new(Graph::path(2).unwrap(), nodes, EdgeBank::uniform_cosine(1, gamma).unwrap()).unwrap()
    }

    #[test]
    fn load_node_elimination() {
        // A ω = δ - P with A = 2 and δ - P = 4.
        let load = NodeSpec::scalar(NodeClass::C22, 2.0, 1.0, 4.0).unwrap();
        let other = NodeSpec::scalar(NodeClass::C12, 1.0, 1.0, 0.0).unwrap();
        let net = NetworkSpec::new(
            Graph::path(2).unwrap(),
            vec![other, load],
            EdgeBank::uniform_cosine(1, 1.0).unwrap(),
        )
        .unwrap();
        let sols = net.eliminate_algebraic(&v(&[0.0]), &net.zero_inputs()).unwrap();
        assert_eq!(sols.len(), 1);
        assert_relative_eq!(sols[0].state[0], 2.0, epsilon = 1e-15);
        assert!(sols[0].residual <= 1e-10);
    }

    #[test]
    fn zero_forcing_elimination() {
        let net = two_node([NodeClass::C12, NodeClass::C22], 1.0);
        let sols = net.eliminate_algebraic(&v(&[0.0]), &net.zero_inputs()).unwrap();
        assert_eq!(sols[0].gradient[0], 0.0);
        assert_eq!(sols[0].state[0], 0.0);
    }

    #[test]
    fn toy_elimination_signs() {
        let net = two_node([NodeClass::C22, NodeClass::C22], 1.0);
        let sols = net.eliminate_algebraic(&v(&[PI / 6.0]), &net.zero_inputs()).unwrap();
        // Node 1 is the +1 end of the edge, node 2 the -1 end.
        assert_relative_eq!(sols[0].gradient[0], -0.5, epsilon = 1e-15);
        assert_relative_eq!(sols[1].gradient[0], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn algebraic_inconsistency_names_node() {
        let mut node = NodeSpec::scalar(NodeClass::C22, 1.0, 1.0, 0.0).unwrap();
        node.energy = Hamiltonian::neg_cosine(v(&[1.0])).unwrap();
        node.delta = v(&[5.0]);
        let other = NodeSpec::scalar(NodeClass::C12, 1.0, 1.0, 0.0).unwrap();
        let net = NetworkSpec::new(
            Graph::path(2).unwrap(),
            vec![other, node],
            EdgeBank::uniform_cosine(1, 1.0).unwrap(),
        )
        .unwrap();
        match net.eliminate_algebraic(&v(&[0.0]), &net.zero_inputs()) {
            Err(Error::AlgebraicInconsistency { node, .. }) => assert_eq!(node, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn two_node_vector_field() {
        let net = two_node([NodeClass::C12, NodeClass::C12], 1.0);
        let s = ReducedState { eta: v(&[0.0]), x1: v(&[1.0, -1.0]), xi: v(&[]) };
        let (eta_dot, x1_dot) = net.vector_field(&s, &net.zero_inputs()).unwrap();
        assert_eq!(eta_dot, v(&[2.0]));
        assert_eq!(x1_dot, v(&[-1.0, 1.0]));
    }

    #[test]
    fn quadratic_outputs() {
        let node = NodeSpec::new(
            DMatrix::zeros(2, 2),
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2),
            Hamiltonian::diagonal_quadratic(&[1.0, 1.0]).unwrap(),
            NodeClass::C12,
            v(&[0.0, 0.0]),
        );
        let e = Hamiltonian::neg_cosine(v(&[1.0, 1.0])).unwrap();
        let net = NetworkSpec::new(
            Graph::path(2).unwrap(),
            vec![node.clone(), node],
            EdgeBank::new(vec![e]).unwrap(),
        )
        .unwrap();
        let s = ReducedState { eta: v(&[0.0, 0.0]), x1: v(&[1.0, 2.0, 1.0, 2.0]), xi: v(&[]) };
        let y = net.outputs(&s, &net.zero_inputs()).unwrap();
        assert_eq!(y[0], v(&[1.0, 2.0]));
        assert_eq!(y[0], y[1]);
    }

    #[test]
    fn rejects_bad_nodes() {
        let mut bad_j = NodeSpec::scalar(NodeClass::C12, 1.0, 1.0, 0.0).unwrap();
        bad_j.j = DMatrix::from_element(1, 1, 1e-9);
        let ok = NodeSpec::scalar(NodeClass::C12, 1.0, 1.0, 0.0).unwrap();
        let edges = EdgeBank::uniform_cosine(1, 1.0).unwrap();
        let g = Graph::path(2).unwrap();
        assert!(matches!(
            NetworkSpec::new(g.clone(), vec![ok.clone(), bad_j], edges.clone()),
            Err(Error::InvalidNode { node: 2, .. })
        ));
        let mut bad_r = ok.clone();
        bad_r.r = DMatrix::from_element(1, 1, 0.0);
        assert!(NetworkSpec::new(g.clone(), vec![bad_r, ok.clone()], edges.clone()).is_err());
        let mut bad_g = ok.clone();
        bad_g.g = DMatrix::zeros(1, 1);
        assert!(NetworkSpec::new(g.clone(), vec![bad_g, ok.clone()], edges.clone()).is_err());
        assert!(NetworkSpec::new(g, vec![ok], edges).is_err());
    }

    #[test]
    fn inputs_rejected_on_uncontrolled_nodes() {
        let net = two_node([NodeClass::C11, NodeClass::C12], 1.0);
        let s = ReducedState { eta: v(&[0.0]), x1: v(&[0.0, 0.0]), xi: v(&[]) };
        assert!(net.vector_field(&s, &[v(&[1.0]), v(&[0.0])]).is_ok());
        assert!(net.vector_field(&s, &[v(&[0.0]), v(&[1.0])]).is_err());
    }

    #[test]
    fn frozen_inputs_fold_into_disturbance() {
        let net = two_node([NodeClass::C11, NodeClass::C21], 1.0);
        let frozen = net.with_frozen_inputs(&[(1, v(&[0.25]))]).unwrap();
        assert_eq!(frozen.nodes()[1].class, NodeClass::C22);
        assert_eq!(frozen.nodes()[1].delta, v(&[0.25]));
        assert!(net.with_frozen_inputs(&[(1, v(&[0.25]))]).unwrap().with_frozen_inputs(&[(1, v(&[0.0]))]).is_err());
    }

    #[test]
    fn power_balance_requires_pure_ode() {
        let net = two_node([NodeClass::C12, NodeClass::C22], 1.0);
        let s = ReducedState { eta: v(&[0.1]), x1: v(&[0.3]), xi: v(&[]) };
        let u = net.zero_inputs();
        let (e, x) = net.vector_field(&s, &u).unwrap();
        assert!(matches!(net.power_balance_residual(&s, &u, &e, &x), Err(Error::Unsupported(_))));
    }

    #[test]
    fn power_balance_at_equilibrium_is_zero() {
        let net = two_node([NodeClass::C12, NodeClass::C12], 1.0);
        let s = ReducedState { eta: v(&[0.0]), x1: v(&[0.0, 0.0]), xi: v(&[]) };
        let u = net.zero_inputs();
        let (e, x) = net.vector_field(&s, &u).unwrap();
        assert_eq!(e, v(&[0.0]));
        assert_eq!(x, v(&[0.0, 0.0]));
        assert_eq!(net.power_balance_residual(&s, &u, &e, &x).unwrap(), 0.0);
    }

    fn skew_and_pd(n: usize) -> impl Strategy<Value = (DMatrix<f64>, DMatrix<f64>, DVector<f64>)> {
        (
            proptest::collection::vec(-2.0..2.0f64, n * n),
            proptest::collection::vec(-1.0..1.0f64, n * n),
            proptest::collection::vec(-1.0..1.0f64, n),
        )
            .prop_map(move |(a, b, z)| {
                let a = DMatrix::from_vec(n, n, a);
                let b = DMatrix::from_vec(n, n, b);
                let j = &a - a.transpose();
                let r = &b * b.transpose() + DMatrix::identity(n, n) * 0.1;
                (j, r, DVector::from_vec(z))
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn dissipative_quadratic_forms((j, r, z) in (1usize..5).prop_flat_map(skew_and_pd)) {
            prop_assume!(z.norm() > 1e-6);
            let jr = &j - &r;
            prop_assert!(z.dot(&(&jr * &z)) < 0.0);
            let inv = jr.try_inverse().unwrap();
            prop_assert!(z.dot(&(&inv * &z)) < 0.0);
        }

        #[test]
        fn power_balance_holds_on_random_states(
            r in proptest::collection::vec(0.2..3.0f64, 3),
            p in proptest::collection::vec(0.2..3.0f64, 3),
            d in proptest::collection::vec(-1.0..1.0f64, 3),
            x in proptest::collection::vec(-2.0..2.0f64, 3),
            eta in proptest::collection::vec(-1.4..1.4f64, 3),
        ) {
            let nodes = (0..3)
                .map(|i| NodeSpec::scalar(NodeClass::C12, r[i], p[i], d[i]).unwrap())
                .collect();
            let net = NetworkSpec::new(
                Graph::cycle(3).unwrap(),
                nodes,
                EdgeBank::uniform_cosine(3, 1.5).unwrap(),
            ).unwrap();
            let s = ReducedState { eta: v(&eta), x1: v(&x), xi: v(&[]) };
            let u = net.zero_inputs();
            let (e, xd) = net.vector_field(&s, &u).unwrap();
            prop_assert!(net.power_balance_residual(&s, &u, &e, &xd).unwrap() < 1e-8);
        }

        #[test]
        fn elimination_residual_is_small(
            r in proptest::collection::vec(0.2..3.0f64, 4),
            p in proptest::collection::vec(0.2..3.0f64, 4),
            d in proptest::collection::vec(-1.0..1.0f64, 4),
            eta in proptest::collection::vec(-1.4..1.4f64, 4),
        ) {
            let classes = [NodeClass::C12, NodeClass::C22, NodeClass::C22, NodeClass::C12];
            let nodes = (0..4)
                .map(|i| NodeSpec::scalar(classes[i], r[i], p[i], d[i]).unwrap())
                .collect();
            let net = NetworkSpec::new(
                Graph::cycle(4).unwrap(),
                nodes,
                EdgeBank::uniform_cosine(4, 1.0).unwrap(),
            ).unwrap();
            for sol in net.eliminate_algebraic(&v(&eta), &net.zero_inputs()).unwrap() {
                prop_assert!(sol.residual <= 1e-10);
            }
        }
    }
}
