//! Steady states: agreement output, optimal input allocation, and the
//! feasibility solve for the edge states.
//!
//! All functions take the *analysis* network: every node in class 11/21 is
//! one whose steady input is an unknown (or prescribed through `u_bar`), and
//! constant inputs have already been folded into disturbances.

use std::collections::BTreeMap;

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::is_acyclic;
use crate::network::NetworkSpec;

/// Verdict threshold on the steady-state residuals.
pub const FEASIBILITY_TOL: f64 = 1e-9;

/// Steady input of one node; `node` is 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeInput {
    pub node: usize,
    pub value: Vec<f64>,
}

impl NodeInput {
    pub fn index(&self) -> usize {
        self.node - 1
    }

    pub fn vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.value)
    }
}

/// Result of a feasibility solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteadyStateReport {
    pub y_star: Vec<f64>,
    pub eta_bar: Option<Vec<f64>>,
    pub lambda: Option<Vec<f64>>,
    pub u_bar: Option<Vec<NodeInput>>,
    /// Largest violation of each steady-state equation group.
    pub residuals: BTreeMap<String, f64>,
    pub feasible: bool,
    pub eta_unique: bool,
    pub iterations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

impl SteadyStateReport {
    pub fn y_star_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.y_star)
    }

    pub fn eta_bar_vector(&self) -> Option<DVector<f64>> {
        self.eta_bar.as_ref().map(|e| DVector::from_column_slice(e))
    }

    pub fn lambda_vector(&self) -> Option<DVector<f64>> {
        self.lambda.as_ref().map(|l| DVector::from_column_slice(l))
    }

    /// Steady inputs in controlled-node order.
    pub fn u_bar_vectors(&self) -> Vec<DVector<f64>> {
        self.u_bar
            .as_ref()
            .map(|u| u.iter().map(NodeInput::vector).collect())
            .unwrap_or_default()
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals.values().copied().fold(0.0, f64::max)
    }
}

/// Optimal steady inputs `ū_i = Q_i⁻¹ λ` for the controlled nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimalInputs {
    pub nodes: Vec<usize>,
    pub lambda: DVector<f64>,
    pub u_bar: Vec<DVector<f64>>,
}

impl OptimalInputs {
    pub fn cost(&self, q: &[DMatrix<f64>]) -> f64 {
        quadratic_cost(q, &self.u_bar)
    }
}

/// `½ Σ ūᵢᵀ Q_i ūᵢ`.
pub fn quadratic_cost(q: &[DMatrix<f64>], u: &[DVector<f64>]) -> f64 {
    q.iter().zip(u).map(|(q, u)| 0.5 * u.dot(&(q * u))).sum()
}

fn require_identity_ports(spec: &NetworkSpec, what: &str) -> Result<()> {
    if let Some(i) = spec.nodes().iter().position(|n| !n.has_identity_port()) {
        return Err(Error::Unsupported(format!(
            "{what} needs G = I at every node (node {} differs)",
            i + 1
        )));
    }
    Ok(())
}

/// `Σ_i (J_i - R_i)`.
fn summed_jr(spec: &NetworkSpec) -> DMatrix<f64> {
    let n = spec.nodes()[0].state_dim();
    spec.nodes()
        .iter()
        .fold(DMatrix::zeros(n, n), |acc, node| acc + &node.j - &node.r)
}

fn summed_delta(spec: &NetworkSpec) -> DVector<f64> {
    spec.nodes()
        .iter()
        .fold(DVector::zeros(spec.port_dim()), |acc, node| acc + &node.delta)
}

/// Common output of the uncontrolled network: `y* = -(Σ(J_i - R_i))⁻¹ Σ δ_i`.
/// Requires `G_i = I` everywhere.
pub fn agreement_output(spec: &NetworkSpec) -> Result<DVector<f64>> {
    require_identity_ports(spec, "closed-form agreement output")?;
    let jr = summed_jr(spec);
    let rhs = -summed_delta(spec);
    jr.lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Infeasible("Σ(J - R) is singular".into()))
}

/// `Σ(J_i - R_i) y* + Σ ū_i + Σ δ_i`, the balance every steady input
/// allocation must satisfy when `G = I`.
pub fn balance_residual(spec: &NetworkSpec, y_star: &DVector<f64>, u_bar: &[DVector<f64>]) -> DVector<f64> {
    let mut r = summed_jr(spec) * y_star + summed_delta(spec);
    for u in u_bar {
        r += u;
    }
    r
}

fn check_weights(spec: &NetworkSpec, q: &[DMatrix<f64>], y_star: &DVector<f64>) -> Result<Vec<usize>> {
    require_identity_ports(spec, "optimal input allocation")?;
    let controlled = spec.controlled_nodes();
    if controlled.is_empty() {
        return Err(Error::Infeasible("no controlled nodes to allocate inputs to".into()));
    }
    if q.len() != controlled.len() {
        return Err(Error::DimensionMismatch {
            what: "weight matrices".into(),
            expected: controlled.len(),
            found: q.len(),
        });
    }
    let m = spec.port_dim();
    if y_star.len() != m {
        return Err(Error::DimensionMismatch { what: "y*".into(), expected: m, found: y_star.len() });
    }
    for (k, qk) in q.iter().enumerate() {
        if qk.shape() != (m, m) {
            return Err(Error::DimensionMismatch {
                what: format!("weight of node {}", controlled[k] + 1),
                expected: m,
                found: qk.nrows(),
            });
        }
    }
    Ok(controlled)
}

fn spd_inverse(q: &DMatrix<f64>, node: usize) -> Result<DMatrix<f64>> {
    if (q - q.transpose()).amax() > 1e-12 * (1.0 + q.amax()) {
        return Err(Error::InvalidController(format!("weight of node {} is not symmetric", node + 1)));
    }
    Cholesky::new(q.clone())
        .map(|c| c.inverse())
        .ok_or_else(|| Error::InvalidController(format!("weight of node {} is not positive definite", node + 1)))
}

/// Closed-form minimiser of `½ Σ ūᵢᵀ Q_i ūᵢ` under the steady balance:
/// `λ = -(Σ Q_i⁻¹)⁻¹ (Σ(J_i - R_i) y* + Σ δ_i)`, `ū_i = Q_i⁻¹ λ`.
///
/// `q` lists one weight per controlled node, in ascending node order.
pub fn lambda_optimal(spec: &NetworkSpec, q: &[DMatrix<f64>], y_star: &DVector<f64>) -> Result<OptimalInputs> {
    let nodes = check_weights(spec, q, y_star)?;
    let m = spec.port_dim();
    let q_inv = q
        .iter()
        .zip(&nodes)
        .map(|(q, &i)| spd_inverse(q, i))
        .collect::<Result<Vec<_>>>()?;
    let sum_inv = q_inv.iter().fold(DMatrix::zeros(m, m), |acc, qi| acc + qi);
    let c = summed_jr(spec) * y_star + summed_delta(spec);
    let lambda = -sum_inv
        .lu()
        .solve(&c)
        .ok_or_else(|| Error::Infeasible("Σ Q_i⁻¹ is singular".into()))?;
    let u_bar = q_inv.iter().map(|qi| qi * &lambda).collect();
    Ok(OptimalInputs { nodes, lambda, u_bar })
}

/// Independent route to the same optimum: assembles and solves the KKT
/// system of the equality-constrained quadratic program directly.
pub fn qp_oracle(spec: &NetworkSpec, q: &[DMatrix<f64>], y_star: &DVector<f64>) -> Result<OptimalInputs> {
    let nodes = check_weights(spec, q, y_star)?;
    let m = spec.port_dim();
    let nc = nodes.len();
    let dim = m * nc + m;
    let mut kkt = DMatrix::zeros(dim, dim);
    let mut rhs = DVector::zeros(dim);
    for (k, qk) in q.iter().enumerate() {
        kkt.view_mut((k * m, k * m), (m, m)).copy_from(qk);
        for d in 0..m {
            kkt[(m * nc + d, k * m + d)] = 1.0;
            kkt[(k * m + d, m * nc + d)] = 1.0;
        }
    }
    let c = summed_jr(spec) * y_star + summed_delta(spec);
    rhs.rows_mut(m * nc, m).copy_from(&(-c));
    let sol = kkt
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Infeasible("KKT system is singular".into()))?;
    let u_bar = (0..nc).map(|k| sol.rows(k * m, m).into_owned()).collect();
    let lambda = -sol.rows(m * nc, m).into_owned();
    Ok(OptimalInputs { nodes, lambda, u_bar })
}

/// Options for the damped Newton feasibility solve.
#[derive(Debug, Clone)]
pub struct NewtonOptions {
    pub max_iterations: usize,
    pub tolerance: f64,
    /// Iterates are kept inside the edge domain shrunk by this factor.
    pub shrink: f64,
    /// Starting edge state; zero when absent.
    pub eta0: Option<DVector<f64>>,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self { max_iterations: 200, tolerance: FEASIBILITY_TOL, shrink: 0.999, eta0: None }
    }
}

struct FeasibilityProblem<'a> {
    spec: &'a NetworkSpec,
    y_star: &'a DVector<f64>,
    controlled: Vec<usize>,
    /// Position of each node among the controlled ones.
    slot: Vec<Option<usize>>,
    fixed_u: Option<&'a [DVector<f64>]>,
    /// `G_iᵀ (J_i - R_i)⁻¹ G_i`.
    k: Vec<DMatrix<f64>>,
}

impl<'a> FeasibilityProblem<'a> {
    fn new(spec: &'a NetworkSpec, y_star: &'a DVector<f64>, u_bar: Option<&'a [DVector<f64>]>) -> Result<Self> {
        let m = spec.port_dim();
        if y_star.len() != m {
            return Err(Error::DimensionMismatch { what: "y*".into(), expected: m, found: y_star.len() });
        }
        let controlled = spec.controlled_nodes();
        if let Some(u) = u_bar {
            if u.len() != controlled.len() {
                return Err(Error::DimensionMismatch {
                    what: "steady inputs".into(),
                    expected: controlled.len(),
                    found: u.len(),
                });
            }
            if let Some(bad) = u.iter().find(|u| u.len() != m) {
                return Err(Error::DimensionMismatch { what: "steady input".into(), expected: m, found: bad.len() });
            }
        }
        let mut slot = vec![None; spec.num_nodes()];
        for (s, &i) in controlled.iter().enumerate() {
            slot[i] = Some(s);
        }
        let k = spec
            .nodes()
            .iter()
            .enumerate()
            .map(|(i, n)| n.g.transpose() * spec.jr_inverse(i) * &n.g)
            .collect();
        Ok(Self { spec, y_star, controlled, slot, fixed_u: u_bar, k })
    }

    fn free_inputs(&self) -> bool {
        self.fixed_u.is_none()
    }

    fn num_unknowns(&self) -> usize {
        let m = self.spec.port_dim();
        self.spec.eta_len() + if self.free_inputs() { m * self.controlled.len() } else { 0 }
    }

    fn input(&self, z: &DVector<f64>, node: usize) -> DVector<f64> {
        let m = self.spec.port_dim();
        match self.slot[node] {
            None => DVector::zeros(m),
            Some(s) => match self.fixed_u {
                Some(u) => u[s].clone(),
                None => z.rows(self.spec.eta_len() + s * m, m).into_owned(),
            },
        }
    }

    fn eta(&self, z: &DVector<f64>) -> DVector<f64> {
        z.rows(0, self.spec.eta_len()).into_owned()
    }

    /// `(B_i ⊗ I) μ` for every node.
    fn edge_inflow(&self, mu: &[DVector<f64>]) -> Vec<DVector<f64>> {
        self.spec.coupling(mu).into_iter().map(|s| -s).collect()
    }

    /// `∇H_i(x̄_i)` implied by the node equation.
    fn node_gradients(&self, z: &DVector<f64>) -> Result<Vec<DVector<f64>>> {
        let mu = self.spec.edge_gradients(&self.eta(z))?;
        let inflow = self.edge_inflow(&mu);
        Ok(self
            .spec
            .nodes()
            .iter()
            .enumerate()
            .map(|(i, node)| {
                let u = self.input(z, i);
                self.spec.jr_inverse(i) * (&node.g * (&inflow[i] - &u - &node.delta))
            })
            .collect())
    }

    fn residual(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        let m = self.spec.port_dim();
        let grads = self.node_gradients(z)?;
        let mut r = DVector::zeros(m * self.spec.num_nodes());
        for (i, node) in self.spec.nodes().iter().enumerate() {
            r.rows_mut(i * m, m).copy_from(&(node.g.transpose() * &grads[i] - self.y_star));
        }
        Ok(r)
    }

    fn jacobian(&self, z: &DVector<f64>) -> Result<DMatrix<f64>> {
        let m = self.spec.port_dim();
        let eta = self.eta(z);
        let mut jac = DMatrix::zeros(m * self.spec.num_nodes(), self.num_unknowns());
        for (k, (&(from, to), h)) in self
            .spec
            .graph()
            .edges()
            .iter()
            .zip(self.spec.edges().energies())
            .enumerate()
        {
            let hess = h.hessian(&self.spec.edge_slice(&eta, k))?;
            for (node, sign) in [(from, 1.0), (to, -1.0)] {
                let block = &self.k[node] * &hess * sign;
                jac.view_mut((node * m, k * m), (m, m)).copy_from(&block);
            }
        }
        if self.free_inputs() {
            for (s, &node) in self.controlled.iter().enumerate() {
                jac.view_mut((node * m, self.spec.eta_len() + s * m), (m, m))
                    .copy_from(&(-&self.k[node]));
            }
        }
        Ok(jac)
    }

    fn project(&self, z: &mut DVector<f64>, shrink: f64) {
        let m = self.spec.port_dim();
        for (k, h) in self.spec.edges().energies().iter().enumerate() {
            let mut eta_k = z.rows(k * m, m).into_owned();
            h.domain().project_shrunk(&mut eta_k, shrink);
            z.rows_mut(k * m, m).copy_from(&eta_k);
        }
    }
}

/// Residual of the steady-state equations at edge state `eta` with the
/// controlled nodes held at `u_bar` (ascending node order): each node's
/// implied output minus `y*`, stacked.
pub fn feasibility_residual(
    spec: &NetworkSpec,
    y_star: &DVector<f64>,
    eta: &DVector<f64>,
    u_bar: &[DVector<f64>],
) -> Result<DVector<f64>> {
    let problem = FeasibilityProblem::new(spec, y_star, Some(u_bar))?;
    problem.residual(eta)
}

/// Solves the steady-state equations for `η̄` given the agreement value
/// `y*`.
///
/// With `u_bar = None` the steady inputs of the controlled nodes are free
/// unknowns; otherwise they are held at `u_bar` (one entry per controlled
/// node, ascending). Failure to converge is reported as an infeasible
/// verdict, not an error.
pub fn solve_feasibility(
    spec: &NetworkSpec,
    y_star: &DVector<f64>,
    u_bar: Option<&[DVector<f64>]>,
) -> Result<SteadyStateReport> {
    solve_feasibility_with(spec, y_star, u_bar, &NewtonOptions::default())
}

pub fn solve_feasibility_with(
    spec: &NetworkSpec,
    y_star: &DVector<f64>,
    u_bar: Option<&[DVector<f64>]>,
    opts: &NewtonOptions,
) -> Result<SteadyStateReport> {
    let problem = FeasibilityProblem::new(spec, y_star, u_bar)?;

    let mut z = DVector::zeros(problem.num_unknowns());
    if let Some(eta0) = &opts.eta0 {
        if eta0.len() != spec.eta_len() {
            return Err(Error::DimensionMismatch {
                what: "initial edge state".into(),
                expected: spec.eta_len(),
                found: eta0.len(),
            });
        }
        z.rows_mut(0, spec.eta_len()).copy_from(eta0);
    }
    problem.project(&mut z, opts.shrink);

    let mut r = problem.residual(&z)?;
    let mut iterations = 0;
    let mut message = None;
    // Keep polishing below the verdict tolerance; Newton is cheap near the root.
    let target = opts.tolerance * 1e-4;
    while r.amax() > target {
        if iterations >= opts.max_iterations {
            message = Some(format!("no convergence in {} iterations", opts.max_iterations));
            break;
        }
        iterations += 1;
        let jac = problem.jacobian(&z)?;
        let svd = jac.svd(true, true);
        let eps = 1e-12 * svd.singular_values.max().max(1e-300);
        let step = -svd.solve(&r, eps).map_err(|e| Error::Infeasible(e.to_string()))?;
        if step.amax() < 1e-14 {
            message = Some("Newton step stagnated".into());
            break;
        }
        let f0 = 0.5 * r.norm_squared();
        let mut alpha = 1.0;
        let mut accepted = None;
        while alpha >= 1e-12 {
            let mut trial = &z + &step * alpha;
            problem.project(&mut trial, opts.shrink);
            let rt = problem.residual(&trial)?;
            if 0.5 * rt.norm_squared() <= (1.0 - 2e-4 * alpha) * f0 {
                accepted = Some((trial, rt));
                break;
            }
            alpha *= 0.5;
        }
        let Some((trial, rt)) = accepted else {
            message = Some("line search failed to reduce the residual".into());
            break;
        };
        if (&trial - &z).amax() < 1e-14 {
            message = Some("Newton step stagnated".into());
            break;
        }
        z = trial;
        r = rt;
    }

    let eta_bar = problem.eta(&z);
    let u_solved: Vec<DVector<f64>> = problem.controlled.iter().map(|&i| problem.input(&z, i)).collect();
    let mut residuals = BTreeMap::new();
    residuals.insert("newton".to_string(), r.amax());
    let mut feasible = r.amax() <= opts.tolerance.max(FEASIBILITY_TOL);
    if feasible {
        message = None;
    }

    // Recover the node states and check the original equations at them.
    let grads = problem.node_gradients(&z)?;
    let mu = spec.edge_gradients(&eta_bar)?;
    let inflow = problem.edge_inflow(&mu);
    let mut agreement: f64 = 0.0;
    let mut nodal: f64 = 0.0;
    for (i, node) in spec.nodes().iter().enumerate() {
        match node.energy.inverse_gradient(&grads[i]) {
            Ok(x) => {
                let g = node.energy.gradient_unchecked(&x);
                agreement = agreement.max((node.g.transpose() * &g - y_star).amax());
                let u = problem.input(&z, i);
                let bal = (&node.j - &node.r) * &g - &node.g * &inflow[i] + &node.g * (u + &node.delta);
                nodal = nodal.max(bal.amax());
            }
            Err(e) => {
                feasible = false;
                message.get_or_insert_with(|| format!("node {} has no steady state: {e}", i + 1));
                agreement = f64::INFINITY;
            }
        }
    }
    residuals.insert("agreement".to_string(), agreement);
    residuals.insert("nodal_balance".to_string(), nodal);
    feasible &= agreement <= FEASIBILITY_TOL && nodal <= FEASIBILITY_TOL;
    let interior = spec
        .edges()
        .energies()
        .iter()
        .enumerate()
        .all(|(k, h)| h.domain().contains(&spec.edge_slice(&eta_bar, k)));
    if !interior {
        feasible = false;
        message.get_or_insert_with(|| "edge state on the domain boundary".into());
    }
    if !feasible && message.is_none() {
        message = Some("residual above feasibility tolerance".into());
    }

    let u_bar_report = if problem.controlled.is_empty() {
        None
    } else {
        Some(
            problem
                .controlled
                .iter()
                .zip(&u_solved)
                .map(|(&i, u)| NodeInput { node: i + 1, value: u.iter().copied().collect() })
                .collect(),
        )
    };
    Ok(SteadyStateReport {
        y_star: y_star.iter().copied().collect(),
        eta_bar: Some(eta_bar.iter().copied().collect()),
        lambda: None,
        u_bar: u_bar_report,
        residuals,
        feasible,
        eta_unique: is_acyclic(spec.graph()),
        iterations,
        message,
    })
}

/// Optimal allocation followed by the feasibility solve with the inputs
/// held at their optimal values.
pub fn solve_optimal(spec: &NetworkSpec, q: &[DMatrix<f64>], y_star: &DVector<f64>) -> Result<SteadyStateReport> {
    let opt = lambda_optimal(spec, q, y_star)?;
    let mut report = solve_feasibility(spec, y_star, Some(&opt.u_bar))?;
    report.lambda = Some(opt.lambda.iter().copied().collect());
    report
        .residuals
        .insert("balance".to_string(), balance_residual(spec, y_star, &opt.u_bar).amax());
    Ok(report)
}

/// Node states `x̄_i` of a feasible steady state.
pub fn equilibrium_states(spec: &NetworkSpec, report: &SteadyStateReport) -> Result<Vec<DVector<f64>>> {
    if !report.feasible {
        return Err(Error::Infeasible(
            report.message.clone().unwrap_or_else(|| "steady state is infeasible".into()),
        ));
    }
    let eta = report
        .eta_bar_vector()
        .ok_or_else(|| Error::Infeasible("report carries no edge state".into()))?;
    let controlled = spec.controlled_nodes();
    let u = report.u_bar_vectors();
    if u.len() != controlled.len() {
        return Err(Error::DimensionMismatch {
            what: "steady inputs in report".into(),
            expected: controlled.len(),
            found: u.len(),
        });
    }
    let mu = spec.edge_gradients(&eta)?;
    let sigma = spec.coupling(&mu);
    let mut inputs = spec.zero_inputs();
    for (s, &i) in controlled.iter().enumerate() {
        inputs[i] = u[s].clone();
    }
    spec.nodes()
        .iter()
        .enumerate()
        .map(|(i, node)| {
            let w = -(spec.jr_inverse(i) * (&node.g * (&sigma[i] + &inputs[i] + &node.delta)));
            node.energy.inverse_gradient(&w)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::Hamiltonian;
    use crate::graph::{Graph, NodeClass};
    use crate::network::{EdgeBank, NodeSpec, ReducedState};
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    fn scalar_net(classes: &[NodeClass], r: &[f64], delta: &[f64], graph: Graph, gamma: f64) -> NetworkSpec {
        let nodes = classes
            .iter()
            .enumerate()
            .map(|(i, c)| NodeSpec::scalar(*c, r[i], 1.0, delta[i]).unwrap())
            .collect();
        let m = graph.num_edges();
        NetworkSpec::new(graph, nodes, EdgeBank::uniform_cosine(m, gamma).unwrap()).unwrap()
    }

    fn eye1() -> DMatrix<f64> {
        DMatrix::identity(1, 1)
    }

    #[test]
    fn scalar_agreement_output() {
        let net = scalar_net(&[NodeClass::C12; 2], &[1.0, 1.0], &[1.0, 3.0], Graph::path(2).unwrap(), 5.0);
        assert_relative_eq!(agreement_output(&net).unwrap()[0], 2.0, epsilon = 1e-15);
        let zero = scalar_net(&[NodeClass::C12; 2], &[1.0, 2.0], &[0.0, 0.0], Graph::path(2).unwrap(), 5.0);
        assert_eq!(agreement_output(&zero).unwrap()[0], 0.0);
    }

    #[test]
    fn two_dimensional_agreement_output() {
        let j = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        let node = NodeSpec::new(
            j.clone(),
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2),
            Hamiltonian::diagonal_quadratic(&[1.0, 1.0]).unwrap(),
            NodeClass::C12,
            v(&[1.0, 0.0]),
        );
        let edge = Hamiltonian::neg_cosine(v(&[1.0, 1.0])).unwrap();
        let net = NetworkSpec::new(Graph::path(2).unwrap(), vec![node.clone(), node], EdgeBank::new(vec![edge]).unwrap())
            .unwrap();
        let y = agreement_output(&net).unwrap();
        assert_relative_eq!(y, v(&[0.5, -0.5]), epsilon = 1e-15);
        // Substituting back: Σ(J - R) y* = -Σ d.
        let lhs = (j - DMatrix::identity(2, 2)) * 2.0 * &y;
        assert_relative_eq!(lhs, v(&[-2.0, 0.0]), epsilon = 1e-14);
    }

    #[test]
    fn agreement_output_requires_identity_ports() {
        let mut node = NodeSpec::scalar(NodeClass::C12, 1.0, 1.0, 0.0).unwrap();
        node.g = DMatrix::from_element(1, 1, 2.0);
        let other = NodeSpec::scalar(NodeClass::C12, 1.0, 1.0, 0.0).unwrap();
        let net = NetworkSpec::new(Graph::path(2).unwrap(), vec![node, other], EdgeBank::uniform_cosine(1, 1.0).unwrap())
            .unwrap();
        assert!(matches!(agreement_output(&net), Err(Error::Unsupported(_))));
    }

    #[test]
    fn lambda_examples() {
        let g = Graph::path(2).unwrap();
        let c = [NodeClass::C11, NodeClass::C11];
        let net = scalar_net(&c, &[1.0, 1.0], &[2.0, 4.0], g.clone(), 5.0);
        let opt = lambda_optimal(&net, &[eye1(), eye1()], &v(&[0.0])).unwrap();
        assert_relative_eq!(opt.lambda[0], -3.0, epsilon = 1e-15);
        assert_relative_eq!(opt.u_bar[0][0], -3.0, epsilon = 1e-15);
        assert_relative_eq!(opt.u_bar[1][0], -3.0, epsilon = 1e-15);
        assert!(balance_residual(&net, &v(&[0.0]), &opt.u_bar).amax() <= 1e-10);

        let zero = scalar_net(&c, &[1.0, 1.0], &[0.0, 0.0], g.clone(), 5.0);
        let opt = lambda_optimal(&zero, &[eye1(), eye1()], &v(&[0.0])).unwrap();
        assert_eq!(opt.lambda[0], 0.0);

        let net = scalar_net(&c, &[1.0, 1.0], &[1.0, 2.0], g, 5.0);
        let q = [eye1(), eye1() * 2.0];
        let opt = lambda_optimal(&net, &q, &v(&[0.0])).unwrap();
        assert_relative_eq!(opt.lambda[0], -2.0, epsilon = 1e-14);
        assert_relative_eq!(opt.u_bar[0][0], -2.0, epsilon = 1e-14);
        assert_relative_eq!(opt.u_bar[1][0], -1.0, epsilon = 1e-14);
        let oracle = qp_oracle(&net, &q, &v(&[0.0])).unwrap();
        for (a, b) in opt.u_bar.iter().zip(&oracle.u_bar) {
            assert!((a - b).amax() <= 1e-8);
        }
        assert!((opt.lambda - oracle.lambda).amax() <= 1e-8);
    }

    #[test]
    fn single_controlled_node_takes_the_whole_balance() {
        let net = scalar_net(
            &[NodeClass::C11, NodeClass::C12, NodeClass::C22],
            &[1.0, 2.0, 0.5],
            &[0.2, -0.7, 0.1],
            Graph::path(3).unwrap(),
            3.0,
        );
        let y = v(&[0.3]);
        let oracle = qp_oracle(&net, &[eye1() * 4.0], &y).unwrap();
        // -(Σ(J - R) y* + Σ δ) = -(-3.5 * 0.3 - 0.4)
        assert_relative_eq!(oracle.u_bar[0][0], 1.45, epsilon = 1e-14);
    }

    #[test]
    fn empty_controlled_set_is_an_error() {
        let net = scalar_net(&[NodeClass::C12; 2], &[1.0, 1.0], &[0.0, 0.0], Graph::path(2).unwrap(), 1.0);
        assert!(lambda_optimal(&net, &[], &v(&[0.0])).is_err());
        assert!(qp_oracle(&net, &[], &v(&[0.0])).is_err());
    }

    fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(lo) * f(mid) <= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn inverter_load_edge_state() {
        // Node 1 inverter (21), node 2 load (22) with δ_L = -0.5.
        let net = scalar_net(&[NodeClass::C21, NodeClass::C22], &[1.0, 1.0], &[0.0, -0.5], Graph::path(2).unwrap(), 1.0);
        let opt = lambda_optimal(&net, &[eye1()], &v(&[0.0])).unwrap();
        assert_relative_eq!(opt.u_bar[0][0], 0.5, epsilon = 1e-15);
        let report = solve_feasibility(&net, &v(&[0.0]), Some(&opt.u_bar)).unwrap();
        assert!(report.feasible, "{report:?}");
        // Load row: 0 = -(-1) sin η - 0.5.
        let oracle = bisect(|e| e.sin() - 0.5, -1.5, 1.5);
        let eta = report.eta_bar.as_ref().unwrap()[0];
        assert!((eta - oracle).abs() < 1e-9);
        assert_relative_eq!(eta, PI / 6.0, epsilon = 1e-9);
        assert!(report.eta_unique);
    }

    #[test]
    fn zero_disturbance_gives_zero_edge_state() {
        let net = scalar_net(&[NodeClass::C12, NodeClass::C22, NodeClass::C12], &[1.0; 3], &[0.0; 3], Graph::cycle(3).unwrap(), 1.0);
        let report = solve_feasibility(&net, &v(&[0.0]), None).unwrap();
        assert!(report.feasible);
        assert!(report.eta_bar.unwrap().iter().all(|e| *e == 0.0));
        assert!(!report.eta_unique);
    }

    #[test]
    fn overloaded_line_is_infeasible() {
        let net = scalar_net(&[NodeClass::C21, NodeClass::C22], &[1.0, 1.0], &[0.0, -1.5], Graph::path(2).unwrap(), 1.0);
        let opt = lambda_optimal(&net, &[eye1()], &v(&[0.0])).unwrap();
        let report = solve_feasibility(&net, &v(&[0.0]), Some(&opt.u_bar)).unwrap();
        assert!(!report.feasible);
        assert!(report.max_residual() > 0.4);
        assert!(equilibrium_states(&net, &report).is_err());
    }

    #[test]
    fn free_inputs_mode() {
        let net = scalar_net(
            &[NodeClass::C11, NodeClass::C12, NodeClass::C22],
            &[1.0, 2.0, 0.5],
            &[0.2, -0.7, 0.1],
            Graph::path(3).unwrap(),
            3.0,
        );
        let y = v(&[0.3]);
        let report = solve_feasibility(&net, &y, None).unwrap();
        assert!(report.feasible, "{report:?}");
        let u = report.u_bar_vectors();
        assert_relative_eq!(u[0][0], 1.45, epsilon = 1e-9);
        let states = equilibrium_states(&net, &report).unwrap();
        for (node, x) in net.nodes().iter().zip(&states) {
            assert!((node.energy.gradient(x).unwrap()[0] - 0.3).abs() <= 1e-9);
        }
    }

    #[test]
    fn equilibrium_substitution_is_stationary() {
        let net = scalar_net(
            &[NodeClass::C12, NodeClass::C22, NodeClass::C12, NodeClass::C22],
            &[1.0, 0.5, 2.0, 1.5],
            &[0.3, -0.2, 0.1, 0.05],
            Graph::path(4).unwrap(),
            2.0,
        );
        let y = agreement_output(&net).unwrap();
        let report = solve_feasibility(&net, &y, None).unwrap();
        assert!(report.feasible);
        let states = equilibrium_states(&net, &report).unwrap();
        let s = ReducedState { eta: report.eta_bar_vector().unwrap(), x1: net.stack_x1(&states), xi: v(&[]) };
        let (e, x) = net.vector_field(&s, &net.zero_inputs()).unwrap();
        assert!(e.amax() <= 1e-9 && x.amax() <= 1e-9);
    }

    #[test]
    fn microgrid_like_equilibrium_is_at_rest() {
        // Generator node with H = p²/(2M): y* = 0 gives p̄ = 0.
        let mut gen = NodeSpec::scalar(NodeClass::C11, 1.0, 1.0 / 5.0, 0.0).unwrap();
        gen.delta = v(&[0.0]);
        let load = NodeSpec::scalar(NodeClass::C22, 1.0, 1.0, -0.3).unwrap();
        let net = NetworkSpec::new(Graph::path(2).unwrap(), vec![gen, load], EdgeBank::uniform_cosine(1, 1.0).unwrap())
            .unwrap();
        let report = solve_optimal(&net, &[eye1()], &v(&[0.0])).unwrap();
        let states = equilibrium_states(&net, &report).unwrap();
        assert!(states.iter().all(|x| x[0].abs() < 1e-12));
    }

    #[test]
    fn quadratic_state_from_agreement() {
        let net = scalar_net(&[NodeClass::C12; 2], &[1.0, 1.0], &[2.0, 2.0], Graph::path(2).unwrap(), 1.0);
        let y = agreement_output(&net).unwrap();
        assert_relative_eq!(y[0], 2.0, epsilon = 1e-15);
        let report = solve_feasibility(&net, &y, None).unwrap();
        let states = equilibrium_states(&net, &report).unwrap();
        assert_relative_eq!(states[0][0], 2.0, epsilon = 1e-12);
    }
}
