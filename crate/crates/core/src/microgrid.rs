//! Microgrid front-end: synchronous generators, droop-controlled inverters
//! and frequency-dependent loads on a lossless network, regulated to zero
//! frequency deviation with an optimal power split.
//!
//! Bus `i` with frequency deviation `ω_i` and net injection `δ_i` obeys
//!
//! ```text
//! generator:  M_i ω̇_i = −A_i ω_i − P_i + u_i + δ_i     (state p_i = M_i ω_i)
//! inverter:         0 = −A_i ω_i − P_i + u_i + δ_i
//! load:             0 = −A_i ω_i − P_i + δ_i
//! ```
//!
//! where `P_i = Σ_k B_ik γ_k sin η_k` and the line angle differences `η`
//! follow `η̇ = Bᵀω`. Each line carries `γ_k = Im(Y_ij)·V_i·V_j`, supplied
//! directly as a positive number. A negative `δ_i` is consumption.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::control::ControllerSpec;
use crate::error::{Error, Result};
use crate::graph::{Graph, NodeClass};
use crate::energy::Hamiltonian;
use crate::network::{EdgeBank, NetworkSpec, NodeSpec};
use crate::steadystate::qp_oracle;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BusKind {
    Generator,
    Inverter,
    Load,
}

impl BusKind {
    pub fn is_actuated(self) -> bool {
        !matches!(self, BusKind::Load)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bus {
    pub kind: BusKind,
    /// Inertia `M_i`; generators only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inertia: Option<f64>,
    /// Damping, droop or load-frequency coefficient `A_i`.
    pub damping: f64,
    /// Net constant injection (negative for consumption).
    #[serde(default)]
    pub delta: f64,
    /// Dispatch weight `q_i`; actuated buses only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
}

impl Bus {
    pub fn generator(inertia: f64, damping: f64, delta: f64, q: f64) -> Self {
        Self { kind: BusKind::Generator, inertia: Some(inertia), damping, delta, q: Some(q) }
    }

    pub fn inverter(damping: f64, delta: f64, q: f64) -> Self {
        Self { kind: BusKind::Inverter, inertia: None, damping, delta, q: Some(q) }
    }

    pub fn load(damping: f64, delta: f64) -> Self {
        Self { kind: BusKind::Load, inertia: None, damping, delta, q: None }
    }
}

/// Transmission line between two buses (1-based).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Line {
    pub from: usize,
    pub to: usize,
    pub gamma: f64,
}

/// Actuated bus whose input is stuck at a constant level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FailedBus {
    pub bus: usize,
    pub level: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub buses: Vec<Bus>,
    pub lines: Vec<Line>,
    /// Communication links between actuated buses (1-based). When absent the
    /// working actuated buses are chained in index order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comm: Option<Vec<(usize, usize)>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failed: Vec<FailedBus>,
}

fn positive(x: f64) -> bool {
    x.is_finite() && x > 0.0
}

impl GridConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidGrid(m));
        if self.buses.len() < 2 {
            return bad("a grid needs at least two buses".into());
        }
        for (i, b) in self.buses.iter().enumerate() {
            let id = i + 1;
            if !positive(b.damping) {
                return bad(format!("bus {id}: damping must be positive, got {}", b.damping));
            }
            if !b.delta.is_finite() {
                return bad(format!("bus {id}: delta must be finite"));
            }
            match (b.kind, b.inertia) {
                (BusKind::Generator, Some(m)) if positive(m) => {}
                (BusKind::Generator, _) => return bad(format!("bus {id}: generator needs a positive inertia")),
                (_, Some(_)) => return bad(format!("bus {id}: only generators carry an inertia")),
                _ => {}
            }
            match (b.kind.is_actuated(), b.q) {
                (true, Some(q)) if positive(q) => {}
                (true, _) => return bad(format!("bus {id}: actuated bus needs a positive dispatch weight q")),
                (false, Some(_)) => return bad(format!("bus {id}: loads carry no dispatch weight")),
                _ => {}
            }
        }
        if self.lines.is_empty() {
            return bad("a grid needs at least one line".into());
        }
        for (k, l) in self.lines.iter().enumerate() {
            if !positive(l.gamma) {
                return bad(format!("line {} ({}-{}): gamma must be positive, got {}", k + 1, l.from, l.to, l.gamma));
            }
        }
        self.graph()?;
        let actuated = self.actuated_buses();
        for f in &self.failed {
            if !actuated.contains(&f.bus) {
                return bad(format!("failed bus {} is not an actuated bus", f.bus));
            }
            if !f.level.is_finite() {
                return bad(format!("failed bus {}: level must be finite", f.bus));
            }
        }
        if let Some(comm) = &self.comm {
            for &(a, b) in comm {
                if !actuated.contains(&a) || !actuated.contains(&b) {
                    return bad(format!("communication link {a}-{b} must join actuated buses"));
                }
            }
        }
        if self.working_buses().is_empty() {
            return bad("every actuated bus has failed; nothing left to control".into());
        }
        Ok(())
    }

    /// Electrical graph.
    pub fn graph(&self) -> Result<Graph> {
        let edges: Vec<(usize, usize)> = self.lines.iter().map(|l| (l.from, l.to)).collect();
        Graph::from_one_based(self.buses.len(), &edges).map_err(|e| Error::InvalidGrid(e.to_string()))
    }

    /// Actuated buses (1-based).
    pub fn actuated_buses(&self) -> Vec<usize> {
        (1..=self.buses.len()).filter(|&i| self.buses[i - 1].kind.is_actuated()).collect()
    }

    /// Actuated buses that have not failed (1-based).
    pub fn working_buses(&self) -> Vec<usize> {
        self.actuated_buses()
            .into_iter()
            .filter(|i| !self.failed.iter().any(|f| f.bus == *i))
            .collect()
    }

    fn failed_level(&self, bus: usize) -> Option<f64> {
        self.failed.iter().find(|f| f.bus == bus).map(|f| f.level)
    }

    /// Nine-bus example grid: three generators, three inverters, three loads.
    pub fn nine_bus() -> Self {
        let buses = vec![
            Bus::generator(4.0, 1.0, 0.0, 1.0),
            Bus::generator(5.0, 1.2, 0.0, 1.5),
            Bus::generator(6.0, 0.8, 0.0, 2.0),
            Bus::inverter(0.5, 0.05, 1.0),
            Bus::inverter(0.6, -0.05, 2.0),
            Bus::inverter(0.7, 0.0, 3.0),
            Bus::load(1.0, -0.6),
            Bus::load(1.5, -0.8),
            Bus::load(1.2, -0.5),
        ];
        let line = |from, to, gamma| Line { from, to, gamma };
        let lines = vec![
            line(1, 7, 6.0),
            line(7, 2, 5.0),
            line(2, 8, 6.5),
            line(8, 3, 5.5),
            line(3, 9, 6.0),
            line(9, 1, 4.5),
            line(4, 7, 5.0),
            line(5, 8, 4.0),
            line(6, 9, 4.5),
            line(4, 5, 8.0),
        ];
        let comm = vec![(1, 2), (2, 3), (3, 4), (4, 5), (5, 6), (6, 1)];
        Self { buses, lines, comm: Some(comm), failed: Vec::new() }
    }
}

/// Network and distributed controller for a grid.
pub fn build(cfg: &GridConfig) -> Result<(NetworkSpec, ControllerSpec)> {
    cfg.validate()?;
    let graph = cfg.graph()?;
    let mut nodes = Vec::with_capacity(cfg.buses.len());
    for (i, b) in cfg.buses.iter().enumerate() {
        let failed = cfg.failed_level(i + 1);
        let class = match (b.kind, failed.is_some()) {
            (BusKind::Generator, false) => NodeClass::C11,
            (BusKind::Generator, true) => NodeClass::C12,
            (BusKind::Inverter, false) => NodeClass::C21,
            (BusKind::Inverter, true) | (BusKind::Load, _) => NodeClass::C22,
        };
        // Generators store momentum p = Mω, so H = p²/(2M) and ∇H = ω.
        let stiffness = b.inertia.map_or(1.0, |m| 1.0 / m);
        let node = NodeSpec::new(
            DMatrix::zeros(1, 1),
            DMatrix::from_element(1, 1, b.damping),
            DMatrix::identity(1, 1),
            Hamiltonian::diagonal_quadratic(&[stiffness])?,
            class,
            DVector::from_element(1, b.delta + failed.unwrap_or(0.0)),
        );
        nodes.push(node);
    }
    let edges = cfg
        .lines
        .iter()
        .map(|l| Hamiltonian::neg_cosine(DVector::from_element(1, l.gamma)))
        .collect::<Result<Vec<_>>>()?;
    let spec = NetworkSpec::new(graph, nodes, EdgeBank::new(edges)?)?;

    let working = cfg.working_buses();
    let local = |bus: usize| working.iter().position(|&w| w == bus);
    let comm_edges: Vec<(usize, usize)> = match &cfg.comm {
        Some(links) => links.iter().filter_map(|&(a, b)| Some((local(a)?, local(b)?))).collect(),
        None => (1..working.len()).map(|k| (k - 1, k)).collect(),
    };
    let comm = Graph::new(working.len(), comm_edges).map_err(|e| {
        Error::InvalidGrid(format!("communication graph over the working actuated buses: {e}"))
    })?;
    let q = working
        .iter()
        .map(|&b| DMatrix::from_element(1, 1, cfg.buses[b - 1].q.expect("validated")))
        .collect();
    let ctrl = ControllerSpec::distributed(&spec, DVector::zeros(1), q, comm)?;
    Ok((spec, ctrl))
}

/// Marks actuated buses (1-based) as failed with constant input levels.
pub fn inject_failure(cfg: &GridConfig, buses: &[usize], levels: &[f64]) -> Result<GridConfig> {
    if buses.len() != levels.len() {
        return Err(Error::InvalidGrid(format!("{} failed buses but {} levels", buses.len(), levels.len())));
    }
    let mut out = cfg.clone();
    let actuated = cfg.actuated_buses();
    for (&bus, &level) in buses.iter().zip(levels) {
        if !actuated.contains(&bus) {
            return Err(Error::InvalidGrid(format!("bus {bus} is not actuated and cannot fail")));
        }
        match out.failed.iter_mut().find(|f| f.bus == bus) {
            Some(f) => f.level = level,
            None => out.failed.push(FailedBus { bus, level }),
        }
    }
    out.failed.sort_by_key(|f| f.bus);
    if out.working_buses().is_empty() {
        return Err(Error::InvalidGrid("failing every actuated bus leaves nothing to control".into()));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BusInput {
    pub bus: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LineFlow {
    pub line: usize,
    pub from: usize,
    pub to: usize,
    /// `γ_k sin η̄_k`, positive from `from` to `to`.
    pub flow: f64,
    /// `|flow| / γ_k`.
    pub loading: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DispatchReport {
    pub feasible: bool,
    pub lambda: f64,
    pub u_bar: Vec<BusInput>,
    pub eta_bar: Vec<f64>,
    pub line_flows: Vec<LineFlow>,
    /// Most heavily loaded line (1-based).
    pub binding_line: Option<usize>,
    /// `|Σū + Σδ|` including frozen levels.
    pub balance_residual: f64,
    /// Largest difference between the closed form and the direct QP solve.
    pub qp_deviation: f64,
    pub residuals: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

/// Optimal power split, steady line angles and flows.
pub fn dispatch(cfg: &GridConfig) -> Result<DispatchReport> {
    let (spec, ctrl) = build(cfg)?;
    let analysis = ctrl.analysis_network(&spec)?;
    let report = ctrl.steady_state(&spec, None)?;
    let q: Vec<DMatrix<f64>> = match ctrl.kind() {
        crate::control::ControllerKind::Distributed { q, .. } => q.clone(),
        _ => unreachable!("grid controller is distributed"),
    };
    let oracle = qp_oracle(&analysis, &q, &DVector::zeros(1))?;
    let u_bar = report.u_bar_vectors();
    let lambda = report.lambda.as_ref().map_or(0.0, |l| l[0]);
    let qp_deviation = u_bar
        .iter()
        .zip(&oracle.u_bar)
        .map(|(a, b)| (a - b).amax())
        .fold((lambda - oracle.lambda[0]).abs(), f64::max);

    let injections: Vec<f64> = analysis
        .nodes()
        .iter()
        .enumerate()
        .map(|(i, n)| {
            let u = ctrl.active_nodes().iter().position(|&a| a == i).map_or(0.0, |k| u_bar[k][0]);
            u + n.delta[0]
        })
        .collect();
    let balance_residual = injections.iter().sum::<f64>().abs();

    let eta_bar = report.eta_bar.clone().unwrap_or_default();
    let flows: Vec<f64> = if report.feasible {
        eta_bar.iter().zip(&cfg.lines).map(|(e, l)| l.gamma * e.sin()).collect()
    } else {
        // Minimum-norm flows that balance every bus; the first line that
        // would need |flow| ≥ γ is the one that binds.
        let b = spec.incidence();
        let p = DVector::from_column_slice(&injections);
        b.clone().svd(true, true).solve(&p, 1e-12).map(|f| f.iter().copied().collect()).unwrap_or_default()
    };
    let line_flows: Vec<LineFlow> = cfg
        .lines
        .iter()
        .zip(&flows)
        .enumerate()
        .map(|(k, (l, &flow))| LineFlow { line: k + 1, from: l.from, to: l.to, flow, loading: flow.abs() / l.gamma })
        .collect();
    let binding_line = line_flows
        .iter()
        .max_by(|a, b| a.loading.total_cmp(&b.loading))
        .map(|f| f.line);
    let mut message = report.message.clone();
    if !report.feasible {
        if let Some(k) = binding_line {
            let f = &line_flows[k - 1];
            message = Some(format!(
                "{}; line {} ({}-{}) would need {:.4} of its capacity",
                message.unwrap_or_else(|| "infeasible".into()),
                k,
                f.from,
                f.to,
                f.loading
            ));
        }
    }
    Ok(DispatchReport {
        feasible: report.feasible,
        lambda,
        u_bar: ctrl.active_nodes().iter().zip(&u_bar).map(|(&i, u)| BusInput { bus: i + 1, value: u[0] }).collect(),
        eta_bar,
        line_flows,
        binding_line,
        balance_residual,
        qp_deviation,
        residuals: report.residuals,
        message,
    })
}
