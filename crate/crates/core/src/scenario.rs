//! JSON scenario files and the commands that run them.
//!
//! A scenario describes either a general network (`graph` + `nodes`) or a
//! microgrid (`grid`), plus a controller, an integrator and an optional list
//! of experiments. Commands produce a [`RunReport`] (JSON) and, for
//! simulations, a trajectory CSV. Reports carry no wall-clock data so that
//! reruns are byte-identical; timings go to a separate file.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::control::{ControllerKind, ControllerSpec};
use crate::energy::Hamiltonian;
use crate::error::{Error, Result};
use crate::graph::{Graph, NodeClass};
use crate::microgrid::{self, DispatchReport, GridConfig};
use crate::network::{
    column_rank, condition_number, min_sym_eigenvalue, skew_error, EdgeBank, NetworkSpec, NodeSpec, ReducedState,
    SKEW_TOL,
};
use crate::sim::{
    basin_probe, integrate, lyapunov_series, sample_sphere, write_csv, Equilibrium, ExitEvent, IntegratorConfig, Method,
    MonitorReport, ProbeReport,
};
use crate::steadystate::{lambda_optimal, qp_oracle, SteadyStateReport};

pub const SCHEMA_VERSION: &str = "v1";

/// Settle tolerance used when neither the experiment nor `--tol` sets one.
pub const DEFAULT_SETTLE_TOL: f64 = 1e-6;
/// Settle tolerance of `probe` runs.
pub const PROBE_SETTLE_TOL: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Meta {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnergySection {
    /// `½ zᵀPz + bᵀz`.
    Quadratic {
        p: Vec<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        b: Option<Vec<f64>>,
    },
    /// `½ Σ p_k z_k²`.
    DiagonalQuadratic { p: Vec<f64> },
    /// `−Σ γ_k cos z_k` on `(−π/2, π/2)`.
    NegCosine { gamma: Vec<f64> },
}

impl EnergySection {
    fn dim(&self) -> usize {
        match self {
            EnergySection::Quadratic { p, .. } => p.len(),
            EnergySection::DiagonalQuadratic { p } => p.len(),
            EnergySection::NegCosine { gamma } => gamma.len(),
        }
    }

    fn check(&self, what: &str) -> Result<()> {
        let bad = |m: String| Err(Error::Scenario(format!("{what}: {m}")));
        match self {
            EnergySection::Quadratic { p, b } => {
                matrix(p, what)?;
                if p.iter().any(|row| row.len() != p.len()) {
                    return bad("quadratic p must be square".into());
                }
                if let Some(b) = b {
                    if b.len() != p.len() {
                        return bad("quadratic b must match p".into());
                    }
                }
            }
            EnergySection::DiagonalQuadratic { p } => {
                if p.is_empty() || p.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                    return bad("diagonal_quadratic p must be non-empty and positive".into());
                }
            }
            EnergySection::NegCosine { gamma } => {
                if gamma.is_empty() || gamma.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                    return bad(format!("neg_cosine gamma must be positive, got {gamma:?}"));
                }
            }
        }
        Ok(())
    }

    fn build(&self) -> Result<Hamiltonian> {
        match self {
            EnergySection::Quadratic { p, b } => {
                let p = matrix(p, "quadratic p")?;
                let b = b.as_ref().map_or_else(|| DVector::zeros(p.nrows()), |b| DVector::from_column_slice(b));
                Hamiltonian::quadratic(p, b)
            }
            EnergySection::DiagonalQuadratic { p } => Hamiltonian::diagonal_quadratic(p),
            EnergySection::NegCosine { gamma } => Hamiltonian::neg_cosine(DVector::from_column_slice(gamma)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeSection {
    pub from: usize,
    pub to: usize,
    pub energy: EnergySection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSection {
    pub num_nodes: usize,
    pub edges: Vec<EdgeSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSection {
    pub class: NodeClass,
    /// Defaults to zero.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub j: Option<Vec<Vec<f64>>>,
    pub r: Vec<Vec<f64>>,
    /// Defaults to the identity.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<Vec<Vec<f64>>>,
    pub energy: EnergySection,
    /// Defaults to zero.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WarmStart {
    /// Half-width of the uniform noise added to the steady controller state.
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrozenNode {
    pub node: usize,
    pub level: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ControllerSection {
    None {
        /// Agreement value to analyse against; computed when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        y_star: Option<Vec<f64>>,
    },
    Constant {
        levels: Vec<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        y_star: Option<Vec<f64>>,
    },
    Integral {
        y_star: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        xi0: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        warm_start: Option<WarmStart>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        frozen: Vec<FrozenNode>,
    },
    /// For grids only `xi0`/`warm_start` may be given; weights and links come
    /// from the grid section.
    Distributed {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        y_star: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        q: Option<Vec<Vec<Vec<f64>>>>,
        /// Links between actuated nodes (1-based node ids).
        #[serde(default, skip_serializing_if = "Option::is_none")]
        comm: Option<Vec<(usize, usize)>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        xi0: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        warm_start: Option<WarmStart>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        frozen: Vec<FrozenNode>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodName {
    Dp45,
    Rk4,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSection {
    pub method: MethodName,
    pub t_end: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rel_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abs_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record_stride: Option<usize>,
}

impl IntegratorSection {
    pub fn config(&self) -> Result<IntegratorConfig> {
        let method = match self.method {
            MethodName::Rk4 => {
                if self.rel_tol.is_some() || self.abs_tol.is_some() || self.max_step.is_some() {
                    return Err(Error::Scenario("rk4 takes only `step`".into()));
                }
                Method::Rk4 { step: self.step.ok_or_else(|| Error::Scenario("rk4 needs `step`".into()))? }
            }
            MethodName::Dp45 => {
                if self.step.is_some() {
                    return Err(Error::Scenario("dp45 takes rel_tol/abs_tol/max_step, not `step`".into()));
                }
                let Method::Dp45 { rel_tol, abs_tol, max_step } = Method::default() else { unreachable!() };
                Method::Dp45 {
                    rel_tol: self.rel_tol.unwrap_or(rel_tol),
                    abs_tol: self.abs_tol.unwrap_or(abs_tol),
                    max_step: self.max_step.unwrap_or(max_step),
                }
            }
        };
        let cfg = IntegratorConfig { method, t_end: self.t_end, record_stride: self.record_stride.unwrap_or(1) };
        cfg.validate().map_err(|e| Error::Scenario(e.to_string()))?;
        Ok(cfg)
    }
}

/// Initial state of simulations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSection {
    /// The target equilibrium, optionally displaced to a random point at the
    /// given Euclidean distance. With `nominal`, the equilibrium of the
    /// scenario without its failures/frozen nodes is used instead.
    Equilibrium {
        #[serde(default)]
        offset: f64,
        #[serde(default)]
        nominal: bool,
    },
    Explicit {
        eta: Vec<f64>,
        x1: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        xi: Option<Vec<f64>>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Check,
    Simulate,
    Dispatch,
    Validate,
    Probe,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Check => "check",
            Command::Simulate => "simulate",
            Command::Dispatch => "dispatch",
            Command::Validate => "validate",
            Command::Probe => "probe",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub settle_tol: Option<f64>,
    /// Settle window in seconds; defaults to a tenth of the horizon.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub allow_infeasible: Option<bool>,
    /// File stem for outputs; defaults to `<name>_<command>`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Experiment {
    pub command: Command,
    #[serde(default)]
    pub params: ExperimentParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub version: String,
    pub meta: Meta,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph: Option<GraphSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nodes: Option<Vec<NodeSection>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub controller: Option<ControllerSection>,
    pub integrator: IntegratorSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialSection>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub experiments: Vec<Experiment>,
}

fn matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if n == 0 || m == 0 || rows.iter().any(|r| r.len() != m) {
        return Err(Error::Scenario(format!("{what}: expected a non-empty rectangular matrix")));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Scenario(format!("{what}: entries must be finite")));
    }
    Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

fn vector(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

/// Network and controller built from a scenario.
#[derive(Debug, Clone)]
pub struct Model {
    pub spec: NetworkSpec,
    pub ctrl: ControllerSpec,
    /// Agreement value supplied for controllers without a reference.
    pub y_star: Option<DVector<f64>>,
}

impl Scenario {
    /// Parses and schema-checks a scenario.
    pub fn from_json(text: &str) -> Result<Self> {
        let sc: Scenario = serde_json::from_str(text).map_err(|e| Error::Scenario(e.to_string()))?;
        sc.check_schema()?;
        Ok(sc)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Scenario(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// SHA-256 of the canonical serialization.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("scenario serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    pub fn is_grid(&self) -> bool {
        self.grid.is_some()
    }

    /// Structural checks that need no numerical work.
    pub fn check_schema(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Scenario(m));
        if self.version != SCHEMA_VERSION {
            return bad(format!("unsupported version {:?}; expected {SCHEMA_VERSION:?}", self.version));
        }
        self.integrator.config()?;
        match (&self.graph, &self.nodes, &self.grid) {
            (Some(graph), Some(nodes), None) => self.check_general(graph, nodes)?,
            (None, None, Some(grid)) => {
                grid.validate()?;
                match &self.controller {
                    None | Some(ControllerSection::Distributed { y_star: None, q: None, comm: None, .. }) => {}
                    Some(_) => {
                        return bad(
                            "grid scenarios take only a distributed controller without y_star/q/comm (set those in the grid section)".into(),
                        )
                    }
                }
                if let Some(ControllerSection::Distributed { frozen, .. }) = &self.controller {
                    if !frozen.is_empty() {
                        return bad("grid failures belong in grid.failed".into());
                    }
                }
            }
            (_, _, Some(_)) => return bad("`grid` excludes `graph` and `nodes`".into()),
            _ => return bad("a scenario needs either `graph` + `nodes` or `grid`".into()),
        }
        if let Some(InitialSection::Equilibrium { offset, .. }) = &self.initial {
            if !(offset.is_finite() && *offset >= 0.0) {
                return bad("initial offset must be non-negative".into());
            }
        }
        for (k, e) in self.experiments.iter().enumerate() {
            let p = &e.params;
            let pos = |v: Option<f64>| v.is_none_or(|v| v.is_finite() && v > 0.0);
            if !pos(p.settle_tol) || !pos(p.window) || !pos(p.t_end) || !pos(p.radius) || p.trials == Some(0) {
                return bad(format!("experiment {}: numeric parameters must be positive", k + 1));
            }
        }
        Ok(())
    }

    fn check_general(&self, graph: &GraphSection, nodes: &[NodeSection]) -> Result<()> {
        let bad = |m: String| Err(Error::Scenario(m));
        if nodes.len() != graph.num_nodes {
            return bad(format!("graph has {} nodes but {} node entries are given", graph.num_nodes, nodes.len()));
        }
        let mut port_dim = None;
        for (i, n) in nodes.iter().enumerate() {
            let what = format!("node {}", i + 1);
            n.energy.check(&what)?;
            let dim = n.energy.dim();
            let r = matrix(&n.r, &format!("{what} r"))?;
            if r.shape() != (dim, dim) {
                return bad(format!("{what}: r must be {dim}x{dim}"));
            }
            if let Some(j) = &n.j {
                if matrix(j, &format!("{what} j"))?.shape() != (dim, dim) {
                    return bad(format!("{what}: j must be {dim}x{dim}"));
                }
            }
            let m = match &n.g {
                Some(g) => {
                    let g = matrix(g, &format!("{what} g"))?;
                    if g.nrows() != dim {
                        return bad(format!("{what}: g must have {dim} rows"));
                    }
                    g.ncols()
                }
                None => dim,
            };
            if *port_dim.get_or_insert(m) != m {
                return bad(format!("{what}: all nodes must share one port dimension"));
            }
            if let Some(d) = &n.delta {
                if d.len() != m || d.iter().any(|v| !v.is_finite()) {
                    return bad(format!("{what}: delta must have {m} finite entries"));
                }
            }
        }
        let m = port_dim.unwrap_or(0);
        for (k, e) in graph.edges.iter().enumerate() {
            let what = format!("edge {} ({}-{})", k + 1, e.from, e.to);
            e.energy.check(&what)?;
            if e.energy.dim() != m {
                return bad(format!("{what}: energy dimension must equal the port dimension {m}"));
            }
        }
        self.general_graph(graph)?;
        let check_len = |v: &Option<Vec<f64>>, what: &str| -> Result<()> {
            match v {
                Some(v) if v.len() != m => bad(format!("controller {what} must have {m} entries")),
                _ => Ok(()),
            }
        };
        match &self.controller {
            None => {}
            Some(ControllerSection::None { y_star }) => check_len(y_star, "y_star")?,
            Some(ControllerSection::Constant { y_star, levels }) => {
                check_len(y_star, "y_star")?;
                if levels.iter().any(|l| l.len() != m) {
                    return bad(format!("constant levels must have {m} entries each"));
                }
            }
            Some(ControllerSection::Integral { y_star, xi0, warm_start, frozen }) => {
                check_len(&Some(y_star.clone()), "y_star")?;
                Self::check_start(xi0, warm_start)?;
                Self::check_frozen(frozen, m)?;
            }
            Some(ControllerSection::Distributed { y_star, q, xi0, warm_start, frozen, .. }) => {
                if y_star.is_none() || q.is_none() {
                    return bad("distributed controller needs y_star and q".into());
                }
                check_len(y_star, "y_star")?;
                for (k, qk) in q.iter().flatten().enumerate() {
                    if matrix(qk, "q")?.shape() != (m, m) {
                        return bad(format!("controller weight {} must be {m}x{m}", k + 1));
                    }
                }
                Self::check_start(xi0, warm_start)?;
                Self::check_frozen(frozen, m)?;
            }
        }
        Ok(())
    }

    fn check_start(xi0: &Option<Vec<f64>>, warm: &Option<WarmStart>) -> Result<()> {
        if xi0.is_some() && warm.is_some() {
            return Err(Error::Scenario("give either xi0 or warm_start, not both".into()));
        }
        if let Some(w) = warm {
            if !(w.radius.is_finite() && w.radius >= 0.0) {
                return Err(Error::Scenario("warm_start radius must be non-negative".into()));
            }
        }
        Ok(())
    }

    fn check_frozen(frozen: &[FrozenNode], m: usize) -> Result<()> {
        if frozen.iter().any(|f| f.level.len() != m || f.node == 0) {
            return Err(Error::Scenario(format!("frozen nodes need a 1-based id and {m} level entries")));
        }
        Ok(())
    }

    fn general_graph(&self, graph: &GraphSection) -> Result<Graph> {
        let edges: Vec<(usize, usize)> = graph.edges.iter().map(|e| (e.from, e.to)).collect();
        Graph::from_one_based(graph.num_nodes, &edges).map_err(|e| Error::Scenario(e.to_string()))
    }

    /// Node data without network-level validation (used by `validate`).
    pub fn raw_nodes(&self) -> Result<Vec<NodeSpec>> {
        let Some(nodes) = &self.nodes else {
            return Err(Error::Scenario("scenario has no general node list".into()));
        };
        nodes
            .iter()
            .enumerate()
            .map(|(i, n)| {
                let what = format!("node {}", i + 1);
                let energy = n.energy.build()?;
                let dim = energy.dim();
                let r = matrix(&n.r, &format!("{what} r"))?;
                let j = n.j.as_ref().map_or_else(|| Ok(DMatrix::zeros(dim, dim)), |j| matrix(j, &format!("{what} j")))?;
                let g = n.g.as_ref().map_or_else(|| Ok(DMatrix::identity(dim, dim)), |g| matrix(g, &format!("{what} g")))?;
                let delta = n.delta.as_ref().map_or_else(|| DVector::zeros(g.ncols()), |d| vector(d));
                Ok(NodeSpec::new(j, r, g, energy, n.class, delta))
            })
            .collect()
    }

    fn raw_edges(&self) -> Result<Vec<Hamiltonian>> {
        match &self.graph {
            Some(g) => g.edges.iter().map(|e| e.energy.build()).collect(),
            None => Ok(Vec::new()),
        }
    }

    /// Builds the network and the controller (without warm start).
    pub fn build(&self) -> Result<Model> {
        if let Some(grid) = &self.grid {
            let (spec, ctrl) = microgrid::build(grid)?;
            let ctrl = match &self.controller {
                Some(ControllerSection::Distributed { xi0: Some(xi0), .. }) => ctrl.with_xi0(vector(xi0))?,
                _ => ctrl,
            };
            return Ok(Model { spec, ctrl, y_star: None });
        }
        let graph = self.general_graph(self.graph.as_ref().expect("schema-checked"))?;
        let spec = NetworkSpec::new(graph, self.raw_nodes()?, EdgeBank::new(self.raw_edges()?)?)?;
        let section = self.controller.clone().unwrap_or(ControllerSection::None { y_star: None });
        let (ctrl, y_star, frozen, xi0) = match section {
            ControllerSection::None { y_star } => (ControllerSpec::none(&spec), y_star, Vec::new(), None),
            ControllerSection::Constant { levels, y_star } => {
                (ControllerSpec::constant(&spec, levels.iter().map(|l| vector(l)).collect())?, y_star, Vec::new(), None)
            }
            ControllerSection::Integral { y_star, xi0, frozen, .. } => {
                (ControllerSpec::integral(&spec, vector(&y_star))?, None, frozen, xi0)
            }
            ControllerSection::Distributed { y_star, q, comm, xi0, frozen, .. } => {
                let active = spec.controlled_nodes();
                let q = q.expect("schema-checked").iter().map(|qk| matrix(qk, "q")).collect::<Result<Vec<_>>>()?;
                let local = |node: usize| {
                    active.iter().position(|&a| a + 1 == node).ok_or_else(|| {
                        Error::InvalidController(format!("communication link uses node {node}, which is not actuated"))
                    })
                };
                let edges = match comm {
                    Some(links) => links.iter().map(|&(a, b)| Ok((local(a)?, local(b)?))).collect::<Result<Vec<_>>>()?,
                    None => (1..active.len()).map(|k| (k - 1, k)).collect(),
                };
                let comm = Graph::new(active.len(), edges)
                    .map_err(|e| Error::InvalidController(format!("communication graph: {e}")))?;
                let y = vector(&y_star.expect("schema-checked"));
                (ControllerSpec::distributed(&spec, y, q, comm)?, None, frozen, xi0)
            }
        };
        let ctrl = match xi0 {
            Some(xi0) => ctrl.with_xi0(vector(&xi0))?,
            None => ctrl,
        };
        let ctrl = if frozen.is_empty() {
            ctrl
        } else {
            let nodes: Vec<usize> = frozen.iter().map(|f| f.node - 1).collect();
            let levels: Vec<DVector<f64>> = frozen.iter().map(|f| vector(&f.level)).collect();
            ctrl.freeze(&nodes, &levels)?
        };
        Ok(Model { spec, ctrl, y_star: y_star.map(|y| vector(&y)) })
    }

    /// The same scenario with failures and frozen nodes removed.
    pub fn nominal(&self) -> Scenario {
        let mut sc = self.clone();
        if let Some(grid) = &mut sc.grid {
            grid.failed.clear();
        }
        match &mut sc.controller {
            Some(ControllerSection::Integral { frozen, .. }) | Some(ControllerSection::Distributed { frozen, .. }) => {
                frozen.clear()
            }
            _ => {}
        }
        sc
    }

    /// Copy with the controller's warm start set to `radius`.
    pub fn with_warm_start(&self, radius: f64) -> Result<Scenario> {
        let mut sc = self.clone();
        match &mut sc.controller {
            Some(ControllerSection::Integral { warm_start, xi0, .. })
            | Some(ControllerSection::Distributed { warm_start, xi0, .. }) => {
                *xi0 = None;
                *warm_start = Some(WarmStart { radius });
            }
            None if sc.grid.is_some() => {
                sc.controller = Some(ControllerSection::Distributed {
                    y_star: None,
                    q: None,
                    comm: None,
                    xi0: None,
                    warm_start: Some(WarmStart { radius }),
                    frozen: Vec::new(),
                })
            }
            _ => return Err(Error::Scenario("warm start needs an integral or distributed controller".into())),
        }
        sc.check_schema()?;
        Ok(sc)
    }

    fn warm_start(&self) -> Option<f64> {
        match &self.controller {
            Some(ControllerSection::Integral { warm_start: Some(w), .. })
            | Some(ControllerSection::Distributed { warm_start: Some(w), .. }) => Some(w.radius),
            _ => None,
        }
    }
}

/// Options shared by all commands.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub tol: Option<f64>,
    pub allow_infeasible: bool,
    pub parallel: bool,
    /// Starts integral/distributed controllers at their steady state plus
    /// uniform noise of this half-width.
    pub warm_start: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub measured: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationSummary {
    pub exit: ExitEvent,
    pub t_final: f64,
    pub samples: usize,
    pub steps: usize,
    pub rejected: usize,
    pub settle_tol: f64,
    pub settle_window: f64,
    pub settle_time: Option<f64>,
    pub terminal_output_error: f64,
    pub terminal_outputs: Vec<f64>,
    pub terminal_inputs: Vec<f64>,
    pub initial_state: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub scenario: String,
    pub scenario_hash: String,
    pub command: Command,
    pub seed: u64,
    pub exit_code: i32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steady_state: Option<SteadyStateReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dispatch: Option<DispatchReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub monitor: Option<MonitorReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probe: Option<ProbeReport>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub checks: Vec<CheckResult>,
    /// Files written next to the report (names relative to the output directory).
    pub outputs: Vec<String>,
    pub config: Scenario,
}

impl RunReport {
    fn new(sc: &Scenario, command: Command, seed: u64) -> Self {
        Self {
            scenario: sc.meta.name.clone(),
            scenario_hash: sc.hash(),
            command,
            seed,
            exit_code: 0,
            message: None,
            steady_state: None,
            dispatch: None,
            simulation: None,
            monitor: None,
            probe: None,
            checks: Vec::new(),
            outputs: Vec::new(),
            config: sc.clone(),
        }
    }

    fn fail(&mut self, msg: impl Into<String>) {
        self.exit_code = 1;
        self.message.get_or_insert_with(|| msg.into());
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Exit code for an error: 2 for input problems, 1 for analysis failures.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Scenario(_)
        | Error::InvalidGrid(_)
        | Error::InvalidEnergy(_)
        | Error::InvalidGraph(_)
        | Error::InvalidConfig(_)
        | Error::Io(_) => 2,
        _ => 1,
    }
}

struct Prepared {
    model: Model,
    report: SteadyStateReport,
    equilibrium: Option<Equilibrium>,
}

fn prepare(sc: &Scenario, seed: u64) -> Result<Prepared> {
    let mut model = sc.build()?;
    let report = model.ctrl.steady_state(&model.spec, model.y_star.as_ref())?;
    let equilibrium = if report.feasible { Some(Equilibrium::from_report(&model.spec, &model.ctrl, &report)?) } else { None };
    if let (Some(radius), Some(eq)) = (sc.warm_start(), &equilibrium) {
        model.ctrl = model.ctrl.clone().warm_start(&eq.state.xi, radius, seed)?;
    }
    Ok(Prepared { model, report, equilibrium })
}

/// Controller state of `from` carried over to the active nodes of `to`.
fn carry_controller_state(from: &ControllerSpec, xi: &DVector<f64>, to: &ControllerSpec, m: usize) -> DVector<f64> {
    let mut out = DVector::zeros(to.state_len());
    for (k, node) in to.active_nodes().iter().enumerate() {
        if let Some(j) = from.active_nodes().iter().position(|a| a == node) {
            out.rows_mut(k * m, m).copy_from(&xi.rows(j * m, m));
        }
    }
    out
}

fn initial_state(sc: &Scenario, prep: &Prepared, seed: u64) -> Result<ReducedState> {
    let spec = &prep.model.spec;
    let ctrl = &prep.model.ctrl;
    let m = spec.port_dim();
    let section = sc.initial.clone().unwrap_or(InitialSection::Equilibrium { offset: 0.0, nominal: false });
    match section {
        InitialSection::Explicit { eta, x1, xi } => Ok(ReducedState {
            eta: vector(&eta),
            x1: vector(&x1),
            xi: xi.map_or_else(|| ctrl.xi0().clone(), |xi| vector(&xi)),
        }),
        InitialSection::Equilibrium { offset, nominal } => {
            let base = if nominal {
                let nom = sc.nominal();
                let nom_prep = prepare(&nom, seed)?;
                let eq = nom_prep
                    .equilibrium
                    .ok_or_else(|| Error::Infeasible("the nominal scenario has no equilibrium".into()))?;
                ReducedState {
                    eta: eq.state.eta.clone(),
                    x1: eq.state.x1.clone(),
                    xi: carry_controller_state(&nom_prep.model.ctrl, &eq.state.xi, ctrl, m),
                }
            } else if let Some(eq) = &prep.equilibrium {
                let mut s = eq.state.clone();
                if sc.warm_start().is_some() {
                    s.xi = ctrl.xi0().clone();
                }
                s
            } else {
                ReducedState {
                    eta: DVector::zeros(spec.eta_len()),
                    x1: DVector::zeros(spec.x1_len()),
                    xi: ctrl.xi0().clone(),
                }
            };
            if offset == 0.0 {
                return Ok(base);
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let flat = base.to_flat();
            for _ in 0..1000 {
                let z = &flat + sample_sphere(&mut rng, flat.len(), offset);
                let s = ReducedState::from_flat(&z, spec.eta_len(), spec.x1_len());
                if spec.evaluate(&s.eta, &s.x1, &ctrl.inputs(&s.xi)?).is_ok() {
                    return Ok(s);
                }
            }
            Err(Error::Infeasible(format!("no admissible initial state at distance {offset} from the equilibrium")))
        }
    }
}

fn cmd_check(sc: &Scenario, report: &mut RunReport, seed: u64) -> Result<()> {
    let prep = prepare(sc, seed)?;
    if let Some(grid) = &sc.grid {
        let d = microgrid::dispatch(grid)?;
        if !d.feasible {
            report.fail(d.message.clone().unwrap_or_else(|| "dispatch infeasible".into()));
        }
        report.dispatch = Some(d);
    }
    if !prep.report.feasible {
        report.fail(prep.report.message.clone().unwrap_or_else(|| "steady state infeasible".into()));
    }
    report.steady_state = Some(prep.report);
    Ok(())
}

fn cmd_dispatch(sc: &Scenario, report: &mut RunReport, seed: u64) -> Result<()> {
    if let Some(grid) = &sc.grid {
        let d = microgrid::dispatch(grid)?;
        if !d.feasible {
            report.fail(d.message.clone().unwrap_or_else(|| "dispatch infeasible".into()));
        }
        report.dispatch = Some(d);
        return Ok(());
    }
    let prep = prepare(sc, seed)?;
    let ControllerKind::Distributed { q, y_star, .. } = prep.model.ctrl.kind() else {
        report.fail("dispatch needs a distributed controller with weights q");
        return Ok(());
    };
    let analysis = prep.model.ctrl.analysis_network(&prep.model.spec)?;
    let closed = lambda_optimal(&analysis, q, y_star)?;
    let oracle = qp_oracle(&analysis, q, y_star)?;
    let deviation = closed
        .u_bar
        .iter()
        .zip(&oracle.u_bar)
        .map(|(a, b)| (a - b).amax())
        .fold((&closed.lambda - &oracle.lambda).amax(), f64::max);
    let mut ss = prep.report;
    ss.residuals.insert("qp_deviation".into(), deviation);
    if !ss.feasible {
        report.fail(ss.message.clone().unwrap_or_else(|| "steady state infeasible".into()));
    }
    report.steady_state = Some(ss);
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_simulate(
    sc: &Scenario,
    report: &mut RunReport,
    seed: u64,
    params: &ExperimentParams,
    opts: &RunOptions,
    stem: &str,
) -> Result<()> {
    let prep = prepare(sc, seed)?;
    let allow = opts.allow_infeasible || params.allow_infeasible.unwrap_or(false);
    if !prep.report.feasible && !allow {
        report.fail(format!(
            "steady state infeasible ({}); pass --allow-infeasible to simulate anyway",
            prep.report.message.clone().unwrap_or_default()
        ));
        report.steady_state = Some(prep.report);
        return Ok(());
    }
    let mut cfg = sc.integrator.config()?;
    if let Some(t) = params.t_end {
        cfg.t_end = t;
    }
    let s0 = initial_state(sc, &prep, seed)?;
    let spec = &prep.model.spec;
    let ctrl = &prep.model.ctrl;
    let mut traj = match integrate(spec, ctrl, &s0, &cfg) {
        Ok(t) => t,
        Err(e @ Error::StepSizeUnderflow { .. }) => {
            report.fail(e.to_string());
            report.steady_state = Some(prep.report);
            return Ok(());
        }
        Err(e) => return Err(e),
    };
    traj.seed = Some(seed);
    let tol = opts.tol.or(params.settle_tol).unwrap_or(DEFAULT_SETTLE_TOL);
    let window = params.window.unwrap_or(0.1 * cfg.t_end);
    let y_star = prep.report.y_star_vector();
    let monitor = prep.equilibrium.as_ref().map(|eq| lyapunov_series(&traj, spec, ctrl, eq, Some((tol, window))));
    let settle_time = crate::sim::settle(&traj, &y_star, tol, window);
    let last = traj.len() - 1;
    if let Some(dir) = &opts.out_dir {
        let name = format!("{stem}.csv");
        let file = fs::File::create(dir.join(&name))?;
        write_csv(std::io::BufWriter::new(file), &traj, spec, ctrl, monitor.as_ref())?;
        report.outputs.push(name);
    }
    if let ExitEvent::DomainExit { reason, t } = &traj.exit {
        report.fail(format!("trajectory left the domain at t = {t}: {reason}"));
    }
    report.simulation = Some(SimulationSummary {
        exit: traj.exit.clone(),
        t_final: traj.times[last],
        samples: traj.len(),
        steps: traj.steps,
        rejected: traj.rejected,
        settle_tol: tol,
        settle_window: window,
        settle_time,
        terminal_output_error: traj.output_error(last, &y_star),
        terminal_outputs: traj.outputs[last].iter().copied().collect(),
        terminal_inputs: traj.inputs[last].iter().copied().collect(),
        initial_state: s0.to_flat().iter().copied().collect(),
    });
    report.monitor = monitor;
    report.steady_state = Some(prep.report);
    Ok(())
}

fn cmd_probe(sc: &Scenario, report: &mut RunReport, seed: u64, params: &ExperimentParams, opts: &RunOptions) -> Result<()> {
    let prep = prepare(sc, seed)?;
    let Some(eq) = &prep.equilibrium else {
        report.fail("no feasible equilibrium to probe around");
        report.steady_state = Some(prep.report);
        return Ok(());
    };
    let mut cfg = sc.integrator.config()?;
    if let Some(t) = params.t_end {
        cfg.t_end = t;
    }
    let tol = opts.tol.or(params.settle_tol).unwrap_or(PROBE_SETTLE_TOL);
    let p = basin_probe(
        &prep.model.spec,
        &prep.model.ctrl,
        eq,
        params.radius.unwrap_or(0.1),
        params.trials.unwrap_or(20),
        &cfg,
        seed,
        tol,
    )?;
    report.probe = Some(p);
    report.steady_state = Some(prep.report);
    Ok(())
}

fn fd_gradient_error(h: &Hamiltonian, z: &DVector<f64>) -> Result<f64> {
    let g = h.gradient(z)?;
    let mut worst: f64 = 0.0;
    for k in 0..z.len() {
        let step = 1e-6 * z[k].abs().max(1.0);
        let mut zp = z.clone();
        let mut zm = z.clone();
        zp[k] += step;
        zm[k] -= step;
        let fd = (h.value(&zp)? - h.value(&zm)?) / (2.0 * step);
        worst = worst.max((fd - g[k]).abs() / g[k].abs().max(1.0));
    }
    Ok(worst)
}

/// Point drawn uniformly from the energy's domain shrunk to `frac` (or from
/// `[-1, 1]` along unbounded directions).
fn sample_domain<R: Rng>(rng: &mut R, h: &Hamiltonian, frac: f64) -> DVector<f64> {
    let d = h.domain();
    DVector::from_fn(h.dim(), |k, _| {
        let (lo, hi) = (d.lower()[k], d.upper()[k]);
        if lo.is_finite() && hi.is_finite() {
            let mid = 0.5 * (lo + hi);
            let half = 0.5 * (hi - lo) * frac;
            rng.gen_range(mid - half..mid + half)
        } else {
            rng.gen_range(-1.0..1.0)
        }
    })
}

fn cmd_validate(sc: &Scenario, report: &mut RunReport, seed: u64) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checks: Vec<CheckResult> = Vec::new();
    let push = |checks: &mut Vec<CheckResult>, name: String, measured: f64, threshold: f64, passed: bool| {
        checks.push(CheckResult { name, passed, measured, threshold });
    };
    let (nodes, edges): (Vec<NodeSpec>, Vec<Hamiltonian>) = match &sc.grid {
        Some(grid) => {
            let (spec, _) = microgrid::build(grid)?;
            (spec.nodes().to_vec(), spec.edges().energies().to_vec())
        }
        None => (sc.raw_nodes()?, sc.raw_edges()?),
    };
    for (i, n) in nodes.iter().enumerate() {
        let id = i + 1;
        let skew = skew_error(&n.j);
        push(&mut checks, format!("node {id}: J skew-symmetric"), skew, SKEW_TOL, skew <= SKEW_TOL);
        let asym = (&n.r - n.r.transpose()).amax();
        push(&mut checks, format!("node {id}: R symmetric"), asym, SKEW_TOL, asym <= SKEW_TOL);
        let lmin = min_sym_eigenvalue(&n.r);
        push(&mut checks, format!("node {id}: R positive definite (min eigenvalue)"), lmin, 0.0, lmin > 0.0);
        let rank = column_rank(&n.g) as f64;
        push(&mut checks, format!("node {id}: G full column rank"), rank, n.g.ncols() as f64, rank == n.g.ncols() as f64);
        let cond = condition_number(&(&n.j - &n.r));
        push(&mut checks, format!("node {id}: J - R conditioning"), cond, 1e10, cond.is_finite() && cond <= 1e10);
        let mut worst: f64 = 0.0;
        for _ in 0..5 {
            worst = worst.max(fd_gradient_error(&n.energy, &sample_domain(&mut rng, &n.energy, 0.9))?);
        }
        push(&mut checks, format!("node {id}: energy gradient vs finite differences"), worst, 1e-6, worst < 1e-6);
    }
    for (k, h) in edges.iter().enumerate() {
        let mut worst: f64 = 0.0;
        let mut min_breg = f64::INFINITY;
        for _ in 0..5 {
            let z = sample_domain(&mut rng, h, 0.9);
            worst = worst.max(fd_gradient_error(h, &z)?);
            let zr = sample_domain(&mut rng, h, 0.9);
            min_breg = min_breg.min(h.bregman(&z, &zr)?);
        }
        push(&mut checks, format!("edge {}: energy gradient vs finite differences", k + 1), worst, 1e-6, worst < 1e-6);
        push(&mut checks, format!("edge {}: Bregman distance non-negative", k + 1), min_breg, 0.0, min_breg >= 0.0);
    }
    let structural_ok = checks.iter().all(|c| c.passed);
    if structural_ok {
        let model = sc.build()?;
        let spec = &model.spec;
        let ctrl = &model.ctrl;
        let pure_ode = spec.algebraic_nodes().is_empty();
        let mut worst: f64 = 0.0;
        let mut samples = 0;
        for _ in 0..20 {
            let eta = DVector::from_iterator(
                spec.eta_len(),
                spec.edges().energies().iter().flat_map(|h| sample_domain(&mut rng, h, 0.5).iter().copied().collect::<Vec<_>>()),
            );
            let mut x1 = DVector::zeros(spec.x1_len());
            for &i in spec.differential_nodes() {
                let off = spec.x1_offset(i).expect("differential node");
                let h = &spec.nodes()[i].energy;
                x1.rows_mut(off, h.dim()).copy_from(&sample_domain(&mut rng, h, 0.5));
            }
            let xi = DVector::from_fn(ctrl.state_len(), |_, _| rng.gen_range(-0.5..0.5));
            let s = ReducedState { eta, x1, xi };
            let u = ctrl.inputs(&s.xi)?;
            let Ok(ev) = spec.evaluate(&s.eta, &s.x1, &u) else { continue };
            samples += 1;
            if pure_ode {
                let (e, x) = spec.rates_from_eval(&ev, &u);
                worst = worst.max(spec.power_balance_residual(&s, &u, &e, &x)?);
            } else {
                worst = worst.max(ev.alg_residual);
            }
        }
        let (name, thr) = if pure_ode {
            ("network: power balance at random states", 1e-8)
        } else {
            ("network: algebraic elimination residual at random states", 1e-10)
        };
        push(&mut checks, format!("{name} ({samples} samples)"), worst, thr, worst <= thr);
    }
    if let Some(bad) = checks.iter().find(|c| !c.passed) {
        report.fail(format!("check failed: {} (measured {:e})", bad.name, bad.measured));
    }
    report.checks = checks;
    Ok(())
}

/// Runs one command and writes its report (and trajectory) when an output
/// directory is set.
pub fn run_command(sc: &Scenario, command: Command, params: &ExperimentParams, opts: &RunOptions) -> RunReport {
    let warmed;
    let sc = match opts.warm_start.map(|r| sc.with_warm_start(r)) {
        None => sc,
        Some(Ok(w)) => {
            warmed = w;
            &warmed
        }
        Some(Err(e)) => {
            let mut report = RunReport::new(sc, command, opts.seed.unwrap_or(sc.meta.seed));
            report.exit_code = exit_code(&e);
            report.message = Some(e.to_string());
            return report;
        }
    };
    let seed = opts.seed.unwrap_or(sc.meta.seed);
    let mut report = RunReport::new(sc, command, seed);
    let stem = params.label.clone().unwrap_or_else(|| format!("{}_{}", sc.meta.name, command.name()));
    let started = Instant::now();
    if let Some(dir) = &opts.out_dir {
        if let Err(e) = fs::create_dir_all(dir) {
            report.exit_code = 2;
            report.message = Some(format!("cannot create {}: {e}", dir.display()));
            return report;
        }
    }
    let result = match command {
        Command::Check => cmd_check(sc, &mut report, seed),
        Command::Dispatch => cmd_dispatch(sc, &mut report, seed),
        Command::Simulate => cmd_simulate(sc, &mut report, seed, params, opts, &stem),
        Command::Validate => cmd_validate(sc, &mut report, seed),
        Command::Probe => cmd_probe(sc, &mut report, seed, params, opts),
    };
    if let Err(e) = result {
        report.exit_code = report.exit_code.max(exit_code(&e));
        report.message = Some(e.to_string());
    }
    if let Some(dir) = &opts.out_dir {
        let name = format!("{stem}.json");
        report.outputs.push(name.clone());
        let write = fs::write(dir.join(&name), report.to_json() + "\n").and_then(|_| {
            let timing = serde_json::json!({ "wall_clock_seconds": started.elapsed().as_secs_f64() });
            fs::write(dir.join(format!("{stem}.timing.json")), timing.to_string() + "\n")
        });
        if let Err(e) = write {
            report.exit_code = 2;
            report.message = Some(format!("cannot write outputs: {e}"));
        }
    }
    report
}

/// Runs every experiment listed in the scenario; sequential unless
/// `opts.parallel`.
pub fn run_experiments(sc: &Scenario, opts: &RunOptions) -> Vec<RunReport> {
    let labelled: Vec<(Command, ExperimentParams)> = sc
        .experiments
        .iter()
        .enumerate()
        .map(|(k, e)| {
            let mut p = e.params.clone();
            p.label.get_or_insert_with(|| format!("{}_{}_{}", sc.meta.name, k + 1, e.command.name()));
            (e.command, p)
        })
        .collect();
    if opts.parallel {
        labelled.par_iter().map(|(c, p)| run_command(sc, *c, p, opts)).collect()
    } else {
        labelled.iter().map(|(c, p)| run_command(sc, *c, p, opts)).collect()
    }
}

/// One-line human summary of a report.
pub fn summarize(r: &RunReport) -> String {
    let status = if r.exit_code == 0 { "ok" } else { "FAILED" };
    let mut s = format!("{} {}: {status}", r.scenario, r.command.name());
    if let Some(ss) = &r.steady_state {
        s += &format!(", feasible={}, max residual {:.2e}", ss.feasible, ss.max_residual());
    }
    if let Some(d) = &r.dispatch {
        s += &format!(", lambda={:.6}", d.lambda);
    }
    if let Some(sim) = &r.simulation {
        match sim.settle_time {
            Some(t) => s += &format!(", settled at t={t:.3}"),
            None => s += ", did not settle",
        }
    }
    if let Some(m) = &r.monitor {
        s += &format!(", V monotone={}", m.v_monotone);
    }
    if let Some(p) = &r.probe {
        s += &format!(", {}/{} trials settled", p.successes, p.trials);
    }
    if !r.checks.is_empty() {
        let passed = r.checks.iter().filter(|c| c.passed).count();
        s += &format!(", {passed}/{} checks passed", r.checks.len());
    }
    if let Some(m) = &r.message {
        s += &format!(" ({m})");
    }
    s
}
