//! Time integration of the closed loop with Lyapunov, domain and residual
//! monitors.
//!
//! The integrated state is `(η, x⁽¹⁾, ξ)`; algebraic nodes are re-solved at
//! every right-hand-side evaluation. Leaving an energy domain truncates the
//! trajectory and records the event instead of clamping.

use std::io::Write;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::control::ControllerSpec;
use crate::error::{Error, Result};
use crate::network::{NetworkSpec, ReducedState};
use crate::steadystate::{equilibrium_states, SteadyStateReport};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case", deny_unknown_fields)]
pub enum Method {
    /// Classic fixed-step fourth-order Runge–Kutta.
    Rk4 { step: f64 },
    /// Dormand–Prince 5(4) with local error control.
    Dp45 { rel_tol: f64, abs_tol: f64, max_step: f64 },
}

impl Default for Method {
    fn default() -> Self {
        Method::Dp45 { rel_tol: 1e-8, abs_tol: 1e-10, max_step: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegratorConfig {
    pub method: Method,
    pub t_end: f64,
    /// Accepted steps between recorded samples.
    pub record_stride: usize,
}

impl IntegratorConfig {
    pub fn dp45(t_end: f64) -> Self {
        Self { method: Method::default(), t_end, record_stride: 1 }
    }

    pub fn rk4(step: f64, t_end: f64) -> Self {
        Self { method: Method::Rk4 { step }, t_end, record_stride: 1 }
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.record_stride = stride;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.t_end.is_finite() && self.t_end > 0.0) {
            return bad(format!("t_end must be positive, got {}", self.t_end));
        }
        if self.record_stride == 0 {
            return bad("record_stride must be at least 1".into());
        }
        match self.method {
            Method::Rk4 { step } if !(step.is_finite() && step > 0.0) => bad(format!("step must be positive, got {step}")),
            Method::Dp45 { rel_tol, abs_tol, max_step } => {
                for (name, tol) in [("rel_tol", rel_tol), ("abs_tol", abs_tol)] {
                    if !(tol > 0.0 && tol <= 1e-2) {
                        return bad(format!("{name} must lie in (0, 1e-2], got {tol}"));
                    }
                }
                if !(max_step.is_finite() && max_step > 0.0) {
                    return bad(format!("max_step must be positive, got {max_step}"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// How an integration run ended.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExitEvent {
    Completed,
    DomainExit { t: f64, reason: String },
}

/// Recorded samples of a run. All per-sample vectors have equal length.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// Flattened `(η, x⁽¹⁾, ξ)`.
    pub states: Vec<DVector<f64>>,
    /// Stacked outputs `y_1, …, y_N`.
    pub outputs: Vec<DVector<f64>>,
    /// Stacked inputs `u_1, …, u_N`.
    pub inputs: Vec<DVector<f64>>,
    pub alg_residual: Vec<f64>,
    pub domain_margin: Vec<f64>,
    pub exit: ExitEvent,
    pub steps: usize,
    pub rejected: usize,
    pub seed: Option<u64>,
    eta_len: usize,
    x1_len: usize,
    port_dim: usize,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn completed(&self) -> bool {
        self.exit == ExitEvent::Completed
    }

    pub fn state(&self, k: usize) -> ReducedState {
        ReducedState::from_flat(&self.states[k], self.eta_len, self.x1_len)
    }

    pub fn final_state(&self) -> ReducedState {
        self.state(self.len() - 1)
    }

    /// Output of node `i` at sample `k`.
    pub fn output(&self, k: usize, i: usize) -> DVector<f64> {
        self.outputs[k].rows(i * self.port_dim, self.port_dim).into_owned()
    }

    /// Input of node `i` at sample `k`.
    pub fn input(&self, k: usize, i: usize) -> DVector<f64> {
        self.inputs[k].rows(i * self.port_dim, self.port_dim).into_owned()
    }

    pub fn num_nodes(&self) -> usize {
        self.outputs.first().map_or(0, |y| y.len() / self.port_dim.max(1))
    }

    /// Largest deviation `max_i ‖y_i − y*‖∞` at sample `k`.
    pub fn output_error(&self, k: usize, y_star: &DVector<f64>) -> f64 {
        (0..self.num_nodes())
            .map(|i| (self.output(k, i) - y_star).amax())
            .fold(0.0, f64::max)
    }

    /// Largest pairwise output spread `max_{i,j} ‖y_i − y_j‖∞` at sample `k`.
    pub fn output_spread(&self, k: usize) -> f64 {
        let m = self.port_dim;
        let n = self.num_nodes();
        (0..m)
            .map(|c| {
                let vals = (0..n).map(|i| self.outputs[k][i * m + c]);
                let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
                hi - lo
            })
            .fold(0.0, f64::max)
    }
}

struct Eval {
    dz: DVector<f64>,
    outputs: DVector<f64>,
    inputs: DVector<f64>,
    alg_residual: f64,
    margin: f64,
}

/// Closed-loop right-hand side.
struct ClosedLoop<'a> {
    spec: &'a NetworkSpec,
    ctrl: &'a ControllerSpec,
}

fn stack(parts: &[DVector<f64>]) -> DVector<f64> {
    DVector::from_iterator(parts.iter().map(|p| p.len()).sum(), parts.iter().flat_map(|p| p.iter().copied()))
}

/// Errors that mean the state left the region where the model is defined.
fn is_domain_error(e: &Error) -> bool {
    matches!(e, Error::DomainViolation { .. } | Error::NoPreimage { .. } | Error::AlgebraicInconsistency { .. })
}

impl ClosedLoop<'_> {
    fn eval(&self, z: &DVector<f64>) -> Result<Eval> {
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::DomainViolation { coord: 0, value: f64::NAN, lower: f64::NEG_INFINITY, upper: f64::INFINITY });
        }
        let s = ReducedState::from_flat(z, self.spec.eta_len(), self.spec.x1_len());
        let u = self.ctrl.inputs(&s.xi)?;
        let ev = self.spec.evaluate(&s.eta, &s.x1, &u)?;
        let (eta_dot, x1_dot) = self.spec.rates_from_eval(&ev, &u);
        let xi_dot = self.ctrl.rates(&s.xi, &ev.outputs)?;
        let mut margin = f64::INFINITY;
        for (k, h) in self.spec.edges().energies().iter().enumerate() {
            margin = margin.min(h.domain().margin(&self.spec.edge_slice(&s.eta, k)));
        }
        for (node, x) in self.spec.nodes().iter().zip(&ev.states) {
            margin = margin.min(node.energy.domain().margin(x));
        }
        Ok(Eval {
            dz: stack(&[eta_dot, x1_dot, xi_dot]),
            outputs: stack(&ev.outputs),
            inputs: stack(&u),
            alg_residual: ev.alg_residual,
            margin,
        })
    }
}

struct Recorder {
    traj: Trajectory,
}

impl Recorder {
    fn push(&mut self, t: f64, z: &DVector<f64>, ev: &Eval) {
        let tr = &mut self.traj;
        tr.times.push(t);
        tr.states.push(z.clone());
        tr.outputs.push(ev.outputs.clone());
        tr.inputs.push(ev.inputs.clone());
        tr.alg_residual.push(ev.alg_residual);
        tr.domain_margin.push(ev.margin);
    }
}

/// Integrates the closed loop from `s0` over `[0, t_end]`.
pub fn integrate(spec: &NetworkSpec, ctrl: &ControllerSpec, s0: &ReducedState, cfg: &IntegratorConfig) -> Result<Trajectory> {
    cfg.validate()?;
    if s0.eta.len() != spec.eta_len() || s0.x1.len() != spec.x1_len() || s0.xi.len() != ctrl.state_len() {
        return Err(Error::DimensionMismatch {
            what: "initial state".into(),
            expected: spec.eta_len() + spec.x1_len() + ctrl.state_len(),
            found: s0.eta.len() + s0.x1.len() + s0.xi.len(),
        });
    }
    let sys = ClosedLoop { spec, ctrl };
    let z0 = s0.to_flat();
    let ev0 = sys.eval(&z0)?;
    let mut rec = Recorder {
        traj: Trajectory {
            times: Vec::new(),
            states: Vec::new(),
            outputs: Vec::new(),
            inputs: Vec::new(),
            alg_residual: Vec::new(),
            domain_margin: Vec::new(),
            exit: ExitEvent::Completed,
            steps: 0,
            rejected: 0,
            seed: None,
            eta_len: spec.eta_len(),
            x1_len: spec.x1_len(),
            port_dim: spec.port_dim(),
        },
    };
    rec.push(0.0, &z0, &ev0);
    match cfg.method {
        Method::Rk4 { step } => rk4(&sys, z0, ev0, step, cfg, &mut rec)?,
        Method::Dp45 { rel_tol, abs_tol, max_step } => dp45(&sys, z0, ev0, rel_tol, abs_tol, max_step, cfg, &mut rec)?,
    }
    Ok(rec.traj)
}

fn rk4(sys: &ClosedLoop, mut z: DVector<f64>, mut ev: Eval, step: f64, cfg: &IntegratorConfig, rec: &mut Recorder) -> Result<()> {
    let n_steps = ((cfg.t_end / step) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    for k in 0..n_steps {
        let t = k as f64 * step;
        let last = k + 1 == n_steps;
        let t_next = if last { cfg.t_end } else { (k + 1) as f64 * step };
        let h = t_next - t;
        let stages = (|| -> Result<(DVector<f64>, Eval)> {
            let k1 = &ev.dz;
            let k2 = sys.eval(&(&z + k1 * (0.5 * h)))?.dz;
            let k3 = sys.eval(&(&z + &k2 * (0.5 * h)))?.dz;
            let k4 = sys.eval(&(&z + &k3 * h))?.dz;
            let z_new = &z + (k1 + &k2 * 2.0 + &k3 * 2.0 + k4) * (h / 6.0);
            let ev_new = sys.eval(&z_new)?;
            Ok((z_new, ev_new))
        })();
        match stages {
            Ok((z_new, ev_new)) => {
                z = z_new;
                ev = ev_new;
                rec.traj.steps += 1;
                if (k + 1) % cfg.record_stride == 0 || last {
                    rec.push(t_next, &z, &ev);
                }
            }
            Err(e) if is_domain_error(&e) => {
                rec.traj.exit = ExitEvent::DomainExit { t, reason: e.to_string() };
                return Ok(());
            }
            Err(e) => return Err(e),
        }
    }
    Ok(())
}

// Dormand–Prince 5(4) tableau; the closed loop is autonomous, so the
// node fractions are not needed.
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
/// Difference between the fifth- and fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

fn error_norm(err: &DVector<f64>, z: &DVector<f64>, z_new: &DVector<f64>, rel: f64, abs: f64) -> f64 {
    if err.is_empty() {
        return 0.0;
    }
    let sum: f64 = err
        .iter()
        .zip(z.iter().zip(z_new.iter()))
        .map(|(e, (a, b))| {
            let sc = abs + rel * a.abs().max(b.abs());
            (e / sc).powi(2)
        })
        .sum();
    (sum / err.len() as f64).sqrt()
}

fn initial_step(sys: &ClosedLoop, z: &DVector<f64>, f0: &DVector<f64>, rel: f64, abs: f64, max_step: f64) -> f64 {
    let scale = z.map(|v| abs + rel * v.abs());
    let rms = |v: &DVector<f64>| {
        if v.is_empty() {
            0.0
        } else {
            (v.component_div(&scale).norm_squared() / v.len() as f64).sqrt()
        }
    };
    let d0 = rms(z);
    let d1 = rms(f0);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let h0 = h0.min(max_step);
    let Ok(ev1) = sys.eval(&(z + f0 * h0)) else {
        return h0;
    };
    let d2 = rms(&(&ev1.dz - f0)) / h0;
    let h1 = if d1.max(d2) <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { (0.01 / d1.max(d2)).powf(0.2) };
    (100.0 * h0).min(h1).min(max_step)
}

#[allow(clippy::too_many_arguments)]
fn dp45(
    sys: &ClosedLoop,
    mut z: DVector<f64>,
    mut ev: Eval,
    rel: f64,
    abs: f64,
    max_step: f64,
    cfg: &IntegratorConfig,
    rec: &mut Recorder,
) -> Result<()> {
    let mut t = 0.0;
    let mut h = initial_step(sys, &z, &ev.dz, rel, abs, max_step);
    let mut last_domain_failure: Option<String> = None;
    while t < cfg.t_end {
        let remaining = cfg.t_end - t;
        let last = h >= remaining;
        if last {
            h = remaining;
        }
        h = h.min(max_step);
        if h < 1e-14 * t.abs().max(1.0) {
            if let Some(reason) = last_domain_failure {
                rec.traj.exit = ExitEvent::DomainExit { t, reason };
                return Ok(());
            }
            return Err(Error::StepSizeUnderflow { t, h });
        }
        let attempt = (|| -> Result<(DVector<f64>, Eval, f64)> {
            let mut k: Vec<DVector<f64>> = Vec::with_capacity(7);
            k.push(ev.dz.clone());
            for s in 1..6 {
                let mut zs = z.clone();
                for (j, kj) in k.iter().enumerate() {
                    if A[s][j] != 0.0 {
                        zs.axpy(h * A[s][j], kj, 1.0);
                    }
                }
                k.push(sys.eval(&zs)?.dz);
            }
            let mut z_new = z.clone();
            for (j, kj) in k.iter().enumerate() {
                if A[6][j] != 0.0 {
                    z_new.axpy(h * A[6][j], kj, 1.0);
                }
            }
            let ev_new = sys.eval(&z_new)?;
            k.push(ev_new.dz.clone());
            let mut err = DVector::zeros(z.len());
            for (j, kj) in k.iter().enumerate() {
                if E[j] != 0.0 {
                    err.axpy(h * E[j], kj, 1.0);
                }
            }
            let norm = error_norm(&err, &z, &z_new, rel, abs);
            Ok((z_new, ev_new, norm))
        })();
        match attempt {
            Ok((z_new, ev_new, norm)) if norm <= 1.0 => {
                t = if last && h == remaining { cfg.t_end } else { t + h };
                z = z_new;
                ev = ev_new;
                rec.traj.steps += 1;
                last_domain_failure = None;
                if rec.traj.steps.is_multiple_of(cfg.record_stride) || t >= cfg.t_end {
                    rec.push(t, &z, &ev);
                }
                let factor = if norm == 0.0 { 5.0 } else { (0.9 * norm.powf(-0.2)).clamp(0.2, 5.0) };
                h *= factor;
            }
            Ok((_, _, norm)) => {
                rec.traj.rejected += 1;
                h *= (0.9 * norm.powf(-0.2)).clamp(0.2, 1.0);
            }
            Err(e) if is_domain_error(&e) => {
                rec.traj.rejected += 1;
                last_domain_failure = Some(e.to_string());
                h *= 0.25;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(())
}

/// A closed-loop equilibrium `(η̄, x̄⁽¹⁾, ξ̄)` with its agreement value.
#[derive(Debug, Clone, PartialEq)]
pub struct Equilibrium {
    pub state: ReducedState,
    pub y_star: DVector<f64>,
}

impl Equilibrium {
    /// Equilibrium of `spec` under `ctrl` described by a feasible report.
    pub fn from_report(spec: &NetworkSpec, ctrl: &ControllerSpec, report: &SteadyStateReport) -> Result<Self> {
        let analysis = ctrl.analysis_network(spec)?;
        let states = equilibrium_states(&analysis, report)?;
        let xi = ctrl.steady_controller_state(report)?;
        Ok(Self {
            state: ReducedState {
                eta: report.eta_bar_vector().unwrap_or_else(|| DVector::zeros(0)),
                x1: spec.stack_x1(&states),
                xi,
            },
            y_star: report.y_star_vector(),
        })
    }

    /// Steady-state solve followed by [`Equilibrium::from_report`].
    pub fn compute(spec: &NetworkSpec, ctrl: &ControllerSpec, y_star: Option<&DVector<f64>>) -> Result<(Self, SteadyStateReport)> {
        let report = ctrl.steady_state(spec, y_star)?;
        Ok((Self::from_report(spec, ctrl, &report)?, report))
    }
}

/// Storage terms at one sample. `NaN` marks a sample where they are undefined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StorageSample {
    pub v: f64,
    pub w_n: f64,
    pub w_e: f64,
    pub w_c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonitorReport {
    pub v_monotone: bool,
    /// Largest increase `V(t_{k+1}) − V(t_k)` (0 if `V` never increases).
    pub worst_increment: f64,
    pub v_initial: f64,
    pub v_final: f64,
    pub max_alg_residual: f64,
    pub min_domain_margin: f64,
    pub settle_time: Option<f64>,
    #[serde(skip)]
    pub samples: Vec<StorageSample>,
}

/// `(W_n, W_e, W_c)` at a state, relative to an equilibrium.
pub fn storage(spec: &NetworkSpec, ctrl: &ControllerSpec, eq: &Equilibrium, s: &ReducedState) -> Result<StorageSample> {
    let mut w_n = 0.0;
    for &i in spec.differential_nodes() {
        let off = spec.x1_offset(i).expect("differential node has an offset");
        let n = spec.nodes()[i].state_dim();
        let x = s.x1.rows(off, n).into_owned();
        let x_bar = eq.state.x1.rows(off, n).into_owned();
        w_n += spec.nodes()[i].energy.bregman(&x, &x_bar)?;
    }
    let mut w_e = 0.0;
    for (k, h) in spec.edges().energies().iter().enumerate() {
        w_e += h.bregman(&spec.edge_slice(&s.eta, k), &spec.edge_slice(&eq.state.eta, k))?;
    }
    let w_c = ctrl.storage(&s.xi, &eq.state.xi);
    Ok(StorageSample { v: w_n + w_e + w_c, w_n, w_e, w_c })
}

/// Storage series along a trajectory and its monotonicity verdict. With
/// `settle_window = Some((tol, window))` the settle time is filled in.
pub fn lyapunov_series(
    traj: &Trajectory,
    spec: &NetworkSpec,
    ctrl: &ControllerSpec,
    eq: &Equilibrium,
    settle_window: Option<(f64, f64)>,
) -> MonitorReport {
    let nan = StorageSample { v: f64::NAN, w_n: f64::NAN, w_e: f64::NAN, w_c: f64::NAN };
    let samples: Vec<StorageSample> =
        (0..traj.len()).map(|k| storage(spec, ctrl, eq, &traj.state(k)).unwrap_or(nan)).collect();
    let v0 = samples.first().map_or(0.0, |s| s.v);
    let eps = 1e-9 * (1.0 + v0.abs());
    let mut monotone = samples.iter().all(|s| s.v.is_finite());
    let mut worst: f64 = 0.0;
    for w in samples.windows(2) {
        let inc = w[1].v - w[0].v;
        if inc.is_finite() {
            worst = worst.max(inc);
            if inc > eps {
                monotone = false;
            }
        }
    }
    MonitorReport {
        v_monotone: monotone,
        worst_increment: worst,
        v_initial: v0,
        v_final: samples.last().map_or(0.0, |s| s.v),
        max_alg_residual: traj.alg_residual.iter().copied().fold(0.0, f64::max),
        min_domain_margin: traj.domain_margin.iter().copied().fold(f64::INFINITY, f64::min),
        settle_time: settle_window.and_then(|(tol, window)| settle(traj, &eq.y_star, tol, window)),
        samples,
    }
}

/// Earliest sample time `t` such that every output stays within `tol` of
/// `y*` on all samples in `[t, t + window]`, with the window inside the
/// recorded span.
pub fn settle(traj: &Trajectory, y_star: &DVector<f64>, tol: f64, window: f64) -> Option<f64> {
    let n = traj.len();
    if n == 0 {
        return None;
    }
    let t_last = traj.times[n - 1];
    let ok: Vec<bool> = (0..n).map(|k| traj.output_error(k, y_star) <= tol).collect();
    // next_bad[k]: first index >= k with a violation (n if none).
    let mut next_bad = vec![n; n + 1];
    for k in (0..n).rev() {
        next_bad[k] = if ok[k] { next_bad[k + 1] } else { k };
    }
    let mut j = 0;
    for k in 0..n {
        let t = traj.times[k];
        if t + window > t_last * (1.0 + 1e-12) + 1e-12 {
            return None;
        }
        j = j.max(k);
        while j + 1 < n && traj.times[j + 1] <= t + window {
            j += 1;
        }
        if next_bad[k] > j {
            return Some(t);
        }
    }
    None
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeReport {
    pub radius: f64,
    pub trials: usize,
    pub successes: usize,
    pub fraction: f64,
    pub seed: u64,
    pub settle_tol: f64,
}

/// Launches `trials` runs from states drawn uniformly in the ball of the given
/// radius around the equilibrium (resampled until inside every domain) and
/// reports how many settle to `y*` within `settle_tol`. Exploratory only:
/// the outcome is no certificate of a basin of attraction.
#[allow(clippy::too_many_arguments)]
pub fn basin_probe(
    spec: &NetworkSpec,
    ctrl: &ControllerSpec,
    eq: &Equilibrium,
    radius: f64,
    trials: usize,
    cfg: &IntegratorConfig,
    seed: u64,
    settle_tol: f64,
) -> Result<ProbeReport> {
    if !(radius > 0.0) || trials == 0 {
        return Err(Error::InvalidConfig("probe needs radius > 0 and at least one trial".into()));
    }
    cfg.validate()?;
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let seeds: Vec<u64> = (0..trials).map(|_| master.gen()).collect();
    let center = eq.state.to_flat();
    let sys = ClosedLoop { spec, ctrl };
    let window = 0.1 * cfg.t_end;
    let successes = seeds
        .par_iter()
        .map(|&s| {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let Some(z0) = (0..1000).find_map(|_| {
                let z = &center + sample_ball(&mut rng, center.len(), radius);
                sys.eval(&z).ok().map(|_| z)
            }) else {
                return false;
            };
            let s0 = ReducedState::from_flat(&z0, spec.eta_len(), spec.x1_len());
            match integrate(spec, ctrl, &s0, cfg) {
                Ok(traj) => traj.completed() && settle(&traj, &eq.y_star, settle_tol, window).is_some(),
                Err(_) => false,
            }
        })
        .filter(|ok| *ok)
        .count();
    Ok(ProbeReport { radius, trials, successes, fraction: successes as f64 / trials as f64, seed, settle_tol })
}

/// Uniform sample from the Euclidean ball of the given radius.
pub fn sample_ball<R: Rng>(rng: &mut R, dim: usize, radius: f64) -> DVector<f64> {
    if dim == 0 {
        return DVector::zeros(0);
    }
    let dir = sample_sphere(rng, dim, 1.0);
    let r: f64 = rng.gen::<f64>().powf(1.0 / dim as f64);
    dir * (radius * r)
}

/// Uniform sample from the Euclidean sphere of the given radius.
pub fn sample_sphere<R: Rng>(rng: &mut R, dim: usize, radius: f64) -> DVector<f64> {
    loop {
        let g = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let n = g.norm();
        if n > 1e-12 {
            return g * (radius / n);
        }
    }
}

fn component_labels(prefix: &str, index: usize, dim: usize) -> Vec<String> {
    if dim == 1 {
        vec![format!("{prefix}_{index}")]
    } else {
        (1..=dim).map(|c| format!("{prefix}_{index}_{c}")).collect()
    }
}

/// Column names of [`write_csv`].
pub fn csv_header(spec: &NetworkSpec, ctrl: &ControllerSpec, with_storage: bool) -> Vec<String> {
    let m = spec.port_dim();
    let mut cols = vec!["t".to_string()];
    for k in 1..=spec.num_edges() {
        cols.extend(component_labels("eta", k, m));
    }
    for &i in spec.differential_nodes() {
        cols.extend(component_labels("x", i + 1, spec.nodes()[i].state_dim()));
    }
    for &i in ctrl.active_nodes() {
        cols.extend(component_labels("xi", i + 1, m));
    }
    for i in 1..=spec.num_nodes() {
        cols.extend(component_labels("y", i, m));
    }
    for i in 1..=spec.num_nodes() {
        cols.extend(component_labels("u", i, m));
    }
    if with_storage {
        cols.extend(["V", "W_n", "W_e", "W_c"].map(String::from));
    }
    cols.extend(["alg_residual", "domain_margin"].map(String::from));
    cols
}

/// Writes one row per sample. Numbers use the shortest representation that
/// round-trips, so identical runs give byte-identical files.
pub fn write_csv<W: Write>(
    out: W,
    traj: &Trajectory,
    spec: &NetworkSpec,
    ctrl: &ControllerSpec,
    monitors: Option<&MonitorReport>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(csv_header(spec, ctrl, monitors.is_some())).map_err(io)?;
    for k in 0..traj.len() {
        let mut row: Vec<String> = Vec::new();
        row.push(traj.times[k].to_string());
        row.extend(traj.states[k].iter().map(f64::to_string));
        row.extend(traj.outputs[k].iter().map(f64::to_string));
        row.extend(traj.inputs[k].iter().map(f64::to_string));
        if let Some(m) = monitors {
            let s = m.samples[k];
            row.extend([s.v, s.w_n, s.w_e, s.w_c].iter().map(f64::to_string));
        }
        row.push(traj.alg_residual[k].to_string());
        row.push(traj.domain_margin[k].to_string());
        w.write_record(&row).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}
