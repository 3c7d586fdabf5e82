//! Implicit Euler in time with a fixed number of Picard sweeps per step.
//!
//! One step from `(y^m, kappa^m)` runs, for `p = 1..=n_picard`:
//!
//! 1. `m_k = h_k^T M (y^(p-1) - y*)`
//! 2. `kappa_j^(p) = (beta_j kappa_j^m + tau W_j) / (beta_j + tau)` with
//!    `W_j = sum_k alpha_jk w_k(m_k)`
//! 3. `(M + tau D K) y^(p) = M y^m + tau (M f(y^(p-1)) + sum_j kappa_j^(p) G_j)`
//!
//! starting from `y^(0) = y^m`. `G_j = M g_j` are the control loads. The
//! reaction is always lagged, so the step matrix is assembled once per run.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{assemble_mass, assemble_stiffness, interpolate, NodalField};
use crate::mesh::Mesh;
use crate::metrics::{ErrorSeries, SeriesRecorder};
use crate::model::{thermostat_step, DeviceSet, ReactionTerm, SwitchingFunction, ThermostatBank};
use crate::sparse::{cg_solve_from, CgOptions, CsrMatrix};

/// Which iterate the measurement devices see inside a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasurementTiming {
    /// The current Picard iterate at the new time level.
    #[default]
    Implicit,
    /// The state at the old time level `y^m`.
    Explicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackMode {
    #[default]
    Active,
    /// Signals stay at their initial values; the loop is open.
    Frozen,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeParams {
    pub steps: usize,
    pub tau: f64,
    pub n_picard: usize,
    pub cg: CgOptions,
    pub measurement: MeasurementTiming,
    pub feedback: FeedbackMode,
}

impl SchemeParams {
    /// `steps` uniform steps over `[0, t_final]`.
    pub fn new(t_final: f64, steps: usize, n_picard: usize) -> Result<Self> {
        if !(t_final > 0.0 && t_final.is_finite()) {
            return Err(Error::param("t_final", "must be positive"));
        }
        if steps == 0 {
            return Err(Error::param("steps", "at least one time step is required"));
        }
        if n_picard == 0 {
            return Err(Error::param("n_picard", "at least one Picard iteration is required"));
        }
        Ok(SchemeParams {
            steps,
            tau: t_final / steps as f64,
            n_picard,
            cg: CgOptions::default(),
            measurement: MeasurementTiming::default(),
            feedback: FeedbackMode::default(),
        })
    }

    pub fn t_final(&self) -> f64 {
        self.tau * self.steps as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub step_index: usize,
    pub time: f64,
    pub y: NodalField,
    pub kappa: Vec<f64>,
}

impl SimState {
    pub fn initial(y0: NodalField, kappa0: Vec<f64>) -> Self {
        SimState { step_index: 0, time: 0.0, y: y0, kappa: kappa0 }
    }
}

/// Continuous-level description of one controlled system on a mesh.
#[derive(Debug, Clone)]
pub struct Problem {
    pub diffusion: f64,
    pub reaction: ReactionTerm,
    pub devices: DeviceSet,
    /// One switching function per measurement device.
    pub switches: Vec<SwitchingFunction>,
    pub thermostats: ThermostatBank,
    /// Time-independent reference state.
    pub ystar: NodalField,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct SparseVec {
    idx: Vec<usize>,
    val: Vec<f64>,
}

impl SparseVec {
    fn from_dense(v: &[f64]) -> Self {
        let (idx, val) = v.iter().enumerate().filter(|(_, x)| **x != 0.0).map(|(i, x)| (i, *x)).unzip();
        SparseVec { idx, val }
    }

    fn dot(&self, dense: &[f64]) -> f64 {
        self.idx.iter().zip(&self.val).map(|(&i, v)| v * dense[i]).sum()
    }

    fn add_to(&self, s: f64, dense: &mut [f64]) {
        for (&i, v) in self.idx.iter().zip(&self.val) {
            dense[i] += s * v;
        }
    }

    pub(crate) fn sum(&self) -> f64 {
        self.val.iter().sum()
    }
}

/// Everything a step needs, discretized once: operators, device profiles,
/// control loads and the reference state.
#[derive(Debug, Clone)]
pub struct AssembledProblem {
    mesh: Mesh,
    mass: CsrMatrix,
    stiffness: CsrMatrix,
    step_operator: CsrMatrix,
    tau: f64,
    diffusion: f64,
    mass_row_sums: Vec<f64>,
    control_fields: Vec<NodalField>,
    control_loads: Vec<SparseVec>,
    measurement_profiles: Vec<SparseVec>,
    alpha: Vec<Vec<f64>>,
    switches: Vec<SwitchingFunction>,
    reaction: ReactionTerm,
    thermostats: ThermostatBank,
    ystar: NodalField,
}

/// `M + tau D K`.
pub fn build_step_operator(mass: &CsrMatrix, stiffness: &CsrMatrix, diffusion: f64, tau: f64) -> Result<CsrMatrix> {
    if !(diffusion > 0.0 && diffusion.is_finite()) {
        return Err(Error::param("diffusion", format!("D must be positive, got {diffusion}")));
    }
    if !(tau >= 0.0 && tau.is_finite()) {
        return Err(Error::param("tau", "must be nonnegative"));
    }
    mass.add_scaled(tau * diffusion, stiffness)
}

impl AssembledProblem {
    pub fn assemble(mesh: &Mesh, problem: &Problem, tau: f64) -> Result<Self> {
        let mass = assemble_mass(mesh)?;
        let stiffness = assemble_stiffness(mesh)?;
        Self::with_operators(mesh, mass, stiffness, problem, tau)
    }

    /// Reuses already assembled mass and stiffness matrices of `mesh`.
    pub fn with_operators(
        mesh: &Mesh,
        mass: CsrMatrix,
        stiffness: CsrMatrix,
        problem: &Problem,
        tau: f64,
    ) -> Result<Self> {
        if !(tau > 0.0) {
            return Err(Error::param("tau", "must be positive"));
        }
        let n = mesh.n_vertices();
        for (context, op) in [("mass matrix", &mass), ("stiffness matrix", &stiffness)] {
            if op.n_rows() != n || op.n_cols() != n {
                return Err(Error::DimensionMismatch { context, expected: n, actual: op.n_rows() });
            }
        }
        if problem.ystar.mesh_id() != mesh.id() {
            return Err(Error::MeshMismatch { left: mesh.id(), right: problem.ystar.mesh_id() });
        }
        let devices = &problem.devices;
        if problem.switches.len() != devices.n_measurements() {
            return Err(Error::DimensionMismatch {
                context: "switching functions",
                expected: devices.n_measurements(),
                actual: problem.switches.len(),
            });
        }
        if problem.thermostats.len() != devices.n_controls() {
            return Err(Error::DimensionMismatch {
                context: "thermostats",
                expected: devices.n_controls(),
                actual: problem.thermostats.len(),
            });
        }
        problem.reaction.validate()?;

        let step_operator = build_step_operator(&mass, &stiffness, problem.diffusion, tau)?;
        let mass_row_sums = mass.spmv(&vec![1.0; n])?;
        let mut control_fields = Vec::with_capacity(devices.n_controls());
        let mut control_loads = Vec::with_capacity(devices.n_controls());
        for d in devices.controls() {
            let g = interpolate(mesh, |p| d.profile(p))?;
            control_loads.push(SparseVec::from_dense(&mass.spmv(g.values())?));
            control_fields.push(g);
        }
        let measurement_profiles = devices
            .measurements()
            .iter()
            .map(|d| interpolate(mesh, |p| d.profile(p)).map(|h| SparseVec::from_dense(h.values())))
            .collect::<Result<Vec<_>>>()?;

        Ok(AssembledProblem {
            mesh: mesh.clone(),
            mass,
            stiffness,
            step_operator,
            tau,
            diffusion: problem.diffusion,
            mass_row_sums,
            control_fields,
            control_loads,
            measurement_profiles,
            alpha: devices.alpha().to_vec(),
            switches: problem.switches.clone(),
            reaction: problem.reaction.clone(),
            thermostats: problem.thermostats.clone(),
            ystar: problem.ystar.clone(),
        })
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn mass(&self) -> &CsrMatrix {
        &self.mass
    }

    pub fn stiffness(&self) -> &CsrMatrix {
        &self.stiffness
    }

    pub fn step_operator(&self) -> &CsrMatrix {
        &self.step_operator
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn diffusion(&self) -> f64 {
        self.diffusion
    }

    pub fn ystar(&self) -> &NodalField {
        &self.ystar
    }

    pub fn thermostats(&self) -> &ThermostatBank {
        &self.thermostats
    }

    pub fn alpha(&self) -> &[Vec<f64>] {
        &self.alpha
    }

    pub fn switches(&self) -> &[SwitchingFunction] {
        &self.switches
    }

    pub fn n_controls(&self) -> usize {
        self.control_loads.len()
    }

    /// Nodal control profiles `g_j`.
    pub fn control_fields(&self) -> &[NodalField] {
        &self.control_fields
    }

    /// `1^T G_j = \int g_j` in the discrete sense.
    pub fn control_load_totals(&self) -> Vec<f64> {
        self.control_loads.iter().map(SparseVec::sum).collect()
    }

    /// `1^T M y`.
    pub fn total_mass(&self, y: &NodalField) -> f64 {
        self.mass_row_sums.iter().zip(y.values()).map(|(a, b)| a * b).sum()
    }

    /// Upper bound `max(|kappa_j0|, sum_k |alpha_jk| H_w,k)` for each signal.
    pub fn kappa_bounds(&self) -> Vec<f64> {
        self.alpha
            .iter()
            .zip(self.thermostats.kappa0())
            .map(|(row, k0)| {
                let b: f64 = row.iter().zip(&self.switches).map(|(a, w)| a.abs() * w.h_w).sum();
                k0.abs().max(b)
            })
            .collect()
    }

    /// Measurement values `h_k^T M (y - y*)` for every device.
    pub fn measurements(&self, y: &NodalField) -> Result<Vec<f64>> {
        let d = y.sub(&self.ystar)?;
        let md = self.mass.spmv(d.values())?;
        Ok(self.measurement_profiles.iter().map(|h| h.dot(&md)).collect())
    }

    pub fn feedback_values(&self, measurements: &[f64]) -> Vec<f64> {
        self.alpha
            .iter()
            .map(|row| row.iter().zip(&self.switches).zip(measurements).map(|((a, w), &m)| a * w.eval(m)).sum())
            .collect()
    }

    /// Right-hand side `M y^m + tau (M f(lagged) + sum_j kappa_j G_j)`.
    pub fn step_rhs(&self, y_old: &NodalField, lagged: &NodalField, kappa: &[f64]) -> Result<Vec<f64>> {
        let n = self.mesh.n_vertices();
        let mut work = y_old.values().to_vec();
        if !self.reaction.is_zero() {
            for (w, &s) in work.iter_mut().zip(lagged.values()) {
                *w += self.tau * self.reaction.eval(s);
            }
        }
        let mut rhs = vec![0.0; n];
        self.mass.spmv_into(&work, &mut rhs)?;
        for (g, &k) in self.control_loads.iter().zip(kappa) {
            g.add_to(self.tau * k, &mut rhs);
        }
        Ok(rhs)
    }
}

/// Per-step solver diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepReport {
    pub cg_iters: usize,
    /// Largest relative linear residual over the Picard sweeps.
    pub linear_residual: f64,
    /// Max-abs change between the last two Picard iterates.
    pub nonlinear_residual: f64,
}

/// Data handed to observers after every linear solve.
pub struct SolveContext<'a> {
    pub step: usize,
    pub picard: usize,
    pub matrix: &'a CsrMatrix,
    pub rhs: &'a [f64],
    pub solution: &'a [f64],
}

pub trait Observer {
    fn observe(&mut self, _problem: &AssembledProblem, _state: &SimState) -> Result<()> {
        Ok(())
    }

    fn on_linear_solve(&mut self, _ctx: &SolveContext<'_>) {}
}

/// Advances `state` by one time step.
pub fn picard_step(state: &SimState, problem: &AssembledProblem, params: &SchemeParams) -> Result<(SimState, StepReport)> {
    picard_step_observed(state, problem, params, &mut [])
}

pub fn picard_step_observed(
    state: &SimState,
    problem: &AssembledProblem,
    params: &SchemeParams,
    observers: &mut [&mut dyn Observer],
) -> Result<(SimState, StepReport)> {
    let step = state.step_index + 1;
    let wrap = |picard: usize| move |e: Error| Error::Step { step, picard, source: Box::new(e) };
    if params.n_picard == 0 {
        return Err(Error::param("n_picard", "at least one Picard iteration is required"));
    }
    if (params.tau - problem.tau).abs() > 1e-14 * problem.tau {
        return Err(Error::param("tau", "scheme time step differs from the assembled step operator"));
    }
    state.y.check_same_mesh(&problem.ystar)?;
    if state.kappa.len() != problem.n_controls() {
        return Err(Error::DimensionMismatch {
            context: "state kappa",
            expected: problem.n_controls(),
            actual: state.kappa.len(),
        });
    }

    let beta = problem.thermostats.beta();
    let n = state.y.len();
    let explicit_m = match params.measurement {
        MeasurementTiming::Explicit => Some(problem.measurements(&state.y).map_err(wrap(0))?),
        MeasurementTiming::Implicit => None,
    };

    let mut report = StepReport::default();
    let mut y_iter = state.y.clone();
    let mut kappa = state.kappa.clone();
    for p in 1..=params.n_picard {
        if params.feedback == FeedbackMode::Active && !kappa.is_empty() {
            let m = match &explicit_m {
                Some(m) => m.clone(),
                None => problem.measurements(&y_iter).map_err(wrap(p))?,
            };
            let w = problem.feedback_values(&m);
            kappa = (0..kappa.len())
                .map(|j| thermostat_step(beta[j], state.kappa[j], w[j], params.tau))
                .collect();
        }
        let rhs = problem.step_rhs(&state.y, &y_iter, &kappa).map_err(wrap(p))?;
        let sol = cg_solve_from(&problem.step_operator, &rhs, Some(y_iter.values()), &params.cg).map_err(wrap(p))?;
        for obs in observers.iter_mut() {
            obs.on_linear_solve(&SolveContext {
                step,
                picard: p,
                matrix: &problem.step_operator,
                rhs: &rhs,
                solution: &sol.x,
            });
        }
        report.cg_iters += sol.iters;
        report.linear_residual = report.linear_residual.max(sol.final_residual);
        let next = NodalField::with_mesh_id(state.y.mesh_id(), n, sol.x).map_err(wrap(p))?;
        if p == params.n_picard {
            report.nonlinear_residual = next
                .values()
                .iter()
                .zip(y_iter.values())
                .fold(0.0, |acc, (a, b)| acc.max((a - b).abs()));
        }
        y_iter = next;
    }
    if let Some(j) = kappa.iter().position(|k| !k.is_finite()) {
        return Err(wrap(params.n_picard)(Error::NonFinite(format!("kappa[{j}]"))));
    }
    Ok((
        SimState { step_index: step, time: step as f64 * params.tau, y: y_iter, kappa },
        report,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RunOptions {
    /// Snapshot cadence in steps; step 0 and the final step are always included.
    pub snapshot_every: Option<usize>,
    pub keep_trajectory: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Timings {
    pub assembly: Duration,
    pub stepping: Duration,
    pub recording: Duration,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub series: ErrorSeries,
    pub snapshots: Vec<(usize, NodalField)>,
    /// Every state from the initial one on, when requested.
    pub trajectory: Option<Vec<SimState>>,
    pub final_state: SimState,
    pub reports: Vec<StepReport>,
    pub timings: Timings,
}

/// Applies `params.steps` Picard steps, recording the error series at every
/// time node and invoking `observers` after every step (and once for the
/// initial state).
pub fn run(
    initial: SimState,
    problem: &AssembledProblem,
    params: &SchemeParams,
    options: &RunOptions,
    observers: &mut [&mut dyn Observer],
) -> Result<RunOutput> {
    if params.steps == 0 {
        return Err(Error::param("steps", "at least one time step is required"));
    }
    if options.snapshot_every == Some(0) {
        return Err(Error::param("snapshot_every", "must be positive"));
    }
    let last = initial.step_index + params.steps;
    let wants_snapshot =
        |m: usize| options.snapshot_every.is_some_and(|s| m % s == 0 || m == last);

    let mut timings = Timings::default();
    let mut recorder = SeriesRecorder::new(problem.n_controls());
    let mut snapshots = Vec::new();
    let mut trajectory = options.keep_trajectory.then(Vec::new);
    let mut reports = Vec::with_capacity(params.steps);

    let mut record = |state: &SimState,
                      observers: &mut [&mut dyn Observer],
                      timings: &mut Timings|
     -> Result<()> {
        let t0 = Instant::now();
        recorder.record(problem, state)?;
        if wants_snapshot(state.step_index) {
            snapshots.push((state.step_index, state.y.clone()));
        }
        if let Some(traj) = trajectory.as_mut() {
            traj.push(state.clone());
        }
        for obs in observers.iter_mut() {
            obs.observe(problem, state)?;
        }
        timings.recording += t0.elapsed();
        Ok(())
    };

    record(&initial, observers, &mut timings)?;
    let mut state = initial;
    for _ in 0..params.steps {
        let t0 = Instant::now();
        let (next, report) = picard_step_observed(&state, problem, params, observers)?;
        timings.stepping += t0.elapsed();
        reports.push(report);
        state = next;
        record(&state, observers, &mut timings)?;
    }
    Ok(RunOutput {
        series: recorder.finish(),
        snapshots,
        trajectory,
        final_state: state,
        reports,
        timings,
    })
}
