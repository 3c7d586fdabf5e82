//! Empirical checks of the a-priori bound and of Lipschitz dependence of
//! trajectories on initial data and on the control.
//!
//! Trajectory norms are discrete analogues of
//! `sup_t ||y||_{L2}`, `||grad y||_{L2(Q_T)}`, `sup_t |kappa_j|` and
//! `||kappa_j'||_{L2(0,T)}`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::experiments::{realize_fields, ExperimentConfig, FieldSpec, Instance};
use crate::fem::{h1_seminorm, l2_norm, NodalField};
use crate::sparse::CsrMatrix;
use crate::stepper::{run, RunOptions, RunOutput, SimState};

/// Ratio spread below which a probe is reported as Lipschitz-consistent.
pub const SPREAD_THRESHOLD: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TrajectoryNorms {
    pub sup_l2_y: f64,
    /// `(tau * sum_{m >= 1} (y^m)^T K y^m)^(1/2)`
    pub l2_grad_y: f64,
    pub sup_kappa: f64,
    /// `(sum_j tau * sum_m ((kappa_j^m - kappa_j^(m-1)) / tau)^2)^(1/2)`
    pub l2_dkappa: f64,
}

impl TrajectoryNorms {
    pub fn total(&self) -> f64 {
        self.sup_l2_y + self.l2_grad_y + self.sup_kappa + self.l2_dkappa
    }
}

pub fn trajectory_norms(run: &RunOutput, mass: &CsrMatrix, stiffness: &CsrMatrix, tau: f64) -> Result<TrajectoryNorms> {
    let states = run
        .trajectory
        .as_deref()
        .ok_or_else(|| Error::param("run", "trajectory was not kept; enable RunOptions::keep_trajectory"))?;
    state_norms(states, mass, stiffness, tau)
}

pub fn state_norms(states: &[SimState], mass: &CsrMatrix, stiffness: &CsrMatrix, tau: f64) -> Result<TrajectoryNorms> {
    let mut out = TrajectoryNorms::default();
    let mut grad_sq = 0.0;
    let mut dk_sq = 0.0;
    for (m, s) in states.iter().enumerate() {
        out.sup_l2_y = out.sup_l2_y.max(l2_norm(mass, &s.y)?);
        out.sup_kappa = s.kappa.iter().fold(out.sup_kappa, |a, k| a.max(k.abs()));
        if m > 0 {
            grad_sq += tau * h1_seminorm(stiffness, &s.y)?.powi(2);
            let prev = &states[m - 1].kappa;
            dk_sq += s.kappa.iter().zip(prev).map(|(a, b)| ((a - b) / tau).powi(2) * tau).sum::<f64>();
        }
    }
    out.l2_grad_y = grad_sq.sqrt();
    out.l2_dkappa = dk_sq.sqrt();
    Ok(out)
}

/// Pointwise-in-time differences of two trajectories of the same length.
pub fn difference(a: &[SimState], b: &[SimState]) -> Result<Vec<SimState>> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { context: "trajectory length", expected: a.len(), actual: b.len() });
    }
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            Ok(SimState {
                step_index: x.step_index,
                time: x.time,
                y: x.y.sub(&y.y)?,
                kappa: x.kappa.iter().zip(&y.kappa).map(|(p, q)| p - q).collect(),
            })
        })
        .collect()
}

/// `sup_m ||dy^m||_{L2} + sum_j sup_m |dkappa_j^m|` for a difference trajectory.
pub fn response_norm(diff: &[SimState], mass: &CsrMatrix) -> Result<f64> {
    let mut sup_y = 0.0f64;
    let n_k = diff.first().map_or(0, |s| s.kappa.len());
    let mut sup_k = vec![0.0f64; n_k];
    for s in diff {
        sup_y = sup_y.max(l2_norm(mass, &s.y)?);
        for (acc, k) in sup_k.iter_mut().zip(&s.kappa) {
            *acc = acc.max(k.abs());
        }
    }
    Ok(sup_y + sup_k.iter().sum::<f64>())
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub perturbation_sizes: Vec<f64>,
    pub response_norms: Vec<f64>,
    pub ratios: Vec<f64>,
    /// Full norm set of each difference trajectory.
    pub difference_norms: Vec<TrajectoryNorms>,
    /// `max(ratios) / min(ratios)`.
    pub spread: f64,
}

impl StabilityReport {
    pub fn is_lipschitz_consistent(&self) -> bool {
        self.spread < SPREAD_THRESHOLD
    }

    fn from_parts(deltas: &[f64], parts: Vec<(f64, TrajectoryNorms)>) -> Self {
        let response_norms: Vec<f64> = parts.iter().map(|p| p.0).collect();
        let ratios: Vec<f64> = response_norms.iter().zip(deltas).map(|(r, d)| r / d).collect();
        let max = ratios.iter().copied().fold(f64::MIN, f64::max);
        let min = ratios.iter().copied().fold(f64::MAX, f64::min);
        StabilityReport {
            perturbation_sizes: deltas.to_vec(),
            response_norms,
            ratios,
            difference_norms: parts.into_iter().map(|p| p.1).collect(),
            spread: max / min,
        }
    }
}

fn check_deltas(deltas: &[f64]) -> Result<()> {
    if deltas.len() < 3 {
        return Err(Error::param("deltas", "at least three perturbation sizes are required"));
    }
    if deltas.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
        return Err(Error::param("deltas", "perturbation sizes must be positive"));
    }
    if deltas.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::param("deltas", "perturbation sizes must be strictly decreasing"));
    }
    if deltas[0] / deltas[deltas.len() - 1] < 100.0 * (1.0 - 1e-12) {
        return Err(Error::param("deltas", "perturbation sizes must span at least two decades"));
    }
    Ok(())
}

fn keep_all() -> RunOptions {
    RunOptions { snapshot_every: None, keep_trajectory: true }
}

fn run_instance(inst: &Instance) -> Result<Vec<SimState>> {
    let out = run(inst.initial.clone(), &inst.problem, &inst.scheme, &keep_all(), &mut [])?;
    Ok(out.trajectory.expect("trajectory requested"))
}

fn compare(base: &[SimState], other: &[SimState], inst: &Instance) -> Result<(f64, TrajectoryNorms)> {
    let diff = difference(other, base)?;
    let p = &inst.problem;
    Ok((response_norm(&diff, p.mass())?, state_norms(&diff, p.mass(), p.stiffness(), p.tau())?))
}

/// Initial state of `inst` with `y0` replaced by `y0 + delta * direction`.
pub fn perturb_initial(inst: &Instance, direction: &NodalField, delta: f64) -> Result<SimState> {
    let mut s = inst.initial.clone();
    s.y = s.y.axpy(delta, direction)?;
    Ok(s)
}

/// Runs `base` with `y0 + delta * direction` for every `delta` and compares
/// against the unperturbed run.
pub fn probe_data_stability(base: &ExperimentConfig, direction: &FieldSpec, deltas: &[f64]) -> Result<StabilityReport> {
    check_deltas(deltas)?;
    let inst = base.instantiate()?;
    let dir = realize_fields(direction, inst.problem.mesh())?;
    let base_traj = run_instance(&inst)?;
    let parts = deltas
        .par_iter()
        .map(|&d| {
            let initial = perturb_initial(&inst, &dir, d)?;
            let out = run(initial, &inst.problem, &inst.scheme, &keep_all(), &mut [])?;
            compare(&base_traj, out.trajectory.as_deref().unwrap(), &inst)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(StabilityReport::from_parts(deltas, parts))
}

/// Control gain after a perturbation of size `delta`: `c_g (1 + delta)`, or
/// `delta` itself when the base control is switched off.
pub fn perturbed_control_gain(c_g: f64, delta: f64) -> f64 {
    if c_g == 0.0 {
        delta
    } else {
        c_g * (1.0 + delta)
    }
}

/// Runs `base` with every control height scaled by `1 + delta` and compares
/// against the unperturbed run.
pub fn probe_control_stability(base: &ExperimentConfig, deltas: &[f64]) -> Result<StabilityReport> {
    check_deltas(deltas)?;
    let inst = base.instantiate()?;
    let base_traj = run_instance(&inst)?;
    let parts = deltas
        .par_iter()
        .map(|&d| {
            let mut cfg = base.clone();
            cfg.c_g = perturbed_control_gain(base.c_g, d);
            let traj = run_instance(&cfg.instantiate_on(inst.problem.mesh())?)?;
            compare(&base_traj, &traj, &inst)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(StabilityReport::from_parts(deltas, parts))
}
