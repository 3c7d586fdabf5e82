//! Manufactured-solution convergence study for the uncontrolled heat equation.
//!
//! The exact solution `u = exp(-2 pi^2 D t) cos(pi x1) cos(pi x2)` satisfies
//! homogeneous Neumann conditions on `[-1, 1]^2`. Refinements keep `tau / h^2`
//! fixed so the first-order time error scales like the second-order spatial one.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::fem::{interpolate, l2_norm};
use crate::mesh::build_mesh;
use crate::model::{DeviceSet, ReactionTerm, ThermostatBank};
use crate::stepper::{run, AssembledProblem, Problem, RunOptions, SchemeParams, SimState};

#[derive(Debug, Clone, PartialEq)]
pub struct MmsSetup {
    pub diffusion: f64,
    pub t_final: f64,
    /// Coarsest mesh; each further level doubles `n_div`.
    pub n_div0: usize,
    /// Steps on the coarsest mesh; each further level quadruples them.
    pub steps0: usize,
    pub levels: usize,
    pub cg_tol: f64,
}

impl Default for MmsSetup {
    fn default() -> Self {
        MmsSetup { diffusion: 0.1, t_final: 0.5, n_div0: 16, steps0: 64, levels: 3, cg_tol: 1e-12 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MmsLevel {
    pub n_div: usize,
    pub h: f64,
    pub steps: usize,
    pub tau: f64,
    /// `||y_h(T) - I_h u(T)||_{L2}`
    pub error: f64,
    /// `log2(previous error / error)`; `None` on the coarsest level.
    pub order: Option<f64>,
}

pub fn exact_solution(diffusion: f64, t: f64, p: [f64; 2]) -> f64 {
    (-2.0 * PI * PI * diffusion * t).exp() * (PI * p[0]).cos() * (PI * p[1]).cos()
}

fn solve_level(setup: &MmsSetup, n_div: usize, steps: usize) -> Result<MmsLevel> {
    let mesh = build_mesh(n_div)?;
    let mut params = SchemeParams::new(setup.t_final, steps, 1)?;
    params.cg.rel_tol = setup.cg_tol;
    let problem = Problem {
        diffusion: setup.diffusion,
        reaction: ReactionTerm::Zero,
        devices: DeviceSet::none(),
        switches: Vec::new(),
        thermostats: ThermostatBank::new(Vec::new(), Vec::new())?,
        ystar: interpolate(&mesh, |_| 0.0)?,
    };
    let assembled = AssembledProblem::assemble(&mesh, &problem, params.tau)?;
    let y0 = interpolate(&mesh, |p| exact_solution(setup.diffusion, 0.0, p))?;
    let out = run(SimState::initial(y0, Vec::new()), &assembled, &params, &RunOptions::default(), &mut [])?;
    let exact = interpolate(&mesh, |p| exact_solution(setup.diffusion, setup.t_final, p))?;
    let error = l2_norm(assembled.mass(), &out.final_state.y.sub(&exact)?)?;
    Ok(MmsLevel { n_div, h: mesh.h(), steps, tau: params.tau, error, order: None })
}

/// Runs every refinement level, coarsest first.
pub fn heat_mms_study(setup: &MmsSetup) -> Result<Vec<MmsLevel>> {
    if setup.levels < 2 {
        return Err(Error::param("levels", "at least two refinement levels are required"));
    }
    if !(setup.diffusion > 0.0 && setup.t_final > 0.0) {
        return Err(Error::param("mms", "diffusion and t_final must be positive"));
    }
    let mut out: Vec<MmsLevel> = Vec::with_capacity(setup.levels);
    for l in 0..setup.levels {
        let mut level = solve_level(setup, setup.n_div0 << l, setup.steps0 << (2 * l))?;
        if let Some(prev) = out.last() {
            level.order = Some((prev.error / level.error).log2());
        }
        out.push(level);
    }
    Ok(out)
}
