//! Tracking errors `E_y(t) = ||y(t) - y*||_{L2}` and
//! `E_y^grad(t) = ||grad(y(t) - y*)||_{L2}`, plus signal and mass traces.

use crate::error::Result;
use crate::fem::{h1_seminorm, l2_norm, NodalField};
use crate::sparse::CsrMatrix;
use crate::stepper::{AssembledProblem, SimState};

pub fn error_l2(mass: &CsrMatrix, y: &NodalField, ystar: &NodalField) -> Result<f64> {
    l2_norm(mass, &y.sub(ystar)?)
}

pub fn error_h1semi(stiffness: &CsrMatrix, y: &NodalField, ystar: &NodalField) -> Result<f64> {
    h1_seminorm(stiffness, &y.sub(ystar)?)
}

/// One entry per recorded time node.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ErrorSeries {
    pub times: Vec<f64>,
    pub e_y: Vec<f64>,
    pub e_grad: Vec<f64>,
    /// `kappa_traces[j][m]`
    pub kappa_traces: Vec<Vec<f64>>,
    /// `1^T M y`
    pub mass_trace: Vec<f64>,
}

impl ErrorSeries {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn n_signals(&self) -> usize {
        self.kappa_traces.len()
    }

    pub fn final_e_y(&self) -> Option<f64> {
        self.e_y.last().copied()
    }

    pub fn final_e_grad(&self) -> Option<f64> {
        self.e_grad.last().copied()
    }
}

#[derive(Debug, Clone, Default)]
pub struct SeriesRecorder {
    series: ErrorSeries,
}

impl SeriesRecorder {
    pub fn new(n_signals: usize) -> Self {
        SeriesRecorder {
            series: ErrorSeries { kappa_traces: vec![Vec::new(); n_signals], ..Default::default() },
        }
    }

    pub fn record(&mut self, problem: &AssembledProblem, state: &SimState) -> Result<()> {
        let d = state.y.sub(problem.ystar())?;
        let s = &mut self.series;
        s.times.push(state.time);
        s.e_y.push(l2_norm(problem.mass(), &d)?);
        s.e_grad.push(h1_seminorm(problem.stiffness(), &d)?);
        s.mass_trace.push(problem.total_mass(&state.y));
        for (trace, &k) in s.kappa_traces.iter_mut().zip(&state.kappa) {
            trace.push(k);
        }
        Ok(())
    }

    pub fn series(&self) -> &ErrorSeries {
        &self.series
    }

    pub fn finish(self) -> ErrorSeries {
        self.series
    }
}
