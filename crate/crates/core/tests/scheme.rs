use thermoctl_core::experiments::{Blob, FieldSpec, LayoutSpec};
use thermoctl_core::fem::{assemble_mass, assemble_stiffness, interpolate};
use thermoctl_core::model::{DeviceSet, ReactionTerm, ThermostatBank};
use thermoctl_core::stepper::{
    build_step_operator, picard_step, run, AssembledProblem, FeedbackMode, Observer, Problem, RunOptions,
    SchemeParams, SimState, SolveContext,
};
use thermoctl_core::{build_mesh, preset, simulate, CsrMatrix, ExperimentConfig, Mesh, NodalField};

/// Gaussian elimination with partial pivoting on a dense copy.
fn dense_solve(a: &CsrMatrix, b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut m = a.to_dense();
    let mut x = b.to_vec();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs())).unwrap();
        m.swap(c, p);
        x.swap(c, p);
        for r in c + 1..n {
            let f = m[r][c] / m[c][c];
            if f != 0.0 {
                for k in c..n {
                    m[r][k] -= f * m[c][k];
                }
                x[r] -= f * x[c];
            }
        }
    }
    for c in (0..n).rev() {
        let s: f64 = (c + 1..n).map(|k| m[c][k] * x[k]).sum();
        x[c] = (x[c] - s) / m[c][c];
    }
    x
}

fn small_config(n_div: usize, steps: usize) -> ExperimentConfig {
    let mut c = preset("exp2-ic1").unwrap();
    c.layout = LayoutSpec::Grid { n_per_side: 2, radius: 0.5 };
    c.scheme.n_div = n_div;
    c.scheme.steps = steps;
    c.t_final = 0.05 * steps as f64;
    c.with_uniform_thermostats(0.1, 0.0)
}

fn uncontrolled(mesh: &Mesh, reaction: ReactionTerm, tau: f64) -> AssembledProblem {
    let problem = Problem {
        diffusion: 0.05,
        reaction,
        devices: DeviceSet::none(),
        switches: Vec::new(),
        thermostats: ThermostatBank::new(Vec::new(), Vec::new()).unwrap(),
        ystar: NodalField::zeros(mesh),
    };
    AssembledProblem::assemble(mesh, &problem, tau).unwrap()
}

#[derive(Default)]
struct SolveLog {
    worst_oracle_gap: f64,
    worst_rel_residual: f64,
    solves: usize,
    use_oracle: bool,
}

impl Observer for SolveLog {
    fn on_linear_solve(&mut self, ctx: &SolveContext<'_>) {
        self.solves += 1;
        let ax = ctx.matrix.spmv(ctx.solution).unwrap();
        let r: f64 = ax.iter().zip(ctx.rhs).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let b: f64 = ctx.rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
        if b > 0.0 {
            self.worst_rel_residual = self.worst_rel_residual.max(r / b);
        }
        if self.use_oracle {
            let x = dense_solve(ctx.matrix, ctx.rhs);
            let gap = x.iter().zip(ctx.solution).fold(0.0f64, |g, (a, b)| g.max((a - b).abs()));
            self.worst_oracle_gap = self.worst_oracle_gap.max(gap);
        }
    }
}

#[test]
fn step_operator_limits() {
    let mesh = build_mesh(4).unwrap();
    let m = assemble_mass(&mesh).unwrap();
    let k = assemble_stiffness(&mesh).unwrap();
    let a0 = build_step_operator(&m, &k, 0.3, 0.0).unwrap();
    assert_eq!(a0.to_dense(), m.to_dense());
    let a = build_step_operator(&m, &k, 0.3, 0.2).unwrap();
    let ones = vec![1.0; mesh.n_vertices()];
    let (l, r) = (a.spmv(&ones).unwrap(), m.spmv(&ones).unwrap());
    for (x, y) in l.iter().zip(&r) {
        assert!((x - y).abs() < 1e-14);
    }
    assert!(build_step_operator(&m, &k, 0.0, 0.1).is_err());
}

#[test]
fn per_step_solves_match_dense_oracle() {
    for n_div in [1, 2, 3, 4] {
        let inst = small_config(n_div, 10).instantiate().unwrap();
        let mut log = SolveLog { use_oracle: true, ..Default::default() };
        run(inst.initial, &inst.problem, &inst.scheme, &RunOptions::default(), &mut [&mut log]).unwrap();
        assert_eq!(log.solves, 10 * 3);
        assert!(log.worst_oracle_gap <= 1e-8, "n_div {n_div}: {}", log.worst_oracle_gap);
    }
}

#[test]
fn cg_matches_dense_oracle_up_to_six_divisions() {
    for n_div in [5, 6] {
        let mesh = build_mesh(n_div).unwrap();
        let m = assemble_mass(&mesh).unwrap();
        let k = assemble_stiffness(&mesh).unwrap();
        let a = build_step_operator(&m, &k, 0.02, 0.01).unwrap();
        let b = m.spmv(interpolate(&mesh, |p| (3.0 * p[0]).sin() + p[1] * p[1]).unwrap().values()).unwrap();
        let sol = thermoctl_core::cg_solve(&a, &b, &Default::default()).unwrap();
        let x = dense_solve(&a, &b);
        let gap = x.iter().zip(&sol.x).fold(0.0f64, |g, (a, b)| g.max((a - b).abs()));
        assert!(gap < 1e-8, "{gap}");
    }
}

#[test]
fn linear_residual_meets_tolerance() {
    let inst = small_config(12, 20).instantiate().unwrap();
    let mut log = SolveLog::default();
    let out = run(inst.initial, &inst.problem, &inst.scheme, &RunOptions::default(), &mut [&mut log]).unwrap();
    assert!(log.worst_rel_residual <= inst.scheme.cg.rel_tol * (1.0 + 1e-6), "{}", log.worst_rel_residual);
    assert!(out.reports.iter().all(|r| r.linear_residual <= inst.scheme.cg.rel_tol));
}

#[test]
fn constant_state_is_stationary() {
    let mesh = build_mesh(1).unwrap();
    let p = uncontrolled(&mesh, ReactionTerm::Zero, 0.1);
    let params = SchemeParams::new(1.0, 10, 3).unwrap();
    let out = run(SimState::initial(NodalField::constant(&mesh, 1.0), vec![]), &p, &params, &RunOptions::default(), &mut [])
        .unwrap();
    for v in out.final_state.y.values() {
        assert!((v - 1.0).abs() < 1e-12);
    }
}

#[test]
fn mass_is_conserved_without_reaction_or_devices() {
    let mesh = build_mesh(30).unwrap();
    let p = uncontrolled(&mesh, ReactionTerm::Zero, 0.01);
    let params = SchemeParams::new(1.0, 100, 3).unwrap();
    let y0 = interpolate(&mesh, |x| 0.3 + (-(x[0] - 0.2).powi(2) / 0.1 - x[1].powi(2) / 0.2).exp()).unwrap();
    let out = run(SimState::initial(y0, vec![]), &p, &params, &RunOptions::default(), &mut []).unwrap();
    let m0 = out.series.mass_trace[0];
    for m in &out.series.mass_trace {
        assert!(((m - m0) / m0).abs() <= 1e-9, "{m} vs {m0}");
    }
}

#[test]
fn mass_balance_with_devices() {
    let mut c = small_config(16, 30);
    c.reaction = ReactionTerm::Zero;
    let inst = c.instantiate().unwrap();
    let totals = inst.problem.control_load_totals();
    let tau = inst.scheme.tau;
    let opts = RunOptions { snapshot_every: None, keep_trajectory: true };
    let out = run(inst.initial, &inst.problem, &inst.scheme, &opts, &mut []).unwrap();
    let traj = out.trajectory.unwrap();
    let scale = out.series.mass_trace.iter().fold(1.0f64, |a, m| a.max(m.abs()));
    for w in traj.windows(2) {
        let inflow: f64 = w[1].kappa.iter().zip(&totals).map(|(k, g)| tau * k * g).sum();
        let gap = inst.problem.total_mass(&w[1].y) - inst.problem.total_mass(&w[0].y) - inflow;
        assert!(gap.abs() <= 1e-9 * scale, "{gap}");
    }
    assert!(traj.iter().any(|s| s.kappa.iter().any(|k| k.abs() > 1e-3)), "controls never acted");
}

#[test]
fn zero_equilibrium_is_fixed() {
    let mut c = preset("exp1-64").unwrap();
    c.y0 = FieldSpec::Constant { value: 0.0 };
    c.scheme.n_div = 24;
    c.scheme.steps = 20;
    let out = simulate(&c, &RunOptions::default(), &mut []).unwrap();
    assert!(out.series.e_y.iter().all(|e| *e == 0.0));
    assert!(out.series.kappa_traces.iter().flatten().all(|k| *k == 0.0));
}

#[test]
fn single_step_run_equals_picard_step() {
    let inst = small_config(8, 1).instantiate().unwrap();
    let (next, _) = picard_step(&inst.initial, &inst.problem, &inst.scheme).unwrap();
    let out = run(inst.initial.clone(), &inst.problem, &inst.scheme, &RunOptions::default(), &mut []).unwrap();
    assert_eq!(out.final_state, next);
    assert_eq!(out.series.len(), 2);
}

#[test]
fn replay_is_bitwise_deterministic() {
    let c = small_config(10, 15);
    let opts = RunOptions { snapshot_every: Some(4), keep_trajectory: true };
    let a = simulate(&c, &opts, &mut []).unwrap();
    let b = simulate(&c, &opts, &mut []).unwrap();
    assert_eq!(a.series, b.series);
    for (x, y) in a.trajectory.unwrap().iter().zip(&b.trajectory.unwrap()) {
        assert_eq!(x.y.values(), y.y.values());
        assert_eq!(x.kappa, y.kappa);
    }
    let steps: Vec<_> = a.snapshots.iter().map(|s| s.0).collect();
    assert_eq!(steps, vec![0, 4, 8, 12, 15]);
}

#[test]
fn transposed_configuration_gives_transposed_trajectory() {
    let mut c = preset("exp2-ic1").unwrap();
    c.layout = LayoutSpec::Grid { n_per_side: 4, radius: 0.25 };
    c = c.with_uniform_thermostats(0.1, 0.0);
    let blob = |x: f64, y: f64, w: f64, a: f64| Blob { center: [x, y], width: w, amplitude: a };
    c.y0 = FieldSpec::GaussianBlobs {
        blobs: vec![blob(0.4, -0.3, 0.3, 0.8), blob(-0.3, 0.4, 0.3, 0.8), blob(-0.5, -0.5, 0.4, -0.6)],
    };
    c.ystar = FieldSpec::GaussianBlobs { blobs: vec![blob(0.3, 0.3, 0.5, 0.4)] };
    c.scheme.n_div = 20;
    c.scheme.steps = 40;
    c.t_final = 1.0;
    let inst = c.instantiate().unwrap();
    let perm = inst.problem.mesh().transpose_permutation();
    let opts = RunOptions { snapshot_every: None, keep_trajectory: true };
    let out = run(inst.initial, &inst.problem, &inst.scheme, &opts, &mut []).unwrap();
    for s in out.trajectory.unwrap() {
        let v = s.y.values();
        let gap = (0..v.len()).fold(0.0f64, |g, i| g.max((v[i] - v[perm[i]]).abs()));
        assert!(gap <= 1e-9, "step {}: {gap}", s.step_index);
        for i in 0..4 {
            for j in 0..4 {
                assert!((s.kappa[j * 4 + i] - s.kappa[i * 4 + j]).abs() <= 1e-9);
            }
        }
    }
}

#[test]
fn frozen_feedback_keeps_initial_signals() {
    let mut c = small_config(8, 10).with_uniform_thermostats(0.1, 0.7);
    c.scheme.feedback = FeedbackMode::Frozen;
    let out = simulate(&c, &RunOptions::default(), &mut []).unwrap();
    assert!(out.series.kappa_traces.iter().flatten().all(|k| *k == 0.7));
}

#[test]
fn wrong_tau_is_rejected() {
    let inst = small_config(4, 5).instantiate().unwrap();
    let mut params = inst.scheme;
    params.tau *= 2.0;
    let err = picard_step(&inst.initial, &inst.problem, &params).unwrap_err();
    assert!(err.to_string().contains("tau"), "{err}");
}
