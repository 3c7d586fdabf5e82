//! Acceptance checks. Each criterion prints one `PASS`/`FAIL` line; the
//! process exits nonzero if any criterion fails.

use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use thermoctl_cli::commands::{run_experiment, snapshot_file, RunSettings, SERIES_FILE};
use thermoctl_cli::output::{parse_pgm, render_pgm};
use thermoctl_core::convergence::{heat_mms_study, MmsSetup};
use thermoctl_core::experiments::{probe_direction, realize_fields, Blob, FieldSpec, LayoutSpec, PRESET_NAMES};
use thermoctl_core::model::ReactionTerm;
use thermoctl_core::stability::{perturb_initial, probe_data_stability};
use thermoctl_core::stepper::{Observer, SolveContext};
use thermoctl_core::{build_mesh, preset, run, CsrMatrix, ExperimentConfig, NodalField, RunOptions, RunOutput};

type Verdict = Result<String, String>;

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(limit: Duration, elapsed: Duration, v: Verdict) -> Verdict {
    let v = v.map(|d| format!("{d}; {:.1}s", elapsed.as_secs_f64()));
    match v {
        Ok(d) if elapsed > limit => Err(format!("{d} exceeds the {}s limit", limit.as_secs())),
        other => other,
    }
}

fn simulate(c: &ExperimentConfig) -> Result<RunOutput, String> {
    let inst = c.instantiate().map_err(|e| e.to_string())?;
    run(inst.initial, &inst.problem, &inst.scheme, &RunOptions::default(), &mut []).map_err(|e| e.to_string())
}

fn equilibrium() -> Verdict {
    let mut c = preset("exp1-64").map_err(|e| e.to_string())?;
    c.y0 = FieldSpec::Constant { value: 0.0 };
    c.ystar = FieldSpec::Constant { value: 0.0 };
    c.scheme.n_div = 50;
    c.scheme.steps = 100;
    let s = simulate(&c)?.series;
    let e = s.e_y.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let k = s.kappa_traces.iter().flatten().fold(0.0f64, |a, x| a.max(x.abs()));
    check(e <= 1e-12 && k <= 1e-12, format!("max E_y {e:.3e}, max |kappa| {k:.3e}"))
}

fn mass_conservation() -> Verdict {
    let mut c = preset("exp2-ic1").map_err(|e| e.to_string())?;
    c.layout = LayoutSpec::None;
    c.reaction = ReactionTerm::Zero;
    c.y0 = FieldSpec::GaussianBlobs { blobs: vec![Blob { center: [0.3, -0.2], width: 0.4, amplitude: 1.0 }] };
    c.scheme.n_div = 50;
    c.scheme.steps = 100;
    let c = c.with_uniform_thermostats(0.1, 0.0);
    let s = simulate(&c)?.series;
    let m0 = s.mass_trace[0];
    let drift = s.mass_trace.iter().fold(0.0f64, |a, m| a.max(((m - m0) / m0).abs()));
    check(drift <= 1e-9, format!("max relative mass drift {drift:.3e}"))
}

fn mms_convergence() -> Verdict {
    let levels = heat_mms_study(&MmsSetup::default()).map_err(|e| e.to_string())?;
    let orders: Vec<f64> = levels.iter().filter_map(|l| l.order).collect();
    check(orders.len() == 2 && orders.iter().all(|o| *o >= 1.8), format!("observed L2 orders {orders:.3?}"))
}

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
            for k in c..n {
                m[r][k] -= f * m[c][k];
            }
            x[r] -= f * x[c];
        }
    }
    for c in (0..n).rev() {
        let s: f64 = (c + 1..n).map(|k| m[c][k] * x[k]).sum();
        x[c] = (x[c] - s) / m[c][c];
    }
    x
}

#[derive(Default)]
struct OracleGap {
    worst: f64,
    solves: usize,
}

impl Observer for OracleGap {
    fn on_linear_solve(&mut self, ctx: &SolveContext<'_>) {
        let x = dense_solve(ctx.matrix, ctx.rhs);
        self.solves += 1;
        self.worst = x.iter().zip(ctx.solution).fold(self.worst, |g, (a, b)| g.max((a - b).abs()));
    }
}

fn oracle_equivalence() -> Verdict {
    let mut gap = OracleGap::default();
    for n_div in 1..=4 {
        for layout in [LayoutSpec::Grid { n_per_side: 2, radius: 0.5 }, LayoutSpec::Grid { n_per_side: 1, radius: 1.0 }] {
            let mut c = preset("exp2-ic1").map_err(|e| e.to_string())?;
            c.layout = layout;
            c.scheme.n_div = n_div;
            c.scheme.steps = 40;
            c.t_final = 2.0;
            let c = c.with_uniform_thermostats(0.1, 0.0);
            let inst = c.instantiate().map_err(|e| e.to_string())?;
            run(inst.initial, &inst.problem, &inst.scheme, &RunOptions::default(), &mut [&mut gap])
                .map_err(|e| e.to_string())?;
        }
    }
    check(gap.worst <= 1e-8, format!("{} solves, max-abs gap to dense solve {:.3e}", gap.solves, gap.worst))
}

fn experiment1_trend() -> Verdict {
    let mut finals = Vec::new();
    for name in ["exp1-16", "exp1-36", "exp1-64"] {
        let mut c = preset(name).map_err(|e| e.to_string())?;
        c.scheme.n_div = 60;
        c.scheme.steps = 1200;
        finals.push(simulate(&c)?.series.final_e_y().unwrap());
    }
    let decreasing = finals.windows(2).all(|w| w[1] < w[0]);
    check(
        decreasing && finals[2] <= 1e-2 * finals[0],
        format!("E_y(T) for 16/36/64 devices: {:.4e} / {:.4e} / {:.4e}", finals[0], finals[1], finals[2]),
    )
}

fn experiment2_robustness() -> Verdict {
    let a = simulate(&preset("exp2-ic1").map_err(|e| e.to_string())?)?.series.final_e_y().unwrap();
    let b = simulate(&preset("exp2-ic2").map_err(|e| e.to_string())?)?.series.final_e_y().unwrap();
    let ratio = a / b;
    check((0.9..=1.1).contains(&ratio), format!("E_y(T) {a:.6e} vs {b:.6e}, ratio {ratio:.8}"))
}

fn experiment3_trend() -> Verdict {
    let full = simulate(&preset("exp3-64").map_err(|e| e.to_string())?)?.series;
    let sub = simulate(&preset("exp3-20").map_err(|e| e.to_string())?)?.series;
    let half = full.times.last().unwrap() / 2.0;
    let dominated = full.times.iter().enumerate().filter(|(_, t)| **t >= half - 1e-12).all(|(m, _)| sub.e_y[m] >= full.e_y[m]);
    let (e64, e20) = (full.final_e_y().unwrap(), sub.final_e_y().unwrap());
    let rel = (e20 - e64).abs() / e20.max(e64);
    check(
        dominated && rel >= 0.1,
        format!("E_y(T) 20 devices {e20:.4e} vs 64 devices {e64:.4e} (relative gap {rel:.3}); dominated on [T/2, T]: {dominated}"),
    )
}

fn stability_probe() -> Verdict {
    let base = preset("exp2-ic1").map_err(|e| e.to_string())?;
    let r = probe_data_stability(&base, &probe_direction(), &[1e-1, 1e-2, 1e-3]).map_err(|e| e.to_string())?;

    let inst = base.instantiate().map_err(|e| e.to_string())?;
    let dir = realize_fields(&probe_direction(), inst.problem.mesh()).map_err(|e| e.to_string())?;
    let opts = RunOptions { snapshot_every: None, keep_trajectory: true };
    let a = run(inst.initial.clone(), &inst.problem, &inst.scheme, &opts, &mut []).map_err(|e| e.to_string())?;
    let zero = perturb_initial(&inst, &dir, 0.0).map_err(|e| e.to_string())?;
    let b = run(zero, &inst.problem, &inst.scheme, &opts, &mut []).map_err(|e| e.to_string())?;
    let bitwise = a
        .trajectory
        .unwrap()
        .iter()
        .zip(b.trajectory.unwrap().iter())
        .all(|(x, y)| x.y.values() == y.y.values() && x.kappa == y.kappa);
    check(
        r.spread < 3.0 && bitwise,
        format!("ratios {:.4?}, spread {:.4}; delta = 0 bitwise identical: {bitwise}", r.ratios, r.spread),
    )
}

fn kappa_bound() -> Verdict {
    let mut worst = f64::NEG_INFINITY;
    let mut violations = Vec::new();
    for name in PRESET_NAMES {
        let c = preset(name).map_err(|e| e.to_string())?;
        let inst = c.instantiate().map_err(|e| e.to_string())?;
        let bounds = inst.problem.kappa_bounds();
        let out = run(inst.initial, &inst.problem, &inst.scheme, &RunOptions::default(), &mut [])
            .map_err(|e| e.to_string())?;
        for (trace, b) in out.series.kappa_traces.iter().zip(&bounds) {
            for k in trace {
                worst = worst.max(k.abs() / b);
                if k.abs() > *b {
                    violations.push(format!("{name}: |{k}| > {b}"));
                }
            }
        }
    }
    check(
        violations.is_empty(),
        format!("7 presets at full scale, max |kappa| / bound = {worst:.6}; violations: {}", violations.len()),
    )
}

fn same_bytes(a: &Path, b: &Path) -> Result<bool, String> {
    Ok(fs::read(a).map_err(|e| e.to_string())? == fs::read(b).map_err(|e| e.to_string())?)
}

fn determinism_and_io() -> Verdict {
    let dirs = [tempfile::tempdir().map_err(|e| e.to_string())?, tempfile::tempdir().map_err(|e| e.to_string())?];
    let mut c = preset("exp2-ic1").map_err(|e| e.to_string())?;
    c.scheme.n_div = 40;
    let mut files = Vec::new();
    for d in &dirs {
        let s = RunSettings { out: Some(d.path().to_path_buf()), snap_every: Some(100), ..Default::default() };
        files = run_experiment(&c, &s).map_err(|e| e.to_string())?.written;
    }
    let mut names = vec![SERIES_FILE.to_string()];
    names.extend([0, 100, 200, 300, 400].map(snapshot_file));
    let mut identical = true;
    for n in &names {
        identical &= same_bytes(&dirs[0].path().join(n), &dirs[1].path().join(n))?;
    }

    let mesh = build_mesh(10).map_err(|e| e.to_string())?;
    let mut pixel_law = true;
    for (value, expected) in [(-1.0, 0u8), (1.0, 255), (0.0, 128)] {
        let f = NodalField::constant(&mesh, value);
        let bytes = render_pgm(&f, &mesh, -1.0, 1.0).map_err(|e| e.to_string())?;
        let (w, h, px) = parse_pgm(&bytes).ok_or("malformed image")?;
        pixel_law &= w == 11 && h == 11 && px.iter().all(|p| *p == expected);
    }
    check(
        identical && pixel_law && files.len() == names.len() + 1,
        format!("{} files byte-identical: {identical}; pixel law on min/max/mid fields: {pixel_law}", names.len()),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, u64, fn() -> Verdict); 10] = [
        ("C1 equilibrium preservation", 5, equilibrium),
        ("C2 discrete mass conservation", 5, mass_conservation),
        ("C3 manufactured-solution convergence", 60, mms_convergence),
        ("C4 dense oracle equivalence", 600, oracle_equivalence),
        ("C5 experiment 1 device-count trend", 600, experiment1_trend),
        ("C6 experiment 2 initial-condition robustness", 600, experiment2_robustness),
        ("C7 experiment 3 device-subset trend", 600, experiment3_trend),
        ("C8 stability probe", 900, stability_probe),
        ("C9 signal bound on every preset", 900, kappa_bound),
        ("C10 determinism and image output", 600, determinism_and_io),
    ];
    let mut failed = 0;
    for (name, limit, f) in criteria {
        let t0 = Instant::now();
        let v = f();
        match within(Duration::from_secs(limit), t0.elapsed(), v) {
            Ok(d) => println!("PASS  {name}: {d}"),
            Err(d) => {
                failed += 1;
                println!("FAIL  {name}: {d}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
