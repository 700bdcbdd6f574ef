//! Acceptance criteria A1-A10, one PASS/FAIL/SKIP line each.
//!
//! A5, A6, A7 and A9 train full benchmarks. They are skipped unless
//! `ACCEPTANCE_SCALE` is `desk` (5000 Adam + 2000 L-BFGS) or `full`
//! (30000 + 20000). Their run directories go under `MHD_PINN_OUTPUT` when
//! set, otherwise a temporary directory.

use std::convert::Infallible;
use std::path::{Path, PathBuf};

use mhd_pinn::autodiff::{fd_partial, FdStencil, Jet, MultiIndex};
use mhd_pinn::benchmarks::{BenchmarkCase, CaseId, Hartmann};
use mhd_pinn::diagnostics::ntk_error_prediction;
use mhd_pinn::geometry::{latin_hypercube, Domain};
use mhd_pinn::mhd::{exact_residual, manufactured_sources, network_fields, Field, FieldView, Formulation};
use mhd_pinn::network::{read_checkpoint, MultiscaleNetwork, NetworkSpec};
use mhd_pinn::parallel::ExecMode;
use mhd_pinn::runner::{benchmark_config, command_evaluate, command_train, parse_config, NtkStudy, Preset, RunArtifacts};
use mhd_pinn::training::{AdamState, Evaluation, LbfgsConfig, LbfgsState, StepOutcome};

fn verdict(id: &str, pass: bool, detail: &str) {
    println!("{id} {} | {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "{id} failed: {detail}");
}

#[derive(Clone, Copy, PartialEq, Debug)]
enum Scale {
    Desk,
    Full,
}

fn scale(id: &str) -> Option<Scale> {
    match std::env::var("ACCEPTANCE_SCALE").as_deref() {
        Ok("desk") => Some(Scale::Desk),
        Ok("full") => Some(Scale::Full),
        _ => {
            println!("{id} SKIP | long training run; set ACCEPTANCE_SCALE=desk or full");
            None
        }
    }
}

fn preset(s: Scale) -> Preset {
    match s {
        Scale::Desk => Preset::Desk,
        Scale::Full => Preset::Full,
    }
}

/// Keeps a temporary root alive for the duration of a test.
struct Root {
    path: PathBuf,
    _tmp: Option<tempfile::TempDir>,
}

fn root() -> Root {
    match std::env::var_os("MHD_PINN_OUTPUT") {
        Some(p) => Root {
            path: PathBuf::from(p),
            _tmp: None,
        },
        None => {
            let t = tempfile::tempdir().unwrap();
            Root {
                path: t.path().to_path_buf(),
                _tmp: Some(t),
            }
        }
    }
}

fn train(case: CaseId, s: Scale, root: &Path, extra: &[&str]) -> RunArtifacts {
    let mut o = vec![format!("output_dir={:?}", root.display().to_string())];
    o.extend(extra.iter().map(|e| e.to_string()));
    let cfg = benchmark_config(case, preset(s), &o).unwrap();
    let mut last = 0usize;
    command_train(&cfg, &mut |r| {
        if r.epoch >= last + 1000 {
            last = r.epoch;
            eprintln!("  [{}] epoch {} loss {:.3e}", case.name(), r.epoch, r.loss.total);
        }
    })
    .unwrap()
}

fn err(r: &RunArtifacts, c: &str) -> f64 {
    r.summary.errors.get(c).copied().unwrap_or(f64::INFINITY)
}

// ---------------------------------------------------------------- A1

fn rel(a: f64, n: f64, floor: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(floor)
}

const STEPS: [f64; 4] = [0.0, 2e-4, 1e-3, 2e-3];

#[test]
fn a1_autodiff_matches_finite_differences() {
    let mut worst = [0.0f64; 4];
    for (d, unsteady) in [(2, false), (3, true)] {
        let f = Formulation::A2;
        let input = d + usize::from(unsteady);
        let net = MultiscaleNetwork::new(NetworkSpec::multiscale(input, f.output_dim(d), 2, 0.6, 4, 1.0, 2, 10, 7)).unwrap();
        let params = net.init_params(13).into_values();
        let domain = Domain::new(vec![-1.0; d], vec![1.0; d], unsteady.then_some(1.0)).unwrap();
        let pts = latin_hypercube(100, &domain, 3).unwrap();
        let layout = Formulation::spatial_layout(d, unsteady, 3);
        let k = if d == 2 { 1 } else { 3 };
        for i in 0..pts.len() {
            let x = pts.point(i);
            let jets: Vec<Jet<f64>> = (0..input).map(|a| Jet::variable(layout, a, x[a])).collect();
            let heads = net.forward_generic(&params, &jets);
            let view = FieldView::new(&heads, f, d, unsteady).unwrap();
            let fwd = |p: &[f64]| net.forward(&params, p).unwrap();
            // physical-axis partial of head h by central differences
            let fd = |h: usize, alpha: [u8; 4]| -> f64 {
                if d == 2 && alpha[2] > 0 {
                    return 0.0;
                }
                let mut m: MultiIndex = [0; 4];
                m[..d].copy_from_slice(&alpha[..d]);
                let order: u8 = alpha.iter().sum();
                let step = STEPS[order as usize];
                // one Richardson step cancels the h^4 term of the stencil
                let coarse = fd_partial(&fwd, x, &m, step, FdStencil::Central4)[h];
                let fine = fd_partial(&fwd, x, &m, step / 2.0, FdStencil::Central4)[h];
                (16.0 * fine - coarse) / 15.0
            };
            let comp = |base: usize, c: usize, alpha: [u8; 4]| -> f64 {
                if k == 1 {
                    if c == 2 {
                        fd(base, alpha)
                    } else {
                        0.0
                    }
                } else {
                    fd(base + c, alpha)
                }
            };
            let e = |a: usize| {
                let mut v = [0u8; 4];
                v[a] = 1;
                v
            };
            let add = |a: [u8; 4], b: [u8; 4]| [a[0] + b[0], a[1] + b[1], a[2] + b[2], a[3] + b[3]];
            let (a2, a1, p) = (0, k, 2 * k);
            let curl = |base: usize, i: usize, alpha: [u8; 4]| {
                let (j, l) = ((i + 1) % 3, (i + 2) % 3);
                comp(base, l, add(alpha, e(j))) - comp(base, j, add(alpha, e(l)))
            };
            let lap = |g: &dyn Fn([u8; 4]) -> f64| (0..d).map(|a| g(add(e(a), e(a)))).sum::<f64>();
            let mut check = |order: usize, analytic: f64, numeric: f64| {
                worst[order] = worst[order].max(rel(analytic, numeric, 1e-3));
            };
            // order 1: gradient, divergence, curl
            let gp = view.gradient(Field::Pressure, 0).unwrap();
            let div = view.divergence(Field::A1).unwrap();
            let c1 = view.curl(Field::A1).unwrap();
            for a in 0..d {
                check(1, gp[a], fd(p, e(a)));
            }
            check(1, div, (0..d).map(|a| comp(a1, a, e(a))).sum());
            for i in 0..3 {
                check(1, c1[i], curl(a1, i, [0; 4]));
            }
            // order 2: Laplacian, curl curl
            let l1 = view.laplacian(Field::A1).unwrap();
            let cc = view.curl_curl(Field::A1).unwrap();
            for i in 0..3 {
                check(2, l1[i], lap(&|al| comp(a1, i, al)));
                let gd: f64 = (0..d).map(|a| comp(a1, a, add(e(i), e(a)))).sum();
                check(2, cc[i], gd - lap(&|al| comp(a1, i, al)));
            }
            // order 3: Laplacian of the curl
            let lc = view.laplacian(Field::Velocity).unwrap();
            for i in 0..3 {
                check(3, lc[i], lap(&|al| curl(a2, i, al)));
            }
        }
    }
    let pass = worst[1] < 1e-6 && worst[2] < 1e-6 && worst[3] < 1e-4;
    verdict(
        "A1",
        pass,
        &format!("max rel err order1 {:.1e}, order2 {:.1e}, order3 {:.1e} (2D and 3D, 100 points each)", worst[1], worst[2], worst[3]),
    );
}

// ---------------------------------------------------------------- A2

#[test]
fn a2_potential_networks_are_divergence_free() {
    let mut worst = 0.0f64;
    for (d, unsteady) in [(2, false), (2, true), (3, true)] {
        let f = Formulation::A2;
        let input = d + usize::from(unsteady);
        let net = MultiscaleNetwork::new(NetworkSpec::multiscale(input, f.output_dim(d), 3, 1.0, 8, 1.0, 2, 12, 21)).unwrap();
        let params = net.init_params(99).into_values();
        let domain = Domain::new(vec![-1.0; d], vec![1.0; d], unsteady.then_some(1.0)).unwrap();
        let pts = latin_hypercube(1000, &domain, 8).unwrap();
        let layout = Formulation::spatial_layout(d, unsteady, 2);
        for i in 0..pts.len() {
            let x = pts.point(i);
            let jets: Vec<Jet<f64>> = (0..input).map(|a| Jet::variable(layout, a, x[a])).collect();
            let heads = net.forward_generic(&params, &jets);
            let view = FieldView::new(&heads, f, d, unsteady).unwrap();
            worst = worst.max(view.divergence(Field::Velocity).unwrap().abs());
            worst = worst.max(view.divergence(Field::Magnetic).unwrap().abs());
        }
    }
    verdict("A2", worst < 1e-10, &format!("max |div u|, |div B| = {worst:.1e} over 3x1000 points"));
}

// ---------------------------------------------------------------- A3

#[test]
fn a3_manufactured_solutions() {
    let mut worst = 0.0f64;
    let mut at = String::new();
    for id in CaseId::ALL {
        let case = BenchmarkCase::standard(id);
        let pts = latin_hypercube(1000, &case.domain, 17).unwrap();
        for f in Formulation::ALL {
            for i in 0..pts.len() {
                let x = pts.point(i);
                let src = manufactured_sources(case.exact.as_ref(), x, &case.phys, f).unwrap();
                let r = exact_residual(case.exact.as_ref(), x, &case.phys, f, &src).unwrap().max_abs();
                if r > worst {
                    worst = r;
                    at = format!("{} {}", id.name(), f.name());
                }
            }
        }
    }
    verdict("A3", worst < 1e-8, &format!("max residual {worst:.1e} (worst {at}) over 4 cases x 3 formulations x 1000 points"));
}

// ---------------------------------------------------------------- A4

#[test]
fn a4_optimizers() {
    let rosen = |x: &[f64]| -> Result<Evaluation<()>, Infallible> {
        let (a, b) = (x[0], x[1]);
        Ok(Evaluation {
            value: (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2),
            grad: vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)],
            extra: (),
        })
    };
    let mut st = LbfgsState::new(LbfgsConfig {
        grad_tol: 1e-12,
        ..Default::default()
    });
    let mut f = rosen;
    let mut x = vec![-1.2, 1.0];
    let mut cur = f(&x).unwrap();
    while st.iterations < 200 {
        if st.step(&mut x, &mut cur, &mut f).unwrap().outcome != StepOutcome::Moved {
            break;
        }
    }
    let dist = ((x[0] - 1.0).powi(2) + (x[1] - 1.0).powi(2)).sqrt();

    // 100-d quadratic with curvatures in [1, 10]
    let c: Vec<f64> = (0..100).map(|i| 1.0 + 9.0 * i as f64 / 99.0).collect();
    let value = |x: &[f64]| 0.5 * x.iter().zip(&c).map(|(x, c)| c * x * x).sum::<f64>();
    let mut y = vec![1.0; 100];
    let f0 = value(&y);
    let mut adam = AdamState::new(100, 1e-2);
    for _ in 0..10_000 {
        let g: Vec<f64> = y.iter().zip(&c).map(|(x, c)| c * x).collect();
        adam.step(&mut y, &g).unwrap();
    }
    let f1 = value(&y);
    let ratio = if f1 == 0.0 { f64::INFINITY } else { f0 / f1 };
    verdict(
        "A4",
        dist < 1e-6 && st.iterations <= 200 && ratio >= 1e6,
        &format!(
            "L-BFGS Rosenbrock |x-x*| {dist:.1e} in {} iterations; Adam (lr 1e-2) quadratic {f0:.1e} -> {f1:.1e} (reduction {ratio:.1e}) in 1e4 steps",
            st.iterations
        ),
    );
}

// ---------------------------------------------------------------- A5

#[test]
fn a5_steady_benchmark() {
    let Some(s) = scale("A5") else { return };
    let root = root();
    let run = train(CaseId::Steady2d, s, &root.path, &[]);
    let (u1, p) = (err(&run, "u1"), err(&run, "p"));
    match s {
        Scale::Desk => verdict(
            "A5",
            run.summary.status.is_success() && u1 <= 5e-2,
            &format!("desk: eps_u1 {u1:.2e} (<= 5e-2), eps_p {p:.2e}; run {}", run.dir.display()),
        ),
        Scale::Full => {
            let base = train(CaseId::Steady2d, s, &root.path, &["architecture.kind=\"pinn_baseline\""]);
            let bp = err(&base, "p");
            verdict(
                "A5",
                u1 <= 1e-3 && p <= 5e-3 && p < bp,
                &format!("full: eps_u1 {u1:.2e} (<= 1e-3), eps_p {p:.2e} (<= 5e-3), baseline eps_p {bp:.2e}"),
            );
        }
    }
}

// ---------------------------------------------------------------- A6

#[test]
fn a6_hartmann() {
    let h = Hartmann {
        re: 1.0,
        rm: 1.0,
        s: 1.0,
        g: 0.1,
        p0: 0.0,
    };
    let walls = h.b1(1.0) == 0.0 && h.b1(-1.0) == 0.0;
    let Some(s) = scale("A6") else {
        assert!(walls, "b1(+-1) must vanish");
        return;
    };
    let root = root();
    let run = train(CaseId::Hartmann, s, &root.path, &[]);
    let ckpt = read_checkpoint(&run.dir.join("checkpoint.txt")).unwrap();
    let net = MultiscaleNetwork::new(ckpt.spec.clone()).unwrap();
    let f = Formulation::parse(&run.summary.formulation).unwrap();
    let mut profile = 0.0f64;
    for k in 0..=200 {
        let y = -1.0 + k as f64 / 100.0;
        let pred = network_fields(&net, &ckpt.params, &[2.0, y], f, false).unwrap();
        profile = profile.max((pred.u[0] - h.u1(y)).abs());
    }
    let u1 = err(&run, "u1");
    verdict(
        "A6",
        walls && profile <= 1e-2 && u1 <= 5e-3,
        &format!(
            "{s:?}: max |u1 - exact| at x=2 {profile:.2e} (<= 1e-2), eps_u1 {u1:.2e} (<= 5e-3), b1(+-1) = 0: {walls}; run {}",
            run.dir.display()
        ),
    );
}

// ---------------------------------------------------------------- A7

#[test]
fn a7_hidden_pressure() {
    let Some(s) = scale("A7") else { return };
    let root = root();
    let run = train(CaseId::Unsteady2d, s, &root.path, &["formulation=\"B\""]);
    let p = err(&run, "p");
    verdict(
        "A7",
        run.summary.status.is_success() && p <= 5e-2,
        &format!("{s:?}: temporal-mean eps_p {p:.2e} (<= 5e-2) without pressure data; run {}", run.dir.display()),
    );
}

// ---------------------------------------------------------------- A8

#[test]
fn a8_ntk_prediction() {
    let study = NtkStudy::default();
    let o = study.run(None, ExecMode::default()).unwrap();
    // t = 0 returns the initial error
    let net = MultiscaleNetwork::new(NetworkSpec::plain(1, 1, 1, study.width)).unwrap();
    let model = mhd_pinn::diagnostics::NetworkModel::new(&net, ExecMode::default()).unwrap();
    let (xs, ys) = study.inputs();
    let p0 = net.init_params(study.seed).into_values();
    let r = mhd_pinn::diagnostics::empirical_ntk(&model, std::slice::from_ref(&p0), &xs, ExecMode::default()).unwrap();
    let e0: Vec<f64> = mhd_pinn::diagnostics::ScalarModel::values(&model, &p0, &xs).iter().zip(&ys).map(|(f, y)| f - y).collect();
    let back = ntk_error_prediction(&r, &e0, 0.0);
    let exact = back == e0;
    let psd = o.min_relative_eigenvalue >= -1e-10;
    verdict(
        "A8",
        o.relative_l2 <= 0.1 && psd && exact,
        &format!(
            "width 1024, 16 points, 500 GD steps (lr {:.2e}): trajectory rel L2 {:.2e} (<= 0.1), worst step {:.2e}; min eig/max {:.1e}; t=0 returns e0 exactly: {exact}",
            o.lr, o.relative_l2, o.max_step_relative, o.min_relative_eigenvalue
        ),
    );
}

// ---------------------------------------------------------------- A9

#[test]
fn a9_boundary_robustness() {
    let Some(s) = scale("A9") else { return };
    let root = root();
    let presets: Vec<&str> = match s {
        Scale::Desk => vec!["standard", "middle_noisy"],
        Scale::Full => mhd_pinn::geometry::MaskPreset::ALL.iter().map(|m| m.name()).collect(),
    };
    let mut rows = Vec::new();
    for p in &presets {
        let run = train(CaseId::Steady2d, s, &root.path, &[&format!("boundary.mask=\"{p}\""), &format!("label=\"{p}\"")]);
        rows.push((p.to_string(), run.summary.status.is_success(), err(&run, "u1")));
    }
    let all_ok = rows.iter().all(|r| r.1);
    let std_u1 = rows[0].2;
    let lowest = rows.iter().all(|r| std_u1 <= r.2);
    let noisy = rows.iter().find(|r| r.0 == "middle_noisy").map_or(f64::INFINITY, |r| r.2);
    let table: Vec<String> = rows.iter().map(|(p, _, e)| format!("{p} {e:.2e}")).collect();
    verdict(
        "A9",
        all_ok && lowest && noisy <= 1e-2,
        &format!("{s:?}: eps_u1 per preset [{}]; standard lowest: {lowest}; noisy inlet <= 1e-2: {}", table.join(", "), noisy <= 1e-2),
    );
}

// ---------------------------------------------------------------- A10

#[test]
fn a10_determinism() {
    let tmp = tempfile::tempdir().unwrap();
    let o: Vec<String> = [
        "benchmark=unsteady2d",
        "architecture.subnets=2",
        "architecture.layers=2",
        "architecture.width=8",
        "sampling.interior=60",
        "sampling.boundary_per_face=8",
        "sampling.initial=12",
        "schedule.n_adam=15",
        "schedule.n_lbfgs=10",
        "evaluation.resolution=6",
        "boundary.mask=\"middle_noisy\"",
    ]
    .iter()
    .map(|s| s.to_string())
    .chain([format!("output_dir={:?}", tmp.path().display().to_string())])
    .collect();
    let cfg = parse_config("", &o).unwrap();
    let a = command_train(&cfg, &mut |_| {}).unwrap();
    let b = command_train(&cfg, &mut |_| {}).unwrap();
    let same = |f: &str, x: &Path, y: &Path| std::fs::read(x.join(f)).unwrap() == std::fs::read(y.join(f)).unwrap();
    let train_same = ["metrics.csv", "grid.csv", "checkpoint.txt"].iter().all(|f| same(f, &a.dir, &b.dir));
    let (ea, eb) = (command_evaluate(&a.dir).unwrap(), command_evaluate(&b.dir).unwrap());
    let eval_same = same("metrics.csv", &ea.dir, &eb.dir) && same("metrics.csv", &ea.dir, &a.dir);
    let mut seq = cfg.clone();
    seq.execution = ExecMode::Sequential;
    let c = command_train(&seq, &mut |_| {}).unwrap();
    let mode_same = same("metrics.csv", &a.dir, &c.dir);
    verdict(
        "A10",
        train_same && eval_same && mode_same,
        &format!("train re-run identical: {train_same}; evaluate identical: {eval_same}; sequential = parallel: {mode_same}"),
    );
}
