use super::*;
use crate::autodiff::{Jet, JetLayout, Var};
use crate::geometry::{latin_hypercube, sample_boundary, BoundaryMask, Domain, TargetFn};
use crate::mhd::{field_names, BoundaryKind, ExactFields, Formulation, PhysParams, SourceTerms};
use crate::network::{BatchLoss, NetworkSpec};

fn small_net(out: usize) -> MultiscaleNetwork {
    MultiscaleNetwork::new(NetworkSpec::plain(2, out, 1, 3)).unwrap()
}

fn box2() -> Domain {
    Domain::new(vec![0.0, 0.0], vec![1.0, 1.0], None).unwrap()
}

fn exact_flat(p: &[f64]) -> Vec<f64> {
    let (x, y) = (p[0], p[1]);
    ExactFields {
        u: vec![y.sin(), x.cos()],
        b: vec![x * y, 1.0 - y],
        p: x - y,
        a1: vec![0.0],
        a2: vec![0.0],
    }
    .to_flat()
}

fn problem_with(net: &MultiscaleNetwork, f: Formulation, interior: usize, per_face: usize) -> Problem {
    let dom = box2();
    let mut pb = Problem::new(f, 2, false, PhysParams::new(2.0, 1.0, 1.0, 1.0));
    let pts = latin_hypercube(interior, &dom, 7).unwrap();
    let src: Vec<SourceTerms> = (0..interior)
        .map(|i| SourceTerms {
            f: vec![0.3 * i as f64, -0.1],
            g: vec![0.05; if f == Formulation::B { 2 } else { 1 }],
        })
        .collect();
    pb.set_interior(net, &pts.points, src).unwrap();
    if per_face > 0 {
        let t = TargetFn {
            names: field_names(2),
            f: &exact_flat,
        };
        let b = sample_boundary(&dom, per_face, &BoundaryMask::standard(4), Some(&t), 3).unwrap();
        let kinds = vec![vec![BoundaryKind::VelocityDirichlet, BoundaryKind::MagneticTangential]; 4];
        pb.set_boundary(net, &b, &kinds).unwrap();
    }
    pb
}

#[test]
fn single_point_momentum_three_four() {
    let net = small_net(5);
    let params = vec![0.0; net.param_count()];
    let mut pb = Problem::new(Formulation::B, 2, false, PhysParams::new(1.0, 1.0, 1.0, 1.0));
    pb.set_interior(
        &net,
        &[0.4, 0.6],
        vec![SourceTerms {
            f: vec![-3.0, -4.0],
            g: vec![0.0, 0.0],
        }],
    )
    .unwrap();
    let (b, g) = assemble_loss(&net, &params, &pb, &LossWeights::default(), ExecMode::Sequential).unwrap();
    assert_eq!(b.equation, 25.0);
    assert_eq!(b.total, 25.0);
    assert_eq!(g.len(), params.len());
}

#[test]
fn zero_residual_gives_zero_loss() {
    let net = small_net(5);
    let params = vec![0.0; net.param_count()];
    let mut pb = Problem::new(Formulation::B, 2, false, PhysParams::new(1.0, 1.0, 1.0, 1.0));
    let pts = latin_hypercube(10, &box2(), 1).unwrap();
    pb.set_interior(&net, &pts.points, vec![SourceTerms::zero(Formulation::B, 2); 10]).unwrap();
    let (b, g) = assemble_loss(&net, &params, &pb, &LossWeights::default(), ExecMode::Sequential).unwrap();
    assert_eq!(b, LossBreakdown::default());
    assert!(g.iter().all(|v| *v == 0.0));
}

#[test]
fn boundary_weight_is_linear() {
    let net = small_net(5);
    let params = net.init_params(4).into_values();
    let pb = problem_with(&net, Formulation::B, 12, 3);
    let w1 = LossWeights::default();
    let w2 = LossWeights {
        boundary: 2.0 * w1.boundary,
        ..w1.clone()
    };
    let (a, _) = assemble_loss(&net, &params, &pb, &w1, ExecMode::Sequential).unwrap();
    let (b, _) = assemble_loss(&net, &params, &pb, &w2, ExecMode::Sequential).unwrap();
    assert_eq!(a.equation, b.equation);
    assert_eq!(a.boundary, b.boundary);
    let rel = (b.total - a.total - w1.boundary * a.boundary).abs() / b.total;
    assert!(rel < 1e-14, "{rel}");
    assert!(a.boundary > 0.0);
}

#[test]
fn total_recomposes_exactly() {
    let net = small_net(3);
    let params = net.init_params(9).into_values();
    let pb = problem_with(&net, Formulation::A2, 8, 2);
    let w = LossWeights::default();
    let (b, _) = assemble_loss(&net, &params, &pb, &w, ExecMode::Sequential).unwrap();
    let again = LossBreakdown::compose(&w, b.equation, b.initial, b.boundary, b.data);
    assert_eq!(b.total.to_bits(), again.total.to_bits());
}

#[test]
fn empty_active_batch_is_named() {
    let net = small_net(5);
    let params = vec![0.0; net.param_count()];
    let mut pb = Problem::new(Formulation::B, 2, false, PhysParams::new(1.0, 1.0, 1.0, 1.0));
    pb.set_interior(&net, &[], Vec::new()).unwrap();
    let err = assemble_loss(&net, &params, &pb, &LossWeights::default(), ExecMode::Sequential).unwrap_err();
    assert_eq!(err, TrainError::EmptyBatch("equation"));
}

#[test]
fn gradient_matches_parameter_finite_differences() {
    for f in Formulation::ALL {
        let net = small_net(f.output_dim(2));
        assert!(net.param_count() <= 50, "{}", net.param_count());
        let params = net.init_params(11).into_values();
        let pb = problem_with(&net, f, 6, 2);
        let w = LossWeights::default();
        let (_, g) = assemble_loss(&net, &params, &pb, &w, ExecMode::Sequential).unwrap();
        let h = 1e-6;
        for i in 0..params.len() {
            let mut p = params.clone();
            p[i] += h;
            let up = assemble_loss(&net, &p, &pb, &w, ExecMode::Sequential).unwrap().0.total;
            p[i] -= 2.0 * h;
            let dn = assemble_loss(&net, &p, &pb, &w, ExecMode::Sequential).unwrap().0.total;
            let fd = (up - dn) / (2.0 * h);
            let scale = fd.abs().max(g[i].abs()).max(1e-3);
            assert!((fd - g[i]).abs() / scale < 1e-5, "{f:?} param {i}: fd {fd} ad {}", g[i]);
        }
    }
}

#[test]
fn empty_schedule_keeps_parameters() {
    let net = small_net(5);
    let params = net.init_params(2).into_values();
    let pb = problem_with(&net, Formulation::B, 5, 1);
    let w = LossWeights::default();
    let obj = MhdObjective::new(&net, &pb, &w, ExecMode::Sequential).unwrap();
    let s = Schedule {
        n_adam: 0,
        n_lbfgs: 0,
        ..Default::default()
    };
    let out = train(&obj, params.clone(), &s, &mut |_| {}).unwrap();
    assert_eq!(out.params, params);
    assert!(out.log.records.is_empty());
    assert_eq!(out.status, TrainStatus::Completed);
}

#[test]
fn training_is_reproducible_and_lbfgs_monotone() {
    let net = small_net(5);
    let params = net.init_params(2).into_values();
    let pb = problem_with(&net, Formulation::B, 20, 4);
    let w = LossWeights::default();
    let s = Schedule {
        n_adam: 20,
        n_lbfgs: 20,
        ..Default::default()
    };
    let run = |mode| {
        let obj = MhdObjective::new(&net, &pb, &w, mode).unwrap();
        train(&obj, params.clone(), &s, &mut |_| {}).unwrap()
    };
    let a = run(ExecMode::Sequential);
    let b = run(ExecMode::Parallel);
    assert_eq!(a.params, b.params);
    let lb: Vec<f64> = a.log.records.iter().filter(|r| r.phase == Phase::Lbfgs).map(|r| r.loss.total).collect();
    assert!(!lb.is_empty());
    assert!(lb.windows(2).all(|w| w[1] <= w[0]));
    let epochs: Vec<usize> = a.log.records.iter().map(|r| r.epoch).collect();
    assert!(epochs.windows(2).all(|w| w[1] > w[0]));
    let mut csv = Vec::new();
    a.log.write_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert!(text.starts_with(LOG_HEADER));
    assert_eq!(text.lines().count(), a.log.records.len() + 1);
}

/// `u'' = -sin x` on `[0, pi]` with `u(0) = u(pi) = 0`.
struct Poisson {
    net: MultiscaleNetwork,
    interior: crate::network::PreparedInputs,
    ends: crate::network::PreparedInputs,
}

struct PoissonInterior<'a>(&'a [f64]);

impl BatchLoss for PoissonInterior<'_> {
    fn point_loss<'t>(&self, i: usize, out: &[Jet<Var<'t>>]) -> Result<Var<'t>, AdError> {
        let uxx = out[0].derivative(&[2, 0, 0, 0]).expect("second derivative");
        let r = uxx + self.0[i].sin();
        Ok(r * r)
    }
}

struct PoissonEnds;

impl BatchLoss for PoissonEnds {
    fn point_loss<'t>(&self, _: usize, out: &[Jet<Var<'t>>]) -> Result<Var<'t>, AdError> {
        let u = *out[0].primal();
        Ok(u * u)
    }
}

impl Objective for Poisson {
    fn evaluate(&self, params: &[f64]) -> Result<(LossBreakdown, Vec<f64>), TrainError> {
        let xs = self.interior.points();
        let n = xs.len() as f64;
        let seq = ExecMode::Sequential;
        let (sf, mut g) = self.net.loss_and_gradient(params, &self.interior, &PoissonInterior(xs), 1.0 / n, seq)?;
        let (sb, gb) = self.net.loss_and_gradient(params, &self.ends, &PoissonEnds, 100.0 / 2.0, seq)?;
        g.iter_mut().zip(&gb).for_each(|(a, b)| *a += b);
        let w = LossWeights::default();
        Ok((LossBreakdown::compose(&w, sf / n, 0.0, sb / 2.0, 0.0), g))
    }
}

#[test]
fn one_dimensional_poisson_converges() {
    let net = MultiscaleNetwork::new(NetworkSpec::plain(1, 1, 2, 12)).unwrap();
    let xs: Vec<f64> = (0..20).map(|i| std::f64::consts::PI * (i as f64 + 0.5) / 20.0).collect();
    let pb = Poisson {
        interior: net.prepare(JetLayout::total_order(1, 2), &xs),
        ends: net.prepare(JetLayout::total_order(1, 0), &[0.0, std::f64::consts::PI]),
        net,
    };
    let params = pb.net.init_params(5).into_values();
    let s = Schedule {
        n_adam: 500,
        n_lbfgs: 6000,
        lr: 1e-2,
        grad_tol: 1e-12,
        ..Default::default()
    };
    let out = train(&pb, params, &s, &mut |_| {}).unwrap();
    let fin = out.final_loss.unwrap().total;
    assert!(fin < 1e-6, "final loss {fin} status {:?} records {} fallbacks {}", out.status, out.log.records.len(), out.lbfgs_fallbacks);
}
