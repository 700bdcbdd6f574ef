//! Sequential vs rayon evaluation of per-point PDE residuals.
//!
//! `cargo bench -p mhd-pinn --bench parallel`. With one core both paths
//! should be within noise of each other.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use mhd_pinn::benchmarks::{build_network, build_problem, BenchmarkCase, CaseId, RunSettings, SamplingCounts};
use mhd_pinn::geometry::latin_hypercube;
use mhd_pinn::mhd::{manufactured_sources, network_residual};
use mhd_pinn::parallel::{ordered_map, ExecMode};
use mhd_pinn::training::Term;

const MODES: [(&str, ExecMode); 2] = [("sequential", ExecMode::Sequential), ("parallel", ExecMode::Parallel)];

fn residuals(c: &mut Criterion) {
    let case = BenchmarkCase::standard(CaseId::Steady2d);
    let mut settings = RunSettings::for_case(&case);
    settings.counts = SamplingCounts::new(256, 16, 0);
    let net = build_network(&case, &settings).unwrap();
    let params = net.init_params(settings.seeds.init).into_values();
    let pts = latin_hypercube(256, &case.domain, 1).unwrap();
    let f = case.formulation;
    let sources: Vec<_> = (0..pts.len())
        .map(|i| manufactured_sources(case.exact.as_ref(), pts.point(i), &case.phys, f).unwrap())
        .collect();

    let mut g = c.benchmark_group("residual_256pts");
    g.sample_size(10);
    for (name, mode) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| {
                ordered_map(mode, pts.len(), |i| {
                    network_residual(&net, &params, pts.point(i), f, false, &case.phys, &sources[i]).unwrap().max_abs()
                })
            })
        });
    }
    g.finish();

    let problem = build_problem(&case, &settings, &net).unwrap();
    let mut g = c.benchmark_group("equation_loss_gradient_256pts");
    g.sample_size(10);
    for (name, mode) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| black_box(problem.term_loss(&net, &params, Term::Equation, 1.0, mode).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(benches, residuals);
criterion_main!(benches);
