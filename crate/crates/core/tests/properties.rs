use proptest::prelude::*;

use mhd_pinn::autodiff::Jet;
use mhd_pinn::benchmarks::{relative_l2, BenchmarkCase, CaseId};
use mhd_pinn::geometry::{latin_hypercube, Domain};
use mhd_pinn::mhd::{manufactured_sources, Field, FieldView, Formulation};
use mhd_pinn::network::{MultiscaleNetwork, NetworkSpec};
use mhd_pinn::parallel::ExecMode;
use mhd_pinn::training::{assemble_loss, LossWeights, Problem};

fn a2_net(d: usize, unsteady: bool) -> MultiscaleNetwork {
    let input = d + usize::from(unsteady);
    let out = Formulation::A2.output_dim(d);
    MultiscaleNetwork::new(NetworkSpec::multiscale(input, out, 2, 0.8, 4, 1.0, 2, 8, 5)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn a2_networks_are_solenoidal(seed in 0u64..10_000, three in any::<bool>(), x in prop::array::uniform4(-1.0f64..1.0)) {
        let (d, unsteady) = if three { (3, true) } else { (2, false) };
        let net = a2_net(d, unsteady);
        let params = net.init_params(seed).into_values();
        let n = d + usize::from(unsteady);
        let layout = Formulation::spatial_layout(d, unsteady, 2);
        let jets: Vec<Jet<f64>> = (0..n).map(|a| Jet::variable(layout, a, x[a])).collect();
        let heads = net.forward_generic(&params, &jets);
        let view = FieldView::new(&heads, Formulation::A2, d, unsteady).unwrap();
        prop_assert!(view.divergence(Field::Velocity).unwrap().abs() < 1e-10);
        prop_assert!(view.divergence(Field::Magnetic).unwrap().abs() < 1e-10);
    }

    #[test]
    fn latin_hypercube_fills_every_stratum(n in 1usize..60, seed in any::<u64>()) {
        let domain = Domain::new(vec![-0.5, 0.0], vec![1.0, 2.0], Some(3.0)).unwrap();
        let b = latin_hypercube(n, &domain, seed).unwrap();
        let (lo, hi) = ([-0.5, 0.0, 0.0], [1.0, 2.0, 3.0]);
        for a in 0..3 {
            let mut seen = vec![false; n];
            for i in 0..n {
                let s = ((b.point(i)[a] - lo[a]) / (hi[a] - lo[a]) * n as f64).floor() as usize;
                seen[s.min(n - 1)] = true;
            }
            prop_assert!(seen.iter().all(|&v| v));
        }
    }

    #[test]
    fn relative_error_is_scale_invariant(
        v in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 1..40),
        c in 0.01f64..100.0,
    ) {
        let (pred, exact): (Vec<f64>, Vec<f64>) = v.into_iter().unzip();
        prop_assume!(exact.iter().any(|e| *e != 0.0));
        let a = relative_l2(&pred, &exact);
        let sp: Vec<f64> = pred.iter().map(|x| x * c).collect();
        let se: Vec<f64> = exact.iter().map(|x| x * c).collect();
        let b = relative_l2(&sp, &se);
        prop_assert!(!a.absolute && !b.absolute);
        prop_assert!((a.value - b.value).abs() <= 1e-12 * a.value.max(1e-300) + 1e-15);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn loss_is_bit_identical_across_execution_modes(seed in 0u64..1000) {
        let case = BenchmarkCase::standard(CaseId::Unsteady2d);
        let f = Formulation::A1;
        let net = MultiscaleNetwork::new(NetworkSpec::multiscale(3, f.output_dim(2), 2, 0.5, 4, 1.0, 1, 6, seed)).unwrap();
        let pts = latin_hypercube(30, &case.domain, seed).unwrap();
        let src = (0..pts.len())
            .map(|i| manufactured_sources(case.exact.as_ref(), pts.point(i), &case.phys, f).unwrap())
            .collect();
        let mut problem = Problem::new(f, 2, true, case.phys.clone());
        problem.set_interior(&net, &pts.points, src).unwrap();
        let params = net.init_params(seed).into_values();
        let w = LossWeights::default();
        let (a, ga) = assemble_loss(&net, &params, &problem, &w, ExecMode::Sequential).unwrap();
        let (b, gb) = assemble_loss(&net, &params, &problem, &w, ExecMode::Parallel).unwrap();
        prop_assert_eq!(a.total.to_bits(), b.total.to_bits());
        prop_assert!(ga.iter().zip(&gb).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}
