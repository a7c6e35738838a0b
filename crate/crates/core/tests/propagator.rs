use std::ops::ControlFlow;

use bfq_core::ansatz::{init_guess, orthonormality_error, total_norm, InitStrategy};
use bfq_core::grid::GridSpec;
use bfq_core::linalg::eigh_real;
use bfq_core::model::*;
use bfq_core::observables::position_variance;
use bfq_core::propagator::*;

fn system(n_b: usize, n_f: usize, g: (f64, f64), trap: TrapSpec, grid: GridSpec, conf: (usize, usize, usize)) -> CheckedSystem {
    validate_system(&SystemSpec {
        bosons: SpeciesSpec::bosons(n_b, conf.2),
        fermions: SpeciesSpec::fermions(n_f, conf.1),
        interactions: InteractionSpec::new(g.0, g.1),
        trap,
        grid,
        schmidt_rank: conf.0,
    })
    .unwrap()
}

#[test]
fn harmonic_ground_state_energy_and_width() {
    let sys = system(1, 1, (0.0, 0.0), TrapSpec::new(0.1, 0.0), GridSpec::symmetric(201, 30.0), (1, 1, 1));
    let guess = init_guess(&sys, InitStrategy::default()).unwrap();
    let r = relax(&sys, &guess, &RelaxOptions::default()).unwrap();
    assert!((r.energies.total - 0.1).abs() < 1e-6, "{}", r.energies.total);
    for s in Species::BOTH {
        assert!((r.energies.one_body[s.index()] - 0.05).abs() < 1e-6);
        let v = position_variance(&sys, &r.state, s).unwrap();
        assert!((v - 5.0).abs() < 1e-4, "{s:?}: {v}");
    }
}

#[test]
fn free_fermions_fill_the_lowest_levels() {
    let sys = system(1, 2, (0.0, 0.0), TrapSpec::new(0.1, 3.0), GridSpec::wells(81, 5), (1, 3, 2));
    let guess = init_guess(&sys, InitStrategy::default().with_seed(3)).unwrap();
    let r = relax(&sys, &guess, &RelaxOptions::default()).unwrap();
    let (ef, _) = eigh_real(&sys.one_body(Species::Fermion).hamiltonian());
    let (eb, _) = eigh_real(&sys.one_body(Species::Boson).hamiltonian());
    let exact = ef[0] + ef[1] + eb[0];
    assert!((r.energies.total - exact).abs() < 1e-8, "{} vs {exact}", r.energies.total);
}

#[test]
fn relaxation_history_is_monotone() {
    let sys = system(3, 2, (0.5, 0.3), TrapSpec::new(0.1, 3.0), GridSpec::wells(61, 5), (3, 3, 2));
    let guess = init_guess(&sys, InitStrategy::default().with_seed(5)).unwrap();
    let r = relax(&sys, &guess, &RelaxOptions::default()).unwrap();
    assert!(r.history.len() >= 2);
    for w in r.history.windows(2) {
        assert!(w[1].1 <= w[0].1 + 1e-12, "{:?}", w);
    }
    assert_eq!(r.state.schmidt.len(), 3);
    assert!((total_norm(&r.state).unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn output_grid_includes_end_time() {
    assert_eq!(output_times(0.0, 1.2, 0.5), vec![0.5, 1.0, 1.2]);
    assert_eq!(output_times(0.5, 1.5, 0.5), vec![1.0, 1.5]);
    assert!(output_times(1.0, 1.0, 0.5).is_empty());
}

#[test]
fn quench_conserves_norm_orthonormality_and_energy() {
    let sys = system(3, 2, (0.5, 0.3), TrapSpec::new(0.1, 3.0), GridSpec::wells(61, 5), (3, 3, 2));
    let guess = init_guess(&sys, InitStrategy::default().with_seed(1)).unwrap();
    let ground = relax(&sys, &guess, &RelaxOptions::default()).unwrap().state;
    let post = validate_system(&quench(sys.spec(), 0.03).unwrap()).unwrap();
    let mut energies = Vec::new();
    let mut worst = (0.0f64, 0.0f64);
    let out = propagate(&post, &ground, 10.0, &PropagationOptions::default(), None, |obs| {
        energies.push(obs.energies.total);
        worst.0 = worst.0.max((total_norm(obs.state)? - 1.0).abs());
        worst.1 = worst.1.max(orthonormality_error(obs.state));
        Ok(ControlFlow::Continue(()))
    })
    .unwrap();
    assert!(!out.interrupted);
    assert_eq!(energies.len(), 20);
    assert!(worst.0 < 1e-10 && worst.1 < 1e-10, "{worst:?}");
    let drift = energies.iter().map(|e| (e - energies[0]).abs()).fold(0.0, f64::max) / energies[0].abs();
    assert!(drift < 1e-6, "{drift}");
}

#[test]
fn observer_can_stop_and_resume_identically() {
    let sys = system(2, 1, (0.2, 0.2), TrapSpec::new(0.1, 3.0), GridSpec::wells(41, 3), (2, 2, 2));
    let ground = init_guess(&sys, InitStrategy::default().with_seed(2)).unwrap();
    let post = validate_system(&quench(sys.spec(), 0.02).unwrap()).unwrap();
    let opts = PropagationOptions::default();
    let full = propagate(&post, &ground, 2.0, &opts, None, |_| Ok(ControlFlow::Continue(()))).unwrap();
    let half = propagate(&post, &ground, 2.0, &opts, None, |obs| {
        Ok(if obs.state.time >= 1.0 { ControlFlow::Break(()) } else { ControlFlow::Continue(()) })
    })
    .unwrap();
    assert!(half.interrupted);
    let rest = propagate(&post, &half.state, 2.0, &opts, Some(half.meta), |_| Ok(ControlFlow::Continue(()))).unwrap();
    assert_eq!(rest.state, full.state);
}
