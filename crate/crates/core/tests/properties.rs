use freqalloc_core::allocation::{
    initial_assignment, run_to_convergence, InitialAssignment, Scheduler, SchedulerKind, SimState,
};
use freqalloc_core::dynamics::{lambda_from_alpha, predicted_variance, stability_margin};
use freqalloc_core::interference::{
    aggregate_interference, band_interference, worst_case_interference, ActivityState, Assignment,
    InterferenceCache,
};
use freqalloc_core::metrics::{capacity, LinkParams};
use freqalloc_core::oracle::brute_force_optimal;
use freqalloc_core::topology::{
    make_hexagonal_lattice, make_random_linear_array, make_rectangular_lattice,
    make_uniform_linear_array, Topology,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn topology(kind: u8, n: usize, seed: u64) -> Topology {
    match kind % 4 {
        0 => make_uniform_linear_array(n, 1.0).unwrap(),
        1 => make_random_linear_array(n, 1.0, 0.4, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap(),
        2 => make_rectangular_lattice(2, n.div_ceil(2), 1.0).unwrap(),
        _ => make_hexagonal_lattice(2, n.div_ceil(2), 1.0).unwrap(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn every_update_lowers_or_keeps_the_potential(
        kind in 0u8..4, n in 2usize..30, r in 2usize..5, cubic in any::<bool>(), seed in 0u64..1000, poisson in any::<bool>()
    ) {
        let eta = if cubic { 3.0 } else { 2.0 };
        let top = topology(kind, n, seed).with_path_loss(1.0, eta).unwrap();
        let n = top.len();
        let asg = initial_assignment(InitialAssignment::UniformRandom, n, r, seed).unwrap();
        let mut state = SimState::new(&top, asg, ActivityState::all_active(n), seed).unwrap();
        let kind = if poisson {
            SchedulerKind::PoissonClock { delta_t: 1.0 }
        } else {
            SchedulerKind::RandomPermutationRounds { delta_t: 1.0 }
        };
        let mut sched = Scheduler::new(kind).unwrap();
        let conv = run_to_convergence(&mut state, &mut sched, None).unwrap();
        for rec in &conv.trace {
            prop_assert!(rec.is_monotone());
            let delta = rec.aggregate_after - rec.aggregate_before;
            prop_assert!((delta - rec.predicted_delta).abs() <= 1e-9 * rec.aggregate_before.max(1.0));
        }
        // converged states are fixed points of the update rule
        for i in 0..n {
            prop_assert_eq!(state.best_band(i).unwrap(), state.assignment().band(i));
        }
        let worst = worst_case_interference(&top, state.activity());
        prop_assert!(conv.aggregate <= worst / r as f64 * (1.0 + 1e-9));
    }

    #[test]
    fn local_optimum_never_beats_the_exhaustive_optimum(n in 2usize..11, seed in 0u64..500, r in 2usize..4) {
        let top = make_uniform_linear_array(n, 1.0).unwrap();
        let act = ActivityState::all_active(n);
        let (_, best) = brute_force_optimal(&top, &act, r).unwrap();
        let asg = initial_assignment(InitialAssignment::UniformRandom, n, r, seed).unwrap();
        let mut state = SimState::new(&top, asg, act, seed).unwrap();
        let mut sched = Scheduler::new(SchedulerKind::PoissonClock { delta_t: 1.0 }).unwrap();
        let conv = run_to_convergence(&mut state, &mut sched, None).unwrap();
        prop_assert!(best <= conv.aggregate + 1e-12);
    }

    #[test]
    fn updating_cluster_capacity_never_drops(n in 3usize..25, seed in 0u64..500, pick in 0usize..25) {
        let top = make_uniform_linear_array(n, 1.0).unwrap();
        let asg = initial_assignment(InitialAssignment::UniformRandom, n, 2, seed).unwrap();
        let mut state = SimState::new(&top, asg, ActivityState::all_active(n), seed).unwrap();
        let link = LinkParams::default();
        let i = pick % n;
        let before = capacity(&link, state.cache().band(i, state.assignment().band(i)));
        state.apply_update(i).unwrap();
        let after = capacity(&link, state.cache().band(i, state.assignment().band(i)));
        prop_assert!(after >= before - 1e-12);
    }

    #[test]
    fn margin_identity(alpha in 0.0f64..1.0, rho in 0.5f64..6.0, n in 2usize..500, tau in 0.01f64..10.0) {
        let lambda = lambda_from_alpha(alpha, n, tau).unwrap();
        let p = predicted_variance(1.0, lambda, tau, n, rho).unwrap();
        let m = stability_margin(alpha, rho).unwrap();
        prop_assert!((p.margin - m).abs() <= 1e-12 * m.max(1.0));
        prop_assert_eq!(p.divergent, m >= 1.0);
    }
}

#[test]
fn predicted_variance_grows_with_lambda_and_diverges() {
    let (n, rho, tau) = (100, 3.0, 1.0);
    let limit = n as f64 * n as f64 * rho / (16.0 * tau);
    let mut last = -1.0;
    for k in 0..200 {
        let lambda = limit * k as f64 / 200.0;
        let v = predicted_variance(1.0, lambda, tau, n, rho).unwrap().sigma_ss_sq.unwrap();
        assert!(v > last);
        last = v;
    }
    let near = predicted_variance(1.0, limit * (1.0 - 1e-9), tau, n, rho).unwrap();
    assert!(near.sigma_ss_sq.unwrap() > 1e8);
    assert!(predicted_variance(1.0, limit, tau, n, rho).unwrap().divergent);
}

#[test]
fn incremental_cache_tracks_full_recompute() {
    let top = make_hexagonal_lattice(5, 6, 1.0).unwrap().with_path_loss(1.0, 3.0).unwrap();
    let n = top.len();
    let r = 3;
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut asg = Assignment::new((0..n).map(|_| rng.random_range(1..=r)).collect(), r).unwrap();
    let mut act = ActivityState::all_active(n);
    let mut cache = InterferenceCache::new(&top, &asg, &act).unwrap();
    for step in 0..5_000 {
        let i = rng.random_range(0..n);
        if rng.random_bool(0.3) {
            let on = !act.is_active(i);
            cache.set_active(&top, &asg, &mut act, i, on);
        } else {
            cache.switch_band(&top, &mut asg, &act, i, rng.random_range(1..=r));
        }
        if step % 250 == 0 {
            for j in 0..n {
                let scale: f64 = (0..n).filter(|&m| m != j).map(|m| top.gain(j, m)).sum();
                for k in 1..=r {
                    let full = band_interference(&top, &asg, &act, j, k);
                    assert!((cache.band(j, k) - full).abs() <= 1e-12 * scale);
                }
            }
            let full = aggregate_interference(&top, &asg, &act);
            assert!((cache.aggregate(&asg, &act) - full).abs() <= 1e-12 * full.max(1e-300));
        }
    }
}
