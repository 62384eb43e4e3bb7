use proptest::prelude::*;
use spinbus::lattice::binomial;
use spinbus::localization::{ipr, ipr_one_excitation};
use spinbus::Strategy as Tuning;
use spinbus::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn fidelities_are_probabilities(n in 2usize..7, j0 in 0.0f64..1.5, b0 in 0.0f64..10.0,
                                    b1 in -1.0f64..1.0, b2 in -1.0f64..1.0, t in 0.0f64..200.0) {
        let spec = SystemSpec::with_params(n, j0, b0, &[b1, b2]).unwrap();
        let f = average_fidelity(&spec, t).unwrap();
        prop_assert!(f.iter().all(|&v| (-1e-12..=1.0 + 1e-12).contains(&v)));
    }

    #[test]
    fn equal_fields_make_users_interchangeable(n in 2usize..7, j0 in 0.01f64..1.0, b0 in 0.0f64..5.0,
                                               b in -1.0f64..1.0, t in 0.0f64..100.0) {
        let spec = SystemSpec::with_params(n, j0, b0, &[b, b]).unwrap();
        let f = average_fidelity(&spec, t).unwrap();
        prop_assert!((f[(0, 0)] - f[(1, 1)]).abs() < 1e-10);
        prop_assert!((f[(0, 1)] - f[(1, 0)]).abs() < 1e-10);
    }

    #[test]
    fn ipr_lies_between_one_and_dimension(v in prop::collection::vec(-1.0f64..1.0, 1..40)) {
        prop_assume!(v.iter().any(|x| x.abs() > 1e-6));
        let r = ipr(v.iter().copied());
        prop_assert!(r >= 1.0 - 1e-9 && r <= v.len() as f64 + 1e-9);
    }

    #[test]
    fn sectors_partition_the_hilbert_space(n in 2usize..20, m in 1usize..4) {
        let layout = SiteLayout::new(n, m).unwrap();
        let l = layout.total_sites();
        let total: usize = (0..=l).map(|k| binomial(l, k)).sum();
        prop_assert_eq!(total, 1usize << l);
    }
}

#[test]
fn combined_strategy_dominates_its_parts() {
    let scan = ScanSettings {
        window: TimeWindow::new(1.0, 120.0).unwrap(),
        ..ScanSettings::default()
    };
    let users = vec![vec![-0.2, 0.1, 0.3], vec![-0.3, -0.1, 0.2]];
    let grid = |strategy, j: Vec<f64>, b0: Vec<f64>| StrategySpec {
        strategy,
        j_user_grid: j,
        b_edge_grid: b0,
        b_user_grids: users.clone(),
        scan,
    };
    let s1 = optimize_strategy(&grid(Tuning::S1, vec![0.1, 0.3], vec![0.0]), 5, 2).unwrap();
    let s2 = optimize_strategy(&grid(Tuning::S2, vec![1.0], vec![5.0, 10.0]), 5, 2).unwrap();
    let s3 = optimize_strategy(&grid(Tuning::S3, vec![0.1, 0.3, 1.0], vec![0.0, 5.0, 10.0]), 5, 2).unwrap();
    assert!(s3.f_t_max >= s1.f_t_max.max(s2.f_t_max));
}

#[test]
fn ensemble_spread_shrinks_with_size() {
    let spec = SystemSpec::with_params(5, 0.3, 0.0, &[0.2, -0.3]).unwrap();
    let scan = ScanSettings {
        window: TimeWindow::new(1.0, 60.0).unwrap(),
        ..ScanSettings::default()
    };
    let run = |n| {
        let d = DisorderSpec::clean(n, 8);
        let r = disorder_ensemble(&spec, &scan, &d, DisorderAxis::Delta, &[0.2]).unwrap();
        assert!((0.0..=1.0).contains(&r.mean[0]));
        r.std[0] / (n as f64).sqrt()
    };
    let (small, large) = (run(16), run(64));
    // standard error should roughly halve when the ensemble quadruples
    assert!(large < small && large > small / 4.0, "{small} -> {large}");
}

#[test]
fn strong_edge_field_localizes_lowest_states_at_chain_ends() {
    let spec = SystemSpec::with_params(12, 1.0, 25.0, &[0.15, -0.45]).unwrap();
    let l = spec.layout();
    let ends = [1u64 << l.first_chain(), 1u64 << l.last_chain()];
    let r = ipr_one_excitation(&spec).unwrap();
    for e in &r.eigenstates[..2] {
        assert!(e.supported_within(&ends), "{:?}", e.top_labels);
    }
}
