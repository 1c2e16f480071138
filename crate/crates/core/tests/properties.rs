mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scopf_core::bounds::select_h;
use scopf_core::caseio::{parse_case_str, write_case};
use scopf_core::network::build_incidence;
use scopf_core::response::{bisection_iteration_bound, respond};
use scopf_core::{binary_search, screen, PtdfBundle, RunConfig};

use common::{angle_flows, max_overload, random_balanced, random_system, routable};

fn system_params() -> impl Strategy<Value = (u64, usize, usize)> {
    (any::<u64>(), 2usize..9, 2usize..6)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn incidence_structure((seed, n_bus, n_gen) in system_params()) {
        let sys = random_system(seed, n_bus, n_gen);
        let (a, b) = build_incidence(&sys);
        for row in a.row_iter() {
            prop_assert_eq!(row.sum(), 0.0);
        }
        for col in b.column_iter() {
            prop_assert_eq!(col.iter().filter(|&&x| x != 0.0).count(), 1);
            prop_assert_eq!(col.sum(), 1.0);
        }
    }

    #[test]
    fn write_parse_round_trip((seed, n_bus, n_gen) in system_params()) {
        let config = RunConfig::default();
        // susceptances of a parsed case are reciprocals of stored reactances
        let (text, sidecar) = write_case(&random_system(seed, n_bus, n_gen));
        let sys = parse_case_str(&text, &config, &sidecar).unwrap();
        let (text, sidecar) = write_case(&sys);
        let back = parse_case_str(&text, &config, &sidecar).unwrap();
        prop_assert_eq!(&back, &sys);
        for gen in &back.generators {
            prop_assert_eq!(gen.response_limit.to_bits(), (gen.gamma * gen.capacity).to_bits());
        }
    }

    #[test]
    fn per_unit_conversion_is_tight(mw in -1e5f64..1e5, base in 1.0f64..1e3) {
        let mut sys = random_system(1, 3, 2);
        sys.base_mva = base;
        let back = sys.to_mw(sys.to_pu(mw));
        prop_assert!((back - mw).abs() <= 1e-9 * mw.abs().max(1e-300));
    }

    #[test]
    fn cut_structure_identities((seed, n_bus, n_gen) in system_params()) {
        let sys = random_system(seed, n_bus, n_gen);
        let bundle = PtdfBundle::build(&sys).unwrap();
        prop_assert_eq!(&bundle.k3, &(-&bundle.k1));
        for l in &sys.lines {
            let sum = bundle.k2[l.id] + bundle.k4[l.id];
            let scale = l.capacity.max(bundle.k2[l.id].abs());
            prop_assert!((sum - 2.0 * l.capacity).abs() <= 4.0 * f64::EPSILON * scale);
        }
    }

    #[test]
    fn screening_matches_angle_lp((seed, n_bus, n_gen) in system_params()) {
        let sys = random_system(seed, n_bus, n_gen);
        let bundle = PtdfBundle::build(&sys).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..4 {
            let g_s = random_balanced(&sys, &mut rng);
            let table = screen(&bundle, &[(0, g_s.clone())], 1e-6).unwrap();
            let routed = angle_flows(&sys, &g_s);
            prop_assert!(routed.kvl_residual <= 1e-6);
            prop_assert!((table.alpha_max - max_overload(&sys, &routed.flows)).abs() <= 1e-4);
            prop_assert_eq!(table.is_empty(), routable(&sys, &g_s));
            for v in &table.entries {
                let over = routed.flows[v.line].abs() - sys.lines[v.line].capacity;
                prop_assert!((v.alpha_mw - over).abs() <= 1e-4);
            }
        }
    }

    #[test]
    fn screening_ignores_state_order((seed, n_bus, n_gen) in system_params()) {
        let sys = random_system(seed, n_bus, n_gen);
        let bundle = PtdfBundle::build(&sys).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let mut states: Vec<(usize, Vec<f64>)> =
            (0..6).map(|s| (s, random_balanced(&sys, &mut rng))).collect();
        let first = screen(&bundle, &states, 1e-6).unwrap();
        states.shuffle(&mut rng);
        prop_assert_eq!(screen(&bundle, &states, 1e-6).unwrap(), first);
    }

    #[test]
    fn response_grows_with_the_signal(
        (seed, n_bus, n_gen) in system_params(),
        a in 0.0f64..1.0,
        b in 0.0f64..1.0,
    ) {
        let sys = random_system(seed, n_bus, n_gen);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_balanced(&sys, &mut rng);
        let g: Vec<f64> = g.iter().zip(&sys.generators).map(|(x, gen)| x.min(gen.g_max)).collect();
        let (lo, hi) = (a.min(b), a.max(b));
        for s in 0..n_gen {
            let (low, e_low) = respond(&sys, &g, s, lo);
            let (high, e_high) = respond(&sys, &g, s, hi);
            prop_assert!(low.iter().zip(&high).all(|(x, y)| x <= y));
            prop_assert!(e_low <= e_high);
        }
    }

    #[test]
    fn bisection_meets_its_contract((seed, n_bus, n_gen) in system_params()) {
        let sys = random_system(seed, n_bus, n_gen);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g: Vec<f64> = random_balanced(&sys, &mut rng)
            .iter()
            .zip(&sys.generators)
            .map(|(x, gen)| x.min(gen.g_max))
            .collect();
        let eps = 1e-10;
        let bound = bisection_iteration_bound(&sys, eps);
        for s in 0..n_gen {
            let out = binary_search(&sys, &g, s, eps);
            prop_assert!(out.iterations <= bound);
            if out.converged {
                prop_assert!(out.imbalance_mw.abs() <= eps);
                prop_assert_eq!(out.g_s[s], 0.0);
            }
        }
    }

    #[test]
    fn restriction_sets_are_nested((seed, n_bus, n_gen) in system_params(), p in 0.0f64..100.0, q in 0.0f64..100.0) {
        let sys = random_system(seed, n_bus, n_gen);
        let (lo, hi) = (p.min(q), p.max(q));
        let small: BTreeSet<usize> = select_h(&sys, lo).unwrap();
        prop_assert!(small.is_subset(&select_h(&sys, hi).unwrap()));
    }
}

#[test]
fn random_dispatches_cover_both_classes() {
    // guards the screening property against vacuous data
    let mut feasible = 0;
    let mut overloaded = 0;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for seed in 0..40 {
        let sys = random_system(seed, rng.gen_range(3..9), 3);
        let bundle = PtdfBundle::build(&sys).unwrap();
        let g_s = random_balanced(&sys, &mut rng);
        if screen(&bundle, &[(0, g_s)], 1e-6).unwrap().is_empty() {
            feasible += 1;
        } else {
            overloaded += 1;
        }
    }
    assert!(
        feasible >= 5 && overloaded >= 5,
        "{feasible} feasible, {overloaded} overloaded"
    );
}
