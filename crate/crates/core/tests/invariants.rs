//! Property tests over random utility tables and small generated networks.

use hetnet_core::baselines::{max_sinr_assoc, subgradient_solve, SubgradientConfig};
use hetnet_core::dcd::{dcd_solve, DcdOptions, UpdateOrder};
use hetnet_core::harness::{exhaustive_oracle, percentile};
use hetnet_core::joint::{iterate_assoc_power, JointOptions};
use hetnet_core::netmodel::{gen_topology, NetworkConfig, NetworkInstance, UtilityMatrix};
use hetnet_core::powerctl::NewtonOptions;
use proptest::prelude::*;

fn utility_table(max_users: usize, max_bs: usize) -> impl Strategy<Value = UtilityMatrix> {
    (1..=max_users, 1..=max_bs).prop_flat_map(|(k, l)| {
        prop::collection::vec(prop::collection::vec(-3.0f64..3.0, l), k).prop_map(|rows| UtilityMatrix::from_rows(&rows))
    })
}

fn order() -> impl Strategy<Value = UpdateOrder> {
    prop_oneof![
        Just(UpdateOrder::RoundRobin),
        any::<u64>().prop_map(|seed| UpdateOrder::RandomPermutation { seed }),
    ]
}

fn gain_instance() -> impl Strategy<Value = NetworkInstance> {
    (1usize..=6, 1usize..=4).prop_flat_map(|(k, l)| {
        (
            prop::collection::vec(prop::collection::vec(-12.0f64..-8.0, l), k),
            prop::collection::vec(-5.0f64..-2.0, l),
        )
            .prop_map(move |(g, p)| {
                let gains: Vec<Vec<f64>> = g.iter().map(|r| r.iter().map(|e| 10f64.powf(*e)).collect()).collect();
                let max_psd = p.iter().map(|e| 10f64.powf(*e)).collect();
                NetworkInstance::from_gains(&gains, max_psd, vec![1e-17; k], 1e7, 1.0).unwrap()
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn sinr_matches_direct_sum(inst in gain_instance(), i_frac in 0.0f64..1.0, j_frac in 0.0f64..1.0) {
        let i = ((inst.num_users as f64 * i_frac) as usize).min(inst.num_users - 1);
        let j = ((inst.num_bs as f64 * j_frac) as usize).min(inst.num_bs - 1);
        let p = inst.full_power();
        let mut interference = inst.noise_psd[i];
        for b in 0..inst.num_bs {
            if b != j {
                interference += inst.gain(i, b) * p[b];
            }
        }
        let direct = inst.gain(i, j) * p[j] / interference;
        prop_assert!((inst.sinr(i, j, &p) - direct).abs() <= 1e-12 * direct);
    }

    #[test]
    fn rate_report_utility_is_sum_of_logs(inst in gain_instance()) {
        let p = inst.full_power();
        let assoc = max_sinr_assoc(&inst, &p);
        let rep = inst.rate_report(&assoc, &p);
        let direct: f64 = rep.rates.iter().map(|r| (r / 1e6).ln()).sum();
        prop_assert!((rep.utility - direct).abs() <= 1e-9);
        prop_assert_eq!(rep.load.iter().sum::<usize>(), inst.num_users);
        let a = inst.utility_matrix(&p, false);
        prop_assert!(a.is_finite());
        prop_assert!((a.objective(&assoc) - rep.utility).abs() <= 1e-9 * rep.utility.abs().max(1.0));
    }

    #[test]
    fn dcd_dual_never_increases(a in utility_table(9, 4), ord in order()) {
        let res = dcd_solve(&a, &DcdOptions { update_order: ord, ..DcdOptions::default() }).unwrap();
        for w in res.trace.windows(2) {
            prop_assert!(w[1].dual_objective <= w[0].dual_objective + 1e-12);
        }
    }

    #[test]
    fn dual_bounds_every_recovered_primal(a in utility_table(9, 4), ord in order()) {
        let res = dcd_solve(&a, &DcdOptions { update_order: ord, ..DcdOptions::default() }).unwrap();
        for e in &res.trace {
            if let Some(p) = e.primal_utility {
                prop_assert!(e.dual_objective >= p - 1e-9);
            }
        }
        prop_assert!(res.dual.dual_objective >= res.utility(&a) - 1e-9);
    }

    #[test]
    fn oracle_dominates_and_gap_certifies(a in utility_table(7, 3)) {
        let (best, assoc) = exhaustive_oracle(&a).unwrap();
        prop_assert!((a.objective(&assoc) - best).abs() <= 1e-12);
        let res = dcd_solve(&a, &DcdOptions::default()).unwrap();
        let u = res.utility(&a);
        prop_assert!(best >= u - 1e-9);
        prop_assert!(u >= best - res.gap_bound() - 1e-9);
        let sub = subgradient_solve(&a, &SubgradientConfig { max_iters: 50, ..SubgradientConfig::default() }).unwrap();
        prop_assert!(best >= a.objective(&sub.association) - 1e-9);
    }

    #[test]
    fn percentiles_are_monotone_and_bounded(mut xs in prop::collection::vec(-1e3f64..1e3, 1..40), q1 in 0.0f64..1.0, q2 in 0.0f64..1.0) {
        xs.sort_by(f64::total_cmp);
        let (lo, hi) = if q1 <= q2 { (q1, q2) } else { (q2, q1) };
        let (a, b) = (percentile(&xs, lo).unwrap(), percentile(&xs, hi).unwrap());
        prop_assert!(a <= b + 1e-9);
        prop_assert!(a >= xs[0] && b <= xs[xs.len() - 1]);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    #[test]
    fn generation_is_deterministic_and_positive(seed in any::<u64>()) {
        let cfg = NetworkConfig { num_cells: 3, users_per_cell: 5, seed, ..NetworkConfig::default() };
        let a = gen_topology(&cfg).unwrap();
        let b = gen_topology(&cfg).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert!(a.gain.iter().all(|g| *g > 0.0 && g.is_finite()));
    }

    #[test]
    fn joint_rounds_never_lose_utility(seed in 0u64..1000) {
        let cfg = NetworkConfig { num_cells: 3, picos_per_cell: 1, users_per_cell: 5, wraparound: false, seed, ..NetworkConfig::default() };
        let inst = gen_topology(&cfg).unwrap();
        let res = iterate_assoc_power(&inst, &inst.full_power(), &JointOptions::default(), &DcdOptions::default(), &NewtonOptions::default()).unwrap();
        for w in res.trace.windows(2) {
            prop_assert!(w[1].utility >= w[0].utility - 1e-9);
        }
        prop_assert!(res.power.is_feasible(&inst));
    }
}
