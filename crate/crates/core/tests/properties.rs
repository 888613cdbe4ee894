use proptest::prelude::*;

use rmmdp::exact::{plain_mdp_optimal_value, uniform_random_value, HashedPolicy};
use rmmdp::explore::{compute_qtilde, explore_with, pair_index, ExploreOptions, ParamSpec};
use rmmdp::harness::{read_rows, write_rows};
use rmmdp::recovery::{exact_stats, pair_residuals, PairBound};
use rmmdp::{
    assign_signs, belief_update, compute_pair_bounds, derive_reward_stats, exact_moments, optimal_value_exact,
    plan_discretized, plan_exact_small, random_instance, recover_model, trajectory_l1_distance,
    value_of_policy_exact, EnvInstance, Error, InstanceSpec, PairBounds, RmMdpModel, SweepRow,
};

fn small_model() -> impl Strategy<Value = RmMdpModel> {
    (1usize..=3, 1usize..=2, 1usize..=3, 0u64..10_000).prop_map(|(states, actions, horizon, seed)| {
        random_instance(InstanceSpec { states, actions, horizon, delta_min: 0.2 }, seed).unwrap()
    })
}

fn tiny_model() -> impl Strategy<Value = RmMdpModel> {
    (1usize..=2, 1usize..=2, 1usize..=2, 0u64..10_000).prop_map(|(states, actions, horizon, seed)| {
        random_instance(InstanceSpec { states, actions, horizon, delta_min: 0.2 }, seed).unwrap()
    })
}

fn exact_params(m: &RmMdpModel) -> rmmdp::explore::ConfidenceParams {
    let mut p = ParamSpec { k_max: Some(100_000_000), ..ParamSpec::new(0.1, 1e-4, 0.1) }
        .resolve(m.states, m.actions, m.horizon)
        .unwrap();
    p.iota1 = 1.0;
    p.iota2 = 1.0;
    p
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn context_swap_preserves_values(m in small_model(), seed in 0u64..1000) {
        let w = m.swap_contexts();
        let (v, _) = optimal_value_exact(&m).unwrap();
        let (vw, _) = optimal_value_exact(&w).unwrap();
        prop_assert!((v - vw).abs() < 1e-12);
        let pi = HashedPolicy { seed, actions: m.actions };
        prop_assert!((value_of_policy_exact(&m, &pi).unwrap() - value_of_policy_exact(&w, &pi).unwrap()).abs() < 1e-12);
        let (a, b) = (exact_moments(&m), exact_moments(&w));
        for (x, y) in a.mu.data.iter().zip(&b.mu.data) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn optimum_dominates_random_policies(m in small_model(), seed in 0u64..1000) {
        let (v, _) = optimal_value_exact(&m).unwrap();
        let pi = HashedPolicy { seed, actions: m.actions };
        prop_assert!(value_of_policy_exact(&m, &pi).unwrap() <= v + 1e-12);
        prop_assert!(uniform_random_value(&m) <= v + 1e-12);
    }

    #[test]
    fn l1_distance_is_a_metric_and_bounds_value_gap(
        a in tiny_model(),
        s1 in 0u64..10_000,
        s2 in 0u64..10_000,
        seed in 0u64..1000,
    ) {
        let spec = InstanceSpec { states: a.states, actions: a.actions, horizon: a.horizon, delta_min: 0.2 };
        let b = random_instance(spec, s1).unwrap();
        let c = random_instance(spec, s2).unwrap();
        let pi = HashedPolicy { seed, actions: a.actions };
        let ab = trajectory_l1_distance(&a, &b, &pi).unwrap();
        let ba = trajectory_l1_distance(&b, &a, &pi).unwrap();
        let bc = trajectory_l1_distance(&b, &c, &pi).unwrap();
        let ac = trajectory_l1_distance(&a, &c, &pi).unwrap();
        prop_assert!((ab - ba).abs() < 1e-12);
        prop_assert!(trajectory_l1_distance(&a, &a, &pi).unwrap().abs() < 1e-12);
        prop_assert!(ac <= ab + bc + 1e-12);
        let dv = (value_of_policy_exact(&a, &pi).unwrap() - value_of_policy_exact(&b, &pi).unwrap()).abs();
        prop_assert!(dv <= a.horizon as f64 * ab + 1e-12);
    }

    #[test]
    fn exact_moments_recover_rank_one_factor(m in small_model()) {
        let stats = exact_stats(&m, 100_000_000);
        let rec = recover_model(&stats, &exact_params(&m)).unwrap();
        let truth = derive_reward_stats(&m);
        for (pm, d) in rec.p_minus().iter().zip(&truth.delta_x) {
            prop_assert!((pm.abs() - d).abs() <= 1e-3);
        }
    }

    #[test]
    fn optimistic_values_shrink_with_more_data(m in small_model(), k in 1u64..5000, factor in 2u64..10) {
        let params = ParamSpec::new(0.1, 0.01, 0.1).resolve(m.states, m.actions, m.horizon).unwrap();
        let few = exact_stats(&m, k);
        let mut many = few.clone();
        for c in many.n_x.iter_mut().chain(&mut many.n_pair).chain(&mut many.t_counts).chain(&mut many.nu_counts) {
            *c *= factor;
        }
        many.k *= factor;
        let (qa, qb) = (compute_qtilde(&few, &params), compute_qtilde(&many, &params));
        for (a, b) in qa.root_values().iter().zip(qb.root_values()) {
            prop_assert!(b <= &(a + 1e-12));
        }
    }

    #[test]
    fn running_moments_match_observer(m in small_model(), seed in 0u64..1000) {
        let params = ParamSpec { k_max: Some(300), ..ParamSpec::new(0.01, 0.01, 0.1) }
            .resolve(m.states, m.actions, m.horizon)
            .unwrap();
        let sa = m.num_pairs();
        let mut sum = vec![0.0; sa * (sa + 1) / 2];
        let mut count = vec![0u64; sum.len()];
        let mut env = EnvInstance::new(m.clone(), seed);
        let run = explore_with(&mut env, &params, ExploreOptions::default(), |rec| {
            if let Some(((xi, xj), product)) = rec.collected {
                sum[pair_index(xi, xj)] += product as f64;
                count[pair_index(xi, xj)] += 1;
            }
        })
        .unwrap();
        for i in 0..sum.len() {
            prop_assert_eq!(run.stats.n_pair[i], count[i]);
            if count[i] > 0 {
                prop_assert!((run.stats.mu_hat[i] - sum[i] / count[i] as f64).abs() < 1e-9);
            }
        }
        for i in 0..sa {
            for j in 0..sa {
                prop_assert!(run.stats.pair_n(i, j) <= run.stats.n_x[i].min(run.stats.n_x[j]));
            }
        }
    }

    #[test]
    fn belief_updates_stay_in_unit_interval(m in small_model(), x_seed in 0usize..100, r in 0u8..=1) {
        let x = x_seed % m.num_pairs();
        for i in 0..=100 {
            let b = i as f64 / 100.0;
            let post = belief_update(&m, b, x, r);
            prop_assert!((0.0..=1.0).contains(&post));
            if b == 0.0 || b == 1.0 {
                prop_assert_eq!(post, b);
            }
        }
    }

    #[test]
    fn recovered_pairs_respect_their_bounds(m in small_model(), n in 200u64..20_000) {
        let params = ParamSpec { k_max: Some(100_000_000), ..ParamSpec::new(0.1, 0.01, 0.1) }
            .resolve(m.states, m.actions, m.horizon)
            .unwrap();
        let stats = exact_stats(&m, n);
        let bounds = compute_pair_bounds(&stats, &params);
        let Ok(rec) = recover_model(&stats, &params) else { return Ok(()) };
        let pm = rec.p_minus();
        for r in pair_residuals(&bounds, &rec) {
            let pb = bounds.pairs.iter().find(|p| p.xi == r.xi && p.xj == r.xj).unwrap();
            if r.sign_known && !r.exempt {
                prop_assert!(r.residual <= r.half_width + 1e-6, "{r:?}");
            }
            prop_assert!((pm[r.xi] * pm[r.xj]).abs() <= pb.center().abs() + pb.half_width + 1e-6);
        }
    }

    #[test]
    fn swapped_contexts_flip_whole_components(m in small_model()) {
        let params = exact_params(&m);
        let a = recover_model(&exact_stats(&m, 100_000_000), &params).unwrap();
        let b = recover_model(&exact_stats(&m.swap_contexts(), 100_000_000), &params).unwrap();
        prop_assert_eq!(&a.model, &b.model);
        let truth = derive_reward_stats(&m);
        let pm = a.p_minus();
        let comp = &a.provenance.component;
        for x in 0..m.num_pairs() {
            for y in 0..m.num_pairs() {
                let informative = truth.delta_x[x] > 1e-2 && truth.delta_x[y] > 1e-2;
                if comp[x] == comp[y] && informative {
                    let rel_true = truth.p_minus[x].signum() * truth.p_minus[y].signum();
                    prop_assert_eq!(pm[x].signum() * pm[y].signum(), rel_true);
                }
            }
        }
    }

    #[test]
    fn planners_are_ordered(m in small_model(), grid in 2usize..64) {
        let (_, tree) = plan_exact_small(&m).unwrap();
        let plan = plan_discretized(&m, grid).unwrap();
        prop_assert!(plan.value <= tree + 1e-9);
        prop_assert!(uniform_random_value(&m) <= tree + 1e-9);
        let (v_star, _) = optimal_value_exact(&m).unwrap();
        prop_assert!((tree - v_star).abs() < 1e-9);
    }

    #[test]
    fn plain_mdp_planner_matches_value_iteration(m in small_model()) {
        let mut plain = m.clone();
        plain.p2 = plain.p1.clone();
        let vi = plain_mdp_optimal_value(&plain, &plain.p1);
        prop_assert!((plan_exact_small(&plain).unwrap().1 - vi).abs() < 1e-9);
        prop_assert!((plan_discretized(&plain, 4).unwrap().value - vi).abs() < 1e-9);
    }

    #[test]
    fn sweep_rows_round_trip(
        rows in prop::collection::vec(
            (0usize..100, 1usize..5, 1usize..5, 1usize..5, 0.01f64..1.0, prop::option::of(1e-6f64..1.0),
             prop::option::of(0u64..1_000_000), prop::option::of(-10.0f64..10.0), prop::option::of(-1.0f64..1.0),
             0u64..100_000),
            0..12,
        )
    ) {
        let rows: Vec<SweepRow> = rows
            .into_iter()
            .enumerate()
            .map(|(i, (run_id, s, a, h, eps, eps_pe, k, lp, gap, wall_ms))| SweepRow {
                run_id,
                s,
                a,
                h,
                eps,
                eps_pe,
                k,
                term_reason: ["converged", "k_max_reached", "recovery_failed", "error: bad, \"quoted\""][i % 4].into(),
                lp_objective: lp,
                gap,
                gap_ci: gap.map(|g| g.abs() / 10.0),
                wall_ms,
            })
            .collect();
        let mut first = Vec::new();
        write_rows(&mut first, &rows).unwrap();
        let parsed = read_rows(first.as_slice()).unwrap();
        prop_assert_eq!(&parsed, &rows);
        let mut second = Vec::new();
        write_rows(&mut second, &parsed).unwrap();
        prop_assert_eq!(first, second);
    }
}

fn brute_force_sat(n: usize, constraints: &[(usize, usize, i8)]) -> bool {
    (0..1u32 << n).any(|mask| {
        let sign = |v: usize| if mask >> v & 1 == 1 { -1i8 } else { 1 };
        constraints.iter().all(|&(i, j, s)| sign(i) * sign(j) == s)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn sign_assignment_matches_brute_force(
        n in 1usize..=12,
        raw in prop::collection::vec((0usize..12, 0usize..12, prop::bool::ANY, prop::bool::ANY), 0..24),
    ) {
        let mut pairs = Vec::new();
        let mut constraints = Vec::new();
        for (i, j, positive, known) in raw {
            let (i, j) = ((i % n).min(j % n), (i % n).max(j % n));
            let s: i8 = if positive { 1 } else { -1 };
            if known {
                pairs.push(PairBound::new(i, j, 1, f64::from(s) * 0.6, f64::from(s) * 0.1, 0.25));
                constraints.push((i, j, s));
            } else {
                pairs.push(PairBound::new(i, j, 1, 0.3, -0.2, 0.25));
            }
        }
        let bounds = PairBounds { pairs, p_plus: vec![0.5; n], n_x: vec![1; n], b_x: vec![1.0; n] };
        let sat = brute_force_sat(n, &constraints);
        match assign_signs(&bounds) {
            Ok(a) => {
                prop_assert!(sat);
                for &(i, j, s) in &constraints {
                    prop_assert_eq!(a.signs[i] * a.signs[j], s);
                }
                for x in 0..n {
                    prop_assert!(a.component[x] <= x);
                    prop_assert_eq!(a.signs[a.component[x]], 1);
                }
            }
            Err(Error::Unsatisfiable { .. }) => prop_assert!(!sat),
            Err(e) => prop_assert!(false, "unexpected error {}", e),
        }
    }
}
