use ctmdp_core::classify::{partition_states, Classification, DEFAULT_TOL};
use ctmdp_core::corpus::{model_rng, random_ct_policy, random_dt_policy, random_model};
use ctmdp_core::format::{model_to_string, parse_model};
use ctmdp_core::lift::{evaluate_ct_stationary, evaluate_dt_stationary, lift_policy};
use ctmdp_core::model::{aggregate_under_policy, safe_div, CtmdpModel, StationaryPolicy};
use ctmdp_core::plan::{build_occupation_lp, extract_policy, solve_simplex, SolveStatus};
use ctmdp_core::reduce::{build_discounted_chain, build_jump_chain};
use ctmdp_core::sim::{estimate_occupancy, simulate_stationary, SimConfig};
use ctmdp_core::verify::{check_discounted_balance, check_occupancy_equality, check_undiscounted_balance, evaluate_dt_exact};
use proptest::prelude::*;

fn model() -> impl Strategy<Value = (CtmdpModel, u64)> {
    any::<u64>().prop_map(|seed| (random_model(&mut model_rng(seed, 0)), seed))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn safe_div_contract(a in 0.0f64..1e6, b in 0.0f64..1e6, bump in 0.0f64..1e3) {
        prop_assert!(safe_div(a, b) <= safe_div(a + bump, b));
        prop_assert!(safe_div(a, b + bump) <= safe_div(a, b));
        let q = safe_div(a, b);
        if b > 0.0 {
            prop_assert!((q * b - a).abs() <= 1e-12 * a.max(1.0));
        } else if a > 0.0 {
            prop_assert_eq!(q, f64::INFINITY);
        } else {
            prop_assert_eq!(q, 0.0);
        }
    }

    #[test]
    fn canonical_text_round_trips((m, _) in model()) {
        let text = model_to_string(&m);
        let back = parse_model(&text).unwrap();
        prop_assert_eq!(&back, &m);
        prop_assert_eq!(model_to_string(&back), text);
    }

    #[test]
    fn aggregated_rows_are_stochastic_or_empty((m, seed) in model()) {
        let cls = Classification::compute(&m).unwrap();
        let phi = random_ct_policy(&mut model_rng(seed, 1), &cls, m.n_actions());
        let agg = aggregate_under_policy(&m, &phi);
        for x in 0..m.n_states() {
            let s: f64 = agg.jump[x].iter().sum();
            if agg.total_rate[x] > 0.0 {
                prop_assert!((s - 1.0).abs() <= 1e-12);
            } else {
                prop_assert_eq!(s, 0.0);
            }
        }
    }

    #[test]
    fn partition_is_a_disjoint_cover((m, _) in model()) {
        let p = partition_states(&m);
        for x in 0..m.n_states() {
            let n = [p.in_s1(x), p.in_s2(x), p.in_s3(x)].iter().filter(|&&b| b).count();
            prop_assert_eq!(n, 1);
            if p.in_s1_hat(x) {
                prop_assert!(p.in_s1(x));
            }
        }
        let total = p.s1().len() + p.s2().len() + p.s3().len();
        prop_assert_eq!(total, m.n_states());
    }

    #[test]
    fn zeta_agrees_with_bellman((m, _) in model()) {
        let cls = Classification::compute(&m).unwrap();
        let ns = m.n_states();
        prop_assert!(cls.w.levels.len() <= ns.max(1));
        prop_assert!(cls.value.monotone && cls.value.converged);
        for x in 0..ns {
            prop_assert_eq!(cls.in_zeta(x), cls.w.contains(x));
            if cls.w.contains(x) {
                prop_assert!(cls.value.values[x] > 0.0);
            } else {
                prop_assert!(cls.value.values[x] <= DEFAULT_TOL * ns as f64);
            }
        }
    }

    #[test]
    fn psi_star_keeps_zeta_complement_closed_and_free((m, _) in model()) {
        let cls = Classification::compute(&m).unwrap();
        let psi = StationaryPolicy::deterministic(&cls.psi_star, m.n_actions());
        let agg = aggregate_under_policy(&m, &psi);
        for x in (0..m.n_states()).filter(|&x| !cls.in_zeta(x)) {
            let into_zeta: f64 = (0..m.n_states()).filter(|&y| cls.in_zeta(y)).map(|y| agg.jump[x][y]).sum();
            prop_assert_eq!(into_zeta, 0.0);
            prop_assert_eq!(m.aggregate_cost(x, cls.psi_star[x]), 0.0);
        }
        if let Some(f) = cls.f_star.iter().position(|f| f.is_some()) {
            prop_assert_eq!(cls.psi_star[f], cls.f_star[f].unwrap());
        }
    }

    #[test]
    fn jump_chain_rows_and_reduced_costs((m, _) in model()) {
        let d = build_jump_chain(&m);
        let chains: Vec<_> = [1.0, 0.1, 0.01, 0.001].iter().map(|&a| build_discounted_chain(&m, a).unwrap()).collect();
        for x in 0..m.n_states() {
            for a in 0..m.n_actions() {
                let q = m.total_rate(x, a);
                let s: f64 = d.row(x, a).iter().sum::<f64>() + d.cemetery_mass(x, a);
                prop_assert!((s - 1.0).abs() <= 1e-15 * m.n_states() as f64);
                for i in 0..m.n_costs() {
                    let c = d.reduced_cost(i, x, a);
                    if q > 0.0 {
                        prop_assert!((c * q - m.cost(i, x, a)).abs() <= 1e-12 * m.cost(i, x, a).max(1.0));
                    } else {
                        prop_assert!(c == 0.0 || c == f64::INFINITY);
                    }
                }
                if q > 0.0 {
                    for y in 0..m.n_states() {
                        let gaps: Vec<f64> = chains.iter().map(|c| (c.p(x, a, y) - d.p(x, a, y)).abs()).collect();
                        prop_assert!(gaps.windows(2).all(|w| w[1] <= w[0]));
                    }
                }
            }
        }
    }

    #[test]
    fn occupation_lp_certificates((m, _) in model()) {
        let cls = Classification::compute(&m).unwrap();
        let d = build_jump_chain(&m);
        let lp = build_occupation_lp(&d, &cls, m.initial(), m.bounds()).unwrap();
        let sol = solve_simplex(&lp, m.n_states(), m.n_actions(), m.bounds(), true).unwrap();
        if sol.status == SolveStatus::Optimal {
            prop_assert!(sol.max_flow_residual <= 1e-9);
            let x: Vec<f64> = lp.vars.iter().map(|&(s, a)| sol.mu[s][a]).collect();
            prop_assert!((lp.program.objective_at(&x) - sol.objective).abs() <= 1e-12);
            prop_assert!(sol.reduced_costs.iter().all(|&r| r >= -1e-10));
            let sigma = extract_policy(&sol, &cls, &d);
            for s in 0..m.n_states() {
                let mass: f64 = sol.mu[s].iter().sum();
                if mass > 0.0 {
                    for a in 0..m.n_actions() {
                        prop_assert!((mass * sigma.prob(s, a) - sol.mu[s][a]).abs() <= 1e-12);
                    }
                }
            }
            // The extracted policy attains the LP value on the jump chain.
            let j = evaluate_dt_exact(&d, &sigma).unwrap();
            let v: f64 = m.initial().iter().zip(&j[0]).map(|(g, v)| if *g == 0.0 { 0.0 } else { g * v }).sum();
            prop_assert!((v - sol.objective).abs() <= 1e-7 * sol.objective.max(1.0), "{} vs {}", v, sol.objective);
        }
    }

    #[test]
    fn lift_round_trip_and_scale_invariance((m, seed) in model()) {
        let cls = Classification::compute(&m).unwrap();
        let d = build_jump_chain(&m);
        let sigma = random_dt_policy(&mut model_rng(seed, 2), &cls, &d);
        let pi = lift_policy(&sigma, &m, &cls).unwrap();
        let dt = evaluate_dt_stationary(&d, &sigma, m.initial(), m.bounds());
        let ct = evaluate_ct_stationary(&m, &pi);
        prop_assert!(dt.monotone && ct.monotone);
        for (a, b) in dt.values.iter().flatten().zip(ct.values.iter().flatten()) {
            if a != b {
                prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(b.abs()), "{} vs {}", a, b);
            }
        }
        let scaled = StationaryPolicy::from_weights(
            sigma.rows().iter().enumerate().map(|(x, r)| r.iter().map(|p| p * (x as f64 + 0.5) * 7.0).collect()).collect(),
        ).unwrap();
        let pi2 = lift_policy(&scaled, &m, &cls).unwrap();
        for x in 0..m.n_states() {
            for a in 0..m.n_actions() {
                prop_assert!((pi.prob(x, a) - pi2.prob(x, a)).abs() <= 1e-14);
            }
        }
    }

    #[test]
    fn exact_identities((m, seed) in model()) {
        let cls = Classification::compute(&m).unwrap();
        let phi = random_ct_policy(&mut model_rng(seed, 3), &cls, m.n_actions());
        for alpha in [1.0, 0.1] {
            let r = check_discounted_balance(&m, &phi, alpha).unwrap();
            prop_assert!(r.passed(), "{:?}", r);
        }
        for alpha in [None, Some(0.5)] {
            let r = check_occupancy_equality(&m, &phi, 10, alpha).unwrap();
            prop_assert!(r.passed(), "{:?}", r);
        }
        let r = check_undiscounted_balance(&m, &phi).unwrap();
        prop_assert!(r.passed(), "{:?}", r);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn occupancy_mass_bound_on_batches((m, seed) in model()) {
        let cls = Classification::compute(&m).unwrap();
        let phi = random_ct_policy(&mut model_rng(seed, 4), &cls, m.n_actions());
        let cfg = SimConfig { t_max: 20.0, ..SimConfig::new(500, seed) };
        let batch = simulate_stationary(&m, &phi, cfg).unwrap();
        for alpha in [None, Some(0.5)] {
            prop_assert!(estimate_occupancy(&batch, 10, alpha).mass_bound_holds());
        }
    }
}

/// Every grid point is a stationary policy, so the LP optimum can only be
/// lower, and a feasible grid point makes the LP feasible.
#[test]
fn lp_optimum_bounds_the_policy_grid_from_below() {
    use ctmdp_core::corpus::generate;
    use ctmdp_core::pipeline::solve;
    use ctmdp_core::verify::{grid_search, GRID_POINTS};

    let mut finite = 0;
    for seed in 0..20 {
        for m in generate(seed, 100).iter().filter(|m| m.n_states() <= 3 && m.n_actions() <= 2) {
            let out = solve(m).unwrap();
            let grid = grid_search(m, GRID_POINTS).unwrap();
            if let Some(best) = grid.best {
                assert_eq!(out.status(), SolveStatus::Optimal);
                assert!(out.value() <= best + 1e-9, "{} > {}", out.value(), best);
                finite += 1;
            }
        }
    }
    assert!(finite > 0);
}
