mod common;

use common::{q, random_model, rng};
use mission_sched::ilp::{
    brute_force_oracle, check_feasible, solve_exact, solve_exact_observed, IlpModel, LinearConstraint, Relation,
    SolveStatus,
};
use mission_sched::{Budget, Rational};
use proptest::prelude::*;

fn best_completion(model: &IlpModel<Rational>, fixed: &[Option<bool>]) -> Option<Rational> {
    let free: Vec<usize> = (0..fixed.len()).filter(|&v| fixed[v].is_none()).collect();
    let mut best: Option<Rational> = None;
    for mask in 0u32..(1 << free.len()) {
        let mut x: Vec<bool> = fixed.iter().map(|f| f.unwrap_or(false)).collect();
        for (k, &v) in free.iter().enumerate() {
            x[v] = mask & (1 << k) != 0;
        }
        if check_feasible(model, &x).unwrap() {
            let v = model.evaluate(&x);
            if best.as_ref().is_none_or(|b| v > *b) {
                best = Some(v);
            }
        }
    }
    best
}

#[test]
fn exact_matches_oracle_on_random_models() {
    let mut r = rng(17);
    let mut feasible = 0;
    for k in 0..300 {
        let m = random_model(&mut r, 12);
        let o = brute_force_oracle(&m).unwrap();
        let e = solve_exact(&m, Budget::unlimited()).unwrap();
        assert_eq!(o.status == SolveStatus::Infeasible, e.status == SolveStatus::Infeasible, "model {k}");
        if e.status.has_assignment() {
            feasible += 1;
            assert_eq!(e.status, SolveStatus::Optimal);
            assert_eq!(e.value, o.value, "model {k}");
            assert!(check_feasible(&m, &e.assignment).unwrap());
            assert_eq!(m.evaluate(&e.assignment), e.value);
        }
    }
    eprintln!("{feasible} of 300 feasible");
    assert!(feasible > 150, "generator produced {feasible} feasible models");
}

#[test]
fn node_bounds_never_cut_off_better_completions() {
    let mut r = rng(5);
    for _ in 0..60 {
        let m = random_model(&mut r, 9);
        let mut nodes = Vec::new();
        solve_exact_observed(&m, Budget::unlimited(), &mut |n| nodes.push(n.clone())).unwrap();
        for n in nodes {
            if let Some(best) = best_completion(&m, &n.fixed) {
                assert!(n.bound >= best, "bound {} below reachable {}", n.bound, best);
            }
        }
    }
}

#[test]
fn incumbents_improve_with_node_budget() {
    let mut r = rng(8);
    for _ in 0..40 {
        let m = random_model(&mut r, 14);
        let mut last: Option<Rational> = None;
        for nodes in [1u64, 4, 16, 64, 256, 4096, u64::MAX] {
            let res = solve_exact(&m, Budget::nodes(nodes)).unwrap();
            if res.status.has_assignment() {
                assert!(check_feasible(&m, &res.assignment).unwrap());
                if let Some(prev) = &last {
                    assert!(res.value >= *prev);
                }
                last = Some(res.value);
            } else {
                assert!(last.is_none(), "incumbent lost with a larger budget");
            }
        }
    }
}

#[test]
fn float_scalars_agree_with_rationals() {
    let mut r = rng(21);
    for _ in 0..100 {
        let m = random_model(&mut r, 10);
        let f = IlpModel {
            num_vars: m.num_vars,
            objective: m.objective.iter().map(|c| *c.numer() as f64 / *c.denom() as f64).collect(),
            constraints: m
                .constraints
                .iter()
                .map(|c| {
                    LinearConstraint::new(
                        c.coeffs.iter().map(|a| *a.numer() as f64 / *a.denom() as f64).collect(),
                        c.relation,
                        *c.bound.numer() as f64 / *c.bound.denom() as f64,
                    )
                })
                .collect(),
            var_labels: None,
        };
        let exact = brute_force_oracle(&m).unwrap();
        let approx = solve_exact(&f, Budget::unlimited()).unwrap();
        assert_eq!(exact.status.has_assignment(), approx.status.has_assignment());
        if exact.status.has_assignment() {
            let ev = *exact.value.numer() as f64 / *exact.value.denom() as f64;
            assert!((ev - approx.value).abs() < 1e-6);
        }
    }
}

#[test]
fn all_equality_infeasible() {
    // x0 + x1 = 1 and x0 + x1 = 2 cannot both hold
    let m = IlpModel::new(vec![q(1), q(1)])
        .with_constraint(LinearConstraint::new(vec![q(1), q(1)], Relation::Eq, q(1)))
        .with_constraint(LinearConstraint::new(vec![q(1), q(1)], Relation::Eq, q(2)));
    assert_eq!(solve_exact(&m, Budget::unlimited()).unwrap().status, SolveStatus::Infeasible);
    assert_eq!(brute_force_oracle(&m).unwrap().status, SolveStatus::Infeasible);
}

#[test]
fn zero_budget_reports_no_incumbent() {
    let m = IlpModel::new(vec![q(3), q(2)])
        .with_constraint(LinearConstraint::new(vec![q(1), q(1)], Relation::Le, q(1)));
    let r = solve_exact(&m, Budget::nodes(0)).unwrap();
    assert_eq!(r.status, SolveStatus::BudgetExhaustedNoIncumbent);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exact_equals_oracle(seed in any::<u64>()) {
        let m = random_model(&mut rng(seed), 10);
        let o = brute_force_oracle(&m).unwrap();
        let e = solve_exact(&m, Budget::unlimited()).unwrap();
        prop_assert_eq!(o.status, e.status);
        prop_assert_eq!(o.value, e.value);
    }

    #[test]
    fn oracle_optimum_is_feasible_and_maximal(seed in any::<u64>()) {
        let m = random_model(&mut rng(seed), 8);
        let o = brute_force_oracle(&m).unwrap();
        if o.status.has_assignment() {
            prop_assert!(check_feasible(&m, &o.assignment).unwrap());
            let best = best_completion(&m, &vec![None; m.num_vars]).unwrap();
            prop_assert_eq!(best, o.value);
        } else {
            prop_assert!(best_completion(&m, &vec![None; m.num_vars]).is_none());
        }
    }
}
