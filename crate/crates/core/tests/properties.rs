use std::collections::BTreeMap;

use nsrl_core::autodiff::{Real, Tape};
use nsrl_core::ddt::{ActionLevels, Ddt};
use nsrl_core::lnn::{parse_template, Alpha, Expr, Formula, Gate, GateKind};
use nsrl_core::planner::{emit_pddl, parse_pddl, solve, Atoms, PlanningProblem, StripsAction};
use nsrl_core::sim::{toy_price_path, toy_rollout, PriceScenario, ToyConfig};
use nsrl_core::training::rbc_act;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn atoms_of(mask: u8, n: usize) -> Atoms {
    (0..n).filter(|i| mask >> i & 1 == 1).map(|i| format!("q{i}")).collect()
}

prop_compose! {
    fn strips_problem()(n in 1usize..=6, specs in prop::collection::vec(any::<(u8, u8, u8, u8)>(), 1..=5),
                        init in any::<u8>(), gp in any::<u8>(), gn in any::<u8>()) -> PlanningProblem {
        let full = ((1u16 << n) - 1) as u8;
        let actions = specs
            .iter()
            .enumerate()
            .map(|(k, &(p, q, a, d))| {
                let (p, a) = (p & full, a & full);
                StripsAction::new(&format!("act{k}"), atoms_of(p, n), atoms_of(q & full & !p, n),
                                  atoms_of(a, n), atoms_of(d & full & !a, n)).unwrap()
            })
            .collect();
        let gp = gp & full;
        PlanningProblem {
            domain: "prop".into(),
            atoms: atoms_of(full, n),
            actions,
            init: atoms_of(init & full, n),
            goal_pos: atoms_of(gp, n),
            goal_neg: atoms_of(gn & full & !gp, n),
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn rule_outputs_one_of_three_setpoints(p in -1.0f64..5.0, f in -1.0f64..5.0) {
        let a = rbc_act(p, f);
        prop_assert!([15.0, 20.0, 30.0].contains(&a));
        prop_assert_eq!(a == 30.0, p > 1.5);
        prop_assert_eq!(a, rbc_act(p, f));
    }

    #[test]
    fn soft_action_is_a_convex_combination(seed in any::<u64>(), depth in 1usize..=3,
                                           x in prop::collection::vec(-10.0f64..10.0, 4)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let attrs = (0..4).map(|i| format!("a{i}")).collect();
        let t = Ddt::random(depth, attrs, ActionLevels::setpoints(), (-5.0, 5.0), 2.0, &mut rng);
        let d = t.action_distribution(&x).unwrap();
        prop_assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let a = t.soft_action(&x).unwrap();
        prop_assert!((15.0 - 1e-9..=30.0 + 1e-9).contains(&a));
        let back = Ddt::from_json(&t.to_json()).unwrap();
        prop_assert_eq!(back.soft_action(&x).unwrap(), a);
    }

    #[test]
    fn pddl_round_trips_and_plans_replay(p in strips_problem()) {
        let (d, q) = emit_pddl(&p);
        let back = parse_pddl(&d, &q).unwrap();
        prop_assert_eq!(&back, &p);
        if let Some(plan) = solve(&p).unwrap() {
            prop_assert!(p.is_valid_plan(&plan));
        }
    }

    #[test]
    fn annotated_formulas_parse_back(w in prop::collection::vec(0.0f64..=1.0, 2), theta in 0.0f64..2.0,
                                     beta in 1.0f64..50.0, and in any::<bool>()) {
        let kind = if and { GateKind::And } else { GateKind::Or };
        let f = Formula::new(
            Expr::Gate(Gate {
                kind,
                weights: w,
                theta,
                sharpness: beta,
                children: vec![Expr::Pred("a".into()), Expr::Not(Box::new(Expr::Pred("b".into())))],
            }),
            Alpha::default(),
        );
        let back = parse_template(&f.to_annotated()).unwrap();
        prop_assert_eq!(back, f);
    }

    #[test]
    fn relaxed_toy_rollouts_stay_in_range(u in prop::collection::vec(0.0f64..=1.0, 10), spike in any::<bool>()) {
        let cfg = ToyConfig::default();
        let scenario = if spike { PriceScenario::Spike } else { PriceScenario::Uniform };
        let prices = toy_price_path(&cfg, scenario);
        let t = toy_rollout(&cfg, &prices, &u).unwrap();
        prop_assert!(t.costs.iter().all(|&c| c >= 0.0));
        // each step moves T by between -cool_rate and +drift
        for w in t.temps.windows(2) {
            prop_assert!(w[1] - w[0] >= -cfg.cool_rate - 1e-12 && w[1] - w[0] <= cfg.drift + 1e-12);
        }
        prop_assert!((t.total - t.costs.iter().sum::<f64>()).abs() < 1e-9);
    }

    #[test]
    fn tape_gradient_of_product_chain(xs in prop::collection::vec(0.5f64..2.0, 1..6)) {
        let tape = Tape::new();
        let vars = tape.vars(&xs);
        let prod = vars[1..].iter().fold(vars[0], |acc, &v| acc * v);
        let y = prod.ln();
        let g = tape.backward(y).wrt_all(&vars);
        // d ln(prod x) / dx_i = 1 / x_i
        for (gi, xi) in g.iter().zip(&xs) {
            prop_assert!((gi - 1.0 / xi).abs() < 1e-12);
        }
        prop_assert_eq!(y.value(), prod.value().ln());
    }
}

#[test]
fn crisp_evaluation_of_parsed_rule() {
    let f = parse_template("Implies(And(Hot(x), PowerCheap(x)), TurnACOn(x))").unwrap();
    assert_eq!(f.predicates(), ["Hot", "PowerCheap", "TurnACOn"]);
    let mut b = BTreeMap::new();
    for (hot, cheap, on) in [(true, true, true), (true, true, false), (false, true, false)] {
        b.insert("Hot".to_string(), hot);
        b.insert("PowerCheap".to_string(), cheap);
        b.insert("TurnACOn".to_string(), on);
        assert_eq!(f.evaluate_crisp(&b).unwrap(), !(hot && cheap) || on);
    }
}
