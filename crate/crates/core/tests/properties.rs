use proptest::prelude::*;

use thermoset::config::{AnalysisDefaults, BranchConfig, SystemConfig};
use thermoset::cylinders::Refinement;
use thermoset::exec::{log_sum_exp, Exec};
use thermoset::maps::{differentiate, make_system, parse_expr, Interval, MarkovSystem};
use thermoset::pressure::{bowen_root, Method, PressureModel};
use thermoset::roots::solve_bracketed;
use thermoset::symbolic::{repair_complete_invariance, SubshiftSpec, Word};

fn moran(a1: f64, a2: f64) -> MarkovSystem {
    let cfg = SystemConfig {
        name: Some("moran".into()),
        interval: Interval::new(0.0, 1.0),
        branches: vec![
            BranchConfig::Affine { a: a1, b: 0.0, domain: None, interval: None },
            BranchConfig::Affine { a: a2, b: 1.0 - a2, domain: None, interval: None },
        ],
        forbidden: Vec::new(),
        component: 0,
        defaults: AnalysisDefaults { theta_samples: 200, ..AnalysisDefaults::default() },
    };
    make_system(&cfg).unwrap()
}

fn word(p: u32, max_len: usize) -> impl Strategy<Value = Word> {
    prop::collection::vec(1..=p, 1..=max_len).prop_map(Word::new)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn word_display_round_trips(w in word(9, 12)) {
        prop_assert_eq!(Word::parse(&w.to_string()).unwrap(), w);
    }

    #[test]
    fn primitive_root_generates_word(w in word(3, 4), k in 1usize..4) {
        let rep: Vec<u32> = w.symbols().iter().copied().cycle().take(w.len() * k).collect();
        let root = Word::new(rep.clone()).primitive_root();
        prop_assert_eq!(rep.len() % root.len(), 0);
        let rebuilt: Vec<u32> = root.symbols().iter().copied().cycle().take(rep.len()).collect();
        prop_assert_eq!(rebuilt, rep);
    }

    #[test]
    fn derivative_matches_finite_difference(
        a in -3.0f64..3.0, b in -3.0f64..3.0, c in 0.1f64..2.0, x in 0.2f64..2.0,
    ) {
        let src = format!("{a}*x^3 + {b}*exp(-x/{c}) + x^(1/2) - log(x)");
        let e = parse_expr(&src).unwrap();
        let d = differentiate(&e).eval(x).unwrap();
        let h = 1e-6;
        let fd = (e.eval(x + h).unwrap() - e.eval(x - h).unwrap()) / (2.0 * h);
        prop_assert!((d - fd).abs() <= 1e-6 * (1.0 + d.abs()), "{} vs {}", d, fd);
    }

    #[test]
    fn log_sum_exp_matches_direct_sum(v in prop::collection::vec(-30.0f64..30.0, 1..20)) {
        let direct = v.iter().map(|x| x.exp()).sum::<f64>().ln();
        prop_assert!((log_sum_exp(&v) - direct).abs() <= 1e-12 * direct.abs().max(1.0));
    }

    #[test]
    fn bracketed_root_of_monotone_cubic(r in -0.9f64..0.9, s in 0.1f64..5.0) {
        let root = solve_bracketed(|x| Ok(((x - r).powi(3) + s * (x - r), 3.0 * (x - r).powi(2) + s)), -1.0, 1.0, None, 1e-14)
            .unwrap();
        prop_assert!((root.x - r).abs() < 1e-10);
    }

    #[test]
    fn moran_root_solves_similarity_equation(a1 in 0.05f64..0.45, a2 in 0.05f64..0.45) {
        let s = moran(a1, a2);
        for m in [Method::Cylinder, Method::Operator] {
            let t0 = bowen_root(&s, 4, 1e-10, m).unwrap().t0;
            prop_assert!((a1.powf(t0) + a2.powf(t0) - 1.0).abs() < 1e-7, "{m}: t0 = {t0}");
        }
    }

    #[test]
    fn cylinders_nest_and_stay_disjoint(a1 in 0.05f64..0.45, a2 in 0.05f64..0.45) {
        let s = moran(a1, a2);
        let r = Refinement::build(&s, 5).unwrap();
        for n in 2..=5 {
            let level = r.level(n);
            for w in level.windows(2) {
                prop_assert!(w[0].right <= w[1].left);
            }
            for c in level {
                let parent = r.find(&c.word.prefix(n - 1)).unwrap();
                prop_assert!(parent.left <= c.left && c.right <= parent.right);
            }
        }
    }

    #[test]
    fn pressure_sandwich_and_monotone_in_t(a1 in 0.05f64..0.45, a2 in 0.05f64..0.45, t in 0.0f64..1.5) {
        let s = moran(a1, a2);
        for m in Method::ALL {
            let model = PressureModel::new(&s, 5, m).unwrap();
            let e = model.estimate(t).unwrap();
            let later = model.estimate(t + 0.1).unwrap();
            prop_assert!(e.lower <= e.upper);
            prop_assert!(later.upper <= e.upper + 1e-12);
        }
    }

    #[test]
    fn policies_agree_bit_for_bit(a1 in 0.05f64..0.45, a2 in 0.05f64..0.45) {
        let par = moran(a1, a2).with_exec(Exec::Parallel);
        let seq = moran(a1, a2).with_exec(Exec::Sequential);
        let p = PressureModel::new(&par, 6, Method::Operator).unwrap().estimate(0.5).unwrap();
        let q = PressureModel::new(&seq, 6, Method::Operator).unwrap().estimate(0.5).unwrap();
        prop_assert_eq!(p.upper.to_bits(), q.upper.to_bits());
        let rp = Refinement::build(&par, 6).unwrap();
        let rq = Refinement::build(&seq, 6).unwrap();
        prop_assert_eq!(rp.deepest(), rq.deepest());
    }

    #[test]
    fn enumerated_words_avoid_q_and_match_counts(q in prop::collection::vec(word(3, 3), 0..4), n in 1usize..7) {
        let Ok(spec) = SubshiftSpec::new(3, q) else { return Ok(()) };
        let graph = spec.follower_graph().unwrap();
        let words = graph.enumerate_words(n, Exec::Sequential);
        prop_assert_eq!(words.len() as u128, graph.count_words(n));
        for w in &words {
            prop_assert!(spec.avoids(w.symbols()));
        }
    }

    #[test]
    fn repair_is_idempotent_and_keeps_nonempty_graph(q in prop::collection::vec(word(2, 3), 0..4)) {
        let Ok(spec) = SubshiftSpec::new(2, q) else { return Ok(()) };
        if let Ok(fixed) = repair_complete_invariance(&spec) {
            prop_assert_eq!(repair_complete_invariance(&fixed).unwrap(), fixed.clone());
            prop_assert!(!fixed.follower_graph().unwrap().nodes().is_empty());
        }
    }
}
