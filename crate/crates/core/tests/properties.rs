use fairalloc_core::analysis::{pareto_filter, sweep_alpha, ParetoPoint};
use fairalloc_core::fairness::parse_alpha_list;
use fairalloc_core::inner::{kkt_certificate, solve_inner};
use fairalloc_core::model::{price, surplus, utility_value};
use fairalloc_core::oracle::{brute_force_inner, OracleConfig};
use fairalloc_core::outer::{self, default_l_max, grid_search};
use fairalloc_core::scenario_gen::{generate, RandomSpec};
use fairalloc_core::{CostModel, FairnessParam, OuterConfig, QuadraticUtility, SolverConfig, SurplusProfile};
use proptest::prelude::*;

fn utility() -> impl Strategy<Value = QuadraticUtility> {
    (0.0..5.0f64, 0.0..20.0f64).prop_map(|(q, b)| QuadraticUtility::new(q, b).unwrap())
}

proptest! {
    #[test]
    fn utility_is_concave(u in utility(), x1 in 0.0..10.0f64, x2 in 0.0..10.0f64, t in 0.0..=1.0f64) {
        let mid = utility_value(&u, t * x1 + (1.0 - t) * x2).unwrap();
        let chord = t * utility_value(&u, x1).unwrap() + (1.0 - t) * utility_value(&u, x2).unwrap();
        prop_assert!(mid >= chord - 1e-12 * (1.0 + chord.abs()));
    }

    #[test]
    fn surplus_factored_form(u in utility(), x in 0.0..10.0f64, p in 0.0..10.0f64) {
        let direct = surplus(&u, x, p).unwrap();
        let factored = x * (-0.5 * u.q * x + u.b - p);
        prop_assert!((direct - factored).abs() <= 1e-12 * (1.0 + direct.abs()));
    }

    #[test]
    fn price_is_nondecreasing(c2 in 0.0..5.0f64, c1 in 0.0..5.0f64, l in 0.0..10.0f64, dl in 0.0..10.0f64) {
        let c = CostModel::quadratic(c2, c1).unwrap();
        prop_assert!(price(&c, l + dl).unwrap() >= price(&c, l).unwrap());
    }

    #[test]
    fn pareto_filter_is_an_antichain(profiles in prop::collection::vec(prop::collection::vec(0.0..3.0f64, 2), 1..12)) {
        let points: Vec<ParetoPoint> = profiles
            .iter()
            .map(|s| ParetoPoint {
                alpha: FairnessParam::Alpha(0.0),
                s: SurplusProfile(s.clone()),
                x: vec![0.0; 2],
                l: 0.0,
                total_surplus: s.iter().sum(),
                min_surplus: s[0].min(s[1]),
                pof: None,
                poe: None,
            })
            .collect();
        let kept = pareto_filter(&points);
        prop_assert!(!kept.is_empty());
        for a in &kept {
            for b in &kept {
                let dominates = b.s.0.iter().zip(&a.s.0).all(|(bi, ai)| *bi >= ai - 1e-9)
                    && b.s.0.iter().zip(&a.s.0).any(|(bi, ai)| *bi > ai + 1e-9);
                prop_assert!(!dominates);
            }
        }
    }
}

#[test]
fn kkt_certificates_on_random_scenarios() {
    let solver = SolverConfig::default();
    for k in 0..100u64 {
        let sc = generate(&RandomSpec::pofpoe(300 + k, 2 + (k % 9) as usize));
        let l = default_l_max(&sc).unwrap() * (0.1 + 0.8 * (k as f64 / 100.0));
        for a in [0.0, 0.5, 1.0, 2.0] {
            let f = FairnessParam::Alpha(a);
            let sol = solve_inner(&sc, f, l, &solver).unwrap();
            if !sol.feasible {
                continue;
            }
            let r = kkt_certificate(&sc, f, l, &sol.x).unwrap();
            assert!(r <= solver.kkt_tolerance, "seed {} alpha {a} l {l}: residual {r:e}", 300 + k);
        }
    }
}

#[test]
fn inner_matches_oracle_at_fixed_loads() {
    let solver = SolverConfig::default();
    let oracle = OracleConfig::default();
    for k in 0..30u64 {
        let n = 1 + (k % 3) as usize;
        let sc = generate(&RandomSpec::pofpoe(600 + k, n));
        let l = default_l_max(&sc).unwrap() * (0.2 + 0.02 * k as f64);
        for f in parse_alpha_list("0,0.5,1,2,inf").unwrap() {
            let s = solve_inner(&sc, f, l, &solver).unwrap();
            let o = brute_force_inner(&sc, f, l, &oracle).unwrap();
            assert_eq!(s.feasible, o.feasible, "seed {} {f}", 600 + k);
            if !s.feasible {
                continue;
            }
            let (sv, ov) = (s.value.to_f64(), o.value.to_f64());
            assert!(sv >= ov - 1e-3 * (1.0 + ov.abs()), "seed {} {f}: {sv} < {ov}", 600 + k);
            assert!(ov >= sv - 1e-3 * (1.0 + sv.abs()), "seed {} {f}: {ov} < {sv}", 600 + k);
        }
    }
}

#[test]
fn outer_result_dominates_grid_and_is_feasible() {
    let solver = SolverConfig::default();
    let cfg = OuterConfig::default();
    for k in 0..40u64 {
        let sc = generate(&RandomSpec::pofpoe(800 + k, 2 + (k % 7) as usize));
        for f in parse_alpha_list("0,1,2,inf").unwrap() {
            let grid = grid_search(&sc, f, &cfg, &solver).unwrap();
            let full = outer::solve(&sc, f, &cfg, &solver).unwrap();
            full.result.check_feasible(&sc, 1e-8).unwrap();
            assert!(full.result.objective.to_f64() >= grid.result.objective.to_f64() - 1e-12);
            for p in &grid.trace {
                if p.feasible && p.degenerate == grid.result.degenerate {
                    assert!(grid.result.objective >= p.value, "seed {} {f}: trace above result", 800 + k);
                }
            }
        }
    }
}

#[test]
fn sweep_anchors_are_exact() {
    for k in 0..10u64 {
        let sc = generate(&RandomSpec::pofpoe(900 + k, 4));
        let pts =
            sweep_alpha(&sc, &parse_alpha_list("0,1,inf").unwrap(), &OuterConfig::default(), &SolverConfig::default())
                .unwrap();
        assert_eq!(pts[0].pof, Some(0.0));
        assert_eq!(pts[2].poe, Some(0.0));
        for p in &pts {
            assert_eq!(p.total_surplus, p.s.total());
            assert_eq!(p.min_surplus, p.s.min());
            assert!(p.pof.unwrap() >= -1e-9 && p.poe.unwrap() >= -1e-9);
        }
    }
}
