//! Agreement between the parallel optimizer and independent exhaustive
//! enumeration: single-objective optima, exact Pareto fronts at alpha 1,
//! and alpha-relaxed front coverage.

use joinopt::cost::OperatorRegistry;
use joinopt::verify;
use joinopt::{
    brute_force, generate_star_query, master_optimize, serial_baseline, Backend, BruteForceOutcome,
    Objectives, PlanSpace,
};

fn assert_rel_eq(got: f64, expect: f64, what: &str) {
    let tol = 1e-9 * got.abs().max(expect.abs());
    assert!((got - expect).abs() <= tol, "{what}: got {got}, expected {expect}");
}

#[test]
fn linear_single_objective_matches_enumeration() {
    let out = verify::check_optimality(PlanSpace::Linear, &[4, 5, 6, 7, 8], 4, &[1, 2, 4]).unwrap();
    assert!(out.passed, "{:?}", out.details);
}

#[test]
fn bushy_single_objective_matches_enumeration() {
    let out = verify::check_optimality(PlanSpace::Bushy, &[4, 5, 6, 7], 4, &[1, 2, 4]).unwrap();
    assert!(out.passed, "{:?}", out.details);
}

// At alpha 1 the pruning is exact dominance, so the merged result must
// be the true Pareto front, point for point.
#[test]
fn exact_front_at_alpha_one_matches_enumeration() {
    let registry = OperatorRegistry::default_model();
    let cases = [(PlanSpace::Linear, 7usize), (PlanSpace::Linear, 8), (PlanSpace::Bushy, 6), (PlanSpace::Bushy, 7)];
    for (space, n) in cases {
        for seed in [21u64, 22, 23] {
            let q = generate_star_query(n, seed).unwrap();
            let BruteForceOutcome::Front { front, .. } =
                brute_force(&q, space, Objectives::TimeBuffer, &registry).unwrap()
            else {
                panic!("two objectives must produce a front");
            };
            for m in [1u64, 2, 4] {
                let report =
                    master_optimize(&q, m, space, Objectives::TimeBuffer, 1.0, "default", &Backend::Threads)
                        .unwrap();
                let mut got: Vec<[f64; 2]> =
                    report.plans.iter().map(|p| [p.cost.time(), p.cost.values()[1]]).collect();
                got.sort_by(|a, b| a.partial_cmp(b).unwrap());
                assert_eq!(
                    got.len(),
                    front.len(),
                    "{space} n={n} seed={seed} m={m}: {} plans vs {} true front points",
                    got.len(),
                    front.len()
                );
                for (g, f) in got.iter().zip(&front) {
                    assert_rel_eq(g[0], f.values()[0], &format!("{space} n={n} seed={seed} m={m} time"));
                    assert_rel_eq(g[1], f.values()[1], &format!("{space} n={n} seed={seed} m={m} buffer"));
                }
            }
        }
    }
}

#[test]
fn relaxed_front_covers_enumeration_within_alpha() {
    let out = verify::check_alpha_coverage(PlanSpace::Linear, &[5, 6, 7], 4, 10.0, &[1, 2, 4]).unwrap();
    assert!(out.passed, "{:?}", out.details);
    let out = verify::check_alpha_coverage(PlanSpace::Bushy, &[5, 6], 4, 10.0, &[1, 2]).unwrap();
    assert!(out.passed, "{:?}", out.details);
}

// A relaxed run may return fewer plans, never worse coverage; its best
// single-objective projection still bounds the true optimum by alpha.
#[test]
fn relaxed_front_never_exceeds_alpha_on_either_axis() {
    let registry = OperatorRegistry::default_model();
    for seed in [31u64, 32, 33, 34] {
        let q = generate_star_query(7, seed).unwrap();
        let BruteForceOutcome::Front { front, .. } =
            brute_force(&q, PlanSpace::Linear, Objectives::TimeBuffer, &registry).unwrap()
        else {
            panic!("two objectives must produce a front");
        };
        let exact =
            master_optimize(&q, 4, PlanSpace::Linear, Objectives::TimeBuffer, 1.0, "default", &Backend::Threads)
                .unwrap();
        let relaxed =
            master_optimize(&q, 4, PlanSpace::Linear, Objectives::TimeBuffer, 10.0, "default", &Backend::Threads)
                .unwrap();
        assert!(relaxed.plans.len() <= exact.plans.len(), "seed {seed}: relaxation grew the front");
        let best_time = front[0].values()[0];
        let relaxed_best = relaxed.plans.iter().map(|p| p.cost.time()).fold(f64::INFINITY, f64::min);
        assert!(relaxed_best <= 10.0 * best_time, "seed {seed}: relaxed best time beyond alpha bound");
    }
}

#[test]
fn serial_baseline_equals_single_worker_run() {
    let registry = OperatorRegistry::default_model();
    for (space, n) in [(PlanSpace::Linear, 9usize), (PlanSpace::Bushy, 7)] {
        let q = generate_star_query(n, 7).unwrap();
        let base = serial_baseline(&q, space, Objectives::Time, 1.0, &registry).unwrap();
        let report = master_optimize(&q, 1, space, Objectives::Time, 1.0, "default", &Backend::Threads).unwrap();
        assert_eq!(report.num_parts, 1);
        assert_eq!(base.plans[0].to_prefix(), report.plans[0].to_prefix());
        assert_eq!(base.plans[0].cost.time(), report.plans[0].cost.time());
        assert_eq!(base.stats.split_pairs, report.partitions[0].stats.split_pairs);
    }
}

// The hash-only registry exists for experiments where every join is a
// hash join; its optimum can never beat the full registry's.
#[test]
fn hash_only_model_is_never_cheaper_than_full_model() {
    for seed in [41u64, 42] {
        let q = generate_star_query(8, seed).unwrap();
        let full =
            master_optimize(&q, 2, PlanSpace::Linear, Objectives::Time, 1.0, "default", &Backend::Threads).unwrap();
        let hash =
            master_optimize(&q, 2, PlanSpace::Linear, Objectives::Time, 1.0, "hash", &Backend::Threads).unwrap();
        assert!(hash.plans[0].cost.time() >= full.plans[0].cost.time(), "seed {seed}");
    }
}
