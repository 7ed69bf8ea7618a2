//! Structural guarantees of the partitioning scheme at moderate scale:
//! partition sizes, space coverage, work division, and per-partition
//! optimality against restricted exhaustive search.

use joinopt::cost::OperatorRegistry;
use joinopt::verify;
use joinopt::{
    adm_join_results, brute_force_partition_best, generate_star_query, master_optimize, part_constraints,
    Backend, Objectives, PartitionSpec, PlanSpace,
};

#[test]
fn partition_sizes_match_closed_form() {
    for space in [PlanSpace::Linear, PlanSpace::Bushy] {
        let out = verify::check_partition_counts(space, 12).unwrap();
        assert!(out.passed, "{:?}", out.details);
    }
}

#[test]
fn linear_partitions_tile_the_permutations() {
    for n in 4..=7 {
        for m in [2u64, 4, 8] {
            if m > 1 << (n / 2) {
                continue;
            }
            let out = verify::check_linear_coverage(n, m).unwrap();
            assert!(out.passed, "n={n} m={m}: {:?}", out.details);
        }
    }
}

#[test]
fn bushy_partitions_cover_every_tree() {
    for n in 3..=7 {
        for m in [2u64, 4] {
            if m > 1 << (n / 3) {
                continue;
            }
            let out = verify::check_bushy_coverage(n, m).unwrap();
            assert!(out.passed, "n={n} m={m}: {:?}", out.details);
        }
    }
}

#[test]
fn partition_unions_cover_all_subsets() {
    for space in [PlanSpace::Linear, PlanSpace::Bushy] {
        for n in 3..=8 {
            let out = verify::check_union_coverage(space, n).unwrap();
            assert!(out.passed, "{space} n={n}: {:?}", out.details);
        }
    }
}

#[test]
fn doubling_workers_divides_the_work() {
    let out = verify::check_work_division(PlanSpace::Linear, 10, 3, 4).unwrap();
    assert!(out.passed, "{:?}", out.details);
    let out = verify::check_work_division(PlanSpace::Bushy, 9, 3, 2).unwrap();
    assert!(out.passed, "{:?}", out.details);
}

#[test]
fn per_worker_memory_shrinks_by_the_exact_factor() {
    let out = verify::check_memory_scaling(PlanSpace::Linear, 10, 3, 4).unwrap();
    assert!(out.passed, "{:?}", out.details);
    let out = verify::check_memory_scaling(PlanSpace::Bushy, 9, 3, 2).unwrap();
    assert!(out.passed, "{:?}", out.details);
}

// Each worker's answer is the true optimum over its own slice of the
// space, checked by exhaustive enumeration restricted to the same slice.
#[test]
fn each_partition_returns_its_slice_optimum() {
    let registry = OperatorRegistry::default_model();
    let cases = [(PlanSpace::Linear, 7usize, 4u64), (PlanSpace::Linear, 6, 8), (PlanSpace::Bushy, 6, 2), (PlanSpace::Bushy, 7, 4)];
    for (space, n, m) in cases {
        for seed in [11u64, 12, 13] {
            let q = generate_star_query(n, seed).unwrap();
            let report = master_optimize(&q, m, space, Objectives::Time, 1.0, "default", &Backend::Threads).unwrap();
            assert_eq!(report.num_parts, m);
            for part in &report.partitions {
                let spec = PartitionSpec::new(part.part_id, m, space, n).unwrap();
                let constraints = part_constraints(&q, &spec).unwrap();
                let allowed = adm_join_results(n, &constraints, space).unwrap();
                let expect = brute_force_partition_best(&q, space, &registry, &allowed).unwrap();
                let got = part.plans[0].cost.time();
                let tol = 1e-9 * expect.abs().max(got.abs());
                assert!(
                    (got - expect).abs() <= tol,
                    "{space} n={n} m={m} seed={seed} part={}: worker found {got}, restricted enumeration found {expect}",
                    part.part_id
                );
            }
        }
    }
}

// The merged winner can never beat every partition's slice optimum: it
// must equal the minimum of them.
#[test]
fn merged_winner_is_the_minimum_over_slices() {
    for (space, n, m) in [(PlanSpace::Linear, 8usize, 8u64), (PlanSpace::Bushy, 7, 4)] {
        let q = generate_star_query(n, 99).unwrap();
        let report = master_optimize(&q, m, space, Objectives::Time, 1.0, "default", &Backend::Threads).unwrap();
        let slice_min = report
            .partitions
            .iter()
            .map(|p| p.plans[0].cost.time())
            .fold(f64::INFINITY, f64::min);
        assert_eq!(report.plans.len(), 1);
        assert_eq!(report.plans[0].cost.time(), slice_min);
    }
}
