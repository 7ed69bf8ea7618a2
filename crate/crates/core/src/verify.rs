//! Runnable checks for the optimizer's core guarantees: partition sizes,
//! coverage of the plan space, agreement with exhaustive enumeration,
//! Pareto coverage, message and memory accounting, and backend agreement.
//! The CLI `verify` command runs them at desk scale; the test suite runs
//! them at the scales the guarantees are stated for.

use std::collections::HashSet;

use crate::constraint::{JoinOrderConstraint, PlanSpace};
use crate::cost::Objectives;
use crate::dp::split_possibilities_in_scope;
use crate::error::Result;
use crate::orchestrator::{master_optimize, Backend, RunReport};
use crate::partition::{adm_join_results, count_admissible, max_constraints, part_constraints, PartitionSpec};
use crate::plan::Plan;
use crate::query::Query;
use crate::table_set::TableSet;
use crate::workload::{brute_force, generate_star_query, BruteForceOutcome};

/// Outcome of one property check.
#[derive(Debug)]
pub struct PropertyOutcome {
    pub name: &'static str,
    pub passed: bool,
    /// Human-readable evidence: what was checked and, on failure, the
    /// first few counterexamples.
    pub details: Vec<String>,
}

impl PropertyOutcome {
    fn new(name: &'static str) -> PropertyOutcome {
        PropertyOutcome { name, passed: true, details: Vec::new() }
    }

    fn note(&mut self, line: impl Into<String>) {
        self.details.push(line.into());
    }

    fn fail(&mut self, line: impl Into<String>) {
        self.passed = false;
        if self.details.len() < 8 {
            self.details.push(line.into());
        }
    }
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs())
}

/// Materialized partition sizes equal the closed form for every
/// partition id, every constraint count, and every query size up to the
/// given caps.
pub fn check_partition_counts(space: PlanSpace, max_n: usize) -> Result<PropertyOutcome> {
    let mut out = PropertyOutcome::new("partition-counts");
    let mut checked = 0u64;
    for n in 2..=max_n {
        let q = Query::new(vec![10.0; n], vec![])?;
        for l in 0..=max_constraints(n, space) {
            let expected = count_admissible(n, l, space)?;
            for part_id in 0..(1u64 << l) {
                let spec = PartitionSpec::new(part_id, 1 << l, space, n)?;
                let constraints = part_constraints(&q, &spec)?;
                let adm = adm_join_results(n, &constraints, space)?;
                checked += 1;
                if adm.total() != expected {
                    out.fail(format!(
                        "n={n} l={l} part={part_id}: materialized {} sets, closed form says {expected}",
                        adm.total()
                    ));
                    continue;
                }
                let sum: usize = (0..=n).map(|k| adm.of_size(k).len()).sum();
                if sum as u64 != expected {
                    out.fail(format!("n={n} l={l} part={part_id}: size buckets sum to {sum}, expected {expected}"));
                }
            }
        }
    }
    out.note(format!("{checked} (n, constraints, partition) combinations match their closed-form size, {space} space, n <= {max_n}"));
    Ok(out)
}

/// Same check for one specific (tables, workers) combination, with the
/// count itself in the evidence line.
pub fn check_partition_counts_at(space: PlanSpace, n: usize, m: u64) -> Result<PropertyOutcome> {
    let mut out = PropertyOutcome::new("partition-counts");
    let q = Query::new(vec![10.0; n], vec![])?;
    let spec0 = PartitionSpec::new(0, m, space, n)?;
    let expected = count_admissible(n, spec0.constraint_count(), space)?;
    for part_id in 0..m {
        let spec = PartitionSpec::new(part_id, m, space, n)?;
        let adm = adm_join_results(n, &part_constraints(&q, &spec)?, space)?;
        if adm.total() != expected {
            out.fail(format!(
                "partition {part_id} of {m} holds {} admissible sets, closed form says {expected}",
                adm.total()
            ));
        }
    }
    out.note(format!("every one of {m} partitions reports {expected} admissible sets ({space}, n={n})"));
    Ok(out)
}

fn for_each_permutation(n: usize, f: &mut impl FnMut(&[usize])) {
    fn rec(perm: &mut Vec<usize>, used: &mut Vec<bool>, n: usize, f: &mut impl FnMut(&[usize])) {
        if perm.len() == n {
            f(perm);
            return;
        }
        for t in 0..n {
            if !used[t] {
                used[t] = true;
                perm.push(t);
                rec(perm, used, n, f);
                perm.pop();
                used[t] = false;
            }
        }
    }
    rec(&mut Vec::with_capacity(n), &mut vec![false; n], n, f);
}

/// Every join order (permutation) satisfies the constraint set of
/// exactly one linear partition: the partitions tile the space.
pub fn check_linear_coverage(n: usize, m: u64) -> Result<PropertyOutcome> {
    let mut out = PropertyOutcome::new("linear-coverage");
    let q = Query::new(vec![10.0; n], vec![])?;
    let constraint_sets: Vec<Vec<JoinOrderConstraint>> = (0..m)
        .map(|part_id| part_constraints(&q, &PartitionSpec::new(part_id, m, PlanSpace::Linear, n)?))
        .collect::<Result<_>>()?;
    let mut perms = 0u64;
    for_each_permutation(n, &mut |perm| {
        perms += 1;
        let mut pos = vec![0usize; n];
        for (i, &t) in perm.iter().enumerate() {
            pos[t] = i;
        }
        let owners = constraint_sets
            .iter()
            .filter(|cs| {
                cs.iter().all(|c| match *c {
                    JoinOrderConstraint::Linear { x, y } => pos[x] < pos[y],
                    _ => false,
                })
            })
            .count();
        if owners != 1 {
            out.fail(format!("join order {perm:?} belongs to {owners} of {m} partitions, expected exactly 1"));
        }
    });
    out.note(format!("all {perms} join orders of {n} tables land in exactly one of {m} partitions"));
    Ok(out)
}

// All unordered binary trees over `s`, each as the list of its internal
// nodes' table sets. Canonical: the left child always holds the set's
// smallest table, so every unordered tree appears once.
fn bushy_internal_sets(s: TableSet) -> Vec<Vec<TableSet>> {
    if s.len() == 1 {
        return vec![Vec::new()];
    }
    let lead = s.min_table().expect("nonempty");
    let mut trees = Vec::new();
    for left in s.subsets() {
        if left.is_empty() || left == s || !left.contains(lead) {
            continue;
        }
        let right = s.difference(left);
        for lt in bushy_internal_sets(left) {
            for rt in bushy_internal_sets(right) {
                let mut combined = lt.clone();
                combined.extend_from_slice(&rt);
                combined.push(s);
                trees.push(combined);
            }
        }
    }
    trees
}

/// Every bushy tree keeps all of its intermediate results inside at
/// least one partition, so no plan is lost to the split.
pub fn check_bushy_coverage(n: usize, m: u64) -> Result<PropertyOutcome> {
    let mut out = PropertyOutcome::new("bushy-coverage");
    let q = Query::new(vec![10.0; n], vec![])?;
    let constraint_sets: Vec<Vec<JoinOrderConstraint>> = (0..m)
        .map(|part_id| part_constraints(&q, &PartitionSpec::new(part_id, m, PlanSpace::Bushy, n)?))
        .collect::<Result<_>>()?;
    let trees = bushy_internal_sets(TableSet::full(n));
    let mut min_owners = usize::MAX;
    for sets in &trees {
        let owners = constraint_sets
            .iter()
            .filter(|cs| sets.iter().all(|u| cs.iter().all(|c| !c.excludes(*u))))
            .count();
        min_owners = min_owners.min(owners);
        if owners == 0 {
            out.fail(format!("a tree with internal sets {sets:?} fits no partition of {m}"));
        }
    }
    out.note(format!(
        "all {} bushy trees over {n} tables fit in at least one of {m} partitions (minimum owners: {min_owners})",
        trees.len()
    ));
    Ok(out)
}

/// Parallel single-objective runs return exactly the plan cost that
/// exhaustive enumeration finds, for every (tables, seed, workers) combo.
pub fn check_optimality(
    space: PlanSpace,
    ns: &[usize],
    seeds_per_n: u64,
    worker_counts: &[u64],
) -> Result<PropertyOutcome> {
    let mut out = PropertyOutcome::new("optimality");
    let registry = crate::cost::OperatorRegistry::default_model();
    let mut runs = 0u64;
    for &n in ns {
        for i in 0..seeds_per_n {
            let seed = n as u64 * 1000 + i;
            let q = generate_star_query(n, seed)?;
            let BruteForceOutcome::Single { best_time, .. } = brute_force(&q, space, Objectives::Time, &registry)?
            else {
                unreachable!("time-only enumeration returns Single");
            };
            for &w in worker_counts {
                let report = master_optimize(&q, w, space, Objectives::Time, 1.0, "default", &Backend::Threads)?;
                runs += 1;
                let got = report.plans[0].cost.time();
                if !rel_close(got, best_time, 1e-9) {
                    out.fail(format!(
                        "n={n} seed={seed} workers={w} ({} parts): optimizer found {got}, enumeration found {best_time}",
                        report.num_parts
                    ));
                }
            }
        }
    }
    out.note(format!("{runs} {space} runs matched exhaustive enumeration to within 1e-9"));
    Ok(out)
}

/// Multi-objective runs cover the exact Pareto front within factor
/// alpha: for every true front point there is a returned plan whose cost
/// is at most alpha times it in every component.
pub fn check_alpha_coverage(
    space: PlanSpace,
    ns: &[usize],
    seeds_per_n: u64,
    alpha: f64,
    worker_counts: &[u64],
) -> Result<PropertyOutcome> {
    let mut out = PropertyOutcome::new("alpha-coverage");
    let registry = crate::cost::OperatorRegistry::default_model();
    let mut points = 0u64;
    let mut runs = 0u64;
    for &n in ns {
        for i in 0..seeds_per_n {
            let seed = 500_000 + n as u64 * 1000 + i;
            let q = generate_star_query(n, seed)?;
            let BruteForceOutcome::Front { front, .. } = brute_force(&q, space, Objectives::TimeBuffer, &registry)?
            else {
                unreachable!("two-objective enumeration returns Front");
            };
            for &w in worker_counts {
                let report = master_optimize(&q, w, space, Objectives::TimeBuffer, alpha, "default", &Backend::Threads)?;
                runs += 1;
                for f in &front {
                    points += 1;
                    let covered = report.plans.iter().any(|p| p.cost.dominates_within(f, alpha));
                    if !covered {
                        out.fail(format!(
                            "n={n} seed={seed} workers={w}: front point {:?} not covered within alpha={alpha}",
                            f.values()
                        ));
                    }
                }
            }
        }
    }
    out.note(format!("{points} true Pareto points covered within alpha={alpha} across {runs} {space} runs"));
    Ok(out)
}

/// A constrained table triple admits 21 of the 27 ordered operand splits
/// of an unconstrained triple: the work saving that makes bushy
/// partitions equal-sized.
pub fn check_split_ratio() -> Result<PropertyOutcome> {
    let mut out = PropertyOutcome::new("split-ratio");
    let scope = TableSet::from_tables([0, 1, 2]);
    let free = split_possibilities_in_scope(scope, &[])?;
    let constrained =
        split_possibilities_in_scope(scope, &[JoinOrderConstraint::Bushy { x: 0, y: 1, z: 2 }])?;
    if free != 27 {
        out.fail(format!("unconstrained triple has {free} splits, expected 27"));
    }
    if constrained != 21 {
        out.fail(format!("constrained triple has {constrained} splits, expected 21"));
    }
    out.note(format!("constrained/unconstrained split possibilities per triple: {constrained}/{free}"));
    Ok(out)
}

// Least-squares line y = a + b x.
fn affine_fit(points: &[(f64, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let cov = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>();
    let var = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum::<f64>();
    let b = cov / var;
    (my - b * mx, b)
}

/// Message traffic is exactly two frames per worker and total bytes grow
/// affinely in the worker count (each extra worker adds one task and one
/// result of near-constant size).
pub fn check_message_economy(n: usize, seed: u64, worker_counts: &[u64]) -> Result<PropertyOutcome> {
    let mut out = PropertyOutcome::new("message-economy");
    let q = generate_star_query(n, seed)?;
    let mut points = Vec::new();
    for &w in worker_counts {
        let report = master_optimize(&q, w, PlanSpace::Linear, Objectives::Time, 1.0, "default", &Backend::Threads)?;
        if report.messages_sent != 2 * report.num_parts {
            out.fail(format!(
                "{} workers: {} messages, expected exactly {}",
                report.num_parts,
                report.messages_sent,
                2 * report.num_parts
            ));
        }
        points.push((report.num_parts as f64, report.bytes_sent as f64));
    }
    let (a, b) = affine_fit(&points);
    for (m, bytes) in &points {
        let fit = a + b * m;
        if !rel_close(fit, *bytes, 0.05) {
            out.fail(format!("workers={m}: {bytes} bytes vs affine fit {fit:.0}, off by more than 5%"));
        }
    }
    out.note(format!(
        "2 messages per worker; bytes fit {a:.0} + {b:.0} * workers within 5% over m in {:?}",
        worker_counts
    ));
    Ok(out)
}

/// Per-worker memory (the admissible set family it must cover) matches
/// the closed form at every worker count, so each doubling of workers
/// shrinks it by exactly 3/4 (linear) or 7/8 (bushy).
pub fn check_memory_scaling(space: PlanSpace, n: usize, seed: u64, max_l: u32) -> Result<PropertyOutcome> {
    let mut out = PropertyOutcome::new("memory-scaling");
    let q = generate_star_query(n, seed)?;
    let (num, den) = match space {
        PlanSpace::Linear => (3u64, 4u64),
        PlanSpace::Bushy => (7u64, 8u64),
    };
    let mut per_level = Vec::new();
    for l in 0..=max_l {
        let m = 1u64 << l;
        let report = master_optimize(&q, m, space, Objectives::Time, 1.0, "default", &Backend::Threads)?;
        let expected = count_admissible(n, l, space)?;
        for part in &report.partitions {
            if part.stats.admissible_results != expected {
                out.fail(format!(
                    "m={m} partition {}: {} admissible sets, closed form says {expected}",
                    part.part_id, part.stats.admissible_results
                ));
            }
            if part.stats.peak_memo_entries > expected + n as u64 {
                out.fail(format!(
                    "m={m} partition {}: {} memo entries exceeds admissible sets plus scans ({expected} + {n})",
                    part.part_id, part.stats.peak_memo_entries
                ));
            }
        }
        per_level.push(report.max_admissible_results());
    }
    for w in per_level.windows(2) {
        if w[1] * den != w[0] * num {
            out.fail(format!("per-worker sets went {} -> {}, not an exact {num}/{den} step", w[0], w[1]));
        }
    }
    out.note(format!(
        "per-worker admissible sets over doublings: {per_level:?} ({space}, n={n}), each step exactly {num}/{den}"
    ));
    Ok(out)
}

/// Doubling the workers strictly shrinks each worker's share of the
/// split work while the union of shares keeps covering the space (total
/// split pairs never drop).
pub fn check_work_division(space: PlanSpace, n: usize, seed: u64, max_l: u32) -> Result<PropertyOutcome> {
    let mut out = PropertyOutcome::new("work-division");
    let q = generate_star_query(n, seed)?;
    let mut per_worker = Vec::new();
    let mut totals = Vec::new();
    for l in 0..=max_l {
        let m = 1u64 << l;
        let report = master_optimize(&q, m, space, Objectives::Time, 1.0, "default", &Backend::Threads)?;
        let first = report.partitions[0].stats.split_pairs;
        for part in &report.partitions {
            if part.stats.split_pairs != first {
                out.fail(format!(
                    "m={m}: partition {} tried {} split pairs but partition 0 tried {first}; shares must be equal",
                    part.part_id, part.stats.split_pairs
                ));
            }
        }
        per_worker.push(first);
        totals.push(report.total_split_pairs());
    }
    for w in per_worker.windows(2) {
        if w[1] >= w[0] {
            out.fail(format!("per-worker split pairs went {} -> {}; doubling workers must shrink the share", w[0], w[1]));
        }
    }
    for w in totals.windows(2) {
        if w[1] < w[0] {
            out.fail(format!("total split pairs dropped {} -> {}; partitions stopped covering the space", w[0], w[1]));
        }
    }
    out.note(format!("per-worker split pairs {per_worker:?}, totals {totals:?} ({space}, n={n})"));
    Ok(out)
}

/// The thread and socket backends return identical plans with identical
/// costs for the same tasks.
pub fn check_backend_determinism(
    n: usize,
    seeds: &[u64],
    workers: u64,
    endpoints: &[String],
) -> Result<PropertyOutcome> {
    let mut out = PropertyOutcome::new("backend-determinism");
    let sockets = Backend::Sockets { endpoints: endpoints.to_vec() };
    let mut compared = 0u64;
    for &seed in seeds {
        let q = generate_star_query(n, seed)?;
        for (objectives, alpha) in [(Objectives::Time, 1.0), (Objectives::TimeBuffer, 10.0)] {
            let a = master_optimize(&q, workers, PlanSpace::Linear, objectives, alpha, "default", &Backend::Threads)?;
            let b = master_optimize(&q, workers, PlanSpace::Linear, objectives, alpha, "default", &sockets)?;
            compared += 1;
            let pa = describe_plans(&a.plans);
            let pb = describe_plans(&b.plans);
            if pa != pb {
                out.fail(format!("seed {seed}, {objectives:?}: threads returned {pa:?}, sockets returned {pb:?}"));
            }
        }
    }
    out.note(format!("{compared} runs agree plan for plan across backends ({} endpoints)", endpoints.len()));
    Ok(out)
}

fn describe_plans(plans: &[Plan]) -> Vec<String> {
    plans.iter().map(|p| format!("{} {:?}", p.to_prefix(), p.cost.values())).collect()
}

/// Wall-clock times for one query at increasing worker counts; the raw
/// material for scaling claims. Interpretation is left to the caller,
/// since it depends on how many cores the machine really has.
pub fn measure_scaling(space: PlanSpace, n: usize, seed: u64, worker_counts: &[u64]) -> Result<Vec<(u64, RunReport)>> {
    let q = generate_star_query(n, seed)?;
    let mut rows = Vec::new();
    for &w in worker_counts {
        let report = master_optimize(&q, w, space, Objectives::Time, 1.0, "default", &Backend::Threads)?;
        rows.push((w, report));
    }
    Ok(rows)
}

/// Union of both partitions' admissible families at every split level
/// covers every subset some plan could need; spot check for one n.
pub fn check_union_coverage(space: PlanSpace, n: usize) -> Result<PropertyOutcome> {
    let mut out = PropertyOutcome::new("union-coverage");
    let q = Query::new(vec![10.0; n], vec![])?;
    for l in 0..=max_constraints(n, space) {
        let m = 1u64 << l;
        let mut union: HashSet<TableSet> = HashSet::new();
        for part_id in 0..m {
            let spec = PartitionSpec::new(part_id, m, space, n)?;
            let constraints = part_constraints(&q, &spec)?;
            union.extend(adm_join_results(n, &constraints, space)?.iter());
        }
        // Linear partitions drop a lone successor {y} from their own
        // family, but the opposite-direction partition readmits it.
        if union.len() != 1 << n {
            out.fail(format!("m={m}: union covers {} of {} subsets", union.len(), 1u64 << n));
        }
    }
    out.note(format!("partition unions cover all {} subsets at every split level ({space}, n={n})", 1u64 << n));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn permutation_and_tree_enumerators_have_known_sizes() {
        let mut count = 0u64;
        for_each_permutation(5, &mut |_| count += 1);
        assert_eq!(count, 120);
        // Unordered binary trees with k labeled leaves: (2k-3)!! for k >= 2.
        assert_eq!(bushy_internal_sets(TableSet::full(3)).len(), 3);
        assert_eq!(bushy_internal_sets(TableSet::full(4)).len(), 15);
        assert_eq!(bushy_internal_sets(TableSet::full(5)).len(), 105);
        assert_eq!(bushy_internal_sets(TableSet::full(6)).len(), 945);
    }

    #[test]
    fn affine_fit_recovers_exact_line() {
        let (a, b) = affine_fit(&[(1.0, 7.0), (2.0, 9.0), (4.0, 13.0), (8.0, 21.0)]);
        assert!((a - 5.0).abs() < 1e-9);
        assert!((b - 2.0).abs() < 1e-9);
    }

    #[test]
    fn small_scale_properties_pass() {
        assert!(check_partition_counts(PlanSpace::Linear, 8).unwrap().passed);
        assert!(check_partition_counts(PlanSpace::Bushy, 8).unwrap().passed);
        let at = check_partition_counts_at(PlanSpace::Bushy, 9, 8).unwrap();
        assert!(at.passed);
        assert!(at.details[0].contains("343"), "{:?}", at.details);
        assert!(check_linear_coverage(5, 4).unwrap().passed);
        assert!(check_bushy_coverage(5, 2).unwrap().passed);
        assert!(check_split_ratio().unwrap().passed);
        assert!(check_union_coverage(PlanSpace::Linear, 6).unwrap().passed);
        assert!(check_union_coverage(PlanSpace::Bushy, 6).unwrap().passed);
    }

    #[test]
    fn small_scale_optimality_and_coverage_pass() {
        let o = check_optimality(PlanSpace::Linear, &[5, 6], 3, &[1, 2, 4]).unwrap();
        assert!(o.passed, "{:?}", o.details);
        let o = check_optimality(PlanSpace::Bushy, &[5, 6], 3, &[1, 2]).unwrap();
        assert!(o.passed, "{:?}", o.details);
        let o = check_alpha_coverage(PlanSpace::Linear, &[5], 3, 10.0, &[1, 2]).unwrap();
        assert!(o.passed, "{:?}", o.details);
    }

    #[test]
    fn small_scale_accounting_passes() {
        let o = check_message_economy(8, 17, &[1, 2, 4]).unwrap();
        assert!(o.passed, "{:?}", o.details);
        let o = check_memory_scaling(PlanSpace::Linear, 8, 17, 3).unwrap();
        assert!(o.passed, "{:?}", o.details);
        let o = check_memory_scaling(PlanSpace::Bushy, 9, 17, 2).unwrap();
        assert!(o.passed, "{:?}", o.details);
        let o = check_work_division(PlanSpace::Linear, 8, 17, 3).unwrap();
        assert!(o.passed, "{:?}", o.details);
    }
}
