use std::collections::HashMap;
use std::sync::Arc;
use std::time::{Duration, Instant};

use crate::constraint::{JoinOrderConstraint, PlanSpace};
use crate::cost::{result_cardinality, CostVector, Objectives, OperatorRegistry};
use crate::error::{Error, Result};
use crate::partition::{adm_join_results, bushy_groups, part_constraints, BushyGroup, PartitionSpec};
use crate::plan::{combined_cost, Plan};
use crate::query::Query;
use crate::table_set::TableSet;

/// Counters a worker reports alongside its plans.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WorkerStats {
    /// Candidate plans priced, including scan leaves.
    pub plans_generated: u64,
    /// Ordered operand pairs tried across all admissible sets.
    pub split_pairs: u64,
    /// Size of this partition's admissible set family (empty set included);
    /// the worker's memory footprint is proportional to it.
    pub admissible_results: u64,
    /// Table sets holding at least one stored plan when the run finished.
    pub peak_memo_entries: u64,
    /// Time spent inside the optimization loop.
    pub wall: Duration,
}

/// Plans for the full table set plus run counters.
#[derive(Debug)]
pub struct WorkerOutput {
    /// Single-objective runs hold exactly one plan; multi-objective runs
    /// hold an approximate Pareto front.
    pub plans: Vec<Arc<Plan>>,
    pub stats: WorkerStats,
}

/// Inserts a candidate into a plan bucket under the alpha rule: the
/// candidate is dropped when a stored cost already dominates it within
/// factor `alpha`, otherwise it is added and every stored plan it
/// dominates outright is evicted. With `alpha = 1` (single objective)
/// the bucket converges to one plan and ties keep the incumbent.
fn admit_candidate(
    bucket: &mut Vec<Arc<Plan>>,
    cost: &CostVector,
    alpha: f64,
    build: impl FnOnce() -> Arc<Plan>,
) -> bool {
    if bucket.iter().any(|p| p.cost.dominates_within(cost, alpha)) {
        return false;
    }
    bucket.retain(|p| !cost.dominates(&p.cost));
    bucket.push(build());
    true
}

// Linear constraints as a successor map: succ[x] = y when x must enter
// the join sequence before y. Groups are disjoint, so one entry per table.
fn successor_map(n: usize, constraints: &[JoinOrderConstraint]) -> Result<Vec<Option<usize>>> {
    let mut succ = vec![None; n];
    for c in constraints {
        let JoinOrderConstraint::Linear { x, y } = *c else {
            return Err(Error::invalid(format!("constraint \"{c}\" is not a linear constraint")));
        };
        if succ[x].replace(y).is_some() {
            return Err(Error::invalid(format!("table {x} appears in two linear constraints")));
        }
    }
    Ok(succ)
}

// Reusable buffers for the bushy split generator; the DP calls it once
// per admissible set, so allocation churn matters.
#[derive(Default)]
struct SplitScratch {
    acc: Vec<TableSet>,
    next: Vec<TableSet>,
    choices: Vec<TableSet>,
}

/// All left operands `L ⊆ u` (including ∅ and `u` itself) such that both
/// `L` and `u ∖ L` are admissible under the groups' constraints, in
/// ascending bit order. Built as a product of per-group choices:
/// within a constrained triple, a choice equal to `{y,z}` makes the left
/// side inadmissible and a choice equal to `(u ∩ triple) ∖ {y,z}` (when
/// `{y,z} ⊆ u`) makes the right side inadmissible, so both are dropped.
fn admissible_left_operands(u: TableSet, groups: &[BushyGroup], scratch: &mut SplitScratch) -> Vec<TableSet> {
    scratch.acc.clear();
    scratch.acc.push(TableSet::empty());
    for g in groups {
        let local = g.mask.intersect(u);
        if local.is_empty() {
            continue;
        }
        scratch.choices.clear();
        for sub in local.subsets() {
            if let Some(c) = g.constraint {
                if sub == c.yz {
                    continue;
                }
                if c.yz.is_subset_of(local) && sub == local.difference(c.yz) {
                    continue;
                }
            }
            scratch.choices.push(sub);
        }
        scratch.next.clear();
        scratch.next.reserve(scratch.acc.len() * scratch.choices.len());
        for &prefix in &scratch.acc {
            for &c in &scratch.choices {
                scratch.next.push(prefix.union(c));
            }
        }
        std::mem::swap(&mut scratch.acc, &mut scratch.next);
    }
    scratch.acc.clone()
}

/// Number of ways to split any admissible subset of `scope` into an
/// ordered pair of admissible operands (degenerate splits with an empty
/// side included). An unconstrained triple scope yields 27; one bushy
/// constraint cuts that to 21, which is the per-group work reduction the
/// bushy partitioning achieves.
pub fn split_possibilities_in_scope(scope: TableSet, constraints: &[JoinOrderConstraint]) -> Result<u64> {
    let groups = bushy_groups(scope, constraints)?;
    let mut scratch = SplitScratch::default();
    let mut count = 0u64;
    for u in scope.subsets() {
        if constraints.iter().any(|c| c.excludes(u)) {
            continue;
        }
        count += admissible_left_operands(u, &groups, &mut scratch).len() as u64;
    }
    Ok(count)
}

struct DpState<'a> {
    registry: &'a OperatorRegistry,
    objectives: Objectives,
    alpha: f64,
    memo: HashMap<TableSet, Vec<Arc<Plan>>>,
    stats: WorkerStats,
}

impl DpState<'_> {
    fn bucket(&self, s: TableSet) -> Result<&Vec<Arc<Plan>>> {
        self.memo
            .get(&s)
            .ok_or_else(|| Error::internal(format!("no plans stored for admissible operand {s}")))
    }

    // Prices every (left plan, right plan, operator) combination for one
    // ordered operand pair and admits survivors into the bucket.
    fn combine_pair(
        &mut self,
        left_set: TableSet,
        right_set: TableSet,
        out_set: TableSet,
        out_card: f64,
        bucket: &mut Vec<Arc<Plan>>,
    ) -> Result<()> {
        self.stats.split_pairs += 1;
        let lefts = self.bucket(left_set)?;
        let rights = self.bucket(right_set)?;
        let mut priced = 0u64;
        for lp in lefts {
            for rp in rights {
                for (op, jo) in self.registry.join_ops().iter().enumerate() {
                    let node = (jo.cost)(lp.result_card, rp.result_card, out_card);
                    let cost = combined_cost(&lp.cost, &rp.cost, node, self.objectives);
                    priced += 1;
                    admit_candidate(bucket, &cost, self.alpha, || {
                        Arc::new(Plan::join_precosted(lp.clone(), rp.clone(), op, out_set, out_card, cost))
                    });
                }
            }
        }
        self.stats.plans_generated += priced;
        Ok(())
    }
}

fn try_splits_linear(
    state: &mut DpState<'_>,
    u: TableSet,
    out_card: f64,
    succ: &[Option<usize>],
) -> Result<Vec<Arc<Plan>>> {
    let mut bucket = Vec::new();
    for t in u.iter() {
        // t would be the last table joined; banned if some table in u
        // must come after it.
        if let Some(v) = succ[t] {
            if u.contains(v) {
                continue;
            }
        }
        state.combine_pair(u.without(t), TableSet::singleton(t), u, out_card, &mut bucket)?;
    }
    Ok(bucket)
}

fn try_splits_bushy(
    state: &mut DpState<'_>,
    u: TableSet,
    out_card: f64,
    groups: &[BushyGroup],
    scratch: &mut SplitScratch,
) -> Result<Vec<Arc<Plan>>> {
    let mut bucket = Vec::new();
    for left in admissible_left_operands(u, groups, scratch) {
        if left.is_empty() || left == u {
            continue;
        }
        state.combine_pair(left, u.difference(left), u, out_card, &mut bucket)?;
    }
    Ok(bucket)
}

/// Runs the partition-constrained dynamic program for one worker:
/// enumerate this partition's admissible sets by ascending size, split
/// each into admissible operand pairs, and keep the plans that survive
/// pruning. Returns the plans for the full table set.
pub fn worker_optimize(
    q: &Query,
    spec: &PartitionSpec,
    objectives: Objectives,
    alpha: f64,
    registry: &OperatorRegistry,
) -> Result<WorkerOutput> {
    if !(alpha.is_finite() && alpha >= 1.0) {
        return Err(Error::invalid(format!("alpha must be finite and >= 1, got {alpha}")));
    }
    let start = Instant::now();
    let n = q.table_count();
    let constraints = part_constraints(q, spec)?;
    let adm = adm_join_results(n, &constraints, spec.space)?;

    // Ties in a single-objective run must keep the incumbent, which is
    // exactly the alpha rule at alpha = 1.
    let alpha = match objectives {
        Objectives::Time => 1.0,
        Objectives::TimeBuffer => alpha,
    };
    let mut state = DpState {
        registry,
        objectives,
        alpha,
        memo: HashMap::new(),
        stats: WorkerStats { admissible_results: adm.total(), ..WorkerStats::default() },
    };

    for t in 0..n {
        let mut bucket = Vec::new();
        for op in 0..registry.scan_ops().len() {
            let plan = Plan::scan(q, t, op, registry, objectives)?;
            state.stats.plans_generated += 1;
            let cost = plan.cost;
            admit_candidate(&mut bucket, &cost, alpha, || Arc::new(plan));
        }
        state.memo.insert(TableSet::singleton(t), bucket);
    }

    let succ = match spec.space {
        PlanSpace::Linear => successor_map(n, &constraints)?,
        PlanSpace::Bushy => Vec::new(),
    };
    let groups = match spec.space {
        PlanSpace::Linear => Vec::new(),
        PlanSpace::Bushy => bushy_groups(q.full_set(), &constraints)?,
    };
    let mut scratch = SplitScratch::default();

    for k in 2..=n {
        // of_size returns sets in ascending bit order, making the whole
        // run deterministic for a given task.
        for &u in adm.of_size(k) {
            let out_card = result_cardinality(q, u)?;
            let bucket = match spec.space {
                PlanSpace::Linear => try_splits_linear(&mut state, u, out_card, &succ)?,
                PlanSpace::Bushy => try_splits_bushy(&mut state, u, out_card, &groups, &mut scratch)?,
            };
            if bucket.is_empty() {
                return Err(Error::internal(format!("admissible set {u} ended up with no plan")));
            }
            state.memo.insert(u, bucket);
        }
    }

    state.stats.peak_memo_entries = state.memo.len() as u64;
    let plans = state
        .memo
        .remove(&q.full_set())
        .ok_or_else(|| Error::internal("no plans for the full table set"))?;
    state.stats.wall = start.elapsed();
    Ok(WorkerOutput { plans, stats: state.stats })
}
