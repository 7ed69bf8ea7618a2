use crate::constraint::PlanSpace;
use crate::cost::{CostVector, Objectives, OperatorRegistry};
use crate::dp::{worker_optimize, WorkerOutput};
use crate::error::{Error, Result};
use crate::partition::{AdmissibleSets, PartitionSpec};
use crate::query::Query;
use crate::table_set::TableSet;

/// SplitMix64 generator (Steele, Lea, Flood 2014). Chosen because it is
/// tiny, fast, and trivially portable: identical seeds yield identical
/// workloads on every platform, which keeps benchmark runs reproducible.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> SplitMix64 {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in [0, 1) with 53 random bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }
}

/// Deterministic star query: table 0 is the hub, every other table joins
/// it directly. Cardinalities are log-uniform over [10, 100000] and
/// rounded; each edge's selectivity is uniform over
/// [10 / min(card_hub, card_i), 1), so a join with the hub never yields
/// fewer than about 10 tuples. Draw order is fixed (all cardinalities,
/// then edges in table order), so a (n, seed) pair names one query
/// forever.
pub fn generate_star_query(n: usize, seed: u64) -> Result<Query> {
    if n < 2 {
        return Err(Error::invalid(format!("a star query needs at least 2 tables, got {n}")));
    }
    let mut rng = SplitMix64::new(seed);
    let cards: Vec<f64> = (0..n)
        .map(|_| 10f64.powf(1.0 + 4.0 * rng.next_f64()).round())
        .collect();
    let mut edges = Vec::with_capacity(n - 1);
    for i in 1..n {
        let lo = 10.0 / cards[0].min(cards[i]);
        let sel = if lo >= 1.0 { 1.0 } else { lo + rng.next_f64() * (1.0 - lo) };
        edges.push((0, i, sel));
    }
    Query::new(cards, edges)
}

/// Single-worker run over the whole unpartitioned search space; the
/// baseline that parallel speedups are measured against.
pub fn serial_baseline(
    q: &Query,
    space: PlanSpace,
    objectives: Objectives,
    alpha: f64,
    registry: &OperatorRegistry,
) -> Result<WorkerOutput> {
    let spec = PartitionSpec::new(0, 1, space, q.table_count())?;
    worker_optimize(q, &spec, objectives, alpha, registry)
}

/// Result of an exhaustive plan enumeration.
#[derive(Debug, Clone, PartialEq)]
pub enum BruteForceOutcome {
    /// Cheapest total time, with the number of join trees and costed
    /// plan variants visited along the way.
    Single { best_time: f64, trees: u64, plans: u64 },
    /// Exact Pareto front over (time, buffer), sorted by time.
    Front { front: Vec<CostVector>, trees: u64, plans: u64 },
}

// Everything the enumeration recursions share.
struct BruteCtx<'a> {
    q: &'a Query,
    registry: &'a OperatorRegistry,
    // Output cardinality for every table subset, indexed by bitmask.
    cards: Vec<f64>,
    scan_min: Vec<f64>,
}

impl<'a> BruteCtx<'a> {
    fn new(q: &'a Query, registry: &'a OperatorRegistry) -> Result<BruteCtx<'a>> {
        let n = q.table_count();
        let mut cards = vec![0.0; 1 << n];
        for bits in 1..(1u64 << n) {
            let t = bits.trailing_zeros() as usize;
            let rest = bits & (bits - 1);
            let mut c = if rest == 0 { 1.0 } else { cards[rest as usize] };
            c *= q.cardinality(t);
            for y in TableSet::from_bits(rest).iter() {
                c *= q.selectivity(t, y);
            }
            cards[bits as usize] = c;
        }
        let scan_min = (0..n)
            .map(|t| {
                registry
                    .scan_ops()
                    .iter()
                    .map(|op| (op.cost)(q.cardinality(t)).time)
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        Ok(BruteCtx { q, registry, cards, scan_min })
    }

    fn card(&self, s: TableSet) -> f64 {
        self.cards[s.bits() as usize]
    }

    fn cheapest_join_node(&self, left: f64, right: f64, out: f64) -> f64 {
        self.registry
            .join_ops()
            .iter()
            .map(|op| (op.cost)(left, right, out).time)
            .fold(f64::INFINITY, f64::min)
    }
}

fn push_front(front: &mut Vec<CostVector>, cand: CostVector) {
    if front.iter().any(|f| f.dominates(&cand)) {
        return;
    }
    front.retain(|f| !cand.dominates(f));
    front.push(cand);
}

fn sort_front(front: &mut [CostVector]) {
    front.sort_by(|a, b| {
        a.time()
            .partial_cmp(&b.time())
            .expect("costs are finite")
            .then(a.buffer().partial_cmp(&b.buffer()).expect("costs are finite"))
    });
}

// Left-deep, time only: walk every permutation, folding the cheapest
// operator into each node. Valid because time is additive over nodes, so
// per-node minimization is exact for a fixed join order.
fn linear_single(ctx: &BruteCtx<'_>) -> BruteForceOutcome {
    struct Walk<'c, 'a> {
        ctx: &'c BruteCtx<'a>,
        best: f64,
        trees: u64,
    }
    impl Walk<'_, '_> {
        fn go(&mut self, remaining: TableSet, cur: TableSet, cur_card: f64, cur_time: f64) {
            if remaining.is_empty() {
                self.trees += 1;
                if cur_time < self.best {
                    self.best = cur_time;
                }
                return;
            }
            for t in remaining.iter() {
                let next = cur.with(t);
                let ncard = self.ctx.card(next);
                let node = self.ctx.cheapest_join_node(cur_card, self.ctx.q.cardinality(t), ncard);
                self.go(
                    remaining.without(t),
                    next,
                    ncard,
                    cur_time + self.ctx.scan_min[t] + node,
                );
            }
        }
    }
    let n = ctx.q.table_count();
    let full = ctx.q.full_set();
    let mut walk = Walk { ctx, best: f64::INFINITY, trees: 0 };
    for t in 0..n {
        walk.go(full.without(t), TableSet::singleton(t), ctx.q.cardinality(t), ctx.scan_min[t]);
    }
    let plans = walk.trees
        * (ctx.registry.scan_ops().len() as u64).pow(n as u32)
        * (ctx.registry.join_ops().len() as u64).pow(n as u32 - 1);
    BruteForceOutcome::Single { best_time: walk.best, trees: walk.trees, plans }
}

// Left-deep, (time, buffer): per permutation, fold the exact front of
// partial (time, buffer) pairs node by node. Both components compose
// monotonically (sum and max), so reducing each intermediate front loses
// nothing for that permutation.
fn linear_front(ctx: &BruteCtx<'_>) -> BruteForceOutcome {
    struct Walk<'c, 'a> {
        ctx: &'c BruteCtx<'a>,
        global: Vec<CostVector>,
        trees: u64,
    }
    impl Walk<'_, '_> {
        fn go(&mut self, remaining: TableSet, cur: TableSet, cur_card: f64, front: &[CostVector]) {
            if remaining.is_empty() {
                self.trees += 1;
                for f in front {
                    push_front(&mut self.global, *f);
                }
                return;
            }
            for t in remaining.iter() {
                let next = cur.with(t);
                let ncard = self.ctx.card(next);
                let t_card = self.ctx.q.cardinality(t);
                let mut folded = Vec::new();
                for scan_op in self.ctx.registry.scan_ops() {
                    let scan = (scan_op.cost)(t_card);
                    for join_op in self.ctx.registry.join_ops() {
                        let node = (join_op.cost)(cur_card, t_card, ncard);
                        for f in front {
                            let time = f.time() + scan.time + node.time;
                            let buffer = f.buffer().unwrap_or(0.0).max(scan.buffer).max(node.buffer);
                            push_front(&mut folded, CostVector::time_buffer(time, buffer));
                        }
                    }
                }
                self.go(remaining.without(t), next, ncard, &folded);
            }
        }
    }
    let n = ctx.q.table_count();
    let full = ctx.q.full_set();
    let mut walk = Walk { ctx, global: Vec::new(), trees: 0 };
    for t in 0..n {
        let mut start = Vec::new();
        for scan_op in ctx.registry.scan_ops() {
            let c = (scan_op.cost)(ctx.q.cardinality(t));
            push_front(&mut start, CostVector::time_buffer(c.time, c.buffer));
        }
        walk.go(full.without(t), TableSet::singleton(t), ctx.q.cardinality(t), &start);
    }
    let plans = walk.trees
        * (ctx.registry.scan_ops().len() as u64).pow(n as u32)
        * (ctx.registry.join_ops().len() as u64).pow(n as u32 - 1);
    let mut front = walk.global;
    sort_front(&mut front);
    BruteForceOutcome::Front { front, trees: walk.trees, plans }
}

// Bushy, time only: raw double recursion over every ordered split of
// every subtree, no sharing of subproblem results. Deliberately the
// slow, obviously-correct enumeration.
fn bushy_single(ctx: &BruteCtx<'_>, s: TableSet) -> (f64, u64, u64) {
    if s.len() == 1 {
        let t = s.min_table().expect("nonempty");
        return (ctx.scan_min[t], 1, ctx.registry.scan_ops().len() as u64);
    }
    let out = ctx.card(s);
    let k = ctx.registry.join_ops().len() as u64;
    let mut best = f64::INFINITY;
    let mut trees = 0u64;
    let mut plans = 0u64;
    for left in s.subsets() {
        if left.is_empty() || left == s {
            continue;
        }
        let right = s.difference(left);
        let (bl, tl, pl) = bushy_single(ctx, left);
        let (br, tr, pr) = bushy_single(ctx, right);
        let node = ctx.cheapest_join_node(ctx.card(left), ctx.card(right), out);
        let cand = bl + br + node;
        if cand < best {
            best = cand;
        }
        trees += tl * tr;
        plans += pl * pr * k;
    }
    (best, trees, plans)
}

// Bushy, (time, buffer): same raw recursion, returning the exact front
// for each subtree.
fn bushy_front(ctx: &BruteCtx<'_>, s: TableSet) -> (Vec<CostVector>, u64, u64) {
    if s.len() == 1 {
        let t = s.min_table().expect("nonempty");
        let mut front = Vec::new();
        for scan_op in ctx.registry.scan_ops() {
            let c = (scan_op.cost)(ctx.q.cardinality(t));
            push_front(&mut front, CostVector::time_buffer(c.time, c.buffer));
        }
        return (front, 1, ctx.registry.scan_ops().len() as u64);
    }
    let out = ctx.card(s);
    let k = ctx.registry.join_ops().len() as u64;
    let mut front = Vec::new();
    let mut trees = 0u64;
    let mut plans = 0u64;
    for left in s.subsets() {
        if left.is_empty() || left == s {
            continue;
        }
        let right = s.difference(left);
        let (fl, tl, pl) = bushy_front(ctx, left);
        let (fr, tr, pr) = bushy_front(ctx, right);
        for join_op in ctx.registry.join_ops() {
            let node = (join_op.cost)(ctx.card(left), ctx.card(right), out);
            for a in &fl {
                for b in &fr {
                    let time = a.time() + b.time() + node.time;
                    let buffer = node
                        .buffer
                        .max(a.buffer().unwrap_or(0.0))
                        .max(b.buffer().unwrap_or(0.0));
                    push_front(&mut front, CostVector::time_buffer(time, buffer));
                }
            }
        }
        trees += tl * tr;
        plans += pl * pr * k;
    }
    (front, trees, plans)
}

/// Exhaustive reference enumeration of the full (unpartitioned) plan
/// space. Shares only the cost formulas with the DP engine; the search
/// itself visits every join tree explicitly, so its answers are a fair
/// yardstick for the optimizer. Refuses instances where that enumeration
/// would run for hours.
pub fn brute_force(
    q: &Query,
    space: PlanSpace,
    objectives: Objectives,
    registry: &OperatorRegistry,
) -> Result<BruteForceOutcome> {
    let n = q.table_count();
    let limit = match (space, objectives) {
        (PlanSpace::Linear, Objectives::Time) => 10,
        (PlanSpace::Linear, Objectives::TimeBuffer) => 9,
        (PlanSpace::Bushy, Objectives::Time) => 8,
        (PlanSpace::Bushy, Objectives::TimeBuffer) => 7,
    };
    if n > limit {
        return Err(Error::TooLarge(format!(
            "exhaustive {space} enumeration is capped at {limit} tables, got {n}"
        )));
    }
    let ctx = BruteCtx::new(q, registry)?;
    Ok(match (space, objectives) {
        (PlanSpace::Linear, Objectives::Time) => linear_single(&ctx),
        (PlanSpace::Linear, Objectives::TimeBuffer) => linear_front(&ctx),
        (PlanSpace::Bushy, Objectives::Time) => {
            let (best_time, trees, plans) = bushy_single(&ctx, q.full_set());
            BruteForceOutcome::Single { best_time, trees, plans }
        }
        (PlanSpace::Bushy, Objectives::TimeBuffer) => {
            let (mut front, trees, plans) = bushy_front(&ctx, q.full_set());
            sort_front(&mut front);
            BruteForceOutcome::Front { front, trees, plans }
        }
    })
}

// Restricted linear enumeration: every join prefix of two or more tables
// must belong to `allowed`. A disallowed prefix can never be repaired by
// later joins, so pruning the branch is exact.
fn linear_single_restricted(ctx: &BruteCtx<'_>, allowed: &AdmissibleSets) -> f64 {
    struct Walk<'c, 'a, 'b> {
        ctx: &'c BruteCtx<'a>,
        allowed: &'b AdmissibleSets,
        best: f64,
    }
    impl Walk<'_, '_, '_> {
        fn go(&mut self, remaining: TableSet, cur: TableSet, cur_card: f64, cur_time: f64) {
            if remaining.is_empty() {
                if cur_time < self.best {
                    self.best = cur_time;
                }
                return;
            }
            for t in remaining.iter() {
                let next = cur.with(t);
                if !self.allowed.contains(next) {
                    continue;
                }
                let ncard = self.ctx.card(next);
                let node = self.ctx.cheapest_join_node(cur_card, self.ctx.q.cardinality(t), ncard);
                self.go(
                    remaining.without(t),
                    next,
                    ncard,
                    cur_time + self.ctx.scan_min[t] + node,
                );
            }
        }
    }
    let n = ctx.q.table_count();
    let full = ctx.q.full_set();
    let mut walk = Walk { ctx, allowed, best: f64::INFINITY };
    for t in 0..n {
        walk.go(full.without(t), TableSet::singleton(t), ctx.q.cardinality(t), ctx.scan_min[t]);
    }
    walk.best
}

// Restricted bushy enumeration: every internal node's table set must
// belong to `allowed`. Returns infinity when no tree qualifies.
fn bushy_single_restricted(ctx: &BruteCtx<'_>, allowed: &AdmissibleSets, s: TableSet) -> f64 {
    if s.len() == 1 {
        let t = s.min_table().expect("nonempty");
        return ctx.scan_min[t];
    }
    if !allowed.contains(s) {
        return f64::INFINITY;
    }
    let out = ctx.card(s);
    let mut best = f64::INFINITY;
    for left in s.subsets() {
        if left.is_empty() || left == s {
            continue;
        }
        let right = s.difference(left);
        let bl = bushy_single_restricted(ctx, allowed, left);
        if !bl.is_finite() {
            continue;
        }
        let br = bushy_single_restricted(ctx, allowed, right);
        if !br.is_finite() {
            continue;
        }
        let node = ctx.cheapest_join_node(ctx.card(left), ctx.card(right), out);
        let cand = bl + br + node;
        if cand < best {
            best = cand;
        }
    }
    best
}

/// Cheapest total time among plans whose every intermediate result lies
/// in `allowed`; the reference answer for what a single partition's DP
/// must find. Time-only, same size caps as `brute_force`.
pub fn brute_force_partition_best(
    q: &Query,
    space: PlanSpace,
    registry: &OperatorRegistry,
    allowed: &AdmissibleSets,
) -> Result<f64> {
    let n = q.table_count();
    let limit = match space {
        PlanSpace::Linear => 10,
        PlanSpace::Bushy => 8,
    };
    if n > limit {
        return Err(Error::TooLarge(format!(
            "exhaustive {space} enumeration is capped at {limit} tables, got {n}"
        )));
    }
    let ctx = BruteCtx::new(q, registry)?;
    let best = match space {
        PlanSpace::Linear => linear_single_restricted(&ctx, allowed),
        PlanSpace::Bushy => bushy_single_restricted(&ctx, allowed, q.full_set()),
    };
    if !best.is_finite() {
        return Err(Error::internal("no plan satisfies the partition's constraints"));
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::result_cardinality;
    use crate::partition::{adm_join_results, part_constraints};

    #[test]
    fn splitmix_reference_stream() {
        // First outputs for seed 1234567, from the published algorithm.
        let mut rng = SplitMix64::new(1234567);
        assert_eq!(rng.next_u64(), 6457827717110365317);
        assert_eq!(rng.next_u64(), 3203168211198807973);
        assert_eq!(rng.next_u64(), 9817491932198370423);

        let mut r = SplitMix64::new(42);
        let vals: Vec<f64> = (0..1000).map(|_| r.next_f64()).collect();
        assert!(vals.iter().all(|v| (0.0..1.0).contains(v)));
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        assert!((mean - 0.5).abs() < 0.05, "mean {mean} far from uniform");
    }

    #[test]
    fn star_query_shape_and_ranges() {
        let q = generate_star_query(8, 99).unwrap();
        assert_eq!(q.table_count(), 8);
        assert_eq!(q.edges().len(), 7);
        for e in q.edges() {
            assert_eq!(e.a, 0, "all edges touch the hub");
            let lo = 10.0 / q.cardinality(0).min(q.cardinality(e.b));
            assert!(e.selectivity >= lo && e.selectivity <= 1.0);
        }
        for t in 0..8 {
            let c = q.cardinality(t);
            assert!((10.0..=100000.0).contains(&c));
            assert_eq!(c, c.round(), "cardinalities are integral");
        }
        let again = generate_star_query(8, 99).unwrap();
        assert_eq!(&q, &again, "generation is deterministic");
        assert_ne!(generate_star_query(8, 100).unwrap(), q);
    }

    #[test]
    fn subset_cardinality_table_matches_direct_evaluation() {
        let q = generate_star_query(6, 7).unwrap();
        let reg = OperatorRegistry::default_model();
        let ctx = BruteCtx::new(&q, &reg).unwrap();
        for bits in 1..(1u64 << 6) {
            let s = TableSet::from_bits(bits);
            let direct = result_cardinality(&q, s).unwrap();
            let table = ctx.card(s);
            assert!((direct - table).abs() <= 1e-9 * direct.abs(), "set {s}: {direct} vs {table}");
        }
    }

    #[test]
    fn enumeration_counters_match_closed_forms() {
        // 3 scan-able tables, default model: 1 scan op, 3 join ops.
        let q = generate_star_query(4, 3).unwrap();
        let reg = OperatorRegistry::default_model();
        match brute_force(&q, PlanSpace::Linear, Objectives::Time, &reg).unwrap() {
            BruteForceOutcome::Single { trees, plans, .. } => {
                assert_eq!(trees, 24, "4! join orders");
                assert_eq!(plans, 24 * 27, "3 operator choices at each of 3 joins");
            }
            other => panic!("expected Single, got {other:?}"),
        }
        match brute_force(&q, PlanSpace::Bushy, Objectives::Time, &reg).unwrap() {
            BruteForceOutcome::Single { trees, plans, .. } => {
                // Ordered binary trees over 4 labeled leaves: 4! * Catalan(3).
                assert_eq!(trees, 120);
                assert_eq!(plans, 120 * 27);
            }
            other => panic!("expected Single, got {other:?}"),
        }
    }

    #[test]
    fn bushy_never_beats_itself_restricted_to_linear_shapes() {
        // The bushy optimum is at most the linear optimum: more trees to
        // choose from.
        let q = generate_star_query(6, 11).unwrap();
        let reg = OperatorRegistry::default_model();
        let lin = match brute_force(&q, PlanSpace::Linear, Objectives::Time, &reg).unwrap() {
            BruteForceOutcome::Single { best_time, .. } => best_time,
            _ => unreachable!(),
        };
        let bushy = match brute_force(&q, PlanSpace::Bushy, Objectives::Time, &reg).unwrap() {
            BruteForceOutcome::Single { best_time, .. } => best_time,
            _ => unreachable!(),
        };
        assert!(bushy <= lin + 1e-9 * lin);
    }

    #[test]
    fn front_is_mutually_nondominated_and_sorted() {
        let q = generate_star_query(5, 21).unwrap();
        let reg = OperatorRegistry::default_model();
        for space in [PlanSpace::Linear, PlanSpace::Bushy] {
            let BruteForceOutcome::Front { front, .. } =
                brute_force(&q, space, Objectives::TimeBuffer, &reg).unwrap()
            else {
                panic!("expected Front");
            };
            assert!(!front.is_empty());
            for (i, a) in front.iter().enumerate() {
                for (j, b) in front.iter().enumerate() {
                    if i != j {
                        assert!(!a.dominates(b), "{space}: front entry {i} dominates {j}");
                    }
                }
            }
            assert!(front.windows(2).all(|w| w[0].time() < w[1].time()));
        }
    }

    #[test]
    fn restricted_enumeration_with_all_sets_equals_unrestricted() {
        let q = generate_star_query(5, 31).unwrap();
        let reg = OperatorRegistry::default_model();
        for space in [PlanSpace::Linear, PlanSpace::Bushy] {
            let spec = PartitionSpec::new(0, 1, space, 5).unwrap();
            let constraints = part_constraints(&q, &spec).unwrap();
            let adm = adm_join_results(5, &constraints, space).unwrap();
            let restricted = brute_force_partition_best(&q, space, &reg, &adm).unwrap();
            let BruteForceOutcome::Single { best_time, .. } =
                brute_force(&q, space, Objectives::Time, &reg).unwrap()
            else {
                panic!("expected Single");
            };
            assert!((restricted - best_time).abs() <= 1e-9 * best_time);
        }
    }

    #[test]
    fn size_caps_are_enforced() {
        let q = generate_star_query(11, 1).unwrap();
        let reg = OperatorRegistry::default_model();
        assert!(matches!(
            brute_force(&q, PlanSpace::Linear, Objectives::Time, &reg),
            Err(Error::TooLarge(_))
        ));
        let q9 = generate_star_query(9, 1).unwrap();
        assert!(matches!(
            brute_force(&q9, PlanSpace::Bushy, Objectives::Time, &reg),
            Err(Error::TooLarge(_))
        ));
        assert!(brute_force(&q9, PlanSpace::Linear, Objectives::Time, &reg).is_ok());
    }
}
