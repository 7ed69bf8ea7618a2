use crate::constraint::{JoinOrderConstraint, PlanSpace};
use crate::error::{Error, Result};
use crate::query::Query;
use crate::table_set::TableSet;

/// Identifies one partition of the search space: which slice this worker
/// owns (`part_id`), how many slices exist (`num_parts`, a power of two),
/// and the plan shape being optimized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PartitionSpec {
    pub part_id: u64,
    pub num_parts: u64,
    pub space: PlanSpace,
}

/// Largest number of constraints that still leaves every constrained
/// table group disjoint: one per table pair (linear) or triple (bushy).
pub fn max_constraints(n: usize, space: PlanSpace) -> u32 {
    match space {
        PlanSpace::Linear => (n / 2) as u32,
        PlanSpace::Bushy => (n / 3) as u32,
    }
}

/// Largest valid worker count for an n-table query: two choices per
/// constraint.
pub fn max_workers(n: usize, space: PlanSpace) -> u64 {
    1u64 << max_constraints(n, space)
}

/// Largest power of two not exceeding `m`.
pub fn round_down_pow2(m: u64) -> u64 {
    assert!(m >= 1);
    1u64 << (63 - m.leading_zeros())
}

/// Worker count actually used for a request: rounded down to a power of
/// two and capped at the bound for this query size and space.
pub fn effective_workers(requested: u64, n: usize, space: PlanSpace) -> u64 {
    round_down_pow2(requested).min(max_workers(n, space))
}

impl PartitionSpec {
    pub fn new(part_id: u64, num_parts: u64, space: PlanSpace, n: usize) -> Result<PartitionSpec> {
        if num_parts == 0 || !num_parts.is_power_of_two() {
            return Err(Error::invalid(format!("num_parts must be a power of two, got {num_parts}")));
        }
        if num_parts > max_workers(n, space) {
            return Err(Error::invalid(format!(
                "num_parts {num_parts} exceeds the maximum of {} for {n} tables in the {space} space",
                max_workers(n, space)
            )));
        }
        if part_id >= num_parts {
            return Err(Error::invalid(format!("part_id {part_id} out of range for {num_parts} partitions")));
        }
        Ok(PartitionSpec { part_id, num_parts, space })
    }

    /// Number of join-order constraints this partition carries.
    pub fn constraint_count(&self) -> u32 {
        self.num_parts.trailing_zeros()
    }
}

/// The constraint for table group `group`, direction chosen by `swap`.
///
/// Linear groups are the pairs (2i, 2i+1): `swap = false` puts table 2i
/// before 2i+1. Bushy groups are the triples (3i, 3i+1, 3i+2): the table
/// picked by `swap` (3i or 3i+1) may not come after the other two.
pub fn constraint_for(space: PlanSpace, group: usize, swap: bool, n: usize) -> Result<JoinOrderConstraint> {
    if group >= max_constraints(n, space) as usize {
        return Err(Error::invalid(format!(
            "constraint group {group} out of range for {n} tables in the {space} space"
        )));
    }
    Ok(match space {
        PlanSpace::Linear => {
            let (a, b) = (2 * group, 2 * group + 1);
            if swap {
                JoinOrderConstraint::Linear { x: b, y: a }
            } else {
                JoinOrderConstraint::Linear { x: a, y: b }
            }
        }
        PlanSpace::Bushy => {
            let (a, b, c) = (3 * group, 3 * group + 1, 3 * group + 2);
            if swap {
                JoinOrderConstraint::Bushy { x: b, y: a, z: c }
            } else {
                JoinOrderConstraint::Bushy { x: a, y: b, z: c }
            }
        }
    })
}

/// The constraints a worker derives from its partition id: bit i of
/// `part_id` (least significant first) picks the direction of the
/// constraint on table group i.
pub fn part_constraints(q: &Query, spec: &PartitionSpec) -> Result<Vec<JoinOrderConstraint>> {
    let n = q.table_count();
    // Re-validate against this query; the spec may have been built
    // elsewhere (e.g. decoded from the wire).
    let spec = PartitionSpec::new(spec.part_id, spec.num_parts, spec.space, n)?;
    let l = spec.constraint_count() as usize;
    (0..l)
        .map(|i| constraint_for(spec.space, i, (spec.part_id >> i) & 1 == 1, n))
        .collect()
}

/// Closed-form size of one partition's admissible set family, including
/// the empty set: each of the `l` constrained groups keeps 3 of 4 (linear)
/// or 7 of 8 (bushy) local subsets, every leftover table contributes a
/// free factor of 2.
pub fn count_admissible(n: usize, l: u32, space: PlanSpace) -> Result<u64> {
    if l > max_constraints(n, space) {
        return Err(Error::invalid(format!(
            "{l} constraints exceed the maximum of {} for {n} tables in the {space} space",
            max_constraints(n, space)
        )));
    }
    let (base, per_group) = match space {
        PlanSpace::Linear => (3u64, 2usize),
        PlanSpace::Bushy => (7u64, 3usize),
    };
    let free = (n - per_group * l as usize) as u32;
    let constrained = base.checked_pow(l).ok_or_else(|| Error::TooLarge("admissible set count overflows u64".into()))?;
    if free >= 64 {
        return Err(Error::TooLarge("admissible set count overflows u64".into()));
    }
    constrained
        .checked_mul(1u64 << free)
        .ok_or_else(|| Error::TooLarge("admissible set count overflows u64".into()))
}

/// Bushy constraint data precomputed for split generation: the subset
/// `{y, z}` a left operand may not equal locally, and the full triple mask.
#[derive(Debug, Clone, Copy)]
pub(crate) struct BushyTriple {
    pub yz: TableSet,
}

/// One table group as seen by the bushy split generator.
#[derive(Debug, Clone, Copy)]
pub(crate) struct BushyGroup {
    pub mask: TableSet,
    pub constraint: Option<BushyTriple>,
}

/// Groups the tables of `scope` for bushy split generation: each
/// constraint whose triple lies inside `scope` forms one constrained
/// group, every other table of `scope` is its own free group. Groups are
/// ordered by descending lowest table so that products built outer-first
/// come out in ascending bit order.
pub(crate) fn bushy_groups(scope: TableSet, constraints: &[JoinOrderConstraint]) -> Result<Vec<BushyGroup>> {
    let mut groups = Vec::new();
    let mut covered = TableSet::empty();
    for c in constraints {
        let JoinOrderConstraint::Bushy { x, y, z } = *c else {
            return Err(Error::invalid(format!("constraint \"{c}\" is not a bushy constraint")));
        };
        let mask = TableSet::from_tables([x, y, z]);
        if mask.is_disjoint(scope) {
            continue;
        }
        if !mask.is_subset_of(scope) {
            return Err(Error::invalid(format!("constraint \"{c}\" only partially overlaps the scope {scope}")));
        }
        if !mask.is_disjoint(covered) {
            return Err(Error::invalid(format!("constraint \"{c}\" overlaps another constrained group")));
        }
        covered = covered.union(mask);
        groups.push(BushyGroup {
            mask,
            constraint: Some(BushyTriple { yz: TableSet::from_tables([y, z]) }),
        });
    }
    for t in scope.difference(covered).iter() {
        groups.push(BushyGroup { mask: TableSet::singleton(t), constraint: None });
    }
    groups.sort_by_key(|g| std::cmp::Reverse(g.mask.min_table()));
    Ok(groups)
}

enum GroupKind {
    Free,
    LinearPair { y: usize },
    BushyTriple { y: usize, z: usize },
}

struct Group {
    mask: TableSet,
    kind: GroupKind,
}

/// Splits the tables into the constrained groups plus one free group per
/// leftover table. Constraint table groups must be pairwise disjoint.
fn group_layout(n: usize, constraints: &[JoinOrderConstraint], space: PlanSpace) -> Result<Vec<Group>> {
    let mut groups = Vec::new();
    let mut covered = TableSet::empty();
    for c in constraints {
        let (mask, kind) = match (*c, space) {
            (JoinOrderConstraint::Linear { x, y }, PlanSpace::Linear) => {
                (TableSet::from_tables([x, y]), GroupKind::LinearPair { y })
            }
            (JoinOrderConstraint::Bushy { x, y, z }, PlanSpace::Bushy) => {
                (TableSet::from_tables([x, y, z]), GroupKind::BushyTriple { y, z })
            }
            (c, space) => {
                return Err(Error::invalid(format!("constraint \"{c}\" does not fit the {space} space")));
            }
        };
        if !mask.is_subset_of(TableSet::full(n)) {
            return Err(Error::invalid(format!("constraint \"{c}\" references a table out of range for n={n}")));
        }
        if !mask.is_disjoint(covered) {
            return Err(Error::invalid(format!("constraint \"{c}\" overlaps another constrained group")));
        }
        covered = covered.union(mask);
        groups.push(Group { mask, kind });
    }
    for t in TableSet::full(n).difference(covered).iter() {
        groups.push(Group { mask: TableSet::singleton(t), kind: GroupKind::Free });
    }
    Ok(groups)
}

/// The local subsets a group contributes to the admissible family, in
/// ascending bit order. A linear pair drops `{y}` (`y` alone could never
/// be a join prefix when `x` must come first); a bushy triple drops
/// `{y, z}` (joining them without `x` is exactly what the constraint
/// forbids).
fn group_choices(group: &Group) -> Vec<TableSet> {
    match group.kind {
        GroupKind::Free => group.mask.subsets().collect(),
        GroupKind::LinearPair { y } => {
            let banned = TableSet::singleton(y);
            group.mask.subsets().filter(|s| *s != banned).collect()
        }
        GroupKind::BushyTriple { y, z } => {
            let banned = TableSet::from_tables([y, z]);
            group.mask.subsets().filter(|s| *s != banned).collect()
        }
    }
}

/// One partition's admissible intermediate results, indexed by set size.
#[derive(Debug)]
pub struct AdmissibleSets {
    n: usize,
    by_size: Vec<Vec<TableSet>>,
    total: u64,
}

impl AdmissibleSets {
    /// Admissible sets of exactly `k` tables, ascending by bit pattern.
    pub fn of_size(&self, k: usize) -> &[TableSet] {
        &self.by_size[k]
    }

    /// Number of admissible sets, including the empty set.
    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn table_count(&self) -> usize {
        self.n
    }

    pub fn contains(&self, s: TableSet) -> bool {
        s.len() <= self.n && self.by_size[s.len()].binary_search(&s).is_ok()
    }

    /// All admissible sets, grouped by size, ascending within each size.
    pub fn iter(&self) -> impl Iterator<Item = TableSet> + '_ {
        self.by_size.iter().flatten().copied()
    }
}

/// Materializes the admissible join results for one partition: the
/// Cartesian product of each group's local subsets. Constraints live on
/// disjoint groups, so the product enumerates every set no constraint
/// excludes, exactly once.
pub fn adm_join_results(n: usize, constraints: &[JoinOrderConstraint], space: PlanSpace) -> Result<AdmissibleSets> {
    let mut groups = group_layout(n, constraints, space)?;
    // Emitting higher-order groups in the outer product positions yields
    // ascending bit patterns directly when group bit ranges do not
    // interleave, which is the layout part_constraints produces.
    groups.sort_by_key(|g| std::cmp::Reverse(g.mask.min_table()));

    let mut acc = vec![TableSet::empty()];
    for g in &groups {
        let choices = group_choices(g);
        let mut next = Vec::with_capacity(acc.len() * choices.len());
        for &prefix in &acc {
            for &c in &choices {
                next.push(prefix.union(c));
            }
        }
        acc = next;
    }
    if !acc.windows(2).all(|w| w[0] < w[1]) {
        acc.sort_unstable();
    }

    let total = acc.len() as u64;
    let mut by_size = vec![Vec::new(); n + 1];
    for s in acc {
        by_size[s.len()].push(s);
    }
    Ok(AdmissibleSets { n, by_size, total })
}
