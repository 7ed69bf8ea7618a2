use crate::error::{Error, Result};
use crate::query::Query;
use crate::table_set::TableSet;

/// Block size used by the block-nested-loop join, in tuples.
pub const BLOCK_SIZE: f64 = 100.0;

/// Which plan properties the optimizer minimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Objectives {
    /// Execution time only.
    Time,
    /// Execution time and peak buffer space, kept as a Pareto front.
    TimeBuffer,
}

impl Objectives {
    pub fn count(self) -> usize {
        match self {
            Objectives::Time => 1,
            Objectives::TimeBuffer => 2,
        }
    }

    pub fn from_count(count: usize) -> Result<Objectives> {
        match count {
            1 => Ok(Objectives::Time),
            2 => Ok(Objectives::TimeBuffer),
            other => Err(Error::invalid(format!("unsupported objective count {other}, expected 1 or 2"))),
        }
    }
}

/// Cost of a whole plan under the active objectives: `[time]` or
/// `[time, buffer]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostVector {
    vals: [f64; 2],
    len: u8,
}

impl CostVector {
    pub fn time_only(time: f64) -> CostVector {
        CostVector { vals: [time, 0.0], len: 1 }
    }

    pub fn time_buffer(time: f64, buffer: f64) -> CostVector {
        CostVector { vals: [time, buffer], len: 2 }
    }

    pub fn from_slice(vals: &[f64]) -> Result<CostVector> {
        match vals {
            [t] => Ok(CostVector::time_only(*t)),
            [t, b] => Ok(CostVector::time_buffer(*t, *b)),
            other => Err(Error::invalid(format!("cost vector must have 1 or 2 components, got {}", other.len()))),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.vals[..self.len as usize]
    }

    pub fn time(&self) -> f64 {
        self.vals[0]
    }

    /// Peak buffer component; None under the time-only objective.
    pub fn buffer(&self) -> Option<f64> {
        (self.len == 2).then_some(self.vals[1])
    }

    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Componentwise `self <= other`.
    pub fn dominates(&self, other: &CostVector) -> bool {
        debug_assert_eq!(self.len, other.len);
        self.values().iter().zip(other.values()).all(|(a, b)| a <= b)
    }

    /// Componentwise `self <= alpha * other`. With `alpha = 1` this is
    /// plain dominance; larger `alpha` dominates a margin around `other`.
    pub fn dominates_within(&self, other: &CostVector, alpha: f64) -> bool {
        debug_assert_eq!(self.len, other.len);
        self.values().iter().zip(other.values()).all(|(a, b)| *a <= alpha * b)
    }
}

/// Per-node resource demand of a physical operator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeCost {
    /// Time contribution of this node alone.
    pub time: f64,
    /// Buffer space held by this node while it runs.
    pub buffer: f64,
}

/// A physical scan implementation.
#[derive(Debug, Clone, Copy)]
pub struct ScanOperator {
    pub name: &'static str,
    /// Node cost as a function of the base table cardinality.
    pub cost: fn(card: f64) -> NodeCost,
}

/// A physical join implementation.
#[derive(Debug, Clone, Copy)]
pub struct JoinOperator {
    pub name: &'static str,
    /// Node cost as a function of outer input, inner input, and output
    /// cardinalities.
    pub cost: fn(left: f64, right: f64, out: f64) -> NodeCost,
}

fn scan_cost(card: f64) -> NodeCost {
    NodeCost { time: card, buffer: 0.0 }
}

fn hash_join_cost(left: f64, right: f64, out: f64) -> NodeCost {
    // Build on the left input, probe with the right.
    NodeCost { time: left + right + out, buffer: left }
}

fn sort_merge_join_cost(left: f64, right: f64, out: f64) -> NodeCost {
    // +2 keeps the log factor positive for tiny inputs.
    let time = left * (left + 2.0).log2() + right * (right + 2.0).log2() + out;
    NodeCost { time, buffer: left + right }
}

fn block_nested_loop_cost(left: f64, right: f64, out: f64) -> NodeCost {
    let time = left + (left / BLOCK_SIZE).ceil() * right + out;
    NodeCost { time, buffer: BLOCK_SIZE }
}

/// Named collection of physical operators available to the optimizer.
/// Master and workers resolve the same name so both sides price plans
/// identically.
#[derive(Debug, Clone)]
pub struct OperatorRegistry {
    name: &'static str,
    scan_ops: Vec<ScanOperator>,
    join_ops: Vec<JoinOperator>,
}

impl OperatorRegistry {
    /// Full operator set: one scan, hash join, sort-merge join, and
    /// block-nested-loop join.
    pub fn default_model() -> OperatorRegistry {
        OperatorRegistry {
            name: "default",
            scan_ops: vec![ScanOperator { name: "scan", cost: scan_cost }],
            join_ops: vec![
                JoinOperator { name: "hash", cost: hash_join_cost },
                JoinOperator { name: "sortmerge", cost: sort_merge_join_cost },
                JoinOperator { name: "bnl", cost: block_nested_loop_cost },
            ],
        }
    }

    /// Reduced set with hash join only; handy for tests where a single
    /// join operator keeps plan counts small.
    pub fn hash_only_model() -> OperatorRegistry {
        OperatorRegistry {
            name: "hash",
            scan_ops: vec![ScanOperator { name: "scan", cost: scan_cost }],
            join_ops: vec![JoinOperator { name: "hash", cost: hash_join_cost }],
        }
    }

    pub fn named(name: &str) -> Result<OperatorRegistry> {
        match name {
            "default" => Ok(OperatorRegistry::default_model()),
            "hash" => Ok(OperatorRegistry::hash_only_model()),
            other => Err(Error::invalid(format!("unknown cost model {other:?}, expected \"default\" or \"hash\""))),
        }
    }

    pub fn name(&self) -> &'static str {
        self.name
    }

    pub fn scan_ops(&self) -> &[ScanOperator] {
        &self.scan_ops
    }

    pub fn join_ops(&self) -> &[JoinOperator] {
        &self.join_ops
    }

    pub fn scan_node_cost(&self, op: usize, card: f64) -> Result<NodeCost> {
        let sc = self
            .scan_ops
            .get(op)
            .ok_or_else(|| Error::invalid(format!("scan operator id {op} out of range for model {:?}", self.name)))?;
        Ok((sc.cost)(card))
    }

    pub fn join_node_cost(&self, op: usize, left: f64, right: f64, out: f64) -> Result<NodeCost> {
        let jo = self
            .join_ops
            .get(op)
            .ok_or_else(|| Error::invalid(format!("join operator id {op} out of range for model {:?}", self.name)))?;
        Ok((jo.cost)(left, right, out))
    }
}

/// Estimated cardinality of joining exactly the tables in `s`: the product
/// of base cardinalities times the selectivities of all edges inside `s`.
pub fn result_cardinality(q: &Query, s: TableSet) -> Result<f64> {
    if s.is_empty() {
        return Err(Error::invalid("result cardinality of the empty table set is undefined"));
    }
    if !s.is_subset_of(q.full_set()) {
        return Err(Error::invalid(format!("table set {s} out of range for a {}-table query", q.table_count())));
    }
    let mut card = 1.0;
    for t in s.iter() {
        card *= q.cardinality(t);
    }
    for e in q.edges() {
        if s.contains(e.a) && s.contains(e.b) {
            card *= e.selectivity;
        }
    }
    Ok(card)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain_query() -> Query {
        // 0 -(0.1)- 1 -(0.01)- 2, no edge between 0 and 2.
        Query::new(vec![100.0, 1000.0, 50.0], vec![(0, 1, 0.1), (1, 2, 0.01)]).unwrap()
    }

    #[test]
    fn cardinality_multiplies_edges_inside_set() {
        let q = chain_query();
        let s01 = TableSet::from_tables([0, 1]);
        let s02 = TableSet::from_tables([0, 2]);
        let all = q.full_set();
        assert_eq!(result_cardinality(&q, s01).unwrap(), 100.0 * 1000.0 * 0.1);
        // No edge between 0 and 2: cross product.
        assert_eq!(result_cardinality(&q, s02).unwrap(), 100.0 * 50.0);
        assert_eq!(result_cardinality(&q, all).unwrap(), 100.0 * 1000.0 * 50.0 * 0.1 * 0.01);
        assert_eq!(result_cardinality(&q, TableSet::singleton(1)).unwrap(), 1000.0);
    }

    #[test]
    fn cardinality_rejects_bad_sets() {
        let q = chain_query();
        assert!(result_cardinality(&q, TableSet::empty()).is_err());
        assert!(result_cardinality(&q, TableSet::singleton(3)).is_err());
    }

    #[test]
    fn join_operator_formulas() {
        let reg = OperatorRegistry::default_model();
        let hash = reg.join_node_cost(0, 100.0, 100.0, 150.0).unwrap();
        assert_eq!(hash.time, 350.0);
        assert_eq!(hash.buffer, 100.0);

        let sm = reg.join_node_cost(1, 2.0, 6.0, 3.0).unwrap();
        assert_eq!(sm.time, 2.0 * 4.0f64.log2() + 6.0 * 8.0f64.log2() + 3.0);
        assert_eq!(sm.buffer, 8.0);

        // 250 outer tuples -> 3 blocks, each scanning the 40 inner tuples.
        let bnl = reg.join_node_cost(2, 250.0, 40.0, 90.0).unwrap();
        assert_eq!(bnl.time, 250.0 + 3.0 * 40.0 + 90.0);
        assert_eq!(bnl.buffer, BLOCK_SIZE);
    }

    #[test]
    fn scan_cost_is_cardinality() {
        let reg = OperatorRegistry::default_model();
        let c = reg.scan_node_cost(0, 420.0).unwrap();
        assert_eq!(c.time, 420.0);
        assert_eq!(c.buffer, 0.0);
    }

    #[test]
    fn registry_lookup() {
        assert_eq!(OperatorRegistry::named("default").unwrap().join_ops().len(), 3);
        assert_eq!(OperatorRegistry::named("hash").unwrap().join_ops().len(), 1);
        assert!(OperatorRegistry::named("nope").is_err());
        assert!(OperatorRegistry::default_model().join_node_cost(3, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn dominance_rules() {
        let a = CostVector::time_buffer(10.0, 50.0);
        let b = CostVector::time_buffer(12.0, 50.0);
        let c = CostVector::time_buffer(9.0, 400.0);
        assert!(a.dominates(&b));
        assert!(!b.dominates(&a));
        assert!(!a.dominates(&c) && !c.dominates(&a));
        assert!(a.dominates(&a), "dominance is reflexive");
        assert!(a.dominates_within(&c, 10.0), "50 <= 10*400 and 10 <= 10*9");
        assert!(!a.dominates_within(&c, 1.0));

        let x = CostVector::time_only(5.0);
        let y = CostVector::time_only(5.0);
        assert!(x.dominates_within(&y, 1.0), "equal cost counts as dominated, incumbent wins ties");
    }
}
