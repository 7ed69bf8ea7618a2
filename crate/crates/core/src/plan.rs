use std::fmt;
use std::sync::Arc;

use crate::cost::{result_cardinality, CostVector, NodeCost, Objectives, OperatorRegistry};
use crate::error::{Error, Result};
use crate::query::Query;
use crate::table_set::TableSet;

/// Node of a physical plan tree. Children are shared, since dynamic
/// programming reuses the same subplan in many parents.
#[derive(Debug, Clone)]
pub enum PlanNode {
    Scan { table: usize, op: usize },
    Join { op: usize, left: Arc<Plan>, right: Arc<Plan> },
}

/// A physical plan for joining `result_set`, annotated with its estimated
/// output cardinality and total cost. Cardinality and cost are pure
/// functions of the tree, the query, and the operator registry, so a plan
/// can be shipped as its tree alone and re-priced on the other side.
#[derive(Debug, Clone)]
pub struct Plan {
    pub node: PlanNode,
    pub result_set: TableSet,
    pub result_card: f64,
    pub cost: CostVector,
}

/// Total cost of a join node from its children's totals and its own
/// node cost: time adds up, buffer is the maximum held at any one node.
pub(crate) fn combined_cost(
    left: &CostVector,
    right: &CostVector,
    node: NodeCost,
    objectives: Objectives,
) -> CostVector {
    let time = left.time() + right.time() + node.time;
    match objectives {
        Objectives::Time => CostVector::time_only(time),
        Objectives::TimeBuffer => {
            let buffer = node
                .buffer
                .max(left.buffer().unwrap_or(0.0))
                .max(right.buffer().unwrap_or(0.0));
            CostVector::time_buffer(time, buffer)
        }
    }
}

pub(crate) fn scan_cost_vector(node: NodeCost, objectives: Objectives) -> CostVector {
    match objectives {
        Objectives::Time => CostVector::time_only(node.time),
        Objectives::TimeBuffer => CostVector::time_buffer(node.time, node.buffer),
    }
}

impl Plan {
    /// Leaf plan scanning one base table.
    pub fn scan(
        q: &Query,
        table: usize,
        op: usize,
        registry: &OperatorRegistry,
        objectives: Objectives,
    ) -> Result<Plan> {
        if table >= q.table_count() {
            return Err(Error::invalid(format!("table {table} out of range for a {}-table query", q.table_count())));
        }
        let card = q.cardinality(table);
        let node = registry.scan_node_cost(op, card)?;
        Ok(Plan {
            node: PlanNode::Scan { table, op },
            result_set: TableSet::singleton(table),
            result_card: card,
            cost: scan_cost_vector(node, objectives),
        })
    }

    /// Join of two disjoint subplans, priced from scratch.
    pub fn join(
        q: &Query,
        left: Arc<Plan>,
        right: Arc<Plan>,
        op: usize,
        registry: &OperatorRegistry,
        objectives: Objectives,
    ) -> Result<Plan> {
        if !left.result_set.is_disjoint(right.result_set) {
            return Err(Error::invalid(format!(
                "join operands overlap: {} and {}",
                left.result_set, right.result_set
            )));
        }
        let result_set = left.result_set.union(right.result_set);
        let result_card = result_cardinality(q, result_set)?;
        let node = registry.join_node_cost(op, left.result_card, right.result_card, result_card)?;
        let cost = combined_cost(&left.cost, &right.cost, node, objectives);
        Ok(Plan { node: PlanNode::Join { op, left, right }, result_set, result_card, cost })
    }

    /// Join assembled by the DP engine, which has already computed the
    /// output cardinality and total cost while deciding whether to keep it.
    pub(crate) fn join_precosted(
        left: Arc<Plan>,
        right: Arc<Plan>,
        op: usize,
        result_set: TableSet,
        result_card: f64,
        cost: CostVector,
    ) -> Plan {
        debug_assert!(left.result_set.is_disjoint(right.result_set));
        debug_assert_eq!(left.result_set.union(right.result_set), result_set);
        Plan { node: PlanNode::Join { op, left, right }, result_set, result_card, cost }
    }

    /// Whether every join in the tree has a base table as its inner
    /// (right) operand.
    pub fn is_left_deep(&self) -> bool {
        match &self.node {
            PlanNode::Scan { .. } => true,
            PlanNode::Join { left, right, .. } => {
                matches!(right.node, PlanNode::Scan { .. }) && left.is_left_deep()
            }
        }
    }

    /// Prefix text form: `S(table,op)` for scans, `J(op,left,right)` for
    /// joins. Compact, unambiguous, and cheap to parse on the master.
    pub fn to_prefix(&self) -> String {
        let mut out = String::new();
        self.write_prefix(&mut out)
            .expect("writing to a String cannot fail");
        out
    }

    fn write_prefix(&self, out: &mut String) -> fmt::Result {
        use fmt::Write;
        match &self.node {
            PlanNode::Scan { table, op } => write!(out, "S({table},{op})"),
            PlanNode::Join { op, left, right } => {
                write!(out, "J({op},")?;
                left.write_prefix(out)?;
                out.push(',');
                right.write_prefix(out)?;
                out.push(')');
                Ok(())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_table_query() -> Query {
        Query::new(vec![100.0, 100.0], vec![(0, 1, 0.015)]).unwrap()
    }

    #[test]
    fn scan_and_join_costs() {
        let q = two_table_query();
        let reg = OperatorRegistry::default_model();
        let obj = Objectives::TimeBuffer;
        let s0 = Arc::new(Plan::scan(&q, 0, 0, &reg, obj).unwrap());
        let s1 = Arc::new(Plan::scan(&q, 1, 0, &reg, obj).unwrap());
        assert_eq!(s0.cost.values(), &[100.0, 0.0]);

        // Hash join: 100 + 100 + 150 node time on top of two 100-tuple scans.
        let j = Plan::join(&q, s0.clone(), s1.clone(), 0, &reg, obj).unwrap();
        assert_eq!(j.result_card, 150.0);
        assert_eq!(j.cost.values(), &[550.0, 100.0]);

        // Same tree under time-only costing.
        let s0t = Arc::new(Plan::scan(&q, 0, 0, &reg, Objectives::Time).unwrap());
        let s1t = Arc::new(Plan::scan(&q, 1, 0, &reg, Objectives::Time).unwrap());
        let jt = Plan::join(&q, s0t, s1t, 0, &reg, Objectives::Time).unwrap();
        assert_eq!(jt.cost.values(), &[550.0]);
    }

    #[test]
    fn join_rejects_overlapping_operands() {
        let q = two_table_query();
        let reg = OperatorRegistry::default_model();
        let s0 = Arc::new(Plan::scan(&q, 0, 0, &reg, Objectives::Time).unwrap());
        assert!(Plan::join(&q, s0.clone(), s0, 0, &reg, Objectives::Time).is_err());
    }

    #[test]
    fn prefix_form_and_shape() {
        let q = Query::new(vec![10.0, 20.0, 30.0, 40.0], vec![]).unwrap();
        let reg = OperatorRegistry::default_model();
        let obj = Objectives::Time;
        let scan = |t: usize| Arc::new(Plan::scan(&q, t, 0, &reg, obj).unwrap());

        let left_deep = Plan::join(
            &q,
            Arc::new(Plan::join(&q, scan(0), scan(1), 0, &reg, obj).unwrap()),
            scan(2),
            2,
            &reg,
            obj,
        )
        .unwrap();
        assert!(left_deep.is_left_deep());
        assert_eq!(left_deep.to_prefix(), "J(2,J(0,S(0,0),S(1,0)),S(2,0))");

        let bushy = Plan::join(
            &q,
            Arc::new(Plan::join(&q, scan(0), scan(1), 0, &reg, obj).unwrap()),
            Arc::new(Plan::join(&q, scan(2), scan(3), 1, &reg, obj).unwrap()),
            0,
            &reg,
            obj,
        )
        .unwrap();
        assert!(!bushy.is_left_deep());
        assert_eq!(bushy.to_prefix(), "J(0,J(0,S(0,0),S(1,0)),J(1,S(2,0),S(3,0)))");
    }
}
