use crate::error::{Error, Result};
use crate::table_set::{TableSet, MAX_TABLES};

/// Join predicate between two tables with its estimated selectivity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JoinEdge {
    /// Lower table index.
    pub a: usize,
    /// Higher table index.
    pub b: usize,
    /// Fraction of the cross product surviving the predicate, in (0, 1].
    pub selectivity: f64,
}

/// A join query: base table cardinalities plus a join graph with
/// per-edge selectivities. Table pairs without an edge combine as a
/// cross product (selectivity 1.0).
#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    cardinalities: Vec<f64>,
    edges: Vec<JoinEdge>,
    // Dense n*n selectivity lookup, 1.0 where no edge exists.
    sel: Vec<f64>,
}

impl Query {
    /// Builds a query over `cardinalities.len()` tables. Edges are given as
    /// `(a, b, selectivity)` in either index order; duplicates are rejected.
    pub fn new(cardinalities: Vec<f64>, edges: Vec<(usize, usize, f64)>) -> Result<Query> {
        let n = cardinalities.len();
        if n < 2 {
            return Err(Error::invalid(format!("need at least 2 tables, got {n}")));
        }
        if n > MAX_TABLES {
            return Err(Error::invalid(format!("at most {MAX_TABLES} tables supported, got {n}")));
        }
        for (i, &c) in cardinalities.iter().enumerate() {
            if !(c.is_finite() && c > 0.0) {
                return Err(Error::invalid(format!("cardinality of table {i} must be finite and positive, got {c}")));
            }
        }
        let mut sel = vec![1.0; n * n];
        let mut normalized = Vec::with_capacity(edges.len());
        for (a, b, s) in edges {
            if a >= n || b >= n {
                return Err(Error::invalid(format!("edge ({a},{b}) references a table out of range for n={n}")));
            }
            if a == b {
                return Err(Error::invalid(format!("edge ({a},{b}) joins a table with itself")));
            }
            if !(s.is_finite() && s > 0.0 && s <= 1.0) {
                return Err(Error::invalid(format!("selectivity of edge ({a},{b}) must be in (0,1], got {s}")));
            }
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            if sel[lo * n + hi] != 1.0 {
                return Err(Error::invalid(format!("duplicate edge ({lo},{hi})")));
            }
            sel[lo * n + hi] = s;
            sel[hi * n + lo] = s;
            normalized.push(JoinEdge { a: lo, b: hi, selectivity: s });
        }
        normalized.sort_by_key(|e| (e.a, e.b));
        Ok(Query { cardinalities, edges: normalized, sel })
    }

    pub fn table_count(&self) -> usize {
        self.cardinalities.len()
    }

    pub fn cardinality(&self, table: usize) -> f64 {
        self.cardinalities[table]
    }

    pub fn cardinalities(&self) -> &[f64] {
        &self.cardinalities
    }

    /// Edges normalized to `a < b` and sorted by `(a, b)`.
    pub fn edges(&self) -> &[JoinEdge] {
        &self.edges
    }

    /// Selectivity between two tables; 1.0 when no edge connects them.
    pub fn selectivity(&self, a: usize, b: usize) -> f64 {
        self.sel[a * self.table_count() + b]
    }

    pub fn full_set(&self) -> TableSet {
        TableSet::full(self.table_count())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalizes_and_sorts_edges() {
        let q = Query::new(vec![10.0, 20.0, 30.0], vec![(2, 0, 0.5), (1, 2, 0.25)]).unwrap();
        assert_eq!(q.table_count(), 3);
        let pairs: Vec<(usize, usize)> = q.edges().iter().map(|e| (e.a, e.b)).collect();
        assert_eq!(pairs, vec![(0, 2), (1, 2)]);
        assert_eq!(q.selectivity(0, 2), 0.5);
        assert_eq!(q.selectivity(2, 0), 0.5);
        assert_eq!(q.selectivity(0, 1), 1.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(Query::new(vec![10.0], vec![]).is_err());
        assert!(Query::new(vec![10.0, 0.0], vec![]).is_err());
        assert!(Query::new(vec![10.0, -3.0], vec![]).is_err());
        assert!(Query::new(vec![10.0, 20.0], vec![(0, 2, 0.5)]).is_err());
        assert!(Query::new(vec![10.0, 20.0], vec![(1, 1, 0.5)]).is_err());
        assert!(Query::new(vec![10.0, 20.0], vec![(0, 1, 0.0)]).is_err());
        assert!(Query::new(vec![10.0, 20.0], vec![(0, 1, 1.5)]).is_err());
        assert!(Query::new(vec![10.0, 20.0], vec![(0, 1, 0.5), (1, 0, 0.5)]).is_err());
    }

    #[test]
    fn selectivity_one_is_allowed() {
        let q = Query::new(vec![10.0, 10.0], vec![(0, 1, 1.0)]).unwrap();
        assert_eq!(q.selectivity(0, 1), 1.0);
        assert_eq!(q.edges().len(), 1);
    }
}
