use std::fmt;
use std::str::FromStr;

use crate::error::Error;
use crate::table_set::TableSet;

/// Shape of the plan search space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PlanSpace {
    /// Left-deep trees: every join's inner (right) operand is a base table.
    Linear,
    /// All binary trees over the base tables.
    Bushy,
}

impl fmt::Display for PlanSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PlanSpace::Linear => write!(f, "linear"),
            PlanSpace::Bushy => write!(f, "bushy"),
        }
    }
}

impl FromStr for PlanSpace {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "linear" => Ok(PlanSpace::Linear),
            "bushy" => Ok(PlanSpace::Bushy),
            other => Err(Error::invalid(format!("unknown plan space {other:?}, expected \"linear\" or \"bushy\""))),
        }
    }
}

/// A join-order constraint assigned to a partition. Workers only build
/// intermediate results whose table sets the constraint does not exclude.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JoinOrderConstraint {
    /// `x` before `y`: in a left-deep plan, table `x` enters the join
    /// sequence before table `y`.
    Linear { x: usize, y: usize },
    /// `x` not after `y` and `z`: no subtree of the plan may join `y`
    /// with `z` while leaving `x` out.
    Bushy { x: usize, y: usize, z: usize },
}

impl JoinOrderConstraint {
    /// Whether `s` is ruled out as an intermediate result.
    ///
    /// Linear: a set containing `y` but not `x` cannot appear as a prefix of
    /// a join sequence that places `x` first, except for the base table `{y}`
    /// itself, which is still needed as an inner operand.
    /// Bushy: a set containing both `y` and `z` but not `x` would join them
    /// behind `x`'s back.
    pub fn excludes(&self, s: TableSet) -> bool {
        match *self {
            JoinOrderConstraint::Linear { x, y } => s.contains(y) && !s.contains(x) && s.len() >= 2,
            JoinOrderConstraint::Bushy { x, y, z } => s.contains(y) && s.contains(z) && !s.contains(x),
        }
    }
}

impl fmt::Display for JoinOrderConstraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            JoinOrderConstraint::Linear { x, y } => write!(f, "{x} before {y}"),
            JoinOrderConstraint::Bushy { x, y, z } => write!(f, "{x} not after {y}|{z}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(tables: &[usize]) -> TableSet {
        TableSet::from_tables(tables.iter().copied())
    }

    #[test]
    fn linear_excludes() {
        let c = JoinOrderConstraint::Linear { x: 0, y: 1 };
        assert!(c.excludes(set(&[1, 2])));
        assert!(c.excludes(set(&[1, 3, 4])));
        assert!(!c.excludes(set(&[1])), "base table {{y}} stays usable as inner operand");
        assert!(!c.excludes(set(&[0, 1])));
        assert!(!c.excludes(set(&[0, 1, 2])));
        assert!(!c.excludes(set(&[2, 3])));
        assert!(!c.excludes(TableSet::empty()));
    }

    #[test]
    fn bushy_excludes() {
        let c = JoinOrderConstraint::Bushy { x: 0, y: 1, z: 2 };
        assert!(c.excludes(set(&[1, 2])));
        assert!(c.excludes(set(&[1, 2, 3])));
        assert!(!c.excludes(set(&[0, 1, 2])));
        assert!(!c.excludes(set(&[1])));
        assert!(!c.excludes(set(&[2])));
        assert!(!c.excludes(set(&[1, 3])));
    }

    #[test]
    fn never_excludes_sets_containing_x() {
        let lin = JoinOrderConstraint::Linear { x: 2, y: 5 };
        let bush = JoinOrderConstraint::Bushy { x: 2, y: 5, z: 7 };
        for bits in 0..256u64 {
            let s = TableSet::from_bits(bits).union(TableSet::singleton(2));
            assert!(!lin.excludes(s));
            assert!(!bush.excludes(s));
        }
    }

    #[test]
    fn plan_space_parse_and_display() {
        assert_eq!("linear".parse::<PlanSpace>().unwrap(), PlanSpace::Linear);
        assert_eq!("bushy".parse::<PlanSpace>().unwrap(), PlanSpace::Bushy);
        assert!("Linear".parse::<PlanSpace>().is_err());
        assert_eq!(PlanSpace::Bushy.to_string(), "bushy");
    }
}
