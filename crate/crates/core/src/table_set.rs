use std::fmt;

/// Set of table indices encoded as a u64 bitmask. Table `i` is bit `i`,
/// which caps queries at 64 tables; the optimizer enforces far smaller
/// bounds long before that limit matters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct TableSet(u64);

/// Largest table index representable in a `TableSet`.
pub const MAX_TABLES: usize = 64;

impl TableSet {
    pub const fn empty() -> Self {
        TableSet(0)
    }

    /// Set {0, 1, .., n-1}.
    pub fn full(n: usize) -> Self {
        assert!(n <= MAX_TABLES, "table count {n} exceeds {MAX_TABLES}");
        if n == MAX_TABLES {
            TableSet(u64::MAX)
        } else {
            TableSet((1u64 << n) - 1)
        }
    }

    pub fn singleton(table: usize) -> Self {
        assert!(table < MAX_TABLES, "table index {table} exceeds {MAX_TABLES}");
        TableSet(1u64 << table)
    }

    pub const fn from_bits(bits: u64) -> Self {
        TableSet(bits)
    }

    pub const fn bits(self) -> u64 {
        self.0
    }

    pub fn from_tables(tables: impl IntoIterator<Item = usize>) -> Self {
        tables
            .into_iter()
            .fold(TableSet::empty(), |s, t| s.union(TableSet::singleton(t)))
    }

    pub const fn contains(self, table: usize) -> bool {
        table < MAX_TABLES && self.0 & (1u64 << table) != 0
    }

    pub const fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub const fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub const fn union(self, other: TableSet) -> TableSet {
        TableSet(self.0 | other.0)
    }

    pub const fn intersect(self, other: TableSet) -> TableSet {
        TableSet(self.0 & other.0)
    }

    /// Elements of `self` not in `other`.
    pub const fn difference(self, other: TableSet) -> TableSet {
        TableSet(self.0 & !other.0)
    }

    pub fn with(self, table: usize) -> TableSet {
        self.union(TableSet::singleton(table))
    }

    pub fn without(self, table: usize) -> TableSet {
        self.difference(TableSet::singleton(table))
    }

    pub const fn is_subset_of(self, other: TableSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub const fn is_disjoint(self, other: TableSet) -> bool {
        self.0 & other.0 == 0
    }

    /// Smallest table index in the set; None when empty.
    pub fn min_table(self) -> Option<usize> {
        if self.0 == 0 {
            None
        } else {
            Some(self.0.trailing_zeros() as usize)
        }
    }

    /// Member indices in ascending order.
    pub fn iter(self) -> TableIter {
        TableIter(self.0)
    }

    /// All subsets of this set, including the empty set and the set itself,
    /// in ascending order of their bit patterns (carry-rippler enumeration).
    pub fn subsets(self) -> SubsetIter {
        SubsetIter {
            mask: self.0,
            next: Some(0),
        }
    }
}

pub struct TableIter(u64);

impl Iterator for TableIter {
    type Item = usize;

    fn next(&mut self) -> Option<usize> {
        if self.0 == 0 {
            None
        } else {
            let t = self.0.trailing_zeros() as usize;
            self.0 &= self.0 - 1;
            Some(t)
        }
    }
}

pub struct SubsetIter {
    mask: u64,
    next: Option<u64>,
}

impl Iterator for SubsetIter {
    type Item = TableSet;

    fn next(&mut self) -> Option<TableSet> {
        let cur = self.next?;
        // (cur - mask) & mask ripples the carry past the gaps in the mask,
        // visiting subsets in ascending numeric order and wrapping to 0
        // after the full mask, which is where we stop.
        let following = cur.wrapping_sub(self.mask) & self.mask;
        self.next = if following == 0 { None } else { Some(following) };
        Some(TableSet(cur))
    }
}

impl fmt::Display for TableSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, t) in self.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{t}")?;
        }
        write!(f, "}}")
    }
}
