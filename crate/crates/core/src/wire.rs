use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::cost::{Objectives, OperatorRegistry};
use crate::error::{Error, Result};
use crate::plan::{Plan, PlanNode};
use crate::query::Query;

/// Version tag carried by every message; both sides reject mismatches.
pub const PROTOCOL_VERSION: u32 = 1;

/// Upper bound on a single frame's payload. Far beyond any legitimate
/// message; guards against garbage length prefixes allocating gigabytes.
pub const MAX_FRAME_LEN: u32 = 64 * 1024 * 1024;

/// Writes one frame: a 4-byte big-endian payload length, then the payload.
/// Returns the total bytes put on the wire, header included.
pub fn write_frame(w: &mut impl Write, payload: &[u8]) -> Result<u64> {
    if payload.len() > MAX_FRAME_LEN as usize {
        return Err(Error::malformed(format!("frame payload of {} bytes exceeds the {MAX_FRAME_LEN} byte cap", payload.len())));
    }
    w.write_all(&(payload.len() as u32).to_be_bytes())?;
    w.write_all(payload)?;
    Ok(4 + payload.len() as u64)
}

/// Reads one complete frame; any truncation is an error.
pub fn read_frame(r: &mut impl Read) -> Result<Vec<u8>> {
    try_read_frame(r)?.ok_or_else(|| Error::malformed("connection closed before a frame header"))
}

/// Reads one frame, returning None on a clean end-of-stream (no header
/// bytes at all). Truncation mid-frame is still an error.
pub fn try_read_frame(r: &mut impl Read) -> Result<Option<Vec<u8>>> {
    let mut header = [0u8; 4];
    let mut got = 0;
    while got < header.len() {
        let k = r.read(&mut header[got..])?;
        if k == 0 {
            if got == 0 {
                return Ok(None);
            }
            return Err(Error::malformed("connection closed inside a frame header"));
        }
        got += k;
    }
    let len = u32::from_be_bytes(header);
    if len > MAX_FRAME_LEN {
        return Err(Error::malformed(format!("frame length {len} exceeds the {MAX_FRAME_LEN} byte cap")));
    }
    let mut payload = vec![0u8; len as usize];
    r.read_exact(&mut payload)
        .map_err(|e| Error::malformed(format!("connection closed inside a {len} byte frame: {e}")))?;
    Ok(Some(payload))
}

/// Query as shipped to workers.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QueryMsg {
    pub n: usize,
    pub cards: Vec<f64>,
    /// (low table, high table, selectivity) triples.
    pub edges: Vec<(usize, usize, f64)>,
}

impl QueryMsg {
    pub fn from_query(q: &Query) -> QueryMsg {
        QueryMsg {
            n: q.table_count(),
            cards: q.cardinalities().to_vec(),
            edges: q.edges().iter().map(|e| (e.a, e.b, e.selectivity)).collect(),
        }
    }

    /// Re-validates everything; the bytes may come from anywhere.
    pub fn into_query(self) -> Result<Query> {
        if self.cards.len() != self.n {
            return Err(Error::malformed(format!("query claims {} tables but carries {} cardinalities", self.n, self.cards.len())));
        }
        Query::new(self.cards, self.edges).map_err(|e| Error::malformed(format!("invalid query: {e}")))
    }
}

/// Master-to-worker request: optimize one partition of one query.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskMsg {
    pub version: u32,
    pub part_id: u64,
    pub num_parts: u64,
    pub space: String,
    /// Number of objectives: 1 (time) or 2 (time, buffer).
    pub objectives: u8,
    pub alpha: f64,
    pub cost_model: String,
    pub query: QueryMsg,
}

/// One plan in a worker response: the tree in prefix form plus the
/// worker's own pricing, which the master recomputes and checks.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlanMsg {
    pub tree: String,
    pub cost: Vec<f64>,
    pub card: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StatsMsg {
    pub plans_generated: u64,
    pub split_pairs: u64,
    pub admissible_results: u64,
    pub peak_memo_entries: u64,
    pub wall_ms: f64,
}

/// Worker-to-master response for one task.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResultMsg {
    pub version: u32,
    pub part_id: u64,
    pub plans: Vec<PlanMsg>,
    pub stats: StatsMsg,
}

pub fn encode_task(task: &TaskMsg) -> Result<Vec<u8>> {
    serde_json::to_vec(task).map_err(|e| Error::internal(format!("task serialization failed: {e}")))
}

pub fn decode_task(payload: &[u8]) -> Result<TaskMsg> {
    let task: TaskMsg =
        serde_json::from_slice(payload).map_err(|e| Error::malformed(format!("undecodable task: {e}")))?;
    if task.version != PROTOCOL_VERSION {
        return Err(Error::malformed(format!("task protocol version {} but this side speaks {PROTOCOL_VERSION}", task.version)));
    }
    Ok(task)
}

pub fn encode_result(result: &ResultMsg) -> Result<Vec<u8>> {
    serde_json::to_vec(result).map_err(|e| Error::internal(format!("result serialization failed: {e}")))
}

pub fn decode_result(payload: &[u8]) -> Result<ResultMsg> {
    let result: ResultMsg =
        serde_json::from_slice(payload).map_err(|e| Error::malformed(format!("undecodable result: {e}")))?;
    if result.version != PROTOCOL_VERSION {
        return Err(Error::malformed(format!("result protocol version {} but this side speaks {PROTOCOL_VERSION}", result.version)));
    }
    Ok(result)
}

/// Plan tree as wire data, matching `Plan::to_prefix`:
/// `S(table,op)` or `J(op,left,right)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PlanExpr {
    Scan { table: usize, op: usize },
    Join { op: usize, left: Box<PlanExpr>, right: Box<PlanExpr> },
}

impl PlanExpr {
    pub fn from_plan(plan: &Plan) -> PlanExpr {
        match &plan.node {
            PlanNode::Scan { table, op } => PlanExpr::Scan { table: *table, op: *op },
            PlanNode::Join { op, left, right } => PlanExpr::Join {
                op: *op,
                left: Box::new(PlanExpr::from_plan(left)),
                right: Box::new(PlanExpr::from_plan(right)),
            },
        }
    }

    /// Rebuilds a priced plan, recomputing every cardinality and cost
    /// from the local query and registry. Structural nonsense such as
    /// overlapping operands surfaces as an error.
    pub fn realize(&self, q: &Query, registry: &OperatorRegistry, objectives: Objectives) -> Result<Plan> {
        match self {
            PlanExpr::Scan { table, op } => Plan::scan(q, *table, *op, registry, objectives),
            PlanExpr::Join { op, left, right } => {
                let l = left.realize(q, registry, objectives)?;
                let r = right.realize(q, registry, objectives)?;
                Plan::join(q, l.into(), r.into(), *op, registry, objectives)
            }
        }
    }
}

impl fmt::Display for PlanExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PlanExpr::Scan { table, op } => write!(f, "S({table},{op})"),
            PlanExpr::Join { op, left, right } => write!(f, "J({op},{left},{right})"),
        }
    }
}

// Guards against stack exhaustion from adversarial nesting; honest plans
// over at most 64 tables stay far below this.
const MAX_PLAN_DEPTH: usize = 256;

struct PlanParser<'a> {
    s: &'a [u8],
    pos: usize,
}

impl PlanParser<'_> {
    fn fail(&self, what: &str) -> Error {
        Error::malformed(format!("bad plan tree at byte {}: {what}", self.pos))
    }

    fn eat(&mut self, b: u8) -> Result<()> {
        if self.s.get(self.pos) == Some(&b) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.fail(&format!("expected {:?}", b as char)))
        }
    }

    fn number(&mut self) -> Result<usize> {
        let start = self.pos;
        while self.s.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if self.pos == start || self.pos - start > 6 {
            return Err(self.fail("expected a number of at most 6 digits"));
        }
        // Digits only and bounded length; cannot fail.
        Ok(std::str::from_utf8(&self.s[start..self.pos]).unwrap().parse().unwrap())
    }

    fn expr(&mut self, depth: usize) -> Result<PlanExpr> {
        if depth > MAX_PLAN_DEPTH {
            return Err(self.fail("plan tree nested too deeply"));
        }
        match self.s.get(self.pos) {
            Some(b'S') => {
                self.pos += 1;
                self.eat(b'(')?;
                let table = self.number()?;
                self.eat(b',')?;
                let op = self.number()?;
                self.eat(b')')?;
                Ok(PlanExpr::Scan { table, op })
            }
            Some(b'J') => {
                self.pos += 1;
                self.eat(b'(')?;
                let op = self.number()?;
                self.eat(b',')?;
                let left = self.expr(depth + 1)?;
                self.eat(b',')?;
                let right = self.expr(depth + 1)?;
                self.eat(b')')?;
                Ok(PlanExpr::Join { op, left: Box::new(left), right: Box::new(right) })
            }
            _ => Err(self.fail("expected 'S' or 'J'")),
        }
    }
}

/// Parses the prefix plan form produced by `Plan::to_prefix`.
pub fn parse_plan(s: &str) -> Result<PlanExpr> {
    let mut p = PlanParser { s: s.as_bytes(), pos: 0 };
    let expr = p.expr(0)?;
    if p.pos != p.s.len() {
        return Err(p.fail("trailing input after the plan"));
    }
    Ok(expr)
}
