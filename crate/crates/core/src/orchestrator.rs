use std::io::Write as _;
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use crate::constraint::PlanSpace;
use crate::cost::{Objectives, OperatorRegistry};
use crate::dp::{worker_optimize, WorkerStats};
use crate::error::{Error, Result};
use crate::partition::{effective_workers, PartitionSpec};
use crate::plan::Plan;
use crate::query::Query;
use crate::wire::{
    self, decode_result, decode_task, encode_result, encode_task, parse_plan, PlanMsg, QueryMsg,
    ResultMsg, StatsMsg, TaskMsg, PROTOCOL_VERSION,
};

/// Everything a worker needs to optimize one partition of one query.
#[derive(Debug, Clone)]
pub struct PartitionTask {
    pub query: Query,
    pub part_id: u64,
    pub num_parts: u64,
    pub space: PlanSpace,
    pub objectives: Objectives,
    pub alpha: f64,
    pub cost_model: String,
}

impl PartitionTask {
    pub fn to_msg(&self) -> TaskMsg {
        TaskMsg {
            version: PROTOCOL_VERSION,
            part_id: self.part_id,
            num_parts: self.num_parts,
            space: self.space.to_string(),
            objectives: self.objectives.count() as u8,
            alpha: self.alpha,
            cost_model: self.cost_model.clone(),
            query: QueryMsg::from_query(&self.query),
        }
    }

    pub fn from_msg(msg: TaskMsg) -> Result<PartitionTask> {
        let space: PlanSpace = msg.space.parse().map_err(|e| Error::malformed(format!("{e}")))?;
        let objectives = Objectives::from_count(msg.objectives as usize)
            .map_err(|e| Error::malformed(format!("{e}")))?;
        let query = msg.query.into_query()?;
        Ok(PartitionTask {
            query,
            part_id: msg.part_id,
            num_parts: msg.num_parts,
            space,
            objectives,
            alpha: msg.alpha,
            cost_model: msg.cost_model,
        })
    }
}

/// One worker's contribution: its partition-best plans, re-priced and
/// validated by the master, plus its counters.
#[derive(Debug)]
pub struct PartitionResult {
    pub part_id: u64,
    pub plans: Vec<Plan>,
    pub stats: WorkerStats,
}

/// How partition tasks reach their workers.
#[derive(Debug, Clone)]
pub enum Backend {
    /// One thread per partition inside this process. Tasks and results
    /// still travel as encoded messages, so byte counts match the socket
    /// backend exactly.
    Threads,
    /// Shared-nothing TCP workers; task i goes to endpoint i mod k.
    Sockets { endpoints: Vec<String> },
}

/// Outcome of a whole parallel optimization run.
#[derive(Debug)]
pub struct RunReport {
    pub space: PlanSpace,
    pub objectives: Objectives,
    /// Worker count the caller asked for.
    pub requested_workers: u64,
    /// Power-of-two worker count actually used.
    pub num_parts: u64,
    /// Globally best plans after cross-partition pruning: one plan for a
    /// single objective, a Pareto set for two.
    pub plans: Vec<Plan>,
    /// Per-partition results, ordered by part_id.
    pub partitions: Vec<PartitionResult>,
    pub master_wall: Duration,
    pub max_worker_wall: Duration,
    /// Total frame bytes moved in both directions, headers included.
    pub bytes_sent: u64,
    /// Frames exchanged: one task and one result per partition.
    pub messages_sent: u64,
}

impl RunReport {
    pub fn total_plans_generated(&self) -> u64 {
        self.partitions.iter().map(|p| p.stats.plans_generated).sum()
    }

    pub fn total_split_pairs(&self) -> u64 {
        self.partitions.iter().map(|p| p.stats.split_pairs).sum()
    }

    /// Largest admissible-set family any single worker had to cover; the
    /// per-worker memory yardstick.
    pub fn max_admissible_results(&self) -> u64 {
        self.partitions.iter().map(|p| p.stats.admissible_results).max().unwrap_or(0)
    }
}

/// Executes one encoded task and returns the encoded result; the entire
/// worker side of the protocol. Both backends and the standalone TCP
/// worker run exactly this function.
pub fn execute_task_payload(payload: &[u8]) -> Result<Vec<u8>> {
    let task = PartitionTask::from_msg(decode_task(payload)?)?;
    let registry = OperatorRegistry::named(&task.cost_model)?;
    let spec = PartitionSpec::new(task.part_id, task.num_parts, task.space, task.query.table_count())?;
    let out = worker_optimize(&task.query, &spec, task.objectives, task.alpha, &registry)?;
    let result = ResultMsg {
        version: PROTOCOL_VERSION,
        part_id: task.part_id,
        plans: out
            .plans
            .iter()
            .map(|p| PlanMsg { tree: p.to_prefix(), cost: p.cost.values().to_vec(), card: p.result_card })
            .collect(),
        stats: StatsMsg {
            plans_generated: out.stats.plans_generated,
            split_pairs: out.stats.split_pairs,
            admissible_results: out.stats.admissible_results,
            peak_memo_entries: out.stats.peak_memo_entries,
            wall_ms: out.stats.wall.as_secs_f64() * 1e3,
        },
    };
    encode_result(&result)
}

// Re-prices every received plan against the local query and registry and
// cross-checks the worker's numbers; a disagreement means the two sides
// are not pricing the same world and the run must not silently continue.
fn decode_partition_result(payload: &[u8], task: &PartitionTask, registry: &OperatorRegistry) -> Result<PartitionResult> {
    let msg = decode_result(payload)?;
    if msg.part_id != task.part_id {
        return Err(Error::malformed(format!(
            "result for partition {} arrived on the channel for partition {}",
            msg.part_id, task.part_id
        )));
    }
    if msg.plans.is_empty() {
        return Err(Error::malformed(format!("partition {} returned no plans", task.part_id)));
    }
    let mut plans = Vec::with_capacity(msg.plans.len());
    for pm in &msg.plans {
        let expr = parse_plan(&pm.tree)?;
        let plan = expr
            .realize(&task.query, registry, task.objectives)
            .map_err(|e| Error::malformed(format!("partition {} sent an invalid plan: {e}", task.part_id)))?;
        if plan.result_set != task.query.full_set() {
            return Err(Error::malformed(format!(
                "partition {} sent a plan covering {} instead of all tables",
                task.part_id, plan.result_set
            )));
        }
        if task.space == PlanSpace::Linear && !plan.is_left_deep() {
            return Err(Error::malformed(format!("partition {} sent a bushy plan in the linear space", task.part_id)));
        }
        // Identical trees price identically on both sides; any drift is
        // a protocol or model mismatch.
        if plan.cost.values() != pm.cost.as_slice() || plan.result_card != pm.card {
            return Err(Error::malformed(format!(
                "partition {} priced {} as {:?}/{} but the master gets {:?}/{}",
                task.part_id,
                pm.tree,
                pm.cost,
                pm.card,
                plan.cost.values(),
                plan.result_card
            )));
        }
        plans.push(plan);
    }
    Ok(PartitionResult {
        part_id: msg.part_id,
        plans,
        stats: WorkerStats {
            plans_generated: msg.stats.plans_generated,
            split_pairs: msg.stats.split_pairs,
            admissible_results: msg.stats.admissible_results,
            peak_memo_entries: msg.stats.peak_memo_entries,
            wall: Duration::from_secs_f64(msg.stats.wall_ms / 1e3),
        },
    })
}

/// Merges per-partition plan buckets with exact dominance, walking
/// partitions in part_id order and each bucket in its worker's order, so
/// ties always resolve the same way. With one objective this is a plain
/// minimum; with two it is the Pareto merge of the partition fronts.
pub fn final_prune(partitions: &[PartitionResult]) -> Vec<Plan> {
    let mut kept: Vec<Plan> = Vec::new();
    for part in partitions {
        for plan in &part.plans {
            if kept.iter().any(|k| k.cost.dominates(&plan.cost)) {
                continue;
            }
            kept.retain(|k| !plan.cost.dominates(&k.cost));
            kept.push(plan.clone());
        }
    }
    kept
}

fn worker_failure(part_id: u64, err: Error) -> Error {
    match err {
        e @ Error::WorkerFailure { .. } => e,
        e => Error::WorkerFailure { part_id, message: e.to_string() },
    }
}

// Runs every payload through execute_task_payload on its own thread.
fn dispatch_threads(payloads: &[Vec<u8>]) -> Vec<Result<Vec<u8>>> {
    thread::scope(|scope| {
        let handles: Vec<_> = payloads
            .iter()
            .map(|p| scope.spawn(move || execute_task_payload(p)))
            .collect();
        handles
            .into_iter()
            .map(|h| match h.join() {
                Ok(r) => r,
                Err(_) => Err(Error::internal("worker thread panicked")),
            })
            .collect()
    })
}

fn roundtrip_socket(endpoint: &str, payload: &[u8]) -> Result<Vec<u8>> {
    let mut stream = TcpStream::connect(endpoint)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("connect to {endpoint}: {e}"))))?;
    wire::write_frame(&mut stream, payload)?;
    stream.flush()?;
    wire::read_frame(&mut stream)
}

// Connects once per task, round-robin over the endpoints, all in flight
// at the same time.
fn dispatch_sockets(payloads: &[Vec<u8>], endpoints: &[String]) -> Vec<Result<Vec<u8>>> {
    thread::scope(|scope| {
        let handles: Vec<_> = payloads
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let endpoint = &endpoints[i % endpoints.len()];
                scope.spawn(move || roundtrip_socket(endpoint, p))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| match h.join() {
                Ok(r) => r,
                Err(_) => Err(Error::internal("socket dispatch thread panicked")),
            })
            .collect()
    })
}

/// Splits the search space over workers, hands each partition to a
/// worker through the chosen backend, and merges the partition winners.
/// The requested worker count is rounded down to the largest valid power
/// of two for this query and space; `RunReport::num_parts` says what
/// actually ran. Any worker failure aborts the whole run with an error
/// naming the partition.
pub fn master_optimize(
    q: &Query,
    requested_workers: u64,
    space: PlanSpace,
    objectives: Objectives,
    alpha: f64,
    cost_model: &str,
    backend: &Backend,
) -> Result<RunReport> {
    if requested_workers == 0 {
        return Err(Error::invalid("at least one worker is required"));
    }
    if let Backend::Sockets { endpoints } = backend {
        if endpoints.is_empty() {
            return Err(Error::invalid("the socket backend needs at least one endpoint"));
        }
    }
    let registry = OperatorRegistry::named(cost_model)?;
    // Single-objective pruning is plain dominance; pin alpha so the task
    // bytes are identical no matter what the caller passed.
    let alpha = match objectives {
        Objectives::Time => 1.0,
        Objectives::TimeBuffer => alpha,
    };
    if !(alpha.is_finite() && alpha >= 1.0) {
        return Err(Error::invalid(format!("alpha must be finite and >= 1, got {alpha}")));
    }

    let start = Instant::now();
    let num_parts = effective_workers(requested_workers, q.table_count(), space);
    let tasks: Vec<PartitionTask> = (0..num_parts)
        .map(|part_id| PartitionTask {
            query: q.clone(),
            part_id,
            num_parts,
            space,
            objectives,
            alpha,
            cost_model: cost_model.to_string(),
        })
        .collect();
    let payloads = tasks.iter().map(|t| encode_task(&t.to_msg())).collect::<Result<Vec<_>>>()?;

    let responses = match backend {
        Backend::Threads => dispatch_threads(&payloads),
        Backend::Sockets { endpoints } => dispatch_sockets(&payloads, endpoints),
    };

    let mut bytes_sent = 0u64;
    let mut partitions = Vec::with_capacity(tasks.len());
    for ((task, payload), response) in tasks.iter().zip(&payloads).zip(responses) {
        let response = response.map_err(|e| worker_failure(task.part_id, e))?;
        bytes_sent += 4 + payload.len() as u64 + 4 + response.len() as u64;
        let part = decode_partition_result(&response, task, &registry)
            .map_err(|e| worker_failure(task.part_id, e))?;
        partitions.push(part);
    }

    let plans = final_prune(&partitions);
    let max_worker_wall = partitions.iter().map(|p| p.stats.wall).max().unwrap_or_default();
    Ok(RunReport {
        space,
        objectives,
        requested_workers,
        num_parts,
        plans,
        partitions,
        master_wall: start.elapsed(),
        max_worker_wall,
        bytes_sent,
        messages_sent: 2 * num_parts,
    })
}

/// A TCP worker serving partition tasks, one frame in, one frame out,
/// many tasks per connection, many concurrent connections.
pub struct WorkerServer {
    addr: SocketAddr,
    shutdown: Arc<AtomicBool>,
    handle: Option<thread::JoinHandle<()>>,
}

fn handle_connection(mut stream: TcpStream) {
    loop {
        match wire::try_read_frame(&mut stream) {
            Ok(None) => return,
            Ok(Some(payload)) => match execute_task_payload(&payload) {
                Ok(response) => {
                    if wire::write_frame(&mut stream, &response).and_then(|_| Ok(stream.flush()?)).is_err() {
                        return;
                    }
                }
                Err(e) => {
                    // Dropping the connection makes the master abort the
                    // run and name this partition; that beats answering
                    // with something made up.
                    eprintln!("worker: task failed: {e}");
                    return;
                }
            },
            Err(e) => {
                eprintln!("worker: bad frame: {e}");
                return;
            }
        }
    }
}

fn accept_loop(listener: TcpListener, shutdown: Arc<AtomicBool>) {
    for stream in listener.incoming() {
        if shutdown.load(Ordering::SeqCst) {
            return;
        }
        match stream {
            Ok(s) => {
                thread::spawn(move || handle_connection(s));
            }
            Err(e) => {
                eprintln!("worker: accept failed: {e}");
                return;
            }
        }
    }
}

impl WorkerServer {
    /// Binds and starts serving in the background. Pass port 0 to let
    /// the OS pick one; `local_addr` reports the result.
    pub fn bind(addr: &str) -> Result<WorkerServer> {
        let listener = TcpListener::bind(addr)?;
        let addr = listener.local_addr()?;
        let shutdown = Arc::new(AtomicBool::new(false));
        let flag = Arc::clone(&shutdown);
        let handle = thread::spawn(move || accept_loop(listener, flag));
        Ok(WorkerServer { addr, shutdown, handle: Some(handle) })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stops accepting and joins the accept loop. Connections already
    /// being served drain on their own threads.
    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        if let Some(handle) = self.handle.take() {
            self.shutdown.store(true, Ordering::SeqCst);
            // Unblock accept() so the loop observes the flag.
            let _ = TcpStream::connect(self.addr);
            let _ = handle.join();
        }
    }
}

impl Drop for WorkerServer {
    fn drop(&mut self) {
        self.stop();
    }
}

/// Serves tasks on the caller's thread until the process dies; the
/// standalone worker binary's main loop.
pub fn serve_blocking(listener: TcpListener) -> Result<()> {
    for stream in listener.incoming() {
        match stream {
            Ok(s) => {
                thread::spawn(move || handle_connection(s));
            }
            Err(e) => return Err(Error::Io(e)),
        }
    }
    Ok(())
}
