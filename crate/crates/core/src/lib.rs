//! Parallel join-order optimization by search-space partitioning.
//!
//! The classic dynamic program for join ordering enumerates every subset
//! of the query's tables. This crate splits that search space into equal
//! slices by assigning each worker a set of join-order constraints derived
//! from its partition id: constraints on disjoint table pairs (left-deep
//! plans) or triples (bushy plans). Each worker runs an unmodified
//! subset-DP over only the table sets its constraints admit, the master
//! merges the per-partition winners, and together the partitions cover
//! the full space without overlap in work.
//!
//! The crate ships the partitioning and DP engine, a master/worker
//! orchestrator with in-process and TCP backends, cost models for single-
//! and multi-objective (time, buffer) optimization, exhaustive reference
//! oracles, and a workload generator for benchmarking.

pub mod constraint;
pub mod cost;
pub mod dp;
pub mod error;
pub mod orchestrator;
pub mod partition;
pub mod plan;
pub mod query;
pub mod table_set;
pub mod verify;
pub mod wire;
pub mod workload;

pub use constraint::{JoinOrderConstraint, PlanSpace};
pub use cost::{result_cardinality, CostVector, Objectives, OperatorRegistry};
pub use dp::{worker_optimize, WorkerOutput, WorkerStats};
pub use error::{Error, Result};
pub use orchestrator::{master_optimize, serve_blocking, Backend, PartitionResult, PartitionTask, RunReport, WorkerServer};
pub use partition::{adm_join_results, count_admissible, part_constraints, AdmissibleSets, PartitionSpec};
pub use plan::{Plan, PlanNode};
pub use query::{JoinEdge, Query};
pub use table_set::TableSet;
pub use verify::PropertyOutcome;
pub use workload::{brute_force, brute_force_partition_best, generate_star_query, serial_baseline, BruteForceOutcome};
