//! Command-line front end: run one optimization, sweep a benchmark into
//! CSV, verify the optimizer's guarantees, or serve as a TCP worker.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::net::TcpListener;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use joinopt::verify::{self, PropertyOutcome};
use joinopt::{
    generate_star_query, master_optimize, serve_blocking, Backend, Objectives, PlanSpace, RunReport,
    WorkerServer,
};
use joinopt::partition::{max_constraints, max_workers, round_down_pow2};

#[derive(Parser)]
#[command(name = "joinopt", version, about = "Parallel join-order optimizer over a partitioned search space")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Optimize one generated star query and print the plan and counters.
    Optimize(OptimizeArgs),
    /// Sweep worker counts over seeded queries and emit CSV rows.
    Bench(BenchArgs),
    /// Run the property checks and print one PASS/FAIL line each.
    Verify(VerifyArgs),
    /// Serve optimization tasks over TCP until killed.
    Worker(WorkerArgs),
}

#[derive(Args)]
struct OptimizeArgs {
    /// Number of tables in the generated star query.
    #[arg(long, default_value_t = 8)]
    tables: usize,
    /// Workload seed for the query generator.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Plan space: linear (left-deep) or bushy.
    #[arg(long, default_value = "linear")]
    space: PlanSpace,
    /// Worker count; rounded down to a power of two with a warning.
    #[arg(long, default_value_t = 1)]
    workers: u64,
    /// Objectives: 1 (time) or 2 (time and buffer).
    #[arg(long, default_value_t = 1)]
    objectives: u8,
    /// Pruning factor for two objectives; plans within this factor of a
    /// stored plan on every axis are dropped. Requires --objectives 2.
    #[arg(long)]
    alpha: Option<f64>,
    /// Cost model registry: default or hash.
    #[arg(long, default_value = "default")]
    cost_model: String,
    /// Backend: threads or sockets.
    #[arg(long, default_value = "threads")]
    backend: String,
    /// Worker endpoints for --backend sockets, comma separated.
    #[arg(long, value_delimiter = ',')]
    endpoints: Vec<String>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 16)]
    tables: usize,
    /// Top of the worker sweep; rows cover powers of two up to here.
    #[arg(long, default_value_t = 8)]
    workers: u64,
    #[arg(long, default_value = "linear")]
    space: PlanSpace,
    /// Queries per worker count; the median row aggregates them.
    #[arg(long, default_value_t = 20)]
    queries: u64,
    /// First query seed; queries use seed, seed+1, ...
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    objectives: u8,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, default_value = "default")]
    cost_model: String,
    #[arg(long, default_value = "threads")]
    backend: String,
    #[arg(long, value_delimiter = ',')]
    endpoints: Vec<String>,
    /// Write CSV here instead of standard output.
    #[arg(long)]
    out: Option<String>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Run only properties whose name contains this string.
    #[arg(long)]
    property: Option<String>,
    /// Restrict to one plan space where a property has both variants.
    #[arg(long)]
    space: Option<PlanSpace>,
    /// Override the table count where a property takes one.
    #[arg(long)]
    tables: Option<usize>,
    /// Override the worker count where a property takes one.
    #[arg(long)]
    workers: Option<u64>,
}

#[derive(Args)]
struct WorkerArgs {
    /// Listen address; port 0 lets the OS pick.
    #[arg(long, default_value = "127.0.0.1:0")]
    bind: String,
}

// Exit codes: 0 success, 1 runtime failure, 2 usage error. Clap's own
// parse errors also exit with 2.
fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.cmd {
        Cmd::Optimize(args) => cmd_optimize(args),
        Cmd::Bench(args) => cmd_bench(args),
        Cmd::Verify(args) => cmd_verify(args),
        Cmd::Worker(args) => cmd_worker(args),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn usage_error(msg: &str) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(2)
}

fn parse_objectives(objectives: u8, alpha: Option<f64>) -> Result<(Objectives, f64), String> {
    let objectives = match objectives {
        1 => Objectives::Time,
        2 => Objectives::TimeBuffer,
        other => return Err(format!("--objectives must be 1 or 2, got {other}")),
    };
    let alpha = match (objectives, alpha) {
        (Objectives::Time, None) => 1.0,
        (Objectives::Time, Some(_)) => {
            return Err("--alpha only applies to two objectives; add --objectives 2".into())
        }
        (Objectives::TimeBuffer, a) => a.unwrap_or(10.0),
    };
    Ok((objectives, alpha))
}

fn parse_backend(backend: &str, endpoints: Vec<String>) -> Result<Backend, String> {
    match backend {
        "threads" => {
            if endpoints.is_empty() {
                Ok(Backend::Threads)
            } else {
                Err("--endpoints only applies to --backend sockets".into())
            }
        }
        "sockets" => {
            if endpoints.is_empty() {
                Err("--backend sockets needs --endpoints".into())
            } else {
                Ok(Backend::Sockets { endpoints })
            }
        }
        other => Err(format!("unknown backend {other:?}, expected \"threads\" or \"sockets\"")),
    }
}

// Strict worker validation: an explicit count past the space's bound is
// a usage error; a non-power-of-two below it is rounded with a warning.
fn validate_workers(workers: u64, n: usize, space: PlanSpace) -> Result<u64, String> {
    if workers == 0 {
        return Err("--workers must be at least 1".into());
    }
    let rounded = round_down_pow2(workers);
    let cap = max_workers(n, space);
    if rounded > cap {
        return Err(format!(
            "{workers} workers need more constraints than {n} tables allow in the {space} space \
             (constraint bound {}, so at most {cap} workers)",
            max_constraints(n, space)
        ));
    }
    if rounded != workers {
        eprintln!("warning: {workers} workers rounded down to {rounded}");
    }
    Ok(rounded)
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

fn cmd_optimize(mut args: OptimizeArgs) -> io::Result<ExitCode> {
    let (objectives, alpha) = match parse_objectives(args.objectives, args.alpha) {
        Ok(v) => v,
        Err(m) => return Ok(usage_error(&m)),
    };
    let workers = match validate_workers(args.workers, args.tables, args.space) {
        Ok(w) => w,
        Err(m) => return Ok(usage_error(&m)),
    };
    let backend = match parse_backend(&args.backend, std::mem::take(&mut args.endpoints)) {
        Ok(b) => b,
        Err(m) => return Ok(usage_error(&m)),
    };
    let q = match generate_star_query(args.tables, args.seed) {
        Ok(q) => q,
        Err(e) => return Ok(usage_error(&e.to_string())),
    };
    let report = match master_optimize(&q, workers, args.space, objectives, alpha, &args.cost_model, &backend) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return Ok(ExitCode::from(1));
        }
    };
    print_report(&args, &report);
    Ok(ExitCode::SUCCESS)
}

fn print_report(args: &OptimizeArgs, report: &RunReport) {
    println!(
        "{} space, {} tables, seed {}, {} workers, {} objective{}",
        report.space,
        args.tables,
        args.seed,
        report.num_parts,
        if report.objectives == Objectives::Time { 1 } else { 2 },
        if report.objectives == Objectives::Time { "" } else { "s" },
    );
    for plan in &report.plans {
        println!("plan: {} cost={:?} card={}", plan.to_prefix(), plan.cost.values(), plan.result_card);
    }
    println!(
        "master_ms={:.3} max_worker_ms={:.3} bytes_sent={} messages_sent={}",
        ms(report.master_wall),
        ms(report.max_worker_wall),
        report.bytes_sent,
        report.messages_sent
    );
    println!(
        "plans_generated={} split_pairs={} max_memo_entries={}",
        report.total_plans_generated(),
        report.total_split_pairs(),
        report.max_admissible_results()
    );
}

fn cmd_bench(args: BenchArgs) -> io::Result<ExitCode> {
    let (objectives, alpha) = match parse_objectives(args.objectives, args.alpha) {
        Ok(v) => v,
        Err(m) => return Ok(usage_error(&m)),
    };
    let backend = match parse_backend(&args.backend, args.endpoints) {
        Ok(b) => b,
        Err(m) => return Ok(usage_error(&m)),
    };
    if args.queries == 0 {
        return Ok(usage_error("--queries must be at least 1"));
    }
    let top = match validate_workers(args.workers, args.tables, args.space) {
        Ok(w) => w,
        Err(m) => return Ok(usage_error(&m)),
    };
    let mut sink: BufWriter<Box<dyn Write>> = BufWriter::new(match &args.out {
        Some(path) => Box::new(File::create(path)?),
        None => Box::new(io::stdout()),
    });
    writeln!(
        sink,
        "space,n,m,query_seed,master_ms,max_worker_ms,bytes_sent,max_memo_entries,plans_generated,split_pairs"
    )?;
    let sweep: Vec<u64> = (0..=top.trailing_zeros()).map(|l| 1u64 << l).collect();
    for &m in &sweep {
        // Columns in row order; medians computed per column afterwards.
        let mut cols: [Vec<f64>; 6] = Default::default();
        for i in 0..args.queries {
            let seed = args.seed + i;
            let q = generate_star_query(args.tables, seed).map_err(to_io)?;
            let report =
                master_optimize(&q, m, args.space, objectives, alpha, &args.cost_model, &backend).map_err(to_io)?;
            let row = [
                ms(report.master_wall),
                ms(report.max_worker_wall),
                report.bytes_sent as f64,
                report.max_admissible_results() as f64,
                report.total_plans_generated() as f64,
                report.total_split_pairs() as f64,
            ];
            for (col, v) in cols.iter_mut().zip(row) {
                col.push(v);
            }
            writeln!(
                sink,
                "{},{},{},{},{:.3},{:.3},{},{},{},{}",
                args.space, args.tables, m, seed, row[0], row[1], row[2], row[3], row[4], row[5]
            )?;
        }
        let med: Vec<f64> = cols.iter_mut().map(|c| median(c)).collect();
        writeln!(
            sink,
            "{},{},{},median,{:.3},{:.3},{},{},{},{}",
            args.space,
            args.tables,
            m,
            med[0],
            med[1],
            fmt_count(med[2]),
            fmt_count(med[3]),
            fmt_count(med[4]),
            fmt_count(med[5])
        )?;
    }
    sink.flush()?;
    Ok(ExitCode::SUCCESS)
}

fn to_io(e: joinopt::Error) -> io::Error {
    io::Error::other(e.to_string())
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let k = values.len();
    if k % 2 == 1 {
        values[k / 2]
    } else {
        (values[k / 2 - 1] + values[k / 2]) / 2.0
    }
}

// Counter medians are integers unless an even-length middle pair
// straddles; print the halves only when they exist.
fn fmt_count(v: f64) -> String {
    if v.fract() == 0.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.1}")
    }
}

fn cmd_verify(args: VerifyArgs) -> io::Result<ExitCode> {
    let wants_space = |s: PlanSpace| args.space.is_none() || args.space == Some(s);
    let n = args.tables;
    let w = args.workers;
    // Each property at desk scale, honoring --tables/--workers overrides
    // where the property is parameterized.
    let mut checks: Vec<(&str, Box<dyn FnOnce() -> joinopt::Result<PropertyOutcome>>)> = Vec::new();
    for space in [PlanSpace::Linear, PlanSpace::Bushy] {
        if !wants_space(space) {
            continue;
        }
        checks.push((
            "partition-counts",
            Box::new(move || match w {
                Some(m) => verify::check_partition_counts_at(space, n.unwrap_or(9), m),
                None => verify::check_partition_counts(space, n.unwrap_or(if space == PlanSpace::Linear { 12 } else { 10 })),
            }),
        ));
        match space {
            PlanSpace::Linear => checks.push((
                "linear-coverage",
                Box::new(move || verify::check_linear_coverage(n.unwrap_or(5), w.unwrap_or(4))),
            )),
            PlanSpace::Bushy => checks.push((
                "bushy-coverage",
                Box::new(move || verify::check_bushy_coverage(n.unwrap_or(6), w.unwrap_or(2))),
            )),
        }
        checks.push(("union-coverage", Box::new(move || verify::check_union_coverage(space, n.unwrap_or(6)))));
        checks.push((
            "optimality",
            Box::new(move || {
                let ns = [n.unwrap_or(6)];
                let ms = [1, 2, w.unwrap_or(4)];
                verify::check_optimality(space, &ns, 3, &ms)
            }),
        ));
        checks.push((
            "alpha-coverage",
            Box::new(move || {
                let ns = [n.unwrap_or(5)];
                let ms = [1, w.unwrap_or(2)];
                verify::check_alpha_coverage(space, &ns, 3, 10.0, &ms)
            }),
        ));
        checks.push((
            "memory-scaling",
            Box::new(move || {
                let default_n = if space == PlanSpace::Linear { 12 } else { 10 };
                let nn = n.unwrap_or(default_n);
                let top = w.map(round_down_pow2).unwrap_or_else(|| max_workers(nn, space).min(16));
                verify::check_memory_scaling(space, nn, 42, top.trailing_zeros())
            }),
        ));
        checks.push((
            "work-division",
            Box::new(move || {
                let default_n = if space == PlanSpace::Linear { 10 } else { 9 };
                let nn = n.unwrap_or(default_n);
                let top = w.map(round_down_pow2).unwrap_or_else(|| max_workers(nn, space).min(8));
                verify::check_work_division(space, nn, 42, top.trailing_zeros())
            }),
        ));
    }
    if wants_space(PlanSpace::Bushy) {
        checks.push(("split-ratio", Box::new(verify::check_split_ratio)));
    }
    if wants_space(PlanSpace::Linear) {
        checks.push((
            "message-economy",
            Box::new(move || verify::check_message_economy(n.unwrap_or(12), 42, &[1, 2, 4, 8])),
        ));
        checks.push((
            "backend-determinism",
            Box::new(move || {
                let servers: Vec<WorkerServer> =
                    (0..2).map(|_| WorkerServer::bind("127.0.0.1:0")).collect::<joinopt::Result<_>>()?;
                let endpoints: Vec<String> = servers.iter().map(|s| s.local_addr().to_string()).collect();
                verify::check_backend_determinism(n.unwrap_or(9), &[100, 101], w.unwrap_or(4), &endpoints)
            }),
        ));
    }
    let filter = args.property.as_deref().unwrap_or("");
    let selected: Vec<_> = checks.into_iter().filter(|(name, _)| name.contains(filter)).collect();
    if selected.is_empty() {
        return Ok(usage_error(&format!("no property matches {filter:?}")));
    }
    let mut all_passed = true;
    for (_, run) in selected {
        let outcome = match run() {
            Ok(o) => o,
            Err(e) => {
                eprintln!("error: {e}");
                return Ok(ExitCode::from(1));
            }
        };
        all_passed &= outcome.passed;
        let verdict = if outcome.passed { "PASS" } else { "FAIL" };
        println!("{verdict} {}: {}", outcome.name, outcome.details.join("; "));
    }
    Ok(if all_passed { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn cmd_worker(args: WorkerArgs) -> io::Result<ExitCode> {
    let listener = TcpListener::bind(&args.bind)?;
    println!("listening on {}", listener.local_addr()?);
    io::stdout().flush()?;
    serve_blocking(listener).map_err(to_io)?;
    Ok(ExitCode::SUCCESS)
}
