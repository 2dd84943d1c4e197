//! `evdpor` command-line front end.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use evdpor::bench_programs::{self, Params, BENCHMARKS};
use evdpor::consistency::{check_consistency, ConsistencyGraph, WiStats};
use evdpor::explorer::ViolationReport;
use evdpor::{explore, parse_program, Algorithm, ExplorationStats, ExploreConfig, ExploreError, Program};

/// Version of the JSON report layout.
const SCHEMA_VERSION: u32 = 1;
const DEFAULT_CAP: u64 = 10_000_000;

#[derive(Parser)]
#[command(name = "evdpor", version, about = "Stateless model checker for event-driven programs")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Explore one program.
    Run {
        /// A `.evp` file or `builtin:NAME`.
        #[arg(long)]
        program: String,
        /// Builtin parameter, e.g. `n=5`.
        #[arg(long = "param", value_name = "K=V")]
        params: Vec<String>,
        #[arg(long, value_enum, default_value = "event")]
        algo: Algo,
        /// Print the report as JSON.
        #[arg(long)]
        json: bool,
        /// Execution cap; defaults to EVDPOR_CAP or 10^7.
        #[arg(long)]
        cap: Option<u64>,
    },
    /// Run a sweep of builtins under several algorithms.
    Compare {
        /// `NAME` or `NAME:k=LO..HI`, e.g. `prolific_cycle:n=3..6`.
        specs: Vec<String>,
        /// Algorithms, comma separated.
        #[arg(long, value_enum, value_delimiter = ',', default_value = "event,coarse")]
        algo: Vec<Algo>,
        /// Print CSV instead of a table.
        #[arg(long, conflicts_with = "json")]
        csv: bool,
        /// Print a JSON array of reports.
        #[arg(long)]
        json: bool,
        #[arg(long)]
        cap: Option<u64>,
        /// Worker threads; each row is explored by one worker.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Decide whether a happens-before graph has a linearization.
    CheckConsistency {
        #[arg(long)]
        graph: PathBuf,
        /// Print a linearization when consistent.
        #[arg(long)]
        witness: bool,
        #[arg(long)]
        json: bool,
    },
    /// Write the regression corpus as `.evp` files.
    EmitCorpus {
        #[arg(long, default_value = "corpus")]
        dir: PathBuf,
    },
    /// List builtin programs.
    List,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Algo {
    Event,
    Coarse,
    Brute,
}

impl From<Algo> for Algorithm {
    fn from(a: Algo) -> Self {
        match a {
            Algo::Event => Algorithm::EventDpor,
            Algo::Coarse => Algorithm::Coarse,
            Algo::Brute => Algorithm::BruteForce,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
struct RunReport {
    schema_version: u32,
    program: String,
    params: Params,
    algorithm: Algorithm,
    traces: u64,
    executions: u64,
    redundant_skipped: u64,
    parked: u64,
    wi: WiStats,
    decide_invocations: u64,
    violations: u64,
    violation_examples: Vec<ViolationReport>,
    incomplete: bool,
    wall_ms: f64,
}

impl RunReport {
    fn new(program: String, params: Params, s: ExplorationStats) -> Self {
        RunReport {
            schema_version: SCHEMA_VERSION,
            program,
            params,
            algorithm: s.algorithm,
            traces: s.traces,
            executions: s.executions,
            redundant_skipped: s.redundant_skipped,
            parked: s.parked,
            decide_invocations: s.wi.decide,
            wi: s.wi,
            violations: s.violations,
            violation_examples: s.violation_examples,
            incomplete: s.incomplete,
            wall_ms: s.wall_ms,
        }
    }

    fn table(&self) -> String {
        let mut rows = vec![
            ("program", self.program.clone()),
            ("params", fmt_params(&self.params)),
            ("algorithm", self.algorithm.to_string()),
            ("traces", self.traces.to_string()),
            ("executions", self.executions.to_string()),
            ("redundant skipped", self.redundant_skipped.to_string()),
            ("parked", self.parked.to_string()),
            ("wi calls", self.wi.calls.to_string()),
            ("wi inspection", self.wi.inspection.to_string()),
            ("wi simple", self.wi.simple.to_string()),
            ("wi hb negative", self.wi.hb_negative.to_string()),
            ("wi witness +", self.wi.witness_positive.to_string()),
            ("wi witness -", self.wi.witness_negative.to_string()),
            ("wi unknown", self.wi.unknown.to_string()),
            ("decide invocations", self.decide_invocations.to_string()),
            ("violations", self.violations.to_string()),
            ("time ms", format!("{:.3}", self.wall_ms)),
        ];
        if self.incomplete {
            rows.push(("incomplete", "true".into()));
        }
        let mut out = String::new();
        for (k, v) in rows {
            out.push_str(&format!("{k:<20} {v}\n"));
        }
        for v in &self.violation_examples {
            let sched: Vec<String> = v.schedule.iter().map(|p| p.to_string()).collect();
            out.push_str(&format!("violation at <{},{}> `{}` schedule {}\n", v.instance, v.index, v.assertion, sched.join(" ")));
        }
        out
    }
}

fn fmt_params(p: &Params) -> String {
    if p.is_empty() {
        return "-".into();
    }
    p.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(",")
}

fn cap_from(flag: Option<u64>) -> Result<u64> {
    let cap = match flag {
        Some(c) => c,
        None => match std::env::var("EVDPOR_CAP") {
            Ok(s) => s.trim().parse().with_context(|| format!("EVDPOR_CAP: invalid value `{s}`"))?,
            Err(_) => DEFAULT_CAP,
        },
    };
    if cap == 0 {
        bail!("cap must be positive");
    }
    Ok(cap)
}

fn parse_kv(s: &str) -> Result<(String, &str)> {
    let (k, v) = s.split_once('=').ok_or_else(|| anyhow!("expected K=V, got `{s}`"))?;
    Ok((k.trim().to_string(), v.trim()))
}

fn load_program(program: &str, raw: &[String]) -> Result<(String, Params, Program)> {
    let mut params = Params::new();
    for s in raw {
        let (k, v) = parse_kv(s)?;
        let v: u32 = v.parse().with_context(|| format!("parameter `{k}`: not a number"))?;
        params.insert(k, v);
    }
    if let Some(name) = program.strip_prefix("builtin:") {
        let prog = bench_programs::generate(name, &params)?;
        return Ok((name.to_string(), params, prog));
    }
    if !params.is_empty() {
        bail!("--param only applies to builtin programs");
    }
    let src = std::fs::read_to_string(program).with_context(|| format!("reading {program}"))?;
    let prog = parse_program(&src).map_err(|e| anyhow!("{program}:{e}"))?;
    Ok((program.to_string(), params, prog))
}

fn explore_report(name: String, params: Params, prog: &Program, algo: Algo, cap: u64) -> Result<RunReport, ExploreError> {
    let cfg = ExploreConfig::new(algo.into()).with_cap(cap);
    let stats = explore(prog, &cfg)?;
    Ok(RunReport::new(name, params, stats))
}

fn cmd_run(program: &str, params: &[String], algo: Algo, json: bool, cap: Option<u64>) -> Result<ExitCode> {
    let cap = cap_from(cap)?;
    let (name, params, prog) = load_program(program, params)?;
    let report = explore_report(name, params, &prog, algo, cap)?;
    if json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        print!("{}", report.table());
    }
    if report.incomplete {
        bail!("exploration cap of {cap} exceeded");
    }
    Ok(if report.violations > 0 { ExitCode::from(2) } else { ExitCode::SUCCESS })
}

/// Expands `NAME[:k=LO..HI[,k=V]...]` into parameter sets.
fn expand_spec(spec: &str) -> Result<Vec<(String, Params)>> {
    let (name, rest) = spec.split_once(':').unwrap_or((spec, ""));
    bench_programs::spec(name).ok_or_else(|| anyhow!("unknown benchmark `{name}`"))?;
    let mut sets = vec![Params::new()];
    for part in rest.split(',').filter(|s| !s.trim().is_empty()) {
        let (k, v) = parse_kv(part)?;
        let (lo, hi) = match v.split_once("..") {
            Some((a, b)) => (a.parse::<u32>()?, b.trim_start_matches('=').parse::<u32>()?),
            None => {
                let x = v.parse::<u32>().with_context(|| format!("`{spec}`: bad value `{v}`"))?;
                (x, x)
            }
        };
        if lo > hi {
            bail!("`{spec}`: empty range {lo}..{hi}");
        }
        sets = sets
            .into_iter()
            .flat_map(|p| {
                let k = k.clone();
                (lo..=hi).map(move |x| {
                    let mut q = p.clone();
                    q.insert(k.clone(), x);
                    q
                })
            })
            .collect();
    }
    Ok(sets.into_iter().map(|p| (name.to_string(), p)).collect())
}

#[derive(Clone, Debug, Serialize)]
struct Row {
    benchmark: String,
    params: String,
    algo: Algorithm,
    traces: Option<u64>,
    executions: Option<u64>,
    time_ms: Option<f64>,
    status: String,
}

fn run_row(name: &str, params: &Params, algo: Algo, cap: u64) -> (Row, Option<RunReport>) {
    let mut row = Row {
        benchmark: name.to_string(),
        params: fmt_params(params),
        algo: algo.into(),
        traces: None,
        executions: None,
        time_ms: None,
        status: String::new(),
    };
    let res = bench_programs::generate(name, params)
        .map_err(anyhow::Error::from)
        .and_then(|prog| Ok(explore_report(name.to_string(), params.clone(), &prog, algo, cap)?));
    match res {
        Ok(r) => {
            row.traces = Some(r.traces);
            row.executions = Some(r.executions);
            row.time_ms = Some((r.wall_ms * 1000.0).round() / 1000.0);
            row.status = if r.incomplete {
                "cap-exceeded".into()
            } else if r.violations > 0 {
                "violation".into()
            } else {
                "ok".into()
            };
            (row, Some(r))
        }
        Err(e) => {
            row.status = match e.downcast_ref::<ExploreError>() {
                Some(ExploreError::CapExceeded { .. }) => "cap-exceeded".into(),
                _ => format!("error: {e}"),
            };
            (row, None)
        }
    }
}

fn cmd_compare(specs: &[String], algos: &[Algo], csv: bool, json: bool, cap: Option<u64>, jobs: usize) -> Result<ExitCode> {
    let cap = cap_from(cap)?;
    let mut tasks = Vec::new();
    for s in specs {
        for (name, params) in expand_spec(s)? {
            for &a in algos {
                tasks.push((name.clone(), params.clone(), a));
            }
        }
    }
    let results: Vec<Mutex<Option<(Row, Option<RunReport>)>>> = tasks.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|sc| {
        for _ in 0..jobs.max(1).min(tasks.len().max(1)) {
            sc.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some((name, params, algo)) = tasks.get(i) else { break };
                *results[i].lock().unwrap() = Some(run_row(name, params, *algo, cap));
            });
        }
    });
    let results: Vec<(Row, Option<RunReport>)> =
        results.into_iter().map(|m| m.into_inner().unwrap().expect("every row ran")).collect();

    let mut out = std::io::stdout().lock();
    if json {
        let reports: Vec<&RunReport> = results.iter().filter_map(|(_, r)| r.as_ref()).collect();
        writeln!(out, "{}", serde_json::to_string_pretty(&reports)?)?;
    } else if csv {
        let mut w = csv::Writer::from_writer(&mut out);
        for (row, _) in &results {
            w.serialize(row)?;
        }
        if results.is_empty() {
            w.write_record(["benchmark", "params", "algo", "traces", "executions", "time_ms", "status"])?;
        }
        w.flush()?;
    } else {
        writeln!(out, "{:<20} {:<8} {:<12} {:>10} {:>12} {:>12}  status", "benchmark", "params", "algo", "traces", "executions", "time_ms")?;
        let opt = |x: Option<u64>| x.map_or("-".to_string(), |v| v.to_string());
        for (r, _) in &results {
            let t = r.time_ms.map_or("-".to_string(), |v| format!("{v:.3}"));
            writeln!(
                out,
                "{:<20} {:<8} {:<12} {:>10} {:>12} {:>12}  {}",
                r.benchmark,
                r.params,
                r.algo.to_string(),
                opt(r.traces),
                opt(r.executions),
                t,
                r.status
            )?;
        }
    }
    let rows: Vec<&Row> = results.iter().map(|(r, _)| r).collect();
    if rows.iter().any(|r| r.status != "ok" && r.status != "violation") {
        return Ok(ExitCode::from(1));
    }
    Ok(if rows.iter().any(|r| r.status == "violation") { ExitCode::from(2) } else { ExitCode::SUCCESS })
}

#[derive(Serialize)]
struct ConsistencyOutput {
    consistent: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    witness: Option<Vec<evdpor::Event>>,
}

/// Exit 0 consistent, 1 inconsistent, 2 malformed input.
fn cmd_check_consistency(path: &Path, witness: bool, json: bool) -> ExitCode {
    let res = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .and_then(|s| serde_json::from_str::<ConsistencyGraph>(&s).with_context(|| format!("{}: invalid graph JSON", path.display())))
        .and_then(|g| Ok(check_consistency(&g)?));
    let lin = match res {
        Ok(l) => l,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    if json {
        let o = ConsistencyOutput { consistent: lin.is_some(), witness: if witness { lin.clone() } else { None } };
        println!("{}", serde_json::to_string_pretty(&o).expect("serializable"));
    } else {
        println!("{}", if lin.is_some() { "consistent" } else { "inconsistent" });
        if let (true, Some(l)) = (witness, &lin) {
            for e in l {
                println!("{e}");
            }
        }
    }
    if lin.is_some() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn cmd_emit_corpus(dir: &Path) -> Result<ExitCode> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for (name, params) in bench_programs::corpus() {
        let path = dir.join(bench_programs::corpus_file_name(name, &params));
        std::fs::write(&path, bench_programs::source(name, &params)?).with_context(|| format!("writing {}", path.display()))?;
        println!("{}", path.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_list() -> ExitCode {
    for b in BENCHMARKS {
        let ps: Vec<String> = b.params.iter().map(|(p, lo, hi)| format!("{p}={lo}..{hi}")).collect();
        let kind = if b.non_branching { "non-branching" } else { "branching" };
        println!("{:<20} {:<12} {:<14} {}", b.name, ps.join(","), kind, b.about);
    }
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let res = match cli.cmd {
        Cmd::Run { program, params, algo, json, cap } => cmd_run(&program, &params, algo, json, cap),
        Cmd::Compare { specs, algo, csv, json, cap, jobs } => cmd_compare(&specs, &algo, csv, json, cap, jobs),
        Cmd::CheckConsistency { graph, witness, json } => Ok(cmd_check_consistency(&graph, witness, json)),
        Cmd::EmitCorpus { dir } => cmd_emit_corpus(&dir),
        Cmd::List => Ok(cmd_list()),
    };
    match res {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
