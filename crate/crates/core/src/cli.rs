//! The `qlam` command-line frontend.
//!
//! Exit codes: 0 ok, 1 invalid program, 2 parse error, 3 resource guard,
//! 4 property failure.

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::analysis::{
    estimate_limit, suite_completeness, suite_diamond, suite_factorization, suite_invariants,
    suite_random_descent, OracleGuard, PropertyVerdict, SuiteParams,
};
use crate::program::{parse_program_file, state_amplitudes_json, ProgramFileError};
use crate::quantum::DEFAULT_MAX_QUBITS;
use crate::rewrite::{
    Choice, Engine, Mode, RuleKind, RunConfig, Schedule, SchedulerKind, StopReason, Trace,
};
use crate::syntax::{GateTable, Position};

const EXIT_OK: i32 = 0;
const EXIT_INVALID: i32 = 1;
const EXIT_PARSE: i32 = 2;
const EXIT_GUARD: i32 = 3;
const EXIT_PROPERTY: i32 = 4;

#[derive(Parser)]
#[command(
    name = "qlam",
    about = "Rewriting engine for an untyped quantum λ-calculus over multidistributions"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Parse and validity-check a program file.
    Check {
        file: PathBuf,
        /// Extra gates, JSON: {"NAME": {"arity": 1, "matrix": [[[re,im],..],..]}}
        #[arg(long)]
        gates: Option<PathBuf>,
    },
    /// Reduce a program file, tracing snf mass.
    Run(RunArgs),
    /// Run a property suite over generated programs.
    Props(PropsArgs),
}

#[derive(Args)]
struct RunArgs {
    file: PathBuf,
    #[arg(long, value_enum, default_value_t = ModeArg::Strict)]
    mode: ModeArg,
    #[arg(long, value_enum, default_value_t = SchedulerArg::Leftmost)]
    scheduler: SchedulerArg,
    /// Schedule script (JSON lines), required for --scheduler script.
    #[arg(long)]
    script: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 200)]
    max_steps: usize,
    /// Plateau threshold on the snf mass.
    #[arg(long, default_value_t = 1e-9)]
    delta: f64,
    /// Plateau window (steps).
    #[arg(long, default_value_t = 8)]
    window: usize,
    #[arg(long, default_value_t = DEFAULT_MAX_QUBITS)]
    max_qubits: u32,
    #[arg(long)]
    gates: Option<PathBuf>,
    /// Write the trace as JSON lines.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Write the Pr curve as CSV (step, pr).
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct PropsArgs {
    #[arg(value_enum)]
    suite: SuiteArg,
    #[arg(long, default_value_t = 1000)]
    count: usize,
    #[arg(long, default_value_t = 12)]
    size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Enumeration depth for random-descent.
    #[arg(long, default_value_t = 6)]
    depth: usize,
    /// Write the verdicts as a JSON array.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    General,
    Surface,
    Strict,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::General => Mode::General,
            ModeArg::Surface => Mode::Surface,
            ModeArg::Strict => Mode::StrictSurface,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SchedulerArg {
    Leftmost,
    Rightmost,
    Random,
    Script,
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteArg {
    Diamond,
    RandomDescent,
    Factorization,
    Completeness,
    Invariants,
}

pub fn main() -> i32 {
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::Check { file, gates } => cmd_check(&file, gates.as_deref()),
        Cmd::Run(args) => cmd_run(&args),
        Cmd::Props(args) => cmd_props(&args),
    }
}

fn load_gates(extra: Option<&std::path::Path>) -> Result<GateTable, (i32, String)> {
    let mut gates = GateTable::default();
    if let Some(path) = extra {
        let text = fs::read_to_string(path)
            .map_err(|e| (EXIT_PARSE, format!("{}: {e}", path.display())))?;
        gates
            .load_json(&text)
            .map_err(|e| (EXIT_PARSE, e.to_string()))?;
    }
    Ok(gates)
}

fn cmd_check(file: &std::path::Path, gates: Option<&std::path::Path>) -> i32 {
    let gates = match load_gates(gates) {
        Ok(g) => g,
        Err((code, msg)) => {
            eprintln!("error: {msg}");
            return code;
        }
    };
    let text = match fs::read_to_string(file) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {}: {e}", file.display());
            return EXIT_PARSE;
        }
    };
    match parse_program_file(&text, &gates) {
        Ok(p) => {
            println!("valid");
            println!("term: {}", p.term());
            println!("qubits: {}", p.state().qubit_count());
            let engine = Engine::new(gates, DEFAULT_MAX_QUBITS);
            for r in crate::analysis::describe_redexes(&engine, &p) {
                println!("redex: {r}");
            }
            EXIT_OK
        }
        Err(ProgramFileError::Program(crate::program::ProgramError::InvalidTerm(report))) => {
            println!("{report}");
            EXIT_INVALID
        }
        Err(ProgramFileError::Program(e)) => {
            println!("invalid program: {e}");
            EXIT_INVALID
        }
        Err(e) => {
            eprintln!("parse error: {e}");
            EXIT_PARSE
        }
    }
}

fn schedule_json(s: &Schedule) -> serde_json::Value {
    json!(s
        .0
        .iter()
        .map(|c| match c {
            Choice::Skip => json!({ "action": "skip" }),
            Choice::Fire(r) => json!({
                "action": "fire",
                "pos": r.pos.to_string(),
                "kind": r.kind.name(),
                "surface": r.is_surface,
            }),
        })
        .collect::<Vec<_>>())
}

fn trace_record(
    step: usize,
    mode: Mode,
    schedule: Option<&Schedule>,
    m: &crate::program::MultiDistribution,
    engine: &Engine,
) -> serde_json::Value {
    json!({
        "step": step,
        "mode": mode.name(),
        "schedule": schedule.map(schedule_json),
        "entries": m.entries().iter().map(|(w, p)| json!({
            "weight": w,
            "state": state_amplitudes_json(p.state()),
            "term": p.term().to_string(),
            "snf": engine.is_snf(p),
        })).collect::<Vec<_>>(),
        "pr_snf": engine.snf_mass(m),
    })
}

fn read_script(path: &std::path::Path) -> Result<Vec<Schedule>, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let v: serde_json::Value =
            serde_json::from_str(line).map_err(|e| format!("script line {}: {e}", lineno + 1))?;
        let arr = v
            .as_array()
            .ok_or_else(|| format!("script line {}: expected an array", lineno + 1))?;
        let mut choices = Vec::new();
        for item in arr {
            if item == "skip" || item.get("action").and_then(|a| a.as_str()) == Some("skip") {
                choices.push(Choice::Skip);
                continue;
            }
            let pos_str = item
                .get("pos")
                .and_then(|p| p.as_str())
                .ok_or_else(|| format!("script line {}: missing pos", lineno + 1))?;
            let kind_str = item
                .get("kind")
                .and_then(|k| k.as_str())
                .ok_or_else(|| format!("script line {}: missing kind", lineno + 1))?;
            let pos: Position = pos_str
                .parse()
                .map_err(|e| format!("line {}: {e}", lineno + 1))?;
            let kind = RuleKind::from_name(kind_str)
                .ok_or_else(|| format!("script line {}: unknown kind {kind_str}", lineno + 1))?;
            let is_surface = pos.is_surface();
            choices.push(Choice::Fire(crate::rewrite::RedexOccurrence {
                pos,
                kind,
                is_surface,
            }));
        }
        out.push(Schedule(choices));
    }
    Ok(out)
}

fn cmd_run(args: &RunArgs) -> i32 {
    let gates = match load_gates(args.gates.as_deref()) {
        Ok(g) => g,
        Err((code, msg)) => {
            eprintln!("error: {msg}");
            return code;
        }
    };
    let text = match fs::read_to_string(&args.file) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {}: {e}", args.file.display());
            return EXIT_PARSE;
        }
    };
    let program = match parse_program_file(&text, &gates) {
        Ok(p) => p,
        Err(ProgramFileError::Program(e)) => {
            eprintln!("invalid program: {e}");
            return EXIT_INVALID;
        }
        Err(e) => {
            eprintln!("parse error: {e}");
            return EXIT_PARSE;
        }
    };

    if args.max_steps < 1 {
        eprintln!("error: --max-steps must be at least 1");
        return EXIT_PARSE;
    }
    if args.delta <= 0.0 {
        eprintln!("error: --delta must be positive");
        return EXIT_PARSE;
    }
    let scheduler = match args.scheduler {
        SchedulerArg::Leftmost => SchedulerKind::Leftmost,
        SchedulerArg::Rightmost => SchedulerKind::Rightmost,
        SchedulerArg::Random => SchedulerKind::Random,
        SchedulerArg::Script => {
            let Some(path) = &args.script else {
                eprintln!("error: --scheduler script requires --script FILE");
                return EXIT_PARSE;
            };
            match read_script(path) {
                Ok(s) => SchedulerKind::Script(s),
                Err(e) => {
                    eprintln!("error: {e}");
                    return EXIT_PARSE;
                }
            }
        }
    };
    let mode: Mode = args.mode.into();
    let cfg = RunConfig {
        mode,
        scheduler,
        seed: args.seed,
        max_steps: args.max_steps,
        delta: args.delta,
        window: args.window.max(1),
    };
    let engine = Engine::new(gates, args.max_qubits);
    let m0 = crate::program::MultiDistribution::singleton(program.clone());
    let trace = match engine.run(m0, &cfg) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_GUARD;
        }
    };

    if let Err(e) = emit_trace(&engine, mode, &trace, args) {
        eprintln!("error: {e}");
        return EXIT_GUARD;
    }

    // Limit estimate from a fresh strict run with the same horizon.
    let report = estimate_limit(
        &engine,
        &program,
        mode,
        args.max_steps,
        args.delta,
        args.window.max(1),
    );
    let final_m = trace.final_mdist();
    println!("final: {final_m}");
    let stop = match trace.stop {
        StopReason::MaxSteps => "max-steps",
        StopReason::Stable => "stable",
        StopReason::NormalForm => "normal-form",
        StopReason::ScriptExhausted => "script-exhausted",
    };
    match report {
        Ok(r) => println!(
            "pr={:.9} limit={:.9} stable={} steps={} stop={stop}",
            trace.final_pr(),
            r.limit_estimate,
            r.stable,
            trace.steps.len(),
        ),
        Err(_) => println!(
            "pr={:.9} steps={} stop={stop}",
            trace.final_pr(),
            trace.steps.len(),
        ),
    }
    EXIT_OK
}

fn emit_trace(engine: &Engine, mode: Mode, trace: &Trace, args: &RunArgs) -> std::io::Result<()> {
    for (k, step) in trace.steps.iter().enumerate() {
        println!(
            "step={} pr={:.9} entries={}",
            k + 1,
            step.pr,
            step.result.len()
        );
    }
    if let Some(path) = &args.json {
        let mut f = fs::File::create(path)?;
        writeln!(f, "{}", trace_record(0, mode, None, &trace.initial, engine))?;
        for (k, step) in trace.steps.iter().enumerate() {
            writeln!(
                f,
                "{}",
                trace_record(k + 1, mode, Some(&step.schedule), &step.result, engine)
            )?;
        }
    }
    if let Some(path) = &args.csv {
        let mut f = fs::File::create(path)?;
        writeln!(f, "step,pr")?;
        for (step, pr) in trace.pr_curve() {
            writeln!(f, "{step},{pr}")?;
        }
    }
    Ok(())
}

fn cmd_props(args: &PropsArgs) -> i32 {
    let engine = Engine::default();
    let params = SuiteParams {
        count: args.count,
        size: args.size,
        seed: args.seed,
    };
    let guard = OracleGuard::default();
    let verdicts: Vec<PropertyVerdict> = match args.suite {
        SuiteArg::Diamond => vec![suite_diamond(&engine, &params, &guard)],
        SuiteArg::RandomDescent => {
            vec![suite_random_descent(&engine, &params, args.depth, &guard)]
        }
        SuiteArg::Factorization => vec![suite_factorization(&engine, &params, 4, &guard)],
        SuiteArg::Completeness => vec![suite_completeness(&engine, &params, 3, 9, &guard)],
        SuiteArg::Invariants => suite_invariants(&engine, &params),
    };
    let mut failed = false;
    for v in &verdicts {
        println!(
            "property={} tried={} passed={} failed={} inconclusive={} skipped={}",
            v.property, v.tried, v.passed, v.failed, v.inconclusive, v.skipped
        );
        for c in &v.counterexamples {
            println!("  counterexample: {} -- {}", c.term, c.detail);
        }
        failed |= v.failed > 0;
    }
    if let Some(path) = &args.json {
        match serde_json::to_string_pretty(&verdicts) {
            Ok(s) => {
                if let Err(e) = fs::write(path, s) {
                    eprintln!("error: {}: {e}", path.display());
                    return EXIT_GUARD;
                }
            }
            Err(e) => {
                eprintln!("error: {e}");
                return EXIT_GUARD;
            }
        }
    }
    if failed {
        EXIT_PROPERTY
    } else {
        EXIT_OK
    }
}
