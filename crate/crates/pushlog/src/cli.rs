//! Command-line entry points: `run`, `inspect`, and `test`.
//!
//! `run` compiles a program, loads `<pred>.csv` files from the data
//! directory, executes the chosen engine(s) and writes answers as CSV.
//! `inspect` dumps the pruned rule application graph (DOT) and the
//! pretty-printed code-piece program. `test` runs every case directory under
//! a root with both engines and compares answer sets.
//!
//! Exit codes: 0 ok, 1 answer mismatch, 2 usage or input error.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::engine::{self, RunOptions};
use crate::frontend::parse_program;
use crate::storage::Database;
use crate::value::Value;
use crate::{compile_with, oracle, plangen, symbolic, Compiled, CompileOptions};

#[derive(Debug, Parser)]
#[command(name = "pushlog", about = "Datalog compiler and push-based runtime", version)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compile and execute a program over CSV data.
    Run(RunArgs),
    /// Compile only; dump the rule application graph and generated code.
    Inspect(InspectArgs),
    /// Run every case directory (program.dl + CSVs) with both engines.
    Test(TestArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum EngineKind {
    Push,
    Oracle,
    Both,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Program file.
    pub program: PathBuf,
    /// Directory holding one `<pred>.csv` per EDB predicate.
    #[arg(long, default_value = ".")]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value = "push")]
    pub engine: EngineKind,
    /// Write answers here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Print counters as JSON to stderr.
    #[arg(long)]
    pub stats: bool,
    /// Emit every derivation of an answer tuple instead of a set.
    #[arg(long)]
    pub multiset_answers: bool,
    /// Comma-separated override of the tabling plan (must cover all cycles).
    #[arg(long, value_delimiter = ',')]
    pub table: Option<Vec<String>>,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    /// Program file.
    pub program: PathBuf,
    /// Write the pruned rule application graph as DOT (`-` for stdout).
    #[arg(long)]
    pub dump_graph: Option<PathBuf>,
    /// Write the pretty-printed code pieces (`-` for stdout).
    #[arg(long)]
    pub emit_source: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub table: Option<Vec<String>>,
    #[arg(long)]
    pub multiset_answers: bool,
}

#[derive(Debug, Args)]
pub struct TestArgs {
    /// Root directory; every subdirectory with a `program.dl` is a case.
    pub cases: PathBuf,
}

/// Parse argv and execute; returns the process exit code.
pub fn main_from_args() -> i32 {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => cmd_run(&args),
        Command::Inspect(args) => cmd_inspect(&args),
        Command::Test(args) => cmd_test(&args),
    }
}

fn load_compiled(
    program_path: &Path,
    table: &Option<Vec<String>>,
    multiset: bool,
) -> Result<Compiled, String> {
    let text =
        fs::read_to_string(program_path).map_err(|e| format!("{}: {e}", program_path.display()))?;
    let program = parse_program(&text).map_err(|e| format!("{}: {e}", program_path.display()))?;
    let options = CompileOptions {
        tabling_override: table
            .as_ref()
            .map(|preds| preds.iter().cloned().collect::<BTreeSet<_>>()),
        dedup_answers: !multiset,
    };
    compile_with(&program, &options).map_err(|e| e.to_string())
}

fn write_answers(path: &Option<PathBuf>, answers: &[Vec<Value>]) -> Result<(), String> {
    let render = |answers: &[Vec<Value>], w: &mut dyn Write| -> Result<(), String> {
        let mut writer = csv::WriterBuilder::new().from_writer(w);
        for row in answers {
            let record: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writer.write_record(&record).map_err(|e| e.to_string())?;
        }
        writer.flush().map_err(|e| e.to_string())
    };
    match path {
        Some(p) => {
            let mut file = fs::File::create(p).map_err(|e| format!("{}: {e}", p.display()))?;
            render(answers, &mut file)
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            render(answers, &mut lock)
        }
    }
}

fn sorted_answers(set: &BTreeSet<Vec<Value>>) -> Vec<Vec<Value>> {
    set.iter().cloned().collect()
}

/// `run`: execute the push engine, the oracle, or both (comparing answers).
pub fn cmd_run(args: &RunArgs) -> i32 {
    match run_inner(args) {
        Ok(code) => code,
        Err(message) => {
            eprintln!("error: {message}");
            2
        }
    }
}

fn run_inner(args: &RunArgs) -> Result<i32, String> {
    let compiled = load_compiled(&args.program, &args.table, args.multiset_answers)?;
    let db = Database::load_dir(&args.data, &compiled.plan.edb_schemas)
        .map_err(|e| e.to_string())?;

    let push_outcome = if args.engine != EngineKind::Oracle {
        Some(
            engine::run(&compiled.plan, &db, RunOptions::default())
                .map_err(|e| e.to_string())?,
        )
    } else {
        None
    };
    let oracle_answers = if args.engine != EngineKind::Push {
        Some(oracle::naive_eval(&compiled.program, &db).answers(&compiled.program))
    } else {
        None
    };

    if let (Some(push), Some(oracle_set)) = (&push_outcome, &oracle_answers) {
        let push_set: BTreeSet<Vec<Value>> = push.answers.iter().cloned().collect();
        if push_set != *oracle_set {
            let mut diff: Vec<&Vec<Value>> = push_set.symmetric_difference(oracle_set).collect();
            diff.sort();
            let tuple = diff
                .first()
                .map(|t| {
                    t.iter()
                        .map(|v| v.to_string())
                        .collect::<Vec<_>>()
                        .join(",")
                })
                .unwrap_or_default();
            eprintln!("answer mismatch between engines; smallest differing tuple: ({tuple})");
            return Ok(1);
        }
    }

    match (&push_outcome, &oracle_answers) {
        (Some(push), _) => write_answers(&args.out, &push.answers)?,
        (None, Some(oracle_set)) => write_answers(&args.out, &sorted_answers(oracle_set))?,
        (None, None) => unreachable!(),
    }
    if args.stats {
        if let Some(push) = &push_outcome {
            let stats = serde_json::to_string(&push.counters).map_err(|e| e.to_string())?;
            eprintln!("{stats}");
        }
    }
    Ok(0)
}

/// `inspect`: write the DOT graph and/or pseudo-source.
pub fn cmd_inspect(args: &InspectArgs) -> i32 {
    match inspect_inner(args) {
        Ok(code) => code,
        Err(message) => {
            eprintln!("error: {message}");
            2
        }
    }
}

fn inspect_inner(args: &InspectArgs) -> Result<i32, String> {
    let compiled = load_compiled(&args.program, &args.table, args.multiset_answers)?;
    let emit = |target: &PathBuf, content: &str| -> Result<(), String> {
        if target.as_os_str() == "-" {
            print!("{content}");
            Ok(())
        } else {
            fs::write(target, content).map_err(|e| format!("{}: {e}", target.display()))
        }
    };
    if let Some(target) = &args.dump_graph {
        emit(target, &symbolic::to_dot(&compiled.graph, &compiled.program))?;
    }
    if let Some(target) = &args.emit_source {
        emit(target, &plangen::emit_pseudo_source(&compiled.plan))?;
    }
    eprintln!(
        "{} fact nodes, {} rule nodes, {} code pieces, tabled: {{{}}}",
        compiled.graph.fact_count(),
        compiled.graph.node_count(),
        compiled.plan.pieces.len(),
        compiled
            .tabling
            .predicates
            .iter()
            .cloned()
            .collect::<Vec<_>>()
            .join(", ")
    );
    Ok(0)
}

/// `test`: differential run over a directory of cases.
pub fn cmd_test(args: &TestArgs) -> i32 {
    let entries = match fs::read_dir(&args.cases) {
        Ok(entries) => entries,
        Err(e) => {
            eprintln!("error: {}: {e}", args.cases.display());
            return 2;
        }
    };
    let mut dirs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_dir() && p.join("program.dl").is_file())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        eprintln!("error: no case directories under {}", args.cases.display());
        return 2;
    }

    let mut failures = 0;
    let mut errors = 0;
    for dir in &dirs {
        let name = dir.file_name().unwrap_or_default().to_string_lossy();
        let run_args = RunArgs {
            program: dir.join("program.dl"),
            data: dir.clone(),
            engine: EngineKind::Both,
            out: Some(PathBuf::from("/dev/null")),
            stats: false,
            multiset_answers: false,
            table: None,
        };
        match run_inner(&run_args) {
            Ok(0) => println!("case {name}: ok"),
            Ok(_) => {
                println!("case {name}: MISMATCH");
                failures += 1;
            }
            Err(message) => {
                println!("case {name}: error: {message}");
                errors += 1;
            }
        }
    }
    if errors > 0 {
        2
    } else if failures > 0 {
        1
    } else {
        0
    }
}
