//! neurq command line: SQL shell, plan explainers, CSV loading, and the
//! benchmark runner.

mod render;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use neurq_core::bench::{parse_config_text, run_bench, BenchConfig, Workload};
use neurq_core::opt::Objective;
use neurq_core::session::{Session, StatementOutcome};
use neurq_core::sql::parse_all;
use std::io::{BufRead, Write};
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "neurq", about = "An embeddable engine for PREDICT-extended SQL", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Interactive SQL shell (statements end with ';').
    Shell(InitArgs),
    /// Print the rewritten logical plan with fingerprints.
    Explain {
        #[command(flatten)]
        init: InitArgs,
        /// SQL text of one SELECT statement.
        sql: String,
    },
    /// Print the chosen physical plan with cost/quality annotations.
    ExplainPhysical {
        #[command(flatten)]
        init: InitArgs,
        /// Bounded objective: quality>=<q> or latency<=<ms>ms.
        #[arg(long)]
        objective: Option<String>,
        sql: String,
    },
    /// Bulk-load a CSV file (header row required) into a table.
    LoadCsv {
        #[command(flatten)]
        init: InitArgs,
        #[arg(long)]
        table: String,
        #[arg(long)]
        file: PathBuf,
    },
    /// Run a benchmark workload and emit a metrics report.
    Bench(BenchArgs),
}

#[derive(Args)]
struct InitArgs {
    /// SQL script run before the command (DDL, INSERTs, CREATE MODEL).
    #[arg(long)]
    init: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Workload: r (train-and-predict) or t (multi-tenant embedding).
    #[arg(long)]
    workload: Option<String>,
    /// Config file in key = value form.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override single keys, e.g. --set engines=8 --set batch.policy=bucket.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Comma list of engine counts to sweep; single count runs once.
    #[arg(long)]
    engines: Option<String>,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write plot-ready CSV rows here.
    #[arg(long)]
    csv: Option<PathBuf>,
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = dispatch(cli) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Shell(init) => shell(init),
        Command::Explain { init, sql } => {
            let session = session_with_init(&init)?;
            print!("{}", session.explain(&sql)?);
            Ok(())
        }
        Command::ExplainPhysical {
            init,
            objective,
            sql,
        } => {
            let session = session_with_init(&init)?;
            let objective = parse_objective(objective.as_deref())?;
            print!("{}", session.explain_physical(&sql, objective)?);
            Ok(())
        }
        Command::LoadCsv { init, table, file } => {
            let session = session_with_init(&init)?;
            let id = session
                .catalog
                .table_id(&table)
                .with_context(|| format!("unknown table '{table}'"))?;
            let data = std::fs::File::open(&file)
                .with_context(|| format!("open {}", file.display()))?;
            let (version, rows) = session.catalog.load_csv(id, data)?;
            println!("loaded {rows} rows into {table} at {version}");
            Ok(())
        }
        Command::Bench(args) => bench(args),
    }
}

fn parse_objective(text: Option<&str>) -> Result<Objective> {
    match text {
        None => Ok(Objective::default()),
        Some(t) => Objective::parse(t).map_err(|e| anyhow::anyhow!(e)),
    }
}

fn session_with_init(init: &InitArgs) -> Result<Session> {
    let session = Session::with_defaults();
    if let Some(path) = &init.init {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("read {}", path.display()))?;
        run_script(&session, &text)?;
    }
    Ok(session)
}

fn run_script(session: &Session, text: &str) -> Result<()> {
    for stmt in parse_all(text)? {
        let sql = neurq_core::sql::unparse(&stmt);
        session.execute(&sql)?;
    }
    Ok(())
}

fn shell(init: InitArgs) -> Result<()> {
    let session = session_with_init(&init)?;
    let stdin = std::io::stdin();
    let mut buffer = String::new();
    let interactive = atty_stdin();
    if interactive {
        println!("neurq shell — statements end with ';', .help for commands");
    }
    loop {
        if interactive {
            if buffer.is_empty() {
                print!("neurq> ");
            } else {
                print!("   ...> ");
            }
            std::io::stdout().flush().ok();
        }
        let mut line = String::new();
        if stdin.lock().read_line(&mut line)? == 0 {
            break;
        }
        let trimmed = line.trim();
        if buffer.is_empty() && trimmed.starts_with('.') {
            match dot_command(&session, trimmed) {
                Ok(true) => break,
                Ok(false) => {}
                Err(e) => eprintln!("error: {e}"),
            }
            continue;
        }
        buffer.push_str(&line);
        if !buffer.trim_end().ends_with(';') {
            continue;
        }
        let sql = buffer.trim().trim_end_matches(';').to_string();
        buffer.clear();
        if sql.is_empty() {
            continue;
        }
        match session.execute(&sql) {
            Ok(outcome) => print_outcome(&outcome),
            Err(e) => eprintln!("error: {e}"),
        }
    }
    Ok(())
}

fn atty_stdin() -> bool {
    // Good enough: treat piped stdin as non-interactive.
    std::io::IsTerminal::is_terminal(&std::io::stdin())
}

fn dot_command(session: &Session, line: &str) -> Result<bool> {
    let mut parts = line.split_whitespace();
    match parts.next().unwrap_or("") {
        ".quit" | ".exit" => return Ok(true),
        ".help" => {
            println!(".tables            list tables");
            println!(".models            list models");
            println!(".load TABLE FILE   bulk-load a CSV file");
            println!(".quit              leave the shell");
        }
        ".tables" => {
            for name in session.catalog.table_names() {
                println!("{name}");
            }
        }
        ".models" => {
            for name in session.catalog.model_names() {
                println!("{name}");
            }
        }
        ".load" => {
            let table = parts.next().context(".load TABLE FILE")?;
            let file = parts.next().context(".load TABLE FILE")?;
            let id = session
                .catalog
                .table_id(table)
                .with_context(|| format!("unknown table '{table}'"))?;
            let data = std::fs::File::open(file)?;
            let (version, rows) = session.catalog.load_csv(id, data)?;
            println!("loaded {rows} rows at {version}");
        }
        other => bail!("unknown command '{other}' (.help lists commands)"),
    }
    Ok(false)
}

fn print_outcome(outcome: &StatementOutcome) {
    match outcome {
        StatementOutcome::Rows(rows) => {
            print!("{}", render::table(rows));
            println!("({} rows)", rows.rows.len());
        }
        StatementOutcome::TableCreated(name) => println!("created table {name}"),
        StatementOutcome::RowsInserted {
            table,
            count,
            version,
        } => println!("inserted {count} rows into {table} at {version}"),
        StatementOutcome::ModelRegistered(mv) => println!("registered model {mv}"),
        StatementOutcome::ModelDropped(name) => println!("dropped model {name}"),
    }
}

fn bench(args: BenchArgs) -> Result<()> {
    let mut config = BenchConfig::default();
    if let Some(w) = &args.workload {
        let workload =
            Workload::parse(w).with_context(|| format!("unknown workload '{w}'"))?;
        config = match workload {
            Workload::R => BenchConfig::default(),
            Workload::T => BenchConfig::workload_t_default(),
        };
    }
    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("read {}", path.display()))?;
        config = parse_config_text(config, &text).map_err(|e| anyhow::anyhow!(e))?;
    }
    for assignment in &args.sets {
        let (key, value) = assignment
            .split_once('=')
            .with_context(|| format!("--set expects KEY=VALUE, got '{assignment}'"))?;
        config.set(key, value).map_err(|e| anyhow::anyhow!(e))?;
    }
    let engine_counts: Vec<usize> = match &args.engines {
        None => vec![config.engines],
        Some(list) => list
            .split(',')
            .map(|p| p.trim().parse::<usize>())
            .collect::<Result<_, _>>()
            .with_context(|| format!("bad engine list '{list}'"))?,
    };
    let mut reports = Vec::new();
    for engines in engine_counts {
        let mut cfg = config.clone();
        cfg.engines = engines;
        eprintln!("running {}", cfg.config_id());
        reports.push(run_bench(&cfg)?);
    }
    let json = if reports.len() == 1 {
        reports[0].to_json()
    } else {
        let many: Vec<_> = reports.iter().collect();
        serde_json::to_string_pretty(&many)?
    };
    match &args.out {
        Some(path) => std::fs::write(path, &json)
            .with_context(|| format!("write {}", path.display()))?,
        None => println!("{json}"),
    }
    if let Some(path) = &args.csv {
        let mut csv = String::new();
        for (i, report) in reports.iter().enumerate() {
            let body = report.to_csv();
            if i == 0 {
                csv.push_str(&body);
            } else {
                // Skip the repeated header.
                if let Some(idx) = body.find('\n') {
                    csv.push_str(&body[idx + 1..]);
                }
            }
        }
        std::fs::write(path, csv).with_context(|| format!("write {}", path.display()))?;
    }
    Ok(())
}
