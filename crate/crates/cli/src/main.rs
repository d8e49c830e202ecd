//! Command-line front end: validate, solve, brute-force, explain, and
//! evaluate independent-choice decision theories.
//!
//! Exit codes: 0 success, 1 validation or computation failure, 2 parse
//! error, 3 resource bound exceeded. Diagnostics go to the error stream;
//! results go to standard output and are deterministic for fixed inputs.

use clap::{Parser, Subcommand, ValueEnum};
use icldt_core::abduction::{self, Abductor, AbductionError};
use icldt_core::emit;
use icldt_core::model::Theory;
use icldt_core::oracle::{self, OracleError, WorldTable};
use icldt_core::parse::{parse_formula, parse_theory};
use icldt_core::solver::{self, SolveError};
use icldt_core::validate::{self, ValidationReport};
use serde_json::json;
use std::path::PathBuf;
use std::process::ExitCode;

const EXIT_FAILURE: u8 = 1;
const EXIT_PARSE: u8 = 2;
const EXIT_RESOURCE: u8 = 3;

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Parser)]
#[command(
    name = "icldt",
    version,
    about = "Solve single-agent decision problems written as independent-choice theories"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Theory file.
    file: PathBuf,
    /// Output format.
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Probability tolerance for alternative sums.
    #[arg(long, default_value_t = validate::DEFAULT_PROB_TOLERANCE)]
    tolerance: f64,
    /// World bound for semantic checks and enumeration.
    #[arg(long, default_value_t = validate::DEFAULT_MAX_WORLDS)]
    max_worlds: u128,
}

#[derive(Subcommand)]
enum Command {
    /// Check a theory and print every finding.
    Validate {
        #[command(flatten)]
        common: Common,
    },
    /// Derive the optimal policy for every decision.
    Solve {
        #[command(flatten)]
        common: Common,
        /// Also write the policy as a strategy file.
        #[arg(long)]
        emit_strategy: Option<PathBuf>,
    },
    /// Brute-force the optimal strategy by full enumeration.
    Oracle {
        #[command(flatten)]
        common: Common,
        /// Bound on the number of strategies to enumerate.
        #[arg(long, default_value_t = oracle::DEFAULT_MAX_STRATEGIES)]
        max_strategies: u128,
    },
    /// List the minimal explanations of a query and their probability.
    Explain {
        #[command(flatten)]
        common: Common,
        /// Query formula, e.g. "bs(pos) & a(hi)".
        #[arg(long)]
        query: String,
    },
    /// Expected utility of an explicitly given strategy.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Strategy file: lines "decision: atom, atom -> action" plus one
        /// "decision: default -> action" per decision.
        #[arg(long)]
        strategy: PathBuf,
    },
}

fn fail(code: u8, message: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {message}");
    ExitCode::from(code)
}

fn read(path: &PathBuf) -> Result<String, ExitCode> {
    std::fs::read_to_string(path)
        .map_err(|e| fail(EXIT_FAILURE, format!("cannot read {}: {e}", path.display())))
}

fn load_theory(common: &Common) -> Result<(Theory, ValidationReport), ExitCode> {
    let source = read(&common.file)?;
    let theory = parse_theory(&source).map_err(|e| fail(EXIT_PARSE, e))?;
    let report = validate::validate(&theory, common.tolerance, common.max_worlds);
    Ok((theory, report))
}

/// Load and insist the theory is accepted; warnings go to stderr.
fn load_accepted(common: &Common) -> Result<Theory, ExitCode> {
    let (theory, report) = load_theory(common)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    if !report.is_ok() {
        for e in &report.errors {
            eprintln!("error: {e}");
        }
        return Err(ExitCode::from(EXIT_FAILURE));
    }
    Ok(theory)
}

fn report_json(report: &ValidationReport) -> serde_json::Value {
    let finding = |f: &validate::Finding| {
        json!({
            "code": f.code.as_str(),
            "location": f.location,
            "message": f.message,
        })
    };
    json!({
        "errors": report.errors.iter().map(finding).collect::<Vec<_>>(),
        "warnings": report.warnings.iter().map(finding).collect::<Vec<_>>(),
        "semantic_checks_run": report.semantic_checks_run,
    })
}

fn run_validate(common: &Common) -> Result<ExitCode, ExitCode> {
    let (_, report) = load_theory(common)?;
    match common.format {
        Format::Json => println!("{}", report_json(&report)),
        Format::Text => {
            for f in &report.errors {
                println!("error: {f}");
            }
            for f in &report.warnings {
                println!("warning: {f}");
            }
            if !report.semantic_checks_run {
                println!("note: semantic checks skipped (world bound)");
            }
            println!(
                "{} error(s), {} warning(s)",
                report.errors.len(),
                report.warnings.len()
            );
        }
    }
    Ok(if report.is_ok() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_FAILURE)
    })
}

fn solve_exit(e: SolveError) -> ExitCode {
    match e {
        SolveError::BadStrategy(_) => fail(EXIT_PARSE, e),
        _ => fail(EXIT_FAILURE, e),
    }
}

fn run_solve(common: &Common, emit_strategy: Option<&PathBuf>) -> Result<ExitCode, ExitCode> {
    let theory = load_accepted(common)?;
    let result = solver::solve(&theory).map_err(solve_exit)?;
    for w in &result.warnings {
        eprintln!("warning: {w}");
    }
    match common.format {
        Format::Json => print!("{}", emit::policy_json(&theory, &result)),
        Format::Text => print!("{}", emit::render_policy_text(&theory, &result)),
    }
    if let Some(path) = emit_strategy {
        let rendered = emit::render_strategy(&theory, &result);
        std::fs::write(path, rendered).map_err(|e| {
            fail(EXIT_FAILURE, format!("cannot write {}: {e}", path.display()))
        })?;
    }
    Ok(ExitCode::SUCCESS)
}

fn oracle_exit(e: OracleError) -> ExitCode {
    match e {
        OracleError::TooLarge { .. } => fail(EXIT_RESOURCE, e),
        OracleError::BadWorld(_) => fail(EXIT_FAILURE, e),
    }
}

fn run_oracle(common: &Common, max_strategies: u128) -> Result<ExitCode, ExitCode> {
    let theory = load_accepted(common)?;
    let table = WorldTable::build(&theory, common.max_worlds).map_err(oracle_exit)?;
    let (best, value) = oracle::optimal_strategy(&table, max_strategies).map_err(oracle_exit)?;
    let rendered = best.render(&table);
    match common.format {
        Format::Json => {
            let lines: Vec<&str> = rendered.lines().collect();
            println!("{}", json!({ "strategy": lines, "value": emit::json_number(value) }));
        }
        Format::Text => {
            print!("{rendered}");
            println!("value: {value}");
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn run_explain(common: &Common, query: &str) -> Result<ExitCode, ExitCode> {
    let theory = load_accepted(common)?;
    let formula = parse_formula(query).map_err(|e| fail(EXIT_PARSE, e))?;
    let mut abductor = Abductor::new(&theory);
    let k = abduction::make_exclusive(&theory, &abductor.formula(&formula));
    for name in abductor.undefined_atoms() {
        eprintln!("warning: atom '{name}' has no rules and is not in any block");
    }
    let empty = std::collections::BTreeSet::new();
    let probability = match abduction::prob_set(&theory, &k, &empty) {
        Ok(p) => Some(p),
        Err(AbductionError::UnconditionedAgentChoice { .. }) => None,
        Err(e) => return Err(fail(EXIT_FAILURE, e)),
    };
    match common.format {
        Format::Json => {
            let explanations: Vec<Vec<String>> = k
                .members()
                .iter()
                .map(|kappa| kappa.iter().map(|&a| theory.atom_text(a)).collect())
                .collect();
            let prob_value = probability.map_or(serde_json::Value::Null, emit::json_number);
            println!("{}", json!({ "explanations": explanations, "probability": prob_value }));
        }
        Format::Text => {
            for kappa in k.members() {
                println!("{}", abduction::render_choice(&theory, kappa));
            }
            match probability {
                Some(p) => println!("probability: {p}"),
                None => println!("probability: undefined (depends on decisions)"),
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn run_evaluate(common: &Common, strategy: &PathBuf) -> Result<ExitCode, ExitCode> {
    let theory = load_accepted(common)?;
    let text = read(strategy)?;
    let strategies =
        emit::parse_strategy(&theory, &text).map_err(|e| fail(EXIT_PARSE, e))?;
    let value = solver::evaluate(&theory, &strategies).map_err(solve_exit)?;
    match common.format {
        Format::Json => println!("{}", json!({ "value": emit::json_number(value) })),
        Format::Text => println!("value: {value}"),
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let run = match &cli.command {
        Command::Validate { common } => run_validate(common),
        Command::Solve { common, emit_strategy } => {
            run_solve(common, emit_strategy.as_ref())
        }
        Command::Oracle { common, max_strategies } => run_oracle(common, *max_strategies),
        Command::Explain { common, query } => run_explain(common, query),
        Command::Evaluate { common, strategy } => run_evaluate(common, strategy),
    };
    match run {
        Ok(code) => code,
        Err(code) => code,
    }
}
