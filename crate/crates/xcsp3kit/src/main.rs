//! Command-line front end for the xcsp3 crate.
//!
//! Four subcommands: `validate` (parse and normalize, report a feature
//! summary), `check` (grade a candidate solution), `solve` (find, count or
//! optimize by exhaustive search), and `to-json` (JSON rendition of the
//! document). Diagnostics go to standard error, data to standard output.
//!
//! Exit codes are stable: 0 accept/SAT/valid, 1 reject/UNSAT/invalid,
//! 2 usage error or unsupported feature, 3 internal error or exhausted
//! budget.

use std::collections::HashMap;
use std::io::{IsTerminal, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};

use xcsp3::checker::{self, AssignmentStatus, CostCheck, SolType};
use xcsp3::model::{BuildOptions, Instance};
use xcsp3::semantics::Assignment;
use xcsp3::solver::{self, SearchConfig, SearchMode, SolveStatus};
use xcsp3::{xml, Error};

#[derive(Parser)]
#[command(
    name = "xcsp3kit",
    version,
    about = "Validate, check, solve and convert XCSP3-core instances"
)]
struct Cli {
    /// Drop all elements carrying this class before building (repeatable).
    #[arg(long = "drop-class", global = true, value_name = "CLASS")]
    drop_class: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse, validate and normalize an instance; report what it contains.
    Validate {
        /// Instance file (XCSP3 XML).
        file: PathBuf,
    },
    /// Check a candidate solution (an <instantiation> document) against an instance.
    Check {
        /// Instance file (XCSP3 XML).
        instance: PathBuf,
        /// Solution file (<instantiation> XML).
        solution: PathBuf,
    },
    /// Search an instance exhaustively: find one solution, count all, or optimize.
    Solve {
        /// Instance file (XCSP3 XML).
        file: PathBuf,
        /// What to search for.
        #[arg(long, value_enum, default_value_t = Mode::Sat)]
        mode: Mode,
        /// Stop counting after this many solutions (count mode only).
        #[arg(long, value_name = "N")]
        limit: Option<u64>,
        /// Node budget: give up after exploring this many search nodes.
        #[arg(long, value_name = "N")]
        nodes: Option<u64>,
        /// Time budget in seconds: give up after this much wall-clock time.
        #[arg(long, value_name = "S")]
        seconds: Option<f64>,
    },
    /// Emit the JSON rendition of an XCSP3 document on standard output.
    #[command(name = "to-json")]
    ToJson {
        /// Instance file (XCSP3 XML).
        file: PathBuf,
        /// Merge all same-named siblings into arrays so no key repeats.
        #[arg(long)]
        safe_mode: bool,
        /// Resolve as="..." aliases before converting.
        #[arg(long)]
        resolve_aliases: bool,
    },
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Mode {
    /// Find one solution.
    Sat,
    /// Count all solutions.
    Count,
    /// Find a provably optimal solution.
    Optimize,
}

/// Whether diagnostics on standard error should use ANSI color.
fn color_enabled() -> Result<bool, String> {
    match std::env::var("XCSP3KIT_COLOR") {
        Err(_) => Ok(std::io::stderr().is_terminal()),
        Ok(v) => match v.as_str() {
            "auto" => Ok(std::io::stderr().is_terminal()),
            "always" => Ok(true),
            "never" => Ok(false),
            other => Err(format!(
                "XCSP3KIT_COLOR must be one of auto, never, always (got \"{other}\")"
            )),
        },
    }
}

struct Reporter {
    color: bool,
}

impl Reporter {
    fn error(&self, err: &Error) {
        let prefix = self.paint("error", "\x1b[1;31m");
        let mut line = format!("{prefix}[{}]: {}", err.kind.label(), err.message);
        if let Some(loc) = err.location {
            line.push_str(&format!(" (line {}, column {})", loc.line, loc.column));
        }
        eprintln!("{line}");
    }

    fn usage(&self, message: &str) {
        let prefix = self.paint("error", "\x1b[1;31m");
        eprintln!("{prefix}: {message}");
    }

    fn warning(&self, message: &str) {
        let prefix = self.paint("warning", "\x1b[1;33m");
        eprintln!("{prefix}: {message}");
    }

    fn note(&self, message: &str) {
        eprintln!("note: {message}");
    }

    fn paint(&self, word: &str, code: &str) -> String {
        if self.color {
            format!("{code}{word}\x1b[0m")
        } else {
            word.to_string()
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let color = match color_enabled() {
        Ok(c) => c,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(2);
        }
    };
    let reporter = Reporter { color };
    let options = BuildOptions {
        drop_classes: cli.drop_class.clone(),
    };
    let code = run(&cli.command, &options, &reporter);
    ExitCode::from(code)
}

fn run(command: &Command, options: &BuildOptions, rep: &Reporter) -> u8 {
    match command {
        Command::Validate { file } => cmd_validate(file, options, rep),
        Command::Check { instance, solution } => cmd_check(instance, solution, options, rep),
        Command::Solve {
            file,
            mode,
            limit,
            nodes,
            seconds,
        } => cmd_solve(file, *mode, *limit, *nodes, *seconds, options, rep),
        Command::ToJson {
            file,
            safe_mode,
            resolve_aliases,
        } => cmd_tojson(file, *safe_mode, *resolve_aliases, rep),
    }
}

/// Reads a file; an unreadable path is a usage error (exit 2).
fn read_input(path: &Path, rep: &Reporter) -> Result<Vec<u8>, u8> {
    std::fs::read(path).map_err(|e| {
        rep.usage(&format!("cannot read {}: {e}", path.display()));
        2
    })
}

fn load_instance(path: &Path, options: &BuildOptions, rep: &Reporter) -> Result<Instance, u8> {
    let bytes = read_input(path, rep)?;
    let instance = (|| {
        let mut root = xml::load_document_bytes(&bytes)?;
        xml::resolve_aliases(&mut root)?;
        let frame = xml::validate_skeleton(&root)?;
        xcsp3::model::build_instance(&frame, options)
    })()
    .map_err(|err| {
        rep.error(&err);
        err.kind.exit_code() as u8
    })?;
    for warning in &instance.warnings {
        rep.warning(warning);
    }
    Ok(instance)
}

fn cmd_validate(file: &Path, options: &BuildOptions, rep: &Reporter) -> u8 {
    let instance = match load_instance(file, options, rep) {
        Ok(i) => i,
        Err(code) => return code,
    };
    let mut out = String::new();
    out.push_str(&format!("framework: {}\n", instance.framework));

    let defined = instance
        .cells
        .iter()
        .filter(|c| c.domain.is_some())
        .count();
    let undefined = instance.cells.len() - defined;
    let decls = instance.decls.len();
    let mut vars_line = format!(
        "variables: {defined} cell{} in {decls} declaration{}",
        plural(defined),
        plural(decls)
    );
    if undefined > 0 {
        vars_line.push_str(&format!(" ({undefined} undefined)"));
    }
    out.push_str(&vars_line);
    out.push('\n');

    // Constraint kinds in first-appearance order, with counts.
    let mut order: Vec<&str> = Vec::new();
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for c in &instance.constraints {
        let name = c.kind.name();
        if !counts.contains_key(name) {
            order.push(name);
        }
        *counts.entry(name).or_insert(0) += 1;
    }
    let total = instance.constraints.len();
    if total == 0 {
        out.push_str("0 constraints after expansion\n");
    } else {
        let parts: Vec<String> = order
            .iter()
            .map(|name| format!("{name}\u{d7}{}", counts[name]))
            .collect();
        out.push_str(&format!(
            "{total} constraint{} after expansion: {}\n",
            plural(total),
            parts.join(", ")
        ));
    }

    match instance.objectives.len() {
        0 => out.push_str("objectives: none\n"),
        1 => out.push_str("objectives: 1\n"),
        n => out.push_str(&format!(
            "objectives: {n} (combination: {})\n",
            match instance.combination {
                xcsp3::model::Combination::Lexico => "lexico",
                xcsp3::model::Combination::Pareto => "pareto",
            }
        )),
    }
    print!("{out}");
    let _ = std::io::stdout().flush();
    0
}

fn cmd_check(
    instance_path: &Path,
    solution_path: &Path,
    options: &BuildOptions,
    rep: &Reporter,
) -> u8 {
    let instance = match load_instance(instance_path, options, rep) {
        Ok(i) => i,
        Err(code) => return code,
    };
    let solution_bytes = match read_input(solution_path, rep) {
        Ok(b) => b,
        Err(code) => return code,
    };
    let solution_text = match std::str::from_utf8(&solution_bytes) {
        Ok(t) => t,
        Err(_) => {
            rep.usage(&format!(
                "{} is not valid UTF-8",
                solution_path.display()
            ));
            return 2;
        }
    };
    let result = checker::parse_solution(&instance, solution_text)
        .and_then(|sol| Ok((checker::check_solution(&instance, &sol)?, sol)));
    let (verdict, sol) = match result {
        Ok(pair) => pair,
        Err(err) => {
            rep.error(&err);
            return err.kind.exit_code() as u8;
        }
    };

    let mut out = String::new();
    match &verdict.assignment_status {
        AssignmentStatus::Complete => out.push_str("assignment: complete\n"),
        AssignmentStatus::MissingVars(names) => {
            out.push_str(&format!("assignment: missing-vars {}\n", names.join(" ")));
        }
        AssignmentStatus::OutOfDomain(names) => {
            out.push_str(&format!("assignment: out-of-domain {}\n", names.join(" ")));
        }
    }
    if !verdict.per_constraint.is_empty() {
        out.push_str(&format!("constraints: {}\n", verdict.per_constraint.len()));
        for entry in &verdict.per_constraint {
            if !entry.satisfied {
                out.push_str(&format!("violated: {}\n", entry.provenance));
            }
        }
    }
    for value in &verdict.objective_values {
        out.push_str(&format!("objective: {value}\n"));
    }
    match &verdict.cost_check {
        CostCheck::Match => {
            out.push_str(&format!("cost: match {}\n", sol.cost.unwrap()));
        }
        CostCheck::Mismatch { declared, computed } => {
            out.push_str(&format!(
                "cost: mismatch expected {computed} (declared {declared})\n"
            ));
        }
        CostCheck::NotApplicable => {}
    }
    let ignored: Vec<&str> = instance
        .useless_cells()
        .filter(|&c| instance.cells[c].domain.is_some())
        .map(|c| instance.cells[c].name.as_str())
        .collect();
    if !ignored.is_empty() {
        out.push_str(&format!("useless ignored: {}\n", ignored.join(" ")));
    }
    out.push_str(&format!(
        "verdict: {}\n",
        if verdict.accepted { "accept" } else { "reject" }
    ));
    for note in &verdict.notes {
        rep.note(note);
    }
    print!("{out}");
    let _ = std::io::stdout().flush();
    if verdict.accepted {
        0
    } else {
        1
    }
}

fn cmd_solve(
    file: &Path,
    mode: Mode,
    limit: Option<u64>,
    nodes: Option<u64>,
    seconds: Option<f64>,
    options: &BuildOptions,
    rep: &Reporter,
) -> u8 {
    if limit.is_some() && mode != Mode::Count {
        rep.usage("--limit only applies to --mode count");
        return 2;
    }
    if let Some(s) = seconds {
        if !s.is_finite() || s < 0.0 {
            rep.usage("--seconds must be a non-negative number");
            return 2;
        }
    }
    let instance = match load_instance(file, options, rep) {
        Ok(i) => i,
        Err(code) => return code,
    };
    let config = SearchConfig {
        mode: match mode {
            Mode::Sat => SearchMode::FindOne,
            Mode::Count => SearchMode::CountAll { limit },
            Mode::Optimize => SearchMode::Optimize,
        },
        node_budget: nodes,
        time_budget: seconds.map(Duration::from_secs_f64),
    };
    let result = match solver::solve(&instance, &config) {
        Ok(r) => r,
        Err(err) => {
            rep.error(&err);
            return err.kind.exit_code() as u8;
        }
    };
    for note in &result.notes {
        rep.note(note);
    }
    let mut out = String::new();
    let code = match result.status {
        SolveStatus::Sat => {
            if let SearchMode::CountAll { .. } = config.mode {
                let count = result.count.unwrap_or(0);
                out.push_str(&format!("count: {count}\n"));
                u8::from(count == 0)
            } else {
                out.push_str("SAT\n");
                if let Some(witness) = &result.witness {
                    out.push_str(&witness_xml(&instance, witness, SolType::Solution, None));
                }
                0
            }
        }
        SolveStatus::Unsat => {
            if let SearchMode::CountAll { .. } = config.mode {
                out.push_str("count: 0\n");
            } else {
                out.push_str("UNSAT\n");
            }
            1
        }
        SolveStatus::Optimum(cost) => {
            out.push_str(&format!("OPTIMUM {cost}\n"));
            if let Some(witness) = &result.witness {
                out.push_str(&witness_xml(
                    &instance,
                    witness,
                    SolType::Optimum,
                    Some(cost),
                ));
            }
            0
        }
        SolveStatus::BudgetExhausted => {
            out.push_str("UNKNOWN\n");
            3
        }
    };
    print!("{out}");
    let _ = std::io::stdout().flush();
    code
}

/// Renders a witness in instantiation syntax so it can be fed back into
/// `check`. Useless cells are starred; undefined cells are omitted.
fn witness_xml(
    instance: &Instance,
    assignment: &Assignment,
    sol_type: SolType,
    cost: Option<i64>,
) -> String {
    let mut names = Vec::new();
    let mut values = Vec::new();
    for (i, cell) in instance.cells.iter().enumerate() {
        if cell.domain.is_none() {
            continue;
        }
        names.push(cell.name.as_str());
        values.push(match assignment.get(i) {
            Some(v) => v.to_string(),
            None => "*".to_string(),
        });
    }
    let cost_attr = match cost {
        Some(c) => format!(" cost=\"{c}\""),
        None => String::new(),
    };
    format!(
        "<instantiation type=\"{}\"{cost_attr}>\n  <list> {} </list>\n  <values> {} </values>\n</instantiation>\n",
        sol_type.name(),
        names.join(" "),
        values.join(" ")
    )
}

fn cmd_tojson(file: &Path, safe_mode: bool, resolve_aliases: bool, rep: &Reporter) -> u8 {
    let bytes = match read_input(file, rep) {
        Ok(b) => b,
        Err(code) => return code,
    };
    let result = (|| {
        let mut root = xml::load_document_bytes(&bytes)?;
        if resolve_aliases {
            xml::resolve_aliases(&mut root)?;
        }
        Ok(xcsp3::json::document_to_json(&root, safe_mode))
    })();
    match result {
        Ok(json) => {
            print!("{}", json.to_pretty());
            let _ = std::io::stdout().flush();
            0
        }
        Err(err) => {
            rep.error(&err);
            err.kind.exit_code() as u8
        }
    }
}

fn plural(n: usize) -> &'static str {
    if n == 1 {
        ""
    } else {
        "s"
    }
}
