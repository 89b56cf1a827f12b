//! The `txsc` command line: parse, format, analyze, rewrite, simulate and
//! check contracts, plus end-to-end recipes over the bundled corpus.

pub mod recipes;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;
use thiserror::Error;

use txsc_core::analysis::analyze;
use txsc_core::chainsim::{compile_deployments, export_history, run, History, ScenarioConfig, SimError};
use txsc_core::corpus;
use txsc_core::dsl::{parse_contract, print_contract, typecheck, Diagnostic};
use txsc_core::serializability::{check, CheckError, CheckOptions, DEFAULT_BOUND};
use txsc_core::transform::{transform, TransformConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NOT_SERIALIZABLE: i32 = 3;
pub const EXIT_RECIPE_FAILED: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "txsc", version, about = "Transactional smart contracts: analysis, rewriting and simulation")]
pub struct Cli {
    /// Override the seed of a scenario or recipe.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Machine-readable JSON output.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse and typecheck a contract.
    Parse { file: PathBuf },
    /// Print a contract in canonical form.
    Fmt {
        file: PathBuf,
        /// Exit with status 1 when the file is not already canonical.
        #[arg(long)]
        check: bool,
    },
    /// Report read/write sets and classification of every function.
    Analyze { file: PathBuf },
    /// Rewrite a contract to enforce isolation and atomicity.
    Transform {
        file: PathBuf,
        /// TOML file with `exclusions`, `deposit_amount` and `lock_chain`.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Write the rewritten source here instead of stdout.
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Also print what was injected.
        #[arg(long)]
        report: bool,
    },
    /// Run a simulation scenario.
    Sim {
        scenario: PathBuf,
        /// Directory holding the contract files (defaults to the scenario's).
        #[arg(long)]
        contracts: Option<PathBuf>,
        /// Write the history JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Decide whether a history is serializable.
    Check {
        history: PathBuf,
        /// Largest span count for the permutation oracle.
        #[arg(long, default_value_t = DEFAULT_BOUND)]
        bound: usize,
        /// Above the bound, decide by conflict-graph acyclicity.
        #[arg(long)]
        fallback_graph: bool,
    },
    /// Run a bundled end-to-end recipe, or list them.
    Recipe { name: Option<String> },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Check(#[from] CheckError),
    #[error("unknown recipe `{0}`")]
    UnknownRecipe(String),
}

/// What a command printed and the status it exits with.
#[derive(Debug, Default, PartialEq, Eq)]
pub struct Output {
    pub code: i32,
    pub stdout: String,
}

impl Output {
    fn ok(stdout: String) -> Self {
        Output { code: EXIT_OK, stdout }
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Io { path: path.display().to_string(), message: e.to_string() })
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Io { path: path.display().to_string(), message: e.to_string() })
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn load_contract(path: &Path) -> Result<txsc_core::dsl::ast::ContractAst, CliError> {
    let src = read(path)?;
    let ast = parse_contract(&src).map_err(|e| CliError::Input(format!("{}:{e}", path.display())))?;
    let diags = typecheck(&ast);
    if let Some(d) = diags.first() {
        return Err(CliError::Input(format!("{}:{d}", path.display())));
    }
    Ok(ast)
}

pub fn execute(cli: Cli) -> Result<Output, CliError> {
    match cli.command {
        Command::Parse { file } => parse_cmd(&file, cli.json),
        Command::Fmt { file, check } => {
            let src = read(&file)?;
            let ast = parse_contract(&src).map_err(|e| CliError::Input(format!("{}:{e}", file.display())))?;
            let printed = print_contract(&ast);
            if check {
                let code = if printed == src { EXIT_OK } else { EXIT_INTERNAL };
                return Ok(Output { code, stdout: String::new() });
            }
            Ok(Output::ok(printed))
        }
        Command::Analyze { file } => {
            let ast = load_contract(&file)?;
            let profiles = analyze(&ast).map_err(|e| CliError::Input(e.to_string()))?;
            if cli.json {
                return Ok(Output::ok(to_json(&profiles)));
            }
            let mut out = String::new();
            for p in profiles.iter() {
                let _ = writeln!(out, "{} ({:?})", p.function, p.classification);
                let _ = writeln!(out, "  reads:  {}", p.read_set.join(", "));
                let _ = writeln!(out, "  writes: {}", p.write_set.join(", "));
                if !p.external_calls.is_empty() {
                    let _ = writeln!(out, "  external: {}", p.external_calls.join(", "));
                }
            }
            Ok(Output::ok(out))
        }
        Command::Transform { file, config, output, report } => {
            let ast = load_contract(&file)?;
            let cfg = match config {
                Some(p) => TransformConfig::from_toml(&read(&p)?)
                    .map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?,
                None => TransformConfig::default(),
            };
            let profiles = analyze(&ast).map_err(|e| CliError::Input(e.to_string()))?;
            let (out_ast, rep) = transform(&ast, &profiles, &cfg).map_err(|e| CliError::Input(e.to_string()))?;
            let source = print_contract(&out_ast);
            let mut stdout = String::new();
            match &output {
                Some(p) => write(p, &source)?,
                None if !cli.json => stdout.push_str(&source),
                None => {}
            }
            if cli.json {
                #[derive(Serialize)]
                struct J<'a> {
                    #[serde(skip_serializing_if = "Option::is_none")]
                    source: Option<&'a str>,
                    report: &'a txsc_core::transform::TransformReport,
                }
                stdout.push_str(&to_json(&J { source: output.is_none().then_some(source.as_str()), report: &rep }));
            } else if report {
                let _ = writeln!(
                    stdout,
                    "// injected checks: {}, shadow attributes: {}, lock checks: {}, escrows: {}, generated statements: {}",
                    rep.injected_checks(),
                    rep.shadow_attrs(),
                    rep.lock_checks(),
                    rep.escrows(),
                    rep.generated_statements()
                );
            }
            Ok(Output::ok(stdout))
        }
        Command::Sim { scenario, contracts, out } => {
            let mut cfg = ScenarioConfig::from_toml(&read(&scenario)?)?;
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            let dir = contracts.or_else(|| scenario.parent().map(Path::to_path_buf)).unwrap_or_default();
            let compiled = compile_deployments(&cfg, |f| {
                let p = dir.join(f);
                if p.exists() {
                    read(&p).map_err(|e| SimError::Contract { file: f.into(), message: e.to_string() })
                } else {
                    corpus::source(f)
                        .map(str::to_string)
                        .ok_or_else(|| SimError::Contract { file: f.into(), message: "file not found".into() })
                }
            })?;
            let sim = run(&cfg, &compiled)?;
            let json = export_history(&sim.history());
            if let Some(p) = out {
                write(&p, &json)?;
            }
            if cli.json {
                return Ok(Output::ok(json + "\n"));
            }
            Ok(Output::ok(sim_summary(&sim)))
        }
        Command::Check { history, bound, fallback_graph } => {
            let h = History::from_json(&read(&history)?)?;
            let v = check(&h, CheckOptions { bound, fallback_graph })?;
            let code = if v.serializable { EXIT_OK } else { EXIT_NOT_SERIALIZABLE };
            Ok(Output { code, stdout: to_json(&v) })
        }
        Command::Recipe { name: None } => {
            let mut out = String::new();
            for r in recipes::RECIPES {
                let _ = writeln!(out, "{:<22} {}", r.name, r.about);
            }
            Ok(Output::ok(out))
        }
        Command::Recipe { name: Some(name) } => {
            let recipe = recipes::find(&name).ok_or(CliError::UnknownRecipe(name))?;
            let report = recipes::run_recipe(recipe, cli.seed)?;
            let code = if report.passed() { EXIT_OK } else { EXIT_RECIPE_FAILED };
            let stdout = if cli.json { to_json(&report) } else { report.render() };
            Ok(Output { code, stdout })
        }
    }
}

fn parse_cmd(file: &Path, json: bool) -> Result<Output, CliError> {
    let src = read(file)?;
    let ast = parse_contract(&src).map_err(|e| CliError::Input(format!("{}:{e}", file.display())))?;
    let diags: Vec<Diagnostic> = typecheck(&ast);
    let code = if diags.is_empty() { EXIT_OK } else { EXIT_INTERNAL };
    if json {
        #[derive(Serialize)]
        struct J<'a> {
            ast: &'a txsc_core::dsl::ast::ContractAst,
            diagnostics: &'a [Diagnostic],
        }
        return Ok(Output { code, stdout: to_json(&J { ast: &ast, diagnostics: &diags }) });
    }
    let mut out = String::new();
    let _ =
        writeln!(out, "contract {}: {} attributes, {} functions", ast.name, ast.attributes.len(), ast.functions.len());
    for d in &diags {
        let _ = writeln!(out, "{}:{d}", file.display());
    }
    Ok(Output { code, stdout: out })
}

fn sim_summary(sim: &txsc_core::chainsim::Simulation) -> String {
    let mut out = String::new();
    for c in &sim.chains {
        let entries: usize = c.blocks.iter().map(|b| b.entries.len() + b.lock_entries.len()).sum();
        let _ = writeln!(out, "chain {}: {} blocks, {} entries", c.id, c.blocks.len(), entries);
    }
    for s in &sim.history().spans {
        let _ = write!(out, "span {}:", s.span_id);
        for e in &s.events {
            let status = match &e.outcome {
                txsc_core::interp::Outcome::Committed => "committed".to_string(),
                txsc_core::interp::Outcome::AbortedRequires { check } => format!("aborted ({})", check.expr),
                txsc_core::interp::Outcome::AbortedOutOfGas => "out of gas".to_string(),
                txsc_core::interp::Outcome::AbortedError { reason } => format!("error ({reason})"),
            };
            let _ = write!(out, " {}@{}#{} {status};", e.function, e.chain, e.block_index);
        }
        out.push('\n');
    }
    let _ = writeln!(out, "stopped at tick {}", sim.last_tick);
    out
}

/// Entry point shared by the binary: parses `args` and maps every failure
/// to an exit status.
pub fn main_with<I, T>(args: I) -> (i32, String, String)
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            return if e.use_stderr() { (code, String::new(), text) } else { (code, text, String::new()) };
        }
    };
    match execute(cli) {
        Ok(o) => (o.code, o.stdout, String::new()),
        Err(e) => (EXIT_INTERNAL, String::new(), format!("error: {e}\n")),
    }
}
