//! `kgc`: train, evaluate, ablate and ensemble knowledge-graph completion models.
//!
//! Exit codes: 0 success, 1 gradient check failed, 2 configuration or contract error,
//! 3 numeric failure. Progress goes to stderr; reports go to stdout.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use kgc_core::data::{KnowledgeGraph, Split};
use kgc_core::ensemble::EnsembleSpec;
use kgc_core::eval::{render_table, MetricsReport, TableRow};
use kgc_core::io::write_atomic;
use kgc_core::run::{
    evaluate_checkpoint, gradcheck_suite, run_ablation, run_ensemble, run_train, write_json, AblationMode,
    RunConfig, GRADCHECK_TOLERANCE,
};
use kgc_core::{KgcError, Result};
use serde_json::json;

#[derive(Parser)]
#[command(name = "kgc", version, about = "Knowledge-graph completion experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every seed of a run config and report test metrics.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset split.
    Eval(EvalArgs),
    /// Evaluate an ensemble spec next to each of its members.
    Ensemble(EnsembleArgs),
    /// Run a config and its ablated variants side by side.
    Ablate(AblateArgs),
    /// Check reverse-mode gradients of every encoder and scorer composition.
    Gradcheck(GradcheckArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Table,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Valid,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Split {
        match s {
            SplitArg::Valid => Split::Valid,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Args)]
struct ConfigArgs {
    /// Run config (JSON).
    #[arg(value_name = "CONFIG", required_unless_present = "config")]
    path: Option<PathBuf>,
    #[arg(long, conflicts_with = "path")]
    config: Option<PathBuf>,
    /// Comma-separated seeds; overrides the config.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Output directory; overrides the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig> {
        let path = self.path.as_ref().or(self.config.as_ref()).expect("clap requires a config");
        let mut cfg = RunConfig::load(path)?;
        if let Some(seeds) = &self.seeds {
            cfg.seeds = seeds.clone();
        }
        if let Some(out) = &self.out {
            cfg.out = out.clone();
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long, value_enum, default_value = "table")]
    format: Format,
}

#[derive(Args)]
struct EvalArgs {
    /// Checkpoint file written by `kgc train`.
    checkpoint: PathBuf,
    /// Dataset directory with train.txt, valid.txt and test.txt.
    #[arg(long, required_unless_present = "config")]
    dataset: Option<PathBuf>,
    /// Take the dataset from this run config.
    #[arg(long, conflicts_with = "dataset")]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "test")]
    split: SplitArg,
    #[arg(long, value_enum, default_value = "table")]
    format: Format,
    /// Also write report.json and report.txt into this directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EnsembleArgs {
    /// Ensemble spec file.
    spec: PathBuf,
    /// Dataset directory; overrides the ensemble file.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
    seeds: Vec<u64>,
    #[arg(long, value_enum, default_value = "test")]
    split: SplitArg,
    #[arg(long, value_enum, default_value = "table")]
    format: Format,
    /// Also write ensemble.json and ensemble.txt into this directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AblateArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// One of mlp_swap, random_graph, neg_sweep, scorer_swap.
    #[arg(long)]
    mode: String,
    #[arg(long, value_enum, default_value = "table")]
    format: Format,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, value_enum, default_value = "table")]
    format: Format,
    /// Flip the sign of one primitive's adjoint; used to test the checker itself.
    #[arg(long, hide = true, value_name = "PRIMITIVE")]
    inject_sign_flip: Option<String>,
}

fn progress(line: &str) {
    eprintln!("{line}");
}

fn emit(format: Format, json: String, table: String) {
    match format {
        Format::Json => println!("{json}"),
        Format::Table => print!("{table}"),
    }
}

fn to_json(value: &impl serde::Serialize) -> String {
    serde_json::to_string_pretty(value).expect("reports serialize")
}

fn single_table(label: &str, report: &MetricsReport) -> String {
    render_table(&[TableRow::new(label, Some(report.clone()))])
}

fn train(args: TrainArgs) -> Result<ExitCode> {
    let cfg = args.config.load()?;
    let outcome = run_train(&cfg, &mut |l| progress(l))?;
    progress(&format!("wrote {}", outcome.dir.display()));
    emit(args.format, outcome.test.to_json(), single_table(&cfg.label(), &outcome.test));
    Ok(ExitCode::SUCCESS)
}

fn eval(args: EvalArgs) -> Result<ExitCode> {
    let dataset = match (&args.dataset, &args.config) {
        (Some(d), _) => d.clone(),
        (None, Some(c)) => RunConfig::load(c)?.dataset,
        (None, None) => unreachable!("clap requires one of them"),
    };
    let kg = KnowledgeGraph::load_dir(&dataset)?;
    let report = evaluate_checkpoint(&args.checkpoint, &kg, args.split.into())?;
    let label = args
        .checkpoint
        .parent()
        .and_then(Path::parent)
        .and_then(Path::file_name)
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "checkpoint".into());
    let table = single_table(&label, &report);
    if let Some(out) = &args.out {
        write_json(out.join("report.json"), &report)?;
        write_atomic(out.join("report.txt"), table.as_bytes())?;
    }
    emit(args.format, report.to_json(), table);
    Ok(ExitCode::SUCCESS)
}

fn ensemble(args: EnsembleArgs) -> Result<ExitCode> {
    if !args.spec.is_file() {
        return Err(KgcError::config(format!("ensemble spec {} not found", args.spec.display())));
    }
    let spec = EnsembleSpec::load(&args.spec)?;
    let outcome = run_ensemble(&spec, args.dataset.as_deref(), &args.seeds, args.split.into(), &mut |l| {
        progress(l)
    })?;
    if let Some(out) = &args.out {
        write_json(out.join("ensemble.json"), &outcome)?;
        write_atomic(out.join("ensemble.txt"), outcome.table.as_bytes())?;
    }
    emit(args.format, to_json(&outcome), outcome.table.clone());
    Ok(ExitCode::SUCCESS)
}

fn ablate(args: AblateArgs) -> Result<ExitCode> {
    let mode: AblationMode = args.mode.parse()?;
    let cfg = args.config.load()?;
    cfg.validate()?;
    let kg = KnowledgeGraph::load_dir(&cfg.dataset)?;
    let outcome = run_ablation(&cfg, mode, &kg, &mut |l| progress(l))?;
    emit(args.format, to_json(&outcome), outcome.table.clone());
    Ok(ExitCode::SUCCESS)
}

fn gradcheck(args: GradcheckArgs) -> Result<ExitCode> {
    let rows = gradcheck_suite(args.inject_sign_flip.as_deref())?;
    let passed = rows.iter().all(|r| r.passed());
    match args.format {
        Format::Json => {
            let rows: Vec<_> = rows
                .iter()
                .map(|r| {
                    json!({
                        "encoder": r.encoder.label(),
                        "scorer": r.scorer.label(),
                        "max_rel_error": r.report.max_rel_error,
                        "worst": r.report.worst.as_ref().map(|(name, i)| format!("{name}[{i}]")),
                        "components": r.report.components,
                        "seconds": r.elapsed.as_secs_f64(),
                        "passed": r.passed(),
                    })
                })
                .collect();
            println!("{}", to_json(&json!({ "tolerance": GRADCHECK_TOLERANCE, "passed": passed, "rows": rows })));
        }
        Format::Table => {
            println!("{:<18} {:>14} {:>8}  worst", "composition", "max rel error", "status");
            for r in &rows {
                let name = format!("{}+{}", r.encoder.label(), r.scorer.label());
                let worst = r.report.worst.as_ref().map(|(n, i)| format!("{n}[{i}]")).unwrap_or_default();
                let status = if r.passed() { "ok" } else { "FAIL" };
                println!("{name:<18} {:>14.3e} {status:>8}  {worst}", r.report.max_rel_error);
            }
        }
    }
    Ok(if passed { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var("KGC_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| KgcError::config(format!("KGC_THREADS: expected a positive integer, got {value:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| KgcError::config(format!("KGC_THREADS: {e}")))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| match cli.command {
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Ensemble(a) => ensemble(a),
        Command::Ablate(a) => ablate(a),
        Command::Gradcheck(a) => gradcheck(a),
    });
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("kgc: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
