use std::collections::BTreeSet;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand, ValueEnum};
use nerdistill::corpus::CorpusError;
use nerdistill::costing::CostError;
use nerdistill::ensemble::EnsembleError;
use nerdistill::evaluation::{ErrorKind, EvalError};
use nerdistill::spanlab::SpanError;
use nerdistill::teachers::TeacherError;
use nerdistill::Split;

mod commands;
mod config;

use commands::{ExportOptions, Run};
use config::{ConfigError, RunConfig};

#[derive(Parser)]
#[command(name = "nerdistill", version, about = "Teacher labeling and distillation data pipeline for clinical NER")]
struct Cli {
    /// Run configuration (TOML).
    #[arg(short, long, global = true, default_value = "nerdistill.toml")]
    config: PathBuf,
    /// Overrides `paths.output` from the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Stratified sample of the corpus plus a seeded dev split.
    Sample,
    /// Run every teacher over one or more splits.
    Label {
        /// Defaults to dev and train.
        #[arg(long = "split", value_enum)]
        splits: Vec<SplitArg>,
    },
    /// Score every teacher combination on dev and keep the best.
    Select,
    /// Apply the winning combination to the train split.
    Emit,
    /// Token-level metrics of a prediction file against gold.
    Eval {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        /// Write the report here instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Error extraction and adjudication worksheets.
    #[command(subcommand)]
    Errors(ErrorsCommand),
    /// Cost and latency report from a usage file.
    Cost {
        #[arg(long)]
        usage: PathBuf,
    },
}

#[derive(Subcommand)]
enum ErrorsCommand {
    /// Sample errors into a worksheet for human review.
    Export {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        worksheet: PathBuf,
        #[arg(long, value_enum, default_value = "fn")]
        kind: KindArg,
        #[arg(long, default_value_t = 170)]
        n: usize,
        /// How many of the sampled rows get a second annotator.
        #[arg(long, default_value_t = 90)]
        double: usize,
        /// Tokens of context on each side.
        #[arg(long, default_value_t = 5)]
        window: usize,
    },
    /// Summarize a filled-in worksheet.
    Aggregate {
        #[arg(long)]
        worksheet: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Dev,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Split {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Dev => Split::Dev,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Fn,
    Fp,
    Both,
}

fn run(cli: Cli) -> Result<()> {
    let cfg = RunConfig::load(&cli.config)?;
    let out = cli.out.unwrap_or_else(|| cfg.paths.output.clone());
    let run = Run { cfg, out };

    match cli.command {
        Command::Sample => {
            let m = commands::sample(&run)?;
            let splits: Vec<String> = m.splits.iter().map(|(s, n)| format!("{s}={n}")).collect();
            println!("sampled {} documents ({})", m.total, splits.join(" "));
        }
        Command::Label { splits } => {
            let splits: Vec<Split> = if splits.is_empty() {
                vec![Split::Dev, Split::Train]
            } else {
                splits.into_iter().map(Split::from).collect()
            };
            for (split, stats) in commands::label(&run, &splits)? {
                for (teacher, s) in stats {
                    println!(
                        "{split}\t{teacher}\tdocuments={}\tentity_tokens={}\tungrounded={}",
                        s.documents, s.entity_tokens, s.ungrounded
                    );
                }
            }
        }
        Command::Select => {
            let w = commands::select(&run)?;
            let members: Vec<&str> = w.members.iter().map(|m| m.as_str()).collect();
            println!("winner\t{}\tf1={:.4}", members.join(" + "), w.f1);
        }
        Command::Emit => {
            let n = commands::emit(&run)?;
            println!("wrote {n} training sequences");
        }
        Command::Eval { gold, pred, output } => {
            let report = commands::eval(&run, &gold, &pred)?;
            match output {
                Some(p) => std::fs::write(p, report)?,
                None => print!("{report}"),
            }
        }
        Command::Errors(ErrorsCommand::Export { gold, pred, worksheet, kind, n, double, window }) => {
            let kinds: BTreeSet<ErrorKind> = match kind {
                KindArg::Fn => [ErrorKind::FalseNegative].into(),
                KindArg::Fp => [ErrorKind::FalsePositive].into(),
                KindArg::Both => [ErrorKind::FalseNegative, ErrorKind::FalsePositive].into(),
            };
            let opts = ExportOptions { kinds, n, double, window };
            let (found, picked) = commands::errors_export(&run, &gold, &pred, &opts, &worksheet)?;
            println!("{found} errors, {picked} sampled");
        }
        Command::Errors(ErrorsCommand::Aggregate { worksheet }) => {
            print!("{}", commands::errors_aggregate(&run, &worksheet)?);
        }
        Command::Cost { usage } => {
            print!("{}", commands::cost_table(&commands::cost(&run, &usage)?));
        }
    }
    Ok(())
}

fn span_code(e: &SpanError) -> &'static str {
    match e {
        SpanError::TokenMismatch { .. } => "token_mismatch",
        SpanError::Parse { .. } => "parse",
        _ => "span",
    }
}

/// Short code naming the failing layer, for scripts that parse stderr.
fn error_code(err: &anyhow::Error) -> &'static str {
    for cause in err.chain() {
        if cause.is::<ConfigError>() {
            return "config";
        }
        if let Some(e) = cause.downcast_ref::<SpanError>() {
            return span_code(e);
        }
        if cause.is::<CorpusError>() {
            return "corpus";
        }
        if let Some(e) = cause.downcast_ref::<TeacherError>() {
            return match e {
                TeacherError::Span(s) => span_code(s),
                _ => "teacher",
            };
        }
        if let Some(e) = cause.downcast_ref::<EnsembleError>() {
            return match e {
                EnsembleError::Span(s) | EnsembleError::Eval(EvalError::Span(s)) => span_code(s),
                _ => "ensemble",
            };
        }
        if let Some(e) = cause.downcast_ref::<EvalError>() {
            return match e {
                EvalError::Span(s) => span_code(s),
                _ => "eval",
            };
        }
        if cause.is::<CostError>() {
            return "cost";
        }
        if cause.is::<std::io::Error>() {
            return "io";
        }
    }
    "error"
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = format!("{e:#}").replace(['\n', '\r'], " ");
            eprintln!("error[{}]: {msg}", error_code(&e));
            ExitCode::FAILURE
        }
    }
}
