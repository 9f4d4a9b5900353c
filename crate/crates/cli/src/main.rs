use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use qsylv::discretization::ManualParams;
use qsylv::io::{instance_to_json, write_json};
use qsylv::pipeline::{
    exit_code, load_source, run, sweep, sweep_csv, term_budget_from_env, Mode, RunConfig, RunReport, Source,
    DEFAULT_SWEEP_KAPPAS,
};
use qsylv::{CaseTag, Error};

#[derive(Parser)]
#[command(name = "qsylv", version, about = "LCU block-encoding synthesis and verification for AX + XB = C")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the pipeline and print the verification report.
    Solve(RunArgs),
    /// Report query-complexity estimates without synthesizing.
    Estimate(RunArgs),
    /// Write a generated instance as JSON.
    Generate(SourceArgs),
    /// Run one instance per κ and write CSV rows.
    Sweep(SweepArgs),
    /// Assemble and check the full block-encoding unitary.
    VerifyUnitary(RunArgs),
}

#[derive(Args, Clone)]
struct SourceArgs {
    /// Instance JSON file.
    #[arg(long, conflicts_with = "generate")]
    input: Option<PathBuf>,
    /// Generator: a case name (normal, pos-herm, b-zero, positive, general) or `poisson`.
    #[arg(long)]
    generate: Option<String>,
    #[arg(long, default_value_t = 2)]
    n: usize,
    #[arg(long, default_value_t = 2.0)]
    kappa: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output path (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct RunArgs {
    #[command(flatten)]
    source: SourceArgs,
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
    #[arg(long, default_value_t = 0.5)]
    beta: f64,
    /// lcu-only, full-unitary, chebyshev or estimate.
    #[arg(long)]
    mode: Option<String>,
    /// Grid override as JSON (`{"r_count":4,"j_count":2}`) or a path to such a file.
    #[arg(long)]
    manual_params: Option<String>,
    /// Force a method instead of the classified case.
    #[arg(long)]
    case: Option<String>,
    /// Calibration rounds.
    #[arg(long)]
    rounds: Option<usize>,
}

#[derive(Args, Clone)]
struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Comma-separated κ values.
    #[arg(long, value_delimiter = ',')]
    kappas: Option<Vec<f64>>,
    /// CSV output path (stdout when absent).
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ManualJson {
    #[serde(alias = "R", alias = "r")]
    r_count: usize,
    #[serde(alias = "J", alias = "j")]
    j_count: usize,
    delta_t: Option<f64>,
    delta_omega: Option<f64>,
    beta: Option<f64>,
}

fn parse_manual(arg: &str) -> Result<ManualParams, Error> {
    let text = if arg.trim_start().starts_with('{') {
        arg.to_owned()
    } else {
        std::fs::read_to_string(arg)?
    };
    let m: ManualJson = serde_json::from_str(&text)
        .map_err(|e| Error::Parse(format!("manual params: {e} (line {}, column {})", e.line(), e.column())))?;
    let mut p = ManualParams::new(m.r_count, m.j_count);
    if let Some(v) = m.delta_t {
        p.delta_t = v;
    }
    if let Some(v) = m.delta_omega {
        p.delta_omega = v;
    }
    p.beta = m.beta;
    Ok(p)
}

fn parse_case(s: &str) -> Result<CaseTag, Error> {
    CaseTag::parse(s).ok_or_else(|| Error::Parse(format!("unknown case {s:?}")))
}

fn source(args: &SourceArgs) -> Result<Source, Error> {
    match (&args.input, &args.generate) {
        (Some(path), None) => Ok(Source::File { path: path.clone() }),
        (None, Some(g)) if g.eq_ignore_ascii_case("poisson") => Ok(Source::Poisson { n: args.n }),
        (None, Some(g)) => Ok(Source::Random {
            case: parse_case(g)?,
            n: args.n,
            kappa: args.kappa,
            seed: args.seed,
        }),
        (None, None) => Err(Error::Parse("one of --input or --generate is required".into())),
        (Some(_), Some(_)) => Err(Error::Parse("--input and --generate are exclusive".into())),
    }
}

fn config(args: &RunArgs, default_mode: Mode) -> Result<RunConfig, Error> {
    let mut cfg = RunConfig::new(source(&args.source)?, args.epsilon);
    cfg.beta = args.beta;
    cfg.mode = match &args.mode {
        Some(m) => Mode::parse(m).ok_or_else(|| Error::Parse(format!("unknown mode {m:?}")))?,
        None => default_mode,
    };
    cfg.term_budget = term_budget_from_env()?;
    cfg.manual = args.manual_params.as_deref().map(parse_manual).transpose()?;
    cfg.case = args.case.as_deref().map(parse_case).transpose()?;
    if let Some(r) = args.rounds {
        cfg.rounds = r;
    }
    Ok(cfg)
}

fn emit(out: Option<&PathBuf>, text: &str) -> Result<(), Error> {
    match out {
        Some(p) => {
            std::fs::write(p, text)?;
            Ok(())
        }
        None => {
            println!("{}", text.trim_end());
            Ok(())
        }
    }
}

fn emit_report(out: Option<&PathBuf>, report: &RunReport) -> Result<(), Error> {
    match out {
        Some(p) => write_json(p, report),
        None => emit(None, &qsylv::io::to_json_pretty(report)?),
    }
}

fn fail(err: impl std::fmt::Display, code: i32) -> ExitCode {
    eprintln!("error: {err}");
    ExitCode::from(code as u8)
}

fn run_verb(args: &RunArgs, mode: Mode) -> ExitCode {
    let cfg = match config(args, mode) {
        Ok(c) => c,
        Err(e) => return fail(&e, exit_code(&e)),
    };
    match run(&cfg) {
        Ok(report) => {
            if let Err(e) = emit_report(args.source.out.as_ref(), &report) {
                return fail(&e, exit_code(&e));
            }
            if report.pass {
                ExitCode::SUCCESS
            } else {
                eprintln!("verification failed");
                ExitCode::from(1)
            }
        }
        Err(e) => fail(&e, e.exit_code()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Solve(args) => run_verb(&args, Mode::LcuOnly),
        Command::Estimate(args) => run_verb(&args, Mode::Estimate),
        Command::VerifyUnitary(args) => run_verb(&args, Mode::FullUnitary),
        Command::Generate(args) => {
            let result = source(&args)
                .and_then(|s| load_source(&s))
                .and_then(|l| instance_to_json(&l.instance))
                .and_then(|text| emit(args.out.as_ref(), &format!("{text}\n")));
            match result {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => fail(&e, exit_code(&e)),
            }
        }
        Command::Sweep(args) => {
            let cfg = match config(&args.run, Mode::LcuOnly) {
                Ok(c) => c,
                Err(e) => return fail(&e, exit_code(&e)),
            };
            let kappas = args.kappas.clone().unwrap_or_else(|| DEFAULT_SWEEP_KAPPAS.to_vec());
            match sweep(&cfg, &kappas) {
                Ok(rows) => {
                    let csv = sweep_csv(&rows);
                    if let Err(e) = emit(args.csv.as_ref(), &csv) {
                        return fail(&e, exit_code(&e));
                    }
                    if let Some(out) = args.run.source.out.as_ref() {
                        if let Err(e) = write_json(out, &rows) {
                            return fail(&e, exit_code(&e));
                        }
                    }
                    if rows.iter().all(|r| r.pass) {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(1)
                    }
                }
                Err(e) => fail(&e, e.exit_code()),
            }
        }
    }
}
