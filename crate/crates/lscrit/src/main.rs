use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lscrit::config::{parse_config, ExperimentConfig};
use lscrit::harness::{self, ExperimentOutcome};
use lscrit::report::{self, Format};
use lscrit::{io, Error, Result};
use lscrit_core::criteria::CriterionName;
use lscrit_core::lambda_coeff::{self, LearningCoefficient};
use lscrit_core::sampler::TemperSpec;
use serde_json::json;

#[derive(Parser)]
#[command(name = "lscrit", version, about = "Bayesian information criteria for singular models")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration file (TOML or a bare preset name).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Built-in preset: gmm_table3, gmm_table4 or rrr_table2.
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Master seed, overriding the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file; stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = OutFormat::Csv)]
    format: OutFormat,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutFormat {
    Csv,
    Json,
}

impl From<OutFormat> for Format {
    fn from(f: OutFormat) -> Self {
        match f {
            OutFormat::Csv => Format::Csv,
            OutFormat::Json => Format::Json,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the configured dataset and write it as CSV.
    Generate,
    /// Dump posterior draws for one candidate as CSV.
    Sample {
        #[arg(long)]
        candidate: usize,
        /// Tempered run at β = β₀/log n; the β = 1 posterior when omitted.
        #[arg(long)]
        beta0: Option<f64>,
    },
    /// WBIC, LS and sBIC for a single candidate.
    Criteria {
        #[arg(long)]
        candidate: usize,
    },
    /// Learning coefficients: exact formulas or the two-temperature estimate.
    Lambda {
        #[command(subcommand)]
        which: LambdaCommand,
    },
    /// Run the full experiment, optionally over consecutive seeds.
    Experiment {
        #[arg(long, default_value_t = 1)]
        repeats: u64,
    },
}

#[derive(Subcommand)]
enum LambdaCommand {
    /// Reduced-rank regression with M inputs, N outputs, rank H, true rank r.
    Aoyagi {
        #[arg(long)]
        m: usize,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        h: usize,
        #[arg(long)]
        r: usize,
    },
    /// Regular model with d parameters.
    Regular {
        #[arg(long)]
        d: usize,
    },
    /// Upper bound for a mixture of H unit-covariance components.
    GmmBound {
        #[arg(long)]
        dim: usize,
        #[arg(long)]
        h_star: usize,
        #[arg(long)]
        h: usize,
    },
    /// λ̂ from two tempered runs on the configured data.
    Estimate {
        #[arg(long)]
        candidate: usize,
        #[arg(long, num_args = 2, value_names = ["B1", "B2"])]
        pair: Option<Vec<f64>>,
    },
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match (&common.config, &common.preset) {
        (Some(_), Some(_)) => return Err(Error::Config("give either --config or --preset, not both".into())),
        (Some(path), None) => parse_config(&fs::read_to_string(path)?)?,
        (None, Some(name)) => parse_config(name)?,
        (None, None) => return Err(Error::Config("no configuration: use --config or --preset".into())),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.output = Some(out.clone());
    }
    Ok(cfg)
}

fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text)?,
        None => std::io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn with_candidate(mut cfg: ExperimentConfig, candidate: usize) -> Result<ExperimentConfig> {
    cfg.candidates = vec![candidate];
    cfg.validate()?;
    Ok(cfg)
}

fn coefficient_text(c: &LearningCoefficient, format: Format) -> Result<String> {
    let lambda = c.lambda.to_string();
    Ok(match format {
        Format::Json => {
            let v = json!({
                "lambda": lambda,
                "value": c.value(),
                "multiplicity": c.multiplicity,
                "case": c.case.as_str(),
                "upper_bound": c.upper_bound,
                "overlapping_cases": c.overlapping_cases,
            });
            serde_json::to_string_pretty(&v)? + "\n"
        }
        Format::Csv => format!(
            "lambda,value,multiplicity,case,upper_bound\n{lambda},{},{},{},{}\n",
            c.value(),
            c.multiplicity,
            c.case.as_str(),
            c.upper_bound
        ),
    })
}

fn summary(outcomes: &[ExperimentOutcome]) {
    let mut err = std::io::stderr().lock();
    for s in harness::selection_frequencies(outcomes) {
        if s.count > 0 {
            let _ = writeln!(
                err,
                "{} beta0={}: H={} selected {}/{}",
                s.criterion, s.beta0, s.candidate, s.count, s.runs
            );
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let common = &cli.common;
    let format = Format::from(common.format);
    match cli.command {
        Command::Lambda { which } => {
            let c = match which {
                LambdaCommand::Aoyagi { m, n, h, r } => lambda_coeff::aoyagi_lambda(m, n, h, r)?,
                LambdaCommand::Regular { d } => lambda_coeff::regular_lambda(d)?,
                LambdaCommand::GmmBound { dim, h_star, h } => lambda_coeff::gmm_lambda_bound(dim, h_star, h)?,
                LambdaCommand::Estimate { candidate, pair } => {
                    let mut cfg = with_candidate(load_config(common)?, candidate)?;
                    if let Some(p) = pair {
                        cfg.lambda_pair = (p[0], p[1]);
                        cfg.validate()?;
                    }
                    let data = harness::generate_data(&cfg)?;
                    let family = cfg.model.family(candidate)?;
                    let chain = cfg.chain.with_seed(harness::untempered_run_seed(cfg.seed, candidate));
                    let e = lscrit_core::criteria::lambda_hat(&family, &data, cfg.lambda_pair, &chain)
                        .map_err(|source| Error::Candidate { candidate, source })?;
                    let v = json!({
                        "lambda_hat": e.lambda_hat,
                        "beta0_pair": [e.beta0_pair.0, e.beta0_pair.1],
                        "wbic_pair": [e.wbic_pair.0, e.wbic_pair.1],
                        "n": e.n,
                        "negative": e.negative,
                        "candidate": candidate,
                        "seed": cfg.seed,
                    });
                    return emit(cfg.output.as_deref(), &(serde_json::to_string_pretty(&v)? + "\n"));
                }
            };
            emit(common.out.as_deref(), &coefficient_text(&c, format)?)
        }
        Command::Generate => {
            let cfg = load_config(common)?;
            let data = harness::generate_data(&cfg)?;
            let mut buf = Vec::new();
            io::write_dataset(&data, &mut buf)?;
            emit(cfg.output.as_deref(), &String::from_utf8_lossy(&buf))
        }
        Command::Sample { candidate, beta0 } => {
            if format == Format::Json {
                return Err(Error::Config("draw dumps are CSV only".into()));
            }
            let cfg = with_candidate(load_config(common)?, candidate)?;
            let data = harness::generate_data(&cfg)?;
            let family = cfg.model.family(candidate)?;
            let (temper, seed) = match beta0 {
                Some(b) => (
                    TemperSpec::tempered(b, data.len())?,
                    harness::tempered_run_seed(cfg.seed, candidate, b),
                ),
                None => (TemperSpec::untempered(data.len()), harness::untempered_run_seed(cfg.seed, candidate)),
            };
            let samples = harness::run_chains_par(&family, &data, temper, &cfg.chain.with_seed(seed))
                .map_err(|source| Error::Candidate { candidate, source })?;
            let mut buf = Vec::new();
            io::write_draws(&samples, &mut buf)?;
            emit(cfg.output.as_deref(), &String::from_utf8_lossy(&buf))
        }
        Command::Criteria { candidate } => {
            let cfg = with_candidate(load_config(common)?, candidate)?;
            let outcome = harness::run_experiment(&cfg)?;
            let first_beta = outcome.rows.first().map(|r| r.beta0);
            // LS and sBIC repeat per β₀ group; keep one of each
            let rows: Vec<_> = outcome
                .rows
                .iter()
                .filter(|r| r.criterion == CriterionName::Wbic || Some(r.beta0) == first_beta)
                .cloned()
                .collect();
            let text = match format {
                Format::Json => {
                    let objs: Vec<_> = rows.iter().map(|r| report::criterion_json(r, outcome.n)).collect();
                    serde_json::to_string_pretty(&objs)? + "\n"
                }
                Format::Csv => report::emit_report(&rows, Format::Csv)?,
            };
            emit(cfg.output.as_deref(), &text)
        }
        Command::Experiment { repeats } => {
            if repeats == 0 {
                return Err(Error::Config("--repeats must be at least 1".into()));
            }
            let cfg = load_config(common)?;
            let seeds: Vec<u64> = (0..repeats).map(|k| cfg.seed.wrapping_add(k)).collect();
            let outcomes = harness::run_repeated(&cfg, &seeds)?;
            let mut err = std::io::stderr().lock();
            for o in &outcomes {
                for c in &o.candidates {
                    for w in &c.warnings {
                        let _ = writeln!(err, "warning: seed {}: {w}", o.seed);
                    }
                }
                for r in o.rows.iter().filter(|r| r.rhat_warning()) {
                    let _ = writeln!(
                        err,
                        "warning: seed {}: candidate {} {} beta0={}: R-hat {:?} above {}",
                        o.seed,
                        r.candidate,
                        r.criterion,
                        r.beta0,
                        r.rhat_max,
                        report::RHAT_WARNING
                    );
                }
            }
            drop(err);
            let rows: Vec<_> = outcomes.iter().flat_map(|o| o.rows.iter().cloned()).collect();
            emit(cfg.output.as_deref(), &report::emit_report(&rows, format)?)?;
            if outcomes.len() > 1 {
                summary(&outcomes);
            }
            Ok(())
        }
    }
}

fn fail(kind: &str, message: String) -> ExitCode {
    let obj = json!({ "error": kind, "message": message });
    eprintln!("{obj}");
    ExitCode::FAILURE
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            return fail("usage", e.to_string());
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e.kind(), e.to_string()),
    }
}
