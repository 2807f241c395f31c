//! Experiment runner: one dataset per seed, one β = 1 run and one tempered
//! run per β₀ for each candidate, then criteria, λ and argmin flags.

use std::collections::BTreeMap;

use lscrit_core::criteria::{
    self, Candidate, CriterionName, CriterionResult, DiagnosticsSummary, LambdaEstimate, LambdaSource,
    LambdaUsed,
};
use lscrit_core::lambda_coeff::{self, LearningCoefficient};
use lscrit_core::math::derive_seed;
use lscrit_core::model::{Dataset, ModelFamily};
use lscrit_core::sampler::{ChainConfig, ChainOutput, PosteriorSamples, TemperSpec};
use rayon::prelude::*;

use crate::config::{ExperimentConfig, LambdaPolicy, ModelSpec};
use crate::error::{Error, Result};
use crate::report::ReportRow;

/// Mixed into the master seed for data generation ("data").
pub const DATA_TAG: u64 = 0x6461_7461;
/// Stands in for β₀ bits in the β = 1 run's seed; no positive β₀ has
/// all-zero bits.
pub const UNTEMPERED_TAG: u64 = 0;

/// Seed of the generated dataset.
pub fn data_seed(seed: u64) -> u64 {
    derive_seed(&[seed, DATA_TAG])
}

/// Seed of a tempered run for one candidate.
pub fn tempered_run_seed(seed: u64, candidate: usize, beta0: f64) -> u64 {
    derive_seed(&[seed, candidate as u64, beta0.to_bits()])
}

/// Seed of the β = 1 run for one candidate.
pub fn untempered_run_seed(seed: u64, candidate: usize) -> u64 {
    derive_seed(&[seed, candidate as u64, UNTEMPERED_TAG])
}

/// Generates the experiment dataset for `cfg.seed`.
pub fn generate_data(cfg: &ExperimentConfig) -> Result<Dataset> {
    let truth = cfg.model.truth()?;
    let family = cfg.model.true_family()?;
    Ok(family.simulate(&truth, cfg.n, data_seed(cfg.seed))?)
}

/// Runs all chains of one posterior in parallel and merges them in chain
/// order; identical to the sequential sampler.
pub fn run_chains_par(
    family: &ModelFamily,
    data: &Dataset,
    temper: TemperSpec,
    cfg: &ChainConfig,
) -> lscrit_core::Result<PosteriorSamples> {
    cfg.validate()?;
    let outputs: Vec<ChainOutput> = (0..cfg.chains)
        .into_par_iter()
        .map(|c| lscrit_core::sampler::run_chain(family, data, temper, cfg, c))
        .collect::<lscrit_core::Result<_>>()?;
    PosteriorSamples::assemble(*family, temper, cfg, outputs)
}

/// The exact learning coefficient of a candidate, when one is known.
pub fn exact_lambda(model: &ModelSpec, candidate: usize) -> Result<Option<LearningCoefficient>> {
    Ok(match model {
        // a one-component mixture is a regular model in its means
        ModelSpec::Gmm { dim, .. } if candidate == 1 => Some(lambda_coeff::regular_lambda(*dim)?),
        ModelSpec::Gmm { .. } => None,
        ModelSpec::Rrr {
            inputs,
            outputs,
            true_rank,
            ..
        } if candidate >= *true_rank => Some(lambda_coeff::aoyagi_lambda(*inputs, *outputs, candidate, *true_rank)?),
        ModelSpec::Rrr { .. } => None,
        ModelSpec::NormalMean { .. } => Some(lambda_coeff::regular_lambda(1)?),
    })
}

/// Everything computed for one candidate.
#[derive(Debug, Clone)]
pub struct CandidateRun {
    pub candidate: usize,
    pub family: ModelFamily,
    /// Tₙ and its Monte Carlo standard error, when LS was requested.
    pub t_n: Option<(f64, f64)>,
    pub plug_in_nll: Option<f64>,
    /// WBIC per tempered β₀, ascending.
    pub wbic: Vec<CriterionResult>,
    pub exact: Option<LearningCoefficient>,
    pub estimate: Option<LambdaEstimate>,
    pub lambda: Option<LambdaUsed>,
    pub untempered_diagnostics: Option<DiagnosticsSummary>,
    pub warnings: Vec<String>,
}

impl CandidateRun {
    pub fn wbic_at(&self, beta0: f64) -> Option<&CriterionResult> {
        self.wbic.iter().find(|w| w.beta0 == Some(beta0))
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub seed: u64,
    pub n: usize,
    pub rows: Vec<ReportRow>,
    pub candidates: Vec<CandidateRun>,
}

fn sorted_unique(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

fn wants(cfg: &ExperimentConfig, name: CriterionName) -> bool {
    cfg.criteria.contains(&name)
}

fn needs_estimate(cfg: &ExperimentConfig, exact: &Option<LearningCoefficient>) -> bool {
    let uses_lambda = wants(cfg, CriterionName::Ls) || wants(cfg, CriterionName::Sbic);
    uses_lambda
        && match cfg.lambda_policy {
            LambdaPolicy::Estimated => true,
            LambdaPolicy::Auto => exact.is_none(),
            LambdaPolicy::Exact | LambdaPolicy::Bound => false,
        }
}

fn choose_lambda(
    cfg: &ExperimentConfig,
    candidate: usize,
    exact: &Option<LearningCoefficient>,
    estimate: &Option<LambdaEstimate>,
    warnings: &mut Vec<String>,
) -> Result<LambdaUsed> {
    let exact_used = |c: &LearningCoefficient| LambdaUsed {
        value: c.value(),
        source: LambdaSource::Exact,
    };
    let bound = || -> Result<LambdaUsed> {
        match &cfg.model {
            ModelSpec::Gmm { dim, .. } => Ok(LambdaUsed {
                value: lambda_coeff::gmm_lambda_bound(*dim, candidate, candidate)?.value(),
                source: LambdaSource::Bound,
            }),
            _ => Err(Error::Config("lambda_policy bound applies to mixtures only".into())),
        }
    };
    let estimated = |e: &LambdaEstimate| LambdaUsed {
        value: e.lambda_hat,
        source: LambdaSource::Estimated,
    };
    match cfg.lambda_policy {
        LambdaPolicy::Exact => exact
            .as_ref()
            .map(exact_used)
            .ok_or_else(|| Error::Config(format!("no exact learning coefficient for candidate {candidate}"))),
        LambdaPolicy::Bound => bound(),
        LambdaPolicy::Estimated => {
            let e = estimate.as_ref().expect("estimate computed for this policy");
            if e.negative {
                return Err(Error::Candidate {
                    candidate,
                    source: lscrit_core::Error::Numerical(format!(
                        "λ̂ = {} is negative; increase the chain length",
                        e.lambda_hat
                    )),
                });
            }
            Ok(estimated(e))
        }
        LambdaPolicy::Auto => {
            if let Some(c) = exact {
                return Ok(exact_used(c));
            }
            let e = estimate.as_ref().expect("estimate computed for this policy");
            if !e.negative {
                return Ok(estimated(e));
            }
            warnings.push(format!(
                "candidate {candidate}: λ̂ = {} is negative, using the mixture bound",
                e.lambda_hat
            ));
            bound()
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Job {
    Untempered(usize),
    Tempered(usize, f64),
}

/// Runs one experiment for `cfg.seed`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let data = generate_data(cfg)?;
    let n = data.len();

    let mut exacts = BTreeMap::new();
    let mut jobs = Vec::new();
    for &c in &cfg.candidates {
        let exact = exact_lambda(&cfg.model, c)?;
        let mut betas = Vec::new();
        if wants(cfg, CriterionName::Wbic) {
            betas.extend(&cfg.beta0);
        }
        if needs_estimate(cfg, &exact) {
            betas.extend([cfg.lambda_pair.0, cfg.lambda_pair.1]);
        }
        if wants(cfg, CriterionName::Ls) || wants(cfg, CriterionName::Sbic) {
            jobs.push(Job::Untempered(c));
        }
        jobs.extend(sorted_unique(betas).into_iter().map(|b| Job::Tempered(c, b)));
        exacts.insert(c, exact);
    }

    let results: Vec<(Job, PosteriorSamples)> = jobs
        .par_iter()
        .map(|&job| {
            let (c, temper, seed) = match job {
                Job::Untempered(c) => (c, TemperSpec::untempered(n), untempered_run_seed(cfg.seed, c)),
                Job::Tempered(c, b) => (
                    c,
                    TemperSpec::tempered(b, n).map_err(|e| Error::Candidate { candidate: c, source: e })?,
                    tempered_run_seed(cfg.seed, c, b),
                ),
            };
            let wrap = |e| Error::Candidate { candidate: c, source: e };
            let family = cfg.model.family(c)?;
            let samples = run_chains_par(&family, &data, temper, &cfg.chain.with_seed(seed)).map_err(wrap)?;
            Ok((job, samples))
        })
        .collect::<Result<_>>()?;

    let mut runs = Vec::with_capacity(cfg.candidates.len());
    for &c in &cfg.candidates {
        let wrap = |e| Error::Candidate { candidate: c, source: e };
        let family = cfg.model.family(c)?;
        let mut warnings = Vec::new();
        let mut untempered = None;
        let mut wbic = Vec::new();
        for (job, samples) in &results {
            let (Job::Untempered(j) | Job::Tempered(j, _)) = *job;
            if j != c {
                continue;
            }
            warnings.extend(samples.warnings().iter().map(|w| format!("candidate {c}: {w:?}")));
            match job {
                Job::Untempered(_) => untempered = Some(samples),
                Job::Tempered(..) => wbic.push(criteria::wbic(samples, &family, &data).map_err(wrap)?),
            }
        }
        let exact = exacts[&c];
        let estimate = if needs_estimate(cfg, &exact) {
            let pick = |b: f64| wbic.iter().find(|w| w.beta0 == Some(b)).expect("tempered run").value;
            let pair = (pick(cfg.lambda_pair.0), pick(cfg.lambda_pair.1));
            Some(criteria::lambda_hat_from_wbic(pair, cfg.lambda_pair, n).map_err(wrap)?)
        } else {
            None
        };
        let (t_n, plug_in_nll, lambda, untempered_diagnostics) = match untempered {
            Some(samples) => {
                let t_n = criteria::empirical_loss_with_mcse(samples, &family, &data).map_err(wrap)?;
                let nll = criteria::plug_in_nll(&family, &data, samples, cfg.plug_in).map_err(wrap)?;
                let lambda = choose_lambda(cfg, c, &exact, &estimate, &mut warnings)?;
                (Some(t_n), Some(nll), Some(lambda), DiagnosticsSummary::of(samples))
            }
            None => (None, None, None, None),
        };
        runs.push(CandidateRun {
            candidate: c,
            family,
            t_n,
            plug_in_nll,
            wbic,
            exact,
            estimate,
            lambda,
            untempered_diagnostics,
            warnings,
        });
    }

    let rows = build_rows(cfg, n, &runs)?;
    Ok(ExperimentOutcome {
        seed: cfg.seed,
        n,
        rows,
        candidates: runs,
    })
}

/// The criterion result of one candidate for one (criterion, β₀) cell.
fn cell(run: &CandidateRun, name: CriterionName, beta0: f64, n: usize) -> Result<CriterionResult> {
    let wrap = |e| Error::Candidate {
        candidate: run.candidate,
        source: e,
    };
    Ok(match name {
        CriterionName::Wbic => run.wbic_at(beta0).expect("WBIC run per β₀").clone(),
        CriterionName::Ls => {
            let lambda = run.lambda.expect("λ chosen");
            criteria::ls(run.t_n.expect("β = 1 run").0, lambda.value, lambda.source, n)
                .map_err(wrap)?
                .with_diagnostics(run.untempered_diagnostics)
        }
        CriterionName::Sbic => {
            let lambda = run.lambda.expect("λ chosen");
            criteria::sbic(run.plug_in_nll.expect("β = 1 run"), lambda.value, lambda.source, n)
                .map_err(wrap)?
                .with_diagnostics(run.untempered_diagnostics)
        }
    })
}

fn build_rows(cfg: &ExperimentConfig, n: usize, runs: &[CandidateRun]) -> Result<Vec<ReportRow>> {
    let betas = sorted_unique(cfg.beta0.clone());
    let mut names = cfg.criteria.clone();
    names.sort_by_key(|c| CriterionName::ALL.iter().position(|a| a == c));
    names.dedup();

    let mut rows = Vec::new();
    for run in runs {
        for &name in &names {
            for &b in &betas {
                let r = cell(run, name, b, n)?;
                rows.push(ReportRow {
                    candidate: run.candidate,
                    criterion: name,
                    value: r.value,
                    lambda: r.lambda.map(|l| l.value),
                    lambda_source: r.lambda.map(|l| l.source),
                    beta0: b,
                    seed: cfg.seed,
                    ess_min: r.diagnostics.map(|d| d.ess_min),
                    rhat_max: r.diagnostics.map(|d| d.rhat_max),
                    selected: false,
                });
            }
        }
    }

    for &name in &names {
        for &b in &betas {
            let idx: Vec<usize> = (0..rows.len())
                .filter(|&i| rows[i].criterion == name && rows[i].beta0 == b)
                .collect();
            // idx[k] is the row of runs[k]
            let keyed: Vec<(Candidate, CriterionResult)> = runs
                .iter()
                .map(|run| {
                    let candidate = Candidate {
                        id: run.candidate.to_string(),
                        dimension: run.family.parameter_count(),
                    };
                    Ok((candidate, cell(run, name, b, n)?))
                })
                .collect::<Result<_>>()?;
            let best = criteria::select_model(&keyed)?;
            rows[idx[best]].selected = true;
        }
    }
    // rows are already in (candidate, criterion, β₀) order when the
    // candidates are; sort anyway so config order does not leak through
    rows.sort_by(|a, b| {
        a.candidate
            .cmp(&b.candidate)
            .then_with(|| a.criterion.cmp(&b.criterion))
            .then_with(|| a.beta0.total_cmp(&b.beta0))
    });
    Ok(rows)
}

/// How often each candidate was selected for one (criterion, β₀) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionCount {
    pub criterion: CriterionName,
    pub beta0: f64,
    pub candidate: usize,
    pub count: usize,
    pub runs: usize,
}

/// Runs the experiment once per seed.
pub fn run_repeated(cfg: &ExperimentConfig, seeds: &[u64]) -> Result<Vec<ExperimentOutcome>> {
    seeds
        .iter()
        .map(|&s| {
            let mut c = cfg.clone();
            c.seed = s;
            run_experiment(&c)
        })
        .collect()
}

/// Selection frequencies across repeated runs, in report order.
pub fn selection_frequencies(outcomes: &[ExperimentOutcome]) -> Vec<SelectionCount> {
    let mut counts: BTreeMap<(CriterionName, u64, usize), usize> = BTreeMap::new();
    for o in outcomes {
        for r in &o.rows {
            *counts.entry((r.criterion, r.beta0.to_bits(), r.candidate)).or_default() += r.selected as usize;
        }
    }
    let mut out: Vec<SelectionCount> = counts
        .into_iter()
        .map(|((criterion, bits, candidate), count)| SelectionCount {
            criterion,
            beta0: f64::from_bits(bits),
            candidate,
            count,
            runs: outcomes.len(),
        })
        .collect();
    out.sort_by(|a, b| {
        a.criterion
            .cmp(&b.criterion)
            .then_with(|| a.beta0.total_cmp(&b.beta0))
            .then_with(|| a.candidate.cmp(&b.candidate))
    });
    out
}

/// The selected candidate of one run for a (criterion, β₀) cell.
pub fn selected(outcome: &ExperimentOutcome, criterion: CriterionName, beta0: f64) -> Option<usize> {
    outcome
        .rows
        .iter()
        .find(|r| r.selected && r.criterion == criterion && r.beta0 == beta0)
        .map(|r| r.candidate)
}
