//! WBIC, the empirical loss Tₙ, LS, the simplified sBIC and the
//! two-temperature learning-coefficient estimate λ̂.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{invalid, Error, Result};
use crate::math::{self, LogSumExp};
use crate::model::{mle, plug_in_estimate, Dataset, ModelFamily, ParameterPoint};
use crate::sampler::{self, diagnostics, ChainConfig, PosteriorSamples, TemperSpec};

/// Per-datum per-draw log-densities below this are clamped before
/// accumulation.
pub const LOG_DENSITY_FLOOR: f64 = -700.0;

/// β₀ pair used for λ̂ when none is given.
pub const DEFAULT_BETA0_PAIR: (f64, f64) = (1.0, 1.5);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CriterionName {
    Wbic,
    Ls,
    Sbic,
}

impl CriterionName {
    pub const ALL: [CriterionName; 3] = [CriterionName::Wbic, CriterionName::Ls, CriterionName::Sbic];

    pub fn as_str(self) -> &'static str {
        match self {
            CriterionName::Wbic => "WBIC",
            CriterionName::Ls => "LS",
            CriterionName::Sbic => "sBIC",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.as_str().eq_ignore_ascii_case(s))
    }
}

impl fmt::Display for CriterionName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Where a λ value came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LambdaSource {
    /// A closed-form learning coefficient.
    Exact,
    /// λ̂ from two tempered runs.
    Estimated,
    /// The mixture upper bound.
    Bound,
}

impl LambdaSource {
    pub fn as_str(self) -> &'static str {
        match self {
            LambdaSource::Exact => "exact",
            LambdaSource::Estimated => "estimated",
            LambdaSource::Bound => "bound",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [LambdaSource::Exact, LambdaSource::Estimated, LambdaSource::Bound]
            .into_iter()
            .find(|l| l.as_str() == s)
    }
}

impl fmt::Display for LambdaSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaUsed {
    pub value: f64,
    pub source: LambdaSource,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagnosticsSummary {
    pub ess_min: f64,
    pub rhat_max: f64,
}

impl DiagnosticsSummary {
    /// Summarizes a sample set, or `None` when it is too small to diagnose.
    pub fn of(samples: &PosteriorSamples) -> Option<Self> {
        diagnostics::diagnose(samples).ok().map(|d| Self {
            ess_min: d.min_ess,
            rhat_max: d.max_rhat,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriterionResult {
    pub name: CriterionName,
    pub value: f64,
    pub lambda: Option<LambdaUsed>,
    pub beta0: Option<f64>,
    pub n: usize,
    pub diagnostics: Option<DiagnosticsSummary>,
}

impl CriterionResult {
    pub fn with_diagnostics(mut self, diagnostics: Option<DiagnosticsSummary>) -> Self {
        self.diagnostics = diagnostics;
        self
    }
}

/// WBIC: the mean over tempered draws of Σᵢ −log p(xᵢ|θ).
pub fn wbic(samples: &PosteriorSamples, family: &ModelFamily, data: &Dataset) -> Result<CriterionResult> {
    check_samples(samples, family, data)?;
    if samples.temper().is_untempered() {
        return Err(invalid!("WBIC needs draws from the tempered posterior, got β = 1"));
    }
    let value = sampler::posterior_expectation(samples, |d| -d.untempered_loglik)?;
    finite(value, "WBIC")?;
    Ok(CriterionResult {
        name: CriterionName::Wbic,
        value,
        lambda: None,
        beta0: Some(samples.temper().beta0()),
        n: data.len(),
        diagnostics: DiagnosticsSummary::of(samples),
    })
}

/// Monte Carlo standard error of [`wbic`].
pub fn wbic_mcse(samples: &PosteriorSamples) -> f64 {
    diagnostics::mcse_mean(&samples.per_chain(|d| -d.untempered_loglik))
}

/// Tₙ = (1/n) Σᵢ −log[(1/S) Σₛ p(xᵢ|θₛ)] from β = 1 draws.
pub fn empirical_loss(samples: &PosteriorSamples, family: &ModelFamily, data: &Dataset) -> Result<f64> {
    Ok(log_predictive(samples, family, data)?.0)
}

/// [`empirical_loss`] together with its Monte Carlo standard error
/// (delta method on the per-draw linearization of Tₙ).
pub fn empirical_loss_with_mcse(
    samples: &PosteriorSamples,
    family: &ModelFamily,
    data: &Dataset,
) -> Result<(f64, f64)> {
    let (t_n, log_r) = log_predictive(samples, family, data)?;
    let n = data.len() as f64;
    let mut terms = alloc::vec![0.0; data.len()];
    let influence = |params: &ParameterPoint, terms: &mut [f64]| -> Result<f64> {
        family.log_likelihood_terms(params, data, terms)?;
        let mut s = 0.0;
        for (l, lr) in terms.iter().zip(&log_r) {
            s += math::exp(l.max(LOG_DENSITY_FLOOR) - lr);
        }
        Ok(-s / n)
    };
    let mut per_chain: Vec<Vec<f64>> = alloc::vec![Vec::new(); samples.chains()];
    for d in samples.draws() {
        per_chain[d.chain].push(influence(&d.params, &mut terms)?);
    }
    Ok((t_n, diagnostics::mcse_mean(&per_chain)))
}

/// Returns Tₙ and the per-datum log predictive densities log r̂(xᵢ).
fn log_predictive(
    samples: &PosteriorSamples,
    family: &ModelFamily,
    data: &Dataset,
) -> Result<(f64, Vec<f64>)> {
    check_samples(samples, family, data)?;
    if !samples.temper().is_untempered() {
        return Err(invalid!(
            "the empirical loss needs β = 1 draws, got β = {}",
            samples.beta()
        ));
    }
    let n = data.len();
    let mut acc = alloc::vec![LogSumExp::default(); n];
    let mut terms = alloc::vec![0.0; n];
    for d in samples.draws() {
        family.log_likelihood_terms(&d.params, data, &mut terms)?;
        for (i, (a, &l)) in acc.iter_mut().zip(&terms).enumerate() {
            if !l.is_finite() {
                return Err(Error::NonFiniteDensity { index: i, value: l });
            }
            a.push(l.max(LOG_DENSITY_FLOOR));
        }
    }
    let log_s = math::ln(samples.len() as f64);
    let log_r: Vec<f64> = acc.iter().map(|a| a.value() - log_s).collect();
    let t_n = -log_r.iter().sum::<f64>() / n as f64;
    finite(t_n, "empirical loss")?;
    Ok((t_n, log_r))
}

fn check_samples(samples: &PosteriorSamples, family: &ModelFamily, data: &Dataset) -> Result<()> {
    if samples.is_empty() {
        return Err(invalid!("posterior has no draws"));
    }
    samples.ensure_family(family)?;
    family.check_data(data)?;
    if samples.temper().n() != data.len() {
        return Err(invalid!(
            "samples were drawn for n = {}, data has n = {}",
            samples.temper().n(),
            data.len()
        ));
    }
    Ok(())
}

fn finite(value: f64, what: &str) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::Numerical(alloc::format!("{what} is {value}")))
    }
}

fn penalty(lambda: f64, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(invalid!("n must be at least 1"));
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(invalid!("λ must be finite and non-negative, got {lambda}"));
    }
    Ok(lambda * math::ln(n as f64))
}

/// LS = n·Tₙ + λ log n.
pub fn ls(t_n: f64, lambda: f64, source: LambdaSource, n: usize) -> Result<CriterionResult> {
    let pen = penalty(lambda, n)?;
    finite(t_n, "Tₙ")?;
    let value = n as f64 * t_n + pen;
    finite(value, "LS")?;
    Ok(CriterionResult {
        name: CriterionName::Ls,
        value,
        lambda: Some(LambdaUsed { value: lambda, source }),
        beta0: None,
        n,
        diagnostics: None,
    })
}

/// sBIC = Σᵢ −log p(xᵢ|θ̂) + λ log n.
pub fn sbic(nll_at_plugin: f64, lambda: f64, source: LambdaSource, n: usize) -> Result<CriterionResult> {
    let pen = penalty(lambda, n)?;
    finite(nll_at_plugin, "plug-in negative log-likelihood")?;
    let value = nll_at_plugin + pen;
    finite(value, "sBIC")?;
    Ok(CriterionResult {
        name: CriterionName::Sbic,
        value,
        lambda: Some(LambdaUsed { value: lambda, source }),
        beta0: None,
        n,
        diagnostics: None,
    })
}

/// Where sBIC's θ̂ comes from.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum PlugIn {
    /// The draw maximizing log-likelihood plus log-prior.
    #[default]
    MapOverSamples,
    /// Maximum likelihood: EM started from the MAP draw for mixtures,
    /// the closed form for regression and the normal mean.
    Mle,
}

/// Σᵢ −log p(xᵢ|θ̂) for the chosen plug-in.
pub fn plug_in_nll(
    family: &ModelFamily,
    data: &Dataset,
    samples: &PosteriorSamples,
    plug_in: PlugIn,
) -> Result<f64> {
    check_samples(samples, family, data)?;
    let map = plug_in_estimate(family, data, samples)?;
    let point = match plug_in {
        PlugIn::MapOverSamples => map,
        PlugIn::Mle => match (family, &map) {
            (ModelFamily::Gmm { .. }, ParameterPoint::Gmm(init)) => {
                ParameterPoint::Gmm(mle::gmm_em(data, init, 1000, 1e-10)?.params)
            }
            (ModelFamily::Rrr { rank, .. }, _) => ParameterPoint::Rrr(mle::rrr_mle(data, *rank)?),
            (ModelFamily::NormalMean { prior }, _) => {
                ParameterPoint::normal_mean(mle::normal_mean_mle(data, *prior)?)
            }
            _ => return Err(invalid!("plug-in does not match the model family")),
        },
    };
    let nll = mle::plug_in_nll(&point, data);
    finite(nll, "plug-in negative log-likelihood")?;
    Ok(nll)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaEstimate {
    pub lambda_hat: f64,
    pub beta0_pair: (f64, f64),
    pub wbic_pair: (f64, f64),
    pub n: usize,
    /// λ̂ < 0: impossible in theory, a sign of Monte Carlo noise.
    pub negative: bool,
}

/// λ̂ = (WBIC₁ − WBIC₂) / ((log n)(1/β₀⁽¹⁾ − 1/β₀⁽²⁾)).
pub fn lambda_hat_from_wbic(
    wbic_pair: (f64, f64),
    beta0_pair: (f64, f64),
    n: usize,
) -> Result<LambdaEstimate> {
    let (b1, b2) = beta0_pair;
    if !(b1 > 0.0 && b2 > 0.0 && b1.is_finite() && b2.is_finite()) {
        return Err(invalid!("β₀ values must be positive, got ({b1}, {b2})"));
    }
    if b1 == b2 {
        return Err(invalid!("λ̂ needs two distinct β₀ values, got {b1} twice"));
    }
    if n < 3 {
        return Err(invalid!("λ̂ needs n ≥ 3, got {n}"));
    }
    let log_n = math::ln(n as f64);
    let lambda_hat = (wbic_pair.0 - wbic_pair.1) / (log_n * (1.0 / b1 - 1.0 / b2));
    finite(lambda_hat, "λ̂")?;
    Ok(LambdaEstimate {
        lambda_hat,
        beta0_pair,
        wbic_pair,
        n,
        negative: lambda_hat < 0.0,
    })
}

/// Seed of the tempered run at `beta0` under master seed `seed`.
pub fn tempered_seed(seed: u64, beta0: f64) -> u64 {
    math::derive_seed(&[seed, beta0.to_bits()])
}

/// Runs one tempered posterior per β₀ and returns λ̂.
pub fn lambda_hat(
    family: &ModelFamily,
    data: &Dataset,
    beta0_pair: (f64, f64),
    cfg: &ChainConfig,
) -> Result<LambdaEstimate> {
    if beta0_pair.0 == beta0_pair.1 {
        return Err(invalid!("λ̂ needs two distinct β₀ values, got {} twice", beta0_pair.0));
    }
    let mut values = [0.0; 2];
    for (slot, beta0) in values.iter_mut().zip([beta0_pair.0, beta0_pair.1]) {
        let temper = TemperSpec::tempered(beta0, data.len())?;
        let run_cfg = cfg.clone().with_seed(tempered_seed(cfg.seed, beta0));
        let samples = sampler::run_chains(family, data, temper, &run_cfg)?;
        *slot = wbic(&samples, family, data)?.value;
    }
    lambda_hat_from_wbic((values[0], values[1]), beta0_pair, data.len())
}

/// A model under comparison; `dimension` breaks ties toward smaller models.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Candidate {
    pub id: String,
    pub dimension: usize,
}

/// Index of the candidate with the smallest criterion value.
pub fn select_model(results: &[(Candidate, CriterionResult)]) -> Result<usize> {
    let Some((_, first)) = results.first() else {
        return Err(invalid!("no candidates to select from"));
    };
    if let Some((c, r)) = results.iter().find(|(_, r)| r.name != first.name) {
        return Err(invalid!(
            "mixed criteria: {} for {} but {} for the first candidate",
            r.name,
            c.id,
            first.name
        ));
    }
    let mut best = 0;
    for (i, (c, r)) in results.iter().enumerate().skip(1) {
        let (bc, br) = &results[best];
        let better = match r.value.total_cmp(&br.value) {
            core::cmp::Ordering::Less => true,
            core::cmp::Ordering::Equal => c.dimension < bc.dimension,
            core::cmp::Ordering::Greater => false,
        };
        if better {
            best = i;
        }
    }
    Ok(best)
}
