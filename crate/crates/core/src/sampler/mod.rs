//! Tempered-posterior sampling.
//!
//! The target is ∝ Πᵢ p(xᵢ|θ)^β φ(θ) with β = β₀ / log n (or β = 1 for the
//! ordinary posterior). Each chain runs an adaptive random-walk Metropolis
//! kernel in unconstrained coordinates: a Gaussian step per coordinate with
//! scale `s · σᵢ`, where the global scale `s` is tuned by Robbins–Monro
//! toward 0.234 acceptance and the σᵢ are re-estimated from the chain's own
//! warmup draws. All adaptation stops at the end of warmup.

pub mod diagnostics;

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Error, Result};
use crate::math;
use crate::model::{Dataset, ModelFamily, ParameterPoint, Prepared};

pub use diagnostics::{diagnose, CoordinateDiagnostic, Diagnostics};

/// Acceptance rate the warmup adaptation aims for.
pub const TARGET_ACCEPTANCE: f64 = 0.234;
/// Prior draws tried before giving up on initializing a chain.
pub const MAX_INIT_ATTEMPTS: usize = 100;
/// Retained draws per chain below which criteria are considered unreliable.
pub const MIN_RETAINED_PER_CHAIN: usize = 100;
/// Post-warmup acceptance outside this band is reported as a warning.
pub const ACCEPTANCE_BAND: (f64, f64) = (0.1, 0.6);

/// Inverse temperature schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemperSpec {
    beta0: f64,
    n: usize,
    untempered: bool,
}

impl TemperSpec {
    /// β = β₀ / log n. Requires n ≥ 3 so that log n > 1 − ε is bounded away
    /// from zero.
    pub fn tempered(beta0: f64, n: usize) -> Result<Self> {
        if !(beta0.is_finite() && beta0 > 0.0) {
            return Err(invalid!("beta0 must be positive and finite, got {beta0}"));
        }
        if n < 3 {
            return Err(invalid!("tempering schedule beta0/log(n) needs n >= 3, got n = {n}"));
        }
        Ok(Self {
            beta0,
            n,
            untempered: false,
        })
    }

    /// The ordinary posterior, β = 1 exactly.
    pub fn untempered(n: usize) -> Self {
        Self {
            beta0: 1.0,
            n,
            untempered: true,
        }
    }

    pub fn beta(&self) -> f64 {
        if self.untempered {
            1.0
        } else {
            self.beta0 / math::ln(self.n as f64)
        }
    }

    /// β₀; 1 for the untempered posterior.
    pub fn beta0(&self) -> f64 {
        self.beta0
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn is_untempered(&self) -> bool {
        self.untempered
    }
}

/// MCMC run settings. `draws` counts post-warmup iterations per chain, of
/// which every `thin`-th is retained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainConfig {
    pub chains: usize,
    pub warmup: usize,
    pub draws: usize,
    pub thin: usize,
    pub seed: u64,
    pub initial_scale: f64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            chains: 4,
            warmup: 2000,
            draws: 2000,
            thin: 1,
            seed: 0,
            initial_scale: 0.1,
        }
    }
}

impl ChainConfig {
    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.chains < 2 {
            return Err(invalid!("need at least 2 chains, got {}", self.chains));
        }
        if self.thin == 0 {
            return Err(invalid!("thin must be positive"));
        }
        if self.draws / self.thin == 0 {
            return Err(invalid!("draws/thin must retain at least one draw per chain"));
        }
        if !(self.initial_scale.is_finite() && self.initial_scale > 0.0) {
            return Err(invalid!("initial scale must be positive, got {}", self.initial_scale));
        }
        Ok(())
    }

    pub fn retained_per_chain(&self) -> usize {
        self.draws / self.thin
    }
}

/// One retained posterior draw.
#[derive(Debug, Clone, PartialEq)]
pub struct Draw {
    pub chain: usize,
    /// Post-warmup iteration index within the chain.
    pub iteration: usize,
    pub params: ParameterPoint,
    /// β · log p(X|θ) + log φ(θ)
    pub tempered_logpost: f64,
    /// log p(X|θ) = Σᵢ log p(xᵢ|θ)
    pub untempered_loglik: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SamplerWarning {
    /// Fewer retained draws per chain than [`MIN_RETAINED_PER_CHAIN`].
    FewDraws { per_chain: usize },
    /// Post-warmup acceptance outside [`ACCEPTANCE_BAND`].
    AcceptanceRate { chain: usize, rate: f64 },
}

/// Output of a single chain, before assembly.
#[derive(Debug, Clone)]
pub struct ChainOutput {
    pub chain: usize,
    pub draws: Vec<Draw>,
    pub acceptance_rate: f64,
    pub step_scale: f64,
}

/// Retained draws from all chains, merged in chain-id order.
#[derive(Debug, Clone)]
pub struct PosteriorSamples {
    family: ModelFamily,
    temper: TemperSpec,
    draws: Vec<Draw>,
    chains: usize,
    acceptance: Vec<f64>,
    seed: u64,
    warnings: Vec<SamplerWarning>,
}

impl PosteriorSamples {
    /// Merges chain outputs in chain-id order, whatever order they arrive in.
    pub fn assemble(
        family: ModelFamily,
        temper: TemperSpec,
        cfg: &ChainConfig,
        mut outputs: Vec<ChainOutput>,
    ) -> Result<Self> {
        outputs.sort_by_key(|o| o.chain);
        if outputs.iter().enumerate().any(|(i, o)| o.chain != i) {
            return Err(invalid!("chain outputs must cover ids 0..{}", outputs.len()));
        }
        let mut warnings = Vec::new();
        if cfg.retained_per_chain() < MIN_RETAINED_PER_CHAIN {
            warnings.push(SamplerWarning::FewDraws {
                per_chain: cfg.retained_per_chain(),
            });
        }
        let chains = outputs.len();
        let mut acceptance = Vec::with_capacity(chains);
        let mut draws = Vec::with_capacity(outputs.iter().map(|o| o.draws.len()).sum());
        for out in outputs {
            let rate = out.acceptance_rate;
            if !(ACCEPTANCE_BAND.0..=ACCEPTANCE_BAND.1).contains(&rate) {
                warnings.push(SamplerWarning::AcceptanceRate {
                    chain: out.chain,
                    rate,
                });
            }
            acceptance.push(rate);
            draws.extend(out.draws);
        }
        Ok(Self {
            family,
            temper,
            draws,
            chains,
            acceptance,
            seed: cfg.seed,
            warnings,
        })
    }

    /// Builds a sample set from explicit points, computing the stored
    /// log-densities. Useful for degenerate posteriors and tests.
    pub fn from_points(
        family: ModelFamily,
        data: &Dataset,
        temper: TemperSpec,
        points: Vec<(usize, ParameterPoint)>,
    ) -> Result<Self> {
        family.check_data(data)?;
        let beta = temper.beta();
        let mut draws = Vec::with_capacity(points.len());
        let mut counters: Vec<usize> = Vec::new();
        for (chain, params) in points {
            let loglik = family.log_likelihood(&params, data)?;
            let prior = family.log_prior(&params)?;
            if counters.len() <= chain {
                counters.resize(chain + 1, 0);
            }
            draws.push(Draw {
                chain,
                iteration: counters[chain],
                params,
                tempered_logpost: beta * loglik + prior,
                untempered_loglik: loglik,
            });
            counters[chain] += 1;
        }
        draws.sort_by_key(|d| (d.chain, d.iteration));
        Ok(Self {
            family,
            temper,
            draws,
            chains: counters.len(),
            acceptance: alloc::vec![f64::NAN; counters.len()],
            seed: 0,
            warnings: Vec::new(),
        })
    }

    pub fn family(&self) -> &ModelFamily {
        &self.family
    }

    pub fn temper(&self) -> &TemperSpec {
        &self.temper
    }

    pub fn beta(&self) -> f64 {
        self.temper.beta()
    }

    pub fn draws(&self) -> &[Draw] {
        &self.draws
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn chains(&self) -> usize {
        self.chains
    }

    pub fn acceptance_rates(&self) -> &[f64] {
        &self.acceptance
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn warnings(&self) -> &[SamplerWarning] {
        &self.warnings
    }

    /// Per-chain series of a per-draw functional.
    pub fn per_chain<F: Fn(&Draw) -> f64>(&self, f: F) -> Vec<Vec<f64>> {
        let mut out = alloc::vec![Vec::new(); self.chains];
        for d in &self.draws {
            out[d.chain].push(f(d));
        }
        out
    }

    pub(crate) fn ensure_family(&self, family: &ModelFamily) -> Result<()> {
        if &self.family != family {
            return Err(invalid!(
                "samples were drawn from {:?}, not {:?}",
                self.family,
                family
            ));
        }
        Ok(())
    }
}

/// ℰ_β[f]: the mean of `f` over all retained draws, in stored order.
pub fn posterior_expectation<F: Fn(&Draw) -> f64>(samples: &PosteriorSamples, f: F) -> Result<f64> {
    if samples.is_empty() {
        return Err(invalid!("posterior has no draws"));
    }
    let sum: f64 = samples.draws().iter().map(f).sum();
    Ok(sum / samples.len() as f64)
}

/// Runs all chains sequentially and assembles them.
pub fn run_chains(
    family: &ModelFamily,
    data: &Dataset,
    temper: TemperSpec,
    cfg: &ChainConfig,
) -> Result<PosteriorSamples> {
    cfg.validate()?;
    let outputs = (0..cfg.chains)
        .map(|c| run_chain(family, data, temper, cfg, c))
        .collect::<Result<Vec<_>>>()?;
    PosteriorSamples::assemble(*family, temper, cfg, outputs)
}

struct Evaluation {
    params: ParameterPoint,
    loglik: f64,
    tempered_logpost: f64,
    /// tempered_logpost plus the log-Jacobian of the unconstrained map
    target: f64,
}

fn evaluate(family: &ModelFamily, data: &Dataset, beta: f64, u: &[f64]) -> Evaluation {
    let (params, log_jacobian) = family.from_unconstrained(u);
    let prior = family.log_prior_unchecked(&params);
    let loglik = if prior == f64::NEG_INFINITY {
        f64::NEG_INFINITY
    } else {
        Prepared::new(&params).sum(data)
    };
    let tempered_logpost = beta * loglik + prior;
    let target = tempered_logpost + log_jacobian;
    Evaluation {
        params,
        loglik,
        tempered_logpost,
        target: if target.is_nan() { f64::NEG_INFINITY } else { target },
    }
}

struct Window {
    end: usize,
    /// re-estimate the per-coordinate scales when this window closes
    metric: bool,
}

/// Warmup schedule: a scale-only opening window, two windows whose draws
/// set the per-coordinate scales, and a scale-only closing window.
fn warmup_windows(warmup: usize) -> Vec<Window> {
    if warmup < 100 {
        return alloc::vec![Window {
            end: warmup,
            metric: false,
        }];
    }
    let at = |f: f64| (warmup as f64 * f) as usize;
    alloc::vec![
        Window {
            end: at(0.15),
            metric: false
        },
        Window {
            end: at(0.4),
            metric: true
        },
        Window {
            end: at(0.9),
            metric: true
        },
        Window {
            end: warmup,
            metric: false
        },
    ]
}

/// Windows shorter than this are not checked for total rejection.
const MIN_CHECKED_WINDOW: usize = 50;

/// Running mean and variance per coordinate.
struct Welford {
    count: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Welford {
    fn new(d: usize) -> Self {
        Self {
            count: 0,
            mean: alloc::vec![0.0; d],
            m2: alloc::vec![0.0; d],
        }
    }

    fn push(&mut self, x: &[f64]) {
        self.count += 1;
        let k = self.count as f64;
        for ((m, s), &v) in self.mean.iter_mut().zip(&mut self.m2).zip(x) {
            let delta = v - *m;
            *m += delta / k;
            *s += delta * (v - *m);
        }
    }

    /// Standard deviations shrunk toward 1e-3 variance for short windows.
    fn regularized_sd(&self) -> Vec<f64> {
        let k = self.count as f64;
        self.m2
            .iter()
            .map(|&s| {
                let var = if self.count > 1 { s / (k - 1.0) } else { 0.0 };
                math::sqrt((k / (k + 5.0)) * var + 1e-3 * (5.0 / (k + 5.0)))
            })
            .collect()
    }

    fn reset(&mut self) {
        self.count = 0;
        self.mean.iter_mut().for_each(|m| *m = 0.0);
        self.m2.iter_mut().for_each(|m| *m = 0.0);
    }
}

/// Runs one chain. The chain's random stream is ChaCha8 seeded with
/// `cfg.seed` on stream `chain`, so chains can run in any order or in
/// parallel and still reproduce [`run_chains`] exactly.
pub fn run_chain(
    family: &ModelFamily,
    data: &Dataset,
    temper: TemperSpec,
    cfg: &ChainConfig,
    chain: usize,
) -> Result<ChainOutput> {
    cfg.validate()?;
    family.validate()?;
    family.check_data(data)?;
    let beta = temper.beta();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(chain as u64);

    let mut state = None;
    for _ in 0..MAX_INIT_ATTEMPTS {
        let start = family.sample_prior(&mut rng);
        let u = family.to_unconstrained(&start);
        let eval = evaluate(family, data, beta, &u);
        if eval.target.is_finite() {
            state = Some((u, eval));
            break;
        }
    }
    let (mut u, mut current) = state.ok_or(Error::Initialization {
        chain,
        attempts: MAX_INIT_ATTEMPTS,
    })?;

    let d = u.len();
    let windows = warmup_windows(cfg.warmup);
    let mut window = 0;
    let mut window_start = 0;
    let mut window_accepts = 0usize;
    let mut welford = Welford::new(d);
    let mut scales = alloc::vec![1.0; d];
    let mut log_step = math::ln(cfg.initial_scale);
    let mut adapt_t = 0usize;

    let mut proposal = alloc::vec![0.0; d];
    let mut draws = Vec::with_capacity(cfg.retained_per_chain());
    let mut post_accepts = 0usize;

    for it in 0..cfg.warmup + cfg.draws {
        let step = math::exp(log_step);
        for ((p, &x), &s) in proposal.iter_mut().zip(&u).zip(&scales) {
            let z: f64 = rng.sample(StandardNormal);
            *p = x + step * s * z;
        }
        let candidate = evaluate(family, data, beta, &proposal);
        let log_alpha = candidate.target - current.target;
        let log_u = math::ln(rng.random::<f64>());
        let accepted = log_u < log_alpha;
        if accepted {
            core::mem::swap(&mut u, &mut proposal);
            current = candidate;
        }

        if it < cfg.warmup {
            window_accepts += accepted as usize;
            let alpha = if log_alpha >= 0.0 {
                1.0
            } else if log_alpha.is_nan() {
                0.0
            } else {
                math::exp(log_alpha)
            };
            adapt_t += 1;
            log_step += (alpha - TARGET_ACCEPTANCE) / libm::pow(adapt_t as f64 + 10.0, 0.6);
            welford.push(&u);
            if it + 1 == windows[window].end {
                let len = windows[window].end - window_start;
                if window_accepts == 0 && len >= MIN_CHECKED_WINDOW {
                    return Err(Error::DegenerateChain { chain, window });
                }
                if windows[window].metric {
                    scales = welford.regularized_sd();
                    log_step = math::ln(2.38 / math::sqrt(d as f64));
                    adapt_t = 0;
                }
                welford.reset();
                window_accepts = 0;
                window_start = windows[window].end;
                window += 1;
            }
        } else {
            post_accepts += accepted as usize;
            let post = it - cfg.warmup;
            if (post + 1) % cfg.thin == 0 {
                draws.push(Draw {
                    chain,
                    iteration: post,
                    params: current.params.clone(),
                    tempered_logpost: current.tempered_logpost,
                    untempered_loglik: current.loglik,
                });
            }
        }
    }

    Ok(ChainOutput {
        chain,
        draws,
        acceptance_rate: post_accepts as f64 / cfg.draws as f64,
        step_scale: math::exp(log_step),
    })
}
