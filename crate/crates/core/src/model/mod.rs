//! Statistical models: per-datum log-likelihood, prior, simulation.
//!
//! Three families are supported:
//!
//! * `Gmm`: mixture of H unit-covariance Gaussians in ℝ^N with a uniform
//!   prior on the weight simplex and N(0, 1) on every mean coordinate;
//! * `Rrr`: reduced-rank regression y = B A x + ε, ε ~ N(0, I_N), with
//!   N(0, 1) on every entry of A and B;
//! * `NormalMean`: x ~ N(θ, 1) with either a uniform prior on [−1, 1] or a
//!   conjugate N(0, τ²) prior.
//!
//! Sums over data are always taken in index order so that repeated runs are
//! bit-identical.

mod dataset;
pub mod mle;
mod params;

use alloc::string::String;
use alloc::vec::Vec;
use alloc::{format, vec};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, StandardNormal};

use crate::error::{invalid, Error, Result};
use crate::math::{self, LogSumExp, LN_2PI};
use crate::sampler::PosteriorSamples;

pub use dataset::{Dataset, Datum};
pub use params::{GmmParams, NormalMeanParams, ParameterPoint, RrrParams, SIMPLEX_TOLERANCE};

/// Prior on the scalar mean of the normal-mean model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NormalMeanPrior {
    /// Uniform on [−1, 1] (density ½).
    Uniform,
    /// Conjugate N(0, variance).
    Gaussian { variance: f64 },
}

/// Model family with its dimensions. The prior is fixed per family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelFamily {
    Gmm { components: usize, dim: usize },
    Rrr { inputs: usize, outputs: usize, rank: usize },
    NormalMean { prior: NormalMeanPrior },
}

impl ModelFamily {
    pub fn gmm(components: usize, dim: usize) -> Result<Self> {
        let f = ModelFamily::Gmm { components, dim };
        f.validate()?;
        Ok(f)
    }

    pub fn rrr(inputs: usize, outputs: usize, rank: usize) -> Result<Self> {
        let f = ModelFamily::Rrr {
            inputs,
            outputs,
            rank,
        };
        f.validate()?;
        Ok(f)
    }

    /// Normal mean with the uniform prior on [−1, 1].
    pub fn normal_mean() -> Self {
        ModelFamily::NormalMean {
            prior: NormalMeanPrior::Uniform,
        }
    }

    /// Normal mean with a conjugate N(0, `prior_variance`) prior.
    pub fn normal_mean_conjugate(prior_variance: f64) -> Result<Self> {
        let f = ModelFamily::NormalMean {
            prior: NormalMeanPrior::Gaussian {
                variance: prior_variance,
            },
        };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            ModelFamily::Gmm { components, dim } => {
                if components == 0 || dim == 0 {
                    return Err(invalid!("mixture needs H >= 1 and N >= 1"));
                }
            }
            ModelFamily::Rrr {
                inputs,
                outputs,
                rank,
            } => {
                if inputs == 0 || outputs == 0 || rank == 0 {
                    return Err(invalid!("reduced-rank regression needs M, N, H >= 1"));
                }
            }
            ModelFamily::NormalMean { prior } => {
                if let NormalMeanPrior::Gaussian { variance } = prior {
                    if !(variance.is_finite() && variance > 0.0) {
                        return Err(invalid!("prior variance must be positive, got {variance}"));
                    }
                }
            }
        }
        Ok(())
    }

    /// Number of free parameters d (the simplex contributes H − 1).
    pub fn parameter_count(&self) -> usize {
        match *self {
            ModelFamily::Gmm { components, dim } => components - 1 + components * dim,
            ModelFamily::Rrr {
                inputs,
                outputs,
                rank,
            } => rank * (inputs + outputs),
            ModelFamily::NormalMean { .. } => 1,
        }
    }

    /// Output dimension of one observation.
    pub fn output_dim(&self) -> usize {
        match *self {
            ModelFamily::Gmm { dim, .. } => dim,
            ModelFamily::Rrr { outputs, .. } => outputs,
            ModelFamily::NormalMean { .. } => 1,
        }
    }

    /// Input dimension; zero for families without covariates.
    pub fn input_dim(&self) -> usize {
        match *self {
            ModelFamily::Rrr { inputs, .. } => inputs,
            _ => 0,
        }
    }

    pub fn check_params(&self, theta: &ParameterPoint) -> Result<()> {
        match (*self, theta) {
            (ModelFamily::Gmm { components, dim }, ParameterPoint::Gmm(p)) => {
                if p.components() != components || p.dim() != dim {
                    return Err(invalid!(
                        "mixture parameters are {}x{}, model expects {components}x{dim}",
                        p.components(),
                        p.dim()
                    ));
                }
            }
            (
                ModelFamily::Rrr {
                    inputs,
                    outputs,
                    rank,
                },
                ParameterPoint::Rrr(p),
            ) => {
                if p.inputs() != inputs || p.outputs() != outputs || p.rank() != rank {
                    return Err(invalid!(
                        "regression parameters have (M, N, H) = ({}, {}, {}), model expects ({inputs}, {outputs}, {rank})",
                        p.inputs(),
                        p.outputs(),
                        p.rank()
                    ));
                }
            }
            (ModelFamily::NormalMean { .. }, ParameterPoint::NormalMean(p)) => {
                if !p.theta.is_finite() {
                    return Err(invalid!("theta must be finite, got {}", p.theta));
                }
            }
            _ => return Err(invalid!("parameter point does not belong to {:?}", self)),
        }
        Ok(())
    }

    pub fn check_datum(&self, datum: &Datum<'_>) -> Result<()> {
        if datum.output.len() != self.output_dim() {
            return Err(invalid!(
                "observation has dimension {}, model expects {}",
                datum.output.len(),
                self.output_dim()
            ));
        }
        match (self.input_dim(), datum.input) {
            (0, None) => Ok(()),
            (0, Some(_)) => Err(invalid!("model takes no inputs but the datum has some")),
            (m, Some(x)) if x.len() == m => Ok(()),
            (m, Some(x)) => Err(invalid!("input has dimension {}, model expects {m}", x.len())),
            (_, None) => Err(invalid!("regression model needs an input vector")),
        }
    }

    pub fn check_data(&self, data: &Dataset) -> Result<()> {
        if data.output_dim() != self.output_dim() || data.input_dim() != self.input_dim() {
            return Err(invalid!(
                "dataset has (inputs, outputs) = ({}, {}), model expects ({}, {})",
                data.input_dim(),
                data.output_dim(),
                self.input_dim(),
                self.output_dim()
            ));
        }
        if data.has_inputs() != matches!(self, ModelFamily::Rrr { .. }) {
            return Err(invalid!("inputs must be present exactly for regression models"));
        }
        Ok(())
    }

    /// log p(datum | θ).
    pub fn log_likelihood_datum(&self, theta: &ParameterPoint, datum: &Datum<'_>) -> Result<f64> {
        self.check_params(theta)?;
        self.check_datum(datum)?;
        Ok(Prepared::new(theta).datum(datum))
    }

    /// Σᵢ log p(xᵢ | θ), summed in index order.
    pub fn log_likelihood(&self, theta: &ParameterPoint, data: &Dataset) -> Result<f64> {
        self.check_params(theta)?;
        self.check_data(data)?;
        Ok(Prepared::new(theta).sum(data))
    }

    /// Σᵢ −log p(xᵢ | θ), summed in index order.
    pub fn negative_log_likelihood(&self, theta: &ParameterPoint, data: &Dataset) -> Result<f64> {
        self.check_params(theta)?;
        self.check_data(data)?;
        let prepared = Prepared::new(theta);
        Ok(data.iter().map(|d| -prepared.datum(&d)).sum())
    }

    /// Per-datum log-likelihoods written into `out` (length n).
    pub fn log_likelihood_terms(
        &self,
        theta: &ParameterPoint,
        data: &Dataset,
        out: &mut [f64],
    ) -> Result<()> {
        self.check_params(theta)?;
        self.check_data(data)?;
        if out.len() != data.len() {
            return Err(invalid!("output buffer has length {}, need {}", out.len(), data.len()));
        }
        let prepared = Prepared::new(theta);
        for (slot, d) in out.iter_mut().zip(data.iter()) {
            *slot = prepared.datum(&d);
        }
        Ok(())
    }

    /// log φ(θ). May be −∞ outside the prior support.
    pub fn log_prior(&self, theta: &ParameterPoint) -> Result<f64> {
        self.check_params(theta)?;
        Ok(self.log_prior_unchecked(theta))
    }

    pub(crate) fn log_prior_unchecked(&self, theta: &ParameterPoint) -> f64 {
        match (self, theta) {
            (ModelFamily::Gmm { components, .. }, ParameterPoint::Gmm(p)) => {
                // uniform density (H-1)! on the simplex
                math::ln_gamma(*components as f64) + standard_normal_ln_pdf_sum(p.means())
            }
            (ModelFamily::Rrr { .. }, ParameterPoint::Rrr(p)) => {
                standard_normal_ln_pdf_sum(p.a()) + standard_normal_ln_pdf_sum(p.b())
            }
            (ModelFamily::NormalMean { prior }, ParameterPoint::NormalMean(p)) => match prior {
                NormalMeanPrior::Uniform => {
                    if p.theta.abs() <= 1.0 {
                        -core::f64::consts::LN_2
                    } else {
                        f64::NEG_INFINITY
                    }
                }
                NormalMeanPrior::Gaussian { variance } => math::normal_ln_pdf(p.theta, 0.0, *variance),
            },
            _ => unreachable!("checked by check_params"),
        }
    }

    /// Draws n observations from the model at `truth`; deterministic in `seed`.
    ///
    /// Regression inputs are drawn from N(0, I_M).
    pub fn simulate(&self, truth: &ParameterPoint, n: usize, seed: u64) -> Result<Dataset> {
        self.check_params(truth)?;
        if n == 0 {
            return Err(invalid!("cannot simulate an empty dataset"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match truth {
            ParameterPoint::Gmm(p) => {
                let dim = p.dim();
                let mut out = Vec::with_capacity(n * dim);
                for _ in 0..n {
                    let u: f64 = rng.random();
                    let h = pick_component(p.weights(), u);
                    for &m in p.mean(h) {
                        let z: f64 = rng.sample(StandardNormal);
                        out.push(m + z);
                    }
                }
                Dataset::new(out, dim)
            }
            ParameterPoint::Rrr(p) => {
                let (m, nout) = (p.inputs(), p.outputs());
                let coef = p.coefficients();
                let mut xs = Vec::with_capacity(n * m);
                let mut ys = Vec::with_capacity(n * nout);
                for _ in 0..n {
                    let start = xs.len();
                    for _ in 0..m {
                        xs.push(rng.sample::<f64, _>(StandardNormal));
                    }
                    let x = &xs[start..];
                    for i in 0..nout {
                        let mean: f64 = coef[i * m..(i + 1) * m].iter().zip(x).map(|(c, v)| c * v).sum();
                        let eps: f64 = rng.sample(StandardNormal);
                        ys.push(mean + eps);
                    }
                }
                Dataset::with_inputs(xs, m, ys, nout)
            }
            ParameterPoint::NormalMean(p) => {
                let xs = (0..n)
                    .map(|_| p.theta + rng.sample::<f64, _>(StandardNormal))
                    .collect();
                Dataset::new(xs, 1)
            }
        }
    }

    /// One draw from the prior.
    pub fn sample_prior<R: Rng + ?Sized>(&self, rng: &mut R) -> ParameterPoint {
        match *self {
            ModelFamily::Gmm { components, dim } => {
                let mut weights: Vec<f64> = (0..components).map(|_| rng.sample(Exp1)).collect();
                let total: f64 = weights.iter().sum();
                for w in &mut weights {
                    *w /= total;
                }
                let means = (0..components * dim).map(|_| rng.sample(StandardNormal)).collect();
                ParameterPoint::Gmm(GmmParams::new_unchecked(weights, means, dim))
            }
            ModelFamily::Rrr {
                inputs,
                outputs,
                rank,
            } => {
                let a = (0..rank * inputs).map(|_| rng.sample(StandardNormal)).collect();
                let b = (0..outputs * rank).map(|_| rng.sample(StandardNormal)).collect();
                ParameterPoint::Rrr(RrrParams::new_unchecked(a, b, inputs, outputs, rank))
            }
            ModelFamily::NormalMean { prior } => {
                let theta = match prior {
                    NormalMeanPrior::Uniform => 2.0 * rng.random::<f64>() - 1.0,
                    NormalMeanPrior::Gaussian { variance } => {
                        math::sqrt(variance) * rng.sample::<f64, _>(StandardNormal)
                    }
                };
                ParameterPoint::normal_mean(theta)
            }
        }
    }

    /// Map to the sampler's unconstrained coordinates: mixture weights go
    /// through the additive log-ratio z_h = log(π_h / π_H), h < H.
    pub(crate) fn to_unconstrained(&self, theta: &ParameterPoint) -> Vec<f64> {
        match theta {
            ParameterPoint::Gmm(p) => {
                let w = p.weights();
                let last = math::ln(w[w.len() - 1]);
                let mut u: Vec<f64> = w[..w.len() - 1].iter().map(|&x| math::ln(x) - last).collect();
                u.extend_from_slice(p.means());
                u
            }
            ParameterPoint::Rrr(p) => p.a().iter().chain(p.b()).copied().collect(),
            ParameterPoint::NormalMean(p) => vec![p.theta],
        }
    }

    /// Inverse of [`Self::to_unconstrained`], returning the point and the
    /// log-Jacobian of the map from unconstrained to natural coordinates.
    pub(crate) fn from_unconstrained(&self, u: &[f64]) -> (ParameterPoint, f64) {
        match *self {
            ModelFamily::Gmm { components, dim } => {
                let k = components - 1;
                let z = &u[..k];
                let mut lse = LogSumExp::default();
                lse.push(0.0);
                for &v in z {
                    lse.push(v);
                }
                let norm = lse.value();
                let mut log_jacobian = -norm;
                let mut weights = Vec::with_capacity(components);
                for &v in z {
                    log_jacobian += v - norm;
                    weights.push(math::exp(v - norm));
                }
                weights.push(math::exp(-norm));
                let point = GmmParams::new_unchecked(weights, u[k..].to_vec(), dim);
                (ParameterPoint::Gmm(point), log_jacobian)
            }
            ModelFamily::Rrr {
                inputs,
                outputs,
                rank,
            } => {
                let split = rank * inputs;
                let point = RrrParams::new_unchecked(
                    u[..split].to_vec(),
                    u[split..].to_vec(),
                    inputs,
                    outputs,
                    rank,
                );
                (ParameterPoint::Rrr(point), 0.0)
            }
            ModelFamily::NormalMean { .. } => (ParameterPoint::normal_mean(u[0]), 0.0),
        }
    }

    /// Names of [`Self::invariant_summaries`].
    pub fn summary_names(&self) -> Vec<String> {
        match *self {
            ModelFamily::Gmm { components, .. } => {
                (1..=components).map(|h| format!("mu({h})_1")).collect()
            }
            ModelFamily::Rrr {
                inputs, outputs, ..
            } => {
                let mut names = Vec::with_capacity(inputs * outputs);
                for i in 1..=outputs {
                    for j in 1..=inputs {
                        names.push(format!("ba{i}_{j}"));
                    }
                }
                names
            }
            ModelFamily::NormalMean { .. } => vec![String::from("theta")],
        }
    }

    /// Scalar summaries of θ that do not depend on the model's
    /// non-identifiable symmetries: sorted first mean coordinates for
    /// mixtures, entries of B·A for reduced-rank regression.
    pub fn invariant_summaries(&self, theta: &ParameterPoint) -> Vec<f64> {
        match theta {
            ParameterPoint::Gmm(p) => {
                let mut first: Vec<f64> = (0..p.components()).map(|h| p.mean(h)[0]).collect();
                first.sort_by(f64::total_cmp);
                first
            }
            ParameterPoint::Rrr(p) => p.coefficients(),
            ParameterPoint::NormalMean(p) => vec![p.theta],
        }
    }
}

fn standard_normal_ln_pdf_sum(values: &[f64]) -> f64 {
    let sq: f64 = values.iter().map(|v| v * v).sum();
    -0.5 * (values.len() as f64) * LN_2PI - 0.5 * sq
}

fn pick_component(weights: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (h, &w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return h;
        }
    }
    // u landed in the rounding gap above the last cumulative weight
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(weights.len() - 1)
}

const STACK_COMPONENTS: usize = 16;

/// θ with per-evaluation constants hoisted out of the datum loop.
pub(crate) enum Prepared<'a> {
    Gmm {
        log_weights: Vec<f64>,
        params: &'a GmmParams,
        constant: f64,
    },
    Rrr {
        coef: Vec<f64>,
        inputs: usize,
        constant: f64,
    },
    NormalMean {
        theta: f64,
    },
}

impl<'a> Prepared<'a> {
    pub(crate) fn new(theta: &'a ParameterPoint) -> Self {
        match theta {
            ParameterPoint::Gmm(p) => Prepared::Gmm {
                log_weights: p.weights().iter().map(|&w| math::ln(w)).collect(),
                params: p,
                constant: -0.5 * p.dim() as f64 * LN_2PI,
            },
            ParameterPoint::Rrr(p) => Prepared::Rrr {
                coef: p.coefficients(),
                inputs: p.inputs(),
                constant: -0.5 * p.outputs() as f64 * LN_2PI,
            },
            ParameterPoint::NormalMean(p) => Prepared::NormalMean { theta: p.theta },
        }
    }

    #[inline]
    pub(crate) fn datum(&self, d: &Datum<'_>) -> f64 {
        match self {
            Prepared::Gmm {
                log_weights,
                params,
                constant,
            } => {
                let h = log_weights.len();
                let term = |k: usize| {
                    let mean = params.mean(k);
                    let sq: f64 = d.output.iter().zip(mean).map(|(x, m)| (x - m) * (x - m)).sum();
                    log_weights[k] - 0.5 * sq
                };
                let lse = if h <= STACK_COMPONENTS {
                    let mut buf = [0.0f64; STACK_COMPONENTS];
                    for (k, slot) in buf[..h].iter_mut().enumerate() {
                        *slot = term(k);
                    }
                    math::log_sum_exp(&buf[..h])
                } else {
                    let mut acc = LogSumExp::default();
                    (0..h).for_each(|k| acc.push(term(k)));
                    acc.value()
                };
                constant + lse
            }
            Prepared::Rrr {
                coef,
                inputs,
                constant,
            } => {
                let x = d.input.expect("regression datum without inputs");
                let mut sq = 0.0;
                for (i, &y) in d.output.iter().enumerate() {
                    let row = &coef[i * inputs..(i + 1) * inputs];
                    let mean: f64 = row.iter().zip(x).map(|(c, v)| c * v).sum();
                    sq += (y - mean) * (y - mean);
                }
                constant - 0.5 * sq
            }
            Prepared::NormalMean { theta } => {
                let r = d.output[0] - theta;
                -0.5 * LN_2PI - 0.5 * r * r
            }
        }
    }

    pub(crate) fn sum(&self, data: &Dataset) -> f64 {
        match self {
            Prepared::Gmm {
                log_weights,
                params,
                constant,
            } if log_weights.len() <= STACK_COMPONENTS => {
                // same arithmetic as `datum`, minus the per-datum dispatch
                let h = log_weights.len();
                let dim = params.dim();
                let means = params.means();
                let mut buf = [0.0f64; STACK_COMPONENTS];
                let mut total = 0.0;
                for x in data.outputs().chunks_exact(dim) {
                    let mut max = f64::NEG_INFINITY;
                    for ((slot, lw), mean) in buf[..h].iter_mut().zip(log_weights).zip(means.chunks_exact(dim)) {
                        let sq: f64 = x.iter().zip(mean).map(|(x, m)| (x - m) * (x - m)).sum();
                        *slot = lw - 0.5 * sq;
                        max = max.max(*slot);
                    }
                    let lse = if max == f64::NEG_INFINITY {
                        max
                    } else {
                        let mut acc = 0.0;
                        for &v in &buf[..h] {
                            acc += math::exp(v - max);
                        }
                        max + math::ln(acc)
                    };
                    total += constant + lse;
                }
                total
            }
            _ => data.iter().map(|d| self.datum(&d)).sum(),
        }
    }
}

/// Plug-in θ̂ for the simplified sBIC: the retained draw with the largest
/// un-tempered log-posterior log p(X|θ) + log φ(θ).
///
/// Ties are broken by the lexicographically smallest coordinate vector so
/// the result does not depend on draw order.
pub fn plug_in_estimate(
    family: &ModelFamily,
    data: &Dataset,
    posterior: &PosteriorSamples,
) -> Result<ParameterPoint> {
    family.check_data(data)?;
    if posterior.is_empty() {
        return Err(invalid!("posterior has no draws"));
    }
    let mut best: Option<(f64, &ParameterPoint)> = None;
    for draw in posterior.draws() {
        family.check_params(&draw.params)?;
        let score = draw.untempered_loglik + family.log_prior_unchecked(&draw.params);
        let better = match best {
            None => true,
            Some((s, p)) => match score.total_cmp(&s) {
                core::cmp::Ordering::Greater => true,
                core::cmp::Ordering::Less => false,
                core::cmp::Ordering::Equal => lexicographic_less(&draw.params, p),
            },
        };
        if better {
            best = Some((score, &draw.params));
        }
    }
    let (score, point) = best.expect("nonempty");
    if !score.is_finite() {
        return Err(Error::Numerical(format!("best log-posterior is {score}")));
    }
    Ok(point.clone())
}

fn lexicographic_less(a: &ParameterPoint, b: &ParameterPoint) -> bool {
    let (ca, cb) = (a.coords(), b.coords());
    for (x, y) in ca.iter().zip(&cb) {
        match x.total_cmp(y) {
            core::cmp::Ordering::Less => return true,
            core::cmp::Ordering::Greater => return false,
            core::cmp::Ordering::Equal => {}
        }
    }
    false
}
