//! Closed forms for x ~ N(θ, 1) with a N(0, τ²) prior.
//!
//! The tempered posterior ∝ Πᵢ N(xᵢ; θ, 1)^β N(θ; 0, τ²) is Gaussian, so
//! WBIC and the Bayes predictive have exact expressions. The sampler and
//! criteria are tested against these.
//!
//! All functions expect β > 0 and τ² > 0.

use crate::math::{self, LN_2PI};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConjugatePosterior {
    pub mean: f64,
    pub variance: f64,
    pub beta: f64,
    pub prior_variance: f64,
}

impl ConjugatePosterior {
    pub fn sd(&self) -> f64 {
        math::sqrt(self.variance)
    }
}

/// The tempered posterior: precision 1/τ² + βn, mean βΣxᵢ / precision.
pub fn conjugate_tempered_posterior(data: &[f64], beta: f64, tau2: f64) -> ConjugatePosterior {
    debug_assert!(beta > 0.0 && tau2 > 0.0);
    let sum: f64 = data.iter().sum();
    let variance = 1.0 / (1.0 / tau2 + beta * data.len() as f64);
    ConjugatePosterior {
        mean: beta * sum * variance,
        variance,
        beta,
        prior_variance: tau2,
    }
}

/// ℰ_β[Σᵢ −log N(xᵢ; θ, 1)] = (n/2) log 2π + ½Σ(xᵢ − m_β)² + n v_β / 2.
pub fn wbic_exact(data: &[f64], beta: f64, tau2: f64) -> f64 {
    let post = conjugate_tempered_posterior(data, beta, tau2);
    let n = data.len() as f64;
    let ss: f64 = data.iter().map(|x| (x - post.mean) * (x - post.mean)).sum();
    0.5 * n * LN_2PI + 0.5 * ss + 0.5 * n * post.variance
}

/// Tₙ with the exact predictive N(m₁, 1 + v₁).
pub fn empirical_loss_exact(data: &[f64], tau2: f64) -> f64 {
    let post = conjugate_tempered_posterior(data, 1.0, tau2);
    let var = 1.0 + post.variance;
    let total: f64 = data.iter().map(|&x| -math::normal_ln_pdf(x, post.mean, var)).sum();
    total / data.len() as f64
}
