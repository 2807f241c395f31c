//! Convergence diagnostics: rank-normalized split-R̂ and effective sample
//! size in the usual multi-chain formulation (Geyer's initial monotone
//! sequence on the combined autocorrelation).

use alloc::string::String;
use alloc::vec::Vec;

use super::PosteriorSamples;
use crate::error::{invalid, Result};
use crate::math;

/// Chains shorter than this cannot be diagnosed.
pub const MIN_DRAWS_PER_CHAIN: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct CoordinateDiagnostic {
    pub name: String,
    pub rhat: f64,
    pub ess: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    pub coordinates: Vec<CoordinateDiagnostic>,
    pub min_ess: f64,
    pub max_rhat: f64,
    /// R̂ of the per-draw log-likelihood
    pub loglik_rhat: f64,
}

/// Diagnoses every invariant summary of the draws plus the log-likelihood.
///
/// Mixture draws are summarized by their sorted first mean coordinates and
/// regression draws by the entries of B·A, so label switching and the
/// rescaling symmetry of the factors do not raise false alarms.
pub fn diagnose(samples: &PosteriorSamples) -> Result<Diagnostics> {
    if samples.chains() < 2 {
        return Err(invalid!("diagnostics need at least 2 chains, got {}", samples.chains()));
    }
    let loglik = samples.per_chain(|d| d.untempered_loglik);
    let shortest = loglik.iter().map(Vec::len).min().unwrap_or(0);
    if shortest < MIN_DRAWS_PER_CHAIN {
        return Err(invalid!(
            "diagnostics need at least {MIN_DRAWS_PER_CHAIN} draws per chain, got {shortest}"
        ));
    }
    let family = *samples.family();
    let names = family.summary_names();
    let mut series: Vec<Vec<Vec<f64>>> =
        alloc::vec![alloc::vec![Vec::new(); samples.chains()]; names.len()];
    for d in samples.draws() {
        for (k, v) in family.invariant_summaries(&d.params).into_iter().enumerate() {
            series[k][d.chain].push(v);
        }
    }

    let mut coordinates = Vec::with_capacity(names.len() + 1);
    for (name, chains) in names.into_iter().zip(series) {
        coordinates.push(CoordinateDiagnostic {
            name,
            rhat: rhat(&chains),
            ess: ess_bulk(&chains),
        });
    }
    let loglik_rhat = rhat(&loglik);
    coordinates.push(CoordinateDiagnostic {
        name: String::from("loglik"),
        rhat: loglik_rhat,
        ess: ess_bulk(&loglik),
    });
    let min_ess = coordinates.iter().map(|c| c.ess).fold(f64::INFINITY, f64::min);
    let max_rhat = coordinates.iter().map(|c| c.rhat).fold(f64::NEG_INFINITY, f64::max);
    Ok(Diagnostics {
        coordinates,
        min_ess,
        max_rhat,
        loglik_rhat,
    })
}

fn truncate(chains: &[Vec<f64>]) -> Vec<&[f64]> {
    let len = chains.iter().map(Vec::len).min().unwrap_or(0);
    chains.iter().map(|c| &c[..len]).collect()
}

fn split(chains: &[&[f64]]) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(chains.len() * 2);
    for c in chains {
        let half = c.len() / 2;
        out.push(c[..half].to_vec());
        // drop the middle draw of odd-length chains
        out.push(c[c.len() - half..].to_vec());
    }
    out
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn sample_var(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() as f64 - 1.0)
}

/// Classic split-free R̂ on already-split chains.
fn basic_rhat(chains: &[Vec<f64>]) -> f64 {
    let n = chains[0].len() as f64;
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let within = chains.iter().map(|c| sample_var(c)).sum::<f64>() / chains.len() as f64;
    let between_over_n = sample_var(&means);
    if within == 0.0 {
        return if between_over_n == 0.0 { f64::NAN } else { f64::INFINITY };
    }
    let var_plus = (n - 1.0) / n * within + between_over_n;
    math::sqrt(var_plus / within)
}

/// Replaces pooled values by normal scores of their (average) ranks.
fn rank_normalize(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let total: usize = chains.iter().map(Vec::len).sum();
    let mut index: Vec<(f64, usize, usize)> = Vec::with_capacity(total);
    for (c, chain) in chains.iter().enumerate() {
        for (i, &v) in chain.iter().enumerate() {
            index.push((v, c, i));
        }
    }
    index.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<Vec<f64>> = chains.iter().map(|c| alloc::vec![0.0; c.len()]).collect();
    let s = total as f64;
    let mut start = 0;
    while start < index.len() {
        let mut end = start + 1;
        while end < index.len() && index[end].0 == index[start].0 {
            end += 1;
        }
        // 1-based average rank of the tie group
        let rank = (start + end + 1) as f64 / 2.0;
        let z = math::normal_quantile((rank - 0.375) / (s + 0.25));
        for &(_, c, i) in &index[start..end] {
            out[c][i] = z;
        }
        start = end;
    }
    out
}

/// Rank-normalized split-R̂: the larger of the bulk and folded (tail)
/// versions. Infinite when chains are internally constant but disagree.
pub fn rhat(chains: &[Vec<f64>]) -> f64 {
    let chains = truncate(chains);
    if chains.len() < 2 || chains[0].len() < 4 {
        return f64::NAN;
    }
    let pieces = split(&chains);
    let bulk = basic_rhat(&rank_normalize(&pieces));
    let pooled: Vec<f64> = pieces.iter().flatten().copied().collect();
    let median = median(&pooled);
    let folded: Vec<Vec<f64>> = pieces
        .iter()
        .map(|c| c.iter().map(|v| (v - median).abs()).collect())
        .collect();
    let tail = basic_rhat(&rank_normalize(&folded));
    match (bulk.is_nan(), tail.is_nan()) {
        (true, true) => f64::NAN,
        (true, false) => tail,
        (false, true) => bulk,
        (false, false) => bulk.max(tail),
    }
}

fn median(x: &[f64]) -> f64 {
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Bulk effective sample size (rank-normalized, split chains).
pub fn ess_bulk(chains: &[Vec<f64>]) -> f64 {
    let chains = truncate(chains);
    if chains.is_empty() || chains[0].len() < 4 {
        return f64::NAN;
    }
    ess_of(&rank_normalize(&split(&chains)))
}

/// Effective sample size of the raw values (split chains, no rank
/// transform), the right denominator for the Monte Carlo error of a mean.
pub fn ess_mean(chains: &[Vec<f64>]) -> f64 {
    let chains = truncate(chains);
    if chains.is_empty() || chains[0].len() < 4 {
        return f64::NAN;
    }
    ess_of(&split(&chains))
}

/// Monte Carlo standard error of the pooled mean.
pub fn mcse_mean(chains: &[Vec<f64>]) -> f64 {
    let pooled: Vec<f64> = truncate(chains).into_iter().flatten().copied().collect();
    if pooled.len() < 2 {
        return f64::NAN;
    }
    let sd = math::sqrt(sample_var(&pooled));
    if sd == 0.0 {
        return 0.0;
    }
    sd / math::sqrt(ess_mean(chains))
}

fn autocovariance(x: &[f64], lag: usize) -> f64 {
    let n = x.len();
    let m = mean(x);
    let mut s = 0.0;
    for t in 0..n - lag {
        s += (x[t] - m) * (x[t + lag] - m);
    }
    s / n as f64
}

/// Multi-chain ESS with Geyer's initial monotone sequence, capped at the
/// total number of draws.
fn ess_of(chains: &[Vec<f64>]) -> f64 {
    let m = chains.len();
    let n = chains[0].len();
    let total = (m * n) as f64;
    let chain_var: Vec<f64> = chains.iter().map(|c| sample_var(c)).collect();
    let mean_var = chain_var.iter().sum::<f64>() / m as f64;
    let mut var_plus = mean_var * (n as f64 - 1.0) / n as f64;
    if m > 1 {
        let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
        var_plus += sample_var(&means);
    }
    if var_plus == 0.0 || var_plus.is_nan() {
        return f64::NAN;
    }
    let rho = |lag: usize| {
        let acov = chains.iter().map(|c| autocovariance(c, lag)).sum::<f64>() / m as f64;
        1.0 - (mean_var - acov) / var_plus
    };

    let mut rho_hat = alloc::vec![0.0; n + 1];
    let mut t = 0;
    let mut even = 1.0;
    let mut odd = rho(1);
    rho_hat[0] = even;
    rho_hat[1] = odd;
    while t + 5 < n && even + odd > 0.0 {
        t += 2;
        even = rho(t);
        odd = rho(t + 1);
        if even + odd >= 0.0 {
            rho_hat[t] = even;
            rho_hat[t + 1] = odd;
        }
    }
    let max_t = t;
    if even > 0.0 {
        rho_hat[max_t + 1] = even;
    }
    // enforce a monotone sequence of paired sums
    let mut t = 1;
    while t + 3 <= max_t {
        if rho_hat[t + 1] + rho_hat[t + 2] > rho_hat[t - 1] + rho_hat[t] {
            rho_hat[t + 1] = (rho_hat[t - 1] + rho_hat[t]) / 2.0;
            rho_hat[t + 2] = rho_hat[t + 1];
        }
        t += 2;
    }
    let tau: f64 = -1.0 + 2.0 * rho_hat[..=max_t].iter().sum::<f64>() + rho_hat[max_t + 1];
    let tau = tau.max(1.0 / libm::log10(total));
    (total / tau).min(total)
}
