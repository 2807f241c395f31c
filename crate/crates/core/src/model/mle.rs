//! Maximum-likelihood plug-in sources, offered next to the default
//! MAP-over-samples plug-in for comparison.

use alloc::vec::Vec;

use nalgebra::{DMatrix, SymmetricEigen};

use super::{Dataset, GmmParams, ModelFamily, NormalMeanPrior, ParameterPoint, Prepared, RrrParams};
use crate::error::{invalid, Error, Result};
use crate::math::{self, LN_2PI};

/// Result of an EM run.
#[derive(Debug, Clone)]
pub struct EmFit {
    pub params: GmmParams,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// EM for a unit-covariance Gaussian mixture, started from `init`.
///
/// Stops when the total log-likelihood improves by less than `tol` or after
/// `max_iter` iterations. A component whose responsibilities all vanish
/// keeps its previous mean.
pub fn gmm_em(data: &Dataset, init: &GmmParams, max_iter: usize, tol: f64) -> Result<EmFit> {
    let family = ModelFamily::gmm(init.components(), init.dim())?;
    family.check_data(data)?;
    let (h, dim, n) = (init.components(), init.dim(), data.len());
    let mut params = init.clone();
    let mut resp = alloc::vec![0.0; h];
    let mut previous = f64::NEG_INFINITY;
    let mut ll = f64::NEG_INFINITY;
    let constant = -0.5 * dim as f64 * LN_2PI;

    for iter in 0..max_iter {
        let log_w: Vec<f64> = params.weights().iter().map(|&w| math::ln(w)).collect();
        let mut mass = alloc::vec![0.0; h];
        let mut sums = alloc::vec![0.0; h * dim];
        ll = 0.0;
        for i in 0..n {
            let x = data.output(i);
            for (k, r) in resp.iter_mut().enumerate() {
                let sq: f64 = x.iter().zip(params.mean(k)).map(|(a, b)| (a - b) * (a - b)).sum();
                *r = log_w[k] - 0.5 * sq;
            }
            let lse = math::log_sum_exp(&resp);
            ll += constant + lse;
            for (k, r) in resp.iter().enumerate() {
                let p = math::exp(r - lse);
                mass[k] += p;
                for (s, v) in sums[k * dim..(k + 1) * dim].iter_mut().zip(x) {
                    *s += p * v;
                }
            }
        }
        if !ll.is_finite() {
            return Err(Error::Numerical(alloc::format!("EM log-likelihood became {ll}")));
        }
        if ll - previous < tol {
            return Ok(EmFit {
                params,
                log_likelihood: ll,
                iterations: iter,
                converged: true,
            });
        }
        previous = ll;
        let weights: Vec<f64> = mass.iter().map(|m| m / n as f64).collect();
        let mut means = params.means().to_vec();
        for k in 0..h {
            if mass[k] > 1e-300 {
                for j in 0..dim {
                    means[k * dim + j] = sums[k * dim + j] / mass[k];
                }
            }
        }
        let total: f64 = weights.iter().sum();
        let weights = weights.iter().map(|w| w / total).collect();
        params = GmmParams::new(weights, means, dim)?;
    }
    Ok(EmFit {
        params,
        log_likelihood: ll,
        iterations: max_iter,
        converged: false,
    })
}

/// Closed-form reduced-rank regression MLE under identity noise: ordinary
/// least squares followed by projection of the fitted values onto their top
/// `rank` principal output directions.
pub fn rrr_mle(data: &Dataset, rank: usize) -> Result<RrrParams> {
    let (m, nout, n) = (data.input_dim(), data.output_dim(), data.len());
    let inputs = data
        .inputs()
        .ok_or_else(|| invalid!("reduced-rank regression needs inputs"))?;
    if rank == 0 {
        return Err(invalid!("rank must be positive"));
    }
    if n < m {
        return Err(invalid!("need at least {m} observations for least squares, got {n}"));
    }
    let x = DMatrix::from_row_slice(n, m, inputs);
    let y = DMatrix::from_row_slice(n, nout, data.outputs());
    let xtx = x.transpose() * &x;
    let chol = xtx
        .cholesky()
        .ok_or_else(|| Error::Numerical("input Gram matrix is singular".into()))?;
    // M × N
    let ols_t = chol.solve(&(x.transpose() * &y));
    let fitted = &x * &ols_t;
    let gram = fitted.transpose() * &fitted;
    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..nout).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));

    // B = top eigenvectors (N × H); A = Bᵀ C_ols (H × M). Directions beyond
    // the output dimension are padded with zeros.
    let mut b = alloc::vec![0.0; nout * rank];
    for (k, &col) in order.iter().take(rank).enumerate() {
        for i in 0..nout {
            b[i * rank + k] = eig.eigenvectors[(i, col)];
        }
    }
    let mut a = alloc::vec![0.0; rank * m];
    for k in 0..rank {
        for j in 0..m {
            let mut s = 0.0;
            for i in 0..nout {
                s += b[i * rank + k] * ols_t[(j, i)];
            }
            a[k * m + j] = s;
        }
    }
    RrrParams::new(a, b, m, nout, rank)
}

/// Numerical rank of the N × M coefficient matrix B·A: the number of
/// singular values above `tol` times the largest one.
pub fn coefficient_rank(params: &RrrParams, tol: f64) -> usize {
    let c = DMatrix::from_row_slice(params.outputs(), params.inputs(), &params.coefficients());
    let sv = c.singular_values();
    let largest = sv.iter().copied().fold(0.0, f64::max);
    if largest == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > tol * largest).count()
}

/// MLE of the normal mean restricted to the prior support: the sample mean,
/// clipped to [−1, 1] under the uniform prior.
pub fn normal_mean_mle(data: &Dataset, prior: NormalMeanPrior) -> Result<f64> {
    ModelFamily::NormalMean { prior }.check_data(data)?;
    let mean = data.output_mean()[0];
    Ok(match prior {
        NormalMeanPrior::Uniform => mean.clamp(-1.0, 1.0),
        NormalMeanPrior::Gaussian { .. } => mean,
    })
}

/// Σ −log p(xᵢ | θ̂) for a plug-in point, without re-validating.
pub(crate) fn plug_in_nll(point: &ParameterPoint, data: &Dataset) -> f64 {
    let prepared = Prepared::new(point);
    data.iter().map(|d| -prepared.datum(&d)).sum()
}
