use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{invalid, Result};

/// Tolerance on |Σπ − 1| accepted for mixture weights.
pub const SIMPLEX_TOLERANCE: f64 = 1e-12;

/// Mixture weights on the simplex and one mean vector per component.
/// Component covariances are fixed to the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmParams {
    weights: Vec<f64>,
    /// H × N, row-major
    means: Vec<f64>,
    dim: usize,
}

impl GmmParams {
    pub fn new(weights: Vec<f64>, means: Vec<f64>, dim: usize) -> Result<Self> {
        let h = weights.len();
        if h == 0 {
            return Err(invalid!("mixture needs at least one component"));
        }
        if dim == 0 || means.len() != h * dim {
            return Err(invalid!(
                "expected {h} x {dim} means, got {} values",
                means.len()
            ));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(invalid!("mixture weight {w} is not a nonnegative number"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > SIMPLEX_TOLERANCE {
            return Err(invalid!("mixture weights sum to {total}, not 1"));
        }
        if means.iter().any(|m| !m.is_finite()) {
            return Err(invalid!("mixture means must be finite"));
        }
        Ok(Self {
            weights,
            means,
            dim,
        })
    }

    pub(crate) fn new_unchecked(weights: Vec<f64>, means: Vec<f64>, dim: usize) -> Self {
        Self {
            weights,
            means,
            dim,
        }
    }

    /// Builds from per-component mean rows.
    pub fn from_rows(weights: Vec<f64>, rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(invalid!("mean rows have unequal lengths"));
        }
        Self::new(weights, rows.concat(), dim)
    }

    pub fn components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn mean(&self, h: usize) -> &[f64] {
        &self.means[h * self.dim..(h + 1) * self.dim]
    }
}

/// Reduced-rank regression factors: y ≈ B A x with A ∈ ℝ^{H×M}, B ∈ ℝ^{N×H}.
#[derive(Debug, Clone, PartialEq)]
pub struct RrrParams {
    /// H × M, row-major
    a: Vec<f64>,
    /// N × H, row-major
    b: Vec<f64>,
    rank: usize,
    inputs: usize,
    outputs: usize,
}

impl RrrParams {
    pub fn new(a: Vec<f64>, b: Vec<f64>, inputs: usize, outputs: usize, rank: usize) -> Result<Self> {
        if inputs == 0 || outputs == 0 || rank == 0 {
            return Err(invalid!("reduced-rank regression dimensions must be positive"));
        }
        if a.len() != rank * inputs || b.len() != outputs * rank {
            return Err(invalid!(
                "expected A {rank}x{inputs} and B {outputs}x{rank}, got {} and {} values",
                a.len(),
                b.len()
            ));
        }
        if a.iter().chain(&b).any(|v| !v.is_finite()) {
            return Err(invalid!("reduced-rank regression entries must be finite"));
        }
        Ok(Self {
            a,
            b,
            rank,
            inputs,
            outputs,
        })
    }

    pub(crate) fn new_unchecked(
        a: Vec<f64>,
        b: Vec<f64>,
        inputs: usize,
        outputs: usize,
        rank: usize,
    ) -> Self {
        Self {
            a,
            b,
            rank,
            inputs,
            outputs,
        }
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    /// H
    pub fn rank(&self) -> usize {
        self.rank
    }

    /// M
    pub fn inputs(&self) -> usize {
        self.inputs
    }

    /// N
    pub fn outputs(&self) -> usize {
        self.outputs
    }

    /// The N × M coefficient matrix B·A, row-major.
    pub fn coefficients(&self) -> Vec<f64> {
        let (m, n, h) = (self.inputs, self.outputs, self.rank);
        let mut c = alloc::vec![0.0; n * m];
        for i in 0..n {
            for k in 0..h {
                let bik = self.b[i * h + k];
                for j in 0..m {
                    c[i * m + j] += bik * self.a[k * m + j];
                }
            }
        }
        c
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalMeanParams {
    pub theta: f64,
}

/// A parameter vector for one of the supported model families.
#[derive(Debug, Clone, PartialEq)]
pub enum ParameterPoint {
    Gmm(GmmParams),
    Rrr(RrrParams),
    NormalMean(NormalMeanParams),
}

impl ParameterPoint {
    pub fn normal_mean(theta: f64) -> Self {
        ParameterPoint::NormalMean(NormalMeanParams { theta })
    }

    /// Coordinates in declared order: GMM weights then means (row-major),
    /// RRR entries of A then B (row-major), or the scalar mean.
    pub fn coords(&self) -> Vec<f64> {
        match self {
            ParameterPoint::Gmm(p) => p.weights.iter().chain(&p.means).copied().collect(),
            ParameterPoint::Rrr(p) => p.a.iter().chain(&p.b).copied().collect(),
            ParameterPoint::NormalMean(p) => alloc::vec![p.theta],
        }
    }

    /// Names matching [`ParameterPoint::coords`].
    pub fn coord_names(&self) -> Vec<String> {
        match self {
            ParameterPoint::Gmm(p) => {
                let mut names: Vec<String> =
                    (1..=p.components()).map(|h| format!("pi{h}")).collect();
                for h in 1..=p.components() {
                    for j in 1..=p.dim {
                        names.push(format!("mu{h}_{j}"));
                    }
                }
                names
            }
            ParameterPoint::Rrr(p) => {
                let mut names = Vec::with_capacity(p.a.len() + p.b.len());
                for k in 1..=p.rank {
                    for j in 1..=p.inputs {
                        names.push(format!("a{k}_{j}"));
                    }
                }
                for i in 1..=p.outputs {
                    for k in 1..=p.rank {
                        names.push(format!("b{i}_{k}"));
                    }
                }
                names
            }
            ParameterPoint::NormalMean(_) => alloc::vec![String::from("theta")],
        }
    }

    pub fn as_gmm(&self) -> Option<&GmmParams> {
        match self {
            ParameterPoint::Gmm(p) => Some(p),
            _ => None,
        }
    }

    pub fn as_rrr(&self) -> Option<&RrrParams> {
        match self {
            ParameterPoint::Rrr(p) => Some(p),
            _ => None,
        }
    }

    pub fn as_normal_mean(&self) -> Option<f64> {
        match self {
            ParameterPoint::NormalMean(p) => Some(p.theta),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn gmm_validation() {
        assert!(GmmParams::new(vec![0.5, 0.5], vec![0.0, 1.0], 1).is_ok());
        assert!(GmmParams::new(vec![0.5, 0.6], vec![0.0, 1.0], 1).is_err());
        assert!(GmmParams::new(vec![1.5, -0.5], vec![0.0, 1.0], 1).is_err());
        assert!(GmmParams::new(vec![1.0], vec![f64::INFINITY], 1).is_err());
        assert!(GmmParams::new(vec![], vec![], 1).is_err());
        assert!(GmmParams::new(vec![1.0, 0.0], vec![0.0, 1.0], 1).is_ok());
    }

    #[test]
    fn rrr_coefficients() {
        // A = [1 2], B = [3; 4]  =>  BA = [3 6; 4 8]
        let p = RrrParams::new(vec![1.0, 2.0], vec![3.0, 4.0], 2, 2, 1).unwrap();
        assert_eq!(p.coefficients(), vec![3.0, 6.0, 4.0, 8.0]);
        assert!(RrrParams::new(vec![1.0], vec![1.0, 2.0], 2, 2, 1).is_err());
    }

    #[test]
    fn coordinate_names_line_up() {
        let g = ParameterPoint::Gmm(
            GmmParams::from_rows(vec![0.5, 0.5], &[vec![0.0, 1.0], vec![2.0, 3.0]]).unwrap(),
        );
        assert_eq!(g.coords().len(), g.coord_names().len());
        assert_eq!(g.coord_names()[3], "mu1_2");
        let r = ParameterPoint::Rrr(RrrParams::new(vec![0.0; 6], vec![0.0; 8], 3, 4, 2).unwrap());
        assert_eq!(r.coords().len(), r.coord_names().len());
        assert_eq!(r.coord_names()[6], "b1_1");
    }
}
