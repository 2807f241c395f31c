//! Exact learning coefficients in rational arithmetic.

use core::fmt;

use num_rational::Ratio;

use crate::error::{invalid, Result};

pub type Rational = Ratio<i64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CaseLabel {
    Case1a,
    Case1b,
    Case2,
    Case3,
    Case4,
    Regular,
    GmmBound,
}

impl CaseLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            CaseLabel::Case1a => "1a",
            CaseLabel::Case1b => "1b",
            CaseLabel::Case2 => "2",
            CaseLabel::Case3 => "3",
            CaseLabel::Case4 => "4",
            CaseLabel::Regular => "regular",
            CaseLabel::GmmBound => "gmm_bound",
        }
    }
}

impl fmt::Display for CaseLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LearningCoefficient {
    pub lambda: Rational,
    /// Order of the pole, 1 or 2.
    pub multiplicity: u32,
    pub case: CaseLabel,
    /// `lambda` is an upper bound rather than the exact value.
    pub upper_bound: bool,
    /// More than one of the strict-inequality cases held; the first in
    /// dispatch order was used.
    pub overlapping_cases: bool,
}

impl LearningCoefficient {
    fn exact(lambda: Rational, multiplicity: u32, case: CaseLabel) -> Self {
        Self {
            lambda,
            multiplicity,
            case,
            upper_bound: false,
            overlapping_cases: false,
        }
    }

    pub fn value(&self) -> f64 {
        *self.lambda.numer() as f64 / *self.lambda.denom() as f64
    }
}

fn int(v: usize) -> Result<i64> {
    i64::try_from(v)
        .ok()
        .filter(|&x| x < (1 << 20))
        .ok_or_else(|| invalid!("dimension {v} is too large"))
}

/// Learning coefficient of reduced-rank regression y = BAx + ε with
/// M inputs, N outputs, H hidden units and true rank r.
pub fn aoyagi_lambda(m: usize, n: usize, h: usize, r: usize) -> Result<LearningCoefficient> {
    if m == 0 || n == 0 || h == 0 {
        return Err(invalid!("M, N and H must be at least 1, got ({m}, {n}, {h})"));
    }
    if r > h.min(m).min(n) {
        return Err(invalid!("true rank {r} exceeds min(H, M, N) = {}", h.min(m).min(n)));
    }
    let (m, n, h, r) = (int(m)?, int(n)?, int(h)?, int(r)?);
    let half = |x: i64| Rational::new(x, 2);
    let case2 = m + r > n + h;
    let case3 = n + r > m + h;
    let case4 = h + r > m + n;
    let overlapping = [case2, case3, case4].iter().filter(|&&c| c).count() > 1;

    let mut coeff = if case2 {
        LearningCoefficient::exact(half(h * n - h * r + m * r), 1, CaseLabel::Case2)
    } else if case3 {
        LearningCoefficient::exact(half(h * m - h * r + n * r), 1, CaseLabel::Case3)
    } else if case4 {
        LearningCoefficient::exact(half(m * n), 1, CaseLabel::Case4)
    } else {
        let d = h + r - m - n;
        let base = Rational::new(-d * d, 8) + half(m * n);
        if (m + h + n + r) % 2 == 0 {
            LearningCoefficient::exact(base, 1, CaseLabel::Case1a)
        } else {
            LearningCoefficient::exact(base + Rational::new(1, 8), 2, CaseLabel::Case1b)
        }
    };
    coeff.overlapping_cases = overlapping;
    Ok(coeff)
}

/// d/2, exact for a regular model of dimension d with a positive prior.
pub fn regular_lambda(d: usize) -> Result<LearningCoefficient> {
    if d == 0 {
        return Err(invalid!("dimension must be at least 1"));
    }
    Ok(LearningCoefficient::exact(Rational::new(int(d)?, 2), 1, CaseLabel::Regular))
}

/// Upper bound ½(N·H* + H − 1) for an H-component unit-variance Gaussian
/// mixture in ℝ^N when the truth has H* components.
pub fn gmm_lambda_bound(n: usize, h_star: usize, h: usize) -> Result<LearningCoefficient> {
    if n == 0 || h_star == 0 {
        return Err(invalid!("N and H* must be at least 1"));
    }
    if h < h_star {
        return Err(invalid!("H = {h} is smaller than the true H* = {h_star}"));
    }
    let (n, h_star, h) = (int(n)?, int(h_star)?, int(h)?);
    Ok(LearningCoefficient {
        lambda: Rational::new(n * h_star + h - 1, 2),
        multiplicity: 1,
        case: CaseLabel::GmmBound,
        upper_bound: true,
        overlapping_cases: false,
    })
}
