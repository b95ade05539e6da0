//! Univariate distribution functions on the extended real line and their
//! left-continuous generalized inverses.
//!
//! Conventions: `G(-inf) = 0`, `G(+inf) = 1`, and
//! `G^{<-}(u) = inf { x : G(x) >= u }` with `inf {} = +inf`. In particular
//! `G^{<-}(0) = -inf` for every distribution function `G`.

pub mod normal;

use std::cmp::Ordering;

use crate::copulas::MarginFamily;
use crate::error::{check_probability, Error, Result};

/// A point of `[-inf, +inf]`. Never holds NaN.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtendedReal {
    NegInf,
    Finite(f64),
    PosInf,
}

impl ExtendedReal {
    /// Maps IEEE infinities onto the corresponding variants; rejects NaN.
    pub fn new(x: f64) -> Result<Self> {
        if x.is_nan() {
            Err(Error::Domain("NaN is not an extended real".into()))
        } else {
            Ok(Self::from_non_nan(x))
        }
    }

    pub(crate) fn from_non_nan(x: f64) -> Self {
        debug_assert!(!x.is_nan());
        if x == f64::INFINITY {
            Self::PosInf
        } else if x == f64::NEG_INFINITY {
            Self::NegInf
        } else {
            Self::Finite(x)
        }
    }

    pub fn to_f64(self) -> f64 {
        match self {
            Self::NegInf => f64::NEG_INFINITY,
            Self::Finite(x) => x,
            Self::PosInf => f64::INFINITY,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, Self::Finite(_))
    }
}

impl Eq for ExtendedReal {}

impl Ord for ExtendedReal {
    fn cmp(&self, other: &Self) -> Ordering {
        use ExtendedReal::*;
        match (self, other) {
            (NegInf, NegInf) | (PosInf, PosInf) => Ordering::Equal,
            (NegInf, _) | (_, PosInf) => Ordering::Less,
            (_, NegInf) | (PosInf, _) => Ordering::Greater,
            (Finite(a), Finite(b)) => a.total_cmp(b),
        }
    }
}

impl PartialOrd for ExtendedReal {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// A univariate distribution function with the conventions of this module.
pub trait UnivariateCdf {
    /// `G(x)`, right-continuous at finite points.
    fn eval(&self, x: ExtendedReal) -> f64;

    /// `G(x-) = sup_{y < x} G(y)`.
    fn eval_left_limit(&self, x: ExtendedReal) -> f64;

    /// `inf { x : G(x) >= u }`; errors when `u` is outside `[0, 1]`.
    fn left_inverse(&self, u: f64) -> Result<ExtendedReal>;

    fn eval_f64(&self, x: f64) -> f64 {
        self.eval(ExtendedReal::from_non_nan(x))
    }
}

/// Discrete distribution function with finitely many atoms.
///
/// Tied sample points are merged into a single atom carrying the summed
/// weight. For a sample of size `n`, the cumulative weights are stored as
/// `count / n` so that evaluations on the lattice `{k / n}` are exact.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCdf {
    points: Vec<f64>,
    cumulative: Vec<f64>,
    sample_size: usize,
}

impl EmpiricalCdf {
    pub fn from_sample(sample: &[f64]) -> Result<Self> {
        if sample.is_empty() {
            return Err(Error::InvalidInput("empty sample".into()));
        }
        if let Some(x) = sample.iter().find(|x| !x.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite sample value {x}")));
        }
        let mut sorted = sample.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let mut points = Vec::with_capacity(n);
        let mut cumulative = Vec::with_capacity(n);
        let mut i = 0;
        while i < n {
            let x = sorted[i];
            let mut j = i + 1;
            while j < n && sorted[j] == x {
                j += 1;
            }
            points.push(x);
            cumulative.push(j as f64 / n as f64);
            i = j;
        }
        Ok(Self {
            points,
            cumulative,
            sample_size: n,
        })
    }

    /// Weighted atoms. Weights must be positive and sum to one (within 1e-9).
    pub fn from_weighted(points: &[f64], weights: &[f64]) -> Result<Self> {
        if points.len() != weights.len() {
            return Err(Error::DimensionMismatch {
                expected: points.len(),
                found: weights.len(),
            });
        }
        if points.is_empty() {
            return Err(Error::InvalidInput("empty sample".into()));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::InvalidInput("weights must be positive".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!("weights sum to {total}")));
        }
        let mut pairs: Vec<(f64, f64)> = points.iter().copied().zip(weights.iter().copied()).collect();
        if pairs.iter().any(|(x, _)| !x.is_finite()) {
            return Err(Error::InvalidInput("non-finite support point".into()));
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(pairs.len());
        for (x, w) in pairs {
            match merged.last_mut() {
                Some(last) if last.0 == x => last.1 += w,
                _ => merged.push((x, w)),
            }
        }
        let mut running = 0.0;
        let mut cumulative: Vec<f64> = merged
            .iter()
            .map(|(_, w)| {
                running += w;
                running
            })
            .collect();
        *cumulative.last_mut().unwrap() = 1.0;
        Ok(Self {
            points: merged.into_iter().map(|(x, _)| x).collect(),
            cumulative,
            sample_size: points.len(),
        })
    }

    /// Distinct support points in increasing order.
    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn cumulative(&self) -> &[f64] {
        &self.cumulative
    }

    pub fn sample_size(&self) -> usize {
        self.sample_size
    }
}

impl UnivariateCdf for EmpiricalCdf {
    fn eval(&self, x: ExtendedReal) -> f64 {
        match x {
            ExtendedReal::NegInf => 0.0,
            ExtendedReal::PosInf => 1.0,
            ExtendedReal::Finite(x) => {
                let idx = self.points.partition_point(|&p| p <= x);
                if idx == 0 {
                    0.0
                } else {
                    self.cumulative[idx - 1]
                }
            }
        }
    }

    fn eval_left_limit(&self, x: ExtendedReal) -> f64 {
        match x {
            ExtendedReal::NegInf => 0.0,
            ExtendedReal::PosInf => 1.0,
            ExtendedReal::Finite(x) => {
                let idx = self.points.partition_point(|&p| p < x);
                if idx == 0 {
                    0.0
                } else {
                    self.cumulative[idx - 1]
                }
            }
        }
    }

    fn left_inverse(&self, u: f64) -> Result<ExtendedReal> {
        check_probability(u, "u")?;
        if u == 0.0 {
            return Ok(ExtendedReal::NegInf);
        }
        // last cumulative weight is exactly 1, so the index is in range
        let idx = self.cumulative.partition_point(|&c| c < u);
        Ok(ExtendedReal::Finite(self.points[idx]))
    }
}

/// Uniform handle over the marginal distribution functions used by the
/// estimators: empirical, fitted parametric, or known.
#[derive(Debug, Clone, PartialEq)]
pub enum CdfHandle {
    Empirical(EmpiricalCdf),
    Parametric(MarginFamily),
    Known(MarginFamily),
}

impl CdfHandle {
    pub fn is_continuous(&self) -> bool {
        !matches!(self, CdfHandle::Empirical(_))
    }

    pub fn family(&self) -> Option<&MarginFamily> {
        match self {
            CdfHandle::Empirical(_) => None,
            CdfHandle::Parametric(f) | CdfHandle::Known(f) => Some(f),
        }
    }
}

impl UnivariateCdf for CdfHandle {
    fn eval(&self, x: ExtendedReal) -> f64 {
        match self {
            CdfHandle::Empirical(e) => e.eval(x),
            CdfHandle::Parametric(f) | CdfHandle::Known(f) => f.eval(x),
        }
    }

    fn eval_left_limit(&self, x: ExtendedReal) -> f64 {
        match self {
            CdfHandle::Empirical(e) => e.eval_left_limit(x),
            CdfHandle::Parametric(f) | CdfHandle::Known(f) => f.eval_left_limit(x),
        }
    }

    fn left_inverse(&self, u: f64) -> Result<ExtendedReal> {
        match self {
            CdfHandle::Empirical(e) => e.left_inverse(u),
            CdfHandle::Parametric(f) | CdfHandle::Known(f) => f.left_inverse(u),
        }
    }
}
