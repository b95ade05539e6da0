//! Closed-form copula families and parametric margin families.
//!
//! Copulas expose the distribution function, the first-order partial
//! derivatives (defined where the differentiated coordinate lies strictly
//! inside `(0, 1)`) and a conditional-inversion sampler. Margin families
//! expose their distribution and quantile functions, the gradient of the
//! distribution function in the parameter, and the influence function of
//! the maximum-likelihood estimator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::distfun::{normal, ExtendedReal, UnivariateCdf};
use crate::error::{check_probability, Error, Result};

/// Uniform draw on the open interval `(0, 1)`.
pub fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum CopulaModel {
    Independence { dim: usize },
    Clayton { theta: f64 },
    Fgm { theta: f64 },
}

impl CopulaModel {
    pub fn independence(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("copula dimension must be at least 1".into()));
        }
        Ok(Self::Independence { dim })
    }

    pub fn clayton(theta: f64) -> Result<Self> {
        if !(theta.is_finite() && theta > 0.0) {
            return Err(Error::InvalidInput(format!("clayton theta must be positive, got {theta}")));
        }
        Ok(Self::Clayton { theta })
    }

    pub fn fgm(theta: f64) -> Result<Self> {
        if !(-1.0..=1.0).contains(&theta) {
            return Err(Error::InvalidInput(format!("fgm theta must lie in [-1, 1], got {theta}")));
        }
        Ok(Self::Fgm { theta })
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Independence { dim } => *dim,
            Self::Clayton { .. } | Self::Fgm { .. } => 2,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Independence { .. } => "independence",
            Self::Clayton { .. } => "clayton",
            Self::Fgm { .. } => "fgm",
        }
    }

    fn check_point(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: u.len(),
            });
        }
        u.iter().try_for_each(|&x| check_probability(x, "copula argument"))
    }

    pub fn cdf(&self, u: &[f64]) -> Result<f64> {
        self.check_point(u)?;
        Ok(self.cdf_unchecked(u))
    }

    pub(crate) fn cdf_unchecked(&self, u: &[f64]) -> f64 {
        match *self {
            Self::Independence { .. } => u.iter().product(),
            Self::Clayton { theta } => {
                let (a, b) = (u[0], u[1]);
                if a == 0.0 || b == 0.0 {
                    0.0
                } else if a == 1.0 {
                    b
                } else if b == 1.0 {
                    a
                } else {
                    let s = a.powf(-theta) + b.powf(-theta) - 1.0;
                    s.powf(-1.0 / theta)
                }
            }
            Self::Fgm { theta } => {
                let (a, b) = (u[0], u[1]);
                a * b * (1.0 + theta * (1.0 - a) * (1.0 - b))
            }
        }
    }

    /// `dC/du_j` at `u`; requires `0 < u_j < 1`.
    pub fn partial(&self, j: usize, u: &[f64]) -> Result<f64> {
        self.check_point(u)?;
        if j >= self.dim() {
            return Err(Error::InvalidInput(format!("coordinate {j} out of range")));
        }
        if !(u[j] > 0.0 && u[j] < 1.0) {
            return Err(Error::Domain(format!(
                "partial derivative in coordinate {j} needs 0 < u_j < 1, got {}",
                u[j]
            )));
        }
        Ok(self.partial_unchecked(j, u))
    }

    pub(crate) fn partial_unchecked(&self, j: usize, u: &[f64]) -> f64 {
        match *self {
            Self::Independence { .. } => u
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != j)
                .map(|(_, &x)| x)
                .product(),
            Self::Clayton { theta } => {
                let (a, b) = if j == 0 { (u[0], u[1]) } else { (u[1], u[0]) };
                if b == 0.0 {
                    0.0
                } else if b == 1.0 {
                    1.0
                } else {
                    // u^{-t-1} (u^{-t} + v^{-t} - 1)^{-1/t-1} rewritten to stay
                    // finite as u -> 0
                    (1.0 + a.powf(theta) * (b.powf(-theta) - 1.0)).powf(-(1.0 + theta) / theta)
                }
            }
            Self::Fgm { theta } => {
                let (a, b) = if j == 0 { (u[0], u[1]) } else { (u[1], u[0]) };
                b * (1.0 + theta * (1.0 - 2.0 * a) * (1.0 - b))
            }
        }
    }

    /// Bivariate margin `C_{jk}(s, t)`: `s` at coordinate `j`, `t` at `k`,
    /// ones elsewhere.
    pub fn bivariate_margin(&self, j: usize, k: usize, s: f64, t: f64) -> Result<f64> {
        let mut u = vec![1.0; self.dim()];
        if j == k || j >= u.len() || k >= u.len() {
            return Err(Error::InvalidInput(format!("invalid coordinate pair ({j}, {k})")));
        }
        u[j] = s;
        u[k] = t;
        self.cdf(&u)
    }

    /// Solves `dC/du_1 (u, v) = w` for `v` (bivariate families only).
    fn conditional_inverse(&self, u: f64, w: f64) -> f64 {
        match *self {
            Self::Independence { .. } => w,
            Self::Clayton { theta } => {
                let inner = (w.powf(-theta / (1.0 + theta)) - 1.0) * u.powf(-theta) + 1.0;
                inner.powf(-1.0 / theta)
            }
            Self::Fgm { theta } => {
                // a v^2 - (1 + a) v + w = 0 with a = theta (1 - 2u); the root in
                // [0, 1] written in the cancellation-free form
                let a = theta * (1.0 - 2.0 * u);
                let b = 1.0 + a;
                2.0 * w / (b + (b * b - 4.0 * a * w).sqrt())
            }
        }
    }

    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            Self::Independence { dim } => (0..*dim).map(|_| open_unit(rng)).collect(),
            _ => {
                let u = open_unit(rng);
                let w = open_unit(rng);
                vec![u, self.conditional_inverse(u, w).clamp(0.0, 1.0)]
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<Vec<f64>> {
        (0..n).map(|_| self.sample_one(rng)).collect()
    }

    pub fn sample_seeded(&self, n: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample(n, &mut rng)
    }
}

/// Parametric families a margin can be fitted with by maximum likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParametricKind {
    Normal,
    Exponential,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum MarginFamily {
    Uniform01,
    Normal { mean: f64, sd: f64 },
    Exponential { rate: f64 },
}

impl MarginFamily {
    pub fn normal(mean: f64, sd: f64) -> Result<Self> {
        if !mean.is_finite() || !(sd.is_finite() && sd > 0.0) {
            return Err(Error::InvalidInput(format!("invalid normal parameters ({mean}, {sd})")));
        }
        Ok(Self::Normal { mean, sd })
    }

    pub fn exponential(rate: f64) -> Result<Self> {
        if !(rate.is_finite() && rate > 0.0) {
            return Err(Error::InvalidInput(format!("invalid exponential rate {rate}")));
        }
        Ok(Self::Exponential { rate })
    }

    pub fn kind(&self) -> Option<ParametricKind> {
        match self {
            Self::Uniform01 => None,
            Self::Normal { .. } => Some(ParametricKind::Normal),
            Self::Exponential { .. } => Some(ParametricKind::Exponential),
        }
    }

    /// Parameter vector: `(mean, sd)`, `(rate)`, or empty.
    pub fn params(&self) -> Vec<f64> {
        match *self {
            Self::Uniform01 => vec![],
            Self::Normal { mean, sd } => vec![mean, sd],
            Self::Exponential { rate } => vec![rate],
        }
    }

    pub fn param_dim(&self) -> usize {
        self.params().len()
    }

    pub fn with_params(&self, params: &[f64]) -> Result<Self> {
        if params.len() != self.param_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.param_dim(),
                found: params.len(),
            });
        }
        match self {
            Self::Uniform01 => Ok(Self::Uniform01),
            Self::Normal { .. } => Self::normal(params[0], params[1]),
            Self::Exponential { .. } => Self::exponential(params[0]),
        }
    }

    /// Maximum-likelihood fit. Normal uses the divisor `n` for the variance.
    pub fn fit_mle(kind: ParametricKind, sample: &[f64]) -> Result<Self> {
        match kind {
            ParametricKind::Normal => {
                if sample.len() < 2 {
                    return Err(Error::InvalidInput("normal fit needs at least two observations".into()));
                }
                let n = sample.len() as f64;
                let mean = sample.iter().sum::<f64>() / n;
                let var = sample.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
                if var <= 0.0 {
                    return Err(Error::Degenerate("zero sample variance".into()));
                }
                Self::normal(mean, var.sqrt())
            }
            ParametricKind::Exponential => {
                if sample.is_empty() {
                    return Err(Error::InvalidInput("exponential fit needs an observation".into()));
                }
                if let Some(x) = sample.iter().find(|&&x| x <= 0.0) {
                    return Err(Error::Domain(format!(
                        "exponential fit needs positive data, found {x}"
                    )));
                }
                let mean = sample.iter().sum::<f64>() / sample.len() as f64;
                Self::exponential(1.0 / mean)
            }
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            Self::Uniform01 => x.clamp(0.0, 1.0),
            Self::Normal { mean, sd } => normal::cdf((x - mean) / sd),
            Self::Exponential { rate } => {
                if x <= 0.0 {
                    0.0
                } else {
                    -(-rate * x).exp_m1()
                }
            }
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        match *self {
            Self::Uniform01 => {
                if (0.0..=1.0).contains(&x) {
                    1.0
                } else {
                    0.0
                }
            }
            Self::Normal { mean, sd } => normal::pdf((x - mean) / sd) / sd,
            Self::Exponential { rate } => {
                if x < 0.0 {
                    0.0
                } else {
                    rate * (-rate * x).exp()
                }
            }
        }
    }

    /// `inf { x : F(x) >= u }` as an `f64`; `-inf` at `u = 0`.
    pub fn quantile(&self, u: f64) -> f64 {
        if u <= 0.0 {
            return f64::NEG_INFINITY;
        }
        match *self {
            Self::Uniform01 => u.min(1.0),
            Self::Normal { mean, sd } => mean + sd * normal::quantile(u),
            Self::Exponential { rate } => {
                if u >= 1.0 {
                    f64::INFINITY
                } else {
                    -(-u).ln_1p() / rate
                }
            }
        }
    }

    /// Gradient of `F(x; theta)` with respect to the parameter vector.
    pub fn grad(&self, x: f64) -> Vec<f64> {
        match *self {
            Self::Uniform01 => vec![],
            Self::Normal { mean, sd } => {
                if x.is_infinite() {
                    return vec![0.0, 0.0];
                }
                let z = (x - mean) / sd;
                let phi = normal::pdf(z);
                vec![-phi / sd, -z * phi / sd]
            }
            Self::Exponential { rate } => {
                if x <= 0.0 || x.is_infinite() {
                    vec![0.0]
                } else {
                    vec![x * (-rate * x).exp()]
                }
            }
        }
    }

    /// Influence function of the maximum-likelihood estimator.
    pub fn influence(&self, x: f64) -> Vec<f64> {
        match *self {
            Self::Uniform01 => vec![],
            Self::Normal { mean, sd } => {
                let d = x - mean;
                vec![d, (d * d - sd * sd) / (2.0 * sd)]
            }
            Self::Exponential { rate } => vec![rate - rate * rate * x],
        }
    }

    /// Derivative of the influence function in `x`.
    pub fn influence_derivative(&self, x: f64) -> Vec<f64> {
        match *self {
            Self::Uniform01 => vec![],
            Self::Normal { mean, sd } => vec![1.0, (x - mean) / sd],
            Self::Exponential { rate } => vec![-rate * rate],
        }
    }

    /// `E[psi psi^T]` under the family itself.
    pub fn influence_second_moment(&self) -> Vec<Vec<f64>> {
        match *self {
            Self::Uniform01 => vec![],
            Self::Normal { sd, .. } => {
                let v = sd * sd;
                vec![vec![v, 0.0], vec![0.0, v / 2.0]]
            }
            Self::Exponential { rate } => vec![vec![rate * rate]],
        }
    }

    /// Interval carrying all but a negligible amount of mass, used as the
    /// integration range by the kernel quadratures.
    pub(crate) fn effective_support(&self) -> (f64, f64) {
        match *self {
            Self::Uniform01 => (0.0, 1.0),
            Self::Normal { mean, sd } => (mean - 12.0 * sd, mean + 12.0 * sd),
            Self::Exponential { rate } => (0.0, 40.0 / rate),
        }
    }
}

impl UnivariateCdf for MarginFamily {
    fn eval(&self, x: ExtendedReal) -> f64 {
        match x {
            ExtendedReal::NegInf => 0.0,
            ExtendedReal::PosInf => 1.0,
            ExtendedReal::Finite(x) => self.cdf(x),
        }
    }

    fn eval_left_limit(&self, x: ExtendedReal) -> f64 {
        self.eval(x)
    }

    fn left_inverse(&self, u: f64) -> Result<ExtendedReal> {
        check_probability(u, "u")?;
        Ok(ExtendedReal::from_non_nan(self.quantile(u)))
    }
}
