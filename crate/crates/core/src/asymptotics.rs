//! Covariance kernels of the limit processes.
//!
//! Under each estimation scheme the joint estimator behaves like
//! `alpha o F` and the `j`-th marginal estimator like `beta_j o F_j`, where
//! `(alpha, beta_1, ..., beta_p)` is a centered Gaussian process. The limit of
//! the hybrid copula process at `u` is
//!
//! ```text
//! alpha(u) - sum_j dC/du_j(u) beta_j(u_j)
//! ```
//!
//! and its variance is assembled from the kernels below by bilinearity.
//!
//! Every kernel is `Cov(f(Z), g(Z))` for the influence functions of the two
//! estimators involved. With observation probabilities `p_j` (column `j`),
//! `p_jk` (columns `j` and `k`) and `p_J` (complete row), the influence
//! functions are
//!
//! * complete-case joint: `p_J^{-1} I_J (1{X <= x(u)} - C(u))`,
//! * empirical / available-case margin: `p_j^{-1} I_j (1{X_j <= x_j(s)} - s)`,
//! * parametric margin: `p_j^{-1} I_j psi_j(X_j)^T Fdot_j(x_j(s))`,
//! * known margin: `0`,
//!
//! and the indicators are independent of the values. The fully observed
//! case is `p_j = p_jk = p_J = 1`.
//!
//! Cross moments involving a parametric margin have no closed form in
//! general. They are computed by composite Gauss-Legendre quadrature over
//! the conditional representation
//! `E[1{X <= x(u)} psi_j(X_j)] = int_{y <= x_j} psi_j(y) dC/du_j(F_j(y), u_-j) f_j(y) dy`,
//! and, for two parametric margins, over Hoeffding's covariance identity.
//! A seeded Monte Carlo estimate with its standard error is available as a
//! cross-check through [`LimitCovariance::cov_alpha_beta_mc`].

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::copulas::{CopulaModel, MarginFamily};
use crate::error::{check_probability, Error, Result};
use crate::estimators::{JointScheme, MarginScheme};
use crate::quad;

const PANELS: usize = 48;
const PANELS_2D: usize = 24;

/// Marginal and joint observation probabilities of a bivariate MCAR mask.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservationProbabilities {
    pub px: f64,
    pub py: f64,
    pub pxy: f64,
}

impl ObservationProbabilities {
    pub const FULL: Self = Self {
        px: 1.0,
        py: 1.0,
        pxy: 1.0,
    };

    /// Validates `0 < p_X, p_Y <= 1`, `p_XY > 0` and the Frechet bounds
    /// `max(0, p_X + p_Y - 1) <= p_XY <= min(p_X, p_Y)`.
    pub fn new(px: f64, py: f64, pxy: f64) -> Result<Self> {
        let ok = |p: f64| p > 0.0 && p <= 1.0;
        if !(ok(px) && ok(py) && ok(pxy)) {
            return Err(Error::InvalidInput(format!(
                "observation probabilities must lie in (0, 1], got ({px}, {py}, {pxy})"
            )));
        }
        let tol = 1e-12;
        if pxy > px.min(py) + tol || pxy < (px + py - 1.0).max(0.0) - tol {
            return Err(Error::InvalidInput(format!(
                "p_xy = {pxy} violates the Frechet bounds for p_x = {px}, p_y = {py}"
            )));
        }
        Ok(Self { px, py, pxy })
    }

    pub fn is_full(&self) -> bool {
        self.px == 1.0 && self.py == 1.0 && self.pxy == 1.0
    }

    /// Probabilities of the four cells (both, x only, y only, neither).
    pub fn cell_probabilities(&self) -> [f64; 4] {
        [
            self.pxy,
            self.px - self.pxy,
            self.py - self.pxy,
            (1.0 - self.px - self.py + self.pxy).max(0.0),
        ]
    }
}

/// Estimation scheme together with the data-generating truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeSpec {
    pub copula: CopulaModel,
    pub true_margins: Vec<MarginFamily>,
    pub joint: JointScheme,
    pub margins: Vec<MarginScheme>,
    pub observation: ObservationProbabilities,
}

impl SchemeSpec {
    pub fn new(
        copula: CopulaModel,
        true_margins: Vec<MarginFamily>,
        joint: JointScheme,
        margins: Vec<MarginScheme>,
        observation: ObservationProbabilities,
    ) -> Result<Self> {
        let p = copula.dim();
        for len in [true_margins.len(), margins.len()] {
            if len != p {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    found: len,
                });
            }
        }
        let observation = ObservationProbabilities::new(observation.px, observation.py, observation.pxy)?;
        if !observation.is_full() && p != 2 {
            return Err(Error::InvalidInput(
                "missing-data observation probabilities are only supported for p = 2".into(),
            ));
        }
        if joint == JointScheme::Empirical && !observation.is_full() {
            return Err(Error::InvalidInput(
                "the empirical joint estimator needs fully observed data; use complete-case".into(),
            ));
        }
        let spec = Self {
            copula,
            true_margins,
            joint,
            margins,
            observation,
        };
        for (j, m) in spec.margins.iter().enumerate() {
            let truth = spec.true_margins[j];
            match *m {
                MarginScheme::Empirical if spec.column_probability(j) < 1.0 => {
                    return Err(Error::InvalidInput(format!(
                        "margin {} is partially observed; use available-case",
                        j + 1
                    )))
                }
                MarginScheme::Known(f) if f != truth => {
                    return Err(Error::InvalidInput(format!(
                        "known margin {} differs from the true margin",
                        j + 1
                    )))
                }
                MarginScheme::Parametric(kind) if truth.kind() != Some(kind) => {
                    return Err(Error::InvalidInput(format!(
                        "parametric margin {} must match the family of the true margin",
                        j + 1
                    )))
                }
                _ => {}
            }
        }
        Ok(spec)
    }

    /// Empirical joint and empirical margins on uniform data.
    pub fn empirical(copula: CopulaModel) -> Self {
        let p = copula.dim();
        Self::new(
            copula,
            vec![MarginFamily::Uniform01; p],
            JointScheme::Empirical,
            vec![MarginScheme::Empirical; p],
            ObservationProbabilities::FULL,
        )
        .expect("empirical scheme is always valid")
    }

    /// Empirical joint and known uniform margins.
    pub fn known_margins(copula: CopulaModel) -> Self {
        let p = copula.dim();
        Self::new(
            copula,
            vec![MarginFamily::Uniform01; p],
            JointScheme::Empirical,
            vec![MarginScheme::Known(MarginFamily::Uniform01); p],
            ObservationProbabilities::FULL,
        )
        .expect("known-margin scheme is always valid")
    }

    /// Complete-case joint and available-case margins on uniform data.
    pub fn missing_data(copula: CopulaModel, observation: ObservationProbabilities) -> Result<Self> {
        let p = copula.dim();
        Self::new(
            copula,
            vec![MarginFamily::Uniform01; p],
            JointScheme::CompleteCase,
            vec![MarginScheme::AvailableCase; p],
            observation,
        )
    }

    /// Empirical joint and maximum-likelihood plug-in margins.
    pub fn parametric(copula: CopulaModel, true_margins: Vec<MarginFamily>) -> Result<Self> {
        let margins = true_margins
            .iter()
            .map(|f| {
                f.kind()
                    .map(MarginScheme::Parametric)
                    .ok_or_else(|| Error::InvalidInput("uniform margins have no parameters to fit".into()))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(
            copula,
            true_margins,
            JointScheme::Empirical,
            margins,
            ObservationProbabilities::FULL,
        )
    }

    pub fn dim(&self) -> usize {
        self.copula.dim()
    }

    fn joint_probability(&self) -> f64 {
        if self.dim() == 2 {
            self.observation.pxy
        } else {
            1.0
        }
    }

    pub(crate) fn column_probability(&self, j: usize) -> f64 {
        match (self.dim(), j) {
            (2, 0) => self.observation.px,
            (2, 1) => self.observation.py,
            _ => 1.0,
        }
    }

    fn pair_probability(&self) -> f64 {
        self.joint_probability()
    }
}

/// A kernel value estimated by Monte Carlo.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelValue {
    pub value: f64,
    pub std_error: f64,
}

type Matrix = Vec<Vec<f64>>;
type Weight = Box<dyn Fn(&[f64]) -> f64>;

enum MarginRole {
    Indicator,
    Parametric(MarginFamily),
    Known,
}

/// Covariance kernels of `(alpha, beta_1, ..., beta_p)` for one scheme.
#[derive(Debug, Clone)]
pub struct LimitCovariance {
    scheme: SchemeSpec,
    // E[psi_j(X_j) psi_k(X_k)^T] for pairs of parametric margins, j < k
    psi_cross: Vec<((usize, usize), Matrix)>,
}

impl LimitCovariance {
    pub fn new(scheme: SchemeSpec) -> Self {
        let mut out = Self {
            scheme,
            psi_cross: Vec::new(),
        };
        let p = out.scheme.dim();
        for j in 0..p {
            for k in j + 1..p {
                if let (MarginRole::Parametric(fj), MarginRole::Parametric(fk)) = (out.role(j), out.role(k)) {
                    let m = out.psi_cross_moment(j, k, &fj, &fk);
                    out.psi_cross.push(((j, k), m));
                }
            }
        }
        out
    }

    pub fn scheme(&self) -> &SchemeSpec {
        &self.scheme
    }

    fn role(&self, j: usize) -> MarginRole {
        match self.scheme.margins[j] {
            MarginScheme::Empirical | MarginScheme::AvailableCase => MarginRole::Indicator,
            MarginScheme::Parametric(_) => MarginRole::Parametric(self.scheme.true_margins[j]),
            MarginScheme::Known(_) => MarginRole::Known,
        }
    }

    fn check_point(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.scheme.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.scheme.dim(),
                found: u.len(),
            });
        }
        u.iter().try_for_each(|&x| check_probability(x, "u"))
    }

    fn check_index(&self, j: usize) -> Result<()> {
        if j < self.scheme.dim() {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("margin index {j} out of range")))
        }
    }

    /// `Cov(alpha(u), alpha(v)) = p_J^{-1} {C(u ^ v) - C(u) C(v)}`.
    pub fn cov_alpha(&self, u: &[f64], v: &[f64]) -> Result<f64> {
        self.check_point(u)?;
        self.check_point(v)?;
        let c = &self.scheme.copula;
        let meet: Vec<f64> = u.iter().zip(v).map(|(a, b)| a.min(*b)).collect();
        let value = c.cdf_unchecked(&meet) - c.cdf_unchecked(u) * c.cdf_unchecked(v);
        Ok(value / self.scheme.joint_probability())
    }

    /// `Cov(beta_j(s), beta_j(t))`.
    pub fn cov_beta(&self, j: usize, s: f64, t: f64) -> Result<f64> {
        self.check_index(j)?;
        check_probability(s, "s")?;
        check_probability(t, "t")?;
        let pj = self.scheme.column_probability(j);
        Ok(match self.role(j) {
            MarginRole::Indicator => (s.min(t) - s * t) / pj,
            MarginRole::Known => 0.0,
            MarginRole::Parametric(f) => {
                let gs = f.grad(f.quantile(s));
                let gt = f.grad(f.quantile(t));
                quadratic_form(&gs, &f.influence_second_moment(), &gt) / pj
            }
        })
    }

    /// `Cov(beta_j(s), beta_k(t))`; falls back to [`Self::cov_beta`] when
    /// `j == k`.
    pub fn cov_beta_beta(&self, j: usize, k: usize, s: f64, t: f64) -> Result<f64> {
        if j == k {
            return self.cov_beta(j, s, t);
        }
        if j > k {
            return self.cov_beta_beta(k, j, t, s);
        }
        self.check_index(k)?;
        check_probability(s, "s")?;
        check_probability(t, "t")?;
        let scale = self.scheme.pair_probability()
            / (self.scheme.column_probability(j) * self.scheme.column_probability(k));
        let value = match (self.role(j), self.role(k)) {
            (MarginRole::Known, _) | (_, MarginRole::Known) => 0.0,
            (MarginRole::Indicator, MarginRole::Indicator) => {
                self.scheme.copula.bivariate_margin(j, k, s, t)? - s * t
            }
            (MarginRole::Indicator, MarginRole::Parametric(fk)) => {
                let m = self.indicator_psi_moment(k, &fk, &self.unit_with(j, s));
                dot(&m, &fk.grad(fk.quantile(t)))
            }
            (MarginRole::Parametric(fj), MarginRole::Indicator) => {
                let m = self.indicator_psi_moment(j, &fj, &self.unit_with(k, t));
                dot(&m, &fj.grad(fj.quantile(s)))
            }
            (MarginRole::Parametric(fj), MarginRole::Parametric(fk)) => {
                let m = &self
                    .psi_cross
                    .iter()
                    .find(|(key, _)| *key == (j, k))
                    .expect("cross moments are precomputed for parametric pairs")
                    .1;
                quadratic_form(&fj.grad(fj.quantile(s)), m, &fk.grad(fk.quantile(t)))
            }
        };
        Ok(scale * value)
    }

    /// `Cov(alpha(u), beta_j(s))`.
    pub fn cov_alpha_beta(&self, j: usize, u: &[f64], s: f64) -> Result<f64> {
        self.check_index(j)?;
        self.check_point(u)?;
        check_probability(s, "s")?;
        let pj = self.scheme.column_probability(j);
        let c = &self.scheme.copula;
        Ok(match self.role(j) {
            MarginRole::Known => 0.0,
            MarginRole::Indicator => {
                let mut w = u.to_vec();
                w[j] = w[j].min(s);
                (c.cdf_unchecked(&w) - c.cdf_unchecked(u) * s) / pj
            }
            MarginRole::Parametric(f) => {
                let m = self.indicator_psi_moment(j, &f, u);
                dot(&m, &f.grad(f.quantile(s))) / pj
            }
        })
    }

    /// Seeded Monte Carlo estimate of [`Self::cov_alpha_beta`] with its
    /// standard error, from `draws` samples of the truth.
    pub fn cov_alpha_beta_mc(&self, j: usize, u: &[f64], s: f64, draws: usize, seed: u64) -> Result<KernelValue> {
        self.check_index(j)?;
        self.check_point(u)?;
        check_probability(s, "s")?;
        if draws < 2 {
            return Err(Error::InvalidInput("need at least two draws".into()));
        }
        let pj = self.scheme.column_probability(j);
        let c = &self.scheme.copula;
        let cu = c.cdf_unchecked(u);
        let margins = &self.scheme.true_margins;
        let thresholds: Vec<f64> = margins.iter().zip(u).map(|(f, &x)| f.quantile(x)).collect();
        let weight: Weight = match self.role(j) {
            MarginRole::Known => return Ok(KernelValue { value: 0.0, std_error: 0.0 }),
            MarginRole::Indicator => {
                let xs = margins[j].quantile(s);
                Box::new(move |x: &[f64]| if x[j] <= xs { 1.0 - s } else { -s })
            }
            MarginRole::Parametric(f) => {
                let g = f.grad(f.quantile(s));
                Box::new(move |x: &[f64]| dot(&f.influence(x[j]), &g))
            }
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..draws {
            let v = c.sample_one(&mut rng);
            let x: Vec<f64> = margins.iter().zip(&v).map(|(f, &w)| f.quantile(w)).collect();
            let inside = x.iter().zip(&thresholds).all(|(a, b)| a <= b);
            let term = (f64::from(u8::from(inside)) - cu) * weight(&x);
            sum += term;
            sum_sq += term * term;
        }
        let n = draws as f64;
        let mean = sum / n;
        let var = (sum_sq - n * mean * mean) / (n - 1.0);
        Ok(KernelValue {
            value: mean / pj,
            std_error: (var / n).sqrt() / pj,
        })
    }

    /// Variance of `alpha(u) - sum_j dC/du_j(u) beta_j(u_j)` at an interior
    /// point.
    pub fn limit_variance(&self, u: &[f64]) -> Result<f64> {
        self.limit_covariance(u, u)
    }

    /// Covariance of the limit process at two interior points.
    pub fn limit_covariance(&self, u: &[f64], v: &[f64]) -> Result<f64> {
        self.check_point(u)?;
        self.check_point(v)?;
        if u.iter().chain(v).any(|&x| x <= 0.0 || x >= 1.0) {
            return Err(Error::Domain(format!(
                "the limit covariance needs interior points, got {u:?} and {v:?}"
            )));
        }
        let p = u.len();
        let c = &self.scheme.copula;
        let wu: Vec<f64> = (0..p).map(|j| c.partial_unchecked(j, u)).collect();
        let wv: Vec<f64> = (0..p).map(|j| c.partial_unchecked(j, v)).collect();
        let mut cov = self.cov_alpha(u, v)?;
        for j in 0..p {
            cov -= wv[j] * self.cov_alpha_beta(j, u, v[j])?;
            cov -= wu[j] * self.cov_alpha_beta(j, v, u[j])?;
            for k in 0..p {
                cov += wu[j] * wv[k] * self.cov_beta_beta(j, k, u[j], v[k])?;
            }
        }
        Ok(cov)
    }

    /// Covariance matrix of `(alpha(u_1), ..., alpha(u_m), beta_{j_1}(s_1), ...)`.
    pub fn gram(&self, alpha_points: &[Vec<f64>], beta_points: &[(usize, f64)]) -> Result<Vec<Vec<f64>>> {
        let m = alpha_points.len();
        let size = m + beta_points.len();
        let mut g = vec![vec![0.0; size]; size];
        for a in 0..size {
            for b in a..size {
                let v = match (a < m, b < m) {
                    (true, true) => self.cov_alpha(&alpha_points[a], &alpha_points[b])?,
                    (true, false) => {
                        let (j, s) = beta_points[b - m];
                        self.cov_alpha_beta(j, &alpha_points[a], s)?
                    }
                    (false, true) => unreachable!("b >= a"),
                    (false, false) => {
                        let (j, s) = beta_points[a - m];
                        let (k, t) = beta_points[b - m];
                        self.cov_beta_beta(j, k, s, t)?
                    }
                };
                g[a][b] = v;
                g[b][a] = v;
            }
        }
        Ok(g)
    }

    fn unit_with(&self, j: usize, s: f64) -> Vec<f64> {
        let mut u = vec![1.0; self.scheme.dim()];
        u[j] = s;
        u
    }

    /// `E[1{X <= x(u)} psi_j(X_j)]` by quadrature over the conditional law
    /// of the other coordinates given `X_j`.
    fn indicator_psi_moment(&self, j: usize, family: &MarginFamily, u: &[f64]) -> Vec<f64> {
        let d = family.param_dim();
        if u.contains(&0.0) {
            return vec![0.0; d];
        }
        let (lo, hi) = family.effective_support();
        let upper = family.quantile(u[j]).min(hi);
        let copula = &self.scheme.copula;
        let mut point = u.to_vec();
        let mut acc = vec![0.0; d];
        for (y, w) in quad::composite_nodes(lo, upper, PANELS) {
            point[j] = family.cdf(y);
            if point[j] <= 0.0 || point[j] >= 1.0 {
                continue;
            }
            let weight = w * copula.partial_unchecked(j, &point) * family.pdf(y);
            for (a, psi) in acc.iter_mut().zip(family.influence(y)) {
                *a += weight * psi;
            }
        }
        acc
    }

    /// `E[psi_j(X_j) psi_k(X_k)^T]` via Hoeffding's identity
    /// `Cov(g(X), h(Y)) = int int g'(x) h'(y) {H(x, y) - F(x) G(y)} dx dy`.
    fn psi_cross_moment(&self, j: usize, k: usize, fj: &MarginFamily, fk: &MarginFamily) -> Vec<Vec<f64>> {
        let (aj, bj) = fj.effective_support();
        let (ak, bk) = fk.effective_support();
        let xs = quad::composite_nodes(aj, bj, PANELS_2D);
        let ys = quad::composite_nodes(ak, bk, PANELS_2D);
        let (dj, dk) = (fj.param_dim(), fk.param_dim());
        let mut out = vec![vec![0.0; dk]; dj];
        let copula = &self.scheme.copula;
        let y_info: Vec<(f64, f64, Vec<f64>)> = ys
            .iter()
            .map(|&(y, w)| (w, fk.cdf(y), fk.influence_derivative(y)))
            .collect();
        for &(x, wx) in &xs {
            let fx = fj.cdf(x);
            let gx = fj.influence_derivative(x);
            for (wy, fy, gy) in &y_info {
                let h = copula.bivariate_margin(j, k, fx, *fy).unwrap_or(0.0) - fx * fy;
                let w = wx * wy * h;
                for a in 0..dj {
                    for b in 0..dk {
                        out[a][b] += w * gx[a] * gy[b];
                    }
                }
            }
        }
        out
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn quadratic_form(a: &[f64], m: &[Vec<f64>], b: &[f64]) -> f64 {
    a.iter()
        .zip(m)
        .map(|(ai, row)| ai * dot(row, b))
        .sum()
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(matrix: &[Vec<f64>]) -> f64 {
    let n = matrix.len();
    if n == 0 {
        return 0.0;
    }
    let m = DMatrix::from_fn(n, n, |i, j| matrix[i][j]);
    SymmetricEigen::new(m)
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::copulas::ParametricKind;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn independence() -> CopulaModel {
        CopulaModel::independence(2).unwrap()
    }

    fn missing(copula: CopulaModel) -> LimitCovariance {
        let obs = ObservationProbabilities::new(0.8, 0.8, 0.64).unwrap();
        LimitCovariance::new(SchemeSpec::missing_data(copula, obs).unwrap())
    }

    fn std_normal_scheme(copula: CopulaModel) -> LimitCovariance {
        let n = MarginFamily::normal(0.0, 1.0).unwrap();
        LimitCovariance::new(SchemeSpec::parametric(copula, vec![n, n]).unwrap())
    }

    #[test]
    fn cov_alpha_examples() {
        let emp = LimitCovariance::new(SchemeSpec::empirical(independence()));
        assert_eq!(emp.cov_alpha(&[0.5, 0.5], &[0.5, 0.5]).unwrap(), 0.1875);
        // substitution into p_XY^{-1} {C(u ^ v) - C(u) C(v)} with p_XY = 0.64
        let m = missing(independence());
        assert_eq!(m.cov_alpha(&[0.5, 0.5], &[0.5, 0.5]).unwrap(), 0.1875 / 0.64);
        assert_eq!(0.1875 / 0.64, 0.29296875);
        assert_eq!(emp.cov_alpha(&[0.0, 0.5], &[0.3, 0.9]).unwrap(), 0.0);
        assert_eq!(m.cov_alpha(&[0.4, 0.0], &[0.5, 0.5]).unwrap(), 0.0);
    }

    #[test]
    fn cov_beta_examples() {
        let m = missing(independence());
        assert!((m.cov_beta(0, 0.5, 0.5).unwrap() - 0.3125).abs() < 1e-15);
        let known = LimitCovariance::new(SchemeSpec::known_margins(independence()));
        assert_eq!(known.cov_beta(0, 0.3, 0.6).unwrap(), 0.0);
        let par = std_normal_scheme(independence());
        assert!((par.cov_beta(0, 0.5, 0.5).unwrap() - 1.0 / (2.0 * PI)).abs() < 1e-15);
        for lim in [&m, &known, &par] {
            for &b in &[0.0, 1.0] {
                assert_eq!(lim.cov_beta(1, b, 0.4).unwrap(), 0.0);
                assert_eq!(lim.cov_beta(1, 0.4, b).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn cov_beta_beta_examples() {
        let emp = LimitCovariance::new(SchemeSpec::empirical(independence()));
        assert_eq!(emp.cov_beta_beta(0, 1, 0.3, 0.8).unwrap(), 0.0);
        let m = missing(CopulaModel::clayton(1.0).unwrap());
        assert!((m.cov_beta_beta(0, 1, 0.5, 0.5).unwrap() - 1.0 / 12.0).abs() < 1e-15);
        let c = CopulaModel::clayton(1.0).unwrap();
        let mixed = LimitCovariance::new(
            SchemeSpec::new(
                c,
                vec![MarginFamily::Uniform01; 2],
                JointScheme::Empirical,
                vec![MarginScheme::Empirical, MarginScheme::Known(MarginFamily::Uniform01)],
                ObservationProbabilities::FULL,
            )
            .unwrap(),
        );
        assert_eq!(mixed.cov_beta_beta(0, 1, 0.5, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn cov_alpha_beta_examples() {
        let emp = LimitCovariance::new(SchemeSpec::empirical(independence()));
        assert_eq!(emp.cov_alpha_beta(0, &[0.5, 0.5], 0.5).unwrap(), 0.125);
        let known = LimitCovariance::new(SchemeSpec::known_margins(independence()));
        assert_eq!(known.cov_alpha_beta(0, &[0.5, 0.5], 0.5).unwrap(), 0.0);
        assert_eq!(emp.cov_alpha_beta(0, &[0.0, 0.5], 0.5).unwrap(), 0.0);
        let par = std_normal_scheme(CopulaModel::clayton(2.0).unwrap());
        assert_eq!(par.cov_alpha_beta(0, &[0.0, 0.5], 0.5).unwrap(), 0.0);
    }

    #[test]
    fn limit_variance_examples() {
        let known = LimitCovariance::new(SchemeSpec::known_margins(independence()));
        assert_eq!(known.limit_variance(&[0.5, 0.5]).unwrap(), 0.1875);
        let emp = LimitCovariance::new(SchemeSpec::empirical(independence()));
        // 0.1875 + 0.0625 + 0.0625 - 0.125 - 0.125
        assert!((emp.limit_variance(&[0.5, 0.5]).unwrap() - 0.0625).abs() < 1e-15);
        assert!(emp.limit_variance(&[0.5, 0.5]).unwrap() < known.limit_variance(&[0.5, 0.5]).unwrap());
        assert!(matches!(emp.limit_variance(&[0.0, 0.5]), Err(Error::Domain(_))));
        assert!(matches!(emp.limit_variance(&[0.5, 1.0]), Err(Error::Domain(_))));
        // 0.29296875 - 2 * 2 * 0.5 * 0.15625 + 2 * 0.25 * 0.3125
        let m = missing(independence());
        assert!((m.limit_variance(&[0.5, 0.5]).unwrap() - 0.13671875).abs() < 1e-15);
    }

    #[test]
    fn known_margins_reduce_to_alpha() {
        for c in [independence(), CopulaModel::clayton(1.5).unwrap(), CopulaModel::fgm(-0.4).unwrap()] {
            let k = LimitCovariance::new(SchemeSpec::known_margins(c));
            for &u in &[[0.2, 0.7], [0.5, 0.5], [0.9, 0.1]] {
                assert_eq!(k.limit_variance(&u).unwrap(), k.cov_alpha(&u, &u).unwrap());
            }
        }
    }

    #[test]
    fn full_observation_matches_empirical_kernels() {
        let c = CopulaModel::clayton(1.0).unwrap();
        let emp = LimitCovariance::new(SchemeSpec::empirical(c));
        let m = LimitCovariance::new(SchemeSpec::missing_data(c, ObservationProbabilities::FULL).unwrap());
        for &u in &[[0.2, 0.7], [0.5, 0.5], [0.9, 0.1]] {
            assert_eq!(emp.cov_alpha(&u, &[0.4, 0.6]).unwrap(), m.cov_alpha(&u, &[0.4, 0.6]).unwrap());
            assert_eq!(emp.cov_beta(0, u[0], u[1]).unwrap(), m.cov_beta(0, u[0], u[1]).unwrap());
            assert_eq!(emp.cov_beta_beta(0, 1, u[0], u[1]).unwrap(), m.cov_beta_beta(0, 1, u[0], u[1]).unwrap());
            assert_eq!(emp.cov_alpha_beta(1, &u, 0.3).unwrap(), m.cov_alpha_beta(1, &u, 0.3).unwrap());
            assert_eq!(emp.limit_variance(&u).unwrap(), m.limit_variance(&u).unwrap());
        }
    }

    #[test]
    fn empirical_margins_are_alpha_on_the_edges() {
        // beta_j(s) = alpha(1, ..., s, ..., 1) when no hybridisation occurs
        let c = CopulaModel::fgm(0.8).unwrap();
        let emp = LimitCovariance::new(SchemeSpec::empirical(c));
        for &(s, t) in &[(0.2, 0.6), (0.5, 0.5), (0.9, 0.35)] {
            assert!((emp.cov_beta(0, s, t).unwrap() - emp.cov_alpha(&[s, 1.0], &[t, 1.0]).unwrap()).abs() < 1e-15);
            assert!((emp.cov_beta_beta(0, 1, s, t).unwrap() - emp.cov_alpha(&[s, 1.0], &[1.0, t]).unwrap()).abs() < 1e-15);
            let u = [0.3, 0.7];
            assert!((emp.cov_alpha_beta(1, &u, s).unwrap() - emp.cov_alpha(&u, &[1.0, s]).unwrap()).abs() < 1e-15);
        }
    }

    #[test]
    fn parametric_cross_moment_closed_form_under_independence() {
        // E[1{Z1 <= 0, Z2 <= 0} Z1] = 0.5 * E[1{Z <= 0} Z] = -0.5 phi(0); the sd
        // component vanishes at the median, so the cross term is 0.5 phi(0)^2
        let par = std_normal_scheme(independence());
        let phi0 = 1.0 / (2.0 * PI).sqrt();
        let v = par.cov_alpha_beta(0, &[0.5, 0.5], 0.5).unwrap();
        assert!((v - 0.5 * phi0 * phi0).abs() < 1e-12, "{v}");
        // two independent parametric margins do not co-vary
        assert!(par.cov_beta_beta(0, 1, 0.3, 0.6).unwrap().abs() < 1e-12);
    }

    #[test]
    fn quadrature_agrees_with_monte_carlo() {
        let schemes = [
            std_normal_scheme(CopulaModel::clayton(1.0).unwrap()),
            LimitCovariance::new(
                SchemeSpec::parametric(
                    CopulaModel::fgm(0.5).unwrap(),
                    vec![MarginFamily::exponential(2.0).unwrap(), MarginFamily::normal(1.0, 0.5).unwrap()],
                )
                .unwrap(),
            ),
        ];
        for (i, lim) in schemes.iter().enumerate() {
            for &(j, u, s) in &[(0usize, [0.5, 0.5], 0.5), (1, [0.3, 0.8], 0.2), (0, [0.9, 0.4], 0.7)] {
                let q = lim.cov_alpha_beta(j, &u, s).unwrap();
                let mc = lim.cov_alpha_beta_mc(j, &u, s, 400_000, 77 + i as u64).unwrap();
                assert!(
                    (q - mc.value).abs() < 4.0 * mc.std_error,
                    "scheme {i} j={j} u={u:?}: quadrature {q}, mc {} +- {}",
                    mc.value,
                    mc.std_error
                );
            }
        }
    }

    #[test]
    fn psi_cross_moment_matches_fgm_closed_form() {
        // the FGM density 1 + theta (1 - 2u)(1 - 2v) factorises the moment:
        // E[psi_mu(X) psi_mu(Y)] = theta (E[Z (1 - 2 Phi(Z))])^2 = theta / pi
        let theta = 0.5;
        let lim = std_normal_scheme(CopulaModel::fgm(theta).unwrap());
        let m = &lim.psi_cross[0].1;
        assert!((m[0][0] - theta / PI).abs() < 1e-10, "{}", m[0][0]);
        // E[(Z^2 - 1)/2 (1 - 2 Phi(Z))] = 0 by symmetry
        assert!(m[1][1].abs() < 1e-10 && m[0][1].abs() < 1e-10 && m[1][0].abs() < 1e-10);
    }

    #[test]
    fn scheme_validation() {
        let c = independence();
        assert!(ObservationProbabilities::new(0.8, 0.8, 0.9).is_err());
        assert!(ObservationProbabilities::new(0.5, 0.5, 0.0).is_err());
        assert!(ObservationProbabilities::new(0.6, 0.6, 0.1).is_err());
        assert!(ObservationProbabilities::new(1.2, 0.5, 0.5).is_err());
        let obs = ObservationProbabilities::new(0.8, 0.9, 0.7).unwrap();
        assert!(SchemeSpec::new(
            c,
            vec![MarginFamily::Uniform01; 2],
            JointScheme::Empirical,
            vec![MarginScheme::AvailableCase; 2],
            obs
        )
        .is_err());
        assert!(SchemeSpec::new(
            c,
            vec![MarginFamily::Uniform01; 2],
            JointScheme::CompleteCase,
            vec![MarginScheme::Empirical; 2],
            obs
        )
        .is_err());
        assert!(SchemeSpec::new(
            c,
            vec![MarginFamily::Uniform01; 2],
            JointScheme::Empirical,
            vec![MarginScheme::Parametric(ParametricKind::Normal); 2],
            ObservationProbabilities::FULL
        )
        .is_err());
        assert!(SchemeSpec::parametric(c, vec![MarginFamily::Uniform01; 2]).is_err());
    }

    fn all_schemes() -> Vec<LimitCovariance> {
        let obs = ObservationProbabilities::new(0.8, 0.7, 0.6).unwrap();
        let n = MarginFamily::normal(0.0, 1.0).unwrap();
        let e = MarginFamily::exponential(1.5).unwrap();
        let mut out = Vec::new();
        for c in [independence(), CopulaModel::clayton(1.0).unwrap(), CopulaModel::fgm(0.5).unwrap()] {
            out.push(LimitCovariance::new(SchemeSpec::empirical(c)));
            out.push(LimitCovariance::new(SchemeSpec::known_margins(c)));
            out.push(LimitCovariance::new(SchemeSpec::missing_data(c, obs).unwrap()));
            out.push(LimitCovariance::new(SchemeSpec::parametric(c, vec![n, e]).unwrap()));
            out.push(LimitCovariance::new(
                SchemeSpec::new(
                    c,
                    vec![n, e],
                    JointScheme::CompleteCase,
                    vec![MarginScheme::Parametric(ParametricKind::Normal), MarginScheme::AvailableCase],
                    obs,
                )
                .unwrap(),
            ));
        }
        out
    }

    #[test]
    fn gram_matrices_are_psd() {
        let axis: Vec<f64> = (1..=9).map(|k| k as f64 / 10.0).collect();
        let alpha: Vec<Vec<f64>> = axis.iter().map(|&a| vec![a, 1.0 - a * 0.5]).collect();
        let beta: Vec<(usize, f64)> = (0..2).flat_map(|j| axis.iter().map(move |&s| (j, s))).collect();
        for lim in all_schemes() {
            let g = lim.gram(&alpha, &beta).unwrap();
            let ev = min_eigenvalue(&g);
            assert!(ev >= -1e-9, "{:?}: {ev}", lim.scheme());
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn kernels_symmetric(a in 0.0f64..=1.0, b in 0.0f64..=1.0, c in 0.0f64..=1.0, d in 0.0f64..=1.0) {
            for lim in all_schemes().iter().step_by(2) {
                prop_assert!((lim.cov_alpha(&[a, b], &[c, d]).unwrap() - lim.cov_alpha(&[c, d], &[a, b]).unwrap()).abs() < 1e-15);
                prop_assert!((lim.cov_beta(0, a, c).unwrap() - lim.cov_beta(0, c, a).unwrap()).abs() < 1e-15);
                prop_assert!((lim.cov_beta_beta(0, 1, a, c).unwrap() - lim.cov_beta_beta(1, 0, c, a).unwrap()).abs() < 1e-15);
            }
        }

        #[test]
        fn limit_variance_nonnegative_and_scales(a in 0.01f64..0.99, b in 0.01f64..0.99) {
            let base = LimitCovariance::new(SchemeSpec::empirical(CopulaModel::clayton(1.0).unwrap()));
            let v = base.limit_variance(&[a, b]).unwrap();
            prop_assert!(v >= -1e-12);
            // multiplying every kernel by 1/p_XY multiplies the variance by it
            let full_cc = LimitCovariance::new(SchemeSpec::missing_data(CopulaModel::clayton(1.0).unwrap(),
                ObservationProbabilities::new(0.5, 0.5, 0.5).unwrap()).unwrap());
            prop_assert!((full_cc.limit_variance(&[a, b]).unwrap() - 2.0 * v).abs() < 1e-12);
        }
    }
}
