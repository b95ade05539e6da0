//! Joint and marginal distribution-function estimators and the hybrid
//! copula estimator `C_n(u) = H_n(F_{n,1}^{<-}(u_1), ..., F_{n,p}^{<-}(u_p))`.
//!
//! The marginal estimators need not be the margins of the joint estimator:
//! the joint may be built from complete rows only while a margin uses every
//! observed entry of its column, a parametric fit, or the known truth.

use serde::{Deserialize, Serialize};

use crate::copulas::{CopulaModel, MarginFamily, ParametricKind};
use crate::distfun::{CdfHandle, EmpiricalCdf, ExtendedReal, UnivariateCdf};
use crate::error::{check_probability, Error, Result};

/// `n x p` observations with a per-cell observation mask.
#[derive(Debug, Clone)]
pub struct DataMatrix {
    n: usize,
    p: usize,
    values: Vec<f64>,
    observed: Vec<bool>,
}

// unobserved cells hold arbitrary values and do not take part in equality
impl PartialEq for DataMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n
            && self.p == other.p
            && self.observed == other.observed
            && self
                .values
                .iter()
                .zip(&other.values)
                .zip(&self.observed)
                .all(|((a, b), &o)| !o || a == b)
    }
}

impl DataMatrix {
    /// Row-major `values` and `observed`. Entries that are not observed are
    /// never read; observed entries must be finite.
    pub fn new(n: usize, p: usize, values: Vec<f64>, observed: Vec<bool>) -> Result<Self> {
        if n == 0 || p == 0 {
            return Err(Error::InvalidInput("data matrix needs n >= 1 and p >= 1".into()));
        }
        if values.len() != n * p {
            return Err(Error::DimensionMismatch {
                expected: n * p,
                found: values.len(),
            });
        }
        if observed.len() != n * p {
            return Err(Error::DimensionMismatch {
                expected: n * p,
                found: observed.len(),
            });
        }
        for (idx, (&v, &o)) in values.iter().zip(&observed).enumerate() {
            if o && !v.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "unmasked non-finite value {v} at row {}, column {}",
                    idx / p + 1,
                    idx % p + 1
                )));
            }
        }
        Ok(Self {
            n,
            p,
            values,
            observed,
        })
    }

    /// Fully observed rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let p = rows.first().map_or(0, Vec::len);
        if let Some(r) = rows.iter().find(|r| r.len() != p) {
            return Err(Error::DimensionMismatch {
                expected: p,
                found: r.len(),
            });
        }
        let values: Vec<f64> = rows.iter().flatten().copied().collect();
        let observed = vec![true; values.len()];
        Self::new(rows.len(), p, values, observed)
    }

    /// Rows with `None` marking a missing entry.
    pub fn from_optional_rows(rows: &[Vec<Option<f64>>]) -> Result<Self> {
        let p = rows.first().map_or(0, Vec::len);
        if let Some(r) = rows.iter().find(|r| r.len() != p) {
            return Err(Error::DimensionMismatch {
                expected: p,
                found: r.len(),
            });
        }
        let values = rows.iter().flatten().map(|v| v.unwrap_or(f64::NAN)).collect();
        let observed = rows.iter().flatten().map(Option::is_some).collect();
        Self::new(rows.len(), p, values, observed)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        let idx = i * self.p + j;
        self.observed[idx].then(|| self.values[idx])
    }

    pub fn is_observed(&self, i: usize, j: usize) -> bool {
        self.observed[i * self.p + j]
    }

    pub fn is_complete_row(&self, i: usize) -> bool {
        self.observed[i * self.p..(i + 1) * self.p].iter().all(|&o| o)
    }

    pub fn complete_rows(&self) -> usize {
        (0..self.n).filter(|&i| self.is_complete_row(i)).count()
    }

    pub fn observed_count(&self, j: usize) -> usize {
        (0..self.n).filter(|&i| self.is_observed(i, j)).count()
    }

    pub fn is_fully_observed(&self) -> bool {
        self.observed.iter().all(|&o| o)
    }

    /// Observed entries of column `j`, in row order.
    pub fn observed_column(&self, j: usize) -> Vec<f64> {
        (0..self.n).filter_map(|i| self.get(i, j)).collect()
    }

    fn check_column(&self, j: usize) -> Result<()> {
        if j >= self.p {
            Err(Error::InvalidInput(format!("column {j} out of range (p = {})", self.p)))
        } else {
            Ok(())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JointKind {
    EmpiricalAllRows,
    CompleteCase,
}

/// Empirical distribution function of a set of retained rows.
#[derive(Debug, Clone, PartialEq)]
pub struct JointCdfEstimate {
    kind: JointKind,
    p: usize,
    rows: Vec<f64>,
}

impl JointCdfEstimate {
    pub fn kind(&self) -> JointKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.p
    }

    /// Number of retained rows.
    pub fn m(&self) -> usize {
        self.rows.len() / self.p
    }

    pub fn eval(&self, x: &[ExtendedReal]) -> Result<f64> {
        if x.len() != self.p {
            return Err(Error::DimensionMismatch {
                expected: self.p,
                found: x.len(),
            });
        }
        Ok(self.eval_unchecked(x))
    }

    fn eval_unchecked(&self, x: &[ExtendedReal]) -> f64 {
        if x.contains(&ExtendedReal::NegInf) {
            return 0.0;
        }
        let t: Vec<f64> = x.iter().map(|v| v.to_f64()).collect();
        let count = self
            .rows
            .chunks_exact(self.p)
            .filter(|row| row.iter().zip(&t).all(|(a, b)| a <= b))
            .count();
        count as f64 / self.m() as f64
    }

    /// `j`-th margin of the joint estimate, `H_{n,j}(x)`.
    pub fn marginal_eval(&self, j: usize, x: ExtendedReal) -> f64 {
        let mut point = vec![ExtendedReal::PosInf; self.p];
        point[j] = x;
        self.eval_unchecked(&point)
    }
}

/// `H_n(x) = (1/n) #{i : X_i <= x}` over every row; rejects missing entries.
pub fn fit_empirical_joint(data: &DataMatrix) -> Result<JointCdfEstimate> {
    if !data.is_fully_observed() {
        return Err(Error::MissingEntries);
    }
    Ok(JointCdfEstimate {
        kind: JointKind::EmpiricalAllRows,
        p: data.p,
        rows: data.values.clone(),
    })
}

/// Empirical distribution function of the complete rows.
pub fn fit_complete_case_joint(data: &DataMatrix) -> Result<JointCdfEstimate> {
    let rows: Vec<f64> = (0..data.n)
        .filter(|&i| data.is_complete_row(i))
        .flat_map(|i| data.values[i * data.p..(i + 1) * data.p].iter().copied())
        .collect();
    if rows.is_empty() {
        return Err(Error::NoCompleteRows);
    }
    Ok(JointCdfEstimate {
        kind: JointKind::CompleteCase,
        p: data.p,
        rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarginKind {
    Empirical,
    AvailableCase,
    ParametricPlugin,
    Known,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarginalCdfEstimate {
    pub kind: MarginKind,
    pub column: usize,
    pub cdf: CdfHandle,
}

impl MarginalCdfEstimate {
    pub fn eval(&self, x: ExtendedReal) -> f64 {
        self.cdf.eval(x)
    }

    pub fn left_inverse(&self, u: f64) -> Result<ExtendedReal> {
        self.cdf.left_inverse(u)
    }
}

/// Marginal empirical distribution function of a fully observed column.
pub fn fit_empirical_margin(data: &DataMatrix, j: usize) -> Result<MarginalCdfEstimate> {
    data.check_column(j)?;
    if data.observed_count(j) != data.n {
        return Err(Error::MissingEntries);
    }
    Ok(MarginalCdfEstimate {
        kind: MarginKind::Empirical,
        column: j,
        cdf: CdfHandle::Empirical(EmpiricalCdf::from_sample(&data.observed_column(j))?),
    })
}

/// Empirical distribution function of the observed entries of column `j`.
pub fn fit_available_case_margin(data: &DataMatrix, j: usize) -> Result<MarginalCdfEstimate> {
    data.check_column(j)?;
    let column = data.observed_column(j);
    if column.is_empty() {
        return Err(Error::ColumnMissing(j));
    }
    Ok(MarginalCdfEstimate {
        kind: MarginKind::AvailableCase,
        column: j,
        cdf: CdfHandle::Empirical(EmpiricalCdf::from_sample(&column)?),
    })
}

/// Plug-in `F_j(.; theta_hat)` with the maximum-likelihood fit on the
/// observed entries of column `j`.
pub fn fit_parametric_margin(
    data: &DataMatrix,
    j: usize,
    kind: ParametricKind,
) -> Result<MarginalCdfEstimate> {
    data.check_column(j)?;
    let column = data.observed_column(j);
    if column.is_empty() {
        return Err(Error::ColumnMissing(j));
    }
    Ok(MarginalCdfEstimate {
        kind: MarginKind::ParametricPlugin,
        column: j,
        cdf: CdfHandle::Parametric(MarginFamily::fit_mle(kind, &column)?),
    })
}

pub fn known_margin(j: usize, family: MarginFamily) -> MarginalCdfEstimate {
    MarginalCdfEstimate {
        kind: MarginKind::Known,
        column: j,
        cdf: CdfHandle::Known(family),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JointScheme {
    Empirical,
    CompleteCase,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", content = "family", rename_all = "snake_case")]
pub enum MarginScheme {
    Empirical,
    AvailableCase,
    Known(MarginFamily),
    Parametric(ParametricKind),
}

/// The hybrid copula estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridEstimator {
    joint: JointCdfEstimate,
    margins: Vec<MarginalCdfEstimate>,
}

impl HybridEstimator {
    pub fn new(joint: JointCdfEstimate, margins: Vec<MarginalCdfEstimate>) -> Result<Self> {
        if margins.len() != joint.dim() {
            return Err(Error::DimensionMismatch {
                expected: joint.dim(),
                found: margins.len(),
            });
        }
        Ok(Self { joint, margins })
    }

    /// Fits the joint and every margin according to the given schemes.
    pub fn fit(data: &DataMatrix, joint: JointScheme, margins: &[MarginScheme]) -> Result<Self> {
        if margins.len() != data.p() {
            return Err(Error::DimensionMismatch {
                expected: data.p(),
                found: margins.len(),
            });
        }
        let joint = match joint {
            JointScheme::Empirical => fit_empirical_joint(data)?,
            JointScheme::CompleteCase => fit_complete_case_joint(data)?,
        };
        let margins = margins
            .iter()
            .enumerate()
            .map(|(j, m)| match *m {
                MarginScheme::Empirical => fit_empirical_margin(data, j),
                MarginScheme::AvailableCase => fit_available_case_margin(data, j),
                MarginScheme::Known(f) => Ok(known_margin(j, f)),
                MarginScheme::Parametric(kind) => fit_parametric_margin(data, j, kind),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(joint, margins)
    }

    pub fn joint(&self) -> &JointCdfEstimate {
        &self.joint
    }

    pub fn margins(&self) -> &[MarginalCdfEstimate] {
        &self.margins
    }

    pub fn dim(&self) -> usize {
        self.joint.dim()
    }

    fn check_point(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: u.len(),
            });
        }
        u.iter().try_for_each(|&x| check_probability(x, "u"))
    }

    /// `(F_{n,1}^{<-}(u_1), ..., F_{n,p}^{<-}(u_p))`.
    pub fn quantiles(&self, u: &[f64]) -> Result<Vec<ExtendedReal>> {
        self.check_point(u)?;
        self.margins
            .iter()
            .zip(u)
            .map(|(m, &uj)| m.left_inverse(uj))
            .collect()
    }

    /// `C_n(u)`; exactly zero as soon as one coordinate is zero.
    pub fn eval(&self, u: &[f64]) -> Result<f64> {
        let x = self.quantiles(u)?;
        Ok(self.joint.eval_unchecked(&x))
    }
}

fn check_rate(rate: f64) -> Result<()> {
    if rate.is_finite() && rate > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("rate must be positive, got {rate}")))
    }
}

/// `r_n (C_n(u) - C(u))` at each grid point.
pub fn process_eval(
    est: &HybridEstimator,
    truth: &CopulaModel,
    rate: f64,
    grid: &[Vec<f64>],
) -> Result<Vec<f64>> {
    check_rate(rate)?;
    grid.iter()
        .map(|u| Ok(rate * (est.eval(u)? - truth.cdf(u)?)))
        .collect()
}

/// `r_n (F_{n,j}(F_j^{<-}(u)) - u)`, the marginal estimation error read on
/// the uniform scale.
pub fn marginal_process(
    est: &HybridEstimator,
    j: usize,
    true_margin: &impl UnivariateCdf,
    rate: f64,
    u: f64,
) -> Result<f64> {
    check_rate(rate)?;
    let x = true_margin.left_inverse(u)?;
    let margin = est
        .margins
        .get(j)
        .ok_or_else(|| Error::InvalidInput(format!("margin {j} out of range")))?;
    Ok(rate * (margin.eval(x) - u))
}

/// Remainder term of the asymptotic representation
///
/// ```text
/// r_n (C_n(u) - C(u)) - r_n (H_n(F^{<-}(u)) - C(u))
///     + sum_j dC/du_j(u) r_n (F_{n,j}(F_j^{<-}(u_j)) - u_j) 1{0 < u_j < 1}
/// ```
///
/// which vanishes in probability uniformly in `u` as `n` grows.
pub fn representation_remainder(
    est: &HybridEstimator,
    truth: &CopulaModel,
    true_margins: &[CdfHandle],
    rate: f64,
    grid: &[Vec<f64>],
) -> Result<Vec<f64>> {
    check_rate(rate)?;
    if true_margins.len() != est.dim() {
        return Err(Error::DimensionMismatch {
            expected: est.dim(),
            found: true_margins.len(),
        });
    }
    grid.iter()
        .map(|u| {
            let c = truth.cdf(u)?;
            let c_hat = est.eval(u)?;
            let x_true = true_margins
                .iter()
                .zip(u)
                .map(|(f, &uj)| f.left_inverse(uj))
                .collect::<Result<Vec<_>>>()?;
            let h_at_true = est.joint.eval_unchecked(&x_true);
            let mut rem = rate * (c_hat - c) - rate * (h_at_true - c);
            for (j, &uj) in u.iter().enumerate() {
                if uj > 0.0 && uj < 1.0 {
                    let dc = truth.partial(j, u)?;
                    rem += dc * rate * (est.margins[j].eval(x_true[j]) - uj);
                }
            }
            Ok(rem)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rows(v: &[&[f64]]) -> DataMatrix {
        DataMatrix::from_rows(&v.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn fin(v: &[f64]) -> Vec<ExtendedReal> {
        v.iter().map(|&x| ExtendedReal::new(x).unwrap()).collect()
    }

    #[test]
    fn empirical_joint_examples() {
        let d = rows(&[&[1.0, 1.0], &[2.0, 2.0]]);
        let h = fit_empirical_joint(&d).unwrap();
        assert_eq!(h.eval(&fin(&[1.5, 2.5])).unwrap(), 0.5);
        assert_eq!(h.eval(&[ExtendedReal::NegInf, ExtendedReal::PosInf]).unwrap(), 0.0);
        assert_eq!(h.eval(&[ExtendedReal::PosInf; 2]).unwrap(), 1.0);
        assert!(h.eval(&fin(&[1.0])).is_err());
    }

    #[test]
    fn empirical_joint_rejects_missing() {
        let d = DataMatrix::from_optional_rows(&[vec![Some(1.0), Some(1.0)], vec![Some(2.0), None]]).unwrap();
        assert_eq!(fit_empirical_joint(&d), Err(Error::MissingEntries));
        assert_eq!(fit_empirical_margin(&d, 1), Err(Error::MissingEntries));
        assert!(fit_empirical_margin(&d, 0).is_ok());
    }

    #[test]
    fn complete_case_examples() {
        let d = DataMatrix::from_optional_rows(&[vec![Some(1.0), Some(1.0)], vec![Some(2.0), None]]).unwrap();
        let h = fit_complete_case_joint(&d).unwrap();
        assert_eq!(h.m(), 1);
        assert_eq!(h.eval(&fin(&[1.0, 1.0])).unwrap(), 1.0);

        let d = rows(&[&[1.0, 1.0], &[3.0, 3.0]]);
        let h = fit_complete_case_joint(&d).unwrap();
        // brute force over the two rows: only (1, 1) is dominated by (2, 2)
        let brute = [[1.0, 1.0], [3.0, 3.0]].iter().filter(|r| r[0] <= 2.0 && r[1] <= 2.0).count() as f64 / 2.0;
        assert_eq!(h.eval(&fin(&[2.0, 2.0])).unwrap(), brute);
        assert_eq!(brute, 0.5);

        let none = DataMatrix::from_optional_rows(&[vec![Some(1.0), None], vec![None, Some(2.0)]]).unwrap();
        assert_eq!(fit_complete_case_joint(&none), Err(Error::NoCompleteRows));
    }

    #[test]
    fn available_case_examples() {
        let d = DataMatrix::from_optional_rows(&[vec![Some(1.0)], vec![None], vec![Some(3.0)]]).unwrap();
        let f = fit_available_case_margin(&d, 0).unwrap();
        assert_eq!(f.eval(ExtendedReal::Finite(1.0)), 0.5);

        let d = DataMatrix::from_optional_rows(&[vec![Some(5.0)]]).unwrap();
        let f = fit_available_case_margin(&d, 0).unwrap();
        assert_eq!(f.eval(ExtendedReal::Finite(4.0)), 0.0);

        let d = DataMatrix::from_optional_rows(&[vec![Some(5.0), None], vec![Some(1.0), None]]).unwrap();
        assert_eq!(fit_available_case_margin(&d, 1), Err(Error::ColumnMissing(1)));
    }

    #[test]
    fn available_case_equals_empirical_when_complete() {
        let d = rows(&[&[0.3, 2.0], &[0.1, 1.0], &[0.9, -1.0]]);
        for j in 0..2 {
            assert_eq!(
                fit_available_case_margin(&d, j).unwrap().cdf,
                fit_empirical_margin(&d, j).unwrap().cdf
            );
        }
    }

    #[test]
    fn parametric_margin_examples() {
        let d = rows(&[&[-1.0], &[1.0]]);
        let f = fit_parametric_margin(&d, 0, ParametricKind::Normal).unwrap();
        assert_eq!(f.cdf, CdfHandle::Parametric(MarginFamily::Normal { mean: 0.0, sd: 1.0 }));

        let d = rows(&[&[2.0], &[2.0], &[2.0], &[2.0]]);
        let f = fit_parametric_margin(&d, 0, ParametricKind::Exponential).unwrap();
        assert_eq!(f.cdf, CdfHandle::Parametric(MarginFamily::Exponential { rate: 0.5 }));

        let d = rows(&[&[0.0], &[0.0]]);
        assert!(matches!(
            fit_parametric_margin(&d, 0, ParametricKind::Normal),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn unmasked_nan_rejected() {
        let err = DataMatrix::new(1, 2, vec![1.0, f64::NAN], vec![true, true]).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
        assert!(DataMatrix::new(1, 2, vec![1.0, f64::NAN], vec![true, false]).is_ok());
        assert!(DataMatrix::from_rows(&[]).is_err());
    }

    #[test]
    fn hybrid_zero_coordinate() {
        let d = rows(&[&[0.2, 0.4], &[0.6, 0.1], &[0.9, 0.8]]);
        let est = HybridEstimator::fit(&d, JointScheme::Empirical, &[MarginScheme::Empirical; 2]).unwrap();
        assert_eq!(est.eval(&[0.0, 0.7]).unwrap(), 0.0);
        assert_eq!(est.eval(&[1.0, 1.0]).unwrap(), 1.0);
        assert!(matches!(est.eval(&[0.5, 1.1]), Err(Error::Domain(_))));
    }

    #[test]
    fn known_uniform_margins_give_joint_edf() {
        let d = rows(&[&[0.2, 0.4], &[0.6, 0.1], &[0.9, 0.8], &[0.3, 0.3]]);
        let est = HybridEstimator::fit(
            &d,
            JointScheme::Empirical,
            &[MarginScheme::Known(MarginFamily::Uniform01); 2],
        )
        .unwrap();
        for &u in &[[0.5, 0.5], [0.25, 0.9], [0.95, 0.35]] {
            let brute = [[0.2, 0.4], [0.6, 0.1], [0.9, 0.8], [0.3, 0.3]]
                .iter()
                .filter(|r| r[0] <= u[0] && r[1] <= u[1])
                .count() as f64
                / 4.0;
            assert_eq!(est.eval(&u).unwrap(), brute);
        }
    }

    #[test]
    fn process_examples() {
        let ind = CopulaModel::independence(2).unwrap();
        // four uniform pairs drawn with a fixed seed, checked against a rank count
        let sample = ind.sample_seeded(4, 2024);
        let d = DataMatrix::from_rows(&sample).unwrap();
        let est = HybridEstimator::fit(&d, JointScheme::Empirical, &[MarginScheme::Empirical; 2]).unwrap();
        let rank = |j: usize, i: usize| sample.iter().filter(|r| r[j] <= sample[i][j]).count();
        let brute = (0..4).filter(|&i| rank(0, i) <= 2 && rank(1, i) <= 2).count() as f64 / 4.0;
        let z = process_eval(&est, &ind, 2.0, &[vec![0.5, 0.5]]).unwrap();
        assert_eq!(z[0], 2.0 * (brute - 0.25));
        assert!(process_eval(&est, &ind, 0.0, &[vec![0.5, 0.5]]).is_err());
    }

    #[test]
    fn process_of_comonotone_points_against_independence() {
        // C_n = min(u, v) on the lattice {k/n} for the diagonal sample
        let d = rows(&[&[1.0, 1.0], &[2.0, 2.0]]);
        let est = HybridEstimator::fit(&d, JointScheme::Empirical, &[MarginScheme::Empirical; 2]).unwrap();
        let ind = CopulaModel::independence(2).unwrap();
        let z = process_eval(&est, &ind, 1.0, &[vec![0.5, 0.5]]).unwrap();
        assert_eq!(z[0], 0.25);
    }

    #[test]
    fn remainder_vanishes_for_perfect_estimates() {
        // with the true margins plugged in, C_n = H_n o F^{<-} and every
        // marginal term is zero
        let c = CopulaModel::clayton(2.0).unwrap();
        let sample = c.sample_seeded(50, 3);
        let d = DataMatrix::from_rows(&sample).unwrap();
        let est = HybridEstimator::fit(&d, JointScheme::Empirical, &[MarginScheme::Known(MarginFamily::Uniform01); 2])
            .unwrap();
        let truth = vec![CdfHandle::Known(MarginFamily::Uniform01); 2];
        let grid: Vec<Vec<f64>> = (0..=10)
            .flat_map(|a| (0..=10).map(move |b| vec![a as f64 / 10.0, b as f64 / 10.0]))
            .collect();
        let rem = representation_remainder(&est, &c, &truth, 50f64.sqrt(), &grid).unwrap();
        assert!(rem.iter().all(|r| r.abs() < 1e-12));
    }

    #[test]
    fn remainder_at_zero_coordinate_has_no_marginal_terms() {
        let c = CopulaModel::fgm(0.5).unwrap();
        let sample = c.sample_seeded(30, 8);
        let d = DataMatrix::from_rows(&sample).unwrap();
        let est = HybridEstimator::fit(&d, JointScheme::Empirical, &[MarginScheme::Empirical; 2]).unwrap();
        let truth = vec![CdfHandle::Known(MarginFamily::Uniform01); 2];
        let r = 30f64.sqrt();
        let u = vec![0.0, 0.4];
        let rem = representation_remainder(&est, &c, &truth, r, std::slice::from_ref(&u)).unwrap();
        let cn = process_eval(&est, &c, r, &[u]).unwrap()[0];
        // H_n at (-inf, .) is zero and C(0, .) is zero
        assert_eq!(rem[0], cn - r * (0.0 - 0.0));
    }

    fn arb_data() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<Vec<bool>>)> {
        (1usize..30).prop_flat_map(|n| {
            (
                prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 2), n),
                prop::collection::vec(prop::collection::vec(prop::bool::weighted(0.8), 2), n),
            )
        })
    }

    proptest! {
        #[test]
        fn complete_and_available_reduce_to_empirical((vals, _) in arb_data(), u in prop::collection::vec((0.0f64..=1.0, 0.0f64..=1.0), 30)) {
            let d = DataMatrix::from_rows(&vals).unwrap();
            let a = HybridEstimator::fit(&d, JointScheme::Empirical, &[MarginScheme::Empirical; 2]).unwrap();
            let b = HybridEstimator::fit(&d, JointScheme::CompleteCase, &[MarginScheme::AvailableCase; 2]).unwrap();
            for (x, y) in u {
                prop_assert_eq!(a.eval(&[x, y]).unwrap(), b.eval(&[x, y]).unwrap());
            }
        }

        #[test]
        fn monotone_and_bounded((vals, mask) in arb_data(), a in 0.0f64..=1.0, b in 0.0f64..=1.0, v in 0.0f64..=1.0) {
            let rows: Vec<Vec<Option<f64>>> = vals.iter().zip(&mask)
                .map(|(r, m)| r.iter().zip(m).map(|(&x, &o)| o.then_some(x)).collect())
                .collect();
            let d = DataMatrix::from_optional_rows(&rows).unwrap();
            let Ok(est) = HybridEstimator::fit(&d, JointScheme::CompleteCase, &[MarginScheme::AvailableCase; 2]) else {
                return Ok(());
            };
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            for j in 0..2 {
                let mut p = [v, v];
                let mut q = [v, v];
                p[j] = lo;
                q[j] = hi;
                prop_assert!(est.eval(&p).unwrap() <= est.eval(&q).unwrap());
            }
            let u = [a, b];
            let c = est.eval(&u).unwrap();
            let x = est.quantiles(&u).unwrap();
            let bound = (0..2).map(|j| est.joint().marginal_eval(j, x[j])).fold(1.0, f64::min);
            prop_assert!((0.0..=bound).contains(&c));
        }
    }
}
