//! Python bindings for the hybrid copula estimator, its limit kernels and
//! the dataset simulator.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use hybridcop::asymptotics::{LimitCovariance as CoreLimit, ObservationProbabilities, SchemeSpec};
use hybridcop::harness;
use hybridcop::{
    CopulaModel, DataMatrix, Error, HybridEstimator as CoreHybrid, JointScheme, MarginFamily, MarginScheme,
    ParametricKind,
};

fn err(e: Error) -> PyErr {
    match e {
        Error::Degenerate(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn family(name: &str) -> PyResult<MarginFamily> {
    let parts: Vec<&str> = name.split(':').collect();
    let nums = parts[1..]
        .iter()
        .map(|x| x.parse::<f64>().map_err(|_| PyValueError::new_err(format!("bad margin {name:?}"))))
        .collect::<PyResult<Vec<_>>>()?;
    match (parts[0], nums.as_slice()) {
        ("uniform", []) => Ok(MarginFamily::Uniform01),
        ("normal", []) => MarginFamily::normal(0.0, 1.0).map_err(err),
        ("normal", [m, s]) => MarginFamily::normal(*m, *s).map_err(err),
        ("exponential", []) => MarginFamily::exponential(1.0).map_err(err),
        ("exponential", [r]) => MarginFamily::exponential(*r).map_err(err),
        _ => Err(PyValueError::new_err(format!("unknown margin family {name:?}"))),
    }
}

fn joint_scheme(name: &str) -> PyResult<JointScheme> {
    match name {
        "empirical" => Ok(JointScheme::Empirical),
        "complete-case" | "complete_case" => Ok(JointScheme::CompleteCase),
        _ => Err(PyValueError::new_err(format!("unknown joint estimator {name:?}"))),
    }
}

fn margin_scheme(name: &str, truth: MarginFamily) -> PyResult<MarginScheme> {
    match name {
        "empirical" => Ok(MarginScheme::Empirical),
        "available-case" | "available_case" => Ok(MarginScheme::AvailableCase),
        "known" => Ok(MarginScheme::Known(truth)),
        "normal" => Ok(MarginScheme::Parametric(ParametricKind::Normal)),
        "exponential" => Ok(MarginScheme::Parametric(ParametricKind::Exponential)),
        _ => Err(PyValueError::new_err(format!("unknown margin estimator {name:?}"))),
    }
}

/// A copula family: `Copula("independence")`, `Copula("clayton", 2.0)`,
/// `Copula("fgm", 0.5)`.
#[pyclass(frozen)]
struct Copula {
    inner: CopulaModel,
}

#[pymethods]
impl Copula {
    #[new]
    #[pyo3(signature = (family, theta=None, dim=2))]
    fn new(family: &str, theta: Option<f64>, dim: usize) -> PyResult<Self> {
        let need = || theta.ok_or_else(|| PyValueError::new_err("theta is required"));
        let inner = match family {
            "independence" => CopulaModel::independence(dim),
            "clayton" => CopulaModel::clayton(need()?),
            "fgm" => CopulaModel::fgm(need()?),
            _ => return Err(PyValueError::new_err(format!("unknown copula {family:?}"))),
        }
        .map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn cdf(&self, u: Vec<f64>) -> PyResult<f64> {
        self.inner.cdf(&u).map_err(err)
    }

    /// Partial derivative in coordinate `j` (0-based).
    fn partial(&self, j: usize, u: Vec<f64>) -> PyResult<f64> {
        self.inner.partial(j, &u).map_err(err)
    }

    fn sample(&self, n: usize, seed: u64) -> Vec<Vec<f64>> {
        self.inner.sample_seeded(n, seed)
    }

    fn __repr__(&self) -> String {
        format!("Copula({:?})", self.inner)
    }
}

/// Fitted hybrid copula estimator.
#[pyclass(frozen)]
struct HybridEstimator {
    inner: CoreHybrid,
}

#[pymethods]
impl HybridEstimator {
    /// Fits to rows where `None` marks a missing entry. `margins` is one
    /// name per column or a single name for all; `true_margins` supplies the
    /// families used by `"known"` margins.
    #[staticmethod]
    #[pyo3(signature = (rows, joint="empirical", margins=vec!["empirical".to_string()], true_margins=None))]
    fn fit(
        rows: Vec<Vec<Option<f64>>>,
        joint: &str,
        margins: Vec<String>,
        true_margins: Option<Vec<String>>,
    ) -> PyResult<Self> {
        let data = DataMatrix::from_optional_rows(&rows).map_err(err)?;
        let p = data.p();
        let names = if margins.len() == 1 { vec![margins[0].clone(); p] } else { margins };
        let truths = match true_margins {
            Some(t) if t.len() == 1 => vec![family(&t[0])?; p],
            Some(t) => t.iter().map(|s| family(s)).collect::<PyResult<Vec<_>>>()?,
            None => vec![MarginFamily::Uniform01; p],
        };
        if names.len() != p || truths.len() != p {
            return Err(PyValueError::new_err(format!("expected {p} margin entries")));
        }
        let schemes = names
            .iter()
            .zip(&truths)
            .map(|(n, &t)| margin_scheme(n, t))
            .collect::<PyResult<Vec<_>>>()?;
        let inner = CoreHybrid::fit(&data, joint_scheme(joint)?, &schemes).map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn eval(&self, u: Vec<f64>) -> PyResult<f64> {
        self.inner.eval(&u).map_err(err)
    }

    fn eval_grid(&self, grid: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        grid.iter().map(|u| self.inner.eval(u).map_err(err)).collect()
    }

    /// `sqrt(n) (C_n(u) - C(u))` at each grid point.
    fn process(&self, truth: &Copula, n: usize, grid: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
        hybridcop::estimators::process_eval(&self.inner, &truth.inner, (n as f64).sqrt(), &grid).map_err(err)
    }
}

fn build_scheme(
    scheme: &str,
    copula: &Copula,
    px: f64,
    py: f64,
    pxy: Option<f64>,
    true_margins: Option<Vec<String>>,
) -> PyResult<SchemeSpec> {
    let c = copula.inner;
    let p = c.dim();
    let obs = ObservationProbabilities::new(px, py, pxy.unwrap_or(px * py)).map_err(err)?;
    let default = if scheme == "parametric" { "normal" } else { "uniform" };
    let truths = match true_margins {
        Some(t) if t.len() == 1 => vec![family(&t[0])?; p],
        Some(t) => t.iter().map(|s| family(s)).collect::<PyResult<Vec<_>>>()?,
        None => vec![family(default)?; p],
    };
    let (joint, margins) = match scheme {
        "empirical" => (JointScheme::Empirical, vec![MarginScheme::Empirical; p]),
        "known" => (
            JointScheme::Empirical,
            truths.iter().map(|&f| MarginScheme::Known(f)).collect(),
        ),
        "missing" => (JointScheme::CompleteCase, vec![MarginScheme::AvailableCase; p]),
        "parametric" => (
            JointScheme::Empirical,
            truths
                .iter()
                .map(|f| {
                    f.kind()
                        .map(MarginScheme::Parametric)
                        .ok_or_else(|| PyValueError::new_err("parametric margins need normal or exponential truths"))
                })
                .collect::<PyResult<Vec<_>>>()?,
        ),
        _ => return Err(PyValueError::new_err(format!("unknown scheme {scheme:?}"))),
    };
    SchemeSpec::new(c, truths, joint, margins, obs).map_err(err)
}

/// Covariance kernels of the limit process under a scheme preset
/// (`"empirical"`, `"known"`, `"missing"` or `"parametric"`). Margin indices
/// are 0-based.
#[pyclass(frozen)]
struct LimitCovariance {
    inner: CoreLimit,
}

#[pymethods]
impl LimitCovariance {
    #[new]
    #[pyo3(signature = (scheme, copula, px=1.0, py=1.0, pxy=None, true_margins=None))]
    fn new(
        scheme: &str,
        copula: &Copula,
        px: f64,
        py: f64,
        pxy: Option<f64>,
        true_margins: Option<Vec<String>>,
    ) -> PyResult<Self> {
        let spec = build_scheme(scheme, copula, px, py, pxy, true_margins)?;
        Ok(Self {
            inner: CoreLimit::new(spec),
        })
    }

    fn cov_alpha(&self, u: Vec<f64>, v: Vec<f64>) -> PyResult<f64> {
        self.inner.cov_alpha(&u, &v).map_err(err)
    }

    fn cov_beta(&self, j: usize, s: f64, t: f64) -> PyResult<f64> {
        self.inner.cov_beta(j, s, t).map_err(err)
    }

    fn cov_beta_beta(&self, j: usize, k: usize, s: f64, t: f64) -> PyResult<f64> {
        self.inner.cov_beta_beta(j, k, s, t).map_err(err)
    }

    fn cov_alpha_beta(&self, j: usize, u: Vec<f64>, s: f64) -> PyResult<f64> {
        self.inner.cov_alpha_beta(j, &u, s).map_err(err)
    }

    fn limit_variance(&self, u: Vec<f64>) -> PyResult<f64> {
        self.inner.limit_variance(&u).map_err(err)
    }
}

/// Draws `n` rows from a scheme's truth; masked entries are `None`.
#[pyfunction]
#[pyo3(signature = (copula, n, seed, scheme="empirical", px=1.0, py=1.0, pxy=None, true_margins=None))]
#[allow(clippy::too_many_arguments)]
fn simulate(
    copula: &Copula,
    n: usize,
    seed: u64,
    scheme: &str,
    px: f64,
    py: f64,
    pxy: Option<f64>,
    true_margins: Option<Vec<String>>,
) -> PyResult<Vec<Vec<Option<f64>>>> {
    let spec = build_scheme(scheme, copula, px, py, pxy, true_margins)?;
    let data = harness::simulate_dataset(&spec, n, seed).map_err(err)?;
    Ok((0..data.n())
        .map(|i| (0..data.p()).map(|j| data.get(i, j)).collect())
        .collect())
}

/// Checks the sandwich bounds of the empirical quantile process;
/// returns `(holds, min_slack)`.
#[pyfunction]
#[pyo3(signature = (sample, u_grid, truth="uniform"))]
fn sandwich_check(sample: Vec<f64>, u_grid: Vec<f64>, truth: &str) -> PyResult<(bool, f64)> {
    let res = harness::sandwich_check(&sample, &family(truth)?, &u_grid).map_err(err)?;
    Ok((res.holds, res.min_slack))
}

#[pymodule]
fn hybridcop_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", hybridcop::VERSION)?;
    m.add_class::<Copula>()?;
    m.add_class::<HybridEstimator>()?;
    m.add_class::<LimitCovariance>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(sandwich_check, m)?)?;
    Ok(())
}
