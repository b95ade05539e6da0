//! Seeded Monte Carlo experiments and deterministic checks of the limit
//! theory.
//!
//! Every replication owns a generator seeded from
//! `(master_seed, n, replication)` through [`derive_seed`], and results are
//! collected in replication order before any reduction, so a report does not
//! depend on the number of worker threads.

mod hadamard;
pub mod suites;

pub use hadamard::{builtin_cases, hadamard_check, HadamardCase, HadamardReport, Perturbation};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asymptotics::{LimitCovariance, SchemeSpec};
use crate::copulas::{open_unit, MarginFamily};
use crate::distfun::{normal, CdfHandle, EmpiricalCdf, UnivariateCdf};
use crate::error::{check_probability, Error, Result};
use crate::estimators::{marginal_process, process_eval, representation_remainder, DataMatrix, HybridEstimator};

/// Largest share of replications that may fail before a run is aborted.
pub const MAX_SKIP_FRACTION: f64 = 0.01;

/// SplitMix64 finaliser.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of replication `rep` at sample size `n`.
///
/// Each input is absorbed by adding it to the state, stepping by the golden
/// ratio increment and finalising, as in SplitMix64.
pub fn derive_seed(master_seed: u64, n: usize, rep: usize) -> u64 {
    const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;
    let mut h = mix64(master_seed.wrapping_add(GOLDEN));
    h = mix64(h.wrapping_add(n as u64).wrapping_add(GOLDEN));
    mix64(h.wrapping_add(rep as u64).wrapping_add(GOLDEN))
}

/// Per-axis values `0, 0.05, 0.1, ..., 0.9, 0.95, 1`.
pub fn default_axis() -> Vec<f64> {
    let mut axis = vec![0.0, 0.05];
    axis.extend((1..=9).map(|k| k as f64 / 10.0));
    axis.extend([0.95, 1.0]);
    axis
}

/// Cartesian power of [`default_axis`].
pub fn default_grid(p: usize) -> Vec<Vec<f64>> {
    lattice(&default_axis(), p)
}

/// Cartesian power `axis^p`, last coordinate varying fastest.
pub fn lattice(axis: &[f64], p: usize) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = vec![Vec::new()];
    for _ in 0..p {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                axis.iter().map(move |&a| {
                    let mut v = prefix.clone();
                    v.push(a);
                    v
                })
            })
            .collect();
    }
    out
}

/// Draws `n` rows from the scheme's truth and masks them completely at
/// random with the scheme's observation probabilities.
pub fn simulate_dataset(scheme: &SchemeSpec, n: usize, seed: u64) -> Result<DataMatrix> {
    if n == 0 {
        return Err(Error::InvalidInput("sample size must be positive".into()));
    }
    let p = scheme.dim();
    let obs = scheme.observation;
    let masked = !obs.is_full();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // values first, then the mask, so the mask never shifts the value stream
    let mut values = Vec::with_capacity(n * p);
    for _ in 0..n {
        let u = scheme.copula.sample_one(&mut rng);
        values.extend(scheme.true_margins.iter().zip(&u).map(|(f, &w)| f.quantile(w)));
    }
    let mut observed = Vec::with_capacity(n * p);
    for _ in 0..n {
        if masked {
            let m = open_unit(&mut rng);
            let (x, y) = if m < obs.pxy {
                (true, true)
            } else if m < obs.px {
                (true, false)
            } else if m < obs.px + obs.py - obs.pxy {
                (false, true)
            } else {
                (false, false)
            };
            observed.extend([x, y]);
        } else {
            observed.extend(std::iter::repeat_n(true, p));
        }
    }
    DataMatrix::new(n, p, values, observed)
}

/// Monte Carlo experiment over a ladder of sample sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub scheme: SchemeSpec,
    pub sample_sizes: Vec<usize>,
    pub replications: usize,
    pub grid: Vec<Vec<f64>>,
    pub master_seed: u64,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replications < 2 {
            return Err(Error::InvalidInput("need at least two replications".into()));
        }
        if self.sample_sizes.is_empty() || self.sample_sizes[0] == 0 {
            return Err(Error::InvalidInput("sample sizes must be positive".into()));
        }
        if self.sample_sizes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput("sample sizes must be strictly increasing".into()));
        }
        if self.grid.is_empty() {
            return Err(Error::InvalidInput("empty evaluation grid".into()));
        }
        for u in &self.grid {
            if u.len() != self.scheme.dim() {
                return Err(Error::DimensionMismatch {
                    expected: self.scheme.dim(),
                    found: u.len(),
                });
            }
            u.iter().try_for_each(|&x| check_probability(x, "grid point"))?;
        }
        Ok(())
    }

    /// Distinct interior values of coordinate `j` across the grid.
    fn marginal_points(&self, j: usize) -> Vec<f64> {
        let mut s: Vec<f64> = self
            .grid
            .iter()
            .map(|u| u[j])
            .filter(|&x| x > 0.0 && x < 1.0)
            .collect();
        s.sort_by(f64::total_cmp);
        s.dedup();
        s
    }
}

/// Monte Carlo summary of the hybrid process at one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSummary {
    pub n: usize,
    pub u: Vec<f64>,
    pub mean: f64,
    pub variance: f64,
    /// Standard error of `variance`.
    pub std_error: f64,
    /// `None` on the boundary, where the partial derivatives do not exist.
    pub limit_variance: Option<f64>,
}

/// Monte Carlo summary of `r_n (F_{n,j}(F_j^{<-}(s)) - s)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalSummary {
    pub n: usize,
    pub margin: usize,
    pub s: f64,
    pub mean: f64,
    pub variance: f64,
    pub std_error: f64,
    pub limit_variance: f64,
}

/// Distribution of the sup-grid remainder at one sample size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemainderSummary {
    pub n: usize,
    pub median: f64,
    pub q90: f64,
    pub replications: usize,
    pub skipped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub points: Vec<PointSummary>,
    pub marginals: Vec<MarginalSummary>,
    pub remainders: Vec<RemainderSummary>,
}

impl ExperimentReport {
    pub fn point(&self, n: usize, u: &[f64]) -> Option<&PointSummary> {
        self.points.iter().find(|p| p.n == n && p.u == u)
    }

    pub fn marginal(&self, n: usize, margin: usize, s: f64) -> Option<&MarginalSummary> {
        self.marginals
            .iter()
            .find(|m| m.n == n && m.margin == margin && m.s == s)
    }
}

struct Replication {
    process: Vec<f64>,
    marginal: Vec<Vec<f64>>,
    remainder: f64,
}

fn replicate(config: &ExperimentConfig, truths: &[CdfHandle], margin_points: &[Vec<f64>], n: usize, rep: usize) -> Result<Replication> {
    let scheme = &config.scheme;
    let data = simulate_dataset(scheme, n, derive_seed(config.master_seed, n, rep))?;
    let est = HybridEstimator::fit(&data, scheme.joint, &scheme.margins)?;
    let rate = (n as f64).sqrt();
    let process = process_eval(&est, &scheme.copula, rate, &config.grid)?;
    let marginal = margin_points
        .iter()
        .enumerate()
        .map(|(j, pts)| {
            pts.iter()
                .map(|&s| marginal_process(&est, j, &truths[j], rate, s))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let remainder = representation_remainder(&est, &scheme.copula, truths, rate, &config.grid)?
        .into_iter()
        .fold(0.0f64, |m, r| m.max(r.abs()));
    Ok(Replication {
        process,
        marginal,
        remainder,
    })
}

/// Mean, unbiased variance and the standard error of that variance,
/// `s^2 sqrt(2 / (R - 1))`, accumulated in input order.
pub fn mean_variance(values: &[f64]) -> (f64, f64, f64) {
    let r = values.len() as f64;
    let mean = values.iter().sum::<f64>() / r;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (r - 1.0);
    (mean, var, var * (2.0 / (r - 1.0)).sqrt())
}

/// Median, averaging the two middle values for even lengths.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Empirical quantile `inf { x : F_R(x) >= q }`.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let k = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len());
    v[k - 1]
}

fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if threads == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidInput(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

/// Runs every replication at every sample size. `threads = 0` uses the
/// global pool. Failing replications are skipped; more than
/// [`MAX_SKIP_FRACTION`] of them at any sample size fails the run.
pub fn run_experiment(config: &ExperimentConfig, threads: usize) -> Result<ExperimentReport> {
    config.validate()?;
    let scheme = &config.scheme;
    let p = scheme.dim();
    let truths: Vec<CdfHandle> = scheme.true_margins.iter().map(|&f| CdfHandle::Known(f)).collect();
    let margin_points: Vec<Vec<f64>> = (0..p).map(|j| config.marginal_points(j)).collect();
    let limit = LimitCovariance::new(scheme.clone());
    let limits: Vec<Option<f64>> = config.grid.iter().map(|u| limit.limit_variance(u).ok()).collect();

    let mut report = ExperimentReport {
        points: Vec::new(),
        marginals: Vec::new(),
        remainders: Vec::new(),
    };
    for &n in &config.sample_sizes {
        let outcomes: Vec<Result<Replication>> = with_threads(threads, || {
            (0..config.replications)
                .into_par_iter()
                .map(|rep| replicate(config, &truths, &margin_points, n, rep))
                .collect()
        })?;
        let mut first_error = None;
        let mut kept = Vec::with_capacity(outcomes.len());
        for o in outcomes {
            match o {
                Ok(r) => kept.push(r),
                Err(e) => {
                    first_error.get_or_insert(e);
                }
            }
        }
        let skipped = config.replications - kept.len();
        if skipped as f64 > MAX_SKIP_FRACTION * config.replications as f64 || kept.len() < 2 {
            return Err(Error::Degenerate(format!(
                "{skipped} of {} replications failed at n = {n}; first error: {}",
                config.replications,
                first_error.map(|e| e.to_string()).unwrap_or_default()
            )));
        }

        for (g, u) in config.grid.iter().enumerate() {
            let column: Vec<f64> = kept.iter().map(|r| r.process[g]).collect();
            let (mean, variance, std_error) = mean_variance(&column);
            report.points.push(PointSummary {
                n,
                u: u.clone(),
                mean,
                variance,
                std_error,
                limit_variance: limits[g],
            });
        }
        for (j, pts) in margin_points.iter().enumerate() {
            for (i, &s) in pts.iter().enumerate() {
                let column: Vec<f64> = kept.iter().map(|r| r.marginal[j][i]).collect();
                let (mean, variance, std_error) = mean_variance(&column);
                report.marginals.push(MarginalSummary {
                    n,
                    margin: j,
                    s,
                    mean,
                    variance,
                    std_error,
                    limit_variance: limit.cov_beta(j, s, s)?,
                });
            }
        }
        let rem: Vec<f64> = kept.iter().map(|r| r.remainder).collect();
        report.remainders.push(RemainderSummary {
            n,
            median: median(&rem),
            q90: quantile(&rem, 0.9),
            replications: kept.len(),
            skipped,
        });
    }
    Ok(report)
}

/// Tolerance checks that can be attached to an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "check", rename_all = "snake_case")]
pub enum ToleranceCheck {
    /// `|variance - target| <= tol` at grid point `u` for the largest `n`.
    /// Without a target the limit variance is used.
    Variance { u: Vec<f64>, target: Option<f64>, tol: f64 },
    /// Same for the marginal process of margin `j` at `s`.
    MarginalVariance { j: usize, s: f64, target: Option<f64>, tol: f64 },
    /// `|variance - limit| <= k * std_error` at every interior grid point
    /// for the largest `n`.
    VarianceWithinSe { k: f64 },
    /// Remainder medians strictly decrease along the sample sizes.
    RemainderDecreasing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub observed: f64,
    pub expected: f64,
    pub tolerance: f64,
}

impl ToleranceCheck {
    pub fn evaluate(&self, report: &ExperimentReport, config: &ExperimentConfig) -> Result<CheckOutcome> {
        let n = *config.sample_sizes.last().expect("validated config");
        let outcome = |name: String, observed: f64, expected: f64, tolerance: f64| CheckOutcome {
            passed: (observed - expected).abs() <= tolerance,
            name,
            observed,
            expected,
            tolerance,
        };
        match self {
            Self::Variance { u, target, tol } => {
                let pt = report
                    .point(n, u)
                    .ok_or_else(|| Error::InvalidInput(format!("{u:?} is not on the experiment grid")))?;
                let expected = target.or(pt.limit_variance).ok_or_else(|| {
                    Error::Domain(format!("no limit variance at boundary point {u:?}"))
                })?;
                Ok(outcome(format!("variance at {u:?}, n = {n}"), pt.variance, expected, *tol))
            }
            Self::MarginalVariance { j, s, target, tol } => {
                let m = report.marginal(n, *j, *s).ok_or_else(|| {
                    Error::InvalidInput(format!("margin {} at {s} is not on the experiment grid", j + 1))
                })?;
                let expected = target.unwrap_or(m.limit_variance);
                Ok(outcome(
                    format!("marginal variance of margin {} at {s}, n = {n}", j + 1),
                    m.variance,
                    expected,
                    *tol,
                ))
            }
            Self::VarianceWithinSe { k } => {
                // report the worst standardized deviation
                let worst = report
                    .points
                    .iter()
                    .filter(|p| p.n == n)
                    .filter_map(|p| p.limit_variance.map(|l| (p.variance - l).abs() / p.std_error))
                    .fold(0.0, f64::max);
                Ok(outcome(format!("variance within {k} standard errors, n = {n}"), worst, 0.0, *k))
            }
            Self::RemainderDecreasing => {
                let meds: Vec<f64> = report.remainders.iter().map(|r| r.median).collect();
                let decreasing = meds.windows(2).all(|w| w[1] < w[0]);
                Ok(CheckOutcome {
                    name: "remainder medians strictly decreasing".into(),
                    passed: decreasing,
                    observed: meds.last().copied().unwrap_or(0.0),
                    expected: meds.first().copied().unwrap_or(0.0),
                    tolerance: 0.0,
                })
            }
        }
    }
}

/// Unbiased sample covariance (divisor `R - 1`) of the rows of `paths`.
pub fn estimate_covariance(paths: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let r = paths.len();
    if r < 2 {
        return Err(Error::InvalidInput("need at least two paths".into()));
    }
    let g = paths[0].len();
    if let Some(bad) = paths.iter().find(|p| p.len() != g) {
        return Err(Error::DimensionMismatch {
            expected: g,
            found: bad.len(),
        });
    }
    let means: Vec<f64> = (0..g)
        .map(|k| paths.iter().map(|p| p[k]).sum::<f64>() / r as f64)
        .collect();
    let mut cov = vec![vec![0.0; g]; g];
    for a in 0..g {
        for b in a..g {
            let s: f64 = paths.iter().map(|p| (p[a] - means[a]) * (p[b] - means[b])).sum();
            cov[a][b] = s / (r - 1) as f64;
            cov[b][a] = cov[a][b];
        }
    }
    Ok(cov)
}

/// Draws `draws` centered Gaussian vectors with covariance `kernel`,
/// factorised through its symmetric eigendecomposition so that singular
/// kernels are allowed.
pub fn sample_gaussian(kernel: &[Vec<f64>], draws: usize, seed: u64) -> Vec<Vec<f64>> {
    use nalgebra::{DMatrix, SymmetricEigen};
    let g = kernel.len();
    let eig = SymmetricEigen::new(DMatrix::from_fn(g, g, |i, j| kernel[i][j]));
    let scale: Vec<f64> = eig.eigenvalues.iter().map(|&l| l.max(0.0).sqrt()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..draws)
        .map(|_| {
            let z: Vec<f64> = scale.iter().map(|s| s * normal::quantile(open_unit(&mut rng))).collect();
            (0..g)
                .map(|i| (0..g).map(|k| eig.eigenvectors[(i, k)] * z[k]).sum())
                .collect()
        })
        .collect()
}

/// Outcome of [`sandwich_check`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SandwichResult {
    pub holds: bool,
    /// Smallest gap between the middle term and either bound.
    pub min_slack: f64,
}

pub const SANDWICH_TOLERANCE: f64 = 1e-12;

/// Checks `-g(F_n^{<-}(u)) <= r {F(F_n^{<-}(u)) - u} <= -g(F_n^{<-}(u)-)`
/// with `g = r (F_n - F)` at every `u` in `(0, 1]`.
pub fn sandwich_check_cdf(
    estimate: &impl UnivariateCdf,
    truth: &impl UnivariateCdf,
    rate: f64,
    u_grid: &[f64],
) -> Result<SandwichResult> {
    let mut min_slack = f64::INFINITY;
    for &u in u_grid {
        if !(u > 0.0 && u <= 1.0) {
            return Err(Error::Domain(format!("sandwich grid needs u in (0, 1], got {u}")));
        }
        let x = estimate.left_inverse(u)?;
        let middle = rate * (truth.eval(x) - u);
        let lower = -rate * (estimate.eval(x) - truth.eval(x));
        let upper = -rate * (estimate.eval_left_limit(x) - truth.eval_left_limit(x));
        min_slack = min_slack.min(middle - lower).min(upper - middle);
    }
    Ok(SandwichResult {
        holds: min_slack >= -SANDWICH_TOLERANCE,
        min_slack,
    })
}

/// [`sandwich_check_cdf`] for the empirical distribution function of
/// `sample` at rate `sqrt(n)`.
pub fn sandwich_check(sample: &[f64], truth: &impl UnivariateCdf, u_grid: &[f64]) -> Result<SandwichResult> {
    let ecdf = EmpiricalCdf::from_sample(sample)?;
    sandwich_check_cdf(&ecdf, truth, (sample.len() as f64).sqrt(), u_grid)
}

/// `sup_u |r {F(F_n^{<-}(u)) - u} + r {F_n(F^{<-}(u)) - u}|` over the grid.
pub fn paired_inversion_sup(
    estimate: &impl UnivariateCdf,
    truth: &impl UnivariateCdf,
    rate: f64,
    u_grid: &[f64],
) -> Result<f64> {
    let mut sup: f64 = 0.0;
    for &u in u_grid {
        check_probability(u, "u")?;
        let a = rate * (truth.eval(estimate.left_inverse(u)?) - u);
        let b = rate * (estimate.eval(truth.left_inverse(u)?) - u);
        sup = sup.max((a + b).abs());
    }
    Ok(sup)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayRow {
    pub n: usize,
    pub median: f64,
    pub q90: f64,
}

/// Medians over `reps` seeded samples of [`paired_inversion_sup`] at each
/// sample size.
pub fn paired_inversion_check(
    truth: MarginFamily,
    sizes: &[usize],
    reps: usize,
    u_grid: &[f64],
    seed: u64,
) -> Result<Vec<DecayRow>> {
    if reps == 0 {
        return Err(Error::InvalidInput("need at least one replication".into()));
    }
    sizes
        .iter()
        .map(|&n| {
            let sups = (0..reps)
                .into_par_iter()
                .map(|rep| {
                    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, n, rep));
                    let sample: Vec<f64> = (0..n).map(|_| truth.quantile(open_unit(&mut rng))).collect();
                    let ecdf = EmpiricalCdf::from_sample(&sample)?;
                    paired_inversion_sup(&ecdf, &truth, (n as f64).sqrt(), u_grid)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(DecayRow {
                n,
                median: median(&sups),
                q90: quantile(&sups, 0.9),
            })
        })
        .collect()
}

/// Evenly spaced grid `k / (m + 1)`, `k = 1..=m`.
pub fn open_grid(m: usize) -> Vec<f64> {
    (1..=m).map(|k| k as f64 / (m + 1) as f64).collect()
}
