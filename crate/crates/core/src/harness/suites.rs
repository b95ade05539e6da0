//! Deterministic check suites behind `hybridcop check`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::asymptotics::{min_eigenvalue, LimitCovariance, ObservationProbabilities, SchemeSpec};
use crate::copulas::{open_unit, CopulaModel, MarginFamily, ParametricKind};
use crate::error::Result;
use crate::estimators::{JointScheme, MarginScheme};

use super::{builtin_cases, hadamard_check, lattice, open_grid, paired_inversion_check, sandwich_check};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SuiteOptions {
    /// Fewer random instances and replications.
    pub quick: bool,
    /// Test hook: perturb the first partial derivative so that the
    /// finite-difference suite must fail.
    pub corrupt_derivative: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

pub const FD_TOLERANCE: f64 = 1e-6;
pub const PSD_TOLERANCE: f64 = 1e-9;
pub const HADAMARD_LADDER: [f64; 3] = [0.1, 0.01, 0.001];

/// Copulas exercised by the derivative and axiom suites.
pub fn test_copulas() -> Vec<CopulaModel> {
    vec![
        CopulaModel::independence(2).expect("valid"),
        CopulaModel::clayton(0.5).expect("valid"),
        CopulaModel::clayton(2.0).expect("valid"),
        CopulaModel::fgm(0.5).expect("valid"),
        CopulaModel::fgm(-0.8).expect("valid"),
    ]
}

/// Smallest slack of the sandwich inequality over `instances` random
/// samples of size `1..=200` from uniform and normal truths.
pub fn sandwich_suite(instances: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::INFINITY;
    for i in 0..instances {
        let n = rng.random_range(1..=200);
        let truth = if i % 2 == 0 {
            MarginFamily::Uniform01
        } else {
            MarginFamily::normal(rng.random_range(-2.0..2.0), rng.random_range(0.5..3.0))?
        };
        let sample: Vec<f64> = (0..n).map(|_| truth.quantile(open_unit(&mut rng))).collect();
        // a random grid, the lattice k / n where the estimate jumps, and u = 1
        let mut grid: Vec<f64> = (0..rng.random_range(1..=300)).map(|_| open_unit(&mut rng)).collect();
        grid.extend((1..=n).map(|k| k as f64 / n as f64));
        let res = sandwich_check(&sample, &truth, &grid)?;
        worst = worst.min(res.min_slack);
    }
    Ok(worst)
}

/// Largest `|dC/du_j - central difference|` over `points` random interior
/// points per copula and coordinate.
pub fn derivative_suite(points: usize, seed: u64, corrupt: bool) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for c in test_copulas() {
        for _ in 0..points {
            let u: Vec<f64> = (0..c.dim()).map(|_| rng.random_range(0.01..0.99)).collect();
            for j in 0..c.dim() {
                let mut up = u.clone();
                let mut down = u.clone();
                up[j] += h;
                down[j] -= h;
                let fd = (c.cdf(&up)? - c.cdf(&down)?) / (2.0 * h);
                let mut d = c.partial(j, &u)?;
                if corrupt && j == 0 {
                    d *= 1.0 + 1e-3;
                }
                worst = worst.max((d - fd).abs());
            }
        }
    }
    Ok(worst)
}

/// Boundary conditions, uniform margins, Frechet bounds and nonnegative
/// rectangle mass on a lattice; returns the first violation.
pub fn copula_axioms_suite() -> std::result::Result<(), String> {
    let axis: Vec<f64> = (0..=50).map(|i| i as f64 / 50.0).collect();
    for c in test_copulas() {
        let name = c.name();
        let cdf = |u: &[f64]| c.cdf(u).map_err(|e| e.to_string());
        for &s in &axis {
            if cdf(&[s, 0.0])? != 0.0 || cdf(&[0.0, s])? != 0.0 {
                return Err(format!("{name} is not grounded at {s}"));
            }
            if (cdf(&[s, 1.0])? - s).abs() > 1e-14 || (cdf(&[1.0, s])? - s).abs() > 1e-14 {
                return Err(format!("{name} margin is not uniform at {s}"));
            }
        }
        for u in lattice(&axis, 2) {
            let v = cdf(&u)?;
            let lower = (u[0] + u[1] - 1.0).max(0.0);
            if v < lower - 1e-14 || v > u[0].min(u[1]) + 1e-14 {
                return Err(format!("{name} leaves the Frechet bounds at {u:?}"));
            }
        }
        for w in axis.windows(2) {
            for z in axis.windows(2) {
                let mass = cdf(&[w[1], z[1]])? - cdf(&[w[0], z[1]])? - cdf(&[w[1], z[0]])? + cdf(&[w[0], z[0]])?;
                if mass < -1e-14 {
                    return Err(format!("{name} has negative mass {mass} at ({}, {})", w[0], z[0]));
                }
            }
        }
    }
    Ok(())
}

/// Schemes exercised by the kernel suite.
pub fn test_schemes() -> Result<Vec<SchemeSpec>> {
    let obs = ObservationProbabilities::new(0.8, 0.7, 0.6)?;
    let normal = MarginFamily::normal(0.0, 1.0)?;
    let expo = MarginFamily::exponential(1.5)?;
    let mut out = Vec::new();
    for c in test_copulas() {
        out.push(SchemeSpec::empirical(c));
        out.push(SchemeSpec::known_margins(c));
        out.push(SchemeSpec::missing_data(c, obs)?);
        out.push(SchemeSpec::parametric(c, vec![normal, expo])?);
        out.push(SchemeSpec::new(
            c,
            vec![normal, expo],
            JointScheme::CompleteCase,
            vec![MarginScheme::Parametric(ParametricKind::Normal), MarginScheme::AvailableCase],
            obs,
        )?);
    }
    Ok(out)
}

/// Smallest eigenvalue over all Gram matrices assembled on 9-point grids:
/// the joint kernel on a 3 x 3 lattice together with both marginal kernels
/// on their axes, and the limit-process kernel on the same lattice.
pub fn kernel_suite() -> Result<f64> {
    let axis = [0.25, 0.5, 0.75];
    let points = lattice(&axis, 2);
    let betas: Vec<(usize, f64)> = (0..2).flat_map(|j| axis.iter().map(move |&s| (j, s))).collect();
    let mut worst = f64::INFINITY;
    for scheme in test_schemes()? {
        let lim = LimitCovariance::new(scheme);
        worst = worst.min(min_eigenvalue(&lim.gram(&points, &betas)?));
        let limit: Vec<Vec<f64>> = points
            .iter()
            .map(|u| points.iter().map(|v| lim.limit_covariance(u, v)).collect::<Result<_>>())
            .collect::<Result<_>>()?;
        worst = worst.min(min_eigenvalue(&limit));
    }
    Ok(worst)
}

/// Runs every suite; a suite that errors counts as failed.
pub fn run_suites(opts: SuiteOptions) -> Vec<SuiteResult> {
    let (instances, reps, fd_points) = if opts.quick { (100, 50, 1_000) } else { (1_000, 200, 10_000) };
    let mut out = Vec::new();
    let mut push = |name: &str, res: Result<(bool, String)>| {
        let (passed, detail) = res.unwrap_or_else(|e| (false, format!("error: {e}")));
        out.push(SuiteResult {
            name: name.into(),
            passed,
            detail,
        });
    };

    push(
        "sandwich",
        sandwich_suite(instances, 101).map(|s| (s >= -1e-12, format!("{instances} instances, min slack {s:.3e}"))),
    );
    push(
        "paired-inversion",
        paired_inversion_check(MarginFamily::Uniform01, &[100, 400, 1600], reps, &open_grid(199), 102).map(|rows| {
            let meds: Vec<String> = rows.iter().map(|r| format!("{:.4}", r.median)).collect();
            (
                rows.windows(2).all(|w| w[1].median < w[0].median),
                format!("medians over {reps} reps: {}", meds.join(" > ")),
            )
        }),
    );
    push(
        "hadamard",
        (|| {
            let axis: Vec<f64> = (0..=20).map(|i| i as f64 / 20.0).collect();
            let grid = lattice(&axis, 2);
            let mut ok = true;
            let mut parts = Vec::new();
            for case in builtin_cases() {
                let r = hadamard_check(&case.copula, &case.margins, &case.perturbation, &HADAMARD_LADDER, &grid)?;
                ok &= r.strictly_decreasing() && r.last_distance() < 1e-2;
                parts.push(format!("{:.1e}", r.last_distance()));
            }
            Ok((ok, format!("distance at t = 1e-3: {}", parts.join(", "))))
        })(),
    );
    push(
        "finite-difference",
        derivative_suite(fd_points, 103, opts.corrupt_derivative)
            .map(|e| (e <= FD_TOLERANCE, format!("{fd_points} points per copula, max error {e:.3e}"))),
    );
    push(
        "copula-axioms",
        Ok(match copula_axioms_suite() {
            Ok(()) => (true, format!("{} copulas", test_copulas().len())),
            Err(msg) => (false, msg),
        }),
    );
    push(
        "kernel-psd",
        kernel_suite().map(|e| (e >= -PSD_TOLERANCE, format!("min eigenvalue {e:.3e}"))),
    );
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quick_suites_pass() {
        let results = run_suites(SuiteOptions {
            quick: true,
            corrupt_derivative: false,
        });
        assert_eq!(results.len(), 6);
        for r in &results {
            assert!(r.passed, "{}: {}", r.name, r.detail);
        }
    }

    #[test]
    fn corrupted_derivative_fails() {
        let e = derivative_suite(200, 1, true).unwrap();
        assert!(e > FD_TOLERANCE);
        assert!(derivative_suite(200, 1, false).unwrap() <= FD_TOLERANCE);
    }
}
