//! Difference quotients of `(H, F_1, ..., F_p) -> H o F^{<-}` along smooth
//! perturbation directions.
//!
//! With `H_t = H + t alpha o F` and `F_{j,t} = F_j + t beta_j o F_j`, the
//! inverse is `F_{j,t}^{<-}(u) = F_j^{<-}(g_j^{<-}(u))` for
//! `g_j(w) = w + t beta_j(w)`, so the quotient
//! `t^{-1} {H_t(F_t^{<-}(u)) - C(u)}` can be evaluated to machine precision
//! and compared with the derivative `alpha(u) - sum_j dC/du_j(u) beta_j(u_j)`.

use serde::{Deserialize, Serialize};

use crate::copulas::{CopulaModel, MarginFamily};
use crate::error::{Error, Result};

use super::lattice;

type AlphaFn = Box<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type BetaFn = Box<dyn Fn(f64) -> f64 + Send + Sync>;

/// Direction `(alpha, beta_1, ..., beta_p)` on the copula scale.
pub struct Perturbation {
    pub alpha: AlphaFn,
    pub betas: Vec<BetaFn>,
}

impl Perturbation {
    pub fn new(alpha: AlphaFn, betas: Vec<BetaFn>) -> Self {
        Self { alpha, betas }
    }

    pub fn zero(p: usize) -> Self {
        Self {
            alpha: Box::new(|_| 0.0),
            betas: (0..p).map(|_| Box::new(|_| 0.0) as BetaFn).collect(),
        }
    }
}

/// A named copula, margins and perturbation direction.
pub struct HadamardCase {
    pub name: &'static str,
    pub copula: CopulaModel,
    pub margins: Vec<MarginFamily>,
    pub perturbation: Perturbation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HadamardReport {
    /// `(t, sup_u |quotient - derivative|)` along the ladder.
    pub distances: Vec<(f64, f64)>,
}

impl HadamardReport {
    pub fn strictly_decreasing(&self) -> bool {
        self.distances.windows(2).all(|w| w[1].1 < w[0].1)
    }

    pub fn last_distance(&self) -> f64 {
        self.distances.last().map_or(0.0, |d| d.1)
    }
}

/// The three perturbations of the check suite.
pub fn builtin_cases() -> Vec<HadamardCase> {
    use std::f64::consts::PI;
    let clayton = CopulaModel::clayton(1.0).expect("valid parameter");
    let normal = MarginFamily::normal(0.0, 1.0).expect("valid parameter");
    let expo = MarginFamily::exponential(1.0).expect("valid parameter");
    vec![
        HadamardCase {
            name: "independence, uniform margins, first margin bent",
            copula: CopulaModel::independence(2).expect("valid dimension"),
            margins: vec![MarginFamily::Uniform01; 2],
            perturbation: Perturbation::new(
                Box::new(|_| 0.0),
                vec![Box::new(|s| s * (1.0 - s)), Box::new(|_| 0.0)],
            ),
        },
        HadamardCase {
            name: "clayton(1), normal margins, joint and second margin bent",
            copula: clayton,
            margins: vec![normal, normal],
            perturbation: Perturbation::new(
                Box::new(move |u| {
                    let c = clayton.cdf(u).unwrap_or(0.0);
                    c * (1.0 - c)
                }),
                vec![Box::new(|_| 0.0), Box::new(|s| (PI * s).sin() / 10.0)],
            ),
        },
        HadamardCase {
            name: "fgm(0.5), exponential margins, both margins bent",
            copula: CopulaModel::fgm(0.5).expect("valid parameter"),
            margins: vec![expo, expo],
            perturbation: Perturbation::new(
                Box::new(|_| 0.0),
                vec![
                    Box::new(|s| s * (1.0 - s) * (1.0 - 2.0 * s)),
                    Box::new(|s| -s * (1.0 - s)),
                ],
            ),
        },
    ]
}

const VALIDITY_POINTS: usize = 2001;
const VALIDITY_SLACK: f64 = 1e-12;

fn check_margin_direction(j: usize, beta: &(dyn Fn(f64) -> f64 + Send + Sync), t: f64) -> Result<()> {
    if beta(0.0).abs() > VALIDITY_SLACK || beta(1.0).abs() > VALIDITY_SLACK {
        return Err(Error::InvalidInput(format!(
            "beta_{} must vanish at 0 and 1",
            j + 1
        )));
    }
    let mut prev = 0.0;
    for i in 1..VALIDITY_POINTS {
        let w = i as f64 / (VALIDITY_POINTS - 1) as f64;
        let g = w + t * beta(w);
        if g < prev - VALIDITY_SLACK {
            return Err(Error::InvalidInput(format!(
                "F_{} + t beta_{} o F_{} decreases near {w} at t = {t}",
                j + 1,
                j + 1,
                j + 1
            )));
        }
        prev = g;
    }
    Ok(())
}

fn check_joint_direction(copula: &CopulaModel, alpha: &(dyn Fn(&[f64]) -> f64 + Send + Sync), t: f64) -> Result<()> {
    let p = copula.dim();
    let m = match p {
        1 | 2 => 101,
        3 => 21,
        _ => 7,
    };
    let axis: Vec<f64> = (0..m).map(|i| i as f64 / (m - 1) as f64).collect();
    let top = vec![1.0; p];
    if alpha(&top).abs() > VALIDITY_SLACK {
        return Err(Error::InvalidInput("alpha must vanish at (1, ..., 1)".into()));
    }
    let h = |u: &[f64]| copula.cdf_unchecked(u) + t * alpha(u);
    for u in lattice(&axis, p) {
        if u.contains(&0.0) && alpha(&u).abs() > VALIDITY_SLACK {
            return Err(Error::InvalidInput(format!("alpha is not grounded at {u:?}")));
        }
    }
    // every cell of the lattice must carry nonnegative mass
    let cells = lattice(&(0..m - 1).map(|i| i as f64).collect::<Vec<_>>(), p);
    let mut corner = vec![0.0; p];
    for cell in cells {
        let mut volume = 0.0;
        for mask in 0..(1usize << p) {
            let mut sign = 1.0;
            for k in 0..p {
                let i = cell[k] as usize;
                if mask >> k & 1 == 1 {
                    corner[k] = axis[i + 1];
                } else {
                    corner[k] = axis[i];
                    sign = -sign;
                }
            }
            volume += sign * h(&corner);
        }
        if volume < -VALIDITY_SLACK {
            return Err(Error::InvalidInput(format!(
                "H + t alpha o F puts negative mass {volume} near {corner:?} at t = {t}"
            )));
        }
    }
    Ok(())
}

/// `inf { w in [0, 1] : w + t beta(w) >= u }` by bisection.
fn perturbed_inverse(beta: &(dyn Fn(f64) -> f64 + Send + Sync), t: f64, u: f64) -> f64 {
    let g = |w: f64| w + t * beta(w);
    if g(0.0) >= u {
        return 0.0;
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return hi;
        }
        if g(mid) >= u {
            hi = mid;
        } else {
            lo = mid;
        }
    }
}

/// Sup-norm distance over `grid` between the difference quotient at each
/// `t` and the derivative. Directions that do not yield valid distribution
/// functions at some `t` are rejected.
pub fn hadamard_check(
    copula: &CopulaModel,
    margins: &[MarginFamily],
    perturbation: &Perturbation,
    ts: &[f64],
    grid: &[Vec<f64>],
) -> Result<HadamardReport> {
    let p = copula.dim();
    if margins.len() != p || perturbation.betas.len() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            found: margins.len().min(perturbation.betas.len()),
        });
    }
    if ts.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
        return Err(Error::InvalidInput("step sizes must be positive".into()));
    }
    for &t in ts {
        for (j, b) in perturbation.betas.iter().enumerate() {
            check_margin_direction(j, b.as_ref(), t)?;
        }
        check_joint_direction(copula, perturbation.alpha.as_ref(), t)?;
    }
    let derivative: Vec<f64> = grid
        .iter()
        .map(|u| {
            let mut d = (perturbation.alpha)(u);
            for (j, b) in perturbation.betas.iter().enumerate() {
                if u[j] > 0.0 && u[j] < 1.0 {
                    d -= copula.partial(j, u)? * b(u[j]);
                }
            }
            Ok(d)
        })
        .collect::<Result<_>>()?;
    let base: Vec<f64> = grid.iter().map(|u| copula.cdf(u)).collect::<Result<_>>()?;

    let mut distances = Vec::with_capacity(ts.len());
    for &t in ts {
        let mut sup: f64 = 0.0;
        for (g, u) in grid.iter().enumerate() {
            // copula-scale coordinates F_j(F_{j,t}^{<-}(u_j))
            let v: Vec<f64> = (0..p)
                .map(|j| {
                    let w = perturbed_inverse(perturbation.betas[j].as_ref(), t, u[j]);
                    let f = &margins[j];
                    f.cdf(f.quantile(w))
                })
                .collect();
            let value = copula.cdf_unchecked(&v) + t * (perturbation.alpha)(&v);
            let quotient = (value - base[g]) / t;
            sup = sup.max((quotient - derivative[g]).abs());
        }
        distances.push((t, sup));
    }
    Ok(HadamardReport { distances })
}
