//! Lower bound and high-probability error bounds for the A and B estimators,
//! with the free parameter `epsilon` optimized under its feasibility constraint.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{ensure, Error, Result};
use crate::kernel_expansion::EigenSystem;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Estimator {
    A,
    B,
}

impl std::str::FromStr for Estimator {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "A" | "a" => Ok(Estimator::A),
            "B" | "b" => Ok(Estimator::B),
            _ => Err(Error::InvalidParameter(format!(
                "estimator must be A or B, got `{s}`"
            ))),
        }
    }
}

/// Setting in which a bound is evaluated.
#[derive(Clone, Copy, Debug)]
pub struct BoundQuery<'a> {
    pub eigen: &'a EigenSystem,
    pub e: usize,
    pub m: usize,
    pub alpha: f64,
    pub sigma2: f64,
}

impl BoundQuery<'_> {
    pub fn validate(&self) -> Result<()> {
        ensure(self.alpha > 0.0 && self.alpha < 1.0, || {
            format!("alpha must lie in (0, 1), got {}", self.alpha)
        })?;
        ensure(self.e >= 1 && self.e <= self.eigen.e_max(), || {
            format!("E must lie in 1..={}, got {}", self.eigen.e_max(), self.e)
        })?;
        ensure(self.m >= 1, || "M must be at least 1".into())?;
        ensure(self.sigma2 > 0.0 && self.sigma2.is_finite(), || {
            format!("noise variance must be positive, got {}", self.sigma2)
        })
    }

    fn rhs(&self, which: Estimator) -> f64 {
        let e = self.e as f64;
        let log_arg = match which {
            Estimator::A => e / self.alpha,
            Estimator::B => 2.0 * e / self.alpha,
        };
        e * self.eigen.k_bound() / self.m as f64 * log_arg.ln()
    }
}

/// Additive parts of a bound. `kappa` is zero for the A estimator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BoundComponents {
    pub bias: f64,
    pub variance: f64,
    pub tail: f64,
    pub kappa: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundReport {
    pub estimator: Estimator,
    pub value: f64,
    pub epsilon: f64,
    pub feasible: bool,
    pub e: usize,
    pub m: usize,
    pub alpha: f64,
    pub sigma2: f64,
    pub components: BoundComponents,
    /// False when the tail sum was truncated, making the bound an underestimate.
    pub tail_exact: bool,
}

/// Error floor of any `E`-dimensional estimator: `sum_{e > E} lambda_e`.
pub fn lower_bound(eigen: &EigenSystem, e: usize) -> f64 {
    eigen.tail_sum(e)
}

/// `1 - eps + eps ln eps`, strictly decreasing from 1 to 0 on `(0, 1]`.
pub fn feasibility_lhs(eps: f64) -> f64 {
    if eps == 1.0 {
        0.0
    } else {
        1.0 - eps + eps * eps.ln()
    }
}

pub fn epsilon_feasible(q: &BoundQuery, eps: f64, which: Estimator) -> bool {
    eps > 0.0 && eps <= 1.0 && feasibility_lhs(eps) >= q.rhs(which)
}

/// Largest feasible `epsilon`, or `None` when no `epsilon` in `(0, 1]` is feasible.
pub fn epsilon_max(q: &BoundQuery, which: Estimator) -> Option<f64> {
    let rhs = q.rhs(which);
    if rhs >= 1.0 {
        return None;
    }
    if rhs <= 0.0 {
        return Some(1.0);
    }
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if feasibility_lhs(mid) >= rhs {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo > 0.0).then_some(lo)
}

fn sums(q: &BoundQuery, eps: f64) -> (f64, f64, f64) {
    let (m, s2) = (q.m as f64, q.sigma2);
    let mut sq_eps = 0.0;
    let mut sq_one = 0.0;
    let mut lin = 0.0;
    for &l in &q.eigen.lambdas()[..q.e] {
        let d_eps = eps * m * l + s2;
        let d_one = m * l + s2;
        sq_eps += l * l / (d_eps * d_eps);
        sq_one += l * l / (d_one * d_one);
        lin += l / d_eps;
    }
    (sq_eps, sq_one, lin)
}

fn report(q: &BoundQuery, which: Estimator, eps: f64, c: BoundComponents) -> BoundReport {
    BoundReport {
        estimator: which,
        value: c.bias + c.variance + c.tail + c.kappa,
        epsilon: eps,
        feasible: true,
        e: q.e,
        m: q.m,
        alpha: q.alpha,
        sigma2: q.sigma2,
        components: c,
        tail_exact: q.eigen.tail_is_exact(),
    }
}

fn check_eps(q: &BoundQuery, eps: f64, which: Estimator) -> Result<()> {
    q.validate()?;
    if epsilon_feasible(q, eps, which) {
        Ok(())
    } else {
        Err(Error::InfeasibleEpsilon { epsilon: eps })
    }
}

pub fn bnd_a(q: &BoundQuery, eps: f64) -> Result<BoundReport> {
    check_eps(q, eps, Estimator::A)?;
    Ok(bnd_a_unchecked(q, eps))
}

fn bnd_a_unchecked(q: &BoundQuery, eps: f64) -> BoundReport {
    let (sq_eps, _, lin) = sums(q, eps);
    let tail = q.eigen.tail_sum(q.e);
    let scale = 1.0 / (1.0 - q.alpha);
    report(
        q,
        Estimator::A,
        eps,
        BoundComponents {
            bias: q.eigen.k_bound() * q.m as f64 * scale * sq_eps * tail,
            variance: q.sigma2 * scale * lin,
            tail,
            kappa: 0.0,
        },
    )
}

/// `kappa = (eps + sigma^2 / (lambda_1 M))^-4 (1 - eps)^2 (2 - eps)^2 / (1 - alpha)`.
pub fn kappa(q: &BoundQuery, eps: f64) -> f64 {
    let base = eps + q.sigma2 / (q.eigen.lambda(0) * q.m as f64);
    (1.0 - eps).powi(2) * (2.0 - eps).powi(2) / (base.powi(4) * (1.0 - q.alpha))
}

pub fn bnd_b(q: &BoundQuery, eps: f64) -> Result<BoundReport> {
    check_eps(q, eps, Estimator::B)?;
    Ok(bnd_b_unchecked(q, eps))
}

fn bnd_b_unchecked(q: &BoundQuery, eps: f64) -> BoundReport {
    let (_, sq_one, lin) = sums(q, eps);
    let tail = q.eigen.tail_sum(q.e);
    let scale = 1.0 / (1.0 - q.alpha);
    let m = q.m as f64;
    let head: f64 = q.eigen.lambdas()[..q.e].iter().sum();
    report(
        q,
        Estimator::B,
        eps,
        BoundComponents {
            bias: q.eigen.k_bound() * m * scale * sq_one * tail,
            variance: q.sigma2 * scale * lin,
            tail,
            kappa: kappa(q, eps) * (q.e as f64 * q.sigma2 / m + head),
        },
    )
}

/// Candidate `epsilon` values in increasing order: `1 - eps` log-spaced over
/// `[1e-10, 10^-1e-4]`, then `eps = 1`.
#[derive(Clone, Copy, Debug)]
pub struct EpsilonGrid {
    pub points: usize,
    /// Also try the exact feasibility boundary, found by bisection.
    pub include_boundary: bool,
}

impl Default for EpsilonGrid {
    fn default() -> Self {
        Self {
            points: 1000,
            include_boundary: true,
        }
    }
}

impl EpsilonGrid {
    pub fn candidates(&self) -> Vec<f64> {
        let n = self.points.max(2);
        let (lo, hi) = (-10.0_f64, -1e-4_f64);
        let mut out: Vec<f64> = (0..n)
            .map(|i| 1.0 - 10f64.powf(hi - (hi - lo) * i as f64 / (n - 1) as f64))
            .collect();
        out.push(1.0);
        out
    }
}

pub fn optimize_epsilon(
    q: &BoundQuery,
    which: Estimator,
    grid: &EpsilonGrid,
) -> Result<BoundReport> {
    q.validate()?;
    let Some(eps_max) = epsilon_max(q, which) else {
        return Err(Error::InfeasibleConfiguration { e: q.e, m: q.m });
    };
    let mut cands: Vec<f64> = grid
        .candidates()
        .into_iter()
        .filter(|&e| epsilon_feasible(q, e, which))
        .collect();
    if grid.include_boundary {
        cands.push(eps_max);
    }
    let eval = |eps: f64| match which {
        Estimator::A => bnd_a_unchecked(q, eps),
        Estimator::B => bnd_b_unchecked(q, eps),
    };
    cands
        .into_iter()
        .map(eval)
        .filter(|r| r.value.is_finite())
        .min_by(|a, b| a.value.total_cmp(&b.value))
        .ok_or(Error::InfeasibleConfiguration { e: q.e, m: q.m })
}

/// One row of a bound-versus-`E` curve.
#[derive(Clone, Debug, Serialize)]
pub struct BoundRow {
    #[serde(rename = "E")]
    pub e: usize,
    pub bnd_raw: f64,
    pub bnd_normalized: f64,
    pub lower_bound_normalized: f64,
    pub epsilon: f64,
    pub feasible: bool,
}

/// Bound curve over `e_range`. Rows with no feasible `epsilon` are kept
/// with `feasible = false` and NaN values.
pub fn bound_curve(
    eigen: &EigenSystem,
    e_range: &[usize],
    m: usize,
    alpha: f64,
    sigma2: f64,
    which: Estimator,
    grid: &EpsilonGrid,
) -> Result<Vec<BoundRow>> {
    let norm = eigen.tail_sum(0);
    e_range
        .par_iter()
        .map(|&e| {
            let q = BoundQuery {
                eigen,
                e,
                m,
                alpha,
                sigma2,
            };
            let lb = lower_bound(eigen, e) / norm;
            match optimize_epsilon(&q, which, grid) {
                Ok(r) => Ok(BoundRow {
                    e,
                    bnd_raw: r.value,
                    bnd_normalized: r.value / norm,
                    lower_bound_normalized: lb,
                    epsilon: r.epsilon,
                    feasible: true,
                }),
                Err(Error::InfeasibleConfiguration { .. }) => Ok(BoundRow {
                    e,
                    bnd_raw: f64::NAN,
                    bnd_normalized: f64::NAN,
                    lower_bound_normalized: lb,
                    epsilon: f64::NAN,
                    feasible: false,
                }),
                Err(err) => Err(err),
            }
        })
        .collect()
}

pub fn write_curve_csv<W: std::io::Write>(rows: &[BoundRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))
}

/// Minimizer of a feasible curve (first row on ties).
pub fn curve_argmin(rows: &[BoundRow]) -> Option<usize> {
    rows.iter()
        .filter(|r| r.feasible)
        .min_by(|a, b| a.bnd_raw.total_cmp(&b.bnd_raw))
        .map(|r| r.e)
}
