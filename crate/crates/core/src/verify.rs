//! Independent checks: the cocoercivity inequality for concave-convex
//! functions with Lipschitz gradient, grid-search saddles, finite-difference
//! gradient checks and sampled saddle inequalities.
//!
//! Violations are reported as data; callers decide what counts as failure.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::game::{ConcaveConvexOracle, GameError};
use crate::sets::{dot, StrategySet};

/// Largest per-network dimension accepted by [`brute_force_saddle`].
pub const MAX_GRID_DIM: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VerifyError {
    #[error("grid search needs d <= {MAX_GRID_DIM} per network, got {0}")]
    DimensionTooLarge(usize),
    #[error("grid needs at least 2 points per axis")]
    GridTooSmall,
    #[error("candidate lies outside the strategy set of network {0}")]
    OutOfBox(u8),
    #[error("no grid point of network {0} lies in its strategy set")]
    EmptyGrid(u8),
    #[error(transparent)]
    Game(#[from] GameError),
}

/// Per-sample terms of the cocoercivity inequality `lhs <= rhs`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CocoercivityReport {
    pub k: f64,
    pub lhs: Vec<f64>,
    pub rhs: Vec<f64>,
    /// `rhs - lhs`; nonnegative when the inequality holds.
    pub slack: Vec<f64>,
    pub min_slack: f64,
    /// Indices with `slack < -tol`.
    pub violations: Vec<usize>,
    pub tol: f64,
    /// Pairs skipped because the oracle rejected a point.
    pub domain_errors: usize,
}

impl CocoercivityReport {
    pub fn holds(&self) -> bool {
        self.violations.is_empty()
    }
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(p, q)| p - q).collect()
}

fn sq(a: &[f64]) -> f64 {
    dot(a, a)
}

/// Evaluates, for one pair of points,
///
/// ```text
/// lhs = (x - x')ᵀ(∇x f(x,y) - ∇x f(x',y')) + (y - y')ᵀ(∇y f(x',y') - ∇y f(x,y))
/// rhs = -1/(2K) [ ‖∇x f(x,y') - ∇x f(x',y')‖² + ‖∇y f(x',y) - ∇y f(x',y')‖²
///               + ‖∇x f(x',y) - ∇x f(x,y)‖²  + ‖∇y f(x,y') - ∇y f(x,y)‖² ]
/// ```
pub fn cocoercivity_terms(
    f: &dyn ConcaveConvexOracle,
    k: f64,
    (x, y): (&[f64], &[f64]),
    (xp, yp): (&[f64], &[f64]),
) -> Result<(f64, f64), GameError> {
    let gx_xy = f.grad_x1(x, y)?;
    let gy_xy = f.grad_x2(x, y)?;
    let gx_pp = f.grad_x1(xp, yp)?;
    let gy_pp = f.grad_x2(xp, yp)?;
    let gx_xyp = f.grad_x1(x, yp)?;
    let gy_xyp = f.grad_x2(x, yp)?;
    let gx_pxy = f.grad_x1(xp, y)?;
    let gy_pxy = f.grad_x2(xp, y)?;

    let lhs = dot(&sub(x, xp), &sub(&gx_xy, &gx_pp)) + dot(&sub(y, yp), &sub(&gy_pp, &gy_xy));
    let rhs = -(sq(&sub(&gx_xyp, &gx_pp))
        + sq(&sub(&gy_pxy, &gy_pp))
        + sq(&sub(&gx_pxy, &gx_xy))
        + sq(&sub(&gy_xyp, &gy_xy)))
        / (2.0 * k);
    Ok((lhs, rhs))
}

/// Samples `samples` pairs from `set1 × set2` and records the cocoercivity
/// slack of each; slack below `-tol` counts as a violation.
pub fn cocoercivity_check(
    f: &dyn ConcaveConvexOracle,
    k: f64,
    samples: usize,
    set1: &StrategySet,
    set2: &StrategySet,
    seed: u64,
    tol: f64,
) -> CocoercivityReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs: Vec<_> = (0..samples)
        .map(|_| {
            (
                set1.sample(&mut rng),
                set2.sample(&mut rng),
                set1.sample(&mut rng),
                set2.sample(&mut rng),
            )
        })
        .collect();
    let terms: Vec<_> = pairs
        .par_iter()
        .map(|(x, y, xp, yp)| cocoercivity_terms(f, k, (x, y), (xp, yp)))
        .collect();

    let mut report = CocoercivityReport {
        k,
        lhs: Vec::with_capacity(samples),
        rhs: Vec::with_capacity(samples),
        slack: Vec::with_capacity(samples),
        min_slack: f64::INFINITY,
        violations: Vec::new(),
        tol,
        domain_errors: 0,
    };
    for t in terms {
        match t {
            Ok((l, r)) => {
                let s = r - l;
                if s < -tol {
                    report.violations.push(report.slack.len());
                }
                report.min_slack = report.min_slack.min(s);
                report.lhs.push(l);
                report.rhs.push(r);
                report.slack.push(s);
            }
            Err(_) => report.domain_errors += 1,
        }
    }
    report
}

/// Worst relative error between centered differences of `f` and its
/// gradient oracles, over `points` random points kept `step` away from the
/// box faces. The error is `|fd - g| / max(1, |g|)`.
pub fn finite_diff_check(
    f: &dyn ConcaveConvexOracle,
    set1: &StrategySet,
    set2: &StrategySet,
    points: usize,
    step: f64,
    seed: u64,
) -> Result<f64, GameError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..points {
        let x = set1.sample_interior(&mut rng, 2.0 * step);
        let y = set2.sample_interior(&mut rng, 2.0 * step);
        let gx = f.grad_x1(&x, &y)?;
        let gy = f.grad_x2(&x, &y)?;
        for k in 0..x.len() {
            let (mut a, mut b) = (x.clone(), x.clone());
            a[k] += step;
            b[k] -= step;
            let fd = (f.value(&a, &y)? - f.value(&b, &y)?) / (2.0 * step);
            worst = worst.max((fd - gx[k]).abs() / gx[k].abs().max(1.0));
        }
        for k in 0..y.len() {
            let (mut a, mut b) = (y.clone(), y.clone());
            a[k] += step;
            b[k] -= step;
            let fd = (f.value(&x, &a)? - f.value(&x, &b)?) / (2.0 * step);
            worst = worst.max((fd - gy[k]).abs() / gy[k].abs().max(1.0));
        }
    }
    Ok(worst)
}

/// Grid search result. `maxmin <= minmax` always holds on a finite grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridSaddle {
    pub maxmin: f64,
    pub minmax: f64,
    /// `x1` attaining the max-min and its best response `x2`.
    pub maxmin_point: (Vec<f64>, Vec<f64>),
    /// `x2` attaining the min-max and its best response `x1`.
    pub minmax_point: (Vec<f64>, Vec<f64>),
    pub step1: Vec<f64>,
    pub step2: Vec<f64>,
}

/// Exhaustive max-min / min-max of `u` over `points`-per-axis grids of the
/// two sets (grid nodes outside the sets are dropped).
pub fn brute_force_saddle(
    u: &(dyn Fn(&[f64], &[f64]) -> Result<f64, GameError> + Sync),
    set1: &StrategySet,
    set2: &StrategySet,
    points: usize,
) -> Result<GridSaddle, VerifyError> {
    for set in [set1, set2] {
        if set.dim() > MAX_GRID_DIM {
            return Err(VerifyError::DimensionTooLarge(set.dim()));
        }
    }
    if points < 2 {
        return Err(VerifyError::GridTooSmall);
    }
    let g1 = set1.grid(points);
    let g2 = set2.grid(points);
    if g1.is_empty() {
        return Err(VerifyError::EmptyGrid(1));
    }
    if g2.is_empty() {
        return Err(VerifyError::EmptyGrid(2));
    }
    let table: Vec<Vec<f64>> = g1
        .par_iter()
        .map(|x| g2.iter().map(|y| u(x, y)).collect::<Result<Vec<_>, _>>())
        .collect::<Result<_, _>>()?;

    // max over rows of the row minimum
    let mut maxmin = (f64::NEG_INFINITY, 0, 0);
    for (i, row) in table.iter().enumerate() {
        let (j, v) = argbest(row, |a, b| a < b);
        if v > maxmin.0 {
            maxmin = (v, i, j);
        }
    }
    // min over columns of the column maximum
    let mut minmax = (f64::INFINITY, 0, 0);
    for j in 0..g2.len() {
        let col: Vec<f64> = table.iter().map(|r| r[j]).collect();
        let (i, v) = argbest(&col, |a, b| a > b);
        if v < minmax.0 {
            minmax = (v, i, j);
        }
    }
    Ok(GridSaddle {
        maxmin: maxmin.0,
        minmax: minmax.0,
        maxmin_point: (g1[maxmin.1].clone(), g2[maxmin.2].clone()),
        minmax_point: (g1[minmax.1].clone(), g2[minmax.2].clone()),
        step1: set1.grid_step(points),
        step2: set2.grid_step(points),
    })
}

fn argbest(v: &[f64], better: impl Fn(f64, f64) -> bool) -> (usize, f64) {
    let mut best = (0, v[0]);
    for (k, &x) in v.iter().enumerate().skip(1) {
        if better(x, best.1) {
            best = (k, x);
        }
    }
    best
}

/// Largest sampled violation of `u(x1, x2*) <= u(x1*, x2*) <= u(x1*, x2)`.
pub fn saddle_inequality_check(
    u: &dyn Fn(&[f64], &[f64]) -> Result<f64, GameError>,
    candidate: (&[f64], &[f64]),
    set1: &StrategySet,
    set2: &StrategySet,
    samples: usize,
    seed: u64,
) -> Result<f64, VerifyError> {
    let (x1, x2) = candidate;
    if !set1.contains_tol(x1, 1e-9) {
        return Err(VerifyError::OutOfBox(1));
    }
    if !set2.contains_tol(x2, 1e-9) {
        return Err(VerifyError::OutOfBox(2));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let center = u(x1, x2)?;
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..samples {
        let a = set1.sample(&mut rng);
        let b = set2.sample(&mut rng);
        worst = worst.max(u(&a, x2)? - center).max(center - u(x1, &b)?);
    }
    Ok(worst.max(0.0))
}

/// Checks `j(x) <= j* - ‖∇j(x)‖² / (2M)` for a concave `j` with
/// `M`-Lipschitz gradient at `samples` random points of `set`, with `j*`
/// taken from a grid maximization. Returns the smallest slack
/// `j* - ‖∇j‖²/(2M) - j(x)`.
pub fn descent_bound_check(
    j: &dyn Fn(&[f64]) -> f64,
    grad: &dyn Fn(&[f64]) -> Vec<f64>,
    m: f64,
    set: &StrategySet,
    grid_points: usize,
    samples: usize,
    seed: u64,
) -> f64 {
    let j_star = set
        .grid(grid_points)
        .iter()
        .map(|x| j(x))
        .fold(f64::NEG_INFINITY, f64::max);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..samples)
        .map(|_| {
            let x = set.sample(&mut rng);
            let g = grad(&x);
            j_star - dot(&g, &g) / (2.0 * m) - j(&x)
        })
        .fold(f64::INFINITY, f64::min)
}
