//! Choosing `α` for the directed flow.
//!
//! With `Λ` the smallest nonzero eigenvalue of `Lℓ + Lℓᵀ` minimized over both
//! networks and `K` a Lipschitz constant of `∇Ũ`, define for `r > 0`
//!
//! ```text
//! q(r) = (r⁴ + 3r² + 2) / r
//! h(r) = ½ Λ (√(q² - 4) - q) + K r² / (1 + r²)
//! ```
//!
//! `h` is negative near zero and tends to `K` at infinity. Any `β` below its
//! first root `β*` together with `α = (β² + 2)/β` makes the directed flow
//! converge on strongly connected weight-balanced digraphs.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::game::{ConcaveConvexOracle, LiftedPayoff, Side, TwoNetworkGame};
use crate::graph::{symmetric_eigenvalues, GraphError, WeightedDigraph, DEFAULT_EIGEN_TOL};
use crate::sets::{norm, StrategySet};

/// Lower end of the bracket for `β*`.
pub const R_MIN: f64 = 1e-6;
/// Cap on the doubling search for the upper end.
pub const R_MAX: f64 = 1e6;
/// Default bisection tolerance on `|h|`.
pub const DEFAULT_TOL: f64 = 1e-10;
/// Factor applied to sampled Lipschitz estimates.
pub const SAFETY_FACTOR: f64 = 1.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DesignError {
    #[error("r must be positive, got {0}")]
    NonpositiveR(f64),
    #[error("beta must be positive, got {0}")]
    NonpositiveBeta(f64),
    #[error("lambda and K must be positive, got lambda = {lambda}, K = {k}")]
    InvalidInputs { lambda: f64, k: f64 },
    #[error("no sign change of h in [{lo:e}, {hi:e}]")]
    BracketFailure { lo: f64, hi: f64 },
    #[error("beta = {beta} is not in (0, beta* = {beta_star})")]
    BetaOutOfRange { beta: f64, beta_star: f64 },
    #[error("alpha = {0} is below 2√2; no real beta exists")]
    AlphaTooSmall(f64),
    #[error("graph has a single vertex or is disconnected; L + Lᵀ has no usable nonzero eigenvalue")]
    NoSpectralGap,
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Spectral gap and Lipschitz constant feeding the design.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DesignInputs {
    pub lambda_star_min: f64,
    pub k: f64,
}

impl DesignInputs {
    pub fn new(lambda_star_min: f64, k: f64) -> Result<Self, DesignError> {
        if !(lambda_star_min > 0.0 && k > 0.0 && lambda_star_min.is_finite() && k.is_finite()) {
            return Err(DesignError::InvalidInputs {
                lambda: lambda_star_min,
                k,
            });
        }
        Ok(Self { lambda_star_min, k })
    }
}

/// `Λ_*` minimized over both networks.
pub fn lambda_star_min(g1: &WeightedDigraph, g2: &WeightedDigraph) -> Result<f64, DesignError> {
    let one = |g: &WeightedDigraph| -> Result<f64, DesignError> {
        let s = g.spectral_summary(DEFAULT_EIGEN_TOL)?;
        if s.zero_multiplicity(DEFAULT_EIGEN_TOL) != 1 {
            return Err(DesignError::NoSpectralGap);
        }
        s.lambda_star.ok_or(DesignError::NoSpectralGap)
    };
    Ok(one(g1)?.min(one(g2)?))
}

/// `√(q² - 4) - q` in the cancellation-free form `-4 / (√(q² - 4) + q)`.
fn gap_term(r: f64) -> f64 {
    let q = (r.powi(4) + 3.0 * r * r + 2.0) / r;
    let radicand = q * q - 4.0;
    debug_assert!(radicand > 0.0, "radicand {radicand} at r = {r}");
    -4.0 / (radicand.sqrt() + q)
}

/// Evaluates `h(r)`.
pub fn h(r: f64, inputs: &DesignInputs) -> Result<f64, DesignError> {
    if !(r > 0.0) {
        return Err(DesignError::NonpositiveR(r));
    }
    Ok(0.5 * inputs.lambda_star_min * gap_term(r) + inputs.k * r * r / (1.0 + r * r))
}

/// Result of the root search for `β*`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BetaStar {
    pub value: f64,
    /// More than one sign change of `h` on `[R_MIN, 10 β*]`.
    pub multimodal: bool,
}

/// Smallest positive root of `h` by doubling and bisection.
pub fn find_beta_star(inputs: &DesignInputs, tol: f64) -> Result<BetaStar, DesignError> {
    let f = |r: f64| h(r, inputs).expect("r > 0 inside the bracket");
    if f(R_MIN) >= 0.0 {
        return Err(DesignError::BracketFailure { lo: R_MIN, hi: R_MIN });
    }
    let mut lo = R_MIN;
    let mut hi = 2.0 * R_MIN;
    while f(hi) <= 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi > R_MAX {
            return Err(DesignError::BracketFailure { lo: R_MIN, hi: R_MAX });
        }
    }
    // The doubling may have stepped over several roots; a log-spaced scan of
    // [lo, hi] narrows the bracket to the first sign change.
    let scan = log_space(lo, hi, 200);
    for w in scan.windows(2) {
        if f(w[1]) > 0.0 {
            lo = w[0];
            hi = w[1];
            break;
        }
    }
    let mut mid = 0.5 * (lo + hi);
    for _ in 0..400 {
        mid = 0.5 * (lo + hi);
        let v = f(mid);
        if v.abs() < tol || hi - lo <= f64::EPSILON * mid {
            break;
        }
        if v < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }

    let points = log_space(R_MIN, 10.0 * mid, 1000);
    let changes = points
        .windows(2)
        .filter(|w| (f(w[0]) < 0.0) != (f(w[1]) < 0.0))
        .count();
    Ok(BetaStar {
        value: mid,
        multimodal: changes > 1,
    })
}

fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|k| (a + (b - a) * k as f64 / (n - 1) as f64).exp())
        .collect()
}

/// `α = (β² + 2) / β`.
pub fn alpha_from_beta(beta: f64) -> Result<f64, DesignError> {
    if !(beta > 0.0) {
        return Err(DesignError::NonpositiveBeta(beta));
    }
    Ok((beta * beta + 2.0) / beta)
}

/// Both roots of `β² - αβ + 2 = 0`, smaller first. Requires `α ≥ 2√2`.
pub fn beta_from_alpha(alpha: f64) -> Result<(f64, f64), DesignError> {
    let disc = alpha * alpha - 8.0;
    if !(disc >= 0.0) || alpha <= 0.0 {
        return Err(DesignError::AlphaTooSmall(alpha));
    }
    let s = disc.sqrt();
    // Product of the roots is 2; avoid cancellation in the small one.
    let big = 0.5 * (alpha + s);
    Ok((2.0 / big, big))
}

/// Output of the design pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DesignResult {
    pub lambda_star_min: f64,
    #[serde(rename = "K")]
    pub k: f64,
    pub beta_star: f64,
    pub beta: f64,
    pub alpha: f64,
    pub h_at_beta: f64,
    pub multimodal: bool,
}

/// Runs the design: `β*`, then `β` (default `β*/2`), then `α`.
pub fn design(inputs: &DesignInputs, beta: Option<f64>) -> Result<DesignResult, DesignError> {
    let star = find_beta_star(inputs, DEFAULT_TOL)?;
    let beta = beta.unwrap_or(0.5 * star.value);
    if !(beta > 0.0 && beta < star.value) {
        return Err(DesignError::BetaOutOfRange {
            beta,
            beta_star: star.value,
        });
    }
    Ok(DesignResult {
        lambda_star_min: inputs.lambda_star_min,
        k: inputs.k,
        beta_star: star.value,
        beta,
        alpha: alpha_from_beta(beta)?,
        h_at_beta: h(beta, inputs)?,
        multimodal: star.multimodal,
    })
}

/// Sampled Lipschitz constant of a gradient map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LipschitzEstimate {
    /// Largest observed `‖∇f(p) - ∇f(q)‖ / ‖p - q‖`.
    pub raw: f64,
    /// `raw * SAFETY_FACTOR`.
    pub safe: f64,
    pub pairs: usize,
}

/// Lower-bound estimate of the Lipschitz constant of `(∇_{x1} f, ∇_{x2} f)`
/// over `set1 × set2`.
///
/// Half of the pairs are independent uniform draws, the other half are close
/// pairs (offset of 1e-3 of the box width) that pick up local curvature.
/// Pairs where the oracle reports a domain error are skipped. This is a
/// heuristic: the safety factor is what makes it usable as an upper bound.
pub fn estimate_lipschitz(
    f: &dyn ConcaveConvexOracle,
    set1: &StrategySet,
    set2: &StrategySet,
    samples: usize,
    seed: u64,
) -> LipschitzEstimate {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grad = |x1: &[f64], x2: &[f64]| -> Option<Vec<f64>> {
        let mut g = f.grad_x1(x1, x2).ok()?;
        g.extend(f.grad_x2(x1, x2).ok()?);
        Some(g)
    };
    let nudge = |set: &StrategySet, x: &[f64], rng: &mut ChaCha8Rng| -> Vec<f64> {
        use rand::Rng;
        for _ in 0..100 {
            let y: Vec<f64> = x
                .iter()
                .zip(set.lower.iter().zip(&set.upper))
                .map(|(v, (l, u))| v + 1e-3 * (u - l) * rng.random_range(-1.0..1.0))
                .collect();
            if set.contains(&y) {
                return y;
            }
        }
        x.to_vec()
    };

    let mut raw: f64 = 0.0;
    let mut pairs = 0;
    for k in 0..samples {
        let p1 = set1.sample(&mut rng);
        let p2 = set2.sample(&mut rng);
        let (q1, q2) = if k % 2 == 0 {
            (set1.sample(&mut rng), set2.sample(&mut rng))
        } else {
            (nudge(set1, &p1, &mut rng), nudge(set2, &p2, &mut rng))
        };
        let mut dp: Vec<f64> = p1.iter().zip(&q1).map(|(a, b)| a - b).collect();
        dp.extend(p2.iter().zip(&q2).map(|(a, b)| a - b));
        let dist = norm(&dp);
        if dist == 0.0 {
            continue;
        }
        let (Some(gp), Some(gq)) = (grad(&p1, &p2), grad(&q1, &q2)) else {
            continue;
        };
        let dg: Vec<f64> = gp.iter().zip(&gq).map(|(a, b)| a - b).collect();
        raw = raw.max(norm(&dg) / dist);
        pairs += 1;
    }
    LipschitzEstimate {
        raw,
        safe: raw * SAFETY_FACTOR,
        pairs,
    }
}

/// [`estimate_lipschitz`] applied to the lifted payoff `Ũ` of a game, over
/// the stacked strategy sets.
pub fn estimate_lipschitz_k(game: &TwoNetworkGame, samples: usize, seed: u64) -> LipschitzEstimate {
    let s1 = game.strategy_set(Side::First).power(game.n1());
    let s2 = game.strategy_set(Side::Second).power(game.n2());
    estimate_lipschitz(&LiftedPayoff(game), &s1, &s2, samples, seed)
}

/// Eigenvalues of the matrix `Q̃` built from `L + Lᵀ` and `β`, ascending.
///
/// Each eigenvalue `λ` of `L + Lᵀ` contributes
/// `λ (-(β⁴+3β²+2) ± √((β⁴+3β²+2)² - 4β²)) / (2β)`; all are real.
pub fn tilde_q_spectrum(g: &WeightedDigraph, beta: f64) -> Result<Vec<f64>, DesignError> {
    if !(beta > 0.0) {
        return Err(DesignError::NonpositiveBeta(beta));
    }
    let c = beta.powi(4) + 3.0 * beta * beta + 2.0;
    let s = (c * c - 4.0 * beta * beta).sqrt();
    // (-c + s) computed as -4β² / (c + s).
    let plus = -4.0 * beta * beta / (c + s) / (2.0 * beta);
    let minus = (-c - s) / (2.0 * beta);
    let mut out = Vec::new();
    for lambda in symmetric_eigenvalues(&g.symmetrized_laplacian())? {
        out.push(lambda * plus);
        out.push(lambda * minus);
    }
    out.sort_by(|a, b| a.total_cmp(b));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::FnOracle;
    use approx::assert_relative_eq;

    fn inputs(l: f64, k: f64) -> DesignInputs {
        DesignInputs::new(l, k).unwrap()
    }

    #[test]
    fn h_limits_and_value_at_one() {
        let i = inputs(4.0, 1.0);
        let small = h(1e-4, &i).unwrap();
        assert_relative_eq!(small, -2e-4, max_relative = 1e-2);
        assert!((h(100.0, &i).unwrap() - 1.0).abs() < 1e-3);
        let want = 2.0 * (32f64.sqrt() - 6.0) + 0.5;
        assert_relative_eq!(h(1.0, &i).unwrap(), want, max_relative = 1e-14);
        assert_relative_eq!(want, -0.18629150101524, max_relative = 1e-10);
        assert!(matches!(h(0.0, &i), Err(DesignError::NonpositiveR(_))));
    }

    #[test]
    fn beta_star_regression() {
        let b = find_beta_star(&inputs(4.0, 1.0), DEFAULT_TOL).unwrap();
        assert!(b.value > 1.0 && b.value < 2.0);
        assert!(h(b.value, &inputs(4.0, 1.0)).unwrap().abs() < DEFAULT_TOL);
        assert!(!b.multimodal);
        // Frozen from an independent bisection of the closed form.
        assert_relative_eq!(b.value, 1.1933744184825859, max_relative = 1e-9);
    }

    #[test]
    fn beta_star_scales_and_fails_for_vanishing_k() {
        let a = find_beta_star(&inputs(4.0, 1.0), 1e-13).unwrap().value;
        let b = find_beta_star(&inputs(8.0, 2.0), 1e-13).unwrap().value;
        assert_relative_eq!(a, b, max_relative = 1e-10);

        // For tiny K the root sits near (Λ/K)^(1/3).
        let tiny = find_beta_star(&inputs(4.0, 1e-12), DEFAULT_TOL).unwrap().value;
        assert_relative_eq!(tiny, (4e12f64).cbrt(), max_relative = 1e-3);
        assert!(matches!(
            find_beta_star(&inputs(4.0, 1e-20), DEFAULT_TOL),
            Err(DesignError::BracketFailure { .. })
        ));
    }

    #[test]
    fn alpha_beta_relations() {
        assert_eq!(alpha_from_beta(1.0).unwrap(), 3.0);
        assert_eq!(alpha_from_beta(2.0).unwrap(), 3.0);
        assert_relative_eq!(alpha_from_beta(2f64.sqrt()).unwrap(), 8f64.sqrt(), max_relative = 1e-15);
        assert!(matches!(alpha_from_beta(0.0), Err(DesignError::NonpositiveBeta(_))));
        let (lo, hi) = beta_from_alpha(3.0).unwrap();
        assert_relative_eq!(lo, 1.0, max_relative = 1e-15);
        assert_relative_eq!(hi, 2.0, max_relative = 1e-15);
        assert!(beta_from_alpha(2.0).is_err());
    }

    #[test]
    fn design_defaults_to_half_beta_star() {
        let d = design(&inputs(4.0, 1.0), None).unwrap();
        assert_relative_eq!(d.beta, d.beta_star / 2.0);
        assert!(d.h_at_beta < 0.0);
        assert!(d.alpha >= 8f64.sqrt());
        assert!(design(&inputs(4.0, 1.0), Some(5.0)).is_err());
    }

    #[test]
    fn tilde_q_on_two_path() {
        let g = WeightedDigraph::undirected(2, &[(0, 1, 1.0)]).unwrap();
        let q = tilde_q_spectrum(&g, 1.0).unwrap();
        let s = 32f64.sqrt();
        let want = [2.0 * (-6.0 - s), 2.0 * (-6.0 + s), 0.0, 0.0];
        for (a, b) in q.iter().zip(want) {
            assert!((a - b).abs() < 1e-12, "{q:?}");
        }
        // Largest nonzero entry plus K β²/(1+β²) reproduces h(β).
        let i = inputs(4.0, 1.0);
        assert_relative_eq!(q[1] + 0.5, h(1.0, &i).unwrap(), max_relative = 1e-12);
    }

    #[test]
    fn lipschitz_of_identity_gradient() {
        let f = FnOracle::new(
            |x, y| 0.5 * (x[0] * x[0] + x[1] * x[1]) - 0.5 * y[0] * y[0],
            |x, _| x.to_vec(),
            |_, y| vec![-y[0]],
        );
        let e = estimate_lipschitz(&f, &StrategySet::cube(2, -1.0, 1.0), &StrategySet::cube(1, -1.0, 1.0), 500, 3);
        assert!(e.raw >= 0.9 && e.raw <= 1.0 + 1e-9, "{e:?}");
        assert_relative_eq!(e.safe, 1.5 * e.raw);

        let lin = FnOracle::new(|x, y| x[0] - 2.0 * y[0], |_, _| vec![1.0], |_, _| vec![-2.0]);
        let e = estimate_lipschitz(&lin, &StrategySet::cube(1, -1.0, 1.0), &StrategySet::cube(1, -1.0, 1.0), 100, 3);
        assert_eq!((e.raw, e.safe), (0.0, 0.0));
    }
}
