//! Compact strategy sets: an axis-aligned box optionally cut by linear
//! budget constraints `a^T x <= b`.

use rand::Rng;
use serde::{Deserialize, Serialize};

const MAX_REJECTIONS: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearConstraint {
    pub coeffs: Vec<f64>,
    pub bound: f64,
}

impl LinearConstraint {
    pub fn holds(&self, x: &[f64], tol: f64) -> bool {
        dot(&self.coeffs, x) <= self.bound + tol
    }
}

/// Box `[lower, upper]` intersected with zero or more half-spaces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySet {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    #[serde(default)]
    pub constraints: Vec<LinearConstraint>,
    /// Number of identical independent blocks (set by [`StrategySet::power`]);
    /// sampling draws each block separately.
    #[serde(default = "one_block")]
    blocks: usize,
}

fn one_block() -> usize {
    1
}

impl StrategySet {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        assert_eq!(lower.len(), upper.len(), "box bounds differ in length");
        assert!(
            lower.iter().zip(&upper).all(|(l, u)| l <= u),
            "box lower bound exceeds upper bound"
        );
        Self {
            lower,
            upper,
            constraints: Vec::new(),
            blocks: 1,
        }
    }

    /// Cube `[lo, hi]^dim`.
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Self {
        Self::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn with_constraint(mut self, coeffs: Vec<f64>, bound: f64) -> Self {
        assert_eq!(coeffs.len(), self.dim());
        self.constraints.push(LinearConstraint { coeffs, bound });
        // The new constraint may couple blocks.
        self.blocks = 1;
        self
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.contains_tol(x, 1e-12)
    }

    pub fn contains_tol(&self, x: &[f64], tol: f64) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| *v >= l - tol && *v <= u + tol)
            && self.constraints.iter().all(|c| c.holds(x, tol))
    }

    /// Uniform sample from the set (rejection against the constraints).
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        if self.blocks > 1 {
            let mut out = Vec::with_capacity(self.dim());
            for b in 0..self.blocks {
                out.extend(self.block(b).sample(rng));
            }
            return out;
        }
        for _ in 0..MAX_REJECTIONS {
            let x: Vec<f64> = self
                .lower
                .iter()
                .zip(&self.upper)
                .map(|(l, u)| if l == u { *l } else { rng.random_range(*l..*u) })
                .collect();
            if self.contains(&x) {
                return x;
            }
        }
        panic!("strategy set has negligible volume inside its bounding box");
    }

    /// Sample shrunk toward the box center so that finite-difference stencils
    /// of width `margin` stay inside the bounding box.
    pub fn sample_interior<R: Rng + ?Sized>(&self, rng: &mut R, margin: f64) -> Vec<f64> {
        let shrunk = StrategySet {
            lower: self
                .lower
                .iter()
                .zip(&self.upper)
                .map(|(l, u)| (l + margin).min((l + u) / 2.0))
                .collect(),
            upper: self
                .lower
                .iter()
                .zip(&self.upper)
                .map(|(l, u)| (u - margin).max((l + u) / 2.0))
                .collect(),
            constraints: self
                .constraints
                .iter()
                .map(|c| LinearConstraint {
                    coeffs: c.coeffs.clone(),
                    bound: c.bound - margin * c.coeffs.iter().map(|a| a.abs()).sum::<f64>(),
                })
                .collect(),
            blocks: self.blocks,
        };
        shrunk.sample(rng)
    }

    /// Block `b` of a set built by [`StrategySet::power`].
    fn block(&self, b: usize) -> StrategySet {
        let d = self.dim() / self.blocks;
        let per = self.constraints.len() / self.blocks;
        StrategySet {
            lower: self.lower[b * d..(b + 1) * d].to_vec(),
            upper: self.upper[b * d..(b + 1) * d].to_vec(),
            constraints: self.constraints[b * per..(b + 1) * per]
                .iter()
                .map(|c| LinearConstraint {
                    coeffs: c.coeffs[b * d..(b + 1) * d].to_vec(),
                    bound: c.bound,
                })
                .collect(),
            blocks: 1,
        }
    }

    /// `n`-fold product, each block carrying its own copy of the constraints.
    pub fn power(&self, n: usize) -> StrategySet {
        let d = self.dim();
        let mut constraints = Vec::with_capacity(n * self.constraints.len());
        for block in 0..n {
            for c in &self.constraints {
                let mut coeffs = vec![0.0; n * d];
                coeffs[block * d..(block + 1) * d].copy_from_slice(&c.coeffs);
                constraints.push(LinearConstraint {
                    coeffs,
                    bound: c.bound,
                });
            }
        }
        StrategySet {
            lower: self.lower.repeat(n),
            upper: self.upper.repeat(n),
            constraints,
            blocks: self.blocks * n,
        }
    }

    /// Regular grid with `points` nodes per axis, restricted to the set.
    pub fn grid(&self, points: usize) -> Vec<Vec<f64>> {
        assert!(points >= 2);
        let d = self.dim();
        let axes: Vec<Vec<f64>> = (0..d)
            .map(|k| {
                let (l, u) = (self.lower[k], self.upper[k]);
                (0..points)
                    .map(|i| l + (u - l) * i as f64 / (points - 1) as f64)
                    .collect()
            })
            .collect();
        let mut out = Vec::new();
        let mut idx = vec![0usize; d];
        loop {
            let p: Vec<f64> = (0..d).map(|k| axes[k][idx[k]]).collect();
            if self.contains(&p) {
                out.push(p);
            }
            let mut k = 0;
            loop {
                if k == d {
                    return out;
                }
                idx[k] += 1;
                if idx[k] < points {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
        }
    }

    /// Grid spacing along each axis for `points` nodes per axis.
    pub fn grid_step(&self, points: usize) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| (u - l) / (points - 1) as f64)
            .collect()
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}
