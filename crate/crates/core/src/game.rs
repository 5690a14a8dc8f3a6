//! Two-network zero-sum games.
//!
//! Network `Σ1` (agents `v_1..v_n1`, states in `R^d1`) maximizes the payoff and
//! network `Σ2` (agents `w_1..w_n2`, states in `R^d2`) minimizes it. Each agent
//! keeps an estimate of its own network's state and evaluates an
//! [`ExtendedPayoff`] of that estimate and the stack of estimates held by the
//! opposing network. Summing the extended payoffs over a network gives the
//! aggregate payoffs `Ũ1(x1, x2) = Σ_i f̃_1^i(x1^i, x2)` and
//! `Ũ2(x1, x2) = Σ_j f̃_2^j(x1, x2^j)`. A game is *liftable* when the two
//! aggregates coincide; the saddle dynamics need that common function `Ũ`.
//!
//! Stacked vectors are laid out agent by agent: block `i` of `x1` is
//! `x1[i*d1..(i+1)*d1]`.

use std::fmt;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::graph::WeightedDigraph;
use crate::sets::{norm, StrategySet};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GameError {
    #[error("{what}: expected length {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("game is not declared liftable (Ũ1 = Ũ2 not asserted)")]
    NotLiftable,
    #[error("point lies outside the strategy set of network {0}")]
    OutOfBox(u8),
    #[error("payoff evaluated outside its domain: {0}")]
    Domain(String),
    #[error("invalid game: {0}")]
    Invalid(String),
}

/// Which network an operation refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Side {
    /// `Σ1`, the maximizing network.
    First,
    /// `Σ2`, the minimizing network.
    Second,
}

impl Side {
    pub fn index(self) -> u8 {
        match self {
            Side::First => 1,
            Side::Second => 2,
        }
    }
}

/// A payoff term `f(x1, x2)` that is concave in `x1` and convex in `x2`.
///
/// Nonsmooth payoffs return a single subgradient selection from the
/// gradient methods and report `is_smooth() == false`. Implementations must
/// be re-entrant.
pub trait ConcaveConvexOracle: Send + Sync {
    fn value(&self, x1: &[f64], x2: &[f64]) -> Result<f64, GameError>;
    fn grad_x1(&self, x1: &[f64], x2: &[f64]) -> Result<Vec<f64>, GameError>;
    fn grad_x2(&self, x1: &[f64], x2: &[f64]) -> Result<Vec<f64>, GameError>;
    fn is_smooth(&self) -> bool {
        true
    }
}

type ValueFn = dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync;
type GradFn = dyn Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync;

/// [`ConcaveConvexOracle`] assembled from closures.
#[derive(Clone)]
pub struct FnOracle {
    value: Arc<ValueFn>,
    grad_x1: Arc<GradFn>,
    grad_x2: Arc<GradFn>,
    smooth: bool,
}

impl FnOracle {
    pub fn new(
        value: impl Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
        grad_x1: impl Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static,
        grad_x2: impl Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            value: Arc::new(value),
            grad_x1: Arc::new(grad_x1),
            grad_x2: Arc::new(grad_x2),
            smooth: true,
        }
    }

    /// Marks the gradients as subgradient selections.
    pub fn nonsmooth(mut self) -> Self {
        self.smooth = false;
        self
    }
}

impl fmt::Debug for FnOracle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnOracle").field("smooth", &self.smooth).finish()
    }
}

impl ConcaveConvexOracle for FnOracle {
    fn value(&self, x1: &[f64], x2: &[f64]) -> Result<f64, GameError> {
        Ok((self.value)(x1, x2))
    }
    fn grad_x1(&self, x1: &[f64], x2: &[f64]) -> Result<Vec<f64>, GameError> {
        Ok((self.grad_x1)(x1, x2))
    }
    fn grad_x2(&self, x1: &[f64], x2: &[f64]) -> Result<Vec<f64>, GameError> {
        Ok((self.grad_x2)(x1, x2))
    }
    fn is_smooth(&self) -> bool {
        self.smooth
    }
}

/// Per-agent payoff over the agent's own estimate and the opposing network's
/// estimate stack.
///
/// Arguments are always ordered `(own, opponents)`, for both networks. For an
/// agent of `Σ2` that means `(x2^j, x1)`.
pub trait ExtendedPayoff: Send + Sync {
    /// `f̃(own, opponents)`; `opponents` has length `n' * d'`.
    fn value(&self, own: &[f64], opponents: &[f64]) -> Result<f64, GameError>;
    /// Gradient (or subgradient selection) with respect to `own`.
    fn grad_own(&self, own: &[f64], opponents: &[f64]) -> Result<Vec<f64>, GameError>;
    /// The underlying payoff `f(own, opponent)` with a single opponent state.
    fn base_value(&self, own: &[f64], opponent: &[f64]) -> Result<f64, GameError>;
    fn is_smooth(&self) -> bool {
        true
    }
}

type ExtValueFn = dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync;
type ExtGradFn = dyn Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync;

/// [`ExtendedPayoff`] assembled from closures.
#[derive(Clone)]
pub struct FnPayoff {
    value: Arc<ExtValueFn>,
    grad: Arc<ExtGradFn>,
    base: Arc<ExtValueFn>,
}

impl FnPayoff {
    pub fn new(
        value: impl Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
        grad: impl Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static,
        base: impl Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            value: Arc::new(value),
            grad: Arc::new(grad),
            base: Arc::new(base),
        }
    }

    /// The payoff that is identically zero.
    pub fn zero(d_own: usize) -> Self {
        Self::new(|_, _| 0.0, move |_, _| vec![0.0; d_own], |_, _| 0.0)
    }
}

impl ExtendedPayoff for FnPayoff {
    fn value(&self, own: &[f64], opponents: &[f64]) -> Result<f64, GameError> {
        Ok((self.value)(own, opponents))
    }
    fn grad_own(&self, own: &[f64], opponents: &[f64]) -> Result<Vec<f64>, GameError> {
        Ok((self.grad)(own, opponents))
    }
    fn base_value(&self, own: &[f64], opponent: &[f64]) -> Result<f64, GameError> {
        Ok((self.base)(own, opponent))
    }
}

/// Bipartite out-neighbor lists between the two networks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EngagementGraph {
    /// For each `v_i`, the agents of `Σ2` whose estimates it receives.
    first_to_second: Vec<Vec<usize>>,
    /// For each `w_j`, the agents of `Σ1` whose estimates it receives.
    second_to_first: Vec<Vec<usize>>,
}

impl EngagementGraph {
    pub fn new(
        first_to_second: Vec<Vec<usize>>,
        second_to_first: Vec<Vec<usize>>,
    ) -> Result<Self, GameError> {
        let (n1, n2) = (first_to_second.len(), second_to_first.len());
        for (i, out) in first_to_second.iter().enumerate() {
            if out.is_empty() {
                return Err(GameError::Invalid(format!("agent v{i} has no out-neighbor")));
            }
            if out.iter().any(|&j| j >= n2) {
                return Err(GameError::Invalid(format!("agent v{i} observes a missing agent")));
            }
        }
        for (j, out) in second_to_first.iter().enumerate() {
            if out.is_empty() {
                return Err(GameError::Invalid(format!("agent w{j} has no out-neighbor")));
            }
            if out.iter().any(|&i| i >= n1) {
                return Err(GameError::Invalid(format!("agent w{j} observes a missing agent")));
            }
        }
        let sorted = |mut v: Vec<Vec<usize>>| {
            for l in &mut v {
                l.sort_unstable();
                l.dedup();
            }
            v
        };
        Ok(Self {
            first_to_second: sorted(first_to_second),
            second_to_first: sorted(second_to_first),
        })
    }

    /// `v_i <-> w_i` for `n` agents on each side.
    pub fn one_to_one(n: usize) -> Self {
        let lists: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        Self::new(lists.clone(), lists).expect("one-to-one engagement is valid")
    }

    /// Symmetric engagement from a list of `(i, j)` pairs, `v_i <-> w_j`.
    pub fn from_pairs(n1: usize, n2: usize, pairs: &[(usize, usize)]) -> Result<Self, GameError> {
        let mut a = vec![Vec::new(); n1];
        let mut b = vec![Vec::new(); n2];
        for &(i, j) in pairs {
            if i >= n1 || j >= n2 {
                return Err(GameError::Invalid(format!("pair ({i}, {j}) out of range")));
            }
            a[i].push(j);
            b[j].push(i);
        }
        Self::new(a, b)
    }

    /// Pairs `(k mod n1, k mod n2)` for `k < max(n1, n2)`: every agent
    /// engages at least one opponent.
    pub fn round_robin(n1: usize, n2: usize) -> Self {
        let pairs: Vec<_> = (0..n1.max(n2)).map(|k| (k % n1, k % n2)).collect();
        Self::from_pairs(n1, n2, &pairs).expect("round-robin engagement is valid")
    }

    pub fn n1(&self) -> usize {
        self.first_to_second.len()
    }

    pub fn n2(&self) -> usize {
        self.second_to_first.len()
    }

    /// Opposing agents observed by agent `agent` of network `side`.
    pub fn out_neighbors(&self, side: Side, agent: usize) -> &[usize] {
        match side {
            Side::First => &self.first_to_second[agent],
            Side::Second => &self.second_to_first[agent],
        }
    }

    /// Pairs `(i, j)` present in both directions.
    pub fn mutual_pairs(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (i, js) in self.first_to_second.iter().enumerate() {
            for &j in js {
                if self.second_to_first[j].contains(&i) {
                    out.push((i, j));
                }
            }
        }
        out
    }
}

/// A two-network zero-sum game with per-agent extended payoffs.
#[derive(Clone)]
pub struct TwoNetworkGame {
    g1: WeightedDigraph,
    g2: WeightedDigraph,
    engagement: EngagementGraph,
    d1: usize,
    d2: usize,
    payoffs1: Vec<Arc<dyn ExtendedPayoff>>,
    payoffs2: Vec<Arc<dyn ExtendedPayoff>>,
    set1: StrategySet,
    set2: StrategySet,
    liftable: bool,
}

impl fmt::Debug for TwoNetworkGame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TwoNetworkGame")
            .field("n1", &self.n1())
            .field("n2", &self.n2())
            .field("d1", &self.d1)
            .field("d2", &self.d2)
            .field("liftable", &self.liftable)
            .finish()
    }
}

impl TwoNetworkGame {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        g1: WeightedDigraph,
        g2: WeightedDigraph,
        engagement: EngagementGraph,
        set1: StrategySet,
        set2: StrategySet,
        payoffs1: Vec<Arc<dyn ExtendedPayoff>>,
        payoffs2: Vec<Arc<dyn ExtendedPayoff>>,
    ) -> Result<Self, GameError> {
        let (n1, n2) = (g1.vertex_count(), g2.vertex_count());
        let check = |what, expected, got| {
            if expected == got {
                Ok(())
            } else {
                Err(GameError::DimensionMismatch {
                    what,
                    expected,
                    got,
                })
            }
        };
        check("payoffs of network 1", n1, payoffs1.len())?;
        check("payoffs of network 2", n2, payoffs2.len())?;
        check("engagement agents of network 1", n1, engagement.n1())?;
        check("engagement agents of network 2", n2, engagement.n2())?;
        if set1.dim() == 0 || set2.dim() == 0 {
            return Err(GameError::Invalid("state dimensions must be positive".into()));
        }
        Ok(Self {
            g1,
            g2,
            engagement,
            d1: set1.dim(),
            d2: set2.dim(),
            payoffs1,
            payoffs2,
            set1,
            set2,
            liftable: false,
        })
    }

    /// Declares `Ũ1 = Ũ2`. Use [`TwoNetworkGame::check_extension_properties`]
    /// to confirm the declaration by sampling.
    pub fn declare_liftable(mut self) -> Self {
        self.liftable = true;
        self
    }

    pub fn is_liftable(&self) -> bool {
        self.liftable
    }

    pub fn graph(&self, side: Side) -> &WeightedDigraph {
        match side {
            Side::First => &self.g1,
            Side::Second => &self.g2,
        }
    }

    pub fn engagement(&self) -> &EngagementGraph {
        &self.engagement
    }

    pub fn n1(&self) -> usize {
        self.g1.vertex_count()
    }

    pub fn n2(&self) -> usize {
        self.g2.vertex_count()
    }

    pub fn d1(&self) -> usize {
        self.d1
    }

    pub fn d2(&self) -> usize {
        self.d2
    }

    /// `(n, d)` of a network.
    pub fn shape(&self, side: Side) -> (usize, usize) {
        match side {
            Side::First => (self.n1(), self.d1),
            Side::Second => (self.n2(), self.d2),
        }
    }

    pub fn strategy_set(&self, side: Side) -> &StrategySet {
        match side {
            Side::First => &self.set1,
            Side::Second => &self.set2,
        }
    }

    pub fn payoff(&self, side: Side, agent: usize) -> &dyn ExtendedPayoff {
        match side {
            Side::First => self.payoffs1[agent].as_ref(),
            Side::Second => self.payoffs2[agent].as_ref(),
        }
    }

    fn check_stacks(&self, bx1: &[f64], bx2: &[f64]) -> Result<(), GameError> {
        if bx1.len() != self.n1() * self.d1 {
            return Err(GameError::DimensionMismatch {
                what: "stack x1",
                expected: self.n1() * self.d1,
                got: bx1.len(),
            });
        }
        if bx2.len() != self.n2() * self.d2 {
            return Err(GameError::DimensionMismatch {
                what: "stack x2",
                expected: self.n2() * self.d2,
                got: bx2.len(),
            });
        }
        Ok(())
    }

    /// `Ũ1` (side 1) or `Ũ2` (side 2) at the stacked estimates.
    pub fn aggregate_u(&self, side: Side, bx1: &[f64], bx2: &[f64]) -> Result<f64, GameError> {
        self.check_stacks(bx1, bx2)?;
        let mut total = 0.0;
        match side {
            Side::First => {
                for (i, f) in self.payoffs1.iter().enumerate() {
                    total += f.value(&bx1[i * self.d1..(i + 1) * self.d1], bx2)?;
                }
            }
            Side::Second => {
                for (j, f) in self.payoffs2.iter().enumerate() {
                    total += f.value(&bx2[j * self.d2..(j + 1) * self.d2], bx1)?;
                }
            }
        }
        Ok(total)
    }

    /// Stack of per-agent own-gradients: `∇_{x1} Ũ1` for side 1 and
    /// `∇_{x2} Ũ2` for side 2.
    pub fn aggregate_grad(
        &self,
        side: Side,
        bx1: &[f64],
        bx2: &[f64],
    ) -> Result<Vec<f64>, GameError> {
        let mut out = vec![0.0; self.shape(side).0 * self.shape(side).1];
        self.aggregate_grad_into(side, bx1, bx2, &mut out)?;
        Ok(out)
    }

    pub(crate) fn aggregate_grad_into(
        &self,
        side: Side,
        bx1: &[f64],
        bx2: &[f64],
        out: &mut [f64],
    ) -> Result<(), GameError> {
        self.check_stacks(bx1, bx2)?;
        let (payoffs, own, other, d) = match side {
            Side::First => (&self.payoffs1, bx1, bx2, self.d1),
            Side::Second => (&self.payoffs2, bx2, bx1, self.d2),
        };
        for (i, f) in payoffs.iter().enumerate() {
            let g = f.grad_own(&own[i * d..(i + 1) * d], other)?;
            if g.len() != d {
                return Err(GameError::DimensionMismatch {
                    what: "payoff gradient",
                    expected: d,
                    got: g.len(),
                });
            }
            out[i * d..(i + 1) * d].copy_from_slice(&g);
        }
        Ok(())
    }

    /// `F1(x1, z1, x2) = -Ũ + x1ᵀ𝐋1 z1 + ½ x1ᵀ𝐋1 x1` for side 1 and
    /// `F2(x2, z2, x1) = Ũ + x2ᵀ𝐋2 z2 + ½ x2ᵀ𝐋2 x2` for side 2.
    pub fn evaluate_f(
        &self,
        side: Side,
        bx: &[f64],
        bz: &[f64],
        bx_other: &[f64],
    ) -> Result<f64, GameError> {
        if !self.liftable {
            return Err(GameError::NotLiftable);
        }
        let (n, d) = self.shape(side);
        if bz.len() != n * d {
            return Err(GameError::DimensionMismatch {
                what: "stack z",
                expected: n * d,
                got: bz.len(),
            });
        }
        let (u, sign) = match side {
            Side::First => (self.aggregate_u(Side::First, bx, bx_other)?, -1.0),
            Side::Second => (self.aggregate_u(Side::First, bx_other, bx)?, 1.0),
        };
        let g = self.graph(side);
        let mut lz = vec![0.0; n * d];
        let mut lx = vec![0.0; n * d];
        g.apply_lifted(d, bz, &mut lz);
        g.apply_lifted(d, bx, &mut lx);
        let xlz: f64 = bx.iter().zip(&lz).map(|(a, b)| a * b).sum();
        let xlx: f64 = bx.iter().zip(&lx).map(|(a, b)| a * b).sum();
        Ok(sign * u + xlz + 0.5 * xlx)
    }

    /// Norms of `∇_{x1} U` and `∇_{x2} U` at the network-level point `(x1, x2)`.
    pub fn nash_residual(&self, x1: &[f64], x2: &[f64]) -> Result<(f64, f64), GameError> {
        if !self.set1.contains_tol(x1, 1e-9) {
            return Err(GameError::OutOfBox(1));
        }
        if !self.set2.contains_tol(x2, 1e-9) {
            return Err(GameError::OutOfBox(2));
        }
        let (g1, g2) = self.reduced_gradient(x1, x2)?;
        Ok((norm(&g1), norm(&g2)))
    }

    /// `(∇_{x1} U, ∇_{x2} U)` at consensus, as block sums of the aggregate
    /// gradients evaluated on `(1 ⊗ x1, 1 ⊗ x2)`.
    pub fn reduced_gradient(
        &self,
        x1: &[f64],
        x2: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>), GameError> {
        let bx1 = x1.repeat(self.n1());
        let bx2 = x2.repeat(self.n2());
        let s1 = block_sum(&self.aggregate_grad(Side::First, &bx1, &bx2)?, self.d1);
        let s2 = block_sum(&self.aggregate_grad(Side::Second, &bx1, &bx2)?, self.d2);
        Ok((s1, s2))
    }

    /// `U(x1, x2) = Σ_i f_1^i(x1, x2)` from the base payoffs of network 1.
    pub fn reduced_value(&self, x1: &[f64], x2: &[f64]) -> Result<f64, GameError> {
        self.payoffs1
            .iter()
            .map(|f| f.base_value(x1, x2))
            .sum::<Result<f64, _>>()
    }

    /// Samples the two extension properties for every agent, plus the
    /// consensus collapse and the lift identity `Ũ1 = Ũ2`.
    pub fn check_extension_properties(&self, samples: usize, seed: u64) -> ExtensionReport {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (n1, n2) = (self.n1(), self.n2());
        let stack1 = self.set1.power(n1);
        let stack2 = self.set2.power(n2);
        let mut report = ExtensionReport {
            consensus_first: vec![0.0; n1],
            consensus_second: vec![0.0; n2],
            locality_first: vec![0.0; n1],
            locality_second: vec![0.0; n2],
            collapse: 0.0,
            lift_gap: 0.0,
            domain_errors: 0,
        };

        for _ in 0..samples {
            let x1 = self.set1.sample(&mut rng);
            let x2 = self.set2.sample(&mut rng);
            let bx1 = stack1.sample(&mut rng);
            let bx2 = stack2.sample(&mut rng);
            let bx1b = stack1.sample(&mut rng);
            let bx2b = stack2.sample(&mut rng);
            let c1 = x1.repeat(n1);
            let c2 = x2.repeat(n2);

            for side in [Side::First, Side::Second] {
                let (n, own_set, opp_consensus, opp_single, opp_a, opp_b, d_opp) = match side {
                    Side::First => (n1, &self.set1, &c2, &x2, &bx2, &bx2b, self.d2),
                    Side::Second => (n2, &self.set2, &c1, &x1, &bx1, &bx1b, self.d1),
                };
                let own_single = match side {
                    Side::First => &x1,
                    Side::Second => &x2,
                };
                for agent in 0..n {
                    let f = self.payoff(side, agent);
                    // Consensus restriction.
                    match (f.value(own_single, opp_consensus), f.base_value(own_single, opp_single)) {
                        (Ok(a), Ok(b)) => {
                            let slot = match side {
                                Side::First => &mut report.consensus_first[agent],
                                Side::Second => &mut report.consensus_second[agent],
                            };
                            *slot = slot.max((a - b).abs());
                        }
                        _ => report.domain_errors += 1,
                    }
                    // Locality: overwrite every unobserved block with fresh values.
                    let own = own_set.sample(&mut rng);
                    let observed = self.engagement.out_neighbors(side, agent);
                    let mut perturbed = opp_a.clone();
                    for k in 0..perturbed.len() / d_opp {
                        if !observed.contains(&k) {
                            perturbed[k * d_opp..(k + 1) * d_opp]
                                .copy_from_slice(&opp_b[k * d_opp..(k + 1) * d_opp]);
                        }
                    }
                    match (f.value(&own, opp_a), f.value(&own, &perturbed)) {
                        (Ok(a), Ok(b)) => {
                            let slot = match side {
                                Side::First => &mut report.locality_first[agent],
                                Side::Second => &mut report.locality_second[agent],
                            };
                            *slot = slot.max((a - b).abs());
                        }
                        _ => report.domain_errors += 1,
                    }
                }
            }

            match (
                self.aggregate_u(Side::First, &c1, &c2),
                self.aggregate_u(Side::Second, &c1, &c2),
                self.reduced_value(&x1, &x2),
            ) {
                (Ok(u1), Ok(u2), Ok(u)) => {
                    report.collapse = report.collapse.max((u1 - u).abs()).max((u2 - u).abs());
                }
                _ => report.domain_errors += 1,
            }
            match (
                self.aggregate_u(Side::First, &bx1, &bx2),
                self.aggregate_u(Side::Second, &bx1, &bx2),
            ) {
                (Ok(u1), Ok(u2)) => {
                    let scale = 1.0f64.max(u1.abs()).max(u2.abs());
                    report.lift_gap = report.lift_gap.max((u1 - u2).abs() / scale);
                }
                _ => report.domain_errors += 1,
            }
        }
        report
    }
}

/// Worst violations found by [`TwoNetworkGame::check_extension_properties`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExtensionReport {
    /// `max |f̃(x, 1⊗y) - f(x, y)|` per agent of `Σ1`.
    pub consensus_first: Vec<f64>,
    pub consensus_second: Vec<f64>,
    /// `max |f̃(x, y) - f̃(x, y')|` where `y'` differs from `y` only on
    /// unobserved agents.
    pub locality_first: Vec<f64>,
    pub locality_second: Vec<f64>,
    /// `max |Ũ_ℓ(1⊗x1, 1⊗x2) - U(x1, x2)|`.
    pub collapse: f64,
    /// Relative `max |Ũ1 - Ũ2|` on non-consensus stacks.
    pub lift_gap: f64,
    pub domain_errors: usize,
}

impl ExtensionReport {
    pub fn max_consensus_violation(&self) -> f64 {
        self.consensus_first
            .iter()
            .chain(&self.consensus_second)
            .fold(0.0, |m, v| m.max(*v))
    }

    pub fn max_locality_violation(&self) -> f64 {
        self.locality_first
            .iter()
            .chain(&self.locality_second)
            .fold(0.0, |m, v| m.max(*v))
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.domain_errors == 0
            && self.max_consensus_violation() <= tol
            && self.max_locality_violation() <= tol
            && self.collapse <= tol
    }
}

/// Sum of the `d`-blocks of a stacked vector, `(1ᵀ ⊗ I_d) v`.
pub fn block_sum(v: &[f64], d: usize) -> Vec<f64> {
    let mut out = vec![0.0; d];
    for block in v.chunks_exact(d) {
        for (o, b) in out.iter_mut().zip(block) {
            *o += b;
        }
    }
    out
}

/// The lifted payoff `Ũ` seen as a concave-convex function of the two stacks.
/// Gradients come from the own-gradients of each network's agents, so the
/// game must be liftable.
#[derive(Debug, Clone, Copy)]
pub struct LiftedPayoff<'a>(pub &'a TwoNetworkGame);

impl ConcaveConvexOracle for LiftedPayoff<'_> {
    fn value(&self, x1: &[f64], x2: &[f64]) -> Result<f64, GameError> {
        self.0.aggregate_u(Side::First, x1, x2)
    }
    fn grad_x1(&self, x1: &[f64], x2: &[f64]) -> Result<Vec<f64>, GameError> {
        self.0.aggregate_grad(Side::First, x1, x2)
    }
    fn grad_x2(&self, x1: &[f64], x2: &[f64]) -> Result<Vec<f64>, GameError> {
        self.0.aggregate_grad(Side::Second, x1, x2)
    }
}

/// The network-level payoff `U(x1, x2)`.
#[derive(Debug, Clone, Copy)]
pub struct ReducedPayoff<'a>(pub &'a TwoNetworkGame);

impl ConcaveConvexOracle for ReducedPayoff<'_> {
    fn value(&self, x1: &[f64], x2: &[f64]) -> Result<f64, GameError> {
        self.0.reduced_value(x1, x2)
    }
    fn grad_x1(&self, x1: &[f64], x2: &[f64]) -> Result<Vec<f64>, GameError> {
        Ok(self.0.reduced_gradient(x1, x2)?.0)
    }
    fn grad_x2(&self, x1: &[f64], x2: &[f64]) -> Result<Vec<f64>, GameError> {
        Ok(self.0.reduced_gradient(x1, x2)?.1)
    }
}

/// Probabilistic midpoint test of concavity in `x1` and convexity in `x2`.
///
/// Returns the largest midpoint violation seen; a value `<= tol` is
/// necessary, not sufficient, for concave-convexity.
pub fn midpoint_violation(
    f: &dyn ConcaveConvexOracle,
    set1: &StrategySet,
    set2: &StrategySet,
    samples: usize,
    seed: u64,
) -> Result<f64, GameError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    let mid = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| 0.5 * (p + q)).collect::<Vec<_>>();
    for _ in 0..samples {
        let (a, b) = (set1.sample(&mut rng), set1.sample(&mut rng));
        let y = set2.sample(&mut rng);
        let concave_gap =
            0.5 * (f.value(&a, &y)? + f.value(&b, &y)?) - f.value(&mid(&a, &b), &y)?;
        let (p, q) = (set2.sample(&mut rng), set2.sample(&mut rng));
        let x = set1.sample(&mut rng);
        let convex_gap =
            f.value(&x, &mid(&p, &q))? - 0.5 * (f.value(&x, &p)? + f.value(&x, &q)?);
        worst = worst.max(concave_gap).max(convex_gap);
    }
    Ok(worst)
}
