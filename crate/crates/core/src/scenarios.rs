//! Built-in games.
//!
//! - [`build_channel_game`]: power allocation over five parallel Gaussian
//!   channels between a network of transmitters (`Σ1`, maximizing total
//!   capacity) and a network of jammers (`Σ2`, minimizing it).
//! - [`build_quadratic_game`]: concave-convex quadratics split over the
//!   agents, with the saddle available in closed form.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::StackedState;
use crate::game::{EngagementGraph, ExtendedPayoff, GameError, Side, TwoNetworkGame};
use crate::graph::{symmetric_eigenvalues, GraphError, WeightedDigraph};
use crate::sets::StrategySet;

/// Log arguments at or below this are rejected.
pub const LOG_GUARD: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("invalid scenario parameters: {0}")]
    InvalidParams(String),
    #[error("quadratic game is not strictly concave-convex: {0}")]
    NotStrictlyConcaveConvex(String),
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Intra-network topology used for both networks of the channel game.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChannelTopology {
    /// Undirected 5-cycle, unit weights.
    BidirectedCycle,
    /// Directed 5-cycle, unit weights (weight-balanced, not undirected).
    DirectedCycle,
}

/// Parameters of the five-channel game.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelScenario {
    /// Capacity gain.
    pub beta: f64,
    /// Receiver noise per channel.
    pub sigma: [f64; 5],
    /// Signal power budget of `Σ1`.
    pub p: f64,
    /// Noise power budget of `Σ2`.
    pub c: f64,
    pub topology: ChannelTopology,
}

impl Default for ChannelScenario {
    fn default() -> Self {
        Self {
            beta: 8.0,
            sigma: [1.0, 4.0, 1.0, 4.0, 1.0],
            p: 6.0,
            c: 4.0,
            topology: ChannelTopology::BidirectedCycle,
        }
    }
}

impl ChannelScenario {
    fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |what: &str, v: f64| {
            Err(ScenarioError::InvalidParams(format!("{what} must be positive and finite, got {v}")))
        };
        for (what, v) in [("beta", self.beta), ("P", self.p), ("C", self.c)] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(what, v);
            }
        }
        for (i, &s) in self.sigma.iter().enumerate() {
            if !(s > 0.0 && s.is_finite()) {
                return bad(&format!("sigma[{i}]"), s);
            }
        }
        Ok(())
    }

    /// `[0, P]² ∩ {2x1 + 2x2 <= P}`: channels 1 and 3 carry `x1`, channels 2
    /// and 4 carry `x2`, channel 5 gets the rest of the budget.
    pub fn signal_set(&self) -> StrategySet {
        StrategySet::cube(2, 0.0, self.p).with_constraint(vec![2.0, 2.0], self.p)
    }

    /// `[0, C]² ∩ {y1 + 3y2 <= C}`: channel 1 gets `y1`, channels 2–4 get
    /// `y2`, channel 5 gets the rest.
    pub fn noise_set(&self) -> StrategySet {
        StrategySet::cube(2, 0.0, self.c).with_constraint(vec![1.0, 3.0], self.c)
    }

    /// Signal and noise power on each channel at the network-level point.
    pub fn channel_powers(&self, x: &[f64], y: &[f64]) -> ([f64; 5], [f64; 5]) {
        (
            [x[0], x[1], x[0], x[1], self.p - 2.0 * x[0] - 2.0 * x[1]],
            [y[0], y[1], y[1], y[1], self.c - y[0] - 3.0 * y[1]],
        )
    }

    /// `Σ_k log(1 + β s_k / (σ_k + η_k))`.
    pub fn total_capacity(&self, x: &[f64], y: &[f64]) -> f64 {
        let (s, n) = self.channel_powers(x, y);
        (0..5)
            .map(|k| (1.0 + self.beta * s[k] / (self.sigma[k] + n[k])).ln())
            .sum()
    }
}

/// `c0 + coeffs · block`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Affine {
    c0: f64,
    coeffs: [f64; 2],
}

impl Affine {
    const fn coord(k: usize) -> Self {
        let mut coeffs = [0.0; 2];
        coeffs[k] = 1.0;
        Self { c0: 0.0, coeffs }
    }

    fn eval(&self, v: &[f64]) -> f64 {
        self.c0 + self.coeffs[0] * v[0] + self.coeffs[1] * v[1]
    }
}

/// `weight * log(1 + β s / (σ + η))` with `s` read from a `Σ1` agent's block
/// and `η` from a `Σ2` agent's block.
#[derive(Debug, Clone, Copy, PartialEq)]
struct CapacityTerm {
    weight: f64,
    /// `Σ1` agent whose estimate supplies the signal.
    signal_agent: usize,
    signal: Affine,
    /// `Σ2` agent whose estimate supplies the noise.
    noise_agent: usize,
    noise: Affine,
    sigma: f64,
}

/// Extended payoff of one agent: a sum of capacity terms.
#[derive(Debug, Clone)]
struct CapacityPayoff {
    side: Side,
    agent: usize,
    beta: f64,
    terms: Vec<CapacityTerm>,
}

impl CapacityPayoff {
    /// Blocks `(x, y)` used by `term`, where the opponent blocks come from
    /// `opponents` (stacked) or, for the base payoff, from a single block.
    fn blocks<'a>(
        &self,
        term: &CapacityTerm,
        own: &'a [f64],
        opponents: &'a [f64],
        single: bool,
    ) -> (&'a [f64], &'a [f64]) {
        let pick = |agent: usize| if single { opponents } else { &opponents[2 * agent..2 * agent + 2] };
        match self.side {
            Side::First => (own, pick(term.noise_agent)),
            Side::Second => (pick(term.signal_agent), own),
        }
    }

    fn parts(&self, term: &CapacityTerm, x: &[f64], y: &[f64]) -> Result<(f64, f64), GameError> {
        let s = term.signal.eval(x);
        let den = term.sigma + term.noise.eval(y);
        let num = den + self.beta * s;
        if den <= LOG_GUARD || num <= LOG_GUARD * den {
            return Err(GameError::Domain(format!(
                "capacity term of agent {} of network {} has log argument {:e}",
                self.agent,
                self.side.index(),
                num / den
            )));
        }
        Ok((num, den))
    }

    fn eval(&self, own: &[f64], opponents: &[f64], single: bool) -> Result<f64, GameError> {
        let mut total = 0.0;
        for t in &self.terms {
            let (x, y) = self.blocks(t, own, opponents, single);
            let (num, den) = self.parts(t, x, y)?;
            total += t.weight * (num.ln() - den.ln());
        }
        Ok(total)
    }
}

impl ExtendedPayoff for CapacityPayoff {
    fn value(&self, own: &[f64], opponents: &[f64]) -> Result<f64, GameError> {
        self.eval(own, opponents, false)
    }

    fn grad_own(&self, own: &[f64], opponents: &[f64]) -> Result<Vec<f64>, GameError> {
        let mut g = vec![0.0; 2];
        for t in &self.terms {
            let (x, y) = self.blocks(t, own, opponents, false);
            let (num, den) = self.parts(t, x, y)?;
            let (scale, coeffs) = match self.side {
                Side::First => (t.weight * self.beta / num, t.signal.coeffs),
                Side::Second => (t.weight * (1.0 / num - 1.0 / den), t.noise.coeffs),
            };
            g[0] += scale * coeffs[0];
            g[1] += scale * coeffs[1];
        }
        Ok(g)
    }

    fn base_value(&self, own: &[f64], opponent: &[f64]) -> Result<f64, GameError> {
        self.eval(own, opponent, true)
    }
}

/// Builds the five-channel game. Agent `i` of either network is responsible
/// for channel `i + 1`; agents 1 and 3 (channels 2 and 4) also observe each
/// other's opponents and mix the two observations with weights 1/3 and 2/3.
pub fn build_channel_game(params: &ChannelScenario) -> Result<TwoNetworkGame, ScenarioError> {
    params.validate()?;
    let (g1, g2) = match params.topology {
        ChannelTopology::BidirectedCycle => {
            (WeightedDigraph::bidirected_cycle(5)?, WeightedDigraph::bidirected_cycle(5)?)
        }
        ChannelTopology::DirectedCycle => {
            (WeightedDigraph::directed_cycle(5)?, WeightedDigraph::directed_cycle(5)?)
        }
    };
    build_channel_game_on(params, g1, g2)
}

/// [`build_channel_game`] on caller-supplied 5-agent graphs.
pub fn build_channel_game_on(
    params: &ChannelScenario,
    g1: WeightedDigraph,
    g2: WeightedDigraph,
) -> Result<TwoNetworkGame, ScenarioError> {
    params.validate()?;
    if g1.vertex_count() != 5 || g2.vertex_count() != 5 {
        return Err(ScenarioError::InvalidParams("both networks need 5 agents".into()));
    }
    let sigma = params.sigma;
    let term = |weight, signal_agent, signal, noise_agent, noise, ch: usize| CapacityTerm {
        weight,
        signal_agent,
        signal,
        noise_agent,
        noise,
        sigma: sigma[ch],
    };
    let (x1, x2) = (Affine::coord(0), Affine::coord(1));
    let (y1, y2) = (x1, x2);
    let signal5 = Affine {
        c0: params.p,
        coeffs: [-2.0, -2.0],
    };
    let noise5 = Affine {
        c0: params.c,
        coeffs: [-1.0, -3.0],
    };
    let (third, two_thirds) = (1.0 / 3.0, 2.0 / 3.0);

    let first: Vec<Vec<CapacityTerm>> = vec![
        vec![term(1.0, 0, x1, 0, y1, 0)],
        vec![term(third, 1, x2, 3, y2, 1), term(two_thirds, 1, x2, 1, y2, 1)],
        vec![term(1.0, 2, x1, 2, y2, 2)],
        vec![term(third, 3, x2, 1, y2, 3), term(two_thirds, 3, x2, 3, y2, 3)],
        vec![term(1.0, 4, signal5, 4, noise5, 4)],
    ];
    let second: Vec<Vec<CapacityTerm>> = vec![
        vec![term(1.0, 0, x1, 0, y1, 0)],
        vec![term(two_thirds, 1, x2, 1, y2, 1), term(third, 3, x2, 1, y2, 1)],
        vec![term(1.0, 2, x1, 2, y2, 2)],
        vec![term(third, 1, x2, 3, y2, 3), term(two_thirds, 3, x2, 3, y2, 3)],
        vec![term(1.0, 4, signal5, 4, noise5, 4)],
    ];
    let wrap = |side, lists: Vec<Vec<CapacityTerm>>| -> Vec<Arc<dyn ExtendedPayoff>> {
        lists
            .into_iter()
            .enumerate()
            .map(|(agent, terms)| {
                Arc::new(CapacityPayoff {
                    side,
                    agent,
                    beta: params.beta,
                    terms,
                }) as Arc<dyn ExtendedPayoff>
            })
            .collect()
    };

    let engagement = EngagementGraph::from_pairs(5, 5, &[(0, 0), (1, 1), (2, 2), (3, 3), (4, 4), (1, 3), (3, 1)])?;
    let game = TwoNetworkGame::new(
        g1,
        g2,
        engagement,
        params.signal_set(),
        params.noise_set(),
        wrap(Side::First, first),
        wrap(Side::Second, second),
    )?
    .declare_liftable();

    let report = game.check_extension_properties(50, 0);
    if !report.passes(1e-12) || report.lift_gap > 1e-12 {
        return Err(ScenarioError::InvalidParams(format!(
            "extension properties fail on samples: {report:?}"
        )));
    }
    Ok(game)
}

/// Initial condition and published equilibrium of the reference run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Example1Reference {
    pub initial: StackedState,
    /// Network-level equilibrium as published (four decimals).
    pub x_star: [f64; 2],
    pub y_star: [f64; 2],
    /// Published auxiliary states. They depend on the intra-network graphs,
    /// which are not known exactly; informational only.
    pub z1_star: [f64; 10],
    pub z2_star: [f64; 10],
    pub caveat: &'static str,
}

pub fn example1_reference() -> Example1Reference {
    let x0 = vec![1.0, 0.5, 0.5, 1.0, 0.5, 0.5, 0.5, 1.0, 0.5, 1.0];
    let y0 = vec![1.0, 0.5, 0.5, 1.0, 0.5, 1.0, 0.5, 0.5, 1.0, 0.5];
    Example1Reference {
        initial: StackedState::new(x0, y0),
        x_star: [1.3371, 1.0315],
        y_star: [1.5027, 0.3366],
        z1_star: [
            0.7508, 0.5084, 0.1447, 0.5084, 0.1447, -0.1271, -0.5201, -0.1271, -0.5201, -0.7626,
        ],
        z2_star: [
            0.1079, -0.0987, -0.0002, 0.2237, 0.0358, 0.2875, -0.0360, 0.0087, -0.1076, -0.4213,
        ],
        caveat: "z* values depend on the original intra-network graphs and are not reproduced by the built-in topologies",
    }
}

/// `U(x1, x2) = x1ᵀA x1 + x2ᵀB x2 + x1ᵀC x2 + l1ᵀx1 + l2ᵀx2` with `A ≺ 0`,
/// `B ≻ 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticGame {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
    pub l1: Vec<f64>,
    pub l2: Vec<f64>,
}

fn to_matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>, ScenarioError> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || c == 0 || rows.iter().any(|row| row.len() != c) {
        return Err(ScenarioError::InvalidParams(format!("{what} is not a nonempty rectangular matrix")));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

fn from_matrix(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// Symmetrized matrices and vectors of a validated [`QuadraticGame`].
#[derive(Debug, Clone)]
struct QuadraticParts {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
    l1: DVector<f64>,
    l2: DVector<f64>,
}

impl QuadraticGame {
    /// Random instance with `A = -(MMᵀ + I/2)`, `B = NNᵀ + I/2` and other
    /// entries uniform in `[-1, 1]`.
    pub fn random(d1: usize, d2: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = |r, c| DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0));
        let ma = m(d1, d1);
        let mb = m(d2, d2);
        let c = m(d1, d2);
        let l1 = m(d1, 1);
        let l2 = m(d2, 1);
        let a = -(&ma * ma.transpose() + DMatrix::identity(d1, d1) * 0.5);
        let b = &mb * mb.transpose() + DMatrix::identity(d2, d2) * 0.5;
        Self {
            a: from_matrix(&a),
            b: from_matrix(&b),
            c: from_matrix(&c),
            l1: l1.iter().copied().collect(),
            l2: l2.iter().copied().collect(),
        }
    }

    pub fn d1(&self) -> usize {
        self.a.len()
    }

    pub fn d2(&self) -> usize {
        self.b.len()
    }

    fn parts(&self) -> Result<QuadraticParts, ScenarioError> {
        let a = to_matrix(&self.a, "A")?;
        let b = to_matrix(&self.b, "B")?;
        let c = to_matrix(&self.c, "C")?;
        let (d1, d2) = (a.nrows(), b.nrows());
        if a.ncols() != d1 || b.ncols() != d2 || c.shape() != (d1, d2) {
            return Err(ScenarioError::InvalidParams(format!(
                "shapes A {:?}, B {:?}, C {:?} are inconsistent",
                a.shape(),
                b.shape(),
                c.shape()
            )));
        }
        if self.l1.len() != d1 || self.l2.len() != d2 {
            return Err(ScenarioError::InvalidParams("linear terms have the wrong length".into()));
        }
        let a = (&a + a.transpose()) * 0.5;
        let b = (&b + b.transpose()) * 0.5;
        let max_a = *symmetric_eigenvalues(&a)?.last().expect("nonempty");
        let min_b = symmetric_eigenvalues(&b)?[0];
        if max_a >= -1e-12 {
            return Err(ScenarioError::NotStrictlyConcaveConvex(format!(
                "A has eigenvalue {max_a:e} >= 0"
            )));
        }
        if min_b <= 1e-12 {
            return Err(ScenarioError::NotStrictlyConcaveConvex(format!(
                "B has eigenvalue {min_b:e} <= 0"
            )));
        }
        Ok(QuadraticParts {
            a,
            b,
            c,
            l1: DVector::from_vec(self.l1.clone()),
            l2: DVector::from_vec(self.l2.clone()),
        })
    }

    /// Solves `[[2A, C], [Cᵀ, 2B]] [x1; x2] = -[l1; l2]`.
    pub fn saddle(&self) -> Result<(Vec<f64>, Vec<f64>), ScenarioError> {
        let p = self.parts()?;
        let (d1, d2) = (p.a.nrows(), p.b.nrows());
        let mut m = DMatrix::<f64>::zeros(d1 + d2, d1 + d2);
        m.view_mut((0, 0), (d1, d1)).copy_from(&(&p.a * 2.0));
        m.view_mut((0, d1), (d1, d2)).copy_from(&p.c);
        m.view_mut((d1, 0), (d2, d1)).copy_from(&p.c.transpose());
        m.view_mut((d1, d1), (d2, d2)).copy_from(&(&p.b * 2.0));
        let mut rhs = DVector::<f64>::zeros(d1 + d2);
        rhs.rows_mut(0, d1).copy_from(&(-&p.l1));
        rhs.rows_mut(d1, d2).copy_from(&(-&p.l2));
        let sol = m
            .lu()
            .solve(&rhs)
            .ok_or_else(|| ScenarioError::NotStrictlyConcaveConvex("stationarity system is singular".into()))?;
        Ok((sol.rows(0, d1).iter().copied().collect(), sol.rows(d1, d2).iter().copied().collect()))
    }

    pub fn value(&self, x1: &[f64], x2: &[f64]) -> Result<f64, ScenarioError> {
        let p = self.parts()?;
        let (x, y) = (DVector::from_column_slice(x1), DVector::from_column_slice(x2));
        Ok(x.dot(&(&p.a * &x)) + y.dot(&(&p.b * &y)) + x.dot(&(&p.c * &y)) + p.l1.dot(&x) + p.l2.dot(&y))
    }
}

/// Payoff of one agent of a quadratic game.
///
/// `own_quad` holds the agent's share of its own network's quadratic,
/// `adopted` the shares of the opponent network's quadratics it carries
/// (one per adopted opponent agent, evaluated on that agent's estimate), and
/// `coupling` the observed opponents it is coupled to.
#[derive(Debug, Clone)]
struct QuadraticPayoff {
    side: Side,
    d_opp: usize,
    /// Own-network quadratic `xᵀ Q x + lᵀ x`, already divided by `n`.
    own_q: DMatrix<f64>,
    own_l: DVector<f64>,
    /// Opponent-network quadratic share.
    opp_q: DMatrix<f64>,
    opp_l: DVector<f64>,
    adopted: Vec<usize>,
    /// `x1ᵀ C x2 / |E|` with this agent's block on its side.
    c: DMatrix<f64>,
    coupling: Vec<usize>,
    n_opp: usize,
}

impl QuadraticPayoff {
    fn value_with(&self, own: &[f64], block: impl Fn(usize) -> DVector<f64>) -> f64 {
        let x = DVector::from_column_slice(own);
        let mut v = x.dot(&(&self.own_q * &x)) + self.own_l.dot(&x);
        for &k in &self.adopted {
            let y = block(k);
            v += y.dot(&(&self.opp_q * &y)) + self.opp_l.dot(&y);
        }
        for &k in &self.coupling {
            let y = block(k);
            v += match self.side {
                Side::First => x.dot(&(&self.c * &y)),
                Side::Second => y.dot(&(&self.c * &x)),
            };
        }
        v
    }

    fn check(&self, own: &[f64], opponents: &[f64]) -> Result<(), GameError> {
        if own.len() != self.own_l.len() {
            return Err(GameError::DimensionMismatch {
                what: "own estimate",
                expected: self.own_l.len(),
                got: own.len(),
            });
        }
        if opponents.len() != self.n_opp * self.d_opp {
            return Err(GameError::DimensionMismatch {
                what: "opponent stack",
                expected: self.n_opp * self.d_opp,
                got: opponents.len(),
            });
        }
        Ok(())
    }
}

impl ExtendedPayoff for QuadraticPayoff {
    fn value(&self, own: &[f64], opponents: &[f64]) -> Result<f64, GameError> {
        self.check(own, opponents)?;
        let d = self.d_opp;
        Ok(self.value_with(own, |k| DVector::from_column_slice(&opponents[k * d..(k + 1) * d])))
    }

    fn grad_own(&self, own: &[f64], opponents: &[f64]) -> Result<Vec<f64>, GameError> {
        self.check(own, opponents)?;
        let d = self.d_opp;
        let x = DVector::from_column_slice(own);
        let mut g = &self.own_q * &x * 2.0 + &self.own_l;
        for &k in &self.coupling {
            let y = DVector::from_column_slice(&opponents[k * d..(k + 1) * d]);
            g += match self.side {
                Side::First => &self.c * &y,
                Side::Second => self.c.transpose() * &y,
            };
        }
        Ok(g.iter().copied().collect())
    }

    fn base_value(&self, own: &[f64], opponent: &[f64]) -> Result<f64, GameError> {
        Ok(self.value_with(own, |_| DVector::from_column_slice(opponent)))
    }
}

/// Quadratic game plus its saddle and the Lipschitz constant of `∇Ũ`.
#[derive(Debug, Clone)]
pub struct QuadraticFixture {
    pub spec: QuadraticGame,
    pub game: TwoNetworkGame,
    pub saddle: (Vec<f64>, Vec<f64>),
    /// Spectral norm of the Hessian of `Ũ` over the stacks.
    pub k_analytic: f64,
}

/// Splits `spec` over the agents of two networks.
///
/// Each network's own quadratic is shared equally by its agents. Every
/// mutual engagement pair `(i, j)` carries `x^iᵀ C x^j / |E|` on both sides.
/// The opponent network's quadratic terms are carried, one opponent agent at
/// a time, by the first agent engaged with that opponent; this makes
/// `Ũ1 = Ũ2`. Every agent must belong to at least one mutual pair.
pub fn build_quadratic_game(
    spec: &QuadraticGame,
    g1: WeightedDigraph,
    g2: WeightedDigraph,
    engagement: EngagementGraph,
    set1: StrategySet,
    set2: StrategySet,
) -> Result<QuadraticFixture, ScenarioError> {
    let p = spec.parts()?;
    let (n1, n2) = (g1.vertex_count(), g2.vertex_count());
    let (d1, d2) = (p.a.nrows(), p.b.nrows());
    if set1.dim() != d1 || set2.dim() != d2 {
        return Err(ScenarioError::InvalidParams("strategy set dimensions do not match A, B".into()));
    }
    if engagement.n1() != n1 || engagement.n2() != n2 {
        return Err(ScenarioError::InvalidParams("engagement graph size does not match the networks".into()));
    }
    let pairs = engagement.mutual_pairs();
    let partners1: Vec<Vec<usize>> = (0..n1)
        .map(|i| pairs.iter().filter(|pr| pr.0 == i).map(|pr| pr.1).collect())
        .collect();
    let partners2: Vec<Vec<usize>> = (0..n2)
        .map(|j| pairs.iter().filter(|pr| pr.1 == j).map(|pr| pr.0).collect())
        .collect();
    if let Some(i) = partners1.iter().position(Vec::is_empty) {
        return Err(ScenarioError::InvalidParams(format!("agent v{i} has no mutual engagement")));
    }
    if let Some(j) = partners2.iter().position(Vec::is_empty) {
        return Err(ScenarioError::InvalidParams(format!("agent w{j} has no mutual engagement")));
    }
    let e = pairs.len() as f64;
    let c_share = &p.c / e;

    let payoffs1: Vec<Arc<dyn ExtendedPayoff>> = (0..n1)
        .map(|i| {
            Arc::new(QuadraticPayoff {
                side: Side::First,
                d_opp: d2,
                own_q: &p.a / n1 as f64,
                own_l: &p.l1 / n1 as f64,
                opp_q: &p.b / n2 as f64,
                opp_l: &p.l2 / n2 as f64,
                adopted: (0..n2).filter(|&j| partners2[j][0] == i).collect(),
                c: c_share.clone(),
                coupling: partners1[i].clone(),
                n_opp: n2,
            }) as Arc<dyn ExtendedPayoff>
        })
        .collect();
    let payoffs2: Vec<Arc<dyn ExtendedPayoff>> = (0..n2)
        .map(|j| {
            Arc::new(QuadraticPayoff {
                side: Side::Second,
                d_opp: d1,
                own_q: &p.b / n2 as f64,
                own_l: &p.l2 / n2 as f64,
                opp_q: &p.a / n1 as f64,
                opp_l: &p.l1 / n1 as f64,
                adopted: (0..n1).filter(|&i| partners1[i][0] == j).collect(),
                c: c_share.clone(),
                coupling: partners2[j].clone(),
                n_opp: n1,
            }) as Arc<dyn ExtendedPayoff>
        })
        .collect();

    let game = TwoNetworkGame::new(g1, g2, engagement, set1, set2, payoffs1, payoffs2)?.declare_liftable();
    let saddle = spec.saddle()?;
    let k_analytic = lifted_hessian(&game)?.singular_values().max();
    Ok(QuadraticFixture {
        spec: spec.clone(),
        game,
        saddle,
        k_analytic,
    })
}

/// Jacobian of `(∇_{x1}Ũ, ∇_{x2}Ũ)` over the stacks by unit differences;
/// exact for games whose gradients are affine.
pub fn lifted_hessian(game: &TwoNetworkGame) -> Result<DMatrix<f64>, GameError> {
    let (a, b) = (game.n1() * game.d1(), game.n2() * game.d2());
    let grad = |v: &[f64]| -> Result<Vec<f64>, GameError> {
        let mut g = game.aggregate_grad(Side::First, &v[..a], &v[a..])?;
        g.extend(game.aggregate_grad(Side::Second, &v[..a], &v[a..])?);
        Ok(g)
    };
    let zero = vec![0.0; a + b];
    let g0 = grad(&zero)?;
    let mut h = DMatrix::<f64>::zeros(a + b, a + b);
    for k in 0..a + b {
        let mut e = zero.clone();
        e[k] = 1.0;
        let gk = grad(&e)?;
        for r in 0..a + b {
            h[(r, k)] = gk[r] - g0[r];
        }
    }
    Ok(h)
}

/// A random quadratic fixture on the given graphs with round-robin
/// engagement and boxes wide enough to contain the saddle.
pub fn random_quadratic_fixture(
    g1: WeightedDigraph,
    g2: WeightedDigraph,
    d1: usize,
    d2: usize,
    seed: u64,
) -> Result<QuadraticFixture, ScenarioError> {
    let spec = QuadraticGame::random(d1, d2, seed);
    let (s1, s2) = spec.saddle()?;
    let r = s1.iter().chain(&s2).fold(1.0f64, |m, v| m.max(2.0 * v.abs())) + 1.0;
    let engagement = EngagementGraph::round_robin(g1.vertex_count(), g2.vertex_count());
    build_quadratic_game(
        &spec,
        g1,
        g2,
        engagement,
        StrategySet::cube(d1, -r, r),
        StrategySet::cube(d2, -r, r),
    )
}
