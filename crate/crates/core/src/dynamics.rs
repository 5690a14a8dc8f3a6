//! Saddle-point flows over the two networks.
//!
//! With `𝐋ℓ = Lℓ ⊗ I_dℓ` and `c = 1` (undirected flow) or `c = α`
//! (directed flow):
//!
//! ```text
//! ẋ1 = -c 𝐋1 x1 - 𝐋1 z1 + ∇_{x1} Ũ(x1, x2)      ż1 = 𝐋1 x1
//! ẋ2 = -c 𝐋2 x2 - 𝐋2 z2 - ∇_{x2} Ũ(x1, x2)      ż2 = 𝐋2 x2
//! ```
//!
//! The network `Σ1` ascends `Ũ`, `Σ2` descends it, and the auxiliary
//! variables `z` integrate the disagreement. On weight-balanced graphs
//! `1ᵀ L = 0`, so the block sums `(1ᵀ ⊗ I) zℓ` are conserved.
//!
//! Nonsmooth payoffs are integrated through their subgradient selection.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::game::{block_sum, GameError, Side, TwoNetworkGame};
use crate::sets::max_abs;

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("alpha must be positive, got {0}")]
    NonpositiveAlpha(f64),
    #[error("beta must be positive, got {0}")]
    NonpositiveBeta(f64),
    #[error("invalid integrator settings: {0}")]
    InvalidSettings(String),
    #[error("state left the finite region at t = {t}")]
    NonFiniteState {
        t: f64,
        record: Box<TrajectoryRecord>,
    },
    #[error("state dimensions do not match the game")]
    DimensionMismatch,
    #[error("no equilibrium auxiliary state exists: {0}")]
    NoEquilibrium(String),
    #[error(transparent)]
    Game(#[from] GameError),
}

/// Concatenated agent estimates and auxiliary variables of both networks.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StackedState {
    pub x1: Vec<f64>,
    pub z1: Vec<f64>,
    pub x2: Vec<f64>,
    pub z2: Vec<f64>,
    pub t: f64,
}

impl StackedState {
    /// State with `z = 0` and `t = 0`.
    pub fn new(x1: Vec<f64>, x2: Vec<f64>) -> Self {
        let (a, b) = (x1.len(), x2.len());
        Self {
            x1,
            z1: vec![0.0; a],
            x2,
            z2: vec![0.0; b],
            t: 0.0,
        }
    }

    pub fn zeros(game: &TwoNetworkGame) -> Self {
        Self::new(
            vec![0.0; game.n1() * game.d1()],
            vec![0.0; game.n2() * game.d2()],
        )
    }

    /// Consensus state `(1 ⊗ x1, z1, 1 ⊗ x2, z2)`.
    pub fn consensus(game: &TwoNetworkGame, x1: &[f64], x2: &[f64]) -> Self {
        Self::new(x1.repeat(game.n1()), x2.repeat(game.n2()))
    }

    pub fn matches(&self, game: &TwoNetworkGame) -> bool {
        let a = game.n1() * game.d1();
        let b = game.n2() * game.d2();
        self.x1.len() == a && self.z1.len() == a && self.x2.len() == b && self.z2.len() == b
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(2 * (self.x1.len() + self.x2.len()));
        v.extend_from_slice(&self.x1);
        v.extend_from_slice(&self.z1);
        v.extend_from_slice(&self.x2);
        v.extend_from_slice(&self.z2);
        v
    }

    pub fn from_flat(flat: &[f64], a: usize, b: usize, t: f64) -> Self {
        assert_eq!(flat.len(), 2 * (a + b));
        Self {
            x1: flat[..a].to_vec(),
            z1: flat[a..2 * a].to_vec(),
            x2: flat[2 * a..2 * a + b].to_vec(),
            z2: flat[2 * a + b..].to_vec(),
            t,
        }
    }

    pub fn dist_sq(&self, other: &StackedState) -> f64 {
        sq_dist(&self.x1, &other.x1)
            + sq_dist(&self.z1, &other.z1)
            + sq_dist(&self.x2, &other.x2)
            + sq_dist(&self.z2, &other.z2)
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
}

/// Which saddle flow to integrate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Flow {
    /// Consensus gain 1 on both networks.
    Undirected,
    /// Consensus gain `alpha` on the `x` equations.
    Directed { alpha: f64 },
}

impl Flow {
    fn gain(self) -> Result<f64, DynamicsError> {
        match self {
            Flow::Undirected => Ok(1.0),
            Flow::Directed { alpha } if alpha > 0.0 => Ok(alpha),
            Flow::Directed { alpha } => Err(DynamicsError::NonpositiveAlpha(alpha)),
        }
    }
}

/// Evaluates the flow at a flattened state `[x1, z1, x2, z2]`.
pub(crate) fn field_flat(
    game: &TwoNetworkGame,
    gain: f64,
    s: &[f64],
    out: &mut [f64],
) -> Result<(), GameError> {
    let a = game.n1() * game.d1();
    let b = game.n2() * game.d2();
    let (x1, rest) = s.split_at(a);
    let (z1, rest) = rest.split_at(a);
    let (x2, z2) = rest.split_at(b);
    let (o1, rest) = out.split_at_mut(a);
    let (oz1, rest) = rest.split_at_mut(a);
    let (o2, oz2) = rest.split_at_mut(b);

    let g1 = game.graph(Side::First);
    let g2 = game.graph(Side::Second);
    let mut lz = vec![0.0; a.max(b)];

    // ż = 𝐋 x goes straight into the output; ẋ reuses it.
    g1.apply_lifted(game.d1(), x1, oz1);
    g1.apply_lifted(game.d1(), z1, &mut lz[..a]);
    game.aggregate_grad_into(Side::First, x1, x2, o1)?;
    for k in 0..a {
        o1[k] += -gain * oz1[k] - lz[k];
    }

    g2.apply_lifted(game.d2(), x2, oz2);
    g2.apply_lifted(game.d2(), z2, &mut lz[..b]);
    game.aggregate_grad_into(Side::Second, x1, x2, o2)?;
    for k in 0..b {
        o2[k] = -o2[k] - gain * oz2[k] - lz[k];
    }
    Ok(())
}

fn field(game: &TwoNetworkGame, s: &StackedState, flow: Flow) -> Result<StackedState, DynamicsError> {
    if !s.matches(game) {
        return Err(DynamicsError::DimensionMismatch);
    }
    let gain = flow.gain()?;
    let flat = s.flatten();
    let mut out = vec![0.0; flat.len()];
    field_flat(game, gain, &flat, &mut out)?;
    Ok(StackedState::from_flat(&out, s.x1.len(), s.x2.len(), s.t))
}

/// Right-hand side of the undirected saddle flow.
pub fn field_undirected(game: &TwoNetworkGame, s: &StackedState) -> Result<StackedState, DynamicsError> {
    field(game, s, Flow::Undirected)
}

/// Right-hand side of the α-parameterized flow for directed networks.
pub fn field_directed(
    game: &TwoNetworkGame,
    s: &StackedState,
    alpha: f64,
) -> Result<StackedState, DynamicsError> {
    field(game, s, Flow::Directed { alpha })
}

/// One classical fourth-order Runge–Kutta step of `ẏ = f(y)` in place.
pub fn rk4_step<E>(
    y: &mut [f64],
    h: f64,
    mut f: impl FnMut(&[f64], &mut [f64]) -> Result<(), E>,
) -> Result<(), E> {
    let n = y.len();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    f(y, &mut k1)?;
    for i in 0..n {
        tmp[i] = y[i] + 0.5 * h * k1[i];
    }
    f(&tmp, &mut k2)?;
    for i in 0..n {
        tmp[i] = y[i] + 0.5 * h * k2[i];
    }
    f(&tmp, &mut k3)?;
    for i in 0..n {
        tmp[i] = y[i] + h * k3[i];
    }
    f(&tmp, &mut k4)?;
    for i in 0..n {
        y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    Ok(())
}

/// Fixed-step integration controls.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorSettings {
    /// Step size.
    pub h: f64,
    /// Final time.
    pub horizon: f64,
    /// Record a sample every this many steps.
    pub record_every: usize,
    /// Early stop once `‖field‖_∞ < stop_tol` ...
    pub stop_tol: f64,
    /// ... for this many consecutive samples.
    pub patience: usize,
    /// `‖state‖_∞` above this is treated as divergence.
    pub blowup_bound: f64,
}

impl Default for IntegratorSettings {
    fn default() -> Self {
        Self {
            h: 1e-3,
            horizon: 100.0,
            record_every: 100,
            stop_tol: 1e-8,
            patience: 50,
            blowup_bound: 1e8,
        }
    }
}

impl IntegratorSettings {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        let bad = |field: &str, why: &str| {
            Err(DynamicsError::InvalidSettings(format!("{field} {why}")))
        };
        if !(self.h > 0.0 && self.h.is_finite()) {
            return bad("h", "must be positive");
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return bad("horizon", "must be positive");
        }
        if self.record_every == 0 {
            return bad("record_every", "must be at least 1");
        }
        if !(self.stop_tol >= 0.0) {
            return bad("stop_tol", "must be nonnegative");
        }
        if self.patience == 0 {
            return bad("patience", "must be at least 1");
        }
        if !(self.blowup_bound > 0.0) {
            return bad("blowup_bound", "must be positive");
        }
        Ok(())
    }
}

/// Where a reference equilibrium came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Analytic,
    BruteForce,
    ConvergedRun,
}

/// An equilibrium of the flow used as the center of a Lyapunov function.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReferencePoint {
    pub state: StackedState,
    pub provenance: Provenance,
}

impl ReferencePoint {
    /// Builds the equilibrium `(1⊗x1*, z1*, 1⊗x2*, z2*)` over a known saddle
    /// `(x1*, x2*)`, choosing the `z*` whose block sums agree with `z_class`
    /// (so the reference lies in the invariant set of a run started there).
    ///
    /// `z*` solves `𝐋1 z1* = ∇_{x1}Ũ` and `𝐋2 z2* = -∇_{x2}Ũ` at the
    /// consensus point; this needs strongly connected weight-balanced graphs
    /// and a stationary `(x1*, x2*)`.
    pub fn from_saddle(
        game: &TwoNetworkGame,
        x1: &[f64],
        x2: &[f64],
        z_class: &StackedState,
        provenance: Provenance,
    ) -> Result<Self, DynamicsError> {
        let bx1 = x1.repeat(game.n1());
        let bx2 = x2.repeat(game.n2());
        let g1 = game.aggregate_grad(Side::First, &bx1, &bx2)?;
        let g2: Vec<f64> = game
            .aggregate_grad(Side::Second, &bx1, &bx2)?
            .into_iter()
            .map(|v| -v)
            .collect();
        let z1 = solve_lifted(
            game.graph(Side::First).laplacian(),
            game.d1(),
            &g1,
            &block_sum(&z_class.z1, game.d1()),
        )?;
        let z2 = solve_lifted(
            game.graph(Side::Second).laplacian(),
            game.d2(),
            &g2,
            &block_sum(&z_class.z2, game.d2()),
        )?;
        Ok(Self {
            state: StackedState {
                x1: bx1,
                z1,
                x2: bx2,
                z2,
                t: 0.0,
            },
            provenance,
        })
    }

    /// Uses the final state of a converged run as the reference.
    pub fn from_run(record: &TrajectoryRecord) -> Self {
        Self {
            state: record.final_state(),
            provenance: Provenance::ConvergedRun,
        }
    }
}

/// Solves `(L ⊗ I_d) z = g` subject to `(1ᵀ ⊗ I_d) z = sums`.
fn solve_lifted(
    laplacian: &DMatrix<f64>,
    d: usize,
    g: &[f64],
    sums: &[f64],
) -> Result<Vec<f64>, DynamicsError> {
    let n = laplacian.nrows();
    let mut system = DMatrix::<f64>::zeros(n + 1, n);
    system.view_mut((0, 0), (n, n)).copy_from(laplacian);
    for j in 0..n {
        system[(n, j)] = 1.0;
    }
    let svd = system.clone().svd(true, true);
    let mut z = vec![0.0; n * d];
    for k in 0..d {
        let mut rhs = DVector::<f64>::zeros(n + 1);
        for i in 0..n {
            rhs[i] = g[i * d + k];
        }
        rhs[n] = sums[k];
        let sol = svd
            .solve(&rhs, 1e-12)
            .map_err(|e| DynamicsError::NoEquilibrium(e.to_string()))?;
        let residual = (&system * &sol - &rhs).amax();
        let scale = 1.0f64.max(rhs.amax());
        if residual > 1e-8 * scale {
            return Err(DynamicsError::NoEquilibrium(format!(
                "gradient stack is not in the range of the Laplacian (residual {residual:.3e})"
            )));
        }
        for i in 0..n {
            z[i * d + k] = sol[i];
        }
    }
    Ok(z)
}

/// Lyapunov function of the undirected flow: `½‖s - s*‖²`.
pub fn lyapunov_undirected(s: &StackedState, reference: &ReferencePoint) -> f64 {
    0.5 * s.dist_sq(&reference.state)
}

/// Lyapunov function of the directed flow, measuring `x` and `y = βx + z`.
pub fn lyapunov_directed(s: &StackedState, reference: &ReferencePoint, beta: f64) -> f64 {
    let r = &reference.state;
    let y_dist = |x: &[f64], z: &[f64], xs: &[f64], zs: &[f64]| -> f64 {
        x.iter()
            .zip(z)
            .zip(xs.iter().zip(zs))
            .map(|((x, z), (xs, zs))| {
                let d = beta * (x - xs) + (z - zs);
                d * d
            })
            .sum()
    };
    0.5 * (sq_dist(&s.x1, &r.x1)
        + sq_dist(&s.x2, &r.x2)
        + y_dist(&s.x1, &s.z1, &r.x1, &r.z1)
        + y_dist(&s.x2, &s.z2, &r.x2, &r.z2))
}

/// `‖(1ᵀ ⊗ I)(zℓ - zℓ⁰)‖` for both networks.
pub fn conservation_residual(s: &StackedState, s0: &StackedState, game: &TwoNetworkGame) -> (f64, f64) {
    let r = |z: &[f64], z0: &[f64], d: usize| {
        let diff: Vec<f64> = z.iter().zip(z0).map(|(a, b)| a - b).collect();
        crate::sets::norm(&block_sum(&diff, d))
    };
    (r(&s.z1, &s0.z1, game.d1()), r(&s.z2, &s0.z2, game.d2()))
}

/// Which Lyapunov function a monitor evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum LyapunovKind {
    Undirected,
    Directed { beta: f64 },
}

/// Lyapunov monitor attached to a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Monitor {
    pub reference: ReferencePoint,
    pub kind: LyapunovKind,
}

impl Monitor {
    pub fn value(&self, s: &StackedState) -> f64 {
        match self.kind {
            LyapunovKind::Undirected => lyapunov_undirected(s, &self.reference),
            LyapunovKind::Directed { beta } => lyapunov_directed(s, &self.reference, beta),
        }
    }
}

/// Sampled trajectory and terminal diagnostics of one integration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryRecord {
    pub n1: usize,
    pub d1: usize,
    pub n2: usize,
    pub d2: usize,
    pub times: Vec<f64>,
    /// Flattened `[x1, z1, x2, z2]` per sample.
    pub states: Vec<Vec<f64>>,
    /// Lyapunov values; empty when no monitor was attached.
    pub lyapunov: Vec<f64>,
    /// `(r1, r2)` conservation residuals per sample.
    pub conservation: Vec<(f64, f64)>,
    /// `‖field‖_∞` per sample.
    pub field_norms: Vec<f64>,
    pub steps: usize,
    pub converged: bool,
    /// Norms of `∇_{x1}U`, `∇_{x2}U` at the terminal block averages.
    pub final_nash_residual: Option<(f64, f64)>,
}

impl TrajectoryRecord {
    fn split(&self) -> (usize, usize) {
        (self.n1 * self.d1, self.n2 * self.d2)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state(&self, k: usize) -> StackedState {
        let (a, b) = self.split();
        StackedState::from_flat(&self.states[k], a, b, self.times[k])
    }

    pub fn final_state(&self) -> StackedState {
        self.state(self.len() - 1)
    }

    /// Average of the terminal blocks of network `side`.
    pub fn consensus_value(&self, side: Side) -> Vec<f64> {
        let s = self.final_state();
        let (x, n, d) = match side {
            Side::First => (s.x1, self.n1, self.d1),
            Side::Second => (s.x2, self.n2, self.d2),
        };
        block_sum(&x, d).into_iter().map(|v| v / n as f64).collect()
    }

    /// Largest `‖x^i - x^j‖_∞` between terminal blocks of network `side`.
    pub fn disagreement(&self, side: Side) -> f64 {
        let s = self.final_state();
        let (x, d) = match side {
            Side::First => (s.x1, self.d1),
            Side::Second => (s.x2, self.d2),
        };
        let blocks: Vec<&[f64]> = x.chunks_exact(d).collect();
        let mut worst: f64 = 0.0;
        for a in &blocks {
            for b in &blocks {
                for (p, q) in a.iter().zip(b.iter()) {
                    worst = worst.max((p - q).abs());
                }
            }
        }
        worst
    }

    /// Recomputes the Lyapunov values of every sample against `monitor`.
    pub fn attach_monitor(&mut self, monitor: &Monitor) {
        self.lyapunov = (0..self.len()).map(|k| monitor.value(&self.state(k))).collect();
    }

    /// Largest sample-to-sample increase of the Lyapunov values (`<= 0`
    /// means monotone).
    pub fn max_lyapunov_increase(&self) -> Option<f64> {
        if self.lyapunov.len() < 2 {
            return None;
        }
        Some(
            self.lyapunov
                .windows(2)
                .map(|w| w[1] - w[0])
                .fold(f64::NEG_INFINITY, f64::max),
        )
    }

    /// Number of sample pairs where `V` grew by more than `tol`.
    pub fn lyapunov_violations(&self, tol: f64) -> usize {
        self.lyapunov.windows(2).filter(|w| w[1] - w[0] > tol).count()
    }

    pub fn max_conservation_drift(&self) -> f64 {
        self.conservation
            .iter()
            .fold(0.0, |m, (a, b)| m.max(*a).max(*b))
    }

    /// Largest `‖state‖_∞` over the samples.
    pub fn max_state_norm(&self) -> f64 {
        self.states.iter().map(|s| max_abs(s)).fold(0.0, f64::max)
    }

    /// CSV header: `t`, every state coordinate, `V`, `r1`, `r2`.
    pub fn csv_header(&self) -> Vec<String> {
        let mut h = vec!["t".to_string()];
        for (name, n, d) in [
            ("x1", self.n1, self.d1),
            ("z1", self.n1, self.d1),
            ("x2", self.n2, self.d2),
            ("z2", self.n2, self.d2),
        ] {
            for i in 0..n {
                for k in 0..d {
                    h.push(format!("{name}_{i}_{k}"));
                }
            }
        }
        h.extend(["V".to_string(), "r1".to_string(), "r2".to_string()]);
        h
    }

    /// One row per sample; `V` is empty when no monitor ran.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(self.csv_header())?;
        for k in 0..self.len() {
            let mut row = Vec::with_capacity(self.states[k].len() + 4);
            row.push(format!("{:e}", self.times[k]));
            row.extend(self.states[k].iter().map(|v| format!("{v:e}")));
            row.push(self.lyapunov.get(k).map(|v| format!("{v:e}")).unwrap_or_default());
            row.push(format!("{:e}", self.conservation[k].0));
            row.push(format!("{:e}", self.conservation[k].1));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn summary(&self) -> TrajectorySummary {
        TrajectorySummary {
            converged: self.converged,
            steps: self.steps,
            final_time: self.times.last().copied().unwrap_or(0.0),
            consensus_first: self.consensus_value(Side::First),
            consensus_second: self.consensus_value(Side::Second),
            disagreement_first: self.disagreement(Side::First),
            disagreement_second: self.disagreement(Side::Second),
            final_field_norm: self.field_norms.last().copied().unwrap_or(f64::NAN),
            final_nash_residual: self.final_nash_residual,
            max_lyapunov_increase: self.max_lyapunov_increase(),
            lyapunov_violations: self.lyapunov_violations(1e-7),
            max_conservation_drift: self.max_conservation_drift(),
        }
    }
}

/// Compact description of a finished run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectorySummary {
    pub converged: bool,
    pub steps: usize,
    pub final_time: f64,
    pub consensus_first: Vec<f64>,
    pub consensus_second: Vec<f64>,
    pub disagreement_first: f64,
    pub disagreement_second: f64,
    pub final_field_norm: f64,
    pub final_nash_residual: Option<(f64, f64)>,
    pub max_lyapunov_increase: Option<f64>,
    pub lyapunov_violations: usize,
    pub max_conservation_drift: f64,
}

/// Integrates `flow` from `s0` with fixed-step RK4.
///
/// A sample is recorded at `t = 0`, every `record_every` steps, and at the
/// last step. The run stops early once the field's sup-norm has stayed below
/// `stop_tol` for `patience` consecutive samples, and fails with
/// [`DynamicsError::NonFiniteState`] (carrying the partial record) when the
/// state stops being finite or exceeds `blowup_bound`.
pub fn integrate(
    game: &TwoNetworkGame,
    s0: &StackedState,
    flow: Flow,
    settings: &IntegratorSettings,
    monitor: Option<&Monitor>,
) -> Result<TrajectoryRecord, DynamicsError> {
    settings.validate()?;
    if !s0.matches(game) {
        return Err(DynamicsError::DimensionMismatch);
    }
    let gain = flow.gain()?;
    let (a, b) = (game.n1() * game.d1(), game.n2() * game.d2());
    let mut y = s0.flatten();
    let mut scratch = vec![0.0; y.len()];
    let mut record = TrajectoryRecord {
        n1: game.n1(),
        d1: game.d1(),
        n2: game.n2(),
        d2: game.d2(),
        times: Vec::new(),
        states: Vec::new(),
        lyapunov: Vec::new(),
        conservation: Vec::new(),
        field_norms: Vec::new(),
        steps: 0,
        converged: false,
        final_nash_residual: None,
    };

    let total_steps = (settings.horizon / settings.h).round().max(1.0) as usize;
    let mut quiet = 0usize;

    let sample = |y: &[f64], t: f64, record: &mut TrajectoryRecord, scratch: &mut [f64]| -> Result<f64, GameError> {
        field_flat(game, gain, y, scratch)?;
        let fnorm = max_abs(scratch);
        let s = StackedState::from_flat(y, a, b, t);
        record.times.push(t);
        record.conservation.push(conservation_residual(&s, s0, game));
        if let Some(m) = monitor {
            record.lyapunov.push(m.value(&s));
        }
        record.field_norms.push(fnorm);
        record.states.push(y.to_vec());
        Ok(fnorm)
    };

    sample(&y, s0.t, &mut record, &mut scratch)?;
    for step in 1..=total_steps {
        rk4_step(&mut y, settings.h, |s, out| field_flat(game, gain, s, out))?;
        let t = s0.t + step as f64 * settings.h;
        record.steps = step;

        if y.iter().any(|v| !v.is_finite()) || max_abs(&y) > settings.blowup_bound {
            if y.iter().all(|v| v.is_finite()) {
                let _ = sample(&y, t, &mut record, &mut scratch);
            }
            return Err(DynamicsError::NonFiniteState {
                t,
                record: Box::new(record),
            });
        }

        if step % settings.record_every == 0 || step == total_steps {
            let fnorm = sample(&y, t, &mut record, &mut scratch)?;
            quiet = if fnorm < settings.stop_tol { quiet + 1 } else { 0 };
            if quiet >= settings.patience {
                record.converged = true;
                break;
            }
        }
    }

    let x1 = record.consensus_value(Side::First);
    let x2 = record.consensus_value(Side::Second);
    record.final_nash_residual = game
        .reduced_gradient(&x1, &x2)
        .ok()
        .map(|(g1, g2)| (crate::sets::norm(&g1), crate::sets::norm(&g2)));
    Ok(record)
}

/// Explicit matrix of the zero-payoff flow,
/// `blockdiag([[-c, -1], [1, 0]] ⊗ 𝐋1, [[-c, -1], [1, 0]] ⊗ 𝐋2)`, acting on
/// `[x1, z1, x2, z2]`.
pub fn zero_payoff_matrix(game: &TwoNetworkGame, gain: f64) -> DMatrix<f64> {
    let l1 = game.graph(Side::First).kron_lift(game.d1());
    let l2 = game.graph(Side::Second).kron_lift(game.d2());
    let coupling = nalgebra::dmatrix![-gain, -1.0; 1.0, 0.0];
    let b1 = coupling.kronecker(&l1);
    let b2 = coupling.kronecker(&l2);
    let (p, q) = (b1.nrows(), b2.nrows());
    let mut m = DMatrix::<f64>::zeros(p + q, p + q);
    m.view_mut((0, 0), (p, p)).copy_from(&b1);
    m.view_mut((p, p), (q, q)).copy_from(&b2);
    m
}
