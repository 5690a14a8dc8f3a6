//! Distributed saddle-point dynamics for zero-sum games played between two
//! networks of agents.
//!
//! The crate is organized bottom-up:
//!
//! - [`graph`]: weighted digraphs, Laplacians and their spectra.
//! - [`sets`]: compact strategy sets (boxes with budget constraints).
//! - [`game`]: extended payoffs, aggregate payoffs `Ũ1`/`Ũ2` and Nash certificates.
//! - [`dynamics`]: the undirected and the α-parameterized saddle flows, their
//!   integration, Lyapunov monitors and conservation diagnostics.
//! - [`design`]: choosing `α` for directed networks from the spectral gap and
//!   the Lipschitz constant of `∇Ũ`.
//! - [`verify`]: independent oracles (cocoercivity, brute-force saddles,
//!   finite differences).
//! - [`scenarios`]: the Gaussian-channel power allocation game and quadratic
//!   fixtures with analytic saddles.
//! - [`config`] and [`cli`]: the configuration-driven command line tool.
//!
//! The guide under `book/` walks through the same material; its code
//! listings are compiled and run as doc-tests of this crate.

pub mod cli;
pub mod config;
pub mod design;
pub mod dynamics;
pub mod game;
pub mod graph;
pub mod scenarios;
pub mod sets;
pub mod verify;

pub use dynamics::{Flow, IntegratorSettings, ReferencePoint, StackedState, TrajectoryRecord};
pub use game::{ConcaveConvexOracle, EngagementGraph, ExtendedPayoff, Side, TwoNetworkGame};
pub use graph::WeightedDigraph;
pub use sets::StrategySet;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/graphs.md")]
    mod graphs {}
    #[doc = include_str!("../../../book/src/games.md")]
    mod games {}
    #[doc = include_str!("../../../book/src/dynamics.md")]
    mod dynamics {}
    #[doc = include_str!("../../../book/src/design.md")]
    mod design {}
    #[doc = include_str!("../../../book/src/verification.md")]
    mod verification {}
    #[doc = include_str!("../../../book/src/channels.md")]
    mod channels {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
