//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits with
//! a nonzero status if any criterion fails.
//!
//! Run alone with `cargo test -p netsaddle-acceptance --test acceptance`.

use std::sync::Mutex;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use netsaddle::design::{self, estimate_lipschitz_k, h, DesignInputs};
use netsaddle::dynamics::{
    field_directed, integrate, DynamicsError, Flow, IntegratorSettings, LyapunovKind, Monitor, Provenance,
    ReferencePoint, StackedState, TrajectoryRecord,
};
use netsaddle::game::{EngagementGraph, ExtendedPayoff, FnOracle, FnPayoff, LiftedPayoff, Side, TwoNetworkGame};
use netsaddle::graph::WeightedDigraph;
use netsaddle::scenarios::{
    build_channel_game, example1_reference, random_quadratic_fixture, ChannelScenario,
};
use netsaddle::sets::StrategySet;
use netsaddle::verify::{brute_force_saddle, cocoercivity_check};

// Tolerances.
const EX1_X_TOL: f64 = 1e-3;
const EX1_Y_TOL: f64 = 1e-3;
const EQUILIBRIUM_FIELD_TOL: f64 = 1e-6;
const AGREEMENT_TOL: f64 = 1e-4;
const SADDLE_DIST_TOL: f64 = 1e-3;
const GROWTH_FACTOR: f64 = 10.0;
const LYAPUNOV_TOL: f64 = 1e-7;
const H_SMALL_REL_TOL: f64 = 1e-2;
const H_LARGE_REL_TOL: f64 = 1e-2;
const SLACK_TOL: f64 = 1e-9;
const TIGHT_SLACK_TOL: f64 = 1e-12;
const DRIFT_TOL: f64 = 1e-8;
const COCOERCIVITY_PAIRS: usize = 10_000;
const GRID_POINTS: usize = 41;

const X_STAR: [f64; 2] = [1.3371, 1.0315];
const Y_STAR: [f64; 2] = [1.5027, 0.3366];

struct Outcome {
    id: &'static str,
    pass: bool,
    detail: String,
}

/// Conservation drifts of every trajectory integrated by criteria 1–4.
static DRIFTS: Mutex<Vec<(String, f64)>> = Mutex::new(Vec::new());

fn record_drift(label: impl Into<String>, r: &TrajectoryRecord) {
    DRIFTS.lock().unwrap().push((label.into(), r.max_conservation_drift()));
}

fn sup_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (p, q)| m.max((p - q).abs()))
}

fn sup(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn criterion_1() -> Vec<Outcome> {
    let params = ChannelScenario::default();
    let game = build_channel_game(&params).expect("channel game");
    let reference = example1_reference();
    let settings = IntegratorSettings {
        horizon: 400.0,
        ..Default::default()
    };
    let rec = integrate(&game, &reference.initial, Flow::Directed { alpha: 3.0 }, &settings, None)
        .expect("example 1 run");
    record_drift("example 1", &rec);
    let x = rec.consensus_value(Side::First);
    let y = rec.consensus_value(Side::Second);
    let ex = sup_dist(&x, &X_STAR);
    let ey = sup_dist(&y, &Y_STAR);
    let field = field_directed(&game, &rec.final_state(), 3.0).expect("field");
    let fnorm = sup(&field.flatten());
    vec![
        Outcome {
            id: "1a",
            pass: ex < EX1_X_TOL,
            detail: format!("x limit {x:.6?} vs (1.3371, 1.0315): sup error {ex:.3e} (tol {EX1_X_TOL:e})"),
        },
        Outcome {
            id: "1b",
            pass: ey < EX1_Y_TOL,
            detail: format!("y limit {y:.6?} vs (1.5027, 0.3366): sup error {ey:.3e} (tol {EX1_Y_TOL:e})"),
        },
        Outcome {
            id: "1c",
            pass: fnorm < EQUILIBRIUM_FIELD_TOL,
            detail: format!(
                "field sup-norm at the limit {fnorm:.3e} (tol {EQUILIBRIUM_FIELD_TOL:e}), t = {:.1}, converged = {}",
                rec.times.last().unwrap(),
                rec.converged
            ),
        },
    ]
}

fn random_connected_undirected(rng: &mut ChaCha8Rng) -> WeightedDigraph {
    let n = rng.random_range(3..=8);
    let mut edges = Vec::new();
    for k in 1..n {
        edges.push((rng.random_range(0..k), k, rng.random_range(0.5..2.0)));
    }
    for i in 0..n {
        for j in i + 1..n {
            if !edges.iter().any(|e| (e.0, e.1) == (i, j)) && rng.random_bool(0.3) {
                edges.push((i, j, rng.random_range(0.5..2.0)));
            }
        }
    }
    WeightedDigraph::undirected(n, &edges).expect("valid graph")
}

fn criterion_2() -> Vec<Outcome> {
    let start = Instant::now();
    let cases: Vec<u64> = (0..20).collect();
    let results: Vec<(f64, f64, bool)> = cases
        .par_iter()
        .map(|&seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let g1 = random_connected_undirected(&mut rng);
            let g2 = random_connected_undirected(&mut rng);
            let (d1, d2) = (rng.random_range(1..=2), rng.random_range(1..=2));
            let f = random_quadratic_fixture(g1, g2, d1, d2, seed).expect("fixture");
            let s1 = f.game.strategy_set(Side::First).power(f.game.n1());
            let s2 = f.game.strategy_set(Side::Second).power(f.game.n2());
            let s0 = StackedState::new(s1.sample(&mut rng), s2.sample(&mut rng));
            let settings = IntegratorSettings {
                horizon: 300.0,
                ..Default::default()
            };
            let rec = integrate(&f.game, &s0, Flow::Undirected, &settings, None).expect("undirected run");
            record_drift(format!("undirected quadratic {seed}"), &rec);
            let agreement = rec.disagreement(Side::First).max(rec.disagreement(Side::Second));
            let dist = sup_dist(&rec.consensus_value(Side::First), &f.saddle.0)
                .max(sup_dist(&rec.consensus_value(Side::Second), &f.saddle.1));
            (agreement, dist, rec.converged)
        })
        .collect();
    let elapsed = start.elapsed().as_secs_f64();
    let worst_agree = results.iter().map(|r| r.0).fold(0.0, f64::max);
    let worst_dist = results.iter().map(|r| r.1).fold(0.0, f64::max);
    vec![Outcome {
        id: "2",
        pass: worst_agree < AGREEMENT_TOL && worst_dist < SADDLE_DIST_TOL && elapsed < 60.0,
        detail: format!(
            "20 random undirected pairs: worst block disagreement {worst_agree:.3e} (tol {AGREEMENT_TOL:e}), \
             worst distance to saddle {worst_dist:.3e} (tol {SADDLE_DIST_TOL:e}), {elapsed:.1}s"
        ),
    }]
}

fn zero_game(g1: WeightedDigraph, g2: WeightedDigraph) -> TwoNetworkGame {
    let (n1, n2) = (g1.vertex_count(), g2.vertex_count());
    let zero = |n: usize| -> Vec<std::sync::Arc<dyn ExtendedPayoff>> {
        (0..n).map(|_| std::sync::Arc::new(FnPayoff::zero(1)) as _).collect()
    };
    TwoNetworkGame::new(
        g1,
        g2,
        EngagementGraph::round_robin(n1, n2),
        StrategySet::cube(1, -1.0, 1.0),
        StrategySet::cube(1, -1.0, 1.0),
        zero(n1),
        zero(n2),
    )
    .expect("zero game")
    .declare_liftable()
}

/// Largest `‖state‖_∞` divided by the initial one; diverging runs stop at
/// `blowup` times the initial norm so that rounding at huge magnitudes does
/// not swamp the conservation check.
fn growth(n: usize, seed: u64, blowup: f64) -> f64 {
    let game = zero_game(
        WeightedDigraph::directed_cycle(n).unwrap(),
        WeightedDigraph::directed_cycle(n).unwrap(),
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s0 = StackedState::zeros(&game);
    for v in s0.x1.iter_mut().chain(s0.z1.iter_mut()).chain(s0.x2.iter_mut()).chain(s0.z2.iter_mut()) {
        *v = rng.random_range(-1.0..1.0);
    }
    let n0 = sup(&s0.flatten());
    let settings = IntegratorSettings {
        horizon: 50.0,
        blowup_bound: blowup * n0,
        stop_tol: 0.0,
        ..Default::default()
    };
    let rec = match integrate(&game, &s0, Flow::Directed { alpha: 1.0 }, &settings, None) {
        Ok(r) => r,
        Err(DynamicsError::NonFiniteState { record, .. }) => *record,
        Err(e) => panic!("{e}"),
    };
    record_drift(format!("zero payoff {n}-cycle seed {seed}"), &rec);
    rec.max_state_norm() / n0
}

fn criterion_3() -> Vec<Outcome> {
    let c5 = WeightedDigraph::directed_cycle(5).unwrap();
    let c3 = WeightedDigraph::directed_cycle(3).unwrap();
    let violates = !c5.laplacian_stability_condition(1e-9).unwrap();
    let boundary = c3.laplacian_stability_condition(1e-9).unwrap();
    let seeds: Vec<u64> = (0..8).collect();
    let g5: Vec<f64> = seeds.par_iter().map(|&s| growth(5, s, 1e4)).collect();
    let g3: Vec<f64> = seeds.par_iter().map(|&s| growth(3, 100 + s, 1e4)).collect();
    let min5 = g5.iter().copied().fold(f64::INFINITY, f64::min);
    let max3 = g3.iter().copied().fold(0.0, f64::max);
    vec![
        Outcome {
            id: "3a",
            pass: violates && min5 >= GROWTH_FACTOR,
            detail: format!(
                "directed 5-cycle, α = 1: smallest growth over 8 random starts {min5:.3e} (need ≥ {GROWTH_FACTOR}); \
                 eigenvalue condition violated: {violates}"
            ),
        },
        Outcome {
            id: "3b",
            pass: boundary && max3 <= GROWTH_FACTOR,
            detail: format!(
                "directed 3-cycle, α = 1: largest growth over 8 random starts {max3:.3} (need ≤ {GROWTH_FACTOR}); \
                 boundary of the eigenvalue condition: {boundary}"
            ),
        },
    ]
}

fn criterion_4() -> Vec<Outcome> {
    let topologies = [(5usize, 5usize, 1usize, 1usize), (6, 8, 2, 1), (8, 5, 1, 2), (6, 6, 2, 2)];
    let results: Vec<(String, f64, usize, f64, bool)> = topologies
        .par_iter()
        .enumerate()
        .map(|(k, &(n1, n2, d1, d2))| {
            let g1 = WeightedDigraph::directed_cycle(n1).unwrap();
            let g2 = WeightedDigraph::directed_cycle(n2).unwrap();
            let violates = !g1.laplacian_stability_condition(1e-9).unwrap()
                && !g2.laplacian_stability_condition(1e-9).unwrap();
            let lambda = design::lambda_star_min(&g1, &g2).unwrap();
            let f = random_quadratic_fixture(g1, g2, d1, d2, 40 + k as u64).expect("fixture");
            let d = design::design(&DesignInputs::new(lambda, f.k_analytic).unwrap(), None).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(77 + k as u64);
            let s1 = f.game.strategy_set(Side::First).power(n1);
            let s2 = f.game.strategy_set(Side::Second).power(n2);
            let s0 = StackedState::new(s1.sample(&mut rng), s2.sample(&mut rng));
            let reference = ReferencePoint::from_saddle(&f.game, &f.saddle.0, &f.saddle.1, &s0, Provenance::Analytic)
                .expect("reference");
            let monitor = Monitor {
                reference,
                kind: LyapunovKind::Directed { beta: d.beta },
            };
            let settings = IntegratorSettings {
                horizon: 2000.0,
                ..Default::default()
            };
            let rec = integrate(&f.game, &s0, Flow::Directed { alpha: d.alpha }, &settings, Some(&monitor))
                .expect("directed run");
            record_drift(format!("directed quadratic {n1}/{n2}-cycles"), &rec);
            let dist = sup_dist(&rec.consensus_value(Side::First), &f.saddle.0)
                .max(sup_dist(&rec.consensus_value(Side::Second), &f.saddle.1))
                .max(rec.disagreement(Side::First))
                .max(rec.disagreement(Side::Second));
            let label = format!(
                "{n1}/{n2}-cycles d=({d1},{d2}) α={:.3} t={:.0}",
                d.alpha,
                rec.times.last().unwrap()
            );
            (
                label,
                dist,
                rec.lyapunov_violations(LYAPUNOV_TOL),
                rec.max_lyapunov_increase().unwrap_or(0.0),
                violates,
            )
        })
        .collect();
    let worst = results.iter().map(|r| r.1).fold(0.0, f64::max);
    let violations: usize = results.iter().map(|r| r.2).sum();
    let max_inc = results.iter().map(|r| r.3).fold(f64::NEG_INFINITY, f64::max);
    let all_violate = results.iter().all(|r| r.4);
    let labels: Vec<&str> = results.iter().map(|r| r.0.as_str()).collect();
    vec![
        Outcome {
            id: "4a",
            pass: all_violate && worst < SADDLE_DIST_TOL,
            detail: format!(
                "designed α on {labels:?}: worst distance to saddle {worst:.3e} (tol {SADDLE_DIST_TOL:e}); \
                 all topologies violate the eigenvalue condition: {all_violate}"
            ),
        },
        Outcome {
            id: "4b",
            pass: violations == 0,
            detail: format!(
                "directed Lyapunov function: {violations} sample increases above {LYAPUNOV_TOL:e}, largest increase {max_inc:.3e}"
            ),
        },
    ]
}

fn criterion_5() -> Vec<Outcome> {
    // Λ from a pair of undirected 2-paths (Λ = 4); K = 1 and a second pair.
    let mut out = Vec::new();
    for (id, lambda, k) in [("5a", 4.0, 1.0), ("5b", 0.5857864376269049, 3.7)] {
        let i = DesignInputs::new(lambda, k).unwrap();
        let r = 1e-6;
        let small = h(r, &i).unwrap() / r;
        let rel = (small - (-0.5 * lambda)).abs() / (0.5 * lambda);
        let large = (h(1e3, &i).unwrap() - k).abs();
        out.push(Outcome {
            id,
            pass: rel < H_SMALL_REL_TOL && large < H_LARGE_REL_TOL * k,
            detail: format!(
                "Λ = {lambda:.4}, K = {k}: h(1e-6)/1e-6 relative error {rel:.3e} (tol {H_SMALL_REL_TOL:e}), \
                 |h(1e3) - K| = {large:.3e} (tol {:.1e})",
                H_LARGE_REL_TOL * k
            ),
        });
    }
    out
}

fn criterion_6() -> Vec<Outcome> {
    let tight = FnOracle::new(
        |x, y| -0.5 * x[0] * x[0] + 0.5 * y[0] * y[0],
        |x, _| vec![-x[0]],
        |_, y| vec![y[0]],
    );
    let b = StrategySet::cube(1, -10.0, 10.0);
    let r = cocoercivity_check(&tight, 1.0, COCOERCIVITY_PAIRS, &b, &b, 6, SLACK_TOL);
    let max_abs = r.slack.iter().fold(0.0f64, |m, s| m.max(s.abs()));

    let game = build_channel_game(&ChannelScenario::default()).unwrap();
    let k = estimate_lipschitz_k(&game, 20_000, 6);
    let s1 = game.strategy_set(Side::First).power(5);
    let s2 = game.strategy_set(Side::Second).power(5);
    let rc = cocoercivity_check(&LiftedPayoff(&game), k.safe, COCOERCIVITY_PAIRS, &s1, &s2, 16, SLACK_TOL);
    vec![
        Outcome {
            id: "6a",
            pass: r.min_slack >= -SLACK_TOL && max_abs <= TIGHT_SLACK_TOL && r.slack.len() == COCOERCIVITY_PAIRS,
            detail: format!(
                "f = -x²/2 + y²/2, K = 1: min slack {:.3e}, max |slack| {max_abs:.3e} over {} pairs",
                r.min_slack,
                r.slack.len()
            ),
        },
        Outcome {
            id: "6b",
            pass: rc.min_slack >= -SLACK_TOL && rc.domain_errors == 0 && rc.slack.len() == COCOERCIVITY_PAIRS,
            detail: format!(
                "channel game Ũ, K = {:.4} (sampled {:.4} × 1.5): min slack {:.3e}, {} violations, {} pairs",
                k.safe,
                k.raw,
                rc.min_slack,
                rc.violations.len(),
                rc.slack.len()
            ),
        },
    ]
}

fn criterion_7() -> Vec<Outcome> {
    let drifts = DRIFTS.lock().unwrap();
    let (label, worst) = drifts
        .iter()
        .fold(("none".to_string(), 0.0), |acc, (l, d)| if *d > acc.1 { (l.clone(), *d) } else { acc });
    vec![Outcome {
        id: "7",
        pass: !drifts.is_empty() && worst < DRIFT_TOL,
        detail: format!(
            "{} trajectories from criteria 1-4: worst block-sum drift {worst:.3e} ({label}), tol {DRIFT_TOL:e}",
            drifts.len()
        ),
    }]
}

fn criterion_8() -> Vec<Outcome> {
    let params = ChannelScenario::default();
    let game = build_channel_game(&params).unwrap();
    let u = |a: &[f64], b: &[f64]| game.reduced_value(a, b);
    let g = brute_force_saddle(&u, &params.signal_set(), &params.noise_set(), GRID_POINTS).unwrap();
    let within = |p: &(Vec<f64>, Vec<f64>)| {
        (0..2).all(|k| (p.0[k] - X_STAR[k]).abs() <= g.step1[k] && (p.1[k] - Y_STAR[k]).abs() <= g.step2[k])
    };
    let bracket = within(&g.maxmin_point) && within(&g.minmax_point);

    // Weak duality on further grids.
    let quad = |a: &[f64], b: &[f64]| Ok(-a[0] * a[0] + b[0] * b[0] + a[0] * b[0] - 0.3 * a[0]);
    let c = StrategySet::cube(1, -1.0, 1.0);
    let mut ordered = g.maxmin <= g.minmax;
    for points in [2, 5, 17, 41, 101] {
        let q = brute_force_saddle(&quad, &c, &c, points).unwrap();
        ordered &= q.maxmin <= q.minmax;
        let e = brute_force_saddle(&u, &params.signal_set(), &params.noise_set(), points.min(41)).unwrap();
        ordered &= e.maxmin <= e.minmax;
    }
    vec![Outcome {
        id: "8",
        pass: bracket && ordered,
        detail: format!(
            "41-point grids (cells {:.3} / {:.3}): maxmin point {:.4?}, minmax point {:.4?}, \
             maxmin {:.6} ≤ minmax {:.6}; maxmin ≤ minmax on all grids: {ordered}",
            g.step1[0], g.step2[0], g.maxmin_point, g.minmax_point, g.maxmin, g.minmax
        ),
    }]
}

fn main() {
    // Criterion 7 reads the trajectories of 1–4, so it runs after them.
    let groups: Vec<(&str, fn() -> Vec<Outcome>)> = vec![
        ("channel game equilibrium", criterion_1),
        ("undirected convergence", criterion_2),
        ("directed instability", criterion_3),
        ("directed convergence with designed alpha", criterion_4),
        ("h asymptotics", criterion_5),
        ("cocoercivity", criterion_6),
        ("conservation", criterion_7),
        ("brute-force saddle agreement", criterion_8),
    ];
    let mut failed = 0;
    for (name, run) in groups {
        let t = Instant::now();
        for o in run() {
            println!(
                "{} criterion {:<3} {name}: {} [{:.1}s]",
                if o.pass { "PASS" } else { "FAIL" },
                o.id,
                o.detail,
                t.elapsed().as_secs_f64()
            );
            if !o.pass {
                failed += 1;
            }
        }
    }
    if failed > 0 {
        println!("acceptance: {failed} criteria failed");
        std::process::exit(1);
    }
    println!("acceptance: all criteria passed");
}
