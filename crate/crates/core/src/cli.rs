//! Command line entry point: `run`, `design`, `verify` and `sweep`.
//!
//! Exit codes: 0 success, 2 configuration error, 3 divergence, 4 failed
//! verification. Every invocation leaves a `summary.json` with a `status`
//! field in its output directory.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{AlphaSource, BuiltScenario, ConfigError, FlowKind, KSource, RunConfig};
use crate::design::{self, alpha_from_beta, beta_from_alpha, estimate_lipschitz_k, DesignInputs};
use crate::dynamics::{
    integrate, DynamicsError, Flow, LyapunovKind, Monitor, Provenance, ReferencePoint, TrajectoryRecord,
};
use crate::game::{LiftedPayoff, ReducedPayoff, Side};
use crate::verify::{brute_force_saddle, cocoercivity_check, finite_diff_check, saddle_inequality_check};

pub const SUMMARY_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Parser)]
#[command(name = "netsaddle", version, about = "Distributed saddle-point dynamics between two networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// TOML run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// RNG seed; overrides `seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// `key=value` edit of the configuration, e.g. `flow.alpha=4`.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VerifyKind {
    Cocoercivity,
    Saddle,
    Gradients,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate the configured flow and write the trajectory.
    Run(CommonArgs),
    /// Compute Λ, K, β*, β and α.
    Design(CommonArgs),
    /// Run one of the independent checks.
    Verify {
        #[arg(value_enum)]
        kind: VerifyKind,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Run the Cartesian product of `--vary` values in parallel.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// `key=v1,v2,...`; may be repeated.
        #[arg(long, required = true)]
        vary: Vec<String>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Ok,
    ConfigError,
    Diverged,
    VerificationFailed,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Ok => 0,
            Status::ConfigError => 2,
            Status::Diverged => 3,
            Status::VerificationFailed => 4,
        }
    }
}

/// Early exit carrying its status and message.
struct Failure {
    status: Status,
    message: String,
    extra: Value,
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        config_failure(e)
    }
}

fn config_failure(e: impl std::fmt::Display) -> Failure {
    Failure {
        status: Status::ConfigError,
        message: e.to_string(),
        extra: Value::Null,
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { Status::ConfigError.exit_code() } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let status = match &cli.command {
        Command::Run(c) => run_command(c),
        Command::Design(c) => design_command(c),
        Command::Verify { kind, common } => verify_command(*kind, common),
        Command::Sweep { common, vary } => sweep_command(common, vary),
    };
    status.exit_code()
}

fn out_dir(common: &CommonArgs, cfg: Option<&RunConfig>) -> PathBuf {
    common
        .out
        .clone()
        .or_else(|| cfg.map(|c| c.output.dir.clone()))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn load(common: &CommonArgs) -> Result<RunConfig, ConfigError> {
    let mut cfg = RunConfig::load(&common.config, &common.overrides)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn write_json(path: &Path, value: &impl Serialize) {
    if let Some(parent) = path.parent() {
        let _ = fs::create_dir_all(parent);
    }
    match serde_json::to_string_pretty(value) {
        Ok(text) => {
            if let Err(e) = fs::write(path, text + "\n") {
                eprintln!("error: cannot write {}: {e}", path.display());
            }
        }
        Err(e) => eprintln!("error: cannot serialize {}: {e}", path.display()),
    }
}

/// Writes `summary.json` and reports the outcome on stderr.
fn finish(command: &str, dir: &Path, result: Result<Value, Failure>) -> Status {
    let (status, mut body) = match result {
        Ok(body) => (Status::Ok, body),
        Err(f) => {
            eprintln!("error: {}", f.message);
            let mut body = if f.extra.is_null() { json!({}) } else { f.extra };
            body["message"] = json!(f.message);
            (f.status, body)
        }
    };
    body["schema_version"] = json!(SUMMARY_SCHEMA_VERSION);
    body["command"] = json!(command);
    body["status"] = json!(status);
    write_json(&dir.join("summary.json"), &body);
    status
}

/// The K value requested by the configuration.
fn resolve_k(cfg: &RunConfig, built: &BuiltScenario, source: KSource) -> Result<f64, Failure> {
    match source {
        KSource::Estimate => Ok(estimate_lipschitz_k(&built.game, cfg.flow.k_samples, cfg.seed).safe),
        KSource::Analytic => built
            .k_analytic
            .ok_or_else(|| config_failure("no analytic K for this scenario")),
        KSource::Explicit => Ok(cfg.flow.k_value.expect("validated")),
    }
}

/// Outcome of choosing α.
struct AlphaPlan {
    alpha: f64,
    /// β used by the directed Lyapunov monitor.
    beta: Option<f64>,
    report: Value,
}

fn plan_alpha(cfg: &RunConfig, built: &BuiltScenario) -> Result<AlphaPlan, Failure> {
    let f = &cfg.flow;
    let design_with = |beta: Option<f64>| -> Result<AlphaPlan, Failure> {
        let source = f.k_source.ok_or_else(|| config_failure("parameter design needs flow.k_source"))?;
        let k = resolve_k(cfg, built, source)?;
        let lambda = design::lambda_star_min(built.game.graph(Side::First), built.game.graph(Side::Second))
            .map_err(config_failure)?;
        let inputs = DesignInputs::new(lambda, k).map_err(config_failure)?;
        let d = design::design(&inputs, beta).map_err(config_failure)?;
        let mut report = serde_json::to_value(d).expect("serializable");
        report["source"] = json!(if beta.is_some() { "designed-from-beta" } else { "designed-auto" });
        report["k_source"] = json!(source);
        Ok(AlphaPlan {
            alpha: d.alpha,
            beta: Some(d.beta),
            report,
        })
    };
    match f.alpha_source {
        Some(AlphaSource::Explicit) => {
            let alpha = f.alpha.expect("validated");
            let beta = beta_from_alpha(alpha).ok().map(|(lo, _)| lo);
            Ok(AlphaPlan {
                alpha,
                beta,
                report: json!({ "alpha": alpha, "source": "explicit", "beta": beta }),
            })
        }
        Some(AlphaSource::DesignedFromBeta) => {
            let beta = f.beta.expect("validated");
            if f.k_source.is_some() {
                design_with(Some(beta))
            } else {
                let alpha = alpha_from_beta(beta).map_err(config_failure)?;
                Ok(AlphaPlan {
                    alpha,
                    beta: Some(beta),
                    report: json!({ "alpha": alpha, "beta": beta, "source": "designed-from-beta" }),
                })
            }
        }
        Some(AlphaSource::DesignedAuto) | None => design_with(None),
    }
}

fn write_trajectory(dir: &Path, record: &TrajectoryRecord) -> Result<(), String> {
    fs::create_dir_all(dir.join("plots")).map_err(|e| e.to_string())?;
    let file = fs::File::create(dir.join("trajectory.csv")).map_err(|e| e.to_string())?;
    record.write_csv(file).map_err(|e| e.to_string())?;

    // Per-group time series for external plotting.
    let header = record.csv_header();
    let (a, b) = (record.n1 * record.d1, record.n2 * record.d2);
    let groups = [("x1", 0, a), ("z1", a, a), ("x2", 2 * a, b), ("z2", 2 * a + b, b)];
    for (name, start, len) in groups {
        let mut w = csv::Writer::from_path(dir.join("plots").join(format!("{name}.csv"))).map_err(|e| e.to_string())?;
        let mut h = vec!["t".to_string()];
        h.extend_from_slice(&header[1 + start..1 + start + len]);
        w.write_record(&h).map_err(|e| e.to_string())?;
        for (t, s) in record.times.iter().zip(&record.states) {
            let mut row = vec![format!("{t:e}")];
            row.extend(s[start..start + len].iter().map(|v| format!("{v:e}")));
            w.write_record(&row).map_err(|e| e.to_string())?;
        }
        w.flush().map_err(|e| e.to_string())?;
    }
    let mut w = csv::Writer::from_path(dir.join("plots").join("diagnostics.csv")).map_err(|e| e.to_string())?;
    w.write_record(["t", "V", "r1", "r2", "field_norm"]).map_err(|e| e.to_string())?;
    for k in 0..record.len() {
        w.write_record([
            format!("{:e}", record.times[k]),
            record.lyapunov.get(k).map(|v| format!("{v:e}")).unwrap_or_default(),
            format!("{:e}", record.conservation[k].0),
            format!("{:e}", record.conservation[k].1),
            format!("{:e}", record.field_norms[k]),
        ])
        .map_err(|e| e.to_string())?;
    }
    w.flush().map_err(|e| e.to_string())
}

fn run_inner(cfg: &RunConfig, dir: &Path) -> Result<Value, Failure> {
    let built = cfg.scenario.build(cfg.seed)?;
    let game = &built.game;
    let (flow, plan) = match cfg.flow.kind {
        FlowKind::Undirected => (Flow::Undirected, None),
        FlowKind::Directed => {
            let plan = plan_alpha(cfg, &built)?;
            write_json(&dir.join("design.json"), &plan.report);
            (Flow::Directed { alpha: plan.alpha }, Some(plan))
        }
    };

    let mut record = match integrate(game, &built.initial, flow, &cfg.integrator, None) {
        Ok(r) => r,
        Err(DynamicsError::NonFiniteState { t, record }) => {
            let saved = write_trajectory(dir, &record);
            return Err(Failure {
                status: Status::Diverged,
                message: format!("trajectory diverged at t = {t}"),
                extra: json!({
                    "scenario": built.name,
                    "flow": flow,
                    "diverged_at": t,
                    "max_state_norm": record.max_state_norm(),
                    "max_conservation_drift": record.max_conservation_drift(),
                    "partial_samples": record.len(),
                    "partial_trajectory_saved": saved.is_ok(),
                }),
            });
        }
        Err(e) => return Err(config_failure(e)),
    };

    let kind = match (flow, plan.as_ref().and_then(|p| p.beta)) {
        (Flow::Undirected, _) => Some(LyapunovKind::Undirected),
        (Flow::Directed { .. }, Some(beta)) => Some(LyapunovKind::Directed { beta }),
        _ => None,
    };
    let reference = match &built.saddle {
        Some((x1, x2)) => ReferencePoint::from_saddle(game, x1, x2, &built.initial, Provenance::Analytic).ok(),
        None if record.converged => Some(ReferencePoint::from_run(&record)),
        None => None,
    };
    let monitor = kind.zip(reference).map(|(kind, reference)| Monitor { reference, kind });
    if let Some(m) = &monitor {
        record.attach_monitor(m);
    }
    write_trajectory(dir, &record).map_err(|e| Failure {
        status: Status::ConfigError,
        message: format!("cannot write outputs: {e}"),
        extra: Value::Null,
    })?;

    let summary = record.summary();
    let mut body = json!({
        "scenario": built.name,
        "flow": flow,
        "trajectory": summary,
        "reference": monitor.as_ref().map(|m| m.reference.provenance),
    });
    if let Some(p) = &plan {
        body["design"] = p.report.clone();
    }
    if let Some((x, y)) = &built.published {
        let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).fold(0.0f64, |m, (p, q)| m.max((p - q).abs()));
        body["published_distance"] = json!({
            "x": dist(&summary.consensus_first, x),
            "y": dist(&summary.consensus_second, y),
        });
    }

    let mut failures = Vec::new();
    let mut checks = json!({});
    if cfg.verify.saddle {
        let u = |a: &[f64], b: &[f64]| game.reduced_value(a, b);
        match saddle_inequality_check(
            &u,
            (&summary.consensus_first, &summary.consensus_second),
            game.strategy_set(Side::First),
            game.strategy_set(Side::Second),
            cfg.verify.samples,
            cfg.seed,
        ) {
            Ok(v) => {
                checks["saddle_violation"] = json!(v);
                if v > cfg.verify.tol {
                    failures.push(format!("saddle inequality violated by {v:e}"));
                }
            }
            Err(e) => failures.push(format!("saddle check: {e}")),
        }
    }
    if cfg.verify.extension {
        let r = game.check_extension_properties(cfg.verify.samples, cfg.seed);
        let ok = r.passes(1e-9);
        checks["extension"] = serde_json::to_value(&r).expect("serializable");
        if !ok {
            failures.push("extension properties violated".into());
        }
    }
    body["verification"] = checks;
    if failures.is_empty() {
        Ok(body)
    } else {
        Err(Failure {
            status: Status::VerificationFailed,
            message: failures.join("; "),
            extra: body,
        })
    }
}

fn run_command(common: &CommonArgs) -> Status {
    let cfg = load(common);
    let dir = out_dir(common, cfg.as_ref().ok());
    let result = cfg.map_err(Failure::from).and_then(|cfg| {
        fs::create_dir_all(&dir).map_err(config_failure)?;
        run_inner(&cfg, &dir)
    });
    finish("run", &dir, result)
}

fn design_command(common: &CommonArgs) -> Status {
    let cfg = load(common);
    let dir = out_dir(common, cfg.as_ref().ok());
    let result = cfg.map_err(Failure::from).and_then(|cfg| {
        let built = cfg.scenario.build(cfg.seed)?;
        let plan = plan_alpha(&cfg, &built)?;
        write_json(&dir.join("design.json"), &plan.report);
        Ok(json!({ "design": plan.report }))
    });
    finish("design", &dir, result)
}

fn verify_inner(kind: VerifyKind, cfg: &RunConfig) -> Result<Value, Failure> {
    let built = cfg.scenario.build(cfg.seed)?;
    let game = &built.game;
    let (set1, set2) = (game.strategy_set(Side::First), game.strategy_set(Side::Second));
    let failed = |message: String, body: Value| Failure {
        status: Status::VerificationFailed,
        message,
        extra: body,
    };
    match kind {
        VerifyKind::Cocoercivity => {
            let k = resolve_k(cfg, &built, cfg.flow.k_source.unwrap_or(KSource::Estimate))?;
            let r = cocoercivity_check(
                &LiftedPayoff(game),
                k,
                cfg.verify.samples,
                &set1.power(game.n1()),
                &set2.power(game.n2()),
                cfg.seed,
                1e-9,
            );
            let body = json!({
                "check": "cocoercivity",
                "K": k,
                "samples": r.slack.len(),
                "min_slack": r.min_slack,
                "violations": r.violations.len(),
                "domain_errors": r.domain_errors,
            });
            if r.holds() {
                Ok(body)
            } else {
                Err(failed(format!("{} cocoercivity violations", r.violations.len()), body))
            }
        }
        VerifyKind::Gradients => {
            let lifted = finite_diff_check(
                &LiftedPayoff(game),
                &set1.power(game.n1()),
                &set2.power(game.n2()),
                cfg.verify.samples.min(200),
                1e-6,
                cfg.seed,
            )
            .map_err(config_failure)?;
            let reduced = finite_diff_check(&ReducedPayoff(game), set1, set2, cfg.verify.samples.min(200), 1e-6, cfg.seed)
                .map_err(config_failure)?;
            let body = json!({ "check": "gradients", "lifted_error": lifted, "reduced_error": reduced, "tol": 1e-5 });
            if lifted.max(reduced) < 1e-5 {
                Ok(body)
            } else {
                Err(failed(format!("gradient mismatch {:e}", lifted.max(reduced)), body))
            }
        }
        VerifyKind::Saddle => {
            let u = |a: &[f64], b: &[f64]| game.reduced_value(a, b);
            let grid = brute_force_saddle(&u, set1, set2, cfg.verify.grid).map_err(config_failure)?;
            let candidate = built
                .saddle
                .clone()
                .or_else(|| built.published.clone())
                .unwrap_or_else(|| grid.maxmin_point.clone());
            let violation = saddle_inequality_check(&u, (&candidate.0, &candidate.1), set1, set2, cfg.verify.samples, cfg.seed)
                .map_err(config_failure)?;
            let body = json!({
                "check": "saddle",
                "grid": grid,
                "candidate": candidate,
                "violation": violation,
                "tol": cfg.verify.tol,
            });
            if violation <= cfg.verify.tol && grid.maxmin <= grid.minmax {
                Ok(body)
            } else {
                Err(failed(format!("saddle inequality violated by {violation:e}"), body))
            }
        }
    }
}

fn verify_command(kind: VerifyKind, common: &CommonArgs) -> Status {
    let cfg = load(common);
    let dir = out_dir(common, cfg.as_ref().ok());
    let result = cfg.map_err(Failure::from).and_then(|cfg| verify_inner(kind, &cfg));
    let name = match kind {
        VerifyKind::Cocoercivity => "verify-cocoercivity",
        VerifyKind::Saddle => "verify-saddle",
        VerifyKind::Gradients => "verify-gradients",
    };
    finish(name, &dir, result)
}

/// Splits `key=v1,v2` at top-level commas (commas inside brackets belong to
/// array values).
pub fn parse_vary(spec: &str) -> Result<(String, Vec<String>), String> {
    let (key, values) = spec.split_once('=').ok_or_else(|| format!("bad --vary `{spec}`: expected key=v1,v2"))?;
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut cur = String::new();
    for ch in values.chars() {
        match ch {
            '[' | '{' => depth += 1,
            ']' | '}' => depth -= 1,
            ',' if depth == 0 => {
                out.push(std::mem::take(&mut cur).trim().to_string());
                continue;
            }
            _ => {}
        }
        cur.push(ch);
    }
    out.push(cur.trim().to_string());
    if key.trim().is_empty() || out.iter().any(String::is_empty) {
        return Err(format!("bad --vary `{spec}`"));
    }
    Ok((key.trim().to_string(), out))
}

fn sweep_command(common: &CommonArgs, vary: &[String]) -> Status {
    let dir = common.out.clone().unwrap_or_else(|| {
        crate::config::load_document(&common.config)
            .ok()
            .and_then(|d| d.get("output")?.get("dir")?.as_str().map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("out"))
    });
    let axes: Result<Vec<_>, _> = vary.iter().map(|v| parse_vary(v)).collect();
    let axes = match axes {
        Ok(a) => a,
        Err(e) => return finish("sweep", &dir, Err(config_failure(e))),
    };
    let mut combos: Vec<Vec<String>> = vec![Vec::new()];
    for (key, values) in &axes {
        combos = combos
            .iter()
            .flat_map(|c| {
                values.iter().map(move |v| {
                    let mut c = c.clone();
                    c.push(format!("{key}={v}"));
                    c
                })
            })
            .collect();
    }
    let results: Vec<(usize, Vec<String>, Status)> = combos
        .into_par_iter()
        .enumerate()
        .map(|(k, extra)| {
            let mut child = common.clone();
            child.overrides.extend(extra.iter().cloned());
            child.out = Some(dir.join(format!("run-{k:03}")));
            (k, extra, run_command(&child))
        })
        .collect();
    let worst = results.iter().map(|r| r.2).max().unwrap_or(Status::Ok);
    let runs: Vec<Value> = results
        .iter()
        .map(|(k, o, s)| json!({ "index": k, "overrides": o, "status": s, "exit_code": s.exit_code() }))
        .collect();
    let body = json!({ "runs": runs });
    if worst == Status::Ok {
        finish("sweep", &dir, Ok(body))
    } else {
        finish(
            "sweep",
            &dir,
            Err(Failure {
                status: worst,
                message: "at least one sweep run failed".into(),
                extra: body,
            }),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vary_respects_brackets() {
        let (k, v) = parse_vary("scenario.params.sigma=[1,4,1,4,1],[1,2,1,2,1]").unwrap();
        assert_eq!(k, "scenario.params.sigma");
        assert_eq!(v, vec!["[1,4,1,4,1]", "[1,2,1,2,1]"]);
        assert_eq!(parse_vary("flow.alpha=3,4").unwrap().1, vec!["3", "4"]);
        assert!(parse_vary("flow.alpha").is_err());
        assert!(parse_vary("flow.alpha=3,").is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(Status::Ok.exit_code(), 0);
        assert_eq!(Status::ConfigError.exit_code(), 2);
        assert_eq!(Status::Diverged.exit_code(), 3);
        assert_eq!(Status::VerificationFailed.exit_code(), 4);
    }
}
