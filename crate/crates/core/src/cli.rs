//! Command-line front end. `run` parses arguments, executes one command and
//! returns the exit code with the text destined for stdout and stderr, so
//! the binary stays a thin wrapper.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use crate::canonical::to_canonical_string;
use crate::dp::{gap_bound, DpError, DpOptions, Engine};
use crate::market::{Market, MarketError};
use crate::one_period::{Objective, OnePeriodProblem, SearchOptions, N0_CAP};
use crate::structure::{self, check_h_membership, find_h_kernel};
use crate::utility::{check_ae, check_negativity, check_type_a};
use crate::utility::{Utility, UtilityError, ValueFunction};
use crate::xreal::XReal;

pub const SCHEMA_VERSION: u32 = 1;

/// Bundled discrete analog of the counterexample, market part.
pub const CE_MARKET: &str = include_str!("../data/ce_no_cl/market.json");
/// Bundled discrete analog of the counterexample, utility part.
pub const CE_UTILITY: &str = include_str!("../data/ce_no_cl/utility.json");

pub mod exit {
    pub const OK: i32 = 0;
    pub const ASSUMPTION: i32 = 1;
    pub const SCHEMA: i32 = 2;
    pub const IO: i32 = 3;
    pub const USAGE: i32 = 4;
}

#[derive(Debug, Parser)]
#[command(name = "robust-maxmin", version, about = "Robust maxmin utility maximization on scenario trees")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[arg(long, global = true)]
    pub market: Option<PathBuf>,
    #[arg(long, global = true)]
    pub utility: Option<PathBuf>,
    /// Initial wealth.
    #[arg(long, global = true, default_value_t = 0.0, allow_negative_numbers = true)]
    pub x0: f64,
    /// Points per direction on the widest search grid at the queried node.
    #[arg(long, global = true)]
    pub grid: Option<usize>,
    /// Overrides the certificate's eta.
    #[arg(long, global = true)]
    pub eta: Option<f64>,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Report destination; stdout when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Solve even when assumptions fail; guarantees become diagnostics.
    #[arg(long, global = true)]
    pub force: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Schema and invariant checks of the market and utility files.
    Validate,
    /// Assumption checks with one verdict per assumption.
    Audit,
    /// Strategy synthesis with the value bracket and diagnostics.
    Solve,
    /// Rebuild a bundled example and check each of its claims.
    Reproduce {
        id: String,
        /// Up-move probability of the counterexample market.
        #[arg(long, default_value_t = 0.6)]
        q: f64,
    },
}

/// What the binary prints and returns.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Failure {
            code,
            message: message.into(),
        }
    }
}

impl From<MarketError> for Failure {
    fn from(e: MarketError) -> Self {
        let code = if matches!(e, MarketError::Io { .. }) { exit::IO } else { exit::SCHEMA };
        Failure::new(code, format!("market: {e}"))
    }
}

impl From<UtilityError> for Failure {
    fn from(e: UtilityError) -> Self {
        let code = if matches!(e, UtilityError::Io { .. }) { exit::IO } else { exit::SCHEMA };
        Failure::new(code, format!("utility: {e}"))
    }
}

impl From<DpError> for Failure {
    fn from(e: DpError) -> Self {
        Failure::new(exit::ASSUMPTION, e.to_string())
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report types serialize")
}

fn verdict(pass: bool) -> Value {
    json!(if pass { "pass" } else { "fail" })
}

pub fn run<I, T>(args: I) -> Outcome
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { exit::USAGE } else { exit::OK };
            let text = e.render().to_string();
            return if code == exit::OK {
                Outcome {
                    code,
                    stdout: text,
                    stderr: String::new(),
                }
            } else {
                Outcome {
                    code,
                    stdout: String::new(),
                    stderr: text,
                }
            };
        }
    };
    let mut log = String::new();
    let result = match &cli.command {
        Command::Validate => validate(&cli, &mut log),
        Command::Audit => audit(&cli, &mut log),
        Command::Solve => solve(&cli, &mut log),
        Command::Reproduce { id, q } => reproduce(&cli, id, *q, &mut log),
    };
    let (code, report) = match result {
        Ok((code, report)) => (code, report),
        Err(f) => {
            let _ = writeln!(log, "error: {}", f.message);
            let report = json!({"command": command_name(&cli.command), "error": f.message});
            (f.code, report)
        }
    };
    let mut report = report;
    report["schema_version"] = json!(SCHEMA_VERSION);
    report["seed"] = json!(cli.seed);
    let text = to_canonical_string(&report) + "\n";
    match &cli.out {
        Some(path) => match write_atomic(path, &text) {
            Ok(()) => Outcome {
                code,
                stdout: String::new(),
                stderr: log,
            },
            Err(e) => {
                let _ = writeln!(log, "error: cannot write {}: {e}", path.display());
                Outcome {
                    code: exit::IO,
                    stdout: String::new(),
                    stderr: log,
                }
            }
        },
        None => Outcome {
            code,
            stdout: text,
            stderr: log,
        },
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Validate => "validate",
        Command::Audit => "audit",
        Command::Solve => "solve",
        Command::Reproduce { .. } => "reproduce",
    }
}

fn write_atomic(path: &Path, text: &str) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp-write");
    std::fs::write(&tmp, text)?;
    std::fs::rename(&tmp, path)
}

fn load(cli: &Cli) -> Result<(Market, Utility), Failure> {
    let mp = cli
        .market
        .as_ref()
        .ok_or_else(|| Failure::new(exit::USAGE, "--market FILE is required"))?;
    let up = cli
        .utility
        .as_ref()
        .ok_or_else(|| Failure::new(exit::USAGE, "--utility FILE is required"))?;
    let market = Market::load(mp)?;
    let utility = Utility::load(up, &market)?;
    if let Some(eta) = cli.eta {
        utility.cert.with_eta(eta)?;
    }
    Ok((market, utility))
}

fn dp_options(cli: &Cli) -> DpOptions {
    let mut opts = DpOptions {
        eta: cli.eta,
        force: cli.force,
        ..DpOptions::default()
    };
    if let Some(g) = cli.grid {
        opts.top.grid = g.max(2);
    }
    opts
}

fn validate(cli: &Cli, log: &mut String) -> Result<(i32, Value), Failure> {
    let (market, utility) = load(cli)?;
    let _ = writeln!(log, "market and utility are valid");
    Ok((
        exit::OK,
        json!({
            "command": "validate",
            "pass": true,
            "market": {
                "horizon": market.tree.horizon(),
                "assets": market.tree.assets(),
                "nodes": market.tree.len(),
                "reachable_paths": market.reachable_paths().len(),
            },
            "utility": {
                "terminal_nodes": utility.terminal_nodes().count(),
                "continuous": utility.is_continuous(),
                "usc": utility.is_usc(),
            },
        }),
    ))
}

struct AuditOutcome {
    report: Value,
    pass: bool,
}

fn run_audit(cli: &Cli, market: &Market, utility: &Utility) -> AuditOutcome {
    let search = find_h_kernel(market);
    let h_pass = search.kernel.is_some();
    let mut report = json!({
        "command": "audit",
        "x0": cli.x0,
        "h_kernel": {
            "found": h_pass,
            "choices": to_value(&search.choices),
            "failing_nodes": search.failing_nodes,
        },
    });
    let mut verdicts = serde_json::Map::new();
    verdicts.insert("scenario_tree".into(), verdict(true));
    verdicts.insert(
        "h_kernel".into(),
        if h_pass { json!("pass") } else { json!("H-kernel not found") },
    );
    let ae = check_ae(utility, market);
    verdicts.insert("asymptotic_elasticity".into(), verdict(ae.pass));
    report["asymptotic_elasticity"] = to_value(&ae);
    let negativity = utility.spec().x_low.as_ref().map(|xl| check_negativity(utility, market, xl));
    verdicts.insert(
        "negativity".into(),
        negativity.as_ref().map_or(json!("not_checked"), |r| verdict(r.pass)),
    );
    report["negativity"] = to_value(&negativity);
    let type_a = utility
        .spec()
        .type_a
        .as_ref()
        .map(|t| check_type_a(utility, market, &t.c1, t.p));
    verdicts.insert(
        "type_a".into(),
        type_a.as_ref().map_or(json!("not_checked"), |r| verdict(r.pass)),
    );
    report["type_a"] = to_value(&type_a);
    let mut pass = h_pass && ae.pass && negativity.as_ref().is_none_or(|r| r.pass);
    if let Some(kernel) = &search.kernel {
        report["h_membership"] = to_value(&check_h_membership(market, kernel));
        let alphas: Vec<Value> = market
            .tree
            .non_terminal()
            .filter(|&n| market.reachable_nodes()[n])
            .map(|n| {
                let key = market.tree.node(n).key();
                match structure::alpha_qna(market, n, kernel) {
                    Ok(a) => json!({"node": key, "alpha": a.value, "method": to_value(&a.method)}),
                    Err(e) => json!({"node": key, "error": e.to_string()}),
                }
            })
            .collect();
        report["alpha"] = json!(alphas);
        match Engine::new(market, utility, Some(kernel.clone()), dp_options(cli)) {
            Ok(engine) => {
                let dp = engine.audit(1.0, cli.x0);
                verdicts.insert("u0_p_finite".into(), verdict(dp.u0_p_finite));
                verdicts.insert("well_defined".into(), verdict(dp.well_defined_pass));
                verdicts.insert("zero_policy_admissible".into(), verdict(dp.zero_policy_failures.is_empty()));
                pass &= dp.pass();
                report["dp"] = to_value(&dp);
            }
            Err(e) => {
                report["dp"] = json!({"error": e.to_string()});
                pass = false;
            }
        }
    }
    report["verdicts"] = Value::Object(verdicts);
    report["pass"] = json!(pass);
    AuditOutcome { report, pass }
}

fn audit(cli: &Cli, log: &mut String) -> Result<(i32, Value), Failure> {
    let (market, utility) = load(cli)?;
    let out = run_audit(cli, &market, &utility);
    if let Some(v) = out.report["verdicts"].as_object() {
        for (k, v) in v {
            let _ = writeln!(log, "{k}: {}", v.as_str().unwrap_or(""));
        }
    }
    Ok((exit::OK, out.report))
}

fn solve(cli: &Cli, log: &mut String) -> Result<(i32, Value), Failure> {
    let (market, utility) = load(cli)?;
    let audit = run_audit(cli, &market, &utility);
    if !audit.pass && !cli.force {
        let _ = writeln!(log, "error: assumptions fail; rerun with --force to solve anyway");
        return Ok((
            exit::ASSUMPTION,
            json!({"command": "solve", "error": "assumptions fail", "audit": audit.report}),
        ));
    }
    let engine = Engine::new(&market, &utility, None, dp_options(cli))?;
    let root = market.tree.root();
    let policy = engine.synthesize_strategy(cli.x0)?;
    let upper = engine.u_cl_value(root, cli.x0)?;
    let robust = engine.robust_value(root, cli.x0)?;
    let strategy = policy.strategy();
    let gap = gap_bound(&market, &utility, &strategy, cli.x0);
    let width = if upper.value.is_finite() && gap.realized_floor.is_finite() {
        Some(upper.value.value() - gap.realized_floor.value())
    } else {
        None
    };
    let nodes: Vec<Value> = policy
        .steps
        .iter()
        .map(|s| {
            let margin = s.k1.map(|k| k - XReal::new(OnePeriodProblem::norm(&s.h)));
            json!({"node": s.node, "wealth": s.wealth, "h": s.h, "value_cl": s.value_cl,
                   "k1": s.k1, "k1_margin": margin, "bound_active": s.bound_active, "in_aff": s.in_aff})
        })
        .collect();
    let mut diagnostics = Vec::new();
    if robust.no_attainment.is_some() {
        diagnostics.push(json!("optimum unattained for Psi"));
    }
    if policy.steps.iter().any(|s| s.bound_active) {
        diagnostics.push(json!("bound-active maximizer"));
    }
    if policy.steps.iter().any(|s| !s.in_aff) {
        diagnostics.push(json!("strategy outside Aff(D)"));
    }
    if !audit.pass {
        diagnostics.push(json!("assumptions fail; results are diagnostic"));
    }
    let type_a_regime = utility.spec().type_a.is_some() && utility.is_usc();
    let collapse = type_a_regime.then(|| {
        let pass = width.is_some_and(|w| w.abs() <= 1e-6);
        json!({"width": width, "tolerance": 1e-6, "pass": pass})
    });
    let _ = writeln!(
        log,
        "bracket [{}, {}], gap bound {}",
        gap.realized_floor, upper.value, gap.bound
    );
    Ok((
        exit::OK,
        json!({
            "command": "solve",
            "x0": cli.x0,
            "bracket": {"lower": gap.realized_floor, "upper": upper.value, "width": width},
            "gap_bound": gap.bound,
            "sup_psi_root": {"value": robust.value, "h": robust.h_hat, "no_attainment": to_value(&robust.no_attainment)},
            "policy": to_value(&policy),
            "nodes": nodes,
            "bracket_collapse": collapse,
            "diagnostics": diagnostics,
            "audit_pass": audit.pass,
        }),
    ))
}

/// The counterexample market with up-probability `q`.
pub fn ce_market(q: f64) -> Result<Market, MarketError> {
    let mut spec: Value = serde_json::from_str(CE_MARKET).expect("bundled market");
    spec["nodes"][0]["prior_vertices"] = json!([[q, 1.0 - q]]);
    Market::from_json_str(&spec.to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Claim {
    pub claim: String,
    pub expected: Value,
    pub observed: Value,
    pub pass: bool,
}

fn claim(name: &str, expected: Value, observed: Value, pass: bool) -> Claim {
    Claim {
        claim: name.to_string(),
        expected,
        observed,
        pass,
    }
}

/// Every claim of the counterexample for a given `q`.
pub fn ce_claims(q: f64) -> Result<Vec<Claim>, String> {
    let market = ce_market(q).map_err(|e| e.to_string())?;
    let utility = Utility::from_json_str(CE_UTILITY, &market).map_err(|e| e.to_string())?;
    let root = market.tree.root();
    let up = market.tree.find_key("up").ok_or("no up node")?;
    let mut out = Vec::new();
    let ae = check_ae(&utility, &market);
    out.push(claim(
        "ae_certificate",
        json!({"gamma_hi": 1, "gamma_lo": 0.5, "C": 1}),
        json!({"violations": ae.violations.len()}),
        ae.pass,
    ));
    let xl = utility.spec().x_low.clone().ok_or("bundled utility has x_low")?;
    let neg = check_negativity(&utility, &market, &xl);
    out.push(claim("negativity", json!({"x_low": -2}), json!(neg.failures), neg.pass));
    let v = utility.at(up);
    let problem = OnePeriodProblem::new(
        market.tree.increments(root),
        market.priors.vertices(root).to_vec(),
        vec![q, 1.0 - q],
        vec![v as &dyn ValueFunction, utility.at(market.tree.find_key("dn").ok_or("no dn node")?)],
        vec![XReal::ONE, XReal::ONE],
        utility.cert.gamma_lo,
        utility.cert.gamma_hi,
        utility.cert.eta,
    )
    .map_err(|e| e.to_string())?;
    let consts = problem.constants(None, N0_CAP).map_err(|e| e.to_string())?;
    let alpha = q.min(1.0 - q);
    out.push(claim(
        "alpha",
        json!(alpha),
        json!(consts.alpha_star),
        (consts.alpha_star - alpha).abs() <= 1e-12,
    ));
    let n0 = (1.0 + 2.0 / alpha).ceil() as u64;
    out.push(claim("n0_star", json!(n0), json!(consts.n0_star), consts.n0_star == Some(n0)));
    out.push(claim("c_star", json!(1), json!(consts.c_star), consts.c_star == XReal::ONE));
    out.push(claim("l_star", json!(1), json!(consts.l_star), consts.l_star == XReal::ONE));
    let k = problem.k_bounds(&consts, 0.0).map_err(|e| e.to_string())?;
    // c* = l* = 1 and Psi(0, 0) = 0, so K1 reduces to two terms.
    let k0 = (n0 as f64 / alpha).powf(1.0 / (1.0 - consts.eta));
    let k1 = k0.max((6.0 / alpha).powf(1.0 / (consts.eta - 0.5)));
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * b;
    out.push(claim(
        "k_bounds",
        json!({"k0": k0, "k1": k1}),
        json!({"k0": k.k0, "k1": k.k1}),
        close(k.k0, k0) && k.k1.is_finite() && close(k.k1.value(), k1),
    ));
    let opts = SearchOptions::default();
    let sup = problem
        .maximize(&consts, 0.0, Objective::Psi, &opts)
        .map_err(|e| e.to_string())?;
    let u0 = q.max(1.0 - q);
    out.push(claim(
        "sup_psi",
        json!(u0),
        json!(sup.value),
        sup.value.is_finite() && (sup.value.value() - u0).abs() <= 1e-6,
    ));
    out.push(claim(
        "non_attainment",
        json!({"limit_point": [0.0], "value_at_limit": 0}),
        to_value(&sup.no_attainment),
        sup.no_attainment.as_ref().is_some_and(|n| n.limit_point == [0.0]),
    ));
    let cl0 = problem.cl_psi(0.0, &[0.0]);
    out.push(claim("closure_at_zero", json!(1), json!(cl0.value), cl0.value == XReal::ONE));
    let cl = problem
        .maximize(&consts, 0.0, Objective::ClPsi, &opts)
        .map_err(|e| e.to_string())?;
    out.push(claim(
        "closure_maximizer",
        json!({"h": [0.0], "value": 1}),
        json!({"h": cl.h_hat, "value": cl.value}),
        cl.h_hat == [0.0] && cl.value == XReal::ONE,
    ));
    out.push(claim(
        "strict_gap",
        json!("u(0) < Cl value"),
        json!({"u0": sup.value, "closure": cl.value}),
        sup.value < cl.value,
    ));
    let strategy = std::collections::BTreeMap::from([(root, cl.h_hat.clone())]);
    let gap = gap_bound(&market, &utility, &strategy, 0.0);
    let realized = sup.value - gap.realized_floor;
    out.push(claim(
        "gap_bound",
        json!({"bound": 1, "realized": u0}),
        json!({"bound": gap.bound, "realized": realized}),
        gap.bound == XReal::ONE && realized <= gap.bound && (realized.value() - u0).abs() <= 1e-6,
    ));
    Ok(out)
}

fn reproduce(_cli: &Cli, id: &str, q: f64, log: &mut String) -> Result<(i32, Value), Failure> {
    if id != "ce-no-cl" {
        return Err(Failure::new(exit::USAGE, format!("unknown example id {id:?}; known: ce-no-cl")));
    }
    if !(q > 0.0 && q < 1.0) {
        return Err(Failure::new(exit::USAGE, format!("q = {q} must lie in (0, 1)")));
    }
    let claims = ce_claims(q).map_err(|e| Failure::new(exit::ASSUMPTION, e))?;
    for c in &claims {
        let _ = writeln!(log, "{} {}", if c.pass { "PASS" } else { "FAIL" }, c.claim);
    }
    let pass = claims.iter().all(|c| c.pass);
    Ok((
        if pass { exit::OK } else { exit::ASSUMPTION },
        json!({"command": "reproduce", "id": id, "q": q, "claims": to_value(&claims), "pass": pass}),
    ))
}
