//! Command-line front end. Every command reads a system and a graph (built-in
//! reference instances when omitted), prints a short table or, with
//! `--json`, a report that embeds the version, tolerances and seed.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::examples;
use crate::extend::{build_extension, check_weak_graph_condition, ConditionReport, LiftedSystem};
use crate::graphs::{DelayedGraph, DirectedGraph, GraphJson};
use crate::linmath::{self, Matrix, C64, EIG_CLUSTER_TOL, PENCIL_RTOL};
use crate::mcsys::{
    deficiency_bound, fixed_spectrum_with, jointly_controllable, jointly_observable, rows_of, transfer_graph,
    FixedSpectrumOptions, MultiChannelSystem, SystemJson, TimeDomain,
};
use crate::setpoint::{solve_setpoint, SetpointController, SetpointMethod, SetpointProblem};
use crate::sim::{
    assemble_observer_closed_loop, assemble_observer_free_closed_loop, estimate_decay_rate, simulate, state_labels,
    ClosedLoop, Trajectory,
};
use crate::synth::{
    assemble_observer_controller, build_lift, lift_condition, observer_free_synthesis, CompensatorMode, DesignOptions,
    DistributedController, LiftSpec, ObserverFreeDesign, Region, ASSIGN_RTOL, SEPARATION_TOL,
};

#[derive(Debug, Parser)]
#[command(name = "distctl", version, about = "Distributed control of multi-channel linear systems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fixed spectrum, deficiency and joint controllability/observability.
    Analyze(AnalyzeArgs),
    /// Build the controller extension over a neighbor graph and check it.
    Extend(ExtendArgs),
    /// Build a delay lift (optionally with state holding) and check it.
    Lift(LiftArgs),
    /// Synthesize a distributed stabilizing controller.
    Synth(SynthArgs),
    /// Synthesize a set-point controller and simulate the step response.
    Setpoint(SetpointArgs),
    /// Synthesize, then simulate the closed loop from a seeded initial state.
    Simulate(SimulateArgs),
    /// Write the built-in reference systems and graphs as JSON files.
    Examples {
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args, Clone)]
pub struct Common {
    /// System JSON file.
    #[arg(long)]
    pub system: Option<PathBuf>,
    /// Graph JSON file (1-based arcs, optional delays).
    #[arg(long)]
    pub graph: Option<PathBuf>,
    /// Relative rank cutoff for pencil tests.
    #[arg(long, default_value_t = PENCIL_RTOL)]
    pub tol: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Print the JSON report instead of a table.
    #[arg(long)]
    pub json: bool,
    /// Directory for report and artifact files.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub common: Common,
    /// Let every agent also measure its neighbors' outputs.
    #[arg(long)]
    pub share_outputs: bool,
}

#[derive(Debug, Args)]
pub struct ExtendArgs {
    #[command(flatten)]
    pub common: Common,
    /// Controller dimensions: `r` (deficiency), one integer, or a list.
    #[arg(long, default_value = "r")]
    pub ni: String,
}

#[derive(Debug, Args)]
pub struct LiftArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value = "r")]
    pub ni: String,
    /// `none` (plain delay lift), `all` (state holding) or 1-based agents.
    #[arg(long, default_value = "all")]
    pub hold: String,
    /// Holders read their own unheld state alongside their registers.
    #[arg(long)]
    pub own_raw: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Architecture {
    ObserverBased,
    ObserverFree,
}

#[derive(Debug, Args, Clone)]
pub struct DesignArgs {
    #[arg(long, value_enum, default_value_t = Architecture::ObserverBased)]
    pub arch: Architecture,
    /// Decay rate for continuous-time plants.
    #[arg(long, default_value_t = 2.0)]
    pub alpha: f64,
    /// Spectral-radius bound for discrete-time plants.
    #[arg(long, default_value_t = 0.5)]
    pub rho: f64,
    #[arg(long, default_value = "full")]
    pub mode: CompensatorMode,
    /// Channel carrying the dynamic compensator (1-based); automatic if omitted.
    #[arg(long)]
    pub q: Option<usize>,
    /// Controller dimensions for observer-free designs.
    #[arg(long, default_value = "r")]
    pub ni: String,
    /// Holding mode when the graph carries delays.
    #[arg(long, default_value = "all")]
    pub hold: String,
    #[arg(long)]
    pub own_raw: bool,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub design: DesignArgs,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub design: DesignArgs,
    /// Final time (steps in discrete time); defaults to 30/alpha or 50 steps.
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Sample spacing (continuous time only).
    #[arg(long)]
    pub dt: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SetpointArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub design: DesignArgs,
    /// Set-points, comma separated or a JSON array.
    #[arg(long, allow_hyphen_values = true)]
    pub r: String,
    /// Final time; defaults to 20/alpha or 50 steps.
    #[arg(long)]
    pub horizon: Option<f64>,
}

/// Outcome of a command; `verdict = false` maps to exit code 1.
pub struct Outcome {
    pub verdict: bool,
}

pub fn exit_code(err: &Error) -> i32 {
    match err.root() {
        Error::Domain(_) => 1,
        Error::InvalidInput(_) | Error::Resource(_) | Error::Io(_) | Error::Json(_) => 2,
        Error::Synthesis(_) | Error::Numerical(_) => 3,
        Error::Stage { .. } => unreachable!("root peels stage labels"),
    }
}

pub fn run(cli: Cli) -> Result<Outcome> {
    match cli.command {
        Command::Analyze(a) => cmd_analyze(&a),
        Command::Extend(a) => cmd_extend(&a),
        Command::Lift(a) => cmd_lift(&a),
        Command::Synth(a) => cmd_synth(&a),
        Command::Setpoint(a) => cmd_setpoint(&a),
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Examples { out } => cmd_examples(&out).map(|()| Outcome { verdict: true }),
    }
}

// ---- input ----

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::invalid(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))
}

fn load_system(common: &Common, default: fn() -> MultiChannelSystem) -> Result<MultiChannelSystem> {
    match &common.system {
        Some(p) => read_json::<SystemJson>(p)?.to_system(),
        None => Ok(default()),
    }
}

enum LoadedGraph {
    Plain(DirectedGraph),
    Delayed(DelayedGraph),
}

impl LoadedGraph {
    fn plain(&self) -> &DirectedGraph {
        match self {
            LoadedGraph::Plain(g) => g,
            LoadedGraph::Delayed(d) => d.graph(),
        }
    }
}

fn load_graph(common: &Common, default: fn() -> LoadedGraph) -> Result<LoadedGraph> {
    match &common.graph {
        Some(p) => {
            let gj: GraphJson = read_json(p)?;
            if gj.delays.is_some() {
                Ok(LoadedGraph::Delayed(gj.to_delayed_graph()?))
            } else {
                Ok(LoadedGraph::Plain(gj.to_graph()?))
            }
        }
        None => Ok(default()),
    }
}

fn default_cycle() -> LoadedGraph {
    LoadedGraph::Plain(examples::cycle_graph())
}

fn default_delays() -> LoadedGraph {
    LoadedGraph::Delayed(examples::path_delays())
}

/// `r` gives every agent the deficiency bound; one integer is broadcast.
pub fn parse_ni(spec: &str, sys: &MultiChannelSystem) -> Result<Vec<usize>> {
    let m = sys.m();
    let s = spec.trim();
    if s.eq_ignore_ascii_case("r") {
        return Ok(vec![deficiency_bound(sys)?; m]);
    }
    let vals = parse_list::<usize>(s, "--ni")?;
    match vals.len() {
        1 => Ok(vec![vals[0]; m]),
        k if k == m => Ok(vals),
        k => Err(Error::invalid(format!("--ni has {k} entries for {m} agents"))),
    }
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    let inner = s.trim().trim_start_matches('[').trim_end_matches(']');
    inner
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<T>()
                .map_err(|_| Error::invalid(format!("{what}: cannot parse {t:?}")))
        })
        .collect()
}

enum Hold {
    None,
    All,
    Some(BTreeSet<usize>),
}

fn parse_hold(s: &str, m: usize) -> Result<Hold> {
    match s.trim() {
        "none" => Ok(Hold::None),
        "all" => Ok(Hold::All),
        other => {
            let mut set = BTreeSet::new();
            for v in parse_list::<usize>(other, "--hold")? {
                if v == 0 || v > m {
                    return Err(Error::invalid(format!("--hold label {v} outside 1..{m}")));
                }
                set.insert(v - 1);
            }
            Ok(Hold::Some(set))
        }
    }
}

fn lift_spec(graph: &LoadedGraph, hold: &str, own_raw: bool) -> Result<LiftSpec> {
    Ok(match graph {
        LoadedGraph::Plain(g) => LiftSpec::Extension(g.clone()),
        LoadedGraph::Delayed(d) => match parse_hold(hold, d.m())? {
            Hold::None => LiftSpec::Delay(d.clone()),
            Hold::All => LiftSpec::StateHolding(d.clone()),
            Hold::Some(holders) => LiftSpec::Selective {
                graph: d.clone(),
                holders,
                own_raw,
            },
        },
    })
}

fn region(sys: &MultiChannelSystem, d: &DesignArgs) -> Region {
    match sys.domain {
        TimeDomain::Continuous => Region::Continuous { alpha: d.alpha },
        TimeDomain::Discrete => Region::Discrete { rho: d.rho },
    }
}

fn design_options(sys: &MultiChannelSystem, d: &DesignArgs, seed: u64) -> DesignOptions {
    DesignOptions {
        region: region(sys, d),
        mode: d.mode,
        lambda: None,
        seed,
    }
}

fn channel_arg(q: Option<usize>, m: usize) -> Result<Option<usize>> {
    match q {
        None => Ok(None),
        Some(v) if v >= 1 && v <= m => Ok(Some(v - 1)),
        Some(v) => Err(Error::invalid(format!("--q {v} outside 1..{m}"))),
    }
}

// ---- output ----

fn mat(m: &Matrix) -> Value {
    json!(rows_of(m))
}

fn cplx(v: &[C64]) -> Value {
    Value::Array(v.iter().map(|z| json!([z.re, z.im])).collect())
}

fn labels(s: &[usize]) -> Vec<usize> {
    s.iter().map(|i| i + 1).collect()
}

fn header(command: &str, common: &Common) -> Map<String, Value> {
    let mut h = Map::new();
    h.insert("tool".into(), json!("distctl"));
    h.insert("version".into(), json!(env!("CARGO_PKG_VERSION")));
    h.insert("command".into(), json!(command));
    h.insert("seed".into(), json!(common.seed));
    h.insert(
        "tolerances".into(),
        json!({
            "pencil_rtol": common.tol,
            "eig_cluster": EIG_CLUSTER_TOL,
            "assignment_rtol": ASSIGN_RTOL,
            "separation": SEPARATION_TOL,
        }),
    );
    h
}

fn condition_json(c: &ConditionReport) -> Value {
    json!({
        "condition": c.condition,
        "verdict": c.verdict,
        "failing": c.failing.iter().map(|f| json!({
            "subset": labels(&f.subset),
            "lambda": [f.lambda.re, f.lambda.im],
            "rank": f.rank,
        })).collect::<Vec<_>>(),
        "lifted_dim": c.lifted_dim,
        "controller_dim": c.controller_dim,
        "holding_dim": c.holding_dim,
        "lifted_fixed": cplx(&c.lifted_fixed),
        "identity_checks": c.identity_checks.iter().map(|r| json!({
            "subset": labels(&r.subset),
            "lambda": [r.lambda.re, r.lambda.im],
            "lifted_rank": r.lifted_rank,
            "predicted_rank": r.predicted_rank,
        })).collect::<Vec<_>>(),
    })
}

fn lifted_json(l: &LiftedSystem) -> Value {
    json!({
        "kind": l.kind,
        "ni": l.ni,
        "depth": l.depth,
        "base_n": l.base_n,
        "layout": l.layout,
        "system": l.system.to_json(),
    })
}

fn indexed(ms: &[Matrix]) -> Value {
    let mut o = Map::new();
    for (i, m) in ms.iter().enumerate() {
        o.insert((i + 1).to_string(), mat(m));
    }
    Value::Object(o)
}

fn keyed(ms: &BTreeMap<usize, Matrix>) -> Value {
    let mut o = Map::new();
    for (j, m) in ms {
        o.insert((j + 1).to_string(), mat(m));
    }
    Value::Object(o)
}

fn observer_controller_json(c: &DistributedController) -> Value {
    let mut h = Map::new();
    for (i, row) in c.h.iter().enumerate() {
        h.insert((i + 1).to_string(), keyed(row));
    }
    json!({
        "architecture": "observer_based",
        "q": c.q + 1,
        "mode": c.mode,
        "nu": c.nu(),
        "F": indexed(&c.f),
        "K": indexed(&c.k),
        "H": Value::Object(h),
        "channel": {
            "A": mat(&c.channel_a),
            "K": mat(&c.k_bar),
            "H": keyed(&c.h_bar),
            "C": mat(&c.channel_c),
        },
        "state_targets": cplx(&c.state_targets),
        "lambda": cplx(&c.lambda),
        "sample": c.sample,
    })
}

fn observer_free_json(d: &ObserverFreeDesign) -> Value {
    json!({
        "architecture": "observer_free",
        "lift": lifted_json(&d.lifted),
        "condition": condition_json(&d.condition),
        "q": d.q + 1,
        "F": indexed(&d.f),
        "completion_attempts": d.completion_attempts,
        "compensator": {
            "mode": d.compensator.mode,
            "A": mat(&d.compensator.a),
            "B": mat(&d.compensator.b),
            "C": mat(&d.compensator.c),
            "D": mat(&d.compensator.d),
        },
        "lambda": cplx(&d.lambda),
    })
}

fn emit(common: &Common, report: &Value, table: &str, artifacts: &[(&str, String)]) -> Result<()> {
    let text = serde_json::to_string_pretty(report)? + "\n";
    if let Some(dir) = &common.out {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("report.json"), &text)?;
        for (name, body) in artifacts {
            fs::write(dir.join(name), body)?;
        }
    }
    if common.json {
        print!("{text}");
    } else {
        print!("{table}");
    }
    Ok(())
}

fn fmt_c(z: C64) -> String {
    if z.im.abs() < 1e-12 {
        format!("{:.6}", z.re)
    } else {
        format!("{:.6}{:+.6}i", z.re, z.im)
    }
}

// ---- commands ----

fn cmd_analyze(a: &AnalyzeArgs) -> Result<Outcome> {
    let c = &a.common;
    let mut sys = load_system(c, examples::three_channel_system)?;
    if a.share_outputs {
        let g = load_graph(c, default_cycle)?;
        sys = sys.with_shared_outputs(g.plain())?;
    }
    let opts = FixedSpectrumOptions {
        rank_rtol: c.tol,
        ..FixedSpectrumOptions::default()
    };
    let rep = fixed_spectrum_with(&sys, &opts)?;
    let ctrb = jointly_controllable(&sys)?;
    let obs = jointly_observable(&sys)?;
    let tg = transfer_graph(&sys)?;
    let fixed: Vec<Value> = rep
        .fixed
        .iter()
        .map(|f| {
            json!({
                "lambda": [f.value.re, f.value.im],
                "witnesses": f.witnesses.iter().map(|w| json!({
                    "subset": labels(&w.subset),
                    "rank": w.rank,
                    "smallest_kept": w.smallest_kept,
                    "largest_dropped": w.largest_dropped,
                })).collect::<Vec<_>>(),
            })
        })
        .collect();
    let mut report = header("analyze", c);
    report.insert("n".into(), json!(sys.n()));
    report.insert("m".into(), json!(sys.m()));
    report.insert("domain".into(), json!(sys.domain));
    report.insert("shared_outputs".into(), json!(a.share_outputs));
    report.insert("fixed".into(), Value::Array(fixed));
    report.insert("deficiency_r".into(), json!(rep.deficiency_r));
    report.insert("jointly_controllable".into(), json!(ctrb));
    report.insert("jointly_observable".into(), json!(obs));
    report.insert("transfer_graph_strongly_connected".into(), json!(tg.is_strongly_connected()));

    let mut t = format!("n = {}, m = {}, {:?}\n", sys.n(), sys.m(), sys.domain);
    if rep.fixed.is_empty() {
        t.push_str("fixed spectrum: empty\n");
    }
    for f in &rep.fixed {
        t.push_str(&format!("fixed eigenvalue {}\n", fmt_c(f.value)));
        for w in &f.witnesses {
            t.push_str(&format!("  subset {:?}: pencil rank {} < {}\n", labels(&w.subset), w.rank, sys.n()));
        }
    }
    t.push_str(&format!(
        "deficiency r = {}\njointly controllable: {ctrb}\njointly observable: {obs}\ntransfer graph strongly connected: {}\n",
        rep.deficiency_r,
        tg.is_strongly_connected()
    ));
    emit(c, &Value::Object(report), &t, &[])?;
    Ok(Outcome { verdict: true })
}

fn lift_report(c: &Common, sys: &MultiChannelSystem, spec: &LiftSpec, ni: &[usize]) -> Result<Outcome> {
    let cond = lift_condition(sys, spec, ni)?;
    let lifted = build_lift(sys, spec, ni)?;
    let mut report = header("lift", c);
    report.insert("ni".into(), json!(ni));
    report.insert("condition".into(), condition_json(&cond));
    let lifted_text = serde_json::to_string_pretty(&lifted_json(&lifted))? + "\n";
    let mut t = format!(
        "{:?}: lifted dimension {}, controller states {}, holding states {}\n",
        lifted.kind,
        lifted.n(),
        lifted.controller_dim(),
        lifted.holding_dim()
    );
    if cond.lifted_fixed.is_empty() {
        t.push_str("lifted fixed spectrum: empty\n");
    } else {
        let vals: Vec<String> = cond.lifted_fixed.iter().map(|z| fmt_c(*z)).collect();
        t.push_str(&format!("lifted fixed spectrum: {}\n", vals.join(", ")));
    }
    for f in &cond.failing {
        t.push_str(&format!(
            "  failing subset {:?} at {}: rank {}\n",
            labels(&f.subset),
            fmt_c(f.lambda),
            f.rank
        ));
    }
    t.push_str(&format!("verdict: {}\n", if cond.verdict { "pass" } else { "fail" }));
    emit(c, &Value::Object(report), &t, &[("lifted.json", lifted_text)])?;
    Ok(Outcome { verdict: cond.verdict })
}

/// Verdict is the extension's own fixed spectrum being empty; the graph
/// intersection test is reported alongside.
fn cmd_extend(a: &ExtendArgs) -> Result<Outcome> {
    let c = &a.common;
    let sys = load_system(c, examples::three_channel_system)?;
    let g = load_graph(c, default_cycle)?;
    let ni = parse_ni(&a.ni, &sys)?;
    let graph_cond = check_weak_graph_condition(&sys, g.plain())?;
    let lifted = build_extension(&sys, g.plain(), &ni)?;
    let opts = FixedSpectrumOptions {
        rank_rtol: c.tol,
        ..FixedSpectrumOptions::default()
    };
    let fixed = fixed_spectrum_with(&lifted.system, &opts)?;
    let verdict = fixed.is_empty();
    let mut report = header("extend", c);
    report.insert("ni".into(), json!(ni));
    report.insert("lifted_dim".into(), json!(lifted.n()));
    report.insert("lifted_fixed".into(), cplx(&fixed.fixed_eigenvalues()));
    report.insert("verdict".into(), json!(verdict));
    report.insert("graph_condition".into(), condition_json(&graph_cond));
    let mut t = format!(
        "extension with n_i = {:?}: dimension {}\n",
        ni,
        lifted.n()
    );
    if verdict {
        t.push_str("extension fixed spectrum: empty\n");
    }
    for f in &fixed.fixed {
        t.push_str(&format!("extension fixed eigenvalue {}\n", fmt_c(f.value)));
    }
    t.push_str(&format!(
        "graph intersection condition: {}\n",
        if graph_cond.verdict { "holds" } else { "fails" }
    ));
    for f in &graph_cond.failing {
        t.push_str(&format!(
            "  subset {:?} at {} has no neighbor outside it\n",
            labels(&f.subset),
            fmt_c(f.lambda)
        ));
    }
    t.push_str(&format!("verdict: {}\n", if verdict { "pass" } else { "fail" }));
    let lifted_text = serde_json::to_string_pretty(&lifted_json(&lifted))? + "\n";
    emit(c, &Value::Object(report), &t, &[("lifted.json", lifted_text)])?;
    Ok(Outcome { verdict })
}

fn cmd_lift(a: &LiftArgs) -> Result<Outcome> {
    let c = &a.common;
    let sys = load_system(c, examples::discrete_three_channel_system)?;
    let g = load_graph(c, default_delays)?;
    if matches!(g, LoadedGraph::Plain(_)) {
        return Err(Error::invalid("lift needs a graph with delays"));
    }
    let ni = parse_ni(&a.ni, &sys)?;
    let spec = lift_spec(&g, &a.hold, a.own_raw)?;
    lift_report(c, &sys, &spec, &ni)
}

/// A synthesized controller together with its loop in implementation
/// coordinates.
struct Designed {
    controller: Value,
    closed_loop: ClosedLoop,
    assignment_error: f64,
    q: usize,
}

fn design(sys: &MultiChannelSystem, graph: &LoadedGraph, d: &DesignArgs, seed: u64) -> Result<Designed> {
    let opts = design_options(sys, d, seed);
    let q = channel_arg(d.q, sys.m())?;
    match d.arch {
        Architecture::ObserverBased => {
            let g = graph.plain();
            let des = assemble_observer_controller(sys, g, q, &opts)?;
            let cl = assemble_observer_closed_loop(sys, g, &des.controller, None)?;
            Ok(Designed {
                controller: observer_controller_json(&des.controller),
                closed_loop: cl,
                assignment_error: des.assignment.max_rel_error,
                q: des.controller.q,
            })
        }
        Architecture::ObserverFree => {
            let ni = parse_ni(&d.ni, sys)?;
            let spec = lift_spec(graph, &d.hold, d.own_raw)?;
            let des = observer_free_synthesis(sys, &spec, &ni, q, &opts)?;
            let cl = assemble_observer_free_closed_loop(sys, &des, None)?;
            Ok(Designed {
                controller: observer_free_json(&des),
                closed_loop: cl,
                assignment_error: des.assignment.max_rel_error,
                q: des.q,
            })
        }
    }
}

fn spectrum_summary(sys: &MultiChannelSystem, cl: &ClosedLoop, region: Region) -> Result<(Value, String, bool)> {
    let spec = linmath::spectrum(&cl.matrix)?;
    let (name, value, ok) = match region {
        Region::Continuous { alpha } => ("abscissa", spec.abscissa(), spec.abscissa() <= -alpha + 1e-6),
        Region::Discrete { rho } => ("radius", spec.radius(), spec.radius() <= rho + 1e-6),
    };
    let v = json!({
        "dim": cl.dim(),
        "eigenvalues": cplx(&spec.eigenvalues),
        name: value,
        "region": region,
        "in_region": ok,
    });
    let t = format!(
        "{:?} closed loop of dimension {}: spectral {name} {value:.6} ({})\n",
        sys.domain,
        cl.dim(),
        if ok { "inside the region" } else { "OUTSIDE the region" }
    );
    Ok((v, t, ok))
}

fn cmd_synth(a: &SynthArgs) -> Result<Outcome> {
    let c = &a.common;
    let sys = load_system(c, examples::three_channel_system)?;
    let g = load_graph(c, default_cycle)?;
    let des = design(&sys, &g, &a.design, c.seed)?;
    let reg = region(&sys, &a.design);
    let (eig, mut t, ok) = spectrum_summary(&sys, &des.closed_loop, reg)?;
    t.insert_str(
        0,
        &format!(
            "compensator channel q = {}, assignment error {:.3e}\n",
            des.q + 1,
            des.assignment_error
        ),
    );
    let mut report = header("synth", c);
    report.insert("assignment_max_rel_error".into(), json!(des.assignment_error));
    report.insert("closed_loop".into(), eig);
    report.insert("controller".into(), des.controller.clone());
    let ctl_text = serde_json::to_string_pretty(&des.controller)? + "\n";
    emit(c, &Value::Object(report), &t, &[("controller.json", ctl_text)])?;
    Ok(Outcome { verdict: ok })
}

fn seeded_state(dim: usize, seed: u64) -> DVector<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DVector::from_fn(dim, |_, _| rng.random_range(-1.0..=1.0))
}

fn horizon_and_step(sys: &MultiChannelSystem, d: &DesignArgs, horizon: Option<f64>, dt: Option<f64>, scale: f64) -> (f64, f64) {
    match sys.domain {
        TimeDomain::Continuous => {
            let h = horizon.unwrap_or(scale / d.alpha);
            (h, dt.unwrap_or(h / 1000.0))
        }
        TimeDomain::Discrete => (horizon.unwrap_or(50.0), 1.0),
    }
}

fn cmd_simulate(a: &SimulateArgs) -> Result<Outcome> {
    let c = &a.common;
    let sys = load_system(c, examples::three_channel_system)?;
    let g = load_graph(c, default_cycle)?;
    let des = design(&sys, &g, &a.design, c.seed)?;
    let cl = &des.closed_loop;
    let (h, dt) = horizon_and_step(&sys, &a.design, a.horizon, a.dt, 30.0);
    let x0 = seeded_state(cl.dim(), c.seed);
    let tr = simulate(cl, &x0, &DVector::zeros(cl.input.ncols()), h, dt)?;
    let fit = estimate_decay_rate(&tr)?;
    let (eig, _, ok) = spectrum_summary(&sys, cl, region(&sys, &a.design))?;
    let csv = tr.to_csv(&state_labels(cl));
    let mut report = header("simulate", c);
    report.insert("horizon".into(), json!(h));
    report.insert("dt".into(), json!(dt));
    report.insert("decay_rate".into(), json!(fit.rate));
    report.insert("decay_clamped".into(), json!(fit.clamped));
    report.insert("final_state_norm".into(), json!(tr.final_state().norm()));
    report.insert("closed_loop".into(), eig);
    let t = if c.out.is_none() && !c.json {
        csv.clone()
    } else {
        format!(
            "{} samples, final |x| = {:.3e}, fitted decay rate {:.4}{}\n",
            tr.times.len(),
            tr.final_state().norm(),
            fit.rate,
            if sys.domain == TimeDomain::Discrete { " per step (log scale)" } else { "" }
        )
    };
    emit(c, &Value::Object(report), &t, &[("trajectory.csv", csv)])?;
    Ok(Outcome { verdict: ok })
}

fn setpoint_trajectory(cl: &ClosedLoop, r: &DVector<f64>, h: f64, dt: f64) -> Result<Trajectory> {
    simulate(cl, &DVector::zeros(cl.dim()), r, h, dt)
}

fn cmd_setpoint(a: &SetpointArgs) -> Result<Outcome> {
    let c = &a.common;
    let sys = load_system(c, examples::setpoint_reference_system)?;
    let g = load_graph(c, default_cycle)?;
    let r = parse_list::<f64>(&a.r, "--r")?;
    let problem = SetpointProblem::new(sys.clone(), r)?;
    let method = match a.design.arch {
        Architecture::ObserverBased => SetpointMethod::ObserverBased,
        Architecture::ObserverFree => SetpointMethod::ObserverFree {
            ni: parse_ni(&a.design.ni, &sys)?,
        },
    };
    let sol = solve_setpoint(&problem, g.plain(), &method, region(&sys, &a.design), a.design.mode, c.seed)?;
    let (h, dt) = horizon_and_step(&sys, &a.design, a.horizon, None, 20.0);
    let rv = problem.reference();
    let tr = setpoint_trajectory(&sol.closed_loop, &rv, h, dt)?;
    let y = tr.final_output();
    let errs: Vec<f64> = (0..rv.len()).map(|i| (y[i] - rv[i]).abs()).collect();
    let worst = errs.iter().copied().fold(0.0, f64::max);
    let controller = match &sol.controller {
        SetpointController::ObserverBased(ctl) => observer_controller_json(ctl),
        SetpointController::ObserverFree(d) => observer_free_json(d),
    };
    let mut report = header("setpoint", c);
    report.insert("r".into(), json!(problem.r));
    report.insert("feasibility".into(), serde_json::to_value(&sol.feasibility)?);
    report.insert("equilibrium_outputs".into(), json!(sol.equilibrium.outputs.as_slice()));
    report.insert("equilibrium_residual".into(), json!(sol.equilibrium.residual));
    report.insert("horizon".into(), json!(h));
    report.insert("final_outputs".into(), json!(y.as_slice()));
    report.insert("final_errors".into(), json!(errs));
    report.insert("controller".into(), controller.clone());
    let mut t = format!(
        "rank [A B; C 0] = {} (required {})\n",
        sol.feasibility.rank, sol.feasibility.required
    );
    for i in 0..rv.len() {
        t.push_str(&format!(
            "agent {}: r = {}, y(T) = {:.6}, |y - r| = {:.3e}\n",
            i + 1,
            rv[i],
            y[i],
            errs[i]
        ));
    }
    let ctl_text = serde_json::to_string_pretty(&controller)? + "\n";
    let csv = tr.to_csv(&state_labels(&sol.closed_loop));
    emit(
        c,
        &Value::Object(report),
        &t,
        &[("controller.json", ctl_text), ("trajectory.csv", csv)],
    )?;
    Ok(Outcome { verdict: worst <= 1e-3 })
}

fn cmd_examples(out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    let systems = [
        ("three_channel.json", examples::three_channel_system()),
        ("three_channel_discrete.json", examples::discrete_three_channel_system()),
        ("delayed_reference.json", examples::delayed_reference_system()),
        ("setpoint_reference.json", examples::setpoint_reference_system()),
    ];
    for (name, s) in systems {
        fs::write(out.join(name), serde_json::to_string_pretty(&s.to_json())? + "\n")?;
    }
    let graphs = [
        ("cycle.json", examples::cycle_graph().to_json()),
        ("path_delays.json", examples::path_delays().to_json()),
        ("path_delays_long.json", examples::path_delays_long().to_json()),
    ];
    for (name, g) in graphs {
        fs::write(out.join(name), serde_json::to_string_pretty(&g)? + "\n")?;
    }
    Ok(())
}
