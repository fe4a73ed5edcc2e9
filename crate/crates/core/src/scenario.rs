//! Scenario files and the analyze / design / simulate / compare pipeline.
//!
//! A scenario is line-oriented text in sections. `#` starts a comment.
//!
//! ```text
//! [scenario]    name, seed, horizon, sample_time, tau_unit, steady_state_start
//! [observer]    model, measurement_variance, process_variance, initial_variance,
//!               weight_rule, gain_method, margin, max_iterations, rank_tol,
//!               initial_estimate
//! [network]     topology = ring(8,2)   or   nodes = N, directed, link = i j [w]
//! [hdv]         one section per HDV: lambda, tau, alpha1, alpha2, beta1, beta2,
//!               noise_std, distance_threshold, position, velocity, front,
//!               desired_velocity, velocity_change = <time s> <value>
//! [sensors]     <cav> = <hdv>.<component> ...
//! [faults]      remove_link = <step> <i> <j> [redesign]
//!               remove_node = <step> <i> [redesign]
//! ```
//!
//! `tau` is counted in units of `tau_unit` seconds (default: one sample) and
//! converted to whole steps by flooring `tau · tau_unit / sample_time`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::graph::{link_connectivity, node_connectivity, DirectedGraph, NamedTopology};
use crate::matrix::{
    assemble_ahat, build_dc, build_row_stochastic, kronecker, spectral_radius, DenseMatrix, DenseVector, WeightRule,
};
use crate::observer::{
    compute_metrics, generate_measurements, run_centralized_kalman, run_distributed, truth_states, CentralizedSetup,
    DistributedSetup, FaultEvent, FaultKind, Metrics, SimulationTrace,
};
use crate::structural::{
    distributed_structural_observability, numeric_observability_check, ObservabilityVerdict, RankTolerance,
    SensorPlacement, StructuredMatrix,
};
use crate::synthesis::{synthesize_gain, GainMethod, ObserverGain, SynthesisConfig, SynthesisResult};
use crate::traffic::{
    build_observer_model, simulate_ground_truth, GroundTruth, HdvParams, HdvSpec, ModelKind, ModelMatrices,
    VelocityProfile,
};

#[derive(Debug, Clone, PartialEq)]
pub struct HdvEntry {
    pub lambda: f64,
    /// In units of the scenario's `tau_unit`.
    pub tau: usize,
    pub alpha1: f64,
    pub alpha2: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub noise_std: f64,
    pub distance_threshold: f64,
    pub position: f64,
    pub velocity: f64,
    pub front: Option<usize>,
    pub desired_velocity: f64,
    /// `(time in seconds, new desired velocity)`.
    pub velocity_changes: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Topology {
    Named(NamedTopology),
    Inline {
        nodes: usize,
        directed: bool,
        links: Vec<(usize, usize, Option<f64>)>,
    },
}

impl Topology {
    pub fn node_count(&self) -> usize {
        match self {
            Topology::Named(t) => t.node_count(),
            Topology::Inline { nodes, .. } => *nodes,
        }
    }

    /// Communication graph without self-loops.
    pub fn graph(&self) -> Result<DirectedGraph> {
        match self {
            Topology::Named(t) => Ok(t.build()),
            Topology::Inline { nodes, directed, links } => {
                let mut g = DirectedGraph::new(*nodes);
                for &(a, b, w) in links {
                    let arcs: &[(usize, usize)] = if *directed || a == b { &[(a, b)] } else { &[(a, b), (b, a)] };
                    for &(x, y) in arcs {
                        match w {
                            Some(w) => g.add_weighted_link(x, y, w)?,
                            None => g.add_link(x, y)?,
                        }
                    }
                }
                Ok(g)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SensorRef {
    pub hdv: usize,
    pub component: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObserverSettings {
    pub model: ModelKind,
    pub measurement_variance: f64,
    pub process_variance: f64,
    pub initial_variance: f64,
    pub weight_rule: WeightRule,
    pub synthesis: SynthesisConfig,
    pub rank_tol: Option<f64>,
    pub initial_estimate: Option<Vec<f64>>,
}

impl Default for ObserverSettings {
    fn default() -> Self {
        Self {
            model: ModelKind::Ncv,
            measurement_variance: 0.1,
            process_variance: 0.01,
            initial_variance: 1e4,
            weight_rule: WeightRule::Uniform,
            synthesis: SynthesisConfig::default(),
            rank_tol: None,
            initial_estimate: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    pub horizon: usize,
    pub sample_time: f64,
    pub tau_unit: Option<f64>,
    pub steady_state_start: usize,
    pub observer: ObserverSettings,
    pub topology: Topology,
    pub hdvs: Vec<HdvEntry>,
    /// Per CAV; CAVs without sensors have an empty list.
    pub sensors: Vec<Vec<SensorRef>>,
    pub faults: Vec<FaultEvent>,
}

/// One validation or syntax problem.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioIssue {
    pub line: Option<usize>,
    pub path: String,
    pub msg: String,
}

impl fmt::Display for ScenarioIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}: {}", self.path, self.msg),
            None => write!(f, "{}: {}", self.path, self.msg),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioErrors(pub Vec<ScenarioIssue>);

impl fmt::Display for ScenarioErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, issue) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{issue}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ScenarioErrors {}

fn component_names(model: ModelKind) -> &'static [&'static str] {
    match model {
        ModelKind::Ncv => &["position", "velocity"],
        ModelKind::Nca => &["a_x", "a_y", "v_x", "v_y", "p_x", "p_y"],
    }
}

struct Entry {
    key: String,
    value: String,
    line: usize,
}

struct Section {
    name: String,
    line: usize,
    entries: Vec<Entry>,
}

struct Reader {
    issues: Vec<ScenarioIssue>,
}

impl Reader {
    fn issue(&mut self, line: Option<usize>, path: impl Into<String>, msg: impl Into<String>) {
        self.issues.push(ScenarioIssue {
            line,
            path: path.into(),
            msg: msg.into(),
        });
    }

    fn value<T: FromStr>(&mut self, e: &Entry, path: &str) -> Option<T>
    where
        T::Err: fmt::Display,
    {
        match e.value.trim().parse::<T>() {
            Ok(v) => Some(v),
            Err(err) => {
                self.issue(Some(e.line), path, format!("invalid value `{}`: {err}", e.value.trim()));
                None
            }
        }
    }

    fn numbers(&mut self, e: &Entry, path: &str) -> Option<Vec<f64>> {
        let mut out = Vec::new();
        for tok in e.value.split_whitespace() {
            match tok.parse::<f64>() {
                Ok(v) => out.push(v),
                Err(err) => {
                    self.issue(Some(e.line), path, format!("invalid number `{tok}`: {err}"));
                    return None;
                }
            }
        }
        Some(out)
    }
}

fn split_sections(text: &str, reader: &mut Reader) -> Vec<Section> {
    let mut sections: Vec<Section> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(rest) = content.strip_prefix('[') {
            match rest.strip_suffix(']') {
                Some(name) => sections.push(Section {
                    name: name.trim().to_string(),
                    line,
                    entries: Vec::new(),
                }),
                None => reader.issue(Some(line), "syntax", format!("malformed section header `{content}`")),
            }
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            reader.issue(Some(line), "syntax", format!("expected `key = value`, found `{content}`"));
            continue;
        };
        match sections.last_mut() {
            Some(s) => s.entries.push(Entry {
                key: key.trim().to_string(),
                value: value.trim().to_string(),
                line,
            }),
            None => reader.issue(Some(line), "syntax", "entry before the first section header"),
        }
    }
    sections
}

/// Tracks single-valued keys within one section.
struct Seen(BTreeSet<String>);

impl Seen {
    fn first(&mut self, reader: &mut Reader, e: &Entry, path: &str) -> bool {
        if !self.0.insert(e.key.clone()) {
            reader.issue(Some(e.line), path, "duplicate key");
            return false;
        }
        true
    }
}

fn parse_scenario_section(s: &Section, r: &mut Reader, sc: &mut Scenario) {
    let mut seen = Seen(BTreeSet::new());
    for e in &s.entries {
        let path = format!("scenario.{}", e.key);
        if !seen.first(r, e, &path) {
            continue;
        }
        match e.key.as_str() {
            "name" => sc.name = e.value.clone(),
            "seed" => sc.seed = r.value(e, &path).unwrap_or(sc.seed),
            "horizon" => sc.horizon = r.value(e, &path).unwrap_or(sc.horizon),
            "sample_time" => sc.sample_time = r.value(e, &path).unwrap_or(sc.sample_time),
            "tau_unit" => sc.tau_unit = r.value(e, &path),
            "steady_state_start" => sc.steady_state_start = r.value(e, &path).unwrap_or(sc.steady_state_start),
            _ => r.issue(Some(e.line), path, "unknown key"),
        }
    }
}

fn parse_observer_section(s: &Section, r: &mut Reader, obs: &mut ObserverSettings) {
    let mut seen = Seen(BTreeSet::new());
    for e in &s.entries {
        let path = format!("observer.{}", e.key);
        if !seen.first(r, e, &path) {
            continue;
        }
        match e.key.as_str() {
            "model" => obs.model = r.value(e, &path).unwrap_or(obs.model),
            "measurement_variance" => obs.measurement_variance = r.value(e, &path).unwrap_or(obs.measurement_variance),
            "process_variance" => obs.process_variance = r.value(e, &path).unwrap_or(obs.process_variance),
            "initial_variance" => obs.initial_variance = r.value(e, &path).unwrap_or(obs.initial_variance),
            "weight_rule" => match e.value.as_str() {
                "uniform" => obs.weight_rule = WeightRule::Uniform,
                "link_weights" => obs.weight_rule = WeightRule::LinkWeights,
                other => r.issue(Some(e.line), path, format!("unknown weight rule `{other}`")),
            },
            "gain_method" => obs.synthesis.method = r.value::<GainMethod>(e, &path).unwrap_or(obs.synthesis.method),
            "margin" => obs.synthesis.margin = r.value(e, &path).unwrap_or(obs.synthesis.margin),
            "max_iterations" => obs.synthesis.max_iterations = r.value(e, &path).unwrap_or(obs.synthesis.max_iterations),
            "rank_tol" => obs.rank_tol = r.value(e, &path),
            "initial_estimate" => obs.initial_estimate = r.numbers(e, &path),
            _ => r.issue(Some(e.line), path, "unknown key"),
        }
    }
}

fn parse_network_section(s: &Section, r: &mut Reader) -> Option<Topology> {
    let mut named = None;
    let mut nodes = None;
    let mut directed = false;
    let mut links = Vec::new();
    let mut seen = Seen(BTreeSet::new());
    for e in &s.entries {
        let path = format!("network.{}", e.key);
        if e.key != "link" && !seen.first(r, e, &path) {
            continue;
        }
        match e.key.as_str() {
            "topology" => named = r.value::<NamedTopology>(e, &path).map(|t| (t, e.line)),
            "nodes" => nodes = r.value::<usize>(e, &path).map(|n| (n, e.line)),
            "directed" => directed = r.value(e, &path).unwrap_or(false),
            "link" => {
                let toks: Vec<&str> = e.value.split_whitespace().collect();
                let idx = |t: &str| t.parse::<usize>().ok();
                match toks.as_slice() {
                    [a, b] | [a, b, _] if idx(a).is_some() && idx(b).is_some() => {
                        let w = match toks.get(2) {
                            Some(t) => match t.parse::<f64>() {
                                Ok(w) => Some(w),
                                Err(_) => {
                                    r.issue(Some(e.line), &path, format!("invalid weight `{t}`"));
                                    continue;
                                }
                            },
                            None => None,
                        };
                        links.push((idx(a).unwrap(), idx(b).unwrap(), w, e.line));
                    }
                    _ => r.issue(Some(e.line), path, "expected `link = <from> <to> [weight]`"),
                }
            }
            _ => r.issue(Some(e.line), path, "unknown key"),
        }
    }
    match (named, nodes) {
        (Some(_), Some((_, line))) => {
            r.issue(Some(line), "network", "give either `topology` or `nodes`/`link`, not both");
            None
        }
        (Some((t, line)), None) => {
            if !links.is_empty() {
                r.issue(Some(line), "network", "give either `topology` or `nodes`/`link`, not both");
                return None;
            }
            Some(Topology::Named(t))
        }
        (None, Some((n, _))) => {
            let mut ok = Vec::new();
            for (a, b, w, line) in links {
                if a >= n || b >= n {
                    r.issue(Some(line), "network.link", format!("endpoint out of range for {n} nodes"));
                } else {
                    ok.push((a, b, w));
                }
            }
            Some(Topology::Inline { nodes: n, directed, links: ok })
        }
        (None, None) => {
            r.issue(Some(s.line), "network", "missing `topology` or `nodes`");
            None
        }
    }
}

fn parse_hdv_section(s: &Section, index: usize, r: &mut Reader) -> Option<HdvEntry> {
    let mut fields: BTreeMap<&str, f64> = BTreeMap::new();
    let mut tau = None;
    let mut front = None;
    let mut changes = Vec::new();
    let mut seen = Seen(BTreeSet::new());
    const REAL: [&str; 10] = [
        "lambda",
        "alpha1",
        "alpha2",
        "beta1",
        "beta2",
        "noise_std",
        "distance_threshold",
        "position",
        "velocity",
        "desired_velocity",
    ];
    for e in &s.entries {
        let path = format!("hdv[{index}].{}", e.key);
        if e.key != "velocity_change" && !seen.first(r, e, &path) {
            continue;
        }
        match e.key.as_str() {
            k if REAL.contains(&k) => {
                if let Some(v) = r.value::<f64>(e, &path) {
                    let name = REAL.iter().find(|&&n| n == k).expect("listed");
                    fields.insert(name, v);
                }
            }
            "tau" => tau = r.value::<usize>(e, &path),
            "front" => {
                front = if e.value == "none" {
                    Some(None)
                } else {
                    r.value::<usize>(e, &path).map(Some)
                }
            }
            "velocity_change" => match r.numbers(e, &path).as_deref() {
                Some(&[t, v]) => changes.push((t, v)),
                Some(_) => r.issue(Some(e.line), path, "expected `<time s> <velocity>`"),
                None => {}
            },
            _ => r.issue(Some(e.line), path, "unknown key"),
        }
    }
    let mut missing = Vec::new();
    for name in REAL {
        if !fields.contains_key(name) {
            missing.push(name);
        }
    }
    if tau.is_none() {
        missing.push("tau");
    }
    for m in &missing {
        r.issue(Some(s.line), format!("hdv[{index}].{m}"), "missing");
    }
    if !missing.is_empty() {
        return None;
    }
    let f = |k: &str| fields[k];
    Some(HdvEntry {
        lambda: f("lambda"),
        tau: tau.expect("checked"),
        alpha1: f("alpha1"),
        alpha2: f("alpha2"),
        beta1: f("beta1"),
        beta2: f("beta2"),
        noise_std: f("noise_std"),
        distance_threshold: f("distance_threshold"),
        position: f("position"),
        velocity: f("velocity"),
        front: front.unwrap_or(index.checked_sub(1)),
        desired_velocity: f("desired_velocity"),
        velocity_changes: changes,
    })
}

fn parse_sensors_section(s: &Section, r: &mut Reader, model: ModelKind) -> Vec<(usize, Vec<SensorRef>, usize)> {
    let names = component_names(model);
    let mut out = Vec::new();
    let mut seen = Seen(BTreeSet::new());
    for e in &s.entries {
        let path = format!("sensors.{}", e.key);
        if !seen.first(r, e, &path) {
            continue;
        }
        let Ok(cav) = e.key.parse::<usize>() else {
            r.issue(Some(e.line), path, "sensor keys are CAV indices");
            continue;
        };
        let mut refs = Vec::new();
        for (i, tok) in e.value.split_whitespace().enumerate() {
            let item = format!("{path}[{i}]");
            let Some((h, comp)) = tok.split_once('.') else {
                r.issue(Some(e.line), item, format!("expected `<hdv>.<component>`, found `{tok}`"));
                continue;
            };
            let Ok(hdv) = h.parse::<usize>() else {
                r.issue(Some(e.line), item, format!("invalid hdv index `{h}`"));
                continue;
            };
            match names.iter().position(|&n| n == comp) {
                Some(component) => refs.push(SensorRef { hdv, component }),
                None => r.issue(Some(e.line), item, format!("unknown {model} component `{comp}`")),
            }
        }
        out.push((cav, refs, e.line));
    }
    out
}

fn parse_faults_section(s: &Section, r: &mut Reader) -> Vec<(FaultEvent, usize)> {
    let mut out = Vec::new();
    for (i, e) in s.entries.iter().enumerate() {
        let path = format!("faults[{i}]");
        let mut toks: Vec<&str> = e.value.split_whitespace().collect();
        let redesign = toks.last() == Some(&"redesign");
        if redesign {
            toks.pop();
        }
        let nums: Option<Vec<usize>> = toks.iter().map(|t| t.parse().ok()).collect();
        let event = match (e.key.as_str(), nums.as_deref()) {
            ("remove_link", Some(&[step, a, b])) => FaultEvent { step, kind: FaultKind::RemoveLink(a, b), redesign_gain: redesign },
            ("remove_node", Some(&[step, v])) => FaultEvent { step, kind: FaultKind::RemoveNode(v), redesign_gain: redesign },
            ("remove_link", _) => {
                r.issue(Some(e.line), path, "expected `remove_link = <step> <i> <j> [redesign]`");
                continue;
            }
            ("remove_node", _) => {
                r.issue(Some(e.line), path, "expected `remove_node = <step> <i> [redesign]`");
                continue;
            }
            _ => {
                r.issue(Some(e.line), path, format!("unknown fault `{}`", e.key));
                continue;
            }
        };
        out.push((event, e.line));
    }
    out
}

/// Parses and validates; every problem found is reported, not just the
/// first.
pub fn parse_scenario(text: &str) -> std::result::Result<Scenario, ScenarioErrors> {
    let mut r = Reader { issues: Vec::new() };
    let sections = split_sections(text, &mut r);

    let mut sc = Scenario {
        name: String::from("scenario"),
        seed: 0,
        horizon: 300,
        sample_time: 0.1,
        tau_unit: None,
        steady_state_start: 0,
        observer: ObserverSettings::default(),
        topology: Topology::Inline { nodes: 0, directed: false, links: Vec::new() },
        hdvs: Vec::new(),
        sensors: Vec::new(),
        faults: Vec::new(),
    };
    let mut topology = None;
    let mut sensor_lines = Vec::new();
    let mut fault_lines = Vec::new();
    let mut hdv_lines = Vec::new();
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();

    // observer first so that sensor components resolve against the model
    for s in sections.iter().filter(|s| s.name == "observer") {
        parse_observer_section(s, &mut r, &mut sc.observer);
    }
    for s in &sections {
        let once = ["scenario", "observer", "network", "sensors", "faults"];
        if once.contains(&s.name.as_str()) {
            let c = counts.entry(once.iter().find(|&&n| n == s.name).expect("listed")).or_insert(0);
            *c += 1;
            if *c > 1 {
                r.issue(Some(s.line), s.name.clone(), "section given more than once");
                continue;
            }
        }
        match s.name.as_str() {
            "scenario" => parse_scenario_section(s, &mut r, &mut sc),
            "observer" => {}
            "network" => topology = parse_network_section(s, &mut r),
            "hdv" => {
                let idx = hdv_lines.len();
                hdv_lines.push(s.line);
                if let Some(h) = parse_hdv_section(s, idx, &mut r) {
                    sc.hdvs.push(h);
                } else {
                    // keep indices aligned for later diagnostics
                    sc.hdvs.push(placeholder_hdv());
                }
            }
            "sensors" => sensor_lines = parse_sensors_section(s, &mut r, sc.observer.model),
            "faults" => fault_lines = parse_faults_section(s, &mut r),
            other => r.issue(Some(s.line), other.to_string(), "unknown section"),
        }
    }
    if !counts.contains_key("network") {
        r.issue(None, "network", "missing section");
    }
    if hdv_lines.is_empty() {
        r.issue(None, "hdv", "at least one [hdv] section is required");
    }

    if let Some(t) = topology {
        sc.topology = t;
    }
    let cavs = sc.topology.node_count();
    sc.sensors = vec![Vec::new(); cavs];
    for (cav, refs, line) in sensor_lines {
        if cav >= cavs {
            r.issue(Some(line), format!("sensors.{cav}"), format!("no CAV {cav}; the network has {cavs}"));
            continue;
        }
        for (i, s) in refs.iter().enumerate() {
            if s.hdv >= hdv_lines.len() {
                r.issue(
                    Some(line),
                    format!("sensors.{cav}[{i}]"),
                    format!("no HDV {}; the scenario has {}", s.hdv, hdv_lines.len()),
                );
            }
        }
        sc.sensors[cav] = refs;
    }
    let graph = sc.topology.graph().ok();
    for (f, line) in fault_lines {
        match f.kind {
            FaultKind::RemoveNode(v) if v >= cavs => {
                r.issue(Some(line), "faults.remove_node", format!("no CAV {v}"));
            }
            FaultKind::RemoveLink(a, b) => {
                let exists = graph.as_ref().is_some_and(|g| a < cavs && b < cavs && (g.has_link(a, b) || g.has_link(b, a)));
                if !exists {
                    r.issue(Some(line), "faults.remove_link", format!("no link {a}-{b} in the network"));
                }
            }
            _ => {}
        }
        sc.faults.push(f);
    }
    validate_values(&sc, &hdv_lines, &mut r);

    if r.issues.is_empty() {
        Ok(sc)
    } else {
        Err(ScenarioErrors(r.issues))
    }
}

fn placeholder_hdv() -> HdvEntry {
    HdvEntry {
        lambda: 0.0,
        tau: 0,
        alpha1: 0.0,
        alpha2: 0.0,
        beta1: 0.0,
        beta2: 0.0,
        noise_std: 0.0,
        distance_threshold: 1.0,
        position: 0.0,
        velocity: 0.0,
        front: None,
        desired_velocity: 0.0,
        velocity_changes: Vec::new(),
    }
}

fn validate_values(sc: &Scenario, hdv_lines: &[usize], r: &mut Reader) {
    if sc.sample_time.is_nan() || sc.sample_time <= 0.0 {
        r.issue(None, "scenario.sample_time", "must be positive");
    }
    if let Some(u) = sc.tau_unit {
        if u.is_nan() || u <= 0.0 {
            r.issue(None, "scenario.tau_unit", "must be positive");
        }
    }
    if sc.horizon == 0 {
        r.issue(None, "scenario.horizon", "must be at least 1");
    }
    let obs = &sc.observer;
    for (name, v) in [
        ("measurement_variance", obs.measurement_variance),
        ("process_variance", obs.process_variance),
        ("initial_variance", obs.initial_variance),
    ] {
        if v.is_nan() || v < 0.0 {
            r.issue(None, format!("observer.{name}"), "must be nonnegative");
        }
    }
    if let Some(x0) = &obs.initial_estimate {
        let m = build_observer_model(obs.model, 1, 1.0).state_dim_per_hdv;
        if x0.len() != m * sc.hdvs.len() {
            r.issue(None, "observer.initial_estimate", format!("expected {} entries", m * sc.hdvs.len()));
        }
    }
    for (i, h) in sc.hdvs.iter().enumerate() {
        let line = hdv_lines.get(i).copied();
        if h.noise_std.is_nan() || h.noise_std < 0.0 {
            r.issue(line, format!("hdv[{i}].noise_std"), "must be nonnegative");
        }
        if h.distance_threshold.is_nan() || h.distance_threshold <= 0.0 {
            r.issue(line, format!("hdv[{i}].distance_threshold"), "must be positive");
        }
        if let Some(f) = h.front {
            if f >= sc.hdvs.len() || f == i {
                r.issue(line, format!("hdv[{i}].front"), format!("no other HDV {f}"));
            }
        }
    }
}

fn fmt_topology(out: &mut String, t: &Topology) {
    match t {
        Topology::Named(n) => {
            let _ = writeln!(out, "topology = {n}");
        }
        Topology::Inline { nodes, directed, links } => {
            let _ = writeln!(out, "nodes = {nodes}");
            let _ = writeln!(out, "directed = {directed}");
            for (a, b, w) in links {
                match w {
                    Some(w) => {
                        let _ = writeln!(out, "link = {a} {b} {w}");
                    }
                    None => {
                        let _ = writeln!(out, "link = {a} {b}");
                    }
                }
            }
        }
    }
}

impl Scenario {
    pub fn load(path: &Path) -> std::result::Result<Self, ScenarioErrors> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            ScenarioErrors(vec![ScenarioIssue {
                line: None,
                path: path.display().to_string(),
                msg: e.to_string(),
            }])
        })?;
        parse_scenario(&text)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "[scenario]");
        let _ = writeln!(out, "name = {}", self.name);
        let _ = writeln!(out, "seed = {}", self.seed);
        let _ = writeln!(out, "horizon = {}", self.horizon);
        let _ = writeln!(out, "sample_time = {}", self.sample_time);
        if let Some(u) = self.tau_unit {
            let _ = writeln!(out, "tau_unit = {u}");
        }
        let _ = writeln!(out, "steady_state_start = {}", self.steady_state_start);

        let o = &self.observer;
        let _ = writeln!(out, "\n[observer]");
        let _ = writeln!(out, "model = {}", o.model);
        let _ = writeln!(out, "measurement_variance = {}", o.measurement_variance);
        let _ = writeln!(out, "process_variance = {}", o.process_variance);
        let _ = writeln!(out, "initial_variance = {}", o.initial_variance);
        let rule = match o.weight_rule {
            WeightRule::Uniform => "uniform",
            WeightRule::LinkWeights => "link_weights",
        };
        let _ = writeln!(out, "weight_rule = {rule}");
        let _ = writeln!(out, "gain_method = {}", o.synthesis.method);
        let _ = writeln!(out, "margin = {}", o.synthesis.margin);
        let _ = writeln!(out, "max_iterations = {}", o.synthesis.max_iterations);
        if let Some(t) = o.rank_tol {
            let _ = writeln!(out, "rank_tol = {t}");
        }
        if let Some(x0) = &o.initial_estimate {
            let vals: Vec<String> = x0.iter().map(f64::to_string).collect();
            let _ = writeln!(out, "initial_estimate = {}", vals.join(" "));
        }

        let _ = writeln!(out, "\n[network]");
        fmt_topology(&mut out, &self.topology);

        for h in &self.hdvs {
            let _ = writeln!(out, "\n[hdv]");
            for (k, v) in [
                ("lambda", h.lambda),
                ("alpha1", h.alpha1),
                ("alpha2", h.alpha2),
                ("beta1", h.beta1),
                ("beta2", h.beta2),
                ("noise_std", h.noise_std),
                ("distance_threshold", h.distance_threshold),
                ("position", h.position),
                ("velocity", h.velocity),
                ("desired_velocity", h.desired_velocity),
            ] {
                let _ = writeln!(out, "{k} = {v}");
            }
            let _ = writeln!(out, "tau = {}", h.tau);
            match h.front {
                Some(f) => {
                    let _ = writeln!(out, "front = {f}");
                }
                None => {
                    let _ = writeln!(out, "front = none");
                }
            }
            for (t, v) in &h.velocity_changes {
                let _ = writeln!(out, "velocity_change = {t} {v}");
            }
        }

        let names = component_names(self.observer.model);
        let _ = writeln!(out, "\n[sensors]");
        for (cav, refs) in self.sensors.iter().enumerate() {
            let items: Vec<String> = refs.iter().map(|s| format!("{}.{}", s.hdv, names[s.component])).collect();
            let _ = writeln!(out, "{cav} = {}", items.join(" "));
        }

        if !self.faults.is_empty() {
            let _ = writeln!(out, "\n[faults]");
            for f in &self.faults {
                let tail = if f.redesign_gain { " redesign" } else { "" };
                match f.kind {
                    FaultKind::RemoveLink(a, b) => {
                        let _ = writeln!(out, "remove_link = {} {a} {b}{tail}", f.step);
                    }
                    FaultKind::RemoveNode(v) => {
                        let _ = writeln!(out, "remove_node = {} {v}{tail}", f.step);
                    }
                }
            }
        }
        out
    }

    pub fn cav_count(&self) -> usize {
        self.topology.node_count()
    }

    pub fn model(&self) -> ModelMatrices {
        build_observer_model(self.observer.model, self.hdvs.len(), self.sample_time)
    }

    /// Communication graph with a self-loop at every CAV.
    pub fn network(&self) -> Result<DirectedGraph> {
        Ok(self.topology.graph()?.with_self_loops())
    }

    pub fn placement(&self) -> SensorPlacement {
        let m = self.model().state_dim_per_hdv;
        SensorPlacement::new(
            self.sensors
                .iter()
                .map(|refs| refs.iter().map(|s| s.hdv * m + s.component).collect())
                .collect(),
        )
    }

    pub fn delay_steps(&self, tau: usize) -> usize {
        let unit = self.tau_unit.unwrap_or(self.sample_time);
        (tau as f64 * unit / self.sample_time + 1e-9).floor() as usize
    }

    pub fn hdv_specs(&self) -> Vec<HdvSpec> {
        self.hdvs
            .iter()
            .map(|h| HdvSpec {
                params: HdvParams {
                    lambda_gain: h.lambda,
                    reaction_delay: self.delay_steps(h.tau),
                    alpha1: h.alpha1,
                    alpha2: h.alpha2,
                    beta1: h.beta1,
                    beta2: h.beta2,
                    noise_std: h.noise_std,
                    distance_threshold: h.distance_threshold,
                    desired_velocity: VelocityProfile {
                        initial: h.desired_velocity,
                        changes: h
                            .velocity_changes
                            .iter()
                            .map(|&(t, v)| ((t / self.sample_time).round() as usize, v))
                            .collect(),
                    },
                },
                initial_position: h.position,
                initial_velocity: h.velocity,
                front: h.front,
            })
            .collect()
    }
}

/// Output of the structural and numeric analysis of a scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Analysis {
    pub verdict: ObservabilityVerdict,
    pub node_connectivity: Option<usize>,
    pub link_connectivity: Option<usize>,
    pub tabulated_connectivity: Option<usize>,
    pub numeric_full_rank: bool,
    pub open_loop_radius: f64,
}

impl Analysis {
    pub fn to_report(&self, scenario: &Scenario) -> String {
        let model = scenario.model();
        let names = component_names(scenario.observer.model);
        let m = model.state_dim_per_hdv;
        let mut out = format!("Scenario: {}\n", scenario.name);
        out.push_str(&self.verdict.to_report(|s| format!("hdv{}.{}", s / m, names[s % m])));
        let opt = |v: Option<usize>| v.map_or("n/a".to_string(), |c| c.to_string());
        let _ = writeln!(out, "Node connectivity: {}", opt(self.node_connectivity));
        let _ = writeln!(out, "Link connectivity: {}", opt(self.link_connectivity));
        if let Some(t) = self.tabulated_connectivity {
            if Some(t) != self.node_connectivity {
                let _ = writeln!(
                    out,
                    "Note: tabulated convention lists {t} for this family; computed value shown above"
                );
            }
        }
        let _ = writeln!(out, "Numeric rank test: {}", if self.numeric_full_rank { "full rank" } else { "rank deficient" });
        let _ = writeln!(out, "Open-loop spectral radius: {}", self.open_loop_radius);
        out
    }

    pub fn to_key_value(&self) -> String {
        let mut out = self.verdict.to_key_value();
        let opt = |v: Option<usize>| v.map_or("none".to_string(), |c| c.to_string());
        let _ = writeln!(out, "node_connectivity={}", opt(self.node_connectivity));
        let _ = writeln!(out, "link_connectivity={}", opt(self.link_connectivity));
        let _ = writeln!(out, "numeric_full_rank={}", self.numeric_full_rank);
        let _ = writeln!(out, "open_loop_radius={}", self.open_loop_radius);
        out
    }
}

pub fn analyze(sc: &Scenario) -> Result<Analysis> {
    let model = sc.model();
    let g = sc.network()?;
    let placement = sc.placement();
    let a = StructuredMatrix::from_dense(&model.a);
    let verdict = distributed_structural_observability(&a, &g, &placement)?;
    let (node, link) = if g.node_count() >= 2 {
        (Some(node_connectivity(&g)), Some(link_connectivity(&g)?))
    } else {
        (None, None)
    };
    let w = build_row_stochastic(&g, sc.observer.weight_rule)?;
    let numeric = numeric_observability_check(&model.a, &w, &placement, RankTolerance(sc.observer.rank_tol))?;
    let open_loop_radius = spectral_radius(&kronecker(&w, &model.a)?)?;
    let tabulated = match &sc.topology {
        Topology::Named(t) => Some(t.tabulated_connectivity()),
        Topology::Inline { .. } => None,
    };
    Ok(Analysis {
        verdict,
        node_connectivity: node,
        link_connectivity: link,
        tabulated_connectivity: tabulated,
        numeric_full_rank: numeric,
        open_loop_radius,
    })
}

/// Closed-loop quantities of one network configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkDesign {
    /// Surviving CAVs, as indices into the original network.
    pub cavs: Vec<usize>,
    pub w: DenseMatrix,
    pub dc: DenseMatrix,
    pub open_loop_radius: f64,
    pub result: SynthesisResult,
}

/// Design for the initial network, plus one per fault step that asks for
/// a redesign.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub initial: NetworkDesign,
    pub post_fault: Vec<(usize, NetworkDesign)>,
}

impl Design {
    pub fn to_report(&self) -> String {
        let mut out = String::new();
        let line = |out: &mut String, label: &str, d: &NetworkDesign| {
            let _ = writeln!(
                out,
                "{label}: cavs={:?} open_loop_radius={} closed_loop_radius={} method={} iterations={} converged={}",
                d.cavs,
                d.open_loop_radius,
                d.result.achieved_spectral_radius,
                d.result.method,
                d.result.iterations,
                d.result.converged
            );
        };
        line(&mut out, "initial", &self.initial);
        for (step, d) in &self.post_fault {
            line(&mut out, &format!("after step {step}"), d);
        }
        out
    }
}

fn design_network(sc: &Scenario, removed_nodes: &BTreeSet<usize>, removed_links: &BTreeSet<(usize, usize)>) -> Result<NetworkDesign> {
    let g = sc.network()?;
    let sub = crate::graph::survives_removal(&g, removed_nodes, removed_links)?;
    let placement = sc.placement().without_cavs(removed_nodes);
    let a = sc.model().a;
    let w = build_row_stochastic(&sub.graph, sc.observer.weight_rule)?;
    let dc = build_dc(&placement, &sub.graph, a.nrows())?;
    let open_loop_radius = spectral_radius(&kronecker(&w, &a)?)?;
    let result = synthesize_gain(&w, &a, &dc, &sc.observer.synthesis)?;
    Ok(NetworkDesign {
        cavs: sub.original,
        w,
        dc,
        open_loop_radius,
        result,
    })
}

/// Removed CAVs and removed arcs.
pub type Removals = (BTreeSet<usize>, BTreeSet<(usize, usize)>);

/// Cumulative removal sets after applying every fault up to `step`.
pub fn removals_until(sc: &Scenario, step: usize) -> Result<Removals> {
    let g = sc.network()?;
    let mut nodes = BTreeSet::new();
    let mut links = BTreeSet::new();
    for f in sc.faults.iter().filter(|f| f.step <= step) {
        match f.kind {
            FaultKind::RemoveNode(v) => {
                nodes.insert(v);
            }
            FaultKind::RemoveLink(a, b) => {
                for arc in [(a, b), (b, a)] {
                    if g.has_link(arc.0, arc.1) {
                        links.insert(arc);
                    }
                }
            }
        }
    }
    links.retain(|&(a, b)| !nodes.contains(&a) && !nodes.contains(&b));
    Ok((nodes, links))
}

pub fn design(sc: &Scenario) -> Result<Design> {
    let initial = design_network(sc, &BTreeSet::new(), &BTreeSet::new())?;
    let mut steps: Vec<usize> = sc.faults.iter().filter(|f| f.redesign_gain).map(|f| f.step).collect();
    steps.dedup();
    let mut post_fault = Vec::new();
    for step in steps {
        let (nodes, links) = removals_until(sc, step)?;
        post_fault.push((step, design_network(sc, &nodes, &links)?));
    }
    Ok(Design { initial, post_fault })
}

/// Ground truth, distributed trace and its metrics.
#[derive(Debug, Clone)]
pub struct SimulationRun {
    pub truth: GroundTruth,
    pub trace: SimulationTrace,
    pub metrics: Metrics,
}

fn require_ncv(sc: &Scenario) -> Result<()> {
    if sc.observer.model != ModelKind::Ncv {
        return Err(Error::DimensionMismatch(
            "simulation needs the ncv observer model; ground truth is one-dimensional".into(),
        ));
    }
    Ok(())
}

fn distributed_setup(sc: &Scenario, gain: &ObserverGain) -> Result<DistributedSetup> {
    Ok(DistributedSetup {
        model: sc.model(),
        network: sc.network()?,
        weight_rule: sc.observer.weight_rule,
        placement: sc.placement(),
        gain: gain.clone(),
        faults: sc.faults.clone(),
        synthesis: sc.observer.synthesis,
        initial_estimate: sc.observer.initial_estimate.as_ref().map(|v| DenseVector::from_column_slice(v)),
    })
}

pub fn simulate(sc: &Scenario, gain: &ObserverGain) -> Result<SimulationRun> {
    require_ncv(sc)?;
    let truth = simulate_ground_truth(&sc.hdv_specs(), sc.sample_time, sc.horizon, sc.seed)?;
    let states = truth_states(&truth);
    let log = generate_measurements(&states, &sc.placement(), sc.observer.measurement_variance, sc.seed);
    let trace = run_distributed(&distributed_setup(sc, gain)?, &states, &log)?;
    let metrics = compute_metrics(&trace, sc.steady_state_start);
    Ok(SimulationRun { truth, trace, metrics })
}

/// Paired distributed and centralized runs on the same truth and readings.
#[derive(Debug, Clone)]
pub struct Comparison {
    pub distributed: SimulationTrace,
    pub centralized: SimulationTrace,
    pub distributed_metrics: Metrics,
    pub centralized_metrics: Metrics,
}

impl Comparison {
    /// Per-step MSEE table averaged over HDVs (and over CAVs for the
    /// distributed estimator).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,distributed_position_se,distributed_velocity_se,central_position_se,central_velocity_se\n");
        let m = self.distributed.state_dim_per_hdv;
        let hdvs = self.distributed.hdv_count();
        let mean_se = |trace: &SimulationTrace, k: usize, offset: usize| {
            let mut sum = 0.0;
            let mut count = 0usize;
            for e in 0..trace.entity_count() {
                if let Some(err) = trace.error(k, e) {
                    for h in 0..hdvs {
                        sum += err[h * m + offset].powi(2);
                    }
                    count += hdvs;
                }
            }
            sum / count.max(1) as f64
        };
        for k in 0..self.distributed.steps() {
            let _ = writeln!(
                out,
                "{k},{},{},{},{}",
                mean_se(&self.distributed, k, 0),
                mean_se(&self.distributed, k, 1),
                mean_se(&self.centralized, k, 0),
                mean_se(&self.centralized, k, 1)
            );
        }
        out
    }

    pub fn to_key_value(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "distributed.position_msee={}", self.distributed_metrics.position_msee);
        let _ = writeln!(out, "distributed.velocity_msee={}", self.distributed_metrics.velocity_msee);
        let _ = writeln!(out, "centralized.position_msee={}", self.centralized_metrics.position_msee);
        let _ = writeln!(out, "centralized.velocity_msee={}", self.centralized_metrics.velocity_msee);
        out
    }
}

pub fn compare(sc: &Scenario, gain: &ObserverGain) -> Result<Comparison> {
    require_ncv(sc)?;
    let truth = simulate_ground_truth(&sc.hdv_specs(), sc.sample_time, sc.horizon, sc.seed)?;
    let states = truth_states(&truth);
    let log = generate_measurements(&states, &sc.placement(), sc.observer.measurement_variance, sc.seed);
    let distributed = run_distributed(&distributed_setup(sc, gain)?, &states, &log)?;
    let central_setup = CentralizedSetup {
        model: sc.model(),
        placement: sc.placement(),
        process_variance: sc.observer.process_variance,
        measurement_variance: sc.observer.measurement_variance,
        initial_variance: sc.observer.initial_variance,
        initial_estimate: sc.observer.initial_estimate.as_ref().map(|v| DenseVector::from_column_slice(v)),
    };
    let centralized = run_centralized_kalman(&central_setup, &states, &log)?;
    Ok(Comparison {
        distributed_metrics: compute_metrics(&distributed, sc.steady_state_start),
        centralized_metrics: compute_metrics(&centralized, sc.steady_state_start),
        distributed,
        centralized,
    })
}

/// Closed-loop radius of `gain` on the initial network.
pub fn closed_loop_radius(sc: &Scenario, gain: &ObserverGain) -> Result<f64> {
    let g = sc.network()?;
    let a = sc.model().a;
    let w = build_row_stochastic(&g, sc.observer.weight_rule)?;
    let dc = build_dc(&sc.placement(), &g, a.nrows())?;
    spectral_radius(&assemble_ahat(&w, &a, gain, &dc)?)
}

/// Bundled scenario files by name.
pub const BUNDLED: [(&str, &str); 4] = [
    ("fig1", include_str!("../scenarios/fig1.scn")),
    ("fig1_linkfail", include_str!("../scenarios/fig1_linkfail.scn")),
    ("fig9", include_str!("../scenarios/fig9.scn")),
    ("fig9_nodefail", include_str!("../scenarios/fig9_nodefail.scn")),
];

pub fn bundled(name: &str) -> Option<Scenario> {
    BUNDLED
        .iter()
        .find(|(n, _)| *n == name)
        .and_then(|(_, text)| parse_scenario(text).ok())
}
