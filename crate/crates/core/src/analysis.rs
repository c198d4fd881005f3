//! Search-space studies and benchmark batches.
//!
//! [`bfs_radius`] measures how many rewrites separate a circuit from any
//! cheaper one, [`landscape_study`] turns radii of sampled reachable circuits
//! into a CDF, [`cost_increase_ablation`] compares a monotone search with one
//! that may climb, and [`bench_run`] optimizes a list of circuits and reports
//! per-circuit metrics with a geometric-mean reduction.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{Agent, AgentConfig};
use crate::circuit::{cost, parse_qasm, Circuit, CircuitBuilder, CostMetric, ErrorModel, GateKind, GateSet};
use crate::error::{Error, Result};
use crate::search::{greedy_baseline, optimize, random_search, Acceptance, SearchConfig, Trace};
use crate::train::TrainConfig;
use crate::xfer::{apply, load_ruleset, match_at_pos, RuleSet, Transformation};

/// Default cap on distinct circuits visited by a breadth-first search.
pub const DEFAULT_NODE_BUDGET: usize = 2_000_000;

/// Every circuit one rewrite away from `c` (NOP excluded), in (position,
/// rule) order.
pub fn neighbors(c: &Circuit, rules: &RuleSet) -> Result<Vec<Circuit>> {
    let mut out = Vec::new();
    for pos in 0..c.len() {
        for &i in rules.anchored_on(c.gate(pos).kind) {
            if let Some(m) = match_at_pos(c, pos, rules.get(i)) {
                out.push(apply(c, rules.get(i), &m)?.0);
            }
        }
    }
    Ok(out)
}

/// Fewest rewrites from `c` to any strictly cheaper circuit, or `None` when
/// none exists within `max_radius`. Exceeding `node_budget` distinct circuits
/// is an error rather than `None`.
pub fn bfs_radius(
    c: &Circuit,
    rules: &RuleSet,
    metric: &CostMetric,
    max_radius: usize,
    node_budget: usize,
) -> Result<Option<usize>> {
    let base = metric.objective(c)?;
    let mut seen = HashSet::from([c.canonical_hash()]);
    let mut frontier = vec![c.clone()];
    for depth in 1..=max_radius {
        let mut next = Vec::new();
        for x in &frontier {
            for y in neighbors(x, rules)? {
                if metric.objective(&y)? < base {
                    return Ok(Some(depth));
                }
                if seen.insert(y.canonical_hash()) {
                    if seen.len() > node_budget {
                        return Err(Error::NodeBudget(node_budget));
                    }
                    next.push(y);
                }
            }
        }
        if next.is_empty() {
            return Ok(None);
        }
        frontier = next;
    }
    Ok(None)
}

/// Distinct circuits within `depth` rewrites of `c`, in discovery order.
pub fn reachable(c: &Circuit, rules: &RuleSet, depth: usize, node_budget: usize) -> Result<Vec<Circuit>> {
    let mut seen = HashSet::from([c.canonical_hash()]);
    let mut all = vec![c.clone()];
    let mut start = 0;
    for _ in 0..depth {
        let end = all.len();
        for i in start..end {
            for y in neighbors(&all[i].clone(), rules)? {
                if seen.insert(y.canonical_hash()) {
                    if seen.len() > node_budget {
                        return Err(Error::NodeBudget(node_budget));
                    }
                    all.push(y);
                }
            }
        }
        if all.len() == end {
            break;
        }
        start = end;
    }
    Ok(all)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LandscapeReport {
    pub reachable: usize,
    pub max_radius: usize,
    /// Radius of each sampled circuit; `None` means above `max_radius`.
    pub radii: Vec<Option<usize>>,
    /// Fraction of samples with radius at most `r`, for `r = 1..=max_radius`.
    pub cdf: Vec<(usize, f64)>,
}

impl LandscapeReport {
    /// `radius,fraction` lines with a header.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("radius,fraction\n");
        for (r, f) in &self.cdf {
            let _ = writeln!(s, "{r},{f}");
        }
        s
    }
}

/// Sample circuits uniformly from the set reachable within `reach_depth`
/// rewrites and report the CDF of their radii.
#[allow(clippy::too_many_arguments)]
pub fn landscape_study(
    c: &Circuit,
    rules: &RuleSet,
    metric: &CostMetric,
    reach_depth: usize,
    samples: usize,
    max_radius: usize,
    node_budget: usize,
    seed: u64,
) -> Result<LandscapeReport> {
    if max_radius == 0 {
        return Err(Error::Config("max radius must be at least 1".into()));
    }
    let pool = reachable(c, rules, reach_depth, node_budget)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picks: Vec<usize> = sample(&mut rng, pool.len(), samples.min(pool.len())).into_vec();
    picks.sort_unstable();
    let radii = picks
        .iter()
        .map(|&i| bfs_radius(&pool[i], rules, metric, max_radius, node_budget))
        .collect::<Result<Vec<_>>>()?;
    let n = radii.len().max(1) as f64;
    let cdf = (1..=max_radius)
        .map(|r| (r, radii.iter().filter(|x| x.is_some_and(|v| v <= r)).count() as f64 / n))
        .collect();
    Ok(LandscapeReport { reachable: pool.len(), max_radius, radii, cdf })
}

/// Best-cost traces of the monotone and the bounded search from one seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub alpha: f64,
    pub monotone: Trace,
    pub bounded: Trace,
}

impl AblationReport {
    /// `step,monotone,bounded` lines with a header.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("step,monotone,bounded\n");
        for (i, (a, b)) in self.monotone.best.iter().zip(&self.bounded.best).enumerate() {
            let _ = writeln!(s, "{i},{a},{b}");
        }
        s
    }
}

/// Run the same randomized search twice: rejecting cost increases, and
/// allowing cost up to `alpha` times the best.
pub fn cost_increase_ablation(
    c: &Circuit,
    rules: &RuleSet,
    metric: &CostMetric,
    steps: usize,
    alpha: f64,
    seed: u64,
) -> Result<AblationReport> {
    let monotone = random_search(c, rules, metric, steps, Acceptance::Monotone, &mut ChaCha8Rng::seed_from_u64(seed))?;
    let bounded =
        random_search(c, rules, metric, steps, Acceptance::Bounded(alpha), &mut ChaCha8Rng::seed_from_u64(seed))?;
    Ok(AblationReport { alpha, monotone, bounded })
}

/// An 8-gate circuit whose only improvement starts with a cost-increasing
/// rewrite, with the three rules that act on it:
/// `X(a)·CX(a,b) -> CX(a,b)·X(a)·X(b)`, its reverse, and `X·X -> nothing`.
/// Optimal path: 8 -> 9 -> 7 gates.
pub fn climb_instance() -> Result<(Circuit, RuleSet)> {
    let c = CircuitBuilder::new(3)
        .x(0)
        .cx(0, 1)
        .x(0)
        .h(2)
        .cx(1, 2)
        .h(2)
        .rz(2, 0.5)
        .cx(2, 1)
        .build()?;
    let push_src = CircuitBuilder::new(2).x(0).cx(0, 1).build()?;
    let push_dst = CircuitBuilder::new(2).cx(0, 1).x(0).x(1).build()?;
    let xx = CircuitBuilder::new(1).x(0).x(0).build()?;
    let push = Transformation::new(&push_src, &push_dst)?;
    let pull = Transformation::new(&push_dst, &push_src)?;
    let cancel = Transformation::new(&xx, &Circuit::empty(1))?;
    let gates = GateSet::custom(&[GateKind::X, GateKind::Cx, GateKind::H, GateKind::Rz]);
    Ok((c, RuleSet::new(gates, vec![push, pull, cancel])))
}

/// What [`bench_run`] should do, parsed from TOML.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchManifest {
    pub circuits: Vec<PathBuf>,
    #[serde(default = "default_metric")]
    pub metric: String,
    /// Rule file; required unless `steps` is 0.
    #[serde(default)]
    pub rules: Option<PathBuf>,
    /// Environment step budget per circuit.
    #[serde(default)]
    pub steps: usize,
    /// `rl` (fine-tuning plus policy-guided search) or `greedy`.
    #[serde(default = "default_optimizer")]
    pub optimizer: String,
    #[serde(default)]
    pub checkpoint: Option<PathBuf>,
    /// Gate error rates enabling the fidelity columns.
    #[serde(default)]
    pub errors: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
}

fn default_metric() -> String {
    "total".into()
}

fn default_optimizer() -> String {
    "rl".into()
}

impl BenchManifest {
    /// Parse TOML; relative paths are resolved against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<BenchManifest> {
        let mut m: BenchManifest = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        m.circuits.iter_mut().for_each(fix);
        m.rules.iter_mut().for_each(fix);
        m.checkpoint.iter_mut().for_each(fix);
        m.errors.iter_mut().for_each(fix);
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<BenchManifest> {
        BenchManifest::parse(&std::fs::read_to_string(path)?, path.parent().unwrap_or(Path::new(".")))
    }
}

/// Metrics of one circuit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub total: usize,
    pub cnot: usize,
    pub depth: usize,
    pub fidelity: Option<f64>,
}

impl Metrics {
    pub fn of(c: &Circuit, errors: Option<&ErrorModel>) -> Result<Metrics> {
        Ok(Metrics {
            total: c.len(),
            cnot: cost(c, &CostMetric::CnotCount)? as usize,
            depth: cost(c, &CostMetric::Depth)? as usize,
            fidelity: errors.map(|e| cost(c, &CostMetric::Fidelity(e.clone()))).transpose()?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub name: String,
    pub input: Metrics,
    pub output: Metrics,
    /// `1 - output/input` of the optimized metric.
    pub reduction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub metric: String,
    pub rows: Vec<BenchRow>,
    /// `1 - geomean(output/input)` over the rows.
    pub geomean_reduction: f64,
}

impl BenchReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("name,in_total,in_cnot,in_depth,in_fidelity,out_total,out_cnot,out_depth,out_fidelity,reduction\n");
        let f = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{}",
                r.name,
                r.input.total,
                r.input.cnot,
                r.input.depth,
                f(r.input.fidelity),
                r.output.total,
                r.output.cnot,
                r.output.depth,
                f(r.output.fidelity),
                r.reduction
            );
        }
        let _ = writeln!(s, "geomean,,,,,,,,,{}", self.geomean_reduction);
        s
    }
}

/// `1 - geomean(ratios)`; 0 for an empty list.
pub fn geomean_reduction(ratios: &[f64]) -> f64 {
    if ratios.is_empty() {
        return 0.0;
    }
    1.0 - (ratios.iter().map(|r| r.ln()).sum::<f64>() / ratios.len() as f64).exp()
}

/// Ratio of a metric in the "smaller is better" sense.
fn ratio(metric: &CostMetric, input: &Circuit, output: &Circuit) -> Result<f64> {
    let (a, b) = (cost(input, metric)?, cost(output, metric)?);
    Ok(match metric {
        // Fidelity grows when things improve: compare error probabilities.
        CostMetric::Fidelity(_) => {
            if 1.0 - a == 0.0 {
                1.0
            } else {
                (1.0 - b) / (1.0 - a)
            }
        }
        _ => {
            if a == 0.0 {
                1.0
            } else {
                b / a
            }
        }
    })
}

/// Optimize every circuit in the manifest and tabulate the results.
pub fn bench_run(m: &BenchManifest, agent_config: &AgentConfig, train: &TrainConfig, search: &SearchConfig) -> Result<BenchReport> {
    let errors = m.errors.as_deref().map(ErrorModel::load).transpose()?;
    let metric = match (m.metric.as_str(), &errors) {
        ("fidelity", Some(e)) => CostMetric::Fidelity(e.clone()),
        ("fidelity", None) => return Err(Error::Config("fidelity metric needs an error model".into())),
        (name, _) => name.parse()?,
    };
    let rules = match (&m.rules, m.steps) {
        (Some(p), _) => Some(load_ruleset(p, false)?),
        (None, 0) => None,
        (None, _) => return Err(Error::Config("a rule file is required when steps > 0".into())),
    };
    let mut rows = Vec::new();
    let mut ratios = Vec::new();
    for (i, path) in m.circuits.iter().enumerate() {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let input = parse_qasm(&text)?;
        let seed = m.seed.wrapping_add(i as u64);
        let output = match &rules {
            Some(rules) if m.steps > 0 => match m.optimizer.as_str() {
                "greedy" => greedy_baseline(&input, rules, &metric, m.steps, seed)?
                    .best_circuit
                    .expect("trace keeps its best circuit"),
                "rl" => {
                    let mut agent = Agent::new(agent_config.clone(), &rules.gate_set, rules.len(), seed)?;
                    if let Some(ck) = &m.checkpoint {
                        agent.store.load(ck)?;
                    }
                    let cfg = SearchConfig { step_budget: m.steps, ..search.clone() };
                    optimize(&input, &agent, rules, &metric, train, &cfg, seed)?.circuit
                }
                other => return Err(Error::Config(format!("unknown optimizer `{other}`"))),
            },
            _ => input.clone(),
        };
        let r = ratio(&metric, &input, &output)?;
        ratios.push(r);
        rows.push(BenchRow {
            name: path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
            input: Metrics::of(&input, errors.as_ref())?,
            output: Metrics::of(&output, errors.as_ref())?,
            reduction: 1.0 - r,
        });
    }
    Ok(BenchReport { metric: metric.name().into(), rows, geomean_reduction: geomean_reduction(&ratios) })
}
