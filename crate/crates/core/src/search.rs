//! Policy-guided search, the fine-tuning/search alternation, a greedy
//! baseline, and topological partitioning.
//!
//! Policy-guided search keeps only the lowest-cost circuits found so far. It
//! walks from one of them by sampling a gate over unmasked gates and taking
//! the most probable transformation. A step that ends the walk (NOP or a cost
//! above the bound) hard-masks the gate on that circuit; any other visit
//! soft-masks it. When every gate of a circuit is masked the soft masks are
//! dropped once and never reapplied.

use std::collections::{HashMap, HashSet};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agent::Agent;
use crate::circuit::{equivalent_up_to_phase, Circuit, CostMetric, Gate, GateId};
use crate::error::{Error, Result};
use crate::train::{TrainConfig, Trainer};
use crate::xfer::{apply, match_at, valid_xfers, RuleSet};

/// Circuits with at most this many qubits are re-verified against the input.
pub const VERIFY_QUBIT_LIMIT: usize = 8;

/// Hard and soft gate masks of one circuit.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MaskState {
    pub hard: HashSet<GateId>,
    pub soft: HashSet<GateId>,
    pub soft_cleared: bool,
}

impl MaskState {
    pub fn mask_hard(&mut self, g: GateId) {
        self.soft.remove(&g);
        self.hard.insert(g);
    }

    /// Soft masks are ignored once cleared.
    pub fn mask_soft(&mut self, g: GateId) {
        if !self.soft_cleared && !self.hard.contains(&g) {
            self.soft.insert(g);
        }
    }

    /// Unmasked positions of `c`. When none remain, the soft masks are cleared
    /// (once) and the query repeats; an empty result means the circuit is
    /// exhausted.
    pub fn available(&mut self, c: &Circuit) -> Vec<usize> {
        let free = |m: &MaskState| -> Vec<usize> {
            (0..c.len()).filter(|&p| !m.hard.contains(&c.gate(p).id) && !m.soft.contains(&c.gate(p).id)).collect()
        };
        let first = free(self);
        if !first.is_empty() || self.soft_cleared {
            return first;
        }
        self.soft.clear();
        self.soft_cleared = true;
        free(self)
    }
}

/// Budgets and knobs of the optimize loop. Step counts make runs
/// reproducible; the wall-clock cap only guards against overruns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    /// Environment steps shared by fine-tuning and search.
    pub step_budget: usize,
    /// Wall-clock cap in seconds; infinite means none.
    pub wall_budget: f64,
    /// Fine-tuning iterations before the first search slice.
    pub head_start_iterations: usize,
    /// Search steps per alternation slice; 0 disables search.
    pub slice_steps: usize,
    /// Search steps without improvement before search restarts with the
    /// latest fine-tuned parameters.
    pub search_timeout_steps: usize,
    /// Longest walk from a buffer circuit.
    pub horizon: usize,
    /// Walks end when cost exceeds `alpha` times the best cost.
    pub alpha: f64,
    /// Fine-tuning on or off.
    pub finetune: bool,
    /// Partition size for large circuits.
    pub partition_max_gates: usize,
}

impl SearchConfig {
    /// Wall-clock oriented settings: a 20 minute search timeout and a 5 minute
    /// fine-tuning head start, expressed through the wall cap.
    pub fn paper() -> SearchConfig {
        SearchConfig {
            step_budget: 1 << 40,
            wall_budget: 1200.0 + 300.0,
            head_start_iterations: 2,
            slice_steps: 2000,
            search_timeout_steps: 200_000,
            horizon: 600,
            alpha: 1.2,
            finetune: true,
            partition_max_gates: 512,
        }
    }

    pub fn desk() -> SearchConfig {
        SearchConfig {
            step_budget: 12_000,
            wall_budget: 900.0,
            head_start_iterations: 1,
            slice_steps: 1000,
            search_timeout_steps: 3000,
            horizon: 600,
            alpha: 1.2,
            finetune: true,
            partition_max_gates: 512,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) || self.horizon == 0 || self.partition_max_gates == 0 {
            return Err(Error::Config("search settings out of range".into()));
        }
        if !(self.wall_budget >= 0.0) {
            return Err(Error::Config("wall budget must be nonnegative".into()));
        }
        Ok(())
    }
}

fn deadline_after(start: Instant, seconds: f64) -> Option<Instant> {
    if seconds.is_finite() {
        start.checked_add(Duration::from_secs_f64(seconds))
    } else {
        None
    }
}

/// Picks `(gate, transformation index)` for a circuit given the allowed
/// gate positions.
pub type ChooseFn<'a> = dyn FnMut(&Circuit, &[usize], &mut ChaCha8Rng) -> Result<(GateId, usize)> + 'a;

/// State of a policy-guided search.
#[derive(Clone, Debug)]
pub struct Pgs {
    metric: CostMetric,
    alpha: f64,
    horizon: usize,
    buffer: Vec<Circuit>,
    in_buffer: HashSet<u64>,
    best_cost: f64,
    masks: HashMap<u64, MaskState>,
    /// Steps taken (one per gate selection).
    pub steps: usize,
    /// `(step, cost)` at every strict improvement.
    pub trace: Vec<(usize, f64)>,
}

/// Outcome of a bounded slice of search.
#[derive(Clone, Debug, PartialEq)]
pub struct SliceOutcome {
    pub steps: usize,
    pub improved: bool,
    /// No circuit in the buffer has an unmasked gate left.
    pub exhausted: bool,
}

impl Pgs {
    pub fn new(start: Circuit, metric: CostMetric, alpha: f64, horizon: usize) -> Result<Pgs> {
        let best_cost = metric.objective(&start)?;
        let mut pgs = Pgs {
            metric,
            alpha,
            horizon,
            buffer: Vec::new(),
            in_buffer: HashSet::new(),
            best_cost,
            masks: HashMap::new(),
            steps: 0,
            trace: Vec::new(),
        };
        pgs.reset_buffer(start);
        Ok(pgs)
    }

    fn reset_buffer(&mut self, c: Circuit) {
        self.buffer.clear();
        self.in_buffer.clear();
        self.in_buffer.insert(c.canonical_hash());
        self.buffer.push(c);
    }

    pub fn best_cost(&self) -> f64 {
        self.best_cost
    }

    pub fn best(&self) -> &Circuit {
        &self.buffer[0]
    }

    /// The lowest-cost circuits currently held.
    pub fn buffer(&self) -> &[Circuit] {
        &self.buffer
    }

    pub fn masks(&self, c: &Circuit) -> Option<&MaskState> {
        self.masks.get(&c.canonical_hash())
    }

    /// Replace the buffer by `c` if it is strictly better.
    pub fn offer(&mut self, c: &Circuit) -> Result<bool> {
        let cost = self.metric.objective(c)?;
        if cost < self.best_cost {
            self.best_cost = cost;
            self.reset_buffer(c.clone());
            self.trace.push((self.steps, cost));
            return Ok(true);
        }
        Ok(false)
    }

    /// Run with the agent's gate policy and most probable transformation.
    pub fn run(
        &mut self,
        agent: &Agent,
        rules: &RuleSet,
        max_steps: usize,
        deadline: Option<Instant>,
        rng: &mut ChaCha8Rng,
    ) -> Result<SliceOutcome> {
        let mut choose = |c: &Circuit, allowed: &[usize], rng: &mut ChaCha8Rng| {
            let eval = agent.evaluate(c)?;
            let (a, _) = agent.act(c, &eval, rules, Some(allowed), true, rng)?;
            Ok((a.gate, a.xfer_index))
        };
        self.run_with(rules, max_steps, deadline, &mut choose, rng)
    }

    /// Run until `max_steps` steps are spent or the buffer is exhausted,
    /// choosing `(gate, transformation)` among allowed positions with `choose`.
    pub fn run_with(
        &mut self,
        rules: &RuleSet,
        max_steps: usize,
        deadline: Option<Instant>,
        choose: &mut ChooseFn<'_>,
        rng: &mut ChaCha8Rng,
    ) -> Result<SliceOutcome> {
        let start_steps = self.steps;
        let mut improved = false;
        let out_of_time = || deadline.is_some_and(|d| Instant::now() >= d);
        while self.steps - start_steps < max_steps && !out_of_time() {
            // Pick a buffer circuit with an unmasked gate.
            let mut candidates: Vec<usize> = (0..self.buffer.len()).collect();
            let mut picked = None;
            while !candidates.is_empty() {
                let k = candidates.swap_remove(rng.gen_range(0..candidates.len()));
                let c = &self.buffer[k];
                if !self.masks.entry(c.canonical_hash()).or_default().available(c).is_empty() {
                    picked = Some(k);
                    break;
                }
            }
            let Some(k) = picked else {
                return Ok(SliceOutcome { steps: self.steps - start_steps, improved, exhausted: true });
            };
            let mut current = self.buffer[k].clone();
            for _ in 0..self.horizon {
                if self.steps - start_steps >= max_steps || out_of_time() {
                    break;
                }
                let hash = current.canonical_hash();
                let allowed = self.masks.entry(hash).or_default().available(&current);
                if allowed.is_empty() {
                    break;
                }
                self.steps += 1;
                let (gate, xfer) = choose(&current, &allowed, rng)?;
                let masks = self.masks.get_mut(&hash).expect("inserted above");
                if xfer == 0 {
                    masks.mask_hard(gate);
                    break;
                }
                let rule = rules.get(xfer);
                let m = match_at(&current, gate, rule).ok_or(Error::StaleMatch)?;
                let (next, _) = apply(&current, rule, &m)?;
                let cost = self.metric.objective(&next)?;
                if cost > self.alpha * self.best_cost {
                    masks.mask_hard(gate);
                    break;
                }
                masks.mask_soft(gate);
                if cost < self.best_cost {
                    self.offer(&next)?;
                    improved = true;
                    break;
                }
                if cost == self.best_cost && self.in_buffer.insert(next.canonical_hash()) {
                    self.buffer.push(next.clone());
                }
                current = next;
                if current.is_empty() {
                    break;
                }
            }
        }
        Ok(SliceOutcome { steps: self.steps - start_steps, improved, exhausted: false })
    }
}

/// Standalone policy-guided search from `start`.
pub fn policy_guided_search(
    start: Circuit,
    agent: &Agent,
    rules: &RuleSet,
    metric: &CostMetric,
    config: &SearchConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Circuit> {
    let deadline = deadline_after(Instant::now(), config.wall_budget);
    let mut pgs = Pgs::new(start, metric.clone(), config.alpha, config.horizon)?;
    pgs.run(agent, rules, config.step_budget, deadline, rng)?;
    Ok(pgs.best().clone())
}

/// One improvement of the overall best.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Improvement {
    pub step: usize,
    pub wall_time: f64,
    pub cost: f64,
    /// `finetune` or `search`.
    pub source: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizeReport {
    pub input_cost: f64,
    pub output_cost: f64,
    pub steps: usize,
    pub improvements: Vec<Improvement>,
    /// Whether the output was checked against the input with the unitary oracle.
    pub verified: bool,
}

/// Output of [`optimize`].
pub struct Optimized {
    pub circuit: Circuit,
    pub report: OptimizeReport,
    /// Fine-tuning log lines serialized as JSON, one per iteration.
    pub train_log: Vec<String>,
}

/// Fine-tune on `input` and search with the fine-tuned policy, alternating
/// one fine-tuning iteration with one search slice:
/// a fine-tuning improvement restarts search from it, a search improvement
/// is inserted into the fine-tuning buffer, and a search that times out
/// without improving restarts with the latest parameters.
pub fn optimize(
    input: &Circuit,
    pretrained: &Agent,
    rules: &RuleSet,
    metric: &CostMetric,
    train: &TrainConfig,
    config: &SearchConfig,
    seed: u64,
) -> Result<Optimized> {
    config.validate()?;
    let started = Instant::now();
    let deadline = deadline_after(started, config.wall_budget);
    let out_of_time = || deadline.is_some_and(|d| Instant::now() >= d);
    let mut seeds = ChaCha8Rng::seed_from_u64(seed);
    let input_cost = metric.objective(input)?;
    let train_cfg = TrainConfig { alpha: config.alpha, ..train.clone() };
    let mut trainer = Trainer::new(
        pretrained.clone(),
        std::sync::Arc::new(rules.clone()),
        train_cfg,
        metric.clone(),
        std::slice::from_ref(input),
        seeds.gen(),
    )?;
    let mut search_rng = ChaCha8Rng::seed_from_u64(seeds.gen());
    let mut pgs = Pgs::new(input.clone(), metric.clone(), config.alpha, config.horizon)?;
    let mut search_agent = pretrained.clone();
    let mut best = input.clone();
    let mut best_cost = input_cost;
    let mut steps = 0usize;
    let mut improvements = Vec::new();
    let mut iterations = 0usize;
    let mut since_improvement = 0usize;
    let search_on = config.slice_steps > 0;
    let mut search_exhausted = false;

    while steps < config.step_budget && !out_of_time() {
        let ft_turn = config.finetune && (iterations < config.head_start_iterations || !search_on || search_exhausted);
        let alternate = config.finetune && search_on && !search_exhausted && iterations >= config.head_start_iterations;
        if ft_turn || alternate {
            let line = trainer.iterate()?;
            iterations += 1;
            steps += line.entries;
            let ft_best = trainer.best_cost(0);
            if ft_best < best_cost {
                best_cost = ft_best;
                best = trainer.best_circuit(0).clone();
                improvements.push(Improvement {
                    step: steps,
                    wall_time: started.elapsed().as_secs_f64(),
                    cost: best_cost,
                    source: "finetune".into(),
                });
                // Restart search from the new best with the latest parameters.
                search_agent.store.copy_from(&trainer.agent.store)?;
                pgs = Pgs::new(best.clone(), metric.clone(), config.alpha, config.horizon)?;
                since_improvement = 0;
                search_exhausted = false;
            }
            if ft_turn {
                continue;
            }
        }
        if !search_on || search_exhausted {
            break;
        }
        let budget = config.slice_steps.min(config.step_budget.saturating_sub(steps));
        if budget == 0 {
            break;
        }
        let out = pgs.run(&search_agent, rules, budget, deadline, &mut search_rng)?;
        steps += out.steps;
        since_improvement += out.steps;
        if out.improved && pgs.best_cost() < best_cost {
            best_cost = pgs.best_cost();
            best = pgs.best().clone();
            improvements.push(Improvement {
                step: steps,
                wall_time: started.elapsed().as_secs_f64(),
                cost: best_cost,
                source: "search".into(),
            });
            if config.finetune {
                trainer.insert(0, best.clone())?;
            }
            since_improvement = 0;
        }
        if out.exhausted || since_improvement >= config.search_timeout_steps {
            if config.finetune {
                search_agent.store.copy_from(&trainer.agent.store)?;
                pgs = Pgs::new(best.clone(), metric.clone(), config.alpha, config.horizon)?;
                since_improvement = 0;
            } else if out.exhausted {
                search_exhausted = true;
            }
        }
        if out.steps == 0 && !config.finetune {
            break;
        }
    }

    let verified = input.num_qubits() <= VERIFY_QUBIT_LIMIT;
    if verified && !equivalent_up_to_phase(input, &best, 4)? {
        return Err(Error::InvalidCircuit("optimized circuit is not equivalent to the input".into()));
    }
    let train_log = trainer.log.iter().map(serde_json::to_string).collect::<std::result::Result<_, _>>()?;
    Ok(Optimized {
        circuit: best,
        report: OptimizeReport { input_cost, output_cost: best_cost, steps, improvements, verified },
        train_log,
    })
}

/// How a random-walk search treats a candidate rewrite.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Acceptance {
    /// Reject any rewrite with negative reward.
    Monotone,
    /// Accept while cost stays within `alpha` times the best cost.
    Bounded(f64),
}

/// Best-cost trace of a random-walk search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    /// Best cost after each step.
    pub best: Vec<f64>,
    #[serde(skip)]
    pub best_circuit: Option<Circuit>,
}

impl Trace {
    pub fn final_cost(&self) -> f64 {
        *self.best.last().expect("trace has the start cost")
    }
}

/// Randomized greedy search with plateau moves. Each step picks a random
/// gate; when some rule at it reduces cost the best such rule is taken,
/// otherwise a random applicable rule is tried under `acceptance`.
pub fn random_search(
    start: &Circuit,
    rules: &RuleSet,
    metric: &CostMetric,
    steps: usize,
    acceptance: Acceptance,
    rng: &mut ChaCha8Rng,
) -> Result<Trace> {
    let mut current = start.clone();
    let mut cost = metric.objective(start)?;
    let mut best_cost = cost;
    let mut best = start.clone();
    let mut trace = vec![best_cost];
    for _ in 0..steps {
        if !current.is_empty() {
            let pos = rng.gen_range(0..current.len());
            let gate = current.gate(pos).id;
            let mask = valid_xfers(&current, gate, rules);
            let mut options = Vec::new();
            for (i, &ok) in mask.iter().enumerate().skip(1) {
                if ok {
                    let m = match_at(&current, gate, rules.get(i)).ok_or(Error::StaleMatch)?;
                    let (next, _) = apply(&current, rules.get(i), &m)?;
                    let c = metric.objective(&next)?;
                    options.push((c, next));
                }
            }
            let improving = options
                .iter()
                .enumerate()
                .filter(|(_, (c, _))| *c < cost)
                .min_by(|a, b| a.1 .0.total_cmp(&b.1 .0).then(a.0.cmp(&b.0)))
                .map(|(i, _)| i);
            let choice = match improving {
                Some(i) => Some(i),
                None if !options.is_empty() => {
                    let i = rng.gen_range(0..options.len());
                    let c = options[i].0;
                    let ok = match acceptance {
                        Acceptance::Monotone => c <= cost,
                        Acceptance::Bounded(alpha) => c <= alpha * best_cost,
                    };
                    ok.then_some(i)
                }
                None => None,
            };
            if let Some(i) = choice {
                let (c, next) = options.swap_remove(i);
                cost = c;
                current = next;
                if cost < best_cost {
                    best_cost = cost;
                    best = current.clone();
                }
            }
        }
        trace.push(best_cost);
    }
    Ok(Trace { best: trace, best_circuit: Some(best) })
}

/// The greedy baseline: reject every rewrite with negative reward.
pub fn greedy_baseline(start: &Circuit, rules: &RuleSet, metric: &CostMetric, steps: usize, seed: u64) -> Result<Trace> {
    random_search(start, rules, metric, steps, Acceptance::Monotone, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// A consecutive slice of a circuit's canonical order, on compacted qubits.
#[derive(Clone, Debug, PartialEq)]
pub struct Part {
    pub circuit: Circuit,
    /// Original qubit of each fragment qubit.
    pub qubits: Vec<usize>,
}

/// Split into consecutive chunks of the canonical order of at most
/// `max_gates` gates each. Gates are never cut.
pub fn partition(c: &Circuit, max_gates: usize) -> Result<Vec<Part>> {
    if max_gates == 0 {
        return Err(Error::Config("partition size must be at least 1".into()));
    }
    let order = c.canonical_order();
    let mut parts = Vec::new();
    for chunk in order.chunks(max_gates) {
        let mut qubits: Vec<usize> = chunk.iter().flat_map(|&p| c.gate(p).qubits().to_vec()).collect();
        qubits.sort_unstable();
        qubits.dedup();
        let local = |q: usize| qubits.binary_search(&q).expect("collected above");
        let gates: Vec<Gate> = chunk
            .iter()
            .enumerate()
            .map(|(i, &p)| {
                let g = c.gate(p);
                let qs: Vec<usize> = g.qubits().iter().map(|&q| local(q)).collect();
                Gate::new(GateId(i as u32), g.kind, &qs, g.param.clone())
            })
            .collect();
        parts.push(Part { circuit: Circuit::new(qubits.len(), gates)?, qubits });
    }
    Ok(parts)
}

/// Concatenate fragments in order on a `num_qubits` register.
pub fn stitch(parts: &[Part], num_qubits: usize) -> Result<Circuit> {
    let mut gates = Vec::new();
    for part in parts {
        for p in part.circuit.canonical_order() {
            let g = part.circuit.gate(p);
            let qs: Vec<usize> = g.qubits().iter().map(|&q| part.qubits[q]).collect();
            if qs.iter().any(|&q| q >= num_qubits) {
                return Err(Error::QubitOutOfRange { qubit: *qs.iter().max().expect("nonempty"), num_qubits });
            }
            gates.push(Gate::new(GateId(gates.len() as u32), g.kind, &qs, g.param.clone()));
        }
    }
    Circuit::new(num_qubits, gates)
}

/// Optimize each fragment independently and stitch the results. Fragments
/// share the step budget evenly.
pub fn optimize_partitioned(
    input: &Circuit,
    pretrained: &Agent,
    rules: &RuleSet,
    metric: &CostMetric,
    train: &TrainConfig,
    config: &SearchConfig,
    seed: u64,
) -> Result<Optimized> {
    let parts = partition(input, config.partition_max_gates)?;
    if parts.len() <= 1 {
        return optimize(input, pretrained, rules, metric, train, config, seed);
    }
    let per_part = SearchConfig {
        step_budget: config.step_budget / parts.len(),
        wall_budget: config.wall_budget / parts.len() as f64,
        ..config.clone()
    };
    let mut seeds = ChaCha8Rng::seed_from_u64(seed);
    let mut out_parts = Vec::with_capacity(parts.len());
    let mut steps = 0;
    let mut train_log = Vec::new();
    let mut improvements = Vec::new();
    for part in &parts {
        let o = optimize(&part.circuit, pretrained, rules, metric, train, &per_part, seeds.gen())?;
        steps += o.report.steps;
        train_log.extend(o.train_log);
        improvements.extend(o.report.improvements);
        out_parts.push(Part { circuit: o.circuit, qubits: part.qubits.clone() });
    }
    let circuit = stitch(&out_parts, input.num_qubits())?;
    let verified = input.num_qubits() <= VERIFY_QUBIT_LIMIT;
    if verified && !equivalent_up_to_phase(input, &circuit, 4)? {
        return Err(Error::InvalidCircuit("stitched circuit is not equivalent to the input".into()));
    }
    let report = OptimizeReport {
        input_cost: metric.objective(input)?,
        output_cost: metric.objective(&circuit)?,
        steps,
        improvements,
        verified,
    };
    Ok(Optimized { circuit, report, train_log })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::AgentConfig;
    use crate::circuit::{CircuitBuilder, GateSet};
    use crate::xfer::Transformation;

    fn hh_rules() -> RuleSet {
        let src = CircuitBuilder::new(1).h(0).h(0).build().unwrap();
        RuleSet::new(GateSet::nam(), vec![Transformation::new(&src, &Circuit::empty(1)).unwrap()])
    }

    fn tiny_agent(actions: usize, seed: u64) -> Agent {
        let cfg = AgentConfig { layers: 1, dim: 4, critic_hidden: 4, actor_hidden: 4, ..AgentConfig::desk() };
        Agent::new(cfg, &GateSet::nam(), actions, seed).unwrap()
    }

    #[test]
    fn mask_lifecycle() {
        let c = CircuitBuilder::new(1).h(0).x(0).build().unwrap();
        let (a, b) = (c.gate(0).id, c.gate(1).id);
        let mut m = MaskState::default();
        m.mask_soft(a);
        assert_eq!(m.available(&c), vec![1]);
        m.mask_hard(b);
        // Everything masked: soft masks are cleared once.
        assert_eq!(m.available(&c), vec![0]);
        assert!(m.soft_cleared);
        m.mask_soft(a);
        assert!(m.soft.is_empty());
        m.mask_hard(a);
        assert!(m.available(&c).is_empty());
        assert!(m.hard.is_disjoint(&m.soft));
    }

    #[test]
    fn no_rule_landscape_terminates_with_start() {
        let rules = hh_rules();
        let agent = tiny_agent(rules.len(), 1);
        let c = CircuitBuilder::new(2).x(0).cx(0, 1).x(1).build().unwrap();
        let mut pgs = Pgs::new(c.clone(), CostMetric::TotalGates, 1.2, 600).unwrap();
        let out = pgs.run(&agent, &rules, 1000, None, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!(out.exhausted);
        assert_eq!(out.steps, 3);
        assert_eq!(pgs.best(), &c);
    }

    #[test]
    fn hh_search_reaches_empty() {
        let rules = hh_rules();
        let c = CircuitBuilder::new(1).h(0).h(0).build().unwrap();
        // An actor whose argmax prefers the rule: bias the last actor layer.
        let mut agent = tiny_agent(rules.len(), 2);
        let id = agent.store.id("actor.b2").unwrap();
        agent.store.value_mut(id).data = vec![-10.0, 10.0];
        let mut pgs = Pgs::new(c, CostMetric::TotalGates, 1.2, 600).unwrap();
        let out = pgs.run(&agent, &rules, 2, None, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!(out.improved);
        assert!(pgs.best().is_empty());
        assert!(out.steps <= 2);
    }

    #[test]
    fn partition_sizes_and_round_trip() {
        let mut b = CircuitBuilder::new(2);
        for i in 0..10 {
            b = if i % 2 == 0 { b.h(0) } else { b.cx(0, 1) };
        }
        let c = b.build().unwrap();
        let parts = partition(&c, 4).unwrap();
        assert_eq!(parts.iter().map(|p| p.circuit.len()).collect::<Vec<_>>(), vec![4, 4, 2]);
        assert_eq!(stitch(&parts, 2).unwrap().canonical_hash(), c.canonical_hash());
        let one = partition(&c, 100).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(stitch(&one, 2).unwrap().canonical_hash(), c.canonical_hash());
        assert!(partition(&c, 0).is_err());
    }

    #[test]
    fn zero_search_is_pure_finetuning() {
        let rules = hh_rules();
        let agent = tiny_agent(rules.len(), 3);
        let c = CircuitBuilder::new(2).h(0).h(0).cx(0, 1).h(1).h(1).build().unwrap();
        let train = TrainConfig { trajectories: 2, epochs: 1, ..TrainConfig::desk_finetune() };
        let cfg = SearchConfig { slice_steps: 0, step_budget: 40, wall_budget: f64::INFINITY, ..SearchConfig::desk() };
        let o = optimize(&c, &agent, &rules, &CostMetric::TotalGates, &train, &cfg, 7).unwrap();
        assert!(o.report.output_cost <= o.report.input_cost);
        assert!(o.report.improvements.iter().all(|i| i.source == "finetune"));
        assert!(o.report.verified);
        assert!(!o.train_log.is_empty());
    }

    #[test]
    fn monotone_and_bounded_agree_without_increasing_rules() {
        let rules = hh_rules();
        let c = CircuitBuilder::new(2).h(0).h(0).cx(0, 1).h(1).x(1).h(1).build().unwrap();
        let m = CostMetric::TotalGates;
        let a = random_search(&c, &rules, &m, 50, Acceptance::Monotone, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let b = random_search(&c, &rules, &m, 50, Acceptance::Bounded(1.2), &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(a.best, b.best);
        assert_eq!(a.final_cost(), 4.0);
    }
}
