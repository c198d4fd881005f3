//! Trajectory collection, one-step hierarchical advantages, and the clipped
//! policy-gradient update.
//!
//! Collection samples `B` start circuits from the initial circuit buffer,
//! rolls each out for at most `T` steps with its own seeded generator, and
//! merges discovered circuits back in actor order, so running the actors on
//! several threads gives the same result as running them one by one.

use std::collections::{BTreeMap, HashSet};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{sample_index, ActionSample, Agent, Evaluation};
use crate::circuit::{Circuit, CostMetric, GateId};
use crate::error::{Error, Result};
use crate::nn::{Adam, Tape, Var};
use crate::xfer::{apply, influenced_gates, match_at, RuleSet};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Trajectories per iteration (B).
    pub trajectories: usize,
    /// Maximum steps per trajectory (T).
    pub horizon: usize,
    pub gamma: f64,
    pub clip: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub epochs: usize,
    pub minibatch: usize,
    pub lr_actor: f64,
    pub lr_critic: f64,
    pub lr_gnn: f64,
    /// Trajectories stop once cost exceeds `alpha` times the input cost.
    pub alpha: f64,
    /// Predecessor hops for the influenced-gate set.
    pub hops: usize,
    /// Start-circuit sampling weight ratio between consecutive cost ranks.
    pub buffer_beta: f64,
    pub buffer_capacity: usize,
    /// Threads used for trajectory collection.
    pub workers: usize,
}

impl TrainConfig {
    pub fn paper_pretrain() -> TrainConfig {
        TrainConfig {
            trajectories: 128,
            horizon: 600,
            gamma: 0.95,
            clip: 0.2,
            entropy_coef: 0.02,
            value_coef: 0.5,
            epochs: 20,
            minibatch: 4800,
            lr_actor: 3e-4,
            lr_critic: 5e-4,
            lr_gnn: 3e-4,
            alpha: 1.2,
            hops: 1,
            buffer_beta: 0.75,
            buffer_capacity: 4096,
            workers: 1,
        }
    }

    pub fn paper_finetune() -> TrainConfig {
        TrainConfig { trajectories: 64, epochs: 5, ..TrainConfig::paper_pretrain() }
    }

    pub fn desk_pretrain() -> TrainConfig {
        TrainConfig { trajectories: 16, minibatch: 256, ..TrainConfig::paper_pretrain() }
    }

    pub fn desk_finetune() -> TrainConfig {
        TrainConfig { trajectories: 16, minibatch: 256, ..TrainConfig::paper_finetune() }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = self.trajectories > 0
            && self.horizon > 0
            && self.epochs > 0
            && self.minibatch > 0
            && self.buffer_capacity > 0
            && self.workers > 0
            && self.alpha > 0.0
            && self.buffer_beta > 0.0
            && self.lr_actor > 0.0
            && self.lr_critic > 0.0
            && self.lr_gnn > 0.0
            && self.value_coef >= 0.0
            && self.entropy_coef >= 0.0;
        if !positive || !(self.gamma > 0.0 && self.gamma < 1.0) || !(self.clip > 0.0 && self.clip < 1.0) {
            return Err(Error::Config("training hyperparameters out of range".into()));
        }
        Ok(())
    }

    /// Adam with per-component learning rates (GNN, critic, actor).
    pub fn optimizer(&self, agent: &Agent) -> Adam {
        Adam::new(&agent.store, |name| {
            if name.starts_with("actor") {
                self.lr_actor
            } else if name.starts_with("critic") {
                self.lr_critic
            } else {
                self.lr_gnn
            }
        })
    }
}

/// Integer buffer key of an objective value: exact for the integer metrics,
/// nano-units for fidelity.
pub fn cost_key(metric: &CostMetric, objective: f64) -> i64 {
    match metric {
        CostMetric::Fidelity(_) => (objective * 1e9).round() as i64,
        _ => objective.round() as i64,
    }
}

/// Circuits of one equivalence group keyed by cost.
#[derive(Clone, Debug)]
struct Group {
    input: Circuit,
    input_cost: f64,
    by_cost: BTreeMap<i64, Vec<Circuit>>,
    seen: HashSet<u64>,
    size: usize,
}

/// Start circuits for trajectories, one cost-keyed map per equivalence group.
#[derive(Clone, Debug)]
pub struct InitialBuffer {
    metric: CostMetric,
    beta: f64,
    capacity: usize,
    groups: Vec<Group>,
}

impl InitialBuffer {
    pub fn new(metric: CostMetric, inputs: &[Circuit], beta: f64, capacity: usize) -> Result<InitialBuffer> {
        if inputs.is_empty() {
            return Err(Error::Config("initial buffer needs at least one circuit".into()));
        }
        let mut groups = Vec::with_capacity(inputs.len());
        for c in inputs {
            let cost = metric.objective(c)?;
            let mut by_cost = BTreeMap::new();
            by_cost.insert(cost_key(&metric, cost), vec![c.clone()]);
            groups.push(Group {
                input: c.clone(),
                input_cost: cost,
                by_cost,
                seen: HashSet::from([c.canonical_hash()]),
                size: 1,
            });
        }
        Ok(InitialBuffer { metric, beta, capacity: capacity.max(1), groups })
    }

    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn len(&self) -> usize {
        self.groups.iter().map(|g| g.size).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input(&self, group: usize) -> &Circuit {
        &self.groups[group].input
    }

    pub fn input_cost(&self, group: usize) -> f64 {
        self.groups[group].input_cost
    }

    /// Lowest cost key of a group and one circuit holding it.
    pub fn best(&self, group: usize) -> (i64, &Circuit) {
        let (k, v) = self.groups[group].by_cost.iter().next().expect("input never evicted");
        (*k, &v[0])
    }

    pub fn keys(&self, group: usize) -> Vec<i64> {
        self.groups[group].by_cost.keys().copied().collect()
    }

    pub fn circuits_at(&self, group: usize, key: i64) -> &[Circuit] {
        self.groups[group].by_cost.get(&key).map_or(&[], |v| v.as_slice())
    }

    pub fn contains(&self, group: usize, c: &Circuit) -> bool {
        self.groups[group].seen.contains(&c.canonical_hash())
    }

    /// Insert unless already present; returns whether it was added. Over
    /// capacity, the oldest circuit of the highest cost key is evicted (the
    /// input circuit is never evicted).
    pub fn insert(&mut self, group: usize, c: Circuit) -> Result<bool> {
        let cost = self.metric.objective(&c)?;
        let key = cost_key(&self.metric, cost);
        let g = &mut self.groups[group];
        if !g.seen.insert(c.canonical_hash()) {
            return Ok(false);
        }
        g.by_cost.entry(key).or_default().push(c);
        g.size += 1;
        while g.size > self.capacity {
            let input_hash = g.input.canonical_hash();
            let mut evicted = false;
            for (&k, list) in g.by_cost.iter_mut().rev() {
                if let Some(i) = list.iter().position(|x| x.canonical_hash() != input_hash) {
                    let gone = list.remove(i);
                    g.seen.remove(&gone.canonical_hash());
                    g.size -= 1;
                    if list.is_empty() {
                        g.by_cost.remove(&k);
                    }
                    evicted = true;
                    break;
                }
            }
            if !evicted {
                break;
            }
        }
        Ok(true)
    }

    /// Drop everything except circuits at the lowest cost of each group.
    pub fn keep_lowest(&mut self) {
        for g in &mut self.groups {
            let first = *g.by_cost.keys().next().expect("nonempty");
            g.by_cost.retain(|&k, _| k == first);
            g.size = g.by_cost[&first].len();
            g.seen = g.by_cost[&first].iter().map(Circuit::canonical_hash).collect();
        }
    }

    /// Pick a group uniformly, a cost key with weight `beta^rank`, then a
    /// circuit uniformly within the key.
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> (usize, Circuit) {
        let gi = if self.groups.len() == 1 { 0 } else { rng.gen_range(0..self.groups.len()) };
        let g = &self.groups[gi];
        let weights: Vec<f64> = (0..g.by_cost.len()).map(|i| self.beta.powi(i as i32)).collect();
        let rank = sample_index(&weights, rng);
        let list = g.by_cost.values().nth(rank).expect("rank in range");
        (gi, list[rng.gen_range(0..list.len())].clone())
    }
}

/// One step of a trajectory.
#[derive(Clone, Debug)]
pub struct RolloutEntry {
    pub group: usize,
    pub before: Arc<Circuit>,
    pub after: Arc<Circuit>,
    pub gate: GateId,
    pub xfer_index: usize,
    pub mask: Vec<bool>,
    /// `cost(before) - cost(after)`.
    pub reward: f64,
    pub value_pred: f64,
    pub behavior_prob: f64,
    /// Influenced gates in `after`.
    pub influenced: Vec<GateId>,
    /// Last step of its trajectory.
    pub done: bool,
    /// NOP or a cost-bound violation: the bootstrap term is zero.
    pub terminal: bool,
}

/// Chooses `(gate, transformation)` for a circuit; the default is [`Agent::act`].
pub type ActionFn<'a> = dyn FnMut(&Circuit, &Evaluation, &mut ChaCha8Rng) -> Result<(ActionSample, Vec<bool>)> + 'a;

/// Roll out one trajectory from `start`. Returns the entries and the circuits
/// whose cost did not exceed the start cost.
#[allow(clippy::too_many_arguments)]
pub fn run_trajectory(
    agent: &Agent,
    rules: &RuleSet,
    config: &TrainConfig,
    metric: &CostMetric,
    group: usize,
    start: Circuit,
    input_cost: f64,
    choose: &mut ActionFn<'_>,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<RolloutEntry>, Vec<Circuit>)> {
    let start_cost = metric.objective(&start)?;
    let mut c = Arc::new(start);
    let mut cost = start_cost;
    let mut entries = Vec::new();
    let mut found = Vec::new();
    for t in 0..config.horizon {
        if c.is_empty() {
            break;
        }
        let eval = agent.evaluate(&c)?;
        let (a, mask) = choose(&c, &eval, rng)?;
        if a.xfer_index == 0 {
            entries.push(RolloutEntry {
                group,
                before: c.clone(),
                after: c.clone(),
                gate: a.gate,
                xfer_index: 0,
                mask,
                reward: 0.0,
                value_pred: a.value,
                behavior_prob: a.xfer_prob,
                influenced: Vec::new(),
                done: true,
                terminal: true,
            });
            break;
        }
        let rule = rules.get(a.xfer_index);
        let m = match_at(&c, a.gate, rule).ok_or(Error::StaleMatch)?;
        let (after, new_ids) = apply(&c, rule, &m)?;
        let after_cost = metric.objective(&after)?;
        let influenced = influenced_gates(&c, &after, &new_ids, config.hops)?;
        let exceeded = after_cost > config.alpha * input_cost;
        let after = Arc::new(after);
        let done = exceeded || t + 1 == config.horizon || after.is_empty();
        entries.push(RolloutEntry {
            group,
            before: c.clone(),
            after: after.clone(),
            gate: a.gate,
            xfer_index: a.xfer_index,
            mask,
            reward: cost - after_cost,
            value_pred: a.value,
            behavior_prob: a.xfer_prob,
            influenced,
            done,
            terminal: exceeded,
        });
        if after_cost <= start_cost {
            found.push((*after).clone());
        }
        c = after;
        cost = after_cost;
        if exceeded {
            break;
        }
    }
    Ok((entries, found))
}

/// Collect `B` trajectories from a snapshot of `buffer`, then merge the
/// discovered circuits in actor order. Returns the entries and the number of
/// circuits newly added to the buffer.
pub fn collect_trajectories(
    agent: &Agent,
    buffer: &mut InitialBuffer,
    rules: &RuleSet,
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<RolloutEntry>, usize)> {
    let metric = buffer.metric.clone();
    let jobs: Vec<(usize, Circuit, u64)> = (0..config.trajectories)
        .map(|_| {
            let (g, c) = buffer.sample(rng);
            (g, c, rng.gen::<u64>())
        })
        .collect();
    let run = |(g, c, seed): &(usize, Circuit, u64)| {
        let mut actor_rng = ChaCha8Rng::seed_from_u64(*seed);
        let mut choose = |c: &Circuit, e: &Evaluation, r: &mut ChaCha8Rng| agent.act(c, e, rules, None, false, r);
        run_trajectory(agent, rules, config, &metric, *g, c.clone(), buffer.input_cost(*g), &mut choose, &mut actor_rng)
    };
    let results: Vec<Result<(Vec<RolloutEntry>, Vec<Circuit>)>> = if config.workers <= 1 || jobs.len() <= 1 {
        jobs.iter().map(run).collect()
    } else {
        let chunk = jobs.len().div_ceil(config.workers);
        std::thread::scope(|s| {
            let handles: Vec<_> =
                jobs.chunks(chunk).map(|part| s.spawn(|| part.iter().map(run).collect::<Vec<_>>())).collect();
            handles.into_iter().flat_map(|h| h.join().expect("actor thread panicked")).collect()
        })
    };
    let mut entries = Vec::new();
    let mut added = 0;
    for ((g, _, _), r) in jobs.iter().zip(results) {
        let (e, found) = r?;
        entries.extend(e);
        for c in found {
            if buffer.insert(*g, c)? {
                added += 1;
            }
        }
    }
    Ok((entries, added))
}

/// `r + γ·bootstrap − V(C, g)`, with no bootstrap at terminal steps.
pub fn one_step_advantage(reward: f64, gamma: f64, bootstrap: Option<f64>, value: f64) -> f64 {
    reward + gamma * bootstrap.unwrap_or(0.0) - value
}

/// Maximum current value over the influenced gates, or `None` for terminal
/// entries.
pub fn bootstrap_value(agent: &Agent, entry: &RolloutEntry) -> Result<Option<f64>> {
    if entry.terminal || entry.influenced.is_empty() {
        return Ok(None);
    }
    let mut best = f64::NEG_INFINITY;
    for &g in &entry.influenced {
        best = best.max(agent.fragment_value(&entry.after, g)?);
    }
    Ok(Some(best))
}

pub fn hae_advantage(agent: &Agent, entry: &RolloutEntry, gamma: f64) -> Result<f64> {
    Ok(one_step_advantage(entry.reward, gamma, bootstrap_value(agent, entry)?, entry.value_pred))
}

/// Advantage inputs frozen at collection time.
#[derive(Clone, Debug, PartialEq)]
pub struct Frozen {
    pub advantage: f64,
    /// `r + γ·bootstrap`, the value-regression target.
    pub target: f64,
}

pub fn freeze_advantages(agent: &Agent, entries: &[RolloutEntry], gamma: f64) -> Result<Vec<Frozen>> {
    entries
        .iter()
        .map(|e| {
            let boot = bootstrap_value(agent, e)?;
            let target = e.reward + gamma * boot.unwrap_or(0.0);
            Ok(Frozen { advantage: target - e.value_pred, target })
        })
        .collect()
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub policy: f64,
    pub value: f64,
    pub entropy: f64,
    pub total: f64,
}

/// Per-entry graph pieces: value, masked log-probabilities, chosen log-probability.
fn entry_terms(tape: &mut Tape, agent: &Agent, e: &RolloutEntry) -> Result<(Var, Var, Var)> {
    let h = agent.gnn.embed_fragment_on(tape, &agent.store, &e.before, e.gate)?;
    let v = agent.values_on(tape, h)?;
    let v = tape.index(v, 0)?;
    let logits = agent.logits_on(tape, h)?;
    let logits = tape.reshape(logits, &[agent.num_actions()])?;
    let logp = tape.masked_log_softmax(logits, &e.mask)?;
    let chosen = tape.index(logp, e.xfer_index)?;
    Ok((v, logp, chosen))
}

/// Ratio `π_new / π_behavior` of every entry under the current parameters.
pub fn ratios(agent: &Agent, entries: &[RolloutEntry]) -> Result<Vec<f64>> {
    entries
        .iter()
        .map(|e| {
            let mut tape = Tape::new();
            let (_, _, lp) = entry_terms(&mut tape, agent, e)?;
            Ok((tape.value(lp).item() - e.behavior_prob.ln()).exp())
        })
        .collect()
}

/// `−L_clip + c1·L_value − c2·H` over `entries`, built on `tape`.
pub fn combined_loss(
    tape: &mut Tape,
    agent: &Agent,
    entries: &[&RolloutEntry],
    frozen: &[&Frozen],
    config: &TrainConfig,
) -> Result<(Var, LossReport)> {
    if entries.is_empty() {
        return Err(Error::EmptyRollout);
    }
    let mut surr = Vec::with_capacity(entries.len());
    let mut sq = Vec::with_capacity(entries.len());
    let mut ent = Vec::with_capacity(entries.len());
    for (e, f) in entries.iter().zip(frozen) {
        let (v, logp, chosen) = entry_terms(tape, agent, e)?;
        let lp = tape.add_scalar(chosen, -e.behavior_prob.ln());
        let ratio = tape.exp(lp);
        let a = tape.scalar(f.advantage);
        let unclipped = tape.mul(ratio, a)?;
        let clipped = tape.clamp(ratio, 1.0 - config.clip, 1.0 + config.clip);
        let clipped = tape.mul(clipped, a)?;
        surr.push(tape.min(unclipped, clipped)?);
        // Live advantage with the bootstrap target held fixed.
        let target = tape.scalar(f.target);
        let adv = tape.sub(target, v)?;
        sq.push(tape.square(adv));
        let p = tape.exp(logp);
        let plogp = tape.mul(p, logp)?;
        let s = tape.sum(plogp);
        ent.push(tape.neg(s));
    }
    let surr = tape.stack(&surr)?;
    let surr = tape.mean(surr);
    let sq = tape.stack(&sq)?;
    let value = tape.mean(sq);
    let ent = tape.stack(&ent)?;
    let entropy = tape.mean(ent);
    let a = tape.neg(surr);
    let b = tape.scale(value, config.value_coef);
    let c = tape.scale(entropy, -config.entropy_coef);
    let total = tape.add(a, b)?;
    let total = tape.add(total, c)?;
    let report = LossReport {
        policy: tape.value(surr).item(),
        value: tape.value(value).item(),
        entropy: tape.value(entropy).item(),
        total: tape.value(total).item(),
    };
    Ok((total, report))
}

/// `epochs` passes of shuffled minibatches, one optimizer step each. Returns
/// the mean report of the final epoch.
pub fn update_agent(
    agent: &mut Agent,
    opt: &mut Adam,
    entries: &[RolloutEntry],
    frozen: &[Frozen],
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<LossReport> {
    if entries.is_empty() {
        return Err(Error::EmptyRollout);
    }
    let mut order: Vec<usize> = (0..entries.len()).collect();
    let mut last = LossReport::default();
    for _ in 0..config.epochs {
        order.shuffle(rng);
        let mut acc = LossReport::default();
        let mut batches = 0.0;
        for chunk in order.chunks(config.minibatch) {
            let es: Vec<&RolloutEntry> = chunk.iter().map(|&i| &entries[i]).collect();
            let fs: Vec<&Frozen> = chunk.iter().map(|&i| &frozen[i]).collect();
            let mut tape = Tape::new();
            let (loss, report) = combined_loss(&mut tape, agent, &es, &fs, config)?;
            agent.store.zero_grad();
            tape.backward(loss)?.accumulate(&mut agent.store);
            opt.step(&mut agent.store);
            acc.policy += report.policy;
            acc.value += report.value;
            acc.entropy += report.entropy;
            acc.total += report.total;
            batches += 1.0;
        }
        last = LossReport {
            policy: acc.policy / batches,
            value: acc.value / batches,
            entropy: acc.entropy / batches,
            total: acc.total / batches,
        };
    }
    agent.store.zero_grad();
    Ok(last)
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    pub iteration: usize,
    pub best_cost: f64,
    pub mean_return: f64,
    pub losses: LossReport,
    pub buffer_size: usize,
    pub entries: usize,
}

/// Agent, optimizer, buffer and generator bundled for repeated iterations.
pub struct Trainer {
    pub agent: Agent,
    pub config: TrainConfig,
    pub buffer: InitialBuffer,
    pub log: Vec<IterationLog>,
    opt: Adam,
    rules: Arc<RuleSet>,
    rng: ChaCha8Rng,
}

impl Trainer {
    pub fn new(
        agent: Agent,
        rules: Arc<RuleSet>,
        config: TrainConfig,
        metric: CostMetric,
        inputs: &[Circuit],
        seed: u64,
    ) -> Result<Trainer> {
        config.validate()?;
        if agent.num_actions() != rules.len() {
            return Err(Error::Config(format!(
                "agent has {} actions but the rule set has {} entries",
                agent.num_actions(),
                rules.len()
            )));
        }
        let buffer = InitialBuffer::new(metric, inputs, config.buffer_beta, config.buffer_capacity)?;
        let opt = config.optimizer(&agent);
        Ok(Trainer { agent, config, buffer, log: Vec::new(), opt, rules, rng: ChaCha8Rng::seed_from_u64(seed) })
    }

    pub fn rules(&self) -> &RuleSet {
        &self.rules
    }

    /// Collect, freeze advantages, update. Returns the log line.
    pub fn iterate(&mut self) -> Result<IterationLog> {
        let (entries, _) = collect_trajectories(&self.agent, &mut self.buffer, &self.rules, &self.config, &mut self.rng)?;
        let frozen = freeze_advantages(&self.agent, &entries, self.config.gamma)?;
        let losses = update_agent(&mut self.agent, &mut self.opt, &entries, &frozen, &self.config, &mut self.rng)?;
        let trajectories = entries.iter().filter(|e| e.done).count().max(1);
        let line = IterationLog {
            iteration: self.log.len(),
            best_cost: self.best_cost(0),
            mean_return: entries.iter().map(|e| e.reward).sum::<f64>() / trajectories as f64,
            losses,
            buffer_size: self.buffer.len(),
            entries: entries.len(),
        };
        self.log.push(line.clone());
        Ok(line)
    }

    /// Lowest objective value found for a group.
    pub fn best_cost(&self, group: usize) -> f64 {
        let (_, c) = self.buffer.best(group);
        self.buffer.metric.objective(c).expect("buffered circuits were costed on insert")
    }

    pub fn best_circuit(&self, group: usize) -> &Circuit {
        self.buffer.best(group).1
    }

    pub fn insert(&mut self, group: usize, c: Circuit) -> Result<bool> {
        self.buffer.insert(group, c)
    }
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

    fn small_agent(actions: usize) -> Agent {
        let cfg = AgentConfig { layers: 1, dim: 4, critic_hidden: 4, actor_hidden: 4, ..AgentConfig::desk() };
        Agent::new(cfg, &GateSet::nam(), actions, 3).unwrap()
    }

    #[test]
    fn hand_advantage() {
        let a = one_step_advantage(-1.0, 0.95, Some(2.0), 0.5);
        assert_eq!(a, -1.0 + 0.95 * 2.0 - 0.5);
        assert_eq!(one_step_advantage(0.0, 0.95, None, 0.7), -0.7);
    }

    #[test]
    fn forced_cancellation_trajectory() {
        let rules = hh_rules();
        let agent = small_agent(rules.len());
        let c = CircuitBuilder::new(1).h(0).h(0).build().unwrap();
        let mut buffer = InitialBuffer::new(CostMetric::TotalGates, &[c.clone()], 0.75, 4096).unwrap();
        let cfg = TrainConfig::desk_finetune();
        let mut force = |c: &Circuit, e: &Evaluation, _: &mut ChaCha8Rng| {
            let mask = crate::xfer::valid_xfers(c, c.gate(0).id, &rules);
            let x = if mask[1] { 1 } else { 0 };
            Ok((ActionSample { gate: c.gate(0).id, xfer_index: x, gate_prob: 1.0, xfer_prob: 1.0, value: e.values[0] }, mask))
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (entries, found) =
            run_trajectory(&agent, &rules, &cfg, &CostMetric::TotalGates, 0, c, 2.0, &mut force, &mut rng).unwrap();
        assert_eq!(entries.len(), 1);
        assert_eq!(entries[0].reward, 2.0);
        assert!(entries[0].done);
        for f in found {
            buffer.insert(0, f).unwrap();
        }
        assert_eq!(buffer.keys(0), vec![0, 2]);
        assert!(buffer.circuits_at(0, 0)[0].is_empty());
    }

    #[test]
    fn buffer_eviction_keeps_input_and_minimum() {
        let input = CircuitBuilder::new(1).h(0).h(0).x(0).build().unwrap();
        let mut b = InitialBuffer::new(CostMetric::TotalGates, &[input.clone()], 0.75, 2).unwrap();
        b.insert(0, CircuitBuilder::new(1).x(0).build().unwrap()).unwrap();
        b.insert(0, CircuitBuilder::new(1).z(0).h(0).x(0).build().unwrap()).unwrap();
        assert_eq!(b.len(), 2);
        assert!(b.contains(0, &input));
        assert_eq!(b.best(0).0, 1);
        assert!(!b.insert(0, CircuitBuilder::new(1).x(0).build().unwrap()).unwrap());
    }

    #[test]
    fn buffer_sampling_prefers_low_cost() {
        let input = CircuitBuilder::new(1).h(0).h(0).x(0).build().unwrap();
        let mut b = InitialBuffer::new(CostMetric::TotalGates, &[input], 0.75, 100).unwrap();
        b.insert(0, CircuitBuilder::new(1).x(0).build().unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let low = (0..4000).filter(|_| b.sample(&mut rng).1.len() == 1).count() as f64 / 4000.0;
        assert!((low - 1.0 / 1.75).abs() < 0.03, "{low}");
    }

    #[test]
    fn first_epoch_ratios_are_one() {
        let rules = hh_rules();
        let agent = small_agent(rules.len());
        let c = CircuitBuilder::new(2).h(0).h(0).cx(0, 1).h(1).h(1).build().unwrap();
        let mut buffer = InitialBuffer::new(CostMetric::TotalGates, &[c], 0.75, 4096).unwrap();
        let cfg = TrainConfig { trajectories: 4, ..TrainConfig::desk_finetune() };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (entries, _) = collect_trajectories(&agent, &mut buffer, &rules, &cfg, &mut rng).unwrap();
        assert!(!entries.is_empty());
        for r in ratios(&agent, &entries).unwrap() {
            assert!((r - 1.0).abs() < 1e-10);
        }
    }
}
