//! The two-level policy: a gate value predictor whose values drive a
//! temperature softmax over gates, and a transformation selector that puts a
//! masked softmax over the rule set (NOP at index 0).

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::circuit::{Circuit, GateId, GateSet};
use crate::error::{Error, Result};
use crate::gnn::Gnn;
use crate::nn::{init_rng, ParamId, ParamStore, Tape, Tensor, Var};
use crate::xfer::{valid_xfers, RuleSet};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub layers: usize,
    pub dim: usize,
    pub critic_hidden: usize,
    pub actor_hidden: usize,
    /// Probability the gate policy puts on a lone high-value gate.
    pub lambda: f64,
    /// Bias on the value predictor's output layer.
    pub critic_bias: bool,
}

impl AgentConfig {
    pub fn paper() -> AgentConfig {
        AgentConfig { layers: 6, dim: 128, critic_hidden: 128, actor_hidden: 256, lambda: 0.9, critic_bias: true }
    }

    pub fn desk() -> AgentConfig {
        AgentConfig { layers: 3, dim: 64, critic_hidden: 64, actor_hidden: 64, lambda: 0.9, critic_bias: true }
    }
}

/// Two dense layers with a ReLU in between.
#[derive(Clone, Debug)]
struct Mlp {
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: Option<ParamId>,
}

impl Mlp {
    fn new(store: &mut ParamStore, name: &str, dims: [usize; 3], bias: bool, rng: &mut ChaCha8Rng) -> Mlp {
        let [i, h, o] = dims;
        Mlp {
            w1: store.add_uniform(&format!("{name}.w1"), &[i, h], i, rng),
            b1: store.add_uniform(&format!("{name}.b1"), &[h], i, rng),
            w2: store.add_uniform(&format!("{name}.w2"), &[h, o], h, rng),
            b2: bias.then(|| store.add_uniform(&format!("{name}.b2"), &[o], h, rng)),
        }
    }

    fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let (w1, b1, w2) = (tape.param(store, self.w1), tape.param(store, self.b1), tape.param(store, self.w2));
        let h = tape.matmul(x, w1)?;
        let h = tape.add(h, b1)?;
        let h = tape.relu(h);
        let y = tape.matmul(h, w2)?;
        match self.b2 {
            Some(b) => {
                let b2 = tape.param(store, b);
                tape.add(y, b2)
            }
            None => Ok(y),
        }
    }
}

/// One sampled action with the probabilities that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct ActionSample {
    pub gate: GateId,
    pub xfer_index: usize,
    pub gate_prob: f64,
    pub xfer_prob: f64,
    /// Value predicted for the chosen gate.
    pub value: f64,
}

/// Embeddings and gate values of a circuit, in stored gate order.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub embeddings: Tensor,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct Agent {
    pub config: AgentConfig,
    pub store: ParamStore,
    pub gnn: Gnn,
    critic: Mlp,
    actor: Mlp,
    num_actions: usize,
}

/// Softmax temperature making a single value-1 gate among value-0 gates
/// receive probability `lambda`. When `lambda` equals the uniform share
/// `1/|C|` the answer is an infinite temperature; below that, or for fewer
/// than two gates, `1.0` is returned.
pub fn temperature(num_gates: usize, lambda: f64) -> f64 {
    if num_gates < 2 || !(lambda > 0.0 && lambda < 1.0) {
        return 1.0;
    }
    let arg = lambda * (num_gates as f64 - 1.0) / (1.0 - lambda);
    if arg == 1.0 {
        f64::INFINITY
    } else if arg < 1.0 {
        1.0
    } else {
        1.0 / arg.ln()
    }
}

/// `exp(v/t) / Σ exp(v'/t)`, computed with the maximum subtracted.
pub fn gate_policy(values: &[f64], t: f64) -> Vec<f64> {
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = values.iter().map(|v| ((v - m) / t).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

/// Masked softmax of `logits`; masked entries get probability exactly 0.
pub fn xfer_policy(logits: &[f64], mask: &[bool]) -> Result<Vec<f64>> {
    if logits.len() != mask.len() {
        return Err(Error::Shape(format!("{} logits for a mask of {}", logits.len(), mask.len())));
    }
    if !mask.iter().any(|&m| m) {
        return Err(Error::EmptyMask);
    }
    let m = logits.iter().zip(mask).filter(|(_, &k)| k).map(|(&x, _)| x).fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().zip(mask).map(|(&x, &k)| if k { (x - m).exp() } else { 0.0 }).collect();
    let s: f64 = e.iter().sum();
    Ok(e.into_iter().map(|x| x / s).collect())
}

/// Draw an index from a probability vector; zero-probability entries are never chosen.
pub fn sample_index(probs: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let r: f64 = rng.gen::<f64>() * probs.iter().sum::<f64>();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = i;
        if r < acc {
            return i;
        }
    }
    last
}

/// Highest-probability entry, lowest index on ties.
pub fn argmax_xfer(probs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = i;
        }
    }
    best
}

impl Agent {
    /// Fresh parameters for a rule set of `num_actions` entries (NOP included).
    pub fn new(config: AgentConfig, gate_set: &GateSet, num_actions: usize, seed: u64) -> Result<Agent> {
        if !(config.lambda > 0.0 && config.lambda < 1.0) {
            return Err(Error::Config(format!("lambda must be in (0,1), got {}", config.lambda)));
        }
        let mut rng = init_rng(seed);
        let mut store = ParamStore::new();
        let gnn = Gnn::new(&mut store, gate_set, config.layers, config.dim, &mut rng);
        let critic = Mlp::new(&mut store, "critic", [config.dim, config.critic_hidden, 1], config.critic_bias, &mut rng);
        let actor = Mlp::new(&mut store, "actor", [config.dim, config.actor_hidden, num_actions], true, &mut rng);
        Ok(Agent { config, store, gnn, critic, actor, num_actions })
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    /// Critic values on a `[rows, dim]` embedding block.
    pub fn values_on(&self, tape: &mut Tape, h: Var) -> Result<Var> {
        self.critic.forward(tape, &self.store, h)
    }

    /// Actor logits on a `[rows, dim]` embedding block.
    pub fn logits_on(&self, tape: &mut Tape, h: Var) -> Result<Var> {
        self.actor.forward(tape, &self.store, h)
    }

    /// Value predictions for each row of an embedding matrix.
    pub fn gate_values(&self, embeddings: &Tensor) -> Result<Vec<f64>> {
        if embeddings.is_empty() {
            return Ok(Vec::new());
        }
        let mut tape = Tape::new();
        let h = tape.constant(embeddings.clone());
        let v = self.values_on(&mut tape, h)?;
        Ok(tape.value(v).data.clone())
    }

    /// Actor logits for one gate embedding.
    pub fn xfer_logits(&self, h: &[f64]) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::matrix(1, h.len(), h.to_vec())?);
        let l = self.logits_on(&mut tape, x)?;
        Ok(tape.value(l).data.clone())
    }

    pub fn evaluate(&self, c: &Circuit) -> Result<Evaluation> {
        let embeddings = self.gnn.embed_positions(&self.store, c)?;
        let values = self.gate_values(&embeddings)?;
        Ok(Evaluation { embeddings, values })
    }

    /// Value of one gate computed on its neighbourhood only.
    pub fn fragment_value(&self, c: &Circuit, gate: GateId) -> Result<f64> {
        let mut tape = Tape::new();
        let h = self.gnn.embed_fragment_on(&mut tape, &self.store, c, gate)?;
        let v = self.values_on(&mut tape, h)?;
        Ok(tape.value(v).item())
    }

    /// Sample a gate over `allowed` positions (all when `None`), then a
    /// transformation: sampled, or the most probable one when `greedy`.
    pub fn act(
        &self,
        c: &Circuit,
        eval: &Evaluation,
        rules: &RuleSet,
        allowed: Option<&[usize]>,
        greedy: bool,
        rng: &mut ChaCha8Rng,
    ) -> Result<(ActionSample, Vec<bool>)> {
        if c.is_empty() {
            return Err(Error::InvalidCircuit("no gates to act on".into()));
        }
        let all: Vec<usize>;
        let positions = match allowed {
            Some(p) if !p.is_empty() => p,
            Some(_) => return Err(Error::EmptyMask),
            None => {
                all = (0..c.len()).collect();
                &all
            }
        };
        let vals: Vec<f64> = positions.iter().map(|&p| eval.values[p]).collect();
        let probs = gate_policy(&vals, temperature(positions.len(), self.config.lambda));
        let k = sample_index(&probs, rng);
        let pos = positions[k];
        let gate = c.gate(pos).id;
        let mask = valid_xfers(c, gate, rules);
        let logits = self.xfer_logits(eval.embeddings.row(pos))?;
        let xp = xfer_policy(&logits, &mask)?;
        let x = if greedy { argmax_xfer(&xp) } else { sample_index(&xp, rng) };
        let sample = ActionSample { gate, xfer_index: x, gate_prob: probs[k], xfer_prob: xp[x], value: eval.values[pos] };
        Ok((sample, mask))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::CircuitBuilder;

    #[test]
    fn temperature_hand_value_and_calibration() {
        assert!((temperature(100, 0.9) - 1.0 / 891f64.ln()).abs() < 1e-15);
        assert!((temperature(100, 0.9) - 0.14723).abs() < 1e-5);
        for n in [2usize, 10, 100, 1000] {
            for lambda in [0.5, 0.9, 0.99] {
                let mut v = vec![0.0; n];
                v[0] = 1.0;
                let p = gate_policy(&v, temperature(n, lambda));
                assert!((p[0] - lambda).abs() < 1e-9, "n={n} lambda={lambda}");
            }
        }
        assert!(temperature(100, 0.99) < temperature(100, 0.9));
        assert_eq!(temperature(1, 0.9), 1.0);
        assert_eq!(temperature(2, 0.5), f64::INFINITY);
        assert_eq!(temperature(4, 0.1), 1.0);
    }

    #[test]
    fn gate_policy_shapes() {
        let p = gate_policy(&[0.3; 4], 0.2);
        assert!(p.iter().all(|x| (x - 0.25).abs() < 1e-15));
        let p = gate_policy(&[1.0, 0.0, 0.5], 1e-3);
        assert!(p[0] > 1.0 - 1e-12);
        let a = gate_policy(&[0.1, 0.7, -0.3], 0.4);
        let b = gate_policy(&[5.1, 5.7, 4.7], 0.4);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn masked_policy() {
        let p = xfer_policy(&[3.0, 1.0, 2.0], &[true, false, false]).unwrap();
        assert_eq!(p, vec![1.0, 0.0, 0.0]);
        let p = xfer_policy(&[0.0; 5], &[true, true, false, true, false]).unwrap();
        assert_eq!(p[2], 0.0);
        assert!((p[0] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(argmax_xfer(&p), 0);
        assert!(xfer_policy(&[0.0; 2], &[false, false]).is_err());
    }

    #[test]
    fn sampling_never_picks_masked_entries() {
        let mut rng = init_rng(9);
        for _ in 0..1000 {
            let i = sample_index(&[0.0, 0.3, 0.0, 0.7, 0.0], &mut rng);
            assert!(i == 1 || i == 3);
        }
    }

    #[test]
    fn zero_critic_weights_give_bias() {
        let mut agent = Agent::new(AgentConfig { dim: 8, critic_hidden: 4, actor_hidden: 4, ..AgentConfig::desk() }, &GateSet::nam(), 3, 1).unwrap();
        let bias = agent.store.value(agent.critic.b2.unwrap()).item();
        let w2 = agent.critic.w2;
        agent.store.value_mut(w2).data.iter_mut().for_each(|x| *x = 0.0);
        let c = CircuitBuilder::new(2).h(0).cx(0, 1).x(1).build().unwrap();
        let e = agent.evaluate(&c).unwrap();
        assert_eq!(e.values.len(), 3);
        assert!(e.values.iter().all(|&v| v == bias));
    }

    #[test]
    fn fragment_value_matches_full() {
        let agent = Agent::new(AgentConfig { dim: 8, critic_hidden: 4, actor_hidden: 4, ..AgentConfig::desk() }, &GateSet::nam(), 3, 2).unwrap();
        let c = CircuitBuilder::new(3).h(0).cx(0, 1).rz(2, 0.1).cx(2, 1).x(0).cx(0, 2).build().unwrap();
        let e = agent.evaluate(&c).unwrap();
        for p in 0..c.len() {
            assert!((agent.fragment_value(&c, c.gate(p).id).unwrap() - e.values[p]).abs() < 1e-12);
        }
    }
}
