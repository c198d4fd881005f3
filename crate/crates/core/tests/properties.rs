//! Property tests for invariants that span modules.

mod common;

use std::sync::{Arc, OnceLock};

use circopt::agent::{gate_policy, temperature, Agent, AgentConfig, Evaluation};
use circopt::analysis::{landscape_study, DEFAULT_NODE_BUDGET};
use circopt::circuit::{emit_qasm, parse_qasm, Circuit, CostMetric, GateSet};
use circopt::nn::Tape;
use circopt::search::{partition, stitch, MaskState, Pgs};
use circopt::train::{combined_loss, run_trajectory, Frozen, InitialBuffer, RolloutEntry, TrainConfig};
use circopt::xfer::{apply, match_at_pos, valid_xfers, RuleSet};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;

fn rules() -> &'static RuleSet {
    static RULES: OnceLock<RuleSet> = OnceLock::new();
    RULES.get_or_init(small_rules)
}

fn agent(seed: u64) -> Agent {
    let cfg = AgentConfig { layers: 2, dim: 8, critic_hidden: 8, actor_hidden: 8, lambda: 0.9, critic_bias: true };
    Agent::new(cfg, &GateSet::nam(), rules().len(), seed).unwrap()
}

fn circuit(seed: u64, qubits: usize, gates: usize) -> Circuit {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_circuit(&mut rng, qubits..=qubits, gates..=gates, &nam_kinds(), &quarter_turns())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn rewards_telescope(seed in 0u64..10_000, qubits in 1usize..4, gates in 1usize..14) {
        let c = circuit(seed, qubits, gates);
        let a = agent(seed);
        let cfg = TrainConfig { horizon: 40, alpha: 3.0, ..TrainConfig::desk_finetune() };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut act = |c: &Circuit, e: &Evaluation, r: &mut ChaCha8Rng| a.act(c, e, rules(), None, false, r);
        let start = c.len() as f64;
        let (entries, _) =
            run_trajectory(&a, rules(), &cfg, &CostMetric::TotalGates, 0, c, start, &mut act, &mut rng).unwrap();
        let total: f64 = entries.iter().map(|e| e.reward).sum();
        let last = entries.last().unwrap().after.len() as f64;
        prop_assert_eq!(total, start - last);
        prop_assert!(entries.last().unwrap().done);
        prop_assert!(entries.iter().rev().skip(1).all(|e| !e.done));
    }

    #[test]
    fn buffer_minimum_never_increases(seed in 0u64..10_000, capacity in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let input = circuit(seed, 2, 8);
        let mut buf = InitialBuffer::new(CostMetric::TotalGates, std::slice::from_ref(&input), 0.75, capacity).unwrap();
        let mut min = buf.best(0).0;
        for i in 0..30 {
            let c = circuit(seed * 31 + i, 2, rng.gen_range(2..12));
            buf.insert(0, c).unwrap();
            let now = buf.best(0).0;
            prop_assert!(now <= min);
            prop_assert!(buf.len() <= capacity.max(1) + 1);
            prop_assert!(buf.contains(0, &input));
            min = now;
        }
    }

    #[test]
    fn surrogate_is_clip_bounded(seed in 0u64..10_000, ratio in 0.05f64..4.0, adv in -5.0f64..5.0, clip in 0.05f64..0.5) {
        let a = agent(seed);
        let c = circuit(seed, 2, 6);
        let matches = all_matches(&c, rules());
        prop_assume!(!matches.is_empty());
        let (pos, i) = matches[0];
        let gate = c.gate(pos).id;
        let m = match_at_pos(&c, pos, rules().get(i)).unwrap();
        let (after, _) = apply(&c, rules().get(i), &m).unwrap();
        let eval = a.evaluate(&c).unwrap();
        let mask = valid_xfers(&c, gate, rules());
        let p = circopt::agent::xfer_policy(&a.xfer_logits(eval.embeddings.row(pos)).unwrap(), &mask).unwrap()[i];
        let e = RolloutEntry {
            group: 0,
            before: Arc::new(c),
            after: Arc::new(after),
            gate,
            xfer_index: i,
            mask,
            reward: 0.0,
            value_pred: 0.0,
            behavior_prob: p / ratio,
            influenced: Vec::new(),
            done: true,
            terminal: true,
        };
        let f = Frozen { advantage: adv, target: 0.0 };
        let cfg = TrainConfig { clip, entropy_coef: 0.0, value_coef: 0.0, ..TrainConfig::desk_finetune() };
        let mut tape = Tape::new();
        let (_, report) = combined_loss(&mut tape, &a, &[&e], &[&f], &cfg).unwrap();
        // The min-clip rule leaves rho*A unclipped for A < 0 and rho > 1 + clip,
        // so the magnitude bound only holds outside that region.
        if adv >= 0.0 || ratio <= 1.0 + clip {
            let bound = (adv.abs() * (1.0 + clip)).max(adv.abs());
            prop_assert!(report.policy.abs() <= bound * (1.0 + 1e-9) + 1e-12);
        }
        let expected = (ratio * adv).min(ratio.clamp(1.0 - clip, 1.0 + clip) * adv);
        prop_assert!((report.policy - expected).abs() < 1e-9 * (1.0 + expected.abs()));
    }

    #[test]
    fn masks_clear_soft_once(seed in 0u64..10_000, ops in proptest::collection::vec((0usize..12, any::<bool>()), 0..40)) {
        let c = circuit(seed, 3, 12);
        let mut m = MaskState::default();
        let mut ever_soft_cleared = false;
        for (pos, hard) in ops {
            let id = c.gate(pos).id;
            if hard { m.mask_hard(id) } else { m.mask_soft(id) }
            let before_cleared = m.soft_cleared;
            let avail = m.available(&c);
            if ever_soft_cleared {
                prop_assert!(m.soft.is_empty());
            }
            if m.soft_cleared && !before_cleared {
                ever_soft_cleared = true;
            }
            // A hard-masked gate is never offered.
            prop_assert!(avail.iter().all(|&p| !m.hard.contains(&c.gate(p).id)));
            // Empty only when every gate is hard-masked or soft masks were already spent.
            if avail.is_empty() {
                prop_assert!(m.soft_cleared);
                prop_assert!((0..c.len()).all(|p| m.hard.contains(&c.gate(p).id) || m.soft.contains(&c.gate(p).id)));
            }
        }
    }

    #[test]
    fn partition_round_trips(seed in 0u64..10_000, qubits in 1usize..6, gates in 0usize..60, size in 1usize..20) {
        let c = circuit(seed, qubits, gates);
        let parts = partition(&c, size).unwrap();
        prop_assert_eq!(parts.len(), gates.div_ceil(size));
        prop_assert!(parts.iter().all(|p| p.circuit.len() <= size));
        let back = stitch(&parts, c.num_qubits()).unwrap();
        prop_assert_eq!(back.canonical_hash(), c.canonical_hash());
    }

    #[test]
    fn qasm_round_trip_keeps_structure(seed in 0u64..10_000, qubits in 1usize..6, gates in 0usize..40) {
        let c = circuit(seed, qubits, gates);
        let back = parse_qasm(&emit_qasm(&c)).unwrap();
        prop_assert_eq!(back.canonical_hash(), c.canonical_hash());
    }

    #[test]
    fn gate_policy_is_shift_invariant(values in proptest::collection::vec(-3.0f64..3.0, 1..30), shift in -10.0f64..10.0, lambda in 0.05f64..0.99) {
        let t = temperature(values.len(), lambda);
        let p = gate_policy(&values, t);
        let shifted: Vec<f64> = values.iter().map(|v| v + shift).collect();
        let q = gate_policy(&shifted, t);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for (a, b) in p.iter().zip(&q) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn landscape_cdf_is_monotone(seed in 0u64..10_000) {
        let c = circuit(seed, 2, 5);
        let r = landscape_study(&c, rules(), &CostMetric::TotalGates, 1, 5, 3, DEFAULT_NODE_BUDGET, seed).unwrap();
        prop_assert!(r.cdf.windows(2).all(|w| w[0].1 <= w[1].1));
        prop_assert!(r.cdf.iter().all(|x| (0.0..=1.0).contains(&x.1)));
        prop_assert_eq!(r.radii.len(), r.reachable.min(5));
    }

    #[test]
    fn search_frontier_only_descends(seed in 0u64..10_000) {
        let c = circuit(seed, 2, 10);
        let a = agent(seed);
        let mut pgs = Pgs::new(c.clone(), CostMetric::TotalGates, 1.2, 50).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        pgs.run(&a, rules(), 300, None, &mut rng).unwrap();
        let mut last = c.len() as f64;
        for &(_, cost) in &pgs.trace {
            prop_assert!(cost < last);
            last = cost;
        }
        prop_assert_eq!(pgs.best_cost(), last);
        prop_assert!(equivalent(&c, pgs.best(), &mut rng));
    }
}
