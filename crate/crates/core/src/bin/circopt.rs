//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 on an operational error, 2 on a usage error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use log::info;

use circopt::agent::Agent;
use circopt::analysis::{
    bench_run, climb_instance, cost_increase_ablation, landscape_study, BenchManifest, Metrics, DEFAULT_NODE_BUDGET,
};
use circopt::circuit::{emit_qasm, parse_qasm, Circuit, CostMetric, ErrorModel, GateSet};
use circopt::config::{Profile, ProfileName, CONFIG_ENV};
use circopt::search::optimize_partitioned;
use circopt::train::Trainer;
use circopt::xfer::{generate_ruleset, load_ruleset, parse_ruleset, save_ruleset, GenConfig, RuleSet};
use circopt::{Error, Result};

#[derive(Parser)]
#[command(name = "circopt", version, about = "Quantum circuit optimization with verified rewrite rules and a learned policy")]
struct Cli {
    /// TOML file overriding profile settings ([agent], [pretrain], [finetune], [search]).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// error, warn, info, debug or trace.
    #[arg(long, global = true, default_value = "warn")]
    log_level: String,
    /// Hyperparameter profile: paper or desk.
    #[arg(long, global = true, default_value = "desk")]
    profile: String,
    /// Threads for trajectory collection.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Enumerate and verify a rule set.
    GenRules(GenRulesArgs),
    /// Re-verify every rule of a rule file.
    VerifyRules { rules: PathBuf },
    /// Optimize one circuit.
    Optimize(OptimizeArgs),
    /// Pre-train the agent on several circuits.
    Pretrain(PretrainArgs),
    /// Rewrite-distance CDF of circuits reachable from an input.
    AnalyzeSpace(AnalyzeArgs),
    /// Compare monotone search with search allowing cost increases.
    AblateCostIncrease(AblateArgs),
    /// Optimize the circuits of a manifest and tabulate metrics.
    Bench(BenchArgs),
    /// Print gate count, CNOT count, depth and optionally fidelity.
    Stats {
        circuit: PathBuf,
        #[arg(long)]
        errors: Option<PathBuf>,
    },
}

#[derive(Args)]
struct GenRulesArgs {
    /// nam or ibm.
    #[arg(long, default_value = "nam")]
    gate_set: String,
    #[arg(long, default_value_t = 3)]
    qubits: usize,
    #[arg(long, default_value_t = 4)]
    gates: usize,
    #[arg(long, default_value_t = 2)]
    symbols: usize,
    /// Enumerate negated and summed rotation angles.
    #[arg(long)]
    param_exprs: bool,
    /// Keep rules that a smaller reduction already covers.
    #[arg(long)]
    no_prune: bool,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct OptimizeArgs {
    input: PathBuf,
    #[arg(long)]
    rules: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    /// total, cnot, depth or fidelity.
    #[arg(long, default_value = "total")]
    metric: String,
    /// Gate error rates for the fidelity metric.
    #[arg(long)]
    errors: Option<PathBuf>,
    /// Wall-clock cap in seconds.
    #[arg(long)]
    budget: Option<f64>,
    /// Environment step budget.
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Maximum gates per partition.
    #[arg(long)]
    partition: Option<usize>,
    /// Pre-trained parameters.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// JSON report path (default: OUTPUT with .json extension).
    #[arg(long)]
    report: Option<PathBuf>,
    /// Fine-tuning log, one JSON object per line.
    #[arg(long)]
    train_log: Option<PathBuf>,
}

#[derive(Args)]
struct PretrainArgs {
    #[arg(long, num_args = 1.., required = true)]
    circuits: Vec<PathBuf>,
    #[arg(long)]
    rules: PathBuf,
    #[arg(long, default_value = "total")]
    metric: String,
    #[arg(long)]
    errors: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    iterations: usize,
    /// Checkpoint path.
    #[arg(short, long)]
    output: PathBuf,
    /// Also write a checkpoint every N iterations (to OUTPUT.N).
    #[arg(long)]
    checkpoint_every: Option<usize>,
    /// Start from these parameters.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Training log, one JSON object per line.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyzeArgs {
    input: PathBuf,
    #[arg(long)]
    rules: PathBuf,
    #[arg(long, default_value = "total")]
    metric: String,
    #[arg(long, default_value_t = 2)]
    reach_depth: usize,
    #[arg(long, default_value_t = 200)]
    samples: usize,
    #[arg(long, default_value_t = 6)]
    max_radius: usize,
    #[arg(long, default_value_t = DEFAULT_NODE_BUDGET)]
    node_budget: usize,
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct AblateArgs {
    /// Input circuit; the built-in climb instance when omitted.
    input: Option<PathBuf>,
    /// Rule file; required with an input circuit.
    #[arg(long)]
    rules: Option<PathBuf>,
    #[arg(long, default_value = "total")]
    metric: String,
    #[arg(long, default_value_t = 1000)]
    steps: usize,
    #[arg(long, default_value_t = 1.2)]
    alpha: f64,
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// TOML manifest.
    manifest: PathBuf,
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    json: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.log_level.parse::<log::LevelFilter>() {
        Ok(l) => l,
        Err(_) => {
            eprintln!("error: invalid log level `{}`", cli.log_level);
            return ExitCode::from(2);
        }
    };
    env_logger::Builder::new().filter_level(level).format_timestamp_millis().init();
    let profile = match load_profile(&cli) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match run(&cli, profile) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn load_profile(cli: &Cli) -> Result<Profile> {
    let mut profile = Profile::named(cli.profile.parse::<ProfileName>()?);
    let path = cli.config.clone().or_else(|| std::env::var_os(CONFIG_ENV).map(PathBuf::from));
    if let Some(p) = path {
        profile = profile.load_overrides(&p)?;
    }
    if cli.workers == 0 {
        return Err(Error::Config("--workers must be at least 1".into()));
    }
    profile.pretrain.workers = cli.workers;
    profile.finetune.workers = cli.workers;
    Ok(profile)
}

fn read_circuit(path: &Path) -> Result<Circuit> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_qasm(&text)
}

fn metric_from(name: &str, errors: Option<&Path>) -> Result<CostMetric> {
    match (name, errors) {
        ("fidelity", Some(p)) => Ok(CostMetric::Fidelity(ErrorModel::load(p)?)),
        (n, _) => n.parse(),
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text)?;
    Ok(())
}

fn agent_for(profile: &Profile, rules: &RuleSet, seed: u64, checkpoint: Option<&Path>) -> Result<Agent> {
    let mut agent = Agent::new(profile.agent.clone(), &rules.gate_set, rules.len(), seed)?;
    if let Some(ck) = checkpoint {
        agent.store.load(ck)?;
    }
    Ok(agent)
}

fn run(cli: &Cli, profile: Profile) -> Result<()> {
    match &cli.command {
        Command::GenRules(a) => {
            let gate_set = GateSet::by_name(&a.gate_set)
                .ok_or_else(|| Error::Config(format!("unknown gate set `{}`", a.gate_set)))?;
            let mut cfg = GenConfig::new(gate_set, a.qubits, a.gates);
            cfg.num_symbols = a.symbols;
            cfg.param_exprs = a.param_exprs;
            cfg.prune_reducible = !a.no_prune;
            let (set, report) = generate_ruleset(&cfg)?;
            save_ruleset(&set, &a.output)?;
            println!("{}", serde_json::to_string(&report)?);
            if !report.failures.is_empty() {
                return Err(Error::Config(format!("{} generated rules failed verification", report.failures.len())));
            }
        }
        Command::VerifyRules { rules } => {
            let set = parse_ruleset(&std::fs::read_to_string(rules)?, true)?;
            let failed = set.verify_all()?;
            let n = set.len() - 1;
            let report = serde_json::json!({
                "rules": n,
                "verified": n - failed.len(),
                "failures": failed.iter().map(|&(i, r)| serde_json::json!({"rule": i, "residual": r})).collect::<Vec<_>>(),
            });
            println!("{report}");
            if !failed.is_empty() {
                return Err(Error::Config(format!("{} rules failed verification", failed.len())));
            }
        }
        Command::Optimize(a) => {
            let input = read_circuit(&a.input)?;
            let rules = load_ruleset(&a.rules, false)?;
            let metric = metric_from(&a.metric, a.errors.as_deref())?;
            let mut search = profile.search.clone();
            if let Some(b) = a.budget {
                search.wall_budget = b;
            }
            if let Some(s) = a.steps {
                search.step_budget = s;
            }
            if let Some(al) = a.alpha {
                search.alpha = al;
            }
            if let Some(p) = a.partition {
                search.partition_max_gates = p;
            }
            let agent = agent_for(&profile, &rules, cli.seed, a.checkpoint.as_deref())?;
            let out = optimize_partitioned(&input, &agent, &rules, &metric, &profile.finetune, &search, cli.seed)?;
            info!("{} -> {} in {} steps", out.report.input_cost, out.report.output_cost, out.report.steps);
            write(&a.output, &emit_qasm(&out.circuit))?;
            let report = a.report.clone().unwrap_or_else(|| a.output.with_extension("json"));
            write(&report, &serde_json::to_string_pretty(&out.report)?)?;
            if let Some(p) = &a.train_log {
                write(p, &lines(&out.train_log))?;
            }
            println!("{}", serde_json::to_string(&out.report)?);
        }
        Command::Pretrain(a) => {
            let rules = Arc::new(load_ruleset(&a.rules, false)?);
            let metric = metric_from(&a.metric, a.errors.as_deref())?;
            let inputs = a.circuits.iter().map(|p| read_circuit(p)).collect::<Result<Vec<_>>>()?;
            let agent = agent_for(&profile, &rules, cli.seed, a.resume.as_deref())?;
            let mut trainer = Trainer::new(agent, rules, profile.pretrain.clone(), metric, &inputs, cli.seed)?;
            let mut log = Vec::new();
            for i in 0..a.iterations {
                let line = trainer.iterate()?;
                info!("iteration {i}: best {} buffer {}", line.best_cost, line.buffer_size);
                log.push(serde_json::to_string(&line)?);
                if let Some(n) = a.checkpoint_every {
                    if n > 0 && (i + 1) % n == 0 {
                        let mut p = a.output.clone().into_os_string();
                        p.push(format!(".{}", i + 1));
                        trainer.agent.store.save(Path::new(&p))?;
                    }
                }
            }
            trainer.agent.store.save(&a.output)?;
            if let Some(p) = &a.log {
                write(p, &lines(&log))?;
            }
            for g in 0..trainer.buffer.num_groups() {
                println!("group {g}: {} -> {}", trainer.buffer.input_cost(g), trainer.best_cost(g));
            }
        }
        Command::AnalyzeSpace(a) => {
            let input = read_circuit(&a.input)?;
            let rules = load_ruleset(&a.rules, false)?;
            let metric = metric_from(&a.metric, None)?;
            let r = landscape_study(
                &input,
                &rules,
                &metric,
                a.reach_depth,
                a.samples,
                a.max_radius,
                a.node_budget,
                cli.seed,
            )?;
            emit(&r.to_csv(), &serde_json::to_string_pretty(&r)?, a.csv.as_deref(), a.json.as_deref())?;
        }
        Command::AblateCostIncrease(a) => {
            let (input, rules) = match (&a.input, &a.rules) {
                (None, _) => climb_instance()?,
                (Some(p), Some(r)) => (read_circuit(p)?, load_ruleset(r, false)?),
                (Some(_), None) => return Err(Error::Config("--rules is required with an input circuit".into())),
            };
            let metric = metric_from(&a.metric, None)?;
            let r = cost_increase_ablation(&input, &rules, &metric, a.steps, a.alpha, cli.seed)?;
            emit(&r.to_csv(), &serde_json::to_string_pretty(&r)?, a.csv.as_deref(), a.json.as_deref())?;
            eprintln!("monotone {} bounded {}", r.monotone.final_cost(), r.bounded.final_cost());
        }
        Command::Bench(a) => {
            let m = BenchManifest::load(&a.manifest)?;
            let r = bench_run(&m, &profile.agent, &profile.finetune, &profile.search)?;
            emit(&r.to_csv(), &serde_json::to_string_pretty(&r)?, a.csv.as_deref(), a.json.as_deref())?;
        }
        Command::Stats { circuit, errors } => {
            let c = read_circuit(circuit)?;
            let model = errors.as_deref().map(ErrorModel::load).transpose()?;
            let m = Metrics::of(&c, model.as_ref())?;
            println!("qubits {}", c.num_qubits());
            println!("total {}", m.total);
            println!("cnot {}", m.cnot);
            println!("depth {}", m.depth);
            if let Some(f) = m.fidelity {
                println!("fidelity {f}");
            }
        }
    }
    Ok(())
}

fn lines(items: &[String]) -> String {
    let mut s = items.join("\n");
    s.push('\n');
    s
}

/// Write CSV and JSON where requested; CSV goes to stdout otherwise.
fn emit(csv: &str, json: &str, csv_path: Option<&Path>, json_path: Option<&Path>) -> Result<()> {
    match csv_path {
        Some(p) => write(p, csv)?,
        None => print!("{csv}"),
    }
    if let Some(p) = json_path {
        write(p, json)?;
    }
    Ok(())
}
