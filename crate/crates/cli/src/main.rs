use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use rmmdp::explore::{explore_with, ExplorationRun, ExploreOptions, ParamSpec, TerminationReason, DEFAULT_C_CONF};
use rmmdp::harness::{lower_bound_instance, schedule};
use rmmdp::planner::{belief_policy_value, plan_discretized, plan_exact_small, policy_value_mc, BeliefPolicy};
use rmmdp::recovery::recover_model;
use rmmdp::{
    optimal_value_exact, random_instance, run_algorithm1, sweep, value_of_policy_exact, EnvInstance, Error,
    ExperimentConfig, InstanceSpec, RmMdpModel, RunStatus, SweepSpec, TrajectoryLog,
};

const EXIT_DEGRADED: u8 = 2;
const EXIT_RECOVERY_FAILED: u8 = 3;

#[derive(Parser)]
#[command(name = "rmmdp", version, about = "Learn and plan in two-reward-mixing MDPs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a model file.
    Generate(GenerateArgs),
    /// Run pure exploration and dump the statistics.
    Explore(ExploreArgs),
    /// Recover a model from a statistics dump.
    Recover(RecoverArgs),
    /// Plan a belief policy for a model.
    Plan(PlanArgs),
    /// Score a policy on a model.
    Evaluate(EvaluateArgs),
    /// Explore, recover and plan end to end.
    Run(RunArgs),
    /// Run a grid of end-to-end experiments into a CSV file.
    Sweep(SweepArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Random,
    LowerBound,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, value_enum, default_value = "random")]
    kind: Kind,
    #[arg(long, default_value_t = 2)]
    states: usize,
    #[arg(long, default_value_t = 2)]
    actions: usize,
    #[arg(long, default_value_t = 3)]
    horizon: usize,
    #[arg(long, default_value_t = 0.2)]
    delta_min: f64,
    /// Gap parameter of the lower-bound family.
    #[arg(long, default_value_t = 0.04)]
    eps: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExploreArgs {
    #[arg(long)]
    model: PathBuf,
    /// Stopping threshold; derived from --eps when omitted.
    #[arg(long)]
    eps_pe: Option<f64>,
    #[arg(long, default_value_t = 0.15)]
    eps: f64,
    #[arg(long)]
    eps0: Option<f64>,
    #[arg(long, default_value_t = 0.1)]
    eta: f64,
    #[arg(long)]
    delta_hint: Option<f64>,
    #[arg(long)]
    kmax: Option<u64>,
    #[arg(long, default_value_t = DEFAULT_C_CONF)]
    c_conf: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Per-step trajectory CSV.
    #[arg(long)]
    log: Option<PathBuf>,
    /// Adds the latent context column to the trajectory log.
    #[arg(long)]
    reveal_context: bool,
}

#[derive(Args)]
struct RecoverArgs {
    #[arg(long)]
    stats: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PlanArgs {
    #[arg(long)]
    model: PathBuf,
    /// Belief buckets; the exact tree planner is used when omitted.
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    policy: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = 0.15)]
    eps: f64,
    #[arg(long, default_value_t = 0.1)]
    eta: f64,
    #[arg(long)]
    delta_hint: Option<f64>,
    #[arg(long)]
    kmax: Option<u64>,
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long, default_value_t = 10_000)]
    trials: u64,
    #[arg(long, default_value_t = DEFAULT_C_CONF)]
    c_conf: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Run report (JSON).
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    policy_out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load_model(path: &Path) -> anyhow::Result<RmMdpModel> {
    RmMdpModel::load(path).with_context(|| format!("loading model {}", path.display()))
}

fn generate(args: GenerateArgs) -> anyhow::Result<u8> {
    let model = match args.kind {
        Kind::Random => random_instance(
            InstanceSpec { states: args.states, actions: args.actions, horizon: args.horizon, delta_min: args.delta_min },
            args.seed,
        )?,
        Kind::LowerBound => lower_bound_instance(args.actions, args.eps, args.seed)?.model,
    };
    model.save(&args.out)?;
    Ok(0)
}

fn explore_cmd(args: ExploreArgs) -> anyhow::Result<u8> {
    let model = load_model(&args.model)?;
    let sched = schedule(args.eps, model.horizon, args.delta_hint);
    let spec = ParamSpec {
        eps_pe: args.eps_pe.unwrap_or(sched.eps_pe),
        eps0: args.eps0.unwrap_or(sched.eps0),
        eta: args.eta,
        c_conf: args.c_conf,
        k_max: args.kmax,
    };
    let params = spec.resolve(model.states, model.actions, model.horizon)?;
    let mut env = EnvInstance::new(model, args.seed);
    let mut log = match &args.log {
        Some(path) => Some(TrajectoryLog::new(BufWriter::new(File::create(path)?), args.reveal_context)?),
        None => None,
    };
    let mut log_error = None;
    let run = explore_with(&mut env, &params, ExploreOptions::default(), |rec| {
        if let Some(log) = log.as_mut() {
            if let Err(e) = log.record(rec.episode, &rec.trajectory) {
                log_error.get_or_insert(e);
            }
        }
    })?;
    if let Some(e) = log_error {
        return Err(e.into());
    }
    if let Some(log) = log {
        log.finish()?;
    }
    run.save(&args.out)?;
    eprintln!("episodes {} ({}), V~0 = {:.6}", run.stats.k, run.termination.as_str(), run.vtilde0);
    Ok(match run.termination {
        TerminationReason::Converged => 0,
        TerminationReason::KMaxReached => EXIT_DEGRADED,
    })
}

fn recover_cmd(args: RecoverArgs) -> anyhow::Result<u8> {
    let run = ExplorationRun::load(&args.stats).with_context(|| format!("loading {}", args.stats.display()))?;
    match recover_model(&run.stats, &run.params) {
        Ok(recovered) => {
            recovered.save(&args.out)?;
            Ok(0)
        }
        Err(e @ (Error::Infeasible { .. } | Error::Unsatisfiable { .. })) => {
            eprintln!("recovery failed: {e}");
            Ok(EXIT_RECOVERY_FAILED)
        }
        Err(e) => Err(e.into()),
    }
}

fn plan_cmd(args: PlanArgs) -> anyhow::Result<u8> {
    let model = load_model(&args.model)?;
    let (policy, value) = match args.grid {
        Some(g) => {
            let plan = plan_discretized(&model, g)?;
            (plan.policy, plan.value)
        }
        None => plan_exact_small(&model)?,
    };
    policy.save(&args.out)?;
    println!("{}", json!({ "mode": policy.mode(), "value": value }));
    Ok(0)
}

fn evaluate_cmd(args: EvaluateArgs) -> anyhow::Result<u8> {
    let model = load_model(&args.model)?;
    let policy = BeliefPolicy::load(&args.policy).with_context(|| format!("loading {}", args.policy.display()))?;
    policy.check_compatible(&model)?;
    let (mean, se) = policy_value_mc(&model, &policy, args.trials, args.seed)?;
    let exact = match (&policy, value_of_policy_exact(&model, &policy)) {
        (_, Ok(v)) => Some(v),
        (BeliefPolicy::Discretized { .. }, Err(_)) => Some(belief_policy_value(&model, &policy)?),
        (_, Err(_)) => None,
    };
    let optimal = optimal_value_exact(&model).ok().map(|(v, _)| v);
    let report = json!({
        "mc_mean": mean,
        "mc_ci": 1.96 * se,
        "trials": args.trials,
        "exact_value": exact,
        "optimal_value": optimal,
        "gap": optimal.zip(exact).map(|(o, e)| o - e),
    });
    match &args.out {
        Some(path) => write_json(path, &report)?,
        None => println!("{}", serde_json::to_string_pretty(&report)?),
    }
    Ok(0)
}

fn run_cmd(args: RunArgs) -> anyhow::Result<u8> {
    let model = load_model(&args.model)?;
    let config = ExperimentConfig {
        eps: args.eps,
        eta: args.eta,
        delta_hint: args.delta_hint,
        seed: args.seed,
        k_max: args.kmax,
        grid: args.grid,
        trials: args.trials,
        c_conf: args.c_conf,
        eps_pe: None,
    };
    let outcome = run_algorithm1(&model, &config)?;
    write_json(&args.out, &outcome.report)?;
    if let (Some(path), Some(policy)) = (&args.policy_out, &outcome.policy) {
        policy.save(path)?;
    }
    let r = &outcome.report;
    eprintln!(
        "status {:?}, K = {}, gap = {}",
        r.status,
        r.episodes,
        r.gap.map_or("n/a".to_string(), |g| format!("{g:.6}"))
    );
    Ok(match r.status {
        RunStatus::Ok => 0,
        RunStatus::Degraded => EXIT_DEGRADED,
        RunStatus::Failed => EXIT_RECOVERY_FAILED,
    })
}

fn sweep_cmd(args: SweepArgs) -> anyhow::Result<u8> {
    let text = std::fs::read_to_string(&args.config).with_context(|| format!("reading {}", args.config.display()))?;
    let spec: SweepSpec = serde_json::from_str(&text).context("parsing sweep config")?;
    if spec.is_empty() {
        bail!("sweep grid is empty");
    }
    let rows = sweep(&spec, args.seed);
    rmmdp::harness::write_rows(BufWriter::new(File::create(&args.out)?), &rows)?;
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Explore(a) => explore_cmd(a),
        Command::Recover(a) => recover_cmd(a),
        Command::Plan(a) => plan_cmd(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Run(a) => run_cmd(a),
        Command::Sweep(a) => sweep_cmd(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
