use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use ranker::engines::IterativeOptions;
use ranker::harness::{
    build_policy, export_traces, infer_feature_dim, load_config, load_params, narrate, resolve_tasks, run_compare,
    run_eval, write_reports, CompareRow, EngineKind, EvalOptions, RunConfig,
};
use ranker::policies::PolicyParams;
use ranker::rewards::RewardOptions;
use ranker::rl::{read_checkpoint, write_checkpoint, write_curve, Regime, Trainer};
use ranker::tasks::save_tasks;
use ranker::types::RankingTask;

#[derive(Parser)]
#[command(name = "ranker", version, about = "Direct and iterative-exclusion ranking with PPO training")]
struct Cli {
    /// Seed for task generation, rollouts and stochastic policies.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (0 = one per core). `--jobs 1` gives byte-identical reruns.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct TaskArgs {
    /// Task file (JSON lines) or shape: recommendation, routing[-performance|-balance|-cost],
    /// passage5|7|9, synthetic<n>.
    #[arg(long)]
    tasks: Option<String>,
    /// Tasks to generate for a shape.
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    feature_dim: Option<usize>,
    #[arg(long)]
    noise: Option<f64>,
}

#[derive(Args, Clone, Default)]
struct EngineArgs {
    /// `direct` or `iterative`.
    #[arg(long)]
    engine: Option<String>,
    /// Call the policy for the final one-candidate pool as well.
    #[arg(long)]
    query_last_step: bool,
    /// Score r_a as 0 for any malformed direct output.
    #[arg(long)]
    strict_ra_zero: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a task file.
    Gen {
        #[command(flatten)]
        tasks: TaskArgs,
    },
    /// Train the linear-softmax policy with PPO.
    Train {
        #[command(flatten)]
        tasks: TaskArgs,
        #[command(flatten)]
        engine: EngineArgs,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        episodes: Option<usize>,
        /// Write a checkpoint every N iterations (the final one is always written).
        #[arg(long, default_value_t = 0)]
        checkpoint_every: usize,
        /// Continue from a checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Initial parameters (parameter file or checkpoint) instead of zeros.
        #[arg(long)]
        init: Option<PathBuf>,
    },
    /// Evaluate one policy with one engine.
    Eval {
        #[command(flatten)]
        tasks: TaskArgs,
        #[command(flatten)]
        engine: EngineArgs,
        /// oracle | anti-oracle | random | nearest | linear[:<file>] | remote:<model>
        #[arg(long)]
        policy: Option<String>,
        /// Comma-separated nDCG cutoffs.
        #[arg(long, value_delimiter = ',')]
        ks: Option<Vec<usize>>,
    },
    /// Evaluate several engine=policy configurations side by side.
    Compare {
        #[command(flatten)]
        tasks: TaskArgs,
        #[command(flatten)]
        engine: EngineArgs,
        /// `<engine>=<policy>`, repeated (at least twice).
        #[arg(long = "run", required = true)]
        runs: Vec<String>,
        #[arg(long, value_delimiter = ',')]
        ks: Option<Vec<usize>>,
    },
    /// Rank a single task and print the result.
    Rank {
        #[command(flatten)]
        tasks: TaskArgs,
        #[command(flatten)]
        engine: EngineArgs,
        #[arg(long)]
        policy: Option<String>,
        /// Which task of the source to rank.
        #[arg(long, default_value_t = 0)]
        index: usize,
    },
    /// Run iterative episodes and write their traces.
    ExportTraces {
        #[command(flatten)]
        tasks: TaskArgs,
        #[arg(long)]
        policy: Option<String>,
        /// Trace file; defaults to <out>/traces/traces.jsonl.
        #[arg(long)]
        file: Option<PathBuf>,
    },
}

struct Ctx {
    cfg: RunConfig,
    seed: u64,
    jobs: usize,
    out: PathBuf,
}

impl Ctx {
    fn new(cli: &Cli) -> Result<Self> {
        let mut cfg = match &cli.config {
            Some(p) => load_config(p)?,
            None => RunConfig::default(),
        };
        let seed = cli.seed.or(cfg.seed).unwrap_or(42);
        if cli.seed.is_some() || cfg.seed.is_some() {
            cfg.ppo.seed = seed;
        }
        Ok(Self {
            jobs: cli.jobs.or(cfg.jobs).unwrap_or(0),
            out: cli.out.clone().or(cfg.out.clone()).unwrap_or_else(|| PathBuf::from("out")),
            cfg,
            seed,
        })
    }

    fn tasks(&self, a: &TaskArgs) -> Result<Vec<RankingTask>> {
        let mut s = self.cfg.tasks.clone();
        if let Some(t) = &a.tasks {
            s.source = t.clone();
        }
        s.count = a.count.unwrap_or(s.count);
        s.feature_dim = a.feature_dim.unwrap_or(s.feature_dim);
        s.noise = a.noise.unwrap_or(s.noise);
        let tasks = resolve_tasks(&s, self.seed).with_context(|| format!("loading tasks from {:?}", s.source))?;
        if tasks.is_empty() {
            bail!("task source {:?} is empty", s.source);
        }
        Ok(tasks)
    }

    fn engine(&self, a: &EngineArgs) -> Result<EngineKind> {
        Ok(match &a.engine {
            Some(e) => e.parse()?,
            None => self.cfg.engine.kind,
        })
    }

    fn eval_options(&self, a: &EngineArgs, ks: &Option<Vec<usize>>) -> EvalOptions {
        EvalOptions {
            ks: ks.clone().unwrap_or_else(|| self.cfg.eval.ks.clone()),
            seed: self.seed,
            jobs: self.jobs,
            iterative: IterativeOptions {
                query_last_step: a.query_last_step || self.cfg.engine.query_last_step,
            },
            reward: RewardOptions {
                strict_ra_zero: a.strict_ra_zero || self.cfg.engine.strict_ra_zero,
            },
        }
    }

    fn policy_spec(&self, p: &Option<String>) -> String {
        p.clone().unwrap_or_else(|| self.cfg.policy.spec.clone())
    }

    fn mkdir(&self, sub: &str) -> Result<PathBuf> {
        let d = self.out.join(sub);
        fs::create_dir_all(&d).with_context(|| format!("creating {}", d.display()))?;
        Ok(d)
    }
}

fn print_rows(rows: &[CompareRow]) {
    print!("{}", ranker::harness::render_table(rows));
}

fn cmd_gen(ctx: &Ctx, a: &TaskArgs) -> Result<()> {
    let tasks = ctx.tasks(a)?;
    let dir = ctx.mkdir("")?;
    let path = dir.join("tasks.jsonl");
    save_tasks(&path, &tasks)?;
    println!("wrote {} tasks to {}", tasks.len(), path.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_train(
    ctx: &Ctx,
    a: &TaskArgs,
    e: &EngineArgs,
    iterations: Option<usize>,
    episodes: Option<usize>,
    every: usize,
    resume: &Option<PathBuf>,
    init: &Option<PathBuf>,
) -> Result<()> {
    let tasks = ctx.tasks(a)?;
    let regime = match ctx.engine(e)? {
        EngineKind::Iterative => Regime::Iterative,
        EngineKind::Direct => Regime::Direct,
    };
    let mut config = ctx.cfg.ppo.clone();
    config.iterations = iterations.unwrap_or(config.iterations);
    config.episodes_per_iteration = episodes.unwrap_or(config.episodes_per_iteration);
    let mut trainer = match resume {
        Some(p) => {
            let mut ck = read_checkpoint(p)?;
            ck.config.iterations = config.iterations;
            Trainer::from_checkpoint(ck)?
        }
        None => {
            let params = match init {
                Some(p) => load_params(p)?,
                None => PolicyParams::zeros(infer_feature_dim(&tasks)?),
            };
            Trainer::new(params, config, regime)?
        }
    };
    let ck_dir = ctx.mkdir("checkpoints")?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(ctx.jobs).build()?;
    while !trainer.is_done() {
        let p = pool.install(|| trainer.step(&tasks))?;
        log::info!("iteration {}: mean_mrr {:.4} kl {:.3e}", p.iteration, p.mean_mrr, p.kl);
        if every > 0 && trainer.iteration() % every == 0 && !trainer.is_done() {
            write_checkpoint(&ck_dir.join(format!("iter-{:04}.json", trainer.iteration())), &trainer.checkpoint())?;
        }
    }
    write_checkpoint(&ck_dir.join("final.json"), &trainer.checkpoint())?;
    write_curve(&ctx.out.join("curve.csv"), trainer.curve())?;
    if let Some(last) = trainer.curve().last() {
        println!(
            "trained {} iterations: last mean episode MRR {:.4}, KL {:.3e}",
            trainer.iteration(),
            last.mean_mrr,
            last.kl
        );
    }
    println!("wrote {} and {}", ctx.out.join("curve.csv").display(), ck_dir.join("final.json").display());
    Ok(())
}

fn cmd_eval(ctx: &Ctx, a: &TaskArgs, e: &EngineArgs, policy: &Option<String>, ks: &Option<Vec<usize>>) -> Result<()> {
    let tasks = ctx.tasks(a)?;
    let engine = ctx.engine(e)?;
    let policy = build_policy(&ctx.policy_spec(policy), &ctx.cfg.policy, &tasks)?;
    let r = run_eval(engine, policy.as_ref(), &tasks, &ctx.eval_options(e, ks))?;
    let rows = vec![CompareRow::from_eval(&r, r.report.mrr)];
    write_reports(&ctx.out, &rows)?;
    if engine == EngineKind::Iterative {
        export_traces(&ctx.mkdir("traces")?.join("traces.jsonl"), &r.traces())?;
    }
    print_rows(&rows);
    if !r.failures.is_empty() {
        eprintln!("{} task(s) failed; see {}", r.failures.len(), ctx.out.join("report.txt").display());
    }
    Ok(())
}

fn cmd_compare(ctx: &Ctx, a: &TaskArgs, e: &EngineArgs, runs: &[String], ks: &Option<Vec<usize>>) -> Result<()> {
    let tasks = ctx.tasks(a)?;
    let mut built = Vec::new();
    for run in runs {
        let (engine, spec) = run
            .split_once('=')
            .with_context(|| format!("--run {run:?}: expected <engine>=<policy>"))?;
        built.push((engine.parse::<EngineKind>()?, build_policy(spec, &ctx.cfg.policy, &tasks)?));
    }
    let configs: Vec<_> = built.iter().map(|(e, p)| (*e, p.as_ref())).collect();
    let opts = ctx.eval_options(e, ks);
    let rows = run_compare(&configs, &tasks, &opts)?;
    write_reports(&ctx.out, &rows)?;
    print_rows(&rows);
    Ok(())
}

fn cmd_rank(ctx: &Ctx, a: &TaskArgs, e: &EngineArgs, policy: &Option<String>, index: usize) -> Result<()> {
    let tasks = ctx.tasks(a)?;
    let task = tasks
        .get(index)
        .with_context(|| format!("--index {index} out of range (source has {} tasks)", tasks.len()))?;
    let engine = ctx.engine(e)?;
    let policy = build_policy(&ctx.policy_spec(policy), &ctx.cfg.policy, &tasks)?;
    let mut opts = ctx.eval_options(e, &None);
    opts.jobs = 1;
    let r = run_eval(engine, policy.as_ref(), std::slice::from_ref(task), &opts)?;
    if let Some(f) = r.failures.first() {
        bail!("task {} failed: {}", f.task_id, f.error);
    }
    let res = &r.results[0];
    println!("task {} ({} engine, policy {})", task.id, engine, r.policy);
    println!("query: {}", task.query.text);
    if let Some(trace) = &res.trace {
        print!("{}", narrate(trace));
    }
    if let Some(rw) = &res.reward {
        println!("reward: r_a {:.4} r_g {:.4} r_d {:.4}", rw.r_a, rw.r_g, rw.r_d);
    }
    println!("ranking (best first):");
    for (i, id) in res.ranking.iter().enumerate() {
        let mark = if task.is_positive(id) { " *" } else { "" };
        println!("{:>3}. {id}{mark}", i + 1);
    }
    println!("reciprocal rank {:.4}", res.reciprocal_rank);
    Ok(())
}

fn cmd_export(ctx: &Ctx, a: &TaskArgs, policy: &Option<String>, file: &Option<PathBuf>) -> Result<()> {
    let tasks = ctx.tasks(a)?;
    let policy = build_policy(&ctx.policy_spec(policy), &ctx.cfg.policy, &tasks)?;
    let r = run_eval(EngineKind::Iterative, policy.as_ref(), &tasks, &ctx.eval_options(&EngineArgs::default(), &None))?;
    let path = match file {
        Some(p) => p.clone(),
        None => ctx.mkdir("traces")?.join("traces.jsonl"),
    };
    let traces = r.traces();
    export_traces(&path, &traces)?;
    println!("wrote {} traces to {}", traces.len(), path.display());
    if !r.failures.is_empty() {
        eprintln!("{} task(s) failed and have no trace", r.failures.len());
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let ctx = Ctx::new(&cli)?;
    match &cli.command {
        Command::Gen { tasks } => cmd_gen(&ctx, tasks),
        Command::Train {
            tasks,
            engine,
            iterations,
            episodes,
            checkpoint_every,
            resume,
            init,
        } => cmd_train(&ctx, tasks, engine, *iterations, *episodes, *checkpoint_every, resume, init),
        Command::Eval { tasks, engine, policy, ks } => cmd_eval(&ctx, tasks, engine, policy, ks),
        Command::Compare { tasks, engine, runs, ks } => cmd_compare(&ctx, tasks, engine, runs, ks),
        Command::Rank {
            tasks,
            engine,
            policy,
            index,
        } => cmd_rank(&ctx, tasks, engine, policy, *index),
        Command::ExportTraces { tasks, policy, file } => cmd_export(&ctx, tasks, policy, file),
    }
}
