//! `flipper` subcommands. Each one is a thin wrapper over a core operation
//! that writes its artifacts and a manifest into `--out`.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use flipper_core::cgan::{train_cyclegan, CganHyper, CycleGan};
use flipper_core::pipeline::{
    self, bench_planner, derive_seed, evaluate, mean_expansions, BenchCase, BenchRow, Evaluation, Executor, IterationReport, PipelineOutput, WorldEntry,
};
use flipper_core::planner::{extract_dataset, plan, Clock, Guide, NoClock, PolicyGuide};
use flipper_core::policy::{train_imitation, ImitationDataset, ImitationHyper, PolicyNet};
use flipper_core::sim::{Dem, Trajectory, Verdict};
use flipper_core::terrain::World;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{CganFile, PolicyFile};
use crate::config::CliConfig;
use crate::exec::{Threaded, WallClock};
use crate::io::{self, finite};
use crate::manifest::RunDir;
use crate::{Error, Result};

const STREAM_PLAN: u64 = 1;
const STREAM_POLICY: u64 = 2;
const STREAM_SPLIT: u64 = 3;
const STREAM_GAN: u64 = 6;
const STREAM_EVAL: u64 = 7;

#[derive(Debug, Parser)]
#[command(name = "flipper", version, about = "Flipper-control planning, imitation and sim-to-real transfer at desk scale")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON config; fields not given keep their defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the master seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (default `runs/<command>`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// JSON list of world entries replacing the command's world list.
    #[arg(long, global = true)]
    pub worlds: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write one world file per configured world.
    GenWorlds,
    /// Plan on every configured world.
    Plan {
        /// Guide the planner with this policy.
        #[arg(long)]
        policy: Option<PathBuf>,
        /// Generator applied to the guide's observations.
        #[arg(long)]
        generator: Option<PathBuf>,
        /// Exit with status 1 if some world gets no plan.
        #[arg(long)]
        require_plan: bool,
        /// Measure wall time (makes the stats nondeterministic).
        #[arg(long)]
        timing: bool,
    },
    /// Imitation-train a policy on planner trajectories.
    TrainPolicy {
        /// Trajectory log (JSONL) to imitate
        #[arg(long)]
        data: PathBuf,
        /// CycleGAN checkpoint whose generator is applied to the observations
        #[arg(long)]
        generator: Option<PathBuf>,
    },
    /// Train the CycleGAN on real and simulated trajectory DEMs.
    TrainCgan {
        /// Trajectory log (JSONL) from the pseudo-real domain
        #[arg(long)]
        real: PathBuf,
        /// Trajectory log (JSONL) from simulation
        #[arg(long)]
        sim: PathBuf,
    },
    /// Run the full plan / imitate / collect / retrain loop.
    RunPipeline,
    /// Score a policy on the test worlds in the pseudo-real domain.
    Evaluate {
        /// Policy checkpoint
        #[arg(long)]
        policy: PathBuf,
    },
    /// Planner effort per configuration and world.
    BenchPlanner {
        /// Policy checkpoint for the guided cases (skipped without one)
        #[arg(long)]
        policy: Option<PathBuf>,
        /// CycleGAN checkpoint whose generator is applied to the guide's observations
        #[arg(long)]
        generator: Option<PathBuf>,
        /// Measure wall time (makes the stats nondeterministic)
        #[arg(long)]
        timing: bool,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::GenWorlds => "gen-worlds",
            Command::Plan { .. } => "plan",
            Command::TrainPolicy { .. } => "train-policy",
            Command::TrainCgan { .. } => "train-cgan",
            Command::RunPipeline => "run-pipeline",
            Command::Evaluate { .. } => "evaluate",
            Command::BenchPlanner { .. } => "bench-planner",
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let name = cli.command.name();
    let out = cli.out.clone().unwrap_or_else(|| Path::new("runs").join(name));
    let mut dir = match RunDir::create(&out) {
        Ok(d) => d,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    let mut seed = cli.seed.unwrap_or(0);
    let outcome = load(&cli).and_then(|cfg| {
        seed = cfg.seed;
        execute(&cli, &cfg, &mut dir)
    });
    if let Err(e) = &outcome {
        eprintln!("error: {e}");
    }
    match dir.finish(name, cli.config.as_deref(), seed, &outcome) {
        Ok(m) => m.exit_code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn load(cli: &Cli) -> Result<CliConfig> {
    let cfg = match &cli.config {
        Some(p) => CliConfig::load(p)?,
        None => CliConfig::default(),
    };
    if cli.threads == 0 {
        return Err(Error::Config(String::from("--threads must be at least 1")));
    }
    Ok(match cli.seed {
        Some(s) => cfg.with_seed(s),
        None => cfg,
    })
}

struct Ctx<'a> {
    cfg: &'a CliConfig,
    exec: Threaded,
    worlds: Option<Vec<WorldEntry>>,
}

impl Ctx<'_> {
    fn entries(&self, default: &[WorldEntry]) -> Vec<WorldEntry> {
        self.worlds.clone().unwrap_or_else(|| default.to_vec())
    }

    fn generate(&self, default: &[WorldEntry]) -> Result<Vec<(String, World)>> {
        self.entries(default).iter().map(|e| Ok((e.id.clone(), e.generate()?))).collect()
    }
}

fn execute(cli: &Cli, cfg: &CliConfig, dir: &mut RunDir) -> Result<()> {
    let worlds = match &cli.worlds {
        Some(p) => Some(io::read_json::<Vec<WorldEntry>>(p)?),
        None => None,
    };
    let ctx = Ctx {
        cfg,
        exec: Threaded::new(cli.threads),
        worlds,
    };
    match &cli.command {
        Command::GenWorlds => gen_worlds(&ctx, dir),
        Command::Plan {
            policy,
            generator,
            require_plan,
            timing,
        } => cmd_plan(&ctx, dir, policy.as_deref(), generator.as_deref(), *require_plan, *timing),
        Command::TrainPolicy { data, generator } => train_policy(&ctx, dir, data, generator.as_deref()),
        Command::TrainCgan { real, sim } => train_cgan(&ctx, dir, real, sim),
        Command::RunPipeline => run_pipeline(&ctx, dir),
        Command::Evaluate { policy } => cmd_evaluate(&ctx, dir, policy),
        Command::BenchPlanner { policy, generator, timing } => bench(&ctx, dir, policy.as_deref(), generator.as_deref(), *timing),
    }
}

pub fn load_policy(path: &Path) -> Result<PolicyNet> {
    Ok(io::read_json::<PolicyFile>(path)?.restore()?)
}

pub fn load_cgan(path: &Path) -> Result<CycleGan> {
    Ok(io::read_json::<CganFile>(path)?.restore()?)
}

fn load_guide(policy: Option<&Path>, generator: Option<&Path>) -> Result<(Option<PolicyNet>, Option<CycleGan>)> {
    if policy.is_none() && generator.is_some() {
        return Err(Error::Config(String::from("--generator needs --policy")));
    }
    Ok((policy.map(load_policy).transpose()?, generator.map(load_cgan).transpose()?))
}

fn gen_worlds(ctx: &Ctx<'_>, dir: &mut RunDir) -> Result<()> {
    let entries = ctx.entries(&ctx.cfg.worlds);
    for e in &entries {
        dir.json(&format!("worlds/{}.json", e.id), &e.generate()?)?;
    }
    dir.json("worlds/entries.json", &entries)?;
    Ok(())
}

/// One planner run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatRow {
    pub world_id: String,
    pub guided: bool,
    pub actions: usize,
    pub dt_ms: u64,
    pub seed: u64,
    pub expansions: usize,
    pub cpu_seconds: f64,
    pub found: bool,
}

fn clock(timing: bool) -> Box<dyn Clock> {
    if timing {
        Box::new(WallClock::start())
    } else {
        Box::new(NoClock)
    }
}

fn cmd_plan(ctx: &Ctx<'_>, dir: &mut RunDir, policy: Option<&Path>, generator: Option<&Path>, require: bool, timing: bool) -> Result<()> {
    let cfg = ctx.cfg;
    cfg.plan.validate()?;
    if cfg.plan_runs == 0 {
        return Err(Error::Config(String::from("plan_runs must be positive")));
    }
    let worlds = ctx.generate(&cfg.worlds)?;
    let (policy, gan) = load_guide(policy, generator)?;
    let guide = policy.as_ref().map(|p| PolicyGuide {
        policy: p,
        generator: gan.as_ref().map(|m| &m.g),
    });
    let n = cfg.plan_runs;
    let job = |i: usize| {
        let (id, w) = &worlds[i / n];
        let pc = flipper_core::planner::PlanConfig {
            seed: derive_seed(cfg.seed, STREAM_PLAN, (i / n) as u64, (i % n) as u64),
            ..cfg.plan
        };
        let c = clock(timing);
        plan(w, id, &pc, &cfg.pipeline.sim, guide.as_ref().map(|g| g as &dyn Guide), c.as_ref()).map(|r| (pc.seed, r))
    };
    let mut trajs = Vec::new();
    let mut rows = Vec::new();
    for (i, r) in ctx.exec.map(worlds.len() * n, &job).into_iter().enumerate() {
        let (seed, r) = r?;
        rows.push(StatRow {
            world_id: worlds[i / n].0.clone(),
            guided: guide.is_some(),
            actions: cfg.plan.actions,
            dt_ms: (cfg.plan.dt * 1000.0).round() as u64,
            seed,
            expansions: r.stats.expansions,
            cpu_seconds: r.stats.seconds,
            found: r.stats.found,
        });
        trajs.extend(r.trajectory);
    }
    dir.jsonl("trajectories.jsonl", &trajs)?;
    dir.csv("stats.csv", &rows)?;
    if require {
        if let Some((id, _)) = worlds.iter().find(|(id, _)| !rows.iter().any(|r| &r.world_id == id && r.found)) {
            return Err(Error::Domain(format!("no plan found on world {id}")));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossRow {
    pub epoch: usize,
    pub train_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySummary {
    pub pairs: usize,
    pub train_pairs: usize,
    pub test_pairs: usize,
    pub test_error: Option<f64>,
}

fn train_policy(ctx: &Ctx<'_>, dir: &mut RunDir, data: &Path, generator: Option<&Path>) -> Result<()> {
    let cfg = ctx.cfg;
    let trajs: Vec<Trajectory> = io::read_jsonl(data)?;
    let gan = generator.map(load_cgan).transpose()?;
    let pairs = extract_dataset(&trajs, gan.as_ref().map(|m| &m.g));
    if pairs.is_empty() {
        return Err(Error::Domain(format!("{}: no training pairs", data.display())));
    }
    let dataset = ImitationDataset::new(pairs, derive_seed(cfg.seed, STREAM_SPLIT, 0, 0));
    let hyper = ImitationHyper {
        seed: derive_seed(cfg.seed, STREAM_POLICY, 0, 0),
        ..cfg.pipeline.imitation
    };
    let trained = train_imitation(&dataset, &hyper)?;
    let (train, test) = dataset.split();
    dir.json("dataset.json", &dataset)?;
    dir.json("policy.json", &PolicyFile::capture(&trained.policy, Some(&trained.optimizer), hyper.seed))?;
    let losses: Vec<LossRow> = trained
        .train_loss
        .iter()
        .enumerate()
        .map(|(epoch, &l)| LossRow { epoch, train_loss: finite(l) })
        .collect();
    dir.csv("loss.csv", &losses)?;
    dir.json(
        "summary.json",
        &PolicySummary {
            pairs: dataset.pairs.len(),
            train_pairs: train.len(),
            test_pairs: test.len(),
            test_error: finite(trained.test_error),
        },
    )?;
    Ok(())
}

fn dems(trajs: &[Trajectory]) -> Vec<Dem> {
    trajs.iter().flat_map(|t| t.steps.iter().map(|s| s.dem)).collect()
}

fn train_cgan(ctx: &Ctx<'_>, dir: &mut RunDir, real: &Path, sim: &Path) -> Result<()> {
    let cfg = ctx.cfg;
    let real: Vec<Trajectory> = io::read_jsonl(real)?;
    let sim: Vec<Trajectory> = io::read_jsonl(sim)?;
    let hyper = CganHyper {
        seed: derive_seed(cfg.seed, STREAM_GAN, 0, 0),
        ..cfg.pipeline.cgan
    };
    let trained = train_cyclegan(&dems(&real), &dems(&sim), &hyper)?;
    dir.json("cgan.json", &CganFile::capture(&trained.model, hyper.arch, hyper.seed))?;
    dir.csv("loss.csv", &trained.history)?;
    Ok(())
}

/// Per-iteration details of a pipeline run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRow {
    pub iteration: usize,
    pub score_sum: f64,
    pub test_error: Option<f64>,
    pub chosen_candidate: usize,
    pub dataset_size: usize,
    pub plans_attempted: usize,
    pub plans_found: usize,
    pub mean_expansions: f64,
    pub l_d: Option<f64>,
    pub l_ds: Option<f64>,
    pub l_g: Option<f64>,
    pub l_gs: Option<f64>,
    pub l_cycle: Option<f64>,
    pub policy_data: String,
    pub gan_data: String,
    pub policy_path: String,
    pub cgan_path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineSummary {
    pub iterations_completed: usize,
    pub final_score_sum: Option<f64>,
    pub error: Option<String>,
    pub reports: Vec<IterationReport>,
}

fn score_cell(x: f64) -> String {
    format!("{x:.4}")
}

/// Per-world scores by iteration, one column per test world.
pub fn table1(world_ids: &[String], rows: &[(String, Vec<f64>, f64)]) -> (Vec<String>, Vec<Vec<String>>) {
    let mut header = vec![String::from("iteration")];
    header.extend(world_ids.iter().cloned());
    header.push(String::from("sum"));
    let body = rows
        .iter()
        .map(|(label, scores, sum)| {
            let mut r = vec![label.clone()];
            r.extend(scores.iter().map(|&s| score_cell(s)));
            r.push(score_cell(*sum));
            r
        })
        .collect();
    (header, body)
}

/// Writes everything a (possibly partial) pipeline run produced.
pub fn write_pipeline(dir: &mut RunDir, out: &PipelineOutput, cfg: &pipeline::PipelineConfig) -> Result<()> {
    dir.jsonl("initial/plans.jsonl", &out.initial_plans)?;
    if let Some(p) = &out.initial_policy {
        dir.json("initial/policy.json", &PolicyFile::capture(p, None, cfg.seed))?;
    }
    dir.jsonl("real.jsonl", &out.real)?;
    let mut rows = Vec::new();
    let mut scores = Vec::new();
    for it in &out.iterations {
        let r = &it.report;
        let sub = format!("iter_{}", r.iteration);
        let policy_path = format!("{sub}/policy.json");
        let cgan_path = format!("{sub}/cgan.json");
        dir.jsonl(&format!("{sub}/plans.jsonl"), &it.plans)?;
        dir.jsonl(&format!("{sub}/sim.jsonl"), &it.sim_rollouts)?;
        dir.json(&policy_path, &PolicyFile::capture(&it.policy, None, cfg.seed))?;
        dir.json(&cgan_path, &CganFile::capture(&it.cgan, cfg.cgan.arch, cfg.seed))?;
        dir.csv(&format!("{sub}/cgan_loss.csv"), &it.cgan_history)?;
        let l = r.cgan_final;
        rows.push(IterationRow {
            iteration: r.iteration,
            score_sum: r.score_sum,
            test_error: finite(r.test_error),
            chosen_candidate: r.chosen_candidate,
            dataset_size: r.dataset_size,
            plans_attempted: r.plans.attempts,
            plans_found: r.plans.found,
            mean_expansions: r.plans.mean_expansions,
            l_d: finite(l.l_d),
            l_ds: finite(l.l_ds),
            l_g: finite(l.l_g),
            l_gs: finite(l.l_gs),
            l_cycle: finite(l.l_cycle),
            policy_data: r.policy_data.clone(),
            gan_data: r.gan_data.clone(),
            policy_path,
            cgan_path,
        });
        scores.push((r.iteration.to_string(), r.scores.clone(), r.score_sum));
    }
    dir.csv("iterations.csv", &rows)?;
    let ids: Vec<String> = cfg.test_worlds.iter().map(|w| w.id.clone()).collect();
    let (header, body) = table1(&ids, &scores);
    dir.table("table1.csv", &header, &body)?;
    Ok(())
}

fn run_pipeline(ctx: &Ctx<'_>, dir: &mut RunDir) -> Result<()> {
    let mut cfg = ctx.cfg.clone();
    if let Some(w) = &ctx.worlds {
        cfg.pipeline.training_worlds = w.clone();
    }
    dir.json("config.json", &cfg)?;
    let (out, error) = match pipeline::run(&cfg.pipeline, &ctx.exec, &NoClock) {
        Ok(o) => (o, None),
        Err(f) => (f.partial, Some(f.error)),
    };
    write_pipeline(dir, &out, &cfg.pipeline)?;
    let reports = out.reports();
    dir.json(
        "summary.json",
        &PipelineSummary {
            iterations_completed: reports.len(),
            final_score_sum: reports.last().map(|r| r.score_sum),
            error: error.as_ref().map(|e| e.to_string()),
            reports,
        },
    )?;
    match error {
        Some(e) => Err(e.into()),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub world_id: String,
    pub rollouts: usize,
    pub good: usize,
    pub unclear: usize,
    pub fail: usize,
    pub score: f64,
}

pub fn eval_rows(e: &Evaluation) -> Vec<EvalRow> {
    e.world_ids
        .iter()
        .zip(&e.verdicts)
        .zip(&e.scores)
        .map(|((id, v), &score)| EvalRow {
            world_id: id.clone(),
            rollouts: v.len(),
            good: v.iter().filter(|x| **x == Verdict::Good).count(),
            unclear: v.iter().filter(|x| **x == Verdict::Unclear).count(),
            fail: v.iter().filter(|x| **x == Verdict::Fail).count(),
            score,
        })
        .collect()
}

fn cmd_evaluate(ctx: &Ctx<'_>, dir: &mut RunDir, policy: &Path) -> Result<()> {
    let cfg = &ctx.cfg.pipeline;
    cfg.validate()?;
    let policy = load_policy(policy)?;
    let worlds = ctx.generate(&cfg.test_worlds)?;
    let e = evaluate(&ctx.exec, &policy, &worlds, cfg, cfg.eval_rollouts, derive_seed(cfg.seed, STREAM_EVAL, 0, 0))?;
    dir.csv("eval.csv", &eval_rows(&e))?;
    let (header, body) = table1(&e.world_ids, &[(String::from("eval"), e.scores.clone(), e.sum)]);
    dir.table("table1.csv", &header, &body)?;
    dir.json("summary.json", &e)?;
    Ok(())
}

/// One row of the planner table: a configuration averaged over worlds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table3Row {
    pub iter: String,
    pub guided: bool,
    pub actions: usize,
    pub dt_ms: u64,
    pub runs: usize,
    pub found: usize,
    pub max_expansions: usize,
    pub avg_expansions: f64,
    pub avg_cpu_seconds: f64,
}

pub fn table3_row(iter: String, case: &BenchCase, rows: &[BenchRow]) -> Table3Row {
    let sel: Vec<&BenchRow> = rows.iter().filter(|r| r.label == case.label).collect();
    let k = sel.len().max(1) as f64;
    Table3Row {
        iter,
        guided: case.guided,
        actions: case.plan.actions,
        dt_ms: (case.plan.dt * 1000.0).round() as u64,
        runs: sel.iter().map(|r| r.runs).sum(),
        found: sel.iter().map(|r| r.found).sum(),
        max_expansions: case.plan.max_expansions,
        avg_expansions: sel.iter().map(|r| r.mean_expansions).sum::<f64>() / k,
        avg_cpu_seconds: sel.iter().map(|r| r.mean_seconds).sum::<f64>() / k,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSummary {
    pub reference_label: Option<usize>,
    pub reference_expansions: Option<f64>,
    pub hard_world: String,
    pub hard_budget: Option<usize>,
    pub hard_found: Option<usize>,
    pub skipped_guided: bool,
}

fn bench(ctx: &Ctx<'_>, dir: &mut RunDir, policy: Option<&Path>, generator: Option<&Path>, timing: bool) -> Result<()> {
    let b = &ctx.cfg.bench;
    let sim = &ctx.cfg.pipeline.sim;
    if b.runs == 0 || !(b.hard_budget_factor > 0.0) {
        return Err(Error::Config(String::from("bench runs and budget factor must be positive")));
    }
    for c in &b.cases {
        c.plan.validate()?;
    }
    b.hard_case.validate()?;
    let (policy, gan) = load_guide(policy, generator)?;
    let guide = policy.as_ref().map(|p| PolicyGuide {
        policy: p,
        generator: gan.as_ref().map(|m| &m.g),
    });
    let skipped = guide.is_none() && b.cases.iter().any(|c| c.guided);
    if skipped {
        eprintln!("note: no --policy given, guided cases skipped");
    }
    let cases: Vec<BenchCase> = b.cases.iter().filter(|c| !c.guided || guide.is_some()).copied().collect();
    let worlds = ctx.generate(&b.worlds)?;
    let factory = move || clock(timing);
    let g = guide.as_ref().map(|g| g as &(dyn Guide + Sync));
    let rows = bench_planner(&ctx.exec, &cases, &worlds, g, sim, b.runs, ctx.cfg.seed, &factory)?;
    let mut table: Vec<Table3Row> = cases.iter().map(|c| table3_row(c.label.to_string(), c, &rows)).collect();

    let reference = cases.iter().find(|c| !c.guided).map(|c| c.label);
    let reference_expansions = reference.map(|l| mean_expansions(&rows, l));
    let mut hard_budget = None;
    let mut hard_found = None;
    let mut all_rows = rows;
    if let Some(mean) = reference_expansions {
        let budget = (b.hard_budget_factor * mean).ceil() as usize;
        let case = BenchCase {
            label: 0,
            guided: false,
            plan: flipper_core::planner::PlanConfig {
                max_expansions: budget,
                ..b.hard_case
            },
        };
        let hard = vec![(b.hard_world.id.clone(), b.hard_world.generate()?)];
        let hard_rows = bench_planner(&ctx.exec, &[case], &hard, None, sim, b.runs, ctx.cfg.seed, &factory)?;
        table.push(table3_row(String::from("-"), &case, &hard_rows));
        hard_budget = Some(budget);
        hard_found = Some(hard_rows.iter().map(|r| r.found).sum());
        all_rows.extend(hard_rows);
    }
    dir.csv("stats.csv", &all_rows)?;
    dir.csv("table3.csv", &table)?;
    dir.json(
        "summary.json",
        &BenchSummary {
            reference_label: reference,
            reference_expansions,
            hard_world: b.hard_world.id.clone(),
            hard_budget,
            hard_found,
            skipped_guided: skipped,
        },
    )?;
    Ok(())
}
