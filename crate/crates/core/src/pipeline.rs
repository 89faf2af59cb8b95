//! The plan / imitate / collect / retrain-GAN loop and its evaluation harness.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::cgan::{train_cyclegan, CganError, CganHyper, CycleGan, LossRecord};
use crate::planner::{extract_dataset, plan, Clock, Guide, PlanConfig, PlanError, PlanStats, PolicyGuide};
use crate::policy::{train_imitation, ImitationDataset, ImitationHyper, PolicyError, PolicyNet};
use crate::sim::{
    check_safety, extract_dem_sim, initial_state, sense_dem, step, Dem, SenseParams, SimConfig, SimError, Trajectory,
    TrajectoryStep, Verdict, SPEED,
};
use crate::terrain::{generate_world, Obstacle, ObstacleSpec, TerrainError, World};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PipelineError {
    #[error("invalid pipeline config: {0}")]
    Config(String),
    #[error("no planner trajectory found in iteration {0}")]
    NoPlans(usize),
    #[error("no trajectory data for GAN training in iteration {0}")]
    NoGanData(usize),
    #[error(transparent)]
    Terrain(#[from] TerrainError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Cgan(#[from] CganError),
}

/// Runs independent jobs. Results come back in index order so that merges are
/// deterministic regardless of scheduling.
pub trait Executor {
    fn map<R: Send>(&self, n: usize, job: &(dyn Fn(usize) -> R + Sync)) -> Vec<R>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn map<R: Send>(&self, n: usize, job: &(dyn Fn(usize) -> R + Sync)) -> Vec<R> {
        (0..n).map(job).collect()
    }
}

/// Stable seed derivation (SplitMix64 finaliser over the mixed inputs).
pub fn derive_seed(master: u64, stream: u64, a: u64, b: u64) -> u64 {
    let mut z = master ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ a.wrapping_mul(0xbf58_476d_1ce4_e5b9) ^ b.wrapping_mul(0x94d0_49bb_1331_11eb);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

const STREAM_PLAN: u64 = 1;
const STREAM_POLICY: u64 = 2;
const STREAM_SPLIT: u64 = 3;
const STREAM_REAL: u64 = 4;
const STREAM_SIM: u64 = 5;
const STREAM_GAN: u64 = 6;
const STREAM_EVAL: u64 = 7;
const STREAM_SELECT: u64 = 8;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct WorldEntry {
    pub id: String,
    pub spec: ObstacleSpec,
    pub seed: u64,
}

impl WorldEntry {
    pub fn new(id: &str, spec: ObstacleSpec, seed: u64) -> Self {
        Self {
            id: String::from(id),
            spec,
            seed,
        }
    }

    pub fn generate(&self) -> Result<World, TerrainError> {
        generate_world(&self.spec, self.seed)
    }
}

/// The eight test worlds: flat, pallet, three stairs up and three stairs down.
pub fn test_worlds() -> Vec<WorldEntry> {
    let up = |riser, tread, steps| Obstacle::StairsUp { riser, tread, steps };
    let down = |riser, tread, steps| Obstacle::StairsDown { riser, tread, steps };
    vec![
        WorldEntry::new("F", ObstacleSpec::new(Obstacle::Flat, 1.0, 3.0), 101),
        WorldEntry::new("P", ObstacleSpec::new(Obstacle::Pallet { height: 0.12, length: 0.8 }, 1.0, 3.3), 102),
        WorldEntry::new("SU1", ObstacleSpec::new(up(0.15, 0.3, 3), 1.0, 3.0), 103),
        WorldEntry::new("SU2", ObstacleSpec::new(up(0.16, 0.3, 4), 1.0, 3.0), 104),
        WorldEntry::new("SU3", ObstacleSpec::new(up(0.13, 0.32, 2), 1.2, 3.0), 105),
        WorldEntry::new("SD1", ObstacleSpec::new(down(0.15, 0.3, 3), 1.0, 3.0), 106),
        WorldEntry::new("SD2", ObstacleSpec::new(down(0.16, 0.3, 4), 1.0, 3.0), 107),
        WorldEntry::new("SD3", ObstacleSpec::new(down(0.13, 0.32, 2), 1.2, 3.0), 108),
    ]
}

/// Six training worlds with obstacles distinct from the test set.
pub fn training_worlds() -> Vec<WorldEntry> {
    vec![
        WorldEntry::new("pallet", ObstacleSpec::new(Obstacle::Pallet { height: 0.1, length: 0.6 }, 0.9, 3.0), 1),
        WorldEntry::new("stairs_up", ObstacleSpec::new(Obstacle::StairsUp { riser: 0.15, tread: 0.3, steps: 3 }, 1.0, 3.0), 2),
        WorldEntry::new("stairs_down", ObstacleSpec::new(Obstacle::StairsDown { riser: 0.15, tread: 0.3, steps: 3 }, 1.0, 3.0), 3),
        WorldEntry::new("step_up", ObstacleSpec::new(Obstacle::StairsUp { riser: 0.12, tread: 0.3, steps: 1 }, 1.1, 3.0), 4),
        WorldEntry::new("step_down", ObstacleSpec::new(Obstacle::StairsDown { riser: 0.14, tread: 0.3, steps: 1 }, 1.1, 3.0), 5),
        WorldEntry::new(
            "rough",
            ObstacleSpec::new(
                Obstacle::Random {
                    amplitude: 0.1,
                    corr_length: 0.5,
                },
                0.8,
                3.0,
            ),
            6,
        ),
    ]
}

/// Long, steep staircase used to show the cost of fine time resolution.
pub fn hard_stair_world() -> WorldEntry {
    WorldEntry::new(
        "hard_stairs",
        ObstacleSpec::new(Obstacle::StairsUp { riser: 0.17, tread: 0.28, steps: 8 }, 1.0, 3.9),
        201,
    )
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PipelineConfig {
    /// Outer iterations.
    pub k: usize,
    pub training_worlds: Vec<WorldEntry>,
    pub test_worlds: Vec<WorldEntry>,
    /// Unguided planner for the initial plans.
    pub initial_plan: PlanConfig,
    /// Guided planner per iteration; the last entry repeats.
    pub iteration_plans: Vec<PlanConfig>,
    pub plans_per_world: usize,
    pub imitation: ImitationHyper,
    /// Candidate policies trained per iteration; the best by score is kept.
    pub policy_candidates: usize,
    /// Rollouts per test world when ranking candidates.
    pub selection_rollouts: usize,
    pub cgan: CganHyper,
    pub sense: SenseParams,
    /// Pseudo-real rollouts per training world.
    pub real_rollouts: usize,
    /// Simulated rollouts per training world.
    pub sim_rollouts: usize,
    /// Rollouts per test world in the reported evaluation.
    pub eval_rollouts: usize,
    /// Control period of policy rollouts (s).
    pub control_dt: f64,
    /// Simulated time budget as a multiple of `required_length / SPEED`.
    pub time_factor: f64,
    pub sim: SimConfig,
    pub seed: u64,
    /// Stop early once an iteration reaches this score sum.
    pub score_threshold: Option<f64>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let initial = PlanConfig {
            actions: 3,
            dt: 1.0,
            guide_bias: 0.0,
            max_expansions: 400,
            margin: 0.8,
            ..PlanConfig::default()
        };
        let guided3 = PlanConfig {
            guide_bias: 0.8,
            ..initial
        };
        let guided7 = PlanConfig {
            actions: 7,
            ..guided3
        };
        Self {
            k: 3,
            training_worlds: training_worlds(),
            test_worlds: test_worlds(),
            initial_plan: initial,
            iteration_plans: vec![guided3, guided3, guided7],
            plans_per_world: 12,
            imitation: ImitationHyper::default(),
            policy_candidates: 10,
            selection_rollouts: 4,
            cgan: CganHyper::default(),
            sense: SenseParams {
                noise_sigma: 0.02,
                dropout_base: 0.1,
                occlusion: true,
                seed: 0,
            },
            real_rollouts: 8,
            sim_rollouts: 8,
            eval_rollouts: 16,
            control_dt: 0.2,
            time_factor: 1.5,
            sim: SimConfig::default(),
            seed: 0,
            score_threshold: None,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: &str| Err(PipelineError::Config(String::from(m)));
        if self.k == 0 {
            return bad("k must be at least 1");
        }
        if self.training_worlds.is_empty() || self.test_worlds.is_empty() {
            return bad("training and test worlds must be non-empty");
        }
        if self.iteration_plans.is_empty() {
            return bad("at least one iteration planner config is required");
        }
        if self.plans_per_world == 0 || self.policy_candidates == 0 || self.eval_rollouts == 0 || self.selection_rollouts == 0 {
            return bad("counts must be positive");
        }
        if self.real_rollouts == 0 || self.sim_rollouts == 0 {
            return bad("rollout counts must be positive");
        }
        if !(self.control_dt > 0.0) || !(self.time_factor > 0.0) {
            return bad("control_dt and time_factor must be positive");
        }
        if !self.sense.is_valid() || !self.sim.limits.is_valid() {
            return bad("sensing or safety parameters out of range");
        }
        self.initial_plan.validate()?;
        for p in &self.iteration_plans {
            p.validate()?;
        }
        self.cgan.validate()?;
        for w in self.training_worlds.iter().chain(&self.test_worlds) {
            w.spec.validate()?;
        }
        Ok(())
    }

    fn plan_config(&self, k: usize) -> PlanConfig {
        self.iteration_plans[k.min(self.iteration_plans.len() - 1)]
    }

    pub fn time_budget(&self, world: &World) -> f64 {
        self.time_factor * world.required_length / SPEED
    }
}

/// Where the policy's observations come from during a rollout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Domain {
    SimIdeal,
    SimThroughG,
    PseudoReal,
}

/// Inputs shared by all rollouts of one batch.
#[derive(Debug, Clone, Copy)]
pub struct RolloutSetup<'a> {
    pub domain: Domain,
    pub generator: Option<&'a crate::cgan::Generator>,
    pub sense: &'a SenseParams,
    pub control_dt: f64,
    pub time_factor: f64,
    pub sim: &'a SimConfig,
}

/// Closed-loop policy rollout. Logged DEMs are those of the domain itself:
/// sensed for the pseudo-real domain, ideal otherwise (the policy may see a
/// generated version of them). `seed` drives the sensing noise.
pub fn rollout(world: &World, world_id: &str, policy: &PolicyNet, setup: &RolloutSetup<'_>, seed: u64, provenance: &str) -> Result<Trajectory, PipelineError> {
    let sim = setup.sim;
    let geometry = &sim.geometry;
    let budget = setup.time_factor * world.required_length / SPEED;
    let goal = world.goal_x() - 1e-9;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = initial_state(world, world.start_x, [0.0; 4], geometry)?;
    let mut steps = Vec::new();
    while s.x < goal && s.t < budget - 1e-9 {
        let ideal = extract_dem_sim(world, &s, geometry);
        let (logged, seen): (Dem, Dem) = match setup.domain {
            Domain::SimIdeal => (ideal, ideal),
            Domain::SimThroughG => (ideal, setup.generator.map_or(ideal, |g| g.apply(&ideal))),
            Domain::PseudoReal => {
                let d = sense_dem(&ideal, setup.sense, geometry, &mut rng);
                (d, d)
            }
        };
        let action = policy.act(&seen, geometry);
        let (next, event) = step(world, &s, &action, setup.control_dt, sim);
        steps.push(TrajectoryStep {
            state: s,
            dem: logged,
            action,
            event,
        });
        s = next;
        if !event.is_safe() {
            break;
        }
    }
    let mut states: Vec<_> = steps.iter().map(|t| t.state).collect();
    states.push(s);
    let events: Vec<_> = steps.iter().map(|t| t.event).collect();
    let verdict = check_safety(&states, &events, &sim.limits, world, budget);
    Ok(Trajectory {
        world_id: String::from(world_id),
        provenance: String::from(provenance),
        dt: setup.control_dt,
        steps,
        end: s,
        verdict,
    })
}

/// `n` rollouts on each world, in world-major order.
pub fn collect<E: Executor>(
    exec: &E,
    policy: &PolicyNet,
    setup: &RolloutSetup<'_>,
    worlds: &[(String, World)],
    n: usize,
    seed: u64,
    provenance: &str,
) -> Result<Vec<Trajectory>, PipelineError> {
    let job = |i: usize| {
        let (id, w) = &worlds[i / n];
        rollout(w, id, policy, setup, derive_seed(seed, 0, (i / n) as u64, (i % n) as u64), provenance)
    };
    exec.map(worlds.len() * n, &job).into_iter().collect()
}

/// Per-world mean verdict value and their sum.
pub fn score_verdicts(per_world: &[Vec<Verdict>]) -> (Vec<f64>, f64) {
    let scores: Vec<f64> = per_world
        .iter()
        .map(|v| {
            if v.is_empty() {
                0.0
            } else {
                v.iter().map(|x| x.value()).sum::<f64>() / v.len() as f64
            }
        })
        .collect();
    let sum = scores.iter().sum();
    (scores, sum)
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Evaluation {
    pub world_ids: Vec<String>,
    pub verdicts: Vec<Vec<Verdict>>,
    pub scores: Vec<f64>,
    pub sum: f64,
}

/// Pseudo-real rollouts of a frozen policy on every test world.
pub fn evaluate<E: Executor>(
    exec: &E,
    policy: &PolicyNet,
    worlds: &[(String, World)],
    cfg: &PipelineConfig,
    rollouts: usize,
    seed: u64,
) -> Result<Evaluation, PipelineError> {
    let setup = RolloutSetup {
        domain: Domain::PseudoReal,
        generator: None,
        sense: &cfg.sense,
        control_dt: cfg.control_dt,
        time_factor: cfg.time_factor,
        sim: &cfg.sim,
    };
    let trajs = collect(exec, policy, &setup, worlds, rollouts, seed, "eval")?;
    let verdicts: Vec<Vec<Verdict>> = trajs.chunks(rollouts).map(|c| c.iter().map(|t| t.verdict).collect()).collect();
    let (scores, sum) = score_verdicts(&verdicts);
    Ok(Evaluation {
        world_ids: worlds.iter().map(|(id, _)| id.clone()).collect(),
        verdicts,
        scores,
        sum,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PlanSummary {
    pub attempts: usize,
    pub found: usize,
    pub mean_expansions: f64,
}

fn summarize(stats: &[PlanStats]) -> PlanSummary {
    PlanSummary {
        attempts: stats.len(),
        found: stats.iter().filter(|s| s.found).count(),
        mean_expansions: if stats.is_empty() {
            0.0
        } else {
            stats.iter().map(|s| s.expansions as f64).sum::<f64>() / stats.len() as f64
        },
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct IterationReport {
    pub iteration: usize,
    pub world_ids: Vec<String>,
    pub scores: Vec<f64>,
    pub score_sum: f64,
    pub test_error: f64,
    pub chosen_candidate: usize,
    pub dataset_size: usize,
    pub plans: PlanSummary,
    pub cgan_final: LossRecord,
    /// Provenance tags of the data each stage consumed.
    pub policy_data: String,
    pub gan_data: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationOutput {
    pub report: IterationReport,
    pub plans: Vec<Trajectory>,
    pub policy: PolicyNet,
    pub sim_rollouts: Vec<Trajectory>,
    /// Generator pair after this iteration's GAN retraining.
    pub cgan: CycleGan,
    pub cgan_history: Vec<LossRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub initial_plans: Vec<Trajectory>,
    pub initial_policy: Option<PolicyNet>,
    pub real: Vec<Trajectory>,
    pub iterations: Vec<IterationOutput>,
}

impl PipelineOutput {
    pub fn reports(&self) -> Vec<IterationReport> {
        self.iterations.iter().map(|i| i.report.clone()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineFailure {
    pub error: PipelineError,
    pub partial: PipelineOutput,
}

fn generate_all(entries: &[WorldEntry]) -> Result<Vec<(String, World)>, PipelineError> {
    entries.iter().map(|e| Ok((e.id.clone(), e.generate()?))).collect()
}

/// Plans on every training world, `plans_per_world` seeds each.
fn plan_all<E: Executor>(
    exec: &E,
    worlds: &[(String, World)],
    cfg: &PipelineConfig,
    pcfg: &PlanConfig,
    guide: Option<&(dyn Guide + Sync)>,
    iteration: u64,
    clock: &(dyn Clock + Sync),
) -> Result<(Vec<Trajectory>, Vec<PlanStats>), PipelineError> {
    let n = cfg.plans_per_world;
    let job = |i: usize| {
        let (id, w) = &worlds[i / n];
        let c = PlanConfig {
            seed: derive_seed(cfg.seed, STREAM_PLAN, iteration, i as u64),
            ..*pcfg
        };
        plan(w, id, &c, &cfg.sim, guide.map(|g| g as &dyn Guide), clock)
    };
    let mut trajs = Vec::new();
    let mut stats = Vec::new();
    for r in exec.map(worlds.len() * n, &job) {
        let r = r?;
        stats.push(r.stats);
        if let Some(mut t) = r.trajectory {
            t.provenance = format!("plan/{iteration}");
            trajs.push(t);
        }
    }
    Ok((trajs, stats))
}

struct Selected {
    policy: PolicyNet,
    test_error: f64,
    index: usize,
}

/// Trains the candidate policies and keeps the one with the best selection
/// score (lowest index on ties).
fn train_candidates<E: Executor>(exec: &E, data: &ImitationDataset, cfg: &PipelineConfig, tests: &[(String, World)], iteration: u64) -> Result<Selected, PipelineError> {
    let select_seed = derive_seed(cfg.seed, STREAM_SELECT, iteration, 0);
    let job = |j: usize| -> Result<(PolicyNet, f64, f64), PipelineError> {
        let hyper = ImitationHyper {
            seed: derive_seed(cfg.seed, STREAM_POLICY, iteration, j as u64),
            ..cfg.imitation
        };
        let trained = train_imitation(data, &hyper)?;
        let eval = evaluate(&Sequential, &trained.policy, tests, cfg, cfg.selection_rollouts, select_seed)?;
        Ok((trained.policy, trained.test_error, eval.sum))
    };
    let mut best: Option<(Selected, f64)> = None;
    for (j, r) in exec.map(cfg.policy_candidates, &job).into_iter().enumerate() {
        let (policy, test_error, score) = r?;
        if best.as_ref().is_none_or(|(_, s)| score > *s) {
            best = Some((Selected { policy, test_error, index: j }, score));
        }
    }
    Ok(best.expect("at least one candidate").0)
}

fn gan_dems(trajs: &[Trajectory]) -> Vec<Dem> {
    trajs.iter().flat_map(|t| t.steps.iter().map(|s| s.dem)).collect()
}

/// Runs the full loop. On failure the iterations completed so far are
/// returned with the error.
pub fn run<E: Executor>(cfg: &PipelineConfig, exec: &E, clock: &(dyn Clock + Sync)) -> Result<PipelineOutput, PipelineFailure> {
    let mut out = PipelineOutput {
        initial_plans: Vec::new(),
        initial_policy: None,
        real: Vec::new(),
        iterations: Vec::new(),
    };
    match run_into(cfg, exec, clock, &mut out) {
        Ok(()) => Ok(out),
        Err(error) => Err(PipelineFailure { error, partial: out }),
    }
}

fn run_into<E: Executor>(cfg: &PipelineConfig, exec: &E, clock: &(dyn Clock + Sync), out: &mut PipelineOutput) -> Result<(), PipelineError> {
    cfg.validate()?;
    let train_worlds = generate_all(&cfg.training_worlds)?;
    let tests = generate_all(&cfg.test_worlds)?;
    let mut gan = CycleGan::new(&cfg.cgan)?;

    let (plans, _) = plan_all(exec, &train_worlds, cfg, &cfg.initial_plan, None, 0, clock)?;
    if plans.is_empty() {
        return Err(PipelineError::NoPlans(0));
    }
    let data = ImitationDataset::new(extract_dataset(&plans, Some(&gan.g)), derive_seed(cfg.seed, STREAM_SPLIT, 0, 0));
    out.initial_plans = plans;
    let mut policy = train_candidates(exec, &data, cfg, &tests, 0)?.policy;
    out.initial_policy = Some(policy.clone());

    let real_setup = RolloutSetup {
        domain: Domain::PseudoReal,
        generator: None,
        sense: &cfg.sense,
        control_dt: cfg.control_dt,
        time_factor: cfg.time_factor,
        sim: &cfg.sim,
    };
    out.real = collect(exec, &policy, &real_setup, &train_worlds, cfg.real_rollouts, derive_seed(cfg.seed, STREAM_REAL, 0, 0), "real/0")?;
    let real_dems = gan_dems(&out.real);

    for k in 0..cfg.k {
        let it = (k + 1) as u64;
        let guide = PolicyGuide {
            policy: &policy,
            generator: Some(&gan.g),
        };
        let (plans, stats) = plan_all(exec, &train_worlds, cfg, &cfg.plan_config(k), Some(&guide), it, clock)?;
        if plans.is_empty() {
            return Err(PipelineError::NoPlans(k + 1));
        }
        let pairs = extract_dataset(&plans, Some(&gan.g));
        let dataset_size = pairs.len();
        let data = ImitationDataset::new(pairs, derive_seed(cfg.seed, STREAM_SPLIT, it, 0));
        let chosen = train_candidates(exec, &data, cfg, &tests, it)?;
        policy = chosen.policy;

        let sim_setup = RolloutSetup {
            domain: Domain::SimThroughG,
            generator: Some(&gan.g),
            ..real_setup
        };
        let sim_rollouts = collect(exec, &policy, &sim_setup, &train_worlds, cfg.sim_rollouts, derive_seed(cfg.seed, STREAM_SIM, it, 0), &format!("sim/{it}"))?;
        let sim_dems = gan_dems(&sim_rollouts);
        if sim_dems.is_empty() || real_dems.is_empty() {
            return Err(PipelineError::NoGanData(k + 1));
        }
        let hyper = CganHyper {
            seed: derive_seed(cfg.seed, STREAM_GAN, it, 0),
            ..cfg.cgan
        };
        let trained = train_cyclegan(&real_dems, &sim_dems, &hyper)?;

        let eval = evaluate(exec, &policy, &tests, cfg, cfg.eval_rollouts, derive_seed(cfg.seed, STREAM_EVAL, 0, 0))?;
        let report = IterationReport {
            iteration: k + 1,
            world_ids: eval.world_ids,
            scores: eval.scores,
            score_sum: eval.sum,
            test_error: chosen.test_error,
            chosen_candidate: chosen.index,
            dataset_size,
            plans: summarize(&stats),
            cgan_final: trained.history.last().copied().unwrap_or_default(),
            policy_data: format!("plan/{it} via G{k}"),
            gan_data: format!("real/0 + sim/{it}"),
        };
        let done = cfg.score_threshold.is_some_and(|t| report.score_sum >= t);
        gan = trained.model.clone();
        out.iterations.push(IterationOutput {
            report,
            plans,
            policy: policy.clone(),
            sim_rollouts,
            cgan: trained.model,
            cgan_history: trained.history,
        });
        if done {
            break;
        }
    }
    Ok(())
}

/// One configuration of the planner benchmark.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BenchCase {
    pub label: usize,
    pub guided: bool,
    pub plan: PlanConfig,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BenchRow {
    pub label: usize,
    pub world_id: String,
    pub guided: bool,
    pub actions: usize,
    pub dt_ms: u64,
    pub runs: usize,
    pub found: usize,
    pub mean_expansions: f64,
    pub mean_seconds: f64,
}

/// Mean planner effort per (case, world) over `runs` seeds. Every found plan
/// is replayed; a plan that does not replay safely is an error.
pub fn bench_planner<E: Executor>(
    exec: &E,
    cases: &[BenchCase],
    worlds: &[(String, World)],
    guide: Option<&(dyn Guide + Sync)>,
    sim: &SimConfig,
    runs: usize,
    seed: u64,
    clock: &(dyn Fn() -> alloc::boxed::Box<dyn Clock> + Sync),
) -> Result<Vec<BenchRow>, PipelineError> {
    let per_case = worlds.len() * runs;
    let job = |i: usize| -> Result<PlanStats, PipelineError> {
        let case = &cases[i / per_case];
        let wi = (i % per_case) / runs;
        let r = i % runs;
        let (id, w) = &worlds[wi];
        let cfg = PlanConfig {
            seed: derive_seed(seed, case.label as u64, wi as u64, r as u64),
            ..case.plan
        };
        let c = clock();
        let g = if case.guided { guide.map(|g| g as &dyn Guide) } else { None };
        let res = plan(w, id, &cfg, sim, g, c.as_ref())?;
        if let Some(t) = &res.trajectory {
            let sound = t.replays(w, sim) && t.steps.iter().all(|s| s.event.is_safe()) && t.end.x >= w.goal_x() - 1e-9;
            if !sound {
                return Err(PipelineError::Config(format!("plan on {id} does not replay safely")));
            }
        }
        Ok(res.stats)
    };
    let stats: Vec<PlanStats> = exec.map(cases.len() * per_case, &job).into_iter().collect::<Result<_, _>>()?;
    let mut rows = Vec::new();
    for (ci, case) in cases.iter().enumerate() {
        for (wi, (id, _)) in worlds.iter().enumerate() {
            let chunk = &stats[ci * per_case + wi * runs..ci * per_case + (wi + 1) * runs];
            rows.push(BenchRow {
                label: case.label,
                world_id: id.clone(),
                guided: case.guided,
                actions: case.plan.actions,
                dt_ms: libm::round(case.plan.dt * 1000.0) as u64,
                runs,
                found: chunk.iter().filter(|s| s.found).count(),
                mean_expansions: chunk.iter().map(|s| s.expansions as f64).sum::<f64>() / runs as f64,
                mean_seconds: chunk.iter().map(|s| s.seconds).sum::<f64>() / runs as f64,
            });
        }
    }
    Ok(rows)
}

/// Mean over worlds of the per-world mean expansions for one case label.
pub fn mean_expansions(rows: &[BenchRow], label: usize) -> f64 {
    let sel: Vec<&BenchRow> = rows.iter().filter(|r| r.label == label).collect();
    sel.iter().map(|r| r.mean_expansions).sum::<f64>() / sel.len().max(1) as f64
}
