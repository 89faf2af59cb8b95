//! RRT over discrete flipper actions with optional policy guidance.
//!
//! Every expansion applies one action for `dt` seconds through the simulator.
//! Expansions that violate a hard limit or get stuck are discarded. The search
//! ends when a node reaches the goal, the expansion budget is spent, or the
//! clock passes the time limit.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{FRAC_PI_4, FRAC_PI_6};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::cgan::Generator;
use crate::policy::{ImitationPair, PolicyNet};
use crate::sim::{
    check_safety, extract_dem_sim, initial_state, step, Action, Flippers, RobotGeometry, RobotState, SimConfig, SimError,
    SafetyLimits, StepEvent, Trajectory, TrajectoryStep,
};
use crate::terrain::World;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error("invalid planner config: {0}")]
    Config(String),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Discrete flipper configurations the planner may command.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ActionSet {
    pub actions: Vec<Action>,
}

impl ActionSet {
    /// The 3-action set (flat, front up, rear up) or the 7-action set that
    /// adds all up, all down, front down / rear up and front up / rear down.
    pub fn standard(size: usize) -> Result<Self, PlanError> {
        let (u, d, z) = (FRAC_PI_4, -FRAC_PI_6, 0.0);
        let mut actions = vec![
            Action::new([z, z, z, z]),
            Action::new([u, u, z, z]),
            Action::new([z, z, u, u]),
        ];
        match size {
            3 => {}
            7 => actions.extend([
                Action::new([u, u, u, u]),
                Action::new([d, d, d, d]),
                Action::new([d, d, u, u]),
                Action::new([u, u, d, d]),
            ]),
            n => return Err(PlanError::Config(format!("no standard action set of size {n}"))),
        }
        Ok(Self { actions })
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// Index of the action closest (L2 over the four angles) to `target`;
    /// the lowest index wins ties.
    pub fn nearest(&self, target: &Flippers) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, a) in self.actions.iter().enumerate() {
            let d: f64 = a.targets.iter().zip(target).map(|(x, y)| (x - y) * (x - y)).sum();
            if d < best_d {
                best = i;
                best_d = d;
            }
        }
        best
    }
}

/// Per-coordinate scales of the state-space distance used for nearest-node
/// selection: `Σ (w·Δ)²`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DistanceWeights {
    pub x: f64,
    pub pitch: f64,
    pub flipper: f64,
}

impl Default for DistanceWeights {
    fn default() -> Self {
        Self {
            x: 1.0,
            pitch: 0.5,
            flipper: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PlanConfig {
    pub actions: usize,
    pub dt: f64,
    /// Seconds as measured by the [`Clock`] passed to [`plan`].
    pub time_limit: f64,
    pub max_expansions: usize,
    pub guide_bias: f64,
    /// Fraction of the hard safety limits an expansion may use; 0.8 keeps
    /// plans inside the soft limits.
    pub margin: f64,
    pub weights: DistanceWeights,
    pub seed: u64,
}

impl Default for PlanConfig {
    fn default() -> Self {
        Self {
            actions: 3,
            dt: 1.0,
            time_limit: 60.0,
            max_expansions: 5000,
            guide_bias: 0.8,
            margin: 1.0,
            weights: DistanceWeights::default(),
            seed: 0,
        }
    }
}

impl PlanConfig {
    pub fn validate(&self) -> Result<ActionSet, PlanError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(PlanError::Config(String::from("dt must be positive")));
        }
        if !(0.0..=1.0).contains(&self.guide_bias) {
            return Err(PlanError::Config(String::from("guide_bias must lie in [0, 1]")));
        }
        if !(self.margin > 0.0 && self.margin <= 1.0) {
            return Err(PlanError::Config(String::from("margin must lie in (0, 1]")));
        }
        if !(self.time_limit >= 0.0) {
            return Err(PlanError::Config(String::from("time_limit must be non-negative")));
        }
        ActionSet::standard(self.actions)
    }
}

/// Source of elapsed time for the time limit.
pub trait Clock {
    fn elapsed(&self) -> f64;
}

/// A clock that never advances; only the expansion budget applies.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoClock;

impl Clock for NoClock {
    fn elapsed(&self) -> f64 {
        0.0
    }
}

/// Suggests flipper targets for a planner state.
pub trait Guide {
    fn suggest(&self, world: &World, state: &RobotState, geometry: &RobotGeometry) -> Flippers;
}

/// `π(G(dem))` on the ideal simulator DEM of the node.
#[derive(Debug, Clone, Copy)]
pub struct PolicyGuide<'a> {
    pub policy: &'a PolicyNet,
    pub generator: Option<&'a Generator>,
}

impl Guide for PolicyGuide<'_> {
    fn suggest(&self, world: &World, state: &RobotState, geometry: &RobotGeometry) -> Flippers {
        let dem = extract_dem_sim(world, state, geometry);
        let obs = match self.generator {
            Some(g) => g.apply(&dem),
            None => dem,
        };
        self.policy.act(&obs, geometry).targets
    }
}

/// With probability `guide_bias` and a suggestion present, the action nearest
/// the suggestion; otherwise a uniform draw.
pub fn select_action<R: Rng + ?Sized>(set: &ActionSet, suggestion: Option<&Flippers>, guide_bias: f64, rng: &mut R) -> usize {
    if let Some(target) = suggestion {
        if rng.random::<f64>() < guide_bias {
            return set.nearest(target);
        }
    }
    rng.random_range(0..set.len())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanNode {
    pub state: RobotState,
    pub parent: Option<usize>,
    pub action: Option<usize>,
    pub depth: usize,
    tried: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PlanStats {
    pub expansions: usize,
    pub nodes: usize,
    pub seconds: f64,
    pub found: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanResult {
    pub trajectory: Option<Trajectory>,
    pub stats: PlanStats,
    pub tree: Vec<PlanNode>,
}

/// Plans from the world's start pose with flat flippers.
pub fn plan(world: &World, world_id: &str, cfg: &PlanConfig, sim: &SimConfig, guide: Option<&dyn Guide>, clock: &dyn Clock) -> Result<PlanResult, PlanError> {
    let start = initial_state(world, world.start_x, [0.0; 4], &sim.geometry)?;
    plan_from(world, world_id, start, cfg, sim, guide, clock)
}

pub fn plan_from(
    world: &World,
    world_id: &str,
    start: RobotState,
    cfg: &PlanConfig,
    sim: &SimConfig,
    guide: Option<&dyn Guide>,
    clock: &dyn Clock,
) -> Result<PlanResult, PlanError> {
    let set = cfg.validate()?;
    let all_tried = (1u32 << set.len()) - 1;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let geometry = &sim.geometry;
    let goal = world.goal_x() - 1e-9;
    let w = cfg.weights;

    let mut tree = vec![PlanNode {
        state: start,
        parent: None,
        action: None,
        depth: 0,
        tried: 0,
    }];
    let mut stats = PlanStats::default();
    let finish = |tree: Vec<PlanNode>, mut stats: PlanStats, leaf: Option<usize>| {
        stats.nodes = tree.len();
        stats.seconds = clock.elapsed();
        stats.found = leaf.is_some();
        let trajectory = leaf.map(|l| build_trajectory(world, world_id, &tree, l, &set, cfg.dt, sim));
        PlanResult { trajectory, stats, tree }
    };
    if start.x >= goal {
        return Ok(finish(tree, stats, Some(0)));
    }

    let lim = sim.limits.max_pitch;
    loop {
        if stats.expansions >= cfg.max_expansions || clock.elapsed() > cfg.time_limit {
            return Ok(finish(tree, stats, None));
        }
        let sample_x = rng.random_range(0.0..=world.extent());
        let sample_pitch = rng.random_range(-lim..=lim);
        let mut sample_f = [0.0; 4];
        for f in &mut sample_f {
            *f = rng.random_range(geometry.flipper_min..=geometry.flipper_max);
        }
        let mut nearest = None;
        let mut best = f64::INFINITY;
        for (i, n) in tree.iter().enumerate() {
            if n.tried == all_tried {
                continue;
            }
            let s = &n.state;
            let sq = |wi: f64, a: f64, b: f64| (wi * (a - b)) * (wi * (a - b));
            let mut d = sq(w.x, s.x, sample_x) + sq(w.pitch, s.pitch, sample_pitch);
            for (a, b) in s.flippers.iter().zip(&sample_f) {
                d += sq(w.flipper, *a, *b);
            }
            if d < best {
                best = d;
                nearest = Some(i);
            }
        }
        let Some(ni) = nearest else {
            // every reachable node has tried every action
            return Ok(finish(tree, stats, None));
        };
        let suggestion = guide.map(|g| g.suggest(world, &tree[ni].state, geometry));
        let mut ai = select_action(&set, suggestion.as_ref(), cfg.guide_bias, &mut rng);
        if tree[ni].tried & (1 << ai) != 0 {
            ai = (!tree[ni].tried).trailing_zeros() as usize;
        }
        tree[ni].tried |= 1 << ai;
        let (next, event) = step(world, &tree[ni].state, &set.actions[ai], cfg.dt, sim);
        stats.expansions += 1;
        if !within_margin(&event, &sim.limits, cfg.margin) {
            continue;
        }
        tree.push(PlanNode {
            state: next,
            parent: Some(ni),
            action: Some(ai),
            depth: tree[ni].depth + 1,
            tried: 0,
        });
        if next.x >= goal {
            let leaf = tree.len() - 1;
            return Ok(finish(tree, stats, Some(leaf)));
        }
    }
}

fn within_margin(e: &StepEvent, limits: &SafetyLimits, margin: f64) -> bool {
    e.is_safe()
        && (margin >= 1.0
            || (e.peak_accel <= margin * limits.max_accel
                && e.peak_pitch <= margin * limits.max_pitch
                && e.min_clearance >= limits.body_clearance / margin))
}

/// Action indices from the root to `leaf`.
pub fn action_path(tree: &[PlanNode], leaf: usize) -> Vec<usize> {
    let mut path = Vec::new();
    let mut i = leaf;
    while let (Some(p), Some(a)) = (tree[i].parent, tree[i].action) {
        path.push(a);
        i = p;
    }
    path.reverse();
    path
}

fn build_trajectory(world: &World, world_id: &str, tree: &[PlanNode], leaf: usize, actions: &ActionSet, dt: f64, sim: &SimConfig) -> Trajectory {
    let mut chain = Vec::new();
    let mut i = leaf;
    while let Some(p) = tree[i].parent {
        chain.push(i);
        i = p;
    }
    chain.reverse();
    let mut steps = Vec::with_capacity(chain.len());
    let mut state = tree[0].state;
    for &c in &chain {
        let action = actions.actions[tree[c].action.expect("non-root node has an action")];
        let (next, event) = step(world, &state, &action, dt, sim);
        steps.push(TrajectoryStep {
            state,
            dem: extract_dem_sim(world, &state, &sim.geometry),
            action,
            event,
        });
        state = next;
    }
    let mut states: Vec<RobotState> = steps.iter().map(|s| s.state).collect();
    states.push(state);
    let events: Vec<_> = steps.iter().map(|s| s.event).collect();
    let verdict = check_safety(&states, &events, &sim.limits, world, f64::INFINITY);
    Trajectory {
        world_id: String::from(world_id),
        provenance: String::from("plan"),
        dt,
        steps,
        end: state,
        verdict,
    }
}

/// One imitation pair per planner step. Observations are the logged DEMs,
/// passed through `generator` when given.
pub fn extract_dataset(trajectories: &[Trajectory], generator: Option<&Generator>) -> Vec<ImitationPair> {
    trajectories
        .iter()
        .flat_map(|t| t.steps.iter())
        .map(|s| ImitationPair {
            obs: match generator {
                Some(g) => g.apply(&s.dem),
                None => s.dem,
            },
            action: s.action,
        })
        .collect()
}
