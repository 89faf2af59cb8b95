//! NaN-aware flipper policy: two masked convolution branches multiplied
//! together, the five scalars appended, and a small dense head.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::nnkit::{adam_step, AdamState, Architecture, LayerKind, Net, NnError, Source, Tensor};
use crate::sim::{Action, Dem, Flippers, RobotGeometry, DEM_CELLS, DEM_COLS, DEM_ROWS};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolicyError {
    #[error("training split is empty")]
    EmptyTrainSplit,
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("invalid hyperparameters: {0}")]
    Hyper(String),
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// Network input: a possibly NaN-bearing DEM with its scalar channels.
pub type Observation = Dem;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PolicyArch {
    pub filters: usize,
    pub kernel: usize,
    pub hidden: usize,
    pub leak: f64,
}

impl Default for PolicyArch {
    fn default() -> Self {
        Self {
            filters: 8,
            kernel: 3,
            hidden: 64,
            leak: 0.01,
        }
    }
}

impl PolicyArch {
    pub fn architecture(&self) -> Architecture {
        let grid = vec![1, DEM_ROWS, DEM_COLS];
        let mut a = Architecture::new(vec![grid.clone(), grid, vec![5]]);
        let conv = LayerKind::Conv2d {
            in_channels: 1,
            out_channels: self.filters,
            kernel: self.kernel,
        };
        let values = a.push(conv, &[Source::Input(0)]);
        let mask = a.push(conv, &[Source::Input(1)]);
        let prod = a.push(LayerKind::Multiply, &[values, mask]);
        let flat = a.push(LayerKind::Flatten, &[prod]);
        let cat = a.push(LayerKind::Concat, &[flat, Source::Input(2)]);
        let hidden = a.push(
            LayerKind::FullyConnected {
                inputs: self.filters * DEM_CELLS + 5,
                outputs: self.hidden,
            },
            &[cat],
        );
        let hidden = a.push(LayerKind::LeakyRelu { slope: self.leak }, &[hidden]);
        a.push(
            LayerKind::FullyConnected {
                inputs: self.hidden,
                outputs: 4,
            },
            &[hidden],
        );
        a
    }
}

/// Splits a DEM into measured values (NaN replaced by 0) and a 1/0 mask.
pub fn preprocess(dem: &Dem) -> (Tensor, Tensor) {
    let mut values = vec![0.0; DEM_CELLS];
    let mut mask = vec![0.0; DEM_CELLS];
    for (k, &c) in dem.cells.iter().enumerate() {
        if !c.is_nan() {
            values[k] = c;
            mask[k] = 1.0;
        }
    }
    (
        Tensor::new(vec![1, DEM_ROWS, DEM_COLS], values),
        Tensor::new(vec![1, DEM_ROWS, DEM_COLS], mask),
    )
}

fn net_inputs(obs: &Observation) -> [Tensor; 3] {
    let (values, mask) = preprocess(obs);
    [values, mask, Tensor::vector(obs.scalars().to_vec())]
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNet {
    pub arch: PolicyArch,
    pub net: Net,
}

impl PolicyNet {
    pub fn new(arch: PolicyArch, seed: u64) -> Result<Self, PolicyError> {
        Ok(Self {
            arch,
            net: Net::new(arch.architecture(), seed)?,
        })
    }

    /// Unclamped network output.
    pub fn raw(&self, obs: &Observation) -> Flippers {
        let y = self.net.infer(&net_inputs(obs)).expect("policy input shapes are fixed");
        [y.data[0], y.data[1], y.data[2], y.data[3]]
    }

    /// Flipper targets clamped to the mechanical range.
    pub fn act(&self, obs: &Observation, geometry: &RobotGeometry) -> Action {
        let raw = self.raw(obs);
        Action::new(raw.map(|a| if a.is_finite() { geometry.clamp_flipper(a) } else { 0.0 }))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ImitationPair {
    pub obs: Observation,
    pub action: Action,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ImitationDataset {
    pub pairs: Vec<ImitationPair>,
    pub split_seed: u64,
    pub train_fraction: f64,
}

impl ImitationDataset {
    pub fn new(pairs: Vec<ImitationPair>, split_seed: u64) -> Self {
        Self {
            pairs,
            split_seed,
            train_fraction: 0.8,
        }
    }

    /// Deterministic partition into (train, test) indices.
    pub fn split(&self) -> (Vec<usize>, Vec<usize>) {
        let mut idx: Vec<usize> = (0..self.pairs.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(self.split_seed));
        let n_train = libm::round(self.pairs.len() as f64 * self.train_fraction) as usize;
        let n_train = n_train.min(self.pairs.len());
        let test = idx.split_off(n_train);
        (idx, test)
    }
}

/// Mean L2 norm of `π(x) − a`. Observations are used as given; callers apply
/// the generator beforehand.
pub fn imitation_loss(policy: &PolicyNet, batch: &[ImitationPair]) -> f64 {
    if batch.is_empty() {
        return 0.0;
    }
    let total: f64 = batch
        .iter()
        .map(|p| {
            let y = policy.raw(&p.obs);
            l2(&y, &p.action.targets)
        })
        .sum();
    total / batch.len() as f64
}

fn l2(y: &Flippers, a: &Flippers) -> f64 {
    libm::sqrt(y.iter().zip(a).map(|(u, v)| (u - v) * (u - v)).sum())
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ImitationHyper {
    pub arch: PolicyArch,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub clip_norm: f64,
    pub seed: u64,
}

impl Default for ImitationHyper {
    fn default() -> Self {
        Self {
            arch: PolicyArch::default(),
            epochs: 30,
            batch: 16,
            lr: 2e-3,
            clip_norm: 5.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedPolicy {
    pub policy: PolicyNet,
    pub optimizer: AdamState,
    pub test_error: f64,
    pub train_loss: Vec<f64>,
}

/// Accumulates the gradient of the mean L2 loss over `batch` into the net.
fn accumulate(policy: &mut PolicyNet, batch: &[&ImitationPair]) -> Result<f64, PolicyError> {
    let scale = 1.0 / batch.len() as f64;
    let mut total = 0.0;
    for p in batch {
        let y = policy.net.forward(&net_inputs(&p.obs))?;
        let diff: Vec<f64> = y.data.iter().zip(&p.action.targets).map(|(u, v)| u - v).collect();
        let norm = libm::sqrt(diff.iter().map(|d| d * d).sum());
        total += norm;
        if norm > 0.0 {
            let g = diff.iter().map(|d| d / norm * scale).collect();
            policy.net.backward(&Tensor::vector(g))?;
        }
    }
    Ok(total * scale)
}

/// Trains with Adam on the training split and reports the held-out error.
/// When the test split is empty the training error is reported instead.
pub fn train_imitation(data: &ImitationDataset, hyper: &ImitationHyper) -> Result<TrainedPolicy, PolicyError> {
    if data.pairs.is_empty() {
        return Err(PolicyError::EmptyDataset);
    }
    if hyper.batch == 0 || !(hyper.lr > 0.0) {
        return Err(PolicyError::Hyper(String::from("batch and lr must be positive")));
    }
    let (train, test) = data.split();
    if train.is_empty() {
        return Err(PolicyError::EmptyTrainSplit);
    }
    let mut policy = PolicyNet::new(hyper.arch, hyper.seed)?;
    let mut opt = AdamState::new(&policy.net, hyper.lr);
    opt.clip_norm = hyper.clip_norm;
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed ^ 0x5eed_0f_1a1e);
    let mut order = train.clone();
    let mut history = Vec::with_capacity(hyper.epochs);
    for _ in 0..hyper.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(hyper.batch) {
            let batch: Vec<&ImitationPair> = chunk.iter().map(|&i| &data.pairs[i]).collect();
            policy.net.zero_grads();
            epoch_loss += accumulate(&mut policy, &batch)? * batch.len() as f64;
            adam_step(&mut opt, &mut policy.net)?;
        }
        history.push(epoch_loss / order.len() as f64);
    }
    let eval: Vec<ImitationPair> = if test.is_empty() { &train } else { &test }.iter().map(|&i| data.pairs[i]).collect();
    let test_error = imitation_loss(&policy, &eval);
    Ok(TrainedPolicy {
        policy,
        optimizer: opt,
        test_error,
        train_loss: history,
    })
}
