//! CycleGAN over DEM observations.
//!
//! A DEM is encoded as a `[2, 20, 5]` grid (heights with NaN replaced by 0, and
//! a mask holding -1 at NaN cells and +1 elsewhere) plus the five scalars.
//! Generators add a skip path from their raw input straight into the final
//! fully connected layer, which makes an exact identity initialisation
//! possible.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::nnkit::{adam_step, AdamState, Architecture, LayerKind, Net, NnError, Source, Tensor};
use crate::sim::{Dem, DEM_CELLS, DEM_COLS, DEM_ROWS};

/// Encoded entries per sample: two grid channels plus five scalars.
pub const ENCODED_LEN: usize = 2 * DEM_CELLS + 5;

const D_MIN: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CganError {
    #[error("generator has no skip connection into its output layer")]
    NoSkip,
    #[error("{0} dataset is empty")]
    EmptyDataset(&'static str),
    #[error("invalid hyperparameters: {0}")]
    Hyper(String),
    #[error(transparent)]
    Nn(#[from] NnError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemTensor {
    /// `[2, 20, 5]`: heights, then mask.
    pub grid: Tensor,
    pub scalars: Tensor,
}

impl DemTensor {
    fn inputs(&self) -> [Tensor; 2] {
        [self.grid.clone(), self.scalars.clone()]
    }

    fn from_flat(data: &[f64]) -> Self {
        Self {
            grid: Tensor::new(vec![2, DEM_ROWS, DEM_COLS], data[..2 * DEM_CELLS].to_vec()),
            scalars: Tensor::vector(data[2 * DEM_CELLS..].to_vec()),
        }
    }

    fn flat(&self) -> Vec<f64> {
        let mut v = self.grid.data.clone();
        v.extend_from_slice(&self.scalars.data);
        v
    }
}

pub fn encode(dem: &Dem) -> DemTensor {
    let mut grid = vec![0.0; 2 * DEM_CELLS];
    for (k, &c) in dem.cells.iter().enumerate() {
        if c.is_nan() {
            grid[DEM_CELLS + k] = -1.0;
        } else {
            grid[k] = c;
            grid[DEM_CELLS + k] = 1.0;
        }
    }
    DemTensor {
        grid: Tensor::new(vec![2, DEM_ROWS, DEM_COLS], grid),
        scalars: Tensor::vector(dem.scalars().to_vec()),
    }
}

/// Inverse of [`encode`]; a cell is NaN where `tanh(mask) < 0`.
pub fn decode(t: &DemTensor) -> Dem {
    let mut dem = Dem::filled(0.0);
    for k in 0..DEM_CELLS {
        dem.cells[k] = if libm::tanh(t.grid.data[DEM_CELLS + k]) < 0.0 {
            f64::NAN
        } else {
            t.grid.data[k]
        };
    }
    let s = &t.scalars.data;
    dem.pitch = s[0];
    dem.flippers = [s[1], s[2], s[3], s[4]];
    dem
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CganArch {
    pub gen_filters: usize,
    pub disc_filters: usize,
    pub disc_hidden: usize,
    pub kernel: usize,
    pub leak: f64,
}

impl Default for CganArch {
    fn default() -> Self {
        Self {
            gen_filters: 4,
            disc_filters: 4,
            disc_hidden: 16,
            kernel: 3,
            leak: 0.01,
        }
    }
}

impl CganArch {
    pub fn generator(&self) -> Architecture {
        let mut a = Architecture::new(vec![vec![2, DEM_ROWS, DEM_COLS], vec![5]]);
        let c = a.push(
            LayerKind::Conv2d {
                in_channels: 2,
                out_channels: self.gen_filters,
                kernel: self.kernel,
            },
            &[Source::Input(0)],
        );
        let c = a.push(LayerKind::LeakyRelu { slope: self.leak }, &[c]);
        let f = a.push(LayerKind::Flatten, &[c]);
        let cat = a.push(LayerKind::Concat, &[f, Source::Input(0), Source::Input(1)]);
        a.push(
            LayerKind::FullyConnected {
                inputs: self.gen_filters * DEM_CELLS + ENCODED_LEN,
                outputs: ENCODED_LEN,
            },
            &[cat],
        );
        a
    }

    pub fn discriminator(&self) -> Architecture {
        let mut a = Architecture::new(vec![vec![2, DEM_ROWS, DEM_COLS], vec![5]]);
        let c = a.push(
            LayerKind::Conv2d {
                in_channels: 2,
                out_channels: self.disc_filters,
                kernel: self.kernel,
            },
            &[Source::Input(0)],
        );
        let c = a.push(LayerKind::LeakyRelu { slope: self.leak }, &[c]);
        let f = a.push(LayerKind::Flatten, &[c]);
        let cat = a.push(LayerKind::Concat, &[f, Source::Input(1)]);
        let h = a.push(
            LayerKind::FullyConnected {
                inputs: self.disc_filters * DEM_CELLS + 5,
                outputs: self.disc_hidden,
            },
            &[cat],
        );
        let h = a.push(LayerKind::LeakyRelu { slope: self.leak }, &[h]);
        let o = a.push(
            LayerKind::FullyConnected {
                inputs: self.disc_hidden,
                outputs: 1,
            },
            &[h],
        );
        a.push(LayerKind::Sigmoid, &[o]);
        a
    }
}

/// Sets the output layer so that the network returns its raw input exactly:
/// identity weights on the skip inputs, zeros elsewhere. Earlier layers keep
/// their random weights.
pub fn init_identity(net: &mut Net) -> Result<(), CganError> {
    let last = net.arch.nodes.len().checked_sub(1).ok_or(CganError::NoSkip)?;
    let LayerKind::FullyConnected { inputs, outputs } = net.arch.nodes[last].kind else {
        return Err(CganError::NoSkip);
    };
    let Source::Node(cat) = net.arch.nodes[last].inputs[0] else {
        return Err(CganError::NoSkip);
    };
    let node = &net.arch.nodes[cat];
    let n_in = net.arch.input_shapes.len();
    if node.kind != LayerKind::Concat || node.inputs.len() < n_in {
        return Err(CganError::NoSkip);
    }
    let tail = &node.inputs[node.inputs.len() - n_in..];
    if tail.iter().enumerate().any(|(i, s)| *s != Source::Input(i)) {
        return Err(CganError::NoSkip);
    }
    let skip: usize = net.arch.input_shapes.iter().map(|s| s.iter().product::<usize>()).sum();
    if skip != outputs {
        return Err(CganError::NoSkip);
    }
    let offset = inputs - skip;
    let w = &mut net.params[last][0].data;
    w.iter_mut().for_each(|v| *v = 0.0);
    for o in 0..outputs {
        w[o * inputs + offset + o] = 1.0;
    }
    net.params[last][1].data.iter_mut().for_each(|v| *v = 0.0);
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub net: Net,
}

impl Generator {
    pub fn identity(arch: &CganArch, seed: u64) -> Result<Self, CganError> {
        let mut net = Net::new(arch.generator(), seed)?;
        init_identity(&mut net)?;
        Ok(Self { net })
    }

    pub fn forward(&self, x: &DemTensor) -> DemTensor {
        let y = self.net.infer(&x.inputs()).expect("generator input shapes are fixed");
        DemTensor::from_flat(&y.data)
    }

    /// `decode(G(encode(dem)))`.
    pub fn apply(&self, dem: &Dem) -> Dem {
        decode(&self.forward(&encode(dem)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Discriminator {
    pub net: Net,
}

impl Discriminator {
    pub fn new(arch: &CganArch, seed: u64) -> Result<Self, CganError> {
        Ok(Self {
            net: Net::new(arch.discriminator(), seed)?,
        })
    }

    /// Probability that `x` comes from this discriminator's target domain,
    /// clamped to `[1e-7, 1 - 1e-7]`.
    pub fn score(&self, x: &DemTensor) -> f64 {
        let y = self.net.infer(&x.inputs()).expect("discriminator input shapes are fixed");
        y.data[0].clamp(D_MIN, 1.0 - D_MIN)
    }
}

/// Sign convention of the adversarial generator term.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum AdversarialForm {
    /// `-λ·log D(G(x))`.
    NonSaturating,
    /// `+λ·log D(G(x))`, exactly as printed in the original formula.
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CganHyper {
    pub arch: CganArch,
    pub lambda: f64,
    pub lambda_p: f64,
    pub lambda_c: f64,
    pub lambda_nan: f64,
    pub lr_g: f64,
    pub lr_d: f64,
    pub steps: usize,
    pub batch: usize,
    pub seed: u64,
    pub form: AdversarialForm,
}

impl Default for CganHyper {
    fn default() -> Self {
        Self {
            arch: CganArch::default(),
            lambda: 1.0,
            lambda_p: 10.0,
            lambda_c: 1.0,
            lambda_nan: 10.0,
            lr_g: 5e-4,
            lr_d: 5e-4,
            steps: 300,
            batch: 8,
            seed: 0,
            form: AdversarialForm::NonSaturating,
        }
    }
}

impl CganHyper {
    pub fn validate(&self) -> Result<(), CganError> {
        let weights = [self.lambda, self.lambda_p, self.lambda_c, self.lambda_nan];
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(CganError::Hyper(String::from("loss weights must be finite and non-negative")));
        }
        if !(self.lr_g > 0.0 && self.lr_d > 0.0) || self.batch == 0 {
            return Err(CganError::Hyper(String::from("learning rates and batch must be positive")));
        }
        Ok(())
    }

    fn adv(&self, d: f64) -> f64 {
        match self.form {
            AdversarialForm::NonSaturating => -self.lambda * libm::log(d),
            AdversarialForm::Literal => self.lambda * libm::log(d),
        }
    }

    /// Derivative of [`CganHyper::adv`] with respect to the unclamped output.
    fn adv_grad(&self, raw: f64) -> f64 {
        if !(D_MIN..=1.0 - D_MIN).contains(&raw) {
            return 0.0;
        }
        match self.form {
            AdversarialForm::NonSaturating => -self.lambda / raw,
            AdversarialForm::Literal => self.lambda / raw,
        }
    }
}

/// `−[mean log D(real) + mean log(1 − D(fake))]`.
pub fn d_loss(d: &Discriminator, real: &[DemTensor], fake: &[DemTensor]) -> f64 {
    let r: f64 = real.iter().map(|x| libm::log(d.score(x))).sum::<f64>() / real.len() as f64;
    let f: f64 = fake.iter().map(|x| libm::log(1.0 - d.score(x))).sum::<f64>() / fake.len() as f64;
    -(r + f)
}

/// Mean absolute difference per encoded entry.
pub fn pixel_l1(x: &DemTensor, y: &DemTensor) -> f64 {
    let a = x.flat();
    let b = y.flat();
    a.iter().zip(&b).map(|(u, v)| libm::fabs(u - v)).sum::<f64>() / ENCODED_LEN as f64
}

/// Mean of `max(0, -mask)` over the generated mask channel.
pub fn nan_penalty(y: &DemTensor) -> f64 {
    y.grid.data[DEM_CELLS..].iter().map(|m| (-m).max(0.0)).sum::<f64>() / DEM_CELLS as f64
}

/// Generator objective on one batch of its source domain, without the cycle
/// term: adversarial, pixel, and (when `penalize_nan`) the NaN penalty.
pub fn g_loss(g: &Generator, d: &Discriminator, batch: &[DemTensor], hyper: &CganHyper, penalize_nan: bool) -> f64 {
    let mut total = 0.0;
    for x in batch {
        let y = g.forward(x);
        total += hyper.adv(d.score(&y)) + hyper.lambda_p * pixel_l1(x, &y);
        if penalize_nan {
            total += hyper.lambda_nan * nan_penalty(&y);
        }
    }
    total / batch.len() as f64
}

/// `L_D(G(G_s(x_r))) + L_Ds(G_s(G(x_s)))`, each reconstruction scored by the
/// adversarial term of the discriminator of its domain.
pub fn cycle_loss(
    g: &Generator,
    g_s: &Generator,
    d: &Discriminator,
    d_s: &Discriminator,
    real: &[DemTensor],
    sim: &[DemTensor],
    hyper: &CganHyper,
) -> f64 {
    let r: f64 = real.iter().map(|x| hyper.adv(d.score(&g.forward(&g_s.forward(x))))).sum::<f64>() / real.len() as f64;
    let s: f64 = sim.iter().map(|x| hyper.adv(d_s.score(&g_s.forward(&g.forward(x))))).sum::<f64>() / sim.len() as f64;
    r + s
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LossRecord {
    pub step: usize,
    pub l_d: f64,
    pub l_ds: f64,
    pub l_g: f64,
    pub l_gs: f64,
    pub l_cycle: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CycleGan {
    /// Sim to real.
    pub g: Generator,
    /// Real to sim.
    pub g_s: Generator,
    /// Scores "real".
    pub d: Discriminator,
    /// Scores "sim".
    pub d_s: Discriminator,
}

impl CycleGan {
    pub fn new(hyper: &CganHyper) -> Result<Self, CganError> {
        let s = hyper.seed;
        Ok(Self {
            g: Generator::identity(&hyper.arch, s.wrapping_mul(4))?,
            g_s: Generator::identity(&hyper.arch, s.wrapping_mul(4).wrapping_add(1))?,
            d: Discriminator::new(&hyper.arch, s.wrapping_mul(4).wrapping_add(2))?,
            d_s: Discriminator::new(&hyper.arch, s.wrapping_mul(4).wrapping_add(3))?,
        })
    }

    pub fn zero_grads(&mut self) {
        self.g.net.zero_grads();
        self.g_s.net.zero_grads();
        self.d.net.zero_grads();
        self.d_s.net.zero_grads();
    }

    /// Discriminator losses `(L_D, L_Ds)` for one batch pair, accumulating
    /// their gradients into the discriminators.
    pub fn discriminator_pass(&mut self, real: &[DemTensor], sim: &[DemTensor]) -> Result<(f64, f64), CganError> {
        let fake_real: Vec<DemTensor> = sim.iter().map(|x| self.g.forward(x)).collect();
        let fake_sim: Vec<DemTensor> = real.iter().map(|x| self.g_s.forward(x)).collect();
        let l_d = disc_pass(&mut self.d.net, real, &fake_real)?;
        let l_ds = disc_pass(&mut self.d_s.net, sim, &fake_sim)?;
        Ok((l_d, l_ds))
    }

    /// Generator losses `(L_G, L_Gs, L_cycle)` for one batch pair. `L_G` and
    /// `L_Gs` include `λ_c·L_cycle`. Gradients of `L_G + L_Gs − λ_c·L_cycle`
    /// (each generator's own objective) accumulate into the generators;
    /// discriminator gradients are left dirty.
    pub fn generator_pass(&mut self, real: &[DemTensor], sim: &[DemTensor], hyper: &CganHyper) -> Result<(f64, f64, f64), CganError> {
        let ns = 1.0 / sim.len() as f64;
        let nr = 1.0 / real.len() as f64;
        let mut l_g = 0.0;
        let mut l_gs = 0.0;
        for x in sim {
            l_g += ns * translate_pass(&mut self.g.net, &mut self.d.net, x, hyper, false, ns)?;
        }
        for x in real {
            l_gs += nr * translate_pass(&mut self.g_s.net, &mut self.d_s.net, x, hyper, true, nr)?;
        }
        let mut cycle = 0.0;
        let wc = hyper.lambda_c;
        for x in real {
            cycle += nr * cycle_pass(&mut self.g_s.net, &mut self.g.net, &mut self.d.net, x, hyper, wc * nr)?;
        }
        for x in sim {
            cycle += ns * cycle_pass(&mut self.g.net, &mut self.g_s.net, &mut self.d_s.net, x, hyper, wc * ns)?;
        }
        Ok((l_g + wc * cycle, l_gs + wc * cycle, cycle))
    }
}

fn scalar_out(net: &mut Net, x: &DemTensor) -> Result<f64, CganError> {
    Ok(net.forward(&x.inputs())?.data[0])
}

fn disc_pass(d: &mut Net, pos: &[DemTensor], neg: &[DemTensor]) -> Result<f64, CganError> {
    let mut loss = 0.0;
    let np = 1.0 / pos.len() as f64;
    for x in pos {
        let raw = scalar_out(d, x)?;
        let y = raw.clamp(D_MIN, 1.0 - D_MIN);
        loss -= np * libm::log(y);
        let g = if y == raw { -np / y } else { 0.0 };
        d.backward(&Tensor::vector(vec![g]))?;
    }
    let nn = 1.0 / neg.len() as f64;
    for x in neg {
        let raw = scalar_out(d, x)?;
        let y = raw.clamp(D_MIN, 1.0 - D_MIN);
        loss -= nn * libm::log(1.0 - y);
        let g = if y == raw { nn / (1.0 - y) } else { 0.0 };
        d.backward(&Tensor::vector(vec![g]))?;
    }
    Ok(loss)
}

/// Backpropagates `scale·adv(D(y))` into D and returns `dy`.
fn adversarial_backward(d: &mut Net, y: &DemTensor, hyper: &CganHyper, scale: f64) -> Result<(f64, Vec<f64>), CganError> {
    let raw = scalar_out(d, y)?;
    let value = hyper.adv(raw.clamp(D_MIN, 1.0 - D_MIN));
    let g = d.backward(&Tensor::vector(vec![scale * hyper.adv_grad(raw)]))?;
    let mut dy = g[0].data.clone();
    dy.extend_from_slice(&g[1].data);
    Ok((value, dy))
}

fn backward_flat(net: &mut Net, dy: Vec<f64>) -> Result<Vec<f64>, CganError> {
    let g = net.backward(&Tensor::vector(dy))?;
    let mut dx = g[0].data.clone();
    dx.extend_from_slice(&g[1].data);
    Ok(dx)
}

/// One sample of a generator's own loss; returns the unscaled value.
fn translate_pass(g: &mut Net, d: &mut Net, x: &DemTensor, hyper: &CganHyper, penalize_nan: bool, scale: f64) -> Result<f64, CganError> {
    let yt = g.forward(&x.inputs())?;
    let y = DemTensor::from_flat(&yt.data);
    let (adv, mut dy) = adversarial_backward(d, &y, hyper, scale)?;
    let xf = x.flat();
    let wp = scale * hyper.lambda_p / ENCODED_LEN as f64;
    let mut pixel = 0.0;
    for k in 0..ENCODED_LEN {
        let diff = yt.data[k] - xf[k];
        pixel += libm::fabs(diff);
        dy[k] += wp * sign(diff);
    }
    let mut value = adv + hyper.lambda_p * pixel / ENCODED_LEN as f64;
    if penalize_nan {
        value += hyper.lambda_nan * nan_penalty(&y);
        let wn = scale * hyper.lambda_nan / DEM_CELLS as f64;
        for k in DEM_CELLS..2 * DEM_CELLS {
            if yt.data[k] < 0.0 {
                dy[k] -= wn;
            }
        }
    }
    backward_flat(g, dy)?;
    Ok(value)
}

/// `adv(D(second(first(x))))`, backpropagated through both generators.
fn cycle_pass(first: &mut Net, second: &mut Net, d: &mut Net, x: &DemTensor, hyper: &CganHyper, scale: f64) -> Result<f64, CganError> {
    let mid = DemTensor::from_flat(&first.forward(&x.inputs())?.data);
    let out = DemTensor::from_flat(&second.forward(&mid.inputs())?.data);
    let (value, dy) = adversarial_backward(d, &out, hyper, scale)?;
    let dmid = backward_flat(second, dy)?;
    backward_flat(first, dmid)?;
    Ok(value)
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedCgan {
    pub model: CycleGan,
    pub history: Vec<LossRecord>,
}

/// Alternates one discriminator step and one generator step per iteration on
/// seeded random batches. The two datasets are unpaired.
pub fn train_cyclegan(real: &[Dem], sim: &[Dem], hyper: &CganHyper) -> Result<TrainedCgan, CganError> {
    hyper.validate()?;
    if real.is_empty() {
        return Err(CganError::EmptyDataset("real"));
    }
    if sim.is_empty() {
        return Err(CganError::EmptyDataset("sim"));
    }
    let real: Vec<DemTensor> = real.iter().map(encode).collect();
    let sim: Vec<DemTensor> = sim.iter().map(encode).collect();
    let mut model = CycleGan::new(hyper)?;
    let mut opt = [
        AdamState::new(&model.g.net, hyper.lr_g),
        AdamState::new(&model.g_s.net, hyper.lr_g),
        AdamState::new(&model.d.net, hyper.lr_d),
        AdamState::new(&model.d_s.net, hyper.lr_d),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed ^ 0xc6a2_0000);
    let mut history = Vec::with_capacity(hyper.steps);
    for step in 0..hyper.steps {
        let rb: Vec<DemTensor> = (0..hyper.batch).map(|_| real[rng.random_range(0..real.len())].clone()).collect();
        let sb: Vec<DemTensor> = (0..hyper.batch).map(|_| sim[rng.random_range(0..sim.len())].clone()).collect();

        model.zero_grads();
        let (l_d, l_ds) = model.discriminator_pass(&rb, &sb)?;
        adam_step(&mut opt[2], &mut model.d.net)?;
        adam_step(&mut opt[3], &mut model.d_s.net)?;

        model.zero_grads();
        let (l_g, l_gs, l_cycle) = model.generator_pass(&rb, &sb, hyper)?;
        adam_step(&mut opt[0], &mut model.g.net)?;
        adam_step(&mut opt[1], &mut model.g_s.net)?;

        history.push(LossRecord {
            step,
            l_d,
            l_ds,
            l_g,
            l_gs,
            l_cycle,
        });
    }
    model.zero_grads();
    Ok(TrainedCgan { model, history })
}
