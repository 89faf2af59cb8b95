//! Small deterministic neural-network kit.
//!
//! Networks are DAGs of layers evaluated in insertion order, one sample at a
//! time, in `f64`. [`Net::forward`] caches activations; [`Net::backward`]
//! accumulates parameter gradients and returns gradients for the inputs.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NnError {
    #[error("shape mismatch at layer {layer}: {detail}")]
    Shape { layer: usize, detail: String },
    #[error("backward called without a cached forward pass")]
    NoForward,
    #[error("non-finite gradient; optimizer step skipped")]
    NonFiniteGradient,
    #[error("{0}")]
    Architecture(String),
}

/// Dense row-major tensor.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Self {
        assert_eq!(shape.iter().product::<usize>(), data.len(), "tensor shape/data mismatch");
        Self { shape, data }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum LayerKind {
    /// `[in, H, W] -> [out, H, W]`, odd square kernel, zero padding.
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
    },
    /// Flattens its input, `[inputs] -> [outputs]`.
    FullyConnected { inputs: usize, outputs: usize },
    LeakyRelu { slope: f64 },
    Sigmoid,
    /// Elementwise product of two equally shaped inputs.
    Multiply,
    /// Flattens and concatenates all inputs.
    Concat,
    Flatten,
    /// Elementwise sum of two equally shaped inputs.
    SkipAdd,
}

impl LayerKind {
    fn arity(&self) -> Option<usize> {
        match self {
            LayerKind::Multiply | LayerKind::SkipAdd => Some(2),
            LayerKind::Concat => None,
            _ => Some(1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Source {
    Input(usize),
    Node(usize),
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Node {
    pub kind: LayerKind,
    pub inputs: Vec<Source>,
}

/// Layer graph plus the declared input signature.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Architecture {
    pub input_shapes: Vec<Vec<usize>>,
    pub nodes: Vec<Node>,
}

impl Architecture {
    pub fn new(input_shapes: Vec<Vec<usize>>) -> Self {
        Self {
            input_shapes,
            nodes: Vec::new(),
        }
    }

    /// Appends a layer and returns a handle to its output.
    pub fn push(&mut self, kind: LayerKind, inputs: &[Source]) -> Source {
        self.nodes.push(Node {
            kind,
            inputs: inputs.to_vec(),
        });
        Source::Node(self.nodes.len() - 1)
    }

    /// Output shape of every node, validating the graph.
    pub fn infer_shapes(&self) -> Result<Vec<Vec<usize>>, NnError> {
        let mut shapes: Vec<Vec<usize>> = Vec::with_capacity(self.nodes.len());
        for (i, node) in self.nodes.iter().enumerate() {
            let err = |detail: String| NnError::Shape { layer: i, detail };
            if let Some(n) = node.kind.arity() {
                if node.inputs.len() != n {
                    return Err(err(format!("{:?} takes {n} inputs, got {}", node.kind, node.inputs.len())));
                }
            }
            if node.inputs.is_empty() {
                return Err(err(String::from("layer has no inputs")));
            }
            let mut ins = Vec::with_capacity(node.inputs.len());
            for src in &node.inputs {
                let s = match *src {
                    Source::Input(k) => self
                        .input_shapes
                        .get(k)
                        .ok_or_else(|| err(format!("unknown input {k}")))?,
                    Source::Node(k) if k < i => &shapes[k],
                    Source::Node(k) => return Err(err(format!("node {k} is not computed before layer {i}"))),
                };
                ins.push(s.clone());
            }
            let numel = |s: &Vec<usize>| s.iter().product::<usize>();
            let out = match node.kind {
                LayerKind::Conv2d {
                    in_channels,
                    out_channels,
                    kernel,
                } => {
                    let s = &ins[0];
                    if s.len() != 3 || s[0] != in_channels {
                        return Err(err(format!("conv expects [{in_channels}, H, W], got {s:?}")));
                    }
                    if kernel % 2 == 0 {
                        return Err(err(String::from("conv kernel must be odd")));
                    }
                    vec![out_channels, s[1], s[2]]
                }
                LayerKind::FullyConnected { inputs, outputs } => {
                    if numel(&ins[0]) != inputs {
                        return Err(err(format!("fully connected expects {inputs} values, got {:?}", ins[0])));
                    }
                    vec![outputs]
                }
                LayerKind::LeakyRelu { .. } | LayerKind::Sigmoid => ins[0].clone(),
                LayerKind::Multiply | LayerKind::SkipAdd => {
                    if ins[0] != ins[1] {
                        return Err(err(format!("operands differ: {:?} vs {:?}", ins[0], ins[1])));
                    }
                    ins[0].clone()
                }
                LayerKind::Concat => vec![ins.iter().map(numel).sum()],
                LayerKind::Flatten => vec![numel(&ins[0])],
            };
            shapes.push(out);
        }
        if shapes.is_empty() {
            return Err(NnError::Architecture(String::from("empty network")));
        }
        Ok(shapes)
    }

    fn param_shapes(&self, node: usize) -> Vec<Vec<usize>> {
        match self.nodes[node].kind {
            LayerKind::Conv2d {
                in_channels,
                out_channels,
                kernel,
            } => vec![vec![out_channels, in_channels, kernel, kernel], vec![out_channels]],
            LayerKind::FullyConnected { inputs, outputs } => vec![vec![outputs, inputs], vec![outputs]],
            _ => Vec::new(),
        }
    }
}

/// Network with parameters, accumulated gradients and the last forward cache.
/// The last node is the output.
#[derive(Debug, Clone, PartialEq)]
pub struct Net {
    pub arch: Architecture,
    /// Per node: `[weight, bias]` for parametric layers, empty otherwise.
    pub params: Vec<Vec<Tensor>>,
    pub grads: Vec<Vec<Tensor>>,
    cache: Option<Cache>,
    shapes: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq)]
struct Cache {
    inputs: Vec<Tensor>,
    acts: Vec<Tensor>,
}

impl Net {
    /// Builds the network, drawing weights uniformly in
    /// `±sqrt(6 / (fan_in + fan_out))` from a stream seeded with `seed`.
    pub fn new(arch: Architecture, seed: u64) -> Result<Self, NnError> {
        let shapes = arch.infer_shapes()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(arch.nodes.len());
        for i in 0..arch.nodes.len() {
            let ps = arch.param_shapes(i);
            let mut node_params = Vec::new();
            if let Some(w) = ps.first() {
                let (fan_in, fan_out) = match arch.nodes[i].kind {
                    LayerKind::Conv2d {
                        in_channels,
                        out_channels,
                        kernel,
                    } => (in_channels * kernel * kernel, out_channels * kernel * kernel),
                    LayerKind::FullyConnected { inputs, outputs } => (inputs, outputs),
                    _ => unreachable!(),
                };
                let bound = libm::sqrt(6.0 / (fan_in + fan_out) as f64);
                let mut t = Tensor::zeros(w);
                for v in &mut t.data {
                    *v = rng.random_range(-bound..bound);
                }
                node_params.push(t);
                node_params.push(Tensor::zeros(&ps[1]));
            }
            params.push(node_params);
        }
        let grads = zeros_like(&params);
        Ok(Self {
            arch,
            params,
            grads,
            cache: None,
            shapes,
        })
    }

    /// Rebuilds a network from stored parameters.
    pub fn from_parts(arch: Architecture, params: Vec<Vec<Tensor>>) -> Result<Self, NnError> {
        let shapes = arch.infer_shapes()?;
        if params.len() != arch.nodes.len() {
            return Err(NnError::Architecture(String::from("parameter list does not match layers")));
        }
        for (i, p) in params.iter().enumerate() {
            let expected = arch.param_shapes(i);
            if p.len() != expected.len() || p.iter().zip(&expected).any(|(t, s)| &t.shape != s || t.len() != t.shape.iter().product::<usize>()) {
                return Err(NnError::Architecture(format!("parameters of layer {i} have the wrong shape")));
            }
        }
        let grads = zeros_like(&params);
        Ok(Self {
            arch,
            params,
            grads,
            cache: None,
            shapes,
        })
    }

    pub fn output_shape(&self) -> &[usize] {
        self.shapes.last().map(|s| s.as_slice()).unwrap_or(&[])
    }

    fn check_inputs(&self, inputs: &[Tensor]) -> Result<(), NnError> {
        if inputs.len() != self.arch.input_shapes.len() {
            return Err(NnError::Shape {
                layer: 0,
                detail: format!("expected {} inputs, got {}", self.arch.input_shapes.len(), inputs.len()),
            });
        }
        for (k, (t, s)) in inputs.iter().zip(&self.arch.input_shapes).enumerate() {
            if &t.shape != s {
                let layer = self
                    .arch
                    .nodes
                    .iter()
                    .position(|n| n.inputs.contains(&Source::Input(k)))
                    .unwrap_or(0);
                return Err(NnError::Shape {
                    layer,
                    detail: format!("input {k} has shape {:?}, expected {s:?}", t.shape),
                });
            }
        }
        Ok(())
    }

    fn run(&self, inputs: &[Tensor]) -> Vec<Tensor> {
        let mut acts: Vec<Tensor> = Vec::with_capacity(self.arch.nodes.len());
        for (i, node) in self.arch.nodes.iter().enumerate() {
            let get = |s: &Source| -> &Tensor {
                match *s {
                    Source::Input(k) => &inputs[k],
                    Source::Node(k) => &acts[k],
                }
            };
            let out = match node.kind {
                LayerKind::Conv2d {
                    in_channels,
                    out_channels,
                    kernel,
                } => conv_forward(get(&node.inputs[0]), &self.params[i][0], &self.params[i][1], in_channels, out_channels, kernel),
                LayerKind::FullyConnected { inputs: n_in, outputs } => {
                    let x = &get(&node.inputs[0]).data;
                    let w = &self.params[i][0].data;
                    let b = &self.params[i][1].data;
                    let mut y = b.clone();
                    for (o, yo) in y.iter_mut().enumerate() {
                        let row = &w[o * n_in..(o + 1) * n_in];
                        *yo += dot(row, x);
                    }
                    debug_assert_eq!(y.len(), outputs);
                    Tensor::vector(y)
                }
                LayerKind::LeakyRelu { slope } => {
                    let x = get(&node.inputs[0]);
                    Tensor {
                        shape: x.shape.clone(),
                        data: x.data.iter().map(|&v| if v > 0.0 { v } else { slope * v }).collect(),
                    }
                }
                LayerKind::Sigmoid => {
                    let x = get(&node.inputs[0]);
                    Tensor {
                        shape: x.shape.clone(),
                        data: x.data.iter().map(|&v| sigmoid(v)).collect(),
                    }
                }
                LayerKind::Multiply | LayerKind::SkipAdd => {
                    let a = get(&node.inputs[0]);
                    let b = get(&node.inputs[1]);
                    let data = if matches!(node.kind, LayerKind::Multiply) {
                        a.data.iter().zip(&b.data).map(|(x, y)| x * y).collect()
                    } else {
                        a.data.iter().zip(&b.data).map(|(x, y)| x + y).collect()
                    };
                    Tensor {
                        shape: a.shape.clone(),
                        data,
                    }
                }
                LayerKind::Concat => {
                    let mut data = Vec::new();
                    for s in &node.inputs {
                        data.extend_from_slice(&get(s).data);
                    }
                    Tensor::vector(data)
                }
                LayerKind::Flatten => Tensor::vector(get(&node.inputs[0]).data.clone()),
            };
            acts.push(out);
        }
        acts
    }

    /// Inference without touching the cache.
    pub fn infer(&self, inputs: &[Tensor]) -> Result<Tensor, NnError> {
        self.check_inputs(inputs)?;
        Ok(self.run(inputs).pop().expect("non-empty network"))
    }

    /// Forward pass that keeps activations for [`Net::backward`].
    pub fn forward(&mut self, inputs: &[Tensor]) -> Result<Tensor, NnError> {
        self.check_inputs(inputs)?;
        let acts = self.run(inputs);
        let out = acts.last().expect("non-empty network").clone();
        self.cache = Some(Cache {
            inputs: inputs.to_vec(),
            acts,
        });
        Ok(out)
    }

    /// Accumulates `d loss / d params` into [`Net::grads`] and returns the
    /// gradients with respect to every network input.
    pub fn backward(&mut self, upstream: &Tensor) -> Result<Vec<Tensor>, NnError> {
        let cache = self.cache.as_ref().ok_or(NnError::NoForward)?;
        let n = self.arch.nodes.len();
        if upstream.shape != self.shapes[n - 1] {
            return Err(NnError::Shape {
                layer: n - 1,
                detail: format!("upstream gradient {:?} does not match output {:?}", upstream.shape, self.shapes[n - 1]),
            });
        }
        let mut node_grads: Vec<Option<Tensor>> = vec![None; n];
        node_grads[n - 1] = Some(upstream.clone());
        let mut input_grads: Vec<Tensor> = self.arch.input_shapes.iter().map(|s| Tensor::zeros(s)).collect();

        for i in (0..n).rev() {
            let Some(g) = node_grads[i].take() else {
                continue;
            };
            let node = &self.arch.nodes[i];
            let get = |s: &Source| -> &Tensor {
                match *s {
                    Source::Input(k) => &cache.inputs[k],
                    Source::Node(k) => &cache.acts[k],
                }
            };
            let mut sends: Vec<(Source, Tensor)> = Vec::with_capacity(node.inputs.len());
            match node.kind {
                LayerKind::Conv2d {
                    in_channels,
                    out_channels,
                    kernel,
                } => {
                    let x = get(&node.inputs[0]);
                    let (gw, gb) = {
                        let grads = &mut self.grads[i];
                        let (a, b) = grads.split_at_mut(1);
                        (&mut a[0], &mut b[0])
                    };
                    let dx = conv_backward(x, &self.params[i][0], &g, gw, gb, in_channels, out_channels, kernel);
                    sends.push((node.inputs[0], dx));
                }
                LayerKind::FullyConnected { inputs: n_in, .. } => {
                    let x = get(&node.inputs[0]);
                    let w = &self.params[i][0].data;
                    let mut dx = vec![0.0; n_in];
                    {
                        let (gw, gb) = {
                            let grads = &mut self.grads[i];
                            let (a, b) = grads.split_at_mut(1);
                            (&mut a[0], &mut b[0])
                        };
                        for (o, &go) in g.data.iter().enumerate() {
                            gb.data[o] += go;
                            if go == 0.0 {
                                continue;
                            }
                            let row = &w[o * n_in..(o + 1) * n_in];
                            let grow = &mut gw.data[o * n_in..(o + 1) * n_in];
                            for k in 0..n_in {
                                grow[k] += go * x.data[k];
                                dx[k] += go * row[k];
                            }
                        }
                    }
                    sends.push((node.inputs[0], Tensor::new(x.shape.clone(), dx)));
                }
                LayerKind::LeakyRelu { slope } => {
                    let x = get(&node.inputs[0]);
                    let data = x.data.iter().zip(&g.data).map(|(&v, &gv)| if v > 0.0 { gv } else { slope * gv }).collect();
                    sends.push((node.inputs[0], Tensor::new(x.shape.clone(), data)));
                }
                LayerKind::Sigmoid => {
                    let y = &cache.acts[i];
                    let data = y.data.iter().zip(&g.data).map(|(&s, &gv)| gv * s * (1.0 - s)).collect();
                    sends.push((node.inputs[0], Tensor::new(y.shape.clone(), data)));
                }
                LayerKind::Multiply => {
                    let a = get(&node.inputs[0]);
                    let b = get(&node.inputs[1]);
                    let ga = g.data.iter().zip(&b.data).map(|(x, y)| x * y).collect();
                    let gb = g.data.iter().zip(&a.data).map(|(x, y)| x * y).collect();
                    sends.push((node.inputs[0], Tensor::new(a.shape.clone(), ga)));
                    sends.push((node.inputs[1], Tensor::new(b.shape.clone(), gb)));
                }
                LayerKind::SkipAdd => {
                    sends.push((node.inputs[0], g.clone()));
                    sends.push((node.inputs[1], g));
                }
                LayerKind::Concat => {
                    let mut offset = 0;
                    for s in &node.inputs {
                        let t = get(s);
                        let part = g.data[offset..offset + t.len()].to_vec();
                        offset += t.len();
                        sends.push((*s, Tensor::new(t.shape.clone(), part)));
                    }
                }
                LayerKind::Flatten => {
                    let x = get(&node.inputs[0]);
                    sends.push((node.inputs[0], Tensor::new(x.shape.clone(), g.data)));
                }
            }
            for (src, t) in sends {
                match src {
                    Source::Input(k) => add_into(&mut input_grads[k], &t),
                    Source::Node(k) => match &mut node_grads[k] {
                        Some(acc) => add_into(acc, &t),
                        slot @ None => *slot = Some(t),
                    },
                }
            }
        }
        Ok(input_grads)
    }

    pub fn zero_grads(&mut self) {
        for t in self.grads.iter_mut().flatten() {
            t.data.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().flatten().map(Tensor::len).sum()
    }

    fn locate(&self, mut index: usize) -> (usize, usize, usize) {
        for (i, ps) in self.params.iter().enumerate() {
            for (j, t) in ps.iter().enumerate() {
                if index < t.len() {
                    return (i, j, index);
                }
                index -= t.len();
            }
        }
        panic!("parameter index out of range");
    }

    /// Flat parameter access across all layers, in layer order.
    pub fn param(&self, index: usize) -> f64 {
        let (i, j, k) = self.locate(index);
        self.params[i][j].data[k]
    }

    pub fn set_param(&mut self, index: usize, value: f64) {
        let (i, j, k) = self.locate(index);
        self.params[i][j].data[k] = value;
    }

    pub fn grad(&self, index: usize) -> f64 {
        let (i, j, k) = self.locate(index);
        self.grads[i][j].data[k]
    }

    /// Signs of every Leaky ReLU input for `inputs`; two evaluations with the
    /// same pattern lie on the same linear piece.
    pub fn kink_pattern(&self, inputs: &[Tensor]) -> Vec<bool> {
        let acts = self.run(inputs);
        let mut out = Vec::new();
        for node in &self.arch.nodes {
            if let LayerKind::LeakyRelu { .. } = node.kind {
                let x = match node.inputs[0] {
                    Source::Input(k) => &inputs[k],
                    Source::Node(k) => &acts[k],
                };
                out.extend(x.data.iter().map(|v| *v > 0.0));
            }
        }
        out
    }
}

fn zeros_like(params: &[Vec<Tensor>]) -> Vec<Vec<Tensor>> {
    params
        .iter()
        .map(|ps| ps.iter().map(|t| Tensor::zeros(&t.shape)).collect())
        .collect()
}

fn add_into(acc: &mut Tensor, t: &Tensor) {
    for (a, b) in acc.data.iter_mut().zip(&t.data) {
        *a += b;
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + libm::exp(-v))
    } else {
        let e = libm::exp(v);
        e / (1.0 + e)
    }
}

fn conv_forward(x: &Tensor, w: &Tensor, b: &Tensor, cin: usize, cout: usize, k: usize) -> Tensor {
    let (h, wd) = (x.shape[1], x.shape[2]);
    let pad = (k / 2) as isize;
    let mut out = vec![0.0; cout * h * wd];
    for o in 0..cout {
        let plane = &mut out[o * h * wd..(o + 1) * h * wd];
        plane.iter_mut().for_each(|v| *v = b.data[o]);
        for c in 0..cin {
            let xin = &x.data[c * h * wd..(c + 1) * h * wd];
            for ky in 0..k {
                for kx in 0..k {
                    let wv = w.data[((o * cin + c) * k + ky) * k + kx];
                    if wv == 0.0 {
                        continue;
                    }
                    let dy = ky as isize - pad;
                    let dx = kx as isize - pad;
                    for y in 0..h {
                        let yy = y as isize + dy;
                        if yy < 0 || yy >= h as isize {
                            continue;
                        }
                        for xx in 0..wd {
                            let xs = xx as isize + dx;
                            if xs < 0 || xs >= wd as isize {
                                continue;
                            }
                            plane[y * wd + xx] += wv * xin[yy as usize * wd + xs as usize];
                        }
                    }
                }
            }
        }
    }
    Tensor::new(vec![cout, h, wd], out)
}

#[allow(clippy::too_many_arguments)]
fn conv_backward(
    x: &Tensor,
    w: &Tensor,
    g: &Tensor,
    gw: &mut Tensor,
    gb: &mut Tensor,
    cin: usize,
    cout: usize,
    k: usize,
) -> Tensor {
    let (h, wd) = (x.shape[1], x.shape[2]);
    let pad = (k / 2) as isize;
    let mut dx = vec![0.0; cin * h * wd];
    for o in 0..cout {
        let go = &g.data[o * h * wd..(o + 1) * h * wd];
        gb.data[o] += go.iter().sum::<f64>();
        for c in 0..cin {
            let xin = &x.data[c * h * wd..(c + 1) * h * wd];
            let dxin = &mut dx[c * h * wd..(c + 1) * h * wd];
            for ky in 0..k {
                for kx in 0..k {
                    let widx = ((o * cin + c) * k + ky) * k + kx;
                    let wv = w.data[widx];
                    let dy = ky as isize - pad;
                    let dxo = kx as isize - pad;
                    let mut acc = 0.0;
                    for y in 0..h {
                        let yy = y as isize + dy;
                        if yy < 0 || yy >= h as isize {
                            continue;
                        }
                        for xx in 0..wd {
                            let xs = xx as isize + dxo;
                            if xs < 0 || xs >= wd as isize {
                                continue;
                            }
                            let src = yy as usize * wd + xs as usize;
                            let gv = go[y * wd + xx];
                            acc += gv * xin[src];
                            dxin[src] += gv * wv;
                        }
                    }
                    gw.data[widx] += acc;
                }
            }
        }
    }
    Tensor::new(x.shape.clone(), dx)
}

/// Adam with global-norm gradient clipping.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AdamState {
    pub m: Vec<Vec<Tensor>>,
    pub v: Vec<Vec<Tensor>>,
    pub t: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub clip_norm: f64,
}

impl AdamState {
    pub fn new(net: &Net, lr: f64) -> Self {
        Self {
            m: zeros_like(&net.params),
            v: zeros_like(&net.params),
            t: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: 5.0,
        }
    }
}

/// Global gradient norm across every parameter tensor of `net`.
pub fn grad_norm(net: &Net) -> f64 {
    libm::sqrt(net.grads.iter().flatten().map(Tensor::norm_sq).sum())
}

/// One clipped Adam update from the gradients accumulated in `net`. On a
/// non-finite gradient nothing changes, including the step count.
pub fn adam_step(state: &mut AdamState, net: &mut Net) -> Result<(), NnError> {
    let norm = grad_norm(net);
    if !norm.is_finite() {
        return Err(NnError::NonFiniteGradient);
    }
    let scale = if norm > state.clip_norm { state.clip_norm / norm } else { 1.0 };
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - libm::pow(state.beta1, t as f64);
    let bc2 = 1.0 - libm::pow(state.beta2, t as f64);
    for (i, ps) in net.params.iter_mut().enumerate() {
        for (j, p) in ps.iter_mut().enumerate() {
            let g = &net.grads[i][j].data;
            let m = &mut state.m[i][j].data;
            let v = &mut state.v[i][j].data;
            for k in 0..p.data.len() {
                let gk = g[k] * scale;
                m[k] = state.beta1 * m[k] + (1.0 - state.beta1) * gk;
                v[k] = state.beta2 * v[k] + (1.0 - state.beta2) * gk * gk;
                let mh = m[k] / bc1;
                let vh = v[k] / bc2;
                p.data[k] -= state.lr * mh / (libm::sqrt(vh) + state.eps);
            }
        }
    }
    Ok(())
}

/// Outcome of a finite-difference check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub checked: usize,
    /// Parameters skipped because the perturbation crossed a Leaky ReLU kink.
    pub skipped: usize,
}

/// Relative error with a floor so that two vanishing gradients compare equal.
pub fn relative_error(a: f64, b: f64) -> f64 {
    libm::fabs(a - b) / a.abs().max(b.abs()).max(1e-7)
}

/// Compares [`Net::backward`] with central differences of `loss_fn`, which
/// maps the network output to `(loss, d loss / d output)`. Networks with more
/// than `max_checked` parameters are checked on a seeded random subset.
///
/// Relative errors are floored at `1e4` times the round-off resolution of the
/// difference quotient, `ε·|loss| / eps`, so gradients too small to resolve do
/// not dominate the maximum.
pub fn grad_check<F>(net: &mut Net, inputs: &[Tensor], loss_fn: F, eps: f64, max_checked: usize, seed: u64) -> Result<GradCheck, NnError>
where
    F: Fn(&Tensor) -> (f64, Tensor),
{
    net.zero_grads();
    let out = net.forward(inputs)?;
    let (_, upstream) = loss_fn(&out);
    net.backward(&upstream)?;

    let n = net.param_count();
    let chosen: Vec<usize> = if n > max_checked {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v = index::sample(&mut rng, n, max_checked).into_vec();
        v.sort_unstable();
        v
    } else {
        (0..n).collect()
    };

    let mut result = GradCheck {
        max_rel_error: 0.0,
        checked: 0,
        skipped: 0,
    };
    for idx in chosen {
        let orig = net.param(idx);
        net.set_param(idx, orig + eps);
        let plus_pattern = net.kink_pattern(inputs);
        let plus = loss_fn(&net.infer(inputs)?).0;
        net.set_param(idx, orig - eps);
        let minus_pattern = net.kink_pattern(inputs);
        let minus = loss_fn(&net.infer(inputs)?).0;
        net.set_param(idx, orig);
        if plus_pattern != minus_pattern {
            result.skipped += 1;
            continue;
        }
        let numeric = (plus - minus) / (2.0 * eps);
        let resolution = f64::EPSILON * plus.abs().max(minus.abs()).max(1.0) / eps;
        let (a, b) = (net.grad(idx), numeric);
        let err = libm::fabs(a - b) / a.abs().max(b.abs()).max(1e4 * resolution);
        result.max_rel_error = result.max_rel_error.max(err);
        result.checked += 1;
    }
    Ok(result)
}

/// Serializable snapshot of a network and, optionally, its optimizer.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Checkpoint {
    pub arch: Architecture,
    pub params: Vec<Vec<Tensor>>,
    pub optimizer: Option<AdamState>,
    pub seed: u64,
}

impl Checkpoint {
    pub fn capture(net: &Net, optimizer: Option<&AdamState>, seed: u64) -> Self {
        Self {
            arch: net.arch.clone(),
            params: net.params.clone(),
            optimizer: optimizer.cloned(),
            seed,
        }
    }

    pub fn restore(&self) -> Result<Net, NnError> {
        Net::from_parts(self.arch.clone(), self.params.clone())
    }
}
