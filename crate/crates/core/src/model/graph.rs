use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{Arch, ArchConfig};
use crate::error::{Error, Result};
use crate::recurrent::{conv_lstm_sequence, conv_lstm_sequence_backward, ConvLstmParams, ConvLstmSequenceCache};
use crate::tensor::{
    concat_channels, concat_channels_backward, conv2d, conv2d_backward, maxpool2, maxpool2_backward, relu,
    relu_backward, upsample_nearest2, upsample_nearest2_backward, ClassMap, ConvSpec, PoolIndices, Real, Tensor,
};

/// Layer operation. Every value flowing through the graph is a phase
/// sequence `T×N×C×H×W`; spatial layers act on each phase independently with
/// shared weights.
#[derive(Clone, Debug, PartialEq)]
pub enum Op<T: Real> {
    Input,
    /// `T×N×C×H×W → 1×N×(T·C)×H×W`, phase-major channel order.
    StackPhases,
    ConvLstm(ConvLstmParams<T>),
    Conv {
        kernel: Tensor<T>,
        bias: Tensor<T>,
        spec: ConvSpec,
    },
    Relu,
    MaxPool,
    Upsample,
    /// Channel concatenation of the two inputs, per phase.
    Concat,
    /// Keeps only the final phase.
    LastPhase,
}

/// Parameter-free description of a layer, for topology queries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LayerKind {
    Input,
    StackPhases,
    ConvLstm,
    Conv,
    Relu,
    MaxPool,
    Upsample,
    Concat,
    LastPhase,
}

impl<T: Real> Op<T> {
    pub fn kind(&self) -> LayerKind {
        match self {
            Op::Input => LayerKind::Input,
            Op::StackPhases => LayerKind::StackPhases,
            Op::ConvLstm(_) => LayerKind::ConvLstm,
            Op::Conv { .. } => LayerKind::Conv,
            Op::Relu => LayerKind::Relu,
            Op::MaxPool => LayerKind::MaxPool,
            Op::Upsample => LayerKind::Upsample,
            Op::Concat => LayerKind::Concat,
            Op::LastPhase => LayerKind::LastPhase,
        }
    }

    /// Dilation of a convolutional layer.
    pub fn dilation(&self) -> Option<usize> {
        match self {
            Op::ConvLstm(p) => Some(p.dilation),
            Op::Conv { spec, .. } => Some(spec.dilation),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Node<T: Real> {
    pub name: String,
    pub op: Op<T>,
    /// Ids of the producing nodes; always smaller than this node's id.
    pub inputs: Vec<usize>,
}

/// Executable layer DAG with its parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelGraph<T: Real> {
    config: ArchConfig,
    nodes: Vec<Node<T>>,
}

enum NodeCache<T: Real> {
    None,
    Lstm(ConvLstmSequenceCache<T>),
    Pool(PoolIndices),
    Relu,
}

/// Forward context retained for exactly one backward pass.
pub struct Trace<T: Real> {
    values: Vec<Tensor<T>>,
    caches: Vec<NodeCache<T>>,
}

impl<T: Real> Trace<T> {
    /// Output of node `id` in the recorded forward pass.
    pub fn value(&self, id: usize) -> Option<&Tensor<T>> {
        self.values.get(id)
    }

    /// Active-set pattern of the piecewise-linear layers: one byte per ReLU
    /// output (1 if positive) and per max-pool window (winning position).
    /// Two points with equal signatures lie on the same smooth piece.
    pub fn kink_signature(&self) -> Vec<u8> {
        let mut sig = Vec::new();
        for (v, c) in self.values.iter().zip(&self.caches) {
            match c {
                NodeCache::Pool(idx) => sig.extend_from_slice(idx.winners()),
                NodeCache::Relu => sig.extend(v.data().iter().map(|&x| u8::from(x > T::zero()))),
                _ => {}
            }
        }
        sig
    }
}

/// Parameter gradients, aligned with [`ModelGraph::params`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<T: Real> {
    pub tensors: Vec<Tensor<T>>,
    /// Gradient w.r.t. the model input.
    pub input: Tensor<T>,
}

fn uniform<T: Real, R: Rng>(rng: &mut R, shape: [usize; 4], bound: f64) -> Tensor<T> {
    Tensor::from_fn(shape, |_| T::lit(rng.gen_range(-bound..bound)))
}

struct Builder<T: Real> {
    nodes: Vec<Node<T>>,
    rng: ChaCha8Rng,
    config: ArchConfig,
}

impl<T: Real> Builder<T> {
    fn add(&mut self, name: impl Into<String>, op: Op<T>, inputs: &[usize]) -> usize {
        self.nodes.push(Node {
            name: name.into(),
            op,
            inputs: inputs.to_vec(),
        });
        self.nodes.len() - 1
    }

    /// Convolution with He-uniform weights, optionally followed by ReLU.
    fn conv(&mut self, name: &str, from: usize, cin: usize, cout: usize, k: usize, dilation: usize, relu: bool) -> usize {
        let fan_in = (cin * k * k) as f64;
        let bound = if relu { (6.0 / fan_in).sqrt() } else { (1.0 / fan_in).sqrt() };
        let op = Op::Conv {
            kernel: uniform(&mut self.rng, [cout, cin, k, k], bound),
            bias: Tensor::zeros([cout]),
            spec: ConvSpec::same(k, dilation),
        };
        let id = self.add(name, op, &[from]);
        if relu {
            self.add(format!("{name}.relu"), Op::Relu, &[id])
        } else {
            id
        }
    }

    fn lstm(&mut self, name: &str, from: usize, cin: usize, hidden: usize, dilation: usize) -> usize {
        let c = &self.config;
        let (k, peephole, mode) = (c.kernel_size, c.peephole, c.output_peephole);
        let mut p = ConvLstmParams::init(&mut self.rng, cin, hidden, k, peephole).with_dilation(dilation);
        p.output_peephole = mode;
        self.add(name, Op::ConvLstm(p), &[from])
    }
}

impl<T: Real> ModelGraph<T> {
    /// Builds and initializes the network described by `config`.
    pub fn build(config: &ArchConfig) -> Result<Self> {
        config.validate()?;
        let mut b = Builder {
            nodes: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(config.init_seed),
            config: config.clone(),
        };
        let c = config;
        let k = c.kernel_size;
        let input = b.add("input", Op::Input, &[]);
        let mut prev = input;
        let mut channels = c.input_channels();
        let mut skips = Vec::with_capacity(c.depth);

        if c.arch == Arch::UnetBaseline {
            prev = b.add("stack", Op::StackPhases, &[prev]);
        }
        for level in 1..=c.depth {
            if level > 1 && c.arch.resamples() {
                prev = b.add(format!("pool{}", level - 1), Op::MaxPool, &[prev]);
            }
            let (width, d) = (c.width(level), c.dilation(level));
            prev = match c.arch {
                Arch::UnetBaseline => {
                    let a = b.conv(&format!("enc{level}.conv1"), prev, channels, width, k, d, true);
                    b.conv(&format!("enc{level}.conv2"), a, width, width, k, d, true)
                }
                Arch::LUnet | Arch::AlUnet => {
                    let l = b.lstm(&format!("enc{level}.lstm"), prev, channels, width, d);
                    b.conv(&format!("enc{level}.conv"), l, width, width, k, d, true)
                }
            };
            channels = width;
            skips.push(prev);
        }
        for level in (1..c.depth).rev() {
            if c.arch.resamples() {
                prev = b.add(format!("up{level}"), Op::Upsample, &[prev]);
            }
            let cat = b.add(format!("dec{level}.cat"), Op::Concat, &[prev, skips[level - 1]]);
            let (width, d) = (c.width(level), c.dilation(level));
            let cin = channels + width;
            prev = match c.arch {
                Arch::UnetBaseline => {
                    let a = b.conv(&format!("dec{level}.conv1"), cat, cin, width, k, d, true);
                    b.conv(&format!("dec{level}.conv2"), a, width, width, k, d, true)
                }
                Arch::LUnet | Arch::AlUnet => {
                    let l = b.lstm(&format!("dec{level}.lstm"), cat, cin, width, d);
                    b.conv(&format!("dec{level}.conv"), l, width, width, k, d, true)
                }
            };
            channels = width;
        }
        if c.arch.is_recurrent() {
            prev = b.add("last", Op::LastPhase, &[prev]);
        }
        b.conv("head", prev, channels, c.num_classes, 1, 1, false);
        Ok(ModelGraph {
            config: config.clone(),
            nodes: b.nodes,
        })
    }

    pub fn config(&self) -> &ArchConfig {
        &self.config
    }

    pub fn nodes(&self) -> &[Node<T>] {
        &self.nodes
    }

    pub fn count(&self, kind: LayerKind) -> usize {
        self.nodes.iter().filter(|n| n.op.kind() == kind).count()
    }

    /// Input channel count of the first convolutional layer.
    pub fn first_layer_input_channels(&self) -> usize {
        self.nodes
            .iter()
            .find_map(|n| match &n.op {
                Op::Conv { kernel, .. } => Some(kernel.shape()[1]),
                Op::ConvLstm(p) => Some(p.input_channels()),
                _ => None,
            })
            .unwrap_or(0)
    }

    /// Dilation of the first recurrent or convolutional layer of each encoder
    /// level, in level order.
    pub fn encoder_dilations(&self) -> Vec<usize> {
        (1..=self.config.depth)
            .filter_map(|level| {
                let prefix = format!("enc{level}.");
                self.nodes
                    .iter()
                    .find(|n| n.name.starts_with(&prefix) && n.op.dilation().is_some())
                    .and_then(|n| n.op.dilation())
            })
            .collect()
    }

    /// Hidden width of every Conv-LSTM layer, in graph order.
    pub fn lstm_widths(&self) -> Vec<(String, usize)> {
        self.nodes
            .iter()
            .filter_map(|n| match &n.op {
                Op::ConvLstm(p) => Some((n.name.clone(), p.hidden_channels())),
                _ => None,
            })
            .collect()
    }

    /// Named parameter tensors in a fixed order.
    pub fn params(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::new();
        for n in &self.nodes {
            match &n.op {
                Op::Conv { kernel, bias, .. } => {
                    out.push((format!("{}.kernel", n.name), kernel));
                    out.push((format!("{}.bias", n.name), bias));
                }
                Op::ConvLstm(p) => {
                    for (suffix, t) in p.tensors() {
                        out.push((format!("{}.{suffix}", n.name), t));
                    }
                }
                _ => {}
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = Vec::new();
        for n in &mut self.nodes {
            match &mut n.op {
                Op::Conv { kernel, bias, .. } => {
                    out.push(kernel);
                    out.push(bias);
                }
                Op::ConvLstm(p) => out.extend(p.tensors_mut()),
                _ => {}
            }
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|(_, t)| t.len()).sum()
    }

    /// Runs the network on a `T×N×C×H×W` input and returns `N×K×H×W` logits
    /// together with the context needed by [`ModelGraph::backward`].
    pub fn forward(&self, x: &Tensor<T>) -> Result<(Tensor<T>, Trace<T>)> {
        self.config.validate_input(x.shape())?;
        let mut values: Vec<Tensor<T>> = Vec::with_capacity(self.nodes.len());
        let mut caches = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let arg = |i: usize| &values[node.inputs[i]];
            let (value, cache) = match &node.op {
                Op::Input => (x.clone(), NodeCache::None),
                Op::StackPhases => (stack_phases(arg(0))?, NodeCache::None),
                Op::ConvLstm(p) => {
                    let out = conv_lstm_sequence(arg(0), p)?;
                    (out.hidden, NodeCache::Lstm(out.cache))
                }
                Op::Conv { kernel, bias, spec } => {
                    let (t, folded) = fold(arg(0))?;
                    (unfold(conv2d(&folded, kernel, Some(bias), spec)?, t)?, NodeCache::None)
                }
                Op::Relu => (relu(arg(0)), NodeCache::Relu),
                Op::MaxPool => {
                    let (t, folded) = fold(arg(0))?;
                    let (y, idx) = maxpool2(&folded)?;
                    (unfold(y, t)?, NodeCache::Pool(idx))
                }
                Op::Upsample => {
                    let (t, folded) = fold(arg(0))?;
                    (unfold(upsample_nearest2(&folded)?, t)?, NodeCache::None)
                }
                Op::Concat => {
                    let (t, a) = fold(arg(0))?;
                    let (_, b) = fold(arg(1))?;
                    (unfold(concat_channels(&a, &b)?, t)?, NodeCache::None)
                }
                Op::LastPhase => {
                    let v = arg(0);
                    let last = v.outer(v.shape()[0] - 1)?;
                    let mut shape = vec![1];
                    shape.extend_from_slice(last.shape());
                    (last.reshape(shape)?, NodeCache::None)
                }
            };
            values.push(value);
            caches.push(cache);
        }
        let out = values.last().expect("graph has nodes");
        let logits = out.clone().reshape(out.shape()[1..].to_vec())?;
        Ok((logits, Trace { values, caches }))
    }

    /// Backpropagates `grad_logits` (`N×K×H×W`) through the recorded forward
    /// pass, visiting layers in exact reverse order.
    pub fn backward(&self, trace: Trace<T>, grad_logits: &Tensor<T>) -> Result<Gradients<T>> {
        let Trace { values, caches } = trace;
        let last = self.nodes.len() - 1;
        let out_shape = values[last].shape().to_vec();
        if grad_logits.shape() != &out_shape[1..] {
            return Err(Error::shape("model backward", grad_logits.shape(), &out_shape[1..]));
        }
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; self.nodes.len()];
        grads[last] = Some(grad_logits.clone().reshape(out_shape)?);
        let mut param_grads: Vec<Vec<Tensor<T>>> = vec![Vec::new(); self.nodes.len()];

        fn accumulate<T: Real>(slot: &mut Option<Tensor<T>>, g: Tensor<T>) -> Result<()> {
            match slot {
                Some(acc) => acc.add_assign(&g),
                None => {
                    *slot = Some(g);
                    Ok(())
                }
            }
        }

        for id in (1..=last).rev() {
            let node = &self.nodes[id];
            let Some(g) = grads[id].take() else {
                continue;
            };
            let input = &values[node.inputs[0]];
            match (&node.op, &caches[id]) {
                (Op::StackPhases, _) => {
                    let phases = input.shape()[0];
                    accumulate(&mut grads[node.inputs[0]], unstack_phases(&g, phases)?)?;
                }
                (Op::ConvLstm(p), NodeCache::Lstm(cache)) => {
                    let (dx, pg) = conv_lstm_sequence_backward(p, cache, &g, None)?;
                    param_grads[id] = pg.tensors().into_iter().map(|(_, t)| t.clone()).collect();
                    accumulate(&mut grads[node.inputs[0]], dx)?;
                }
                (Op::Conv { kernel, spec, .. }, _) => {
                    let (t, x) = fold(input)?;
                    let (_, gy) = fold(&g)?;
                    let cg = conv2d_backward(&x, kernel, spec, &gy)?;
                    param_grads[id] = vec![cg.kernel, cg.bias];
                    accumulate(&mut grads[node.inputs[0]], unfold(cg.input, t)?)?;
                }
                (Op::Relu, _) => {
                    accumulate(&mut grads[node.inputs[0]], relu_backward(&values[id], &g)?)?;
                }
                (Op::MaxPool, NodeCache::Pool(idx)) => {
                    let (t, gy) = fold(&g)?;
                    accumulate(&mut grads[node.inputs[0]], unfold(maxpool2_backward(idx, &gy)?, t)?)?;
                }
                (Op::Upsample, _) => {
                    let (t, gy) = fold(&g)?;
                    accumulate(&mut grads[node.inputs[0]], unfold(upsample_nearest2_backward(&gy)?, t)?)?;
                }
                (Op::Concat, _) => {
                    let (t, gy) = fold(&g)?;
                    let (ga, gb) = concat_channels_backward(&gy, input.shape()[2])?;
                    accumulate(&mut grads[node.inputs[0]], unfold(ga, t)?)?;
                    accumulate(&mut grads[node.inputs[1]], unfold(gb, t)?)?;
                }
                (Op::LastPhase, _) => {
                    let phases = input.shape()[0];
                    let mut full = Tensor::zeros(input.shape().to_vec());
                    let chunk = g.len();
                    full.data_mut()[(phases - 1) * chunk..].copy_from_slice(g.data());
                    accumulate(&mut grads[node.inputs[0]], full)?;
                }
                (op, _) => {
                    return Err(Error::InvalidArgument(format!(
                        "backward: layer `{}` ({:?}) has no matching forward context",
                        node.name,
                        op.kind()
                    )))
                }
            }
        }

        let mut tensors = Vec::new();
        for (node, pg) in self.nodes.iter().zip(param_grads) {
            let shapes: Vec<Vec<usize>> = match &node.op {
                Op::Conv { kernel, bias, .. } => vec![kernel.shape().to_vec(), bias.shape().to_vec()],
                Op::ConvLstm(p) => p.tensors().iter().map(|(_, t)| t.shape().to_vec()).collect(),
                _ => continue,
            };
            if pg.is_empty() {
                tensors.extend(shapes.into_iter().map(Tensor::zeros));
            } else {
                tensors.extend(pg);
            }
        }
        let input = grads[0].take().unwrap_or_else(|| Tensor::zeros(values[0].shape().to_vec()));
        Ok(Gradients { tensors, input })
    }

    /// Layer-sequential unit-variance calibration: in graph order, rescales
    /// the kernel of every convolution except the head so that its output
    /// on `x` has RMS `target`. Returns the applied factors. Conv-LSTM
    /// parameters are left as initialized.
    pub fn calibrate_convolutions(&mut self, x: &Tensor<T>, target: f64) -> Result<Vec<(String, f64)>> {
        let last = self.nodes.len() - 1;
        let ids: Vec<usize> = (0..last)
            .filter(|&i| matches!(self.nodes[i].op, Op::Conv { .. }))
            .collect();
        let mut factors = Vec::with_capacity(ids.len());
        for id in ids {
            let (_, trace) = self.forward(x)?;
            let v = &trace.values[id];
            let rms = (v.dot(v)?.as_f64() / v.len() as f64).sqrt();
            let factor = if rms > 0.0 { target / rms } else { 1.0 };
            if let Op::Conv { kernel, .. } = &mut self.nodes[id].op {
                *kernel = kernel.scale(T::lit(factor));
            }
            factors.push((self.nodes[id].name.clone(), factor));
        }
        Ok(factors)
    }

    /// Class map for a batch: threshold at logit 0 for a single-channel head,
    /// argmax (lowest index on ties) otherwise.
    pub fn predict(&self, x: &Tensor<T>) -> Result<ClassMap> {
        let (logits, _) = self.forward(x)?;
        predict_from_logits(&logits)
    }
}

/// See [`ModelGraph::predict`].
pub fn predict_from_logits<T: Real>(logits: &Tensor<T>) -> Result<ClassMap> {
    let [n, k, h, w] = logits.dims4("predict")?;
    let plane = h * w;
    let z = logits.data();
    let mut classes = Vec::with_capacity(n * plane);
    for b in 0..n {
        for p in 0..plane {
            let at = |c: usize| z[(b * k + c) * plane + p];
            let class = if k == 1 {
                u32::from(at(0) >= T::zero())
            } else {
                let mut best = 0;
                for c in 1..k {
                    if at(c) > at(best) {
                        best = c;
                    }
                }
                best as u32
            };
            classes.push(class);
        }
    }
    ClassMap::new(n, h, w, classes)
}

/// `T×N×C×H×W → (T, (T·N)×C×H×W)`.
fn fold<T: Real>(v: &Tensor<T>) -> Result<(usize, Tensor<T>)> {
    match *v.shape() {
        [t, n, c, h, w] => Ok((t, v.clone().reshape([t * n, c, h, w])?)),
        _ => Err(Error::invalid_shape("fold", format!("expected rank 5, got {:?}", v.shape()))),
    }
}

fn unfold<T: Real>(v: Tensor<T>, t: usize) -> Result<Tensor<T>> {
    let [tn, c, h, w] = v.dims4("unfold")?;
    v.reshape([t, tn / t, c, h, w])
}

fn stack_phases<T: Real>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let [t, n, c, h, w] = match *x.shape() {
        [t, n, c, h, w] => [t, n, c, h, w],
        _ => return Err(Error::invalid_shape("stack_phases", format!("{:?}", x.shape()))),
    };
    let block = c * h * w;
    let mut out = Vec::with_capacity(x.len());
    for b in 0..n {
        for phase in 0..t {
            let start = (phase * n + b) * block;
            out.extend_from_slice(&x.data()[start..start + block]);
        }
    }
    Tensor::new([1, n, t * c, h, w], out)
}

fn unstack_phases<T: Real>(g: &Tensor<T>, phases: usize) -> Result<Tensor<T>> {
    let [_, n, tc, h, w] = match *g.shape() {
        [one, n, tc, h, w] => [one, n, tc, h, w],
        _ => return Err(Error::invalid_shape("unstack_phases", format!("{:?}", g.shape()))),
    };
    let c = tc / phases;
    let block = c * h * w;
    let mut out = vec![T::zero(); g.len()];
    for b in 0..n {
        for phase in 0..phases {
            let src = (b * phases + phase) * block;
            let dst = (phase * n + b) * block;
            out[dst..dst + block].copy_from_slice(&g.data()[src..src + block]);
        }
    }
    Tensor::new([phases, n, c, h, w], out)
}
