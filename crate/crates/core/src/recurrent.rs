//! FC-LSTM and Conv-LSTM cells with peephole connections, sequence unrolling
//! and full backpropagation through time.
//!
//! Gate order everywhere is input, forget, output, candidate. Per step:
//!
//! ```text
//! i = σ(Wxi*X + Whi*H' + wci⊙C' + bi)
//! f = σ(Wxf*X + Whf*H' + wcf⊙C' + bf)
//! o = σ(Wxo*X + Who*H' + wco⊙C° + bo)      C° = C' or C (see OutputPeephole)
//! C = f⊙C' + i⊙tanh(Wxc*X + Whc*H' + bc)
//! H = o⊙tanh(C)
//! ```
//!
//! where `*` is a matrix product (FC) or a same-padded convolution (Conv) and
//! primes mark the previous step.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{conv2d, conv2d_backward, conv2d_into, sigmoid, ConvSpec, Real, Tensor};

/// Which cell state the output-gate peephole reads.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputPeephole {
    /// `W_co ⊙ C_{t−1}`.
    #[default]
    Previous,
    /// `W_co ⊙ C_t`, the usual peephole LSTM formulation.
    Current,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Gate {
    Input,
    Forget,
    Output,
    Candidate,
}

impl Gate {
    pub const ALL: [Gate; 4] = [Gate::Input, Gate::Forget, Gate::Output, Gate::Candidate];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Hidden activation `H` and memory cell `C`, always the same shape.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmState<T: Real> {
    pub hidden: Tensor<T>,
    pub cell: Tensor<T>,
}

impl<T: Real> LstmState<T> {
    pub fn zeros(shape: impl Into<Vec<usize>>) -> Self {
        let shape = shape.into();
        LstmState {
            hidden: Tensor::zeros(shape.clone()),
            cell: Tensor::zeros(shape),
        }
    }
}

// ---------------------------------------------------------------------------
// FC-LSTM

/// Parameters of a fully connected peephole LSTM. Matrices are row-major
/// `hidden×in` / `hidden×hidden`, indexed by [`Gate::index`].
#[derive(Clone, Debug, PartialEq)]
pub struct FcLstmParams<T: Real> {
    pub input_weights: [Tensor<T>; 4],
    pub recurrent_weights: [Tensor<T>; 4],
    pub biases: [Tensor<T>; 4],
    /// `w_ci`, `w_cf`, `w_co`.
    pub peepholes: [Tensor<T>; 3],
    pub output_peephole: OutputPeephole,
}

impl<T: Real> FcLstmParams<T> {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        FcLstmParams {
            input_weights: std::array::from_fn(|_| Tensor::zeros([hidden, input])),
            recurrent_weights: std::array::from_fn(|_| Tensor::zeros([hidden, hidden])),
            biases: std::array::from_fn(|_| Tensor::zeros([hidden])),
            peepholes: std::array::from_fn(|_| Tensor::zeros([hidden])),
            output_peephole: OutputPeephole::default(),
        }
    }

    pub fn hidden_size(&self) -> usize {
        self.biases[0].len()
    }

    pub fn input_size(&self) -> usize {
        self.input_weights[0].shape()[1]
    }

    fn validate(&self) -> Result<()> {
        let (h, n) = (self.hidden_size(), self.input_size());
        for g in 0..4 {
            check_shape("fc_lstm input weights", &self.input_weights[g], &[h, n])?;
            check_shape("fc_lstm recurrent weights", &self.recurrent_weights[g], &[h, h])?;
            check_shape("fc_lstm bias", &self.biases[g], &[h])?;
        }
        for p in &self.peepholes {
            check_shape("fc_lstm peephole", p, &[h])?;
        }
        Ok(())
    }
}

fn check_shape<T: Real>(op: &'static str, t: &Tensor<T>, expected: &[usize]) -> Result<()> {
    if t.shape() != expected {
        return Err(Error::shape(op, t.shape(), expected));
    }
    Ok(())
}

/// Forward context of one FC-LSTM step.
#[derive(Clone, Debug)]
pub struct FcLstmCache<T: Real> {
    input: Vec<T>,
    prev: LstmState<T>,
    gates: [Vec<T>; 4],
    cell: Vec<T>,
    tanh_cell: Vec<T>,
}

/// Gradients of one FC-LSTM step.
#[derive(Clone, Debug)]
pub struct FcLstmGrads<T: Real> {
    pub input: Tensor<T>,
    pub prev: LstmState<T>,
    pub params: FcLstmParams<T>,
}

fn matvec<T: Real>(m: &Tensor<T>, v: &[T], out: &mut [T]) {
    let cols = v.len();
    for (r, o) in out.iter_mut().enumerate() {
        *o += m.data()[r * cols..(r + 1) * cols]
            .iter()
            .zip(v)
            .map(|(&a, &b)| a * b)
            .sum::<T>();
    }
}

pub fn fc_lstm_step<T: Real>(
    x: &Tensor<T>,
    prev: &LstmState<T>,
    params: &FcLstmParams<T>,
) -> Result<(LstmState<T>, FcLstmCache<T>)> {
    params.validate()?;
    let (h, n) = (params.hidden_size(), params.input_size());
    check_shape("fc_lstm_step input", x, &[n])?;
    check_shape("fc_lstm_step hidden", &prev.hidden, &[h])?;
    check_shape("fc_lstm_step cell", &prev.cell, &[h])?;

    let mut pre: [Vec<T>; 4] = std::array::from_fn(|g| params.biases[g].data().to_vec());
    for (g, p) in pre.iter_mut().enumerate() {
        matvec(&params.input_weights[g], x.data(), p);
        matvec(&params.recurrent_weights[g], prev.hidden.data(), p);
    }
    let cp = prev.cell.data();
    let [wci, wcf, wco] = [0, 1, 2].map(|k| params.peepholes[k].data());
    let mut gates: [Vec<T>; 4] = std::array::from_fn(|_| vec![T::zero(); h]);
    let mut cell = vec![T::zero(); h];
    let mut tanh_cell = vec![T::zero(); h];
    let mut hidden = vec![T::zero(); h];
    for j in 0..h {
        let i = sigmoid(pre[0][j] + wci[j] * cp[j]);
        let f = sigmoid(pre[1][j] + wcf[j] * cp[j]);
        let g = pre[3][j].tanh();
        let c = f * cp[j] + i * g;
        let peek = match params.output_peephole {
            OutputPeephole::Previous => cp[j],
            OutputPeephole::Current => c,
        };
        let o = sigmoid(pre[2][j] + wco[j] * peek);
        let tc = c.tanh();
        gates[0][j] = i;
        gates[1][j] = f;
        gates[2][j] = o;
        gates[3][j] = g;
        cell[j] = c;
        tanh_cell[j] = tc;
        hidden[j] = o * tc;
    }
    let state = LstmState {
        hidden: Tensor::new([h], hidden)?,
        cell: Tensor::new([h], cell.clone())?,
    };
    let cache = FcLstmCache {
        input: x.data().to_vec(),
        prev: prev.clone(),
        gates,
        cell,
        tanh_cell,
    };
    Ok((state, cache))
}

/// Backward of [`fc_lstm_step`] given gradients w.r.t. the new `H` and `C`.
pub fn fc_lstm_step_backward<T: Real>(
    params: &FcLstmParams<T>,
    cache: &FcLstmCache<T>,
    grad: &LstmState<T>,
) -> Result<FcLstmGrads<T>> {
    let (h, n) = (params.hidden_size(), params.input_size());
    check_shape("fc_lstm_step_backward hidden", &grad.hidden, &[h])?;
    check_shape("fc_lstm_step_backward cell", &grad.cell, &[h])?;
    let cp = cache.prev.cell.data();
    let [wci, wcf, wco] = [0, 1, 2].map(|k| params.peepholes[k].data());
    let mut dpre: [Vec<T>; 4] = std::array::from_fn(|_| vec![T::zero(); h]);
    let mut dcp = vec![T::zero(); h];
    let mut dpeep: [Vec<T>; 3] = std::array::from_fn(|_| vec![T::zero(); h]);
    for j in 0..h {
        let [i, f, o, g] = [0, 1, 2, 3].map(|k| cache.gates[k][j]);
        let (c, tc) = (cache.cell[j], cache.tanh_cell[j]);
        let gh = grad.hidden.data()[j];
        let dpo = gh * tc * o * (T::one() - o);
        let mut dc = grad.cell.data()[j] + gh * o * (T::one() - tc * tc);
        match params.output_peephole {
            OutputPeephole::Previous => {
                dcp[j] += dpo * wco[j];
                dpeep[2][j] = dpo * cp[j];
            }
            OutputPeephole::Current => {
                dc += dpo * wco[j];
                dpeep[2][j] = dpo * c;
            }
        }
        let dpi = dc * g * i * (T::one() - i);
        let dpf = dc * cp[j] * f * (T::one() - f);
        let dpc = dc * i * (T::one() - g * g);
        dcp[j] += dc * f + dpi * wci[j] + dpf * wcf[j];
        dpeep[0][j] = dpi * cp[j];
        dpeep[1][j] = dpf * cp[j];
        dpre[0][j] = dpi;
        dpre[1][j] = dpf;
        dpre[2][j] = dpo;
        dpre[3][j] = dpc;
    }
    let mut dx = vec![T::zero(); n];
    let mut dh = vec![T::zero(); h];
    let outer = |d: &[T], v: &[T]| -> Vec<T> {
        d.iter().flat_map(|&a| v.iter().map(move |&b| a * b)).collect()
    };
    let mut grads = FcLstmParams::zeros(n, h);
    grads.output_peephole = params.output_peephole;
    for g in 0..4 {
        let wx = params.input_weights[g].data();
        let wh = params.recurrent_weights[g].data();
        for r in 0..h {
            for (k, dxk) in dx.iter_mut().enumerate() {
                *dxk += wx[r * n + k] * dpre[g][r];
            }
            for (k, dhk) in dh.iter_mut().enumerate() {
                *dhk += wh[r * h + k] * dpre[g][r];
            }
        }
        grads.input_weights[g] = Tensor::new([h, n], outer(&dpre[g], &cache.input))?;
        grads.recurrent_weights[g] = Tensor::new([h, h], outer(&dpre[g], cache.prev.hidden.data()))?;
        grads.biases[g] = Tensor::new([h], dpre[g].clone())?;
    }
    for (k, d) in dpeep.into_iter().enumerate() {
        grads.peepholes[k] = Tensor::new([h], d)?;
    }
    Ok(FcLstmGrads {
        input: Tensor::new([n], dx)?,
        prev: LstmState {
            hidden: Tensor::new([h], dh)?,
            cell: Tensor::new([h], dcp)?,
        },
        params: grads,
    })
}

// ---------------------------------------------------------------------------
// Conv-LSTM

/// Parameters of a convolutional peephole LSTM.
///
/// The four gate kernels are stored stacked along the output-channel axis in
/// [`Gate`] order: `input_kernel` is `4h×Cin×k×k`, `recurrent_kernel` is
/// `4h×h×k×k`, `bias` has `4h` entries. Peephole weights are one scalar per
/// hidden channel and gate (`3×h`), broadcast over space.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvLstmParams<T: Real> {
    pub input_kernel: Tensor<T>,
    pub recurrent_kernel: Tensor<T>,
    pub bias: Tensor<T>,
    pub peephole: Option<Tensor<T>>,
    pub dilation: usize,
    pub output_peephole: OutputPeephole,
}

impl<T: Real> ConvLstmParams<T> {
    pub fn zeros(input_channels: usize, hidden: usize, kernel: usize, peephole: bool) -> Self {
        ConvLstmParams {
            input_kernel: Tensor::zeros([4 * hidden, input_channels, kernel, kernel]),
            recurrent_kernel: Tensor::zeros([4 * hidden, hidden, kernel, kernel]),
            bias: Tensor::zeros([4 * hidden]),
            peephole: peephole.then(|| Tensor::zeros([3, hidden])),
            dilation: 1,
            output_peephole: OutputPeephole::default(),
        }
    }

    /// Kernels uniform in `±sqrt(1/fan_in)`, forget bias 1, other biases and
    /// peepholes 0.
    pub fn init<R: Rng + ?Sized>(
        rng: &mut R,
        input_channels: usize,
        hidden: usize,
        kernel: usize,
        peephole: bool,
    ) -> Self {
        let mut p = Self::zeros(input_channels, hidden, kernel, peephole);
        let bx = (1.0 / (input_channels * kernel * kernel) as f64).sqrt();
        let bh = (1.0 / (hidden * kernel * kernel) as f64).sqrt();
        for v in p.input_kernel.data_mut() {
            *v = T::lit(rng.gen_range(-bx..bx));
        }
        for v in p.recurrent_kernel.data_mut() {
            *v = T::lit(rng.gen_range(-bh..bh));
        }
        p.bias.data_mut()[hidden..2 * hidden].fill(T::one());
        p
    }

    pub fn with_dilation(mut self, dilation: usize) -> Self {
        self.dilation = dilation;
        self
    }

    pub fn hidden_channels(&self) -> usize {
        self.bias.len() / 4
    }

    pub fn input_channels(&self) -> usize {
        self.input_kernel.shape()[1]
    }

    pub fn kernel_size(&self) -> usize {
        self.input_kernel.shape()[2]
    }

    pub fn spec(&self) -> ConvSpec {
        ConvSpec::same(self.kernel_size(), self.dilation)
    }

    /// Input kernel of one gate, `h×Cin×k×k`.
    pub fn gate_input_kernel(&self, gate: Gate) -> Tensor<T> {
        gate_block(&self.input_kernel, gate, self.hidden_channels())
    }

    /// Recurrent kernel of one gate, `h×h×k×k`.
    pub fn gate_recurrent_kernel(&self, gate: Gate) -> Tensor<T> {
        gate_block(&self.recurrent_kernel, gate, self.hidden_channels())
    }

    pub fn validate(&self) -> Result<()> {
        let h = self.hidden_channels();
        let k = self.kernel_size();
        if self.bias.rank() != 1 || h == 0 || self.bias.len() % 4 != 0 {
            return Err(Error::invalid_shape("conv_lstm params", "bias must have 4·hidden entries"));
        }
        if k % 2 == 0 {
            return Err(Error::invalid_shape("conv_lstm params", format!("kernel size {k} must be odd")));
        }
        if self.dilation == 0 {
            return Err(Error::invalid_shape("conv_lstm params", "dilation must be positive"));
        }
        check_shape("conv_lstm input kernel", &self.input_kernel, &[4 * h, self.input_channels(), k, k])?;
        check_shape("conv_lstm recurrent kernel", &self.recurrent_kernel, &[4 * h, h, k, k])?;
        if let Some(p) = &self.peephole {
            check_shape("conv_lstm peephole", p, &[3, h])?;
        }
        Ok(())
    }

    /// Canonical flattening of a 1×1-kernel cell into the equivalent
    /// FC-LSTM: each gate's `h×Cin×1×1` kernel becomes an `h×Cin` matrix.
    pub fn to_fc(&self) -> Result<FcLstmParams<T>> {
        self.validate()?;
        if self.kernel_size() != 1 {
            return Err(Error::InvalidArgument(format!(
                "only 1×1 kernels flatten to an FC-LSTM (kernel size {})",
                self.kernel_size()
            )));
        }
        let (h, n) = (self.hidden_channels(), self.input_channels());
        let mut fc = FcLstmParams::zeros(n, h);
        fc.output_peephole = self.output_peephole;
        for gate in Gate::ALL {
            let g = gate.index();
            fc.input_weights[g] = self.gate_input_kernel(gate).reshape([h, n])?;
            fc.recurrent_weights[g] = self.gate_recurrent_kernel(gate).reshape([h, h])?;
            fc.biases[g] = Tensor::new([h], self.bias.data()[g * h..(g + 1) * h].to_vec())?;
        }
        if let Some(p) = &self.peephole {
            for k in 0..3 {
                fc.peepholes[k] = Tensor::new([h], p.data()[k * h..(k + 1) * h].to_vec())?;
            }
        }
        Ok(fc)
    }

    /// Named parameter tensors in a fixed order.
    pub fn tensors(&self) -> Vec<(&'static str, &Tensor<T>)> {
        let mut v = vec![
            ("input_kernel", &self.input_kernel),
            ("recurrent_kernel", &self.recurrent_kernel),
            ("bias", &self.bias),
        ];
        if let Some(p) = &self.peephole {
            v.push(("peephole", p));
        }
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut v = vec![&mut self.input_kernel, &mut self.recurrent_kernel, &mut self.bias];
        if let Some(p) = &mut self.peephole {
            v.push(p);
        }
        v
    }

    /// Zero tensors shaped like these parameters (gradient accumulator).
    pub fn zeros_like(&self) -> Self {
        ConvLstmParams {
            input_kernel: Tensor::zeros(self.input_kernel.shape().to_vec()),
            recurrent_kernel: Tensor::zeros(self.recurrent_kernel.shape().to_vec()),
            bias: Tensor::zeros(self.bias.shape().to_vec()),
            peephole: self.peephole.as_ref().map(|p| Tensor::zeros(p.shape().to_vec())),
            dilation: self.dilation,
            output_peephole: self.output_peephole,
        }
    }
}

fn gate_block<T: Real>(stacked: &Tensor<T>, gate: Gate, hidden: usize) -> Tensor<T> {
    let per_out: usize = stacked.shape()[1..].iter().product();
    let g = gate.index();
    let mut shape = stacked.shape().to_vec();
    shape[0] = hidden;
    Tensor::new(shape, stacked.data()[g * hidden * per_out..(g + 1) * hidden * per_out].to_vec())
        .expect("gate block shape")
}

/// Forward context of one Conv-LSTM step.
#[derive(Clone, Debug)]
pub struct ConvLstmStepCache<T: Real> {
    input: Tensor<T>,
    prev: LstmState<T>,
    /// Activated gates `i, f, o, g` stacked like the kernels: `N×4h×H×W`.
    gates: Tensor<T>,
    cell: Tensor<T>,
    tanh_cell: Tensor<T>,
    prev_is_zero: bool,
}

impl<T: Real> ConvLstmStepCache<T> {
    /// Activated gate values `N×4h×H×W` in [`Gate`] order.
    pub fn gates(&self) -> &Tensor<T> {
        &self.gates
    }
}

/// One Conv-LSTM step. `x` is `N×Cin×H×W`; the state is `N×h×H×W`.
pub fn conv_lstm_step<T: Real>(
    x: &Tensor<T>,
    prev: &LstmState<T>,
    params: &ConvLstmParams<T>,
) -> Result<(LstmState<T>, ConvLstmStepCache<T>)> {
    params.validate()?;
    step_forward(x, prev, params, false)
}

fn step_forward<T: Real>(
    x: &Tensor<T>,
    prev: &LstmState<T>,
    params: &ConvLstmParams<T>,
    prev_is_zero: bool,
) -> Result<(LstmState<T>, ConvLstmStepCache<T>)> {
    let [n, _, hh, ww] = x.dims4("conv_lstm_step input")?;
    let h = params.hidden_channels();
    let state_shape = [n, h, hh, ww];
    if prev.hidden.shape() != state_shape || prev.cell.shape() != state_shape {
        return Err(Error::shape("conv_lstm_step (input vs previous state)", x.shape(), prev.hidden.shape()));
    }
    let spec = params.spec();
    let mut pre = conv2d(x, &params.input_kernel, Some(&params.bias), &spec)?;
    if !prev_is_zero {
        conv2d_into(&prev.hidden, &params.recurrent_kernel, &spec, &mut pre, true)?;
    }
    let plane = hh * ww;
    let mut cell = Tensor::zeros(state_shape);
    let mut tanh_cell = Tensor::zeros(state_shape);
    let mut hidden = Tensor::zeros(state_shape);
    {
        let gates = pre.data_mut();
        let cp = prev.cell.data();
        let (cd, td, hd) = (cell.data_mut(), tanh_cell.data_mut(), hidden.data_mut());
        for b in 0..n {
            for j in 0..h {
                let (wci, wcf, wco) = match &params.peephole {
                    Some(p) => (p.data()[j], p.data()[h + j], p.data()[2 * h + j]),
                    None => (T::zero(), T::zero(), T::zero()),
                };
                let gate_at = |g: usize| ((b * 4 + g) * h + j) * plane;
                let (oi, of, oo, oc) = (gate_at(0), gate_at(1), gate_at(2), gate_at(3));
                let os = (b * h + j) * plane;
                for p in 0..plane {
                    let c_prev = cp[os + p];
                    let i = sigmoid(gates[oi + p] + wci * c_prev);
                    let f = sigmoid(gates[of + p] + wcf * c_prev);
                    let g = gates[oc + p].tanh();
                    let c = f * c_prev + i * g;
                    let peek = match params.output_peephole {
                        OutputPeephole::Previous => c_prev,
                        OutputPeephole::Current => c,
                    };
                    let o = sigmoid(gates[oo + p] + wco * peek);
                    let tc = c.tanh();
                    gates[oi + p] = i;
                    gates[of + p] = f;
                    gates[oo + p] = o;
                    gates[oc + p] = g;
                    cd[os + p] = c;
                    td[os + p] = tc;
                    hd[os + p] = o * tc;
                }
            }
        }
    }
    let state = LstmState {
        hidden,
        cell: cell.clone(),
    };
    let cache = ConvLstmStepCache {
        input: x.clone(),
        prev: prev.clone(),
        gates: pre,
        cell,
        tanh_cell,
        prev_is_zero,
    };
    Ok((state, cache))
}

/// Backward of [`conv_lstm_step`]. Parameter gradients are added into
/// `grads`; returns the gradients w.r.t. the step input and previous state.
pub fn conv_lstm_step_backward<T: Real>(
    params: &ConvLstmParams<T>,
    cache: &ConvLstmStepCache<T>,
    grad: &LstmState<T>,
    grads: &mut ConvLstmParams<T>,
) -> Result<(Tensor<T>, LstmState<T>)> {
    let state_shape = cache.cell.shape();
    if grad.hidden.shape() != state_shape || grad.cell.shape() != state_shape {
        return Err(Error::shape("conv_lstm_step_backward", grad.hidden.shape(), state_shape));
    }
    let [n, h, hh, ww] = cache.cell.dims4("conv_lstm_step_backward")?;
    let plane = hh * ww;
    let mut dpre = Tensor::zeros(cache.gates.shape().to_vec());
    let mut dcp = Tensor::zeros(state_shape.to_vec());
    {
        let gates = cache.gates.data();
        let (cd, td, cp) = (cache.cell.data(), cache.tanh_cell.data(), cache.prev.cell.data());
        let (gh, gc) = (grad.hidden.data(), grad.cell.data());
        let dp = dpre.data_mut();
        let dcpd = dcp.data_mut();
        let mut dpeep = grads.peephole.as_mut().map(|t| t.data_mut());
        for b in 0..n {
            for j in 0..h {
                let (wci, wcf, wco) = match &params.peephole {
                    Some(p) => (p.data()[j], p.data()[h + j], p.data()[2 * h + j]),
                    None => (T::zero(), T::zero(), T::zero()),
                };
                let gate_at = |g: usize| ((b * 4 + g) * h + j) * plane;
                let (oi, of, oo, oc) = (gate_at(0), gate_at(1), gate_at(2), gate_at(3));
                let os = (b * h + j) * plane;
                let (mut sci, mut scf, mut sco) = (T::zero(), T::zero(), T::zero());
                for p in 0..plane {
                    let (i, f, o, g) = (gates[oi + p], gates[of + p], gates[oo + p], gates[oc + p]);
                    let (c, tc, c_prev) = (cd[os + p], td[os + p], cp[os + p]);
                    let dh = gh[os + p];
                    let dpo = dh * tc * o * (T::one() - o);
                    let mut dc = gc[os + p] + dh * o * (T::one() - tc * tc);
                    let mut dcp_acc = T::zero();
                    match params.output_peephole {
                        OutputPeephole::Previous => {
                            dcp_acc += dpo * wco;
                            sco += dpo * c_prev;
                        }
                        OutputPeephole::Current => {
                            dc += dpo * wco;
                            sco += dpo * c;
                        }
                    }
                    let dpi = dc * g * i * (T::one() - i);
                    let dpf = dc * c_prev * f * (T::one() - f);
                    let dpc = dc * i * (T::one() - g * g);
                    dcp_acc += dc * f + dpi * wci + dpf * wcf;
                    sci += dpi * c_prev;
                    scf += dpf * c_prev;
                    dcpd[os + p] = dcp_acc;
                    dp[oi + p] = dpi;
                    dp[of + p] = dpf;
                    dp[oo + p] = dpo;
                    dp[oc + p] = dpc;
                }
                if let Some(d) = dpeep.as_deref_mut() {
                    d[j] += sci;
                    d[h + j] += scf;
                    d[2 * h + j] += sco;
                }
            }
        }
    }
    let spec = params.spec();
    let gx = conv2d_backward(&cache.input, &params.input_kernel, &spec, &dpre)?;
    grads.input_kernel.add_assign(&gx.kernel)?;
    grads.bias.add_assign(&gx.bias)?;
    let dh_prev = if cache.prev_is_zero {
        // H' is the constant zero initial state: no kernel gradient, and the
        // state gradient is never consumed.
        Tensor::zeros(state_shape.to_vec())
    } else {
        let gh = conv2d_backward(&cache.prev.hidden, &params.recurrent_kernel, &spec, &dpre)?;
        grads.recurrent_kernel.add_assign(&gh.kernel)?;
        gh.input
    };
    Ok((
        gx.input,
        LstmState {
            hidden: dh_prev,
            cell: dcp,
        },
    ))
}

/// Forward context of a whole unrolled sequence.
#[derive(Clone, Debug)]
pub struct ConvLstmSequenceCache<T: Real> {
    steps: Vec<ConvLstmStepCache<T>>,
    input_shape: Vec<usize>,
}

impl<T: Real> ConvLstmSequenceCache<T> {
    pub fn steps(&self) -> &[ConvLstmStepCache<T>] {
        &self.steps
    }
}

/// Output of [`conv_lstm_sequence`].
#[derive(Clone, Debug)]
pub struct SequenceOutput<T: Real> {
    /// Hidden states of every phase, `T×N×h×H×W`.
    pub hidden: Tensor<T>,
    pub last: LstmState<T>,
    pub cache: ConvLstmSequenceCache<T>,
}

/// Unrolls the cell over a `T×N×Cin×H×W` sequence from a zero initial state.
pub fn conv_lstm_sequence<T: Real>(x: &Tensor<T>, params: &ConvLstmParams<T>) -> Result<SequenceOutput<T>> {
    params.validate()?;
    let (phases, n, hh, ww) = match *x.shape() {
        [t, n, _, hh, ww] => (t, n, hh, ww),
        _ => {
            return Err(Error::invalid_shape(
                "conv_lstm_sequence",
                format!("expected T×N×C×H×W input, got {:?}", x.shape()),
            ))
        }
    };
    let h = params.hidden_channels();
    let mut state = LstmState::zeros([n, h, hh, ww]);
    let mut steps = Vec::with_capacity(phases);
    let mut hidden = Vec::with_capacity(phases * n * h * hh * ww);
    for t in 0..phases {
        let xt = x.outer(t)?;
        let (next, cache) = step_forward(&xt, &state, params, t == 0)?;
        hidden.extend_from_slice(next.hidden.data());
        steps.push(cache);
        state = next;
    }
    Ok(SequenceOutput {
        hidden: Tensor::new([phases, n, h, hh, ww], hidden)?,
        last: state,
        cache: ConvLstmSequenceCache {
            steps,
            input_shape: x.shape().to_vec(),
        },
    })
}

/// Full backpropagation through time. `grad_hidden` is the gradient w.r.t.
/// the `T×N×h×H×W` hidden sequence; `grad_last` optionally adds gradients
/// w.r.t. the final state. Returns the input gradient and the parameter
/// gradients.
pub fn conv_lstm_sequence_backward<T: Real>(
    params: &ConvLstmParams<T>,
    cache: &ConvLstmSequenceCache<T>,
    grad_hidden: &Tensor<T>,
    grad_last: Option<&LstmState<T>>,
) -> Result<(Tensor<T>, ConvLstmParams<T>)> {
    let phases = cache.steps.len();
    let state_shape = cache.steps[0].cell.shape().to_vec();
    let mut expected = vec![phases];
    expected.extend_from_slice(&state_shape);
    if grad_hidden.shape() != expected.as_slice() {
        return Err(Error::shape("conv_lstm_sequence_backward", grad_hidden.shape(), &expected));
    }
    let mut grads = params.zeros_like();
    let mut carry = match grad_last {
        Some(g) => g.clone(),
        None => LstmState::zeros(state_shape.clone()),
    };
    let mut dx_steps = vec![None; phases];
    for t in (0..phases).rev() {
        carry.hidden.add_assign(&grad_hidden.outer(t)?)?;
        let (dx, dprev) = conv_lstm_step_backward(params, &cache.steps[t], &carry, &mut grads)?;
        dx_steps[t] = Some(dx);
        carry = dprev;
    }
    let mut dx = Vec::with_capacity(cache.input_shape.iter().product());
    for d in dx_steps.into_iter().flatten() {
        dx.extend_from_slice(d.data());
    }
    Ok((Tensor::new(cache.input_shape.clone(), dx)?, grads))
}
