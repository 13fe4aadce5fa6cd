//! Single-layer LSTM followed by a one-node dense output, with exact
//! backpropagation through time.
//!
//! All parameters live in one flat buffer so optimizers and finite-difference
//! checks can treat them uniformly; [`Tensor`] names the sub-ranges.
//!
//! Per step, with `z = [h_{t−1}; x_t]`:
//!
//! ```text
//! f = σ(W_f z + b_f)    i = σ(W_i z + b_i)    g = tanh(W_g z + b_g)    o = σ(W_o z + b_o)
//! c_t = f ∘ c_{t−1} + i ∘ g
//! h_t = o ∘ tanh(c_t)
//! ```
//!
//! and the prediction is `w·h_T + b`.

use std::ops::Range;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::train::Loss;
use super::ModelError;

const GATES: usize = 4;
const FORGET: usize = 0;
const INPUT: usize = 1;
const CANDIDATE: usize = 2;
const OUTPUT: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tensor {
    ForgetWeights,
    ForgetBias,
    InputWeights,
    InputBias,
    CandidateWeights,
    CandidateBias,
    OutputWeights,
    OutputBias,
    DenseWeights,
    DenseBias,
}

impl Tensor {
    pub const ALL: [Tensor; 10] = [
        Tensor::ForgetWeights,
        Tensor::ForgetBias,
        Tensor::InputWeights,
        Tensor::InputBias,
        Tensor::CandidateWeights,
        Tensor::CandidateBias,
        Tensor::OutputWeights,
        Tensor::OutputBias,
        Tensor::DenseWeights,
        Tensor::DenseBias,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Tensor::ForgetWeights => "forget.weights",
            Tensor::ForgetBias => "forget.bias",
            Tensor::InputWeights => "input.weights",
            Tensor::InputBias => "input.bias",
            Tensor::CandidateWeights => "candidate.weights",
            Tensor::CandidateBias => "candidate.bias",
            Tensor::OutputWeights => "output.weights",
            Tensor::OutputBias => "output.bias",
            Tensor::DenseWeights => "dense.weights",
            Tensor::DenseBias => "dense.bias",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    hidden_size: usize,
    input_dim: usize,
    data: Vec<f64>,
}

impl LstmParams {
    pub fn zeros(hidden_size: usize, input_dim: usize) -> Self {
        let len = GATES * hidden_size * (hidden_size + input_dim + 1) + hidden_size + 1;
        Self {
            hidden_size,
            input_dim,
            data: vec![0.0; len],
        }
    }

    /// Gaussian weights scaled by `1/√fan_in`, zero biases except the
    /// forget gate, which starts at +1.
    pub fn init<R: Rng>(hidden_size: usize, input_dim: usize, rng: &mut R) -> Self {
        let mut params = Self::zeros(hidden_size, input_dim);
        let gate_scale = 1.0 / ((hidden_size + input_dim) as f64).sqrt();
        for tensor in [
            Tensor::ForgetWeights,
            Tensor::InputWeights,
            Tensor::CandidateWeights,
            Tensor::OutputWeights,
        ] {
            for w in params.tensor_mut(tensor) {
                let z: f64 = StandardNormal.sample(rng);
                *w = z * gate_scale;
            }
        }
        let dense_scale = 1.0 / (hidden_size as f64).sqrt();
        for w in params.tensor_mut(Tensor::DenseWeights) {
            let z: f64 = StandardNormal.sample(rng);
            *w = z * dense_scale;
        }
        params.tensor_mut(Tensor::ForgetBias).fill(1.0);
        params
    }

    pub fn from_parts(
        hidden_size: usize,
        input_dim: usize,
        tensors: impl Fn(Tensor) -> Option<Vec<f64>>,
    ) -> Result<Self, ModelError> {
        let mut params = Self::zeros(hidden_size, input_dim);
        for tensor in Tensor::ALL {
            let values = tensors(tensor)
                .ok_or_else(|| ModelError::Document(format!("missing tensor '{}'", tensor.name())))?;
            let slot = params.tensor_mut(tensor);
            if values.len() != slot.len() {
                return Err(ModelError::Shape(format!(
                    "{} has {} values, expected {}",
                    tensor.name(),
                    values.len(),
                    slot.len()
                )));
            }
            slot.copy_from_slice(&values);
        }
        if !params.is_finite() {
            return Err(ModelError::Document("non-finite parameter".into()));
        }
        Ok(params)
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden_size
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn row_len(&self) -> usize {
        self.hidden_size + self.input_dim
    }

    fn gate_block(&self) -> usize {
        self.hidden_size * (self.row_len() + 1)
    }

    pub fn range(&self, tensor: Tensor) -> Range<usize> {
        let n = self.hidden_size;
        let weights = n * self.row_len();
        let gate = |g: usize, bias: bool| {
            let start = g * self.gate_block() + if bias { weights } else { 0 };
            start..start + if bias { n } else { weights }
        };
        let dense = GATES * self.gate_block();
        match tensor {
            Tensor::ForgetWeights => gate(FORGET, false),
            Tensor::ForgetBias => gate(FORGET, true),
            Tensor::InputWeights => gate(INPUT, false),
            Tensor::InputBias => gate(INPUT, true),
            Tensor::CandidateWeights => gate(CANDIDATE, false),
            Tensor::CandidateBias => gate(CANDIDATE, true),
            Tensor::OutputWeights => gate(OUTPUT, false),
            Tensor::OutputBias => gate(OUTPUT, true),
            Tensor::DenseWeights => dense..dense + n,
            Tensor::DenseBias => dense + n..dense + n + 1,
        }
    }

    pub fn tensor(&self, tensor: Tensor) -> &[f64] {
        &self.data[self.range(tensor)]
    }

    pub fn tensor_mut(&mut self, tensor: Tensor) -> &mut [f64] {
        let range = self.range(tensor);
        &mut self.data[range]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn gate_weights(&self, gate: usize) -> &[f64] {
        let start = gate * self.gate_block();
        &self.data[start..start + self.hidden_size * self.row_len()]
    }

    fn gate_bias(&self, gate: usize) -> &[f64] {
        let start = gate * self.gate_block() + self.hidden_size * self.row_len();
        &self.data[start..start + self.hidden_size]
    }

    fn same_shape(&self, other: &Self) -> bool {
        self.hidden_size == other.hidden_size && self.input_dim == other.input_dim
    }

    pub(crate) fn add_scaled(&mut self, other: &Self, scale: f64) {
        debug_assert!(self.same_shape(other));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += scale * b;
        }
    }
}

/// Everything the backward pass needs from a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub prediction: f64,
    steps: usize,
    inputs: Vec<f64>,
    /// `(steps + 1) × N`, row 0 is the zero initial state.
    hidden: Vec<f64>,
    cell: Vec<f64>,
    /// `steps × 4N`, activated gate values in (f, i, g, o) order.
    gates: Vec<f64>,
}

impl ForwardTrace {
    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Hidden state after step `t` (`t = 0` is the initial state).
    pub fn hidden(&self, t: usize) -> &[f64] {
        let n = self.hidden.len() / (self.steps + 1);
        &self.hidden[t * n..(t + 1) * n]
    }

    pub fn cell(&self, t: usize) -> &[f64] {
        let n = self.cell.len() / (self.steps + 1);
        &self.cell[t * n..(t + 1) * n]
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Runs the recurrence over `inputs`, a flat `steps × input_dim` buffer.
pub fn lstm_forward(params: &LstmParams, inputs: &[f64]) -> Result<ForwardTrace, ModelError> {
    let d = params.input_dim;
    let n = params.hidden_size;
    if n == 0 || d == 0 {
        return Err(ModelError::Shape("hidden_size and input_dim must be positive".into()));
    }
    if inputs.is_empty() {
        return Err(ModelError::EmptyHistory);
    }
    if !inputs.len().is_multiple_of(d) {
        return Err(ModelError::Shape(format!(
            "{} inputs is not a multiple of input_dim {d}",
            inputs.len()
        )));
    }
    let steps = inputs.len() / d;
    let row = n + d;
    let mut hidden = vec![0.0; (steps + 1) * n];
    let mut cell = vec![0.0; (steps + 1) * n];
    let mut gates = vec![0.0; steps * GATES * n];
    let mut z = vec![0.0; row];

    for t in 0..steps {
        z[..n].copy_from_slice(&hidden[t * n..(t + 1) * n]);
        z[n..].copy_from_slice(&inputs[t * d..(t + 1) * d]);
        let act = &mut gates[t * GATES * n..(t + 1) * GATES * n];
        for gate in 0..GATES {
            let w = params.gate_weights(gate);
            let b = params.gate_bias(gate);
            for j in 0..n {
                let pre = b[j]
                    + w[j * row..(j + 1) * row]
                        .iter()
                        .zip(&z)
                        .map(|(a, b)| a * b)
                        .sum::<f64>();
                act[gate * n + j] = if gate == CANDIDATE { pre.tanh() } else { sigmoid(pre) };
            }
        }
        for j in 0..n {
            let (f, i, g, o) = (act[j], act[n + j], act[2 * n + j], act[3 * n + j]);
            let c = f * cell[t * n + j] + i * g;
            cell[(t + 1) * n + j] = c;
            hidden[(t + 1) * n + j] = o * c.tanh();
        }
    }

    let h_last = &hidden[steps * n..];
    let prediction = params.tensor(Tensor::DenseBias)[0]
        + params
            .tensor(Tensor::DenseWeights)
            .iter()
            .zip(h_last)
            .map(|(w, h)| w * h)
            .sum::<f64>();
    Ok(ForwardTrace {
        prediction,
        steps,
        inputs: inputs.to_vec(),
        hidden,
        cell,
        gates,
    })
}

/// Loss at the trace's prediction and its gradient with respect to every parameter.
pub fn lstm_backward(
    params: &LstmParams,
    trace: &ForwardTrace,
    target: f64,
    loss: Loss,
) -> (f64, LstmParams) {
    let value = loss.value(trace.prediction, target);
    let d_pred = loss.derivative(trace.prediction, target);
    (value, lstm_backward_from_output(params, trace, d_pred))
}

/// Gradient of any loss whose derivative with respect to the prediction is `d_prediction`.
pub fn lstm_backward_from_output(
    params: &LstmParams,
    trace: &ForwardTrace,
    d_prediction: f64,
) -> LstmParams {
    let n = params.hidden_size;
    let d = params.input_dim;
    let row = n + d;
    let steps = trace.steps;
    let mut grad = LstmParams::zeros(n, d);

    grad.tensor_mut(Tensor::DenseBias)[0] = d_prediction;
    let h_last = trace.hidden(steps);
    for (g, h) in grad.tensor_mut(Tensor::DenseWeights).iter_mut().zip(h_last) {
        *g = d_prediction * h;
    }
    let mut dh: Vec<f64> = params
        .tensor(Tensor::DenseWeights)
        .iter()
        .map(|w| d_prediction * w)
        .collect();
    let mut dc = vec![0.0; n];
    let mut d_pre = vec![0.0; GATES * n];
    let mut z = vec![0.0; row];

    for t in (0..steps).rev() {
        let act = &trace.gates[t * GATES * n..(t + 1) * GATES * n];
        let c_prev = trace.cell(t);
        let c = trace.cell(t + 1);
        for j in 0..n {
            let (f, i, g, o) = (act[j], act[n + j], act[2 * n + j], act[3 * n + j]);
            let tanh_c = c[j].tanh();
            dc[j] += dh[j] * o * (1.0 - tanh_c * tanh_c);
            d_pre[j] = dc[j] * c_prev[j] * f * (1.0 - f);
            d_pre[n + j] = dc[j] * g * i * (1.0 - i);
            d_pre[2 * n + j] = dc[j] * i * (1.0 - g * g);
            d_pre[3 * n + j] = dh[j] * tanh_c * o * (1.0 - o);
        }

        z[..n].copy_from_slice(trace.hidden(t));
        z[n..].copy_from_slice(&trace.inputs[t * d..(t + 1) * d]);
        let mut dz = vec![0.0; row];
        for gate in 0..GATES {
            let block = gate * grad.gate_block();
            let w = params.gate_weights(gate);
            for j in 0..n {
                let delta = d_pre[gate * n + j];
                if delta == 0.0 {
                    continue;
                }
                let gw = &mut grad.data[block + j * row..block + (j + 1) * row];
                for (k, zk) in z.iter().enumerate() {
                    gw[k] += delta * zk;
                }
                grad.data[block + n * row + j] += delta;
                for (k, wk) in w[j * row..(j + 1) * row].iter().enumerate() {
                    dz[k] += delta * wk;
                }
            }
        }
        dh.copy_from_slice(&dz[..n]);
        for j in 0..n {
            dc[j] *= act[j];
        }
    }
    grad
}
