use super::tape::{log_softmax_slice, softmax_slice};
use super::{ParameterStore, Real, Tape, Tensor, Var};
use crate::rng::Rng;
use crate::Result;
use rand::Rng as _;

/// Affine map `x W + b`.
#[derive(Debug, Clone)]
pub struct Dense {
    pub weight: String,
    pub bias: String,
    pub inputs: usize,
    pub outputs: usize,
}

impl Dense {
    pub fn new(name: &str, inputs: usize, outputs: usize) -> Self {
        Dense { weight: format!("{name}/w"), bias: format!("{name}/b"), inputs, outputs }
    }

    pub fn init<T: Real>(&self, store: &mut ParameterStore<T>, rng: &mut Rng) -> Result<()> {
        store.init_uniform(&self.weight, self.inputs, self.inputs, self.outputs, rng)?;
        store.init_uniform(&self.bias, self.inputs, 1, self.outputs, rng)
    }

    pub fn forward<T: Real>(&self, tape: &mut Tape<T>, store: &ParameterStore<T>, x: Var) -> Result<Var> {
        let w = tape.param(&self.weight, store.get(&self.weight)?.clone());
        let b = tape.param(&self.bias, store.get(&self.bias)?.clone());
        let y = tape.matmul(x, w)?;
        tape.add_bias(y, b)
    }
}

/// Valid (unpadded) 1D cross-correlation with stride 1. Inputs are rows of
/// `len * in_channels` values stored position-major.
#[derive(Debug, Clone)]
pub struct Conv1d {
    pub kernel: String,
    pub bias: String,
    pub len: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub width: usize,
}

impl Conv1d {
    pub fn new(name: &str, len: usize, in_channels: usize, out_channels: usize, width: usize) -> Self {
        Conv1d {
            kernel: format!("{name}/kernel"),
            bias: format!("{name}/b"),
            len,
            in_channels,
            out_channels,
            width,
        }
    }

    pub fn out_len(&self) -> usize {
        self.len + 1 - self.width
    }

    /// Flattened output width.
    pub fn out_features(&self) -> usize {
        self.out_len() * self.out_channels
    }

    pub fn init<T: Real>(&self, store: &mut ParameterStore<T>, rng: &mut Rng) -> Result<()> {
        let fan_in = self.width * self.in_channels;
        store.init_uniform(&self.kernel, fan_in, fan_in, self.out_channels, rng)?;
        store.init_uniform(&self.bias, fan_in, 1, self.out_channels, rng)
    }

    /// `[m, len * cin] -> [m, out_len * cout]`.
    pub fn forward<T: Real>(&self, tape: &mut Tape<T>, store: &ParameterStore<T>, x: Var) -> Result<Var> {
        let m = tape.value(x).rows();
        let k = tape.param(&self.kernel, store.get(&self.kernel)?.clone());
        let b = tape.param(&self.bias, store.get(&self.bias)?.clone());
        let cols = tape.unfold1d(x, self.len, self.in_channels, self.width)?;
        let y = tape.matmul(cols, k)?;
        let y = tape.add_bias(y, b)?;
        tape.reshape(y, m, self.out_features())
    }
}

/// Recurrent state of an LSTM: cell and output, each `[m, hidden]`.
#[derive(Debug, Clone, Copy)]
pub struct LstmState {
    pub cell: Var,
    pub hidden: Var,
}

/// Standard LSTM cell with gates ordered (input, forget, candidate, output).
#[derive(Debug, Clone)]
pub struct Lstm {
    pub w_input: String,
    pub w_hidden: String,
    pub bias: String,
    pub inputs: usize,
    pub hidden: usize,
}

impl Lstm {
    pub fn new(name: &str, inputs: usize, hidden: usize) -> Self {
        Lstm {
            w_input: format!("{name}/wx"),
            w_hidden: format!("{name}/wh"),
            bias: format!("{name}/b"),
            inputs,
            hidden,
        }
    }

    /// Fan-in uniform weights; forget-gate bias starts at +1.
    pub fn init<T: Real>(&self, store: &mut ParameterStore<T>, rng: &mut Rng) -> Result<()> {
        let h = self.hidden;
        let fan_in = self.inputs + h;
        store.init_uniform(&self.w_input, fan_in, self.inputs, 4 * h, rng)?;
        store.init_uniform(&self.w_hidden, fan_in, h, 4 * h, rng)?;
        let mut b = vec![T::ZERO; 4 * h];
        b[h..2 * h].iter_mut().for_each(|v| *v = T::ONE);
        store.insert(&self.bias, Tensor::row_vector(b))
    }

    pub fn step<T: Real>(
        &self,
        tape: &mut Tape<T>,
        store: &ParameterStore<T>,
        x: Var,
        state: LstmState,
    ) -> Result<LstmState> {
        let h = self.hidden;
        let wx = tape.param(&self.w_input, store.get(&self.w_input)?.clone());
        let wh = tape.param(&self.w_hidden, store.get(&self.w_hidden)?.clone());
        let b = tape.param(&self.bias, store.get(&self.bias)?.clone());
        let gx = tape.matmul(x, wx)?;
        let gh = tape.matmul(state.hidden, wh)?;
        let gates = tape.add(gx, gh)?;
        let gates = tape.add_bias(gates, b)?;
        let i = tape.slice_cols(gates, 0, h)?;
        let f = tape.slice_cols(gates, h, h)?;
        let g = tape.slice_cols(gates, 2 * h, h)?;
        let o = tape.slice_cols(gates, 3 * h, h)?;
        let i = tape.sigmoid(i);
        let f = tape.sigmoid(f);
        let g = tape.tanh(g);
        let o = tape.sigmoid(o);
        let keep = tape.mul(f, state.cell)?;
        let write = tape.mul(i, g)?;
        let cell = tape.add(keep, write)?;
        let tc = tape.tanh(cell);
        let hidden = tape.mul(o, tc)?;
        Ok(LstmState { cell, hidden })
    }
}

pub fn softmax<T: Real>(logits: &[T]) -> Vec<T> {
    let mut v = logits.to_vec();
    softmax_slice(&mut v);
    v
}

pub fn log_softmax<T: Real>(logits: &[T]) -> Vec<T> {
    let mut v = logits.to_vec();
    log_softmax_slice(&mut v);
    v
}

/// Draws an index with probability proportional to `probs`.
pub fn sample_categorical<T: Real>(probs: &[T], rng: &mut Rng) -> usize {
    let total: f64 = probs.iter().map(|p| p.to_f64()).sum();
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p.to_f64();
        if u < acc {
            return i;
        }
    }
    // Rounding can leave u at the very top; fall back to the last nonzero entry.
    probs.iter().rposition(|p| p.to_f64() > 0.0).unwrap_or(probs.len() - 1)
}
