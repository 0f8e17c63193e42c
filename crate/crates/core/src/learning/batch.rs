use crate::model::{AgentNet, SequenceInputs, OBS_FEATURES};
use crate::tensor::{Real, Tensor};
use crate::{Error, Result};

/// Observation of the state following a sequence's last step, used to
/// bootstrap the value when the episode continues.
#[derive(Debug, Clone, PartialEq)]
pub struct Bootstrap {
    pub obs: Vec<f32>,
    pub concealed: Vec<f32>,
}

/// Contiguous steps of one episode from one agent's point of view.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    /// Parameter version that generated the behaviour.
    pub version: u64,
    /// `len * OBS_FEATURES`.
    pub obs: Vec<f32>,
    /// `len * opponents * OBS_FEATURES`: the other players' views.
    pub concealed: Vec<f32>,
    pub actions: Vec<u8>,
    /// Behaviour probability of each taken action.
    pub behavior_probs: Vec<f32>,
    pub rewards: Vec<f32>,
    /// `len * 3 * opponents`, each opponent's inventory L1-normalised.
    pub opponent_inventories: Vec<f32>,
    /// Recurrent state before the first step.
    pub initial_state: Vec<f32>,
    /// `None` when the sequence ends with the episode.
    pub bootstrap: Option<Bootstrap>,
}

impl Sequence {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn validate(&self, net: &AgentNet) -> Result<()> {
        let n = self.len();
        let cw = net.concealed_width();
        let inv = 3 * net.arch().num_opponents;
        if n == 0 {
            return Err(Error::Shape("empty sequence".into()));
        }
        if self.obs.len() != n * OBS_FEATURES
            || self.concealed.len() != n * cw
            || self.behavior_probs.len() != n
            || self.rewards.len() != n
            || self.opponent_inventories.len() != n * inv
            || self.initial_state.len() != net.state_width()
        {
            return Err(Error::Shape(format!("sequence of {n} steps has misaligned fields")));
        }
        if let Some(b) = &self.bootstrap {
            if b.obs.len() != OBS_FEATURES || b.concealed.len() != cw {
                return Err(Error::Shape("bootstrap observation has the wrong width".into()));
            }
        }
        if self.actions.iter().any(|&a| a as usize >= crate::game::Action::COUNT) {
            return Err(Error::Domain("action index out of range".into()));
        }
        if self.behavior_probs.iter().any(|&p| !(p > 0.0 && p <= 1.0)) {
            return Err(Error::Domain("behaviour probabilities must lie in (0, 1]".into()));
        }
        if self.rewards.iter().any(|r| !r.is_finite()) {
            return Err(Error::Numeric("non-finite reward".into()));
        }
        Ok(())
    }
}

/// Sequences laid out for one learner pass. Each sequence occupies
/// `len + 1` time steps of the padded layout: its own steps, then the
/// bootstrap observation (zeros when the episode ended), then padding.
#[derive(Debug, Clone)]
pub struct PaddedBatch<T> {
    pub inputs: SequenceInputs<T>,
    pub lens: Vec<usize>,
}

impl<T: Real> PaddedBatch<T> {
    pub fn new(net: &AgentNet, sequences: &[Sequence]) -> Result<Self> {
        if sequences.is_empty() {
            return Err(Error::Shape("empty batch".into()));
        }
        for s in sequences {
            s.validate(net)?;
        }
        let batch = sequences.len();
        let lens: Vec<usize> = sequences.iter().map(Sequence::len).collect();
        let steps = lens.iter().max().copied().unwrap_or(0) + 1;
        let cw = net.concealed_width();
        let mut obs = Tensor::zeros(steps * batch, OBS_FEATURES);
        let mut concealed = Tensor::zeros(steps * batch, cw);
        let mut state = Tensor::zeros(batch, net.state_width());
        for (b, s) in sequences.iter().enumerate() {
            let put = |dst: &mut Tensor<T>, row: usize, src: &[f32]| {
                let w = dst.cols();
                for (d, v) in dst.data_mut()[row * w..(row + 1) * w].iter_mut().zip(src) {
                    *d = T::from_f64(*v as f64);
                }
            };
            for t in 0..s.len() {
                put(&mut obs, t * batch + b, &s.obs[t * OBS_FEATURES..(t + 1) * OBS_FEATURES]);
                put(&mut concealed, t * batch + b, &s.concealed[t * cw..(t + 1) * cw]);
            }
            if let Some(boot) = &s.bootstrap {
                put(&mut obs, s.len() * batch + b, &boot.obs);
                put(&mut concealed, s.len() * batch + b, &boot.concealed);
            }
            put(&mut state, b, &s.initial_state);
        }
        Ok(PaddedBatch {
            inputs: SequenceInputs { steps, batch, obs, concealed, initial_state: state },
            lens,
        })
    }

    pub fn batch(&self) -> usize {
        self.inputs.batch
    }

    pub fn rows(&self) -> usize {
        self.inputs.steps * self.inputs.batch
    }

    pub fn row(&self, t: usize, b: usize) -> usize {
        t * self.inputs.batch + b
    }

    /// Number of real (non-bootstrap, non-padding) steps.
    pub fn num_steps(&self) -> usize {
        self.lens.iter().sum()
    }

    /// `rows x 1` column with `1` on real steps.
    pub fn mask(&self) -> Tensor<T> {
        let mut m = Tensor::zeros(self.rows(), 1);
        for (b, &len) in self.lens.iter().enumerate() {
            for t in 0..len {
                m.data_mut()[self.row(t, b)] = T::ONE;
            }
        }
        m
    }
}
