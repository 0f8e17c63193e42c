use super::features::{EXTRA_FEATURES, OBS_FEATURES, WINDOW_FEATURES};
use super::{architecture_hash, AgentVariant, ArchConfig};
use crate::game::{Action, NUM_CHANNELS, WINDOW};
use crate::rng::Rng;
use crate::tensor::{Conv1d, Dense, Lstm, LstmState, ParameterStore, Real, Tape, Tensor, Var};
use crate::{Error, Result};
use std::collections::BTreeMap;

const NUM_ACTIONS: usize = Action::COUNT;

/// Conv + MLP encoder applied to one observation's features.
#[derive(Debug, Clone)]
struct Encoder {
    conv: Conv1d,
    embed: Dense,
}

impl Encoder {
    fn new(prefix: &str, arch: &ArchConfig, outputs: usize) -> Self {
        let conv = Conv1d::new(&format!("{prefix}/conv"), WINDOW * WINDOW, NUM_CHANNELS, arch.conv_channels, arch.conv_width);
        let embed = Dense::new(&format!("{prefix}/embed"), conv.out_features() + EXTRA_FEATURES, outputs);
        Encoder { conv, embed }
    }

    fn init<T: Real>(&self, store: &mut ParameterStore<T>, rng: &mut Rng) -> Result<()> {
        self.conv.init(store, rng)?;
        self.embed.init(store, rng)
    }

    /// `[m, OBS_FEATURES]` starting at column `offset` of `x` -> `[m, outputs]`.
    fn forward<T: Real>(&self, tape: &mut Tape<T>, store: &ParameterStore<T>, x: Var, offset: usize) -> Result<Var> {
        let window = tape.slice_cols(x, offset, WINDOW_FEATURES)?;
        let extra = tape.slice_cols(x, offset + WINDOW_FEATURES, EXTRA_FEATURES)?;
        let c = self.conv.forward(tape, store, window)?;
        let c = tape.relu(c);
        let joined = tape.concat_cols(&[c, extra])?;
        let e = self.embed.forward(tape, store, joined)?;
        Ok(tape.relu(e))
    }
}

/// Encoder over all opponents' observations, sum-pooled, then one hidden
/// layer. Used by the q-network and by the centralised critic.
#[derive(Debug, Clone)]
struct ConcealedNet {
    encoder: Encoder,
    hidden: Dense,
    opponents: usize,
}

impl ConcealedNet {
    fn new(prefix: &str, arch: &ArchConfig) -> Self {
        ConcealedNet {
            encoder: Encoder::new(prefix, arch, arch.concealed_embed),
            hidden: Dense::new(&format!("{prefix}/hidden"), arch.concealed_embed, arch.concealed_hidden),
            opponents: arch.num_opponents,
        }
    }

    fn init<T: Real>(&self, store: &mut ParameterStore<T>, rng: &mut Rng) -> Result<()> {
        self.encoder.init(store, rng)?;
        self.hidden.init(store, rng)
    }

    fn forward<T: Real>(&self, tape: &mut Tape<T>, store: &ParameterStore<T>, concealed: Var) -> Result<Var> {
        let mut pooled = self.encoder.forward(tape, store, concealed, 0)?;
        for o in 1..self.opponents {
            let e = self.encoder.forward(tape, store, concealed, o * OBS_FEATURES)?;
            pooled = tape.add(pooled, e)?;
        }
        let h = self.hidden.forward(tape, store, pooled)?;
        Ok(tape.relu(h))
    }
}

/// Per-step learner outputs for a whole batch, rows in time-major order
/// (`row = t * batch + b`). Fields a variant lacks are `None`.
#[derive(Debug, Clone, Copy)]
pub struct StepVars {
    /// Log of the K option policies, `[m, K * 8]`.
    pub log_eta: Option<Var>,
    pub eta: Option<Var>,
    pub log_q: Option<Var>,
    pub q: Option<Var>,
    pub log_p: Option<Var>,
    pub p: Option<Var>,
    /// Value components, `[m, K]`.
    pub c: Option<Var>,
    /// `V = sum_z q c` for factorised critics, otherwise the plain value head.
    pub value: Var,
    /// Log of the monolithic policy, `[m, 8]`.
    pub log_policy: Option<Var>,
    /// Predicted opponent inventories, `[m, 3 * opponents]`.
    pub aux: Option<Var>,
}

/// A batch of sequences laid out time-major.
#[derive(Debug, Clone)]
pub struct SequenceInputs<T> {
    pub steps: usize,
    pub batch: usize,
    /// `[steps * batch, OBS_FEATURES]`.
    pub obs: Tensor<T>,
    /// `[steps * batch, opponents * OBS_FEATURES]`.
    pub concealed: Tensor<T>,
    /// `[batch, 2 * hidden]`: cell state then output.
    pub initial_state: Tensor<T>,
}

/// Result of one batched actor step.
#[derive(Debug, Clone)]
pub struct ActorOutput<T> {
    /// Behaviour policy, `[envs, 8]`.
    pub mu: Tensor<T>,
    /// Option posterior from own observations, `[envs, K]`; `None` for flat
    /// policies and for forced options.
    pub p: Option<Tensor<T>>,
    pub state: Tensor<T>,
}

/// One row of learner outputs as plain numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkOutput {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    pub eta: Vec<Vec<f64>>,
    pub c: Vec<f64>,
    pub value: f64,
    pub pi: Vec<f64>,
    pub mu: Vec<f64>,
}

impl NetworkOutput {
    /// Largest violation of the mixture identities and normalisation.
    pub fn identity_error(&self) -> f64 {
        let mut err: f64 = 0.0;
        let v: f64 = self.q.iter().zip(&self.c).map(|(q, c)| q * c).sum();
        err = err.max((v - self.value).abs());
        for a in 0..self.pi.len() {
            let pi: f64 = self.q.iter().zip(&self.eta).map(|(q, e)| q * e[a]).sum();
            let mu: f64 = self.p.iter().zip(&self.eta).map(|(p, e)| p * e[a]).sum();
            err = err.max((pi - self.pi[a]).abs()).max((mu - self.mu[a]).abs());
        }
        let dists = [&self.q, &self.p, &self.pi, &self.mu].into_iter().chain(&self.eta);
        for d in dists {
            err = err.max((d.iter().sum::<f64>() - 1.0).abs());
        }
        err
    }
}

#[derive(Debug, Clone)]
pub struct AgentNet {
    variant: AgentVariant,
    arch: ArchConfig,
    torso: Encoder,
    mlp: Dense,
    lstm: Lstm,
    eta_hidden: Dense,
    eta_out: Dense,
    c_head: Dense,
    p_head: Dense,
    q_net: ConcealedNet,
    q_logits: Dense,
    cc_net: ConcealedNet,
    policy: Dense,
    value: Dense,
    aux: Dense,
    shapes: BTreeMap<String, [usize; 2]>,
}

impl AgentNet {
    pub fn new(variant: AgentVariant, arch: ArchConfig) -> Result<Self> {
        arch.validate()?;
        let k = arch.num_options;
        let h = arch.lstm_hidden;
        let hh = arch.head_hidden;
        let torso = Encoder::new("torso", &arch, arch.mlp[0]);
        let value_inputs = if variant == AgentVariant::BaselineCc { h + arch.concealed_hidden } else { h };
        let mut net = AgentNet {
            variant,
            torso,
            mlp: Dense::new("torso/mlp", arch.mlp[0], arch.mlp[1]),
            lstm: Lstm::new("torso/lstm", arch.mlp[1], h),
            eta_hidden: Dense::new("eta/hidden", h, k * hh),
            // Stored as one [hh, K * 8] matrix; head z uses columns z*8..z*8+8.
            eta_out: Dense::new("eta/out", hh, k * NUM_ACTIONS),
            c_head: Dense::new("value/c", h, k),
            p_head: Dense::new("options/p", h, k),
            q_net: ConcealedNet::new("q", &arch),
            q_logits: Dense::new("q/logits", arch.concealed_hidden, k),
            cc_net: ConcealedNet::new("cc", &arch),
            policy: Dense::new("policy/logits", h, NUM_ACTIONS),
            value: Dense::new("value/v", value_inputs, 1),
            aux: Dense::new("aux/inventory", h, 3 * arch.num_opponents),
            arch,
            shapes: BTreeMap::new(),
        };
        let store: ParameterStore<f32> = net.init(&mut crate::rng::from_seed(0))?;
        net.shapes = store.iter().map(|(n, t)| (n.clone(), t.shape())).collect();
        Ok(net)
    }

    pub fn variant(&self) -> AgentVariant {
        self.variant
    }

    pub fn arch(&self) -> &ArchConfig {
        &self.arch
    }

    pub fn num_options(&self) -> usize {
        self.arch.num_options
    }

    /// Width of one row of recurrent state.
    pub fn state_width(&self) -> usize {
        2 * self.arch.lstm_hidden
    }

    pub fn concealed_width(&self) -> usize {
        self.arch.num_opponents * OBS_FEATURES
    }

    pub fn initial_state<T: Real>(&self, rows: usize) -> Tensor<T> {
        Tensor::zeros(rows, self.state_width())
    }

    fn uses_eta(&self) -> bool {
        self.variant.has_options()
    }

    fn uses_plain_value(&self) -> bool {
        !self.variant.has_q()
    }

    fn uses_policy_head(&self) -> bool {
        !self.variant.has_options()
    }

    pub fn init<T: Real>(&self, rng: &mut Rng) -> Result<ParameterStore<T>> {
        let mut s = ParameterStore::new();
        self.torso.init(&mut s, rng)?;
        self.mlp.init(&mut s, rng)?;
        self.lstm.init(&mut s, rng)?;
        if self.uses_eta() {
            self.eta_hidden.init(&mut s, rng)?;
            self.eta_out.init(&mut s, rng)?;
        }
        if self.uses_eta() || self.variant.has_q() {
            self.p_head.init(&mut s, rng)?;
        }
        if self.variant.has_q() {
            self.c_head.init(&mut s, rng)?;
            self.q_net.init(&mut s, rng)?;
            self.q_logits.init(&mut s, rng)?;
        }
        if self.uses_policy_head() {
            self.policy.init(&mut s, rng)?;
        }
        if self.uses_plain_value() {
            self.value.init(&mut s, rng)?;
        }
        if self.variant == AgentVariant::BaselineCc {
            self.cc_net.init(&mut s, rng)?;
        }
        if self.variant == AgentVariant::BaselineAux {
            self.aux.init(&mut s, rng)?;
        }
        Ok(s)
    }

    /// Fails unless `params` has exactly this architecture's names and shapes.
    pub fn check_params<T: Real>(&self, params: &ParameterStore<T>) -> Result<()> {
        if params.len() != self.shapes.len() {
            return Err(Error::Shape(format!(
                "{} parameters, architecture {} expects {}",
                params.len(),
                self.variant,
                self.shapes.len()
            )));
        }
        for (name, shape) in &self.shapes {
            let got = params.get(name)?.shape();
            if got != *shape {
                return Err(Error::Shape(format!("{name}: {got:?}, expected {shape:?}")));
            }
        }
        Ok(())
    }

    pub fn arch_hash(&self) -> [u8; 32] {
        let store: ParameterStore<f32> = self.init(&mut crate::rng::from_seed(0)).expect("fresh init");
        architecture_hash(self.variant, &self.arch, &store)
    }

    fn state_vars<T: Real>(&self, tape: &mut Tape<T>, state: &Tensor<T>) -> Result<LstmState> {
        let h = self.arch.lstm_hidden;
        if state.cols() != 2 * h {
            return Err(Error::Shape(format!("state width {}, expected {}", state.cols(), 2 * h)));
        }
        let s = tape.constant(state.clone());
        Ok(LstmState { cell: tape.slice_cols(s, 0, h)?, hidden: tape.slice_cols(s, h, h)? })
    }

    /// Torso up to the LSTM input.
    fn embed<T: Real>(&self, tape: &mut Tape<T>, params: &ParameterStore<T>, obs: Var) -> Result<Var> {
        let e = self.torso.forward(tape, params, obs, 0)?;
        let e = self.mlp.forward(tape, params, e)?;
        Ok(tape.relu(e))
    }

    /// `(log eta, eta)`, each `[m, K * 8]`.
    fn options<T: Real>(&self, tape: &mut Tape<T>, params: &ParameterStore<T>, hidden: Var) -> Result<(Var, Var)> {
        let hh = self.arch.head_hidden;
        let a = self.eta_hidden.forward(tape, params, hidden)?;
        let a = tape.relu(a);
        let w = tape.param(&self.eta_out.weight, params.get(&self.eta_out.weight)?.clone());
        let b = tape.param(&self.eta_out.bias, params.get(&self.eta_out.bias)?.clone());
        let mut heads = Vec::with_capacity(self.arch.num_options);
        for z in 0..self.arch.num_options {
            let hz = tape.slice_cols(a, z * hh, hh)?;
            let wz = tape.slice_cols(w, z * NUM_ACTIONS, NUM_ACTIONS)?;
            heads.push(tape.matmul(hz, wz)?);
        }
        let logits = tape.concat_cols(&heads)?;
        let logits = tape.add_bias(logits, b)?;
        let log_eta = tape.log_softmax(logits, NUM_ACTIONS)?;
        let eta = tape.exp(log_eta);
        Ok((log_eta, eta))
    }

    fn log_p<T: Real>(&self, tape: &mut Tape<T>, params: &ParameterStore<T>, hidden: Var) -> Result<Var> {
        let l = self.p_head.forward(tape, params, hidden)?;
        tape.log_softmax(l, self.arch.num_options)
    }

    fn check_rows<T: Real>(&self, obs: &Tensor<T>) -> Result<()> {
        if obs.cols() != OBS_FEATURES {
            return Err(Error::Shape(format!("observation width {}, expected {OBS_FEATURES}", obs.cols())));
        }
        Ok(())
    }

    /// One actor step for a batch of environments. Takes only the acting
    /// agent's own observation features; there is no concealed input.
    /// `forced` replaces p with a one-hot vector and skips the p head.
    pub fn actor_step<T: Real>(
        &self,
        params: &ParameterStore<T>,
        obs: &Tensor<T>,
        state: &Tensor<T>,
        forced: Option<usize>,
    ) -> Result<ActorOutput<T>> {
        self.check_rows(obs)?;
        if state.rows() != obs.rows() {
            return Err(Error::Shape(format!("{} observations but {} states", obs.rows(), state.rows())));
        }
        if let Some(z) = forced {
            if !self.uses_eta() {
                return Err(Error::Usage(format!("variant {} has no options to force", self.variant)));
            }
            if z >= self.arch.num_options {
                return Err(Error::Usage(format!("option {z} out of range 0..{}", self.arch.num_options)));
            }
        }
        let m = obs.rows();
        let mut tape = Tape::new();
        let x = tape.constant(obs.clone());
        let s = self.state_vars(&mut tape, state)?;
        let e = self.embed(&mut tape, params, x)?;
        let s = self.lstm.step(&mut tape, params, e, s)?;
        let new_state = tape.concat_cols(&[s.cell, s.hidden])?;
        let (mu, p) = if self.uses_eta() {
            let (_, eta) = self.options(&mut tape, params, s.hidden)?;
            let (weights, p) = match forced {
                Some(z) => {
                    let mut one_hot = Tensor::zeros(m, self.arch.num_options);
                    for r in 0..m {
                        one_hot.data_mut()[r * self.arch.num_options + z] = T::ONE;
                    }
                    (tape.constant(one_hot), None)
                }
                None => {
                    let lp = self.log_p(&mut tape, params, s.hidden)?;
                    let p = tape.exp(lp);
                    (p, Some(p))
                }
            };
            (tape.mix(weights, eta)?, p)
        } else {
            let l = self.policy.forward(&mut tape, params, s.hidden)?;
            (tape.softmax(l, NUM_ACTIONS)?, None)
        };
        Ok(ActorOutput {
            mu: tape.value(mu).clone(),
            p: p.map(|p| tape.value(p).clone()),
            state: tape.value(new_state).clone(),
        })
    }

    /// Learner forward pass over a batch of sequences, unrolling the LSTM
    /// from the stored initial states.
    pub fn unroll<T: Real>(
        &self,
        tape: &mut Tape<T>,
        params: &ParameterStore<T>,
        input: &SequenceInputs<T>,
    ) -> Result<StepVars> {
        let rows = input.steps * input.batch;
        self.check_rows(&input.obs)?;
        if input.obs.rows() != rows || input.concealed.rows() != rows || input.initial_state.rows() != input.batch {
            return Err(Error::Shape(format!(
                "sequence inputs misaligned: {} obs rows, {} concealed rows, {} states for {} x {}",
                input.obs.rows(),
                input.concealed.rows(),
                input.initial_state.rows(),
                input.steps,
                input.batch
            )));
        }
        if input.concealed.cols() != self.concealed_width() {
            return Err(Error::Shape(format!(
                "concealed width {}, expected {} ({} opponents)",
                input.concealed.cols(),
                self.concealed_width(),
                self.arch.num_opponents
            )));
        }
        let x = tape.constant(input.obs.clone());
        let e = self.embed(tape, params, x)?;
        let mut s = self.state_vars(tape, &input.initial_state)?;
        let mut hs = Vec::with_capacity(input.steps);
        for t in 0..input.steps {
            let et = tape.slice_rows(e, t * input.batch, input.batch)?;
            s = self.lstm.step(tape, params, et, s)?;
            hs.push(s.hidden);
        }
        let hidden = tape.concat_rows(&hs)?;
        let needs_concealed = self.variant.has_q() || self.variant == AgentVariant::BaselineCc;
        let concealed = if needs_concealed { Some(tape.constant(input.concealed.clone())) } else { None };

        let mut out = StepVars {
            log_eta: None,
            eta: None,
            log_q: None,
            q: None,
            log_p: None,
            p: None,
            c: None,
            value: hidden,
            log_policy: None,
            aux: None,
        };
        if self.uses_eta() {
            let (log_eta, eta) = self.options(tape, params, hidden)?;
            out.log_eta = Some(log_eta);
            out.eta = Some(eta);
        }
        if self.uses_eta() || self.variant.has_q() {
            let lp = self.log_p(tape, params, hidden)?;
            out.log_p = Some(lp);
            out.p = Some(tape.exp(lp));
        }
        if let (true, Some(cx)) = (self.variant.has_q(), concealed) {
            let qh = self.q_net.forward(tape, params, cx)?;
            let ql = self.q_logits.forward(tape, params, qh)?;
            let log_q = tape.log_softmax(ql, self.arch.num_options)?;
            let q = tape.exp(log_q);
            let c = self.c_head.forward(tape, params, hidden)?;
            out.value = tape.mix(q, c)?;
            out.log_q = Some(log_q);
            out.q = Some(q);
            out.c = Some(c);
        } else {
            let vin = match (self.variant, concealed) {
                (AgentVariant::BaselineCc, Some(cx)) => {
                    let cc = self.cc_net.forward(tape, params, cx)?;
                    tape.concat_cols(&[hidden, cc])?
                }
                _ => hidden,
            };
            out.value = self.value.forward(tape, params, vin)?;
        }
        if self.uses_policy_head() {
            let l = self.policy.forward(tape, params, hidden)?;
            out.log_policy = Some(tape.log_softmax(l, NUM_ACTIONS)?);
        }
        if self.variant == AgentVariant::BaselineAux {
            out.aux = Some(self.aux.forward(tape, params, hidden)?);
        }
        Ok(out)
    }

    /// Reads every row of an OPRE-style unroll into [`NetworkOutput`]s,
    /// with π and μ formed on the tape as mixtures.
    pub fn network_outputs<T: Real>(&self, tape: &mut Tape<T>, vars: &StepVars) -> Result<Vec<NetworkOutput>> {
        let (Some(q), Some(p), Some(eta), Some(c)) = (vars.q, vars.p, vars.eta, vars.c) else {
            return Err(Error::Usage(format!("variant {} has no option mixture", self.variant)));
        };
        let pi = tape.mix(q, eta)?;
        let mu = tape.mix(p, eta)?;
        let k = self.arch.num_options;
        let row = |tape: &Tape<T>, v: Var, r: usize| -> Vec<f64> { tape.value(v).row(r).iter().map(|x| x.to_f64()).collect() };
        let rows = tape.value(q).rows();
        Ok((0..rows)
            .map(|r| {
                let e = row(tape, eta, r);
                NetworkOutput {
                    q: row(tape, q, r),
                    p: row(tape, p, r),
                    eta: (0..k).map(|z| e[z * NUM_ACTIONS..(z + 1) * NUM_ACTIONS].to_vec()).collect(),
                    c: row(tape, c, r),
                    value: tape.value(vars.value).at(r, 0).to_f64(),
                    pi: row(tape, pi, r),
                    mu: row(tape, mu, r),
                }
            })
            .collect())
    }
}
