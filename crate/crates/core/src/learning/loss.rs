use super::batch::{PaddedBatch, Sequence};
use super::vtrace::vtrace;
use super::LossConfig;
use crate::model::{AgentNet, AgentVariant};
use crate::tensor::{Gradients, ParameterStore, Real, Tape, Tensor, Var};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Keeps logs of mixture probabilities finite.
const LOG_FLOOR: f64 = 1e-10;

/// Loss components of one update and the coefficients that weighted them.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub kl_qp: f64,
    pub reg_ht: f64,
    pub reg_hb: f64,
    pub reg_hpi: f64,
    pub aux_loss: f64,
    pub total: f64,
    pub lambda_v: f64,
    pub lambda_kl: f64,
    pub lambda_reg: f64,
    pub lambda_ent: f64,
    pub aux_coeff: f64,
    /// Mean clipped importance weight of the target policy.
    pub mean_rho: f64,
}

impl LossBreakdown {
    /// The weighted sum the total is defined as.
    pub fn weighted_sum(&self) -> f64 {
        self.policy_loss
            + self.lambda_v * self.value_loss
            + self.lambda_kl * self.kl_qp
            + self.lambda_reg * (self.reg_ht - self.reg_hb)
            - self.lambda_ent * self.reg_hpi
            + self.aux_coeff * self.aux_loss
    }
}

/// Loss nodes on a tape. Terms a variant lacks are `None`.
#[derive(Debug, Clone)]
pub struct LossGraph {
    pub total: Var,
    pub policy: Var,
    pub value: Var,
    pub kl: Option<Var>,
    pub h_t: Option<Var>,
    pub h_b: Option<Var>,
    pub h_pi: Var,
    pub aux: Option<Var>,
    pub breakdown: LossBreakdown,
}

struct Targets<T> {
    /// `-advantage / N` on real steps.
    pg_weights: Tensor<T>,
    vs: Tensor<T>,
    mean_rho: f64,
}

/// Runs V-trace per sequence on stopped values and taken-action
/// probabilities of `target`.
fn targets<T: Real>(
    tape: &mut Tape<T>,
    batch: &PaddedBatch<T>,
    sequences: &[Sequence],
    value: Var,
    target_probs: Var,
    cfg: &LossConfig,
) -> Result<Targets<T>> {
    let v = tape.stop_gradient(value);
    let pa = tape.stop_gradient(target_probs);
    let (v, pa) = (tape.value(v), tape.value(pa));
    let n = batch.num_steps() as f64;
    let mut pg_weights = Tensor::zeros(batch.rows(), 1);
    let mut vs_col = Tensor::zeros(batch.rows(), 1);
    let mut rho_sum = 0.0;
    for (b, s) in sequences.iter().enumerate() {
        let len = s.len();
        let rows: Vec<usize> = (0..len).map(|t| batch.row(t, b)).collect();
        let values: Vec<f64> = rows.iter().map(|&r| v.data()[r].to_f64()).collect();
        let bootstrap = if s.bootstrap.is_some() { v.data()[batch.row(len, b)].to_f64() } else { 0.0 };
        let rewards: Vec<f64> = s.rewards.iter().map(|&r| r as f64 * cfg.reward_scale).collect();
        let mut discounts = vec![cfg.gamma; len];
        if s.bootstrap.is_none() {
            discounts[len - 1] = 0.0;
        }
        let target: Vec<f64> = rows.iter().map(|&r| pa.data()[r].to_f64()).collect();
        let behavior: Vec<f64> = s.behavior_probs.iter().map(|&p| p as f64).collect();
        let out = vtrace(&values, bootstrap, &rewards, &discounts, &target, &behavior, cfg.rho_bar, cfg.c_bar)?;
        for (t, &r) in rows.iter().enumerate() {
            pg_weights.data_mut()[r] = T::from_f64(-out.pg_advantages[t] / n);
            vs_col.data_mut()[r] = T::from_f64(out.vs[t]);
        }
        rho_sum += out.rhos.iter().sum::<f64>();
    }
    Ok(Targets { pg_weights, vs: vs_col, mean_rho: rho_sum / n })
}

/// `-sum_a x log x` per row, for `x` and its log.
fn row_entropy<T: Real>(tape: &mut Tape<T>, probs: Var, log_probs: Var) -> Result<Var> {
    let plogp = tape.mul(probs, log_probs)?;
    let s = tape.sum_rows(plogp);
    Ok(tape.scale(s, -T::ONE))
}

fn floored_log<T: Real>(tape: &mut Tape<T>, x: Var) -> Var {
    let shifted = tape.add_scalar(x, T::from_f64(LOG_FLOOR));
    tape.log(shifted)
}

/// Entropy of a single distribution row vector.
fn entropy_of<T: Real>(tape: &mut Tape<T>, probs: Var) -> Result<Var> {
    let l = floored_log(tape, probs);
    let e = row_entropy(tape, probs, l)?;
    Ok(tape.sum(e))
}

/// Entropy regularisers over a time-major batch with sequence lengths
/// `lens` padded to `steps` rows each:
/// `H^T`, the mean over sequences of the entropy of q's time-average;
/// `H^B`, the entropy of q averaged over every real step of the batch;
/// `H(pi)`, the mean per-step entropy of pi.
pub fn entropy_reg<T: Real>(
    tape: &mut Tape<T>,
    q: Option<Var>,
    pi: Var,
    log_pi: Var,
    lens: &[usize],
    steps: usize,
) -> Result<(Option<Var>, Option<Var>, Var)> {
    let b = lens.len();
    let rows = steps * b;
    let n: usize = lens.iter().sum();
    let mut all = Tensor::zeros(1, rows);
    for (i, &len) in lens.iter().enumerate() {
        for t in 0..len {
            all.data_mut()[t * b + i] = T::from_f64(1.0 / n as f64);
        }
    }
    let (h_t, h_b) = match q {
        Some(q) => {
            let mut per_seq = Tensor::zeros(b, rows);
            for (i, &len) in lens.iter().enumerate() {
                for t in 0..len {
                    per_seq.data_mut()[i * rows + t * b + i] = T::from_f64(1.0 / len as f64);
                }
            }
            let w = tape.constant(per_seq);
            let q_bar = tape.matmul(w, q)?;
            let hs = entropy_of(tape, q_bar)?;
            let h_t = tape.scale(hs, T::from_f64(1.0 / b as f64));
            let w_all = tape.constant(all.clone());
            let q_all = tape.matmul(w_all, q)?;
            (Some(h_t), Some(entropy_of(tape, q_all)?))
        }
        None => (None, None),
    };
    let e = row_entropy(tape, pi, log_pi)?;
    let w = tape.mul_rows_const(e, all.reshaped(rows, 1)?)?;
    Ok((h_t, h_b, tape.sum(w)))
}

/// Builds the variant's full loss for a batch of sequences.
pub fn build_loss<T: Real>(
    tape: &mut Tape<T>,
    net: &AgentNet,
    params: &ParameterStore<T>,
    sequences: &[Sequence],
    cfg: &LossConfig,
) -> Result<LossGraph> {
    let variant = net.variant();
    let batch = PaddedBatch::<T>::new(net, sequences)?;
    let vars = net.unroll(tape, params, &batch.inputs)?;
    let rows = batch.rows();
    let n = batch.num_steps() as f64;
    let mask = batch.mask();
    let step_weights = mask.map(|m| m * T::from_f64(1.0 / n));
    let mut actions = vec![0usize; rows];
    for (b, s) in sequences.iter().enumerate() {
        for (t, &a) in s.actions.iter().enumerate() {
            actions[batch.row(t, b)] = a as usize;
        }
    }

    // Target policy and its log, per row.
    let missing = || Error::Usage(format!("variant {variant} lacks a required head"));
    let (pi, log_pi) = match variant {
        AgentVariant::Opre | AgentVariant::OpreMixPg | AgentVariant::OpreQGrad => {
            let q = vars.q.ok_or_else(missing)?;
            let q = if variant == AgentVariant::OpreQGrad { q } else { tape.stop_gradient(q) };
            let pi = tape.mix(q, vars.eta.ok_or_else(missing)?)?;
            (pi, floored_log(tape, pi))
        }
        AgentVariant::PureMix => {
            let mu = tape.mix(vars.p.ok_or_else(missing)?, vars.eta.ok_or_else(missing)?)?;
            (mu, floored_log(tape, mu))
        }
        _ => {
            let lp = vars.log_policy.ok_or_else(missing)?;
            (tape.exp(lp), lp)
        }
    };
    let pi_a = tape.gather(pi, actions.clone())?;
    let log_pi_a = tape.gather(log_pi, actions.clone())?;
    let tg = targets(tape, &batch, sequences, vars.value, pi_a, cfg)?;
    let mean_rho = tg.mean_rho;
    let weighted = tape.mul_rows_const(log_pi_a, tg.pg_weights)?;
    let mut policy = tape.sum(weighted);

    if variant == AgentVariant::OpreMixPg {
        // Second policy gradient through the behaviour mixture, into eta only.
        let p = tape.stop_gradient(vars.p.ok_or_else(missing)?);
        let mu = tape.mix(p, vars.eta.ok_or_else(missing)?)?;
        let log_mu = floored_log(tape, mu);
        let mu_a = tape.gather(mu, actions.clone())?;
        let log_mu_a = tape.gather(log_mu, actions.clone())?;
        let tg_mu = targets(tape, &batch, sequences, vars.value, mu_a, cfg)?;
        let w = tape.mul_rows_const(log_mu_a, tg_mu.pg_weights)?;
        let extra = tape.sum(w);
        policy = tape.add(policy, extra)?;
    }

    let diff = {
        let vs = tape.constant(tg.vs);
        tape.sub(vars.value, vs)?
    };
    let sq = tape.square(diff);
    let sq = tape.mul_rows_const(sq, step_weights.map(|w| w * T::from_f64(0.5)))?;
    let value = tape.sum(sq);

    let kl = match (vars.q, vars.log_q, vars.log_p) {
        (Some(q), Some(log_q), Some(log_p)) => {
            let d = tape.sub(log_q, log_p)?;
            let terms = tape.mul(q, d)?;
            let per_row = tape.sum_rows(terms);
            let w = tape.mul_rows_const(per_row, step_weights.clone())?;
            Some(tape.sum(w))
        }
        _ => None,
    };

    let q_reg = if variant.is_opre() { vars.q } else { None };
    let (h_t, h_b, h_pi) = entropy_reg(tape, q_reg, pi, log_pi, &batch.lens, batch.inputs.steps)?;

    let aux = match vars.aux {
        Some(pred) => {
            let width = tape.value(pred).cols();
            let mut target = Tensor::zeros(rows, width);
            for (b, s) in sequences.iter().enumerate() {
                for t in 0..s.len() {
                    let r = batch.row(t, b);
                    for (j, v) in s.opponent_inventories[t * width..(t + 1) * width].iter().enumerate() {
                        target.data_mut()[r * width + j] = T::from_f64(*v as f64);
                    }
                }
            }
            let target = tape.constant(target);
            let d = tape.sub(pred, target)?;
            let sq = tape.square(d);
            let per_row = tape.sum_rows(sq);
            let w = tape.mul_rows_const(per_row, step_weights.clone())?;
            Some(tape.sum(w))
        }
        None => None,
    };

    let c = |v: f64| T::from_f64(v);
    let mut total = policy;
    let v_term = tape.scale(value, c(cfg.lambda_v));
    total = tape.add(total, v_term)?;
    if let Some(kl) = kl {
        let t = tape.scale(kl, c(cfg.lambda_kl));
        total = tape.add(total, t)?;
    }
    if let (Some(ht), Some(hb)) = (h_t, h_b) {
        let d = tape.sub(ht, hb)?;
        let t = tape.scale(d, c(cfg.lambda_reg));
        total = tape.add(total, t)?;
    }
    let ent = tape.scale(h_pi, c(-cfg.lambda_ent));
    total = tape.add(total, ent)?;
    if let Some(aux) = aux {
        let t = tape.scale(aux, c(cfg.aux_coeff));
        total = tape.add(total, t)?;
    }

    let read = |v: Option<Var>| v.map(|v| tape.value(v).item().to_f64()).unwrap_or(0.0);
    let breakdown = LossBreakdown {
        policy_loss: read(Some(policy)),
        value_loss: read(Some(value)),
        kl_qp: read(kl),
        reg_ht: read(h_t),
        reg_hb: read(h_b),
        reg_hpi: read(Some(h_pi)),
        aux_loss: read(aux),
        total: read(Some(total)),
        lambda_v: cfg.lambda_v,
        lambda_kl: if kl.is_some() { cfg.lambda_kl } else { 0.0 },
        lambda_reg: if h_t.is_some() { cfg.lambda_reg } else { 0.0 },
        lambda_ent: cfg.lambda_ent,
        aux_coeff: if aux.is_some() { cfg.aux_coeff } else { 0.0 },
        mean_rho,
    };
    Ok(LossGraph { total, policy, value, kl, h_t, h_b, h_pi, aux, breakdown })
}

/// Loss and parameter gradients for one batch in single precision.
pub fn compute_gradients(
    net: &AgentNet,
    params: &ParameterStore<f32>,
    sequences: &[Sequence],
    cfg: &LossConfig,
) -> Result<(Gradients<f32>, LossBreakdown)> {
    let mut tape = Tape::new();
    let graph = build_loss(&mut tape, net, params, sequences, cfg)?;
    let grads = tape.backward(graph.total)?;
    Ok((grads, graph.breakdown))
}
