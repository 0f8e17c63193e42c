use crate::{Error, Result};

/// Off-policy value targets and policy-gradient advantages for one sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct VTraceOutputs {
    pub vs: Vec<f64>,
    pub pg_advantages: Vec<f64>,
    /// Truncated importance weights `min(rho_bar, pi / mu)`.
    pub rhos: Vec<f64>,
    /// Trace coefficients `min(c_bar, pi / mu)`.
    pub cs: Vec<f64>,
}

/// Truncated importance-weighted targets, by backward recursion.
///
/// `discounts[t]` is the discount applied after step `t` (zero where the
/// episode ended), `bootstrap` the value of the state after the last step.
#[allow(clippy::too_many_arguments)]
pub fn vtrace(
    values: &[f64],
    bootstrap: f64,
    rewards: &[f64],
    discounts: &[f64],
    target_probs: &[f64],
    behavior_probs: &[f64],
    rho_bar: f64,
    c_bar: f64,
) -> Result<VTraceOutputs> {
    let n = values.len();
    if [rewards.len(), discounts.len(), target_probs.len(), behavior_probs.len()].iter().any(|&l| l != n) {
        return Err(Error::Shape("vtrace inputs must have equal lengths".into()));
    }
    if !(rho_bar >= c_bar && c_bar > 0.0) {
        return Err(Error::Domain(format!("need rho_bar >= c_bar > 0, got {rho_bar}, {c_bar}")));
    }
    let all = values.iter().chain(rewards).chain(discounts).chain(target_probs).chain(behavior_probs);
    if !bootstrap.is_finite() || all.clone().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite vtrace input".into()));
    }
    if behavior_probs.iter().any(|&p| p <= 0.0) {
        return Err(Error::Domain("behaviour probabilities must be positive".into()));
    }
    let ratio: Vec<f64> = target_probs.iter().zip(behavior_probs).map(|(p, m)| p / m).collect();
    let rhos: Vec<f64> = ratio.iter().map(|r| r.min(rho_bar)).collect();
    let cs: Vec<f64> = ratio.iter().map(|r| r.min(c_bar)).collect();
    let next_value = |t: usize| if t + 1 < n { values[t + 1] } else { bootstrap };

    let mut vs = vec![0.0; n];
    let mut acc = 0.0; // vs_{t+1} - V(x_{t+1})
    for t in (0..n).rev() {
        let delta = rhos[t] * (rewards[t] + discounts[t] * next_value(t) - values[t]);
        acc = delta + discounts[t] * cs[t] * acc;
        vs[t] = values[t] + acc;
    }
    let pg_advantages = (0..n)
        .map(|t| {
            let next_vs = if t + 1 < n { vs[t + 1] } else { bootstrap };
            rhos[t] * (rewards[t] + discounts[t] * next_vs - values[t])
        })
        .collect();
    Ok(VTraceOutputs { vs, pg_advantages, rhos, cs })
}
