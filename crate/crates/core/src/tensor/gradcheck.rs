use super::{ParameterStore, Tape, Tensor, Var};
use crate::rng::Rng;
use crate::Result;
use rand::seq::index::sample;

/// Result of comparing reverse-mode gradients with central differences.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Per parameter: relative error `max|g - n| / max(max|g|, max|n|)`
    /// over the checked elements.
    pub max_rel_error: Vec<(String, f64)>,
    pub tolerance: f64,
    pub elements_checked: usize,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error.iter().all(|(_, e)| *e < self.tolerance)
    }

    pub fn worst(&self) -> Option<&(String, f64)> {
        self.max_rel_error.iter().max_by(|a, b| a.1.total_cmp(&b.1))
    }
}

const STEP: f64 = 1e-5;
const SUBSAMPLE_ABOVE: usize = 10_000;
const SUBSAMPLE_PER_PARAM: usize = 48;

/// Checks `backward` against central differences with step `1e-5` for every
/// parameter element, or for a random subsample of each parameter when the
/// store holds more than 10^4 values.
///
/// Values cut by `stop_gradient` are held at their unperturbed values, so
/// the check targets the surrogate objective whose gradient `backward`
/// returns.
pub fn grad_check<F>(forward: F, params: &ParameterStore<f64>, tolerance: f64, rng: &mut Rng) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<f64>, &ParameterStore<f64>) -> Result<Var>,
{
    let mut tape = Tape::new();
    let loss = forward(&mut tape, params)?;
    let grads = tape.backward(loss)?;
    let frozen = tape.stopped_values().to_vec();
    let eval = |store: &ParameterStore<f64>| -> Result<f64> {
        let mut t = Tape::with_frozen(frozen.clone());
        let l = forward(&mut t, store)?;
        Ok(t.value(l).item())
    };
    let subsample = params.num_values() > SUBSAMPLE_ABOVE;
    let mut report = GradCheckReport { max_rel_error: Vec::new(), tolerance, elements_checked: 0 };
    let mut work = params.clone();
    for (name, value) in params.iter() {
        let analytic = grads.get(name).cloned().unwrap_or_else(|| Tensor::zeros(value.rows(), value.cols()));
        let n = value.len();
        let idx: Vec<usize> = if subsample && n > SUBSAMPLE_PER_PARAM {
            sample(rng, n, SUBSAMPLE_PER_PARAM).into_vec()
        } else {
            (0..n).collect()
        };
        let (mut max_diff, mut scale) = (0.0f64, 0.0f64);
        for &i in &idx {
            let mut plus = (**value).clone();
            plus.data_mut()[i] += STEP;
            work.replace(name, plus)?;
            let lp = eval(&work)?;
            let mut minus = (**value).clone();
            minus.data_mut()[i] -= STEP;
            work.replace(name, minus)?;
            let lm = eval(&work)?;
            let numeric = (lp - lm) / (2.0 * STEP);
            let a = analytic.data()[i];
            max_diff = max_diff.max((a - numeric).abs());
            scale = scale.max(a.abs()).max(numeric.abs());
        }
        work.replace(name, (**value).clone())?;
        report.elements_checked += idx.len();
        let rel = if scale == 0.0 { 0.0 } else { max_diff / scale };
        report.max_rel_error.push((name.clone(), rel));
    }
    Ok(report)
}
