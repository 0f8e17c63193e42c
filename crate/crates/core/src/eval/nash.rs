use crate::{Error, Result};
use serde::{Deserialize, Serialize};

pub const NASH_MAX_ITERS: usize = 100_000;
const STEP: f64 = 0.1;
const ANTISYMMETRY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NashSolution {
    pub weights: Vec<f64>,
    pub exploitability: f64,
    pub iterations: usize,
}

/// JSON report of a meta-game's equilibrium.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NashReport {
    pub policies: Vec<String>,
    pub weights: Vec<f64>,
    pub exploitability: f64,
    pub iterations: usize,
    pub effective_diversity: f64,
}

/// Best pure-strategy payoff against `p`; the game value is zero, so this is
/// how much a best response gains.
pub fn exploitability(a: &[Vec<f64>], p: &[f64]) -> f64 {
    a.iter().map(|row| row.iter().zip(p).map(|(x, y)| x * y).sum::<f64>()).fold(f64::NEG_INFINITY, f64::max)
}

fn check_antisymmetric(a: &[Vec<f64>]) -> Result<f64> {
    let n = a.len();
    if n == 0 {
        return Err(Error::Domain("empty payoff matrix".into()));
    }
    let mut scale = 0.0f64;
    for row in a {
        if row.len() != n {
            return Err(Error::Domain("payoff matrix is not square".into()));
        }
        for v in row {
            if !v.is_finite() {
                return Err(Error::Domain("payoff matrix has non-finite entries".into()));
            }
            scale = scale.max(v.abs());
        }
    }
    let tol = ANTISYMMETRY_TOL * scale.max(1.0);
    for i in 0..n {
        for j in 0..=i {
            if (a[i][j] + a[j][i]).abs() > tol {
                return Err(Error::Domain(format!("payoff matrix not antisymmetric at ({i}, {j})")));
            }
        }
    }
    Ok(scale)
}

/// Maximin strategy of the symmetric zero-sum game `a`, to exploitability
/// at most `eps`.
pub fn solve_nash(a: &[Vec<f64>], eps: f64) -> Result<NashSolution> {
    solve_nash_with(a, eps, NASH_MAX_ITERS)
}

/// Optimistic multiplicative weights in self-play. Both the last iterate and
/// the running average are checked; the first to reach `eps` is returned.
/// Degenerate games where the iterates stall fall back to the maximin linear
/// program.
pub fn solve_nash_with(a: &[Vec<f64>], eps: f64, max_iters: usize) -> Result<NashSolution> {
    let scale = check_antisymmetric(a)?;
    let n = a.len();
    let uniform = vec![1.0 / n as f64; n];
    if scale == 0.0 {
        return Ok(NashSolution { weights: uniform, exploitability: 0.0, iterations: 0 });
    }
    // A pure equilibrium is returned exactly.
    for i in 0..n {
        let e = (0..n).map(|k| a[k][i]).fold(f64::NEG_INFINITY, f64::max);
        if e <= eps {
            let mut w = vec![0.0; n];
            w[i] = 1.0;
            return Ok(NashSolution { weights: w, exploitability: e, iterations: 0 });
        }
    }
    let b: Vec<Vec<f64>> = a.iter().map(|r| r.iter().map(|v| v / scale).collect()).collect();
    let payoff = |p: &[f64]| -> Vec<f64> { b.iter().map(|r| r.iter().zip(p).map(|(x, y)| x * y).sum()).collect() };

    let mut p = uniform;
    let mut logits = vec![0.0f64; n];
    let mut prev = payoff(&p);
    let mut avg = vec![0.0f64; n];
    for it in 0..max_iters {
        let e = exploitability(a, &p);
        if e <= eps {
            return Ok(NashSolution { weights: p, exploitability: e, iterations: it });
        }
        for (x, y) in avg.iter_mut().zip(&p) {
            *x += y;
        }
        if it % 64 == 63 {
            let mean: Vec<f64> = avg.iter().map(|v| v / (it + 1) as f64).collect();
            let e = exploitability(a, &mean);
            if e <= eps {
                return Ok(NashSolution { weights: mean, exploitability: e, iterations: it + 1 });
            }
        }
        let g = payoff(&p);
        for ((l, gi), pi) in logits.iter_mut().zip(&g).zip(&prev) {
            *l += STEP * (2.0 * gi - pi);
        }
        prev = g;
        let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = logits.iter().map(|l| (l - m).exp()).sum();
        for (pi, l) in p.iter_mut().zip(&logits) {
            *pi = (l - m).exp() / z;
        }
    }
    let p = solve_lp(&b)?;
    let e = exploitability(a, &p);
    if e <= eps {
        return Ok(NashSolution { weights: p, exploitability: e, iterations: max_iters });
    }
    Err(Error::Numeric(format!("equilibrium solver stopped after {max_iters} iterations at exploitability {e}")))
}

/// Maximin of `b` by linear programming: maximise v with `sum_i p_i b_ij >= v`.
fn solve_lp(b: &[Vec<f64>]) -> Result<Vec<f64>> {
    use minilp::{ComparisonOp, OptimizationDirection, Problem};
    let n = b.len();
    let mut lp = Problem::new(OptimizationDirection::Maximize);
    let vars: Vec<_> = (0..n).map(|_| lp.add_var(0.0, (0.0, 1.0))).collect();
    let v = lp.add_var(1.0, (f64::NEG_INFINITY, f64::INFINITY));
    for j in 0..n {
        let mut row: Vec<_> = vars.iter().zip(b).map(|(&x, r)| (x, r[j])).collect();
        row.push((v, -1.0));
        lp.add_constraint(&row, ComparisonOp::Ge, 0.0);
    }
    let ones: Vec<_> = vars.iter().map(|&x| (x, 1.0)).collect();
    lp.add_constraint(&ones, ComparisonOp::Eq, 1.0);
    let sol = lp.solve().map_err(|e| Error::Numeric(format!("equilibrium linear program failed: {e}")))?;
    let mut p: Vec<f64> = vars.iter().map(|&x| sol[x].max(0.0)).collect();
    let z: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= z);
    Ok(p)
}

/// Nash-weighted rectified payoff: `sum_ij p_i max(a_ij, 0) p_j`.
pub fn effective_diversity(a: &[Vec<f64>], p: &[f64]) -> f64 {
    let mut d = 0.0;
    for (i, row) in a.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            d += p[i] * v.max(0.0) * p[j];
        }
    }
    d
}
