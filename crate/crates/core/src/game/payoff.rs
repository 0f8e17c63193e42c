use super::{Inventory, ResourceKind};
use crate::{Error, Result};

pub const PAYOFF_SCALE: f64 = 100.0;

/// Unscaled antisymmetric rock-paper-scissors matrix, rows and columns in
/// (Rock, Paper, Scissors) order. Entry `(i, j)` is +1 when `i` beats `j`.
pub fn payoff_matrix() -> [[i64; 3]; 3] {
    let mut m = [[0i64; 3]; 3];
    for i in ResourceKind::ALL {
        for j in ResourceKind::ALL {
            m[i.index()][j.index()] = if i == j.counter() {
                1
            } else if j == i.counter() {
                -1
            } else {
                0
            };
        }
    }
    m
}

/// Reward of the holder of `v0` when confronting the holder of `v1`:
/// `100 * (v0/|v0|) M (v1/|v1|)^T` with L1 norms.
///
/// The bilinear form is evaluated in integers and divided once, so
/// `compute_payoff(a, b) == -compute_payoff(b, a)` holds bit-exactly.
pub fn compute_payoff(v0: &Inventory, v1: &Inventory) -> Result<f64> {
    let (n0, n1) = (v0.l1(), v1.l1());
    if n0 == 0 || n1 == 0 {
        return Err(Error::Domain("payoff of an empty inventory is undefined".into()));
    }
    let m = payoff_matrix();
    let mut num: i64 = 0;
    for (i, row) in m.iter().enumerate() {
        let mv: i64 = row.iter().zip(v1.0.iter()).map(|(&a, &b)| a * b as i64).sum();
        num += v0.0[i] as i64 * mv;
    }
    let den = n0 as i64 * n1 as i64;
    Ok((PAYOFF_SCALE as i64 * num) as f64 / den as f64)
}
