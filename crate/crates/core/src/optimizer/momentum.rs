//! The momentum estimators, each as a pure update of [`MuonState`].

use super::{MuonState, OptimizerError};
use crate::linalg::Matrix;

fn check(state: &MuonState, g: &Matrix) -> Result<(), OptimizerError> {
    if g.shape() != state.x.shape() {
        return Err(OptimizerError::ShapeMismatch {
            expected: state.x.shape(),
            got: g.shape(),
        });
    }
    Ok(())
}

/// `M_t = β M_{t-1} + (1−β) g_t + γβ (g_t − g_{t-1})`, where `g_{t-1}` is
/// the cached previous stochastic gradient. Caches `g_t`.
pub fn momentum_update_mvr1(
    state: &mut MuonState,
    g: &Matrix,
    beta: f64,
    gamma: f64,
) -> Result<Matrix, OptimizerError> {
    check(state, g)?;
    let gb = gamma * beta;
    let m = combine(&state.m, g, &state.prev_grad, beta, gb);
    state.m = m.clone();
    state.prev_grad = g.clone();
    Ok(m)
}

/// Same recursion with the correction taken under one sample:
/// `γβ (∇f(X_t; ξ_t) − ∇f(X_{t-1}; ξ_t))`.
pub fn momentum_update_mvr2(
    state: &mut MuonState,
    g_at_x: &Matrix,
    g_at_x_prev: &Matrix,
    beta: f64,
    gamma: f64,
) -> Result<Matrix, OptimizerError> {
    check(state, g_at_x)?;
    check(state, g_at_x_prev)?;
    let m = combine(&state.m, g_at_x, g_at_x_prev, beta, gamma * beta);
    state.m = m.clone();
    state.prev_grad = g_at_x.clone();
    Ok(m)
}

fn combine(m_prev: &Matrix, g: &Matrix, g_ref: &Matrix, beta: f64, gb: f64) -> Matrix {
    let data = m_prev
        .as_slice()
        .iter()
        .zip(g.as_slice())
        .zip(g_ref.as_slice())
        .map(|((&m, &g), &r)| beta * m + (1.0 - beta) * g + gb * (g - r))
        .collect();
    Matrix::from_vec(g.rows(), g.cols(), data).expect("shape checked")
}

/// `C_t = β_{t−1} C_{t−1} + (1 − β_{t−1}) g_t`, `M_t = β_t C_t + (1 − β_t) g_t`.
pub fn momentum_update_two_accumulator(
    state: &mut MuonState,
    g: &Matrix,
    beta_prev: f64,
    beta: f64,
) -> Result<Matrix, OptimizerError> {
    check(state, g)?;
    let mut c = state.c.scale(beta_prev);
    c.axpy(1.0 - beta_prev, g)?;
    let mut m = c.scale(beta);
    m.axpy(1.0 - beta, g)?;
    state.c = c;
    state.m = m.clone();
    Ok(m)
}

/// `C_t = μ C_{t−1} + g_t`, `M_t = μ C_t + g_t`. Equals `1/(1−μ)` times
/// MVR1 with `β = μ`, `γ = 1 − μ`.
pub fn momentum_update_practical(
    state: &mut MuonState,
    g: &Matrix,
    mu: f64,
) -> Result<Matrix, OptimizerError> {
    check(state, g)?;
    let mut c = state.c.scale(mu);
    c.axpy(1.0, g)?;
    let mut m = c.scale(mu);
    m.axpy(1.0, g)?;
    state.c = c;
    state.m = m.clone();
    Ok(m)
}
