//! Compact SVD by one-sided (Hestenes) Jacobi rotations.
//!
//! The working matrix is always the tall orientation (`rows >= cols`); wide
//! inputs are transposed on the way in and the factors swapped on the way
//! out. Columns are rotated pairwise until every pair is numerically
//! orthogonal, at which point the column norms are the singular values.

use super::{LinalgError, Matrix};

/// Maximum number of full Jacobi sweeps before giving up.
pub const DEFAULT_MAX_SWEEPS: usize = 100;

/// Relative rank cutoff: singular values `<= DEFAULT_RANK_TOL * sigma_max` are dropped.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// Compact singular value decomposition `a = u · diag(sigma) · vᵀ`.
#[derive(Debug, Clone)]
pub struct Svd {
    /// Left singular vectors, `rows × rank`.
    pub u: Matrix,
    /// Positive singular values, non-increasing.
    pub sigma: Vec<f64>,
    /// Right singular vectors, `cols × rank`.
    pub v: Matrix,
}

impl Svd {
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    pub fn reconstruct(&self) -> Matrix {
        let (m, r) = self.u.shape();
        let n = self.v.rows();
        let mut out = Matrix::zeros(m, n);
        for k in 0..r {
            let s = self.sigma[k];
            for i in 0..m {
                let us = self.u[(i, k)] * s;
                if us == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out[(i, j)] += us * self.v[(j, k)];
                }
            }
        }
        out
    }
}

struct JacobiFactors {
    /// Rotated columns: `a · v`, column `j` has norm `sigma_j`.
    w: Matrix,
    v: Matrix,
}

/// Runs the rotation sweeps on a tall matrix, stored column-major in `w`
/// for cache-friendly column access.
fn jacobi_sweeps(a: &Matrix, max_sweeps: usize) -> Result<JacobiFactors, LinalgError> {
    let (m, n) = a.shape();
    debug_assert!(m >= n);
    // column-major copies: cols[j][i]
    let mut cols: Vec<Vec<f64>> = (0..n).map(|j| a.column(j)).collect();
    let mut vcols: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            e
        })
        .collect();

    // Column pairs whose cosine is below this are treated as orthogonal; the
    // floor is what rounding in an m-term dot product can resolve.
    let ortho_tol = f64::EPSILON * (m as f64).max(4.0);
    // Columns this small relative to the whole matrix are pure rounding
    // residue; rotating them only churns.
    let negligible = 1e-32 * a.frobenius_norm_sq();
    let mut converged = n < 2;
    let mut sweeps = 0;
    while !converged {
        if sweeps == max_sweeps {
            return Err(LinalgError::ConvergenceFailure { sweeps });
        }
        sweeps += 1;
        converged = true;
        for p in 0..n - 1 {
            for q in p + 1..n {
                let (alpha, beta, gamma) = {
                    let (cp, cq) = (&cols[p], &cols[q]);
                    let mut alpha = 0.0;
                    let mut beta = 0.0;
                    let mut gamma = 0.0;
                    for i in 0..m {
                        alpha += cp[i] * cp[i];
                        beta += cq[i] * cq[i];
                        gamma += cp[i] * cq[i];
                    }
                    (alpha, beta, gamma)
                };
                if alpha <= negligible || beta <= negligible {
                    continue;
                }
                if gamma.abs() <= ortho_tol * (alpha * beta).sqrt() {
                    continue;
                }
                converged = false;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut cols, p, q, c, s);
                rotate(&mut vcols, p, q, c, s);
            }
        }
    }

    let w = Matrix::from_fn(m, n, |i, j| cols[j][i]);
    let v = Matrix::from_fn(n, n, |i, j| vcols[j][i]);
    Ok(JacobiFactors { w, v })
}

fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (lo, hi) = cols.split_at_mut(q);
    let (cp, cq) = (&mut lo[p], &mut hi[0]);
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let (xp, xq) = (*x, *y);
        *x = c * xp - s * xq;
        *y = s * xp + c * xq;
    }
}

/// Compact SVD keeping singular values strictly above `rank_tol · sigma_max`.
///
/// Each left singular vector is sign-normalized so its first nonzero entry
/// is non-negative (the matching right vector is flipped with it), which
/// makes the output a deterministic function of the input.
pub fn compact_svd(a: &Matrix, rank_tol: f64) -> Result<Svd, LinalgError> {
    compact_svd_with_budget(a, rank_tol, DEFAULT_MAX_SWEEPS)
}

pub fn compact_svd_with_budget(
    a: &Matrix,
    rank_tol: f64,
    max_sweeps: usize,
) -> Result<Svd, LinalgError> {
    if a.rows() == 0 || a.cols() == 0 {
        return Err(LinalgError::Empty);
    }
    if !a.is_finite() {
        return Err(LinalgError::NonFinite { op: "compact_svd" });
    }
    let rank_tol = rank_tol.max(0.0);
    let wide = a.rows() < a.cols();
    let tall = if wide { a.transpose() } else { a.clone() };
    let JacobiFactors { w, v } = jacobi_sweeps(&tall, max_sweeps)?;
    let (m, n) = w.shape();

    let norms: Vec<f64> = (0..n)
        .map(|j| (0..m).map(|i| w[(i, j)] * w[(i, j)]).sum::<f64>().sqrt())
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    // stable sort keeps ties in column order, so the result stays deterministic
    order.sort_by(|&x, &y| norms[y].total_cmp(&norms[x]));
    let sigma_max = norms[order[0]];
    let cutoff = rank_tol * sigma_max;
    let kept: Vec<usize> = order
        .into_iter()
        .filter(|&j| norms[j] > cutoff && norms[j] > 0.0)
        .collect();
    let r = kept.len();

    let mut u = Matrix::zeros(m, r);
    let mut vr = Matrix::zeros(n, r);
    let mut sigma = Vec::with_capacity(r);
    for (k, &j) in kept.iter().enumerate() {
        let s = norms[j];
        for i in 0..m {
            u[(i, k)] = w[(i, j)] / s;
        }
        for i in 0..n {
            vr[(i, k)] = v[(i, j)];
        }
        sigma.push(s);
    }

    let (mut u, mut vr) = if wide { (vr, u) } else { (u, vr) };
    normalize_signs(&mut u, &mut vr);
    Ok(Svd { u, sigma, v: vr })
}

fn normalize_signs(u: &mut Matrix, v: &mut Matrix) {
    let r = u.cols();
    for k in 0..r {
        let first = (0..u.rows()).map(|i| u[(i, k)]).find(|x| x.abs() > 1e-14);
        if matches!(first, Some(x) if x < 0.0) {
            for i in 0..u.rows() {
                u[(i, k)] = -u[(i, k)];
            }
            for i in 0..v.rows() {
                v[(i, k)] = -v[(i, k)];
            }
        }
    }
}

/// All singular values (including zeros), non-increasing.
pub fn singular_values(a: &Matrix) -> Result<Vec<f64>, LinalgError> {
    let mut s = compact_svd(a, 0.0)?.sigma;
    s.resize(a.rows().min(a.cols()), 0.0);
    Ok(s)
}
