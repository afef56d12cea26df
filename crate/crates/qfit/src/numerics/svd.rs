use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::numerics::ComplexMatrix;

/// Largest matrix dimension accepted by [`svd`]; gates top out at six qubits.
pub const MAX_SVD_DIM: usize = 64;

const MAX_SWEEPS: usize = 128;

/// Singular value decomposition `a = x · diag(d_vals) · y†` of a square
/// complex matrix, with `d_vals` sorted non-increasing.
///
/// One-sided Jacobi on the columns: rotations are applied until all column
/// pairs are orthogonal, which is both simple and highly accurate for the
/// small matrices used here.
pub fn svd(a: &ComplexMatrix) -> Result<(ComplexMatrix, Vec<f64>, ComplexMatrix)> {
    if !a.is_square() {
        return Err(Error::Dimension(format!(
            "svd requires a square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    let d = a.rows();
    if d > MAX_SVD_DIM {
        return Err(Error::Capacity(format!(
            "svd limited to {}x{} matrices, got {}x{}",
            MAX_SVD_DIM, MAX_SVD_DIM, d, d
        )));
    }
    if !a.is_finite() {
        return Err(Error::Numeric("svd input has non-finite entries".into()));
    }
    if d == 0 {
        return Ok((ComplexMatrix::zeros(0, 0), vec![], ComplexMatrix::zeros(0, 0)));
    }

    // Column-major working copies of A and V so rotations touch contiguous
    // memory. After convergence A·V = W with orthogonal columns.
    let mut w = columns_of(a);
    let mut v = columns_of(&ComplexMatrix::identity(d));

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..d - 1 {
            for q in p + 1..d {
                if rotate_pair(&mut w, &mut v, p, q) {
                    rotated = true;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    // Singular values are the column norms; normalized columns form X.
    let mut order: Vec<usize> = (0..d).collect();
    let norms: Vec<f64> = w.iter().map(|col| col_norm(col)).collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).unwrap());

    let mut d_vals = Vec::with_capacity(d);
    let mut x_cols: Vec<Vec<Complex64>> = Vec::with_capacity(d);
    let mut y_cols: Vec<Vec<Complex64>> = Vec::with_capacity(d);
    for &idx in &order {
        d_vals.push(norms[idx]);
        y_cols.push(v[idx].clone());
        let sigma = norms[idx];
        if sigma > 0.0 {
            x_cols.push(w[idx].iter().map(|z| z / sigma).collect());
        } else {
            x_cols.push(vec![Complex64::new(0.0, 0.0); d]);
        }
    }
    complete_zero_columns(&mut x_cols, &d_vals);

    Ok((from_columns(&x_cols), d_vals, from_columns(&y_cols)))
}

/// Orthogonalize columns p and q of `w`, mirroring the rotation on `v`.
/// Returns true when a rotation was applied.
fn rotate_pair(w: &mut [Vec<Complex64>], v: &mut [Vec<Complex64>], p: usize, q: usize) -> bool {
    let alpha: f64 = w[p].iter().map(|z| z.norm_sqr()).sum();
    let beta: f64 = w[q].iter().map(|z| z.norm_sqr()).sum();
    let gamma: Complex64 = w[p].iter().zip(&w[q]).map(|(a, b)| a.conj() * b).sum();
    let g = gamma.norm();

    if g * g <= f64::EPSILON * f64::EPSILON * alpha * beta || g < 1e-300 {
        return false;
    }

    // Absorb the phase of the inner product into column q, then the problem
    // reduces to a real 2x2 Jacobi rotation.
    let phase = gamma / g;
    let phase_conj = phase.conj();
    for z in w[q].iter_mut() {
        *z *= phase_conj;
    }
    for z in v[q].iter_mut() {
        *z *= phase_conj;
    }

    let zeta = (beta - alpha) / (2.0 * g);
    let t = if zeta >= 0.0 {
        1.0 / (zeta + (1.0 + zeta * zeta).sqrt())
    } else {
        -1.0 / (-zeta + (1.0 + zeta * zeta).sqrt())
    };
    let cs = 1.0 / (1.0 + t * t).sqrt();
    let sn = cs * t;

    apply_rotation(w, p, q, cs, sn);
    apply_rotation(v, p, q, cs, sn);
    true
}

fn apply_rotation(cols: &mut [Vec<Complex64>], p: usize, q: usize, cs: f64, sn: f64) {
    let (lo, hi) = cols.split_at_mut(q);
    let cp = &mut lo[p];
    let cq = &mut hi[0];
    for (a, b) in cp.iter_mut().zip(cq.iter_mut()) {
        let na = *a * cs - *b * sn;
        let nb = *a * sn + *b * cs;
        *a = na;
        *b = nb;
    }
}

/// Replace columns with zero singular value by an orthonormal completion of
/// the nonzero ones, so X stays unitary even for rank-deficient input.
fn complete_zero_columns(x_cols: &mut [Vec<Complex64>], d_vals: &[f64]) {
    let d = x_cols.len();
    let tol = d_vals.first().copied().unwrap_or(0.0) * f64::EPSILON * d as f64;
    for i in 0..d {
        if d_vals[i] > tol && d_vals[i] > 0.0 {
            continue;
        }
        let mut best: Option<(f64, Vec<Complex64>)> = None;
        for k in 0..d {
            let mut cand = vec![Complex64::new(0.0, 0.0); d];
            cand[k] = Complex64::new(1.0, 0.0);
            for (j, col) in x_cols.iter().enumerate() {
                if j == i || (j > i && d_vals[j] <= tol) {
                    continue;
                }
                let overlap: Complex64 = col.iter().zip(&cand).map(|(a, b)| a.conj() * b).sum();
                for (c, u) in cand.iter_mut().zip(col) {
                    *c -= overlap * u;
                }
            }
            let norm = col_norm(&cand);
            if best.as_ref().is_none_or(|(n, _)| norm > *n) {
                best = Some((norm, cand));
            }
        }
        let (norm, mut cand) = best.expect("d >= 1");
        for z in cand.iter_mut() {
            *z /= norm;
        }
        x_cols[i] = cand;
    }
}

fn col_norm(col: &[Complex64]) -> f64 {
    col.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn columns_of(a: &ComplexMatrix) -> Vec<Vec<Complex64>> {
    let d = a.rows();
    (0..a.cols())
        .map(|j| (0..d).map(|i| a.get(i, j)).collect())
        .collect()
}

fn from_columns(cols: &[Vec<Complex64>]) -> ComplexMatrix {
    let d = cols.len();
    let mut m = ComplexMatrix::zeros(d, d);
    for (j, col) in cols.iter().enumerate() {
        for (i, z) in col.iter().enumerate() {
            m.set(i, j, *z);
        }
    }
    m
}
