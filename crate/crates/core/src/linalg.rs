//! Dense kernels for the small (2+2k)-sized systems of the history fit.
//!
//! Matrices are row-major `Vec<f64>` with explicit dimensions. Nothing here
//! is meant for large problems.

/// Cholesky factor `L` (lower triangular, row-major) of a symmetric
/// positive-definite `dim x dim` matrix, or `None` if a pivot is not
/// strictly positive.
pub fn cholesky(a: &[f64], dim: usize) -> Option<Vec<f64>> {
    debug_assert_eq!(a.len(), dim * dim);
    let mut l = vec![0.0; dim * dim];
    for i in 0..dim {
        for j in 0..=i {
            let mut sum = a[i * dim + j];
            for p in 0..j {
                sum -= l[i * dim + p] * l[j * dim + p];
            }
            if i == j {
                if !(sum > 0.0) || !sum.is_finite() {
                    return None;
                }
                l[i * dim + i] = sum.sqrt();
            } else {
                l[i * dim + j] = sum / l[j * dim + j];
            }
        }
    }
    Some(l)
}

/// Inverse of `L L^T` given the Cholesky factor `L`.
pub fn cholesky_inverse(l: &[f64], dim: usize) -> Vec<f64> {
    let mut inv = vec![0.0; dim * dim];
    let mut col = vec![0.0; dim];
    for c in 0..dim {
        // forward: L z = e_c
        for i in 0..dim {
            let mut sum = if i == c { 1.0 } else { 0.0 };
            for p in 0..i {
                sum -= l[i * dim + p] * col[p];
            }
            col[i] = sum / l[i * dim + i];
        }
        // backward: L^T x = z
        for i in (0..dim).rev() {
            let mut sum = col[i];
            for p in i + 1..dim {
                sum -= l[p * dim + i] * col[p];
            }
            col[i] = sum / l[i * dim + i];
        }
        for i in 0..dim {
            inv[i * dim + c] = col[i];
        }
    }
    inv
}

/// Maximum absolute column sum.
pub fn norm_one(a: &[f64], dim: usize) -> f64 {
    (0..dim)
        .map(|c| (0..dim).map(|r| a[r * dim + c].abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Moore-Penrose pseudo-inverse of the `rows x cols` matrix `a`
/// (`rows >= cols`) via one-sided Jacobi SVD.
///
/// Returns the `cols x rows` pseudo-inverse together with the singular
/// values in descending order, or `None` when some singular value falls
/// below `rel_cutoff` times the largest one.
pub fn jacobi_pinv(a: &[f64], rows: usize, cols: usize, rel_cutoff: f64) -> Option<(Vec<f64>, Vec<f64>)> {
    debug_assert!(rows >= cols);
    // work column-major: column c of `u` is u[c * rows..(c + 1) * rows]
    let mut u = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            u[c * rows + r] = a[r * cols + c];
        }
    }
    let mut v = vec![0.0; cols * cols];
    for c in 0..cols {
        v[c * cols + c] = 1.0;
    }

    const MAX_SWEEPS: usize = 60;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..cols {
            for q in p + 1..cols {
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                for r in 0..rows {
                    let up = u[p * rows + r];
                    let uq = u[q * rows + r];
                    alpha += up * up;
                    beta += uq * uq;
                    gamma += up * uq;
                }
                if gamma == 0.0 || gamma.abs() <= 1e-15 * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = cs * t;
                for r in 0..rows {
                    let up = u[p * rows + r];
                    let uq = u[q * rows + r];
                    u[p * rows + r] = cs * up - sn * uq;
                    u[q * rows + r] = sn * up + cs * uq;
                }
                for r in 0..cols {
                    let vp = v[p * cols + r];
                    let vq = v[q * cols + r];
                    v[p * cols + r] = cs * vp - sn * vq;
                    v[q * cols + r] = sn * vp + cs * vq;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let sigma: Vec<f64> = (0..cols)
        .map(|c| u[c * rows..(c + 1) * rows].iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    let largest = sigma.iter().cloned().fold(0.0, f64::max);
    if !(largest > 0.0) || sigma.iter().any(|&s| s <= rel_cutoff * largest) {
        return None;
    }

    // pinv = V diag(1/s) U^T, with U's columns = u columns / s
    let mut pinv = vec![0.0; cols * rows];
    for c in 0..cols {
        let inv_sq = 1.0 / (sigma[c] * sigma[c]);
        for i in 0..cols {
            let vic = v[c * cols + i] * inv_sq;
            if vic == 0.0 {
                continue;
            }
            let row = &mut pinv[i * rows..(i + 1) * rows];
            for (dst, &ur) in row.iter_mut().zip(&u[c * rows..(c + 1) * rows]) {
                *dst += vic * ur;
            }
        }
    }
    let mut sorted = sigma;
    sorted.sort_by(|a, b| b.total_cmp(a));
    Some((pinv, sorted))
}
