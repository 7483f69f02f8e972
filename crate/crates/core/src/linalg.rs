//! Small dense eigen and singular value decompositions by Jacobi rotations.

use ndarray::{Array1, Array2};

const MAX_SWEEPS: usize = 100;

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi sweeps.
///
/// Returns eigenvalues in descending order and the matching eigenvectors as
/// columns. Sweep order is fixed, so results are reproducible.
pub fn symmetric_eigen(a: &Array2<f64>) -> (Array1<f64>, Array2<f64>) {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "symmetric_eigen needs a square matrix");
    let mut m = a.clone();
    let mut v = Array2::<f64>::eye(n);
    let scale = m.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);

    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[[i, j]] * m[[i, j]])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[[p, q]];
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (m[[q, q]] - m[[p, p]]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[[k, p]];
                    let mkq = m[[k, q]];
                    m[[k, p]] = c * mkp - s * mkq;
                    m[[k, q]] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[[p, k]];
                    let mqk = m[[q, k]];
                    m[[p, k]] = c * mpk - s * mqk;
                    m[[q, k]] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[[j, j]].total_cmp(&m[[i, i]]).then(i.cmp(&j)));
    let values = Array1::from_iter(order.iter().map(|&i| m[[i, i]]));
    let mut vectors = Array2::zeros((n, n));
    for (dst, &src) in order.iter().enumerate() {
        vectors.column_mut(dst).assign(&v.column(src));
    }
    (values, vectors)
}

/// Thin singular value decomposition A = U diag(s) Vᵀ by one-sided Jacobi
/// (Hestenes) rotations. Requires rows >= cols; singular values descending.
pub fn svd(a: &Array2<f64>) -> (Array2<f64>, Array1<f64>, Array2<f64>) {
    let (rows, cols) = a.dim();
    assert!(rows >= cols, "svd expects at least as many rows as columns");
    let mut u = a.clone();
    let mut v = Array2::<f64>::eye(cols);

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..cols {
            for q in (p + 1)..cols {
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                for k in 0..rows {
                    alpha += u[[k, p]] * u[[k, p]];
                    beta += u[[k, q]] * u[[k, q]];
                    gamma += u[[k, p]] * u[[k, q]];
                }
                if gamma.abs() <= 1e-15 * (alpha * beta).sqrt() || gamma == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for k in 0..rows {
                    let ukp = u[[k, p]];
                    let ukq = u[[k, q]];
                    u[[k, p]] = c * ukp - s * ukq;
                    u[[k, q]] = s * ukp + c * ukq;
                }
                for k in 0..cols {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let norms: Vec<f64> = (0..cols).map(|j| u.column(j).iter().map(|x| x * x).sum::<f64>().sqrt()).collect();
    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]).then(i.cmp(&j)));

    let mut u_out = Array2::zeros((rows, cols));
    let mut v_out = Array2::zeros((cols, cols));
    let mut s_out = Array1::zeros(cols);
    for (dst, &src) in order.iter().enumerate() {
        let sigma = norms[src];
        s_out[dst] = sigma;
        v_out.column_mut(dst).assign(&v.column(src));
        if sigma > 1e-300 {
            u_out.column_mut(dst).assign(&(&u.column(src) / sigma));
        }
    }
    complete_orthonormal_columns(&mut u_out, &s_out);
    (u_out, s_out, v_out)
}

/// Replaces columns of `u` belonging to zero singular values with unit
/// vectors orthogonal to the rest (Gram–Schmidt against the standard basis).
fn complete_orthonormal_columns(u: &mut Array2<f64>, s: &Array1<f64>) {
    let (rows, cols) = u.dim();
    let mut basis = 0;
    for j in 0..cols {
        if s[j] > 1e-300 {
            continue;
        }
        while basis < rows {
            let mut cand = Array1::<f64>::zeros(rows);
            cand[basis] = 1.0;
            basis += 1;
            for k in 0..cols {
                if k == j || (s[k] <= 1e-300 && k > j) {
                    continue;
                }
                let col = u.column(k);
                let proj = col.dot(&cand);
                cand.scaled_add(-proj, &col);
            }
            let norm = cand.dot(&cand).sqrt();
            if norm > 1e-8 {
                u.column_mut(j).assign(&(cand / norm));
                break;
            }
        }
    }
}
