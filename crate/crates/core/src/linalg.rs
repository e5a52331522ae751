//! Dense linear-algebra helpers shared by the state, oracle and compiler modules.
//!
//! Quadrature vectors are interleaved as (x1, p1, x2, p2, ...). A complex
//! N×N mode matrix V acts on mode amplitudes a_k and embeds as a 2N×2N real
//! matrix with 2×2 blocks [[Re V, -Im V], [Im V, Re V]].

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;
pub type RMat = DMatrix<f64>;
pub type RVec = DVector<f64>;

/// Block-diagonal symplectic form: per mode [[0, 1], [-1, 0]].
pub fn symplectic_form(n_modes: usize) -> RMat {
    let mut omega = RMat::zeros(2 * n_modes, 2 * n_modes);
    for k in 0..n_modes {
        omega[(2 * k, 2 * k + 1)] = 1.0;
        omega[(2 * k + 1, 2 * k)] = -1.0;
    }
    omega
}

/// Max-abs entry of S Ω Sᵀ − Ω; zero iff S is symplectic.
pub fn symplecticity_defect(s: &RMat) -> f64 {
    let n_modes = s.nrows() / 2;
    let omega = symplectic_form(n_modes);
    let residual = s * &omega * s.transpose() - omega;
    residual.amax()
}

/// Max-abs entry of U U† − I.
pub fn unitarity_defect(u: &CMat) -> f64 {
    let identity = CMat::identity(u.nrows(), u.ncols());
    let residual = u * u.adjoint() - identity;
    residual.camax()
}

/// Max-abs entry of M − Mᵀ.
pub fn symmetry_defect(m: &CMat) -> f64 {
    (m - m.transpose()).camax()
}

/// Embed a complex mode matrix into quadrature space.
pub fn embed_unitary(v: &CMat) -> RMat {
    let n = v.nrows();
    let mut s = RMat::zeros(2 * n, 2 * n);
    for k in 0..n {
        for l in 0..n {
            let z = v[(k, l)];
            s[(2 * k, 2 * l)] = z.re;
            s[(2 * k, 2 * l + 1)] = -z.im;
            s[(2 * k + 1, 2 * l)] = z.im;
            s[(2 * k + 1, 2 * l + 1)] = z.re;
        }
    }
    s
}

/// Recover the mode matrix from a quadrature-space rotation.
///
/// Errors when `o` does not have the paired block structure produced by
/// [`embed_unitary`] (i.e. is not in the orthogonal-symplectic intersection).
pub fn extract_unitary(o: &RMat, tol: f64) -> Result<CMat> {
    let n = o.nrows() / 2;
    let mut v = CMat::zeros(n, n);
    let mut defect: f64 = 0.0;
    for k in 0..n {
        for l in 0..n {
            let re = o[(2 * k, 2 * l)];
            let im = o[(2 * k + 1, 2 * l)];
            defect = defect
                .max((o[(2 * k + 1, 2 * l + 1)] - re).abs())
                .max((o[(2 * k, 2 * l + 1)] + im).abs());
            v[(k, l)] = Complex64::new(re, im);
        }
    }
    if defect > tol {
        return Err(Error::NotModeRotation { defect });
    }
    Ok(v)
}

/// Positive Williamson spectrum of a covariance matrix (vacuum mode → 1/2).
pub fn symplectic_eigenvalues(cov: &RMat) -> Vec<f64> {
    let n_modes = cov.nrows() / 2;
    let m = symplectic_form(n_modes) * cov;
    let eigs = m.complex_eigenvalues();
    let mut nus: Vec<f64> = eigs.iter().map(|z| z.im.abs()).collect();
    nus.sort_by(|a, b| a.partial_cmp(b).unwrap());
    // Eigenvalues of Ωσ come in ±iν pairs; keep one of each.
    nus.into_iter().skip(1).step_by(2).collect()
}

/// Takagi/Autonne factorization of a complex symmetric matrix.
///
/// Returns `(u, d)` with `u β uᵀ = diag(d)`, `d` real, non-negative and
/// sorted descending (equivalently `β = u† diag(d) u*`).
///
/// Uses the doubled real-symmetric eigenproblem: for β = X + iY the matrix
/// [[X, Y], [Y, -X]] has spectrum ±d, and its eigenvectors (x; y) at +d give
/// con-eigenvectors x + iy of β.
pub fn takagi(beta: &CMat, tol: f64) -> Result<(CMat, Vec<f64>)> {
    let n = beta.nrows();
    if beta.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: beta.ncols(),
        });
    }
    let sym_defect = symmetry_defect(beta);
    if sym_defect > tol {
        return Err(Error::NotSymmetric { defect: sym_defect });
    }

    let mut doubled = RMat::zeros(2 * n, 2 * n);
    for r in 0..n {
        for c in 0..n {
            let z = beta[(r, c)];
            doubled[(r, c)] = z.re;
            doubled[(r, c + n)] = z.im;
            doubled[(r + n, c)] = z.im;
            doubled[(r + n, c + n)] = -z.re;
        }
    }
    let eig = doubled.symmetric_eigen();
    let scale = beta.camax().max(1.0);
    let rank_tol = 1e-13 * scale;

    // Collect eigenpairs with clearly positive eigenvalue, largest first.
    let mut order: Vec<usize> = (0..2 * n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    let mut columns: Vec<CVec> = Vec::with_capacity(n);
    let mut d = Vec::with_capacity(n);
    for &idx in order.iter().take(n) {
        let lambda = eig.eigenvalues[idx];
        if lambda <= rank_tol {
            break;
        }
        let v = eig.eigenvectors.column(idx);
        let col = CVec::from_fn(n, |j, _| Complex64::new(v[j], v[j + n]));
        columns.push(col);
        d.push(lambda);
    }

    // Near-zero singular values leave the remaining columns free up to
    // orthonormality; complete the basis from projected unit vectors.
    let mut k = 0;
    while columns.len() < n {
        if k >= n {
            return Err(Error::Numerical(
                "takagi basis completion exhausted candidate vectors".into(),
            ));
        }
        let mut cand = CVec::zeros(n);
        cand[k] = Complex64::new(1.0, 0.0);
        k += 1;
        for col in &columns {
            let overlap = col.dotc(&cand);
            cand -= col * overlap;
        }
        let norm = cand.norm();
        if norm > 1e-6 {
            columns.push(cand / Complex64::new(norm, 0.0));
            d.push(0.0);
        }
    }

    // Re-orthonormalize in order; large-d columns are already orthonormal and
    // stay put, small-d ones absorb any residual mixing.
    for i in 0..n {
        for j in 0..i {
            let (head, tail) = columns.split_at_mut(i);
            let overlap = head[j].dotc(&tail[0]);
            tail[0] -= &head[j] * overlap;
        }
        let norm = columns[i].norm();
        if norm < 1e-6 {
            return Err(Error::Numerical(
                "takagi re-orthonormalization produced a null column".into(),
            ));
        }
        columns[i] /= Complex64::new(norm, 0.0);
    }

    let w = CMat::from_fn(n, n, |r, c| columns[c][r]);
    let u = w.adjoint();
    Ok((u, d))
}

/// Reconstruction residual ‖u† diag(d) u* − β‖∞ for a Takagi pair.
pub fn takagi_residual(beta: &CMat, u: &CMat, d: &[f64]) -> f64 {
    let n = beta.nrows();
    let diag = CMat::from_fn(n, n, |r, c| {
        if r == c {
            Complex64::new(d[r], 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    let rebuilt = u.adjoint() * diag * u.conjugate();
    (rebuilt - beta).camax()
}
