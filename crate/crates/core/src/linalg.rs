//! Dense and tridiagonal eigen/singular routines.

use nalgebra::DMatrix;
use num_traits::Float;

use crate::error::{Error, Result};
use crate::scalar::{LinalgReal, Real};

/// Eigenvalues of the symmetric tridiagonal matrix with diagonal `diag` and
/// off-diagonal `off` (`off[i]` couples `i` and `i + 1`), by implicit QL with
/// Wilkinson shifts. Returned in ascending order.
pub fn tridiagonal_eigenvalues<T: Real>(diag: &[T], off: &[T]) -> Result<Vec<T>> {
    let n = diag.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    if off.len() + 1 != n {
        return Err(Error::Contract(format!(
            "tridiagonal: {} diagonal entries need {} off-diagonal entries, got {}",
            n,
            n - 1,
            off.len()
        )));
    }
    let mut d = diag.to_vec();
    let mut e = off.to_vec();
    e.push(T::zero());
    let two = T::lit(2.0);

    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= T::epsilon() * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                return Err(Error::Numeric("tridiagonal QL did not converge".into()));
            }
            let mut g = (d[l + 1] - d[l]) / (two * e[l]);
            let mut r = g.hypot(T::one());
            g = d[m] - d[l] + e[l] / (g + r.abs().copysign(g));
            let (mut s, mut c, mut p) = (T::one(), T::one(), T::zero());
            let mut deflated = false;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == T::zero() {
                    d[i + 1] -= p;
                    e[m] = T::zero();
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + two * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = T::zero();
        }
    }
    if d.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("tridiagonal QL produced a non-finite eigenvalue".into()));
    }
    d.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    Ok(d)
}

/// Singular values of `a`, descending.
pub fn singular_values<T: LinalgReal>(a: &DMatrix<T>) -> Result<Vec<T>> {
    if a.iter().any(|x| !Float::is_finite(*x)) {
        return Err(Error::Numeric("matrix has non-finite entries".into()));
    }
    let sv = a.clone().singular_values();
    let mut out: Vec<T> = sv.iter().copied().collect();
    if out.iter().any(|x| !Float::is_finite(*x)) {
        return Err(Error::Numeric("SVD produced non-finite singular values".into()));
    }
    out.sort_by(|a, b| b.partial_cmp(a).expect("finite"));
    Ok(out)
}

/// Eigenpairs of the Gram matrix `AᵀA`, eigenvalues (squared singular
/// values) descending with the matching right singular vectors as columns.
///
/// Built on the symmetric eigensolver: the bidiagonal SVD returns
/// inconsistent left vectors for exactly rank-deficient inputs.
pub fn gram_eigenpairs<T: LinalgReal>(a: &DMatrix<T>) -> Result<(Vec<T>, DMatrix<T>)> {
    let gram = a.transpose() * a;
    let eig = nalgebra::linalg::SymmetricEigen::try_new(gram, T::default_epsilon(), 0)
        .ok_or_else(|| Error::Numeric("symmetric eigensolver did not converge".into()))?;
    let vals = eig.eigenvalues;
    if vals.iter().any(|x| !Float::is_finite(*x)) {
        return Err(Error::Numeric("Gram eigenvalues are not finite".into()));
    }
    let mut order: Vec<usize> = (0..vals.len()).collect();
    order.sort_by(|&i, &j| vals[j].partial_cmp(&vals[i]).expect("finite"));
    let v = DMatrix::from_fn(a.ncols(), order.len(), |r, k| eig.eigenvectors[(r, order[k])]);
    Ok((order.iter().map(|&i| vals[i]).collect(), v))
}
