//! Small dense helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Thin SVD with singular values in descending order.
#[derive(Debug, Clone)]
pub struct ThinSvd {
    pub u: DMatrix<f64>,
    pub singular_values: DVector<f64>,
    /// Right singular vectors as columns (`cols x min(rows, cols)`).
    pub v: DMatrix<f64>,
}

pub fn thin_svd(m: &DMatrix<f64>) -> ThinSvd {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return ThinSvd {
            u: DMatrix::zeros(rows, 0),
            singular_values: DVector::zeros(0),
            v: DMatrix::zeros(cols, 0),
        };
    }
    let svd = nalgebra::SVD::new(m.clone(), true, true);
    ThinSvd {
        u: svd.u.expect("u requested"),
        singular_values: svd.singular_values,
        v: svd.v_t.expect("v_t requested").transpose(),
    }
}

/// Largest singular value. Uses the Gram matrix of the smaller side.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return 0.0;
    }
    if rows.min(cols) <= 8 {
        return m.singular_values().max();
    }
    let gram = if cols <= rows {
        m.tr_mul(m)
    } else {
        m * m.transpose()
    };
    let top = SymmetricEigen::new(gram).eigenvalues.max();
    top.max(0.0).sqrt()
}

/// Smallest of the `min(rows, cols)` singular values.
pub fn sigma_min(m: &DMatrix<f64>) -> f64 {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return 0.0;
    }
    m.singular_values().min()
}

pub fn nuclear_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().sum()
}

/// Frobenius inner product `trace(a^T b)`.
pub fn frob_inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    debug_assert_eq!(a.shape(), b.shape());
    dot(a.as_slice(), b.as_slice())
}

/// Dot product with a fixed 8-lane accumulation order.
///
/// Plain multiply-add rather than `mul_add`: without a target FMA feature the
/// latter lowers to a libm call and is an order of magnitude slower.
///
/// The summation order depends only on the slice length, so results are
/// bit-reproducible for a given build. `a` may be single precision; its
/// entries are widened before multiplying.
#[inline]
pub fn dot<T: Copy + Into<f64>>(a: &[T], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for j in 0..8 {
            acc[j] += x[j].into() * y[j];
        }
    }
    let mut s = ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]));
    for (x, y) in ra.iter().zip(rb) {
        s += (*x).into() * y;
    }
    s
}

#[inline]
pub fn axpy<T: Copy + Into<f64>>(alpha: f64, x: &[T], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * (*xi).into();
    }
}

/// Orthonormal basis of the orthogonal complement of `span(q)`.
///
/// `q` must have orthonormal columns. The basis is read off the eigenvectors
/// of the projector `I - q q^T` with eigenvalue one.
pub fn orthonormal_complement(q: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, r) = q.shape();
    let keep = n.saturating_sub(r);
    if keep == 0 {
        return DMatrix::zeros(n, 0);
    }
    let projector = DMatrix::identity(n, n) - q * q.transpose();
    let eig = SymmetricEigen::new(projector);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut out = DMatrix::zeros(n, keep);
    for (j, &idx) in order.iter().take(keep).enumerate() {
        let mut col = eig.eigenvectors.column(idx).into_owned();
        sign_normalize(&mut col);
        out.set_column(j, &col);
    }
    out
}

/// Flips the sign of `v` so that its largest-magnitude entry is positive.
/// Returns `true` if the sign was flipped.
pub fn sign_normalize(v: &mut DVector<f64>) -> bool {
    let mut best = 0.0f64;
    let mut sign = 1.0;
    for &x in v.iter() {
        if x.abs() > best {
            best = x.abs();
            sign = x.signum();
        }
    }
    if sign < 0.0 {
        v.neg_mut();
        true
    } else {
        false
    }
}

/// Orthonormal basis for the column span of a full-column-rank matrix.
pub fn orthonormalize(m: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = thin_svd(m);
    svd.u
}

/// Largest deviation of `q^T q` from the identity.
pub fn orthonormality_defect(q: &DMatrix<f64>) -> f64 {
    let g = q.tr_mul(q);
    let n = g.nrows();
    (g - DMatrix::identity(n, n)).amax()
}
