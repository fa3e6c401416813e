//! Planted ground truths, trainable factors and the symmetric lift.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{orthonormal_complement, orthonormalize, sign_normalize, thin_svd};
use crate::rng::{gaussian_matrix, rng_from_seed};

/// Rank-`r` target matrix together with the SVD it was built from and the
/// lifted eigenbases of `sym(X)`.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub x: DMatrix<f64>,
    pub p_x: DMatrix<f64>,
    pub sigma_x: DVector<f64>,
    pub q_x: DMatrix<f64>,
    pub rank: usize,
    pub kappa: f64,
    /// `(1/sqrt 2) [P_X; Q_X]`: eigenvectors of `sym(X)` for `+sigma_i`.
    pub l_x: DMatrix<f64>,
    /// `(1/sqrt 2) [P_X; -Q_X]`: eigenvectors of `sym(X)` for `-sigma_i`.
    pub l_tilde_x: DMatrix<f64>,
    /// Orthonormal complement of `span(L_X)` in `R^(n1+n2)`.
    pub l_x_perp: DMatrix<f64>,
}

impl GroundTruth {
    /// Assembles a ground truth from an exact SVD. Columns of `p` are
    /// sign-normalised (largest-magnitude entry positive) with the matching
    /// columns of `q` flipped alongside.
    pub fn from_svd(mut p: DMatrix<f64>, sigma: DVector<f64>, mut q: DMatrix<f64>) -> Result<Self> {
        let r = sigma.len();
        if r == 0 || p.ncols() != r || q.ncols() != r {
            return Err(Error::InvalidDimension(format!(
                "SVD factors disagree on rank: P has {}, sigma {}, Q has {}",
                p.ncols(),
                r,
                q.ncols()
            )));
        }
        if sigma.iter().any(|&s| !(s > 0.0)) || sigma.as_slice().windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::param(
                "sigma",
                "singular values must be positive and descending",
            ));
        }
        for j in 0..r {
            let mut col = p.column(j).into_owned();
            if sign_normalize(&mut col) {
                p.set_column(j, &col);
                let flipped = -q.column(j);
                q.set_column(j, &flipped);
            }
        }
        let x = &p * DMatrix::from_diagonal(&sigma) * q.transpose();
        let (n1, n2) = (p.nrows(), q.nrows());
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let mut l_x = DMatrix::zeros(n1 + n2, r);
        let mut l_tilde_x = DMatrix::zeros(n1 + n2, r);
        l_x.view_mut((0, 0), (n1, r)).copy_from(&(&p * s));
        l_x.view_mut((n1, 0), (n2, r)).copy_from(&(&q * s));
        l_tilde_x.view_mut((0, 0), (n1, r)).copy_from(&(&p * s));
        l_tilde_x.view_mut((n1, 0), (n2, r)).copy_from(&(&q * -s));
        let l_x_perp = orthonormal_complement(&l_x);
        let kappa = sigma[0] / sigma[r - 1];
        Ok(Self {
            x,
            p_x: p,
            sigma_x: sigma,
            q_x: q,
            rank: r,
            kappa,
            l_x,
            l_tilde_x,
            l_x_perp,
        })
    }

    pub fn n1(&self) -> usize {
        self.x.nrows()
    }

    pub fn n2(&self) -> usize {
        self.x.ncols()
    }

    /// Spectral norm `||X||`.
    pub fn norm(&self) -> f64 {
        self.sigma_x[0]
    }

    pub fn sigma_min(&self) -> f64 {
        self.sigma_x[self.rank - 1]
    }

    /// `diag(I_n1, -I_n2) L_X_perp`, the complement basis for `L~_X`.
    pub fn l_tilde_x_perp(&self) -> DMatrix<f64> {
        let mut out = self.l_x_perp.clone();
        let n1 = self.n1();
        out.rows_mut(n1, self.n2()).neg_mut();
        out
    }

    pub fn sym(&self) -> DMatrix<f64> {
        sym_embed(&self.x)
    }
}

/// Random rank-`r` truth `X = X1 X2 / ||X1 X2||` with standard normal
/// `X1 (n1 x r)` and `X2 (r x n2)`.
///
/// The SVD is assembled from QR factors of `X1` and `X2^T` and an SVD of the
/// `r x r` core, then `X` is rebuilt from it, so the stored bases are exact.
pub fn make_ground_truth(n1: usize, n2: usize, r: usize, seed: u64) -> Result<GroundTruth> {
    check_rank(n1, n2, r)?;
    let mut rng = rng_from_seed(seed);
    let left = gaussian_matrix(&mut rng, n1, r, 1.0);
    let right = gaussian_matrix(&mut rng, r, n2, 1.0);
    let ql = left.clone().qr();
    let qr_right = right.transpose().qr();
    let core = ql.r() * qr_right.r().transpose();
    let svd = thin_svd(&core);
    let p = ql.q() * &svd.u;
    let q = qr_right.q() * &svd.v;
    let top = svd.singular_values[0];
    if !(svd.singular_values[r - 1] > 1e-10 * top) {
        return Err(Error::param("seed", "sampled factors are rank deficient"));
    }
    let sigma = svd.singular_values / top;
    GroundTruth::from_svd(orthonormalize_keep(&p), sigma, orthonormalize_keep(&q))
}

/// Truth with random orthonormal bases and singular values log-spaced from
/// 1 down to `1 / kappa_target`.
pub fn make_ground_truth_conditioned(
    n1: usize,
    n2: usize,
    r: usize,
    kappa_target: f64,
    seed: u64,
) -> Result<GroundTruth> {
    check_rank(n1, n2, r)?;
    if !(kappa_target >= 1.0) || !kappa_target.is_finite() {
        return Err(Error::param(
            "kappa_target",
            format!("must be >= 1, got {kappa_target}"),
        ));
    }
    if r == 1 && kappa_target != 1.0 {
        return Err(Error::param(
            "kappa_target",
            "a rank-one truth has condition number 1",
        ));
    }
    let mut rng = rng_from_seed(seed);
    let p = orthonormalize(&gaussian_matrix(&mut rng, n1, r, 1.0));
    let q = orthonormalize(&gaussian_matrix(&mut rng, n2, r, 1.0));
    let sigma = DVector::from_fn(r, |i, _| {
        if r == 1 {
            1.0
        } else {
            kappa_target.powf(-(i as f64) / (r - 1) as f64)
        }
    });
    let mut gt = GroundTruth::from_svd(p, sigma, q)?;
    gt.kappa = if r == 1 { 1.0 } else { kappa_target };
    Ok(gt)
}

// QR-derived bases are orthonormal to rounding already; this only guards the
// (n x r) shape contract.
fn orthonormalize_keep(m: &DMatrix<f64>) -> DMatrix<f64> {
    debug_assert!(crate::linalg::orthonormality_defect(m) < 1e-10);
    m.clone()
}

fn check_rank(n1: usize, n2: usize, r: usize) -> Result<()> {
    if n1 == 0 || n2 == 0 {
        return Err(Error::InvalidDimension(format!(
            "matrix dimensions must be positive, got {n1}x{n2}"
        )));
    }
    if r == 0 || r > n1.min(n2) {
        return Err(Error::param(
            "r",
            format!("rank must lie in 1..={}, got {r}", n1.min(n2)),
        ));
    }
    Ok(())
}

/// Trainable factors `V (n1 x k)` and `W (n2 x k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorPair {
    pub v: DMatrix<f64>,
    pub w: DMatrix<f64>,
}

impl FactorPair {
    pub fn new(v: DMatrix<f64>, w: DMatrix<f64>) -> Result<Self> {
        if v.ncols() != w.ncols() || v.ncols() == 0 {
            return Err(Error::InvalidDimension(format!(
                "factor widths must agree and be positive: V is {}x{}, W is {}x{}",
                v.nrows(),
                v.ncols(),
                w.nrows(),
                w.ncols()
            )));
        }
        Ok(Self { v, w })
    }

    pub fn k(&self) -> usize {
        self.v.ncols()
    }

    pub fn product(&self) -> DMatrix<f64> {
        &self.v * self.w.transpose()
    }

    /// `V^T V - W^T W`.
    pub fn imbalance(&self) -> DMatrix<f64> {
        self.v.tr_mul(&self.v) - self.w.tr_mul(&self.w)
    }

    pub fn is_finite(&self) -> bool {
        self.v.iter().chain(self.w.iter()).all(|x| x.is_finite())
    }
}

/// `V = alpha G_V`, `W = alpha G_W` with standard normal `G_V`, `G_W`
/// drawn in that order from one stream.
pub fn init_random(n1: usize, n2: usize, k: usize, alpha: f64, seed: u64) -> Result<FactorPair> {
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(Error::param(
            "alpha",
            format!("must be finite and >= 0, got {alpha}"),
        ));
    }
    if n1 == 0 || n2 == 0 || k == 0 {
        return Err(Error::InvalidDimension(format!(
            "factor dimensions must be positive, got n1={n1}, n2={n2}, k={k}"
        )));
    }
    let mut rng = rng_from_seed(seed);
    let v = gaussian_matrix(&mut rng, n1, k, 1.0) * alpha;
    let w = gaussian_matrix(&mut rng, n2, k, 1.0) * alpha;
    FactorPair::new(v, w)
}

/// `Z = (1/sqrt 2)[V; W]` and `Z~ = (1/sqrt 2)[V; -W]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedPair {
    pub z: DMatrix<f64>,
    pub z_tilde: DMatrix<f64>,
    pub n1: usize,
}

impl LiftedPair {
    /// Recovers `(V, W)` from `Z`; `Z~` is implied.
    pub fn unlift(&self) -> FactorPair {
        let s = std::f64::consts::SQRT_2;
        let n2 = self.z.nrows() - self.n1;
        FactorPair {
            v: self.z.rows(0, self.n1) * s,
            w: self.z.rows(self.n1, n2) * s,
        }
    }

    /// `Z~^T Z`, the imbalance in lifted coordinates.
    pub fn imbalance(&self) -> DMatrix<f64> {
        self.z_tilde.tr_mul(&self.z)
    }
}

pub fn lift(fp: &FactorPair) -> LiftedPair {
    let (n1, n2, k) = (fp.v.nrows(), fp.w.nrows(), fp.k());
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut z = DMatrix::zeros(n1 + n2, k);
    z.rows_mut(0, n1).copy_from(&(&fp.v * s));
    z.rows_mut(n1, n2).copy_from(&(&fp.w * s));
    let mut z_tilde = z.clone();
    z_tilde.rows_mut(n1, n2).neg_mut();
    LiftedPair { z, z_tilde, n1 }
}

/// `[[0, X], [X^T, 0]]`.
pub fn sym_embed(x: &DMatrix<f64>) -> DMatrix<f64> {
    let (n1, n2) = x.shape();
    let mut s = DMatrix::zeros(n1 + n2, n1 + n2);
    s.view_mut((0, n1), (n1, n2)).copy_from(x);
    s.view_mut((n1, 0), (n2, n1)).copy_from(&x.transpose());
    s
}
