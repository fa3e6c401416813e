//! Gaussian linear measurement operators.
//!
//! An empirical operator holds `m` dense matrices `A_i` of shape `n1 x n2`
//! and maps `M` to the vector of Frobenius inner products `<A_i, M>`. A
//! population operator stands for the idealised case where the composed map
//! `A* A` is the identity; it has no matrices, and only [`normal_map`] is
//! defined on it.
//!
//! [`normal_map`]: SensingOperator::normal_map

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot};
use crate::rng::{fill_gaussian, gaussian_matrix, rng_from_seed};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorMode {
    Empirical,
    Population,
}

/// Storage precision of the measurement entries. Arithmetic is always done
/// in `f64`; single-precision entries are widened on load.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    Single,
    Double,
}

#[derive(Debug, Clone)]
enum Entries {
    Single(Vec<f32>),
    Double(Vec<f64>),
}

/// Dense measurement operator. Immutable after construction.
#[derive(Debug, Clone)]
pub struct SensingOperator {
    n1: usize,
    n2: usize,
    m: usize,
    mode: OperatorMode,
    /// `m` consecutive blocks of `n1 * n2` entries, each block column-major.
    data: Entries,
}

/// Lower bound on the restricted isometry constant obtained by probing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RipEstimate {
    pub order: usize,
    /// Max observed `| ||A(M)||^2 - ||M||_F^2 | / ||M||_F^2`. A lower bound.
    pub delta_lower: f64,
    pub trials: usize,
    pub seed: u64,
}

// Runs `$body` with `$d` bound to the entry slice, whatever its precision.
macro_rules! with_entries {
    ($self:expr, $d:ident => $body:expr) => {
        match &$self.data {
            Entries::Single($d) => $body,
            Entries::Double($d) => $body,
        }
    };
}

fn block<T>(data: &[T], len: usize, i: usize) -> &[T] {
    &data[i * len..(i + 1) * len]
}

fn apply_kernel<T: Copy + Into<f64>>(data: &[T], len: usize, m: usize, x: &[f64]) -> DVector<f64> {
    DVector::from_iterator(m, (0..m).map(|i| dot(block(data, len, i), x)))
}

fn adjoint_kernel<T: Copy + Into<f64>>(data: &[T], len: usize, y: &[f64], acc: &mut [f64]) {
    for (i, &yi) in y.iter().enumerate() {
        axpy(yi, block(data, len, i), acc);
    }
}

/// Measurements handled per sweep of the fused kernel. Sharing one read of
/// `x` and one read-modify-write of the accumulator across several `A_i`
/// keeps the loop bound by the stream of operator entries.
const GROUP: usize = 8;
const LANES: usize = 4;

#[inline(always)]
fn madd<const FMA: bool>(a: f64, b: f64, c: f64) -> f64 {
    if FMA {
        a.mul_add(b, c)
    } else {
        a * b + c
    }
}

#[inline(always)]
fn fused_group<T: Copy + Into<f64>, const G: usize, const FMA: bool>(
    blocks: [&[T]; G],
    x: &[f64],
    y: &[f64],
    res: &mut [f64],
    acc: &mut [f64],
) {
    let len = x.len();
    let body = len - len % LANES;
    let mut lanes = [[0.0f64; LANES]; G];
    for j in (0..body).step_by(LANES) {
        for g in 0..G {
            for l in 0..LANES {
                lanes[g][l] = madd::<FMA>(blocks[g][j + l].into(), x[j + l], lanes[g][l]);
            }
        }
    }
    let mut r = [0.0f64; G];
    for g in 0..G {
        let d = &lanes[g];
        let mut s = (d[0] + d[1]) + (d[2] + d[3]);
        for j in body..len {
            s = madd::<FMA>(blocks[g][j].into(), x[j], s);
        }
        r[g] = s - y[g];
        res[g] = r[g];
    }
    for (j, out) in acc.iter_mut().enumerate() {
        let mut v = *out;
        for g in 0..G {
            v = madd::<FMA>(r[g], blocks[g][j].into(), v);
        }
        *out = v;
    }
}

#[inline(always)]
fn fused_generic<T: Copy + Into<f64>, const FMA: bool>(
    data: &[T],
    len: usize,
    x: &[f64],
    y: &[f64],
    res: &mut [f64],
    acc: &mut [f64],
) {
    let m = y.len();
    let full = m - m % GROUP;
    for i in (0..full).step_by(GROUP) {
        let blocks: [&[T]; GROUP] = std::array::from_fn(|g| block(data, len, i + g));
        fused_group::<T, GROUP, FMA>(blocks, x, &y[i..i + GROUP], &mut res[i..i + GROUP], acc);
    }
    for i in full..m {
        fused_group::<T, 1, FMA>([block(data, len, i)], x, &y[i..=i], &mut res[i..=i], acc);
    }
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2,fma")]
unsafe fn fused_avx2<T: Copy + Into<f64>>(
    data: &[T],
    len: usize,
    x: &[f64],
    y: &[f64],
    res: &mut [f64],
    acc: &mut [f64],
) {
    fused_generic::<T, true>(data, len, x, y, res, acc)
}

/// `res_i = <A_i, x> - y_i` and `acc += sum_i res_i A_i` in one pass.
///
/// Uses AVX2/FMA when the CPU has them. The reduction order is fixed by the
/// shapes alone, so results are reproducible on a given machine.
fn fused_kernel<T: Copy + Into<f64>>(
    data: &[T],
    len: usize,
    x: &[f64],
    y: &[f64],
    res: &mut [f64],
    acc: &mut [f64],
) {
    #[cfg(target_arch = "x86_64")]
    {
        if std::arch::is_x86_feature_detected!("avx2") && std::arch::is_x86_feature_detected!("fma")
        {
            // SAFETY: the required CPU features were just detected.
            return unsafe { fused_avx2(data, len, x, y, res, acc) };
        }
    }
    fused_generic::<T, false>(data, len, x, y, res, acc)
}

impl SensingOperator {
    /// Operator with i.i.d. `N(0, 1/m)` entries, drawn matrix by matrix and
    /// stored in single precision.
    ///
    /// The rounded entries define the operator exactly; everything downstream
    /// is computed in `f64` from them. Single storage halves the memory
    /// traffic of a gradient step, which is bandwidth bound.
    pub fn gaussian(n1: usize, n2: usize, m: usize, seed: u64) -> Result<Self> {
        Self::gaussian_with(n1, n2, m, seed, Precision::Single)
    }

    /// Same draws as [`gaussian`](Self::gaussian) with a chosen storage precision.
    pub fn gaussian_with(
        n1: usize,
        n2: usize,
        m: usize,
        seed: u64,
        precision: Precision,
    ) -> Result<Self> {
        check_dims(n1, n2)?;
        if m == 0 {
            return Err(Error::InvalidDimension(
                "operator needs at least one measurement".into(),
            ));
        }
        let mut rng = rng_from_seed(seed);
        let mut draws = vec![0.0; m * n1 * n2];
        fill_gaussian(&mut rng, &mut draws, (1.0 / m as f64).sqrt());
        let data = match precision {
            Precision::Double => Entries::Double(draws),
            Precision::Single => Entries::Single(draws.into_iter().map(|v| v as f32).collect()),
        };
        Ok(Self {
            n1,
            n2,
            m,
            mode: OperatorMode::Empirical,
            data,
        })
    }

    pub fn population(n1: usize, n2: usize) -> Result<Self> {
        check_dims(n1, n2)?;
        Ok(Self {
            n1,
            n2,
            m: 0,
            mode: OperatorMode::Population,
            data: Entries::Double(Vec::new()),
        })
    }

    /// Empirical operator from explicit measurement matrices, kept in double precision.
    pub fn from_matrices(matrices: &[DMatrix<f64>]) -> Result<Self> {
        let first = matrices.first().ok_or_else(|| {
            Error::InvalidDimension("operator needs at least one measurement".into())
        })?;
        let (n1, n2) = first.shape();
        check_dims(n1, n2)?;
        let mut data = Vec::with_capacity(matrices.len() * n1 * n2);
        for a in matrices {
            if a.shape() != (n1, n2) {
                return Err(Error::shape("from_matrices", (n1, n2), a.shape()));
            }
            data.extend_from_slice(a.as_slice());
        }
        Ok(Self {
            n1,
            n2,
            m: matrices.len(),
            mode: OperatorMode::Empirical,
            data: Entries::Double(data),
        })
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    pub fn n2(&self) -> usize {
        self.n2
    }

    /// Number of measurements; zero in population mode.
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn mode(&self) -> OperatorMode {
        self.mode
    }

    pub fn is_population(&self) -> bool {
        self.mode == OperatorMode::Population
    }

    pub fn precision(&self) -> Precision {
        match self.data {
            Entries::Single(_) => Precision::Single,
            Entries::Double(_) => Precision::Double,
        }
    }

    fn block_len(&self) -> usize {
        self.n1 * self.n2
    }

    /// The `i`-th measurement matrix, if the operator is empirical.
    // The widening is a no-op for the f64 arm of the macro.
    #[allow(clippy::useless_conversion)]
    pub fn matrix(&self, i: usize) -> Option<DMatrix<f64>> {
        let len = self.block_len();
        (i < self.m).then(|| {
            with_entries!(self, d => DMatrix::from_iterator(self.n1, self.n2, block(d, len, i).iter().map(|&v| v.into())))
        })
    }

    /// All measurement entries widened to `f64`: `m` column-major `n1 x n2` blocks.
    // The widening is a no-op for the f64 arm of the macro.
    #[allow(clippy::useless_conversion)]
    pub fn entries(&self) -> Vec<f64> {
        with_entries!(self, d => d.iter().map(|&v| v.into()).collect())
    }

    fn require_empirical(&self, what: &'static str) -> Result<()> {
        if self.is_population() {
            Err(Error::PopulationMode(what))
        } else {
            Ok(())
        }
    }

    fn check_matrix(&self, context: &'static str, mat: &DMatrix<f64>) -> Result<()> {
        if mat.shape() != (self.n1, self.n2) {
            return Err(Error::shape(context, (self.n1, self.n2), mat.shape()));
        }
        Ok(())
    }

    /// `y_i = <A_i, M>`.
    pub fn apply(&self, mat: &DMatrix<f64>) -> Result<DVector<f64>> {
        self.require_empirical("apply")?;
        self.check_matrix("apply", mat)?;
        let len = self.block_len();
        Ok(with_entries!(self, d => apply_kernel(d, len, self.m, mat.as_slice())))
    }

    /// `sum_i y_i A_i`.
    pub fn adjoint(&self, y: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.require_empirical("adjoint")?;
        if y.len() != self.m {
            return Err(Error::shape("adjoint", (self.m, 1), (y.len(), 1)));
        }
        let mut out = DMatrix::zeros(self.n1, self.n2);
        let len = self.block_len();
        with_entries!(self, d => adjoint_kernel(d, len, y.as_slice(), out.as_mut_slice()));
        Ok(out)
    }

    /// `A* A (M)`; the identity in population mode.
    pub fn normal_map(&self, mat: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_matrix("normal_map", mat)?;
        if self.is_population() {
            return Ok(mat.clone());
        }
        let zeros = DVector::zeros(self.m);
        Ok(self.residual_and_backprojection(mat, &zeros).1)
    }

    /// Fused single pass over the measurement matrices: returns the residual
    /// `r = A(P) - y` and the back-projection `A*(r)`.
    ///
    /// Each `A_i` is read once; the back-projection is accumulated in index
    /// order so the result is independent of threading.
    pub(crate) fn residual_and_backprojection(
        &self,
        prediction: &DMatrix<f64>,
        y: &DVector<f64>,
    ) -> (DVector<f64>, DMatrix<f64>) {
        debug_assert!(!self.is_population());
        debug_assert_eq!(prediction.shape(), (self.n1, self.n2));
        debug_assert_eq!(y.len(), self.m);
        let mut residual = DVector::zeros(self.m);
        let mut back = DMatrix::zeros(self.n1, self.n2);
        let len = self.block_len();
        with_entries!(self, d => fused_kernel(
            d,
            len,
            prediction.as_slice(),
            y.as_slice(),
            residual.as_mut_slice(),
            back.as_mut_slice(),
        ));
        (residual, back)
    }

    /// `(B(S))_i = <B_i, S>` with `B_i = (1/sqrt 2) [[0, A_i], [A_i^T, 0]]`,
    /// evaluated from the off-diagonal blocks of `S` without forming `B_i`.
    pub fn symmetrized_apply(&self, s: &DMatrix<f64>) -> Result<DVector<f64>> {
        self.require_empirical("symmetrized_apply")?;
        let n = self.n1 + self.n2;
        if s.shape() != (n, n) {
            return Err(Error::shape("symmetrized_apply", (n, n), s.shape()));
        }
        let asym = (s - s.transpose()).amax();
        if asym > 1e-10 * s.amax().max(1.0) {
            return Err(Error::NotSymmetric(asym));
        }
        let upper = s.view((0, self.n1), (self.n1, self.n2)).into_owned();
        let lower_t = s.view((self.n1, 0), (self.n2, self.n1)).transpose();
        let both = upper + lower_t;
        let mut out = self.apply(&both)?;
        out *= std::f64::consts::FRAC_1_SQRT_2;
        Ok(out)
    }

    /// Probes random rank-`order` matrices and reports the worst observed
    /// relative distortion of the squared norm.
    pub fn estimate_rip_constant(
        &self,
        order: usize,
        trials: usize,
        seed: u64,
    ) -> Result<RipEstimate> {
        if order == 0 || order > self.n1.min(self.n2) {
            return Err(Error::param(
                "order",
                format!("must lie in 1..={}, got {order}", self.n1.min(self.n2)),
            ));
        }
        if trials == 0 {
            return Err(Error::param("trials", "must be at least 1"));
        }
        let mut delta_lower = 0.0f64;
        if !self.is_population() {
            let mut rng = rng_from_seed(seed);
            for _ in 0..trials {
                let left = gaussian_matrix(&mut rng, self.n1, order, 1.0);
                let right = gaussian_matrix(&mut rng, self.n2, order, 1.0);
                let mut probe = left * right.transpose();
                let norm = probe.norm();
                probe /= norm;
                let measured = self.apply(&probe)?.norm_squared();
                delta_lower = delta_lower.max((measured - 1.0).abs());
            }
        }
        Ok(RipEstimate {
            order,
            delta_lower,
            trials,
            seed,
        })
    }
}

fn check_dims(n1: usize, n2: usize) -> Result<()> {
    if n1 == 0 || n2 == 0 {
        return Err(Error::InvalidDimension(format!(
            "matrix dimensions must be positive, got {n1}x{n2}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::frob_inner;
    use crate::model::sym_embed;
    use crate::rng::{gaussian_matrix, rng_from_seed};

    fn small_op() -> SensingOperator {
        SensingOperator::gaussian(7, 5, 40, 11).unwrap()
    }

    #[test]
    fn gaussian_entries_have_variance_one_over_m() {
        let op = SensingOperator::gaussian(100, 50, 2000, 7).unwrap();
        assert_eq!(op.precision(), Precision::Single);
        let xs = op.entries();
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let ratio = var * 2000.0;
        assert!((0.9..=1.1).contains(&ratio), "variance ratio {ratio}");
    }

    #[test]
    fn degenerate_dimensions() {
        let op = SensingOperator::gaussian(1, 1, 1, 0).unwrap();
        assert_eq!(op.m(), 1);
        assert_eq!(op.matrix(0).unwrap().shape(), (1, 1));
    }

    #[test]
    fn empty_operators_rejected() {
        assert!(SensingOperator::gaussian(100, 50, 0, 0).is_err());
        assert!(SensingOperator::gaussian(0, 50, 10, 0).is_err());
        assert!(SensingOperator::population(100, 0).is_err());
    }

    #[test]
    fn population_disallows_raw_maps() {
        let op = SensingOperator::population(100, 50).unwrap();
        assert_eq!(op.mode(), OperatorMode::Population);
        let m = DMatrix::from_element(100, 50, 0.5);
        assert!(matches!(op.apply(&m), Err(Error::PopulationMode(_))));
        assert!(op.adjoint(&DVector::zeros(0)).is_err());
        assert_eq!(op.normal_map(&m).unwrap(), m);
    }

    #[test]
    fn apply_linearity_and_zero() {
        let op = small_op();
        let mut rng = rng_from_seed(1);
        let m = gaussian_matrix(&mut rng, 7, 5, 1.0);
        let n = gaussian_matrix(&mut rng, 7, 5, 1.0);
        assert_eq!(op.apply(&DMatrix::zeros(7, 5)).unwrap().amax(), 0.0);
        let twice = op.apply(&(&m * 2.0)).unwrap();
        assert!((twice - op.apply(&m).unwrap() * 2.0).amax() < 1e-12);
        let sum = op.apply(&(&m + &n)).unwrap();
        let parts = op.apply(&m).unwrap() + op.apply(&n).unwrap();
        assert!((sum - parts).amax() < 1e-12);
    }

    #[test]
    fn basis_probe() {
        let mut e11 = DMatrix::zeros(3, 2);
        e11[(0, 0)] = 1.0;
        let op = SensingOperator::from_matrices(&[e11.clone()]).unwrap();
        let m = DMatrix::from_fn(3, 2, |i, j| (i * 2 + j) as f64 + 1.5);
        assert_eq!(op.apply(&m).unwrap()[0], 1.5);
        let c = -2.25;
        assert_eq!(op.adjoint(&DVector::from_element(1, c)).unwrap(), e11 * c);
    }

    #[test]
    fn adjoint_zero_and_length_check() {
        let op = small_op();
        assert_eq!(op.adjoint(&DVector::zeros(40)).unwrap().amax(), 0.0);
        assert!(matches!(
            op.adjoint(&DVector::zeros(3)),
            Err(Error::ShapeMismatch { .. })
        ));
        assert!(op.apply(&DMatrix::zeros(5, 7)).is_err());
    }

    #[test]
    fn adjointness_identity() {
        let op = SensingOperator::gaussian(12, 9, 60, 5).unwrap();
        let mut rng = rng_from_seed(2);
        for _ in 0..100 {
            let m = gaussian_matrix(&mut rng, 12, 9, 1.0);
            let y = DVector::from_column_slice(gaussian_matrix(&mut rng, 60, 1, 1.0).as_slice());
            let lhs = op.apply(&m).unwrap().dot(&y);
            let rhs = frob_inner(&m, &op.adjoint(&y).unwrap());
            assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + rhs.abs()));
        }
    }

    #[test]
    fn fused_pass_matches_separate_maps() {
        let op = small_op();
        let mut rng = rng_from_seed(3);
        let p = gaussian_matrix(&mut rng, 7, 5, 1.0);
        let y = op.apply(&gaussian_matrix(&mut rng, 7, 5, 1.0)).unwrap();
        let (r, back) = op.residual_and_backprojection(&p, &y);
        let r_ref = op.apply(&p).unwrap() - &y;
        assert!((&r - &r_ref).amax() < 1e-13);
        assert!((back - op.adjoint(&r_ref).unwrap()).amax() < 1e-13);
    }

    #[test]
    fn grouped_kernel_paths_agree() {
        // 19 measurements: two full groups plus a tail; 7 * 5 entries: lane tail too.
        for precision in [Precision::Single, Precision::Double] {
            let op = SensingOperator::gaussian_with(7, 5, 19, 8, precision).unwrap();
            let mut rng = rng_from_seed(5);
            let p = gaussian_matrix(&mut rng, 7, 5, 1.0);
            let y = DVector::from_column_slice(gaussian_matrix(&mut rng, 19, 1, 1.0).as_slice());
            let (r, back) = op.residual_and_backprojection(&p, &y);
            let data = op.entries();
            let (mut r2, mut back2) = (vec![0.0; 19], vec![0.0; 35]);
            fused_generic::<f64, false>(&data, 35, p.as_slice(), y.as_slice(), &mut r2, &mut back2);
            assert!(r.iter().zip(&r2).all(|(a, b)| (a - b).abs() < 1e-13));
            assert!(back.iter().zip(&back2).all(|(a, b)| (a - b).abs() < 1e-13));
        }
    }

    #[test]
    fn symmetrized_apply_matches_plain_apply() {
        let op = small_op();
        let mut rng = rng_from_seed(4);
        let x = gaussian_matrix(&mut rng, 7, 5, 1.0);
        let b = op.symmetrized_apply(&sym_embed(&x)).unwrap() * std::f64::consts::FRAC_1_SQRT_2;
        let a = op.apply(&x).unwrap();
        assert!((b - &a).amax() <= 1e-12 * a.amax().max(1.0));
    }

    #[test]
    fn symmetrized_apply_zero_on_block_diagonal() {
        let op = small_op();
        assert_eq!(
            op.symmetrized_apply(&DMatrix::zeros(12, 12))
                .unwrap()
                .amax(),
            0.0
        );
        let mut rng = rng_from_seed(5);
        let mut s = DMatrix::zeros(12, 12);
        let d1 = gaussian_matrix(&mut rng, 7, 7, 1.0);
        let d2 = gaussian_matrix(&mut rng, 5, 5, 1.0);
        s.view_mut((0, 0), (7, 7))
            .copy_from(&(&d1 + d1.transpose()));
        s.view_mut((7, 7), (5, 5))
            .copy_from(&(&d2 + d2.transpose()));
        assert_eq!(op.symmetrized_apply(&s).unwrap().amax(), 0.0);
    }

    #[test]
    fn symmetrized_apply_rejects_asymmetric() {
        let op = small_op();
        let mut s = DMatrix::zeros(12, 12);
        s[(0, 8)] = 1.0;
        assert!(matches!(
            op.symmetrized_apply(&s),
            Err(Error::NotSymmetric(_))
        ));
        assert!(op.symmetrized_apply(&DMatrix::zeros(11, 11)).is_err());
    }

    #[test]
    fn rip_probe_population_is_zero() {
        let op = SensingOperator::population(10, 8).unwrap();
        let est = op.estimate_rip_constant(3, 10, 0).unwrap();
        assert_eq!(est.delta_lower, 0.0);
    }

    #[test]
    fn rip_probe_rejects_large_order() {
        let op = small_op();
        assert!(op.estimate_rip_constant(6, 10, 0).is_err());
        assert!(op.estimate_rip_constant(2, 0, 0).is_err());
    }

    #[test]
    fn deterministic_construction() {
        let a = SensingOperator::gaussian(6, 4, 9, 123).unwrap();
        let b = SensingOperator::gaussian(6, 4, 9, 123).unwrap();
        assert_eq!(a.entries(), b.entries());
        let c = SensingOperator::gaussian(6, 4, 9, 124).unwrap();
        assert_ne!(a.entries(), c.entries());
    }
}
