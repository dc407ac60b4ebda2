//! Shared matrix types, dimension checks and the deterministic SVD
//! conventions every other module relies on.
//!
//! Matrices follow the variables-by-samples layout: a view with `p`
//! variables measured on `n` subjects is a `p x n` matrix.

use nalgebra::{DMatrix, DVector};
use ndarray::Array2;
use ndarray_linalg::{JobSvd, SVDDC};

use crate::error::{Error, Result};

/// A dense, finite `p x n` data matrix (rows are variables, columns samples).
#[derive(Debug, Clone, PartialEq)]
pub struct ViewMatrix {
    values: DMatrix<f64>,
}

impl ViewMatrix {
    /// Wraps `values`, rejecting non-finite entries, `p = 0` and `n < 2`.
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() == 0 {
            return Err(Error::NoVariables);
        }
        if values.ncols() < 2 {
            return Err(Error::TooFewSamples(values.ncols()));
        }
        check_finite(&values)?;
        Ok(Self { values })
    }

    /// Builds a view from row-major data.
    pub fn from_rows(p: usize, n: usize, data: &[f64]) -> Result<Self> {
        if data.len() != p * n {
            return Err(Error::DimensionMismatch(format!(
                "expected {} values for a {p} x {n} view, got {}",
                p * n,
                data.len()
            )));
        }
        Self::new(DMatrix::from_row_slice(p, n, data))
    }

    pub fn p(&self) -> usize {
        self.values.nrows()
    }

    pub fn n(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.values
    }
}

/// Signal ranks of the two views and the rank of their cross-covariance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RankTriple {
    pub r1: usize,
    pub r2: usize,
    pub rc: usize,
}

impl RankTriple {
    pub fn new(r1: usize, r2: usize, rc: usize) -> Result<Self> {
        if rc > r1.min(r2) {
            return Err(Error::InvalidRanks(format!(
                "rc = {rc} exceeds min(r1, r2) = {}",
                r1.min(r2)
            )));
        }
        Ok(Self { r1, r2, rc })
    }

    /// Checks `r_k <= min(p_k, n)` for a pair of views.
    pub fn check_dims(&self, dims: &PairDims) -> Result<()> {
        for (view, r, p) in [(1, self.r1, dims.p1), (2, self.r2, dims.p2)] {
            if r > p.min(dims.n) {
                return Err(Error::InvalidRanks(format!(
                    "r{view} = {r} exceeds min(p{view}, n) = {}",
                    p.min(dims.n)
                )));
            }
        }
        Ok(())
    }
}

/// Dimensions of a validated view pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairDims {
    pub p1: usize,
    pub p2: usize,
    pub n: usize,
}

/// Two views known to share the same samples.
#[derive(Debug, Clone)]
pub struct ViewPair {
    pub y1: ViewMatrix,
    pub y2: ViewMatrix,
    pub dims: PairDims,
}

/// Confirms both views are measured on the same `n >= 2` samples.
pub fn validate_view_pair(y1: ViewMatrix, y2: ViewMatrix) -> Result<ViewPair> {
    if y1.n() != y2.n() {
        return Err(Error::SampleCountMismatch {
            n1: y1.n(),
            n2: y2.n(),
        });
    }
    let dims = PairDims {
        p1: y1.p(),
        p2: y2.p(),
        n: y1.n(),
    };
    Ok(ViewPair { y1, y2, dims })
}

/// Truncated SVD `M ~ left * diag(singulars) * right^T`.
///
/// Singular values are non-increasing. In every left singular vector the
/// entry of largest magnitude is non-negative (lowest index wins ties) and
/// the matching right vector carries the same sign flip. Under repeated
/// singular values only the spanned subspaces are meaningful.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdFactors {
    pub left: DMatrix<f64>,
    pub singulars: DVector<f64>,
    pub right: DMatrix<f64>,
}

impl SvdFactors {
    pub fn rank(&self) -> usize {
        self.singulars.len()
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        let mut scaled = self.left.clone();
        for (j, s) in self.singulars.iter().enumerate() {
            scaled.column_mut(j).scale_mut(*s);
        }
        scaled * self.right.transpose()
    }
}

/// A thin SVD holding every singular value, with factors already put in
/// the sign convention.
#[derive(Debug, Clone)]
pub(crate) struct ThinSvd {
    pub left: DMatrix<f64>,
    pub singulars: DVector<f64>,
    pub right: DMatrix<f64>,
}

impl ThinSvd {
    pub fn compute(m: &DMatrix<f64>) -> Result<Self> {
        check_finite(m)?;
        let min_dim = m.nrows().min(m.ncols());
        if min_dim == 0 {
            return Ok(Self {
                left: DMatrix::zeros(m.nrows(), 0),
                singulars: DVector::zeros(0),
                right: DMatrix::zeros(m.ncols(), 0),
            });
        }
        let (mut left, mut singulars, mut right) = raw_svd(m).ok_or(Error::SvdFailed)?;
        sort_descending(&mut left, &mut singulars, &mut right);
        apply_sign_convention(&mut left, &mut right);
        Ok(Self {
            left,
            singulars,
            right,
        })
    }

    pub fn truncate(&self, k: usize) -> SvdFactors {
        SvdFactors {
            left: self.left.columns(0, k).into_owned(),
            singulars: self.singulars.rows(0, k).into_owned(),
            right: self.right.columns(0, k).into_owned(),
        }
    }
}

const SVD_RECONSTRUCTION_LIMIT: f64 = 1e-10;

// LAPACK divide and conquer; the result is verified because a wrong
// factorization would silently corrupt every later step
fn raw_svd(m: &DMatrix<f64>) -> Option<(DMatrix<f64>, DVector<f64>, DMatrix<f64>)> {
    let a = Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)]);
    let (u, s, vt) = a.svddc(JobSvd::Some).ok()?;
    let (u, vt) = (u?, vt?);
    let k = s.len();
    let left = DMatrix::from_fn(m.nrows(), k, |i, j| u[(i, j)]);
    let right = DMatrix::from_fn(m.ncols(), k, |i, j| vt[(j, i)]);
    let singulars = DVector::from_iterator(k, s.iter().copied());
    let mut scaled = left.clone();
    for (j, s) in singulars.iter().enumerate() {
        scaled.column_mut(j).scale_mut(*s);
    }
    let err = (scaled * right.transpose() - m).norm();
    let ok = err <= SVD_RECONSTRUCTION_LIMIT * m.norm().max(f64::MIN_POSITIVE)
        && (left.transpose() * &left - DMatrix::identity(k, k)).amax() < 1e-10
        && (right.transpose() * &right - DMatrix::identity(k, k)).amax() < 1e-10;
    ok.then_some((left, singulars, right))
}

/// Top-`k` singular triplets of `m` under the crate-wide sign convention.
pub fn compact_svd(m: &DMatrix<f64>, k: usize) -> Result<SvdFactors> {
    let min_dim = m.nrows().min(m.ncols());
    if k > min_dim {
        return Err(Error::DimensionMismatch(format!(
            "requested {k} singular triplets from a {} x {} matrix",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(ThinSvd::compute(m)?.truncate(k))
}

/// Full SVD `m = u * diag(s) * v^T` with square orthogonal `u` (rows x rows)
/// and `v` (cols x cols). Columns beyond `min(rows, cols)` complete each
/// basis and follow the same sign convention.
pub fn full_svd(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, DVector<f64>, DMatrix<f64>)> {
    let thin = ThinSvd::compute(m)?;
    let mut u = complete_orthonormal_basis(&thin.left);
    let mut v = complete_orthonormal_basis(&thin.right);
    let k = thin.singulars.len();
    for j in k..u.ncols() {
        if leading_entry_negative(u.column(j).iter()) {
            u.column_mut(j).neg_mut();
        }
    }
    for j in k..v.ncols() {
        if leading_entry_negative(v.column(j).iter()) {
            v.column_mut(j).neg_mut();
        }
    }
    Ok((u, thin.singulars, v))
}

/// Extends orthonormal columns `q` (m x k) to an m x m orthogonal matrix by
/// greedily adding the standard basis vector with the largest residual.
pub fn complete_orthonormal_basis(q: &DMatrix<f64>) -> DMatrix<f64> {
    let m = q.nrows();
    let mut basis: Vec<DVector<f64>> = q.column_iter().map(|c| c.into_owned()).collect();
    while basis.len() < m {
        let mut best: Option<(f64, DVector<f64>)> = None;
        for i in 0..m {
            let mut e = DVector::zeros(m);
            e[i] = 1.0;
            residualize(&mut e, &basis);
            let norm = e.norm();
            if best.as_ref().is_none_or(|(b, _)| norm > *b) {
                best = Some((norm, e));
            }
        }
        let (norm, e) = best.expect("m > 0 when basis is incomplete");
        basis.push(e / norm);
    }
    if basis.is_empty() {
        return DMatrix::zeros(m, m);
    }
    DMatrix::from_columns(&basis)
}

/// Removes from `v` its components along the orthonormal `basis` (two passes
/// of modified Gram-Schmidt).
pub(crate) fn residualize(v: &mut DVector<f64>, basis: &[DVector<f64>]) {
    for _ in 0..2 {
        for b in basis {
            let coef = b.dot(v);
            v.axpy(-coef, b, 1.0);
        }
    }
}

fn sort_descending(left: &mut DMatrix<f64>, singulars: &mut DVector<f64>, right: &mut DMatrix<f64>) {
    let mut order: Vec<usize> = (0..singulars.len()).collect();
    // stable sort keeps the routine's order under ties
    order.sort_by(|&a, &b| singulars[b].total_cmp(&singulars[a]));
    if order.iter().enumerate().all(|(i, &j)| i == j) {
        return;
    }
    let l = DMatrix::from_columns(&order.iter().map(|&j| left.column(j)).collect::<Vec<_>>());
    let r = DMatrix::from_columns(&order.iter().map(|&j| right.column(j)).collect::<Vec<_>>());
    let s = DVector::from_iterator(order.len(), order.iter().map(|&j| singulars[j]));
    *left = l;
    *right = r;
    *singulars = s;
}

fn leading_entry_negative<'a>(col: impl Iterator<Item = &'a f64>) -> bool {
    let mut best = 0.0_f64;
    let mut sign_negative = false;
    for &x in col {
        if x.abs() > best {
            best = x.abs();
            sign_negative = x < 0.0;
        }
    }
    sign_negative
}

pub(crate) fn apply_sign_convention(left: &mut DMatrix<f64>, right: &mut DMatrix<f64>) {
    for j in 0..left.ncols() {
        if leading_entry_negative(left.column(j).iter()) {
            left.column_mut(j).neg_mut();
            right.column_mut(j).neg_mut();
        }
    }
}

pub(crate) fn check_finite(m: &DMatrix<f64>) -> Result<()> {
    for col in 0..m.ncols() {
        for row in 0..m.nrows() {
            if !m[(row, col)].is_finite() {
                return Err(Error::NonFinite { row, col });
            }
        }
    }
    Ok(())
}

/// `(m + m^T) / 2`, which is bitwise symmetric.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// `a * diag(d) * a^T` for a column-scaled outer product.
pub fn weighted_gram(a: &DMatrix<f64>, d: &[f64]) -> DMatrix<f64> {
    let mut scaled = a.clone();
    for (j, w) in d.iter().enumerate() {
        scaled.column_mut(j).scale_mut(*w);
    }
    symmetrize(&(scaled * a.transpose()))
}

/// `||a - b||_F / ||b||_F`, or `||a||_F` when `b` is zero.
pub fn relative_frobenius_error(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let diff = (a - b).norm();
    let denom = b.norm();
    if denom > 0.0 {
        diff / denom
    } else {
        a.norm()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn orthonormality_error(q: &DMatrix<f64>) -> f64 {
        (q.transpose() * q - DMatrix::identity(q.ncols(), q.ncols())).amax()
    }

    #[test]
    fn identity_singulars_are_ones() {
        let svd = compact_svd(&DMatrix::identity(3, 3), 3).unwrap();
        assert_eq!(svd.singulars.as_slice(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn diagonal_top_direction() {
        let m = DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 1.0]);
        let svd = compact_svd(&m, 1).unwrap();
        assert!((svd.singulars[0] - 3.0).abs() < 1e-15);
        assert!((svd.left[(0, 0)] - 1.0).abs() < 1e-15);
        assert!(svd.left[(1, 0)].abs() < 1e-15);
        assert!((svd.right[(0, 0)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn sign_convention_flips_negative_leading_entries() {
        let m = DMatrix::from_row_slice(2, 2, &[-3.0, 0.0, 0.0, -1.0]);
        let svd = compact_svd(&m, 2).unwrap();
        assert!(svd.left[(0, 0)] > 0.0 && svd.left[(1, 1)] > 0.0);
        assert!(svd.right[(0, 0)] < 0.0 && svd.right[(1, 1)] < 0.0);
        assert!((svd.reconstruct() - m).amax() < 1e-14);
    }

    #[test]
    fn rejects_k_above_min_dim_and_nan() {
        let m = DMatrix::from_element(2, 3, 1.0);
        assert!(matches!(compact_svd(&m, 3), Err(Error::DimensionMismatch(_))));
        let mut bad = m.clone();
        bad[(1, 2)] = f64::NAN;
        assert!(matches!(
            compact_svd(&bad, 1),
            Err(Error::NonFinite { row: 1, col: 2 })
        ));
    }

    #[test]
    fn full_svd_is_orthogonal_for_wide_and_tall() {
        let tall = DMatrix::from_fn(4, 2, |i, j| ((i * 3 + j * 7) % 5) as f64 - 1.5);
        for m in [tall.clone(), tall.transpose()] {
            let (u, s, v) = full_svd(&m).unwrap();
            assert_eq!(u.ncols(), m.nrows());
            assert_eq!(v.ncols(), m.ncols());
            assert!(orthonormality_error(&u) < 1e-12);
            assert!(orthonormality_error(&v) < 1e-12);
            let mut sigma = DMatrix::zeros(m.nrows(), m.ncols());
            for (i, x) in s.iter().enumerate() {
                sigma[(i, i)] = *x;
            }
            assert!((&u * sigma * v.transpose() - &m).amax() < 1e-12);
        }
    }

    #[test]
    fn full_svd_of_zero_matrix_is_orthogonal() {
        let (u, s, v) = full_svd(&DMatrix::zeros(3, 2)).unwrap();
        assert!(s.iter().all(|x| *x == 0.0));
        assert!(orthonormality_error(&u) < 1e-12);
        assert!(orthonormality_error(&v) < 1e-12);
    }

    #[test]
    fn view_pair_checks() {
        let a = ViewMatrix::new(DMatrix::zeros(5, 10)).unwrap();
        let b = ViewMatrix::new(DMatrix::zeros(7, 10)).unwrap();
        let pair = validate_view_pair(a.clone(), b).unwrap();
        assert_eq!(pair.dims, PairDims { p1: 5, p2: 7, n: 10 });

        let c = ViewMatrix::new(DMatrix::zeros(7, 9)).unwrap();
        assert!(matches!(
            validate_view_pair(a, c),
            Err(Error::SampleCountMismatch { n1: 10, n2: 9 })
        ));

        let mut nan = DMatrix::zeros(5, 10);
        nan[(3, 4)] = f64::NAN;
        assert!(matches!(
            ViewMatrix::new(nan),
            Err(Error::NonFinite { row: 3, col: 4 })
        ));
        assert!(matches!(
            ViewMatrix::new(DMatrix::zeros(3, 1)),
            Err(Error::TooFewSamples(1))
        ));
    }

    #[test]
    fn rank_triple_bounds() {
        assert!(RankTriple::new(3, 3, 2).is_ok());
        assert!(RankTriple::new(1, 3, 2).is_err());
        let dims = PairDims { p1: 2, p2: 10, n: 10 };
        assert!(RankTriple::new(3, 3, 1).unwrap().check_dims(&dims).is_err());
    }

    #[test]
    fn rank_one_wide_matrix_reconstructs() {
        let row: Vec<f64> = (0..8).map(|j| if j < 4 { 1.0 } else { -1.0 }).collect();
        let m = DMatrix::from_fn(2, 8, |_, j| row[j]);
        let f = compact_svd(&m, 2).unwrap();
        assert!((f.singulars[0] - 4.0).abs() < 1e-12);
        assert!(f.singulars[1].abs() < 1e-12);
        assert!((f.reconstruct() - &m).amax() < 1e-12);
    }
}
