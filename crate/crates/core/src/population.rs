//! Exact distribution-level decomposition from known covariance blocks.
//!
//! Nothing here is sampled: canonical correlations and coefficient matrices
//! come straight from `Sigma_1`, `Sigma_2` and `Sigma_12`, and the
//! orthogonality report is computed in the coordinates of the canonical
//! variables, where every covariance is known in closed form.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::decompose::{cov_common, cov_distinct, pair_weights, RHO_ZERO_CUTOFF};
use crate::denoise::CovEstimate;
use crate::error::{Error, Result};
use crate::linalg::{check_finite, full_svd, symmetrize, weighted_gram};
use crate::pve::{pve_from_covs, PveTable};

/// Eigenvalues below this fraction of the largest count as zero when
/// reading off a signal rank.
pub const RANK_RELATIVE_CUTOFF: f64 = 1e-10;

/// Joint second-moment structure of two signal vectors.
#[derive(Debug, Clone)]
pub struct PopulationModel {
    pub sigma1: DMatrix<f64>,
    pub sigma2: DMatrix<f64>,
    pub sigma12: DMatrix<f64>,
}

impl PopulationModel {
    /// Symmetrizes the diagonal blocks and checks that the joint block
    /// matrix is positive semi-definite.
    pub fn new(sigma1: DMatrix<f64>, sigma2: DMatrix<f64>, sigma12: DMatrix<f64>) -> Result<Self> {
        let (p1, p2) = (sigma1.nrows(), sigma2.nrows());
        if !sigma1.is_square() || !sigma2.is_square() || sigma12.shape() != (p1, p2) {
            return Err(Error::InvalidModel(format!(
                "blocks have shapes {:?}, {:?}, {:?}",
                sigma1.shape(),
                sigma2.shape(),
                sigma12.shape()
            )));
        }
        if p1 == 0 || p2 == 0 {
            return Err(Error::InvalidModel("empty covariance block".into()));
        }
        for m in [&sigma1, &sigma2, &sigma12] {
            check_finite(m).map_err(|e| Error::InvalidModel(e.to_string()))?;
        }
        let sigma1 = symmetrize(&sigma1);
        let sigma2 = symmetrize(&sigma2);
        let mut joint = DMatrix::zeros(p1 + p2, p1 + p2);
        joint.view_mut((0, 0), (p1, p1)).copy_from(&sigma1);
        joint.view_mut((p1, p1), (p2, p2)).copy_from(&sigma2);
        joint.view_mut((0, p1), (p1, p2)).copy_from(&sigma12);
        joint.view_mut((p1, 0), (p2, p1)).copy_from(&sigma12.transpose());
        let eig = SymmetricEigen::new(joint).eigenvalues;
        let max = eig.iter().copied().fold(0.0, f64::max);
        let min = eig.iter().copied().fold(f64::INFINITY, f64::min);
        if min < -1e-8 * max.max(f64::MIN_POSITIVE) {
            return Err(Error::InvalidModel(format!(
                "joint covariance is not positive semi-definite (min eigenvalue {min:.3e}, max {max:.3e})"
            )));
        }
        Ok(Self {
            sigma1,
            sigma2,
            sigma12,
        })
    }

    pub fn p1(&self) -> usize {
        self.sigma1.nrows()
    }

    pub fn p2(&self) -> usize {
        self.sigma2.nrows()
    }
}

/// Top eigenpairs (descending) of a symmetric PSD matrix down to its
/// numerical rank, with the leading entry of each eigenvector non-negative.
fn spectral_factor(sigma: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let eig = SymmetricEigen::new(sigma.clone());
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let top = order.first().map(|&i| eig.eigenvalues[i]).unwrap_or(0.0).max(0.0);
    let kept: Vec<usize> = order
        .into_iter()
        .filter(|&i| eig.eigenvalues[i] > RANK_RELATIVE_CUTOFF * top && eig.eigenvalues[i] > 0.0)
        .collect();
    let mut vectors = DMatrix::zeros(sigma.nrows(), kept.len());
    for (j, &i) in kept.iter().enumerate() {
        let mut v = eig.eigenvectors.column(i).into_owned();
        let lead = v.iter().copied().fold(0.0_f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
        if lead < 0.0 {
            v.neg_mut();
        }
        vectors.set_column(j, &v);
    }
    let values = DVector::from_iterator(kept.len(), kept.iter().map(|&i| eig.eigenvalues[i]));
    (vectors, values)
}

/// Population canonical correlation analysis.
#[derive(Debug, Clone)]
pub struct PopulationCca {
    /// Canonical correlations, length `min(r1, r2)`.
    pub rho: DVector<f64>,
    /// Number of canonical correlations above [`RHO_ZERO_CUTOFF`].
    pub rc: usize,
    pub v1: DMatrix<f64>,
    pub lambda1: DVector<f64>,
    pub v2: DMatrix<f64>,
    pub lambda2: DVector<f64>,
    pub u_theta1: DMatrix<f64>,
    pub u_theta2: DMatrix<f64>,
}

impl PopulationCca {
    pub fn r1(&self) -> usize {
        self.lambda1.len()
    }

    pub fn r2(&self) -> usize {
        self.lambda2.len()
    }

    /// `B_k = V_k Lambda_k^{1/2} U_theta_k`.
    pub fn coefficients(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let make = |v: &DMatrix<f64>, lambda: &DVector<f64>, u: &DMatrix<f64>| {
            let mut scaled = v.clone();
            for (j, l) in lambda.iter().enumerate() {
                scaled.column_mut(j).scale_mut(l.sqrt());
            }
            scaled * u
        };
        (
            make(&self.v1, &self.lambda1, &self.u_theta1),
            make(&self.v2, &self.lambda2, &self.u_theta2),
        )
    }

    /// Applies the orthogonal `q` to columns `start..start + q.ncols()` of
    /// both `U_theta` factors. Within a block of equal correlations this
    /// yields another valid set of canonical variables.
    pub fn rotate_block(&self, start: usize, q: &DMatrix<f64>) -> Result<Self> {
        let len = q.ncols();
        if !q.is_square() || start + len > self.rho.len() {
            return Err(Error::DimensionMismatch(format!(
                "rotation of size {:?} at column {start} does not fit {} canonical pairs",
                q.shape(),
                self.rho.len()
            )));
        }
        let mut out = self.clone();
        let r1 = self.u_theta1.columns(start, len) * q;
        let r2 = self.u_theta2.columns(start, len) * q;
        out.u_theta1.columns_mut(start, len).copy_from(&r1);
        out.u_theta2.columns_mut(start, len).copy_from(&r2);
        Ok(out)
    }

    /// `(cov(c_1), cov(c_2))` from the current canonical basis.
    pub fn common_covariances(&self) -> Result<(CovEstimate, CovEstimate)> {
        let (b1, b2) = self.coefficients();
        Ok((cov_common(&b1, &self.rho, self.rc)?, cov_common(&b2, &self.rho, self.rc)?))
    }
}

pub fn population_cca(model: &PopulationModel) -> Result<PopulationCca> {
    let (v1, lambda1) = spectral_factor(&model.sigma1);
    let (v2, lambda2) = spectral_factor(&model.sigma2);
    if lambda1.is_empty() || lambda2.is_empty() {
        return Err(Error::InvalidModel(format!(
            "inconsistent ranks: r1 = {}, r2 = {}",
            lambda1.len(),
            lambda2.len()
        )));
    }
    let mut theta = v1.transpose() * &model.sigma12 * &v2;
    for (i, l) in lambda1.iter().enumerate() {
        theta.row_mut(i).scale_mut(1.0 / l.sqrt());
    }
    for (j, l) in lambda2.iter().enumerate() {
        theta.column_mut(j).scale_mut(1.0 / l.sqrt());
    }
    let (u_theta1, singulars, u_theta2) = full_svd(&theta)?;
    if let Some(top) = singulars.iter().next() {
        if *top > 1.0 + 1e-8 {
            return Err(Error::InvalidModel(format!(
                "inconsistent ranks: canonical correlation {top:.6} exceeds 1"
            )));
        }
    }
    let rho = singulars.map(|s| s.clamp(0.0, 1.0));
    let rc = rho.iter().filter(|r| **r >= RHO_ZERO_CUTOFF).count();
    let cca = PopulationCca {
        rho,
        rc,
        v1,
        lambda1,
        v2,
        lambda2,
        u_theta1,
        u_theta2,
    };
    let (b1, b2) = cca.coefficients();
    for (b, sigma) in [(&b1, &model.sigma1), (&b2, &model.sigma2)] {
        let gap = (b * b.transpose() - sigma).norm() / sigma.norm().max(f64::MIN_POSITIVE);
        if gap > 1e-8 {
            return Err(Error::Numerical(format!(
                "population: coefficients do not reproduce the view covariance (relative gap {gap:.3e})"
            )));
        }
    }
    Ok(cca)
}

#[derive(Debug, Clone)]
pub struct PopulationDecomposition {
    pub cca: PopulationCca,
    pub cov_c1: CovEstimate,
    pub cov_c2: CovEstimate,
    pub cov_d1: CovEstimate,
    pub cov_d2: CovEstimate,
    pub pve1: PveTable,
    pub pve2: PveTable,
}

pub fn population_decomposition(model: &PopulationModel) -> Result<PopulationDecomposition> {
    let cca = population_cca(model)?;
    let (cov_c1, cov_c2) = cca.common_covariances()?;
    let cov_x1 = CovEstimate::new(model.sigma1.clone(), cca.r1());
    let cov_x2 = CovEstimate::new(model.sigma2.clone(), cca.r2());
    let (cov_d1, _) = cov_distinct(&cov_x1, &cov_c1)?;
    let (cov_d2, _) = cov_distinct(&cov_x2, &cov_c2)?;
    let pve1 = pve_from_covs(&cov_x1, &cov_c1, &cov_d1)?;
    let pve2 = pve_from_covs(&cov_x2, &cov_c2, &cov_d2)?;
    Ok(PopulationDecomposition {
        cca,
        cov_c1,
        cov_c2,
        cov_d1,
        cov_d2,
        pve1,
        pve2,
    })
}

/// Closed-form check of the pairwise decomposition's orthogonality.
#[derive(Debug, Clone, PartialEq)]
pub struct TriOrthogonalityReport {
    pub rho: Vec<f64>,
    pub rc: usize,
    /// `var(c^(l))` for `l < rc`.
    pub var_c: Vec<f64>,
    /// `var(d_k^(l))` for `l < r_k`.
    pub var_d1: Vec<f64>,
    pub var_d2: Vec<f64>,
    /// Largest `|cov|` between two distinct factors among all common and
    /// distinctive factors of both views.
    pub max_cross_covariance: f64,
    /// Largest deviation of `var(c)` from `rho` and `var(d_k)` from `1 - rho`.
    pub max_variance_error: f64,
}

impl TriOrthogonalityReport {
    pub fn holds(&self, tol: f64) -> bool {
        self.max_cross_covariance <= tol && self.max_variance_error <= tol
    }
}

/// Expresses every factor in the basis `(z_1, z_2, z_aux)` whose Gram
/// matrix is `[[I, Lambda_theta, 0], [Lambda_theta^T, I, 0], [0, 0, I]]`
/// and evaluates all covariances exactly.
pub fn verify_tri_orthogonality(model: &PopulationModel) -> Result<TriOrthogonalityReport> {
    let cca = population_cca(model)?;
    tri_orthogonality_from_correlations(cca.r1(), cca.r2(), cca.rho.as_slice())
}

/// Orthogonality report for canonical correlations `rho` of two signal
/// spans with dimensions `r1` and `r2`.
pub fn tri_orthogonality_from_correlations(
    r1: usize,
    r2: usize,
    rho: &[f64],
) -> Result<TriOrthogonalityReport> {
    if rho.len() != r1.min(r2) {
        return Err(Error::DimensionMismatch(format!(
            "{} correlations for ranks ({r1}, {r2})",
            rho.len()
        )));
    }
    let rc = rho.iter().filter(|r| **r >= RHO_ZERO_CUTOFF).count();
    let dim = r1 + r2 + rc;
    let mut gram = DMatrix::identity(dim, dim);
    for (l, r) in rho.iter().enumerate() {
        gram[(l, r1 + l)] = *r;
        gram[(r1 + l, l)] = *r;
    }

    let mut commons = Vec::with_capacity(rc);
    for (l, r) in rho.iter().take(rc).enumerate() {
        let w = pair_weights(*r)?;
        let mut c = DVector::zeros(dim);
        c[l] = w.w_sum;
        c[r1 + l] = w.w_sum;
        c[r1 + r2 + l] = w.w_im;
        commons.push(c);
    }
    let distinct = |offset: usize, r: usize| -> Vec<DVector<f64>> {
        (0..r)
            .map(|l| {
                let mut d = DVector::zeros(dim);
                d[offset + l] = 1.0;
                if l < rc {
                    d -= &commons[l];
                }
                d
            })
            .collect()
    };
    let d1 = distinct(0, r1);
    let d2 = distinct(r1, r2);

    let cov = |a: &DVector<f64>, b: &DVector<f64>| a.dot(&(&gram * b));
    let all: Vec<&DVector<f64>> = commons.iter().chain(&d1).chain(&d2).collect();
    let mut max_cross: f64 = 0.0;
    for i in 0..all.len() {
        for j in (i + 1)..all.len() {
            max_cross = max_cross.max(cov(all[i], all[j]).abs());
        }
    }

    let var_c: Vec<f64> = commons.iter().map(|c| cov(c, c)).collect();
    let var_d1: Vec<f64> = d1.iter().map(|d| cov(d, d)).collect();
    let var_d2: Vec<f64> = d2.iter().map(|d| cov(d, d)).collect();
    let target_rho = |l: usize| if l < rc { rho[l] } else { 0.0 };
    let mut max_var_err: f64 = 0.0;
    for (l, v) in var_c.iter().enumerate() {
        max_var_err = max_var_err.max((v - rho[l]).abs());
    }
    for vars in [&var_d1, &var_d2] {
        for (l, v) in vars.iter().enumerate() {
            max_var_err = max_var_err.max((v - (1.0 - target_rho(l))).abs());
        }
    }
    Ok(TriOrthogonalityReport {
        rho: rho.to_vec(),
        rc,
        var_c,
        var_d1,
        var_d2,
        max_cross_covariance: max_cross,
        max_variance_error: max_var_err,
    })
}

/// Population model `Sigma_k = B_k B_k^T`, `Sigma_12 = B_1[:, :rc] diag(rho) B_2[:, :rc]^T`
/// for loadings whose columns carry unit-variance factors.
pub fn model_from_loadings(b1: &DMatrix<f64>, b2: &DMatrix<f64>, rho: &[f64]) -> Result<PopulationModel> {
    let rc = rho.len();
    if rc > b1.ncols() || rc > b2.ncols() {
        return Err(Error::InvalidModel(format!(
            "{rc} correlations for loadings with {} and {} columns",
            b1.ncols(),
            b2.ncols()
        )));
    }
    let sigma1 = weighted_gram(b1, &vec![1.0; b1.ncols()]);
    let sigma2 = weighted_gram(b2, &vec![1.0; b2.ncols()]);
    let mut left = b1.columns(0, rc).into_owned();
    for (j, r) in rho.iter().enumerate() {
        left.column_mut(j).scale_mut(*r);
    }
    let sigma12 = left * b2.columns(0, rc).transpose();
    PopulationModel::new(sigma1, sigma2, sigma12)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(v: &[f64]) -> DVector<f64> {
        let v = DVector::from_row_slice(v);
        let n = v.norm();
        v / n
    }

    fn rank_one_model(rho: f64) -> (PopulationModel, DVector<f64>) {
        let u1 = unit(&[1.0, 2.0]);
        let u2 = unit(&[3.0, -1.0]);
        let model = PopulationModel::new(
            &u1 * u1.transpose(),
            &u2 * u2.transpose(),
            &u1 * u2.transpose() * rho,
        )
        .unwrap();
        (model, u1)
    }

    #[test]
    fn uncorrelated_views() {
        let (m, _) = rank_one_model(0.0);
        let d = population_decomposition(&m).unwrap();
        assert_eq!(d.cca.rc, 0);
        assert!(d.cca.rho[0].abs() < 1e-15);
        assert_eq!(d.cov_c1.matrix, DMatrix::zeros(2, 2));
        assert!((&d.cov_d1.matrix - &m.sigma1).amax() < 1e-15);
    }

    #[test]
    fn identical_views() {
        let b = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.5, 2.0, -1.0, 1.0]);
        let s = &b * b.transpose();
        let m = PopulationModel::new(s.clone(), s.clone(), s).unwrap();
        let cca = population_cca(&m).unwrap();
        assert!(cca.rho.iter().all(|r| (r - 1.0).abs() < 1e-10));
    }

    #[test]
    fn rank_one_scalar_case() {
        let (m, u1) = rank_one_model(0.7);
        let d = population_decomposition(&m).unwrap();
        assert!((d.cca.rho[0] - 0.7).abs() < 1e-12);
        let expected = &u1 * u1.transpose() * 0.7;
        assert!((&d.cov_c1.matrix - expected).amax() < 1e-12);
        assert!((d.pve1.view_pve_c - 0.7).abs() < 1e-12);
        let (b1, _) = d.cca.coefficients();
        assert!((&b1 * b1.transpose() - &m.sigma1).amax() < 1e-12);
    }

    #[test]
    fn rejects_indefinite_joint_matrix() {
        let (m, _) = rank_one_model(0.5);
        // cross-covariance larger than the blocks allow
        let bad = PopulationModel::new(m.sigma1.clone(), m.sigma2.clone(), &m.sigma12 * 3.0);
        assert!(matches!(bad, Err(Error::InvalidModel(_))));
    }

    #[test]
    fn two_factor_variances() {
        let report = tri_orthogonality_from_correlations(2, 2, &[0.9, 0.3]).unwrap();
        assert!((report.var_c[0] - 0.9).abs() < 1e-15);
        assert!((report.var_c[1] - 0.3).abs() < 1e-15);
        assert!(report.holds(1e-12));
    }

    #[test]
    fn full_correlation_leaves_no_distinct_variance() {
        let report = tri_orthogonality_from_correlations(1, 1, &[1.0]).unwrap();
        assert_eq!(report.var_d1, vec![0.0]);
        assert_eq!(report.var_d2, vec![0.0]);
    }

    #[test]
    fn unequal_ranks_report() {
        let report = tri_orthogonality_from_correlations(3, 2, &[0.8, 0.0]).unwrap();
        assert_eq!(report.rc, 1);
        assert_eq!(report.var_d1.len(), 3);
        assert!(report.holds(1e-12));
    }

    #[test]
    fn asymmetric_input_is_symmetrized() {
        let (m, _) = rank_one_model(0.4);
        let mut s1 = m.sigma1.clone();
        s1[(0, 1)] += 1e-14;
        let m2 = PopulationModel::new(s1, m.sigma2.clone(), m.sigma12.clone()).unwrap();
        assert_eq!(m2.sigma1, m2.sigma1.transpose());
    }
}
