//! Sample canonical correlation analysis of two denoised views through
//! whitening followed by an SVD of the whitened cross-moment matrix.

use nalgebra::{DMatrix, DVector};

use crate::denoise::{signal_covariance, CovEstimate, SignalEstimate};
use crate::error::{Error, Result};
use crate::linalg::full_svd;

/// Eigenvalues below this fraction of the largest are treated as zero when
/// forming the pseudo-inverse square root.
pub const PINV_RELATIVE_CUTOFF: f64 = 1e-12;

/// Whitened scores of one view together with the retained eigenpairs.
#[derive(Debug, Clone)]
pub struct Whitening {
    /// `r x n` scores with `n^{-1} H H^T = I`.
    pub h: DMatrix<f64>,
    /// Retained eigenvectors of the signal covariance (`p x r`).
    pub vectors: DMatrix<f64>,
    /// Retained eigenvalues, descending.
    pub values: DVector<f64>,
}

impl Whitening {
    pub fn rank(&self) -> usize {
        self.values.len()
    }
}

/// `(Lambda^+)^{1/2} V^T X` for the signal `x` and its covariance `cov`.
pub fn whitened_scores(x: &SignalEstimate, cov: &CovEstimate) -> Result<Whitening> {
    let eigen = match &cov.eigen {
        Some(e) => e.clone(),
        None => signal_covariance(x).eigen.expect("signal covariance caches eigenpairs"),
    };
    let top = eigen.values.iter().copied().fold(0.0, f64::max);
    let keep = eigen
        .values
        .iter()
        .take_while(|v| **v > 0.0 && **v >= PINV_RELATIVE_CUTOFF * top)
        .count();
    if keep == 0 {
        return Err(Error::EmptyDecomposition { view: 0 });
    }
    let vectors = eigen.vectors.columns(0, keep).into_owned();
    let values = eigen.values.rows(0, keep).into_owned();
    let mut h = vectors.transpose() * &x.xhat;
    for (i, v) in values.iter().enumerate() {
        h.row_mut(i).scale_mut(1.0 / v.sqrt());
    }
    Ok(Whitening { h, vectors, values })
}

/// `n^{-1} H1 H2^T`.
pub fn cross_matrix(h1: &DMatrix<f64>, h2: &DMatrix<f64>, n: usize) -> Result<DMatrix<f64>> {
    if h1.ncols() != n || h2.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "score matrices have {} and {} samples, expected {n}",
            h1.ncols(),
            h2.ncols()
        )));
    }
    Ok(h1 * h2.transpose() / n as f64)
}

/// Canonical correlations, augmented canonical variable samples and
/// coefficient matrices of a pair of denoised views.
#[derive(Debug, Clone)]
pub struct CanonicalSystem {
    /// Canonical correlations, descending, clamped to `[0, 1]`;
    /// length `min(r1, r2)`.
    pub rho: DVector<f64>,
    /// Augmented canonical variable samples (`r_k x n`).
    pub z1: DMatrix<f64>,
    pub z2: DMatrix<f64>,
    /// Coefficient matrices `B_k = n^{-1} X_k Z_k^T` (`p_k x r_k`).
    pub b1: DMatrix<f64>,
    pub b2: DMatrix<f64>,
    /// Whitened cross-moment matrix (`r1 x r2`).
    pub theta: DMatrix<f64>,
    /// Square orthogonal factors of the full SVD of `theta`.
    pub u_theta1: DMatrix<f64>,
    pub u_theta2: DMatrix<f64>,
    pub whitening1: Whitening,
    pub whitening2: Whitening,
    pub xhat1: DMatrix<f64>,
    pub xhat2: DMatrix<f64>,
}

impl CanonicalSystem {
    pub fn r1(&self) -> usize {
        self.z1.nrows()
    }

    pub fn r2(&self) -> usize {
        self.z2.nrows()
    }

    pub fn n(&self) -> usize {
        self.z1.ncols()
    }

    /// Negates canonical pair `l` for every `l` with `flips[l]` set: column
    /// `l` of both `U_theta` factors, row `l` of both score matrices and
    /// column `l` of both coefficient matrices.
    pub fn with_flipped_signs(&self, flips: &[bool]) -> Self {
        let mut out = self.clone();
        for (l, _) in flips.iter().enumerate().filter(|(_, f)| **f) {
            if l < out.r1() {
                out.u_theta1.column_mut(l).neg_mut();
                out.z1.row_mut(l).neg_mut();
                out.b1.column_mut(l).neg_mut();
            }
            if l < out.r2() {
                out.u_theta2.column_mut(l).neg_mut();
                out.z2.row_mut(l).neg_mut();
                out.b2.column_mut(l).neg_mut();
            }
        }
        out
    }

    /// `n^{-1} Z1 Z2^T`.
    pub fn score_cross_moment(&self) -> DMatrix<f64> {
        &self.z1 * self.z2.transpose() / self.n() as f64
    }
}

/// `V Lambda^{1/2} U_theta`.
fn coefficient_formula(w: &Whitening, u_theta: &DMatrix<f64>) -> DMatrix<f64> {
    let mut scaled = w.vectors.clone();
    for (j, v) in w.values.iter().enumerate() {
        scaled.column_mut(j).scale_mut(v.sqrt());
    }
    scaled * u_theta
}

/// Runs sample CCA on two denoised views.
pub fn canonical_system(x1: &SignalEstimate, x2: &SignalEstimate) -> Result<CanonicalSystem> {
    if x1.n() != x2.n() {
        return Err(Error::SampleCountMismatch {
            n1: x1.n(),
            n2: x2.n(),
        });
    }
    let n = x1.n();
    let mut whitenings = Vec::with_capacity(2);
    for (view, x) in [(1, x1), (2, x2)] {
        if x.rank == 0 {
            return Err(Error::EmptyDecomposition { view });
        }
        let cov = signal_covariance(x);
        let w = whitened_scores(x, &cov).map_err(|e| match e {
            Error::EmptyDecomposition { .. } => Error::EmptyDecomposition { view },
            other => other,
        })?;
        whitenings.push(w);
    }
    let whitening2 = whitenings.pop().expect("two views");
    let whitening1 = whitenings.pop().expect("two views");

    let theta = cross_matrix(&whitening1.h, &whitening2.h, n)?;
    let (u_theta1, singulars, u_theta2) = full_svd(&theta)?;
    let rho = singulars.map(|s| s.clamp(0.0, 1.0));

    let z1 = u_theta1.transpose() * &whitening1.h;
    let z2 = u_theta2.transpose() * &whitening2.h;

    let b1 = coefficient_formula(&whitening1, &u_theta1);
    let b2 = coefficient_formula(&whitening2, &u_theta2);
    for (view, b, x, z) in [(1, &b1, &x1.xhat, &z1), (2, &b2, &x2.xhat, &z2)] {
        let direct = x * z.transpose() / n as f64;
        let scale = b.norm().max(f64::MIN_POSITIVE);
        let gap = (&direct - b).norm() / scale;
        if gap > 1e-8 {
            return Err(Error::Numerical(format!(
                "cca: coefficient matrix of view {view} disagrees between routes (relative gap {gap:.3e})"
            )));
        }
    }

    Ok(CanonicalSystem {
        rho,
        z1,
        z2,
        b1,
        b2,
        theta,
        u_theta1,
        u_theta2,
        whitening1,
        whitening2,
        xhat1: x1.xhat.clone(),
        xhat2: x2.xhat.clone(),
    })
}
