//! Low-rank signal estimation by soft-thresholding the singular values of a
//! noisy view, and the signal covariance built from it.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{symmetrize, ThinSvd, ViewMatrix};

/// Denoised signal `X = U diag(soft) V^T` of one view.
#[derive(Debug, Clone)]
pub struct SignalEstimate {
    /// The denoised `p x n` signal matrix.
    pub xhat: DMatrix<f64>,
    /// Number of strictly positive soft-thresholded singular values.
    pub rank: usize,
    /// Rank the caller asked for, before any collapse from thresholding.
    pub requested_rank: usize,
    pub soft_singulars: DVector<f64>,
    /// Per-variable noise variance estimate.
    pub tau: f64,
    /// Every singular value of the noisy view, descending.
    pub raw_singulars: DVector<f64>,
    left: DMatrix<f64>,
}

impl SignalEstimate {
    pub fn p(&self) -> usize {
        self.xhat.nrows()
    }

    pub fn n(&self) -> usize {
        self.xhat.ncols()
    }

    /// Left singular vectors of `xhat` for the retained rank.
    pub fn left(&self) -> &DMatrix<f64> {
        &self.left
    }

    /// Treats an already-clean matrix as a signal estimate: its SVD is kept
    /// up to `max_rank`, numerically zero directions (below `1e-12` of the
    /// largest singular value) are dropped, and no shrinkage is applied.
    pub fn from_signal(x: &DMatrix<f64>, max_rank: usize) -> Result<Self> {
        let svd = ThinSvd::compute(x)?;
        let min_dim = svd.singulars.len();
        if max_rank > min_dim {
            return Err(Error::DimensionMismatch(format!(
                "rank {max_rank} exceeds min(p, n) = {min_dim}"
            )));
        }
        let top = svd.singulars.iter().copied().next().unwrap_or(0.0);
        let rank = svd
            .singulars
            .iter()
            .take(max_rank)
            .take_while(|s| **s > 1e-12 * top && **s > 0.0)
            .count();
        let factors = svd.truncate(rank);
        let xhat = if rank == 0 {
            DMatrix::zeros(x.nrows(), x.ncols())
        } else {
            factors.reconstruct()
        };
        Ok(Self {
            xhat,
            rank,
            requested_rank: max_rank,
            soft_singulars: factors.singulars,
            tau: 0.0,
            raw_singulars: svd.singulars,
            left: factors.left,
        })
    }
}

/// `sum_{l > r} sigma_l^2 / (n p - n r - p r)`.
fn noise_level(singulars: &DVector<f64>, r: usize, p: usize, n: usize) -> Result<f64> {
    let denominator = (n * p) as i64 - (n * r) as i64 - (p * r) as i64;
    if denominator <= 0 {
        return Err(Error::RankBound {
            rank: r,
            p,
            n,
            denominator,
        });
    }
    let tail: f64 = singulars.iter().skip(r).map(|s| s * s).sum();
    Ok(tail / denominator as f64)
}

/// Soft-thresholded rank-`r` estimate of the signal underlying `y`.
///
/// Squared singular values are shrunk by `tau * p`; any that fall to zero
/// reduce the returned rank. An all-zero view yields rank 0.
pub fn soft_threshold_signal(y: &ViewMatrix, r: usize) -> Result<SignalEstimate> {
    let (p, n) = (y.p(), y.n());
    if r > p.min(n) {
        return Err(Error::InvalidRanks(format!(
            "rank {r} exceeds min(p, n) = {}",
            p.min(n)
        )));
    }
    let svd = ThinSvd::compute(y.values())?;
    let tau = noise_level(&svd.singulars, r, p, n)?;
    let threshold = tau * p as f64;

    let soft: Vec<f64> = svd
        .singulars
        .iter()
        .take(r)
        .map(|s| (s * s - threshold).max(0.0).sqrt())
        .collect();
    let rank = soft.iter().take_while(|s| **s > 0.0).count();
    if rank < r {
        log::warn!("soft-thresholding reduced rank from {r} to {rank}");
    }

    let factors = svd.truncate(rank);
    let mut scaled_left = factors.left.clone();
    for (j, s) in soft.iter().take(rank).enumerate() {
        scaled_left.column_mut(j).scale_mut(*s);
    }
    let xhat = if rank == 0 {
        DMatrix::zeros(p, n)
    } else {
        scaled_left * factors.right.transpose()
    };

    Ok(SignalEstimate {
        xhat,
        rank,
        requested_rank: r,
        soft_singulars: DVector::from_iterator(rank, soft.into_iter().take(rank)),
        tau,
        raw_singulars: svd.singulars,
        left: factors.left,
    })
}

/// Top eigenpairs of a covariance estimate, eigenvalues descending.
#[derive(Debug, Clone)]
pub struct EigenPairs {
    pub vectors: DMatrix<f64>,
    pub values: DVector<f64>,
}

/// A symmetric positive semi-definite covariance estimate.
#[derive(Debug, Clone)]
pub struct CovEstimate {
    pub matrix: DMatrix<f64>,
    pub rank: usize,
    /// Cached eigen-decomposition, present for signal covariances.
    pub eigen: Option<EigenPairs>,
}

impl CovEstimate {
    pub fn new(matrix: DMatrix<f64>, rank: usize) -> Self {
        Self {
            matrix: symmetrize(&matrix),
            rank,
            eigen: None,
        }
    }

    pub fn zeros(p: usize) -> Self {
        Self::new(DMatrix::zeros(p, p), 0)
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn diagonal(&self) -> DVector<f64> {
        self.matrix.diagonal()
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace()
    }
}

/// `n^{-1} X X^T`, with its top eigenpairs read off the SVD of `X / sqrt(n)`.
pub fn signal_covariance(x: &SignalEstimate) -> CovEstimate {
    let n = x.n() as f64;
    let matrix = symmetrize(&(&x.xhat * x.xhat.transpose() / n));
    let values = x.soft_singulars.map(|s| s * s / n);
    CovEstimate {
        matrix,
        rank: x.rank,
        eigen: Some(EigenPairs {
            vectors: x.left.clone(),
            values,
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn view(p: usize, n: usize, f: impl Fn(usize, usize) -> f64) -> ViewMatrix {
        ViewMatrix::new(DMatrix::from_fn(p, n, f)).unwrap()
    }

    /// `U diag(s) V^T` on `n` samples, with orthonormal `V` from a QR.
    fn with_singulars(s: &[f64], n: usize) -> ViewMatrix {
        let u = DMatrix::from_row_slice(3, 3, &[0.6, 0.8, 0.0, -0.8, 0.6, 0.0, 0.0, 0.0, 1.0]);
        let raw = DMatrix::from_fn(n, 3, |i, j| ((i * 5 + j * 3 + i * j) % 7) as f64 - 2.5);
        let v = raw.qr().q();
        let d = DMatrix::from_diagonal(&DVector::from_row_slice(s));
        ViewMatrix::new(u * d * v.transpose()).unwrap()
    }

    #[test]
    fn hand_instance_noise_level_and_soft_value() {
        let y = with_singulars(&[3.0, 1.0, 1.0], 4);
        let est = soft_threshold_signal(&y, 1).unwrap();
        // tau = (1 + 1) / (12 - 4 - 3) computed independently
        let tau = 2.0 / 5.0;
        assert!((est.tau - tau).abs() < 1e-14);
        let expected = (9.0_f64 - tau * 3.0).sqrt();
        assert!((est.soft_singulars[0] - expected).abs() < 1e-12);
        assert!((est.soft_singulars[0] - 7.8_f64.sqrt()).abs() < 1e-12);
        assert!((est.soft_singulars[0] - 2.792_848).abs() < 1e-6);
    }

    #[test]
    fn exact_rank_input_is_reproduced() {
        let y = view(5, 12, |i, j| {
            let a = (i as f64 + 1.0) * ((j as f64) * 0.3).sin();
            let b = (i as f64 - 2.0) * ((j as f64) * 0.7).cos();
            a + b
        });
        let est = soft_threshold_signal(&y, 2).unwrap();
        assert!(est.tau < 1e-25);
        let rel = (&est.xhat - y.values()).norm() / y.values().norm();
        assert!(rel < 1e-8);
    }

    #[test]
    fn weak_component_is_dropped() {
        // p = 3, n = 7, r = 2: tau = 1 / (21 - 14 - 6) = 1, tau * p = 3 >= sigma_2^2
        let y = with_singulars(&[3.0, 1.0, 1.0], 7);
        let est = soft_threshold_signal(&y, 2).unwrap();
        assert!((est.tau - 1.0).abs() < 1e-12);
        assert_eq!(est.requested_rank, 2);
        assert_eq!(est.rank, 1);
        assert!((est.soft_singulars[0] - 6.0_f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn rank_bound_error() {
        let y = view(3, 4, |i, j| (i + 2 * j) as f64);
        // 12 - 8 - 6 < 0
        assert!(matches!(
            soft_threshold_signal(&y, 2),
            Err(Error::RankBound { denominator: -2, .. })
        ));
        assert!(matches!(
            soft_threshold_signal(&y, 4),
            Err(Error::InvalidRanks(_))
        ));
    }

    #[test]
    fn zero_view_gives_empty_signal() {
        let y = view(4, 6, |_, _| 0.0);
        let est = soft_threshold_signal(&y, 1).unwrap();
        assert_eq!(est.rank, 0);
        assert_eq!(est.xhat, DMatrix::zeros(4, 6));
        let cov = signal_covariance(&est);
        assert_eq!(cov.matrix, DMatrix::zeros(4, 4));
    }

    #[test]
    fn single_nonzero_row_covariance() {
        let v = [1.0, -2.0, 3.0, 0.5];
        let x = DMatrix::from_fn(3, 4, |i, j| if i == 1 { v[j] } else { 0.0 });
        let est = SignalEstimate::from_signal(&x, 1).unwrap();
        let cov = signal_covariance(&est);
        let expected = v.iter().map(|a| a * a).sum::<f64>() / 4.0;
        assert!((cov.matrix[(1, 1)] - expected).abs() < 1e-13);
        let mut others = cov.matrix.clone();
        others[(1, 1)] = 0.0;
        assert!(others.amax() < 1e-14);
    }

    #[test]
    fn soft_singulars_bounded_by_raw() {
        let y = view(6, 9, |i, j| ((i * 7 + j * 3) % 11) as f64 - 5.0);
        let est = soft_threshold_signal(&y, 2).unwrap();
        for l in 0..est.rank {
            assert!(est.soft_singulars[l] <= est.raw_singulars[l]);
        }
        assert!(est.xhat.norm() <= y.values().norm());
    }
}
