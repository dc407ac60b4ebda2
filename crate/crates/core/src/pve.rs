//! Proportions of signal variance explained by the common and the
//! distinctive latent factors, per variable and per view.

use nalgebra::{DMatrix, DVector};

use crate::denoise::CovEstimate;
use crate::error::{Error, Result};

/// Factor rows with sample variance at or below this are treated as
/// constant, and their correlation with anything is taken as 0.
pub const FACTOR_VARIANCE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct PveTable {
    pub variable_pve_c: DVector<f64>,
    pub variable_pve_d: DVector<f64>,
    pub view_pve_c: f64,
    pub view_pve_d: f64,
    /// Each variable's share of the total signal variance.
    pub weights: DVector<f64>,
    /// Variables whose signal variance is zero; they report 0 for both PVEs.
    pub zero_variance: Vec<bool>,
}

impl PveTable {
    pub fn p(&self) -> usize {
        self.weights.len()
    }
}

fn is_zero_variance(v: f64, largest: f64) -> bool {
    v <= 0.0 || v <= f64::EPSILON * largest
}

/// Variable-level ratios of covariance diagonals and view-level ratios of
/// traces.
pub fn pve_from_covs(cov_x: &CovEstimate, cov_c: &CovEstimate, cov_d: &CovEstimate) -> Result<PveTable> {
    let p = cov_x.dim();
    if cov_c.dim() != p || cov_d.dim() != p {
        return Err(Error::DimensionMismatch(format!(
            "covariances have sizes {p}, {} and {}",
            cov_c.dim(),
            cov_d.dim()
        )));
    }
    let var_x = cov_x.diagonal();
    let var_c = cov_c.diagonal();
    let var_d = cov_d.diagonal();
    let largest = var_x.iter().copied().fold(0.0, f64::max);
    let zero_variance: Vec<bool> = var_x.iter().map(|v| is_zero_variance(*v, largest)).collect();

    let mut pve_c = DVector::zeros(p);
    let mut pve_d = DVector::zeros(p);
    let mut weights = DVector::zeros(p);
    let mut total_x = 0.0;
    let mut total_c = 0.0;
    let mut total_d = 0.0;
    for i in 0..p {
        if zero_variance[i] {
            continue;
        }
        pve_c[i] = (var_c[i] / var_x[i]).clamp(0.0, 1.0);
        pve_d[i] = (var_d[i] / var_x[i]).clamp(0.0, 1.0);
        total_x += var_x[i];
        total_c += var_c[i];
        total_d += var_d[i];
    }
    if total_x > 0.0 {
        for i in 0..p {
            if !zero_variance[i] {
                weights[i] = var_x[i] / total_x;
            }
        }
    }
    let (view_pve_c, view_pve_d) = if total_x > 0.0 {
        ((total_c / total_x).clamp(0.0, 1.0), (total_d / total_x).clamp(0.0, 1.0))
    } else {
        (0.0, 0.0)
    };
    Ok(PveTable {
        variable_pve_c: pve_c,
        variable_pve_d: pve_d,
        view_pve_c,
        view_pve_d,
        weights,
        zero_variance,
    })
}

/// Sample correlation with `n^{-1}` second moments (data are taken as
/// mean-zero); 0 when either side is constant.
fn moment_correlation(x: &[f64], var_x: f64, f: &[f64], var_f: f64) -> f64 {
    if var_x <= 0.0 || var_f <= FACTOR_VARIANCE_FLOOR {
        return 0.0;
    }
    let n = x.len() as f64;
    let cov: f64 = x.iter().zip(f).map(|(a, b)| a * b).sum::<f64>() / n;
    cov / (var_x * var_f).sqrt()
}

/// PVEs as sums of squared correlations between each signal variable and
/// the common (respectively distinctive) factor samples.
pub fn pve_correlation_form(
    xhat: &DMatrix<f64>,
    common: &DMatrix<f64>,
    distinct: &DMatrix<f64>,
) -> Result<PveTable> {
    let (p, n) = xhat.shape();
    if (common.nrows() > 0 && common.ncols() != n) || (distinct.nrows() > 0 && distinct.ncols() != n) {
        return Err(Error::DimensionMismatch(format!(
            "factor samples have {} / {} columns, signal has {n}",
            common.ncols(),
            distinct.ncols()
        )));
    }
    let nf = n as f64;
    let row_var = |m: &DMatrix<f64>, i: usize| m.row(i).iter().map(|v| v * v).sum::<f64>() / nf;
    let rows = |m: &DMatrix<f64>| -> Vec<(Vec<f64>, f64)> {
        (0..m.nrows())
            .map(|i| (m.row(i).iter().copied().collect(), row_var(m, i)))
            .collect()
    };
    let common_rows = rows(common);
    let distinct_rows = rows(distinct);

    let var_x: Vec<f64> = (0..p).map(|i| row_var(xhat, i)).collect();
    let largest = var_x.iter().copied().fold(0.0, f64::max);
    let zero_variance: Vec<bool> = var_x.iter().map(|v| is_zero_variance(*v, largest)).collect();
    let total: f64 = var_x
        .iter()
        .zip(&zero_variance)
        .filter(|(_, z)| !**z)
        .map(|(v, _)| v)
        .sum();

    let mut pve_c = DVector::zeros(p);
    let mut pve_d = DVector::zeros(p);
    let mut weights = DVector::zeros(p);
    for i in 0..p {
        if zero_variance[i] {
            continue;
        }
        let x: Vec<f64> = xhat.row(i).iter().copied().collect();
        let sum_sq = |fs: &[(Vec<f64>, f64)]| -> f64 {
            fs.iter()
                .map(|(f, vf)| moment_correlation(&x, var_x[i], f, *vf).powi(2))
                .sum()
        };
        pve_c[i] = sum_sq(&common_rows);
        pve_d[i] = sum_sq(&distinct_rows);
        weights[i] = var_x[i] / total;
    }
    let view_pve_c = weights.dot(&pve_c);
    let view_pve_d = weights.dot(&pve_d);
    Ok(PveTable {
        variable_pve_c: pve_c,
        variable_pve_d: pve_d,
        view_pve_c,
        view_pve_d,
        weights,
        zero_variance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cov(diag: &[f64]) -> CovEstimate {
        CovEstimate::new(DMatrix::from_diagonal(&DVector::from_row_slice(diag)), diag.len())
    }

    #[test]
    fn no_common_part() {
        let t = pve_from_covs(&cov(&[2.0, 1.0]), &cov(&[0.0, 0.0]), &cov(&[2.0, 1.0])).unwrap();
        assert_eq!(t.variable_pve_c.as_slice(), &[0.0, 0.0]);
        assert_eq!(t.variable_pve_d.as_slice(), &[1.0, 1.0]);
        assert_eq!((t.view_pve_c, t.view_pve_d), (0.0, 1.0));
    }

    #[test]
    fn all_common() {
        let x = cov(&[2.0, 1.0]);
        let t = pve_from_covs(&x, &x, &cov(&[0.0, 0.0])).unwrap();
        assert_eq!(t.variable_pve_c.as_slice(), &[1.0, 1.0]);
        assert_eq!(t.view_pve_c, 1.0);
    }

    #[test]
    fn hand_instance() {
        // B row (1, 1) with rho (0.5, 0.2) gives a common variance 0.7
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let rho = [0.5, 0.2];
        let var_c: Vec<f64> = (0..2)
            .map(|i| (0..2).map(|l| b[(i, l)] * b[(i, l)] * rho[l]).sum())
            .collect();
        assert!((var_c[0] - 0.7).abs() < 1e-15);
        let t = pve_from_covs(&cov(&[2.0, 2.0]), &cov(&var_c), &cov(&[1.3, 1.3])).unwrap();
        assert!((t.variable_pve_c - DVector::from_row_slice(&[0.35, 0.35])).amax() < 1e-15);
        assert_eq!(t.weights.as_slice(), &[0.5, 0.5]);
        assert!((t.view_pve_c - 0.35).abs() < 1e-15);
        assert!((t.view_pve_c + t.view_pve_d - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_variance_variable_is_flagged() {
        let t = pve_from_covs(&cov(&[0.0, 4.0]), &cov(&[0.0, 1.0]), &cov(&[0.0, 3.0])).unwrap();
        assert_eq!(t.zero_variance, vec![true, false]);
        assert_eq!(t.weights.as_slice(), &[0.0, 1.0]);
        assert_eq!(t.variable_pve_c[0], 0.0);
        assert!((t.view_pve_c - 0.25).abs() < 1e-15);
    }

    #[test]
    fn correlation_form_perfect_match() {
        let x = DMatrix::from_row_slice(2, 4, &[1.0, -1.0, 2.0, -2.0, 1.0, 1.0, 1.0, 1.0]);
        let common = x.rows(0, 1).into_owned();
        let t = pve_correlation_form(&x, &common, &DMatrix::zeros(0, 4)).unwrap();
        assert!((t.variable_pve_c[0] - 1.0).abs() < 1e-15);
        // x_2 is orthogonal to x_1 in sample
        assert!(t.variable_pve_c[1].abs() < 1e-15);
    }

    #[test]
    fn correlation_form_known_correlations() {
        // orthonormal sample patterns of length 4 (times 2 = sqrt(n))
        let e0 = [1.0, 1.0, 1.0, 1.0];
        let e1 = [1.0, -1.0, 1.0, -1.0];
        let e2 = [1.0, 1.0, -1.0, -1.0];
        let e3 = [1.0, -1.0, -1.0, 1.0];
        let (a, b) = (0.6_f64, 0.3_f64);
        let rest = (1.0 - a * a - b * b).sqrt();
        let x = DMatrix::from_fn(1, 4, |_, j| a * e0[j] + b * e1[j] + rest * e2[j]);
        let common = DMatrix::from_fn(2, 4, |i, j| if i == 0 { e0[j] } else { e1[j] });
        let distinct = DMatrix::from_fn(1, 4, |_, j| e3[j]);
        let t = pve_correlation_form(&x, &common, &distinct).unwrap();
        assert!((t.variable_pve_c[0] - 0.45).abs() < 1e-14);
        assert!(t.variable_pve_d[0].abs() < 1e-14);
    }

    #[test]
    fn constant_factor_rows_contribute_nothing() {
        let x = DMatrix::from_row_slice(1, 3, &[1.0, 2.0, 3.0]);
        let t = pve_correlation_form(&x, &DMatrix::zeros(1, 3), &DMatrix::zeros(0, 3)).unwrap();
        assert_eq!(t.variable_pve_c[0], 0.0);
    }
}
