//! Invariant checks on a finished output directory, using only the files.

use std::fmt;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::config::read_key_values;
use crate::decompose::AuxMode;
use crate::error::{Error, Result};
use crate::io::read_csv_matrix;

pub const ADDITIVITY_TOLERANCE: f64 = 1e-10;
pub const RULE_OF_SUM_TOLERANCE: f64 = 1e-10;
pub const VIEW_RULE_OF_SUM_TOLERANCE: f64 = 1e-12;
pub const FACTOR_MOMENT_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckItem {
    pub name: String,
    /// Observed error, or `None` when the check does not apply.
    pub value: Option<f64>,
    pub tolerance: f64,
}

impl CheckItem {
    pub fn passed(&self) -> bool {
        self.value.is_none_or(|v| v <= self.tolerance)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CheckReport {
    pub items: Vec<CheckItem>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.items.iter().all(CheckItem::passed)
    }

    fn push(&mut self, name: impl Into<String>, value: Option<f64>, tolerance: f64) {
        self.items.push(CheckItem {
            name: name.into(),
            value,
            tolerance,
        });
    }
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for item in &self.items {
            let status = match (item.value, item.passed()) {
                (None, _) => "skip",
                (_, true) => "pass",
                (_, false) => "FAIL",
            };
            match item.value {
                Some(v) => writeln!(f, "{status} {} {v:.3e} (tolerance {:.0e})", item.name, item.tolerance)?,
                None => writeln!(f, "{status} {}", item.name)?,
            }
        }
        Ok(())
    }
}

fn relative(diff: &DMatrix<f64>, reference: &DMatrix<f64>) -> f64 {
    let scale = reference.norm();
    if scale > 0.0 {
        diff.norm() / scale
    } else {
        diff.norm()
    }
}

fn load(dir: &Path, file: &str) -> Result<DMatrix<f64>> {
    Ok(read_csv_matrix(&dir.join(file))?.values)
}

fn same_shape(a: &DMatrix<f64>, b: &DMatrix<f64>, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::DimensionMismatch(format!(
            "check: {what} shapes {:?} and {:?} differ",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

/// Largest deviation of the factor second moments from their implied
/// values: `rho` for common rows, `1 - rho` or 1 for distinctive rows,
/// `rho` between paired distinctive rows beyond the common rank, and 0
/// everywhere else.
pub fn factor_moment_error(
    common: &DMatrix<f64>,
    distinct1: &DMatrix<f64>,
    distinct2: &DMatrix<f64>,
    rho: &DVector<f64>,
) -> f64 {
    let (rc, r1, r2) = (common.nrows(), distinct1.nrows(), distinct2.nrows());
    let n = common.ncols().max(distinct1.ncols()) as f64;
    let stacked = {
        let mut m = DMatrix::zeros(rc + r1 + r2, distinct1.ncols());
        m.rows_mut(0, rc).copy_from(common);
        m.rows_mut(rc, r1).copy_from(distinct1);
        m.rows_mut(rc + r1, r2).copy_from(distinct2);
        m
    };
    let gram = &stacked * stacked.transpose() / n;
    let mut expected = DMatrix::zeros(gram.nrows(), gram.ncols());
    for l in 0..rc {
        expected[(l, l)] = rho[l];
    }
    for l in 0..r1 {
        expected[(rc + l, rc + l)] = if l < rc { 1.0 - rho[l] } else { 1.0 };
    }
    for l in 0..r2 {
        expected[(rc + r1 + l, rc + r1 + l)] = if l < rc { 1.0 - rho[l] } else { 1.0 };
    }
    for l in rc..r1.min(r2) {
        let v = rho.get(l).copied().unwrap_or(0.0);
        expected[(rc + l, rc + r1 + l)] = v;
        expected[(rc + r1 + l, rc + l)] = v;
    }
    (gram - expected).amax()
}

pub fn check_output_dir(dir: &Path) -> Result<CheckReport> {
    let manifest = read_key_values(&dir.join("manifest.txt"))?;
    let aux_mode: AuxMode = manifest
        .get("aux_mode")
        .ok_or_else(|| Error::Input {
            path: dir.join("manifest.txt"),
            message: "missing aux_mode".into(),
        })?
        .parse()?;
    let mut report = CheckReport::default();

    for v in 1..=2 {
        let x = load(dir, &format!("xhat_{v}.csv"))?;
        let c = load(dir, &format!("chat_{v}.csv"))?;
        let d = load(dir, &format!("dhat_{v}.csv"))?;
        same_shape(&x, &c, "signal/common")?;
        same_shape(&x, &d, "signal/distinctive")?;
        report.push(format!("additivity_{v}"), Some(relative(&(&c + &d - &x), &x)), ADDITIVITY_TOLERANCE);

        let cov_x = &x * x.transpose() / x.ncols() as f64;
        let cov_c = load(dir, &format!("cov_c_{v}.csv"))?;
        let cov_d = load(dir, &format!("cov_d_{v}.csv"))?;
        same_shape(&cov_x, &cov_c, "covariance")?;
        same_shape(&cov_x, &cov_d, "covariance")?;
        report.push(
            format!("covariance_additivity_{v}"),
            Some(relative(&(&cov_c + &cov_d - &cov_x), &cov_x)),
            ADDITIVITY_TOLERANCE,
        );

        let pve = load(dir, &format!("pve_variables_{v}.csv"))?;
        if pve.ncols() < 4 {
            return Err(Error::Input {
                path: dir.join(format!("pve_variables_{v}.csv")),
                message: "expected pve_c, pve_d, weight and zero_variance columns".into(),
            });
        }
        let worst = (0..pve.nrows())
            .filter(|&i| pve[(i, 3)] == 0.0)
            .map(|i| (pve[(i, 0)] + pve[(i, 1)] - 1.0).abs())
            .fold(0.0, f64::max);
        report.push(format!("variable_rule_of_sum_{v}"), Some(worst), RULE_OF_SUM_TOLERANCE);
    }

    let views = load(dir, "pve_views.csv")?;
    let worst = (0..views.nrows())
        .map(|i| (views[(i, 1)] + views[(i, 2)] - 1.0).abs())
        .fold(0.0, f64::max);
    report.push("view_rule_of_sum", Some(worst), VIEW_RULE_OF_SUM_TOLERANCE);

    let rho_table = load(dir, "canonical_correlations.csv")?;
    let rho: DVector<f64> = if rho_table.nrows() == 0 {
        DVector::zeros(0)
    } else {
        rho_table.column(1).into_owned()
    };
    let out_of_order = rho
        .iter()
        .zip(rho.iter().skip(1))
        .map(|(a, b)| (b - a).max(0.0))
        .chain(rho.iter().map(|r| (-r).max(r - 1.0).max(0.0)))
        .fold(0.0, f64::max);
    report.push("canonical_correlations_ordered", Some(out_of_order), 0.0);

    let common = load(dir, "c_factors.csv")?;
    let distinct1 = load(dir, "d_factors_1.csv")?;
    let distinct2 = load(dir, "d_factors_2.csv")?;
    let factor_error = match aux_mode {
        AuxMode::Projected => Some(factor_moment_error(&common, &distinct1, &distinct2, &rho)),
        AuxMode::Raw => None,
    };
    report.push("factor_second_moments", factor_error, FACTOR_MOMENT_TOLERANCE);
    Ok(report)
}
