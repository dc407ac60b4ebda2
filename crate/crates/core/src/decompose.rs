//! Splits each view's signal into a common-source part generated by common
//! latent factors and a distinctive-source part generated by distinctive
//! latent factors.
//!
//! Every canonical pair `(z1, z2)` with correlation `rho` is decomposed as
//! `z_k = c + d_k` with `c` uncorrelated with both `d_1` and `d_2`, and
//! `d_1` uncorrelated with `d_2`. Inside the span of `z1` and `z2` this is
//! impossible for `0 < rho < 1`, so a standardized auxiliary variable
//! orthogonal to both views supplies the missing dimension:
//!
//! ```text
//! c = (z1 + z2) * rho / (1 + rho) + z_aux * sqrt(rho (1 - rho) / (1 + rho))
//! ```
//!
//! which gives `var(c) = rho` and `var(d_k) = 1 - rho`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::cca::{canonical_system, CanonicalSystem};
use crate::denoise::{signal_covariance, CovEstimate, SignalEstimate};
use crate::error::{Error, Result};
use crate::linalg::{residualize, weighted_gram};

/// Correlations below this are treated as exactly zero.
pub const RHO_ZERO_CUTOFF: f64 = 1e-12;

/// Slack allowed outside `[0, 1]` before a correlation is rejected.
pub const RHO_RANGE_SLACK: f64 = 1e-9;

/// Negative diagonal entries of a distinctive covariance no smaller than
/// this are clipped to zero.
pub const DIAGONAL_CLIP_TOLERANCE: f64 = 1e-10;

/// Mixing weights for one canonical pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairWeights {
    pub rho: f64,
    /// Weight on `z1 + z2`: `rho / (1 + rho)`.
    pub w_sum: f64,
    /// Weight on the auxiliary variable: `sqrt(rho (1 - rho) / (1 + rho))`.
    pub w_im: f64,
    pub var_c: f64,
    pub var_d: f64,
}

pub fn pair_weights(rho: f64) -> Result<PairWeights> {
    if !rho.is_finite() || !(-RHO_RANGE_SLACK..=1.0 + RHO_RANGE_SLACK).contains(&rho) {
        return Err(Error::InvalidCorrelation(rho));
    }
    let mut rho = rho.clamp(0.0, 1.0);
    if rho < RHO_ZERO_CUTOFF {
        rho = 0.0;
    }
    Ok(PairWeights {
        rho,
        w_sum: rho / (1.0 + rho),
        w_im: (rho * (1.0 - rho) / (1.0 + rho)).sqrt(),
        var_c: rho,
        var_d: 1.0 - rho,
    })
}

/// How auxiliary factor samples are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AuxMode {
    /// Plain i.i.d. standard normal draws.
    Raw,
    /// Draws residualized against the constant vector, both views' scores
    /// and earlier auxiliary rows, then rescaled to unit sample variance.
    #[default]
    Projected,
}

impl fmt::Display for AuxMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AuxMode::Raw => "raw",
            AuxMode::Projected => "projected",
        })
    }
}

impl FromStr for AuxMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "raw" => Ok(AuxMode::Raw),
            "projected" => Ok(AuxMode::Projected),
            other => Err(Error::Config(format!(
                "unknown aux mode '{other}' (expected raw or projected)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuxiliaryBlock {
    /// `rc x n` auxiliary samples.
    pub z_im: DMatrix<f64>,
    pub seed: u64,
    pub mode: AuxMode,
}

/// Standard normal `rows x n` block drawn row by row from ChaCha8 seeded
/// with `seed`.
pub(crate) fn gaussian_block(rng: &mut ChaCha8Rng, rows: usize, n: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(rows, n);
    for i in 0..rows {
        for j in 0..n {
            m[(i, j)] = StandardNormal.sample(rng);
        }
    }
    m
}

/// Draws the auxiliary factor samples for `rc` common factors.
pub fn generate_auxiliary(
    rc: usize,
    n: usize,
    seed: u64,
    mode: AuxMode,
    z1: &DMatrix<f64>,
    z2: &DMatrix<f64>,
) -> Result<AuxiliaryBlock> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut z_im = gaussian_block(&mut rng, rc, n);
    if mode == AuxMode::Projected && rc > 0 {
        if z1.ncols() != n || z2.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "score matrices have {} and {} samples, expected {n}",
                z1.ncols(),
                z2.ncols()
            )));
        }
        let mut basis: Vec<DVector<f64>> = Vec::with_capacity(1 + z1.nrows() + z2.nrows() + rc);
        let ones = DVector::from_element(n, 1.0);
        let score_rows = z1.row_iter().chain(z2.row_iter()).map(|r| r.transpose());
        for v in std::iter::once(ones).chain(score_rows) {
            let scale = v.norm();
            let mut v = v;
            residualize(&mut v, &basis);
            let norm = v.norm();
            if norm > 1e-10 * scale && norm > 0.0 {
                basis.push(v / norm);
            }
        }
        let root_n = (n as f64).sqrt();
        for row in 0..rc {
            let mut v = z_im.row(row).transpose();
            let scale = v.norm();
            residualize(&mut v, &basis);
            let norm = v.norm();
            if norm <= 1e-8 * scale || norm == 0.0 {
                return Err(Error::DegenerateAuxiliary { row, n });
            }
            let unit = v / norm;
            z_im.set_row(row, &(&unit * root_n).transpose());
            basis.push(unit);
        }
    }
    Ok(AuxiliaryBlock { z_im, seed, mode })
}

/// Estimated samples of the common and distinctive latent factors.
#[derive(Debug, Clone)]
pub struct FactorSamples {
    /// `rc x n` common factor samples.
    pub common: DMatrix<f64>,
    /// `r_k x n` distinctive factor samples of each view.
    pub distinct1: DMatrix<f64>,
    pub distinct2: DMatrix<f64>,
}

pub fn factor_samples(
    system: &CanonicalSystem,
    aux: &AuxiliaryBlock,
    rc: usize,
) -> Result<FactorSamples> {
    if rc > system.r1().min(system.r2()) {
        return Err(Error::InvalidRanks(format!(
            "rc = {rc} exceeds min(r1, r2) = {}",
            system.r1().min(system.r2())
        )));
    }
    if aux.z_im.nrows() != rc || (rc > 0 && aux.z_im.ncols() != system.n()) {
        return Err(Error::DimensionMismatch(format!(
            "auxiliary block is {} x {}, expected {rc} x {}",
            aux.z_im.nrows(),
            aux.z_im.ncols(),
            system.n()
        )));
    }
    let n = system.n();
    let mut common = DMatrix::zeros(rc, n);
    for l in 0..rc {
        let w = pair_weights(system.rho[l])?;
        let row = (system.z1.row(l) + system.z2.row(l)) * w.w_sum + aux.z_im.row(l) * w.w_im;
        common.set_row(l, &row);
    }
    let mut distinct1 = system.z1.clone();
    let mut distinct2 = system.z2.clone();
    for l in 0..rc {
        let c = common.row(l);
        distinct1.set_row(l, &(system.z1.row(l) - c));
        distinct2.set_row(l, &(system.z2.row(l) - c));
    }
    Ok(FactorSamples {
        common,
        distinct1,
        distinct2,
    })
}

/// Common-source and distinctive-source sample matrices of both views.
#[derive(Debug, Clone)]
pub struct SourceMatrices {
    pub c1: DMatrix<f64>,
    pub c2: DMatrix<f64>,
    pub d1: DMatrix<f64>,
    pub d2: DMatrix<f64>,
}

/// `C_k = B_k[:, :rc] * common`, `D_k = X_k - C_k`.
pub fn source_matrices(
    system: &CanonicalSystem,
    factors: &FactorSamples,
    rc: usize,
) -> Result<SourceMatrices> {
    if factors.common.nrows() != rc || rc > system.b1.ncols() || rc > system.b2.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "common factor block has {} rows, expected rc = {rc}",
            factors.common.nrows()
        )));
    }
    let common_part = |b: &DMatrix<f64>, x: &DMatrix<f64>| {
        if rc == 0 {
            DMatrix::zeros(x.nrows(), x.ncols())
        } else {
            b.columns(0, rc) * &factors.common
        }
    };
    let c1 = common_part(&system.b1, &system.xhat1);
    let c2 = common_part(&system.b2, &system.xhat2);
    let d1 = &system.xhat1 - &c1;
    let d2 = &system.xhat2 - &c2;
    Ok(SourceMatrices { c1, c2, d1, d2 })
}

/// `B[:, :rc] diag(rho[:rc]) B[:, :rc]^T`.
pub fn cov_common(b: &DMatrix<f64>, rho: &DVector<f64>, rc: usize) -> Result<CovEstimate> {
    if rc > b.ncols() || rc > rho.len() {
        return Err(Error::DimensionMismatch(format!(
            "rc = {rc} exceeds {} coefficient columns or {} correlations",
            b.ncols(),
            rho.len()
        )));
    }
    if rc == 0 {
        return Ok(CovEstimate::zeros(b.nrows()));
    }
    let weights: Vec<f64> = rho.iter().take(rc).copied().collect();
    Ok(CovEstimate::new(weighted_gram(&b.columns(0, rc).into_owned(), &weights), rc))
}

/// `cov_x - cov_c`, plus the number of slightly negative diagonal entries
/// that were clipped to zero.
pub fn cov_distinct(cov_x: &CovEstimate, cov_c: &CovEstimate) -> Result<(CovEstimate, usize)> {
    if cov_x.dim() != cov_c.dim() {
        return Err(Error::DimensionMismatch(format!(
            "covariances are {0} x {0} and {1} x {1}",
            cov_x.dim(),
            cov_c.dim()
        )));
    }
    let mut m = &cov_x.matrix - &cov_c.matrix;
    let mut clipped = 0;
    for i in 0..m.nrows() {
        let v = m[(i, i)];
        if (-DIAGONAL_CLIP_TOLERANCE..0.0).contains(&v) {
            m[(i, i)] = 0.0;
            clipped += 1;
        }
    }
    if clipped > 0 {
        log::warn!("clipped {clipped} slightly negative distinctive variances to zero");
    }
    Ok((CovEstimate::new(m, cov_x.rank), clipped))
}

/// Common factor variance under the earlier D-CCA construction:
/// `1 - sqrt(1 - rho^2) = rho^2 / (1 + sqrt(1 - rho^2))`.
pub fn dcca_common_variance(rho: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::InvalidCorrelation(rho));
    }
    Ok(rho * rho / (1.0 + (1.0 - rho * rho).sqrt()))
}

/// D-CCA common factor samples `(z1 + z2) (1 - sqrt((1 - rho) / (1 + rho))) / 2`,
/// kept for side-by-side comparison. `rho = 0` gives the zero row.
pub fn dcca_common_reference(z1: &DVector<f64>, z2: &DVector<f64>, rho: f64) -> Result<DVector<f64>> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::InvalidCorrelation(rho));
    }
    if z1.len() != z2.len() {
        return Err(Error::DimensionMismatch(format!(
            "score rows have {} and {} samples",
            z1.len(),
            z2.len()
        )));
    }
    if rho == 0.0 {
        return Ok(DVector::zeros(z1.len()));
    }
    let weight = (1.0 - ((1.0 - rho) / (1.0 + rho)).sqrt()) / 2.0;
    Ok((z1 + z2) * weight)
}

/// Options for the auxiliary factor block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct AuxOptions {
    pub mode: AuxMode,
    pub seed: u64,
}

/// Full two-view decomposition.
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub system: CanonicalSystem,
    pub aux: AuxiliaryBlock,
    pub factors: FactorSamples,
    pub sources: SourceMatrices,
    /// Common rank actually used (may be below the requested one when a
    /// view's rank collapsed).
    pub rc: usize,
    pub cov_x1: CovEstimate,
    pub cov_x2: CovEstimate,
    pub cov_c1: CovEstimate,
    pub cov_c2: CovEstimate,
    pub cov_d1: CovEstimate,
    pub cov_d2: CovEstimate,
    /// Diagonal entries clipped in each view's distinctive covariance.
    pub clipped_diagonals: [usize; 2],
}

/// Runs CCA on the denoised views and builds every decomposition output.
pub fn decompose(
    x1: &SignalEstimate,
    x2: &SignalEstimate,
    rc: usize,
    options: AuxOptions,
) -> Result<Decomposition> {
    let system = canonical_system(x1, x2)?;
    let max_rc = system.r1().min(system.r2());
    let rc_used = if rc > max_rc {
        log::warn!("common rank reduced from {rc} to {max_rc} after signal ranks collapsed");
        max_rc
    } else {
        rc
    };
    decompose_system(system, x1, x2, rc_used, options)
}

/// Decomposition from an existing canonical system.
pub fn decompose_system(
    system: CanonicalSystem,
    x1: &SignalEstimate,
    x2: &SignalEstimate,
    rc: usize,
    options: AuxOptions,
) -> Result<Decomposition> {
    let aux = generate_auxiliary(rc, system.n(), options.seed, options.mode, &system.z1, &system.z2)?;
    let factors = factor_samples(&system, &aux, rc)?;
    let sources = source_matrices(&system, &factors, rc)?;
    let cov_x1 = signal_covariance(x1);
    let cov_x2 = signal_covariance(x2);
    let cov_c1 = cov_common(&system.b1, &system.rho, rc)?;
    let cov_c2 = cov_common(&system.b2, &system.rho, rc)?;
    let (cov_d1, clipped1) = cov_distinct(&cov_x1, &cov_c1)?;
    let (cov_d2, clipped2) = cov_distinct(&cov_x2, &cov_c2)?;
    Ok(Decomposition {
        system,
        aux,
        factors,
        sources,
        rc,
        cov_x1,
        cov_x2,
        cov_c1,
        cov_c2,
        cov_d1,
        cov_d2,
        clipped_diagonals: [clipped1, clipped2],
    })
}
