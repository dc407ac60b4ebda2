//! Synthetic two-view data from a latent factor model with known common and
//! distinctive structure.
//!
//! Draw order from a single ChaCha8 stream seeded with `spec.seed`: loadings
//! of view 1 then view 2 (row-major), the shared Gaussians, the view-1 and
//! view-2 Gaussians of the correlated pairs, the extra factors of view 1 then
//! view 2, and finally the noise of view 1 then view 2. Replicate `i` of an
//! experiment uses seed `spec.seed + i`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{parse_value, KeyValues};
use crate::decompose::{gaussian_block, Decomposition};
use crate::denoise::{CovEstimate, SignalEstimate};
use crate::error::{Error, Result};
use crate::linalg::{relative_frobenius_error, residualize, symmetrize, weighted_gram, RankTriple, ViewMatrix};
use crate::population::{model_from_loadings, PopulationModel};
use crate::pve::PveTable;

/// Description of a synthetic factor model.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorModelSpec {
    pub p1: usize,
    pub p2: usize,
    pub ranks: RankTriple,
    /// Canonical correlations of the common factor pairs, descending in (0, 1].
    pub rho: Vec<f64>,
    /// Loadings are drawn uniformly on `[-loading_scale, loading_scale]`.
    pub loading_scale: f64,
    pub noise_sd: f64,
    pub seed: u64,
}

impl FactorModelSpec {
    pub fn validate(&self) -> Result<()> {
        let RankTriple { r1, r2, rc } = self.ranks;
        RankTriple::new(r1, r2, rc).map_err(|e| Error::InvalidSpec(e.to_string()))?;
        if self.rho.len() != rc {
            return Err(Error::InvalidSpec(format!(
                "{} canonical correlations given for rc = {rc}",
                self.rho.len()
            )));
        }
        if self.rho.iter().any(|r| !(*r > 0.0 && *r <= 1.0)) {
            return Err(Error::InvalidSpec("canonical correlations must lie in (0, 1]".into()));
        }
        if self.rho.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::InvalidSpec("canonical correlations must be sorted descending".into()));
        }
        if r1 > self.p1 || r2 > self.p2 {
            return Err(Error::InvalidSpec(format!(
                "ranks ({r1}, {r2}) exceed dimensions ({}, {})",
                self.p1, self.p2
            )));
        }
        if !(self.loading_scale > 0.0 && self.loading_scale.is_finite()) {
            return Err(Error::InvalidSpec("loading_scale must be positive".into()));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(Error::InvalidSpec("noise_sd must be non-negative".into()));
        }
        Ok(())
    }

    /// Key-value form, one `key=value` per line.
    pub fn to_config_string(&self) -> String {
        let rho: Vec<String> = self.rho.iter().map(|r| r.to_string()).collect();
        format!(
            "p1={}\np2={}\nr1={}\nr2={}\nrc={}\nrho={}\nloading_scale={}\nnoise_sd={}\nseed={}\n",
            self.p1,
            self.p2,
            self.ranks.r1,
            self.ranks.r2,
            self.ranks.rc,
            rho.join(","),
            self.loading_scale,
            self.noise_sd,
            self.seed
        )
    }

    /// Reads a spec from parsed key-value pairs. `loading_scale` defaults to
    /// 1, `noise_sd` to 0 and `seed` to 0.
    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        let get = |k: &str| kv.get(k).ok_or_else(|| Error::Config(format!("missing key '{k}'")));
        let rc: usize = parse_value("rc", get("rc")?)?;
        let rho = match kv.get("rho") {
            Some(s) if !s.trim().is_empty() => s
                .split(',')
                .map(|t| parse_value::<f64>("rho", t))
                .collect::<Result<Vec<_>>>()?,
            _ => Vec::new(),
        };
        let spec = Self {
            p1: parse_value("p1", get("p1")?)?,
            p2: parse_value("p2", get("p2")?)?,
            ranks: RankTriple {
                r1: parse_value("r1", get("r1")?)?,
                r2: parse_value("r2", get("r2")?)?,
                rc,
            },
            rho,
            loading_scale: kv.get("loading_scale").map(|v| parse_value("loading_scale", v)).transpose()?.unwrap_or(1.0),
            noise_sd: kv.get("noise_sd").map(|v| parse_value("noise_sd", v)).transpose()?.unwrap_or(0.0),
            seed: kv.get("seed").map(|v| parse_value("seed", v)).transpose()?.unwrap_or(0),
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Population model implied by the loadings this spec generates.
    pub fn population_model(&self) -> Result<PopulationModel> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let (b1, b2) = self.draw_loadings(&mut rng);
        model_from_loadings(&b1, &b2, &self.rho)
    }

    fn draw_loadings(&self, rng: &mut ChaCha8Rng) -> (DMatrix<f64>, DMatrix<f64>) {
        let rc = self.ranks.rc;
        let mut make = |p: usize, r: usize| {
            let mut b = DMatrix::zeros(p, r);
            for i in 0..p {
                for j in 0..r {
                    b[(i, j)] = rng.random_range(-self.loading_scale..=self.loading_scale);
                }
            }
            // orthonormalize the common columns, then restore the typical
            // norm of a uniform column, s * sqrt(p / 3)
            let target = self.loading_scale * (p as f64 / 3.0).sqrt();
            let mut basis: Vec<DVector<f64>> = Vec::with_capacity(rc);
            for j in 0..rc {
                let mut v = b.column(j).into_owned();
                residualize(&mut v, &basis);
                let unit = &v / v.norm();
                b.set_column(j, &(&unit * target));
                basis.push(unit);
            }
            b
        };
        let b1 = make(self.p1, self.ranks.r1);
        let b2 = make(self.p2, self.ranks.r2);
        (b1, b2)
    }
}

/// Known structure behind a simulated data set.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub b1: DMatrix<f64>,
    pub b2: DMatrix<f64>,
    /// Latent factor samples (`r_k x n`); the first `rc` rows of each are
    /// the correlated canonical pairs.
    pub f1: DMatrix<f64>,
    pub f2: DMatrix<f64>,
    pub x1: DMatrix<f64>,
    pub x2: DMatrix<f64>,
    /// Common-source matrices from the real part of each common factor.
    pub c1: DMatrix<f64>,
    pub c2: DMatrix<f64>,
    pub d1: DMatrix<f64>,
    pub d2: DMatrix<f64>,
    pub cov_x1: DMatrix<f64>,
    pub cov_x2: DMatrix<f64>,
    pub cov_c1: DMatrix<f64>,
    pub cov_c2: DMatrix<f64>,
    pub cov_d1: DMatrix<f64>,
    pub cov_d2: DMatrix<f64>,
    pub rho: Vec<f64>,
}

impl GroundTruth {
    pub fn view_pve_c(&self) -> [f64; 2] {
        let ratio = |c: &DMatrix<f64>, x: &DMatrix<f64>| {
            let t = x.trace();
            if t > 0.0 {
                c.trace() / t
            } else {
                0.0
            }
        };
        [ratio(&self.cov_c1, &self.cov_x1), ratio(&self.cov_c2, &self.cov_x2)]
    }
}

#[derive(Debug, Clone)]
pub struct SimulatedData {
    pub y1: ViewMatrix,
    pub y2: ViewMatrix,
    pub truth: GroundTruth,
}

/// Draws `n` samples from the factor model described by `spec`.
pub fn generate(spec: &FactorModelSpec, n: usize) -> Result<SimulatedData> {
    spec.validate()?;
    if n < 2 {
        return Err(Error::InvalidSpec(format!("n = {n} is below 2")));
    }
    for (view, p, r) in [(1, spec.p1, spec.ranks.r1), (2, spec.p2, spec.ranks.r2)] {
        let denominator = (n * p) as i64 - (n * r) as i64 - (p * r) as i64;
        if denominator <= 0 {
            return Err(Error::InvalidSpec(format!(
                "view {view}: n*p - n*r - p*r = {denominator} must be positive for denoising"
            )));
        }
    }
    let RankTriple { r1, r2, rc } = spec.ranks;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (b1, b2) = spec.draw_loadings(&mut rng);

    let shared = gaussian_block(&mut rng, rc, n);
    let own1 = gaussian_block(&mut rng, rc, n);
    let own2 = gaussian_block(&mut rng, rc, n);
    let extra1 = gaussian_block(&mut rng, r1 - rc, n);
    let extra2 = gaussian_block(&mut rng, r2 - rc, n);

    let mut f1 = DMatrix::zeros(r1, n);
    let mut f2 = DMatrix::zeros(r2, n);
    let mut c_re = DMatrix::zeros(rc, n);
    for (l, rho) in spec.rho.iter().enumerate() {
        let (a, b) = (rho.sqrt(), (1.0 - rho).sqrt());
        let z1 = shared.row(l) * a + own1.row(l) * b;
        let z2 = shared.row(l) * a + own2.row(l) * b;
        c_re.set_row(l, &((&z1 + &z2) * (rho / (1.0 + rho))));
        f1.set_row(l, &z1);
        f2.set_row(l, &z2);
    }
    f1.rows_mut(rc, r1 - rc).copy_from(&extra1);
    f2.rows_mut(rc, r2 - rc).copy_from(&extra2);

    let x1 = &b1 * &f1;
    let x2 = &b2 * &f2;
    let (c1, c2) = if rc == 0 {
        (DMatrix::zeros(spec.p1, n), DMatrix::zeros(spec.p2, n))
    } else {
        (b1.columns(0, rc) * &c_re, b2.columns(0, rc) * &c_re)
    };
    let d1 = &x1 - &c1;
    let d2 = &x2 - &c2;

    let noise1 = gaussian_block(&mut rng, spec.p1, n) * spec.noise_sd;
    let noise2 = gaussian_block(&mut rng, spec.p2, n) * spec.noise_sd;
    let y1 = ViewMatrix::new(&x1 + noise1)?;
    let y2 = ViewMatrix::new(&x2 + noise2)?;

    let cov_x1 = weighted_gram(&b1, &vec![1.0; r1]);
    let cov_x2 = weighted_gram(&b2, &vec![1.0; r2]);
    let (cov_c1, cov_c2) = if rc == 0 {
        (DMatrix::zeros(spec.p1, spec.p1), DMatrix::zeros(spec.p2, spec.p2))
    } else {
        (
            weighted_gram(&b1.columns(0, rc).into_owned(), &spec.rho),
            weighted_gram(&b2.columns(0, rc).into_owned(), &spec.rho),
        )
    };
    let cov_d1 = symmetrize(&(&cov_x1 - &cov_c1));
    let cov_d2 = symmetrize(&(&cov_x2 - &cov_c2));

    Ok(SimulatedData {
        y1,
        y2,
        truth: GroundTruth {
            b1,
            b2,
            f1,
            f2,
            x1,
            x2,
            c1,
            c2,
            d1,
            d2,
            cov_x1,
            cov_x2,
            cov_c1,
            cov_c2,
            cov_d1,
            cov_d2,
            rho: spec.rho.clone(),
        },
    })
}

/// Recovery errors of an estimated decomposition against ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryMetrics {
    /// Relative Frobenius error of the common covariance, per view.
    pub cov_c: [f64; 2],
    pub cov_d: [f64; 2],
    /// Relative Frobenius error of the denoised signal against `X_k`.
    pub signal: [f64; 2],
    /// Largest absolute error over the true canonical correlations; a
    /// missing estimate counts as 0.
    pub rho: f64,
    /// Absolute error of the view-level common PVE.
    pub view_pve_c: [f64; 2],
}

impl RecoveryMetrics {
    pub fn as_map(&self) -> BTreeMap<&'static str, f64> {
        BTreeMap::from([
            ("cov_c_1", self.cov_c[0]),
            ("cov_c_2", self.cov_c[1]),
            ("cov_d_1", self.cov_d[0]),
            ("cov_d_2", self.cov_d[1]),
            ("signal_1", self.signal[0]),
            ("signal_2", self.signal[1]),
            ("rho", self.rho),
            ("view_pve_c_1", self.view_pve_c[0]),
            ("view_pve_c_2", self.view_pve_c[1]),
        ])
    }
}

/// Estimated quantities compared by [`recovery_metrics`].
#[derive(Debug, Clone, Copy)]
pub struct EstimateView<'a> {
    pub xhat: [&'a DMatrix<f64>; 2],
    pub cov_c: [&'a CovEstimate; 2],
    pub cov_d: [&'a CovEstimate; 2],
    pub rho: &'a DVector<f64>,
    pub pve: [&'a PveTable; 2],
}

impl<'a> EstimateView<'a> {
    pub fn new(
        x1: &'a SignalEstimate,
        x2: &'a SignalEstimate,
        decomposition: &'a Decomposition,
        pve: [&'a PveTable; 2],
    ) -> Self {
        Self {
            xhat: [&x1.xhat, &x2.xhat],
            cov_c: [&decomposition.cov_c1, &decomposition.cov_c2],
            cov_d: [&decomposition.cov_d1, &decomposition.cov_d2],
            rho: &decomposition.system.rho,
            pve,
        }
    }
}

pub fn recovery_metrics(truth: &GroundTruth, est: &EstimateView<'_>) -> Result<RecoveryMetrics> {
    let pairs = [
        (est.xhat[0], &truth.x1),
        (est.xhat[1], &truth.x2),
        (&est.cov_c[0].matrix, &truth.cov_c1),
        (&est.cov_c[1].matrix, &truth.cov_c2),
        (&est.cov_d[0].matrix, &truth.cov_d1),
        (&est.cov_d[1].matrix, &truth.cov_d2),
    ];
    for (a, b) in pairs {
        if a.shape() != b.shape() {
            return Err(Error::DimensionMismatch(format!(
                "estimate is {:?}, truth is {:?}",
                a.shape(),
                b.shape()
            )));
        }
    }
    let rho = truth
        .rho
        .iter()
        .enumerate()
        .map(|(l, r)| (est.rho.get(l).copied().unwrap_or(0.0) - r).abs())
        .fold(0.0, f64::max);
    let truth_pve = truth.view_pve_c();
    Ok(RecoveryMetrics {
        cov_c: [
            relative_frobenius_error(&est.cov_c[0].matrix, &truth.cov_c1),
            relative_frobenius_error(&est.cov_c[1].matrix, &truth.cov_c2),
        ],
        cov_d: [
            relative_frobenius_error(&est.cov_d[0].matrix, &truth.cov_d1),
            relative_frobenius_error(&est.cov_d[1].matrix, &truth.cov_d2),
        ],
        signal: [
            relative_frobenius_error(est.xhat[0], &truth.x1),
            relative_frobenius_error(est.xhat[1], &truth.x2),
        ],
        rho,
        view_pve_c: [
            (est.pve[0].view_pve_c - truth_pve[0]).abs(),
            (est.pve[1].view_pve_c - truth_pve[1]).abs(),
        ],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(p: usize, ranks: (usize, usize, usize), rho: &[f64], noise_sd: f64) -> FactorModelSpec {
        FactorModelSpec {
            p1: p,
            p2: p,
            ranks: RankTriple {
                r1: ranks.0,
                r2: ranks.1,
                rc: ranks.2,
            },
            rho: rho.to_vec(),
            loading_scale: 1.0,
            noise_sd,
            seed: 11,
        }
    }

    fn sample_corr(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    #[test]
    fn generated_pairs_have_target_correlation() {
        let s = spec(100, (3, 3, 2), &[0.8, 0.5], 0.5);
        let data = generate(&s, 1000).unwrap();
        for (l, rho) in s.rho.iter().enumerate() {
            let a: Vec<f64> = data.truth.f1.row(l).iter().copied().collect();
            let b: Vec<f64> = data.truth.f2.row(l).iter().copied().collect();
            assert!((sample_corr(&a, &b) - rho).abs() < 0.08);
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let s = spec(10, (2, 2, 1), &[0.6], 0.1);
        let a = generate(&s, 30).unwrap();
        let b = generate(&s, 30).unwrap();
        assert_eq!(a.y1, b.y1);
        assert_eq!(a.y2, b.y2);
        let mut other = s.clone();
        other.seed += 1;
        assert_ne!(generate(&other, 30).unwrap().y1, a.y1);
    }

    #[test]
    fn noiseless_views_equal_signals() {
        let s = spec(8, (2, 2, 0), &[], 0.0);
        let data = generate(&s, 20).unwrap();
        assert_eq!(data.y1.values(), &data.truth.x1);
        assert_eq!(data.truth.cov_c1, DMatrix::zeros(8, 8));
    }

    #[test]
    fn truth_is_additive() {
        let s = spec(12, (3, 2, 2), &[0.9, 0.4], 0.2);
        let data = generate(&s, 50).unwrap();
        let t = &data.truth;
        assert!((&t.c1 + &t.d1 - &t.x1).amax() < 1e-12);
        assert!((&t.cov_c2 + &t.cov_d2 - &t.cov_x2).amax() < 1e-12);
    }

    #[test]
    fn common_loadings_are_orthogonal() {
        let s = spec(20, (3, 3, 2), &[0.8, 0.5], 0.0);
        let data = generate(&s, 10).unwrap();
        let g = data.truth.b1.columns(0, 2).transpose() * data.truth.b1.columns(0, 2);
        assert!(g[(0, 1)].abs() < 1e-12);
        assert!((g[(0, 0)] - 20.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_specs() {
        assert!(spec(10, (2, 2, 3), &[0.5, 0.5, 0.5], 0.0).validate().is_err());
        assert!(spec(10, (2, 2, 2), &[0.5], 0.0).validate().is_err());
        assert!(spec(10, (2, 2, 2), &[0.4, 0.5], 0.0).validate().is_err());
        assert!(spec(10, (2, 2, 1), &[0.0], 0.0).validate().is_err());
        assert!(spec(10, (2, 2, 1), &[1.2], 0.0).validate().is_err());
        assert!(spec(10, (11, 2, 1), &[0.5], 0.0).validate().is_err());
        // 3*4 - 4 - 3 > 0 but 3*4 - 8 - 6 < 0
        assert!(generate(&spec(3, (1, 1, 1), &[0.5], 0.0), 4).is_ok());
        assert!(matches!(
            generate(&spec(3, (2, 2, 1), &[0.5], 0.0), 4),
            Err(Error::InvalidSpec(_))
        ));
    }

    #[test]
    fn config_round_trip() {
        let s = spec(10, (3, 2, 2), &[0.8, 0.25], 0.5);
        let kv = crate::config::parse_key_values(&s.to_config_string()).unwrap();
        assert_eq!(FactorModelSpec::from_key_values(&kv).unwrap(), s);
    }

    #[test]
    fn metrics_vanish_on_truth() {
        let s = spec(10, (2, 2, 1), &[0.7], 0.0);
        let t = generate(&s, 40).unwrap().truth;
        let c1 = CovEstimate::new(t.cov_c1.clone(), 1);
        let c2 = CovEstimate::new(t.cov_c2.clone(), 1);
        let d1 = CovEstimate::new(t.cov_d1.clone(), 2);
        let d2 = CovEstimate::new(t.cov_d2.clone(), 2);
        let x1 = CovEstimate::new(t.cov_x1.clone(), 2);
        let x2 = CovEstimate::new(t.cov_x2.clone(), 2);
        let pve1 = crate::pve::pve_from_covs(&x1, &c1, &d1).unwrap();
        let pve2 = crate::pve::pve_from_covs(&x2, &c2, &d2).unwrap();
        let rho = DVector::from_row_slice(&t.rho);
        let est = EstimateView {
            xhat: [&t.x1, &t.x2],
            cov_c: [&c1, &c2],
            cov_d: [&d1, &d2],
            rho: &rho,
            pve: [&pve1, &pve2],
        };
        let m = recovery_metrics(&t, &est).unwrap();
        assert!(m.as_map().values().all(|v| *v < 1e-12));

        let zero = DMatrix::zeros(10, 40);
        let est = EstimateView {
            xhat: [&zero, &zero],
            ..est
        };
        let m = recovery_metrics(&t, &est).unwrap();
        assert!((m.signal[0] - 1.0).abs() < 1e-15);
    }
}
