//! Reference computations shared by the integration tests. Everything here
//! uses plain loops so it does not lean on the library's linear algebra.
#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use dcdlf::linalg::RankTriple;
use dcdlf::pipeline::PipelineResult;
use dcdlf::simulate::FactorModelSpec;

pub type Dense = Vec<Vec<f64>>;

pub fn to_dense(m: &DMatrix<f64>) -> Dense {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

/// `a * b^T / scale` by triple loop.
pub fn outer_moment(a: &Dense, b: &Dense, scale: f64) -> Dense {
    a.iter()
        .map(|ra| b.iter().map(|rb| ra.iter().zip(rb).map(|(x, y)| x * y).sum::<f64>() / scale).collect())
        .collect()
}

pub fn matmul(a: &Dense, b: &Dense) -> Dense {
    let inner = b.len();
    let cols = b.first().map_or(0, Vec::len);
    a.iter()
        .map(|ra| (0..cols).map(|j| (0..inner).map(|k| ra[k] * b[k][j]).sum()).collect())
        .collect()
}

pub fn transpose(a: &Dense) -> Dense {
    let cols = a.first().map_or(0, Vec::len);
    (0..cols).map(|j| a.iter().map(|r| r[j]).collect()).collect()
}

/// Lower-triangular `L` with `L L^T = a`.
pub fn cholesky(a: &Dense) -> Dense {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                l[i][j] = (a[i][i] - s).sqrt();
            } else {
                l[i][j] = (a[i][j] - s) / l[j][j];
            }
        }
    }
    l
}

/// Solves `L X = B` for lower-triangular `L`.
pub fn forward_solve(l: &Dense, b: &Dense) -> Dense {
    let n = l.len();
    let cols = b.first().map_or(0, Vec::len);
    let mut x = vec![vec![0.0; cols]; n];
    for c in 0..cols {
        for i in 0..n {
            let s: f64 = (0..i).map(|k| l[i][k] * x[k][c]).sum();
            x[i][c] = (b[i][c] - s) / l[i][i];
        }
    }
    x
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, descending.
pub fn jacobi_eigenvalues(a: &Dense) -> Vec<f64> {
    let n = a.len();
    let mut m = a.clone();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i][j] * m[i][j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[k][p], m[k][q]);
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[p][k], m[q][k]);
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut values: Vec<f64> = (0..n).map(|i| m[i][i]).collect();
    values.sort_by(|a, b| b.total_cmp(a));
    values
}

/// Canonical correlations of the row spaces of full-row-rank factor
/// matrices `f1` (`r1 x n`) and `f2` (`r2 x n`), from the generalized
/// eigenproblem `S12 S22^{-1} S21 a = rho^2 S11 a` reduced with Cholesky.
pub fn brute_force_cca(f1: &DMatrix<f64>, f2: &DMatrix<f64>) -> Vec<f64> {
    let (a, b) = (to_dense(f1), to_dense(f2));
    let n = f1.ncols() as f64;
    let s11 = outer_moment(&a, &a, n);
    let s22 = outer_moment(&b, &b, n);
    let s12 = outer_moment(&a, &b, n);
    let l1 = cholesky(&s11);
    let l2 = cholesky(&s22);
    // W = L1^{-1} S12 L2^{-T}; K = W W^T
    let left = forward_solve(&l1, &s12);
    let w = transpose(&forward_solve(&l2, &transpose(&left)));
    let k = matmul(&w, &transpose(&w));
    let mut rho: Vec<f64> = jacobi_eigenvalues(&k).into_iter().map(|v| v.max(0.0).sqrt()).collect();
    rho.truncate(f1.nrows().min(f2.nrows()));
    rho
}

/// Largest relative error of `C + D = X` and `cov(c) + cov(d) = cov(x)`
/// over both views.
pub fn additivity_error(r: &PipelineResult) -> f64 {
    let d = &r.decomposition;
    let rel = |diff: DMatrix<f64>, reference: &DMatrix<f64>| {
        let s = reference.norm();
        if s > 0.0 {
            diff.norm() / s
        } else {
            diff.norm()
        }
    };
    [
        rel(&d.sources.c1 + &d.sources.d1 - &r.x1.xhat, &r.x1.xhat),
        rel(&d.sources.c2 + &d.sources.d2 - &r.x2.xhat, &r.x2.xhat),
        rel(&d.cov_c1.matrix + &d.cov_d1.matrix - &d.cov_x1.matrix, &d.cov_x1.matrix),
        rel(&d.cov_c2.matrix + &d.cov_d2.matrix - &d.cov_x2.matrix, &d.cov_x2.matrix),
    ]
    .into_iter()
    .fold(0.0, f64::max)
}

/// A small random factor model and a sample size that keeps the noise
/// estimator well defined.
pub fn random_spec(rng: &mut ChaCha8Rng, noise_sd: f64) -> (FactorModelSpec, usize) {
    let p1 = rng.random_range(4..=12);
    let p2 = rng.random_range(4..=12);
    let r1 = rng.random_range(1..=3);
    let r2 = rng.random_range(1..=3);
    let rc = rng.random_range(0..=r1.min(r2));
    let mut rho: Vec<f64> = (0..rc).map(|_| rng.random_range(0.05..=0.95)).collect();
    rho.sort_by(|a, b| b.total_cmp(a));
    let n = rng.random_range(20..=60);
    let spec = FactorModelSpec {
        p1,
        p2,
        ranks: RankTriple { r1, r2, rc },
        rho,
        loading_scale: 1.0,
        noise_sd,
        seed: rng.random(),
    };
    (spec, n)
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let m = values.len() / 2;
    if values.len() % 2 == 0 {
        (values[m - 1] + values[m]) / 2.0
    } else {
        values[m]
    }
}
