//! End-to-end runs: rank selection, denoising, decomposition, PVE and the
//! files written to an output directory.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use sha2::{Digest, Sha256};

use crate::cca::canonical_system;
use crate::config::{RankRule, RcRule, RunConfig};
use crate::decompose::{decompose, AuxOptions, Decomposition};
use crate::denoise::{soft_threshold_signal, SignalEstimate};
use crate::error::{Error, Result};
use crate::io::{default_names, format_number, load_matrix_csv, write_matrix_csv, write_table_csv, write_text};
use crate::linalg::{validate_view_pair, RankTriple, ThinSvd, ViewMatrix};
use crate::pve::{pve_from_covs, PveTable};
use crate::report::pve_summary_svg;

/// Ratios within this of 1 count as a flat spectrum.
const FLAT_SPECTRUM_TOLERANCE: f64 = 1e-10;

/// Signal rank by the largest ratio of consecutive squared singular values,
/// `argmax over l in [1, min(p, n) / 2] of s_l^2 / s_{l+1}^2`; the first
/// maximiser wins.
pub fn eigengap_rank(singulars: &[f64], p: usize, n: usize, view: usize) -> Result<usize> {
    let upper = (p.min(n) / 2).min(singulars.len().saturating_sub(1));
    let mut best: Option<(usize, f64)> = None;
    for l in 1..=upper {
        let (a, b) = (singulars[l - 1].powi(2), singulars[l].powi(2));
        if a <= 0.0 {
            break;
        }
        let ratio = if b > 0.0 { a / b } else { f64::INFINITY };
        if best.is_none_or(|(_, r)| ratio > r) {
            best = Some((l, ratio));
        }
    }
    match best {
        Some((l, ratio)) if ratio > 1.0 + FLAT_SPECTRUM_TOLERANCE => Ok(l),
        _ => Err(Error::EigengapUndefined { view }),
    }
}

/// Ranks chosen for a run, with the provisional correlations behind a
/// cutoff-based common rank.
#[derive(Debug, Clone, PartialEq)]
pub struct RankChoice {
    pub ranks: RankTriple,
    pub provisional_rho: Option<Vec<f64>>,
}

/// Number of correlations strictly above `cutoff`.
pub fn count_above_cutoff(rho: &[f64], cutoff: f64) -> usize {
    rho.iter().filter(|r| **r > cutoff).count()
}

pub fn choose_ranks(y1: &ViewMatrix, y2: &ViewMatrix, config: &RunConfig) -> Result<RankChoice> {
    config.validate()?;
    let signal_rank = |y: &ViewMatrix, given: Option<usize>, view: usize| -> Result<usize> {
        match config.rank_rule {
            RankRule::Explicit => given.ok_or_else(|| Error::Config(format!("r{view} is required"))),
            RankRule::Eigengap => {
                let svd = ThinSvd::compute(y.values())?;
                let r = eigengap_rank(svd.singulars.as_slice(), y.p(), y.n(), view)?;
                log::info!("eigengap rank of view {view}: {r}");
                Ok(r)
            }
        }
    };
    let r1 = signal_rank(y1, config.r1, 1)?;
    let r2 = signal_rank(y2, config.r2, 2)?;
    match config.rc_rule {
        RcRule::Explicit => {
            let rc = config.rc.ok_or_else(|| Error::Config("rc is required".into()))?;
            Ok(RankChoice {
                ranks: RankTriple::new(r1, r2, rc)?,
                provisional_rho: None,
            })
        }
        RcRule::RhoCutoff => {
            let x1 = soft_threshold_signal(y1, r1)?;
            let x2 = soft_threshold_signal(y2, r2)?;
            let rho: Vec<f64> = canonical_system(&x1, &x2)?.rho.iter().copied().collect();
            let rc = count_above_cutoff(&rho, config.rho_cutoff);
            log::info!("common rank from rho_cutoff {}: {rc}", config.rho_cutoff);
            Ok(RankChoice {
                ranks: RankTriple::new(r1, r2, rc)?,
                provisional_rho: Some(rho),
            })
        }
    }
}

/// In-memory results of one run.
#[derive(Debug, Clone)]
pub struct PipelineResult {
    pub x1: SignalEstimate,
    pub x2: SignalEstimate,
    pub decomposition: Decomposition,
    pub pve1: PveTable,
    pub pve2: PveTable,
}

/// Denoises both views, decomposes them and computes the PVE tables.
pub fn run_decomposition(
    y1: &ViewMatrix,
    y2: &ViewMatrix,
    ranks: RankTriple,
    aux: AuxOptions,
) -> Result<PipelineResult> {
    let pair = validate_view_pair(y1.clone(), y2.clone())?;
    let ranks = RankTriple::new(ranks.r1, ranks.r2, ranks.rc)?;
    ranks.check_dims(&pair.dims)?;
    let x1 = soft_threshold_signal(y1, ranks.r1)?;
    let x2 = soft_threshold_signal(y2, ranks.r2)?;
    let decomposition = decompose(&x1, &x2, ranks.rc, aux)?;
    let pve1 = pve_from_covs(&decomposition.cov_x1, &decomposition.cov_c1, &decomposition.cov_d1)?;
    let pve2 = pve_from_covs(&decomposition.cov_x2, &decomposition.cov_c2, &decomposition.cov_d2)?;
    Ok(PipelineResult {
        x1,
        x2,
        decomposition,
        pve1,
        pve2,
    })
}

/// What a completed run produced.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub choice: RankChoice,
    pub result: PipelineResult,
    pub files: Vec<PathBuf>,
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn flag(b: bool) -> String {
    if b { "1" } else { "0" }.to_string()
}

fn pve_rows(names: &[String], t: &PveTable) -> Vec<Vec<String>> {
    names
        .iter()
        .enumerate()
        .map(|(i, name)| {
            vec![
                name.clone(),
                format_number(t.variable_pve_c[i]),
                format_number(t.variable_pve_d[i]),
                format_number(t.weights[i]),
                flag(t.zero_variance[i]),
            ]
        })
        .collect()
}

fn manifest(config: &RunConfig, choice: &RankChoice, result: &PipelineResult, digests: [&str; 2]) -> String {
    let d = &result.decomposition;
    let opt = |v: Option<usize>| v.map_or_else(|| "none".to_string(), |v| v.to_string());
    let mut m = String::new();
    let mut line = |k: &str, v: String| {
        let _ = writeln!(m, "{k}={v}");
    };
    line("software", env!("CARGO_PKG_NAME").to_string());
    line("version", env!("CARGO_PKG_VERSION").to_string());
    line("view1", config.view1_path.display().to_string());
    line("view2", config.view2_path.display().to_string());
    line("view1_sha256", digests[0].to_string());
    line("view2_sha256", digests[1].to_string());
    line("p1", result.x1.p().to_string());
    line("p2", result.x2.p().to_string());
    line("n", result.x1.n().to_string());
    line("rank_rule", config.rank_rule.to_string());
    line("rc_rule", config.rc_rule.to_string());
    line("rho_cutoff", config.rho_cutoff.to_string());
    line("r1_given", opt(config.r1));
    line("r2_given", opt(config.r2));
    line("rc_given", opt(config.rc));
    line("r1_chosen", choice.ranks.r1.to_string());
    line("r2_chosen", choice.ranks.r2.to_string());
    line("rc_chosen", choice.ranks.rc.to_string());
    line(
        "provisional_rho",
        choice.provisional_rho.as_ref().map_or_else(
            || "none".to_string(),
            |r| r.iter().map(|v| format_number(*v)).collect::<Vec<_>>().join(";"),
        ),
    );
    line("r1_signal", result.x1.rank.to_string());
    line("r2_signal", result.x2.rank.to_string());
    line("rc_used", d.rc.to_string());
    line("tau_1", format_number(result.x1.tau));
    line("tau_2", format_number(result.x2.tau));
    line("aux_mode", d.aux.mode.to_string());
    line("seed", d.aux.seed.to_string());
    line("clipped_diagonals_1", d.clipped_diagonals[0].to_string());
    line("clipped_diagonals_2", d.clipped_diagonals[1].to_string());
    line(
        "zero_variance_1",
        result.pve1.zero_variance.iter().filter(|z| **z).count().to_string(),
    );
    line(
        "zero_variance_2",
        result.pve2.zero_variance.iter().filter(|z| **z).count().to_string(),
    );
    m
}

/// Loads the views named in `config`, runs the decomposition and writes
/// every artifact into `config.out_dir`.
pub fn run_pipeline(config: &RunConfig) -> Result<RunSummary> {
    config.validate()?;
    let v1 = load_matrix_csv(&config.view1_path)?;
    let v2 = load_matrix_csv(&config.view2_path)?;
    let pair = validate_view_pair(v1.view.clone(), v2.view.clone())?;
    let choice = choose_ranks(&pair.y1, &pair.y2, config)?;
    let aux = AuxOptions {
        mode: config.aux_mode,
        seed: config.seed,
    };
    let result = run_decomposition(&pair.y1, &pair.y2, choice.ranks, aux)?;
    let digests = [sha256_file(&config.view1_path)?, sha256_file(&config.view2_path)?];

    let out = &config.out_dir;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let n = pair.dims.n;
    let samples = v1
        .sample_names
        .clone()
        .or_else(|| v2.sample_names.clone())
        .unwrap_or_else(|| default_names("s", n));
    let names = [v1.names(), v2.names()];
    let d = &result.decomposition;
    let mut files = Vec::new();
    let mut matrix = |file: &str, m: &DMatrix<f64>, corner: &str, rows: &[String], cols: &[String]| -> Result<()> {
        let path = out.join(file);
        write_matrix_csv(&path, m, corner, rows, cols)?;
        files.push(path);
        Ok(())
    };

    let xs = [&result.x1.xhat, &result.x2.xhat];
    let cs = [&d.sources.c1, &d.sources.c2];
    let ds = [&d.sources.d1, &d.sources.d2];
    let ccs = [&d.cov_c1.matrix, &d.cov_c2.matrix];
    let cds = [&d.cov_d1.matrix, &d.cov_d2.matrix];
    for k in 0..2 {
        let v = k + 1;
        matrix(&format!("xhat_{v}.csv"), xs[k], "variable", &names[k], &samples)?;
        matrix(&format!("chat_{v}.csv"), cs[k], "variable", &names[k], &samples)?;
        matrix(&format!("dhat_{v}.csv"), ds[k], "variable", &names[k], &samples)?;
        matrix(&format!("cov_c_{v}.csv"), ccs[k], "variable", &names[k], &names[k])?;
        matrix(&format!("cov_d_{v}.csv"), cds[k], "variable", &names[k], &names[k])?;
    }
    matrix(
        "c_factors.csv",
        &d.factors.common,
        "factor",
        &default_names("c", d.factors.common.nrows()),
        &samples,
    )?;
    matrix(
        "d_factors_1.csv",
        &d.factors.distinct1,
        "factor",
        &default_names("d", d.factors.distinct1.nrows()),
        &samples,
    )?;
    matrix(
        "d_factors_2.csv",
        &d.factors.distinct2,
        "factor",
        &default_names("d", d.factors.distinct2.nrows()),
        &samples,
    )?;

    let rho_rows: Vec<Vec<String>> = d
        .system
        .rho
        .iter()
        .enumerate()
        .map(|(l, r)| vec![(l + 1).to_string(), format_number(*r)])
        .collect();
    let tables: [(&str, &[&str], Vec<Vec<String>>); 4] = [
        ("canonical_correlations.csv", &["component", "rho"], rho_rows),
        (
            "pve_variables_1.csv",
            &["variable", "pve_c", "pve_d", "weight", "zero_variance"],
            pve_rows(&names[0], &result.pve1),
        ),
        (
            "pve_variables_2.csv",
            &["variable", "pve_c", "pve_d", "weight", "zero_variance"],
            pve_rows(&names[1], &result.pve2),
        ),
        (
            "pve_views.csv",
            &["view", "pve_c", "pve_d"],
            [&result.pve1, &result.pve2]
                .iter()
                .enumerate()
                .map(|(k, t)| vec![(k + 1).to_string(), format_number(t.view_pve_c), format_number(t.view_pve_d)])
                .collect(),
        ),
    ];
    for (file, header, rows) in tables {
        let path = out.join(file);
        write_table_csv(&path, header, &rows)?;
        files.push(path);
    }

    let svg = pve_summary_svg(
        [result.pve1.view_pve_c, result.pve2.view_pve_c],
        [result.pve1.view_pve_d, result.pve2.view_pve_d],
        d.system.rho.as_slice(),
    );
    let path = out.join("pve_summary.svg");
    write_text(&path, &svg)?;
    files.push(path);

    let path = out.join("manifest.txt");
    write_text(&path, &manifest(config, &choice, &result, [&digests[0], &digests[1]]))?;
    files.push(path);

    Ok(RunSummary { choice, result, files })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigengap_picks_largest_ratio() {
        let s = [10.0, 9.0, 1.0, 0.9, 0.85, 0.8, 0.75, 0.7];
        assert_eq!(eigengap_rank(&s, 8, 20, 1).unwrap(), 2);
    }

    #[test]
    fn eigengap_range_is_bounded() {
        // the gap at l = 3 lies beyond min(p, n) / 2 = 2
        let s = [3.0, 2.0, 1.9, 0.1];
        assert_eq!(eigengap_rank(&s, 4, 10, 1).unwrap(), 1);
    }

    #[test]
    fn eigengap_ties_go_to_first() {
        let s = [4.0, 2.0, 1.0, 0.5, 0.25, 0.125];
        assert_eq!(eigengap_rank(&s, 6, 6, 1).unwrap(), 1);
    }

    #[test]
    fn flat_spectrum_is_rejected() {
        let s = [1.0; 6];
        assert!(matches!(eigengap_rank(&s, 6, 10, 2), Err(Error::EigengapUndefined { view: 2 })));
        assert!(matches!(eigengap_rank(&[0.0; 4], 4, 10, 1), Err(Error::EigengapUndefined { view: 1 })));
    }

    #[test]
    fn exact_rank_has_infinite_gap() {
        let s = [5.0, 2.0, 0.0, 0.0];
        assert_eq!(eigengap_rank(&s, 4, 4, 1).unwrap(), 2);
    }

    #[test]
    fn cutoff_count() {
        assert_eq!(count_above_cutoff(&[0.9, 0.4, 0.01], 0.05), 2);
        assert_eq!(count_above_cutoff(&[0.05], 0.05), 0);
    }
}
