use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;

use dcdlf::check::check_output_dir;
use dcdlf::config::{read_key_values, KeyValues, RunConfig};
use dcdlf::io::{default_names, format_number, read_csv_matrix, write_matrix_csv, write_table_csv, write_text};
use dcdlf::pipeline::run_pipeline;
use dcdlf::population::{population_decomposition, verify_tri_orthogonality, PopulationModel};
use dcdlf::pve::PveTable;
use dcdlf::simulate::{generate, FactorModelSpec};
use dcdlf::{Error, Result};

#[derive(Parser)]
#[command(name = "dcdlf", version, about = "Common and distinctive decomposition of two data views")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decompose two CSV views and write all artifacts.
    Decompose(DecomposeArgs),
    /// Simulate two views from a factor model.
    Simulate(SimulateArgs),
    /// Population-level decomposition from covariance blocks.
    Oracle(OracleArgs),
    /// Verify the invariants of a decompose output directory.
    Check(CheckArgs),
}

#[derive(Args)]
struct DecomposeArgs {
    /// key=value file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    view1: Option<PathBuf>,
    #[arg(long)]
    view2: Option<PathBuf>,
    #[arg(long)]
    r1: Option<usize>,
    #[arg(long)]
    r2: Option<usize>,
    #[arg(long)]
    rc: Option<usize>,
    /// explicit | eigengap
    #[arg(long)]
    rank_rule: Option<String>,
    /// explicit | rho_cutoff
    #[arg(long)]
    rc_rule: Option<String>,
    #[arg(long)]
    rho_cutoff: Option<f64>,
    /// raw | projected
    #[arg(long)]
    aux_mode: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// key=value file with p1, p2, r1, r2, rc, rho, loading_scale, noise_sd,
    /// seed and n; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    p1: Option<usize>,
    #[arg(long)]
    p2: Option<usize>,
    #[arg(long)]
    r1: Option<usize>,
    #[arg(long)]
    r2: Option<usize>,
    #[arg(long)]
    rc: Option<usize>,
    /// Comma-separated canonical correlations.
    #[arg(long)]
    rho: Option<String>,
    #[arg(long)]
    loading_scale: Option<f64>,
    #[arg(long)]
    noise_sd: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    sigma1: PathBuf,
    #[arg(long)]
    sigma2: PathBuf,
    #[arg(long)]
    sigma12: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CheckArgs {
    /// Output directory of a decompose run.
    dir: PathBuf,
}

fn overlay(kv: &mut KeyValues, key: &str, value: Option<String>) {
    if let Some(v) = value {
        kv.insert(key.to_string(), v);
    }
}

fn base_values(path: Option<&Path>) -> Result<KeyValues> {
    path.map(read_key_values).transpose().map(Option::unwrap_or_default)
}

fn decompose(args: DecomposeArgs) -> Result<()> {
    let mut kv = base_values(args.config.as_deref())?;
    let path = |p: Option<PathBuf>| p.map(|p| p.display().to_string());
    overlay(&mut kv, "view1", path(args.view1));
    overlay(&mut kv, "view2", path(args.view2));
    overlay(&mut kv, "r1", args.r1.map(|v| v.to_string()));
    overlay(&mut kv, "r2", args.r2.map(|v| v.to_string()));
    overlay(&mut kv, "rc", args.rc.map(|v| v.to_string()));
    overlay(&mut kv, "rank_rule", args.rank_rule);
    overlay(&mut kv, "rc_rule", args.rc_rule);
    overlay(&mut kv, "rho_cutoff", args.rho_cutoff.map(|v| v.to_string()));
    overlay(&mut kv, "aux_mode", args.aux_mode);
    overlay(&mut kv, "seed", args.seed.map(|v| v.to_string()));
    overlay(&mut kv, "out", path(args.out));
    let config = RunConfig::from_key_values(&kv)?;
    let summary = run_pipeline(&config)?;
    let r = summary.result.decomposition.system.rho.iter().map(|v| format!("{v:.4}"));
    println!(
        "ranks ({}, {}, {}); canonical correlations [{}]; wrote {} files to {}",
        summary.result.x1.rank,
        summary.result.x2.rank,
        summary.result.decomposition.rc,
        r.collect::<Vec<_>>().join(", "),
        summary.files.len(),
        config.out_dir.display()
    );
    Ok(())
}

fn write_plain(dir: &Path, file: &str, m: &DMatrix<f64>, row_prefix: &str, col_prefix: &str) -> Result<()> {
    write_matrix_csv(
        &dir.join(file),
        m,
        "name",
        &default_names(row_prefix, m.nrows()),
        &default_names(col_prefix, m.ncols()),
    )
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let mut kv = base_values(args.config.as_deref())?;
    let known = ["p1", "p2", "r1", "r2", "rc", "rho", "loading_scale", "noise_sd", "seed", "n"];
    if let Some(k) = kv.keys().find(|k| !known.contains(&k.as_str())) {
        return Err(Error::Config(format!("unknown key '{k}'")));
    }
    overlay(&mut kv, "p1", args.p1.map(|v| v.to_string()));
    overlay(&mut kv, "p2", args.p2.map(|v| v.to_string()));
    overlay(&mut kv, "r1", args.r1.map(|v| v.to_string()));
    overlay(&mut kv, "r2", args.r2.map(|v| v.to_string()));
    overlay(&mut kv, "rc", args.rc.map(|v| v.to_string()));
    overlay(&mut kv, "rho", args.rho);
    overlay(&mut kv, "loading_scale", args.loading_scale.map(|v| v.to_string()));
    overlay(&mut kv, "noise_sd", args.noise_sd.map(|v| v.to_string()));
    overlay(&mut kv, "seed", args.seed.map(|v| v.to_string()));
    overlay(&mut kv, "n", args.n.map(|v| v.to_string()));
    let n: usize = dcdlf::config::parse_value("n", kv.get("n").ok_or_else(|| Error::Config("missing key 'n'".into()))?)?;
    let spec = FactorModelSpec::from_key_values(&kv)?;
    let data = generate(&spec, n)?;
    let out = &args.out;
    std::fs::create_dir_all(out).map_err(|e| Error::Io {
        path: out.clone(),
        source: e,
    })?;
    let t = &data.truth;
    write_plain(out, "y_1.csv", data.y1.values(), "v", "s")?;
    write_plain(out, "y_2.csv", data.y2.values(), "v", "s")?;
    let matrices: [(&str, &DMatrix<f64>, &str, &str); 16] = [
        ("x_1.csv", &t.x1, "v", "s"),
        ("x_2.csv", &t.x2, "v", "s"),
        ("c_1.csv", &t.c1, "v", "s"),
        ("c_2.csv", &t.c2, "v", "s"),
        ("d_1.csv", &t.d1, "v", "s"),
        ("d_2.csv", &t.d2, "v", "s"),
        ("factors_1.csv", &t.f1, "z", "s"),
        ("factors_2.csv", &t.f2, "z", "s"),
        ("loadings_1.csv", &t.b1, "v", "z"),
        ("loadings_2.csv", &t.b2, "v", "z"),
        ("sigma_1.csv", &t.cov_x1, "v", "v"),
        ("sigma_2.csv", &t.cov_x2, "v", "v"),
        ("cov_c_1.csv", &t.cov_c1, "v", "v"),
        ("cov_c_2.csv", &t.cov_c2, "v", "v"),
        ("cov_d_1.csv", &t.cov_d1, "v", "v"),
        ("cov_d_2.csv", &t.cov_d2, "v", "v"),
    ];
    for (file, m, rp, cp) in matrices {
        write_plain(out, file, m, rp, cp)?;
    }
    let model = spec.population_model()?;
    write_plain(out, "sigma_12.csv", &model.sigma12, "v", "v")?;
    write_text(&out.join("spec.txt"), &format!("{}n={n}\n", spec.to_config_string()))?;
    println!("wrote simulated views ({} and {} variables, {n} samples) to {}", spec.p1, spec.p2, out.display());
    Ok(())
}

fn pve_table_rows(t: &PveTable) -> Vec<Vec<String>> {
    (0..t.p())
        .map(|i| {
            vec![
                format!("v{}", i + 1),
                format_number(t.variable_pve_c[i]),
                format_number(t.variable_pve_d[i]),
                format_number(t.weights[i]),
                if t.zero_variance[i] { "1" } else { "0" }.to_string(),
            ]
        })
        .collect()
}

fn oracle(args: OracleArgs) -> Result<()> {
    let model = PopulationModel::new(
        read_csv_matrix(&args.sigma1)?.values,
        read_csv_matrix(&args.sigma2)?.values,
        read_csv_matrix(&args.sigma12)?.values,
    )?;
    let pop = population_decomposition(&model)?;
    let report = verify_tri_orthogonality(&model)?;
    let out = &args.out;
    std::fs::create_dir_all(out).map_err(|e| Error::Io {
        path: out.clone(),
        source: e,
    })?;
    let rows: Vec<Vec<String>> = pop
        .cca
        .rho
        .iter()
        .enumerate()
        .map(|(l, r)| vec![(l + 1).to_string(), format_number(*r)])
        .collect();
    write_table_csv(&out.join("canonical_correlations.csv"), &["component", "rho"], &rows)?;
    for (file, m) in [
        ("cov_c_1.csv", &pop.cov_c1.matrix),
        ("cov_c_2.csv", &pop.cov_c2.matrix),
        ("cov_d_1.csv", &pop.cov_d1.matrix),
        ("cov_d_2.csv", &pop.cov_d2.matrix),
    ] {
        write_plain(out, file, m, "v", "v")?;
    }
    let header = ["variable", "pve_c", "pve_d", "weight", "zero_variance"];
    write_table_csv(&out.join("pve_variables_1.csv"), &header, &pve_table_rows(&pop.pve1))?;
    write_table_csv(&out.join("pve_variables_2.csv"), &header, &pve_table_rows(&pop.pve2))?;
    let views: Vec<Vec<String>> = [&pop.pve1, &pop.pve2]
        .iter()
        .enumerate()
        .map(|(k, t)| vec![(k + 1).to_string(), format_number(t.view_pve_c), format_number(t.view_pve_d)])
        .collect();
    write_table_csv(&out.join("pve_views.csv"), &["view", "pve_c", "pve_d"], &views)?;
    write_text(
        &out.join("tri_orthogonality.txt"),
        &format!(
            "rc={}\nmax_cross_covariance={}\nmax_variance_error={}\n",
            report.rc,
            format_number(report.max_cross_covariance),
            format_number(report.max_variance_error)
        ),
    )?;
    println!(
        "common rank {}; max cross-covariance {:.3e}; wrote oracle outputs to {}",
        report.rc,
        report.max_cross_covariance,
        out.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Decompose(a) => decompose(a).map(|_| true),
        Command::Simulate(a) => simulate(a).map(|_| true),
        Command::Oracle(a) => oracle(a).map(|_| true),
        Command::Check(a) => check_output_dir(&a.dir).map(|report| {
            print!("{report}");
            report.passed()
        }),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
