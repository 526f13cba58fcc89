//! Command-line front end: simulate fields, fit models, run stepwise
//! selection, build or convert weight matrices, and compute diagnostics.
//!
//! Exit codes: 2 invalid configuration, 3 regularity violation,
//! 4 I/O or parse failure, 5 optimizer non-convergence.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::RngCore;

use sparch::diagnostics::{self, Alternative};
use sparch::error::SparchError;
use sparch::estimate::{self, OptimizerConfig};
use sparch::io;
use sparch::likelihood::DesignMatrix;
use sparch::simulate::{self, Family, SimulationSpec};
use sparch::weights::{build_lattice_contiguity, ContiguityScheme, LatticeSpec, WeightsMatrix};

#[derive(Parser)]
#[command(name = "sparch", version, about = "Spatial ARCH simulation, fitting, and diagnostics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a random field and write it with a manifest.
    Simulate(SimulateArgs),
    /// Fit a spARCH, E-spARCH, or SARspARCH model.
    Fit(FitArgs),
    /// Stepwise covariate selection by BIC.
    Select(SelectArgs),
    /// Build, convert, or inspect a weight matrix.
    Weights(WeightsArgs),
    /// Moran's I tests on a data column.
    Diagnose(DiagnoseArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Model family: sparch_gaussian | esparch | complex | white_noise
    #[arg(long)]
    family: String,
    /// Weight matrix file (.mtx or triplet .csv)
    #[arg(long)]
    w: Option<PathBuf>,
    /// Build a contiguity lattice instead, e.g. 20x20
    #[arg(long)]
    lattice: Option<String>,
    /// Lattice scheme: rook | queen
    #[arg(long, default_value = "rook")]
    scheme: String,
    /// Row-standardize the weight matrix before simulating
    #[arg(long)]
    row_standardize: bool,
    #[arg(long)]
    alpha: f64,
    #[arg(long)]
    rho: f64,
    /// E-spARCH exponent b
    #[arg(long)]
    b: Option<f64>,
    /// RNG seed; drawn from entropy and echoed to stderr when omitted
    #[arg(long)]
    seed: Option<u64>,
    /// Skip the Lemma-1 error truncation even on non-oriented matrices
    #[arg(long)]
    no_truncation: bool,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    /// Data CSV with a 'y' column
    #[arg(long)]
    data: PathBuf,
    /// Variance-equation weight matrix file
    #[arg(long)]
    w: PathBuf,
    /// Mean-equation weight matrix file (enables the SAR term)
    #[arg(long)]
    b_matrix: Option<PathBuf>,
    /// Model family: sparch_gaussian | esparch
    #[arg(long)]
    family: String,
    /// Comma-separated covariate columns for the mean equation
    #[arg(long)]
    covariates: Option<String>,
    /// Drop the automatic intercept
    #[arg(long)]
    no_intercept: bool,
    /// Hold rho at a fixed value
    #[arg(long)]
    fix_rho: Option<f64>,
    /// Hold lambda at a fixed value
    #[arg(long)]
    fix_lambda: Option<f64>,
    /// Estimate the E-spARCH exponent b instead of fixing it at 2
    #[arg(long)]
    free_b: bool,
    /// Alternative for the Moran p-values: two-sided | greater | less
    #[arg(long, default_value = "two-sided")]
    alternative: String,
    /// Also write Moran-scatter and Q-Q plot data CSVs
    #[arg(long)]
    plot_data: bool,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SelectArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    w: PathBuf,
    #[arg(long)]
    b_matrix: PathBuf,
    #[arg(long)]
    family: String,
    /// Comma-separated candidate covariate columns
    #[arg(long)]
    candidates: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct WeightsArgs {
    /// Input weight matrix to convert (.mtx or .csv)
    #[arg(long)]
    w: Option<PathBuf>,
    /// Build a contiguity lattice, e.g. 20x20
    #[arg(long)]
    lattice: Option<String>,
    #[arg(long, default_value = "rook")]
    scheme: String,
    #[arg(long)]
    row_standardize: bool,
    /// Output file; extension picks the format (.mtx or .csv)
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DiagnoseArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    w: PathBuf,
    /// Column to test (default 'y'); its square is tested as well
    #[arg(long)]
    column: Option<String>,
    #[arg(long, default_value = "two-sided")]
    alternative: String,
    /// Optional output directory for a JSON copy of the tests
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Referenced input files must exist up front; a missing path is an
/// invalid configuration (exit 2), not an I/O failure (exit 4).
fn require_exists(path: &PathBuf) -> Result<(), SparchError> {
    if path.exists() {
        Ok(())
    } else {
        Err(SparchError::InvalidArgument(format!(
            "input file does not exist: {}",
            path.display()
        )))
    }
}

fn load_weights_checked(path: &PathBuf) -> Result<WeightsMatrix, SparchError> {
    require_exists(path)?;
    io::load_weights(path)
}

fn load_dataset_checked(path: &PathBuf) -> Result<io::Dataset, SparchError> {
    require_exists(path)?;
    io::load_dataset(path)
}

fn exit_code_for(err: &SparchError) -> u8 {
    match err {
        SparchError::RegularityViolation { .. } => 3,
        SparchError::Io(_) | SparchError::ParseError { .. } => 4,
        SparchError::NonConvergence(_) => 5,
        _ => 2,
    }
}

fn fail(err: SparchError) -> ExitCode {
    eprintln!("error: {err}");
    ExitCode::from(exit_code_for(&err))
}

fn parse_lattice(spec: &str, scheme: &str) -> Result<WeightsMatrix, SparchError> {
    let (r, c) = spec
        .split_once(['x', 'X'])
        .ok_or_else(|| SparchError::InvalidArgument(format!("bad lattice '{spec}', expected RxC")))?;
    let rows: usize = r
        .parse()
        .map_err(|_| SparchError::InvalidArgument(format!("bad lattice rows '{r}'")))?;
    let cols: usize = c
        .parse()
        .map_err(|_| SparchError::InvalidArgument(format!("bad lattice cols '{c}'")))?;
    let scheme = match scheme.to_ascii_lowercase().as_str() {
        "rook" => ContiguityScheme::Rook,
        "queen" => ContiguityScheme::Queen,
        other => {
            return Err(SparchError::InvalidArgument(format!(
                "unknown scheme '{other}' (rook or queen)"
            )))
        }
    };
    build_lattice_contiguity(LatticeSpec { rows, cols, scheme })
}

fn resolve_weights(
    file: &Option<PathBuf>,
    lattice: &Option<String>,
    scheme: &str,
    row_standardize: bool,
) -> Result<WeightsMatrix, SparchError> {
    let w = match (file, lattice) {
        (Some(path), None) => load_weights_checked(path)?,
        (None, Some(spec)) => parse_lattice(spec, scheme)?,
        _ => {
            return Err(SparchError::InvalidArgument(
                "provide exactly one of --w or --lattice".into(),
            ))
        }
    };
    Ok(if row_standardize { w.row_standardize() } else { w })
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), SparchError> {
    let family: Family = args.family.parse()?;
    let w = resolve_weights(&args.w, &args.lattice, &args.scheme, args.row_standardize)?;
    let seed = match args.seed {
        Some(s) => s,
        None => {
            let s = rand::thread_rng().next_u64();
            eprintln!("seed: {s}");
            s
        }
    };
    let mut spec = SimulationSpec::new(family, args.alpha, args.rho, seed)?;
    if let Some(b) = args.b {
        spec = spec.with_b(b)?;
    }
    let field = if args.no_truncation && family == Family::SparchGaussian {
        // Unrestricted Gaussian errors regardless of the Lemma-1 bound.
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
        let eps = simulate::sample_truncated_normal(f64::INFINITY, w.n(), &mut rng)?;
        simulate::simulate_sparch_from_errors(&eps, spec.alpha, spec.rho, &w, seed)?
    } else {
        simulate::simulate(&spec, &w)?
    };
    std::fs::create_dir_all(&args.out)?;
    io::write_field_csv(&args.out.join("field.csv"), &field)?;
    io::write_manifest(&args.out.join("manifest.json"), &spec, &w)?;
    println!("wrote {}", args.out.join("field.csv").display());
    Ok(())
}

fn optimizer_config(fix_rho: Option<f64>, fix_lambda: Option<f64>, free_b: bool) -> OptimizerConfig {
    OptimizerConfig {
        fix_rho,
        fix_lambda,
        free_b,
        ..OptimizerConfig::default()
    }
}

fn check_sizes(n_data: usize, w: &WeightsMatrix, b: Option<&WeightsMatrix>) -> Result<(), SparchError> {
    if n_data != w.n() {
        return Err(SparchError::DimensionMismatch(format!(
            "data has {n_data} rows but W is {0} x {0}",
            w.n()
        )));
    }
    if let Some(b) = b {
        if n_data != b.n() {
            return Err(SparchError::DimensionMismatch(format!(
                "data has {n_data} rows but B is {0} x {0}",
                b.n()
            )));
        }
    }
    Ok(())
}

fn cmd_fit(args: FitArgs) -> Result<(), SparchError> {
    let family: Family = args.family.parse()?;
    let alternative: Alternative = args.alternative.parse()?;
    let data = load_dataset_checked(&args.data)?;
    let w = load_weights_checked(&args.w)?;
    let b_mat = args.b_matrix.as_ref().map(load_weights_checked).transpose()?;
    check_sizes(data.n(), &w, b_mat.as_ref())?;
    let cfg = optimizer_config(args.fix_rho, args.fix_lambda, args.free_b);

    let columns: Vec<&str> = args
        .covariates
        .as_deref()
        .map(|s| s.split(',').filter(|c| !c.is_empty()).collect())
        .unwrap_or_default();
    std::fs::create_dir_all(&args.out)?;
    let call = std::env::args().skip(1).collect::<Vec<_>>().join(" ");
    let fit = match &b_mat {
        Some(b) => {
            let design = data.design(&columns, !args.no_intercept)?;
            estimate::fit_sarsparch(&data.y, &design, b, &w, family, &cfg)
        }
        None => {
            if !columns.is_empty() {
                return Err(SparchError::InvalidArgument(
                    "covariates require --b-matrix (SARspARCH)".into(),
                ));
            }
            estimate::fit_sparch(&data.y, &w, family, &cfg)
        }
    };
    let mut fit = match fit {
        Ok(f) => f,
        Err(e) => {
            // Leave a diagnostic report behind even on failure.
            let _ = std::fs::write(
                args.out.join("error.json"),
                serde_json::json!({ "error": e.to_string() }).to_string() + "\n",
            );
            return Err(e);
        }
    };
    if alternative != Alternative::TwoSided {
        let res2: Vec<f64> = fit.residuals.iter().map(|v| v * v).collect();
        fit.moran_residuals = diagnostics::morans_i(&fit.residuals, &w, alternative).ok();
        fit.moran_squared_residuals = diagnostics::morans_i(&res2, &w, alternative).ok();
    }
    io::write_fit_report_json(&args.out.join("report.json"), &fit)?;
    let summary = io::summary_text(&fit, &format!("sparch {call}"));
    std::fs::write(args.out.join("summary.txt"), &summary)?;
    if args.plot_data {
        io::write_plot_data(&args.out, &fit, &w)?;
    }
    print!("{summary}");
    Ok(())
}

fn cmd_select(args: SelectArgs) -> Result<(), SparchError> {
    let family: Family = args.family.parse()?;
    let data = load_dataset_checked(&args.data)?;
    let w = load_weights_checked(&args.w)?;
    let b_mat = load_weights_checked(&args.b_matrix)?;
    check_sizes(data.n(), &w, Some(&b_mat))?;
    let candidates: Vec<&str> = args
        .candidates
        .split(',')
        .filter(|c| !c.is_empty())
        .collect();
    std::fs::create_dir_all(&args.out)?;
    let cfg = OptimizerConfig::default();
    let result = if candidates.is_empty() {
        let design = data.design(&[], true)?;
        let fit = estimate::fit_sarsparch(&data.y, &design, &b_mat, &w, family, &cfg)?;
        estimate::StepwiseResult {
            trace: vec![estimate::StepRecord {
                formula: "y ~ 1".into(),
                bic: fit.bic,
                action: "start".into(),
            }],
            fit,
            skipped: Vec::new(),
        }
    } else {
        let x_full: DesignMatrix = data.design(&candidates, false)?;
        estimate::stepwise_bic(&data.y, &x_full, &b_mat, &w, family, &cfg)?
    };
    io::write_fit_report_json(&args.out.join("report.json"), &result.fit)?;
    let call = std::env::args().skip(1).collect::<Vec<_>>().join(" ");
    let summary = io::summary_text(&result.fit, &format!("sparch {call}"));
    std::fs::write(args.out.join("summary.txt"), &summary)?;
    let mut trace = String::from("step,formula,bic,action\n");
    for (i, rec) in result.trace.iter().enumerate() {
        trace.push_str(&format!("{},{},{:?},{}\n", i, rec.formula, rec.bic, rec.action));
    }
    std::fs::write(args.out.join("trace.csv"), trace)?;
    if !result.skipped.is_empty() {
        eprintln!("skipped candidates:");
        for s in &result.skipped {
            eprintln!("  {s}");
        }
    }
    print!("{summary}");
    Ok(())
}

fn cmd_weights(args: WeightsArgs) -> Result<(), SparchError> {
    let w = resolve_weights(&args.w, &args.lattice, &args.scheme, args.row_standardize)?;
    match args.out.extension().and_then(|e| e.to_str()) {
        Some("mtx") => io::write_matrix_market(&args.out, &w)?,
        Some("csv") => io::write_triplet_csv(&args.out, &w)?,
        other => {
            return Err(SparchError::InvalidArgument(format!(
                "unsupported output extension {other:?} (use .mtx or .csv)"
            )))
        }
    }
    println!(
        "{} x {} matrix, {} nonzeros, row-standardized: {}",
        w.n(),
        w.n(),
        w.nnz(),
        w.is_row_standardized()
    );
    Ok(())
}

fn cmd_diagnose(args: DiagnoseArgs) -> Result<(), SparchError> {
    let alternative: Alternative = args.alternative.parse()?;
    let data = load_dataset_checked(&args.data)?;
    let w = load_weights_checked(&args.w)?;
    check_sizes(data.n(), &w, None)?;
    let (label, z): (&str, &[f64]) = match args.column.as_deref() {
        None | Some("y") => ("y", &data.y),
        Some(name) => {
            let col = data
                .covariates
                .iter()
                .find(|(c, _)| c == name)
                .ok_or_else(|| SparchError::UnknownColumn(name.to_string()))?;
            (&col.0, &col.1)
        }
    };
    let squared: Vec<f64> = z.iter().map(|v| v * v).collect();
    let t1 = diagnostics::morans_i(z, &w, alternative)?;
    let t2 = diagnostics::morans_i(&squared, &w, alternative)?;
    for (name, t) in [(label.to_string(), &t1), (format!("{label}^2"), &t2)] {
        println!(
            "Moran's I ({name}): I = {:.6}, E[I] = {:.6}, sd = {:.6}, z = {:.4}, p = {:.5} ({})",
            t.i,
            t.null_mean,
            t.null_variance.sqrt(),
            t.z_score,
            t.p_value,
            t.alternative
        );
    }
    if let Some(out) = &args.out {
        std::fs::create_dir_all(out)?;
        let json = serde_json::json!({ "column": label, "moran": t1, "moran_squared": t2 });
        std::fs::write(
            out.join("diagnostics.json"),
            serde_json::to_string_pretty(&json).unwrap() + "\n",
        )?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Fit(args) => cmd_fit(args),
        Command::Select(args) => cmd_select(args),
        Command::Weights(args) => cmd_weights(args),
        Command::Diagnose(args) => cmd_diagnose(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e),
    }
}
