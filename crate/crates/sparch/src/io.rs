//! File formats and report assembly: Matrix Market and triplet-CSV
//! weight matrices, data CSVs, JSON manifests and fit reports, and the
//! human-readable summary block.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use sha2::{Digest, Sha256};

use crate::error::{Result, SparchError};
use crate::estimate::FitResult;
use crate::likelihood::DesignMatrix;
use crate::simulate::{Family, SimulatedField, SimulationSpec};
use crate::weights::WeightsMatrix;

/// Observations plus optional named covariates and location identifiers.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub y: Vec<f64>,
    pub covariates: Vec<(String, Vec<f64>)>,
    pub ids: Option<Vec<String>>,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn covariate_names(&self) -> Vec<&str> {
        self.covariates.iter().map(|(n, _)| n.as_str()).collect()
    }

    /// Build a design matrix from named columns, optionally prefixed with
    /// an intercept column.
    pub fn design(&self, columns: &[&str], intercept: bool) -> Result<DesignMatrix> {
        let n = self.n();
        let extra = usize::from(intercept);
        let mut m = DMatrix::zeros(n, columns.len() + extra);
        let mut labels = Vec::with_capacity(columns.len() + extra);
        if intercept {
            for i in 0..n {
                m[(i, 0)] = 1.0;
            }
            labels.push("(Intercept)".to_string());
        }
        for (k, name) in columns.iter().enumerate() {
            let col = self
                .covariates
                .iter()
                .find(|(c, _)| c == name)
                .ok_or_else(|| SparchError::UnknownColumn((*name).to_string()))?;
            for i in 0..n {
                m[(i, k + extra)] = col.1[i];
            }
            labels.push((*name).to_string());
        }
        DesignMatrix::new(m, labels)
    }
}

fn parse_err(path: &Path, detail: impl Into<String>) -> SparchError {
    SparchError::ParseError {
        path: path.display().to_string(),
        detail: detail.into(),
    }
}

fn validate_triplet(
    path: &Path,
    n: usize,
    row: usize,
    col: usize,
    value: f64,
    line: usize,
) -> Result<()> {
    if row == 0 || col == 0 || row > n || col > n {
        return Err(parse_err(
            path,
            format!("line {line}: entry ({row}, {col}) outside a {n} x {n} matrix (1-based)"),
        ));
    }
    if row == col && value != 0.0 {
        return Err(parse_err(
            path,
            format!("line {line}: diagonal entry ({row}, {col}) = {value} is not allowed"),
        ));
    }
    if value < 0.0 {
        return Err(parse_err(
            path,
            format!("line {line}: negative weight {value} at ({row}, {col})"),
        ));
    }
    if !value.is_finite() {
        return Err(parse_err(
            path,
            format!("line {line}: non-finite weight at ({row}, {col})"),
        ));
    }
    Ok(())
}

fn check_duplicates(path: &Path, entries: &[(usize, usize, f64)]) -> Result<()> {
    let mut seen = std::collections::HashSet::with_capacity(entries.len());
    for (i, j, _) in entries {
        if !seen.insert((*i, *j)) {
            return Err(parse_err(
                path,
                format!("duplicate entry at ({}, {}) (1-based)", i + 1, j + 1),
            ));
        }
    }
    Ok(())
}

/// Read a Matrix Market coordinate file; symmetric storage is expanded
/// to the full pattern.
pub fn read_matrix_market(path: &Path) -> Result<WeightsMatrix> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, "empty file"))?;
    let header_lc = header.to_ascii_lowercase();
    if !header_lc.starts_with("%%matrixmarket matrix coordinate") {
        return Err(parse_err(
            path,
            "expected a '%%MatrixMarket matrix coordinate' header",
        ));
    }
    let symmetric = header_lc.contains("symmetric");
    if !symmetric && !header_lc.contains("general") {
        return Err(parse_err(path, "only general or symmetric storage is supported"));
    }
    let mut dims: Option<(usize, usize, usize)> = None;
    let mut entries: Vec<(usize, usize, f64)> = Vec::new();
    for (lineno, line) in lines {
        let line = line.trim();
        if line.is_empty() || line.starts_with('%') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        match dims {
            None => {
                if fields.len() != 3 {
                    return Err(parse_err(
                        path,
                        format!("line {}: expected 'rows cols nnz'", lineno + 1),
                    ));
                }
                let parse = |s: &str| {
                    s.parse::<usize>()
                        .map_err(|_| parse_err(path, format!("line {}: bad size '{s}'", lineno + 1)))
                };
                let (r, c, nnz) = (parse(fields[0])?, parse(fields[1])?, parse(fields[2])?);
                if r != c {
                    return Err(parse_err(path, format!("matrix is {r} x {c}, not square")));
                }
                dims = Some((r, c, nnz));
            }
            Some((n, _, _)) => {
                if fields.len() != 3 {
                    return Err(parse_err(
                        path,
                        format!("line {}: expected 'row col value'", lineno + 1),
                    ));
                }
                let row: usize = fields[0]
                    .parse()
                    .map_err(|_| parse_err(path, format!("line {}: bad row index", lineno + 1)))?;
                let col: usize = fields[1]
                    .parse()
                    .map_err(|_| parse_err(path, format!("line {}: bad column index", lineno + 1)))?;
                let value: f64 = fields[2]
                    .parse()
                    .map_err(|_| parse_err(path, format!("line {}: bad value", lineno + 1)))?;
                validate_triplet(path, n, row, col, value, lineno + 1)?;
                if value != 0.0 {
                    entries.push((row - 1, col - 1, value));
                    if symmetric && row != col {
                        entries.push((col - 1, row - 1, value));
                    }
                }
            }
        }
    }
    let (n, _, nnz) = dims.ok_or_else(|| parse_err(path, "missing size line"))?;
    let stored = if symmetric {
        // Each off-diagonal stored entry was mirrored.
        entries.len() / 2 + entries.len() % 2
    } else {
        entries.len()
    };
    if stored > nnz {
        return Err(parse_err(
            path,
            format!("{stored} entries found but the header declares {nnz}"),
        ));
    }
    check_duplicates(path, &entries)?;
    WeightsMatrix::from_triplets(n, entries)
}

/// Write a WeightsMatrix in Matrix Market coordinate/general form with
/// full float precision.
pub fn write_matrix_market(path: &Path, w: &WeightsMatrix) -> Result<()> {
    let mut out = String::from("%%MatrixMarket matrix coordinate real general\n");
    let _ = writeln!(out, "{} {} {}", w.n(), w.n(), w.nnz());
    for (v, (i, j)) in w.matrix().iter() {
        let _ = writeln!(out, "{} {} {:?}", i + 1, j + 1, v);
    }
    fs::write(path, out)?;
    Ok(())
}

/// Read a 1-based `row,col,value` CSV (header required).
pub fn read_triplet_csv(path: &Path) -> Result<WeightsMatrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| parse_err(path, e.to_string()))?;
    let mut entries: Vec<(usize, usize, f64)> = Vec::new();
    let mut max_index = 0usize;
    for (recno, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| parse_err(path, e.to_string()))?;
        let line = recno + 2;
        if record.len() != 3 {
            return Err(parse_err(
                path,
                format!("line {line}: expected 3 columns (row, col, value), got {}", record.len()),
            ));
        }
        let row: usize = record[0]
            .parse()
            .map_err(|_| parse_err(path, format!("line {line}: bad row index '{}'", &record[0])))?;
        let col: usize = record[1]
            .parse()
            .map_err(|_| parse_err(path, format!("line {line}: bad column index '{}'", &record[1])))?;
        let value: f64 = record[2]
            .parse()
            .map_err(|_| parse_err(path, format!("line {line}: bad value '{}'", &record[2])))?;
        validate_triplet(path, usize::MAX, row, col, value, line)?;
        max_index = max_index.max(row).max(col);
        if value != 0.0 {
            entries.push((row - 1, col - 1, value));
        }
    }
    if max_index == 0 {
        return Err(parse_err(path, "no entries"));
    }
    check_duplicates(path, &entries)?;
    WeightsMatrix::from_triplets(max_index, entries)
}

/// Write the 1-based triplet CSV form.
pub fn write_triplet_csv(path: &Path, w: &WeightsMatrix) -> Result<()> {
    let mut out = String::from("row,col,value\n");
    for (v, (i, j)) in w.matrix().iter() {
        let _ = writeln!(out, "{},{},{:?}", i + 1, j + 1, v);
    }
    fs::write(path, out)?;
    Ok(())
}

/// Dispatch on extension: `.mtx` Matrix Market, `.csv` triplet CSV.
pub fn load_weights(path: &Path) -> Result<WeightsMatrix> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("mtx") => read_matrix_market(path),
        Some("csv") => read_triplet_csv(path),
        other => Err(parse_err(
            path,
            format!("unsupported weights extension {other:?} (use .mtx or .csv)"),
        )),
    }
}

/// Load a data CSV with a header. Column `y` is required, `id` is kept
/// as the location identifier, everything else becomes a covariate.
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| parse_err(path, e.to_string()))?;
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| parse_err(path, e.to_string()))?
        .iter()
        .map(|h| h.to_string())
        .collect();
    let y_idx = headers
        .iter()
        .position(|h| h == "y")
        .ok_or_else(|| parse_err(path, "missing required column 'y'"))?;
    let id_idx = headers.iter().position(|h| h == "id");
    let mut y = Vec::new();
    let mut ids: Vec<String> = Vec::new();
    let mut covariates: Vec<(String, Vec<f64>)> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != y_idx && Some(*i) != id_idx)
        .map(|(_, h)| (h.clone(), Vec::new()))
        .collect();
    for (recno, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| parse_err(path, e.to_string()))?;
        let line = recno + 2;
        if record.len() != headers.len() {
            return Err(parse_err(
                path,
                format!("line {line}: {} fields, header has {}", record.len(), headers.len()),
            ));
        }
        let parse = |idx: usize| -> Result<f64> {
            let raw = &record[idx];
            if raw.is_empty() || raw == "NA" {
                return Err(parse_err(
                    path,
                    format!("line {line}, column '{}': missing value", headers[idx]),
                ));
            }
            raw.parse().map_err(|_| {
                parse_err(
                    path,
                    format!("line {line}, column '{}': bad number '{raw}'", headers[idx]),
                )
            })
        };
        y.push(parse(y_idx)?);
        if let Some(idx) = id_idx {
            ids.push(record[idx].to_string());
        }
        let mut c = 0;
        for (i, _) in headers.iter().enumerate() {
            if i == y_idx || Some(i) == id_idx {
                continue;
            }
            covariates[c].1.push(parse(i)?);
            c += 1;
        }
    }
    if y.is_empty() {
        return Err(parse_err(path, "no data rows"));
    }
    if !ids.is_empty() {
        let unique: std::collections::HashSet<&String> = ids.iter().collect();
        if unique.len() != ids.len() {
            return Err(parse_err(path, "location identifiers are not unique"));
        }
    }
    Ok(Dataset {
        y,
        covariates,
        ids: id_idx.map(|_| ids),
    })
}

/// Write a simulated field as `index,y_re,y_im,eps,h`.
pub fn write_field_csv(path: &Path, field: &SimulatedField) -> Result<()> {
    let mut out = String::from("index,y_re,y_im,eps,h\n");
    for i in 0..field.eps.len() {
        let _ = writeln!(
            out,
            "{},{:?},{:?},{:?},{:?}",
            i + 1,
            field.y[i].re,
            field.y[i].im,
            field.eps[i],
            field.h[i]
        );
    }
    fs::write(path, out)?;
    Ok(())
}

/// SHA-256 digest of the weight matrix's canonical triplet listing.
pub fn weights_digest(w: &WeightsMatrix) -> String {
    let mut hasher = Sha256::new();
    hasher.update(w.n().to_le_bytes());
    for (v, (i, j)) in w.matrix().iter() {
        hasher.update(i.to_le_bytes());
        hasher.update(j.to_le_bytes());
        hasher.update(v.to_le_bytes());
    }
    format!("{:x}", hasher.finalize())
}

/// JSON manifest accompanying a simulated field.
#[derive(Debug, serde::Serialize, serde::Deserialize)]
pub struct SimulationManifest {
    pub family: Family,
    pub n: usize,
    pub alpha: f64,
    pub rho: f64,
    pub b: f64,
    pub seed: u64,
    pub weights_digest: String,
}

pub fn write_manifest(path: &Path, spec: &SimulationSpec, w: &WeightsMatrix) -> Result<()> {
    let manifest = SimulationManifest {
        family: spec.family,
        n: w.n(),
        alpha: spec.alpha,
        rho: spec.rho,
        b: spec.b,
        seed: spec.seed,
        weights_digest: weights_digest(w),
    };
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| SparchError::InvalidArgument(e.to_string()))?;
    fs::write(path, json + "\n")?;
    Ok(())
}

/// Full-precision machine-readable fit report.
pub fn write_fit_report_json(path: &Path, fit: &FitResult) -> Result<()> {
    let json = serde_json::to_string_pretty(fit)
        .map_err(|e| SparchError::InvalidArgument(e.to_string()))?;
    fs::write(path, json + "\n")?;
    Ok(())
}

fn sig6(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let mag = v.abs().log10().floor() as i32;
    let decimals = (5 - mag).max(0) as usize;
    format!("{v:.decimals$}")
}

fn stars(p: f64) -> &'static str {
    if p < 0.001 {
        "***"
    } else if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else if p < 0.1 {
        "."
    } else {
        " "
    }
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let h = (n as f64 - 1.0) * p;
    let lo = h.floor() as usize;
    let hi = lo.min(n - 2) + 1;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Human-readable summary mirroring the usual regression-summary layout:
/// call, residual five-number summary plus mean, coefficient table with
/// significance markers, information criteria, Moran diagnostics.
pub fn summary_text(fit: &FitResult, call: &str) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "Call:\n{call}\n");
    let mut sorted = fit.residuals.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mean = fit.residuals.iter().sum::<f64>() / fit.residuals.len() as f64;
    let _ = writeln!(out, "Residuals:");
    let _ = writeln!(
        out,
        "{:>12} {:>12} {:>12} {:>12} {:>12} {:>12}",
        "Min", "1Q", "Median", "3Q", "Max", "Mean"
    );
    let _ = writeln!(
        out,
        "{:>12} {:>12} {:>12} {:>12} {:>12} {:>12}\n",
        sig6(sorted[0]),
        sig6(quantile(&sorted, 0.25)),
        sig6(quantile(&sorted, 0.5)),
        sig6(quantile(&sorted, 0.75)),
        sig6(sorted[sorted.len() - 1]),
        sig6(mean)
    );
    let _ = writeln!(out, "Coefficients:");
    let _ = writeln!(
        out,
        "{:<18} {:>12} {:>12} {:>9} {:>10}",
        "", "Estimate", "Std. Error", "t value", "Pr(>|t|)"
    );
    for i in 0..fit.labels.len() {
        let se = fit.std_errors[i].map(sig6).unwrap_or_else(|| "NA".into());
        let t = fit.t_values[i].map(sig6).unwrap_or_else(|| "NA".into());
        let (p, s) = match fit.p_values[i] {
            Some(p) => (sig6(p), stars(p)),
            None => ("NA".into(), " "),
        };
        let _ = writeln!(
            out,
            "{:<18} {:>12} {:>12} {:>9} {:>10} {}",
            fit.labels[i],
            sig6(fit.estimates[i]),
            se,
            t,
            p,
            s
        );
    }
    let _ = writeln!(out, "---");
    let _ = writeln!(out, "Signif. codes: 0 '***' 0.001 '**' 0.01 '*' 0.05 '.' 0.1 ' ' 1\n");
    let _ = writeln!(
        out,
        "AIC: {}, BIC: {} (Log-Likelihood: {})\n",
        sig6(fit.aic),
        sig6(fit.bic),
        sig6(fit.loglik)
    );
    match &fit.moran_residuals {
        Some(m) => {
            let _ = writeln!(
                out,
                "Moran's I (residuals): {}, p-value: {}",
                sig6(m.i),
                sig6(m.p_value)
            );
        }
        None => {
            let _ = writeln!(out, "Moran's I (residuals): unavailable");
        }
    }
    match &fit.moran_squared_residuals {
        Some(m) => {
            let _ = writeln!(
                out,
                "Moran's I (squared residuals): {}, p-value: {}",
                sig6(m.i),
                sig6(m.p_value)
            );
        }
        None => {
            let _ = writeln!(out, "Moran's I (squared residuals): unavailable");
        }
    }
    if !fit.convergence.boundary.is_empty() {
        let _ = writeln!(
            out,
            "\nNote: parameters at a constraint boundary: {}",
            fit.convergence.boundary.join(", ")
        );
    }
    out
}

/// Plot-data CSVs for the three diagnostic panels: Moran scatter of the
/// residuals and of the squared residuals, and the normal Q-Q data.
pub fn write_plot_data(dir: &Path, fit: &FitResult, w: &WeightsMatrix) -> Result<()> {
    let residuals = &fit.residuals;
    let res2: Vec<f64> = residuals.iter().map(|v| v * v).collect();
    for (name, z) in [("moran_residuals.csv", residuals), ("moran_squared_residuals.csv", &res2)] {
        let sc = crate::diagnostics::moran_scatter_data(z, w)?;
        let mut out = String::from("value,lag\n");
        for (zi, li) in &sc.points {
            let _ = writeln!(out, "{zi:?},{li:?}");
        }
        let _ = writeln!(out, "# slope,{:?}", sc.slope);
        fs::write(dir.join(name), out)?;
    }
    let qq = crate::diagnostics::qq_data(residuals)?;
    let mut out = String::from("theoretical,sample\n");
    for (t, s) in &qq.points {
        let _ = writeln!(out, "{t:?},{s:?}");
    }
    let _ = writeln!(out, "# line,{:?},{:?}", qq.line_intercept, qq.line_slope);
    fs::write(dir.join("qq_residuals.csv"), out)?;
    Ok(())
}
