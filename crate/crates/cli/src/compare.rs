//! Confront a Monte Carlo estimate table with a theory curve on a shared
//! SNR grid. A row passes when |mc - theory| <= max(abs_tol, k * std_error).

use std::path::Path;

use crate::config::ConfigError;

pub struct CompareReport {
    pub passed: usize,
    pub failed: usize,
    pub lines: Vec<String>,
}

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

fn read_table(path: &Path) -> Result<Table, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| ConfigError(format!("{}: empty file", path.display())))?
        .split(',')
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<String> = line.split(',').map(str::to_string).collect();
        if fields.len() != header.len() {
            return Err(ConfigError(format!(
                "{} line {}: expected {} fields, got {}",
                path.display(),
                i + 2,
                header.len(),
                fields.len()
            )));
        }
        rows.push(fields);
    }
    Ok(Table { header, rows })
}

impl Table {
    fn col(&self, name: &str, path: &Path) -> Result<usize, ConfigError> {
        self.header.iter().position(|h| h == name).ok_or_else(|| {
            ConfigError(format!("{}: no column named {name:?}", path.display()))
        })
    }

    fn has_col(&self, name: &str) -> bool {
        self.header.iter().any(|h| h == name)
    }
}

fn parse_f(s: &str, what: &str) -> Result<f64, ConfigError> {
    s.parse::<f64>()
        .map_err(|_| ConfigError(format!("{what}: cannot parse {s:?} as a number")))
}

fn lambda_matches(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

/// Rows to check from the second file: value, standard error, a label for
/// reporting, and the grid position.
struct McRow {
    lambda: f64,
    label: String,
    value: f64,
    std_error: f64,
}

pub fn compare_files(
    theory_path: &Path,
    mc_path: &Path,
    abs_tol: f64,
    k_sigma: f64,
    estimator: &str,
    column: &str,
) -> Result<CompareReport, ConfigError> {
    if !(abs_tol >= 0.0 && abs_tol.is_finite()) {
        return Err(ConfigError("abs_tol: must be finite and nonnegative".into()));
    }
    if !(k_sigma >= 0.0 && k_sigma.is_finite()) {
        return Err(ConfigError("k_sigma: must be finite and nonnegative".into()));
    }

    let theory = read_table(theory_path)?;
    let t_lam = theory.col("lambda", theory_path)?;
    let t_val = theory.col(column, theory_path)?;
    let mut curve: Vec<(f64, f64)> = Vec::with_capacity(theory.rows.len());
    for row in &theory.rows {
        curve.push((
            parse_f(&row[t_lam], "theory lambda")?,
            parse_f(&row[t_val], &format!("theory {column}"))?,
        ));
    }

    let mc = read_table(mc_path)?;
    let m_lam = mc.col("lambda", mc_path)?;
    let mc_rows: Vec<McRow> = if mc.has_col("estimator") {
        let m_est = mc.col("estimator", mc_path)?;
        let m_val = mc.col("value", mc_path)?;
        let m_se = mc.col("std_error", mc_path)?;
        let mut out = Vec::new();
        for row in &mc.rows {
            if row[m_est] != estimator {
                continue;
            }
            out.push(McRow {
                lambda: parse_f(&row[m_lam], "mc lambda")?,
                label: row[m_est].clone(),
                value: parse_f(&row[m_val], "mc value")?,
                std_error: parse_f(&row[m_se], "mc std_error")?,
            });
        }
        if out.is_empty() {
            return Err(ConfigError(format!(
                "{}: no rows with estimator {estimator:?}",
                mc_path.display()
            )));
        }
        out
    } else {
        // a theory-schema table compared against another: exact values,
        // zero standard error
        let m_val = mc.col(column, mc_path)?;
        mc.rows
            .iter()
            .map(|row| {
                Ok(McRow {
                    lambda: parse_f(&row[m_lam], "lambda")?,
                    label: column.to_string(),
                    value: parse_f(&row[m_val], column)?,
                    std_error: 0.0,
                })
            })
            .collect::<Result<Vec<_>, ConfigError>>()?
    };

    let mut report = CompareReport { passed: 0, failed: 0, lines: Vec::new() };
    for row in &mc_rows {
        let Some(&(_, theory_value)) =
            curve.iter().find(|(lam, _)| lambda_matches(*lam, row.lambda))
        else {
            return Err(ConfigError(format!(
                "grid mismatch: lambda={} from {} has no counterpart in {}",
                row.lambda,
                mc_path.display(),
                theory_path.display()
            )));
        };
        let diff = (row.value - theory_value).abs();
        let tol = abs_tol.max(k_sigma * row.std_error);
        if diff <= tol {
            report.passed += 1;
            report.lines.push(format!(
                "lambda={} {}: mc={} theory={} diff={:.4} tol={:.4} PASS",
                row.lambda, row.label, row.value, theory_value, diff, tol
            ));
        } else {
            report.failed += 1;
            report.lines.push(format!(
                "lambda={} {}: mc={} theory={} diff={:.4} tol={:.4} FAIL (margin {:.4})",
                row.lambda,
                row.label,
                row.value,
                theory_value,
                diff,
                tol,
                diff - tol
            ));
        }
    }
    Ok(report)
}
