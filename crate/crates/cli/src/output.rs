//! CSV tables, run manifests and plot data.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use tubewave::fit::{fit_power_law, FitResult};

use crate::usage;

/// Fixed 17-significant-digit scientific notation.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Float(f64),
    Int(u64),
    Text(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Float(x) => format_float(*x),
            Cell::Int(n) => n.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl CsvTable {
    pub fn new(header: Vec<&'static str>) -> Self {
        Self { header, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Cell::render).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_file(path, &self.render())
    }
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

/// SHA-256 of the canonical JSON of a resolved configuration, hex encoded.
pub fn config_hash<C: Serialize>(config: &C) -> Result<String> {
    let bytes = serde_json::to_vec(config)?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentManifest {
    pub kind: String,
    pub config_hash: String,
    pub config: Value,
    pub seed: Option<u64>,
    pub version: String,
    /// Elapsed seconds; absent under `--no-timing`.
    pub wall_clock_seconds: Option<f64>,
    /// Start time in seconds since the Unix epoch; absent under `--no-timing`.
    pub started_unix: Option<u64>,
    pub geometry: String,
    /// File names relative to the manifest's directory.
    pub outputs: Vec<String>,
    pub summary: Value,
}

impl ExperimentManifest {
    pub fn file_name(kind: &str) -> String {
        format!("{}.manifest.json", kind.replace('-', "_"))
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(Self::file_name(&self.kind));
        write_file(&path, &(serde_json::to_string_pretty(self)? + "\n"))?;
        Ok(path)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PlotKind {
    /// `(log h, log σ_min)`.
    Resolvent,
    /// `(log t, log √E)`.
    EnergyTrace,
    /// `(log n, log ratio)`.
    SphereRatio,
}

impl PlotKind {
    fn columns(self) -> (&'static str, &'static str) {
        match self {
            PlotKind::Resolvent => ("log_h", "log_sigma_min"),
            PlotKind::EnergyTrace => ("log_t", "log_sqrt_energy"),
            PlotKind::SphereRatio => ("log_n", "log_ratio"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotFiles {
    pub data: PathBuf,
    pub fit: PathBuf,
    pub fit_result: FitResult,
}

/// Writes `<stem>.dat` with the log-log pairs and `<stem>.fit.dat` with the
/// fitted line at the same abscissae. Both are whitespace separated with a
/// `#` header line.
pub fn emit_plot_data(records: &[(f64, f64)], kind: PlotKind, stem: &Path) -> Result<PlotFiles> {
    if records.is_empty() {
        return Err(usage("no records to plot"));
    }
    if records.iter().any(|(x, y)| !(*x > 0.0 && *y > 0.0)) {
        return Err(usage("plot data needs positive values on both axes"));
    }
    let fit_result = fit_power_law(records)?;
    let (cx, cy) = kind.columns();
    let mut data = format!("# {cx} {cy}\n");
    let mut fit = format!("# {cx} {cy}_fit exponent={} log_intercept={}\n", format_float(fit_result.exponent), format_float(fit_result.log_intercept));
    for (x, y) in records {
        let lx = x.ln();
        let _ = writeln!(data, "{} {}", format_float(lx), format_float(y.ln()));
        let _ = writeln!(fit, "{} {}", format_float(lx), format_float(fit_result.log_intercept + fit_result.exponent * lx));
    }
    let data_path = stem.with_extension("dat");
    let fit_path = stem.with_extension("fit.dat");
    write_file(&data_path, &data)?;
    write_file(&fit_path, &fit)?;
    Ok(PlotFiles { data: data_path, fit: fit_path, fit_result })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn read_columns(path: &Path) -> Vec<(f64, f64)> {
        fs::read_to_string(path)
            .unwrap()
            .lines()
            .filter(|l| !l.starts_with('#'))
            .map(|l| {
                let mut it = l.split_whitespace().map(|v| v.parse::<f64>().unwrap());
                (it.next().unwrap(), it.next().unwrap())
            })
            .collect()
    }

    #[test]
    fn floats_have_seventeen_digits() {
        assert_eq!(format_float(1.5), "1.5000000000000000e0");
        assert_eq!(format_float(0.1).parse::<f64>().unwrap(), 0.1);
        let x = 1.0 / 3.0;
        assert_eq!(format_float(x).parse::<f64>().unwrap(), x);
    }

    #[test]
    fn csv_rendering() {
        let mut t = CsvTable::new(vec!["h", "sigma_min", "resolution"]);
        t.push(vec![Cell::Float(0.5), Cell::Float(2.0), Cell::Text("64x64".into())]);
        t.push(vec![Cell::Float(0.25), Cell::Float(1.0), Cell::Int(7)]);
        assert_eq!(t.render(), "h,sigma_min,resolution\n5.0000000000000000e-1,2.0000000000000000e0,64x64\n2.5000000000000000e-1,1.0000000000000000e0,7\n");
    }

    #[test]
    fn hash_depends_on_content() {
        let a = config_hash(&serde_json::json!({"gamma": 1.0})).unwrap();
        let b = config_hash(&serde_json::json!({"gamma": 2.0})).unwrap();
        assert_eq!(a.len(), 64);
        assert_ne!(a, b);
        assert_eq!(a, config_hash(&serde_json::json!({"gamma": 1.0})).unwrap());
    }

    #[test]
    fn plot_data_and_refit() {
        let dir = tempfile::tempdir().unwrap();
        let records: Vec<(f64, f64)> = (4..=9).map(|j| {
            let h = 2f64.powi(-j);
            (h, 0.9 * h.powf(1.5) * (1.0 + 0.01 * (j as f64).sin()))
        }).collect();
        let files = emit_plot_data(&records, PlotKind::Resolvent, &dir.path().join("scan")).unwrap();
        let data = read_columns(&files.data);
        assert_eq!(data.len(), 6);
        assert!((data[0].0 - records[0].0.ln()).abs() < 1e-15);
        // slope of the companion line, re-fitted from its end points
        let line = read_columns(&files.fit);
        let slope = (line[5].1 - line[0].1) / (line[5].0 - line[0].0);
        assert!((slope - files.fit_result.exponent).abs() < 1e-12);
        let refit = fit_power_law(&data.iter().map(|(x, y)| (x.exp(), y.exp())).collect::<Vec<_>>()).unwrap();
        assert!((refit.exponent - files.fit_result.exponent).abs() < 1e-12);
        assert!(files.fit.to_str().unwrap().ends_with("scan.fit.dat"));
    }

    #[test]
    fn plot_data_errors() {
        let dir = tempfile::tempdir().unwrap();
        assert!(emit_plot_data(&[], PlotKind::EnergyTrace, &dir.path().join("e")).is_err());
        assert!(emit_plot_data(&[(1.0, 0.0), (2.0, 1.0)], PlotKind::EnergyTrace, &dir.path().join("e")).is_err());
    }
}
