//! Experiment orchestration, NSE metrics and report files.

pub mod config;
pub mod pipeline;

pub use config::{ExperimentConfig, NseDomain, SplitConfig, Subset};
pub use pipeline::{run_pipeline, Experiment, SampleRecord};

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `||a - a_hat||^2 / ||a||^2`.
pub fn nse(reference: &[Complex64], estimate: &[Complex64]) -> Result<f64> {
    if reference.len() != estimate.len() {
        return Err(Error::Shape(format!(
            "reference has {} entries, estimate {}",
            reference.len(),
            estimate.len()
        )));
    }
    let den: f64 = reference.iter().map(|z| z.norm_sqr()).sum();
    if den == 0.0 {
        return Err(Error::Config("NSE of a zero reference is undefined".into()));
    }
    let num: f64 = reference.iter().zip(estimate).map(|(a, b)| (a - b).norm_sqr()).sum();
    Ok(num / den)
}

/// Empirical CDF: sorted values paired with the fraction of values `<=` each.
/// Non-finite values are dropped.
pub fn cdf_points(values: &[f64]) -> Vec<(f64, f64)> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter().enumerate().map(|(i, &x)| (x, (i + 1) as f64 / n)).collect()
}

/// Lower median of the finite values.
pub fn median(values: &[f64]) -> Option<f64> {
    let pts = cdf_points(values);
    pts.iter().find(|(_, f)| *f >= 0.5).map(|(x, _)| *x)
}

pub fn to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Measurement,
    Cgan,
    CganLstm,
    #[serde(rename = "esprit_3mpc")]
    Esprit3,
    #[serde(rename = "esprit_5mpc")]
    Esprit5,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Measurement,
        Method::Cgan,
        Method::CganLstm,
        Method::Esprit3,
        Method::Esprit5,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Method::Measurement => "measurement",
            Method::Cgan => "cgan",
            Method::CganLstm => "cgan_lstm",
            Method::Esprit3 => "esprit_3mpc",
            Method::Esprit5 => "esprit_5mpc",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.label() == s)
    }

    /// ESPRIT column for channels with `paths` components.
    pub fn esprit(paths: usize) -> Option<Self> {
        match paths {
            3 => Some(Method::Esprit3),
            5 => Some(Method::Esprit5),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub count: usize,
    /// Samples the method was applicable to but produced no estimate for.
    pub failures: usize,
    pub median: f64,
    pub mean: f64,
    pub median_db: f64,
    /// Mean of the per-sample NSE in dB.
    pub mean_db: f64,
    pub std_db: f64,
}

/// Per-sample NSE of every method on one evaluation set. `None` marks a
/// sample the method does not apply to or failed on.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NseReport {
    pub sample_ids: Vec<usize>,
    pub num_paths: Vec<usize>,
    pub values: BTreeMap<Method, Vec<Option<f64>>>,
    pub failures: BTreeMap<Method, usize>,
}

impl NseReport {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends one sample; methods missing from `row` get `None`.
    pub fn push(&mut self, id: usize, num_paths: usize, row: &[(Method, Option<f64>)]) {
        let n = self.sample_ids.len();
        self.sample_ids.push(id);
        self.num_paths.push(num_paths);
        for &(m, _) in row {
            self.values.entry(m).or_insert_with(|| vec![None; n]);
        }
        for (m, col) in self.values.iter_mut() {
            col.push(row.iter().find(|(k, _)| k == m).and_then(|(_, v)| *v));
        }
    }

    pub fn record_failure(&mut self, m: Method) {
        *self.failures.entry(m).or_default() += 1;
    }

    pub fn len(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sample_ids.is_empty()
    }

    /// Available values of one method.
    pub fn method_values(&self, m: Method) -> Vec<f64> {
        self.values.get(&m).map(|c| c.iter().flatten().copied().collect()).unwrap_or_default()
    }

    /// Samples where both methods have a value.
    pub fn paired(&self, a: Method, b: Method) -> Vec<(f64, f64)> {
        match (self.values.get(&a), self.values.get(&b)) {
            (Some(x), Some(y)) => x.iter().zip(y).filter_map(|(p, q)| Some(((*p)?, (*q)?))).collect(),
            _ => Vec::new(),
        }
    }

    pub fn cdf(&self, m: Method) -> Vec<(f64, f64)> {
        cdf_points(&self.method_values(m))
    }

    pub fn summary(&self) -> BTreeMap<Method, MethodSummary> {
        self.values
            .keys()
            .map(|&m| {
                let v = self.method_values(m);
                let n = v.len();
                let db: Vec<f64> = v.iter().map(|&x| to_db(x)).collect();
                let mean = v.iter().sum::<f64>() / n as f64;
                let mean_db = db.iter().sum::<f64>() / n as f64;
                let var_db = db.iter().map(|x| (x - mean_db).powi(2)).sum::<f64>() / n as f64;
                let med = median(&v).unwrap_or(f64::NAN);
                (
                    m,
                    MethodSummary {
                        count: n,
                        failures: self.failures.get(&m).copied().unwrap_or(0),
                        median: med,
                        mean,
                        median_db: to_db(med),
                        mean_db,
                        std_db: var_db.sqrt(),
                    },
                )
            })
            .collect()
    }

    /// `sample_id,num_paths,<method>...`; missing values are empty cells.
    pub fn to_csv(&self) -> String {
        let methods: Vec<Method> = self.values.keys().copied().collect();
        let mut out = String::from("sample_id,num_paths");
        for m in &methods {
            out.push(',');
            out.push_str(m.label());
        }
        out.push('\n');
        for (i, (id, paths)) in self.sample_ids.iter().zip(&self.num_paths).enumerate() {
            let _ = write!(out, "{id},{paths}");
            for m in &methods {
                out.push(',');
                if let Some(v) = self.values[m][i] {
                    let _ = write!(out, "{v:.12e}");
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Format("empty NSE table".into()))?;
        let cols: Vec<&str> = header.split(',').collect();
        if cols.len() < 2 || cols[0] != "sample_id" || cols[1] != "num_paths" {
            return Err(Error::Format(format!("unexpected NSE table header {header:?}")));
        }
        let methods = cols[2..]
            .iter()
            .map(|c| Method::from_label(c).ok_or_else(|| Error::Format(format!("unknown method column {c:?}"))))
            .collect::<Result<Vec<_>>>()?;
        let mut report = NseReport::new();
        for m in &methods {
            report.values.insert(*m, Vec::new());
        }
        let num = |s: &str, line: usize| -> Result<f64> {
            s.parse().map_err(|_| Error::Format(format!("line {line}: bad number {s:?}")))
        };
        for (k, line) in lines.enumerate() {
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != cols.len() {
                return Err(Error::Format(format!("line {}: expected {} cells", k + 2, cols.len())));
            }
            report.sample_ids.push(num(cells[0], k + 2)? as usize);
            report.num_paths.push(num(cells[1], k + 2)? as usize);
            for (m, c) in methods.iter().zip(&cells[2..]) {
                let v = if c.is_empty() { None } else { Some(num(c, k + 2)?) };
                report.values.get_mut(m).expect("inserted").push(v);
            }
        }
        Ok(report)
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Writes `nse_per_sample.csv`, `cdf_<method>.csv` and `summary.json` into
/// `dir` and returns the paths written.
pub fn export_report(report: &NseReport, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let table = dir.join("nse_per_sample.csv");
    write_file(&table, &report.to_csv())?;
    written.push(table);
    for &m in report.values.keys() {
        let mut csv = String::from("nse,fraction\n");
        for (x, f) in report.cdf(m) {
            let _ = writeln!(csv, "{x:.12e},{f:.12e}");
        }
        let path = dir.join(format!("cdf_{}.csv", m.label()));
        write_file(&path, &csv)?;
        written.push(path);
    }
    let summary: BTreeMap<&str, MethodSummary> = report.summary().into_iter().map(|(m, s)| (m.label(), s)).collect();
    let path = dir.join("summary.json");
    let json = serde_json::to_string_pretty(&summary).map_err(|e| Error::Format(e.to_string()))?;
    write_file(&path, &(json + "\n"))?;
    written.push(path);
    Ok(written)
}

/// Human-readable table of the summary statistics.
pub fn format_summary(report: &NseReport) -> String {
    let mut out = format!(
        "{:<12} {:>6} {:>8} {:>12} {:>12} {:>10}\n",
        "method", "count", "failed", "median [dB]", "mean [dB]", "std [dB]"
    );
    for (m, s) in report.summary() {
        let _ = writeln!(
            out,
            "{:<12} {:>6} {:>8} {:>12.3} {:>12.3} {:>10.3}",
            m.label(),
            s.count,
            s.failures,
            s.median_db,
            s.mean_db,
            s.std_db
        );
    }
    out
}
