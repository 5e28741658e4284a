//! CSV and JSON files read and written by the pipeline.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use countquant_core::baselines::BaselineCurve;
use countquant_core::model::Dataset;
use countquant_core::quantile::{QuantileDrawMatrix, QuantileMode};
use countquant_core::sim::TruthCurve;
use countquant_core::spline::CurveSummary;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

/// Column means and standard deviations used to z-score covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub columns: Vec<String>,
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

impl Standardization {
    /// Identity transform for `columns`.
    pub fn identity(columns: &[String]) -> Self {
        Self {
            columns: columns.to_vec(),
            means: vec![0.0; columns.len()],
            sds: vec![1.0; columns.len()],
        }
    }

    /// Sample mean and sd (n − 1 divisor) of each column.
    pub fn fit(data: &Dataset) -> CliResult<Self> {
        let n = data.n() as f64;
        let mut means = Vec::new();
        let mut sds = Vec::new();
        for (j, name) in data.columns().iter().enumerate() {
            let c = data.column(j);
            let m = c.iter().sum::<f64>() / n;
            let sd = (c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
            if !(sd > 0.0) {
                return Err(CliError::config(format!("covariate `{name}` is constant")));
            }
            means.push(m);
            sds.push(sd);
        }
        Ok(Self {
            columns: data.columns().to_vec(),
            means,
            sds,
        })
    }

    pub fn apply(&self, data: &Dataset) -> CliResult<Dataset> {
        let x = DMatrix::from_fn(data.n(), data.p(), |i, j| {
            (data.x()[(i, j)] - self.means[j]) / self.sds[j]
        });
        Dataset::new(data.y().to_vec(), x, data.columns().to_vec())
            .map_err(|e| CliError::config(e.to_string()))
    }

    pub fn forward(&self, j: usize, v: f64) -> f64 {
        (v - self.means[j]) / self.sds[j]
    }

    pub fn back(&self, j: usize, v: f64) -> f64 {
        v * self.sds[j] + self.means[j]
    }
}

fn open(path: &Path) -> CliResult<File> {
    File::open(path).map_err(|e| CliError::io(path, e))
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    if e.is_io_error() {
        CliError::io(path, e)
    } else {
        CliError::config(format!("{}: {e}", path.display()))
    }
}

fn parse_count(raw: &str) -> Option<u64> {
    let s = raw.trim();
    if let Ok(v) = s.parse::<u64>() {
        return Some(v);
    }
    // accept integral decimals such as "3.0"
    let v: f64 = s.parse().ok()?;
    (v >= 0.0 && v.fract() == 0.0 && v < 9.0e15).then_some(v as u64)
}

/// Read a count response and continuous covariates from a headed CSV.
/// `exclude_rows` are 1-based data rows. Empty `covariates` selects every
/// other column.
pub fn ingest_csv(
    path: &Path,
    response: &str,
    covariates: &[String],
    exclude_rows: &[usize],
) -> CliResult<Dataset> {
    ingest_csv_rows(path, response, covariates, exclude_rows).map(|(d, _)| d)
}

/// As [`ingest_csv`], also returning the 1-based row number of each kept
/// observation.
pub fn ingest_csv_rows(
    path: &Path,
    response: &str,
    covariates: &[String],
    exclude_rows: &[usize],
) -> CliResult<(Dataset, Vec<usize>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(open(path)?);
    let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::config(format!("{}: no column `{name}`", path.display())))
    };
    let yi = find(response)?;
    let names: Vec<String> = if covariates.is_empty() {
        headers
            .iter()
            .filter(|h| *h != response)
            .map(String::from)
            .collect()
    } else {
        covariates.to_vec()
    };
    if names.is_empty() {
        return Err(CliError::config(format!(
            "{}: no covariate columns",
            path.display()
        )));
    }
    let xi = names
        .iter()
        .map(|n| find(n))
        .collect::<CliResult<Vec<_>>>()?;
    let mut y = Vec::new();
    let mut xs = Vec::new();
    let mut kept = Vec::new();
    let mut seen = 0;
    for (r, rec) in rdr.records().enumerate() {
        let row = r + 1;
        let rec = rec.map_err(|e| csv_error(path, e))?;
        seen = row;
        if exclude_rows.contains(&row) {
            continue;
        }
        let cell = rec.get(yi).unwrap_or("");
        let count = parse_count(cell).ok_or_else(|| {
            CliError::config(format!(
                "{} row {row}: response `{response}` value {cell:?} is not a nonnegative integer count",
                path.display()
            ))
        })?;
        y.push(count);
        kept.push(row);
        for (k, &c) in xi.iter().enumerate() {
            let cell = rec.get(c).unwrap_or("");
            let v: f64 = cell
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| {
                    CliError::config(format!(
                        "{} row {row}: covariate `{}` value {cell:?} is not a finite number",
                        path.display(),
                        names[k]
                    ))
                })?;
            xs.push(v);
        }
    }
    if let Some(r) = exclude_rows.iter().find(|&&r| r > seen) {
        return Err(CliError::config(format!(
            "excluded row {r} beyond the {seen} data rows"
        )));
    }
    let n = y.len();
    let x = DMatrix::from_row_slice(n, names.len(), &xs);
    let data = Dataset::new(y, x, names)
        .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    Ok((data, kept))
}

/// Response column `y` followed by the covariates.
pub fn write_dataset(path: &Path, data: &Dataset) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let mut header = vec!["y".to_string()];
    header.extend(data.columns().iter().cloned());
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    for i in 0..data.n() {
        let mut rec = vec![data.y()[i].to_string()];
        rec.extend((0..data.p()).map(|j| data.x()[(i, j)].to_string()));
        w.write_record(&rec).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn write_values(path: &Path, name: &str, values: &[f64]) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record([name]).map_err(|e| csv_error(path, e))?;
    for v in values {
        w.write_record([v.to_string()])
            .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct QuantileHeader {
    tau: f64,
    mode: QuantileMode,
    tol: f64,
    invalid: Vec<(usize, usize)>,
}

/// One `#`-prefixed JSON header line, then draws × observations as CSV
/// with observation ids as the column header.
pub fn write_quantile_matrix(path: &Path, q: &QuantileDrawMatrix) -> CliResult<()> {
    let mut f = create(path)?;
    let header = QuantileHeader {
        tau: q.tau,
        mode: q.mode,
        tol: q.tol,
        invalid: q.invalid.clone(),
    };
    writeln!(
        f,
        "# {}",
        serde_json::to_string(&header).expect("header serializes")
    )
    .map_err(|e| CliError::io(path, e))?;
    let mut w = csv::Writer::from_writer(f);
    w.write_record(&q.observation_ids)
        .map_err(|e| csv_error(path, e))?;
    for s in 0..q.n_draws() {
        w.write_record(q.values.row(s).iter().map(|v| v.to_string()))
            .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn read_quantile_matrix(path: &Path) -> CliResult<QuantileDrawMatrix> {
    let mut r = BufReader::new(open(path)?);
    let mut first = String::new();
    r.read_line(&mut first).map_err(|e| CliError::io(path, e))?;
    let json = first
        .strip_prefix("# ")
        .ok_or_else(|| CliError::config(format!("{}: missing JSON header line", path.display())))?;
    let header: QuantileHeader = serde_json::from_str(json.trim())
        .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    let mut rdr = csv::Reader::from_reader(r);
    let ids: Vec<String> = rdr
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(String::from)
        .collect();
    let mut vals = Vec::new();
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        for cell in rec.iter() {
            vals.push(cell.parse::<f64>().map_err(|_| {
                CliError::config(format!(
                    "{}: bad value {cell:?} in draw {rows}",
                    path.display()
                ))
            })?);
        }
        rows += 1;
    }
    Ok(QuantileDrawMatrix {
        tau: header.tau,
        mode: header.mode,
        tol: header.tol,
        values: DMatrix::from_row_slice(rows, ids.len(), &vals),
        observation_ids: ids,
        invalid: header.invalid,
    })
}

/// Row of a curve file; the band is empty for methods without one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub covariate: String,
    #[serde(rename = "grid-x")]
    pub grid_x: f64,
    #[serde(rename = "posterior-mean")]
    pub mean: f64,
    #[serde(rename = "lower-95")]
    pub lower: Option<f64>,
    #[serde(rename = "upper-95")]
    pub upper: Option<f64>,
    pub tau: f64,
}

/// Rows of a regression summary with grids mapped back to the original
/// covariate scale.
pub fn summary_rows(summaries: &[CurveSummary], st: &Standardization) -> Vec<CurveRow> {
    let mut rows = Vec::new();
    for s in summaries {
        let j = st
            .columns
            .iter()
            .position(|c| *c == s.covariate)
            .expect("known covariate");
        for k in 0..s.grid.len() {
            rows.push(CurveRow {
                covariate: s.covariate.clone(),
                grid_x: st.back(j, s.grid[k]),
                mean: s.mean[k],
                lower: Some(s.lower[k]),
                upper: Some(s.upper[k]),
                tau: s.tau,
            });
        }
    }
    rows
}

pub fn baseline_rows(curves: &[BaselineCurve], st: &Standardization) -> Vec<CurveRow> {
    let mut rows = Vec::new();
    for c in curves {
        let j = st
            .columns
            .iter()
            .position(|n| *n == c.covariate)
            .expect("known covariate");
        for k in 0..c.grid.len() {
            rows.push(CurveRow {
                covariate: c.covariate.clone(),
                grid_x: st.back(j, c.grid[k]),
                mean: c.estimate[k],
                lower: c.lower.as_ref().map(|l| l[k]),
                upper: c.upper.as_ref().map(|u| u[k]),
                tau: c.tau,
            });
        }
    }
    rows
}

pub fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for r in rows {
        w.serialize(r).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<Vec<T>> {
    let mut rdr = csv::Reader::from_reader(open(path)?);
    rdr.deserialize()
        .map(|r| r.map_err(|e| csv_error(path, e)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRow {
    pub tau: f64,
    #[serde(rename = "grid-x")]
    pub grid_x: f64,
    #[serde(rename = "y-star-true")]
    pub y_star: f64,
}

pub fn truth_rows(t: &TruthCurve) -> Vec<TruthRow> {
    t.grid
        .iter()
        .zip(&t.y_star)
        .map(|(&g, &y)| TruthRow {
            tau: t.tau,
            grid_x: g,
            y_star: y,
        })
        .collect()
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut f = create(path)?;
    serde_json::to_writer_pretty(&mut f, value).map_err(|e| CliError::io(path, e))?;
    writeln!(f)
        .and_then(|_| f.flush())
        .map_err(|e| CliError::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let f = BufReader::new(open(path)?);
    serde_json::from_reader(f).map_err(|e| {
        if e.is_io() {
            CliError::io(path, e)
        } else {
            CliError::config(format!("{}: {e}", path.display()))
        }
    })
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let mut f = open(path)?;
    let mut h = Sha256::new();
    let mut buf = [0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf).map_err(|e| CliError::io(path, e))?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(format!("{:x}", h.finalize()))
}
