//! Human-readable summaries of a run and of input data.

use std::fmt;
use std::path::Path;

use countquant_core::model::Dataset;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::io::read_json;
use crate::manifest::{RunManifest, RunStatus};
use crate::pipeline::{Comparison, FitRecord, COMPARISON_FILE, DRAWS_FILE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct ClusterSummary {
    pub mean: f64,
    pub lower_95: f64,
    pub upper_95: f64,
    pub draws: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct Acceptance {
    pub rwmh: f64,
    pub armh: f64,
    pub armh_fallbacks: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct Report {
    pub command: String,
    pub status: RunStatus,
    pub discount: Option<f64>,
    pub strength: Option<f64>,
    pub clusters: Option<ClusterSummary>,
    pub acceptance: Option<Acceptance>,
    /// Curve files by stage.
    pub curves: Vec<(String, String)>,
    pub comparison: Option<Comparison>,
}

fn type7(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn cluster_summary(counts: &[usize]) -> Option<ClusterSummary> {
    if counts.is_empty() {
        return None;
    }
    let mut v: Vec<f64> = counts.iter().map(|&k| k as f64).collect();
    v.sort_by(f64::total_cmp);
    Some(ClusterSummary {
        mean: v.iter().sum::<f64>() / v.len() as f64,
        lower_95: type7(&v, 0.025),
        upper_95: type7(&v, 0.975),
        draws: v.len(),
    })
}

/// Report on the run recorded in `dir`. Recorded files that are missing or
/// altered are an error listing them.
pub fn report(dir: &Path) -> CliResult<Report> {
    let manifest = RunManifest::load(dir)?;
    manifest.ensure_nonempty()?;
    let missing = manifest.missing_artifacts(dir);
    if !missing.is_empty() {
        return Err(CliError::io(
            dir,
            format!("missing or altered artifacts: {}", missing.join(", ")),
        ));
    }
    let mut r = Report {
        command: manifest.command.clone(),
        status: manifest.status.clone(),
        discount: None,
        strength: None,
        clusters: None,
        acceptance: None,
        curves: Vec::new(),
        comparison: None,
    };
    if manifest.stage("fit").is_some() {
        let fit: FitRecord = read_json(&dir.join(DRAWS_FILE))?;
        let d = fit.diagnostics();
        r.discount = Some(fit.discount);
        r.strength = Some(fit.strength);
        r.clusters = cluster_summary(&fit.cluster_counts());
        r.acceptance = Some(Acceptance {
            rwmh: d.rw_rate(),
            armh: d.ar_rate(),
            armh_fallbacks: d.ar_fallbacks,
        });
    }
    for stage in ["regress", "baseline"] {
        if let Some(s) = manifest.stage(stage) {
            r.curves
                .extend(s.files.iter().map(|f| (stage.to_string(), f.path.clone())));
        }
    }
    if manifest.stage("compare").is_some() {
        r.comparison = Some(read_json(&dir.join(COMPARISON_FILE))?);
    }
    Ok(r)
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "command: {}", self.command)?;
        match &self.status {
            RunStatus::Complete => writeln!(f, "status: complete")?,
            RunStatus::Partial {
                failed_stage,
                error,
            } => writeln!(f, "status: partial (stage {failed_stage} failed: {error})")?,
        }
        if let (Some(d), Some(s)) = (self.discount, self.strength) {
            writeln!(f, "Pitman-Yor prior: discount {d:.4}, strength {s:.4}")?;
        }
        if let Some(c) = &self.clusters {
            writeln!(
                f,
                "clusters: mean {:.3}, 95% interval [{}, {}] over {} draws",
                c.mean, c.lower_95, c.upper_95, c.draws
            )?;
        }
        if let Some(a) = &self.acceptance {
            writeln!(
                f,
                "acceptance: RWMH {:.3}, ARMH {:.3}, ARMH fallbacks {}",
                a.rwmh, a.armh, a.armh_fallbacks
            )?;
        }
        if !self.curves.is_empty() {
            writeln!(f, "curve files:")?;
            for (stage, path) in &self.curves {
                writeln!(f, "  {stage:<9} {path}")?;
            }
        }
        if let Some(c) = &self.comparison {
            let mut taus: Vec<f64> = c.entries.iter().map(|e| e.tau).collect();
            taus.dedup();
            writeln!(f, "ISE relative to the {} method:", c.reference)?;
            write!(f, "  {:<20}", "")?;
            for t in &taus {
                write!(f, "{:>12}", format!("tau={t}"))?;
            }
            writeln!(f)?;
            let mut methods: Vec<&str> = Vec::new();
            for e in &c.entries {
                if e.method != c.reference && !methods.contains(&e.method.as_str()) {
                    methods.push(&e.method);
                }
            }
            for m in methods {
                write!(f, "  {m:<20}")?;
                for &t in &taus {
                    match c.relative(m, t) {
                        Some(v) => write!(f, "{v:>12.3}")?,
                        None => write!(f, "{:>12}", "-")?,
                    }
                }
                writeln!(f)?;
            }
        }
        Ok(())
    }
}

/// Mean and sd (n − 1 divisor) of the response and each covariate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryTable {
    pub variables: Vec<String>,
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

pub fn summarize(data: &Dataset, response: &str) -> SummaryTable {
    let mut variables = vec![response.to_string()];
    let mut cols = vec![data.y().iter().map(|&v| v as f64).collect::<Vec<_>>()];
    for (j, name) in data.columns().iter().enumerate() {
        variables.push(name.clone());
        cols.push(data.column(j));
    }
    let n = data.n() as f64;
    let mean: Vec<f64> = cols.iter().map(|c| c.iter().sum::<f64>() / n).collect();
    let sd = cols
        .iter()
        .zip(&mean)
        .map(|(c, m)| (c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt())
        .collect();
    SummaryTable {
        variables,
        mean,
        sd,
    }
}

impl fmt::Display for SummaryTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let w = self
            .variables
            .iter()
            .map(|v| v.len())
            .max()
            .unwrap_or(0)
            .max(9)
            + 2;
        write!(f, "{:<6}", "")?;
        for v in &self.variables {
            write!(f, "{v:>w$}")?;
        }
        writeln!(f)?;
        for (label, row) in [("Mean", &self.mean), ("SD", &self.sd)] {
            write!(f, "{label:<6}")?;
            for v in row {
                write!(f, "{v:>w$.3}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn cluster_interval() {
        let s = cluster_summary(&[3, 4, 4, 5, 6]).unwrap();
        assert_eq!(s.mean, 4.4);
        assert!(s.lower_95 >= 3.0 && s.upper_95 <= 6.0);
        assert!(cluster_summary(&[]).is_none());
    }

    #[test]
    fn summary_table() {
        let x = DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 3.0]);
        let data = Dataset::with_default_names(vec![2, 4, 6], x).unwrap();
        let t = summarize(&data, "los");
        assert_eq!(t.variables, ["los", "x1"]);
        assert_eq!((t.mean[0], t.sd[0], t.sd[1]), (4.0, 2.0, 1.0));
        let text = t.to_string();
        assert!(text.lines().nth(1).unwrap().starts_with("Mean"));
    }
}
