//! Stage execution over one output directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use countquant_core::baselines::{
    continuous_poisson_three_step, integrated_squared_error, interpolate, jitter_quantile_fit,
    JitterOptions,
};
use countquant_core::mixture::{
    run_chain, ChainDiagnostics, DrawRecord, DrawsRecord, PosteriorDraw,
};
use countquant_core::model::{default_hyperparameters, Dataset};
use countquant_core::quantile::{quantile_draws, QuantileDrawMatrix};
use countquant_core::sim::{trimmed_grid, true_quantiles, SimConfig};
use countquant_core::spline::{general_bayes_update, DesignSpec};
use countquant_core::RngStream;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult, StageContext};
use crate::io::{
    baseline_rows, ingest_csv_rows, read_json, read_quantile_matrix, read_rows, summary_rows,
    truth_rows, write_dataset, write_json, write_quantile_matrix, write_rows, write_values,
    CurveRow, Standardization, TruthRow,
};
use crate::manifest::{RunManifest, RunStatus};

pub const DATA_FILE: &str = "data.csv";
pub const LATENT_FILE: &str = "latent.csv";
pub const TRUTH_FILE: &str = "truth.csv";
pub const SIMULATION_FILE: &str = "simulation.json";
pub const DRAWS_FILE: &str = "draws.json";
pub const COMPARISON_FILE: &str = "comparison.json";

/// Points of the trimmed grid on which curves are compared with the truth.
pub const COMPARISON_GRID_POINTS: usize = 100;

const BOOTSTRAP_STREAM: u64 = 0x100;
const JITTER_STREAM: u64 = 0x200;

pub const PROPOSED: &str = "proposed";
pub const CONTINUOUS_POISSON: &str = "continuous-poisson";
pub const JITTERING: &str = "jittering";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Simulate,
    Fit,
    Quantile,
    Regress,
    Baseline,
    Compare,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Simulate => "simulate",
            Stage::Fit => "fit",
            Stage::Quantile => "quantile",
            Stage::Regress => "regress",
            Stage::Baseline => "baseline",
            Stage::Compare => "compare",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct SimulationRecord {
    pub setting: u8,
    pub n: usize,
    pub seed: u64,
    /// Setting 1 reads its binomial components as single-trial.
    pub bernoulli_components: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct ChainRecord {
    pub stream_id: u64,
    pub cluster_counts: Vec<usize>,
    pub diagnostics: ChainDiagnostics,
}

/// Contents of the draws file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct FitRecord {
    pub standardization: Standardization,
    /// 1-based input row of each observation.
    pub rows: Vec<usize>,
    pub discount: f64,
    pub strength: f64,
    pub chains: Vec<ChainRecord>,
    pub posterior: DrawsRecord,
}

impl FitRecord {
    pub fn cluster_counts(&self) -> Vec<usize> {
        self.chains
            .iter()
            .flat_map(|c| c.cluster_counts.iter().copied())
            .collect()
    }

    pub fn diagnostics(&self) -> ChainDiagnostics {
        let mut d = ChainDiagnostics::default();
        for c in &self.chains {
            d.merge(&c.diagnostics);
        }
        d
    }

    pub fn draws(&self) -> CliResult<Vec<PosteriorDraw>> {
        self.posterior
            .draws
            .iter()
            .map(PosteriorDraw::try_from)
            .collect::<countquant_core::Result<_>>()
            .stage("quantile")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct ComparisonEntry {
    pub tau: f64,
    pub method: String,
    pub ise: f64,
    /// ISE divided by the ISE of the proposed method.
    pub relative_ise: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct Comparison {
    pub reference: String,
    pub grid_points: usize,
    pub entries: Vec<ComparisonEntry>,
}

impl Comparison {
    pub fn relative(&self, method: &str, tau: f64) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| e.method == method && e.tau == tau)
            .map(|e| e.relative_ise)
    }
}

pub fn tau_label(tau: f64) -> String {
    format!("tau-{tau}")
}

pub fn quantile_file(tau: f64) -> String {
    format!("quantiles/{}.csv", tau_label(tau))
}

pub fn curve_file(method: &str, tau: f64) -> String {
    format!("curves/{method}-{}.csv", tau_label(tau))
}

/// Pipeline bound to a validated configuration.
pub struct Pipeline {
    pub config: RunConfig,
}

impl Pipeline {
    pub fn new(config: RunConfig) -> Self {
        Self { config }
    }

    pub fn dir(&self) -> &Path {
        &self.config.output_dir
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.dir().join(rel)
    }

    /// Stages of the full pipeline: simulation and the comparison with the
    /// truth only when no input file is configured.
    pub fn full_stages(&self) -> Vec<Stage> {
        if self.config.data.input.is_some() {
            vec![Stage::Fit, Stage::Quantile, Stage::Regress, Stage::Baseline]
        } else {
            vec![
                Stage::Simulate,
                Stage::Fit,
                Stage::Quantile,
                Stage::Regress,
                Stage::Baseline,
                Stage::Compare,
            ]
        }
    }

    /// Run `stages` in order. A failing stage leaves earlier outputs in
    /// place and the manifest marked partial. The manifest is written last.
    pub fn run(&self, command: &str, stages: &[Stage]) -> CliResult<RunManifest> {
        let t0 = Instant::now();
        std::fs::create_dir_all(self.dir()).map_err(|e| CliError::io(self.dir(), e))?;
        let mut manifest = RunManifest::resume(self.dir(), command, &self.config)?;
        for &stage in stages {
            log::info!("stage {}", stage.name());
            let ts = Instant::now();
            let result = self.run_stage(stage).and_then(|files| {
                manifest.record(self.dir(), stage.name(), ts.elapsed().as_secs_f64(), &files)
            });
            if let Err(e) = result {
                manifest.status = RunStatus::Partial {
                    failed_stage: stage.name().into(),
                    error: e.to_string(),
                };
                manifest.wall_clock_seconds = t0.elapsed().as_secs_f64();
                if let Err(w) = manifest.write(self.dir()) {
                    log::error!("could not write the partial manifest: {w}");
                }
                return Err(e);
            }
        }
        manifest.wall_clock_seconds = t0.elapsed().as_secs_f64();
        manifest.write(self.dir())?;
        Ok(manifest)
    }

    fn run_stage(&self, stage: Stage) -> CliResult<Vec<String>> {
        match stage {
            Stage::Simulate => self.simulate(),
            Stage::Fit => self.fit(),
            Stage::Quantile => self.quantile(),
            Stage::Regress => self.regress(),
            Stage::Baseline => self.baseline(),
            Stage::Compare => self.compare(),
        }
    }

    fn simulation(&self) -> CliResult<Option<SimulationRecord>> {
        let p = self.path(SIMULATION_FILE);
        if self.config.data.input.is_some() || !p.exists() {
            return Ok(None);
        }
        read_json(&p).map(Some)
    }

    /// Input data and the 1-based row numbers kept.
    pub fn load_data(&self) -> CliResult<(Dataset, Vec<usize>)> {
        let d = &self.config.data;
        let path = match &d.input {
            Some(p) => p.clone(),
            None => {
                let p = self.path(DATA_FILE);
                if !p.exists() {
                    return Err(CliError::config(format!(
                        "no input data: set data.input or run simulate into {}",
                        self.dir().display()
                    )));
                }
                p
            }
        };
        ingest_csv_rows(&path, &d.response, &d.covariates, &d.exclude_rows)
    }

    fn load_fit(&self) -> CliResult<FitRecord> {
        let p = self.path(DRAWS_FILE);
        if !p.exists() {
            return Err(CliError::config(format!(
                "{} not found: run fit first",
                p.display()
            )));
        }
        read_json(&p)
    }

    /// Data on the fitting scale, with the transform and kept rows.
    fn fitting_data(
        &self,
        st: Option<&Standardization>,
    ) -> CliResult<(Dataset, Standardization, Vec<usize>)> {
        let (data, rows) = self.load_data()?;
        let st = match st {
            Some(s) => {
                if s.columns != data.columns() {
                    return Err(CliError::config(
                        "covariates differ from those of the fitted draws",
                    ));
                }
                s.clone()
            }
            None if self.config.standardize_covariates => Standardization::fit(&data)?,
            None => Standardization::identity(data.columns()),
        };
        let z = st.apply(&data)?;
        Ok((z, st, rows))
    }

    fn simulate(&self) -> CliResult<Vec<String>> {
        let setting = self.config.setting()?;
        let sim = SimConfig {
            setting,
            n: self.config.simulate.n,
            seed: self.config.seed,
        }
        .generate()
        .stage("simulate")?;
        let mut files = vec![DATA_FILE.to_string()];
        write_dataset(&self.path(DATA_FILE), &sim.data)?;
        if let Some(latent) = &sim.latent {
            write_values(&self.path(LATENT_FILE), "y-star", latent)?;
            files.push(LATENT_FILE.into());
        }
        let grid = trimmed_grid(&sim.data.column(0), COMPARISON_GRID_POINTS);
        let mut rows = Vec::new();
        for &tau in &self.config.taus {
            rows.extend(truth_rows(
                &true_quantiles(setting, tau, &grid).stage("simulate")?,
            ));
        }
        write_rows(&self.path(TRUTH_FILE), &rows)?;
        files.push(TRUTH_FILE.into());
        let rec = SimulationRecord {
            setting: setting.number(),
            n: self.config.simulate.n,
            seed: self.config.seed,
            bernoulli_components: setting.number() == 1,
        };
        write_json(&self.path(SIMULATION_FILE), &rec)?;
        files.push(SIMULATION_FILE.into());
        Ok(files)
    }

    fn fit(&self) -> CliResult<Vec<String>> {
        let (z, st, rows) = self.fitting_data(None)?;
        let base = default_hyperparameters(&z).stage("fit")?;
        let py = self.config.prior.resolve(z.n())?;
        let schedule = self.config.schedule.schedule();
        let options = self.config.sampler.options();
        let seed = self.config.seed;
        let outputs = std::thread::scope(|s| {
            let handles: Vec<_> = (0..self.config.schedule.chains)
                .map(|c| {
                    let (z, base) = (&z, &base);
                    s.spawn(move || {
                        run_chain(
                            z,
                            base,
                            &py,
                            schedule,
                            options,
                            RngStream::new(seed, c as u64 + 1),
                        )
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("chain thread panicked"))
                .collect::<Vec<_>>()
        });
        let mut chains = Vec::new();
        let mut draws = Vec::new();
        for (c, out) in outputs.into_iter().enumerate() {
            let out = out.stage(&format!("fit (chain {})", c + 1))?;
            draws.extend(out.draws.iter().map(DrawRecord::from));
            chains.push(ChainRecord {
                stream_id: c as u64 + 1,
                cluster_counts: out.cluster_counts,
                diagnostics: out.diagnostics,
            });
        }
        let rec = FitRecord {
            standardization: st,
            rows,
            discount: py.discount(),
            strength: py.strength(),
            chains,
            posterior: DrawsRecord {
                columns: z.columns().to_vec(),
                draws,
            },
        };
        write_json(&self.path(DRAWS_FILE), &rec)?;
        Ok(vec![DRAWS_FILE.into()])
    }

    fn quantile(&self) -> CliResult<Vec<String>> {
        let fit = self.load_fit()?;
        let (z, _, _) = self.fitting_data(Some(&fit.standardization))?;
        let draws = fit.draws()?;
        let ids: Vec<String> = fit.rows.iter().map(|r| r.to_string()).collect();
        if ids.len() != z.n() {
            return Err(CliError::config(
                "input rows differ from those of the fitted draws",
            ));
        }
        let q = parallel_quantiles(&draws, z.x(), &ids, &self.config)?;
        let mut files = Vec::new();
        for m in &q {
            let f = quantile_file(m.tau);
            write_quantile_matrix(&self.path(&f), m)?;
            files.push(f);
        }
        Ok(files)
    }

    fn regress(&self) -> CliResult<Vec<String>> {
        let fit = self.load_fit()?;
        let (z, st, _) = self.fitting_data(Some(&fit.standardization))?;
        let mut files = Vec::new();
        for &tau in &self.config.taus {
            let qp = self.path(&quantile_file(tau));
            if !qp.exists() {
                return Err(CliError::config(format!(
                    "{} not found: run quantile first",
                    qp.display()
                )));
            }
            let q = read_quantile_matrix(&qp)?;
            let r = general_bayes_update(&q, z.x(), z.columns(), &self.config.regression.design)
                .stage("regress")?;
            let f = curve_file(PROPOSED, tau);
            write_rows(&self.path(&f), &summary_rows(&r.summarize(true), &st))?;
            files.push(f);
        }
        Ok(files)
    }

    /// Baseline design: the configured one, else a quadratic for simulated
    /// setting 1 and the regression design otherwise.
    pub fn baseline_design(&self) -> CliResult<DesignSpec> {
        if let Some(d) = self.config.baseline.design {
            return Ok(d);
        }
        Ok(match self.simulation()? {
            Some(s) if s.setting == 1 => DesignSpec::Polynomial { degree: 2 },
            _ => self.config.regression.design,
        })
    }

    fn baseline(&self) -> CliResult<Vec<String>> {
        let st = if self.path(DRAWS_FILE).exists() {
            Some(self.load_fit()?.standardization)
        } else {
            None
        };
        let (z, st, _) = self.fitting_data(st.as_ref())?;
        let design = self.baseline_design()?;
        let taus = &self.config.taus;
        let seed = self.config.seed;
        let mut files = Vec::new();
        let cp = continuous_poisson_three_step(
            &z,
            &design,
            taus,
            self.config.baseline.bootstrap,
            &mut RngStream::new(seed, BOOTSTRAP_STREAM),
        )
        .stage("baseline (continuous Poisson)")?;
        for &tau in taus {
            let curves: Vec<_> = cp.iter().filter(|c| c.tau == tau).cloned().collect();
            let f = curve_file(CONTINUOUS_POISSON, tau);
            write_rows(&self.path(&f), &baseline_rows(&curves, &st))?;
            files.push(f);
        }
        let opts = JitterOptions {
            n_jitters: self.config.baseline.n_jitters,
            ..JitterOptions::default()
        };
        for (t, &tau) in taus.iter().enumerate() {
            let curves = jitter_quantile_fit(
                &z,
                &design,
                tau,
                &opts,
                &mut RngStream::new(seed, JITTER_STREAM + t as u64),
            )
            .stage("baseline (jittering)")?;
            let f = curve_file(JITTERING, tau);
            write_rows(&self.path(&f), &baseline_rows(&curves, &st))?;
            files.push(f);
        }
        Ok(files)
    }

    fn compare(&self) -> CliResult<Vec<String>> {
        if self.simulation()?.is_none() {
            return Err(CliError::config(
                "compare needs simulated data with a known truth",
            ));
        }
        let truth: Vec<TruthRow> = read_rows(&self.path(TRUTH_FILE))?;
        let mut entries = Vec::new();
        for &tau in &self.config.taus {
            let t: Vec<&TruthRow> = truth.iter().filter(|r| r.tau == tau).collect();
            if t.is_empty() {
                return Err(CliError::config(format!(
                    "no truth for tau {tau}; re-run simulate"
                )));
            }
            let grid: Vec<f64> = t.iter().map(|r| r.grid_x).collect();
            let y: Vec<f64> = t.iter().map(|r| r.y_star).collect();
            let mut ise = BTreeMap::new();
            for method in [PROPOSED, CONTINUOUS_POISSON, JITTERING] {
                let rows: Vec<CurveRow> = read_rows(&self.path(&curve_file(method, tau)))?;
                if rows.iter().any(|r| r.covariate != rows[0].covariate) {
                    return Err(CliError::config("compare supports a single covariate"));
                }
                let g: Vec<f64> = rows.iter().map(|r| r.grid_x).collect();
                let v: Vec<f64> = rows.iter().map(|r| r.mean).collect();
                let c = interpolate(&g, &v, &grid).stage("compare")?;
                ise.insert(
                    method,
                    integrated_squared_error(&c, &y, &grid).stage("compare")?,
                );
            }
            let reference = ise[PROPOSED];
            if !(reference > 0.0) {
                return Err(CliError::Numeric {
                    stage: "compare".into(),
                    source: countquant_core::Error::Numerical("proposed curve has zero ISE".into()),
                });
            }
            for method in [PROPOSED, CONTINUOUS_POISSON, JITTERING] {
                entries.push(ComparisonEntry {
                    tau,
                    method: method.into(),
                    ise: ise[method],
                    relative_ise: ise[method] / reference,
                });
            }
        }
        let c = Comparison {
            reference: PROPOSED.into(),
            grid_points: COMPARISON_GRID_POINTS,
            entries,
        };
        write_json(&self.path(COMPARISON_FILE), &c)?;
        Ok(vec![COMPARISON_FILE.into()])
    }
}

/// Quantile draws with the posterior draws split across threads. Output is
/// independent of the thread count.
fn parallel_quantiles(
    draws: &[PosteriorDraw],
    x: &DMatrix<f64>,
    ids: &[String],
    config: &RunConfig,
) -> CliResult<Vec<QuantileDrawMatrix>> {
    let threads = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1);
    let chunk = draws.len().div_ceil(threads).max(1);
    let (taus, mode, tol) = (&config.taus, config.quantile.mode, config.quantile.tol);
    let parts = std::thread::scope(|s| {
        let handles: Vec<_> = draws
            .chunks(chunk)
            .map(|c| s.spawn(move || quantile_draws(c, x, ids, taus, mode, tol)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("quantile thread panicked"))
            .collect::<countquant_core::Result<Vec<_>>>()
    })
    .stage("quantile")?;
    let n = x.nrows();
    let mut out = Vec::with_capacity(taus.len());
    for t in 0..taus.len() {
        let mut values = DMatrix::zeros(draws.len(), n);
        let mut invalid = Vec::new();
        let mut offset = 0;
        for part in &parts {
            let m = &part[t];
            values.rows_mut(offset, m.n_draws()).copy_from(&m.values);
            invalid.extend(m.invalid.iter().map(|&(s, i)| (s + offset, i)));
            offset += m.n_draws();
        }
        invalid.sort_unstable();
        invalid.dedup();
        out.push(QuantileDrawMatrix {
            tau: taus[t],
            mode,
            tol,
            values,
            observation_ids: ids.to_vec(),
            invalid,
        });
    }
    Ok(out)
}
