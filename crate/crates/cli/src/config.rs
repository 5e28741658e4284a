//! Run configuration: TOML file, command-line overrides, validation.

use std::path::{Path, PathBuf};

use countquant_core::mixture::{
    AssignmentScheme, ChainOptions, LatentMoments, MuSigmaConditional, Schedule,
};
use countquant_core::model::PyParams;
use countquant_core::quantile::{QuantileMode, DEFAULT_QUANTILE_TOL};
use countquant_core::sim::Setting;
use countquant_core::spline::DesignSpec;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const DEFAULT_DISCOUNT: f64 = 0.4777;
pub const DEFAULT_STRENGTH: f64 = -0.2171;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct RunConfig {
    pub output_dir: PathBuf,
    pub seed: u64,
    pub taus: Vec<f64>,
    /// Z-score covariates before fitting; curve axes are reported on the
    /// original scale.
    pub standardize_covariates: bool,
    pub data: DataConfig,
    pub simulate: SimulateConfig,
    pub schedule: ScheduleConfig,
    pub prior: PriorConfig,
    pub sampler: SamplerConfig,
    pub quantile: QuantileConfig,
    pub regression: RegressionConfig,
    pub baseline: BaselineConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            output_dir: PathBuf::from("countquant-out"),
            seed: 1,
            taus: vec![0.1, 0.5, 0.9],
            standardize_covariates: true,
            data: DataConfig::default(),
            simulate: SimulateConfig::default(),
            schedule: ScheduleConfig::default(),
            prior: PriorConfig::default(),
            sampler: SamplerConfig::default(),
            quantile: QuantileConfig::default(),
            regression: RegressionConfig::default(),
            baseline: BaselineConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct DataConfig {
    /// CSV to fit. When absent, `fit` uses the simulated data in the output
    /// directory.
    pub input: Option<PathBuf>,
    pub response: String,
    /// Empty means every column except the response.
    pub covariates: Vec<String>,
    /// 1-based data row numbers (header excluded) to drop.
    pub exclude_rows: Vec<usize>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            input: None,
            response: "y".into(),
            covariates: Vec::new(),
            exclude_rows: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct SimulateConfig {
    pub setting: u8,
    pub n: usize,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self { setting: 2, n: 300 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct ScheduleConfig {
    pub burn_in: usize,
    pub iterations: usize,
    pub thin: usize,
    pub m: usize,
    pub chains: usize,
    pub rw_switch: Option<usize>,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            burn_in: 1000,
            iterations: 3000,
            thin: 15,
            m: 10,
            chains: 2,
            rw_switch: None,
        }
    }
}

impl ScheduleConfig {
    pub fn schedule(&self) -> Schedule {
        Schedule {
            burn_in: self.burn_in,
            iterations: self.iterations,
            thin: self.thin,
            m: self.m,
            rw_switch: self.rw_switch,
        }
    }
}

/// Either explicit (discount, strength) or prior targets for the number of
/// clusters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PriorConfig {
    Explicit(ExplicitPrior),
    Targets(ClusterTargets),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct ExplicitPrior {
    pub discount: f64,
    pub strength: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct ClusterTargets {
    pub cluster_mean: f64,
    pub cluster_sd: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        PriorConfig::Explicit(ExplicitPrior {
            discount: DEFAULT_DISCOUNT,
            strength: DEFAULT_STRENGTH,
        })
    }
}

impl PriorConfig {
    /// Resolve to PY parameters for `n` observations.
    pub fn resolve(&self, n: usize) -> CliResult<PyParams> {
        match *self {
            PriorConfig::Explicit(e) => {
                PyParams::new(e.discount, e.strength).map_err(|e| CliError::config(e.to_string()))
            }
            PriorConfig::Targets(t) => {
                countquant_core::calibrate::solve_py_params(t.cluster_mean, t.cluster_sd, n)
                    .map_err(|e| CliError::config(format!("prior targets: {e}")))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct SamplerConfig {
    pub prior_only: bool,
    pub latent_moments: LatentMoments,
    pub assignment: AssignmentScheme,
    pub mu_sigma: MuSigmaConditional,
    pub rw_step: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        let o = ChainOptions::default();
        Self {
            prior_only: o.prior_only,
            latent_moments: o.latent_moments,
            assignment: o.assignment,
            mu_sigma: o.mu_sigma,
            rw_step: o.rw_step,
        }
    }
}

impl SamplerConfig {
    pub fn options(&self) -> ChainOptions {
        ChainOptions {
            prior_only: self.prior_only,
            latent_moments: self.latent_moments,
            assignment: self.assignment,
            mu_sigma: self.mu_sigma,
            rw_step: self.rw_step,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct QuantileConfig {
    pub mode: QuantileMode,
    pub tol: f64,
}

impl Default for QuantileConfig {
    fn default() -> Self {
        Self {
            mode: QuantileMode::default(),
            tol: DEFAULT_QUANTILE_TOL,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct RegressionConfig {
    pub design: DesignSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct BaselineConfig {
    /// Design of both baselines. When absent: a quadratic polynomial for
    /// simulated setting 1, otherwise the regression design.
    pub design: Option<DesignSpec>,
    pub bootstrap: usize,
    pub n_jitters: usize,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            design: None,
            bootstrap: 100,
            n_jitters: 50,
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub output_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub taus: Option<Vec<f64>>,
    pub no_standardize: bool,
    pub input: Option<PathBuf>,
    pub response: Option<String>,
    pub covariates: Option<Vec<String>>,
    pub exclude_rows: Option<Vec<usize>>,
    pub setting: Option<u8>,
    pub n: Option<usize>,
    pub burn_in: Option<usize>,
    pub iterations: Option<usize>,
    pub thin: Option<usize>,
    pub m: Option<usize>,
    pub chains: Option<usize>,
    pub discount: Option<f64>,
    pub strength: Option<f64>,
    pub cluster_mean: Option<f64>,
    pub cluster_sd: Option<f64>,
    pub prior_only: bool,
    pub quantile_mode: Option<QuantileMode>,
    pub bootstrap: Option<usize>,
    pub n_jitters: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, c: &mut RunConfig) -> CliResult<()> {
        fn set<T: Clone>(slot: &mut T, v: &Option<T>) {
            if let Some(v) = v {
                *slot = v.clone();
            }
        }
        set(&mut c.output_dir, &self.output_dir);
        set(&mut c.seed, &self.seed);
        set(&mut c.taus, &self.taus);
        if self.no_standardize {
            c.standardize_covariates = false;
        }
        if self.input.is_some() {
            c.data.input = self.input.clone();
        }
        set(&mut c.data.response, &self.response);
        set(&mut c.data.covariates, &self.covariates);
        set(&mut c.data.exclude_rows, &self.exclude_rows);
        set(&mut c.simulate.setting, &self.setting);
        set(&mut c.simulate.n, &self.n);
        set(&mut c.schedule.burn_in, &self.burn_in);
        set(&mut c.schedule.iterations, &self.iterations);
        set(&mut c.schedule.thin, &self.thin);
        set(&mut c.schedule.m, &self.m);
        set(&mut c.schedule.chains, &self.chains);
        // a pair on the command line may replace the other kind from the file
        if self.discount.is_some() || self.strength.is_some() {
            let (d, st) = match c.prior {
                PriorConfig::Explicit(e) => (
                    self.discount.unwrap_or(e.discount),
                    self.strength.unwrap_or(e.strength),
                ),
                PriorConfig::Targets(_) => match (self.discount, self.strength) {
                    (Some(d), Some(s)) => (d, s),
                    _ => {
                        return Err(CliError::config(
                            "--discount and --strength must be given together",
                        ))
                    }
                },
            };
            c.prior = PriorConfig::Explicit(ExplicitPrior {
                discount: d,
                strength: st,
            });
        }
        if self.cluster_mean.is_some() || self.cluster_sd.is_some() {
            let (m, sd) = match c.prior {
                PriorConfig::Targets(t) => (
                    self.cluster_mean.unwrap_or(t.cluster_mean),
                    self.cluster_sd.unwrap_or(t.cluster_sd),
                ),
                PriorConfig::Explicit(_) => match (self.cluster_mean, self.cluster_sd) {
                    (Some(m), Some(sd)) => (m, sd),
                    _ => {
                        return Err(CliError::config(
                            "--cluster-mean and --cluster-sd must be given together",
                        ))
                    }
                },
            };
            c.prior = PriorConfig::Targets(ClusterTargets {
                cluster_mean: m,
                cluster_sd: sd,
            });
        }
        if self.prior_only {
            c.sampler.prior_only = true;
        }
        set(&mut c.quantile.mode, &self.quantile_mode);
        set(&mut c.baseline.bootstrap, &self.bootstrap);
        set(&mut c.baseline.n_jitters, &self.n_jitters);
        Ok(())
    }
}

impl RunConfig {
    /// Defaults, then the file, then the overrides; validated.
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> CliResult<Self> {
        let mut c = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
                Self::from_toml(&text)?
            }
            None => Self::default(),
        };
        overrides.apply(&mut c)?;
        c.validate()?;
        Ok(c)
    }

    pub fn from_toml(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn setting(&self) -> CliResult<Setting> {
        Setting::from_number(self.simulate.setting).map_err(|e| CliError::config(e.to_string()))
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.taus.is_empty() {
            return bad("taus must not be empty".into());
        }
        if let Some(t) = self.taus.iter().find(|t| !(**t > 0.0 && **t < 1.0)) {
            return bad(format!("tau {t} outside (0, 1)"));
        }
        if self.taus.windows(2).any(|w| !(w[1] > w[0])) {
            return bad("taus must be strictly increasing".into());
        }
        // TOML integers are signed 64-bit
        if self.seed > i64::MAX as u64 {
            return bad(format!(
                "seed must be at most {}, got {}",
                i64::MAX,
                self.seed
            ));
        }
        self.setting()?;
        if self.simulate.n < 10 {
            return bad(format!(
                "simulate.n must be at least 10, got {}",
                self.simulate.n
            ));
        }
        let s = &self.schedule;
        if s.iterations == 0 || s.thin == 0 || s.m == 0 {
            return bad("schedule needs positive iterations, thin and m".into());
        }
        if s.thin > s.iterations {
            return bad(format!(
                "thin {} exceeds iterations {}",
                s.thin, s.iterations
            ));
        }
        if !(1..=64).contains(&s.chains) {
            return bad(format!("chains must lie in 1..=64, got {}", s.chains));
        }
        // resolves the PY parameters or reports the inconsistency
        self.prior.resolve(self.simulate.n)?;
        if !(self.sampler.rw_step > 0.0 && self.sampler.rw_step.is_finite()) {
            return bad(format!(
                "sampler.rw-step must be positive, got {}",
                self.sampler.rw_step
            ));
        }
        if !(self.quantile.tol > 0.0 && self.quantile.tol <= 1e-2) {
            return bad(format!(
                "quantile.tol must lie in (0, 0.01], got {}",
                self.quantile.tol
            ));
        }
        for d in std::iter::once(&self.regression.design).chain(self.baseline.design.as_ref()) {
            match d {
                DesignSpec::Spline(sp) => {
                    sp.validate().map_err(|e| CliError::config(e.to_string()))?
                }
                DesignSpec::Polynomial { degree } if !(1..=10).contains(degree) => {
                    return bad(format!(
                        "polynomial degree must lie in 1..=10, got {degree}"
                    ));
                }
                _ => {}
            }
        }
        if self.baseline.n_jitters == 0 {
            return bad("baseline.n-jitters must be at least 1".into());
        }
        if self.data.exclude_rows.contains(&0) {
            return bad("exclude-rows are 1-based".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_toml("sed = 3").is_err());
        assert!(RunConfig::from_toml("[schedule]\nburnin = 3").is_err());
    }

    #[test]
    fn precedence_flags_over_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, "seed = 5\n[schedule]\nthin = 5\nchains = 3\n").unwrap();
        let o = Overrides {
            thin: Some(7),
            ..Default::default()
        };
        let c = RunConfig::load(Some(&p), &o).unwrap();
        assert_eq!(
            (
                c.seed,
                c.schedule.thin,
                c.schedule.chains,
                c.schedule.burn_in
            ),
            (5, 7, 3, 1000)
        );
    }

    #[test]
    fn prior_targets_replace_explicit() {
        let o = Overrides {
            cluster_mean: Some(20.0),
            cluster_sd: Some(20.0),
            n: Some(1000),
            ..Default::default()
        };
        let c = RunConfig::load(None, &o).unwrap();
        let py = c.prior.resolve(1000).unwrap();
        assert!((py.discount() - DEFAULT_DISCOUNT).abs() < 0.02, "{py:?}");
        let file = RunConfig::from_toml("[prior]\ncluster-mean = 10.0\ncluster-sd = 20.0").unwrap();
        assert!(matches!(file.prior, PriorConfig::Targets(_)));
        assert!(RunConfig::from_toml("[prior]\ndiscount = 0.5").is_err());
        let half = Overrides {
            cluster_mean: Some(20.0),
            ..Default::default()
        };
        assert_eq!(RunConfig::load(None, &half).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn bounds_checked() {
        for text in [
            "taus = [0.5, 0.1]",
            "taus = [1.0]",
            "[schedule]\nchains = 0",
            "[prior]\ndiscount = 1.5\nstrength = 0.0",
            "[simulate]\nn = 5",
            "[quantile]\ntol = 0.5",
        ] {
            let c = RunConfig::from_toml(text).unwrap();
            assert!(c.validate().is_err(), "{text}");
        }
    }
}
