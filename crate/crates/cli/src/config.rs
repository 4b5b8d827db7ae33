//! Experiment configuration: a flat `key = value` text file.
//!
//! Blank lines and text after `#` are ignored. Keys are unique; unknown keys
//! are rejected so typos do not silently fall back to defaults. Lists are
//! comma separated.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use insub_core::gradient::FdStep;
use insub_core::models::{KlExpansion, PdeConfig, PdeModel, RidgeProfile, TestFunction};
use insub_core::{Hyperrectangle, Model, SvtParams};
use nalgebra::{DMatrix, DVector};

use crate::error::{CliError, Result, StageExt};

const KEYS: &[&str] = &[
    "model",
    "gradient",
    "fd_step",
    "k",
    "a",
    "n_design",
    "eval_points",
    "full_model_eval",
    "seed",
    "output_dir",
    "schedule_start",
    "schedule_step",
    "gamma_sweep",
    "complete_source",
    "synthetic_rows",
    "synthetic_cols",
    "synthetic_rank",
    "svt_tau",
    "svt_delta",
    "svt_tol",
    "svt_eps",
    "svt_max_iter",
    "svt_normalize",
    "rbf_shape",
    "rbf_regularization",
    "replicates",
    "half_width",
    "ridge_direction",
    "ridge_profile",
    "quadratic_matrix",
    "pde_n",
    "pde_d",
    "rho1",
    "rho2",
    "kl_cache",
];

#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    CosSum,
    CosWeighted,
    Ridge {
        direction: Vec<f64>,
        profile: RidgeProfile,
        half_width: f64,
    },
    Quadratic {
        matrix: Vec<f64>,
        half_width: f64,
    },
    Pde {
        config: PdeConfig,
        kl_cache: Option<PathBuf>,
    },
}

impl ModelSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ModelSpec::CosSum => "cos_sum",
            ModelSpec::CosWeighted => "cos_weighted",
            ModelSpec::Ridge { .. } => "ridge",
            ModelSpec::Quadratic { .. } => "quadratic",
            ModelSpec::Pde { .. } => "pde",
        }
    }

    pub fn build(&self, stage: &'static str) -> Result<Box<dyn Model<f64>>> {
        Ok(match self {
            ModelSpec::CosSum => Box::new(TestFunction::<f64>::cos_sum()),
            ModelSpec::CosWeighted => Box::new(TestFunction::<f64>::cos_weighted()),
            ModelSpec::Ridge {
                direction,
                profile,
                half_width,
            } => {
                let domain = Hyperrectangle::symmetric(direction.len(), *half_width).stage(stage)?;
                Box::new(TestFunction::ridge(DVector::from_column_slice(direction), *profile, domain).stage(stage)?)
            }
            ModelSpec::Quadratic { matrix, half_width } => {
                let d = (matrix.len() as f64).sqrt().round() as usize;
                let a = DMatrix::from_row_slice(d, d, matrix);
                let domain = Hyperrectangle::symmetric(d, *half_width).stage(stage)?;
                Box::new(TestFunction::quadratic(a, domain).stage(stage)?)
            }
            ModelSpec::Pde { config, kl_cache } => {
                let rho = config.rho;
                let kl = match kl_cache {
                    Some(dir) => KlExpansion::load_or_build(dir, config.n, config.d, rho),
                    None => KlExpansion::build(config.n, config.d, rho),
                }
                .stage(stage)?;
                Box::new(PdeModel::with_expansion(kl, config.half_width).stage(stage)?)
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GradientMode {
    Exact,
    FiniteDifference(FdStep<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Truncation {
    Auto,
    Fixed(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompleteSource {
    /// The Jacobian written by `detect`.
    Samples,
    /// A random rank-`rank` product of Gaussian factors.
    Synthetic { rows: usize, cols: usize, rank: usize },
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    pub gradient: GradientMode,
    pub k: usize,
    pub truncation: Truncation,
    pub n_design: usize,
    pub eval_points: usize,
    pub full_model_eval: bool,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub schedule_start: Option<usize>,
    pub schedule_step: Option<usize>,
    pub gamma_sweep: Vec<f64>,
    pub complete_source: CompleteSource,
    pub svt: SvtParams<f64>,
    pub svt_normalize: bool,
    pub rbf_shape: Option<f64>,
    pub rbf_regularization: Option<f64>,
    pub replicates: usize,
    entries: BTreeMap<String, String>,
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let entries = parse_entries(text)?;
        let get = |key: &str| entries.get(key).map(String::as_str);

        let half_width = opt_parse::<f64>(&entries, "half_width")?;
        let model = match get("model").unwrap_or("cos_sum") {
            "cos_sum" => ModelSpec::CosSum,
            "cos_weighted" => ModelSpec::CosWeighted,
            "ridge" => {
                let direction = parse_list(&entries, "ridge_direction")?
                    .ok_or_else(|| CliError::Config("ridge model needs ridge_direction".into()))?;
                let profile_name = get("ridge_profile").unwrap_or("exp");
                let profile = RidgeProfile::from_name(profile_name)
                    .ok_or_else(|| CliError::Config(format!("unknown ridge_profile `{profile_name}`")))?;
                ModelSpec::Ridge {
                    direction,
                    profile,
                    half_width: half_width.unwrap_or(1.0),
                }
            }
            "quadratic" => {
                let matrix = parse_list(&entries, "quadratic_matrix")?
                    .ok_or_else(|| CliError::Config("quadratic model needs quadratic_matrix".into()))?;
                let d = (matrix.len() as f64).sqrt().round() as usize;
                if d == 0 || d * d != matrix.len() {
                    return Err(CliError::Config("quadratic_matrix must hold d*d entries".into()));
                }
                ModelSpec::Quadratic {
                    matrix,
                    half_width: half_width.unwrap_or(1.0),
                }
            }
            "pde" => {
                let defaults = PdeConfig::default();
                ModelSpec::Pde {
                    config: PdeConfig {
                        n: opt_parse(&entries, "pde_n")?.unwrap_or(defaults.n),
                        d: opt_parse(&entries, "pde_d")?.unwrap_or(defaults.d),
                        rho: (
                            opt_parse(&entries, "rho1")?.unwrap_or(defaults.rho.0),
                            opt_parse(&entries, "rho2")?.unwrap_or(defaults.rho.1),
                        ),
                        half_width: half_width.unwrap_or(defaults.half_width),
                    },
                    kl_cache: get("kl_cache").map(PathBuf::from),
                }
            }
            other => return Err(CliError::Config(format!("unknown model `{other}`"))),
        };
        for (key, models) in [
            ("ridge_direction", ["ridge"].as_slice()),
            ("ridge_profile", &["ridge"]),
            ("quadratic_matrix", &["quadratic"]),
            ("half_width", &["ridge", "quadratic", "pde"]),
            ("pde_n", &["pde"]),
            ("pde_d", &["pde"]),
            ("rho1", &["pde"]),
            ("rho2", &["pde"]),
            ("kl_cache", &["pde"]),
        ] {
            if entries.contains_key(key) && !models.contains(&model.name()) {
                return Err(CliError::Config(format!("`{key}` does not apply to model {}", model.name())));
            }
        }

        let gradient = match get("gradient").unwrap_or("exact") {
            "exact" | "adjoint" => GradientMode::Exact,
            "fd" => GradientMode::FiniteDifference(match get("fd_step").unwrap_or("relative") {
                "relative" => FdStep::Relative,
                h => FdStep::Fixed(parse_value::<f64>("fd_step", h)?),
            }),
            other => return Err(CliError::Config(format!("unknown gradient mode `{other}`"))),
        };

        let truncation = match get("a").unwrap_or("auto") {
            "auto" => Truncation::Auto,
            v => Truncation::Fixed(parse_value("a", v)?),
        };

        let complete_source = match get("complete_source").unwrap_or("samples") {
            "samples" => CompleteSource::Samples,
            "synthetic" => CompleteSource::Synthetic {
                rows: opt_parse(&entries, "synthetic_rows")?.unwrap_or(100),
                cols: opt_parse(&entries, "synthetic_cols")?.unwrap_or(400),
                rank: opt_parse(&entries, "synthetic_rank")?.unwrap_or(5),
            },
            other => return Err(CliError::Config(format!("unknown complete_source `{other}`"))),
        };

        let defaults = SvtParams::<f64>::default();
        let config = Self {
            gradient,
            k: opt_parse(&entries, "k")?.unwrap_or(100),
            truncation,
            n_design: opt_parse(&entries, "n_design")?.unwrap_or(500),
            eval_points: opt_parse(&entries, "eval_points")?.unwrap_or(10_000),
            full_model_eval: opt_parse(&entries, "full_model_eval")?.unwrap_or(true),
            seed: opt_parse(&entries, "seed")?.unwrap_or(0),
            output_dir: PathBuf::from(get("output_dir").unwrap_or("insub-out")),
            schedule_start: opt_parse(&entries, "schedule_start")?,
            schedule_step: opt_parse(&entries, "schedule_step")?,
            gamma_sweep: parse_list(&entries, "gamma_sweep")?.unwrap_or_default(),
            complete_source,
            svt: SvtParams {
                tau: opt_parse(&entries, "svt_tau")?.unwrap_or(defaults.tau),
                delta: opt_parse(&entries, "svt_delta")?.unwrap_or(defaults.delta),
                tol: opt_parse(&entries, "svt_tol")?.unwrap_or(defaults.tol),
                eps: opt_parse(&entries, "svt_eps")?.unwrap_or(defaults.eps),
                max_iter: opt_parse(&entries, "svt_max_iter")?.unwrap_or(defaults.max_iter),
            },
            svt_normalize: opt_parse(&entries, "svt_normalize")?.unwrap_or(true),
            rbf_shape: opt_parse(&entries, "rbf_shape")?,
            rbf_regularization: opt_parse(&entries, "rbf_regularization")?,
            replicates: opt_parse(&entries, "replicates")?.unwrap_or(1),
            model,
            entries,
        };
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<()> {
        let counts = [
            ("k", self.k),
            ("n_design", self.n_design),
            ("eval_points", self.eval_points),
            ("replicates", self.replicates),
            ("svt_max_iter", self.svt.max_iter),
        ];
        for (key, value) in counts {
            if value < 1 {
                return Err(CliError::Config(format!("{key} must be at least 1")));
            }
        }
        if let Truncation::Fixed(0) = self.truncation {
            return Err(CliError::Config("a must be at least 1".into()));
        }
        for &g in &self.gamma_sweep {
            if !(g > 0.0 && g <= 1.0) {
                return Err(CliError::Config(format!("gamma {g} not in (0, 1]")));
            }
        }
        for (key, v) in [("schedule_start", self.schedule_start), ("schedule_step", self.schedule_step)] {
            if v == Some(0) {
                return Err(CliError::Config(format!("{key} must be at least 1")));
            }
        }
        if !(self.svt.tau > 0.0 && self.svt.delta > 0.0 && self.svt.tol > 0.0 && self.svt.eps >= 0.0) {
            return Err(CliError::Config("SVT parameters must be positive".into()));
        }
        if let CompleteSource::Synthetic { rows, cols, rank } = self.complete_source {
            if rows == 0 || cols == 0 || rank == 0 || rank > rows.min(cols) {
                return Err(CliError::Config("synthetic matrix shape is invalid".into()));
            }
        }
        if let ModelSpec::Pde { config, .. } = &self.model {
            if config.n < 3 || config.d == 0 || config.d > config.n * config.n {
                return Err(CliError::Config("pde_n must be at least 3 and 1 <= pde_d <= pde_n^2".into()));
            }
            if !(config.rho.0 > 0.0 && config.rho.1 > 0.0 && config.half_width > 0.0) {
                return Err(CliError::Config("rho1, rho2 and half_width must be positive".into()));
            }
        }
        Ok(())
    }

    /// Overrides from the command line.
    pub fn with_overrides(mut self, seed: Option<u64>, out: Option<PathBuf>, replicates: Option<usize>) -> Result<Self> {
        if let Some(seed) = seed {
            self.seed = seed;
            self.entries.insert("seed".into(), seed.to_string());
        }
        if let Some(out) = out {
            self.entries.insert("output_dir".into(), out.display().to_string());
            self.output_dir = out;
        }
        if let Some(r) = replicates {
            if r == 0 {
                return Err(CliError::Config("replicates must be at least 1".into()));
            }
            self.replicates = r;
            self.entries.insert("replicates".into(), r.to_string());
        }
        Ok(self)
    }

    /// The parsed `key = value` pairs, for echoing into the manifest.
    pub fn entries(&self) -> &BTreeMap<String, String> {
        &self.entries
    }

    /// Sample counts of the convergence study: `start, start + step, …, <= k`.
    pub fn schedule(&self) -> Vec<usize> {
        let step = self.schedule_step.unwrap_or_else(|| (self.k / 10).max(1));
        let start = self.schedule_start.unwrap_or(step);
        (0..).map(|i| start + i * step).take_while(|&m| m <= self.k).collect()
    }
}

fn parse_entries(text: &str) -> Result<BTreeMap<String, String>> {
    let mut entries = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("line {}: expected `key = value`", lineno + 1)))?;
        let (key, value) = (key.trim(), value.trim());
        if !KEYS.contains(&key) {
            return Err(CliError::Config(format!("line {}: unknown key `{key}`", lineno + 1)));
        }
        if value.is_empty() {
            return Err(CliError::Config(format!("line {}: empty value for `{key}`", lineno + 1)));
        }
        if entries.insert(key.to_string(), value.to_string()).is_some() {
            return Err(CliError::Config(format!("line {}: duplicate key `{key}`", lineno + 1)));
        }
    }
    Ok(entries)
}

fn parse_value<V: std::str::FromStr>(key: &str, value: &str) -> Result<V> {
    value
        .parse()
        .map_err(|_| CliError::Config(format!("invalid value `{value}` for `{key}`")))
}

fn opt_parse<V: std::str::FromStr>(entries: &BTreeMap<String, String>, key: &str) -> Result<Option<V>> {
    entries.get(key).map(|v| parse_value(key, v)).transpose()
}

fn parse_list(entries: &BTreeMap<String, String>, key: &str) -> Result<Option<Vec<f64>>> {
    entries
        .get(key)
        .map(|v| v.split(',').map(|x| parse_value::<f64>(key, x.trim())).collect())
        .transpose()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_comments() {
        let c = ExperimentConfig::parse("# nothing\nmodel = cos_sum # trailing\n\nk = 40\n").unwrap();
        assert_eq!(c.model, ModelSpec::CosSum);
        assert_eq!(c.k, 40);
        assert_eq!(c.truncation, Truncation::Auto);
        assert_eq!(c.svt, SvtParams::default());
        assert_eq!(c.schedule(), vec![4, 8, 12, 16, 20, 24, 28, 32, 36, 40]);
    }

    #[test]
    fn schedule_from_keys() {
        let c = ExperimentConfig::parse("k = 2000\nschedule_start = 100\nschedule_step = 100").unwrap();
        assert_eq!(c.schedule().len(), 20);
        assert_eq!(c.schedule()[19], 2000);
    }

    #[test]
    fn pde_and_lists() {
        let c = ExperimentConfig::parse(
            "model = pde\npde_n = 17\npde_d = 10\nrho2 = 0.1\na = 5\ngamma_sweep = 0.1, 0.5,1.0\n",
        )
        .unwrap();
        match c.model {
            ModelSpec::Pde { config, .. } => {
                assert_eq!((config.n, config.d), (17, 10));
                assert_eq!(config.rho, (1.0, 0.1));
            }
            _ => panic!(),
        }
        assert_eq!(c.truncation, Truncation::Fixed(5));
        assert_eq!(c.gamma_sweep, vec![0.1, 0.5, 1.0]);
    }

    #[test]
    fn errors() {
        for bad in [
            "modle = pde",
            "k = 0",
            "k = -3",
            "k = 5\nk = 6",
            "gamma_sweep = 0.0",
            "gamma_sweep = 1.5",
            "model = nope",
            "model = ridge",
            "model = quadratic\nquadratic_matrix = 1, 2, 3",
            "pde_n = 9",
            "just text",
            "a = 0",
            "svt_tau = -1",
            "model = ridge\nridge_direction = 1, 2\nridge_profile = wavy",
        ] {
            assert!(ExperimentConfig::parse(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn overrides() {
        let c = ExperimentConfig::parse("seed = 3")
            .unwrap()
            .with_overrides(Some(9), Some(PathBuf::from("x")), Some(4))
            .unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.output_dir, PathBuf::from("x"));
        assert_eq!(c.replicates, 4);
        assert_eq!(c.entries()["seed"], "9");
    }
}
