//! The five subcommands. Each reads its inputs from the output directory,
//! writes its artifacts there and merges its entries into `manifest.json`.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use insub_core::geometry::ReducedDomain;
use insub_core::gradient::{sample_fd_gradients, sample_gradients};
use insub_core::rng::{derive_seed, seeded};
use insub_core::subspace::{detect_subspace, leading_left_vectors, suggest_truncation};
use insub_core::surrogate::{RbfConfig, RbfSurrogate};
use log::{info, warn};
use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::config::{CompleteSource, ExperimentConfig, GradientMode, Truncation};
use crate::error::{CliError, Result, StageExt};
use crate::files::{self, fmt_float, Manifest, SampleTable, SubspaceFile};
use crate::study;

const DETECT_STREAM: u64 = 1;
const COMPLETE_STREAM: u64 = 2;
const SAMPLE_STREAM: u64 = 3;
const SURROGATE_STREAM: u64 = 4;
const REPLICATE_STREAM: u64 = 1000;

const DEFAULT_GAMMAS: [f64; 10] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];

fn prepare_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn update_manifest(config: &ExperimentConfig, stage: &str, seconds: f64, edit: impl FnOnce(&mut Manifest)) -> Result<()> {
    let dir = &config.output_dir;
    let mut manifest = Manifest::load_or_default(dir);
    manifest.config = config.entries().clone();
    manifest.seed = config.seed;
    manifest.timings.insert(stage.to_string(), seconds);
    edit(&mut manifest);
    manifest.write(dir)
}

#[derive(Debug, Clone, Serialize)]
pub struct TruncationInfo {
    pub used: usize,
    pub suggested: usize,
    pub auto: bool,
    pub degenerate: bool,
}

#[derive(Debug, Clone)]
pub struct DetectOutcome {
    pub truncation: TruncationInfo,
    pub eigenvalues: Vec<f64>,
    pub convergence: Vec<study::ConvergenceRow>,
}

pub fn detect(config: &ExperimentConfig) -> Result<DetectOutcome> {
    const STAGE: &str = "detect";
    let start = Instant::now();
    let dir = &config.output_dir;
    prepare_dir(dir)?;
    let model = config.model.build(STAGE)?;
    let domain = model.domain().clone();
    let mut rng = seeded(derive_seed(config.seed, DETECT_STREAM));
    let sampled = match config.gradient {
        GradientMode::Exact => sample_gradients(model.as_ref(), config.k, &mut rng),
        GradientMode::FiniteDifference(step) => sample_fd_gradients(model.as_ref(), config.k, step, &mut rng),
    }
    .stage(STAGE)?;
    info!("{} gradients from {} evaluations", config.k, sampled.evaluations);

    let full = detect_subspace(&sampled.samples, &domain).stage(STAGE)?;
    let eigenvalues: Vec<f64> = full.eigenvalues().iter().copied().collect();
    let suggestion = suggest_truncation(&eigenvalues);
    if suggestion.degenerate {
        warn!("all sampled gradients vanish; the suggested dimension is a fallback");
    }
    let used = match config.truncation {
        Truncation::Auto => {
            let spectrum: Vec<String> = eigenvalues.iter().map(|l| format!("{l:.4e}")).collect();
            info!("eigenvalues: {}", spectrum.join(" "));
            info!("auto truncation picks a = {}; set `a` in the config to override", suggestion.a);
            suggestion.a
        }
        Truncation::Fixed(a) if a > domain.dim() => {
            return Err(CliError::Config(format!("a = {a} exceeds the dimension {}", domain.dim())));
        }
        Truncation::Fixed(a) => a,
    };
    if used != suggestion.a {
        info!("using a = {used}; the largest spectral gap suggests a = {}", suggestion.a);
    }
    let subspace = full.truncate(used).stage(STAGE)?;

    let table = SampleTable {
        points: sampled.samples.points().to_vec(),
        values: sampled.values.clone(),
        gradients: sampled.samples.jacobian().column_iter().map(|c| c.into_owned()).collect(),
    };
    table.write(&dir.join(files::SAMPLES))?;
    let header = ["index", "eigenvalue"].map(String::from);
    let rows: Vec<Vec<String>> = eigenvalues
        .iter()
        .enumerate()
        .map(|(i, &l)| vec![(i + 1).to_string(), fmt_float(l)])
        .collect();
    files::write_csv(&dir.join(files::EIGENVALUES), &header, &rows)?;
    files::write_subspace(
        &dir.join(files::SUBSPACE),
        &SubspaceFile {
            seed: config.seed,
            subspace,
        },
    )?;

    let convergence = study::convergence(sampled.samples.jacobian(), &config.schedule(), used).stage(STAGE)?;
    write_convergence(&dir.join(files::CONVERGENCE), &convergence)?;

    let truncation = TruncationInfo {
        used,
        suggested: suggestion.a,
        auto: config.truncation == Truncation::Auto,
        degenerate: suggestion.degenerate,
    };
    let info_json = serde_json::to_value(&truncation).expect("serializable");
    update_manifest(config, STAGE, start.elapsed().as_secs_f64(), |m| {
        m.truncation = Some(info_json);
    })?;
    Ok(DetectOutcome {
        truncation,
        eigenvalues,
        convergence,
    })
}

fn optional(x: Option<f64>) -> String {
    x.map(fmt_float).unwrap_or_default()
}

fn write_convergence(path: &Path, rows: &[study::ConvergenceRow]) -> Result<()> {
    let header = ["i", "m_i", "m_next", "e_rel", "e_abs"].map(String::from);
    let rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.index.to_string(),
                r.m.to_string(),
                r.m_next.to_string(),
                fmt_float(r.e_rel),
                fmt_float(r.e_abs),
            ]
        })
        .collect();
    files::write_csv(path, &header, &rows)
}

pub fn complete(config: &ExperimentConfig) -> Result<Vec<study::CompletionRow>> {
    const STAGE: &str = "complete";
    let start = Instant::now();
    let dir = &config.output_dir;
    prepare_dir(dir)?;
    let mut rng = seeded(derive_seed(config.seed, COMPLETE_STREAM));
    let (matrix, reference) = match config.complete_source {
        CompleteSource::Samples => {
            let subspace = files::read_subspace(&dir.join(files::SUBSPACE))?.subspace;
            let table = SampleTable::read(&dir.join(files::SAMPLES))?;
            if table.dim() != subspace.dim() {
                return Err(CliError::Invalid {
                    stage: STAGE,
                    message: "samples.csv and subspace.bin disagree on the dimension".into(),
                });
            }
            (table.jacobian(), subspace.basis_a().clone())
        }
        CompleteSource::Synthetic { rows, cols, rank } => {
            let m = study::synthetic_low_rank(rows, cols, rank, &mut rng);
            let reference = leading_left_vectors(&m, rank).stage(STAGE)?;
            (m, reference)
        }
    };
    let gammas: &[f64] = if config.gamma_sweep.is_empty() {
        &DEFAULT_GAMMAS
    } else {
        &config.gamma_sweep
    };
    let mut results = Vec::with_capacity(gammas.len());
    for &gamma in gammas {
        let row = study::completion_error(&matrix, &reference, gamma, &config.svt, config.svt_normalize, &mut rng)
            .stage(STAGE)?;
        if !row.converged {
            warn!("SVT did not converge at gamma = {gamma} (residual {:.3e})", row.residual);
        }
        info!("gamma {gamma}: error {:.3e} after {} iterations", row.error, row.iterations);
        results.push(row);
    }
    let header = ["gamma", "revealed", "iterations", "residual", "converged", "e_gamma"].map(String::from);
    let rows: Vec<Vec<String>> = results
        .iter()
        .map(|r| {
            vec![
                fmt_float(r.gamma),
                r.revealed.to_string(),
                r.iterations.to_string(),
                fmt_float(r.residual),
                u8::from(r.converged).to_string(),
                fmt_float(r.error),
            ]
        })
        .collect();
    files::write_csv(&dir.join(files::SVT_ERROR), &header, &rows)?;
    let svt = &config.svt;
    let params = json!({
        "tau": svt.tau,
        "delta": svt.delta,
        "tol": svt.tol,
        "eps": svt.eps,
        "max_iter": svt.max_iter,
        "normalized": config.svt_normalize,
        "source": match config.complete_source {
            CompleteSource::Samples => "samples",
            CompleteSource::Synthetic { .. } => "synthetic",
        },
    });
    update_manifest(config, STAGE, start.elapsed().as_secs_f64(), |m| {
        m.svt_params = Some(params);
    })?;
    Ok(results)
}

#[derive(Debug, Clone, Serialize)]
pub struct SampleOutcome {
    pub projected: usize,
    pub sampled: usize,
    pub draws: u64,
    pub accepted: u64,
    pub rejected: u64,
    pub lp_calls: u64,
    pub acceptance_rate: f64,
}

pub fn sample(config: &ExperimentConfig) -> Result<SampleOutcome> {
    const STAGE: &str = "sample";
    let start = Instant::now();
    let dir = &config.output_dir;
    prepare_dir(dir)?;
    let subspace = files::read_subspace(&dir.join(files::SUBSPACE))?.subspace;
    let table = SampleTable::read(&dir.join(files::SAMPLES))?;
    let model = config.model.build(STAGE)?;
    if model.dim() != subspace.dim() || table.dim() != subspace.dim() {
        return Err(CliError::Invalid {
            stage: STAGE,
            message: "model, samples.csv and subspace.bin disagree on the dimension".into(),
        });
    }
    let reduced = ReducedDomain::build(subspace, model.domain().clone()).stage(STAGE)?;
    let mut design = reduced.project_design(&table.points, &table.values).stage(STAGE)?;
    let projected = design.len();
    let mut rng = seeded(derive_seed(config.seed, SAMPLE_STREAM));
    let (mut fresh, stats) = reduced.sample_design(config.n_design, &mut rng).stage(STAGE)?;
    fresh.evaluate(model.as_ref()).stage(STAGE)?;
    design.extend(fresh);
    design.validate(&reduced).stage(STAGE)?;
    files::write_design(
        &dir.join(files::DESIGN),
        &design.reduced_points,
        &design.lifted_points,
        &design.values,
    )?;
    let outcome = SampleOutcome {
        projected,
        sampled: config.n_design,
        draws: stats.draws,
        accepted: stats.accepted,
        rejected: stats.rejected,
        lp_calls: stats.lp_calls,
        acceptance_rate: stats.acceptance_rate,
    };
    info!(
        "design: {projected} projected sites and {} sampled ({} draws, acceptance {:.3})",
        config.n_design, stats.draws, stats.acceptance_rate
    );
    files::write_json(&dir.join(files::SAMPLER_STATS), &outcome)?;
    let stats_json = serde_json::to_value(&outcome).expect("serializable");
    update_manifest(config, STAGE, start.elapsed().as_secs_f64(), |m| {
        m.sampler_stats = Some(stats_json);
    })?;
    Ok(outcome)
}

#[derive(Debug, Clone, Serialize)]
pub struct SurrogateSummary {
    pub centers: usize,
    pub shape: f64,
    pub regularization: f64,
    pub training_residual: f64,
    pub eval_points: usize,
    pub extrapolations: usize,
    pub mean_surrogate: f64,
    pub mean_full: Option<f64>,
    pub mean_relative_error: Option<f64>,
    pub error_median: Option<f64>,
    pub error_p90: Option<f64>,
    pub error_max: Option<f64>,
}

pub fn surrogate(config: &ExperimentConfig) -> Result<SurrogateSummary> {
    const STAGE: &str = "surrogate";
    let start = Instant::now();
    let dir = &config.output_dir;
    prepare_dir(dir)?;
    let subspace = files::read_subspace(&dir.join(files::SUBSPACE))?.subspace;
    let (reduced, _, values) = files::read_design(&dir.join(files::DESIGN))?;
    if reduced[0].len() != subspace.active_dim() {
        return Err(CliError::Invalid {
            stage: STAGE,
            message: "design.csv and subspace.bin disagree on the active dimension".into(),
        });
    }
    let rbf_config = RbfConfig {
        shape: config.rbf_shape,
        regularization: config.rbf_regularization,
        seed: Some(config.seed),
    };
    let rbf = RbfSurrogate::fit(&reduced, &values, &rbf_config).stage(STAGE)?;
    rbf.save(&dir.join(files::SURROGATE_MODEL)).stage(STAGE)?;

    let model = config.model.build(STAGE)?;
    let mut rng = seeded(derive_seed(config.seed, SURROGATE_STREAM));
    let points: Vec<DVector<f64>> = (0..config.eval_points).map(|_| model.domain().sample_uniform(&mut rng)).collect();
    let projected: Vec<DVector<f64>> = points.iter().map(|s| subspace.project(s)).collect();
    let approx: Vec<f64> = projected
        .iter()
        .map(|y| rbf.evaluate(y))
        .collect::<insub_core::Result<_>>()
        .stage(STAGE)?;
    let extrapolations = projected.iter().filter(|y| rbf.is_extrapolation(y)).count();
    let exact: Option<Vec<f64>> = if config.full_model_eval {
        Some(
            points
                .par_iter()
                .map(|s| model.value(s))
                .collect::<insub_core::Result<_>>()
                .stage(STAGE)?,
        )
    } else {
        None
    };

    let header = ["index", "surrogate", "full"].map(String::from);
    let rows: Vec<Vec<String>> = approx
        .iter()
        .enumerate()
        .map(|(i, &g)| vec![(i + 1).to_string(), fmt_float(g), optional(exact.as_ref().map(|f| f[i]))])
        .collect();
    files::write_csv(&dir.join(files::DENSITY_SAMPLES), &header, &rows)?;
    files::write_histogram(&dir.join(files::DENSITY_HIST), &approx)?;

    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let mean_surrogate = mean(&approx);
    let mut summary = SurrogateSummary {
        centers: rbf.len(),
        shape: rbf.shape(),
        regularization: rbf.regularization(),
        training_residual: rbf.training_residual(),
        eval_points: config.eval_points,
        extrapolations,
        mean_surrogate,
        mean_full: None,
        mean_relative_error: None,
        error_median: None,
        error_p90: None,
        error_max: None,
    };
    if let Some(exact) = &exact {
        files::write_histogram(&dir.join(files::DENSITY_FULL), exact)?;
        let mut errors: Vec<f64> = approx.iter().zip(exact).map(|(g, f)| (g - f).abs()).collect();
        let log_errors: Vec<f64> = errors.iter().map(|e| e.max(1e-16).log10()).collect();
        files::write_histogram(&dir.join(files::ERROR_HIST), &log_errors)?;
        errors.sort_by(f64::total_cmp);
        let quantile = |q: f64| errors[((errors.len() - 1) as f64 * q).round() as usize];
        let mean_full = mean(exact);
        summary.mean_full = Some(mean_full);
        summary.mean_relative_error = Some((mean_surrogate - mean_full).abs() / mean_full.abs());
        summary.error_median = Some(quantile(0.5));
        summary.error_p90 = Some(quantile(0.9));
        summary.error_max = errors.last().copied();
        info!(
            "mean: surrogate {mean_surrogate:.6e}, full model {mean_full:.6e}, median error {:.3e}",
            quantile(0.5)
        );
    }
    if extrapolations > 0 {
        info!("{extrapolations} evaluation points fall outside the bounding box of the centres");
    }
    files::write_json(&dir.join(files::SURROGATE_SUMMARY), &summary)?;
    update_manifest(config, STAGE, start.elapsed().as_secs_f64(), |_| {})?;
    Ok(summary)
}

/// detect, complete (when `gamma_sweep` is set), sample and surrogate. With
/// several replicates each one runs in `rep-<r>` under a derived seed.
pub fn pipeline(config: &ExperimentConfig) -> Result<Vec<SurrogateSummary>> {
    if config.replicates == 1 {
        return Ok(vec![run_once(config)?]);
    }
    let root = config.output_dir.clone();
    prepare_dir(&root)?;
    let mut summaries = Vec::with_capacity(config.replicates);
    let mut names = Vec::with_capacity(config.replicates);
    for r in 0..config.replicates {
        let name = format!("rep-{r}");
        let mut replicate = config.clone();
        replicate.seed = derive_seed(config.seed, REPLICATE_STREAM + r as u64);
        replicate.output_dir = root.join(&name);
        info!("replicate {r} (seed {})", replicate.seed);
        summaries.push(run_once(&replicate)?);
        names.push(name);
    }
    let mut manifest = Manifest::load_or_default(&root);
    manifest.config = config.entries().clone();
    manifest.seed = config.seed;
    manifest.replicates = Some(names);
    manifest.write(&root)?;
    Ok(summaries)
}

fn run_once(config: &ExperimentConfig) -> Result<SurrogateSummary> {
    detect(config)?;
    if !config.gamma_sweep.is_empty() {
        complete(config)?;
    }
    sample(config)?;
    surrogate(config)
}

/// Output directory of replicate `r`, as laid out by [`pipeline`].
pub fn replicate_dir(root: &Path, r: usize) -> PathBuf {
    root.join(format!("rep-{r}"))
}
