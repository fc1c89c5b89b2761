//! Executes a resolved configuration and writes its outputs.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use nlkdv_core::io::{fmt_f64, write_table};
use nlkdv_core::{
    assemble_with, convergence_study, initial_data, integrate, linf_error, localization_study, make_kernel,
    solitary_params, ConditionReport, ConvergenceReport, ExperimentSpec, GridFunction, IntegrationStats,
    LocalizationReport, SolitaryWave, UniformGrid,
};
use serde::Serialize;

use crate::config::{Command, ExperimentConfig};

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub preset: Option<String>,
    pub scale: bool,
    pub config: ExperimentConfig,
    pub outputs: Vec<String>,
    pub results: Results,
}

#[derive(Debug, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Results {
    Simulate {
        times: Vec<f64>,
        linf_errors: Option<Vec<f64>>,
        stats: IntegrationStats,
    },
    Converge {
        report: ConvergenceReport,
    },
    Localize {
        report: LocalizationReport,
        knee: Option<usize>,
    },
    KernelCheck {
        report: ConditionReport,
    },
}

/// Relative improvement below which the localization error counts as flat.
const KNEE_TOLERANCE: f64 = 0.1;

/// A finished run: the manifest plus any profiles still to be written.
pub struct Run {
    pub manifest: Manifest,
    pub profiles: Vec<GridFunction>,
}

pub fn execute(cfg: &ExperimentConfig, preset: Option<String>, scale: bool) -> Result<Run> {
    let mut profiles = Vec::new();
    let results = match cfg.command {
        Command::Simulate => {
            let (results, states) = simulate(cfg)?;
            profiles = states;
            results
        }
        Command::Converge => {
            let hs = cfg.h_list.as_deref().expect("resolved h_list");
            let report = convergence_study(&spec(cfg)?, hs, t_end(cfg), cfg.mode.expect("resolved mode"))
                .context("convergence study failed")?;
            Results::Converge { report }
        }
        Command::Localize => {
            let ns = cfg.n_list.as_deref().expect("resolved n_list");
            let report = localization_study(&spec(cfg)?, cfg.h.expect("resolved h"), ns, t_end(cfg))
                .context("localization study failed")?;
            let knee = report.knee(KNEE_TOLERANCE);
            Results::Localize { report, knee }
        }
        Command::KernelCheck => {
            let kernel = make_kernel(cfg.kernel_kind());
            let halfwidth = cfg.quad_halfwidth.unwrap_or_else(|| kernel.effective_halfwidth());
            let report = kernel
                .verify_conditions(cfg.quad_step.expect("resolved quad_step"), halfwidth)
                .context("kernel condition check failed")?;
            Results::KernelCheck { report }
        }
    };
    let manifest = Manifest {
        tool: "nlkdv",
        version: env!("CARGO_PKG_VERSION"),
        preset,
        scale,
        config: cfg.clone(),
        outputs: Vec::new(),
        results,
    };
    Ok(Run { manifest, profiles })
}

fn t_end(cfg: &ExperimentConfig) -> f64 {
    cfg.t_end.expect("resolved t_end")
}

fn wave(cfg: &ExperimentConfig) -> SolitaryWave {
    solitary_params(cfg.family)
}

fn spec(cfg: &ExperimentConfig) -> Result<ExperimentSpec> {
    let domain = cfg.domain.unwrap_or([-1.0, 1.0]);
    Ok(ExperimentSpec {
        kernel: make_kernel(cfg.kernel_kind()),
        nonlinearity: cfg.parsed_nonlinearity(),
        kappa: cfg.kappa,
        domain: (domain[0], domain[1]),
        wave: wave(cfg),
        tolerances: cfg.tolerance_settings()?,
        options: cfg.problem_options(),
    })
}

fn simulate_grid(cfg: &ExperimentConfig) -> Result<UniformGrid> {
    let [xl, xr] = cfg.domain.expect("resolved domain");
    Ok(UniformGrid::from_domain(xl, xr, cfg.h.expect("resolved h"))?)
}

fn simulate(cfg: &ExperimentConfig) -> Result<(Results, Vec<GridFunction>)> {
    let grid = simulate_grid(cfg)?;
    let w = wave(cfg);
    let problem = assemble_with(
        make_kernel(cfg.kernel_kind()),
        cfg.parsed_nonlinearity(),
        cfg.kappa,
        grid,
        initial_data(&w, &grid)?,
        cfg.problem_options(),
    )?;
    let result = integrate(&problem, t_end(cfg), &cfg.output_times, &cfg.tolerance_settings()?)
        .context("integration failed")?;
    let linf_errors = cfg.compare_exact.then(|| {
        result
            .times
            .iter()
            .zip(&result.states)
            .map(|(&t, s)| linf_error(s, |x, t| w.profile(x, t), t))
            .collect()
    });
    let results = Results::Simulate {
        times: result.times,
        linf_errors,
        stats: result.stats,
    };
    Ok((results, result.states))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn with_suffix(prefix: &str, suffix: &str) -> PathBuf {
    PathBuf::from(format!("{prefix}_{suffix}"))
}

/// Writes every output file and finally the manifest; returns the paths written.
pub fn write_outputs(run: &mut Run) -> Result<Vec<PathBuf>> {
    let manifest = &mut run.manifest;
    let prefix = manifest.config.output.clone();
    let mut written = Vec::new();
    match &manifest.results {
        Results::Simulate { times, .. } => {
            let single = run.profiles.len() == 1;
            let w = wave(&manifest.config);
            for (k, (state, &t)) in run.profiles.iter().zip(times).enumerate() {
                let path = if single {
                    with_suffix(&prefix, "profile.csv")
                } else {
                    with_suffix(&prefix, &format!("profile_{k}.csv"))
                };
                write_profile(&path, state, manifest.config.compare_exact.then_some((&w, t)))?;
                written.push(path);
            }
        }
        Results::Converge { report } => {
            let path = with_suffix(&prefix, "convergence.csv");
            report.write_csv(create(&path)?)?;
            written.push(path);
        }
        Results::Localize { report, .. } => {
            let path = with_suffix(&prefix, "localization.csv");
            report.write_csv(create(&path)?)?;
            written.push(path);
        }
        Results::KernelCheck { .. } => {}
    }
    let manifest_path = with_suffix(&prefix, "manifest.json");
    manifest.outputs = written
        .iter()
        .chain(std::iter::once(&manifest_path))
        .map(|p| p.display().to_string())
        .collect();
    let mut out = create(&manifest_path)?;
    serde_json::to_writer_pretty(&mut out, manifest)?;
    std::io::Write::write_all(&mut out, b"\n")?;
    written.push(manifest_path);
    Ok(written)
}

fn write_profile(path: &Path, state: &GridFunction, exact: Option<(&SolitaryWave, f64)>) -> Result<()> {
    let out = create(path)?;
    match exact {
        None => state.write_csv(out)?,
        Some((w, t)) => {
            let rows = state
                .iter()
                .map(|(x, u)| vec![fmt_f64(x), fmt_f64(u), fmt_f64(w.profile(x, t))]);
            write_table(out, &["x", "u", "u_exact"], rows)?;
        }
    }
    Ok(())
}

/// One-line human summary printed after a run.
pub fn summary(manifest: &Manifest) -> String {
    match &manifest.results {
        Results::Simulate {
            times,
            linf_errors,
            stats,
        } => {
            let t = times.last().copied().unwrap_or_default();
            let err = linf_errors
                .as_ref()
                .and_then(|e| e.last())
                .map(|e| format!(", l-inf error {e:.6e}"))
                .unwrap_or_default();
            format!(
                "t = {t}: {} steps ({} rejected), {} rhs evaluations{err}",
                stats.steps_accepted, stats.steps_rejected, stats.rhs_evaluations
            )
        }
        Results::Converge { report } => {
            let rates: Vec<String> = report.rates().iter().map(|r| format!("{r:.4}")).collect();
            format!("{} mesh sizes, rates [{}]", report.rows.len(), rates.join(", "))
        }
        Results::Localize { report, knee } => {
            let last = report.rows.last().map(|r| r.error).unwrap_or_default();
            let knee = knee.map_or("none".to_string(), |n| n.to_string());
            format!("{} domains, final error {last:.6e}, knee N = {knee}", report.rows.len())
        }
        Results::KernelCheck { report } => format!(
            "{}: W^(2,1) norm {:.6}, |mu|(R) {}, C2 {}",
            report.kind,
            report.w21_norm,
            report.mu_total_variation.map_or("n/a".to_string(), |m| format!("{m:.6}")),
            report.satisfies_c2
        ),
    }
}
