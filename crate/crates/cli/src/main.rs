use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::Parser;
use nlkdv_core::{ConvergenceMode, ConvolutionMethod, RhsForm, WaveFamily};

mod config;
mod run;

use config::{preset, Command, ConfigLayer, ExperimentConfig, ToleranceLayer};

/// Semi-discrete solver for nonlocally regularized KdV-type equations.
///
/// Settings are layered: preset, then `--config`, then individual flags.
#[derive(Debug, Parser)]
#[command(name = "nlkdv", version)]
struct Cli {
    /// What to run.
    #[arg(value_enum)]
    command: Command,

    /// JSON configuration file; a run manifest also works.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Named experiment setup.
    #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(config::PRESETS))]
    preset: Option<String>,

    /// Use the desk-size variant of the preset.
    #[arg(long, requires = "preset")]
    scale: bool,

    #[arg(long)]
    kernel: Option<String>,

    /// Flux polynomial, e.g. "u + u^2/2".
    #[arg(long)]
    nonlinearity: Option<String>,

    #[arg(long)]
    kappa: Option<f64>,

    /// Solitary wave supplying the initial data and exact solution.
    #[arg(long, value_parser = parse_family)]
    family: Option<WaveFamily>,

    #[arg(long)]
    compare_exact: Option<bool>,

    /// Interval as "x_left,x_right".
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    domain: Option<Vec<f64>>,

    #[arg(long)]
    h: Option<f64>,

    #[arg(long, value_delimiter = ',')]
    h_list: Option<Vec<f64>>,

    #[arg(long, value_parser = parse_mode)]
    mode: Option<ConvergenceMode>,

    #[arg(long, value_delimiter = ',')]
    n_list: Option<Vec<usize>>,

    #[arg(long)]
    t_end: Option<f64>,

    #[arg(long, value_delimiter = ',')]
    output_times: Option<Vec<f64>>,

    #[arg(long)]
    rel_tol: Option<f64>,

    #[arg(long)]
    abs_tol: Option<f64>,

    #[arg(long)]
    initial_step: Option<f64>,

    #[arg(long)]
    max_step: Option<f64>,

    #[arg(long)]
    max_steps: Option<usize>,

    /// Constant time step; disables error control.
    #[arg(long)]
    fixed_step: Option<f64>,

    /// Convolution weight halfwidth K (default: full window).
    #[arg(long)]
    halfwidth: Option<usize>,

    #[arg(long, value_parser = parse_method)]
    method: Option<ConvolutionMethod>,

    #[arg(long, value_parser = parse_form)]
    form: Option<RhsForm>,

    #[arg(long)]
    blowup_guard: Option<f64>,

    #[arg(long)]
    quad_step: Option<f64>,

    #[arg(long)]
    quad_halfwidth: Option<f64>,

    /// Output path prefix.
    #[arg(long)]
    output: Option<String>,
}

fn parse_kebab<T: serde::de::DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

fn parse_family(s: &str) -> Result<WaveFamily, String> {
    s.parse().map_err(|e: nlkdv_core::Error| e.to_string())
}

fn parse_mode(s: &str) -> Result<ConvergenceMode, String> {
    parse_kebab(s)
}

fn parse_method(s: &str) -> Result<ConvolutionMethod, String> {
    parse_kebab(s)
}

fn parse_form(s: &str) -> Result<RhsForm, String> {
    parse_kebab(s)
}

impl Cli {
    fn domain_pair(&self) -> Result<Option<[f64; 2]>> {
        match self.domain.as_deref() {
            None => Ok(None),
            Some(&[a, b]) => Ok(Some([a, b])),
            Some(d) => anyhow::bail!("--domain takes exactly two values, got {}", d.len()),
        }
    }

    fn flag_layer(&self) -> Result<ConfigLayer> {
        Ok(ConfigLayer {
            command: None,
            kernel: self.kernel.clone(),
            nonlinearity: self.nonlinearity.clone(),
            kappa: self.kappa,
            family: self.family,
            compare_exact: self.compare_exact,
            domain: self.domain_pair()?,
            h: self.h,
            h_list: self.h_list.clone(),
            mode: self.mode,
            n_list: self.n_list.clone(),
            t_end: self.t_end,
            output_times: self.output_times.clone(),
            tolerances: ToleranceLayer {
                rel_tol: self.rel_tol,
                abs_tol: self.abs_tol,
                initial_step: self.initial_step,
                max_step: self.max_step,
                max_steps: self.max_steps,
                fixed_step: self.fixed_step,
            },
            halfwidth: self.halfwidth,
            method: self.method,
            form: self.form,
            blowup_guard: self.blowup_guard,
            quad_step: self.quad_step,
            quad_halfwidth: self.quad_halfwidth,
            output: self.output.clone(),
        })
    }
}

fn run(cli: &Cli) -> Result<()> {
    let mut layer = match &cli.preset {
        Some(name) => preset(name, cli.scale)?,
        None => ConfigLayer::default(),
    };
    if let Some(path) = &cli.config {
        layer.merge(ConfigLayer::from_file(path)?);
    }
    layer.merge(cli.flag_layer()?);
    let cfg = ExperimentConfig::resolve(layer, cli.command)?;
    log::info!("running {} with output prefix {}", cfg.command, cfg.output);

    let mut outcome = run::execute(&cfg, cli.preset.clone(), cli.scale)?;
    let written = run::write_outputs(&mut outcome)?;
    println!("{}", run::summary(&outcome.manifest));
    for path in written {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
