//! Experiment configuration: presets, JSON layers and resolution.
//!
//! Layers are merged preset < config file < command-line flags; the merged
//! layer is then resolved into a fully specified [`ExperimentConfig`].

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use nlkdv_core::{
    ConvergenceMode, ConvolutionMethod, KernelKind, Nonlinearity, ProblemOptions, RhsForm, StepControl,
    ToleranceSettings, UniformGrid, WaveFamily,
};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Simulate,
    Converge,
    Localize,
    KernelCheck,
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Command::Simulate => "simulate",
            Command::Converge => "converge",
            Command::Localize => "localize",
            Command::KernelCheck => "kernel-check",
        })
    }
}

/// Integrator settings as they appear in a layer; unset fields fall through.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceLayer {
    pub rel_tol: Option<f64>,
    pub abs_tol: Option<f64>,
    pub initial_step: Option<f64>,
    pub max_step: Option<f64>,
    pub max_steps: Option<usize>,
    /// Constant step size; disables error control.
    pub fixed_step: Option<f64>,
}

impl ToleranceLayer {
    fn merge(&mut self, over: ToleranceLayer) {
        macro_rules! take {
            ($($f:ident),*) => { $( if over.$f.is_some() { self.$f = over.$f; } )* };
        }
        take!(rel_tol, abs_tol, initial_step, max_step, max_steps, fixed_step);
    }
}

/// One configuration layer. Every field is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigLayer {
    pub command: Option<Command>,
    pub kernel: Option<String>,
    pub nonlinearity: Option<String>,
    pub kappa: Option<f64>,
    pub family: Option<WaveFamily>,
    pub compare_exact: Option<bool>,
    pub domain: Option<[f64; 2]>,
    pub h: Option<f64>,
    pub h_list: Option<Vec<f64>>,
    pub mode: Option<ConvergenceMode>,
    pub n_list: Option<Vec<usize>>,
    pub t_end: Option<f64>,
    pub output_times: Option<Vec<f64>>,
    #[serde(default)]
    pub tolerances: ToleranceLayer,
    pub halfwidth: Option<usize>,
    pub method: Option<ConvolutionMethod>,
    pub form: Option<RhsForm>,
    pub blowup_guard: Option<f64>,
    pub quad_step: Option<f64>,
    pub quad_halfwidth: Option<f64>,
    pub output: Option<String>,
}

impl ConfigLayer {
    /// Fields set in `over` replace those in `self`.
    pub fn merge(&mut self, over: ConfigLayer) {
        macro_rules! take {
            ($($f:ident),*) => { $( if over.$f.is_some() { self.$f = over.$f; } )* };
        }
        take!(
            command,
            kernel,
            nonlinearity,
            kappa,
            family,
            compare_exact,
            domain,
            h,
            h_list,
            mode,
            n_list,
            t_end,
            output_times,
            halfwidth,
            method,
            form,
            blowup_guard,
            quad_step,
            quad_halfwidth,
            output
        );
        self.tolerances.merge(over.tolerances);
    }

    /// Reads a config file. A run manifest is accepted too: its `config`
    /// object is used.
    pub fn from_file(path: &Path) -> Result<ConfigLayer> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut value: serde_json::Value =
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        if let Some(inner) = value.get_mut("config") {
            value = inner.take();
        }
        serde_json::from_value(value).with_context(|| format!("invalid config {}", path.display()))
    }
}

/// Names accepted by `--preset`.
pub const PRESETS: [&str; 7] = ["fig1", "fig2-kdv", "fig2-bbm", "fig3-kdv", "fig3-bbm", "fig4", "table1"];

fn halvings(from: f64, count: usize) -> Vec<f64> {
    (0..count).map(|k| from / f64::powi(2.0, k as i32)).collect()
}

/// The published experiment setups; `scale` selects the desk-size variant
/// with shorter runs, coarser mesh lists and relaxed tolerances.
pub fn preset(name: &str, scale: bool) -> Result<ConfigLayer> {
    let tol = if scale { 1e-8 } else { 1e-10 };
    let mut layer = ConfigLayer {
        nonlinearity: Some("u + u^2/2".into()),
        kappa: Some(1.0),
        tolerances: ToleranceLayer {
            rel_tol: Some(tol),
            abs_tol: Some(tol),
            ..Default::default()
        },
        output: Some(name.to_string()),
        ..Default::default()
    };
    let (t_full, t_desk) = (40.0, 10.0);
    layer.t_end = Some(if scale { t_desk } else { t_full });
    match name {
        "fig1" => {
            layer.command = Some(Command::Simulate);
            layer.kernel = Some("rosenau-kdv".into());
            layer.family = Some(WaveFamily::RosenauKdV);
            layer.compare_exact = Some(true);
            layer.domain = Some([-40.0, 80.0]);
            layer.h = Some(0.5);
        }
        "fig2-kdv" | "fig2-bbm" => {
            let bbm = name == "fig2-bbm";
            layer.command = Some(Command::Converge);
            layer.mode = Some(ConvergenceMode::AgainstExact);
            layer.kernel = Some(if bbm { "rosenau-bbm-kdv" } else { "rosenau-kdv" }.into());
            layer.family = Some(if bbm { WaveFamily::RosenauBBMKdV } else { WaveFamily::RosenauKdV });
            layer.compare_exact = Some(true);
            layer.domain = Some(match (bbm, scale) {
                (false, false) => [-100.0, 100.0],
                (true, false) => [-80.0, 120.0],
                (false, true) => [-60.0, 80.0],
                (true, true) => [-60.0, 100.0],
            });
            layer.h_list = Some(if scale { halvings(0.4, 4) } else { halvings(1.0, 6) });
        }
        "fig3-kdv" | "fig3-bbm" => {
            let bbm = name == "fig3-bbm";
            layer.command = Some(Command::Localize);
            layer.kernel = Some(if bbm { "rosenau-bbm-kdv" } else { "rosenau-kdv" }.into());
            layer.family = Some(if bbm { WaveFamily::RosenauBBMKdV } else { WaveFamily::RosenauKdV });
            layer.compare_exact = Some(true);
            layer.h = Some(0.05);
            let full = [600, 800, 1000, 1200, 1600, 2400];
            layer.n_list = Some(if scale { full.iter().map(|n| n / 4).collect() } else { full.to_vec() });
        }
        "fig4" => {
            layer.command = Some(Command::Simulate);
            layer.kernel = Some("gaussian".into());
            layer.family = Some(WaveFamily::RosenauKdV);
            layer.compare_exact = Some(false);
            layer.domain = Some([-40.0, 80.0]);
            layer.h = Some(if scale { 0.1 } else { 0.05 });
        }
        "table1" => {
            layer.command = Some(Command::Converge);
            layer.mode = Some(ConvergenceMode::Richardson);
            layer.kernel = Some("gaussian".into());
            layer.family = Some(WaveFamily::RosenauKdV);
            layer.compare_exact = Some(false);
            layer.domain = Some(if scale { [-60.0, 80.0] } else { [-110.0, 130.0] });
            layer.h_list = Some(if scale { halvings(0.4, 5) } else { halvings(1.0, 6) });
        }
        other => bail!("unknown preset `{other}` (available: {})", PRESETS.join(", ")),
    }
    Ok(layer)
}

/// A fully resolved experiment. Serialized verbatim into run manifests,
/// which can be fed back through `--config`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub command: Command,
    pub kernel: String,
    pub nonlinearity: String,
    pub kappa: f64,
    pub family: WaveFamily,
    pub compare_exact: bool,
    pub domain: Option<[f64; 2]>,
    pub h: Option<f64>,
    pub h_list: Option<Vec<f64>>,
    pub mode: Option<ConvergenceMode>,
    pub n_list: Option<Vec<usize>>,
    pub t_end: Option<f64>,
    pub output_times: Vec<f64>,
    pub tolerances: ToleranceLayer,
    pub halfwidth: Option<usize>,
    pub method: ConvolutionMethod,
    pub form: RhsForm,
    pub blowup_guard: f64,
    pub quad_step: Option<f64>,
    pub quad_halfwidth: Option<f64>,
    pub output: String,
}

fn field(name: &str, reason: impl fmt::Display) -> anyhow::Error {
    anyhow!("invalid config field `{name}`: {reason}")
}

fn required<T>(value: Option<T>, name: &str, command: Command) -> Result<T> {
    value.ok_or_else(|| field(name, format!("required by `{command}`")))
}

fn positive(value: f64, name: &str) -> Result<f64> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(field(name, format!("must be positive, got {value}")))
    }
}

impl ExperimentConfig {
    /// Fills defaults and validates the merged layer for `command`.
    pub fn resolve(layer: ConfigLayer, command: Command) -> Result<ExperimentConfig> {
        if let Some(c) = layer.command {
            if c != command {
                bail!(field("command", format!("configuration is for `{c}`, but `{command}` was requested")));
            }
        }
        let kernel = layer.kernel.unwrap_or_else(|| "rosenau-kdv".into());
        KernelKind::from_str(&kernel).map_err(|e| field("kernel", e))?;
        let nonlinearity = layer.nonlinearity.unwrap_or_else(|| "u + u^2/2".into());
        let parsed: Nonlinearity = nonlinearity.parse().map_err(|e| field("nonlinearity", e))?;
        let kappa = positive(layer.kappa.unwrap_or(1.0), "kappa")?;

        let tolerances = layer.tolerances;
        let mut resolved = ExperimentConfig {
            command,
            kernel,
            nonlinearity: parsed.to_string(),
            kappa,
            family: layer.family.unwrap_or(WaveFamily::RosenauKdV),
            compare_exact: layer.compare_exact.unwrap_or(false),
            domain: None,
            h: None,
            h_list: None,
            mode: None,
            n_list: None,
            t_end: None,
            output_times: Vec::new(),
            tolerances: ToleranceLayer {
                rel_tol: Some(tolerances.rel_tol.unwrap_or(1e-10)),
                abs_tol: Some(tolerances.abs_tol.unwrap_or(1e-10)),
                initial_step: tolerances.initial_step,
                max_step: tolerances.max_step,
                max_steps: Some(tolerances.max_steps.unwrap_or(10_000_000)),
                fixed_step: tolerances.fixed_step,
            },
            halfwidth: layer.halfwidth,
            method: layer.method.unwrap_or_default(),
            form: layer.form.unwrap_or_default(),
            blowup_guard: positive(layer.blowup_guard.unwrap_or(1e6), "blowup_guard")?,
            quad_step: None,
            quad_halfwidth: None,
            output: layer.output.unwrap_or_else(|| format!("nlkdv_{command}").replace('-', "_")),
        };
        resolved.tolerance_settings().map_err(|e| field("tolerances", e))?;
        if resolved.halfwidth == Some(0) {
            bail!(field("halfwidth", "must be at least 1"));
        }

        if command == Command::KernelCheck {
            resolved.quad_step = Some(positive(layer.quad_step.unwrap_or(1e-3), "quad_step")?);
            if let Some(w) = layer.quad_halfwidth {
                resolved.quad_halfwidth = Some(positive(w, "quad_halfwidth")?);
            }
            return Ok(resolved);
        }

        let t_end = positive(required(layer.t_end, "t_end", command)?, "t_end")?;
        resolved.t_end = Some(t_end);
        match command {
            Command::Simulate => {
                let domain = check_domain(required(layer.domain, "domain", command)?)?;
                let h = positive(required(layer.h, "h", command)?, "h")?;
                UniformGrid::from_domain(domain[0], domain[1], h).map_err(|e| field("h", e))?;
                let times = layer.output_times.unwrap_or_default();
                if times.iter().any(|&t| !(0.0..=t_end).contains(&t)) {
                    bail!(field("output_times", format!("every time must lie in [0, {t_end}]")));
                }
                if times.windows(2).any(|w| w[1] <= w[0]) {
                    bail!(field("output_times", "must be strictly ascending"));
                }
                resolved.domain = Some(domain);
                resolved.h = Some(h);
                resolved.output_times = times;
            }
            Command::Converge => {
                let domain = check_domain(required(layer.domain, "domain", command)?)?;
                let hs = required(layer.h_list, "h_list", command)?;
                if hs.is_empty() {
                    bail!(field("h_list", "must not be empty"));
                }
                for &h in &hs {
                    positive(h, "h_list")?;
                    UniformGrid::from_domain(domain[0], domain[1], h).map_err(|e| field("h_list", e))?;
                }
                if hs.windows(2).any(|w| w[1] >= w[0]) {
                    bail!(field("h_list", "must be strictly decreasing"));
                }
                let mode = layer.mode.unwrap_or(ConvergenceMode::AgainstExact);
                if mode == ConvergenceMode::Richardson && hs.len() >= 2 {
                    for w in hs.windows(2) {
                        if (w[0] - 2.0 * w[1]).abs() > 1e-12 * w[0] {
                            bail!(field("h_list", "richardson mode needs successive halvings"));
                        }
                    }
                }
                resolved.domain = Some(domain);
                resolved.h_list = Some(hs);
                resolved.mode = Some(mode);
                resolved.compare_exact = mode == ConvergenceMode::AgainstExact;
            }
            Command::Localize => {
                let h = positive(required(layer.h, "h", command)?, "h")?;
                let ns = required(layer.n_list, "n_list", command)?;
                if ns.is_empty() || ns.contains(&0) {
                    bail!(field("n_list", "must be a nonempty list of positive integers"));
                }
                if ns.windows(2).any(|w| w[1] <= w[0]) {
                    bail!(field("n_list", "must be strictly increasing"));
                }
                resolved.h = Some(h);
                resolved.n_list = Some(ns);
                resolved.compare_exact = true;
            }
            Command::KernelCheck => unreachable!(),
        }
        Ok(resolved)
    }

    pub fn kernel_kind(&self) -> KernelKind {
        self.kernel.parse().expect("validated kernel")
    }

    pub fn parsed_nonlinearity(&self) -> Nonlinearity {
        self.nonlinearity.parse().expect("validated nonlinearity")
    }

    pub fn tolerance_settings(&self) -> nlkdv_core::Result<ToleranceSettings> {
        let t = &self.tolerances;
        let defaults = ToleranceSettings::default();
        let settings = ToleranceSettings {
            rel_tol: t.rel_tol.unwrap_or(defaults.rel_tol),
            abs_tol: t.abs_tol.unwrap_or(defaults.abs_tol),
            initial_step: t.initial_step,
            max_step: t.max_step,
            max_steps: t.max_steps.unwrap_or(defaults.max_steps),
            step_control: t.fixed_step.map_or(StepControl::Adaptive, StepControl::Fixed),
        };
        settings.validate()?;
        Ok(settings)
    }

    pub fn problem_options(&self) -> ProblemOptions {
        ProblemOptions {
            halfwidth: self.halfwidth,
            method: self.method,
            form: self.form,
            blowup_guard: self.blowup_guard,
        }
    }
}

fn check_domain(domain: [f64; 2]) -> Result<[f64; 2]> {
    if domain.iter().all(|x| x.is_finite()) && domain[0] < domain[1] {
        Ok(domain)
    } else {
        Err(field("domain", format!("[{}, {}] is empty", domain[0], domain[1])))
    }
}
