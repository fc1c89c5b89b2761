//! Error norms, experimental convergence orders, localization studies and
//! tail-decay diagnostics.

use std::io::Write;
use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::discrete::{linf, same_h, GridFunction, UniformGrid};
use crate::error::{Error, Result};
use crate::integrator::{integrate, IntegrationStats, ToleranceSettings};
use crate::io::{fmt_f64, fmt_opt, write_table};
use crate::kernels::Kernel;
use crate::semidiscrete::{assemble_with, Nonlinearity, Problem, ProblemOptions};
use crate::solutions::{initial_data, SolitaryWave};

/// Everything but the grid: a problem family swept by the studies.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub kernel: Kernel,
    pub nonlinearity: Nonlinearity,
    pub kappa: f64,
    /// `[x_left, x_right]` for convergence studies.
    pub domain: (f64, f64),
    /// Initial profile at `t = 0`; also the exact solution when comparing.
    pub wave: SolitaryWave,
    pub tolerances: ToleranceSettings,
    pub options: ProblemOptions,
}

/// Final state of one integration.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub state: GridFunction,
    pub stats: IntegrationStats,
}

impl ExperimentSpec {
    pub fn problem_on(&self, grid: UniformGrid) -> Result<Problem> {
        let initial = initial_data(&self.wave, &grid)?;
        assemble_with(
            self.kernel.clone(),
            self.nonlinearity.clone(),
            self.kappa,
            grid,
            initial,
            self.options,
        )
    }

    pub fn run(&self, grid: UniformGrid, t_end: f64) -> Result<RunOutcome> {
        let problem = self.problem_on(grid)?;
        let result = integrate(&problem, t_end, &[], &self.tolerances)?;
        Ok(RunOutcome {
            state: result.final_state().clone(),
            stats: result.stats,
        })
    }

    /// The exact solution `u(x, t)` carried by the spec's wave.
    pub fn exact(&self, x: f64, t: f64) -> f64 {
        self.wave.profile(x, t)
    }
}

/// `max_i |exact(x_i, t) − numeric_i|`.
pub fn linf_error<F: Fn(f64, f64) -> f64>(numeric: &GridFunction, exact: F, t: f64) -> f64 {
    numeric.iter().fold(0.0_f64, |acc, (x, u)| acc.max((exact(x, t) - u).abs()))
}

/// `ρ = log(e1/e2) / log(h1/h2)`.
pub fn rate_two_grid(e1: f64, h1: f64, e2: f64, h2: f64) -> Result<f64> {
    for (name, v) in [("e1", e1), ("h1", h1), ("e2", e2), ("h2", h2)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::DegenerateRate(format!("{name} = {v} must be positive")));
        }
    }
    if h1 == h2 {
        return Err(Error::DegenerateRate("mesh sizes coincide".into()));
    }
    Ok((e1 / e2).ln() / (h1 / h2).ln())
}

/// Three-grid order `log₂(‖u_h − u_{h/2}‖ / ‖u_{h/2} − u_{h/4}‖)`, with both
/// differences taken on the coarsest grid's nodes.
pub fn rate_richardson(u_h: &GridFunction, u_h2: &GridFunction, u_h4: &GridFunction) -> Result<f64> {
    check_refinement(u_h.grid(), u_h2.grid())?;
    check_refinement(u_h2.grid(), u_h4.grid())?;
    let coarse = u_h.values();
    let mid = u_h2.values();
    let fine = u_h4.values();
    let d1 = (0..coarse.len()).fold(0.0_f64, |acc, i| acc.max((coarse[i] - mid[2 * i]).abs()));
    let d2 = (0..coarse.len()).fold(0.0_f64, |acc, i| acc.max((mid[2 * i] - fine[4 * i]).abs()));
    if d1 == 0.0 || d2 == 0.0 {
        return Err(Error::DegenerateRate(format!(
            "successive differences {d1:e} and {d2:e} must both be nonzero"
        )));
    }
    Ok((d1 / d2).log2())
}

/// `fine` halves the mesh of `coarse` over the same interval.
fn check_refinement(coarse: &UniformGrid, fine: &UniformGrid) -> Result<()> {
    let nested = same_h(coarse.h(), 2.0 * fine.h())
        && (coarse.x_left() - fine.x_left()).abs() <= 1e-9 * coarse.h()
        && fine.len() == 2 * coarse.len() - 1;
    if nested {
        Ok(())
    } else {
        Err(Error::NotNested(format!(
            "grid (x_left {}, h {}, m {}) is not a halving of (x_left {}, h {}, m {})",
            fine.x_left(),
            fine.h(),
            fine.len(),
            coarse.x_left(),
            coarse.h(),
            coarse.len()
        )))
    }
}

/// Pairwise difference `‖u_coarse − u_fine‖_∞` on the coarse nodes.
fn nested_difference(coarse: &GridFunction, fine: &GridFunction) -> Result<f64> {
    check_refinement(coarse.grid(), fine.grid())?;
    let f = fine.values();
    Ok(coarse
        .values()
        .iter()
        .enumerate()
        .fold(0.0_f64, |acc, (i, c)| acc.max((c - f[2 * i]).abs())))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConvergenceMode {
    /// Errors against the exact solitary wave; two-grid rates.
    AgainstExact,
    /// Differences of successive solutions; three-grid rates.
    Richardson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub h: f64,
    pub m: usize,
    /// Against the exact solution, or `‖u_{2h} − u_h‖` in Richardson mode.
    pub error: Option<f64>,
    pub rate: Option<f64>,
    pub stats: IntegrationStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub mode: ConvergenceMode,
    pub t_end: f64,
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceReport {
    /// `h,m,error,rate`, with empty fields where undefined.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let rows = self
            .rows
            .iter()
            .map(|r| vec![fmt_f64(r.h), r.m.to_string(), fmt_opt(r.error), fmt_opt(r.rate)]);
        write_table(writer, &["h", "m", "error", "rate"], rows)
    }

    pub fn rates(&self) -> Vec<f64> {
        self.rows.iter().filter_map(|r| r.rate).collect()
    }
}

/// Runs the spec on every mesh size in `hs` (strictly decreasing) over the
/// spec's domain, then computes errors and experimental orders.
pub fn convergence_study(
    spec: &ExperimentSpec,
    hs: &[f64],
    t_end: f64,
    mode: ConvergenceMode,
) -> Result<ConvergenceReport> {
    if hs.is_empty() {
        return Err(Error::param("h_list", "must not be empty"));
    }
    if hs.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::param("h_list", "mesh sizes must be strictly decreasing"));
    }
    let grids = hs
        .iter()
        .map(|&h| UniformGrid::from_domain(spec.domain.0, spec.domain.1, h))
        .collect::<Result<Vec<_>>>()?;
    let runs = grids
        .par_iter()
        .map(|&g| spec.run(g, t_end))
        .collect::<Result<Vec<_>>>()?;

    let mut rows: Vec<ConvergenceRow> = hs
        .iter()
        .zip(&runs)
        .map(|(&h, run)| ConvergenceRow {
            h,
            m: run.state.len(),
            error: None,
            rate: None,
            stats: run.stats,
        })
        .collect();

    match mode {
        ConvergenceMode::AgainstExact => {
            for (row, run) in rows.iter_mut().zip(&runs) {
                row.error = Some(linf_error(&run.state, |x, t| spec.exact(x, t), t_end));
            }
            for i in 1..rows.len() {
                let (prev, cur) = (&rows[i - 1], &rows[i]);
                let rate = rate_two_grid(prev.error.unwrap(), prev.h, cur.error.unwrap(), cur.h)?;
                rows[i].rate = Some(rate);
            }
        }
        ConvergenceMode::Richardson => {
            for i in 1..rows.len() {
                rows[i].error = Some(nested_difference(&runs[i - 1].state, &runs[i].state)?);
            }
            for i in 2..rows.len() {
                rows[i].rate = Some(rate_richardson(&runs[i - 2].state, &runs[i - 1].state, &runs[i].state)?);
            }
        }
    }
    Ok(ConvergenceReport { mode, t_end, rows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationRow {
    pub n: usize,
    /// `N·h`
    pub halfwidth: f64,
    pub error: f64,
    pub stats: IntegrationStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationReport {
    pub h: f64,
    pub t_end: f64,
    pub rows: Vec<LocalizationRow>,
}

impl LocalizationReport {
    /// `N,halfwidth,error`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let rows = self
            .rows
            .iter()
            .map(|r| vec![r.n.to_string(), fmt_f64(r.halfwidth), fmt_f64(r.error)]);
        write_table(writer, &["N", "halfwidth", "error"], rows)
    }

    /// First `N` whose successor improves the error by less than `tolerance`
    /// (relative), i.e. where the error curve flattens.
    pub fn knee(&self, tolerance: f64) -> Option<usize> {
        self.rows
            .windows(2)
            .find(|w| w[1].error > (1.0 - tolerance) * w[0].error)
            .map(|w| w[0].n)
    }

    pub fn errors(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.error).collect()
    }
}

/// Fixed `h`, domain `[−Nh, Nh]` for each `N`; errors against the exact wave.
pub fn localization_study(spec: &ExperimentSpec, h: f64, ns: &[usize], t_end: f64) -> Result<LocalizationReport> {
    if ns.is_empty() {
        return Err(Error::param("n_list", "must not be empty"));
    }
    if ns.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::param("n_list", "must be strictly increasing"));
    }
    let rows = ns
        .par_iter()
        .map(|&n| {
            let run = spec.run(UniformGrid::symmetric(n, h)?, t_end)?;
            Ok(LocalizationRow {
                n,
                halfwidth: n as f64 * h,
                error: linf_error(&run.state, |x, t| spec.exact(x, t), t_end),
                stats: run.stats,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LocalizationReport { h, t_end, rows })
}

/// `max |v_i|` over nodes more than `n0` indices from the grid centre.
pub fn tail_sup(v: &GridFunction, n0: usize) -> Result<f64> {
    let m = v.len();
    let half = (m - 1) / 2;
    if n0 >= half {
        return Err(Error::param("n0", format!("core halfwidth {n0} leaves no tail on {m} nodes")));
    }
    let centre = (m - 1) as f64 / 2.0;
    Ok(v
        .values()
        .iter()
        .enumerate()
        .filter(|(i, _)| (*i as f64 - centre).abs() > n0 as f64)
        .fold(0.0_f64, |acc, (_, x)| acc.max(x.abs())))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// `r` in `|v| ≈ C e^{−r|x|}`
    pub rate: f64,
    pub constant: f64,
}

/// Least-squares fit of `log|v_i|` against `|x_i|` over `window`.
pub fn decay_fit(v: &GridFunction, window: Range<usize>) -> Result<DecayFit> {
    if window.end > v.len() || window.len() < 5 {
        return Err(Error::param("window", format!("need at least 5 nodes inside the grid, got {window:?}")));
    }
    let mut pts = Vec::with_capacity(window.len());
    for i in window {
        let val = v.values()[i].abs();
        if val == 0.0 {
            return Err(Error::param("window", format!("zero value at node {i}")));
        }
        pts.push((v.grid().node(i).abs(), val.ln()));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::param("window", "all nodes at the same |x|"));
    }
    let slope = sxy / sxx;
    Ok(DecayFit {
        rate: -slope,
        constant: (my - slope * mx).exp(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TailSide {
    Left,
    Right,
}

/// The outer quarter of the nodes on `side`, minus a guard band of 5% of the
/// nodes at the domain edge.
pub fn default_tail_window(grid: &UniformGrid, side: TailSide) -> Range<usize> {
    let m = grid.len();
    let quarter = m / 4;
    let guard = m / 20;
    match side {
        TailSide::Right => (m - quarter)..(m - guard),
        TailSide::Left => guard..quarter,
    }
}

/// `‖a − b‖_∞` for states on the same grid.
pub fn linf_distance(a: &GridFunction, b: &GridFunction) -> Result<f64> {
    if !a.grid().same_mesh(b.grid()) {
        return Err(Error::InvalidGrid("states live on different grids".into()));
    }
    let diff: Vec<f64> = a.values().iter().zip(b.values()).map(|(x, y)| x - y).collect();
    Ok(linf(&diff))
}
