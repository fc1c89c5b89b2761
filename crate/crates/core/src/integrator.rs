//! Adaptive Dormand–Prince 5(4) integration with dense output.
//!
//! The pair has seven stages with the first-same-as-last property, so an
//! accepted step costs six right-hand side evaluations. The fifth-order
//! solution is propagated and the embedded fourth-order one only drives the
//! error estimate. Output at intermediate times comes from the standard
//! fourth-order continuous extension of the pair.

use serde::{Deserialize, Serialize};

use crate::discrete::GridFunction;
use crate::error::{Error, Result};
use crate::semidiscrete::Problem;

/// Right-hand side evaluations per accepted step (seven stages, FSAL).
pub const EVALS_PER_STEP: usize = 6;

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
/// Difference between the fifth- and fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];
/// Dense output coefficients.
const D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 5.0;
const BETA: f64 = 0.04;

/// A first-order system `y′ = F(t, y)`.
pub trait OdeSystem {
    fn dim(&self) -> usize;
    fn eval(&self, t: f64, y: &[f64], dydt: &mut [f64]) -> Result<()>;
}

/// Wraps a closure as an [`OdeSystem`].
pub struct FnSystem<F> {
    dim: usize,
    f: F,
}

impl<F> FnSystem<F>
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    pub fn new(dim: usize, f: F) -> Self {
        FnSystem { dim, f }
    }
}

impl<F> OdeSystem for FnSystem<F>
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, t: f64, y: &[f64], dydt: &mut [f64]) -> Result<()> {
        (self.f)(t, y, dydt);
        crate::discrete::check_finite(dydt).map_err(|e| e.at_time(t))
    }
}

impl OdeSystem for Problem {
    fn dim(&self) -> usize {
        self.grid().len()
    }

    fn eval(&self, t: f64, y: &[f64], dydt: &mut [f64]) -> Result<()> {
        self.eval_into(y, dydt).map_err(|e| e.at_time(t))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepControl {
    #[default]
    Adaptive,
    /// Constant step with error control disabled.
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToleranceSettings {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Initial step; `None` selects it from the right-hand side magnitude.
    pub initial_step: Option<f64>,
    pub max_step: Option<f64>,
    pub max_steps: usize,
    #[serde(default)]
    pub step_control: StepControl,
}

impl Default for ToleranceSettings {
    fn default() -> Self {
        ToleranceSettings {
            rel_tol: 1e-10,
            abs_tol: 1e-10,
            initial_step: None,
            max_step: None,
            max_steps: 10_000_000,
            step_control: StepControl::Adaptive,
        }
    }
}

impl ToleranceSettings {
    pub fn with_tolerance(tol: f64) -> Self {
        ToleranceSettings {
            rel_tol: tol,
            abs_tol: tol,
            ..Default::default()
        }
    }

    pub fn fixed_step(dt: f64) -> Self {
        ToleranceSettings {
            step_control: StepControl::Fixed(dt),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let in_unit = |x: f64| x > 0.0 && x < 1.0;
        if !in_unit(self.rel_tol) {
            return Err(Error::param("rel_tol", format!("must lie in (0, 1), got {}", self.rel_tol)));
        }
        if !in_unit(self.abs_tol) {
            return Err(Error::param("abs_tol", format!("must lie in (0, 1), got {}", self.abs_tol)));
        }
        if self.max_steps == 0 {
            return Err(Error::param("max_steps", "must be at least 1"));
        }
        for (name, v) in [("initial_step", self.initial_step), ("max_step", self.max_step)] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(Error::param(name, "must be positive"));
                }
            }
        }
        if let StepControl::Fixed(dt) = self.step_control {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(Error::param("step_control", "fixed step must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct IntegrationStats {
    pub steps_accepted: usize,
    pub steps_rejected: usize,
    pub rhs_evaluations: usize,
}

/// Output of [`integrate_system`].
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub stats: IntegrationStats,
}

/// Output of [`integrate`]: states at the requested times.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegrationResult {
    pub times: Vec<f64>,
    pub states: Vec<GridFunction>,
    pub stats: IntegrationStats,
}

impl IntegrationResult {
    /// State at the last output time.
    pub fn final_state(&self) -> &GridFunction {
        self.states.last().expect("at least one output")
    }
}

/// Integrates an assembled problem from `t = 0` to `t_end`.
///
/// An empty `output_times` returns the state at `t_end` only.
pub fn integrate(p: &Problem, t_end: f64, output_times: &[f64], tol: &ToleranceSettings) -> Result<IntegrationResult> {
    let traj = integrate_system(p, 0.0, p.initial().values(), t_end, output_times, tol)?;
    let grid = *p.grid();
    let states = traj
        .states
        .into_iter()
        .map(|s| GridFunction::new(grid, s))
        .collect::<Result<Vec<_>>>()?;
    Ok(IntegrationResult {
        times: traj.times,
        states,
        stats: traj.stats,
    })
}

/// Integrates `sys` from `(t0, y0)` to `t_end`, reporting states at `output_times`.
pub fn integrate_system<S: OdeSystem + ?Sized>(
    sys: &S,
    t0: f64,
    y0: &[f64],
    t_end: f64,
    output_times: &[f64],
    tol: &ToleranceSettings,
) -> Result<Trajectory> {
    tol.validate()?;
    let n = sys.dim();
    if y0.len() != n {
        return Err(Error::LengthMismatch { len: y0.len(), m: n });
    }
    crate::discrete::check_finite(y0)?;
    if !(t_end > t0) || !t_end.is_finite() {
        return Err(Error::param("t_end", format!("must exceed the start time {t0}, got {t_end}")));
    }
    let outputs: Vec<f64> = if output_times.is_empty() {
        vec![t_end]
    } else {
        output_times.to_vec()
    };
    if outputs.iter().any(|&t| !(t >= t0 && t <= t_end)) {
        return Err(Error::param("output_times", format!("must lie in [{t0}, {t_end}]")));
    }
    if outputs.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::param("output_times", "must be strictly ascending"));
    }

    let mut stepper = Stepper::new(sys, n);
    let mut times = Vec::with_capacity(outputs.len());
    let mut states = Vec::with_capacity(outputs.len());
    let mut next_out = 0;
    while next_out < outputs.len() && outputs[next_out] == t0 {
        times.push(t0);
        states.push(y0.to_vec());
        next_out += 1;
    }

    let mut t = t0;
    let mut y = y0.to_vec();
    let mut k1 = vec![0.0; n];
    stepper.eval(t, &y, &mut k1)?;

    let span = t_end - t0;
    let max_step = tol.max_step.unwrap_or(span).min(span);
    let fixed = match tol.step_control {
        StepControl::Fixed(dt) => Some(dt),
        StepControl::Adaptive => None,
    };
    let mut h = match (fixed, tol.initial_step) {
        (Some(dt), _) => dt,
        (None, Some(h0)) => h0.min(max_step),
        (None, None) => stepper.initial_step(t, &y, &k1, tol, max_step)?,
    };

    let mut err_old: f64 = 1e-4;
    let mut last_rejected = false;
    let mut attempts = 0usize;
    let mut y_new = vec![0.0; n];
    let mut k7 = vec![0.0; n];

    while next_out < outputs.len() {
        if attempts >= tol.max_steps {
            return Err(Error::MaxStepsExceeded(tol.max_steps));
        }
        attempts += 1;
        if h < 1e-14 * span {
            return Err(Error::StepUnderflow { step: h, t });
        }
        let last = t + 1.01 * h >= t_end;
        if last {
            h = t_end - t;
        }

        stepper.step(t, &y, &k1, h, &mut y_new, &mut k7)?;

        let err = match fixed {
            Some(_) => 0.0,
            None => stepper.error_norm(&y, &y_new, &k1, &k7, h, tol),
        };

        if err <= 1.0 {
            let t_new = if last { t_end } else { t + h };
            while next_out < outputs.len() && outputs[next_out] <= t_new {
                let tau = outputs[next_out];
                let state = if tau == t_new {
                    y_new.clone()
                } else {
                    stepper.dense(&y, &y_new, &k1, &k7, h, (tau - t) / h)
                };
                times.push(tau);
                states.push(state);
                next_out += 1;
            }
            stepper.stats.steps_accepted += 1;
            std::mem::swap(&mut y, &mut y_new);
            std::mem::swap(&mut k1, &mut k7);
            t = t_new;

            if let Some(dt) = fixed {
                h = dt;
                continue;
            }
            let mut fac = if err == 0.0 {
                FAC_MAX
            } else {
                (SAFETY * err.powf(-(0.2 - 0.75 * BETA)) * err_old.powf(BETA)).clamp(FAC_MIN, FAC_MAX)
            };
            if last_rejected {
                fac = fac.min(1.0);
            }
            err_old = err.max(1e-4);
            last_rejected = false;
            h = (h * fac).min(max_step);
        } else {
            stepper.stats.steps_rejected += 1;
            let fac = (SAFETY * err.powf(-0.2)).clamp(FAC_MIN, 1.0);
            h *= fac;
            last_rejected = true;
        }
    }

    Ok(Trajectory {
        times,
        states,
        stats: stepper.stats,
    })
}

struct Stepper<'a, S: ?Sized> {
    sys: &'a S,
    stages: [Vec<f64>; 5],
    scratch: Vec<f64>,
    stats: IntegrationStats,
}

impl<'a, S: OdeSystem + ?Sized> Stepper<'a, S> {
    fn new(sys: &'a S, n: usize) -> Self {
        Stepper {
            sys,
            stages: std::array::from_fn(|_| vec![0.0; n]),
            scratch: vec![0.0; n],
            stats: IntegrationStats::default(),
        }
    }

    fn eval(&mut self, t: f64, y: &[f64], out: &mut [f64]) -> Result<()> {
        self.stats.rhs_evaluations += 1;
        self.sys.eval(t, y, out)
    }

    /// Stages 2–7; on return `y_new` holds the fifth-order solution and `k7 = F(t+h, y_new)`.
    fn step(&mut self, t: f64, y: &[f64], k1: &[f64], h: f64, y_new: &mut [f64], k7: &mut [f64]) -> Result<()> {
        for s in 1..6 {
            let row = &A[s];
            for i in 0..y.len() {
                let mut acc = row[0] * k1[i];
                for (j, stage) in self.stages.iter().enumerate().take(s - 1) {
                    acc += row[j + 1] * stage[i];
                }
                self.scratch[i] = y[i] + h * acc;
            }
            let mut stage = std::mem::take(&mut self.stages[s - 1]);
            let scratch = std::mem::take(&mut self.scratch);
            let res = self.eval(t + C[s] * h, &scratch, &mut stage);
            self.scratch = scratch;
            self.stages[s - 1] = stage;
            res?;
        }
        let b = &A[6];
        for i in 0..y.len() {
            let mut acc = b[0] * k1[i];
            for (j, stage) in self.stages.iter().enumerate() {
                acc += b[j + 1] * stage[i];
            }
            y_new[i] = y[i] + h * acc;
        }
        self.eval(t + h, y_new, k7)
    }

    /// Componentwise error ratio `max_i |err_i| / (atol + rtol·max(|y_i|, |y_new_i|))`.
    fn error_norm(&self, y: &[f64], y_new: &[f64], k1: &[f64], k7: &[f64], h: f64, tol: &ToleranceSettings) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..y.len() {
            let mut e = E[0] * k1[i] + E[6] * k7[i];
            for (j, stage) in self.stages.iter().enumerate() {
                e += E[j + 1] * stage[i];
            }
            let sc = tol.abs_tol + tol.rel_tol * y[i].abs().max(y_new[i].abs());
            worst = worst.max((h * e).abs() / sc);
        }
        worst
    }

    fn dense(&self, y: &[f64], y_new: &[f64], k1: &[f64], k7: &[f64], h: f64, theta: f64) -> Vec<f64> {
        let theta1 = 1.0 - theta;
        (0..y.len())
            .map(|i| {
                let ydiff = y_new[i] - y[i];
                let bspl = h * k1[i] - ydiff;
                let r4 = ydiff - h * k7[i] - bspl;
                let mut d = D[0] * k1[i] + D[6] * k7[i];
                for (j, stage) in self.stages.iter().enumerate() {
                    d += D[j + 1] * stage[i];
                }
                let r5 = h * d;
                y[i] + theta * (ydiff + theta1 * (bspl + theta * (r4 + theta1 * r5)))
            })
            .collect()
    }

    /// Starting step from the magnitudes of `y0`, `F(t0, y0)` and a trial Euler step.
    fn initial_step(&mut self, t: f64, y: &[f64], f0: &[f64], tol: &ToleranceSettings, max_step: f64) -> Result<f64> {
        let sc: Vec<f64> = y.iter().map(|v| tol.abs_tol + tol.rel_tol * v.abs()).collect();
        let norm = |v: &[f64]| v.iter().zip(&sc).fold(0.0_f64, |m, (x, s)| m.max((x / s).abs()));
        let d0 = norm(y);
        let d1 = norm(f0);
        if d0 == 0.0 && d1 == 0.0 {
            // At rest: no local scale, so let the error estimator judge the full span.
            return Ok(max_step);
        }
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 }.min(max_step);
        let y1: Vec<f64> = y.iter().zip(f0).map(|(a, b)| a + h0 * b).collect();
        let mut f1 = vec![0.0; y.len()];
        self.eval(t + h0, &y1, &mut f1)?;
        let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
        let d2 = norm(&diff) / h0;
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(1.0 / 5.0)
        };
        Ok((100.0 * h0).min(h1).min(max_step))
    }
}
