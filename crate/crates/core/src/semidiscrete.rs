//! The truncated lattice system
//!
//! ```text
//! dv/dt = −α′_h ∗ f(v) − κ (D²_h α′_h) ∗ v
//! ```
//!
//! on `m` nodes without boundary terms. Both operators are Toeplitz, so
//! they are stored as weight vectors and never as dense matrices.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::discrete::{
    build_weights, check_finite, convolve_direct, linf, ConvolutionPlan, ConvolutionWeights, GridFunction,
    UniformGrid,
};
use crate::error::{Error, Result};
use crate::kernels::Kernel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NonlinearityKind {
    LinearPlusQuadratic,
    Polynomial,
    Custom,
}

/// Pointwise nonlinearity `f` with `f(0) = 0`.
#[derive(Clone)]
pub struct Nonlinearity {
    kind: NonlinearityKind,
    /// power → coefficient, powers ≥ 1
    terms: BTreeMap<u32, f64>,
    custom: Option<Arc<dyn Fn(f64) -> f64 + Send + Sync>>,
}

impl fmt::Debug for Nonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Nonlinearity")
            .field("kind", &self.kind)
            .field("terms", &self.terms)
            .finish()
    }
}

impl Nonlinearity {
    /// `f(u) = u + u²/2`.
    pub fn linear_plus_quadratic() -> Self {
        Nonlinearity {
            kind: NonlinearityKind::LinearPlusQuadratic,
            terms: BTreeMap::from([(1, 1.0), (2, 0.5)]),
            custom: None,
        }
    }

    /// `f(u) = Σ c_k u^k` from `(c_k, k)` pairs; every power must be at least 1.
    pub fn polynomial(terms: impl IntoIterator<Item = (f64, u32)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (coef, power) in terms {
            if !coef.is_finite() {
                return Err(Error::param("nonlinearity", format!("coefficient {coef} is not finite")));
            }
            if power == 0 {
                if coef != 0.0 {
                    return Err(Error::param("nonlinearity", "f(0) must vanish: constant term present"));
                }
                continue;
            }
            *map.entry(power).or_insert(0.0) += coef;
        }
        map.retain(|_, c| *c != 0.0);
        let kind = if map == BTreeMap::from([(1, 1.0), (2, 0.5)]) {
            NonlinearityKind::LinearPlusQuadratic
        } else {
            NonlinearityKind::Polynomial
        };
        Ok(Nonlinearity {
            kind,
            terms: map,
            custom: None,
        })
    }

    /// Arbitrary `f`; rejected unless `|f(0)| ≤ 10⁻¹⁵`.
    pub fn custom<F>(f: F) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        let at_zero = f(0.0);
        if !(at_zero.abs() <= 1e-15) {
            return Err(Error::param("nonlinearity", format!("f(0) = {at_zero} must vanish")));
        }
        Ok(Nonlinearity {
            kind: NonlinearityKind::Custom,
            terms: BTreeMap::new(),
            custom: Some(Arc::new(f)),
        })
    }

    pub fn kind(&self) -> NonlinearityKind {
        self.kind
    }

    /// Polynomial coefficients by power; empty for custom nonlinearities.
    pub fn terms(&self) -> &BTreeMap<u32, f64> {
        &self.terms
    }

    #[inline]
    pub fn evaluate(&self, u: f64) -> f64 {
        match &self.custom {
            Some(f) => f(u),
            None => self.terms.iter().map(|(&k, &c)| c * u.powi(k as i32)).sum(),
        }
    }

    /// Lipschitz constant of a polynomial `f` on `[−r, r]`; `None` for custom `f`.
    pub fn lipschitz_bound(&self, r: f64) -> Option<f64> {
        if self.custom.is_some() {
            return None;
        }
        Some(
            self.terms
                .iter()
                .map(|(&k, &c)| c.abs() * k as f64 * r.powi(k as i32 - 1))
                .sum(),
        )
    }

    /// Linear coefficient `f′(0)` for polynomials.
    pub fn linear_coefficient(&self) -> Option<f64> {
        self.custom.is_none().then(|| self.terms.get(&1).copied().unwrap_or(0.0))
    }
}

impl fmt::Display for Nonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.custom.is_some() {
            return f.write_str("<custom>");
        }
        if self.kind == NonlinearityKind::LinearPlusQuadratic {
            return f.write_str("u + u^2/2");
        }
        if self.terms.is_empty() {
            return f.write_str("0*u");
        }
        for (n, (&k, &c)) in self.terms.iter().enumerate() {
            let (sign, mag) = if c < 0.0 { ("-", -c) } else { ("+", c) };
            match (n, sign) {
                (0, "-") => f.write_str("-")?,
                (0, _) => {}
                _ => write!(f, " {sign} ")?,
            }
            if mag != 1.0 {
                write!(f, "{mag:?}*")?;
            }
            if k == 1 {
                f.write_str("u")?;
            } else {
                write!(f, "u^{k}")?;
            }
        }
        Ok(())
    }
}

impl FromStr for Nonlinearity {
    type Err = Error;

    /// Parses sums of terms like `c*u^k`, `u^k/d`, `u`, `-2*u^3`.
    fn from_str(s: &str) -> Result<Self> {
        let compact: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        if compact.is_empty() {
            return Err(Error::Parse("empty nonlinearity".into()));
        }
        let mut terms = Vec::new();
        let mut start = 0;
        let bytes = compact.as_bytes();
        for i in 1..=bytes.len() {
            let split = i == bytes.len()
                || ((bytes[i] == b'+' || bytes[i] == b'-')
                    && !matches!(bytes[i - 1], b'e' | b'E' | b'*' | b'/' | b'^'));
            if split {
                terms.push(parse_term(&compact[start..i])?);
                start = i;
            }
        }
        Nonlinearity::polynomial(terms)
    }
}

fn parse_term(term: &str) -> Result<(f64, u32)> {
    let bad = |why: &str| Error::Parse(format!("term `{term}`: {why}"));
    let (sign, body) = match term.as_bytes().first() {
        Some(b'+') => (1.0, &term[1..]),
        Some(b'-') => (-1.0, &term[1..]),
        _ => (1.0, term),
    };
    if body.is_empty() {
        return Err(bad("missing term"));
    }
    let (numer, denom) = match body.split_once('/') {
        Some((n, d)) => (n, d.parse::<f64>().map_err(|_| bad("denominator is not a number"))?),
        None => (body, 1.0),
    };
    if denom == 0.0 {
        return Err(bad("division by zero"));
    }
    let (coef, monomial) = match numer.split_once('*') {
        Some((c, m)) => (c.parse::<f64>().map_err(|_| bad("coefficient is not a number"))?, m),
        None => (1.0, numer),
    };
    let power = match monomial {
        "u" => 1,
        m if m.starts_with("u^") => m[2..].parse::<u32>().map_err(|_| bad("exponent must be a non-negative integer"))?,
        _ if monomial.parse::<f64>().is_ok() => {
            return Err(Error::param("nonlinearity", format!("constant term `{term}` not allowed: f(0) must vanish")))
        }
        _ => return Err(bad("expected `u` or `u^k`")),
    };
    Ok((sign * coef / denom, power))
}

/// How convolutions are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConvolutionMethod {
    Direct,
    #[default]
    Fast,
}

/// Literal `−α′_h∗f(v) − κD²α′_h∗v`, or the fused
/// `−α′_h∗g(v) − (α′_h + κD²α′_h)∗v` with `g(u) = f(u) − u`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RhsForm {
    #[default]
    Literal,
    Fused,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemOptions {
    /// Weight halfwidth `K`; `None` uses the full window `m − 1`.
    pub halfwidth: Option<usize>,
    pub method: ConvolutionMethod,
    pub form: RhsForm,
    /// Evaluations with `‖v‖_∞` above this raise a blow-up error.
    pub blowup_guard: f64,
}

impl Default for ProblemOptions {
    fn default() -> Self {
        ProblemOptions {
            halfwidth: None,
            method: ConvolutionMethod::Fast,
            form: RhsForm::Literal,
            blowup_guard: 1e6,
        }
    }
}

/// An assembled truncated system, immutable after construction.
#[derive(Debug, Clone)]
pub struct Problem {
    kernel: Kernel,
    nonlinearity: Nonlinearity,
    kappa: f64,
    grid: UniformGrid,
    initial: GridFunction,
    weights_nl: ConvolutionWeights,
    weights_lin: ConvolutionWeights,
    weights_fused: Option<ConvolutionWeights>,
    plan: Option<ConvolutionPlan>,
    options: ProblemOptions,
}

/// Assembles with [`ProblemOptions::default`].
pub fn assemble(
    kernel: Kernel,
    nonlinearity: Nonlinearity,
    kappa: f64,
    grid: UniformGrid,
    initial: GridFunction,
) -> Result<Problem> {
    assemble_with(kernel, nonlinearity, kappa, grid, initial, ProblemOptions::default())
}

pub fn assemble_with(
    kernel: Kernel,
    nonlinearity: Nonlinearity,
    kappa: f64,
    grid: UniformGrid,
    initial: GridFunction,
    options: ProblemOptions,
) -> Result<Problem> {
    if !(kappa > 0.0 && kappa.is_finite()) {
        return Err(Error::param("kappa", format!("must be a positive constant, got {kappa}")));
    }
    let f0 = nonlinearity.evaluate(0.0);
    if !(f0.abs() <= 1e-15) {
        return Err(Error::param("nonlinearity", format!("f(0) = {f0} must vanish")));
    }
    if !initial.grid().same_mesh(&grid) {
        return Err(Error::InvalidGrid("initial data is not sampled on the problem grid".into()));
    }
    if !(options.blowup_guard > 0.0) {
        return Err(Error::param("blowup_guard", "must be positive"));
    }
    let halfwidth = options.halfwidth.unwrap_or(grid.len() - 1);
    if halfwidth == 0 {
        return Err(Error::param("halfwidth", "must be at least 1"));
    }

    let weights_nl = build_weights(&kernel, grid.h(), halfwidth, false)?;
    let d2 = build_weights(&kernel, grid.h(), halfwidth, true)?;
    let weights_lin = d2.combine(kappa, &d2, 0.0)?;
    let weights_fused = match options.form {
        RhsForm::Literal => None,
        RhsForm::Fused => Some(weights_nl.combine(1.0, &weights_lin, 1.0)?),
    };
    let plan = match options.method {
        ConvolutionMethod::Direct => None,
        ConvolutionMethod::Fast => {
            let second = weights_fused.as_ref().unwrap_or(&weights_lin);
            Some(ConvolutionPlan::new(&[&weights_nl, second], grid.len()))
        }
    };
    Ok(Problem {
        kernel,
        nonlinearity,
        kappa,
        grid,
        initial,
        weights_nl,
        weights_lin,
        weights_fused,
        plan,
        options,
    })
}

impl Problem {
    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn nonlinearity(&self) -> &Nonlinearity {
        &self.nonlinearity
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn grid(&self) -> &UniformGrid {
        &self.grid
    }

    pub fn initial(&self) -> &GridFunction {
        &self.initial
    }

    /// `α′_h` samples (with the factor `h`).
    pub fn weights_nl(&self) -> &ConvolutionWeights {
        &self.weights_nl
    }

    /// `κ D²_h α′_h` samples (with the factor `h`).
    pub fn weights_lin(&self) -> &ConvolutionWeights {
        &self.weights_lin
    }

    pub fn options(&self) -> &ProblemOptions {
        &self.options
    }

    /// Evaluates the right-hand side into `out`.
    pub fn eval_into(&self, v: &[f64], out: &mut [f64]) -> Result<()> {
        let m = self.grid.len();
        if v.len() != m || out.len() != m {
            return Err(Error::LengthMismatch { len: v.len(), m });
        }
        check_finite(v)?;
        let norm = linf(v);
        if norm > self.options.blowup_guard {
            return Err(Error::BlowUp {
                norm,
                guard: self.options.blowup_guard,
                t: None,
            });
        }
        let nl_input: Vec<f64> = match self.options.form {
            RhsForm::Literal => v.iter().map(|&u| self.nonlinearity.evaluate(u)).collect(),
            RhsForm::Fused => v.iter().map(|&u| self.nonlinearity.evaluate(u) - u).collect(),
        };
        check_finite(&nl_input)?;
        let second = self.weights_fused.as_ref().unwrap_or(&self.weights_lin);

        match &self.plan {
            Some(plan) => {
                let sum = plan.apply(&[&nl_input, v]);
                for (o, s) in out.iter_mut().zip(sum) {
                    *o = -s;
                }
            }
            None => {
                let a = convolve_direct(&self.weights_nl, &nl_input);
                let b = convolve_direct(second, v);
                for ((o, a), b) in out.iter_mut().zip(a).zip(b) {
                    *o = -a - b;
                }
            }
        }
        check_finite(out)
    }
}

/// `−α′_h ∗ f(v) − κ D²_hα′_h ∗ v`.
pub fn rhs(p: &Problem, v: &GridFunction) -> Result<GridFunction> {
    if !v.grid().same_mesh(&p.grid) {
        return Err(Error::InvalidGrid("state is not on the problem grid".into()));
    }
    let mut out = vec![0.0; p.grid.len()];
    p.eval_into(v.values(), &mut out)?;
    Ok(GridFunction::from_parts_unchecked(p.grid, out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discrete::{linf_norm, restrict};
    use crate::kernels::{make_kernel, KernelKind};

    fn kdv_problem(grid: UniformGrid, initial: GridFunction, options: ProblemOptions) -> Problem {
        assemble_with(
            make_kernel(KernelKind::RosenauKdV),
            Nonlinearity::linear_plus_quadratic(),
            1.0,
            grid,
            initial,
            options,
        )
        .unwrap()
    }

    #[test]
    fn parse_nonlinearities() {
        let f: Nonlinearity = "u + u^2/2".parse().unwrap();
        assert_eq!(f.kind(), NonlinearityKind::LinearPlusQuadratic);
        assert_eq!(f.evaluate(2.0), 4.0);
        let g: Nonlinearity = "2*u - 0.5*u^3 + 1e-1*u^2".parse().unwrap();
        assert_eq!(g.kind(), NonlinearityKind::Polynomial);
        assert!((g.evaluate(2.0) - (4.0 - 4.0 + 0.4)).abs() < 1e-15);
        let h: Nonlinearity = "-u^2/3".parse().unwrap();
        assert!((h.evaluate(3.0) + 3.0).abs() < 1e-15);
        let e: Nonlinearity = "1.5e-1*u".parse().unwrap();
        assert!((e.evaluate(2.0) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn parse_rejects_constants_and_garbage() {
        assert!(matches!("u + 1".parse::<Nonlinearity>(), Err(Error::InvalidParameter { .. })));
        assert!("u^x".parse::<Nonlinearity>().is_err());
        assert!("".parse::<Nonlinearity>().is_err());
        assert!("v^2".parse::<Nonlinearity>().is_err());
        assert!("u/0".parse::<Nonlinearity>().is_err());
    }

    #[test]
    fn display_round_trips() {
        for s in ["u + u^2/2", "2*u - 0.5*u^3", "-u^2", "u"] {
            let f: Nonlinearity = s.parse().unwrap();
            let back: Nonlinearity = f.to_string().parse().unwrap();
            assert_eq!(back.terms(), f.terms(), "{s} -> {f}");
        }
    }

    #[test]
    fn custom_requires_zero_at_origin() {
        assert!(Nonlinearity::custom(|u| u.sin()).is_ok());
        assert!(Nonlinearity::custom(|u| u.cos()).is_err());
        assert!(Nonlinearity::polynomial([(1.0, 0)]).is_err());
    }

    #[test]
    fn fig1_problem_has_241_nodes() {
        let grid = UniformGrid::from_domain(-40.0, 80.0, 0.5).unwrap();
        let p = kdv_problem(grid, GridFunction::zeros(grid), ProblemOptions::default());
        assert_eq!(p.grid().len(), 241);
        assert_eq!(p.weights_nl().halfwidth(), 240);
    }

    #[test]
    fn assemble_rejects_bad_inputs() {
        let grid = UniformGrid::from_domain(-10.0, 10.0, 0.5).unwrap();
        let z = GridFunction::zeros(grid);
        let k = make_kernel(KernelKind::Gaussian);
        let f = Nonlinearity::linear_plus_quadratic();
        assert!(assemble(k.clone(), f.clone(), 0.0, grid, z.clone()).is_err());
        assert!(assemble(k.clone(), f.clone(), -1.0, grid, z.clone()).is_err());
        let other = UniformGrid::from_domain(-10.0, 10.0, 0.25).unwrap();
        assert!(assemble(k, f, 1.0, grid, GridFunction::zeros(other)).is_err());
    }

    #[test]
    fn zero_state_has_zero_rhs() {
        let grid = UniformGrid::from_domain(-10.0, 10.0, 0.25).unwrap();
        let p = kdv_problem(grid, GridFunction::zeros(grid), ProblemOptions::default());
        let r = rhs(&p, p.initial()).unwrap();
        assert!(r.values().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn impulse_response_is_reflected_weights() {
        let grid = UniformGrid::symmetric(40, 0.25).unwrap();
        let mut v = vec![0.0; grid.len()];
        v[40] = 1.0;
        let v = GridFunction::new(grid, v).unwrap();
        let p = assemble_with(
            make_kernel(KernelKind::Gaussian),
            Nonlinearity::polynomial([(1.0, 1)]).unwrap(),
            1e-12,
            grid,
            v.clone(),
            ProblemOptions::default(),
        )
        .unwrap();
        let r = rhs(&p, &v).unwrap();
        for i in 0..grid.len() {
            let lag = i as isize - 40;
            assert!((r.values()[i] + p.weights_nl().weight(lag)).abs() < 1e-10, "node {i}");
        }
    }

    #[test]
    fn weights_lin_is_kappa_scaled() {
        let grid = UniformGrid::symmetric(50, 0.5).unwrap();
        let z = GridFunction::zeros(grid);
        let k = make_kernel(KernelKind::RosenauKdV);
        let f = Nonlinearity::linear_plus_quadratic();
        let one = assemble(k.clone(), f.clone(), 1.0, grid, z.clone()).unwrap();
        let three = assemble(k, f, 3.0, grid, z).unwrap();
        for (a, b) in one.weights_lin().as_slice().iter().zip(three.weights_lin().as_slice()) {
            assert!((3.0 * a - b).abs() <= 1e-15 * b.abs().max(1.0));
        }
        let mu = one.kernel().mu_total_variation().unwrap();
        assert!(one.weights_lin().l1_norm() <= 2.0 * mu);
    }

    #[test]
    fn blowup_guard_trips() {
        let grid = UniformGrid::symmetric(10, 0.5).unwrap();
        let big = restrict(|x| if x == 0.0 { 2e6 } else { 0.0 }, &grid).unwrap();
        let p = kdv_problem(grid, GridFunction::zeros(grid), ProblemOptions::default());
        assert!(matches!(rhs(&p, &big), Err(Error::BlowUp { .. })));
    }

    #[test]
    fn direct_fast_and_fused_agree() {
        let grid = UniformGrid::from_domain(-20.0, 30.0, 0.25).unwrap();
        let v = restrict(|x| 0.8 / (0.3 * x).cosh().powi(4), &grid).unwrap();
        let variants = [
            (ConvolutionMethod::Direct, RhsForm::Literal),
            (ConvolutionMethod::Fast, RhsForm::Literal),
            (ConvolutionMethod::Direct, RhsForm::Fused),
            (ConvolutionMethod::Fast, RhsForm::Fused),
        ];
        let outs: Vec<GridFunction> = variants
            .iter()
            .map(|&(method, form)| {
                let opts = ProblemOptions {
                    method,
                    form,
                    ..Default::default()
                };
                rhs(&kdv_problem(grid, v.clone(), opts), &v).unwrap()
            })
            .collect();
        let scale = linf_norm(&outs[0]);
        for o in &outs[1..] {
            let diff = o.values().iter().zip(outs[0].values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(diff <= 1e-13 * scale, "{diff}");
        }
    }
}
