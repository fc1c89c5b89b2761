//! Convolution kernels α together with their analytic first derivatives.
//!
//! The catalog covers the Green's functions of `1 + D⁴` (Rosenau-KdV),
//! `1 − D² + D⁴` (Rosenau-BBM-KdV) and `1 − D²` (exponential), plus the
//! standard Gaussian. Every catalog kernel is even, so α′ is odd and is
//! defined as `0` at the origin.
//!
//! Custom kernels are supplied as a pair of callables `(α, α′)`. Nothing is
//! differentiated symbolically; [`Kernel::verify_conditions`] gives a numeric
//! sanity check of the integrability conditions instead.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SQRT_3: f64 = 1.732_050_807_568_877_2;

/// Tail level below which a kernel is treated as numerically zero.
pub const TAIL_THRESHOLD: f64 = 1e-14;

/// Closed-form family of a kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelKind {
    #[serde(rename = "rosenau-kdv")]
    RosenauKdV,
    #[serde(rename = "rosenau-bbm-kdv")]
    RosenauBBMKdV,
    Exponential,
    Gaussian,
    Custom,
}

impl KernelKind {
    /// Kinds that have a closed form in the catalog.
    pub const CATALOG: [KernelKind; 4] = [
        KernelKind::RosenauKdV,
        KernelKind::RosenauBBMKdV,
        KernelKind::Exponential,
        KernelKind::Gaussian,
    ];

    pub fn name(self) -> &'static str {
        match self {
            KernelKind::RosenauKdV => "rosenau-kdv",
            KernelKind::RosenauBBMKdV => "rosenau-bbm-kdv",
            KernelKind::Exponential => "exponential",
            KernelKind::Gaussian => "gaussian",
            KernelKind::Custom => "custom",
        }
    }
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for KernelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        KernelKind::CATALOG
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::UnknownKernel(s.to_string()))
    }
}

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
struct CustomFns {
    alpha: ScalarFn,
    alpha_prime: ScalarFn,
}

/// A convolution kernel α with its analytic derivative and condition metadata.
#[derive(Clone)]
pub struct Kernel {
    kind: KernelKind,
    custom: Option<CustomFns>,
    decay_rate: Option<f64>,
    satisfies_c2: bool,
    mu_total_variation: Option<f64>,
}

impl fmt::Debug for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Kernel")
            .field("kind", &self.kind)
            .field("decay_rate", &self.decay_rate)
            .field("satisfies_c2", &self.satisfies_c2)
            .field("mu_total_variation", &self.mu_total_variation)
            .finish()
    }
}

/// Build a catalog kernel.
pub fn make_kernel(kind: KernelKind) -> Kernel {
    let (decay_rate, satisfies_c2) = match kind {
        KernelKind::RosenauKdV => (Some(FRAC_1_SQRT_2), true),
        KernelKind::RosenauBBMKdV => (Some(SQRT_3 / 2.0), true),
        KernelKind::Exponential => (Some(1.0), false),
        KernelKind::Gaussian => (None, true),
        KernelKind::Custom => panic!("custom kernels are built with Kernel::custom"),
    };
    Kernel::finish(Kernel {
        kind,
        custom: None,
        decay_rate,
        satisfies_c2,
        mu_total_variation: None,
    })
}

impl Kernel {
    /// Build a kernel from user-supplied `α` and `α′`.
    ///
    /// `decay_rate` is the rate `a` of an exponential envelope `e^{-a|x|}` for
    /// α′ and α‴ when one is known; it only sizes quadrature windows.
    pub fn custom<A, P>(alpha: A, alpha_prime: P, decay_rate: Option<f64>, satisfies_c2: bool) -> Self
    where
        A: Fn(f64) -> f64 + Send + Sync + 'static,
        P: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Kernel::finish(Kernel {
            kind: KernelKind::Custom,
            custom: Some(CustomFns {
                alpha: Arc::new(alpha),
                alpha_prime: Arc::new(alpha_prime),
            }),
            decay_rate,
            satisfies_c2,
            mu_total_variation: None,
        })
    }

    fn finish(mut k: Kernel) -> Kernel {
        if k.satisfies_c2 {
            let w = k.effective_halfwidth();
            k.mu_total_variation = k
                .quadrature_estimates(1e-3, w)
                .ok()
                .and_then(|e| e.mu_total_variation);
        }
        k
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn decay_rate(&self) -> Option<f64> {
        self.decay_rate
    }

    pub fn satisfies_c2(&self) -> bool {
        self.satisfies_c2
    }

    /// Numeric estimate of `|μ|(ℝ)`, the total mass of the measure α‴. `None` when C2 fails.
    pub fn mu_total_variation(&self) -> Option<f64> {
        self.mu_total_variation
    }

    /// α(x).
    pub fn alpha(&self, x: f64) -> f64 {
        let s = x.abs();
        match self.kind {
            KernelKind::RosenauKdV => {
                let y = s * FRAC_1_SQRT_2;
                (-y).exp() * (y.cos() + y.sin()) / (2.0 * std::f64::consts::SQRT_2)
            }
            KernelKind::RosenauBBMKdV => {
                let half = s / 2.0;
                (-SQRT_3 / 2.0 * s).exp() * (half.cos() + SQRT_3 * half.sin()) / (2.0 * SQRT_3)
            }
            KernelKind::Exponential => 0.5 * (-s).exp(),
            KernelKind::Gaussian => (-0.5 * x * x).exp() / (2.0 * PI).sqrt(),
            KernelKind::Custom => (self.custom.as_ref().expect("custom fns").alpha)(x),
        }
    }

    /// α′(x), with α′(0) = 0 for catalog kernels.
    pub fn alpha_prime(&self, x: f64) -> f64 {
        match self.kind {
            KernelKind::RosenauKdV => {
                let y = x * FRAC_1_SQRT_2;
                -0.5 * (-y.abs()).exp() * y.sin()
            }
            KernelKind::RosenauBBMKdV => {
                -(-SQRT_3 / 2.0 * x.abs()).exp() * (x / 2.0).sin() / SQRT_3
            }
            KernelKind::Exponential => {
                if x == 0.0 {
                    0.0
                } else {
                    -0.5 * x.signum() * (-x.abs()).exp()
                }
            }
            KernelKind::Gaussian => -x * self.alpha(x),
            KernelKind::Custom => (self.custom.as_ref().expect("custom fns").alpha_prime)(x),
        }
    }

    /// Half-width beyond which |α| and |α′| stay below [`TAIL_THRESHOLD`].
    pub fn effective_halfwidth(&self) -> f64 {
        let level = (1.0 / TAIL_THRESHOLD).ln();
        match (self.kind, self.decay_rate) {
            (KernelKind::Gaussian, _) => (2.0 * level).sqrt() + 1.0,
            (_, Some(a)) => level / a,
            (_, None) => {
                // Scan outward until a long run of samples sits below the threshold.
                let mut x = 0.0;
                let mut quiet = 0;
                while quiet < 40 && x < 1e4 {
                    x += 0.25;
                    let tail = self.alpha(x).abs().max(self.alpha_prime(x).abs());
                    quiet = if tail < TAIL_THRESHOLD { quiet + 1 } else { 0 };
                }
                x
            }
        }
    }

    /// Numeric check of the integrability conditions by trapezoidal quadrature.
    ///
    /// α″ and α‴ are approximated by central differences of α′ at the
    /// quadrature step. Each estimate is recomputed at half the step; a change
    /// of more than 1% is reported as non-convergence.
    pub fn verify_conditions(&self, quad_step: f64, quad_halfwidth: f64) -> Result<ConditionReport> {
        if !(quad_step > 0.0) || !quad_step.is_finite() {
            return Err(Error::param("quad_step", "must be positive"));
        }
        if !(quad_halfwidth > 0.0) || !quad_halfwidth.is_finite() {
            return Err(Error::param("quad_halfwidth", "must be positive"));
        }
        let coarse = self.quadrature_estimates(quad_step, quad_halfwidth)?;
        let fine = self.quadrature_estimates(quad_step / 2.0, quad_halfwidth)?;

        let checks = [
            ("alpha_l1", coarse.alpha_l1, fine.alpha_l1),
            ("alpha_prime_l1", coarse.alpha_prime_l1, fine.alpha_prime_l1),
            ("alpha_second_l1", coarse.alpha_second_l1, fine.alpha_second_l1),
        ];
        for (quantity, a, b) in checks {
            check_converged(quantity, a, b)?;
        }
        if let (Some(a), Some(b)) = (coarse.mu_total_variation, fine.mu_total_variation) {
            check_converged("mu_total_variation", a, b)?;
        }
        Ok(fine)
    }

    fn quadrature_estimates(&self, q: f64, halfwidth: f64) -> Result<ConditionReport> {
        // Odd node count keeps a node at the origin, where kernels may have kinks.
        let n = 2 * (halfwidth / q).round() as usize + 1;
        if n < 3 {
            return Err(Error::param("quad_halfwidth", "smaller than two quadrature steps"));
        }
        let x0 = -((n - 1) as f64) * q / 2.0;
        // α′ sampled on one extra node at each end for the difference stencils.
        let prime: Vec<f64> = (0..n + 2)
            .map(|i| self.alpha_prime(x0 + (i as f64 - 1.0) * q))
            .collect();

        let mut alpha_l1 = 0.0;
        let mut alpha_prime_l1 = 0.0;
        let mut alpha_second_l1 = 0.0;
        // |μ|(ℝ) is the total variation of α″, which also picks up jumps of α‴.
        // α″ is sampled pointwise with a step far below q so that kinks of α″
        // sitting on a node are not smoothed away.
        let delta = 1e-5;
        let mut mu = 0.0;
        let mut prev_second: Option<f64> = None;
        for i in 0..n {
            let weight = if i == 0 || i == n - 1 { 0.5 * q } else { q };
            let x = x0 + i as f64 * q;
            let (left, mid, right) = (prime[i], prime[i + 1], prime[i + 2]);
            alpha_l1 += weight * self.alpha(x).abs();
            alpha_prime_l1 += weight * mid.abs();
            alpha_second_l1 += weight * ((right - left) / (2.0 * q)).abs();
            if self.satisfies_c2 {
                let second = (self.alpha_prime(x + delta) - self.alpha_prime(x - delta)) / (2.0 * delta);
                if let Some(p) = prev_second {
                    mu += (second - p).abs();
                }
                prev_second = Some(second);
            }
        }
        for (node, v) in [alpha_l1, alpha_prime_l1, alpha_second_l1, mu].into_iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite { node, t: None });
            }
        }
        Ok(ConditionReport {
            kind: self.kind,
            quad_step: q,
            quad_halfwidth: halfwidth,
            alpha_l1,
            alpha_prime_l1,
            alpha_second_l1,
            w21_norm: alpha_l1 + alpha_prime_l1 + alpha_second_l1,
            mu_total_variation: self.satisfies_c2.then_some(mu),
            satisfies_c2: self.satisfies_c2,
        })
    }
}

fn check_converged(quantity: &'static str, coarse: f64, fine: f64) -> Result<()> {
    let scale = fine.abs().max(f64::MIN_POSITIVE);
    let relative_change = (coarse - fine).abs() / scale;
    if relative_change > 0.01 {
        return Err(Error::QuadratureNotConverged {
            quantity,
            relative_change,
        });
    }
    Ok(())
}

/// α(x) for `k`.
pub fn eval_alpha(k: &Kernel, x: f64) -> f64 {
    k.alpha(x)
}

/// α′(x) for `k`.
pub fn eval_alpha_prime(k: &Kernel, x: f64) -> f64 {
    k.alpha_prime(x)
}

/// Quadrature estimates of the norms entering the integrability conditions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub kind: KernelKind,
    pub quad_step: f64,
    pub quad_halfwidth: f64,
    /// ‖α‖_{L¹}
    pub alpha_l1: f64,
    /// ‖α′‖_{L¹}
    pub alpha_prime_l1: f64,
    /// ‖α″‖_{L¹}, including the mass of any jump in α′.
    pub alpha_second_l1: f64,
    /// ‖α‖_{W^{2,1}}
    pub w21_norm: f64,
    /// `|μ|(ℝ)`; `None` when α‴ is not a finite measure.
    pub mu_total_variation: Option<f64>,
    pub satisfies_c2: bool,
}
