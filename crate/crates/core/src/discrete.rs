//! Uniform grids, grid functions and the truncated discrete convolution.
//!
//! The discrete convolution of a weight sequence `w` with a grid function `v`
//! is `(w ∗ v)_i = Σ_j h w_{i−j} v_j`. The mesh factor `h` is folded into the
//! stored weights, so [`discrete_convolve`] is a plain Toeplitz product.

use std::io::{Read, Write};
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{fmt_f64, read_table, write_table};
use crate::kernels::{Kernel, TAIL_THRESHOLD};

/// Relative tolerance used when comparing mesh sizes and node positions.
const MESH_RTOL: f64 = 1e-12;

/// A uniform mesh with nodes `x_i = x_left + i·h`, `i = 0..m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformGrid {
    x_left: f64,
    h: f64,
    m: usize,
}

impl UniformGrid {
    pub fn new(x_left: f64, h: f64, m: usize) -> Result<Self> {
        if !x_left.is_finite() {
            return Err(Error::InvalidGrid(format!("x_left = {x_left} is not finite")));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidGrid(format!("mesh size h = {h} must be positive")));
        }
        if m < 3 {
            return Err(Error::InvalidGrid(format!("need at least 3 nodes, got {m}")));
        }
        Ok(UniformGrid { x_left, h, m })
    }

    /// Grid on `[x_left, x_right]`; `h` must divide the width into a whole
    /// number of cells within 10⁻⁹.
    pub fn from_domain(x_left: f64, x_right: f64, h: f64) -> Result<Self> {
        if !(x_right > x_left) {
            return Err(Error::InvalidGrid(format!("empty domain [{x_left}, {x_right}]")));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidGrid(format!("mesh size h = {h} must be positive")));
        }
        let cells = (x_right - x_left) / h;
        let whole = cells.round();
        if (cells - whole).abs() > 1e-9 {
            return Err(Error::InvalidGrid(format!(
                "h = {h} does not divide [{x_left}, {x_right}] into whole cells ({cells})"
            )));
        }
        UniformGrid::new(x_left, h, whole as usize + 1)
    }

    /// The symmetric grid `x_i = ih`, `−N ≤ i ≤ N`.
    pub fn symmetric(n: usize, h: f64) -> Result<Self> {
        UniformGrid::new(-(n as f64) * h, h, 2 * n + 1)
    }

    pub fn x_left(&self) -> f64 {
        self.x_left
    }

    pub fn x_right(&self) -> f64 {
        self.node(self.m - 1)
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn len(&self) -> usize {
        self.m
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn node(&self, i: usize) -> f64 {
        self.x_left + i as f64 * self.h
    }

    pub fn nodes(&self) -> impl ExactSizeIterator<Item = f64> + '_ {
        (0..self.m).map(move |i| self.node(i))
    }

    /// Index of the node nearest to `x`, clamped to the grid.
    pub fn nearest_index(&self, x: f64) -> usize {
        let i = ((x - self.x_left) / self.h).round();
        i.clamp(0.0, (self.m - 1) as f64) as usize
    }

    pub(crate) fn same_mesh(&self, other: &UniformGrid) -> bool {
        same_h(self.h, other.h)
            && self.m == other.m
            && (self.x_left - other.x_left).abs() <= MESH_RTOL * self.h
    }
}

pub(crate) fn same_h(a: f64, b: f64) -> bool {
    (a - b).abs() <= MESH_RTOL * a.abs().max(b.abs())
}

/// Values sampled on the nodes of a [`UniformGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: UniformGrid,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: UniformGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::LengthMismatch {
                len: values.len(),
                m: grid.len(),
            });
        }
        check_finite(&values)?;
        Ok(GridFunction { grid, values })
    }

    pub fn zeros(grid: UniformGrid) -> Self {
        GridFunction {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub(crate) fn from_parts_unchecked(grid: UniformGrid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        GridFunction { grid, values }
    }

    pub fn grid(&self) -> &UniformGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Iterator over `(x_i, v_i)`.
    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.grid.nodes().zip(self.values.iter().copied())
    }

    /// Writes the `x,u` CSV form with 17 significant digits per value.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let rows = self.iter().map(|(x, u)| vec![fmt_f64(x), fmt_f64(u)]);
        write_table(writer, &["x", "u"], rows)
    }

    /// Reads the `x,u` CSV form. The nodes must form a uniform grid.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let rows = read_table(reader, &["x", "u"])?;
        if rows.len() < 3 {
            return Err(Error::InvalidGrid(format!("need at least 3 rows, got {}", rows.len())));
        }
        let x_left = rows[0][0];
        let h = (rows[rows.len() - 1][0] - x_left) / (rows.len() - 1) as f64;
        let grid = UniformGrid::new(x_left, h, rows.len())?;
        for (i, row) in rows.iter().enumerate() {
            if (row[0] - grid.node(i)).abs() > 1e-9 * h.max(row[0].abs()) {
                return Err(Error::InvalidGrid(format!("row {i}: x = {} is off the uniform grid", row[0])));
            }
        }
        GridFunction::new(grid, rows.into_iter().map(|r| r[1]).collect())
    }
}

pub(crate) fn check_finite(values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(node) => Err(Error::NonFinite { node, t: None }),
        None => Ok(()),
    }
}

/// Restriction operator: samples `f` at every node.
pub fn restrict<F: Fn(f64) -> f64>(f: F, grid: &UniformGrid) -> Result<GridFunction> {
    let values: Vec<f64> = grid.nodes().map(f).collect();
    GridFunction::new(*grid, values)
}

/// Convolution weights `w_k`, `−K ≤ k ≤ K`, with the mesh factor folded in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvolutionWeights {
    h: f64,
    halfwidth: usize,
    values: Vec<f64>,
    tail_warning: bool,
}

impl ConvolutionWeights {
    /// `values` holds `w_{−K}, …, w_K` and must have odd length.
    pub fn new(h: f64, values: Vec<f64>) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::param("h", "must be positive"));
        }
        if values.len() % 2 == 0 {
            return Err(Error::param("values", "weight vector must have odd length 2K+1"));
        }
        check_finite(&values)?;
        Ok(ConvolutionWeights {
            h,
            halfwidth: values.len() / 2,
            values,
            tail_warning: false,
        })
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn halfwidth(&self) -> usize {
        self.halfwidth
    }

    /// `w_k`, zero outside the stored window.
    pub fn weight(&self, k: isize) -> f64 {
        let idx = k + self.halfwidth as isize;
        if idx < 0 || idx as usize >= self.values.len() {
            0.0
        } else {
            self.values[idx as usize]
        }
    }

    /// Weights from lag `−K` to `K`.
    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    /// `Σ_k |w_k|`, which is the `l¹_h` norm of the underlying kernel samples.
    pub fn l1_norm(&self) -> f64 {
        self.values.iter().map(|w| w.abs()).sum()
    }

    /// Set when the kernel tail at lag `K` exceeded the truncation threshold.
    pub fn tail_warning(&self) -> bool {
        self.tail_warning
    }

    /// Elementwise `a·self + b·other`; both must share `h` and `K`.
    pub fn combine(&self, a: f64, other: &ConvolutionWeights, b: f64) -> Result<Self> {
        if !same_h(self.h, other.h) {
            return Err(Error::MeshMismatch {
                weights_h: other.h,
                grid_h: self.h,
            });
        }
        if self.halfwidth != other.halfwidth {
            return Err(Error::param("halfwidth", "weight vectors have different halfwidths"));
        }
        let values = self.values.iter().zip(&other.values).map(|(x, y)| a * x + b * y).collect();
        Ok(ConvolutionWeights {
            h: self.h,
            halfwidth: self.halfwidth,
            values,
            tail_warning: self.tail_warning || other.tail_warning,
        })
    }

    fn check_mesh(&self, grid: &UniformGrid) -> Result<()> {
        if same_h(self.h, grid.h()) {
            Ok(())
        } else {
            Err(Error::MeshMismatch {
                weights_h: self.h,
                grid_h: grid.h(),
            })
        }
    }
}

/// Samples `w_k = h·α′(kh)` for `|k| ≤ K`. With `apply_d2` the samples are
/// additionally second-differenced in `k`, using `k = ±(K+1)` so the stencil
/// never runs off the sampled window.
pub fn build_weights(kernel: &Kernel, h: f64, halfwidth: usize, apply_d2: bool) -> Result<ConvolutionWeights> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::param("h", "must be positive"));
    }
    if halfwidth == 0 {
        return Err(Error::param("halfwidth", "must be at least 1"));
    }
    let k_max = halfwidth as isize;
    let tail = kernel.alpha_prime(k_max as f64 * h).abs();
    let tail_warning = tail > TAIL_THRESHOLD;
    // The differenced weights share the same tail; warn once per kernel sampling.
    if tail_warning && !apply_d2 {
        log::warn!(
            "kernel tail |α′({})| = {tail:e} exceeds {TAIL_THRESHOLD:e}; weights are truncated",
            k_max as f64 * h
        );
    }

    let values = if apply_d2 {
        let ext = k_max + 1;
        let lag_grid = UniformGrid::new(-(ext as f64) * h, h, 2 * ext as usize + 1)?;
        let samples = GridFunction::new(
            lag_grid,
            (-ext..=ext).map(|k| h * kernel.alpha_prime(k as f64 * h)).collect(),
        )?;
        let mut d2 = second_difference(&samples)?.into_values();
        d2.pop();
        d2.remove(0);
        d2
    } else {
        (-k_max..=k_max).map(|k| h * kernel.alpha_prime(k as f64 * h)).collect()
    };
    let mut weights = ConvolutionWeights::new(h, values)?;
    weights.tail_warning = tail_warning;
    Ok(weights)
}

/// Three-point second difference `(v_{i+1} − 2v_i + v_{i−1})/h²`; the two
/// boundary nodes are set to zero.
pub fn second_difference(v: &GridFunction) -> Result<GridFunction> {
    let m = v.len();
    if m < 3 {
        return Err(Error::InvalidGrid(format!("second difference needs 3 nodes, got {m}")));
    }
    let h2 = v.grid.h() * v.grid.h();
    let u = &v.values;
    let mut out = vec![0.0; m];
    for i in 1..m - 1 {
        out[i] = (u[i + 1] - 2.0 * u[i] + u[i - 1]) / h2;
    }
    GridFunction::new(v.grid, out)
}

/// Direct-summation convolution `out_i = Σ_j w_{i−j} v_j`.
///
/// Lags beyond the weight halfwidth contribute nothing. The inner sum runs
/// over `j` ascending, so the result is independent of thread scheduling.
pub fn discrete_convolve(w: &ConvolutionWeights, v: &GridFunction) -> Result<GridFunction> {
    w.check_mesh(v.grid())?;
    check_finite(v.values())?;
    let out = convolve_direct(w, v.values());
    Ok(GridFunction::from_parts_unchecked(v.grid, out))
}

pub(crate) fn convolve_direct(w: &ConvolutionWeights, v: &[f64]) -> Vec<f64> {
    let m = v.len();
    let k = w.halfwidth;
    let entry = |i: usize| {
        let lo = i.saturating_sub(k);
        let hi = (i + k).min(m - 1);
        let mut acc = 0.0;
        for (j, vj) in v.iter().enumerate().take(hi + 1).skip(lo) {
            // lag i − j lives at index i − j + K
            acc += w.values[i + k - j] * vj;
        }
        acc
    };
    if m * (2 * k + 1).min(m) > 1 << 16 {
        (0..m).into_par_iter().map(entry).collect()
    } else {
        (0..m).map(entry).collect()
    }
}

/// FFT-based convolution; agrees with [`discrete_convolve`] to rounding.
pub fn discrete_convolve_fast(w: &ConvolutionWeights, v: &GridFunction) -> Result<GridFunction> {
    w.check_mesh(v.grid())?;
    check_finite(v.values())?;
    let plan = ConvolutionPlan::new(&[w], v.len());
    let out = plan.apply(&[v.values()]);
    Ok(GridFunction::from_parts_unchecked(v.grid, out))
}

/// Cached spectra of one or more weight vectors for repeated fast
/// convolution against inputs of a fixed length `m`.
///
/// The weights are embedded in a circular buffer of length `L ≥ m + K`,
/// long enough that no lag that reaches the output window wraps around.
#[derive(Clone)]
pub struct ConvolutionPlan {
    m: usize,
    len: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    spectra: Vec<Vec<Complex<f64>>>,
}

impl std::fmt::Debug for ConvolutionPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ConvolutionPlan")
            .field("m", &self.m)
            .field("len", &self.len)
            .field("weights", &self.spectra.len())
            .finish()
    }
}

impl ConvolutionPlan {
    pub fn new(weights: &[&ConvolutionWeights], m: usize) -> Self {
        let reach = weights
            .iter()
            .map(|w| w.halfwidth.min(m.saturating_sub(1)))
            .max()
            .unwrap_or(0);
        let len = (m + reach).next_power_of_two().max(2);
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(len);
        let inverse = planner.plan_fft_inverse(len);
        let spectra = weights
            .iter()
            .map(|w| {
                let reach = w.halfwidth.min(m.saturating_sub(1)) as isize;
                let mut buf = vec![Complex::new(0.0, 0.0); len];
                for k in -reach..=reach {
                    let pos = k.rem_euclid(len as isize) as usize;
                    buf[pos].re = w.weight(k);
                }
                forward.process(&mut buf);
                buf
            })
            .collect();
        ConvolutionPlan {
            m,
            len,
            forward,
            inverse,
            spectra,
        }
    }

    /// Input length this plan was built for.
    pub fn input_len(&self) -> usize {
        self.m
    }

    /// `Σ_t w_t ∗ inputs[t]`, one input per weight vector, in plan order.
    pub fn apply(&self, inputs: &[&[f64]]) -> Vec<f64> {
        assert_eq!(inputs.len(), self.spectra.len(), "one input per weight vector");
        let zero = Complex::new(0.0, 0.0);
        let mut acc = vec![zero; self.len];
        let mut buf = vec![zero; self.len];
        for (spectrum, input) in self.spectra.iter().zip(inputs) {
            assert_eq!(input.len(), self.m, "input length does not match plan");
            buf.iter_mut().for_each(|c| *c = zero);
            for (b, &x) in buf.iter_mut().zip(input.iter()) {
                b.re = x;
            }
            self.forward.process(&mut buf);
            for ((a, b), s) in acc.iter_mut().zip(&buf).zip(spectrum) {
                *a += b * s;
            }
        }
        self.inverse.process(&mut acc);
        let scale = 1.0 / self.len as f64;
        acc[..self.m].iter().map(|c| c.re * scale).collect()
    }
}

/// `Σ h|v_i|`.
pub fn l1h_norm(v: &GridFunction) -> f64 {
    v.grid.h() * v.values.iter().map(|x| x.abs()).sum::<f64>()
}

/// `max |v_i|`.
pub fn linf_norm(v: &GridFunction) -> f64 {
    linf(v.values())
}

pub(crate) fn linf(values: &[f64]) -> f64 {
    values.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}
