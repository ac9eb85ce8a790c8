//! Box domains in one to three dimensions, the ghost-point Neumann Laplacian
//! and the discrete norms used by every estimate.
//!
//! Nodes are vertex centred: an axis with `cells` cells carries `cells + 1`
//! nodes at spacing `h = length / cells`, boundary nodes included. Node data is
//! stored row-major (the last axis varies fastest). The quadrature is the
//! tensor trapezoid rule, under which the reflected three-point Laplacian is
//! self-adjoint and satisfies
//!
//! ```text
//! <Δf, g> = -Σ_faces w_face (f_{i+1} - f_i)(g_{i+1} - g_i) / h²
//! ```
//!
//! exactly. `norm_grad` is defined from the same face sum, so
//! `<Δf, f> = -‖∇f‖²` holds to rounding.

use serde::{Deserialize, Serialize};

use crate::error::{HrError, Result};
use crate::scalar::Real;

/// Maximum spatial dimension supported.
pub const MAX_DIM: usize = 3;

/// Axis-aligned box `[0, L₁] × … × [0, L_n]` with a uniform vertex grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<S: Real = f64> {
    lengths: Vec<S>,
    cells: Vec<usize>,
    spacing: Vec<S>,
    /// Node stride of each axis in the flat layout.
    strides: Vec<usize>,
    /// One-dimensional trapezoid weights per axis.
    axis_weights: Vec<Vec<S>>,
    /// Tensor-product quadrature weight of every node.
    weights: Vec<S>,
}

impl<S: Real> Grid<S> {
    pub fn new(lengths: &[S], cells: &[usize]) -> Result<Self> {
        let dim = lengths.len();
        if dim == 0 || dim > MAX_DIM {
            return Err(HrError::InvalidGrid(format!("dimension must be 1, 2 or 3, got {dim}")));
        }
        if cells.len() != dim {
            return Err(HrError::InvalidGrid(format!(
                "{} lengths but {} cell counts",
                dim,
                cells.len()
            )));
        }
        for (axis, (&l, &n)) in lengths.iter().zip(cells).enumerate() {
            if !(l > S::zero()) || !l.is_finite() {
                return Err(HrError::InvalidGrid(format!(
                    "axis {axis}: length must be positive and finite"
                )));
            }
            if n < 2 {
                return Err(HrError::InvalidGrid(format!(
                    "axis {axis}: need at least 2 cells, got {n}"
                )));
            }
        }
        let spacing: Vec<S> = lengths.iter().zip(cells).map(|(&l, &n)| l / S::of(n)).collect();
        let nodes: Vec<usize> = cells.iter().map(|n| n + 1).collect();
        let mut strides = vec![1; dim];
        for axis in (0..dim.saturating_sub(1)).rev() {
            strides[axis] = strides[axis + 1] * nodes[axis + 1];
        }
        let axis_weights: Vec<Vec<S>> = (0..dim)
            .map(|axis| {
                let h = spacing[axis];
                let n = nodes[axis];
                (0..n)
                    .map(|i| if i == 0 || i == n - 1 { h / S::lit(2.0) } else { h })
                    .collect()
            })
            .collect();
        let total: usize = nodes.iter().product();
        let mut weights = vec![S::one(); total];
        for (idx, wt) in weights.iter_mut().enumerate() {
            for axis in 0..dim {
                let i = (idx / strides[axis]) % nodes[axis];
                *wt *= axis_weights[axis][i];
            }
        }
        Ok(Self {
            lengths: lengths.to_vec(),
            cells: cells.to_vec(),
            spacing,
            strides,
            axis_weights,
            weights,
        })
    }

    /// `[0, length]` with `cells` cells.
    pub fn interval(length: S, cells: usize) -> Result<Self> {
        Self::new(&[length], &[cells])
    }

    /// The desk-scale default: `[0, 1]` with 128 nodes.
    pub fn default_1d() -> Self {
        Self::interval(S::one(), 127).expect("valid default grid")
    }

    pub fn dim(&self) -> usize {
        self.lengths.len()
    }

    pub fn lengths(&self) -> &[S] {
        &self.lengths
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    pub fn spacing(&self) -> &[S] {
        &self.spacing
    }

    /// Node count along `axis`.
    pub fn nodes(&self, axis: usize) -> usize {
        self.cells[axis] + 1
    }

    pub fn node_counts(&self) -> Vec<usize> {
        self.cells.iter().map(|n| n + 1).collect()
    }

    pub fn stride(&self, axis: usize) -> usize {
        self.strides[axis]
    }

    /// Total number of nodes.
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[S] {
        &self.weights
    }

    pub fn axis_weights(&self, axis: usize) -> &[S] {
        &self.axis_weights[axis]
    }

    /// `|Ω|`.
    pub fn measure(&self) -> S {
        self.lengths.iter().fold(S::one(), |acc, &l| acc * l)
    }

    /// Index of node `idx` along `axis`.
    #[inline]
    pub fn axis_index(&self, idx: usize, axis: usize) -> usize {
        (idx / self.strides[axis]) % (self.cells[axis] + 1)
    }

    /// Coordinates of node `idx`; unused axes are zero.
    pub fn coords(&self, idx: usize) -> [S; MAX_DIM] {
        let mut x = [S::zero(); MAX_DIM];
        for (axis, xa) in x.iter_mut().enumerate().take(self.dim()) {
            *xa = S::of(self.axis_index(idx, axis)) * self.spacing[axis];
        }
        x
    }

    pub fn check(&self, field: &[S]) -> Result<()> {
        if field.len() != self.len() {
            return Err(HrError::ShapeMismatch {
                expected: self.len(),
                found: field.len(),
            });
        }
        Ok(())
    }

    /// `Δf` with reflected ghost nodes (zero normal derivative).
    pub fn laplacian_neumann(&self, field: &[S]) -> Result<Vec<S>> {
        self.check(field)?;
        let mut out = vec![S::zero(); field.len()];
        self.laplacian_into(field, &mut out);
        Ok(out)
    }

    /// Unchecked `Δf` written into `out`.
    pub fn laplacian_into(&self, field: &[S], out: &mut [S]) {
        debug_assert_eq!(field.len(), self.len());
        debug_assert_eq!(out.len(), self.len());
        let two = S::lit(2.0);
        if self.dim() == 1 {
            let n = field.len();
            let inv_h2 = (self.spacing[0] * self.spacing[0]).recip();
            out[0] = two * (field[1] - field[0]) * inv_h2;
            out[n - 1] = two * (field[n - 2] - field[n - 1]) * inv_h2;
            for (o, w) in out[1..n - 1].iter_mut().zip(field.windows(3)) {
                *o = (w[0] - two * w[1] + w[2]) * inv_h2;
            }
            return;
        }
        out.iter_mut().for_each(|o| *o = S::zero());
        for axis in 0..self.dim() {
            let n = self.nodes(axis);
            let s = self.strides[axis];
            let inv_h2 = (self.spacing[axis] * self.spacing[axis]).recip();
            for (idx, o) in out.iter_mut().enumerate() {
                let i = (idx / s) % n;
                let left = if i == 0 { field[idx + s] } else { field[idx - s] };
                let right = if i == n - 1 { field[idx - s] } else { field[idx + s] };
                *o += (left - two * field[idx] + right) * inv_h2;
            }
        }
    }

    /// Quadrature inner product `<f, g>`.
    pub fn inner_l2(&self, f: &[S], g: &[S]) -> Result<S> {
        self.check(f)?;
        self.check(g)?;
        Ok(self.inner_unchecked(f, g))
    }

    #[inline]
    pub(crate) fn inner_unchecked(&self, f: &[S], g: &[S]) -> S {
        let mut acc = S::zero();
        for ((&w, &a), &b) in self.weights.iter().zip(f).zip(g) {
            acc += w * a * b;
        }
        acc
    }

    #[inline]
    pub(crate) fn norm_sq_unchecked(&self, f: &[S]) -> S {
        self.inner_unchecked(f, f)
    }

    pub fn norm_l2(&self, f: &[S]) -> Result<S> {
        Ok(self.inner_l2(f, f)?.sqrt())
    }

    /// `‖∇f‖²` from face-centred differences.
    pub fn norm_grad_sq(&self, f: &[S]) -> Result<S> {
        self.check(f)?;
        Ok(self.grad_sq_unchecked(f))
    }

    pub(crate) fn grad_sq_unchecked(&self, f: &[S]) -> S {
        let mut acc = S::zero();
        if self.dim() == 1 {
            let inv_h = self.spacing[0].recip();
            for pair in f.windows(2) {
                let d = pair[1] - pair[0];
                acc += d * d * inv_h;
            }
            return acc;
        }
        for axis in 0..self.dim() {
            let n = self.nodes(axis);
            let s = self.strides[axis];
            let inv_h = self.spacing[axis].recip();
            let aw = &self.axis_weights[axis];
            for idx in 0..f.len() {
                let i = (idx / s) % n;
                if i + 1 == n {
                    continue;
                }
                // transverse weight: node weight with this axis' factor removed
                let transverse = self.weights[idx] / aw[i];
                let d = f[idx + s] - f[idx];
                acc += transverse * d * d * inv_h;
            }
        }
        acc
    }

    pub fn norm_grad(&self, f: &[S]) -> Result<S> {
        Ok(self.norm_grad_sq(f)?.sqrt())
    }

    pub fn norm_h1(&self, f: &[S]) -> Result<S> {
        Ok((self.inner_l2(f, f)? + self.norm_grad_sq(f)?).sqrt())
    }

    /// `‖f‖⁴_{L⁴}`.
    pub fn norm_l4_pow4(&self, f: &[S]) -> Result<S> {
        self.check(f)?;
        Ok(self.l4_pow4_unchecked(f))
    }

    #[inline]
    pub(crate) fn l4_pow4_unchecked(&self, f: &[S]) -> S {
        let mut acc = S::zero();
        for (&w, &a) in self.weights.iter().zip(f) {
            let a2 = a * a;
            acc += w * a2 * a2;
        }
        acc
    }

    pub fn norm_l4(&self, f: &[S]) -> Result<S> {
        Ok(self.norm_l4_pow4(f)?.sqrt().sqrt())
    }

    /// Eigenvalues of the 1D ghost-point Laplacian along `axis`:
    /// `-(4/h²) sin²(kπ / 2n)` for `k = 0..=n`, eigenvector `cos(kπ j / n)`.
    pub fn neumann_eigenvalues(&self, axis: usize) -> Vec<S> {
        let n = self.cells[axis];
        let h = self.spacing[axis];
        let four_over_h2 = S::lit(4.0) / (h * h);
        (0..=n)
            .map(|k| {
                let s = (S::PI() * S::of(k) / (S::lit(2.0) * S::of(n))).sin();
                -four_over_h2 * s * s
            })
            .collect()
    }

    /// Discrete cosine mode `cos(kπ x₁ / L₁)` along the first axis.
    pub fn cosine_mode(&self, k: usize) -> Vec<S> {
        let n = self.cells[0];
        (0..self.len())
            .map(|idx| {
                let j = self.axis_index(idx, 0);
                (S::PI() * S::of(k) * S::of(j) / S::of(n)).cos()
            })
            .collect()
    }

    /// Coefficient of `f` on the normalised first-axis cosine mode `k`
    /// (the mode scaled to unit quadrature norm).
    pub fn cosine_coefficient(&self, f: &[S], k: usize) -> Result<S> {
        self.check(f)?;
        let mode = self.cosine_mode(k);
        let norm = self.norm_sq_unchecked(&mode).sqrt();
        Ok(self.inner_unchecked(f, &mode) / norm)
    }
}

/// The triple `g = (u, v, w)` sampled on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateField<S: Real = f64> {
    pub u: Vec<S>,
    pub v: Vec<S>,
    pub w: Vec<S>,
}

impl<S: Real> StateField<S> {
    pub fn zeros(grid: &Grid<S>) -> Self {
        Self::uniform(grid, [S::zero(); 3])
    }

    pub fn uniform(grid: &Grid<S>, g: [S; 3]) -> Self {
        let n = grid.len();
        Self {
            u: vec![g[0]; n],
            v: vec![g[1]; n],
            w: vec![g[2]; n],
        }
    }

    pub fn from_components(grid: &Grid<S>, u: Vec<S>, v: Vec<S>, w: Vec<S>) -> Result<Self> {
        grid.check(&u)?;
        grid.check(&v)?;
        grid.check(&w)?;
        Ok(Self { u, v, w })
    }

    /// Builds each node value from its coordinates.
    pub fn from_fn(grid: &Grid<S>, mut f: impl FnMut([S; MAX_DIM]) -> [S; 3]) -> Self {
        let n = grid.len();
        let mut out = Self {
            u: Vec::with_capacity(n),
            v: Vec::with_capacity(n),
            w: Vec::with_capacity(n),
        };
        for idx in 0..n {
            let g = f(grid.coords(idx));
            out.u.push(g[0]);
            out.v.push(g[1]);
            out.w.push(g[2]);
        }
        out
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn components(&self) -> [&[S]; 3] {
        [&self.u, &self.v, &self.w]
    }

    pub fn components_mut(&mut self) -> [&mut Vec<S>; 3] {
        [&mut self.u, &mut self.v, &mut self.w]
    }

    pub fn check(&self, grid: &Grid<S>) -> Result<()> {
        for c in self.components() {
            grid.check(c)?;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.components().iter().all(|c| c.iter().all(|x| x.is_finite()))
    }

    /// Node values at `idx`.
    pub fn at(&self, idx: usize) -> [S; 3] {
        [self.u[idx], self.v[idx], self.w[idx]]
    }

    /// Largest deviation of any component from its first node value.
    pub fn nonuniformity(&self) -> S {
        let mut worst = S::zero();
        for c in self.components() {
            let c0 = c[0];
            for &x in c {
                worst = worst.max((x - c0).abs());
            }
        }
        worst
    }

    pub fn sub(&self, other: &Self) -> Self {
        let f = |a: &[S], b: &[S]| a.iter().zip(b).map(|(&x, &y)| x - y).collect();
        Self {
            u: f(&self.u, &other.u),
            v: f(&self.v, &other.v),
            w: f(&self.w, &other.w),
        }
    }

    /// `self + alpha * other`.
    pub fn add_scaled(&self, alpha: S, other: &Self) -> Self {
        let f = |a: &[S], b: &[S]| a.iter().zip(b).map(|(&x, &y)| x + alpha * y).collect();
        Self {
            u: f(&self.u, &other.u),
            v: f(&self.v, &other.v),
            w: f(&self.w, &other.w),
        }
    }

    pub fn scaled(&self, alpha: S) -> Self {
        let f = |a: &[S]| a.iter().map(|&x| alpha * x).collect();
        Self {
            u: f(&self.u),
            v: f(&self.v),
            w: f(&self.w),
        }
    }

    /// `‖g‖² = ‖u‖² + ‖v‖² + ‖w‖²` in `H = L²(Ω)³`.
    pub fn norm_h_sq(&self, grid: &Grid<S>) -> S {
        self.components().iter().map(|c| grid.norm_sq_unchecked(c)).sum()
    }

    pub fn norm_h(&self, grid: &Grid<S>) -> S {
        self.norm_h_sq(grid).sqrt()
    }

    /// `‖∇g‖²` summed over the three components.
    pub fn norm_grad_sq(&self, grid: &Grid<S>) -> S {
        self.components().iter().map(|c| grid.grad_sq_unchecked(c)).sum()
    }

    /// `‖g‖²_E = ‖g‖² + ‖∇g‖²` in `E = H¹(Ω)³`.
    pub fn norm_e_sq(&self, grid: &Grid<S>) -> S {
        self.norm_h_sq(grid) + self.norm_grad_sq(grid)
    }

    pub fn norm_e(&self, grid: &Grid<S>) -> S {
        self.norm_e_sq(grid).sqrt()
    }
}
