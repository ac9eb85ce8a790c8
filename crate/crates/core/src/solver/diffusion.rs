//! Implicit solves `(I − c Δ) x = b` with the reflected Neumann Laplacian.

use crate::grid::Grid;
use crate::scalar::Real;

/// How the implicit diffusion system is solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum DiffusionMethod {
    /// Thomas algorithm per axis; in 2D/3D the axes are applied in sequence
    /// (locally one-dimensional splitting).
    #[default]
    TridiagonalDirect,
    /// Exact solve in the discrete cosine basis, in any dimension.
    CosineSpectral,
}

impl DiffusionMethod {
    pub fn name(self) -> &'static str {
        match self {
            DiffusionMethod::TridiagonalDirect => "tridiagonal-direct",
            DiffusionMethod::CosineSpectral => "cosine-spectral",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "tridiagonal-direct" => Some(DiffusionMethod::TridiagonalDirect),
            "cosine-spectral" => Some(DiffusionMethod::CosineSpectral),
            _ => None,
        }
    }
}

/// Prefactored Thomas sweep for one axis.
#[derive(Debug, Clone)]
struct ThomasFactor<S: Real> {
    lower: Vec<S>,
    /// Modified super-diagonal `c'ᵢ`.
    upper: Vec<S>,
    /// Reciprocal pivots.
    inv_pivot: Vec<S>,
}

impl<S: Real> ThomasFactor<S> {
    fn new(n: usize, coef: S, h: S) -> Self {
        let k = coef / (h * h);
        let two = S::lit(2.0);
        let diag = S::one() + two * k;
        let mut lower = vec![-k; n];
        let mut sup = vec![-k; n];
        lower[0] = S::zero();
        sup[0] = -two * k;
        lower[n - 1] = -two * k;
        sup[n - 1] = S::zero();
        let mut upper = vec![S::zero(); n];
        let mut inv_pivot = vec![S::zero(); n];
        let mut prev = S::zero();
        for i in 0..n {
            let pivot = diag - lower[i] * prev;
            inv_pivot[i] = pivot.recip();
            upper[i] = sup[i] * inv_pivot[i];
            prev = upper[i];
        }
        Self {
            lower,
            upper,
            inv_pivot,
        }
    }

    #[inline]
    fn solve_strided(&self, x: &mut [S], start: usize, stride: usize) {
        let n = self.upper.len();
        let mut prev = S::zero();
        for i in 0..n {
            let idx = start + i * stride;
            let y = (x[idx] - self.lower[i] * prev) * self.inv_pivot[i];
            x[idx] = y;
            prev = y;
        }
        for i in (0..n - 1).rev() {
            let idx = start + i * stride;
            x[idx] -= self.upper[i] * x[idx + stride];
        }
    }

    /// Three independent systems at once; interleaving hides the latency of
    /// the recurrences.
    #[inline]
    fn solve_three(f: [&Self; 3], x: [&mut [S]; 3]) {
        let [a, b, c] = x;
        let n = a.len();
        let (mut pa, mut pb, mut pc) = (S::zero(), S::zero(), S::zero());
        for i in 0..n {
            pa = (a[i] - f[0].lower[i] * pa) * f[0].inv_pivot[i];
            pb = (b[i] - f[1].lower[i] * pb) * f[1].inv_pivot[i];
            pc = (c[i] - f[2].lower[i] * pc) * f[2].inv_pivot[i];
            a[i] = pa;
            b[i] = pb;
            c[i] = pc;
        }
        for i in (0..n - 1).rev() {
            pa = a[i] - f[0].upper[i] * pa;
            pb = b[i] - f[1].upper[i] * pb;
            pc = c[i] - f[2].upper[i] * pc;
            a[i] = pa;
            b[i] = pb;
            c[i] = pc;
        }
    }

    #[inline]
    fn solve_contiguous(&self, x: &mut [S]) {
        let n = x.len();
        let mut prev = S::zero();
        for ((xi, &l), &inv) in x.iter_mut().zip(&self.lower).zip(&self.inv_pivot) {
            *xi = (*xi - l * prev) * inv;
            prev = *xi;
        }
        for i in (0..n - 1).rev() {
            let next = x[i + 1];
            x[i] -= self.upper[i] * next;
        }
    }
}

/// Cosine transform pair for one axis of `n + 1` nodes.
#[derive(Debug, Clone)]
struct CosineBasis<S: Real> {
    n: usize,
    /// `forward[k][j] = wⱼ cos(πjk/n) / Nₖ`.
    forward: Vec<S>,
    /// `inverse[j][k] = cos(πjk/n)`.
    inverse: Vec<S>,
}

impl<S: Real> CosineBasis<S> {
    fn new(cells: usize) -> Self {
        let n = cells + 1;
        let mut forward = vec![S::zero(); n * n];
        let mut inverse = vec![S::zero(); n * n];
        for k in 0..n {
            let norm = if k == 0 || k == cells {
                S::of(cells)
            } else {
                S::of(cells) / S::lit(2.0)
            };
            for j in 0..n {
                // exact argument reduction keeps the table symmetric
                let m = (j * k) % (2 * cells);
                let c = (S::PI() * S::of(m) / S::of(cells)).cos();
                let w = if j == 0 || j == cells { S::lit(0.5) } else { S::one() };
                forward[k * n + j] = w * c / norm;
                inverse[j * n + k] = c;
            }
        }
        Self { n, forward, inverse }
    }

    fn apply(&self, matrix: &[S], x: &mut [S], start: usize, stride: usize, line: &mut Vec<S>) {
        line.clear();
        line.extend((0..self.n).map(|i| x[start + i * stride]));
        for r in 0..self.n {
            let row = &matrix[r * self.n..(r + 1) * self.n];
            let mut acc = S::zero();
            for (a, b) in row.iter().zip(line.iter()) {
                acc += *a * *b;
            }
            x[start + r * stride] = acc;
        }
    }
}

#[derive(Debug, Clone)]
enum Kernel<S: Real> {
    Tridiagonal {
        /// `factors[component][axis]`
        factors: Vec<Vec<ThomasFactor<S>>>,
    },
    Spectral {
        bases: Vec<CosineBasis<S>>,
        /// `1 / (1 − c Σ λ)` per node, per component.
        divisors: Vec<Vec<S>>,
    },
}

/// The three operators `(I − cᵢ Δ)`, `cᵢ = θ dt dᵢ`, factored once.
#[derive(Debug, Clone)]
pub struct ImplicitDiffusion<S: Real> {
    coefficients: [S; 3],
    /// First node of every grid line, per axis.
    line_starts: Vec<Vec<usize>>,
    strides: Vec<usize>,
    kernel: Kernel<S>,
}

impl<S: Real> ImplicitDiffusion<S> {
    pub fn new(grid: &Grid<S>, coefficients: [S; 3], method: DiffusionMethod) -> Self {
        let dim = grid.dim();
        let line_starts: Vec<Vec<usize>> = (0..dim)
            .map(|axis| (0..grid.len()).filter(|&idx| grid.axis_index(idx, axis) == 0).collect())
            .collect();
        let strides = (0..dim).map(|a| grid.stride(a)).collect();
        let kernel = match method {
            DiffusionMethod::TridiagonalDirect => Kernel::Tridiagonal {
                factors: coefficients
                    .iter()
                    .map(|&c| {
                        (0..dim)
                            .map(|a| ThomasFactor::new(grid.nodes(a), c, grid.spacing()[a]))
                            .collect()
                    })
                    .collect(),
            },
            DiffusionMethod::CosineSpectral => {
                let eig: Vec<Vec<S>> = (0..dim).map(|a| grid.neumann_eigenvalues(a)).collect();
                let divisors = coefficients
                    .iter()
                    .map(|&c| {
                        (0..grid.len())
                            .map(|idx| {
                                let mut lam = S::zero();
                                for (a, e) in eig.iter().enumerate() {
                                    lam += e[grid.axis_index(idx, a)];
                                }
                                (S::one() - c * lam).recip()
                            })
                            .collect()
                    })
                    .collect();
                Kernel::Spectral {
                    bases: grid.cells().iter().map(|&n| CosineBasis::new(n)).collect(),
                    divisors,
                }
            }
        };
        Self {
            coefficients,
            line_starts,
            strides,
            kernel,
        }
    }

    pub fn coefficients(&self) -> [S; 3] {
        self.coefficients
    }

    /// Overwrites `x` with the solution of `(I − c_comp Δ) x = x`.
    pub fn solve(&self, component: usize, x: &mut [S], scratch: &mut Vec<S>) {
        // constants are in the kernel of Δ: solving for x − x₀ keeps uniform
        // data exactly uniform
        let shift = x[0];
        x.iter_mut().for_each(|v| *v -= shift);
        self.solve_unshifted(component, x, scratch);
        x.iter_mut().for_each(|v| *v += shift);
    }

    /// [`solve`](Self::solve) for all three components.
    pub fn solve_all(&self, x: [&mut [S]; 3], scratch: &mut Vec<S>) {
        if let Kernel::Tridiagonal { factors } = &self.kernel {
            if factors[0].len() == 1 {
                let shifts = [x[0][0], x[1][0], x[2][0]];
                let [a, b, c] = x;
                for (comp, s) in [&mut *a, &mut *b, &mut *c].into_iter().zip(shifts) {
                    comp.iter_mut().for_each(|v| *v -= s);
                }
                ThomasFactor::solve_three(
                    [&factors[0][0], &factors[1][0], &factors[2][0]],
                    [&mut *a, &mut *b, &mut *c],
                );
                for (comp, s) in [a, b, c].into_iter().zip(shifts) {
                    comp.iter_mut().for_each(|v| *v += s);
                }
                return;
            }
        }
        for (comp, xc) in x.into_iter().enumerate() {
            self.solve(comp, xc, scratch);
        }
    }

    fn solve_unshifted(&self, component: usize, x: &mut [S], scratch: &mut Vec<S>) {
        match &self.kernel {
            Kernel::Tridiagonal { factors } => {
                let f = &factors[component];
                if f.len() == 1 {
                    f[0].solve_contiguous(x);
                    return;
                }
                for (axis, fa) in f.iter().enumerate() {
                    let stride = self.strides[axis];
                    for &start in &self.line_starts[axis] {
                        fa.solve_strided(x, start, stride);
                    }
                }
            }
            Kernel::Spectral { bases, divisors } => {
                for (axis, basis) in bases.iter().enumerate() {
                    let stride = self.strides[axis];
                    for &start in &self.line_starts[axis] {
                        basis.apply(&basis.forward, x, start, stride, scratch);
                    }
                }
                for (xi, d) in x.iter_mut().zip(&divisors[component]) {
                    *xi *= *d;
                }
                for (axis, basis) in bases.iter().enumerate() {
                    let stride = self.strides[axis];
                    for &start in &self.line_starts[axis] {
                        basis.apply(&basis.inverse, x, start, stride, scratch);
                    }
                }
            }
        }
    }
}
