//! Explicit constants of the absorbing-set, smoothing and Hölder estimates,
//! and monitors that check the estimate chain along computed runs.
//!
//! Several constants (from `K₂` on) contain `exp(ρ·…·N₁)` and are far outside
//! floating-point range for realistic parameters. They are carried as natural
//! logarithms (`ln_*` fields) and compared in the log domain.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{HrError, Result};
use crate::grid::{Grid, StateField};
use crate::model::HrParameters;
use crate::sampling;
use crate::scalar::{ln0, log_add_exp, log_sum_exp, Real};
use crate::solver::{PairTrajectory, Process, Trajectory};

/// Relative monitor tolerance.
pub const EPS_MON: f64 = 1e-3;
/// Absolute monitor tolerance.
pub const EPS_ABS: f64 = 1e-9;
/// Inflation applied to the sampled embedding ratio.
pub const RHO_SAFETY: f64 = 1.5;
/// Lower bound used for the self-entry time of `M*_E`.
pub const DEFAULT_T_MSTAR_FLOOR: f64 = 5.0;

/// Stand-ins for the abstract constants, measured on the discrete operators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasuredConstants<S: Real = f64> {
    /// Embedding ratio `ρ̂` with `‖u‖⁴_{L⁴} ≤ ρ̂ (‖u‖² + ‖∇u‖²)²`.
    pub rho_hat: S,
    /// `‖e^{Ah}g − g‖ ≤ Ĉ₀ h ‖g‖`.
    pub c0_hat: S,
    /// `‖e^{At}‖_{L(H,E)} ≤ Ĉ₁ t^{-1/2}`.
    pub c1_hat: S,
    /// `max ‖f(g)‖` over sampled states, if measured.
    pub d_gamma: Option<S>,
    /// Directly measured smoothing constant, if measured.
    pub kappa_hat: Option<S>,
}

impl<S: Real> MeasuredConstants<S> {
    /// Measures `ρ̂`, `Ĉ₀` and `Ĉ₁` on `grid`.
    pub fn measure(grid: &Grid<S>, params: &HrParameters<S>, t_mstar: S, seed: u64) -> Result<Self> {
        let rho_hat = measure_rho(grid, 256, seed)?;
        let (c0_hat, c1_hat) = measure_semigroup_constants(grid, params, t_mstar);
        Ok(Self {
            rho_hat,
            c0_hat,
            c1_hat,
            d_gamma: None,
            kappa_hat: None,
        })
    }
}

/// Every explicit constant, evaluated from the parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoryConstants<S: Real = f64> {
    pub params: HrParameters<S>,
    pub omega_measure: S,
    /// `‖p‖²_{L²_b}`.
    pub p_bound: S,
    pub t_mstar: S,
    pub c1: S,
    pub c2: S,
    pub delta: S,
    pub k1: S,
    pub n1: S,
    pub n2: S,
    /// `ln` of the bound on `‖∇g‖²` after absorption.
    pub ln_h1_bound: S,
    pub ln_k2: S,
    pub cstar: S,
    pub ln_g1: S,
    pub g2: S,
    pub g3: S,
    pub ln_gp: S,
    /// `ln κ` from the closed form with `Ĉ₁`.
    pub ln_kappa: S,
    /// `ln λ(M*_E)` with `Ĉ₀` and `D_Γ`.
    pub ln_lambda: S,
    pub measured: MeasuredConstants<S>,
}

/// Hölder exponent: `1/2` for `|t| < 1`, else `1`.
pub fn gamma<S: Real>(t: S) -> S {
    if t.abs() < S::one() {
        S::lit(0.5)
    } else {
        S::one()
    }
}

impl<S: Real> TheoryConstants<S> {
    /// `max{1, c₁} / min{1, c₁}`.
    pub fn c1_ratio(&self) -> S {
        self.c1.max(S::one()) / self.c1.min(S::one())
    }

    /// `(c₁²/128 + 2c₂)|Ω|`, the constant source term of the energy inequality.
    pub fn source(&self) -> S {
        (self.c1 * self.c1 / S::lit(128.0) + S::lit(2.0) * self.c2) * self.omega_measure
    }

    /// `4(1 + 1/r)`.
    pub fn forcing_weight(&self) -> S {
        S::lit(4.0) * (S::one() + self.params.r.recip())
    }

    /// `c₁‖u‖² + ‖v‖² + ‖w‖²`.
    pub fn weighted_energy(&self, u_sq: S, v_sq: S, w_sq: S) -> S {
        self.c1 * u_sq + v_sq + w_sq
    }

    /// Values as `f64`, for reports. Entries held in log form come back as
    /// `(name, value or None if it overflows, ln value, measured?)`.
    pub fn entries(&self) -> Vec<ConstantEntry> {
        let plain = |name: &'static str, v: S, measured: bool| ConstantEntry {
            name,
            value: finite(v.to64()),
            ln_value: ln0(v).to64(),
            measured,
        };
        let logged = |name: &'static str, ln: S, measured: bool| ConstantEntry {
            name,
            value: finite(ln.to64().exp()),
            ln_value: ln.to64(),
            measured,
        };
        let m = &self.measured;
        let mut out = vec![
            plain("c1", self.c1, false),
            plain("c2", self.c2, false),
            plain("delta", self.delta, false),
            plain("K1", self.k1, false),
            plain("N1", self.n1, false),
            plain("N2", self.n2, false),
            logged("H1_bound", self.ln_h1_bound, false),
            logged("K2", self.ln_k2, false),
            plain("Cstar", self.cstar, false),
            logged("G1", self.ln_g1, false),
            plain("G2", self.g2, false),
            plain("G3", self.g3, false),
            logged("Gp", self.ln_gp, false),
            logged("kappa", self.ln_kappa, false),
            logged("lambda", self.ln_lambda, false),
            plain("gamma_short", S::lit(0.5), false),
            plain("gamma_long", S::one(), false),
            plain("rho_hat", m.rho_hat, true),
            plain("C0_hat", m.c0_hat, true),
            plain("C1_hat", m.c1_hat, true),
            plain("T_Mstar", self.t_mstar, true),
        ];
        if let Some(d) = m.d_gamma {
            out.push(plain("D_Gamma", d, true));
        }
        if let Some(k) = m.kappa_hat {
            out.push(plain("kappa_hat", k, true));
        }
        out
    }
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

/// One row of a constants report.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantEntry {
    pub name: &'static str,
    pub value: Option<f64>,
    pub ln_value: f64,
    pub measured: bool,
}

/// Evaluates every constant. `p_bound` is `‖p‖²_{L²_b}`.
pub fn compute_constants<S: Real>(
    params: &HrParameters<S>,
    omega_measure: S,
    p_bound: S,
    t_mstar: S,
    measured: &MeasuredConstants<S>,
) -> Result<TheoryConstants<S>> {
    params.validate()?;
    let positive = |name: &'static str, v: S| {
        if v > S::zero() && v.is_finite() {
            Ok(())
        } else {
            Err(HrError::InvalidParameter {
                name,
                value: v.to64(),
                reason: "must be positive and finite",
            })
        }
    };
    positive("omega_measure", omega_measure)?;
    positive("T_Mstar", t_mstar)?;
    positive("rho_hat", measured.rho_hat)?;
    positive("C0_hat", measured.c0_hat)?;
    positive("C1_hat", measured.c1_hat)?;
    if !(p_bound >= S::zero()) || !p_bound.is_finite() {
        return Err(HrError::InvalidParameter {
            name: "p_bound",
            value: p_bound.to64(),
            reason: "must be nonnegative and finite",
        });
    }
    let p = params;
    let lit = S::lit;
    let (a, b, alpha, beta, q, r, c, j) = (p.a, p.b, p.alpha, p.beta, p.q, p.r, p.c, p.j);
    let (d1, d2, d3) = (p.d1, p.d2, p.d3);
    let d = p.d_min();
    let rho = measured.rho_hat;
    let om = omega_measure;

    let c1 = (beta * beta + lit(3.0)) / b;
    let bracket = c1 * c1 * (lit(3.0) + r.recip()) + q * q / r;
    let c2 = (c1 * a).powi(4) + j * j + bracket * bracket + lit(2.0) * alpha * alpha + q * q * c * c / r;
    let delta = lit(0.25) * S::one().min(r);
    let source = (c1 * c1 / lit(128.0) + lit(2.0) * c2) * om;
    let fw = lit(4.0) * (S::one() + r.recip());
    let k1 = S::one() + source / delta + fw * p_bound / (S::one() - (-delta).exp());
    let cmax = S::one().max(c1);
    let cmin = S::one().min(c1);
    let n1 = (cmax * k1 + fw * p_bound + source) / (lit(2.0) * d * cmin);
    let four = lit(4.0);
    let n2 = (four / d1).max(four * q * q * c * c / d3) * k1
        + (lit(8.0) * a * a / d1 + four * beta * beta / d2) * rho * k1 * k1
        + (lit(8.0) * j * j / d1 + four * alpha * alpha / d2 + four * q * q * c * c / d3) * om;
    let pmax = (lit(8.0) / d1).max(four / d2).max(four / d3);
    let ln_h1_bound = (n1 + n2 + pmax * p_bound).ln() + rho * (lit(8.0) * a * a / d1 + four * beta * beta / d2) * n1;
    let ln_k1 = k1.ln();
    let ln_k2 = log_add_exp(ln_k1, ln_h1_bound);
    let cstar = four * (S::one() + (a * a + beta) / b) + lit(2.0) * (q + r);
    let ln_g1 = log_add_exp((cmax / cmin).ln() + ln_k2, ln_k1);
    let g2 = four.max(lit(2.0) * q * q) / d;
    let g3 = (lit(8.0) * j * j + four * alpha * alpha + four * q * q * c * c) / d;
    let t = t_mstar;
    let ln_inner = log_sum_exp(&[
        ln_g1,
        ln_k2,
        t.ln() + log_add_exp(ln_g1 + g2.ln(), ln0(g3 * om)),
        ln0(lit(8.0) / d * (t + S::one()) * p_bound),
    ]);
    let ln_gp = log_sum_exp(&[
        ln_g1 + (lit(12.0) * a * a + lit(8.0) * beta * beta).ln(),
        (lit(2.0) * q).max(lit(5.0)).max(lit(3.0) + lit(2.0) * r).ln(),
        (lit(60.0) * b * b * rho).ln() + lit(2.0) * ln_inner,
    ]);
    let half = lit(0.5);
    let ln_kappa =
        measured.c1_hat.ln() + log_add_exp(-half * t.ln(), four.ln() + half * (ln_g1 + t.ln()) + cstar * t + ln_gp);
    let d_gamma = measured.d_gamma.unwrap_or(S::zero());
    let ln_lambda = log_add_exp(
        measured.c0_hat.ln() + ln_k2,
        lit(2.0).ln() + log_sum_exp(&[ln0(d_gamma), ln_k2, half * ln0(p_bound)]),
    );
    Ok(TheoryConstants {
        params: *params,
        omega_measure,
        p_bound,
        t_mstar,
        c1,
        c2,
        delta,
        k1,
        n1,
        n2,
        ln_h1_bound,
        ln_k2,
        cstar,
        ln_g1,
        g2,
        g3,
        ln_gp,
        ln_kappa,
        ln_lambda,
        measured: *measured,
    })
}

/// `T_B = (1/δ) log⁺((max{1,c₁}/min{1,c₁}) ‖B‖²)`.
pub fn compute_tb<S: Real>(constants: &TheoryConstants<S>, b_norm_sq: S) -> S {
    let arg = constants.c1_ratio() * b_norm_sq;
    if arg <= S::one() {
        S::zero()
    } else {
        arg.ln() / constants.delta
    }
}

/// `‖u‖⁴_{L⁴} / (‖u‖² + ‖∇u‖²)²`, or zero for the zero field.
pub fn rho_ratio<S: Real>(grid: &Grid<S>, f: &[S]) -> Result<S> {
    let l4 = grid.norm_l4_pow4(f)?;
    let h1 = grid.norm_l2(f)?.powi(2) + grid.norm_grad_sq(f)?;
    Ok(if h1 > S::zero() { l4 / (h1 * h1) } else { S::zero() })
}

/// `ρ̂`: the largest sampled embedding ratio times [`RHO_SAFETY`].
///
/// Samples are the constant field, low cosine modes, bumps of several
/// widths and `sample_count` random smooth series.
pub fn measure_rho<S: Real>(grid: &Grid<S>, sample_count: usize, seed: u64) -> Result<S> {
    if sample_count == 0 {
        return Err(HrError::InvalidInput("measure_rho needs at least one sample".into()));
    }
    let mut best = rho_ratio(grid, &vec![S::one(); grid.len()])?;
    for k in 1..=8 {
        best = best.max(rho_ratio(grid, &grid.cosine_mode(k))?);
    }
    let mut rng = sampling::rng(seed);
    for s in 0..sample_count {
        let f = if s % 2 == 0 {
            sampling::smooth_scalar(grid, &mut rng)
        } else {
            let width = S::lit(rng.gen_range(0.02..0.5));
            let centre: Vec<S> = grid
                .lengths()
                .iter()
                .map(|&l| l * S::lit(rng.gen_range(0.0..1.0)))
                .collect();
            (0..grid.len())
                .map(|idx| {
                    let x = grid.coords(idx);
                    let mut r2 = S::zero();
                    for (a, &c) in centre.iter().enumerate() {
                        let z = (x[a] - c) / (width * grid.lengths()[a]);
                        r2 += z * z;
                    }
                    (-r2).exp()
                })
                .collect()
        };
        best = best.max(rho_ratio(grid, &f)?);
    }
    Ok(best * S::lit(RHO_SAFETY))
}

/// `(Ĉ₀, Ĉ₁)` from exact eigenpairs of the discrete Neumann operator:
/// `Ĉ₀ = max |e^{dλh} − 1| / h` and `Ĉ₁ = max √t e^{dλt} √(1 + |λ|)`, over
/// the diffusivities, the eigenvalues, and `h, t` on a log grid in
/// `[10⁻⁴, t_max]`.
pub fn measure_semigroup_constants<S: Real>(grid: &Grid<S>, params: &HrParameters<S>, t_max: S) -> (S, S) {
    let mut lambdas: Vec<S> = Vec::new();
    let mut corner = S::zero();
    for axis in 0..grid.dim() {
        let e = grid.neumann_eigenvalues(axis);
        corner += *e.last().expect("axis has nodes");
        lambdas.extend(e);
    }
    lambdas.push(corner);
    let t_lo = S::lit(1e-4);
    let t_hi = t_max.max(t_lo);
    let points = 97;
    let times: Vec<S> = (0..points)
        .map(|i| {
            let s = S::of(i) / S::of(points - 1);
            (t_lo.ln() + s * (t_hi.ln() - t_lo.ln())).exp()
        })
        .collect();
    let mut c0 = S::zero();
    let mut c1 = S::zero();
    for &d in &params.diffusivities() {
        for &lam in &lambdas {
            for &t in &times {
                let decay = (d * lam * t).exp();
                c0 = c0.max((decay - S::one()).abs() / t);
                c1 = c1.max(t.sqrt() * decay * (S::one() + lam.abs()).sqrt());
            }
        }
    }
    (c0, c1)
}

/// One step where a monitored inequality failed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Violation<S: Real = f64> {
    pub step: u64,
    pub t: S,
    pub lhs: S,
    pub rhs: S,
    /// `rhs (1 + ε_mon) + ε_abs − lhs`; negative for a violation.
    pub slack: S,
}

/// Outcome of a monitor.
#[derive(Debug, Clone, PartialEq)]
pub struct ViolationReport<S: Real = f64> {
    pub monitor: &'static str,
    pub checked: usize,
    pub violations: Vec<Violation<S>>,
    /// Smallest slack seen, relative to the right-hand side.
    pub min_relative_slack: Option<S>,
}

impl<S: Real> ViolationReport<S> {
    fn new(monitor: &'static str) -> Self {
        Self {
            monitor,
            checked: 0,
            violations: Vec::new(),
            min_relative_slack: None,
        }
    }

    fn check(&mut self, step: u64, t: S, lhs: S, rhs: S) {
        self.checked += 1;
        let slack = rhs * (S::one() + S::lit(EPS_MON)) + S::lit(EPS_ABS) - lhs;
        let rel = if rhs.abs() > S::zero() {
            slack / rhs.abs()
        } else {
            slack
        };
        self.min_relative_slack = Some(match self.min_relative_slack {
            Some(m) => m.min(rel),
            None => rel,
        });
        if !(slack >= S::zero()) {
            self.violations.push(Violation {
                step,
                t,
                lhs,
                rhs,
                slack,
            });
        }
    }

    /// Checks `ln lhs ≤ ln rhs` for bounds held in log form.
    fn check_ln(&mut self, step: u64, t: S, lhs: S, ln_rhs: S) {
        self.checked += 1;
        let ln_lhs = ln0(lhs);
        let ln_tol = (S::one() + S::lit(EPS_MON)).ln();
        let rel = ln_rhs + ln_tol - ln_lhs;
        if !rel.is_nan() {
            self.min_relative_slack = Some(match self.min_relative_slack {
                Some(m) => m.min(rel),
                None => rel,
            });
        }
        if !(ln_lhs <= ln_rhs + ln_tol || lhs <= S::lit(EPS_ABS)) {
            let rhs = ln_rhs.exp();
            self.violations.push(Violation {
                step,
                t,
                lhs,
                rhs,
                slack: rhs - lhs,
            });
        }
    }

    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Where [`monitor_energy_at`] evaluates the dissipation terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DissipationPoint {
    /// Interval start. Under-resolved modes then show an `O((dλΔt)²)` excess
    /// that implicit diffusion does not have.
    Start,
    /// Interval end, where the implicit diffusion solve places them.
    #[default]
    End,
}

/// Energy inequality, discretised with a forward difference over each
/// sample interval:
///
/// ```text
/// ΔE/Δt + 2d(c₁‖∇u‖² + ‖∇v‖² + ‖∇w‖²) + ¼(c₁‖u‖² + ‖v‖² + r‖w‖²)
///     ≤ 4(1 + 1/r)‖p(t)‖² + (c₁²/128 + 2c₂)|Ω|
/// ```
pub fn monitor_energy<S: Real>(traj: &Trajectory<S>, c: &TheoryConstants<S>) -> ViolationReport<S> {
    monitor_energy_at(traj, c, DissipationPoint::default())
}

pub fn monitor_energy_at<S: Real>(
    traj: &Trajectory<S>,
    c: &TheoryConstants<S>,
    point: DissipationPoint,
) -> ViolationReport<S> {
    let mut rep = ViolationReport::new("energy");
    let d = c.params.d_min();
    let two = S::lit(2.0);
    let quarter = S::lit(0.25);
    for k in 0..traj.samples.len().saturating_sub(1) {
        let (s0, s1) = (&traj.samples[k], &traj.samples[k + 1]);
        let dt = traj.times[k + 1] - traj.times[k];
        let e0 = c.weighted_energy(s0.u_sq, s0.v_sq, s0.w_sq);
        let e1 = c.weighted_energy(s1.u_sq, s1.v_sq, s1.w_sq);
        let s = match point {
            DissipationPoint::Start => s0,
            DissipationPoint::End => s1,
        };
        let lhs = (e1 - e0) / dt
            + two * d * (c.c1 * s.grad_u_sq + s.grad_v_sq + s.grad_w_sq)
            + quarter * (c.c1 * s.u_sq + s.v_sq + c.params.r * s.w_sq);
        let rhs = c.forcing_weight() * s0.p_sq.max(s1.p_sq) + c.source();
        rep.check(traj.steps[k], traj.times[k], lhs, rhs);
    }
    rep
}

/// Gronwall form of the energy inequality at every sample:
///
/// ```text
/// E(t) ≤ e^{−δ(t−τ)} E(τ) + 4(1 + 1/r) ∫_τ^t e^{−δ(t−s)} ‖p(s)‖² ds + (1/δ)(c₁²/128 + 2c₂)|Ω|
/// ```
///
/// with the integral accumulated by the trapezoid rule on the samples.
pub fn monitor_gronwall<S: Real>(traj: &Trajectory<S>, c: &TheoryConstants<S>) -> ViolationReport<S> {
    let mut rep = ViolationReport::new("gronwall");
    let Some(first) = traj.samples.first() else {
        return rep;
    };
    let e0 = c.weighted_energy(first.u_sq, first.v_sq, first.w_sq);
    let tail = c.source() / c.delta;
    let half = S::lit(0.5);
    let mut integral = S::zero();
    for k in 0..traj.samples.len() {
        if k > 0 {
            let dt = traj.times[k] - traj.times[k - 1];
            let decay = (-c.delta * dt).exp();
            integral = decay * integral + half * dt * (decay * traj.samples[k - 1].p_sq + traj.samples[k].p_sq);
        }
        let s = &traj.samples[k];
        let lhs = c.weighted_energy(s.u_sq, s.v_sq, s.w_sq);
        let elapsed = traj.times[k] - traj.tau;
        let rhs = (-c.delta * elapsed).exp() * e0 + c.forcing_weight() * integral + tail;
        rep.check(traj.steps[k], traj.times[k], lhs, rhs);
    }
    rep
}

/// Least-squares slope of `ln y` against `x`, with the RMS residual.
pub fn log_slope<S: Real>(x: &[S], y: &[S]) -> Option<(S, S)> {
    let pts: Vec<(S, S)> = x
        .iter()
        .zip(y)
        .filter(|(_, &v)| v > S::zero() && v.is_finite())
        .map(|(&a, &b)| (a, b.ln()))
        .collect();
    linear_fit(&pts)
}

/// Ordinary least squares `y ≈ a + s x`; returns `(s, rms residual)`.
pub fn linear_fit<S: Real>(pts: &[(S, S)]) -> Option<(S, S)> {
    if pts.len() < 2 {
        return None;
    }
    let n = S::of(pts.len());
    let mx = pts.iter().map(|p| p.0).sum::<S>() / n;
    let my = pts.iter().map(|p| p.1).sum::<S>() / n;
    let sxx: S = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    if !(sxx > S::zero()) {
        return None;
    }
    let sxy: S = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let res: S = pts
        .iter()
        .map(|p| {
            let e = p.1 - (my + slope * (p.0 - mx));
            e * e
        })
        .sum();
    Some((slope, (res / n).sqrt()))
}

/// Observed exponential decay rate of the excess weighted energy
/// `E(t) − E_∞`. `E_∞` is `floor` when given, else the largest weighted
/// energy over the last tenth of the run. Only samples with an excess above
/// `10 E_∞` enter the fit.
pub fn excess_energy_decay_rate<S: Real>(traj: &Trajectory<S>, c: &TheoryConstants<S>, floor: Option<S>) -> Result<S> {
    let energy: Vec<S> = traj
        .samples
        .iter()
        .map(|s| c.weighted_energy(s.u_sq, s.v_sq, s.w_sq))
        .collect();
    let n = energy.len();
    let floor = floor.unwrap_or_else(|| {
        let tail_start = n - (n / 10).max(1);
        energy[tail_start..].iter().fold(S::zero(), |m, &e| m.max(e))
    });
    let pts: Vec<(S, S)> = energy
        .iter()
        .zip(&traj.times)
        .filter(|(&e, _)| e - floor > S::lit(10.0) * floor.max(S::lit(EPS_ABS)))
        .map(|(&e, &t)| (t, (e - floor).ln()))
        .collect();
    if pts.len() < 4 {
        return Err(HrError::InsufficientData(format!(
            "only {} samples with significant excess energy",
            pts.len()
        )));
    }
    let (slope, _) = linear_fit(&pts).ok_or_else(|| HrError::InsufficientData("degenerate fit".into()))?;
    Ok(-slope)
}

/// Largest weighted energy along the run from the zero field over
/// `[tau, tau + horizon]`: a floor for [`excess_energy_decay_rate`].
pub fn reference_energy_level<S: Real>(process: &Process<S>, c: &TheoryConstants<S>, tau: S, horizon: S) -> Result<S> {
    let tr = process.evolve(&StateField::zeros(process.grid()), tau, tau + horizon)?;
    Ok(tr
        .samples
        .iter()
        .map(|s| c.weighted_energy(s.u_sq, s.v_sq, s.w_sq))
        .fold(S::zero(), |m, e| m.max(e)))
}

/// Entry of one ensemble member into `M*_H = {‖g‖² ≤ K₁}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AbsorbingEntry<S: Real = f64> {
    pub b_norm_sq: S,
    pub t_b: S,
    /// Elapsed time from `τ` to the first sample inside.
    pub entry_time: Option<S>,
    /// Left the ball again after entering.
    pub exited: bool,
    /// Elapsed time covered by the run.
    pub horizon: S,
}

impl<S: Real> AbsorbingEntry<S> {
    /// Entered by `T_B` and stayed; a run that never entered only counts
    /// against the member if it reached `T_B`.
    pub fn violation(&self) -> bool {
        match self.entry_time {
            Some(t) => self.exited || t > self.t_b,
            None => self.horizon >= self.t_b,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AbsorbingReport<S: Real = f64> {
    pub members: Vec<AbsorbingEntry<S>>,
}

impl<S: Real> AbsorbingReport<S> {
    pub fn passed(&self) -> bool {
        self.members.iter().all(|m| !m.violation() && m.entry_time.is_some())
    }

    pub fn worst_entry(&self) -> Option<S> {
        self.members
            .iter()
            .filter_map(|m| m.entry_time)
            .fold(None, |acc, t| Some(acc.map_or(t, |a: S| a.max(t))))
    }
}

/// Records entry into `M*_H` for each `(‖B‖², run)`.
pub fn monitor_absorbing<S: Real>(runs: &[(S, &Trajectory<S>)], c: &TheoryConstants<S>) -> AbsorbingReport<S> {
    let members = runs
        .iter()
        .map(|&(b_norm_sq, traj)| {
            let mut entry = None;
            let mut exited = false;
            for (k, s) in traj.samples.iter().enumerate() {
                let inside = s.h_sq() <= c.k1;
                match (entry, inside) {
                    (None, true) => entry = Some(traj.times[k] - traj.tau),
                    (Some(_), false) => exited = true,
                    _ => {}
                }
            }
            AbsorbingEntry {
                b_norm_sq,
                t_b: compute_tb(c, b_norm_sq),
                entry_time: entry,
                exited,
                horizon: traj.t_end() - traj.tau,
            }
        })
        .collect();
    AbsorbingReport { members }
}

/// `‖∇g‖²` against its post-absorption bound, and `‖g‖²_E ≤ K₂`, at every
/// sample with `t ≥ from`. Both bounds are compared in log form.
pub fn monitor_h1_absorbing<S: Real>(
    traj: &Trajectory<S>,
    c: &TheoryConstants<S>,
    from: S,
) -> (ViolationReport<S>, ViolationReport<S>) {
    let mut grad = ViolationReport::new("h1_gradient");
    let mut ball = ViolationReport::new("h1_ball");
    for (k, s) in traj.samples.iter().enumerate() {
        if traj.times[k] < from {
            continue;
        }
        grad.check_ln(traj.steps[k], traj.times[k], s.grad_sq(), c.ln_h1_bound);
        ball.check_ln(traj.steps[k], traj.times[k], s.e_sq(), c.ln_k2);
    }
    (grad, ball)
}

/// Outcome of the H-Lipschitz check on one pair.
#[derive(Debug, Clone, PartialEq)]
pub struct LipschitzReport<S: Real = f64> {
    pub report: ViolationReport<S>,
    /// Least-squares slope of `ln(‖Δ(t)‖²/‖Δ₀‖²)` against `t − τ`.
    pub growth_exponent: Option<S>,
}

/// `‖g(t) − g̃(t)‖² ≤ e^{C*(t−τ)} ‖g_τ − g̃_τ‖²` along a paired run.
pub fn monitor_lipschitz_h<S: Real>(pair: &PairTrajectory<S>, c: &TheoryConstants<S>) -> LipschitzReport<S> {
    let mut rep = ViolationReport::new("lipschitz_h");
    let d0 = pair.diff_h_sq.first().copied().unwrap_or(S::zero());
    let mut pts = Vec::new();
    for (k, (&t, &d)) in pair.times.iter().zip(&pair.diff_h_sq).enumerate() {
        let el = t - pair.tau;
        rep.check_ln(k as u64, t, d, c.cstar * el + ln0(d0));
        if d0 > S::zero() && d > S::zero() && k > 0 {
            pts.push((el, (d / d0).ln()));
        }
    }
    LipschitzReport {
        report: rep,
        growth_exponent: linear_fit(&pts).map(|f| f.0),
    }
}

/// Two nearby states at `start`, compared after `T_{M*_E}`. The pair
/// belongs to the fibre time `taus[tau_index]` of its generator.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothingPair<S: Real = f64> {
    pub tau_index: usize,
    pub start: S,
    pub g: StateField<S>,
    pub h: StateField<S>,
}

impl<S: Real> SmoothingPair<S> {
    /// Same direction, rescaled to `‖g − h‖ = distance`.
    pub fn with_distance(&self, grid: &Grid<S>, distance: S) -> Self {
        let d = self.h.sub(&self.g);
        let n = d.norm_h(grid);
        Self {
            h: self.g.add_scaled(distance / n, &d),
            ..self.clone()
        }
    }
}

/// Pairs near the attractor, with the perturbation bred along the flow.
///
/// One trajectory from `g0` at `t0` supplies base points at
/// `taus[j] − T + k·spacing`, `k = 1..=count`. Each base point is taken
/// `breed` earlier, perturbed in a random smooth direction, and both copies
/// are run up to the base time; the difference then points along the
/// locally most unstable directions. `spacing` should be a multiple of the
/// forcing period so that every pair of one `τ` sees the same fibre.
#[allow(clippy::too_many_arguments)]
pub fn bred_pairs<S: Real>(
    process: &Process<S>,
    g0: &StateField<S>,
    t0: S,
    taus: &[S],
    t_mstar: S,
    count: usize,
    spacing: S,
    breed: S,
    distance: S,
    seed: u64,
) -> Result<Vec<SmoothingPair<S>>> {
    let grid = process.grid();
    let mut jobs: Vec<(S, usize, usize)> = (1..=count)
        .flat_map(|k| {
            taus.iter()
                .enumerate()
                .map(move |(j, &tau)| (tau - t_mstar + S::of(k) * spacing - breed, j, k))
        })
        .collect();
    jobs.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite times"));
    if jobs.first().is_some_and(|j| j.0 < t0) {
        return Err(HrError::InvalidInput("first breeding window starts before t0".into()));
    }
    let mut state = g0.clone();
    let mut at = t0;
    let mut seeds = Vec::with_capacity(jobs.len());
    for &(s, j, k) in &jobs {
        state = process.advance(&state, at, s)?;
        at = s;
        seeds.push((s, j, k, state.clone()));
    }
    seeds
        .into_par_iter()
        .map(|(s, j, k, base)| {
            let mut rng = sampling::rng(sampling::child_seed(seed, (k * taus.len() + j) as u64));
            let dir = sampling::unit_direction(grid, &mut rng);
            let start = s + breed;
            let x = process.advance(&base, s, start)?;
            let y = process.advance(&base.add_scaled(distance, &dir), s, start)?;
            let pair = SmoothingPair {
                tau_index: j,
                start,
                g: x,
                h: y,
            };
            Ok(pair.with_distance(grid, distance))
        })
        .collect()
}

/// Result of the smoothing measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothingReport<S: Real = f64> {
    pub kappa_hat: S,
    /// `κ̂` restricted to each `τ`; zero where every pair was degenerate.
    pub per_tau: Vec<S>,
    /// Every pair's ratio, in input order.
    pub ratios: Vec<S>,
    /// Pairs skipped because they coincide.
    pub skipped: usize,
}

impl<S: Real> SmoothingReport<S> {
    /// `max / min` of the per-τ values.
    pub fn tau_spread(&self) -> S {
        let hi = self.per_tau.iter().fold(S::zero(), |m, &x| m.max(x));
        let lo = self.per_tau.iter().fold(S::infinity(), |m, &x| m.min(x));
        hi / lo
    }
}

/// `κ̂ = max ‖S(s+T, s)g − S(s+T, s)h‖_E / ‖g − h‖` over the pairs.
/// Pairs run in parallel; the reduction order is fixed.
pub fn measure_smoothing<S: Real>(
    process: &Process<S>,
    pairs: &[SmoothingPair<S>],
    tau_count: usize,
    t_mstar: S,
) -> Result<SmoothingReport<S>> {
    if pairs.is_empty() {
        return Err(HrError::InsufficientData("smoothing needs pairs".into()));
    }
    if let Some(p) = pairs.iter().find(|p| p.tau_index >= tau_count) {
        return Err(HrError::InvalidInput(format!(
            "pair tau index {} out of range",
            p.tau_index
        )));
    }
    let grid = process.grid();
    let ratios: Vec<Option<S>> = pairs
        .par_iter()
        .map(|p| {
            let d0 = p.g.sub(&p.h).norm_h(grid);
            if !(d0 > S::zero()) {
                return Ok(None);
            }
            let end = p.start + t_mstar;
            let a = process.advance(&p.g, p.start, end)?;
            let b = process.advance(&p.h, p.start, end)?;
            Ok(Some(a.sub(&b).norm_e(grid) / d0))
        })
        .collect::<Result<_>>()?;
    let mut per_tau = vec![S::zero(); tau_count];
    let mut skipped = 0;
    for (p, r) in pairs.iter().zip(&ratios) {
        match r {
            Some(v) => per_tau[p.tau_index] = per_tau[p.tau_index].max(*v),
            None => skipped += 1,
        }
    }
    if skipped == pairs.len() {
        return Err(HrError::InsufficientData("every pair is degenerate".into()));
    }
    Ok(SmoothingReport {
        kappa_hat: per_tau.iter().fold(S::zero(), |m, &x| m.max(x)),
        per_tau,
        ratios: ratios.into_iter().map(|r| r.unwrap_or(S::zero())).collect(),
        skipped,
    })
}

/// One regime of the time-Hölder check.
#[derive(Debug, Clone, PartialEq)]
pub struct HolderRegime<S: Real = f64> {
    pub lags: Vec<S>,
    pub distances: Vec<S>,
    /// Log-log slope of distance against lag.
    pub slope: Option<S>,
    pub gamma: S,
}

impl<S: Real> HolderRegime<S> {
    pub fn slope_ok(&self) -> bool {
        matches!(self.slope, Some(s) if s >= self.gamma - S::lit(0.1))
    }
}

/// Outcome of [`monitor_time_holder`].
#[derive(Debug, Clone, PartialEq)]
pub struct HolderReport<S: Real = f64> {
    /// Lags `t` with `S(τ, τ−T)g₀` vs `S(τ, τ−T−t)g₀`.
    pub short: HolderRegime<S>,
    pub long: HolderRegime<S>,
    /// Same lags with `t₁ = 2T − t`, `t₂ = 2T`.
    pub late_short: HolderRegime<S>,
    pub late_long: HolderRegime<S>,
    /// Smallest `λ̂` with every distance `≤ λ̂ e^{C*T/2} |t|^γ`, as `ln λ̂`.
    pub ln_lambda_hat: S,
    /// `ln λ̂ ≤ ln λ`.
    pub bound_holds: bool,
    /// `max ‖f(g)‖` over the sampled states.
    pub d_gamma: S,
}

impl<S: Real> HolderReport<S> {
    pub fn passed(&self) -> bool {
        self.bound_holds
            && self.short.slope_ok()
            && self.long.slope_ok()
            && self.late_short.slope_ok()
            && self.late_long.slope_ok()
    }
}

/// `‖f(g)‖` with `f` the reaction without input.
pub fn nemytskii_norm<S: Real>(grid: &Grid<S>, g: &StateField<S>, params: &HrParameters<S>) -> S {
    let mut f = StateField::zeros(grid);
    for i in 0..g.len() {
        let r = crate::model::reaction(g.at(i), [S::zero(); 3], params);
        f.u[i] = r[0];
        f.v[i] = r[1];
        f.w[i] = r[2];
    }
    f.norm_h(grid)
}

/// Measures both Hölder regimes from `g₀` at fibre time `tau`; `lags` must
/// be aligned with the step and lie in `(0, T]`.
pub fn monitor_time_holder<S: Real>(
    process: &Process<S>,
    g0: &StateField<S>,
    tau: S,
    lags: &[S],
    c: &TheoryConstants<S>,
) -> Result<HolderReport<S>> {
    let t = c.t_mstar;
    if lags.iter().any(|&l| !(l > S::zero()) || l > t) {
        return Err(HrError::InvalidInput("lags must lie in (0, T_Mstar]".into()));
    }
    let grid = process.grid();
    let params = process.params();
    let mut d_gamma = nemytskii_norm(grid, g0, params);
    let reference = process.advance(g0, tau - t, tau)?;
    let late_reference = process.advance(g0, tau - S::lit(2.0) * t, tau)?;
    d_gamma = d_gamma
        .max(nemytskii_norm(grid, &reference, params))
        .max(nemytskii_norm(grid, &late_reference, params));
    let mut early = Vec::new();
    let mut late = Vec::new();
    for &lag in lags {
        let x = process.advance(g0, tau - t - lag, tau)?;
        early.push(x.sub(&reference).norm_h(grid));
        let y = process.advance(g0, tau - (S::lit(2.0) * t - lag), tau)?;
        late.push(y.sub(&late_reference).norm_h(grid));
    }
    let regime = |dist: &[S], short: bool| {
        let (l, d): (Vec<S>, Vec<S>) = lags
            .iter()
            .zip(dist)
            .filter(|(&lag, _)| (lag < S::one()) == short)
            .map(|(&a, &b)| (a, b))
            .unzip();
        let slope = log_slope(&l.iter().map(|x| x.ln()).collect::<Vec<_>>(), &d);
        HolderRegime {
            lags: l,
            distances: d,
            slope: slope.map(|s| s.0),
            gamma: if short { S::lit(0.5) } else { S::one() },
        }
    };
    let ln_env = c.cstar * t / S::lit(2.0);
    let mut ln_lambda_hat = S::neg_infinity();
    for (&lag, (&a, &b)) in lags.iter().zip(early.iter().zip(&late)) {
        let denom = ln_env + gamma(lag) * lag.ln();
        ln_lambda_hat = ln_lambda_hat.max(ln0(a) - denom).max(ln0(b) - denom);
    }
    let constants = TheoryConstants {
        measured: MeasuredConstants {
            d_gamma: Some(d_gamma),
            ..c.measured
        },
        ..*c
    };
    let refreshed = compute_constants(
        &constants.params,
        constants.omega_measure,
        constants.p_bound,
        constants.t_mstar,
        &constants.measured,
    )?;
    Ok(HolderReport {
        short: regime(&early, true),
        long: regime(&early, false),
        late_short: regime(&late, true),
        late_long: regime(&late, false),
        ln_lambda_hat,
        bound_holds: ln_lambda_hat <= refreshed.ln_lambda,
        d_gamma,
    })
}

/// Worst time after which every member stays in `{‖g‖²_E ≤ radius_sq}`,
/// measured from `tau` over `horizon`; `None` if some member is outside at
/// the end of the run.
pub fn measure_self_entry_time<S: Real>(
    process: &Process<S>,
    members: &[StateField<S>],
    tau: S,
    horizon: S,
    radius_sq: S,
) -> Result<Option<S>> {
    let per_member: Vec<Option<S>> = members
        .par_iter()
        .enumerate()
        .map(|(i, g)| {
            let tr = process.evolve(g, tau, tau + horizon).map_err(|e| HrError::Member {
                member: i,
                source: Box::new(e),
            })?;
            let mut last_out: Option<usize> = None;
            for (k, s) in tr.samples.iter().enumerate() {
                if s.e_sq() > radius_sq {
                    last_out = Some(k);
                }
            }
            Ok(match last_out {
                None => Some(S::zero()),
                Some(k) if k + 1 < tr.samples.len() => Some(tr.times[k + 1] - tau),
                Some(_) => None,
            })
        })
        .collect::<Result<_>>()?;
    let mut worst = S::zero();
    for m in per_member {
        match m {
            Some(t) => worst = worst.max(t),
            None => return Ok(None),
        }
    }
    Ok(Some(worst))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{homogeneous_equilibrium, Forcing, ForcingSpec};
    use crate::solver::{evolve, ProcessConfig, Sample};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn measured() -> MeasuredConstants<f64> {
        MeasuredConstants {
            rho_hat: 1.5,
            c0_hat: 1.0,
            c1_hat: 1.0,
            d_gamma: None,
            kappa_hat: None,
        }
    }

    fn unit(params: HrParameters<f64>) -> TheoryConstants<f64> {
        compute_constants(&params, 1.0, 0.0, 5.0, &measured()).unwrap()
    }

    #[test]
    fn c1_from_b_and_beta() {
        let p = HrParameters {
            b: 1.0,
            beta: 1.0,
            ..HrParameters::default()
        };
        assert_eq!(unit(p).c1, 4.0);
    }

    #[test]
    fn delta_from_r() {
        let p = HrParameters {
            r: 1.0,
            ..HrParameters::default()
        };
        assert_eq!(unit(p).delta, 0.25);
        let p = HrParameters {
            r: 0.005,
            ..HrParameters::default()
        };
        assert_eq!(unit(p).delta, 0.00125);
    }

    #[test]
    fn cstar_hand_value() {
        let p = HrParameters {
            a: 1.0,
            b: 1.0,
            beta: 1.0,
            q: 1.0,
            r: 1.0,
            ..HrParameters::default()
        };
        assert_eq!(unit(p).cstar, 16.0);
    }

    #[test]
    fn default_constants_against_hand_evaluation() {
        let c = unit(HrParameters::default());
        // c1 = 28, c2 = 84⁴ + 3.25² + (784·203 + 0.08)² + 2 + 0.0004·2.56/0.005
        assert_eq!(c.c1, 28.0);
        let c2 = 84f64.powi(4) + 10.5625 + (784.0 * 203.0 + 0.08f64).powi(2) + 2.0 + 0.2048;
        assert_relative_eq!(c.c2, c2, max_relative = 1e-14);
        let k1 = 1.0 + (784.0 / 128.0 + 2.0 * c2) / 0.00125;
        assert_relative_eq!(c.k1, k1, max_relative = 1e-14);
        assert!(c.ln_k2 >= c.k1.ln());
        assert_relative_eq!(c.cstar, 4.0 * (1.0 + 14.0) + 2.0 * 0.025, max_relative = 1e-14);
        assert_relative_eq!(c.g2, 80.0, max_relative = 1e-14);
        assert_relative_eq!(
            c.g3,
            (8.0 * 10.5625 + 4.0 + 4.0 * 0.0004 * 2.56) / 0.05,
            max_relative = 1e-14
        );
    }

    #[test]
    fn k1_with_forcing() {
        let p = HrParameters::<f64>::default();
        let a = compute_constants(&p, 2.0, 0.0, 5.0, &measured()).unwrap();
        let b = compute_constants(&p, 2.0, 0.7, 5.0, &measured()).unwrap();
        let extra = 4.0 * (1.0 + 200.0) * 0.7 / (1.0 - (-0.00125f64).exp());
        assert_relative_eq!(b.k1 - a.k1, extra, max_relative = 1e-6);
    }

    #[test]
    fn small_parameters_give_finite_logs() {
        let p = HrParameters {
            a: 0.1,
            b: 1.0,
            alpha: 0.1,
            beta: 0.1,
            q: 0.1,
            r: 1.0,
            c: 0.0,
            j: 0.1,
            d1: 1.0,
            d2: 1.0,
            d3: 1.0,
        };
        let c = unit(p);
        for e in c.entries() {
            assert!(e.ln_value.is_finite(), "{}", e.name);
        }
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        let p = HrParameters::<f64>::default();
        assert!(compute_constants(&p, 0.0, 0.0, 5.0, &measured()).is_err());
        assert!(compute_constants(&p, 1.0, -1.0, 5.0, &measured()).is_err());
        assert!(compute_constants(&p, 1.0, 0.0, 0.0, &measured()).is_err());
        let bad = HrParameters { q: -1.0, ..p };
        assert!(compute_constants(&bad, 1.0, 0.0, 5.0, &measured()).is_err());
    }

    #[test]
    fn tb_examples() {
        let p = HrParameters {
            b: 1.0,
            beta: 1.0,
            r: 1.0,
            ..HrParameters::default()
        };
        let c = unit(p);
        assert_eq!(compute_tb(&c, 0.1), 0.0);
        assert_relative_eq!(compute_tb(&c, 1.0), 4.0 * 4f64.ln(), max_relative = 1e-14);
        assert_relative_eq!(
            compute_tb(&c, 2.0) - compute_tb(&c, 1.0),
            2f64.ln() / 0.25,
            max_relative = 1e-12
        );
    }

    #[test]
    fn rho_examples() {
        let g = Grid::<f64>::interval(1.0, 64).unwrap();
        assert_relative_eq!(rho_ratio(&g, &vec![3.0; g.len()]).unwrap(), 1.0, max_relative = 1e-12);
        let f: Vec<f64> = g.cosine_mode(1).iter().map(|x| x + 0.5).collect();
        let f2: Vec<f64> = f.iter().map(|x| 2.0 * x).collect();
        assert_relative_eq!(
            rho_ratio(&g, &f).unwrap(),
            rho_ratio(&g, &f2).unwrap(),
            max_relative = 1e-12
        );
        let mode = g.cosine_mode(1);
        assert!(rho_ratio(&g, &mode).unwrap() < 1.0);
        assert!(measure_rho(&g, 16, 0).unwrap() >= 1.5);
        assert!(measure_rho(&g, 0, 0).is_err());
    }

    #[test]
    fn rho_is_refinement_stable() {
        let a = measure_rho(&Grid::<f64>::interval(1.0, 127).unwrap(), 128, 3).unwrap();
        let b = measure_rho(&Grid::<f64>::interval(1.0, 254).unwrap(), 128, 3).unwrap();
        assert!((a / b - 1.0).abs() < 0.1, "{a} {b}");
    }

    #[test]
    fn semigroup_constants_from_modes() {
        let g = Grid::<f64>::interval(1.0, 16).unwrap();
        let p = HrParameters::<f64>::default();
        let (c0, c1) = measure_semigroup_constants(&g, &p, 5.0);
        let lam_max = 4.0 * 256.0;
        assert!(c0 <= 0.05 * lam_max * (1.0 + 1e-12));
        assert!(c0 > 0.05 * lam_max * 0.9);
        assert!(c1 >= 5f64.sqrt() * (1.0 - 1e-12));
    }

    fn run(g0: StateField<f64>, spec: ForcingSpec<f64>, horizon: f64) -> (Trajectory<f64>, TheoryConstants<f64>) {
        let grid = Grid::<f64>::default_1d();
        let p = HrParameters::default();
        let f = Forcing::new(spec, &grid).unwrap();
        let pb = crate::model::translation_bound(&f, 64).unwrap();
        let c = compute_constants(&p, grid.measure(), pb, 5.0, &measured()).unwrap();
        let tr = evolve(&g0, 0.0, horizon, &p, &f, &grid, &ProcessConfig::default()).unwrap();
        (tr, c)
    }

    #[test]
    fn energy_monitors_pass_near_the_origin() {
        let grid = Grid::<f64>::default_1d();
        let g0 = sampling::on_sphere(&grid, 0.01, &mut sampling::rng(1));
        let (tr, c) = run(g0, ForcingSpec::zero(), 2.0);
        assert!(monitor_energy(&tr, &c).passed());
        assert!(monitor_gronwall(&tr, &c).passed());
    }

    #[test]
    fn corrupted_snapshot_is_flagged() {
        let grid = Grid::<f64>::default_1d();
        let g0 = sampling::on_sphere(&grid, 1.0, &mut sampling::rng(2));
        let (mut tr, c) = run(g0, ForcingSpec::zero(), 1.0);
        let k = tr.samples.len() / 2;
        let s: &mut Sample<f64> = &mut tr.samples[k];
        s.u_sq *= 1e12;
        s.grad_u_sq *= 1e12;
        s.l4_pow4 *= 1e24;
        let rep = monitor_energy(&tr, &c);
        assert!(!rep.passed());
        assert_eq!(rep.violations[0].step, tr.steps[k - 1]);
    }

    #[test]
    fn equilibrium_has_strict_energy_slack() {
        let grid = Grid::<f64>::default_1d();
        let p = HrParameters::<f64>::default();
        let eq = homogeneous_equilibrium(&p, -1.0).unwrap();
        let (tr, c) = run(StateField::uniform(&grid, eq), ForcingSpec::zero(), 0.5);
        let rep = monitor_energy(&tr, &c);
        assert!(rep.passed());
        assert!(rep.min_relative_slack.unwrap() > 0.5);
    }

    #[test]
    fn gronwall_with_zero_data_is_the_constant() {
        let grid = Grid::<f64>::default_1d();
        let (tr, c) = run(StateField::zeros(&grid), ForcingSpec::zero(), 0.2);
        assert!(monitor_gronwall(&tr, &c).passed());
    }

    #[test]
    fn absorbing_zero_ball_is_inside_at_once() {
        let grid = Grid::<f64>::default_1d();
        let (tr, c) = run(StateField::zeros(&grid), ForcingSpec::zero(), 0.1);
        let rep = monitor_absorbing(&[(0.0, &tr)], &c);
        assert!(rep.passed());
        assert_eq!(rep.members[0].entry_time, Some(0.0));
    }

    #[test]
    fn h1_check_on_equilibrium() {
        let grid = Grid::<f64>::default_1d();
        let p = HrParameters::<f64>::default();
        let eq = homogeneous_equilibrium(&p, -1.0).unwrap();
        let (tr, c) = run(StateField::uniform(&grid, eq), ForcingSpec::zero(), 0.2);
        let (g, b) = monitor_h1_absorbing(&tr, &c, 0.0);
        assert!(g.passed() && b.passed());
        assert!(tr.samples.iter().all(|s| s.grad_sq() == 0.0));
    }

    #[test]
    fn lipschitz_identical_pair() {
        let grid = Grid::<f64>::default_1d();
        let p = HrParameters::<f64>::default();
        let f = Forcing::zero(&grid);
        let pr = Process::new(&grid, &p, &f, &ProcessConfig::default()).unwrap();
        let g = sampling::on_sphere(&grid, 1.0, &mut sampling::rng(5));
        let pair = pr.evolve_pair(&g, &g, 0.0, 0.5).unwrap();
        assert!(pair.diff_h_sq.iter().all(|&d| d <= EPS_ABS));
        let c = unit(p);
        assert!(monitor_lipschitz_h(&pair, &c).report.passed());
    }

    #[test]
    fn linear_fit_recovers_exact_rates() {
        let t: Vec<f64> = (0..6).map(|i| i as f64).collect();
        let y: Vec<f64> = t.iter().map(|x| 3.0 * (-0.5 * x).exp()).collect();
        let (s, r) = log_slope(&t, &y).unwrap();
        assert!((s + 0.5).abs() < 1e-12 && r < 1e-12);
    }

    #[test]
    fn constants_are_bitwise_deterministic() {
        let p = HrParameters::<f64>::default();
        let a = compute_constants(&p, 1.0, 0.3, 5.0, &measured()).unwrap();
        let b = compute_constants(&p, 1.0, 0.3, 5.0, &measured()).unwrap();
        assert_eq!(format!("{a:?}"), format!("{b:?}"));
    }

    proptest! {
        #[test]
        fn k1_is_monotone(p1 in 0.0f64..10.0, dp in 0.0f64..10.0, om in 0.1f64..5.0, dom in 0.0f64..5.0) {
            let p = HrParameters::<f64>::default();
            let base = compute_constants(&p, om, p1, 5.0, &measured()).unwrap().k1;
            let more_p = compute_constants(&p, om, p1 + dp, 5.0, &measured()).unwrap().k1;
            let more_om = compute_constants(&p, om + dom, p1, 5.0, &measured()).unwrap().k1;
            prop_assert!(more_p >= base);
            prop_assert!(more_om >= base);
        }

        #[test]
        fn tb_is_monotone(b in 0.0f64..1e6, db in 0.0f64..1e6) {
            let c = unit(HrParameters::default());
            prop_assert!(compute_tb(&c, b + db) >= compute_tb(&c, b));
        }

        #[test]
        fn cstar_is_monotone(a in 0.1f64..5.0, beta in 0.1f64..5.0, q in 0.01f64..1.0, r in 0.01f64..1.0, bump in 0.0f64..1.0) {
            let p = HrParameters { a, beta, q, r, ..HrParameters::default() };
            let base = unit(p).cstar;
            for bumped in [
                HrParameters { a: a + bump, ..p },
                HrParameters { beta: beta + bump, ..p },
                HrParameters { q: q + bump, ..p },
                HrParameters { r: r + bump, ..p },
            ] {
                prop_assert!(unit(bumped).cstar >= base);
            }
        }

        #[test]
        fn k2_dominates_k1(a in 0.1f64..5.0, beta in 0.1f64..5.0, d in 0.01f64..1.0) {
            let p = HrParameters { a, beta, d1: d, d2: d, d3: d, ..HrParameters::default() };
            let c = unit(p);
            prop_assert!(c.ln_k2 >= c.k1.ln());
            prop_assert!(c.entries().iter().all(|e| e.ln_value.is_finite() || e.name == "D_Gamma"));
        }

        #[test]
        fn sobolev_ratio_is_bounded_by_rho_hat(seed in 0u64..1000) {
            let g = Grid::<f64>::default_1d();
            let rho = measure_rho(&g, 64, 99).unwrap();
            let f = sampling::smooth_scalar(&g, &mut sampling::rng(seed));
            prop_assert!(rho_ratio(&g, &f).unwrap() <= rho);
        }
    }
}
