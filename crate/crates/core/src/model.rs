//! The Hindmarsh–Rose reaction terms and the library of time-dependent
//! inputs `p = (p₁, p₂, p₃)`.
//!
//! The system is
//!
//! ```text
//! u_t = d₁Δu + φ(u) + v − w + J + p₁(t, x)
//! v_t = d₂Δv + ψ(u) − v + p₂(t, x)
//! w_t = d₃Δw + q(u − c) − r w + p₃(t, x)
//! ```
//!
//! with `φ(u) = a u² − b u³` and `ψ(u) = α − β u²`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{HrError, Result};
use crate::grid::{Grid, MAX_DIM};
use crate::scalar::Real;

/// The eleven model constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HrParameters<S: Real = f64> {
    pub d1: S,
    pub d2: S,
    pub d3: S,
    pub a: S,
    pub b: S,
    pub alpha: S,
    pub beta: S,
    pub q: S,
    pub r: S,
    /// Reference membrane potential; the only constant allowed to be ≤ 0.
    pub c: S,
    pub j: S,
}

impl<S: Real> Default for HrParameters<S> {
    /// Classical bursting regime.
    fn default() -> Self {
        Self {
            d1: S::lit(0.05),
            d2: S::lit(0.05),
            d3: S::lit(0.05),
            a: S::lit(3.0),
            b: S::one(),
            alpha: S::one(),
            beta: S::lit(5.0),
            q: S::lit(0.02),
            r: S::lit(0.005),
            c: S::lit(-1.6),
            j: S::lit(3.25),
        }
    }
}

impl<S: Real> HrParameters<S> {
    /// Named positive constants in declaration order.
    pub fn positive_fields(&self) -> [(&'static str, S); 10] {
        [
            ("d1", self.d1),
            ("d2", self.d2),
            ("d3", self.d3),
            ("a", self.a),
            ("b", self.b),
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("q", self.q),
            ("r", self.r),
            ("J", self.j),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        for (name, value) in self.positive_fields() {
            if !(value > S::zero()) || !value.is_finite() {
                return Err(HrError::InvalidParameter {
                    name,
                    value: value.to64(),
                    reason: "must be strictly positive and finite",
                });
            }
        }
        if !self.c.is_finite() {
            return Err(HrError::InvalidParameter {
                name: "c",
                value: self.c.to64(),
                reason: "must be finite",
            });
        }
        Ok(())
    }

    /// Like [`validate`](Self::validate) but lets `J` and `alpha` vanish, which
    /// some oracle configurations (an equilibrium at the origin) need.
    pub fn validate_relaxed(&self) -> Result<()> {
        for (name, value) in self.positive_fields() {
            let ok = if name == "J" || name == "alpha" {
                value >= S::zero()
            } else {
                value > S::zero()
            };
            if !ok || !value.is_finite() {
                return Err(HrError::InvalidParameter {
                    name,
                    value: value.to64(),
                    reason: "out of range",
                });
            }
        }
        Ok(())
    }

    /// `d = min{d₁, d₂, d₃}`.
    pub fn d_min(&self) -> S {
        self.d1.min(self.d2).min(self.d3)
    }

    pub fn diffusivities(&self) -> [S; 3] {
        [self.d1, self.d2, self.d3]
    }
}

/// `φ(u) = a u² − b u³`.
#[inline]
pub fn phi<S: Real>(u: S, p: &HrParameters<S>) -> S {
    p.a * u * u - p.b * u * u * u
}

/// `ψ(u) = α − β u²`.
#[inline]
pub fn psi<S: Real>(u: S, p: &HrParameters<S>) -> S {
    p.alpha - p.beta * u * u
}

/// Pointwise right-hand side without diffusion, for a given input value.
#[inline]
pub fn reaction<S: Real>(g: [S; 3], forcing: [S; 3], p: &HrParameters<S>) -> [S; 3] {
    let [u, v, w] = g;
    [
        phi(u, p) + v - w + p.j + forcing[0],
        psi(u, p) - v + forcing[1],
        p.q * (u - p.c) - p.r * w + forcing[2],
    ]
}

/// Pointwise right-hand side with the input evaluated at `(t, x)`.
pub fn reaction_at<S: Real>(g: [S; 3], t: S, x: [S; MAX_DIM], p: &HrParameters<S>, forcing: &Forcing<S>) -> [S; 3] {
    reaction(g, forcing.eval_point(t, x), p)
}

/// Family of the time-dependent input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ForcingKind {
    Zero,
    Constant,
    TimePeriodic,
    SpaceModulated,
    BoundedNoise,
}

impl ForcingKind {
    pub fn name(self) -> &'static str {
        match self {
            ForcingKind::Zero => "zero",
            ForcingKind::Constant => "constant",
            ForcingKind::TimePeriodic => "time-periodic",
            ForcingKind::SpaceModulated => "space-modulated",
            ForcingKind::BoundedNoise => "bounded-noise",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "zero" => ForcingKind::Zero,
            "constant" => ForcingKind::Constant,
            "time-periodic" => ForcingKind::TimePeriodic,
            "space-modulated" => ForcingKind::SpaceModulated,
            "bounded-noise" => ForcingKind::BoundedNoise,
            _ => return None,
        })
    }
}

/// Declarative description of an input `p(t, x)`.
///
/// * `constant`: `pᵢ = Aᵢ`
/// * `time-periodic`: `pᵢ = Aᵢ sin(2πf t + φ₀)`
/// * `space-modulated`: `pᵢ = Aᵢ cos(π x₁/L₁) sin(2πf t + φ₀)`
/// * `bounded-noise`: `pᵢ = Aᵢ Σₖ cₖ sin(ωₖ t + θₖ) cos(mₖ π x₁/L₁) / Σₖ|cₖ|`
///   with coefficients drawn once from `seed`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForcingSpec<S: Real = f64> {
    pub kind: ForcingKind,
    pub amplitudes: [S; 3],
    pub frequency: S,
    pub phase: S,
    pub seed: u64,
}

impl<S: Real> Default for ForcingSpec<S> {
    fn default() -> Self {
        Self::zero()
    }
}

impl<S: Real> ForcingSpec<S> {
    pub fn zero() -> Self {
        Self {
            kind: ForcingKind::Zero,
            amplitudes: [S::zero(); 3],
            frequency: S::zero(),
            phase: S::zero(),
            seed: 0,
        }
    }

    pub fn constant(amplitudes: [S; 3]) -> Self {
        Self {
            kind: ForcingKind::Constant,
            amplitudes,
            ..Self::zero()
        }
    }

    pub fn periodic(amplitudes: [S; 3], frequency: S, phase: S) -> Self {
        Self {
            kind: ForcingKind::TimePeriodic,
            amplitudes,
            frequency,
            phase,
            seed: 0,
        }
    }

    pub fn space_modulated(amplitudes: [S; 3], frequency: S, phase: S) -> Self {
        Self {
            kind: ForcingKind::SpaceModulated,
            amplitudes,
            frequency,
            phase,
            seed: 0,
        }
    }

    pub fn bounded_noise(amplitudes: [S; 3], frequency: S, seed: u64) -> Self {
        Self {
            kind: ForcingKind::BoundedNoise,
            amplitudes,
            frequency,
            phase: S::zero(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (i, a) in self.amplitudes.iter().enumerate() {
            if !a.is_finite() {
                return Err(HrError::InvalidParameter {
                    name: ["amplitudes[0]", "amplitudes[1]", "amplitudes[2]"][i],
                    value: a.to64(),
                    reason: "must be finite",
                });
            }
        }
        if !self.frequency.is_finite() || self.frequency < S::zero() {
            return Err(HrError::InvalidParameter {
                name: "frequency",
                value: self.frequency.to64(),
                reason: "must be finite and nonnegative",
            });
        }
        if !self.phase.is_finite() {
            return Err(HrError::InvalidParameter {
                name: "phase",
                value: self.phase.to64(),
                reason: "must be finite",
            });
        }
        Ok(())
    }

    /// Same input delayed by `dt`: `p'(t) = p(t + dt)` for the phase-carrying kinds.
    pub fn shifted(&self, dt: S) -> Self {
        let mut out = *self;
        out.phase = self.phase + S::TAU() * self.frequency * dt;
        out
    }
}

const NOISE_TERMS: usize = 8;
const NOISE_MAX_MODE: usize = 3;

#[derive(Debug, Clone, Copy)]
struct NoiseTerm<S: Real> {
    coeff: S,
    omega: S,
    theta: S,
    mode: usize,
}

/// A [`ForcingSpec`] bound to a grid, ready for repeated evaluation.
#[derive(Debug, Clone)]
pub struct Forcing<S: Real = f64> {
    spec: ForcingSpec<S>,
    length0: S,
    /// `cos(m π x₁ / L₁)` on the nodes, `m = 0..=NOISE_MAX_MODE`.
    profiles: Vec<Vec<S>>,
    /// Quadrature Gram matrix of `profiles`.
    gram: Vec<Vec<S>>,
    noise: [Vec<NoiseTerm<S>>; 3],
}

impl<S: Real> Forcing<S> {
    pub fn new(spec: ForcingSpec<S>, grid: &Grid<S>) -> Result<Self> {
        spec.validate()?;
        let profiles: Vec<Vec<S>> = (0..=NOISE_MAX_MODE).map(|m| grid.cosine_mode(m)).collect();
        let gram = profiles
            .iter()
            .map(|a| profiles.iter().map(|b| grid.inner_unchecked(a, b)).collect())
            .collect();
        let noise = if spec.kind == ForcingKind::BoundedNoise {
            noise_terms(&spec)
        } else {
            [Vec::new(), Vec::new(), Vec::new()]
        };
        Ok(Self {
            spec,
            length0: grid.lengths()[0],
            profiles,
            gram,
            noise,
        })
    }

    pub fn zero(grid: &Grid<S>) -> Self {
        Self::new(ForcingSpec::zero(), grid).expect("zero forcing is valid")
    }

    pub fn spec(&self) -> &ForcingSpec<S> {
        &self.spec
    }

    pub fn kind(&self) -> ForcingKind {
        self.spec.kind
    }

    /// True when `p(t, ·)` is constant in space for every `t`.
    pub fn is_spatially_uniform(&self) -> bool {
        matches!(
            self.spec.kind,
            ForcingKind::Zero | ForcingKind::Constant | ForcingKind::TimePeriodic
        )
    }

    pub fn is_time_constant(&self) -> bool {
        matches!(self.spec.kind, ForcingKind::Zero | ForcingKind::Constant)
            || self.spec.frequency == S::zero()
                && matches!(self.spec.kind, ForcingKind::TimePeriodic | ForcingKind::SpaceModulated)
    }

    /// Temporal period, for the periodic kinds with nonzero frequency.
    pub fn period(&self) -> Option<S> {
        match self.spec.kind {
            ForcingKind::TimePeriodic | ForcingKind::SpaceModulated if self.spec.frequency > S::zero() => {
                Some(self.spec.frequency.recip())
            }
            _ => None,
        }
    }

    #[inline]
    fn carrier(&self, t: S) -> S {
        (S::TAU() * self.spec.frequency * t + self.spec.phase).sin()
    }

    /// Temporal noise weights of component `i` at time `t`, folded per mode.
    fn noise_mode_weights(&self, i: usize, t: S) -> [S; NOISE_MAX_MODE + 1] {
        let mut out = [S::zero(); NOISE_MAX_MODE + 1];
        for term in &self.noise[i] {
            out[term.mode] += term.coeff * (term.omega * t + term.theta).sin();
        }
        out
    }

    /// `p(t, x)` at an arbitrary point.
    pub fn eval_point(&self, t: S, x: [S; MAX_DIM]) -> [S; 3] {
        let a = self.spec.amplitudes;
        match self.spec.kind {
            ForcingKind::Zero => [S::zero(); 3],
            ForcingKind::Constant => a,
            ForcingKind::TimePeriodic => {
                let s = self.carrier(t);
                [a[0] * s, a[1] * s, a[2] * s]
            }
            ForcingKind::SpaceModulated => {
                let s = self.carrier(t) * (S::PI() * x[0] / self.length0).cos();
                [a[0] * s, a[1] * s, a[2] * s]
            }
            ForcingKind::BoundedNoise => {
                let mut out = [S::zero(); 3];
                for (i, o) in out.iter_mut().enumerate() {
                    let wts = self.noise_mode_weights(i, t);
                    let mut acc = S::zero();
                    for (m, wm) in wts.iter().enumerate() {
                        acc += *wm * (S::of(m) * S::PI() * x[0] / self.length0).cos();
                    }
                    *o = a[i] * acc;
                }
                out
            }
        }
    }

    /// Writes `p(t, ·)` on every node. Returns `false` (and leaves `out`
    /// untouched) when the input vanishes identically.
    pub fn eval_into(&self, t: S, out: [&mut [S]; 3]) -> bool {
        let a = self.spec.amplitudes;
        match self.spec.kind {
            ForcingKind::Zero => false,
            ForcingKind::Constant => {
                for (i, o) in out.into_iter().enumerate() {
                    o.iter_mut().for_each(|x| *x = a[i]);
                }
                true
            }
            ForcingKind::TimePeriodic => {
                let s = self.carrier(t);
                for (i, o) in out.into_iter().enumerate() {
                    let v = a[i] * s;
                    o.iter_mut().for_each(|x| *x = v);
                }
                true
            }
            ForcingKind::SpaceModulated => {
                let s = self.carrier(t);
                for (i, o) in out.into_iter().enumerate() {
                    let amp = a[i] * s;
                    for (x, prof) in o.iter_mut().zip(&self.profiles[1]) {
                        *x = amp * *prof;
                    }
                }
                true
            }
            ForcingKind::BoundedNoise => {
                for (i, o) in out.into_iter().enumerate() {
                    let wts = self.noise_mode_weights(i, t);
                    o.iter_mut().for_each(|x| *x = S::zero());
                    for (m, wm) in wts.iter().enumerate() {
                        let amp = a[i] * *wm;
                        for (x, prof) in o.iter_mut().zip(&self.profiles[m]) {
                            *x += amp * *prof;
                        }
                    }
                }
                true
            }
        }
    }

    /// `‖pᵢ(t)‖²` for each component, by the grid quadrature.
    pub fn component_norms_sq(&self, t: S) -> [S; 3] {
        let a = self.spec.amplitudes;
        let g00 = self.gram[0][0];
        match self.spec.kind {
            ForcingKind::Zero => [S::zero(); 3],
            ForcingKind::Constant => [a[0] * a[0] * g00, a[1] * a[1] * g00, a[2] * a[2] * g00],
            ForcingKind::TimePeriodic => {
                let s2 = self.carrier(t).powi(2) * g00;
                [a[0] * a[0] * s2, a[1] * a[1] * s2, a[2] * a[2] * s2]
            }
            ForcingKind::SpaceModulated => {
                let s2 = self.carrier(t).powi(2) * self.gram[1][1];
                [a[0] * a[0] * s2, a[1] * a[1] * s2, a[2] * a[2] * s2]
            }
            ForcingKind::BoundedNoise => {
                let mut out = [S::zero(); 3];
                for (i, o) in out.iter_mut().enumerate() {
                    let wts = self.noise_mode_weights(i, t);
                    let mut acc = S::zero();
                    for (m, wm) in wts.iter().enumerate() {
                        for (l, wl) in wts.iter().enumerate() {
                            acc += *wm * *wl * self.gram[m][l];
                        }
                    }
                    *o = a[i] * a[i] * acc;
                }
                out
            }
        }
    }

    /// `‖p(t)‖² = Σᵢ ‖pᵢ(t)‖²`.
    pub fn norm_sq(&self, t: S) -> S {
        self.component_norms_sq(t).into_iter().sum()
    }
}

fn noise_terms<S: Real>(spec: &ForcingSpec<S>) -> [Vec<NoiseTerm<S>>; 3] {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let base = if spec.frequency > S::zero() {
        spec.frequency.to64()
    } else {
        1.0
    };
    let draw = |rng: &mut ChaCha8Rng| {
        let mut terms: Vec<NoiseTerm<S>> = (0..NOISE_TERMS)
            .map(|_| NoiseTerm {
                coeff: S::lit(rng.gen_range(-1.0..1.0)),
                // incommensurate frequencies in [0.5, 2] × 2πf
                omega: S::lit(std::f64::consts::TAU * base * rng.gen_range(0.5..2.0)),
                theta: S::lit(rng.gen_range(0.0..std::f64::consts::TAU)),
                mode: rng.gen_range(0..=NOISE_MAX_MODE),
            })
            .collect();
        let total: S = terms.iter().map(|t| t.coeff.abs()).sum();
        if total > S::zero() {
            for t in &mut terms {
                t.coeff /= total;
            }
        }
        terms
    };
    let first = draw(&mut rng);
    let second = draw(&mut rng);
    let third = draw(&mut rng);
    [first, second, third]
}

/// Default number of window starts for [`translation_bound`].
pub const DEFAULT_WINDOW_STARTS: usize = 256;
/// Trapezoid intervals per unit window.
const WINDOW_QUADRATURE: usize = 128;
/// Range scanned for aperiodic inputs.
const APERIODIC_SCAN: f64 = 10.0;

/// `Σᵢ sup_t ∫_t^{t+1} ‖pᵢ(s)‖² ds`, the translation-bound norm squared,
/// maximised over a lattice of `t_samples` window starts.
///
/// Time-constant inputs use a single window (the integral is exact). Periodic
/// inputs scan one period; aperiodic ones scan `[0, 10]`.
pub fn translation_bound<S: Real>(forcing: &Forcing<S>, t_samples: usize) -> Result<S> {
    if t_samples == 0 {
        return Err(HrError::InvalidInput(
            "translation_bound needs at least one window start".into(),
        ));
    }
    let starts: Vec<S> = if forcing.is_time_constant() {
        vec![S::zero()]
    } else if let Some(period) = forcing.period() {
        (0..t_samples).map(|j| period * S::of(j) / S::of(t_samples)).collect()
    } else {
        let span = S::lit(APERIODIC_SCAN);
        let denom = S::of(t_samples.max(2) - 1);
        (0..t_samples).map(|j| span * S::of(j) / denom).collect()
    };
    let mut sup = [S::zero(); 3];
    let h = S::one() / S::of(WINDOW_QUADRATURE);
    for s0 in starts {
        let mut acc = [S::zero(); 3];
        for q in 0..=WINDOW_QUADRATURE {
            let wq = if q == 0 || q == WINDOW_QUADRATURE {
                h / S::lit(2.0)
            } else {
                h
            };
            let n = forcing.component_norms_sq(s0 + S::of(q) * h);
            for i in 0..3 {
                acc[i] += wq * n[i];
            }
        }
        for i in 0..3 {
            sup[i] = sup[i].max(acc[i]);
        }
    }
    let total: S = sup.into_iter().sum();
    if !total.is_finite() {
        return Err(HrError::UnboundedForcing(format!(
            "{} input has no finite translation bound",
            forcing.kind().name()
        )));
    }
    Ok(total)
}

/// Equilibrium of the spatially homogeneous system with no input, found by
/// Newton's method on the scalar equation in `u` after eliminating `v`, `w`.
pub fn homogeneous_equilibrium<S: Real>(p: &HrParameters<S>, guess: S) -> Option<[S; 3]> {
    // v = ψ(u), w = q(u − c)/r, F(u) = φ(u) + ψ(u) − q(u − c)/r + J
    let f = |u: S| phi(u, p) + psi(u, p) - p.q * (u - p.c) / p.r + p.j;
    let df = |u: S| S::lit(2.0) * p.a * u - S::lit(3.0) * p.b * u * u - S::lit(2.0) * p.beta * u - p.q / p.r;
    let mut u = guess;
    for _ in 0..200 {
        let step = f(u) / df(u);
        if !step.is_finite() {
            return None;
        }
        u -= step;
        if step.abs() <= S::epsilon() * (S::one() + u.abs()) * S::lit(4.0) {
            break;
        }
    }
    if f(u).abs() > S::lit(1e-9) * (S::one() + u.abs().powi(3)) {
        return None;
    }
    Some([u, psi(u, p), p.q * (u - p.c) / p.r])
}

/// Point of the fast subsystem's nullcline at slow variable `w`: `u` solves
/// `φ(u) + ψ(u) − w + J = 0` and `v = ψ(u)`. Started here, homogeneous data
/// only drift with `w`. Picks the root continued from `u → −∞` as `w → ∞`.
pub fn slow_manifold_point<S: Real>(p: &HrParameters<S>, w: S) -> Option<[S; 3]> {
    let f = |u: S| phi(u, p) + psi(u, p) - w + p.j;
    let df = |u: S| S::lit(2.0) * (p.a - p.beta) * u - S::lit(3.0) * p.b * u * u;
    let mut u = -((w - p.alpha - p.j).abs() / p.b).cbrt() - S::one();
    for _ in 0..200 {
        let step = f(u) / df(u);
        if !step.is_finite() {
            return None;
        }
        u -= step;
        if step.abs() <= S::epsilon() * (S::one() + u.abs()) * S::lit(4.0) {
            break;
        }
    }
    if f(u).abs() > S::lit(1e-9) * (S::one() + u.abs().powi(3)) {
        return None;
    }
    Some([u, psi(u, p), w])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn params(a: f64, b: f64, alpha: f64, beta: f64) -> HrParameters<f64> {
        HrParameters {
            a,
            b,
            alpha,
            beta,
            ..HrParameters::default()
        }
    }

    #[test]
    fn slow_manifold_is_a_fast_rest_point() {
        let p = HrParameters::<f64>::default();
        for w in [100.0, 1000.0] {
            let [u, v, w] = slow_manifold_point(&p, w).unwrap();
            let r = reaction([u, v, w], [0.0; 3], &p);
            assert!(r[0].abs() < 1e-9 * w && r[1].abs() < 1e-9 * w, "{r:?}");
            assert!(u < 0.0);
        }
    }

    #[test]
    fn phi_examples() {
        let p = params(3.0, 1.0, 1.0, 5.0);
        assert_eq!(phi(0.0, &p), 0.0);
        assert_eq!(phi(1.0, &p), 2.0);
        assert_eq!(phi(-1.0, &p), 4.0);
    }

    #[test]
    fn psi_examples() {
        let p = params(3.0, 1.0, 1.0, 5.0);
        assert_eq!(psi(0.0, &p), 1.0);
        assert_eq!(psi(2.0, &p), -19.0);
        assert_eq!(psi(-2.0, &p), -19.0);
    }

    #[test]
    fn reaction_at_origin() {
        let p = HrParameters::<f64>::default();
        let f = reaction([0.0; 3], [0.0; 3], &p);
        assert_relative_eq!(f[0], 3.25);
        assert_relative_eq!(f[1], 1.0);
        assert_relative_eq!(f[2], 0.032, max_relative = 1e-14);
    }

    #[test]
    fn forcing_enters_additively() {
        let p = HrParameters::<f64>::default();
        let g = [0.3, -1.2, 2.0];
        let eps = 0.125;
        let a = reaction(g, [0.0; 3], &p);
        let b = reaction(g, [eps, 0.0, 0.0], &p);
        assert_eq!(b[0] - a[0], eps);
        assert_eq!(b[1], a[1]);
        assert_eq!(b[2], a[2]);
    }

    #[test]
    fn equilibrium_zeroes_the_reaction() {
        let p = HrParameters::<f64>::default();
        let eq = homogeneous_equilibrium(&p, -1.0).expect("converges");
        let f = reaction(eq, [0.0; 3], &p);
        for x in f {
            assert!(x.abs() < 1e-10, "{f:?}");
        }
    }

    #[test]
    fn parameter_validation() {
        let mut p = HrParameters::<f64>::default();
        p.validate().unwrap();
        p.c = -100.0;
        p.validate().unwrap();
        p.r = 0.0;
        assert!(matches!(p.validate(), Err(HrError::InvalidParameter { name: "r", .. })));
        let p = HrParameters::<f64> {
            j: 0.0,
            ..Default::default()
        };
        assert!(p.validate().is_err());
        p.validate_relaxed().unwrap();
    }

    #[test]
    fn zero_forcing_has_zero_bound() {
        let g = Grid::<f64>::default_1d();
        let f = Forcing::zero(&g);
        assert_eq!(translation_bound(&f, 16).unwrap(), 0.0);
    }

    #[test]
    fn constant_forcing_bound_is_exact() {
        let g = Grid::<f64>::interval(2.0, 40).unwrap();
        let f = Forcing::new(ForcingSpec::constant([1.5, 0.0, 0.0]), &g).unwrap();
        assert_relative_eq!(translation_bound(&f, 1).unwrap(), 2.25 * 2.0, max_relative = 1e-12);
    }

    #[test]
    fn unit_periodic_forcing_bound_is_one_half() {
        let g = Grid::<f64>::interval(1.0, 16).unwrap();
        let f = Forcing::new(ForcingSpec::periodic([1.0, 0.0, 0.0], 1.0, 0.0), &g).unwrap();
        assert_relative_eq!(translation_bound(&f, 64).unwrap(), 0.5, max_relative = 1e-12);
    }

    #[test]
    fn translation_bound_rejects_empty_lattice() {
        let g = Grid::<f64>::default_1d();
        assert!(translation_bound(&Forcing::zero(&g), 0).is_err());
    }

    #[test]
    fn eval_into_matches_eval_point_and_norms() {
        let g = Grid::<f64>::interval(1.7, 30).unwrap();
        let specs = [
            ForcingSpec::constant([0.3, -0.2, 0.1]),
            ForcingSpec::periodic([0.3, -0.2, 0.1], 0.4, 0.3),
            ForcingSpec::space_modulated([0.3, -0.2, 0.1], 0.4, 0.3),
            ForcingSpec::bounded_noise([0.3, -0.2, 0.1], 0.4, 99),
        ];
        for spec in specs {
            let f = Forcing::new(spec, &g).unwrap();
            let t = 2.345;
            let mut a = vec![0.0; g.len()];
            let mut b = vec![0.0; g.len()];
            let mut c = vec![0.0; g.len()];
            assert!(f.eval_into(t, [&mut a, &mut b, &mut c]));
            for idx in 0..g.len() {
                let pt = f.eval_point(t, g.coords(idx));
                assert!((pt[0] - a[idx]).abs() < 1e-12);
                assert!((pt[1] - b[idx]).abs() < 1e-12);
                assert!((pt[2] - c[idx]).abs() < 1e-12);
            }
            let n = f.component_norms_sq(t);
            assert_relative_eq!(n[0], g.inner_l2(&a, &a).unwrap(), max_relative = 1e-10, epsilon = 1e-15);
            assert_relative_eq!(n[2], g.inner_l2(&c, &c).unwrap(), max_relative = 1e-10, epsilon = 1e-15);
        }
    }

    #[test]
    fn bounded_noise_is_bounded_by_amplitude() {
        let g = Grid::<f64>::interval(1.0, 20).unwrap();
        let f = Forcing::new(ForcingSpec::bounded_noise([2.0, 1.0, 0.5], 1.0, 5), &g).unwrap();
        for k in 0..500 {
            let t = k as f64 * 0.173;
            for idx in 0..g.len() {
                let p = f.eval_point(t, g.coords(idx));
                assert!(p[0].abs() <= 2.0 + 1e-12);
                assert!(p[1].abs() <= 1.0 + 1e-12);
                assert!(p[2].abs() <= 0.5 + 1e-12);
            }
        }
        assert!(translation_bound(&f, 64).unwrap() <= (4.0 + 1.0 + 0.25) * g.measure());
    }

    proptest! {
        #[test]
        fn phi_matches_horner(u in -50.0f64..50.0, a in 0.1f64..10.0, b in 0.1f64..10.0) {
            let p = params(a, b, 1.0, 5.0);
            let horner = u * u * (a - b * u);
            let scale = (a * u * u).abs() + (b * u * u * u).abs();
            prop_assert!((phi(u, &p) - horner).abs() <= 1e-14 * scale.max(1.0));
        }

        #[test]
        fn noise_is_a_pure_function_of_seed(seed in any::<u64>(), t in -100.0f64..100.0) {
            let g = Grid::<f64>::interval(1.0, 8).unwrap();
            let spec = ForcingSpec::bounded_noise([1.0, 0.5, 0.25], 0.7, seed);
            let f1 = Forcing::new(spec, &g).unwrap();
            let f2 = Forcing::new(spec, &g).unwrap();
            for idx in 0..g.len() {
                let x = g.coords(idx);
                let a = f1.eval_point(t, x);
                let b = f2.eval_point(t, x);
                for i in 0..3 {
                    prop_assert_eq!(a[i].to_bits(), b[i].to_bits());
                }
            }
        }

        #[test]
        fn translation_bound_is_shift_invariant(shift in 0.0f64..10.0, freq in 0.2f64..3.0) {
            let g = Grid::<f64>::interval(1.0, 8).unwrap();
            let spec = ForcingSpec::space_modulated([1.0, 0.5, 0.0], freq, 0.2);
            let f0 = Forcing::new(spec, &g).unwrap();
            let f1 = Forcing::new(spec.shifted(shift), &g).unwrap();
            let b0 = translation_bound(&f0, DEFAULT_WINDOW_STARTS).unwrap();
            let b1 = translation_bound(&f1, DEFAULT_WINDOW_STARTS).unwrap();
            prop_assert!((b0 - b1).abs() <= 1e-3 * b0);
        }
    }
}
