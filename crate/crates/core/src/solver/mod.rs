//! The evolution process `S(t, τ)`: implicit–explicit time stepping of
//!
//! ```text
//! ∂g/∂t = A g + f(g) + p(t, x),   A = diag(d₁Δ, d₂Δ, d₃Δ)
//! ```
//!
//! plus a classical RK4 integrator for spatially homogeneous solutions, used
//! as an independent oracle.
//!
//! Step `n` starts at `t_n = τ + n·dt`. Whenever the explicit cubic term is
//! stiff on the current step (`dt · 3b · max u² > threshold`) the step is
//! replaced by a semi-implicit Euler step that treats `−b u³` as
//! `−b u_n² u_{n+1}`; multistep history is discarded afterwards.

mod diffusion;

pub use diffusion::{DiffusionMethod, ImplicitDiffusion};

use crate::error::{HrError, Result};
use crate::grid::{Grid, StateField};
use crate::model::{phi, Forcing, HrParameters};
use crate::scalar::Real;

/// Default step.
pub const DEFAULT_DT: f64 = 1e-3;
/// Default cap on the step count of one call.
pub const DEFAULT_MAX_STEPS: u64 = 10_000_000;
/// Any monitored norm beyond this aborts the run.
pub const BLOW_UP_THRESHOLD: f64 = 1e12;

/// Time discretisation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Scheme {
    /// Backward Euler diffusion, forward Euler reaction; input at `t_n`.
    ImexEuler,
    /// Crank–Nicolson diffusion, Adams–Bashforth reaction; input at the
    /// midpoint. The first step (and the first after a stabilised step) is
    /// an Euler step.
    ImexCnab2,
    /// Third-order additive Runge–Kutta ARS(3,4,3). One-step, so the
    /// discrete process keeps the cocycle property exactly.
    #[default]
    ImexArs343,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::ImexEuler => "imex-euler",
            Scheme::ImexCnab2 => "imex-cnab2",
            Scheme::ImexArs343 => "imex-ars343",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "imex-euler" => Some(Scheme::ImexEuler),
            "imex-cnab2" => Some(Scheme::ImexCnab2),
            "imex-ars343" => Some(Scheme::ImexArs343),
            _ => None,
        }
    }

    pub fn order(self) -> u32 {
        match self {
            Scheme::ImexEuler => 1,
            Scheme::ImexCnab2 => 2,
            Scheme::ImexArs343 => 3,
        }
    }

    fn stiffness_threshold(self) -> f64 {
        match self {
            Scheme::ImexCnab2 => 0.5,
            _ => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProcessConfig<S: Real = f64> {
    pub dt: S,
    pub scheme: Scheme,
    pub diffusion: DiffusionMethod,
    pub max_steps: u64,
    /// Record monitored norms every `stride` steps (the last step is always
    /// recorded).
    pub stride: usize,
    /// Keep a full snapshot every `snapshot_stride` steps. `None` keeps only
    /// the initial and final states.
    pub snapshot_stride: Option<usize>,
}

impl<S: Real> Default for ProcessConfig<S> {
    fn default() -> Self {
        Self {
            dt: S::lit(DEFAULT_DT),
            scheme: Scheme::default(),
            diffusion: DiffusionMethod::default(),
            max_steps: DEFAULT_MAX_STEPS,
            stride: 1,
            snapshot_stride: None,
        }
    }
}

impl<S: Real> ProcessConfig<S> {
    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_dt(mut self, dt: S) -> Self {
        self.dt = dt;
        self
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > S::zero()) || !self.dt.is_finite() {
            return Err(HrError::InvalidParameter {
                name: "dt",
                value: self.dt.to64(),
                reason: "must be positive and finite",
            });
        }
        if self.max_steps == 0 {
            return Err(HrError::InvalidParameter {
                name: "max_steps",
                value: 0.0,
                reason: "must be positive",
            });
        }
        if self.stride == 0 {
            return Err(HrError::InvalidParameter {
                name: "stride",
                value: 0.0,
                reason: "must be positive",
            });
        }
        if self.snapshot_stride == Some(0) {
            return Err(HrError::InvalidParameter {
                name: "snapshot_stride",
                value: 0.0,
                reason: "must be positive",
            });
        }
        Ok(())
    }

    /// Number of steps from `tau` to `t_end`; rejects spans that are not a
    /// whole number of steps.
    pub fn step_count(&self, tau: S, t_end: S) -> Result<u64> {
        let span = t_end - tau;
        if !span.is_finite() || span < S::zero() {
            return Err(HrError::MisalignedTimes {
                dt: self.dt.to64(),
                detail: format!("t_end {} precedes tau {}", t_end, tau),
            });
        }
        let ratio = (span / self.dt).to64();
        let n = ratio.round();
        let tol = S::epsilon().to64() * 64.0 * ratio.max(1.0);
        if (ratio - n).abs() > tol {
            return Err(HrError::MisalignedTimes {
                dt: self.dt.to64(),
                detail: format!("span {} is not a multiple of dt", span),
            });
        }
        let n = n as u64;
        if n > self.max_steps {
            return Err(HrError::StepLimit {
                steps: n,
                limit: self.max_steps,
            });
        }
        Ok(n)
    }
}

/// Norms recorded at one sample time.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Sample<S: Real = f64> {
    pub u_sq: S,
    pub v_sq: S,
    pub w_sq: S,
    pub grad_u_sq: S,
    pub grad_v_sq: S,
    pub grad_w_sq: S,
    pub l4_pow4: S,
    /// `‖p(t)‖²`.
    pub p_sq: S,
}

impl<S: Real> Sample<S> {
    pub fn measure(grid: &Grid<S>, g: &StateField<S>, forcing: &Forcing<S>, t: S) -> Self {
        Self {
            u_sq: grid.norm_sq_unchecked(&g.u),
            v_sq: grid.norm_sq_unchecked(&g.v),
            w_sq: grid.norm_sq_unchecked(&g.w),
            grad_u_sq: grid.grad_sq_unchecked(&g.u),
            grad_v_sq: grid.grad_sq_unchecked(&g.v),
            grad_w_sq: grid.grad_sq_unchecked(&g.w),
            l4_pow4: grid.l4_pow4_unchecked(&g.u),
            p_sq: forcing.norm_sq(t),
        }
    }

    /// `‖g‖²` in H.
    pub fn h_sq(&self) -> S {
        self.u_sq + self.v_sq + self.w_sq
    }

    /// `‖∇g‖²`.
    pub fn grad_sq(&self) -> S {
        self.grad_u_sq + self.grad_v_sq + self.grad_w_sq
    }

    /// `‖g‖²_E = ‖g‖² + ‖∇g‖²`.
    pub fn e_sq(&self) -> S {
        self.h_sq() + self.grad_sq()
    }

    fn guard(&self, step: u64, time: S) -> Result<()> {
        let limit = BLOW_UP_THRESHOLD;
        let checks = [
            ("norm_u", self.u_sq),
            ("norm_v", self.v_sq),
            ("norm_w", self.w_sq),
            ("norm_grad", self.grad_sq()),
            ("norm_l4", self.l4_pow4.sqrt()),
        ];
        for (monitor, sq) in checks {
            let value = sq.to64().sqrt();
            if !(value <= limit) {
                return Err(HrError::BlowUp {
                    step,
                    time: time.to64(),
                    monitor,
                    value,
                });
            }
        }
        Ok(())
    }
}

/// A sampled run of the process.
#[derive(Debug, Clone)]
pub struct Trajectory<S: Real = f64> {
    pub tau: S,
    pub dt: S,
    /// Step index of every sample.
    pub steps: Vec<u64>,
    pub times: Vec<S>,
    pub samples: Vec<Sample<S>>,
    pub snapshot_times: Vec<S>,
    pub snapshots: Vec<StateField<S>>,
    pub final_state: StateField<S>,
    /// Steps that took the stabilised branch.
    pub stabilized_steps: u64,
}

impl<S: Real> Trajectory<S> {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn t_end(&self) -> S {
        *self.times.last().expect("trajectory has at least one sample")
    }

    /// Index of the first sample with time `≥ t`.
    pub fn index_at_or_after(&self, t: S) -> Option<usize> {
        self.times.iter().position(|&s| s >= t)
    }
}

/// Two runs from nearby data, compared along the way.
#[derive(Debug, Clone)]
pub struct PairTrajectory<S: Real = f64> {
    pub tau: S,
    pub times: Vec<S>,
    pub diff_h_sq: Vec<S>,
    pub diff_e_sq: Vec<S>,
    pub final_states: (StateField<S>, StateField<S>),
}

/// Incremental access to a running integration.
pub struct Stepper<'p, S: Real> {
    process: &'p Process<S>,
    state: StateField<S>,
    tau: S,
    step: u64,
    ws: Workspace<S>,
    stabilized: u64,
}

impl<S: Real> Stepper<'_, S> {
    pub fn time(&self) -> S {
        self.tau + S::of(self.step as usize) * self.process.cfg.dt
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn state(&self) -> &StateField<S> {
        &self.state
    }

    pub fn into_state(self) -> StateField<S> {
        self.state
    }

    pub fn stabilized_steps(&self) -> u64 {
        self.stabilized
    }

    /// One step, then the H-norm blow-up guard.
    pub fn step(&mut self) -> Result<()> {
        self.step_unguarded();
        self.process.light_guard(&self.state, self.step, self.time())
    }

    /// Steps until `t_end`, which must be aligned with the current time.
    pub fn advance_to(&mut self, t_end: S) -> Result<()> {
        let n = self.process.cfg.step_count(self.time(), t_end)?;
        for _ in 0..n {
            self.step()?;
        }
        Ok(())
    }

    fn step_unguarded(&mut self) {
        let p = self.process;
        let t = self.time();
        let (g, ws) = (&mut self.state, &mut self.ws);
        if p.is_stiff(g) {
            p.stabilized_step(g, t, ws);
            ws.has_history = false;
            self.stabilized += 1;
        } else {
            match p.cfg.scheme {
                Scheme::ImexEuler => p.euler_step(g, t, ws),
                Scheme::ImexCnab2 => p.cnab2_step(g, t, ws),
                Scheme::ImexArs343 => p.ars_step(g, t, ws),
            }
        }
        self.step += 1;
    }
}

// ARS(3,4,3) tableaux.
const ARS_GAMMA: f64 = 0.435_866_521_508_459;

/// Explicit and implicit stage matrices, weights and nodes.
type Tableaux<S> = ([[S; 4]; 4], [[S; 4]; 4], [S; 4], [S; 4]);

fn ars_tables<S: Real>() -> Tableaux<S> {
    let g = ARS_GAMMA;
    let b1 = -1.5 * g * g + 4.0 * g - 0.25;
    let b2 = 1.5 * g * g - 5.0 * g + 1.25;
    let implicit = [
        [0.0, 0.0, 0.0, 0.0],
        [0.0, g, 0.0, 0.0],
        [0.0, (1.0 - g) / 2.0, g, 0.0],
        [0.0, b1, b2, g],
    ];
    let explicit = [
        [0.0, 0.0, 0.0, 0.0],
        [g, 0.0, 0.0, 0.0],
        [0.321_278_886_028_627_8, 0.396_654_374_725_601_7, 0.0, 0.0],
        [
            -0.105_858_296_071_879_7,
            0.552_929_148_035_939_8,
            0.552_929_148_035_939_8,
            0.0,
        ],
    ];
    let weights = [0.0, b1, b2, g];
    let nodes = [0.0, g, (1.0 + g) / 2.0, 1.0];
    let conv = |m: [[f64; 4]; 4]| m.map(|row| row.map(S::lit));
    (conv(explicit), conv(implicit), weights.map(S::lit), nodes.map(S::lit))
}

/// Reusable buffers for one running integration.
struct Workspace<S: Real> {
    n: usize,
    forcing: [Vec<S>; 3],
    rhs: [Vec<S>; 3],
    lap: Vec<S>,
    /// Explicit stage slopes `K̂ᵢ` (ARS) or previous reaction (CNAB2).
    stage: Vec<[Vec<S>; 3]>,
    /// Implicit stage slopes `A Yᵢ`.
    implicit: Vec<[Vec<S>; 3]>,
    scratch: Vec<S>,
    has_history: bool,
    forcing_dirty: bool,
}

impl<S: Real> Workspace<S> {
    fn new(n: usize) -> Self {
        let tri = || [vec![S::zero(); n], vec![S::zero(); n], vec![S::zero(); n]];
        Self {
            n,
            forcing: tri(),
            rhs: tri(),
            lap: vec![S::zero(); n],
            stage: (0..4).map(|_| tri()).collect(),
            implicit: (0..4).map(|_| tri()).collect(),
            scratch: Vec::new(),
            has_history: false,
            forcing_dirty: false,
        }
    }
}

/// A discretised process: grid, parameters, input and factored operators.
///
/// Immutable after construction and shareable across threads.
#[derive(Debug, Clone)]
pub struct Process<S: Real = f64> {
    grid: Grid<S>,
    params: HrParameters<S>,
    forcing: Forcing<S>,
    cfg: ProcessConfig<S>,
    /// `(I − dt A)`.
    backward: ImplicitDiffusion<S>,
    /// `(I − θ dt A)` for the scheme's own θ.
    scheme_op: Option<ImplicitDiffusion<S>>,
}

impl<S: Real> Process<S> {
    pub fn new(grid: &Grid<S>, params: &HrParameters<S>, forcing: &Forcing<S>, cfg: &ProcessConfig<S>) -> Result<Self> {
        params.validate_relaxed()?;
        cfg.validate()?;
        let d = params.diffusivities();
        let scaled = |theta: S| d.map(|di| theta * cfg.dt * di);
        let backward = ImplicitDiffusion::new(grid, scaled(S::one()), cfg.diffusion);
        let scheme_op = match cfg.scheme {
            Scheme::ImexEuler => None,
            Scheme::ImexCnab2 => Some(ImplicitDiffusion::new(grid, scaled(S::lit(0.5)), cfg.diffusion)),
            Scheme::ImexArs343 => Some(ImplicitDiffusion::new(grid, scaled(S::lit(ARS_GAMMA)), cfg.diffusion)),
        };
        Ok(Self {
            grid: grid.clone(),
            params: *params,
            forcing: forcing.clone(),
            cfg: *cfg,
            backward,
            scheme_op,
        })
    }

    pub fn grid(&self) -> &Grid<S> {
        &self.grid
    }

    pub fn params(&self) -> &HrParameters<S> {
        &self.params
    }

    pub fn forcing(&self) -> &Forcing<S> {
        &self.forcing
    }

    pub fn config(&self) -> &ProcessConfig<S> {
        &self.cfg
    }

    /// `S(t_end, τ) g_τ`, sampled per the configured strides.
    pub fn evolve(&self, g_tau: &StateField<S>, tau: S, t_end: S) -> Result<Trajectory<S>> {
        self.run(g_tau, tau, t_end, true)
    }

    /// `S(t_end, τ) g_τ` without recording samples. The blow-up guard only
    /// inspects H norms here.
    pub fn advance(&self, g_tau: &StateField<S>, tau: S, t_end: S) -> Result<StateField<S>> {
        Ok(self.run(g_tau, tau, t_end, false)?.final_state)
    }

    /// A step-by-step integrator starting from `g_tau` at `tau`.
    pub fn stepper(&self, g_tau: &StateField<S>, tau: S) -> Result<Stepper<'_, S>> {
        g_tau.check(&self.grid)?;
        if !g_tau.is_finite() {
            return Err(HrError::InvalidInput("initial state is not finite".into()));
        }
        if !tau.is_finite() {
            return Err(HrError::InvalidInput("tau is not finite".into()));
        }
        Ok(Stepper {
            process: self,
            state: g_tau.clone(),
            tau,
            step: 0,
            ws: Workspace::new(self.grid.len()),
            stabilized: 0,
        })
    }

    fn run(&self, g_tau: &StateField<S>, tau: S, t_end: S, record: bool) -> Result<Trajectory<S>> {
        let steps = self.cfg.step_count(tau, t_end)?;
        let mut st = self.stepper(g_tau, tau)?;
        let stride = self.cfg.stride as u64;
        let mut traj = Trajectory {
            tau,
            dt: self.cfg.dt,
            steps: vec![],
            times: vec![],
            samples: vec![],
            snapshot_times: vec![],
            snapshots: vec![],
            final_state: StateField {
                u: vec![],
                v: vec![],
                w: vec![],
            },
            stabilized_steps: 0,
        };
        if record {
            traj.steps.push(0);
            traj.times.push(tau);
            traj.samples
                .push(Sample::measure(&self.grid, g_tau, &self.forcing, tau));
            traj.snapshot_times.push(tau);
            traj.snapshots.push(g_tau.clone());
        }
        for _ in 0..steps {
            st.step_unguarded();
            let step = st.step;
            let t_next = st.time();
            let is_last = step == steps;
            if record && (step % stride == 0 || is_last) {
                let s = Sample::measure(&self.grid, &st.state, &self.forcing, t_next);
                s.guard(step, t_next)?;
                traj.steps.push(step);
                traj.times.push(t_next);
                traj.samples.push(s);
            } else {
                self.light_guard(&st.state, step, t_next)?;
            }
            if record {
                let keep = match self.cfg.snapshot_stride {
                    Some(k) => step % k as u64 == 0 || is_last,
                    None => is_last,
                };
                if keep {
                    traj.snapshot_times.push(t_next);
                    traj.snapshots.push(st.state.clone());
                }
            }
        }
        traj.stabilized_steps = st.stabilized;
        traj.final_state = st.state;
        Ok(traj)
    }

    /// Runs `g` and `g̃` side by side, recording `‖g − g̃‖²` and
    /// `‖g − g̃‖²_E` every `stride` steps.
    pub fn evolve_pair(
        &self,
        g: &StateField<S>,
        g_tilde: &StateField<S>,
        tau: S,
        t_end: S,
    ) -> Result<PairTrajectory<S>> {
        let steps = self.cfg.step_count(tau, t_end)?;
        let mut a = self.stepper(g, tau)?;
        let mut b = self.stepper(g_tilde, tau)?;
        let stride = self.cfg.stride as u64;
        let mut out = PairTrajectory {
            tau,
            times: vec![],
            diff_h_sq: vec![],
            diff_e_sq: vec![],
            final_states: (g.clone(), g_tilde.clone()),
        };
        let record = |a: &Stepper<S>, b: &Stepper<S>, out: &mut PairTrajectory<S>| {
            let d = a.state.sub(&b.state);
            out.times.push(a.time());
            let h = d.norm_h_sq(&self.grid);
            out.diff_h_sq.push(h);
            out.diff_e_sq.push(h + d.norm_grad_sq(&self.grid));
        };
        record(&a, &b, &mut out);
        for n in 1..=steps {
            a.step()?;
            b.step()?;
            if n % stride == 0 || n == steps {
                record(&a, &b, &mut out);
            }
        }
        out.final_states = (a.state, b.state);
        Ok(out)
    }

    fn light_guard(&self, g: &StateField<S>, step: u64, time: S) -> Result<()> {
        for (monitor, f) in [("norm_u", &g.u), ("norm_v", &g.v), ("norm_w", &g.w)] {
            let value = self.grid.norm_sq_unchecked(f).to64().sqrt();
            if !(value <= BLOW_UP_THRESHOLD) {
                return Err(HrError::BlowUp {
                    step,
                    time: time.to64(),
                    monitor,
                    value,
                });
            }
        }
        Ok(())
    }

    /// Explicit treatment is unsafe when `u` may reach a size within the step
    /// where `dt · 3b u²` exceeds the scheme's threshold.
    fn is_stiff(&self, g: &StateField<S>) -> bool {
        let p = &self.params;
        let dt = self.cfg.dt;
        let mut umax = S::zero();
        for i in 0..g.u.len() {
            let (u, v, w) = (g.u[i], g.v[i], g.w[i]);
            let reach = u.abs() + dt * (phi(u, p) + v - w + p.j).abs();
            umax = umax.max(reach * reach);
        }
        let rate = dt * S::lit(3.0) * p.b * umax;
        rate > S::lit(self.cfg.scheme.stiffness_threshold())
    }

    /// Writes the input at time `t` into `ws.forcing`, or zeros.
    fn load_forcing(&self, t: S, ws: &mut Workspace<S>) {
        let [a, b, c] = &mut ws.forcing;
        if !self.forcing.eval_into(t, [a, b, c]) && ws.forcing_dirty {
            for comp in ws.forcing.iter_mut() {
                comp.iter_mut().for_each(|x| *x = S::zero());
            }
        }
        ws.forcing_dirty = self.forcing.kind() != crate::model::ForcingKind::Zero;
    }

    /// `out = f(g) (+ p)` nodewise, `p` taken from `forcing` when given.
    fn reaction_into(&self, g: [&[S]; 3], forcing: Option<&[Vec<S>; 3]>, out: &mut [Vec<S>; 3]) {
        let p = *self.params();
        let [ou, ov, ow] = out;
        let it = g[0]
            .iter()
            .zip(g[1])
            .zip(g[2])
            .zip(ou.iter_mut().zip(ov.iter_mut()).zip(ow.iter_mut()));
        for (((&u, &v), &w), ((fu, fv), fw)) in it {
            let u2 = u * u;
            *fu = (p.a - p.b * u) * u2 + v - w + p.j;
            *fv = p.alpha - p.beta * u2 - v;
            *fw = p.q * (u - p.c) - p.r * w;
        }
        if let Some(f) = forcing {
            if self.forcing.kind() != crate::model::ForcingKind::Zero {
                for (o, fc) in out.iter_mut().zip(f) {
                    for (x, y) in o.iter_mut().zip(fc) {
                        *x += *y;
                    }
                }
            }
        }
    }

    fn euler_step(&self, g: &mut StateField<S>, t: S, ws: &mut Workspace<S>) {
        let dt = self.cfg.dt;
        self.load_forcing(t, ws);
        let mut rhs = std::mem::take(&mut ws.rhs);
        self.reaction_into(g.components(), Some(&ws.forcing), &mut rhs);
        for (comp, (x, r)) in g.components_mut().into_iter().zip(rhs.iter()).enumerate() {
            let _ = comp;
            for (xi, ri) in x.iter_mut().zip(r) {
                *xi += dt * *ri;
            }
        }
        self.solve_state(&self.backward, g, ws);
        ws.rhs = rhs;
    }

    fn cnab2_step(&self, g: &mut StateField<S>, t: S, ws: &mut Workspace<S>) {
        let dt = self.cfg.dt;
        let half = S::lit(0.5);
        // ws.stage[0] holds f(gₙ₋₁) and is rotated to f(gₙ)
        let mut current = std::mem::take(&mut ws.rhs);
        self.reaction_into(g.components(), None, &mut current);
        if !ws.has_history {
            self.load_forcing(t, ws);
            for (comp, x) in g.components_mut().into_iter().enumerate() {
                for i in 0..ws.n {
                    x[i] += dt * (current[comp][i] + ws.forcing[comp][i]);
                }
            }
            self.solve_state(&self.backward, g, ws);
        } else {
            self.load_forcing(t + half * dt, ws);
            let op = self.scheme_op.as_ref().expect("cnab2 operator");
            let d = self.params.diffusivities();
            let prev = &ws.stage[0];
            for (comp, x) in g.components_mut().into_iter().enumerate() {
                self.grid.laplacian_into(x, &mut ws.lap);
                for i in 0..ws.n {
                    let extrap = S::lit(1.5) * current[comp][i] - half * prev[comp][i];
                    x[i] += half * dt * d[comp] * ws.lap[i] + dt * (extrap + ws.forcing[comp][i]);
                }
            }
            self.solve_state(op, g, ws);
        }
        std::mem::swap(&mut ws.stage[0], &mut current);
        ws.rhs = current;
        ws.has_history = true;
    }

    fn ars_step(&self, g: &mut StateField<S>, t: S, ws: &mut Workspace<S>) {
        let (ex, im, weights, nodes) = ars_tables::<S>();
        let dt = self.cfg.dt;
        let gamma_dt = S::lit(ARS_GAMMA) * dt;
        let op = self.scheme_op.as_ref().expect("ars operator");
        let mut stage = std::mem::take(&mut ws.stage);
        let mut implicit = std::mem::take(&mut ws.implicit);
        let mut y = std::mem::take(&mut ws.rhs);

        self.load_forcing(t, ws);
        self.reaction_into(g.components(), Some(&ws.forcing), &mut stage[0]);
        for i in 1..4 {
            let e = ex[i].map(|a| a * dt);
            let m = im[i].map(|a| a * dt);
            for comp in 0..3 {
                let base = g.components()[comp];
                let (k0, k1, k2) = (&stage[0][comp], &stage[1][comp], &stage[2][comp]);
                let (l1, l2) = (&implicit[1][comp], &implicit[2][comp]);
                let yc = &mut y[comp];
                // Rᵢ = gₙ + dt Σⱼ (âᵢⱼ K̂ⱼ + aᵢⱼ A Yⱼ)
                match i {
                    1 => {
                        for ((yv, &b), &a0) in yc.iter_mut().zip(base).zip(k0) {
                            *yv = b + e[0] * a0;
                        }
                    }
                    2 => {
                        for ((((yv, &b), &a0), &a1), &c1) in yc.iter_mut().zip(base).zip(k0).zip(k1).zip(l1) {
                            *yv = b + e[0] * a0 + e[1] * a1 + m[1] * c1;
                        }
                    }
                    _ => {
                        for ((((((yv, &b), &a0), &a1), &a2), &c1), &c2) in
                            yc.iter_mut().zip(base).zip(k0).zip(k1).zip(k2).zip(l1).zip(l2)
                        {
                            *yv = b + e[0] * a0 + e[1] * a1 + e[2] * a2 + m[1] * c1 + m[2] * c2;
                        }
                    }
                }
                implicit[i][comp].copy_from_slice(yc);
            }
            {
                let [a, b, c] = &mut y;
                op.solve_all([a, b, c], &mut ws.scratch);
            }
            // A Yᵢ = (Yᵢ − Rᵢ) / (γ dt) once Yᵢ is solved from Rᵢ
            for (imp, yc) in implicit[i].iter_mut().zip(&y) {
                for (iv, yv) in imp.iter_mut().zip(yc.iter()) {
                    *iv = (*yv - *iv) / gamma_dt;
                }
            }
            self.load_forcing(t + nodes[i] * dt, ws);
            let [a, b, c] = &y;
            self.reaction_into([a, b, c], Some(&ws.forcing), &mut stage[i]);
        }
        let w = weights.map(|b| b * dt);
        for (comp, x) in g.components_mut().into_iter().enumerate() {
            let (k1, k2, k3) = (&stage[1][comp], &stage[2][comp], &stage[3][comp]);
            let (l1, l2, l3) = (&implicit[1][comp], &implicit[2][comp], &implicit[3][comp]);
            for ((((((xv, &a1), &a2), &a3), &c1), &c2), &c3) in
                x.iter_mut().zip(k1).zip(k2).zip(k3).zip(l1).zip(l2).zip(l3)
            {
                *xv += w[1] * (a1 + c1) + w[2] * (a2 + c2) + w[3] * (a3 + c3);
            }
        }
        ws.stage = stage;
        ws.implicit = implicit;
        ws.rhs = y;
    }

    /// Euler step with the cubic damping taken at the new time level.
    #[allow(clippy::needless_range_loop)]
    fn stabilized_step(&self, g: &mut StateField<S>, t: S, ws: &mut Workspace<S>) {
        let dt = self.cfg.dt;
        let p = &self.params;
        self.load_forcing(t + dt, ws);
        let f = &ws.forcing;
        let one = S::one();
        for i in 0..ws.n {
            let (u, v, w) = (g.u[i], g.v[i], g.w[i]);
            let u_new = solve_cubic(dt * p.b, dt * p.a, u + dt * (v - w + p.j + f[0][i]), u);
            g.u[i] = u_new;
            g.v[i] = (v + dt * (p.alpha - p.beta * u_new * u_new + f[1][i])) / (one + dt);
            g.w[i] = (w + dt * (p.q * (u_new - p.c) + f[2][i])) / (one + dt * p.r);
        }
        self.solve_state(&self.backward, g, ws);
    }

    fn solve_state(&self, op: &ImplicitDiffusion<S>, g: &mut StateField<S>, ws: &mut Workspace<S>) {
        let [a, b, c] = g.components_mut();
        op.solve_all([a, b, c], &mut ws.scratch);
    }
}

/// Root of `x + c3 x³ − c2 x² = rhs`, monotone for `c2² < 3 c3`. Newton
/// safeguarded by bisection on a bracket that always contains the root.
fn solve_cubic<S: Real>(c3: S, c2: S, rhs: S, guess: S) -> S {
    let one = S::one();
    let h = |x: S| x + x * x * (c3 * x - c2) - rhs;
    let mut lo = rhs.min(S::zero()) - one;
    let mut hi = rhs.max(c2 / c3) + one;
    let mut x = if rhs.abs() * c3 > one {
        (rhs / c3).cbrt() + c2 / (S::lit(3.0) * c3)
    } else {
        guess
    };
    if !(x > lo && x < hi) {
        x = (lo + hi) / S::lit(2.0);
    }
    for _ in 0..200 {
        let hx = h(x);
        if hx == S::zero() {
            return x;
        }
        if hx < S::zero() {
            lo = x;
        } else {
            hi = x;
        }
        let slope = one + x * (S::lit(3.0) * c3 * x - S::lit(2.0) * c2);
        let mut next = x - hx / slope;
        if (next - x).abs() <= S::epsilon() * S::lit(4.0) * x.abs().max(one) {
            return next;
        }
        if !(next > lo && next < hi) {
            next = lo + (hi - lo) / S::lit(2.0);
        }
        x = next;
    }
    x
}

/// One-shot `S(t_end, τ) g_τ` with the given setup.
pub fn evolve<S: Real>(
    g_tau: &StateField<S>,
    tau: S,
    t_end: S,
    params: &HrParameters<S>,
    forcing: &Forcing<S>,
    grid: &Grid<S>,
    cfg: &ProcessConfig<S>,
) -> Result<Trajectory<S>> {
    Process::new(grid, params, forcing, cfg)?.evolve(g_tau, tau, t_end)
}

/// Homogeneous solution sampled at the PDE step times.
#[derive(Debug, Clone, PartialEq)]
pub struct OdeSeries<S: Real = f64> {
    pub times: Vec<S>,
    pub states: Vec<[S; 3]>,
}

/// Classical RK4 for the spatially homogeneous system at step `dt / 10`,
/// with the input evaluated at the origin of the domain.
pub fn evolve_ode<S: Real>(
    g0: [S; 3],
    tau: S,
    t_end: S,
    params: &HrParameters<S>,
    forcing: &Forcing<S>,
    dt: S,
) -> Result<OdeSeries<S>> {
    let cfg = ProcessConfig {
        dt,
        ..ProcessConfig::default()
    };
    cfg.validate()?;
    let steps = cfg.step_count(tau, t_end)?;
    const SUB: usize = 10;
    let h = dt / S::of(SUB);
    let origin = [S::zero(); 3];
    let rhs = |t: S, g: [S; 3]| crate::model::reaction(g, forcing.eval_point(t, origin), params);
    let mut g = g0;
    let mut out = OdeSeries {
        times: vec![tau],
        states: vec![g0],
    };
    let two = S::lit(2.0);
    let six = S::lit(6.0);
    for n in 0..steps {
        let t0 = tau + S::of(n as usize) * dt;
        for m in 0..SUB {
            let t = t0 + S::of(m) * h;
            let k1 = rhs(t, g);
            let k2 = rhs(t + h / two, add(g, k1, h / two));
            let k3 = rhs(t + h / two, add(g, k2, h / two));
            let k4 = rhs(t + h, add(g, k3, h));
            for i in 0..3 {
                g[i] += h / six * (k1[i] + two * k2[i] + two * k3[i] + k4[i]);
            }
        }
        let t1 = tau + S::of((n + 1) as usize) * dt;
        let norm = g.iter().map(|x| x.to64() * x.to64()).sum::<f64>().sqrt();
        if !(norm <= BLOW_UP_THRESHOLD) {
            return Err(HrError::BlowUp {
                step: n + 1,
                time: t1.to64(),
                monitor: "ode_state",
                value: norm,
            });
        }
        out.times.push(t1);
        out.states.push(g);
    }
    Ok(out)
}

#[inline]
fn add<S: Real>(g: [S; 3], k: [S; 3], h: S) -> [S; 3] {
    [g[0] + h * k[0], g[1] + h * k[1], g[2] + h * k[2]]
}

/// `‖S(t, s) S(s, τ) g − S(t, τ) g‖` in H.
pub fn cocycle_check<S: Real>(process: &Process<S>, g: &StateField<S>, tau: S, s: S, t: S) -> Result<S> {
    if !(tau <= s && s <= t) {
        return Err(HrError::MisalignedTimes {
            dt: process.config().dt.to64(),
            detail: format!("need tau <= s <= t, got {tau}, {s}, {t}"),
        });
    }
    let cfg = process.config();
    cfg.step_count(tau, s)?;
    cfg.step_count(s, t)?;
    let mid = process.advance(g, tau, s)?;
    let composed = process.advance(&mid, s, t)?;
    let direct = process.advance(g, tau, t)?;
    Ok(composed.sub(&direct).norm_h(process.grid()))
}
