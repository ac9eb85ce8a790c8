//! Pullback dynamics: ensembles evolved from receding initial times,
//! attractor fibres as point clouds, semi-Hausdorff distances, attraction
//! rates and box-counting dimension.

use std::collections::HashSet;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{HrError, Result};
use crate::estimates::linear_fit;
use crate::grid::{Grid, StateField};
use crate::sampling;
use crate::scalar::Real;
use crate::solver::Process;

/// Default pullback horizons.
pub const DEFAULT_HORIZONS: [f64; 5] = [5.0, 10.0, 20.0, 40.0, 80.0];
/// Default two-sided cloud convergence tolerance, H norm.
pub const TOL_ATTR: f64 = 1e-4;
/// Default box sizes in projection space.
pub const DEFAULT_SCALES: [f64; 5] = [0.5, 0.25, 0.125, 0.0625, 0.03125];
/// Clouds narrower than this are points.
pub const DEGENERATE_DIAMETER: f64 = 1e-8;
/// Smallest cloud accepted by [`box_counting_dimension`].
pub const MIN_BOX_CLOUD: usize = 16;
/// Coordinates of [`project`].
pub const PROJECTION_DIM: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum NormKind {
    H,
    E,
}

impl NormKind {
    pub fn of<S: Real>(self, grid: &Grid<S>, g: &StateField<S>) -> S {
        match self {
            NormKind::H => g.norm_h(grid),
            NormKind::E => g.norm_e(grid),
        }
    }
}

/// How the members of an [`Ensemble`] were drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnsembleSource {
    /// Squared radius of the sampled ball.
    pub radius_sq: f64,
    pub norm: NormKind,
    pub seed: u64,
    /// Members lie on the bounding sphere rather than inside the ball.
    pub on_sphere: bool,
}

/// Finite sample of a bounded set `B`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble<S: Real = f64> {
    members: Vec<StateField<S>>,
    source: Option<EnsembleSource>,
}

impl<S: Real> Ensemble<S> {
    /// Wraps explicit members.
    pub fn from_members(grid: &Grid<S>, members: Vec<StateField<S>>) -> Result<Self> {
        if members.is_empty() {
            return Err(HrError::EmptyCloud);
        }
        for m in &members {
            m.check(grid)?;
        }
        Ok(Self { members, source: None })
    }

    /// `count` smooth random states with squared norm exactly `radius_sq`.
    pub fn sphere(grid: &Grid<S>, radius_sq: S, norm: NormKind, count: usize, seed: u64) -> Result<Self> {
        Self::draw(grid, radius_sq, norm, count, seed, true)
    }

    /// `count` smooth random states with squared norm uniform in `[0, radius_sq]`.
    pub fn ball(grid: &Grid<S>, radius_sq: S, norm: NormKind, count: usize, seed: u64) -> Result<Self> {
        Self::draw(grid, radius_sq, norm, count, seed, false)
    }

    fn draw(grid: &Grid<S>, radius_sq: S, norm: NormKind, count: usize, seed: u64, on_sphere: bool) -> Result<Self> {
        if count == 0 {
            return Err(HrError::InvalidParameter {
                name: "members",
                value: 0.0,
                reason: "an ensemble needs at least one member",
            });
        }
        if !(radius_sq >= S::zero()) || !radius_sq.is_finite() {
            return Err(HrError::InvalidParameter {
                name: "radius_sq",
                value: radius_sq.to64(),
                reason: "must be nonnegative and finite",
            });
        }
        let members = (0..count)
            .map(|i| {
                let mut rng = sampling::rng(sampling::child_seed(seed, i as u64));
                let r2 = if on_sphere {
                    radius_sq
                } else {
                    radius_sq * S::lit(rng.gen_range(0.0..=1.0))
                };
                match norm {
                    NormKind::H => sampling::on_sphere(grid, r2, &mut rng),
                    NormKind::E => sampling::on_sphere_e(grid, r2, &mut rng),
                }
            })
            .collect();
        Ok(Self {
            members,
            source: Some(EnsembleSource {
                radius_sq: radius_sq.to64(),
                norm,
                seed,
                on_sphere,
            }),
        })
    }

    /// Sampling of `{‖g‖² ≤ K₁}`: the zero field plus `per_level` states at
    /// each of `‖g‖² = θK₁`, `θ ∈ {0.1, 0.5, 0.9}`.
    pub fn absorbing_ball(grid: &Grid<S>, k1: S, per_level: usize, seed: u64) -> Result<Self> {
        if per_level == 0 {
            return Err(HrError::InvalidParameter {
                name: "per_level",
                value: 0.0,
                reason: "must be positive",
            });
        }
        let mut members = vec![StateField::zeros(grid)];
        for (level, theta) in [0.1, 0.5, 0.9].into_iter().enumerate() {
            for i in 0..per_level {
                let idx = (level * per_level + i) as u64;
                let mut rng = sampling::rng(sampling::child_seed(seed, idx));
                members.push(sampling::on_sphere(grid, S::lit(theta) * k1, &mut rng));
            }
        }
        Ok(Self {
            members,
            source: Some(EnsembleSource {
                radius_sq: k1.to64(),
                norm: NormKind::H,
                seed,
                on_sphere: false,
            }),
        })
    }

    pub fn members(&self) -> &[StateField<S>] {
        &self.members
    }

    pub fn into_members(self) -> Vec<StateField<S>> {
        self.members
    }

    pub fn source(&self) -> Option<&EnsembleSource> {
        self.source.as_ref()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// `max ‖g‖²` over the members.
    pub fn max_norm_sq(&self, grid: &Grid<S>, norm: NormKind) -> S {
        self.members
            .iter()
            .map(|g| {
                let n = norm.of(grid, g);
                n * n
            })
            .fold(S::zero(), |a, b| a.max(b))
    }
}

/// `S(τ, τ−t) g` for every member, in parallel. Forcing is evaluated at the
/// true absolute times.
pub fn pullback_evolve<S: Real>(process: &Process<S>, ensemble: &Ensemble<S>, tau: S, t: S) -> Result<Ensemble<S>> {
    if !(t >= S::zero()) {
        return Err(HrError::InvalidParameter {
            name: "horizon",
            value: t.to64(),
            reason: "must be nonnegative",
        });
    }
    let members = ensemble
        .members
        .par_iter()
        .enumerate()
        .map(|(i, g)| {
            process.advance(g, tau - t, tau).map_err(|e| HrError::Member {
                member: i,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Ensemble {
        members,
        source: ensemble.source,
    })
}

/// `max_{a∈A} min_{b∈B} ‖a − b‖`.
pub fn semihausdorff<S: Real>(grid: &Grid<S>, a: &[StateField<S>], b: &[StateField<S>], norm: NormKind) -> Result<S> {
    if a.is_empty() || b.is_empty() {
        return Err(HrError::EmptyCloud);
    }
    for g in a.iter().chain(b) {
        g.check(grid)?;
    }
    let per_a: Vec<S> = a
        .par_iter()
        .map(|x| {
            b.iter()
                .map(|y| norm.of(grid, &x.sub(y)))
                .fold(S::infinity(), |m, d| m.min(d))
        })
        .collect();
    Ok(per_a.into_iter().fold(S::zero(), |m, d| m.max(d)))
}

/// `max` of both semi-Hausdorff distances.
pub fn hausdorff<S: Real>(grid: &Grid<S>, a: &[StateField<S>], b: &[StateField<S>], norm: NormKind) -> Result<S> {
    Ok(semihausdorff(grid, a, b, norm)?.max(semihausdorff(grid, b, a, norm)?))
}

/// Approximate fibre `A(τ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttractorCloud<S: Real = f64> {
    pub tau: S,
    pub members: Vec<StateField<S>>,
    pub horizon: S,
    /// `(tᵢ₊₁, d(cloud(tᵢ₊₁), cloud(tᵢ)))`, two-sided, H norm.
    pub history: Vec<(S, S)>,
    pub converged: bool,
    pub tol_attr: S,
}

impl<S: Real> AttractorCloud<S> {
    /// Largest pairwise H distance.
    pub fn diameter(&self, grid: &Grid<S>) -> S {
        let mut d = S::zero();
        for (i, a) in self.members.iter().enumerate() {
            for b in &self.members[i + 1..] {
                d = d.max(a.sub(b).norm_h(grid));
            }
        }
        d
    }

    /// History nonincreasing after its peak, within relative `noise`.
    pub fn history_settles(&self, noise: S) -> bool {
        let d: Vec<S> = self.history.iter().map(|h| h.1).collect();
        nonincreasing_after_peak(&d, noise, self.tol_attr)
    }
}

/// Every value after the maximum stays below `(1 + noise)` times each earlier
/// post-peak value, ignoring values under `floor`.
pub fn nonincreasing_after_peak<S: Real>(series: &[S], noise: S, floor: S) -> bool {
    let Some(peak) = series
        .iter()
        .enumerate()
        .fold(None, |acc: Option<(usize, S)>, (i, &x)| match acc {
            Some((_, m)) if m >= x => acc,
            _ => Some((i, x)),
        })
        .map(|p| p.0)
    else {
        return true;
    };
    let mut running = series[peak];
    for &x in &series[peak + 1..] {
        if x > running * (S::one() + noise) && x > floor {
            return false;
        }
        running = running.min(x);
    }
    true
}

/// Pulls `sampling` back over each horizon and keeps the largest-horizon
/// image. Converged when two successive clouds are within `tol_attr` both
/// ways; non-convergence is reported in the result.
pub fn approximate_attractor<S: Real>(
    process: &Process<S>,
    tau: S,
    horizons: &[S],
    sampling: &Ensemble<S>,
    tol_attr: S,
) -> Result<AttractorCloud<S>> {
    if horizons.is_empty() || horizons.windows(2).any(|w| !(w[1] > w[0])) || !(horizons[0] >= S::zero()) {
        return Err(HrError::InvalidInput(
            "horizons must be nonnegative and increasing".into(),
        ));
    }
    let grid = process.grid();
    let clouds: Vec<Vec<StateField<S>>> = if process.forcing().is_time_constant() {
        autonomous_clouds(process, sampling, tau, horizons)?
    } else {
        horizons
            .iter()
            .map(|&t| pullback_evolve(process, sampling, tau, t).map(Ensemble::into_members))
            .collect::<Result<_>>()?
    };
    let mut history = Vec::with_capacity(horizons.len().saturating_sub(1));
    for i in 1..clouds.len() {
        let d = hausdorff(grid, &clouds[i], &clouds[i - 1], NormKind::H)?;
        history.push((horizons[i], d));
    }
    let converged = history.last().is_some_and(|h| h.1 <= tol_attr);
    Ok(AttractorCloud {
        tau,
        members: clouds.into_iter().last().expect("nonempty horizons"),
        horizon: *horizons.last().expect("nonempty horizons"),
        history,
        converged,
        tol_attr,
    })
}

/// With time-constant forcing `S(τ, τ−t) = S(τ₀+t, τ₀)` for any `τ₀`, so one
/// forward run per member passes through every horizon.
fn autonomous_clouds<S: Real>(
    process: &Process<S>,
    sampling: &Ensemble<S>,
    tau: S,
    horizons: &[S],
) -> Result<Vec<Vec<StateField<S>>>> {
    let t0 = tau - *horizons.last().expect("nonempty horizons");
    let per_member: Vec<Vec<StateField<S>>> = sampling
        .members
        .par_iter()
        .enumerate()
        .map(|(i, g)| {
            let mut out = Vec::with_capacity(horizons.len());
            let mut state = g.clone();
            let mut at = t0;
            for &h in horizons {
                let target = t0 + h;
                state = process.advance(&state, at, target).map_err(|e| HrError::Member {
                    member: i,
                    source: Box::new(e),
                })?;
                at = target;
                out.push(state.clone());
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mut clouds = vec![Vec::with_capacity(per_member.len()); horizons.len()];
    for member in per_member {
        for (cloud, state) in clouds.iter_mut().zip(member) {
            cloud.push(state);
        }
    }
    Ok(clouds)
}

/// `d(S(τ, τ−h)B, A(τ))` for each horizon `h`, in the H norm.
pub fn attraction_profile<S: Real>(
    process: &Process<S>,
    set: &Ensemble<S>,
    fiber: &AttractorCloud<S>,
    horizons: &[S],
) -> Result<Vec<S>> {
    if horizons.is_empty() || horizons.windows(2).any(|w| !(w[1] > w[0])) || !(horizons[0] >= S::zero()) {
        return Err(HrError::InvalidInput(
            "horizons must be nonnegative and increasing".into(),
        ));
    }
    let tau = fiber.tau;
    let clouds: Vec<Vec<StateField<S>>> = if process.forcing().is_time_constant() {
        autonomous_clouds(process, set, tau, horizons)?
    } else {
        horizons
            .iter()
            .map(|&t| pullback_evolve(process, set, tau, t).map(Ensemble::into_members))
            .collect::<Result<_>>()?
    };
    clouds
        .iter()
        .map(|c| semihausdorff(process.grid(), c, &fiber.members, NormKind::H))
        .collect()
}

/// Least-squares exponential attraction rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateFit<S: Real = f64> {
    pub sigma: S,
    pub residual: S,
    pub points: usize,
}

/// `σ̂ = −slope` of `ln d` against `t`; nonpositive distances are dropped.
pub fn attraction_rate<S: Real>(horizons: &[S], distances: &[S]) -> Result<RateFit<S>> {
    if horizons.len() != distances.len() {
        return Err(HrError::ShapeMismatch {
            expected: horizons.len(),
            found: distances.len(),
        });
    }
    let pts: Vec<(S, S)> = horizons
        .iter()
        .zip(distances)
        .filter(|(_, &d)| d > S::zero() && d.is_finite())
        .map(|(&t, &d)| (t, d.ln()))
        .collect();
    if pts.len() < 4 {
        return Err(HrError::InsufficientData(format!(
            "{} positive distances, need 4",
            pts.len()
        )));
    }
    let (slope, residual) =
        linear_fit(&pts).ok_or_else(|| HrError::InsufficientData("horizons are not distinct".into()))?;
    Ok(RateFit {
        sigma: -slope,
        residual,
        points: pts.len(),
    })
}

/// Leading cosine coefficients: `u` modes 0..3, `v` modes 0..3, `w` modes 0..2.
pub fn project<S: Real>(grid: &Grid<S>, g: &StateField<S>) -> Result<[S; PROJECTION_DIM]> {
    let mut out = [S::zero(); PROJECTION_DIM];
    let layout: [(&[S], usize); PROJECTION_DIM] = [
        (&g.u, 0),
        (&g.u, 1),
        (&g.u, 2),
        (&g.v, 0),
        (&g.v, 1),
        (&g.v, 2),
        (&g.w, 0),
        (&g.w, 1),
    ];
    for (o, (f, k)) in out.iter_mut().zip(layout) {
        *o = grid.cosine_coefficient(f, k)?;
    }
    Ok(out)
}

/// Box counts and fitted dimension.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoxCount<S: Real = f64> {
    pub dimension: S,
    pub scales: Vec<S>,
    pub counts: Vec<usize>,
    pub diameter: S,
}

/// Log-log slope of occupied boxes against inverse box size. Boxes are
/// anchored at the coordinate-wise minimum of the cloud.
pub fn box_counting_dimension<S: Real>(points: &[Vec<S>], scales: &[S]) -> Result<BoxCount<S>> {
    if points.is_empty() {
        return Err(HrError::EmptyCloud);
    }
    let dim = points[0].len();
    if let Some(p) = points.iter().find(|p| p.len() != dim) {
        return Err(HrError::ShapeMismatch {
            expected: dim,
            found: p.len(),
        });
    }
    if points.iter().flatten().any(|x| !x.is_finite()) {
        return Err(HrError::InvalidInput("cloud has non-finite coordinates".into()));
    }
    let mut lo = points[0].clone();
    for p in points {
        for (l, &x) in lo.iter_mut().zip(p) {
            *l = l.min(x);
        }
    }
    let mut diameter = S::zero();
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            let d2: S = a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum();
            diameter = diameter.max(d2.sqrt());
        }
    }
    if diameter < S::lit(DEGENERATE_DIAMETER) {
        return Ok(BoxCount {
            dimension: S::zero(),
            scales: scales.to_vec(),
            counts: vec![1; scales.len()],
            diameter,
        });
    }
    if points.len() < MIN_BOX_CLOUD {
        return Err(HrError::InsufficientData(format!(
            "{} points, need {MIN_BOX_CLOUD}",
            points.len()
        )));
    }
    if scales.len() < 2 || scales.iter().any(|&s| !(s > S::zero())) {
        return Err(HrError::InvalidInput("need at least two positive scales".into()));
    }
    let counts: Vec<usize> = scales
        .iter()
        .map(|&eps| {
            let boxes: HashSet<Vec<i64>> = points
                .iter()
                .map(|p| {
                    p.iter()
                        .zip(&lo)
                        .map(|(&x, &l)| ((x - l) / eps).floor().to64() as i64)
                        .collect()
                })
                .collect();
            boxes.len()
        })
        .collect();
    let pts: Vec<(S, S)> = scales
        .iter()
        .zip(&counts)
        .map(|(&eps, &n)| (-eps.ln(), S::of(n).ln()))
        .collect();
    let (slope, _) = linear_fit(&pts).ok_or_else(|| HrError::InvalidInput("scales must be distinct".into()))?;
    Ok(BoxCount {
        dimension: slope,
        scales: scales.to_vec(),
        counts,
        diameter,
    })
}

/// [`box_counting_dimension`] of the projected fibre.
pub fn fiber_dimension<S: Real>(grid: &Grid<S>, cloud: &[StateField<S>], scales: &[S]) -> Result<BoxCount<S>> {
    let pts = cloud
        .iter()
        .map(|g| project(grid, g).map(|p| p.to_vec()))
        .collect::<Result<Vec<_>>>()?;
    box_counting_dimension(&pts, scales)
}

/// `(d(S(τ+Δ,τ)A(τ), A(τ+Δ)), d(A(τ+Δ), S(τ+Δ,τ)A(τ)))` in the H norm.
pub fn invariance_distances<S: Real>(
    process: &Process<S>,
    fiber: &AttractorCloud<S>,
    later: &AttractorCloud<S>,
) -> Result<(S, S)> {
    let delta = later.tau - fiber.tau;
    let ens = Ensemble {
        members: fiber.members.clone(),
        source: None,
    };
    let image = pullback_evolve(process, &ens, later.tau, delta)?;
    let grid = process.grid();
    Ok((
        semihausdorff(grid, image.members(), &later.members, NormKind::H)?,
        semihausdorff(grid, &later.members, image.members(), NormKind::H)?,
    ))
}
