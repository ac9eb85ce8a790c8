//! Acceptance suite. One line per criterion; exits nonzero if any fails.
//!
//! `cargo test --test acceptance -- 9 11` runs a subset by number.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use tempfile::TempDir;

use hrlab::estimates::{
    bred_pairs, compute_constants, compute_tb, excess_energy_decay_rate, measure_smoothing, monitor_absorbing,
    monitor_energy, monitor_gronwall, monitor_h1_absorbing, monitor_lipschitz_h, monitor_time_holder,
    reference_energy_level, MeasuredConstants, TheoryConstants,
};
use hrlab::model::{slow_manifold_point, translation_bound, DEFAULT_WINDOW_STARTS};
use hrlab::pullback::{
    approximate_attractor, attraction_profile, attraction_rate, box_counting_dimension, fiber_dimension, hausdorff,
    invariance_distances, nonincreasing_after_peak, AttractorCloud, Ensemble, NormKind, DEFAULT_HORIZONS,
    DEFAULT_SCALES, TOL_ATTR,
};
use hrlab::sampling::{child_seed, on_sphere, rng, unit_direction};
use hrlab::solver::{cocycle_check, evolve_ode, Process, ProcessConfig, Scheme, Trajectory};
use hrlab::{Forcing, ForcingSpec, Grid, HrError, HrParameters, StateField};
use hrlab_cli::{run, Command, Options};

type Outcome = Result<(bool, String), HrError>;

struct Criterion {
    number: usize,
    name: &'static str,
    check: fn() -> Outcome,
}

const CRITERIA: [Criterion; 15] = [
    Criterion {
        number: 1,
        name: "discrete operator",
        check: discrete_operator,
    },
    Criterion {
        number: 2,
        name: "oracle equivalence",
        check: oracle_equivalence,
    },
    Criterion {
        number: 3,
        name: "cocycle and identity",
        check: cocycle_identity,
    },
    Criterion {
        number: 4,
        name: "energy inequality",
        check: energy_inequality,
    },
    Criterion {
        number: 5,
        name: "gronwall bound and decay",
        check: gronwall_decay,
    },
    Criterion {
        number: 6,
        name: "pullback absorbing",
        check: pullback_absorbing,
    },
    Criterion {
        number: 7,
        name: "H1 absorbing",
        check: h1_absorbing,
    },
    Criterion {
        number: 8,
        name: "H-Lipschitz",
        check: lipschitz,
    },
    Criterion {
        number: 9,
        name: "smoothing",
        check: smoothing,
    },
    Criterion {
        number: 10,
        name: "time Hoelder",
        check: time_holder,
    },
    Criterion {
        number: 11,
        name: "pullback attraction",
        check: attraction,
    },
    Criterion {
        number: 12,
        name: "fiber invariance",
        check: invariance,
    },
    Criterion {
        number: 13,
        name: "dimension sanity",
        check: dimension,
    },
    Criterion {
        number: 14,
        name: "convergence orders",
        check: convergence_orders,
    },
    Criterion {
        number: 15,
        name: "determinism",
        check: determinism,
    },
];

fn main() -> ExitCode {
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for c in CRITERIA.iter().filter(|c| only.is_empty() || only.contains(&c.number)) {
        let start = Instant::now();
        let (ok, detail) = match (c.check)() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        if !ok {
            failed += 1;
        }
        println!(
            "{} criterion {:>2} {}: {} [{:.1}s]",
            if ok { "PASS" } else { "FAIL" },
            c.number,
            c.name,
            detail,
            start.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}

fn periodic() -> ForcingSpec<f64> {
    ForcingSpec::periodic([0.5, 0.2, 0.1], 0.5, 0.0)
}

fn process(
    grid: &Grid<f64>,
    params: &HrParameters<f64>,
    spec: ForcingSpec<f64>,
    cfg: ProcessConfig<f64>,
) -> Process<f64> {
    let forcing = Forcing::new(spec, grid).expect("valid forcing");
    Process::new(grid, params, &forcing, &cfg).expect("valid process")
}

fn theory(process: &Process<f64>, measured: &MeasuredConstants<f64>) -> Result<TheoryConstants<f64>, HrError> {
    let p_bound = translation_bound(process.forcing(), DEFAULT_WINDOW_STARTS)?;
    compute_constants(process.params(), process.grid().measure(), p_bound, 5.0, measured)
}

fn measured(grid: &Grid<f64>) -> Result<MeasuredConstants<f64>, HrError> {
    MeasuredConstants::measure(grid, &HrParameters::default(), 5.0, 7)
}

fn rel(a: f64, b: f64, scale: f64) -> f64 {
    (a - b).abs() / scale.max(f64::MIN_POSITIVE)
}

// Criterion 1

fn rough(n: usize, r: &mut impl Rng) -> Vec<f64> {
    (0..n).map(|_| r.gen_range(-1.0..1.0)).collect()
}

/// `Σ (f_{i+1} − f_i)² / h` on an interval.
fn difference_energy(f: &[f64], h: f64) -> f64 {
    f.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum::<f64>() / h
}

fn discrete_operator() -> Outcome {
    let line = Grid::<f64>::default_1d();
    let plane = Grid::<f64>::new(&[1.0, 0.7], &[20, 14])?;
    let mut r = rng(1);
    let mut worst = [0.0f64; 4];
    for k in 0..100 {
        let grid = if k % 2 == 0 { &line } else { &plane };
        let f = rough(grid.len(), &mut r);
        let g = rough(grid.len(), &mut r);
        let lf = grid.laplacian_neumann(&f)?;
        let lg = grid.laplacian_neumann(&g)?;
        let scale = grid.norm_l2(&lf)? * grid.norm_l2(&g)? + grid.norm_l2(&f)? * grid.norm_l2(&lg)?;
        worst[0] = worst[0].max(rel(grid.inner_l2(&lf, &g)?, grid.inner_l2(&f, &lg)?, scale));
        let quad = grid.inner_l2(&lf, &f)?;
        worst[1] = worst[1].max(quad.max(0.0) / quad.abs());
        let c = r.gen_range(-5.0..5.0);
        let lc = grid.laplacian_neumann(&vec![c; grid.len()])?;
        let lc_max = lc.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let h_min = grid.spacing().iter().fold(f64::INFINITY, |m, &h| m.min(h));
        worst[2] = worst[2].max(lc_max / (c.abs() / (h_min * h_min)));
        let grad = if grid.dim() == 1 {
            difference_energy(&f, grid.spacing()[0])
        } else {
            grid.norm_grad_sq(&f)?
        };
        worst[3] = worst[3].max(rel(-quad, grad, grad));
    }
    let ok = worst.iter().all(|&w| w <= 1e-10);
    Ok((
        ok,
        format!(
            "self-adjoint {:.1e}, semidefinite {:.1e}, kernel {:.1e}, summation by parts {:.1e}",
            worst[0], worst[1], worst[2], worst[3]
        ),
    ))
}

// Criterion 2

fn oracle_equivalence() -> Outcome {
    let grid = Grid::<f64>::default_1d();
    let params = HrParameters::default();
    let mut worst = 0.0f64;
    for spec in [ForcingSpec::zero(), ForcingSpec::constant([0.5, 0.2, 0.1]), periodic()] {
        let pr = process(&grid, &params, spec, ProcessConfig::default());
        let dt = pr.config().dt;
        for g0 in [[0.0, 0.0, 0.0], [-1.6, -11.8, 0.0]] {
            let ode = evolve_ode(g0, 0.0, 100.0, &params, pr.forcing(), dt)?;
            let mut st = pr.stepper(&StateField::uniform(&grid, g0), 0.0)?;
            for (n, y) in ode.states.iter().enumerate() {
                if n > 0 {
                    st.step()?;
                }
                let x = st.state().at(0);
                let err = (0..3).map(|i| (x[i] - y[i]).powi(2)).sum::<f64>().sqrt();
                let size = y.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0);
                worst = worst.max(err / size);
            }
        }
    }
    Ok((
        worst <= 1e-4,
        format!("max relative error {worst:.2e} over 6 runs (tolerance 1e-4)"),
    ))
}

// Criterion 3

fn cocycle_identity() -> Outcome {
    let grid = Grid::<f64>::default_1d();
    let params = HrParameters::default();
    let triples = [(0.0, 1.0, 3.0), (-2.5, 0.75, 1.5), (0.3, 0.3, 2.0), (1.0, 4.0, 4.0)];
    let mut worst = 0.0f64;
    let mut multistep = 0.0f64;
    let mut identity = true;
    for (k, scheme) in [Scheme::ImexEuler, Scheme::ImexArs343, Scheme::ImexCnab2]
        .into_iter()
        .enumerate()
    {
        let pr = process(&grid, &params, periodic(), ProcessConfig::default().with_scheme(scheme));
        for (j, &(tau, s, t)) in triples.iter().enumerate() {
            let g = on_sphere(&grid, 10.0, &mut rng(child_seed(k as u64, j as u64)));
            let defect = cocycle_check(&pr, &g, tau, s, t)?;
            // A restart drops the two-step history, so only one-step schemes compose exactly.
            if scheme == Scheme::ImexCnab2 {
                multistep = multistep.max(defect);
            } else {
                worst = worst.max(defect);
            }
            identity &= pr.advance(&g, tau, tau)? == g;
        }
    }
    Ok((
        worst <= 1e-10 && identity,
        format!(
            "max cocycle defect {worst:.1e} (imex-euler, imex-ars343; imex-cnab2 restart {multistep:.1e}), S(tau,tau) = I: {identity}"
        ),
    ))
}

// Criteria 4 and 5

struct EnergyRuns {
    runs: Vec<(String, TheoryConstants<f64>, Trajectory<f64>)>,
    zero: Vec<usize>,
    zero_process: Process<f64>,
}

fn energy_runs() -> Result<EnergyRuns, HrError> {
    let grid = Grid::<f64>::default_1d();
    let params = HrParameters::default();
    let m = measured(&grid)?;
    let kinds = [
        ("zero", ForcingSpec::zero()),
        ("periodic", periodic()),
        (
            "space-modulated",
            ForcingSpec::space_modulated([0.5, 0.2, 0.1], 0.5, 0.0),
        ),
        ("bounded-noise", ForcingSpec::bounded_noise([0.5, 0.2, 0.1], 1.0, 11)),
    ];
    let mut runs = Vec::new();
    let mut zero = Vec::new();
    for (k, (name, spec)) in kinds.into_iter().enumerate() {
        let pr = process(&grid, &params, spec, ProcessConfig::default());
        let c = theory(&pr, &m)?;
        for (i, theta) in [1e-3, 0.1, 1.0, 4.0, 10.0].into_iter().enumerate() {
            let g0 = on_sphere(&grid, theta * c.k1, &mut rng(child_seed(k as u64, i as u64)));
            let tr = pr.evolve(&g0, 0.0, 20.0)?;
            if name == "zero" {
                zero.push(runs.len());
            }
            runs.push((format!("{name} {theta}K1"), c, tr));
        }
    }
    let zero_process = process(&grid, &params, ForcingSpec::zero(), ProcessConfig::default());
    Ok(EnergyRuns {
        runs,
        zero,
        zero_process,
    })
}

thread_local! {
    static ENERGY: std::cell::OnceCell<EnergyRuns> = const { std::cell::OnceCell::new() };
}

fn with_energy_runs<T>(f: impl FnOnce(&EnergyRuns) -> Result<T, HrError>) -> Result<T, HrError> {
    ENERGY.with(|cell| {
        if cell.get().is_none() {
            let _ = cell.set(energy_runs()?);
        }
        f(cell.get().expect("initialised"))
    })
}

fn energy_inequality() -> Outcome {
    with_energy_runs(|e| {
        let (mut checked, mut violations) = (0, 0);
        for (_, c, tr) in &e.runs {
            let rep = monitor_energy(tr, c);
            checked += rep.checked;
            violations += rep.violations.len();
        }
        Ok((
            violations == 0 && e.runs.len() == 20,
            format!("{} runs, {checked} checks, {violations} violations", e.runs.len()),
        ))
    })
}

fn gronwall_decay() -> Outcome {
    with_energy_runs(|e| {
        let (mut checked, mut violations) = (0, 0);
        for (_, c, tr) in &e.runs {
            let rep = monitor_gronwall(tr, c);
            checked += rep.checked;
            violations += rep.violations.len();
        }
        let c = &e.runs[e.zero[0]].1;
        let floor = reference_energy_level(&e.zero_process, c, 0.0, 20.0)?;
        let mut rates = Vec::new();
        for &i in &e.zero {
            match excess_energy_decay_rate(&e.runs[i].2, c, Some(floor)) {
                Ok(r) => rates.push(r),
                Err(HrError::InsufficientData(_)) => {}
                Err(err) => return Err(err),
            }
        }
        let slowest = rates.iter().fold(f64::INFINITY, |m, &r| m.min(r));
        let ok = violations == 0 && !rates.is_empty() && slowest >= 0.9 * c.delta;
        Ok((
            ok,
            format!(
                "{checked} checks, {violations} violations; slowest decay {slowest:.4} vs delta {:.5} over {} runs",
                c.delta,
                rates.len()
            ),
        ))
    })
}

// Criteria 6 and 7

/// Chunk length of the absorbing runs and the time they continue after entry.
const ABSORBING_CHUNK: f64 = 10.0;

struct AbsorbingRuns {
    c: TheoryConstants<f64>,
    runs: Vec<(f64, f64, Trajectory<f64>)>,
}

thread_local! {
    static ABSORBING: std::cell::OnceCell<AbsorbingRuns> = const { std::cell::OnceCell::new() };
}

/// Runs in chunks until one chunk after the first sample inside `{‖g‖² ≤ K₁}`,
/// or until `limit` has elapsed.
fn run_until_inside(
    pr: &Process<f64>,
    g: &StateField<f64>,
    tau: f64,
    k1: f64,
    limit: f64,
) -> Result<Trajectory<f64>, HrError> {
    let mut tr = pr.evolve(g, tau, tau + ABSORBING_CHUNK)?;
    let mut entered = tr.samples.iter().any(|s| s.h_sq() <= k1);
    let mut extra = 0;
    while extra < 1 && tr.t_end() - tau < limit {
        if entered {
            extra += 1;
        }
        let t = tr.t_end();
        let next = pr.evolve(&tr.final_state, t, t + ABSORBING_CHUNK)?;
        entered |= next.samples.iter().any(|s| s.h_sq() <= k1);
        let offset = *tr.steps.last().expect("nonempty");
        tr.steps.extend(next.steps[1..].iter().map(|s| s + offset));
        tr.times.extend_from_slice(&next.times[1..]);
        tr.samples.extend_from_slice(&next.samples[1..]);
        tr.stabilized_steps += next.stabilized_steps;
        tr.final_state = next.final_state;
    }
    Ok(tr)
}

fn absorbing_runs() -> Result<AbsorbingRuns, HrError> {
    let grid = Grid::<f64>::default_1d();
    let pr = process(
        &grid,
        &HrParameters::default(),
        periodic(),
        ProcessConfig::default().with_stride(10),
    );
    let c = theory(&pr, &measured(&grid)?)?;
    let mut jobs = Vec::new();
    for (fi, factor) in [1.0, 10.0, 100.0].into_iter().enumerate() {
        let b = factor * c.k1;
        let ens = Ensemble::sphere(&grid, b, NormKind::H, 16, child_seed(3, fi as u64))?;
        for tau in [0.0, 0.5, 1.0, 1.5] {
            for g in ens.members() {
                jobs.push((b, tau, g.clone()));
            }
        }
    }
    let runs = jobs
        .into_par_iter()
        .map(|(b, tau, g)| {
            let limit = compute_tb(&c, b);
            run_until_inside(&pr, &g, tau, c.k1, limit).map(|tr| (b, tau, tr))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(AbsorbingRuns { c, runs })
}

fn with_absorbing<T>(f: impl FnOnce(&AbsorbingRuns) -> Result<T, HrError>) -> Result<T, HrError> {
    ABSORBING.with(|cell| {
        if cell.get().is_none() {
            let _ = cell.set(absorbing_runs()?);
        }
        f(cell.get().expect("initialised"))
    })
}

fn pullback_absorbing() -> Outcome {
    with_absorbing(|a| {
        let pairs: Vec<(f64, &Trajectory<f64>)> = a.runs.iter().map(|(b, _, tr)| (*b, tr)).collect();
        let rep = monitor_absorbing(&pairs, &a.c);
        let exits = rep.members.iter().filter(|m| m.exited).count();
        let latest = rep.worst_entry().unwrap_or(f64::NAN);
        let tb_min = rep.members.iter().fold(f64::INFINITY, |m, e| m.min(e.t_b));
        Ok((
            rep.passed() && rep.members.len() == 192,
            format!(
                "{} of {} members entered, latest entry {latest:.3} <= T_B {tb_min:.3e}, {exits} exits in the {ABSORBING_CHUNK} after",
                rep.members.iter().filter(|m| m.entry_time.is_some()).count(),
                rep.members.len()
            ),
        ))
    })
}

fn h1_absorbing() -> Outcome {
    with_absorbing(|a| {
        let pairs: Vec<(f64, &Trajectory<f64>)> = a.runs.iter().map(|(b, _, tr)| (*b, tr)).collect();
        let rep = monitor_absorbing(&pairs, &a.c);
        let (mut checked, mut violations, mut missing) = (0, 0, 0);
        for (m, (_, tau, tr)) in rep.members.iter().zip(&a.runs) {
            let Some(entry) = m.entry_time else {
                missing += 1;
                continue;
            };
            let (grad, ball) = monitor_h1_absorbing(tr, &a.c, tau + entry + 1.0);
            checked += grad.checked + ball.checked;
            violations += grad.violations.len() + ball.violations.len();
        }
        Ok((
            violations == 0 && missing == 0 && checked > 0,
            format!(
                "{checked} checks from entry + 1, {violations} violations, ln K2 = {:.3e}",
                a.c.ln_k2
            ),
        ))
    })
}

// Criterion 8

fn lipschitz() -> Outcome {
    let grid = Grid::<f64>::default_1d();
    let pr = process(&grid, &HrParameters::default(), periodic(), ProcessConfig::default());
    let c = theory(&pr, &measured(&grid)?)?;
    let (mut checked, mut violations) = (0, 0);
    let mut fastest = f64::NEG_INFINITY;
    for k in 0..100 {
        let mut r = rng(child_seed(2, k));
        let g = on_sphere(&grid, c.k1 * (k + 1) as f64 / 100.0, &mut r);
        let h = g.add_scaled(1e-3, &unit_direction(&grid, &mut r));
        let pair = pr.evolve_pair(&g, &h, 0.0, 10.0)?;
        let rep = monitor_lipschitz_h(&pair, &c);
        checked += rep.report.checked;
        violations += rep.report.violations.len();
        fastest = fastest.max(rep.growth_exponent.unwrap_or(f64::NEG_INFINITY));
    }
    Ok((
        violations == 0,
        format!(
            "{checked} checks, {violations} violations; fastest growth {fastest:.2} vs C* {:.2}",
            c.cstar
        ),
    ))
}

// Criterion 9

fn smoothing() -> Outcome {
    let grid = Grid::<f64>::default_1d();
    let pr = process(&grid, &HrParameters::default(), periodic(), ProcessConfig::default());
    let c = theory(&pr, &measured(&grid)?)?;
    let t = c.t_mstar;
    let taus: Vec<f64> = (0..8).map(|j| 0.25 * j as f64).collect();
    let (count, spacing, breed) = (64, 10.0, 4.0);
    let t0 = -t + spacing - breed - 50.0;
    let pairs = bred_pairs(
        &pr,
        &StateField::zeros(&grid),
        t0,
        &taus,
        t,
        count,
        spacing,
        breed,
        1e-4,
        4,
    )?;
    let full = measure_smoothing(&pr, &pairs, taus.len(), t)?;
    let halved = measure_smoothing(&pr, &pairs[..pairs.len() / 2], taus.len(), t)?;
    let doubling = full.kappa_hat / halved.kappa_hat;
    let mut sweep = Vec::new();
    for eps in [1e-3, 1e-4, 1e-5] {
        let moved: Vec<_> = pairs[..pairs.len() / 4]
            .iter()
            .map(|p| p.with_distance(&grid, eps))
            .collect();
        sweep.push(measure_smoothing(&pr, &moved, taus.len(), t)?.kappa_hat);
    }
    let sweep_ratio = sweep.iter().fold(0.0f64, |m, &x| m.max(x)) / sweep.iter().fold(f64::INFINITY, |m, &x| m.min(x));
    let spread = full.tau_spread();
    let ok = full.kappa_hat.is_finite()
        && full.kappa_hat > 0.0
        && (0.5..=2.0).contains(&doubling)
        && sweep_ratio <= 2.0
        && spread <= 3.0;
    Ok((
        ok,
        format!(
            "kappa_hat {:.3} (ln {:.2} <= ln kappa {:.3e}), doubling ratio {doubling:.3}, distance sweep ratio {sweep_ratio:.3}, tau spread {spread:.3}",
            full.kappa_hat,
            full.kappa_hat.ln(),
            c.ln_kappa
        ),
    ))
}

// Criterion 10

fn time_holder() -> Outcome {
    let grid = Grid::<f64>::default_1d();
    let params = HrParameters::default();
    let pr = process(&grid, &params, periodic(), ProcessConfig::default());
    let c = theory(&pr, &measured(&grid)?)?;
    let g0 = StateField::uniform(&grid, slow_manifold_point(&params, 1000.0).expect("on manifold"));
    let lags = [0.01, 0.03, 0.1, 0.3, 1.0, 2.0, 5.0];
    let rep = monitor_time_holder(&pr, &g0, 0.0, &lags, &c)?;
    let slope = |s: Option<f64>| s.map_or("none".to_string(), |s| format!("{s:.3}"));
    Ok((
        rep.passed(),
        format!(
            "slopes short {} (gamma {}), long {} (gamma {}), late {} / {}; ln lambda_hat {:.1} <= ln lambda {:.3e}",
            slope(rep.short.slope),
            rep.short.gamma,
            slope(rep.long.slope),
            rep.long.gamma,
            slope(rep.late_short.slope),
            slope(rep.late_long.slope),
            rep.ln_lambda_hat,
            c.ln_lambda
        ),
    ))
}

// Criteria 11 to 13

/// A resting neuron: the origin attracts and the attractor is a point.
fn resting() -> HrParameters<f64> {
    HrParameters {
        a: 3.0,
        b: 1.0,
        alpha: 0.0,
        beta: 3.0,
        q: 0.5,
        r: 0.6,
        c: 0.0,
        j: 0.0,
        ..HrParameters::default()
    }
}

const BALL: f64 = 10.0;
const FIBER_TAUS: [f64; 4] = [0.0, 1.0, 2.0, 5.0];

struct Fibers {
    grid: Grid<f64>,
    periodic: Process<f64>,
    autonomous: Process<f64>,
    periodic_fibers: Vec<AttractorCloud<f64>>,
    autonomous_fibers: Vec<AttractorCloud<f64>>,
}

thread_local! {
    static FIBERS: std::cell::OnceCell<Fibers> = const { std::cell::OnceCell::new() };
}

fn sampling(grid: &Grid<f64>, per_level: usize) -> Result<Ensemble<f64>, HrError> {
    Ensemble::absorbing_ball(grid, BALL, per_level, 5)
}

fn fibers() -> Result<Fibers, HrError> {
    let grid = Grid::<f64>::default_1d();
    let periodic = process(
        &grid,
        &resting(),
        ForcingSpec::periodic([0.1, 0.0, 0.0], 0.5, 0.0),
        ProcessConfig::default(),
    );
    let autonomous = process(&grid, &resting(), ForcingSpec::zero(), ProcessConfig::default());
    let ens = sampling(&grid, 5)?;
    let build = |p: &Process<f64>| {
        FIBER_TAUS
            .iter()
            .map(|&tau| approximate_attractor(p, tau, &DEFAULT_HORIZONS, &ens, TOL_ATTR))
            .collect::<Result<Vec<_>, _>>()
    };
    Ok(Fibers {
        periodic_fibers: build(&periodic)?,
        autonomous_fibers: build(&autonomous)?,
        grid,
        periodic,
        autonomous,
    })
}

fn with_fibers<T>(f: impl FnOnce(&Fibers) -> Result<T, HrError>) -> Result<T, HrError> {
    FIBERS.with(|cell| {
        if cell.get().is_none() {
            let _ = cell.set(fibers()?);
        }
        f(cell.get().expect("initialised"))
    })
}

fn attraction() -> Outcome {
    with_fibers(|f| {
        let bounded = Ensemble::sphere(&f.grid, BALL, NormKind::H, 8, 6)?;
        let horizons = [1.0, 2.0, 4.0, 8.0, 16.0, 32.0];
        let mut monotone = true;
        let mut sigma = f64::INFINITY;
        for (p, fibers) in [(&f.periodic, &f.periodic_fibers), (&f.autonomous, &f.autonomous_fibers)] {
            let profile = attraction_profile(p, &bounded, &fibers[0], &horizons)?;
            monotone &= nonincreasing_after_peak(&profile, 0.1, TOL_ATTR);
            sigma = sigma.min(attraction_rate(&horizons, &profile)?.sigma);
        }
        let converged = f
            .periodic_fibers
            .iter()
            .chain(&f.autonomous_fibers)
            .all(|c| c.converged);
        let mut autonomy = 0.0f64;
        for later in &f.autonomous_fibers[1..] {
            autonomy = autonomy.max(hausdorff(
                &f.grid,
                &f.autonomous_fibers[0].members,
                &later.members,
                NormKind::H,
            )?);
        }
        // Period 2: τ = 0, 2 and τ = 1, 5.
        let pf = &f.periodic_fibers;
        let period = hausdorff(&f.grid, &pf[0].members, &pf[2].members, NormKind::H)?.max(hausdorff(
            &f.grid,
            &pf[1].members,
            &pf[3].members,
            NormKind::H,
        )?);
        let ok = monotone && sigma > 0.0 && converged && autonomy <= TOL_ATTR && period <= TOL_ATTR;
        Ok((
            ok,
            format!(
                "profiles monotone {monotone}, min sigma_hat {sigma:.3}, fibers converged {converged}, autonomous drift {autonomy:.1e}, periodic drift {period:.1e}"
            ),
        ))
    })
}

fn invariance() -> Outcome {
    with_fibers(|f| {
        let mut worst = 0.0f64;
        for (p, fibers) in [(&f.periodic, &f.periodic_fibers), (&f.autonomous, &f.autonomous_fibers)] {
            // τ = 0 against τ + Δ for Δ = 1 and 5.
            for later in [&fibers[1], &fibers[3]] {
                let (fwd, bwd) = invariance_distances(p, &fibers[0], later)?;
                worst = worst.max(fwd).max(bwd);
            }
        }
        Ok((
            worst <= TOL_ATTR,
            format!("max distance {worst:.2e} (tolerance {TOL_ATTR:.0e})"),
        ))
    })
}

fn dimension() -> Outcome {
    let mut r = rng(13);
    let s2 = 0.5f64.sqrt();
    let (e1, e2) = ([s2, s2, 0.0, 0.0], [0.0, 0.0, s2, -s2]);
    let at = |a: f64, b: f64| (0..4).map(|i| a * e1[i] + b * e2[i]).collect::<Vec<f64>>();
    let line: Vec<Vec<f64>> = (0..4000).map(|_| at(r.gen_range(0.0..1.0), 0.0)).collect();
    let square: Vec<Vec<f64>> = (0..20000)
        .map(|_| at(r.gen_range(0.0..1.0), r.gen_range(0.0..1.0)))
        .collect();
    let scales = [0.2, 0.1, 0.05, 0.025];
    let d_line = box_counting_dimension(&line, &scales)?.dimension;
    let d_square = box_counting_dimension(&square, &scales)?.dimension;
    with_fibers(|f| {
        let doubled = sampling(&f.grid, 10)?;
        let mut shifts = Vec::new();
        let mut dims = Vec::new();
        for (p, fibers) in [(&f.periodic, &f.periodic_fibers), (&f.autonomous, &f.autonomous_fibers)] {
            let big = approximate_attractor(p, fibers[0].tau, &DEFAULT_HORIZONS, &doubled, TOL_ATTR)?;
            let base = fiber_dimension(&f.grid, &fibers[0].members, &DEFAULT_SCALES)?.dimension;
            let twice = fiber_dimension(&f.grid, &big.members, &DEFAULT_SCALES)?.dimension;
            for c in fibers {
                dims.push(fiber_dimension(&f.grid, &c.members, &DEFAULT_SCALES)?.dimension);
            }
            shifts.push((twice - base).abs());
        }
        let finite = dims.iter().all(|d| d.is_finite());
        let shift = shifts.iter().fold(0.0f64, |m, &s| m.max(s));
        let ok = (d_line - 1.0).abs() <= 0.2 && (d_square - 2.0).abs() <= 0.2 && finite && shift <= 0.3;
        Ok((
            ok,
            format!("line {d_line:.3}, square {d_square:.3}, fiber dimensions {dims:?}, doubling shift {shift:.3}"),
        ))
    })
}

// Criterion 14

fn convergence_orders() -> Outcome {
    let err = |cells: usize| -> Result<f64, HrError> {
        let g = Grid::<f64>::interval(1.0, cells)?;
        let k = 3.0 * std::f64::consts::PI;
        let f: Vec<f64> = (0..g.len()).map(|i| (k * g.coords(i)[0]).cos()).collect();
        let lap = g.laplacian_neumann(&f)?;
        Ok(lap
            .iter()
            .zip(&f)
            .map(|(l, v)| (l + k * k * v).abs())
            .fold(0.0, f64::max))
    };
    let spatial: Vec<f64> = [16, 32, 64, 128].iter().map(|&n| err(n)).collect::<Result<_, _>>()?;
    let spatial_ratios: Vec<f64> = spatial.windows(2).map(|w| w[0] / w[1]).collect();

    // Self-convergence: (x_dt − x_dt/2) / (x_dt/2 − x_dt/4) tends to 2^p.
    let grid = Grid::<f64>::interval(1.0, 31)?;
    let g0 = StateField::from_fn(&grid, |x| {
        let c = (std::f64::consts::PI * x[0]).cos();
        [0.5 * c, -1.0 + 0.3 * c, 1.0 - 0.2 * c]
    });
    let temporal = |scheme: Scheme| -> Result<Vec<f64>, HrError> {
        let finals = [0.01, 0.005, 0.0025, 0.00125]
            .iter()
            .map(|&dt| {
                let cfg = ProcessConfig::default().with_scheme(scheme).with_dt(dt);
                process(&grid, &HrParameters::default(), periodic(), cfg).advance(&g0, 0.0, 1.0)
            })
            .collect::<Result<Vec<_>, _>>()?;
        let diffs: Vec<f64> = finals.windows(2).map(|w| w[0].sub(&w[1]).norm_h(&grid)).collect();
        Ok(diffs.windows(2).map(|w| w[0] / w[1]).collect())
    };
    let euler = temporal(Scheme::ImexEuler)?;
    let cnab2 = temporal(Scheme::ImexCnab2)?;
    let within = |rs: &[f64], target: f64| rs.iter().all(|r| (r / target - 1.0).abs() <= 0.3);
    let ok = within(&spatial_ratios, 4.0) && within(&euler, 2.0) && within(&cnab2, 4.0);
    let fmt = |rs: &[f64]| rs.iter().map(|r| format!("{r:.3}")).collect::<Vec<_>>().join(", ");
    Ok((
        ok,
        format!(
            "spatial ratios [{}], imex-euler [{}], imex-cnab2 [{}]",
            fmt(&spatial_ratios),
            fmt(&euler),
            fmt(&cnab2)
        ),
    ))
}

// Criterion 15

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).expect("readable output") {
            let p = entry.expect("entry").path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let name = p.strip_prefix(dir).expect("inside").to_string_lossy().into_owned();
                out.insert(name, fs::read(&p).expect("readable file"));
            }
        }
    }
    out
}

fn determinism() -> Outcome {
    let tmp = TempDir::new().map_err(|e| HrError::InvalidInput(e.to_string()))?;
    let configs = [
        (
            Command::Simulate,
            "[grid]\ncells = 31\n[solver]\nsnapshot_stride = 500\n[experiment]\nseed = 9\nt_end = 2\ninitial = random\n",
        ),
        (Command::Constants, "[forcing]\nkind = bounded-noise\namplitudes = 0.5, 0.2, 0.1\nseed = 3\n"),
        (
            Command::Verify,
            "[grid]\ncells = 31\n[forcing]\nkind = time-periodic\namplitudes = 0.5, 0.2, 0.1\nfrequency = 0.5\n\
             [experiment]\nseed = 9\nt_end = 2\nverify_runs = 2\nverify_pairs = 2\nverify_pair_horizon = 1\n\
             verify_absorbing_members = 2\nverify_smoothing_pairs = 1\nverify_smoothing_taus = 2\n",
        ),
        (
            Command::Pullback,
            "[grid]\ncells = 15\n[forcing]\nkind = time-periodic\namplitudes = 0.5, 0.2, 0.1\nfrequency = 0.5\n\
             [experiment]\nseed = 9\npullback_taus = 0, 1\npullback_horizons = 1, 2, 4\npullback_per_level = 2\n\
             pullback_profile_horizons = 0.5, 1, 1.5, 2\npullback_profile_members = 2\npullback_invariance_deltas = 1\n",
        ),
        (
            Command::OracleCompare,
            "[forcing]\nkind = time-periodic\namplitudes = 0.5, 0.2, 0.1\nfrequency = 0.5\n\
             [solver]\nstride = 100\n[experiment]\nt_end = 5\ninitial = uniform\ninitial_state = -1, -4, 2\n",
        ),
    ];
    let mut differing = Vec::new();
    let mut files = 0;
    for (command, text) in configs {
        let cfg = tmp.path().join(format!("{}.conf", command.name()));
        fs::write(&cfg, text).map_err(|e| HrError::InvalidInput(e.to_string()))?;
        let mut outputs = Vec::new();
        for (k, threads) in [Some(1), Some(1), Some(2)].into_iter().enumerate() {
            let out = tmp.path().join(format!("{}_{k}", command.name()));
            run(&Options {
                command,
                config: cfg.clone(),
                out: Some(out.clone()),
                threads,
                seed_override: None,
                strict: false,
            })
            .map_err(|e| HrError::InvalidInput(format!("{}: {e}", command.name())))?;
            outputs.push(snapshot(&out));
        }
        files += outputs[0].len();
        if outputs[0].is_empty() || outputs.iter().any(|o| *o != outputs[0]) {
            differing.push(command.name());
        }
    }
    Ok((
        differing.is_empty(),
        format!("{files} files across 5 subcommands, 3 runs each (1, 1 and 2 threads); differing: {differing:?}"),
    ))
}
