//! `verify`: fresh runs through every monitor of the estimates.

use std::fs::File;

use rayon::prelude::*;
use serde_json::{json, Value};

use hrlab::estimates::{
    bred_pairs, excess_energy_decay_rate, measure_smoothing, monitor_absorbing, monitor_energy, monitor_gronwall,
    monitor_h1_absorbing, monitor_lipschitz_h, monitor_time_holder, reference_energy_level, TheoryConstants, Violation,
    ViolationReport,
};
use hrlab::io::read_trajectory_csv;
use hrlab::model::{slow_manifold_point, ForcingKind};
use hrlab::pullback::{Ensemble, NormKind};
use hrlab::sampling::{child_seed, on_sphere, rng, unit_direction};
use hrlab::solver::{ProcessConfig, Trajectory};
use hrlab::{HrError, StateField};

use super::{seed, stream, theory, Setup};
use crate::config::ExperimentConfig;
use crate::output::{columns, num, OutDir};
use crate::CliError;

/// Breeding window of the smoothing pairs.
pub const BREED: f64 = 4.0;
/// Spin-up of the trajectory that supplies the smoothing base points.
pub const SMOOTHING_WARMUP: f64 = 50.0;
/// Sampling stride of the absorbing runs.
pub const ABSORBING_STRIDE: usize = 10;
/// Tolerance of the observed decay rate against `δ`.
pub const DECAY_TOLERANCE: f64 = 0.1;

/// Summary of one monitor over all of its runs.
#[derive(Debug, Clone)]
struct Monitor {
    name: &'static str,
    checked: usize,
    violations: usize,
    min_relative_slack: Option<f64>,
    skipped: Option<String>,
    detail: Value,
}

impl Monitor {
    fn new(name: &'static str) -> Self {
        Self {
            name,
            checked: 0,
            violations: 0,
            min_relative_slack: None,
            skipped: None,
            detail: Value::Null,
        }
    }

    fn skipped(name: &'static str, why: &str) -> Self {
        Self {
            skipped: Some(why.to_string()),
            ..Self::new(name)
        }
    }

    fn absorb(&mut self, run: usize, rep: &ViolationReport<f64>, rows: &mut Vec<Row>) {
        self.checked += rep.checked;
        self.violations += rep.violations.len();
        if let Some(s) = rep.min_relative_slack {
            self.min_relative_slack = Some(self.min_relative_slack.map_or(s, |m| m.min(s)));
        }
        rows.extend(rep.violations.iter().map(|v| Row {
            monitor: self.name,
            run,
            v: *v,
        }));
    }

    /// A single pass/fail check.
    fn verdict(&mut self, ok: bool) {
        self.checked += 1;
        if !ok {
            self.violations += 1;
        }
    }

    fn to_json(&self) -> Value {
        json!({
            "name": self.name,
            "checked": self.checked,
            "violations": self.violations,
            "min_relative_slack": self.min_relative_slack.map_or(Value::Null, num),
            "skipped": self.skipped,
            "passed": self.violations == 0,
            "detail": self.detail,
        })
    }
}

struct Row {
    monitor: &'static str,
    run: usize,
    v: Violation<f64>,
}

fn member(i: usize) -> impl Fn(HrError) -> HrError {
    move |e| HrError::Member {
        member: i,
        source: Box::new(e),
    }
}

pub fn run(cfg: &ExperimentConfig, out: &mut OutDir) -> Result<(usize, String), CliError> {
    let setup = Setup::monitored(cfg)?;
    let c = theory(cfg, &setup)?;
    let mut rows = Vec::new();
    let monitors = match &cfg.experiment.verify.fixture {
        Some(path) => {
            let file = File::open(path).map_err(|e| CliError::io(path, e))?;
            let traj = read_trajectory_csv(file)?;
            energy_monitors(&[traj], &c, &mut rows)
        }
        None => fresh_runs(cfg, &setup, &c, out, &mut rows)?,
    };
    let total: usize = monitors.iter().map(|m| m.violations).sum();
    let mut csv = String::from("monitor,run,step,t,lhs,rhs,slack\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.monitor, r.run, r.v.step, r.v.t, r.v.lhs, r.v.rhs, r.v.slack
        ));
    }
    out.write("violations.csv", csv.as_bytes())?;
    out.json(
        "verify.json",
        &json!({
            "monitors": monitors.iter().map(Monitor::to_json).collect::<Vec<_>>(),
            "total_violations": total,
        }),
    )?;
    let failed: Vec<&str> = monitors.iter().filter(|m| m.violations > 0).map(|m| m.name).collect();
    let summary = if failed.is_empty() {
        format!("verify: {} monitors, zero violations", monitors.len())
    } else {
        format!("verify: {total} violations in {}", failed.join(", "))
    };
    Ok((total, summary))
}

fn energy_monitors(runs: &[Trajectory<f64>], c: &TheoryConstants<f64>, rows: &mut Vec<Row>) -> Vec<Monitor> {
    let mut energy = Monitor::new("energy");
    let mut gronwall = Monitor::new("gronwall");
    for (k, tr) in runs.iter().enumerate() {
        energy.absorb(k, &monitor_energy(tr, c), rows);
        gronwall.absorb(k, &monitor_gronwall(tr, c), rows);
    }
    vec![energy, gronwall]
}

fn fresh_runs(
    cfg: &ExperimentConfig,
    setup: &Setup,
    c: &TheoryConstants<f64>,
    out: &mut OutDir,
    rows: &mut Vec<Row>,
) -> Result<Vec<Monitor>, CliError> {
    let e = &cfg.experiment;
    let v = &e.verify;
    let grid = &setup.grid;
    let process = &setup.process;
    let horizon = e.t_end - e.tau;
    if !(horizon >= 0.0) {
        return Err(CliError::Invalid(format!(
            "t_end = {} precedes tau = {}",
            e.t_end, e.tau
        )));
    }
    let r_max = v.max_norm_sq.resolve(Some(c.k1)).expect("K1 is known");
    let run_seed = seed(cfg, stream::RUNS);
    let runs: Vec<Trajectory<f64>> = (0..v.runs)
        .into_par_iter()
        .map(|k| {
            let norm = r_max * (k + 1) as f64 / v.runs as f64;
            let g0 = on_sphere(grid, norm, &mut rng(child_seed(run_seed, k as u64)));
            process.evolve(&g0, e.tau, e.t_end).map_err(member(k))
        })
        .collect::<Result<_, _>>()?;
    let mut monitors = energy_monitors(&runs, c, rows);
    let every = cfg.solver.stride.max(1) as u64;
    let energy_rows: Vec<Vec<f64>> = runs
        .iter()
        .enumerate()
        .flat_map(|(k, tr)| {
            let last = tr.steps.last().copied();
            tr.steps
                .iter()
                .zip(&tr.times)
                .zip(&tr.samples)
                .filter(move |((&s, _), _)| s % every == 0 || Some(s) == last)
                .map(move |((_, &t), s)| vec![k as f64, t, c.weighted_energy(s.u_sq, s.v_sq, s.w_sq)])
        })
        .collect();
    out.write("energy.dat", &columns(&["run", "t", "weighted_energy"], &energy_rows)?)?;

    if horizon == 0.0 {
        for name in [
            "decay_rate",
            "absorbing",
            "h1_gradient",
            "h1_ball",
            "lipschitz_h",
            "smoothing",
            "time_holder",
        ] {
            monitors.push(Monitor::skipped(name, "empty horizon"));
        }
        return Ok(monitors);
    }

    monitors.push(decay(cfg, setup, c, &runs)?);
    drop(runs);
    monitors.extend(absorbing(cfg, setup, c, rows)?);
    monitors.push(lipschitz(cfg, setup, c, out, rows)?);
    monitors.push(smoothing(cfg, setup, c)?);
    monitors.push(holder(cfg, setup, c)?);
    Ok(monitors)
}

fn decay(
    cfg: &ExperimentConfig,
    setup: &Setup,
    c: &TheoryConstants<f64>,
    runs: &[Trajectory<f64>],
) -> Result<Monitor, CliError> {
    const NAME: &str = "decay_rate";
    if cfg.forcing.kind != ForcingKind::Zero {
        return Ok(Monitor::skipped(NAME, "forcing is not zero"));
    }
    let Some(tr) = runs.last() else {
        return Ok(Monitor::skipped(NAME, "no runs"));
    };
    let e = &cfg.experiment;
    let floor = reference_energy_level(&setup.process, c, e.tau, e.t_end - e.tau)?;
    let mut m = Monitor::new(NAME);
    match excess_energy_decay_rate(tr, c, Some(floor)) {
        Ok(rate) => {
            m.verdict(rate >= (1.0 - DECAY_TOLERANCE) * c.delta);
            m.detail = json!({"rate": num(rate), "delta": num(c.delta), "floor": num(floor)});
        }
        Err(HrError::InsufficientData(why)) => m.skipped = Some(why),
        Err(err) => return Err(err.into()),
    }
    Ok(m)
}

fn absorbing(
    cfg: &ExperimentConfig,
    setup: &Setup,
    c: &TheoryConstants<f64>,
    rows: &mut Vec<Row>,
) -> Result<Vec<Monitor>, CliError> {
    let e = &cfg.experiment;
    let v = &e.verify;
    let strided = Setup::with_solver(
        cfg,
        ProcessConfig {
            stride: ABSORBING_STRIDE,
            snapshot_stride: None,
            ..cfg.solver
        },
    )?;
    if v.absorbing_members == 0 || v.ball_norm_sq.is_empty() {
        let why = "no absorbing members requested";
        return Ok(vec![
            Monitor::skipped("absorbing", why),
            Monitor::skipped("h1_gradient", why),
            Monitor::skipped("h1_ball", why),
        ]);
    }
    let base = seed(cfg, stream::ABSORBING);
    let mut starts = Vec::new();
    for (fi, &factor) in v.ball_norm_sq.iter().enumerate() {
        let b = factor * c.k1;
        let ens = Ensemble::sphere(
            &setup.grid,
            b,
            NormKind::H,
            v.absorbing_members,
            child_seed(base, fi as u64),
        )?;
        starts.extend(ens.into_members().into_iter().map(|g| (b, g)));
    }
    let runs: Vec<(f64, Trajectory<f64>)> = starts
        .into_par_iter()
        .enumerate()
        .map(|(i, (b, g))| {
            strided
                .process
                .evolve(&g, e.tau, e.t_end)
                .map(|tr| (b, tr))
                .map_err(member(i))
        })
        .collect::<Result<_, _>>()?;
    let pairs: Vec<(f64, &Trajectory<f64>)> = runs.iter().map(|(b, tr)| (*b, tr)).collect();
    let report = monitor_absorbing(&pairs, c);
    let mut entry = Monitor::new("absorbing");
    let mut grad = Monitor::new("h1_gradient");
    let mut ball = Monitor::new("h1_ball");
    let mut members = Vec::new();
    for (k, (m, (_, tr))) in report.members.iter().zip(&runs).enumerate() {
        entry.verdict(!m.violation());
        members.push(json!({
            "b_norm_sq": num(m.b_norm_sq),
            "t_b": num(m.t_b),
            "entry_time": m.entry_time.map_or(Value::Null, num),
            "exited": m.exited,
            "horizon": num(m.horizon),
        }));
        if let Some(t) = m.entry_time {
            let (g, b) = monitor_h1_absorbing(tr, c, e.tau + t + 1.0);
            grad.absorb(k, &g, rows);
            ball.absorb(k, &b, rows);
        }
    }
    entry.detail = json!({ "members": members, "all_entered": report.passed() });
    Ok(vec![entry, grad, ball])
}

fn lipschitz(
    cfg: &ExperimentConfig,
    setup: &Setup,
    c: &TheoryConstants<f64>,
    out: &mut OutDir,
    rows: &mut Vec<Row>,
) -> Result<Monitor, CliError> {
    let e = &cfg.experiment;
    let v = &e.verify;
    let horizon = v.pair_horizon.min(e.t_end - e.tau);
    let base = seed(cfg, stream::PAIRS);
    let grid = &setup.grid;
    let reports: Vec<_> = (0..v.pairs)
        .into_par_iter()
        .map(|k| {
            let mut r = rng(child_seed(base, k as u64));
            let g = on_sphere(grid, c.k1 * (k + 1) as f64 / v.pairs as f64, &mut r);
            let h = g.add_scaled(v.pair_distance, &unit_direction(grid, &mut r));
            let pair = setup
                .process
                .evolve_pair(&g, &h, e.tau, e.tau + horizon)
                .map_err(member(k))?;
            Ok::<_, HrError>((monitor_lipschitz_h(&pair, c), pair))
        })
        .collect::<Result<_, _>>()?;
    let mut m = Monitor::new("lipschitz_h");
    let mut growth = Vec::new();
    let mut curve = Vec::new();
    let every = cfg.solver.stride.max(1);
    for (k, (rep, pair)) in reports.iter().enumerate() {
        m.absorb(k, &rep.report, rows);
        growth.push(rep.growth_exponent.map_or(Value::Null, num));
        let d0 = pair.diff_h_sq[0];
        for (i, (&t, &d)) in pair.times.iter().zip(&pair.diff_h_sq).enumerate() {
            if i % every == 0 && d > 0.0 && d0 > 0.0 {
                let el = t - pair.tau;
                curve.push(vec![k as f64, el, (d / d0).ln(), c.cstar * el]);
            }
        }
    }
    out.write(
        "lipschitz.dat",
        &columns(&["pair", "elapsed", "ln_growth", "ln_envelope"], &curve)?,
    )?;
    m.detail = json!({ "cstar": num(c.cstar), "growth_exponents": growth });
    Ok(m)
}

fn smoothing(cfg: &ExperimentConfig, setup: &Setup, c: &TheoryConstants<f64>) -> Result<Monitor, CliError> {
    const NAME: &str = "smoothing";
    let e = &cfg.experiment;
    let v = &e.verify;
    if v.smoothing_pairs == 0 || v.smoothing_taus == 0 {
        return Ok(Monitor::skipped(NAME, "no smoothing pairs requested"));
    }
    let taus: Vec<f64> = (0..v.smoothing_taus).map(|j| e.tau + 0.25 * j as f64).collect();
    let t = c.t_mstar;
    let t0 = e.tau - t + v.smoothing_spacing - BREED - SMOOTHING_WARMUP;
    let pairs = bred_pairs(
        &setup.process,
        &StateField::zeros(&setup.grid),
        t0,
        &taus,
        t,
        v.smoothing_pairs,
        v.smoothing_spacing,
        BREED,
        v.smoothing_distance,
        seed(cfg, stream::SMOOTHING),
    )?;
    let rep = measure_smoothing(&setup.process, &pairs, taus.len(), t)?;
    let mut m = Monitor::new(NAME);
    m.verdict(rep.kappa_hat.is_finite() && rep.kappa_hat.ln() <= c.ln_kappa);
    m.detail = json!({
        "kappa_hat": num(rep.kappa_hat),
        "ln_kappa": num(c.ln_kappa),
        "per_tau": rep.per_tau.iter().map(|&x| num(x)).collect::<Vec<_>>(),
        "tau_spread": num(rep.tau_spread()),
        "skipped_pairs": rep.skipped,
    });
    Ok(m)
}

fn holder(cfg: &ExperimentConfig, setup: &Setup, c: &TheoryConstants<f64>) -> Result<Monitor, CliError> {
    const NAME: &str = "time_holder";
    let v = &cfg.experiment.verify;
    if v.holder_lags.is_empty() {
        return Ok(Monitor::skipped(NAME, "no lags requested"));
    }
    let point = slow_manifold_point(&cfg.params, v.holder_w)
        .ok_or_else(|| CliError::Invalid(format!("no slow-manifold point at w = {}", v.holder_w)))?;
    let g0 = StateField::uniform(&setup.grid, point);
    let rep = monitor_time_holder(&setup.process, &g0, cfg.experiment.tau, &v.holder_lags, c)?;
    let mut m = Monitor::new(NAME);
    for regime in [&rep.short, &rep.long, &rep.late_short, &rep.late_long] {
        if !regime.lags.is_empty() {
            m.verdict(regime.slope_ok());
        }
    }
    m.verdict(rep.bound_holds);
    let slope = |r: &hrlab::estimates::HolderRegime<f64>| r.slope.map_or(Value::Null, num);
    m.detail = json!({
        "slopes": {
            "short": slope(&rep.short),
            "long": slope(&rep.long),
            "late_short": slope(&rep.late_short),
            "late_long": slope(&rep.late_long),
        },
        "ln_lambda_hat": num(rep.ln_lambda_hat),
        "bound_holds": rep.bound_holds,
        "d_gamma": num(rep.d_gamma),
    });
    Ok(m)
}
