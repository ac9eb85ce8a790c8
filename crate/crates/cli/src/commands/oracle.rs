//! `oracle-compare`: uniform PDE run against the RK4 solution of the
//! homogeneous system.

use serde_json::json;

use hrlab::solver::evolve_ode;

use super::{initial_state, Setup};
use crate::config::ExperimentConfig;
use crate::output::{columns, num, OutDir};
use crate::CliError;

pub const COLUMNS: [&str; 9] = [
    "t",
    "u_pde",
    "v_pde",
    "w_pde",
    "u_ode",
    "v_ode",
    "w_ode",
    "rel_err",
    "max_rel_err",
];

/// `|x − y| / max(|y|, 1)` in the Euclidean norm of the triple.
pub fn relative_error(x: [f64; 3], y: [f64; 3]) -> f64 {
    let err = (0..3).map(|i| (x[i] - y[i]).powi(2)).sum::<f64>().sqrt();
    let scale = y.iter().map(|v| v * v).sum::<f64>().sqrt().max(1.0);
    err / scale
}

pub fn run(cfg: &ExperimentConfig, out: &mut OutDir) -> Result<(usize, String), CliError> {
    if !cfg.experiment.initial.is_uniform() {
        return Err(CliError::Invalid(
            "oracle-compare needs spatially uniform initial data (initial = zero, uniform or slow-manifold)".into(),
        ));
    }
    let setup = Setup::new(cfg)?;
    if !setup.forcing.is_spatially_uniform() {
        return Err(CliError::Invalid(format!(
            "oracle-compare needs spatially uniform forcing, got {}",
            setup.forcing.kind().name()
        )));
    }
    let e = &cfg.experiment;
    let g0 = initial_state(cfg, &setup.grid)?;
    let ode = evolve_ode(g0.at(0), e.tau, e.t_end, &cfg.params, &setup.forcing, cfg.solver.dt)?;
    let mut stepper = setup.process.stepper(&g0, e.tau)?;
    let stride = cfg.solver.stride;
    let last = ode.times.len() - 1;
    let mut rows = Vec::with_capacity(last / stride + 2);
    let mut max_rel = 0.0f64;
    let mut max_nonuniform = 0.0f64;
    for (n, (&t, &y)) in ode.times.iter().zip(&ode.states).enumerate() {
        if n > 0 {
            stepper.step()?;
        }
        let state = stepper.state();
        let x = state.at(0);
        let rel = relative_error(x, y);
        max_rel = max_rel.max(rel);
        max_nonuniform = max_nonuniform.max(state.nonuniformity());
        if n % stride == 0 || n == last {
            rows.push(vec![t, x[0], x[1], x[2], y[0], y[1], y[2], rel, max_rel]);
        }
    }
    let mut csv = COLUMNS.join(",");
    csv.push('\n');
    for r in &rows {
        let cells: Vec<String> = r.iter().map(|x| x.to_string()).collect();
        csv.push_str(&cells.join(","));
        csv.push('\n');
    }
    out.write("oracle.csv", csv.as_bytes())?;
    out.write("oracle.dat", &columns(&COLUMNS, &rows)?)?;
    out.json(
        "oracle.json",
        &json!({
            "max_rel_err": num(max_rel),
            "max_nonuniformity": num(max_nonuniform),
            "steps": last,
        }),
    )?;
    Ok((
        0,
        format!("oracle-compare: max relative error {max_rel:e} over {last} steps"),
    ))
}
