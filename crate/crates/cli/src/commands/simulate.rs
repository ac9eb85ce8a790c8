//! `simulate`: one run from the configured initial data.

use hrlab::io::{write_field_binary, write_field_csv, write_trajectory_csv};

use super::{initial_state, Setup};
use crate::config::ExperimentConfig;
use crate::output::{columns, OutDir};
use crate::CliError;

pub fn run(cfg: &ExperimentConfig, out: &mut OutDir) -> Result<(usize, String), CliError> {
    let setup = Setup::new(cfg)?;
    let g0 = initial_state(cfg, &setup.grid)?;
    let e = &cfg.experiment;
    let traj = setup.process.evolve(&g0, e.tau, e.t_end)?;
    out.emit("trajectory.csv", |b| write_trajectory_csv(b, &traj))?;
    let rows: Vec<Vec<f64>> = traj
        .times
        .iter()
        .zip(&traj.samples)
        .map(|(&t, s)| vec![t, s.h_sq(), s.grad_sq(), s.e_sq(), s.p_sq])
        .collect();
    out.write(
        "trajectory.dat",
        &columns(&["t", "h_sq", "grad_sq", "e_sq", "p_sq"], &rows)?,
    )?;
    if cfg.solver.snapshot_stride.is_some() {
        let mut index = Vec::new();
        for (i, (&t, s)) in traj.snapshot_times.iter().zip(&traj.snapshots).enumerate() {
            out.emit(&format!("snapshots/snapshot_{i:06}.bin"), |b| {
                write_field_binary(b, &setup.grid, s)
            })?;
            index.push(vec![i as f64, t]);
        }
        out.write("snapshots/times.dat", &columns(&["index", "t"], &index)?)?;
    }
    out.emit("final_state.bin", |b| {
        write_field_binary(b, &setup.grid, &traj.final_state)
    })?;
    out.emit("final_state.csv", |b| {
        write_field_csv(b, &setup.grid, &traj.final_state)
    })?;
    Ok((
        0,
        format!(
            "simulate: {} samples over [{}, {}], {} stabilized steps",
            traj.len(),
            e.tau,
            e.t_end,
            traj.stabilized_steps
        ),
    ))
}
