//! `pullback`: fibres of the pullback attractor at each configured `τ`,
//! with attraction profiles, dimension estimates and invariance checks.

use serde_json::{json, Value};

use hrlab::io::write_field_binary;
use hrlab::pullback::{
    approximate_attractor, attraction_profile, attraction_rate, fiber_dimension, hausdorff, invariance_distances,
    nonincreasing_after_peak, project, AttractorCloud, Ensemble, NormKind,
};

use super::{seed, stream, theory, Setup};
use crate::config::ExperimentConfig;
use crate::output::{columns, num, OutDir};
use crate::CliError;

/// Relative noise allowed in the attraction profile.
pub const PROFILE_NOISE: f64 = 0.1;

pub fn run(cfg: &ExperimentConfig, out: &mut OutDir) -> Result<(usize, String), CliError> {
    let setup = Setup::new(cfg)?;
    let pb = &cfg.experiment.pullback;
    if pb.taus.is_empty() {
        return Err(CliError::Invalid("pullback_taus is empty".into()));
    }
    let k1 = if matches!(pb.ball_norm_sq, crate::config::Radius::K1Multiple(_)) {
        Some(theory(cfg, &setup)?.k1)
    } else {
        None
    };
    let radius = pb.ball_norm_sq.resolve(k1).expect("K1 resolved above");
    let grid = &setup.grid;
    let process = &setup.process;
    let sampling = Ensemble::absorbing_ball(grid, radius, pb.per_level, seed(cfg, stream::PULLBACK))?;
    let bounded = Ensemble::sphere(
        grid,
        radius,
        NormKind::H,
        pb.profile_members,
        seed(cfg, stream::PROFILE),
    )?;
    let fiber_at = |tau: f64| approximate_attractor(process, tau, &pb.horizons, &sampling, pb.tol_attr);

    let mut fibers: Vec<AttractorCloud<f64>> = Vec::new();
    let mut reports = Vec::new();
    let mut history_rows = Vec::new();
    let mut profile_rows = Vec::new();
    let mut projection_rows = Vec::new();
    let mut unconverged = 0;
    for (k, &tau) in pb.taus.iter().enumerate() {
        let cloud = fiber_at(tau)?;
        if !cloud.converged {
            unconverged += 1;
        }
        let dim = fiber_dimension(grid, &cloud.members, &pb.scales);
        let profile = attraction_profile(process, &bounded, &cloud, &pb.profile_horizons)?;
        let rate = attraction_rate(&pb.profile_horizons, &profile);
        let monotone = nonincreasing_after_peak(&profile, PROFILE_NOISE, pb.tol_attr);
        let distance_to_first = match fibers.first() {
            Some(first) => num(hausdorff(grid, &first.members, &cloud.members, NormKind::H)?),
            None => json!(0.0),
        };
        let mut invariance = Vec::new();
        for &delta in &pb.invariance_deltas {
            let later = fiber_at(tau + delta)?;
            let (fwd, bwd) = invariance_distances(process, &cloud, &later)?;
            invariance.push(json!({ "delta": num(delta), "forward": num(fwd), "backward": num(bwd) }));
        }

        let dir = format!("fibers/tau_{k:03}");
        for (i, m) in cloud.members.iter().enumerate() {
            out.emit(&format!("{dir}/member_{i:04}.bin"), |b| write_field_binary(b, grid, m))?;
            let mut row = vec![k as f64, i as f64];
            row.extend(project(grid, m)?);
            projection_rows.push(row);
        }
        let dim_hat = match &dim {
            Ok(b) => num(b.dimension),
            Err(_) => Value::Null,
        };
        let sigma_hat = match &rate {
            Ok(r) => num(r.sigma),
            Err(_) => Value::Null,
        };
        let fiber_json = json!({
            "tau": num(tau),
            "horizon": num(cloud.horizon),
            "members": cloud.members.len(),
            "history": cloud.history.iter().map(|&(h, d)| json!([num(h), num(d)])).collect::<Vec<_>>(),
            "converged": cloud.converged,
            "tol_attr": num(cloud.tol_attr),
            "diameter": num(cloud.diameter(grid)),
            "dim_hat": dim_hat,
            "dim_error": dim.as_ref().err().map(|e| e.to_string()),
            "sigma_hat": sigma_hat,
            "sigma_error": rate.as_ref().err().map(|e| e.to_string()),
        });
        out.json(&format!("{dir}/fiber.json"), &fiber_json)?;
        for &(h, d) in &cloud.history {
            history_rows.push(vec![k as f64, h, d]);
        }
        for (&h, &d) in pb.profile_horizons.iter().zip(&profile) {
            profile_rows.push(vec![k as f64, h, d]);
        }
        reports.push(json!({
            "fiber": fiber_json,
            "profile": profile.iter().map(|&d| num(d)).collect::<Vec<_>>(),
            "profile_monotone": monotone,
            "distance_to_first": distance_to_first,
            "invariance": invariance,
        }));
        fibers.push(cloud);
    }
    out.write(
        "convergence.dat",
        &columns(&["tau_index", "horizon", "hausdorff_step"], &history_rows)?,
    )?;
    out.write(
        "attraction.dat",
        &columns(&["tau_index", "horizon", "distance"], &profile_rows)?,
    )?;
    out.write(
        "projection.dat",
        &columns(
            &["tau_index", "member", "u0", "u1", "u2", "v0", "v1", "v2", "w0", "w1"],
            &projection_rows,
        )?,
    )?;
    out.json(
        "pullback.json",
        &json!({
            "sampling": {
                "radius_sq": num(radius),
                "members": sampling.len(),
                "profile_members": bounded.len(),
            },
            "horizons": pb.horizons.iter().map(|&h| num(h)).collect::<Vec<_>>(),
            "profile_horizons": pb.profile_horizons.iter().map(|&h| num(h)).collect::<Vec<_>>(),
            "fibers": reports,
        }),
    )?;
    Ok((
        0,
        format!(
            "pullback: {} fibres of {} members, {} not converged",
            fibers.len(),
            sampling.len(),
            unconverged
        ),
    ))
}
