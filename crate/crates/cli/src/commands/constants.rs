//! `constants`: every constant of the estimates, with its provenance.

use serde_json::{json, Map, Value};

use hrlab::estimates::compute_tb;

use super::{theory, Setup};
use crate::config::ExperimentConfig;
use crate::output::{columns, num, OutDir};
use crate::CliError;

pub fn run(cfg: &ExperimentConfig, out: &mut OutDir) -> Result<(usize, String), CliError> {
    let setup = Setup::new(cfg)?;
    let c = theory(cfg, &setup)?;
    let mut table = Map::new();
    for e in c.entries() {
        table.insert(
            e.name.to_string(),
            json!({
                "value": e.value.map_or(Value::Null, num),
                "ln_value": num(e.ln_value),
                "provenance": if e.measured { "measured" } else { "formula" },
            }),
        );
    }
    let report = json!({
        "constants": table,
        "inputs": {
            "omega_measure": num(c.omega_measure),
            "p_bound": num(c.p_bound),
            "t_mstar": num(c.t_mstar),
        },
    });
    out.json("constants.json", &report)?;
    let rows: Vec<Vec<f64>> = (0..=16)
        .map(|k| {
            let b = c.k1 * 10f64.powf(k as f64 / 4.0);
            vec![b, compute_tb(&c, b)]
        })
        .collect();
    out.write("absorbing_time.dat", &columns(&["b_norm_sq", "t_b"], &rows)?)?;
    Ok((
        0,
        format!("constants: K1 = {:e}, delta = {}, ln K2 = {}", c.k1, c.delta, c.ln_k2),
    ))
}
