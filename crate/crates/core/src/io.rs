//! File formats: binary and CSV field snapshots, trajectory and violation
//! CSVs, and whitespace-separated column files for plotting.
//!
//! Reals are written in Rust's shortest round-trip form, so output is
//! byte-identical across runs.

use std::io::{self, Read, Write};

use crate::error::{HrError, Result};
use crate::estimates::Violation;
use crate::grid::{Grid, StateField};
use crate::scalar::Real;
use crate::solver::{Sample, Trajectory};

fn io_err(e: io::Error) -> HrError {
    HrError::InvalidInput(format!("i/o: {e}"))
}

/// Header `dim, n₁, …, n_dim` as little-endian `u64`, then `u`, `v`, `w` as
/// little-endian `f64`, row-major.
pub fn write_field_binary<S: Real>(mut out: impl Write, grid: &Grid<S>, g: &StateField<S>) -> Result<()> {
    g.check(grid)?;
    let mut buf = Vec::with_capacity(8 * (1 + grid.dim() + 3 * grid.len()));
    buf.extend_from_slice(&(grid.dim() as u64).to_le_bytes());
    for n in grid.node_counts() {
        buf.extend_from_slice(&(n as u64).to_le_bytes());
    }
    for comp in g.components() {
        for &x in comp {
            buf.extend_from_slice(&x.to64().to_le_bytes());
        }
    }
    out.write_all(&buf).map_err(io_err)
}

/// Inverse of [`write_field_binary`]; the node counts must match `grid`.
pub fn read_field_binary<S: Real>(mut input: impl Read, grid: &Grid<S>) -> Result<StateField<S>> {
    let mut word = [0u8; 8];
    let mut next = |input: &mut dyn Read| -> Result<[u8; 8]> {
        input.read_exact(&mut word).map_err(io_err)?;
        Ok(word)
    };
    let dim = u64::from_le_bytes(next(&mut input)?) as usize;
    if dim != grid.dim() {
        return Err(HrError::ShapeMismatch {
            expected: grid.dim(),
            found: dim,
        });
    }
    for n in grid.node_counts() {
        let found = u64::from_le_bytes(next(&mut input)?) as usize;
        if found != n {
            return Err(HrError::ShapeMismatch { expected: n, found });
        }
    }
    let mut comps: [Vec<S>; 3] = Default::default();
    for comp in comps.iter_mut() {
        comp.reserve(grid.len());
        for _ in 0..grid.len() {
            comp.push(S::lit(f64::from_le_bytes(next(&mut input)?)));
        }
    }
    let [u, v, w] = comps;
    StateField::from_components(grid, u, v, w)
}

fn axis_names(dim: usize) -> &'static [&'static str] {
    &["x1", "x2", "x3"][..dim]
}

/// Columns: coordinates, `u`, `v`, `w`.
pub fn write_field_csv<S: Real>(mut out: impl Write, grid: &Grid<S>, g: &StateField<S>) -> Result<()> {
    g.check(grid)?;
    let mut s = String::new();
    for a in axis_names(grid.dim()) {
        s.push_str(a);
        s.push(',');
    }
    s.push_str("u,v,w\n");
    for i in 0..grid.len() {
        let x = grid.coords(i);
        for xa in &x[..grid.dim()] {
            s.push_str(&format!("{},", xa.to64()));
        }
        s.push_str(&format!("{},{},{}\n", g.u[i].to64(), g.v[i].to64(), g.w[i].to64()));
    }
    out.write_all(s.as_bytes()).map_err(io_err)
}

pub const TRAJECTORY_COLUMNS: [&str; 10] = [
    "t",
    "u_sq",
    "v_sq",
    "w_sq",
    "grad_sq",
    "l4_pow4",
    "p_sq",
    "grad_u_sq",
    "grad_v_sq",
    "grad_w_sq",
];

/// One row per sample. The per-component gradients trail the summary
/// columns so that a file can be monitored again after the fact.
pub fn write_trajectory_csv<S: Real>(mut out: impl Write, traj: &Trajectory<S>) -> Result<()> {
    let mut s = TRAJECTORY_COLUMNS.join(",");
    s.push('\n');
    for (t, x) in traj.times.iter().zip(&traj.samples) {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            t.to64(),
            x.u_sq.to64(),
            x.v_sq.to64(),
            x.w_sq.to64(),
            x.grad_sq().to64(),
            x.l4_pow4.to64(),
            x.p_sq.to64(),
            x.grad_u_sq.to64(),
            x.grad_v_sq.to64(),
            x.grad_w_sq.to64()
        ));
    }
    out.write_all(s.as_bytes()).map_err(io_err)
}

/// Inverse of [`write_trajectory_csv`] for the monitored norms. Fields are
/// not part of the file, so the snapshots and `final_state` come back
/// empty, and `steps` holds sample indices.
pub fn read_trajectory_csv<S: Real>(input: impl Read) -> Result<Trajectory<S>> {
    let mut text = String::new();
    io::BufReader::new(input).read_to_string(&mut text).map_err(io_err)?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    if header.split(',').ne(TRAJECTORY_COLUMNS) {
        return Err(HrError::InvalidInput(format!(
            "unexpected trajectory header `{header}`"
        )));
    }
    let mut times = Vec::new();
    let mut samples = Vec::new();
    for (row, line) in lines.enumerate() {
        let cells = line
            .split(',')
            .map(|c| c.trim().parse::<f64>().map(S::lit))
            .collect::<std::result::Result<Vec<S>, _>>()
            .map_err(|e| HrError::InvalidInput(format!("trajectory row {}: {e}", row + 1)))?;
        if cells.len() != TRAJECTORY_COLUMNS.len() {
            return Err(HrError::ShapeMismatch {
                expected: TRAJECTORY_COLUMNS.len(),
                found: cells.len(),
            });
        }
        times.push(cells[0]);
        samples.push(Sample {
            u_sq: cells[1],
            v_sq: cells[2],
            w_sq: cells[3],
            l4_pow4: cells[5],
            p_sq: cells[6],
            grad_u_sq: cells[7],
            grad_v_sq: cells[8],
            grad_w_sq: cells[9],
        });
    }
    let Some(&tau) = times.first() else {
        return Err(HrError::InsufficientData("trajectory file has no samples".into()));
    };
    let dt = if times.len() > 1 { times[1] - tau } else { S::zero() };
    let empty = StateField {
        u: vec![],
        v: vec![],
        w: vec![],
    };
    Ok(Trajectory {
        tau,
        dt,
        steps: (0..times.len() as u64).collect(),
        times,
        samples,
        snapshot_times: vec![],
        snapshots: vec![],
        final_state: empty,
        stabilized_steps: 0,
    })
}

/// Columns `step, t, lhs, rhs, slack`.
pub fn write_violations_csv<S: Real>(mut out: impl Write, violations: &[Violation<S>]) -> Result<()> {
    let mut s = String::from("step,t,lhs,rhs,slack\n");
    for v in violations {
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            v.step,
            v.t.to64(),
            v.lhs.to64(),
            v.rhs.to64(),
            v.slack.to64()
        ));
    }
    out.write_all(s.as_bytes()).map_err(io_err)
}

/// Whitespace-separated columns under a `# name name …` header.
pub fn write_columns(mut out: impl Write, names: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    if let Some(r) = rows.iter().find(|r| r.len() != names.len()) {
        return Err(HrError::ShapeMismatch {
            expected: names.len(),
            found: r.len(),
        });
    }
    let mut s = format!("# {}\n", names.join(" "));
    for r in rows {
        let cells: Vec<String> = r.iter().map(|x| x.to_string()).collect();
        s.push_str(&cells.join(" "));
        s.push('\n');
    }
    out.write_all(s.as_bytes()).map_err(io_err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Forcing, HrParameters};
    use crate::solver::{evolve, ProcessConfig};

    #[test]
    fn binary_round_trip() {
        let g = Grid::<f64>::new(&[1.0, 2.0], &[3, 4]).unwrap();
        let f = StateField::from_fn(&g, |x| [x[0], x[1] * 2.0, x[0] - x[1]]);
        let mut buf = Vec::new();
        write_field_binary(&mut buf, &g, &f).unwrap();
        assert_eq!(buf.len(), 8 * (3 + 3 * 20));
        assert_eq!(&buf[..8], &2u64.to_le_bytes());
        assert_eq!(&buf[8..16], &4u64.to_le_bytes());
        assert_eq!(read_field_binary(&buf[..], &g).unwrap(), f);
        let other = Grid::<f64>::new(&[1.0, 2.0], &[3, 5]).unwrap();
        assert!(read_field_binary(&buf[..], &other).is_err());
        assert!(read_field_binary(&buf[..20], &g).is_err());
    }

    #[test]
    fn field_csv_layout() {
        let g = Grid::<f64>::interval(1.0, 2).unwrap();
        let f = StateField::uniform(&g, [1.0, 2.0, 3.0]);
        let mut buf = Vec::new();
        write_field_csv(&mut buf, &g, &f).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "x1,u,v,w\n0,1,2,3\n0.5,1,2,3\n1,1,2,3\n"
        );
    }

    #[test]
    fn trajectory_csv_rows() {
        let g = Grid::<f64>::interval(1.0, 8).unwrap();
        let p = HrParameters::default();
        let f = Forcing::zero(&g);
        let cfg = ProcessConfig::default().with_stride(10);
        let tr = evolve(&StateField::zeros(&g), 0.0, 0.05, &p, &f, &g, &cfg).unwrap();
        let mut buf = Vec::new();
        write_trajectory_csv(&mut buf, &tr).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 50 / 10 + 1);
        assert!(text.starts_with("t,u_sq,v_sq,w_sq,grad_sq,l4_pow4,p_sq,grad_u_sq,grad_v_sq,grad_w_sq\n"));
        let back: Trajectory<f64> = read_trajectory_csv(text.as_bytes()).unwrap();
        assert_eq!(back.times, tr.times);
        assert_eq!(back.samples, tr.samples);
        assert!(read_trajectory_csv::<f64>(&b"t,u\n0,1\n"[..]).is_err());
        assert!(read_trajectory_csv::<f64>(&text.as_bytes()[..text.find('\n').unwrap() + 1]).is_err());
    }

    #[test]
    fn columns_reject_ragged_rows() {
        let mut buf = Vec::new();
        write_columns(&mut buf, &["a", "b"], &[vec![1.0, 2.5]]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "# a b\n1 2.5\n");
        assert!(write_columns(Vec::new(), &["a"], &[vec![1.0, 2.0]]).is_err());
    }
}
