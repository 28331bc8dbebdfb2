//! File formats shared by the library and the command-line tool.
//!
//! JSON numbers are written in shortest round-trip form, so reloading a file
//! reproduces every double bit for bit. Trajectory CSV uses 17 significant
//! digits.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::dynamics::{Trajectory, TrajectoryStatus};
use crate::error::{Error, Result};
use crate::quadratic::{QuadraticMap, StateVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct QuadraticMapFile {
    dim: usize,
    coeffs: Vec<f64>,
}

pub fn quadratic_map_to_json(q: &QuadraticMap) -> String {
    let file = QuadraticMapFile { dim: q.dim(), coeffs: q.coeffs().to_vec() };
    serde_json::to_string_pretty(&file).expect("plain data serializes")
}

/// Parses `{"dim": n, "coeffs": [...]}`, symmetrizes, and returns the map with
/// its symmetrization defect `max |c[i][j][k] − c[i][k][j]|`.
pub fn quadratic_map_from_json(text: &str) -> Result<(QuadraticMap, f64)> {
    let file: QuadraticMapFile = serde_json::from_str(text)?;
    QuadraticMap::with_defect(file.dim, file.coeffs)
}

/// Any emitted JSON object tagged with the effective seed and tool version.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope<T> {
    pub seed: u64,
    pub tool_version: String,
    #[serde(flatten)]
    pub body: T,
}

/// JSON sidecar written next to a trajectory CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySummary {
    #[serde(flatten)]
    pub status: TrajectoryStatus,
    pub dim: usize,
    pub steps: usize,
    pub final_time: f64,
    pub final_norm: f64,
}

impl TrajectorySummary {
    pub fn of(traj: &Trajectory) -> Self {
        TrajectorySummary {
            status: traj.status,
            dim: traj.last_state().dim(),
            steps: traj.times.len() - 1,
            final_time: traj.last_time(),
            final_norm: traj.last_norm(),
        }
    }
}

fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

/// Header `t,norm,coord_0,...,coord_{n-1}`, one row per stored state.
pub fn write_trajectory_csv<W: Write>(traj: &Trajectory, mut out: W) -> std::io::Result<()> {
    let n = traj.last_state().dim();
    let mut header = String::from("t,norm");
    for i in 0..n {
        header.push_str(&format!(",coord_{i}"));
    }
    writeln!(out, "{header}")?;
    for ((t, r), x) in traj.times.iter().zip(&traj.norms).zip(&traj.states) {
        let mut row = format!("{},{}", fmt17(*t), fmt17(*r));
        for c in x.coords() {
            row.push(',');
            row.push_str(&fmt17(*c));
        }
        writeln!(out, "{row}")?;
    }
    Ok(())
}

/// Rows of a trajectory CSV as `(t, norm, state)`.
pub fn read_trajectory_csv<R: BufRead>(input: R) -> Result<Vec<(f64, f64, StateVector)>> {
    let mut lines = input.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Format("empty trajectory csv".into()))?
        .map_err(|e| Error::Format(e.to_string()))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 3 || cols[0] != "t" || cols[1] != "norm" {
        return Err(Error::Format(format!("unexpected trajectory header: {header}")));
    }
    let mut rows = Vec::new();
    for line in lines {
        let line = line.map_err(|e| Error::Format(e.to_string()))?;
        if line.is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split(',')
            .map(|s| s.parse::<f64>().map_err(|e| Error::Format(format!("{s}: {e}"))))
            .collect::<Result<_>>()?;
        if vals.len() != cols.len() {
            return Err(Error::Format(format!("row has {} fields, header {}", vals.len(), cols.len())));
        }
        rows.push((vals[0], vals[1], StateVector::new(vals[2..].to_vec())?));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{integrate, IntegratorConfig};
    use crate::quadratic::{matrix_square_map, random_quadratic_map};

    #[test]
    fn quadratic_map_round_trip_bits() {
        let q = random_quadratic_map(3, 77).unwrap();
        let (back, defect) = quadratic_map_from_json(&quadratic_map_to_json(&q)).unwrap();
        assert_eq!(defect, 0.0);
        assert_eq!(back, q);
    }

    #[test]
    fn quadratic_map_loader_errors() {
        assert!(quadratic_map_from_json(r#"{"dim": 2, "coeffs": [1, 2]}"#).is_err());
        assert!(quadratic_map_from_json(r#"{"dim": 2"#).is_err());
        let (_, defect) =
            quadratic_map_from_json(r#"{"dim": 1, "coeffs": [-1.0]}"#).unwrap();
        assert_eq!(defect, 0.0);
    }

    #[test]
    fn state_vector_json() {
        let x: StateVector = serde_json::from_str(r#"{"coords": [1.5, -2]}"#).unwrap();
        assert_eq!(x.coords(), &[1.5, -2.0]);
        assert!(serde_json::from_str::<StateVector>(r#"{"coords": []}"#).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let q = matrix_square_map(1).unwrap();
        let x0 = StateVector::new(vec![0.7]).unwrap();
        let traj = integrate(&q, &x0, &IntegratorConfig::with_t_end(1.0)).unwrap();
        let mut buf = Vec::new();
        write_trajectory_csv(&traj, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,norm,coord_0\n"));
        let rows = read_trajectory_csv(&buf[..]).unwrap();
        assert_eq!(rows.len(), traj.times.len());
        for ((t, r, x), (tt, (rr, xx))) in rows.iter().zip(traj.times.iter().zip(traj.norms.iter().zip(&traj.states))) {
            assert_eq!(t.to_bits(), tt.to_bits());
            assert_eq!(r.to_bits(), rr.to_bits());
            assert_eq!(x, xx);
        }
    }

    #[test]
    fn sidecar_flattens_status() {
        let q = matrix_square_map(1).unwrap();
        let traj = integrate(&q, &StateVector::new(vec![-1.0]).unwrap(), &IntegratorConfig::with_t_end(2.0)).unwrap();
        let env = Envelope { seed: 3, tool_version: "x".into(), body: TrajectorySummary::of(&traj) };
        let v: serde_json::Value = serde_json::to_value(&env).unwrap();
        assert_eq!(v["status"], "BlowupDetected");
        assert!(v["estimated_time"].is_number());
        assert_eq!(v["seed"], 3);
    }
}
