//! CSV and JSON export/import. Floats print in shortest round-trip form so
//! re-parsing a trajectory reproduces it exactly.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Serialize;

use driftlab::diagnostics::DiagnosticsRecord;
use driftlab::dynamics::Trajectory;
use driftlab::experiments::CurlMap;

pub fn write_trajectory_csv(path: &Path, traj: &Trajectory) -> Result<()> {
    let mut w =
        csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    let d = traj.meta.dim;
    let mut header = vec!["t".to_string(), "particle_id".to_string()];
    header.extend((0..d).map(|m| format!("x_{m}")));
    w.write_record(&header)?;
    for (t, state) in traj.times.iter().zip(&traj.states) {
        for (i, p) in state.positions().iter().enumerate() {
            let mut row = vec![format!("{t}"), format!("{i}")];
            row.extend(p.iter().map(|x| format!("{x}")));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Re-parse a trajectory CSV into (times, states-as-positions).
pub fn read_trajectory_csv(path: &Path) -> Result<(Vec<f64>, Vec<Vec<Vec<f64>>>)> {
    let mut r =
        csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let headers = r.headers()?.clone();
    let d = headers.iter().filter(|h| h.starts_with("x_")).count();
    if d == 0 {
        bail!("no coordinate columns in {}", path.display());
    }
    let mut times: Vec<f64> = Vec::new();
    let mut states: Vec<Vec<Vec<f64>>> = Vec::new();
    for record in r.records() {
        let record = record?;
        let t: f64 = record[0].parse()?;
        let id: usize = record[1].parse()?;
        let point: Vec<f64> = (0..d)
            .map(|m| record[2 + m].parse::<f64>())
            .collect::<std::result::Result<_, _>>()?;
        if times.last().is_none_or(|&last| last != t) {
            times.push(t);
            states.push(Vec::new());
        }
        let state = states.last_mut().unwrap();
        if id != state.len() {
            bail!("particle ids out of order in {}", path.display());
        }
        state.push(point);
    }
    Ok((times, states))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

pub fn write_diagnostics_csv(path: &Path, records: &[DiagnosticsRecord]) -> Result<()> {
    let mut w =
        csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record([
        "t",
        "v_n",
        "s_n",
        "r_n",
        "min_q",
        "i_n",
        "curl_max_abs",
        "v_n_lap",
        "j_lap",
        "vcal_lap",
        "delta_sq",
    ])?;
    for r in records {
        w.write_record(&[
            format!("{}", r.t),
            format!("{}", r.v_n),
            format!("{}", r.s_n),
            format!("{}", r.r_n),
            format!("{}", r.min_q),
            fmt_opt(r.i_n),
            fmt_opt(r.curl_max_abs),
            fmt_opt(r.v_n_lap),
            fmt_opt(r.j_lap),
            fmt_opt(r.vcal_lap),
            fmt_opt(r.delta_sq),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_curl_csv(path: &Path, map: &CurlMap) -> Result<()> {
    let mut w =
        csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(["x_0", "x_1", "curl"])?;
    for (ix, x) in map.xs.iter().enumerate() {
        for (iy, y) in map.ys.iter().enumerate() {
            w.write_record(&[
                format!("{x}"),
                format!("{y}"),
                format!("{}", map.values[ix][iy]),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text.as_bytes()).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}
