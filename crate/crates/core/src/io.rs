//! CSV and JSON artifacts.
//!
//! Floats are written with Rust's shortest round-trip formatting, so parsing
//! a written value gives back the identical `f64`.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::analysis::SweepRow;
use crate::dynamics::DynamicsResult;
use crate::error::{Error, Result};

pub const DYNAMICS_HEADER: &str = "t,E_B,P_B,eta_B,S_vN,S_vN_norm,E_total";
pub const SWEEP_HEADER: &str = "point,E_max,P_max,t_E,t_P,eta_at_tE,eta_at_tP,SvN_at_tE,SvN_at_tP";

fn push_row(out: &mut String, r: &DynamicsResult, i: usize) {
    let cols = [r.t[i], r.e_b[i], r.p_b[i], r.eta_b[i], r.s_vn[i], r.s_vn_norm[i], r.e_total[i]];
    for (k, x) in cols.iter().enumerate() {
        if k > 0 {
            out.push(',');
        }
        let _ = write!(out, "{x:?}");
    }
}

pub fn dynamics_csv(r: &DynamicsResult) -> String {
    let mut out = String::with_capacity(64 * (r.len() + 1));
    out.push_str(DYNAMICS_HEADER);
    out.push('\n');
    for i in 0..r.len() {
        push_row(&mut out, r, i);
        out.push('\n');
    }
    out
}

/// Several runs in one table with a trailing `realization` column.
pub fn dynamics_csv_realizations<'a>(runs: impl IntoIterator<Item = (usize, &'a DynamicsResult)>) -> String {
    let mut out = String::new();
    out.push_str(DYNAMICS_HEADER);
    out.push_str(",realization\n");
    for (id, r) in runs {
        for i in 0..r.len() {
            push_row(&mut out, r, i);
            let _ = writeln!(out, ",{id}");
        }
    }
    out
}

/// Reads the columns written by [`dynamics_csv`] (diagnostics are not stored).
pub fn parse_dynamics_csv(text: &str) -> Result<DynamicsResult> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("");
    if header != DYNAMICS_HEADER {
        return Err(Error::Config { line: 1, reason: format!("unexpected header `{header}`") });
    }
    let mut r = DynamicsResult::default();
    for (i, line) in lines.enumerate() {
        let vals: Vec<f64> = line
            .split(',')
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Config { line: i + 2, reason: e.to_string() })?;
        if vals.len() != 7 {
            return Err(Error::Config { line: i + 2, reason: format!("expected 7 fields, got {}", vals.len()) });
        }
        r.t.push(vals[0]);
        r.e_b.push(vals[1]);
        r.p_b.push(vals[2]);
        r.eta_b.push(vals[3]);
        r.s_vn.push(vals[4]);
        r.s_vn_norm.push(vals[5]);
        r.e_total.push(vals[6]);
    }
    Ok(r)
}

/// Sweep table; failed points are written with NaN fields.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::new();
    out.push_str(SWEEP_HEADER);
    out.push('\n');
    for row in rows {
        let vals = match &row.outcome {
            Ok(o) => {
                let (e, p) = (&o.maxima.energy, &o.maxima.power);
                [
                    e.record.value,
                    p.record.value,
                    e.record.time,
                    p.record.time,
                    e.eta_b,
                    p.eta_b,
                    e.s_vn_norm,
                    p.s_vn_norm,
                ]
            }
            Err(_) => [f64::NAN; 8],
        };
        let _ = write!(out, "{}", row.point);
        for x in vals {
            let _ = write!(out, ",{x:?}");
        }
        out.push('\n');
    }
    out
}

/// Writes `bytes` to a temporary sibling and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().ok_or_else(|| Error::Io(std::io::Error::other("path has no file name")))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })?;
    Ok(())
}

pub fn write_json_atomic<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}
