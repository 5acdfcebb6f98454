use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::diagnostics::EnergyReport;
use crate::integrator::CoefficientTrajectory;
use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 16] = b"PFSICHECKPOINT01";

const SERIES_HEADER: [&str; 8] = [
    "t",
    "E",
    "dissipation",
    "power",
    "residual",
    "mean_eta",
    "sup_eta",
    "periodicity_defect",
];

/// Scientific notation with 17 significant digits.
fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// Time series of a report. Midpoint columns are blank on the last row.
pub fn write_series(path: &Path, report: &EnergyReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(SERIES_HEADER)?;
    for (i, &t) in report.times.iter().enumerate() {
        let mid = |v: &[f64]| v.get(i).map(|x| num(*x)).unwrap_or_default();
        w.write_record([
            num(t),
            num(report.energy[i]),
            mid(&report.dissipation),
            mid(&report.power),
            mid(&report.residual),
            num(report.mean_eta[i]),
            num(report.sup_eta[i]),
            num(report.periodicity_defect),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Shapes and bookkeeping stored next to the binary arrays.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub n: usize,
    pub nt: usize,
    pub period: f64,
    /// Outer iterations already spent on the stored iterate.
    pub iterations: usize,
    /// Array order in the binary file.
    pub arrays: Vec<String>,
}

fn sidecar(path: &Path) -> PathBuf {
    path.with_extension("json")
}

/// Write `traj` to `path` (binary) and its `.json` sidecar.
pub fn save_checkpoint(path: &Path, traj: &CoefficientTrajectory, iterations: usize) -> Result<()> {
    let (n, nt) = (traj.n(), traj.nt());
    let mut bytes = Vec::with_capacity(16 + 16 * n * (nt + 1));
    bytes.extend_from_slice(CHECKPOINT_MAGIC);
    for row in traj.values.iter().chain(&traj.derivatives) {
        for v in row {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, bytes)?;
    let meta = CheckpointMeta {
        n,
        nt,
        period: traj.period,
        iterations,
        arrays: vec!["values[nt+1][n]".into(), "derivatives[nt+1][n]".into()],
    };
    write_json(&sidecar(path), &meta)
}

pub fn load_checkpoint(path: &Path) -> Result<(CoefficientTrajectory, CheckpointMeta)> {
    let meta: CheckpointMeta = serde_json::from_str(&fs::read_to_string(sidecar(path))?)?;
    let bytes = fs::read(path)?;
    let (n, rows) = (meta.n, meta.nt + 1);
    let expected = 16 + 2 * rows * n * 8;
    if bytes.len() != expected {
        return Err(Error::Checkpoint(format!("expected {expected} bytes, found {}", bytes.len())));
    }
    if &bytes[..16] != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("bad magic header".into()));
    }
    let floats: Vec<f64> = bytes[16..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    let mut rows_iter = floats.chunks_exact(n.max(1)).map(<[f64]>::to_vec);
    let values: Vec<Vec<f64>> = rows_iter.by_ref().take(rows).collect();
    let derivatives: Vec<Vec<f64>> = rows_iter.collect();
    let traj = CoefficientTrajectory {
        period: meta.period,
        values,
        derivatives,
    };
    Ok((traj, meta))
}
