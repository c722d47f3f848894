//! CSV and JSON outputs.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::slow::RescaledPath;
use crate::stats::{Histogram, MomentPoint, TailFit};

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Json(#[from] serde_json::Error),
}

pub type IoResult<T> = std::result::Result<T, IoError>;

#[derive(Serialize)]
struct DensityRow<'a> {
    bin_left: f64,
    bin_right: f64,
    mass: f64,
    source: &'a str,
}

#[derive(Serialize)]
struct MomentRow<'a> {
    t: f64,
    mean_abs: f64,
    se: f64,
    source: &'a str,
}

#[derive(Serialize)]
struct PathRow {
    realization_id: u64,
    t: f64,
    x: f64,
}

/// One row of `tail.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailRow {
    pub source: String,
    pub method: String,
    pub lo: f64,
    pub hi: f64,
    pub exponent: f64,
    pub points: usize,
    pub samples: usize,
}

impl TailRow {
    pub fn from_fit(source: &str, fit: &TailFit) -> Self {
        Self {
            source: source.to_string(),
            method: "loglog".into(),
            lo: fit.lo,
            hi: fit.hi,
            exponent: fit.exponent(),
            points: fit.points,
            samples: fit.samples,
        }
    }
}

fn writer(path: &Path) -> IoResult<csv::Writer<BufWriter<File>>> {
    Ok(csv::Writer::from_writer(BufWriter::new(File::create(
        path,
    )?)))
}

/// `bin_left,bin_right,mass,source`.
pub fn write_density(path: &Path, densities: &[(String, Histogram)]) -> IoResult<()> {
    let mut w = writer(path)?;
    for (source, h) in densities {
        for (k, &mass) in h.masses.iter().enumerate() {
            let (bin_left, bin_right) = h.edges(k);
            w.serialize(DensityRow {
                bin_left,
                bin_right,
                mass,
                source,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `t,mean_abs,se,source`.
pub fn write_moments(path: &Path, curves: &[(String, Vec<MomentPoint>)]) -> IoResult<()> {
    let mut w = writer(path)?;
    for (source, curve) in curves {
        for m in curve {
            w.serialize(MomentRow {
                t: m.t,
                mean_abs: m.mean_abs,
                se: m.se,
                source,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `realization_id,t,x`.
pub fn write_paths(path: &Path, paths: &[(u64, RescaledPath)]) -> IoResult<()> {
    let mut w = writer(path)?;
    for (id, p) in paths {
        for (t, &x) in p.times().zip(&p.values) {
            w.serialize(PathRow {
                realization_id: *id,
                t,
                x,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `source,method,lo,hi,exponent,points,samples`.
pub fn write_tail(path: &Path, rows: &[TailRow]) -> IoResult<()> {
    let mut w = writer(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json(path: &Path, value: &impl Serialize) -> IoResult<()> {
    let mut f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(())
}
