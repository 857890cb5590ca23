use std::io::Write;

use super::{RegionLabel, Spectrum};
use crate::error::Result;

/// Writes `frequency_hz,magnitude` rows.
pub fn write_spectrum_csv<W: Write>(out: W, spectrum: &Spectrum) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["frequency_hz", "magnitude"]).map_err(csv_err)?;
    for (f, m) in spectrum.frequencies().iter().zip(spectrum.magnitudes()) {
        w.write_record([f.to_string(), m.to_string()]).map_err(csv_err)?;
    }
    w.flush().map_err(io_err)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SoiReportRow {
    pub soi_index: usize,
    pub t_start: f64,
    pub fd: f64,
    pub psd: f64,
    pub label: RegionLabel,
}

/// Writes `soi_index,t_start,fd,psd,label` rows.
pub fn write_soi_report<W: Write>(out: W, rows: &[SoiReportRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["soi_index", "t_start", "fd", "psd", "label"]).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.soi_index.to_string(),
            r.t_start.to_string(),
            r.fd.to_string(),
            r.psd.to_string(),
            r.label.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(io_err)?;
    Ok(())
}

fn csv_err(e: csv::Error) -> crate::Error {
    crate::Error::InvalidInput(format!("csv: {e}"))
}

fn io_err(e: std::io::Error) -> crate::Error {
    crate::Error::InvalidInput(format!("csv: {e}"))
}
