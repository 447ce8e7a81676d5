//! CSV and JSON result writers.
//!
//! Floats are written with 17 significant digits so that parsing the text
//! recovers the original values exactly.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::chain::{CouplingMatrix, IonChain};
use crate::error::{Error, Result};
use crate::experiments::{SweepPayload, SweepResult};
use crate::spectral::{TemperatureProfile, TemperatureSeries};

/// Round-trip float formatting.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn row<W: Write + ?Sized>(w: &mut W, first: String, rest: impl IntoIterator<Item = f64>) -> io::Result<()> {
    w.write_all(first.as_bytes())?;
    for v in rest {
        write!(w, ",{}", fmt_f64(v))?;
    }
    writeln!(w)
}

fn ion_header(first: &str, n: usize) -> String {
    let mut h = first.to_string();
    for i in 1..=n {
        h.push_str(&format!(",ion_{i}"));
    }
    h
}

fn mismatch(msg: impl Into<String>) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidInput, msg.into())
}

/// `ion_index,z,omega_i,temperature`, one row per ion.
pub fn write_profile_csv<W: Write + ?Sized>(
    w: &mut W,
    chain: &IonChain,
    coupling: &CouplingMatrix,
    profile: &TemperatureProfile,
) -> io::Result<()> {
    let n = chain.len();
    if coupling.dim() != n || profile.len() != n {
        return Err(mismatch("chain, coupling and profile sizes differ"));
    }
    writeln!(w, "ion_index,z,omega_i,temperature")?;
    for i in 0..n {
        row(
            w,
            (i + 1).to_string(),
            [chain.positions()[i], coupling.local_freqs()[i], profile.temps[i]],
        )?;
    }
    Ok(())
}

/// `ion_index,z,omega_i`, one row per ion.
pub fn write_positions_csv<W: Write + ?Sized>(w: &mut W, chain: &IonChain, coupling: &CouplingMatrix) -> io::Result<()> {
    writeln!(w, "ion_index,z,omega_i")?;
    for (i, (z, om)) in chain.positions().iter().zip(coupling.local_freqs()).enumerate() {
        row(w, (i + 1).to_string(), [*z, *om])?;
    }
    Ok(())
}

/// `time,ion_1,…,ion_N`, one row per grid time.
pub fn write_series_csv<W: Write + ?Sized>(w: &mut W, series: &TemperatureSeries) -> io::Result<()> {
    let n = series.profiles.first().map_or(0, |p| p.len());
    writeln!(w, "{}", ion_header("time", n))?;
    for p in &series.profiles {
        row(w, fmt_f64(p.time), p.temps.iter().copied())?;
    }
    Ok(())
}

/// `gamma1,gamma2,t_m`, row-major with `gamma1` outer.
pub fn write_map_csv<W: Write + ?Sized>(w: &mut W, result: &SweepResult) -> io::Result<()> {
    let (SweepPayload::Scalars(values), [a1, a2]) = (&result.payload, result.axes.as_slice()) else {
        return Err(mismatch("map output needs two axes of scalar results"));
    };
    if values.len() != a1.values.len() * a2.values.len() {
        return Err(mismatch("map size does not match its axes"));
    }
    writeln!(w, "gamma1,gamma2,t_m")?;
    let mut k = 0;
    for &g1 in &a1.values {
        for &g2 in &a2.values {
            row(w, fmt_f64(g1), [g2, values[k]])?;
            k += 1;
        }
    }
    Ok(())
}

/// `<parameter>,ion_1,…,ion_N`, one row per sweep value.
pub fn write_sweep_csv<W: Write + ?Sized>(w: &mut W, result: &SweepResult) -> io::Result<()> {
    let (SweepPayload::Profiles(profiles), [axis]) = (&result.payload, result.axes.as_slice()) else {
        return Err(mismatch("sweep output needs one axis of profiles"));
    };
    if profiles.len() != axis.values.len() {
        return Err(mismatch("sweep size does not match its axis"));
    }
    let n = profiles.first().map_or(0, |p| p.len());
    writeln!(w, "{}", ion_header(axis.parameter.name(), n))?;
    for (v, p) in axis.values.iter().zip(profiles) {
        row(w, fmt_f64(*v), p.temps.iter().copied())?;
    }
    Ok(())
}

/// Pretty-printed JSON followed by a newline.
pub fn write_json<W: Write + ?Sized, T: Serialize + ?Sized>(w: &mut W, value: &T) -> io::Result<()> {
    serde_json::to_writer_pretty(&mut *w, value)?;
    writeln!(w)
}

/// Create `path` and run `body` on a buffered writer, attaching the path to
/// any I/O failure.
pub fn write_file(path: &Path, body: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    body(&mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Header and numeric rows of a CSV table written by this module.
pub fn parse_csv_table(text: &str) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::InvalidArgument("empty CSV table".into()))?
        .split(',')
        .map(str::to_string)
        .collect::<Vec<_>>();
    let rows = lines
        .enumerate()
        .map(|(k, line)| {
            let row = line
                .split(',')
                .map(|f| f.parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| Error::InvalidArgument(format!("CSV row {}: {e}", k + 2)))?;
            if row.len() != header.len() {
                return Err(Error::InvalidArgument(format!("CSV row {} has {} fields", k + 2, row.len())));
            }
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((header, rows))
}
