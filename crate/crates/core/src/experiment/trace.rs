use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

pub const TRACE_HEADER: [&str; 6] = [
    "method",
    "seed",
    "epoch",
    "inner_iter",
    "residual_sq_rel",
    "cum_uplink_bits_per_device",
];

#[derive(Debug, Error)]
pub enum TraceIoError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("bad trace row {row}: {message}")]
    Parse { row: usize, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub method: String,
    pub seed: u64,
    pub epoch: usize,
    pub inner_iter: usize,
    pub residual_sq_rel: f64,
    pub cum_uplink_bits_per_device: u64,
}

/// Residual-versus-bits series, possibly for several (method, seed) pairs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub rows: Vec<TraceRow>,
}

/// 17 significant digits; parses back to the identical `f64`.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

impl Trace {
    pub fn write_to<W: Write>(&self, out: W) -> Result<(), TraceIoError> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        w.write_record(TRACE_HEADER)?;
        for r in &self.rows {
            w.write_record([
                r.method.clone(),
                r.seed.to_string(),
                r.epoch.to_string(),
                r.inner_iter.to_string(),
                format_f64(r.residual_sq_rel),
                r.cum_uplink_bits_per_device.to_string(),
            ])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn read_from<R: Read>(input: R) -> Result<Trace, TraceIoError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(input);
        let header = rdr.headers()?.clone();
        if header.iter().ne(TRACE_HEADER.iter().copied()) {
            return Err(TraceIoError::Parse {
                row: 0,
                message: format!("unexpected header {header:?}"),
            });
        }
        let mut rows = Vec::new();
        for (idx, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let row = idx + 1;
            let field = |i: usize| rec.get(i).unwrap_or_default();
            let bad = |e: &dyn std::fmt::Display| TraceIoError::Parse {
                row,
                message: e.to_string(),
            };
            rows.push(TraceRow {
                method: field(0).to_string(),
                seed: field(1).parse().map_err(|e| bad(&e))?,
                epoch: field(2).parse().map_err(|e| bad(&e))?,
                inner_iter: field(3).parse().map_err(|e| bad(&e))?,
                residual_sq_rel: field(4).parse().map_err(|e| bad(&e))?,
                cum_uplink_bits_per_device: field(5).parse().map_err(|e| bad(&e))?,
            });
        }
        Ok(Trace { rows })
    }

    /// Rows of one (method, seed) series, in logged order.
    pub fn series<'a>(
        &'a self,
        method: &'a str,
        seed: u64,
    ) -> impl Iterator<Item = &'a TraceRow> + 'a {
        self.rows
            .iter()
            .filter(move |r| r.method == method && r.seed == seed)
    }
}

/// Writes `trace` to `path` as CSV (UTF-8, LF line endings).
pub fn emit_trace_csv(trace: &Trace, path: &Path) -> Result<(), TraceIoError> {
    let io_err = |source| TraceIoError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    trace.write_to(BufWriter::new(file))
}

pub fn read_trace_csv(path: &Path) -> Result<Trace, TraceIoError> {
    let file = File::open(path).map_err(|source| TraceIoError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Trace::read_from(std::io::BufReader::new(file))
}
