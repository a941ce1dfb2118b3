//! Plain CSV tables: point sets, vector ranks and cached null spectra.
//!
//! A null table has `kind,key,value` rows:
//!
//! ```text
//! kind,key,value
//! meta,family,star
//! meta,beta,1
//! meta,dim,3
//! meta,nodes,512
//! meta,trace,0.2832
//! meta,windows,1
//! eigenvalue,1,0.0436
//! ...
//! quantile,0.95,0.71
//! ```
//!
//! Quantiles are those of the law the detector tests `Δ̄` against for the
//! recorded window count; only the `meta` and `eigenvalue` rows are needed
//! to rebuild the spectrum.

use std::fs;
use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};
use crate::kernels::{KernelFamily, KernelSpec};
use crate::matrix::Matrix;
use crate::nulldist::{null_weights, quantile, remainder_mass, NullTestParams, Spectrum};
use crate::transport::RankedSample;

/// Levels tabulated by [`NullTable`].
pub const TABLE_LEVELS: [f64; 3] = [0.9, 0.95, 0.99];

/// Headerless CSV, one matrix row per line.
pub fn matrix_csv(m: &Matrix) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in m.iter_rows() {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.into_inner().map_err(|e| Error::Data(e.to_string()))
}

/// Ranked points in input order with a trailing `sigma` column holding the
/// 0-based index of the assigned Sobol point.
pub fn ranks_csv(ranked: &RankedSample) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = (1..=ranked.dim()).map(|j| format!("y{j}")).collect();
    header.push("sigma".into());
    w.write_record(&header)?;
    for (row, s) in ranked.y().iter_rows().zip(ranked.sigma()) {
        let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        rec.push(s.to_string());
        w.write_record(&rec)?;
    }
    w.into_inner().map_err(|e| Error::Data(e.to_string()))
}

/// A spectrum with the quantiles of its null law.
#[derive(Clone, Debug, PartialEq)]
pub struct NullTable {
    pub spectrum: Spectrum,
    pub windows: usize,
    /// `(p, q)` pairs.
    pub quantiles: Vec<(f64, f64)>,
}

impl NullTable {
    /// Tabulates the law of `Δ̄` for `windows` disjoint windows.
    pub fn new(spectrum: Spectrum, windows: usize, params: &NullTestParams) -> Result<Self> {
        if windows == 0 {
            return Err(Error::invalid("window count must be positive"));
        }
        let weights = null_weights(&spectrum, windows);
        let shift = if params.remainder {
            remainder_mass(&spectrum)
        } else {
            0.0
        };
        let quantiles = TABLE_LEVELS
            .iter()
            .map(|&p| Ok((p, quantile(&weights, p, params.terms, params.alpha)? + shift)))
            .collect::<Result<_>>()?;
        Ok(Self {
            spectrum,
            windows,
            quantiles,
        })
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let k = self.spectrum.kernel();
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["kind", "key", "value"])?;
        let meta = [
            ("family", k.family().to_string()),
            ("beta", k.beta().to_string()),
            ("dim", k.dim().to_string()),
            ("nodes", self.spectrum.nodes().to_string()),
            ("trace", self.spectrum.trace().to_string()),
            ("windows", self.windows.to_string()),
        ];
        for (key, value) in meta {
            w.write_record(["meta", key, &value])?;
        }
        for (i, l) in self.spectrum.eigenvalues().iter().enumerate() {
            w.write_record(["eigenvalue", &(i + 1).to_string(), &l.to_string()])?;
        }
        for (p, q) in &self.quantiles {
            w.write_record(["quantile", &p.to_string(), &q.to_string()])?;
        }
        w.into_inner().map_err(|e| Error::Data(e.to_string()))
    }

    /// Reads a table written by [`NullTable::to_csv`].
    pub fn from_csv(reader: impl Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let (mut family, mut beta, mut dim, mut nodes, mut trace, mut windows) = (None, None, None, None, None, None);
        let mut eigen: Vec<(usize, f64)> = Vec::new();
        let mut quantiles = Vec::new();
        for (r, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = r + 2;
            if rec.len() != 3 {
                return Err(Error::Parse {
                    row: line,
                    col: 1,
                    msg: format!("expected 3 fields, found {}", rec.len()),
                });
            }
            let num = |col: usize| -> Result<f64> {
                rec[col].parse::<f64>().map_err(|_| Error::Parse {
                    row: line,
                    col: col + 1,
                    msg: format!("'{}' is not a number", &rec[col]),
                })
            };
            let count = |col: usize| -> Result<usize> {
                rec[col].parse::<usize>().map_err(|_| Error::Parse {
                    row: line,
                    col: col + 1,
                    msg: format!("'{}' is not a count", &rec[col]),
                })
            };
            match (&rec[0], &rec[1]) {
                ("meta", "family") => family = Some(rec[2].parse::<KernelFamily>()?),
                ("meta", "beta") => beta = Some(num(2)?),
                ("meta", "dim") => dim = Some(count(2)?),
                ("meta", "nodes") => nodes = Some(count(2)?),
                ("meta", "trace") => trace = Some(num(2)?),
                ("meta", "windows") => windows = Some(count(2)?),
                ("eigenvalue", _) => eigen.push((count(1)?, num(2)?)),
                ("quantile", _) => quantiles.push((num(1)?, num(2)?)),
                (kind, key) => {
                    return Err(Error::Parse {
                        row: line,
                        col: 1,
                        msg: format!("unknown entry '{kind},{key}'"),
                    })
                }
            }
        }
        let missing = |what: &str| Error::Data(format!("null table lacks meta,{what}"));
        eigen.sort_by_key(|e| e.0);
        if eigen.iter().enumerate().any(|(i, e)| e.0 != i + 1) {
            return Err(Error::Data("eigenvalue indices must run 1, 2, ... without gaps".into()));
        }
        let kernel = KernelSpec::new(
            family.ok_or_else(|| missing("family"))?,
            beta.ok_or_else(|| missing("beta"))?,
            dim.ok_or_else(|| missing("dim"))?,
        )?;
        let spectrum = Spectrum::from_parts(
            kernel,
            nodes.ok_or_else(|| missing("nodes"))?,
            eigen.into_iter().map(|e| e.1).collect(),
            trace.ok_or_else(|| missing("trace"))?,
        )?;
        Ok(Self {
            spectrum,
            windows: windows.unwrap_or(1),
            quantiles,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(bytes.as_slice())
    }
}
