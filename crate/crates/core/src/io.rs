//! Input matrices and the p-value to Z-statistic transform.
//!
//! On-disk format is TSV: optional leading `#` comment lines, a header row
//! of study IDs, then one row per gene with the gene ID in the first
//! column. All numeric output is written in shortest round-trip form.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::stats;

/// One-sided p-values below/above this distance from 0/1 are clamped
/// before the quantile transform, which diverges at the endpoints.
pub const P_CLAMP_EPS: f64 = 1e-15;

/// Dense gene-by-study matrix with row/column labels.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    gene_ids: Vec<String>,
    study_ids: Vec<String>,
    values: Vec<f64>, // row-major, gene major
}

impl DataMatrix {
    pub fn new(gene_ids: Vec<String>, study_ids: Vec<String>, values: Vec<f64>) -> Result<Self> {
        if gene_ids.is_empty() || study_ids.is_empty() {
            return Err(Error::Domain("empty matrix".into()));
        }
        if values.len() != gene_ids.len() * study_ids.len() {
            return Err(Error::Format(format!(
                "matrix size {} does not match {} genes x {} studies",
                values.len(),
                gene_ids.len(),
                study_ids.len()
            )));
        }
        Ok(DataMatrix {
            gene_ids,
            study_ids,
            values,
        })
    }

    pub fn n_genes(&self) -> usize {
        self.gene_ids.len()
    }

    pub fn n_studies(&self) -> usize {
        self.study_ids.len()
    }

    pub fn gene_ids(&self) -> &[String] {
        &self.gene_ids
    }

    pub fn study_ids(&self) -> &[String] {
        &self.study_ids
    }

    #[inline]
    pub fn get(&self, g: usize, s: usize) -> f64 {
        self.values[g * self.study_ids.len() + s]
    }

    #[inline]
    pub fn set(&mut self, g: usize, s: usize, v: f64) {
        self.values[g * self.study_ids.len() + s] = v;
    }

    pub fn row(&self, g: usize) -> &[f64] {
        let s = self.study_ids.len();
        &self.values[g * s..(g + 1) * s]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> DataMatrix {
        DataMatrix {
            gene_ids: self.gene_ids.clone(),
            study_ids: self.study_ids.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// One-sided p-values (testing for down-regulation), strictly inside (0,1)
/// after clamping. `n_clamped` counts entries that were moved off 0 or 1.
#[derive(Debug, Clone)]
pub struct PValueMatrix {
    pub data: DataMatrix,
    pub n_clamped: usize,
}

impl PValueMatrix {
    /// Validates and clamps a raw matrix of one-sided p-values.
    pub fn from_raw(mut data: DataMatrix) -> Result<Self> {
        let mut n_clamped = 0;
        let s = data.n_studies();
        for idx in 0..data.values.len() {
            let v = data.values[idx];
            if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                return Err(Error::Parse {
                    row: idx / s + 1,
                    col: idx % s + 1,
                    gene: data.gene_ids[idx / s].clone(),
                    study: data.study_ids[idx % s].clone(),
                    msg: format!("p-value {v} outside [0,1]"),
                });
            }
            let clamped = v.clamp(P_CLAMP_EPS, 1.0 - P_CLAMP_EPS);
            if clamped != v {
                n_clamped += 1;
                data.values[idx] = clamped;
            }
        }
        Ok(PValueMatrix { data, n_clamped })
    }
}

/// Z-statistics, `Z = Phi^-1(p)`; all entries finite.
#[derive(Debug, Clone)]
pub struct ZMatrix {
    pub data: DataMatrix,
}

impl ZMatrix {
    pub fn from_raw(data: DataMatrix) -> Result<Self> {
        let s = data.n_studies();
        if let Some(idx) = data.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Parse {
                row: idx / s + 1,
                col: idx % s + 1,
                gene: data.gene_ids[idx / s].clone(),
                study: data.study_ids[idx % s].clone(),
                msg: "non-finite Z-statistic".into(),
            });
        }
        Ok(ZMatrix { data })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixKind {
    PValue,
    ZStat,
}

#[derive(Debug, Clone)]
pub enum ParsedMatrix {
    PValue(PValueMatrix),
    ZStat(ZMatrix),
}

/// Reads a labelled TSV matrix. Comment lines (leading `#`) are skipped;
/// the header row may or may not carry a label for the gene-ID column.
pub fn read_tsv_matrix(path: &Path) -> Result<DataMatrix> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.starts_with('#') && !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::Domain("empty matrix file".into()))?;
    let header: Vec<&str> = header.split('\t').collect();

    let mut gene_ids = Vec::new();
    let mut rows: Vec<Vec<&str>> = Vec::new();
    let mut width = None;
    for (lineno, line) in lines {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < 2 {
            return Err(Error::Format(format!(
                "line {}: expected at least 2 tab-separated fields",
                lineno + 1
            )));
        }
        match width {
            None => width = Some(fields.len()),
            Some(w) if w != fields.len() => {
                return Err(Error::Format(format!(
                    "ragged row at line {}: {} fields, expected {}",
                    lineno + 1,
                    fields.len(),
                    w
                )))
            }
            _ => {}
        }
        gene_ids.push(fields[0].to_string());
        rows.push(fields[1..].to_vec());
    }
    let width = width.ok_or_else(|| Error::Domain("matrix has no data rows".into()))?;
    let n_studies = width - 1;
    let study_ids: Vec<String> = if header.len() == width {
        header[1..].iter().map(|s| s.to_string()).collect()
    } else if header.len() == n_studies {
        header.iter().map(|s| s.to_string()).collect()
    } else {
        return Err(Error::Format(format!(
            "header has {} fields but rows have {} studies",
            header.len(),
            n_studies
        )));
    };

    let mut values = Vec::with_capacity(gene_ids.len() * n_studies);
    for (g, row) in rows.iter().enumerate() {
        for (s, cell) in row.iter().enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| Error::Parse {
                row: g + 1,
                col: s + 1,
                gene: gene_ids[g].clone(),
                study: study_ids[s].clone(),
                msg: format!("cannot parse {cell:?} as a number"),
            })?;
            values.push(v);
        }
    }
    DataMatrix::new(gene_ids, study_ids, values)
}

/// Parses a matrix file and validates it according to `kind`.
pub fn parse_matrix(path: &Path, kind: MatrixKind) -> Result<ParsedMatrix> {
    let raw = read_tsv_matrix(path)?;
    match kind {
        MatrixKind::PValue => {
            let p = PValueMatrix::from_raw(raw)?;
            if p.n_clamped > 0 {
                log::warn!(
                    "{}: {} p-value(s) clamped into [{:e}, 1-{:e}]",
                    path.display(),
                    p.n_clamped,
                    P_CLAMP_EPS,
                    P_CLAMP_EPS
                );
            }
            Ok(ParsedMatrix::PValue(p))
        }
        MatrixKind::ZStat => Ok(ParsedMatrix::ZStat(ZMatrix::from_raw(raw)?)),
    }
}

/// Elementwise standard-normal quantile. Small p (down-regulation
/// evidence) maps to large negative Z.
pub fn p_to_z(p: &PValueMatrix) -> ZMatrix {
    ZMatrix {
        data: p.data.map(stats::norm_quantile),
    }
}

/// Folds two-sided p-values and estimated effect directions into one-sided
/// p-values: `p1 = p2/2` for down-regulated estimates, `1 - p2/2` for
/// up-regulated ones. Accepts p2 in (0, 1].
pub fn two_sided_to_one_sided(p2: &DataMatrix, sign: &DataMatrix) -> Result<PValueMatrix> {
    if p2.n_genes() != sign.n_genes() || p2.n_studies() != sign.n_studies() {
        return Err(Error::Domain(format!(
            "p-value matrix is {}x{} but sign matrix is {}x{}",
            p2.n_genes(),
            p2.n_studies(),
            sign.n_genes(),
            sign.n_studies()
        )));
    }
    let ns = p2.n_studies();
    let mut out = p2.clone();
    for idx in 0..out.values.len() {
        let p = p2.values[idx];
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::Domain(format!(
                "two-sided p-value {p} outside (0,1] for gene {} study {}",
                p2.gene_ids[idx / ns],
                p2.study_ids[idx % ns]
            )));
        }
        let sg = sign.values[idx];
        out.values[idx] = if sg == 1.0 {
            1.0 - 0.5 * p
        } else if sg == -1.0 {
            0.5 * p
        } else {
            return Err(Error::Domain(format!(
                "sign entry {sg} (gene {}, study {}) not in {{-1, +1}}",
                sign.gene_ids[idx / ns],
                sign.study_ids[idx % ns]
            )));
        };
    }
    PValueMatrix::from_raw(out)
}

/// Writes a labelled matrix as TSV with a leading comment line.
pub fn write_matrix_tsv(path: &Path, comment: &str, m: &DataMatrix) -> Result<()> {
    let mut out = String::new();
    if !comment.is_empty() {
        writeln!(out, "# {comment}").unwrap();
    }
    out.push_str("gene_id");
    for s in m.study_ids() {
        out.push('\t');
        out.push_str(s);
    }
    out.push('\n');
    for g in 0..m.n_genes() {
        out.push_str(&m.gene_ids[g]);
        for s in 0..m.n_studies() {
            write!(out, "\t{}", m.get(g, s)).unwrap();
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Generic TSV writer for column-oriented reports.
pub fn write_tsv(
    path: &Path,
    comment: &str,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<()> {
    let mut out = String::new();
    if !comment.is_empty() {
        writeln!(out, "# {comment}").unwrap();
    }
    out.push_str(&header.join("\t"));
    out.push('\n');
    for row in rows {
        out.push_str(&row.join("\t"));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads a generic TSV written by `write_tsv`, returning (header, rows).
pub fn read_tsv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| Error::Format("empty TSV".into()))?
        .split('\t')
        .map(|s| s.to_string())
        .collect();
    let rows = lines
        .map(|l| l.split('\t').map(|s| s.to_string()).collect())
        .collect();
    Ok((header, rows))
}
