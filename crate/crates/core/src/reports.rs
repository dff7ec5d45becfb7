//! On-disk layouts for fitted posteriors and downstream reports.
//!
//! A posterior directory holds the three G x S probability matrices, the
//! per-gene joint histogram of the number of DE studies (the decision
//! spaces need the joint law, not the marginals), gamma and mean-pi
//! traces, and a small JSON metadata file.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::ConfidenceMatrix;
use crate::io::{self, DataMatrix};
use crate::mcmc::{Diagnostics, PosteriorAccumulator};

pub const PROB_POS_FILE: &str = "posterior_prob_pos.tsv";
pub const PROB_NEG_FILE: &str = "posterior_prob_neg.tsv";
pub const PROB_NULL_FILE: &str = "posterior_prob_null.tsv";
pub const K_HIST_FILE: &str = "posterior_k_hist.tsv";
pub const TRACE_GAMMA_FILE: &str = "trace_gamma.tsv";
pub const TRACE_MEAN_PI_FILE: &str = "trace_mean_pi.tsv";
pub const META_FILE: &str = "meta.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PosteriorMeta {
    pub tool_version: String,
    pub n_genes: usize,
    pub n_studies: usize,
    pub n_samples: u64,
    pub seed: u64,
    pub config_hash: String,
    pub gamma_accept_rate: f64,
}

pub struct PosteriorBundle {
    pub gene_ids: Vec<String>,
    pub study_ids: Vec<String>,
    pub acc: PosteriorAccumulator,
    pub meta: PosteriorMeta,
}

fn prob_matrix(
    gene_ids: &[String],
    study_ids: &[String],
    acc: &PosteriorAccumulator,
    counts: &[u64],
) -> DataMatrix {
    let n = acc.n_samples() as f64;
    let values: Vec<f64> = counts.iter().map(|&c| c as f64 / n).collect();
    DataMatrix::new(gene_ids.to_vec(), study_ids.to_vec(), values).expect("consistent dims")
}

pub fn write_posterior_dir(
    dir: &Path,
    header: &str,
    gene_ids: &[String],
    study_ids: &[String],
    acc: &PosteriorAccumulator,
    diag: &Diagnostics,
    meta: PosteriorMeta,
) -> Result<()> {
    if acc.n_samples() == 0 {
        return Err(Error::Domain(
            "no retained samples; nothing to write".into(),
        ));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    io::write_matrix_tsv(
        &dir.join(PROB_POS_FILE),
        header,
        &prob_matrix(gene_ids, study_ids, acc, acc.raw_counts_pos()),
    )?;
    io::write_matrix_tsv(
        &dir.join(PROB_NEG_FILE),
        header,
        &prob_matrix(gene_ids, study_ids, acc, acc.raw_counts_neg()),
    )?;
    io::write_matrix_tsv(
        &dir.join(PROB_NULL_FILE),
        header,
        &prob_matrix(gene_ids, study_ids, acc, acc.raw_counts_null()),
    )?;

    let s = acc.n_studies();
    let k_cols: Vec<String> = (0..=s).map(|k| format!("k{k}")).collect();
    let mut cols: Vec<&str> = vec!["gene_id"];
    cols.extend(k_cols.iter().map(|c| c.as_str()));
    io::write_tsv(
        &dir.join(K_HIST_FILE),
        header,
        &cols,
        (0..acc.n_genes()).map(|g| {
            let mut row = vec![gene_ids[g].clone()];
            row.extend((0..=s).map(|k| acc.k_count(g, k).to_string()));
            row
        }),
    )?;

    io::write_tsv(
        &dir.join(TRACE_GAMMA_FILE),
        header,
        &["iteration", "gamma"],
        diag.trace_gamma
            .iter()
            .enumerate()
            .map(|(i, v)| vec![(i + 1).to_string(), v.to_string()]),
    )?;
    io::write_tsv(
        &dir.join(TRACE_MEAN_PI_FILE),
        header,
        &["iteration", "mean_pi"],
        diag.trace_mean_pi
            .iter()
            .enumerate()
            .map(|(i, v)| vec![(i + 1).to_string(), v.to_string()]),
    )?;

    let meta_path = dir.join(META_FILE);
    let json = serde_json::to_string_pretty(&meta)
        .map_err(|e| Error::Internal(format!("serialize meta: {e}")))?;
    fs::write(&meta_path, json).map_err(|e| Error::io(&meta_path, e))?;
    Ok(())
}

pub fn read_posterior_dir(dir: &Path) -> Result<PosteriorBundle> {
    let meta_path = dir.join(META_FILE);
    let meta: PosteriorMeta = serde_json::from_str(
        &fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?,
    )
    .map_err(|e| Error::Format(format!("bad {META_FILE}: {e}")))?;

    let pos = io::read_tsv_matrix(&dir.join(PROB_POS_FILE))?;
    let neg = io::read_tsv_matrix(&dir.join(PROB_NEG_FILE))?;
    let null = io::read_tsv_matrix(&dir.join(PROB_NULL_FILE))?;
    let n = meta.n_samples as f64;
    let to_counts = |m: &DataMatrix| -> Vec<u64> {
        m.values().iter().map(|&p| (p * n).round() as u64).collect()
    };

    let (header, rows) = io::read_tsv(&dir.join(K_HIST_FILE))?;
    let s = pos.n_studies();
    if header.len() != s + 2 {
        return Err(Error::Format("k histogram width disagrees with matrices".into()));
    }
    let mut k_hist = Vec::with_capacity(rows.len() * (s + 1));
    for row in &rows {
        for cell in &row[1..] {
            k_hist.push(
                cell.parse::<u64>()
                    .map_err(|_| Error::Format(format!("bad k count {cell:?}")))?,
            );
        }
    }

    let acc = PosteriorAccumulator::from_parts(
        pos.n_genes(),
        s,
        to_counts(&pos),
        to_counts(&neg),
        to_counts(&null),
        k_hist,
        meta.n_samples,
    )?;
    Ok(PosteriorBundle {
        gene_ids: pos.gene_ids().to_vec(),
        study_ids: pos.study_ids().to_vec(),
        acc,
        meta,
    })
}

/// decisions.tsv: gene_id, xi, declared, then one confidence column per
/// study.
pub fn write_decisions(
    path: &Path,
    header: &str,
    gene_ids: &[String],
    study_ids: &[String],
    xi: &[f64],
    declared: &[bool],
    v: &ConfidenceMatrix,
) -> Result<()> {
    let mut cols: Vec<String> = vec!["gene_id".into(), "xi".into(), "declared".into()];
    cols.extend(study_ids.iter().map(|s| format!("V_{s}")));
    let col_refs: Vec<&str> = cols.iter().map(|c| c.as_str()).collect();
    io::write_tsv(
        path,
        header,
        &col_refs,
        (0..gene_ids.len()).map(|g| {
            let mut row = vec![
                gene_ids[g].clone(),
                xi[g].to_string(),
                (declared[g] as u8).to_string(),
            ];
            row.extend((0..study_ids.len()).map(|s| v.get(g, s).to_string()));
            row
        }),
    )
}

pub struct DecisionsFile {
    pub gene_ids: Vec<String>,
    pub xi: Vec<f64>,
    pub declared: Vec<bool>,
}

pub fn read_decisions(path: &Path) -> Result<DecisionsFile> {
    let (header, rows) = io::read_tsv(path)?;
    let xi_col = header
        .iter()
        .position(|h| h == "xi" || h == "p")
        .ok_or_else(|| Error::Format("decisions file lacks an xi or p column".into()))?;
    let dec_col = header
        .iter()
        .position(|h| h == "declared")
        .ok_or_else(|| Error::Format("decisions file lacks a declared column".into()))?;
    let mut out = DecisionsFile {
        gene_ids: Vec::with_capacity(rows.len()),
        xi: Vec::with_capacity(rows.len()),
        declared: Vec::with_capacity(rows.len()),
    };
    for row in &rows {
        out.gene_ids.push(row[0].clone());
        out.xi.push(
            row[xi_col]
                .parse()
                .map_err(|_| Error::Format(format!("bad score {:?}", row[xi_col])))?,
        );
        out.declared.push(row[dec_col] == "1");
    }
    Ok(out)
}

/// modules.tsv: gene_id, module_label, confidence per study.
pub fn write_modules(
    path: &Path,
    header: &str,
    gene_ids: &[String],
    study_ids: &[String],
    labels: &[usize],
    v_rows: &[Vec<f64>],
) -> Result<()> {
    let mut cols: Vec<String> = vec!["gene_id".into(), "module_label".into()];
    cols.extend(study_ids.iter().map(|s| format!("V_{s}")));
    let col_refs: Vec<&str> = cols.iter().map(|c| c.as_str()).collect();
    io::write_tsv(
        path,
        header,
        &col_refs,
        (0..gene_ids.len()).map(|g| {
            let mut row = vec![gene_ids[g].clone(), labels[g].to_string()];
            row.extend(v_rows[g].iter().map(|v| v.to_string()));
            row
        }),
    )
}
