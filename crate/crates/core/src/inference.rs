//! Decision spaces, per-gene local FDR, and the Bayesian FDR threshold
//! rule.
//!
//! For a decision space the null region is a condition on k = number of
//! studies where the gene is DE: k = 0 (union space B), k < S (the
//! intersection space), or k < r. `xi_g` is the posterior probability of
//! the null region, estimated from the per-sample joint tallies of the
//! accumulator rather than from products of marginals; the event couples
//! studies within a gene.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mcmc::PosteriorAccumulator;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DecisionSpace {
    /// DE in at least one study.
    B,
    /// DE in every study.
    ABar,
    /// DE in at least r studies.
    RBar(usize),
}

impl DecisionSpace {
    /// Default r for the at-least-r space: floor(S/2) + 1.
    pub fn default_r(n_studies: usize) -> usize {
        n_studies / 2 + 1
    }

    pub fn parse(name: &str, r: Option<usize>, n_studies: usize) -> Result<DecisionSpace> {
        match name.to_ascii_lowercase().as_str() {
            "b" => Ok(DecisionSpace::B),
            "abar" => Ok(DecisionSpace::ABar),
            "rbar" => {
                let r = r.unwrap_or_else(|| Self::default_r(n_studies));
                if r < 1 || r > n_studies {
                    return Err(Error::Config(format!(
                        "r must be in 1..={n_studies}, got {r}"
                    )));
                }
                Ok(DecisionSpace::RBar(r))
            }
            other => Err(Error::Config(format!(
                "unknown decision space {other:?} (expected B, Abar, or rbar)"
            ))),
        }
    }

    pub fn label(&self) -> String {
        match self {
            DecisionSpace::B => "B".into(),
            DecisionSpace::ABar => "Abar".into(),
            DecisionSpace::RBar(r) => format!("rbar{r}"),
        }
    }

    /// Minimum number of DE studies for a gene to sit in the alternative
    /// region.
    pub fn min_alt_studies(&self, n_studies: usize) -> usize {
        match self {
            DecisionSpace::B => 1,
            DecisionSpace::ABar => n_studies,
            DecisionSpace::RBar(r) => *r,
        }
    }
}

/// Local FDR per gene: posterior probability of the null region of
/// `space`, from joint per-sample tallies.
pub fn compute_xi(acc: &PosteriorAccumulator, space: DecisionSpace) -> Result<Vec<f64>> {
    if acc.n_samples() == 0 {
        return Err(Error::Domain("no posterior samples accumulated".into()));
    }
    let s = acc.n_studies();
    let r = space.min_alt_studies(s);
    if r < 1 || r > s {
        return Err(Error::Config(format!("r {r} outside 1..={s}")));
    }
    let n = acc.n_samples() as f64;
    Ok((0..acc.n_genes())
        .map(|g| 1.0 - acc.k_ge(g, r) as f64 / n)
        .collect())
}

/// Declared set and realized threshold from the Bayesian FDR rule.
#[derive(Debug, Clone, Serialize)]
pub struct GeneDecision {
    pub xi: Vec<f64>,
    pub declared: Vec<bool>,
    pub kappa: f64,
    pub achieved_fdr: f64,
    pub n_declared: usize,
}

/// Declares the largest set, scanning xi in ascending order (stable in
/// the original index for ties), whose running mean stays at or below
/// `level`. The running mean of an ascending sequence is nondecreasing,
/// so the prefix rule finds the maximal declarable set.
pub fn bayes_fdr_declare(xi: &[f64], level: f64) -> Result<GeneDecision> {
    if !(0.0..1.0).contains(&level) || level <= 0.0 {
        return Err(Error::Config(format!("FDR level {level} outside (0,1)")));
    }
    for &x in xi {
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::Domain(format!("xi value {x} outside [0,1]")));
        }
    }
    let mut order: Vec<usize> = (0..xi.len()).collect();
    order.sort_by(|&a, &b| xi[a].partial_cmp(&xi[b]).unwrap());

    let mut best = 0usize;
    let mut sum = 0.0;
    let mut best_sum = 0.0;
    for (rank, &g) in order.iter().enumerate() {
        sum += xi[g];
        if sum <= level * (rank + 1) as f64 {
            best = rank + 1;
            best_sum = sum;
        }
    }

    let mut declared = vec![false; xi.len()];
    for &g in &order[..best] {
        declared[g] = true;
    }
    let kappa = if best > 0 { xi[order[best - 1]] } else { 0.0 };
    let achieved_fdr = if best > 0 { best_sum / best as f64 } else { 0.0 };
    Ok(GeneDecision {
        xi: xi.to_vec(),
        declared,
        kappa,
        achieved_fdr,
        n_declared: best,
    })
}

/// Per-cell confidence scores `V_gs = Pr(Y=1|Z) - Pr(Y=-1|Z)`.
#[derive(Debug, Clone)]
pub struct ConfidenceMatrix {
    n_genes: usize,
    n_studies: usize,
    v: Vec<f64>,
}

impl ConfidenceMatrix {
    pub fn get(&self, g: usize, s: usize) -> f64 {
        self.v[g * self.n_studies + s]
    }

    pub fn n_genes(&self) -> usize {
        self.n_genes
    }

    pub fn n_studies(&self) -> usize {
        self.n_studies
    }
}

pub fn confidence_scores(acc: &PosteriorAccumulator) -> Result<ConfidenceMatrix> {
    if acc.n_samples() == 0 {
        return Err(Error::Domain("no posterior samples accumulated".into()));
    }
    let n = acc.n_samples() as f64;
    let (ng, ns) = (acc.n_genes(), acc.n_studies());
    let mut v = Vec::with_capacity(ng * ns);
    for g in 0..ng {
        for s in 0..ns {
            let (pos, neg, _) = acc.counts(g, s);
            v.push((pos as f64 - neg as f64) / n);
        }
    }
    Ok(ConfidenceMatrix {
        n_genes: ng,
        n_studies: ns,
        v,
    })
}
