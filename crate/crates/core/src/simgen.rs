//! Synthetic two-group expression data with correlated gene clusters,
//! planted effect sizes, and ground truth.
//!
//! Cluster covariances are standardized inverse-Wishart draws scaled to
//! sigma^2 (unit diagonal by construction); clustered genes are sampled
//! jointly MVN per sample, the rest as independent N(0, sigma^2). DE
//! genes get a truncated-normal gene effect theta_g ~ N(1,1) on (0.5,
//! inf), per-study effects theta_gs ~ N(theta_g, 0.2^2) on (0, inf), a
//! coin-flip direction, and a uniformly sized random subset of studies.
//! Case samples receive the signed effect; controls never do.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::io::DataMatrix;
use crate::rng::stream_rng;
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    General,
    Metapattern,
    UnbalancedA,
    UnbalancedB,
    UnbalancedC,
    UnbalancedD,
}

impl Scenario {
    pub fn parse(s: &str) -> Result<Scenario> {
        match s.to_ascii_lowercase().as_str() {
            "general" => Ok(Scenario::General),
            "metapattern" => Ok(Scenario::Metapattern),
            "unbalanced-a" => Ok(Scenario::UnbalancedA),
            "unbalanced-b" => Ok(Scenario::UnbalancedB),
            "unbalanced-c" => Ok(Scenario::UnbalancedC),
            "unbalanced-d" => Ok(Scenario::UnbalancedD),
            other => Err(Error::Config(format!("unknown scenario {other:?}"))),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Scenario::General => "general",
            Scenario::Metapattern => "metapattern",
            Scenario::UnbalancedA => "unbalanced-a",
            Scenario::UnbalancedB => "unbalanced-b",
            Scenario::UnbalancedC => "unbalanced-c",
            Scenario::UnbalancedD => "unbalanced-d",
        }
    }

    /// Per-study (cases, controls) presets for the unbalanced designs.
    pub fn sample_sizes(&self) -> Option<(Vec<usize>, Vec<usize>)> {
        match self {
            Scenario::UnbalancedA => Some((vec![20, 30, 40], vec![20, 30, 40])),
            Scenario::UnbalancedB => Some((vec![20, 50, 100], vec![20, 50, 100])),
            Scenario::UnbalancedC => Some((vec![60, 60, 60], vec![20, 20, 20])),
            Scenario::UnbalancedD => Some((vec![20, 40, 60], vec![60, 40, 20])),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub n_genes: usize,
    pub n_studies: usize,
    pub n_cases: Vec<usize>,
    pub n_controls: Vec<usize>,
    pub sigma: f64,
    pub n_clusters: usize,
    pub cluster_size: usize,
    pub wishart_df: f64,
    pub de_fraction: f64,
    pub scenario: Scenario,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n_genes: 10_000,
            n_studies: 3,
            n_cases: vec![20; 3],
            n_controls: vec![20; 3],
            sigma: 1.0,
            n_clusters: 200,
            cluster_size: 20,
            wishart_df: 60.0,
            de_fraction: 0.30,
            scenario: Scenario::General,
            seed: 0,
        }
    }
}

impl SimConfig {
    /// Applies scenario presets: sample sizes for the unbalanced designs,
    /// S = 4 and sigma = 1 for the meta-pattern design, and a cluster
    /// count scaled to keep the clustered fraction at 40% of genes.
    pub fn for_scenario(scenario: Scenario, n_genes: usize, n_studies: usize, sigma: f64, seed: u64) -> SimConfig {
        let (n_studies, sigma) = match scenario {
            Scenario::Metapattern => (4, 1.0),
            Scenario::UnbalancedA | Scenario::UnbalancedB | Scenario::UnbalancedC | Scenario::UnbalancedD => (3, sigma),
            Scenario::General => (n_studies, sigma),
        };
        let (n_cases, n_controls) = scenario
            .sample_sizes()
            .unwrap_or((vec![20; n_studies], vec![20; n_studies]));
        SimConfig {
            n_genes,
            n_studies,
            n_cases,
            n_controls,
            sigma,
            n_clusters: n_genes / 50,
            scenario,
            seed,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_genes == 0 || self.n_studies == 0 {
            return Err(Error::Config("need at least one gene and one study".into()));
        }
        if self.n_cases.len() != self.n_studies || self.n_controls.len() != self.n_studies {
            return Err(Error::Config(format!(
                "sample-size vectors must have length {}",
                self.n_studies
            )));
        }
        if self.n_cases.iter().chain(&self.n_controls).any(|&n| n < 2) {
            return Err(Error::Config("every group needs at least 2 samples".into()));
        }
        if self.n_clusters * self.cluster_size > self.n_genes {
            return Err(Error::Config(format!(
                "{} clusters of {} genes exceed G = {}",
                self.n_clusters, self.cluster_size, self.n_genes
            )));
        }
        if self.cluster_size > 0 && self.wishart_df <= (self.cluster_size + 1) as f64 {
            return Err(Error::Config(format!(
                "inverse-Wishart df {} must exceed cluster size + 1",
                self.wishart_df
            )));
        }
        if !(0.0..1.0).contains(&self.de_fraction) {
            return Err(Error::Config("de_fraction must be in [0, 1)".into()));
        }
        if !(self.sigma > 0.0) {
            return Err(Error::Config("sigma must be positive".into()));
        }
        Ok(())
    }
}

/// Planted meta-pattern of a gene in the meta-pattern scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pattern {
    HomoPos,
    HomoNeg,
    Ssp1Pos,
    Ssp1Neg,
    Ssp2Pos,
    Ssp2Neg,
    NonDe,
}

impl Pattern {
    pub fn as_str(&self) -> &'static str {
        match self {
            Pattern::HomoPos => "homo+",
            Pattern::HomoNeg => "homo-",
            Pattern::Ssp1Pos => "ssp1+",
            Pattern::Ssp1Neg => "ssp1-",
            Pattern::Ssp2Pos => "ssp2+",
            Pattern::Ssp2Neg => "ssp2-",
            Pattern::NonDe => "nonDE",
        }
    }

    pub fn parse(s: &str) -> Result<Pattern> {
        Ok(match s {
            "homo+" => Pattern::HomoPos,
            "homo-" => Pattern::HomoNeg,
            "ssp1+" => Pattern::Ssp1Pos,
            "ssp1-" => Pattern::Ssp1Neg,
            "ssp2+" => Pattern::Ssp2Pos,
            "ssp2-" => Pattern::Ssp2Neg,
            "nonDE" => Pattern::NonDe,
            other => return Err(Error::Format(format!("unknown pattern {other:?}"))),
        })
    }

    pub const ALL_DE: [Pattern; 6] = [
        Pattern::HomoPos,
        Pattern::HomoNeg,
        Pattern::Ssp1Pos,
        Pattern::Ssp1Neg,
        Pattern::Ssp2Pos,
        Pattern::Ssp2Neg,
    ];
}

/// Ground truth of one simulated dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SimTruth {
    pub n_studies: usize,
    pub is_de: Vec<bool>,
    /// Sorted 0-based indices of the studies where each gene is DE.
    pub de_studies: Vec<Vec<usize>>,
    /// Direction bit d_g; effect sign is (-1)^d.
    pub direction: Vec<u8>,
    pub theta_g: Vec<f64>,
    /// G x S study-level effects, 0 where absent.
    pub theta_gs: Vec<f64>,
    pub pattern: Option<Vec<Pattern>>,
}

impl SimTruth {
    pub fn n_genes(&self) -> usize {
        self.is_de.len()
    }

    pub fn effect(&self, g: usize, s: usize) -> f64 {
        self.theta_gs[g * self.n_studies + s]
    }

    /// Signed effect added to case samples of (g, s).
    pub fn signed_effect(&self, g: usize, s: usize) -> f64 {
        let sign = if self.direction[g] == 0 { 1.0 } else { -1.0 };
        sign * self.effect(g, s)
    }
}

/// Per-study two-group expression matrices, controls first.
pub struct ExpressionSet {
    pub gene_ids: Vec<String>,
    pub study_ids: Vec<String>,
    pub n_controls: Vec<usize>,
    pub n_cases: Vec<usize>,
    data: Vec<Vec<f64>>, // per study, row-major gene x sample
}

impl ExpressionSet {
    pub fn n_genes(&self) -> usize {
        self.gene_ids.len()
    }

    pub fn n_studies(&self) -> usize {
        self.study_ids.len()
    }

    pub fn n_samples(&self, s: usize) -> usize {
        self.n_controls[s] + self.n_cases[s]
    }

    pub fn row(&self, s: usize, g: usize) -> &[f64] {
        let w = self.n_samples(s);
        &self.data[s][g * w..(g + 1) * w]
    }

    pub fn controls(&self, s: usize, g: usize) -> &[f64] {
        &self.row(s, g)[..self.n_controls[s]]
    }

    pub fn cases(&self, s: usize, g: usize) -> &[f64] {
        &self.row(s, g)[self.n_controls[s]..]
    }

    pub fn sample_ids(&self, s: usize) -> Vec<String> {
        let mut ids: Vec<String> = (1..=self.n_controls[s]).map(|i| format!("ctrl_{i}")).collect();
        ids.extend((1..=self.n_cases[s]).map(|i| format!("case_{i}")));
        ids
    }

    pub fn study_matrix(&self, s: usize) -> DataMatrix {
        DataMatrix::new(self.gene_ids.clone(), self.sample_ids(s), self.data[s].clone())
            .expect("dimensions consistent by construction")
    }
}

fn gene_ids(n: usize) -> Vec<String> {
    let width = n.to_string().len();
    (1..=n).map(|i| format!("g{i:0width$}")).collect()
}

fn study_ids(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("s{i}")).collect()
}

/// Truncated-normal draw on (lo, inf) by inverse CDF; the truncation
/// points used here sit at most half a standard deviation above the
/// mean, where the inverse-CDF route is exact and cheap.
fn trunc_normal(rng: &mut ChaCha8Rng, mean: f64, sd: f64, lo: f64) -> f64 {
    let a = stats::norm_cdf((lo - mean) / sd);
    let u: f64 = rng.random();
    let p = (a + u * (1.0 - a)).clamp(1e-16, 1.0 - 1e-16);
    mean + sd * stats::norm_quantile(p)
}

/// One standardized inverse-Wishart covariance block scaled to sigma^2.
/// Sampled by the Bartlett decomposition of the Wishart with inverted
/// scale, inverted, and renormalized to unit diagonal.
pub fn sample_cov(
    dim: usize,
    wishart_df: f64,
    psi_inv_chol: &DMatrix<f64>,
    sigma: f64,
    rng: &mut ChaCha8Rng,
) -> Result<DMatrix<f64>> {
    // Bartlett: W = L A A^T L^T with A lower triangular,
    // A_ii^2 ~ chi^2(df - i), A_ij ~ N(0,1).
    let mut a = DMatrix::<f64>::zeros(dim, dim);
    for i in 0..dim {
        let chi = ChiSquared::new(wishart_df - i as f64)
            .map_err(|e| Error::Config(format!("bad Wishart df: {e}")))?;
        a[(i, i)] = chi.sample(rng).sqrt();
        for j in 0..i {
            a[(i, j)] = StandardNormal.sample(rng);
        }
    }
    let la = psi_inv_chol * a;
    let w = &la * la.transpose();
    let chol = nalgebra::Cholesky::new(w)
        .ok_or_else(|| Error::Internal("Wishart draw not positive definite".into()))?;
    let draw = chol.inverse(); // inverse-Wishart draw

    let mut cov = DMatrix::<f64>::zeros(dim, dim);
    for i in 0..dim {
        cov[(i, i)] = sigma * sigma;
        for j in 0..i {
            let v = sigma * sigma * draw[(i, j)] / (draw[(i, i)] * draw[(j, j)]).sqrt();
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    Ok(cov)
}

fn chol_with_jitter(mut cov: DMatrix<f64>) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    if let Some(c) = nalgebra::Cholesky::new(cov.clone()) {
        return Ok(c);
    }
    for i in 0..cov.nrows() {
        cov[(i, i)] += 1e-10;
    }
    nalgebra::Cholesky::new(cov)
        .ok_or_else(|| Error::Internal("covariance not positive definite after jitter".into()))
}

fn psi_inv_chol(dim: usize) -> DMatrix<f64> {
    // Psi = 0.5 I + 0.5 J
    let psi = DMatrix::<f64>::from_fn(dim, dim, |i, j| if i == j { 1.0 } else { 0.5 });
    let chol = nalgebra::Cholesky::new(psi).expect("Psi is positive definite");
    chol.inverse()
        .cholesky()
        .expect("Psi inverse is positive definite")
        .l()
}

fn sample_truth_general(cfg: &SimConfig, rng: &mut ChaCha8Rng) -> SimTruth {
    let g = cfg.n_genes;
    let s = cfg.n_studies;
    let g1 = (cfg.de_fraction * g as f64).floor() as usize;
    let mut truth = SimTruth {
        n_studies: s,
        is_de: vec![false; g],
        de_studies: vec![Vec::new(); g],
        direction: vec![0; g],
        theta_g: vec![0.0; g],
        theta_gs: vec![0.0; g * s],
        pattern: None,
    };
    let mut studies: Vec<usize> = (0..s).collect();
    for gi in 0..g1 {
        truth.is_de[gi] = true;
        let v = rng.random_range(1..=s);
        studies.shuffle(rng);
        let mut mine: Vec<usize> = studies[..v].to_vec();
        mine.sort_unstable();
        let theta = trunc_normal(rng, 1.0, 1.0, 0.5);
        truth.theta_g[gi] = theta;
        for &si in &mine {
            truth.theta_gs[gi * s + si] = trunc_normal(rng, theta, 0.2, 0.0);
        }
        truth.de_studies[gi] = mine;
        truth.direction[gi] = if rng.random::<bool>() { 1 } else { 0 };
    }
    truth
}

fn sample_truth_metapattern(cfg: &SimConfig, rng: &mut ChaCha8Rng) -> Result<SimTruth> {
    let g = cfg.n_genes;
    let s = cfg.n_studies;
    if s < 2 {
        return Err(Error::Config("meta-pattern scenario needs at least 2 studies".into()));
    }
    let n_homo = (0.04 * g as f64).round() as usize;
    let n_ssp = (0.04 * g as f64).round() as usize;
    let mut patterns = Vec::with_capacity(g);
    for _ in 0..(n_homo / 2) {
        patterns.push(Pattern::HomoPos);
    }
    for _ in 0..(n_homo - n_homo / 2) {
        patterns.push(Pattern::HomoNeg);
    }
    let q = n_ssp / 4;
    for _ in 0..q {
        patterns.push(Pattern::Ssp1Pos);
    }
    for _ in 0..q {
        patterns.push(Pattern::Ssp1Neg);
    }
    for _ in 0..q {
        patterns.push(Pattern::Ssp2Pos);
    }
    for _ in 0..(n_ssp - 3 * q) {
        patterns.push(Pattern::Ssp2Neg);
    }
    patterns.resize(g, Pattern::NonDe);

    let mut truth = SimTruth {
        n_studies: s,
        is_de: vec![false; g],
        de_studies: vec![Vec::new(); g],
        direction: vec![0; g],
        theta_g: vec![0.0; g],
        theta_gs: vec![0.0; g * s],
        pattern: None,
    };
    for gi in 0..g {
        let (studies, dir): (Vec<usize>, u8) = match patterns[gi] {
            Pattern::HomoPos => ((0..s).collect(), 0),
            Pattern::HomoNeg => ((0..s).collect(), 1),
            Pattern::Ssp1Pos => (vec![0], 0),
            Pattern::Ssp1Neg => (vec![0], 1),
            Pattern::Ssp2Pos => (vec![1], 0),
            Pattern::Ssp2Neg => (vec![1], 1),
            Pattern::NonDe => continue,
        };
        truth.is_de[gi] = true;
        truth.direction[gi] = dir;
        let theta = trunc_normal(rng, 1.0, 1.0, 0.5);
        truth.theta_g[gi] = theta;
        for &si in &studies {
            truth.theta_gs[gi * s + si] = trunc_normal(rng, theta, 0.2, 0.0);
        }
        truth.de_studies[gi] = studies;
    }
    truth.pattern = Some(patterns);
    Ok(truth)
}

fn build_expression(cfg: &SimConfig, truth: &SimTruth) -> Result<ExpressionSet> {
    let g = cfg.n_genes;
    let s = cfg.n_studies;

    // which genes are clustered: a seeded permutation keeps DE status
    // independent of cluster membership
    let mut perm: Vec<usize> = (0..g).collect();
    perm.shuffle(&mut stream_rng(cfg.seed, "sim-clustmap", 0));
    let clustered = &perm[..cfg.n_clusters * cfg.cluster_size];

    let psi_chol = if cfg.n_clusters > 0 {
        Some(psi_inv_chol(cfg.cluster_size))
    } else {
        None
    };

    let mut data: Vec<Vec<f64>> = Vec::with_capacity(s);
    for si in 0..s {
        let width = cfg.n_controls[si] + cfg.n_cases[si];
        data.push(vec![0.0; g * width]);
    }

    // per-(cluster, study) blocks are independent given their streams
    let blocks: Vec<(usize, usize)> = (0..cfg.n_clusters)
        .flat_map(|c| (0..s).map(move |si| (c, si)))
        .collect();
    let drawn: Vec<(usize, usize, Vec<f64>)> = blocks
        .par_iter()
        .map(|&(c, si)| -> Result<(usize, usize, Vec<f64>)> {
            let mut rng = stream_rng(cfg.seed, "sim-block", (c * s + si) as u64);
            let cov = sample_cov(
                cfg.cluster_size,
                cfg.wishart_df,
                psi_chol.as_ref().unwrap(),
                cfg.sigma,
                &mut rng,
            )?;
            let chol = chol_with_jitter(cov)?;
            let l = chol.l();
            let width = cfg.n_controls[si] + cfg.n_cases[si];
            let mut block = vec![0.0; cfg.cluster_size * width];
            let mut eps = DVector::<f64>::zeros(cfg.cluster_size);
            for n in 0..width {
                for j in 0..cfg.cluster_size {
                    eps[j] = StandardNormal.sample(&mut rng);
                }
                let x = &l * &eps;
                for j in 0..cfg.cluster_size {
                    block[j * width + n] = x[j];
                }
            }
            Ok((c, si, block))
        })
        .collect::<Result<Vec<_>>>()?;
    for (c, si, block) in drawn {
        let width = cfg.n_controls[si] + cfg.n_cases[si];
        for j in 0..cfg.cluster_size {
            let gene = clustered[c * cfg.cluster_size + j];
            data[si][gene * width..(gene + 1) * width]
                .copy_from_slice(&block[j * width..(j + 1) * width]);
        }
    }

    // unclustered genes
    for si in 0..s {
        let mut rng = stream_rng(cfg.seed, "sim-noise", si as u64);
        let width = cfg.n_controls[si] + cfg.n_cases[si];
        for &gene in &perm[cfg.n_clusters * cfg.cluster_size..] {
            for n in 0..width {
                let e: f64 = StandardNormal.sample(&mut rng);
                data[si][gene * width + n] = cfg.sigma * e;
            }
        }
    }

    // add signed effects to case samples
    for gi in 0..g {
        if !truth.is_de[gi] {
            continue;
        }
        for &si in &truth.de_studies[gi] {
            let width = cfg.n_controls[si] + cfg.n_cases[si];
            let eff = truth.signed_effect(gi, si);
            for n in cfg.n_controls[si]..width {
                data[si][gi * width + n] += eff;
            }
        }
    }

    Ok(ExpressionSet {
        gene_ids: gene_ids(g),
        study_ids: study_ids(s),
        n_controls: cfg.n_controls.clone(),
        n_cases: cfg.n_cases.clone(),
        data,
    })
}

/// Generates the configured scenario; deterministic in the seed.
pub fn generate(cfg: &SimConfig) -> Result<(ExpressionSet, SimTruth)> {
    cfg.validate()?;
    let mut truth_rng = stream_rng(cfg.seed, "sim-truth", 0);
    let truth = match cfg.scenario {
        Scenario::Metapattern => sample_truth_metapattern(cfg, &mut truth_rng)?,
        _ => sample_truth_general(cfg, &mut truth_rng),
    };
    let es = build_expression(cfg, &truth)?;
    Ok((es, truth))
}

/// Welch two-sample t-test per (gene, study): two-sided p-values and the
/// sign of the case-minus-control mean difference.
pub fn t_test_pvalues(es: &ExpressionSet) -> (DataMatrix, DataMatrix) {
    let g = es.n_genes();
    let s = es.n_studies();
    let mut p2 = vec![1.0; g * s];
    let mut sign = vec![1.0; g * s];
    for si in 0..s {
        for gi in 0..g {
            let (t, df, d) = welch_t(es.cases(si, gi), es.controls(si, gi));
            let idx = gi * s + si;
            sign[idx] = if d >= 0.0 { 1.0 } else { -1.0 };
            p2[idx] = if t.is_finite() && df > 0.0 {
                stats::student_t_two_sided(t, df).max(1e-300)
            } else {
                1.0
            };
        }
    }
    let p2 = DataMatrix::new(es.gene_ids.clone(), es.study_ids.clone(), p2).unwrap();
    let sign = DataMatrix::new(es.gene_ids.clone(), es.study_ids.clone(), sign).unwrap();
    (p2, sign)
}

/// Welch statistic, Welch-Satterthwaite df, and the raw mean difference.
pub fn welch_t(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let (nx, ny) = (x.len() as f64, y.len() as f64);
    let mx = stats::mean(x);
    let my = stats::mean(y);
    let vx = x.iter().map(|&v| (v - mx) * (v - mx)).sum::<f64>() / (nx - 1.0);
    let vy = y.iter().map(|&v| (v - my) * (v - my)).sum::<f64>() / (ny - 1.0);
    let d = mx - my;
    let se2 = vx / nx + vy / ny;
    if se2 <= 0.0 {
        return (f64::INFINITY, f64::NAN, d);
    }
    let t = d / se2.sqrt();
    let df = se2 * se2 / ((vx / nx).powi(2) / (nx - 1.0) + (vy / ny).powi(2) / (ny - 1.0));
    (t, df, d)
}

// ---------------------------------------------------------------------------
// Ground-truth file format.

/// Writes `truth` as TSV; numbers use shortest round-trip formatting so
/// the file reproduces the in-memory values bit for bit.
pub fn write_truth(path: &Path, comment: &str, gene_ids: &[String], truth: &SimTruth) -> Result<()> {
    let s = truth.n_studies;
    let mut out = String::new();
    if !comment.is_empty() {
        writeln!(out, "# {comment}").unwrap();
    }
    out.push_str("gene_id\tis_de\tdirection\ttheta_g\tde_studies");
    for si in 1..=s {
        write!(out, "\ttheta_s{si}").unwrap();
    }
    out.push_str("\tpattern\n");
    for g in 0..truth.n_genes() {
        let studies = if truth.de_studies[g].is_empty() {
            ".".to_string()
        } else {
            truth.de_studies[g]
                .iter()
                .map(|i| (i + 1).to_string())
                .collect::<Vec<_>>()
                .join(";")
        };
        write!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            gene_ids[g],
            truth.is_de[g] as u8,
            truth.direction[g],
            truth.theta_g[g],
            studies
        )
        .unwrap();
        for si in 0..s {
            write!(out, "\t{}", truth.effect(g, si)).unwrap();
        }
        let pat = truth
            .pattern
            .as_ref()
            .map(|p| p[g].as_str())
            .unwrap_or(".");
        writeln!(out, "\t{pat}").unwrap();
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_truth(path: &Path) -> Result<(Vec<String>, SimTruth)> {
    let (header, rows) = crate::io::read_tsv(path)?;
    let n_studies = header.iter().filter(|h| h.starts_with("theta_s")).count();
    if n_studies == 0 || header.len() != 6 + n_studies {
        return Err(Error::Format("unrecognized truth file header".into()));
    }
    let g = rows.len();
    let mut gene_ids = Vec::with_capacity(g);
    let mut truth = SimTruth {
        n_studies,
        is_de: vec![false; g],
        de_studies: vec![Vec::new(); g],
        direction: vec![0; g],
        theta_g: vec![0.0; g],
        theta_gs: vec![0.0; g * n_studies],
        pattern: None,
    };
    let mut patterns = Vec::with_capacity(g);
    let mut any_pattern = false;
    for (gi, row) in rows.iter().enumerate() {
        if row.len() != header.len() {
            return Err(Error::Format(format!("truth row {} is ragged", gi + 1)));
        }
        gene_ids.push(row[0].clone());
        truth.is_de[gi] = row[1] == "1";
        truth.direction[gi] = row[2]
            .parse()
            .map_err(|_| Error::Format(format!("bad direction {:?}", row[2])))?;
        truth.theta_g[gi] = row[3]
            .parse()
            .map_err(|_| Error::Format(format!("bad theta_g {:?}", row[3])))?;
        if row[4] != "." {
            for part in row[4].split(';') {
                let idx: usize = part
                    .parse()
                    .map_err(|_| Error::Format(format!("bad study list {:?}", row[4])))?;
                truth.de_studies[gi].push(idx - 1);
            }
        }
        for si in 0..n_studies {
            truth.theta_gs[gi * n_studies + si] = row[5 + si]
                .parse()
                .map_err(|_| Error::Format(format!("bad effect {:?}", row[5 + si])))?;
        }
        let pat_field = &row[5 + n_studies];
        if pat_field == "." {
            patterns.push(Pattern::NonDe);
        } else {
            any_pattern = true;
            patterns.push(Pattern::parse(pat_field)?);
        }
    }
    if any_pattern {
        truth.pattern = Some(patterns);
    }
    Ok((gene_ids, truth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testsupport::{ks_uniform, quad_student_t_sf};

    fn small_cfg(seed: u64) -> SimConfig {
        SimConfig {
            n_genes: 400,
            n_studies: 3,
            n_cases: vec![20; 3],
            n_controls: vec![20; 3],
            n_clusters: 8,
            cluster_size: 20,
            seed,
            ..Default::default()
        }
    }

    #[test]
    fn cov_has_exact_sigma_sq_diagonal_and_is_pd() {
        let psi = psi_inv_chol(20);
        for seed in 0..10_000u64 {
            let mut rng = stream_rng(seed, "cov-test", 0);
            let cov = sample_cov(20, 60.0, &psi, 2.0, &mut rng).unwrap();
            for i in 0..20 {
                assert_eq!(cov[(i, i)], 4.0);
            }
            assert!(nalgebra::Cholesky::new(cov).is_some(), "seed {seed} not PD");
        }
    }

    #[test]
    fn cov_identity_scale_has_centered_correlations() {
        // with Psi = I the standardized inverse-Wishart correlations are
        // symmetric around zero
        let psi = nalgebra::Cholesky::new(DMatrix::<f64>::identity(10, 10))
            .unwrap()
            .l();
        let mut rng = stream_rng(3, "cov-id", 0);
        let mut acc = 0.0;
        let mut cnt = 0usize;
        for _ in 0..1000 {
            let cov = sample_cov(10, 60.0, &psi, 1.0, &mut rng).unwrap();
            for i in 0..10 {
                for j in 0..i {
                    acc += cov[(i, j)];
                    cnt += 1;
                }
            }
        }
        let mean = acc / cnt as f64;
        assert!(mean.abs() < 0.02, "mean off-diagonal correlation {mean}");
    }

    #[test]
    fn generate_respects_truth() {
        let cfg = small_cfg(11);
        let (es, truth) = generate(&cfg).unwrap();

        // controls carry no effect
        let mut ctrl_sum = 0.0;
        let mut ctrl_n = 0usize;
        for s in 0..3 {
            for g in 0..cfg.n_genes {
                for &v in es.controls(s, g) {
                    ctrl_sum += v;
                    ctrl_n += 1;
                }
            }
        }
        let ctrl_mean = ctrl_sum / ctrl_n as f64;
        assert!(
            ctrl_mean.abs() < 4.0 / (ctrl_n as f64).sqrt() * 2.0,
            "control mean {ctrl_mean}"
        );

        // non-DE genes: case-control difference near zero on average
        let mut diff_null = Vec::new();
        let mut err_de = Vec::new();
        for g in 0..cfg.n_genes {
            for s in 0..3 {
                let d = stats::mean(es.cases(s, g)) - stats::mean(es.controls(s, g));
                if truth.is_de[g] && truth.de_studies[g].contains(&s) {
                    err_de.push(d - truth.signed_effect(g, s));
                } else {
                    diff_null.push(d);
                }
            }
        }
        let null_mean = stats::mean(&diff_null);
        assert!(null_mean.abs() < 0.03, "null mean difference {null_mean}");
        // estimated effects track theta_gs: mean error ~ N(0, 2 sigma^2/N / n_de)
        let de_err = stats::mean(&err_de);
        assert!(de_err.abs() < 0.05, "effect recovery bias {de_err}");
        assert!(stats::sample_sd(&err_de) < 0.6);

        // truth structure
        let g1 = (0.3 * cfg.n_genes as f64) as usize;
        assert_eq!(truth.is_de.iter().filter(|&&b| b).count(), g1);
        for g in 0..g1 {
            assert!(truth.theta_g[g] > 0.5);
            assert!(!truth.de_studies[g].is_empty());
            for &s in &truth.de_studies[g] {
                assert!(truth.effect(g, s) > 0.0);
            }
        }
    }

    #[test]
    fn generate_is_deterministic() {
        let cfg = small_cfg(7);
        let (es1, t1) = generate(&cfg).unwrap();
        let (es2, t2) = generate(&cfg).unwrap();
        assert_eq!(t1, t2);
        for s in 0..3 {
            assert_eq!(es1.data[s], es2.data[s]);
        }
    }

    #[test]
    fn metapattern_groups_sized_and_localized() {
        let cfg = SimConfig {
            scenario: Scenario::Metapattern,
            ..SimConfig::for_scenario(Scenario::Metapattern, 2000, 4, 1.0, 5)
        };
        let (es, truth) = generate(&cfg).unwrap();
        let patterns = truth.pattern.as_ref().unwrap();
        let count = |p: Pattern| patterns.iter().filter(|&&x| x == p).count();
        assert_eq!(count(Pattern::HomoPos), 40);
        assert_eq!(count(Pattern::HomoNeg), 40);
        assert_eq!(count(Pattern::Ssp1Pos), 20);
        assert_eq!(count(Pattern::Ssp1Neg), 20);
        assert_eq!(count(Pattern::Ssp2Pos), 20);
        assert_eq!(count(Pattern::Ssp2Neg), 20);
        assert_eq!(count(Pattern::NonDe), 2000 - 160);

        // ssp1 genes carry no effect outside study 1
        let mut diffs = Vec::new();
        for g in 0..2000 {
            if patterns[g] == Pattern::Ssp1Pos {
                assert_eq!(truth.de_studies[g], vec![0]);
                for s in 1..4 {
                    assert_eq!(truth.effect(g, s), 0.0);
                    diffs.push(stats::mean(es.cases(s, g)) - stats::mean(es.controls(s, g)));
                }
            }
        }
        let m = stats::mean(&diffs);
        assert!(m.abs() < 0.1, "ssp1+ leakage into studies 2-4: {m}");
    }

    #[test]
    fn unbalanced_scenarios_constructible() {
        for (scenario, cases, controls) in [
            (Scenario::UnbalancedA, vec![20, 30, 40], vec![20, 30, 40]),
            (Scenario::UnbalancedB, vec![20, 50, 100], vec![20, 50, 100]),
            (Scenario::UnbalancedC, vec![60, 60, 60], vec![20, 20, 20]),
            (Scenario::UnbalancedD, vec![20, 40, 60], vec![60, 40, 20]),
        ] {
            let cfg = SimConfig {
                n_genes: 100,
                n_clusters: 2,
                ..SimConfig::for_scenario(scenario, 100, 3, 1.0, 1)
            };
            assert_eq!(cfg.n_cases, cases);
            assert_eq!(cfg.n_controls, controls);
            let (es, _) = generate(&cfg).unwrap();
            for s in 0..3 {
                assert_eq!(es.n_samples(s), cases[s] + controls[s]);
            }
        }
    }

    #[test]
    fn welch_hand_checked_toy() {
        // x = (2,4,9), y = (1,2,3): t = sqrt(27/14), df = 392/170
        let (t, df, d) = welch_t(&[2.0, 4.0, 9.0], &[1.0, 2.0, 3.0]);
        assert!((t - (27.0f64 / 14.0).sqrt()).abs() < 1e-12);
        assert!((df - 392.0 / 170.0).abs() < 1e-12);
        assert_eq!(d, 3.0);
        let p2 = stats::student_t_two_sided(t, df);
        // against the tail-quadrature oracle
        let oracle = 2.0 * quad_student_t_sf(t, df);
        assert!((p2 - oracle).abs() < 1e-7, "p2 {p2} vs oracle {oracle}");
        assert!((p2 - 0.2838344049617089).abs() < 1e-12);
    }

    #[test]
    fn t_test_null_is_uniform_and_signal_is_tiny() {
        // uncorrelated pure-null data -> uniform two-sided p-values
        let cfg = SimConfig {
            n_genes: 2000,
            n_clusters: 0,
            cluster_size: 0,
            de_fraction: 0.0,
            n_studies: 1,
            n_cases: vec![20],
            n_controls: vec![20],
            seed: 13,
            ..Default::default()
        };
        let (es, _) = generate(&cfg).unwrap();
        let (p2, _) = t_test_pvalues(&es);
        let d = ks_uniform(p2.values());
        assert!(d < 1.95 / (2000.0f64).sqrt(), "KS {d}");

        // planted theta = 5 is overwhelming at n = 20/20
        let mut es2 = es;
        let w = es2.n_samples(0);
        for n in 20..w {
            es2.data[0][n] += 5.0;
        }
        let (p2, sign) = t_test_pvalues(&es2);
        assert!(p2.get(0, 0) < 1e-6);
        assert_eq!(sign.get(0, 0), 1.0);
    }

    #[test]
    fn truth_roundtrips_bit_exact() {
        let cfg = SimConfig {
            n_genes: 150,
            n_clusters: 3,
            ..small_cfg(21)
        };
        let (_, truth) = generate(&cfg).unwrap();
        let ids = gene_ids(150);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("truth.tsv");
        write_truth(&path, "seed=21", &ids, &truth).unwrap();
        let (ids2, truth2) = read_truth(&path).unwrap();
        assert_eq!(ids, ids2);
        assert_eq!(truth, truth2);

        // and with pattern labels
        let cfg = SimConfig {
            n_genes: 500,
            n_clusters: 5,
            ..SimConfig::for_scenario(Scenario::Metapattern, 500, 4, 1.0, 2)
        };
        let (_, truth) = generate(&cfg).unwrap();
        let ids = gene_ids(500);
        let path = dir.path().join("truth_mp.tsv");
        write_truth(&path, "", &ids, &truth).unwrap();
        let (_, truth2) = read_truth(&path).unwrap();
        assert_eq!(truth, truth2);
    }
}
