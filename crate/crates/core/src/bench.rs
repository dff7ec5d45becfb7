//! End-to-end simulation benchmark: simulate, test, fit, infer in every
//! decision space, run the classical combiners, and score everything
//! against the ground truth, over a (S, sigma) grid of seeded replicates.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::baselines;
use crate::error::{Error, Result};
use crate::inference::{self, DecisionSpace};
use crate::io;
use crate::mcmc::{self, McmcConfig};
use crate::metrics::{self, EvalReport};
use crate::rng::fnv1a;
use crate::simgen::{self, Scenario, SimConfig};

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub scenario: Scenario,
    pub n_genes: usize,
    /// Study counts of the grid (general scenario only; presets fix S).
    pub s_values: Vec<usize>,
    pub sigma_values: Vec<f64>,
    pub n_seeds: usize,
    pub seed: u64,
    pub fdr_level: f64,
    /// r for the at-least-r space; defaults to floor(S/2) + 1 per cell.
    pub r: Option<usize>,
    pub de_fraction: f64,
    /// Template for the per-run chains; the seed field is replaced per
    /// replicate.
    pub mcmc: McmcConfig,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            scenario: Scenario::General,
            n_genes: 2000,
            s_values: vec![3],
            sigma_values: vec![1.0],
            n_seeds: 20,
            seed: 0,
            fdr_level: 0.05,
            r: None,
            de_fraction: 0.30,
            mcmc: McmcConfig {
                n_iter: 4000,
                burn_in: 500,
                ..Default::default()
            },
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MethodReport {
    pub method: String,
    #[serde(flatten)]
    pub eval: EvalReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct SeedReport {
    pub tool_version: String,
    pub scenario: String,
    pub n_genes: usize,
    pub n_studies: usize,
    pub sigma: f64,
    pub seed_index: usize,
    pub run_seed: u64,
    pub gamma_accept_rate: f64,
    pub reports: Vec<MethodReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SummaryRow {
    pub scenario: String,
    pub n_genes: usize,
    pub n_studies: usize,
    pub sigma: f64,
    pub space: String,
    pub method: String,
    pub n_seeds: usize,
    pub fdr_mean: f64,
    pub fdr_sd: f64,
    pub fnr_mean: f64,
    pub fnr_sd: f64,
    pub auc_mean: f64,
    pub auc_sd: f64,
    pub n_declared_mean: f64,
}

#[derive(Debug, Clone)]
pub struct CellResult {
    pub scenario: Scenario,
    pub n_genes: usize,
    pub n_studies: usize,
    pub sigma: f64,
    pub seeds: Vec<SeedReport>,
    pub rows: Vec<SummaryRow>,
}

impl CellResult {
    pub fn label(&self) -> String {
        format!(
            "{}_S{}_sigma{}",
            self.scenario.label(),
            self.n_studies,
            self.sigma
        )
    }

    pub fn row(&self, space: &str, method: &str) -> Option<&SummaryRow> {
        self.rows
            .iter()
            .find(|r| r.space == space && r.method == method)
    }
}

#[derive(Debug, Clone)]
pub struct BenchResult {
    pub cells: Vec<CellResult>,
    /// Cells that failed, with their diagnostics.
    pub failures: Vec<(String, String)>,
}

fn run_seed_for_cell(
    cfg: &BenchConfig,
    n_studies: usize,
    sigma: f64,
    seed_index: usize,
) -> Result<SeedReport> {
    let mut tag = format!(
        "{}-G{}-S{}-sigma{}",
        cfg.scenario.label(),
        cfg.n_genes,
        n_studies,
        sigma
    );
    write!(tag, "-k{seed_index}").unwrap();
    let run_seed = fnv1a(tag.as_bytes()) ^ cfg.seed;

    let mut sim_cfg =
        SimConfig::for_scenario(cfg.scenario, cfg.n_genes, n_studies, sigma, run_seed);
    sim_cfg.de_fraction = cfg.de_fraction;
    if cfg.scenario == Scenario::Metapattern {
        sim_cfg.de_fraction = 0.08; // pattern fractions are fixed inside
    }
    let (es, truth) = simgen::generate(&sim_cfg)?;
    let n_studies = sim_cfg.n_studies;
    let (p2, sign) = simgen::t_test_pvalues(&es);
    let p1 = io::two_sided_to_one_sided(&p2, &sign)?;
    let z = io::p_to_z(&p1);

    let chain_cfg = McmcConfig {
        seed: run_seed,
        ..cfg.mcmc.clone()
    };
    let (acc, diag) = mcmc::run(&z, chain_cfg)?;

    let r = cfg.r.unwrap_or_else(|| DecisionSpace::default_r(n_studies));
    let spaces = [
        DecisionSpace::ABar,
        DecisionSpace::B,
        DecisionSpace::RBar(r),
    ];
    let mut reports = Vec::new();
    for space in spaces {
        let xi = inference::compute_xi(&acc, space)?;
        let decision = inference::bayes_fdr_declare(&xi, cfg.fdr_level)?;
        let score: Vec<f64> = xi.iter().map(|&x| 1.0 - x).collect();
        let alt = metrics::truth_label(&truth, space);
        reports.push(MethodReport {
            method: "bayes".into(),
            eval: metrics::evaluate(&decision.declared, &score, &alt, &space.label())?,
        });
    }

    // classical combiners on the two-sided p-values, BH at the same
    // level; boundary values are nudged into the open interval
    let g = cfg.n_genes;
    let rows: Vec<Vec<f64>> = (0..g)
        .map(|gi| {
            p2.row(gi)
                .iter()
                .map(|&v| v.clamp(1e-300, 1.0 - 1e-16))
                .collect()
        })
        .collect();
    let combos: [(&str, DecisionSpace, Box<dyn Fn(&[f64]) -> Result<f64>>); 5] = [
        ("maxp", DecisionSpace::ABar, Box::new(baselines::maxp)),
        ("fisher", DecisionSpace::B, Box::new(baselines::fisher)),
        ("stouffer", DecisionSpace::B, Box::new(baselines::stouffer)),
        (
            "aw",
            DecisionSpace::B,
            Box::new(|p: &[f64]| baselines::aw_fisher(p).map(|r| r.minp)),
        ),
        (
            "rop",
            DecisionSpace::RBar(r),
            Box::new(move |p: &[f64]| baselines::rop(p, r)),
        ),
    ];
    for (name, space, f) in combos {
        let p: Vec<f64> = rows.iter().map(|row| f(row)).collect::<Result<_>>()?;
        let declared = baselines::bh_fdr(&p, cfg.fdr_level)?;
        let score: Vec<f64> = p.iter().map(|&v| 1.0 - v).collect();
        let alt = metrics::truth_label(&truth, space);
        reports.push(MethodReport {
            method: name.into(),
            eval: metrics::evaluate(&declared, &score, &alt, &space.label())?,
        });
    }

    Ok(SeedReport {
        tool_version: crate::VERSION.into(),
        scenario: cfg.scenario.label().into(),
        n_genes: cfg.n_genes,
        n_studies,
        sigma,
        seed_index,
        run_seed,
        gamma_accept_rate: diag.gamma_accept_rate(),
        reports,
    })
}

fn summarize(cfg: &BenchConfig, n_studies: usize, sigma: f64, seeds: &[SeedReport]) -> Vec<SummaryRow> {
    let mut keys: Vec<(String, String)> = Vec::new();
    for rep in seeds.iter().flat_map(|s| &s.reports) {
        let key = (rep.eval.space.clone(), rep.method.clone());
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.iter()
        .map(|(space, method)| {
            let mut fdr = Vec::new();
            let mut fnr = Vec::new();
            let mut auc = Vec::new();
            let mut declared = Vec::new();
            for s in seeds {
                for rep in &s.reports {
                    if &rep.eval.space == space && &rep.method == method {
                        fdr.push(rep.eval.fdr);
                        fnr.push(rep.eval.fnr);
                        auc.push(rep.eval.auc);
                        declared.push(rep.eval.n_declared as f64);
                    }
                }
            }
            SummaryRow {
                scenario: cfg.scenario.label().into(),
                n_genes: cfg.n_genes,
                n_studies,
                sigma,
                space: space.clone(),
                method: method.clone(),
                n_seeds: fdr.len(),
                fdr_mean: crate::stats::mean(&fdr),
                fdr_sd: crate::stats::sample_sd(&fdr),
                fnr_mean: crate::stats::mean(&fnr),
                fnr_sd: crate::stats::sample_sd(&fnr),
                auc_mean: crate::stats::mean(&auc),
                auc_sd: crate::stats::sample_sd(&auc),
                n_declared_mean: crate::stats::mean(&declared),
            }
        })
        .collect()
}

/// Runs the whole grid. Failed cells are reported and skipped; the other
/// cells complete.
pub fn run_grid(cfg: &BenchConfig) -> BenchResult {
    let s_values = match cfg.scenario {
        Scenario::General => cfg.s_values.clone(),
        Scenario::Metapattern => vec![4],
        _ => vec![3],
    };
    let mut cells = Vec::new();
    let mut failures = Vec::new();
    for &s in &s_values {
        for &sigma in &cfg.sigma_values {
            let label = format!("{}_S{}_sigma{}", cfg.scenario.label(), s, sigma);
            let seeds: Result<Vec<SeedReport>> = (0..cfg.n_seeds)
                .into_par_iter()
                .map(|k| run_seed_for_cell(cfg, s, sigma, k))
                .collect();
            match seeds {
                Ok(seeds) => {
                    let rows = summarize(cfg, s, sigma, &seeds);
                    cells.push(CellResult {
                        scenario: cfg.scenario,
                        n_genes: cfg.n_genes,
                        n_studies: s,
                        sigma,
                        seeds,
                        rows,
                    });
                }
                Err(e) => {
                    log::error!("bench cell {label} failed: {e}");
                    failures.push((label, e.to_string()));
                }
            }
        }
    }
    BenchResult { cells, failures }
}

/// Writes `summary.tsv` plus one JSON per seed under `cells/<label>/`.
pub fn write_outputs(result: &BenchResult, dir: &Path, header: &str) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let columns = [
        "scenario",
        "n_genes",
        "n_studies",
        "sigma",
        "space",
        "method",
        "n_seeds",
        "fdr_mean",
        "fdr_sd",
        "fnr_mean",
        "fnr_sd",
        "auc_mean",
        "auc_sd",
        "n_declared_mean",
    ];
    let rows = result.cells.iter().flat_map(|cell| {
        cell.rows.iter().map(|r| {
            vec![
                r.scenario.clone(),
                r.n_genes.to_string(),
                r.n_studies.to_string(),
                r.sigma.to_string(),
                r.space.clone(),
                r.method.clone(),
                r.n_seeds.to_string(),
                r.fdr_mean.to_string(),
                r.fdr_sd.to_string(),
                r.fnr_mean.to_string(),
                r.fnr_sd.to_string(),
                r.auc_mean.to_string(),
                r.auc_sd.to_string(),
                r.n_declared_mean.to_string(),
            ]
        })
    });
    io::write_tsv(&dir.join("summary.tsv"), header, &columns, rows)?;

    for cell in &result.cells {
        let cell_dir = dir.join("cells").join(cell.label());
        fs::create_dir_all(&cell_dir).map_err(|e| Error::io(&cell_dir, e))?;
        for seed in &cell.seeds {
            let path = cell_dir.join(format!("seed_{:04}.json", seed.seed_index));
            let json = serde_json::to_string_pretty(seed)
                .map_err(|e| Error::Internal(format!("serialize seed report: {e}")))?;
            fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
        }
    }
    Ok(())
}
