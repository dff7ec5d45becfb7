//! Command-line interface: fit, infer, cluster, baselines, simulate,
//! evaluate, bench. Logs go to stderr; data only ever goes to files.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Deserialize;

use metapat::baselines;
use metapat::bench::{self, BenchConfig};
use metapat::error::{Error, Result};
use metapat::inference::{self, DecisionSpace};
use metapat::io::{self, MatrixKind, ParsedMatrix};
use metapat::mcmc::{self, checkpoint, InitMode, McmcConfig, PosteriorAccumulator};
use metapat::metapattern::{self, TightClustConfig};
use metapat::metrics;
use metapat::reports::{self, PosteriorMeta};
use metapat::rng::fnv1a;
use metapat::simgen::{self, Scenario, SimConfig};

#[derive(Parser)]
#[command(name = "metapat", version, about = "Bayesian meta-analysis of differential expression with meta-pattern clustering")]
struct Cli {
    /// TOML config file; command-line flags take precedence over it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the hierarchical mixture by MCMC and write the posterior.
    Fit {
        /// Input matrix (TSV; header = study IDs, first column = gene IDs).
        #[arg(long)]
        input: PathBuf,
        /// Input kind: zstat, or pvalue for one-sided p-values.
        #[arg(long, default_value = "zstat")]
        input_kind: String,
        #[arg(long)]
        iters: Option<usize>,
        #[arg(long)]
        burnin: Option<usize>,
        #[arg(long)]
        thin: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        sigma0_sq: Option<f64>,
        #[arg(long)]
        alpha_pos: Option<f64>,
        #[arg(long)]
        alpha_neg: Option<f64>,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        gamma_proposal_sd: Option<f64>,
        /// Chain initialization: threshold or null.
        #[arg(long)]
        init: Option<String>,
        /// Write a binary checkpoint every N iterations (0 = off).
        #[arg(long)]
        checkpoint_every: Option<usize>,
        /// Resume from a checkpoint written by an identical run.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Output directory for the posterior files.
        #[arg(long)]
        out: PathBuf,
    },
    /// Turn a fitted posterior into FDR-controlled gene decisions.
    Infer {
        #[arg(long)]
        posterior: PathBuf,
        /// Decision space: B, Abar, or rbar.
        #[arg(long)]
        space: Option<String>,
        #[arg(long)]
        r: Option<usize>,
        #[arg(long)]
        fdr: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Tight-cluster declared genes into meta-pattern modules.
    Cluster {
        #[arg(long)]
        posterior: PathBuf,
        /// decisions.tsv from `infer`; only declared genes are clustered.
        #[arg(long)]
        genes: PathBuf,
        /// Number of modules to extract.
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        k_start: Option<usize>,
        #[arg(long)]
        n_resample: Option<usize>,
        #[arg(long)]
        subsample_frac: Option<f64>,
        #[arg(long)]
        tightness_alpha: Option<f64>,
        #[arg(long)]
        stability_top: Option<usize>,
        #[arg(long)]
        min_module_size: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Classical p-value combination with BH control.
    Baselines {
        /// Two-sided p-value matrix (TSV).
        #[arg(long)]
        input: PathBuf,
        /// fisher, stouffer, maxp, rop, or aw.
        #[arg(long)]
        method: String,
        #[arg(long)]
        r: Option<usize>,
        #[arg(long)]
        fdr: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate synthetic expression data with ground truth.
    Simulate {
        #[arg(long)]
        scenario: Option<String>,
        #[arg(long = "S")]
        s: Option<usize>,
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long = "G")]
        g: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        de_fraction: Option<f64>,
        #[arg(long)]
        n_clusters: Option<usize>,
        #[arg(long)]
        cluster_size: Option<usize>,
        #[arg(long)]
        wishart_df: Option<f64>,
        /// Per-study case counts, comma separated.
        #[arg(long)]
        cases: Option<String>,
        /// Per-study control counts, comma separated.
        #[arg(long)]
        controls: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a decisions file against simulation ground truth.
    Evaluate {
        #[arg(long)]
        decisions: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        space: Option<String>,
        #[arg(long)]
        r: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rerun the reduced-scale simulation grid end to end.
    Bench {
        #[arg(long)]
        scenario: Option<String>,
        /// Study counts, comma separated (general scenario).
        #[arg(long = "S")]
        s: Option<String>,
        /// Noise levels, comma separated.
        #[arg(long)]
        sigma: Option<String>,
        #[arg(long = "G")]
        g: Option<usize>,
        #[arg(long)]
        n_seeds: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        iters: Option<usize>,
        #[arg(long)]
        burnin: Option<usize>,
        #[arg(long)]
        fdr: Option<f64>,
        #[arg(long)]
        r: Option<usize>,
        #[arg(long)]
        de_fraction: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Flat key-value config file; unknown keys are rejected.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    seed: Option<u64>,
    iters: Option<usize>,
    burnin: Option<usize>,
    thin: Option<usize>,
    sigma0_sq: Option<f64>,
    alpha_pos: Option<f64>,
    alpha_neg: Option<f64>,
    beta: Option<f64>,
    gamma_proposal_sd: Option<f64>,
    init: Option<String>,
    checkpoint_every: Option<usize>,
    fdr: Option<f64>,
    space: Option<String>,
    r: Option<usize>,
    k_target: Option<usize>,
    k_start: Option<usize>,
    n_resample: Option<usize>,
    subsample_frac: Option<f64>,
    tightness_alpha: Option<f64>,
    stability_top: Option<usize>,
    min_module_size: Option<usize>,
    scenario: Option<String>,
    n_genes: Option<usize>,
    n_studies: Option<usize>,
    sigma: Option<f64>,
    n_cases: Option<Vec<usize>>,
    n_controls: Option<Vec<usize>>,
    de_fraction: Option<f64>,
    n_clusters: Option<usize>,
    cluster_size: Option<usize>,
    wishart_df: Option<f64>,
    n_seeds: Option<usize>,
    threads: Option<usize>,
}

impl FileConfig {
    fn load(path: Option<&Path>) -> Result<FileConfig> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

fn env_seed() -> Option<u64> {
    std::env::var("METAPAT_SEED").ok().and_then(|s| s.parse().ok())
}

/// Precedence: command line > config file > METAPAT_SEED > 0.
fn resolve_seed(cli: Option<u64>, file: &FileConfig) -> u64 {
    cli.or(file.seed).or_else(env_seed).unwrap_or(0)
}

fn header_line(seed: u64, config_desc: &str) -> String {
    format!(
        "metapat {} seed={} config={:016x}",
        metapat::VERSION,
        seed,
        fnv1a(config_desc.as_bytes())
    )
}

fn parse_usize_list(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad integer {t:?} in list")))
        })
        .collect()
}

fn parse_f64_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad number {t:?} in list")))
        })
        .collect()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let file = FileConfig::load(cli.config.as_deref())?;
    if let Some(n) = cli.threads.or(file.threads) {
        // ignore failure when a pool already exists (e.g. in tests)
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match cli.command {
        Command::Fit {
            input,
            input_kind,
            iters,
            burnin,
            thin,
            seed,
            sigma0_sq,
            alpha_pos,
            alpha_neg,
            beta,
            gamma_proposal_sd,
            init,
            checkpoint_every,
            resume,
            out,
        } => {
            let seed = resolve_seed(seed, &file);
            let init = match init
                .or_else(|| file.init.clone())
                .unwrap_or_else(|| "threshold".into())
                .as_str()
            {
                "threshold" => InitMode::ZThreshold,
                "null" => InitMode::AllNull,
                other => {
                    return Err(Error::Config(format!(
                        "unknown init mode {other:?} (expected threshold or null)"
                    )))
                }
            };
            let defaults = McmcConfig::default();
            let cfg = McmcConfig {
                n_iter: iters.or(file.iters).unwrap_or(defaults.n_iter),
                burn_in: burnin.or(file.burnin).unwrap_or(defaults.burn_in),
                thin: thin.or(file.thin).unwrap_or(defaults.thin),
                seed,
                beta: beta.or(file.beta).unwrap_or(defaults.beta),
                sigma0_sq: sigma0_sq.or(file.sigma0_sq).unwrap_or(defaults.sigma0_sq),
                alpha_pos: alpha_pos.or(file.alpha_pos).unwrap_or(defaults.alpha_pos),
                alpha_neg: alpha_neg.or(file.alpha_neg).unwrap_or(defaults.alpha_neg),
                gamma_proposal_sd: gamma_proposal_sd
                    .or(file.gamma_proposal_sd)
                    .unwrap_or(defaults.gamma_proposal_sd),
                init,
            };
            let checkpoint_every = checkpoint_every.or(file.checkpoint_every).unwrap_or(0);
            let kind = match input_kind.as_str() {
                "zstat" => MatrixKind::ZStat,
                "pvalue" => MatrixKind::PValue,
                other => {
                    return Err(Error::Config(format!(
                        "unknown input kind {other:?} (expected zstat or pvalue)"
                    )))
                }
            };
            cmd_fit(&input, kind, cfg, checkpoint_every, resume.as_deref(), &out)
        }
        Command::Infer {
            posterior,
            space,
            r,
            fdr,
            out,
        } => {
            let fdr = fdr.or(file.fdr).unwrap_or(0.05);
            let r = r.or(file.r);
            let space = space
                .or_else(|| file.space.clone())
                .ok_or_else(|| Error::Config("no decision space given (--space or config)".into()))?;
            cmd_infer(&posterior, &space, r, fdr, &out)
        }
        Command::Cluster {
            posterior,
            genes,
            k,
            k_start,
            n_resample,
            subsample_frac,
            tightness_alpha,
            stability_top,
            min_module_size,
            seed,
            out,
        } => {
            let defaults = TightClustConfig::default();
            let cfg = TightClustConfig {
                k_target: k.or(file.k_target).unwrap_or(defaults.k_target),
                k_start: k_start.or(file.k_start),
                n_resample: n_resample.or(file.n_resample).unwrap_or(defaults.n_resample),
                subsample_frac: subsample_frac
                    .or(file.subsample_frac)
                    .unwrap_or(defaults.subsample_frac),
                tightness_alpha: tightness_alpha
                    .or(file.tightness_alpha)
                    .unwrap_or(defaults.tightness_alpha),
                stability_top: stability_top
                    .or(file.stability_top)
                    .unwrap_or(defaults.stability_top),
                min_module_size: min_module_size
                    .or(file.min_module_size)
                    .unwrap_or(defaults.min_module_size),
                seed: resolve_seed(seed, &file),
            };
            cmd_cluster(&posterior, &genes, cfg, &out)
        }
        Command::Baselines {
            input,
            method,
            r,
            fdr,
            out,
        } => {
            let fdr = fdr.or(file.fdr).unwrap_or(0.05);
            cmd_baselines(&input, &method, r.or(file.r), fdr, &out)
        }
        Command::Simulate {
            scenario,
            s,
            sigma,
            g,
            seed,
            de_fraction,
            n_clusters,
            cluster_size,
            wishart_df,
            cases,
            controls,
            out,
        } => {
            let scenario = Scenario::parse(
                &scenario
                    .or_else(|| file.scenario.clone())
                    .unwrap_or_else(|| "general".into()),
            )?;
            let seed = resolve_seed(seed, &file);
            let mut cfg = SimConfig::for_scenario(
                scenario,
                g.or(file.n_genes).unwrap_or(2000),
                s.or(file.n_studies).unwrap_or(3),
                sigma.or(file.sigma).unwrap_or(1.0),
                seed,
            );
            if let Some(f) = de_fraction.or(file.de_fraction) {
                cfg.de_fraction = f;
            }
            if let Some(n) = n_clusters.or(file.n_clusters) {
                cfg.n_clusters = n;
            }
            if let Some(n) = cluster_size.or(file.cluster_size) {
                cfg.cluster_size = n;
            }
            if let Some(df) = wishart_df.or(file.wishart_df) {
                cfg.wishart_df = df;
            }
            if let Some(list) = cases {
                cfg.n_cases = parse_usize_list(&list)?;
            } else if let Some(list) = &file.n_cases {
                cfg.n_cases = list.clone();
            }
            if let Some(list) = controls {
                cfg.n_controls = parse_usize_list(&list)?;
            } else if let Some(list) = &file.n_controls {
                cfg.n_controls = list.clone();
            }
            cmd_simulate(cfg, &out)
        }
        Command::Evaluate {
            decisions,
            truth,
            space,
            r,
            out,
        } => {
            let space = space
                .or_else(|| file.space.clone())
                .ok_or_else(|| Error::Config("no decision space given (--space or config)".into()))?;
            cmd_evaluate(&decisions, &truth, &space, r.or(file.r), &out)
        }
        Command::Bench {
            scenario,
            s,
            sigma,
            g,
            n_seeds,
            seed,
            iters,
            burnin,
            fdr,
            r,
            de_fraction,
            out,
        } => {
            let scenario = Scenario::parse(
                &scenario
                    .or_else(|| file.scenario.clone())
                    .unwrap_or_else(|| "general".into()),
            )?;
            let defaults = BenchConfig::default();
            let cfg = BenchConfig {
                scenario,
                n_genes: g.or(file.n_genes).unwrap_or(defaults.n_genes),
                s_values: match s {
                    Some(list) => parse_usize_list(&list)?,
                    None => file.n_studies.map(|v| vec![v]).unwrap_or(defaults.s_values),
                },
                sigma_values: match sigma {
                    Some(list) => parse_f64_list(&list)?,
                    None => file.sigma.map(|v| vec![v]).unwrap_or(defaults.sigma_values),
                },
                n_seeds: n_seeds.or(file.n_seeds).unwrap_or(defaults.n_seeds),
                seed: resolve_seed(seed, &file),
                fdr_level: fdr.or(file.fdr).unwrap_or(defaults.fdr_level),
                r: r.or(file.r),
                de_fraction: de_fraction.or(file.de_fraction).unwrap_or(defaults.de_fraction),
                mcmc: McmcConfig {
                    n_iter: iters.or(file.iters).unwrap_or(4000),
                    burn_in: burnin.or(file.burnin).unwrap_or(500),
                    ..Default::default()
                },
            };
            cmd_bench(cfg, &out)
        }
    }
}

fn cmd_fit(
    input: &Path,
    kind: MatrixKind,
    cfg: McmcConfig,
    checkpoint_every: usize,
    resume: Option<&Path>,
    out: &Path,
) -> Result<()> {
    let z = match io::parse_matrix(input, kind)? {
        ParsedMatrix::ZStat(z) => z,
        ParsedMatrix::PValue(p) => io::p_to_z(&p),
    };
    let (gene_ids, study_ids) = (z.data.gene_ids().to_vec(), z.data.study_ids().to_vec());
    log::info!(
        "fitting {} genes x {} studies, {} iterations ({} burn-in, thin {})",
        gene_ids.len(),
        study_ids.len(),
        cfg.n_iter,
        cfg.burn_in,
        cfg.thin
    );

    let desc = format!("fit:{cfg:?}");
    let header = header_line(cfg.seed, &desc);
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;

    let (mut chain, mut acc) = match resume {
        Some(path) => {
            let loaded = checkpoint::load(path, &z, cfg.clone())?;
            log::info!(
                "resumed from {} at iteration {}",
                path.display(),
                loaded.0.iterations_done()
            );
            loaded
        }
        None => {
            let chain = mcmc::Chain::new(&z, cfg.clone())?;
            let acc = PosteriorAccumulator::new(gene_ids.len(), study_ids.len());
            (chain, acc)
        }
    };

    let start = chain.iterations_done();
    for it in start..cfg.n_iter {
        chain.sweep()?;
        if it >= cfg.burn_in && (it - cfg.burn_in) % cfg.thin == 0 {
            chain.accumulate(&mut acc);
        }
        if checkpoint_every > 0 && (it + 1) % checkpoint_every == 0 && it + 1 < cfg.n_iter {
            let path = out.join(format!("checkpoint_{:07}.ckpt", it + 1));
            checkpoint::save(&chain, &acc, &path)?;
            log::info!("checkpoint written to {}", path.display());
        }
    }
    if acc.n_samples() == 0 {
        return Err(Error::Config(
            "run retained no samples (n_iter <= burn_in)".into(),
        ));
    }

    let diag = chain.diagnostics();
    log::info!(
        "done; {} retained samples, gamma acceptance {:.2}",
        acc.n_samples(),
        diag.gamma_accept_rate()
    );
    let meta = PosteriorMeta {
        tool_version: metapat::VERSION.into(),
        n_genes: gene_ids.len(),
        n_studies: study_ids.len(),
        n_samples: acc.n_samples(),
        seed: cfg.seed,
        config_hash: format!("{:016x}", fnv1a(desc.as_bytes())),
        gamma_accept_rate: diag.gamma_accept_rate(),
    };
    reports::write_posterior_dir(out, &header, &gene_ids, &study_ids, &acc, &diag, meta)
}

fn cmd_infer(posterior: &Path, space: &str, r: Option<usize>, fdr: f64, out: &Path) -> Result<()> {
    let bundle = reports::read_posterior_dir(posterior)?;
    let space = DecisionSpace::parse(space, r, bundle.acc.n_studies())?;
    let xi = inference::compute_xi(&bundle.acc, space)?;
    let decision = inference::bayes_fdr_declare(&xi, fdr)?;
    let v = inference::confidence_scores(&bundle.acc)?;
    log::info!(
        "space {}: declared {} of {} genes (kappa {:.4}, achieved FDR {:.4})",
        space.label(),
        decision.n_declared,
        xi.len(),
        decision.kappa,
        decision.achieved_fdr
    );
    let desc = format!("infer:{}:{r:?}:{fdr}", space.label());
    let header = header_line(bundle.meta.seed, &desc);
    reports::write_decisions(
        out,
        &header,
        &bundle.gene_ids,
        &bundle.study_ids,
        &xi,
        &decision.declared,
        &v,
    )
}

fn cmd_cluster(posterior: &Path, genes: &Path, cfg: TightClustConfig, out: &Path) -> Result<()> {
    let bundle = reports::read_posterior_dir(posterior)?;
    let decisions = reports::read_decisions(genes)?;
    let mut selected: Vec<usize> = Vec::new();
    for (i, id) in decisions.gene_ids.iter().enumerate() {
        if decisions.declared[i] {
            let idx = bundle
                .gene_ids
                .iter()
                .position(|g| g == id)
                .ok_or_else(|| {
                    Error::Domain(format!("declared gene {id} not present in the posterior"))
                })?;
            selected.push(idx);
        }
    }
    if selected.len() < cfg.k_start() {
        return Err(Error::Domain(format!(
            "{} declared genes is fewer than the starting K {}",
            selected.len(),
            cfg.k_start()
        )));
    }
    log::info!("clustering {} declared genes", selected.len());

    let s = bundle.acc.n_studies();
    let u: Vec<Vec<[f64; 3]>> = selected
        .iter()
        .map(|&g| (0..s).map(|si| bundle.acc.u_triplet(g, si)).collect())
        .collect();
    let d = metapattern::dissimilarity_from_posteriors(&u)?;
    let assignment = metapattern::tight_cluster(&d, &cfg)?;
    log::info!("extracted {} modules", assignment.n_modules);

    let v = inference::confidence_scores(&bundle.acc)?;
    let gene_ids: Vec<String> = selected
        .iter()
        .map(|&g| bundle.gene_ids[g].clone())
        .collect();
    let v_rows: Vec<Vec<f64>> = selected
        .iter()
        .map(|&g| (0..s).map(|si| v.get(g, si)).collect())
        .collect();
    let desc = format!("cluster:{cfg:?}");
    let header = header_line(cfg.seed, &desc);
    reports::write_modules(
        out,
        &header,
        &gene_ids,
        &bundle.study_ids,
        &assignment.labels,
        &v_rows,
    )
}

fn cmd_baselines(
    input: &Path,
    method: &str,
    r: Option<usize>,
    fdr: f64,
    out: &Path,
) -> Result<()> {
    let p2 = io::read_tsv_matrix(input)?;
    let s = p2.n_studies();
    let r = r.unwrap_or_else(|| DecisionSpace::default_r(s));
    let mut clamped = 0usize;
    let rows: Vec<Vec<f64>> = (0..p2.n_genes())
        .map(|g| {
            p2.row(g)
                .iter()
                .map(|&v| {
                    let c = v.clamp(1e-300, 1.0 - 1e-16);
                    if c != v {
                        clamped += 1;
                    }
                    c
                })
                .collect()
        })
        .collect();
    if clamped > 0 {
        log::warn!("{clamped} p-value(s) clamped into the open unit interval");
    }

    let mut weights: Vec<Vec<u8>> = Vec::new();
    let p: Vec<f64> = match method {
        "fisher" => rows.iter().map(|r| baselines::fisher(r)).collect::<Result<_>>()?,
        "stouffer" => rows.iter().map(|r| baselines::stouffer(r)).collect::<Result<_>>()?,
        "maxp" => rows.iter().map(|r| baselines::maxp(r)).collect::<Result<_>>()?,
        "rop" => rows
            .iter()
            .map(|row| baselines::rop(row, r))
            .collect::<Result<_>>()?,
        "aw" => {
            let results: Vec<baselines::AwGene> = rows
                .iter()
                .map(|r| baselines::aw_fisher(r))
                .collect::<Result<_>>()?;
            weights = results.iter().map(|a| a.weights.clone()).collect();
            results.iter().map(|a| a.minp).collect()
        }
        other => {
            return Err(Error::Config(format!(
                "unknown method {other:?} (expected fisher, stouffer, maxp, rop, or aw)"
            )))
        }
    };
    let declared = baselines::bh_fdr(&p, fdr)?;
    log::info!(
        "{method}: declared {} of {} genes at FDR {fdr}",
        declared.iter().filter(|&&d| d).count(),
        p.len()
    );

    let desc = format!("baselines:{method}:{r}:{fdr}");
    let header = header_line(0, &desc);
    let mut cols: Vec<String> = vec!["gene_id".into(), "p".into(), "declared".into()];
    if method == "aw" {
        cols.extend(p2.study_ids().iter().map(|s| format!("w_{s}")));
    }
    let col_refs: Vec<&str> = cols.iter().map(|c| c.as_str()).collect();
    io::write_tsv(
        out,
        &header,
        &col_refs,
        (0..p.len()).map(|g| {
            let mut row = vec![
                p2.gene_ids()[g].clone(),
                p[g].to_string(),
                (declared[g] as u8).to_string(),
            ];
            if method == "aw" {
                row.extend(weights[g].iter().map(|w| w.to_string()));
            }
            row
        }),
    )
}

fn cmd_simulate(cfg: SimConfig, out: &Path) -> Result<()> {
    let (es, truth) = simgen::generate(&cfg)?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let desc = format!("simulate:{cfg:?}");
    let header = header_line(cfg.seed, &desc);

    for s in 0..es.n_studies() {
        let path = out.join(format!("study_{}.tsv", es.study_ids[s]));
        io::write_matrix_tsv(&path, &header, &es.study_matrix(s))?;
    }
    simgen::write_truth(&out.join("truth.tsv"), &header, &es.gene_ids, &truth)?;

    let (p2, sign) = simgen::t_test_pvalues(&es);
    io::write_matrix_tsv(&out.join("p2.tsv"), &header, &p2)?;
    io::write_matrix_tsv(&out.join("sign.tsv"), &header, &sign)?;
    let p1 = io::two_sided_to_one_sided(&p2, &sign)?;
    let z = io::p_to_z(&p1);
    io::write_matrix_tsv(&out.join("z.tsv"), &header, &z.data)?;
    log::info!(
        "wrote {} studies, truth, p2/sign, and z under {}",
        es.n_studies(),
        out.display()
    );
    Ok(())
}

fn cmd_evaluate(
    decisions: &Path,
    truth_path: &Path,
    space: &str,
    r: Option<usize>,
    out: &Path,
) -> Result<()> {
    let decisions_file = reports::read_decisions(decisions)?;
    let (truth_ids, truth) = simgen::read_truth(truth_path)?;
    if truth_ids != decisions_file.gene_ids {
        return Err(Error::Domain(
            "decisions and truth files list different genes".into(),
        ));
    }
    let space = DecisionSpace::parse(space, r, truth.n_studies)?;
    let alt = metrics::truth_label(&truth, space);
    let score: Vec<f64> = decisions_file.xi.iter().map(|&x| 1.0 - x).collect();
    let report = metrics::evaluate(&decisions_file.declared, &score, &alt, &space.label())?;
    log::info!(
        "{}: FDR {:.4}, FNR {:.4}, AUC {:.4}",
        space.label(),
        report.fdr,
        report.fnr,
        report.auc
    );

    #[derive(serde::Serialize)]
    struct EvalOutput<'a> {
        tool_version: &'a str,
        decisions: String,
        truth: String,
        #[serde(flatten)]
        report: &'a metrics::EvalReport,
    }
    let payload = EvalOutput {
        tool_version: metapat::VERSION,
        decisions: decisions.display().to_string(),
        truth: truth_path.display().to_string(),
        report: &report,
    };
    let json = serde_json::to_string_pretty(&payload)
        .map_err(|e| Error::Internal(format!("serialize report: {e}")))?;
    fs::write(out, json).map_err(|e| Error::io(out, e))
}

fn cmd_bench(cfg: BenchConfig, out: &Path) -> Result<()> {
    log::info!(
        "bench: scenario {}, G={}, S={:?}, sigma={:?}, {} seeds",
        cfg.scenario.label(),
        cfg.n_genes,
        cfg.s_values,
        cfg.sigma_values,
        cfg.n_seeds
    );
    let result = bench::run_grid(&cfg);
    let desc = format!("bench:{cfg:?}");
    let header = header_line(cfg.seed, &desc);
    bench::write_outputs(&result, out, &header)?;
    for (label, err) in &result.failures {
        log::error!("cell {label} failed: {err}");
    }
    if !result.failures.is_empty() {
        return Err(Error::Internal(format!(
            "{} bench cell(s) failed",
            result.failures.len()
        )));
    }
    log::info!("summary written to {}", out.join("summary.tsv").display());
    Ok(())
}
