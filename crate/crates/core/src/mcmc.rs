//! Gibbs-within-Metropolis sampler over the latent DE indicators.
//!
//! One sweep updates, in order:
//!
//! 1. `pi_g | Y ~ Beta(gamma + Y_g^+ + Y_g^-, S - Y_g^+ - Y_g^- + 1 - gamma)`
//! 2. `delta_g | Y ~ Beta(beta + Y_g^+, beta + Y_g^-)`
//! 3. the component labels `C_gs` by a collapsed CRP step per study:
//!    `Pr(C_gs = k | ...) proportional to h_k(Z_gs) * w`, where `w` is
//!    `(1 - pi_g)` for the null, `pi_g delta_g * n_k / (n_+ + alpha_+)`
//!    for an occupied positive table, `pi_g delta_g * alpha_+ / (n_+ +
//!    alpha_+)` for a fresh one, and mirrored for the negative side;
//!    `Y_gs = sgn(C_gs)` throughout.
//! 4. `gamma` by a random-walk Metropolis step on logit(gamma) against
//!    the product of Beta(gamma, 1-gamma) densities of the pi's with a
//!    uniform prior; `B(gamma, 1-gamma) = pi / sin(pi * gamma)`.
//!
//! All weight arithmetic is in log space with a log-sum-exp guard.
//! Randomness is split into one named stream per study plus one global
//! stream, so parallel study updates reproduce the sequential results
//! bit for bit.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta as BetaDist, Distribution, StandardNormal};
use rayon::prelude::*;

use crate::dp::{DpSide, Removal, Side, Target};
use crate::error::{Error, Result};
use crate::io::ZMatrix;
use crate::rng::{stream_rng, RngSnapshot};
use crate::stats::ln_norm_pdf;

/// Draws of pi and delta are kept strictly inside (0,1) so Beta densities
/// and the CRP weight logs stay finite.
pub const PROB_CLAMP: f64 = 1e-12;

/// |Z| threshold used by the default chain initialization.
pub const INIT_Z_THRESHOLD: f64 = 1.96;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitMode {
    /// Seed one component per (study, side) with all |Z| >= 1.96 genes.
    ZThreshold,
    /// Start every label at null.
    AllNull,
}

#[derive(Debug, Clone)]
pub struct McmcConfig {
    pub n_iter: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    /// Shape of the symmetric Beta prior on delta.
    pub beta: f64,
    pub sigma0_sq: f64,
    pub alpha_pos: f64,
    pub alpha_neg: f64,
    pub gamma_proposal_sd: f64,
    pub init: InitMode,
}

impl Default for McmcConfig {
    fn default() -> Self {
        McmcConfig {
            n_iter: 10_000,
            burn_in: 500,
            thin: 1,
            seed: 0,
            beta: 0.5,
            sigma0_sq: 10.0,
            alpha_pos: 1.0,
            alpha_neg: 1.0,
            gamma_proposal_sd: 0.1,
            init: InitMode::ZThreshold,
        }
    }
}

impl McmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.burn_in > self.n_iter {
            return Err(Error::Config(format!(
                "burn_in {} exceeds n_iter {}",
                self.burn_in, self.n_iter
            )));
        }
        if self.thin == 0 {
            return Err(Error::Config("thin must be >= 1".into()));
        }
        for (name, v) in [
            ("beta", self.beta),
            ("sigma0_sq", self.sigma0_sq),
            ("alpha_pos", self.alpha_pos),
            ("alpha_neg", self.alpha_neg),
            ("gamma_proposal_sd", self.gamma_proposal_sd),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Post-burn-in tallies of the retained samples: marginal sign counts per
/// (gene, study) and, per gene, the histogram of k = #{s : Y_gs != 0}.
/// The histogram carries the joint per-sample events every decision space
/// needs.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorAccumulator {
    n_genes: usize,
    n_studies: usize,
    count_pos: Vec<u64>,
    count_neg: Vec<u64>,
    count_null: Vec<u64>,
    k_hist: Vec<u64>,
    n_samples: u64,
}

impl PosteriorAccumulator {
    pub fn new(n_genes: usize, n_studies: usize) -> Self {
        PosteriorAccumulator {
            n_genes,
            n_studies,
            count_pos: vec![0; n_genes * n_studies],
            count_neg: vec![0; n_genes * n_studies],
            count_null: vec![0; n_genes * n_studies],
            k_hist: vec![0; n_genes * (n_studies + 1)],
            n_samples: 0,
        }
    }

    pub fn from_parts(
        n_genes: usize,
        n_studies: usize,
        count_pos: Vec<u64>,
        count_neg: Vec<u64>,
        count_null: Vec<u64>,
        k_hist: Vec<u64>,
        n_samples: u64,
    ) -> Result<Self> {
        let acc = PosteriorAccumulator {
            n_genes,
            n_studies,
            count_pos,
            count_neg,
            count_null,
            k_hist,
            n_samples,
        };
        if acc.count_pos.len() != n_genes * n_studies
            || acc.count_neg.len() != n_genes * n_studies
            || acc.count_null.len() != n_genes * n_studies
            || acc.k_hist.len() != n_genes * (n_studies + 1)
        {
            return Err(Error::Format("posterior tally dimensions disagree".into()));
        }
        for g in 0..n_genes {
            for s in 0..n_studies {
                let i = g * n_studies + s;
                if acc.count_pos[i] + acc.count_neg[i] + acc.count_null[i] != n_samples {
                    return Err(Error::Format(format!(
                        "tallies at gene {g}, study {s} do not sum to n_samples"
                    )));
                }
            }
            let h: u64 = acc.k_hist[g * (n_studies + 1)..(g + 1) * (n_studies + 1)]
                .iter()
                .sum();
            if h != n_samples {
                return Err(Error::Format(format!(
                    "k histogram at gene {g} does not sum to n_samples"
                )));
            }
        }
        Ok(acc)
    }

    pub fn n_genes(&self) -> usize {
        self.n_genes
    }

    pub fn n_studies(&self) -> usize {
        self.n_studies
    }

    pub fn n_samples(&self) -> u64 {
        self.n_samples
    }

    #[inline]
    fn idx(&self, g: usize, s: usize) -> usize {
        g * self.n_studies + s
    }

    pub fn counts(&self, g: usize, s: usize) -> (u64, u64, u64) {
        let i = self.idx(g, s);
        (self.count_pos[i], self.count_neg[i], self.count_null[i])
    }

    /// (up, down, null) posterior probabilities for one cell.
    pub fn u_triplet(&self, g: usize, s: usize) -> [f64; 3] {
        let n = self.n_samples as f64;
        let i = self.idx(g, s);
        [
            self.count_pos[i] as f64 / n,
            self.count_neg[i] as f64 / n,
            self.count_null[i] as f64 / n,
        ]
    }

    /// Number of retained samples in which gene `g` was DE in exactly `k`
    /// studies.
    pub fn k_count(&self, g: usize, k: usize) -> u64 {
        self.k_hist[g * (self.n_studies + 1) + k]
    }

    /// Number of retained samples in which gene `g` was DE in at least
    /// `r` studies.
    pub fn k_ge(&self, g: usize, r: usize) -> u64 {
        self.k_hist[g * (self.n_studies + 1) + r..(g + 1) * (self.n_studies + 1)]
            .iter()
            .sum()
    }

    pub fn raw_counts_pos(&self) -> &[u64] {
        &self.count_pos
    }

    pub fn raw_counts_neg(&self) -> &[u64] {
        &self.count_neg
    }

    pub fn raw_counts_null(&self) -> &[u64] {
        &self.count_null
    }

    pub fn raw_k_hist(&self) -> &[u64] {
        &self.k_hist
    }
}

/// Chain diagnostics recorded every iteration.
#[derive(Debug, Clone)]
pub struct Diagnostics {
    pub trace_gamma: Vec<f64>,
    pub trace_mean_pi: Vec<f64>,
    pub gamma_accepted: u64,
    pub gamma_proposed: u64,
}

impl Diagnostics {
    pub fn gamma_accept_rate(&self) -> f64 {
        if self.gamma_proposed == 0 {
            return 0.0;
        }
        self.gamma_accepted as f64 / self.gamma_proposed as f64
    }
}

struct StudyState {
    c: Vec<i64>,
    pos: DpSide,
    neg: DpSide,
    rng: ChaCha8Rng,
    scratch: Vec<f64>,
}

impl StudyState {
    /// Shift labels above a deleted component down by one.
    fn compact_labels(c: &mut [i64], deleted_label: i64) {
        if deleted_label > 0 {
            for v in c.iter_mut() {
                if *v > deleted_label {
                    *v -= 1;
                }
            }
        } else {
            for v in c.iter_mut() {
                if *v < deleted_label {
                    *v += 1;
                }
            }
        }
    }

    fn detach(&mut self, g: usize, z: f64) {
        let label = self.c[g];
        if label > 0 {
            if self.pos.remove((label - 1) as usize, z) == Removal::Deleted {
                Self::compact_labels(&mut self.c, label);
            }
        } else if label < 0 {
            if self.neg.remove((-label - 1) as usize, z) == Removal::Deleted {
                Self::compact_labels(&mut self.c, label);
            }
        }
        self.c[g] = 0;
    }

    fn rebuild_tables(&mut self, z: &[f64]) {
        let alpha_pos = self.pos.alpha();
        let alpha_neg = self.neg.alpha();
        let s0 = self.pos.sigma0_sq();
        self.pos = DpSide::new(Side::Positive, alpha_pos, s0);
        self.neg = DpSide::new(Side::Negative, alpha_neg, s0);
        let max_pos = self.c.iter().copied().max().unwrap_or(0).max(0) as usize;
        let max_neg = (-self.c.iter().copied().min().unwrap_or(0)).max(0) as usize;
        for k in 1..=max_pos {
            let mut first = true;
            for g in 0..self.c.len() {
                if self.c[g] == k as i64 {
                    let t = if first { Target::New } else { Target::Existing(k - 1) };
                    self.pos.assign(t, z[g]);
                    first = false;
                }
            }
            assert!(!first, "label gap on positive side at {k}");
        }
        for k in 1..=max_neg {
            let mut first = true;
            for g in 0..self.c.len() {
                if self.c[g] == -(k as i64) {
                    let t = if first { Target::New } else { Target::Existing(k - 1) };
                    self.neg.assign(t, z[g]);
                    first = false;
                }
            }
            assert!(!first, "label gap on negative side at {k}");
        }
    }
}

struct SweepCtx<'a> {
    ln_one_minus_pi: &'a [f64],
    ln_pi_pos: &'a [f64],
    ln_pi_neg: &'a [f64],
}

pub struct Chain {
    cfg: McmcConfig,
    n_genes: usize,
    n_studies: usize,
    z: Vec<Vec<f64>>,
    ln_null: Vec<Vec<f64>>,
    ln_new_pos: Vec<Vec<f64>>,
    ln_new_neg: Vec<Vec<f64>>,
    pi: Vec<f64>,
    delta: Vec<f64>,
    gamma: f64,
    studies: Vec<StudyState>,
    global_rng: ChaCha8Rng,
    iter_done: usize,
    gamma_accepted: u64,
    gamma_proposed: u64,
    trace_gamma: Vec<f64>,
    trace_mean_pi: Vec<f64>,
}

impl Chain {
    pub fn new(z: &ZMatrix, cfg: McmcConfig) -> Result<Chain> {
        cfg.validate()?;
        let n_genes = z.data.n_genes();
        let n_studies = z.data.n_studies();

        let z_cols: Vec<Vec<f64>> = (0..n_studies)
            .map(|s| (0..n_genes).map(|g| z.data.get(g, s)).collect())
            .collect();
        let ln_null: Vec<Vec<f64>> = z_cols
            .iter()
            .map(|col| col.iter().map(|&v| ln_norm_pdf(v)).collect())
            .collect();

        let mut studies = Vec::with_capacity(n_studies);
        for s in 0..n_studies {
            let mut st = StudyState {
                c: vec![0; n_genes],
                pos: DpSide::new(Side::Positive, cfg.alpha_pos, cfg.sigma0_sq),
                neg: DpSide::new(Side::Negative, cfg.alpha_neg, cfg.sigma0_sq),
                rng: stream_rng(cfg.seed, "mcmc-study", s as u64),
                scratch: Vec::new(),
            };
            if cfg.init == InitMode::ZThreshold {
                for g in 0..n_genes {
                    let zv = z_cols[s][g];
                    if zv >= INIT_Z_THRESHOLD {
                        let t = if st.pos.n_components() == 0 { Target::New } else { Target::Existing(0) };
                        st.pos.assign(t, zv);
                        st.c[g] = 1;
                    } else if zv <= -INIT_Z_THRESHOLD {
                        let t = if st.neg.n_components() == 0 { Target::New } else { Target::Existing(0) };
                        st.neg.assign(t, zv);
                        st.c[g] = -1;
                    }
                }
            }
            studies.push(st);
        }

        let ln_new_pos: Vec<Vec<f64>> = (0..n_studies)
            .map(|s| {
                z_cols[s]
                    .iter()
                    .map(|&v| studies[s].pos.ln_predictive_new(v))
                    .collect()
            })
            .collect();
        let ln_new_neg: Vec<Vec<f64>> = (0..n_studies)
            .map(|s| {
                z_cols[s]
                    .iter()
                    .map(|&v| studies[s].neg.ln_predictive_new(v))
                    .collect()
            })
            .collect();

        Ok(Chain {
            n_genes,
            n_studies,
            z: z_cols,
            ln_null,
            ln_new_pos,
            ln_new_neg,
            pi: vec![0.1; n_genes],
            delta: vec![0.5; n_genes],
            gamma: 0.1,
            studies,
            global_rng: stream_rng(cfg.seed, "mcmc-global", 0),
            iter_done: 0,
            gamma_accepted: 0,
            gamma_proposed: 0,
            trace_gamma: Vec::new(),
            trace_mean_pi: Vec::new(),
            cfg,
        })
    }

    pub fn config(&self) -> &McmcConfig {
        &self.cfg
    }

    pub fn n_genes(&self) -> usize {
        self.n_genes
    }

    pub fn n_studies(&self) -> usize {
        self.n_studies
    }

    pub fn iterations_done(&self) -> usize {
        self.iter_done
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn pi(&self) -> &[f64] {
        &self.pi
    }

    pub fn delta(&self) -> &[f64] {
        &self.delta
    }

    /// Signed component label for (gene, study); 0 is null.
    pub fn label(&self, study: usize, gene: usize) -> i64 {
        self.studies[study].c[gene]
    }

    /// Y_gs = sgn(C_gs).
    pub fn y(&self, study: usize, gene: usize) -> i8 {
        self.studies[study].c[gene].signum() as i8
    }

    pub fn dp_side(&self, study: usize, side: Side) -> &DpSide {
        match side {
            Side::Positive => &self.studies[study].pos,
            Side::Negative => &self.studies[study].neg,
        }
    }

    #[doc(hidden)]
    pub fn set_gamma(&mut self, gamma: f64) {
        self.gamma = gamma;
    }

    #[doc(hidden)]
    pub fn set_pi_all(&mut self, v: f64) {
        self.pi.iter_mut().for_each(|p| *p = v);
    }

    #[doc(hidden)]
    pub fn set_delta_all(&mut self, v: f64) {
        self.delta.iter_mut().for_each(|d| *d = v);
    }

    /// Replaces the labels of one study and rebuilds its tables; test
    /// scaffolding for driving single update steps from a known state.
    #[doc(hidden)]
    pub fn set_labels(&mut self, study: usize, labels: &[i64]) {
        assert_eq!(labels.len(), self.n_genes);
        let st = &mut self.studies[study];
        st.c.copy_from_slice(labels);
        st.rebuild_tables(&self.z[study]);
    }

    fn signed_counts(&self, g: usize) -> (usize, usize) {
        let mut yp = 0;
        let mut yn = 0;
        for st in &self.studies {
            match st.c[g].signum() {
                1 => yp += 1,
                -1 => yn += 1,
                _ => {}
            }
        }
        (yp, yn)
    }

    fn draw_beta(rng: &mut ChaCha8Rng, a: f64, b: f64) -> f64 {
        let d = BetaDist::new(a, b).expect("beta parameters positive");
        let x: f64 = d.sample(rng);
        x.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
    }

    pub fn update_pi(&mut self) {
        let s = self.n_studies as f64;
        for g in 0..self.n_genes {
            let (yp, yn) = self.signed_counts(g);
            let k = (yp + yn) as f64;
            let a = self.gamma + k;
            let b = s - k + 1.0 - self.gamma;
            self.pi[g] = Self::draw_beta(&mut self.global_rng, a, b);
        }
    }

    pub fn update_delta(&mut self) {
        for g in 0..self.n_genes {
            let (yp, yn) = self.signed_counts(g);
            let a = self.cfg.beta + yp as f64;
            let b = self.cfg.beta + yn as f64;
            self.delta[g] = Self::draw_beta(&mut self.global_rng, a, b);
        }
    }

    /// One CRP Gibbs sweep over all (gene, study) labels. Studies run in
    /// parallel on disjoint state and their own RNG streams.
    pub fn update_assignments(&mut self) -> Result<()> {
        let ln_one_minus_pi: Vec<f64> = self.pi.iter().map(|&p| (1.0 - p).ln()).collect();
        let ln_pi_pos: Vec<f64> = self
            .pi
            .iter()
            .zip(&self.delta)
            .map(|(&p, &d)| p.ln() + d.ln())
            .collect();
        let ln_pi_neg: Vec<f64> = self
            .pi
            .iter()
            .zip(&self.delta)
            .map(|(&p, &d)| p.ln() + (1.0 - d).ln())
            .collect();
        let ctx = SweepCtx {
            ln_one_minus_pi: &ln_one_minus_pi,
            ln_pi_pos: &ln_pi_pos,
            ln_pi_neg: &ln_pi_neg,
        };

        let z = &self.z;
        let ln_null = &self.ln_null;
        let ln_new_pos = &self.ln_new_pos;
        let ln_new_neg = &self.ln_new_neg;
        let n_genes = self.n_genes;
        self.studies
            .par_iter_mut()
            .enumerate()
            .try_for_each(|(s, st)| {
                sweep_study(
                    st,
                    n_genes,
                    &z[s],
                    &ln_null[s],
                    &ln_new_pos[s],
                    &ln_new_neg[s],
                    &ctx,
                )
            })
    }

    /// One Metropolis step on logit(gamma); returns whether the proposal
    /// was accepted.
    pub fn update_gamma(&mut self) -> bool {
        let sum_ln_pi: f64 = self.pi.iter().map(|&p| p.ln()).sum();
        let sum_ln_1mpi: f64 = self.pi.iter().map(|&p| (-p).ln_1p()).sum();
        let g_count = self.n_genes as f64;
        let pi_c = std::f64::consts::PI;
        let log_target = |gm: f64| -> f64 {
            if gm <= 0.0 || gm >= 1.0 {
                return f64::NEG_INFINITY;
            }
            (gm - 1.0) * sum_ln_pi - gm * sum_ln_1mpi + g_count * ((pi_c * gm).sin().ln() - pi_c.ln())
        };

        let theta = (self.gamma / (1.0 - self.gamma)).ln();
        let step: f64 = StandardNormal.sample(&mut self.global_rng);
        let theta_new = theta + self.cfg.gamma_proposal_sd * step;
        let gamma_new = 1.0 / (1.0 + (-theta_new).exp());

        // Jacobian of the logit transform: d gamma / d theta = gamma (1 - gamma)
        let log_ratio = log_target(gamma_new) + (gamma_new * (1.0 - gamma_new)).ln()
            - log_target(self.gamma)
            - (self.gamma * (1.0 - self.gamma)).ln();

        self.gamma_proposed += 1;
        let u: f64 = self.global_rng.random();
        let accept = u.ln() < log_ratio;
        if accept {
            self.gamma = gamma_new;
            self.gamma_accepted += 1;
        }
        accept
    }

    /// Full sweep: pi, delta, labels, gamma; appends to the traces.
    pub fn sweep(&mut self) -> Result<()> {
        self.update_pi();
        self.update_delta();
        self.update_assignments()?;
        self.update_gamma();
        self.iter_done += 1;
        self.trace_gamma.push(self.gamma);
        self.trace_mean_pi
            .push(self.pi.iter().sum::<f64>() / self.n_genes as f64);
        Ok(())
    }

    pub fn accumulate(&self, acc: &mut PosteriorAccumulator) {
        assert_eq!(acc.n_genes, self.n_genes);
        assert_eq!(acc.n_studies, self.n_studies);
        for g in 0..self.n_genes {
            let mut k = 0usize;
            for (s, st) in self.studies.iter().enumerate() {
                let i = g * self.n_studies + s;
                match st.c[g].signum() {
                    1 => {
                        acc.count_pos[i] += 1;
                        k += 1;
                    }
                    -1 => {
                        acc.count_neg[i] += 1;
                        k += 1;
                    }
                    _ => acc.count_null[i] += 1,
                }
            }
            acc.k_hist[g * (self.n_studies + 1) + k] += 1;
        }
        acc.n_samples += 1;
    }

    pub fn diagnostics(&self) -> Diagnostics {
        Diagnostics {
            trace_gamma: self.trace_gamma.clone(),
            trace_mean_pi: self.trace_mean_pi.clone(),
            gamma_accepted: self.gamma_accepted,
            gamma_proposed: self.gamma_proposed,
        }
    }

    /// Structural invariants: tables mirror label occupancy exactly and
    /// the global parameters are inside (0,1).
    pub fn audit(&self) -> std::result::Result<(), String> {
        for (s, st) in self.studies.iter().enumerate() {
            for (side, dp, sign) in [("pos", &st.pos, 1i64), ("neg", &st.neg, -1i64)] {
                let mut expected: Vec<(u32, f64)> = vec![(0, 0.0); dp.n_components()];
                for g in 0..self.n_genes {
                    let lab = st.c[g] * sign;
                    if lab > 0 {
                        let k = (lab - 1) as usize;
                        if k >= expected.len() {
                            return Err(format!("study {s} {side}: label {lab} out of range"));
                        }
                        expected[k].0 += 1;
                        expected[k].1 += self.z[s][g];
                    }
                }
                dp.audit(&expected)
                    .map_err(|e| format!("study {s} {side}: {e}"))?;
            }
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(format!("gamma {} outside (0,1)", self.gamma));
        }
        for &p in &self.pi {
            if !(p > 0.0 && p < 1.0) {
                return Err(format!("pi {p} outside (0,1)"));
            }
        }
        for &d in &self.delta {
            if !(d > 0.0 && d < 1.0) {
                return Err(format!("delta {d} outside (0,1)"));
            }
        }
        Ok(())
    }
}

fn sweep_study(
    st: &mut StudyState,
    n_genes: usize,
    z: &[f64],
    ln_null: &[f64],
    ln_new_pos: &[f64],
    ln_new_neg: &[f64],
    ctx: &SweepCtx,
) -> Result<()> {
    let alpha_pos = st.pos.alpha();
    let alpha_neg = st.neg.alpha();
    let ln_alpha_pos = alpha_pos.ln();
    let ln_alpha_neg = alpha_neg.ln();

    for g in 0..n_genes {
        let zv = z[g];
        st.detach(g, zv);

        let kp = st.pos.n_components();
        let kn = st.neg.n_components();
        let lw = &mut st.scratch;
        lw.clear();
        lw.reserve(kp + kn + 3);

        lw.push(ctx.ln_one_minus_pi[g] + ln_null[g]);

        let lpp = ctx.ln_pi_pos[g];
        let ldp = (st.pos.total() as f64 + alpha_pos).ln();
        for k in 0..kp {
            lw.push(
                lpp + (st.pos.component(k).count() as f64).ln() - ldp
                    + st.pos.ln_predictive_existing(k, zv),
            );
        }
        lw.push(lpp + ln_alpha_pos - ldp + ln_new_pos[g]);

        let lpn = ctx.ln_pi_neg[g];
        let ldn = (st.neg.total() as f64 + alpha_neg).ln();
        for k in 0..kn {
            lw.push(
                lpn + (st.neg.component(k).count() as f64).ln() - ldn
                    + st.neg.ln_predictive_existing(k, zv),
            );
        }
        lw.push(lpn + ln_alpha_neg - ldn + ln_new_neg[g]);

        let m = lw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !m.is_finite() {
            return Err(Error::Internal(format!(
                "all assignment weights vanished for gene {g}"
            )));
        }
        let total: f64 = lw.iter().map(|&w| (w - m).exp()).sum();
        let target = st.rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut choice = lw.len() - 1;
        for (i, &w) in lw.iter().enumerate() {
            acc += (w - m).exp();
            if acc >= target {
                choice = i;
                break;
            }
        }

        if choice == 0 {
            // stays null
        } else if choice <= kp {
            let k = st.pos.assign(Target::Existing(choice - 1), zv);
            st.c[g] = (k + 1) as i64;
        } else if choice == kp + 1 {
            let k = st.pos.assign(Target::New, zv);
            st.c[g] = (k + 1) as i64;
        } else if choice <= kp + 1 + kn {
            let k = st.neg.assign(Target::Existing(choice - kp - 2), zv);
            st.c[g] = -((k + 1) as i64);
        } else {
            let k = st.neg.assign(Target::New, zv);
            st.c[g] = -((k + 1) as i64);
        }
    }
    Ok(())
}

/// Runs a chain to completion and tallies post-burn-in thinned samples.
pub fn run(z: &ZMatrix, cfg: McmcConfig) -> Result<(PosteriorAccumulator, Diagnostics)> {
    let mut chain = Chain::new(z, cfg)?;
    let mut acc = PosteriorAccumulator::new(chain.n_genes(), chain.n_studies());
    let (n_iter, burn_in, thin) = (chain.cfg.n_iter, chain.cfg.burn_in, chain.cfg.thin);
    for it in 0..n_iter {
        chain.sweep()?;
        if it >= burn_in && (it - burn_in) % thin == 0 {
            chain.accumulate(&mut acc);
        }
    }
    Ok((acc, chain.diagnostics()))
}

// ---------------------------------------------------------------------------
// Binary chain checkpoints.

pub mod checkpoint {
    //! Self-describing binary snapshot of a chain plus its accumulator,
    //! enough to resume a long run bit-exactly.

    use super::*;
    use crate::rng::fnv1a;
    use std::fs;
    use std::path::Path;

    const MAGIC: &[u8; 8] = b"MPATCKP1";

    struct Writer {
        buf: Vec<u8>,
    }

    impl Writer {
        fn u32(&mut self, v: u32) {
            self.buf.extend_from_slice(&v.to_le_bytes());
        }
        fn u64(&mut self, v: u64) {
            self.buf.extend_from_slice(&v.to_le_bytes());
        }
        fn u128(&mut self, v: u128) {
            self.buf.extend_from_slice(&v.to_le_bytes());
        }
        fn f64(&mut self, v: f64) {
            self.buf.extend_from_slice(&v.to_le_bytes());
        }
        fn i64(&mut self, v: i64) {
            self.buf.extend_from_slice(&v.to_le_bytes());
        }
        fn f64s(&mut self, vs: &[f64]) {
            self.u64(vs.len() as u64);
            for &v in vs {
                self.f64(v);
            }
        }
        fn u64s(&mut self, vs: &[u64]) {
            self.u64(vs.len() as u64);
            for &v in vs {
                self.u64(v);
            }
        }
        fn rng(&mut self, snap: &RngSnapshot) {
            self.buf.extend_from_slice(&snap.seed);
            self.u64(snap.stream);
            self.u128(snap.word_pos);
        }
    }

    struct Reader<'a> {
        buf: &'a [u8],
        pos: usize,
    }

    impl<'a> Reader<'a> {
        fn take(&mut self, n: usize) -> Result<&'a [u8]> {
            if self.pos + n > self.buf.len() {
                return Err(Error::Format("truncated checkpoint".into()));
            }
            let s = &self.buf[self.pos..self.pos + n];
            self.pos += n;
            Ok(s)
        }
        fn u32(&mut self) -> Result<u32> {
            Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
        }
        fn u64(&mut self) -> Result<u64> {
            Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
        }
        fn u128(&mut self) -> Result<u128> {
            Ok(u128::from_le_bytes(self.take(16)?.try_into().unwrap()))
        }
        fn f64(&mut self) -> Result<f64> {
            Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
        }
        fn i64(&mut self) -> Result<i64> {
            Ok(i64::from_le_bytes(self.take(8)?.try_into().unwrap()))
        }
        fn f64s(&mut self) -> Result<Vec<f64>> {
            let n = self.u64()? as usize;
            (0..n).map(|_| self.f64()).collect()
        }
        fn u64s(&mut self) -> Result<Vec<u64>> {
            let n = self.u64()? as usize;
            (0..n).map(|_| self.u64()).collect()
        }
        fn rng(&mut self) -> Result<RngSnapshot> {
            let seed: [u8; 32] = self.take(32)?.try_into().unwrap();
            let stream = self.u64()?;
            let word_pos = self.u128()?;
            Ok(RngSnapshot {
                seed,
                stream,
                word_pos,
            })
        }
    }

    fn z_hash(z: &[Vec<f64>]) -> u64 {
        let mut bytes = Vec::with_capacity(z.iter().map(|c| c.len() * 8).sum());
        for col in z {
            for v in col {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        fnv1a(&bytes)
    }

    pub fn save(chain: &Chain, acc: &PosteriorAccumulator, path: &Path) -> Result<()> {
        let mut w = Writer { buf: Vec::new() };
        w.buf.extend_from_slice(MAGIC);
        w.u32(1);
        w.u64(chain.n_genes as u64);
        w.u64(chain.n_studies as u64);
        w.u64(chain.cfg.seed);
        w.u64(chain.iter_done as u64);
        w.u64(z_hash(&chain.z));
        w.f64(chain.gamma);
        w.f64s(&chain.pi);
        w.f64s(&chain.delta);
        for st in &chain.studies {
            for &c in &st.c {
                w.i64(c);
            }
            for dp in [&st.pos, &st.neg] {
                w.u64(dp.n_components() as u64);
                for k in 0..dp.n_components() {
                    w.u32(dp.component(k).count());
                    w.f64(dp.component(k).sum_z());
                }
            }
            w.rng(&RngSnapshot::capture(&st.rng));
        }
        w.rng(&RngSnapshot::capture(&chain.global_rng));
        w.u64s(&acc.count_pos);
        w.u64s(&acc.count_neg);
        w.u64s(&acc.count_null);
        w.u64s(&acc.k_hist);
        w.u64(acc.n_samples);
        w.f64s(&chain.trace_gamma);
        w.f64s(&chain.trace_mean_pi);
        w.u64(chain.gamma_accepted);
        w.u64(chain.gamma_proposed);
        fs::write(path, &w.buf).map_err(|e| Error::io(path, e))
    }

    /// Restores a chain from a checkpoint; `z` and `cfg` must match the
    /// original run.
    pub fn load(path: &Path, z: &ZMatrix, cfg: McmcConfig) -> Result<(Chain, PosteriorAccumulator)> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let mut r = Reader {
            buf: &bytes,
            pos: 0,
        };
        if r.take(8)? != MAGIC {
            return Err(Error::Format("not a chain checkpoint".into()));
        }
        if r.u32()? != 1 {
            return Err(Error::Format("unsupported checkpoint version".into()));
        }
        let mut chain = Chain::new(z, cfg)?;
        let n_genes = r.u64()? as usize;
        let n_studies = r.u64()? as usize;
        let seed = r.u64()?;
        if n_genes != chain.n_genes || n_studies != chain.n_studies {
            return Err(Error::Format(format!(
                "checkpoint is {n_genes}x{n_studies}, input is {}x{}",
                chain.n_genes, chain.n_studies
            )));
        }
        if seed != chain.cfg.seed {
            return Err(Error::Format(format!(
                "checkpoint seed {seed} does not match configured seed {}",
                chain.cfg.seed
            )));
        }
        chain.iter_done = r.u64()? as usize;
        if r.u64()? != z_hash(&chain.z) {
            return Err(Error::Format(
                "input matrix does not match the checkpointed run".into(),
            ));
        }
        chain.gamma = r.f64()?;
        chain.pi = r.f64s()?;
        chain.delta = r.f64s()?;
        for st in chain.studies.iter_mut() {
            for g in 0..n_genes {
                st.c[g] = r.i64()?;
            }
            for side in [Side::Positive, Side::Negative] {
                let n_comp = r.u64()? as usize;
                let (alpha, s0) = match side {
                    Side::Positive => (st.pos.alpha(), st.pos.sigma0_sq()),
                    Side::Negative => (st.neg.alpha(), st.neg.sigma0_sq()),
                };
                let mut dp = DpSide::new(side, alpha, s0);
                for _ in 0..n_comp {
                    let count = r.u32()?;
                    let sum = r.f64()?;
                    // Recreate the exact sufficient statistics: one seat at
                    // the stored sum, then count-1 seats at zero.
                    let k = dp.assign(Target::New, sum);
                    for _ in 1..count {
                        dp.assign(Target::Existing(k), 0.0);
                    }
                }
                match side {
                    Side::Positive => st.pos = dp,
                    Side::Negative => st.neg = dp,
                }
            }
            st.rng = r.rng()?.restore();
        }
        chain.global_rng = r.rng()?.restore();
        let count_pos = r.u64s()?;
        let count_neg = r.u64s()?;
        let count_null = r.u64s()?;
        let k_hist = r.u64s()?;
        let n_samples = r.u64()?;
        let acc = PosteriorAccumulator::from_parts(
            n_genes, n_studies, count_pos, count_neg, count_null, k_hist, n_samples,
        )?;
        chain.trace_gamma = r.f64s()?;
        chain.trace_mean_pi = r.f64s()?;
        chain.gamma_accepted = r.u64()?;
        chain.gamma_proposed = r.u64()?;
        Ok((chain, acc))
    }
}
