//! Meta-pattern biomarker modules: cosine dissimilarity over posterior
//! sign probabilities, PAM k-medoids, and resampling-based tight
//! clustering that leaves unstable genes in a scattered group (label 0).

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::stream_rng;

/// Symmetric dissimilarity matrix with zero diagonal; cosine
/// dissimilarity of probability vectors lands in [0, 1].
///
/// Cosine dissimilarity is not a metric: it satisfies symmetry and
/// identity but can violate the triangle inequality, which PAM and the
/// co-membership machinery never rely on.
#[derive(Debug, Clone)]
pub struct DissimilarityMatrix {
    n: usize,
    d: Vec<f64>,
}

impl DissimilarityMatrix {
    pub fn new(n: usize) -> Self {
        DissimilarityMatrix { n, d: vec![0.0; n * n] }
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::new(n);
        for i in 0..n {
            for j in (i + 1)..n {
                m.set(i, j, f(i, j));
            }
        }
        m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.d[i * self.n + j] = v;
        self.d[j * self.n + i] = v;
    }

    /// Restriction to a subset of items, in the given order.
    pub fn restrict(&self, idx: &[usize]) -> DissimilarityMatrix {
        let mut m = DissimilarityMatrix::new(idx.len());
        for (a, &i) in idx.iter().enumerate() {
            for (b, &j) in idx.iter().enumerate().skip(a + 1) {
                m.set(a, b, self.get(i, j));
            }
        }
        m
    }
}

/// Mean over studies of the per-study cosine dissimilarity between two
/// genes' posterior probability triplets.
pub fn cosine_dissim(u_i: &[[f64; 3]], u_j: &[[f64; 3]]) -> Result<f64> {
    if u_i.len() != u_j.len() || u_i.is_empty() {
        return Err(Error::Domain("posterior vectors differ in study count".into()));
    }
    let mut acc = 0.0;
    for (a, b) in u_i.iter().zip(u_j) {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        if na == 0.0 || nb == 0.0 {
            return Err(Error::Domain("zero-norm probability triplet".into()));
        }
        acc += 1.0 - (dot / (na * nb)).clamp(0.0, 1.0);
    }
    Ok(acc / u_i.len() as f64)
}

/// Pairwise dissimilarities from per-gene posterior triplets.
pub fn dissimilarity_from_posteriors(u: &[Vec<[f64; 3]>]) -> Result<DissimilarityMatrix> {
    let n = u.len();
    let mut m = DissimilarityMatrix::new(n);
    for i in 0..n {
        for j in (i + 1)..n {
            m.set(i, j, cosine_dissim(&u[i], &u[j])?);
        }
    }
    Ok(m)
}

/// PAM k-medoids: deterministic greedy BUILD, then SWAP to a local
/// optimum. Returns cluster labels in 0..k (the index of the assigned
/// medoid in BUILD order).
pub fn k_medoids(d: &DissimilarityMatrix, k: usize) -> Result<Vec<usize>> {
    let n = d.n();
    if k == 0 || k > n {
        return Err(Error::Config(format!("k = {k} must be in 1..={n}")));
    }

    // BUILD: first medoid minimizes total dissimilarity, the rest
    // maximize marginal gain; ties to the lowest index.
    let mut medoids: Vec<usize> = Vec::with_capacity(k);
    let mut nearest = vec![f64::INFINITY; n];
    {
        let mut best = (f64::INFINITY, 0usize);
        for i in 0..n {
            let total: f64 = (0..n).map(|j| d.get(i, j)).sum();
            if total < best.0 {
                best = (total, i);
            }
        }
        medoids.push(best.1);
        for j in 0..n {
            nearest[j] = d.get(best.1, j);
        }
    }
    while medoids.len() < k {
        let mut best = (f64::NEG_INFINITY, usize::MAX);
        for c in 0..n {
            if medoids.contains(&c) {
                continue;
            }
            let gain: f64 = (0..n).map(|j| (nearest[j] - d.get(c, j)).max(0.0)).sum();
            if gain > best.0 {
                best = (gain, c);
            }
        }
        let c = best.1;
        medoids.push(c);
        for j in 0..n {
            nearest[j] = nearest[j].min(d.get(c, j));
        }
    }

    // SWAP until no improving exchange remains.
    let mut d1 = vec![0.0; n]; // nearest medoid distance
    let mut d2 = vec![0.0; n]; // second nearest
    let mut a1 = vec![0usize; n]; // index into medoids of nearest
    let recompute = |medoids: &[usize], d1: &mut [f64], d2: &mut [f64], a1: &mut [usize]| {
        for j in 0..n {
            let mut b1 = (f64::INFINITY, usize::MAX);
            let mut b2 = f64::INFINITY;
            for (mi, &m) in medoids.iter().enumerate() {
                let dist = d.get(j, m);
                if dist < b1.0 {
                    b2 = b1.0;
                    b1 = (dist, mi);
                } else if dist < b2 {
                    b2 = dist;
                }
            }
            d1[j] = b1.0;
            a1[j] = b1.1;
            d2[j] = b2;
        }
    };
    recompute(&medoids, &mut d1, &mut d2, &mut a1);

    loop {
        let mut best: (f64, usize, usize) = (-1e-12, usize::MAX, usize::MAX);
        for mi in 0..k {
            for h in 0..n {
                if medoids.contains(&h) {
                    continue;
                }
                let mut delta = 0.0;
                for j in 0..n {
                    let dh = d.get(j, h);
                    let new = if a1[j] == mi { d2[j].min(dh) } else { d1[j].min(dh) };
                    delta += new - d1[j];
                }
                if delta < best.0 {
                    best = (delta, mi, h);
                }
            }
        }
        if best.1 == usize::MAX {
            break;
        }
        medoids[best.1] = best.2;
        recompute(&medoids, &mut d1, &mut d2, &mut a1);
    }

    Ok(a1)
}

pub fn k_medoids_cost(d: &DissimilarityMatrix, labels: &[usize], k: usize) -> f64 {
    // cost of the induced partition: per cluster, best medoid
    let mut cost = 0.0;
    for c in 0..k {
        let members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        if members.is_empty() {
            continue;
        }
        let best = members
            .iter()
            .map(|&m| members.iter().map(|&j| d.get(m, j)).sum::<f64>())
            .fold(f64::INFINITY, f64::min);
        cost += best;
    }
    cost
}

#[derive(Debug, Clone)]
pub struct TightClustConfig {
    /// Number of modules to extract.
    pub k_target: usize,
    /// Initial K for the k-medoids runs; defaults to k_target + 5.
    pub k_start: Option<usize>,
    /// Resampling rounds per K.
    pub n_resample: usize,
    pub subsample_frac: f64,
    /// Pairwise co-membership proportion required inside a module.
    pub tightness_alpha: f64,
    /// Candidate list size kept per K.
    pub stability_top: usize,
    /// Smallest admissible module.
    pub min_module_size: usize,
    pub seed: u64,
}

impl Default for TightClustConfig {
    fn default() -> Self {
        TightClustConfig {
            k_target: 6,
            k_start: None,
            n_resample: 50,
            subsample_frac: 0.7,
            tightness_alpha: 0.8,
            stability_top: 3,
            min_module_size: 3,
            seed: 0,
        }
    }
}

impl TightClustConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_target == 0 {
            return Err(Error::Config("k_target must be >= 1".into()));
        }
        if !(self.subsample_frac > 0.0 && self.subsample_frac <= 1.0) {
            return Err(Error::Config("subsample_frac must be in (0, 1]".into()));
        }
        if !(self.tightness_alpha > 0.5 && self.tightness_alpha <= 1.0) {
            return Err(Error::Config("tightness_alpha must be in (0.5, 1]".into()));
        }
        if self.n_resample == 0 || self.stability_top == 0 {
            return Err(Error::Config("n_resample and stability_top must be >= 1".into()));
        }
        Ok(())
    }

    pub fn k_start(&self) -> usize {
        self.k_start.unwrap_or(self.k_target + 5)
    }
}

/// Module labels over the clustered genes; 0 marks the scattered group.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModuleAssignment {
    pub labels: Vec<usize>,
    pub n_modules: usize,
}

/// Co-membership proportions over resampled k-medoids runs: fraction of
/// rounds in which two genes were both sampled and co-clustered,
/// normalized by their co-presence count.
fn co_membership(
    d: &DissimilarityMatrix,
    active: &[usize],
    k: usize,
    cfg: &TightClustConfig,
    round: usize,
) -> Result<Vec<f64>> {
    let na = active.len();
    let m = ((cfg.subsample_frac * na as f64).floor() as usize).min(na);
    if m < k {
        return Ok(vec![0.0; na * na]);
    }
    let sub = d.restrict(active);

    let rounds: Vec<(Vec<usize>, Vec<usize>)> = (0..cfg.n_resample)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream_rng(cfg.seed, "tightclust-sub", (round * 100_000 + b) as u64);
            let mut idx: Vec<usize> = (0..na).collect();
            idx.shuffle(&mut rng);
            idx.truncate(m);
            idx.sort_unstable();
            let labels = k_medoids(&sub.restrict(&idx), k).expect("k <= subsample size");
            (idx, labels)
        })
        .collect();

    let mut together = vec![0u32; na * na];
    let mut present = vec![0u32; na * na];
    for (idx, labels) in &rounds {
        for a in 0..idx.len() {
            for b in (a + 1)..idx.len() {
                let (i, j) = (idx[a], idx[b]);
                present[i * na + j] += 1;
                if labels[a] == labels[b] {
                    together[i * na + j] += 1;
                }
            }
        }
    }
    let mut mprop = vec![0.0; na * na];
    for i in 0..na {
        for j in (i + 1)..na {
            let p = present[i * na + j];
            let v = if p == 0 { 0.0 } else { together[i * na + j] as f64 / p as f64 };
            mprop[i * na + j] = v;
            mprop[j * na + i] = v;
        }
    }
    Ok(mprop)
}

/// Greedy maximal groups with pairwise co-membership >= alpha, grown from
/// every seed gene; deduplicated and ranked by (size, mean co-membership).
fn tight_candidates(mprop: &[f64], na: usize, cfg: &TightClustConfig) -> Vec<(Vec<usize>, f64)> {
    let at = |i: usize, j: usize| mprop[i * na + j];
    let mut seen: Vec<Vec<usize>> = Vec::new();
    let mut out: Vec<(Vec<usize>, f64)> = Vec::new();
    for seed in 0..na {
        let mut set = vec![seed];
        loop {
            let mut best: Option<(f64, f64, usize)> = None; // (min, mean, idx)
            for j in 0..na {
                if set.contains(&j) {
                    continue;
                }
                let mut min_m = f64::INFINITY;
                let mut sum = 0.0;
                for &i in &set {
                    let v = at(i, j);
                    min_m = min_m.min(v);
                    sum += v;
                }
                if min_m < cfg.tightness_alpha {
                    continue;
                }
                let mean = sum / set.len() as f64;
                let cand = (min_m, mean, j);
                best = match best {
                    None => Some(cand),
                    Some(b) if (cand.0, cand.1) > (b.0, b.1) => Some(cand),
                    b => b,
                };
            }
            match best {
                Some((_, _, j)) => set.push(j),
                None => break,
            }
        }
        if set.len() < cfg.min_module_size {
            continue;
        }
        set.sort_unstable();
        if seen.contains(&set) {
            continue;
        }
        let mut sum = 0.0;
        let mut cnt = 0usize;
        for a in 0..set.len() {
            for b in (a + 1)..set.len() {
                sum += at(set[a], set[b]);
                cnt += 1;
            }
        }
        let mean = if cnt == 0 { 1.0 } else { sum / cnt as f64 };
        seen.push(set.clone());
        out.push((set, mean));
    }
    out.sort_by(|a, b| {
        b.0.len()
            .cmp(&a.0.len())
            .then(b.1.partial_cmp(&a.1).unwrap())
            .then(a.0.cmp(&b.0))
    });
    out.truncate(cfg.stability_top);
    out
}

/// Resampling-based tight clustering. For K from k_start downward, the
/// most stable candidate set is extracted as the next module and K drops
/// by one; extraction stops after k_target modules or when no candidate
/// of the minimum size remains. Leftover genes keep label 0.
pub fn tight_cluster(d: &DissimilarityMatrix, cfg: &TightClustConfig) -> Result<ModuleAssignment> {
    cfg.validate()?;
    let n = d.n();
    let mut k = cfg.k_start();
    if n < k {
        return Err(Error::Config(format!(
            "{n} genes is fewer than the starting K {k}"
        )));
    }
    let mut labels = vec![0usize; n];
    let mut active: Vec<usize> = (0..n).collect();
    let mut module = 0usize;
    let mut round = 0usize;
    while module < cfg.k_target && k >= 1 && active.len() >= k.max(cfg.min_module_size) {
        let mprop = co_membership(d, &active, k, cfg, round)?;
        round += 1;
        let candidates = tight_candidates(&mprop, active.len(), cfg);
        let Some((set, _)) = candidates.into_iter().next() else {
            break;
        };
        module += 1;
        let chosen: Vec<usize> = set.iter().map(|&a| active[a]).collect();
        for &g in &chosen {
            labels[g] = module;
        }
        active.retain(|g| !chosen.contains(g));
        k -= 1;
    }
    Ok(ModuleAssignment {
        labels,
        n_modules: module,
    })
}
