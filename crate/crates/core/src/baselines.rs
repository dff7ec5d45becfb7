//! Classical p-value combination statistics and Benjamini-Hochberg.
//!
//! All combiners take the per-gene vector of (two-sided) study p-values
//! and return a combined p-value under the independence null:
//! Fisher (-2 sum log p vs chi-square), Stouffer (mean probit), maxP
//! (Beta(S,1) null), rOP (r-th order statistic vs Beta(r, S-r+1)), and
//! the adaptively weighted Fisher search over binary study subsets.

use crate::error::{Error, Result};
use crate::stats;

fn validate_open_unit(p: &[f64]) -> Result<()> {
    if p.is_empty() {
        return Err(Error::Domain("empty p-value vector".into()));
    }
    for &v in p {
        if !(v > 0.0 && v < 1.0) {
            return Err(Error::Domain(format!("p-value {v} outside (0,1)")));
        }
    }
    Ok(())
}

/// Two-sided p-values from one-sided ones: `p2 = 2 min(p1, 1 - p1)`.
pub fn one_sided_to_two_sided(p1: &[f64]) -> Vec<f64> {
    p1.iter().map(|&p| 2.0 * p.min(1.0 - p)).collect()
}

/// Fisher's method: upper chi-square tail of -2 sum log p with 2S df.
pub fn fisher(p: &[f64]) -> Result<f64> {
    validate_open_unit(p)?;
    let t: f64 = -2.0 * p.iter().map(|&v| v.ln()).sum::<f64>();
    Ok(stats::chi2_sf(t, 2.0 * p.len() as f64))
}

/// Stouffer's method: normal upper tail of the mean probit.
pub fn stouffer(p: &[f64]) -> Result<f64> {
    validate_open_unit(p)?;
    // Phi^-1(1 - p) = -Phi^-1(p); the negated form keeps full precision
    // for small p.
    let zbar: f64 =
        p.iter().map(|&v| -stats::norm_quantile(v)).sum::<f64>() / (p.len() as f64).sqrt();
    Ok(stats::norm_sf(zbar))
}

/// maxP with its Beta(S, 1) null: combined p = (max p)^S.
pub fn maxp(p: &[f64]) -> Result<f64> {
    validate_open_unit(p)?;
    let m = p.iter().cloned().fold(0.0, f64::max);
    Ok(m.powi(p.len() as i32))
}

/// r-th ordered p-value with its Beta(r, S - r + 1) null.
pub fn rop(p: &[f64], r: usize) -> Result<f64> {
    validate_open_unit(p)?;
    let s = p.len();
    if r < 1 || r > s {
        return Err(Error::Config(format!("r must be in 1..={s}, got {r}")));
    }
    let mut sorted = p.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(stats::beta_cdf(sorted[r - 1], r as f64, (s - r + 1) as f64))
}

/// Adaptively weighted Fisher result for one gene: the binary weight
/// vector minimizing the chi-square tail probability of the weighted
/// statistic, the statistic itself, and the minimized (uncalibrated)
/// p-value.
#[derive(Debug, Clone, PartialEq)]
pub struct AwGene {
    pub weights: Vec<u8>,
    pub stat: f64,
    pub minp: f64,
}

/// Exhaustive search over the 2^S - 1 nonzero weight vectors. Ties break
/// toward fewer selected studies, then lexicographically smaller weight
/// vectors.
pub fn aw_fisher(p: &[f64]) -> Result<AwGene> {
    validate_open_unit(p)?;
    let s = p.len();
    if s > 20 {
        return Err(Error::Config(format!(
            "adaptive weighting enumerates 2^S - 1 subsets; S = {s} > 20 unsupported"
        )));
    }
    let neg2logp: Vec<f64> = p.iter().map(|&v| -2.0 * v.ln()).collect();
    let mut best: Option<(f64, u32, Vec<u8>, f64)> = None;
    for mask in 1u32..(1 << s) {
        let mut t = 0.0;
        for (i, &c) in neg2logp.iter().enumerate() {
            if mask & (1 << i) != 0 {
                t += c;
            }
        }
        let ones = mask.count_ones();
        let tail = stats::chi2_sf(t, 2.0 * ones as f64);
        let weights: Vec<u8> = (0..s).map(|i| ((mask >> i) & 1) as u8).collect();
        let better = match &best {
            None => true,
            Some((bp, bones, bw, _)) => {
                tail < *bp || (tail == *bp && (ones < *bones || (ones == *bones && weights < *bw)))
            }
        };
        if better {
            best = Some((tail, ones, weights, t));
        }
    }
    let (minp, _, weights, stat) = best.unwrap();
    Ok(AwGene {
        weights,
        stat,
        minp,
    })
}

/// Benjamini-Hochberg step-up rule at the given level.
pub fn bh_fdr(p: &[f64], level: f64) -> Result<Vec<bool>> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Config(format!("FDR level {level} outside (0,1)")));
    }
    for &v in p {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Domain(format!("p-value {v} outside [0,1]")));
        }
    }
    let n = p.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| p[a].partial_cmp(&p[b]).unwrap());
    let mut threshold = -1.0;
    for (rank, &i) in order.iter().enumerate() {
        if p[i] <= level * (rank + 1) as f64 / n as f64 {
            threshold = p[i];
        }
    }
    Ok(p.iter().map(|&v| v <= threshold).collect())
}
