//! Independent numerical oracles for the test suites.
//!
//! Everything here recomputes quantities from definitions (quadrature,
//! enumeration) without touching the closed forms under test; keep it
//! that way. Not part of the public API proper.
#![doc(hidden)]

use crate::stats::{ln_norm_pdf, norm_pdf};

/// Composite Simpson rule with `n` panels (rounded up to even).
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = if n % 2 == 0 { n } else { n + 1 };
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + i as f64 * h);
    }
    acc * h / 3.0
}

/// Prior predictive under the one-sided truncated Gaussian base, by
/// direct integration of N(z; mu, 1) * 2 N(mu; 0, s0sq) over the half
/// line.
pub fn quad_predictive_new(positive: bool, s0sq: f64, z: f64) -> f64 {
    let s0 = s0sq.sqrt();
    let hi = (z.abs() + 15.0).max(15.0 * s0).max(40.0);
    let integrand = |mu: f64| {
        2.0 * norm_pdf(z - mu) * norm_pdf(mu / s0) / s0
    };
    if positive {
        simpson(integrand, 0.0, hi, 400_000)
    } else {
        simpson(integrand, -hi, 0.0, 400_000)
    }
}

/// Posterior predictive at a component with `n` members summing to `s`,
/// by integrating over the component mean. Works with the unnormalized
/// posterior exp(-mu^2/(2 s0sq) + s mu - n mu^2 / 2) on the half line,
/// which follows from the definition after dropping mu-free factors.
pub fn quad_predictive_existing(positive: bool, n: f64, s: f64, s0sq: f64, z: f64) -> f64 {
    let prec = n + 1.0 / s0sq;
    let mode = (s / prec).max(0.0);
    let mode = if positive { mode } else { (s / prec).min(0.0) };
    let h = |mu: f64| -mu * mu / (2.0 * s0sq) + s * mu - n * mu * mu / 2.0;
    let hmax = h(mode);
    let width = (1.0 / prec).sqrt();
    let hi = (mode.abs() + 20.0 * width).max(z.abs() + 15.0).max(40.0);
    let (lo, hi) = if positive { (0.0, hi) } else { (-hi, 0.0) };
    let num = simpson(
        |mu| norm_pdf(z - mu) * (h(mu) - hmax).exp(),
        lo,
        hi,
        400_000,
    );
    let den = simpson(|mu| (h(mu) - hmax).exp(), lo, hi, 400_000);
    num / den
}

/// Marginal likelihood of a set of observations sharing one component
/// mean under the truncated base: integral of prod N(z_i; mu, 1) *
/// 2 N(mu; 0, s0sq) over the half line. Log-space inner product keeps
/// many-observation products from underflowing.
pub fn quad_joint_marginal(positive: bool, zs: &[f64], s0sq: f64) -> f64 {
    let s0 = s0sq.sqrt();
    let zmax = zs.iter().fold(0.0_f64, |m, z| m.max(z.abs()));
    let hi = (zmax + 15.0).max(15.0 * s0).max(40.0);
    // peak of the log integrand, for scaling
    let n = zs.len() as f64;
    let s: f64 = zs.iter().sum();
    let mode = (s / (n + 1.0 / s0sq)).clamp(if positive { 0.0 } else { -hi }, if positive {
        hi
    } else {
        0.0
    });
    let lg = |mu: f64| {
        let mut l = ln_norm_pdf(mu / s0) - s0.ln() + std::f64::consts::LN_2;
        for &z in zs {
            l += ln_norm_pdf(z - mu);
        }
        l
    };
    let lmax = lg(mode);
    let (lo, hi) = if positive { (0.0, hi) } else { (-hi, 0.0) };
    let scaled = simpson(|mu| (lg(mu) - lmax).exp(), lo, hi, 200_000);
    scaled.ln() + lmax
}

/// All set partitions of {0..n-1} in restricted-growth-string form.
pub fn set_partitions(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = vec![0usize; n];
    fn rec(i: usize, max_used: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if i == cur.len() {
            out.push(cur.clone());
            return;
        }
        for b in 0..=max_used + 1 {
            cur[i] = b;
            rec(i + 1, max_used.max(b), cur, out);
        }
    }
    if n > 0 {
        rec(1, 0, &mut cur, &mut out);
    }
    out
}

/// Partitions of {0..n-1} into exactly k nonempty blocks.
pub fn partitions_into_k(n: usize, k: usize) -> Vec<Vec<usize>> {
    set_partitions(n)
        .into_iter()
        .filter(|p| p.iter().copied().max().map(|m| m + 1) == Some(k))
        .collect()
}

/// Kolmogorov-Smirnov distance of a sample from Uniform(0,1).
pub fn ks_uniform(samples: &[f64]) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len() as f64;
    let mut d = 0.0_f64;
    for (i, x) in xs.iter().enumerate() {
        d = d.max(((i + 1) as f64 / n - x).abs());
        d = d.max((x - i as f64 / n).abs());
    }
    d
}

/// Upper tail of the Student-t distribution by quadrature (tan substitution
/// maps the infinite tail to a finite interval).
pub fn quad_student_t_sf(t0: f64, df: f64) -> f64 {
    use statrs::function::gamma::ln_gamma;
    let ln_c = ln_gamma((df + 1.0) / 2.0)
        - ln_gamma(df / 2.0)
        - 0.5 * (df * std::f64::consts::PI).ln();
    let pdf = |x: f64| (ln_c - 0.5 * (df + 1.0) * (1.0 + x * x / df).ln()).exp();
    simpson(
        |theta| {
            let c = theta.cos();
            pdf(t0 + theta.tan()) / (c * c)
        },
        0.0,
        std::f64::consts::FRAC_PI_2 - 1e-9,
        80_000,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_integrates_gaussian() {
        let v = simpson(norm_pdf, -10.0, 10.0, 10_000);
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn partition_counts_are_bell_and_stirling() {
        assert_eq!(set_partitions(4).len(), 15);
        assert_eq!(partitions_into_k(4, 2).len(), 7);
        assert_eq!(partitions_into_k(8, 3).len(), 966);
    }

    #[test]
    fn t_tail_quadrature_matches_closed_form_df1() {
        // df = 1 is Cauchy: sf(t) = 1/2 - atan(t)/pi
        let want = 0.5 - (1.5f64).atan() / std::f64::consts::PI;
        assert!((quad_student_t_sf(1.5, 1.0) - want).abs() < 1e-9);
    }
}
