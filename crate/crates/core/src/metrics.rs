//! Realized FDR, FNR, and AUC of a declared gene set against simulation
//! ground truth.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::inference::DecisionSpace;
use crate::simgen::SimTruth;

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub space: String,
    /// FP / #declared (0 when nothing is declared).
    pub fdr: f64,
    /// FN / G.
    pub fnr: f64,
    /// Rank-sum AUC of the ranking score against the truth labels,
    /// mid-ranks for ties.
    pub auc: f64,
    pub n_declared: usize,
    pub n_true_alt: usize,
    pub n_genes: usize,
}

/// True alternative labels for a decision space: a gene is alternative
/// iff it is DE in at least `min_alt_studies` studies.
pub fn truth_label(truth: &SimTruth, space: DecisionSpace) -> Vec<bool> {
    let r = space.min_alt_studies(truth.n_studies);
    truth
        .de_studies
        .iter()
        .map(|v| v.len() >= r)
        .collect()
}

pub fn evaluate(
    declared: &[bool],
    score: &[f64],
    truth_alt: &[bool],
    space: &str,
) -> Result<EvalReport> {
    let g = declared.len();
    if score.len() != g || truth_alt.len() != g || g == 0 {
        return Err(Error::Domain("evaluation inputs differ in length".into()));
    }
    let n_declared = declared.iter().filter(|&&d| d).count();
    let fp = (0..g).filter(|&i| declared[i] && !truth_alt[i]).count();
    let fnc = (0..g).filter(|&i| !declared[i] && truth_alt[i]).count();
    let n_true_alt = truth_alt.iter().filter(|&&t| t).count();
    Ok(EvalReport {
        space: space.to_string(),
        fdr: fp as f64 / n_declared.max(1) as f64,
        fnr: fnc as f64 / g as f64,
        auc: auc_midrank(score, truth_alt),
        n_declared,
        n_true_alt,
        n_genes: g,
    })
}

/// Rank-sum AUC with mid-rank tie handling; 0.5 for degenerate truth.
pub fn auc_midrank(score: &[f64], truth_alt: &[bool]) -> f64 {
    let n = score.len();
    let n_pos = truth_alt.iter().filter(|&&t| t).count();
    let n_neg = n - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return 0.5;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| score[a].partial_cmp(&score[b]).unwrap());
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && score[order[j + 1]] == score[order[i]] {
            j += 1;
        }
        let midrank = (i + j + 2) as f64 / 2.0; // 1-based
        for &idx in &order[i..=j] {
            if truth_alt[idx] {
                rank_sum_pos += midrank;
            }
        }
        i = j + 1;
    }
    (rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0) / (n_pos as f64 * n_neg as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn toy_truth() -> SimTruth {
        // gene 0: DE in studies {0,1}; gene 1: non-DE; gene 2: DE everywhere
        SimTruth {
            n_studies: 3,
            is_de: vec![true, false, true],
            de_studies: vec![vec![0, 1], vec![], vec![0, 1, 2]],
            direction: vec![0, 0, 1],
            theta_g: vec![1.0, 0.0, 2.0],
            theta_gs: vec![1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 2.0, 2.0, 2.0],
            pattern: None,
        }
    }

    #[test]
    fn truth_label_thresholds() {
        let t = toy_truth();
        assert_eq!(truth_label(&t, DecisionSpace::B), vec![true, false, true]);
        assert_eq!(
            truth_label(&t, DecisionSpace::RBar(2)),
            vec![true, false, true]
        );
        assert_eq!(
            truth_label(&t, DecisionSpace::ABar),
            vec![false, false, true]
        );
    }

    #[test]
    fn evaluate_perfect_and_empty() {
        let truth = vec![true, true, false, false];
        let score = vec![0.9, 0.8, 0.2, 0.1];
        let rep = evaluate(&[true, true, false, false], &score, &truth, "B").unwrap();
        assert_eq!(rep.fdr, 0.0);
        assert_eq!(rep.fnr, 0.0);
        assert_eq!(rep.auc, 1.0);

        let rep = evaluate(&[false; 4], &score, &truth, "B").unwrap();
        assert_eq!(rep.fdr, 0.0);
        assert_eq!(rep.fnr, 0.5);
        assert_eq!(rep.n_declared, 0);
        assert_eq!(rep.n_true_alt, 2);
    }

    #[test]
    fn fdr_plus_precision_is_one() {
        let truth = vec![true, false, true, false, true];
        let declared = vec![true, true, false, false, true];
        let score = vec![0.9, 0.7, 0.6, 0.2, 0.8];
        let rep = evaluate(&declared, &score, &truth, "B").unwrap();
        let tp = 2.0;
        let precision = tp / 3.0;
        assert!((rep.fdr + precision - 1.0).abs() < 1e-15);
    }

    fn brute_force_auc(score: &[f64], truth: &[bool]) -> f64 {
        let mut num = 0.0;
        let mut cnt = 0.0;
        for i in 0..score.len() {
            for j in 0..score.len() {
                if truth[i] && !truth[j] {
                    cnt += 1.0;
                    if score[i] > score[j] {
                        num += 1.0;
                    } else if score[i] == score[j] {
                        num += 0.5;
                    }
                }
            }
        }
        num / cnt
    }

    #[test]
    fn auc_matches_pairwise_oracle_with_ties() {
        let mut rng = crate::rng::stream_rng(4, "auc", 0);
        for _ in 0..30 {
            let n = rng.random_range(5..200usize);
            let score: Vec<f64> = (0..n)
                .map(|_| (rng.random_range(0..20u32)) as f64 / 20.0)
                .collect();
            let truth: Vec<bool> = (0..n).map(|_| rng.random::<bool>()).collect();
            if truth.iter().all(|&t| t) || truth.iter().all(|&t| !t) {
                continue;
            }
            let a = auc_midrank(&score, &truth);
            let b = brute_force_auc(&score, &truth);
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn auc_invariant_under_monotone_transform() {
        let mut rng = crate::rng::stream_rng(5, "auc-mono", 0);
        let n = 300;
        let score: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let truth: Vec<bool> = score
            .iter()
            .map(|&s| rng.random::<f64>() < s)
            .collect();
        let a = auc_midrank(&score, &truth);
        let transformed: Vec<f64> = score.iter().map(|&s| (5.0 * s).exp() - 3.0).collect();
        let b = auc_midrank(&transformed, &truth);
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn random_scores_near_half() {
        let mut rng = crate::rng::stream_rng(6, "auc-null", 0);
        let n = 1000;
        let score: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let truth: Vec<bool> = (0..n).map(|i| i % 2 == 0).collect();
        let a = auc_midrank(&score, &truth);
        assert!((a - 0.5).abs() < 0.05, "AUC {a}");
    }
}
