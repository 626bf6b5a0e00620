//! Classifier metrics over external prediction logs, the epoch-selection
//! rule, and paired Wilcoxon signed-rank comparisons across runs.

mod report;
mod wilcoxon;

use thiserror::Error;

pub use report::{
    compare_report, load_run_set, parse_comparison_spec, ComparisonSpec, EpochRecord, PairedComparison, Report,
    ReportRow, RunId, RunLog, RunSet, RUN_LOG_HEADER,
};
pub use wilcoxon::{
    wilcoxon_exact_p, wilcoxon_normal_p, wilcoxon_signed_rank, wilcoxon_with_cutoff, PValueMethod, WilcoxonResult,
    EXACT_CUTOFF,
};

pub const DISCARD_EPOCHS: usize = 5;
pub const TOP_EPOCHS: usize = 5;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("both classes must be present (positives {positives}, negatives {negatives})")]
    SingleClass { positives: usize, negatives: usize },
    #[error("scores and labels differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} epochs, got {got}")]
    TooFewEpochs { needed: usize, got: usize },
    #[error("empty input")]
    Empty,
    #[error("{0}")]
    Alignment(String),
    /// `line` 0 marks a whole-file problem.
    #[error("{path}: {}{message}", line_prefix(*line))]
    Parse { path: String, line: usize, message: String },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

fn line_prefix(line: usize) -> String {
    if line == 0 {
        String::new()
    } else {
        format!("line {line}: ")
    }
}

/// Mann–Whitney AUC: `[#(pos > neg) + ½·#(pos = neg)] / (n_pos·n_neg)`.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64, StatsError> {
    if scores.len() != labels.len() {
        return Err(StatsError::LengthMismatch(scores.len(), labels.len()));
    }
    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(StatsError::SingleClass { positives, negatives });
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Walk tie groups in ascending score order; counts stay integral (or half) so the sum is exact.
    let mut wins = 0.0;
    let mut neg_below = 0usize;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let (mut pos, mut neg) = (0usize, 0usize);
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if labels[order[j]] {
                pos += 1;
            } else {
                neg += 1;
            }
            j += 1;
        }
        wins += (pos * neg_below) as f64 + 0.5 * (pos * neg) as f64;
        neg_below += neg;
        i = j;
    }
    Ok(wins / (positives as f64 * negatives as f64))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Set when nothing was predicted positive; precision is then reported as 0.
    pub no_predicted_positives: bool,
    /// Set when there are no true positives in the labels; recall is then reported as 0.
    pub no_actual_positives: bool,
}

/// Thresholded metrics; a score `>= threshold` predicts positive.
pub fn confusion_metrics(scores: &[f64], labels: &[bool], threshold: f64) -> Result<Confusion, StatsError> {
    if scores.len() != labels.len() {
        return Err(StatsError::LengthMismatch(scores.len(), labels.len()));
    }
    if scores.is_empty() {
        return Err(StatsError::Empty);
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for (&s, &l) in scores.iter().zip(labels) {
        match (s >= threshold, l) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    Ok(Confusion {
        tp,
        fp,
        fn_,
        tn,
        accuracy: ratio(tp + tn, scores.len()),
        precision: ratio(tp, tp + fp),
        recall: ratio(tp, tp + fn_),
        f1: ratio(2 * tp, 2 * tp + fp + fn_),
        no_predicted_positives: tp + fp == 0,
        no_actual_positives: tp + fn_ == 0,
    })
}

/// Drops the first five epochs and averages the five best of the rest.
pub fn epoch_select(per_epoch_auc: &[f64]) -> Result<f64, StatsError> {
    let needed = DISCARD_EPOCHS + TOP_EPOCHS;
    if per_epoch_auc.len() < needed {
        return Err(StatsError::TooFewEpochs { needed, got: per_epoch_auc.len() });
    }
    let mut rest = per_epoch_auc[DISCARD_EPOCHS..].to_vec();
    rest.sort_by(|a, b| b.total_cmp(a));
    Ok(rest[..TOP_EPOCHS].iter().sum::<f64>() / TOP_EPOCHS as f64)
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auc_basic_cases() {
        assert_eq!(roc_auc(&[0.9, 0.8, 0.2, 0.1], &[true, true, false, false]).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0.4; 6], &[true, false, true, false, false, true]).unwrap(), 0.5);
        assert_eq!(roc_auc(&[0.1, 0.9], &[true, false]).unwrap(), 0.0);
        assert!(matches!(roc_auc(&[0.1, 0.2], &[true, true]), Err(StatsError::SingleClass { .. })));
        assert!(matches!(roc_auc(&[0.1], &[true, false]), Err(StatsError::LengthMismatch(1, 2))));
    }

    #[test]
    fn auc_matches_pair_counting_with_ties() {
        let rng = crate::rng::CounterRng::new(4, 0);
        for t in 0..200u64 {
            let n = 2 + (rng.below(t * 100, 30) as usize);
            let scores: Vec<f64> = (0..n).map(|i| rng.below(t * 100 + 1 + i as u64, 6) as f64 / 5.0).collect();
            let mut labels: Vec<bool> = (0..n).map(|i| rng.below(t * 100 + 50 + i as u64, 2) == 1).collect();
            labels[0] = true;
            labels[1] = false;
            assert_eq!(roc_auc(&scores, &labels).unwrap(), cacforge_oracles::auc_pair_count(&scores, &labels));
        }
    }

    #[test]
    fn confusion_hand_examples() {
        // TP=2, FP=1, FN=1, TN=6
        let scores = [0.9, 0.8, 0.7, 0.2, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1];
        let labels = [true, true, false, true, false, false, false, false, false, false];
        let c = confusion_metrics(&scores, &labels, 0.5).unwrap();
        assert_eq!((c.tp, c.fp, c.fn_, c.tn), (2, 1, 1, 6));
        assert_eq!((c.precision, c.recall, c.f1, c.accuracy), (2.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0, 0.8));

        // TP=2, FP=1, FN=2, TN=5: precision 2/3, recall 1/2, F1 4/7
        let labels = [true, true, false, true, true, false, false, false, false, false];
        let c = confusion_metrics(&scores, &labels, 0.5).unwrap();
        assert_eq!((c.tp, c.fp, c.fn_, c.tn), (2, 1, 2, 5));
        assert_eq!((c.precision, c.recall, c.f1, c.accuracy), (2.0 / 3.0, 0.5, 4.0 / 7.0, 0.7));
    }

    #[test]
    fn confusion_degenerate_cases() {
        let c = confusion_metrics(&[0.9, 0.1], &[true, false], 0.5).unwrap();
        assert_eq!((c.accuracy, c.precision, c.recall, c.f1), (1.0, 1.0, 1.0, 1.0));
        let c = confusion_metrics(&[0.1, 0.2], &[true, false], 0.5).unwrap();
        assert!(c.no_predicted_positives);
        assert_eq!((c.precision, c.recall, c.f1), (0.0, 0.0, 0.0));
        assert_eq!(confusion_metrics(&[], &[], 0.5), Err(StatsError::Empty));
    }

    #[test]
    fn epoch_selection_examples() {
        let aucs = [0.5, 0.5, 0.5, 0.5, 0.5, 0.70, 0.71, 0.72, 0.73, 0.74, 0.75, 0.60];
        assert!((epoch_select(&aucs).unwrap() - 0.730).abs() < 1e-12);
        let ten = [0.9, 0.9, 0.9, 0.9, 0.9, 0.1, 0.2, 0.3, 0.4, 0.5];
        assert!((epoch_select(&ten).unwrap() - 0.3).abs() < 1e-12);
        assert_eq!(epoch_select(&ten[..9]), Err(StatsError::TooFewEpochs { needed: 10, got: 9 }));
    }
}
