//! Detection metrics over scored pairs: rank AUC, interpolated EER, F1.
//!
//! A pair is accepted when its score is at or above the threshold.

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::io_util::write_atomic;

mod ablation;

pub use ablation::{ablation_grid, grid_csv, GridRow, Sweep, SweepAxis, GRID_HEADER};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("{scores} scores but {labels} labels")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("label {0} is not 0 or 1")]
    BadLabel(u8),
    #[error("non-finite score {0}")]
    BadScore(f64),
    #[error("both positive and negative examples are required")]
    DegenerateLabels,
    #[error("empty score set")]
    Empty,
    #[error("scores file line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("bad sweep {0:?}: expected d=A..B or k=A..B (or a comma list)")]
    BadSweep(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Parallel scores and 0/1 labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredSet {
    scores: Vec<f64>,
    labels: Vec<u8>,
}

impl ScoredSet {
    pub fn new(scores: Vec<f64>, labels: Vec<u8>) -> Result<Self, MetricsError> {
        if scores.len() != labels.len() {
            return Err(MetricsError::LengthMismatch {
                scores: scores.len(),
                labels: labels.len(),
            });
        }
        if let Some(&l) = labels.iter().find(|&&l| l > 1) {
            return Err(MetricsError::BadLabel(l));
        }
        if let Some(&s) = scores.iter().find(|s| !s.is_finite()) {
            return Err(MetricsError::BadScore(s));
        }
        Ok(Self { scores, labels })
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    fn class_counts(&self) -> (usize, usize) {
        let pos = self.labels.iter().filter(|&&l| l == 1).count();
        (pos, self.labels.len() - pos)
    }

    fn require_both(&self) -> Result<(usize, usize), MetricsError> {
        match self.class_counts() {
            (0, _) | (_, 0) => Err(MetricsError::DegenerateLabels),
            counts => Ok(counts),
        }
    }

    /// The same scores with every label flipped.
    pub fn flipped(&self) -> Self {
        Self {
            scores: self.scores.clone(),
            labels: self.labels.iter().map(|l| 1 - l).collect(),
        }
    }

    /// One `score,label` line per pair, no header.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for (s, l) in self.scores.iter().zip(&self.labels) {
            writeln!(out, "{s},{l}").expect("writing to a String");
        }
        out
    }

    /// Accepts an optional `score,label` header line.
    pub fn from_csv(text: &str) -> Result<Self, MetricsError> {
        let (mut scores, mut labels) = (Vec::new(), Vec::new());
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            if line.trim().is_empty() || (i == 0 && line.trim() == "score,label") {
                continue;
            }
            let err = |msg: &str| MetricsError::Parse {
                line: line_no,
                msg: msg.to_string(),
            };
            let (s, l) = line.split_once(',').ok_or_else(|| err("expected score,label"))?;
            scores.push(s.trim().parse::<f64>().map_err(|_| err("bad score"))?);
            labels.push(l.trim().parse::<u8>().map_err(|_| err("bad label"))?);
        }
        Self::new(scores, labels)
    }

    pub fn save_csv(&self, path: &Path) -> Result<(), MetricsError> {
        Ok(write_atomic(path, self.to_csv().as_bytes())?)
    }
}

/// One ROC operating point: accept everything scoring `≥ threshold`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    pub threshold: f64,
}

/// Operating points from the strictest threshold (`+∞`, nothing accepted)
/// to the loosest (the minimum score, everything accepted).
#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
}

impl RocCurve {
    pub fn new(set: &ScoredSet) -> Result<Self, MetricsError> {
        let (pos, neg) = set.require_both()?;
        let mut order: Vec<usize> = (0..set.len()).collect();
        order.sort_by(|&a, &b| set.scores[b].total_cmp(&set.scores[a]));
        let mut points = vec![RocPoint {
            fpr: 0.0,
            tpr: 0.0,
            threshold: f64::INFINITY,
        }];
        let (mut tp, mut fp) = (0usize, 0usize);
        let mut i = 0;
        while i < order.len() {
            let threshold = set.scores[order[i]];
            while i < order.len() && set.scores[order[i]] == threshold {
                if set.labels[order[i]] == 1 {
                    tp += 1;
                } else {
                    fp += 1;
                }
                i += 1;
            }
            points.push(RocPoint {
                fpr: fp as f64 / neg as f64,
                tpr: tp as f64 / pos as f64,
                threshold,
            });
        }
        Ok(Self { points })
    }
}

/// Mann–Whitney AUC: the probability that a random positive outscores a
/// random negative, ties counting one half.
pub fn auc(set: &ScoredSet) -> Result<f64, MetricsError> {
    let (pos, neg) = set.require_both()?;
    let mut order: Vec<usize> = (0..set.len()).collect();
    order.sort_by(|&a, &b| set.scores[a].total_cmp(&set.scores[b]));
    // Sum of mid-ranks (1-based) of the positives.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && set.scores[order[j]] == set.scores[order[i]] {
            j += 1;
        }
        let mid_rank = (i + 1 + j) as f64 / 2.0;
        rank_sum += mid_rank * order[i..j].iter().filter(|&&k| set.labels[k] == 1).count() as f64;
        i = j;
    }
    let (p, n) = (pos as f64, neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Equal error rate. False-accept rate (FPR) and false-reject rate (1 − TPR)
/// are evaluated at every distinct threshold; where they cross between two
/// adjacent operating points the crossing is linearly interpolated.
pub fn eer(set: &ScoredSet) -> Result<f64, MetricsError> {
    let roc = RocCurve::new(set)?;
    let rates: Vec<(f64, f64)> = roc.points.iter().map(|p| (p.fpr, 1.0 - p.tpr)).collect();
    // gap = FAR − FRR runs from −1 (nothing accepted) up to +1.
    for w in rates.windows(2) {
        let ((far0, frr0), (far1, frr1)) = (w[0], w[1]);
        let (g0, g1) = (far0 - frr0, far1 - frr1);
        if g0 == 0.0 {
            return Ok(far0);
        }
        if g0 < 0.0 && g1 >= 0.0 {
            let t = g0 / (g0 - g1);
            return Ok(far0 + t * (far1 - far0));
        }
    }
    unreachable!("the last operating point accepts everything, so FAR − FRR ends at 1");
}

/// F1 of the decision `score ≥ threshold`; 0 when precision + recall is 0.
pub fn f1_at(set: &ScoredSet, threshold: f64) -> Result<f64, MetricsError> {
    if set.is_empty() {
        return Err(MetricsError::Empty);
    }
    let (mut tp, mut fp, mut fn_) = (0.0, 0.0, 0.0);
    for (&s, &l) in set.scores.iter().zip(&set.labels) {
        match (s >= threshold, l == 1) {
            (true, true) => tp += 1.0,
            (true, false) => fp += 1.0,
            (false, true) => fn_ += 1.0,
            (false, false) => {}
        }
    }
    let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
    let recall = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
    if precision + recall == 0.0 {
        Ok(0.0)
    } else {
        Ok(2.0 * precision * recall / (precision + recall))
    }
}

/// AUC, EER and F1 at 0.5 together.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub auc: f64,
    pub eer: f64,
    pub f1: f64,
}

pub fn summarize(set: &ScoredSet) -> Result<Summary, MetricsError> {
    Ok(Summary {
        auc: auc(set)?,
        eer: eer(set)?,
        f1: f1_at(set, 0.5)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(pos: &[f64], neg: &[f64]) -> ScoredSet {
        let scores = pos.iter().chain(neg).copied().collect();
        let labels = pos.iter().map(|_| 1).chain(neg.iter().map(|_| 0)).collect();
        ScoredSet::new(scores, labels).unwrap()
    }

    #[test]
    fn auc_reference_cases() {
        assert_eq!(auc(&set(&[0.9, 0.8], &[0.1, 0.2])).unwrap(), 1.0);
        assert_eq!(auc(&set(&[0.5, 0.5], &[0.5, 0.5, 0.5])).unwrap(), 0.5);
        assert_eq!(auc(&set(&[0.8], &[0.2, 0.9])).unwrap(), 0.5);
        assert!(matches!(auc(&set(&[0.1], &[])), Err(MetricsError::DegenerateLabels)));
    }

    #[test]
    fn eer_reference_cases() {
        assert_eq!(eer(&set(&[0.9, 0.8], &[0.1, 0.2])).unwrap(), 0.0);
        assert_eq!(eer(&set(&[0.6, 0.2], &[0.8, 0.4])).unwrap(), 0.5);
        // The tie at 0.5 moves (FAR, FRR) from (0, 1/2) to (1/2, 0) in one
        // step; the crossing sits midway.
        assert!((eer(&set(&[0.9, 0.5], &[0.5, 0.1])).unwrap() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn f1_reference_cases() {
        assert_eq!(f1_at(&set(&[0.9, 0.7], &[0.1]), 0.5).unwrap(), 1.0);
        assert_eq!(f1_at(&set(&[0.2, 0.3], &[0.1]), 0.5).unwrap(), 0.0);
        // TP = 2, FP = 1, FN = 1.
        let f = f1_at(&set(&[0.9, 0.8, 0.1], &[0.7, 0.2]), 0.5).unwrap();
        assert!((f - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn roc_endpoints_and_monotone() {
        let s = set(&[0.9, 0.4, 0.4, 0.3], &[0.5, 0.4, 0.1]);
        let roc = RocCurve::new(&s).unwrap();
        let (first, last) = (roc.points[0], *roc.points.last().unwrap());
        assert_eq!((first.fpr, first.tpr), (0.0, 0.0));
        assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
        for w in roc.points.windows(2) {
            assert!(w[1].fpr >= w[0].fpr && w[1].tpr >= w[0].tpr);
        }
    }

    #[test]
    fn csv_round_trip() {
        let s = set(&[0.25, 1e-9], &[0.75]);
        assert_eq!(ScoredSet::from_csv(&s.to_csv()).unwrap(), s);
        assert!(matches!(ScoredSet::from_csv("score,label\n0.5;1\n"), Err(MetricsError::Parse { line: 2, .. })));
    }

    fn arb_set() -> impl Strategy<Value = ScoredSet> {
        (2usize..60)
            .prop_flat_map(|n| {
                (
                    proptest::collection::vec(0u8..8, n).prop_map(|v| v.into_iter().map(f64::from).collect::<Vec<_>>()),
                    proptest::collection::vec(0u8..2, n),
                )
            })
            .prop_filter("both classes", |(_, l)| l.contains(&0) && l.contains(&1))
            .prop_map(|(s, l)| ScoredSet::new(s, l).unwrap())
    }

    proptest! {
        #[test]
        fn flipped_labels_complement(s in arb_set()) {
            let f = s.flipped();
            prop_assert!((auc(&s).unwrap() + auc(&f).unwrap() - 1.0).abs() < 1e-12);
            prop_assert!((eer(&s).unwrap() + eer(&f).unwrap() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn invariant_under_increasing_transform(s in arb_set()) {
            let t = ScoredSet::new(s.scores().iter().map(|x| (x * 0.7).exp() - 3.0).collect(), s.labels().to_vec()).unwrap();
            prop_assert_eq!(auc(&s).unwrap(), auc(&t).unwrap());
            prop_assert_eq!(eer(&s).unwrap(), eer(&t).unwrap());
            let e = eer(&s).unwrap();
            prop_assert!((0.0..=1.0).contains(&e));
        }
    }
}
