use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::types::{MoveLabel, MoveSet, NUM_MOVES};

/// Calibration bin count.
pub const DEFAULT_BINS: usize = 15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassMetrics {
    pub label: MoveLabel,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub support: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassificationReport {
    pub per_class: Vec<ClassMetrics>,
    pub macro_f1: f64,
    pub micro_f1: f64,
    pub weighted_f1: f64,
    pub hamming: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Multi-label scores over all twelve classes. Classes absent from both
/// predictions and truth score F1 = 0.
pub fn compute_classification(pred: &[MoveSet], truth: &[MoveSet]) -> Result<ClassificationReport> {
    compute_classification_over(pred, truth, &MoveLabel::ALL)
}

/// Same as [`compute_classification`], restricted to `classes`.
pub fn compute_classification_over(
    pred: &[MoveSet],
    truth: &[MoveSet],
    classes: &[MoveLabel],
) -> Result<ClassificationReport> {
    if pred.is_empty() || classes.is_empty() {
        return Err(Error::Invalid("classification metrics need at least one example and class".into()));
    }
    if pred.len() != truth.len() {
        return Err(Error::Invalid(format!(
            "{} predictions for {} targets",
            pred.len(),
            truth.len()
        )));
    }
    let mut per_class = Vec::with_capacity(classes.len());
    let (mut tp_all, mut fp_all, mut fn_all) = (0, 0, 0);
    for &m in classes {
        let (mut tp, mut fp, mut fn_) = (0, 0, 0);
        for (p, t) in pred.iter().zip(truth) {
            match (p.contains(m), t.contains(m)) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                _ => {}
            }
        }
        tp_all += tp;
        fp_all += fp;
        fn_all += fn_;
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        per_class.push(ClassMetrics {
            label: m,
            tp,
            fp,
            fn_,
            support: tp + fn_,
            precision,
            recall,
            f1: f1(precision, recall),
        });
    }
    let macro_f1 = per_class.iter().map(|c| c.f1).sum::<f64>() / classes.len() as f64;
    let micro_f1 = ratio(2 * tp_all, 2 * tp_all + fp_all + fn_all);
    let support: usize = per_class.iter().map(|c| c.support).sum();
    let weighted_f1 = if support == 0 {
        0.0
    } else {
        per_class.iter().map(|c| c.f1 * c.support as f64).sum::<f64>() / support as f64
    };
    let hamming = ratio(fp_all + fn_all, pred.len() * classes.len());
    Ok(ClassificationReport {
        per_class,
        macro_f1,
        micro_f1,
        weighted_f1,
        hamming,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BinStat {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    pub confidence: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationReport {
    pub ece: f64,
    pub mce: f64,
    pub brier: f64,
    pub bins: Vec<BinStat>,
}

/// Equal-width reliability bins over every (example, class) probability.
/// A bin's confidence is its mean probability and its accuracy the fraction
/// of positive targets.
pub fn compute_calibration(probs: &[f64], targets: &[bool], bins: usize) -> Result<CalibrationReport> {
    if bins == 0 {
        return Err(Error::Invalid("at least one calibration bin is required".into()));
    }
    if probs.len() != targets.len() {
        return Err(Error::Invalid("probabilities and targets differ in length".into()));
    }
    if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::Invalid(format!("probability {p} outside [0, 1]")));
    }
    let mut sum_p = vec![0.0; bins];
    let mut sum_y = vec![0usize; bins];
    let mut count = vec![0usize; bins];
    let mut brier = 0.0;
    for (&p, &y) in probs.iter().zip(targets) {
        let b = ((p * bins as f64).floor() as usize).min(bins - 1);
        sum_p[b] += p;
        sum_y[b] += y as usize;
        count[b] += 1;
        let t = if y { 1.0 } else { 0.0 };
        brier += (p - t) * (p - t);
    }
    let n = probs.len();
    let mut ece = 0.0;
    let mut mce: f64 = 0.0;
    let mut stats = Vec::with_capacity(bins);
    for b in 0..bins {
        let (confidence, accuracy) = if count[b] > 0 {
            (sum_p[b] / count[b] as f64, sum_y[b] as f64 / count[b] as f64)
        } else {
            (0.0, 0.0)
        };
        if count[b] > 0 {
            let gap = (accuracy - confidence).abs();
            ece += count[b] as f64 / n as f64 * gap;
            mce = mce.max(gap);
        }
        stats.push(BinStat {
            lower: b as f64 / bins as f64,
            upper: (b + 1) as f64 / bins as f64,
            count: count[b],
            confidence,
            accuracy,
        });
    }
    Ok(CalibrationReport {
        ece,
        mce,
        brier: if n == 0 { 0.0 } else { brier / n as f64 },
        bins: stats,
    })
}

/// Flattens per-example move probabilities and label sets for [`compute_calibration`].
pub fn flatten_moves(probs: &[[f64; NUM_MOVES]], truth: &[MoveSet]) -> (Vec<f64>, Vec<bool>) {
    let p = probs.iter().flat_map(|r| r.iter().copied()).collect();
    let t = truth.iter().flat_map(|s| s.to_indicator()).collect();
    (p, t)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub classification: ClassificationReport,
    pub calibration: CalibrationReport,
}

impl MetricsReport {
    pub fn to_text(&self) -> String {
        let c = &self.classification;
        let k = &self.calibration;
        let mut s = String::new();
        let _ = writeln!(s, "macro_f1     {:.4}", c.macro_f1);
        let _ = writeln!(s, "micro_f1     {:.4}", c.micro_f1);
        let _ = writeln!(s, "weighted_f1  {:.4}", c.weighted_f1);
        let _ = writeln!(s, "hamming      {:.4}", c.hamming);
        let _ = writeln!(s, "ece          {:.4}", k.ece);
        let _ = writeln!(s, "mce          {:.4}", k.mce);
        let _ = writeln!(s, "brier        {:.4}", k.brier);
        let _ = writeln!(s);
        let _ = writeln!(s, "{:<20} {:>9} {:>9} {:>9} {:>8}", "class", "precision", "recall", "f1", "support");
        for m in &c.per_class {
            let _ = writeln!(
                s,
                "{:<20} {:>9.4} {:>9.4} {:>9.4} {:>8}",
                m.label.name(),
                m.precision,
                m.recall,
                m.f1,
                m.support
            );
        }
        s
    }

    /// `metric,value` rows followed by `class,precision,recall,f1,support` rows.
    pub fn to_csv(&self) -> String {
        let c = &self.classification;
        let k = &self.calibration;
        let mut s = String::from("metric,value\n");
        for (name, v) in [
            ("macro_f1", c.macro_f1),
            ("micro_f1", c.micro_f1),
            ("weighted_f1", c.weighted_f1),
            ("hamming", c.hamming),
            ("ece", k.ece),
            ("mce", k.mce),
            ("brier", k.brier),
        ] {
            let _ = writeln!(s, "{name},{v}");
        }
        s.push_str("\nclass,precision,recall,f1,support\n");
        for m in &c.per_class {
            let _ = writeln!(s, "{},{},{},{},{}", m.label.name(), m.precision, m.recall, m.f1, m.support);
        }
        s
    }

    pub fn reliability_csv(&self) -> String {
        let mut s = String::from("lower,upper,count,confidence,accuracy\n");
        for b in &self.calibration.bins {
            let _ = writeln!(s, "{},{},{},{},{}", b.lower, b.upper, b.count, b.confidence, b.accuracy);
        }
        s
    }
}

/// Counts of move labels active together; the diagonal holds per-class activations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CooccurrenceMatrix(pub [[u64; NUM_MOVES]; NUM_MOVES]);

impl CooccurrenceMatrix {
    pub fn get(&self, a: MoveLabel, b: MoveLabel) -> u64 {
        self.0[a.index()][b.index()]
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("move");
        for m in MoveLabel::ALL {
            s.push(',');
            s.push_str(m.name());
        }
        s.push('\n');
        for a in MoveLabel::ALL {
            s.push_str(a.name());
            for b in MoveLabel::ALL {
                let _ = write!(s, ",{}", self.get(a, b));
            }
            s.push('\n');
        }
        s
    }
}

pub fn cooccurrence(sets: &[MoveSet]) -> CooccurrenceMatrix {
    let mut m = [[0u64; NUM_MOVES]; NUM_MOVES];
    for set in sets {
        let labels: Vec<usize> = set.iter().map(|l| l.index()).collect();
        for &i in &labels {
            for &j in &labels {
                m[i][j] += 1;
            }
        }
    }
    CooccurrenceMatrix(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(ms: &[MoveLabel]) -> MoveSet {
        ms.iter().copied().collect()
    }

    #[test]
    fn identical_sets_score_perfectly() {
        let truth: Vec<MoveSet> = MoveLabel::ALL.iter().map(|m| set(&[*m])).collect();
        let r = compute_classification(&truth, &truth).unwrap();
        assert_eq!((r.macro_f1, r.micro_f1, r.weighted_f1, r.hamming), (1.0, 1.0, 1.0, 0.0));
    }

    #[test]
    fn single_class_counts() {
        let pred = [set(&[MoveLabel::Lunge]), set(&[MoveLabel::Lunge])];
        let truth = [set(&[MoveLabel::Lunge]), MoveSet::default()];
        let r = compute_classification(&pred, &truth).unwrap();
        let l = r.per_class[MoveLabel::Lunge.index()];
        assert_eq!((l.precision, l.recall), (0.5, 1.0));
        assert!((l.f1 - 2.0 / 3.0).abs() < 1e-15);
        // absent classes count as zero in the macro average
        assert!((r.macro_f1 - (2.0 / 3.0) / 12.0).abs() < 1e-15);
    }

    #[test]
    fn weighted_equals_macro_for_equal_support() {
        let truth: Vec<MoveSet> = MoveLabel::ALL.iter().map(|m| set(&[*m])).collect();
        let mut pred = truth.clone();
        pred[0] = set(&[MoveLabel::Hit]);
        pred[3] = MoveSet::default();
        let r = compute_classification(&pred, &truth).unwrap();
        assert!((r.weighted_f1 - r.macro_f1).abs() < 1e-15);
    }

    #[test]
    fn empty_input_rejected() {
        assert!(compute_classification(&[], &[]).is_err());
    }

    #[test]
    fn calibration_examples() {
        let r = compute_calibration(&[1.0, 0.0, 1.0, 0.0], &[true, false, true, false], 15).unwrap();
        assert_eq!((r.ece, r.mce, r.brier), (0.0, 0.0, 0.0));
        let r = compute_calibration(&[0.9, 0.9, 0.6, 0.6], &[true, true, true, false], 15).unwrap();
        assert!((r.ece - 0.1).abs() < 1e-12);
        assert!(r.ece <= r.mce);
    }

    #[test]
    fn cooccurrence_pair() {
        let m = cooccurrence(&[set(&[MoveLabel::StepForward, MoveLabel::Beat])]);
        assert_eq!(m.get(MoveLabel::StepForward, MoveLabel::Beat), 1);
        assert_eq!(m.get(MoveLabel::Beat, MoveLabel::StepForward), 1);
        assert_eq!(m.get(MoveLabel::Beat, MoveLabel::Beat), 1);
        assert_eq!(m.get(MoveLabel::StepForward, MoveLabel::StepForward), 1);
        let singles = cooccurrence(&[set(&[MoveLabel::Hit]), set(&[MoveLabel::Wait])]);
        for a in MoveLabel::ALL {
            for b in MoveLabel::ALL {
                if a != b {
                    assert_eq!(singles.get(a, b), 0);
                }
            }
        }
    }
}
