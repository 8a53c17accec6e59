use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{MoveLabel, NUM_MOVES};

/// Per-class decision thresholds: class `c` is predicted when `p_c >= τ_c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ThresholdSet([f64; NUM_MOVES]);

impl ThresholdSet {
    pub fn new(values: [f64; NUM_MOVES]) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !(**v > 0.0 && **v < 1.0)) {
            return Err(Error::Invalid(format!("threshold {v} outside (0, 1)")));
        }
        Ok(Self(values))
    }

    pub fn uniform(v: f64) -> Result<Self> {
        Self::new([v; NUM_MOVES])
    }

    pub fn get(&self, m: MoveLabel) -> f64 {
        self.0[m.index()]
    }

    pub fn values(&self) -> &[f64; NUM_MOVES] {
        &self.0
    }

    pub fn passes(&self, probs: &[f64; NUM_MOVES]) -> impl Iterator<Item = MoveLabel> + '_ {
        let probs = *probs;
        MoveLabel::ALL.into_iter().filter(move |m| probs[m.index()] >= self.0[m.index()])
    }
}

impl Default for ThresholdSet {
    fn default() -> Self {
        Self([0.5; NUM_MOVES])
    }
}

impl TryFrom<Vec<f64>> for ThresholdSet {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        let arr: [f64; NUM_MOVES] = v
            .try_into()
            .map_err(|v: Vec<f64>| Error::Invalid(format!("expected {NUM_MOVES} thresholds, got {}", v.len())))?;
        Self::new(arr)
    }
}

impl From<ThresholdSet> for Vec<f64> {
    fn from(t: ThresholdSet) -> Self {
        t.0.to_vec()
    }
}

/// Candidate thresholds 0.05, 0.06, ..., 0.95.
pub fn threshold_grid() -> impl Iterator<Item = f64> {
    (5..=95).map(|k| k as f64 / 100.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdTuning {
    pub thresholds: ThresholdSet,
    /// Validation F1 reached by each class at its chosen threshold.
    pub f1: [f64; NUM_MOVES],
    /// Classes without validation positives, left at 0.5.
    pub defaulted: Vec<MoveLabel>,
}

fn f1_at(scores: &[f64], truth: &[bool], tau: f64) -> f64 {
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for (&p, &y) in scores.iter().zip(truth) {
        match (p >= tau, y) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            _ => {}
        }
    }
    if tp == 0 {
        0.0
    } else {
        2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
    }
}

/// Picks, per class, the grid threshold with the best validation F1; the
/// smallest threshold wins ties.
pub fn tune_thresholds(probs: &[[f64; NUM_MOVES]], truth: &[[bool; NUM_MOVES]]) -> Result<ThresholdTuning> {
    tune_thresholds_on(probs, truth, &threshold_grid().collect::<Vec<_>>())
}

/// [`tune_thresholds`] over an explicit ascending grid inside (0, 1).
pub fn tune_thresholds_on(probs: &[[f64; NUM_MOVES]], truth: &[[bool; NUM_MOVES]], grid: &[f64]) -> Result<ThresholdTuning> {
    if grid.is_empty() {
        return Err(Error::Invalid("threshold grid is empty".into()));
    }
    if probs.is_empty() || probs.len() != truth.len() {
        return Err(Error::Invalid(format!(
            "threshold tuning needs matching non-empty inputs ({} predictions, {} targets)",
            probs.len(),
            truth.len()
        )));
    }
    let mut values = [0.5; NUM_MOVES];
    let mut f1 = [0.0; NUM_MOVES];
    let mut defaulted = Vec::new();
    for m in MoveLabel::ALL {
        let c = m.index();
        let scores: Vec<f64> = probs.iter().map(|p| p[c]).collect();
        let ys: Vec<bool> = truth.iter().map(|t| t[c]).collect();
        if !ys.iter().any(|&y| y) {
            log::warn!("no validation positives for {}; threshold left at 0.5", m.name());
            defaulted.push(m);
            continue;
        }
        let mut best = (f64::NEG_INFINITY, 0.5);
        for &tau in grid {
            let score = f1_at(&scores, &ys, tau);
            if score > best.0 {
                best = (score, tau);
            }
        }
        values[c] = best.1;
        f1[c] = best.0;
    }
    Ok(ThresholdTuning {
        thresholds: ThresholdSet::new(values)?,
        f1,
        defaulted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separated_scores_pick_smallest_optimal() {
        let mut probs = Vec::new();
        let mut truth = Vec::new();
        for i in 0..10 {
            let pos = i % 2 == 0;
            probs.push([if pos { 0.9 } else { 0.1 }; NUM_MOVES]);
            truth.push([pos; NUM_MOVES]);
        }
        let t = tune_thresholds(&probs, &truth).unwrap();
        assert_eq!(t.thresholds.values(), &[0.11; NUM_MOVES]);
        assert!(t.defaulted.is_empty());
    }

    #[test]
    fn all_negative_class_defaults() {
        let probs = vec![[0.3; NUM_MOVES]; 4];
        let mut truth = vec![[true; NUM_MOVES]; 4];
        for t in truth.iter_mut() {
            t[MoveLabel::Fleche.index()] = false;
        }
        let t = tune_thresholds(&probs, &truth).unwrap();
        assert_eq!(t.thresholds.get(MoveLabel::Fleche), 0.5);
        assert_eq!(t.defaulted, vec![MoveLabel::Fleche]);
    }

    #[test]
    fn bounds_enforced() {
        assert!(ThresholdSet::uniform(1.0).is_err());
        assert!(ThresholdSet::uniform(0.0).is_err());
        let back: ThresholdSet = serde_json::from_str(&serde_json::to_string(&ThresholdSet::default()).unwrap()).unwrap();
        assert_eq!(back, ThresholdSet::default());
        assert!(serde_json::from_str::<ThresholdSet>("[0.5, 0.5]").is_err());
    }
}
