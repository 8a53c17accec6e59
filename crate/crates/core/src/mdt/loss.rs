//! Weighted multi-label BCE for moves, softmax cross-entropy for the blade line.

use super::model::{sigmoid, softmax};

/// `-[y·ln σ(z) + (1−y)·ln(1−σ(z))]` without overflow for large |z|.
pub fn bce_with_logits(z: f64, y: f64) -> f64 {
    z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()
}

/// Class-weighted BCE averaged over the labels.
pub fn move_loss(logits: &[f64], targets: &[f64], weights: &[f64]) -> f64 {
    debug_assert!(logits.len() == targets.len() && logits.len() == weights.len());
    let n = logits.len() as f64;
    logits
        .iter()
        .zip(targets)
        .zip(weights)
        .map(|((&z, &y), &w)| w * bce_with_logits(z, y))
        .sum::<f64>()
        / n
}

pub fn move_loss_grad(logits: &[f64], targets: &[f64], weights: &[f64]) -> Vec<f64> {
    let n = logits.len() as f64;
    logits
        .iter()
        .zip(targets)
        .zip(weights)
        .map(|((&z, &y), &w)| w * (sigmoid(z) - y) / n)
        .collect()
}

fn log_sum_exp(z: &[f64]) -> f64 {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// `−ln softmax(z)[class]`.
pub fn blade_loss(logits: &[f64], class: usize) -> f64 {
    log_sum_exp(logits) - logits[class]
}

pub fn blade_loss_grad(logits: &[f64], class: usize) -> Vec<f64> {
    let mut g = softmax(logits);
    g[class] -= 1.0;
    g
}

pub fn combined_loss(move_loss: f64, blade_loss: f64, blade_weight: f64) -> f64 {
    move_loss + blade_weight * blade_loss
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::LN_2;

    #[test]
    fn bce_examples() {
        assert!((move_loss(&[0.0], &[1.0], &[1.0]) - LN_2).abs() < 1e-15);
        assert!(bce_with_logits(800.0, 1.0) < 1e-300);
        assert!(bce_with_logits(-800.0, 0.0) < 1e-300);
        assert!((bce_with_logits(-800.0, 1.0) - 800.0).abs() < 1e-9);
        let z = [0.3, -1.2, 2.0];
        let y = [1.0, 0.0, 1.0];
        let w = [0.5, 2.0, 1.0];
        let w2: Vec<f64> = w.iter().map(|v| v * 2.0).collect();
        assert!((move_loss(&z, &y, &w2) - 2.0 * move_loss(&z, &y, &w)).abs() < 1e-14);
    }

    #[test]
    fn blade_examples() {
        assert!((blade_loss(&[0.0; 5], 2) - 5f64.ln()).abs() < 1e-15);
        assert!(blade_loss(&[0.0, 0.0, 60.0, 0.0, 0.0], 2) < 1e-20);
        let z = [0.2, -0.7, 1.5, 0.0, 3.0];
        let shifted: Vec<f64> = z.iter().map(|v| v + 11.0).collect();
        assert!((blade_loss(&z, 1) - blade_loss(&shifted, 1)).abs() < 1e-12);
    }

    #[test]
    fn combined_examples() {
        assert!((combined_loss(1.0, 1.0, 0.677) - 1.677).abs() < 1e-15);
        assert_eq!(combined_loss(0.3, 0.0, 0.677), 0.3);
        assert_eq!(combined_loss(1.0, 1.0, 1.0), 2.0);
    }

    #[test]
    fn gradients_match_differences() {
        let z = [0.3, -1.2, 2.0, 0.0, -0.4];
        let y = [1.0, 0.0, 1.0, 0.0, 1.0];
        let w = [0.5, 2.0, 1.0, 1.0, 0.7];
        let g = move_loss_grad(&z, &y, &w);
        let gb = blade_loss_grad(&z, 3);
        for i in 0..5 {
            let mut p = z;
            let mut m = z;
            p[i] += 1e-6;
            m[i] -= 1e-6;
            let fd = (move_loss(&p, &y, &w) - move_loss(&m, &y, &w)) / 2e-6;
            assert!((fd - g[i]).abs() < 1e-8);
            let fdb = (blade_loss(&p, 3) - blade_loss(&m, 3)) / 2e-6;
            assert!((fdb - gb[i]).abs() < 1e-8);
        }
    }
}
