use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdt::loss::{bce_with_logits, blade_loss};
use crate::mdt::Prediction;
use crate::types::{NUM_BLADES, NUM_MOVES};

pub const T_MIN: f64 = 0.05;
pub const T_MAX: f64 = 20.0;
const MAX_ITER: usize = 200;
const TOL: f64 = 1e-7;
const BLADE_SWEEPS: usize = 4;

/// Divisors applied to each logit before the sigmoid / softmax.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemperatureSet {
    pub moves: [f64; NUM_MOVES],
    pub blades: [f64; NUM_BLADES],
}

impl Default for TemperatureSet {
    fn default() -> Self {
        Self {
            moves: [1.0; NUM_MOVES],
            blades: [1.0; NUM_BLADES],
        }
    }
}

impl TemperatureSet {
    pub fn validate(&self) -> Result<()> {
        if self.moves.iter().chain(&self.blades).all(|t| *t > 0.0 && t.is_finite()) {
            Ok(())
        } else {
            Err(Error::Invalid("temperatures must be positive and finite".into()))
        }
    }

    pub fn apply(&self, pred: &Prediction) -> Prediction {
        let mut logits = pred.logits();
        for (z, t) in logits.iter_mut().zip(self.moves.iter().chain(&self.blades)) {
            *z /= t;
        }
        Prediction::from_logits(&logits)
    }
}

/// Golden-section minimisation on `[lo, hi]`; `None` if the bracket has not
/// shrunk below tolerance within the iteration budget.
pub fn golden_section(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> Option<f64> {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..MAX_ITER {
        if (b - a).abs() < TOL {
            return Some(0.5 * (a + b));
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    None
}

/// Mean binary NLL of one move class at temperature `t`.
pub fn move_nll(logits: &[f64], truth: &[bool], t: f64) -> f64 {
    logits
        .iter()
        .zip(truth)
        .map(|(&z, &y)| bce_with_logits(z / t, if y { 1.0 } else { 0.0 }))
        .sum::<f64>()
        / logits.len() as f64
}

fn blade_nll(logits: &[[f64; NUM_BLADES]], classes: &[usize], temps: &[f64; NUM_BLADES]) -> f64 {
    logits
        .iter()
        .zip(classes)
        .map(|(z, &c)| {
            let scaled: Vec<f64> = z.iter().zip(temps).map(|(v, t)| v / t).collect();
            blade_loss(&scaled, c)
        })
        .sum::<f64>()
        / logits.len() as f64
}

/// Fits one temperature per move logit and per blade logit by minimising
/// validation NLL. Blade temperatures interact through the softmax and are
/// fitted by a few coordinate sweeps.
pub fn scale_temperatures(
    logits: &[[f64; NUM_MOVES + NUM_BLADES]],
    move_truth: &[[bool; NUM_MOVES]],
    blade_truth: &[usize],
) -> Result<TemperatureSet> {
    if logits.is_empty() || logits.len() != move_truth.len() || logits.len() != blade_truth.len() {
        return Err(Error::Invalid("temperature scaling needs matching non-empty inputs".into()));
    }
    let mut out = TemperatureSet::default();
    for c in 0..NUM_MOVES {
        let z: Vec<f64> = logits.iter().map(|l| l[c]).collect();
        let y: Vec<bool> = move_truth.iter().map(|t| t[c]).collect();
        out.moves[c] = golden_section(|t| move_nll(&z, &y, t), T_MIN, T_MAX).unwrap_or(1.0);
    }
    let blade_logits: Vec<[f64; NUM_BLADES]> = logits
        .iter()
        .map(|l| {
            let mut b = [0.0; NUM_BLADES];
            b.copy_from_slice(&l[NUM_MOVES..]);
            b
        })
        .collect();
    for _ in 0..BLADE_SWEEPS {
        for k in 0..NUM_BLADES {
            let base = out.blades;
            let f = |t: f64| {
                let mut temps = base;
                temps[k] = t;
                blade_nll(&blade_logits, blade_truth, &temps)
            };
            out.blades[k] = golden_section(f, T_MIN, T_MAX).unwrap_or(1.0);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn golden_section_finds_parabola_minimum() {
        let x = golden_section(|t| (t - 3.3).powi(2), T_MIN, T_MAX).unwrap();
        assert!((x - 3.3).abs() < 1e-6);
    }

    #[test]
    fn calibrated_logits_give_unit_temperature() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 20_000;
        let mut z = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        for _ in 0..n {
            let p: f64 = rng.random_range(0.02..0.98);
            z.push((p / (1.0 - p)).ln());
            y.push(rng.random::<f64>() < p);
        }
        let t = golden_section(|t| move_nll(&z, &y, t), T_MIN, T_MAX).unwrap();
        // oracle: coarse scan of the NLL curve
        let scan = (5..=2000)
            .map(|k| k as f64 / 100.0)
            .min_by(|a, b| move_nll(&z, &y, *a).total_cmp(&move_nll(&z, &y, *b)))
            .unwrap();
        assert!((t - 1.0).abs() < 0.05, "{t}");
        assert!((t - scan).abs() < 0.011);
    }

    #[test]
    fn large_temperature_flattens_probabilities() {
        let mut logits = [0.0; NUM_MOVES + NUM_BLADES];
        logits[0] = 6.0;
        logits[1] = -9.0;
        let temps = TemperatureSet {
            moves: [1e9; NUM_MOVES],
            ..Default::default()
        };
        let p = temps.apply(&Prediction::from_logits(&logits));
        assert!((p.move_probs[0] - 0.5).abs() < 1e-8);
        assert!((p.move_probs[1] - 0.5).abs() < 1e-8);
    }
}
