//! Move and blade-line recogniser: a compact transformer encoder trained with
//! weighted multi-label BCE plus blade cross-entropy.

pub mod archive;
pub mod augment;
pub mod config;
pub mod data;
pub mod loss;
pub mod model;
pub mod optim;
pub mod train;

pub use config::{AugmentConfig, AugmentMode, ModelConfig, TrainConfig};
pub use model::{forward, forward_train, backward, sinusoidal_pe, ModelWeights, Prediction};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{BladeLine, MoveLabel, MoveSet};
    use data::TrainingExample;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tiny() -> ModelConfig {
        ModelConfig {
            embed_dim: 8,
            layers: 1,
            heads: 2,
            ff_dim: 16,
            ..Default::default()
        }
    }

    fn loss_of(w: &ModelWeights, x: &Array2<f64>, ex: &TrainingExample, cw: &[f64; 12]) -> f64 {
        let p = forward(w, x.view(), &[true; 3]).unwrap();
        train::example_loss(&p, ex, cw, 0.677).0
    }

    #[test]
    fn backward_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut w = ModelWeights::init(&tiny(), &mut rng).unwrap();
        let x = Array2::from_shape_fn((3, 101), |_| rng.random_range(-1.0..1.0));
        let ex = TrainingExample {
            track: 0,
            start: 0,
            end: 2,
            moves: [MoveLabel::Lunge, MoveLabel::Hit].into_iter().collect::<MoveSet>(),
            blade: BladeLine::Six,
        };
        let cw = [1.3, 0.7, 1.0, 1.0, 0.5, 1.5, 1.0, 1.0, 1.0, 1.0, 0.8, 1.2];
        let (pred, cache) = forward_train::<ChaCha8Rng>(&w, x.view(), &[true; 3], None).unwrap();
        let (_, dlogits) = train::example_loss(&pred, &ex, &cw, 0.677);
        let mut g = w.zeros_like();
        backward(&w, &cache, &dlogits, &mut g).unwrap();

        let analytic: Vec<Vec<f64>> = g.tensors().iter().map(|t| t.data.to_vec()).collect();
        let names: Vec<String> = g.tensors().iter().map(|t| t.name.clone()).collect();
        let h = 1e-5;
        for (ti, name) in names.iter().enumerate() {
            let n = analytic[ti].len();
            let mut numeric = vec![0.0; n];
            for (i, slot) in numeric.iter_mut().enumerate() {
                let orig = w.tensors()[ti].data[i];
                w.tensors_mut()[ti].data[i] = orig + h;
                let lp = loss_of(&w, &x, &ex, &cw);
                w.tensors_mut()[ti].data[i] = orig - h;
                let lm = loss_of(&w, &x, &ex, &cw);
                w.tensors_mut()[ti].data[i] = orig;
                *slot = (lp - lm) / (2.0 * h);
            }
            let diff: f64 = numeric.iter().zip(&analytic[ti]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
            // gradients that vanish identically (key biases) are compared on an absolute floor
            let scale = norm(&numeric).max(norm(&analytic[ti])).max(1e-6);
            assert!(diff / scale <= 1e-4, "{name}: relative error {}", diff / scale);
        }
    }

    #[test]
    fn loss_scaling_scales_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let w = ModelWeights::init(&tiny(), &mut rng).unwrap();
        let x = Array2::from_shape_fn((3, 101), |_| rng.random_range(-1.0..1.0));
        let (_, cache) = forward_train::<ChaCha8Rng>(&w, x.view(), &[true; 3], None).unwrap();
        let d: Vec<f64> = (0..17).map(|i| (i as f64 - 8.0) / 10.0).collect();
        let d3: Vec<f64> = d.iter().map(|v| v * 3.0).collect();
        let mut g1 = w.zeros_like();
        let mut g3 = w.zeros_like();
        backward(&w, &cache, &d, &mut g1).unwrap();
        backward(&w, &cache, &d3, &mut g3).unwrap();
        for (a, b) in g1.tensors().iter().zip(g3.tensors().iter()) {
            for (x, y) in a.data.iter().zip(b.data) {
                assert!((3.0 * x - y).abs() <= 1e-12 * (1.0 + y.abs()));
            }
        }
    }
}
