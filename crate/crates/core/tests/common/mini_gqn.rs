//! Miniature GQN on 8×8 inputs for end-to-end gradient checks.

use graspq_core::gqn::{Gqn, GqnConfig, ObsBatch, ViewMode};
use graspq_core::tensornet::{Graph, Mode, ParamSet, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::fd;

pub fn config(view_mode: ViewMode) -> GqnConfig {
    GqnConfig {
        view_mode,
        image_size: 8,
        channels: [2, 3, 3],
        paddings: [2, 2, 1],
        fusion_channels: 2,
        vision_hidden: 4,
        motor_hidden: 4,
        head_hidden: 4,
        ..GqnConfig::default()
    }
}

pub fn random_batch(batch: usize, rng: &mut ChaCha8Rng) -> ObsBatch {
    let mut t = |shape: Vec<usize>| {
        let n = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap()
    };
    ObsBatch {
        overhead: t(vec![batch, 4, 8, 8]),
        wrist: t(vec![batch, 3, 8, 8]),
        motor: t(vec![batch, 5]),
    }
}

fn mean_q(gqn: &Gqn, params: &ParamSet, batch: &ObsBatch, mode: Mode) -> (Graph, graspq_core::tensornet::NodeId) {
    let mut g = Graph::new();
    let q = gqn.forward(&mut g, params, batch, mode).unwrap();
    let m = g.mean(q);
    (g, m)
}

/// Worst relative error between backprop and central differences of the
/// mean Q-value with respect to every trainable parameter.
pub fn max_gradient_error(view_mode: ViewMode, mode: Mode, seed: u64) -> f64 {
    let gqn = Gqn::new(config(view_mode)).unwrap();
    let mut params = gqn.build(seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xA5A5);
    // Zero-initialised offsets park ReLUs exactly on their kink.
    let offsets: Vec<String> = params
        .entries()
        .iter()
        .filter(|e| e.name.ends_with(".bias") || e.name.ends_with(".beta"))
        .map(|e| e.name.clone())
        .collect();
    for name in offsets {
        for v in params.get_mut(&name).unwrap().data_mut() {
            *v = rng.gen_range(-0.3..0.3);
        }
    }
    let batch = random_batch(3, &mut rng);
    let (g, m) = mean_q(&gqn, &params, &batch, mode);
    g.backward(m, &mut params).unwrap();
    fd::max_param_error(&params, |p| {
        let (g, m) = mean_q(&gqn, p, &batch, mode);
        g.value(m).data()[0]
    })
}
