//! Times one training update (online forward/backward on a batch plus the
//! target-network evaluations) and one observation render, for the nominal
//! network and the desk-scale one the harness trains by default.
//!
//! `cargo run --release --example throughput [index]`
use std::time::Instant;

use graspq_core::gqn::{Gqn, GqnConfig, ObsBatch, ViewMode};
use graspq_core::tensornet::{Graph, Mode, Optimizer, Tensor};
use graspq_core::world::{GraspWorld, ObjectKind, WorldConfig};

fn main() {
    let sizes: Vec<(usize, [usize; 3], [usize; 3], usize, usize)> = vec![
        (32, [8, 16, 16], [0, 0, 0], 16, 64),
        (16, [3, 6, 6], [0, 2, 1], 6, 32),
    ];
    let only: Option<usize> = std::env::args().nth(1).and_then(|a| a.parse().ok());
    for (i, (n, ch, pad, fusion, hidden)) in sizes.into_iter().enumerate() {
        if only.is_some_and(|o| o != i) {
            continue;
        }
        let world = GraspWorld::new(WorldConfig { image_size: n, ..Default::default() }).unwrap();
        let gqn = Gqn::new(GqnConfig {
            view_mode: ViewMode::Multi,
            image_size: n,
            channels: ch,
            paddings: pad,
            fusion_channels: fusion,
            vision_hidden: hidden,
            motor_hidden: hidden,
            head_hidden: hidden,
            ..Default::default()
        })
        .unwrap();
        let mut params = gqn.build(0).unwrap();
        let obs: Vec<_> = (0..32).map(|s| world.reset(s, ObjectKind::Cube).1).collect();
        let refs: Vec<_> = obs.iter().collect();
        let batch = ObsBatch::from_observations(&refs).unwrap();
        let reps = 20;
        let t = Instant::now();
        for _ in 0..reps {
            let _ = gqn.q_batch(&params, &refs, Mode::Infer).unwrap();
            let _ = gqn.q_batch(&params, &refs, Mode::Infer).unwrap();
            let mut g = Graph::new();
            let q = gqn.forward(&mut g, &params, &batch, Mode::Train).unwrap();
            let sel = g.gather(q, &[0; 32]).unwrap();
            let loss = g.mse_loss(sel, &Tensor::zeros(&[32])).unwrap();
            g.backward(loss, &mut params).unwrap();
            Optimizer::adam(1e-4).step(&mut params);
        }
        let per = t.elapsed().as_secs_f64() / reps as f64;
        let t = Instant::now();
        for s in 0..200 {
            let _ = world.reset(s, ObjectKind::Cube);
        }
        let render = t.elapsed().as_secs_f64() / 200.0;
        println!(
            "{}: params {} update {:.2} ms, render {:.3} ms",
            gqn.describe(),
            params.param_count(),
            per * 1e3,
            render * 1e3
        );
    }
}
