//! Per-layer gradient checks against central differences, one seed at a
//! time. Each function returns the worst relative error it saw.

use graspq_core::tensornet::{init_params, Graph, LayerSpec, Mode, NodeId, ParamSet, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::fd;

pub fn random_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// Builds `loss = mse(f(x), target)` and checks parameter and input
/// gradients against the finite-difference oracle.
pub fn check<F>(params: ParamSet, x: Tensor, target: Tensor, f: F) -> f64
where
    F: Fn(&mut Graph, &ParamSet, NodeId) -> NodeId,
{
    let loss_of = |p: &ParamSet, input: &Tensor| {
        let mut g = Graph::new();
        let xi = g.input(input.clone());
        let y = f(&mut g, p, xi);
        let l = g.mse_loss(y, &target).unwrap();
        g.value(l).item().unwrap()
    };
    let mut analytic = params.clone();
    let mut g = Graph::new();
    let xi = g.input(x.clone());
    let y = f(&mut g, &analytic, xi);
    let l = g.mse_loss(y, &target).unwrap();
    let input_grads = g.backward_inputs(l, &mut analytic).unwrap();
    let dx = input_grads.iter().find(|(id, _)| *id == xi).unwrap().1.clone();
    let param_err = fd::max_param_error(&analytic, |p| loss_of(p, &x));
    let input_err = fd::relative_error(dx.data(), &fd::input_gradient(&x, |t| loss_of(&params, t)));
    param_err.max(input_err)
}

pub fn dense(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = init_params(&[("fc", LayerSpec::Dense { inputs: 4, outputs: 2 })], seed).unwrap();
    // non-zero bias so its gradient path is exercised with generic values
    params.get_mut("fc.bias").unwrap().data_mut().copy_from_slice(&[0.3, -0.2]);
    let x = random_tensor(&[3, 4], &mut rng);
    let t = random_tensor(&[3, 2], &mut rng);
    check(params, x, t, |g, p, x| g.dense(p, "fc", x).unwrap())
}

pub fn conv(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
    let params = init_params(
        &[("c", LayerSpec::Conv2d { in_channels: 2, filters: 3, kernel: 3 })],
        seed,
    )
    .unwrap();
    let (stride, pad) = [(1, 0), (2, 1), (1, 1), (2, 0)][seed as usize % 4];
    let x = random_tensor(&[2, 2, 6, 5], &mut rng);
    let out_h = (6 + 2 * pad - 3) / stride + 1;
    let out_w = (5 + 2 * pad - 3) / stride + 1;
    let t = random_tensor(&[2, 3, out_h, out_w], &mut rng);
    check(params, x, t, move |g, p, x| g.conv2d(p, "c", x, stride, pad).unwrap())
}

pub fn maxpool(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
    // distinct values keep every window away from ties
    let mut vals: Vec<f64> = (0..72).map(|i| i as f64 * 0.05).collect();
    for i in (1..vals.len()).rev() {
        let j = rng.gen_range(0..=i);
        vals.swap(i, j);
    }
    let x = Tensor::new(vec![2, 6, 6], vals).unwrap();
    let t = random_tensor(&[2, 3, 3], &mut rng);
    check(ParamSet::new(), x, t, |g, _, x| g.maxpool2d(x, 2, 2).unwrap())
}

/// Train and inference mode.
pub fn batchnorm(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(300 + seed);
    let mut params = init_params(&[("bn", LayerSpec::BatchNorm { channels: 2 })], seed).unwrap();
    params.get_mut("bn.gamma").unwrap().data_mut().copy_from_slice(&[1.5, -0.7]);
    params.get_mut("bn.beta").unwrap().data_mut().copy_from_slice(&[0.2, 0.1]);
    params.get_mut("bn.running_mean").unwrap().data_mut().copy_from_slice(&[0.1, -0.3]);
    params.get_mut("bn.running_var").unwrap().data_mut().copy_from_slice(&[0.5, 2.0]);
    let x = random_tensor(&[3, 2, 2, 2], &mut rng);
    let t = random_tensor(&[3, 2, 2, 2], &mut rng);
    [Mode::Train, Mode::Infer]
        .into_iter()
        .map(|mode| {
            check(params.clone(), x.clone(), t.clone(), move |g, p, x| {
                g.batchnorm(p, "bn", x, mode).unwrap()
            })
        })
        .fold(0.0, f64::max)
}

/// relu, softmax, concat and gather in one graph.
pub fn activations(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(400 + seed);
    // keep relu inputs away from the kink at 0
    let x = Tensor::new(
        vec![2, 6],
        (0..12)
            .map(|_| {
                let v: f64 = rng.gen_range(0.05..1.0);
                if rng.gen_bool(0.5) { v } else { -v }
            })
            .collect(),
    )
    .unwrap();
    let t = random_tensor(&[2], &mut rng);
    check(ParamSet::new(), x, t, |g, _, x| {
        let r = g.relu(x);
        let s = g.softmax(x);
        let c = g.concat(&[r, s], 1).unwrap();
        g.gather(c, &[1, 9]).unwrap()
    })
}

pub fn two_layer(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(500 + seed);
    let params = init_params(
        &[
            ("fc1", LayerSpec::Dense { inputs: 5, outputs: 7 }),
            ("fc2", LayerSpec::Dense { inputs: 7, outputs: 3 }),
        ],
        seed,
    )
    .unwrap();
    let x = random_tensor(&[4, 5], &mut rng);
    let t = random_tensor(&[4, 3], &mut rng);
    check(params, x, t, |g, p, x| {
        let h = g.dense(p, "fc1", x).unwrap();
        let h = g.relu(h);
        g.dense(p, "fc2", h).unwrap()
    })
}

pub const ALL: [(&str, fn(u64) -> f64); 6] = [
    ("dense", dense),
    ("conv2d", conv),
    ("maxpool2d", maxpool),
    ("batchnorm", batchnorm),
    ("relu/softmax/concat/gather", activations),
    ("dense-relu-dense", two_layer),
];
