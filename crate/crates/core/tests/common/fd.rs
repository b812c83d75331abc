//! Central finite-difference oracle. Only evaluates forward losses, so it is
//! independent of the backward implementation it checks.

use graspq_core::tensornet::{ParamSet, Tensor};

pub const STEP: f64 = 1e-5;

/// `‖a − n‖ / max(‖a‖, ‖n‖, 1e-8)`.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n) * (a - n))
        .sum::<f64>()
        .sqrt();
    let na = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nn = numeric.iter().map(|a| a * a).sum::<f64>().sqrt();
    diff / na.max(nn).max(1e-8)
}

/// Central difference of `f` around `x0`, where `f(x0) = base`.
///
/// The one-sided slopes differ by about `f''·h` on smooth stretches, while a
/// ReLU or max-pool kink inside the probe leaves a gap that does not shrink
/// with `h`. Coordinates with a visible gap are re-probed at `h/10`: if the
/// gap shrank tenfold the function is smooth there and that estimate is
/// kept, otherwise `h/10` and `h/100` are compared and the smaller step
/// wins unless both agree.
fn derivative(x0: f64, base: f64, f: &mut dyn FnMut(f64) -> f64) -> f64 {
    let mut probe = |h: f64| {
        let (up, down) = (f(x0 + h), f(x0 - h));
        ((up - down) / (2.0 * h), (up - base) / h - (base - down) / h)
    };
    let (coarse, skew) = probe(STEP);
    if skew.abs() <= 1e-6 * coarse.abs().max(1.0) {
        return coarse;
    }
    let (mid, mid_skew) = probe(STEP / 10.0);
    if (10.0 * mid_skew - skew).abs() <= 0.05 * skew.abs() {
        return mid;
    }
    let (fine, _) = probe(STEP / 100.0);
    if (mid - fine).abs() <= 1e-7 * fine.abs().max(1.0) {
        mid
    } else {
        fine
    }
}

/// Numeric gradient of `loss` with respect to every value of every entry
/// of `params`, one vector per entry.
pub fn param_gradients(params: &ParamSet, loss: impl Fn(&ParamSet) -> f64) -> Vec<Vec<f64>> {
    let mut work = params.clone();
    let base = loss(params);
    let names: Vec<String> = params.entries().iter().map(|e| e.name.clone()).collect();
    names
        .iter()
        .map(|name| {
            let n = params.get(name).unwrap().len();
            (0..n)
                .map(|i| {
                    let orig = work.get(name).unwrap().data()[i];
                    let d = derivative(orig, base, &mut |v| {
                        work.get_mut(name).unwrap().data_mut()[i] = v;
                        loss(&work)
                    });
                    work.get_mut(name).unwrap().data_mut()[i] = orig;
                    d
                })
                .collect()
        })
        .collect()
}

/// Numeric gradient of `loss` with respect to an input tensor.
pub fn input_gradient(x: &Tensor, loss: impl Fn(&Tensor) -> f64) -> Vec<f64> {
    let mut work = x.clone();
    let base = loss(x);
    (0..x.len())
        .map(|i| {
            let orig = x.data()[i];
            let d = derivative(orig, base, &mut |v| {
                work.data_mut()[i] = v;
                loss(&work)
            });
            work.data_mut()[i] = orig;
            d
        })
        .collect()
}

/// Largest per-entry relative error between the gradients stored in
/// `analytic` and the numeric gradients of `loss`, over trainable entries.
///
/// Entries whose true gradient vanishes (a bias feeding a batch norm, say)
/// only carry rounding noise, so each denominator is floored at 1e-4 of the
/// norm of the whole gradient.
pub fn max_param_error(analytic: &ParamSet, loss: impl Fn(&ParamSet) -> f64) -> f64 {
    let numeric = param_gradients(analytic, loss);
    let pairs: Vec<(&[f64], &[f64])> = analytic
        .entries()
        .iter()
        .zip(&numeric)
        .filter(|(e, _)| e.trainable)
        .map(|(e, n)| (e.grad.data(), n.as_slice()))
        .collect();
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let total = pairs
        .iter()
        .map(|(a, n)| norm(a).max(norm(n)).powi(2))
        .sum::<f64>()
        .sqrt();
    let floor = (1e-4 * total).max(1e-8);
    pairs
        .iter()
        .map(|(a, n)| {
            let diff: Vec<f64> = a.iter().zip(n.iter()).map(|(x, y)| x - y).collect();
            norm(&diff) / norm(a).max(norm(n)).max(floor)
        })
        .fold(0.0, f64::max)
}
