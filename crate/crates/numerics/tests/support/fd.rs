//! Central finite-difference gradient oracle.
//!
//! Independent of the analytic backward path: it only calls `forward` and
//! perturbs inputs and parameters one entry at a time.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tactloc_numerics::{layers, DiffArray, Mode, Sequential};

pub const STEP: f64 = 1e-5;
pub const REL_TOL: f64 = 1e-4;

/// Relative error with a small absolute floor so that entries whose true
/// gradient is zero compare on absolute scale.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

#[derive(Debug, Clone)]
pub struct GradReport {
    pub label: String,
    pub checked: usize,
    pub max_rel_err: f64,
    pub worst: String,
}

impl GradReport {
    pub fn passes(&self) -> bool {
        self.max_rel_err <= REL_TOL
    }
}

fn weighted_sum(y: &DiffArray<f64>, w: &[f64]) -> f64 {
    y.values().iter().zip(w).map(|(a, b)| a * b).sum()
}

/// Checks d/d(input) and d/d(params) of `Σ r ⊙ net(x)` for a random `r`.
pub fn check_sequential(label: &str, net: &mut Sequential<f64>, input: &DiffArray<f64>, seed: u64) -> GradReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let y = net.forward(input, Mode::Train).expect("forward");
    let r: Vec<f64> = (0..y.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let upstream = DiffArray::from_vec(y.shape(), r.clone()).unwrap();
    net.zero_grads();
    let dx = net.backward(&upstream).expect("backward");
    let analytic_params: Vec<(String, Vec<f64>)> = net
        .params_mut()
        .into_iter()
        .map(|(n, p)| (n, p.grad().unwrap().to_vec()))
        .collect();

    let mut report = GradReport {
        label: label.to_string(),
        checked: 0,
        max_rel_err: 0.0,
        worst: String::new(),
    };
    let note = |report: &mut GradReport, what: String, a: f64, n: f64| {
        report.checked += 1;
        let e = rel_err(a, n);
        if e > report.max_rel_err || report.worst.is_empty() {
            report.max_rel_err = report.max_rel_err.max(e);
            report.worst = format!("{what}: analytic {a:.6e} numeric {n:.6e}");
        }
    };

    let mut x = input.clone();
    for i in 0..x.len() {
        let orig = x.values()[i];
        x.values_mut()[i] = orig + STEP;
        let plus = weighted_sum(&net.forward(&x, Mode::Train).unwrap(), &r);
        x.values_mut()[i] = orig - STEP;
        let minus = weighted_sum(&net.forward(&x, Mode::Train).unwrap(), &r);
        x.values_mut()[i] = orig;
        note(&mut report, format!("input[{i}]"), dx.values()[i], (plus - minus) / (2.0 * STEP));
    }

    for (pi, (name, grad)) in analytic_params.iter().enumerate() {
        for j in 0..grad.len() {
            let orig = net.params_mut()[pi].1.values()[j];
            net.params_mut()[pi].1.values_mut()[j] = orig + STEP;
            let plus = weighted_sum(&net.forward(input, Mode::Train).unwrap(), &r);
            net.params_mut()[pi].1.values_mut()[j] = orig - STEP;
            let minus = weighted_sum(&net.forward(input, Mode::Train).unwrap(), &r);
            net.params_mut()[pi].1.values_mut()[j] = orig;
            note(&mut report, format!("{name}[{j}]"), grad[j], (plus - minus) / (2.0 * STEP));
        }
    }
    report
}

pub fn random_array(shape: &[usize], rng: &mut ChaCha8Rng) -> DiffArray<f64> {
    let n: usize = shape.iter().product();
    // keep values away from relu/maxpool kinks
    let v = (0..n)
        .map(|_| {
            let m: f64 = rng.random_range(0.05..1.0);
            if rng.random_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect();
    DiffArray::from_vec(shape, v).unwrap()
}

/// Builds a randomized case per layer kind and runs the oracle on it.
/// Shapes stay within (4 channels, 8×8).
pub fn layer_suite(cases_per_kind: usize, base_seed: u64) -> Vec<GradReport> {
    use layers::*;
    let mut out = Vec::new();
    for case in 0..cases_per_kind {
        let seed = base_seed + case as u64;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(1..=2);
        let cin = rng.random_range(1..=4);
        let cout = rng.random_range(1..=4);
        let h = rng.random_range(3..=8);
        let w = rng.random_range(3..=8);

        let k = if rng.random_bool(0.5) { 3 } else { 1 };
        let stride = rng.random_range(1..=2);
        let pad = if k == 3 { rng.random_range(0..=1) } else { 0 };
        let mut net = Sequential::new(vec![Conv2d::new(cin, cout, k, stride, pad, &mut rng).into()]);
        let x = random_array(&[n, cin, h, w], &mut rng);
        out.push(check_sequential(&format!("conv2d k{k} s{stride} p{pad} {:?}", x.shape()), &mut net, &x, seed));

        let len = rng.random_range(3..=9);
        let mut net = Sequential::new(vec![Conv1d::new(cin, cout, 3, 1, &mut rng).into()]);
        let x = random_array(&[n, cin, len], &mut rng);
        out.push(check_sequential(&format!("conv1d {:?}", x.shape()), &mut net, &x, seed));

        let (hi, wi) = (rng.random_range(1..=4), rng.random_range(1..=4));
        let mut net = Sequential::new(vec![ConvTranspose2d::new(cin, cout, 2, 2, 0, &mut rng).into()]);
        let x = random_array(&[n, cin, hi, wi], &mut rng);
        out.push(check_sequential(&format!("transposed_conv2d {:?}", x.shape()), &mut net, &x, seed));

        let mut net = Sequential::new(vec![MaxPool2d::new(2).into()]);
        let x = random_array(&[n, cin, h, w], &mut rng);
        out.push(check_sequential(&format!("maxpool2d {:?}", x.shape()), &mut net, &x, seed));

        let mut net = Sequential::new(vec![BatchNorm::new(cin).into()]);
        let x = random_array(&[n + 1, cin, h, w], &mut rng);
        out.push(check_sequential(&format!("batchnorm {:?}", x.shape()), &mut net, &x, seed));

        let mut net = Sequential::new(vec![Relu::new().into()]);
        let x = random_array(&[n, cin, h, w], &mut rng);
        out.push(check_sequential(&format!("relu {:?}", x.shape()), &mut net, &x, seed));

        let mut net = Sequential::new(vec![SoftmaxChannels::new().into()]);
        let x = random_array(&[n, cin + 1, h, w], &mut rng);
        out.push(check_sequential(&format!("softmax_channelwise {:?}", x.shape()), &mut net, &x, seed));

        let mut net = Sequential::new(vec![Reshape::learned(cin * len, &[cout, 2, 2], &mut rng).into()]);
        let x = random_array(&[n, cin, len], &mut rng);
        out.push(check_sequential(&format!("reshape(learned) {:?}", x.shape()), &mut net, &x, seed));

        let mut net = Sequential::new(vec![Reshape::tiled(cin * len, &[cout, 2, 3], &mut rng).into()]);
        let x = random_array(&[n, cin, len], &mut rng);
        out.push(check_sequential(&format!("reshape(tiled) {:?}", x.shape()), &mut net, &x, seed));

        // mixed stack in the shape of an encoder/decoder
        let c2 = rng.random_range(1..=4);
        let mut net = Sequential::new(vec![
            Conv2d::new(cin, c2, 3, 1, 1, &mut rng).into(),
            BatchNorm::new(c2).into(),
            Relu::new().into(),
            MaxPool2d::new(2).into(),
            ConvTranspose2d::new(c2, cout, 2, 2, 0, &mut rng).into(),
            Conv2d::new(cout, 3, 3, 1, 1, &mut rng).into(),
            SoftmaxChannels::new().into(),
        ]);
        let x = random_array(&[2, cin, 4, 4], &mut rng);
        out.push(check_sequential(&format!("stack {:?}", x.shape()), &mut net, &x, seed));
    }
    out
}
