mod support {
    pub mod fd;
}

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::fd::{self, rel_err, REL_TOL, STEP};
use tactloc_numerics::{
    binary_cross_entropy, categorical_cross_entropy, concat_channels, softmax_channelwise, split_channels,
    weighted_categorical_cross_entropy, DiffArray,
};

#[test]
fn every_layer_kind_matches_finite_differences() {
    let reports = fd::layer_suite(3, 100);
    assert!(reports.len() >= 20);
    for r in &reports {
        assert!(r.checked > 0, "{} checked nothing", r.label);
        assert!(r.passes(), "{}: max rel err {:.3e} at {}", r.label, r.max_rel_err, r.worst);
    }
}

#[test]
fn cross_entropy_gradient_through_softmax() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let logits = fd::random_array(&[2, 5, 3, 2], &mut rng);
    let labels: Vec<u8> = (0..12).map(|_| rng.random_range(0..5)).collect();
    let loss_of = |x: &DiffArray<f64>| {
        categorical_cross_entropy(&softmax_channelwise(x).unwrap(), &labels)
            .unwrap()
            .value
    };
    let mut sm = tactloc_numerics::SoftmaxChannels::new();
    let probs = sm.forward(&logits, tactloc_numerics::Mode::Train).unwrap();
    let loss = categorical_cross_entropy(&probs, &labels).unwrap();
    let dx = sm.backward(&loss.grad).unwrap();
    let mut x = logits.clone();
    for i in 0..x.len() {
        let o = x.values()[i];
        x.values_mut()[i] = o + STEP;
        let p = loss_of(&x);
        x.values_mut()[i] = o - STEP;
        let m = loss_of(&x);
        x.values_mut()[i] = o;
        let num = (p - m) / (2.0 * STEP);
        assert!(rel_err(dx.values()[i], num) < REL_TOL, "entry {i}: {} vs {num}", dx.values()[i]);
    }
}

#[test]
fn weighted_cross_entropy_gradient_and_unit_weights() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let probs = softmax_channelwise(&fd::random_array(&[2, 4, 3], &mut rng)).unwrap();
    let labels: Vec<u8> = (0..6).map(|_| rng.random_range(0..4)).collect();
    let weights: Vec<f64> = (0..6).map(|_| rng.random_range(0.1..3.0)).collect();

    let plain = categorical_cross_entropy(&probs, &labels).unwrap();
    let unit = weighted_categorical_cross_entropy(&probs, &labels, &[2.5; 6]).unwrap();
    assert!((plain.value - unit.value).abs() < 1e-12);
    for (a, b) in plain.grad.values().iter().zip(unit.grad.values()) {
        assert!((a - b).abs() < 1e-12);
    }

    let g = weighted_categorical_cross_entropy(&probs, &labels, &weights).unwrap().grad;
    let mut p = probs.clone();
    for i in 0..p.len() {
        let o = p.values()[i];
        p.values_mut()[i] = o + STEP;
        let plus = weighted_categorical_cross_entropy(&p, &labels, &weights).unwrap().value;
        p.values_mut()[i] = o - STEP;
        let minus = weighted_categorical_cross_entropy(&p, &labels, &weights).unwrap().value;
        p.values_mut()[i] = o;
        let num = (plus - minus) / (2.0 * STEP);
        assert!(rel_err(g.values()[i], num) < REL_TOL, "entry {i}: {} vs {num}", g.values()[i]);
    }
    assert!(weighted_categorical_cross_entropy(&probs, &labels, &[0.0; 6]).is_err());
}

#[test]
fn binary_cross_entropy_gradient() {
    let pred = DiffArray::from_vec(&[5], vec![0.1, 0.4, 0.5, 0.8, 0.97]).unwrap();
    let target = [0.0, 1.0, 0.0, 1.0, 0.0];
    let g = binary_cross_entropy(&pred, &target).unwrap().grad;
    for i in 0..5 {
        let mut p = pred.clone();
        p.values_mut()[i] += STEP;
        let plus = binary_cross_entropy(&p, &target).unwrap().value;
        p.values_mut()[i] -= 2.0 * STEP;
        let minus = binary_cross_entropy(&p, &target).unwrap().value;
        let num = (plus - minus) / (2.0 * STEP);
        assert!(rel_err(g.values()[i], num) < REL_TOL);
    }
}

#[test]
fn concat_gradient_is_channel_split() {
    // d/d(a,b) of Σ r ⊙ concat(a, b) is split(r)
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a = fd::random_array(&[2, 3, 2, 2], &mut rng);
    let b = fd::random_array(&[2, 1, 2, 2], &mut rng);
    let r = fd::random_array(&[2, 4, 2, 2], &mut rng);
    let (ga, gb) = split_channels(&r, 3).unwrap();
    let f = |a: &DiffArray<f64>, b: &DiffArray<f64>| -> f64 {
        concat_channels(a, b).unwrap().values().iter().zip(r.values()).map(|(x, y)| x * y).sum()
    };
    let mut a2 = a.clone();
    for i in 0..a.len() {
        a2.values_mut()[i] += STEP;
        let p = f(&a2, &b);
        a2.values_mut()[i] -= 2.0 * STEP;
        let m = f(&a2, &b);
        a2.values_mut()[i] += STEP;
        assert!(rel_err(ga.values()[i], (p - m) / (2.0 * STEP)) < REL_TOL);
    }
    let mut b2 = b.clone();
    for i in 0..b.len() {
        b2.values_mut()[i] += STEP;
        let p = f(&a, &b2);
        b2.values_mut()[i] -= 2.0 * STEP;
        let m = f(&a, &b2);
        b2.values_mut()[i] += STEP;
        assert!(rel_err(gb.values()[i], (p - m) / (2.0 * STEP)) < REL_TOL);
    }
}
