use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tactloc_numerics::{softmax_channelwise, BatchNorm, Conv2d, DiffArray, MaxPool2d, Mode, Relu, Sequential};

fn array(shape: &[usize], values: Vec<f64>) -> DiffArray<f64> {
    DiffArray::from_vec(shape, values).unwrap()
}

proptest! {
    #[test]
    fn softmax_sums_to_one_and_ignores_shift(
        c in 1usize..6,
        inner in 1usize..5,
        seed in any::<u64>(),
        shift in -50.0f64..50.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vals: Vec<f64> = (0..c * inner).map(|_| rand::Rng::random_range(&mut rng, -10.0..10.0)).collect();
        let x = array(&[1, c, inner], vals.clone());
        let y = softmax_channelwise(&x).unwrap();
        for i in 0..inner {
            let s: f64 = (0..c).map(|ch| y.values()[ch * inner + i]).sum();
            prop_assert!((s - 1.0).abs() < 1e-6);
        }
        let shifted = array(&[1, c, inner], vals.iter().map(|v| v + shift).collect());
        let y2 = softmax_channelwise(&shifted).unwrap();
        for (a, b) in y.values().iter().zip(y2.values()) {
            prop_assert!((a - b).abs() < 1e-6);
            prop_assert!(*a > 0.0);
        }
    }

    #[test]
    fn maxpool_output_dominates_its_window(seed in any::<u64>(), h in 2usize..9, w in 2usize..9) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vals: Vec<f64> = (0..2 * h * w).map(|_| rand::Rng::random_range(&mut rng, -1.0..1.0)).collect();
        let x = array(&[1, 2, h, w], vals);
        let y = MaxPool2d::new(2).forward(&x, Mode::Eval).unwrap();
        let (oh, ow) = (h / 2, w / 2);
        for c in 0..2 {
            for oy in 0..oh {
                for ox in 0..ow {
                    let m = y.values()[(c * oh + oy) * ow + ox];
                    for dy in 0..2 {
                        for dx in 0..2 {
                            prop_assert!(m >= x.values()[(c * h + 2 * oy + dy) * w + 2 * ox + dx]);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn batchnorm_training_output_is_standardized(seed in any::<u64>(), n in 2usize..5, c in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inner = 9;
        let vals: Vec<f64> = (0..n * c * inner)
            .map(|_| rand::Rng::random_range(&mut rng, -3.0..7.0))
            .collect();
        let x = array(&[n, c, 3, 3], vals);
        // fresh layer: gamma 1, beta 0, so output is the normalized value
        let y = BatchNorm::new(c).forward(&x, Mode::Train).unwrap();
        for ch in 0..c {
            let vals: Vec<f64> = (0..n)
                .flat_map(|b| y.values()[(b * c + ch) * inner..(b * c + ch + 1) * inner].to_vec())
                .collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
            prop_assert!(mean.abs() < 1e-5);
            // eps = 1e-5 inside the square root pulls the variance just below 1
            prop_assert!((var - 1.0).abs() < 1e-4, "var {var}");
        }
    }
}

#[test]
fn identical_seeds_give_bitwise_identical_forward() {
    let build = || {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        Sequential::<f32>::new(vec![
            Conv2d::new(1, 4, 3, 1, 1, &mut rng).into(),
            BatchNorm::new(4).into(),
            Relu::new().into(),
            MaxPool2d::new(2).into(),
        ])
    };
    let x = DiffArray::from_vec(&[2, 1, 8, 8], (0..128).map(|i| (i as f32 * 0.1).sin()).collect()).unwrap();
    let a = build().forward(&x, Mode::Train).unwrap();
    let b = build().forward(&x, Mode::Train).unwrap();
    assert_eq!(
        a.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
        b.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    );
}
