use tactloc::datagen::collect_transitions;
use tactloc::filter::ActionDir;
use tactloc::seeds;
use tactloc::training::{train_motion_model, HyperParams};

/// Expected kernel for a move in `action` that fails with probability `eps`.
fn generator(action: ActionDir, eps: f64) -> [f64; 9] {
    let mut k = [0.0; 9];
    let (dx, dy) = action.delta();
    k[((dy + 1) * 3 + (dx + 1)) as usize] = 1.0 - eps;
    k[4] = eps;
    k
}

#[test]
fn noisy_motion_kernels_match_generator() {
    let mut rng = seeds::rng(21, &[]);
    let t = collect_transitions(32, 32, 0.1, 1000, 100, &mut rng);
    let start = std::time::Instant::now();
    let out = train_motion_model(&t, 32, 32, &HyperParams::default()).unwrap();
    println!("trained in {:.1}s, losses {:?}", start.elapsed().as_secs_f64(), out.losses);
    for a in ActionDir::ALL {
        let k = out.net.kernel(a);
        println!("{a:?} {:?}", k.weights());
        for (got, want) in k.weights().iter().zip(generator(a, 0.1)) {
            assert!((got - want).abs() <= 0.03, "{a:?}: {:?}", k.weights());
        }
    }
}
