mod support {
    pub mod oracles;
}

use support::oracles::{filter_suite, label_suite, matrix_predict, transition_matrix};
use tactloc::filter::{Belief, GridState, MotionKernel};

#[test]
fn predict_matches_transition_matrix() {
    let r = filter_suite(120);
    assert_eq!(r.cases, 120);
    assert!(r.predict_err <= 1e-9, "{r:?}");
    assert!(r.norm_err <= 1e-6, "{r:?}");
    assert!(r.identity_err <= 1e-9, "{r:?}");
}

#[test]
fn edge_loss_is_renormalized_away() {
    // a delta at the east edge pushed east loses its moving mass
    let k = MotionKernel::shift((1, 0), 0.25);
    let b = Belief::delta(8, 8, GridState::new(7, 3)).unwrap();
    let p = b.predict(&k);
    let t = transition_matrix(&k, 8, 8);
    let reference = matrix_predict(&t, b.values());
    assert_eq!(p.at(GridState::new(7, 3)), 1.0);
    assert_eq!(reference[GridState::new(7, 3).index(8)], 1.0);
}

#[test]
fn labels_match_pairwise_distances() {
    let r = label_suite(50);
    assert_eq!(r.scenes, 50);
    assert!(r.degenerate_scenes >= 1);
    assert_eq!(r.class_mismatches, 0, "{r:?}");
    assert!(r.max_scalar_err <= 1e-7, "{r:?}");
}
