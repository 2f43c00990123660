mod common;

use common::*;

#[test]
fn signals_match_brute_force() {
    let worst = signal_oracle_max_error(11, 1000);
    assert!(worst < 1e-9, "max deviation {worst:e}");
}

#[test]
fn metrics_match_pairwise_and_sweep() {
    let check = metric_oracle_check(12, 1000);
    assert_eq!(check.auc_mismatches, 0);
    assert!(check.max_trapezoid_gap <= 1e-12, "{:e}", check.max_trapezoid_gap);
    assert_eq!(check.tpr_mismatches, 0);
}

#[test]
fn mlp_gradients_match_central_differences() {
    for draw in 0..20 {
        let g = gradient_draw(draw, 1e-5);
        assert!(g.max_rel_error < 1e-4, "draw {draw}: {} params, rel {:e}", g.params, g.max_rel_error);
    }
}

#[test]
fn oracle_auc_hand_example() {
    // members {3, 2}, non-members {2, 1}: pairs (3,2) (3,1) (2,1) win, (2,2) ties
    let scores = [(3.0, true), (2.0, true), (2.0, false), (1.0, false)];
    assert_eq!(oracle_auc(&scores), 3.5 / 4.0);
    assert_eq!(stmia_core::eval::metrics::auc(&scores).unwrap(), 3.5 / 4.0);
}

#[test]
fn srf_oracle_hand_example() {
    // one frame e1 against keyframes e1, e2 and (e1+e2)/sqrt2 at K=2
    let inst = Instance {
        keyframes: vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]],
        all_frames: vec![vec![1.0, 0.0]],
        video: vec![1.0, 0.0],
        generations: vec![vec![vec![1.0, 0.0], vec![1.0, 0.0]]; 2],
        k: 2,
    };
    let want = (1.0 + 0.5f64.sqrt()) / 2.0;
    assert!((oracle_srf(&inst) - want).abs() < 1e-12);
    assert_eq!(oracle_tgs(&inst), 0.0);
}
