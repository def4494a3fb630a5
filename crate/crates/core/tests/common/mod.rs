#![allow(dead_code)]

use num_rational::Ratio;
use slicedet::scene::{generate_scene, Scene, SceneParams};

/// AP by enumerating the PR points and integrating the precision envelope
/// in exact rational arithmetic: for every distinct recall level r_k the
/// envelope on (r_{k-1}, r_k] is the best precision among points with
/// recall >= r_k.
pub fn ap_oracle(flags: &[bool], num_gt: usize) -> f64 {
    if num_gt == 0 {
        return 0.0;
    }
    let n = num_gt as i64;
    let mut points: Vec<(Ratio<i64>, Ratio<i64>)> = Vec::new();
    let mut tp = 0i64;
    for (i, &f) in flags.iter().enumerate() {
        if f {
            tp += 1;
        }
        points.push((Ratio::new(tp, n), Ratio::new(tp, i as i64 + 1)));
    }
    let mut levels: Vec<Ratio<i64>> = points.iter().map(|p| p.0).collect();
    levels.push(Ratio::from_integer(0));
    levels.sort();
    levels.dedup();

    let mut area = Ratio::from_integer(0);
    for w in levels.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let best = points
            .iter()
            .filter(|(r, _)| *r >= hi)
            .map(|(_, p)| *p)
            .max()
            .unwrap_or_else(|| Ratio::from_integer(0));
        area += (hi - lo) * best;
    }
    *area.numer() as f64 / *area.denom() as f64
}

pub const LARGE_W: usize = 3826;
pub const LARGE_H: usize = 3473;
pub const LARGE_SEED: u64 = 20_230_612;

/// 60 small objects (8 to 32 px) over 6 classes on the large canvas, 15 of
/// them across overlap strips of the default 640 / 0.2 plan.
pub fn large_scene() -> Scene {
    let params = SceneParams {
        straddling: 15,
        min_side: 8,
        max_side: 32,
        ..SceneParams::new(LARGE_W, LARGE_H, 60)
    };
    generate_scene(LARGE_SEED, &params).expect("scene")
}

/// Smaller scenes for repeated runs.
pub fn medium_scene(seed: u64) -> Scene {
    let params = SceneParams {
        straddling: 6,
        ..SceneParams::new(1700, 1300, 25)
    };
    generate_scene(seed, &params).expect("scene")
}

#[test]
fn ap_oracle_hand_cases() {
    assert_eq!(ap_oracle(&[false, true], 1), 0.5);
    assert_eq!(ap_oracle(&[true, true], 2), 1.0);
    assert_eq!(ap_oracle(&[], 3), 0.0);
    // points (1/2, 1), (1/2, 1/2), (1, 2/3): 1/2 * 1 + 1/2 * 2/3
    assert!((ap_oracle(&[true, false, true], 2) - 5.0 / 6.0).abs() < 1e-15);
}
